//! GRU cell and the bidirectional encoder sweep.
//!
//! Cell convention:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! ĥ  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ ĥ
//! ```

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use super::{add_outer, check_len, join, sigmoid, xavier_init, NeuralError, Parameters, TensorVisitor};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_z: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_h: Array1<f64>,
}

impl GruParams {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        GruParams {
            w_z: Array2::zeros((d_h, d_in)),
            w_r: Array2::zeros((d_h, d_in)),
            w_h: Array2::zeros((d_h, d_in)),
            u_z: Array2::zeros((d_h, d_h)),
            u_r: Array2::zeros((d_h, d_h)),
            u_h: Array2::zeros((d_h, d_h)),
            b_z: Array1::zeros(d_h),
            b_r: Array1::zeros(d_h),
            b_h: Array1::zeros(d_h),
        }
    }

    pub fn xavier<R: Rng + ?Sized>(d_in: usize, d_h: usize, rng: &mut R) -> Self {
        GruParams {
            w_z: xavier_init(d_h, d_in, rng),
            w_r: xavier_init(d_h, d_in, rng),
            w_h: xavier_init(d_h, d_in, rng),
            u_z: xavier_init(d_h, d_h, rng),
            u_r: xavier_init(d_h, d_h, rng),
            u_h: xavier_init(d_h, d_h, rng),
            b_z: Array1::zeros(d_h),
            b_r: Array1::zeros(d_h),
            b_h: Array1::zeros(d_h),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn d_h(&self) -> usize {
        self.w_z.nrows()
    }

    /// One step, keeping the intermediates needed by [`GruParams::backward`].
    pub fn forward(&self, x: ArrayView1<f64>, h: ArrayView1<f64>) -> GruCache {
        let z = (self.w_z.dot(&x) + self.u_z.dot(&h) + &self.b_z).mapv_into(sigmoid);
        let r = (self.w_r.dot(&x) + self.u_r.dot(&h) + &self.b_r).mapv_into(sigmoid);
        let rh = &r * &h;
        let cand = (self.w_h.dot(&x) + self.u_h.dot(&rh) + &self.b_h).mapv_into(f64::tanh);
        let mut out = Array1::zeros(h.len());
        ndarray::Zip::from(&mut out)
            .and(&h)
            .and(&z)
            .and(&cand)
            .for_each(|o, &hv, &zv, &cv| *o = (1.0 - zv) * hv + zv * cv);
        GruCache {
            x: x.to_owned(),
            h_prev: h.to_owned(),
            z,
            r,
            rh,
            cand,
            h: out,
        }
    }

    /// Back-propagates `dh` (gradient w.r.t. the step output) through one
    /// step. Parameter gradients accumulate into `grads`; returns the
    /// gradients w.r.t. the input and the previous state.
    pub fn backward(&self, c: &GruCache, dh: ArrayView1<f64>, grads: &mut GruParams) -> (Array1<f64>, Array1<f64>) {
        let d_cand_pre = ndarray::Zip::from(&dh)
            .and(&c.z)
            .and(&c.cand)
            .map_collect(|&g, &z, &cv| g * z * (1.0 - cv * cv));
        let d_z_pre = ndarray::Zip::from(&dh)
            .and(&c.z)
            .and(&c.cand)
            .and(&c.h_prev)
            .map_collect(|&g, &z, &cv, &hp| g * (cv - hp) * z * (1.0 - z));
        let mut dh_prev = ndarray::Zip::from(&dh).and(&c.z).map_collect(|&g, &z| g * (1.0 - z));

        add_outer(grads.w_h.view_mut(), d_cand_pre.view(), c.x.view());
        add_outer(grads.u_h.view_mut(), d_cand_pre.view(), c.rh.view());
        grads.b_h += &d_cand_pre;
        let d_rh = self.u_h.t().dot(&d_cand_pre);
        let d_r_pre = ndarray::Zip::from(&d_rh)
            .and(&c.h_prev)
            .and(&c.r)
            .map_collect(|&g, &hp, &r| g * hp * r * (1.0 - r));
        dh_prev += &(&d_rh * &c.r);

        add_outer(grads.w_z.view_mut(), d_z_pre.view(), c.x.view());
        add_outer(grads.u_z.view_mut(), d_z_pre.view(), c.h_prev.view());
        grads.b_z += &d_z_pre;
        add_outer(grads.w_r.view_mut(), d_r_pre.view(), c.x.view());
        add_outer(grads.u_r.view_mut(), d_r_pre.view(), c.h_prev.view());
        grads.b_r += &d_r_pre;

        dh_prev += &self.u_z.t().dot(&d_z_pre);
        dh_prev += &self.u_r.t().dot(&d_r_pre);
        let mut dx = self.w_h.t().dot(&d_cand_pre);
        dx += &self.w_z.t().dot(&d_z_pre);
        dx += &self.w_r.t().dot(&d_r_pre);
        (dx, dh_prev)
    }
}

impl Parameters for GruParams {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        for (name, m) in [
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
        ] {
            f(&join(prefix, name), m.shape(), m.as_slice().expect("standard layout"));
        }
        for (name, v) in [("b_z", &self.b_z), ("b_r", &self.b_r), ("b_h", &self.b_h)] {
            f(&join(prefix, name), v.shape(), v.as_slice().expect("standard layout"));
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (name, m) in [
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
        ] {
            f(&join(prefix, name), m.as_slice_mut().expect("standard layout"));
        }
        for (name, v) in [("b_z", &mut self.b_z), ("b_r", &mut self.b_r), ("b_h", &mut self.b_h)] {
            f(&join(prefix, name), v.as_slice_mut().expect("standard layout"));
        }
    }
}

/// Intermediates of one GRU step.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub z: Array1<f64>,
    pub r: Array1<f64>,
    pub rh: Array1<f64>,
    pub cand: Array1<f64>,
    pub h: Array1<f64>,
}

pub fn gru_step(x: ArrayView1<f64>, h: ArrayView1<f64>, p: &GruParams) -> Result<Array1<f64>, NeuralError> {
    check_len("gru input", p.d_in(), x.len())?;
    check_len("gru state", p.d_h(), h.len())?;
    Ok(p.forward(x, h).h)
}

/// Hidden states of both encoder directions.
///
/// Rows are indexed by word position in both matrices: `backward[i]` is the
/// right-to-left state after reading word `i`. The backward sweep ends at
/// position 0, so `backward_final == backward[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    pub forward: Array2<f64>,
    pub backward: Array2<f64>,
    pub forward_final: Array1<f64>,
    pub backward_final: Array1<f64>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.forward.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.nrows() == 0
    }
}

/// Per-step caches of both sweeps, in sweep order.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub forward: Vec<GruCache>,
    /// `backward[k]` is the step that read position `T - 1 - k`.
    pub backward: Vec<GruCache>,
}

fn masked_input(seq: ArrayView2<f64>, mask: Option<&[bool]>) -> Result<Array2<f64>, NeuralError> {
    let mut x = seq.to_owned();
    if let Some(mask) = mask {
        check_len("zero mask", seq.nrows(), mask.len())?;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                x.row_mut(i).fill(0.0);
            }
        }
    }
    Ok(x)
}

/// Runs both sweeps from zero initial states. Masked positions are replaced
/// by the zero vector before either sweep sees them.
pub fn encode_bidirectional(
    seq: ArrayView2<f64>,
    mask: Option<&[bool]>,
    fwd: &GruParams,
    bwd: &GruParams,
) -> Result<EncoderStates, NeuralError> {
    encode_with_cache(seq, mask, fwd, bwd).map(|(s, _)| s)
}

pub(crate) fn encode_with_cache(
    seq: ArrayView2<f64>,
    mask: Option<&[bool]>,
    fwd: &GruParams,
    bwd: &GruParams,
) -> Result<(EncoderStates, EncoderCache), NeuralError> {
    let t = seq.nrows();
    if t == 0 {
        return Err(NeuralError::EmptySequence);
    }
    check_len("forward encoder input", fwd.d_in(), seq.ncols())?;
    check_len("backward encoder input", bwd.d_in(), seq.ncols())?;
    let x = masked_input(seq, mask)?;

    let mut forward = Array2::zeros((t, fwd.d_h()));
    let mut fcache = Vec::with_capacity(t);
    let mut h = Array1::zeros(fwd.d_h());
    for i in 0..t {
        let c = fwd.forward(x.row(i), h.view());
        forward.row_mut(i).assign(&c.h);
        h = c.h.clone();
        fcache.push(c);
    }

    let mut backward = Array2::zeros((t, bwd.d_h()));
    let mut bcache = Vec::with_capacity(t);
    let mut h = Array1::zeros(bwd.d_h());
    for i in (0..t).rev() {
        let c = bwd.forward(x.row(i), h.view());
        backward.row_mut(i).assign(&c.h);
        h = c.h.clone();
        bcache.push(c);
    }

    let states = EncoderStates {
        forward_final: forward.row(t - 1).to_owned(),
        backward_final: backward.row(0).to_owned(),
        forward,
        backward,
    };
    Ok((
        states,
        EncoderCache {
            forward: fcache,
            backward: bcache,
        },
    ))
}

/// Back-propagation through time for both sweeps. `d_forward[i]` and
/// `d_backward[i]` are external gradients on the state at position `i`.
pub(crate) fn encoder_backward(
    fwd: &GruParams,
    bwd: &GruParams,
    cache: &EncoderCache,
    d_forward: &Array2<f64>,
    d_backward: &Array2<f64>,
    g_fwd: &mut GruParams,
    g_bwd: &mut GruParams,
) {
    let t = cache.forward.len();
    let mut carry = Array1::zeros(fwd.d_h());
    for i in (0..t).rev() {
        let dh = &carry + &d_forward.row(i);
        let (_, dprev) = fwd.backward(&cache.forward[i], dh.view(), g_fwd);
        carry = dprev;
    }
    let mut carry = Array1::zeros(bwd.d_h());
    for k in (0..t).rev() {
        let pos = t - 1 - k;
        let dh = &carry + &d_backward.row(pos);
        let (_, dprev) = bwd.backward(&cache.backward[k], dh.view(), g_bwd);
        carry = dprev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_gru(d_in: usize, d_h: usize, rng: &mut ChaCha8Rng) -> GruParams {
        let mut p = GruParams::xavier(d_in, d_h, rng);
        p.b_z = Array1::from_shape_simple_fn(d_h, || rng.random_range(-0.5..0.5));
        p.b_r = Array1::from_shape_simple_fn(d_h, || rng.random_range(-0.5..0.5));
        p.b_h = Array1::from_shape_simple_fn(d_h, || rng.random_range(-0.5..0.5));
        p
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(3, 4);
        let x = array![1.0, -2.0, 0.5];
        let h = array![0.2, -0.4, 0.9, -0.1];
        let out = gru_step(x.view(), h.view(), &p).unwrap();
        assert_eq!(out, &h * 0.5);
    }

    #[test]
    fn zero_input_zero_state_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GruParams::xavier(3, 4, &mut rng);
        let out = gru_step(Array1::zeros(3).view(), Array1::zeros(4).view(), &p).unwrap();
        assert_eq!(out, Array1::<f64>::zeros(4));
    }

    #[test]
    fn output_stays_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = random_gru(5, 6, &mut rng);
            let x = Array1::from_shape_simple_fn(5, || rng.random_range(-5.0..5.0));
            let h = Array1::from_shape_simple_fn(6, || rng.random_range(-0.999..0.999));
            let c = p.forward(x.view(), h.view());
            for i in 0..6 {
                assert!(c.h[i].abs() < 1.0);
                let lo = h[i].min(c.cand[i]);
                let hi = h[i].max(c.cand[i]);
                assert!(c.h[i] >= lo - 1e-15 && c.h[i] <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = GruParams::zeros(3, 4);
        assert!(gru_step(Array1::zeros(2).view(), Array1::zeros(4).view(), &p).is_err());
        assert!(gru_step(Array1::zeros(3).view(), Array1::zeros(5).view(), &p).is_err());
    }

    #[test]
    fn step_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let p = random_gru(4, 3, &mut rng);
            let x = Array1::from_shape_simple_fn(4, || rng.random_range(-1.0..1.0));
            let h = Array1::from_shape_simple_fn(3, || rng.random_range(-0.9..0.9));
            let w = Array1::from_shape_simple_fn(3, || rng.random_range(-1.0..1.0));
            let loss = |p: &GruParams| p.forward(x.view(), h.view()).h.dot(&w);
            let c = p.forward(x.view(), h.view());
            let mut g = GruParams::zeros(4, 3);
            let (dx, dh) = p.backward(&c, w.view(), &mut g);
            let report = grad_check(loss, &p, &g, 1e-5);
            assert!(report.max_rel_error < 1e-4, "{report:?}");

            // input and state gradients by central differences
            for (grad, which) in [(dx, 0), (dh, 1)] {
                for i in 0..grad.len() {
                    let eval = |delta: f64| {
                        let (mut xx, mut hh) = (x.clone(), h.clone());
                        if which == 0 {
                            xx[i] += delta;
                        } else {
                            hh[i] += delta;
                        }
                        p.forward(xx.view(), hh.view()).h.dot(&w)
                    };
                    let num = (eval(1e-5) - eval(-1e-5)) / 2e-5;
                    assert!((num - grad[i]).abs() < 1e-8, "{which} {i}: {num} vs {}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn single_step_encoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fwd = random_gru(3, 4, &mut rng);
        let bwd = random_gru(3, 4, &mut rng);
        let seq = Array2::from_shape_simple_fn((1, 3), || rng.random_range(-1.0..1.0));
        let s = encode_bidirectional(seq.view(), None, &fwd, &bwd).unwrap();
        let expect = gru_step(seq.row(0), Array1::zeros(4).view(), &fwd).unwrap();
        assert_eq!(s.forward_final, expect);
        assert_eq!(s.forward.row(0), expect);
        assert_eq!(s.backward_final, s.backward.row(0));
    }

    #[test]
    fn reversal_swaps_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fwd = random_gru(3, 4, &mut rng);
        let bwd = random_gru(3, 4, &mut rng);
        let seq = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0));
        let rev = seq.slice(ndarray::s![..;-1, ..]).to_owned();
        let a = encode_bidirectional(seq.view(), None, &fwd, &bwd).unwrap();
        let b = encode_bidirectional(rev.view(), None, &bwd, &fwd).unwrap();
        for i in 0..5 {
            assert_eq!(a.backward.row(i), b.forward.row(4 - i));
            assert_eq!(a.forward.row(i), b.backward.row(4 - i));
        }
        assert_eq!(a.backward_final, b.forward_final);
    }

    #[test]
    fn mask_equals_explicit_zero_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fwd = random_gru(3, 4, &mut rng);
        let bwd = random_gru(3, 4, &mut rng);
        let seq = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let mask = [false, false, true, false];
        let a = encode_bidirectional(seq.view(), Some(&mask), &fwd, &bwd).unwrap();
        let mut zeroed = seq.clone();
        zeroed.row_mut(2).fill(0.0);
        let b = encode_bidirectional(zeroed.view(), None, &fwd, &bwd).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sequence_rejected() {
        let p = GruParams::zeros(3, 4);
        let seq = Array2::<f64>::zeros((0, 3));
        assert_eq!(
            encode_bidirectional(seq.view(), None, &p, &p).unwrap_err(),
            NeuralError::EmptySequence
        );
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fwd = random_gru(3, 4, &mut rng);
        let bwd = random_gru(3, 4, &mut rng);
        let seq = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let wf = Array2::from_shape_simple_fn((4, 4), || rng.random_range(-1.0..1.0));
        let wb = Array2::from_shape_simple_fn((4, 4), || rng.random_range(-1.0..1.0));

        #[derive(Clone)]
        struct Pair(GruParams, GruParams);
        impl Parameters for Pair {
            fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
                self.0.visit(&join(prefix, "f"), f);
                self.1.visit(&join(prefix, "b"), f);
            }
            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
                self.0.visit_mut(&join(prefix, "f"), f);
                self.1.visit_mut(&join(prefix, "b"), f);
            }
        }
        let loss = |p: &Pair| {
            let s = encode_bidirectional(seq.view(), None, &p.0, &p.1).unwrap();
            (&s.forward * &wf).sum() + (&s.backward * &wb).sum()
        };
        let (_, cache) = encode_with_cache(seq.view(), None, &fwd, &bwd).unwrap();
        let mut g = Pair(GruParams::zeros(3, 4), GruParams::zeros(3, 4));
        encoder_backward(&fwd, &bwd, &cache, &wf, &wb, &mut g.0, &mut g.1);
        let report = grad_check(loss, &Pair(fwd, bwd), &g, 1e-5);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
