use super::{check_len, NeuralError, Parameters};

/// First/second moment accumulators for Adam over a flattened parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_params<P: Parameters>(params: &P, lr: f64) -> Self {
        Self::new(params.num_params(), lr)
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState) -> Result<(), NeuralError> {
    let g = grads.flatten();
    check_len("adam gradients", state.m.len(), g.len())?;
    check_len("adam parameters", state.m.len(), params.num_params())?;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let AdamState {
        m,
        v,
        lr,
        beta1,
        beta2,
        eps,
        ..
    } = state;
    for ((mi, vi), &gi) in m.iter_mut().zip(v.iter_mut()).zip(&g) {
        *mi = *beta1 * *mi + (1.0 - *beta1) * gi;
        *vi = *beta2 * *vi + (1.0 - *beta2) * gi * gi;
    }
    let mut offset = 0;
    params.visit_mut("", &mut |_, data| {
        for (k, p) in data.iter_mut().enumerate() {
            let i = offset + k;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= *lr * m_hat / (v_hat.sqrt() + *eps);
        }
        offset += data.len();
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DenseParams;
    use ndarray::array;

    fn params() -> DenseParams {
        DenseParams {
            w: array![[0.5, -1.0], [2.0, 0.25]],
            b: array![0.1, -0.2],
        }
    }

    fn grads(values: [f64; 6]) -> DenseParams {
        DenseParams {
            w: array![[values[0], values[1]], [values[2], values[3]]],
            b: array![values[4], values[5]],
        }
    }

    #[test]
    fn zero_gradient_is_no_op() {
        let mut p = params();
        let mut st = AdamState::for_params(&p, 0.001);
        adam_step(&mut p, &grads([0.0; 6]), &mut st).unwrap();
        assert_eq!(p, params());
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_is_sign_times_lr() {
        let g = [0.3, -2.0, 1e-3, 5.0, -0.7, 0.01];
        let mut p = params();
        let mut st = AdamState::for_params(&p, 0.01);
        adam_step(&mut p, &grads(g), &mut st).unwrap();
        let before = params().flatten();
        for ((a, b), gi) in p.flatten().iter().zip(&before).zip(g) {
            let expect = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((a - b - expect).abs() < 1e-15);
        }
    }

    /// Independent scalar re-implementation.
    fn scalar_adam(mut theta: f64, g: f64, steps: u32, lr: f64) -> f64 {
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=steps {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            theta -= lr * mh / (vh.sqrt() + 1e-8);
        }
        theta
    }

    #[test]
    fn two_steps_match_scalar_oracle() {
        let g = [0.3, -2.0, 1e-3, 5.0, -0.7, 0.01];
        let mut p = params();
        let mut st = AdamState::for_params(&p, 0.001);
        adam_step(&mut p, &grads(g), &mut st).unwrap();
        adam_step(&mut p, &grads(g), &mut st).unwrap();
        for ((a, b), gi) in p.flatten().iter().zip(params().flatten()).zip(g) {
            assert!((a - scalar_adam(b, gi, 2, 0.001)).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_flip_gives_same_magnitude() {
        let g = [0.3, -2.0, 1e-3, 5.0, -0.7, 0.01];
        let neg = g.map(|x| -x);
        let (mut a, mut b) = (params(), params());
        let mut sa = AdamState::for_params(&a, 0.001);
        let mut sb = AdamState::for_params(&b, 0.001);
        adam_step(&mut a, &grads(g), &mut sa).unwrap();
        adam_step(&mut b, &grads(neg), &mut sb).unwrap();
        let base = params().flatten();
        for ((x, y), z) in a.flatten().iter().zip(b.flatten()).zip(base) {
            // the update itself is sign-symmetric; only the final add rounds
            assert!(((x - z).abs() - (y - z).abs()).abs() <= 4.0 * f64::EPSILON * z.abs().max(1.0));
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = params();
        let mut st = AdamState::new(3, 0.001);
        assert!(adam_step(&mut p, &grads([0.0; 6]), &mut st).is_err());
    }
}
