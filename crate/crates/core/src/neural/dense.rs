use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use super::{add_outer, check_len, join, sigmoid, xavier_init, NeuralError, Parameters, TensorVisitor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn apply(self, pre: Array1<f64>) -> Array1<f64> {
        match self {
            Activation::None => pre,
            Activation::Tanh => pre.mapv_into(f64::tanh),
            Activation::Sigmoid => pre.mapv_into(sigmoid),
            Activation::Softmax => softmax(pre.view()),
        }
    }

    /// Gradient w.r.t. the pre-activation given the output `y` and `dy`.
    /// Softmax is only ever paired with cross-entropy, handled by the caller.
    pub fn backward(self, y: &Array1<f64>, dy: &Array1<f64>) -> Array1<f64> {
        match self {
            Activation::None => dy.clone(),
            Activation::Tanh => dy * &y.mapv(|v| 1.0 - v * v),
            Activation::Sigmoid => dy * &y.mapv(|v| v * (1.0 - v)),
            Activation::Softmax => {
                let dot = y.dot(dy);
                y * &dy.mapv(|g| g - dot)
            }
        }
    }
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut e = logits.mapv(|v| (v - max).exp());
    let s = e.sum();
    e /= s;
    e
}

pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.mapv(|v| v - lse)
}

/// Affine layer `y = W x + b` with `W` of shape `(d_out, d_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseParams {
    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        DenseParams {
            w: Array2::zeros((d_out, d_in)),
            b: Array1::zeros(d_out),
        }
    }

    pub fn xavier<R: Rng + ?Sized>(d_out: usize, d_in: usize, rng: &mut R) -> Self {
        DenseParams {
            w: xavier_init(d_out, d_in, rng),
            b: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn linear(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&x) + &self.b
    }

    /// Accumulates parameter gradients for `d_pre` (gradient of the
    /// pre-activation) and returns the gradient w.r.t. the input.
    pub fn backward(&self, x: ArrayView1<f64>, d_pre: ArrayView1<f64>, grads: &mut DenseParams) -> Array1<f64> {
        add_outer(grads.w.view_mut(), d_pre, x);
        grads.b += &d_pre;
        self.w.t().dot(&d_pre)
    }
}

pub fn dense(x: ArrayView1<f64>, p: &DenseParams, activation: Activation) -> Result<Array1<f64>, NeuralError> {
    check_len("dense input", p.d_in(), x.len())?;
    check_len("dense bias", p.d_out(), p.b.len())?;
    Ok(activation.apply(p.linear(x)))
}

impl Parameters for DenseParams {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        f(
            &join(prefix, "w"),
            self.w.shape(),
            self.w.as_slice().expect("standard layout"),
        );
        f(
            &join(prefix, "b"),
            self.b.shape(),
            self.b.as_slice().expect("standard layout"),
        );
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "w"), self.w.as_slice_mut().expect("standard layout"));
        f(&join(prefix, "b"), self.b.as_slice_mut().expect("standard layout"));
    }
}
