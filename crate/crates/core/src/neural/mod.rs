//! Small double-precision numeric backbone with hand-written gradients.
//!
//! Everything learnable implements [`Parameters`], which exposes the raw
//! tensors in a fixed order. The optimizer, gradient clipping, checkpointing
//! and the finite-difference checker all work through that one visitor.

mod adam;
mod dense;
mod gradcheck;
mod gru;
mod init;

pub use adam::{adam_step, AdamState};
pub use dense::{dense, log_softmax, softmax, Activation, DenseParams};
pub use gradcheck::{grad_check, GradCheckReport};
pub use gru::{encode_bidirectional, gru_step, EncoderCache, EncoderStates, GruCache, GruParams};
pub(crate) use gru::{encode_with_cache, encoder_backward};
pub use init::{dropout, dropout_mask, xavier_bound, xavier_init};

use ndarray::{Array1, ArrayView1, ArrayViewMut2, Zip};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty input sequence")]
    EmptySequence,
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), NeuralError> {
    if expected == got {
        Ok(())
    } else {
        Err(NeuralError::ShapeMismatch { what, expected, got })
    }
}

/// Callback receiving a tensor name, its shape and its values.
pub type TensorVisitor<'a> = dyn FnMut(&str, &[usize], &[f64]) + 'a;

/// Visitor over named parameter tensors in a fixed traversal order.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>);
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, data| n += data.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, _, data| out.extend_from_slice(data));
        out
    }

    /// Overwrites all tensors from a flat vector in traversal order.
    fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut("", &mut |_, data| {
            data.copy_from_slice(&flat[offset..offset + data.len()]);
            offset += data.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, data| data.fill(value));
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut offset = 0;
        self.visit_mut("", &mut |_, data| {
            for (d, o) in data.iter_mut().zip(&flat[offset..]) {
                *d += scale * o;
            }
            offset += data.len();
        });
    }

    fn scale(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, data| data.iter_mut().for_each(|d| *d *= factor));
    }

    fn sq_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit("", &mut |_, _, data| s += data.iter().map(|x| x * x).sum::<f64>());
        s
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, _, data| ok &= data.iter().all(|x| x.is_finite()));
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Rescales `grads` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.sq_norm().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// `m += a bᵀ`
pub(crate) fn add_outer(mut m: ArrayViewMut2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    Zip::from(m.rows_mut()).and(&a).for_each(|mut row, &ai| {
        if ai != 0.0 {
            row.scaled_add(ai, &b);
        }
    });
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn concat(parts: &[ArrayView1<f64>]) -> Array1<f64> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Array1::zeros(n);
    let mut offset = 0;
    for p in parts {
        out.slice_mut(ndarray::s![offset..offset + p.len()]).assign(p);
        offset += p.len();
    }
    out
}
