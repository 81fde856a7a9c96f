//! Document information vector: word embeddings weighted by the normalized
//! dot product of each hidden state with the final state, averaged over the
//! two encoder directions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::neural::{check_len, EncoderStates, NeuralError};

/// Denominators smaller than this fall back to uniform weights.
pub const DENOMINATOR_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub forward: Array1<f64>,
    pub backward: Array1<f64>,
    pub averaged: Array1<f64>,
    pub forward_sum: f64,
    pub backward_sum: f64,
}

impl AttentionWeights {
    pub fn forward_fallback(&self) -> bool {
        self.forward_sum.abs() < DENOMINATOR_GUARD
    }

    pub fn backward_fallback(&self) -> bool {
        self.backward_sum.abs() < DENOMINATOR_GUARD
    }
}

/// Normalized dot products against row `last`, and their sum.
fn direction(states: ArrayView2<f64>, last: usize) -> (Array1<f64>, f64) {
    let t = states.nrows();
    let e = states.dot(&states.row(last));
    let sum = e.sum();
    if sum.abs() < DENOMINATOR_GUARD {
        (Array1::from_elem(t, 1.0 / t as f64), sum)
    } else {
        (e / sum, sum)
    }
}

pub fn attention_weights(states: &EncoderStates) -> AttentionWeights {
    let t = states.len();
    assert!(t > 0, "attention over an empty sequence");
    let (forward, forward_sum) = direction(states.forward.view(), t - 1);
    let (backward, backward_sum) = direction(states.backward.view(), 0);
    let averaged = (&forward + &backward) * 0.5;
    AttentionWeights {
        forward,
        backward,
        averaged,
        forward_sum,
        backward_sum,
    }
}

/// `h_d = Σ ā_i x_i`.
pub fn doc_info_vector(weights: &AttentionWeights, embeddings: ArrayView2<f64>) -> Result<Array1<f64>, NeuralError> {
    check_len("document vector weights", embeddings.nrows(), weights.averaged.len())?;
    Ok(embeddings.t().dot(&weights.averaged))
}

fn direction_backward(
    states: ArrayView2<f64>,
    last: usize,
    weights: ArrayView1<f64>,
    sum: f64,
    d_weights: &Array1<f64>,
    d_states: &mut Array2<f64>,
) {
    if sum.abs() < DENOMINATOR_GUARD {
        return;
    }
    let inner = d_weights.dot(&weights);
    let de = d_weights.mapv(|g| (g - inner) / sum);
    let h_last = states.row(last).to_owned();
    for (i, &g) in de.iter().enumerate() {
        d_states.row_mut(i).scaled_add(g, &h_last);
    }
    let pulled = states.t().dot(&de);
    d_states.row_mut(last).scaled_add(1.0, &pulled);
}

/// Gradients w.r.t. the forward and backward state matrices, given the
/// gradient on the document vector.
pub(crate) fn doc_vector_backward(
    states: &EncoderStates,
    weights: &AttentionWeights,
    embeddings: ArrayView2<f64>,
    d_doc: ArrayView1<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let t = states.len();
    let d_avg = embeddings.dot(&d_doc);
    let d_dir = d_avg * 0.5;
    let mut d_fwd = Array2::zeros(states.forward.raw_dim());
    let mut d_bwd = Array2::zeros(states.backward.raw_dim());
    direction_backward(
        states.forward.view(),
        t - 1,
        weights.forward.view(),
        weights.forward_sum,
        &d_dir,
        &mut d_fwd,
    );
    direction_backward(
        states.backward.view(),
        0,
        weights.backward.view(),
        weights.backward_sum,
        &d_dir,
        &mut d_bwd,
    );
    (d_fwd, d_bwd)
}
