use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{SvaeError, Variant};
use crate::neural::{concat, DenseParams, EncoderStates};

/// The raw linear head output is read as log-variance and clamped to this
/// range before exponentiation.
pub const LOGVAR_CLAMP: f64 = 20.0;

/// Diagonal Gaussian `q(z|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    /// Unclamped linear output of the variance head.
    pub logvar: Array1<f64>,
}

impl LatentDistribution {
    pub fn from_logvar(mu: Array1<f64>, logvar: Array1<f64>) -> Self {
        let sigma = logvar.mapv(|lv| (0.5 * lv.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).exp());
        LatentDistribution { mu, sigma, logvar }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Builds `h_L = [→h_T ; ←h_T ; h_d]` (the document vector only for SVAE).
pub fn encoder_summary(states: &EncoderStates, doc: Option<ArrayView1<f64>>) -> Array1<f64> {
    match doc {
        Some(d) => concat(&[states.forward_final.view(), states.backward_final.view(), d]),
        None => concat(&[states.forward_final.view(), states.backward_final.view()]),
    }
}

/// Linear latent head: `μ = W_μ h_L + b_μ`, `logvar = W_σ h_L + b_σ`.
pub fn latent_params(
    states: &EncoderStates,
    doc: Option<ArrayView1<f64>>,
    head_mu: &DenseParams,
    head_logvar: &DenseParams,
    variant: Variant,
) -> Result<LatentDistribution, SvaeError> {
    let doc = match variant {
        Variant::Ae => return Err(SvaeError::NoLatentHead),
        Variant::Vae => None,
        Variant::Svae => Some(doc.ok_or(SvaeError::MissingDocVector)?),
    };
    let h_l = encoder_summary(states, doc);
    for head in [head_mu, head_logvar] {
        crate::neural::check_len("latent head input", head.d_in(), h_l.len())?;
    }
    Ok(LatentDistribution::from_logvar(
        head_mu.linear(h_l.view()),
        head_logvar.linear(h_l.view()),
    ))
}

/// KL divergence from `N(μ, σ²)` to the standard normal prior.
pub fn kld(dist: &LatentDistribution) -> f64 {
    let s: f64 = dist
        .mu
        .iter()
        .zip(&dist.sigma)
        .map(|(&m, &s)| m * m + s * s - 1.0 - 2.0 * s.ln())
        .sum();
    (0.5 * s).max(0.0)
}

pub fn draw_noise<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_simple_fn(dim, || rng.sample(StandardNormal))
}

/// Reparameterized draw `z = μ + σ ⊙ ε`.
pub fn sample_latent<R: Rng + ?Sized>(dist: &LatentDistribution, rng: &mut R) -> Array1<f64> {
    let eps = draw_noise(dist.dim(), rng);
    &dist.mu + &(&dist.sigma * &eps)
}

/// Mean of `n` independent draws.
pub fn mean_latent<R: Rng + ?Sized>(dist: &LatentDistribution, n: usize, rng: &mut R) -> Array1<f64> {
    assert!(n >= 1, "mean_latent needs at least one sample");
    let mut acc = Array1::zeros(dist.dim());
    for _ in 0..n {
        acc += &sample_latent(dist, rng);
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(mu: Array1<f64>, sigma: Array1<f64>) -> LatentDistribution {
        let logvar = sigma.mapv(|s| 2.0 * s.ln());
        LatentDistribution { mu, sigma, logvar }
    }

    #[test]
    fn kld_closed_form_values() {
        assert_eq!(kld(&dist(array![0.0, 0.0], array![1.0, 1.0])), 0.0);
        assert!((kld(&dist(array![1.0], array![1.0])) - 0.5).abs() < 1e-12);
        let e = std::f64::consts::E;
        let expect = 0.5 * (e * e - 3.0);
        assert!((kld(&dist(array![0.0], array![e])) - expect).abs() < 1e-12);
        assert!((expect - 2.194528).abs() < 1e-6);
    }

    #[test]
    fn zero_head_is_standard_normal() {
        let states = EncoderStates {
            forward: array![[0.1, 0.2]],
            backward: array![[0.3, 0.4]],
            forward_final: array![0.1, 0.2],
            backward_final: array![0.3, 0.4],
        };
        let head = DenseParams::zeros(3, 4);
        let d = latent_params(&states, None, &head, &head, Variant::Vae).unwrap();
        assert_eq!(d.mu, Array1::<f64>::zeros(3));
        assert_eq!(d.sigma, Array1::<f64>::ones(3));
        assert!(matches!(
            latent_params(&states, None, &head, &head, Variant::Ae),
            Err(SvaeError::NoLatentHead)
        ));
        assert!(latent_params(&states, None, &head, &head, Variant::Svae).is_err());
    }

    #[test]
    fn deterministic_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = dist(array![0.5, -1.0], array![0.0, 0.0]);
        assert_eq!(sample_latent(&d, &mut rng), d.mu);
        assert_eq!(mean_latent(&d, 5, &mut rng), d.mu);

        let clamped = LatentDistribution::from_logvar(array![0.5, -1.0], array![-1e9, -1e9]);
        let z = sample_latent(&clamped, &mut rng);
        for (a, b) in z.iter().zip(&clamped.mu) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn mean_of_one_is_a_single_draw() {
        let d = dist(array![0.5, -1.0, 2.0], array![0.3, 1.2, 0.7]);
        let a = mean_latent(&d, 1, &mut ChaCha8Rng::seed_from_u64(4));
        let b = sample_latent(&d, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn mean_of_five_replays_the_stream() {
        let d = dist(array![0.5, -1.0, 2.0], array![0.3, 1.2, 0.7]);
        let got = mean_latent(&d, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sum = [0.0; 3];
        for _ in 0..5 {
            for (j, s) in sum.iter_mut().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                *s += d.mu[j] + d.sigma[j] * eps;
            }
        }
        for j in 0..3 {
            assert!((got[j] - sum[j] / 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn monte_carlo_mean() {
        let d = dist(array![0.5, -1.0, 2.0], array![0.3, 1.2, 0.7]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = mean_latent(&d, 10_000, &mut rng);
        for j in 0..3 {
            assert!((m[j] - d.mu[j]).abs() < 4.0 * d.sigma[j] / 100.0);
        }
    }
}
