use ndarray::{Array1, Array2};
use rand::Rng;

pub fn xavier_bound(fan_out: usize, fan_in: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform matrix of shape `(fan_out, fan_in)`.
pub fn xavier_init<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    assert!(fan_out > 0 && fan_in > 0, "xavier_init needs positive dims");
    let bound = xavier_bound(fan_out, fan_in);
    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound))
}

/// Inverted-dropout multiplier: each entry is 0 with probability `rate`,
/// otherwise `1/(1-rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Array1<f64> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if rate == 0.0 {
        return Array1::ones(len);
    }
    let keep = 1.0 / (1.0 - rate);
    Array1::from_shape_simple_fn(len, || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

pub fn dropout<R: Rng + ?Sized>(x: &Array1<f64>, rate: f64, rng: &mut R, training: bool) -> Array1<f64> {
    if !training || rate == 0.0 {
        return x.clone();
    }
    x * &dropout_mask(x.len(), rate, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_entries_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = xavier_init(300, 700, &mut rng);
        let bound = (6.0f64 / 1000.0).sqrt();
        assert_eq!(m.dim(), (300, 700));
        assert!(m.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn xavier_is_deterministic() {
        let a = xavier_init(4, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = xavier_init(4, 5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn xavier_mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = xavier_init(300, 700, &mut rng);
        let n = m.len() as f64;
        let bound = xavier_bound(300, 700);
        // std of a U(-b, b) mean over N draws is b/sqrt(3N)
        let tol = 3.0 * bound / (3.0 * n).sqrt();
        assert!(m.mean().unwrap().abs() < tol);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array1::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, &mut rng, true), x);
        assert_eq!(dropout(&x, 0.3, &mut rng, false), x);
    }

    #[test]
    fn dropout_zero_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array1::ones(100_000);
        let y = dropout(&x, 0.3, &mut rng, true);
        let zeros = y.iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((zeros - 0.3).abs() < 0.01, "zero fraction {zeros}");
        let survivors: Vec<f64> = y.iter().copied().filter(|&v| v != 0.0).collect();
        assert!(survivors.iter().all(|&v| (v - 1.0 / 0.7).abs() < 1e-12));
    }
}
