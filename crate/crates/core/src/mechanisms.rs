//! Noise and selection primitives.
//!
//! Every sampler takes a [`NoiseConfig`]. With `zero_noise` set, Laplace and
//! Gaussian draws return 0, selection returns the lowest-index argmax and
//! randomized response keeps the label. That mode exists for oracle tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub zero_noise: bool,
}

impl NoiseConfig {
    pub const NOISY: NoiseConfig = NoiseConfig { zero_noise: false };
    pub const ZERO: NoiseConfig = NoiseConfig { zero_noise: true };
}

/// Inverse Laplace CDF at `u ∈ (0, 1)`.
pub fn laplace_from_uniform(b: f64, u: f64) -> f64 {
    let c = u - 0.5;
    if c == 0.0 {
        return 0.0;
    }
    -b * c.signum() * (-2.0 * c.abs()).ln_1p()
}

pub fn laplace_sample(b: f64, cfg: NoiseConfig, r: &mut RngStream) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::param(format!("Laplace scale must be positive, got {b}")));
    }
    if cfg.zero_noise {
        return Ok(0.0);
    }
    Ok(laplace_from_uniform(b, r.open_uniform()))
}

pub fn gaussian_sample(sigma: f64, cfg: NoiseConfig, r: &mut RngStream) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("Gaussian sigma must be positive, got {sigma}")));
    }
    if cfg.zero_noise {
        return Ok(0.0);
    }
    Ok(sigma * r.standard_normal())
}

/// Samples `i` with probability ∝ `exp(t · scores[i])`.
pub fn exponential_select(scores: &[f64], t: f64, cfg: NoiseConfig, r: &mut RngStream) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::param("exponential mechanism needs at least one candidate"));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::param(format!("non-finite score {bad}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::param(format!("exponent scale must be positive, got {t}")));
    }
    let (argmax, max) = scores
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best });
    if cfg.zero_noise {
        return Ok(argmax);
    }
    let weights: Vec<f64> = scores.iter().map(|s| (t * (s - max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = r.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return Ok(i);
        }
        target -= w;
    }
    // Rounding can leave a sliver past the last bucket.
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(argmax))
}

/// Keeps `label` with probability `e^ε / (e^ε + 1)`.
pub fn randomized_response(label: i8, epsilon: f64, cfg: NoiseConfig, r: &mut RngStream) -> Result<i8> {
    if label != 1 && label != -1 {
        return Err(Error::param(format!("label must be -1 or +1, got {label}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::param(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if cfg.zero_noise {
        return Ok(label);
    }
    Ok(if r.bernoulli(flip_probability(epsilon)) { -label } else { label })
}

pub fn flip_probability(epsilon: f64) -> f64 {
    1.0 / (epsilon.exp() + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: usize = 1_000_000;

    #[test]
    fn laplace_median_and_zero_mode() {
        assert_eq!(laplace_from_uniform(1.0, 0.5), 0.0);
        let mut r = RngStream::new(1);
        assert_eq!(laplace_sample(3.0, NoiseConfig::ZERO, &mut r).unwrap(), 0.0);
        assert!(laplace_sample(0.0, NoiseConfig::NOISY, &mut r).is_err());
        assert!(laplace_sample(-1.0, NoiseConfig::NOISY, &mut r).is_err());
    }

    #[test]
    fn laplace_tail_mass_at_half() {
        let mut r = RngStream::new(11);
        let hits = (0..N)
            .filter(|_| laplace_sample(1.0, NoiseConfig::NOISY, &mut r).unwrap().abs() >= 0.5)
            .count();
        let frac = hits as f64 / N as f64;
        assert!((frac - (-0.5f64).exp()).abs() < 0.002, "{frac}");
    }

    #[test]
    fn laplace_ks_statistic() {
        let mut r = RngStream::new(12);
        let mut xs: Vec<f64> = (0..N)
            .map(|_| laplace_sample(1.0, NoiseConfig::NOISY, &mut r).unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let cdf = |x: f64| if x < 0.0 { 0.5 * x.exp() } else { 1.0 - 0.5 * (-x).exp() };
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / N as f64).abs().max(((i + 1) as f64 / N as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.005, "{ks}");
    }

    #[test]
    fn gaussian_moments() {
        let mut r = RngStream::new(13);
        let xs: Vec<f64> = (0..N)
            .map(|_| gaussian_sample(2.0, NoiseConfig::NOISY, &mut r).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / N as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / N as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 4.0).abs() < 0.05, "{var}");
        assert_eq!(gaussian_sample(2.0, NoiseConfig::ZERO, &mut r).unwrap(), 0.0);
        assert!(gaussian_sample(0.0, NoiseConfig::NOISY, &mut r).is_err());
    }

    fn histogram(scores: &[f64], t: f64, draws: usize, seed: u64) -> Vec<f64> {
        let mut r = RngStream::new(seed);
        let mut counts = vec![0usize; scores.len()];
        for _ in 0..draws {
            counts[exponential_select(scores, t, NoiseConfig::NOISY, &mut r).unwrap()] += 1;
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn exponential_equal_scores_pass_chi_square() {
        let k = 8;
        let freq = histogram(&vec![1.5; k], 2.0, 100_000, 14);
        let expected = 100_000.0 / k as f64;
        let chi2: f64 = freq
            .iter()
            .map(|f| (f * 100_000.0 - expected).powi(2) / expected)
            .sum();
        // 7 degrees of freedom: the 0.999 quantile is 24.32.
        assert!(chi2 < 24.32, "{chi2}");
    }

    #[test]
    fn exponential_odds_ratio_three() {
        let t = 0.7;
        let freq = histogram(&[0.0, 3f64.ln() / t], t, 100_000, 15);
        assert!((freq[0] - 0.25).abs() < 0.01 && (freq[1] - 0.75).abs() < 0.01, "{freq:?}");
    }

    #[test]
    fn exponential_matches_softmax_in_total_variation() {
        let mut r = RngStream::new(16);
        for trial in 0..5u64 {
            let k = 2 + (r.below(15) as usize);
            let scores: Vec<f64> = (0..k).map(|_| r.uniform() * 4.0 - 2.0).collect();
            let t = 0.5 + r.uniform() * 2.0;
            let freq = histogram(&scores, t, 100_000, 100 + trial);
            let z: f64 = scores.iter().map(|s| (t * s).exp()).sum();
            let tv: f64 = 0.5
                * scores
                    .iter()
                    .zip(&freq)
                    .map(|(s, f)| ((t * s).exp() / z - f).abs())
                    .sum::<f64>();
            assert!(tv < 0.01, "tv={tv} k={k}");
        }
    }

    #[test]
    fn exponential_zero_noise_and_errors() {
        let mut r = RngStream::new(0);
        assert_eq!(exponential_select(&[1.0, 3.0, 3.0], 1.0, NoiseConfig::ZERO, &mut r).unwrap(), 1);
        assert!(exponential_select(&[], 1.0, NoiseConfig::NOISY, &mut r).is_err());
        assert!(exponential_select(&[f64::NAN], 1.0, NoiseConfig::NOISY, &mut r).is_err());
        // huge score gaps must not overflow
        assert_eq!(exponential_select(&[0.0, 1e6], 1e3, NoiseConfig::NOISY, &mut r).unwrap(), 1);
    }

    fn flip_rate(epsilon: f64, trials: usize, seed: u64) -> f64 {
        let mut r = RngStream::new(seed);
        let flips = (0..trials)
            .filter(|_| randomized_response(1, epsilon, NoiseConfig::NOISY, &mut r).unwrap() == -1)
            .count();
        flips as f64 / trials as f64
    }

    #[test]
    fn randomized_response_rates() {
        assert!(flip_probability(50.0) < 1e-20);
        assert_eq!(flip_rate(50.0, 100_000, 17), 0.0);
        assert!((flip_rate(0.0, 100_000, 18) - 0.5).abs() < 0.01);
        assert!((flip_rate(3f64.ln(), 100_000, 19) - 0.25).abs() < 0.01);
        let mut r = RngStream::new(0);
        assert!(randomized_response(0, 1.0, NoiseConfig::NOISY, &mut r).is_err());
        assert_eq!(randomized_response(-1, 0.0, NoiseConfig::ZERO, &mut r).unwrap(), -1);
    }

    #[test]
    fn randomized_response_likelihood_ratio() {
        let mut r = RngStream::new(20);
        let plus_given_plus = (0..N)
            .filter(|_| randomized_response(1, 1.0, NoiseConfig::NOISY, &mut r).unwrap() == 1)
            .count() as f64;
        let plus_given_minus = (0..N)
            .filter(|_| randomized_response(-1, 1.0, NoiseConfig::NOISY, &mut r).unwrap() == 1)
            .count() as f64;
        let ratio = plus_given_plus / plus_given_minus;
        assert!(ratio >= 0.95f64.exp() && ratio <= 1.05f64.exp(), "{ratio}");
    }

    #[test]
    fn samplers_are_reproducible() {
        let run = || {
            let mut r = RngStream::new(99).substream(4);
            (
                laplace_sample(1.0, NoiseConfig::NOISY, &mut r).unwrap(),
                gaussian_sample(1.0, NoiseConfig::NOISY, &mut r).unwrap(),
                exponential_select(&[0.1, 0.2, 0.3], 1.0, NoiseConfig::NOISY, &mut r).unwrap(),
                randomized_response(1, 0.5, NoiseConfig::NOISY, &mut r).unwrap(),
            )
        };
        assert_eq!(run(), run());
    }
}
