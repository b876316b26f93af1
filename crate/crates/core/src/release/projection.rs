use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::frank_wolfe::{frank_wolfe_project, FwOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mechanisms::{gaussian_sample, NoiseConfig};
use crate::rng::RngStream;
use crate::workloads::{diameters, eval_workload, Workload, BRUTE_FORCE_MAX_D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// Projected answers, inside the hull of single-record answer vectors.
    pub answers: Vec<f64>,
    /// Answers after Gaussian noise, before projection.
    pub noisy: Vec<f64>,
    /// Per-person parameter `Δ/(σn)`; the release is `½ε²`-zCDP.
    pub epsilon: f64,
    /// Per-attribute parameter `Δ0/(σn)`; the release is `ε0`-∇0CDP.
    pub eps0: f64,
    pub fw_gap: f64,
    pub fw_converged: bool,
}

/// Distinct answer vectors `Q(x̌)` over all `x̌ ∈ {0,1}^d`.
pub fn vertex_answers(w: &Workload) -> Result<Vec<Vec<f64>>> {
    let d = w.d();
    if d > BRUTE_FORCE_MAX_D {
        return Err(Error::DomainTooLarge {
            d,
            limit: BRUTE_FORCE_MAX_D,
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for u in 0..(1u64 << d) {
        let v: Vec<f64> = w.queries().iter().map(|q| q.eval_index(u, d)).collect();
        if seen.insert(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Adds `N(0, σ²)` to every workload answer, then projects onto the hull of
/// achievable answer vectors.
pub fn projection_mechanism(
    data: &Dataset,
    w: &Workload,
    sigma: f64,
    fw: FwOptions,
    cfg: NoiseConfig,
    r: &mut RngStream,
) -> Result<ProjectionResult> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let truth = eval_workload(w, data)?;
    let vertices = vertex_answers(w)?;
    let dm = diameters(w)?;
    let noisy = truth
        .iter()
        .map(|q| Ok(q + gaussian_sample(sigma, cfg, r)?))
        .collect::<Result<Vec<f64>>>()?;
    let out = frank_wolfe_project(&noisy, &vertices, fw)?;
    let scale = sigma * data.n() as f64;
    Ok(ProjectionResult {
        answers: out.point,
        noisy,
        epsilon: dm.delta / scale,
        eps0: dm.delta0 / scale,
        fw_gap: out.gap,
        fw_converged: out.converged,
    })
}

/// `min{σ², σ·Δ·√(2 ln 2^d) / m}`, the bound on expected per-query squared error.
pub fn projection_mse_bound(sigma: f64, delta: f64, d: usize, m: usize) -> f64 {
    let width = (2.0 * d as f64 * std::f64::consts::LN_2).sqrt();
    (sigma * sigma).min(sigma * delta * width / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::workloads::{kway_marginal_workload, MarginalKind};

    fn random_dataset(d: usize, n: usize, seed: u64) -> Dataset {
        let mut r = RngStream::new(seed);
        Dataset::from_rows(d, (0..n).map(|_| Record::from_index(r.below(1 << d), d)).collect()).unwrap()
    }

    #[test]
    fn zero_noise_returns_exact_answers() {
        let w = kway_marginal_workload(4, 2, MarginalKind::Parity).unwrap();
        let data = random_dataset(4, 30, 1);
        let out =
            projection_mechanism(&data, &w, 0.1, FwOptions::default(), NoiseConfig::ZERO, &mut RngStream::new(0))
                .unwrap();
        let truth = eval_workload(&w, &data).unwrap();
        let err: f64 = out.answers.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn reported_parameters() {
        let w = kway_marginal_workload(4, 2, MarginalKind::Parity).unwrap();
        let data = random_dataset(4, 100, 2);
        let out =
            projection_mechanism(&data, &w, 0.01, FwOptions::default(), NoiseConfig::NOISY, &mut RngStream::new(3))
                .unwrap();
        assert!((out.epsilon - 6f64.sqrt()).abs() < 1e-12);
        assert!((out.eps0 - 3f64.sqrt()).abs() < 1e-12);
        assert!((out.epsilon / out.eps0 - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn projection_never_increases_error() {
        let w = kway_marginal_workload(5, 2, MarginalKind::Conjunction).unwrap();
        let data = random_dataset(5, 40, 4);
        let truth = eval_workload(&w, &data).unwrap();
        let root = RngStream::new(5);
        for t in 0..30 {
            let out = projection_mechanism(
                &data,
                &w,
                0.2,
                FwOptions::default(),
                NoiseConfig::NOISY,
                &mut root.substream(t),
            )
            .unwrap();
            let e = |v: &[f64]| v.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // the projection is only tol-accurate, so allow sqrt(tol)
            assert!(e(&out.answers) <= e(&out.noisy) + 1e-3);
        }
    }

    #[test]
    fn vertex_answers_are_distinct() {
        let w = kway_marginal_workload(3, 3, MarginalKind::Parity).unwrap();
        assert_eq!(vertex_answers(&w).unwrap().len(), 2);
    }
}
