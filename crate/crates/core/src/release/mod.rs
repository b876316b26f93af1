//! Workload-answering mechanisms: the projection mechanism and MWEM with
//! attribute-disjoint query tuples.

mod frank_wolfe;
mod mwem;
mod projection;

pub use frank_wolfe::{frank_wolfe_project, FwOptions, FwOutcome};
pub use mwem::{
    default_rounds, disjoint_tuple_max_error, enumerate_disjoint_tuples, mwem, mwem_error_bound, MwemParams,
    MwemResult, MwemRound, DEFAULT_TUPLE_CAP,
};
pub use projection::{projection_mechanism, projection_mse_bound, vertex_answers, ProjectionResult};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::workloads::{Query, Workload};

/// Largest `d` for which a distribution over `{0,1}^d` is materialised.
pub const MAX_DOMAIN_D: usize = 20;

/// An explicit probability vector over `{0,1}^d`, indexed with attribute 0 as
/// the most significant bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionOverDomain {
    d: usize,
    probs: Vec<f64>,
}

impl DistributionOverDomain {
    pub fn uniform(d: usize) -> Result<Self> {
        check_domain(d)?;
        let size = 1usize << d;
        Ok(DistributionOverDomain {
            d,
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn from_probs(d: usize, probs: Vec<f64>) -> Result<Self> {
        check_domain(d)?;
        if probs.len() != 1usize << d {
            return Err(Error::param(format!(
                "distribution over 2^{d} records needs {} entries, got {}",
                1usize << d,
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::param("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DistributionOverDomain { d, probs })
    }

    /// The empirical distribution of the rows.
    pub fn empirical(data: &Dataset) -> Result<Self> {
        check_domain(data.d())?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut probs = vec![0.0; 1usize << data.d()];
        let w = 1.0 / data.n() as f64;
        for x in data.rows() {
            probs[x.to_index() as usize] += w;
        }
        Ok(DistributionOverDomain { d: data.d(), probs })
    }

    /// Normalises `exp(log_weights)`.
    pub(crate) fn from_log_weights(d: usize, log_weights: &[f64]) -> Self {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        DistributionOverDomain { d, probs }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `E_{X∼A}[q(X)]`.
    pub fn expect(&self, q: &Query) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(u, p)| p * q.eval_index(u as u64, self.d))
            .sum()
    }

    pub fn answers(&self, w: &Workload) -> Vec<f64> {
        w.queries().iter().map(|q| self.expect(q)).collect()
    }
}

fn check_domain(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::param("domain dimension must be positive"));
    }
    if d > MAX_DOMAIN_D {
        return Err(Error::DomainTooLarge { d, limit: MAX_DOMAIN_D });
    }
    Ok(())
}
