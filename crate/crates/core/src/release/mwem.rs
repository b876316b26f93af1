//! MWEM over attribute-disjoint query tuples.

use serde::{Deserialize, Serialize};

use super::DistributionOverDomain;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mechanisms::{exponential_select, gaussian_sample, NoiseConfig};
use crate::rng::RngStream;
use crate::workloads::{eval_workload, Workload};

pub const DEFAULT_TUPLE_CAP: u64 = 1_000_000;

/// Above this many `(query, record)` pairs the answer matrix is not cached.
const MATRIX_CACHE_LIMIT: usize = 1 << 22;

/// All unordered `ell`-subsets of query indices whose attribute sets are
/// pairwise disjoint, in lexicographic order.
pub fn enumerate_disjoint_tuples(w: &Workload, ell: usize, cap: u64) -> Result<Vec<Vec<usize>>> {
    if ell == 0 {
        return Err(Error::param("tuple size must be at least 1"));
    }
    let mut out = Vec::new();
    let mut used = vec![false; w.d()];
    let mut current = Vec::with_capacity(ell);
    extend_tuples(w, ell, cap, 0, &mut used, &mut current, &mut out)?;
    Ok(out)
}

fn extend_tuples(
    w: &Workload,
    ell: usize,
    cap: u64,
    from: usize,
    used: &mut [bool],
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) -> Result<()> {
    if current.len() == ell {
        if out.len() as u64 >= cap {
            return Err(Error::TupleExplosion {
                count: cap + 1,
                cap,
            });
        }
        out.push(current.clone());
        return Ok(());
    }
    let remaining = ell - current.len();
    for i in from..w.m().saturating_sub(remaining - 1) {
        let attrs = w.queries()[i].attrs();
        if attrs.iter().any(|&j| used[j]) {
            continue;
        }
        attrs.iter().for_each(|&j| used[j] = true);
        current.push(i);
        let res = extend_tuples(w, ell, cap, i + 1, used, current, out);
        current.pop();
        attrs.iter().for_each(|&j| used[j] = false);
        res?;
    }
    Ok(())
}

fn max_tuple_error(errors: &[f64], tuples: &[Vec<usize>]) -> f64 {
    tuples
        .iter()
        .map(|t| t.iter().map(|&i| errors[i]).sum::<f64>() / t.len() as f64)
        .fold(0.0, f64::max)
}

/// `max over disjoint tuples of (1/ℓ) Σ |q_i(A) − q_i(D)|`.
pub fn disjoint_tuple_max_error(w: &Workload, ell: usize, a: &DistributionOverDomain, data: &Dataset) -> Result<f64> {
    let tuples = enumerate_disjoint_tuples(w, ell, DEFAULT_TUPLE_CAP)?;
    if tuples.is_empty() {
        return Err(Error::Precondition(format!("workload has no attribute-disjoint {ell}-tuple")));
    }
    if a.d() != w.d() {
        return Err(Error::SchemaMismatch {
            expected: w.d(),
            found: a.d(),
        });
    }
    let truth = eval_workload(w, data)?;
    let errors: Vec<f64> = a.answers(w).iter().zip(&truth).map(|(x, y)| (x - y).abs()).collect();
    Ok(max_tuple_error(&errors, &tuples))
}

/// `⌈√(ln|X|)·ε0·n / (√ℓ·ln m)⌉` clamped to `[1, 200]`.
pub fn default_rounds(d: usize, n: usize, eps0: f64, ell: usize, m: usize) -> usize {
    let ln_x = d as f64 * std::f64::consts::LN_2;
    let t = ln_x.sqrt() * eps0 * n as f64 / ((ell as f64).sqrt() * (m as f64).ln());
    if t.is_nan() {
        return 1;
    }
    t.ceil().clamp(1.0, 200.0) as usize
}

/// Expected disjoint-tuple error bound at `T` rounds:
/// `√(2T/(n²ε0²) + 4 ln|X|/(Tℓ)) + √(2T)/(ε0 n) · ln m`.
pub fn mwem_error_bound(rounds: usize, n: usize, eps0: f64, d: usize, ell: usize, m: usize) -> f64 {
    let t = rounds as f64;
    let n = n as f64;
    let ln_x = d as f64 * std::f64::consts::LN_2;
    (2.0 * t / (n * n * eps0 * eps0) + 4.0 * ln_x / (t * ell as f64)).sqrt()
        + (2.0 * t).sqrt() / (eps0 * n) * (m as f64).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MwemParams {
    pub eps0: f64,
    pub rounds: usize,
    pub ell: usize,
    pub tuple_cap: u64,
    /// Keep every `A_t` in the result (tests and diagnostics).
    pub record_iterates: bool,
}

impl MwemParams {
    pub fn new(eps0: f64, rounds: usize, ell: usize) -> Self {
        MwemParams {
            eps0,
            rounds,
            ell,
            tuple_cap: DEFAULT_TUPLE_CAP,
            record_iterates: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MwemRound {
    pub round: usize,
    /// Indices of the selected queries.
    pub tuple: Vec<usize>,
    pub noisy_answers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MwemResult {
    /// `(1/T) Σ_t A_t`.
    pub synthetic: DistributionOverDomain,
    pub answers: Vec<f64>,
    pub trace: Vec<MwemRound>,
    pub eps_t: f64,
    /// The release is `eps0`-∇0CDP.
    pub eps0: f64,
    /// The release is `rho`-zCDP with `rho = ½(ℓ·ε0)²`.
    pub rho: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub iterates: Vec<DistributionOverDomain>,
}

/// Query values `q_i(u)` over the whole domain, cached when small enough.
struct QueryValues<'a> {
    w: &'a Workload,
    size: usize,
    cache: Option<Vec<f64>>,
}

impl<'a> QueryValues<'a> {
    fn new(w: &'a Workload) -> Self {
        let size = 1usize << w.d();
        let cache = (w.m() * size <= MATRIX_CACHE_LIMIT).then(|| {
            w.queries()
                .iter()
                .flat_map(|q| (0..size as u64).map(|u| q.eval_index(u, w.d())))
                .collect()
        });
        QueryValues { w, size, cache }
    }

    fn get(&self, i: usize, u: usize) -> f64 {
        match &self.cache {
            Some(c) => c[i * self.size + u],
            None => self.w.queries()[i].eval_index(u as u64, self.w.d()),
        }
    }

    fn expect(&self, i: usize, probs: &[f64]) -> f64 {
        probs.iter().enumerate().map(|(u, p)| p * self.get(i, u)).sum()
    }
}

pub fn mwem(
    data: &Dataset,
    w: &Workload,
    params: &MwemParams,
    cfg: NoiseConfig,
    r: &mut RngStream,
) -> Result<MwemResult> {
    let MwemParams {
        eps0,
        rounds,
        ell,
        tuple_cap,
        record_iterates,
    } = *params;
    if rounds == 0 {
        return Err(Error::param("MWEM needs at least one round"));
    }
    if !(eps0 > 0.0) || !eps0.is_finite() {
        return Err(Error::param(format!("eps0 must be positive, got {eps0}")));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = w.d();
    let mut current = DistributionOverDomain::uniform(d)?;
    let truth = eval_workload(w, data)?;
    let tuples = enumerate_disjoint_tuples(w, ell, tuple_cap)?;
    if tuples.is_empty() {
        return Err(Error::Precondition(format!("workload has no attribute-disjoint {ell}-tuple")));
    }

    let n = data.n() as f64;
    let eps_t = eps0 / (2.0 * rounds as f64).sqrt();
    let sigma = 1.0 / (n * eps_t);
    let values = QueryValues::new(w);
    let size = 1usize << d;
    let mut log_w = vec![0.0; size];
    let mut sum = vec![0.0; size];
    let mut trace = Vec::with_capacity(rounds);
    let mut iterates = Vec::new();

    for round in 1..=rounds {
        let probs = current.probs();
        for (s, p) in sum.iter_mut().zip(probs) {
            *s += p;
        }
        let est: Vec<f64> = (0..w.m()).map(|i| values.expect(i, probs)).collect();
        let scores: Vec<f64> = tuples
            .iter()
            .map(|t| t.iter().map(|&i| (est[i] - truth[i]).abs()).sum())
            .collect();
        let chosen = &tuples[exponential_select(&scores, eps_t * n, cfg, r)?];

        let mut noisy = Vec::with_capacity(ell);
        for &i in chosen {
            let a = truth[i] + gaussian_sample(sigma, cfg, r)?;
            noisy.push(a.clamp(0.0, 1.0));
        }
        for (u, lw) in log_w.iter_mut().enumerate() {
            let delta: f64 = chosen
                .iter()
                .zip(&noisy)
                .map(|(&i, a)| values.get(i, u) * (a - est[i]))
                .sum();
            *lw += 0.5 * delta;
        }
        if record_iterates {
            iterates.push(current.clone());
        }
        trace.push(MwemRound {
            round,
            tuple: chosen.clone(),
            noisy_answers: noisy,
        });
        current = DistributionOverDomain::from_log_weights(d, &log_w);
    }

    let t = rounds as f64;
    let synthetic = DistributionOverDomain {
        d,
        probs: sum.iter().map(|s| s / t).collect(),
    };
    let answers = (0..w.m()).map(|i| values.expect(i, synthetic.probs())).collect();
    let le = ell as f64 * eps0;
    Ok(MwemResult {
        synthetic,
        answers,
        trace,
        eps_t,
        eps0,
        rho: 0.5 * le * le,
        iterates,
    })
}
