//! Heavy hitters over a binary tree of attribute intervals, the histogram and
//! distribution estimators built on it, and histogram-based PAC learners.
//!
//! The tree pads `d` up to a power of two with attributes fixed to 0. Padded
//! leaves hold only the candidate `0`; that costs no privacy because the
//! padding is public, and it is stripped from the output.

mod learners;

pub use learners::{
    find_polarizing_prefix, learn_point, learn_threshold, point_sample_size, polarization, threshold_error,
    threshold_sample_size, PointBranch, PointOutcome, PrefixOutcome, ThresholdBranch, ThresholdOptions,
    ThresholdOutcome,
};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::mechanisms::{laplace_sample, NoiseConfig};
use crate::rng::RngStream;

/// Laplace scale `λ`, base threshold `τ` and per-level bias `μ`, in counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitterParams {
    pub lambda: f64,
    pub tau: f64,
    pub mu: f64,
}

/// `(2/λ)(1 + 1/(1 − e^{−μ/λ}))`, the per-attribute budget of the tree.
pub fn check_hh_privacy(lambda: f64, mu: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    if !(mu > 1.0) {
        return Err(Error::Precondition(format!("the tree's privacy proof needs mu > 1, got {mu}")));
    }
    Ok((2.0 / lambda) * (1.0 + 1.0 / (-(-mu / lambda).exp_m1())))
}

impl HeavyHitterParams {
    /// Parameters for a heavy-hitter budget `eps_hh` at resolution `nu`.
    ///
    /// With `μ = λ ln(16/ν)` the factor `e^{−μ/λ}` is the constant `ν/16`, so
    /// the smallest admissible `λ` solves the privacy condition in closed form:
    /// `λ = (2/ε)(1 + 1/(1 − ν/16))`.
    pub fn for_budget(eps_hh: f64, nu: f64, n: usize) -> Result<Self> {
        if !(eps_hh > 0.0) || !eps_hh.is_finite() {
            return Err(Error::param(format!("heavy-hitter epsilon must be positive, got {eps_hh}")));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::param(format!("nu must lie in (0, 1), got {nu}")));
        }
        let lambda = (2.0 / eps_hh) * (1.0 + 1.0 / (1.0 - nu / 16.0));
        let mu = lambda * (16.0 / nu).ln();
        let params = HeavyHitterParams {
            lambda,
            tau: 0.5 * nu * n as f64,
            mu,
        };
        params.validate(eps_hh)?;
        Ok(params)
    }

    /// Checks `μ > 1` and that the tree fits within `eps` (relative slack 1e-12).
    pub fn validate(&self, eps: f64) -> Result<()> {
        let achieved = check_hh_privacy(self.lambda, self.mu)?;
        if achieved > eps * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "heavy-hitter parameters spend {achieved} > target {eps}"
            )));
        }
        Ok(())
    }

    /// `τ_ℓ = τ + (ℓ − 1)μ` for levels `ℓ ≥ 1`.
    pub fn level_threshold(&self, level: usize) -> f64 {
        self.tau + (level as f64 - 1.0) * self.mu
    }

    /// The recovery guarantee needs `τ ≥ 8μ ln d + 8λ ln(d/(ην))`; returns a
    /// message with the implied minimum `n` when it does not hold.
    pub fn utility_warning(&self, d: usize, nu: f64, eta: f64) -> Option<String> {
        let ln_d = (padded_width(d) as f64).ln();
        let need = 8.0 * self.mu * ln_d + 8.0 * self.lambda * (d as f64 / (eta * nu)).ln();
        (self.tau < need).then(|| {
            format!(
                "heavy-hitter recovery requires tau >= 8 mu ln d + 8 lambda ln(d/(eta nu)) = {need:.1}, \
                 but tau = 0.5 nu n = {:.1}; n >= {:.0} would satisfy it",
                self.tau,
                (2.0 * need / nu).ceil()
            )
        })
    }
}

pub fn padded_width(d: usize) -> usize {
    d.max(1).next_power_of_two()
}

/// The intervals of level `level` (size `2^level`) over `width` attributes.
pub fn level_intervals(width: usize, level: usize) -> Vec<(usize, usize)> {
    let size = 1usize << level;
    (0..width / size).map(|t| (t * size, (t + 1) * size)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitterOutput {
    /// Listed records in lexicographic order.
    pub list: Vec<Record>,
    /// `|L_I|` summed over each level's intervals, leaves first.
    pub level_sizes: Vec<usize>,
}

/// The privacy-preserving tree: each level keeps the concatenations of its
/// children's lists whose clipped, noised count clears that level's threshold.
pub fn priv_heavy_hitter(
    data: &Dataset,
    params: &HeavyHitterParams,
    cfg: NoiseConfig,
    r: &RngStream,
) -> Result<HeavyHitterOutput> {
    check_hh_privacy(params.lambda, params.mu)?;
    let d = data.d();
    let width = padded_width(d);
    let mut lists: Vec<Vec<Vec<u8>>> = (0..width)
        .map(|j| if j < d { vec![vec![0], vec![1]] } else { vec![vec![0]] })
        .collect();
    let mut level_sizes = vec![lists.iter().map(Vec::len).sum()];

    let padded_bit = |row: &Record, j: usize| if j < d { row.bits()[j] } else { 0 };
    let mut level = 1;
    while (1usize << level) <= width {
        let threshold = params.level_threshold(level);
        let floor = threshold - params.mu;
        let mut next = Vec::with_capacity(lists.len() / 2);
        for (t, (start, end)) in level_intervals(width, level).into_iter().enumerate() {
            let (left, right) = (&lists[2 * t], &lists[2 * t + 1]);
            let mut kept = Vec::new();
            if !left.is_empty() && !right.is_empty() {
                let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
                for row in data.rows() {
                    let key: Vec<u8> = (start..end).map(|j| padded_bit(row, j)).collect();
                    *counts.entry(key).or_default() += 1;
                }
                let mut stream = r.substream(level as u64).substream(t as u64);
                for a in left {
                    for b in right {
                        let mut s = Vec::with_capacity(a.len() + b.len());
                        s.extend_from_slice(a);
                        s.extend_from_slice(b);
                        let f = counts.get(&s).copied().unwrap_or(0) as f64;
                        let noisy = f.max(floor) + laplace_sample(params.lambda, cfg, &mut stream)?;
                        if noisy > threshold {
                            kept.push(s);
                        }
                    }
                }
            }
            next.push(kept);
        }
        lists = next;
        level_sizes.push(lists.iter().map(Vec::len).sum());
        level += 1;
    }

    let root = lists.into_iter().next().unwrap_or_default();
    let list = root
        .into_iter()
        .map(|mut bits| {
            bits.truncate(d);
            Record::new(bits).expect("bits are 0/1")
        })
        .collect();
    Ok(HeavyHitterOutput { list, level_sizes })
}

/// Estimated counts for listed records; every other record is implicitly 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseHistogram {
    pub entries: BTreeMap<Record, f64>,
}

impl SparseHistogram {
    pub fn get(&self, x: &Record) -> f64 {
        self.entries.get(x).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `max_y |ĥ_y − h_y|` against exact counts (or any other histogram).
    pub fn max_abs_error(&self, truth: &SparseHistogram) -> f64 {
        let listed = self.entries.iter().map(|(x, v)| (v - truth.get(x)).abs());
        let missed = truth
            .entries
            .iter()
            .filter(|(x, _)| !self.entries.contains_key(x))
            .map(|(_, v)| v.abs());
        listed.chain(missed).fold(0.0, f64::max)
    }

    /// `Σ_y (ĥ_y − h_y)²`.
    pub fn squared_l2_error(&self, truth: &SparseHistogram) -> f64 {
        let listed: f64 = self.entries.iter().map(|(x, v)| (v - truth.get(x)).powi(2)).sum();
        let missed: f64 = truth
            .entries
            .iter()
            .filter(|(x, _)| !self.entries.contains_key(x))
            .map(|(_, v)| v * v)
            .sum();
        listed + missed
    }
}

pub(crate) fn count_rows(data: &Dataset) -> HashMap<&Record, usize> {
    let mut counts = HashMap::new();
    for row in data.rows() {
        *counts.entry(row).or_default() += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramOutput {
    pub histogram: SparseHistogram,
    pub params: HeavyHitterParams,
    pub level_sizes: Vec<usize>,
    /// Set when `n` is below what the recovery guarantee assumes.
    pub warning: Option<String>,
}

/// Heavy hitters at `ε/2`, then `Lap(2/ε)` on the exact count of each listed record.
pub fn priv_histogram(
    data: &Dataset,
    epsilon: f64,
    nu: f64,
    eta: f64,
    cfg: NoiseConfig,
    r: &RngStream,
) -> Result<HistogramOutput> {
    for (name, v) in [("nu", nu), ("eta", eta)] {
        if !(v > 0.0 && v <= 0.1) {
            return Err(Error::param(format!("{name} must lie in (0, 0.1], got {v}")));
        }
    }
    let out = histogram_unchecked(data, epsilon, nu, cfg, r)?;
    Ok(HistogramOutput {
        warning: out.params.utility_warning(data.d(), nu, eta),
        ..out
    })
}

pub(crate) fn histogram_unchecked(
    data: &Dataset,
    epsilon: f64,
    nu: f64,
    cfg: NoiseConfig,
    r: &RngStream,
) -> Result<HistogramOutput> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let params = HeavyHitterParams::for_budget(epsilon / 2.0, nu, data.n())?;
    let hh = priv_heavy_hitter(data, &params, cfg, &r.substream(0))?;
    let counts = count_rows(data);
    let mut noise = r.substream(1);
    let mut entries = BTreeMap::new();
    for x in hh.list {
        let f = counts.get(&x).copied().unwrap_or(0) as f64;
        entries.insert(x, f + laplace_sample(2.0 / epsilon, cfg, &mut noise)?);
    }
    Ok(HistogramOutput {
        histogram: SparseHistogram { entries },
        params,
        level_sizes: hh.level_sizes,
        warning: None,
    })
}

/// `16/(εν) · ln(d/η) · ln(1/ν)` scaled by `constant/16`.
pub fn histogram_sample_size(d: usize, epsilon: f64, nu: f64, eta: f64, constant: f64) -> usize {
    (constant / (epsilon * nu) * (d as f64 / eta).ln() * (1.0 / nu).ln()).ceil() as usize
}

/// Resolution used by [`estimate_distribution`]: `C·ln d / (εn) / ln(εn)`, `C = 4`.
pub fn distribution_nu(d: usize, epsilon: f64, n: usize) -> f64 {
    let en = epsilon * n as f64;
    4.0 * (d as f64).ln() / en / en.ln()
}

/// Heavy hitters at `ε/2` with [`distribution_nu`], then `(f_x + Lap(2/ε))/n`
/// for listed records. Entries are neither clipped nor renormalised, so they
/// can be negative and need not sum to 1.
pub fn estimate_distribution(data: &Dataset, epsilon: f64, cfg: NoiseConfig, r: &RngStream) -> Result<SparseHistogram> {
    let n = data.n();
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    if epsilon * n as f64 <= std::f64::consts::E {
        return Err(Error::Precondition(format!("distribution estimation needs eps*n > e, got {}", epsilon * n as f64)));
    }
    if data.d() < 2 {
        return Err(Error::Precondition("distribution estimation needs d >= 2".into()));
    }
    let nu = distribution_nu(data.d(), epsilon, n);
    let out = histogram_unchecked(data, epsilon, nu, cfg, r)?;
    let entries = out
        .histogram
        .entries
        .into_iter()
        .map(|(x, f)| (x, f / n as f64))
        .collect();
    Ok(SparseHistogram { entries })
}
