//! Point-function and threshold learners that treat the label as one more attribute.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::histogram_unchecked;
use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::mechanisms::{exponential_select, laplace_sample, NoiseConfig};
use crate::rng::RngStream;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 0.1 {
        Ok(())
    } else {
        Err(Error::param(format!("alpha must lie in (0, 0.1], got {alpha}")))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("epsilon must be positive, got {epsilon}")))
    }
}

fn width_of(samples: &[(Record, bool)]) -> Result<usize> {
    let (first, _) = samples.first().ok_or(Error::EmptyDataset)?;
    let d = first.d();
    if let Some((x, _)) = samples.iter().find(|(x, _)| x.d() != d) {
        return Err(Error::SchemaMismatch { expected: d, found: x.d() });
    }
    Ok(d)
}

fn with_label(x: &Record, y: bool) -> Record {
    let mut z = x.clone();
    z.push(y);
    z
}

/// Next record in lexicographic order, or `None` after `1_d`.
fn successor(x: &Record) -> Option<Record> {
    let mut bits = x.bits().to_vec();
    for j in (0..bits.len()).rev() {
        if bits[j] == 0 {
            bits[j] = 1;
            return Some(Record::new(bits).expect("bits are 0/1"));
        }
        bits[j] = 0;
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointBranch {
    /// A listed `x∘1` had estimated count above `νn`.
    Positive,
    /// No positive hitter; `x` has estimated `x∘0` count at most `νn`.
    LowNegative,
    /// Neither search succeeded.
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    /// The learned point `u` of `point_u(z) = 1[z = u]`.
    pub point: Record,
    pub branch: PointBranch,
    pub warning: Option<String>,
}

/// `c/(αε) · ln d · ln(1/α)`.
pub fn point_sample_size(d: usize, epsilon: f64, alpha: f64, constant: f64) -> usize {
    (constant / (alpha * epsilon) * (d as f64).ln() * (1.0 / alpha).ln()).ceil() as usize
}

/// Runs the histogram on `x∘y` with `ν = 0.2α`, `η = 0.01`, then picks a point.
pub fn learn_point(
    samples: &[(Record, bool)],
    epsilon: f64,
    alpha: f64,
    cfg: NoiseConfig,
    r: &RngStream,
) -> Result<PointOutcome> {
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    let d = width_of(samples)?;
    let n = samples.len();
    let nu = 0.2 * alpha;
    let joined = Dataset::from_rows(d + 1, samples.iter().map(|(x, y)| with_label(x, *y)).collect())?;
    let out = histogram_unchecked(&joined, epsilon, nu, cfg, r)?;
    let warning = out.params.utility_warning(d + 1, nu, 0.01);
    let hist = out.histogram;
    let cut = nu * n as f64;

    let positive = hist
        .entries
        .iter()
        .find(|(z, f)| z.bit(d) && **f > cut)
        .map(|(z, _)| z.slice(0, d));
    if let Some(point) = positive {
        return Ok(PointOutcome { point, branch: PointBranch::Positive, warning });
    }

    let mut x = Record::zeros(d);
    loop {
        if hist.get(&with_label(&x, false)) <= cut {
            return Ok(PointOutcome { point: x, branch: PointBranch::LowNegative, warning });
        }
        match successor(&x) {
            Some(next) => x = next,
            None => break,
        }
    }

    let used: BTreeSet<&Record> = samples.iter().map(|(x, _)| x).collect();
    let mut x = Record::zeros(d);
    while used.contains(&x) {
        match successor(&x) {
            Some(next) => x = next,
            None => {
                x = Record::zeros(d);
                break;
            }
        }
    }
    Ok(PointOutcome { point: x, branch: PointBranch::Fallback, warning })
}

/// `pol(p) = min{f_{p*0}, f_{p*1}} / n`.
pub fn polarization(samples: &[(Record, bool)], prefix: &[u8]) -> f64 {
    let (mut zeros, mut ones) = (0usize, 0usize);
    for (x, y) in samples {
        if x.bits().starts_with(prefix) {
            if *y {
                ones += 1;
            } else {
                zeros += 1;
            }
        }
    }
    zeros.min(ones) as f64 / samples.len().max(1) as f64
}

fn max_polarization(samples: &[(Record, bool)], len: usize) -> f64 {
    let mut counts: HashMap<&[u8], (usize, usize)> = HashMap::new();
    for (x, y) in samples {
        let c = counts.entry(&x.bits()[..len]).or_default();
        if *y {
            c.1 += 1;
        } else {
            c.0 += 1;
        }
    }
    let best = counts.values().map(|&(a, b)| a.min(b)).max().unwrap_or(0);
    best as f64 / samples.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixOutcome {
    /// The selected prefix; empty when none qualified.
    pub prefix: Record,
    /// Prefix length chosen by the binary search.
    pub search_length: usize,
    /// False when no prefix of the searched length cleared `1.5γn` on both labels.
    pub found: bool,
}

/// Binary search for the longest length whose noisy max-polarization clears
/// `1.5γ` (budget `ε/2`, split across the search steps), then a histogram at
/// `ε/2` with `ν = 0.1γ` over `x|[ℓ*]∘y`.
pub fn find_polarizing_prefix(
    samples: &[(Record, bool)],
    epsilon: f64,
    gamma: f64,
    cfg: NoiseConfig,
    r: &RngStream,
) -> Result<PrefixOutcome> {
    check_epsilon(epsilon)?;
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::param(format!("gamma must lie in (0, 0.5), got {gamma}")));
    }
    let d = width_of(samples)?;
    let n = samples.len() as f64;
    // ℓ ranges over 0..=d, so the search asks at most ⌈log2(d+1)⌉ questions.
    let steps = (usize::BITS - d.leading_zeros()).max(1) as f64;
    let scale = 2.0 * steps / (epsilon * n);
    let mut noise = r.substream(0);
    let (mut lo, mut hi) = (0usize, d);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        let noisy = max_polarization(samples, mid) + laplace_sample(scale, cfg, &mut noise)?;
        if noisy >= 1.5 * gamma {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let len = lo;

    let truncated = Dataset::from_rows(
        len + 1,
        samples.iter().map(|(x, y)| with_label(&x.slice(0, len), *y)).collect(),
    )?;
    let hist = histogram_unchecked(&truncated, epsilon / 2.0, 0.1 * gamma, cfg, &r.substream(1))?.histogram;
    let cut = 1.5 * gamma * n;
    let prefixes: BTreeSet<Record> = hist.entries.keys().map(|z| z.slice(0, len)).collect();
    let chosen = prefixes
        .into_iter()
        .find(|p| hist.get(&with_label(p, false)) >= cut && hist.get(&with_label(p, true)) >= cut);
    Ok(match chosen {
        Some(prefix) => PrefixOutcome { prefix, search_length: len, found: true },
        None => PrefixOutcome {
            prefix: Record::zeros(0),
            search_length: len,
            found: false,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdBranch {
    FewPositives,
    FewNegatives,
    Prefix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    /// When set, a small noisy positive fraction returns `Thre_{1_d}` and a
    /// large one returns `Thre_{0_d}`, so each boundary branch outputs the
    /// hypothesis with low error. When clear, the branches are taken as
    /// originally stated.
    pub branch_swapped: bool,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions { branch_swapped: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    /// `z` of `Thre_z(x) = 1[x ≥ z]` (lexicographic).
    pub threshold: Record,
    pub branch: ThresholdBranch,
    pub noisy_fraction: f64,
    pub prefix: Option<PrefixOutcome>,
}

/// `c/(εα) · ln d · ln(1/α) · ln ln d`.
pub fn threshold_sample_size(d: usize, epsilon: f64, alpha: f64, constant: f64) -> usize {
    let ln_d = (d as f64).ln();
    (constant / (epsilon * alpha) * ln_d * (1.0 / alpha).ln() * ln_d.ln().max(1.0)).ceil() as usize
}

/// Empirical error of `Thre_z` on `samples`, as a count.
pub fn threshold_error(samples: &[(Record, bool)], z: &Record) -> usize {
    samples.iter().filter(|(x, y)| (x >= z) != *y).count()
}

fn padded(prefix: &[u8], tail: &[u8], d: usize, fill: u8) -> Record {
    let mut bits = prefix.to_vec();
    bits.extend_from_slice(tail);
    bits.resize(d, fill);
    Record::new(bits).expect("bits are 0/1")
}

/// Noisy positive fraction with `Lap(3/(εn))`; boundary branches when it is
/// within `0.5α` of 0 or 1; otherwise a polarizing prefix at `ε/3` and the
/// exponential mechanism at `ε/3` over `Thre_{p0…}`, `Thre_{p10…}`, `Thre_{p1…}`.
pub fn learn_threshold(
    samples: &[(Record, bool)],
    epsilon: f64,
    alpha: f64,
    opts: ThresholdOptions,
    cfg: NoiseConfig,
    r: &RngStream,
) -> Result<ThresholdOutcome> {
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    let d = width_of(samples)?;
    let n = samples.len() as f64;
    let positives = samples.iter().filter(|(_, y)| *y).count() as f64;
    let a = positives / n + laplace_sample(3.0 / (epsilon * n), cfg, &mut r.substream(0))?;

    let all_ones = Record::new(vec![1; d])?;
    let (low, high) = if opts.branch_swapped {
        (all_ones, Record::zeros(d))
    } else {
        (Record::zeros(d), all_ones)
    };
    if a <= 0.5 * alpha {
        return Ok(ThresholdOutcome { threshold: low, branch: ThresholdBranch::FewPositives, noisy_fraction: a, prefix: None });
    }
    if a >= 1.0 - 0.5 * alpha {
        return Ok(ThresholdOutcome { threshold: high, branch: ThresholdBranch::FewNegatives, noisy_fraction: a, prefix: None });
    }

    let found = find_polarizing_prefix(samples, epsilon / 3.0, 0.1 * alpha, cfg, &r.substream(1))?;
    let p = found.prefix.bits();
    let mut candidates = if p.len() == d {
        vec![found.prefix.clone()]
    } else {
        vec![padded(p, &[0], d, 0), padded(p, &[1, 0], d, 0), padded(p, &[1], d, 1)]
    };
    candidates.dedup();
    let scores: Vec<f64> = candidates.iter().map(|z| -(threshold_error(samples, z) as f64)).collect();
    // error counts have sensitivity 1
    let pick = exponential_select(&scores, epsilon / 3.0 / 2.0, cfg, &mut r.substream(2))?;
    Ok(ThresholdOutcome {
        threshold: candidates.swap_remove(pick),
        branch: ThresholdBranch::Prefix,
        noisy_fraction: a,
        prefix: Some(found),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: &str) -> Record {
        s.parse().unwrap()
    }

    fn labeled(parts: &[(&str, bool, usize)]) -> Vec<(Record, bool)> {
        parts
            .iter()
            .flat_map(|(s, y, k)| std::iter::repeat((rec(s), *y)).take(*k))
            .collect()
    }

    #[test]
    fn polarization_of_empty_prefix() {
        let s = labeled(&[("00", true, 3), ("01", false, 7)]);
        assert!((polarization(&s, &[]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn threshold_order_is_lexicographic() {
        let z = rec("010");
        assert!(rec("011") >= z);
        assert_eq!(threshold_error(&[(rec("011"), true)], &z), 0);
        assert_eq!(threshold_error(&[(rec("001"), true)], &z), 1);
    }

    #[test]
    fn successor_walks_the_cube() {
        assert_eq!(successor(&rec("011")), Some(rec("100")));
        assert_eq!(successor(&rec("11")), None);
    }

    #[test]
    fn point_learner_finds_frequent_positive() {
        let u = rec("1011");
        let mut s = labeled(&[("1011", true, 300)]);
        for i in 0..700u64 {
            let x = Record::from_index(i % 15, 4);
            let x = if x == u { Record::from_index(15, 4) } else { x };
            s.push((x, false));
        }
        let out = learn_point(&s, 20.0, 0.1, NoiseConfig::ZERO, &RngStream::new(0)).unwrap();
        assert_eq!(out.point, u);
        assert_eq!(out.branch, PointBranch::Positive);
    }

    #[test]
    fn point_learner_with_all_negative_labels() {
        let s = labeled(&[("000", false, 400), ("001", false, 400), ("111", false, 200)]);
        let out = learn_point(&s, 20.0, 0.1, NoiseConfig::ZERO, &RngStream::new(0)).unwrap();
        assert_eq!(out.branch, PointBranch::LowNegative);
        assert_eq!(out.point, rec("010"));
        let errors = s.iter().filter(|(x, y)| (*x == out.point) != *y).count();
        assert_eq!(errors, 0);
    }

    #[test]
    fn prefix_search_finds_the_polarizing_prefix() {
        // labels switch inside the 01 block: 010 -> 0, 011 -> 1
        let s = labeled(&[("000", false, 300), ("010", false, 200), ("011", true, 200), ("110", true, 300)]);
        assert!(polarization(&s, &[0, 1]) >= 0.2);
        assert_eq!(polarization(&s, &[0, 1, 0]), 0.0);
        let out = find_polarizing_prefix(&s, 40.0, 0.1, NoiseConfig::ZERO, &RngStream::new(0)).unwrap();
        assert_eq!(out.search_length, 2);
        assert!(out.found);
        assert_eq!(out.prefix, rec("01"));
    }

    #[test]
    fn threshold_boundary_branches() {
        let zeros = labeled(&[("010", false, 50)]);
        let ones = labeled(&[("010", true, 50)]);
        let stated = ThresholdOptions { branch_swapped: false };
        let r = RngStream::new(0);
        let out = learn_threshold(&zeros, 1.0, 0.1, stated, NoiseConfig::ZERO, &r).unwrap();
        assert_eq!((out.threshold, out.branch), (rec("000"), ThresholdBranch::FewPositives));
        let out = learn_threshold(&ones, 1.0, 0.1, stated, NoiseConfig::ZERO, &r).unwrap();
        assert_eq!((out.threshold, out.branch), (rec("111"), ThresholdBranch::FewNegatives));

        let out = learn_threshold(&zeros, 1.0, 0.1, ThresholdOptions::default(), NoiseConfig::ZERO, &r).unwrap();
        assert_eq!(out.threshold, rec("111"));
        let out = learn_threshold(&ones, 1.0, 0.1, ThresholdOptions::default(), NoiseConfig::ZERO, &r).unwrap();
        assert_eq!(threshold_error(&ones, &out.threshold), 0);
    }

    #[test]
    fn threshold_learner_recovers_split_under_zero_noise() {
        let s = labeled(&[("000", false, 300), ("010", false, 200), ("011", true, 200), ("110", true, 300)]);
        let out = learn_threshold(&s, 60.0, 0.1, ThresholdOptions::default(), NoiseConfig::ZERO, &RngStream::new(0))
            .unwrap();
        assert_eq!(out.branch, ThresholdBranch::Prefix);
        assert_eq!(threshold_error(&s, &out.threshold), 0);
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(point_sample_size(32, 1.0, 0.1, 20.0), 1597);
        assert_eq!(threshold_sample_size(16, 1.0, 0.1, 20.0), 1303);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = labeled(&[("01", true, 5)]);
        let r = RngStream::new(0);
        assert!(learn_point(&s, 1.0, 0.2, NoiseConfig::NOISY, &r).is_err());
        assert!(learn_point(&[], 1.0, 0.1, NoiseConfig::NOISY, &r).is_err());
        let ragged = vec![(rec("01"), true), (rec("011"), false)];
        assert!(learn_threshold(&ragged, 1.0, 0.1, ThresholdOptions::default(), NoiseConfig::NOISY, &r).is_err());
    }
}
