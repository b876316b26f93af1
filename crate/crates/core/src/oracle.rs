//! Exhaustive and noiseless reference implementations.
//!
//! Each oracle re-derives its answer by direct enumeration and avoids the
//! traversal logic of the code it checks.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::data::{hamming_distance, Dataset, LabeledDataset, Record};
use crate::error::{Error, Result};
use crate::halfspace::Halfspace;
use crate::histogram::SparseHistogram;
use crate::release::DistributionOverDomain;
use crate::rng::RngStream;
use crate::workloads::{eval_query, Diameters, Workload};

/// Largest `d` the pairwise and ball enumerations accept.
pub const ORACLE_MAX_D: usize = 12;

fn check_width(d: usize) -> Result<()> {
    if d > ORACLE_MAX_D {
        return Err(Error::DomainTooLarge { d, limit: ORACLE_MAX_D });
    }
    Ok(())
}

pub fn exact_frequencies(data: &Dataset) -> SparseHistogram {
    let mut entries = BTreeMap::new();
    for row in data.rows() {
        *entries.entry(row.clone()).or_insert(0.0) += 1.0;
    }
    SparseHistogram { entries }
}

/// Minimum flips over all `2^d` flip masks.
pub fn brute_dec(x: &[i8], y: i8, w: &[f64]) -> Option<usize> {
    let d = x.len();
    let h = Halfspace::new(w.to_vec());
    let mut best: Option<usize> = None;
    for mask in 0u64..(1 << d) {
        let z: Vec<i8> = (0..d).map(|j| if mask >> j & 1 == 1 { -x[j] } else { x[j] }).collect();
        if h.classify(&z) != y {
            let k = mask.count_ones() as usize;
            best = Some(best.map_or(k, |b| b.min(k)));
        }
    }
    best
}

/// Enumerates each row's Hamming ball of radius `⌊γd⌋` and looks for a misclassified point.
pub fn brute_robust_error(h: &Halfspace, data: &LabeledDataset, gamma: f64) -> Result<f64> {
    let d = data.d();
    check_width(d)?;
    if data.n() == 0 {
        return Ok(0.0);
    }
    let radius = (gamma * d as f64 + 1e-12).floor() as usize;
    let mut bad = 0;
    for row in data.rows() {
        let hit = (0..=radius.min(d)).any(|k| {
            (0..d).combinations(k).any(|flips| {
                let mut z = row.features.clone();
                for j in flips {
                    z[j] = -z[j];
                }
                h.classify(&z) != row.label
            })
        });
        bad += usize::from(hit);
    }
    Ok(bad as f64 / data.n() as f64)
}

/// Pairwise scan of `{0,1}^d`.
pub fn brute_diameters(w: &Workload) -> Result<Diameters> {
    let d = w.d();
    check_width(d)?;
    let records: Vec<Record> = (0..1u64 << d).map(|u| Record::from_index(u, d)).collect();
    let answers: Vec<Vec<f64>> = records
        .iter()
        .map(|x| w.queries().iter().map(|q| eval_query(q, x)).collect())
        .collect();
    let (mut delta, mut delta0) = (0.0f64, 0.0f64);
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            let dist: f64 = answers[i].iter().zip(&answers[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            delta = delta.max(dist);
            if hamming_distance(&records[i], &records[j])? == 1 {
                delta0 = delta0.max(dist);
            }
        }
    }
    Ok(Diameters { delta, delta0 })
}

/// Checks every `ℓ`-subset of queries for pairwise disjoint supports.
pub fn brute_disjoint_tuple_max_error(
    w: &Workload,
    ell: usize,
    a: &DistributionOverDomain,
    data: &Dataset,
) -> Result<f64> {
    let d = w.d();
    check_width(d)?;
    let n = data.n() as f64;
    let mut errors = Vec::with_capacity(w.m());
    for q in w.queries() {
        let synthetic: f64 = (0..1u64 << d)
            .map(|u| a.probs()[u as usize] * eval_query(q, &Record::from_index(u, d)))
            .sum();
        let truth: f64 = data.rows().iter().map(|x| eval_query(q, x)).sum::<f64>() / n;
        errors.push((synthetic - truth).abs());
    }
    let mut best: Option<f64> = None;
    for tuple in (0..w.m()).combinations(ell) {
        let disjoint = tuple.iter().tuple_combinations().all(|(&i, &j)| {
            let (a, b) = (w.queries()[i].attrs(), w.queries()[j].attrs());
            a.iter().all(|x| !b.contains(x))
        });
        if disjoint {
            let e = tuple.iter().map(|&i| errors[i]).sum::<f64>() / ell as f64;
            best = Some(best.map_or(e, |b: f64| b.max(e)));
        }
    }
    best.ok_or_else(|| Error::Precondition(format!("workload has no attribute-disjoint {ell}-tuple")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonprivateMwem {
    /// Average of the `T` iterates.
    pub probs: Vec<f64>,
    /// `max_i |q_i(A_t) − q_i(D)|` before each round's update.
    pub round_errors: Vec<f64>,
    /// Relative entropy `KL(D ‖ A_t)` before each round's update.
    pub potentials: Vec<f64>,
    pub final_max_error: f64,
}

/// MWEM with exact answers: each round updates on the lowest-index query of
/// largest error with weight `½·q(u)·(q(D) − q(A_t))`.
pub fn nonprivate_mwem(data: &Dataset, w: &Workload, rounds: usize) -> Result<NonprivateMwem> {
    let d = w.d();
    check_width(d)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let size = 1usize << d;
    let n = data.n() as f64;
    let table: Vec<Vec<f64>> = w
        .queries()
        .iter()
        .map(|q| (0..size as u64).map(|u| eval_query(q, &Record::from_index(u, d))).collect())
        .collect();
    let mut empirical = vec![0.0; size];
    for row in data.rows() {
        empirical[row.to_index() as usize] += 1.0 / n;
    }
    let truth: Vec<f64> = table.iter().map(|t| t.iter().zip(&empirical).map(|(a, b)| a * b).sum()).collect();

    let mut log_w = vec![0.0f64; size];
    let mut avg = vec![0.0; size];
    let (mut round_errors, mut potentials) = (Vec::new(), Vec::new());
    let normalize = |lw: &[f64]| {
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = lw.iter().map(|v| (v - top).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect::<Vec<f64>>()
    };
    for _ in 0..rounds {
        let probs = normalize(&log_w);
        let est: Vec<f64> = table.iter().map(|t| t.iter().zip(&probs).map(|(a, b)| a * b).sum()).collect();
        let mut pick = 0;
        let mut worst = -1.0;
        for (i, (e, t)) in est.iter().zip(&truth).enumerate() {
            if (e - t).abs() > worst {
                worst = (e - t).abs();
                pick = i;
            }
        }
        round_errors.push(worst);
        potentials.push(
            empirical
                .iter()
                .zip(&probs)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, q)| p * (p / q).ln())
                .sum(),
        );
        for (s, p) in avg.iter_mut().zip(&probs) {
            *s += p / rounds as f64;
        }
        for (u, lw) in log_w.iter_mut().enumerate() {
            *lw += 0.5 * table[pick][u] * (truth[pick] - est[pick]);
        }
    }
    let final_max_error = table
        .iter()
        .zip(&truth)
        .map(|(t, tr)| (t.iter().zip(&avg).map(|(a, b)| a * b).sum::<f64>() - tr).abs())
        .fold(0.0, f64::max);
    Ok(NonprivateMwem { probs: avg, round_errors, potentials, final_max_error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub event: String,
    pub p_hat: f64,
    pub q_hat: f64,
    /// Delta-method standard error of `ln(p̂/q̂)`; infinite when either side is 0.
    pub stderr: f64,
    pub trials: u64,
    pub count_p: u64,
    pub count_q: u64,
}

/// Occurrences needed on both sides before a ratio is asserted on.
pub const MIN_EVENT_COUNT: u64 = 100;

impl RatioEstimate {
    pub fn log_ratio(&self) -> f64 {
        (self.p_hat / self.q_hat).ln()
    }

    pub fn reliable(&self) -> bool {
        self.count_p >= MIN_EVENT_COUNT && self.count_q >= MIN_EVENT_COUNT
    }
}

/// Number of attributes in which the single differing row differs (0 when
/// the datasets are equal); fails unless at most one row differs.
pub fn neighbor_distance(a: &Dataset, b: &Dataset) -> Result<usize> {
    if a.d() != b.d() || a.n() != b.n() {
        return Err(Error::NotNeighboring(format!(
            "shapes differ: {}x{} vs {}x{}",
            a.n(),
            a.d(),
            b.n(),
            b.d()
        )));
    }
    let mut differing = a.rows().iter().zip(b.rows()).filter(|(x, y)| x != y);
    let dist = match differing.next() {
        None => 0,
        Some((x, y)) => hamming_distance(x, y)?,
    };
    if differing.next().is_some() {
        return Err(Error::NotNeighboring("more than one row differs".into()));
    }
    Ok(dist)
}

fn tabulate<M>(mechanism: &M, data: &Dataset, trials: u64, r: &RngStream) -> Result<BTreeMap<String, u64>>
where
    M: Fn(&Dataset, &mut RngStream) -> Result<String> + Sync,
{
    let run = |t: u64| mechanism(data, &mut r.substream(t));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials)
            .into_par_iter()
            .try_fold(BTreeMap::new, |mut acc, t| {
                *acc.entry(run(t)?).or_insert(0) += 1;
                Ok(acc)
            })
            .try_reduce(BTreeMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                Ok(a)
            })
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut acc = BTreeMap::new();
        for t in 0..trials {
            *acc.entry(run(t)?).or_insert(0) += 1;
        }
        Ok(acc)
    }
}

/// Runs `mechanism` `trials` times on each dataset (substreams 0 and 1 of `r`)
/// and reports every realized output with its two frequencies, sorted by event.
pub fn mc_privacy_ratio<M>(
    mechanism: M,
    d: &Dataset,
    d_prime: &Dataset,
    trials: u64,
    r: &RngStream,
) -> Result<Vec<RatioEstimate>>
where
    M: Fn(&Dataset, &mut RngStream) -> Result<String> + Sync,
{
    neighbor_distance(d, d_prime)?;
    if trials == 0 {
        return Err(Error::param("trials must be positive"));
    }
    let p = tabulate(&mechanism, d, trials, &r.substream(0))?;
    let q = tabulate(&mechanism, d_prime, trials, &r.substream(1))?;
    let events: std::collections::BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let nt = trials as f64;
    Ok(events
        .into_iter()
        .map(|e| {
            let cp = p.get(e).copied().unwrap_or(0);
            let cq = q.get(e).copied().unwrap_or(0);
            let (ph, qh) = (cp as f64 / nt, cq as f64 / nt);
            let stderr = if cp == 0 || cq == 0 {
                f64::INFINITY
            } else {
                ((1.0 - ph) / cp as f64 + (1.0 - qh) / cq as f64).sqrt()
            };
            RatioEstimate {
                event: e.clone(),
                p_hat: ph,
                q_hat: qh,
                stderr,
                trials,
                count_p: cp,
                count_q: cq,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledRow;
    use crate::halfspace::{dec, robust_error};
    use crate::histogram::{priv_heavy_hitter, HeavyHitterParams};
    use crate::mechanisms::{randomized_response, NoiseConfig};
    use crate::release::{disjoint_tuple_max_error, mwem, MwemParams};
    use crate::workloads::{diameters, kway_marginal_workload, MarginalKind, Query};

    fn rec(s: &str) -> Record {
        s.parse().unwrap()
    }

    #[test]
    fn frequencies() {
        let data = Dataset::from_rows(2, vec![rec("11"), rec("11"), rec("00")]).unwrap();
        let f = exact_frequencies(&data);
        assert_eq!(f.get(&rec("11")), 2.0);
        assert_eq!(f.get(&rec("00")), 1.0);
        assert_eq!(f.len(), 2);
        assert!(exact_frequencies(&Dataset::from_rows(2, vec![]).unwrap()).is_empty());
        let same = Dataset::from_rows(3, vec![rec("101"); 7]).unwrap();
        assert_eq!(exact_frequencies(&same).entries.into_iter().collect::<Vec<_>>(), vec![(rec("101"), 7.0)]);
    }

    #[test]
    fn brute_dec_agrees_with_greedy() {
        assert_eq!(brute_dec(&[1; 5], 1, &[3.0, 1.0, 1.0, 1.0, 1.0]), Some(2));
        let mut r = RngStream::new(33);
        for _ in 0..2000 {
            let d = 1 + r.below(6) as usize;
            let w: Vec<f64> = (0..d).map(|_| r.uniform() * 2.0 - 1.0).collect();
            let x: Vec<i8> = (0..d).map(|_| if r.bernoulli(0.5) { 1 } else { -1 }).collect();
            let y = if r.bernoulli(0.5) { 1 } else { -1 };
            assert_eq!(brute_dec(&x, y, &w), dec(&x, y, &w));
        }
    }

    #[test]
    fn robust_error_matches_ball_enumeration() {
        let mut r = RngStream::new(12);
        let d = 6;
        for _ in 0..20 {
            let rows = (0..20)
                .map(|_| LabeledRow {
                    features: (0..d).map(|_| if r.bernoulli(0.5) { 1 } else { -1 }).collect(),
                    label: if r.bernoulli(0.5) { 1 } else { -1 },
                })
                .collect();
            let data = LabeledDataset::new(crate::data::AttributeSchema::with_width(d).unwrap(), rows).unwrap();
            let h = Halfspace::new((0..d).map(|_| r.below(5) as f64 - 2.0).collect());
            for gamma in [0.0, 0.2, 0.34, 0.5, 1.0] {
                assert_eq!(robust_error(&h, &data, gamma), brute_robust_error(&h, &data, gamma).unwrap());
            }
        }
    }

    #[test]
    fn diameters_agree_for_conjunctions_and_parity_delta0() {
        for (d, k) in [(3, 1), (4, 2), (5, 2), (5, 3)] {
            let w = kway_marginal_workload(d, k, MarginalKind::Conjunction).unwrap();
            let (a, b) = (diameters(&w).unwrap(), brute_diameters(&w).unwrap());
            assert!((a.delta - b.delta).abs() < 1e-12 && (a.delta0 - b.delta0).abs() < 1e-12);
            let p = kway_marginal_workload(d, k, MarginalKind::Parity).unwrap();
            let (a, b) = (diameters(&p).unwrap(), brute_diameters(&p).unwrap());
            assert!((a.delta0 - b.delta0).abs() < 1e-12);
            assert!(b.delta <= a.delta + 1e-12);
        }
        let w = Workload::new(3, vec![Query::parity(vec![0, 2]).unwrap(), Query::conjunction(vec![1]).unwrap()]).unwrap();
        assert_eq!(diameters(&w).unwrap(), brute_diameters(&w).unwrap());
    }

    #[test]
    fn tuple_error_agrees() {
        let w = kway_marginal_workload(5, 2, MarginalKind::Conjunction).unwrap();
        let mut r = RngStream::new(2);
        let data = Dataset::from_rows(5, (0..40).map(|_| Record::from_index(r.below(32), 5)).collect()).unwrap();
        let probs: Vec<f64> = (0..32).map(|_| r.uniform()).collect();
        let total: f64 = probs.iter().sum();
        let a = DistributionOverDomain::from_probs(5, probs.iter().map(|p| p / total).collect()).unwrap();
        for ell in 1..=2 {
            let x = disjoint_tuple_max_error(&w, ell, &a, &data).unwrap();
            let y = brute_disjoint_tuple_max_error(&w, ell, &a, &data).unwrap();
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_mwem_tracks_the_oracle_bound() {
        let w = kway_marginal_workload(4, 1, MarginalKind::Conjunction).unwrap();
        let data = Dataset::from_rows(4, vec![rec("1100"), rec("1010"), rec("1111"), rec("0001")]).unwrap();
        let rounds = 400;
        let oracle = nonprivate_mwem(&data, &w, rounds).unwrap();
        assert!(oracle.potentials.windows(2).all(|p| p[1] <= p[0] + 1e-12));
        // the average of T iterates has max error at most sqrt(8 ln|X| / T)
        let bound = (8.0 * 4.0 * std::f64::consts::LN_2 / rounds as f64).sqrt();
        assert!(oracle.final_max_error <= bound, "{}", oracle.final_max_error);
        let private = mwem(&data, &w, &MwemParams::new(1.0, rounds, 1), NoiseConfig::ZERO, &mut RngStream::new(0)).unwrap();
        let truth = crate::workloads::eval_workload(&w, &data).unwrap();
        let err = private.answers.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= bound, "{err}");
        for (a, b) in private.synthetic.probs().iter().zip(&oracle.probs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn neighbor_checks() {
        let a = Dataset::from_rows(2, vec![rec("00"), rec("01")]).unwrap();
        let b = Dataset::from_rows(2, vec![rec("11"), rec("01")]).unwrap();
        let c = Dataset::from_rows(2, vec![rec("11"), rec("00")]).unwrap();
        assert_eq!(neighbor_distance(&a, &a).unwrap(), 0);
        assert_eq!(neighbor_distance(&a, &b).unwrap(), 2);
        assert!(matches!(neighbor_distance(&a, &c), Err(Error::NotNeighboring(_))));
        let m = |_: &Dataset, _: &mut RngStream| Ok(String::new());
        assert!(mc_privacy_ratio(m, &a, &c, 10, &RngStream::new(0)).is_err());
    }

    #[test]
    fn identical_datasets_give_matching_frequencies() {
        let a = Dataset::from_rows(2, vec![rec("00"), rec("01"), rec("11")]).unwrap();
        let params = HeavyHitterParams::for_budget(2.0, 0.1, 3).unwrap();
        let m = |data: &Dataset, r: &mut RngStream| {
            let out = priv_heavy_hitter(data, &params, NoiseConfig::NOISY, r)?;
            Ok(out.list.iter().map(|x| x.to_string()).join(","))
        };
        let est = mc_privacy_ratio(m, &a, &a, 50_000, &RngStream::new(4)).unwrap();
        for e in est.iter().filter(|e| e.reliable()) {
            assert!(e.log_ratio().abs() <= 3.0 * e.stderr, "{e:?}");
        }
    }

    #[test]
    fn randomized_response_ratio_is_epsilon() {
        let a = Dataset::from_rows(1, vec![rec("1")]).unwrap();
        let b = Dataset::from_rows(1, vec![rec("0")]).unwrap();
        let m = |data: &Dataset, r: &mut RngStream| {
            let label = if data.rows()[0].bit(0) { 1 } else { -1 };
            Ok(randomized_response(label, 1.0, NoiseConfig::NOISY, r)?.to_string())
        };
        let est = mc_privacy_ratio(m, &a, &b, 1_000_000, &RngStream::new(6)).unwrap();
        let top = est.iter().map(|e| e.log_ratio().abs()).fold(0.0, f64::max);
        let se = est.iter().map(|e| e.stderr).fold(0.0, f64::max);
        assert!(top >= 0.95 - 3.0 * se && top <= 1.05 + 3.0 * se, "{top} ± {se}");
    }
}
