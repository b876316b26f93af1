//! Synthetic data sources with known population quantities.

use partial_dp::halfspace::{dec, Halfspace};
use partial_dp::{Dataset, LabeledDataset, LabeledRow, AttributeSchema, Record, Result, RngStream};
use serde::{Deserialize, Serialize};

pub fn random_record(d: usize, r: &mut RngStream) -> Record {
    Record::from_bools(&(0..d).map(|_| r.bernoulli(0.5)).collect::<Vec<_>>())
}

/// `n` rows uniform over `{0,1}^d`.
pub fn uniform_rows(d: usize, n: usize, r: &mut RngStream) -> Result<Dataset> {
    Dataset::from_rows(d, (0..n).map(|_| random_record(d, r)).collect())
}

/// Distinct random records with `⌊f·n⌋` copies each; the rest uniform.
pub fn planted_rows(d: usize, n: usize, fractions: &[f64], r: &mut RngStream) -> Result<(Dataset, Vec<Record>)> {
    let mut planted: Vec<Record> = Vec::new();
    while planted.len() < fractions.len() {
        let x = random_record(d, r);
        if !planted.contains(&x) {
            planted.push(x);
        }
    }
    let mut rows = Vec::with_capacity(n);
    for (x, f) in planted.iter().zip(fractions) {
        rows.extend(std::iter::repeat_n(x.clone(), (f * n as f64).floor() as usize));
    }
    while rows.len() < n {
        rows.push(random_record(d, r));
    }
    rows.truncate(n);
    Ok((Dataset::from_rows(d, rows)?, planted))
}

/// `n` rows drawn uniformly from `size` distinct random records.
pub fn support_rows(d: usize, n: usize, size: usize, r: &mut RngStream) -> Result<(Dataset, Vec<Record>)> {
    let mut support: Vec<Record> = Vec::with_capacity(size);
    while support.len() < size {
        let x = random_record(d, r);
        if !support.contains(&x) {
            support.push(x);
        }
    }
    let rows = (0..n).map(|_| support[r.below(size as u64) as usize].clone()).collect();
    Ok((Dataset::from_rows(d, rows)?, support))
}

/// Position of `x` in lexicographic order, as a fraction of `2^d`.
pub fn lex_fraction(x: &Record) -> f64 {
    x.bits()
        .iter()
        .enumerate()
        .map(|(j, &b)| b as f64 * 0.5f64.powi(j as i32 + 1))
        .sum()
}

/// Realizable point-function distribution: `x = u` (label 1) with
/// probability `positive_mass`, otherwise uniform over the other records (label 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointTask {
    pub d: usize,
    pub target: Record,
    pub positive_mass: f64,
}

impl PointTask {
    pub fn random(d: usize, positive_mass: f64, r: &mut RngStream) -> Self {
        PointTask { d, target: random_record(d, r), positive_mass }
    }

    pub fn sample(&self, n: usize, r: &mut RngStream) -> Vec<(Record, bool)> {
        (0..n)
            .map(|_| {
                if r.bernoulli(self.positive_mass) {
                    return (self.target.clone(), true);
                }
                loop {
                    let x = random_record(self.d, r);
                    if x != self.target {
                        return (x, false);
                    }
                }
            })
            .collect()
    }

    pub fn population_error(&self, point: &Record) -> f64 {
        if *point == self.target {
            0.0
        } else {
            let others = 2f64.powi(self.d as i32) - 1.0;
            self.positive_mass + (1.0 - self.positive_mass) / others
        }
    }
}

/// Realizable threshold distribution: `x` uniform, label `x ≥ z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTask {
    pub d: usize,
    pub threshold: Record,
}

impl ThresholdTask {
    pub fn random(d: usize, r: &mut RngStream) -> Self {
        ThresholdTask { d, threshold: random_record(d, r) }
    }

    pub fn sample(&self, n: usize, r: &mut RngStream) -> Vec<(Record, bool)> {
        (0..n)
            .map(|_| {
                let x = random_record(self.d, r);
                let y = x >= self.threshold;
                (x, y)
            })
            .collect()
    }

    /// Mass of the records between `z` and the true threshold.
    pub fn population_error(&self, z: &Record) -> f64 {
        (lex_fraction(z) - lex_fraction(&self.threshold)).abs()
    }
}

/// A labeled distribution on `{−1,+1}^d` given by point masses and `P[y = +1 | x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeDistribution {
    pub d: usize,
    pub points: Vec<Vec<i8>>,
    pub mass: Vec<f64>,
    pub positive: Vec<f64>,
}

pub fn cube_point(u: u32, d: usize) -> Vec<i8> {
    (0..d).map(|j| if (u >> (d - 1 - j)) & 1 == 1 { 1 } else { -1 }).collect()
}

impl CubeDistribution {
    /// Majority-labeled cube with `concentration` of the mass on `±1_d`
    /// (split evenly) and labels flipped with probability `label_noise`.
    pub fn majority(d: usize, concentration: f64, label_noise: f64) -> Self {
        let size = 1u32 << d;
        let points: Vec<Vec<i8>> = (0..size).map(|u| cube_point(u, d)).collect();
        let base = (1.0 - concentration) / size as f64;
        let mass = (0..size)
            .map(|u| base + if u == 0 || u == size - 1 { concentration / 2.0 } else { 0.0 })
            .collect();
        let positive = points
            .iter()
            .map(|x| {
                let s: i32 = x.iter().map(|&v| v as i32).sum();
                if s >= 0 {
                    1.0 - label_noise
                } else {
                    label_noise
                }
            })
            .collect();
        CubeDistribution { d, points, mass, positive }
    }

    pub fn sample(&self, n: usize, r: &mut RngStream) -> Result<LabeledDataset> {
        let mut cdf = Vec::with_capacity(self.mass.len());
        let mut acc = 0.0;
        for m in &self.mass {
            acc += m;
            cdf.push(acc);
        }
        let rows = (0..n)
            .map(|_| {
                let u = r.uniform() * acc;
                let i = cdf.partition_point(|&c| c <= u).min(self.points.len() - 1);
                let label = if r.bernoulli(self.positive[i]) { 1 } else { -1 };
                LabeledRow { features: self.points[i].clone(), label }
            })
            .collect();
        LabeledDataset::new(AttributeSchema::with_width(self.d)?, rows)
    }

    /// `R_γ(h, D)` computed exactly over the support, with `dec` supplied by the caller.
    pub fn robust_error_with(&self, gamma: f64, dec_fn: impl Fn(&[i8], i8) -> Option<usize>) -> f64 {
        let radius = gamma * self.d as f64;
        let hit = |x: &[i8], y: i8| dec_fn(x, y).is_some_and(|k| k as f64 <= radius);
        self.points
            .iter()
            .zip(&self.mass)
            .zip(&self.positive)
            .map(|((x, m), p)| m * (p * f64::from(u8::from(hit(x, 1))) + (1.0 - p) * f64::from(u8::from(hit(x, -1)))))
            .sum()
    }

    pub fn robust_error(&self, h: &Halfspace, gamma: f64) -> f64 {
        self.robust_error_with(gamma, |x, y| dec(x, y, &h.w))
    }
}
