//! Statistical query workloads over binary records.
//!
//! Attribute indices are 0-based. A `table` query is indexed by the selected
//! bits read as a binary number with the first listed attribute most
//! significant.

use std::collections::HashSet;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};

/// Largest `d` for which diameters are computed by enumerating `{0,1}^d`.
pub const BRUTE_FORCE_MAX_D: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QueryKind {
    /// XOR of the selected bits.
    Parity,
    /// AND of the selected bits.
    Conjunction,
    Table { values: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Parity,
    Conjunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuery")]
pub struct Query {
    attrs: Vec<usize>,
    kind: QueryKind,
}

#[derive(Deserialize)]
struct RawQuery {
    attrs: Vec<usize>,
    kind: QueryKind,
}

impl TryFrom<RawQuery> for Query {
    type Error = Error;

    fn try_from(raw: RawQuery) -> Result<Self> {
        Query::new(raw.attrs, raw.kind)
    }
}

impl Query {
    pub fn new(mut attrs: Vec<usize>, kind: QueryKind) -> Result<Self> {
        if attrs.is_empty() {
            return Err(Error::param("a query needs at least one attribute"));
        }
        attrs.sort_unstable();
        if attrs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param(format!("duplicate attribute in query {attrs:?}")));
        }
        if let QueryKind::Table { values } = &kind {
            if attrs.len() >= 32 || values.len() != 1usize << attrs.len() {
                return Err(Error::param(format!(
                    "table over {} attributes must have {} entries, found {}",
                    attrs.len(),
                    1u64 << attrs.len().min(63),
                    values.len()
                )));
            }
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param("table values must lie in [0, 1]"));
            }
        }
        Ok(Query { attrs, kind })
    }

    pub fn parity(attrs: Vec<usize>) -> Result<Self> {
        Query::new(attrs, QueryKind::Parity)
    }

    pub fn conjunction(attrs: Vec<usize>) -> Result<Self> {
        Query::new(attrs, QueryKind::Conjunction)
    }

    pub fn table(attrs: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Query::new(attrs, QueryKind::Table { values })
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn kind(&self) -> &QueryKind {
        &self.kind
    }

    /// Evaluates the query on a selector `bit(j)` for attribute `j`.
    fn eval_with(&self, bit: impl Fn(usize) -> bool) -> f64 {
        match &self.kind {
            QueryKind::Parity => {
                let ones = self.attrs.iter().filter(|&&j| bit(j)).count();
                (ones % 2) as f64
            }
            QueryKind::Conjunction => {
                if self.attrs.iter().all(|&j| bit(j)) {
                    1.0
                } else {
                    0.0
                }
            }
            QueryKind::Table { values } => {
                let idx = self
                    .attrs
                    .iter()
                    .fold(0usize, |acc, &j| (acc << 1) | bit(j) as usize);
                values[idx]
            }
        }
    }

    pub fn eval(&self, x: &Record) -> f64 {
        self.eval_with(|j| x.bit(j))
    }

    /// Evaluates on the record whose index in `{0,1}^d` is `u` (attribute 0
    /// is the most significant bit).
    pub fn eval_index(&self, u: u64, d: usize) -> f64 {
        self.eval_with(|j| (u >> (d - 1 - j)) & 1 == 1)
    }
}

pub fn eval_query(q: &Query, x: &Record) -> f64 {
    q.eval(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum WorkloadSpec {
    Kway { d: usize, k: usize, query: MarginalKind },
    Explicit { d: usize, queries: Vec<Query> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorkloadSpec", into = "WorkloadSpec")]
pub struct Workload {
    d: usize,
    queries: Vec<Query>,
}

impl TryFrom<WorkloadSpec> for Workload {
    type Error = Error;

    fn try_from(spec: WorkloadSpec) -> Result<Self> {
        match spec {
            WorkloadSpec::Kway { d, k, query } => kway_marginal_workload(d, k, query),
            WorkloadSpec::Explicit { d, queries } => Workload::new(d, queries),
        }
    }
}

impl From<Workload> for WorkloadSpec {
    fn from(w: Workload) -> Self {
        let canonical_order = w.queries.windows(2).all(|p| p[0].attrs < p[1].attrs);
        match w.marginal_shape().filter(|_| canonical_order) {
            Some((k, query)) => WorkloadSpec::Kway { d: w.d, k, query },
            None => WorkloadSpec::Explicit {
                d: w.d,
                queries: w.queries,
            },
        }
    }
}

impl Workload {
    pub fn new(d: usize, queries: Vec<Query>) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("workload dimension must be positive"));
        }
        if queries.is_empty() {
            return Err(Error::param("workload must contain at least one query"));
        }
        for q in &queries {
            if let Some(&j) = q.attrs.last().filter(|&&j| j >= d) {
                return Err(Error::param(format!("query attribute {j} outside [0, {d})")));
            }
        }
        Ok(Workload { d, queries })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.queries.len()
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    /// Answer vector `(q_j(x))_j` for a single record.
    pub fn eval_record(&self, x: &Record) -> Vec<f64> {
        self.queries.iter().map(|q| q.eval(x)).collect()
    }

    /// `Some((k, kind))` when the workload is exactly one query of a single
    /// marginal kind per `k`-subset of `[d]`, in any order.
    pub fn marginal_shape(&self) -> Option<(usize, MarginalKind)> {
        let first = self.queries.first()?;
        let k = first.attrs.len();
        let kind = match first.kind {
            QueryKind::Parity => MarginalKind::Parity,
            QueryKind::Conjunction => MarginalKind::Conjunction,
            QueryKind::Table { .. } => return None,
        };
        let same_kind = |q: &Query| match kind {
            MarginalKind::Parity => q.kind == QueryKind::Parity,
            MarginalKind::Conjunction => q.kind == QueryKind::Conjunction,
        };
        if !self.queries.iter().all(|q| q.attrs.len() == k && same_kind(q)) {
            return None;
        }
        if binomial(self.d, k) != Some(self.queries.len() as u64) {
            return None;
        }
        let distinct: HashSet<&[usize]> = self.queries.iter().map(|q| q.attrs.as_slice()).collect();
        (distinct.len() == self.queries.len()).then_some((k, kind))
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// `Q(D)`: the mean of each query over the rows.
pub fn eval_workload(w: &Workload, data: &Dataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.d() != w.d() {
        return Err(Error::SchemaMismatch {
            expected: w.d(),
            found: data.d(),
        });
    }
    let n = data.n() as f64;
    Ok(w.queries
        .iter()
        .map(|q| data.rows().iter().map(|x| q.eval(x)).sum::<f64>() / n)
        .collect())
}

/// All `k`-way marginals of one kind, subsets in lexicographic order.
pub fn kway_marginal_workload(d: usize, k: usize, kind: MarginalKind) -> Result<Workload> {
    if k == 0 || k > d {
        return Err(Error::param(format!("k must lie in [1, d] = [1, {d}], got {k}")));
    }
    let qk = match kind {
        MarginalKind::Parity => QueryKind::Parity,
        MarginalKind::Conjunction => QueryKind::Conjunction,
    };
    let queries = (0..d)
        .combinations(k)
        .map(|attrs| Query {
            attrs,
            kind: qk.clone(),
        })
        .collect();
    Workload::new(d, queries)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diameters {
    /// `sup ‖Q(x) − Q(x′)‖₂` over all record pairs.
    pub delta: f64,
    /// The same supremum over pairs differing in one attribute.
    pub delta0: f64,
}

/// Closed form for full marginal workloads, enumeration of `{0,1}^d` otherwise.
///
/// The closed form `Δ = √m` is attained by conjunctions. For parities it is
/// an upper bound (two records disagree on at most `s(d − s)` pairwise
/// parities when they differ in `s` attributes), so the reported parameters
/// stay valid but can be conservative. `Δ0` is exact for both kinds.
pub fn diameters(w: &Workload) -> Result<Diameters> {
    if let Some((k, _)) = w.marginal_shape() {
        let m = w.m() as f64;
        let per_attr = binomial(w.d() - 1, k - 1).map_or(f64::INFINITY, |c| c as f64);
        return Ok(Diameters {
            delta: m.sqrt(),
            delta0: per_attr.sqrt(),
        });
    }
    diameters_by_enumeration(w)
}

pub fn diameters_by_enumeration(w: &Workload) -> Result<Diameters> {
    let d = w.d();
    if d > BRUTE_FORCE_MAX_D {
        return Err(Error::DomainTooLarge {
            d,
            limit: BRUTE_FORCE_MAX_D,
        });
    }
    let size = 1u64 << d;
    let answers: Vec<Vec<f64>> = (0..size)
        .map(|u| w.queries.iter().map(|q| q.eval_index(u, d)).collect())
        .collect();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();

    let mut delta0_sq = 0.0f64;
    for u in 0..size {
        for j in 0..d {
            let v = u ^ (1 << j);
            if v > u {
                delta0_sq = delta0_sq.max(dist2(&answers[u as usize], &answers[v as usize]));
            }
        }
    }

    let mut unique: Vec<&Vec<f64>> = Vec::new();
    let mut seen = HashSet::new();
    for a in &answers {
        if seen.insert(a.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()) {
            unique.push(a);
        }
    }
    let mut delta_sq = 0.0f64;
    for (i, a) in unique.iter().enumerate() {
        for b in &unique[i + 1..] {
            delta_sq = delta_sq.max(dist2(a, b));
        }
    }
    Ok(Diameters {
        delta: delta_sq.sqrt(),
        delta0: delta0_sq.sqrt(),
    })
}
