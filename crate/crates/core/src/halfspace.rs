//! Hamming-robust halfspace learning over `{−1,+1}^d`.
//!
//! The learner privatizes labels with randomized response and then runs the
//! exponential mechanism over an ℓ1 net, scored by a loss that ramps down with
//! the Hamming distance to the decision boundary. Net vectors that agree on
//! every boundary distance over the sample's points are grouped, so the
//! mechanism runs over distinct behaviours weighted by multiplicity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::mechanisms::{exponential_select, randomized_response, NoiseConfig};
use crate::rng::RngStream;
use crate::workloads::binomial;

pub const NET_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Halfspace {
    pub w: Vec<f64>,
}

impl Halfspace {
    pub fn new(w: Vec<f64>) -> Self {
        Halfspace { w }
    }

    /// `sign(⟨w, x⟩)` with `sign(0) = +1`.
    pub fn classify(&self, x: &[i8]) -> i8 {
        if inner(&self.w, x) >= 0.0 {
            1
        } else {
            -1
        }
    }
}

fn inner(w: &[f64], x: &[i8]) -> f64 {
    w.iter().zip(x).map(|(a, &b)| a * b as f64).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustLearnConfig {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub epsilon: f64,
}

impl RobustLearnConfig {
    pub fn new(gamma: f64, gamma_prime: f64, epsilon: f64) -> Result<Self> {
        if !(gamma_prime > 0.0 && gamma_prime < gamma && gamma <= 1.0) {
            return Err(Error::param(format!(
                "margins must satisfy 0 < gamma' < gamma <= 1, got gamma = {gamma}, gamma' = {gamma_prime}"
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(RobustLearnConfig { gamma, gamma_prime, epsilon })
    }

    /// Net resolution `(γ − γ′)/5`.
    pub fn nu(&self) -> f64 {
        (self.gamma - self.gamma_prime) / 5.0
    }

    /// Outer margin of the loss minimized over the net, `γ′ + ν`.
    pub fn erm_gamma(&self) -> f64 {
        self.gamma_prime + self.nu()
    }
}

/// Fewest coordinate flips of `x` that make `h` disagree with `y`; `None`
/// when no point of the cube does (e.g. `w = 0` with `y = +1`).
///
/// Flipping `j` lowers the margin `y⟨w,x⟩` by `2y·w_j·x_j` independently of
/// other flips, so taking the largest positive contributions first is optimal.
pub fn dec(x: &[i8], y: i8, w: &[f64]) -> Option<usize> {
    dec_ordered(x, y, w, &magnitude_order(w))
}

/// Coordinate indices by decreasing `|w_j|`.
fn magnitude_order(w: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()));
    order
}

fn dec_ordered(x: &[i8], y: i8, w: &[f64], order: &[usize]) -> Option<usize> {
    let yf = y as f64;
    // sign(0) = +1, so a zero margin is already wrong for y = −1
    let wrong = |margin: f64| if y == 1 { margin < 0.0 } else { margin <= 0.0 };
    let mut margin = yf * inner(w, x);
    if wrong(margin) {
        return Some(0);
    }
    let mut flips = 0;
    for &j in order {
        let contribution = yf * w[j] * x[j] as f64;
        if contribution > 0.0 {
            flips += 1;
            margin -= 2.0 * contribution;
            if wrong(margin) {
                return Some(flips);
            }
        }
    }
    None
}

/// `clip_{[0,1]}((γd − dec)/((γ − γ′)d))`; an unreachable boundary scores 0.
pub fn smoothed_loss(dec: Option<usize>, gamma: f64, gamma_prime: f64, d: usize) -> f64 {
    match dec {
        None => 0.0,
        Some(k) => {
            let d = d as f64;
            ((gamma * d - k as f64) / ((gamma - gamma_prime) * d)).clamp(0.0, 1.0)
        }
    }
}

/// Mean smoothed loss of `h` on `data`.
pub fn empirical_smoothed_loss(h: &Halfspace, data: &LabeledDataset, gamma: f64, gamma_prime: f64) -> f64 {
    let total: f64 = data
        .rows()
        .iter()
        .map(|r| smoothed_loss(dec(&r.features, r.label, &h.w), gamma, gamma_prime, data.d()))
        .sum();
    total / data.n().max(1) as f64
}

/// Fraction of rows with a misclassified point within Hamming radius `γd`.
pub fn robust_error(h: &Halfspace, data: &LabeledDataset, gamma: f64) -> f64 {
    let radius = gamma * data.d() as f64;
    let bad = data
        .rows()
        .iter()
        .filter(|r| dec(&r.features, r.label, &h.w).is_some_and(|k| k as f64 <= radius))
        .count();
    bad as f64 / data.n().max(1) as f64
}

/// Grid resolution `r = ⌈d/(2ν)⌉`.
pub fn net_resolution(d: usize, nu: f64) -> usize {
    (d as f64 / (2.0 * nu)).ceil() as usize
}

/// `Σ_k 2^k C(d,k) C(r,k)`, the number of integer vectors with `‖k‖₁ ≤ r`.
pub fn net_size(d: usize, r: usize) -> u64 {
    (0..=d.min(r))
        .map(|k| {
            let (a, b) = (binomial(d, k).unwrap_or(u64::MAX), binomial(r, k).unwrap_or(u64::MAX));
            a.saturating_mul(b).saturating_mul(1 << k.min(63))
        })
        .fold(0u64, u64::saturating_add)
}

fn check_net(d: usize, nu: f64) -> Result<usize> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::param(format!("net resolution must be positive, got {nu}")));
    }
    if d == 0 {
        return Err(Error::param("halfspaces need d >= 1"));
    }
    let r = net_resolution(d, nu);
    let size = net_size(d, r);
    if size > NET_CAP {
        return Err(Error::NetExplosion { size, cap: NET_CAP });
    }
    Ok(r)
}

/// Calls `visit` on every integer vector with coordinates in `[−r, r]` and
/// `‖k‖₁ ≤ r`, in lexicographic order of `k`.
fn for_each_net_point(d: usize, r: i64, mut visit: impl FnMut(&[i64])) {
    fn rec(k: &mut Vec<i64>, d: usize, budget: i64, visit: &mut dyn FnMut(&[i64])) {
        if k.len() == d {
            visit(k);
            return;
        }
        for v in -budget..=budget {
            k.push(v);
            rec(k, d, budget - v.abs(), visit);
            k.pop();
        }
    }
    rec(&mut Vec::with_capacity(d), d, r, &mut visit);
}

/// All grid vectors `k/r` with `‖k/r‖₁ ≤ 1`; covering radius at most `d/(2r) ≤ ν`.
pub fn build_l1_net(d: usize, nu: f64) -> Result<Vec<Halfspace>> {
    let r = check_net(d, nu)?;
    let mut out = Vec::new();
    for_each_net_point(d, r as i64, |k| {
        out.push(Halfspace::new(k.iter().map(|&v| v as f64 / r as f64).collect()))
    });
    Ok(out)
}

/// Net vectors grouped by their boundary distances on a fixed point set.
#[derive(Clone, Debug)]
pub struct NetClasses {
    d: usize,
    points: Vec<Vec<i8>>,
    index: HashMap<Vec<i8>, usize>,
    /// One representative (first in enumeration order) per class.
    pub representatives: Vec<Halfspace>,
    pub multiplicities: Vec<u64>,
    /// `dec` per class, point and label (`+1` then `−1`); `u8::MAX` for unreachable.
    decs: Vec<u8>,
}

const UNREACHABLE: u8 = u8::MAX;

fn signature(w: &[f64], points: &[Vec<i8>], out: &mut Vec<u8>) {
    out.clear();
    let order = magnitude_order(w);
    for x in points {
        for y in [1, -1] {
            out.push(dec_ordered(x, y, w, &order).map_or(UNREACHABLE, |k| k as u8));
        }
    }
}

impl NetClasses {
    /// Groups the net `N(ν)` over `points` (deduplicated, in first-seen order).
    pub fn build(d: usize, nu: f64, points: &[Vec<i8>]) -> Result<Self> {
        let r = check_net(d, nu)?;
        if d >= UNREACHABLE as usize {
            return Err(Error::param(format!("d = {d} is too wide for the net")));
        }
        let mut index = HashMap::new();
        let mut uniq = Vec::new();
        for x in points {
            if x.len() != d {
                return Err(Error::SchemaMismatch { expected: d, found: x.len() });
            }
            index.entry(x.clone()).or_insert_with(|| {
                uniq.push(x.clone());
                uniq.len() - 1
            });
        }

        let mut by_sig: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut representatives = Vec::new();
        let mut multiplicities = Vec::new();
        let mut decs = Vec::new();
        let mut sig = Vec::with_capacity(2 * uniq.len());
        let mut w = vec![0.0; d];
        for_each_net_point(d, r as i64, |k| {
            for (wj, &kj) in w.iter_mut().zip(k) {
                *wj = kj as f64;
            }
            signature(&w, &uniq, &mut sig);
            match by_sig.get(&sig) {
                Some(&c) => multiplicities[c] += 1,
                None => {
                    by_sig.insert(sig.clone(), representatives.len());
                    representatives.push(Halfspace::new(k.iter().map(|&v| v as f64 / r as f64).collect()));
                    multiplicities.push(1);
                    decs.extend_from_slice(&sig);
                }
            }
        });
        Ok(NetClasses {
            d,
            points: uniq,
            index,
            representatives,
            multiplicities,
            decs,
        })
    }

    /// Grouping over every point of `{−1,+1}^d`, reusable for any sample.
    pub fn build_over_cube(d: usize, nu: f64) -> Result<Self> {
        if d > 16 {
            return Err(Error::DomainTooLarge { d, limit: 16 });
        }
        let points: Vec<Vec<i8>> = (0..1u32 << d)
            .map(|u| (0..d).map(|j| if (u >> (d - 1 - j)) & 1 == 1 { 1 } else { -1 }).collect())
            .collect();
        Self::build(d, nu, &points)
    }

    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.multiplicities.iter().sum()
    }

    /// `|S|·L(h;S)` for every class.
    pub fn total_losses(&self, data: &LabeledDataset, gamma: f64, gamma_prime: f64) -> Result<Vec<f64>> {
        if data.d() != self.d {
            return Err(Error::SchemaMismatch { expected: self.d, found: data.d() });
        }
        let p = self.points.len();
        let mut counts = vec![0u64; 2 * p];
        for row in data.rows() {
            let i = *self
                .index
                .get(&row.features)
                .ok_or_else(|| Error::param("sample point is missing from the net's point set"))?;
            counts[2 * i + usize::from(row.label != 1)] += 1;
        }
        let active: Vec<(usize, f64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(slot, &c)| (slot, c as f64))
            .collect();
        // loss per possible dec value
        let table: Vec<f64> = (0..=u8::MAX)
            .map(|k| {
                let dec = (k != UNREACHABLE).then_some(k as usize);
                smoothed_loss(dec, gamma, gamma_prime, self.d)
            })
            .collect();
        Ok(self
            .decs
            .chunks_exact(2 * p)
            .map(|sig| active.iter().map(|&(slot, c)| c * table[sig[slot] as usize]).sum())
            .collect())
    }
}

/// Exponential mechanism with `P[h] ∝ exp(−ε·|S|·L(h;S)/(2Δ))`, `Δ = 1/((γ−γ′)d)`.
pub fn erm_exponential(
    data: &LabeledDataset,
    hypotheses: &[Halfspace],
    epsilon: f64,
    gamma: f64,
    gamma_prime: f64,
    cfg: NoiseConfig,
    r: &mut RngStream,
) -> Result<Halfspace> {
    if hypotheses.is_empty() {
        return Err(Error::param("the hypothesis list is empty"));
    }
    let scores: Vec<f64> = hypotheses
        .iter()
        .map(|h| -(data.n() as f64) * empirical_smoothed_loss(h, data, gamma, gamma_prime))
        .collect();
    let t = exponent_scale(epsilon, gamma, gamma_prime, data.d());
    let pick = exponential_select(&scores, t, cfg, r)?;
    Ok(hypotheses[pick].clone())
}

fn exponent_scale(epsilon: f64, gamma: f64, gamma_prime: f64, d: usize) -> f64 {
    epsilon * (gamma - gamma_prime) * d as f64 / 2.0
}

/// The same mechanism over grouped net classes: class `c` is drawn with
/// weight `mult_c · exp(−t·loss_c)`, which equals sampling the ungrouped net.
/// Zero-noise mode returns the lowest-index loss minimizer.
pub fn erm_exponential_classes(
    data: &LabeledDataset,
    classes: &NetClasses,
    epsilon: f64,
    gamma: f64,
    gamma_prime: f64,
    cfg: NoiseConfig,
    r: &mut RngStream,
) -> Result<Halfspace> {
    if classes.is_empty() {
        return Err(Error::param("the hypothesis list is empty"));
    }
    let losses = classes.total_losses(data, gamma, gamma_prime)?;
    if cfg.zero_noise {
        let best = losses
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, &l)| if l < b.1 { (i, l) } else { b });
        return Ok(classes.representatives[best.0].clone());
    }
    let t = exponent_scale(epsilon, gamma, gamma_prime, data.d());
    let scores: Vec<f64> = losses
        .iter()
        .zip(&classes.multiplicities)
        .map(|(l, &m)| -t * l + (m as f64).ln())
        .collect();
    let pick = exponential_select(&scores, 1.0, cfg, r)?;
    Ok(classes.representatives[pick].clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustLearnOutcome {
    pub halfspace: Halfspace,
    pub net_size: u64,
    pub classes: usize,
    pub flipped_labels: usize,
}

/// Randomized response on labels at `ε`, then the exponential mechanism at
/// `ε` over `N((γ−γ′)/5)` with loss margins `(γ′ + ν, γ′)`.
pub fn learn_halfspace_robust(
    data: &LabeledDataset,
    cfg: &RobustLearnConfig,
    noise: NoiseConfig,
    r: &RngStream,
) -> Result<RobustLearnOutcome> {
    let points: Vec<Vec<i8>> = data.rows().iter().map(|row| row.features.clone()).collect();
    let classes = NetClasses::build(data.d(), cfg.nu(), &points)?;
    learn_halfspace_with_classes(data, cfg, &classes, noise, r)
}

/// As [`learn_halfspace_robust`] with a prebuilt grouping whose point set covers `data`.
pub fn learn_halfspace_with_classes(
    data: &LabeledDataset,
    cfg: &RobustLearnConfig,
    classes: &NetClasses,
    noise: NoiseConfig,
    r: &RngStream,
) -> Result<RobustLearnOutcome> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rr = r.substream(0);
    let mut flipped = 0;
    let rows = data
        .rows()
        .iter()
        .map(|row| {
            let label = randomized_response(row.label, cfg.epsilon, noise, &mut rr)?;
            flipped += usize::from(label != row.label);
            Ok(crate::data::LabeledRow { features: row.features.clone(), label })
        })
        .collect::<Result<Vec<_>>>()?;
    let private = LabeledDataset::new(data.schema().clone(), rows)?;
    let halfspace = erm_exponential_classes(
        &private,
        classes,
        cfg.epsilon,
        cfg.erm_gamma(),
        cfg.gamma_prime,
        noise,
        &mut r.substream(1),
    )?;
    Ok(RobustLearnOutcome {
        halfspace,
        net_size: classes.total(),
        classes: classes.len(),
        flipped_labels: flipped,
    })
}

/// `c·(1/(ε√n(γ−γ′)²) + ln(1/(γ−γ′))/(ε²n(γ−γ′)))`.
pub fn robust_excess_bound(epsilon: f64, n: usize, gamma: f64, gamma_prime: f64, constant: f64) -> f64 {
    let g = gamma - gamma_prime;
    let n = n as f64;
    constant * (1.0 / (epsilon * n.sqrt() * g * g) + (1.0 / g).ln() / (epsilon * epsilon * n * g))
}
