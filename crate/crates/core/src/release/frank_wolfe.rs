//! Euclidean projection onto the convex hull of a finite vertex set.
//!
//! Pairwise Frank–Wolfe with an explicit active set. The objective
//! `½‖x − y‖²` is 1-strongly convex, so a duality gap `g` certifies
//! `‖x − x*‖² ≤ 2g`; the loop stops once `2g ≤ tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwOptions {
    /// Bound on the squared distance to the exact projection.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions {
            tol: 1e-6,
            max_iters: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwOutcome {
    pub point: Vec<f64>,
    /// Final Frank–Wolfe duality gap.
    pub gap: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out first; `point` is then the last iterate.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn frank_wolfe_project(y: &[f64], vertices: &[Vec<f64>], opts: FwOptions) -> Result<FwOutcome> {
    if vertices.is_empty() {
        return Err(Error::param("projection needs at least one vertex"));
    }
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::param("tol and max_iters must be positive"));
    }
    let m = y.len();
    if let Some(v) = vertices.iter().find(|v| v.len() != m) {
        return Err(Error::param(format!("vertex of length {} for target of length {m}", v.len())));
    }

    let dist2 = |v: &[f64]| v.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let start = (0..vertices.len())
        .min_by(|&i, &j| dist2(&vertices[i]).total_cmp(&dist2(&vertices[j])).then(i.cmp(&j)))
        .expect("non-empty");

    let mut x = vertices[start].clone();
    let mut weights = vec![0.0; vertices.len()];
    weights[start] = 1.0;
    let mut active = vec![start];
    let mut grad = vec![0.0; m];
    let mut gap = f64::INFINITY;

    for iter in 1..=opts.max_iters {
        for k in 0..m {
            grad[k] = x[k] - y[k];
        }
        let gx = dot(&grad, &x);
        let (s, gs) = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(&grad, v)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        gap = (gx - gs).max(0.0);
        if 2.0 * gap <= opts.tol {
            return Ok(FwOutcome {
                point: x,
                gap,
                iterations: iter,
                converged: true,
            });
        }
        let a = *active
            .iter()
            .max_by(|&&i, &&j| dot(&grad, &vertices[i]).total_cmp(&dot(&grad, &vertices[j])).then(j.cmp(&i)))
            .expect("active set is never empty");

        let dir: Vec<f64> = vertices[s].iter().zip(&vertices[a]).map(|(p, q)| p - q).collect();
        let dd = dot(&dir, &dir);
        if dd == 0.0 {
            break;
        }
        let step = (-dot(&grad, &dir) / dd).clamp(0.0, weights[a]);
        for k in 0..m {
            x[k] += step * dir[k];
        }
        if weights[s] == 0.0 && step > 0.0 {
            active.push(s);
        }
        weights[s] += step;
        weights[a] -= step;
        if weights[a] <= 1e-15 {
            weights[a] = 0.0;
            active.retain(|&i| i != a);
        }
    }
    Ok(FwOutcome {
        point: x,
        gap,
        iterations: opts.max_iters,
        converged: false,
    })
}
