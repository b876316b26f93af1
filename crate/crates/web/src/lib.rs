//! wasm-bindgen exports for `www/index.html`. Every function returns a JSON
//! string, or throws a string describing the rejected input.

use partial_dp::accountant::{zcdp_epsilon_simple, zcdp_to_approx_dp_tight};
use partial_dp::histogram::priv_histogram;
use partial_dp::oracle::exact_frequencies;
use partial_dp::release::{projection_mechanism, projection_mse_bound, FwOptions};
use partial_dp::workloads::{diameters, eval_workload, kway_marginal_workload, MarginalKind};
use partial_dp::{Dataset, NoiseConfig, Record, RngStream};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_D: usize = 24;

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn random_record(d: usize, r: &mut RngStream) -> Record {
    Record::new((0..d).map(|_| r.bernoulli(0.5) as u8).collect()).expect("bits are 0/1")
}

/// Tight and simple `(ε, δ)` for each `ρ`, plus the per-attribute view
/// `ε0 = √(2ρ)/d`.
#[wasm_bindgen]
pub fn epsilon_curve(rhos: Vec<f64>, delta: f64, d: usize) -> Result<String, JsValue> {
    if d == 0 {
        return Err(err("d must be at least 1"));
    }
    let points = rhos
        .iter()
        .map(|&rho| {
            Ok(json!({
                "rho": rho,
                "epsilon_tight": zcdp_to_approx_dp_tight(rho, delta).map_err(err)?,
                "epsilon_simple": zcdp_epsilon_simple(rho, delta).map_err(err)?,
                "eps0": (2.0 * rho).sqrt() / d as f64,
            }))
        })
        .collect::<Result<Vec<_>, JsValue>>()?;
    Ok(json!({ "delta": delta, "d": d, "points": points }).to_string())
}

/// Plants records with the given fractions in uniform background rows, runs
/// the private histogram and reports true and estimated counts.
#[wasm_bindgen]
pub fn heavy_hitters_demo(d: usize, n: usize, fractions: Vec<f64>, epsilon: f64, nu: f64, seed: u64) -> Result<String, JsValue> {
    if d == 0 || d > MAX_D {
        return Err(err(format!("d must lie in 1..={MAX_D}, got {d}")));
    }
    if fractions.iter().any(|f| !(*f > 0.0)) || fractions.iter().sum::<f64>() > 1.0 {
        return Err(err("fractions must be positive and sum to at most 1"));
    }
    if fractions.len() as f64 > (d as f64).exp2() {
        return Err(err("more planted records than the domain holds"));
    }
    let root = RngStream::new(seed);
    let mut r = root.substream(0);
    let mut planted: Vec<Record> = Vec::new();
    while planted.len() < fractions.len() {
        let x = random_record(d, &mut r);
        if !planted.contains(&x) {
            planted.push(x);
        }
    }
    let mut rows = Vec::with_capacity(n);
    for (x, f) in planted.iter().zip(&fractions) {
        rows.extend(std::iter::repeat_n(x.clone(), (f * n as f64).floor() as usize));
    }
    while rows.len() < n {
        rows.push(random_record(d, &mut r));
    }
    rows.truncate(n);
    let data = Dataset::from_rows(d, rows).map_err(err)?;

    let out = priv_histogram(&data, epsilon, nu, 0.1, NoiseConfig::default(), &root.substream(1)).map_err(err)?;
    let truth = exact_frequencies(&data);
    let records: Vec<_> = out
        .histogram
        .entries
        .iter()
        .map(|(x, est)| json!({ "record": x.to_string(), "estimate": est, "count": truth.get(x) }))
        .collect();
    let planted: Vec<_> = planted
        .iter()
        .map(|x| json!({ "record": x.to_string(), "count": truth.get(x), "estimate": out.histogram.get(x) }))
        .collect();
    Ok(json!({
        "listed": records,
        "planted": planted,
        "max_abs_error": out.histogram.max_abs_error(&truth),
        "lambda": out.params.lambda,
        "mu": out.params.mu,
        "warning": out.warning,
    })
    .to_string())
}

/// Projection mechanism on uniform data for each σ: per-query squared error
/// against the bound, with the resulting ε and ε0.
#[wasm_bindgen]
pub fn projection_demo(d: usize, k: usize, n: usize, parity: bool, sigmas: Vec<f64>, seed: u64) -> Result<String, JsValue> {
    if d == 0 || d > 12 {
        return Err(err(format!("d must lie in 1..=12, got {d}")));
    }
    let kind = if parity { MarginalKind::Parity } else { MarginalKind::Conjunction };
    let w = kway_marginal_workload(d, k, kind).map_err(err)?;
    let root = RngStream::new(seed);
    let mut r = root.substream(0);
    let data = Dataset::from_rows(d, (0..n).map(|_| random_record(d, &mut r)).collect()).map_err(err)?;
    let truth = eval_workload(&w, &data).map_err(err)?;
    let delta = diameters(&w).map_err(err)?.delta;
    let points = sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let mut noise = root.substream(1).substream(i as u64);
            let out = projection_mechanism(&data, &w, sigma, FwOptions::default(), NoiseConfig::default(), &mut noise)
                .map_err(err)?;
            let sq = |v: &[f64]| v.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / w.m() as f64;
            Ok(json!({
                "sigma": sigma,
                "mse": sq(&out.answers),
                "mse_before_projection": sq(&out.noisy),
                "bound": projection_mse_bound(sigma, delta, d, w.m()),
                "epsilon": out.epsilon,
                "eps0": out.eps0,
            }))
        })
        .collect::<Result<Vec<_>, JsValue>>()?;
    Ok(json!({ "d": d, "k": k, "n": n, "m": w.m(), "points": points }).to_string())
}
