//! Grids of experiment runs along one parameter axis.

use partial_dp::{NoiseConfig, RngStream};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Axis, Mechanism, SweepConfig};
use crate::error::CliError;
use crate::experiments::{plan, run_experiment, Experiment, RunOptions};
use crate::report::{csv_err, finish_csv, fmt_num, pretty, Format, Summary};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: usize,
    pub metric: Summary,
    pub bound: Option<f64>,
    pub baseline: Option<Summary>,
    pub eps: f64,
    pub eps0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trend {
    pub metric_loglog_slope: Option<f64>,
    pub baseline_loglog_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub command: &'static str,
    pub mechanism: Mechanism,
    pub axis: Axis,
    pub metric: String,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
    pub trend: Trend,
}

pub const SWEEP_CSV_HEADER: [&str; 16] = [
    "axis", "value", "trials", "metric", "mean", "std", "min", "q25", "median", "q75", "max", "bound",
    "baseline_mean", "baseline_std", "eps", "eps0",
];

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::N => "n",
        Axis::D => "d",
        Axis::K => "k",
        Axis::Eps0 => "eps0",
        Axis::Nu => "nu",
        Axis::GammaGap => "gamma_gap",
    }
}

fn set_field(base: &mut Value, path: &[&str], v: Value, axis: Axis) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = base;
    for p in parents {
        cur = cur
            .get_mut(*p)
            .ok_or_else(|| CliError::config(format!("axis {} needs base.{p}", axis_name(axis))))?;
    }
    let slot = cur
        .get_mut(*last)
        .ok_or_else(|| CliError::config(format!("axis {} needs base.{}", axis_name(axis), path.join("."))))?;
    *slot = v;
    Ok(())
}

fn as_count(axis: Axis, v: f64) -> Result<Value, CliError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(json!(v as u64))
    } else {
        Err(CliError::config(format!("axis {} takes positive integers, got {v}", axis_name(axis))))
    }
}

/// `base` with the axis parameter set to `v`.
pub fn grid_config(mechanism: Mechanism, axis: Axis, base: &Value, v: f64) -> Result<Value, CliError> {
    let mut cfg = base.clone();
    match axis {
        Axis::N => set_field(&mut cfg, &["data", "n"], as_count(axis, v)?, axis)?,
        Axis::D => set_field(&mut cfg, &["data", "d"], as_count(axis, v)?, axis)?,
        Axis::K => set_field(&mut cfg, &["workload", "k"], as_count(axis, v)?, axis)?,
        Axis::Eps0 => {
            let field = match mechanism {
                Mechanism::Mwem => "eps0",
                Mechanism::MarginalsProjection => {
                    return Err(CliError::config(
                        "marginals-projection is parametrised by sigma; sweep n, d or k instead",
                    ))
                }
                _ => "epsilon",
            };
            set_field(&mut cfg, &[field], json!(v), axis)?
        }
        Axis::Nu => set_field(&mut cfg, &["nu"], json!(v), axis)?,
        Axis::GammaGap => {
            let gamma = cfg
                .get("gamma")
                .and_then(Value::as_f64)
                .ok_or_else(|| CliError::config("axis gamma_gap needs a numeric base.gamma"))?;
            set_field(&mut cfg, &["gamma_prime"], json!(gamma - v), axis)?
        }
    }
    Ok(cfg)
}

/// Least-squares slope of `ln y` on `ln x`; `None` unless every pair is positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn baseline_summary(exp: &dyn Experiment, root: &RngStream, trials: usize, noise: NoiseConfig) -> Result<Option<Summary>, CliError> {
    let values: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| match exp.baseline(&root.substream(i as u64), noise) {
            None => Ok(None),
            Some(r) => r
                .map(Some)
                .map_err(|e| CliError::runtime(format!("baseline trial {i}: {e}"))),
        })
        .collect::<Result<_, CliError>>()?;
    if values.iter().any(Option::is_none) {
        return Ok(None);
    }
    Ok(Some(Summary::of(&values.into_iter().flatten().collect::<Vec<_>>())))
}

/// Grid point `g` uses streams `(seed, g, trial)`. Every grid point is
/// validated before the first trial runs.
pub fn run_sweep(cfg: &SweepConfig, seed: u64, opts: RunOptions) -> Result<SweepReport, CliError> {
    if cfg.values.is_empty() {
        return Err(CliError::config("sweep grid is empty: `values` needs at least one entry"));
    }
    let experiments = cfg
        .values
        .iter()
        .map(|&v| {
            let c = grid_config(cfg.mechanism, cfg.axis, &cfg.base, v)?;
            plan(&cfg.mechanism.parse_config(c)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for exp in &experiments {
        exp.ledger()?;
    }
    let metric = experiments[0].primary().to_string();
    let mut points = Vec::with_capacity(experiments.len());
    for (g, (exp, &value)) in experiments.iter().zip(&cfg.values).enumerate() {
        let root = RngStream::at(seed, vec![g as u64]);
        let report = run_experiment(exp.as_ref(), &root, opts)?;
        let mean_of = |c: &str| report.summary(c).map_or(f64::NAN, |s| s.mean);
        points.push(SweepPoint {
            value,
            trials: opts.trials,
            metric: report.summary(&metric).expect("primary metric is a column"),
            bound: report.bound.as_ref().map(|b| b.value),
            baseline: baseline_summary(exp.as_ref(), &root, opts.trials, opts.noise)?,
            eps: mean_of("eps"),
            eps0: mean_of("eps0"),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.value).collect();
    let means: Vec<f64> = points.iter().map(|p| p.metric.mean).collect();
    let baseline: Option<Vec<f64>> = points.iter().map(|p| p.baseline.map(|b| b.mean)).collect();
    Ok(SweepReport {
        command: "sweep",
        mechanism: cfg.mechanism,
        axis: cfg.axis,
        metric,
        seed,
        trend: Trend {
            metric_loglog_slope: loglog_slope(&xs, &means),
            baseline_loglog_slope: baseline.and_then(|b| loglog_slope(&xs, &b)),
        },
        points,
    })
}

impl SweepReport {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(pretty(&serde_json::to_value(self).expect("sweep reports serialize"))),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
                for p in &self.points {
                    let mut rec = vec![
                        axis_name(self.axis).to_string(),
                        fmt_num(p.value),
                        p.trials.to_string(),
                        self.metric.clone(),
                    ];
                    rec.extend(p.metric.values().iter().map(|v| fmt_num(*v)));
                    rec.push(p.bound.map(fmt_num).unwrap_or_default());
                    rec.push(p.baseline.map(|b| fmt_num(b.mean)).unwrap_or_default());
                    rec.push(p.baseline.map(|b| fmt_num(b.std)).unwrap_or_default());
                    rec.push(fmt_num(p.eps));
                    rec.push(fmt_num(p.eps0));
                    w.write_record(&rec).map_err(csv_err)?;
                }
                finish_csv(w)
            }
        }
    }
}
