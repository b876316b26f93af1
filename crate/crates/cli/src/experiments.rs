//! One validated experiment per mechanism subcommand, and the trial runner.

use std::time::Instant;

use partial_dp::accountant::{compose_parallel, Budget, PrivacyMetric};
use partial_dp::halfspace::{learn_halfspace_with_classes, robust_error, robust_excess_bound, NetClasses, RobustLearnConfig};
use partial_dp::histogram::{
    estimate_distribution, learn_point, learn_threshold, priv_histogram, threshold_error, HeavyHitterParams,
    SparseHistogram, ThresholdOptions,
};
use partial_dp::oracle::exact_frequencies;
use partial_dp::release::{
    default_rounds, disjoint_tuple_max_error, enumerate_disjoint_tuples, mwem, mwem_error_bound, projection_mechanism,
    projection_mse_bound, MwemParams, DEFAULT_TUPLE_CAP, MAX_DOMAIN_D,
};
use partial_dp::workloads::{diameters, eval_workload, kway_marginal_workload, Diameters, Workload, BRUTE_FORCE_MAX_D};
use partial_dp::{LabeledDataset, NoiseConfig, Record, RngStream};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::*;
use crate::error::CliError;
use crate::report::{Bound, BudgetLedger, Report, TrialRow};

pub struct TrialOut {
    pub values: Vec<f64>,
    pub output: Option<Value>,
}

/// A mechanism with validated parameters, ready to run trials.
pub trait Experiment: Sync {
    fn command(&self) -> &'static str;
    fn config(&self) -> Value;
    fn columns(&self) -> Vec<&'static str>;
    /// The error metric the sweep aggregates and the bound refers to.
    fn primary(&self) -> &'static str;
    fn ledger(&self) -> Result<BudgetLedger, CliError>;
    fn bound(&self) -> Option<f64>;
    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
    /// Data come from `r.substream(0)`, mechanism noise from `r.substream(1)`.
    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut>;
    /// Primary metric of the standard-DP comparison mechanism on the same trial data.
    fn baseline(&self, _r: &RngStream, _noise: NoiseConfig) -> Option<partial_dp::Result<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub trials: usize,
    pub noise: NoiseConfig,
    pub timing: bool,
}

pub fn seed_path(r: &RngStream) -> String {
    let mut s = r.seed().to_string();
    for p in r.path() {
        s.push('/');
        s.push_str(&p.to_string());
    }
    s
}

/// Runs trials `0..trials` on `root.substream(i)`; rows come back in trial order.
pub fn run_experiment(exp: &dyn Experiment, root: &RngStream, opts: RunOptions) -> Result<Report, CliError> {
    if opts.trials == 0 {
        return Err(CliError::config("trials must be at least 1"));
    }
    let ledger = exp.ledger()?;
    let start = Instant::now();
    let results: Vec<(TrialRow, Option<Value>)> = (0..opts.trials)
        .into_par_iter()
        .map(|i| {
            let r = root.substream(i as u64);
            let t0 = Instant::now();
            let out = exp
                .trial(&r, opts.noise, i == 0)
                .map_err(|e| CliError::runtime(format!("trial {i}: {e}")))?;
            let row = TrialRow {
                trial_index: i,
                seed_path: seed_path(&r),
                values: out.values,
                wall_time_s: opts.timing.then(|| t0.elapsed().as_secs_f64()),
            };
            Ok((row, out.output))
        })
        .collect::<Result<_, CliError>>()?;
    let mut output = None;
    let mut rows = Vec::with_capacity(results.len());
    for (row, out) in results {
        if row.trial_index == 0 {
            output = out;
        }
        rows.push(row);
    }
    Ok(Report {
        command: exp.command().to_string(),
        seed: root.seed(),
        zero_noise: opts.noise.zero_noise,
        config: exp.config(),
        budget: ledger,
        bound: exp.bound().map(|value| Bound {
            metric: exp.primary().to_string(),
            value,
        }),
        warnings: exp.warnings(),
        columns: exp.columns(),
        rows,
        output,
        wall_time_s: opts.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

/// Validates a config and builds its experiment; no trial runs here.
pub fn plan(cfg: &MechConfig) -> Result<Box<dyn Experiment>, CliError> {
    Ok(match cfg {
        MechConfig::MarginalsProjection(c) => Box::new(Projection::new(c)?),
        MechConfig::Mwem(c) => Box::new(Mwem::new(c)?),
        MechConfig::HeavyHitters(c) => Box::new(HeavyHitters::new(c)?),
        MechConfig::LearnPoint(c) => Box::new(PointLearner::new(c)?),
        MechConfig::LearnThreshold(c) => Box::new(ThresholdLearner::new(c)?),
        MechConfig::EstimateDist(c) => Box::new(Distribution::new(c)?),
        MechConfig::LearnHalfspace(c) => Box::new(HalfspaceLearner::new(c)?),
    })
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config types serialize")
}

fn build_workload(d: usize, spec: WorkloadSpec) -> Result<Workload, CliError> {
    if spec.k == 0 || spec.k > d {
        return Err(CliError::config(format!("workload.k must lie in [1, d = {d}], got {}", spec.k)));
    }
    Ok(kway_marginal_workload(d, spec.k, spec.kind)?)
}

fn pure(epsilon: f64) -> Budget {
    Budget::Pure { epsilon }
}

fn partial_pure(eps0: f64, d: usize) -> Budget {
    Budget::PartialPure {
        metric: PrivacyMetric::uniform(eps0, d),
    }
}

fn person_eps(ledger: &BudgetLedger) -> f64 {
    ledger.person_parameter().unwrap_or(f64::NAN)
}

pub struct Projection {
    cfg: ProjectionConfig,
    source: Source,
    w: Workload,
    dm: Diameters,
}

impl Projection {
    pub fn new(cfg: &ProjectionConfig) -> Result<Self, CliError> {
        let source = Source::new(&cfg.data)?;
        let d = source.d();
        if d > BRUTE_FORCE_MAX_D {
            return Err(CliError::config(format!(
                "the projection step enumerates the domain, so d must be at most {BRUTE_FORCE_MAX_D}, got {d}"
            )));
        }
        positive("sigma", cfg.sigma)?;
        let w = build_workload(d, cfg.workload)?;
        let dm = diameters(&w)?;
        Ok(Projection {
            cfg: cfg.clone(),
            source,
            w,
            dm,
        })
    }

    fn scale(&self) -> f64 {
        self.cfg.sigma * self.source.n() as f64
    }

    pub fn eps0(&self) -> f64 {
        self.dm.delta0 / self.scale()
    }

    pub fn epsilon(&self) -> f64 {
        self.dm.delta / self.scale()
    }
}

impl Experiment for Projection {
    fn command(&self) -> &'static str {
        "marginals-projection"
    }

    fn config(&self) -> Value {
        to_json(&self.cfg)
    }

    fn columns(&self) -> Vec<&'static str> {
        vec!["mse", "max_abs_error", "fw_gap", "eps", "eps0", "rho"]
    }

    fn primary(&self) -> &'static str {
        "mse"
    }

    fn ledger(&self) -> Result<BudgetLedger, CliError> {
        let stage = Budget::PartialCdp {
            metric: PrivacyMetric::uniform(self.eps0(), self.source.d()),
        };
        let e = self.epsilon();
        BudgetLedger::new(vec![("gaussian_release", stage)], Some(Budget::Zcdp { rho: 0.5 * e * e }))
    }

    fn bound(&self) -> Option<f64> {
        Some(projection_mse_bound(self.cfg.sigma, self.dm.delta, self.source.d(), self.w.m()))
    }

    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut> {
        let data = self.source.draw(&mut r.substream(0))?.data;
        let fw = self.cfg.fw.unwrap_or_default();
        let out = projection_mechanism(&data, &self.w, self.cfg.sigma, fw, noise, &mut r.substream(1))?;
        let truth = eval_workload(&self.w, &data)?;
        let sq: Vec<f64> = out.answers.iter().zip(&truth).map(|(a, t)| (a - t).powi(2)).collect();
        let mse = sq.iter().sum::<f64>() / sq.len() as f64;
        let max_abs = sq.iter().fold(0.0f64, |m, s| m.max(s.sqrt()));
        Ok(TrialOut {
            values: vec![mse, max_abs, out.fw_gap, out.epsilon, out.eps0, 0.5 * out.epsilon * out.epsilon],
            output: want_output.then(|| json!({ "answers": out.answers })),
        })
    }
}

pub struct Mwem {
    cfg: MwemConfig,
    source: Source,
    w: Workload,
    rounds: usize,
}

impl Mwem {
    pub fn new(cfg: &MwemConfig) -> Result<Self, CliError> {
        let source = Source::new(&cfg.data)?;
        let d = source.d();
        if d > MAX_DOMAIN_D {
            return Err(CliError::config(format!(
                "MWEM keeps a distribution over the whole domain, so d must be at most {MAX_DOMAIN_D}, got {d}"
            )));
        }
        positive("eps0", cfg.eps0)?;
        if cfg.ell == 0 {
            return Err(CliError::config("ell must be at least 1"));
        }
        let w = build_workload(d, cfg.workload)?;
        let tuples = enumerate_disjoint_tuples(&w, cfg.ell, DEFAULT_TUPLE_CAP)?;
        if tuples.is_empty() {
            return Err(CliError::config(format!(
                "no {} queries with pairwise disjoint attributes exist in this workload",
                cfg.ell
            )));
        }
        let rounds = match cfg.rounds {
            Some(0) => return Err(CliError::config("rounds must be at least 1")),
            Some(t) => t,
            None => default_rounds(d, source.n(), cfg.eps0, cfg.ell, w.m()),
        };
        Ok(Mwem {
            cfg: cfg.clone(),
            source,
            w,
            rounds,
        })
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    fn rho(&self) -> f64 {
        0.5 * (self.cfg.ell as f64 * self.cfg.eps0).powi(2)
    }
}

impl Experiment for Mwem {
    fn command(&self) -> &'static str {
        "mwem"
    }

    fn config(&self) -> Value {
        let mut v = to_json(&self.cfg);
        v["rounds"] = json!(self.rounds);
        v
    }

    fn columns(&self) -> Vec<&'static str> {
        vec!["tuple_max_error", "max_query_error", "eps_t", "eps0", "rho"]
    }

    fn primary(&self) -> &'static str {
        "tuple_max_error"
    }

    fn ledger(&self) -> Result<BudgetLedger, CliError> {
        let stage = Budget::PartialCdp {
            metric: PrivacyMetric::uniform(self.cfg.eps0, self.source.d()),
        };
        BudgetLedger::new(vec![("mwem", stage)], Some(Budget::Zcdp { rho: self.rho() }))
    }

    fn bound(&self) -> Option<f64> {
        Some(mwem_error_bound(
            self.rounds,
            self.source.n(),
            self.cfg.eps0,
            self.source.d(),
            self.cfg.ell,
            self.w.m(),
        ))
    }

    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut> {
        let data = self.source.draw(&mut r.substream(0))?.data;
        let params = MwemParams::new(self.cfg.eps0, self.rounds, self.cfg.ell);
        let out = mwem(&data, &self.w, &params, noise, &mut r.substream(1))?;
        let tuple_err = disjoint_tuple_max_error(&self.w, self.cfg.ell, &out.synthetic, &data)?;
        let truth = eval_workload(&self.w, &data)?;
        let max_err = out.answers.iter().zip(&truth).fold(0.0f64, |m, (a, t)| m.max((a - t).abs()));
        Ok(TrialOut {
            values: vec![tuple_err, max_err, out.eps_t, out.eps0, out.rho],
            output: want_output.then(|| json!({ "answers": out.answers })),
        })
    }

    /// Standard MWEM (one query per round) at the same zCDP parameter.
    fn baseline(&self, r: &RngStream, noise: NoiseConfig) -> Option<partial_dp::Result<f64>> {
        Some((|| {
            let data = self.source.draw(&mut r.substream(0))?.data;
            let eps = self.cfg.ell as f64 * self.cfg.eps0;
            let rounds = default_rounds(self.source.d(), self.source.n(), eps, 1, self.w.m());
            let out = mwem(&data, &self.w, &MwemParams::new(eps, rounds, 1), noise, &mut r.substream(2))?;
            disjoint_tuple_max_error(&self.w, self.cfg.ell, &out.synthetic, &data)
        })())
    }
}

fn check_resolution(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v <= 0.1 {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} must lie in (0, 0.1], got {v}")))
    }
}

/// Heavy-hitter parameters at half the budget, validated before any trial.
fn hh_params(epsilon: f64, nu: f64, n: usize) -> Result<HeavyHitterParams, CliError> {
    HeavyHitterParams::for_budget(epsilon / 2.0, nu, n).map_err(|e| CliError::config(e.to_string()))
}

/// Max error of a Laplace histogram over all `2^d` cells, drawn from its
/// closed-form distribution: `P[max ≤ t] = (1 − e^{−t/b})^{2^d}`.
pub fn laplace_cells_max_error(d: usize, b: f64, u: f64) -> f64 {
    let cells = 2f64.powi(d as i32);
    -b * (-(u.ln() / cells).exp_m1()).ln()
}

pub struct HeavyHitters {
    /// Per-person parameter from the ledger.
    eps: f64,
    cfg: HeavyHittersConfig,
    source: Source,
    params: HeavyHitterParams,
}

impl HeavyHitters {
    pub fn new(cfg: &HeavyHittersConfig) -> Result<Self, CliError> {
        let source = Source::new(&cfg.data)?;
        positive("epsilon", cfg.epsilon)?;
        check_resolution("nu", cfg.nu)?;
        check_resolution("eta", cfg.eta)?;
        let params = hh_params(cfg.epsilon, cfg.nu, source.n())?;
        let mut exp = HeavyHitters {
            eps: f64::NAN,
            cfg: cfg.clone(),
            source,
            params,
        };
        exp.eps = person_eps(&exp.ledger()?);
        Ok(exp)
    }

    pub fn params(&self) -> HeavyHitterParams {
        self.params
    }
}

impl Experiment for HeavyHitters {
    fn command(&self) -> &'static str {
        "heavy-hitters"
    }

    fn config(&self) -> Value {
        to_json(&self.cfg)
    }

    fn columns(&self) -> Vec<&'static str> {
        vec!["max_count_error", "list_size", "heavy_items", "heavy_recovered", "success", "eps", "eps0"]
    }

    fn primary(&self) -> &'static str {
        "max_count_error"
    }

    fn ledger(&self) -> Result<BudgetLedger, CliError> {
        let half = self.cfg.epsilon / 2.0;
        BudgetLedger::new(
            vec![("heavy_hitters", partial_pure(half, self.source.d())), ("counts", pure(half))],
            None,
        )
    }

    fn bound(&self) -> Option<f64> {
        Some(self.cfg.nu * self.source.n() as f64)
    }

    fn warnings(&self) -> Vec<String> {
        self.params
            .utility_warning(self.source.d(), self.cfg.nu, self.cfg.eta)
            .into_iter()
            .collect()
    }

    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut> {
        let data = self.source.draw(&mut r.substream(0))?.data;
        let out = priv_histogram(&data, self.cfg.epsilon, self.cfg.nu, self.cfg.eta, noise, &r.substream(1))?;
        let truth = exact_frequencies(&data);
        let cut = self.cfg.nu * data.n() as f64;
        let err = out.histogram.max_abs_error(&truth);
        let heavy: Vec<&Record> = truth.entries.iter().filter(|(_, f)| **f >= cut).map(|(x, _)| x).collect();
        let recovered = heavy.iter().filter(|x| out.histogram.entries.contains_key(**x)).count();
        let success = recovered == heavy.len() && err <= cut;
        Ok(TrialOut {
            values: vec![
                err,
                out.histogram.len() as f64,
                heavy.len() as f64,
                recovered as f64,
                f64::from(u8::from(success)),
                self.eps,
                self.cfg.epsilon,
            ],
            output: want_output.then(|| to_json(&out.histogram)),
        })
    }

    /// Standard `ε`-DP Laplace histogram over every cell of `{0,1}^d`.
    fn baseline(&self, r: &RngStream, noise: NoiseConfig) -> Option<partial_dp::Result<f64>> {
        if noise.zero_noise {
            return Some(Ok(0.0));
        }
        let u = r.substream(2).open_uniform();
        Some(Ok(laplace_cells_max_error(self.source.d(), 2.0 / self.cfg.epsilon, u)))
    }
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    check_resolution("alpha", alpha)
}

/// `d + 1` attributes: the features and the label.
fn learner_ledger(epsilon: f64, d: usize) -> Result<BudgetLedger, CliError> {
    let half = epsilon / 2.0;
    BudgetLedger::new(vec![("heavy_hitters", partial_pure(half, d + 1)), ("counts", pure(half))], None)
}

pub struct PointLearner {
    /// Per-person parameter from the ledger.
    eps: f64,
    cfg: PointConfig,
    source: LabeledSource,
    params: HeavyHitterParams,
}

impl PointLearner {
    pub fn new(cfg: &PointConfig) -> Result<Self, CliError> {
        let source = LabeledSource::new(&cfg.data)?;
        positive("epsilon", cfg.epsilon)?;
        check_alpha(cfg.alpha)?;
        let params = hh_params(cfg.epsilon, 0.2 * cfg.alpha, source.n())?;
        let mut exp = PointLearner {
            eps: f64::NAN,
            cfg: cfg.clone(),
            source,
            params,
        };
        exp.eps = person_eps(&exp.ledger()?);
        Ok(exp)
    }
}

impl Experiment for PointLearner {
    fn command(&self) -> &'static str {
        "learn-point"
    }

    fn config(&self) -> Value {
        to_json(&self.cfg)
    }

    fn columns(&self) -> Vec<&'static str> {
        vec!["error", "success", "branch", "eps", "eps0"]
    }

    fn primary(&self) -> &'static str {
        "error"
    }

    fn ledger(&self) -> Result<BudgetLedger, CliError> {
        learner_ledger(self.cfg.epsilon, self.source.d())
    }

    fn bound(&self) -> Option<f64> {
        Some(self.cfg.alpha)
    }

    fn warnings(&self) -> Vec<String> {
        self.params
            .utility_warning(self.source.d() + 1, 0.2 * self.cfg.alpha, 0.01)
            .into_iter()
            .collect()
    }

    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut> {
        let draw = self.source.draw(&mut r.substream(0))?;
        let out = learn_point(&draw.samples, self.cfg.epsilon, self.cfg.alpha, noise, &r.substream(1))?;
        let error = match &draw.truth {
            Truth::Point(task) => task.population_error(&out.point),
            _ => {
                let wrong = draw.samples.iter().filter(|(x, y)| (*x == out.point) != *y).count();
                wrong as f64 / draw.samples.len() as f64
            }
        };
        Ok(TrialOut {
            values: vec![
                error,
                f64::from(u8::from(error <= self.cfg.alpha)),
                out.branch as u8 as f64,
                self.eps,
                self.cfg.epsilon,
            ],
            output: want_output.then(|| json!({ "point": out.point, "branch": out.branch })),
        })
    }
}

pub struct ThresholdLearner {
    /// Per-person parameter from the ledger.
    eps: f64,
    cfg: ThresholdConfig,
    source: LabeledSource,
}

impl ThresholdLearner {
    pub fn new(cfg: &ThresholdConfig) -> Result<Self, CliError> {
        let source = LabeledSource::new(&cfg.data)?;
        positive("epsilon", cfg.epsilon)?;
        check_alpha(cfg.alpha)?;
        // The prefix search spends a third of the budget, half of it on heavy hitters.
        hh_params(cfg.epsilon / 6.0, 0.01 * cfg.alpha, source.n())?;
        let mut exp = ThresholdLearner {
            eps: f64::NAN,
            cfg: cfg.clone(),
            source,
        };
        exp.eps = person_eps(&exp.ledger()?);
        Ok(exp)
    }
}

impl Experiment for ThresholdLearner {
    fn command(&self) -> &'static str {
        "learn-threshold"
    }

    fn config(&self) -> Value {
        to_json(&self.cfg)
    }

    fn columns(&self) -> Vec<&'static str> {
        vec!["error", "success", "branch", "prefix_length", "eps", "eps0"]
    }

    fn primary(&self) -> &'static str {
        "error"
    }

    fn ledger(&self) -> Result<BudgetLedger, CliError> {
        let third = self.cfg.epsilon / 3.0;
        BudgetLedger::new(
            vec![
                ("positive_fraction", pure(third)),
                ("prefix_search", partial_pure(third, self.source.d() + 1)),
                ("selection", pure(third)),
            ],
            None,
        )
    }

    fn bound(&self) -> Option<f64> {
        Some(self.cfg.alpha)
    }

    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut> {
        let draw = self.source.draw(&mut r.substream(0))?;
        let opts = ThresholdOptions {
            branch_swapped: self.cfg.branch_swapped,
        };
        let out = learn_threshold(&draw.samples, self.cfg.epsilon, self.cfg.alpha, opts, noise, &r.substream(1))?;
        let error = match &draw.truth {
            Truth::Threshold(task) => task.population_error(&out.threshold),
            _ => threshold_error(&draw.samples, &out.threshold) as f64 / draw.samples.len() as f64,
        };
        let prefix_length = out.prefix.as_ref().map_or(f64::NAN, |p| p.prefix.d() as f64);
        Ok(TrialOut {
            values: vec![
                error,
                f64::from(u8::from(error <= self.cfg.alpha)),
                out.branch as u8 as f64,
                prefix_length,
                self.eps,
                self.cfg.epsilon,
            ],
            output: want_output.then(|| json!({ "threshold": out.threshold, "branch": out.branch })),
        })
    }
}

pub struct Distribution {
    /// Per-person parameter from the ledger.
    eps: f64,
    cfg: DistConfig,
    source: Source,
}

impl Distribution {
    pub fn new(cfg: &DistConfig) -> Result<Self, CliError> {
        let source = Source::new(&cfg.data)?;
        positive("epsilon", cfg.epsilon)?;
        let en = cfg.epsilon * source.n() as f64;
        if en <= std::f64::consts::E {
            return Err(CliError::config(format!("distribution estimation needs epsilon * n > e, got {en}")));
        }
        if source.d() < 2 {
            return Err(CliError::config("distribution estimation needs d >= 2"));
        }
        let mut exp = Distribution {
            eps: f64::NAN,
            cfg: cfg.clone(),
            source,
        };
        exp.eps = person_eps(&exp.ledger()?);
        Ok(exp)
    }
}

impl Experiment for Distribution {
    fn command(&self) -> &'static str {
        "estimate-dist"
    }

    fn config(&self) -> Value {
        to_json(&self.cfg)
    }

    fn columns(&self) -> Vec<&'static str> {
        vec!["l2_squared_error", "support_size", "eps", "eps0"]
    }

    fn primary(&self) -> &'static str {
        "l2_squared_error"
    }

    fn ledger(&self) -> Result<BudgetLedger, CliError> {
        let half = self.cfg.epsilon / 2.0;
        BudgetLedger::new(
            vec![("heavy_hitters", partial_pure(half, self.source.d())), ("counts", pure(half))],
            None,
        )
    }

    fn bound(&self) -> Option<f64> {
        let n = self.source.n() as f64;
        let d = self.source.d() as f64;
        Some(self.cfg.bound_constant * (d.ln() / (self.cfg.epsilon * n) + 1.0 / n))
    }

    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut> {
        let drawn = self.source.draw(&mut r.substream(0))?;
        let est = estimate_distribution(&drawn.data, self.cfg.epsilon, noise, &r.substream(1))?;
        let truth = drawn.theta.unwrap_or_else(|| {
            let n = drawn.data.n() as f64;
            let entries = exact_frequencies(&drawn.data).entries.into_iter().map(|(x, f)| (x, f / n)).collect();
            SparseHistogram { entries }
        });
        Ok(TrialOut {
            values: vec![
                est.squared_l2_error(&truth),
                est.len() as f64,
                self.eps,
                self.cfg.epsilon,
            ],
            output: want_output.then(|| to_json(&est)),
        })
    }
}

pub struct HalfspaceLearner {
    /// Per-person parameter from the ledger.
    eps: f64,
    cfg: HalfspaceConfig,
    learn: RobustLearnConfig,
    source: LabeledSource,
    classes: NetClasses,
    /// `min_h R_γ(h)` over the net, when the source distribution is known.
    best_population: Option<f64>,
}

impl HalfspaceLearner {
    pub fn new(cfg: &HalfspaceConfig) -> Result<Self, CliError> {
        let source = LabeledSource::new(&cfg.data)?;
        let learn = RobustLearnConfig::new(cfg.gamma, cfg.gamma_prime, cfg.epsilon)?;
        let d = source.d();
        if d > CUBE_MAX_D {
            return Err(CliError::config(format!("the net is grouped over the whole cube, so d must be at most {CUBE_MAX_D}")));
        }
        let classes = NetClasses::build_over_cube(d, learn.nu())?;
        let best_population = match &source {
            LabeledSource::Cube { dist, .. } => Some(
                classes
                    .representatives
                    .iter()
                    .map(|h| dist.robust_error(h, cfg.gamma))
                    .fold(f64::INFINITY, f64::min),
            ),
            _ => None,
        };
        let mut exp = HalfspaceLearner {
            eps: f64::NAN,
            cfg: cfg.clone(),
            learn,
            source,
            classes,
            best_population,
        };
        exp.eps = person_eps(&exp.ledger()?);
        Ok(exp)
    }

    pub fn classes(&self) -> &NetClasses {
        &self.classes
    }

    pub fn best_population(&self) -> Option<f64> {
        self.best_population
    }
}

impl Experiment for HalfspaceLearner {
    fn command(&self) -> &'static str {
        "learn-halfspace"
    }

    fn config(&self) -> Value {
        to_json(&self.cfg)
    }

    fn columns(&self) -> Vec<&'static str> {
        vec!["robust_error", "best_net_robust_error", "excess", "flipped_labels", "eps", "eps0"]
    }

    fn primary(&self) -> &'static str {
        "excess"
    }

    fn ledger(&self) -> Result<BudgetLedger, CliError> {
        // Features feed the exponential mechanism, the label feeds randomized response.
        let parts = compose_parallel(&vec![pure(self.cfg.epsilon); self.source.d() + 1])?;
        BudgetLedger::new(vec![("features_and_label", parts)], None)
    }

    fn bound(&self) -> Option<f64> {
        Some(robust_excess_bound(
            self.cfg.epsilon,
            self.source.n(),
            self.cfg.gamma,
            self.cfg.gamma_prime,
            self.cfg.bound_constant,
        ))
    }

    fn trial(&self, r: &RngStream, noise: NoiseConfig, want_output: bool) -> partial_dp::Result<TrialOut> {
        let draw = self.source.draw(&mut r.substream(0))?;
        let data = LabeledDataset::from_bits(self.source.d(), &draw.samples)?;
        let out = learn_halfspace_with_classes(&data, &self.learn, &self.classes, noise, &r.substream(1))?;
        let (err, best) = match (&draw.truth, self.best_population) {
            (Truth::Cube(dist), Some(best)) => (dist.robust_error(&out.halfspace, self.cfg.gamma_prime), best),
            _ => {
                let best = self
                    .classes
                    .representatives
                    .iter()
                    .map(|h| robust_error(h, &data, self.cfg.gamma))
                    .fold(f64::INFINITY, f64::min);
                (robust_error(&out.halfspace, &data, self.cfg.gamma_prime), best)
            }
        };
        Ok(TrialOut {
            values: vec![
                err,
                best,
                err - best,
                out.flipped_labels as f64,
                self.eps,
                self.cfg.epsilon,
            ],
            output: want_output.then(|| to_json(&out.halfspace)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_cells_quantile() {
        // Median of the max over 2 cells: (1 − e^{−t})² = ½.
        let t = laplace_cells_max_error(1, 1.0, 0.5);
        assert!(((1.0 - (-t).exp()).powi(2) - 0.5).abs() < 1e-12);
    }
}
