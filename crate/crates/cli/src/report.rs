//! Trial rows, aggregates, budget ledgers and their JSON/CSV rendering.

use partial_dp::accountant::{
    compose_sequential, partial_to_standard, partial_to_standard_via_sup, zcdp_to_approx_dp_tight, Budget,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// `δ` used when a concentrated budget is also reported as `(ε, δ)`-DP.
pub const LEDGER_DELTA: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerStage {
    pub name: String,
    pub budget: Budget,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxDp {
    pub epsilon: f64,
    pub delta: f64,
}

/// Every stage of a mechanism, their composition, and the per-person view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub stages: Vec<LedgerStage>,
    pub total: Budget,
    /// Group-privacy conversion of `total`.
    pub per_person: Option<Budget>,
    /// A per-person guarantee the mechanism has directly, when tighter than the conversion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_person_direct: Option<Budget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx_dp: Option<ApproxDp>,
}

impl BudgetLedger {
    pub fn new(stages: Vec<(&str, Budget)>, direct: Option<Budget>) -> Result<Self, CliError> {
        let budgets: Vec<Budget> = stages.iter().map(|(_, b)| b.clone()).collect();
        let total = if budgets.len() == 1 {
            budgets[0].clone()
        } else {
            compose_sequential(&budgets)?
        };
        let per_person = match partial_to_standard(&total) {
            Ok(b) => Some(b),
            Err(_) => partial_to_standard_via_sup(&total)?,
        };
        let best_rho = [direct.as_ref(), per_person.as_ref()]
            .into_iter()
            .flatten()
            .filter_map(|b| match b {
                Budget::Zcdp { rho } => Some(*rho),
                _ => None,
            })
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))));
        let approx_dp = match best_rho {
            Some(rho) if rho > 0.0 => Some(ApproxDp {
                epsilon: zcdp_to_approx_dp_tight(rho, LEDGER_DELTA)?,
                delta: LEDGER_DELTA,
            }),
            _ => None,
        };
        Ok(BudgetLedger {
            stages: stages
                .into_iter()
                .map(|(name, budget)| LedgerStage {
                    name: name.to_string(),
                    budget,
                })
                .collect(),
            total,
            per_person,
            per_person_direct: direct,
            approx_dp,
        })
    }

    /// Per-person `ε` (pure) or `ρ` (zCDP), preferring the direct guarantee.
    pub fn person_parameter(&self) -> Option<f64> {
        match self.per_person_direct.as_ref().or(self.per_person.as_ref())? {
            Budget::Pure { epsilon } => Some(*epsilon),
            Budget::Zcdp { rho } => Some(*rho),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub trial_index: usize,
    pub seed_path: String,
    pub values: Vec<f64>,
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

pub const SUMMARY_FIELDS: [&str; 7] = ["mean", "std", "min", "q25", "median", "q75", "max"];

impl Summary {
    /// NaN entries are ignored; an all-NaN column summarises to NaN.
    pub fn of(values: &[f64]) -> Summary {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                q25: f64::NAN,
                median: f64::NAN,
                q75: f64::NAN,
                max: f64::NAN,
            };
        }
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary {
            mean,
            std,
            min: v[0],
            q25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
            max: v[v.len() - 1],
        }
    }

    pub fn values(&self) -> [f64; 7] {
        [self.mean, self.std, self.min, self.q25, self.median, self.q75, self.max]
    }
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub zero_noise: bool,
    pub config: Value,
    pub budget: BudgetLedger,
    pub bound: Option<Bound>,
    pub warnings: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<TrialRow>,
    /// Mechanism output of trial 0.
    pub output: Option<Value>,
    pub wall_time_s: Option<f64>,
}

impl Report {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r.values[j]).collect())
    }

    pub fn summary(&self, name: &str) -> Option<Summary> {
        self.column(name).map(|v| Summary::of(&v))
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                m.insert("trial_index".into(), json!(r.trial_index));
                m.insert("seed_path".into(), json!(r.seed_path));
                for (c, v) in self.columns.iter().zip(&r.values) {
                    m.insert((*c).into(), json!(v));
                }
                if let Some(t) = r.wall_time_s {
                    m.insert("wall_time_s".into(), json!(t));
                }
                Value::Object(m)
            })
            .collect();
        let mut aggregate = Map::new();
        for c in &self.columns {
            aggregate.insert((*c).into(), json!(self.summary(c)));
        }
        let mut m = Map::new();
        m.insert("command".into(), json!(self.command));
        m.insert("seed".into(), json!(self.seed));
        m.insert("trials".into(), json!(self.rows.len()));
        m.insert("zero_noise".into(), json!(self.zero_noise));
        m.insert("config".into(), self.config.clone());
        m.insert("budget".into(), json!(self.budget));
        m.insert("bound".into(), json!(self.bound));
        m.insert("warnings".into(), json!(self.warnings));
        m.insert("rows".into(), Value::Array(rows));
        m.insert("aggregate".into(), Value::Object(aggregate));
        m.insert("output".into(), self.output.clone().unwrap_or(Value::Null));
        if let Some(t) = self.wall_time_s {
            m.insert("wall_time_s".into(), json!(t));
        }
        Value::Object(m)
    }

    /// Header `trial_index,seed_path,<columns>[,wall_time_s]`, one row per
    /// trial, then one row per summary statistic named in `trial_index`.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let timed = self.rows.iter().any(|r| r.wall_time_s.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["trial_index", "seed_path"];
        header.extend(self.columns.iter().copied());
        if timed {
            header.push("wall_time_s");
        }
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.trial_index.to_string(), r.seed_path.clone()];
            rec.extend(r.values.iter().map(|v| fmt_num(*v)));
            if timed {
                rec.push(r.wall_time_s.map(fmt_num).unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        let summaries: Vec<Summary> = self.columns.iter().map(|c| self.summary(c).unwrap()).collect();
        for (k, stat) in SUMMARY_FIELDS.iter().enumerate() {
            let mut rec = vec![stat.to_string(), String::new()];
            rec.extend(summaries.iter().map(|s| fmt_num(s.values()[k])));
            if timed {
                rec.push(String::new());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(pretty(&self.to_json())),
            Format::Csv => self.to_csv(),
        }
    }
}

pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn csv_err(e: csv::Error) -> CliError {
    CliError::runtime(format!("writing CSV: {e}"))
}

pub fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::runtime(format!("writing CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::runtime(e.to_string()))
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}
