//! JSON experiment configs, one struct per subcommand.

use std::path::{Path, PathBuf};

use partial_dp::data::{load_dataset, LoadedDataset};
use partial_dp::histogram::SparseHistogram;
use partial_dp::release::FwOptions;
use partial_dp::workloads::MarginalKind;
use partial_dp::{Dataset, LabeledDataset, Record, RngStream};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::synth::{planted_rows, support_rows, uniform_rows, CubeDistribution, PointTask, ThresholdTask};

/// Unlabeled data: a CSV file or a synthetic generator redrawn every trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Csv { path: PathBuf },
    Uniform { d: usize, n: usize },
    /// Uniform over `size` distinct random records.
    Support { d: usize, n: usize, size: usize },
    /// One distinct record per entry of `fractions`, with `⌊f·n⌋` copies; uniform background.
    Planted { d: usize, n: usize, fractions: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabeledSpec {
    Csv { path: PathBuf },
    Point { d: usize, n: usize, positive_mass: f64 },
    Threshold { d: usize, n: usize },
    /// Majority labels on `{−1,+1}^d` with mass concentrated on `±1_d`.
    Majority { d: usize, n: usize, concentration: f64, label_noise: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub k: usize,
    pub kind: MarginalKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub data: DataSpec,
    pub workload: WorkloadSpec,
    pub sigma: f64,
    #[serde(default)]
    pub fw: Option<FwOptions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MwemConfig {
    pub data: DataSpec,
    pub workload: WorkloadSpec,
    pub eps0: f64,
    pub ell: usize,
    /// Defaults to the round count that minimises the error bound.
    #[serde(default)]
    pub rounds: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavyHittersConfig {
    pub data: DataSpec,
    pub epsilon: f64,
    pub nu: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub data: LabeledSpec,
    pub epsilon: f64,
    pub alpha: f64,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub data: LabeledSpec,
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(default = "yes")]
    pub branch_swapped: bool,
}

fn fifty() -> f64 {
    50.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistConfig {
    pub data: DataSpec,
    pub epsilon: f64,
    /// Constant in the reported error bound.
    #[serde(default = "fifty")]
    pub bound_constant: f64,
}

fn ten() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceConfig {
    pub data: LabeledSpec,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub epsilon: f64,
    #[serde(default = "ten")]
    pub bound_constant: f64,
}

/// A mechanism subcommand together with its config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", content = "config", rename_all = "kebab-case")]
pub enum MechConfig {
    MarginalsProjection(ProjectionConfig),
    Mwem(MwemConfig),
    HeavyHitters(HeavyHittersConfig),
    LearnPoint(PointConfig),
    LearnThreshold(ThresholdConfig),
    EstimateDist(DistConfig),
    LearnHalfspace(HalfspaceConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    MarginalsProjection,
    Mwem,
    HeavyHitters,
    LearnPoint,
    LearnThreshold,
    EstimateDist,
    LearnHalfspace,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::MarginalsProjection => "marginals-projection",
            Mechanism::Mwem => "mwem",
            Mechanism::HeavyHitters => "heavy-hitters",
            Mechanism::LearnPoint => "learn-point",
            Mechanism::LearnThreshold => "learn-threshold",
            Mechanism::EstimateDist => "estimate-dist",
            Mechanism::LearnHalfspace => "learn-halfspace",
        }
    }

    pub fn parse_config(self, value: serde_json::Value) -> Result<MechConfig, CliError> {
        fn de<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, CliError> {
            serde_json::from_value(v).map_err(|e| CliError::config(format!("invalid config: {e}")))
        }
        Ok(match self {
            Mechanism::MarginalsProjection => MechConfig::MarginalsProjection(de(value)?),
            Mechanism::Mwem => MechConfig::Mwem(de(value)?),
            Mechanism::HeavyHitters => MechConfig::HeavyHitters(de(value)?),
            Mechanism::LearnPoint => MechConfig::LearnPoint(de(value)?),
            Mechanism::LearnThreshold => MechConfig::LearnThreshold(de(value)?),
            Mechanism::EstimateDist => MechConfig::EstimateDist(de(value)?),
            Mechanism::LearnHalfspace => MechConfig::LearnHalfspace(de(value)?),
        })
    }
}

/// Sweep axes and the config field each one sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    D,
    K,
    #[serde(alias = "epsilon")]
    Eps0,
    Nu,
    /// `γ − γ′` with `γ` held fixed.
    GammaGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mechanism: Mechanism,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base: serde_json::Value,
}

pub fn read_json(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {} is not valid JSON: {e}", path.display())))
}

fn check_shape(d: usize, n: usize) -> Result<(), CliError> {
    if d == 0 {
        return Err(CliError::config("data.d must be at least 1"));
    }
    if n == 0 {
        return Err(CliError::config("data.n must be at least 1"));
    }
    Ok(())
}

fn domain_size(d: usize) -> f64 {
    2f64.powi(d as i32)
}

/// A draw of unlabeled data plus whatever is known about its source.
pub struct Drawn {
    pub data: Dataset,
    /// Exact source distribution when the generator has a small known support.
    pub theta: Option<SparseHistogram>,
}

/// Unlabeled source after validation; CSV files are read once.
pub enum Source {
    Fixed(Dataset),
    Synthetic(DataSpec),
}

impl Source {
    pub fn new(spec: &DataSpec) -> Result<Source, CliError> {
        match spec {
            DataSpec::Csv { path } => match load_dataset(path, false)? {
                LoadedDataset::Unlabeled(data) => {
                    if data.is_empty() {
                        return Err(CliError::config(format!("{} has no rows", path.display())));
                    }
                    Ok(Source::Fixed(data))
                }
                LoadedDataset::Labeled(_) => Err(CliError::config("expected an unlabeled dataset")),
            },
            DataSpec::Uniform { d, n } => {
                check_shape(*d, *n)?;
                Ok(Source::Synthetic(spec.clone()))
            }
            DataSpec::Support { d, n, size } => {
                check_shape(*d, *n)?;
                if *size == 0 || *size as f64 > domain_size(*d) {
                    return Err(CliError::config(format!("support size must lie in [1, 2^d], got {size}")));
                }
                Ok(Source::Synthetic(spec.clone()))
            }
            DataSpec::Planted { d, n, fractions } => {
                check_shape(*d, *n)?;
                if fractions.iter().any(|f| !(*f > 0.0)) || fractions.iter().sum::<f64>() > 1.0 {
                    return Err(CliError::config("planted fractions must be positive and sum to at most 1"));
                }
                if fractions.len() as f64 > domain_size(*d) {
                    return Err(CliError::config("more planted records than the domain holds"));
                }
                Ok(Source::Synthetic(spec.clone()))
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Source::Fixed(data) => data.d(),
            Source::Synthetic(
                DataSpec::Uniform { d, .. } | DataSpec::Support { d, .. } | DataSpec::Planted { d, .. },
            ) => *d,
            Source::Synthetic(DataSpec::Csv { .. }) => unreachable!(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Source::Fixed(data) => data.n(),
            Source::Synthetic(
                DataSpec::Uniform { n, .. } | DataSpec::Support { n, .. } | DataSpec::Planted { n, .. },
            ) => *n,
            Source::Synthetic(DataSpec::Csv { .. }) => unreachable!(),
        }
    }

    pub fn draw(&self, r: &mut RngStream) -> partial_dp::Result<Drawn> {
        match self {
            Source::Fixed(data) => Ok(Drawn { data: data.clone(), theta: None }),
            Source::Synthetic(DataSpec::Uniform { d, n }) => Ok(Drawn {
                data: uniform_rows(*d, *n, r)?,
                theta: None,
            }),
            Source::Synthetic(DataSpec::Support { d, n, size }) => {
                let (data, support) = support_rows(*d, *n, *size, r)?;
                let p = 1.0 / *size as f64;
                let entries = support.into_iter().map(|x| (x, p)).collect();
                Ok(Drawn {
                    data,
                    theta: Some(SparseHistogram { entries }),
                })
            }
            Source::Synthetic(DataSpec::Planted { d, n, fractions }) => Ok(Drawn {
                data: planted_rows(*d, *n, fractions, r)?.0,
                theta: None,
            }),
            Source::Synthetic(DataSpec::Csv { .. }) => unreachable!(),
        }
    }
}

/// Population quantities of a synthetic labeled draw.
pub enum Truth {
    None,
    Point(PointTask),
    Threshold(ThresholdTask),
    Cube(CubeDistribution),
}

pub struct LabeledDraw {
    pub samples: Vec<(Record, bool)>,
    pub truth: Truth,
}

pub enum LabeledSource {
    Fixed(LabeledDataset),
    Point { d: usize, n: usize, positive_mass: f64 },
    Threshold { d: usize, n: usize },
    Cube { n: usize, dist: CubeDistribution },
}

/// Largest `d` for which the cube distribution is materialised.
pub const CUBE_MAX_D: usize = 16;

impl LabeledSource {
    pub fn new(spec: &LabeledSpec) -> Result<LabeledSource, CliError> {
        match spec {
            LabeledSpec::Csv { path } => match load_dataset(path, true)? {
                LoadedDataset::Labeled(data) => {
                    if data.n() == 0 {
                        return Err(CliError::config(format!("{} has no rows", path.display())));
                    }
                    Ok(LabeledSource::Fixed(data))
                }
                LoadedDataset::Unlabeled(_) => Err(CliError::config("expected a labeled dataset")),
            },
            LabeledSpec::Point { d, n, positive_mass } => {
                check_shape(*d, *n)?;
                if !(*positive_mass >= 0.0 && *positive_mass <= 1.0) {
                    return Err(CliError::config("positive_mass must lie in [0, 1]"));
                }
                Ok(LabeledSource::Point {
                    d: *d,
                    n: *n,
                    positive_mass: *positive_mass,
                })
            }
            LabeledSpec::Threshold { d, n } => {
                check_shape(*d, *n)?;
                Ok(LabeledSource::Threshold { d: *d, n: *n })
            }
            LabeledSpec::Majority {
                d,
                n,
                concentration,
                label_noise,
            } => {
                check_shape(*d, *n)?;
                if *d > CUBE_MAX_D {
                    return Err(CliError::config(format!("majority source supports d <= {CUBE_MAX_D}")));
                }
                if !(0.0..=1.0).contains(concentration) || !(0.0..=1.0).contains(label_noise) {
                    return Err(CliError::config("concentration and label_noise must lie in [0, 1]"));
                }
                Ok(LabeledSource::Cube {
                    n: *n,
                    dist: CubeDistribution::majority(*d, *concentration, *label_noise),
                })
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            LabeledSource::Fixed(data) => data.d(),
            LabeledSource::Point { d, .. } | LabeledSource::Threshold { d, .. } => *d,
            LabeledSource::Cube { dist, .. } => dist.d,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            LabeledSource::Fixed(data) => data.n(),
            LabeledSource::Point { n, .. } | LabeledSource::Threshold { n, .. } | LabeledSource::Cube { n, .. } => *n,
        }
    }

    pub fn draw(&self, r: &mut RngStream) -> partial_dp::Result<LabeledDraw> {
        Ok(match self {
            LabeledSource::Fixed(data) => LabeledDraw {
                samples: data.to_bits(),
                truth: Truth::None,
            },
            LabeledSource::Point { d, n, positive_mass } => {
                let task = PointTask::random(*d, *positive_mass, r);
                LabeledDraw {
                    samples: task.sample(*n, r),
                    truth: Truth::Point(task),
                }
            }
            LabeledSource::Threshold { d, n } => {
                let task = ThresholdTask::random(*d, r);
                LabeledDraw {
                    samples: task.sample(*n, r),
                    truth: Truth::Threshold(task),
                }
            }
            LabeledSource::Cube { n, dist } => {
                let data = dist.sample(*n, r)?;
                LabeledDraw {
                    samples: data.to_bits(),
                    truth: Truth::Cube(dist.clone()),
                }
            }
        })
    }
}
