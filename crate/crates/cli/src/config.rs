use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use rbstc::numkit::{Complex64, Matrix, Tolerances, Vector};
use rbstc::periodic::PeriodicOptions;
use rbstc::regions::{build_cone_partition, build_trigger_partition, estimate_tau_bounds, Partition, RelativeTrigger, TauBounds};
use rbstc::system::{pole_place_companion, LinearSystem, TransitionMatrix};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub trigger: Option<TriggerConfig>,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "K", default)]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub desired_poles: Option<Vec<Pole>>,
}

/// A real pole or a `[re, im]` pair.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum Pole {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TriggerConfig {
    Relative {
        sigma: f64,
        horizon: f64,
        /// Sphere samples used to estimate the τ_e range.
        #[serde(default = "default_bound_samples")]
        bound_samples: usize,
    },
}

fn default_bound_samples() -> usize {
    20_000
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionConfig {
    TauSlices {
        r: usize,
        #[serde(default)]
        tau_min: Option<f64>,
        #[serde(default)]
        tau_max: Option<f64>,
    },
    Cones {
        centers: Vec<Vec<f64>>,
        taus: Vec<f64>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "yes")]
    pub pirs: bool,
    #[serde(default = "yes")]
    pub subspaces: bool,
    #[serde(default = "yes")]
    pub unions: bool,
    #[serde(default = "yes")]
    pub screening: bool,
    #[serde(default = "yes")]
    pub stability: bool,
    /// Run the perturbation probe on verified candidates.
    #[serde(default)]
    pub probe: bool,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub a1_samples: Option<usize>,
    #[serde(default)]
    pub periodic: Option<PeriodicSection>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            pirs: true,
            subspaces: true,
            unions: true,
            screening: true,
            stability: true,
            probe: false,
            samples: None,
            a1_samples: None,
            periodic: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicSection {
    #[serde(default)]
    pub max_period: Option<usize>,
    #[serde(default)]
    pub harvest_runs: Option<usize>,
    #[serde(default)]
    pub harvest_events: Option<usize>,
    #[serde(default)]
    pub exhaustive_length: Option<usize>,
}

impl PeriodicSection {
    pub fn options(&self) -> PeriodicOptions {
        let d = PeriodicOptions::default();
        PeriodicOptions {
            max_period: self.max_period.unwrap_or(d.max_period),
            harvest_runs: self.harvest_runs.unwrap_or(d.harvest_runs),
            harvest_events: self.harvest_events.unwrap_or(d.harvest_events),
            exhaustive_length: self.exhaustive_length.or(d.exhaustive_length),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: &Path) -> Result<AnalysisConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<AnalysisConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: AnalysisConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(format!("at `{path}`: {}", e.inner()))
    })?;
    cfg.tolerances.validate().map_err(|e| config_err(format!("tolerances: {e}")))?;
    match (&cfg.system.k, &cfg.system.desired_poles) {
        (Some(_), Some(_)) => return Err(config_err("system: give exactly one of `K` and `desired_poles`, not both")),
        (None, None) => return Err(config_err("system: one of `K` and `desired_poles` is required")),
        _ => {}
    }
    if matches!(cfg.partition, PartitionConfig::TauSlices { .. }) && cfg.trigger.is_none() {
        return Err(config_err("partition: mode `tau-slices` requires a `trigger` section"));
    }
    Ok(cfg)
}

pub fn matrix(rows: &[Vec<f64>], field: &str) -> Result<Matrix, CliError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(config_err(format!("{field}: expected a nonempty rectangular array of rows")));
    }
    Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SystemConfig {
    pub fn build(&self) -> Result<LinearSystem, CliError> {
        let a = matrix(&self.a, "system.A")?;
        let b = matrix(&self.b, "system.B")?;
        let k = match (&self.k, &self.desired_poles) {
            (Some(k), _) => matrix(k, "system.K")?,
            (None, Some(poles)) => {
                let p: Vec<Complex64> = poles
                    .iter()
                    .map(|p| match *p {
                        Pole::Real(r) => Complex64::new(r, 0.0),
                        Pole::Complex([re, im]) => Complex64::new(re, im),
                    })
                    .collect();
                pole_place_companion(&a, &b, &p).map_err(|e| config_err(format!("system.desired_poles: {e}")))?
            }
            (None, None) => unreachable!("checked at parse time"),
        };
        LinearSystem::new(a, b, k).map_err(|e| config_err(format!("system: {e}")))
    }
}

/// Everything derived from a configuration before analysis.
pub struct Setup {
    pub system: LinearSystem,
    pub trigger: Option<Arc<RelativeTrigger>>,
    pub bounds: Option<TauBounds>,
    pub partition: Partition,
    pub gs: Vec<TransitionMatrix>,
}

impl AnalysisConfig {
    pub fn trigger(&self, system: &LinearSystem) -> Result<Option<Arc<RelativeTrigger>>, CliError> {
        match &self.trigger {
            None => Ok(None),
            Some(TriggerConfig::Relative { sigma, horizon, .. }) => RelativeTrigger::new(system.clone(), *sigma, *horizon, &self.tolerances)
                .map(|t| Some(Arc::new(t)))
                .map_err(|e| config_err(format!("trigger: {e}"))),
        }
    }

    pub fn bound_samples(&self) -> usize {
        match &self.trigger {
            Some(TriggerConfig::Relative { bound_samples, .. }) => *bound_samples,
            None => default_bound_samples(),
        }
    }

    pub fn setup(&self) -> Result<Setup, CliError> {
        let system = self.system.build()?;
        let trigger = self.trigger(&system)?;
        let n = system.n();
        let (partition, bounds) = match &self.partition {
            PartitionConfig::TauSlices { r, tau_min, tau_max } => {
                let t = trigger.clone().expect("checked at parse time");
                let bounds = match (tau_min, tau_max) {
                    (Some(lo), Some(hi)) => TauBounds { tau_min: *lo, tau_max: *hi, samples: 0 },
                    _ => {
                        let est = estimate_tau_bounds(&t, self.bound_samples(), self.seed)?;
                        TauBounds { tau_min: tau_min.unwrap_or(est.tau_min), tau_max: tau_max.unwrap_or(est.tau_max), samples: est.samples }
                    }
                };
                let p = build_trigger_partition(t, *r, bounds.tau_min, bounds.tau_max).map_err(|e| config_err(format!("partition: {e}")))?;
                (p, Some(bounds))
            }
            PartitionConfig::Cones { centers, taus } => {
                if let Some(c) = centers.iter().find(|c| c.len() != n) {
                    return Err(config_err(format!("partition.centers: center of length {} in dimension {n}", c.len())));
                }
                let cs: Vec<Vector> = centers.iter().map(|c| Vector::from_column_slice(c)).collect();
                let p = build_cone_partition(&cs, taus).map_err(|e| config_err(format!("partition: {e}")))?;
                (p, None)
            }
        };
        let gs = system.transition_matrices(&partition.taus())?;
        Ok(Setup { system, trigger, bounds, partition, gs })
    }
}
