use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Solver};
use super::experiment::run_experiment;
use super::output::{fmt_f64, write_csv};
use crate::dynamics::{Cb2oParams, TraceLevel};
use crate::ensemble::InitSpec;
use crate::error::{Error, Result};
use crate::metrics::PrecisionSummary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    N,
    Beta,
    Alpha,
    EpsStop,
    /// Varies `N` and sets `beta = beta_times_n / N`.
    JointNBeta,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::N => "n",
            AblationAxis::Beta => "beta",
            AblationAxis::Alpha => "alpha",
            AblationAxis::EpsStop => "eps_stop",
            AblationAxis::JointNBeta => "joint_n_beta",
        }
    }
}

fn default_benchmark() -> String {
    "ackley-circle".to_string()
}

fn default_seeds() -> usize {
    100
}

/// CB2O runs that vary one hyperparameter (or `N` and `beta` jointly) around
/// a reference setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    #[serde(default = "default_benchmark")]
    pub benchmark: String,
    pub reference: Cb2oParams,
    pub axis: AblationAxis,
    pub values: Vec<f64>,
    /// Fixed product `beta N` of the joint axis.
    #[serde(default)]
    pub beta_times_n: Option<f64>,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub init: Option<InitSpec>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub value: f64,
    pub params: Cb2oParams,
    pub summary: Option<PrecisionSummary>,
    pub error: Option<String>,
}

fn as_count(v: f64) -> Result<usize> {
    if v >= 2.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!(
            "particle count {v} is not an integer >= 2"
        )))
    }
}

impl AblationGrid {
    pub fn new(
        benchmark: &str,
        reference: Cb2oParams,
        axis: AblationAxis,
        values: Vec<f64>,
    ) -> Self {
        Self {
            benchmark: benchmark.to_string(),
            reference,
            axis,
            values,
            beta_times_n: None,
            n_seeds: default_seeds(),
            base_seed: 0,
            init: None,
            workers: None,
            out: None,
        }
    }

    /// Hyperparameters of every grid cell, in the order of `values`. Cells are
    /// validated when they run so that one bad value does not void the grid.
    pub fn cells(&self) -> Result<Vec<Cb2oParams>> {
        if self.values.is_empty() {
            return Err(Error::Config("ablation grid has no values".into()));
        }
        if self.axis == AblationAxis::JointNBeta && self.beta_times_n.is_none() {
            return Err(Error::Config("axis joint_n_beta needs beta_times_n".into()));
        }
        self.values
            .iter()
            .map(|&v| {
                let mut p = self.reference.clone();
                match self.axis {
                    AblationAxis::N => p.n_particles = as_count(v)?,
                    AblationAxis::Beta => p.beta = v,
                    AblationAxis::Alpha => p.alpha = v,
                    AblationAxis::EpsStop => p.eps_stop = v,
                    AblationAxis::JointNBeta => {
                        p.n_particles = as_count(v)?;
                        p.beta = self.beta_times_n.expect("checked above") / v;
                    }
                }
                Ok(p)
            })
            .collect()
    }

    fn cell_config(&self, params: Cb2oParams) -> ExperimentConfig {
        ExperimentConfig {
            init: self.init.clone(),
            n_seeds: self.n_seeds,
            base_seed: self.base_seed,
            workers: self.workers,
            out: None,
            trace: TraceLevel::Summary,
            ..ExperimentConfig::new(&self.benchmark, Solver::Cb2o, params)
        }
    }
}

/// Runs one experiment per grid value with common seeds. A failing cell is
/// reported in its row without stopping the others. Writes `ablation.csv`
/// when `out` is set.
pub fn run_ablation(grid: &AblationGrid) -> Result<Vec<AblationRow>> {
    let cells = grid.cells()?;
    let mut rows = Vec::with_capacity(cells.len());
    for (&value, params) in grid.values.iter().zip(cells) {
        let cfg = grid.cell_config(params.clone());
        let row = match run_experiment(&cfg) {
            Ok(o) => AblationRow {
                value,
                params,
                summary: Some(o.summary),
                error: None,
            },
            Err(e) => {
                log::warn!("ablation cell {} = {value} failed: {e}", grid.axis.name());
                AblationRow {
                    value,
                    params,
                    summary: None,
                    error: Some(e.to_string()),
                }
            }
        };
        log::info!(
            "{} = {value}: mean precision {:?}",
            grid.axis.name(),
            row.summary.as_ref().map(|s| s.mean_precision)
        );
        rows.push(row);
    }
    if let Some(dir) = &grid.out {
        std::fs::create_dir_all(dir)?;
        write_ablation_csv(&dir.join("ablation.csv"), grid.axis, &rows)?;
    }
    Ok(rows)
}

pub fn write_ablation_csv(
    path: &std::path::Path,
    axis: AblationAxis,
    rows: &[AblationRow],
) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let (p, t) = r
                .summary
                .as_ref()
                .map(|s| (fmt_f64(s.mean_precision), fmt_f64(s.mean_runtime_s)))
                .unwrap_or_default();
            vec![
                fmt_f64(r.value),
                r.params.n_particles.to_string(),
                fmt_f64(r.params.beta),
                p,
                t,
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        path,
        &[
            axis.name(),
            "n_particles",
            "beta",
            "mean_precision",
            "mean_runtime_s",
            "error",
        ],
        &body,
    )
}
