use std::path::PathBuf;

use serde::Serialize;

use super::experiment::run_experiment;
use super::output::{fmt_f64, write_csv};
use super::presets::{comparison, CompareMode};
use crate::ensemble::InitSpec;
use crate::error::Result;
use crate::metrics::PrecisionSummary;

/// Shared settings applied to every solver of a comparison.
#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub n_seeds: usize,
    pub base_seed: u64,
    pub workers: Option<usize>,
    /// Caps the iteration budget of every solver (reduced-cost runs).
    pub max_iters: Option<usize>,
    pub init: Option<InitSpec>,
    pub out: Option<PathBuf>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            n_seeds: 100,
            base_seed: 0,
            workers: None,
            max_iters: None,
            init: None,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub n_particles: usize,
    pub summary: Option<PrecisionSummary>,
    pub error: Option<String>,
}

/// Runs every solver of the preset line-up on the benchmark. Each solver is
/// isolated: a failure is reported in its row. Writes `compare.csv` when
/// `out` is set.
pub fn compare_baselines(
    benchmark: &str,
    mode: CompareMode,
    opts: &CompareOptions,
) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::new();
    for mut cfg in comparison(benchmark, mode)? {
        cfg.n_seeds = opts.n_seeds;
        cfg.base_seed = opts.base_seed;
        cfg.workers = opts.workers;
        if opts.init.is_some() {
            cfg.init = opts.init.clone();
        }
        if let Some(k) = opts.max_iters {
            cfg.solver.max_iters = k;
        }
        let method = cfg.method.label().to_string();
        let n_particles = cfg.solver.n_particles;
        let row = match run_experiment(&cfg) {
            Ok(o) => CompareRow {
                method,
                n_particles,
                summary: Some(o.summary),
                error: None,
            },
            Err(e) => CompareRow {
                method,
                n_particles,
                summary: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let (p, t) = r
                    .summary
                    .as_ref()
                    .map(|s| (fmt_f64(s.mean_precision), fmt_f64(s.mean_runtime_s)))
                    .unwrap_or_default();
                vec![r.method.clone(), r.n_particles.to_string(), p, t]
            })
            .collect();
        write_csv(
            &dir.join("compare.csv"),
            &["method", "n_particles", "precision", "runtime_s"],
            &body,
        )?;
    }
    Ok(rows)
}

/// Plain-text table with the columns Methods | Number of particles |
/// Precision | Running time (s).
pub fn format_table(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:<24} {:>20} {:>12} {:>18}\n",
        "Methods", "Number of particles", "Precision", "Running time (s)"
    );
    for r in rows {
        let (p, t) = match (&r.summary, &r.error) {
            (Some(s), _) => (
                format!("{:.2e}", s.mean_precision),
                format!("{:.3}", s.mean_runtime_s),
            ),
            (None, Some(_)) => ("failed".to_string(), "-".to_string()),
            (None, None) => ("-".to_string(), "-".to_string()),
        };
        out.push_str(&format!(
            "{:<24} {:>20} {:>12} {:>18}\n",
            r.method,
            format!("N = {}", r.n_particles),
            p,
            t
        ));
    }
    out
}
