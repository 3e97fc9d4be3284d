//! Seeded grids of synthetic experiments.
//!
//! Trial `t` of a sweep with master seed `s` uses seed `s + t` (wrapping) for
//! the dataset, the random initializer and k-means. Every grid cell sees the
//! same trial seeds, so masks are nested across missing rates and methods
//! are compared on identical data. Any single row can be re-run from its
//! `seed` column alone.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::csvio::write_json;
use crate::alternation::LoopConfig;
use crate::error::{Result, SssaError};
use crate::method::{builtin_methods, MethodRegistry, SolverSettings};
use crate::metrics::{clustering_error, reconstruction_error};
use crate::synth::{make_dataset, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Generator settings; `rho`, `sigma`, `outlier_frac` and `seed` are
    /// overridden per cell.
    pub base: SyntheticSpec,
    pub rhos: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub outliers: Vec<f64>,
    pub methods: Vec<String>,
    pub trials: usize,
    pub master_seed: u64,
    pub settings: SolverSettings,
    pub looping: LoopConfig,
}

impl SweepConfig {
    /// Columns are shuffled in every sweep dataset.
    pub fn new(base: SyntheticSpec) -> Self {
        let base = SyntheticSpec { shuffle: true, ..base };
        SweepConfig {
            rhos: vec![base.rho],
            sigmas: vec![base.sigma],
            outliers: vec![base.outlier_frac],
            base,
            methods: vec!["sssa".into()],
            trials: 1,
            master_seed: 0,
            settings: SolverSettings::default(),
            looping: LoopConfig::default(),
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.master_seed.wrapping_add(trial as u64)
    }

    /// Number of rows the sweep produces.
    pub fn len(&self) -> usize {
        self.methods.len() * self.rhos.len() * self.sigmas.len() * self.outliers.len() * self.trials
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, methods: &MethodRegistry) -> Result<()> {
        if self.is_empty() {
            return Err(SssaError::Config("sweep grid is empty".into()));
        }
        for m in &self.methods {
            methods.get(m)?;
        }
        for cell in self.cells() {
            cell.spec.validate()?;
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.len());
        for method in &self.methods {
            for &rho in &self.rhos {
                for &sigma in &self.sigmas {
                    for &outlier_frac in &self.outliers {
                        for trial in 0..self.trials {
                            let spec = SyntheticSpec {
                                rho,
                                sigma,
                                outlier_frac,
                                seed: self.trial_seed(trial),
                                ..self.base.clone()
                            };
                            cells.push(Cell {
                                method: method.clone(),
                                trial,
                                spec,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

struct Cell {
    method: String,
    trial: usize,
    spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub rho: f64,
    #[serde(rename = "D")]
    pub ambient_dim: usize,
    #[serde(rename = "N_k")]
    pub points_per_subspace: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "d")]
    pub subspace_dim: usize,
    pub sigma: f64,
    pub outlier_frac: f64,
    pub trial: usize,
    pub seed: u64,
    /// `ok`, `flagged` (some ADMM solve hit its cap) or `error`.
    pub status: String,
    pub e_c: Option<f64>,
    pub e_r: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub rho: f64,
    pub sigma: f64,
    pub outlier_frac: f64,
    pub trials: usize,
    pub failed: usize,
    pub mean_e_c: Option<f64>,
    pub median_e_c: Option<f64>,
    pub se_e_c: Option<f64>,
    pub mean_e_r: Option<f64>,
    pub median_e_r: Option<f64>,
    pub se_e_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

fn run_cell(cell: &Cell, cfg: &SweepConfig, methods: &MethodRegistry) -> SweepRow {
    let spec = &cell.spec;
    let mut row = SweepRow {
        method: cell.method.clone(),
        rho: spec.rho,
        ambient_dim: spec.ambient_dim,
        points_per_subspace: spec.points_per_subspace,
        k: spec.k,
        subspace_dim: spec.subspace_dim,
        sigma: spec.sigma,
        outlier_frac: spec.outlier_frac,
        trial: cell.trial,
        seed: spec.seed,
        status: "error".into(),
        e_c: None,
        e_r: None,
        iterations: None,
        wall_ms: None,
        message: String::new(),
    };
    let start = Instant::now();
    let outcome = (|| -> Result<_> {
        let ds = make_dataset(spec)?;
        let looping = LoopConfig {
            seed: spec.seed,
            ..cfg.looping
        };
        let out = methods
            .get(&cell.method)?
            .fit(&ds.observed, &cfg.settings, &looping, spec.k)?;
        let e_c = clustering_error(&out.segmentation.labeling, &ds.labels_true)?;
        let e_r = reconstruction_error(&out.run.x_hat, &ds.x_true, None)?.full;
        Ok((e_c, e_r, out.run.trace.len(), out.run.trace.any_unconverged()))
    })();
    row.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    match outcome {
        Ok((e_c, e_r, iterations, _)) if !(e_c.is_finite() && e_r.is_finite()) => {
            row.iterations = Some(iterations);
            row.message = "non-finite metric".into();
        }
        Ok((e_c, e_r, iterations, flagged)) => {
            row.status = if flagged { "flagged" } else { "ok" }.into();
            row.e_c = Some(e_c);
            row.e_r = Some(e_r);
            row.iterations = Some(iterations);
        }
        Err(e) => row.message = e.to_string(),
    }
    row
}

/// Runs every cell of the grid on `workers` threads. Row order follows the
/// grid (method, rho, sigma, outlier fraction, trial) whatever the worker
/// count. Failures are recorded in the row and do not stop the sweep.
pub fn run_sweep(cfg: &SweepConfig, workers: usize) -> Result<SweepResult> {
    let methods = builtin_methods();
    cfg.validate(&methods)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SssaError::Config(format!("cannot start worker pool: {e}")))?;
    let cells = cfg.cells();
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(cell, cfg, &methods))
            .collect::<Vec<_>>()
    });
    Ok(SweepResult { rows })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

/// Standard error of the mean, using the sample standard deviation.
pub fn standard_error(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    Some((var / v.len() as f64).sqrt())
}

impl SweepResult {
    /// Per-cell summary, in the same order as the rows.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out: Vec<AggregateRow> = Vec::new();
        let mut groups: Vec<Vec<&SweepRow>> = Vec::new();
        for row in &self.rows {
            let same = |a: &AggregateRow| {
                a.method == row.method
                    && a.rho == row.rho
                    && a.sigma == row.sigma
                    && a.outlier_frac == row.outlier_frac
            };
            match out.iter().position(same) {
                Some(i) => groups[i].push(row),
                None => {
                    out.push(AggregateRow {
                        method: row.method.clone(),
                        rho: row.rho,
                        sigma: row.sigma,
                        outlier_frac: row.outlier_frac,
                        trials: 0,
                        failed: 0,
                        mean_e_c: None,
                        median_e_c: None,
                        se_e_c: None,
                        mean_e_r: None,
                        median_e_r: None,
                        se_e_r: None,
                    });
                    groups.push(vec![row]);
                }
            }
        }
        for (agg, rows) in out.iter_mut().zip(&groups) {
            let ec: Vec<f64> = rows.iter().filter_map(|r| r.e_c).collect();
            let er: Vec<f64> = rows.iter().filter_map(|r| r.e_r).collect();
            agg.trials = rows.len();
            agg.failed = rows.iter().filter(|r| r.status == "error").count();
            agg.mean_e_c = mean(&ec);
            agg.median_e_c = median(&ec);
            agg.se_e_c = standard_error(&ec);
            agg.mean_e_r = mean(&er);
            agg.median_e_r = median(&er);
            agg.se_e_r = standard_error(&er);
        }
        out
    }

    /// Writes the long-format table and the aggregate table. Without
    /// `timing` the `wall_ms` column is left empty so repeated sweeps give
    /// identical files.
    pub fn write(&self, rows_path: &Path, aggregate_path: &Path, timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(rows_path).map_err(|e| csv_io(rows_path, e))?;
        for row in &self.rows {
            let mut row = row.clone();
            if !timing {
                row.wall_ms = None;
            }
            w.serialize(row).map_err(|e| csv_io(rows_path, e))?;
        }
        w.flush().map_err(|e| SssaError::io(rows_path, e))?;

        let mut w = csv::Writer::from_path(aggregate_path).map_err(|e| csv_io(aggregate_path, e))?;
        for row in self.aggregate() {
            w.serialize(row).map_err(|e| csv_io(aggregate_path, e))?;
        }
        w.flush().map_err(|e| SssaError::io(aggregate_path, e))
    }

    pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        r.deserialize()
            .map(|row| row.map_err(|e| csv_io(path, e)))
            .collect()
    }
}

fn csv_io(path: &Path, e: csv::Error) -> SssaError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SssaError::io(path, io),
        other => SssaError::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Saves the configuration a sweep was run with, next to its tables.
pub fn write_config(path: &Path, cfg: &SweepConfig) -> Result<()> {
    write_json(path, cfg)
}
