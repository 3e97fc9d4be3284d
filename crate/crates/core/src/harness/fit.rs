//! Single end-to-end runs on a bundle, their reports and output files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::{Bundle, BundleMeta};
use super::csvio::{read_labels, read_matrix, write_json, write_labels, write_matrix, write_sparse};
use crate::alternation::{LoopConfig, LoopTrace};
use crate::error::{Result, SssaError};
use crate::method::{FitOutput, MethodRegistry, SolverSettings};
use crate::metrics::{evaluate, MetricsReport};
use crate::selfexpr::MStepConfig;
use crate::spectral::Labeling;

pub const X_HAT_FILE: &str = "X_hat.csv";
pub const C_FILE: &str = "C.csv";
pub const LABELS_OUT_FILE: &str = "labels.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";

/// Everything needed to run one method on one bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJob {
    pub method: String,
    pub settings: SolverSettings,
    pub looping: LoopConfig,
    /// Overrides the group count from the bundle.
    pub k: Option<usize>,
}

impl FitJob {
    pub fn new(method: &str) -> Self {
        FitJob {
            method: method.to_string(),
            settings: SolverSettings::default(),
            looping: LoopConfig::default(),
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    /// Some ADMM column solve hit its iteration cap.
    pub admm_unconverged: bool,
    pub outer_converged: bool,
    pub empty_clusters: Vec<usize>,
    pub isolated_points: Vec<usize>,
}

/// Machine-readable record of a run. Holds the resolved configuration, so
/// the run can be repeated exactly. Contains no timing data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub k: usize,
    pub settings: SolverSettings,
    pub mstep: MStepConfig,
    pub looping: LoopConfig,
    pub bundle: BundleMeta,
    pub trace: LoopTrace,
    pub flags: RunFlags,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub output: FitOutput,
    pub report: RunReport,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    total_ms: f64,
    iterations_ms: Vec<f64>,
}

pub fn fit_bundle(bundle: &Bundle, job: &FitJob, methods: &MethodRegistry) -> Result<FitResult> {
    let method = methods.get(&job.method)?;
    let k = job
        .k
        .or_else(|| bundle.k())
        .ok_or_else(|| SssaError::Config("number of groups unknown: pass --k or record K in meta.json".into()))?;
    let output = method.fit(&bundle.observed, &job.settings, &job.looping, k)?;
    let metrics = evaluate(
        &output.run.x_hat,
        bundle.observed.mask(),
        &output.segmentation.labeling,
        bundle.x_true.as_ref(),
        bundle.labels.as_ref(),
    )?;
    let report = RunReport {
        method: job.method.clone(),
        k,
        settings: job.settings,
        mstep: output.run.mstep,
        looping: output.run.looping,
        bundle: bundle.meta.clone(),
        trace: output.run.trace.clone(),
        flags: RunFlags {
            admm_unconverged: output.run.trace.any_unconverged(),
            outer_converged: output.run.converged,
            empty_clusters: output.segmentation.labeling.empty_clusters(),
            isolated_points: output.segmentation.isolated.clone(),
        },
        metrics,
    };
    Ok(FitResult { output, report })
}

/// Writes the completion, coefficients, labels and report. Wall-clock data
/// goes to a separate file, and only when `timing` is set.
pub fn write_fit(dir: &Path, result: &FitResult, timing: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SssaError::io(dir, e))?;
    let run = &result.output.run;
    write_matrix(&dir.join(X_HAT_FILE), &run.x_hat)?;
    write_sparse(&dir.join(C_FILE), &run.expression.c)?;
    write_labels(&dir.join(LABELS_OUT_FILE), &result.output.segmentation.labeling.labels)?;
    write_json(&dir.join(REPORT_FILE), &result.report)?;
    if timing {
        let t = Timing {
            total_ms: run.trace.wall_ms(),
            iterations_ms: run.trace.records.iter().map(|r| r.wall_ms).collect(),
        };
        write_json(&dir.join(TIMING_FILE), &t)?;
    }
    Ok(())
}

/// Scores a previous `fit` output directory against a bundle's ground truth.
pub fn evaluate_outputs(bundle: &Bundle, fit_dir: &Path) -> Result<MetricsReport> {
    let x_hat = read_matrix(&fit_dir.join(X_HAT_FILE))?;
    let labels = Labeling::from_labels(read_labels(&fit_dir.join(LABELS_OUT_FILE))?);
    if labels.len() != bundle.observed.ncols() {
        return Err(SssaError::LabelLength(labels.len(), bundle.observed.ncols()));
    }
    evaluate(
        &x_hat,
        bundle.observed.mask(),
        &labels,
        bundle.x_true.as_ref(),
        bundle.labels.as_ref(),
    )
}
