//! Successive approximations: alternate imputing the missing block from the
//! current self-expressive model with re-solving the model.

use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SssaError};
use crate::init::{initialize, InitKind};
use crate::masked::{merge_missing, missing_norm, ObservedMatrix};
use crate::selfexpr::{m_step, objective, ColumnState, MStepConfig, SelfExpression};

pub const DEFAULT_OUTER_TOL: f64 = 1e-4;
pub const DEFAULT_OUTER_MAX_ITER: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sssa,
    /// Single pass from zero fill without the sparse-error term.
    SscEwzf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub init: InitKind,
    /// Seed for the random initializer.
    pub seed: u64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub mode: Mode,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            init: InitKind::Zero,
            seed: 0,
            outer_tol: DEFAULT_OUTER_TOL,
            outer_max_iter: DEFAULT_OUTER_MAX_ITER,
            mode: Mode::Sssa,
        }
    }
}

impl LoopConfig {
    /// Applies the mode contract: the zero-fill baseline is one zero-filled
    /// pass with no sparse-error term.
    pub fn effective(&self, mcfg: &MStepConfig) -> (MStepConfig, LoopConfig) {
        match self.mode {
            Mode::Sssa => (*mcfg, *self),
            Mode::SscEwzf => (
                MStepConfig {
                    lambda_e: None,
                    ..*mcfg
                },
                LoopConfig {
                    init: InitKind::Zero,
                    outer_max_iter: 1,
                    ..*self
                },
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_max_iter == 0 {
            return Err(SssaError::Config("outer_max_iter must be at least 1".into()));
        }
        if !(self.outer_tol.is_finite() && self.outer_tol > 0.0) {
            return Err(SssaError::Config("outer_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective of the M-step solution at the matrix it was solved on.
    pub objective: f64,
    pub infeasibility: f64,
    /// Relative change of the imputed block; `None` when there is no
    /// previous estimate to compare against.
    pub missing_change: Option<f64>,
    pub admm_iterations_total: usize,
    pub admm_iterations_max: usize,
    pub unconverged_columns: usize,
    /// Excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub records: Vec<IterationRecord>,
}

impl LoopTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn any_unconverged(&self) -> bool {
        self.records.iter().any(|r| r.unconverged_columns > 0)
    }

    pub fn wall_ms(&self) -> f64 {
        self.records.iter().map(|r| r.wall_ms).sum()
    }
}

/// True iff the last recorded change is strictly below `outer_tol`.
pub fn converged(trace: &LoopTrace, lcfg: &LoopConfig) -> bool {
    trace
        .records
        .last()
        .and_then(|r| r.missing_change)
        .is_some_and(|c| c < lcfg.outer_tol)
}

/// `X` on the mask, `(X C)` off it.
pub fn e_step(x: &DMatrix<f64>, c: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<DMatrix<f64>> {
    if c.nrows() != x.ncols() || c.ncols() != x.ncols() {
        return Err(SssaError::Shape {
            expected: (x.ncols(), x.ncols()),
            got: c.shape(),
        });
    }
    merge_missing(x, mask, &(x * c))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x_hat: DMatrix<f64>,
    pub expression: SelfExpression,
    pub trace: LoopTrace,
    pub converged: bool,
    /// Configurations after the mode contract was applied.
    pub mstep: MStepConfig,
    pub looping: LoopConfig,
}

/// Initializes the missing block, then alternates M-step and E-step until the
/// imputed block stops moving or the iteration cap is hit.
///
/// Each record covers one M-step followed by one E-step; the returned matrix
/// is the last E-step output, so the baseline mode also yields a completion.
pub fn run(m: &ObservedMatrix, mcfg: &MStepConfig, lcfg: &LoopConfig) -> Result<RunOutput> {
    let (mcfg, lcfg) = lcfg.effective(mcfg);
    mcfg.validate()?;
    lcfg.validate()?;
    let mask = m.mask();

    let mut x = initialize(m, lcfg.init, lcfg.seed);
    let mut trace = LoopTrace::default();
    let mut warm: Option<Vec<ColumnState>> = None;
    let mut expression = SelfExpression::zeros(m.nrows(), m.ncols());
    let mut last_objective = f64::INFINITY;

    for iteration in 0..lcfg.outer_max_iter {
        let start = Instant::now();
        let out = m_step(&x, mask, &mcfg, warm.as_deref()).map_err(|e| SssaError::Iteration {
            iteration,
            source: Box::new(e),
        })?;
        let obj = objective(&x, mask, &out.expression, &mcfg);
        let x_next = e_step(&x, &out.expression.c, mask)?;
        let change = missing_norm(&(&x_next - &x), mask) / missing_norm(&x, mask).max(1.0);

        let record = IterationRecord {
            iteration,
            objective: obj.value,
            infeasibility: obj.infeasibility,
            missing_change: Some(change),
            admm_iterations_total: out.total_iterations(),
            admm_iterations_max: out.diagnostics.iter().map(|d| d.iterations).max().unwrap_or(0),
            unconverged_columns: out.unconverged_columns(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        debug!(
            "iteration {iteration}: objective {:.6e} change {change:.3e} admm {} unconverged {}",
            record.objective, record.admm_iterations_total, record.unconverged_columns
        );
        if record.unconverged_columns > 0 {
            warn!(
                "iteration {iteration}: {} column subproblems hit the ADMM iteration cap",
                record.unconverged_columns
            );
        }
        if obj.value > last_objective * (1.0 + 1e-9) {
            debug!("iteration {iteration}: objective increased from {last_objective:.6e}");
        }
        last_objective = obj.value;
        trace.records.push(record);

        x = x_next;
        expression = out.expression;
        warm = Some(out.states);
        if converged(&trace, &lcfg) {
            break;
        }
    }

    let done = converged(&trace, &lcfg);
    info!(
        "{:?}: {} outer iterations, converged {done}",
        lcfg.mode,
        trace.len()
    );
    Ok(RunOutput {
        x_hat: x,
        expression,
        trace,
        converged: done,
        mstep: mcfg,
        looping: lcfg,
    })
}
