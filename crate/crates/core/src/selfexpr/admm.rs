//! ADMM for one column of the masked self-expression program
//!
//! ```text
//! min ‖c‖₁ + λe‖e‖₁ + (λz/2)‖b − A c − e‖²   s.t. c_j = 0, (affine) 1ᵀc = 1
//! ```
//!
//! where `A` is the current matrix restricted to the observed rows of column
//! `j` and `b` is column `j` on those rows; `z = b − A c − e`. Column `j` is
//! dropped from `A` so its coefficient is structurally zero.
//!
//! Splitting: the smooth block `x = (c, e)` is coupled to a nonsmooth copy
//! `(a, f)` by `c = a`, `e = f`. The smooth update is a ridge solve done
//! through the `|S| x |S|` system `(ρ/λz + 1) I + A Aᵀ` (Woodbury), with the
//! affine constraint applied exactly as a rank-one correction. The nonsmooth
//! update is two soft-thresholds.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::MStepConfig;
use crate::error::{Result, SssaError};
use crate::masked::ColumnSupport;

/// Over-relaxation factor applied to the smooth iterate.
const RELAXATION: f64 = 1.6;

/// `sign(v) * max(|v| - tau, 0)`.
#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Optimal split of a residual `w` into `e + z` minimizing
/// `λe|e| + (λz/2) z²`. Returns `(e, z)`.
#[inline]
pub fn huber_split(w: f64, lambda_e: Option<f64>, lambda_z: f64) -> (f64, f64) {
    match lambda_e {
        Some(le) => {
            let e = soft_threshold(w, le / lambda_z);
            (e, w - e)
        }
        None => (0.0, w),
    }
}

/// Huber loss with threshold `λe/λz`, i.e. `min_{e+z=w} λe|e| + (λz/2)z²`.
pub fn huber(w: f64, lambda_e: Option<f64>, lambda_z: f64) -> f64 {
    match lambda_e {
        Some(le) => {
            let t = le / lambda_z;
            if w.abs() <= t {
                0.5 * lambda_z * w * w
            } else {
                le * w.abs() - 0.5 * le * t
            }
        }
        None => 0.5 * lambda_z * w * w,
    }
}

/// Iterates carried between outer iterations for warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnState {
    /// Sparse coefficient copy, length N (entry `j` always zero).
    pub coef: DVector<f64>,
    /// Sparse error copy on the observed rows.
    pub err: DVector<f64>,
    pub coef_dual: DVector<f64>,
    pub err_dual: DVector<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdmmDiagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct ColumnSolution {
    /// Length-N coefficients with a structural zero at the column's own index.
    pub c: DVector<f64>,
    /// Sparse error on the observed rows (same order as the support).
    pub e: DVector<f64>,
    /// Dense noise on the observed rows.
    pub z: DVector<f64>,
    pub objective: f64,
    pub diagnostics: AdmmDiagnostics,
    pub state: ColumnState,
}

struct SmoothSolver {
    chol: Cholesky<f64, Dyn>,
    rho: f64,
    with_error: bool,
    /// `H⁻¹ g` for the affine constraint `gᵀx = 1`, g = (1, 0).
    affine_dir: Option<(DVector<f64>, DVector<f64>)>,
}

impl SmoothSolver {
    fn new(a: &DMatrix<f64>, lambda_z: f64, rho: f64, with_error: bool, affine: bool) -> Result<Self> {
        let s = a.nrows();
        let shift = rho / lambda_z + if with_error { 1.0 } else { 0.0 };
        let gram = a * a.transpose() + DMatrix::identity(s, s) * shift;
        let chol = Cholesky::new(gram)
            .ok_or_else(|| SssaError::Data("ridge system is not positive definite".into()))?;
        let mut solver = Self {
            chol,
            rho,
            with_error,
            affine_dir: None,
        };
        if affine {
            let g_c = DVector::from_element(a.ncols(), 1.0);
            let g_e = DVector::zeros(s);
            solver.affine_dir = Some(solver.apply_inverse(a, g_c, g_e));
        }
        Ok(solver)
    }

    /// `(λz MᵀM + ρ I)⁻¹ r` with `M = [A I]` (or `A` without the error block).
    fn apply_inverse(
        &self,
        a: &DMatrix<f64>,
        r_c: DVector<f64>,
        r_e: DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut c = DVector::zeros(r_c.len());
        let mut e = DVector::zeros(r_e.len());
        let mut scratch = DVector::zeros(a.nrows());
        self.apply_inverse_into(a, &r_c, &r_e, &mut c, &mut e, &mut scratch);
        (c, e)
    }

    fn apply_inverse_into(
        &self,
        a: &DMatrix<f64>,
        r_c: &DVector<f64>,
        r_e: &DVector<f64>,
        c: &mut DVector<f64>,
        e: &mut DVector<f64>,
        scratch: &mut DVector<f64>,
    ) {
        // scratch = λz y, where y solves the |S| x |S| system
        scratch.gemv(1.0, a, r_c, 0.0);
        if self.with_error {
            *scratch += r_e;
        }
        self.chol.solve_mut(scratch);
        c.copy_from(r_c);
        c.gemv_tr(-1.0, a, scratch, 1.0);
        *c /= self.rho;
        e.copy_from(r_e);
        if self.with_error {
            *e -= &*scratch;
            *e /= self.rho;
        }
    }

    fn solve_into(
        &self,
        a: &DMatrix<f64>,
        r_c: &DVector<f64>,
        r_e: &DVector<f64>,
        c: &mut DVector<f64>,
        e: &mut DVector<f64>,
        scratch: &mut DVector<f64>,
    ) {
        self.apply_inverse_into(a, r_c, r_e, c, e, scratch);
        if let Some((h_c, h_e)) = &self.affine_dir {
            let scale = (c.sum() - 1.0) / h_c.sum();
            c.axpy(-scale, h_c, 1.0);
            if self.with_error {
                e.axpy(-scale, h_e, 1.0);
            }
        }
    }
}

/// Solves the subproblem for `support.column` with every other column of `x`
/// as dictionary, restricted to the observed rows.
pub fn solve_column(
    x: &DMatrix<f64>,
    support: &ColumnSupport,
    cfg: &MStepConfig,
    warm: Option<&ColumnState>,
) -> Result<ColumnSolution> {
    let n = x.ncols();
    let j = support.column;
    let rows = &support.rows;
    let s = rows.len();
    if j >= n || s == 0 || rows.iter().any(|&r| r >= x.nrows()) {
        return Err(SssaError::Data(format!("invalid support for column {j}")));
    }
    for &r in rows {
        for col in 0..n {
            if !x[(r, col)].is_finite() {
                return Err(SssaError::NonFinite { row: r, col });
            }
        }
    }

    let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
    let m = others.len();
    let a = DMatrix::from_fn(s, m, |r, k| x[(rows[r], others[k])]);
    let b = DVector::from_fn(s, |r, _| x[(rows[r], j)]);
    let lambda_z = cfg.lambda_z;
    let lambda_e = cfg.lambda_e;
    let with_error = lambda_e.is_some();

    let finish = |coef: DVector<f64>, diagnostics: AdmmDiagnostics, state: ColumnState| {
        let resid = &b - &a * &coef;
        let mut e = DVector::zeros(s);
        let mut z = DVector::zeros(s);
        for r in 0..s {
            let (ev, zv) = huber_split(resid[r], lambda_e, lambda_z);
            e[r] = ev;
            z[r] = zv;
        }
        let objective = coef.iter().map(|v| v.abs()).sum::<f64>()
            + lambda_e.map_or(0.0, |le| le * e.iter().map(|v| v.abs()).sum::<f64>())
            + 0.5 * lambda_z * z.norm_squared();
        let mut c = DVector::zeros(n);
        for (k, &col) in others.iter().enumerate() {
            c[col] = coef[k];
        }
        ColumnSolution {
            c,
            e,
            z,
            objective,
            diagnostics,
            state,
        }
    };

    if m == 0 {
        let state = ColumnState {
            coef: DVector::zeros(n),
            err: DVector::zeros(s),
            coef_dual: DVector::zeros(n),
            err_dual: DVector::zeros(s),
            rho: cfg.admm_rho,
        };
        let diag = AdmmDiagnostics {
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: !cfg.affine,
            rho: cfg.admm_rho,
        };
        return Ok(finish(DVector::zeros(0), diag, state));
    }

    let pick = |v: &DVector<f64>| DVector::from_fn(m, |k, _| v[others[k]]);
    let warm = warm.filter(|w| w.coef.len() == n && w.err.len() == s);
    let (mut coef, mut err, mut u, mut w, mut rho) = match warm {
        Some(st) => {
            let rho = if cfg.adaptive_rho { st.rho } else { cfg.admm_rho };
            // scaled duals are expressed in units of 1/rho
            let rescale = st.rho / rho;
            (
                pick(&st.coef),
                if with_error { st.err.clone() } else { DVector::zeros(s) },
                pick(&st.coef_dual) * rescale,
                if with_error { &st.err_dual * rescale } else { DVector::zeros(s) },
                rho,
            )
        }
        None => (
            DVector::zeros(m),
            DVector::zeros(s),
            DVector::zeros(m),
            DVector::zeros(s),
            cfg.admm_rho,
        ),
    };

    let atb = a.tr_mul(&b) * lambda_z;
    let b_scaled = &b * lambda_z;
    let mut solver = SmoothSolver::new(&a, lambda_z, rho, with_error, cfg.affine)?;
    let err_tau = lambda_e.unwrap_or(0.0);

    let mut diag = AdmmDiagnostics {
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        converged: false,
        rho,
    };

    let mut r_c = DVector::zeros(m);
    let mut r_e = DVector::zeros(s);
    let mut c_raw = DVector::zeros(m);
    let mut e_raw = DVector::zeros(s);
    let mut scratch = DVector::zeros(s);
    for it in 1..=cfg.admm_max_iter {
        r_c.zip_zip_apply(&coef, &u, |r, x, d| *r = rho * (x - d));
        r_c += &atb;
        if with_error {
            r_e.zip_zip_apply(&err, &w, |r, x, d| *r = rho * (x - d));
            r_e += &b_scaled;
        }
        solver.solve_into(&a, &r_c, &r_e, &mut c_raw, &mut e_raw, &mut scratch);

        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        let tau = 1.0 / rho;
        for k in 0..m {
            let smooth = RELAXATION * c_raw[k] + (1.0 - RELAXATION) * coef[k];
            let next = soft_threshold(smooth + u[k], tau);
            dual = dual.max((next - coef[k]).abs());
            primal = primal.max((c_raw[k] - next).abs());
            u[k] += smooth - next;
            coef[k] = next;
        }
        if with_error {
            let tau = err_tau / rho;
            for r in 0..s {
                let smooth = RELAXATION * e_raw[r] + (1.0 - RELAXATION) * err[r];
                let next = soft_threshold(smooth + w[r], tau);
                dual = dual.max((next - err[r]).abs());
                primal = primal.max((e_raw[r] - next).abs());
                w[r] += smooth - next;
                err[r] = next;
            }
        }
        if cfg.affine {
            primal = primal.max((coef.sum() - 1.0).abs());
        }

        diag.iterations = it;
        diag.primal_residual = primal;
        diag.dual_residual = dual;
        if primal <= cfg.admm_tol && dual <= cfg.admm_tol {
            diag.converged = true;
            break;
        }

        if cfg.adaptive_rho && it % 10 == 0 {
            // balance the two residuals the stopping rule looks at
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u /= factor;
                w /= factor;
                solver = SmoothSolver::new(&a, lambda_z, rho, with_error, cfg.affine)?;
            }
        }
    }
    diag.rho = rho;

    let mut full_coef = DVector::zeros(n);
    let mut full_dual = DVector::zeros(n);
    for (k, &col) in others.iter().enumerate() {
        full_coef[col] = coef[k];
        full_dual[col] = u[k];
    }
    let state = ColumnState {
        coef: full_coef,
        err,
        coef_dual: full_dual,
        err_dual: w,
        rho,
    };
    Ok(finish(coef, diag, state))
}
