//! Runnable methods, registered by name.
//!
//! A method turns an [`ObservedMatrix`] into a completion plus a segmentation.
//! The built-ins are the full alternation (`sssa`) and its single-pass
//! zero-fill baseline (`ssc-ewzf`).

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::alternation::{run, LoopConfig, Mode, RunOutput};
use crate::error::Result;
use crate::masked::ObservedMatrix;
use crate::registry::Registry;
use crate::selfexpr::{
    default_lambdas, MStepConfig, DEFAULT_ADMM_MAX_ITER, DEFAULT_ADMM_TOL, DEFAULT_ALPHA_E,
    DEFAULT_ALPHA_Z, DEFAULT_RHO_FACTOR,
};
use crate::spectral::{build_affinity, cluster, Segmentation};

/// User-facing solver options; unset lambdas are derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub lambda_e: Option<f64>,
    pub lambda_z: Option<f64>,
    pub alpha_e: f64,
    pub alpha_z: f64,
    pub affine: bool,
    /// Defaults to `DEFAULT_RHO_FACTOR * lambda_z`.
    pub admm_rho: Option<f64>,
    pub admm_tol: f64,
    pub admm_max_iter: usize,
    pub adaptive_rho: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda_e: None,
            lambda_z: None,
            alpha_e: DEFAULT_ALPHA_E,
            alpha_z: DEFAULT_ALPHA_Z,
            affine: false,
            admm_rho: None,
            admm_tol: DEFAULT_ADMM_TOL,
            admm_max_iter: DEFAULT_ADMM_MAX_ITER,
            adaptive_rho: false,
        }
    }
}

impl SolverSettings {
    /// Resolves every default against the zero-filled data.
    pub fn resolve(&self, m: &ObservedMatrix) -> Result<MStepConfig> {
        let (lambda_e, lambda_z) = match (self.lambda_e, self.lambda_z) {
            (Some(le), Some(lz)) => (le, lz),
            (le, lz) => {
                let (auto_e, auto_z) = default_lambdas(m.values(), m.mask(), self.alpha_e, self.alpha_z)?;
                (le.unwrap_or(auto_e), lz.unwrap_or(auto_z))
            }
        };
        let cfg = MStepConfig {
            lambda_e: Some(lambda_e),
            lambda_z,
            affine: self.affine,
            admm_rho: self.admm_rho.unwrap_or(DEFAULT_RHO_FACTOR * lambda_z),
            admm_tol: self.admm_tol,
            admm_max_iter: self.admm_max_iter,
            adaptive_rho: self.adaptive_rho,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub run: RunOutput,
    pub segmentation: Segmentation,
}

impl FitOutput {
    pub fn x_hat(&self) -> &DMatrix<f64> {
        &self.run.x_hat
    }
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    fn mode(&self) -> Mode;

    /// Completes `m` and segments its columns into `k` groups.
    fn fit(
        &self,
        m: &ObservedMatrix,
        settings: &SolverSettings,
        lcfg: &LoopConfig,
        k: usize,
    ) -> Result<FitOutput> {
        let mcfg = settings.resolve(m)?;
        let lcfg = LoopConfig {
            mode: self.mode(),
            ..*lcfg
        };
        info!(
            "{}: lambda_e {:?} lambda_z {:.4e} affine {}",
            self.name(),
            mcfg.lambda_e,
            mcfg.lambda_z,
            mcfg.affine
        );
        let run = run(m, &mcfg, &lcfg)?;
        let segmentation = cluster(&build_affinity(&run.expression.c), k, lcfg.seed)?;
        Ok(FitOutput { run, segmentation })
    }
}

pub struct Sssa;

pub struct SscEwzf;

impl Method for Sssa {
    fn name(&self) -> &'static str {
        "sssa"
    }

    fn mode(&self) -> Mode {
        Mode::Sssa
    }
}

impl Method for SscEwzf {
    fn name(&self) -> &'static str {
        "ssc-ewzf"
    }

    fn mode(&self) -> Mode {
        Mode::SscEwzf
    }
}

pub type MethodRegistry = Registry<dyn Method>;

pub fn builtin_methods() -> MethodRegistry {
    let mut reg: MethodRegistry = Registry::new("method");
    for method in [Box::new(Sssa) as Box<dyn Method>, Box::new(SscEwzf)] {
        reg.register(method.name(), method);
    }
    reg
}
