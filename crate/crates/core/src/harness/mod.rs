//! File formats, single runs, sweeps and calibration.

pub mod bundle;
pub mod calibrate;
pub mod csvio;
pub mod fit;
pub mod sweep;

pub use bundle::{load_bundle, Bundle, BundleMeta};
pub use calibrate::{calibrate, CalibrationConfig, CalibrationReport};
pub use fit::{evaluate_outputs, fit_bundle, write_fit, FitJob, FitResult, RunReport};
pub use sweep::{run_sweep, SweepConfig, SweepResult, SweepRow};
