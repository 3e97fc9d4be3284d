//! Grid search for the lambda scale constants on labelled bundles.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::Bundle;
use crate::alternation::LoopConfig;
use crate::error::{Result, SssaError};
use crate::method::{builtin_methods, SolverSettings};
use crate::metrics::{clustering_error, reconstruction_error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub alpha_e: Vec<f64>,
    pub alpha_z: Vec<f64>,
    pub method: String,
    /// Base settings; explicit lambdas are cleared so the alphas take effect.
    pub settings: SolverSettings,
    pub looping: LoopConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub alpha_e: f64,
    pub alpha_z: f64,
    pub mean_e_c: f64,
    /// Absent when no bundle carries a ground-truth matrix.
    pub mean_e_r: Option<f64>,
    pub e_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config: CalibrationConfig,
    pub bundles: usize,
    pub points: Vec<CalibrationPoint>,
    pub best: CalibrationPoint,
}

/// Lower mean clustering error wins, then lower reconstruction error, then
/// the smaller `alpha_z`, then the smaller `alpha_e`.
pub fn compare_points(a: &CalibrationPoint, b: &CalibrationPoint) -> Ordering {
    let er = |p: &CalibrationPoint| p.mean_e_r.unwrap_or(f64::INFINITY);
    a.mean_e_c
        .total_cmp(&b.mean_e_c)
        .then(er(a).total_cmp(&er(b)))
        .then(a.alpha_z.total_cmp(&b.alpha_z))
        .then(a.alpha_e.total_cmp(&b.alpha_e))
}

pub fn select_best(points: &[CalibrationPoint]) -> Option<&CalibrationPoint> {
    points.iter().min_by(|a, b| compare_points(a, b))
}

pub fn calibrate(bundles: &[Bundle], cfg: &CalibrationConfig, workers: usize) -> Result<CalibrationReport> {
    if cfg.alpha_e.is_empty() || cfg.alpha_z.is_empty() {
        return Err(SssaError::Config("calibration grid is empty".into()));
    }
    if bundles.is_empty() {
        return Err(SssaError::Config("calibration needs at least one bundle".into()));
    }
    for (i, b) in bundles.iter().enumerate() {
        if b.labels.is_none() {
            return Err(SssaError::Data(format!("bundle {i} has no ground-truth labels")));
        }
    }
    let methods = builtin_methods();
    let method = methods.get(&cfg.method)?;

    let grid: Vec<(f64, f64)> = cfg
        .alpha_e
        .iter()
        .flat_map(|&ae| cfg.alpha_z.iter().map(move |&az| (ae, az)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..bundles.len()).map(move |b| (g, b)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SssaError::Config(format!("cannot start worker pool: {e}")))?;
    let scores: Vec<Result<(f64, Option<f64>)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(g, b)| {
                let (alpha_e, alpha_z) = grid[g];
                let bundle = &bundles[b];
                let settings = SolverSettings {
                    lambda_e: None,
                    lambda_z: None,
                    alpha_e,
                    alpha_z,
                    ..cfg.settings
                };
                let truth = bundle.labels.as_ref().expect("checked above");
                let out = method.fit(&bundle.observed, &settings, &cfg.looping, truth.k)?;
                let e_c = clustering_error(&out.segmentation.labeling, truth)?;
                let e_r = match &bundle.x_true {
                    Some(x) => Some(reconstruction_error(&out.run.x_hat, x, None)?.full),
                    None => None,
                };
                Ok((e_c, e_r))
            })
            .collect()
    });

    let mut points = Vec::with_capacity(grid.len());
    let mut scores = scores.into_iter();
    for &(alpha_e, alpha_z) in &grid {
        let mut e_c = Vec::with_capacity(bundles.len());
        let mut e_r = Vec::new();
        for _ in 0..bundles.len() {
            let (c, r) = scores.next().expect("one score per job")?;
            e_c.push(c);
            e_r.extend(r);
        }
        points.push(CalibrationPoint {
            alpha_e,
            alpha_z,
            mean_e_c: e_c.iter().sum::<f64>() / e_c.len() as f64,
            mean_e_r: (!e_r.is_empty()).then(|| e_r.iter().sum::<f64>() / e_r.len() as f64),
            e_c,
        });
    }
    let best = select_best(&points).expect("grid is non-empty").clone();
    Ok(CalibrationReport {
        config: cfg.clone(),
        bundles: bundles.len(),
        points,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_dataset, SyntheticSpec};

    fn point(ae: f64, az: f64, ec: f64, er: Option<f64>) -> CalibrationPoint {
        CalibrationPoint {
            alpha_e: ae,
            alpha_z: az,
            mean_e_c: ec,
            mean_e_r: er,
            e_c: vec![ec],
        }
    }

    #[test]
    fn selection_order() {
        let pts = vec![
            point(1.0, 100.0, 0.1, Some(0.0)),
            point(1.0, 300.0, 0.0, Some(0.2)),
            point(1.0, 200.0, 0.0, Some(0.2)),
            point(2.0, 50.0, 0.0, Some(0.3)),
            point(0.5, 200.0, 0.0, None),
        ];
        let best = select_best(&pts).unwrap();
        assert_eq!((best.alpha_e, best.alpha_z), (1.0, 200.0));
        assert!(select_best(&[]).is_none());
    }

    fn cfg(ae: Vec<f64>, az: Vec<f64>) -> CalibrationConfig {
        CalibrationConfig {
            alpha_e: ae,
            alpha_z: az,
            method: "sssa".into(),
            settings: SolverSettings::default(),
            looping: LoopConfig {
                outer_max_iter: 2,
                ..LoopConfig::default()
            },
        }
    }

    fn bundles() -> Vec<Bundle> {
        (0..2)
            .map(|seed| {
                let spec = SyntheticSpec {
                    k: 2,
                    ambient_dim: 8,
                    subspace_dim: 2,
                    points_per_subspace: 6,
                    rho: 0.2,
                    seed,
                    ..SyntheticSpec::low_rank()
                };
                Bundle::from_dataset(&make_dataset(&spec).unwrap())
            })
            .collect()
    }

    #[test]
    fn singleton_grid_returns_its_point() {
        let report = calibrate(&bundles(), &cfg(vec![3.0], vec![70.0]), 1).unwrap();
        assert_eq!(report.points.len(), 1);
        assert_eq!((report.best.alpha_e, report.best.alpha_z), (3.0, 70.0));
        assert_eq!(report.best.e_c.len(), 2);
    }

    #[test]
    fn best_is_no_worse_than_any_grid_point() {
        let report = calibrate(&bundles(), &cfg(vec![1.0, 20.0], vec![50.0, 800.0]), 2).unwrap();
        assert_eq!(report.points.len(), 4);
        for p in &report.points {
            assert_ne!(compare_points(&report.best, p), Ordering::Greater);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            calibrate(&bundles(), &cfg(vec![], vec![1.0]), 1),
            Err(SssaError::Config(_))
        ));
        assert!(calibrate(&[], &cfg(vec![1.0], vec![1.0]), 1).is_err());
        let mut b = bundles();
        b[0].labels = None;
        assert!(matches!(
            calibrate(&b, &cfg(vec![1.0], vec![1.0]), 1),
            Err(SssaError::Data(_))
        ));
    }
}
