//! Dataset bundles: a directory holding the observed matrix and whatever
//! ground truth is available.
//!
//! ```text
//! X_observed.csv    required, NaN marks a missing entry
//! mask.csv          optional, 1 observed / 0 missing; must agree with the NaNs
//! X_true.csv        optional
//! labels_true.csv   optional
//! meta.json         required
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::csvio::{
    read_json, read_labels, read_mask, read_matrix, write_json, write_labels, write_mask,
    write_matrix,
};
use crate::error::{Result, SssaError};
use crate::masked::ObservedMatrix;
use crate::spectral::Labeling;
use crate::synth::{Dataset, SyntheticSpec};

pub const OBSERVED_FILE: &str = "X_observed.csv";
pub const MASK_FILE: &str = "mask.csv";
pub const TRUTH_FILE: &str = "X_true.csv";
pub const LABELS_FILE: &str = "labels_true.csv";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub provenance: String,
    /// Full generator settings for synthetic bundles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub observed: ObservedMatrix,
    pub x_true: Option<DMatrix<f64>>,
    pub labels: Option<Labeling>,
    pub meta: BundleMeta,
}

impl Bundle {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let spec = &ds.spec;
        Bundle {
            observed: ds.observed.clone(),
            x_true: Some(ds.x_true.clone()),
            labels: Some(ds.labels_true.clone()),
            meta: BundleMeta {
                d: ds.observed.nrows(),
                n: ds.observed.ncols(),
                k: Some(spec.k),
                rho: Some(spec.rho),
                seed: Some(spec.seed),
                provenance: "synthetic union of subspaces".into(),
                synthetic: Some(spec.clone()),
            },
        }
    }

    /// Number of groups recorded in the metadata, else in the labels.
    pub fn k(&self) -> Option<usize> {
        self.meta.k.or(self.labels.as_ref().map(|l| l.k))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SssaError::io(dir, e))?;
        write_matrix(&dir.join(OBSERVED_FILE), &self.observed.to_nan())?;
        write_mask(&dir.join(MASK_FILE), self.observed.mask())?;
        if let Some(x) = &self.x_true {
            write_matrix(&dir.join(TRUTH_FILE), x)?;
        }
        if let Some(l) = &self.labels {
            write_labels(&dir.join(LABELS_FILE), &l.labels)?;
        }
        write_json(&dir.join(META_FILE), &self.meta)
    }
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let raw = read_matrix(&dir.join(OBSERVED_FILE))?;
    let mask_path = dir.join(MASK_FILE);
    let observed = if mask_path.exists() {
        let mask = read_mask(&mask_path)?;
        if mask.shape() != raw.shape() {
            return Err(SssaError::Shape {
                expected: raw.shape(),
                got: mask.shape(),
            });
        }
        for j in 0..raw.ncols() {
            for i in 0..raw.nrows() {
                if raw[(i, j)].is_nan() == mask[(i, j)] {
                    return Err(SssaError::Data(format!(
                        "{}: entry ({i}, {j}) is {} but mask.csv says {}",
                        dir.display(),
                        if raw[(i, j)].is_nan() { "NaN" } else { "a number" },
                        if mask[(i, j)] { "observed" } else { "missing" }
                    )));
                }
            }
        }
        ObservedMatrix::new(raw.map(|v| if v.is_nan() { 0.0 } else { v }), mask)?
    } else {
        ObservedMatrix::from_nan(raw)?
    };

    let truth_path = dir.join(TRUTH_FILE);
    let x_true = if truth_path.exists() {
        let x = read_matrix(&truth_path)?;
        if x.shape() != observed.values().shape() {
            return Err(SssaError::Shape {
                expected: observed.values().shape(),
                got: x.shape(),
            });
        }
        Some(x)
    } else {
        None
    };

    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        let l = read_labels(&labels_path)?;
        if l.len() != observed.ncols() {
            return Err(SssaError::LabelLength(l.len(), observed.ncols()));
        }
        Some(Labeling::from_labels(l))
    } else {
        None
    };

    let meta: BundleMeta = read_json(&dir.join(META_FILE))?;
    if (meta.d, meta.n) != observed.values().shape() {
        return Err(SssaError::Shape {
            expected: observed.values().shape(),
            got: (meta.d, meta.n),
        });
    }
    Ok(Bundle {
        observed,
        x_true,
        labels,
        meta,
    })
}
