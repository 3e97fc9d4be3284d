//! Union-of-subspaces benchmark data: random bases, points, noise, outlying
//! entries and uniformly random missing masks.

use log::debug;
use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SssaError};
use crate::masked::ObservedMatrix;
use crate::spectral::Labeling;

/// Retries per column before a fully missing column is forced to keep one entry.
const MASK_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    /// One affine map of the whole matrix onto `[0, 1]`.
    Range01,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub k: usize,
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub points_per_subspace: usize,
    pub rho: f64,
    pub sigma: f64,
    pub outlier_frac: f64,
    pub normalization: Normalization,
    pub shuffle: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    fn preset(k: usize, ambient_dim: usize, subspace_dim: usize, points_per_subspace: usize) -> Self {
        Self {
            k,
            ambient_dim,
            subspace_dim,
            points_per_subspace,
            rho: 0.0,
            sigma: 0.0,
            outlier_frac: 0.0,
            normalization: Normalization::None,
            shuffle: false,
            seed: 0,
        }
    }

    /// Low-rank case: 3 subspaces of dimension 5 in R^50, 20 points each.
    pub fn low_rank() -> Self {
        Self::preset(3, 50, 5, 20)
    }

    /// High-rank case: 10 subspaces of dimension 10 in R^80, 50 points each.
    pub fn high_rank() -> Self {
        Self::preset(10, 80, 10, 50)
    }

    /// Smaller high-rank case: 7 subspaces of dimension 5 in R^35, 30 points each.
    pub fn high_rank_small() -> Self {
        Self::preset(7, 35, 5, 30)
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "lr" => Ok(Self::low_rank()),
            "hr" => Ok(Self::high_rank()),
            "hr-small" => Ok(Self::high_rank_small()),
            other => Err(SssaError::Unknown {
                kind: "preset",
                name: other.to_string(),
                available: "lr, hr, hr-small".into(),
            }),
        }
    }

    pub fn n(&self) -> usize {
        self.k * self.points_per_subspace
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SssaError::Config(m));
        if self.k == 0 || self.points_per_subspace == 0 {
            return bad("k and points_per_subspace must be positive".into());
        }
        if self.subspace_dim == 0 || self.subspace_dim >= self.ambient_dim {
            return bad(format!(
                "subspace dimension {} must be in 1..{}",
                self.subspace_dim, self.ambient_dim
            ));
        }
        if self.subspace_dim > self.points_per_subspace {
            return bad("subspace dimension cannot exceed points per subspace".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must be in [0, 1), got {}", self.rho));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.outlier_frac) {
            return bad(format!("outlier fraction must be in [0, 1), got {}", self.outlier_frac));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub observed: ObservedMatrix,
    /// Clean matrix (after normalization, before noise and outliers).
    pub x_true: DMatrix<f64>,
    pub labels_true: Labeling,
    pub spec: SyntheticSpec,
    pub bases: Vec<DMatrix<f64>>,
    pub outlier_positions: Vec<(usize, usize)>,
    /// Columns whose mask had to be redrawn because every entry was missing.
    pub resampled_columns: Vec<usize>,
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    // column-major draw order
    let mut m = DMatrix::zeros(rows, cols);
    for v in m.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    m
}

/// Orthonormal `D x d` basis from the QR factorization of a Gaussian matrix.
pub fn gen_subspace_basis(ambient_dim: usize, dim: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if dim == 0 || dim >= ambient_dim {
        return Err(SssaError::Config(format!(
            "subspace dimension {dim} must be in 1..{ambient_dim}"
        )));
    }
    let g = gaussian(ambient_dim, dim, rng);
    let qr = g.qr();
    let mut q = qr.q();
    // fix column signs so the basis is a deterministic function of the draw
    let r = qr.r();
    for c in 0..dim {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    Ok(q)
}

/// `count` points `B g` with standard Gaussian coefficients.
pub fn gen_points(basis: &DMatrix<f64>, count: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    basis * gaussian(basis.ncols(), count, rng)
}

/// Each entry missing independently with probability `rho`; returns the mask
/// (true = observed) and the columns that needed redrawing.
///
/// All entries are drawn first so masks for different `rho` from the same
/// generator state are nested.
pub fn gen_mask(rows: usize, cols: usize, rho: f64, rng: &mut impl Rng) -> Result<(DMatrix<bool>, Vec<usize>)> {
    if !(0.0..1.0).contains(&rho) {
        return Err(SssaError::Config(format!("rho must be in [0, 1), got {rho}")));
    }
    let mut mask = DMatrix::from_element(rows, cols, true);
    for v in mask.iter_mut() {
        *v = rng.random::<f64>() >= rho;
    }
    let mut resampled = Vec::new();
    for j in 0..cols {
        if (0..rows).any(|i| mask[(i, j)]) {
            continue;
        }
        resampled.push(j);
        let mut ok = false;
        for _ in 0..MASK_RETRIES {
            for i in 0..rows {
                mask[(i, j)] = rng.random::<f64>() >= rho;
            }
            if (0..rows).any(|i| mask[(i, j)]) {
                ok = true;
                break;
            }
        }
        if !ok {
            let i = rng.random_range(0..rows);
            mask[(i, j)] = true;
        }
        debug!("column {j} was fully missing; mask redrawn");
    }
    Ok((mask, resampled))
}

pub fn add_noise(x: &DMatrix<f64>, sigma: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SssaError::Config(format!("sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    Ok(x + gaussian(x.nrows(), x.ncols(), rng) * sigma)
}

/// Adds a uniform draw from `[0.2, 1]` to `⌊frac·D·N⌋` distinct random entries.
pub fn add_outliers(
    x: &DMatrix<f64>,
    frac: f64,
    rng: &mut impl Rng,
) -> Result<(DMatrix<f64>, Vec<(usize, usize)>)> {
    if !(0.0..1.0).contains(&frac) {
        return Err(SssaError::Config(format!("outlier fraction must be in [0, 1), got {frac}")));
    }
    let total = x.len();
    let count = (frac * total as f64).floor() as usize;
    let mut out = x.clone();
    let mut picks = index::sample(rng, total, count).into_vec();
    picks.sort_unstable();
    let positions: Vec<(usize, usize)> = picks
        .into_iter()
        .map(|flat| (flat % x.nrows(), flat / x.nrows()))
        .collect();
    for &(i, j) in &positions {
        out[(i, j)] += rng.random_range(0.2..=1.0);
    }
    Ok((out, positions))
}

pub fn normalize_range01(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (lo, hi) = (x.min(), x.max());
    if hi > lo {
        x.map(|v| (v - lo) / (hi - lo))
    } else {
        x.map(|_| 0.0)
    }
}

/// bases → points → concatenate → (shuffle) → (normalize) → noise →
/// outliers → mask.
pub fn make_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d, nk) = (spec.ambient_dim, spec.points_per_subspace);
    let n = spec.n();

    let mut bases = Vec::with_capacity(spec.k);
    let mut x = DMatrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..spec.k {
        let basis = gen_subspace_basis(d, spec.subspace_dim, &mut rng)?;
        let pts = gen_points(&basis, nk, &mut rng);
        x.view_mut((0, k * nk), (d, nk)).copy_from(&pts);
        labels.extend(std::iter::repeat_n(k, nk));
        bases.push(basis);
    }
    if spec.shuffle {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        x = DMatrix::from_fn(d, n, |i, j| x[(i, order[j])]);
        labels = order.iter().map(|&j| labels[j]).collect();
    }
    if spec.normalization == Normalization::Range01 {
        x = normalize_range01(&x);
    }
    let x_true = x.clone();
    let noisy = add_noise(&x, spec.sigma, &mut rng)?;
    let (corrupted, outlier_positions) = add_outliers(&noisy, spec.outlier_frac, &mut rng)?;
    let (mask, resampled_columns) = gen_mask(d, n, spec.rho, &mut rng)?;
    let observed = ObservedMatrix::new(corrupted, mask)?;

    Ok(Dataset {
        observed,
        x_true,
        labels_true: Labeling::new(labels, spec.k)?,
        spec: spec.clone(),
        bases,
        outlier_positions,
        resampled_columns,
    })
}
