//! Affinity construction and normalized spectral clustering.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SssaError};

/// Added to every degree so isolated points keep a finite normalization.
pub const DEGREE_EPS: f64 = 1e-12;
pub const KMEANS_RESTARTS: usize = 20;
pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-9;

/// Symmetric, nonnegative, zero-diagonal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinity(DMatrix<f64>);

impl Affinity {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    /// Validates an arbitrary weight matrix.
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(SssaError::Shape {
                expected: (w.nrows(), w.nrows()),
                got: w.shape(),
            });
        }
        for i in 0..w.nrows() {
            if w[(i, i)] != 0.0 {
                return Err(SssaError::Data(format!("affinity diagonal nonzero at {i}")));
            }
            for j in 0..w.ncols() {
                if !(w[(i, j)] >= 0.0 && w[(i, j)] == w[(j, i)] && w[(i, j)].is_finite()) {
                    return Err(SssaError::Data(format!(
                        "affinity must be symmetric, finite and nonnegative (entry {i},{j})"
                    )));
                }
            }
        }
        Ok(Self(w))
    }
}

/// `W = |C| + |C|ᵀ`, with the diagonal forced to zero.
pub fn build_affinity(c: &DMatrix<f64>) -> Affinity {
    let n = c.nrows();
    Affinity(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            c[(i, j)].abs() + c[(j, i)].abs()
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Labeling {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || labels.iter().any(|&l| l >= k) {
            return Err(SssaError::Data(format!("labels must lie in 0..{k}")));
        }
        Ok(Self { labels, k })
    }

    /// Takes `k` as one past the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().copied().max().map_or(1, |m| m + 1);
        Self { labels, k }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        let mut seen = vec![false; self.k];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.k).filter(|&c| !seen[c]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labeling: Labeling,
    /// Ascending eigenvalues of the normalized Laplacian.
    pub eigenvalues: Vec<f64>,
    /// Points with zero degree; their assignment is arbitrary.
    pub isolated: Vec<usize>,
    pub inertia: f64,
}

/// `I − D^{-1/2} W D^{-1/2}` with regularized degrees.
pub fn normalized_laplacian(w: &Affinity) -> DMatrix<f64> {
    let n = w.len();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (w.0.row(i).sum() + DEGREE_EPS).sqrt())
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let off = w.0[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    })
}

/// Normalized spectral clustering into `k` groups.
pub fn cluster(w: &Affinity, k: usize, seed: u64) -> Result<Segmentation> {
    let n = w.len();
    if k == 0 {
        return Err(SssaError::Config("number of clusters must be positive".into()));
    }
    if k > n {
        return Err(SssaError::Config(format!("cannot form {k} clusters from {n} points")));
    }
    let isolated: Vec<usize> = (0..n).filter(|&i| w.0.row(i).sum() == 0.0).collect();
    if !isolated.is_empty() {
        warn!("{} isolated points in the affinity graph", isolated.len());
    }

    let eig = SymmetricEigen::new(normalized_laplacian(w));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let mut embedding = DMatrix::from_fn(n, k, |i, c| eig.eigenvectors[(i, order[c])]);
    for mut row in embedding.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }

    let (labels, inertia) = kmeans(&embedding, k, seed);
    Ok(Segmentation {
        labeling: Labeling { labels, k },
        eigenvalues,
        isolated,
        inertia,
    })
}

/// Best of [`KMEANS_RESTARTS`] seeded Lloyd runs over the rows of `points`.
/// Ties in inertia keep the earliest restart.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..KMEANS_RESTARTS {
        let centers = seed_centers(points, k, &mut rng);
        let (labels, inertia) = lloyd(points, centers);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    best.expect("at least one restart")
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centers.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// D²-weighted seeding: the first center is uniform, later ones are drawn
/// proportionally to squared distance from the nearest chosen center.
fn seed_centers(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centers = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centers.set_row(0, &points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..centers.nrows() {
            let d = sq_dist(points, i, centers, c);
            // strict comparison keeps the lowest index on ties
            if d < best.0 {
                best = (d, c);
            }
        }
        *label = best.1;
        inertia += best.0;
    }
    inertia
}

fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>) -> (Vec<usize>, f64) {
    let (n, dim) = points.shape();
    let k = centers.nrows();
    let mut labels = vec![0; n];
    let mut inertia = assign(points, &centers, &mut labels);
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = DMatrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let mut row = sums.row_mut(l);
            row += points.row(i);
            counts[l] += 1;
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centers.set_row(c, &mean);
            }
        }
        let next = assign(points, &centers, &mut labels);
        let done = inertia - next <= KMEANS_TOL * inertia.max(f64::MIN_POSITIVE);
        inertia = next;
        if done {
            break;
        }
    }
    (labels, inertia)
}
