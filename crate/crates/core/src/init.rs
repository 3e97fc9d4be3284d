//! Initial guesses for the unobserved entries.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::masked::ObservedMatrix;
use crate::registry::Registry;

pub trait Initializer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns a full matrix equal to `m` on its observed entries.
    fn initialize(&self, m: &ObservedMatrix, seed: u64) -> DMatrix<f64>;
}

pub struct ZeroFill;

pub struct FeatureMean;

/// I.i.d. normal draws matching the observed entries' mean and spread.
pub struct RandomFill;

impl Initializer for ZeroFill {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn initialize(&self, m: &ObservedMatrix, _seed: u64) -> DMatrix<f64> {
        fill_with(m, |_, _| 0.0)
    }
}

impl Initializer for FeatureMean {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn initialize(&self, m: &ObservedMatrix, _seed: u64) -> DMatrix<f64> {
        let means: Vec<f64> = (0..m.nrows())
            .map(|i| {
                let (sum, count) = (0..m.ncols())
                    .filter(|&j| m.is_observed(i, j))
                    .fold((0.0, 0usize), |(s, c), j| (s + m.values()[(i, j)], c + 1));
                if count == 0 {
                    0.0
                } else {
                    sum / count as f64
                }
            })
            .collect();
        fill_with(m, |i, _| means[i])
    }
}

impl Initializer for RandomFill {
    fn name(&self) -> &'static str {
        "random"
    }

    fn initialize(&self, m: &ObservedMatrix, seed: u64) -> DMatrix<f64> {
        let observed: Vec<f64> = m
            .values()
            .iter()
            .zip(m.mask().iter())
            .filter(|(_, &k)| k)
            .map(|(v, _)| *v)
            .collect();
        let n = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n;
        let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let dist = Normal::new(mean, var.sqrt()).expect("finite standard deviation");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // column-major draw order, one draw per missing entry
        let mut draws = DMatrix::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if !m.is_observed(i, j) {
                    draws[(i, j)] = dist.sample(&mut rng);
                }
            }
        }
        fill_with(m, |i, j| draws[(i, j)])
    }
}

fn fill_with(m: &ObservedMatrix, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        if m.is_observed(i, j) {
            m.values()[(i, j)]
        } else {
            f(i, j)
        }
    })
}

/// Serializable selector for the built-in initializers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Zero,
    Mean,
    Random,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Zero => "zero",
            InitKind::Mean => "mean",
            InitKind::Random => "random",
        }
    }

    pub fn parse(name: &str) -> crate::Result<Self> {
        match name {
            "zero" => Ok(InitKind::Zero),
            "mean" => Ok(InitKind::Mean),
            "random" => Ok(InitKind::Random),
            other => Err(crate::SssaError::Unknown {
                kind: "initializer",
                name: other.to_string(),
                available: registry().names().join(", "),
            }),
        }
    }
}

pub fn registry() -> Registry<dyn Initializer> {
    let mut reg: Registry<dyn Initializer> = Registry::new("initializer");
    reg.register("zero", Box::new(ZeroFill));
    reg.register("mean", Box::new(FeatureMean));
    reg.register("random", Box::new(RandomFill));
    reg
}

/// Runs the initializer registered under `kind`.
pub fn initialize(m: &ObservedMatrix, kind: InitKind, seed: u64) -> DMatrix<f64> {
    registry()
        .get(kind.name())
        .expect("built-in initializer")
        .initialize(m, seed)
}
