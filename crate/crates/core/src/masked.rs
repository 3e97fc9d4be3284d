//! Partially observed matrices and mask algebra.
//!
//! An [`ObservedMatrix`] pairs a dense `D x N` value grid with a boolean mask
//! of the same shape (`true` = observed). Unobserved cells always hold a
//! finite number; `NaN` only appears at the I/O boundary.

use nalgebra::DMatrix;

use crate::error::{Result, SssaError};

/// Value stored at unobserved positions when a matrix is first constructed.
pub const FILL_VALUE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

/// Observed row indices of one column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSupport {
    pub column: usize,
    pub rows: Vec<usize>,
}

impl ObservedMatrix {
    /// Builds a matrix from values and mask. Unobserved cells are reset to
    /// [`FILL_VALUE`]; observed cells must be finite and every column needs at
    /// least one observed entry.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(SssaError::Shape {
                expected: values.shape(),
                got: mask.shape(),
            });
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(SssaError::Data("matrix must have at least one row and column".into()));
        }
        let mut values = values;
        for j in 0..values.ncols() {
            let mut any = false;
            for i in 0..values.nrows() {
                if mask[(i, j)] {
                    any = true;
                    if !values[(i, j)].is_finite() {
                        return Err(SssaError::NonFinite { row: i, col: j });
                    }
                } else {
                    values[(i, j)] = FILL_VALUE;
                }
            }
            if !any {
                return Err(SssaError::EmptyColumn(j));
            }
        }
        Ok(Self { values, mask })
    }

    /// Fully observed matrix.
    pub fn complete(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    /// Treats `NaN` cells as missing.
    pub fn from_nan(values: DMatrix<f64>) -> Result<Self> {
        let mask = values.map(|v| !v.is_nan());
        Self::new(values, mask)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[(row, col)]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.len() - self.observed_count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Values with `NaN` at every unobserved cell.
    pub fn to_nan(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| {
            if self.mask[(i, j)] {
                self.values[(i, j)]
            } else {
                f64::NAN
            }
        })
    }

    /// Splits the values into the observed part and the missing part.
    /// The two summed reproduce `values` exactly.
    pub fn split(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let observed = self.select(true);
        let missing = self.select(false);
        (observed, missing)
    }

    fn select(&self, on_mask: bool) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| {
            if self.mask[(i, j)] == on_mask {
                self.values[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Keeps the observed entries and takes every unobserved entry from `source`.
    pub fn overwrite_missing(&self, source: &DMatrix<f64>) -> Result<ObservedMatrix> {
        let values = merge_missing(&self.values, &self.mask, source)?;
        Ok(ObservedMatrix {
            values,
            mask: self.mask.clone(),
        })
    }

    pub fn column_supports(&self) -> Vec<ColumnSupport> {
        column_supports(&self.mask)
    }
}

/// `base` on the mask, `source` off it.
pub fn merge_missing(
    base: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    source: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    for shape in [mask.shape(), source.shape()] {
        if shape != base.shape() {
            return Err(SssaError::Shape {
                expected: base.shape(),
                got: shape,
            });
        }
    }
    Ok(DMatrix::from_fn(base.nrows(), base.ncols(), |i, j| {
        if mask[(i, j)] {
            base[(i, j)]
        } else {
            source[(i, j)]
        }
    }))
}

pub fn column_supports(mask: &DMatrix<bool>) -> Vec<ColumnSupport> {
    (0..mask.ncols())
        .map(|j| ColumnSupport {
            column: j,
            rows: (0..mask.nrows()).filter(|&i| mask[(i, j)]).collect(),
        })
        .collect()
}

/// Frobenius norm of the entries where `mask` is false.
pub fn missing_norm(x: &DMatrix<f64>, mask: &DMatrix<bool>) -> f64 {
    x.iter()
        .zip(mask.iter())
        .filter(|(_, &m)| !m)
        .map(|(v, _)| v * v)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn b(rows: usize, cols: usize, data: &[bool]) -> DMatrix<bool> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn split_all_observed() {
        let x = ObservedMatrix::complete(m(2, 2, &[1., 2., 3., 4.])).unwrap();
        let (obs, miss) = x.split();
        assert_eq!(obs, m(2, 2, &[1., 2., 3., 4.]));
        assert_eq!(miss, DMatrix::zeros(2, 2));
    }

    #[test]
    fn split_diagonal_mask() {
        // the constructor zero-fills unobserved cells, so write through overwrite_missing
        let x = ObservedMatrix::new(m(2, 2, &[1., 2., 3., 4.]), b(2, 2, &[true, false, false, true]))
            .unwrap()
            .overwrite_missing(&m(2, 2, &[0., 2., 3., 0.]))
            .unwrap();
        let (obs, miss) = x.split();
        assert_eq!(obs, m(2, 2, &[1., 0., 0., 4.]));
        assert_eq!(miss, m(2, 2, &[0., 2., 3., 0.]));
    }

    #[test]
    fn overwrite_examples() {
        let full = ObservedMatrix::complete(m(1, 2, &[1., 9.])).unwrap();
        assert_eq!(full.overwrite_missing(&m(1, 2, &[5., 7.])).unwrap(), full);

        // a 1x2 matrix with one unobserved column is not a valid ObservedMatrix,
        // so the raw merge carries this case
        let merged = merge_missing(&m(1, 2, &[1., 9.]), &b(1, 2, &[true, false]), &m(1, 2, &[5., 7.]));
        assert_eq!(merged.unwrap(), m(1, 2, &[1., 7.]));

        let x = ObservedMatrix::new(m(2, 2, &[1., 9., 2., 3.]), b(2, 2, &[true, false, true, true]))
            .unwrap();
        let y = x.overwrite_missing(&m(2, 2, &[5., 7., 0., 0.])).unwrap();
        assert_eq!(y.values(), &m(2, 2, &[1., 7., 2., 3.]));
        assert_eq!(y.mask(), x.mask());
        let z = y.overwrite_missing(&m(2, 2, &[5., 7., 0., 0.])).unwrap();
        assert_eq!(z, y);
    }

    #[test]
    fn overwrite_shape_mismatch() {
        let x = ObservedMatrix::complete(m(1, 2, &[1., 9.])).unwrap();
        assert!(matches!(
            x.overwrite_missing(&DMatrix::zeros(2, 2)),
            Err(SssaError::Shape { .. })
        ));
    }

    #[test]
    fn supports() {
        let x = ObservedMatrix::new(m(3, 1, &[1., 2., 3.]), b(3, 1, &[true, false, true])).unwrap();
        assert_eq!(x.column_supports()[0].rows, vec![0, 2]);

        let full = ObservedMatrix::complete(DMatrix::from_element(2, 3, 1.0)).unwrap();
        for s in full.column_supports() {
            assert_eq!(s.rows, vec![0, 1]);
        }
    }

    #[test]
    fn rejects_empty_column_and_nonfinite() {
        let err = ObservedMatrix::new(m(2, 2, &[1., 2., 3., 4.]), b(2, 2, &[true, false, true, false]));
        assert!(matches!(err, Err(SssaError::EmptyColumn(1))));
        let err = ObservedMatrix::complete(m(1, 2, &[1., f64::INFINITY]));
        assert!(matches!(err, Err(SssaError::NonFinite { row: 0, col: 1 })));
        let err = ObservedMatrix::new(DMatrix::zeros(2, 2), DMatrix::from_element(2, 3, true));
        assert!(matches!(err, Err(SssaError::Shape { .. })));
    }

    #[test]
    fn nan_roundtrip() {
        let x = ObservedMatrix::from_nan(m(2, 2, &[1., f64::NAN, 3., 4.])).unwrap();
        assert!(!x.is_observed(0, 1));
        assert_eq!(x.values()[(0, 1)], FILL_VALUE);
        let back = x.to_nan();
        assert!(back[(0, 1)].is_nan());
        assert_eq!(back[(1, 0)], 3.0);
    }

    fn observed_strategy() -> impl Strategy<Value = (ObservedMatrix, DMatrix<f64>)> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            (
                proptest::collection::vec(-100.0f64..100.0, r * c),
                proptest::collection::vec(any::<bool>(), r * c),
                proptest::collection::vec(-100.0f64..100.0, r * c),
            )
                .prop_map(move |(v, mut mk, src)| {
                    for j in 0..c {
                        mk[j] = true; // row 0 observed keeps every column valid
                    }
                    let x = ObservedMatrix::new(
                        DMatrix::from_row_slice(r, c, &v),
                        DMatrix::from_row_slice(r, c, &mk),
                    )
                    .unwrap();
                    let s = DMatrix::from_row_slice(r, c, &src);
                    (x.overwrite_missing(&s).unwrap(), s)
                })
        })
    }

    proptest! {
        #[test]
        fn split_sums_exactly((x, _) in observed_strategy()) {
            let (o, mi) = x.split();
            prop_assert_eq!(o + mi, x.values().clone());
        }

        #[test]
        fn overwrite_preserves_observed((x, s) in observed_strategy()) {
            let shifted = s.map(|v| v + 1.0);
            let y = x.overwrite_missing(&shifted).unwrap();
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    if x.is_observed(i, j) {
                        prop_assert_eq!(y.values()[(i, j)], x.values()[(i, j)]);
                    } else {
                        prop_assert_eq!(y.values()[(i, j)], shifted[(i, j)]);
                    }
                }
            }
        }

        #[test]
        fn support_sizes_count_mask((x, _) in observed_strategy()) {
            let total: usize = x.column_supports().iter().map(|s| s.rows.len()).sum();
            prop_assert_eq!(total, x.observed_count());
        }
    }
}
