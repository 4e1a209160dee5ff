//! Datasets, the synthetic regression generator, MinMax scaling and seeded
//! splits. File loading lives in the companion crate.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::kernel::SampleMatrix;
use crate::matrix::Matrix;
use crate::rng::{stream, Rng};

/// Per-column affine scaling `(v - min) / (max - min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(m: &Matrix) -> Self {
        let mut min = alloc::vec![f64::INFINITY; m.cols()];
        let mut max = alloc::vec![f64::NEG_INFINITY; m.cols()];
        for r in m.row_iter() {
            for (j, &v) in r.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    /// Columns whose range is zero; they map to 0.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.min.len()).filter(|&j| !(self.max[j] > self.min[j])).collect()
    }

    fn check(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.min.len() {
            return Err(dim_err(format!(
                "scaling fitted on {} columns applied to {}",
                self.min.len(),
                m.cols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.rows(), m.cols(), |i, j| {
            let range = self.max[j] - self.min[j];
            if range > 0.0 {
                (m[(i, j)] - self.min[j]) / range
            } else {
                0.0
            }
        }))
    }

    /// Inverse of [`MinMax::apply`]; constant columns come back as their
    /// fitted value.
    pub fn invert(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.rows(), m.cols(), |i, j| {
            self.min[j] + m[(i, j)] * (self.max[j] - self.min[j])
        }))
    }
}

/// Scalings for features and targets, stored with checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub features: MinMax,
    pub targets: MinMax,
}

/// Paired features and N×1 (or N×q) targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: SampleMatrix,
    pub targets: SampleMatrix,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(features: SampleMatrix, targets: SampleMatrix) -> Result<Self> {
        if features.rows() != targets.rows() {
            return Err(dim_err(format!(
                "{} feature rows but {} target rows",
                features.rows(),
                targets.rows()
            )));
        }
        Ok(Self {
            features,
            targets,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            targets: self.targets.select_rows(idx),
            normalization: self.normalization.clone(),
        }
    }

    /// Applies a fitted scaling.
    pub fn normalized_with(&self, norm: &Normalization) -> Result<Self> {
        Ok(Self {
            features: SampleMatrix::new(norm.features.apply(self.features.matrix())?)?,
            targets: SampleMatrix::new(norm.targets.apply(self.targets.matrix())?)?,
            normalization: Some(norm.clone()),
        })
    }
}

/// Result of fitting and applying MinMax scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub dataset: Dataset,
    /// One message per constant column that was mapped to 0.
    pub warnings: Vec<alloc::string::String>,
}

/// Fits MinMax on `ds` itself and maps every column to [0, 1].
pub fn minmax_normalize(ds: &Dataset) -> Result<Normalized> {
    let norm = Normalization {
        features: MinMax::fit(ds.features.matrix()),
        targets: MinMax::fit(ds.targets.matrix()),
    };
    let mut warnings = Vec::new();
    for j in norm.features.constant_columns() {
        warnings.push(format!("feature column {j} is constant; mapped to 0"));
    }
    for j in norm.targets.constant_columns() {
        warnings.push(format!("target column {j} is constant; mapped to 0"));
    }
    Ok(Normalized {
        dataset: ds.normalized_with(&norm)?,
        warnings,
    })
}

/// Train, validation and test parts of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Part sizes: each fraction's floor, then the leftover rows one at a time to
/// the parts with the largest fractional remainders (earlier parts win ties).
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::Config(format!("split fractions must be nonnegative, got {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    // the nudge keeps products like 0.7·10 from flooring to 6
    let mut sizes: [usize; 3] = core::array::from_fn(|i| (exact[i] + 1e-9).floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Seeded permutation partitioned by [`split_sizes`].
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Split> {
    let sizes = split_sizes(ds.len(), fractions)?;
    let perm = Rng::new(seed, stream::SPLIT).permutation(ds.len());
    let (a, rest) = perm.split_at(sizes[0]);
    let (b, c) = rest.split_at(sizes[1]);
    Ok(Split {
        train: ds.select(a),
        val: ds.select(b),
        test: ds.select(c),
    })
}

/// Redraw budget per row for the `wᵀx > 0` requirement.
pub const SYNTHETIC_RETRY_CAP: usize = 10_000;

/// `y = sin(wᵀx) + log₂(wᵀx)` with `x, w ~ N(0, I_d)`, `w` drawn once and
/// each row of `x` redrawn until `wᵀx > 0`.
pub fn gen_synthetic(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config("synthetic data needs n ≥ 1 and d ≥ 1".into()));
    }
    let mut rng = Rng::new(seed, stream::DATA);
    let w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    let mut row = alloc::vec![0.0; d];
    for i in 0..n {
        let mut tries = 0;
        let s = loop {
            for v in row.iter_mut() {
                *v = rng.normal();
            }
            let s: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            if s > 0.0 {
                break s;
            }
            tries += 1;
            if tries >= SYNTHETIC_RETRY_CAP {
                return Err(Error::Generation(format!("row {i}: no draw with wᵀx > 0 in {tries} tries")));
            }
        };
        xs.extend_from_slice(&row);
        ys.push(synthetic_target(s));
    }
    Dataset::new(SampleMatrix::from_vec(n, d, xs)?, SampleMatrix::from_vec(n, 1, ys)?)
}

/// The generator's response as a function of the projection `s = wᵀx`.
pub fn synthetic_target(s: f64) -> f64 {
    s.sin() + s.log2()
}

/// Recovers the generator's weight vector for `seed`, for validation.
pub fn synthetic_weights(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed, stream::DATA);
    (0..d).map(|_| rng.normal()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn synthetic_formula_values() {
        assert!((synthetic_target(1.0) - 0.84147).abs() < 1e-5);
        assert!((synthetic_target(2.0) - 1.90930).abs() < 1e-5);
    }

    #[test]
    fn synthetic_rows_have_positive_projection() {
        let ds = gen_synthetic(500, 30, 7).unwrap();
        let w = synthetic_weights(30, 7);
        for i in 0..ds.len() {
            let s: f64 = ds.features.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!(s > 0.0);
            assert!((ds.targets.row(i)[0] - synthetic_target(s)).abs() < 1e-12);
        }
        assert_eq!(gen_synthetic(500, 30, 7).unwrap(), ds);
        assert_ne!(gen_synthetic(500, 30, 8).unwrap(), ds);
    }

    #[test]
    fn minmax_maps_column() {
        let ds = Dataset::new(
            SampleMatrix::from_rows(&[[0.0, 4.0], [5.0, 4.0], [10.0, 4.0]]).unwrap(),
            SampleMatrix::column(&[1.0, 2.0, 3.0]).unwrap(),
        )
        .unwrap();
        let n = minmax_normalize(&ds).unwrap();
        let f = n.dataset.features.matrix();
        assert_eq!((f[(0, 0)], f[(1, 0)], f[(2, 0)]), (0.0, 0.5, 1.0));
        assert_eq!((f[(0, 1)], f[(1, 1)], f[(2, 1)]), (0.0, 0.0, 0.0));
        assert_eq!(n.warnings.len(), 1);
        let norm = n.dataset.normalization.as_ref().unwrap();
        assert_eq!(norm.features.constant_columns(), vec![1]);
        assert_eq!(norm.features.invert(f).unwrap(), *ds.features.matrix());
    }

    #[test]
    fn split_sizes_floor_then_distribute() {
        assert_eq!(split_sizes(10, [0.7, 0.1, 0.2]).unwrap(), [7, 1, 2]);
        assert_eq!(split_sizes(5000, [0.8, 0.0, 0.2]).unwrap(), [4000, 0, 1000]);
        assert_eq!(split_sizes(11, [0.7, 0.1, 0.2]).unwrap(), [8, 1, 2]);
        assert_eq!(split_sizes(3, [1.0 / 3.0; 3]).unwrap(), [1, 1, 1]);
        assert!(matches!(split_sizes(10, [0.5, 0.1, 0.2]), Err(Error::Config(_))));
        assert!(matches!(split_sizes(10, [1.2, -0.1, -0.1]), Err(Error::Config(_))));
    }

    #[test]
    fn split_is_seeded_partition() {
        let n = 37;
        let ds = Dataset::new(
            SampleMatrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(),
            SampleMatrix::from_vec(n, 1, (0..n).map(|i| -(i as f64)).collect()).unwrap(),
        )
        .unwrap();
        let s = split(&ds, [0.7, 0.1, 0.2], 3).unwrap();
        assert_eq!(s, split(&ds, [0.7, 0.1, 0.2], 3).unwrap());
        let mut seen: Vec<usize> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|d| (0..d.len()).map(|i| d.features.row(i)[0] as usize).collect::<Vec<_>>())
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for d in [&s.train, &s.val, &s.test] {
            for i in 0..d.len() {
                assert_eq!(d.targets.row(i)[0], -d.features.row(i)[0]);
            }
        }
    }

    proptest! {
        #[test]
        fn normalize_roundtrip(v in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let m = Matrix::from_vec(4, 3, v).unwrap();
            let s = MinMax::fit(&m);
            let back = s.invert(&s.apply(&m).unwrap()).unwrap();
            let constant = s.constant_columns();
            for i in 0..4 {
                for j in 0..3 {
                    if !constant.contains(&j) {
                        prop_assert!((back[(i, j)] - m[(i, j)]).abs() <= 1e-12);
                    }
                    let a = s.apply(&m).unwrap()[(i, j)];
                    prop_assert!((0.0..=1.0).contains(&a));
                }
            }
        }

        #[test]
        fn split_partitions_any_size(n in 1usize..200, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (f0, f1) = (a, (1.0 - a) * b);
            let sizes = split_sizes(n, [f0, f1, 1.0 - f0 - f1]).unwrap();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        }
    }
}
