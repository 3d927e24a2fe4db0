//! Core domain types: the feature tensor, output series, capacity matrix,
//! block structure, hyperparameters, and the dataset container shared by all
//! other modules.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; constructors validate the invariants so downstream code can rely
//! on them.

use crate::error::{Error, Result};
use std::ops::Range;

/// Features indexed `(t, i, d)`: time step, grid, feature dimension.
///
/// Stored row-major with `d` fastest, so `(t, i)` rows are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFeatureTensor {
    values: Vec<f64>,
    t_len: usize,
    grids: usize,
    dims: usize,
}

impl GridFeatureTensor {
    /// Build a `(t_len, grids, dims)` tensor; all values must be finite and
    /// every dimension positive.
    pub fn new(values: Vec<f64>, t_len: usize, grids: usize, dims: usize) -> Result<Self> {
        if t_len == 0 || grids == 0 || dims == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor dims must be positive, got ({t_len}, {grids}, {dims})"
            )));
        }
        if values.len() != t_len * grids * dims {
            return Err(Error::DimensionMismatch(format!(
                "tensor expects {} values, got {}",
                t_len * grids * dims,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature tensor entry {pos}")));
        }
        Ok(Self { values, t_len, grids, dims })
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn grid_count(&self) -> usize {
        self.grids
    }

    pub fn feature_dim(&self) -> usize {
        self.dims
    }

    /// Feature vector of grid `i` at step `t`. Panics outside the dims.
    pub fn row(&self, t: usize, i: usize) -> &[f64] {
        assert!(t < self.t_len && i < self.grids, "index ({t}, {i}) out of range");
        let start = (t * self.grids + i) * self.dims;
        &self.values[start..start + self.dims]
    }

    pub fn get(&self, t: usize, i: usize, d: usize) -> f64 {
        assert!(d < self.dims, "feature index {d} out of range");
        self.row(t, i)[d]
    }

    /// Flat `(t*grids + i, d)` view of the underlying storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Sub-tensor over the half-open time range.
    pub fn slice_time(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.t_len {
            return Err(Error::InvalidArgument(format!(
                "time range {range:?} invalid for T={}",
                self.t_len
            )));
        }
        let per_t = self.grids * self.dims;
        Self::new(
            self.values[range.start * per_t..range.end * per_t].to_vec(),
            range.end - range.start,
            self.grids,
            self.dims,
        )
    }
}

/// The aggregate output series, one value per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOutputSeries {
    values: Vec<f64>,
}

impl AggregateOutputSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("output series is empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("output series entry {pos}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Relative tolerance on the capacity row-sum constraint. The constraint is
/// an exact equality mathematically; floating point needs slack.
pub const CAPACITY_SUM_RTOL: f64 = 1e-9;

/// Nonnegative per-grid capacities, one row per time step, with each row
/// summing to the known total capacity of that step.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityMatrix {
    values: Vec<f64>,
    totals: Vec<f64>,
    grids: usize,
}

impl CapacityMatrix {
    /// `values` is `(T, K)` row-major. Rejects negative entries, non-finite
    /// values, non-positive totals, and rows whose sum strays from the total
    /// by more than `CAPACITY_SUM_RTOL * max(1, total)`.
    pub fn new(values: Vec<f64>, totals: Vec<f64>, grids: usize) -> Result<Self> {
        if grids == 0 || totals.is_empty() {
            return Err(Error::InvalidArgument("capacity matrix must be non-empty".into()));
        }
        if values.len() != totals.len() * grids {
            return Err(Error::DimensionMismatch(format!(
                "capacity matrix expects {} values, got {}",
                totals.len() * grids,
                values.len()
            )));
        }
        for (t, total) in totals.iter().enumerate() {
            if !total.is_finite() || *total <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "total capacity at t={t} must be positive and finite, got {total}"
                )));
            }
            let row = &values[t * grids..(t + 1) * grids];
            let mut sum = 0.0;
            for (i, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("capacity ({t}, {i})")));
                }
                if *v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "capacity ({t}, {i}) is negative: {v}"
                    )));
                }
                sum += v;
            }
            if (sum - total).abs() > CAPACITY_SUM_RTOL * total.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "capacity row {t} sums to {sum}, expected {total}"
                )));
            }
        }
        Ok(Self { values, totals, grids })
    }

    pub fn t_len(&self) -> usize {
        self.totals.len()
    }

    pub fn grid_count(&self) -> usize {
        self.grids
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.grids..(t + 1) * self.grids]
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.row(t)[i]
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Sub-matrix over the half-open time range.
    pub fn slice_time(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.t_len() {
            return Err(Error::InvalidArgument(format!(
                "time range {range:?} invalid for T={}",
                self.t_len()
            )));
        }
        Self::new(
            self.values[range.start * self.grids..range.end * self.grids].to_vec(),
            self.totals[range.clone()].to_vec(),
            self.grids,
        )
    }

    /// Uniform matrix with every row `total/K`; the capacity assumption of
    /// the mean-feature baseline.
    pub fn uniform(totals: &[f64], grids: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(totals.len() * grids);
        for &c in totals {
            // distribute then force the row to sum exactly to the total
            let mut row = vec![c / grids as f64; grids];
            force_row_sum(&mut row, c);
            values.extend_from_slice(&row);
        }
        Self::new(values, totals.to_vec(), grids)
    }
}

/// Adjust `row` (nonnegative, positive target) so its naive floating-point
/// sum equals `target` exactly.
///
/// The residual is ulp-scale; a correction applied to one entry can shift
/// the rounded sum by more or less than itself as it re-rounds through the
/// summation chain, so candidate corrections are tried at several scales on
/// several entries, keeping only strict improvements.
pub(crate) fn force_row_sum(row: &mut [f64], target: f64) {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    let total = |row: &[f64]| -> f64 { row.iter().sum() };
    // runs to a fixed point: either the sum is exact or no single move
    // improves it, so reapplying this function is a no-op either way
    for _ in 0..16 {
        let mut d = target - total(row);
        if d == 0.0 {
            return;
        }
        let mut improved = false;
        for &j in &order {
            for frac in [1.0, 0.5, 2.0, 0.25, 4.0, 0.125] {
                let cand = row[j] + d * frac;
                if cand == row[j] || cand < 0.0 {
                    continue;
                }
                let old = row[j];
                row[j] = cand;
                let d2 = target - total(row);
                if d2 == 0.0 {
                    return;
                }
                if d2.abs() < d.abs() {
                    d = d2;
                    improved = true;
                } else {
                    row[j] = old;
                }
            }
        }
        if !improved {
            return;
        }
    }
}

/// Half-open, equal-length (except possibly the last) index ranges covering
/// `[0, T)`; capacities are held constant within each block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    t_len: usize,
    block_len: usize,
}

impl BlockStructure {
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.t_len.div_ceil(self.block_len)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `b`-th block range.
    pub fn range(&self, b: usize) -> Range<usize> {
        let start = b * self.block_len;
        assert!(start < self.t_len, "block {b} out of range");
        start..(start + self.block_len).min(self.t_len)
    }

    pub fn iter(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.len()).map(|b| self.range(b))
    }

    /// Block index containing step `t`.
    pub fn block_of(&self, t: usize) -> usize {
        assert!(t < self.t_len, "step {t} out of range");
        t / self.block_len
    }
}

/// Partition `[0, T)` into blocks of length `s`, the last possibly shorter.
pub fn make_blocks(t_len: usize, block_len: usize) -> Result<BlockStructure> {
    if t_len == 0 || block_len == 0 {
        return Err(Error::InvalidArgument(format!(
            "make_blocks requires T >= 1 and s >= 1, got T={t_len}, s={block_len}"
        )));
    }
    Ok(BlockStructure { t_len, block_len })
}

/// Training hyperparameters.
///
/// `n_rounds = 0` and `learning_rate = 0` are permitted as degenerate
/// diagnostic settings (empty ensemble / no-op updates).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Temporal continuity penalty of the capacity filter.
    pub lambda: f64,
    /// Number of boosting rounds.
    pub n_rounds: usize,
    /// Shrinkage applied to each tree.
    pub learning_rate: f64,
    /// Maximum tree depth (root has depth 0).
    pub max_depth: usize,
    /// L2 regularizer on leaf weights.
    pub tree_reg: f64,
    /// Minimum Newton gain required to split.
    pub min_gain: f64,
    /// Number of grids the dataset must have.
    pub grid_count: usize,
    /// Capacity block length `s`.
    pub block_len: usize,
    /// Scale coefficient of the eigenvalue floor applied to each sensing
    /// matrix: the per-step floor is `pd_floor * (1 + trace/K)`.
    pub pd_floor: f64,
    /// Seed forwarded to tree fitting (reserved; the exact greedy fit is
    /// deterministic on its own).
    pub seed: u64,
    /// Refresh capacities every this many rounds (1 = every round).
    pub capacity_refresh_every: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            n_rounds: 1000,
            learning_rate: 0.01,
            max_depth: 3,
            tree_reg: 1.0,
            min_gain: 0.0,
            grid_count: 15,
            block_len: 96,
            pd_floor: 1e-6,
            seed: 42,
            capacity_refresh_every: 1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must lie in [0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
        }
        if !(self.tree_reg >= 0.0) || !(self.min_gain >= 0.0) {
            return Err(Error::InvalidArgument(
                "tree_reg and min_gain must be nonnegative".into(),
            ));
        }
        if self.grid_count == 0 || self.block_len == 0 {
            return Err(Error::InvalidArgument("grid_count and block_len must be >= 1".into()));
        }
        if !(self.pd_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pd_floor must be > 0, got {}",
                self.pd_floor
            )));
        }
        if self.capacity_refresh_every == 0 {
            return Err(Error::InvalidArgument("capacity_refresh_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// A dense `(rows, cols)` row-major matrix of finite values; the plain
/// tabular form consumed by the tree fitter and the baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    data: Vec<f64>,
    cols: usize,
}

impl RowMatrix {
    pub fn new(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::DimensionMismatch(format!(
                "row matrix of {} values cannot have {cols} columns",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("row matrix entry {pos}")));
        }
        Ok(Self { data, cols })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Features, aggregate outputs, and known total capacities, plus the ground
/// truth fields that synthetic datasets carry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: GridFeatureTensor,
    pub outputs: AggregateOutputSeries,
    /// Known total capacity per step.
    pub totals: Vec<f64>,
    /// True per-grid capacities (synthetic data only).
    pub truth_capacities: Option<CapacityMatrix>,
    /// True per-grid unit outputs `(T, K)` row-major (synthetic data only).
    pub truth_unit: Option<RowMatrix>,
}

impl Dataset {
    pub fn new(
        features: GridFeatureTensor,
        outputs: AggregateOutputSeries,
        totals: Vec<f64>,
        truth_capacities: Option<CapacityMatrix>,
        truth_unit: Option<RowMatrix>,
    ) -> Result<Self> {
        let t_len = features.t_len();
        let grids = features.grid_count();
        if outputs.len() != t_len {
            return Err(Error::DimensionMismatch(format!(
                "outputs length {} != T {}",
                outputs.len(),
                t_len
            )));
        }
        if totals.len() != t_len {
            return Err(Error::DimensionMismatch(format!(
                "totals length {} != T {}",
                totals.len(),
                t_len
            )));
        }
        for (t, c) in totals.iter().enumerate() {
            if !c.is_finite() || *c <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "total capacity at t={t} must be positive and finite, got {c}"
                )));
            }
        }
        if let Some(caps) = &truth_capacities {
            if caps.t_len() != t_len || caps.grid_count() != grids {
                return Err(Error::DimensionMismatch(
                    "truth capacities do not match the feature tensor".into(),
                ));
            }
        }
        if let Some(unit) = &truth_unit {
            if unit.rows() != t_len || unit.cols() != grids {
                return Err(Error::DimensionMismatch(
                    "truth unit outputs do not match the feature tensor".into(),
                ));
            }
        }
        Ok(Self { features, outputs, totals, truth_capacities, truth_unit })
    }

    pub fn t_len(&self) -> usize {
        self.features.t_len()
    }

    pub fn grid_count(&self) -> usize {
        self.features.grid_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.feature_dim()
    }

    fn slice_time(&self, range: Range<usize>) -> Result<Self> {
        let features = self.features.slice_time(range.clone())?;
        let outputs = AggregateOutputSeries::new(self.outputs.as_slice()[range.clone()].to_vec())?;
        let totals = self.totals[range.clone()].to_vec();
        let truth_capacities = match &self.truth_capacities {
            Some(c) => Some(c.slice_time(range.clone())?),
            None => None,
        };
        let truth_unit = match &self.truth_unit {
            Some(u) => {
                let k = u.cols();
                Some(RowMatrix::new(
                    u.as_slice()[range.start * k..range.end * k].to_vec(),
                    k,
                )?)
            }
            None => None,
        };
        Dataset::new(features, outputs, totals, truth_capacities, truth_unit)
    }
}

/// Split a dataset at `train_len` into `[0, train_len)` and `[train_len, T)`
/// parts; all parallel fields split identically.
pub fn split_train_test(ds: &Dataset, train_len: usize) -> Result<(Dataset, Dataset)> {
    let t_len = ds.t_len();
    if train_len == 0 || train_len >= t_len {
        return Err(Error::InvalidArgument(format!(
            "train_len must satisfy 0 < train_len < {t_len}, got {train_len}"
        )));
    }
    Ok((ds.slice_time(0..train_len)?, ds.slice_time(train_len..t_len)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_dataset(t_len: usize, grids: usize, dims: usize) -> Dataset {
        let n = t_len * grids * dims;
        let features =
            GridFeatureTensor::new((0..n).map(|v| v as f64 * 0.25).collect(), t_len, grids, dims)
                .unwrap();
        let outputs =
            AggregateOutputSeries::new((0..t_len).map(|t| 1.0 + t as f64).collect()).unwrap();
        let totals = vec![2.0; t_len];
        let caps = CapacityMatrix::new(
            vec![2.0 / grids as f64; t_len * grids],
            totals.clone(),
            grids,
        )
        .unwrap();
        let unit = RowMatrix::new(vec![0.5; t_len * grids], grids).unwrap();
        Dataset::new(features, outputs, totals, Some(caps), Some(unit)).unwrap()
    }

    #[test]
    fn capacity_matrix_accepts_exact_rows() {
        let m = CapacityMatrix::new(vec![0.25, 0.75, 0.5, 0.5], vec![1.0, 1.0], 2).unwrap();
        assert_eq!(m.row(0), &[0.25, 0.75]);
        assert_eq!(m.get(1, 1), 0.5);
    }

    #[test]
    fn capacity_matrix_rejects_negative_and_bad_sum() {
        assert!(CapacityMatrix::new(vec![-0.1, 1.1], vec![1.0], 2).is_err());
        assert!(CapacityMatrix::new(vec![0.4, 0.4], vec![1.0], 2).is_err());
        assert!(CapacityMatrix::new(vec![0.5, 0.5], vec![0.0], 2).is_err());
        // within tolerance passes
        let skew = 1.0 + 0.5e-9;
        assert!(CapacityMatrix::new(vec![0.5, 0.5 * skew], vec![1.0 + 0.5 * (skew - 1.0)], 2)
            .is_ok());
    }

    #[test]
    fn tensor_rejects_non_finite() {
        assert!(GridFeatureTensor::new(vec![0.0, f64::NAN], 1, 1, 2).is_err());
        assert!(GridFeatureTensor::new(vec![0.0; 4], 1, 0, 2).is_err());
    }

    #[test]
    #[should_panic]
    fn tensor_indexing_out_of_range_panics() {
        let t = GridFeatureTensor::new(vec![0.0; 6], 1, 2, 3).unwrap();
        let _ = t.row(1, 0);
    }

    #[test]
    fn make_blocks_examples() {
        let b = make_blocks(6, 2).unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![0..2, 2..4, 4..6]);
        let b = make_blocks(5, 2).unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![0..2, 2..4, 4..5]);
        let b = make_blocks(28800, 96).unwrap();
        assert_eq!(b.len(), 300);
        assert!(b.iter().all(|r| r.len() == 96));
        assert!(make_blocks(0, 2).is_err());
        assert!(make_blocks(2, 0).is_err());
    }

    #[test]
    fn split_train_test_lengths() {
        let ds = tiny_dataset(2, 2, 3);
        let (a, b) = split_train_test(&ds, 1).unwrap();
        assert_eq!(a.t_len(), 1);
        assert_eq!(b.t_len(), 1);
        assert!(split_train_test(&ds, 0).is_err());
        assert!(split_train_test(&ds, 2).is_err());

        // paper-scale arithmetic only (no allocation of the full set needed)
        let ds = tiny_dataset(30, 2, 1);
        let (a, b) = split_train_test(&ds, 28).unwrap();
        assert_eq!((a.t_len(), b.t_len()), (28, 2));
    }

    #[test]
    fn split_then_concat_is_identity() {
        let ds = tiny_dataset(7, 3, 2);
        let (a, b) = split_train_test(&ds, 4).unwrap();
        // independent concatenation oracle
        let mut feat = a.features.as_slice().to_vec();
        feat.extend_from_slice(b.features.as_slice());
        assert_eq!(feat, ds.features.as_slice());
        let mut outs = a.outputs.as_slice().to_vec();
        outs.extend_from_slice(b.outputs.as_slice());
        assert_eq!(outs, ds.outputs.as_slice());
        let mut caps = a.truth_capacities.as_ref().unwrap().as_slice().to_vec();
        caps.extend_from_slice(b.truth_capacities.as_ref().unwrap().as_slice());
        assert_eq!(caps, ds.truth_capacities.as_ref().unwrap().as_slice());
    }

    #[test]
    fn uniform_capacity_rows_sum_exactly() {
        let m = CapacityMatrix::uniform(&[1.0, 3.0, 0.7], 7).unwrap();
        for t in 0..3 {
            let sum: f64 = m.row(t).iter().sum();
            assert_eq!(sum, m.totals()[t]);
        }
    }

    #[test]
    fn hyperparams_defaults_validate() {
        let h = HyperParams::default();
        assert_eq!(h.n_rounds, 1000);
        assert_eq!(h.learning_rate, 0.01);
        assert_eq!(h.max_depth, 3);
        assert_eq!(h.lambda, 10.0);
        h.validate().unwrap();
        let bad = HyperParams { lambda: 0.0, ..HyperParams::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn blocks_partition_the_range(t_len in 1usize..10_000, s in 1usize..10_000) {
            let s = s.min(t_len);
            let blocks = make_blocks(t_len, s).unwrap();
            let mut next = 0usize;
            for (b, r) in blocks.iter().enumerate() {
                prop_assert_eq!(r.start, next);
                prop_assert!(r.len() <= s);
                if b + 1 < blocks.len() {
                    prop_assert_eq!(r.len(), s);
                }
                next = r.end;
            }
            prop_assert_eq!(next, t_len);
        }
    }
}
