//! Synthetic benchmark data: uniform input features, block-constant latent
//! capacities evolving by either independent AR(1) walks or a correlated
//! random walk, a fixed nonlinear unit response, and the aggregation that
//! produces the observed output series.
//!
//! Generation is pinned to ChaCha12 seeded with `GenSpec::seed`; inputs and
//! the two capacity processes use separate ChaCha streams so they can be
//! produced independently. The draw order inside each stream is part of the
//! format contract (see the constants below and the dataset manifest).

use crate::capfilter::sym_sqrt;
use crate::data::{AggregateOutputSeries, CapacityMatrix, Dataset, GridFeatureTensor, RowMatrix};
use crate::error::{Error, Result};
use crate::par;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

/// Name of the pinned generator algorithm, recorded in dataset manifests.
pub const GENERATOR_NAME: &str = "chacha12-synth";
/// Bumped whenever the draw order or distributions change.
pub const GENERATOR_VERSION: u32 = 1;

const STREAM_INPUTS: u64 = 0;
const STREAM_AR1: u64 = 1;
const STREAM_KALMAN: u64 = 2;

/// Which process drives the latent capacities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityProcess {
    /// Independent per-grid AR(1): coefficient ~ N(1, sigma^2),
    /// perturbation ~ N(0, sigma^2).
    Ar1,
    /// Correlated random walk: process noise covariance
    /// `q_ij = sigma^2 * 0.9^|i-j|`, identity transition/observation,
    /// measurement covariance `0.1 sigma^2` (simulated and discarded).
    Kalman,
}

/// Generation parameters; defaults reproduce the standard benchmark size
/// (300 blocks of 96 steps, 15 grids, 3 features, sigma 0.01).
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub t_blocks: usize,
    pub repeat: usize,
    pub grids: usize,
    pub feature_dim: usize,
    pub sigma: f64,
    pub process: CapacityProcess,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            t_blocks: 300,
            repeat: 96,
            grids: 15,
            feature_dim: 3,
            sigma: 0.01,
            process: CapacityProcess::Ar1,
            seed: 42,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_blocks == 0 || self.repeat == 0 || self.grids == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument("GenSpec counts must be positive".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Total number of time steps.
    pub fn t_len(&self) -> usize {
        self.t_blocks * self.repeat
    }

    /// Standard temporal split: the last `max(1, t_blocks/15)` blocks form
    /// the test period (280/20 blocks at the default 300).
    pub fn default_train_len(&self) -> Result<usize> {
        let test_blocks = (self.t_blocks / 15).max(1);
        if test_blocks >= self.t_blocks {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} blocks into train and test",
                self.t_blocks
            )));
        }
        Ok((self.t_blocks - test_blocks) * self.repeat)
    }
}

fn stream_rng(spec: &GenSpec, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    rng
}

/// I.i.d. U(0,1) features, drawn in `(t, i, d)` order with `d` fastest.
pub fn gen_inputs(spec: &GenSpec) -> Result<GridFeatureTensor> {
    spec.validate()?;
    let mut rng = stream_rng(spec, STREAM_INPUTS);
    let n = spec.t_len() * spec.grids * spec.feature_dim;
    let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    GridFeatureTensor::new(values, spec.t_len(), spec.grids, spec.feature_dim)
}

fn repeat_blocks(spec: &GenSpec, block_rows: Vec<Vec<f64>>) -> Result<CapacityMatrix> {
    let k = spec.grids;
    let t_len = spec.t_len();
    let mut values = Vec::with_capacity(t_len * k);
    let mut totals = Vec::with_capacity(t_len);
    for (b, row) in block_rows.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numerical(format!(
                "degenerate capacity block {b}: all grids clamped to zero"
            )));
        }
        for _ in 0..spec.repeat {
            values.extend_from_slice(row);
            totals.push(total);
        }
    }
    CapacityMatrix::new(values, totals, k)
}

/// True capacities from independent AR(1) block series, clamped at zero
/// (the recursion continues from the clamped state), each block row repeated
/// `repeat` times.
///
/// Stream draw order: K initial values U(0,1); K coefficients N(1, sigma^2);
/// then per block transition the K perturbations N(0, sigma^2).
pub fn gen_capacity_ar1(spec: &GenSpec) -> Result<CapacityMatrix> {
    spec.validate()?;
    let k = spec.grids;
    let mut rng = stream_rng(spec, STREAM_AR1);
    let mut state: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mut rows = Vec::with_capacity(spec.t_blocks);
    rows.push(state.clone());
    if spec.sigma == 0.0 {
        for _ in 1..spec.t_blocks {
            rows.push(state.clone());
        }
        return repeat_blocks(spec, rows);
    }
    let coeff_dist = Normal::new(1.0, spec.sigma)
        .map_err(|e| Error::InvalidArgument(format!("bad sigma: {e}")))?;
    let noise_dist = Normal::new(0.0, spec.sigma).expect("validated sigma");
    let coeffs: Vec<f64> = (0..k).map(|_| coeff_dist.sample(&mut rng)).collect();
    for _ in 1..spec.t_blocks {
        for (i, c) in state.iter_mut().enumerate() {
            *c = (coeffs[i] * *c + noise_dist.sample(&mut rng)).max(0.0);
        }
        rows.push(state.clone());
    }
    repeat_blocks(spec, rows)
}

/// True capacities from a correlated random walk with process noise
/// `q_ij = sigma^2 * 0.9^|i-j|`, sampled through the symmetric square root
/// of the covariance; the recorded truth is the (clamped) state sequence.
///
/// Stream draw order: K initial values U(0,1); then per block transition
/// K standard normals for the process noise followed by K standard normals
/// for the simulated measurement channel (variance 0.1 sigma^2), which the
/// generating model observes but the dataset discards.
pub fn gen_capacity_kalman(spec: &GenSpec) -> Result<CapacityMatrix> {
    spec.validate()?;
    let k = spec.grids;
    let mut rng = stream_rng(spec, STREAM_KALMAN);
    let mut state: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mut rows = Vec::with_capacity(spec.t_blocks);
    rows.push(state.clone());
    if spec.sigma == 0.0 {
        for _ in 1..spec.t_blocks {
            rows.push(state.clone());
        }
        return repeat_blocks(spec, rows);
    }
    let s2 = spec.sigma * spec.sigma;
    let q = DMatrix::from_fn(k, k, |i, j| s2 * 0.9f64.powi((i as i32 - j as i32).abs()));
    let (root, _) = sym_sqrt(&q, s2 * 1e-12)?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let meas_std = (0.1 * s2).sqrt();
    for _ in 1..spec.t_blocks {
        let z = DVector::from_fn(k, |_, _| std_normal.sample(&mut rng));
        let w = &root * z;
        for (i, c) in state.iter_mut().enumerate() {
            *c = (*c + w[i]).max(0.0);
        }
        // measurement channel of the generating model; not part of the data
        for _ in 0..k {
            let _ = meas_std * std_normal.sample(&mut rng);
        }
        rows.push(state.clone());
    }
    repeat_blocks(spec, rows)
}

/// The fixed unit response `sin(x1) + x2 + x3^2` (three features exactly).
pub fn unit_response(x: &[f64]) -> Result<f64> {
    if x.len() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "unit response takes 3 features, got {}",
            x.len()
        )));
    }
    Ok(x[0].sin() + x[1] + x[2] * x[2])
}

/// Compute per-grid unit outputs and the aggregate series
/// `Y_t = sum_i c_ti * y_ti`, packaging everything as a ground-truth
/// dataset.
pub fn assemble(features: GridFeatureTensor, capacities: CapacityMatrix) -> Result<Dataset> {
    let t_len = features.t_len();
    let k = features.grid_count();
    if capacities.t_len() != t_len || capacities.grid_count() != k {
        return Err(Error::DimensionMismatch(format!(
            "capacities ({}, {}) do not match features ({}, {})",
            capacities.t_len(),
            capacities.grid_count(),
            t_len,
            k
        )));
    }
    if features.feature_dim() != 3 {
        return Err(Error::DimensionMismatch(
            "the synthetic unit response takes exactly 3 features".into(),
        ));
    }
    let per_t: Vec<Result<(Vec<f64>, f64)>> = par::map_collect(t_len, |t| {
        let mut unit = Vec::with_capacity(k);
        let mut y = 0.0;
        for i in 0..k {
            let u = unit_response(features.row(t, i))?;
            y += capacities.get(t, i) * u;
            unit.push(u);
        }
        Ok((unit, y))
    });
    let mut unit_values = Vec::with_capacity(t_len * k);
    let mut outputs = Vec::with_capacity(t_len);
    for row in per_t {
        let (unit, y) = row?;
        unit_values.extend_from_slice(&unit);
        outputs.push(y);
    }
    let truth_unit = RowMatrix::new(unit_values, k)?;
    Dataset::new(
        features,
        AggregateOutputSeries::new(outputs)?,
        capacities.totals().to_vec(),
        Some(capacities),
        Some(truth_unit),
    )
}

/// Generate a full synthetic dataset from a spec.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    let features = gen_inputs(spec)?;
    let capacities = match spec.process {
        CapacityProcess::Ar1 => gen_capacity_ar1(spec)?,
        CapacityProcess::Kalman => gen_capacity_kalman(spec)?,
    };
    assemble(features, capacities)
}
