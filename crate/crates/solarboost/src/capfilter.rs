//! Latent capacity estimation: symmetric matrix square roots, the Kalman
//! recursion with a time-varying sensing matrix, block-constant state
//! handling, and projection onto the capacity constraint set.
//!
//! State-space model per block `b` (capacities constant inside a block):
//!
//! * transition  `c_b = c_{b-1} + w_b`, `w_b ~ N(0, (1/lambda) I)`
//! * observation `eta_t = H_t c_b + v_t`, `v_t ~ N(0, I)` for each step `t`
//!   of the block, where `H_t` is the symmetric PSD square root of the
//!   step's sensing matrix.
//!
//! `1/lambda` process noise makes the filter the Bayesian counterpart of the
//! `lambda ||c_b - c_{b-1}||^2` continuity penalty; the prior on the first
//! block is `N(init, (1/lambda) I)` for the same reason.

use crate::data::{force_row_sum, BlockStructure, CapacityMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use nalgebra::{DMatrix, DVector};

/// Mean and covariance of the latent capacity at a block boundary.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl KalmanState {
    /// Validates symmetry (1e-10) and positive semidefiniteness (minimum
    /// eigenvalue >= -1e-10, relative to scale).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, expected {k}x{k}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kalman state".into()));
        }
        let scale = cov.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        check_symmetric(&cov, 1e-10 * scale)?;
        let eig = linalg::sym_eigen(cov.as_slice(), k);
        let min = eig.values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min < -1e-10 * scale {
            return Err(Error::InvalidArgument(format!(
                "covariance has negative eigenvalue {min}"
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "matrix not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Symmetric square root and inverse square root with eigenvalues clamped
/// from below at `floor`.
///
/// `root * root` reproduces the floored input, and `root * inv_root = I`,
/// both exactly in the shared eigenbasis.
pub fn sym_sqrt(s: &DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = s.nrows();
    if s.ncols() != k || k == 0 {
        return Err(Error::DimensionMismatch(format!(
            "sym_sqrt needs a square matrix, got {}x{}",
            k,
            s.ncols()
        )));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument(format!("floor must be > 0, got {floor}")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sym_sqrt input".into()));
    }
    let scale = s.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    check_symmetric(s, 1e-10 * scale)?;
    // nalgebra stores column-major; symmetric, so the slice is row-major too
    let eig = linalg::sym_eigen(s.as_slice(), k);
    let root = eig.spectral_map(|l| l.max(floor).sqrt());
    let inv_root = eig.spectral_map(|l| 1.0 / l.max(floor).sqrt());
    Ok((DMatrix::from_row_slice(k, k, &root), DMatrix::from_row_slice(k, k, &inv_root)))
}

/// One Kalman predict/update step with observation noise `I`.
///
/// Predict: `cov += process_var * I`. Update with gain
/// `G = cov H^T (H cov H^T + I)^{-1}`, then `mean += G (obs - H mean)` and
/// `cov = (I - G H) cov`, symmetrized.
pub fn kalman_step(
    state: &KalmanState,
    h: &DMatrix<f64>,
    obs: &DVector<f64>,
    process_var: f64,
) -> Result<KalmanState> {
    let k = state.dim();
    if h.nrows() != k || h.ncols() != k || obs.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "kalman_step expects {k}x{k} sensing and length-{k} observation"
        )));
    }
    if !(process_var >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "process_var must be nonnegative, got {process_var}"
        )));
    }
    if h.iter().any(|v| !v.is_finite()) || obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kalman_step input".into()));
    }

    let mut cov = state.cov.clone();
    for i in 0..k {
        cov[(i, i)] += process_var;
    }

    // S = H cov H^T + I; SPD by construction, assert via Cholesky anyway
    let mut s_innov = h * &cov * h.transpose();
    for i in 0..k {
        s_innov[(i, i)] += 1.0;
    }
    let chol = s_innov
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance not SPD".into()))?;

    // gain = cov H^T S^{-1} = (S^{-1} H cov)^T
    let h_cov = h * &cov;
    let gain = chol.solve(&h_cov).transpose();

    let innovation = obs - h * &state.mean;
    let mean = &state.mean + &gain * innovation;
    let mut new_cov = (DMatrix::identity(k, k) - &gain * h) * &cov;
    new_cov = (&new_cov + new_cov.transpose()) * 0.5;

    Ok(KalmanState { mean, cov: new_cov })
}

/// Clamp negatives to zero, then rescale to sum `c_total`; an all-zero
/// vector falls back to the uniform split.
///
/// The floating-point sum of the result is forced to equal `c_total`
/// exactly, which makes the projection idempotent.
pub fn project_capacity(c: &[f64], c_total: f64) -> Result<Vec<f64>> {
    if !(c_total > 0.0) || !c_total.is_finite() {
        return Err(Error::InvalidArgument(format!("c_total must be positive, got {c_total}")));
    }
    if c.is_empty() {
        return Err(Error::InvalidArgument("empty capacity vector".into()));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("capacity vector".into()));
    }
    let mut out: Vec<f64> = c.iter().map(|&v| v.max(0.0)).collect();
    let uniform = c_total / out.len() as f64;
    let sum: f64 = out.iter().sum();
    let scale = c_total / sum;
    if sum > 0.0 && scale.is_finite() {
        // skip the multiply when already within a few ulps: together with
        // the fixed-point residual fixer this makes reprojection a no-op
        if (sum - c_total).abs() > 4.0 * f64::EPSILON * c_total {
            for v in &mut out {
                *v *= scale;
            }
        }
    } else {
        out.fill(uniform);
    }
    force_row_sum(&mut out, c_total);
    Ok(out)
}

/// Sensing root and preprocessed measurement for one time step.
#[derive(Debug, Clone)]
pub struct StepObservation {
    /// `H_t`, the symmetric square root of the floored sensing matrix.
    pub sensing: DMatrix<f64>,
    /// `eta_t = Y_t Sigma_t^{-1/2} (delta_t + q_t)`.
    pub measurement: DVector<f64>,
}

/// Per-block information-form sums: `sum H^T H` and `sum H^T eta`.
struct BlockMoments {
    precision: DMatrix<f64>,
    info: DVector<f64>,
}

fn block_moments(obs: &[StepObservation], blocks: &BlockStructure, k: usize) -> Vec<BlockMoments> {
    par::map_collect(blocks.len(), |b| {
        let mut precision = DMatrix::zeros(k, k);
        let mut info = DVector::zeros(k);
        for t in blocks.range(b) {
            let h = &obs[t].sensing;
            precision.gemm_tr(1.0, h, h, 1.0);
            info.gemv_tr(1.0, h, &obs[t].measurement, 1.0);
        }
        BlockMoments { precision, info }
    })
}

/// Forward Kalman filter over blocks, returning the unprojected posterior
/// mean of every block.
///
/// Within a block the per-step updates are accumulated in information form
/// (posterior precision `P^{-1} + sum H^T H`, information vector
/// `P^{-1} m + sum H^T eta`), which composes the step updates of
/// [`kalman_step`] with zero process noise in closed form. Process noise
/// `1/lambda` enters only at block boundaries; the prior is
/// `N(init, (1/lambda) I)`.
pub fn filter_block_means(
    obs: &[StepObservation],
    blocks: &BlockStructure,
    lambda: f64,
    init: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let k = init.len();
    validate_filter_inputs(obs, blocks, lambda, init)?;
    let moments = block_moments(obs, blocks, k);

    let mut mean = DVector::from_column_slice(init);
    let mut cov = DMatrix::from_diagonal_element(k, k, 1.0 / lambda);
    let mut out = Vec::with_capacity(blocks.len());
    for (b, m) in moments.iter().enumerate() {
        if b > 0 {
            for i in 0..k {
                cov[(i, i)] += 1.0 / lambda;
            }
        }
        let chol_prior = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("prior covariance not SPD at block {b}")))?;
        let prior_precision = chol_prior.inverse();
        let info = &prior_precision * &mean + &m.info;
        let posterior_precision = prior_precision + &m.precision;
        let chol_post = posterior_precision.cholesky().ok_or_else(|| {
            Error::Numerical(format!("posterior precision not SPD at block {b}"))
        })?;
        mean = chol_post.solve(&info);
        cov = chol_post.inverse();
        cov = (&cov + cov.transpose()) * 0.5;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("filter diverged at block {b}")));
        }
        out.push(mean.clone());
    }
    Ok(out)
}

/// Run the forward filter and project each block's mean onto the capacity
/// constraints of every step it covers.
pub fn estimate_capacities(
    obs: &[StepObservation],
    totals: &[f64],
    blocks: &BlockStructure,
    lambda: f64,
    init: &[f64],
) -> Result<CapacityMatrix> {
    let k = init.len();
    if totals.len() != blocks.t_len() {
        return Err(Error::DimensionMismatch(format!(
            "totals length {} != T {}",
            totals.len(),
            blocks.t_len()
        )));
    }
    let means = filter_block_means(obs, blocks, lambda, init)?;
    let t_len = blocks.t_len();
    // project block means row by row; totals may vary within a block
    let rows: Vec<Result<Vec<f64>>> = par::map_collect(t_len, |t| {
        let b = blocks.block_of(t);
        project_capacity(means[b].as_slice(), totals[t])
    });
    let mut values = vec![0.0; t_len * k];
    for (t, row) in rows.into_iter().enumerate() {
        values[t * k..(t + 1) * k].copy_from_slice(&row?);
    }
    CapacityMatrix::new(values, totals.to_vec(), k)
}

/// Dense reference solve of the block-constant, lambda-penalized least
/// squares problem the filter approximates, via `(B K)^2` normal equations.
///
/// Objective: `sum_t ||H_t c_{b(t)} - eta_t||^2
///             + lambda sum_{b>=1} ||c_b - c_{b-1}||^2
///             + lambda ||c_0 - init||^2`
/// (the last term mirrors the filter's prior and keeps the system SPD).
///
/// This is a test oracle with O((BK)^3) cost, not a production path.
pub fn joint_solve_reference(
    obs: &[StepObservation],
    blocks: &BlockStructure,
    lambda: f64,
    init: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let k = init.len();
    validate_filter_inputs(obs, blocks, lambda, init)?;
    let n_blocks = blocks.len();
    let moments = block_moments(obs, blocks, k);
    let dim = n_blocks * k;
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (b, m) in moments.iter().enumerate() {
        let o = b * k;
        for i in 0..k {
            for j in 0..k {
                a[(o + i, o + j)] += m.precision[(i, j)];
            }
            rhs[o + i] += m.info[i];
        }
        // penalty Laplacian: prior edge for block 0, chain edges elsewhere
        let mut degree = if b == 0 { 1.0 } else { 0.0 };
        if b > 0 {
            degree += 1.0;
        }
        if b + 1 < n_blocks {
            degree += 1.0;
        }
        for i in 0..k {
            a[(o + i, o + i)] += lambda * degree;
        }
        if b + 1 < n_blocks {
            for i in 0..k {
                a[(o + i, o + k + i)] -= lambda;
                a[(o + k + i, o + i)] -= lambda;
            }
        }
        if b == 0 {
            for i in 0..k {
                rhs[i] += lambda * init[i];
            }
        }
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("joint system not SPD".into()))?;
    let sol = chol.solve(&rhs);
    Ok((0..n_blocks).map(|b| DVector::from(sol.rows(b * k, k).clone_owned())).collect())
}

fn validate_filter_inputs(
    obs: &[StepObservation],
    blocks: &BlockStructure,
    lambda: f64,
    init: &[f64],
) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    if init.is_empty() {
        return Err(Error::InvalidArgument("empty initial capacity".into()));
    }
    if init.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("initial capacity must be finite and >= 0".into()));
    }
    if obs.len() != blocks.t_len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for T = {}",
            obs.len(),
            blocks.t_len()
        )));
    }
    let k = init.len();
    for (t, o) in obs.iter().enumerate() {
        if o.sensing.nrows() != k || o.sensing.ncols() != k || o.measurement.len() != k {
            return Err(Error::DimensionMismatch(format!("observation {t} has wrong shape")));
        }
    }
    Ok(())
}
