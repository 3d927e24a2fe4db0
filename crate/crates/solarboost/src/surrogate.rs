//! Loss mathematics for one time step: the true squared aggregate error, its
//! convex separable upper bound, the per-grid gradients/Hessians that drive
//! tree fitting, and the sensing matrix of the capacity filter.
//!
//! Writing `r = Y - c^T q` for the current residual and `delta_i` for the
//! next tree's output on grid `i`:
//!
//! * true objective:   `(r - sum_i c_i delta_i)^2`
//! * surrogate:        `(1/K) sum_i (-K c_i delta_i + r)^2`
//!
//! The surrogate upper-bounds the true objective for nonnegative `c`
//! (Jensen), touches it at `delta = 0`, and decouples the grids so each
//! sample `(t, i)` contributes an independent gradient/Hessian pair.

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::DMatrix;

/// One time step's ingredients: capacities `c`, current ensemble predictions
/// per grid `q`, and the observed aggregate output `Y`.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    capacities: &'a [f64],
    ensemble_preds: &'a [f64],
    output: f64,
}

impl<'a> StepContext<'a> {
    pub fn new(capacities: &'a [f64], ensemble_preds: &'a [f64], output: f64) -> Result<Self> {
        if capacities.len() != ensemble_preds.len() || capacities.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "capacities ({}) and predictions ({}) must be equal-length and non-empty",
                capacities.len(),
                ensemble_preds.len()
            )));
        }
        if !output.is_finite() {
            return Err(Error::NonFinite("aggregate output".into()));
        }
        for (i, &c) in capacities.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("capacity {i}")));
            }
            if c < 0.0 {
                return Err(Error::InvalidArgument(format!("capacity {i} is negative: {c}")));
            }
        }
        if let Some(i) = ensemble_preds.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("ensemble prediction {i}")));
        }
        Ok(Self { capacities, ensemble_preds, output })
    }

    /// Hot-loop constructor for callers whose inputs are validated once per
    /// round (the training driver); debug builds still check.
    pub(crate) fn new_unchecked(
        capacities: &'a [f64],
        ensemble_preds: &'a [f64],
        output: f64,
    ) -> Self {
        debug_assert!(Self::new(capacities, ensemble_preds, output).is_ok());
        Self { capacities, ensemble_preds, output }
    }

    pub fn grid_count(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[f64] {
        self.capacities
    }

    pub fn ensemble_preds(&self) -> &[f64] {
        self.ensemble_preds
    }

    pub fn output(&self) -> f64 {
        self.output
    }
}

/// `Y - c^T q`: the capacity-weighted fitting residual.
pub fn residual_dot(ctx: &StepContext) -> f64 {
    let mut dot = 0.0;
    for (c, q) in ctx.capacities.iter().zip(ctx.ensemble_preds) {
        dot += c * q;
    }
    ctx.output - dot
}

/// Squared aggregate error after adding increment `delta` to the ensemble.
pub fn true_objective(ctx: &StepContext, delta: &[f64]) -> f64 {
    assert_eq!(delta.len(), ctx.grid_count(), "delta length mismatch");
    let mut inc = 0.0;
    for (c, d) in ctx.capacities.iter().zip(delta) {
        inc += c * d;
    }
    let e = residual_dot(ctx) - inc;
    e * e
}

/// The separable upper bound of [`true_objective`], tangent at `delta = 0`.
///
/// Evaluated in the expanded form
/// `K sum (c_i d_i)^2 - 2 r sum c_i d_i + r^2`, whose two leading terms
/// vanish identically at `delta = 0` so the tangency is exact in floating
/// point as well.
pub fn surrogate_loss(ctx: &StepContext, delta: &[f64]) -> f64 {
    assert_eq!(delta.len(), ctx.grid_count(), "delta length mismatch");
    let k = ctx.grid_count() as f64;
    let r = residual_dot(ctx);
    let mut cd = 0.0;
    let mut cd2 = 0.0;
    for (c, d) in ctx.capacities.iter().zip(delta) {
        let prod = c * d;
        cd += prod;
        cd2 += prod * prod;
    }
    k * cd2 - 2.0 * r * cd + r * r
}

/// Per-grid gradient/Hessian of the surrogate at `delta = 0`:
/// `g_i = -2 c_i (Y - c^T q)`, `h_i = 2 c_i^2`.
pub fn grad_hess(ctx: &StepContext) -> (Vec<f64>, Vec<f64>) {
    let mut g = vec![0.0; ctx.grid_count()];
    let mut h = vec![0.0; ctx.grid_count()];
    grad_hess_into(ctx, &mut g, &mut h);
    (g, h)
}

/// In-place variant of [`grad_hess`] for the training hot loop.
pub fn grad_hess_into(ctx: &StepContext, grad: &mut [f64], hess: &mut [f64]) {
    debug_assert_eq!(grad.len(), ctx.grid_count());
    debug_assert_eq!(hess.len(), ctx.grid_count());
    let r = residual_dot(ctx);
    for (i, &c) in ctx.capacities.iter().enumerate() {
        grad[i] = -2.0 * c * r;
        hess[i] = 2.0 * c * c;
    }
}

/// The un-floored sensing matrix
/// `Sigma = K diag(delta^2) + q q^T + q delta^T + delta q^T`.
///
/// Always positive semidefinite: `c^T Sigma c >= (c^T (q + delta))^2 / 1`
/// by Cauchy-Schwarz, but it can be singular, hence the eigenvalue floor
/// applied by [`sigma_matrix`] / `capfilter::sym_sqrt`.
pub fn sigma_raw(ctx: &StepContext, delta: &[f64]) -> DMatrix<f64> {
    assert_eq!(delta.len(), ctx.grid_count(), "delta length mismatch");
    let k = ctx.grid_count();
    let q = ctx.ensemble_preds;
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut v = q[i] * q[j] + q[i] * delta[j] + delta[i] * q[j];
            if i == j {
                v += k as f64 * delta[i] * delta[i];
            }
            m[(i, j)] = v;
        }
    }
    m
}

/// Closed-form `trace(sigma_raw)`: `K sum delta^2 + q.q + 2 q.delta`.
pub fn sigma_trace(ctx: &StepContext, delta: &[f64]) -> f64 {
    let k = ctx.grid_count() as f64;
    let q = ctx.ensemble_preds;
    let mut dd = 0.0;
    let mut qq = 0.0;
    let mut qd = 0.0;
    for (qi, di) in q.iter().zip(delta) {
        dd += di * di;
        qq += qi * qi;
        qd += qi * di;
    }
    k * dd + qq + 2.0 * qd
}

/// Scale-aware eigenvalue floor: `coeff * (1 + trace / K)`.
pub fn scaled_floor(coeff: f64, trace: f64, grid_count: usize) -> f64 {
    coeff * (1.0 + trace / grid_count as f64)
}

/// The sensing matrix with eigenvalues clamped from below at `pd_floor`,
/// making it positive definite.
pub fn sigma_matrix(ctx: &StepContext, delta: &[f64], pd_floor: f64) -> DMatrix<f64> {
    let k = ctx.grid_count();
    let raw = sigma_raw(ctx, delta);
    let floored = linalg::floor_spd(raw.as_slice(), k, pd_floor);
    // linalg uses row-major but the result is symmetric, so the layout swap
    // is a no-op.
    DMatrix::from_row_slice(k, k, &floored)
}
