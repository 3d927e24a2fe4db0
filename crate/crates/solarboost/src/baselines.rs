//! Reference methods sharing the tree engine: mean-feature regression with
//! a uniform capacity assumption (AverageGrid), concatenated-feature
//! regression (FlattenGrid), and an oracle fit on the true per-grid
//! responses (IdealFit).

use crate::data::{Dataset, GridFeatureTensor, HyperParams, RowMatrix};
use crate::error::{Error, Result};
use crate::gbtree::{boost, RegressionTreeEnsemble, TreeParams};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    AverageGrid,
    FlattenGrid,
    IdealFit,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::AverageGrid => "average_grid",
            BaselineKind::FlattenGrid => "flatten_grid",
            BaselineKind::IdealFit => "ideal_fit",
        }
    }
}

/// How raw grid features map onto the regression input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLayout {
    /// Mean over grids: `D` inputs per step.
    Averaged { feature_dim: usize },
    /// Grid-major concatenation: `K * D` inputs per step.
    Flattened { grids: usize, feature_dim: usize },
    /// One row per `(step, grid)`: `D` inputs.
    PerGrid { feature_dim: usize },
}

impl FeatureLayout {
    pub fn input_dim(&self) -> usize {
        match *self {
            FeatureLayout::Averaged { feature_dim } => feature_dim,
            FeatureLayout::Flattened { grids, feature_dim } => grids * feature_dim,
            FeatureLayout::PerGrid { feature_dim } => feature_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub ensemble: RegressionTreeEnsemble,
    pub layout: FeatureLayout,
}

/// Training options beyond the shared hyperparameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineOptions {
    /// Fit AverageGrid against raw `Y` instead of the per-unit target
    /// `Y / C` (sensitivity variant; prediction is then not rescaled).
    pub average_grid_raw_target: bool,
}

/// Mean of the features across grids: row `t`, column `d` is
/// `(1/K) sum_i x_tid`.
pub fn average_features(features: &GridFeatureTensor) -> RowMatrix {
    let t_len = features.t_len();
    let k = features.grid_count();
    let d = features.feature_dim();
    let mut data = vec![0.0; t_len * d];
    par::for_each_chunk_mut(&mut data, d, |t, row| {
        for i in 0..k {
            let x = features.row(t, i);
            for (acc, v) in row.iter_mut().zip(x) {
                *acc += v;
            }
        }
        for acc in row.iter_mut() {
            *acc /= k as f64;
        }
    });
    RowMatrix::new(data, d).expect("finite by construction")
}

/// Grid-major concatenation: row `t` is `x_t0 ++ x_t1 ++ ... ++ x_t(K-1)`.
pub fn flatten_features(features: &GridFeatureTensor) -> RowMatrix {
    let t_len = features.t_len();
    let k = features.grid_count();
    let d = features.feature_dim();
    let mut data = vec![0.0; t_len * k * d];
    par::for_each_chunk_mut(&mut data, k * d, |t, row| {
        for i in 0..k {
            row[i * d..(i + 1) * d].copy_from_slice(features.row(t, i));
        }
    });
    RowMatrix::new(data, k * d).expect("finite by construction")
}

fn tree_params(hyper: &HyperParams) -> TreeParams {
    TreeParams {
        max_depth: hyper.max_depth,
        tree_reg: hyper.tree_reg,
        min_gain: hyper.min_gain,
        seed: hyper.seed,
    }
}

fn boost_squared_error(
    rows: &RowMatrix,
    targets: &[f64],
    hyper: &HyperParams,
) -> Result<RegressionTreeEnsemble> {
    boost(rows, hyper.n_rounds, hyper.learning_rate, &tree_params(hyper), |preds, g, h| {
        for i in 0..preds.len() {
            g[i] = 2.0 * (preds[i] - targets[i]);
            h[i] = 2.0;
        }
    })
}

pub fn train_baseline(kind: BaselineKind, ds: &Dataset, hyper: &HyperParams) -> Result<BaselineModel> {
    train_baseline_with(kind, ds, hyper, BaselineOptions::default())
}

pub fn train_baseline_with(
    kind: BaselineKind,
    ds: &Dataset,
    hyper: &HyperParams,
    opts: BaselineOptions,
) -> Result<BaselineModel> {
    hyper.validate()?;
    let d = ds.feature_dim();
    let k = ds.grid_count();
    let y = ds.outputs.as_slice();
    match kind {
        BaselineKind::AverageGrid => {
            let rows = average_features(&ds.features);
            let targets: Vec<f64> = if opts.average_grid_raw_target {
                y.to_vec()
            } else {
                y.iter().zip(&ds.totals).map(|(y, c)| y / c).collect()
            };
            let ensemble = boost_squared_error(&rows, &targets, hyper)?;
            Ok(BaselineModel { kind, ensemble, layout: FeatureLayout::Averaged { feature_dim: d } })
        }
        BaselineKind::FlattenGrid => {
            let rows = flatten_features(&ds.features);
            let ensemble = boost_squared_error(&rows, y, hyper)?;
            Ok(BaselineModel {
                kind,
                ensemble,
                layout: FeatureLayout::Flattened { grids: k, feature_dim: d },
            })
        }
        BaselineKind::IdealFit => {
            let unit = ds.truth_unit.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "IdealFit needs true per-grid responses (synthetic data only)".into(),
                )
            })?;
            // pooled (step, grid) rows against the true unit outputs
            let rows = RowMatrix::new(ds.features.as_slice().to_vec(), d)?;
            let ensemble = boost_squared_error(&rows, unit.as_slice(), hyper)?;
            Ok(BaselineModel { kind, ensemble, layout: FeatureLayout::PerGrid { feature_dim: d } })
        }
    }
}

/// Aggregate predictions. AverageGrid returns `C_t * f(mean features)`
/// (unless trained on the raw target, in which case pass `rescale = false`
/// via [`predict_baseline_raw`]); FlattenGrid ignores `totals`. IdealFit has
/// no aggregate prediction without capacities - see
/// [`predict_ideal_aggregate`].
pub fn predict_baseline(
    model: &BaselineModel,
    features: &GridFeatureTensor,
    totals: &[f64],
) -> Result<Vec<f64>> {
    predict_baseline_impl(model, features, totals, true)
}

/// Variant for an AverageGrid model trained on raw `Y` (no capacity
/// rescaling at prediction time).
pub fn predict_baseline_raw(
    model: &BaselineModel,
    features: &GridFeatureTensor,
    totals: &[f64],
) -> Result<Vec<f64>> {
    predict_baseline_impl(model, features, totals, false)
}

fn predict_baseline_impl(
    model: &BaselineModel,
    features: &GridFeatureTensor,
    totals: &[f64],
    rescale: bool,
) -> Result<Vec<f64>> {
    check_layout(model, features)?;
    let t_len = features.t_len();
    match model.kind {
        BaselineKind::AverageGrid => {
            if totals.len() != t_len {
                return Err(Error::DimensionMismatch(format!(
                    "{} totals for {} steps",
                    totals.len(),
                    t_len
                )));
            }
            let rows = average_features(features);
            Ok(par::map_collect(t_len, |t| {
                let f = model.ensemble.predict(rows.row(t));
                if rescale {
                    totals[t] * f
                } else {
                    f
                }
            }))
        }
        BaselineKind::FlattenGrid => {
            let rows = flatten_features(features);
            Ok(par::map_collect(t_len, |t| model.ensemble.predict(rows.row(t))))
        }
        BaselineKind::IdealFit => Err(Error::InvalidArgument(
            "IdealFit aggregate prediction needs capacities; use predict_ideal_aggregate".into(),
        )),
    }
}

/// Per-grid unit-output prediction for one grid column. AverageGrid's unit
/// function is `f(mean features)` (identical for every grid); FlattenGrid
/// does not expose one.
pub fn predict_baseline_unit(
    model: &BaselineModel,
    features: &GridFeatureTensor,
    grid: usize,
) -> Result<Vec<f64>> {
    check_layout(model, features)?;
    if grid >= features.grid_count() {
        return Err(Error::InvalidArgument(format!("grid {grid} out of range")));
    }
    let t_len = features.t_len();
    match model.kind {
        BaselineKind::AverageGrid => {
            let rows = average_features(features);
            Ok(par::map_collect(t_len, |t| model.ensemble.predict(rows.row(t))))
        }
        BaselineKind::IdealFit => {
            Ok(par::map_collect(t_len, |t| model.ensemble.predict(features.row(t, grid))))
        }
        BaselineKind::FlattenGrid => Err(Error::InvalidArgument(
            "FlattenGrid does not define a unit-output prediction".into(),
        )),
    }
}

/// Aggregate an IdealFit model with known capacities (synthetic
/// diagnostics): `sum_i c_ti * f(x_ti)`.
pub fn predict_ideal_aggregate(
    model: &BaselineModel,
    features: &GridFeatureTensor,
    capacities: &crate::data::CapacityMatrix,
) -> Result<Vec<f64>> {
    if model.kind != BaselineKind::IdealFit {
        return Err(Error::InvalidArgument("capacity aggregation is for IdealFit".into()));
    }
    check_layout(model, features)?;
    if capacities.t_len() != features.t_len() || capacities.grid_count() != features.grid_count()
    {
        return Err(Error::DimensionMismatch("capacities do not match features".into()));
    }
    Ok(par::map_collect(features.t_len(), |t| {
        (0..features.grid_count())
            .map(|i| capacities.get(t, i) * model.ensemble.predict(features.row(t, i)))
            .sum()
    }))
}

fn check_layout(model: &BaselineModel, features: &GridFeatureTensor) -> Result<()> {
    let ok = match model.layout {
        FeatureLayout::Averaged { feature_dim } | FeatureLayout::PerGrid { feature_dim } => {
            features.feature_dim() == feature_dim
        }
        FeatureLayout::Flattened { grids, feature_dim } => {
            features.feature_dim() == feature_dim && features.grid_count() == grids
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "feature tensor ({} grids x {} dims) does not fit layout {:?}",
            features.grid_count(),
            features.feature_dim(),
            model.layout
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AggregateOutputSeries, CapacityMatrix};
    use crate::synthgen::{generate, CapacityProcess, GenSpec};

    fn toy_features() -> GridFeatureTensor {
        // T=2, K=2, D=2
        GridFeatureTensor::new(vec![1.0, 3.0, 3.0, 5.0, 2.0, 4.0, 6.0, 8.0], 2, 2, 2).unwrap()
    }

    #[test]
    fn average_features_examples() {
        let avg = average_features(&toy_features());
        assert_eq!(avg.row(0), &[2.0, 4.0]);
        assert_eq!(avg.row(1), &[4.0, 6.0]);

        // K = 1 is the identity
        let f = GridFeatureTensor::new(vec![1.0, 2.0, 3.0, 4.0], 2, 1, 2).unwrap();
        let avg = average_features(&f);
        assert_eq!(avg.as_slice(), f.as_slice());

        // brute-force oracle on a random tensor
        let spec = GenSpec { t_blocks: 3, repeat: 2, grids: 4, ..GenSpec::default() };
        let x = crate::synthgen::gen_inputs(&spec).unwrap();
        let avg = average_features(&x);
        for t in 0..x.t_len() {
            for d in 0..x.feature_dim() {
                let mut acc = 0.0;
                for i in 0..x.grid_count() {
                    acc += x.get(t, i, d);
                }
                acc /= x.grid_count() as f64;
                assert!((avg.get(t, d) - acc).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flatten_features_examples() {
        let flat = flatten_features(&toy_features());
        assert_eq!(flat.row(0), &[1.0, 3.0, 3.0, 5.0]);
        assert_eq!(flat.row(1), &[2.0, 4.0, 6.0, 8.0]);

        // inverse map reproduces the tensor
        let spec = GenSpec { t_blocks: 2, repeat: 2, grids: 3, ..GenSpec::default() };
        let x = crate::synthgen::gen_inputs(&spec).unwrap();
        let flat = flatten_features(&x);
        for t in 0..x.t_len() {
            for i in 0..x.grid_count() {
                for d in 0..x.feature_dim() {
                    assert_eq!(flat.get(t, i * x.feature_dim() + d), x.get(t, i, d));
                }
            }
        }
    }

    fn quick_hyper() -> HyperParams {
        HyperParams {
            n_rounds: 40,
            learning_rate: 0.3,
            max_depth: 3,
            tree_reg: 1.0,
            ..HyperParams::default()
        }
    }

    #[test]
    fn average_grid_learns_per_unit_target() {
        // uniform capacity C_t/K is exactly right here, so the per-unit
        // regression sees a stable target
        let spec = GenSpec { t_blocks: 40, repeat: 4, grids: 3, seed: 5, ..GenSpec::default() };
        let features = crate::synthgen::gen_inputs(&spec).unwrap();
        let t_len = spec.t_len();
        let caps =
            CapacityMatrix::new(vec![2.0; t_len * 3], vec![6.0; t_len], 3).unwrap();
        let ds = crate::synthgen::assemble(features, caps).unwrap();
        let hyper = HyperParams { grid_count: 3, ..quick_hyper() };
        let model = train_baseline(BaselineKind::AverageGrid, &ds, &hyper).unwrap();
        let preds = predict_baseline(&model, &ds.features, &ds.totals).unwrap();
        let rmse = crate::evalbench::rmse(ds.outputs.as_slice(), &preds).unwrap();
        let scale = ds.outputs.as_slice().iter().map(|y| y * y).sum::<f64>().sqrt();
        assert!(rmse < 0.2 * scale, "rmse {rmse} vs scale {scale}");

        // constant-C equivalence: training on Y/C then rescaling by C
        // matches a plain regression on Y when C = 1
        let caps1 = CapacityMatrix::new(
            vec![0.5; t_len * 2],
            vec![1.0; t_len],
            2,
        )
        .unwrap();
        let spec2 = GenSpec { grids: 2, ..spec };
        let feats2 = crate::synthgen::gen_inputs(&spec2).unwrap();
        let ds1 = crate::synthgen::assemble(feats2, caps1).unwrap();
        let hyper2 = HyperParams { grid_count: 2, ..quick_hyper() };
        let per_unit = train_baseline(BaselineKind::AverageGrid, &ds1, &hyper2).unwrap();
        let raw = train_baseline_with(
            BaselineKind::AverageGrid,
            &ds1,
            &hyper2,
            BaselineOptions { average_grid_raw_target: true },
        )
        .unwrap();
        let p1 = predict_baseline(&per_unit, &ds1.features, &ds1.totals).unwrap();
        let p2 = predict_baseline_raw(&raw, &ds1.features, &ds1.totals).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn average_grid_constant_function_scaling() {
        // a model that always predicts 0.5 scales linearly with C_t
        let features = toy_features();
        let model = BaselineModel {
            kind: BaselineKind::AverageGrid,
            ensemble: RegressionTreeEnsemble::from_parts(
                vec![crate::gbtree::Tree::from_nodes(vec![crate::gbtree::TreeNode::Leaf {
                    weight: 0.5,
                }])
                .unwrap()],
                1.0,
                0.0,
            ),
            layout: FeatureLayout::Averaged { feature_dim: 2 },
        };
        let p = predict_baseline(&model, &features, &[4.0, 8.0]).unwrap();
        assert_eq!(p, vec![2.0, 4.0]);
        let doubled = predict_baseline(&model, &features, &[8.0, 16.0]).unwrap();
        assert_eq!(doubled, vec![4.0, 8.0]);
    }

    #[test]
    fn flatten_grid_empty_ensemble_predicts_zero() {
        let features = toy_features();
        let model = BaselineModel {
            kind: BaselineKind::FlattenGrid,
            ensemble: RegressionTreeEnsemble::new(0.1),
            layout: FeatureLayout::Flattened { grids: 2, feature_dim: 2 },
        };
        assert_eq!(predict_baseline(&model, &features, &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn ideal_fit_requires_truth_and_beats_average_grid_on_unit_outputs() {
        let spec = GenSpec {
            t_blocks: 60,
            repeat: 4,
            grids: 4,
            seed: 11,
            process: CapacityProcess::Ar1,
            ..GenSpec::default()
        };
        let ds = generate(&spec).unwrap();
        let hyper = HyperParams { grid_count: 4, n_rounds: 60, learning_rate: 0.3, ..HyperParams::default() };

        // no truth -> error
        let stripped = Dataset::new(
            ds.features.clone(),
            AggregateOutputSeries::new(ds.outputs.as_slice().to_vec()).unwrap(),
            ds.totals.clone(),
            None,
            None,
        )
        .unwrap();
        assert!(train_baseline(BaselineKind::IdealFit, &stripped, &hyper).is_err());

        let ideal = train_baseline(BaselineKind::IdealFit, &ds, &hyper).unwrap();
        let avg = train_baseline(BaselineKind::AverageGrid, &ds, &hyper).unwrap();
        let truth: Vec<f64> =
            (0..ds.t_len()).map(|t| ds.truth_unit.as_ref().unwrap().get(t, 0)).collect();
        let ideal_unit = predict_baseline_unit(&ideal, &ds.features, 0).unwrap();
        let avg_unit = predict_baseline_unit(&avg, &ds.features, 0).unwrap();
        let e_ideal = crate::evalbench::rmse(&truth, &ideal_unit).unwrap();
        let e_avg = crate::evalbench::rmse(&truth, &avg_unit).unwrap();
        assert!(
            e_ideal < e_avg,
            "IdealFit unit rmse {e_ideal} should beat AverageGrid {e_avg}"
        );
        assert!(predict_baseline_unit(&ideal, &ds.features, 99).is_err());
        assert!(
            predict_baseline_unit(
                &train_baseline(BaselineKind::FlattenGrid, &ds, &hyper).unwrap(),
                &ds.features,
                0
            )
            .is_err()
        );
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let spec = GenSpec { t_blocks: 20, repeat: 2, grids: 3, ..GenSpec::default() };
        let ds = generate(&spec).unwrap();
        let hyper = HyperParams { grid_count: 3, n_rounds: 10, ..quick_hyper() };
        for kind in [BaselineKind::AverageGrid, BaselineKind::FlattenGrid, BaselineKind::IdealFit]
        {
            let a = train_baseline(kind, &ds, &hyper).unwrap();
            let b = train_baseline(kind, &ds, &hyper).unwrap();
            assert_eq!(a.ensemble, b.ensemble, "{kind:?} not deterministic");
        }
    }
}
