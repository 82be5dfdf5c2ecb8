//! Model interpretation: permutation variable importance and partial
//! dependence.
//!
//! Importance follows the whole-model permutation recipe: a baseline RMSE is
//! computed once, then each feature column is reshuffled `repeats` times with
//! independent seeded streams and the RMSE increase is recorded per repeat.
//! A feature no tree ever references leaves predictions bit-identical, so
//! its score is exactly zero on every repeat. An out-of-bag variant for
//! bagging and random forests scores each tree on its own left-out rows and
//! averages the per-tree differences, counting trees that never use the
//! feature as exact zeros.
//!
//! Partial dependence clamps one (or two) features to a grid value,
//! averages the model prediction over the background rows and reports the
//! grid/value table. Numeric grids are equally spaced over the observed
//! range; categorical grids enumerate the schema levels. Backgrounds larger
//! than [`PDP_MAX_BACKGROUND`] rows are reduced by a seeded subsample with a
//! fixed internal seed, so repeated calls see the same rows.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{Column, Dataset};
use crate::ensemble::{EnsembleKind, EnsembleModel};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::{derive_seed, stream, stream2};
use crate::scalar::Scalar;

/// Background-row cap for partial dependence averaging.
pub const PDP_MAX_BACKGROUND: usize = 5_000;

/// Internal master seed for the background subsample.
const PDP_BACKGROUND_SEED: u64 = 0x9D90_55B5;

// ── permutation importance ─────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImportance<S> {
    pub feature: String,
    /// Arithmetic mean of `samples`.
    pub mean: S,
    /// RMSE increase per repeat, in response units.
    pub samples: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceReport<S> {
    pub features: Vec<FeatureImportance<S>>,
    pub baseline_rmse: S,
    pub repeats: usize,
    pub seed: u64,
    /// Label of the data slice the report was computed on.
    pub slice: String,
}

impl<S: Scalar> ImportanceReport<S> {
    /// Tidy CSV: `feature,repeat,vi`, one row per (feature, repeat).
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::from("feature,repeat,vi\n");
        for feature in &self.features {
            for (repeat, vi) in feature.samples.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", feature.feature, repeat, vi));
            }
        }
        out.into_bytes()
    }

    /// Features sorted by decreasing mean importance.
    pub fn ranking(&self) -> Vec<(&str, S)> {
        let mut ranked: Vec<(&str, S)> = self
            .features
            .iter()
            .map(|f| (f.feature.as_str(), f.mean))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite importance"));
        ranked
    }
}

fn rmse_of<S: Scalar>(predicted: &[S], observed: &[S]) -> S {
    let n = S::from_count(observed.len());
    let sq = predicted
        .iter()
        .zip(observed)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum::<S>();
    (sq / n).sqrt()
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut crate::rng::stream(seed, 0));
    indices
}

fn permute_column<S: Scalar>(column: &Column<S>, order: &[usize]) -> Column<S> {
    match column {
        Column::Numeric(v) => Column::Numeric(order.iter().map(|&i| v[i]).collect()),
        Column::Categorical(v) => Column::Categorical(order.iter().map(|&i| v[i]).collect()),
    }
}

/// Whole-model permutation importance with RMSE as the metric.
///
/// For feature `j` and repeat `r`, column `j` is reshuffled with the stream
/// addressed by `(seed, j, r)`, the model is re-scored, and
/// `RMSE_permuted − RMSE_baseline` is recorded. The input dataset is never
/// mutated. `slice_label` is carried into the report metadata.
pub fn permutation_importance<S: Scalar>(
    model: &dyn Model<S>,
    data: &Dataset<S>,
    repeats: usize,
    seed: u64,
    slice_label: &str,
) -> Result<ImportanceReport<S>> {
    if repeats == 0 {
        return Err(Error::InvalidRepeats);
    }
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let baseline_rmse = rmse_of(&model.predict_dataset(data)?, data.response());

    let features: Vec<FeatureImportance<S>> = (0..data.p())
        .into_par_iter()
        .map(|j| -> Result<FeatureImportance<S>> {
            let mut scratch = data.clone();
            let original = data.column(j).clone();
            let mut samples = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let order = shuffled_indices(data.n(), derive_seed(derive_seed(seed, j as u64), r as u64));
                scratch.set_column(j, permute_column(&original, &order));
                let rmse = rmse_of(&model.predict_dataset(&scratch)?, scratch.response());
                samples.push(rmse - baseline_rmse);
            }
            let mean = samples.iter().copied().sum::<S>() / S::from_count(samples.len());
            Ok(FeatureImportance {
                feature: data.schema().feature(j).name.clone(),
                mean,
                samples,
            })
        })
        .collect::<Result<_>>()?;

    Ok(ImportanceReport {
        features,
        baseline_rmse,
        repeats,
        seed,
        slice: slice_label.to_string(),
    })
}

/// Per-tree out-of-bag permutation importance for bagging and random
/// forests: every tree is scored on its own out-of-bag rows before and after
/// permuting the feature within those rows, and the differences are averaged
/// over trees. Trees that never reference the feature contribute exactly
/// zero. `train` must be the dataset the model was fitted on.
pub fn permutation_importance_oob<S: Scalar>(
    model: &EnsembleModel<S>,
    train: &Dataset<S>,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport<S>> {
    if model.kind() == EnsembleKind::Boosting {
        return Err(Error::NotApplicable { kind: "boosting" });
    }
    if repeats == 0 {
        return Err(Error::InvalidRepeats);
    }
    let preds_check = model.predict_dataset(train)?; // schema check
    drop(preds_check);

    let oob_sets = model.oob_sets(train.n());
    let trees = model.trees();
    let used: Vec<std::collections::BTreeSet<usize>> =
        trees.iter().map(|t| t.used_features()).collect();

    // Per-tree baseline RMSE on its own out-of-bag rows.
    let baselines: Vec<Option<S>> = trees
        .iter()
        .zip(&oob_sets)
        .map(|(tree, oob)| {
            if oob.is_empty() {
                return None;
            }
            let preds: Vec<S> = oob.iter().map(|&i| tree.predict_row(train, i as usize)).collect();
            let obs: Vec<S> = oob.iter().map(|&i| train.response()[i as usize]).collect();
            Some(rmse_of(&preds, &obs))
        })
        .collect();
    let n_scored = baselines.iter().flatten().count();
    if n_scored == 0 {
        return Err(Error::NoOobRows);
    }
    let baseline_rmse =
        baselines.iter().flatten().copied().sum::<S>() / S::from_count(n_scored);

    let features: Vec<FeatureImportance<S>> = (0..train.p())
        .into_par_iter()
        .map(|j| {
            let mut samples = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let repeat_seed = derive_seed(derive_seed(seed, j as u64), r as u64);
                let mut total = S::zero();
                for (b, tree) in trees.iter().enumerate() {
                    let oob = &oob_sets[b];
                    let Some(base) = baselines[b] else { continue };
                    if !used[b].contains(&j) {
                        // Feature absent from this tree: permuting it cannot
                        // change a prediction.
                        continue;
                    }
                    let rows: Vec<usize> = oob.iter().map(|&i| i as usize).collect();
                    let mut values: Vec<usize> = rows.clone();
                    values.shuffle(&mut stream(repeat_seed, b as u64));
                    let obs: Vec<S> = rows.iter().map(|&i| train.response()[i]).collect();
                    let mut view = train.select_rows(&rows);
                    let permuted = permute_within(train.column(j), &rows, &values);
                    view.set_column(j, permuted);
                    let preds = tree.predict_dataset(&view).expect("schema already checked");
                    total = total + (rmse_of(&preds, &obs) - base);
                }
                samples.push(total / S::from_count(trees.len()));
            }
            let mean = samples.iter().copied().sum::<S>() / S::from_count(samples.len());
            FeatureImportance {
                feature: train.schema().feature(j).name.clone(),
                mean,
                samples,
            }
        })
        .collect();

    Ok(ImportanceReport {
        features,
        baseline_rmse,
        repeats,
        seed,
        slice: "oob".to_string(),
    })
}

/// Column restricted to `rows`, with values drawn from the `sources` rows of
/// the original column (a within-subset permutation).
fn permute_within<S: Scalar>(column: &Column<S>, rows: &[usize], sources: &[usize]) -> Column<S> {
    debug_assert_eq!(rows.len(), sources.len());
    match column {
        Column::Numeric(v) => Column::Numeric(sources.iter().map(|&i| v[i]).collect()),
        Column::Categorical(v) => Column::Categorical(sources.iter().map(|&i| v[i]).collect()),
    }
}

// ── partial dependence ─────────────────────────────────────────────────────

/// One grid axis of a partial dependence surface.
#[derive(Clone, Debug, PartialEq)]
pub enum GridAxis<S> {
    Numeric { feature: String, values: Vec<S> },
    Categorical { feature: String, levels: Vec<String> },
}

impl<S: Scalar> GridAxis<S> {
    pub fn feature(&self) -> &str {
        match self {
            GridAxis::Numeric { feature, .. } => feature,
            GridAxis::Categorical { feature, .. } => feature,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GridAxis::Numeric { values, .. } => values.len(),
            GridAxis::Categorical { levels, .. } => levels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> String {
        match self {
            GridAxis::Numeric { values, .. } => format!("{}", values[index]),
            GridAxis::Categorical { levels, .. } => levels[index].clone(),
        }
    }
}

/// Averaged predictions over a one- or two-feature grid. Values are stored
/// row-major: the first axis is the slow index.
#[derive(Clone, Debug, PartialEq)]
pub struct PdpSurface<S> {
    pub axes: Vec<GridAxis<S>>,
    pub values: Vec<S>,
    pub n_background: usize,
}

impl<S: Scalar> PdpSurface<S> {
    pub fn value_1d(&self, i: usize) -> S {
        self.values[i]
    }

    pub fn value_2d(&self, i: usize, j: usize) -> S {
        self.values[i * self.axes[1].len() + j]
    }

    /// Tidy CSV with the feature names as headers:
    /// `<a>,pdp_value` or `<a>,<b>,pdp_value`.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        match self.axes.len() {
            1 => {
                out.push_str(&format!("{},pdp_value\n", self.axes[0].feature()));
                for i in 0..self.axes[0].len() {
                    out.push_str(&format!("{},{}\n", self.axes[0].label(i), self.values[i]));
                }
            }
            _ => {
                out.push_str(&format!(
                    "{},{},pdp_value\n",
                    self.axes[0].feature(),
                    self.axes[1].feature()
                ));
                for i in 0..self.axes[0].len() {
                    for j in 0..self.axes[1].len() {
                        out.push_str(&format!(
                            "{},{},{}\n",
                            self.axes[0].label(i),
                            self.axes[1].label(j),
                            self.value_2d(i, j)
                        ));
                    }
                }
            }
        }
        out.into_bytes()
    }
}

fn build_axis<S: Scalar>(data: &Dataset<S>, feature: usize, grid_size: usize) -> Result<GridAxis<S>> {
    let spec = data.schema().feature(feature);
    match data.column(feature) {
        Column::Categorical(_) => Ok(GridAxis::Categorical {
            feature: spec.name.clone(),
            levels: spec.levels.clone(),
        }),
        Column::Numeric(values) => {
            if grid_size < 2 {
                return Err(Error::invalid_config(
                    "grid_size",
                    "must be at least 2 for numeric features",
                ));
            }
            let mut lo = values[0];
            let mut hi = values[0];
            for &v in values {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let grid = if lo == hi {
                vec![lo]
            } else {
                let step = (hi - lo) / S::from_count(grid_size - 1);
                (0..grid_size)
                    .map(|i| {
                        if i == grid_size - 1 {
                            hi
                        } else {
                            lo + step * S::from_count(i)
                        }
                    })
                    .collect()
            };
            Ok(GridAxis::Numeric {
                feature: spec.name.clone(),
                values: grid,
            })
        }
    }
}

fn grid_column<S: Scalar>(axis: &GridAxis<S>, index: usize, n: usize) -> Column<S> {
    match axis {
        GridAxis::Numeric { values, .. } => Column::Numeric(vec![values[index]; n]),
        GridAxis::Categorical { .. } => Column::Categorical(vec![index as u32; n]),
    }
}

fn background_rows<S: Scalar>(data: &Dataset<S>) -> Dataset<S> {
    if data.n() <= PDP_MAX_BACKGROUND {
        return data.clone();
    }
    let mut rng = stream2(PDP_BACKGROUND_SEED, data.n() as u64, 0);
    let mut rows = rand::seq::index::sample(&mut rng, data.n(), PDP_MAX_BACKGROUND).into_vec();
    rows.sort_unstable();
    data.select_rows(&rows)
}

fn resolve_feature<S: Scalar>(data: &Dataset<S>, name: &str) -> Result<usize> {
    data.schema()
        .index_of(name)
        .ok_or_else(|| Error::UnknownFeature(name.to_string()))
}

/// One-way partial dependence of the model on `feature`.
pub fn partial_dependence<S: Scalar>(
    model: &dyn Model<S>,
    data: &Dataset<S>,
    feature: &str,
    grid_size: usize,
) -> Result<PdpSurface<S>> {
    let feature_idx = resolve_feature(data, feature)?;
    let axis = build_axis(data, feature_idx, grid_size)?;
    let background = background_rows(data);
    let n = background.n();

    let mut values = Vec::with_capacity(axis.len());
    let mut scratch = background.clone();
    for i in 0..axis.len() {
        scratch.set_column(feature_idx, grid_column(&axis, i, n));
        let preds = model.predict_dataset(&scratch)?;
        values.push(preds.iter().copied().sum::<S>() / S::from_count(n));
    }
    Ok(PdpSurface {
        axes: vec![axis],
        values,
        n_background: n,
    })
}

/// Two-way partial dependence over the cross product of both feature grids.
pub fn partial_dependence_2way<S: Scalar>(
    model: &dyn Model<S>,
    data: &Dataset<S>,
    feature_a: &str,
    feature_b: &str,
    grid_size: usize,
) -> Result<PdpSurface<S>> {
    if feature_a == feature_b {
        return Err(Error::DuplicateFeature(feature_a.to_string()));
    }
    let a_idx = resolve_feature(data, feature_a)?;
    let b_idx = resolve_feature(data, feature_b)?;
    let axis_a = build_axis(data, a_idx, grid_size)?;
    let axis_b = build_axis(data, b_idx, grid_size)?;
    let background = background_rows(data);
    let n = background.n();

    let mut values = Vec::with_capacity(axis_a.len() * axis_b.len());
    let mut scratch = background.clone();
    for i in 0..axis_a.len() {
        scratch.set_column(a_idx, grid_column(&axis_a, i, n));
        for j in 0..axis_b.len() {
            scratch.set_column(b_idx, grid_column(&axis_b, j, n));
            let preds = model.predict_dataset(&scratch)?;
            values.push(preds.iter().copied().sum::<S>() / S::from_count(n));
        }
    }
    Ok(PdpSurface {
        axes: vec![axis_a, axis_b],
        values,
        n_background: n,
    })
}
