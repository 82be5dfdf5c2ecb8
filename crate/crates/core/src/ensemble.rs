//! Tree ensembles: bagging, random forests and gradient boosting.
//!
//! All three share the CART learner. Bagging fits each tree on an
//! independent bootstrap sample; a random forest additionally draws a fresh
//! `mtry`-feature candidate set at every split; boosting fits Newton-mode
//! trees to the squared-loss gradients of the running prediction, with no
//! bootstrap resampling.
//!
//! Determinism: tree `b` draws from a stream seeded by `derive_seed(seed, b)`
//! (bootstrap first, then per-node feature draws), so models are identical
//! regardless of how many worker threads trained them. Predictions sum tree
//! outputs left to right in tree order.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClaimRecord, Dataset};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::{mean, Scalar};
use crate::schema::Schema;
use crate::tree::{fit_tree, fit_tree_on_rows, LeafMode, RegressionTree, TreeConfig, TreeTargets};

/// On-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Bagging,
    RandomForest,
    Boosting,
}

impl EnsembleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleKind::Bagging => "bagging",
            EnsembleKind::RandomForest => "random_forest",
            EnsembleKind::Boosting => "boosting",
        }
    }
}

/// Gradient boosting hyperparameters. The loss is fixed to squared error
/// `l(ŷ, y) = ½(ŷ − y)²`; trees are grown in Newton mode with the same `λ`
/// and `γ` that appear in the training objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct BoostConfig<S> {
    pub n_rounds: usize,
    /// Shrinkage η in (0, 1] applied to every tree's contribution.
    pub learning_rate: S,
    /// L2 penalty on leaf weights.
    pub lambda: S,
    /// Per-leaf penalty; a split must improve the objective by more than γ.
    pub gamma: S,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub min_split: usize,
    /// Candidate features per split; `None` = all (the usual boosting setup).
    pub mtry: Option<usize>,
}

impl<S: Scalar> Default for BoostConfig<S> {
    fn default() -> Self {
        BoostConfig {
            n_rounds: 300,
            learning_rate: S::from_f64_lossy(0.1),
            lambda: S::one(),
            gamma: S::zero(),
            max_depth: Some(8),
            min_leaf: 5,
            min_split: 10,
            mtry: None,
        }
    }
}

impl<S: Scalar> BoostConfig<S> {
    pub(crate) fn tree_config(&self) -> TreeConfig<S> {
        TreeConfig {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            min_split: self.min_split,
            mtry: self.mtry,
            leaf_mode: LeafMode::Newton { lambda: self.lambda },
            gamma: self.gamma,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::invalid_config("n_rounds", "must be at least 1"));
        }
        if self.learning_rate <= S::zero() || self.learning_rate > S::one() {
            return Err(Error::invalid_config("learning_rate", "must lie in (0, 1]"));
        }
        self.tree_config().validate(p)
    }
}

/// Snapshot of the configuration a model was fitted with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub enum ModelConfig<S: Scalar> {
    /// Bagging / random forest: `n_trees` bootstrap trees; `tree.mtry` is the
    /// per-split feature draw (`None` = all features, i.e. bagging).
    Resampled { n_trees: usize, tree: TreeConfig<S> },
    Boosted(BoostConfig<S>),
}

/// Per-round training state of a boosting fit: the unpenalized squared-error
/// sum, this round's complexity penalty `γT + ½λ‖w‖²`, and the cumulative
/// regularized objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoostRound<S> {
    pub round: usize,
    pub train_loss: S,
    pub penalty: S,
    pub objective: S,
}

/// A fitted ensemble. Immutable; prediction from many threads is safe.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel<S: Scalar> {
    kind: EnsembleKind,
    schema: Schema,
    config: ModelConfig<S>,
    seed: u64,
    base_score: S,
    learning_rate: S,
    trees: Vec<RegressionTree<S>>,
    /// Per-tree out-of-bag row indices (bagging/RF). Not serialized; rebuilt
    /// from the seed when a loaded model needs them.
    oob_indices: Vec<Vec<u32>>,
    /// Per-round objective trace (boosting only).
    training_log: Vec<BoostRound<S>>,
}

impl<S: Scalar> EnsembleModel<S> {
    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &ModelConfig<S> {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_score(&self) -> S {
        self.base_score
    }

    pub fn learning_rate(&self) -> S {
        self.learning_rate
    }

    pub fn trees(&self) -> &[RegressionTree<S>] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Combination weights `w_i`: `1/B` for bagging and random forests, the
    /// learning rate for boosting.
    pub fn weights(&self) -> Vec<S> {
        let w = match self.kind {
            EnsembleKind::Boosting => self.learning_rate,
            _ => S::one() / S::from_count(self.trees.len()),
        };
        vec![w; self.trees.len()]
    }

    pub fn training_log(&self) -> &[BoostRound<S>] {
        &self.training_log
    }

    /// Assemble a model from parts. Used by tests and tooling that need
    /// hand-built ensembles; `fit_*` are the normal constructors.
    pub fn from_parts(
        kind: EnsembleKind,
        schema: Schema,
        config: ModelConfig<S>,
        seed: u64,
        base_score: S,
        learning_rate: S,
        trees: Vec<RegressionTree<S>>,
        oob_indices: Vec<Vec<u32>>,
    ) -> Result<EnsembleModel<S>> {
        if trees.is_empty() {
            return Err(Error::invalid_config("trees", "ensemble needs at least one tree"));
        }
        for tree in &trees {
            tree.validate_schema(&schema)?;
        }
        Ok(EnsembleModel {
            kind,
            schema,
            config,
            seed,
            base_score,
            learning_rate,
            trees,
            oob_indices,
            training_log: Vec::new(),
        })
    }

    /// Predict one record: `(1/B)·Σ f̂ᵢ(x)` for bagging/RF,
    /// `base + η·Σ f̂ᵢ(x)` for boosting. Trees are summed left to right.
    pub fn predict_record(&self, record: &ClaimRecord<S>) -> Result<S> {
        let mut sum = S::zero();
        for tree in &self.trees {
            sum = sum + tree.predict_record(record)?;
        }
        Ok(self.combine(sum))
    }

    /// Predict every row of a dataset after a single schema check.
    pub fn predict_dataset(&self, data: &Dataset<S>) -> Result<Vec<S>> {
        self.check_schema(data)?;
        Ok((0..data.n()).map(|row| self.predict_row(data, row)).collect())
    }

    pub(crate) fn predict_row(&self, data: &Dataset<S>, row: usize) -> S {
        let mut sum = S::zero();
        for tree in &self.trees {
            sum = sum + tree.predict_row(data, row);
        }
        self.combine(sum)
    }

    fn combine(&self, tree_sum: S) -> S {
        match self.kind {
            EnsembleKind::Boosting => self.base_score + self.learning_rate * tree_sum,
            _ => tree_sum / S::from_count(self.trees.len()),
        }
    }

    fn check_schema(&self, data: &Dataset<S>) -> Result<()> {
        if data.schema() != &self.schema {
            return Err(Error::SchemaMismatch(
                "dataset schema differs from the model's training schema".into(),
            ));
        }
        Ok(())
    }

    /// Out-of-bag row sets per tree, rebuilding them from the seed when the
    /// model was loaded from disk. `n` must be the training row count.
    pub fn oob_sets(&self, n: usize) -> Vec<Vec<u32>> {
        if !self.oob_indices.is_empty() {
            return self.oob_indices.clone();
        }
        (0..self.trees.len())
            .map(|b| {
                let mut rng = stream(self.seed, b as u64);
                bootstrap_sample(n, &mut rng).1.iter().map(|&i| i as u32).collect()
            })
            .collect()
    }

    // ── persistence ───────────────────────────────────────────────────────

    /// Compact JSON bytes of the model envelope
    /// `{version, kind, config, seed, base_score, learning_rate, schema,
    /// trees}`. Field order is fixed, so equal models serialize to equal
    /// bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let wire = WireModel {
            version: MODEL_FORMAT_VERSION,
            kind: self.kind,
            config: self.config.clone(),
            seed: self.seed,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            schema: self.schema.clone(),
            trees: self.trees.clone(),
        };
        serde_json::to_vec(&wire).expect("model serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_bytes()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_json_bytes(bytes: &[u8], origin: &str) -> Result<EnsembleModel<S>> {
        let wire: WireModel<S> = serde_json::from_slice(bytes).map_err(|source| Error::Json {
            path: origin.to_string(),
            source,
        })?;
        if wire.version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: wire.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        EnsembleModel::from_parts(
            wire.kind,
            wire.schema,
            wire.config,
            wire.seed,
            wire.base_score,
            wire.learning_rate,
            wire.trees,
            Vec::new(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EnsembleModel<S>> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        EnsembleModel::from_json_bytes(&bytes, &path.display().to_string())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
struct WireModel<S: Scalar> {
    version: u32,
    kind: EnsembleKind,
    config: ModelConfig<S>,
    seed: u64,
    base_score: S,
    learning_rate: S,
    schema: Schema,
    trees: Vec<RegressionTree<S>>,
}

// ── sampling ───────────────────────────────────────────────────────────────

/// Draw `n` indices uniformly with replacement and report the left-out rows.
/// `in_bag` keeps draw order (a multiset of size `n`); `oob` is ascending.
pub fn bootstrap_sample(n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut in_bag = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        in_bag.push(i);
        seen[i] = true;
    }
    let oob = (0..n).filter(|&i| !seen[i]).collect();
    (in_bag, oob)
}

// ── fitting ────────────────────────────────────────────────────────────────

/// Bootstrap-aggregated trees: every split sees all features, prediction is
/// the plain average of the member trees.
pub fn fit_bagging<S: Scalar>(
    train: &Dataset<S>,
    n_trees: usize,
    tree_config: &TreeConfig<S>,
    seed: u64,
) -> Result<EnsembleModel<S>> {
    fit_resampled(train, n_trees, None, tree_config, seed)
}

/// Random forest: like bagging, but each split draws a fresh uniform set of
/// `mtry` candidate features. `mtry = p` degenerates to bagging exactly (the
/// returned model is identical to `fit_bagging` under the same seed,
/// including its serialized bytes).
pub fn fit_random_forest<S: Scalar>(
    train: &Dataset<S>,
    n_trees: usize,
    mtry: usize,
    tree_config: &TreeConfig<S>,
    seed: u64,
) -> Result<EnsembleModel<S>> {
    if mtry == 0 || mtry > train.p() {
        return Err(Error::InvalidMtry {
            mtry,
            p: train.p(),
        });
    }
    let mtry = if mtry == train.p() { None } else { Some(mtry) };
    fit_resampled(train, n_trees, mtry, tree_config, seed)
}

fn fit_resampled<S: Scalar>(
    train: &Dataset<S>,
    n_trees: usize,
    mtry: Option<usize>,
    tree_config: &TreeConfig<S>,
    seed: u64,
) -> Result<EnsembleModel<S>> {
    if train.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if n_trees == 0 {
        return Err(Error::invalid_config("n_trees", "must be at least 1"));
    }
    // Resampled ensembles always fit mean-mode trees on the raw response.
    let config = TreeConfig {
        mtry,
        leaf_mode: LeafMode::Mean,
        ..tree_config.clone()
    };
    config.validate(train.p())?;

    let n = train.n();
    let fits: Vec<(RegressionTree<S>, Vec<u32>)> = (0..n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let (in_bag, oob) = bootstrap_sample(n, &mut rng);
            let tree = fit_tree_on_rows(
                train,
                TreeTargets::Response(train.response()),
                &in_bag,
                &config,
                &mut rng,
            )
            .expect("non-empty bootstrap sample");
            (tree, oob.iter().map(|&i| i as u32).collect())
        })
        .collect();

    let (trees, oob_indices): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    Ok(EnsembleModel {
        kind: if mtry.is_none() {
            EnsembleKind::Bagging
        } else {
            EnsembleKind::RandomForest
        },
        schema: train.schema().clone(),
        config: ModelConfig::Resampled {
            n_trees,
            tree: config,
        },
        seed,
        base_score: S::zero(),
        learning_rate: S::one(),
        trees,
        oob_indices,
        training_log: Vec::new(),
    })
}

/// Gradient boosting with squared loss. The base score is the mean response;
/// each round fits a Newton-mode tree to the per-row gradients
/// `g_i = ŷ_i − y_i` (hessian 1) and advances `ŷ ← ŷ + η·tree(x)`. The
/// per-round regularized objective is recorded in the training log.
pub fn fit_gradient_boosting<S: Scalar>(
    train: &Dataset<S>,
    config: &BoostConfig<S>,
    seed: u64,
) -> Result<EnsembleModel<S>> {
    if train.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    config.validate(train.p())?;

    let y = train.response();
    let n = train.n();
    let base_score = mean(y);
    let tree_config = config.tree_config();
    let half = S::from_f64_lossy(0.5);

    let mut preds = vec![base_score; n];
    let mut grad = vec![S::zero(); n];
    let hess = vec![S::one(); n];
    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut training_log = Vec::with_capacity(config.n_rounds);
    let mut cumulative_penalty = S::zero();

    for round in 0..config.n_rounds {
        for i in 0..n {
            grad[i] = preds[i] - y[i];
        }
        let mut rng = stream(seed, round as u64);
        let tree = fit_tree(
            train,
            TreeTargets::GradHess {
                grad: &grad,
                hess: &hess,
            },
            &tree_config,
            &mut rng,
        )?;
        for (i, pred) in preds.iter_mut().enumerate() {
            *pred = *pred + config.learning_rate * tree.predict_row(train, i);
        }

        let train_loss = preds
            .iter()
            .zip(y)
            .map(|(&p, &yi)| half * (p - yi) * (p - yi))
            .sum::<S>();
        let leaves = tree.leaves();
        let weight_norm = leaves.iter().map(|&(w, _)| w * w).sum::<S>();
        let penalty = config.gamma * S::from_count(leaves.len()) + half * config.lambda * weight_norm;
        cumulative_penalty = cumulative_penalty + penalty;
        let objective = train_loss + cumulative_penalty;
        if !objective.is_finite() {
            return Err(Error::NonFiniteObjective { round });
        }
        training_log.push(BoostRound {
            round,
            train_loss,
            penalty,
            objective,
        });
        trees.push(tree);
    }

    Ok(EnsembleModel {
        kind: EnsembleKind::Boosting,
        schema: train.schema().clone(),
        config: ModelConfig::Boosted(config.clone()),
        seed,
        base_score,
        learning_rate: config.learning_rate,
        trees,
        oob_indices: Vec::new(),
        training_log,
    })
}

/// Out-of-bag RMSE: each row is predicted by averaging the trees whose
/// bootstrap sample excluded it; rows that every tree saw are skipped.
/// `train` must be the dataset the model was fitted on.
pub fn oob_error<S: Scalar>(model: &EnsembleModel<S>, train: &Dataset<S>) -> Result<S> {
    if model.kind == EnsembleKind::Boosting {
        return Err(Error::NotApplicable { kind: "boosting" });
    }
    model.check_schema(train)?;
    let n = train.n();
    let oob_sets = model.oob_sets(n);

    let mut sums = vec![S::zero(); n];
    let mut counts = vec![0usize; n];
    for (tree, oob) in model.trees.iter().zip(&oob_sets) {
        for &row in oob {
            let row = row as usize;
            sums[row] = sums[row] + tree.predict_row(train, row);
            counts[row] += 1;
        }
    }

    let mut sq_sum = S::zero();
    let mut n_eval = 0usize;
    for row in 0..n {
        if counts[row] == 0 {
            continue;
        }
        let pred = sums[row] / S::from_count(counts[row]);
        let diff = pred - train.response()[row];
        sq_sum = sq_sum + diff * diff;
        n_eval += 1;
    }
    if n_eval == 0 {
        return Err(Error::NoOobRows);
    }
    Ok((sq_sum / S::from_count(n_eval)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::schema::FeatureSpec;

    fn step_dataset() -> Dataset<f64> {
        let schema = Schema::new(vec![FeatureSpec::continuous("x", 0.0, "")]).unwrap();
        Dataset::new(
            schema,
            vec![Column::Numeric(vec![1.0, 2.0, 3.0, 4.0])],
            vec![0.0, 0.0, 10.0, 10.0],
            vec![1.0; 4],
            vec![0.0; 4],
            vec![2015; 4],
        )
        .unwrap()
    }

    fn wavy_dataset(n: usize) -> Dataset<f64> {
        let schema = Schema::new(vec![
            FeatureSpec::continuous("x", 0.0, ""),
            FeatureSpec::categorical("c", &["a", "b", "x"]),
        ])
        .unwrap();
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.713).sin() * 5.0).collect();
        let cs: Vec<u32> = (0..n).map(|i| (i % 3) as u32).collect();
        let ys: Vec<f64> = xs
            .iter()
            .zip(&cs)
            .map(|(&x, &c)| x * 0.8 + c as f64 * 1.5 + (x * 2.0).cos())
            .collect();
        Dataset::new(
            schema,
            vec![Column::Numeric(xs), Column::Categorical(cs)],
            ys,
            vec![1.0; n],
            vec![0.0; n],
            vec![2015; n],
        )
        .unwrap()
    }

    fn loose_tree_config() -> TreeConfig<f64> {
        TreeConfig {
            min_leaf: 1,
            min_split: 2,
            ..TreeConfig::default()
        }
    }

    #[test]
    fn bootstrap_of_one_row_has_no_oob() {
        let (in_bag, oob) = bootstrap_sample(1, &mut stream(5, 0));
        assert_eq!(in_bag, vec![0]);
        assert!(oob.is_empty());
    }

    #[test]
    fn bootstrap_is_deterministic_per_stream() {
        let a = bootstrap_sample(50, &mut stream(9, 3));
        let b = bootstrap_sample(50, &mut stream(9, 3));
        assert_eq!(a, b);
        let c = bootstrap_sample(50, &mut stream(9, 4));
        assert_ne!(a, c);
    }

    #[test]
    fn oob_fraction_is_near_one_over_e() {
        let n = 400;
        let draws = 400;
        let mut total = 0.0;
        for d in 0..draws {
            let (_, oob) = bootstrap_sample(n, &mut stream(11, d));
            total += oob.len() as f64 / n as f64;
        }
        let mean_fraction = total / draws as f64;
        assert!(
            (mean_fraction - (-1.0f64).exp()).abs() < 0.01,
            "mean oob fraction {mean_fraction}"
        );
    }

    #[test]
    fn single_tree_bagging_equals_its_tree() {
        let data = wavy_dataset(60);
        let model = fit_bagging(&data, 1, &loose_tree_config(), 3).unwrap();
        let tree_preds = model.trees()[0].predict_dataset(&data).unwrap();
        let ens_preds = model.predict_dataset(&data).unwrap();
        assert_eq!(tree_preds, ens_preds);
    }

    #[test]
    fn stump_forest_predicts_mean_of_leaf_values() {
        // min_split larger than n forces every tree to a single leaf whose
        // value is its bootstrap-sample mean.
        let data = step_dataset();
        let config = TreeConfig {
            min_split: 100,
            ..loose_tree_config()
        };
        let model = fit_bagging(&data, 7, &config, 1).unwrap();
        let leaf_values: Vec<f64> = model.trees().iter().map(|t| t.leaves()[0].0).collect();
        let expected = leaf_values.iter().sum::<f64>() / leaf_values.len() as f64;
        let pred = model.predict_record(&data.record(0)).unwrap();
        assert!((pred - expected).abs() < 1e-12);
    }

    #[test]
    fn hand_built_three_stump_ensemble_averages() {
        use crate::tree::RegressionTree;
        let data = step_dataset();
        // Stumps fitted on the full data twice, plus a constant-5 tree, give
        // outputs (0,10), (0,10), (5,5); prediction at x=3 is 25/3.
        let stump = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_tree_config(),
            &mut stream(0, 0),
        )
        .unwrap();
        let trees = vec![stump.clone(), stump, RegressionTree::leaf(5.0, 4)];
        let model = EnsembleModel::from_parts(
            EnsembleKind::Bagging,
            data.schema().clone(),
            ModelConfig::Resampled {
                n_trees: 3,
                tree: loose_tree_config(),
            },
            0,
            0.0,
            1.0,
            trees,
            Vec::new(),
        )
        .unwrap();
        let pred = model.predict_record(&data.record(2)).unwrap();
        assert!((pred - 25.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rf_with_full_mtry_matches_bagging_bytes() {
        let data = wavy_dataset(80);
        let bagging = fit_bagging(&data, 12, &loose_tree_config(), 21).unwrap();
        let forest = fit_random_forest(&data, 12, data.p(), &loose_tree_config(), 21).unwrap();
        assert_eq!(forest.kind(), EnsembleKind::Bagging);
        assert_eq!(bagging.to_json_bytes(), forest.to_json_bytes());
    }

    #[test]
    fn rf_with_small_mtry_differs_from_bagging() {
        let data = wavy_dataset(80);
        let bagging = fit_bagging(&data, 8, &loose_tree_config(), 21).unwrap();
        let forest = fit_random_forest(&data, 8, 1, &loose_tree_config(), 21).unwrap();
        assert_eq!(forest.kind(), EnsembleKind::RandomForest);
        assert_ne!(bagging.to_json_bytes(), forest.to_json_bytes());
    }

    #[test]
    fn invalid_mtry_is_rejected() {
        let data = wavy_dataset(30);
        assert!(matches!(
            fit_random_forest(&data, 3, 0, &loose_tree_config(), 0),
            Err(Error::InvalidMtry { mtry: 0, .. })
        ));
        assert!(matches!(
            fit_random_forest(&data, 3, 11, &loose_tree_config(), 0),
            Err(Error::InvalidMtry { mtry: 11, .. })
        ));
    }

    #[test]
    fn boosting_single_full_round_interpolates() {
        let data = wavy_dataset(40);
        let config = BoostConfig {
            n_rounds: 1,
            learning_rate: 1.0,
            lambda: 0.0,
            gamma: 0.0,
            max_depth: None,
            min_leaf: 1,
            min_split: 2,
            mtry: None,
        };
        let model = fit_gradient_boosting(&data, &config, 0).unwrap();
        let preds = model.predict_dataset(&data).unwrap();
        for (p, y) in preds.iter().zip(data.response()) {
            assert!((p - y).abs() < 1e-9, "{p} vs {y}");
        }
    }

    #[test]
    fn boosting_stumpless_round_returns_base_score() {
        let data = wavy_dataset(40);
        let config = BoostConfig {
            n_rounds: 1,
            min_split: 1000,
            lambda: 0.0,
            ..BoostConfig::default()
        };
        let model = fit_gradient_boosting(&data, &config, 0).unwrap();
        let ybar = data.response().iter().sum::<f64>() / data.n() as f64;
        assert!((model.base_score() - ybar).abs() < 1e-12);
        // The single tree is an all-rows leaf with weight -G/(H+λ); at λ=0
        // the gradient sum is zero, so the prediction stays at ȳ.
        let pred = model.predict_record(&data.record(7)).unwrap();
        assert!((pred - ybar).abs() < 1e-12, "{pred} vs {ybar}");
    }

    #[test]
    fn boosting_training_loss_is_non_increasing() {
        let data = wavy_dataset(120);
        let config = BoostConfig {
            n_rounds: 40,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            ..BoostConfig::default()
        };
        let model = fit_gradient_boosting(&data, &config, 5).unwrap();
        let log = model.training_log();
        assert_eq!(log.len(), 40);
        for pair in log.windows(2) {
            assert!(
                pair[1].train_loss <= pair[0].train_loss + 1e-9,
                "loss rose: {} -> {}",
                pair[0].train_loss,
                pair[1].train_loss
            );
        }
    }

    #[test]
    fn boosting_rejects_bad_config() {
        let data = wavy_dataset(20);
        let bad = BoostConfig {
            n_rounds: 0,
            ..BoostConfig::default()
        };
        assert!(matches!(
            fit_gradient_boosting(&data, &bad, 0),
            Err(Error::InvalidConfig { field: "n_rounds", .. })
        ));
        let bad = BoostConfig {
            learning_rate: 1.5,
            ..BoostConfig::default()
        };
        assert!(matches!(
            fit_gradient_boosting(&data, &bad, 0),
            Err(Error::InvalidConfig { field: "learning_rate", .. })
        ));
    }

    #[test]
    fn oob_error_not_applicable_to_boosting() {
        let data = wavy_dataset(30);
        let model = fit_gradient_boosting(&data, &BoostConfig::default(), 0).unwrap();
        assert!(matches!(
            oob_error(&model, &data),
            Err(Error::NotApplicable { kind: "boosting" })
        ));
    }

    #[test]
    fn oob_error_single_tree_matches_direct_computation() {
        let data = wavy_dataset(60);
        let model = fit_bagging(&data, 1, &loose_tree_config(), 13).unwrap();
        let oob = &model.oob_sets(data.n())[0];
        assert!(!oob.is_empty());
        let tree = &model.trees()[0];
        let mut sq = 0.0;
        for &row in oob {
            let row = row as usize;
            let pred = tree.predict_dataset(&data).unwrap()[row];
            sq += (pred - data.response()[row]).powi(2);
        }
        let expected = (sq / oob.len() as f64).sqrt();
        let got = oob_error(&model, &data).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip_preserves_predictions_and_oob() {
        let data = wavy_dataset(80);
        let model = fit_random_forest(&data, 10, 1, &loose_tree_config(), 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded: EnsembleModel<f64> = EnsembleModel::load(&path).unwrap();
        assert_eq!(loaded.to_json_bytes(), model.to_json_bytes());
        assert_eq!(
            loaded.predict_dataset(&data).unwrap(),
            model.predict_dataset(&data).unwrap()
        );
        // OOB sets rebuilt from the seed match the retained ones.
        assert_eq!(
            oob_error(&loaded, &data).unwrap(),
            oob_error(&model, &data).unwrap()
        );
    }

    #[test]
    fn refit_with_same_seed_is_byte_identical() {
        let data = wavy_dataset(70);
        let a = fit_bagging(&data, 9, &loose_tree_config(), 42).unwrap();
        let b = fit_bagging(&data, 9, &loose_tree_config(), 42).unwrap();
        assert_eq!(a.to_json_bytes(), b.to_json_bytes());
        let c = fit_bagging(&data, 9, &loose_tree_config(), 43).unwrap();
        assert_ne!(a.to_json_bytes(), c.to_json_bytes());
    }

    #[test]
    fn schema_mismatch_on_prediction() {
        let data = wavy_dataset(30);
        let model = fit_bagging(&data, 2, &loose_tree_config(), 0).unwrap();
        let other_schema = Schema::new(vec![FeatureSpec::continuous("z", 0.0, "")]).unwrap();
        let other = Dataset::new(
            other_schema,
            vec![Column::Numeric(vec![1.0])],
            vec![1.0],
            vec![1.0],
            vec![0.0],
            vec![2015],
        )
        .unwrap();
        assert!(matches!(
            model.predict_dataset(&other),
            Err(Error::SchemaMismatch(_))
        ));
    }
}
