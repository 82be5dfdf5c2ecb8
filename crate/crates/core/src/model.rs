//! Common prediction interface and model persistence.
//!
//! [`Model`] is the surface the interpretation and evaluation code works
//! against: anything that can predict a whole dataset. Ensembles, single
//! CART trees and the OLS baseline all implement it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{EnsembleModel, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::Schema;
use crate::tree::{RegressionTree, TreeConfig};

/// A fitted model that predicts a full dataset.
pub trait Model<S: Scalar>: Send + Sync {
    fn predict_dataset(&self, data: &Dataset<S>) -> Result<Vec<S>>;
}

impl<S: Scalar> Model<S> for EnsembleModel<S> {
    fn predict_dataset(&self, data: &Dataset<S>) -> Result<Vec<S>> {
        EnsembleModel::predict_dataset(self, data)
    }
}

/// A single CART tree bound to its training schema, persistable with the
/// same envelope conventions as ensembles (`kind = "tree"`).
#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel<S: Scalar> {
    schema: Schema,
    config: TreeConfig<S>,
    seed: u64,
    tree: RegressionTree<S>,
}

impl<S: Scalar> TreeModel<S> {
    pub fn new(
        schema: Schema,
        config: TreeConfig<S>,
        seed: u64,
        tree: RegressionTree<S>,
    ) -> Result<TreeModel<S>> {
        tree.validate_schema(&schema)?;
        Ok(TreeModel {
            schema,
            config,
            seed,
            tree,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn tree(&self) -> &RegressionTree<S> {
        &self.tree
    }

    pub fn config(&self) -> &TreeConfig<S> {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let wire = WireTreeModel {
            version: MODEL_FORMAT_VERSION,
            kind: "tree".to_string(),
            config: self.config.clone(),
            seed: self.seed,
            schema: self.schema.clone(),
            tree: self.tree.clone(),
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

    pub fn from_json_bytes(bytes: &[u8], origin: &str) -> Result<TreeModel<S>> {
        let wire: WireTreeModel<S> = serde_json::from_slice(bytes).map_err(|source| Error::Json {
            path: origin.to_string(),
            source,
        })?;
        if wire.version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: wire.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if wire.kind != "tree" {
            return Err(Error::Schema(format!(
                "expected a tree model file, found kind `{}`",
                wire.kind
            )));
        }
        TreeModel::new(wire.schema, wire.config, wire.seed, wire.tree)
    }
}

impl<S: Scalar> Model<S> for TreeModel<S> {
    fn predict_dataset(&self, data: &Dataset<S>) -> Result<Vec<S>> {
        if data.schema() != &self.schema {
            return Err(Error::SchemaMismatch(
                "dataset schema differs from the model's training schema".into(),
            ));
        }
        self.tree.predict_dataset(data)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
struct WireTreeModel<S: Scalar> {
    version: u32,
    kind: String,
    config: TreeConfig<S>,
    seed: u64,
    schema: Schema,
    tree: RegressionTree<S>,
}

/// Any model file this crate writes: a single tree or an ensemble.
pub enum SavedModel<S: Scalar> {
    Tree(TreeModel<S>),
    Ensemble(EnsembleModel<S>),
}

impl<S: Scalar> SavedModel<S> {
    pub fn load(path: impl AsRef<Path>) -> Result<SavedModel<S>> {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: origin.clone(),
            source,
        })?;
        SavedModel::from_json_bytes(&bytes, &origin)
    }

    pub fn from_json_bytes(bytes: &[u8], origin: &str) -> Result<SavedModel<S>> {
        #[derive(Deserialize)]
        struct Peek {
            kind: String,
        }
        let peek: Peek = serde_json::from_slice(bytes).map_err(|source| Error::Json {
            path: origin.to_string(),
            source,
        })?;
        match peek.kind.as_str() {
            "tree" => Ok(SavedModel::Tree(TreeModel::from_json_bytes(bytes, origin)?)),
            _ => Ok(SavedModel::Ensemble(EnsembleModel::from_json_bytes(
                bytes, origin,
            )?)),
        }
    }

    pub fn schema(&self) -> &Schema {
        match self {
            SavedModel::Tree(m) => m.schema(),
            SavedModel::Ensemble(m) => m.schema(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SavedModel::Tree(_) => "tree",
            SavedModel::Ensemble(m) => m.kind().as_str(),
        }
    }

    pub fn as_model(&self) -> &dyn Model<S> {
        match self {
            SavedModel::Tree(m) => m,
            SavedModel::Ensemble(m) => m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::rng::stream;
    use crate::schema::FeatureSpec;
    use crate::tree::{fit_tree, TreeTargets};

    fn toy() -> (Dataset<f64>, TreeConfig<f64>) {
        let schema = Schema::new(vec![FeatureSpec::continuous("x", 0.0, "")]).unwrap();
        let data = Dataset::new(
            schema,
            vec![Column::Numeric(vec![1.0, 2.0, 3.0, 4.0])],
            vec![0.0, 0.0, 10.0, 10.0],
            vec![1.0; 4],
            vec![0.0; 4],
            vec![2015; 4],
        )
        .unwrap();
        let config = TreeConfig {
            min_leaf: 1,
            min_split: 2,
            ..TreeConfig::default()
        };
        (data, config)
    }

    #[test]
    fn tree_model_round_trips_and_dispatches() {
        let (data, config) = toy();
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &config,
            &mut stream(0, 0),
        )
        .unwrap();
        let model = TreeModel::new(data.schema().clone(), config, 3, tree).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.json");
        model.save(&path).unwrap();

        let loaded: SavedModel<f64> = SavedModel::load(&path).unwrap();
        assert_eq!(loaded.kind_name(), "tree");
        assert_eq!(
            loaded.as_model().predict_dataset(&data).unwrap(),
            model.predict_dataset(&data).unwrap()
        );
    }

    #[test]
    fn ensemble_files_dispatch_to_ensemble() {
        let (data, config) = toy();
        let model = crate::ensemble::fit_bagging(&data, 3, &config, 4).unwrap();
        let bytes = model.to_json_bytes();
        let loaded: SavedModel<f64> = SavedModel::from_json_bytes(&bytes, "mem").unwrap();
        assert_eq!(loaded.kind_name(), "bagging");
    }
}
