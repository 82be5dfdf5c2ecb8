//! Tree-based ensemble regression engine for vehicle insurance claims
//! severity: data model and synthesis, CART trees, bagging, random forests,
//! gradient boosting, permutation variable importance, partial dependence
//! and an OLS baseline.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`, which is what the CLI and the
//! on-disk formats use. The generic types live in their modules, e.g.
//! [`data::Dataset`] or [`tree::RegressionTree`].

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod schema;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use schema::{FeatureKind, FeatureSpec, Schema};

// Double-precision aliases for the common configuration.
pub type Dataset = data::Dataset<f64>;
pub type ClaimRecord = data::ClaimRecord<f64>;
pub type Column = data::Column<f64>;
pub type Value = data::Value<f64>;
pub type RegressionTree = tree::RegressionTree<f64>;
pub type TreeConfig = tree::TreeConfig<f64>;
pub type SplitRule = tree::SplitRule<f64>;
pub type SplitCandidate = tree::SplitCandidate<f64>;
pub type EnsembleModel = ensemble::EnsembleModel<f64>;
pub type BoostConfig = ensemble::BoostConfig<f64>;
pub type TreeModel = model::TreeModel<f64>;
pub type SavedModel = model::SavedModel<f64>;
pub type LinearModel = eval::LinearModel<f64>;
pub type Metrics = eval::Metrics<f64>;
pub type ComparisonReport = eval::ComparisonReport<f64>;
pub type EdaSummary = eval::EdaSummary<f64>;
pub type ImportanceReport = interpret::ImportanceReport<f64>;
pub type PdpSurface = interpret::PdpSurface<f64>;
