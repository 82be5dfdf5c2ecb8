//! Declarative description of the predictor set.
//!
//! A [`Schema`] lists the predictors a dataset carries: name, kind, category
//! levels for categorical predictors and optional bounds/units for numeric
//! ones. Category levels are encoded as stable integer indices in declaration
//! order, so the same schema always produces the same encoding.
//!
//! Schema files are JSON documents of the form:
//!
//! ```json
//! {
//!   "features": [
//!     { "name": "usage", "kind": "categorical", "levels": ["private", "taxi"] },
//!     { "name": "premium", "kind": "continuous", "min": 0.0, "units": "USD" }
//!   ]
//! }
//! ```
//!
//! Keys: `name` (string), `kind` (`categorical` | `integer` | `continuous`),
//! `levels` (strings, categorical only), `min` / `max` (numbers, numeric
//! only), `units` (string, optional).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on category levels per feature, set by the `u64` bitset used in
/// category split rules.
pub const MAX_LEVELS: usize = 64;

/// Kind of a predictor column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical,
    Integer,
    Continuous,
}

/// One predictor: name, kind and domain metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Category labels in encoding order. Empty for numeric features.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl FeatureSpec {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            min: None,
            max: None,
            units: None,
        }
    }

    pub fn integer(name: &str, min: f64, max: f64, units: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Integer,
            levels: Vec::new(),
            min: Some(min),
            max: Some(max),
            units: Some(units.to_string()),
        }
    }

    pub fn continuous(name: &str, min: f64, units: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            levels: Vec::new(),
            min: Some(min),
            max: None,
            units: Some(units.to_string()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn is_numeric(&self) -> bool {
        !self.is_categorical()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Encoding index of a level label, if it exists.
    pub fn level_index(&self, label: &str) -> Option<u32> {
        self.levels.iter().position(|l| l == label).map(|i| i as u32)
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            FeatureKind::Categorical => {
                if self.levels.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` needs at least 2 levels",
                        self.name
                    )));
                }
                if self.levels.len() > MAX_LEVELS {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` has {} levels; at most {} are supported",
                        self.name,
                        self.levels.len(),
                        MAX_LEVELS
                    )));
                }
                for (i, a) in self.levels.iter().enumerate() {
                    if self.levels[..i].contains(a) {
                        return Err(Error::Schema(format!(
                            "categorical feature `{}` repeats level `{}`",
                            self.name, a
                        )));
                    }
                }
            }
            FeatureKind::Integer | FeatureKind::Continuous => {
                if !self.levels.is_empty() {
                    return Err(Error::Schema(format!(
                        "numeric feature `{}` must not declare levels",
                        self.name
                    )));
                }
                if let (Some(lo), Some(hi)) = (self.min, self.max) {
                    if lo > hi {
                        return Err(Error::Schema(format!(
                            "feature `{}` has min {} > max {}",
                            self.name, lo, hi
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered, validated collection of predictor specs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct Schema {
    features: Vec<FeatureSpec>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    features: Vec<FeatureSpec>,
}

impl TryFrom<SchemaFile> for Schema {
    type Error = Error;
    fn try_from(file: SchemaFile) -> Result<Self> {
        Schema::new(file.features)
    }
}

impl From<Schema> for SchemaFile {
    fn from(schema: Schema) -> Self {
        SchemaFile {
            features: schema.features,
        }
    }
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        for (i, f) in features.iter().enumerate() {
            f.validate()?;
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
        }
        Ok(Schema { features })
    }

    /// Number of predictors (`p`).
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureSpec {
        &self.features[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })?;
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// The ten-predictor vehicle insurance schema used by the synthetic
    /// generator and as the CLI default.
    pub fn vehicle_insurance() -> Schema {
        Schema::new(vec![
            FeatureSpec::categorical("sex", &["legal_entity", "male", "female"]),
            FeatureSpec::categorical("season", &["autumn", "winter", "spring", "summer"]),
            FeatureSpec::categorical("insurance_type", &["private", "commercial", "motor_trade"]),
            FeatureSpec::categorical(
                "type_vehicle",
                &["automobile", "station_wagon", "pickup", "truck", "bus", "tanker"],
            ),
            FeatureSpec::categorical(
                "usage",
                &[
                    "private",
                    "fare_paying_passengers",
                    "taxi",
                    "general_cartage",
                    "own_goods",
                    "special",
                ],
            ),
            FeatureSpec::categorical(
                "make",
                &["toyota", "isuzu", "nissan", "mitsubishi", "iveco", "ford", "hyundai", "mercedes"],
            ),
            FeatureSpec::categorical("coverage", &["comprehensive", "liability"]),
            FeatureSpec::integer("production_year", 1960.0, 2018.0, "year"),
            FeatureSpec::continuous("insured_value", 0.0, "USD"),
            FeatureSpec::continuous("premium", 0.0, "USD"),
        ])
        .expect("builtin schema is valid")
    }
}
