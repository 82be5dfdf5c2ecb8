//! Columnar claims dataset and ingestion.
//!
//! A [`Dataset`] holds one column per schema feature plus the response
//! (claim size) and three auxiliary columns: market value, loss and contract
//! year. Datasets are immutable after construction; every transformation
//! returns a new dataset, so shared read access from worker threads is safe.
//!
//! CSV layout: UTF-8, comma separated, RFC 4180 quoting, one header row.
//! Canonical column order is the schema features in declaration order
//! followed by `market_value`, `loss`, `contract_year`, `claim_size`.
//! Loading accepts any column order; writing always emits the canonical one.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::{FeatureKind, Schema};

pub const COL_MARKET_VALUE: &str = "market_value";
pub const COL_LOSS: &str = "loss";
pub const COL_CONTRACT_YEAR: &str = "contract_year";
pub const COL_CLAIM_SIZE: &str = "claim_size";

/// A single cell: either a numeric value or a category level index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value<S> {
    Number(S),
    Category(u32),
}

/// One feature column.
#[derive(Clone, Debug, PartialEq)]
pub enum Column<S> {
    Numeric(Vec<S>),
    Categorical(Vec<u32>),
}

impl<S: Scalar> Column<S> {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, row: usize) -> Value<S> {
        match self {
            Column::Numeric(v) => Value::Number(v[row]),
            Column::Categorical(v) => Value::Category(v[row]),
        }
    }

    fn gather(&self, rows: &[usize]) -> Column<S> {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Scale the response column is currently expressed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseScale {
    Raw,
    Log,
}

impl ResponseScale {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseScale::Raw => "raw",
            ResponseScale::Log => "log",
        }
    }
}

/// One row of a dataset, materialized for prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimRecord<S> {
    pub values: Vec<Value<S>>,
    pub market_value: S,
    pub loss: S,
    pub contract_year: i32,
    pub claim_size: S,
}

impl<S: Scalar> ClaimRecord<S> {
    pub fn value(&self, feature: usize) -> Value<S> {
        self.values[feature]
    }
}

/// Columnar table of claim records plus the response vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    schema: Schema,
    columns: Vec<Column<S>>,
    response: Vec<S>,
    market_value: Vec<S>,
    loss: Vec<S>,
    contract_year: Vec<i32>,
    response_scale: ResponseScale,
}

impl<S: Scalar> Dataset<S> {
    /// Assemble a dataset, checking column lengths, kinds and level indices.
    pub fn new(
        schema: Schema,
        columns: Vec<Column<S>>,
        response: Vec<S>,
        market_value: Vec<S>,
        loss: Vec<S>,
        contract_year: Vec<i32>,
    ) -> Result<Self> {
        let n = response.len();
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} columns for {} schema features",
                columns.len(),
                schema.len()
            )));
        }
        for (j, col) in columns.iter().enumerate() {
            let spec = schema.feature(j);
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    left: col.len(),
                    right: n,
                });
            }
            match (col, spec.kind) {
                (Column::Categorical(values), FeatureKind::Categorical) => {
                    let k = spec.n_levels() as u32;
                    if let Some(&bad) = values.iter().find(|&&v| v >= k) {
                        return Err(Error::Schema(format!(
                            "level index {bad} out of range for `{}`",
                            spec.name
                        )));
                    }
                }
                (Column::Numeric(_), FeatureKind::Integer | FeatureKind::Continuous) => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "column kind does not match feature `{}`",
                        spec.name
                    )))
                }
            }
        }
        for len in [market_value.len(), loss.len(), contract_year.len()] {
            if len != n {
                return Err(Error::LengthMismatch { left: len, right: n });
            }
        }
        Ok(Dataset {
            schema,
            columns,
            response,
            market_value,
            loss,
            contract_year,
            response_scale: ResponseScale::Raw,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    /// Number of predictors.
    pub fn p(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn column(&self, feature: usize) -> &Column<S> {
        &self.columns[feature]
    }

    pub fn response(&self) -> &[S] {
        &self.response
    }

    pub fn response_scale(&self) -> ResponseScale {
        self.response_scale
    }

    pub fn market_value(&self) -> &[S] {
        &self.market_value
    }

    pub fn loss(&self) -> &[S] {
        &self.loss
    }

    pub fn contract_year(&self) -> &[i32] {
        &self.contract_year
    }

    pub fn value(&self, row: usize, feature: usize) -> Value<S> {
        self.columns[feature].value(row)
    }

    pub fn record(&self, row: usize) -> ClaimRecord<S> {
        ClaimRecord {
            values: (0..self.p()).map(|j| self.value(row, j)).collect(),
            market_value: self.market_value[row],
            loss: self.loss[row],
            contract_year: self.contract_year[row],
            claim_size: self.response[row],
        }
    }

    /// New dataset containing `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset<S> {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.gather(rows)).collect(),
            response: rows.iter().map(|&r| self.response[r]).collect(),
            market_value: rows.iter().map(|&r| self.market_value[r]).collect(),
            loss: rows.iter().map(|&r| self.loss[r]).collect(),
            contract_year: rows.iter().map(|&r| self.contract_year[r]).collect(),
            response_scale: self.response_scale,
        }
    }

    /// Replace one feature column. Lengths and kinds must already agree;
    /// used by permutation importance and partial dependence on owned copies.
    pub(crate) fn set_column(&mut self, feature: usize, column: Column<S>) {
        debug_assert_eq!(column.len(), self.n());
        self.columns[feature] = column;
    }

    /// Keep only rows with a strictly positive claim size. Row order is
    /// preserved; applying the filter twice is a no-op.
    pub fn filter_positive_claims(&self) -> Result<Dataset<S>> {
        let rows: Vec<usize> = (0..self.n())
            .filter(|&i| self.response[i] > S::zero())
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyResult);
        }
        Ok(self.select_rows(&rows))
    }

    /// Replace the response by its natural logarithm. Requires every
    /// response to be strictly positive; the scale change is recorded so
    /// predictions can be reported on both scales.
    pub fn log_transform_response(&self) -> Result<Dataset<S>> {
        if let Some(row) = (0..self.n()).find(|&i| self.response[i] <= S::zero()) {
            return Err(Error::NonPositiveResponse { row });
        }
        let mut out = self.clone();
        out.response = self.response.iter().map(|&y| y.ln()).collect();
        out.response_scale = ResponseScale::Log;
        Ok(out)
    }

    /// Partition by contract year: rows whose year is in `test_years` go to
    /// the test set, the rest to the training set.
    pub fn split_by_year(&self, test_years: &BTreeSet<i32>) -> Result<(Dataset<S>, Dataset<S>)> {
        if test_years.is_empty() {
            return Err(Error::invalid_config("test_years", "must be non-empty"));
        }
        let (mut train_rows, mut test_rows) = (Vec::new(), Vec::new());
        for i in 0..self.n() {
            if test_years.contains(&self.contract_year[i]) {
                test_rows.push(i);
            } else {
                train_rows.push(i);
            }
        }
        let years: Vec<i32> = test_years.iter().copied().collect();
        if train_rows.is_empty() {
            return Err(Error::EmptyPartition {
                side: "train",
                years,
            });
        }
        if test_rows.is_empty() {
            return Err(Error::EmptyPartition { side: "test", years });
        }
        Ok((self.select_rows(&train_rows), self.select_rows(&test_rows)))
    }

    // ── CSV ───────────────────────────────────────────────────────────────

    /// Load a dataset from CSV. Header names must cover the schema features
    /// and the four auxiliary columns, in any order. Categorical cells must
    /// match a declared level exactly; numeric cells must parse as finite
    /// numbers. Missing or malformed cells are rejected, not imputed.
    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset<S>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Dataset::from_csv_str(&text, schema, &path.display().to_string())
    }

    /// Parse CSV text. `origin` is used in error messages.
    pub fn from_csv_str(text: &str, schema: &Schema, origin: &str) -> Result<Dataset<S>> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers: Vec<String> = match reader.headers() {
            Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => {
                h.iter().map(|s| s.to_string()).collect()
            }
            _ => {
                return Err(Error::EmptyFile {
                    path: origin.to_string(),
                })
            }
        };

        let aux_names = [COL_MARKET_VALUE, COL_LOSS, COL_CONTRACT_YEAR, COL_CLAIM_SIZE];
        for name in &headers {
            let known = schema.index_of(name).is_some() || aux_names.contains(&name.as_str());
            if !known {
                return Err(Error::UnknownColumn {
                    path: origin.to_string(),
                    column: name.clone(),
                });
            }
        }
        let position = |name: &str| -> Result<usize> {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
                path: origin.to_string(),
                column: name.to_string(),
            })
        };
        let feature_pos: Vec<usize> = schema
            .features()
            .iter()
            .map(|f| position(&f.name))
            .collect::<Result<_>>()?;
        let aux_pos: Vec<usize> = aux_names.iter().map(|n| position(n)).collect::<Result<_>>()?;

        let mut columns: Vec<Column<S>> = schema
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Categorical => Column::Categorical(Vec::new()),
                _ => Column::Numeric(Vec::new()),
            })
            .collect();
        let mut response = Vec::new();
        let mut market_value = Vec::new();
        let mut loss = Vec::new();
        let mut contract_year = Vec::new();

        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|source| Error::Csv {
                path: origin.to_string(),
                source,
            })?;
            for (j, spec) in schema.features().iter().enumerate() {
                let raw = record.get(feature_pos[j]).unwrap_or("");
                match (&mut columns[j], spec.kind) {
                    (Column::Categorical(values), _) => {
                        let idx = spec.level_index(raw).ok_or_else(|| Error::UnknownCategoryLevel {
                            row,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                        })?;
                        values.push(idx);
                    }
                    (Column::Numeric(values), FeatureKind::Integer) => {
                        let v: i64 = raw.parse().map_err(|_| Error::UnparsableNumber {
                            row,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                        })?;
                        values.push(S::from_f64_lossy(v as f64));
                    }
                    (Column::Numeric(values), _) => {
                        values.push(parse_number(raw, row, &spec.name)?);
                    }
                }
            }
            market_value.push(parse_number(
                record.get(aux_pos[0]).unwrap_or(""),
                row,
                COL_MARKET_VALUE,
            )?);
            loss.push(parse_number(record.get(aux_pos[1]).unwrap_or(""), row, COL_LOSS)?);
            let year_raw = record.get(aux_pos[2]).unwrap_or("");
            contract_year.push(year_raw.parse().map_err(|_| Error::UnparsableNumber {
                row,
                column: COL_CONTRACT_YEAR.to_string(),
                value: year_raw.to_string(),
            })?);
            response.push(parse_number(
                record.get(aux_pos[3]).unwrap_or(""),
                row,
                COL_CLAIM_SIZE,
            )?);
        }

        if response.is_empty() {
            return Err(Error::EmptyFile {
                path: origin.to_string(),
            });
        }
        Dataset::new(schema.clone(), columns, response, market_value, loss, contract_year)
    }

    /// Serialize to canonical CSV bytes: schema columns in declaration order
    /// followed by the four auxiliary columns. Numbers are written in Rust's
    /// shortest round-trip form, so `load_csv ∘ write_csv` is lossless.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> =
            self.schema.features().iter().map(|f| f.name.clone()).collect();
        header.extend(
            [COL_MARKET_VALUE, COL_LOSS, COL_CONTRACT_YEAR, COL_CLAIM_SIZE]
                .iter()
                .map(|s| s.to_string()),
        );
        writer.write_record(&header).expect("write to Vec cannot fail");

        for row in 0..self.n() {
            let mut record: Vec<String> = Vec::with_capacity(self.p() + 4);
            for (j, spec) in self.schema.features().iter().enumerate() {
                let cell = match (&self.columns[j], spec.kind) {
                    (Column::Categorical(values), _) => spec.levels[values[row] as usize].clone(),
                    (Column::Numeric(values), FeatureKind::Integer) => {
                        format!("{}", values[row].to_f64_lossy().round() as i64)
                    }
                    (Column::Numeric(values), _) => format!("{}", values[row]),
                };
                record.push(cell);
            }
            record.push(format!("{}", self.market_value[row]));
            record.push(format!("{}", self.loss[row]));
            record.push(format!("{}", self.contract_year[row]));
            record.push(format!("{}", self.response[row]));
            writer.write_record(&record).expect("write to Vec cannot fail");
        }
        writer.into_inner().expect("write to Vec cannot fail")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_bytes()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn parse_number<S: Scalar>(raw: &str, row: usize, column: &str) -> Result<S> {
    let value: f64 = raw.parse().map_err(|_| Error::UnparsableNumber {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if !value.is_finite() {
        return Err(Error::UnparsableNumber {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        });
    }
    Ok(S::from_f64_lossy(value))
}

/// Claim paid for one accident: `(insured_value / market_value) × loss` plus
/// the optional liability and passenger-liability add-ons. When the loss is
/// flagged as a total loss and the combined loss exceeds the insured value,
/// the insurer pays exactly the insured value.
///
/// The add-on components default to zero in callers that model the bare
/// ratio×loss payout.
pub fn claims_size<S: Scalar>(
    insured_value: S,
    market_value: S,
    loss: S,
    liability_component: S,
    pll_component: S,
    total_loss: bool,
) -> Result<S> {
    if insured_value <= S::zero() || market_value <= S::zero() {
        return Err(Error::NonPositiveValuation);
    }
    let combined = loss + liability_component + pll_component;
    if total_loss && combined > insured_value {
        return Ok(insured_value);
    }
    Ok(insured_value / market_value * loss + liability_component + pll_component)
}
