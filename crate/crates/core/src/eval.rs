//! Metrics, the OLS baseline, model comparison and summary statistics.
//!
//! The headline metric is RMSE (reported alongside MSE). The comparison
//! report evaluates every model on the train and test slices on both the
//! fitted scale and its counterpart: log-scale fits are exponentiated to get
//! raw-scale metrics (no bias correction — a deliberate, documented
//! simplification), raw-scale fits get log metrics only when every value is
//! positive.

use serde::Serialize;

use crate::data::{Column, Dataset, ResponseScale, Value};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::schema::{FeatureKind, Schema};

// ── metrics ────────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics<S> {
    pub mse: S,
    pub rmse: S,
    pub n_eval: usize,
    pub scale: ResponseScale,
}

/// Mean squared error `(1/n')·Σ(f̂(xᵢ) − yᵢ)²` with its square root. The
/// scale label defaults to raw; use [`mse_on_scale`] when recording
/// log-scale values.
pub fn mse<S: Scalar>(predicted: &[S], observed: &[S]) -> Result<Metrics<S>> {
    mse_on_scale(predicted, observed, ResponseScale::Raw)
}

pub fn mse_on_scale<S: Scalar>(
    predicted: &[S],
    observed: &[S],
    scale: ResponseScale,
) -> Result<Metrics<S>> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: observed.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = S::from_count(predicted.len());
    let sq = predicted
        .iter()
        .zip(observed)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum::<S>();
    let mse = sq / n;
    Ok(Metrics {
        mse,
        rmse: mse.sqrt(),
        n_eval: predicted.len(),
        scale,
    })
}

// ── ordinary least squares ─────────────────────────────────────────────────

/// One column of the OLS design matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignColumn {
    Intercept,
    Numeric { feature: usize },
    /// Indicator of one categorical level; the first schema level of each
    /// feature is the dropped reference.
    Level { feature: usize, level: u32 },
}

impl DesignColumn {
    pub fn name(&self, schema: &Schema) -> String {
        match self {
            DesignColumn::Intercept => "intercept".to_string(),
            DesignColumn::Numeric { feature } => schema.feature(*feature).name.clone(),
            DesignColumn::Level { feature, level } => {
                let spec = schema.feature(*feature);
                format!("{}={}", spec.name, spec.levels[*level as usize])
            }
        }
    }
}

/// Linear regression on the one-hot-encoded design (intercept, numeric
/// features as-is, categorical features with the first level dropped).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel<S> {
    schema: Schema,
    columns: Vec<DesignColumn>,
    coefficients: Vec<S>,
}

impl<S: Scalar> LinearModel<S> {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn intercept(&self) -> S {
        self.coefficients[0]
    }

    /// `(column, coefficient)` pairs, intercept first.
    pub fn coefficients(&self) -> impl Iterator<Item = (&DesignColumn, S)> {
        self.columns.iter().zip(self.coefficients.iter().copied())
    }

    pub fn coefficient_for(&self, name: &str) -> Option<S> {
        self.columns
            .iter()
            .position(|c| c.name(&self.schema) == name)
            .map(|i| self.coefficients[i])
    }

    fn design_value(&self, data: &Dataset<S>, row: usize, column: &DesignColumn) -> S {
        match column {
            DesignColumn::Intercept => S::one(),
            DesignColumn::Numeric { feature } => match data.value(row, *feature) {
                Value::Number(x) => x,
                Value::Category(_) => unreachable!("validated schema"),
            },
            DesignColumn::Level { feature, level } => match data.value(row, *feature) {
                Value::Category(c) if c == *level => S::one(),
                Value::Category(_) => S::zero(),
                Value::Number(_) => unreachable!("validated schema"),
            },
        }
    }
}

impl<S: Scalar> Model<S> for LinearModel<S> {
    fn predict_dataset(&self, data: &Dataset<S>) -> Result<Vec<S>> {
        if data.schema() != &self.schema {
            return Err(Error::SchemaMismatch(
                "dataset schema differs from the model's training schema".into(),
            ));
        }
        Ok((0..data.n())
            .map(|row| {
                self.columns
                    .iter()
                    .zip(&self.coefficients)
                    .map(|(c, &b)| self.design_value(data, row, c) * b)
                    .sum()
            })
            .collect())
    }
}

fn design_layout(schema: &Schema) -> Vec<DesignColumn> {
    let mut columns = vec![DesignColumn::Intercept];
    for (feature, spec) in schema.features().iter().enumerate() {
        match spec.kind {
            FeatureKind::Integer | FeatureKind::Continuous => {
                columns.push(DesignColumn::Numeric { feature });
            }
            FeatureKind::Categorical => {
                for level in 1..spec.n_levels() as u32 {
                    columns.push(DesignColumn::Level { feature, level });
                }
            }
        }
    }
    columns
}

/// Fit OLS by Householder QR. Collinear (or empty) design columns make the
/// factorization rank deficient and are reported by name.
pub fn fit_ols<S: Scalar>(train: &Dataset<S>) -> Result<LinearModel<S>> {
    if train.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let layout = design_layout(train.schema());
    let n = train.n();
    let m = layout.len();
    if n < m {
        return Err(Error::RankDeficient {
            columns: layout.iter().map(|c| c.name(train.schema())).collect(),
        });
    }

    // Column-major design matrix.
    let mut cols: Vec<Vec<S>> = layout
        .iter()
        .map(|column| {
            (0..n)
                .map(|row| match column {
                    DesignColumn::Intercept => S::one(),
                    DesignColumn::Numeric { feature } => match train.column(*feature) {
                        Column::Numeric(values) => values[row],
                        Column::Categorical(_) => unreachable!("layout follows schema"),
                    },
                    DesignColumn::Level { feature, level } => match train.column(*feature) {
                        Column::Categorical(values) => {
                            if values[row] == *level {
                                S::one()
                            } else {
                                S::zero()
                            }
                        }
                        Column::Numeric(_) => unreachable!("layout follows schema"),
                    },
                })
                .collect()
        })
        .collect();
    let mut rhs: Vec<S> = train.response().to_vec();

    // Householder QR, reflecting the remaining columns and the RHS in place.
    let mut diag = vec![S::zero(); m];
    for k in 0..m {
        let norm = cols[k][k..n]
            .iter()
            .map(|&v| v * v)
            .sum::<S>()
            .sqrt();
        if norm == S::zero() {
            diag[k] = S::zero();
            continue;
        }
        let alpha = if cols[k][k] > S::zero() { -norm } else { norm };
        let mut v: Vec<S> = cols[k][k..n].to_vec();
        v[0] = v[0] - alpha;
        let vtv = v.iter().map(|&x| x * x).sum::<S>();
        if vtv == S::zero() {
            diag[k] = alpha;
            cols[k][k] = alpha;
            continue;
        }
        let beta = S::from_f64_lossy(2.0) / vtv;
        for col in cols.iter_mut().skip(k) {
            let dot = v
                .iter()
                .zip(&col[k..n])
                .map(|(&a, &b)| a * b)
                .sum::<S>();
            let scale = beta * dot;
            for (i, &vi) in v.iter().enumerate() {
                col[k + i] = col[k + i] - scale * vi;
            }
        }
        let dot = v.iter().zip(&rhs[k..n]).map(|(&a, &b)| a * b).sum::<S>();
        let scale = beta * dot;
        for (i, &vi) in v.iter().enumerate() {
            rhs[k + i] = rhs[k + i] - scale * vi;
        }
        diag[k] = cols[k][k];
    }

    // Rank check against the largest diagonal magnitude.
    let max_diag = diag
        .iter()
        .map(|d| d.abs())
        .fold(S::zero(), |a, b| a.max(b));
    let tol = max_diag * S::from_f64_lossy(1e-10);
    let degenerate: Vec<String> = (0..m)
        .filter(|&k| diag[k].abs() <= tol)
        .map(|k| layout[k].name(train.schema()))
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::RankDeficient {
            columns: degenerate,
        });
    }

    // Back-substitution on R β = Qᵀy.
    let mut beta = vec![S::zero(); m];
    for k in (0..m).rev() {
        let mut acc = rhs[k];
        for j in k + 1..m {
            acc = acc - cols[j][k] * beta[j];
        }
        beta[k] = acc / diag[k];
    }

    Ok(LinearModel {
        schema: train.schema().clone(),
        columns: layout,
        coefficients: beta,
    })
}

// ── model comparison ───────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slice {
    Train,
    Test,
}

impl Slice {
    pub fn as_str(self) -> &'static str {
        match self {
            Slice::Train => "train",
            Slice::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonEntry<S> {
    pub model: String,
    pub slice: Slice,
    pub metrics: Metrics<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionPair<S> {
    pub model: String,
    pub observed: S,
    pub predicted: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport<S> {
    /// Metrics per (model, slice, scale) in deterministic order: models in
    /// input order, train before test, fitted scale before the derived one.
    pub entries: Vec<ComparisonEntry<S>>,
    /// Observed/predicted pairs on the test slice, on the fitted scale.
    pub test_pairs: Vec<PredictionPair<S>>,
}

impl<S: Scalar> ComparisonReport<S> {
    pub fn metrics_for(&self, model: &str, slice: Slice, scale: ResponseScale) -> Option<&Metrics<S>> {
        self.entries
            .iter()
            .find(|e| e.model == model && e.slice == slice && e.metrics.scale == scale)
            .map(|e| &e.metrics)
    }

    /// `model,slice,scale,mse,rmse` rows.
    pub fn metrics_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::from("model,slice,scale,mse,rmse\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.model,
                e.slice.as_str(),
                e.metrics.scale.as_str(),
                e.metrics.mse,
                e.metrics.rmse
            ));
        }
        out.into_bytes()
    }

    /// `model,observed,predicted` rows for the test slice (fitted scale).
    pub fn predictions_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::from("model,observed,predicted\n");
        for p in &self.test_pairs {
            out.push_str(&format!("{},{},{}\n", p.model, p.observed, p.predicted));
        }
        out.into_bytes()
    }
}

/// Evaluate every named model on both slices. Predictions and observations
/// are taken on the datasets' response scale; the counterpart scale is
/// derived per the module conventions.
pub fn compare_models<S: Scalar>(
    models: &[(&str, &dyn Model<S>)],
    train: &Dataset<S>,
    test: &Dataset<S>,
) -> Result<ComparisonReport<S>> {
    if train.schema() != test.schema() {
        return Err(Error::SchemaMismatch(
            "train and test schemas differ".into(),
        ));
    }
    if train.response_scale() != test.response_scale() {
        return Err(Error::SchemaMismatch(
            "train and test response scales differ".into(),
        ));
    }
    let native = train.response_scale();

    let mut entries = Vec::new();
    let mut test_pairs = Vec::new();
    for &(name, model) in models {
        for (slice, data) in [(Slice::Train, train), (Slice::Test, test)] {
            let preds = model.predict_dataset(data)?;
            entries.push(ComparisonEntry {
                model: name.to_string(),
                slice,
                metrics: mse_on_scale(&preds, data.response(), native)?,
            });
            if let Some(metrics) = derived_scale_metrics(&preds, data.response(), native)? {
                entries.push(ComparisonEntry {
                    model: name.to_string(),
                    slice,
                    metrics,
                });
            }
            if slice == Slice::Test {
                for (i, &p) in preds.iter().enumerate() {
                    test_pairs.push(PredictionPair {
                        model: name.to_string(),
                        observed: data.response()[i],
                        predicted: p,
                    });
                }
            }
        }
    }
    Ok(ComparisonReport {
        entries,
        test_pairs,
    })
}

fn derived_scale_metrics<S: Scalar>(
    predicted: &[S],
    observed: &[S],
    native: ResponseScale,
) -> Result<Option<Metrics<S>>> {
    match native {
        ResponseScale::Log => {
            let p: Vec<S> = predicted.iter().map(|&v| v.exp()).collect();
            let o: Vec<S> = observed.iter().map(|&v| v.exp()).collect();
            Ok(Some(mse_on_scale(&p, &o, ResponseScale::Raw)?))
        }
        ResponseScale::Raw => {
            let all_positive = predicted
                .iter()
                .chain(observed)
                .all(|&v| v > S::zero());
            if !all_positive {
                return Ok(None);
            }
            let p: Vec<S> = predicted.iter().map(|&v| v.ln()).collect();
            let o: Vec<S> = observed.iter().map(|&v| v.ln()).collect();
            Ok(Some(mse_on_scale(&p, &o, ResponseScale::Log)?))
        }
    }
}

// ── summary statistics ─────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationEntry<S> {
    pub feature: String,
    pub correlation: S,
}

/// Boxplot-ready response quartiles for one categorical level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary<S> {
    pub feature: String,
    pub level: String,
    pub n: usize,
    pub min: S,
    pub q1: S,
    pub median: S,
    pub q3: S,
    pub max: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdaSummary<S> {
    /// Pearson correlation of the response against each numeric predictor,
    /// in schema order.
    pub correlations: Vec<CorrelationEntry<S>>,
    /// Per-level response quartiles for each categorical predictor; levels
    /// with no rows are omitted.
    pub level_summaries: Vec<LevelSummary<S>>,
}

impl<S: Scalar> EdaSummary<S> {
    pub fn correlation_for(&self, feature: &str) -> Option<S> {
        self.correlations
            .iter()
            .find(|c| c.feature == feature)
            .map(|c| c.correlation)
    }

    /// `feature,correlation` plus `feature,level,n,min,q1,median,q3,max`
    /// sections, separated by a blank line.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::from("feature,correlation\n");
        for c in &self.correlations {
            out.push_str(&format!("{},{}\n", c.feature, c.correlation));
        }
        out.push('\n');
        out.push_str("feature,level,n,min,q1,median,q3,max\n");
        for l in &self.level_summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                l.feature, l.level, l.n, l.min, l.q1, l.median, l.q3, l.max
            ));
        }
        out.into_bytes()
    }
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return S::zero();
    }
    let n = S::from_count(a.len());
    let ma = a.iter().copied().sum::<S>() / n;
    let mb = b.iter().copied().sum::<S>() / n;
    let mut cov = S::zero();
    let mut va = S::zero();
    let mut vb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        cov = cov + (x - ma) * (y - mb);
        va = va + (x - ma) * (x - ma);
        vb = vb + (y - mb) * (y - mb);
    }
    let denom = va.sqrt() * vb.sqrt();
    if denom == S::zero() {
        S::zero()
    } else {
        cov / denom
    }
}

/// Quantile with linear interpolation between order statistics (the common
/// "type 7" rule). `sorted` must be ascending and non-empty.
fn quantile_sorted<S: Scalar>(sorted: &[S], q: f64) -> S {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = S::from_f64_lossy(h - h.floor());
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Response correlations for numeric predictors and boxplot-ready per-level
/// quartiles for categorical ones.
pub fn summary_stats<S: Scalar>(data: &Dataset<S>) -> EdaSummary<S> {
    let mut correlations = Vec::new();
    let mut level_summaries = Vec::new();
    for (j, spec) in data.schema().features().iter().enumerate() {
        match data.column(j) {
            Column::Numeric(values) => correlations.push(CorrelationEntry {
                feature: spec.name.clone(),
                correlation: pearson(data.response(), values),
            }),
            Column::Categorical(values) => {
                for level in 0..spec.n_levels() as u32 {
                    let mut ys: Vec<S> = values
                        .iter()
                        .zip(data.response())
                        .filter(|(&c, _)| c == level)
                        .map(|(_, &y)| y)
                        .collect();
                    if ys.is_empty() {
                        continue;
                    }
                    ys.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite response"));
                    level_summaries.push(LevelSummary {
                        feature: spec.name.clone(),
                        level: spec.levels[level as usize].clone(),
                        n: ys.len(),
                        min: ys[0],
                        q1: quantile_sorted(&ys, 0.25),
                        median: quantile_sorted(&ys, 0.50),
                        q3: quantile_sorted(&ys, 0.75),
                        max: ys[ys.len() - 1],
                    });
                }
            }
        }
    }
    EdaSummary {
        correlations,
        level_summaries,
    }
}
