//! CART regression trees.
//!
//! Split search is exhaustive: numeric features consider midpoints between
//! consecutive distinct sorted values, categorical features consider level
//! subsets (all 2^(k-1)-1 distinct partitions for k ≤ 12 levels, single
//! level-vs-rest candidates beyond that). Two leaf modes are supported:
//!
//! * `mean` — leaf value is the mean response, split gain is the reduction in
//!   the sum of squared errors;
//! * `newton(λ)` — targets are per-row (gradient, hessian) pairs, the leaf
//!   weight is `-G/(H+λ)` and the gain is
//!   `½·[G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)]`.
//!
//! A `γ` penalty is subtracted from every gain and a split is kept only when
//! the net gain is strictly positive. Ties are broken deterministically:
//! lowest feature index, then lowest threshold for numeric rules, then the
//! lexicographically smallest left level set for categorical rules. Category
//! rules are canonicalized so the left set always contains the feature's
//! first schema level, which makes rule identity unambiguous between the
//! fitter and any independent enumerator.

use serde::{Deserialize, Serialize};

use crate::data::{ClaimRecord, Column, Dataset, Value};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::Schema;

/// Categorical features with at most this many schema levels get the
/// exhaustive subset search; wider features fall back to level-vs-rest.
pub const CAT_EXHAUSTIVE_MAX_LEVELS: usize = 12;

/// Row-count threshold above which candidate features are scanned in
/// parallel. The tie-break comparator is a strict total order, so the winner
/// does not depend on evaluation order.
const PARALLEL_SPLIT_MIN_ROWS: usize = 4096;

// ── level sets ─────────────────────────────────────────────────────────────

/// Set of category level indices, stored as a 64-bit mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelSet(u64);

impl LevelSet {
    pub fn from_mask(mask: u64) -> LevelSet {
        LevelSet(mask)
    }

    pub fn from_levels(levels: &[u32]) -> LevelSet {
        let mut mask = 0u64;
        for &l in levels {
            debug_assert!((l as usize) < 64);
            mask |= 1 << l;
        }
        LevelSet(mask)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn contains(self, level: u32) -> bool {
        level < 64 && self.0 & (1 << level) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Ascending level indices.
    pub fn levels(self) -> Vec<u32> {
        (0..64).filter(|&l| self.contains(l)).collect()
    }

    /// Lexicographic order on the ascending level lists, with a proper
    /// prefix preceding its extensions: `[0] < [0,2] < [1]`.
    pub fn lex_precedes(self, other: LevelSet) -> bool {
        let diff = self.0 ^ other.0;
        if diff == 0 {
            return false;
        }
        let lowest = diff & diff.wrapping_neg();
        let above = !(lowest | (lowest - 1));
        if self.0 & lowest != 0 {
            // We hold the smallest non-shared level; the other set precedes
            // only when it is exhausted (a proper prefix of this one).
            other.0 & above != 0
        } else {
            self.0 & above == 0
        }
    }
}

impl Serialize for LevelSet {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.levels().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LevelSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let levels = Vec::<u32>::deserialize(deserializer)?;
        if let Some(&bad) = levels.iter().find(|&&l| l >= 64) {
            return Err(serde::de::Error::custom(format!("level index {bad} out of range")));
        }
        Ok(LevelSet::from_levels(&levels))
    }
}

// ── rules and nodes ────────────────────────────────────────────────────────

/// Routing rule of an internal node. Numeric rules send `x ≤ threshold`
/// left; category rules send levels in `left_levels` left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub enum SplitRule<S> {
    Numeric { feature: usize, threshold: S },
    CategorySubset { feature: usize, left_levels: LevelSet },
}

impl<S: Scalar> SplitRule<S> {
    pub fn feature(&self) -> usize {
        match self {
            SplitRule::Numeric { feature, .. } => *feature,
            SplitRule::CategorySubset { feature, .. } => *feature,
        }
    }

    fn routes_left(&self, value: Value<S>) -> Option<bool> {
        match (self, value) {
            (SplitRule::Numeric { threshold, .. }, Value::Number(x)) => Some(x <= *threshold),
            (SplitRule::CategorySubset { left_levels, .. }, Value::Category(c)) => {
                Some(left_levels.contains(c))
            }
            _ => None,
        }
    }

    /// Deterministic tie-break order used whenever two candidates have equal
    /// gain: feature index, then threshold, then lexicographic level set.
    fn precedes(&self, other: &SplitRule<S>) -> bool {
        if self.feature() != other.feature() {
            return self.feature() < other.feature();
        }
        match (self, other) {
            (SplitRule::Numeric { threshold: a, .. }, SplitRule::Numeric { threshold: b, .. }) => a < b,
            (
                SplitRule::CategorySubset { left_levels: a, .. },
                SplitRule::CategorySubset { left_levels: b, .. },
            ) => a.lex_precedes(*b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode<S> {
    Internal {
        rule: SplitRule<S>,
        left: Box<TreeNode<S>>,
        right: Box<TreeNode<S>>,
    },
    Leaf {
        value: S,
        n_samples: usize,
    },
}

/// A fitted CART tree. Immutable; safe to share across prediction threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    bound(serialize = "S: Scalar", deserialize = "S: Scalar"),
    into = "WireNode<S>",
    try_from = "WireNode<S>"
)]
pub struct RegressionTree<S: Scalar> {
    root: TreeNode<S>,
}

impl<S: Scalar> RegressionTree<S> {
    pub fn root(&self) -> &TreeNode<S> {
        &self.root
    }

    /// Build a single-leaf tree; handy in tests and degenerate fits.
    pub fn leaf(value: S, n_samples: usize) -> RegressionTree<S> {
        RegressionTree {
            root: TreeNode::Leaf { value, n_samples },
        }
    }

    /// Predict one record, validating rule/feature compatibility on the way
    /// down.
    pub fn predict_record(&self, record: &ClaimRecord<S>) -> Result<S> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return Ok(*value),
                TreeNode::Internal { rule, left, right } => {
                    let value = record
                        .values
                        .get(rule.feature())
                        .copied()
                        .ok_or_else(|| schema_mismatch_at(rule.feature()))?;
                    let go_left = rule
                        .routes_left(value)
                        .ok_or_else(|| schema_mismatch_at(rule.feature()))?;
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    /// Predict every row of a dataset after a one-time schema check.
    pub fn predict_dataset(&self, data: &Dataset<S>) -> Result<Vec<S>> {
        self.validate_schema(data.schema())?;
        Ok((0..data.n()).map(|row| self.predict_row(data, row)).collect())
    }

    /// Row prediction without per-row checks; callers validate the schema
    /// once up front.
    pub(crate) fn predict_row(&self, data: &Dataset<S>, row: usize) -> S {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal { rule, left, right } => {
                    let go_left = match (rule, data.column(rule.feature())) {
                        (SplitRule::Numeric { threshold, .. }, Column::Numeric(xs)) => {
                            xs[row] <= *threshold
                        }
                        (SplitRule::CategorySubset { left_levels, .. }, Column::Categorical(cs)) => {
                            left_levels.contains(cs[row])
                        }
                        _ => unreachable!("validated schema"),
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    /// Check every rule against a schema: feature index in range and rule
    /// kind matching the column kind.
    pub fn validate_schema(&self, schema: &Schema) -> Result<()> {
        fn walk<S: Scalar>(node: &TreeNode<S>, schema: &Schema) -> Result<()> {
            if let TreeNode::Internal { rule, left, right } = node {
                let feature = rule.feature();
                if feature >= schema.len() {
                    return Err(schema_mismatch_at(feature));
                }
                let kind_ok = match rule {
                    SplitRule::Numeric { .. } => schema.feature(feature).is_numeric(),
                    SplitRule::CategorySubset { left_levels, .. } => {
                        schema.feature(feature).is_categorical()
                            && left_levels
                                .levels()
                                .iter()
                                .all(|&l| (l as usize) < schema.feature(feature).n_levels())
                    }
                };
                if !kind_ok {
                    return Err(schema_mismatch_at(feature));
                }
                walk(left, schema)?;
                walk(right, schema)?;
            }
            Ok(())
        }
        walk(&self.root, schema)
    }

    pub fn n_leaves(&self) -> usize {
        fn count<S>(node: &TreeNode<S>) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Internal { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn depth<S>(node: &TreeNode<S>) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    /// `(value, n_samples)` for every leaf, in depth-first order.
    pub fn leaves(&self) -> Vec<(S, usize)> {
        fn collect<S: Scalar>(node: &TreeNode<S>, out: &mut Vec<(S, usize)>) {
            match node {
                TreeNode::Leaf { value, n_samples } => out.push((*value, *n_samples)),
                TreeNode::Internal { left, right, .. } => {
                    collect(left, out);
                    collect(right, out);
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.root, &mut out);
        out
    }

    /// Indices of the features referenced by at least one rule.
    pub fn used_features(&self) -> std::collections::BTreeSet<usize> {
        fn walk<S>(node: &TreeNode<S>, out: &mut std::collections::BTreeSet<usize>) {
            if let TreeNode::Internal { rule, left, right } = node {
                let feature = match rule {
                    SplitRule::Numeric { feature, .. } => *feature,
                    SplitRule::CategorySubset { feature, .. } => *feature,
                };
                out.insert(feature);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = std::collections::BTreeSet::new();
        walk(&self.root, &mut out);
        out
    }

    /// Recompute every leaf as the Newton weight `-G/(H+λ)` over the rows
    /// that route to it, keeping the split structure fixed. Leaf sample
    /// counts are re-derived from `rows`.
    pub fn with_newton_leaves(
        &self,
        data: &Dataset<S>,
        rows: &[usize],
        grad: &[S],
        hess: &[S],
        lambda: S,
    ) -> Result<RegressionTree<S>> {
        self.validate_schema(data.schema())?;
        if grad.len() != data.n() || hess.len() != data.n() {
            return Err(Error::LengthMismatch {
                left: grad.len(),
                right: data.n(),
            });
        }
        let n_leaves = self.n_leaves();
        let mut sums = vec![(S::zero(), S::zero(), 0usize); n_leaves];
        for &row in rows {
            let leaf = self.leaf_index(data, row);
            let (g, h, c) = sums[leaf];
            sums[leaf] = (g + grad[row], h + hess[row], c + 1);
        }
        fn rebuild<S: Scalar>(
            node: &TreeNode<S>,
            sums: &[(S, S, usize)],
            next: &mut usize,
            lambda: S,
        ) -> TreeNode<S> {
            match node {
                TreeNode::Leaf { .. } => {
                    let (g, h, c) = sums[*next];
                    *next += 1;
                    TreeNode::Leaf {
                        value: newton_weight(g, h, lambda),
                        n_samples: c,
                    }
                }
                TreeNode::Internal { rule, left, right } => TreeNode::Internal {
                    rule: rule.clone(),
                    left: Box::new(rebuild(left, sums, next, lambda)),
                    right: Box::new(rebuild(right, sums, next, lambda)),
                },
            }
        }
        let mut next = 0;
        Ok(RegressionTree {
            root: rebuild(&self.root, &sums, &mut next, lambda),
        })
    }

    /// Depth-first leaf index a row routes to.
    pub(crate) fn leaf_index(&self, data: &Dataset<S>, row: usize) -> usize {
        fn walk<S: Scalar>(node: &TreeNode<S>, data: &Dataset<S>, row: usize, base: usize) -> usize {
            match node {
                TreeNode::Leaf { .. } => base,
                TreeNode::Internal { rule, left, right } => {
                    let go_left = match (rule, data.column(rule.feature())) {
                        (SplitRule::Numeric { threshold, .. }, Column::Numeric(xs)) => {
                            xs[row] <= *threshold
                        }
                        (SplitRule::CategorySubset { left_levels, .. }, Column::Categorical(cs)) => {
                            left_levels.contains(cs[row])
                        }
                        _ => unreachable!("validated schema"),
                    };
                    if go_left {
                        walk(left, data, row, base)
                    } else {
                        fn leaf_count<S>(node: &TreeNode<S>) -> usize {
                            match node {
                                TreeNode::Leaf { .. } => 1,
                                TreeNode::Internal { left, right, .. } => {
                                    leaf_count(left) + leaf_count(right)
                                }
                            }
                        }
                        walk(right, data, row, base + leaf_count(left))
                    }
                }
            }
        }
        walk(&self.root, data, row, 0)
    }
}

fn schema_mismatch_at(feature: usize) -> Error {
    Error::SchemaMismatch(format!("rule references feature {feature} with an incompatible kind"))
}

// ── configuration ──────────────────────────────────────────────────────────

/// Leaf value rule: mean of the targets, or a Newton step from gradient and
/// hessian sums.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub enum LeafMode<S> {
    Mean,
    Newton { lambda: S },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct TreeConfig<S> {
    /// Maximum number of splits on any root-to-leaf path; `None` = unlimited.
    pub max_depth: Option<usize>,
    /// Minimum samples in each child of an accepted split.
    pub min_leaf: usize,
    /// Minimum samples required to attempt a split.
    pub min_split: usize,
    /// Candidate features drawn per split; `None` = all features.
    pub mtry: Option<usize>,
    pub leaf_mode: LeafMode<S>,
    /// Split-acceptance penalty subtracted from every gain.
    pub gamma: S,
}

impl<S: Scalar> Default for TreeConfig<S> {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_leaf: 5,
            min_split: 10,
            mtry: None,
            leaf_mode: LeafMode::Mean,
            gamma: S::zero(),
        }
    }
}

impl<S: Scalar> TreeConfig<S> {
    pub(crate) fn validate(&self, p: usize) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::invalid_config("max_depth", "must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid_config("min_leaf", "must be at least 1"));
        }
        if self.min_split < 2 {
            return Err(Error::invalid_config("min_split", "must be at least 2"));
        }
        if self.gamma < S::zero() {
            return Err(Error::invalid_config("gamma", "must be non-negative"));
        }
        if let LeafMode::Newton { lambda } = self.leaf_mode {
            if lambda < S::zero() {
                return Err(Error::invalid_config("lambda", "must be non-negative"));
            }
        }
        if let Some(mtry) = self.mtry {
            if mtry == 0 || mtry > p {
                return Err(Error::InvalidMtry { mtry, p });
            }
        }
        Ok(())
    }
}

/// Per-row fitting targets: the response itself in mean mode, or (gradient,
/// hessian) pairs in Newton mode. Slices are indexed by dataset row.
#[derive(Clone, Copy, Debug)]
pub enum TreeTargets<'a, S> {
    Response(&'a [S]),
    GradHess { grad: &'a [S], hess: &'a [S] },
}

/// Winning split for a node.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCandidate<S> {
    pub rule: SplitRule<S>,
    /// Net gain: criterion improvement minus `γ`.
    pub gain: S,
    pub n_left: usize,
    pub n_right: usize,
}

impl<S: Scalar> SplitCandidate<S> {
    fn better_than(&self, other: &SplitCandidate<S>) -> bool {
        if self.gain != other.gain {
            return self.gain > other.gain;
        }
        self.rule.precedes(&other.rule)
    }
}

#[derive(Clone, Copy)]
enum GainMode<S> {
    Sse,
    Newton { lambda: S },
}

fn newton_weight<S: Scalar>(g: S, h: S, lambda: S) -> S {
    let denom = h + lambda;
    if denom > S::zero() {
        -g / denom
    } else {
        S::zero()
    }
}

/// Gain of a candidate partition given left/right aggregates. `nl`/`nr` are
/// sample counts, `gl`/`gr` gradient (or response) sums, `hl`/`hr` hessian
/// sums (ignored in SSE mode).
fn partition_gain<S: Scalar>(mode: GainMode<S>, gl: S, hl: S, nl: usize, gr: S, hr: S, nr: usize) -> S {
    match mode {
        GainMode::Sse => {
            let (snl, snr) = (S::from_count(nl), S::from_count(nr));
            let total = gl + gr;
            gl * gl / snl + gr * gr / snr - total * total / (snl + snr)
        }
        GainMode::Newton { lambda } => {
            let half = S::from_f64_lossy(0.5);
            let (g, h) = (gl + gr, hl + hr);
            half * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
        }
    }
}

struct NodeView<'a, S> {
    data: &'a Dataset<S>,
    grad: &'a [S],
    hess: Option<&'a [S]>,
    mode: GainMode<S>,
    min_leaf: usize,
    gamma: S,
}

impl<'a, S: Scalar> NodeView<'a, S> {
    fn hess_at(&self, row: usize) -> S {
        match self.hess {
            Some(h) => h[row],
            None => S::one(),
        }
    }

    fn scan_feature(&self, feature: usize, rows: &[usize]) -> Option<SplitCandidate<S>> {
        match self.data.column(feature) {
            Column::Numeric(xs) => self.scan_numeric(feature, xs, rows),
            Column::Categorical(cs) => {
                let n_levels = self.data.schema().feature(feature).n_levels();
                self.scan_categorical(feature, cs, n_levels, rows)
            }
        }
    }

    fn scan_numeric(&self, feature: usize, xs: &[S], rows: &[usize]) -> Option<SplitCandidate<S>> {
        let mut items: Vec<(S, S, S)> = rows
            .iter()
            .map(|&r| (xs[r], self.grad[r], self.hess_at(r)))
            .collect();
        items.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));

        let (mut gr, mut hr) = (S::zero(), S::zero());
        for &(_, g, h) in &items {
            gr = gr + g;
            hr = hr + h;
        }

        let n = items.len();
        let (mut gl, mut hl) = (S::zero(), S::zero());
        let mut best: Option<SplitCandidate<S>> = None;
        for i in 0..n.saturating_sub(1) {
            let (x, g, h) = items[i];
            gl = gl + g;
            hl = hl + h;
            gr = gr - g;
            hr = hr - h;
            let next = items[i + 1].0;
            if x == next {
                continue;
            }
            let (nl, nr) = (i + 1, n - i - 1);
            if nl < self.min_leaf || nr < self.min_leaf {
                continue;
            }
            let gain = partition_gain(self.mode, gl, hl, nl, gr, hr, nr) - self.gamma;
            if gain <= S::zero() {
                continue;
            }
            let mid = (x + next) / S::from_f64_lossy(2.0);
            // Keep x ≤ threshold < next even when the midpoint rounds up.
            let threshold = if mid < next { mid } else { x };
            let candidate = SplitCandidate {
                rule: SplitRule::Numeric { feature, threshold },
                gain,
                n_left: nl,
                n_right: nr,
            };
            if best.as_ref().is_none_or(|b| candidate.better_than(b)) {
                best = Some(candidate);
            }
        }
        best
    }

    fn scan_categorical(
        &self,
        feature: usize,
        cs: &[u32],
        n_levels: usize,
        rows: &[usize],
    ) -> Option<SplitCandidate<S>> {
        let mut level_g = vec![S::zero(); n_levels];
        let mut level_h = vec![S::zero(); n_levels];
        let mut level_n = vec![0usize; n_levels];
        for &r in rows {
            let c = cs[r] as usize;
            level_g[c] = level_g[c] + self.grad[r];
            level_h[c] = level_h[c] + self.hess_at(r);
            level_n[c] += 1;
        }
        let (mut g_total, mut h_total, mut n_total) = (S::zero(), S::zero(), 0usize);
        for l in 0..n_levels {
            g_total = g_total + level_g[l];
            h_total = h_total + level_h[l];
            n_total += level_n[l];
        }

        let masks: Vec<u64> = if n_levels <= CAT_EXHAUSTIVE_MAX_LEVELS {
            // All distinct partitions, canonicalized to contain level 0.
            let full = (1u64 << n_levels) - 1;
            (1..full).step_by(2).collect()
        } else {
            (0..n_levels as u32).map(|l| 1u64 << l).collect()
        };

        let mut best: Option<SplitCandidate<S>> = None;
        for mask in masks {
            let (mut gl, mut hl, mut nl) = (S::zero(), S::zero(), 0usize);
            let mut bits = mask;
            while bits != 0 {
                let l = bits.trailing_zeros() as usize;
                gl = gl + level_g[l];
                hl = hl + level_h[l];
                nl += level_n[l];
                bits &= bits - 1;
            }
            let nr = n_total - nl;
            if nl < self.min_leaf || nr < self.min_leaf {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            let gain = partition_gain(self.mode, gl, hl, nl, gr, hr, nr) - self.gamma;
            if gain <= S::zero() {
                continue;
            }
            let candidate = SplitCandidate {
                rule: SplitRule::CategorySubset {
                    feature,
                    left_levels: LevelSet::from_mask(mask),
                },
                gain,
                n_left: nl,
                n_right: nr,
            };
            if best.as_ref().is_none_or(|b| candidate.better_than(b)) {
                best = Some(candidate);
            }
        }
        best
    }
}

/// Search every candidate feature for the best split of `rows`.
///
/// Returns `None` when no split clears `min_leaf` with a strictly positive
/// net gain, when `rows` is smaller than `min_split`, or when
/// `candidate_features` is empty.
pub fn best_split<S: Scalar>(
    data: &Dataset<S>,
    targets: TreeTargets<'_, S>,
    rows: &[usize],
    candidate_features: &[usize],
    config: &TreeConfig<S>,
) -> Result<Option<SplitCandidate<S>>> {
    config.validate(data.p())?;
    let (grad, hess, mode) = unpack_targets(data, targets, &config.leaf_mode)?;
    if rows.len() < config.min_split || candidate_features.is_empty() {
        return Ok(None);
    }
    let view = NodeView {
        data,
        grad,
        hess,
        mode,
        min_leaf: config.min_leaf,
        gamma: config.gamma,
    };
    Ok(search_features(&view, candidate_features, rows))
}

fn search_features<S: Scalar>(
    view: &NodeView<'_, S>,
    features: &[usize],
    rows: &[usize],
) -> Option<SplitCandidate<S>> {
    let pick = |a: Option<SplitCandidate<S>>, b: Option<SplitCandidate<S>>| match (a, b) {
        (Some(a), Some(b)) => Some(if a.better_than(&b) { a } else { b }),
        (a, None) => a,
        (None, b) => b,
    };
    if rows.len() >= PARALLEL_SPLIT_MIN_ROWS && features.len() > 1 {
        use rayon::prelude::*;
        features
            .par_iter()
            .map(|&f| view.scan_feature(f, rows))
            .reduce(|| None, pick)
    } else {
        features
            .iter()
            .map(|&f| view.scan_feature(f, rows))
            .fold(None, pick)
    }
}

fn unpack_targets<'a, S: Scalar>(
    data: &Dataset<S>,
    targets: TreeTargets<'a, S>,
    leaf_mode: &LeafMode<S>,
) -> Result<(&'a [S], Option<&'a [S]>, GainMode<S>)> {
    match (targets, leaf_mode) {
        (TreeTargets::Response(y), LeafMode::Mean) => {
            if y.len() != data.n() {
                return Err(Error::LengthMismatch {
                    left: y.len(),
                    right: data.n(),
                });
            }
            Ok((y, None, GainMode::Sse))
        }
        (TreeTargets::GradHess { grad, hess }, LeafMode::Newton { lambda }) => {
            if grad.len() != data.n() || hess.len() != data.n() {
                return Err(Error::LengthMismatch {
                    left: grad.len(),
                    right: data.n(),
                });
            }
            Ok((grad, Some(hess), GainMode::Newton { lambda: *lambda }))
        }
        (TreeTargets::Response(_), LeafMode::Newton { .. }) => Err(Error::invalid_config(
            "leaf_mode",
            "newton mode requires gradient/hessian targets",
        )),
        (TreeTargets::GradHess { .. }, LeafMode::Mean) => Err(Error::invalid_config(
            "leaf_mode",
            "mean mode requires response targets",
        )),
    }
}

/// Fit a tree on every row of `data`.
pub fn fit_tree<S: Scalar>(
    data: &Dataset<S>,
    targets: TreeTargets<'_, S>,
    config: &TreeConfig<S>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<RegressionTree<S>> {
    let rows: Vec<usize> = (0..data.n()).collect();
    fit_tree_on_rows(data, targets, &rows, config, rng)
}

/// Fit a tree on a sample view (row indices into `data`, repeats allowed, as
/// produced by bootstrap sampling).
pub fn fit_tree_on_rows<S: Scalar>(
    data: &Dataset<S>,
    targets: TreeTargets<'_, S>,
    rows: &[usize],
    config: &TreeConfig<S>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<RegressionTree<S>> {
    config.validate(data.p())?;
    if data.n() == 0 || rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (grad, hess, mode) = unpack_targets(data, targets, &config.leaf_mode)?;
    let view = NodeView {
        data,
        grad,
        hess,
        mode,
        min_leaf: config.min_leaf,
        gamma: config.gamma,
    };
    let mut rows = rows.to_vec();
    let root = grow(&view, config, &mut rows, 0, rng);
    Ok(RegressionTree { root })
}

fn grow<S: Scalar>(
    view: &NodeView<'_, S>,
    config: &TreeConfig<S>,
    rows: &mut Vec<usize>,
    depth: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> TreeNode<S> {
    let leaf = |rows: &[usize]| {
        let (mut g, mut h) = (S::zero(), S::zero());
        for &r in rows {
            g = g + view.grad[r];
            h = h + view.hess_at(r);
        }
        let value = match view.mode {
            GainMode::Sse => g / S::from_count(rows.len()),
            GainMode::Newton { lambda } => newton_weight(g, h, lambda),
        };
        TreeNode::Leaf {
            value,
            n_samples: rows.len(),
        }
    };

    let depth_left = config.max_depth.map_or(true, |d| depth < d);
    if !depth_left || rows.len() < config.min_split {
        return leaf(rows);
    }

    let p = view.data.p();
    let candidate_features: Vec<usize> = match config.mtry {
        Some(m) if m < p => {
            let mut drawn = rand::seq::index::sample(rng, p, m).into_vec();
            drawn.sort_unstable();
            drawn
        }
        _ => (0..p).collect(),
    };

    let Some(split) = search_features(view, &candidate_features, rows) else {
        return leaf(rows);
    };

    let (mut left_rows, mut right_rows): (Vec<usize>, Vec<usize>) = (
        Vec::with_capacity(split.n_left),
        Vec::with_capacity(split.n_right),
    );
    for &r in rows.iter() {
        let goes_left = match (&split.rule, view.data.column(split.rule.feature())) {
            (SplitRule::Numeric { threshold, .. }, Column::Numeric(xs)) => xs[r] <= *threshold,
            (SplitRule::CategorySubset { left_levels, .. }, Column::Categorical(cs)) => {
                left_levels.contains(cs[r])
            }
            _ => unreachable!("validated schema"),
        };
        if goes_left {
            left_rows.push(r);
        } else {
            right_rows.push(r);
        }
    }
    debug_assert_eq!(left_rows.len(), split.n_left);
    debug_assert_eq!(right_rows.len(), split.n_right);
    rows.clear();
    rows.shrink_to_fit();

    let left = grow(view, config, &mut left_rows, depth + 1, rng);
    let right = grow(view, config, &mut right_rows, depth + 1, rng);
    TreeNode::Internal {
        rule: split.rule,
        left: Box::new(left),
        right: Box::new(right),
    }
}

// ── wire format ────────────────────────────────────────────────────────────

/// Self-describing JSON node records. Key order follows field declaration
/// order and is byte-stable, which the determinism tests rely on.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
enum WireNode<S> {
    NumericSplit {
        feature: usize,
        threshold: S,
        left: Box<WireNode<S>>,
        right: Box<WireNode<S>>,
    },
    CategorySplit {
        feature: usize,
        left_levels: Vec<u32>,
        left: Box<WireNode<S>>,
        right: Box<WireNode<S>>,
    },
    Leaf {
        value: S,
        n_samples: u64,
    },
}

impl<S: Scalar> From<RegressionTree<S>> for WireNode<S> {
    fn from(tree: RegressionTree<S>) -> Self {
        fn convert<S: Scalar>(node: &TreeNode<S>) -> WireNode<S> {
            match node {
                TreeNode::Leaf { value, n_samples } => WireNode::Leaf {
                    value: *value,
                    n_samples: *n_samples as u64,
                },
                TreeNode::Internal { rule, left, right } => match rule {
                    SplitRule::Numeric { feature, threshold } => WireNode::NumericSplit {
                        feature: *feature,
                        threshold: *threshold,
                        left: Box::new(convert(left)),
                        right: Box::new(convert(right)),
                    },
                    SplitRule::CategorySubset { feature, left_levels } => WireNode::CategorySplit {
                        feature: *feature,
                        left_levels: left_levels.levels(),
                        left: Box::new(convert(left)),
                        right: Box::new(convert(right)),
                    },
                },
            }
        }
        convert(&tree.root)
    }
}

impl<S: Scalar> TryFrom<WireNode<S>> for RegressionTree<S> {
    type Error = Error;
    fn try_from(wire: WireNode<S>) -> Result<Self> {
        fn convert<S: Scalar>(node: WireNode<S>) -> Result<TreeNode<S>> {
            Ok(match node {
                WireNode::Leaf { value, n_samples } => TreeNode::Leaf {
                    value,
                    n_samples: n_samples as usize,
                },
                WireNode::NumericSplit {
                    feature,
                    threshold,
                    left,
                    right,
                } => TreeNode::Internal {
                    rule: SplitRule::Numeric { feature, threshold },
                    left: Box::new(convert(*left)?),
                    right: Box::new(convert(*right)?),
                },
                WireNode::CategorySplit {
                    feature,
                    left_levels,
                    left,
                    right,
                } => {
                    if left_levels.is_empty() {
                        return Err(Error::Schema("category split with empty left set".into()));
                    }
                    if left_levels.iter().any(|&l| l >= 64) {
                        return Err(Error::Schema("category level index out of range".into()));
                    }
                    TreeNode::Internal {
                        rule: SplitRule::CategorySubset {
                            feature,
                            left_levels: LevelSet::from_levels(&left_levels),
                        },
                        left: Box::new(convert(*left)?),
                        right: Box::new(convert(*right)?),
                    }
                }
            })
        }
        Ok(RegressionTree {
            root: convert(wire)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::schema::FeatureSpec;

    /// Single numeric feature x with auxiliary columns zeroed out.
    fn numeric_dataset(xs: &[f64], ys: &[f64]) -> Dataset<f64> {
        let schema = Schema::new(vec![FeatureSpec::continuous("x", 0.0, "")]).unwrap();
        Dataset::new(
            schema,
            vec![Column::Numeric(xs.to_vec())],
            ys.to_vec(),
            vec![1.0; xs.len()],
            vec![0.0; xs.len()],
            vec![2015; xs.len()],
        )
        .unwrap()
    }

    fn loose_config() -> TreeConfig<f64> {
        TreeConfig {
            min_leaf: 1,
            min_split: 2,
            ..TreeConfig::default()
        }
    }

    fn all_rows(data: &Dataset<f64>) -> Vec<usize> {
        (0..data.n()).collect()
    }

    #[test]
    fn constant_response_has_no_split() {
        let data = numeric_dataset(&[1.0, 2.0, 3.0, 4.0], &[5.0, 5.0, 5.0, 5.0]);
        let split = best_split(
            &data,
            TreeTargets::Response(data.response()),
            &all_rows(&data),
            &[0],
            &loose_config(),
        )
        .unwrap();
        assert!(split.is_none());
    }

    #[test]
    fn step_dataset_splits_at_midpoint_with_gain_100() {
        let data = numeric_dataset(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 10.0, 10.0]);
        let split = best_split(
            &data,
            TreeTargets::Response(data.response()),
            &all_rows(&data),
            &[0],
            &loose_config(),
        )
        .unwrap()
        .expect("split exists");
        assert_eq!(
            split.rule,
            SplitRule::Numeric {
                feature: 0,
                threshold: 2.5
            }
        );
        assert!((split.gain - 100.0).abs() < 1e-9, "gain = {}", split.gain);
        assert_eq!((split.n_left, split.n_right), (2, 2));
    }

    #[test]
    fn constant_targets_fit_single_leaf() {
        let data = numeric_dataset(&[1.0, 2.0, 3.0, 4.0, 5.0], &[7.3; 5]);
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(0, 0),
        )
        .unwrap();
        assert_eq!(tree.n_leaves(), 1);
        assert_eq!(tree.predict_record(&data.record(0)).unwrap(), 7.3);
    }

    #[test]
    fn depth_one_fit_is_the_step_stump() {
        let data = numeric_dataset(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 10.0, 10.0]);
        let config = TreeConfig {
            max_depth: Some(1),
            ..loose_config()
        };
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &config,
            &mut stream(0, 0),
        )
        .unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.predict_record(&data.record(0)).unwrap(), 0.0);
        assert_eq!(tree.predict_record(&data.record(3)).unwrap(), 10.0);
    }

    #[test]
    fn newton_lambda_zero_leaves_equal_mean_residuals() {
        let xs = [0.3, 1.7, 2.9, 4.1, 5.6, 6.2, 7.7, 8.1];
        let residuals = [0.4, -1.2, 2.2, 0.9, -0.5, 1.8, -2.0, 0.7];
        let data = numeric_dataset(&xs, &residuals);
        let ones = vec![1.0; xs.len()];

        let newton = fit_tree(
            &data,
            TreeTargets::GradHess {
                grad: &residuals.iter().map(|r| -r).collect::<Vec<_>>(),
                hess: &ones,
            },
            &TreeConfig {
                leaf_mode: LeafMode::Newton { lambda: 0.0 },
                ..loose_config()
            },
            &mut stream(0, 0),
        )
        .unwrap();
        let mean = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(0, 0),
        )
        .unwrap();

        // With g = -r and h = 1, -G/H is the mean residual; structures agree
        // because the Newton gain is half the SSE reduction everywhere.
        for row in 0..data.n() {
            let a = newton.predict_record(&data.record(row)).unwrap();
            let b = mean.predict_record(&data.record(row)).unwrap();
            assert!((a - b).abs() < 1e-12, "row {row}: {a} vs {b}");
        }
    }

    #[test]
    fn category_stump_routes_by_level_set() {
        let schema = Schema::new(vec![FeatureSpec::categorical("c", &["a", "b", "x"])]).unwrap();
        let data = Dataset::new(
            schema,
            vec![Column::Categorical(vec![0, 1, 2, 1])],
            vec![1.0, 5.0, 1.0, 5.0],
            vec![1.0; 4],
            vec![0.0; 4],
            vec![2015; 4],
        )
        .unwrap();
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(0, 0),
        )
        .unwrap();
        // Levels {a, x} respond 1.0, level b responds 5.0.
        assert_eq!(tree.predict_record(&data.record(0)).unwrap(), 1.0);
        assert_eq!(tree.predict_record(&data.record(1)).unwrap(), 5.0);
        assert_eq!(tree.predict_record(&data.record(2)).unwrap(), 1.0);
        match tree.root() {
            TreeNode::Internal { rule, .. } => match rule {
                SplitRule::CategorySubset { left_levels, .. } => {
                    // Canonical form contains level 0.
                    assert!(left_levels.contains(0));
                    assert_eq!(left_levels.levels(), vec![0, 2]);
                }
                other => panic!("expected category rule, got {other:?}"),
            },
            _ => panic!("expected an internal root"),
        }
    }

    #[test]
    fn leaf_samples_sum_to_row_count() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 + (x * 3.0).cos()).collect();
        let data = numeric_dataset(&xs, &ys);
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(1, 0),
        )
        .unwrap();
        let total: usize = tree.leaves().iter().map(|&(_, n)| n).sum();
        assert_eq!(total, data.n());
    }

    #[test]
    fn unlimited_depth_interpolates_distinct_rows() {
        let xs: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 0.7).sin()).collect();
        let data = numeric_dataset(&xs, &ys);
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(1, 0),
        )
        .unwrap();
        for row in 0..data.n() {
            let pred = tree.predict_record(&data.record(row)).unwrap();
            assert!((pred - ys[row]).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_is_piecewise_constant() {
        let data = numeric_dataset(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 10.0, 10.0]);
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(0, 0),
        )
        .unwrap();
        // 2.49 and 1.01 sit on the same side of every threshold as 1.0.
        let mut record = data.record(0);
        record.values[0] = Value::Number(2.49);
        assert_eq!(tree.predict_record(&record).unwrap(), 0.0);
        record.values[0] = Value::Number(2.51);
        assert_eq!(tree.predict_record(&record).unwrap(), 10.0);
    }

    #[test]
    fn schema_mismatch_is_detected() {
        let data = numeric_dataset(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 10.0, 10.0]);
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(0, 0),
        )
        .unwrap();
        let other = Schema::new(vec![FeatureSpec::categorical("x", &["a", "b"])]).unwrap();
        assert!(matches!(
            tree.validate_schema(&other),
            Err(Error::SchemaMismatch(_))
        ));
        let mut record = data.record(0);
        record.values[0] = Value::Category(1);
        assert!(matches!(
            tree.predict_record(&record),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let data = numeric_dataset(&[1.0, 2.0], &[1.0, 2.0]);
        let err = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &TreeConfig {
                leaf_mode: LeafMode::Newton { lambda: 0.0 },
                ..loose_config()
            },
            &mut stream(0, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { field: "leaf_mode", .. }));
    }

    #[test]
    fn json_round_trip_preserves_tree() {
        let data = numeric_dataset(&[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, 10.0, 11.0]);
        let tree = fit_tree(
            &data,
            TreeTargets::Response(data.response()),
            &loose_config(),
            &mut stream(0, 0),
        )
        .unwrap();
        let text = serde_json::to_string(&tree).unwrap();
        let back: RegressionTree<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(tree, back);
    }

    #[test]
    fn level_set_lexicographic_order() {
        let s0 = LevelSet::from_levels(&[0]);
        let s02 = LevelSet::from_levels(&[0, 2]);
        let s1 = LevelSet::from_levels(&[1]);
        assert!(s0.lex_precedes(s02));
        assert!(s02.lex_precedes(s1));
        assert!(!s1.lex_precedes(s02));
        assert!(!s0.lex_precedes(s0));
        assert!(LevelSet::from_levels(&[0, 1]).lex_precedes(s02));
        assert!(s0.lex_precedes(LevelSet::from_levels(&[2])));
    }

    #[test]
    fn newton_refit_shrinks_leaf_weights_as_lambda_grows() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let grad = [-4.0, -3.5, -1.0, -0.5, 2.0, 2.5, 4.0, 4.5];
        let hess = [1.0; 8];
        let data = numeric_dataset(&xs, &[0.0; 8]);
        let base = fit_tree(
            &data,
            TreeTargets::GradHess {
                grad: &grad,
                hess: &hess,
            },
            &TreeConfig {
                leaf_mode: LeafMode::Newton { lambda: 0.0 },
                ..loose_config()
            },
            &mut stream(0, 0),
        )
        .unwrap();
        let rows = all_rows(&data);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.5, 1.0, 5.0, 50.0] {
            let refit = base
                .with_newton_leaves(&data, &rows, &grad, &hess, lambda)
                .unwrap();
            let norm: f64 = refit.leaves().iter().map(|&(w, _)| w * w).sum();
            assert!(norm <= prev + 1e-12, "λ={lambda}: {norm} > {prev}");
            prev = norm;
        }
    }
}
