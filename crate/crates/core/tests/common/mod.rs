//! Shared test fixtures: an independent brute-force split enumerator and a
//! random small-dataset builder. The enumerator deliberately recomputes
//! everything from scratch (two-pass SSE over explicit partitions, list-based
//! subset ordering) so it shares no code path with the library's scanner.

use claimsev_core::data::{Column, Dataset};
use claimsev_core::schema::{FeatureSpec, Schema};
use claimsev_core::tree::{LevelSet, SplitRule, TreeConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSplit {
    pub rule: SplitRule<f64>,
    pub gain: f64,
}

pub enum OracleTargets<'a> {
    Response(&'a [f64]),
    GradHess { grad: &'a [f64], hess: &'a [f64] },
}

fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

fn newton_half_score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Gain of an explicit row partition, computed from scratch.
fn partition_gain(
    targets: &OracleTargets<'_>,
    left: &[usize],
    right: &[usize],
    lambda: Option<f64>,
) -> f64 {
    match targets {
        OracleTargets::Response(y) => {
            let parent: Vec<f64> = left.iter().chain(right).map(|&r| y[r]).collect();
            let l: Vec<f64> = left.iter().map(|&r| y[r]).collect();
            let r: Vec<f64> = right.iter().map(|&r| y[r]).collect();
            sse(&parent) - sse(&l) - sse(&r)
        }
        OracleTargets::GradHess { grad, hess } => {
            let lambda = lambda.expect("newton targets need lambda");
            let (gl, hl) = left.iter().fold((0.0, 0.0), |(g, h), &r| (g + grad[r], h + hess[r]));
            let (gr, hr) = right.iter().fold((0.0, 0.0), |(g, h), &r| (g + grad[r], h + hess[r]));
            0.5 * (newton_half_score(gl, hl, lambda) + newton_half_score(gr, hr, lambda)
                - newton_half_score(gl + gr, hl + hr, lambda))
        }
    }
}

/// Independent tie-break: lower feature, then lower threshold, then the
/// lexicographically smaller ascending level list (Vec ordering).
fn rule_precedes(a: &SplitRule<f64>, b: &SplitRule<f64>) -> bool {
    let fa = match a {
        SplitRule::Numeric { feature, .. } => *feature,
        SplitRule::CategorySubset { feature, .. } => *feature,
    };
    let fb = match b {
        SplitRule::Numeric { feature, .. } => *feature,
        SplitRule::CategorySubset { feature, .. } => *feature,
    };
    if fa != fb {
        return fa < fb;
    }
    match (a, b) {
        (SplitRule::Numeric { threshold: ta, .. }, SplitRule::Numeric { threshold: tb, .. }) => {
            ta < tb
        }
        (
            SplitRule::CategorySubset { left_levels: la, .. },
            SplitRule::CategorySubset { left_levels: lb, .. },
        ) => la.levels() < lb.levels(),
        _ => false,
    }
}

/// Exhaustive enumeration of every candidate split, mirroring the documented
/// contract: numeric thresholds at midpoints of adjacent distinct values,
/// categorical left sets canonicalized to contain level 0 (all partitions
/// for ≤ 12 levels), `min_leaf` on both children, net gain (minus `gamma`)
/// strictly positive.
pub fn brute_force_best_split(
    data: &Dataset<f64>,
    targets: &OracleTargets<'_>,
    rows: &[usize],
    config: &TreeConfig<f64>,
) -> Option<OracleSplit> {
    if rows.len() < config.min_split {
        return None;
    }
    let lambda = match config.leaf_mode {
        claimsev_core::tree::LeafMode::Mean => None,
        claimsev_core::tree::LeafMode::Newton { lambda } => Some(lambda),
    };
    let mut best: Option<OracleSplit> = None;
    let mut consider = |rule: SplitRule<f64>, left: Vec<usize>, right: Vec<usize>| {
        if left.len() < config.min_leaf || right.len() < config.min_leaf {
            return;
        }
        let gain = partition_gain(targets, &left, &right, lambda) - config.gamma;
        if gain <= 0.0 {
            return;
        }
        let candidate = OracleSplit { rule, gain };
        let replace = match &best {
            None => true,
            Some(current) => {
                gain > current.gain
                    || (gain == current.gain && rule_precedes(&candidate.rule, &current.rule))
            }
        };
        if replace {
            best = Some(candidate);
        }
    };

    for feature in 0..data.p() {
        match data.column(feature) {
            Column::Numeric(xs) => {
                let mut distinct: Vec<f64> = rows.iter().map(|&r| xs[r]).collect();
                distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                distinct.dedup();
                for pair in distinct.windows(2) {
                    let mid = (pair[0] + pair[1]) / 2.0;
                    let threshold = if mid < pair[1] { mid } else { pair[0] };
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| xs[r] <= threshold);
                    consider(
                        SplitRule::Numeric { feature, threshold },
                        left,
                        right,
                    );
                }
            }
            Column::Categorical(cs) => {
                let k = data.schema().feature(feature).n_levels();
                assert!(k <= 12, "oracle only covers the exhaustive regime");
                let full = (1u64 << k) - 1;
                let mut mask = 1u64;
                while mask < full {
                    let left_levels = LevelSet::from_mask(mask);
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| left_levels.contains(cs[r]));
                    consider(
                        SplitRule::CategorySubset {
                            feature,
                            left_levels,
                        },
                        left,
                        right,
                    );
                    mask += 2;
                }
            }
        }
    }
    best
}

/// Random mixed-column dataset: up to `max_p` features, each numeric
/// (continuous or small-integer grid) or categorical with 2–4 levels.
pub fn random_small_dataset(rng: &mut ChaCha8Rng, max_n: usize, max_p: usize) -> Dataset<f64> {
    let n = rng.gen_range(5..=max_n);
    let p = rng.gen_range(1..=max_p);
    let mut specs = Vec::with_capacity(p);
    let mut columns = Vec::with_capacity(p);
    for j in 0..p {
        let name = format!("f{j}");
        if rng.gen_bool(0.5) {
            specs.push(FeatureSpec::continuous(&name, 0.0, ""));
            let values: Vec<f64> = if rng.gen_bool(0.3) {
                (0..n).map(|_| rng.gen_range(0..6) as f64).collect()
            } else {
                (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()
            };
            columns.push(Column::Numeric(values));
        } else {
            let k = rng.gen_range(2..=4usize);
            let labels: Vec<String> = (0..k).map(|l| format!("l{l}")).collect();
            let label_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            specs.push(FeatureSpec::categorical(&name, &label_refs));
            columns.push(Column::Categorical(
                (0..n).map(|_| rng.gen_range(0..k) as u32).collect(),
            ));
        }
    }
    let response: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    Dataset::new(
        Schema::new(specs).unwrap(),
        columns,
        response,
        vec![1.0; n],
        vec![0.0; n],
        vec![2015; n],
    )
    .unwrap()
}

/// Golden-section minimizer for the per-leaf objective `G·w + ½(H+λ)w² + γ`.
pub fn golden_section_leaf_weight(g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let objective = |w: f64| g * w + 0.5 * (h + lambda) * w * w + gamma;
    let (mut lo, mut hi) = (-1e4, 1e4);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    for _ in 0..200 {
        if objective(c) < objective(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - phi * (hi - lo);
        d = lo + phi * (hi - lo);
        if (hi - lo).abs() < 1e-10 {
            break;
        }
    }
    (lo + hi) / 2.0
}
