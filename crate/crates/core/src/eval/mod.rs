//! Metrics: micro triplet precision/recall/F1 with bootstrap confidence
//! intervals, bracket scoring with tag accuracy, validity rates, and a
//! structural error taxonomy for malformed tree outputs.
//!
//! Everything here is a pure function over immutable inputs; reports are
//! deterministic given the inputs and a seed. Per-example statistics are
//! aggregated *micro*-style (sums first, ratios last), and confidence
//! intervals come from a percentile bootstrap over example-level
//! resampling.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::TripletSet;
use crate::cp::{split_brackets, Glyphs, ParseTree, TagInventory};

/// Errors from metric computation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and gold lists differ in length: {preds} vs {golds}")]
    ShapeMismatch { preds: usize, golds: usize },
    #[error("cannot evaluate an empty example set")]
    EmptyEval,
    #[error("predicted yield {pred:?} does not match gold yield {gold:?}")]
    YieldMismatch { pred: Vec<String>, gold: Vec<String> },
}

/// A point estimate with its 95% bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Micro-aggregated precision/recall/F1 over triplet sets.
///
/// `empty_preds` / `empty_golds` flag denominators that were zero (the
/// corresponding metric is reported as 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub empty_preds: bool,
    pub empty_golds: bool,
}

/// Per-example counts feeding micro aggregation and the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrfCounts {
    pub tp: usize,
    pub pred: usize,
    pub gold: usize,
}

/// Counts per matched example pair for bracket scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BracketCounts {
    pub matched: usize,
    pub pred_brackets: usize,
    pub gold_brackets: usize,
    pub correct_tags: usize,
    pub leaves: usize,
}

/// Structural failure flags for one raw output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorFlags {
    pub invalid_tag: bool,
    pub extra: bool,
    pub imbal: bool,
    pub missing: bool,
}

/// Per-example-set totals of the four failure classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub invalid_tag: usize,
    pub extra: usize,
    pub imbal: usize,
    pub missing: usize,
}

impl ErrorCounts {
    pub fn add(&mut self, flags: ErrorFlags) {
        self.invalid_tag += flags.invalid_tag as usize;
        self.extra += flags.extra as usize;
        self.imbal += flags.imbal as usize;
        self.missing += flags.missing as usize;
    }
}

/// Triplet-extraction evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub validity_rate: f64,
    pub n: usize,
    pub seed: u64,
}

/// Bracketing evaluation report.
///
/// The bracket and tag-accuracy metrics are computed only over examples
/// whose output is a valid tree with the right yield; they are `None`
/// when no example qualifies. Validity and the error taxonomy cover all
/// examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BracketReport {
    pub precision: Option<Metric>,
    pub recall: Option<Metric>,
    pub f1: Option<Metric>,
    pub tag_accuracy: Option<Metric>,
    pub tag_validity: f64,
    pub tree_validity: f64,
    pub errors: ErrorCounts,
    pub n: usize,
    pub seed: u64,
}

/// Per-example intersection counts for micro triplet scoring.
pub fn triplet_counts(preds: &[TripletSet], golds: &[TripletSet]) -> Result<Vec<PrfCounts>, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::ShapeMismatch { preds: preds.len(), golds: golds.len() });
    }
    Ok(preds
        .iter()
        .zip(golds)
        .map(|(p, g)| PrfCounts {
            tp: p.intersection(g).count(),
            pred: p.len(),
            gold: g.len(),
        })
        .collect())
}

pub fn micro_precision(counts: &[PrfCounts]) -> f64 {
    let tp: usize = counts.iter().map(|c| c.tp).sum();
    let pred: usize = counts.iter().map(|c| c.pred).sum();
    if pred == 0 { 0.0 } else { tp as f64 / pred as f64 }
}

pub fn micro_recall(counts: &[PrfCounts]) -> f64 {
    let tp: usize = counts.iter().map(|c| c.tp).sum();
    let gold: usize = counts.iter().map(|c| c.gold).sum();
    if gold == 0 { 0.0 } else { tp as f64 / gold as f64 }
}

pub fn micro_f1(counts: &[PrfCounts]) -> f64 {
    f1_of(micro_precision(counts), micro_recall(counts))
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 }
}

/// Micro precision/recall/F1 over parallel lists of predicted and gold
/// triplet sets.
pub fn triplet_prf(preds: &[TripletSet], golds: &[TripletSet]) -> Result<Prf, EvalError> {
    let counts = triplet_counts(preds, golds)?;
    let pred_total: usize = counts.iter().map(|c| c.pred).sum();
    let gold_total: usize = counts.iter().map(|c| c.gold).sum();
    let precision = micro_precision(&counts);
    let recall = micro_recall(&counts);
    Ok(Prf {
        precision,
        recall,
        f1: f1_of(precision, recall),
        empty_preds: pred_total == 0,
        empty_golds: gold_total == 0,
    })
}

/// Percentile bootstrap interval for `metric` over example-level
/// resampling with replacement. Deterministic given `seed`.
///
/// Quantiles use the nearest-rank convention on the sorted resample
/// metrics: index `round(q · (n_resamples − 1))`.
pub fn bootstrap_ci<T: Clone>(
    stats: &[T],
    metric: impl Fn(&[T]) -> f64,
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64), EvalError> {
    if stats.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    assert!(n_resamples > 0, "need at least one resample");
    assert!((0.0..1.0).contains(&level), "level must be in [0, 1)");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_resamples);
    let mut resample = Vec::with_capacity(stats.len());
    for _ in 0..n_resamples {
        resample.clear();
        for _ in 0..stats.len() {
            resample.push(stats[rng.random_range(0..stats.len())].clone());
        }
        values.push(metric(&resample));
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let rank = |q: f64| ((q * (n_resamples - 1) as f64).round() as usize).min(n_resamples - 1);
    Ok((values[rank(alpha)], values[rank(1.0 - alpha)]))
}

fn metric_with_ci<T: Clone>(
    stats: &[T],
    metric: impl Fn(&[T]) -> f64,
    n_resamples: usize,
    seed: u64,
) -> Result<Metric, EvalError> {
    let value = metric(stats);
    let (lo, hi) = bootstrap_ci(stats, metric, n_resamples, seed, 0.95)?;
    // Percentile intervals can nominally exclude the point estimate on
    // tiny samples; widen so the reported interval always brackets it.
    Ok(Metric { value, ci_low: lo.min(value), ci_high: hi.max(value) })
}

/// Full triplet-extraction report with bootstrap intervals.
///
/// `valid` marks which raw outputs satisfied the constraint (decoding
/// failures count as invalid with an empty prediction set).
pub fn ie_report(
    preds: &[TripletSet],
    golds: &[TripletSet],
    valid: &[bool],
    n_resamples: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if preds.len() != valid.len() {
        return Err(EvalError::ShapeMismatch { preds: preds.len(), golds: valid.len() });
    }
    let counts = triplet_counts(preds, golds)?;
    if counts.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    Ok(EvalReport {
        precision: metric_with_ci(&counts, |c| micro_precision(c), n_resamples, seed)?,
        recall: metric_with_ci(&counts, |c| micro_recall(c), n_resamples, seed)?,
        f1: metric_with_ci(&counts, |c| micro_f1(c), n_resamples, seed)?,
        validity_rate: validity_rate(valid)?,
        n: counts.len(),
        seed,
    })
}

/// Bracket multiset and tag comparison for one tree pair.
///
/// Brackets are `(stripped label, start, end)` over internal nodes;
/// preterminals are excluded from brackets and scored through tag
/// accuracy instead. Matching takes the minimum multiplicity per bracket.
pub fn bracket_score(
    pred: &ParseTree,
    gold: &ParseTree,
    tags: &TagInventory,
) -> Result<BracketCounts, EvalError> {
    let pred_yield = pred.yield_words();
    let gold_yield = gold.yield_words();
    if pred_yield != gold_yield {
        return Err(EvalError::YieldMismatch {
            pred: pred_yield.iter().map(|w| w.to_string()).collect(),
            gold: gold_yield.iter().map(|w| w.to_string()).collect(),
        });
    }
    let stripped = |tree: &ParseTree| -> BTreeMap<(String, usize, usize), usize> {
        let mut counts = BTreeMap::new();
        for (label, start, end) in tree.spans() {
            *counts.entry((tags.strip(&label).to_string(), start, end)).or_insert(0) += 1;
        }
        counts
    };
    let pred_counts = stripped(pred);
    let gold_counts = stripped(gold);
    let matched = pred_counts
        .iter()
        .map(|(bracket, &n)| n.min(gold_counts.get(bracket).copied().unwrap_or(0)))
        .sum();
    let correct_tags = pred
        .leaves()
        .iter()
        .zip(gold.leaves())
        .filter(|((pt, _), (gt, _))| tags.strip(pt) == tags.strip(gt))
        .count();
    Ok(BracketCounts {
        matched,
        pred_brackets: pred_counts.values().sum(),
        gold_brackets: gold_counts.values().sum(),
        correct_tags,
        leaves: pred_yield.len(),
    })
}

pub fn bracket_precision(counts: &[BracketCounts]) -> f64 {
    let matched: usize = counts.iter().map(|c| c.matched).sum();
    let pred: usize = counts.iter().map(|c| c.pred_brackets).sum();
    if pred == 0 { 0.0 } else { matched as f64 / pred as f64 }
}

pub fn bracket_recall(counts: &[BracketCounts]) -> f64 {
    let matched: usize = counts.iter().map(|c| c.matched).sum();
    let gold: usize = counts.iter().map(|c| c.gold_brackets).sum();
    if gold == 0 { 0.0 } else { matched as f64 / gold as f64 }
}

pub fn tag_accuracy(counts: &[BracketCounts]) -> f64 {
    let correct: usize = counts.iter().map(|c| c.correct_tags).sum();
    let leaves: usize = counts.iter().map(|c| c.leaves).sum();
    if leaves == 0 { 0.0 } else { correct as f64 / leaves as f64 }
}

/// Flags structurally detectable failure classes in a raw output string:
/// imbalanced brackets by depth scan, unknown tags by inventory lookup,
/// and added or dropped words by multiset comparison with the input.
pub fn classify_errors(raw_output: &str, input_sentence: &str, tags: &TagInventory) -> ErrorFlags {
    classify_errors_with(raw_output, input_sentence, tags, Glyphs::default())
}

pub fn classify_errors_with(
    raw_output: &str,
    input_sentence: &str,
    tags: &TagInventory,
    glyphs: Glyphs,
) -> ErrorFlags {
    let mut flags = ErrorFlags::default();
    let open = glyphs.open.to_string();
    let close = glyphs.close.to_string();
    let mut depth: i64 = 0;
    let mut after_open = false;
    let mut words: BTreeMap<&str, i64> = BTreeMap::new();
    for part in split_brackets(raw_output, glyphs) {
        if part == open {
            depth += 1;
            after_open = true;
            continue;
        }
        if part == close {
            depth -= 1;
            if depth < 0 {
                flags.imbal = true;
            }
            after_open = false;
            continue;
        }
        if after_open {
            // The token right after an opening glyph is a label.
            if !tags.any_tag_valid(part) {
                flags.invalid_tag = true;
            }
            after_open = false;
        } else {
            *words.entry(part).or_insert(0) += 1;
        }
    }
    if depth != 0 {
        flags.imbal = true;
    }
    for word in input_sentence.split_whitespace() {
        *words.entry(word).or_insert(0) -= 1;
    }
    flags.extra = words.values().any(|&n| n > 0);
    flags.missing = words.values().any(|&n| n < 0);
    flags
}

/// Fraction of outputs accepted by the task validator.
pub fn validity_rate(valid: &[bool]) -> Result<f64, EvalError> {
    if valid.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    Ok(valid.iter().filter(|&&v| v).count() as f64 / valid.len() as f64)
}

/// Whether every leaf tag of the tree is in the word-tag inventory after
/// stripping.
pub fn tree_tags_valid(tree: &ParseTree, tags: &TagInventory) -> bool {
    tree.leaves().iter().all(|(tag, _)| tags.leaf_tag_valid(tag))
}

/// Full bracketing report over raw outputs.
///
/// Every output is classified; outputs that parse into a tree whose
/// yield matches the input count as valid and feed the bracket metrics.
pub fn cp_report(
    raw_outputs: &[impl AsRef<str>],
    inputs: &[impl AsRef<str>],
    gold_trees: &[ParseTree],
    tags: &TagInventory,
    n_resamples: usize,
    seed: u64,
) -> Result<BracketReport, EvalError> {
    cp_report_with(raw_outputs, inputs, gold_trees, tags, Glyphs::default(), n_resamples, seed)
}

pub fn cp_report_with(
    raw_outputs: &[impl AsRef<str>],
    inputs: &[impl AsRef<str>],
    gold_trees: &[ParseTree],
    tags: &TagInventory,
    glyphs: Glyphs,
    n_resamples: usize,
    seed: u64,
) -> Result<BracketReport, EvalError> {
    if raw_outputs.len() != gold_trees.len() || raw_outputs.len() != inputs.len() {
        return Err(EvalError::ShapeMismatch {
            preds: raw_outputs.len(),
            golds: gold_trees.len(),
        });
    }
    if raw_outputs.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    let mut errors = ErrorCounts::default();
    let mut tag_valid = 0usize;
    let mut tree_valid = 0usize;
    let mut scored: Vec<BracketCounts> = Vec::new();
    for ((raw, input), gold) in raw_outputs.iter().zip(inputs).zip(gold_trees) {
        let raw = raw.as_ref();
        let input = input.as_ref();
        let flags = classify_errors_with(raw, input, tags, glyphs);
        errors.add(flags);
        if !flags.invalid_tag {
            tag_valid += 1;
        }
        if let Ok(tree) = crate::cp::parse_linearized_with(raw, tags, glyphs) {
            if tree.yield_words() == input.split_whitespace().collect::<Vec<_>>() {
                tree_valid += 1;
                scored.push(bracket_score(&tree, gold, tags)?);
            }
        }
    }
    let n = raw_outputs.len();
    let metric = |f: fn(&[BracketCounts]) -> f64| -> Result<Option<Metric>, EvalError> {
        if scored.is_empty() {
            Ok(None)
        } else {
            Ok(Some(metric_with_ci(&scored, f, n_resamples, seed)?))
        }
    };
    let precision = metric(bracket_precision)?;
    let recall = metric(bracket_recall)?;
    let f1 = metric(|c| f1_of(bracket_precision(c), bracket_recall(c)))?;
    let tag_acc = metric(tag_accuracy)?;
    Ok(BracketReport {
        precision,
        recall,
        f1,
        tag_accuracy: tag_acc,
        tag_validity: tag_valid as f64 / n as f64,
        tree_validity: tree_valid as f64 / n as f64,
        errors,
        n,
        seed,
    })
}
