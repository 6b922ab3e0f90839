//! Built-in [`Scorer`] implementations.
//!
//! These are small, fully deterministic stand-ins for a neural language
//! model: a prefix-keyed probability table, a uniform distribution, an
//! add-k smoothed bigram chain, and a context-copying scorer that prefers
//! continuing token runs found in the conditioning context.

use std::collections::{BTreeMap, HashMap};

use super::{DecodeError, Scorer};
use crate::vocab::{TokenId, Tokenizer};

/// Exact next-token distributions keyed by prefix.
///
/// Rows are probabilities (not logs). Construction rejects negative
/// entries, and rows whose sum exceeds `1 + 1e-6` unless the scorer is
/// declared unnormalized. Prefixes without a row fall back to the uniform
/// distribution.
#[derive(Debug, Clone)]
pub struct TableScorer {
    vocab_size: usize,
    rows: HashMap<Vec<TokenId>, Vec<f64>>,
    uniform: f64,
    unnormalized: bool,
}

impl TableScorer {
    pub fn new(
        vocab_size: usize,
        rows: impl IntoIterator<Item = (Vec<TokenId>, Vec<f64>)>,
        unnormalized: bool,
    ) -> Result<Self, DecodeError> {
        assert!(vocab_size > 0, "vocabulary must be non-empty");
        let mut table = HashMap::new();
        for (prefix, probs) in rows {
            if probs.len() != vocab_size {
                return Err(DecodeError::BadTable(format!(
                    "row for prefix {prefix:?} has {} entries, expected {vocab_size}",
                    probs.len()
                )));
            }
            let mut sum = 0.0;
            for &p in &probs {
                if !p.is_finite() || p < 0.0 {
                    return Err(DecodeError::BadTable(format!(
                        "probability {p} for prefix {prefix:?} is not a finite non-negative number"
                    )));
                }
                sum += p;
            }
            if !unnormalized && sum > 1.0 + 1e-6 {
                return Err(DecodeError::BadTable(format!(
                    "row for prefix {prefix:?} sums to {sum}, exceeding 1"
                )));
            }
            table.insert(prefix, probs.iter().map(|&p| p.ln()).collect());
        }
        Ok(TableScorer {
            vocab_size,
            rows: table,
            uniform: -(vocab_size as f64).ln(),
            unnormalized,
        })
    }

    /// Builds a table directly from log-probabilities, skipping the
    /// probability checks. Panics on rows of the wrong length or NaNs.
    pub fn from_log_probs(vocab_size: usize, rows: BTreeMap<Vec<TokenId>, Vec<f64>>) -> Self {
        assert!(vocab_size > 0, "vocabulary must be non-empty");
        for (prefix, scores) in &rows {
            assert_eq!(scores.len(), vocab_size, "bad row length for prefix {prefix:?}");
            assert!(scores.iter().all(|s| !s.is_nan()), "NaN score for prefix {prefix:?}");
        }
        TableScorer {
            vocab_size,
            rows: rows.into_iter().collect(),
            uniform: -(vocab_size as f64).ln(),
            unnormalized: true,
        }
    }

    /// Whether rows were allowed to sum past one at construction.
    pub fn is_unnormalized(&self) -> bool {
        self.unnormalized
    }
}

impl Scorer for TableScorer {
    fn score_next(&self, _context: &[TokenId], prefix: &[TokenId]) -> Vec<f64> {
        match self.rows.get(prefix) {
            Some(row) => row.clone(),
            None => vec![self.uniform; self.vocab_size],
        }
    }
}

/// The uniform distribution over the whole vocabulary, every step.
#[derive(Debug, Clone, Copy)]
pub struct UniformScorer {
    vocab_size: usize,
}

impl UniformScorer {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size > 0, "vocabulary must be non-empty");
        UniformScorer { vocab_size }
    }
}

impl Scorer for UniformScorer {
    fn score_next(&self, _context: &[TokenId], _prefix: &[TokenId]) -> Vec<f64> {
        vec![-(self.vocab_size as f64).ln(); self.vocab_size]
    }
}

/// Add-k smoothed bigram chain with the end-of-sequence token as the
/// sentence boundary on both sides.
///
/// The conditioning token is the last of `prefix`, or the boundary for an
/// empty prefix; the context is ignored — this scorer models output
/// sentences only, so a conditioning context that happens to end in an
/// end-friendly token cannot make the empty output dominate. Zero
/// smoothing leaves unseen transitions at probability zero (`-∞` score).
#[derive(Debug, Clone)]
pub struct BigramScorer {
    vocab_size: usize,
    eos: TokenId,
    smoothing: f64,
    /// `counts[prev][next]`, with `prev`/`next` ranging over the whole
    /// vocabulary including the boundary token.
    counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
}

impl BigramScorer {
    pub fn train(
        sequences: &[Vec<TokenId>],
        vocab_size: usize,
        eos: TokenId,
        smoothing: f64,
    ) -> Result<Self, DecodeError> {
        assert!(vocab_size > 0, "vocabulary must be non-empty");
        assert!((eos as usize) < vocab_size, "boundary token out of range");
        if !smoothing.is_finite() || smoothing < 0.0 {
            return Err(DecodeError::BadTable(format!(
                "smoothing {smoothing} is not a finite non-negative number"
            )));
        }
        let mut counts = vec![vec![0u64; vocab_size]; vocab_size];
        let mut totals = vec![0u64; vocab_size];
        for seq in sequences {
            let mut prev = eos;
            for &t in seq {
                assert!((t as usize) < vocab_size, "token {t} out of range");
                counts[prev as usize][t as usize] += 1;
                totals[prev as usize] += 1;
                prev = t;
            }
            counts[prev as usize][eos as usize] += 1;
            totals[prev as usize] += 1;
        }
        Ok(BigramScorer { vocab_size, eos, smoothing, counts, totals })
    }

    /// Trains on whitespace-style text via the given tokenizer, one
    /// sentence per string.
    pub fn from_text(
        texts: &[impl AsRef<str>],
        tokenizer: &dyn Tokenizer,
        smoothing: f64,
    ) -> Result<Self, DecodeError> {
        let mut sequences = Vec::with_capacity(texts.len());
        for text in texts {
            sequences.push(tokenizer.tokenize(text.as_ref())?);
        }
        Self::train(
            &sequences,
            tokenizer.vocab().len(),
            tokenizer.vocab().eos_id(),
            smoothing,
        )
    }
}

impl Scorer for BigramScorer {
    fn score_next(&self, _context: &[TokenId], prefix: &[TokenId]) -> Vec<f64> {
        let prev = prefix.last().copied().unwrap_or(self.eos) as usize;
        let denom = self.totals[prev] as f64 + self.smoothing * self.vocab_size as f64;
        self.counts[prev]
            .iter()
            .map(|&c| {
                if denom == 0.0 {
                    // Unseen conditioning token without smoothing: no
                    // information, fall back to uniform.
                    -(self.vocab_size as f64).ln()
                } else {
                    ((c as f64 + self.smoothing) / denom).ln()
                }
            })
            .collect()
    }
}

/// Prefers continuing the longest token run copied from the context.
///
/// Each step finds the longest suffix of `prefix` (capped at
/// `max_suffix`) that occurs in `context` and puts most of the mass on
/// the tokens observed immediately after its occurrences; an occurrence
/// ending at the end of the context votes for the end-of-sequence token
/// with weight `end_weight` (default 1). The empty suffix always matches,
/// so an empty prefix yields the context's unigram distribution. A small
/// `floor` keeps every token reachable.
#[derive(Debug, Clone, Copy)]
pub struct ContextCopyScorer {
    vocab_size: usize,
    eos: TokenId,
    max_suffix: usize,
    floor: f64,
    end_weight: f64,
}

impl ContextCopyScorer {
    pub fn new(
        vocab_size: usize,
        eos: TokenId,
        max_suffix: usize,
        floor: f64,
    ) -> Result<Self, DecodeError> {
        assert!(vocab_size > 0, "vocabulary must be non-empty");
        assert!((eos as usize) < vocab_size, "end token out of range");
        if !floor.is_finite() || floor < 0.0 {
            return Err(DecodeError::BadTable(format!(
                "floor {floor} is not a finite non-negative number"
            )));
        }
        Ok(ContextCopyScorer { vocab_size, eos, max_suffix, floor, end_weight: 1.0 })
    }

    /// Scales the end-of-context vote. Values below 1 discourage stopping
    /// just because some copied run happens to sit at the end of the
    /// context, which matters when the context embeds a draft mid-prompt.
    pub fn with_end_weight(mut self, end_weight: f64) -> Self {
        assert!(end_weight.is_finite() && end_weight >= 0.0, "bad end weight");
        self.end_weight = end_weight;
        self
    }
}

impl Scorer for ContextCopyScorer {
    fn score_next(&self, context: &[TokenId], prefix: &[TokenId]) -> Vec<f64> {
        let mut weights = vec![self.floor; self.vocab_size];
        let cap = self.max_suffix.min(prefix.len());
        // The empty suffix (len 0) matches everywhere, so the loop always
        // finds at least the end-of-context vote.
        for len in (0..=cap).rev() {
            let suffix = &prefix[prefix.len() - len..];
            let mut found = false;
            for start in 0..=(context.len() - len.min(context.len())) {
                if start + len > context.len() || &context[start..start + len] != suffix {
                    continue;
                }
                found = true;
                if start + len < context.len() {
                    weights[context[start + len] as usize] += 1.0;
                } else {
                    weights[self.eos as usize] += self.end_weight;
                }
            }
            if found {
                break;
            }
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            // Degenerate configuration (zero floor and end weight, nothing
            // to copy): fall back to uniform rather than emit NaNs.
            return vec![-(self.vocab_size as f64).ln(); self.vocab_size];
        }
        weights.iter().map(|&w| (w / total).ln()).collect()
    }
}

/// Log-linear combination of scorers: weighted sums of log-probabilities
/// (a product of experts, unnormalized).
///
/// Useful to marry a structure model with a content model — e.g. a bigram
/// over output shapes with a context copier choosing the entities. The
/// result is a valid scorer (finite or `-∞` per token) but not a
/// normalized distribution; masked search doesn't need one.
pub struct ProductScorer {
    components: Vec<(f64, Box<dyn Scorer>)>,
}

impl ProductScorer {
    pub fn new(components: Vec<(f64, Box<dyn Scorer>)>) -> Self {
        assert!(!components.is_empty(), "need at least one component");
        assert!(
            components.iter().all(|(w, _)| w.is_finite() && *w > 0.0),
            "weights must be finite and positive"
        );
        ProductScorer { components }
    }
}

impl Scorer for ProductScorer {
    fn score_next(&self, context: &[TokenId], prefix: &[TokenId]) -> Vec<f64> {
        let mut out: Option<Vec<f64>> = None;
        for (weight, scorer) in &self.components {
            let scores = scorer.score_next(context, prefix);
            match &mut out {
                None => out = Some(scores.iter().map(|s| weight * s).collect()),
                Some(acc) => {
                    assert_eq!(acc.len(), scores.len(), "components disagree on vocabulary");
                    for (a, s) in acc.iter_mut().zip(scores) {
                        *a += weight * s;
                    }
                }
            }
        }
        out.expect("at least one component")
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::DecodeError;
    use super::*;
    use crate::vocab::{Tokenizer, Vocabulary, WhitespaceTokenizer};

    fn tok(corpus: &str) -> WhitespaceTokenizer {
        WhitespaceTokenizer::new(Arc::new(Vocabulary::from_corpus(&[corpus]).unwrap()))
    }

    #[test]
    fn table_rejects_bad_rows() {
        let short = TableScorer::new(4, vec![(vec![], vec![0.5, 0.5])], false);
        assert!(matches!(short, Err(DecodeError::BadTable(_))));
        let negative = TableScorer::new(4, vec![(vec![], vec![0.5, -0.1, 0.3, 0.3])], false);
        assert!(matches!(negative, Err(DecodeError::BadTable(_))));
        let heavy = TableScorer::new(4, vec![(vec![], vec![0.5, 0.5, 0.3, 0.2])], false);
        assert!(matches!(heavy, Err(DecodeError::BadTable(_))));
        // The same row passes once declared unnormalized.
        let flagged = TableScorer::new(4, vec![(vec![], vec![0.5, 0.5, 0.3, 0.2])], true);
        assert!(flagged.is_ok_and(|s| s.is_unnormalized()));
        // Deficient rows (summing under one) are fine either way.
        assert!(TableScorer::new(4, vec![(vec![], vec![0.1, 0.1, 0.1, 0.1])], false).is_ok());
    }

    #[test]
    fn table_scores_and_uniform_fallback() {
        let scorer =
            TableScorer::new(4, vec![(vec![0], vec![0.0, 0.25, 0.25, 0.5])], false).unwrap();
        let row = scorer.score_next(&[], &[0]);
        assert_eq!(row[0], f64::NEG_INFINITY);
        assert!((row[1] - 0.25f64.ln()).abs() < 1e-12);
        assert!((row[3] - 0.5f64.ln()).abs() < 1e-12);
        let fallback = scorer.score_next(&[], &[2, 2]);
        assert!(fallback.iter().all(|&s| (s - 0.25f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn uniform_scorer_value() {
        let row = UniformScorer::new(4).score_next(&[], &[1, 2]);
        assert_eq!(row.len(), 4);
        assert!(row.iter().all(|&s| (s - 0.25f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn bigram_concentrates_as_smoothing_vanishes() {
        let tok = tok("a b c");
        let a = tok.vocab().id("a").unwrap();
        let b = tok.vocab().id("b").unwrap();
        // "a" is always followed by "b" in training.
        for k in [1.0, 0.1, 1e-6] {
            let scorer = BigramScorer::from_text(&["a b", "a b", "c a b"], &tok, k).unwrap();
            let row = scorer.score_next(&[], &[a]);
            let p_b = row[b as usize].exp();
            assert!(p_b > 1.0 - 4.0 * k, "k={k}: P(b|a)={p_b}");
        }
        let exact = BigramScorer::from_text(&["a b", "a b", "c a b"], &tok, 0.0).unwrap();
        let row = exact.score_next(&[], &[a]);
        assert_eq!(row[b as usize], 0.0);
        assert_eq!(row[a as usize], f64::NEG_INFINITY);
    }

    #[test]
    fn bigram_boundary_behaviour() {
        let tok = tok("a b");
        let a = tok.vocab().id("a").unwrap();
        let eos = tok.vocab().eos_id();
        let scorer = BigramScorer::from_text(&["a b", "a"], &tok, 0.0).unwrap();
        // Sentence starts: both sentences start with "a".
        let start = scorer.score_next(&[], &[]);
        assert_eq!(start[a as usize], 0.0);
        // After "a": one continuation to "b", one sentence end.
        let after_a = scorer.score_next(&[], &[a]);
        assert!((after_a[eos as usize].exp() - 0.5).abs() < 1e-12);
        // The context never shifts the conditioning token.
        let ctx = scorer.score_next(&[a], &[]);
        assert_eq!(ctx, start);
        // Unseen conditioning token with zero smoothing: uniform fallback.
        let unseen_prev = tok.vocab().id("b").unwrap();
        let _ = scorer.score_next(&[], &[unseen_prev]);
    }

    #[test]
    fn bigram_rejects_negative_smoothing() {
        let tok = tok("a");
        let bad = BigramScorer::from_text(&["a"], &tok, -0.5);
        assert!(matches!(bad, Err(DecodeError::BadTable(_))));
    }

    #[test]
    fn copy_scorer_continues_runs() {
        let tok = tok("x a b c");
        let ids = |s: &str| tok.tokenize(s).unwrap();
        let scorer =
            ContextCopyScorer::new(tok.vocab().len(), tok.vocab().eos_id(), 8, 1e-4).unwrap();
        let context = ids("x a b c");
        // After copying "a", the context suggests "b" overwhelmingly.
        let row = scorer.score_next(&context, &ids("a"));
        let best = row
            .iter()
            .enumerate()
            .max_by(|l, r| l.1.total_cmp(r.1))
            .map(|(t, _)| t as TokenId)
            .unwrap();
        assert_eq!(best, tok.vocab().id("b").unwrap());
        // A prefix aligned with the end of the context votes for EOS.
        let row = scorer.score_next(&context, &ids("b c"));
        let best = row
            .iter()
            .enumerate()
            .max_by(|l, r| l.1.total_cmp(r.1))
            .map(|(t, _)| t as TokenId)
            .unwrap();
        assert_eq!(best, tok.vocab().eos_id());
        // Empty prefix: unigram over the context (plus the end vote), so a
        // repeated token outweighs a single one.
        let row = scorer.score_next(&ids("x a x b"), &[]);
        assert!(
            row[tok.vocab().id("x").unwrap() as usize]
                > row[tok.vocab().id("a").unwrap() as usize]
        );
        // Empty context: only the end vote, floor elsewhere.
        let row = scorer.score_next(&[], &ids("a"));
        let best = row
            .iter()
            .enumerate()
            .max_by(|l, r| l.1.total_cmp(r.1))
            .map(|(t, _)| t as TokenId)
            .unwrap();
        assert_eq!(best, tok.vocab().eos_id());
    }

    #[test]
    fn copy_scorer_end_weight_damps_stopping() {
        let tok = tok("a b");
        let ids = |s: &str| tok.tokenize(s).unwrap();
        let context = ids("a b a");
        let eos = tok.vocab().eos_id();
        // "a" is followed by "b" once and by the context end once. With
        // the default end weight they tie; damped, "b" wins.
        let neutral =
            ContextCopyScorer::new(tok.vocab().len(), eos, 8, 1e-4).unwrap();
        let row = neutral.score_next(&context, &ids("a"));
        assert_eq!(row[eos as usize], row[tok.vocab().id("b").unwrap() as usize]);
        let damped = ContextCopyScorer::new(tok.vocab().len(), eos, 8, 1e-4)
            .unwrap()
            .with_end_weight(0.25);
        let row = damped.score_next(&context, &ids("a"));
        assert!(row[tok.vocab().id("b").unwrap() as usize] > row[eos as usize]);
    }

    #[test]
    fn product_scorer_is_log_linear() {
        let table =
            TableScorer::new(3, vec![(vec![], vec![0.0, 0.25, 0.75])], false).unwrap();
        let uniform = UniformScorer::new(3);
        let product = ProductScorer::new(vec![
            (2.0, Box::new(table.clone()) as Box<dyn Scorer>),
            (1.0, Box::new(uniform)),
        ]);
        let row = product.score_next(&[], &[]);
        let expect_1 = 2.0 * 0.25f64.ln() + (1.0f64 / 3.0).ln();
        assert!((row[1] - expect_1).abs() < 1e-12);
        // -∞ in any component vetoes the token outright.
        assert_eq!(row[0], f64::NEG_INFINITY);
    }

    #[test]
    fn copy_scorer_prefers_longer_matches() {
        let tok = tok("a b c d");
        let ids = |s: &str| tok.tokenize(s).unwrap();
        let scorer =
            ContextCopyScorer::new(tok.vocab().len(), tok.vocab().eos_id(), 8, 0.0).unwrap();
        // "b" occurs twice with different followers; "a b" disambiguates.
        let context = ids("a b c d b d");
        let row = scorer.score_next(&context, &ids("a b"));
        assert!((row[tok.vocab().id("c").unwrap() as usize]).exp() > 0.99);
    }
}
