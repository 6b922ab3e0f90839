//! Constrained search over pluggable autoregressive scorers.
//!
//! A [`Scorer`] maps `(context, prefix)` to a log-probability vector over
//! the vocabulary. The search functions combine a scorer with a
//! [`ConstraintAutomaton`](crate::grammar::ConstraintAutomaton):
//!
//! * [`constrained_greedy`] — masked argmax, one token per step;
//! * [`constrained_beam`] — beam search whose expansion is restricted to
//!   the automaton's allowed tokens; finished hypotheses move to a
//!   completed pool and the pool is returned ranked;
//! * [`unconstrained_greedy`] / [`unconstrained_sample`] — baselines with
//!   no automaton, used as a local stand-in for a remote draft generator.
//!
//! Masking is a *restriction of the candidate set*: disallowed tokens are
//! never scored into candidates, so `-∞` entries in scorers cannot leak
//! NaNs into comparisons. Because constraint automata are trim (every
//! state reaches acceptance), masked search cannot dead-end; that property
//! is asserted, not handled.
//!
//! Everything here is deterministic: ties break by lowest token id, then
//! lowest parent-hypothesis index, and final ranking by score, then
//! lexicographic tokens. `beam_size = 1` reproduces greedy token for
//! token.

mod scorers;

pub use scorers::{BigramScorer, ContextCopyScorer, ProductScorer, TableScorer, UniformScorer};

use thiserror::Error;

use crate::grammar::{ConstraintAutomaton, StateId};
use crate::vocab::{TokenId, VocabError};

/// Log-probability source: `score_next(context, prefix)` returns one entry
/// per vocabulary token (finite or `-∞`), for the distribution of the next
/// token after `prefix` given `context`.
pub trait Scorer: Send + Sync {
    fn score_next(&self, context: &[TokenId], prefix: &[TokenId]) -> Vec<f64>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_next(&self, context: &[TokenId], prefix: &[TokenId]) -> Vec<f64> {
        (**self).score_next(context, prefix)
    }
}

/// Errors from decoding and scorer construction.
#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode configuration: {0}")]
    BadConfig(&'static str),
    /// The step budget ran out before the search could finish.
    #[error("no finished output within {max_len} steps")]
    MaxLenExceeded { max_len: usize },
    /// A probability table violates its contract.
    #[error("bad probability table: {0}")]
    BadTable(String),
    /// Sampling from a distribution with zero total mass.
    #[error("all tokens have zero probability")]
    DegenerateDistribution,
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

/// Search settings shared by all decode entry points.
///
/// `max_len` bounds decision steps: emitting the end-of-sequence token
/// consumes a step, so a sequence of `n` tokens needs `max_len ≥ n + 1` to
/// finish cleanly. Ties always break by lowest token id, then lowest
/// parent-hypothesis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam_size: 4, max_len: 256, seed: 0 }
    }
}

impl DecodeConfig {
    fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_size == 0 {
            return Err(DecodeError::BadConfig("beam_size must be at least 1"));
        }
        if self.max_len == 0 {
            return Err(DecodeError::BadConfig("max_len must be at least 1"));
        }
        Ok(())
    }
}

/// One (partial or finished) search path.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, excluding the end-of-sequence token.
    pub tokens: Vec<TokenId>,
    /// Sum of the chosen tokens' log-probabilities, including the
    /// end-of-sequence step once finished.
    pub log_score: f64,
    /// Automaton state after consuming `tokens`.
    pub state: StateId,
    pub finished: bool,
}

/// Picks the allowed token with maximal log-probability each step.
///
/// Stops when the end-of-sequence token wins (returning the tokens before
/// it) or, leniently, when the step budget runs out in an accepting state.
/// Running out in a non-accepting state is [`DecodeError::MaxLenExceeded`].
pub fn constrained_greedy<A: ConstraintAutomaton>(
    scorer: &dyn Scorer,
    automaton: &A,
    context: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Vec<TokenId>, DecodeError> {
    cfg.validate()?;
    let eos = automaton.eos_id();
    let mut state = automaton.start_state();
    let mut tokens: Vec<TokenId> = Vec::new();
    for _ in 0..cfg.max_len {
        let allowed = automaton.allowed_tokens(state);
        let scores = scorer.score_next(context, &tokens);
        debug_assert_eq!(scores.len(), automaton.vocab_size());
        let mut best: Option<(TokenId, f64)> = None;
        for t in allowed.iter() {
            let s = scores[t as usize];
            // Strict > keeps the lowest id on ties (iteration ascends).
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((t, s));
            }
        }
        let (choice, _) = best.expect("trim automaton states always allow a token");
        if choice == eos {
            return Ok(tokens);
        }
        state = automaton
            .advance(state, choice)
            .expect("allowed token must be accepted by advance");
        tokens.push(choice);
    }
    if automaton.is_accepting(state) {
        Ok(tokens)
    } else {
        Err(DecodeError::MaxLenExceeded { max_len: cfg.max_len })
    }
}

/// Beam search restricted to allowed tokens.
///
/// Each step scores every active hypothesis, forms all (hypothesis,
/// allowed token) expansions, and keeps the joint top `beam_size` by
/// (score, token id, parent index). Expansions choosing the
/// end-of-sequence token leave the beam for a completed pool. The pool is
/// returned sorted by score (no length normalization), ties by
/// lexicographic token sequence, truncated to `beam_size`; an empty pool
/// after `max_len` steps is [`DecodeError::MaxLenExceeded`].
pub fn constrained_beam<A: ConstraintAutomaton>(
    scorer: &dyn Scorer,
    automaton: &A,
    context: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError> {
    cfg.validate()?;
    let eos = automaton.eos_id();
    let mut active = vec![Hypothesis {
        tokens: Vec::new(),
        log_score: 0.0,
        state: automaton.start_state(),
        finished: false,
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();
    for _ in 0..cfg.max_len {
        if active.is_empty() {
            break;
        }
        // (log_score, token, parent index) per candidate expansion.
        let mut candidates: Vec<(f64, TokenId, usize)> = Vec::new();
        for (parent, h) in active.iter().enumerate() {
            let scores = scorer.score_next(context, &h.tokens);
            debug_assert_eq!(scores.len(), automaton.vocab_size());
            let allowed = automaton.allowed_tokens(h.state);
            debug_assert!(allowed.len() > 0, "trim automaton states always allow a token");
            for t in allowed.iter() {
                candidates.push((h.log_score + scores[t as usize], t, parent));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        });
        candidates.truncate(cfg.beam_size);
        let mut next = Vec::with_capacity(candidates.len());
        for (score, t, parent) in candidates {
            let h = &active[parent];
            if t == eos {
                pool.push(Hypothesis {
                    tokens: h.tokens.clone(),
                    log_score: score,
                    state: h.state,
                    finished: true,
                });
            } else {
                let state = automaton
                    .advance(h.state, t)
                    .expect("allowed token must be accepted by advance");
                let mut tokens = Vec::with_capacity(h.tokens.len() + 1);
                tokens.extend_from_slice(&h.tokens);
                tokens.push(t);
                next.push(Hypothesis { tokens, log_score: score, state, finished: false });
            }
        }
        active = next;
    }
    if pool.is_empty() {
        return Err(DecodeError::MaxLenExceeded { max_len: cfg.max_len });
    }
    pool.sort_by(|a, b| b.log_score.total_cmp(&a.log_score).then(a.tokens.cmp(&b.tokens)));
    pool.truncate(cfg.beam_size);
    Ok(pool)
}

/// Unmasked argmax decoding to the end-of-sequence token.
pub fn unconstrained_greedy(
    scorer: &dyn Scorer,
    vocab_size: usize,
    eos: TokenId,
    context: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Vec<TokenId>, DecodeError> {
    cfg.validate()?;
    let mut tokens: Vec<TokenId> = Vec::new();
    for _ in 0..cfg.max_len {
        let scores = scorer.score_next(context, &tokens);
        debug_assert_eq!(scores.len(), vocab_size);
        let mut choice = 0u32;
        let mut best = f64::NEG_INFINITY;
        for (t, &s) in scores.iter().enumerate() {
            if s > best {
                best = s;
                choice = t as TokenId;
            }
        }
        if choice == eos {
            return Ok(tokens);
        }
        tokens.push(choice);
    }
    Err(DecodeError::MaxLenExceeded { max_len: cfg.max_len })
}

/// Seeded ancestral sampling to the end-of-sequence token.
///
/// Probabilities are the softmax of the scorer's outputs; `-∞` entries get
/// zero mass. Identical seeds give identical samples. A sample that has
/// not ended after `max_len` draws is returned truncated, the way a
/// completions API truncates at its token budget, rather than erroring.
pub fn unconstrained_sample(
    scorer: &dyn Scorer,
    vocab_size: usize,
    eos: TokenId,
    context: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Vec<TokenId>, DecodeError> {
    use rand::Rng;
    use rand::SeedableRng;

    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tokens: Vec<TokenId> = Vec::new();
    for _ in 0..cfg.max_len {
        let scores = scorer.score_next(context, &tokens);
        debug_assert_eq!(scores.len(), vocab_size);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(DecodeError::DegenerateDistribution);
        }
        let weights: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut draw = rng.random_range(0.0..total);
        let mut choice = vocab_size as TokenId - 1;
        for (t, &w) in weights.iter().enumerate() {
            if draw < w {
                choice = t as TokenId;
                break;
            }
            draw -= w;
        }
        if choice == eos {
            return Ok(tokens);
        }
        tokens.push(choice);
    }
    // Out of budget: hand back the truncated draft instead of failing, so
    // callers that treat this as a remote text generator see the same
    // contract a length-capped API gives them.
    Ok(tokens)
}
