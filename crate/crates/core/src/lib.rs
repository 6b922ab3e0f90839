//! Grammar-constrained decoding with a sketch-then-refine pipeline.
//!
//! The crate is organized around a small number of contracts:
//!
//! * [`vocab`] — token vocabularies and the tokenizer contract. Everything
//!   downstream works on token ids, never on raw strings.
//! * [`grammar`] — grammar descriptions, compilation to constraint automata,
//!   and the [`grammar::ConstraintAutomaton`] trait that decoders consume.
//! * [`catalog`] — entity/relation catalogs and the triplet-extraction
//!   automaton built from them.
//! * [`cp`] — constituency trees, tag inventories, and the two bracketing
//!   grammars (a context-free one and an input-indexed regular one).
//! * [`decoder`] — constrained greedy and beam search over any automaton,
//!   plus the scorer zoo used as a stand-in for a local language model.
//! * [`eval`] — task metrics, bootstrap confidence intervals, and the
//!   structural error taxonomy.
//! * [`pipeline`] — prompt rendering, the blackbox sketcher client, the
//!   refinement step, and the end-to-end sketch-then-refine runner.

pub mod catalog;
pub mod cp;
pub mod decoder;
pub mod eval;
pub mod grammar;
pub mod pipeline;
pub mod vocab;
