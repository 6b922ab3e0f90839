//! Compilation of right-linear grammars to deterministic automata.
//!
//! Each production must be a (possibly empty) sequence of terminals followed
//! by at most one trailing nonterminal. Terminals are tokenized up front, so
//! a multi-token terminal becomes a chain of single-token edges. The
//! resulting token-level NFA (with ε-edges for empty expansions) is
//! determinized by subset construction; callers wanting the trim invariant
//! finish with [`Dfa::trim`](super::Dfa::trim).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{Dfa, GrammarError, GrammarSpec, StateId, Symbol};
use crate::vocab::{TokenId, Tokenizer};

#[derive(Default)]
struct Nfa {
    epsilon: Vec<Vec<usize>>,
    edges: Vec<BTreeMap<TokenId, BTreeSet<usize>>>,
}

impl Nfa {
    fn add_state(&mut self) -> usize {
        self.epsilon.push(Vec::new());
        self.edges.push(BTreeMap::new());
        self.epsilon.len() - 1
    }

    fn closure(&self, seed: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut set = seed.clone();
        let mut queue: VecDeque<usize> = seed.iter().copied().collect();
        while let Some(s) = queue.pop_front() {
            for &to in &self.epsilon[s] {
                if set.insert(to) {
                    queue.push_back(to);
                }
            }
        }
        set
    }
}

/// Compiles a right-linear grammar into a [`Dfa`] over the tokenizer's
/// vocabulary.
///
/// The automaton accepts exactly the token sequences of strings derivable
/// from the start symbol. It may still contain states that cannot reach
/// acceptance (e.g. from nonterminals with no terminating production);
/// decoders require a subsequent [`Dfa::trim`](super::Dfa::trim).
pub fn compile_regular(spec: &GrammarSpec, tok: &dyn Tokenizer) -> Result<Dfa, GrammarError> {
    spec.validate()?;
    let vocab = tok.vocab();
    let eos = vocab.eos_id();

    let mut nfa = Nfa::default();
    let mut nt_state: HashMap<&str, usize> = HashMap::new();
    // Deterministic state allocation: nonterminals in alphabet order.
    for name in &spec.nonterminals {
        let s = nfa.add_state();
        nt_state.insert(name, s);
    }
    let final_state = nfa.add_state();

    for prod in &spec.productions {
        let mut tokens: Vec<TokenId> = Vec::new();
        let mut target = final_state;
        for (i, sym) in prod.rhs.iter().enumerate() {
            match sym {
                Symbol::Terminal(s) => {
                    let ids = tok.tokenize(s).map_err(|source| GrammarError::UnknownToken {
                        terminal: s.clone(),
                        source,
                    })?;
                    if ids.contains(&eos) {
                        return Err(GrammarError::ReservedEos(s.clone()));
                    }
                    tokens.extend(ids);
                }
                Symbol::Nonterminal(n) => {
                    if i + 1 != prod.rhs.len() {
                        return Err(GrammarError::NotRegular { production: prod.to_string() });
                    }
                    target = nt_state[n.as_str()];
                }
            }
        }
        // Chain the production's tokens from lhs to target.
        let mut cur = nt_state[prod.lhs.as_str()];
        match tokens.split_last() {
            None => nfa.epsilon[cur].push(target),
            Some((&last, body)) => {
                for &t in body {
                    let mid = nfa.add_state();
                    nfa.edges[cur].entry(t).or_default().insert(mid);
                    cur = mid;
                }
                nfa.edges[cur].entry(last).or_default().insert(target);
            }
        }
    }

    // Subset construction with ε-closure.
    let start_set = nfa.closure(&BTreeSet::from([nt_state[spec.start.as_str()]]));
    let mut subset_ids: HashMap<BTreeSet<usize>, StateId> = HashMap::new();
    let mut accepting = Vec::new();
    let mut transitions: Vec<BTreeMap<TokenId, StateId>> = Vec::new();
    let mut order: VecDeque<BTreeSet<usize>> = VecDeque::new();
    subset_ids.insert(start_set.clone(), 0);
    accepting.push(start_set.contains(&final_state));
    transitions.push(BTreeMap::new());
    order.push_back(start_set);
    while let Some(set) = order.pop_front() {
        let id = subset_ids[&set];
        let mut moves: BTreeMap<TokenId, BTreeSet<usize>> = BTreeMap::new();
        for &s in &set {
            for (&t, targets) in &nfa.edges[s] {
                moves.entry(t).or_default().extend(targets.iter().copied());
            }
        }
        for (t, seed) in moves {
            let next = nfa.closure(&seed);
            let next_id = match subset_ids.get(&next) {
                Some(&existing) => existing,
                None => {
                    let fresh = accepting.len() as StateId;
                    subset_ids.insert(next.clone(), fresh);
                    accepting.push(next.contains(&final_state));
                    transitions.push(BTreeMap::new());
                    order.push_back(next);
                    fresh
                }
            };
            transitions[id as usize].insert(t, next_id);
        }
    }

    Dfa::from_parts(0, accepting, transitions, vocab.len(), eos)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::{enumerate_language, expand, nt, t, ConstraintAutomaton, Production};
    use super::*;
    use crate::vocab::{Vocabulary, WhitespaceTokenizer};
    use proptest::prelude::*;

    fn tokenizer(corpus: &str) -> WhitespaceTokenizer {
        WhitespaceTokenizer::new(Arc::new(Vocabulary::from_corpus(&[corpus]).unwrap()))
    }

    fn grammar(prods: Vec<(&str, Vec<Symbol>)>) -> GrammarSpec {
        GrammarSpec::from_productions(
            prods[0].0.to_owned(),
            prods
                .into_iter()
                .map(|(lhs, rhs)| Production { lhs: lhs.to_owned(), rhs })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn a_star_b_language() {
        let tok = tokenizer("a b");
        let spec = grammar(vec![
            ("S", vec![t("a"), nt("S")]),
            ("S", vec![t("b")]),
        ]);
        let dfa = compile_regular(&spec, &tok).unwrap().trim().unwrap();
        assert!(dfa.accepts(&tok.tokenize("a a b").unwrap()));
        assert!(dfa.accepts(&tok.tokenize("b").unwrap()));
        assert!(!dfa.accepts(&tok.tokenize("a").unwrap()));
        assert!(!dfa.accepts(&tok.tokenize("b a").unwrap()));
    }

    #[test]
    fn epsilon_only_grammar_accepts_empty_sequence() {
        let tok = tokenizer("a");
        let spec = grammar(vec![("S", vec![])]);
        let dfa = compile_regular(&spec, &tok).unwrap();
        assert!(dfa.accepts(&[]));
        assert!(!dfa.accepts(&tok.tokenize("a").unwrap()));
        // EOS immediately allowed at the start state.
        assert!(dfa.allowed_tokens(dfa.start_state()).contains(tok.vocab().eos_id()));
    }

    #[test]
    fn multi_token_terminal_becomes_a_chain() {
        let tok = tokenizer("New York in");
        let spec = grammar(vec![("S", vec![t("in"), t("New York")])]);
        let dfa = compile_regular(&spec, &tok).unwrap();
        assert!(dfa.accepts(&tok.tokenize("in New York").unwrap()));
        assert!(!dfa.accepts(&tok.tokenize("in New").unwrap()));
        assert!(!dfa.accepts(&tok.tokenize("in York").unwrap()));
    }

    #[test]
    fn non_right_linear_is_rejected() {
        let tok = tokenizer("a b");
        let spec = grammar(vec![
            ("S", vec![nt("T"), t("a")]),
            ("T", vec![t("b")]),
        ]);
        assert!(matches!(
            compile_regular(&spec, &tok),
            Err(GrammarError::NotRegular { .. })
        ));
    }

    #[test]
    fn unknown_terminal_is_reported() {
        let tok = tokenizer("a");
        let spec = grammar(vec![("S", vec![t("zzz")])]);
        assert!(matches!(
            compile_regular(&spec, &tok),
            Err(GrammarError::UnknownToken { terminal, .. }) if terminal == "zzz"
        ));
    }

    #[test]
    fn eos_terminal_is_reserved() {
        let tok = tokenizer("a");
        let spec = grammar(vec![("S", vec![t("</s>")])]);
        assert!(matches!(compile_regular(&spec, &tok), Err(GrammarError::ReservedEos(_))));
    }

    #[test]
    fn subset_construction_is_deterministic_per_token() {
        // Two productions sharing a first token must merge into one successor.
        let tok = tokenizer("x y z");
        let spec = grammar(vec![
            ("S", vec![t("x"), t("y")]),
            ("S", vec![t("x"), t("z")]),
        ]);
        let dfa = compile_regular(&spec, &tok).unwrap();
        let s = dfa.start_state();
        assert_eq!(dfa.allowed_tokens(s).len(), 1);
        let after_x = dfa.advance(s, tok.vocab().id("x").unwrap()).unwrap();
        assert_eq!(dfa.allowed_tokens(after_x).len(), 2);
        assert!(dfa.accepts(&tok.tokenize("x y").unwrap()));
        assert!(dfa.accepts(&tok.tokenize("x z").unwrap()));
    }

    #[test]
    fn language_agreement_with_expansion_oracle() {
        let tok = tokenizer("a b c");
        // S -> a S | b T | ε ; T -> c | c T (a small lattice of loops).
        let spec = grammar(vec![
            ("S", vec![t("a"), nt("S")]),
            ("S", vec![t("b"), nt("T")]),
            ("S", vec![]),
            ("T", vec![t("c")]),
            ("T", vec![t("c"), nt("T")]),
        ]);
        let dfa = compile_regular(&spec, &tok).unwrap();
        let expected = expand::derivable_strings(&spec, &tok, 6);
        let actual: std::collections::HashSet<_> =
            enumerate_language(&dfa, 6, 10_000).unwrap().into_iter().collect();
        assert_eq!(actual, expected);
    }

    proptest! {
        /// Random right-linear grammars agree with the expansion oracle up
        /// to length 5.
        #[test]
        fn random_right_linear_language_agreement(
            raw_prods in proptest::collection::vec(
                (0u8..3, proptest::collection::vec((0u8..3u8, 0u8..2), 0..3), proptest::option::of(0u8..3)),
                1..8,
            ),
        ) {
            let tok = tokenizer("w0 w1 w2");
            let names = ["S", "T", "U"];
            let mut prods: Vec<Production> = raw_prods
                .into_iter()
                .map(|(lhs, terms, tail)| Production {
                    lhs: names[lhs as usize].to_owned(),
                    rhs: terms
                        .into_iter()
                        .map(|(w, _)| t(format!("w{w}")))
                        .chain(tail.map(|n| nt(names[n as usize])))
                        .collect(),
                })
                .collect();
            // Make sure every referenced nonterminal has an lhs.
            for name in names {
                if prods.iter().all(|p| p.lhs != name) {
                    prods.push(Production { lhs: name.to_owned(), rhs: vec![] });
                }
            }
            let spec = GrammarSpec::from_productions("S", prods).unwrap();
            let dfa = compile_regular(&spec, &tok).unwrap();
            let expected = expand::derivable_strings(&spec, &tok, 5);
            let actual: std::collections::HashSet<_> = enumerate_language(&dfa, 5, 100_000)
                .expect("bounded language")
                .into_iter()
                .collect();
            prop_assert_eq!(actual, expected);
        }
    }
}
