//! The input-dependent tree automaton: fixed yield, balanced brackets,
//! inventory labels.
//!
//! For an input sentence `x_1 … x_n`, the automaton accepts bracketed
//! strings whose word subsequence is exactly the input, in order. Its
//! logical states are pairs `(i, j)` — words emitted so far, brackets
//! currently open — refined by a phase:
//!
//! * after an open glyph, a label must follow (`j` just grew);
//! * after a label or a word, either another word (if any remain) or more
//!   structure may follow;
//! * after a close glyph, only further closes or a fresh open.
//!
//! Acceptance is exactly `(n, 0)`. A concrete state is the *set* of such
//! positions that are simultaneously consistent with the prefix — labels
//! walked token-by-token through a trie, words through their tokenization
//! — so shared prefixes between labels, words, and glyph-free tokens never
//! make a walk ambiguous.
//!
//! Every state can reach acceptance: remaining words can always be emitted
//! at the current depth and brackets closed afterwards, which is why the
//! depth cap (`max_depth`) and the `single_root` restriction are enforced
//! by *withholding* the open/close token rather than by trapping the walk
//! afterwards.

use std::collections::BTreeSet;

use super::{CpError, Glyphs, TagInventory};
use crate::catalog::TokenTrie;
use crate::grammar::{GrammarError, Kernel, LazyAutomaton, TokenSet};
use crate::vocab::{TokenId, Tokenizer, VocabError};

/// Options for [`build_sophisticated_automaton`].
#[derive(Debug, Clone)]
pub struct CpOptions {
    /// Maximum simultaneously open brackets (≥ 1).
    pub max_depth: u16,
    /// Forbid closing the only root before the sentence is complete,
    /// ruling out multi-root forests.
    pub single_root: bool,
    pub glyphs: Glyphs,
}

impl Default for CpOptions {
    fn default() -> Self {
        CpOptions { max_depth: 64, single_root: false, glyphs: Glyphs::default() }
    }
}

/// One live position: `i` words emitted, `j` brackets open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum CpAtom {
    /// Expecting an open glyph; opening raises depth to `j + 1`.
    Open { i: u16, j: u16 },
    /// Part-way through a label at depth `j` (the new bracket counted).
    Tag { i: u16, j: u16, node: u32 },
    /// Part-way through input word `i`, `off` of its tokens consumed.
    Word { i: u16, j: u16, off: u16 },
    /// Expecting a close glyph; closing lowers depth to `j - 1`.
    Close { i: u16, j: u16 },
}

/// A determinized set of live positions plus the acceptance flag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CpState {
    atoms: BTreeSet<CpAtom>,
    accepting: bool,
}

enum Point {
    AfterTag(u16, u16),
    AfterWord(u16, u16),
    AfterClose(u16, u16),
    Atom(CpAtom),
}

/// State expansion for the input-dependent tree automaton.
pub struct CpKernel {
    words: Vec<Vec<TokenId>>,
    tag_trie: TokenTrie,
    open: TokenId,
    close: TokenId,
    cap: u16,
    single_root: bool,
    vocab_size: usize,
    eos: TokenId,
}

impl CpKernel {
    fn n(&self) -> u16 {
        self.words.len() as u16
    }

    fn open_ok(&self, i: u16, j: u16) -> bool {
        i < self.n() && j < self.cap && !(self.single_root && j == 0 && i > 0)
    }

    fn close_ok(&self, i: u16, j: u16) -> bool {
        j >= 1 && !(self.single_root && i < self.n() && j == 1)
    }

    fn close(&self, seeds: Vec<Point>) -> CpState {
        let mut atoms = BTreeSet::new();
        let mut accepting = false;
        let mut queue = seeds;
        while let Some(point) = queue.pop() {
            match point {
                Point::AfterTag(i, j) => {
                    debug_assert!(i < self.n(), "a bracket cannot open after the last word");
                    if self.open_ok(i, j) {
                        queue.push(Point::Atom(CpAtom::Open { i, j }));
                    }
                    if i < self.n() {
                        queue.push(Point::Atom(CpAtom::Word { i, j, off: 0 }));
                    }
                }
                Point::AfterWord(i, j) => {
                    if i < self.n() {
                        queue.push(Point::Atom(CpAtom::Word { i, j, off: 0 }));
                    }
                    if self.close_ok(i, j) {
                        queue.push(Point::Atom(CpAtom::Close { i, j }));
                    }
                    if i == self.n() && j == 0 {
                        accepting = true;
                    }
                }
                Point::AfterClose(i, j) => {
                    if self.close_ok(i, j) {
                        queue.push(Point::Atom(CpAtom::Close { i, j }));
                    }
                    if self.open_ok(i, j) {
                        queue.push(Point::Atom(CpAtom::Open { i, j }));
                    }
                    if i == self.n() && j == 0 {
                        accepting = true;
                    }
                }
                Point::Atom(atom) => {
                    atoms.insert(atom);
                }
            }
        }
        CpState { atoms, accepting }
    }
}

impl Kernel for CpKernel {
    type State = CpState;

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos_id(&self) -> TokenId {
        self.eos
    }

    fn start(&self) -> CpState {
        self.close(vec![Point::Atom(CpAtom::Open { i: 0, j: 0 })])
    }

    fn accepting(&self, state: &CpState) -> bool {
        state.accepting
    }

    fn allowed(&self, state: &CpState) -> TokenSet {
        let mut set = TokenSet::new(self.vocab_size);
        for atom in &state.atoms {
            match *atom {
                CpAtom::Open { .. } => {
                    set.insert(self.open);
                }
                CpAtom::Tag { node, .. } => {
                    for t in self.tag_trie.edge_tokens(node) {
                        set.insert(t);
                    }
                }
                CpAtom::Word { i, off, .. } => {
                    set.insert(self.words[i as usize][off as usize]);
                }
                CpAtom::Close { .. } => {
                    set.insert(self.close);
                }
            }
        }
        set
    }

    fn step(&self, state: &CpState, token: TokenId) -> Option<CpState> {
        let mut seeds = Vec::new();
        for atom in &state.atoms {
            match *atom {
                CpAtom::Open { i, j } => {
                    if token == self.open {
                        seeds.push(Point::Atom(CpAtom::Tag {
                            i,
                            j: j + 1,
                            node: TokenTrie::ROOT,
                        }));
                    }
                }
                CpAtom::Tag { i, j, node } => {
                    if let Some(child) = self.tag_trie.child(node, token) {
                        if !self.tag_trie.ids_at(child).is_empty() {
                            seeds.push(Point::AfterTag(i, j));
                        }
                        if self.tag_trie.edge_tokens(child).next().is_some() {
                            seeds.push(Point::Atom(CpAtom::Tag { i, j, node: child }));
                        }
                    }
                }
                CpAtom::Word { i, j, off } => {
                    let w = &self.words[i as usize];
                    if w[off as usize] == token {
                        seeds.push(if off as usize + 1 == w.len() {
                            Point::AfterWord(i + 1, j)
                        } else {
                            Point::Atom(CpAtom::Word { i, j, off: off + 1 })
                        });
                    }
                }
                CpAtom::Close { i, j } => {
                    if token == self.close {
                        seeds.push(Point::AfterClose(i, j - 1));
                    }
                }
            }
        }
        if seeds.is_empty() {
            None
        } else {
            Some(self.close(seeds))
        }
    }
}

/// The lazy input-dependent tree automaton.
pub type CpAutomaton = LazyAutomaton<CpKernel>;

/// Builds the automaton for one input sentence.
///
/// Words must be non-empty and tokenizable; glyphs must be single vocab
/// tokens. Inventory labels that are not expressible in the vocabulary are
/// unreachable and silently dropped; at least one label must survive.
pub fn build_sophisticated_automaton(
    words: &[impl AsRef<str>],
    tags: &TagInventory,
    tok: &dyn Tokenizer,
    options: &CpOptions,
) -> Result<CpAutomaton, CpError> {
    if words.is_empty() {
        return Err(CpError::EmptyInput);
    }
    assert!(words.len() < u16::MAX as usize, "input sentence too long");
    if options.max_depth == 0 {
        return Err(CpError::ZeroDepthCap);
    }
    let eos = tok.vocab().eos_id();
    let glyph_token = |c: char| -> Result<TokenId, CpError> {
        let s = c.to_string();
        let ids = tok
            .tokenize(&s)
            .map_err(|source| CpError::Grammar(GrammarError::UnknownToken {
                terminal: s.clone(),
                source,
            }))?;
        match ids.as_slice() {
            [one] if *one != eos => Ok(*one),
            _ => Err(CpError::Grammar(GrammarError::UnknownToken {
                terminal: s.clone(),
                source: VocabError::UnknownToken(s),
            })),
        }
    };
    let open = glyph_token(options.glyphs.open)?;
    let close = glyph_token(options.glyphs.close)?;
    let mut word_tokens = Vec::with_capacity(words.len());
    for word in words {
        let word = word.as_ref();
        let ids = tok.tokenize(word).map_err(|source| {
            CpError::Grammar(GrammarError::UnknownToken { terminal: word.to_owned(), source })
        })?;
        if ids.is_empty() {
            return Err(CpError::Grammar(GrammarError::UnknownToken {
                terminal: word.to_owned(),
                source: VocabError::UnknownToken(word.to_owned()),
            }));
        }
        if ids.contains(&eos) {
            return Err(CpError::Grammar(GrammarError::ReservedEos(word.to_owned())));
        }
        assert!(ids.len() < u16::MAX as usize);
        word_tokens.push(ids);
    }
    let label_seqs: Vec<(String, Vec<TokenId>)> = tags
        .all_tags()
        .filter_map(|tag| match tok.tokenize(tag) {
            Ok(ids) if !ids.is_empty() && !ids.contains(&eos) => Some((tag.to_owned(), ids)),
            _ => None,
        })
        .collect();
    if label_seqs.is_empty() {
        return Err(CpError::EmptyTags);
    }
    Ok(LazyAutomaton::new(CpKernel {
        words: word_tokens,
        tag_trie: TokenTrie::from_sequences(label_seqs),
        open,
        close,
        cap: options.max_depth,
        single_root: options.single_root,
        vocab_size: tok.vocab().len(),
        eos,
    }))
}

#[cfg(test)]
mod tests {
    use std::collections::{HashSet, VecDeque};
    use std::sync::Arc;

    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::cp::lite::{build_lite_cfg, LiteCfgOptions};
    use crate::grammar::{enumerate_language, ConstraintAutomaton, StateId};
    use crate::vocab::{BracketTokenizer, Vocabulary};

    fn fixture(options: &CpOptions) -> (BracketTokenizer, CpAutomaton) {
        let tok = BracketTokenizer::new(Arc::new(
            Vocabulary::from_corpus(&["[ ] S A B a b"]).unwrap(),
        ));
        let tags =
            TagInventory::from_sets(["S"], Vec::<String>::new(), ["A", "B"], Vec::<String>::new());
        let aut = build_sophisticated_automaton(&["a", "b"], &tags, &tok, options).unwrap();
        (tok, aut)
    }

    #[test]
    fn accepts_trees_over_the_exact_input() {
        let (tok, aut) = fixture(&CpOptions::default());
        for good in [
            "[S [A a] [B b]]",
            "[S a b]",
            "[S [A a b]]",
            "[S [A a] [A [B b]]]",
            "[S a] [B b]", // forest, allowed by default
        ] {
            assert!(aut.accepts(&tok.tokenize(good).unwrap()), "{good}");
        }
        for bad in [
            "",              // no empty output: the input must be reproduced
            "[S a]",         // missing b
            "[S b a]",       // out of order
            "[S a b b]",     // duplicated word
            "[S [A a] b]",   // word directly after a close
            "[S]",           // childless bracket
            "[S [A] a b]",   // childless bracket
            "[S [A a] [B b]", // unclosed
            "[S [A a] [B b]]]",
            "a b",           // no brackets at all
        ] {
            assert!(!aut.accepts(&tok.tokenize(bad).unwrap()), "{bad:?}");
        }
    }

    #[test]
    fn single_root_forbids_forests() {
        let (tok, aut) = fixture(&CpOptions { single_root: true, ..Default::default() });
        assert!(aut.accepts(&tok.tokenize("[S a b]").unwrap()));
        assert!(aut.accepts(&tok.tokenize("[S [A a] [B b]]").unwrap()));
        assert!(!aut.accepts(&tok.tokenize("[S a] [B b]").unwrap()));
        // The close glyph is withheld, not accepted-then-stranded: after
        // "[S a" the only continuation is the next word.
        let close = tok.vocab().id("]").unwrap();
        let b = tok.vocab().id("b").unwrap();
        let mut s = aut.start_state();
        for t in tok.tokenize("[S a").unwrap() {
            s = aut.advance(s, t).unwrap();
        }
        let allowed = aut.allowed_tokens(s);
        assert!(!allowed.contains(close));
        assert_eq!(allowed.to_vec(), vec![b]);
    }

    #[test]
    fn depth_cap_withholds_the_open_glyph() {
        let (tok, aut) = fixture(&CpOptions { max_depth: 2, ..Default::default() });
        assert!(aut.accepts(&tok.tokenize("[S [A a] [B b]]").unwrap()));
        assert!(!aut.accepts(&tok.tokenize("[S [A [B a] b]]").unwrap()));
        let mut s = aut.start_state();
        for t in tok.tokenize("[S [A").unwrap() {
            s = aut.advance(s, t).unwrap();
        }
        let allowed = aut.allowed_tokens(s);
        assert!(!allowed.contains(tok.vocab().id("[").unwrap()));
        assert!(allowed.contains(tok.vocab().id("a").unwrap()));
    }

    #[test]
    fn every_accepted_string_reproduces_the_input() {
        let (tok, aut) = fixture(&CpOptions { max_depth: 3, ..Default::default() });
        let v = tok.vocab();
        let glyphs = [v.id("[").unwrap(), v.id("]").unwrap()];
        let strings = enumerate_language(&aut, 12, 200_000).unwrap();
        assert!(strings.len() > 10);
        for ids in &strings {
            let mut words = Vec::new();
            let mut expect_tag = false;
            for &t in ids {
                if t == glyphs[0] {
                    expect_tag = true;
                } else if t == glyphs[1] {
                    expect_tag = false;
                } else if expect_tag {
                    expect_tag = false; // label position
                } else {
                    words.push(v.token(t).unwrap().to_owned());
                }
            }
            assert_eq!(words, ["a", "b"], "{:?}", tok.detokenize(ids));
        }
    }

    #[test]
    fn multi_token_words_and_labels() {
        // "New York" spans two tokens as a word; "X" and "X Y" are labels
        // sharing a token prefix, so the label walk must keep both live.
        let tok = BracketTokenizer::new(Arc::new(
            Vocabulary::from_corpus(&["[ ] S NP X Y New York sits"]).unwrap(),
        ));
        let tags = TagInventory::from_sets(
            ["S", "X", "X Y"],
            Vec::<String>::new(),
            ["NP"],
            Vec::<String>::new(),
        );
        let aut = build_sophisticated_automaton(
            &["New York", "sits"],
            &tags,
            &tok,
            &CpOptions::default(),
        )
        .unwrap();
        for good in [
            "[S [NP New York] [NP sits]]",
            "[X [NP New York] [X Y sits]]",
            "[X Y [NP New York] [NP sits]]",
            "[X Y New York sits]",
        ] {
            assert!(aut.accepts(&tok.tokenize(good).unwrap()), "{good}");
        }
        for bad in [
            "[S [NP New] York sits]",    // word split across brackets
            "[S [NP York New] sits]",    // tokens of one word out of order
            "[Y New York sits]",         // "Y" alone is not a label
            "[S [NP New York] sits]",    // bare word after a closed sibling
        ] {
            assert!(!aut.accepts(&tok.tokenize(bad).unwrap()), "{bad}");
        }
    }

    #[test]
    fn build_errors() {
        let tok = BracketTokenizer::new(Arc::new(
            Vocabulary::from_corpus(&["[ ] S a"]).unwrap(),
        ));
        let tags =
            TagInventory::from_sets(["S"], Vec::<String>::new(), Vec::<String>::new(), Vec::<String>::new());
        let empty: [&str; 0] = [];
        assert!(matches!(
            build_sophisticated_automaton(&empty, &tags, &tok, &CpOptions::default()),
            Err(CpError::EmptyInput)
        ));
        assert!(matches!(
            build_sophisticated_automaton(&["missing"], &tags, &tok, &CpOptions::default()),
            Err(CpError::Grammar(GrammarError::UnknownToken { .. }))
        ));
        assert!(matches!(
            build_sophisticated_automaton(
                &["a"],
                &tags,
                &tok,
                &CpOptions { max_depth: 0, ..Default::default() }
            ),
            Err(CpError::ZeroDepthCap)
        ));
        let no_tags = TagInventory::from_sets(
            ["ZZZ"],
            Vec::<String>::new(),
            Vec::<String>::new(),
            Vec::<String>::new(),
        );
        assert!(matches!(
            build_sophisticated_automaton(&["a"], &no_tags, &tok, &CpOptions::default()),
            Err(CpError::EmptyTags)
        ));
    }

    /// BFS over `advance` looking for an accepting state.
    fn completable(aut: &CpAutomaton, from: StateId, bound: usize) -> bool {
        let mut seen = HashSet::from([from]);
        let mut queue = VecDeque::from([(from, 0usize)]);
        while let Some((s, d)) = queue.pop_front() {
            if aut.is_accepting(s) {
                return true;
            }
            if d >= bound {
                continue;
            }
            for t in aut.allowed_tokens(s).iter() {
                if t == aut.eos_id() {
                    continue;
                }
                let next = aut.advance(s, t).unwrap();
                if seen.insert(next) {
                    queue.push_back((next, d + 1));
                }
            }
        }
        false
    }

    #[test]
    fn random_walks_never_dead_end() {
        for single_root in [false, true] {
            let (_, aut) = fixture(&CpOptions {
                max_depth: 3,
                single_root,
                ..Default::default()
            });
            let mut rng = StdRng::seed_from_u64(7);
            for _ in 0..100 {
                let mut s = aut.start_state();
                for _ in 0..20 {
                    let allowed: Vec<_> =
                        aut.allowed_tokens(s).iter().filter(|&t| t != aut.eos_id()).collect();
                    if allowed.is_empty() {
                        assert!(aut.is_accepting(s));
                        break;
                    }
                    s = aut.advance(s, allowed[rng.random_range(0..allowed.len())]).unwrap();
                    assert!(
                        completable(&aut, s, 24),
                        "reached a state that cannot finish"
                    );
                }
            }
        }
    }

    #[test]
    fn shape_grammar_strings_with_this_yield_are_accepted() {
        // Every tree the shape grammar admits whose yield is exactly the
        // input is also in the input-dependent language (the converse is
        // false; see below).
        let tok = BracketTokenizer::new(Arc::new(
            Vocabulary::from_corpus(&["[ ] S P N a b"]).unwrap(),
        ));
        let tags =
            TagInventory::from_sets(["S"], ["P"], ["N"], Vec::<String>::new());
        let lite = build_lite_cfg(&tags, &LiteCfgOptions::default(), &tok).unwrap();
        let soph =
            build_sophisticated_automaton(&["a", "b"], &tags, &tok, &CpOptions::default())
                .unwrap();
        let v = tok.vocab();
        let structural: HashSet<TokenId> = ["[", "]", "S", "P", "N"]
            .iter()
            .map(|s| v.id(s).unwrap())
            .collect();
        let mut checked = 0;
        for ids in enumerate_language(&lite, 14, 500_000).unwrap() {
            let words: Vec<&str> = ids
                .iter()
                .filter(|t| !structural.contains(t))
                .map(|&t| v.token(t).unwrap())
                .collect();
            if words == ["a", "b"] {
                assert!(
                    soph.accepts(&ids),
                    "shape-valid tree rejected: {:?}",
                    tok.detokenize(&ids)
                );
                checked += 1;
            }
        }
        assert!(checked > 0, "enumeration bound too small to exercise the property");
        // Counterexample for the converse: several words may share one
        // bracket here, which the shape grammar never allows.
        let flat = tok.tokenize("[S a b]").unwrap();
        assert!(soph.accepts(&flat));
        assert!(!lite.accepts(&flat));
    }
}
