//! Lazy context-free recognition via an incremental Earley chart.
//!
//! [`compile_cfg`] lowers a [`GrammarSpec`] into token-level productions
//! (multi-token terminals become chains of single-token symbols, zero-token
//! terminals vanish) and wraps an Earley recognizer as a
//! [`ConstraintAutomaton`](super::ConstraintAutomaton). Automaton states are
//! whole chart prefixes ([`ChartState`]), interned lazily, so the machine is
//! in effect an infinite-state DFA over viable prefixes.
//!
//! The grammar is reduced first: nonterminals that cannot derive a terminal
//! string or cannot be reached from the start are dropped (an empty result
//! is [`GrammarError::EmptyLanguage`]). Reduction is what makes the trim
//! invariant hold by construction — Earley only scans tokens that begin a
//! viable continuation, and in a reduced grammar every viable prefix extends
//! to a full sentence.
//!
//! One engine-level extension: a designated *wildcard terminal* matches any
//! single token outside a configured exclusion list. This models open word
//! classes (e.g. "any token that is not a bracket or a reserved tag")
//! without enumerating the vocabulary in the grammar.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use super::{GrammarError, GrammarSpec, Kernel, LazyAutomaton, Symbol, TokenSet};
use crate::vocab::{TokenId, Tokenizer};

/// Engine options for [`compile_cfg`].
#[derive(Debug, Clone, Default)]
pub struct CfgOptions {
    /// Terminal string treated as an open class: it matches any single token
    /// except EOS and the `wildcard_excluded` tokens.
    pub wildcard_terminal: Option<String>,
    /// Token strings the wildcard must not match. Strings absent from the
    /// vocabulary are ignored.
    pub wildcard_excluded: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CSym {
    Tok(TokenId),
    Nt(u32),
    Wild,
}

#[derive(Debug)]
struct CProd {
    lhs: u32,
    rhs: Vec<CSym>,
}

/// A dotted production with its origin row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Item {
    prod: u32,
    dot: u32,
    origin: u32,
}

#[derive(Debug, PartialEq, Eq, Hash)]
struct Row {
    /// Sorted and deduplicated — the canonical form interning relies on.
    items: Vec<Item>,
}

/// An Earley chart after consuming some token prefix. Equal charts have
/// identical continuation behavior, so the lazy wrapper merges them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChartState {
    rows: Vec<Arc<Row>>,
}

impl ChartState {
    /// Number of tokens consumed so far.
    pub fn len(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Earley state expansion; use via [`compile_cfg`].
pub struct CfgKernel {
    prods: Vec<CProd>,
    by_lhs: Vec<Vec<u32>>,
    /// Index of the augmented production `aug -> start`.
    aug: u32,
    wildcard_allowed: TokenSet,
    vocab_size: usize,
    eos: TokenId,
}

impl CfgKernel {
    fn next_sym(&self, item: Item) -> Option<CSym> {
        self.prods[item.prod as usize].rhs.get(item.dot as usize).copied()
    }

    fn advanced(item: Item) -> Item {
        Item { prod: item.prod, dot: item.dot + 1, origin: item.origin }
    }

    /// Runs prediction and completion to a fixpoint over `seeds`, forming
    /// row `k`. `prior` holds rows `0..k`.
    fn close(&self, seeds: Vec<Item>, k: u32, prior: &[Arc<Row>]) -> Row {
        let mut items: Vec<Item> = Vec::new();
        let mut set: HashSet<Item> = HashSet::new();
        // Nonterminals already completed within this row (origin == k); used
        // to re-advance predictors added after the completion (the classic
        // nullable-completion fixpoint).
        let mut completed_here: HashSet<u32> = HashSet::new();
        for seed in seeds {
            if set.insert(seed) {
                items.push(seed);
            }
        }
        let mut i = 0;
        while i < items.len() {
            let item = items[i];
            i += 1;
            match self.next_sym(item) {
                None => {
                    // Completion of lhs spanning origin..k.
                    let done = self.prods[item.prod as usize].lhs;
                    if item.origin == k {
                        if completed_here.insert(done) {
                            let mut advanced = Vec::new();
                            for j in 0..items.len() {
                                let cand = items[j];
                                if self.next_sym(cand) == Some(CSym::Nt(done)) {
                                    advanced.push(Self::advanced(cand));
                                }
                            }
                            for adv in advanced {
                                if set.insert(adv) {
                                    items.push(adv);
                                }
                            }
                        }
                    } else {
                        for &cand in &prior[item.origin as usize].items {
                            if self.next_sym(cand) == Some(CSym::Nt(done)) {
                                let adv = Self::advanced(cand);
                                if set.insert(adv) {
                                    items.push(adv);
                                }
                            }
                        }
                    }
                }
                Some(CSym::Nt(want)) => {
                    for &p in &self.by_lhs[want as usize] {
                        let predicted = Item { prod: p, dot: 0, origin: k };
                        if set.insert(predicted) {
                            items.push(predicted);
                        }
                    }
                    if completed_here.contains(&want) {
                        let adv = Self::advanced(item);
                        if set.insert(adv) {
                            items.push(adv);
                        }
                    }
                }
                Some(CSym::Tok(_)) | Some(CSym::Wild) => {}
            }
        }
        items.sort_unstable();
        Row { items }
    }

    fn accepting_row(&self, row: &Row) -> bool {
        row.items.contains(&Item { prod: self.aug, dot: 1, origin: 0 })
    }
}

impl Kernel for CfgKernel {
    type State = ChartState;

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos_id(&self) -> TokenId {
        self.eos
    }

    fn start(&self) -> ChartState {
        let row = self.close(vec![Item { prod: self.aug, dot: 0, origin: 0 }], 0, &[]);
        ChartState { rows: vec![Arc::new(row)] }
    }

    fn accepting(&self, state: &ChartState) -> bool {
        self.accepting_row(state.rows.last().expect("chart has at least one row"))
    }

    fn allowed(&self, state: &ChartState) -> TokenSet {
        let mut set = TokenSet::new(self.vocab_size);
        for &item in &state.rows.last().expect("chart has at least one row").items {
            match self.next_sym(item) {
                Some(CSym::Tok(t)) => {
                    set.insert(t);
                }
                Some(CSym::Wild) => set.union_with(&self.wildcard_allowed),
                _ => {}
            }
        }
        set
    }

    fn step(&self, state: &ChartState, token: TokenId) -> Option<ChartState> {
        let last = state.rows.last().expect("chart has at least one row");
        let mut seeds = Vec::new();
        for &item in &last.items {
            let scans = match self.next_sym(item) {
                Some(CSym::Tok(t)) => t == token,
                Some(CSym::Wild) => self.wildcard_allowed.contains(token),
                _ => false,
            };
            if scans {
                seeds.push(Self::advanced(item));
            }
        }
        if seeds.is_empty() {
            return None;
        }
        let k = state.rows.len() as u32;
        let row = self.close(seeds, k, &state.rows);
        let mut rows = state.rows.clone();
        rows.push(Arc::new(row));
        Some(ChartState { rows })
    }
}

/// A lazily materialized CFG constraint automaton.
pub type CfgAutomaton = LazyAutomaton<CfgKernel>;

/// Drops nonterminals that derive no terminal string or are unreachable from
/// the start; returns the surviving productions (as indices into
/// `spec.productions`). Errors when the start symbol itself dies.
fn reduce(spec: &GrammarSpec) -> Result<Vec<usize>, GrammarError> {
    let rhs_nts = |i: usize| {
        spec.productions[i].rhs.iter().filter_map(|s| s.nonterminal())
    };
    // Productive fixpoint.
    let mut productive: BTreeSet<&str> = BTreeSet::new();
    loop {
        let mut changed = false;
        for (i, p) in spec.productions.iter().enumerate() {
            if !productive.contains(p.lhs.as_str())
                && rhs_nts(i).all(|n| productive.contains(n))
            {
                productive.insert(p.lhs.as_str());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !productive.contains(spec.start.as_str()) {
        return Err(GrammarError::EmptyLanguage);
    }
    // Reachability over productions whose rhs is fully productive.
    let usable: Vec<usize> = (0..spec.productions.len())
        .filter(|&i| rhs_nts(i).all(|n| productive.contains(n)))
        .collect();
    let mut reachable: BTreeSet<&str> = BTreeSet::from([spec.start.as_str()]);
    let mut queue = VecDeque::from([spec.start.as_str()]);
    while let Some(name) = queue.pop_front() {
        for &i in &usable {
            if spec.productions[i].lhs == name {
                for n in rhs_nts(i) {
                    if reachable.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
    }
    Ok(usable
        .into_iter()
        .filter(|&i| reachable.contains(spec.productions[i].lhs.as_str()))
        .collect())
}

/// Compiles a context-free grammar into a lazy constraint automaton over the
/// tokenizer's vocabulary.
pub fn compile_cfg(
    spec: &GrammarSpec,
    tok: &dyn Tokenizer,
    options: &CfgOptions,
) -> Result<CfgAutomaton, GrammarError> {
    spec.validate()?;
    let kept = reduce(spec)?;
    let vocab = tok.vocab();
    let eos = vocab.eos_id();

    let mut nt_ids: HashMap<&str, u32> = HashMap::new();
    for i in &kept {
        let lhs = spec.productions[*i].lhs.as_str();
        let next = nt_ids.len() as u32;
        nt_ids.entry(lhs).or_insert(next);
    }
    let aug_nt = nt_ids.len() as u32;

    let mut prods = Vec::new();
    for i in kept {
        let p = &spec.productions[i];
        let mut rhs = Vec::new();
        for sym in &p.rhs {
            match sym {
                Symbol::Nonterminal(n) => rhs.push(CSym::Nt(nt_ids[n.as_str()])),
                Symbol::Terminal(s) if options.wildcard_terminal.as_deref() == Some(s) => {
                    rhs.push(CSym::Wild)
                }
                Symbol::Terminal(s) => {
                    let ids = tok.tokenize(s).map_err(|source| GrammarError::UnknownToken {
                        terminal: s.clone(),
                        source,
                    })?;
                    if ids.contains(&eos) {
                        return Err(GrammarError::ReservedEos(s.clone()));
                    }
                    rhs.extend(ids.into_iter().map(CSym::Tok));
                }
            }
        }
        prods.push(CProd { lhs: nt_ids[p.lhs.as_str()], rhs });
    }
    let aug = prods.len() as u32;
    prods.push(CProd { lhs: aug_nt, rhs: vec![CSym::Nt(nt_ids[spec.start.as_str()])] });

    let mut by_lhs = vec![Vec::new(); aug_nt as usize + 1];
    for (i, p) in prods.iter().enumerate() {
        by_lhs[p.lhs as usize].push(i as u32);
    }

    let mut wildcard_allowed = TokenSet::full(vocab.len());
    wildcard_allowed.remove(eos);
    for s in &options.wildcard_excluded {
        if let Some(id) = vocab.id(s) {
            wildcard_allowed.remove(id);
        }
    }

    Ok(LazyAutomaton::new(CfgKernel {
        prods,
        by_lhs,
        aug,
        wildcard_allowed,
        vocab_size: vocab.len(),
        eos,
    }))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc as StdArc;

    use super::super::{
        ebnf::parse_grammar, enumerate_language, expand, ConstraintAutomaton,
    };
    use super::*;
    use crate::vocab::{Vocabulary, WhitespaceTokenizer};
    use proptest::prelude::*;

    fn tok(corpus: &str) -> WhitespaceTokenizer {
        WhitespaceTokenizer::new(StdArc::new(Vocabulary::from_corpus(&[corpus]).unwrap()))
    }

    fn cfg(text: &str, tokenizer: &WhitespaceTokenizer) -> CfgAutomaton {
        compile_cfg(&parse_grammar(text).unwrap(), tokenizer, &CfgOptions::default()).unwrap()
    }

    #[test]
    fn balanced_brackets() {
        let tk = tok("( )");
        let aut = cfg("s ::= \"(\" s \")\" s | ;", &tk);
        for (text, want) in [
            ("", true),
            ("( )", true),
            ("( ( ) ) ( )", true),
            ("( ( )", false),
            (") (", false),
        ] {
            assert_eq!(aut.accepts(&tk.tokenize(text).unwrap()), want, "{text:?}");
        }
    }

    #[test]
    fn left_recursion_terminates() {
        let tk = tok("a");
        let aut = cfg("s ::= s \"a\" | \"a\" ;", &tk);
        assert!(aut.accepts(&tk.tokenize("a a a a").unwrap()));
        assert!(!aut.accepts(&[]));
    }

    #[test]
    fn nullable_completion_fixpoint() {
        // The classic ε-completion pitfall: S -> A A, A -> ε | "x".
        let tk = tok("x");
        let aut = cfg("s ::= a a ; a ::= | \"x\" ;", &tk);
        assert!(aut.accepts(&[]));
        assert!(aut.accepts(&tk.tokenize("x").unwrap()));
        assert!(aut.accepts(&tk.tokenize("x x").unwrap()));
        assert!(!aut.accepts(&tk.tokenize("x x x").unwrap()));
    }

    #[test]
    fn ambiguity_does_not_duplicate_or_confuse() {
        let tk = tok("a");
        let aut = cfg("s ::= s s | \"a\" ;", &tk);
        for n in 1..=6 {
            assert!(aut.accepts(&vec![0; n]));
        }
        assert!(!aut.accepts(&[]));
    }

    #[test]
    fn multi_token_terminals_scan_token_by_token() {
        let tk = tok("New York Jersey");
        let aut = cfg("s ::= \"New York\" | \"New Jersey\" ;", &tk);
        let new = tk.vocab().id("New").unwrap();
        let start = aut.start_state();
        assert_eq!(aut.allowed_tokens(start).to_vec(), vec![new]);
        let mid = aut.advance(start, new).unwrap();
        let allowed = aut.allowed_tokens(mid);
        assert!(allowed.contains(tk.vocab().id("York").unwrap()));
        assert!(allowed.contains(tk.vocab().id("Jersey").unwrap()));
        assert_eq!(allowed.len(), 2);
        assert!(aut.accepts(&tk.tokenize("New York").unwrap()));
        assert!(!aut.accepts(&tk.tokenize("New").unwrap()));
    }

    #[test]
    fn zero_token_terminals_act_as_epsilon() {
        // A lone-space terminal tokenizes to nothing under whitespace
        // tokenization and simply disappears.
        let tk = tok("a");
        let aut = cfg("s ::= \" \" \"a\" \" \" ;", &tk);
        assert!(aut.accepts(&tk.tokenize("a").unwrap()));
        assert!(!aut.accepts(&[]));
    }

    #[test]
    fn unproductive_branches_are_pruned() {
        // u never terminates, so the "b u" branch must not open a path.
        let tk = tok("a b c");
        let aut = cfg("s ::= \"a\" | \"b\" u ; u ::= \"c\" u ;", &tk);
        let allowed = aut.allowed_tokens(aut.start_state());
        assert!(allowed.contains(tk.vocab().id("a").unwrap()));
        assert!(!allowed.contains(tk.vocab().id("b").unwrap()));
    }

    #[test]
    fn empty_language_is_an_error() {
        let tk = tok("a");
        let spec = parse_grammar("s ::= s \"a\" ;").unwrap();
        assert!(matches!(
            compile_cfg(&spec, &tk, &CfgOptions::default()),
            Err(GrammarError::EmptyLanguage)
        ));
    }

    #[test]
    fn wildcard_matches_open_class() {
        let tk = tok("[ ] S w1 w2");
        let spec = parse_grammar("s ::= \"[\" \"S\" \"xxx\" \"]\" ;").unwrap();
        let options = CfgOptions {
            wildcard_terminal: Some("xxx".into()),
            wildcard_excluded: BTreeSet::from(["[".into(), "]".into(), "S".into()]),
        };
        let aut = compile_cfg(&spec, &tk, &options).unwrap();
        assert!(aut.accepts(&tk.tokenize("[ S w1 ]").unwrap()));
        assert!(aut.accepts(&tk.tokenize("[ S w2 ]").unwrap()));
        assert!(!aut.accepts(&tk.tokenize("[ S ] ]").unwrap()));
        assert!(!aut.accepts(&tk.tokenize("[ S [ ]").unwrap()));
        // After "[ S", the allowed set is every token except brackets, the
        // reserved tag, and EOS.
        let s1 = aut.advance(aut.start_state(), tk.vocab().id("[").unwrap()).unwrap();
        let s2 = aut.advance(s1, tk.vocab().id("S").unwrap()).unwrap();
        let allowed = aut.allowed_tokens(s2);
        assert_eq!(allowed.len(), tk.vocab().len() - 4);
        assert!(!allowed.contains(tk.vocab().eos_id()));
    }

    #[test]
    fn language_agreement_with_expansion_oracle() {
        let tk = tok("( ) x");
        let spec = parse_grammar("s ::= \"(\" s \")\" | \"x\" s | ;").unwrap();
        let aut = compile_cfg(&spec, &tk, &CfgOptions::default()).unwrap();
        let expected = expand::derivable_strings(&spec, &tk, 5);
        let actual: HashSet<_> =
            enumerate_language(&aut, 5, 100_000).unwrap().into_iter().collect();
        assert_eq!(actual, expected);
    }

    #[test]
    fn no_reachable_hard_dead_ends() {
        let tk = tok("( ) x");
        let aut = cfg("s ::= \"(\" s \")\" | \"x\" s | ;", &tk);
        let mut frontier = vec![aut.start_state()];
        for _ in 0..6 {
            let mut next = Vec::new();
            for s in frontier {
                let allowed = aut.allowed_tokens(s);
                assert!(!allowed.is_empty(), "state {s} is a dead end");
                for t in allowed.iter().filter(|&t| t != aut.eos_id()) {
                    next.push(aut.advance(s, t).unwrap());
                }
            }
            frontier = next;
        }
    }

    #[test]
    fn equal_charts_intern_to_one_handle() {
        let tk = tok("a b");
        let aut = cfg("s ::= \"a\" s | \"a\" ;", &tk);
        // Consuming "a" from the start twice must hand back the same state.
        let s1 = aut.advance(aut.start_state(), 0).unwrap();
        let s2 = aut.advance(aut.start_state(), 0).unwrap();
        assert_eq!(s1, s2);
    }

    proptest! {
        /// Incrementality is only memoization: advancing token by token
        /// reaches exactly the chart that batch recognition of the prefix
        /// builds from scratch.
        #[test]
        fn incremental_equals_batch_on_every_prefix(
            tokens in proptest::collection::vec(0u32..3, 0..10),
        ) {
            let tk = tok("( ) x");
            let spec = parse_grammar("s ::= \"(\" s \")\" s | \"x\" s | ;").unwrap();
            let incremental =
                compile_cfg(&spec, &tk, &CfgOptions::default()).unwrap();
            let mut state = incremental.start_state();
            for (i, &t) in tokens.iter().enumerate() {
                state = match incremental.advance(state, t) {
                    Ok(next) => next,
                    Err(_) => break,
                };
                // A fresh automaton fed the same prefix in one go must land
                // on an equal kernel chart.
                let batch = compile_cfg(&spec, &tk, &CfgOptions::default()).unwrap();
                let mut bstate = batch.start_state();
                for &bt in &tokens[..=i] {
                    bstate = batch.advance(bstate, bt).expect("prefix already accepted");
                }
                let chart = incremental.state_snapshot(state).unwrap();
                let bchart = batch.state_snapshot(bstate).unwrap();
                prop_assert_eq!(chart.len(), i + 1);
                prop_assert_eq!(chart, bchart);
            }
        }
    }

    use std::collections::HashSet;
}
