//! The constraint-automaton contract shared by every grammar backend.
//!
//! An automaton walks token by token through the strings of a formal
//! language. States are opaque `u32` handles; lazy backends materialize
//! states on demand behind the handles ([`LazyAutomaton`]), while
//! right-linear grammars compile to an explicit table-driven [`Dfa`].
//!
//! EOS is modeled as a real transition: `allowed_tokens` includes the EOS id
//! exactly at accepting states, and advancing on EOS moves to a distinguished
//! sink ([`EOS_SINK`]) with no outgoing edges. Decoders stop at EOS, so the
//! sink is never expanded further.
//!
//! All backends intended for decoding maintain the trim invariant: every
//! reachable (pre-EOS) state lies on a path to an accepting state, so masked
//! search can never dead-end. [`Dfa::trim`] establishes it for explicit
//! tables; the lazy backends guarantee it by construction.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::hash::Hash;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::GrammarError;
use crate::vocab::TokenId;

/// Opaque handle to an automaton state.
pub type StateId = u32;

/// Handle of the distinguished post-EOS sink state.
pub const EOS_SINK: StateId = StateId::MAX;

/// A set of token ids, stored as a fixed-capacity bit vector.
///
/// Iteration order is ascending token id, which downstream code relies on
/// for deterministic tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    words: Vec<u64>,
    capacity: usize,
    len: usize,
}

impl TokenSet {
    /// An empty set able to hold ids `0..capacity`.
    pub fn new(capacity: usize) -> Self {
        TokenSet { words: vec![0; capacity.div_ceil(64)], capacity, len: 0 }
    }

    /// A set containing every id in `0..capacity`.
    pub fn full(capacity: usize) -> Self {
        let mut set = Self::new(capacity);
        for id in 0..capacity {
            set.insert(id as TokenId);
        }
        set
    }

    /// Builds a set from an iterator of ids.
    pub fn from_tokens(capacity: usize, tokens: impl IntoIterator<Item = TokenId>) -> Self {
        let mut set = Self::new(capacity);
        for t in tokens {
            set.insert(t);
        }
        set
    }

    /// Inserts `token`; returns true if it was newly added.
    pub fn insert(&mut self, token: TokenId) -> bool {
        let idx = token as usize;
        assert!(idx < self.capacity, "token id {token} out of capacity {}", self.capacity);
        let (word, bit) = (idx / 64, idx % 64);
        let mask = 1u64 << bit;
        let fresh = self.words[word] & mask == 0;
        self.words[word] |= mask;
        self.len += fresh as usize;
        fresh
    }

    /// Removes `token`; returns true if it was present.
    pub fn remove(&mut self, token: TokenId) -> bool {
        let idx = token as usize;
        if idx >= self.capacity {
            return false;
        }
        let (word, bit) = (idx / 64, idx % 64);
        let mask = 1u64 << bit;
        let present = self.words[word] & mask != 0;
        self.words[word] &= !mask;
        self.len -= present as usize;
        present
    }

    pub fn contains(&self, token: TokenId) -> bool {
        let idx = token as usize;
        idx < self.capacity && self.words[idx / 64] & (1 << (idx % 64)) != 0
    }

    /// Adds every element of `other`.
    pub fn union_with(&mut self, other: &TokenSet) {
        assert_eq!(self.capacity, other.capacity, "capacity mismatch");
        let mut len = 0usize;
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
            len += w.count_ones() as usize;
        }
        self.len = len;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Iterates the contained ids in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros();
                bits &= bits - 1;
                Some((wi * 64) as TokenId + b)
            })
        })
    }

    pub fn to_vec(&self) -> Vec<TokenId> {
        self.iter().collect()
    }
}

/// Token-by-token membership in a formal language.
///
/// Contract, for all reachable states `s`:
/// * `allowed_tokens(s)` contains the EOS id iff `is_accepting(s)`;
/// * `advance(s, t)` succeeds exactly for `t ∈ allowed_tokens(s)`;
/// * advancing on EOS (from an accepting state) yields [`EOS_SINK`], which
///   is non-accepting and allows nothing;
/// * trim: some sequence of `advance` calls leads from `s` to an accepting
///   state.
pub trait ConstraintAutomaton: Send + Sync {
    /// Vocabulary size; `allowed_tokens` sets have this capacity.
    fn vocab_size(&self) -> usize;

    /// Id of the EOS token in the underlying vocabulary.
    fn eos_id(&self) -> TokenId;

    /// Handle of the initial state.
    fn start_state(&self) -> StateId;

    fn is_accepting(&self, state: StateId) -> bool;

    /// The exact set of ids accepted by `advance` from `state`.
    fn allowed_tokens(&self, state: StateId) -> TokenSet;

    /// Consumes one token. Fails with [`GrammarError::TokenRejected`] for
    /// tokens outside `allowed_tokens(state)`.
    fn advance(&self, state: StateId, token: TokenId) -> Result<StateId, GrammarError>;

    /// Runs the whole sequence from the start state; true iff it ends in an
    /// accepting state. The sequence must not contain EOS.
    fn accepts(&self, tokens: &[TokenId]) -> bool {
        let mut state = self.start_state();
        for &t in tokens {
            match self.advance(state, t) {
                Ok(next) => state = next,
                Err(_) => return false,
            }
        }
        self.is_accepting(state)
    }
}

impl<A: ConstraintAutomaton + ?Sized> ConstraintAutomaton for &A {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn eos_id(&self) -> TokenId {
        (**self).eos_id()
    }
    fn start_state(&self) -> StateId {
        (**self).start_state()
    }
    fn is_accepting(&self, state: StateId) -> bool {
        (**self).is_accepting(state)
    }
    fn allowed_tokens(&self, state: StateId) -> TokenSet {
        (**self).allowed_tokens(state)
    }
    fn advance(&self, state: StateId, token: TokenId) -> Result<StateId, GrammarError> {
        (**self).advance(state, token)
    }
}

/// Enumerates every accepted string of length ≤ `max_len`, breadth-first,
/// in (length, token-id-lexicographic) order. Returns `None` once more than
/// `limit` strings have been found. Works on lazy automata too, since the
/// walk is bounded by `max_len`.
pub fn enumerate_language(
    automaton: &(impl ConstraintAutomaton + ?Sized),
    max_len: usize,
    limit: usize,
) -> Option<Vec<Vec<TokenId>>> {
    let eos = automaton.eos_id();
    let mut out = Vec::new();
    let mut queue: VecDeque<(StateId, Vec<TokenId>)> = VecDeque::new();
    queue.push_back((automaton.start_state(), Vec::new()));
    while let Some((state, tokens)) = queue.pop_front() {
        if automaton.is_accepting(state) {
            if out.len() == limit {
                return None;
            }
            out.push(tokens.clone());
        }
        if tokens.len() == max_len {
            continue;
        }
        for t in automaton.allowed_tokens(state).iter() {
            if t == eos {
                continue;
            }
            let next = automaton.advance(state, t).expect("allowed token must advance");
            let mut ext = tokens.clone();
            ext.push(t);
            queue.push_back((next, ext));
        }
    }
    Some(out)
}

/// A materialized deterministic automaton over token ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dfa {
    start: StateId,
    accepting: Vec<bool>,
    /// Outgoing edges per state, keyed by token id. EOS never appears here.
    transitions: Vec<BTreeMap<TokenId, StateId>>,
    vocab_size: usize,
    eos: TokenId,
}

impl Dfa {
    /// Builds a DFA from explicit tables, validating shape: equal table
    /// lengths, in-range start and edge targets, token ids below
    /// `vocab_size`, and no edges on the EOS id.
    pub fn from_parts(
        start: StateId,
        accepting: Vec<bool>,
        transitions: Vec<BTreeMap<TokenId, StateId>>,
        vocab_size: usize,
        eos: TokenId,
    ) -> Result<Self, GrammarError> {
        let n = accepting.len();
        let fail = |msg: String| Err(GrammarError::MalformedAutomaton(msg));
        if transitions.len() != n {
            return fail(format!("{} accepting flags vs {} transition rows", n, transitions.len()));
        }
        if n == 0 || start as usize >= n {
            return fail(format!("start state {start} out of range for {n} states"));
        }
        if (eos as usize) >= vocab_size {
            return fail(format!("eos id {eos} outside vocabulary of {vocab_size}"));
        }
        for (from, row) in transitions.iter().enumerate() {
            for (&tok, &to) in row {
                if tok == eos {
                    return fail(format!("state {from} has an explicit edge on the EOS id"));
                }
                if tok as usize >= vocab_size {
                    return fail(format!("state {from} has edge on out-of-range token {tok}"));
                }
                if to as usize >= n {
                    return fail(format!("state {from} has edge to out-of-range state {to}"));
                }
            }
        }
        Ok(Dfa { start, accepting, transitions, vocab_size, eos })
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.iter().map(BTreeMap::len).sum()
    }

    /// Removes states that are unreachable from the start or cannot reach an
    /// accepting state, renumbering the survivors in BFS order from the
    /// start. Fails with [`GrammarError::EmptyLanguage`] when no accepting
    /// state is reachable at all.
    pub fn trim(&self) -> Result<Dfa, GrammarError> {
        let n = self.num_states();
        // Forward reachability, BFS order doubling as the new numbering.
        let mut forward = vec![false; n];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        forward[self.start as usize] = true;
        queue.push_back(self.start);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for &to in self.transitions[s as usize].values() {
                if !forward[to as usize] {
                    forward[to as usize] = true;
                    queue.push_back(to);
                }
            }
        }
        // Backward reachability from accepting states.
        let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for (from, row) in self.transitions.iter().enumerate() {
            for &to in row.values() {
                reverse[to as usize].push(from as StateId);
            }
        }
        let mut coreach = vec![false; n];
        let mut queue: VecDeque<StateId> = (0..n as StateId)
            .filter(|&s| self.accepting[s as usize])
            .inspect(|&s| coreach[s as usize] = true)
            .collect();
        while let Some(s) = queue.pop_front() {
            for &from in &reverse[s as usize] {
                if !coreach[from as usize] {
                    coreach[from as usize] = true;
                    queue.push_back(from);
                }
            }
        }
        if !coreach[self.start as usize] {
            return Err(GrammarError::EmptyLanguage);
        }
        // Renumber the kept states in forward-BFS order.
        let mut renumber: HashMap<StateId, StateId> = HashMap::new();
        for &s in order.iter().filter(|&&s| coreach[s as usize]) {
            let id = renumber.len() as StateId;
            renumber.insert(s, id);
        }
        let mut accepting = vec![false; renumber.len()];
        let mut transitions = vec![BTreeMap::new(); renumber.len()];
        for (&old, &new) in &renumber {
            accepting[new as usize] = self.accepting[old as usize];
            for (&tok, &to) in &self.transitions[old as usize] {
                if let Some(&to_new) = renumber.get(&to) {
                    transitions[new as usize].insert(tok, to_new);
                }
            }
        }
        Ok(Dfa {
            start: renumber[&self.start],
            accepting,
            transitions,
            vocab_size: self.vocab_size,
            eos: self.eos,
        })
    }

    /// BFS check of the trim invariant: every reachable state can reach an
    /// accepting state.
    pub fn is_trim(&self) -> bool {
        match self.trim() {
            Ok(trimmed) => trimmed.num_states() == self.reachable_count(),
            Err(_) => false,
        }
    }

    fn reachable_count(&self) -> usize {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start as usize] = true;
        let mut count = 1;
        while let Some(s) = queue.pop_front() {
            for &to in self.transitions[s as usize].values() {
                if !seen[to as usize] {
                    seen[to as usize] = true;
                    count += 1;
                    queue.push_back(to);
                }
            }
        }
        count
    }
}

impl ConstraintAutomaton for Dfa {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos_id(&self) -> TokenId {
        self.eos
    }

    fn start_state(&self) -> StateId {
        self.start
    }

    fn is_accepting(&self, state: StateId) -> bool {
        state != EOS_SINK && self.accepting[state as usize]
    }

    fn allowed_tokens(&self, state: StateId) -> TokenSet {
        let mut set = TokenSet::new(self.vocab_size);
        if state == EOS_SINK {
            return set;
        }
        for &tok in self.transitions[state as usize].keys() {
            set.insert(tok);
        }
        if self.accepting[state as usize] {
            set.insert(self.eos);
        }
        set
    }

    fn advance(&self, state: StateId, token: TokenId) -> Result<StateId, GrammarError> {
        let reject = GrammarError::TokenRejected { state, token };
        if state == EOS_SINK {
            return Err(reject);
        }
        if token == self.eos {
            return if self.accepting[state as usize] { Ok(EOS_SINK) } else { Err(reject) };
        }
        self.transitions[state as usize].get(&token).copied().ok_or(reject)
    }
}

/// State expansion logic for a lazily materialized automaton.
///
/// Kernel states are the backend's own state representation; the wrapping
/// [`LazyAutomaton`] interns them behind `u32` handles and memoizes
/// transitions. `allowed` and `step` deal only in ordinary tokens — the
/// EOS transition is handled by the wrapper.
pub trait Kernel: Send + Sync {
    type State: Clone + Eq + Hash + Send + Sync;

    fn vocab_size(&self) -> usize;
    fn eos_id(&self) -> TokenId;
    fn start(&self) -> Self::State;
    fn accepting(&self, state: &Self::State) -> bool;
    /// Tokens with a defined successor. Must equal the domain of `step`.
    fn allowed(&self, state: &Self::State) -> TokenSet;
    fn step(&self, state: &Self::State, token: TokenId) -> Option<Self::State>;
}

struct LazyTables<S> {
    states: Vec<S>,
    ids: HashMap<S, StateId>,
    steps: HashMap<(StateId, TokenId), Option<StateId>>,
}

/// Wraps a [`Kernel`] into a [`ConstraintAutomaton`] with memoized, interned
/// states. Interning deduplicates equal kernel states, so shared suffixes of
/// different prefixes converge on the same handle. Expansion takes a write
/// lock; lookups of already-materialized states take a read lock, so
/// concurrent decodes over one automaton are safe.
pub struct LazyAutomaton<K: Kernel> {
    kernel: K,
    tables: RwLock<LazyTables<K::State>>,
}

impl<K: Kernel> LazyAutomaton<K> {
    pub fn new(kernel: K) -> Self {
        let start = kernel.start();
        let tables = LazyTables {
            states: vec![start.clone()],
            ids: HashMap::from([(start, 0)]),
            steps: HashMap::new(),
        };
        LazyAutomaton { kernel, tables: RwLock::new(tables) }
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    /// Number of states materialized so far.
    pub fn materialized_states(&self) -> usize {
        self.tables.read().unwrap().states.len()
    }

    /// A clone of the kernel state behind `id`, for inspection and tests.
    /// `None` for [`EOS_SINK`] and out-of-range handles.
    pub fn state_snapshot(&self, id: StateId) -> Option<K::State> {
        self.tables.read().unwrap().states.get(id as usize).cloned()
    }

    fn state(&self, id: StateId) -> K::State {
        self.tables.read().unwrap().states[id as usize].clone()
    }

    fn intern(&self, state: K::State) -> StateId {
        let mut tables = self.tables.write().unwrap();
        match tables.ids.get(&state) {
            Some(&id) => id,
            None => {
                let id = tables.states.len() as StateId;
                assert!(id < EOS_SINK, "state table overflow");
                tables.states.push(state.clone());
                tables.ids.insert(state, id);
                id
            }
        }
    }
}

impl<K: Kernel> ConstraintAutomaton for LazyAutomaton<K> {
    fn vocab_size(&self) -> usize {
        self.kernel.vocab_size()
    }

    fn eos_id(&self) -> TokenId {
        self.kernel.eos_id()
    }

    fn start_state(&self) -> StateId {
        0
    }

    fn is_accepting(&self, state: StateId) -> bool {
        state != EOS_SINK && self.kernel.accepting(&self.state(state))
    }

    fn allowed_tokens(&self, state: StateId) -> TokenSet {
        if state == EOS_SINK {
            return TokenSet::new(self.vocab_size());
        }
        let kernel_state = self.state(state);
        let mut set = self.kernel.allowed(&kernel_state);
        if self.kernel.accepting(&kernel_state) {
            set.insert(self.kernel.eos_id());
        }
        set
    }

    fn advance(&self, state: StateId, token: TokenId) -> Result<StateId, GrammarError> {
        let reject = GrammarError::TokenRejected { state, token };
        if state == EOS_SINK {
            return Err(reject);
        }
        if token == self.kernel.eos_id() {
            let accepting = self.kernel.accepting(&self.state(state));
            return if accepting { Ok(EOS_SINK) } else { Err(reject) };
        }
        if let Some(&memo) = self.tables.read().unwrap().steps.get(&(state, token)) {
            return memo.ok_or(reject);
        }
        let next = self.kernel.step(&self.state(state), token);
        let next_id = next.map(|s| self.intern(s));
        match self.tables.write().unwrap().steps.entry((state, token)) {
            Entry::Occupied(e) => (*e.get()).ok_or(reject),
            Entry::Vacant(e) => {
                e.insert(next_id);
                next_id.ok_or(reject)
            }
        }
    }
}
