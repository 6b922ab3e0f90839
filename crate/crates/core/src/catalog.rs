//! Entity/relation catalogs and the triplet-string automaton built on them.
//!
//! A [`Catalog`] maps stable identifiers to surface forms, loaded from
//! two-column TSV (`id<TAB>surface`). Surfaces are tokenized into a
//! [`TokenTrie`]; the information-extraction automaton from
//! [`build_ie_automaton`] interleaves marker tokens with trie walks to accept
//! exactly the strings
//!
//! ```text
//! ( [s] <entity> [r] <relation> [o] <entity> [e] )*
//! ```
//!
//! including the empty string. The automaton is lazy: states are sets of
//! simultaneous positions (marker offsets and trie nodes), determinized by
//! on-the-fly subset construction, so overlapping surface forms ("New York"
//! vs. "New York City") and surfaces that embed marker words never make a
//! walk ambiguous. Catalogs of any size stay cheap because only visited
//! states materialize.
//!
//! [`IeKernel::extract_triplets`] recovers identifier triplets from an
//! accepted token sequence; [`render_triplets`] is its inverse up to
//! ordering. [`parse_sketch_triplets`] is the deliberately lenient variant
//! for free-form draft text, used to score raw sketches: triplets whose
//! segments don't ground in the catalogs are dropped rather than failing.
//! [`parse_marker_triplets`] is the same scan without grounding, for
//! scoring in surface space when no catalogs are at hand.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Kernel, LazyAutomaton, TokenSet};
use crate::vocab::{TokenId, Tokenizer, VocabError};

/// Which kind of identifiers a catalog holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogKind {
    Entity,
    Relation,
}

impl fmt::Display for CatalogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CatalogKind::Entity => "entity",
            CatalogKind::Relation => "relation",
        })
    }
}

/// Errors from catalog I/O, automaton construction, and triplet recovery.
#[derive(Debug, Error)]
pub enum CatalogError {
    /// A TSV row did not have exactly two tab-separated fields.
    #[error("line {line}: expected exactly `id<TAB>surface`")]
    BadRow { line: usize },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { id: String, line: usize },
    /// A row with an empty id or surface field.
    #[error("line {line}: empty {what} field")]
    EmptyField { what: &'static str, line: usize },
    #[error("{0} catalog is empty")]
    EmptyCatalog(CatalogKind),
    /// A surface form could not be tokenized under the vocabulary.
    #[error("surface for id {id:?} cannot be tokenized: {source}")]
    BadSurface { id: String, source: VocabError },
    /// A marker string could not be tokenized.
    #[error("marker {marker:?} cannot be tokenized: {source}")]
    BadMarker { marker: String, source: VocabError },
    /// Two marker roles share the same string.
    #[error("marker {0:?} is used for two different roles")]
    DuplicateMarker(String),
    /// A surface or marker contains the reserved EOS token.
    #[error("{0:?} contains the reserved EOS token")]
    ReservedEos(String),
    /// A surface or marker tokenizes to zero tokens.
    #[error("{0:?} tokenizes to nothing")]
    EmptyTokenization(String),
    /// An id was requested that the catalog does not contain.
    #[error("unknown id {0:?}")]
    UnknownId(String),
    /// Token sequence handed to extraction is not a valid triplet string.
    #[error("not a valid triplet string (stuck at token index {at})")]
    InvalidTripletString { at: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// An identifier → surface-form table.
#[derive(Debug, Clone)]
pub struct Catalog {
    kind: CatalogKind,
    entries: BTreeMap<String, String>,
}

impl Catalog {
    /// Builds a catalog from `(id, surface)` pairs (primarily for tests).
    pub fn from_entries<I, A, B>(kind: CatalogKind, pairs: I) -> Result<Self, CatalogError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (line, (id, surface)) in pairs.into_iter().enumerate() {
            let (id, surface) = (id.into(), surface.into());
            let line = line + 1;
            if id.is_empty() {
                return Err(CatalogError::EmptyField { what: "id", line });
            }
            if surface.is_empty() {
                return Err(CatalogError::EmptyField { what: "surface", line });
            }
            if entries.insert(id.clone(), surface).is_some() {
                return Err(CatalogError::DuplicateId { id, line });
            }
        }
        Ok(Catalog { kind, entries })
    }

    /// Parses the two-column TSV format. Blank lines are skipped.
    pub fn parse(text: &str, kind: CatalogKind) -> Result<Self, CatalogError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let row = raw.trim_end_matches('\r');
            if row.is_empty() {
                continue;
            }
            let mut fields = row.split('\t');
            let (id, surface) = match (fields.next(), fields.next(), fields.next()) {
                (Some(id), Some(surface), None) => (id, surface),
                _ => return Err(CatalogError::BadRow { line }),
            };
            if id.is_empty() {
                return Err(CatalogError::EmptyField { what: "id", line });
            }
            if surface.is_empty() {
                return Err(CatalogError::EmptyField { what: "surface", line });
            }
            if entries.insert(id.to_owned(), surface.to_owned()).is_some() {
                return Err(CatalogError::DuplicateId { id: id.to_owned(), line });
            }
        }
        Ok(Catalog { kind, entries })
    }

    /// Loads a TSV catalog file.
    pub fn load(path: impl AsRef<Path>, kind: CatalogKind) -> Result<Self, CatalogError> {
        Self::parse(&fs::read_to_string(path)?, kind)
    }

    pub fn kind(&self) -> CatalogKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Surface form for `id`.
    pub fn surface(&self, id: &str) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    /// Iterates `(id, surface)` in id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// All ids whose surface form equals `surface`, in id order.
    pub fn ids_for_surface<'a>(&'a self, surface: &'a str) -> impl Iterator<Item = &'a str> {
        self.iter().filter_map(move |(id, s)| (s == surface).then_some(id))
    }
}

/// A trie over the token sequences of catalog surface forms.
///
/// Edges are keyed by token id, so walks are deterministic; a node reached
/// by a complete surface carries that surface's id(s). Homonymous surfaces
/// (same surface, distinct ids) share a terminal node whose id list is
/// sorted and duplicate-free.
#[derive(Debug, Clone)]
pub struct TokenTrie {
    nodes: Vec<TrieNode>,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    edges: BTreeMap<TokenId, u32>,
    ids: Vec<String>,
}

impl TokenTrie {
    /// Root node handle.
    pub const ROOT: u32 = 0;

    /// Builds the trie for every surface in `catalog`.
    pub fn build(catalog: &Catalog, tok: &dyn Tokenizer) -> Result<Self, CatalogError> {
        let eos = tok.vocab().eos_id();
        let mut seqs = Vec::with_capacity(catalog.len());
        for (id, surface) in catalog.iter() {
            let ids = tok.tokenize(surface).map_err(|source| CatalogError::BadSurface {
                id: id.to_owned(),
                source,
            })?;
            if ids.is_empty() {
                return Err(CatalogError::EmptyTokenization(surface.to_owned()));
            }
            if ids.contains(&eos) {
                return Err(CatalogError::ReservedEos(surface.to_owned()));
            }
            seqs.push((id.to_owned(), ids));
        }
        Ok(Self::from_sequences(seqs))
    }

    /// Builds a trie directly from pre-tokenized `(id, tokens)` pairs.
    ///
    /// Panics on an empty token sequence — an id at the root would never be
    /// reachable by a walk; callers validate sequences first.
    pub fn from_sequences<I>(seqs: I) -> Self
    where
        I: IntoIterator<Item = (String, Vec<TokenId>)>,
    {
        let mut trie = TokenTrie { nodes: vec![TrieNode::default()] };
        for (id, tokens) in seqs {
            assert!(!tokens.is_empty(), "trie sequences must be non-empty");
            let mut node = Self::ROOT;
            for t in tokens {
                let next = trie.nodes.len() as u32;
                node = match trie.nodes[node as usize].edges.get(&t) {
                    Some(&child) => child,
                    None => {
                        trie.nodes[node as usize].edges.insert(t, next);
                        trie.nodes.push(TrieNode::default());
                        next
                    }
                };
            }
            let terminal = &mut trie.nodes[node as usize].ids;
            if !terminal.iter().any(|x| *x == id) {
                terminal.push(id.clone());
                terminal.sort();
            }
        }
        trie
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Child of `node` along `token`, if any.
    pub fn child(&self, node: u32, token: TokenId) -> Option<u32> {
        self.nodes[node as usize].edges.get(&token).copied()
    }

    /// Outgoing edge tokens of `node`.
    pub fn edge_tokens(&self, node: u32) -> impl Iterator<Item = TokenId> + '_ {
        self.nodes[node as usize].edges.keys().copied()
    }

    /// Ids of surfaces ending exactly at `node` (sorted; empty if none).
    pub fn ids_at(&self, node: u32) -> &[String] {
        &self.nodes[node as usize].ids
    }

    /// Walks a full token sequence from the root; the ids at the final node.
    pub fn lookup(&self, tokens: &[TokenId]) -> &[String] {
        let mut node = Self::ROOT;
        for &t in tokens {
            match self.child(node, t) {
                Some(next) => node = next,
                None => return &[],
            }
        }
        self.ids_at(node)
    }
}

/// The four marker strings delimiting triplet segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Markers {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub end: String,
}

impl Default for Markers {
    fn default() -> Self {
        Markers {
            subject: "[s]".into(),
            relation: "[r]".into(),
            object: "[o]".into(),
            end: "[e]".into(),
        }
    }
}

impl Markers {
    fn as_array(&self) -> [&str; 4] {
        [&self.subject, &self.relation, &self.object, &self.end]
    }
}

/// A subject/relation/object triplet, holding catalog identifiers or raw
/// surface strings depending on which parser produced it.
///
/// Serializes as a three-element array `[subject, relation, object]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String, String)", into = "(String, String, String)")]
pub struct Triplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triplet {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Triplet { subject: subject.into(), relation: relation.into(), object: object.into() }
    }
}

impl From<(String, String, String)> for Triplet {
    fn from((subject, relation, object): (String, String, String)) -> Self {
        Triplet { subject, relation, object }
    }
}

impl From<Triplet> for (String, String, String) {
    fn from(t: Triplet) -> Self {
        (t.subject, t.relation, t.object)
    }
}

/// A deduplicated, ordered set of triplets.
pub type TripletSet = BTreeSet<Triplet>;

/// Marker roles, in the order they appear within a triplet.
const SUBJECT: u8 = 0;
const RELATION: u8 = 1;
const OBJECT: u8 = 2;
const END: u8 = 3;

/// One simultaneous position of the triplet machine: part-way through a
/// marker, or at a trie node of the segment opened by marker `seg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum IeAtom {
    Marker { which: u8, pos: u16 },
    Trie { seg: u8, node: u32 },
}

/// A determinized machine state: the set of live atoms, plus whether the
/// prefix so far is a complete triplet string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IeState {
    atoms: BTreeSet<IeAtom>,
    accepting: bool,
}

enum Point {
    Boundary,
    MarkerDone(u8),
    Atom(IeAtom),
}

/// State expansion for the triplet automaton; places to resume from are
/// closed under "a finished segment opens the next marker".
pub struct IeKernel {
    entity_trie: TokenTrie,
    relation_trie: TokenTrie,
    marker_tokens: [Vec<TokenId>; 4],
    vocab_size: usize,
    eos: TokenId,
}

impl IeKernel {
    fn trie(&self, seg: u8) -> &TokenTrie {
        match seg {
            RELATION => &self.relation_trie,
            _ => &self.entity_trie,
        }
    }

    fn close(&self, seeds: Vec<Point>) -> IeState {
        let mut atoms = BTreeSet::new();
        let mut accepting = false;
        let mut queue: Vec<Point> = seeds;
        while let Some(point) = queue.pop() {
            match point {
                Point::Boundary => {
                    if !accepting {
                        accepting = true;
                        queue.push(Point::Atom(IeAtom::Marker { which: SUBJECT, pos: 0 }));
                    }
                }
                Point::MarkerDone(which) => queue.push(match which {
                    END => Point::Boundary,
                    seg => Point::Atom(IeAtom::Trie { seg, node: TokenTrie::ROOT }),
                }),
                Point::Atom(atom) => {
                    if atoms.insert(atom) {
                        if let IeAtom::Trie { seg, node } = atom {
                            if !self.trie(seg).ids_at(node).is_empty() {
                                queue.push(Point::Atom(IeAtom::Marker {
                                    which: seg + 1,
                                    pos: 0,
                                }));
                            }
                        }
                    }
                }
            }
        }
        IeState { atoms, accepting }
    }

    /// Recovers identifier triplets from an accepted token sequence.
    ///
    /// Homonymous surfaces resolve to their smallest id unless
    /// `all_homonyms` asks for every combination. Fails with
    /// [`CatalogError::InvalidTripletString`] when `tokens` is not in the
    /// automaton's language.
    pub fn extract_triplets(
        &self,
        tokens: &[TokenId],
        all_homonyms: bool,
    ) -> Result<TripletSet, CatalogError> {
        let mut out = TripletSet::new();
        if self.parse_boundary(tokens, 0, &mut Vec::new(), all_homonyms, &mut out) {
            Ok(out)
        } else {
            Err(CatalogError::InvalidTripletString { at: self.stuck_at(tokens) })
        }
    }

    /// How far the automaton gets along `tokens`; used for error reporting.
    fn stuck_at(&self, tokens: &[TokenId]) -> usize {
        let mut state = self.close(vec![Point::Boundary]);
        for (i, &t) in tokens.iter().enumerate() {
            match self.step(&state, t) {
                Some(next) => state = next,
                None => return i,
            }
        }
        tokens.len()
    }

    fn match_marker(&self, tokens: &[TokenId], pos: usize, which: u8) -> Option<usize> {
        let m = &self.marker_tokens[which as usize];
        tokens[pos..].starts_with(m).then(|| pos + m.len())
    }

    /// All trie stops from `pos`: `(ids, end)` per terminal passed, in
    /// increasing match length. The walk itself is deterministic; the choice
    /// of stop is the backtracking point.
    fn trie_stops<'a>(
        &'a self,
        tokens: &[TokenId],
        pos: usize,
        seg: u8,
    ) -> Vec<(&'a [String], usize)> {
        let trie = self.trie(seg);
        let mut out = Vec::new();
        let mut node = TokenTrie::ROOT;
        let mut at = pos;
        loop {
            let Some(&t) = tokens.get(at) else { break };
            let Some(child) = trie.child(node, t) else { break };
            node = child;
            at += 1;
            if !trie.ids_at(node).is_empty() {
                out.push((trie.ids_at(node), at));
            }
        }
        out
    }

    fn parse_boundary(
        &self,
        tokens: &[TokenId],
        pos: usize,
        stack: &mut Vec<Vec<String>>,
        all: bool,
        out: &mut TripletSet,
    ) -> bool {
        if pos == tokens.len() {
            // One full parse found: emit the collected segment choices.
            for triple in stack.chunks_exact(3) {
                for s in &triple[0] {
                    for r in &triple[1] {
                        for o in &triple[2] {
                            out.insert(Triplet::new(s, r, o));
                        }
                    }
                }
            }
            return true;
        }
        let Some(p) = self.match_marker(tokens, pos, SUBJECT) else { return false };
        self.parse_segment(tokens, p, SUBJECT, stack, all, out)
    }

    fn parse_segment(
        &self,
        tokens: &[TokenId],
        pos: usize,
        seg: u8,
        stack: &mut Vec<Vec<String>>,
        all: bool,
        out: &mut TripletSet,
    ) -> bool {
        for (ids, end) in self.trie_stops(tokens, pos, seg) {
            let Some(next) = self.match_marker(tokens, end, seg + 1) else { continue };
            let chosen = if all { ids.to_vec() } else { vec![ids[0].clone()] };
            stack.push(chosen);
            let ok = if seg == OBJECT {
                self.parse_boundary(tokens, next, stack, all, out)
            } else {
                self.parse_segment(tokens, next, seg + 1, stack, all, out)
            };
            stack.pop();
            if ok {
                return true;
            }
        }
        false
    }
}

impl Kernel for IeKernel {
    type State = IeState;

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos_id(&self) -> TokenId {
        self.eos
    }

    fn start(&self) -> IeState {
        self.close(vec![Point::Boundary])
    }

    fn accepting(&self, state: &IeState) -> bool {
        state.accepting
    }

    fn allowed(&self, state: &IeState) -> TokenSet {
        let mut set = TokenSet::new(self.vocab_size);
        for atom in &state.atoms {
            match *atom {
                IeAtom::Marker { which, pos } => {
                    set.insert(self.marker_tokens[which as usize][pos as usize]);
                }
                IeAtom::Trie { seg, node } => {
                    for t in self.trie(seg).edge_tokens(node) {
                        set.insert(t);
                    }
                }
            }
        }
        set
    }

    fn step(&self, state: &IeState, token: TokenId) -> Option<IeState> {
        let mut seeds = Vec::new();
        for atom in &state.atoms {
            match *atom {
                IeAtom::Marker { which, pos } => {
                    let m = &self.marker_tokens[which as usize];
                    if m[pos as usize] == token {
                        seeds.push(if pos as usize + 1 == m.len() {
                            Point::MarkerDone(which)
                        } else {
                            Point::Atom(IeAtom::Marker { which, pos: pos + 1 })
                        });
                    }
                }
                IeAtom::Trie { seg, node } => {
                    if let Some(child) = self.trie(seg).child(node, token) {
                        seeds.push(Point::Atom(IeAtom::Trie { seg, node: child }));
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

/// The lazy triplet-string constraint automaton.
pub type IeAutomaton = LazyAutomaton<IeKernel>;

/// Builds the triplet automaton for the given catalogs and markers.
///
/// Both catalogs must be non-empty; marker strings must be pairwise
/// distinct, tokenize to at least one token, and avoid EOS. Trim holds by
/// construction: every trie path extends to a terminal, every segment to a
/// triplet boundary, and the boundary is accepting.
pub fn build_ie_automaton(
    entities: &Catalog,
    relations: &Catalog,
    markers: &Markers,
    tok: &dyn Tokenizer,
) -> Result<IeAutomaton, CatalogError> {
    for (catalog, kind) in [(entities, CatalogKind::Entity), (relations, CatalogKind::Relation)] {
        if catalog.is_empty() {
            return Err(CatalogError::EmptyCatalog(kind));
        }
    }
    let eos = tok.vocab().eos_id();
    let mut marker_tokens: [Vec<TokenId>; 4] = Default::default();
    let names = markers.as_array();
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(CatalogError::DuplicateMarker((*name).to_owned()));
        }
        let ids = tok.tokenize(name).map_err(|source| CatalogError::BadMarker {
            marker: (*name).to_owned(),
            source,
        })?;
        if ids.is_empty() {
            return Err(CatalogError::EmptyTokenization((*name).to_owned()));
        }
        if ids.contains(&eos) {
            return Err(CatalogError::ReservedEos((*name).to_owned()));
        }
        marker_tokens[i] = ids;
    }
    Ok(LazyAutomaton::new(IeKernel {
        entity_trie: TokenTrie::build(entities, tok)?,
        relation_trie: TokenTrie::build(relations, tok)?,
        marker_tokens,
        vocab_size: tok.vocab().len(),
        eos,
    }))
}

/// Renders a triplet set back to marker-delimited text using catalog
/// surface forms, triplets in set order. Inverse of extraction up to
/// ordering and homonym choice.
pub fn render_triplets(
    triplets: &TripletSet,
    entities: &Catalog,
    relations: &Catalog,
    markers: &Markers,
) -> Result<String, CatalogError> {
    let surface = |catalog: &Catalog, id: &str| -> Result<String, CatalogError> {
        catalog.surface(id).map(str::to_owned).ok_or_else(|| CatalogError::UnknownId(id.to_owned()))
    };
    let mut parts = Vec::new();
    for t in triplets {
        parts.push(markers.subject.clone());
        parts.push(surface(entities, &t.subject)?);
        parts.push(markers.relation.clone());
        parts.push(surface(relations, &t.relation)?);
        parts.push(markers.object.clone());
        parts.push(surface(entities, &t.object)?);
        parts.push(markers.end.clone());
    }
    Ok(parts.join(" "))
}

/// Lenient surface-level triplet recovery from marker-delimited text.
///
/// Scans for `subject-marker ... relation-marker ... object-marker ...
/// end-marker` spans over whitespace words and returns the raw surface
/// strings between the markers, with no catalog grounding. Structurally
/// broken spans and spans with an empty segment are skipped, not errors —
/// draft text is expected to be partially invalid.
pub fn parse_marker_triplets(text: &str, markers: &Markers) -> TripletSet {
    let words: Vec<&str> = text.split_whitespace().collect();
    let marker_words: Vec<Vec<&str>> =
        markers.as_array().iter().map(|m| m.split_whitespace().collect()).collect();
    let find = |from: usize, which: usize| -> Option<usize> {
        let needle = &marker_words[which];
        (from..words.len().saturating_sub(needle.len() - 1))
            .find(|&i| &words[i..i + needle.len()] == needle.as_slice())
    };
    let mut out = TripletSet::new();
    let mut pos = 0;
    while let Some(s_at) = find(pos, 0) {
        let seg_start = s_at + marker_words[0].len();
        let found = (|| {
            let r_at = find(seg_start, 1)?;
            let o_at = find(r_at + marker_words[1].len(), 2)?;
            let e_at = find(o_at + marker_words[2].len(), 3)?;
            let subject = words[seg_start..r_at].join(" ");
            let relation = words[r_at + marker_words[1].len()..o_at].join(" ");
            let object = words[o_at + marker_words[2].len()..e_at].join(" ");
            if !subject.is_empty() && !relation.is_empty() && !object.is_empty() {
                out.insert(Triplet::new(subject, relation, object));
            }
            Some(e_at + marker_words[3].len())
        })();
        match found {
            Some(next) => pos = next,
            None => pos = seg_start,
        }
    }
    out
}

/// Lenient grounded-triplet recovery from free-form draft text.
///
/// Runs [`parse_marker_triplets`] and grounds each segment by exact
/// surface lookup, homonyms resolving to their smallest id. Spans that
/// fail to ground are dropped.
pub fn parse_sketch_triplets(
    text: &str,
    entities: &Catalog,
    relations: &Catalog,
    markers: &Markers,
) -> TripletSet {
    let mut surface_ids: [HashMap<&str, &str>; 2] = [HashMap::new(), HashMap::new()];
    for (slot, catalog) in [(0, entities), (1, relations)] {
        // BTreeMap iteration is id-ascending, so the first id wins = smallest.
        for (id, surface) in catalog.iter() {
            surface_ids[slot].entry(surface).or_insert(id);
        }
    }
    parse_marker_triplets(text, markers)
        .into_iter()
        .filter_map(|t| {
            Some(Triplet::new(
                *surface_ids[0].get(t.subject.as_str())?,
                *surface_ids[1].get(t.relation.as_str())?,
                *surface_ids[0].get(t.object.as_str())?,
            ))
        })
        .collect()
}
