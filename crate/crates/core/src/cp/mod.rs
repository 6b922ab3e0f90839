//! Constituency-parse trees, their bracketed linearization, and the two
//! grammars that constrain tree output.
//!
//! A [`ParseTree`] is either an internal node (label + non-empty children)
//! or a leaf (part-of-speech tag + one word). [`linearize`] renders the
//! pre-order bracketed form — `[S [NP [PRP I]] [VP [VBD saw] [NP [DT a]
//! [NN fox]]]]` — and [`parse_linearized`] is its strict inverse, reporting
//! the first structural violation on malformed input.
//!
//! Two constraint grammars cover tree generation:
//!
//! * [`build_lite_cfg`] compiles the input-independent context-free shape
//!   grammar: bracketed nodes with inventory labels, leaves holding one
//!   free word.
//! * [`build_sophisticated_automaton`] builds an input-dependent automaton
//!   that additionally forces the yield to reproduce the given sentence
//!   exactly, word for word, with balanced brackets throughout. Its states
//!   track (words emitted, open brackets) and stay trim, so masked search
//!   can never paint itself into a corner.
//!
//! The two languages are incomparable: the shape grammar accepts any yield
//! but requires every word wrapped in a tagged leaf, while the
//! input-dependent grammar fixes the yield but lets several words share
//! one bracket (`[S a b]`). Tests pin both directions.

mod lite;
mod soph;
mod tags;

use std::io;

use thiserror::Error;

use crate::grammar::GrammarError;

pub use lite::{build_lite_cfg, lite_grammar, LiteCfgOptions, WORD_WILDCARD};
pub use soph::{build_sophisticated_automaton, CpAutomaton, CpKernel, CpOptions, CpState};
pub use tags::TagInventory;

/// Errors from tree parsing, inventory files, and grammar construction.
#[derive(Debug, Error)]
pub enum CpError {
    /// Bracket depth went negative or never returned to zero.
    #[error("imbalanced brackets")]
    Imbalanced,
    /// A label not usable at its position (unknown base, or wrong class).
    #[error("invalid tag {0:?}")]
    InvalidTag(String),
    /// A node with a label but no children and no word (or no label at all).
    #[error("empty node")]
    EmptyNode,
    /// A node mixing words with child brackets, or holding several words.
    #[error("mixed node content")]
    MixedContent,
    /// Well-formed tree followed by more input.
    #[error("trailing input after the first tree")]
    TrailingInput,
    /// Inventory-file syntax error.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// No usable tags to build a grammar from.
    #[error("tag inventory is empty")]
    EmptyTags,
    /// The input sentence for an input-dependent grammar is empty.
    #[error("input sentence is empty")]
    EmptyInput,
    /// The bracket-depth cap must be at least 1.
    #[error("bracket depth cap must be at least 1")]
    ZeroDepthCap,
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// The bracket glyph pair used in linearized trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Glyphs {
    pub open: char,
    pub close: char,
}

impl Default for Glyphs {
    fn default() -> Self {
        Glyphs { open: '[', close: ']' }
    }
}

/// A constituency tree: internal nodes carry labels, leaves carry one
/// tagged word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParseTree {
    Internal { label: String, children: Vec<ParseTree> },
    Leaf { tag: String, word: String },
}

impl ParseTree {
    pub fn internal(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        ParseTree::Internal { label: label.into(), children }
    }

    pub fn leaf(tag: impl Into<String>, word: impl Into<String>) -> Self {
        ParseTree::Leaf { tag: tag.into(), word: word.into() }
    }

    /// Left-to-right leaf words.
    pub fn yield_words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_yield(&mut out);
        out
    }

    fn collect_yield<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ParseTree::Internal { children, .. } => {
                for c in children {
                    c.collect_yield(out);
                }
            }
            ParseTree::Leaf { word, .. } => out.push(word.as_str()),
        }
    }

    /// `(tag, word)` pairs of leaves, left to right.
    pub fn leaves(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        match self {
            ParseTree::Internal { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
            ParseTree::Leaf { tag, word } => out.push((tag.as_str(), word.as_str())),
        }
    }

    /// `(label, start, end)` word spans of internal nodes, pre-order;
    /// `end` is exclusive. Leaves are not included.
    pub fn spans(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        self.collect_spans(0, &mut out);
        out
    }

    fn collect_spans(&self, start: usize, out: &mut Vec<(String, usize, usize)>) -> usize {
        match self {
            ParseTree::Internal { label, children } => {
                let slot = out.len();
                out.push((label.clone(), start, start));
                let mut at = start;
                for c in children {
                    at = c.collect_spans(at, out);
                }
                out[slot].2 = at;
                at
            }
            ParseTree::Leaf { .. } => start + 1,
        }
    }

    /// Maximum bracket nesting depth (a lone leaf has depth 1).
    pub fn depth(&self) -> usize {
        match self {
            ParseTree::Internal { children, .. } => {
                1 + children.iter().map(ParseTree::depth).max().unwrap_or(0)
            }
            ParseTree::Leaf { .. } => 1,
        }
    }

    /// Checks labels and shape against an inventory: internal labels must
    /// strip to clause or phrase tags, leaf tags to word tags, internal
    /// nodes must have children, leaf words must be single non-empty
    /// tokens free of bracket glyphs and whitespace.
    pub fn validate(&self, tags: &TagInventory, glyphs: Glyphs) -> Result<(), CpError> {
        match self {
            ParseTree::Internal { label, children } => {
                if !tags.internal_label_valid(label) {
                    return Err(CpError::InvalidTag(label.clone()));
                }
                if children.is_empty() {
                    return Err(CpError::EmptyNode);
                }
                for c in children {
                    c.validate(tags, glyphs)?;
                }
                Ok(())
            }
            ParseTree::Leaf { tag, word } => {
                if !tags.leaf_tag_valid(tag) {
                    return Err(CpError::InvalidTag(tag.clone()));
                }
                if word.is_empty()
                    || word.contains(glyphs.open)
                    || word.contains(glyphs.close)
                    || word.contains(char::is_whitespace)
                {
                    return Err(CpError::EmptyNode);
                }
                Ok(())
            }
        }
    }
}

/// Renders the pre-order bracketed form with default glyphs.
pub fn linearize(tree: &ParseTree) -> String {
    linearize_with(tree, Glyphs::default())
}

/// Renders the pre-order bracketed form: `[LABEL child … child]` for
/// internal nodes, `[TAG word]` for leaves, single spaces between parts.
pub fn linearize_with(tree: &ParseTree, glyphs: Glyphs) -> String {
    let mut out = String::new();
    write_tree(tree, glyphs, &mut out);
    out
}

fn write_tree(tree: &ParseTree, glyphs: Glyphs, out: &mut String) {
    out.push(glyphs.open);
    match tree {
        ParseTree::Internal { label, children } => {
            out.push_str(label);
            for c in children {
                out.push(' ');
                write_tree(c, glyphs, out);
            }
        }
        ParseTree::Leaf { tag, word } => {
            out.push_str(tag);
            out.push(' ');
            out.push_str(word);
        }
    }
    out.push(glyphs.close);
}

/// Parses a bracketed tree string with default glyphs.
pub fn parse_linearized(s: &str, tags: &TagInventory) -> Result<ParseTree, CpError> {
    parse_linearized_with(s, tags, Glyphs::default())
}

/// Strict inverse of [`linearize_with`].
///
/// Whitespace between parts is free-form; the first violated constraint is
/// reported: [`CpError::Imbalanced`], [`CpError::InvalidTag`],
/// [`CpError::EmptyNode`], [`CpError::MixedContent`], or
/// [`CpError::TrailingInput`] for anything after the first complete tree.
pub fn parse_linearized_with(
    s: &str,
    tags: &TagInventory,
    glyphs: Glyphs,
) -> Result<ParseTree, CpError> {
    let parts = split_brackets(s, glyphs);
    let mut pos = 0;
    let tree = parse_node(&parts, &mut pos, tags, glyphs)?;
    if pos != parts.len() {
        return Err(match parts[pos] {
            p if p == close_str(glyphs) => CpError::Imbalanced,
            _ => CpError::TrailingInput,
        });
    }
    Ok(tree)
}

fn close_str(glyphs: Glyphs) -> String {
    glyphs.close.to_string()
}

/// Splits into glyph tokens and plain runs, discarding whitespace.
pub(crate) fn split_brackets(s: &str, glyphs: Glyphs) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        if c == glyphs.open || c == glyphs.close || c.is_whitespace() {
            if let Some(from) = start.take() {
                out.push(&s[from..i]);
            }
            if !c.is_whitespace() {
                out.push(&s[i..i + c.len_utf8()]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(from) = start {
        out.push(&s[from..]);
    }
    out
}

fn parse_node(
    parts: &[&str],
    pos: &mut usize,
    tags: &TagInventory,
    glyphs: Glyphs,
) -> Result<ParseTree, CpError> {
    let open = glyphs.open.to_string();
    let close = glyphs.close.to_string();
    match parts.get(*pos) {
        Some(p) if **p == open => *pos += 1,
        Some(_) => return Err(CpError::TrailingInput),
        None => return Err(CpError::Imbalanced),
    }
    let tag = match parts.get(*pos) {
        Some(p) if **p == close => return Err(CpError::EmptyNode),
        Some(p) if **p == open => return Err(CpError::InvalidTag(open)),
        Some(p) => {
            *pos += 1;
            (*p).to_owned()
        }
        None => return Err(CpError::Imbalanced),
    };
    let mut children = Vec::new();
    let mut words: Vec<String> = Vec::new();
    loop {
        match parts.get(*pos) {
            Some(p) if **p == close => {
                *pos += 1;
                break;
            }
            Some(p) if **p == open => {
                children.push(parse_node(parts, pos, tags, glyphs)?);
            }
            Some(p) => {
                words.push((*p).to_owned());
                *pos += 1;
            }
            None => return Err(CpError::Imbalanced),
        }
    }
    match (children.is_empty(), words.len()) {
        (true, 0) => Err(CpError::EmptyNode),
        (true, 1) => {
            if !tags.leaf_tag_valid(&tag) {
                return Err(CpError::InvalidTag(tag));
            }
            Ok(ParseTree::Leaf { tag, word: words.pop().unwrap() })
        }
        (false, 0) => {
            if !tags.internal_label_valid(&tag) {
                return Err(CpError::InvalidTag(tag));
            }
            Ok(ParseTree::Internal { label: tag, children })
        }
        _ => Err(CpError::MixedContent),
    }
}


#[cfg(test)]
pub(crate) fn fox_tree() -> ParseTree {
    ParseTree::internal(
        "S",
        vec![
            ParseTree::internal("NP", vec![ParseTree::leaf("PRP", "I")]),
            ParseTree::internal(
                "VP",
                vec![
                    ParseTree::leaf("VBD", "saw"),
                    ParseTree::internal(
                        "NP",
                        vec![ParseTree::leaf("DT", "a"), ParseTree::leaf("NN", "fox")],
                    ),
                ],
            ),
        ],
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const FOX: &str = "[S [NP [PRP I]] [VP [VBD saw] [NP [DT a] [NN fox]]]]";

    #[test]
    fn linearize_fox_tree() {
        assert_eq!(linearize(&fox_tree()), FOX);
    }

    #[test]
    fn linearize_simple_shapes() {
        let single = ParseTree::internal("S", vec![ParseTree::leaf("NN", "fox")]);
        assert_eq!(linearize(&single), "[S [NN fox]]");
        let flat = ParseTree::internal(
            "NP",
            vec![ParseTree::leaf("DT", "a"), ParseTree::leaf("NN", "fox")],
        );
        // Left child precedes right child.
        assert_eq!(linearize(&flat), "[NP [DT a] [NN fox]]");
    }

    #[test]
    fn parse_round_trips_fox_tree() {
        let parsed = parse_linearized(FOX, TagInventory::ptb()).unwrap();
        assert_eq!(parsed, fox_tree());
        assert_eq!(linearize(&parsed), FOX);
    }

    #[test]
    fn parse_normalizes_spacing() {
        let messy = "  [S   [NP [PRP I] ]\n [VP [VBD saw] [NP [DT a]   [NN fox]]]]  ";
        let parsed = parse_linearized(messy, TagInventory::ptb()).unwrap();
        assert_eq!(linearize(&parsed), FOX);
    }

    #[test]
    fn parse_reports_first_violation() {
        let tags = TagInventory::ptb();
        assert!(matches!(
            parse_linearized("[S [NP [PRP I]]", tags),
            Err(CpError::Imbalanced)
        ));
        assert!(matches!(
            parse_linearized("[S [NP [PRP I]]]]", tags),
            Err(CpError::Imbalanced)
        ));
        assert!(matches!(
            parse_linearized("[S [XX I]]", tags),
            Err(CpError::InvalidTag(t)) if t == "XX"
        ));
        // Wrong class for the position is also an invalid tag.
        assert!(matches!(
            parse_linearized("[NN [DT a]]", tags),
            Err(CpError::InvalidTag(t)) if t == "NN"
        ));
        assert!(matches!(
            parse_linearized("[S dog]", tags),
            Err(CpError::InvalidTag(t)) if t == "S"
        ));
        assert!(matches!(parse_linearized("[S]", tags), Err(CpError::EmptyNode)));
        assert!(matches!(parse_linearized("[]", tags), Err(CpError::EmptyNode)));
        assert!(matches!(
            parse_linearized("[NN a b]", tags),
            Err(CpError::MixedContent)
        ));
        assert!(matches!(
            parse_linearized("[S cat [NN dog]]", tags),
            Err(CpError::MixedContent)
        ));
        assert!(matches!(
            parse_linearized("[S [NN dog]] [S [NN cat]]", tags),
            Err(CpError::TrailingInput)
        ));
        assert!(matches!(parse_linearized("", tags), Err(CpError::Imbalanced)));
    }

    #[test]
    fn function_tags_accepted_on_input() {
        let tags = TagInventory::ptb();
        let t = parse_linearized("[S [NP-SBJ-1 [PRP I]] [VP [VBD saw]]]", tags).unwrap();
        // The original suffixed label is preserved in the tree.
        match &t {
            ParseTree::Internal { children, .. } => match &children[0] {
                ParseTree::Internal { label, .. } => assert_eq!(label, "NP-SBJ-1"),
                _ => panic!("expected internal"),
            },
            _ => panic!("expected internal"),
        }
    }

    #[test]
    fn spans_and_leaves() {
        let t = fox_tree();
        assert_eq!(t.yield_words(), vec!["I", "saw", "a", "fox"]);
        assert_eq!(
            t.leaves(),
            vec![("PRP", "I"), ("VBD", "saw"), ("DT", "a"), ("NN", "fox")]
        );
        assert_eq!(
            t.spans(),
            vec![
                ("S".to_owned(), 0, 4),
                ("NP".to_owned(), 0, 1),
                ("VP".to_owned(), 1, 4),
                ("NP".to_owned(), 2, 4),
            ]
        );
        assert_eq!(t.depth(), 4);
    }

    #[test]
    fn validate_checks_shape_and_labels() {
        let tags = TagInventory::ptb();
        let g = Glyphs::default();
        assert!(fox_tree().validate(tags, g).is_ok());
        assert!(matches!(
            ParseTree::internal("S", vec![]).validate(tags, g),
            Err(CpError::EmptyNode)
        ));
        assert!(matches!(
            ParseTree::leaf("NN", "two words").validate(tags, g),
            Err(CpError::EmptyNode)
        ));
        assert!(matches!(
            ParseTree::internal("QQ", vec![ParseTree::leaf("NN", "x")]).validate(tags, g),
            Err(CpError::InvalidTag(_))
        ));
    }

    use super::testgen::tree_strategy;

    proptest! {
        #[test]
        fn parse_inverts_linearize(tree in tree_strategy()) {
            let s = linearize(&tree);
            let back = parse_linearized(&s, TagInventory::ptb()).unwrap();
            prop_assert_eq!(back, tree);
        }

        #[test]
        fn linearize_of_parse_is_canonical(tree in tree_strategy(), seed in 0u64..1000) {
            // Perturb spacing deterministically, reparse, re-render.
            let s = linearize(&tree);
            let mut noisy = String::new();
            let mut x = seed;
            for c in s.chars() {
                noisy.push(c);
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if c == ' ' && x % 3 == 0 {
                    noisy.push_str("  \t");
                }
            }
            let back = parse_linearized(&noisy, TagInventory::ptb()).unwrap();
            prop_assert_eq!(linearize(&back), s);
        }
    }
}
