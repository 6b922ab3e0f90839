//! The input-independent context-free shape grammar for bracketed trees.
//!
//! Productions follow the classic recursive shape: a tree is a node; a
//! node is a clause, phrase, or word; clause and phrase nodes wrap a label
//! and child nodes in bracket glyphs; a word node wraps a part-of-speech
//! tag and one free word, matched by a wildcard token class. Spacing
//! terminals are carried along verbatim — they tokenize to nothing and act
//! as ε.
//!
//! Two deliberate extensions of the base shape:
//!
//! * `allow_childless` switches internal nodes from one-or-more children
//!   to zero-or-more. Off by default: bracket scoring treats `[S]` as
//!   malformed, so the grammar should not steer a decoder into it.
//! * `function_tags` admits suffixed labels (`NP-SBJ`, `S-1`, `NP=2`) as
//!   internal-node labels. Suffixed labels only exist at the token level
//!   when the vocabulary contains them as single tokens, so the
//!   alternatives are found by scanning the vocabulary rather than by
//!   concatenation.

use std::collections::BTreeSet;

use super::{CpError, Glyphs, TagInventory};
use crate::grammar::{
    compile_cfg, nt, t, CfgAutomaton, CfgOptions, GrammarSpec, Production,
};
use crate::vocab::{Tokenizer, Vocabulary};

/// Wildcard placeholder naming the open word class in the grammar.
pub const WORD_WILDCARD: &str = "<word>";

/// Options for [`build_lite_cfg`].
#[derive(Debug, Clone)]
pub struct LiteCfgOptions {
    /// Permit internal nodes with zero children (`[S]`).
    pub allow_childless: bool,
    /// Admit function-tagged / coindexed labels present in the vocabulary.
    pub function_tags: bool,
    pub glyphs: Glyphs,
}

impl Default for LiteCfgOptions {
    fn default() -> Self {
        LiteCfgOptions { allow_childless: false, function_tags: false, glyphs: Glyphs::default() }
    }
}

/// Whether `part` is a numeric coindex: a nonzero digit then digits.
fn is_index(part: &str) -> bool {
    let mut chars = part.chars();
    matches!(chars.next(), Some('1'..='9')) && chars.all(|c| c.is_ascii_digit())
}

/// If `token` is `BASE` plus valid `-FUNC`/`-N`/`=N` suffixes with `BASE`
/// in the clause or phrase inventory, returns the base tag.
fn suffixed_base<'a>(token: &'a str, tags: &TagInventory) -> Option<&'a str> {
    let cut = token.find(['-', '='])?;
    if cut == 0 {
        return None;
    }
    let base = &token[..cut];
    if !tags.clause_tags().contains(base) && !tags.phrase_tags().contains(base) {
        return None;
    }
    let mut parts = token[cut..].split(['-', '=']).filter(|p| !p.is_empty()).peekable();
    parts.peek()?;
    parts
        .all(|p| tags.function_tags().contains(p) || is_index(p))
        .then_some(base)
}

/// Builds the shape grammar and the wildcard configuration for it.
///
/// The vocabulary is consulted only when `function_tags` is on, to find
/// suffixed label tokens.
pub fn lite_grammar(
    tags: &TagInventory,
    options: &LiteCfgOptions,
    vocab: &Vocabulary,
) -> Result<(GrammarSpec, CfgOptions), CpError> {
    // A tag the vocabulary cannot express can never be generated; drop its
    // production rather than failing the whole compile.
    let expressible = |tag: &&String| -> bool {
        let mut pieces = tag.split_whitespace().peekable();
        pieces.peek().is_some() && pieces.all(|w| vocab.contains(w))
    };
    let clause: Vec<&String> = tags.clause_tags().iter().filter(expressible).collect();
    let phrase: Vec<&String> = tags.phrase_tags().iter().filter(expressible).collect();
    let word: Vec<&String> = tags.word_tags().iter().filter(expressible).collect();
    if clause.is_empty() && phrase.is_empty() && word.is_empty() {
        return Err(CpError::EmptyTags);
    }
    let open = options.glyphs.open.to_string();
    let close = options.glyphs.close.to_string();
    let mut prods = vec![
        Production { lhs: "root".into(), rhs: vec![nt("tree")] },
        Production { lhs: "tree".into(), rhs: vec![nt("node")] },
        Production {
            lhs: "word".into(),
            rhs: vec![
                nt("spaced_open"),
                t(" "),
                nt("word_tag"),
                t(" "),
                t(WORD_WILDCARD),
                nt("spaced_close"),
            ],
        },
        Production { lhs: "spaced_open".into(), rhs: vec![t(" "), t(&open)] },
        Production { lhs: "spaced_close".into(), rhs: vec![t(" "), t(&close)] },
    ];
    for class in ["clause", "phrase"] {
        prods.push(Production {
            lhs: class.into(),
            rhs: vec![
                nt("spaced_open"),
                t(" "),
                nt(format!("{class}_tag")),
                nt("kids"),
                nt("spaced_close"),
            ],
        });
    }
    for (class, set) in [("clause", &clause), ("phrase", &phrase)] {
        if !set.is_empty() {
            prods.push(Production { lhs: "node".into(), rhs: vec![nt(class)] });
        }
        for tag in set {
            prods.push(Production { lhs: format!("{class}_tag"), rhs: vec![t(tag.as_str())] });
        }
    }
    if !word.is_empty() {
        prods.push(Production { lhs: "node".into(), rhs: vec![nt("word")] });
    }
    for tag in &word {
        prods.push(Production { lhs: "word_tag".into(), rhs: vec![t(tag.as_str())] });
    }
    if options.allow_childless {
        prods.push(Production { lhs: "kids".into(), rhs: vec![] });
    } else {
        prods.push(Production { lhs: "kids".into(), rhs: vec![nt("node")] });
    }
    prods.push(Production { lhs: "kids".into(), rhs: vec![nt("node"), nt("kids")] });

    // Every token usable as a label or glyph is barred from the word class.
    let mut excluded: BTreeSet<String> = tags.all_tags().map(str::to_owned).collect();
    excluded.insert(open.clone());
    excluded.insert(close.clone());
    if options.function_tags {
        for (_, token) in vocab.iter() {
            if let Some(base) = suffixed_base(token, tags) {
                let class =
                    if tags.clause_tags().contains(base) { "clause_tag" } else { "phrase_tag" };
                prods.push(Production { lhs: class.into(), rhs: vec![t(token)] });
                excluded.insert(token.to_owned());
            }
        }
    }
    let spec = GrammarSpec::from_productions("root", prods)?;
    let cfg = CfgOptions {
        wildcard_terminal: Some(WORD_WILDCARD.to_owned()),
        wildcard_excluded: excluded,
    };
    Ok((spec, cfg))
}

/// Compiles the shape grammar into a lazy constraint automaton.
///
/// Inventory tags the vocabulary cannot express are dropped (they could
/// never be generated); at least one tag must survive.
pub fn build_lite_cfg(
    tags: &TagInventory,
    options: &LiteCfgOptions,
    tok: &dyn Tokenizer,
) -> Result<CfgAutomaton, CpError> {
    let (spec, cfg) = lite_grammar(tags, options, tok.vocab())?;
    Ok(compile_cfg(&spec, tok, &cfg)?)
}
