//! Token vocabularies and the tokenizer contract.
//!
//! A [`Vocabulary`] is a fixed, ordered list of token strings; a token id is
//! an index into that list. One token is designated as the end-of-sequence
//! (EOS) marker, which constraint automata expose as a real transition out of
//! accepting states. Vocabularies are immutable after construction and cheap
//! to share behind an [`Arc`].
//!
//! Two tokenizers are provided. [`WhitespaceTokenizer`] splits on Unicode
//! whitespace and is used for tasks whose markers (`[s]`, `[r]`, ...) are
//! whole whitespace-separated words. [`BracketTokenizer`] additionally splits
//! a configurable pair of bracket glyphs out of words, so that `[S [PRP I]]`
//! tokenizes to `[`, `S`, `[`, `PRP`, `I`, `]`, `]`; on detokenization it
//! re-glues brackets (no space after an open glyph, none before a close
//! glyph). Both tokenizers normalize inter-token whitespace to a single
//! space; that normalization is the only way `detokenize(tokenize(t))` may
//! differ from `t`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

/// Index of a token in its [`Vocabulary`].
pub type TokenId = u32;

/// Default end-of-sequence token string.
pub const DEFAULT_EOS: &str = "</s>";

/// Errors raised by vocabulary construction, I/O, and tokenization.
#[derive(Debug, Error)]
pub enum VocabError {
    /// The corpus contained no tokens at all.
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    /// A string could not be mapped to a token id.
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    /// The same token string appeared on two lines of a vocabulary file.
    #[error("duplicate token {token:?} on line {line}")]
    DuplicateToken { token: String, line: usize },
    /// A vocabulary file contained an empty token line.
    #[error("empty token on line {line}")]
    EmptyToken { line: usize },
    /// The first line of a vocabulary file was not an `#eos <string>` directive.
    #[error("line 1 must be an `#eos <string>` directive")]
    BadEosDirective,
    /// The EOS string named by the directive never appeared as a token line.
    #[error("EOS token {0:?} is not listed in the vocabulary body")]
    MissingEos(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// An immutable ordered set of token strings with a designated EOS token.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos_id: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list.
    ///
    /// Ids follow list order. If `eos` is absent from the list it is appended
    /// as the last token; if present, its existing id becomes the EOS id.
    pub fn from_tokens<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        eos: &str,
    ) -> Result<Self, VocabError> {
        let mut list: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() {
                return Err(VocabError::EmptyToken { line: list.len() + 1 });
            }
            if index.contains_key(&tok) {
                return Err(VocabError::DuplicateToken { line: list.len() + 1, token: tok });
            }
            index.insert(tok.clone(), list.len() as TokenId);
            list.push(tok);
        }
        if list.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        let eos_id = match index.get(eos) {
            Some(&id) => id,
            None => {
                let id = list.len() as TokenId;
                index.insert(eos.to_owned(), id);
                list.push(eos.to_owned());
                id
            }
        };
        Ok(Vocabulary { tokens: list, index, eos_id })
    }

    /// Builds a vocabulary from whitespace-separated corpus text.
    ///
    /// Tokens are the unique whitespace-separated strings of `corpus` in
    /// first-seen order, with [`DEFAULT_EOS`] appended last (or reused at its
    /// existing id if the corpus already contains it).
    pub fn from_corpus<S: AsRef<str>>(corpus: &[S]) -> Result<Self, VocabError> {
        let mut seen = HashMap::new();
        let mut tokens = Vec::new();
        for text in corpus {
            for word in text.as_ref().split_whitespace() {
                if !seen.contains_key(word) {
                    seen.insert(word.to_owned(), ());
                    tokens.push(word.to_owned());
                }
            }
        }
        if tokens.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        Self::from_tokens(tokens, DEFAULT_EOS)
    }

    /// Loads a vocabulary file: an `#eos <string>` directive on line 1, then
    /// one token per line, where the (zero-based) body line number is the
    /// token id. The EOS string must appear among the body lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Parses the vocabulary file format from a string. See [`Vocabulary::load`].
    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let mut lines = text.lines();
        let eos = match lines.next() {
            Some(first) => match first.strip_prefix("#eos ") {
                Some(rest) if !rest.trim().is_empty() => rest.trim().to_owned(),
                _ => return Err(VocabError::BadEosDirective),
            },
            None => return Err(VocabError::BadEosDirective),
        };
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2; // 1-based, after the directive
            let tok = line.trim_end_matches('\r');
            if tok.is_empty() {
                return Err(VocabError::EmptyToken { line: line_no });
            }
            if index.contains_key(tok) {
                return Err(VocabError::DuplicateToken { token: tok.to_owned(), line: line_no });
            }
            index.insert(tok.to_owned(), tokens.len() as TokenId);
            tokens.push(tok.to_owned());
        }
        if tokens.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        let eos_id = *index.get(&eos).ok_or(VocabError::MissingEos(eos))?;
        Ok(Vocabulary { tokens, index, eos_id })
    }

    /// Serializes to the vocabulary file format. Inverse of [`Vocabulary::parse`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#eos {}", self.eos());
        for tok in &self.tokens {
            let _ = writeln!(out, "{tok}");
        }
        out
    }

    /// Writes the vocabulary file format to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        fs::write(path, self.render())?;
        Ok(())
    }

    /// Number of tokens, EOS included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of the end-of-sequence token.
    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    /// String form of the end-of-sequence token.
    pub fn eos(&self) -> &str {
        &self.tokens[self.eos_id as usize]
    }

    /// Token string for `id`, if in range.
    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Token id for an exact string, if present.
    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Like [`Vocabulary::id`] but with a typed error for missing tokens.
    pub fn require(&self, token: &str) -> Result<TokenId, VocabError> {
        self.id(token).ok_or_else(|| VocabError::UnknownToken(token.to_owned()))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Iterates `(id, token)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.tokens.iter().enumerate().map(|(i, t)| (i as TokenId, t.as_str()))
    }
}

/// Maps between text and token-id sequences over a fixed [`Vocabulary`].
///
/// Implementations must be deterministic and must satisfy the round-trip
/// contract: `tokenize(detokenize(ids)) == ids` for any valid id sequence,
/// and `detokenize(tokenize(t))` equals `t` up to the implementation's
/// documented whitespace normalization.
pub trait Tokenizer: Send + Sync {
    /// The vocabulary this tokenizer maps into.
    fn vocab(&self) -> &Arc<Vocabulary>;

    /// Splits `text` into token ids. The empty string yields an empty
    /// sequence. Fails with [`VocabError::UnknownToken`] on out-of-vocabulary
    /// material.
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, VocabError>;

    /// Like [`tokenize`](Tokenizer::tokenize), but silently drops
    /// out-of-vocabulary pieces instead of failing. Used to turn free text
    /// (prompts, drafts from an external generator) into a conditioning
    /// context for scorers that only know this vocabulary.
    fn tokenize_lossy(&self, text: &str) -> Vec<TokenId>;

    /// Renders token ids back to text.
    ///
    /// All ids must be valid for the vocabulary (decoder outputs always are);
    /// invalid ids are a programmer error and panic.
    fn detokenize(&self, ids: &[TokenId]) -> String;

    /// Canonical text form: `detokenize(tokenize(text))`.
    fn normalize(&self, text: &str) -> Result<String, VocabError> {
        Ok(self.detokenize(&self.tokenize(text)?))
    }
}

/// Splits on Unicode whitespace; joins with single spaces.
#[derive(Debug, Clone)]
pub struct WhitespaceTokenizer {
    vocab: Arc<Vocabulary>,
}

impl WhitespaceTokenizer {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        WhitespaceTokenizer { vocab }
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        text.split_whitespace().map(|w| self.vocab.require(w)).collect()
    }

    fn tokenize_lossy(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().filter_map(|w| self.vocab.id(w)).collect()
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let tok = self.vocab.token(id).expect("token id out of range");
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }
}

/// Whitespace splitting plus standalone bracket glyphs.
///
/// The configured open/close glyphs are always their own tokens, so
/// `[S [PRP I]]` splits into `[ S [ PRP I ] ]`. Detokenization re-glues
/// them: no space after an open glyph, no space before a close glyph.
/// Vocabulary tokens other than the glyph tokens themselves must not
/// contain the glyph characters.
#[derive(Debug, Clone)]
pub struct BracketTokenizer {
    vocab: Arc<Vocabulary>,
    open: char,
    close: char,
}

impl BracketTokenizer {
    /// Default glyph pair: square brackets.
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        Self::with_glyphs(vocab, '[', ']')
    }

    pub fn with_glyphs(vocab: Arc<Vocabulary>, open: char, close: char) -> Self {
        BracketTokenizer { vocab, open, close }
    }

    pub fn glyphs(&self) -> (char, char) {
        (self.open, self.close)
    }
}

impl Tokenizer for BracketTokenizer {
    fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        let mut ids = Vec::new();
        let mut word = String::new();
        let flush = |word: &mut String, ids: &mut Vec<TokenId>| -> Result<(), VocabError> {
            if !word.is_empty() {
                ids.push(self.vocab.require(word)?);
                word.clear();
            }
            Ok(())
        };
        for ch in text.chars() {
            if ch.is_whitespace() {
                flush(&mut word, &mut ids)?;
            } else if ch == self.open || ch == self.close {
                flush(&mut word, &mut ids)?;
                ids.push(self.vocab.require(&ch.to_string())?);
            } else {
                word.push(ch);
            }
        }
        flush(&mut word, &mut ids)?;
        Ok(ids)
    }

    fn tokenize_lossy(&self, text: &str) -> Vec<TokenId> {
        let mut ids = Vec::new();
        let mut word = String::new();
        let flush = |word: &mut String, ids: &mut Vec<TokenId>| {
            if !word.is_empty() {
                if let Some(id) = self.vocab.id(word) {
                    ids.push(id);
                }
                word.clear();
            }
        };
        for ch in text.chars() {
            if ch.is_whitespace() {
                flush(&mut word, &mut ids);
            } else if ch == self.open || ch == self.close {
                flush(&mut word, &mut ids);
                if let Some(id) = self.vocab.id(&ch.to_string()) {
                    ids.push(id);
                }
            } else {
                word.push(ch);
            }
        }
        flush(&mut word, &mut ids);
        ids
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        let open = self.open.to_string();
        let close = self.close.to_string();
        let mut out = String::new();
        let mut prev_open = false;
        for &id in ids {
            let tok = self.vocab.token(id).expect("token id out of range");
            let glue = prev_open || tok == close;
            if !out.is_empty() && !glue {
                out.push(' ');
            }
            out.push_str(tok);
            prev_open = tok == open;
        }
        out
    }
}
