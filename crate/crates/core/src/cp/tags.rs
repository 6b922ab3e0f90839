//! Tag inventories for constituency trees.
//!
//! An inventory groups tags into clause-level labels, phrase-level labels,
//! word-level (part-of-speech) tags, and function tags. Labels seen in tree
//! output may carry `-FUNC` suffixes and numeric coindices (`NP-SBJ-1`);
//! [`TagInventory::strip`] reduces such a label to its base tag the way
//! bracket scorers conventionally do, except that tags known verbatim
//! (`-NONE-`, `-LRB-`, …) are never split.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use super::CpError;

/// The four tag classes of a constituency annotation scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagInventory {
    clause: BTreeSet<String>,
    phrase: BTreeSet<String>,
    word: BTreeSet<String>,
    function: BTreeSet<String>,
}

impl TagInventory {
    /// Builds an inventory from explicit tag lists (primarily for tests).
    pub fn from_sets<I, J, K, L>(clause: I, phrase: J, word: K, function: L) -> Self
    where
        I: IntoIterator,
        J: IntoIterator,
        K: IntoIterator,
        L: IntoIterator,
        I::Item: Into<String>,
        J::Item: Into<String>,
        K::Item: Into<String>,
        L::Item: Into<String>,
    {
        TagInventory {
            clause: clause.into_iter().map(Into::into).collect(),
            phrase: phrase.into_iter().map(Into::into).collect(),
            word: word.into_iter().map(Into::into).collect(),
            function: function
                .into_iter()
                .map(|t| t.into().trim_start_matches('-').to_owned())
                .collect(),
        }
    }

    /// The standard Penn Treebank inventories, compiled in.
    pub fn ptb() -> &'static TagInventory {
        static PTB: OnceLock<TagInventory> = OnceLock::new();
        PTB.get_or_init(|| {
            TagInventory::parse(include_str!("ptb_tags.ini"))
                .expect("bundled tag inventory must parse")
        })
    }

    /// Parses the sectioned inventory format.
    ///
    /// Sections are `[CLAUSE]`, `[PHRASE]`, `[WORD]`, `[FUNCTION]`, one tag
    /// per line; `;` starts a comment line. The `[FUNCTION]` section is
    /// optional, as are leading dashes on its tags.
    pub fn parse(text: &str) -> Result<Self, CpError> {
        let mut inv = TagInventory {
            clause: BTreeSet::new(),
            phrase: BTreeSet::new(),
            word: BTreeSet::new(),
            function: BTreeSet::new(),
        };
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let entry = raw.trim();
            if entry.is_empty() || entry.starts_with(';') {
                continue;
            }
            if let Some(name) = entry.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(match name {
                    "CLAUSE" => "clause",
                    "PHRASE" => "phrase",
                    "WORD" => "word",
                    "FUNCTION" => "function",
                    other => {
                        return Err(CpError::Parse {
                            line,
                            message: format!("unknown section [{other}]"),
                        })
                    }
                });
                continue;
            }
            if entry.split_whitespace().count() != 1 {
                return Err(CpError::Parse {
                    line,
                    message: format!("tag {entry:?} contains whitespace"),
                });
            }
            let set = match section {
                Some("clause") => &mut inv.clause,
                Some("phrase") => &mut inv.phrase,
                Some("word") => &mut inv.word,
                Some("function") => &mut inv.function,
                _ => {
                    return Err(CpError::Parse {
                        line,
                        message: format!("tag {entry:?} appears before any section header"),
                    })
                }
            };
            let entry = if matches!(section, Some("function")) {
                entry.trim_start_matches('-')
            } else {
                entry
            };
            if !set.insert(entry.to_owned()) {
                return Err(CpError::Parse {
                    line,
                    message: format!("duplicate tag {entry:?} in section"),
                });
            }
        }
        Ok(inv)
    }

    /// Loads an inventory file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CpError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn clause_tags(&self) -> &BTreeSet<String> {
        &self.clause
    }

    pub fn phrase_tags(&self) -> &BTreeSet<String> {
        &self.phrase
    }

    pub fn word_tags(&self) -> &BTreeSet<String> {
        &self.word
    }

    pub fn function_tags(&self) -> &BTreeSet<String> {
        &self.function
    }

    /// Every known base tag (clause ∪ phrase ∪ word), sorted.
    pub fn all_tags(&self) -> impl Iterator<Item = &str> {
        self.clause
            .union(&self.phrase)
            .chain(self.word.iter())
            .map(String::as_str)
    }

    /// Internal-node labels (clause ∪ phrase), sorted.
    pub fn internal_tags(&self) -> impl Iterator<Item = &str> {
        self.clause.union(&self.phrase).map(String::as_str)
    }

    /// Reduces a possibly suffixed label to its base tag.
    ///
    /// Tags in the inventories verbatim stay whole (`-NONE-`); anything
    /// else is cut at its first `-` or `=`, so `NP-SBJ-1` and `NP=2`
    /// become `NP`.
    pub fn strip<'a>(&self, tag: &'a str) -> &'a str {
        if self.clause.contains(tag) || self.phrase.contains(tag) || self.word.contains(tag) {
            return tag;
        }
        match tag.find(['-', '=']) {
            Some(at) if at > 0 => &tag[..at],
            _ => tag,
        }
    }

    /// Whether `tag` (after stripping) can label an internal node.
    pub fn internal_label_valid(&self, tag: &str) -> bool {
        let base = self.strip(tag);
        self.clause.contains(base) || self.phrase.contains(base)
    }

    /// Whether `tag` (after stripping) can tag a leaf.
    pub fn leaf_tag_valid(&self, tag: &str) -> bool {
        self.word.contains(self.strip(tag))
    }

    /// Whether `tag` (after stripping) is known at all.
    pub fn any_tag_valid(&self, tag: &str) -> bool {
        self.internal_label_valid(tag) || self.leaf_tag_valid(tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_ptb_inventory_loads() {
        let inv = TagInventory::ptb();
        assert_eq!(inv.clause_tags().len(), 5);
        assert!(inv.clause_tags().contains("SBARQ"));
        assert!(inv.phrase_tags().contains("WHADVP"));
        assert!(inv.word_tags().contains("PRP$"));
        assert!(inv.word_tags().contains("-NONE-"));
        assert!(inv.word_tags().contains("#"), "punctuation tags survive comments");
        assert!(inv.function_tags().contains("TTL"));
        assert!(inv.function_tags().contains("ADV"));
    }

    #[test]
    fn strip_handles_suffixes_and_verbatim_tags() {
        let inv = TagInventory::ptb();
        assert_eq!(inv.strip("NP"), "NP");
        assert_eq!(inv.strip("NP-SBJ"), "NP");
        assert_eq!(inv.strip("NP-SBJ-1"), "NP");
        assert_eq!(inv.strip("S=2"), "S");
        assert_eq!(inv.strip("-NONE-"), "-NONE-");
        assert_eq!(inv.strip("-LRB-"), "-LRB-");
        // Unknown with leading dash: no base before the dash, left whole.
        assert_eq!(inv.strip("-XYZ"), "-XYZ");
    }

    #[test]
    fn validity_respects_categories() {
        let inv = TagInventory::ptb();
        assert!(inv.internal_label_valid("S"));
        assert!(inv.internal_label_valid("NP-SBJ-2"));
        assert!(!inv.internal_label_valid("NN"));
        assert!(inv.leaf_tag_valid("NN"));
        assert!(inv.leaf_tag_valid("-NONE-"));
        assert!(!inv.leaf_tag_valid("NP"));
        assert!(!inv.any_tag_valid("XX"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(
            TagInventory::parse("[BOGUS]\nS\n"),
            Err(CpError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            TagInventory::parse("S\n"),
            Err(CpError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            TagInventory::parse("[CLAUSE]\nS\nS\n"),
            Err(CpError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            TagInventory::parse("[CLAUSE]\nS BAR\n"),
            Err(CpError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn function_dashes_are_normalized() {
        let a = TagInventory::parse("[FUNCTION]\n-SBJ\nTMP\n").unwrap();
        assert!(a.function_tags().contains("SBJ"));
        assert!(a.function_tags().contains("TMP"));
    }
}
