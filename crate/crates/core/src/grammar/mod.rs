//! Grammar descriptions and their compilation into constraint automata.
//!
//! A [`GrammarSpec`] is a plain symbolic grammar: nonterminals, terminal
//! strings, productions, and a start symbol. Terminals are tokenized by a
//! [`Tokenizer`](crate::vocab::Tokenizer) at compilation time, so a single
//! terminal may span several tokens (or none: a terminal that tokenizes to
//! nothing, such as a lone space under whitespace tokenization, acts as ε).
//!
//! Compilation targets the [`ConstraintAutomaton`] contract from
//! [`automaton`]. Right-linear grammars compile to a materialized [`Dfa`]
//! via [`compile_regular`]; general context-free grammars run lazily through
//! the Earley-based recognizer in [`earley`].

mod automaton;
pub mod ebnf;
mod earley;
mod regular;

pub use automaton::{
    enumerate_language, ConstraintAutomaton, Dfa, Kernel, LazyAutomaton, StateId, TokenSet,
    EOS_SINK,
};
pub use earley::{compile_cfg, CfgAutomaton, CfgOptions, ChartState};
pub use regular::compile_regular;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::vocab::{TokenId, VocabError};

/// Errors raised while validating, parsing, or compiling grammars, and by
/// automaton transitions.
#[derive(Debug, Error)]
pub enum GrammarError {
    /// A production references a symbol that is neither a declared
    /// nonterminal nor a declared terminal.
    #[error("undefined symbol {symbol:?} in production `{production}`")]
    UndefinedSymbol { symbol: String, production: String },
    /// The start symbol is not a nonterminal of the grammar.
    #[error("start symbol {0:?} is not a nonterminal")]
    UndefinedStart(String),
    /// A production's left-hand side is not in the nonterminal set.
    #[error("production `{production}` has undefined lhs {lhs:?}")]
    UndefinedLhs { lhs: String, production: String },
    /// The grammar is not right-linear, so it cannot compile to a DFA.
    #[error("production `{production}` is not right-linear")]
    NotRegular { production: String },
    /// A terminal could not be tokenized under the given vocabulary.
    #[error("terminal {terminal:?} cannot be tokenized: {source}")]
    UnknownToken { terminal: String, source: VocabError },
    /// A terminal tokenizes to the EOS token, which automata reserve for
    /// the end-of-sequence transition.
    #[error("terminal {0:?} maps to the reserved EOS token")]
    ReservedEos(String),
    /// The grammar derives no terminal string at all.
    #[error("grammar derives the empty language")]
    EmptyLanguage,
    /// A token outside the allowed set was fed to `advance`.
    #[error("token {token} rejected in state {state}")]
    TokenRejected { state: StateId, token: TokenId },
    /// A grammar file failed to parse.
    #[error("grammar parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    /// Malformed automaton tables passed to a direct constructor.
    #[error("malformed automaton: {0}")]
    MalformedAutomaton(String),
}

/// One grammar symbol: a nonterminal name or a terminal string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Nonterminal(String),
    Terminal(String),
}

impl Symbol {
    pub fn nonterminal(&self) -> Option<&str> {
        match self {
            Symbol::Nonterminal(n) => Some(n),
            Symbol::Terminal(_) => None,
        }
    }

    pub fn terminal(&self) -> Option<&str> {
        match self {
            Symbol::Terminal(t) => Some(t),
            Symbol::Nonterminal(_) => None,
        }
    }
}

/// Shorthand constructor for [`Symbol::Nonterminal`].
pub fn nt(name: impl Into<String>) -> Symbol {
    Symbol::Nonterminal(name.into())
}

/// Shorthand constructor for [`Symbol::Terminal`].
pub fn t(text: impl Into<String>) -> Symbol {
    Symbol::Terminal(text.into())
}

/// A single production `lhs -> rhs`. An empty `rhs` derives ε.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ::=", self.lhs)?;
        if self.rhs.is_empty() {
            write!(f, " ε")?;
        }
        for sym in &self.rhs {
            match sym {
                Symbol::Nonterminal(n) => write!(f, " {n}")?,
                Symbol::Terminal(s) => write!(f, " {s:?}")?,
            }
        }
        Ok(())
    }
}

/// A symbolic grammar: nonterminal and terminal alphabets, productions, and
/// a start symbol.
///
/// Invariants (checked by [`GrammarSpec::validate`]): the start symbol is a
/// nonterminal; every production's lhs is a nonterminal; every rhs symbol is
/// in one of the two alphabets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarSpec {
    pub nonterminals: BTreeSet<String>,
    pub terminals: BTreeSet<String>,
    pub productions: Vec<Production>,
    pub start: String,
}

impl GrammarSpec {
    /// Builds a spec from productions alone, inferring the alphabets: every
    /// lhs and every `Symbol::Nonterminal` is a nonterminal, every
    /// `Symbol::Terminal` a terminal. Validates the result.
    pub fn from_productions(
        start: impl Into<String>,
        productions: Vec<Production>,
    ) -> Result<Self, GrammarError> {
        let mut nonterminals: BTreeSet<String> = BTreeSet::new();
        let mut terminals = BTreeSet::new();
        for p in &productions {
            nonterminals.insert(p.lhs.clone());
        }
        for p in &productions {
            for sym in &p.rhs {
                match sym {
                    Symbol::Nonterminal(n) => {
                        if !nonterminals.contains(n) {
                            return Err(GrammarError::UndefinedSymbol {
                                symbol: n.clone(),
                                production: p.to_string(),
                            });
                        }
                    }
                    Symbol::Terminal(s) => {
                        terminals.insert(s.clone());
                    }
                }
            }
        }
        let spec = GrammarSpec { nonterminals, terminals, productions, start: start.into() };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the structural invariants listed on the type.
    pub fn validate(&self) -> Result<(), GrammarError> {
        if !self.nonterminals.contains(&self.start) {
            return Err(GrammarError::UndefinedStart(self.start.clone()));
        }
        for p in &self.productions {
            if !self.nonterminals.contains(&p.lhs) {
                return Err(GrammarError::UndefinedLhs {
                    lhs: p.lhs.clone(),
                    production: p.to_string(),
                });
            }
            for sym in &p.rhs {
                let (name, known) = match sym {
                    Symbol::Nonterminal(n) => (n, self.nonterminals.contains(n)),
                    Symbol::Terminal(s) => (s, self.terminals.contains(s)),
                };
                if !known {
                    return Err(GrammarError::UndefinedSymbol {
                        symbol: name.clone(),
                        production: p.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Productions whose lhs is `name`, in declaration order.
    pub fn productions_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Production> {
        self.productions.iter().filter(move |p| p.lhs == name)
    }

    /// True when every production is a sequence of terminals followed by at
    /// most one trailing nonterminal — the shape [`compile_regular`] accepts.
    pub fn is_right_linear(&self) -> bool {
        self.productions.iter().all(|p| {
            p.rhs
                .iter()
                .enumerate()
                .all(|(i, s)| s.terminal().is_some() || i + 1 == p.rhs.len())
        })
    }
}
