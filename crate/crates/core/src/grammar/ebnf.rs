//! Parser for the textual grammar file format.
//!
//! One production per statement, terminated by `;`:
//!
//! ```text
//! # comments run to end of line
//! s      ::= "[s]" entity rest | ;
//! entity ::= "Mona Lisa" | "Louvre Museum" ;
//! rest   ::= ("[r]" | "[o]") entity* ;
//! ```
//!
//! Bare identifiers are nonterminals, double-quoted strings are terminals
//! (escapes: `\"`, `\\`, `\n`, `\t`). Sequence items may be separated by
//! whitespace or commas. `|` separates alternatives; an empty alternative
//! derives ε. Parenthesized groups and the `*`, `+`, `?` suffixes are
//! desugared into fresh auxiliary nonterminals (named `<base>%<n>`, a shape
//! user identifiers cannot collide with). The first production's lhs is the
//! start symbol.

use super::{GrammarError, GrammarSpec, Production, Symbol};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Literal(String),
    Define, // ::=
    Pipe,
    Comma,
    Semi,
    LParen,
    RParen,
    Star,
    Plus,
    Question,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

fn err(line: usize, message: impl Into<String>) -> GrammarError {
    GrammarError::Parse { line, message: message.into() }
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { chars: text.chars().peekable(), line: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next();
        if c == Some('\n') {
            self.line += 1;
        }
        c
    }

    fn lex(mut self) -> Result<Vec<(Tok, usize)>, GrammarError> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            match c {
                '#' => while !matches!(self.bump(), None | Some('\n')) {},
                c if c.is_whitespace() => {
                    self.bump();
                }
                '"' => {
                    let line = self.line;
                    self.bump();
                    let mut lit = String::new();
                    loop {
                        match self.bump() {
                            None | Some('\n') => {
                                return Err(err(line, "unterminated string literal"))
                            }
                            Some('"') => break,
                            Some('\\') => match self.bump() {
                                Some('"') => lit.push('"'),
                                Some('\\') => lit.push('\\'),
                                Some('n') => lit.push('\n'),
                                Some('t') => lit.push('\t'),
                                other => {
                                    return Err(err(
                                        line,
                                        format!("bad escape {:?} in string literal", other),
                                    ))
                                }
                            },
                            Some(ch) => lit.push(ch),
                        }
                    }
                    out.push((Tok::Literal(lit), line));
                }
                ':' => {
                    let line = self.line;
                    self.bump();
                    if self.bump() != Some(':') || self.bump() != Some('=') {
                        return Err(err(line, "expected `::=`"));
                    }
                    out.push((Tok::Define, line));
                }
                '|' => {
                    out.push((Tok::Pipe, self.line));
                    self.bump();
                }
                ',' => {
                    out.push((Tok::Comma, self.line));
                    self.bump();
                }
                ';' => {
                    out.push((Tok::Semi, self.line));
                    self.bump();
                }
                '(' => {
                    out.push((Tok::LParen, self.line));
                    self.bump();
                }
                ')' => {
                    out.push((Tok::RParen, self.line));
                    self.bump();
                }
                '*' => {
                    out.push((Tok::Star, self.line));
                    self.bump();
                }
                '+' => {
                    out.push((Tok::Plus, self.line));
                    self.bump();
                }
                '?' => {
                    out.push((Tok::Question, self.line));
                    self.bump();
                }
                c if c.is_alphanumeric() || c == '_' => {
                    let line = self.line;
                    let mut ident = String::new();
                    while let Some(&ch) = self.chars.peek() {
                        if ch.is_alphanumeric() || ch == '_' {
                            ident.push(ch);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    out.push((Tok::Ident(ident), line));
                }
                other => return Err(err(self.line, format!("unexpected character {other:?}"))),
            }
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    productions: Vec<Production>,
    aux_count: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|&(_, l)| l)
            .unwrap_or(1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        tok
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), GrammarError> {
        let line = self.line();
        match self.bump() {
            Some(tok) if tok == want => Ok(()),
            _ => Err(err(line, format!("expected {what}"))),
        }
    }

    fn fresh(&mut self, base: &str) -> String {
        self.aux_count += 1;
        format!("{base}%{}", self.aux_count)
    }

    /// alts ::= seq ('|' seq)*
    fn alts(&mut self, lhs: &str) -> Result<Vec<Vec<Symbol>>, GrammarError> {
        let mut out = vec![self.seq(lhs)?];
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            out.push(self.seq(lhs)?);
        }
        Ok(out)
    }

    /// seq ::= (item ','?)* — possibly empty (ε).
    fn seq(&mut self, lhs: &str) -> Result<Vec<Symbol>, GrammarError> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Ident(_)) | Some(Tok::Literal(_)) | Some(Tok::LParen) => {
                    out.push(self.item(lhs)?);
                    if self.peek() == Some(&Tok::Comma) {
                        self.bump();
                    }
                }
                _ => return Ok(out),
            }
        }
    }

    /// item ::= primary ('*' | '+' | '?')*
    fn item(&mut self, lhs: &str) -> Result<Symbol, GrammarError> {
        let mut sym = self.primary(lhs)?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    sym = self.repeat(lhs, sym, true);
                }
                Some(Tok::Plus) => {
                    self.bump();
                    let star = self.repeat(lhs, sym.clone(), true);
                    let plus = self.fresh(lhs);
                    self.productions
                        .push(Production { lhs: plus.clone(), rhs: vec![sym, star] });
                    sym = Symbol::Nonterminal(plus);
                }
                Some(Tok::Question) => {
                    self.bump();
                    sym = self.repeat(lhs, sym, false);
                }
                _ => return Ok(sym),
            }
        }
    }

    /// Allocates `aux ::= ε | sym aux` (star) or `aux ::= ε | sym` (option).
    fn repeat(&mut self, lhs: &str, sym: Symbol, star: bool) -> Symbol {
        let aux = self.fresh(lhs);
        self.productions.push(Production { lhs: aux.clone(), rhs: vec![] });
        let mut rhs = vec![sym];
        if star {
            rhs.push(Symbol::Nonterminal(aux.clone()));
        }
        self.productions.push(Production { lhs: aux.clone(), rhs });
        Symbol::Nonterminal(aux)
    }

    fn primary(&mut self, lhs: &str) -> Result<Symbol, GrammarError> {
        let line = self.line();
        match self.bump() {
            Some(Tok::Ident(name)) => Ok(Symbol::Nonterminal(name)),
            Some(Tok::Literal(text)) => Ok(Symbol::Terminal(text)),
            Some(Tok::LParen) => {
                let group = self.fresh(lhs);
                let alts = self.alts(&group)?;
                self.expect(Tok::RParen, "`)`")?;
                for rhs in alts {
                    self.productions.push(Production { lhs: group.clone(), rhs });
                }
                Ok(Symbol::Nonterminal(group))
            }
            _ => Err(err(line, "expected a symbol")),
        }
    }
}

/// Parses the grammar file format into a validated [`GrammarSpec`].
pub fn parse_grammar(text: &str) -> Result<GrammarSpec, GrammarError> {
    let tokens = Lexer::new(text).lex()?;
    let mut parser = Parser { tokens, pos: 0, productions: Vec::new(), aux_count: 0 };
    let mut start: Option<String> = None;
    while parser.peek().is_some() {
        let line = parser.line();
        let lhs = match parser.bump() {
            Some(Tok::Ident(name)) => name,
            _ => return Err(err(line, "expected a nonterminal name")),
        };
        parser.expect(Tok::Define, "`::=`")?;
        let alts = parser.alts(&lhs)?;
        parser.expect(Tok::Semi, "`;` after production")?;
        for rhs in alts {
            parser.productions.push(Production { lhs: lhs.clone(), rhs });
        }
        start.get_or_insert(lhs);
    }
    let start = start.ok_or_else(|| err(1, "grammar file contains no productions"))?;
    let productions = std::mem::take(&mut parser.productions);
    GrammarSpec::from_productions(start, productions)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::{compile_cfg, compile_regular, CfgOptions, ConstraintAutomaton};
    use super::*;
    use crate::vocab::{Tokenizer, Vocabulary, WhitespaceTokenizer};

    fn tok(corpus: &str) -> WhitespaceTokenizer {
        WhitespaceTokenizer::new(Arc::new(Vocabulary::from_corpus(&[corpus]).unwrap()))
    }

    #[test]
    fn parses_alternatives_and_epsilon() {
        let g = parse_grammar("s ::= \"a\" s | ;").unwrap();
        assert_eq!(g.start, "s");
        assert_eq!(g.productions.len(), 2);
        assert!(g.productions[1].rhs.is_empty());
        let tok = tok("a");
        let dfa = compile_regular(&g, &tok).unwrap();
        assert!(dfa.accepts(&[]));
        assert!(dfa.accepts(&tok.tokenize("a a a").unwrap()));
    }

    #[test]
    fn commas_and_whitespace_both_separate() {
        let a = parse_grammar("s ::= \"a\", \"b\", \"c\" ;").unwrap();
        let b = parse_grammar("s ::= \"a\" \"b\" \"c\" ;").unwrap();
        assert_eq!(a.productions, b.productions);
    }

    #[test]
    fn star_plus_question_desugar() {
        let g = parse_grammar("s ::= \"a\"* \"b\"+ \"c\"? ;").unwrap();
        let tok = tok("a b c");
        let cfg = compile_cfg(&g, &tok, &CfgOptions::default()).unwrap();
        for (text, want) in [
            ("b", true),
            ("a a b b c", true),
            ("b c", true),
            ("a", false),
            ("c", false),
            ("a b c c", false),
        ] {
            assert_eq!(cfg.accepts(&tok.tokenize(text).unwrap()), want, "{text}");
        }
    }

    #[test]
    fn groups_allow_nested_alternation() {
        let g = parse_grammar("s ::= (\"a\" | \"b\" \"c\")* \"d\" ;").unwrap();
        let tok = tok("a b c d");
        let cfg = compile_cfg(&g, &tok, &CfgOptions::default()).unwrap();
        for (text, want) in [
            ("d", true),
            ("a d", true),
            ("b c a d", true),
            ("b d", false),
            ("c d", false),
        ] {
            assert_eq!(cfg.accepts(&tok.tokenize(text).unwrap()), want, "{text}");
        }
    }

    #[test]
    fn string_escapes() {
        let g = parse_grammar(r#"s ::= "say \"hi\"" "a\\b" ;"#).unwrap();
        assert_eq!(
            g.productions[0].rhs,
            vec![
                Symbol::Terminal("say \"hi\"".into()),
                Symbol::Terminal("a\\b".into())
            ]
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "s ::= \"a\" ;\nt ::= \"b\" @ ;\n";
        match parse_grammar(text) {
            Err(GrammarError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_grammar("s ::= \"unterminated ;") {
            Err(GrammarError::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("unterminated"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_grammar("s ::= \"a\"") {
            Err(GrammarError::Parse { message, .. }) => assert!(message.contains(";")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn comments_are_skipped() {
        let g = parse_grammar("# header\ns ::= \"a\" ; # trailing\n# footer\n").unwrap();
        assert_eq!(g.productions.len(), 1);
    }

    #[test]
    fn undefined_reference_is_reported() {
        assert!(matches!(
            parse_grammar("s ::= ghost ;"),
            Err(GrammarError::UndefinedSymbol { symbol, .. }) if symbol == "ghost"
        ));
    }

    #[test]
    fn first_lhs_is_start() {
        let g = parse_grammar("top ::= low ; low ::= \"x\" ;").unwrap();
        assert_eq!(g.start, "top");
    }
}
