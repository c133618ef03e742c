//! Text syntax for formulas, vocabularies, and finite structures.
//!
//! Formula grammar (precedence from strongest to weakest: `~`, `&`, `|`,
//! `->`, `<->`; `->` is right-associative, `<->` left-associative;
//! quantifier scope extends maximally to the right):
//!
//! ```text
//! formula   := iff
//! iff       := impl ("<->" impl)*
//! impl      := or ("->" impl)?
//! or        := and ("|" and)*
//! and       := unary ("&" unary)*
//! unary     := "~" unary | "forall" vars "." formula | "exists" vars "." formula | primary
//! primary   := "true" | "false" | "(" formula ")" | atom
//! atom      := ident "(" term ("," term)* ")" | ident | term "=" term
//! ```
//!
//! Identifiers are ASCII alphanumeric and start with a letter. `#` starts a
//! comment to end of line. A file may carry an inline vocabulary header:
//! `vocab P/1 Q/2 c; <formula>`.
//!
//! The finite-structure format is line-oriented:
//!
//! ```text
//! domain 3; P = {(0,1),(2,2)}; Q = {}; c = 1
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::semantics::FiniteStructure;
use crate::syntax::{
    and, atom, eq, exists, forall, iff, implies, not, or, Formula, Term, VarName, Vocabulary,
};

/// Byte span into the input text; attached to every parse error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub begin: usize,
    pub end: usize,
}

impl SourceSpan {
    fn at(begin: usize, end: usize) -> Self {
        debug_assert!(begin <= end);
        SourceSpan { begin, end }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {}..{}: {msg}", span.begin, span.end)]
    Syntax { span: SourceSpan, msg: String },
    #[error("arity mismatch at {}..{}: predicate `{pred}` expects {expected} arguments, got {got}", span.begin, span.end)]
    ArityMismatch {
        span: SourceSpan,
        pred: String,
        expected: usize,
        got: usize,
    },
    #[error("undeclared symbol `{name}` at {}..{}", span.begin, span.end)]
    UndeclaredSymbol { span: SourceSpan, name: String },
    #[error("tuple {tuple:?} at {}..{} lies outside the domain 0..{domain}", span.begin, span.end)]
    OutOfDomainTuple {
        span: SourceSpan,
        tuple: Vec<usize>,
        domain: usize,
    },
    #[error("constant `{name}` has no interpretation")]
    MissingConstantInterpretation { name: String },
}

fn syn(span: SourceSpan, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { span, msg: msg.into() }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(usize),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Semi,
    Slash,
    Tilde,
    Amp,
    Bar,
    Arrow,
    DArrow,
    Equals,
}

#[derive(Clone, Debug)]
struct SpannedTok {
    tok: Tok,
    span: SourceSpan,
}

fn lex(text: &str) -> Result<Vec<SpannedTok>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                out.push(SpannedTok { tok: Tok::LParen, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b')' => {
                out.push(SpannedTok { tok: Tok::RParen, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'{' => {
                out.push(SpannedTok { tok: Tok::LBrace, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'}' => {
                out.push(SpannedTok { tok: Tok::RBrace, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b',' => {
                out.push(SpannedTok { tok: Tok::Comma, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'.' => {
                out.push(SpannedTok { tok: Tok::Dot, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b';' => {
                out.push(SpannedTok { tok: Tok::Semi, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'/' => {
                out.push(SpannedTok { tok: Tok::Slash, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'~' => {
                out.push(SpannedTok { tok: Tok::Tilde, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'&' => {
                out.push(SpannedTok { tok: Tok::Amp, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'|' => {
                out.push(SpannedTok { tok: Tok::Bar, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'>' {
                    out.push(SpannedTok { tok: Tok::Arrow, span: SourceSpan::at(i, i + 2) });
                    i += 2;
                } else {
                    return Err(syn(SourceSpan::at(i, i + 1), "expected `->`"));
                }
            }
            b'<' => {
                if i + 2 < bytes.len() && bytes[i + 1] == b'-' && bytes[i + 2] == b'>' {
                    out.push(SpannedTok { tok: Tok::DArrow, span: SourceSpan::at(i, i + 3) });
                    i += 3;
                } else {
                    return Err(syn(SourceSpan::at(i, i + 1), "expected `<->`"));
                }
            }
            b'=' => {
                out.push(SpannedTok { tok: Tok::Equals, span: SourceSpan::at(i, i + 1) });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: usize = text[start..i]
                    .parse()
                    .map_err(|_| syn(SourceSpan::at(start, i), "number too large"))?;
                out.push(SpannedTok { tok: Tok::Number(n), span: SourceSpan::at(start, i) });
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(SpannedTok {
                    tok: Tok::Ident(text[start..i].to_string()),
                    span: SourceSpan::at(start, i),
                });
            }
            _ => {
                return Err(syn(
                    SourceSpan::at(i, i + 1),
                    format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                ))
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Formula parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    toks: Vec<SpannedTok>,
    pos: usize,
    vocab: &'a Vocabulary,
    bound: Vec<VarName>,
    // first free use of each undeclared identifier, reported after the
    // formula itself parses (so truncation errors win)
    unbound: Vec<(VarName, SourceSpan)>,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&SpannedTok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<SpannedTok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eof_span(&self) -> SourceSpan {
        SourceSpan::at(self.end, self.end)
    }

    fn cur_span(&self) -> SourceSpan {
        self.peek().map(|t| t.span).unwrap_or_else(|| self.eof_span())
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<SourceSpan, ParseError> {
        match self.next() {
            Some(t) if t.tok == tok => Ok(t.span),
            Some(t) => Err(syn(t.span, format!("expected {what}"))),
            None => Err(syn(self.eof_span(), format!("expected {what}, found end of input"))),
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        // <-> is left-associative and binds weakest
        let mut lhs = self.impl_level()?;
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::DArrow)) {
            self.next();
            let rhs = self.impl_level()?;
            lhs = iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn impl_level(&mut self) -> Result<Formula, ParseError> {
        // -> is right-associative
        let lhs = self.or_level()?;
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Arrow)) {
            self.next();
            let rhs = self.impl_level()?;
            return Ok(implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or_level(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.and_level()?];
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Bar)) {
            self.next();
            parts.push(self.and_level()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { or(parts) })
    }

    fn and_level(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.unary()?];
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Amp)) {
            self.next();
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { and(parts) })
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Tilde) => {
                self.next();
                Ok(not(self.unary()?))
            }
            Some(Tok::Ident(kw)) if kw == "forall" || kw == "exists" => {
                self.next();
                let mut vars = Vec::new();
                loop {
                    match self.peek().map(|t| t.tok.clone()) {
                        Some(Tok::Ident(name)) if name != "forall" && name != "exists" => {
                            let span = self.next().unwrap().span;
                            if self.vocab.predicate_arity(&name).is_some()
                                || self.vocab.is_constant(&name)
                            {
                                return Err(syn(
                                    span,
                                    format!("`{name}` is a declared symbol and cannot be bound"),
                                ));
                            }
                            let v = VarName::new(name);
                            if vars.contains(&v) {
                                return Err(syn(span, format!("duplicate bound variable `{v}`")));
                            }
                            vars.push(v);
                        }
                        Some(Tok::Dot) => break,
                        _ => {
                            return Err(syn(self.cur_span(), "expected variable name or `.`"));
                        }
                    }
                }
                self.expect(Tok::Dot, "`.`")?;
                if vars.is_empty() {
                    return Err(syn(self.cur_span(), "quantifier binds no variables"));
                }
                let depth = self.bound.len();
                self.bound.extend(vars.iter().cloned());
                // scope extends maximally to the right
                let body = self.formula()?;
                self.bound.truncate(depth);
                Ok(if kw == "forall" { forall(vars, body) } else { exists(vars, body) })
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        let t = match self.next() {
            Some(t) => t,
            None => return Err(syn(self.eof_span(), "expected formula, found end of input")),
        };
        match t.tok {
            Tok::LParen => {
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(name) if name == "true" => Ok(Formula::True),
            Tok::Ident(name) if name == "false" => Ok(Formula::False),
            Tok::Ident(name) => {
                if matches!(self.peek().map(|t| &t.tok), Some(Tok::LParen)) {
                    // predicate application
                    self.next();
                    let mut args = Vec::new();
                    if !matches!(self.peek().map(|t| &t.tok), Some(Tok::RParen)) {
                        loop {
                            args.push(self.term()?);
                            match self.next() {
                                Some(SpannedTok { tok: Tok::Comma, .. }) => continue,
                                Some(SpannedTok { tok: Tok::RParen, .. }) => break,
                                Some(other) => return Err(syn(other.span, "expected `,` or `)`")),
                                None => {
                                    return Err(syn(
                                        self.eof_span(),
                                        "expected `,` or `)`, found end of input",
                                    ))
                                }
                            }
                        }
                    } else {
                        self.next();
                    }
                    match self.vocab.predicate_arity(&name) {
                        None => Err(ParseError::UndeclaredSymbol { span: t.span, name }),
                        Some(a) if a != args.len() => Err(ParseError::ArityMismatch {
                            span: t.span,
                            pred: name,
                            expected: a,
                            got: args.len(),
                        }),
                        Some(_) => Ok(atom(name, args)),
                    }
                } else if matches!(self.peek().map(|t| &t.tok), Some(Tok::Equals)) {
                    // term equality with identifier on the left
                    let lhs = self.ident_to_term(name, t.span)?;
                    self.next();
                    let rhs = self.term()?;
                    Ok(eq(lhs, rhs))
                } else if self.vocab.predicate_arity(&name) == Some(0) {
                    Ok(atom(name, vec![]))
                } else if self.vocab.predicate_arity(&name).is_some() {
                    Err(ParseError::ArityMismatch {
                        span: t.span,
                        pred: name.clone(),
                        expected: self.vocab.predicate_arity(&name).unwrap(),
                        got: 0,
                    })
                } else {
                    Err(syn(
                        t.span,
                        format!("`{name}` is not a formula here (bare terms need `= term`)"),
                    ))
                }
            }
            other => Err(syn(t.span, format!("unexpected token {other:?}"))),
        }
    }

    fn ident_to_term(&mut self, name: String, span: SourceSpan) -> Result<Term, ParseError> {
        if self.vocab.is_constant(&name) {
            Ok(Term::Const(name))
        } else if self.vocab.predicate_arity(&name).is_some() {
            Err(syn(span, format!("predicate `{name}` used as a term")))
        } else {
            let v = VarName::new(name);
            if !self.bound.contains(&v) {
                // closed-world parsing: unbound, undeclared identifiers are
                // rejected once the formula itself has parsed
                self.unbound.push((v.clone(), span));
            }
            Ok(Term::Var(v))
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.next() {
            Some(SpannedTok { tok: Tok::Ident(name), span }) => self.ident_to_term(name, span),
            Some(other) => Err(syn(other.span, "expected term")),
            None => Err(syn(self.eof_span(), "expected term, found end of input")),
        }
    }
}

/// Parses a single formula; all predicate and constant uses are checked
/// against `vocab`, and identifiers that are neither bound nor declared
/// constants are rejected.
pub fn parse_formula(text: &str, vocab: &Vocabulary) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, vocab, bound: Vec::new(), unbound: Vec::new(), end: text.len() };
    let f = p.formula()?;
    if let Some(t) = p.peek() {
        return Err(syn(t.span, "trailing input after formula"));
    }
    if let Some((v, span)) = p.unbound.first() {
        return Err(ParseError::UndeclaredSymbol { span: *span, name: v.0.clone() });
    }
    Ok(f)
}

/// Parses an optional inline `vocab` header followed by a formula:
/// `vocab P/1 Q/2 c; forall x. P(x)`. Returns the effective vocabulary.
pub fn parse_formula_with_header(
    text: &str,
    ambient: Option<&Vocabulary>,
) -> Result<(Formula, Vocabulary), ParseError> {
    let toks = lex(text)?;
    let mut vocab = ambient.cloned().unwrap_or_default();
    let mut pos = 0;
    if matches!(toks.first(), Some(SpannedTok { tok: Tok::Ident(k), .. }) if k == "vocab") {
        pos = 1;
        loop {
            match toks.get(pos) {
                Some(SpannedTok { tok: Tok::Semi, .. }) => {
                    pos += 1;
                    break;
                }
                Some(SpannedTok { tok: Tok::Ident(name), span }) => {
                    let name = name.clone();
                    let span = *span;
                    pos += 1;
                    if matches!(toks.get(pos), Some(SpannedTok { tok: Tok::Slash, .. })) {
                        pos += 1;
                        match toks.get(pos) {
                            Some(SpannedTok { tok: Tok::Number(a), .. }) => {
                                vocab
                                    .declare_predicate(&name, *a)
                                    .map_err(|e| syn(span, e.to_string()))?;
                                pos += 1;
                            }
                            _ => return Err(syn(span, "expected arity after `/`")),
                        }
                    } else {
                        vocab.declare_constant(&name).map_err(|e| syn(span, e.to_string()))?;
                    }
                }
                Some(t) => return Err(syn(t.span, "expected symbol declaration or `;`")),
                None => {
                    return Err(syn(
                        SourceSpan::at(text.len(), text.len()),
                        "unterminated vocab header",
                    ))
                }
            }
        }
    }
    let mut p = Parser { toks, pos, vocab: &vocab, bound: Vec::new(), unbound: Vec::new(), end: text.len() };
    let f = p.formula()?;
    if let Some(t) = p.peek() {
        return Err(syn(t.span, "trailing input after formula"));
    }
    if let Some((v, span)) = p.unbound.first() {
        return Err(ParseError::UndeclaredSymbol { span: *span, name: v.0.clone() });
    }
    Ok((f, vocab))
}

/// Parses a corpus file: sections separated by blank lines, each an optional
/// `vocab` header plus one formula. `#` comments are ignored.
pub fn parse_corpus(
    text: &str,
    ambient: Option<&Vocabulary>,
) -> Result<Vec<(Formula, Vocabulary)>, ParseError> {
    let mut out = Vec::new();
    let mut section = String::new();
    let flush = |section: &mut String, out: &mut Vec<(Formula, Vocabulary)>| -> Result<(), ParseError> {
        let content = section
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .collect::<Vec<_>>()
            .join("\n");
        if !content.trim().is_empty() {
            out.push(parse_formula_with_header(section, ambient)?);
        }
        section.clear();
        Ok(())
    };
    for line in text.lines() {
        let effective = line.split('#').next().unwrap_or("");
        if effective.trim().is_empty() {
            flush(&mut section, &mut out)?;
        } else {
            section.push_str(line);
            section.push('\n');
        }
    }
    flush(&mut section, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

fn term_text(t: &Term) -> String {
    match t {
        Term::Var(v) => v.0.clone(),
        Term::Const(c) => c.clone(),
    }
}

// binding strength levels, strongest first
const LVL_UNARY: u8 = 5;
const LVL_AND: u8 = 4;
const LVL_OR: u8 = 3;
const LVL_IMPL: u8 = 2;
const LVL_IFF: u8 = 1;

fn level(f: &Formula) -> u8 {
    match f {
        Formula::Atom(..) | Formula::Eq(..) | Formula::True | Formula::False => LVL_UNARY,
        Formula::Not(..) => LVL_UNARY,
        // quantifier scope runs maximally right, so a quantified operand of a
        // binary connective always needs parentheses
        Formula::Forall(..) | Formula::Exists(..) => 0,
        Formula::And(..) => LVL_AND,
        Formula::Or(..) => LVL_OR,
        Formula::Implies(..) => LVL_IMPL,
        Formula::Iff(..) => LVL_IFF,
    }
}

fn print_at(f: &Formula, min_level: u8, out: &mut String) {
    let lvl = level(f);
    let parens = lvl < min_level;
    if parens {
        out.push('(');
    }
    match f {
        Formula::Atom(p, args) => {
            out.push_str(p);
            if !args.is_empty() {
                out.push('(');
                for (i, t) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&term_text(t));
                }
                out.push(')');
            }
        }
        Formula::Eq(a, b) => {
            let _ = write!(out, "{} = {}", term_text(a), term_text(b));
        }
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Not(g) => {
            out.push('~');
            print_at(g, LVL_UNARY + 1, out);
        }
        Formula::And(fs) => {
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" & ");
                }
                print_at(g, LVL_AND + 1, out);
            }
        }
        Formula::Or(fs) => {
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                print_at(g, LVL_OR + 1, out);
            }
        }
        Formula::Implies(a, b) => {
            print_at(a, LVL_IMPL + 1, out);
            out.push_str(" -> ");
            // right-associative: the right operand may be another implication
            print_at(b, LVL_IMPL, out);
        }
        Formula::Iff(a, b) => {
            // left-associative
            print_at(a, LVL_IFF, out);
            out.push_str(" <-> ");
            print_at(b, LVL_IFF + 1, out);
        }
        Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
            out.push_str(if matches!(f, Formula::Forall(..)) { "forall" } else { "exists" });
            for v in vs {
                out.push(' ');
                out.push_str(&v.0);
            }
            out.push_str(". ");
            // flatten directly nested same-kind blocks
            print_at(body, 0, out);
        }
    }
    if parens {
        out.push(')');
    }
}

/// Canonical text for a formula; `parse_formula(print_formula(f))` yields a
/// formula structurally equal to `f` (modulo flattening of directly nested
/// same-kind quantifier blocks, which the constructors do not produce).
pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    print_at(f, 0, &mut out);
    out
}

/// Renders a vocabulary as an inline header (without trailing `;`).
pub fn print_vocab(v: &Vocabulary) -> String {
    let mut parts: Vec<String> = v.predicates().map(|(p, a)| format!("{p}/{a}")).collect();
    parts.extend(v.constants().map(|c| c.to_string()));
    format!("vocab {}", parts.join(" "))
}

// ---------------------------------------------------------------------------
// Finite-structure text format
// ---------------------------------------------------------------------------

/// Parses the line-oriented structure format. Predicates absent from the
/// text default to the empty relation; every declared constant must be
/// interpreted.
pub fn parse_structure(text: &str, vocab: &Vocabulary) -> Result<FiniteStructure, ParseError> {
    let toks = lex(text)?;
    let end = text.len();
    let mut pos = 0;
    let peek = |pos: usize| toks.get(pos);
    let spx = |pos: usize| {
        toks.get(pos)
            .map(|t| t.span)
            .unwrap_or(SourceSpan::at(end, end))
    };

    // header: domain N
    match peek(pos) {
        Some(SpannedTok { tok: Tok::Ident(k), .. }) if k == "domain" => pos += 1,
        _ => return Err(syn(spx(pos), "expected `domain N`")),
    }
    let size = match peek(pos) {
        Some(SpannedTok { tok: Tok::Number(n), span }) => {
            if *n == 0 {
                return Err(syn(*span, "domain size must be positive"));
            }
            pos += 1;
            *n
        }
        _ => return Err(syn(spx(pos), "expected domain size")),
    };

    let mut st = FiniteStructure::new(size);
    let mut seen: BTreeSet<String> = BTreeSet::new();

    loop {
        // separators
        while matches!(peek(pos), Some(SpannedTok { tok: Tok::Semi, .. })) {
            pos += 1;
        }
        let name = match peek(pos) {
            None => break,
            Some(SpannedTok { tok: Tok::Ident(n), .. }) => n.clone(),
            Some(t) => return Err(syn(t.span, "expected symbol name")),
        };
        let name_span = spx(pos);
        pos += 1;
        match peek(pos) {
            Some(SpannedTok { tok: Tok::Equals, .. }) => pos += 1,
            _ => return Err(syn(spx(pos), "expected `=`")),
        }
        if !seen.insert(name.clone()) {
            return Err(syn(name_span, format!("symbol `{name}` interpreted twice")));
        }
        if let Some(arity) = vocab.predicate_arity(&name) {
            st.ensure_relation(&name);
            // relation: { (t),(t),... } ; unary tuples may be written (0)
            match peek(pos) {
                Some(SpannedTok { tok: Tok::LBrace, .. }) => pos += 1,
                _ => return Err(syn(spx(pos), "expected `{`")),
            }
            loop {
                match peek(pos) {
                    Some(SpannedTok { tok: Tok::RBrace, .. }) => {
                        pos += 1;
                        break;
                    }
                    Some(SpannedTok { tok: Tok::Comma, .. }) => pos += 1,
                    Some(SpannedTok { tok: Tok::LParen, span }) => {
                        let tspan = *span;
                        pos += 1;
                        let mut tuple = Vec::new();
                        loop {
                            match peek(pos) {
                                Some(SpannedTok { tok: Tok::Number(e), .. }) => {
                                    tuple.push(*e);
                                    pos += 1;
                                }
                                Some(SpannedTok { tok: Tok::RParen, .. }) if tuple.is_empty() => {
                                    break
                                }
                                _ => return Err(syn(spx(pos), "expected domain element")),
                            }
                            match peek(pos) {
                                Some(SpannedTok { tok: Tok::Comma, .. }) => pos += 1,
                                Some(SpannedTok { tok: Tok::RParen, .. }) => break,
                                _ => return Err(syn(spx(pos), "expected `,` or `)`")),
                            }
                        }
                        pos += 1; // consume `)`
                        if tuple.len() != arity {
                            return Err(ParseError::ArityMismatch {
                                span: tspan,
                                pred: name.clone(),
                                expected: arity,
                                got: tuple.len(),
                            });
                        }
                        if tuple.iter().any(|&e| e >= size) {
                            return Err(ParseError::OutOfDomainTuple {
                                span: tspan,
                                tuple,
                                domain: size,
                            });
                        }
                        st.insert_tuple(&name, tuple);
                    }
                    _ => return Err(syn(spx(pos), "expected tuple, `,` or `}`")),
                }
            }
        } else if vocab.is_constant(&name) {
            match peek(pos) {
                Some(SpannedTok { tok: Tok::Number(e), span }) => {
                    if *e >= size {
                        return Err(ParseError::OutOfDomainTuple {
                            span: *span,
                            tuple: vec![*e],
                            domain: size,
                        });
                    }
                    st.set_constant(&name, *e);
                    pos += 1;
                }
                _ => return Err(syn(spx(pos), "expected domain element")),
            }
        } else {
            return Err(ParseError::UndeclaredSymbol { span: name_span, name });
        }
    }

    // absent predicates default to empty; register them so arity is known
    for (p, _a) in vocab.predicates() {
        if !seen.contains(p) {
            st.ensure_relation(p);
        }
    }
    for c in vocab.constants() {
        if st.constant(c).is_none() {
            return Err(ParseError::MissingConstantInterpretation { name: c.to_string() });
        }
    }
    Ok(st)
}

/// Canonical text for a finite structure over `vocab`.
pub fn print_structure(st: &FiniteStructure, vocab: &Vocabulary) -> String {
    let mut out = format!("domain {}", st.domain_size());
    for (p, _) in vocab.predicates() {
        let mut tuples: Vec<&Vec<usize>> = st.relation(p).map(|s| s.iter().collect()).unwrap_or_default();
        tuples.sort();
        let body = tuples
            .iter()
            .map(|t| {
                format!(
                    "({})",
                    t.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
                )
            })
            .collect::<Vec<_>>()
            .join(",");
        let _ = write!(out, "; {p} = {{{body}}}");
    }
    for c in vocab.constants() {
        if let Some(e) = st.constant(c) {
            let _ = write!(out, "; {c} = {e}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{and, atom, exists, forall, iff, Term};

    fn vocab_pq() -> Vocabulary {
        Vocabulary::from_parts([("P", 1), ("Q", 1)], [])
    }

    #[test]
    fn parses_intro_sentence() {
        let v = vocab_pq();
        let f = parse_formula("forall x. exists y. (P(x) <-> Q(y))", &v).unwrap();
        let expected = forall(
            vec!["x".into()],
            exists(
                vec!["y".into()],
                iff(atom("P", vec![Term::var("x")]), atom("Q", vec![Term::var("y")])),
            ),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn parses_quantifier_scope_maximal() {
        let v = vocab_pq();
        let f = parse_formula("forall x. P(x) & Q(x)", &v).unwrap();
        let expected = forall(
            vec!["x".into()],
            and(vec![atom("P", vec![Term::var("x")]), atom("Q", vec![Term::var("x")])]),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn parses_example_prefix_sentence() {
        let v = Vocabulary::from_parts([("P", 2), ("Q", 2)], []);
        let f = parse_formula(
            "exists u. forall x. exists y. forall z. (P(u,z) & Q(u,x)) | (P(y,z) & Q(u,y))",
            &v,
        )
        .unwrap();
        assert!(f.is_sentence());
        assert!(f.is_prenex());
    }

    #[test]
    fn truncated_input_error_span_at_end() {
        let v = vocab_pq();
        let err = parse_formula("P(x,", &v).unwrap_err();
        match err {
            ParseError::Syntax { span, .. } => assert_eq!(span.begin, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn closed_world_rejects_unbound() {
        let v = vocab_pq();
        let err = parse_formula("P(x)", &v).unwrap_err();
        assert!(matches!(err, ParseError::UndeclaredSymbol { .. }));
    }

    #[test]
    fn arity_mismatch() {
        let v = vocab_pq();
        let err = parse_formula("forall x. P(x, x)", &v).unwrap_err();
        assert!(matches!(err, ParseError::ArityMismatch { expected: 1, got: 2, .. }));
    }

    #[test]
    fn precedence_reference_trees() {
        let v = Vocabulary::from_parts([("A", 0), ("B", 0), ("C", 0), ("D", 0)], []);
        let a = || atom("A", vec![]);
        let b = || atom("B", vec![]);
        let c = || atom("C", vec![]);
        let d = || atom("D", vec![]);
        // ~ binds strongest, then &, then |, then ->, then <->
        let f = parse_formula("~A & B | C -> D", &v).unwrap();
        let expected = implies(or(vec![and(vec![not(a()), b()]), c()]), d());
        assert_eq!(f, expected);
        // -> right-assoc
        assert_eq!(
            parse_formula("A -> B -> C", &v).unwrap(),
            implies(a(), implies(b(), c()))
        );
        // <-> left-assoc, weaker than ->
        assert_eq!(
            parse_formula("A <-> B <-> C", &v).unwrap(),
            iff(iff(a(), b()), c())
        );
        assert_eq!(
            parse_formula("A -> B <-> C", &v).unwrap(),
            iff(implies(a(), b()), c())
        );
    }

    #[test]
    fn print_round_trip_basics() {
        let v = Vocabulary::from_parts([("P", 1), ("Q", 1), ("R", 2)], ["c"]);
        let texts = [
            "forall x y. exists z. (P(x) & Q(y)) | R(x, z)",
            "(forall x. P(x)) & Q(c)",
            "~(exists x. x = c)",
            "P(c) -> Q(c) -> P(c)",
            "true | false",
        ];
        for t in texts {
            let f = parse_formula(t, &v).unwrap();
            let printed = print_formula(&f);
            let f2 = parse_formula(&printed, &v).unwrap();
            assert_eq!(f, f2, "round trip failed for `{t}` -> `{printed}`");
            assert_eq!(printed, print_formula(&f2), "printer not canonical for `{t}`");
        }
    }

    #[test]
    fn inline_vocab_header() {
        let (f, v) = parse_formula_with_header("vocab P/1 Q/2 c; forall x. P(x) | Q(x, c)", None).unwrap();
        assert_eq!(v.predicate_arity("P"), Some(1));
        assert_eq!(v.predicate_arity("Q"), Some(2));
        assert!(v.is_constant("c"));
        assert!(f.is_sentence());
    }

    #[test]
    fn structure_round_trip() {
        let v = Vocabulary::from_parts([("P", 1), ("Q", 1)], []);
        let st = parse_structure("domain 2; P = {(0),(1)}; Q = {}", &v).unwrap();
        assert_eq!(st.domain_size(), 2);
        assert_eq!(st.relation("P").unwrap().len(), 2);
        assert_eq!(st.relation("Q").unwrap().len(), 0);
        let text = print_structure(&st, &v);
        let st2 = parse_structure(&text, &v).unwrap();
        assert_eq!(st, st2);
    }

    #[test]
    fn structure_ternary() {
        let v = Vocabulary::from_parts([("R", 3)], []);
        let st = parse_structure("domain 3; R = {(0,1,2)}", &v).unwrap();
        assert!(st.relation("R").unwrap().contains(&vec![0, 1, 2]));
    }

    #[test]
    fn structure_errors() {
        let v = Vocabulary::from_parts([("P", 1)], ["c"]);
        assert!(matches!(
            parse_structure("domain 2; P = {(5)}; c = 0", &v),
            Err(ParseError::OutOfDomainTuple { .. })
        ));
        assert!(matches!(
            parse_structure("domain 2; P = {(0)}", &v),
            Err(ParseError::MissingConstantInterpretation { .. })
        ));
    }

    #[test]
    fn corpus_sections() {
        let text = "# comment\nvocab P/1; forall x. P(x)\n\nvocab Q/1; exists y. Q(y)\n";
        let sentences = parse_corpus(text, None).unwrap();
        assert_eq!(sentences.len(), 2);
    }
}
