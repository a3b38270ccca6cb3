//! Text format for programs (`.lpmln`), evidence (`.evid`) and queries.
//!
//! ```text
//! % comment
//! {flip}.
//! @w(1) head :- flip.
//! 0.612 has_disease(X) :- carries_virus(X).
//! -2.5: :- a, not b, X != Y.
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{
    Atom, Constant, Inequality, Literal, Observation, Program, Term, Weight, WeightedRule,
};
use crate::semantics::Query;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    fn to(self, other: SourceSpan) -> SourceSpan {
        SourceSpan {
            end: other.end,
            ..self
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Str(String),
    Int(i64),
    Real(f64),
    Directive(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Dot,
    If,
    Colon,
    Neq,
    At,
    Minus,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Var(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Real(x) => write!(f, "`{x}`"),
            Tok::Directive(d) => write!(f, "`#{d}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::If => f.write_str("`:-`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Neq => f.write_str("`!=`"),
            Tok::At => f.write_str("`@`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn err<T>(span: SourceSpan, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        span,
        message: message.into(),
    })
}

fn lex(text: &str) -> Result<Vec<(Tok, SourceSpan)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut line_start = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let span_at = |start: usize, end: usize| SourceSpan {
            line,
            column: start - line_start + 1,
            start,
            end,
        };
        match c {
            b'\n' => {
                i += 1;
                line += 1;
                line_start = i;
            }
            c if c.is_ascii_whitespace() => i += 1,
            b'%' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'"' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' && bytes[i] != b'\n' {
                    i += 1;
                }
                if i >= bytes.len() || bytes[i] != b'"' {
                    return err(span_at(start, i), "unterminated string");
                }
                out.push((Tok::Str(text[start + 1..i].to_string()), span_at(start, i + 1)));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut real = false;
                if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                    real = true;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        real = true;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s = &text[start..i];
                let span = span_at(start, i);
                let tok = if real {
                    match s.parse::<f64>() {
                        Ok(x) => Tok::Real(x),
                        Err(_) => return err(span, format!("malformed number `{s}`")),
                    }
                } else {
                    match s.parse::<i64>() {
                        Ok(n) => Tok::Int(n),
                        Err(_) => return err(span, format!("integer `{s}` out of range")),
                    }
                };
                out.push((tok, span));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let s = &text[start..i];
                let span = span_at(start, i);
                if s == "_" {
                    return err(span, "anonymous variables are not supported");
                }
                let tok = if c.is_ascii_uppercase() || c == b'_' {
                    Tok::Var(s.to_string())
                } else {
                    Tok::Ident(s.to_string())
                };
                out.push((tok, span));
            }
            b'#' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push((Tok::Directive(text[start + 1..i].to_string()), span_at(start, i)));
            }
            _ => {
                let start = i;
                let two = if i + 1 < bytes.len() { &bytes[i..i + 2] } else { &bytes[i..i + 1] };
                let (tok, len) = match (c, two) {
                    (_, b":-") => (Tok::If, 2),
                    (_, b"!=") => (Tok::Neq, 2),
                    (b':', _) => (Tok::Colon, 1),
                    (b'(', _) => (Tok::LParen, 1),
                    (b')', _) => (Tok::RParen, 1),
                    (b'{', _) => (Tok::LBrace, 1),
                    (b'}', _) => (Tok::RBrace, 1),
                    (b',', _) => (Tok::Comma, 1),
                    (b';', _) => (Tok::Semi, 1),
                    (b'.', _) => (Tok::Dot, 1),
                    (b'@', _) => (Tok::At, 1),
                    (b'-', _) => (Tok::Minus, 1),
                    _ => {
                        let ch = text[i..].chars().next().unwrap_or('?');
                        return err(span_at(start, i + ch.len_utf8()), format!("unexpected character `{ch}`"));
                    }
                };
                i += len;
                out.push((tok, span_at(start, i)));
            }
        }
    }
    let end = SourceSpan {
        line,
        column: bytes.len() - line_start + 1,
        start: bytes.len(),
        end: bytes.len(),
    };
    out.push((Tok::Eof, end));
    Ok(out)
}

enum BodyItem {
    Lit(Literal),
    Guard(Inequality),
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn prev_span(&self) -> SourceSpan {
        self.toks[self.pos.saturating_sub(1)].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            err(self.span(), format!("expected {tok}, found {}", self.peek()))
        }
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    fn term(&mut self) -> Result<Term> {
        let span = self.span();
        match self.bump() {
            Tok::Var(v) => Ok(Term::Var(v)),
            Tok::Ident(s) => Ok(Term::Const(Constant::Sym(s))),
            Tok::Str(s) => Ok(Term::Const(Constant::Str(s))),
            Tok::Int(n) => Ok(Term::Const(Constant::Int(n))),
            Tok::Minus => match self.bump() {
                Tok::Int(n) => Ok(Term::Const(Constant::Int(-n))),
                t => err(span, format!("expected an integer after `-`, found {t}")),
            },
            Tok::Real(_) => err(span, "real numbers are not allowed as terms"),
            t => err(span, format!("expected a term, found {t}")),
        }
    }

    fn atom(&mut self) -> Result<Atom> {
        let span = self.span();
        let name = match self.bump() {
            Tok::Ident(s) if s == "not" => return err(span, "`not` cannot be used as a predicate"),
            Tok::Ident(s) => s,
            t => return err(span, format!("expected an atom, found {t}")),
        };
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                args.push(self.term()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(&Tok::RParen)?;
                break;
            }
        }
        Ok(Atom {
            predicate: name,
            args,
        })
    }

    fn body_item(&mut self) -> Result<BodyItem> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "not" => {
                self.bump();
                if matches!(self.peek(), Tok::Ident(s) if s == "not") {
                    self.bump();
                    if matches!(self.peek(), Tok::Ident(s) if s == "not") {
                        return err(self.span(), "nested negation beyond `not not` is not supported");
                    }
                    Ok(BodyItem::Lit(Literal::not_not(self.atom()?)))
                } else {
                    Ok(BodyItem::Lit(Literal::not(self.atom()?)))
                }
            }
            Tok::Ident(_) if *self.peek_at(1) != Tok::Neq => {
                Ok(BodyItem::Lit(Literal::pos(self.atom()?)))
            }
            _ => {
                let left = self.term()?;
                self.expect(&Tok::Neq)?;
                let right = self.term()?;
                Ok(BodyItem::Guard(Inequality { left, right }))
            }
        }
    }

    fn body(&mut self) -> Result<(Vec<Literal>, Vec<Inequality>)> {
        let mut lits = Vec::new();
        let mut guards = Vec::new();
        if *self.peek() == Tok::Dot {
            return Ok((lits, guards));
        }
        loop {
            match self.body_item()? {
                BodyItem::Lit(l) => lits.push(l),
                BodyItem::Guard(g) => guards.push(g),
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok((lits, guards))
    }

    fn weight(&mut self) -> Result<Weight> {
        let span = self.span();
        let w = match self.peek().clone() {
            Tok::At => {
                self.bump();
                match self.bump() {
                    Tok::Ident(s) if s == "w" => {}
                    t => return err(span, format!("expected `@w(i)`, found {t}")),
                }
                self.expect(&Tok::LParen)?;
                let idx_span = self.span();
                let i = match self.bump() {
                    Tok::Int(i) if i >= 1 => i as usize,
                    _ => return err(idx_span, "parameter index must be a positive integer"),
                };
                self.expect(&Tok::RParen)?;
                Weight::Param(i)
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(n) => Weight::Soft(-(n as f64)),
                    Tok::Real(x) => Weight::Soft(-x),
                    t => return err(span, format!("expected a number after `-`, found {t}")),
                }
            }
            Tok::Int(n) => {
                self.bump();
                Weight::Soft(n as f64)
            }
            Tok::Real(x) => {
                self.bump();
                Weight::Soft(x)
            }
            _ => Weight::Hard,
        };
        if w.is_soft() {
            self.eat(&Tok::Colon);
        }
        Ok(w)
    }

    /// One rule; the caller assigns the index.
    fn rule(&mut self) -> Result<(WeightedRule, SourceSpan)> {
        let start = self.span();
        let weight = self.weight()?;
        let mut head = Vec::new();
        let mut choice = None;
        if self.eat(&Tok::LBrace) {
            let a = self.atom()?;
            if *self.peek() == Tok::Semi {
                return err(self.span(), "choice heads hold a single atom");
            }
            self.expect(&Tok::RBrace)?;
            choice = Some(a.clone());
            head.push(a);
        } else if *self.peek() != Tok::If {
            loop {
                head.push(self.atom()?);
                if !self.eat(&Tok::Semi) {
                    break;
                }
            }
        }
        let (mut body, guards) = if self.eat(&Tok::If) {
            self.body()?
        } else {
            (Vec::new(), Vec::new())
        };
        if head.is_empty() && body.is_empty() && guards.is_empty() && *self.peek() != Tok::Dot {
            return err(self.span(), format!("expected a rule, found {}", self.peek()));
        }
        self.expect(&Tok::Dot)?;
        let span = start.to(self.prev_span());
        if let Some(a) = choice {
            body.push(Literal::not_not(a));
        }
        let rule = WeightedRule {
            weight,
            head,
            body,
            guards,
            index: 0,
        };
        let unsafe_vars = rule.unsafe_variables();
        if let Some(v) = unsafe_vars.first() {
            return err(
                span,
                format!("unsafe rule: variable {v} does not occur in a positive body literal"),
            );
        }
        Ok((rule, span))
    }
}

pub fn parse_program(text: &str) -> Result<Program> {
    let mut p = Parser::new(text)?;
    let mut rules = Vec::new();
    let mut arities: BTreeMap<String, usize> = BTreeMap::new();
    let mut params: BTreeMap<usize, SourceSpan> = BTreeMap::new();
    while !p.at_eof() {
        if let Tok::Directive(d) = p.peek() {
            return err(p.span(), format!("directive `#{d}` is not allowed in programs"));
        }
        let (mut rule, span) = p.rule()?;
        for a in rule.atoms() {
            match arities.get(&a.predicate) {
                Some(&n) if n != a.arity() => {
                    return err(
                        span,
                        format!("predicate `{}` used with arity {} and {}", a.predicate, n, a.arity()),
                    )
                }
                Some(_) => {}
                None => {
                    arities.insert(a.predicate.clone(), a.arity());
                }
            }
        }
        if let Weight::Param(i) = rule.weight {
            if params.insert(i, span).is_some() {
                return err(span, format!("parameter @w({i}) is used more than once"));
            }
        }
        rule.index = rules.len() + 1;
        rules.push(rule);
    }
    if let Some((&max, &span)) = params.iter().next_back() {
        if max != params.len() {
            return err(span, format!("parameter indices must be dense 1..{}", params.len()));
        }
    }
    Program::new(rules)
}

/// Parses evidence: `:- not a.` clamps `a` true, `:- a.` clamps it false,
/// `#example(id).` starts a new observation.
pub fn parse_evidence(text: &str) -> Result<Vec<Observation>> {
    struct Block {
        id: Option<String>,
        pos: BTreeSet<Atom>,
        neg: BTreeSet<Atom>,
        touched: bool,
    }
    let mut p = Parser::new(text)?;
    let mut blocks: Vec<Block> = Vec::new();
    let mut current = Block {
        id: None,
        pos: BTreeSet::new(),
        neg: BTreeSet::new(),
        touched: false,
    };
    while !p.at_eof() {
        let start = p.span();
        if let Tok::Directive(d) = p.peek().clone() {
            if d != "example" {
                return err(start, format!("unknown directive `#{d}`"));
            }
            p.bump();
            p.expect(&Tok::LParen)?;
            let id_span = p.span();
            let id = match p.bump() {
                Tok::Int(n) => n.to_string(),
                Tok::Ident(s) => s,
                Tok::Str(s) => s,
                t => return err(id_span, format!("expected an example id, found {t}")),
            };
            p.expect(&Tok::RParen)?;
            p.expect(&Tok::Dot)?;
            let done = std::mem::replace(
                &mut current,
                Block {
                    id: Some(id),
                    pos: BTreeSet::new(),
                    neg: BTreeSet::new(),
                    touched: true,
                },
            );
            if done.touched {
                blocks.push(done);
            }
            continue;
        }
        p.expect(&Tok::If)?;
        let positive = !matches!(p.peek(), Tok::Ident(s) if s == "not");
        if !positive {
            p.bump();
        }
        let atom = p.atom()?;
        if *p.peek() != Tok::Dot {
            return err(p.span(), "evidence statements hold a single literal");
        }
        p.bump();
        let span = start.to(p.prev_span());
        if !atom.is_ground() {
            return err(span, format!("evidence atom {atom} is not ground"));
        }
        let (into, other) = if positive {
            (&mut current.neg, &current.pos)
        } else {
            (&mut current.pos, &current.neg)
        };
        if other.contains(&atom) {
            return err(span, format!("atom {atom} is clamped both true and false"));
        }
        into.insert(atom);
        current.touched = true;
    }
    if current.touched {
        blocks.push(current);
    }
    blocks
        .into_iter()
        .map(|b| Observation::new(b.pos, b.neg, b.id))
        .collect()
}

/// Parses a query: disjuncts separated by `;`, each a comma-separated list
/// of ground atoms optionally prefixed by `not`.
pub fn parse_query(text: &str) -> Result<Query> {
    let mut p = Parser::new(text)?;
    let mut disjuncts = Vec::new();
    loop {
        let mut conj = Vec::new();
        loop {
            let negated = matches!(p.peek(), Tok::Ident(s) if s == "not");
            if negated {
                p.bump();
            }
            let span = p.span();
            let atom = p.atom()?;
            if !atom.is_ground() {
                return err(span, format!("query atom {atom} is not ground"));
            }
            let q = Query::Atom(atom);
            conj.push(if negated { Query::Not(Box::new(q)) } else { q });
            if !p.eat(&Tok::Comma) {
                break;
            }
        }
        disjuncts.push(if conj.len() == 1 { conj.pop().unwrap() } else { Query::And(conj) });
        if !p.eat(&Tok::Semi) {
            break;
        }
    }
    p.eat(&Tok::Dot);
    if !p.at_eof() {
        return err(p.span(), format!("unexpected {} in query", p.peek()));
    }
    Ok(if disjuncts.len() == 1 {
        disjuncts.pop().unwrap()
    } else {
        Query::Or(disjuncts)
    })
}

/// Parses a single ground atom such as `carries_virus("B")`.
pub fn parse_atom(text: &str) -> Result<Atom> {
    let mut p = Parser::new(text)?;
    let span = p.span();
    let atom = p.atom()?;
    if !p.at_eof() {
        return err(p.span(), format!("unexpected {} after atom", p.peek()));
    }
    if !atom.is_ground() {
        return err(span, format!("atom {atom} is not ground"));
    }
    Ok(atom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_rule() {
        let p = parse_program("@w(1) head :- flip.").unwrap();
        assert_eq!(p.rules().len(), 1);
        assert_eq!(p.rules()[0].weight, Weight::Param(1));
        assert!(p.is_parameterized());
    }

    #[test]
    fn choice_is_desugared() {
        let p = parse_program("{flip}.").unwrap();
        let r = &p.rules()[0];
        assert_eq!(r.weight, Weight::Hard);
        assert_eq!(r.head, vec![Atom::prop("flip")]);
        assert_eq!(r.body, vec![Literal::not_not(Atom::prop("flip"))]);
        assert_eq!(r.to_string(), "flip :- not not flip.");
    }

    #[test]
    fn unsafe_variable_has_span() {
        match parse_program("a.\n1.5 p(X) :- .") {
            Err(Error::Parse { span, message }) => {
                assert_eq!(span.line, 2);
                assert!(message.contains("unsafe"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weights_and_guards() {
        let p = parse_program(
            "-2.5e-1: :- a(X), b(Y), X != Y, not c.\n1 q. 0.612 has_disease(X) :- carries_virus(X).",
        )
        .unwrap();
        assert_eq!(p.rules()[0].weight, Weight::Soft(-0.25));
        assert_eq!(p.rules()[0].guards.len(), 1);
        assert_eq!(p.rules()[1].weight, Weight::Soft(1.0));
        assert_eq!(p.rules()[2].weight, Weight::Soft(0.612));
    }

    #[test]
    fn duplicate_parameter_rejected() {
        assert!(parse_program("@w(1) a. @w(1) b.").is_err());
        assert!(parse_program("@w(2) a.").is_err());
    }

    #[test]
    fn arity_mismatch_rejected() {
        assert!(parse_program("p(1). q :- p.").is_err());
    }

    #[test]
    fn evidence_blocks() {
        let obs = parse_evidence(":- not carries_virus(\"E\").\n:- carries_virus(\"H\").").unwrap();
        assert_eq!(obs.len(), 1);
        let e = Atom::new("carries_virus", vec![Term::str("E")]);
        let h = Atom::new("carries_virus", vec![Term::str("H")]);
        assert!(obs[0].clamped_true().contains(&e));
        assert!(obs[0].clamped_false().contains(&h));

        let obs = parse_evidence("#example(1). :- not flip. #example(2). :- not flip.").unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[1].example_id.as_deref(), Some("2"));

        assert!(parse_evidence(":- not p(X).").is_err());
        assert!(parse_evidence(":- not a. :- a.").is_err());
    }

    #[test]
    fn comments_and_strings() {
        let p = parse_program("% header\nloc(\"r1\", 0). % trailing\n").unwrap();
        assert_eq!(p.rules()[0].head[0].args[0], Term::str("r1"));
    }

    #[test]
    fn queries() {
        let q = parse_query("a ; not a").unwrap();
        assert!(matches!(q, Query::Or(ref v) if v.len() == 2));
        assert!(parse_query("p(X)").is_err());
    }
}
