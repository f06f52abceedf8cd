//! Lexer and recursive-descent parser for ABL source text.

use std::sync::Arc;

use thiserror::Error;

use super::program::{Clause, Literal, PartitionTag, Program};
use super::term::{Term, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message} (found `{token}`)")]
    Syntax {
        line: usize,
        col: usize,
        token: String,
        message: String,
    },
    #[error("unsafe negation at {line}:{col}: variable `{var}` is not bound before `not/1`")]
    UnsafeNegation { line: usize, col: usize, var: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Atom(String),
    Var(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(&'static str),
    Section(PartitionTag),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Atom(s) | Tok::Var(s) => s.clone(),
            Tok::Int(i) => i.to_string(),
            Tok::Float(f) => format!("{f:?}"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Punct(p) => (*p).to_string(),
            Tok::Section(t) => format!("% SECTION: {}", t.marker()),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
    start: usize,
    end: usize,
}

// Longest first.
const PUNCTS: &[&str] = &[
    ":-", ">=", "=<", "==", "!=", "(", ")", "[", "]", "|", ",", ".", "+", "-", "*", "/", ">",
    "<", "=",
];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    line_start: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            line: 1,
            line_start: 0,
        }
    }

    fn col(&self, at: usize) -> usize {
        self.src[self.line_start..at].chars().count() + 1
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.line_start = self.pos;
        }
        Some(c)
    }

    fn error(&self, at: usize, token: &str, message: &str) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            col: self.col(at),
            token: token.to_string(),
            message: message.to_string(),
        }
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            // Whitespace and comments.
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '%' {
                    let start = self.pos;
                    let (line, col) = (self.line, self.col(start));
                    let rest = &self.src[start..];
                    let text = rest.split('\n').next().unwrap_or("");
                    self.pos += text.len();
                    if let Some(name) = text.trim_end().strip_prefix("% SECTION:") {
                        let name = name.trim();
                        let tag = PartitionTag::from_marker(name).ok_or_else(|| ParseError::Syntax {
                            line,
                            col,
                            token: text.trim_end().to_string(),
                            message: "unknown section (expected facts, rules or actions)".into(),
                        })?;
                        out.push(Spanned {
                            tok: Tok::Section(tag),
                            line,
                            col,
                            start,
                            end: self.pos,
                        });
                    }
                } else {
                    break;
                }
            }
            let start = self.pos;
            let (line, col) = (self.line, self.col(start));
            let Some(c) = self.peek() else {
                out.push(Spanned {
                    tok: Tok::Eof,
                    line,
                    col,
                    start,
                    end: start,
                });
                return Ok(out);
            };
            let tok = if c.is_ascii_alphabetic() || c == '_' {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                let word = self.src[start..self.pos].to_string();
                if c.is_ascii_lowercase() {
                    Tok::Atom(word)
                } else {
                    Tok::Var(word)
                }
            } else if c.is_ascii_digit() {
                self.number(start)?
            } else if c == '"' {
                Tok::Str(self.quoted('"', start)?)
            } else if c == '\'' {
                Tok::Atom(self.quoted('\'', start)?)
            } else if let Some(p) = PUNCTS.iter().find(|p| self.src[start..].starts_with(**p)) {
                for _ in 0..p.len() {
                    self.bump();
                }
                Tok::Punct(p)
            } else {
                return Err(self.error(start, &c.to_string(), "unexpected character"));
            };
            out.push(Spanned {
                tok,
                line,
                col,
                start,
                end: self.pos,
            });
        }
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let digits = |lx: &mut Lexer| {
            while matches!(lx.peek(), Some(c) if c.is_ascii_digit()) {
                lx.bump();
            }
        };
        digits(self);
        let mut float = false;
        if self.peek() == Some('.') && matches!(self.peek_at(1), Some(c) if c.is_ascii_digit()) {
            float = true;
            self.bump();
            digits(self);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let signed = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if signed { 2 } else { 1 };
            if matches!(self.peek_at(digit_at), Some(c) if c.is_ascii_digit()) {
                float = true;
                self.bump();
                if signed {
                    self.bump();
                }
                digits(self);
            }
        }
        let text = &self.src[start..self.pos];
        if float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| self.error(start, text, "malformed float"))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.error(start, text, "integer out of range"))
        }
    }

    fn quoted(&mut self, quote: char, start: usize) -> Result<String, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error(start, &self.src[start..], "unterminated quote")),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some(c @ ('\\' | '"' | '\'')) => s.push(c),
                    Some(c) => return Err(self.error(start, &format!("\\{c}"), "unknown escape")),
                    None => return Err(self.error(start, &self.src[start..], "unterminated quote")),
                },
                Some(c) if c == quote => return Ok(s),
                Some(c) => s.push(c),
            }
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    anon: usize,
}

const CMP_OPS: &[&str] = &[">=", ">", "=<", "<", "==", "!=", "="];

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: Lexer::new(src).tokens()?,
            pos: 0,
            anon: 0,
        })
    }

    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if !matches!(t.tok, Tok::Eof) {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn error_here(&self, message: &str) -> ParseError {
        let t = self.peek();
        ParseError::Syntax {
            line: t.line,
            col: t.col,
            token: t.tok.describe(),
            message: message.to_string(),
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), ParseError> {
        if self.is_punct(p) {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(&format!("expected `{p}`")))
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut tag = PartitionTag::Rules;
        let mut tagged = Vec::new();
        loop {
            match &self.peek().tok {
                Tok::Eof => break,
                Tok::Section(t) => {
                    tag = *t;
                    self.next();
                }
                _ => tagged.push((tag, self.clause()?)),
            }
        }
        Ok(Program::from_tagged(tagged))
    }

    fn clause(&mut self) -> Result<Clause, ParseError> {
        let (line, col) = (self.peek().line, self.peek().col);
        self.anon = 0;
        let head = self.head()?;
        let body = if self.is_punct(":-") {
            self.next();
            self.body()?
        } else {
            Vec::new()
        };
        self.expect(".")?;
        let clause = Clause::new(head, body);
        if let Some(v) = clause.unsafe_negation() {
            return Err(ParseError::UnsafeNegation {
                line,
                col,
                var: v.name.to_string(),
            });
        }
        Ok(clause)
    }

    fn head(&mut self) -> Result<Term, ParseError> {
        let at = self.pos;
        let t = self.arg()?;
        match &t {
            Term::Atom(_) | Term::Compound(..) if t.functor() != Some("not") => Ok(t),
            _ => {
                self.pos = at;
                Err(self.error_here("clause head must be an atom or compound term"))
            }
        }
    }

    fn body(&mut self) -> Result<Vec<Literal>, ParseError> {
        let mut lits = vec![self.literal()?];
        while self.is_punct(",") {
            self.next();
            lits.push(self.literal()?);
        }
        Ok(lits)
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let at = self.pos;
        let t = self.arg()?;
        if !t.is_callable() {
            self.pos = at;
            return Err(self.error_here("body literal must be callable"));
        }
        match t {
            Term::Compound(f, args) if &*f == "not" && args.len() == 1 => {
                let goal = args[0].clone();
                if !goal.is_callable() {
                    self.pos = at;
                    return Err(self.error_here("negated goal must be callable"));
                }
                Ok(Literal::neg(goal))
            }
            t => Ok(Literal::pos(t)),
        }
    }

    /// `expr (cmp expr)?`
    fn arg(&mut self) -> Result<Term, ParseError> {
        let left = self.expr()?;
        if let Tok::Punct(p) = self.peek().tok {
            if CMP_OPS.contains(&p) {
                self.next();
                let right = self.expr()?;
                return Ok(Term::compound(p, vec![left, right]));
            }
        }
        Ok(left)
    }

    fn expr(&mut self) -> Result<Term, ParseError> {
        let mut left = self.product()?;
        while let Tok::Punct(p @ ("+" | "-")) = self.peek().tok {
            self.next();
            let right = self.product()?;
            left = Term::compound(p, vec![left, right]);
        }
        Ok(left)
    }

    fn product(&mut self) -> Result<Term, ParseError> {
        let mut left = self.unary()?;
        while let Tok::Punct(p @ ("*" | "/")) = self.peek().tok {
            self.next();
            let right = self.unary()?;
            left = Term::compound(p, vec![left, right]);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Term, ParseError> {
        if self.is_punct("-") {
            let minus = self.next();
            let next = self.peek().clone();
            // `-3` directly adjacent is a literal; `-(...)` is prefix notation.
            if next.start == minus.end {
                match next.tok {
                    Tok::Int(i) => {
                        self.next();
                        return Ok(Term::int(-i));
                    }
                    Tok::Float(x) => {
                        self.next();
                        return Ok(Term::float(-x));
                    }
                    Tok::Punct("(") => {
                        self.next();
                        return self.call_args("-");
                    }
                    _ => {}
                }
            }
            let operand = self.unary()?;
            return Ok(Term::compound("-", vec![operand]));
        }
        self.primary()
    }

    fn call_args(&mut self, functor: &str) -> Result<Term, ParseError> {
        let mut args = vec![self.arg()?];
        while self.is_punct(",") {
            self.next();
            args.push(self.arg()?);
        }
        self.expect(")")?;
        Ok(Term::compound(functor, args))
    }

    fn primary(&mut self) -> Result<Term, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Int(i) => Ok(Term::int(i)),
            Tok::Float(x) => Ok(Term::float(x)),
            Tok::Str(s) => Ok(Term::string(&s)),
            Tok::Var(name) => {
                if name == "_" {
                    self.anon += 1;
                    Ok(Term::Var(Var {
                        name: Arc::from("_"),
                        id: self.anon,
                    }))
                } else {
                    Ok(Term::var(&name))
                }
            }
            Tok::Atom(name) => {
                let adjacent = self.peek().start == t.end;
                if adjacent && self.is_punct("(") {
                    self.next();
                    self.call_args(&name)
                } else {
                    Ok(Term::atom(&name))
                }
            }
            Tok::Punct(p) if CMP_OPS.contains(&p) || matches!(p, "+" | "*" | "/") => {
                // Prefix form of an operator: `>=(A, B)`.
                if self.peek().start == t.end && self.is_punct("(") {
                    self.next();
                    self.call_args(p)
                } else {
                    self.pos -= 1;
                    Err(self.error_here("unexpected operator"))
                }
            }
            Tok::Punct("(") => {
                let first = self.arg()?;
                if self.is_punct(",") {
                    self.next();
                    let rest = self.conjunction()?;
                    self.expect(")")?;
                    Ok(Term::compound(",", vec![first, rest]))
                } else {
                    self.expect(")")?;
                    Ok(first)
                }
            }
            Tok::Punct("[") => {
                if self.is_punct("]") {
                    self.next();
                    return Ok(Term::nil());
                }
                let mut items = vec![self.arg()?];
                while self.is_punct(",") {
                    self.next();
                    items.push(self.arg()?);
                }
                let tail = if self.is_punct("|") {
                    self.next();
                    self.arg()?
                } else {
                    Term::nil()
                };
                self.expect("]")?;
                Ok(Term::list(items, tail))
            }
            _ => {
                self.pos -= usize::from(!matches!(t.tok, Tok::Eof));
                Err(self.error_here("expected a term"))
            }
        }
    }

    /// Right-nested `','/2` for parenthesized conjunctions.
    fn conjunction(&mut self) -> Result<Term, ParseError> {
        let first = self.arg()?;
        if self.is_punct(",") {
            self.next();
            let rest = self.conjunction()?;
            Ok(Term::compound(",", vec![first, rest]))
        } else {
            Ok(first)
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        if self.is_punct(".") {
            self.next();
        }
        if matches!(self.peek().tok, Tok::Eof) {
            Ok(())
        } else {
            Err(self.error_here("unexpected trailing input"))
        }
    }
}

/// Parses a whole ABL source file. Unmarked clauses go to the rules section.
pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    Parser::new(source)?.program()
}

/// Parses one term; a trailing `.` is allowed.
pub fn parse_term(source: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(source)?;
    let t = p.arg()?;
    p.finish()?;
    Ok(t)
}

pub fn parse_clause(source: &str) -> Result<Clause, ParseError> {
    let mut p = Parser::new(source)?;
    let c = p.clause()?;
    p.finish()?;
    Ok(c)
}

/// Parses a comma-separated goal list such as a clause body or a query.
pub fn parse_body(source: &str) -> Result<Vec<Literal>, ParseError> {
    let mut p = Parser::new(source)?;
    let body = p.body()?;
    p.finish()?;
    Ok(body)
}
