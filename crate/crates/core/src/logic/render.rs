//! Canonical ABL text for terms, clauses and programs.
//!
//! Output always re-parses to a structurally identical value.

use std::fmt::{self, Write};

use super::program::{Clause, Literal, Program};
use super::term::{is_atom_name, Term, NIL};

const CMP_PREC: u8 = 3;
const ADD_PREC: u8 = 2;
const MUL_PREC: u8 = 1;
const PRIMARY: u8 = 0;

pub(crate) fn infix_prec(op: &str) -> Option<u8> {
    match op {
        ">=" | ">" | "=<" | "<" | "==" | "!=" | "=" => Some(CMP_PREC),
        "+" | "-" => Some(ADD_PREC),
        "*" | "/" => Some(MUL_PREC),
        _ => None,
    }
}

fn prec_of(t: &Term) -> u8 {
    match t {
        Term::Compound(f, args) if args.len() == 2 => infix_prec(f).unwrap_or(PRIMARY),
        _ => PRIMARY,
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if is_atom_name(name) || name == NIL {
        f.write_str(name)
    } else {
        f.write_char('\'')?;
        for c in name.chars() {
            match c {
                '\'' => f.write_str("\\'")?,
                '\\' => f.write_str("\\\\")?,
                '\n' => f.write_str("\\n")?,
                c => f.write_char(c)?,
            }
        }
        f.write_char('\'')
    }
}

fn write_functor(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    // Operator symbols may appear in prefix form: `-(X)`, `>=(A, B)`.
    if infix_prec(name).is_some() || name == "," {
        if name == "," {
            f.write_str("','")
        } else {
            f.write_str(name)
        }
    } else {
        write_atom(f, name)
    }
}

fn write_str_lit(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

fn write_operand(f: &mut fmt::Formatter<'_>, t: &Term, max: u8) -> fmt::Result {
    if prec_of(t) > max {
        write!(f, "({t})")
    } else {
        write!(f, "{t}")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Atom(a) => write_atom(f, a),
            Term::Var(v) => f.write_str(&v.name),
            Term::Number(n) => write!(f, "{n}"),
            Term::Str(s) => write_str_lit(f, s),
            Term::Compound(name, args) if args.len() == 2 && &**name == "," => {
                write!(f, "({}, {})", args[0], args[1])
            }
            Term::Compound(name, args) if args.len() == 2 && infix_prec(name).is_some() => {
                let p = infix_prec(name).unwrap();
                if p == CMP_PREC {
                    write_operand(f, &args[0], p - 1)?;
                    write!(f, " {name} ")?;
                    write_operand(f, &args[1], p - 1)
                } else {
                    // Left-associative.
                    write_operand(f, &args[0], p)?;
                    write!(f, " {name} ")?;
                    write_operand(f, &args[1], p - 1)
                }
            }
            Term::Compound(name, args) => {
                write_functor(f, name)?;
                f.write_char('(')?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_char(')')
            }
            Term::List(items, tail) => {
                f.write_char('[')?;
                for (i, a) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                if !matches!(&**tail, Term::Atom(a) if &**a == NIL) {
                    write!(f, " | {tail}")?;
                }
                f.write_char(']')
            }
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "not({})", self.goal)
        } else {
            write!(f, "{}", self.goal)
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :-")?;
            for (i, lit) in self.body.iter().enumerate() {
                let sep = if i + 1 == self.body.len() { "" } else { "," };
                write!(f, "\n    {lit}{sep}")?;
            }
        }
        f.write_char('.')
    }
}

impl fmt::Display for Program {
    /// Emits a section marker before each run of clauses.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (tag, range) in self.sections() {
            writeln!(f, "% SECTION: {}", tag.marker())?;
            for clause in &self.clauses()[range.clone()] {
                writeln!(f, "{clause}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::logic::{parse_clause, parse_term};

    #[test]
    fn renders_precondition_rule() {
        let c = parse_clause(
            "success(I) :- resolved(I), customer_satisfaction(I, Score), Score >= 4.0 .",
        )
        .unwrap();
        assert_eq!(
            c.to_string(),
            "success(I) :-\n    resolved(I),\n    customer_satisfaction(I, Score),\n    Score >= 4.0."
        );
    }

    #[test]
    fn arithmetic_parenthesization() {
        for src in ["(A + B) * C", "A - (B - C)", "A - B - C", "-(X)", "X - -3", "[a, b | T]", "\"q\\\"x\""] {
            let t = parse_term(src).unwrap();
            let again = parse_term(&t.to_string()).unwrap();
            assert_eq!(t, again, "{src} -> {t}");
        }
        assert_eq!(parse_term("(A + B) * C").unwrap().to_string(), "(A + B) * C");
        assert_eq!(parse_term("A - B - C").unwrap().to_string(), "A - B - C");
    }

    #[test]
    fn odd_atoms_are_quoted() {
        let t = crate::logic::Term::atom("New York");
        assert_eq!(t.to_string(), "'New York'");
        assert_eq!(parse_term(&t.to_string()).unwrap(), t);
    }
}
