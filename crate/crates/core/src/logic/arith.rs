use thiserror::Error;

use super::term::{Number, Term};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArithError {
    #[error("type error: `{0}` is not a number")]
    NotANumber(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("integer overflow in `{0}`")]
    Overflow(String),
}

/// Evaluates `+ - * /` over numbers. Integer arithmetic stays integral except
/// for `/`, which always yields a float; mixing int and float promotes.
pub fn eval_arith(t: &Term) -> Result<Number, ArithError> {
    match t {
        Term::Number(n) => Ok(*n),
        Term::Compound(op, args) if args.len() == 1 && &**op == "-" => match eval_arith(&args[0])? {
            Number::Int(i) => i
                .checked_neg()
                .map(Number::Int)
                .ok_or_else(|| ArithError::Overflow(t.to_string())),
            Number::Float(x) => Ok(Number::Float(-x)),
        },
        Term::Compound(op, args) if args.len() == 2 && matches!(&**op, "+" | "-" | "*" | "/") => {
            let a = eval_arith(&args[0])?;
            let b = eval_arith(&args[1])?;
            binary(op, a, b).ok_or_else(|| match &**op {
                "/" => ArithError::DivisionByZero(t.to_string()),
                _ => ArithError::Overflow(t.to_string()),
            })
        }
        other => Err(ArithError::NotANumber(other.to_string())),
    }
}

fn binary(op: &str, a: Number, b: Number) -> Option<Number> {
    if op == "/" {
        let d = b.as_f64();
        if d == 0.0 {
            return None;
        }
        return Some(Number::Float(a.as_f64() / d));
    }
    match (a, b) {
        (Number::Int(x), Number::Int(y)) => match op {
            "+" => x.checked_add(y),
            "-" => x.checked_sub(y),
            _ => x.checked_mul(y),
        }
        .map(Number::Int),
        _ => {
            let (x, y) = (a.as_f64(), b.as_f64());
            Some(Number::Float(match op {
                "+" => x + y,
                "-" => x - y,
                _ => x * y,
            }))
        }
    }
}

/// Numeric comparison with int/float promotion.
pub fn compare(op: &str, a: Number, b: Number) -> bool {
    use std::cmp::Ordering::*;
    let ord = match (a, b) {
        (Number::Int(x), Number::Int(y)) => Some(x.cmp(&y)),
        _ => a.as_f64().partial_cmp(&b.as_f64()),
    };
    match (op, ord) {
        ("!=", None) => true,
        (_, None) => false,
        (">=", Some(o)) => o != Less,
        (">", Some(o)) => o == Greater,
        ("=<", Some(o)) => o != Greater,
        ("<", Some(o)) => o == Less,
        ("==", Some(o)) => o == Equal,
        ("!=", Some(o)) => o != Equal,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_term;

    fn eval(s: &str) -> Result<Number, ArithError> {
        eval_arith(&parse_term(s).unwrap())
    }

    #[test]
    fn literal_and_closed_forms() {
        assert_eq!(eval("4.2").unwrap(), Number::Float(4.2));
        assert_eq!(eval("3 + 1").unwrap(), Number::Int(4));
        assert_eq!(eval("7 / 2").unwrap(), Number::Float(3.5));
        assert_eq!(eval("2 * 1.5").unwrap(), Number::Float(3.0));
        assert_eq!(eval("-(2 - 5)").unwrap(), Number::Int(3));
    }

    #[test]
    fn errors() {
        assert!(matches!(eval("1 / 0"), Err(ArithError::DivisionByZero(_))));
        assert!(matches!(eval("1 + a"), Err(ArithError::NotANumber(s)) if s == "a"));
        assert!(matches!(eval("9223372036854775807 + 1"), Err(ArithError::Overflow(_))));
    }

    #[test]
    fn mixed_comparison() {
        assert!(compare(">=", Number::Float(4.2), Number::Float(4.0)));
        assert!(compare(">=", Number::Int(4), Number::Float(4.0)));
        assert!(!compare(">=", Number::Float(3.9), Number::Float(4.0)));
        assert!(compare("!=", Number::Int(1), Number::Int(2)));
    }
}
