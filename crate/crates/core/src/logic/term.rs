use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Interned-ish symbol: cheap to clone, compared by content.
pub type Sym = Arc<str>;

/// Name of the empty list atom.
pub const NIL: &str = "[]";

/// A logic variable.
///
/// `id` disambiguates variables sharing a name: every `_` in a clause gets its
/// own id, and clause construction renumbers all variables to `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Sym,
    pub id: usize,
}

impl Var {
    pub fn new(name: &str) -> Self {
        Var {
            name: name.into(),
            id: 0,
        }
    }

    pub fn is_anonymous(&self) -> bool {
        &*self.name == "_"
    }
}

/// Tagged numeric value. Equality is structural: `4` and `4.0` are different
/// terms, arithmetic comparison is what relates them.
#[derive(Clone, Copy, Debug)]
pub enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    pub fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Number::Int(a), Number::Int(b)) => a == b,
            (Number::Float(a), Number::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Number {}

impl Hash for Number {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Number::Int(i) => {
                0u8.hash(state);
                i.hash(state);
            }
            Number::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Int(i) => write!(f, "{i}"),
            Number::Float(x) => {
                // Debug keeps a trailing `.0` and round-trips through parse.
                let s = format!("{x:?}");
                f.write_str(&s)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Atom(Sym),
    Var(Var),
    Number(Number),
    Str(Sym),
    /// Functor with at least one argument.
    Compound(Sym, Arc<[Term]>),
    /// Non-empty list prefix plus a tail (`[]` for proper lists, or a variable).
    List(Arc<[Term]>, Arc<Term>),
}

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::Atom(name.into())
    }

    pub fn var(name: &str) -> Term {
        Term::Var(Var::new(name))
    }

    pub fn int(i: i64) -> Term {
        Term::Number(Number::Int(i))
    }

    pub fn float(x: f64) -> Term {
        Term::Number(Number::Float(x))
    }

    pub fn string(s: &str) -> Term {
        Term::Str(s.into())
    }

    pub fn nil() -> Term {
        Term::Atom(NIL.into())
    }

    /// Builds a compound; an empty argument list degrades to an atom.
    pub fn compound(functor: &str, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::Atom(functor.into())
        } else {
            Term::Compound(functor.into(), args.into())
        }
    }

    /// Builds a list, flattening a list-valued tail so equal lists are equal terms.
    pub fn list(items: Vec<Term>, tail: Term) -> Term {
        let mut items = items;
        let mut tail = tail;
        while let Term::List(more, rest) = tail {
            items.extend(more.iter().cloned());
            tail = (*rest).clone();
        }
        if items.is_empty() {
            tail
        } else {
            Term::List(items.into(), Arc::new(tail))
        }
    }

    pub fn proper_list(items: Vec<Term>) -> Term {
        Term::list(items, Term::nil())
    }

    /// Name and arity for callable terms.
    pub fn indicator(&self) -> Option<(Sym, usize)> {
        match self {
            Term::Atom(a) => Some((a.clone(), 0)),
            Term::Compound(f, args) => Some((f.clone(), args.len())),
            _ => None,
        }
    }

    pub fn functor(&self) -> Option<&str> {
        match self {
            Term::Atom(a) | Term::Compound(a, _) => Some(a),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    pub fn is_callable(&self) -> bool {
        matches!(self, Term::Atom(_) | Term::Compound(..))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
            Term::List(items, tail) => items.iter().all(Term::is_ground) && tail.is_ground(),
            _ => true,
        }
    }

    /// Variables in first-occurrence order, without duplicates.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Term::List(items, tail) => {
                items.iter().for_each(|a| a.collect_vars(out));
                tail.collect_vars(out);
            }
            _ => {}
        }
    }

    /// Rebuilds the term with every variable passed through `f`.
    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Compound(name, args) => {
                Term::Compound(name.clone(), args.iter().map(|a| a.map_vars(f)).collect())
            }
            Term::List(items, tail) => {
                let items: Vec<Term> = items.iter().map(|a| a.map_vars(f)).collect();
                Term::list(items, tail.map_vars(f))
            }
            other => other.clone(),
        }
    }

    pub fn as_number(&self) -> Option<Number> {
        match self {
            Term::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Term::Atom(a) => Some(a),
            _ => None,
        }
    }
}

/// True for names that render as bare atoms.
pub fn is_atom_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => false,
    }
}

pub fn is_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() || c == '_' => {
            chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        }
        _ => false,
    }
}

/// Predicate name and arity, written `name/arity`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredicateKey {
    pub name: Sym,
    pub arity: usize,
}

impl PredicateKey {
    pub fn new(name: &str, arity: usize) -> Self {
        PredicateKey {
            name: name.into(),
            arity,
        }
    }

    pub fn of(term: &Term) -> Option<Self> {
        term.indicator().map(|(name, arity)| PredicateKey { name, arity })
    }
}

impl fmt::Display for PredicateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

impl std::str::FromStr for PredicateKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arity) = s
            .rsplit_once('/')
            .ok_or_else(|| format!("expected name/arity, got `{s}`"))?;
        let arity = arity
            .parse()
            .map_err(|_| format!("bad arity in `{s}`"))?;
        if !is_atom_name(name) {
            return Err(format!("bad predicate name in `{s}`"));
        }
        Ok(PredicateKey::new(name, arity))
    }
}

impl serde::Serialize for PredicateKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for PredicateKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
