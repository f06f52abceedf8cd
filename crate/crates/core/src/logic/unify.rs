use std::collections::BTreeMap;
use std::fmt;

use super::term::{Term, Var};

/// Variable bindings. Stored bindings may reference other bound variables;
/// [`Substitution::apply`] resolves chains fully.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution {
    bindings: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.bindings.get(v)
    }

    /// Looks a variable up by name, ignoring ids.
    pub fn get_named(&self, name: &str) -> Option<Term> {
        self.bindings
            .keys()
            .find(|v| &*v.name == name)
            .map(|v| self.apply(&Term::Var(v.clone())))
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.bindings.iter()
    }

    pub(crate) fn insert(&mut self, v: Var, t: Term) {
        self.bindings.insert(v, t);
    }

    fn walk<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Var(v) = t {
            match self.bindings.get(v) {
                Some(next) => t = next,
                None => break,
            }
        }
        t
    }

    pub fn apply(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Compound(f, args) => {
                Term::Compound(f.clone(), args.iter().map(|a| self.apply(a)).collect())
            }
            Term::List(items, tail) => Term::list(
                items.iter().map(|a| self.apply(a)).collect(),
                self.apply(tail),
            ),
            other => other.clone(),
        }
    }

    fn occurs(&self, v: &Var, t: &Term) -> bool {
        match self.walk(t) {
            Term::Var(w) => w == v,
            Term::Compound(_, args) => args.iter().any(|a| self.occurs(v, a)),
            Term::List(items, tail) => {
                items.iter().any(|a| self.occurs(v, a)) || self.occurs(v, tail)
            }
            _ => false,
        }
    }

    fn unify_in_place(&mut self, a: &Term, b: &Term) -> bool {
        let a = self.walk(a).clone();
        let b = self.walk(b).clone();
        match (&a, &b) {
            (Term::Var(x), Term::Var(y)) if x == y => true,
            (Term::Var(x), t) | (t, Term::Var(x)) => {
                if self.occurs(x, t) {
                    return false;
                }
                self.bindings.insert(x.clone(), t.clone());
                true
            }
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| self.unify_in_place(x, y))
            }
            (Term::List(xs, xt), Term::List(ys, yt)) => {
                let n = xs.len().min(ys.len());
                if !xs[..n].iter().zip(ys[..n].iter()).all(|(x, y)| self.unify_in_place(x, y)) {
                    return false;
                }
                let rest_x = Term::list(xs[n..].to_vec(), (**xt).clone());
                let rest_y = Term::list(ys[n..].to_vec(), (**yt).clone());
                self.unify_in_place(&rest_x, &rest_y)
            }
            (x, y) => x == y,
        }
    }
}

/// Most general unifier of `a` and `b` extending `s`, with occurs check.
pub fn unify(a: &Term, b: &Term, s: &Substitution) -> Option<Substitution> {
    let mut out = s.clone();
    out.unify_in_place(a, b).then_some(out)
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.bindings.keys().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} = {}", v.name, self.apply(&Term::Var(v.clone())))?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_term;
    use proptest::prelude::*;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn binds_consumer() {
        let s = unify(&t("subscribe(C, s456)"), &t("subscribe(c123, s456)"), &Substitution::new()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(&Var::new("C")), Some(&t("c123")));
    }

    #[test]
    fn identical_atoms_bind_nothing() {
        let s = unify(&t("x"), &t("x"), &Substitution::new()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn occurs_check() {
        assert!(unify(&t("X"), &t("f(X)"), &Substitution::new()).is_none());
    }

    #[test]
    fn lists_split_differently() {
        let s = unify(&t("[H | T]"), &t("[a, b, c]"), &Substitution::new()).unwrap();
        assert_eq!(s.apply(&t("T")), t("[b, c]"));
        assert!(unify(&t("[a]"), &t("[a, b]"), &Substitution::new()).is_none());
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            prop::sample::select(vec!["a", "b", "c"]).prop_map(Term::atom),
            prop::sample::select(vec!["X", "Y", "Z", "W"]).prop_map(Term::var),
            (0i64..3).prop_map(Term::int),
        ];
        leaf.prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                (prop::sample::select(vec!["f", "g"]), prop::collection::vec(inner.clone(), 1..3))
                    .prop_map(|(f, args)| Term::compound(f, args)),
                (prop::collection::vec(inner.clone(), 1..3), inner).prop_map(|(items, tail)| Term::list(items, tail)),
            ]
        })
    }

    proptest! {
        #[test]
        fn unifier_is_sound(a in arb_term(), b in arb_term()) {
            if let Some(s) = unify(&a, &b, &Substitution::new()) {
                prop_assert_eq!(s.apply(&a), s.apply(&b));
                // Applying twice changes nothing.
                let once = s.apply(&a);
                prop_assert_eq!(s.apply(&once), once);
            }
        }

        #[test]
        fn unify_is_symmetric_in_success(a in arb_term(), b in arb_term()) {
            let ab = unify(&a, &b, &Substitution::new()).is_some();
            let ba = unify(&b, &a, &Substitution::new()).is_some();
            prop_assert_eq!(ab, ba);
        }
    }
}
