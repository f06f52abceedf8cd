use std::collections::HashMap;
use std::sync::Arc;

use super::program::Clause;
use super::term::{Sym, Term};

/// Best argument so far: its candidate count and candidate lists.
type Choice<'a> = (usize, Option<&'a Arc<[usize]>>, &'a Arc<[usize]>);

/// Constant key of a clause-head argument.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) enum ArgKey {
    Atom(Sym),
    Int(i64),
    Float(u64),
    Str(Sym),
    Functor(Sym, usize),
    List,
}

impl ArgKey {
    pub(crate) fn of(t: &Term) -> Option<ArgKey> {
        use super::term::Number;
        Some(match t {
            Term::Atom(a) => ArgKey::Atom(a.clone()),
            Term::Number(Number::Int(i)) => ArgKey::Int(*i),
            Term::Number(Number::Float(x)) => ArgKey::Float(x.to_bits()),
            Term::Str(s) => ArgKey::Str(s.clone()),
            Term::Compound(f, args) => ArgKey::Functor(f.clone(), args.len()),
            Term::List(..) => ArgKey::List,
            Term::Var(_) => return None,
        })
    }
}

#[derive(Debug, Default)]
struct ArgIndex {
    by_key: HashMap<ArgKey, Arc<[usize]>>,
    /// Clauses with a variable in this position; they match any key.
    open: Arc<[usize]>,
}

#[derive(Debug)]
struct PredIndex {
    all: Arc<[usize]>,
    args: Vec<ArgIndex>,
}

/// Per-predicate clause lists with per-argument constant indexing.
#[derive(Debug, Default)]
pub(crate) struct ClauseIndex {
    preds: HashMap<(Sym, usize), PredIndex>,
}

fn merge(a: &[usize], b: &[usize]) -> Arc<[usize]> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out.into()
}

impl ClauseIndex {
    pub(crate) fn build(clauses: &[Clause]) -> Self {
        let mut grouped: HashMap<(Sym, usize), Vec<usize>> = HashMap::new();
        for (i, c) in clauses.iter().enumerate() {
            if let Some(key) = c.head.indicator() {
                grouped.entry(key).or_default().push(i);
            }
        }
        let preds = grouped
            .into_iter()
            .map(|((name, arity), ids)| {
                let args = (0..arity)
                    .map(|pos| {
                        let mut by_key: HashMap<ArgKey, Vec<usize>> = HashMap::new();
                        let mut open = Vec::new();
                        for &i in &ids {
                            match ArgKey::of(&clauses[i].head.args()[pos]) {
                                Some(k) => by_key.entry(k).or_default().push(i),
                                None => open.push(i),
                            }
                        }
                        ArgIndex {
                            by_key: by_key.into_iter().map(|(k, v)| (k, v.into())).collect(),
                            open: open.into(),
                        }
                    })
                    .collect();
                ((name, arity), PredIndex { all: ids.into(), args })
            })
            .collect();
        ClauseIndex { preds }
    }

    /// Candidate clauses in source order for a call whose arguments are
    /// already dereferenced. Picks the most selective bound argument.
    pub(crate) fn candidates(&self, name: &Sym, args: &[&Term]) -> Arc<[usize]> {
        let Some(pred) = self.preds.get(&(name.clone(), args.len())) else {
            return Arc::from([]);
        };
        let mut best: Option<Choice<'_>> = None;
        for (pos, arg) in args.iter().enumerate() {
            let Some(key) = ArgKey::of(arg) else { continue };
            let idx = &pred.args[pos];
            let hit = idx.by_key.get(&key);
            let size = hit.map_or(0, |h| h.len()) + idx.open.len();
            if best.as_ref().is_none_or(|(s, _, _)| size < *s) {
                best = Some((size, hit, &idx.open));
                if size <= 1 {
                    break;
                }
            }
        }
        match best {
            None => pred.all.clone(),
            Some((_, None, open)) => open.clone(),
            Some((_, Some(hit), open)) if open.is_empty() => hit.clone(),
            Some((_, Some(hit), open)) => merge(hit, open),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_program;

    #[test]
    fn selects_by_bound_argument() {
        let p = parse_program("s(a, 1). s(b, 2). s(X, 3). s(a, 4). t.").unwrap();
        let idx = ClauseIndex::build(p.clauses());
        let name: Sym = "s".into();
        let a = Term::atom("a");
        let v = Term::var("V");
        assert_eq!(&*idx.candidates(&name, &[&a, &v]), &[0, 2, 3]);
        let three = Term::int(3);
        assert_eq!(&*idx.candidates(&name, &[&v, &three]), &[2]);
        assert_eq!(&*idx.candidates(&name, &[&v, &v]), &[0, 1, 2, 3]);
        assert!(idx.candidates(&"nope".into(), &[]).is_empty());
        assert_eq!(&*idx.candidates(&"t".into(), &[]), &[4]);
    }
}
