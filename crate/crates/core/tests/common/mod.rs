//! Shared test helpers: a random negation-free program generator and an
//! independent bottom-up fixpoint evaluator that never touches the solver.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use autobus_core::logic::{Clause, Literal, Program, Term};
use rand::Rng;

/// Argument of a generated atom: a variable name or a constant.
#[derive(Clone, Debug)]
pub enum Arg {
    Var(&'static str),
    Const(&'static str),
}

#[derive(Clone, Debug)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Arg>,
}

#[derive(Clone, Debug)]
pub struct RandomProgram {
    pub facts: Vec<(String, Vec<&'static str>)>,
    pub rules: Vec<(Atom, Vec<Atom>)>,
    pub arity: HashMap<String, usize>,
}

const CONSTS: [&str; 5] = ["a", "b", "c", "d", "e"];
const VARS: [&str; 4] = ["X", "Y", "Z", "W"];

/// At most `max_facts` ground facts over `base0..base3` and at most
/// `max_rules` rules defining `d0..`, where rule `k` only calls base
/// predicates and `d0..d{k-1}`, so the program is non-recursive.
pub fn random_program(rng: &mut impl Rng, max_facts: usize, max_rules: usize) -> RandomProgram {
    let mut arity = HashMap::new();
    for i in 0..4 {
        arity.insert(format!("base{i}"), rng.gen_range(1..=2));
    }
    let n_facts = rng.gen_range(0..=max_facts);
    let mut facts = Vec::new();
    for _ in 0..n_facts {
        let p = format!("base{}", rng.gen_range(0..4));
        let args = (0..arity[&p]).map(|_| CONSTS[rng.gen_range(0..3)]).collect();
        facts.push((p, args));
    }
    let n_rules = rng.gen_range(0..=max_rules);
    let mut rules = Vec::new();
    for k in 0..n_rules {
        let callable: Vec<String> = arity
            .keys()
            .filter(|p| p.starts_with("base") || p[1..].parse::<usize>().is_ok_and(|i| i < k))
            .cloned()
            .collect();
        let mut callable = callable;
        callable.sort();
        let n_body = rng.gen_range(1..=3);
        let mut body = Vec::new();
        for _ in 0..n_body {
            let p = callable[rng.gen_range(0..callable.len())].clone();
            let args = (0..arity[&p])
                .map(|_| {
                    if rng.gen_bool(0.8) {
                        Arg::Var(VARS[rng.gen_range(0..VARS.len())])
                    } else {
                        Arg::Const(CONSTS[rng.gen_range(0..3)])
                    }
                })
                .collect();
            body.push(Atom { pred: p, args });
        }
        let mut body_vars: Vec<&'static str> = Vec::new();
        for a in &body {
            for arg in &a.args {
                if let Arg::Var(v) = arg {
                    if !body_vars.contains(v) {
                        body_vars.push(v);
                    }
                }
            }
        }
        let head_arity = rng.gen_range(1..=2);
        let head_args = (0..head_arity)
            .map(|_| {
                if !body_vars.is_empty() && rng.gen_bool(0.85) {
                    Arg::Var(body_vars[rng.gen_range(0..body_vars.len())])
                } else {
                    Arg::Const(CONSTS[rng.gen_range(0..3)])
                }
            })
            .collect();
        let name = format!("d{k}");
        // A predicate keeps one arity; later rules may add clauses to it.
        arity.insert(name.clone(), head_arity);
        rules.push((Atom { pred: name, args: head_args }, body));
    }
    RandomProgram { facts, rules, arity }
}

fn to_term(a: &Atom) -> Term {
    Term::compound(
        &a.pred,
        a.args
            .iter()
            .map(|x| match x {
                Arg::Var(v) => Term::var(v),
                Arg::Const(c) => Term::atom(c),
            })
            .collect(),
    )
}

impl RandomProgram {
    pub fn to_program(&self) -> Program {
        let mut clauses: Vec<Clause> = self
            .facts
            .iter()
            .map(|(p, args)| Clause::fact(Term::compound(p, args.iter().map(|a| Term::atom(a)).collect())))
            .collect();
        for (head, body) in &self.rules {
            clauses.push(Clause::new(to_term(head), body.iter().map(|b| Literal::pos(to_term(b))).collect()));
        }
        Program::new(clauses)
    }

    pub fn predicates(&self) -> Vec<(String, usize)> {
        let mut v: Vec<_> = self.arity.iter().map(|(k, a)| (k.clone(), *a)).collect();
        v.sort();
        v
    }

    /// Naive bottom-up evaluation to a fixpoint over string tuples.
    pub fn fixpoint(&self) -> BTreeSet<(String, Vec<String>)> {
        let mut db: BTreeSet<(String, Vec<String>)> = self
            .facts
            .iter()
            .map(|(p, args)| (p.clone(), args.iter().map(|s| s.to_string()).collect()))
            .collect();
        loop {
            let mut added = false;
            for (head, body) in &self.rules {
                let mut envs: Vec<HashMap<&str, String>> = vec![HashMap::new()];
                for atom in body {
                    let mut next = Vec::new();
                    for env in &envs {
                        for (p, tuple) in &db {
                            if *p != atom.pred || tuple.len() != atom.args.len() {
                                continue;
                            }
                            let mut e = env.clone();
                            let ok = atom.args.iter().zip(tuple).all(|(arg, val)| match arg {
                                Arg::Const(c) => c == val,
                                Arg::Var(v) => match e.get(v) {
                                    Some(bound) => bound == val,
                                    None => {
                                        e.insert(v, val.clone());
                                        true
                                    }
                                },
                            });
                            if ok {
                                next.push(e);
                            }
                        }
                    }
                    envs = next;
                }
                for env in envs {
                    let tuple = head
                        .args
                        .iter()
                        .map(|a| match a {
                            Arg::Const(c) => c.to_string(),
                            Arg::Var(v) => env[v].clone(),
                        })
                        .collect();
                    added |= db.insert((head.pred.clone(), tuple));
                }
            }
            if !added {
                return db;
            }
        }
    }
}

/// Renders an oracle tuple the way the engine prints ground atoms.
pub fn tuple_text(pred: &str, args: &[String]) -> String {
    format!("{pred}({})", args.join(", "))
}

/// Open query `pred(V0, .., Vn)`.
pub fn open_query(pred: &str, arity: usize) -> Term {
    Term::compound(pred, (0..arity).map(|i| Term::var(&format!("V{i}"))).collect())
}

pub mod study;
