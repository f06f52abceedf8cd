//! Top-down SLD resolution.
//!
//! Leftmost literal selection, clauses tried in source order, depth-bounded.
//! The machine keeps a binding vector indexed by variable id plus a trail,
//! and choice points restore both on backtracking.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::Arc;

use thiserror::Error;

use super::arith::{compare, eval_arith, ArithError};
use super::index::ClauseIndex;
use super::program::{Literal, Program};
use super::term::{PredicateKey, Term, Var};
use super::unify::Substitution;

pub const DEFAULT_MAX_DEPTH: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveLimits {
    pub max_depth: usize,
    pub max_solutions: Option<usize>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            max_depth: DEFAULT_MAX_DEPTH,
            max_solutions: None,
        }
    }
}

impl SolveLimits {
    pub fn with_depth(max_depth: usize) -> Self {
        SolveLimits {
            max_depth,
            max_solutions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("depth limit {limit} exceeded while proving `{goal}`")]
    DepthLimitExceeded { limit: usize, goal: String },
    #[error("negation of non-ground goal `{goal}`: variable `{var}` is unbound")]
    NonGroundNegation { var: String, goal: String },
    #[error("type error in `{goal}`: {source}")]
    Type { goal: String, source: ArithError },
    #[error("goal `{0}` is not callable")]
    NotCallable(String),
    #[error("max_depth must be at least 1")]
    InvalidLimits,
}

const COMPARISONS: [&str; 6] = [">=", ">", "=<", "<", "==", "!="];

pub(crate) fn is_builtin(key: &PredicateKey) -> bool {
    matches!(
        (&*key.name, key.arity),
        ("true", 0) | ("fail", 0) | ("false", 0) | (",", 2) | ("not", 1) | ("=", 2) | ("findall", 3)
    ) || (key.arity == 2 && COMPARISONS.contains(&&*key.name))
}

type Goals = Option<Rc<GoalNode>>;

struct GoalNode {
    goal: Term,
    negated: bool,
    depth: usize,
    next: Goals,
}

struct Choice {
    goal: Term,
    depth: usize,
    cont: Goals,
    candidates: Arc<[usize]>,
    next: usize,
    trail_len: usize,
    var_top: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Running,
    Backtrack,
    Done,
}

/// Lazy sequence of answers for a query.
pub struct Solutions<'p> {
    program: &'p Program,
    index: Arc<ClauseIndex>,
    limits: SolveLimits,
    bindings: Vec<Option<Term>>,
    trail: Vec<usize>,
    choices: Vec<Choice>,
    goals: Goals,
    query: Vec<(Var, usize)>,
    state: State,
    yielded: usize,
    pending: Option<SolveError>,
}

/// Solves a single goal.
pub fn solve<'p>(goal: &Term, program: &'p Program, limits: SolveLimits) -> Solutions<'p> {
    if !goal.is_callable() {
        let mut s = Solutions::new(&[], program, limits);
        s.pending = Some(SolveError::NotCallable(goal.to_string()));
        return s;
    }
    Solutions::new(&[Literal::pos(goal.clone())], program, limits)
}

/// Solves a conjunction of literals left to right.
pub fn solve_conjunction<'p>(goals: &[Literal], program: &'p Program, limits: SolveLimits) -> Solutions<'p> {
    Solutions::new(goals, program, limits)
}

/// Goal instances under every answer, de-duplicated, first occurrence kept.
pub fn solve_all(goal: &Term, program: &Program, limits: SolveLimits) -> Result<Vec<Term>, SolveError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for answer in solve(goal, program, limits) {
        let inst = answer?.apply(goal);
        if seen.insert(inst.clone()) {
            out.push(inst);
        }
    }
    Ok(out)
}

/// True iff the goal has at least one proof.
pub fn derivable(goal: &Term, program: &Program, limits: SolveLimits) -> Result<bool, SolveError> {
    solve(goal, program, limits).next().transpose().map(|a| a.is_some())
}

impl<'p> Solutions<'p> {
    fn new(goals: &[Literal], program: &'p Program, limits: SolveLimits) -> Self {
        let mut vars: Vec<Var> = Vec::new();
        for lit in goals {
            lit.goal.collect_vars(&mut vars);
        }
        let query: Vec<(Var, usize)> = vars.into_iter().enumerate().map(|(i, v)| (v, i)).collect();
        let ids: HashMap<&Var, usize> = query.iter().map(|(v, i)| (v, *i)).collect();
        let mut renumber = |v: &Var| {
            Term::Var(Var {
                name: v.name.clone(),
                id: ids[v],
            })
        };
        let mut list: Goals = None;
        for lit in goals.iter().rev() {
            list = Some(Rc::new(GoalNode {
                goal: lit.goal.map_vars(&mut renumber),
                negated: lit.negated,
                depth: 0,
                next: list,
            }));
        }
        Solutions {
            program,
            index: program.index(),
            limits,
            bindings: vec![None; query.len()],
            trail: Vec::new(),
            choices: Vec::new(),
            goals: list,
            query,
            state: State::Running,
            yielded: 0,
            pending: (limits.max_depth == 0).then_some(SolveError::InvalidLimits),
        }
    }

    fn walk<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Var(v) = t {
            match &self.bindings[v.id] {
                Some(next) => t = next,
                None => break,
            }
        }
        t
    }

    fn resolve(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(|a| self.resolve(a)).collect()),
            Term::List(items, tail) => Term::list(items.iter().map(|a| self.resolve(a)).collect(), self.resolve(tail)),
            other => other.clone(),
        }
    }

    fn bind(&mut self, id: usize, t: Term) {
        self.bindings[id] = Some(t);
        self.trail.push(id);
    }

    fn occurs(&self, id: usize, t: &Term) -> bool {
        match self.walk(t) {
            Term::Var(v) => v.id == id,
            Term::Compound(_, args) => args.iter().any(|a| self.occurs(id, a)),
            Term::List(items, tail) => items.iter().any(|a| self.occurs(id, a)) || self.occurs(id, tail),
            _ => false,
        }
    }

    fn unify(&mut self, a: &Term, b: &Term) -> bool {
        let a = self.walk(a).clone();
        let b = self.walk(b).clone();
        match (&a, &b) {
            (Term::Var(x), Term::Var(y)) if x.id == y.id => true,
            (Term::Var(x), t) | (t, Term::Var(x)) => {
                if self.occurs(x.id, t) {
                    return false;
                }
                self.bind(x.id, t.clone());
                true
            }
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| self.unify(x, y))
            }
            (Term::List(xs, xt), Term::List(ys, yt)) => {
                let n = xs.len().min(ys.len());
                if !xs[..n].iter().zip(ys[..n].iter()).all(|(x, y)| self.unify(x, y)) {
                    return false;
                }
                let rest_x = Term::list(xs[n..].to_vec(), (**xt).clone());
                let rest_y = Term::list(ys[n..].to_vec(), (**yt).clone());
                self.unify(&rest_x, &rest_y)
            }
            (x, y) => x == y,
        }
    }

    fn undo_to(&mut self, trail_len: usize, var_top: usize) {
        while self.trail.len() > trail_len {
            let id = self.trail.pop().expect("non-empty trail");
            self.bindings[id] = None;
        }
        self.bindings.truncate(var_top);
    }

    fn rename(t: &Term, base: usize) -> Term {
        t.map_vars(&mut |v| {
            Term::Var(Var {
                name: v.name.clone(),
                id: base + v.id,
            })
        })
    }

    /// Tries the remaining candidates of the newest choice point.
    fn retry(&mut self) -> bool {
        let program = self.program;
        loop {
            let Some(choice) = self.choices.last_mut() else {
                return false;
            };
            if choice.next >= choice.candidates.len() {
                self.choices.pop();
                return false;
            }
            let ci = choice.candidates[choice.next];
            choice.next += 1;
            let last = choice.next == choice.candidates.len();
            let (trail_len, var_top, depth) = (choice.trail_len, choice.var_top, choice.depth);
            let goal = choice.goal.clone();
            let cont = choice.cont.clone();
            if last {
                self.choices.pop();
            }
            self.undo_to(trail_len, var_top);

            let clause = &program.clauses()[ci];
            let base = self.bindings.len();
            let head = if clause.var_count() == 0 {
                clause.head.clone()
            } else {
                self.bindings.resize(base + clause.var_count(), None);
                Self::rename(&clause.head, base)
            };
            if self.unify(&goal, &head) {
                let mut goals = cont;
                for lit in clause.body.iter().rev() {
                    goals = Some(Rc::new(GoalNode {
                        goal: Self::rename(&lit.goal, base),
                        negated: lit.negated,
                        depth: depth + 1,
                        next: goals,
                    }));
                }
                self.goals = goals;
                return true;
            }
            if last {
                self.undo_to(trail_len, var_top);
                return false;
            }
        }
    }

    fn backtrack(&mut self) -> bool {
        while !self.choices.is_empty() {
            if self.retry() {
                return true;
            }
        }
        false
    }

    fn sub_limits(&self, depth: usize) -> SolveLimits {
        SolveLimits {
            max_depth: self.limits.max_depth.saturating_sub(depth).max(1),
            max_solutions: None,
        }
    }

    fn negation(&mut self, goal: &Term, depth: usize) -> Result<bool, SolveError> {
        let g = self.resolve(goal);
        if let Some(v) = g.variables().first() {
            return Err(SolveError::NonGroundNegation {
                var: v.name.to_string(),
                goal: g.to_string(),
            });
        }
        let mut sub = solve(&g, self.program, self.sub_limits(depth));
        match sub.next() {
            None => Ok(true),
            Some(Ok(_)) => Ok(false),
            Some(Err(e)) => Err(e),
        }
    }

    fn findall(&mut self, args: &[Term], depth: usize) -> Result<bool, SolveError> {
        let template = self.resolve(&args[0]);
        let goal = self.resolve(&args[1]);
        if !goal.is_callable() {
            return Err(SolveError::NotCallable(goal.to_string()));
        }
        let mut outer: Vec<Var> = Vec::new();
        template.collect_vars(&mut outer);
        goal.collect_vars(&mut outer);
        let mut results = Vec::new();
        let mut seen = HashSet::new();
        for answer in solve(&goal, self.program, self.sub_limits(depth)) {
            let inst = answer?.apply(&template);
            if seen.insert(inst.clone()) {
                results.push(inst);
            }
        }
        // Variables left free by the inner proof get fresh ids in this machine.
        let mut fresh: HashMap<Var, Term> = HashMap::new();
        let results: Vec<Term> = results
            .iter()
            .map(|r| {
                r.map_vars(&mut |v| {
                    if outer.contains(v) {
                        return Term::Var(v.clone());
                    }
                    fresh
                        .entry(v.clone())
                        .or_insert_with(|| {
                            let id = self.bindings.len();
                            self.bindings.push(None);
                            Term::Var(Var { name: "_".into(), id })
                        })
                        .clone()
                })
            })
            .collect();
        let list = Term::proper_list(results);
        Ok(self.unify(&args[2], &list))
    }

    fn comparison(&mut self, op: &str, goal: &Term) -> Result<bool, SolveError> {
        let g = self.resolve(goal);
        let args = g.args();
        let eval = |t: &Term| {
            eval_arith(t).map_err(|source| SolveError::Type {
                goal: g.to_string(),
                source,
            })
        };
        let a = eval(&args[0])?;
        let b = eval(&args[1])?;
        Ok(compare(op, a, b))
    }

    fn exec(&mut self, node: &GoalNode) -> Result<bool, SolveError> {
        let goal = self.walk(&node.goal).clone();
        if !goal.is_callable() {
            return Err(SolveError::NotCallable(self.resolve(&goal).to_string()));
        }
        if node.negated {
            return self.negation(&goal, node.depth);
        }
        let (name, arity) = goal.indicator().expect("callable");
        match (&*name, arity) {
            ("true", 0) => return Ok(true),
            ("fail" | "false", 0) => return Ok(false),
            (",", 2) => {
                let args = goal.args();
                let rest = Some(Rc::new(GoalNode {
                    goal: args[1].clone(),
                    negated: false,
                    depth: node.depth,
                    next: self.goals.take(),
                }));
                self.goals = Some(Rc::new(GoalNode {
                    goal: args[0].clone(),
                    negated: false,
                    depth: node.depth,
                    next: rest,
                }));
                return Ok(true);
            }
            ("not", 1) => return self.negation(&goal.args()[0], node.depth),
            ("=", 2) => {
                let args = goal.args();
                return Ok(self.unify(&args[0], &args[1]));
            }
            ("findall", 3) => return self.findall(goal.args(), node.depth),
            (op, 2) if COMPARISONS.contains(&op) => return self.comparison(op, &goal),
            _ => {}
        }

        if node.depth >= self.limits.max_depth {
            return Err(SolveError::DepthLimitExceeded {
                limit: self.limits.max_depth,
                goal: self.resolve(&goal).to_string(),
            });
        }
        let candidates = {
            let args: Vec<&Term> = goal.args().iter().map(|a| self.walk(a)).collect();
            self.index.candidates(&name, &args)
        };
        if candidates.is_empty() {
            return Ok(false);
        }
        self.choices.push(Choice {
            goal,
            depth: node.depth,
            cont: self.goals.take(),
            candidates,
            next: 0,
            trail_len: self.trail.len(),
            var_top: self.bindings.len(),
        });
        Ok(self.retry())
    }

    fn answer(&self) -> Substitution {
        let mut s = Substitution::new();
        for (var, id) in &self.query {
            if var.is_anonymous() {
                continue;
            }
            let value = self.resolve(&Term::Var(Var {
                name: var.name.clone(),
                id: *id,
            }));
            if matches!(&value, Term::Var(v) if v.id == *id) {
                continue;
            }
            let value = value.map_vars(&mut |v| {
                Term::Var(Var {
                    name: format!("_G{}", v.id).into(),
                    id: v.id,
                })
            });
            s.insert(var.clone(), value);
        }
        s
    }
}

impl Iterator for Solutions<'_> {
    type Item = Result<Substitution, SolveError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(e) = self.pending.take() {
            self.state = State::Done;
            return Some(Err(e));
        }
        if self.state == State::Done {
            return None;
        }
        if self.limits.max_solutions.is_some_and(|m| self.yielded >= m) {
            self.state = State::Done;
            return None;
        }
        if self.state == State::Backtrack {
            if !self.backtrack() {
                self.state = State::Done;
                return None;
            }
            self.state = State::Running;
        }
        loop {
            let Some(node) = self.goals.take() else {
                self.yielded += 1;
                self.state = State::Backtrack;
                return Some(Ok(self.answer()));
            };
            self.goals = node.next.clone();
            match self.exec(&node) {
                Ok(true) => {}
                Ok(false) => {
                    if !self.backtrack() {
                        self.state = State::Done;
                        return None;
                    }
                }
                Err(e) => {
                    self.state = State::Done;
                    return Some(Err(e));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_program, parse_term};

    const SNIPPET: &str = "consumer(c123).\nsubscription(s456).\nsubscribe(c123, s456).\nhas_status(s456, active).\n\
        active_subscription(S):-\n    has_status(S, active),\n    subscribe(_, S).\n\
        precondition(send_promotion(C)):-\n    consumer(C),\n    subscribe(C, S),\n    active_subscription(S).\n";

    fn all(goal: &str, src: &str) -> Vec<String> {
        let p = parse_program(src).unwrap();
        solve_all(&parse_term(goal).unwrap(), &p, SolveLimits::default())
            .unwrap()
            .iter()
            .map(Term::to_string)
            .collect()
    }

    #[test]
    fn active_subscription_binds_s456() {
        let p = parse_program(SNIPPET).unwrap();
        let answers: Vec<_> = solve(&parse_term("active_subscription(S)").unwrap(), &p, SolveLimits::default())
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(answers.len(), 1);
        assert_eq!(answers[0].get_named("S"), Some(Term::atom("s456")));
        assert_eq!(answers[0].len(), 1);
    }

    #[test]
    fn precondition_instances() {
        assert_eq!(all("precondition(send_promotion(C))", SNIPPET), vec!["precondition(send_promotion(c123))"]);
    }

    #[test]
    fn success_threshold() {
        let rules = "resolved(I) :- outcome(I, resolved) .\nsuccess(I) :-\n    resolved(I),\n    customer_satisfaction(I, Score),\n    Score >= 4.0 .\n";
        for (score, expect) in [("4.2", 1), ("3.9", 0), ("4.0", 1)] {
            let src = format!("outcome(i1, resolved).\ncustomer_satisfaction(i1, {score}).\n{rules}");
            assert_eq!(all("success(i1)", &src).len(), expect, "score {score}");
        }
    }

    #[test]
    fn empty_program_has_no_answers() {
        let p = Program::default();
        assert_eq!(solve(&parse_term("anything(X)").unwrap(), &p, SolveLimits::default()).count(), 0);
    }

    #[test]
    fn fact_enumeration_in_order() {
        assert_eq!(all("consumer(C)", "consumer(c1). consumer(c2). consumer(c1)."), vec!["consumer(c1)", "consumer(c2)"]);
    }

    #[test]
    fn recursion_and_depth_limit() {
        let src = "edge(a, b). edge(b, c). edge(c, d).\npath(X, Y) :- edge(X, Y).\npath(X, Y) :- edge(X, Z), path(Z, Y).";
        assert_eq!(all("path(a, Y)", src), vec!["path(a, b)", "path(a, c)", "path(a, d)"]);

        let p = parse_program("loop(X) :- loop(X).").unwrap();
        let r = solve_all(&parse_term("loop(a)").unwrap(), &p, SolveLimits::with_depth(16));
        assert!(matches!(r, Err(SolveError::DepthLimitExceeded { limit: 16, .. })));
    }

    #[test]
    fn negation_as_failure() {
        let src = "p(a). p(b). q(b).\nr(X) :- p(X), not(q(X)).";
        assert_eq!(all("r(X)", src), vec!["r(a)"]);
    }

    #[test]
    fn nonground_negation_is_an_error() {
        let p = parse_program("q(a).").unwrap();
        let r = solve_all(&parse_term("not(q(X))").unwrap(), &p, SolveLimits::default());
        assert!(matches!(r, Err(SolveError::NonGroundNegation { var, .. }) if var == "X"));
    }

    #[test]
    fn comparison_type_error() {
        let p = parse_program("v(abc).\nbig(X) :- v(X), X > 3.").unwrap();
        let r = solve_all(&parse_term("big(X)").unwrap(), &p, SolveLimits::default());
        assert!(matches!(r, Err(SolveError::Type { .. })));
    }

    #[test]
    fn findall_collects_set() {
        let src = "c(x). c(y). c(x).\nall(L) :- findall(C, c(C), L).";
        assert_eq!(all("all(L)", src), vec!["all([x, y])"]);
        assert_eq!(all("none(L)", "none(L) :- findall(C, nothing(C), L)."), vec!["none([])"]);
    }

    #[test]
    fn list_unification_in_clauses() {
        let src = "first([H | _], H).\nlen([], 0).\nlen([_ | T], N) :- len(T, M), N = M + 1.";
        assert_eq!(all("first([a, b], X)", src), vec!["first([a, b], a)"]);
        assert_eq!(all("len([a, b], N)", src), vec!["len([a, b], 0 + 1 + 1)"]);
    }

    #[test]
    fn max_solutions_truncates() {
        let p = parse_program("n(1). n(2). n(3).").unwrap();
        let limits = SolveLimits {
            max_depth: 8,
            max_solutions: Some(2),
        };
        assert_eq!(solve(&parse_term("n(X)").unwrap(), &p, limits).count(), 2);
    }

    #[test]
    fn non_callable_goal() {
        let p = Program::default();
        let mut s = solve(&Term::int(3), &p, SolveLimits::default());
        assert!(matches!(s.next(), Some(Err(SolveError::NotCallable(_)))));
        assert!(s.next().is_none());
    }

    #[test]
    fn conjunction_query() {
        let p = parse_program("a(1). a(2). b(2).").unwrap();
        let goals = crate::logic::parse_body("a(X), b(X)").unwrap();
        let answers: Vec<_> = solve_conjunction(&goals, &p, SolveLimits::default()).collect::<Result<_, _>>().unwrap();
        assert_eq!(answers.len(), 1);
        assert_eq!(answers[0].get_named("X"), Some(Term::int(2)));
    }
}
