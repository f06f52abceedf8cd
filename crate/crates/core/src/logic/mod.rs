//! ABL: a definite-clause logic language with negation-as-failure on ground
//! goals, numeric comparisons, lists and `findall/3`.

mod arith;
mod index;
mod parser;
mod program;
mod render;
mod solve;
mod term;
mod unify;

pub use arith::{compare, eval_arith, ArithError};
pub use parser::{parse_body, parse_clause, parse_program, parse_term, ParseError};
pub use program::{Clause, Literal, PartitionTag, Program};
pub use solve::{
    derivable, solve, solve_all, solve_conjunction, SolveError, SolveLimits, Solutions, DEFAULT_MAX_DEPTH,
};
pub use term::{is_atom_name, is_var_name, Number, PredicateKey, Sym, Term, Var, NIL};
pub use unify::{unify, Substitution};

pub(crate) use program::collect_called;
pub(crate) use solve::is_builtin;
