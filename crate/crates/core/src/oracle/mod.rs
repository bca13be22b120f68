//! Bit-exact evaluation and equivalence checking.
//!
//! [`check_equivalence`] enumerates every input when the free input bits fit
//! the budget and otherwise draws seeded samples. [`emit_smt`] writes the same
//! question as an SMT-LIB2 script for an external solver.

mod equiv;
mod eval;
mod smt;

pub use equiv::{
    check_equivalence, check_signatures, Budget, Domain, EquivError, EquivalenceReport, Pin,
    Strategy, Verdict,
};
pub use eval::{
    eval_binary, eval_cast, eval_cmp, evaluate, ArgValue, Environment, EvalError, Output, Program,
};
pub use smt::emit_smt;
