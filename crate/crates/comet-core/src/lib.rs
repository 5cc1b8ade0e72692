//! Extraction of exact, interpretable causal world models from
//! deterministic byte-state environments: object detection binds rendered
//! object properties to internal state cells, symbolic regression recovers
//! per-cell update conditions and equations, interventions refute spurious
//! dependencies, and annotation attaches human-readable semantics.

pub mod symreg;

pub use symreg::{
    fit_affine, fit_ruleset, parse_expression, parse_predicate, search_equations,
    search_predicate, AffineFit, Dataset, Expression, Input, Predicate, Row, RuleSet,
    SearchConfig, SymregError,
};
