//! Enumerative symbolic regression over a small integer expression grammar,
//! predicate search for update conditions, and greedy rule-set fitting.

mod affine;
pub mod expr;
mod ruleset;
mod search;

pub use affine::{fit_affine, AffineFit};
pub use expr::{parse_expression, parse_predicate, Expression, Input, Predicate, Row};
pub use ruleset::{fit_ruleset, RuleSet};
pub use search::{search_equations, search_predicate, PredicateFit, SearchConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SymregError {
    #[error("expression references unbound variable s{0}")]
    UnboundVariable(usize),
    #[error("cannot fit an affine map against a constant input series")]
    DegenerateSeries,
    #[error("no rule found: best candidate accuracy {accuracy:.4} is below the acceptance floor")]
    NoRuleFound { accuracy: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("series length mismatch or too short: {0}")]
    BadSeries(String),
}

/// A labelled regression dataset: one row of cells + action per transition,
/// labels are the target cell's next value.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub states: Vec<Vec<u8>>,
    pub actions: Vec<u8>,
    pub labels: Vec<u8>,
    /// Action ids of the environment, used for indicator features.
    pub action_set: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        Row::new(&self.states[i], self.actions[i])
    }

    /// Restrict to the given row indices (used by the greedy cover).
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            states: idx.iter().map(|&i| self.states[i].clone()).collect(),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            action_set: self.action_set.clone(),
        }
    }
}

/// Development aid: prints pattern-table statistics.
pub fn debug_table_stats() {
    search::debug_table_stats();
}

/// Development aid: prints pattern grouping statistics.
pub fn debug_group_stats() {
    search::debug_group_stats();
}
