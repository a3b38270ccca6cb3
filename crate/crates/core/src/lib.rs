//! Weighted answer set programs (LP^MLN): parsing, grounding, stable model
//! enumeration, exact and sampled inference, program translations and
//! gradient-ascent weight learning.

pub mod error;
pub mod fixtures;
pub mod grounder;
pub mod learner;
pub mod model;
pub mod parser;
pub mod sampler;
pub mod semantics;
pub mod solver;
pub mod transforms;

pub use error::{Error, Result};
pub use grounder::{ground, GroundProgram, GroundRule};
pub use model::{Atom, Constant, Interpretation, Literal, Observation, Program, Sign, Term, Weight, WeightedRule};
pub use parser::{parse_atom, parse_evidence, parse_program, parse_query};
pub use semantics::{marginal, probability_table, sm_set, weight_of, ModelSpace, ProbabilityTable, Query};
pub use solver::{stable_models, ClampSet};
