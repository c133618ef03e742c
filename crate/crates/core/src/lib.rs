//! A toolkit for separateness-based decidable first-order fragments:
//! formula syntax and text formats, separateness analysis, membership
//! classifiers for the classical fragments and their separated extensions,
//! equivalence-preserving translations into the base fragments, a finite
//! model oracle, and generators for succinctness witness families.

pub(crate) mod eval;
pub mod fragments;
pub mod parse;
pub mod semantics;
pub mod separateness;
pub mod syntax;
pub mod transforms;
pub mod witnesses;


pub use crate::parse::{parse_formula, parse_structure, print_formula, print_structure};
pub use semantics::{evaluate, evaluate_sentence, equivalent_upto, FiniteStructure, SatResult};
pub use separateness::{separated, strictly_separated, VariablePartition};
pub use syntax::{Formula, Term, VarName, Vocabulary};
