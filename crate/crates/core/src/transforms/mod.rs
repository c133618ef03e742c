//! Equivalence-preserving translations from the separated fragments into
//! their base fragments, built on quantifier shifting and structural
//! DNF/CNF regrouping.

mod guarded;
mod lanes;
pub mod regroup;
mod shifting;

use std::fmt;

use thiserror::Error;

use crate::fragments::FragmentId;
use crate::syntax::formula_len;

pub use guarded::{sgnfo_to_gnfo, slgf_to_lgf};
pub use lanes::{sfl_to_fl, sfok_to_fok};
pub use shifting::{
    forall_behind_or, saf_special_form, saf_to_af, sbsr_shift_step, sbsr_to_bsr, sf_to_bsr,
    sgks_to_gks, shift_quantifiers, ShiftContext,
};

/// Size gates for the translation pipelines. Exceeding a gate raises a
/// typed error with the step trace attached; blowups here can be
/// non-elementary, so refusal is part of the contract.
#[derive(Clone, Copy, Debug)]
pub struct BlowupBudget {
    /// maximum formula length any intermediate result may reach
    pub max_formula_len: u64,
    /// maximum number of distinct atoms admitted into the copy expansion
    /// (the expansion produces `2^n` copies)
    pub max_atoms_for_expansion: u64,
}

impl Default for BlowupBudget {
    fn default() -> Self {
        BlowupBudget { max_formula_len: 1_000_000, max_atoms_for_expansion: 12 }
    }
}

/// One recorded pipeline step with formula sizes before and after.
#[derive(Clone, Debug)]
pub struct TraceEvent {
    pub step: String,
    pub before_len: u64,
    pub after_len: u64,
}

/// Step log of a translation run; renders as line-oriented
/// `STEP before_len after_len` text.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: impl Into<String>, before: u64, after: u64) {
        self.events.push(TraceEvent { step: step.into(), before_len: before, after_len: after });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format!("STEP {} {} {}\n", e.step, e.before_len, e.after_len));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("input sentence is not in {0}")]
    NotInFragment(FragmentId),
    #[error("translation budget exceeded at {step} (size {size})")]
    BudgetExceeded { step: String, size: u64, trace: Trace },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

impl TransformError {
    pub(crate) fn budget(step: &str, size: u64) -> Self {
        TransformError::BudgetExceeded { step: step.to_string(), size, trace: Trace::new() }
    }

    pub(crate) fn budget_with(step: &str, size: u64, trace: &mut Trace) -> Self {
        TransformError::BudgetExceeded {
            step: step.to_string(),
            size,
            trace: std::mem::take(trace),
        }
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

/// Dispatches a translation by target fragment name; used by the command
/// line and by batch drivers.
pub fn translate_to(
    f: &crate::syntax::Formula,
    target: FragmentId,
    budget: &BlowupBudget,
) -> Result<(crate::syntax::Formula, Trace), TransformError> {
    match target {
        FragmentId::Bsr => {
            // prefer the SF route when it applies, otherwise SBSR
            match crate::fragments::membership(f, FragmentId::Sf) {
                Ok(r) if r.verdict => sf_to_bsr(f, budget),
                _ => sbsr_to_bsr(f, budget),
            }
        }
        FragmentId::Af => saf_to_af(f, budget),
        FragmentId::Gks => sgks_to_gks(f, budget),
        FragmentId::Lgf | FragmentId::Gf => {
            let out = slgf_to_lgf(f)?;
            Ok((out, Trace::new()))
        }
        FragmentId::Gnfo => {
            let out = sgnfo_to_gnfo(f)?;
            Ok((out, Trace::new()))
        }
        FragmentId::Fok(k) => {
            let out = sfok_to_fok(f, k, budget)?;
            Ok((out, Trace::new()))
        }
        FragmentId::Fl => {
            let out = sfl_to_fl(f, budget)?;
            Ok((out, Trace::new()))
        }
        other => Err(TransformError::PreconditionViolated(format!(
            "no translation targets {other}"
        ))),
    }
}

/// Convenience wrapper asserting that the translation stays within budget
/// and reporting the output length.
pub fn translated_len(
    f: &crate::syntax::Formula,
    target: FragmentId,
    budget: &BlowupBudget,
) -> Result<u64, TransformError> {
    let (out, _) = translate_to(f, target, budget)?;
    Ok(formula_len(&out))
}

#[cfg(test)]
mod tests;
