//! Membership classifiers for the classical decidable fragments and their
//! separateness-based extensions, including partition search for SBSR, SAF,
//! SGKS and SFOk, guard-structure recognizers for the (loosely) guarded and
//! guarded-negation fragments, and the fluted/ordered fragment family.

mod guarded;
mod lanes;
mod prefix;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::separateness::VariablePartition;
use crate::syntax::{rectify, to_prenex, Formula};

pub use guarded::{annotate_guards, GuardAnnotation};
pub use lanes::LaneAssignment;
pub use prefix::{find_saf_partition, find_sbsr_partition, find_sgks_partition};

/// The fragments this toolkit can classify.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FragmentId {
    Mfo,
    MfoEq,
    Bsr,
    Sf,
    Sbsr,
    Af,
    Saf,
    Gks,
    Sgks,
    MaslovK,
    Gf,
    Sgf,
    Lgf,
    Slgf,
    Gnfo,
    Sgnfo,
    Fok(u32),
    Sfok(u32),
    Fl,
    Sfl,
    HerzigOrdered,
}

impl FragmentId {
    pub fn name(&self) -> String {
        match self {
            FragmentId::Mfo => "MFO".into(),
            FragmentId::MfoEq => "MFOeq".into(),
            FragmentId::Bsr => "BSR".into(),
            FragmentId::Sf => "SF".into(),
            FragmentId::Sbsr => "SBSR".into(),
            FragmentId::Af => "AF".into(),
            FragmentId::Saf => "SAF".into(),
            FragmentId::Gks => "GKS".into(),
            FragmentId::Sgks => "SGKS".into(),
            FragmentId::MaslovK => "MaslovK".into(),
            FragmentId::Gf => "GF".into(),
            FragmentId::Sgf => "SGF".into(),
            FragmentId::Lgf => "LGF".into(),
            FragmentId::Slgf => "SLGF".into(),
            FragmentId::Gnfo => "GNFO".into(),
            FragmentId::Sgnfo => "SGNFO".into(),
            FragmentId::Fok(k) => format!("FO{k}"),
            FragmentId::Sfok(k) => format!("SFO{k}"),
            FragmentId::Fl => "FL".into(),
            FragmentId::Sfl => "SFL".into(),
            FragmentId::HerzigOrdered => "HerzigOrdered".into(),
        }
    }

    /// Parses a fragment name as printed by [`FragmentId::name`].
    pub fn from_name(s: &str) -> Option<FragmentId> {
        let all = [
            FragmentId::Mfo,
            FragmentId::MfoEq,
            FragmentId::Bsr,
            FragmentId::Sf,
            FragmentId::Sbsr,
            FragmentId::Af,
            FragmentId::Saf,
            FragmentId::Gks,
            FragmentId::Sgks,
            FragmentId::MaslovK,
            FragmentId::Gf,
            FragmentId::Sgf,
            FragmentId::Lgf,
            FragmentId::Slgf,
            FragmentId::Gnfo,
            FragmentId::Sgnfo,
            FragmentId::Fl,
            FragmentId::Sfl,
            FragmentId::HerzigOrdered,
        ];
        for f in all {
            if f.name().eq_ignore_ascii_case(s) {
                return Some(f);
            }
        }
        if let Some(rest) = s.strip_prefix("SFO").or_else(|| s.strip_prefix("sfo")) {
            if let Ok(k) = rest.parse() {
                return Some(FragmentId::Sfok(k));
            }
        }
        if let Some(rest) = s.strip_prefix("FO").or_else(|| s.strip_prefix("fo")) {
            if let Ok(k) = rest.parse() {
                return Some(FragmentId::Fok(k));
            }
        }
        None
    }
}

impl fmt::Display for FragmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FragmentError {
    #[error("sentence expected, but the formula has free variables")]
    FreeVariables,
    #[error("unsupported syntax: {0}")]
    UnsupportedSyntax(String),
    #[error("formula is not prenex")]
    NotPrenex,
    #[error("fragment excludes equality, but the sentence contains it")]
    EqualityPresent,
    #[error("sentence is not in MFO")]
    NotMfo,
}

/// Which procedure decided a membership query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// purely structural definition check
    Structural,
    /// complete polynomial-time constraint analysis
    Polynomial,
    /// constraint propagation followed by re-verification
    Heuristic,
    /// exact enumeration of candidate witnesses
    ExactSearch,
    /// the gated exact search ran out of budget
    Exhausted,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Engine::Structural => "structural",
            Engine::Polynomial => "polynomial",
            Engine::Heuristic => "heuristic",
            Engine::ExactSearch => "exact-search",
            Engine::Exhausted => "search-exhausted",
        };
        write!(f, "{s}")
    }
}

/// Evidence for a positive verdict.
#[derive(Clone, Debug)]
pub enum Witness {
    Partition(VariablePartition),
    Guards(GuardAnnotation),
    Lanes(LaneAssignment),
    /// purely structural fragments: a short note on the recognized shape
    Shape(String),
}

impl Witness {
    pub fn render(&self) -> String {
        match self {
            Witness::Partition(p) => p.render(),
            Witness::Guards(g) => g.render(),
            Witness::Lanes(l) => l.render(),
            Witness::Shape(s) => s.clone(),
        }
    }
}

/// First violation found for a negative verdict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: String,
    pub path: Vec<usize>,
}

impl Violation {
    pub fn here(rule: impl Into<String>) -> Self {
        Violation { rule: rule.into(), path: Vec::new() }
    }

    pub fn at(rule: impl Into<String>, path: Vec<usize>) -> Self {
        Violation { rule: rule.into(), path }
    }

    pub fn render(&self) -> String {
        if self.path.is_empty() {
            self.rule.clone()
        } else {
            let p: Vec<String> = self.path.iter().map(|i| i.to_string()).collect();
            format!("{} @{}", self.rule, p.join("."))
        }
    }
}

/// Verdict plus evidence of a membership query.
#[derive(Clone, Debug)]
pub struct MembershipResult {
    pub verdict: bool,
    pub witness: Option<Witness>,
    pub violation: Option<Violation>,
    pub engine: Engine,
}

impl MembershipResult {
    pub fn yes(witness: Witness, engine: Engine) -> Self {
        MembershipResult { verdict: true, witness: Some(witness), violation: None, engine }
    }

    pub fn no(violation: Violation, engine: Engine) -> Self {
        MembershipResult { verdict: false, witness: None, violation: Some(violation), engine }
    }
}

/// Decides membership of the sentence `f` in fragment `frag`, producing a
/// re-verified witness on success or a first violation on failure.
///
/// Prefix fragments (BSR/SF/SBSR/AF/SAF/GKS/SGKS) require prenex input and,
/// where a partition is searched, a rectified sentence. The finite-variable
/// and fluted fragments permit quantifier reuse.
pub fn membership(f: &Formula, frag: FragmentId) -> Result<MembershipResult, FragmentError> {
    if !f.is_sentence() {
        return Err(FragmentError::FreeVariables);
    }
    Ok(match frag {
        FragmentId::Mfo => prefix::check_mfo(f, false),
        FragmentId::MfoEq => prefix::check_mfo(f, true),
        FragmentId::Bsr => prefix::check_bsr(f),
        FragmentId::Sf => prefix::check_sf(f),
        FragmentId::Sbsr => soften(prefix::find_sbsr_partition(f))?,
        FragmentId::Af => prefix::check_af(f),
        FragmentId::Saf => soften(prefix::find_saf_partition(f))?,
        FragmentId::Gks => prefix::check_gks(f),
        FragmentId::Sgks => soften(prefix::find_sgks_partition(f))?,
        FragmentId::MaslovK => prefix::check_maslov_k(f),
        FragmentId::Gf | FragmentId::Sgf | FragmentId::Lgf | FragmentId::Slgf
        | FragmentId::Gnfo | FragmentId::Sgnfo => guarded::annotate_guards(f, frag)?,
        FragmentId::Fok(k) => lanes::check_fok(f, k),
        FragmentId::Sfok(k) => lanes::check_sfok(f, k),
        FragmentId::Fl => lanes::check_fl(f),
        FragmentId::Sfl => lanes::check_sfl(f),
        FragmentId::HerzigOrdered => lanes::check_herzig(f),
    })
}

/// Definitional preconditions of the partition searches (prenex shape, no
/// equality, rectification) become plain negative verdicts at the
/// classification level.
fn soften(r: Result<MembershipResult, FragmentError>) -> Result<MembershipResult, FragmentError> {
    match r {
        Err(FragmentError::NotPrenex) => Ok(MembershipResult::no(
            Violation::here("not prenex"),
            Engine::Structural,
        )),
        Err(FragmentError::EqualityPresent) => Ok(MembershipResult::no(
            Violation::here("equality atom"),
            Engine::Structural,
        )),
        Err(FragmentError::UnsupportedSyntax(s)) => Ok(MembershipResult::no(
            Violation::here(s),
            Engine::Structural,
        )),
        other => other,
    }
}

/// Per-fragment verdicts over the full fragment list; `FOk`/`SFOk` are
/// evaluated for `k` in `1..=3` by default.
#[derive(Clone, Debug, Default)]
pub struct ClassificationReport {
    pub results: BTreeMap<FragmentId, MembershipResult>,
}

impl ClassificationReport {
    pub fn verdict(&self, frag: FragmentId) -> Option<bool> {
        self.results.get(&frag).map(|r| r.verdict)
    }

    /// Line-oriented text: `FRAGMENT verdict [witness|violation]`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (frag, r) in &self.results {
            out.push_str(&frag.name());
            out.push(' ');
            out.push_str(if r.verdict { "true" } else { "false" });
            let extra = if r.verdict {
                r.witness.as_ref().map(|w| w.render()).unwrap_or_default()
            } else {
                r.violation.as_ref().map(|v| v.render()).unwrap_or_default()
            };
            if !extra.is_empty() {
                out.push(' ');
                out.push('[');
                out.push_str(&extra);
                out.push(']');
            }
            out.push('\n');
        }
        out
    }
}

/// The default k range classify() evaluates finite-variable fragments for.
pub const CLASSIFY_K_RANGE: [u32; 3] = [1, 2, 3];

/// Classifies `f` against every fragment. Containment facts are used to
/// short-circuit partition search: a positive SF verdict yields the SBSR
/// partition constructively, a positive AF verdict the SAF partition, and a
/// positive GKS verdict the SGKS partition; each derived witness is
/// re-verified before use.
pub fn classify(f: &Formula) -> Result<ClassificationReport, FragmentError> {
    if !f.is_sentence() {
        return Err(FragmentError::FreeVariables);
    }
    let mut report = ClassificationReport::default();
    let mut put = |frag: FragmentId, r: MembershipResult| {
        report.results.insert(frag, r);
    };

    put(FragmentId::Mfo, prefix::check_mfo(f, false));
    put(FragmentId::MfoEq, prefix::check_mfo(f, true));
    put(FragmentId::Bsr, prefix::check_bsr(f));
    let sf = prefix::check_sf(f);
    // SF implies SBSR: build the embedding partition instead of searching
    let sbsr = match (sf.verdict, prefix::sbsr_from_sf(f)) {
        (true, Some(r)) => r,
        _ => soften(prefix::find_sbsr_partition(f))?,
    };
    put(FragmentId::Sf, sf);
    put(FragmentId::Sbsr, sbsr);
    let af = prefix::check_af(f);
    let saf = match (af.verdict, prefix::saf_from_af(f)) {
        (true, Some(r)) => r,
        _ => soften(prefix::find_saf_partition(f))?,
    };
    let gks = prefix::check_gks(f);
    let sgks = match if gks.verdict || saf.verdict {
        prefix::sgks_from_gks_or_saf(f, &saf)
    } else {
        None
    } {
        Some(r) => r,
        None => soften(prefix::find_sgks_partition(f))?,
    };
    put(FragmentId::Af, af);
    put(FragmentId::Saf, saf);
    put(FragmentId::Gks, gks);
    put(FragmentId::Sgks, sgks);
    put(FragmentId::MaslovK, prefix::check_maslov_k(f));
    for frag in [
        FragmentId::Gf,
        FragmentId::Sgf,
        FragmentId::Lgf,
        FragmentId::Slgf,
        FragmentId::Gnfo,
        FragmentId::Sgnfo,
    ] {
        put(frag, guarded::annotate_guards(f, frag)?);
    }
    for k in CLASSIFY_K_RANGE {
        put(FragmentId::Fok(k), lanes::check_fok(f, k));
        put(FragmentId::Sfok(k), lanes::check_sfok(f, k));
    }
    put(FragmentId::Fl, lanes::check_fl(f));
    put(FragmentId::Sfl, lanes::check_sfl(f));
    put(FragmentId::HerzigOrdered, lanes::check_herzig(f));
    Ok(report)
}

/// Embeds an MFO sentence into SGF, SGNFO, or SFL, with length within a
/// constant factor of the original; the result is verified against the
/// target's membership check.
pub fn embed_mfo(f: &Formula, target: FragmentId) -> Result<Formula, FragmentError> {
    if !membership(f, FragmentId::Mfo)?.verdict {
        return Err(FragmentError::NotMfo);
    }
    let out = match target {
        FragmentId::Sgf => guarded::embed_mfo_sgf(f),
        FragmentId::Sgnfo => guarded::embed_mfo_sgnfo(f),
        FragmentId::Sfl => lanes::embed_mfo_sfl(f),
        _ => {
            return Err(FragmentError::UnsupportedSyntax(format!(
                "no MFO embedding into {target}"
            )))
        }
    };
    debug_assert!(membership(&out, target).map(|r| r.verdict).unwrap_or(false));
    Ok(out)
}

/// Computes the SFL lane witness of a sentence directly, `None` when the
/// sentence is not in SFL.
pub fn check_sfl_lanes(f: &Formula) -> Option<LaneAssignment> {
    let r = lanes::check_sfl(f);
    if !r.verdict {
        return None;
    }
    match r.witness {
        Some(Witness::Lanes(l)) => Some(l),
        _ => None,
    }
}

/// Prenex-normalizes a sentence (rectifying first); used where containment
/// facts are stated modulo prenex normalization.
pub fn prenex_normalized(f: &Formula) -> Formula {
    let r = rectify(f);
    to_prenex(&r).expect("rectified input")
}

#[cfg(test)]
mod tests;
