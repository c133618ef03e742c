//! Structural CNF/DNF regrouping over basic formulas.
//!
//! A basic formula is an atom or a maximal quantified subformula; the
//! Boolean skeleton above them is distributed into a conjunction of
//! disjunctions (or dually) of such units. Tautological clauses are pruned
//! and subsumed clauses removed after every distribution step, which keeps
//! the regrouping within what the translation steps actually need.

use std::collections::HashMap;

use crate::syntax::Formula;

/// Interned basic formulas. A literal is `unit_id * 2 + sign` with sign 1
/// for a negated (atomic) unit.
#[derive(Default)]
pub struct UnitArena {
    units: Vec<Formula>,
    index: HashMap<Formula, u32>,
}

pub type Lit = u32;

impl UnitArena {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, f: &Formula) -> u32 {
        if let Some(&id) = self.index.get(f) {
            return id;
        }
        let id = self.units.len() as u32;
        self.units.push(f.clone());
        self.index.insert(f.clone(), id);
        id
    }

    pub fn lit(&mut self, f: &Formula) -> Lit {
        match f {
            Formula::Not(inner) => {
                debug_assert!(inner.is_atomic(), "negation on a non-atom in NNF regrouping");
                self.intern(inner) * 2 + 1
            }
            _ => self.intern(f) * 2,
        }
    }

    pub fn formula(&self, lit: Lit) -> Formula {
        let unit = self.units[(lit / 2) as usize].clone();
        if lit % 2 == 1 {
            Formula::Not(Box::new(unit))
        } else {
            unit
        }
    }
}

/// A clause (or cube): a sorted, deduplicated set of literals.
pub type LitSet = Vec<Lit>;

fn normalize(mut lits: LitSet) -> Option<LitSet> {
    lits.sort_unstable();
    lits.dedup();
    // tautological (clause) / contradictory (cube): both signs of one unit
    for w in lits.windows(2) {
        if w[0] / 2 == w[1] / 2 {
            return None;
        }
    }
    Some(lits)
}

fn is_subset(a: &LitSet, b: &LitSet) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let mut i = 0;
    for &x in b {
        if i < a.len() && a[i] == x {
            i += 1;
        }
    }
    i == a.len()
}

/// Removes sets that are supersets of another set (absorption).
pub fn subsume(sets: &mut Vec<LitSet>) {
    sets.sort();
    sets.dedup();
    sets.sort_by_key(|s| s.len());
    let mut kept: Vec<LitSet> = Vec::with_capacity(sets.len());
    'outer: for s in sets.drain(..) {
        for k in &kept {
            if is_subset(k, &s) {
                continue 'outer;
            }
        }
        kept.push(s);
    }
    *sets = kept;
}

/// Cross product of two set families, pruning tautologies and subsumed
/// results; `None` signals the size budget was exceeded.
fn cross(a: &[LitSet], b: &[LitSet], max_sets: usize) -> Option<Vec<LitSet>> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let mut merged = x.clone();
            merged.extend_from_slice(y);
            if let Some(m) = normalize(merged) {
                out.push(m);
            }
            if out.len() > max_sets.saturating_mul(4) {
                subsume(&mut out);
                if out.len() > max_sets {
                    return None;
                }
            }
        }
    }
    subsume(&mut out);
    if out.len() > max_sets {
        None
    } else {
        Some(out)
    }
}

/// The two normal forms over basic formulas.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    /// conjunction of disjunctions
    Cnf,
    /// disjunction of conjunctions
    Dnf,
}

/// Distributes the NNF Boolean skeleton of `f` into CNF or DNF over basic
/// formulas. The empty family encodes the neutral element (`true` for CNF,
/// `false` for DNF); a single empty set encodes the absorbing one.
/// Returns `None` if the family would exceed `max_sets`.
pub fn to_normal_form(
    f: &Formula,
    mode: Mode,
    arena: &mut UnitArena,
    max_sets: usize,
) -> Option<Vec<LitSet>> {
    match f {
        Formula::True => Some(if mode == Mode::Cnf { vec![] } else { vec![vec![]] }),
        Formula::False => Some(if mode == Mode::Cnf { vec![vec![]] } else { vec![] }),
        Formula::And(parts) => {
            let subs: Option<Vec<Vec<LitSet>>> = parts
                .iter()
                .map(|p| to_normal_form(p, mode, arena, max_sets))
                .collect();
            let subs = subs?;
            match mode {
                Mode::Cnf => {
                    let mut out: Vec<LitSet> = subs.into_iter().flatten().collect();
                    subsume(&mut out);
                    if out.len() > max_sets {
                        None
                    } else {
                        Some(out)
                    }
                }
                Mode::Dnf => {
                    let mut acc: Vec<LitSet> = vec![vec![]];
                    for s in subs {
                        acc = cross(&acc, &s, max_sets)?;
                    }
                    Some(acc)
                }
            }
        }
        Formula::Or(parts) => {
            let subs: Option<Vec<Vec<LitSet>>> = parts
                .iter()
                .map(|p| to_normal_form(p, mode, arena, max_sets))
                .collect();
            let subs = subs?;
            match mode {
                Mode::Dnf => {
                    let mut out: Vec<LitSet> = subs.into_iter().flatten().collect();
                    subsume(&mut out);
                    if out.len() > max_sets {
                        None
                    } else {
                        Some(out)
                    }
                }
                Mode::Cnf => {
                    let mut acc: Vec<LitSet> = vec![vec![]];
                    for s in subs {
                        acc = cross(&acc, &s, max_sets)?;
                    }
                    Some(acc)
                }
            }
        }
        // literals and quantified subformulas are opaque units
        _ => Some(vec![vec![arena.lit(f)]]),
    }
}

/// Rebuilds a formula from a normal form family.
pub fn from_normal_form(sets: &[LitSet], mode: Mode, arena: &UnitArena) -> Formula {
    let inner = |s: &LitSet| -> Vec<Formula> { s.iter().map(|&l| arena.formula(l)).collect() };
    match mode {
        Mode::Cnf => crate::syntax::and(
            sets.iter()
                .map(|s| crate::syntax::or(inner(s)))
                .collect(),
        ),
        Mode::Dnf => crate::syntax::or(
            sets.iter()
                .map(|s| crate::syntax::and(inner(s)))
                .collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;
    use crate::semantics::oracle_equivalent;
    use crate::syntax::Vocabulary;

    fn roundtrip(text: &str, mode: Mode) {
        let v = Vocabulary::from_parts([("A", 0), ("B", 0), ("C", 0), ("D", 0), ("P", 1)], []);
        let f = parse_formula(text, &v).unwrap();
        let nnf = crate::syntax::to_nnf(&f);
        let mut arena = UnitArena::new();
        let sets = to_normal_form(&nnf, mode, &mut arena, 10_000).unwrap();
        let g = from_normal_form(&sets, mode, &arena);
        let cert = oracle_equivalent(&f, &g);
        assert!(cert.equivalent, "{text} vs {}", crate::parse::print_formula(&g));
    }

    #[test]
    fn cnf_dnf_equivalent() {
        for text in [
            "(A & B) | (C & D)",
            "(A | B) & (C | D)",
            "~A | (B & (C | ~D))",
            "(A <-> B) & (C -> D)",
            "(exists x. P(x)) | (A & B)",
        ] {
            roundtrip(text, Mode::Cnf);
            roundtrip(text, Mode::Dnf);
        }
    }

    #[test]
    fn tautology_pruned() {
        let v = Vocabulary::from_parts([("A", 0), ("B", 0)], []);
        let f = parse_formula("A | ~A | B", &v).unwrap();
        let nnf = crate::syntax::to_nnf(&f);
        let mut arena = UnitArena::new();
        let sets = to_normal_form(&nnf, Mode::Cnf, &mut arena, 100).unwrap();
        assert!(sets.is_empty(), "a tautological clause set reduces to true");
    }

    #[test]
    fn subsumption_removes_supersets() {
        let v = Vocabulary::from_parts([("A", 0), ("B", 0)], []);
        // (A) & (A | B) == A
        let f = parse_formula("A & (A | B)", &v).unwrap();
        let mut arena = UnitArena::new();
        let sets = to_normal_form(&f, Mode::Cnf, &mut arena, 100).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 1);
    }

    #[test]
    fn resolvent_clauses_stay_sound() {
        // CNF of (~A & B) | (A & C) must be equivalent; minimality not needed
        let v = Vocabulary::from_parts([("A", 0), ("B", 0), ("C", 0)], []);
        let f = parse_formula("(~A & B) | (A & C)", &v).unwrap();
        let mut arena = UnitArena::new();
        let sets = to_normal_form(&f, Mode::Cnf, &mut arena, 100).unwrap();
        let g = from_normal_form(&sets, Mode::Cnf, &arena);
        assert!(oracle_equivalent(&f, &g).equivalent);
    }
}
