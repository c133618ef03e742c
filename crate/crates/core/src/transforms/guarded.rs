//! Translations from the separated guarded fragments into their bases:
//! SLGF into LGF (and SGF into GF), and SGNFO into GNFO.

use std::collections::{BTreeMap, BTreeSet};

use super::regroup::{to_normal_form, Mode, UnitArena};
use super::TransformError;
use crate::fragments::{annotate_guards, membership, FragmentId, Witness};
use crate::syntax::{and, exists, forall, implies, not, or, rectify, Formula, VarName};

/// Maximum clause/cube family size for the guarded regroupings.
const GUARDED_MAX_SETS: usize = 1 << 16;

// ---------------------------------------------------------------------------
// SLGF -> LGF (and SGF -> GF)
// ---------------------------------------------------------------------------

/// Translates an SLGF sentence into an equivalent LGF sentence by
/// distributing each guarded quantifier onto the guard-connected slice of
/// its body, innermost nodes first; the unguarded remainder moves outside
/// the quantifier. SGF inputs yield GF outputs (the regrouping never changes
/// guards).
pub fn slgf_to_lgf(f: &Formula) -> Result<Formula, TransformError> {
    let member = annotate_guards(f, FragmentId::Slgf)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Slgf));
    }
    let Some(Witness::Guards(ann)) = member.witness else {
        return Err(TransformError::PreconditionViolated("missing guard annotation".into()));
    };
    let was_sgf = annotate_guards(f, FragmentId::Sgf)
        .map(|r| r.verdict)
        .unwrap_or(false);
    let out = fix_guarded(f, &mut Vec::new(), &ann)?;
    let target = if was_sgf { FragmentId::Gf } else { FragmentId::Lgf };
    let check = membership(&out, target)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !check.verdict {
        return Err(TransformError::ShapeMismatch(format!(
            "SLGF pipeline output failed {target} membership: {:?}",
            check.violation
        )));
    }
    Ok(out)
}

fn fix_guarded(
    f: &Formula,
    path: &mut Vec<usize>,
    ann: &crate::fragments::GuardAnnotation,
) -> Result<Formula, TransformError> {
    match f {
        Formula::Forall(us, body) => {
            let Formula::Implies(gamma, psi) = &**body else {
                return Err(TransformError::ShapeMismatch(
                    "universal quantifier without guard shape".into(),
                ));
            };
            path.push(0);
            path.push(1);
            let psi2 = fix_guarded(psi, path, ann)?;
            path.pop();
            path.pop();
            rebuild_guarded_node(true, us, gamma, &psi2)
        }
        Formula::Exists(us, body) => {
            // split the body into the annotated guard atoms and the rest
            let guard = ann.guards.get(path).cloned().ok_or_else(|| {
                TransformError::PreconditionViolated(
                    "existential node without recorded guard".into(),
                )
            })?;
            let mut guard_atoms: Vec<Formula> = match &guard {
                Formula::And(parts) => parts.clone(),
                a => vec![a.clone()],
            };
            let conjunct_count = match &**body {
                Formula::And(parts) => parts.len(),
                _ => 1,
            };
            let mut rest = Vec::new();
            for i in 0..conjunct_count {
                let (c, suffix): (&Formula, Vec<usize>) = match &**body {
                    Formula::And(parts) => (&parts[i], vec![0, i]),
                    other => (other, vec![0]),
                };
                if let Some(k) = guard_atoms.iter().position(|g| g == c) {
                    guard_atoms.remove(k);
                    continue;
                }
                for s in &suffix {
                    path.push(*s);
                }
                let fixed = fix_guarded(c, path, ann)?;
                path.truncate(path.len() - suffix.len());
                rest.push(fixed);
            }
            rebuild_guarded_node(false, us, &guard, &and(rest))
        }
        Formula::Not(_) | Formula::And(_) | Formula::Or(_) | Formula::Implies(..)
        | Formula::Iff(..) => {
            let mut parts = Vec::new();
            for (i, c) in f.children().into_iter().enumerate() {
                path.push(i);
                parts.push(fix_guarded(c, path, ann)?);
                path.pop();
            }
            Ok(match f {
                Formula::Not(_) => not(parts.pop().unwrap()),
                Formula::And(_) => and(parts),
                Formula::Or(_) => or(parts),
                Formula::Implies(..) => {
                    let b = parts.pop().unwrap();
                    let a = parts.pop().unwrap();
                    implies(a, b)
                }
                Formula::Iff(..) => {
                    let b = parts.pop().unwrap();
                    let a = parts.pop().unwrap();
                    crate::syntax::iff(a, b)
                }
                _ => unreachable!(),
            })
        }
        _ => Ok(f.clone()),
    }
}

/// Rebuilds one guarded node, splitting off the part of the body that does
/// not touch the bound variables. For a universal node the body is
/// regrouped into a conjunction of disjunctions of basic formulas, and the
/// quantifier distributes over the conjunction, binding only the
/// guard-connected disjuncts; the existential case is dual.
fn rebuild_guarded_node(
    universal: bool,
    us: &[VarName],
    gamma: &Formula,
    psi: &Formula,
) -> Result<Formula, TransformError> {
    let u_set: BTreeSet<VarName> = us.iter().cloned().collect();
    let guard_vars: BTreeSet<VarName> = gamma.all_vars();
    let has_extra = psi
        .free_vars()
        .iter()
        .any(|v| !u_set.contains(v) && !guard_vars.contains(v));
    if !has_extra {
        // already a base-fragment node
        return Ok(if universal {
            forall(us.to_vec(), implies(gamma.clone(), psi.clone()))
        } else {
            exists(us.to_vec(), and(vec![gamma.clone(), psi.clone()]))
        });
    }
    // negation normal form of the body's Boolean skeleton is not required:
    // the regrouping treats any non-And/Or node as a unit
    let mut arena = UnitArena::new();
    let mode = if universal { Mode::Cnf } else { Mode::Dnf };
    let body_for_regroup = push_negations_on_skeleton(psi);
    let Some(sets) = to_normal_form(&body_for_regroup, mode, &mut arena, GUARDED_MAX_SETS) else {
        return Err(TransformError::budget("guarded regroup", 0));
    };
    let mut parts = Vec::with_capacity(sets.len());
    for set in &sets {
        let mut connected = Vec::new();
        let mut rest = Vec::new();
        for &lit in set {
            let unit = arena.formula(lit);
            if unit.all_vars().iter().any(|v| u_set.contains(v)) {
                connected.push(unit);
            } else {
                rest.push(unit);
            }
        }
        let inner = if universal { or(connected) } else { and(connected) };
        let node = if universal {
            forall(us.to_vec(), implies(gamma.clone(), inner))
        } else {
            exists(us.to_vec(), and(vec![gamma.clone(), inner]))
        };
        rest.push(node);
        parts.push(if universal { or(rest) } else { and(rest) });
    }
    Ok(if universal { and(parts) } else { or(parts) })
}

/// Pushes negation through the Boolean skeleton only (conjunction,
/// disjunction, implication, equivalence); quantified subformulas, atoms and
/// their negations are left as units.
fn push_negations_on_skeleton(f: &Formula) -> Formula {
    fn go(f: &Formula, positive: bool) -> Formula {
        match f {
            Formula::And(fs) => {
                let parts = fs.iter().map(|g| go(g, positive)).collect();
                if positive {
                    and(parts)
                } else {
                    or(parts)
                }
            }
            Formula::Or(fs) => {
                let parts = fs.iter().map(|g| go(g, positive)).collect();
                if positive {
                    or(parts)
                } else {
                    and(parts)
                }
            }
            Formula::Implies(a, b) => {
                if positive {
                    or(vec![go(a, false), go(b, true)])
                } else {
                    and(vec![go(a, true), go(b, false)])
                }
            }
            Formula::Iff(a, b) => {
                let expanded = and(vec![
                    or(vec![not((**a).clone()), (**b).clone()]),
                    or(vec![not((**b).clone()), (**a).clone()]),
                ]);
                go(&expanded, positive)
            }
            Formula::Not(g) => go(g, !positive),
            Formula::True => {
                if positive {
                    Formula::True
                } else {
                    Formula::False
                }
            }
            Formula::False => {
                if positive {
                    Formula::False
                } else {
                    Formula::True
                }
            }
            _ => {
                if positive {
                    f.clone()
                } else {
                    not(f.clone())
                }
            }
        }
    }
    go(f, true)
}

// ---------------------------------------------------------------------------
// SGNFO -> GNFO
// ---------------------------------------------------------------------------

/// Translates an SGNFO sentence into an equivalent GNFO sentence: bottom-up,
/// quantified subformulas are made strictly separated over their
/// co-occurrence lanes (existential blocks distribute onto the lane cells of
/// a disjunction of conjunctions), and every violating guarded negation is
/// split across its variable groups into per-group guarded negations.
pub fn sgnfo_to_gnfo(f: &Formula) -> Result<Formula, TransformError> {
    let member = annotate_guards(f, FragmentId::Sgnfo)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Sgnfo));
    }
    let g = rectify(f);
    let out = fix_gn(&g)?;
    let check = membership(&out, FragmentId::Gnfo)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !check.verdict {
        return Err(TransformError::ShapeMismatch(format!(
            "SGNFO pipeline output failed GNFO membership: {:?}",
            check.violation
        )));
    }
    Ok(out)
}

fn fix_gn(f: &Formula) -> Result<Formula, TransformError> {
    match f {
        Formula::And(parts) => {
            let sibling_atoms: Vec<Formula> =
                parts.iter().filter(|c| c.is_atomic()).cloned().collect();
            let mut out = Vec::with_capacity(parts.len());
            for c in parts {
                if let Formula::Not(psi) = c {
                    let psi2 = fix_gn(psi)?;
                    out.push(fix_negation(&psi2, &sibling_atoms)?);
                } else {
                    out.push(fix_gn(c)?);
                }
            }
            Ok(and(out))
        }
        Formula::Or(parts) => Ok(or(parts.iter().map(fix_gn).collect::<Result<_, _>>()?)),
        Formula::Exists(vs, body) => Ok(exists(vs.clone(), fix_gn(body)?)),
        Formula::Not(_) => Err(TransformError::ShapeMismatch("unguarded negation".into())),
        _ => Ok(f.clone()),
    }
}

/// Lanes of a formula: atom-co-occurrence components over all variables.
fn lanes_of(f: &Formula) -> BTreeMap<VarName, usize> {
    let vars: Vec<VarName> = f.all_vars().into_iter().collect();
    let pos: BTreeMap<&VarName, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
            r
        } else {
            x
        }
    }
    f.for_each_atom(&mut |a| {
        let avars: Vec<VarName> = a.atom_vars().into_iter().collect();
        for w in avars.windows(2) {
            let (a, b) = (pos[&w[0]], pos[&w[1]]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    });
    let mut roots: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (i, v) in vars.iter().enumerate() {
        let r = find(&mut parent, i);
        let next = roots.len();
        let lane = *roots.entry(r).or_insert(next);
        out.insert(v.clone(), lane);
    }
    out
}

/// Splits one negated conjunct: the negated body (already GNFO) is regrouped
/// so that its lanes are strictly separated, then brought into a conjunction
/// of per-lane disjunctions, and the negation distributes into a disjunction
/// of per-lane guarded negations using the sibling atoms as guards.
fn fix_negation(
    psi: &Formula,
    sibling_atoms: &[Formula],
) -> Result<Formula, TransformError> {
    if sibling_atoms.is_empty() {
        return Err(TransformError::ShapeMismatch(
            "negation without guard atom alongside".into(),
        ));
    }
    let lanes = lanes_of(psi);
    let strict = make_strict(psi, &lanes)?;

    // trivially guarded already?
    let free = psi.free_vars();
    if let Some(a) = sibling_atoms
        .iter()
        .find(|a| free.iter().all(|v| a.atom_vars().contains(v)))
    {
        let _ = a;
        return Ok(not(strict));
    }

    // regroup into a conjunction of disjunctions of basic formulas and
    // split each clause per lane
    let mut arena = UnitArena::new();
    let body = push_negations_on_skeleton(&strict);
    let Some(sets) = to_normal_form(&body, Mode::Cnf, &mut arena, GUARDED_MAX_SETS) else {
        return Err(TransformError::budget("negation regroup", 0));
    };
    // ~(and_i or_j eta_ij)  ==  or_i and_j (guard_j & ~eta_ij)
    let mut disjuncts = Vec::with_capacity(sets.len());
    for set in &sets {
        // group clause units per lane
        let mut by_lane: BTreeMap<Option<usize>, Vec<Formula>> = BTreeMap::new();
        for &lit in set {
            let unit = arena.formula(lit);
            let lane = unit
                .free_vars()
                .iter()
                .filter_map(|v| lanes.get(v).copied())
                .next();
            by_lane.entry(lane).or_default().push(unit);
        }
        let mut conj = Vec::new();
        for (lane, units) in by_lane {
            let eta = or(units);
            let eta_free = eta.free_vars();
            // a guard atom covering this group's free variables
            let guard = sibling_atoms
                .iter()
                .find(|a| eta_free.iter().all(|v| a.atom_vars().contains(v)))
                .cloned()
                .ok_or_else(|| {
                    TransformError::ShapeMismatch(format!(
                        "no guard atom covers lane {lane:?} of the negated formula"
                    ))
                })?;
            conj.push(and(vec![guard, not(eta)]));
        }
        disjuncts.push(and(conj));
    }
    Ok(or(disjuncts))
}

/// Establishes strict separateness of the lanes inside a formula:
/// bottom-up, every existential block whose scope mixes lanes is
/// distributed over a disjunction of per-lane conjunctions.
fn make_strict(f: &Formula, lanes: &BTreeMap<VarName, usize>) -> Result<Formula, TransformError> {
    match f {
        Formula::And(parts) => Ok(and(parts
            .iter()
            .map(|p| make_strict(p, lanes))
            .collect::<Result<_, _>>()?)),
        Formula::Or(parts) => Ok(or(parts
            .iter()
            .map(|p| make_strict(p, lanes))
            .collect::<Result<_, _>>()?)),
        Formula::Not(g) => Ok(not(make_strict(g, lanes)?)),
        Formula::Exists(vs, body) => {
            let body2 = make_strict(body, lanes)?;
            let mut scope = body2;
            for v in vs.iter().rev() {
                scope = push_exists_onto_lane(v, scope, lanes)?;
            }
            Ok(scope)
        }
        Formula::Forall(..) | Formula::Implies(..) | Formula::Iff(..) => Err(
            TransformError::ShapeMismatch("unexpected connective in a GNFO body".into()),
        ),
        _ => Ok(f.clone()),
    }
}

fn push_exists_onto_lane(
    v: &VarName,
    scope: Formula,
    lanes: &BTreeMap<VarName, usize>,
) -> Result<Formula, TransformError> {
    if !scope.free_vars().contains(v) {
        return Ok(scope);
    }
    let lane = lanes.get(v).copied();
    let mut arena = UnitArena::new();
    let body = push_negations_on_skeleton(&scope);
    let Some(sets) = to_normal_form(&body, Mode::Dnf, &mut arena, GUARDED_MAX_SETS) else {
        return Err(TransformError::budget("strictness regroup", 0));
    };
    let mut cubes = Vec::with_capacity(sets.len());
    for set in &sets {
        let mut slice = Vec::new();
        let mut rest = Vec::new();
        for &lit in set {
            let unit = arena.formula(lit);
            let unit_lane = unit
                .all_vars()
                .iter()
                .filter_map(|w| lanes.get(w).copied())
                .next();
            if unit_lane == lane && unit_lane.is_some() {
                slice.push(unit);
            } else {
                rest.push(unit);
            }
        }
        let mut parts = rest;
        if slice.is_empty() {
            // variable absent from this cube
            cubes.push(and(parts));
            continue;
        }
        let inner = and(slice);
        if inner.free_vars().contains(v) {
            parts.push(exists(vec![v.clone()], inner));
        } else {
            parts.push(inner);
        }
        cubes.push(and(parts));
    }
    Ok(or(cubes))
}
