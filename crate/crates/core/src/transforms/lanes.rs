//! Translations from the lane-separated fragments into their bases:
//! SFOk into FOk and SFL into FL. Both follow the same plan: make the
//! variable lanes strictly separated by pushing every quantifier onto its
//! lane's cell of a per-node normal form, then rename lane by lane into the
//! canonical variable sequence.

use std::collections::BTreeMap;

use super::regroup::{to_normal_form, Mode, UnitArena};
use super::{BlowupBudget, TransformError};
use crate::fragments::{check_sfl_lanes, membership, FragmentId, Witness};
use crate::syntax::{
    and, exists, forall, or, rectify, to_nnf, Formula, Quant, Term, VarName,
};

/// Pushes one quantifier onto the sub-cell of its lane: DNF for
/// existentials, CNF for universals, per cube/clause the lane's units are
/// grouped under the quantifier.
fn push_onto_lane(
    kind: Quant,
    v: &VarName,
    scope: Formula,
    lanes: &BTreeMap<VarName, usize>,
    budget: &BlowupBudget,
) -> Result<Formula, TransformError> {
    if !scope.free_vars().contains(v) {
        return Ok(scope);
    }
    let lane = lanes.get(v).copied();
    let mode = match kind {
        Quant::Forall => Mode::Cnf,
        Quant::Exists => Mode::Dnf,
    };
    let mut arena = UnitArena::new();
    let max_sets = budget.max_formula_len.min(1 << 20) as usize;
    let Some(sets) = to_normal_form(&scope, mode, &mut arena, max_sets) else {
        return Err(TransformError::budget("lane regroup", 0));
    };
    let mut parts = Vec::with_capacity(sets.len());
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
            if unit_lane == lane {
                slice.push(unit);
            } else {
                rest.push(unit);
            }
        }
        if slice.is_empty() {
            parts.push(match mode {
                Mode::Cnf => or(rest),
                Mode::Dnf => and(rest),
            });
            continue;
        }
        let inner = match mode {
            Mode::Cnf => or(slice),
            Mode::Dnf => and(slice),
        };
        let bound = if inner.free_vars().contains(v) {
            match kind {
                Quant::Forall => forall(vec![v.clone()], inner),
                Quant::Exists => exists(vec![v.clone()], inner),
            }
        } else {
            inner
        };
        rest.push(bound);
        parts.push(match mode {
            Mode::Cnf => or(rest),
            Mode::Dnf => and(rest),
        });
    }
    Ok(match mode {
        Mode::Cnf => and(parts),
        Mode::Dnf => or(parts),
    })
}

/// Bottom-up lane strictification: after this pass every quantified
/// subformula touches exactly one lane.
fn lane_strictify(
    f: &Formula,
    lanes: &BTreeMap<VarName, usize>,
    budget: &BlowupBudget,
) -> Result<Formula, TransformError> {
    match f {
        Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
            let kind = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
            let mut scope = lane_strictify(body, lanes, budget)?;
            for v in vs.iter().rev() {
                scope = push_onto_lane(kind, v, scope, lanes, budget)?;
            }
            Ok(scope)
        }
        Formula::And(parts) => Ok(and(parts
            .iter()
            .map(|p| lane_strictify(p, lanes, budget))
            .collect::<Result<_, _>>()?)),
        Formula::Or(parts) => Ok(or(parts
            .iter()
            .map(|p| lane_strictify(p, lanes, budget))
            .collect::<Result<_, _>>()?)),
        _ => Ok(f.clone()),
    }
}

/// Renames each maximal one-lane unit of a strictly separated sentence with
/// the supplied per-unit renamer.
fn rename_units(
    f: &Formula,
    rename: &mut dyn FnMut(&Formula) -> Result<Formula, TransformError>,
) -> Result<Formula, TransformError> {
    match f {
        Formula::And(parts) => Ok(and(parts
            .iter()
            .map(|p| rename_units(p, rename))
            .collect::<Result<_, _>>()?)),
        Formula::Or(parts) => Ok(or(parts
            .iter()
            .map(|p| rename_units(p, rename))
            .collect::<Result<_, _>>()?)),
        Formula::Not(g) if g.is_atomic() => Ok(f.clone()),
        _ => rename(f),
    }
}

/// Consistently renames all variable occurrences (free and bound) of a
/// closed unit.
fn rename_closed(f: &Formula, map: &BTreeMap<VarName, VarName>) -> Formula {
    let rt = |t: &Term| match t {
        Term::Var(v) => Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
        Term::Const(c) => Term::Const(c.clone()),
    };
    match f {
        Formula::Atom(p, args) => Formula::Atom(p.clone(), args.iter().map(rt).collect()),
        Formula::Eq(a, b) => Formula::Eq(rt(a), rt(b)),
        Formula::True | Formula::False => f.clone(),
        Formula::Not(g) => Formula::Not(Box::new(rename_closed(g, map))),
        Formula::And(fs) => and(fs.iter().map(|g| rename_closed(g, map)).collect()),
        Formula::Or(fs) => or(fs.iter().map(|g| rename_closed(g, map)).collect()),
        Formula::Implies(a, b) => Formula::Implies(
            Box::new(rename_closed(a, map)),
            Box::new(rename_closed(b, map)),
        ),
        Formula::Iff(a, b) => Formula::Iff(
            Box::new(rename_closed(a, map)),
            Box::new(rename_closed(b, map)),
        ),
        Formula::Forall(vs, body) => forall(
            vs.iter().map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone())).collect(),
            rename_closed(body, map),
        ),
        Formula::Exists(vs, body) => exists(
            vs.iter().map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone())).collect(),
            rename_closed(body, map),
        ),
    }
}

// ---------------------------------------------------------------------------
// SFOk -> FOk
// ---------------------------------------------------------------------------

/// Translates an SFOk sentence into an equivalent FOk sentence: lanes are
/// strictified and each one-lane unit is renamed into the canonical
/// variables `x1..xk`.
pub fn sfok_to_fok(
    f: &Formula,
    k: u32,
    budget: &BlowupBudget,
) -> Result<Formula, TransformError> {
    let member = membership(f, FragmentId::Sfok(k))
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Sfok(k)));
    }
    if f.all_vars().len() <= k as usize {
        // already within the variable budget
        return Ok(f.clone());
    }
    let g = rectify(&to_nnf(f));
    // lanes of the rectified copy
    let member_g = membership(&g, FragmentId::Sfok(k))
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    let Some(Witness::Lanes(lanes_w)) = member_g.witness else {
        return Err(TransformError::PreconditionViolated("missing lane witness".into()));
    };
    let lanes = lanes_w.var_lanes;
    let strict = lane_strictify(&g, &lanes, budget)?;

    // rename each closed one-lane unit into x1..xk
    let canonical: Vec<VarName> = (1..=k).map(|i| VarName::new(format!("x{i}"))).collect();
    let mut rename = |unit: &Formula| -> Result<Formula, TransformError> {
        let vars: Vec<VarName> = unit.all_vars().into_iter().collect();
        if vars.len() > k as usize {
            return Err(TransformError::ShapeMismatch(format!(
                "a regrouped unit still uses {} variables",
                vars.len()
            )));
        }
        let map: BTreeMap<VarName, VarName> = vars
            .into_iter()
            .zip(canonical.iter().cloned())
            .collect();
        Ok(rename_closed(unit, &map))
    };
    let out = rename_units(&strict, &mut rename)?;
    let check = membership(&out, FragmentId::Fok(k))
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !check.verdict {
        return Err(TransformError::ShapeMismatch(format!(
            "SFOk pipeline output failed FO{k} membership: {:?}",
            check.violation
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// SFL -> FL
// ---------------------------------------------------------------------------

/// Translates an SFL sentence into an equivalent FL sentence: lanes are
/// strictified, every closed one-lane unit is completed with vacuous
/// universal quantifiers down to position one, and positions are renamed
/// into the canonical fluted sequence `x1, x2, ...`.
pub fn sfl_to_fl(f: &Formula, budget: &BlowupBudget) -> Result<Formula, TransformError> {
    let member = membership(f, FragmentId::Sfl)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Sfl));
    }
    if membership(f, FragmentId::Fl)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?
        .verdict
    {
        return Ok(f.clone());
    }
    let g = rectify(&to_nnf(f));
    // binder lanes and positions of the rectified copy; rectification makes
    // binder occurrences unique per name
    let lanes_w = check_sfl_lanes(&g).ok_or(TransformError::NotInFragment(FragmentId::Sfl))?;
    // map variable name -> (lane, pos) via its unique binder
    let mut var_lane: BTreeMap<VarName, usize> = BTreeMap::new();
    let mut var_pos: BTreeMap<VarName, usize> = BTreeMap::new();
    collect_binder_vars(&g, &mut Vec::new(), &mut |path, off, v| {
        if let Some(&(lane, pos)) = lanes_w.binder_lanes.get(&(path.to_vec(), off)) {
            var_lane.insert(v.clone(), lane);
            var_pos.insert(v.clone(), pos);
        } else {
            // binder untouched by any atom: its own fresh lane at position 1
            let lane = 1_000_000 + var_lane.len();
            var_lane.insert(v.clone(), lane);
            var_pos.insert(v.clone(), 1);
        }
    });
    let strict = lane_strictify(&g, &var_lane, budget)?;

    // per closed unit: complete to position 1 with vacuous universal
    // binders and rename position p to x{p}.
    let mut rename = |unit: &Formula| -> Result<Formula, TransformError> {
        let vars: Vec<VarName> = unit.all_vars().into_iter().collect();
        if vars.is_empty() {
            return Ok(unit.clone());
        }
        let min_pos = vars.iter().map(|v| var_pos[v]).min().unwrap();
        let map: BTreeMap<VarName, VarName> = vars
            .iter()
            .map(|v| (v.clone(), VarName::new(format!("x{}", var_pos[v]))))
            .collect();
        let renamed = rename_closed(unit, &map);
        // vacuous prefix forall x1 .. x{min_pos - 1}
        let prefix: Vec<VarName> =
            (1..min_pos).map(|p| VarName::new(format!("x{p}"))).collect();
        Ok(forall(prefix, renamed))
    };
    let out = rename_units(&strict, &mut rename)?;
    let check = membership(&out, FragmentId::Fl)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !check.verdict {
        return Err(TransformError::ShapeMismatch(format!(
            "SFL pipeline output failed FL membership: {:?}",
            check.violation
        )));
    }
    Ok(out)
}

fn collect_binder_vars(
    f: &Formula,
    path: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize], usize, &VarName),
) {
    if let Formula::Forall(vs, _) | Formula::Exists(vs, _) = f {
        for (off, v) in vs.iter().enumerate() {
            visit(path, off, v);
        }
    }
    for (i, c) in f.children().into_iter().enumerate() {
        path.push(i);
        collect_binder_vars(c, path, visit);
        path.pop();
    }
}
