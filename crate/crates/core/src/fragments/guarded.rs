//! Recognizers for guarded quantification (GF, LGF and their separated
//! extensions SGF, SLGF) and guarded negation (GNFO, SGNFO), plus the
//! trivial-guard embeddings of MFO.

use std::collections::{BTreeMap, BTreeSet};

use super::{Engine, FragmentError, FragmentId, MembershipResult, Violation, Witness};
use crate::separateness::guard_separated;
use crate::syntax::{
    and, eq, exists, forall, gen_fresh, implies, not, rectify, to_nnf, Formula, Term, VarName,
};

/// Guard evidence: a map from quantifier/negation node paths to the guard
/// recognized there; for SGNFO nodes, `z_division` records the grouping of
/// quantified variables that witnesses the separateness side condition.
#[derive(Clone, Debug, Default)]
pub struct GuardAnnotation {
    pub guards: BTreeMap<Vec<usize>, Formula>,
    pub z_division: BTreeMap<Vec<usize>, String>,
}

impl GuardAnnotation {
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for (path, g) in &self.guards {
            let p: Vec<String> = path.iter().map(|i| i.to_string()).collect();
            parts.push(format!("@{}:{}", p.join("."), crate::parse::print_formula(g)));
        }
        parts.join(" ")
    }
}

/// How many atomic conjuncts an existential body may offer before the guard
/// subset search is considered exhausted.
const GUARD_SUBSET_GATE: usize = 10;

/// Checks membership in one of the guarded fragments and returns the guard
/// annotation as witness. Modes: `Gf`/`Lgf` are the base fragments (all free
/// variables of a quantified body must occur in the guard), `Sgf`/`Slgf`
/// additionally admit guard-separated extra variables, `Gnfo`/`Sgnfo` are
/// the guarded-negation fragments.
pub fn annotate_guards(f: &Formula, mode: FragmentId) -> Result<MembershipResult, FragmentError> {
    if !f.is_sentence() {
        return Err(FragmentError::FreeVariables);
    }
    match mode {
        FragmentId::Gf => Ok(run_guarded(f, true, false)),
        FragmentId::Lgf => Ok(run_guarded(f, false, false)),
        FragmentId::Sgf => Ok(run_guarded(f, true, true)),
        FragmentId::Slgf => Ok(run_guarded(f, false, true)),
        FragmentId::Gnfo => Ok(run_guarded_negation(f, false)),
        FragmentId::Sgnfo => Ok(run_guarded_negation(f, true)),
        other => Err(FragmentError::UnsupportedSyntax(format!(
            "{other} is not a guard-annotated fragment"
        ))),
    }
}

// ---------------------------------------------------------------------------
// (S)GF and (S)LGF
// ---------------------------------------------------------------------------

fn run_guarded(f: &Formula, atomic: bool, separated_ext: bool) -> MembershipResult {
    let mut ann = GuardAnnotation::default();
    match check_guarded(f, atomic, separated_ext, &mut Vec::new(), &mut ann) {
        Ok(_) => MembershipResult::yes(Witness::Guards(ann), Engine::Structural),
        Err(v) => MembershipResult::no(v, Engine::Structural),
    }
}

/// Recursive check; returns the guards occurring in `f` (for the
/// guard-separateness conditions of enclosing quantifiers).
fn check_guarded(
    f: &Formula,
    atomic: bool,
    separated_ext: bool,
    path: &mut Vec<usize>,
    ann: &mut GuardAnnotation,
) -> Result<Vec<Formula>, Violation> {
    match f {
        Formula::Atom(..) | Formula::Eq(..) | Formula::True | Formula::False => Ok(Vec::new()),
        Formula::Not(_) | Formula::And(_) | Formula::Or(_) | Formula::Implies(..)
        | Formula::Iff(..) => {
            let mut guards = Vec::new();
            for (i, c) in f.children().into_iter().enumerate() {
                path.push(i);
                let gs = check_guarded(c, atomic, separated_ext, path, ann)?;
                path.pop();
                guards.extend(gs);
            }
            Ok(guards)
        }
        Formula::Forall(us, body) => {
            let Formula::Implies(ante, psi) = &**body else {
                return Err(Violation::at(
                    "universal quantifier without `guard -> body` shape",
                    path.clone(),
                ));
            };
            let guard_atoms = flatten_atom_conjunction(ante).ok_or_else(|| {
                Violation::at("universal guard is not a conjunction of atoms", path.clone())
            })?;
            path.push(0);
            path.push(1);
            let inner = check_guarded(psi, atomic, separated_ext, path, ann)?;
            path.pop();
            path.pop();
            let mut guards = validate_guard(
                us,
                &guard_atoms,
                psi,
                &inner,
                atomic,
                separated_ext,
                path,
            )?;
            ann.guards.insert(path.clone(), and(guard_atoms.clone()));
            guards.push(and(guard_atoms));
            guards.extend(inner);
            Ok(guards)
        }
        Formula::Exists(us, body) => {
            // body is `guard & psi`; the guard is a nonempty subset of the
            // atomic conjuncts
            let conjuncts: Vec<Formula> = match &**body {
                Formula::And(parts) => parts.clone(),
                other => vec![other.clone()],
            };
            let atom_idx: Vec<usize> = conjuncts
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_atomic())
                .map(|(i, _)| i)
                .collect();
            if atom_idx.is_empty() {
                return Err(Violation::at(
                    "existential quantifier without atomic guard conjunct",
                    path.clone(),
                ));
            }
            // recurse into the non-atomic conjuncts once
            let body_is_and = matches!(&**body, Formula::And(_));
            let mut inner = Vec::new();
            for (i, c) in conjuncts.iter().enumerate() {
                if !c.is_atomic() {
                    let suffix: &[usize] = if body_is_and { &[0, i] } else { &[0] };
                    for s in suffix {
                        path.push(*s);
                    }
                    inner.extend(check_guarded(c, atomic, separated_ext, path, ann)?);
                    path.truncate(path.len() - suffix.len());
                }
            }
            // candidate guard subsets, larger first
            let subsets = guard_subsets(&atom_idx, atomic);
            if subsets.is_empty() {
                return Err(Violation::at("guard subset search exhausted", path.clone()));
            }
            let mut last_err = None;
            for subset in subsets {
                let guard_atoms: Vec<Formula> =
                    subset.iter().map(|&i| conjuncts[i].clone()).collect();
                let rest: Vec<Formula> = conjuncts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !subset.contains(i))
                    .map(|(_, c)| c.clone())
                    .collect();
                let psi = and(rest);
                match validate_guard(us, &guard_atoms, &psi, &inner, atomic, separated_ext, path)
                {
                    Ok(mut guards) => {
                        ann.guards.insert(path.clone(), and(guard_atoms.clone()));
                        guards.push(and(guard_atoms));
                        guards.extend(inner);
                        return Ok(guards);
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            Err(last_err.unwrap())
        }
    }
}

fn flatten_atom_conjunction(f: &Formula) -> Option<Vec<Formula>> {
    match f {
        Formula::And(parts) => {
            if parts.iter().all(|p| p.is_atomic()) {
                Some(parts.clone())
            } else {
                None
            }
        }
        _ if f.is_atomic() => Some(vec![f.clone()]),
        _ => None,
    }
}

fn guard_subsets(atom_idx: &[usize], atomic: bool) -> Vec<Vec<usize>> {
    if atomic {
        // atomic guards: exactly one atom
        return atom_idx.iter().map(|&i| vec![i]).collect();
    }
    if atom_idx.len() > GUARD_SUBSET_GATE {
        // fall back: the full set and each single atom
        let mut out = vec![atom_idx.to_vec()];
        out.extend(atom_idx.iter().map(|&i| vec![i]));
        return out;
    }
    let n = atom_idx.len();
    let mut out: Vec<Vec<usize>> = (1..(1u32 << n))
        .map(|mask| {
            (0..n)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| atom_idx[b])
                .collect::<Vec<usize>>()
        })
        .collect();
    out.sort_by_key(|s| std::cmp::Reverse(s.len()));
    out
}

/// Validates one guarded quantification node: all bound variables occur in
/// the guard; every pair over bound and guard variables co-occurs in some
/// guard atom; free body variables outside the guard are rejected in the
/// base fragments and must be guard-separated from the bound variables in
/// the separated ones.
fn validate_guard(
    us: &[VarName],
    guard_atoms: &[Formula],
    psi: &Formula,
    inner_guards: &[Formula],
    atomic: bool,
    separated_ext: bool,
    path: &[usize],
) -> Result<Vec<Formula>, Violation> {
    if atomic && guard_atoms.len() != 1 {
        return Err(Violation::at(
            "atomic guard required, found a conjunction",
            path.to_vec(),
        ));
    }
    let u_set: BTreeSet<VarName> = us.iter().cloned().collect();
    let guard_vars: BTreeSet<VarName> =
        guard_atoms.iter().flat_map(|a| a.atom_vars()).collect();
    for u in &u_set {
        if !guard_vars.contains(u) {
            return Err(Violation::at(
                format!("bound variable `{u}` does not occur in the guard"),
                path.to_vec(),
            ));
        }
    }
    // pair co-occurrence over bound x (bound + guard) variables
    for u in &u_set {
        for w in &guard_vars {
            if w == u {
                continue;
            }
            let covered = guard_atoms.iter().any(|a| {
                let vs = a.atom_vars();
                vs.contains(u) && vs.contains(w)
            });
            if !covered {
                return Err(Violation::at(
                    format!("`{u}` and `{w}` do not co-occur in any guard atom"),
                    path.to_vec(),
                ));
            }
        }
    }
    let z: BTreeSet<VarName> = psi
        .free_vars()
        .into_iter()
        .filter(|v| !u_set.contains(v) && !guard_vars.contains(v))
        .collect();
    if !separated_ext && !z.is_empty() {
        let v = z.iter().next().unwrap();
        return Err(Violation::at(
            format!("free body variable `{v}` is missing from the guard"),
            path.to_vec(),
        ));
    }
    if separated_ext && !z.is_empty() {
        match guard_separated(psi, inner_guards, &u_set, &z) {
            Ok(true) => {}
            Ok(false) => {
                return Err(Violation::at(
                    "bound and unguarded variables are not guard-separated in the body",
                    path.to_vec(),
                ))
            }
            Err(_) => unreachable!("sets are disjoint by construction"),
        }
    }
    Ok(Vec::new())
}

// ---------------------------------------------------------------------------
// GNFO and SGNFO
// ---------------------------------------------------------------------------

fn run_guarded_negation(f: &Formula, separated_ext: bool) -> MembershipResult {
    let mut ann = GuardAnnotation::default();
    match check_gn(f, separated_ext, &mut Vec::new(), &mut ann) {
        Ok(()) => MembershipResult::yes(Witness::Guards(ann), Engine::Structural),
        Err(v) => MembershipResult::no(v, Engine::Structural),
    }
}

fn check_gn(
    f: &Formula,
    separated_ext: bool,
    path: &mut Vec<usize>,
    ann: &mut GuardAnnotation,
) -> Result<(), Violation> {
    match f {
        Formula::Atom(..) | Formula::Eq(..) | Formula::True | Formula::False => Ok(()),
        Formula::Or(parts) => {
            for (i, c) in parts.iter().enumerate() {
                if matches!(c, Formula::Not(_)) {
                    return Err(Violation::at("unguarded negation under disjunction", {
                        let mut p = path.clone();
                        p.push(i);
                        p
                    }));
                }
                path.push(i);
                check_gn(c, separated_ext, path, ann)?;
                path.pop();
            }
            Ok(())
        }
        Formula::And(parts) => {
            let sibling_atoms: Vec<(usize, Formula)> = parts
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_atomic())
                .map(|(i, c)| (i, c.clone()))
                .collect();
            for (i, c) in parts.iter().enumerate() {
                path.push(i);
                if let Formula::Not(psi) = c {
                    check_guarded_negation_node(
                        psi,
                        &sibling_atoms,
                        separated_ext,
                        path,
                        ann,
                    )?;
                    // recurse into the negated formula itself
                    path.push(0);
                    check_gn(psi, separated_ext, path, ann)?;
                    path.pop();
                } else {
                    check_gn(c, separated_ext, path, ann)?;
                }
                path.pop();
            }
            Ok(())
        }
        Formula::Exists(_, body) => {
            path.push(0);
            let r = check_gn(body, separated_ext, path, ann);
            path.pop();
            r
        }
        Formula::Not(_) => Err(Violation::at("unguarded negation", path.clone())),
        Formula::Forall(..) => Err(Violation::at(
            "universal quantifier (must be simulated by guarded negation)",
            path.clone(),
        )),
        Formula::Implies(..) | Formula::Iff(..) => Err(Violation::at(
            "implication/equivalence connective outside the and-or fragment",
            path.clone(),
        )),
    }
}

/// Validates one guarded-negation conjunct `... & ~psi & ...` against the
/// sibling atoms. For GNFO, one sibling atom must contain every free
/// variable of `psi`. For SGNFO, the free variables are grouped with the
/// quantified variables into atom-co-occurrence components, and each
/// component's free variables must fit into a guard atom of their own, no
/// free variable occurring in another chosen guard atom.
fn check_guarded_negation_node(
    psi: &Formula,
    sibling_atoms: &[(usize, Formula)],
    separated_ext: bool,
    path: &[usize],
    ann: &mut GuardAnnotation,
) -> Result<(), Violation> {
    if sibling_atoms.is_empty() {
        return Err(Violation::at("negation without guard atom alongside", path.to_vec()));
    }
    let free = psi.free_vars();
    if !separated_ext {
        for (_, a) in sibling_atoms {
            if free.iter().all(|v| a.atom_vars().contains(v)) {
                ann.guards.insert(path.to_vec(), a.clone());
                return Ok(());
            }
        }
        return Err(Violation::at(
            "no sibling atom covers all free variables of the negated formula",
            path.to_vec(),
        ));
    }

    // SGNFO: atom-co-occurrence components of the negated formula
    let vars: Vec<VarName> = psi.all_vars().into_iter().collect();
    let pos: BTreeMap<&VarName, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut uf = super::prefix::UnionFind::new(vars.len());
    psi.for_each_atom(&mut |a| {
        let avars: Vec<VarName> = a.atom_vars().into_iter().collect();
        for w in avars.windows(2) {
            uf.union(pos[&w[0]], pos[&w[1]]);
        }
    });
    let mut comp_free: BTreeMap<usize, BTreeSet<VarName>> = BTreeMap::new();
    for v in &free {
        match pos.get(v) {
            Some(&i) => {
                comp_free.entry(uf.find(i)).or_default().insert(v.clone());
            }
            None => {
                // a free variable with no atom occurrence forms its own
                // component with no co-occurrence constraints
                comp_free.entry(vars.len() + pos.len()).or_default().insert(v.clone());
            }
        }
    }
    let comps: Vec<BTreeSet<VarName>> = comp_free.into_values().collect();
    if comps.is_empty() {
        // closed negated formula: any single sibling atom serves as guard
        ann.guards.insert(path.to_vec(), sibling_atoms[0].1.clone());
        ann.z_division.insert(path.to_vec(), "single part (closed)".into());
        return Ok(());
    }

    // backtracking assignment component -> sibling atom
    fn assign(
        k: usize,
        comps: &[BTreeSet<VarName>],
        atoms: &[(usize, Formula)],
        choice: &mut Vec<usize>,
    ) -> bool {
        if k == comps.len() {
            // exclusivity: a free variable must occur in no chosen atom
            // other than its component's
            let chosen: BTreeSet<usize> = choice.iter().copied().collect();
            for (ci, comp) in comps.iter().enumerate() {
                for w in comp {
                    for &ai in &chosen {
                        if ai != choice[ci] && atoms[ai].1.atom_vars().contains(w) {
                            return false;
                        }
                    }
                }
            }
            return true;
        }
        for (ai, (_, a)) in atoms.iter().enumerate() {
            if comps[k].iter().all(|v| a.atom_vars().contains(v)) {
                choice.push(ai);
                if assign(k + 1, comps, atoms, choice) {
                    return true;
                }
                choice.pop();
            }
        }
        false
    }
    let mut choice = Vec::new();
    if assign(0, &comps, sibling_atoms, &mut choice) {
        let chosen: BTreeSet<usize> = choice.iter().copied().collect();
        let guard = and(chosen.iter().map(|&ai| sibling_atoms[ai].1.clone()).collect());
        ann.guards.insert(path.to_vec(), guard);
        let div: Vec<String> = comps
            .iter()
            .map(|c| {
                let names: Vec<String> = c.iter().map(|v| v.0.clone()).collect();
                format!("{{{}}}", names.join(","))
            })
            .collect();
        ann.z_division.insert(path.to_vec(), div.join(" "));
        Ok(())
    } else {
        Err(Violation::at(
            "no separated-negation guard covers the free-variable components",
            path.to_vec(),
        ))
    }
}

// ---------------------------------------------------------------------------
// MFO embeddings
// ---------------------------------------------------------------------------

/// Adds trivial equations `v = v` as guards to every quantifier of an MFO
/// sentence, yielding an equivalent SGF sentence of linear length.
pub fn embed_mfo_sgf(f: &Formula) -> Formula {
    fn go(f: &Formula) -> Formula {
        match f {
            Formula::Forall(vs, body) => {
                let mut out = go(body);
                for v in vs.iter().rev() {
                    out = forall(
                        vec![v.clone()],
                        implies(eq(Term::Var(v.clone()), Term::Var(v.clone())), out),
                    );
                }
                out
            }
            Formula::Exists(vs, body) => {
                let mut out = go(body);
                for v in vs.iter().rev() {
                    out = exists(
                        vec![v.clone()],
                        and(vec![eq(Term::Var(v.clone()), Term::Var(v.clone())), out]),
                    );
                }
                out
            }
            Formula::Not(g) => not(go(g)),
            Formula::And(fs) => and(fs.iter().map(go).collect()),
            Formula::Or(fs) => or_vec(fs.iter().map(go).collect()),
            Formula::Implies(a, b) => implies(go(a), go(b)),
            Formula::Iff(a, b) => crate::syntax::iff(go(a), go(b)),
            _ => f.clone(),
        }
    }
    go(&rectify(f))
}

fn or_vec(parts: Vec<Formula>) -> Formula {
    crate::syntax::or(parts)
}

/// Converts an MFO sentence to negation normal form, eliminates universal
/// quantification through negation, and attaches trivial equations as
/// separated negation guards, yielding an equivalent SGNFO sentence of
/// linear length.
pub fn embed_mfo_sgnfo(f: &Formula) -> Formula {
    let mut used: BTreeSet<String> = f.all_vars().into_iter().map(|v| v.0).collect();
    fn guard_neg(psi: Formula, used: &mut BTreeSet<String>) -> Formula {
        let free: Vec<VarName> = psi.free_vars().into_iter().collect();
        if free.is_empty() {
            let w = gen_fresh("w", used);
            exists(
                vec![w.clone()],
                and(vec![eq(Term::Var(w.clone()), Term::Var(w)), not(psi)]),
            )
        } else {
            let mut parts: Vec<Formula> = free
                .iter()
                .map(|v| eq(Term::Var(v.clone()), Term::Var(v.clone())))
                .collect();
            parts.push(not(psi));
            and(parts)
        }
    }
    fn go(f: &Formula, used: &mut BTreeSet<String>) -> Formula {
        match f {
            Formula::Not(g) => {
                debug_assert!(g.is_atomic());
                guard_neg((**g).clone(), used)
            }
            Formula::And(fs) => and(fs.iter().map(|g| go(g, used)).collect()),
            Formula::Or(fs) => or_vec(fs.iter().map(|g| go(g, used)).collect()),
            Formula::Exists(vs, body) => exists(vs.clone(), go(body, used)),
            Formula::Forall(vs, body) => {
                let negated = to_nnf(&not((**body).clone()));
                let inner = go(&negated, used);
                guard_neg(exists(vs.clone(), inner), used)
            }
            _ => f.clone(),
        }
    }
    let nnf = to_nnf(&rectify(f));
    go(&nnf, &mut used)
}
