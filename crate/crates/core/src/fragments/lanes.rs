//! Recognizers for the finite-variable fragments FOk/SFOk, the fluted
//! fragment FL and its lane-separated extension SFL, and Herzig's ordered
//! fragment. Variable reuse across quantifier occurrences is permitted
//! throughout; recognition works modulo renaming of bound variables.

use std::collections::{BTreeMap, BTreeSet};

use super::{Engine, MembershipResult, Violation, Witness};
use crate::syntax::{rectify, Formula, Quant, Term, VarName};

/// Lane evidence for SFOk and SFL: which lane each variable (SFOk) or each
/// binder occurrence (SFL, keyed by node path and offset in the block)
/// belongs to.
#[derive(Clone, Debug, Default)]
pub struct LaneAssignment {
    pub var_lanes: BTreeMap<VarName, usize>,
    pub binder_lanes: BTreeMap<(Vec<usize>, usize), (usize, usize)>,
}

impl LaneAssignment {
    pub fn render(&self) -> String {
        if !self.var_lanes.is_empty() {
            let mut lanes: BTreeMap<usize, Vec<String>> = BTreeMap::new();
            for (v, &l) in &self.var_lanes {
                lanes.entry(l).or_default().push(v.0.clone());
            }
            lanes
                .iter()
                .map(|(l, vs)| format!("V{}={{{}}}", l, vs.join(",")))
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            let mut lanes: BTreeMap<usize, Vec<String>> = BTreeMap::new();
            for ((_, _), &(lane, pos)) in &self.binder_lanes {
                lanes.entry(lane).or_default().push(format!("p{pos}"));
            }
            lanes
                .iter()
                .map(|(l, ps)| format!("lane{}:{}", l, ps.join(",")))
                .collect::<Vec<_>>()
                .join(" ")
        }
    }
}

// ---------------------------------------------------------------------------
// FOk and SFOk
// ---------------------------------------------------------------------------

/// FOk: at most `k` distinct variable names in the whole sentence (the
/// canonical names are immaterial, recognition is modulo renaming).
pub fn check_fok(f: &Formula, k: u32) -> MembershipResult {
    let vars = f.all_vars();
    if vars.len() <= k as usize {
        MembershipResult::yes(
            Witness::Shape(format!("{} distinct variables", vars.len())),
            Engine::Structural,
        )
    } else {
        MembershipResult::no(
            Violation::here(format!("{} distinct variables exceed {k}", vars.len())),
            Engine::Structural,
        )
    }
}

/// SFOk: the variable names group into pairwise separated lanes of at most
/// `k` names each. The atom-co-occurrence components are the finest lanes,
/// so it suffices that every component has at most `k` names.
pub fn check_sfok(f: &Formula, k: u32) -> MembershipResult {
    let vars: Vec<VarName> = f.all_vars().into_iter().collect();
    let pos: BTreeMap<&VarName, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut uf = super::prefix::UnionFind::new(vars.len());
    f.for_each_atom(&mut |a| {
        let avars: Vec<VarName> = a.atom_vars().into_iter().collect();
        for w in avars.windows(2) {
            uf.union(pos[&w[0]], pos[&w[1]]);
        }
    });
    let mut lanes: BTreeMap<usize, Vec<VarName>> = BTreeMap::new();
    for (i, v) in vars.iter().enumerate() {
        lanes.entry(uf.find(i)).or_default().push(v.clone());
    }
    let mut assignment = LaneAssignment::default();
    for (lane_no, (_, members)) in lanes.iter().enumerate() {
        if members.len() > k as usize {
            return MembershipResult::no(
                Violation::here(format!(
                    "a co-occurrence component has {} variables (> {k})",
                    members.len()
                )),
                Engine::Polynomial,
            );
        }
        for v in members {
            assignment.var_lanes.insert(v.clone(), lane_no + 1);
        }
    }
    MembershipResult::yes(Witness::Lanes(assignment), Engine::Polynomial)
}

// ---------------------------------------------------------------------------
// FL
// ---------------------------------------------------------------------------

/// FL: every atom's argument list is, in order, a suffix of the current
/// binder stack ending at the innermost binder; no equality, no constants,
/// no rebinding of a name already on the stack.
pub fn check_fl(f: &Formula) -> MembershipResult {
    fn go(f: &Formula, stack: &mut Vec<VarName>, path: &mut Vec<usize>) -> Result<(), Violation> {
        match f {
            Formula::Eq(..) => Err(Violation::at("equality atom", path.clone())),
            Formula::Atom(_, args) => {
                let mut arg_vars = Vec::with_capacity(args.len());
                for a in args {
                    match a {
                        Term::Var(v) => arg_vars.push(v.clone()),
                        Term::Const(_) => {
                            return Err(Violation::at("constant argument", path.clone()))
                        }
                    }
                }
                if arg_vars.len() > stack.len()
                    || arg_vars[..] != stack[stack.len() - arg_vars.len()..]
                {
                    return Err(Violation::at(
                        "atom arguments are not the innermost suffix of the binder sequence",
                        path.clone(),
                    ));
                }
                Ok(())
            }
            Formula::True | Formula::False => Ok(()),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                for v in vs {
                    if stack.contains(v) {
                        return Err(Violation::at(
                            format!("variable `{v}` rebound inside its own scope"),
                            path.clone(),
                        ));
                    }
                    stack.push(v.clone());
                }
                path.push(0);
                let r = go(body, stack, path);
                path.pop();
                stack.truncate(stack.len() - vs.len());
                r
            }
            _ => {
                for (i, c) in f.children().into_iter().enumerate() {
                    path.push(i);
                    go(c, stack, path)?;
                    path.pop();
                }
                Ok(())
            }
        }
    }
    match go(f, &mut Vec::new(), &mut Vec::new()) {
        Ok(()) => MembershipResult::yes(Witness::Shape("fluted".into()), Engine::Structural),
        Err(v) => MembershipResult::no(v, Engine::Structural),
    }
}

// ---------------------------------------------------------------------------
// SFL
// ---------------------------------------------------------------------------

/// A binder occurrence: node path of the quantifier plus the offset of the
/// variable in its block.
type BinderId = (Vec<usize>, usize);

/// SFL: there is a renaming of binder occurrences into per-lane position
/// sequences such that every atom reads, in argument order, a consecutive
/// position run of a single lane, and the atom's binder sequence (the
/// enclosing binders of its variables, outermost first) lists exactly those
/// positions in increasing order.
///
/// Constraints are per-atom equalities `lane(b_i) = lane(b_{i+1})`,
/// `pos(b_{i+1}) = pos(b_i) + 1`; solving them is a union-find with offsets,
/// and distinct components can always take distinct lanes.
pub fn check_sfl(f: &Formula) -> MembershipResult {
    // collect per-atom binder sequences
    struct AtomInfo {
        binders: Vec<BinderId>,
        path: Vec<usize>,
    }
    fn go(
        f: &Formula,
        stack: &mut Vec<(VarName, BinderId)>,
        path: &mut Vec<usize>,
        atoms: &mut Vec<AtomInfo>,
    ) -> Result<(), Violation> {
        match f {
            Formula::Eq(..) => Err(Violation::at("equality atom", path.clone())),
            Formula::Atom(_, args) => {
                let mut arg_vars: Vec<VarName> = Vec::with_capacity(args.len());
                for a in args {
                    match a {
                        Term::Var(v) => arg_vars.push(v.clone()),
                        Term::Const(_) => {
                            return Err(Violation::at("constant argument", path.clone()))
                        }
                    }
                }
                let distinct: BTreeSet<&VarName> = arg_vars.iter().collect();
                if distinct.len() != arg_vars.len() {
                    return Err(Violation::at("repeated variable in atom", path.clone()));
                }
                // nearest enclosing binder per variable
                let mut binders = Vec::with_capacity(arg_vars.len());
                for v in &arg_vars {
                    match stack.iter().rev().find(|(name, _)| name == v) {
                        Some((_, b)) => binders.push(b.clone()),
                        None => {
                            return Err(Violation::at(
                                format!("variable `{v}` is unbound"),
                                path.clone(),
                            ))
                        }
                    }
                }
                // the stack restricted to the atom's binders must list them
                // in argument order
                let stack_order: Vec<BinderId> = stack
                    .iter()
                    .map(|(_, b)| b.clone())
                    .filter(|b| binders.contains(b))
                    .collect();
                if stack_order != binders {
                    return Err(Violation::at(
                        "atom arguments disagree with the binder nesting order",
                        path.clone(),
                    ));
                }
                atoms.push(AtomInfo { binders, path: path.clone() });
                Ok(())
            }
            Formula::True | Formula::False => Ok(()),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                for (off, v) in vs.iter().enumerate() {
                    stack.push((v.clone(), (path.clone(), off)));
                }
                path.push(0);
                let r = go(body, stack, path, atoms);
                path.pop();
                stack.truncate(stack.len() - vs.len());
                r
            }
            _ => {
                for (i, c) in f.children().into_iter().enumerate() {
                    path.push(i);
                    go(c, stack, path, atoms)?;
                    path.pop();
                }
                Ok(())
            }
        }
    }

    let mut atoms = Vec::new();
    if let Err(v) = go(f, &mut Vec::new(), &mut Vec::new(), &mut atoms) {
        return MembershipResult::no(v, Engine::Structural);
    }

    // offset union-find: pos(b) = pos(root) + offset(b)
    let mut ids: Vec<BinderId> = Vec::new();
    let mut index: BTreeMap<BinderId, usize> = BTreeMap::new();
    for a in &atoms {
        for b in &a.binders {
            if !index.contains_key(b) {
                index.insert(b.clone(), ids.len());
                ids.push(b.clone());
            }
        }
    }
    let n = ids.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut offset: Vec<i64> = vec![0; n];
    fn find(parent: &mut Vec<usize>, offset: &mut Vec<i64>, x: usize) -> (usize, i64) {
        if parent[x] == x {
            return (x, 0);
        }
        let (root, parent_off) = find(parent, offset, parent[x]);
        parent[x] = root;
        offset[x] += parent_off;
        (root, offset[x])
    }
    for a in &atoms {
        for w in a.binders.windows(2) {
            let i = index[&w[0]];
            let j = index[&w[1]];
            let (ri, oi) = find(&mut parent, &mut offset, i);
            let (rj, oj) = find(&mut parent, &mut offset, j);
            if ri == rj {
                if oj - oi != 1 {
                    return MembershipResult::no(
                        Violation::at(
                            "inconsistent lane positions for an atom's binders",
                            a.path.clone(),
                        ),
                        Engine::Polynomial,
                    );
                }
            } else {
                // pos(j) = pos(i) + 1:  root(rj) anchored so that
                // offset[rj] + oj = oi + 1
                parent[rj] = ri;
                offset[rj] = oi + 1 - oj;
            }
        }
    }

    // assign lanes per component and normalize positions to start at 1
    let mut min_off: BTreeMap<usize, i64> = BTreeMap::new();
    for i in 0..n {
        let (r, o) = find(&mut parent, &mut offset, i);
        let e = min_off.entry(r).or_insert(o);
        *e = (*e).min(o);
    }
    let mut lane_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    for (lane, (&r, _)) in min_off.iter().enumerate() {
        lane_of_root.insert(r, lane + 1);
    }
    let mut assignment = LaneAssignment::default();
    for i in 0..n {
        let (r, o) = find(&mut parent, &mut offset, i);
        let pos = (o - min_off[&r] + 1) as usize;
        assignment.binder_lanes.insert(ids[i].clone(), (lane_of_root[&r], pos));
    }
    MembershipResult::yes(Witness::Lanes(assignment), Engine::Polynomial)
}

// ---------------------------------------------------------------------------
// Herzig's ordered fragment
// ---------------------------------------------------------------------------

/// Herzig's ordered fragment: for every atom `P(v1, ..., vm)`, the binder of
/// `v_i` lies within the scope of a quantifier exactly when that quantifier
/// binds one of `v_1, ..., v_{i-1}`; so the enclosing binders of `v_i`'s
/// binder are exactly the binders of the earlier arguments.
pub fn check_herzig(f: &Formula) -> MembershipResult {
    if f.contains_equality() {
        return MembershipResult::no(Violation::here("equality atom"), Engine::Structural);
    }
    fn go(
        f: &Formula,
        stack: &mut Vec<(VarName, usize)>,
        next_id: &mut usize,
        path: &mut Vec<usize>,
    ) -> Result<(), Violation> {
        match f {
            Formula::Atom(_, args) => {
                let mut binder_ids = Vec::with_capacity(args.len());
                let mut depths = Vec::with_capacity(args.len());
                for a in args {
                    let Term::Var(v) = a else {
                        return Err(Violation::at("constant argument", path.clone()));
                    };
                    match stack.iter().enumerate().rev().find(|(_, (name, _))| name == v) {
                        Some((depth, (_, id))) => {
                            binder_ids.push(*id);
                            depths.push(depth);
                        }
                        None => {
                            return Err(Violation::at(
                                format!("variable `{v}` is unbound"),
                                path.clone(),
                            ))
                        }
                    }
                }
                for (i, &d) in depths.iter().enumerate() {
                    // binders strictly above v_i's binder must be exactly the
                    // binders of v_1..v_{i-1}
                    if d != i {
                        return Err(Violation::at(
                            "argument binder depth out of order",
                            path.clone(),
                        ));
                    }
                    let above: BTreeSet<usize> =
                        stack[..d].iter().map(|(_, id)| *id).collect();
                    let earlier: BTreeSet<usize> = binder_ids[..i].iter().copied().collect();
                    if above != earlier {
                        return Err(Violation::at(
                            "enclosing quantifiers do not match earlier arguments",
                            path.clone(),
                        ));
                    }
                }
                Ok(())
            }
            Formula::Eq(..) => Err(Violation::at("equality atom", path.clone())),
            Formula::True | Formula::False => Ok(()),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                for v in vs {
                    stack.push((v.clone(), *next_id));
                    *next_id += 1;
                }
                path.push(0);
                let r = go(body, stack, next_id, path);
                path.pop();
                stack.truncate(stack.len() - vs.len());
                r
            }
            _ => {
                for (i, c) in f.children().into_iter().enumerate() {
                    path.push(i);
                    go(c, stack, next_id, path)?;
                    path.pop();
                }
                Ok(())
            }
        }
    }
    match go(f, &mut Vec::new(), &mut 0, &mut Vec::new()) {
        Ok(()) => MembershipResult::yes(Witness::Shape("ordered".into()), Engine::Structural),
        Err(v) => MembershipResult::no(v, Engine::Structural),
    }
}

// ---------------------------------------------------------------------------
// MFO embedding into SFL
// ---------------------------------------------------------------------------

/// Renames each variable of an MFO sentence into its own lane (variable `i`
/// becomes `x{i}p1`), yielding an SFL sentence equivalent modulo renaming of
/// bound variables.
pub fn embed_mfo_sfl(f: &Formula) -> Formula {
    let g = rectify(f);
    // first-binder order enumeration
    let mut order: Vec<VarName> = Vec::new();
    fn collect(f: &Formula, out: &mut Vec<VarName>) {
        if let Formula::Forall(vs, _) | Formula::Exists(vs, _) = f {
            for v in vs {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        for c in f.children() {
            collect(c, out);
        }
    }
    collect(&g, &mut order);
    let map: BTreeMap<VarName, VarName> = order
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), VarName::new(format!("x{}p1", i + 1))))
        .collect();
    rename_all(&g, &map)
}

fn rename_all(f: &Formula, map: &BTreeMap<VarName, VarName>) -> Formula {
    let rt = |t: &Term| match t {
        Term::Var(v) => Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
        Term::Const(c) => Term::Const(c.clone()),
    };
    match f {
        Formula::Atom(p, args) => Formula::Atom(p.clone(), args.iter().map(rt).collect()),
        Formula::Eq(a, b) => Formula::Eq(rt(a), rt(b)),
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Not(g) => Formula::Not(Box::new(rename_all(g, map))),
        Formula::And(fs) => Formula::And(fs.iter().map(|g| rename_all(g, map)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|g| rename_all(g, map)).collect()),
        Formula::Implies(a, b) => {
            Formula::Implies(Box::new(rename_all(a, map)), Box::new(rename_all(b, map)))
        }
        Formula::Iff(a, b) => {
            Formula::Iff(Box::new(rename_all(a, map)), Box::new(rename_all(b, map)))
        }
        Formula::Forall(vs, body) => Formula::Forall(
            vs.iter().map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone())).collect(),
            Box::new(rename_all(body, map)),
        ),
        Formula::Exists(vs, body) => Formula::Exists(
            vs.iter().map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone())).collect(),
            Box::new(rename_all(body, map)),
        ),
    }
}

/// Used by the quantifier kind display in lane witnesses.
#[allow(dead_code)]
fn quant_char(q: Quant) -> char {
    match q {
        Quant::Forall => 'A',
        Quant::Exists => 'E',
    }
}
