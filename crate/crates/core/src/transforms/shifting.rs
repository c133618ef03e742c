//! Inward quantifier shifting over basic formulas, the existential-first
//! prenexer with block unification, and the translation pipelines for the
//! prefix fragments: SBSR/SF into BSR, SAF into AF, SGKS into GKS.

use std::collections::{BTreeMap, BTreeSet};

use super::regroup::{subsume, to_normal_form, Mode, UnitArena};
use super::{BlowupBudget, Trace, TransformError};
use crate::fragments::{self, FragmentId};
use crate::separateness::block_indices;
use crate::syntax::{
    and, exists, forall, formula_len, gen_fresh, iff, or, rectify, to_nnf, Formula, Quant,
    Term, VarName,
};

// ---------------------------------------------------------------------------
// Single-step pushes
// ---------------------------------------------------------------------------

/// Pushes one quantifier block inward through its scope. The scope is
/// regrouped into CNF (universal) or DNF (existential) over basic formulas;
/// per clause/cube the quantifier lands exactly on the sub-disjunction
/// (sub-conjunction) of units in which its variables occur. Variables with
/// no occurrence are dropped.
pub(crate) fn push_block(
    kind: Quant,
    vars: &[VarName],
    scope: Formula,
    budget: &BlowupBudget,
) -> Result<Formula, TransformError> {
    let free = scope.free_vars();
    let live: Vec<VarName> = vars.iter().filter(|v| free.contains(v)).cloned().collect();
    if live.is_empty() {
        return Ok(scope);
    }
    let mode = match kind {
        Quant::Forall => Mode::Cnf,
        Quant::Exists => Mode::Dnf,
    };
    let mut arena = UnitArena::new();
    let max_sets = budget.max_formula_len.min(1 << 20) as usize;
    let Some(sets) = to_normal_form(&scope, mode, &mut arena, max_sets) else {
        return Err(TransformError::budget("regroup", formula_len(&scope)));
    };
    let live_set: BTreeSet<&VarName> = live.iter().collect();
    let mut rebuilt: Vec<Formula> = Vec::with_capacity(sets.len());
    for set in &sets {
        let mut slice = Vec::new();
        let mut rest = Vec::new();
        for &lit in set {
            let f = arena.formula(lit);
            if f.free_vars().iter().any(|v| live_set.contains(v)) {
                slice.push(f);
            } else {
                rest.push(f);
            }
        }
        if slice.is_empty() {
            rebuilt.push(match mode {
                Mode::Cnf => or(rest),
                Mode::Dnf => and(rest),
            });
            continue;
        }
        let inner = match mode {
            Mode::Cnf => or(slice),
            Mode::Dnf => and(slice),
        };
        let inner_free = inner.free_vars();
        let bound: Vec<VarName> = live.iter().filter(|v| inner_free.contains(v)).cloned().collect();
        let unit = match kind {
            Quant::Forall => forall(bound, inner),
            Quant::Exists => exists(bound, inner),
        };
        rest.push(unit);
        rebuilt.push(match mode {
            Mode::Cnf => or(rest),
            Mode::Dnf => and(rest),
        });
    }
    let out = match mode {
        Mode::Cnf => and(dedupe(rebuilt)),
        Mode::Dnf => or(dedupe(rebuilt)),
    };
    Ok(out)
}

fn dedupe(parts: Vec<Formula>) -> Vec<Formula> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out
}

/// Recursively shifts every quantifier inward, innermost binders first.
/// Quantifier blocks are chunked for pushing by `chunker` (singletons by
/// default; the GKS track pushes adjacent reference pairs jointly).
pub(crate) fn shift_inward(
    f: &Formula,
    budget: &BlowupBudget,
    trace: &mut Trace,
    chunker: &dyn Fn(Quant, &[VarName]) -> Vec<Vec<VarName>>,
) -> Result<Formula, TransformError> {
    let out = match f {
        Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
            let kind = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
            let mut scope = shift_inward(body, budget, trace, chunker)?;
            for chunk in chunker(kind, vs).into_iter().rev() {
                let before = formula_len(&scope);
                scope = push_block(kind, &chunk, scope, budget)?;
                let after = formula_len(&scope);
                trace.record(
                    format!(
                        "push-{} {}",
                        if kind == Quant::Forall { "forall" } else { "exists" },
                        chunk.iter().map(|v| v.0.clone()).collect::<Vec<_>>().join(" ")
                    ),
                    before,
                    after,
                );
                if after > budget.max_formula_len {
                    return Err(TransformError::budget_with("push", after, trace));
                }
            }
            scope
        }
        Formula::And(parts) => and(parts
            .iter()
            .map(|p| shift_inward(p, budget, trace, chunker))
            .collect::<Result<_, _>>()?),
        Formula::Or(parts) => or(parts
            .iter()
            .map(|p| shift_inward(p, budget, trace, chunker))
            .collect::<Result<_, _>>()?),
        Formula::Not(inner) => {
            debug_assert!(inner.is_atomic());
            f.clone()
        }
        _ => f.clone(),
    };
    Ok(out)
}

fn singleton_chunks(_kind: Quant, vars: &[VarName]) -> Vec<Vec<VarName>> {
    vars.iter().map(|v| vec![v.clone()]).collect()
}

/// Splits off the leading existential block of a prenex-shaped sentence;
/// those quantifiers already sit where every target shape wants them, so
/// pushing them inward only to pull renamed copies back out would inflate
/// the result.
fn split_leading_existentials(f: &Formula) -> (Vec<VarName>, Formula) {
    let mut z = Vec::new();
    let mut cur = f;
    while let Formula::Exists(vs, body) = cur {
        z.extend(vs.iter().cloned());
        cur = body;
    }
    (z, cur.clone())
}

// ---------------------------------------------------------------------------
// Miniscoping (plain quantifier shifting, no regrouping)
// ---------------------------------------------------------------------------

/// Applies the plain quantifier-shifting equivalences to a fixed point,
/// innermost binders first: existentials distribute over disjunction,
/// universals over conjunction, and both retract from subformulas where
/// their variable does not occur. No DNF/CNF regrouping is performed.
pub fn shift_quantifiers(f: &Formula) -> Result<Formula, TransformError> {
    if !f.is_rectified() {
        return Err(TransformError::PreconditionViolated("input not rectified".into()));
    }
    if !f.is_nnf() {
        return Err(TransformError::PreconditionViolated(
            "input not in negation normal form".into(),
        ));
    }
    fn mini(kind: Quant, v: &VarName, body: Formula) -> Formula {
        if !body.free_vars().contains(v) {
            return body;
        }
        match (kind, body) {
            (Quant::Forall, Formula::And(parts)) => {
                and(parts.into_iter().map(|p| mini(kind, v, p)).collect())
            }
            (Quant::Exists, Formula::Or(parts)) => {
                or(parts.into_iter().map(|p| mini(kind, v, p)).collect())
            }
            (Quant::Forall, Formula::Or(parts)) => {
                let (with, without): (Vec<Formula>, Vec<Formula>) =
                    parts.into_iter().partition(|p| p.free_vars().contains(v));
                let pushed = if with.len() == 1 {
                    mini(kind, v, with.into_iter().next().unwrap())
                } else {
                    forall(vec![v.clone()], or(with))
                };
                let mut alt = without;
                alt.push(pushed);
                or(alt)
            }
            (Quant::Exists, Formula::And(parts)) => {
                let (with, without): (Vec<Formula>, Vec<Formula>) =
                    parts.into_iter().partition(|p| p.free_vars().contains(v));
                let pushed = if with.len() == 1 {
                    mini(kind, v, with.into_iter().next().unwrap())
                } else {
                    exists(vec![v.clone()], and(with))
                };
                let mut alt = without;
                alt.push(pushed);
                and(alt)
            }
            (Quant::Forall, other) => forall(vec![v.clone()], other),
            (Quant::Exists, other) => exists(vec![v.clone()], other),
        }
    }
    fn go(f: &Formula) -> Formula {
        match f {
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                let kind = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
                let mut scope = go(body);
                for v in vs.iter().rev() {
                    scope = mini(kind, v, scope);
                }
                scope
            }
            Formula::And(parts) => and(parts.iter().map(go).collect()),
            Formula::Or(parts) => or(parts.iter().map(go).collect()),
            _ => f.clone(),
        }
    }
    Ok(go(f))
}

// ---------------------------------------------------------------------------
// Existential-first prenexing with block unification
// ---------------------------------------------------------------------------

/// Prenexes an NNF sentence, pulling existential blocks before universal
/// blocks. Universal variables are unified across conjuncts and existential
/// variables across disjuncts (one shared variable per round), which keeps
/// prefixes short. The input must be rectified.
pub(crate) fn prenex_exists_first(f: &Formula, used: &mut BTreeSet<String>) -> (Vec<(Quant, VarName)>, Formula) {
    match f {
        Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
            let kind = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
            let (mut prefix, matrix) = prenex_exists_first(body, used);
            let mut full: Vec<(Quant, VarName)> = vs.iter().map(|v| (kind, v.clone())).collect();
            full.append(&mut prefix);
            (full, matrix)
        }
        Formula::And(parts) | Formula::Or(parts) => {
            let is_and = matches!(f, Formula::And(..));
            let mut children: Vec<(std::collections::VecDeque<(Quant, VarName)>, Formula)> = parts
                .iter()
                .map(|p| {
                    let (pr, m) = prenex_exists_first(p, used);
                    (pr.into_iter().collect(), m)
                })
                .collect();
            let mut prefix: Vec<(Quant, VarName)> = Vec::new();
            loop {
                let mut progressed = false;
                // existential phase
                loop {
                    let heads: Vec<usize> = children
                        .iter()
                        .enumerate()
                        .filter(|(_, (q, _))| matches!(q.front(), Some((Quant::Exists, _))))
                        .map(|(i, _)| i)
                        .collect();
                    if heads.is_empty() {
                        break;
                    }
                    progressed = true;
                    if !is_and && heads.len() > 1 {
                        // unify one existential across disjuncts
                        let base = children[heads[0]].0.front().unwrap().1 .0.clone();
                        let u = gen_fresh(&base, used);
                        for &i in &heads {
                            let (_, v) = children[i].0.pop_front().unwrap();
                            children[i].1 = rename_free(&children[i].1, &v, &u);
                        }
                        prefix.push((Quant::Exists, u));
                    } else {
                        let i = heads[0];
                        let (q, v) = children[i].0.pop_front().unwrap();
                        prefix.push((q, v));
                    }
                }
                // universal phase
                loop {
                    let heads: Vec<usize> = children
                        .iter()
                        .enumerate()
                        .filter(|(_, (q, _))| matches!(q.front(), Some((Quant::Forall, _))))
                        .map(|(i, _)| i)
                        .collect();
                    if heads.is_empty() {
                        break;
                    }
                    progressed = true;
                    if is_and && heads.len() > 1 {
                        // unify one universal across conjuncts
                        let base = children[heads[0]].0.front().unwrap().1 .0.clone();
                        let u = gen_fresh(&base, used);
                        for &i in &heads {
                            let (_, v) = children[i].0.pop_front().unwrap();
                            children[i].1 = rename_free(&children[i].1, &v, &u);
                        }
                        prefix.push((Quant::Forall, u));
                    } else {
                        let i = heads[0];
                        let (q, v) = children[i].0.pop_front().unwrap();
                        prefix.push((q, v));
                    }
                }
                if !progressed {
                    break;
                }
            }
            let matrices: Vec<Formula> = children.into_iter().map(|(_, m)| m).collect();
            (prefix, if is_and { and(matrices) } else { or(matrices) })
        }
        _ => (Vec::new(), f.clone()),
    }
}

/// Renames free occurrences of `from` (quantifier-free renaming; binders of
/// `from` shadow as usual).
fn rename_free(f: &Formula, from: &VarName, to: &VarName) -> Formula {
    let mut m = BTreeMap::new();
    m.insert(from.clone(), Term::Var(to.clone()));
    crate::syntax::substitute(f, &m, false).expect("rectified input")
}

/// Rebuilds a prenex sentence from prefix and matrix, merging adjacent
/// blocks.
pub(crate) fn assemble_prenex(prefix: &[(Quant, VarName)], matrix: Formula) -> Formula {
    let mut out = matrix;
    let mut i = prefix.len();
    while i > 0 {
        let kind = prefix[i - 1].0;
        let mut j = i;
        while j > 0 && prefix[j - 1].0 == kind {
            j -= 1;
        }
        let vars: Vec<VarName> = prefix[j..i].iter().map(|(_, v)| v.clone()).collect();
        out = match kind {
            Quant::Forall => forall(vars, out),
            Quant::Exists => exists(vars, out),
        };
        i = j;
    }
    out
}

// ---------------------------------------------------------------------------
// The SBSR single-quantifier step (checked public operation)
// ---------------------------------------------------------------------------

/// Contextual data for [`sbsr_shift_step`]: the pair-block index and class
/// index of every variable of the ambient sentence, plus the ambient prefix
/// order.
#[derive(Clone, Debug)]
pub struct ShiftContext {
    /// pair-block index of each prefix variable
    pub block: BTreeMap<VarName, usize>,
    /// class index of each universal variable
    pub class: BTreeMap<VarName, usize>,
    /// left-to-right position in the ambient prefix
    pub position: BTreeMap<VarName, usize>,
}

impl ShiftContext {
    /// Derives the context from an SBSR sentence via the partition search.
    pub fn from_sentence(f: &Formula) -> Result<Self, TransformError> {
        let r = fragments::find_sbsr_partition(f)
            .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
        if !r.verdict {
            return Err(TransformError::NotInFragment(FragmentId::Sbsr));
        }
        let Some(fragments::Witness::Partition(part)) = r.witness else {
            return Err(TransformError::PreconditionViolated("missing witness".into()));
        };
        let block = block_indices(f)
            .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
        let mut class = BTreeMap::new();
        let indices: BTreeMap<String, usize> = part
            .references
            .get("indices")
            .map(|entries| {
                entries
                    .iter()
                    .filter_map(|e| {
                        let (l, i) = e.0.split_once(':')?;
                        Some((l.to_string(), i.parse().ok()?))
                    })
                    .collect()
            })
            .unwrap_or_default();
        for (label, set) in &part.classes {
            if label == "Y" {
                continue;
            }
            if let Some(&ci) = indices.get(label) {
                for v in set {
                    class.insert(v.clone(), ci);
                }
            }
        }
        let prefix = f.prenex_prefix().ok_or_else(|| {
            TransformError::PreconditionViolated("not prenex".into())
        })?;
        let position = prefix
            .into_iter()
            .enumerate()
            .map(|(i, (_, v))| (v, i))
            .collect();
        Ok(ShiftContext { block, class, position })
    }

    fn is_universal(&self, v: &VarName) -> bool {
        self.class.contains_key(v)
    }
}

/// One inward shifting step for the outermost quantifier of `f = Q v. psi`,
/// with the technical invariants checked against `ctx` first:
/// (i) negation normal form and rectification, (ii) nested binder sequences
/// follow the ambient prefix order, (iii) universal subformulas of `psi`
/// only close over earlier existential blocks plus one universal class,
/// (iv) existential subformulas of `psi` avoid universal variables of
/// earlier or equal blocks, and (v) nested binder sequences within `psi` are
/// existential runs followed by universal runs.
pub fn sbsr_shift_step(
    f: &Formula,
    ctx: &ShiftContext,
    budget: &BlowupBudget,
) -> Result<Formula, TransformError> {
    let (kind, vars, psi) = match f {
        Formula::Forall(vs, body) => (Quant::Forall, vs, body),
        Formula::Exists(vs, body) => (Quant::Exists, vs, body),
        _ => {
            return Err(TransformError::PreconditionViolated(
                "step formula must start with a quantifier".into(),
            ))
        }
    };
    if vars.len() != 1 {
        return Err(TransformError::PreconditionViolated(
            "step formula must bind a single variable".into(),
        ));
    }
    // (i)
    if !f.is_nnf() {
        return Err(TransformError::PreconditionViolated("condition (i): not NNF".into()));
    }
    if !f.is_rectified() {
        return Err(TransformError::PreconditionViolated(
            "condition (i): not rectified".into(),
        ));
    }
    // (ii) binder paths follow the ambient prefix order
    fn binder_paths(f: &Formula, cur: &mut Vec<VarName>, out: &mut Vec<Vec<VarName>>) {
        match f {
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                cur.extend(vs.iter().cloned());
                binder_paths(body, cur, out);
                cur.truncate(cur.len() - vs.len());
            }
            _ => {
                let mut any_quant = false;
                for c in f.children() {
                    if !c.is_quantifier_free() {
                        any_quant = true;
                        binder_paths(c, cur, out);
                    }
                }
                if !any_quant && !cur.is_empty() {
                    out.push(cur.clone());
                }
            }
        }
    }
    let mut paths = Vec::new();
    binder_paths(f, &mut Vec::new(), &mut paths);
    for p in &paths {
        for w in p.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            match (ctx.position.get(a), ctx.position.get(b)) {
                (Some(pa), Some(pb)) if pa < pb => {}
                _ => {
                    return Err(TransformError::PreconditionViolated(format!(
                        "condition (ii): binders {a}, {b} out of prefix order"
                    )))
                }
            }
        }
    }
    // (iii)-(v) over subformulas of psi
    fn scan(
        f: &Formula,
        ctx: &ShiftContext,
        inside_psi: bool,
    ) -> Result<(), TransformError> {
        if let Formula::Forall(vs, body) | Formula::Exists(vs, body) = f {
            if inside_psi {
                let kind = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
                let vars = f.all_vars();
                match kind {
                    Quant::Forall => {
                        // (iii): all variables lie in earlier existential
                        // blocks or share one universal class
                        let v = &vs[0];
                        let j = ctx.class.get(v).copied().ok_or_else(|| {
                            TransformError::PreconditionViolated(format!(
                                "condition (iii): `{v}` has no universal class"
                            ))
                        })?;
                        for w in &vars {
                            if ctx.is_universal(w) {
                                if ctx.class[w] != j {
                                    return Err(TransformError::PreconditionViolated(format!(
                                        "condition (iii): `{w}` outside class {j}"
                                    )));
                                }
                            } else if ctx.block.get(w).copied().unwrap_or(usize::MAX) >= j {
                                return Err(TransformError::PreconditionViolated(format!(
                                    "condition (iii): existential `{w}` bound too late for class {j}"
                                )));
                            }
                        }
                    }
                    Quant::Exists => {
                        // (iv): no universal variables of earlier or equal blocks
                        let v = &vs[0];
                        let i = ctx.block.get(v).copied().unwrap_or(usize::MAX);
                        for w in &vars {
                            if ctx.is_universal(w)
                                && ctx.block.get(w).copied().unwrap_or(usize::MAX) <= i
                            {
                                return Err(TransformError::PreconditionViolated(format!(
                                    "condition (iv): universal `{w}` inside scope of existential `{v}`"
                                )));
                            }
                        }
                    }
                }
            }
            scan(body, ctx, inside_psi)?;
            return Ok(());
        }
        for c in f.children() {
            scan(c, ctx, inside_psi)?;
        }
        Ok(())
    }
    scan(psi, ctx, true)?;
    // (v): within psi, binder kind patterns are exists* forall*
    let mut psi_paths = Vec::new();
    binder_paths(psi, &mut Vec::new(), &mut psi_paths);
    for p in &psi_paths {
        let mut seen_forall = false;
        for v in p {
            let universal = ctx.is_universal(v);
            if universal {
                seen_forall = true;
            } else if seen_forall {
                return Err(TransformError::PreconditionViolated(format!(
                    "condition (v): existential `{v}` nested under a universal in psi"
                )));
            }
        }
    }
    push_block(kind, vars, (**psi).clone(), budget)
}

// ---------------------------------------------------------------------------
// SBSR -> BSR and SF -> BSR
// ---------------------------------------------------------------------------

/// Translates an SBSR sentence into an equivalent BSR sentence: rectify and
/// convert to NNF, shift the prefix inwards quantifier by quantifier,
/// rightmost first, then prenex existential-first. The output is verified to
/// be BSR.
pub fn sbsr_to_bsr(f: &Formula, budget: &BlowupBudget) -> Result<(Formula, Trace), TransformError> {
    let member = fragments::find_sbsr_partition(&rectify(f))
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Sbsr));
    }
    inward_then_prenex(f, budget, FragmentId::Bsr)
}

/// Translates an SF sentence into an equivalent BSR sentence by delegating
/// to the SBSR pipeline through the canonical embedding.
pub fn sf_to_bsr(f: &Formula, budget: &BlowupBudget) -> Result<(Formula, Trace), TransformError> {
    let member = fragments::membership(f, FragmentId::Sf)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Sf));
    }
    inward_then_prenex(f, budget, FragmentId::Bsr)
}

fn inward_then_prenex(
    f: &Formula,
    budget: &BlowupBudget,
    target: FragmentId,
) -> Result<(Formula, Trace), TransformError> {
    let mut trace = Trace::new();
    let g = rectify(&to_nnf(f));
    let (z, rest) = split_leading_existentials(&g);
    let shifted = exists(z, shift_inward(&rest, budget, &mut trace, &singleton_chunks)?);
    let shifted = rectify(&shifted);
    let mut used: BTreeSet<String> = shifted.all_vars().into_iter().map(|v| v.0).collect();
    let (prefix, matrix) = prenex_exists_first(&shifted, &mut used);
    let out = assemble_prenex(&prefix, matrix);
    let len = formula_len(&out);
    trace.record("prenex", len, len);
    if len > budget.max_formula_len {
        return Err(TransformError::budget_with("prenex", len, &mut trace));
    }
    let check = fragments::membership(&out, target)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !check.verdict {
        return Err(TransformError::ShapeMismatch(format!(
            "pipeline output failed {target} membership: {:?}",
            check.violation
        )));
    }
    Ok((out, trace))
}

// ---------------------------------------------------------------------------
// The copy lemma: a disjunction of forall-exists cells as one cell
// ---------------------------------------------------------------------------

/// Rewrites `or_j (forall xs exists ys. chi_j)` into a single sentence-part
/// with one universal block: with `q = 2^|At|` (At = atoms of the input),
/// fresh copies `vs_1..vs_q` and `ys_1..ys_q` witness all realizable atom
/// patterns:
///
/// ```text
/// exists vs_1..vs_q ys_1..ys_q.
///   (or_j and_k chi_j[xs:=vs_k, ys:=ys_k])
///   & forall xs exists ys. or_k and_{A in At} (A <-> A[xs:=vs_k, ys:=ys_k])
/// ```
///
/// Every disjunct must be a prenex `forall* exists*` cell with a
/// quantifier-free matrix; cells are first renamed to a common prefix, with
/// vacuous padding where arities differ.
pub fn forall_behind_or(
    f: &Formula,
    budget: &BlowupBudget,
) -> Result<Formula, TransformError> {
    let disjuncts: Vec<Formula> = match f {
        Formula::Or(parts) => parts.clone(),
        other => vec![other.clone()],
    };
    // parse cells
    struct Cell {
        xs: Vec<VarName>,
        ys: Vec<VarName>,
        matrix: Formula,
    }
    let mut cells = Vec::new();
    for d in &disjuncts {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut cur = d;
        while let Formula::Forall(vs, body) = cur {
            if !ys.is_empty() {
                return Err(TransformError::ShapeMismatch(
                    "universal quantifier after existential in a cell".into(),
                ));
            }
            xs.extend(vs.iter().cloned());
            cur = body;
        }
        while let Formula::Exists(vs, body) = cur {
            ys.extend(vs.iter().cloned());
            cur = body;
        }
        if !cur.is_quantifier_free() {
            return Err(TransformError::ShapeMismatch(
                "cell matrix is not quantifier-free".into(),
            ));
        }
        cells.push(Cell { xs, ys, matrix: cur.clone() });
    }
    let xlen = cells.iter().map(|c| c.xs.len()).max().unwrap_or(0);
    let ylen = cells.iter().map(|c| c.ys.len()).max().unwrap_or(0);

    let mut used: BTreeSet<String> = f.all_vars().into_iter().map(|v| v.0).collect();
    let xs_common: Vec<VarName> = (0..xlen).map(|_| gen_fresh("x", &mut used)).collect();
    let ys_common: Vec<VarName> = (0..ylen).map(|_| gen_fresh("y", &mut used)).collect();

    // rename cell matrices to the common prefix
    let mut matrices = Vec::new();
    for c in &cells {
        let mut m: BTreeMap<VarName, Term> = BTreeMap::new();
        for (v, nv) in c.xs.iter().zip(&xs_common) {
            m.insert(v.clone(), Term::Var(nv.clone()));
        }
        for (v, nv) in c.ys.iter().zip(&ys_common) {
            m.insert(v.clone(), Term::Var(nv.clone()));
        }
        matrices.push(
            crate::syntax::substitute(&c.matrix, &m, false)
                .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?,
        );
    }

    // atoms of the (renamed) disjunction
    let mut atoms: Vec<Formula> = Vec::new();
    for m in &matrices {
        m.for_each_atom(&mut |a| {
            if !atoms.contains(a) {
                atoms.push(a.clone());
            }
        });
    }
    if atoms.len() as u64 > budget.max_atoms_for_expansion {
        return Err(TransformError::budget(
            "copy expansion atom count",
            atoms.len() as u64,
        ));
    }
    let q = 1usize << atoms.len();

    // fresh copies
    let mut v_copies: Vec<Vec<VarName>> = Vec::with_capacity(q);
    let mut y_copies: Vec<Vec<VarName>> = Vec::with_capacity(q);
    for _ in 0..q {
        v_copies.push((0..xlen).map(|_| gen_fresh("v", &mut used)).collect());
        y_copies.push((0..ylen).map(|_| gen_fresh("w", &mut used)).collect());
    }
    let rename_to_copy = |g: &Formula, k: usize| -> Formula {
        let mut m: BTreeMap<VarName, Term> = BTreeMap::new();
        for (v, nv) in xs_common.iter().zip(&v_copies[k]) {
            m.insert(v.clone(), Term::Var(nv.clone()));
        }
        for (v, nv) in ys_common.iter().zip(&y_copies[k]) {
            m.insert(v.clone(), Term::Var(nv.clone()));
        }
        crate::syntax::substitute(g, &m, false).expect("fresh copy renaming")
    };

    // first conjunct: some disjunct holds in every copy
    let body1 = or(matrices
        .iter()
        .map(|m| and((0..q).map(|k| rename_to_copy(m, k)).collect()))
        .collect());
    // second conjunct: every point pattern is matched by some copy
    let body2 = forall(
        xs_common.clone(),
        exists(
            ys_common.clone(),
            or((0..q)
                .map(|k| {
                    and(atoms
                        .iter()
                        .map(|a| iff(a.clone(), rename_to_copy(a, k)))
                        .collect())
                })
                .collect()),
        ),
    );
    let mut all_ex: Vec<VarName> = Vec::new();
    for k in 0..q {
        all_ex.extend(v_copies[k].iter().cloned());
    }
    for k in 0..q {
        all_ex.extend(y_copies[k].iter().cloned());
    }
    let out = exists(all_ex, and(vec![body1, body2]));
    let len = formula_len(&out);
    if len > budget.max_formula_len {
        return Err(TransformError::budget("copy expansion", len));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// SAF special form, SAF -> AF, SGKS -> GKS
// ---------------------------------------------------------------------------

/// The normalized special form of a shifted sentence: leading existentials,
/// then a conjunction of clauses `cells | eta` where every cell is a prenex
/// `forall-block exists-block` unit with quantifier-free matrix and `eta`
/// collects the literal disjuncts.
struct SpecialForm {
    z: Vec<VarName>,
    /// per clause: the cells and the literal rest
    clauses: Vec<(Vec<Formula>, Vec<Formula>)>,
}

impl SpecialForm {
    fn to_formula(&self) -> Formula {
        exists(
            self.z.clone(),
            and(self
                .clauses
                .iter()
                .map(|(cells, lits)| {
                    let mut parts = cells.clone();
                    parts.extend(lits.iter().cloned());
                    or(parts)
                })
                .collect()),
        )
    }
}

/// Pulls every existential quantifier that is not inside a universal scope
/// to the front, renaming each pulled binder to a globally fresh name (the
/// untouched remainder keeps its names, which preserves structural sharing
/// for the clause dedup).
fn pull_free_existentials(
    f: &Formula,
    used: &mut BTreeSet<String>,
) -> (Vec<VarName>, Formula) {
    match f {
        Formula::Exists(vs, body) => {
            let mut renamed_body = (**body).clone();
            let mut out = Vec::with_capacity(vs.len());
            for v in vs {
                let fresh = gen_fresh(&v.0, used);
                if fresh != *v {
                    renamed_body = rename_free(&renamed_body, v, &fresh);
                }
                out.push(fresh);
            }
            let (mut inner, matrix) = pull_free_existentials(&renamed_body, used);
            out.append(&mut inner);
            (out, matrix)
        }
        Formula::And(parts) | Formula::Or(parts) => {
            let is_and = matches!(f, Formula::And(..));
            let mut all = Vec::new();
            let mut ms = Vec::new();
            for p in parts {
                let (vs, m) = pull_free_existentials(p, used);
                all.extend(vs);
                ms.push(m);
            }
            (all, if is_and { and(ms) } else { or(ms) })
        }
        _ => (Vec::new(), f.clone()),
    }
}

/// Pulls all quantifiers inside a universal unit directly under its
/// universal block: inner universal units are absorbed into the block
/// (scope extension) and existentials form the trailing block. Every pulled
/// binder is renamed to a fresh name, so duplicated units are safe to merge.
fn normalize_cell(
    f: &Formula,
    used: &mut BTreeSet<String>,
) -> Result<(Vec<VarName>, Vec<VarName>, Formula), TransformError> {
    let Formula::Forall(..) = f else {
        return Err(TransformError::ShapeMismatch("cell does not start with forall".into()));
    };
    let (cur, xs) = pull_quantifiers(f, Quant::Forall, used);
    let (matrix, ys) = pull_quantifiers(&cur, Quant::Exists, used);
    if !matrix.is_quantifier_free() {
        return Err(TransformError::ShapeMismatch(
            "cell matrix still contains quantifiers".into(),
        ));
    }
    Ok((xs, ys, matrix))
}

/// Strips every binder of the given kind from the positive Boolean
/// structure (scope extension), renaming each stripped variable to a fresh
/// name.
fn pull_quantifiers(
    f: &Formula,
    kind: Quant,
    used: &mut BTreeSet<String>,
) -> (Formula, Vec<VarName>) {
    match f {
        Formula::Forall(vs, body) if kind == Quant::Forall => {
            strip_block(vs, body, kind, used)
        }
        Formula::Exists(vs, body) if kind == Quant::Exists => {
            strip_block(vs, body, kind, used)
        }
        Formula::And(parts) | Formula::Or(parts) => {
            let is_and = matches!(f, Formula::And(..));
            let mut pulled = Vec::new();
            let mut ms = Vec::new();
            for p in parts {
                let (m, vs) = pull_quantifiers(p, kind, used);
                pulled.extend(vs);
                ms.push(m);
            }
            (if is_and { and(ms) } else { or(ms) }, pulled)
        }
        _ => (f.clone(), Vec::new()),
    }
}

fn strip_block(
    vs: &[VarName],
    body: &Formula,
    kind: Quant,
    used: &mut BTreeSet<String>,
) -> (Formula, Vec<VarName>) {
    let mut renamed_body = body.clone();
    let mut out = Vec::with_capacity(vs.len());
    for v in vs {
        let fresh = gen_fresh(&v.0, used);
        if fresh != *v {
            renamed_body = rename_free(&renamed_body, v, &fresh);
        }
        out.push(fresh);
    }
    let (inner, mut more) = pull_quantifiers(&renamed_body, kind, used);
    out.append(&mut more);
    (inner, out)
}

/// Builds the special form from a fully shifted, rectified sentence: pull
/// leading existentials, regroup into CNF treating universal units as
/// indivisible, and normalize every cell.
fn build_special_form(
    shifted: &Formula,
    budget: &BlowupBudget,
    max_cell_universals: usize,
) -> Result<SpecialForm, TransformError> {
    // structural sharing is kept (no upfront rectification), so duplicated
    // units coming out of the pushes collapse in the clause dedup; only the
    // pulled leading existentials need fresh names
    let mut used: BTreeSet<String> = shifted.all_vars().into_iter().map(|v| v.0).collect();
    let (z, body) = pull_free_existentials(shifted, &mut used);
    let mut arena = UnitArena::new();
    let max_sets = budget.max_formula_len.min(1 << 20) as usize;
    let Some(mut sets) = to_normal_form(&body, Mode::Cnf, &mut arena, max_sets) else {
        return Err(TransformError::budget("special-form regroup", formula_len(&body)));
    };
    subsume(&mut sets);
    let mut clauses = Vec::new();
    for set in &sets {
        let mut cells = Vec::new();
        let mut lits = Vec::new();
        for &lit in set {
            let unit = arena.formula(lit);
            match &unit {
                Formula::Forall(..) => {
                    let (xs, ys, matrix) = normalize_cell(&unit, &mut used)?;
                    if xs.len() > max_cell_universals {
                        return Err(TransformError::budget(
                            "cell universal count",
                            xs.len() as u64,
                        ));
                    }
                    cells.push(forall(xs, exists(ys, matrix)));
                }
                Formula::Exists(..) => {
                    // defensive: an existential unit that was not pulled to
                    // the front becomes a vacuous cell
                    let (matrix, ys) = pull_quantifiers(&unit, Quant::Exists, &mut used);
                    if !matrix.is_quantifier_free() {
                        return Err(TransformError::ShapeMismatch(
                            "existential unit with nested quantifiers".into(),
                        ));
                    }
                    cells.push(exists(ys, matrix));
                }
                _ => lits.push(unit),
            }
        }
        clauses.push((cells, lits));
    }
    Ok(SpecialForm { z, clauses })
}

/// Translates an SAF sentence into the special form `exists z. and_i
/// ((or_j forall x_ij exists ys_ij. chi_ij) | eta_i)`.
pub fn saf_special_form(
    f: &Formula,
    budget: &BlowupBudget,
) -> Result<(Formula, Trace), TransformError> {
    let member = fragments::find_saf_partition(&rectify(f))
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Saf));
    }
    let mut trace = Trace::new();
    let g = rectify(&to_nnf(f));
    let (z, rest) = split_leading_existentials(&g);
    let shifted = exists(z, shift_inward(&rest, budget, &mut trace, &singleton_chunks)?);
    let sf = build_special_form(&shifted, budget, 1)?;
    let out = sf.to_formula();
    let len = formula_len(&out);
    trace.record("special-form", len, len);
    if len > budget.max_formula_len {
        return Err(TransformError::budget_with("special-form", len, &mut trace));
    }
    Ok((out, trace))
}

/// Shared tail of the AF/GKS pipelines: apply the copy lemma per clause,
/// then prenex with universal unification into the target shape.
fn special_form_to_target(
    sf: SpecialForm,
    budget: &BlowupBudget,
    trace: &mut Trace,
    target: FragmentId,
) -> Result<Formula, TransformError> {
    let mut conjuncts = Vec::new();
    for (cells, lits) in &sf.clauses {
        if cells.is_empty() {
            conjuncts.push(or(lits.clone()));
            continue;
        }
        let clause_formula = if cells.len() == 1 {
            // single cell: `cell | eta` keeps the target shape directly
            let mut parts = cells.clone();
            parts.extend(lits.iter().cloned());
            or(parts)
        } else {
            // several cells: fold eta into a vacuous cell and apply the
            // copy lemma
            let mut all = cells.clone();
            if !lits.is_empty() {
                all.push(or(lits.clone()));
            }
            let combined = forall_behind_or(&or(all), budget)?;
            let len = formula_len(&combined);
            trace.record("copy-lemma", len, len);
            combined
        };
        conjuncts.push(clause_formula);
    }
    let assembled = rectify(&exists(sf.z.clone(), and(conjuncts)));
    let mut used: BTreeSet<String> = assembled.all_vars().into_iter().map(|v| v.0).collect();
    let (prefix, matrix) = prenex_exists_first(&assembled, &mut used);
    let out = assemble_prenex(&prefix, matrix);
    let len = formula_len(&out);
    trace.record("prenex", len, len);
    if len > budget.max_formula_len {
        return Err(TransformError::budget_with("prenex", len, trace));
    }
    let check = fragments::membership(&out, target)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !check.verdict {
        return Err(TransformError::ShapeMismatch(format!(
            "pipeline output failed {target} membership: {:?}",
            check.violation
        )));
    }
    Ok(out)
}

/// Translates an SAF sentence into an equivalent AF sentence
/// (`exists* forall exists*` prenex) over the same vocabulary.
pub fn saf_to_af(f: &Formula, budget: &BlowupBudget) -> Result<(Formula, Trace), TransformError> {
    let member = fragments::find_saf_partition(&rectify(f))
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Saf));
    }
    let mut trace = Trace::new();
    let g = rectify(&to_nnf(f));
    let (z, rest) = split_leading_existentials(&g);
    let shifted = exists(z, shift_inward(&rest, budget, &mut trace, &singleton_chunks)?);
    let sf = build_special_form(&shifted, budget, 1)?;
    let out = special_form_to_target(sf, budget, &mut trace, FragmentId::Af)?;
    Ok((out, trace))
}

/// Translates an SGKS sentence into an equivalent GKS sentence
/// (`exists* forall forall exists*` prenex). Reference pairs that sit
/// adjacently in the prefix are pushed jointly; non-adjacent pairs are
/// reunited by universal scope extension, and a clause whose cell would
/// need more than two universal variables is reported as a budget failure.
pub fn sgks_to_gks(f: &Formula, budget: &BlowupBudget) -> Result<(Formula, Trace), TransformError> {
    let member = fragments::find_sgks_partition(&rectify(f))
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    if !member.verdict {
        return Err(TransformError::NotInFragment(FragmentId::Sgks));
    }
    let mut trace = Trace::new();
    let g = rectify(&to_nnf(f));
    // reference pairs are taken from the witness of the rectified copy
    let member_g = fragments::find_sgks_partition(&g)
        .map_err(|e| TransformError::PreconditionViolated(e.to_string()))?;
    let mut pair_of: BTreeMap<VarName, VarName> = BTreeMap::new();
    if let Some(fragments::Witness::Partition(p)) = &member_g.witness {
        for refs in p.references.values() {
            if refs.len() == 2 {
                pair_of.insert(refs[0].clone(), refs[1].clone());
                pair_of.insert(refs[1].clone(), refs[0].clone());
            }
        }
    }
    let chunker = move |kind: Quant, vars: &[VarName]| -> Vec<Vec<VarName>> {
        if kind != Quant::Forall {
            return vars.iter().map(|v| vec![v.clone()]).collect();
        }
        // group adjacent reference pairs within the block
        let mut out: Vec<Vec<VarName>> = Vec::new();
        let mut i = 0;
        while i < vars.len() {
            if i + 1 < vars.len() && pair_of.get(&vars[i]) == Some(&vars[i + 1]) {
                out.push(vec![vars[i].clone(), vars[i + 1].clone()]);
                i += 2;
            } else {
                out.push(vec![vars[i].clone()]);
                i += 1;
            }
        }
        out
    };
    let (z, rest) = split_leading_existentials(&g);
    let shifted = exists(z, shift_inward(&rest, budget, &mut trace, &chunker)?);
    let sf = build_special_form(&shifted, budget, 2)?;
    let out = special_form_to_target(sf, budget, &mut trace, FragmentId::Gks)?;
    Ok((out, trace))
}
