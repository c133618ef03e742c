//! Recognizers for the prenex prefix classes: MFO, BSR, SF, AF, GKS, the
//! partition-searching classifiers for SBSR, SAF and SGKS, and Maslov's
//! fragment K.

use std::collections::{BTreeMap, BTreeSet};

use super::{Engine, FragmentError, MembershipResult, Violation, Witness};
use crate::separateness::{block_indices, separated, PartitionKind, VariablePartition};
use crate::syntax::{rectify, to_nnf, Formula, Quant, Term, VarName};

/// Exact-search gate: partition search enumerates candidate assignments only
/// when at most this many variables are in play.
pub const EXACT_SEARCH_VAR_GATE: usize = 12;

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

/// MFO: relational sentences over unary predicates only, without constants;
/// `with_equality` selects the MFOeq variant.
pub fn check_mfo(f: &Formula, with_equality: bool) -> MembershipResult {
    let mut violation: Option<Violation> = None;
    f.for_each_atom(&mut |a| {
        if violation.is_some() {
            return;
        }
        match a {
            Formula::Atom(p, args) => {
                if args.len() != 1 {
                    violation = Some(Violation::here(format!("non-unary predicate `{p}`")));
                } else if matches!(args[0], Term::Const(_)) {
                    violation = Some(Violation::here("constant symbol in atom"));
                }
            }
            Formula::Eq(..) if !with_equality => {
                violation = Some(Violation::here("equality atom"));
            }
            Formula::Eq(a, b) => {
                if matches!(a, Term::Const(_)) || matches!(b, Term::Const(_)) {
                    violation = Some(Violation::here("constant symbol in atom"));
                }
            }
            _ => {}
        }
    });
    match violation {
        Some(v) => MembershipResult::no(v, Engine::Structural),
        None => MembershipResult::yes(Witness::Shape("monadic".into()), Engine::Structural),
    }
}

/// BSR: prenex sentences with an exists*-forall* prefix; equality and
/// constants are allowed.
pub fn check_bsr(f: &Formula) -> MembershipResult {
    let Some(prefix) = f.prenex_prefix() else {
        return MembershipResult::no(Violation::here("not prenex"), Engine::Structural);
    };
    let mut seen_forall = false;
    for (q, v) in &prefix {
        match q {
            Quant::Forall => seen_forall = true,
            Quant::Exists if seen_forall => {
                return MembershipResult::no(
                    Violation::here(format!("existential `{v}` inside universal scope")),
                    Engine::Structural,
                );
            }
            Quant::Exists => {}
        }
    }
    let leading = prefix.iter().filter(|(q, _)| *q == Quant::Exists).count();
    MembershipResult::yes(
        Witness::Shape(format!("exists^{leading} forall^{}", prefix.len() - leading)),
        Engine::Structural,
    )
}

/// Splits a prenex prefix into the leading existential block `z`, the set of
/// universal variables, and the set of existential variables bound after the
/// first universal.
fn sf_split(prefix: &[(Quant, VarName)]) -> (BTreeSet<VarName>, BTreeSet<VarName>, BTreeSet<VarName>) {
    let mut z = BTreeSet::new();
    let mut x = BTreeSet::new();
    let mut y = BTreeSet::new();
    let mut seen_forall = false;
    for (q, v) in prefix {
        match q {
            Quant::Forall => {
                seen_forall = true;
                x.insert(v.clone());
            }
            Quant::Exists if !seen_forall => {
                z.insert(v.clone());
            }
            Quant::Exists => {
                y.insert(v.clone());
            }
        }
    }
    (z, x, y)
}

/// SF: prenex sentences `exists z forall x1 exists y1 ...` in which the
/// universally quantified variables and the non-leading existential
/// variables are separated; leading existentials are exempt.
pub fn check_sf(f: &Formula) -> MembershipResult {
    let Some(prefix) = f.prenex_prefix() else {
        return MembershipResult::no(Violation::here("not prenex"), Engine::Structural);
    };
    let (z, x, y) = sf_split(&prefix);
    match separated(f, &x, &y) {
        Ok(true) => {
            let mut part = VariablePartition::new(PartitionKind::Sf);
            for v in &z {
                part.insert("Z", v.clone());
            }
            for v in &x {
                part.insert("X", v.clone());
            }
            for v in &y {
                part.insert("Y", v.clone());
            }
            let alternations = count_alternations(&prefix);
            let mut r = MembershipResult::yes(Witness::Partition(part), Engine::Structural);
            if let Some(Witness::Partition(p)) = &mut r.witness {
                p.references.insert("alternations".into(), Vec::new());
                p.references
                    .get_mut("alternations")
                    .unwrap()
                    .push(VarName::new(alternations.to_string()));
            }
            r
        }
        Ok(false) => MembershipResult::no(
            Violation::here("an atom mixes universal and non-leading existential variables"),
            Engine::Structural,
        ),
        Err(_) => unreachable!("prefix variable sets are disjoint"),
    }
}

/// Number of forall-exists alternations in a prenex prefix.
pub fn count_alternations(prefix: &[(Quant, VarName)]) -> usize {
    let mut n = 0;
    for w in prefix.windows(2) {
        if w[0].0 == Quant::Forall && w[1].0 == Quant::Exists {
            n += 1;
        }
    }
    n
}

/// AF: prenex sentences with an exists*-forall-exists* prefix (exactly one
/// universal quantifier), without equality.
pub fn check_af(f: &Formula) -> MembershipResult {
    if f.contains_equality() {
        return MembershipResult::no(Violation::here("equality atom"), Engine::Structural);
    }
    let Some(prefix) = f.prenex_prefix() else {
        return MembershipResult::no(Violation::here("not prenex"), Engine::Structural);
    };
    match prefix_universal_core(&prefix) {
        Some(core) if core.len() == 1 => {
            MembershipResult::yes(Witness::Shape("exists* forall exists*".into()), Engine::Structural)
        }
        Some(core) => MembershipResult::no(
            Violation::here(format!("{} universal quantifiers, expected 1", core.len())),
            Engine::Structural,
        ),
        None => MembershipResult::no(
            Violation::here("universal quantifiers are not consecutive"),
            Engine::Structural,
        ),
    }
}

/// GKS: prenex sentences with an exists*-forall-forall-exists* prefix
/// (exactly two adjacent universals), without equality.
pub fn check_gks(f: &Formula) -> MembershipResult {
    if f.contains_equality() {
        return MembershipResult::no(Violation::here("equality atom"), Engine::Structural);
    }
    let Some(prefix) = f.prenex_prefix() else {
        return MembershipResult::no(Violation::here("not prenex"), Engine::Structural);
    };
    match prefix_universal_core(&prefix) {
        Some(core) if core.len() == 2 => MembershipResult::yes(
            Witness::Shape("exists* forall forall exists*".into()),
            Engine::Structural,
        ),
        Some(core) => MembershipResult::no(
            Violation::here(format!("{} universal quantifiers, expected 2", core.len())),
            Engine::Structural,
        ),
        None => MembershipResult::no(
            Violation::here("universal quantifiers are not consecutive"),
            Engine::Structural,
        ),
    }
}

/// If the universal quantifiers of the prefix form one consecutive run,
/// returns them; `None` if they are interspersed with existentials.
fn prefix_universal_core(prefix: &[(Quant, VarName)]) -> Option<Vec<VarName>> {
    let first = prefix.iter().position(|(q, _)| *q == Quant::Forall);
    let last = prefix.iter().rposition(|(q, _)| *q == Quant::Forall);
    match (first, last) {
        (None, None) => Some(Vec::new()),
        (Some(i), Some(j)) => {
            if prefix[i..=j].iter().all(|(q, _)| *q == Quant::Forall) {
                Some(prefix[i..=j].iter().map(|(_, v)| v.clone()).collect())
            } else {
                None
            }
        }
        _ => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Atom profiles shared by the partition searches
// ---------------------------------------------------------------------------

struct AtomProfile {
    universals: Vec<VarName>,
    existentials: Vec<VarName>,
}

struct PrefixProfile {
    /// pair-block index of every prefix variable
    idx: BTreeMap<VarName, usize>,
    universals: Vec<VarName>,
    atoms: Vec<AtomProfile>,
}

fn prefix_profile(f: &Formula) -> Result<PrefixProfile, FragmentError> {
    let idx = block_indices(f).map_err(|_| FragmentError::NotPrenex)?;
    let prefix = f.prenex_prefix().expect("prenex checked");
    let universal_set: BTreeSet<VarName> = prefix
        .iter()
        .filter(|(q, _)| *q == Quant::Forall)
        .map(|(_, v)| v.clone())
        .collect();
    let universals = prefix
        .iter()
        .filter(|(q, _)| *q == Quant::Forall)
        .map(|(_, v)| v.clone())
        .collect();
    let mut atoms = Vec::new();
    f.for_each_atom(&mut |a| {
        let vars = a.atom_vars();
        atoms.push(AtomProfile {
            universals: vars.iter().filter(|v| universal_set.contains(v)).cloned().collect(),
            existentials: vars.iter().filter(|v| !universal_set.contains(v)).cloned().collect(),
        });
    });
    Ok(PrefixProfile { idx, universals, atoms })
}

// ---------------------------------------------------------------------------
// SBSR partition search (complete, polynomial)
// ---------------------------------------------------------------------------

/// Searches for an SBSR partition witness of a prenex, rectified sentence:
/// a grouping of the universal variables into indexed classes such that
/// every class index is at most the block index of each of its members, and
/// every atom draws its existential variables from blocks strictly below its
/// universal class's index. Universal variables co-occurring in an atom must
/// share a class, so the co-occurrence components are the finest candidate
/// classes and the check is complete.
pub fn find_sbsr_partition(f: &Formula) -> Result<MembershipResult, FragmentError> {
    if !f.is_sentence() {
        return Err(FragmentError::FreeVariables);
    }
    if !f.is_prenex() {
        return Err(FragmentError::NotPrenex);
    }
    if !f.is_rectified() {
        return Err(FragmentError::UnsupportedSyntax("not rectified".into()));
    }
    let p = prefix_profile(f)?;

    // union-find over universal variables by atom co-occurrence
    let mut uf = UnionFind::new(p.universals.len());
    let upos: BTreeMap<&VarName, usize> =
        p.universals.iter().enumerate().map(|(i, v)| (v, i)).collect();
    for a in &p.atoms {
        for w in a.universals.windows(2) {
            uf.union(upos[&w[0]], upos[&w[1]]);
        }
    }

    // per component: lower bound from atoms, upper bound from block indices
    let mut lower: BTreeMap<usize, usize> = BTreeMap::new();
    let mut upper: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, v) in p.universals.iter().enumerate() {
        let root = uf.find(i);
        let e = upper.entry(root).or_insert(usize::MAX);
        *e = (*e).min(p.idx[v]);
        lower.entry(root).or_insert(1);
    }
    for a in &p.atoms {
        if a.universals.is_empty() {
            continue;
        }
        let hi = a
            .existentials
            .iter()
            .map(|v| p.idx[v])
            .max()
            .unwrap_or(0);
        let root = uf.find(upos[&a.universals[0]]);
        let e = lower.entry(root).or_insert(1);
        *e = (*e).max(hi + 1);
    }

    for (&root, &lo) in &lower {
        if lo > upper[&root] {
            let member = p
                .universals
                .iter()
                .enumerate()
                .find(|(i, _)| uf.find(*i) == root)
                .map(|(_, v)| v.clone())
                .unwrap();
            return Ok(MembershipResult::no(
                Violation::here(format!(
                    "universal class around `{member}` needs index {lo} but its earliest binder sits in pair block {}",
                    upper[&root]
                )),
                Engine::Polynomial,
            ));
        }
    }

    // assemble the witness: classes labeled densely in index order
    let mut part = VariablePartition::new(PartitionKind::Sbsr);
    for (v, _) in p.idx.iter() {
        if !p.universals.contains(v) {
            part.insert("Y", v.clone());
        }
    }
    let mut roots: Vec<usize> = lower.keys().copied().collect();
    roots.sort_by_key(|r| {
        let members: Vec<&VarName> = p
            .universals
            .iter()
            .enumerate()
            .filter(|(i, _)| uf.find(*i) == *r)
            .map(|(_, v)| v)
            .collect();
        (lower[r], members.first().map(|v| (*v).clone()))
    });
    let mut indices = BTreeMap::new();
    for (c, root) in roots.iter().enumerate() {
        let label = format!("X{}", c + 1);
        for (i, v) in p.universals.iter().enumerate() {
            if uf.find(i) == *root {
                part.insert(&label, v.clone());
            }
        }
        indices.insert(label, lower[root]);
    }
    part.references.insert(
        "indices".into(),
        indices
            .iter()
            .map(|(l, i)| VarName::new(format!("{l}:{i}")))
            .collect(),
    );
    debug_assert!(verify_sbsr_partition(f, &part, &indices));
    Ok(MembershipResult::yes(Witness::Partition(part), Engine::Polynomial))
}

/// Independent check of an SBSR witness against the raw definition: with the
/// supplied definitional class indices, (a) every universal variable's class
/// index is at most its pair-block index, and (b) every atom has some `i`
/// with its existential variables in blocks `1..=i` and all its universal
/// variables in the single class of index `i+1`.
pub fn verify_sbsr_partition(
    f: &Formula,
    part: &VariablePartition,
    indices: &BTreeMap<String, usize>,
) -> bool {
    let Ok(idx) = block_indices(f) else {
        return false;
    };
    if !part.is_partition_of(&f.all_vars()) {
        return false;
    }
    let mut class_of: BTreeMap<&VarName, &String> = BTreeMap::new();
    for (label, set) in &part.classes {
        if label == "Y" {
            continue;
        }
        let Some(&ci) = indices.get(label) else {
            return false;
        };
        for v in set {
            // (a)
            if ci > idx[v] {
                return false;
            }
            class_of.insert(v, label);
        }
    }
    let y = part.class("Y");
    let mut ok = true;
    f.for_each_atom(&mut |a| {
        if !ok {
            return;
        }
        let vars = a.atom_vars();
        let mut atom_class: Option<&String> = None;
        let mut hi = 0usize;
        for v in &vars {
            if y.contains(v) {
                hi = hi.max(idx[v]);
            } else if let Some(&label) = class_of.get(v) {
                match atom_class {
                    None => atom_class = Some(label),
                    Some(l) if l == label => {}
                    Some(_) => {
                        ok = false;
                        return;
                    }
                }
            } else {
                ok = false;
                return;
            }
        }
        if let Some(label) = atom_class {
            // (b): need i >= hi with class index == i + 1
            if indices[label] < hi + 1 {
                ok = false;
            }
        }
    });
    ok
}

/// Derives the SBSR partition of an SF sentence constructively: all
/// existential variables to `Y`, all universal variables to a single class
/// of index 2.
pub fn sbsr_from_sf(f: &Formula) -> Option<MembershipResult> {
    let prefix = f.prenex_prefix()?;
    let (z, x, y) = sf_split(&prefix);
    let mut part = VariablePartition::new(PartitionKind::Sbsr);
    for v in z.iter().chain(y.iter()) {
        part.insert("Y", v.clone());
    }
    let mut indices = BTreeMap::new();
    if !x.is_empty() {
        for v in &x {
            part.insert("X1", v.clone());
        }
        indices.insert("X1".to_string(), 2usize);
        // index 2 is only valid when some existential block precedes the
        // first universal; otherwise use index 1
        let idx = block_indices(f).ok()?;
        let min_u = x.iter().map(|v| idx[v]).min().unwrap();
        if min_u < 2 {
            indices.insert("X1".to_string(), 1);
        }
        part.references.insert(
            "indices".into(),
            indices.iter().map(|(l, i)| VarName::new(format!("{l}:{i}"))).collect(),
        );
    }
    if verify_sbsr_partition(f, &part, &indices) {
        Some(MembershipResult::yes(Witness::Partition(part), Engine::Structural))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// SAF partition search
// ---------------------------------------------------------------------------

/// One candidate assignment of an existential variable in the SAF/SGKS
/// searches: the `Y` class or the `U`-class of a reference group.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum EAssign {
    Y,
    U(usize),
}

/// Searches for an SAF partition witness of a prenex, rectified sentence
/// without equality: existential variables are split into a set `Y` and
/// classes `U_j`, one per universal variable `x_j`, such that every `u` in
/// `U_j` is bound no earlier than `x_j`, every atom contains at most one
/// universal variable, and every atom's variables fit the pattern `earlier
/// Y-blocks + x_j + U_j` for some `j` (or lie entirely in `Y`).
///
/// A propagation heuristic runs first and its result is re-verified; if
/// verification fails, the exact search enumerates all constrained
/// assignments (gated to [`EXACT_SEARCH_VAR_GATE`] existential variables).
pub fn find_saf_partition(f: &Formula) -> Result<MembershipResult, FragmentError> {
    find_group_partition(f, false)
}

/// Searches for an SGKS partition witness: like SAF but universal variables
/// are grouped into reference pairs `{x_j, x'_j}` (atoms may contain at most
/// two universal variables, which fixes pairs by co-occurrence; leftover
/// singletons may be paired up during search). `U_j` members must be bound
/// no earlier than the later pair element; atoms draw earlier-block `Y`
/// variables relative to the earlier pair element.
pub fn find_sgks_partition(f: &Formula) -> Result<MembershipResult, FragmentError> {
    find_group_partition(f, true)
}

fn find_group_partition(f: &Formula, pairs: bool) -> Result<MembershipResult, FragmentError> {
    if !f.is_sentence() {
        return Err(FragmentError::FreeVariables);
    }
    if !f.is_prenex() {
        return Err(FragmentError::NotPrenex);
    }
    if !f.is_rectified() {
        return Err(FragmentError::UnsupportedSyntax("not rectified".into()));
    }
    if f.contains_equality() {
        return Err(FragmentError::EqualityPresent);
    }
    let p = prefix_profile(f)?;
    let max_univ = if pairs { 2 } else { 1 };
    for a in &p.atoms {
        if a.universals.len() > max_univ {
            return Ok(MembershipResult::no(
                Violation::here(format!(
                    "an atom contains {} universal variables (at most {max_univ} allowed)",
                    a.universals.len()
                )),
                Engine::Structural,
            ));
        }
    }

    // group universal variables: forced by co-occurrence for pairs; each its
    // own group otherwise
    let upos: BTreeMap<&VarName, usize> =
        p.universals.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut uf = UnionFind::new(p.universals.len());
    if pairs {
        for a in &p.atoms {
            for w in a.universals.windows(2) {
                uf.union(upos[&w[0]], upos[&w[1]]);
            }
        }
        for i in 0..p.universals.len() {
            let root = uf.find(i);
            let size = (0..p.universals.len()).filter(|&j| uf.find(j) == root).count();
            if size > 2 {
                return Ok(MembershipResult::no(
                    Violation::here("three universal variables are chained by atom co-occurrence"),
                    Engine::Structural,
                ));
            }
        }
    }

    // base grouping
    let base_groups = universal_groups(&p, &mut uf);
    if let Some(result) = try_groups(f, &p, &base_groups, pairs)? {
        return Ok(result);
    }
    if !pairs {
        // SAF groups are forced; the failure from the exact search is final
        return Ok(MembershipResult::no(
            Violation::here("no Y/U assignment satisfies the index and atom conditions"),
            exact_or_exhausted(&p),
        ));
    }

    // SGKS: try pairings of leftover singleton groups
    let singles: Vec<usize> = base_groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.members.len() == 1)
        .map(|(i, _)| i)
        .collect();
    if p.universals.len() > EXACT_SEARCH_VAR_GATE {
        return Ok(MembershipResult::no(
            Violation::here("pairing search exhausted (too many universal variables)"),
            Engine::Exhausted,
        ));
    }
    for pairing in pairings(&singles) {
        let mut groups = base_groups.clone();
        let mut removed: Vec<usize> = Vec::new();
        for &(a, b) in &pairing {
            let extra: Vec<VarName> = groups[b].members.clone();
            groups[a].members.extend(extra);
            removed.push(b);
        }
        removed.sort_unstable_by(|a, b| b.cmp(a));
        for b in removed {
            groups.remove(b);
        }
        for g in &mut groups {
            g.members.sort_by_key(|v| p.idx[v]);
        }
        if let Some(result) = try_groups(f, &p, &groups, pairs)? {
            return Ok(result);
        }
    }
    Ok(MembershipResult::no(
        Violation::here("no pairing and Y/U assignment satisfies the conditions"),
        exact_or_exhausted(&p),
    ))
}

fn exact_or_exhausted(p: &PrefixProfile) -> Engine {
    let evars = p.idx.len() - p.universals.len();
    if evars <= EXACT_SEARCH_VAR_GATE {
        Engine::ExactSearch
    } else {
        Engine::Exhausted
    }
}

#[derive(Clone, Debug)]
struct Group {
    members: Vec<VarName>,
}

fn universal_groups(p: &PrefixProfile, uf: &mut UnionFind) -> Vec<Group> {
    let mut by_root: BTreeMap<usize, Vec<VarName>> = BTreeMap::new();
    for (i, v) in p.universals.iter().enumerate() {
        by_root.entry(uf.find(i)).or_default().push(v.clone());
    }
    let mut groups: Vec<Group> = by_root
        .into_values()
        .map(|mut members| {
            members.sort_by_key(|v| p.idx[v]);
            Group { members }
        })
        .collect();
    groups.sort_by_key(|g| p.idx[&g.members[0]]);
    groups
}

/// All partitions of `items` into disjoint (unordered) pairs plus leftovers.
fn pairings(items: &[usize]) -> Vec<Vec<(usize, usize)>> {
    fn go(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        out.push(acc.clone());
        if rest.len() < 2 {
            return;
        }
        let first = rest[0];
        for (k, &second) in rest.iter().enumerate().skip(1) {
            let mut remaining: Vec<usize> = rest[1..].to_vec();
            remaining.remove(k - 1);
            acc.push((first, second));
            go(&remaining, acc, out);
            acc.pop();
        }
        // also allow leaving `first` single
        go(&rest[1..], acc, out);
    }
    let mut out = Vec::new();
    go(items, &mut Vec::new(), &mut out);
    out.sort();
    out.dedup();
    // skip the empty pairing: the base grouping has already been tried
    out.retain(|p| !p.is_empty());
    out
}

/// Attempts the existential assignment for a fixed universal grouping; the
/// heuristic assignment is re-verified and, failing that, a gated exact
/// search over the per-variable candidate sets runs.
fn try_groups(
    f: &Formula,
    p: &PrefixProfile,
    groups: &[Group],
    pairs: bool,
) -> Result<Option<MembershipResult>, FragmentError> {
    let evars: Vec<VarName> = p
        .idx
        .keys()
        .filter(|v| !p.universals.contains(*v))
        .cloned()
        .collect();
    let group_of: BTreeMap<&VarName, usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| g.members.iter().map(move |v| (v, gi)))
        .collect();

    // candidate sets per existential variable
    let mut cands: Vec<Vec<EAssign>> = Vec::with_capacity(evars.len());
    for v in &evars {
        let mut c = vec![EAssign::Y];
        for (gi, g) in groups.iter().enumerate() {
            // U_j threshold: last pair element for SGKS, the single element
            // for SAF
            let threshold = p.idx[g.members.last().unwrap()];
            if p.idx[v] >= threshold {
                c.push(EAssign::U(gi));
            }
        }
        cands.push(c);
    }
    // propagate atom constraints involving a universal variable
    let epos: BTreeMap<&VarName, usize> = evars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    for a in &p.atoms {
        if a.universals.is_empty() {
            continue;
        }
        let gi = group_of[&a.universals[0]];
        let early = p.idx[&groups[gi].members[0]];
        for v in &a.existentials {
            let i = epos[v];
            cands[i].retain(|c| match c {
                EAssign::U(g) => *g == gi,
                EAssign::Y => p.idx[v] < early,
            });
        }
    }
    if cands.iter().any(|c| c.is_empty()) {
        return Ok(None);
    }

    // heuristic pick: the sole candidate, else prefer the unique U class,
    // else Y
    let pick: Vec<EAssign> = cands
        .iter()
        .map(|c| {
            if c.len() == 1 {
                c[0]
            } else {
                let us: Vec<&EAssign> = c.iter().filter(|a| matches!(a, EAssign::U(_))).collect();
                if us.len() == 1 {
                    *us[0]
                } else {
                    EAssign::Y
                }
            }
        })
        .collect();
    if check_assignment(p, groups, &evars, &pick, pairs) {
        let part = build_group_partition(p, groups, &evars, &pick, pairs);
        debug_assert!(verify_group_partition(f, &part, pairs));
        return Ok(Some(MembershipResult::yes(Witness::Partition(part), Engine::Heuristic)));
    }

    // exact search over the candidate product, gated
    if evars.len() > EXACT_SEARCH_VAR_GATE {
        return Ok(None);
    }
    let mut assign: Vec<EAssign> = vec![EAssign::Y; evars.len()];
    fn search(
        i: usize,
        cands: &[Vec<EAssign>],
        assign: &mut Vec<EAssign>,
        check: &dyn Fn(&[EAssign]) -> bool,
    ) -> bool {
        if i == cands.len() {
            return check(assign);
        }
        for &c in &cands[i] {
            assign[i] = c;
            if search(i + 1, cands, assign, check) {
                return true;
            }
        }
        false
    }
    let found = search(0, &cands, &mut assign, &|a| {
        check_assignment(p, groups, &evars, a, pairs)
    });
    if found {
        let part = build_group_partition(p, groups, &evars, &assign, pairs);
        debug_assert!(verify_group_partition(f, &part, pairs));
        Ok(Some(MembershipResult::yes(Witness::Partition(part), Engine::ExactSearch)))
    } else {
        Ok(None)
    }
}

/// Checks a complete existential assignment against the definitional atom
/// conditions for SAF (`pairs = false`) or SGKS (`pairs = true`).
fn check_assignment(
    p: &PrefixProfile,
    groups: &[Group],
    evars: &[VarName],
    assign: &[EAssign],
    _pairs: bool,
) -> bool {
    let a_of: BTreeMap<&VarName, EAssign> =
        evars.iter().zip(assign.iter().copied()).collect();
    let group_of: BTreeMap<&VarName, usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| g.members.iter().map(move |v| (v, gi)))
        .collect();
    // index condition (c): U_j members bound no earlier than the last pair
    // element
    for (v, a) in &a_of {
        if let EAssign::U(gi) = a {
            let threshold = p.idx[groups[*gi].members.last().unwrap()];
            if p.idx[v] < threshold {
                return false;
            }
        }
    }
    // atom condition (d)
    for at in &p.atoms {
        let mut gi: Option<usize> = None;
        for u in &at.universals {
            let g = group_of[u];
            if gi.is_some_and(|x| x != g) {
                return false;
            }
            gi = Some(g);
        }
        for v in &at.existentials {
            match a_of[v] {
                EAssign::Y => {}
                EAssign::U(g) => {
                    if gi.is_some_and(|x| x != g) {
                        return false;
                    }
                    gi = Some(g);
                }
            }
        }
        if let Some(g) = gi {
            let early = p.idx[&groups[g].members[0]];
            for v in &at.existentials {
                if a_of[v] == EAssign::Y && p.idx[v] >= early {
                    return false;
                }
            }
        }
    }
    true
}

fn build_group_partition(
    p: &PrefixProfile,
    groups: &[Group],
    evars: &[VarName],
    assign: &[EAssign],
    pairs: bool,
) -> VariablePartition {
    let kind = if pairs { PartitionKind::Sgks } else { PartitionKind::Saf };
    let mut part = VariablePartition::new(kind);
    for (v, a) in evars.iter().zip(assign) {
        if matches!(a, EAssign::Y) {
            part.insert("Y", v.clone());
        }
    }
    for v in &p.universals {
        part.insert("X", v.clone());
    }
    for (gi, g) in groups.iter().enumerate() {
        let label = format!("U{}", gi + 1);
        part.classes.entry(label.clone()).or_default();
        for (v, a) in evars.iter().zip(assign) {
            if *a == EAssign::U(gi) {
                part.insert(&label, v.clone());
            }
        }
        part.references.insert(label, g.members.clone());
    }
    part
}

/// Independent re-check of an SAF/SGKS witness against the raw definition.
pub fn verify_group_partition(f: &Formula, part: &VariablePartition, pairs: bool) -> bool {
    let Ok(p) = prefix_profile(f) else {
        return false;
    };
    let y = part.class("Y");
    let x = part.class("X");
    // reference groups
    let mut groups: Vec<(Vec<VarName>, BTreeSet<VarName>)> = Vec::new();
    for (label, refs) in &part.references {
        if !label.starts_with('U') {
            continue;
        }
        let members = part.class(label);
        if refs.is_empty() || refs.len() > if pairs { 2 } else { 1 } {
            return false;
        }
        let mut refs = refs.clone();
        refs.sort_by_key(|v| p.idx.get(v).copied().unwrap_or(usize::MAX));
        groups.push((refs, members));
    }
    // groups partition X
    let mut seen = BTreeSet::new();
    for (refs, _) in &groups {
        for r in refs {
            if !x.contains(r) || !seen.insert(r.clone()) {
                return false;
            }
        }
    }
    if seen != x {
        return false;
    }
    // (c)
    for (refs, members) in &groups {
        let threshold = p.idx[refs.last().unwrap()];
        for u in members {
            if p.idx[u] < threshold {
                return false;
            }
        }
    }
    // (d)
    for at in &p.atoms {
        let vars: BTreeSet<VarName> = at
            .universals
            .iter()
            .chain(at.existentials.iter())
            .cloned()
            .collect();
        if vars.iter().all(|v| y.contains(v)) {
            continue;
        }
        let fits = groups.iter().any(|(refs, members)| {
            let early = p.idx[&refs[0]];
            vars.iter().all(|v| {
                (y.contains(v) && p.idx[v] < early) || refs.contains(v) || members.contains(v)
            })
        });
        if !fits {
            return false;
        }
    }
    true
}

/// Derives the SAF partition of an AF sentence constructively: leading
/// existentials to `Y`, the single universal `x` as reference, trailing
/// existentials to its `U` class.
pub fn saf_from_af(f: &Formula) -> Option<MembershipResult> {
    let p = prefix_profile(f).ok()?;
    if p.universals.len() != 1 || f.contains_equality() {
        return None;
    }
    let x = p.universals[0].clone();
    let mut part = VariablePartition::new(PartitionKind::Saf);
    part.insert("X", x.clone());
    part.classes.entry("U1".into()).or_default();
    for (v, &i) in &p.idx {
        if *v == x {
            continue;
        }
        if i < p.idx[&x] {
            part.insert("Y", v.clone());
        } else {
            part.insert(&"U1".to_string(), v.clone());
        }
    }
    part.references.insert("U1".into(), vec![x]);
    if verify_group_partition(f, &part, false) {
        Some(MembershipResult::yes(Witness::Partition(part), Engine::Structural))
    } else {
        None
    }
}

/// Derives the SGKS partition from a GKS shape or an SAF witness.
pub fn sgks_from_gks_or_saf(f: &Formula, saf: &MembershipResult) -> Option<MembershipResult> {
    let p = prefix_profile(f).ok()?;
    if f.contains_equality() {
        return None;
    }
    if p.universals.len() == 2 {
        // GKS: the two universals form the single pair
        let mut part = VariablePartition::new(PartitionKind::Sgks);
        let mut pair = p.universals.clone();
        pair.sort_by_key(|v| p.idx[v]);
        let threshold = p.idx[&pair[1]];
        part.insert("X", pair[0].clone());
        part.insert("X", pair[1].clone());
        part.classes.entry("U1".into()).or_default();
        for (v, &i) in &p.idx {
            if p.universals.contains(v) {
                continue;
            }
            if i >= threshold {
                part.insert(&"U1".to_string(), v.clone());
            } else {
                part.insert("Y", v.clone());
            }
        }
        part.references.insert("U1".into(), pair);
        if verify_group_partition(f, &part, true) {
            return Some(MembershipResult::yes(Witness::Partition(part), Engine::Structural));
        }
    }
    // an SAF witness is an SGKS witness with singleton pairs
    if saf.verdict {
        if let Some(Witness::Partition(sp)) = &saf.witness {
            let mut part = sp.clone();
            part.kind = PartitionKind::Sgks;
            if verify_group_partition(f, &part, true) {
                return Some(MembershipResult::yes(Witness::Partition(part), Engine::Structural));
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Maslov's fragment K
// ---------------------------------------------------------------------------

/// Maslov's fragment K over sentences without equality: after conversion to
/// negation normal form, the terminal prefix of every atom (the suffix of
/// its binder sequence from the first universal on) must have length at most
/// one, or end with an existential quantifier, or coincide for all remaining
/// atoms with one fixed run of universal quantifiers that is not
/// interspersed with existentials.
pub fn check_maslov_k(f: &Formula) -> MembershipResult {
    if f.contains_equality() {
        return MembershipResult::no(Violation::here("equality atom"), Engine::Structural);
    }
    let g = rectify(&to_nnf(f));
    // collect, per atom: binder stack and the atom's variables
    struct AtomCtx {
        binders: Vec<(Quant, VarName)>,
        vars: BTreeSet<VarName>,
    }
    fn walk(f: &Formula, stack: &mut Vec<(Quant, VarName)>, out: &mut Vec<AtomCtx>) {
        match f {
            Formula::Atom(..) | Formula::Eq(..) => out.push(AtomCtx {
                binders: stack.clone(),
                vars: f.atom_vars(),
            }),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                let kind = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
                let n = stack.len();
                stack.extend(vs.iter().map(|v| (kind, v.clone())));
                walk(body, stack, out);
                stack.truncate(n);
            }
            _ => {
                for c in f.children() {
                    walk(c, stack, out);
                }
            }
        }
    }
    let mut atoms = Vec::new();
    walk(&g, &mut Vec::new(), &mut atoms);

    let mut run: Option<Vec<VarName>> = None;
    for a in &atoms {
        let phi_prefix: Vec<(Quant, VarName)> = a
            .binders
            .iter()
            .filter(|(_, v)| a.vars.contains(v))
            .cloned()
            .collect();
        let start = phi_prefix.iter().position(|(q, _)| *q == Quant::Forall);
        let terminal: &[(Quant, VarName)] = match start {
            None => &[],
            Some(i) => &phi_prefix[i..],
        };
        if terminal.len() <= 1 {
            continue; // (a)
        }
        if terminal.last().map(|(q, _)| *q) == Some(Quant::Exists) {
            continue; // (b)
        }
        // (c): all-universal terminal prefix, equal across atoms, and not
        // interspersed with existential binders in the sentence
        if terminal.iter().any(|(q, _)| *q == Quant::Exists) {
            return MembershipResult::no(
                Violation::here("terminal prefix mixes universals and a non-final existential"),
                Engine::Structural,
            );
        }
        let vars: Vec<VarName> = terminal.iter().map(|(_, v)| v.clone()).collect();
        // non-interspersed: in the binder stack between the first and last
        // run element, no existential binder occurs
        let lo = a.binders.iter().position(|(_, v)| *v == vars[0]).unwrap();
        let hi = a
            .binders
            .iter()
            .position(|(_, v)| *v == *vars.last().unwrap())
            .unwrap();
        if a.binders[lo..=hi].iter().any(|(q, _)| *q == Quant::Exists) {
            return MembershipResult::no(
                Violation::here("universal run is interspersed with existential quantifiers"),
                Engine::Structural,
            );
        }
        match &run {
            None => run = Some(vars),
            Some(r) if *r == vars => {}
            Some(_) => {
                return MembershipResult::no(
                    Violation::here("two atoms require different universal runs"),
                    Engine::Structural,
                )
            }
        }
    }
    let note = match run {
        Some(r) => format!(
            "universal run: {}",
            r.iter().map(|v| v.0.clone()).collect::<Vec<_>>().join(" ")
        ),
        None => "all terminal prefixes short or existential-ended".into(),
    };
    MembershipResult::yes(Witness::Shape(note), Engine::Structural)
}

// ---------------------------------------------------------------------------
// Union-find
// ---------------------------------------------------------------------------

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}
