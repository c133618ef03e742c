//! Separateness notions for variable sets and quantifier-prefix bookkeeping
//! shared by the fragment classifiers and the translation engines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::syntax::{Formula, Quant, VarName};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeparatenessError {
    #[error("the two variable sets overlap")]
    OverlappingSets,
    #[error("formula is not prenex")]
    NotPrenex,
    #[error("path does not address a subformula")]
    NotASubformula,
}

/// Which fragment's partition schema a certificate follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionKind {
    Sf,
    Sbsr,
    Saf,
    Sgks,
    Sfok,
    SflLanes,
}

impl fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PartitionKind::Sf => "SF",
            PartitionKind::Sbsr => "SBSR",
            PartitionKind::Saf => "SAF",
            PartitionKind::Sgks => "SGKS",
            PartitionKind::Sfok => "SFOk",
            PartitionKind::SflLanes => "SFL",
        };
        write!(f, "{s}")
    }
}

/// A certified partition of a sentence's variables witnessing membership in
/// a separated fragment. `classes` maps class labels (such as `Y`, `X1`,
/// `U2`, `V1`) to variable sets; `references` maps a `U`-class label to its
/// reference variable(s).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariablePartition {
    pub kind: PartitionKind,
    pub classes: BTreeMap<String, BTreeSet<VarName>>,
    pub references: BTreeMap<String, Vec<VarName>>,
}

impl VariablePartition {
    pub fn new(kind: PartitionKind) -> Self {
        VariablePartition { kind, classes: BTreeMap::new(), references: BTreeMap::new() }
    }

    pub fn class(&self, label: &str) -> BTreeSet<VarName> {
        self.classes.get(label).cloned().unwrap_or_default()
    }

    pub fn insert(&mut self, label: &str, var: VarName) {
        self.classes.entry(label.to_string()).or_default().insert(var);
    }

    /// Classes must be pairwise disjoint and cover exactly `vars`.
    pub fn is_partition_of(&self, vars: &BTreeSet<VarName>) -> bool {
        let mut seen = BTreeSet::new();
        for set in self.classes.values() {
            for v in set {
                if !seen.insert(v.clone()) {
                    return false;
                }
            }
        }
        seen == *vars
    }

    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for (label, set) in &self.classes {
            if set.is_empty() {
                continue;
            }
            let vars: Vec<String> = set.iter().map(|v| v.0.clone()).collect();
            let mut piece = format!("{label}={{{}}}", vars.join(","));
            if let Some(refs) = self.references.get(label) {
                let names: Vec<String> = refs.iter().map(|v| v.0.clone()).collect();
                piece.push_str(&format!("[ref {}]", names.join(",")));
            }
            parts.push(piece);
        }
        parts.join(" ")
    }
}

/// A sequence of quantifiers read left to right, as bound in the ambient
/// sentence.
pub type PrefixPosition = Vec<(Quant, VarName)>;

/// Two disjoint sets `x` and `y` are separated in `f` iff no atom of `f`
/// contains variables from both.
pub fn separated(
    f: &Formula,
    x: &BTreeSet<VarName>,
    y: &BTreeSet<VarName>,
) -> Result<bool, SeparatenessError> {
    if !x.is_disjoint(y) {
        return Err(SeparatenessError::OverlappingSets);
    }
    let mut ok = true;
    f.for_each_atom(&mut |a| {
        if ok {
            let vars = a.atom_vars();
            if !vars.is_disjoint(x) && !vars.is_disjoint(y) {
                ok = false;
            }
        }
    });
    Ok(ok)
}

/// Strict separateness: separated, and in addition every quantified
/// subformula touches at most one of the two sets (counting all variable
/// occurrences, free or bound).
pub fn strictly_separated(
    f: &Formula,
    x: &BTreeSet<VarName>,
    y: &BTreeSet<VarName>,
) -> Result<bool, SeparatenessError> {
    if !separated(f, x, y)? {
        return Ok(false);
    }
    fn scan(f: &Formula, x: &BTreeSet<VarName>, y: &BTreeSet<VarName>) -> bool {
        if matches!(f, Formula::Forall(..) | Formula::Exists(..)) {
            let vars = f.all_vars();
            if !vars.is_disjoint(x) && !vars.is_disjoint(y) {
                return false;
            }
        }
        f.children().iter().all(|c| scan(c, x, y))
    }
    Ok(scan(f, x, y))
}

/// Guard-separateness: separated, and every guard in `guards` touches at
/// most one of the two sets.
pub fn guard_separated(
    f: &Formula,
    guards: &[Formula],
    x: &BTreeSet<VarName>,
    y: &BTreeSet<VarName>,
) -> Result<bool, SeparatenessError> {
    if !separated(f, x, y)? {
        return Ok(false);
    }
    for g in guards {
        let vars = g.all_vars();
        if !vars.is_disjoint(x) && !vars.is_disjoint(y) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Index of a variable in a prenex prefix, in terms of the pair blocks
/// `forall x_i exists y_i`: a leading existential block counts as the first
/// pair with an empty universal part. Variables not occurring in the
/// sentence have index infinity, encoded as `None`.
pub fn var_index(f: &Formula, v: &VarName) -> Result<Option<usize>, SeparatenessError> {
    let idx = block_indices(f)?;
    Ok(idx.get(v).copied())
}

/// Pair-block index for every variable of a prenex sentence's prefix.
pub fn block_indices(f: &Formula) -> Result<BTreeMap<VarName, usize>, SeparatenessError> {
    let prefix = f.prenex_prefix().ok_or(SeparatenessError::NotPrenex)?;
    let mut out = BTreeMap::new();
    let mut idx = 0usize;
    let mut last: Option<Quant> = None;
    for (q, v) in prefix {
        match q {
            Quant::Forall => {
                if last != Some(Quant::Forall) {
                    idx += 1;
                }
            }
            Quant::Exists => {
                if idx == 0 {
                    // leading existential block opens pair 1 with an empty
                    // universal part
                    idx = 1;
                }
            }
        }
        last = Some(q);
        out.insert(v, idx);
    }
    Ok(out)
}

/// The binder sequence (in left-to-right order in `f`) of exactly those
/// quantifiers that bind the free variables of the subformula at `path`.
/// Requires a rectified formula so the binder of each variable is unique.
pub fn phi_prefix(f: &Formula, path: &[usize]) -> Result<PrefixPosition, SeparatenessError> {
    let sub = f.subformula_at(path).ok_or(SeparatenessError::NotASubformula)?;
    let free = sub.free_vars();
    let mut binders: PrefixPosition = Vec::new();
    let mut cur = f;
    for &i in path {
        if let Formula::Forall(vs, _) | Formula::Exists(vs, _) = cur {
            let kind = if matches!(cur, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
            for v in vs {
                binders.push((kind, v.clone()));
            }
        }
        cur = *cur.children().get(i).ok_or(SeparatenessError::NotASubformula)?;
    }
    Ok(binders.into_iter().filter(|(_, v)| free.contains(v)).collect())
}

/// The longest contiguous suffix of `p` starting with a universal
/// quantifier; empty when `p` contains no universal quantifier.
pub fn terminal_prefix(p: &PrefixPosition) -> PrefixPosition {
    match p.iter().position(|(q, _)| *q == Quant::Forall) {
        Some(i) => p[i..].to_vec(),
        None => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;
    use crate::syntax::Vocabulary;

    fn vs(names: &[&str]) -> BTreeSet<VarName> {
        names.iter().map(|s| VarName::new(*s)).collect()
    }

    #[test]
    fn separated_intro_example() {
        let v = Vocabulary::from_parts([("P", 1), ("Q", 1)], []);
        let f = parse_formula("forall x. exists y. (P(x) <-> Q(y))", &v).unwrap();
        assert!(separated(&f, &vs(&["x"]), &vs(&["y"])).unwrap());
    }

    #[test]
    fn separated_co_occurrence() {
        let v = Vocabulary::from_parts([("R", 2)], []);
        let f = parse_formula("forall x. exists y. R(x,y)", &v).unwrap();
        assert!(!separated(&f, &vs(&["x"]), &vs(&["y"])).unwrap());
    }

    #[test]
    fn separated_sbsr_example_mixing() {
        let v = Vocabulary::from_parts([("P", 2), ("Q", 2)], []);
        let f = parse_formula(
            "exists u. forall x. exists y. forall z. (P(u,z) & Q(u,x)) | (P(y,z) & Q(u,y))",
            &v,
        )
        .unwrap();
        // P(u,z) mixes the two candidate sets
        assert!(!separated(&f, &vs(&["x", "z"]), &vs(&["u", "y"])).unwrap());
    }

    #[test]
    fn separated_errors_on_overlap() {
        let v = Vocabulary::from_parts([("P", 1)], []);
        let f = parse_formula("forall x. P(x)", &v).unwrap();
        assert_eq!(
            separated(&f, &vs(&["x"]), &vs(&["x"])),
            Err(SeparatenessError::OverlappingSets)
        );
    }

    #[test]
    fn separated_symmetric_and_monotone() {
        let v = Vocabulary::from_parts([("P", 2), ("Q", 1)], []);
        let f = parse_formula("forall x y. exists z. P(x,y) | Q(z)", &v).unwrap();
        let x = vs(&["x", "y"]);
        let y = vs(&["z"]);
        assert_eq!(
            separated(&f, &x, &y).unwrap(),
            separated(&f, &y, &x).unwrap()
        );
        // shrinking preserves separateness
        assert!(separated(&f, &vs(&["x"]), &y).unwrap());
    }

    #[test]
    fn strict_separateness() {
        let v = Vocabulary::from_parts([("P", 1), ("Q", 1)], []);
        // disjoint scopes: strictly separated
        let f = parse_formula("(exists x. P(x)) & (exists y. Q(y))", &v).unwrap();
        assert!(strictly_separated(&f, &vs(&["x"]), &vs(&["y"])).unwrap());
        // nested scopes: separated but not strictly
        let g = parse_formula("forall x. exists y. (P(x) <-> Q(y))", &v).unwrap();
        assert!(separated(&g, &vs(&["x"]), &vs(&["y"])).unwrap());
        assert!(!strictly_separated(&g, &vs(&["x"]), &vs(&["y"])).unwrap());
        // empty set: vacuous
        assert!(strictly_separated(&g, &vs(&["x"]), &vs(&[])).unwrap());
    }

    #[test]
    fn guard_separated_vacuous_matches_separated() {
        let v = Vocabulary::from_parts([("P", 1), ("Q", 1)], []);
        let f = parse_formula("forall x. exists y. (P(x) <-> Q(y))", &v).unwrap();
        assert_eq!(
            guard_separated(&f, &[], &vs(&["x"]), &vs(&["y"])).unwrap(),
            separated(&f, &vs(&["x"]), &vs(&["y"])).unwrap()
        );
    }

    #[test]
    fn var_index_saf_example() {
        let v = Vocabulary::from_parts([("P", 2), ("Q", 2), ("R", 3)], []);
        let f = parse_formula(
            "exists y. forall x1. exists u1. forall x2. exists u2 u3. \
             (~P(y,x1) | (Q(x1,u1) & R(y,x2,u2))) & (P(y,x1) | (~Q(x1,u1) & ~R(y,x2,u3)))",
            &v,
        )
        .unwrap();
        assert_eq!(var_index(&f, &"y".into()).unwrap(), Some(1));
        assert_eq!(var_index(&f, &"x1".into()).unwrap(), Some(2));
        assert_eq!(var_index(&f, &"u1".into()).unwrap(), Some(2));
        assert_eq!(var_index(&f, &"x2".into()).unwrap(), Some(3));
        assert_eq!(var_index(&f, &"u2".into()).unwrap(), Some(3));
        assert_eq!(var_index(&f, &"u3".into()).unwrap(), Some(3));
        // non-occurring variable: infinity
        assert_eq!(var_index(&f, &"w".into()).unwrap(), None);
    }

    #[test]
    fn var_index_first_block_universal() {
        let v = Vocabulary::from_parts([("P", 1)], []);
        let f = parse_formula("forall x. P(x)", &v).unwrap();
        assert_eq!(var_index(&f, &"x".into()).unwrap(), Some(1));
    }

    #[test]
    fn var_index_respects_prefix_order() {
        let v = Vocabulary::from_parts([("P", 2), ("Q", 2)], []);
        let f = parse_formula("forall x1 x2. exists y1 y2. P(x1,x2) <-> Q(y1,y2)", &v).unwrap();
        let prefix = f.prenex_prefix().unwrap();
        let idx = block_indices(&f).unwrap();
        for i in 0..prefix.len() {
            for j in i + 1..prefix.len() {
                assert!(idx[&prefix[i].1] <= idx[&prefix[j].1]);
            }
        }
    }

    #[test]
    fn phi_prefix_examples() {
        let v = Vocabulary::from_parts([("P", 3)], []);
        // forall x1 x2 x3. P(x1,x2,x3): path to the atom is [0]
        let f = parse_formula("forall x1 x2 x3. P(x1,x2,x3)", &v).unwrap();
        let p = phi_prefix(&f, &[0]).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|(q, _)| *q == Quant::Forall));

        // forall x1 x2 x3. exists y. P(x1,x2,y): binders of the atom are
        // forall x1, forall x2, exists y
        let g = parse_formula("forall x1 x2 x3. exists y. P(x1,x2,y)", &v).unwrap();
        let p = phi_prefix(&g, &[0, 0]).unwrap();
        let names: Vec<String> = p.iter().map(|(_, v)| v.0.clone()).collect();
        assert_eq!(names, ["x1", "x2", "y"]);
        assert_eq!(p[2].0, Quant::Exists);

        // a closed subformula has an empty prefix
        let h = parse_formula("forall x1. P(x1,x1,x1)", &v).unwrap();
        let p = phi_prefix(&h, &[]).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn terminal_prefix_cases() {
        let p: PrefixPosition = vec![
            (Quant::Exists, "y".into()),
            (Quant::Forall, "x".into()),
            (Quant::Exists, "u".into()),
        ];
        let t = terminal_prefix(&p);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0], (Quant::Forall, "x".into()));

        let p2: PrefixPosition = vec![(Quant::Exists, "y1".into()), (Quant::Exists, "y2".into())];
        assert!(terminal_prefix(&p2).is_empty());

        let p3: PrefixPosition = vec![(Quant::Forall, "x".into())];
        assert_eq!(terminal_prefix(&p3), p3);
        // suffix property
        assert_eq!(&p[p.len() - t.len()..], &t[..]);
    }
}
