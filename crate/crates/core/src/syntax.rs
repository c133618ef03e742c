//! Core representation of relational first-order formulas and the basic
//! normal-form machinery: free variables, rectification, negation normal
//! form, prenex normal form, substitution, formula length, and the tetration
//! helper used for bound reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

/// A first-order variable, identified by its name.
///
/// Lexically distinct names denote distinct variables.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarName(pub String);

impl VarName {
    pub fn new(name: impl Into<String>) -> Self {
        let s = name.into();
        debug_assert!(!s.is_empty());
        VarName(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for VarName {
    fn from(s: &str) -> Self {
        VarName::new(s)
    }
}

/// A relational vocabulary: predicate symbols with fixed arities plus
/// constant symbols. Function symbols of arity >= 1 are not representable.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    predicates: BTreeMap<String, usize>,
    constants: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("symbol `{0}` is declared both as predicate and constant")]
    PredicateConstantClash(String),
    #[error("predicate `{0}` redeclared with different arity ({1} vs {2})")]
    ArityClash(String, usize, usize),
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_predicate(&mut self, name: impl Into<String>, arity: usize) -> Result<(), VocabError> {
        let name = name.into();
        if self.constants.contains(&name) {
            return Err(VocabError::PredicateConstantClash(name));
        }
        if let Some(&old) = self.predicates.get(&name) {
            if old != arity {
                return Err(VocabError::ArityClash(name, old, arity));
            }
            return Ok(());
        }
        self.predicates.insert(name, arity);
        Ok(())
    }

    pub fn declare_constant(&mut self, name: impl Into<String>) -> Result<(), VocabError> {
        let name = name.into();
        if self.predicates.contains_key(&name) {
            return Err(VocabError::PredicateConstantClash(name));
        }
        self.constants.insert(name);
        Ok(())
    }

    pub fn predicate_arity(&self, name: &str) -> Option<usize> {
        self.predicates.get(name).copied()
    }

    pub fn is_constant(&self, name: &str) -> bool {
        self.constants.contains(name)
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&str, usize)> {
        self.predicates.iter().map(|(n, &a)| (n.as_str(), a))
    }

    pub fn constants(&self) -> impl Iterator<Item = &str> {
        self.constants.iter().map(|s| s.as_str())
    }

    pub fn num_constants(&self) -> usize {
        self.constants.len()
    }

    /// Convenience constructor from `(name, arity)` pairs and constant names.
    pub fn from_parts<'a>(
        preds: impl IntoIterator<Item = (&'a str, usize)>,
        consts: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut v = Vocabulary::new();
        for (p, a) in preds {
            v.declare_predicate(p, a).expect("conflicting vocabulary");
        }
        for c in consts {
            v.declare_constant(c).expect("conflicting vocabulary");
        }
        v
    }
}

/// A term is a variable or a constant symbol; no compound terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(VarName),
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(VarName::new(name))
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn as_var(&self) -> Option<&VarName> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

/// Quantifier kind.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Quant {
    Forall,
    Exists,
}

impl Quant {
    pub fn dual(self) -> Quant {
        match self {
            Quant::Forall => Quant::Exists,
            Quant::Exists => Quant::Forall,
        }
    }
}

impl fmt::Display for Quant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quant::Forall => write!(f, "forall"),
            Quant::Exists => write!(f, "exists"),
        }
    }
}

/// A maximal run of same-kind quantifiers in a prenex prefix.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct QuantifierBlock {
    pub kind: Quant,
    pub vars: Vec<VarName>,
}

/// Syntax tree of first-order formulas over a relational vocabulary.
///
/// `And`/`Or` are n-ary and kept flattened by the smart constructors.
/// Quantifier nodes carry variable lists (blocks); singleton blocks are the
/// degenerate case.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Formula {
    Atom(String, Vec<Term>),
    Eq(Term, Term),
    True,
    False,
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Forall(Vec<VarName>, Box<Formula>),
    Exists(Vec<VarName>, Box<Formula>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SyntaxOpError {
    #[error("formula is not rectified")]
    NotRectified,
    #[error("formula is not in prenex form")]
    NotPrenex,
    #[error("substitution would capture variable `{0}`")]
    CaptureRisk(String),
    #[error("tetration result exceeds the configured magnitude cap ({0} bits)")]
    Overflow(u64),
}

pub use Formula::{False, True};

/// Smart constructor: n-ary conjunction, flattened; empty list is `True`.
pub fn and(mut parts: Vec<Formula>) -> Formula {
    let mut flat = Vec::with_capacity(parts.len());
    for p in parts.drain(..) {
        match p {
            Formula::And(inner) => flat.extend(inner),
            other => flat.push(other),
        }
    }
    match flat.len() {
        0 => Formula::True,
        1 => flat.pop().unwrap(),
        _ => Formula::And(flat),
    }
}

/// Smart constructor: n-ary disjunction, flattened; empty list is `False`.
pub fn or(mut parts: Vec<Formula>) -> Formula {
    let mut flat = Vec::with_capacity(parts.len());
    for p in parts.drain(..) {
        match p {
            Formula::Or(inner) => flat.extend(inner),
            other => flat.push(other),
        }
    }
    match flat.len() {
        0 => Formula::False,
        1 => flat.pop().unwrap(),
        _ => Formula::Or(flat),
    }
}

pub fn not(f: Formula) -> Formula {
    Formula::Not(Box::new(f))
}

pub fn implies(lhs: Formula, rhs: Formula) -> Formula {
    Formula::Implies(Box::new(lhs), Box::new(rhs))
}

pub fn iff(lhs: Formula, rhs: Formula) -> Formula {
    Formula::Iff(Box::new(lhs), Box::new(rhs))
}

/// Universal quantification over a block; an empty block is dropped.
pub fn forall(vars: Vec<VarName>, body: Formula) -> Formula {
    if vars.is_empty() {
        body
    } else {
        Formula::Forall(vars, Box::new(body))
    }
}

/// Existential quantification over a block; an empty block is dropped.
pub fn exists(vars: Vec<VarName>, body: Formula) -> Formula {
    if vars.is_empty() {
        body
    } else {
        Formula::Exists(vars, Box::new(body))
    }
}

pub fn atom(pred: impl Into<String>, args: Vec<Term>) -> Formula {
    Formula::Atom(pred.into(), args)
}

pub fn eq(lhs: Term, rhs: Term) -> Formula {
    Formula::Eq(lhs, rhs)
}

impl Formula {
    /// Immediate subformulas, in child order.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::Atom(..) | Formula::Eq(..) | Formula::True | Formula::False => vec![],
            Formula::Not(f) => vec![f],
            Formula::And(fs) | Formula::Or(fs) => fs.iter().collect(),
            Formula::Implies(a, b) | Formula::Iff(a, b) => vec![a, b],
            Formula::Forall(_, f) | Formula::Exists(_, f) => vec![f],
        }
    }

    /// The subformula at a path of child indices from the root.
    pub fn subformula_at(&self, path: &[usize]) -> Option<&Formula> {
        let mut cur = self;
        for &i in path {
            cur = *cur.children().get(i)?;
        }
        Some(cur)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Formula::Atom(..) | Formula::Eq(..))
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::Forall(..) | Formula::Exists(..) => false,
            _ => self.children().iter().all(|c| c.is_quantifier_free()),
        }
    }

    /// Calls `f` on every atom (relational or equational) in the formula.
    pub fn for_each_atom<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        match self {
            Formula::Atom(..) | Formula::Eq(..) => f(self),
            _ => {
                for c in self.children() {
                    c.for_each_atom(f);
                }
            }
        }
    }

    /// All atoms of the formula, in syntactic order, duplicates included.
    pub fn atoms(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        self.for_each_atom(&mut |a| out.push(a));
        out
    }

    /// Variables of one atom.
    pub fn atom_vars(&self) -> BTreeSet<VarName> {
        let mut out = BTreeSet::new();
        match self {
            Formula::Atom(_, args) => {
                for t in args {
                    if let Term::Var(v) = t {
                        out.insert(v.clone());
                    }
                }
            }
            Formula::Eq(a, b) => {
                for t in [a, b] {
                    if let Term::Var(v) = t {
                        out.insert(v.clone());
                    }
                }
            }
            _ => panic!("atom_vars on non-atom"),
        }
        out
    }

    /// Set of variables with a free occurrence.
    pub fn free_vars(&self) -> BTreeSet<VarName> {
        fn go(f: &Formula, bound: &mut BTreeMap<VarName, usize>, out: &mut BTreeSet<VarName>) {
            let check = |t: &Term, bound: &BTreeMap<VarName, usize>, out: &mut BTreeSet<VarName>| {
                if let Term::Var(v) = t {
                    if bound.get(v).copied().unwrap_or(0) == 0 {
                        out.insert(v.clone());
                    }
                }
            };
            match f {
                Formula::Atom(_, args) => {
                    for t in args {
                        check(t, bound, out);
                    }
                }
                Formula::Eq(a, b) => {
                    check(a, bound, out);
                    check(b, bound, out);
                }
                Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                    for v in vs {
                        *bound.entry(v.clone()).or_insert(0) += 1;
                    }
                    go(body, bound, out);
                    for v in vs {
                        *bound.get_mut(v).unwrap() -= 1;
                    }
                }
                _ => {
                    for c in f.children() {
                        go(c, bound, out);
                    }
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut BTreeMap::new(), &mut out);
        out
    }

    /// All variables occurring freely or bound.
    pub fn all_vars(&self) -> BTreeSet<VarName> {
        let mut out = BTreeSet::new();
        fn go(f: &Formula, out: &mut BTreeSet<VarName>) {
            match f {
                Formula::Atom(_, args) => {
                    for t in args {
                        if let Term::Var(v) = t {
                            out.insert(v.clone());
                        }
                    }
                }
                Formula::Eq(a, b) => {
                    for t in [a, b] {
                        if let Term::Var(v) = t {
                            out.insert(v.clone());
                        }
                    }
                }
                Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                    out.extend(vs.iter().cloned());
                    go(body, out);
                }
                _ => {
                    for c in f.children() {
                        go(c, out);
                    }
                }
            }
        }
        go(self, &mut out);
        out
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// True iff no variable is bound by two distinct quantifier occurrences
    /// and no variable occurs both free and bound.
    pub fn is_rectified(&self) -> bool {
        fn collect_binders(f: &Formula, seen: &mut BTreeSet<VarName>) -> bool {
            match f {
                Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                    for v in vs {
                        if !seen.insert(v.clone()) {
                            return false;
                        }
                    }
                    collect_binders(body, seen)
                }
                _ => f.children().iter().all(|c| collect_binders(c, seen)),
            }
        }
        let mut binders = BTreeSet::new();
        if !collect_binders(self, &mut binders) {
            return false;
        }
        self.free_vars().is_disjoint(&binders)
    }

    /// True iff every negation sign stands directly on an atom and the only
    /// connectives are conjunction, disjunction, and quantifiers.
    pub fn is_nnf(&self) -> bool {
        match self {
            Formula::Atom(..) | Formula::Eq(..) | Formula::True | Formula::False => true,
            Formula::Not(inner) => inner.is_atomic(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().all(|f| f.is_nnf()),
            Formula::Implies(..) | Formula::Iff(..) => false,
            Formula::Forall(_, f) | Formula::Exists(_, f) => f.is_nnf(),
        }
    }

    /// True iff the formula is a quantifier prefix followed by a
    /// quantifier-free matrix.
    pub fn is_prenex(&self) -> bool {
        let mut cur = self;
        loop {
            match cur {
                Formula::Forall(_, body) | Formula::Exists(_, body) => cur = body,
                _ => return cur.is_quantifier_free(),
            }
        }
    }

    /// Splits a prenex formula into maximal alternating quantifier blocks and
    /// the matrix. Adjacent same-kind blocks are merged.
    pub fn prenex_split(&self) -> Option<(Vec<QuantifierBlock>, &Formula)> {
        let mut blocks: Vec<QuantifierBlock> = Vec::new();
        let mut cur = self;
        loop {
            let (kind, vars, body) = match cur {
                Formula::Forall(vs, body) => (Quant::Forall, vs, body),
                Formula::Exists(vs, body) => (Quant::Exists, vs, body),
                _ => break,
            };
            match blocks.last_mut() {
                Some(b) if b.kind == kind => b.vars.extend(vars.iter().cloned()),
                _ => blocks.push(QuantifierBlock { kind, vars: vars.clone() }),
            }
            cur = body;
        }
        if cur.is_quantifier_free() {
            Some((blocks, cur))
        } else {
            None
        }
    }

    /// Flat list of (kind, variable) pairs of the prenex prefix.
    pub fn prenex_prefix(&self) -> Option<Vec<(Quant, VarName)>> {
        let (blocks, _) = self.prenex_split()?;
        Some(
            blocks
                .into_iter()
                .flat_map(|b| b.vars.into_iter().map(move |v| (b.kind, v)))
                .collect(),
        )
    }

    /// Checks predicate arities and constant declarations against `vocab`.
    pub fn well_formed(&self, vocab: &Vocabulary) -> bool {
        let term_ok = |t: &Term| match t {
            Term::Var(_) => true,
            Term::Const(c) => vocab.is_constant(c),
        };
        match self {
            Formula::Atom(p, args) => {
                vocab.predicate_arity(p) == Some(args.len()) && args.iter().all(term_ok)
            }
            Formula::Eq(a, b) => term_ok(a) && term_ok(b),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                !vs.is_empty()
                    && vs.iter().collect::<BTreeSet<_>>().len() == vs.len()
                    && body.well_formed(vocab)
            }
            _ => self.children().iter().all(|c| c.well_formed(vocab)),
        }
    }

    /// True iff the formula contains an equality atom.
    pub fn contains_equality(&self) -> bool {
        match self {
            Formula::Eq(..) => true,
            _ => self.children().iter().any(|c| c.contains_equality()),
        }
    }

    /// True iff the formula mentions a constant symbol.
    pub fn contains_constant(&self) -> bool {
        let terms_have_const = |args: &[Term]| args.iter().any(|t| matches!(t, Term::Const(_)));
        match self {
            Formula::Atom(_, args) => terms_have_const(args),
            Formula::Eq(a, b) => matches!(a, Term::Const(_)) || matches!(b, Term::Const(_)),
            _ => self.children().iter().any(|c| c.contains_constant()),
        }
    }

    /// Predicate symbols used in the formula, with arities.
    pub fn used_predicates(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        self.for_each_atom(&mut |a| {
            if let Formula::Atom(p, args) = a {
                out.insert(p.clone(), args.len());
            }
        });
        out
    }

    /// Constant symbols used in the formula.
    pub fn used_constants(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            let mut push = |t: &Term| {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            };
            match a {
                Formula::Atom(_, args) => args.iter().for_each(&mut push),
                Formula::Eq(l, r) => {
                    push(l);
                    push(r);
                }
                _ => {}
            }
        });
        out
    }

    /// The minimal vocabulary covering the formula's symbols.
    pub fn inferred_vocabulary(&self) -> Vocabulary {
        let mut v = Vocabulary::new();
        for (p, a) in self.used_predicates() {
            v.declare_predicate(p, a).expect("conflicting predicate use");
        }
        for c in self.used_constants() {
            v.declare_constant(c).expect("conflicting constant use");
        }
        v
    }
}

/// Standard formula length: one unit per predicate/equality/constant/variable
/// occurrence, per connective occurrence, and per quantifier occurrence.
/// `Implies` and `Iff` are counted through their expansions, so that
/// `len(a -> b) = len(~a | b)` and `len(a <-> b) = len((a -> b) & (b -> a))`.
pub fn formula_len(f: &Formula) -> u64 {
    match f {
        Formula::Atom(_, args) => 1 + args.len() as u64,
        Formula::Eq(..) => 3,
        Formula::True | Formula::False => 1,
        Formula::Not(g) => 1 + formula_len(g),
        Formula::And(fs) | Formula::Or(fs) => {
            (fs.len() as u64 - 1) + fs.iter().map(formula_len).sum::<u64>()
        }
        Formula::Implies(a, b) => 2 + formula_len(a) + formula_len(b),
        Formula::Iff(a, b) => 5 + 2 * formula_len(a) + 2 * formula_len(b),
        Formula::Forall(vs, g) | Formula::Exists(vs, g) => vs.len() as u64 + formula_len(g),
    }
}

/// Tetration: `twoup(0, m) = m`, `twoup(k+1, m) = 2^twoup(k, m)`.
/// Fails with `Overflow` once an intermediate result would exceed `cap_bits`
/// bits.
pub fn twoup(k: u32, m: u64, cap_bits: u64) -> Result<BigUint, SyntaxOpError> {
    let mut acc = BigUint::from(m);
    for _ in 0..k {
        // The next value is 2^acc, which needs acc+1 bits.
        let bits_needed = &acc + 1u32;
        if bits_needed > BigUint::from(cap_bits) {
            return Err(SyntaxOpError::Overflow(cap_bits));
        }
        let shift = u64::try_from(&acc).map_err(|_| SyntaxOpError::Overflow(cap_bits))?;
        acc = BigUint::one() << shift;
    }
    Ok(acc)
}

/// Default magnitude cap for [`twoup`]: one million bits.
pub const TWOUP_DEFAULT_CAP_BITS: u64 = 1_000_000;

// ---------------------------------------------------------------------------
// Rectification
// ---------------------------------------------------------------------------

/// Picks the smallest unused decimal suffix for `base`.
fn fresh_name(base: &str, used: &BTreeSet<String>) -> String {
    if !used.contains(base) {
        return base.to_string();
    }
    for i in 1u64.. {
        let cand = format!("{base}{i}");
        if !used.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}

/// Generates a variable name based on `base` that is fresh with respect to
/// `used`, records it as used, and returns it.
pub fn gen_fresh(base: &str, used: &mut BTreeSet<String>) -> VarName {
    let name = fresh_name(base, used);
    used.insert(name.clone());
    VarName(name)
}

/// Renames bound variables so that distinct quantifier occurrences bind
/// distinct variables and no variable occurs both free and bound. Quantifiers
/// binding variables without any occurrence in their scope are dropped.
/// Fresh names are formed deterministically from the original name plus the
/// smallest unused decimal suffix.
pub fn rectify(f: &Formula) -> Formula {
    let mut used: BTreeSet<String> = f.free_vars().into_iter().map(|v| v.0).collect();
    fn go(f: &Formula, map: &mut BTreeMap<VarName, VarName>, used: &mut BTreeSet<String>) -> Formula {
        match f {
            Formula::Atom(p, args) => Formula::Atom(p.clone(), rename_terms(args, map)),
            Formula::Eq(a, b) => Formula::Eq(rename_term(a, map), rename_term(b, map)),
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Not(g) => not(go(g, map, used)),
            Formula::And(fs) => and(fs.iter().map(|g| go(g, map, used)).collect()),
            Formula::Or(fs) => or(fs.iter().map(|g| go(g, map, used)).collect()),
            Formula::Implies(a, b) => implies(go(a, map, used), go(b, map, used)),
            Formula::Iff(a, b) => iff(go(a, map, used), go(b, map, used)),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                let is_forall = matches!(f, Formula::Forall(..));
                let body_free = body.free_vars();
                let mut new_vars = Vec::new();
                let mut saved = Vec::new();
                for v in vs {
                    if !body_free.contains(v) {
                        // vacuous binder: drop, but shadow any outer mapping
                        saved.push((v.clone(), map.remove(v)));
                        continue;
                    }
                    let fresh = gen_fresh(&v.0, used);
                    saved.push((v.clone(), map.insert(v.clone(), fresh.clone())));
                    new_vars.push(fresh);
                }
                let new_body = go(body, map, used);
                for (v, old) in saved.into_iter().rev() {
                    match old {
                        Some(o) => {
                            map.insert(v, o);
                        }
                        None => {
                            map.remove(&v);
                        }
                    }
                }
                if is_forall {
                    forall(new_vars, new_body)
                } else {
                    exists(new_vars, new_body)
                }
            }
        }
    }
    fn rename_term(t: &Term, map: &BTreeMap<VarName, VarName>) -> Term {
        match t {
            Term::Var(v) => Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
            Term::Const(c) => Term::Const(c.clone()),
        }
    }
    fn rename_terms(ts: &[Term], map: &BTreeMap<VarName, VarName>) -> Vec<Term> {
        ts.iter().map(|t| rename_term(t, map)).collect()
    }
    go(f, &mut BTreeMap::new(), &mut used)
}

// ---------------------------------------------------------------------------
// Negation normal form
// ---------------------------------------------------------------------------

/// Converts to negation normal form: implications and equivalences are
/// expanded (`a -> b` as `~a | b`, `a <-> b` as `(a -> b) & (b -> a)`), and
/// negation is pushed down to atoms.
pub fn to_nnf(f: &Formula) -> Formula {
    fn go(f: &Formula, positive: bool) -> Formula {
        match f {
            Formula::Atom(..) | Formula::Eq(..) => {
                if positive {
                    f.clone()
                } else {
                    not(f.clone())
                }
            }
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
            Formula::Not(g) => go(g, !positive),
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
                // a -> b  ==  ~a | b
                if positive {
                    or(vec![go(a, false), go(b, true)])
                } else {
                    and(vec![go(a, true), go(b, false)])
                }
            }
            Formula::Iff(a, b) => {
                // a <-> b  ==  (~a | b) & (~b | a)
                let expanded = and(vec![
                    or(vec![not((**a).clone()), (**b).clone()]),
                    or(vec![not((**b).clone()), (**a).clone()]),
                ]);
                go(&expanded, positive)
            }
            Formula::Forall(vs, body) => {
                if positive {
                    forall(vs.clone(), go(body, true))
                } else {
                    exists(vs.clone(), go(body, false))
                }
            }
            Formula::Exists(vs, body) => {
                if positive {
                    exists(vs.clone(), go(body, true))
                } else {
                    forall(vs.clone(), go(body, false))
                }
            }
        }
    }
    go(f, true)
}

// ---------------------------------------------------------------------------
// Prenex normal form
// ---------------------------------------------------------------------------

/// Converts a rectified formula into prenex normal form. Quantifiers are
/// pulled left-to-right, outside-in, existentials before universals at the
/// same syntactic level. Equivalences containing quantifiers are expanded
/// first (with deterministic renaming of the duplicated binders).
pub fn to_prenex(f: &Formula) -> Result<Formula, SyntaxOpError> {
    if !f.is_rectified() {
        return Err(SyntaxOpError::NotRectified);
    }
    if f.is_prenex() {
        return Ok(f.clone());
    }
    let expanded = expand_quantified_iffs(f);
    let expanded = rectify(&expanded);
    let (prefix, matrix) = pull(&expanded, true);
    Ok(rebuild_prefix(&prefix, matrix))
}

pub(crate) fn rebuild_prefix(prefix: &[(Quant, VarName)], matrix: Formula) -> Formula {
    let mut out = matrix;
    for (q, v) in prefix.iter().rev() {
        out = match q {
            Quant::Forall => forall(vec![v.clone()], out),
            Quant::Exists => exists(vec![v.clone()], out),
        };
    }
    out
}

fn expand_quantified_iffs(f: &Formula) -> Formula {
    match f {
        Formula::Iff(a, b) if !f.is_quantifier_free() => {
            let a2 = expand_quantified_iffs(a);
            let b2 = expand_quantified_iffs(b);
            and(vec![
                implies(a2.clone(), b2.clone()),
                implies(b2, a2),
            ])
        }
        Formula::Not(g) => not(expand_quantified_iffs(g)),
        Formula::And(fs) => and(fs.iter().map(expand_quantified_iffs).collect()),
        Formula::Or(fs) => or(fs.iter().map(expand_quantified_iffs).collect()),
        Formula::Implies(a, b) => implies(expand_quantified_iffs(a), expand_quantified_iffs(b)),
        Formula::Iff(a, b) => iff(expand_quantified_iffs(a), expand_quantified_iffs(b)),
        Formula::Forall(vs, body) => forall(vs.clone(), expand_quantified_iffs(body)),
        Formula::Exists(vs, body) => exists(vs.clone(), expand_quantified_iffs(body)),
        _ => f.clone(),
    }
}

/// Returns the prefix (in order) and the quantifier-free matrix of `f`,
/// negating quantifiers as dictated by `positive`. Assumes no `Iff` contains
/// quantifiers.
fn pull(f: &Formula, positive: bool) -> (Vec<(Quant, VarName)>, Formula) {
    match f {
        Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
            let base_kind = if matches!(f, Formula::Forall(..)) {
                Quant::Forall
            } else {
                Quant::Exists
            };
            let kind = if positive { base_kind } else { base_kind.dual() };
            let (mut prefix, matrix) = pull(body, positive);
            let mut full: Vec<(Quant, VarName)> =
                vs.iter().map(|v| (kind, v.clone())).collect();
            full.append(&mut prefix);
            (full, matrix)
        }
        Formula::Not(g) => {
            let (prefix, matrix) = pull(g, !positive);
            (prefix, not(matrix))
        }
        Formula::And(fs) | Formula::Or(fs) => {
            let is_and = matches!(f, Formula::And(..));
            let parts: Vec<(Vec<(Quant, VarName)>, Formula)> =
                fs.iter().map(|g| pull(g, positive)).collect();
            let (prefix, matrices) = interleave_exists_first(parts);
            (
                prefix,
                if is_and { and(matrices) } else { or(matrices) },
            )
        }
        Formula::Implies(a, b) => {
            let (pa, ma) = pull(a, !positive);
            let (pb, mb) = pull(b, positive);
            let (prefix, ms) = interleave_exists_first(vec![(pa, ma), (pb, mb)]);
            let mut it = ms.into_iter();
            let (ma, mb) = (it.next().unwrap(), it.next().unwrap());
            let matrix = if positive {
                // matrix-level implication; the antecedent was pulled with
                // flipped polarity already, so keep the connective
                implies(ma, mb)
            } else {
                implies(ma, mb)
            };
            (prefix, matrix)
        }
        Formula::Iff(a, b) => {
            debug_assert!(f.is_quantifier_free());
            (
                Vec::new(),
                if positive {
                    iff((**a).clone(), (**b).clone())
                } else {
                    not(iff((**a).clone(), (**b).clone()))
                },
            )
        }
        _ => (
            Vec::new(),
            if positive { f.clone() } else { not(f.clone()) },
        ),
    }
}

/// Merges per-child prefixes: repeatedly take the leading existential block
/// of the leftmost child that has one; once no child starts with an
/// existential, take leading universals, and so on alternately.
fn interleave_exists_first(
    parts: Vec<(Vec<(Quant, VarName)>, Formula)>,
) -> (Vec<(Quant, VarName)>, Vec<Formula>) {
    let mut queues: Vec<std::collections::VecDeque<(Quant, VarName)>> = parts
        .iter()
        .map(|(p, _)| p.iter().cloned().collect())
        .collect();
    let matrices: Vec<Formula> = parts.into_iter().map(|(_, m)| m).collect();
    let mut prefix = Vec::new();
    loop {
        let mut progressed = false;
        // existential runs first, leftmost child first
        for q in queues.iter_mut() {
            while matches!(q.front(), Some((Quant::Exists, _))) {
                prefix.push(q.pop_front().unwrap());
                progressed = true;
            }
        }
        // then one universal run per child
        for q in queues.iter_mut() {
            while matches!(q.front(), Some((Quant::Forall, _))) {
                // stop this child's run if an existential follows: it will be
                // picked up on the next round, after other children's
                // universals
                prefix.push(q.pop_front().unwrap());
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    debug_assert!(queues.iter().all(|q| q.is_empty()));
    (prefix, matrices)
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

/// Simultaneous capture-avoiding substitution of terms for free variables.
/// If a binder would capture a substituted term and `auto_rename` is false,
/// `CaptureRisk` is reported; with `auto_rename` the binder is renamed
/// deterministically.
pub fn substitute(
    f: &Formula,
    subst: &BTreeMap<VarName, Term>,
    auto_rename: bool,
) -> Result<Formula, SyntaxOpError> {
    let mut used: BTreeSet<String> = f.all_vars().into_iter().map(|v| v.0).collect();
    for t in subst.values() {
        if let Term::Var(v) = t {
            used.insert(v.0.clone());
        }
    }
    fn apply_term(t: &Term, subst: &BTreeMap<VarName, Term>) -> Term {
        match t {
            Term::Var(v) => subst.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::Const(_) => t.clone(),
        }
    }
    fn go(
        f: &Formula,
        subst: &BTreeMap<VarName, Term>,
        used: &mut BTreeSet<String>,
        auto_rename: bool,
    ) -> Result<Formula, SyntaxOpError> {
        Ok(match f {
            Formula::Atom(p, args) => {
                Formula::Atom(p.clone(), args.iter().map(|t| apply_term(t, subst)).collect())
            }
            Formula::Eq(a, b) => Formula::Eq(apply_term(a, subst), apply_term(b, subst)),
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Not(g) => not(go(g, subst, used, auto_rename)?),
            Formula::And(fs) => and(fs
                .iter()
                .map(|g| go(g, subst, used, auto_rename))
                .collect::<Result<_, _>>()?),
            Formula::Or(fs) => or(fs
                .iter()
                .map(|g| go(g, subst, used, auto_rename))
                .collect::<Result<_, _>>()?),
            Formula::Implies(a, b) => implies(
                go(a, subst, used, auto_rename)?,
                go(b, subst, used, auto_rename)?,
            ),
            Formula::Iff(a, b) => iff(
                go(a, subst, used, auto_rename)?,
                go(b, subst, used, auto_rename)?,
            ),
            Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
                let is_forall = matches!(f, Formula::Forall(..));
                // restrict the substitution to variables actually free below
                let mut inner: BTreeMap<VarName, Term> = subst
                    .iter()
                    .filter(|(v, _)| !vs.contains(v))
                    .map(|(v, t)| (v.clone(), t.clone()))
                    .collect();
                let body_free = body.free_vars();
                inner.retain(|v, _| body_free.contains(v));
                // capture check: a binder variable appearing in a substituted term
                let mut new_vars = vs.clone();
                for (i, bv) in vs.iter().enumerate() {
                    let captured = inner
                        .values()
                        .any(|t| matches!(t, Term::Var(w) if w == bv));
                    if captured {
                        if !auto_rename {
                            return Err(SyntaxOpError::CaptureRisk(bv.0.clone()));
                        }
                        let fresh = gen_fresh(&bv.0, used);
                        inner.insert(bv.clone(), Term::Var(fresh.clone()));
                        new_vars[i] = fresh;
                    }
                }
                let new_body = go(body, &inner, used, auto_rename)?;
                if is_forall {
                    forall(new_vars, new_body)
                } else {
                    exists(new_vars, new_body)
                }
            }
        })
    }
    go(f, subst, &mut used, auto_rename)
}

/// Renames exactly one free variable to a term (convenience over
/// [`substitute`]).
pub fn substitute_one(
    f: &Formula,
    var: &VarName,
    term: Term,
    auto_rename: bool,
) -> Result<Formula, SyntaxOpError> {
    let mut m = BTreeMap::new();
    m.insert(var.clone(), term);
    substitute(f, &m, auto_rename)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> VarName {
        VarName::new(s)
    }
    fn tv(s: &str) -> Term {
        Term::var(s)
    }

    fn px(x: &str) -> Formula {
        atom("P", vec![tv(x)])
    }
    fn qx(x: &str) -> Formula {
        atom("Q", vec![tv(x)])
    }

    #[test]
    fn free_vars_sentence() {
        // forall x exists y. P(x) <-> Q(y)   has no free variables
        let f = forall(vec![v("x")], exists(vec![v("y")], iff(px("x"), qx("y"))));
        assert!(f.free_vars().is_empty());
        assert!(f.is_sentence());
    }

    #[test]
    fn free_vars_open() {
        // P(x) & exists y. Q(y)  ->  {x}
        let f = and(vec![px("x"), exists(vec![v("y")], qx("y"))]);
        assert_eq!(f.free_vars(), [v("x")].into_iter().collect());
    }

    #[test]
    fn free_vars_equality() {
        // exists y. x = y  ->  {x}
        let f = exists(vec![v("y")], eq(tv("x"), tv("y")));
        assert_eq!(f.free_vars(), [v("x")].into_iter().collect());
    }

    #[test]
    fn rectify_forced_renaming() {
        // forall x. P(x) & forall x. Q(x)  ->  forall x. P(x) & forall x1. Q(x1)
        let f = and(vec![
            forall(vec![v("x")], px("x")),
            forall(vec![v("x")], qx("x")),
        ]);
        let r = rectify(&f);
        let expected = and(vec![
            forall(vec![v("x")], px("x")),
            forall(vec![v("x1")], qx("x1")),
        ]);
        assert_eq!(r, expected);
    }

    #[test]
    fn rectify_idempotent() {
        let f = and(vec![
            forall(vec![v("x")], px("x")),
            forall(vec![v("x")], qx("x")),
        ]);
        let once = rectify(&f);
        let twice = rectify(&once);
        assert_eq!(once, twice);
        assert!(once.is_rectified());
    }

    #[test]
    fn rectify_drops_vacuous() {
        let f = forall(vec![v("x"), v("z")], px("x"));
        let r = rectify(&f);
        assert_eq!(r, forall(vec![v("x")], px("x")));
    }

    #[test]
    fn nnf_duality() {
        // ~forall x. P(x)  ->  exists x. ~P(x)
        let f = not(forall(vec![v("x")], px("x")));
        let n = to_nnf(&f);
        assert_eq!(n, exists(vec![v("x")], not(px("x"))));
        assert!(n.is_nnf());
    }

    #[test]
    fn nnf_iff_expansion() {
        // P(x) <-> Q(y)  ->  (~P(x) | Q(y)) & (~Q(y) | P(x))
        let f = iff(px("x"), qx("y"));
        let n = to_nnf(&f);
        let expected = and(vec![
            or(vec![not(px("x")), qx("y")]),
            or(vec![not(qx("y")), px("x")]),
        ]);
        assert_eq!(n, expected);
    }

    #[test]
    fn prenex_disjoint_scopes() {
        // (exists x. P(x)) & (forall y. Q(y))  ->  exists x forall y. P(x) & Q(y)
        let f = and(vec![
            exists(vec![v("x")], px("x")),
            forall(vec![v("y")], qx("y")),
        ]);
        let p = to_prenex(&f).unwrap();
        let expected = exists(
            vec![v("x")],
            forall(vec![v("y")], and(vec![px("x"), qx("y")])),
        );
        assert_eq!(p, expected);
    }

    #[test]
    fn prenex_idempotent_on_prenex() {
        let f = exists(vec![v("x")], forall(vec![v("y")], and(vec![px("x"), qx("y")])));
        assert_eq!(to_prenex(&f).unwrap(), f);
    }

    #[test]
    fn prenex_requires_rectified() {
        let f = and(vec![
            forall(vec![v("x")], px("x")),
            forall(vec![v("x")], qx("x")),
        ]);
        assert_eq!(to_prenex(&f), Err(SyntaxOpError::NotRectified));
    }

    #[test]
    fn prenex_shape() {
        let f = or(vec![
            forall(vec![v("x")], px("x")),
            exists(vec![v("y")], qx("y")),
        ]);
        let p = to_prenex(&f).unwrap();
        assert!(p.is_prenex());
        let prefix = p.prenex_prefix().unwrap();
        // existential first
        assert_eq!(prefix[0].0, Quant::Exists);
        assert_eq!(prefix[1].0, Quant::Forall);
    }

    #[test]
    fn substitute_simple() {
        let mut m = BTreeMap::new();
        m.insert(v("x"), Term::constant("c"));
        let f = px("x");
        assert_eq!(
            substitute(&f, &m, false).unwrap(),
            atom("P", vec![Term::constant("c")])
        );
    }

    #[test]
    fn substitute_under_binder() {
        // (exists y. P(x,y))[x -> c]  ->  exists y. P(c,y)
        let f = exists(vec![v("y")], atom("P", vec![tv("x"), tv("y")]));
        let g = substitute_one(&f, &v("x"), Term::constant("c"), false).unwrap();
        assert_eq!(
            g,
            exists(vec![v("y")], atom("P", vec![Term::constant("c"), tv("y")]))
        );
    }

    #[test]
    fn substitute_capture() {
        // (exists y. P(x,y))[x -> y] must rename: exists y1. P(y,y1)
        let f = exists(vec![v("y")], atom("P", vec![tv("x"), tv("y")]));
        assert_eq!(
            substitute_one(&f, &v("x"), tv("y"), false),
            Err(SyntaxOpError::CaptureRisk("y".into()))
        );
        let g = substitute_one(&f, &v("x"), tv("y"), true).unwrap();
        assert_eq!(
            g,
            exists(vec![v("y1")], atom("P", vec![tv("y"), tv("y1")]))
        );
    }

    #[test]
    fn len_basics() {
        assert_eq!(formula_len(&Formula::True), 1);
        assert_eq!(formula_len(&px("x")), 2);
        assert_eq!(formula_len(&eq(tv("x"), tv("y"))), 3);
        // forall x y. P(x)  ==  2 quantifiers + 2
        assert_eq!(formula_len(&forall(vec![v("x"), v("y")], px("x"))), 4);
    }

    #[test]
    fn len_connective_identities() {
        let a = px("x");
        let b = qx("y");
        assert_eq!(
            formula_len(&implies(a.clone(), b.clone())),
            formula_len(&or(vec![not(a.clone()), b.clone()]))
        );
        assert_eq!(
            formula_len(&iff(a.clone(), b.clone())),
            formula_len(&and(vec![
                implies(a.clone(), b.clone()),
                implies(b.clone(), a.clone())
            ]))
        );
    }

    #[test]
    fn twoup_values() {
        assert_eq!(twoup(0, 5, 1000).unwrap(), BigUint::from(5u32));
        assert_eq!(twoup(2, 2, 1000).unwrap(), BigUint::from(16u32));
        assert_eq!(twoup(3, 1, 1000).unwrap(), BigUint::from(16u32));
        assert_eq!(twoup(1, 10, 1000).unwrap(), BigUint::from(1024u32));
        assert!(matches!(twoup(4, 4, 1000), Err(SyntaxOpError::Overflow(_))));
    }

    #[test]
    fn prenex_blocks_maximal() {
        let f = forall(
            vec![v("x")],
            forall(vec![v("y")], exists(vec![v("z")], px("x"))),
        );
        let (blocks, _) = f.prenex_split().unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].vars.len(), 2);
    }
}
