//! Finite-structure evaluation, brute-force structure enumeration, the
//! bounded equivalence oracle, and satisfiability decision via small-model
//! bounds.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::syntax::{Formula, Quant, Term, VarName, Vocabulary};

/// A finite structure: domain `0..size`, one tuple set per predicate, and a
/// constant map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteStructure {
    size: usize,
    relations: BTreeMap<String, BTreeSet<Vec<usize>>>,
    constants: BTreeMap<String, usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("variable `{0}` is unbound in the assignment")]
    UnboundVariable(String),
    #[error("symbol `{0}` is not interpreted by the structure")]
    VocabularyMismatch(String),
    #[error("constant `{0}` is interpreted outside the restriction set")]
    ConstantOutsideS(String),
    #[error("the restriction set is empty")]
    EmptyS,
    #[error("sentence is not in BSR")]
    NotBsr,
    #[error("translation budget exceeded: {0}")]
    BudgetExceeded(String),
}

impl FiniteStructure {
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "domains are nonempty");
        FiniteStructure { size, relations: BTreeMap::new(), constants: BTreeMap::new() }
    }

    pub fn domain_size(&self) -> usize {
        self.size
    }

    pub fn ensure_relation(&mut self, pred: &str) {
        self.relations.entry(pred.to_string()).or_default();
    }

    pub fn insert_tuple(&mut self, pred: &str, tuple: Vec<usize>) {
        debug_assert!(tuple.iter().all(|&e| e < self.size));
        self.relations.entry(pred.to_string()).or_default().insert(tuple);
    }

    pub fn relation(&self, pred: &str) -> Option<&BTreeSet<Vec<usize>>> {
        self.relations.get(pred)
    }

    pub fn set_constant(&mut self, name: &str, element: usize) {
        debug_assert!(element < self.size);
        self.constants.insert(name.to_string(), element);
    }

    pub fn constant(&self, name: &str) -> Option<usize> {
        self.constants.get(name).copied()
    }

    pub fn holds(&self, pred: &str, tuple: &[usize]) -> bool {
        self.relations.get(pred).is_some_and(|r| r.contains(tuple))
    }
}

/// Variable assignment over a structure's domain.
pub type Assignment = BTreeMap<VarName, usize>;

/// Tarskian truth evaluation of `f` in `st` under `assignment`. Quantifiers
/// range over the full domain. Predicates that the structure does not
/// interpret and unmapped constants are vocabulary mismatches; variables not
/// covered by the assignment are unbound.
pub fn evaluate(
    st: &FiniteStructure,
    f: &Formula,
    assignment: &Assignment,
) -> Result<bool, SemanticsError> {
    let mut env: BTreeMap<VarName, usize> = assignment.clone();
    eval_rec(st, f, &mut env)
}

fn term_value(
    st: &FiniteStructure,
    t: &Term,
    env: &BTreeMap<VarName, usize>,
) -> Result<usize, SemanticsError> {
    match t {
        Term::Var(v) => env
            .get(v)
            .copied()
            .ok_or_else(|| SemanticsError::UnboundVariable(v.0.clone())),
        Term::Const(c) => st
            .constant(c)
            .ok_or_else(|| SemanticsError::VocabularyMismatch(c.clone())),
    }
}

fn eval_rec(
    st: &FiniteStructure,
    f: &Formula,
    env: &mut BTreeMap<VarName, usize>,
) -> Result<bool, SemanticsError> {
    Ok(match f {
        Formula::Atom(p, args) => {
            if st.relation(p).is_none() {
                return Err(SemanticsError::VocabularyMismatch(p.clone()));
            }
            let mut tuple = Vec::with_capacity(args.len());
            for a in args {
                tuple.push(term_value(st, a, env)?);
            }
            st.holds(p, &tuple)
        }
        Formula::Eq(a, b) => term_value(st, a, env)? == term_value(st, b, env)?,
        Formula::True => true,
        Formula::False => false,
        Formula::Not(g) => !eval_rec(st, g, env)?,
        Formula::And(fs) => {
            for g in fs {
                if !eval_rec(st, g, env)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Or(fs) => {
            for g in fs {
                if eval_rec(st, g, env)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Implies(a, b) => !eval_rec(st, a, env)? || eval_rec(st, b, env)?,
        Formula::Iff(a, b) => eval_rec(st, a, env)? == eval_rec(st, b, env)?,
        Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
            let universal = matches!(f, Formula::Forall(..));
            eval_block(st, vs, body, universal, env)?
        }
    })
}

fn eval_block(
    st: &FiniteStructure,
    vars: &[VarName],
    body: &Formula,
    universal: bool,
    env: &mut BTreeMap<VarName, usize>,
) -> Result<bool, SemanticsError> {
    if vars.is_empty() {
        return eval_rec(st, body, env);
    }
    let (v, rest) = vars.split_first().unwrap();
    let saved = env.get(v).copied();
    for e in 0..st.domain_size() {
        env.insert(v.clone(), e);
        let r = eval_block(st, rest, body, universal, env)?;
        if r != universal {
            restore(env, v, saved);
            return Ok(!universal);
        }
    }
    restore(env, v, saved);
    Ok(universal)
}

fn restore(env: &mut BTreeMap<VarName, usize>, v: &VarName, saved: Option<usize>) {
    match saved {
        Some(e) => {
            env.insert(v.clone(), e);
        }
        None => {
            env.remove(v);
        }
    }
}

/// Evaluates a sentence (no free variables).
pub fn evaluate_sentence(st: &FiniteStructure, f: &Formula) -> Result<bool, SemanticsError> {
    evaluate(st, f, &Assignment::new())
}

// ---------------------------------------------------------------------------
// Induced substructures
// ---------------------------------------------------------------------------

/// The substructure induced by the element set `s`, with the domain
/// relabeled order-preservingly to `0..s.len()`. Relations are restricted to
/// tuples inside `s`; constants must map into `s`.
pub fn induced_substructure(
    st: &FiniteStructure,
    s: &BTreeSet<usize>,
) -> Result<FiniteStructure, SemanticsError> {
    if s.is_empty() {
        return Err(SemanticsError::EmptyS);
    }
    let relabel: BTreeMap<usize, usize> =
        s.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let mut out = FiniteStructure::new(s.len());
    for (p, tuples) in &st.relations {
        out.ensure_relation(p);
        for t in tuples {
            if t.iter().all(|e| relabel.contains_key(e)) {
                out.insert_tuple(p, t.iter().map(|e| relabel[e]).collect());
            }
        }
    }
    for (c, &e) in &st.constants {
        match relabel.get(&e) {
            Some(&ne) => out.set_constant(c, ne),
            None => return Err(SemanticsError::ConstantOutsideS(c.clone())),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Structure enumeration
// ---------------------------------------------------------------------------

/// Number of structures over `vocab` with the given domain size, if it fits
/// in a `u128`.
pub fn structure_count(vocab: &Vocabulary, size: usize) -> Option<u128> {
    let mut count: u128 = 1;
    for (_, arity) in vocab.predicates() {
        let cells = (size as u128).checked_pow(arity as u32)?;
        if cells >= 127 {
            return None;
        }
        count = count.checked_mul(1u128 << cells)?;
    }
    for _ in vocab.constants() {
        count = count.checked_mul(size as u128)?;
    }
    Some(count)
}

/// Lazily enumerates every structure over `vocab` with the given domain
/// size, in a fixed deterministic order.
pub struct StructureEnumerator {
    size: usize,
    preds: Vec<(String, Vec<Vec<usize>>)>,
    consts: Vec<String>,
    rel_masks: Vec<u128>,
    const_vals: Vec<usize>,
    done: bool,
}

impl StructureEnumerator {
    pub fn new(vocab: &Vocabulary, size: usize) -> Self {
        assert!(size > 0);
        let preds: Vec<(String, Vec<Vec<usize>>)> = vocab
            .predicates()
            .map(|(p, a)| (p.to_string(), all_tuples(size, a)))
            .collect();
        for (p, tuples) in &preds {
            assert!(tuples.len() < 127, "relation space of `{p}` too large to enumerate");
        }
        let consts: Vec<String> = vocab.constants().map(|c| c.to_string()).collect();
        StructureEnumerator {
            size,
            rel_masks: vec![0; preds.len()],
            const_vals: vec![0; consts.len()],
            preds,
            consts,
            done: false,
        }
    }

    fn current(&self) -> FiniteStructure {
        let mut st = FiniteStructure::new(self.size);
        for ((p, tuples), &mask) in self.preds.iter().zip(&self.rel_masks) {
            st.ensure_relation(p);
            for (i, t) in tuples.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    st.insert_tuple(p, t.clone());
                }
            }
        }
        for (c, &v) in self.consts.iter().zip(&self.const_vals) {
            st.set_constant(c, v);
        }
        st
    }

    fn advance(&mut self) {
        // odometer order: constants vary fastest, then relations
        for i in (0..self.const_vals.len()).rev() {
            self.const_vals[i] += 1;
            if self.const_vals[i] < self.size {
                return;
            }
            self.const_vals[i] = 0;
        }
        for i in (0..self.rel_masks.len()).rev() {
            let cells = self.preds[i].1.len();
            self.rel_masks[i] += 1;
            if self.rel_masks[i] < (1u128 << cells) {
                return;
            }
            self.rel_masks[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for StructureEnumerator {
    type Item = FiniteStructure;

    fn next(&mut self) -> Option<FiniteStructure> {
        if self.done {
            return None;
        }
        let st = self.current();
        self.advance();
        Some(st)
    }
}

pub fn all_tuples(size: usize, arity: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..arity {
        let mut next = Vec::with_capacity(out.len() * size);
        for t in &out {
            for e in 0..size {
                let mut t2 = t.clone();
                t2.push(e);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

/// Enumerates all structures over `vocab` with domain size `size`.
pub fn enumerate_structures(vocab: &Vocabulary, size: usize) -> StructureEnumerator {
    StructureEnumerator::new(vocab, size)
}

/// Samples a structure: each relation tuple included independently with
/// probability 1/2, constants uniform.
pub fn sample_structure(vocab: &Vocabulary, size: usize, rng: &mut ChaCha8Rng) -> FiniteStructure {
    let mut st = FiniteStructure::new(size);
    for (p, arity) in vocab.predicates() {
        st.ensure_relation(p);
        for t in all_tuples(size, arity) {
            if rng.gen_bool(0.5) {
                st.insert_tuple(p, t);
            }
        }
    }
    for c in vocab.constants() {
        st.set_constant(c, rng.gen_range(0..size));
    }
    st
}

// ---------------------------------------------------------------------------
// Equivalence oracle
// ---------------------------------------------------------------------------

/// Outcome of a bounded equivalence check. A `true` verdict means "no
/// counterexample found" within the budget, never a proof.
#[derive(Clone, Debug)]
pub struct EquivCertificate {
    pub equivalent: bool,
    pub counterexample: Option<FiniteStructure>,
    pub structures_checked: u64,
    pub sampled: bool,
    pub seed: u64,
}

/// Checks whether the sentences `f` and `g` agree on all structures over
/// `vocab` with domain sizes `1..=max_size`. Sizes are checked exhaustively
/// while the cumulative structure count stays within `budget`; afterwards
/// seeded uniform sampling is used, spending the remaining budget evenly
/// across the remaining sizes. The first counterexample in enumeration order
/// wins.
pub fn equivalent_upto(
    f: &Formula,
    g: &Formula,
    vocab: &Vocabulary,
    max_size: usize,
    budget: u64,
    seed: u64,
) -> EquivCertificate {
    let joint = crate::eval::joint_vocabulary(&[f, g], Some(vocab));
    let cv = crate::eval::CompiledVocab::new(&joint);
    let cf = crate::eval::CompiledFormula::compile(f, &cv);
    let cg = crate::eval::CompiledFormula::compile(g, &cv);
    let differs = |st: &FiniteStructure| -> bool {
        let cs = cv.compile_structure(st);
        cf.eval(&cs) != cg.eval(&cs)
    };
    let mut checked: u64 = 0;
    let mut sampled = false;
    for size in 1..=max_size {
        let count = structure_count(vocab, size);
        let exhaustive = match count {
            Some(c) => checked.saturating_add(c.min(u64::MAX as u128) as u64) <= budget,
            None => false,
        };
        let structures: Vec<FiniteStructure> = if exhaustive {
            enumerate_structures(vocab, size).collect()
        } else {
            sampled = true;
            let remaining_sizes = (max_size - size + 1) as u64;
            let per_size = (budget.saturating_sub(checked) / remaining_sizes).max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (size as u64).wrapping_mul(0x9e3779b9));
            (0..per_size).map(|_| sample_structure(vocab, size, &mut rng)).collect()
        };
        checked += structures.len() as u64;
        let cex = structures
            .par_iter()
            .enumerate()
            .filter(|(_, st)| differs(st))
            .min_by_key(|(i, _)| *i)
            .map(|(_, st)| st.clone());
        if let Some(st) = cex {
            return EquivCertificate {
                equivalent: false,
                counterexample: Some(st),
                structures_checked: checked,
                sampled,
                seed,
            };
        }
    }
    EquivCertificate { equivalent: true, counterexample: None, structures_checked: checked, sampled, seed }
}

/// Default oracle configuration: domain sizes up to 3, one million
/// structures, seed 0.
pub const ORACLE_DEFAULT_MAX_SIZE: usize = 3;
pub const ORACLE_DEFAULT_BUDGET: u64 = 1_000_000;

/// Convenience wrapper over [`equivalent_upto`] using the joint inferred
/// vocabulary of the two sentences and default limits.
pub fn oracle_equivalent(f: &Formula, g: &Formula) -> EquivCertificate {
    let mut vocab = f.inferred_vocabulary();
    for (p, a) in g.used_predicates() {
        vocab.declare_predicate(p, a).expect("conflicting predicate use");
    }
    for c in g.used_constants() {
        vocab.declare_constant(c).expect("conflicting constant use");
    }
    equivalent_upto(f, g, &vocab, ORACLE_DEFAULT_MAX_SIZE, ORACLE_DEFAULT_BUDGET, 0)
}

// ---------------------------------------------------------------------------
// Satisfiability
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SatVerdict {
    Sat,
    Unsat,
    Unknown,
}

/// Result of a satisfiability run. A `Sat` verdict always carries a model
/// that [`evaluate`] confirms.
#[derive(Clone, Debug)]
pub struct SatResult {
    pub verdict: SatVerdict,
    pub model: Option<FiniteStructure>,
    pub bound_used: usize,
    pub method: String,
}

/// Decides satisfiability for a BSR sentence `exists z.. forall x.. psi` via
/// the linear model bound `max(|z| + #constants, 1)`: structures of sizes up
/// to the bound are enumerated; the first model found is returned, and if no
/// model exists within the bound the sentence is unsatisfiable.
pub fn bsr_sat(f: &Formula, vocab: &Vocabulary) -> Result<SatResult, SemanticsError> {
    let bound = bsr_model_bound(f, vocab).ok_or(SemanticsError::NotBsr)?;
    for size in 1..=bound {
        for st in enumerate_structures(vocab, size) {
            if evaluate_sentence(&st, f)? {
                return Ok(SatResult {
                    verdict: SatVerdict::Sat,
                    model: Some(st),
                    bound_used: bound,
                    method: "bsr-small-model".to_string(),
                });
            }
        }
    }
    Ok(SatResult {
        verdict: SatVerdict::Unsat,
        model: None,
        bound_used: bound,
        method: "bsr-small-model".to_string(),
    })
}

/// The BSR small-model bound `max(|z| + k, 1)` for a prenex
/// exists*-forall* sentence, `k` being the number of constants in `vocab`.
/// `None` if the sentence is not BSR-shaped.
pub fn bsr_model_bound(f: &Formula, vocab: &Vocabulary) -> Option<usize> {
    let prefix = f.prenex_prefix()?;
    let mut leading = 0usize;
    let mut seen_forall = false;
    for (q, _) in &prefix {
        match q {
            Quant::Exists if !seen_forall => leading += 1,
            Quant::Exists => return None,
            Quant::Forall => seen_forall = true,
        }
    }
    if !f.is_sentence() {
        return None;
    }
    Some((leading + vocab.num_constants()).max(1))
}

/// Bounded model search: SAT with a model if one exists with domain size at
/// most `max_size`, otherwise UNKNOWN (bounded search has no refutation
/// authority).
pub fn bounded_model_search(
    f: &Formula,
    vocab: &Vocabulary,
    max_size: usize,
) -> Result<SatResult, SemanticsError> {
    for size in 1..=max_size {
        for st in enumerate_structures(vocab, size) {
            if evaluate_sentence(&st, f)? {
                return Ok(SatResult {
                    verdict: SatVerdict::Sat,
                    model: Some(st),
                    bound_used: max_size,
                    method: "bounded-search".to_string(),
                });
            }
        }
    }
    Ok(SatResult {
        verdict: SatVerdict::Unknown,
        model: None,
        bound_used: max_size,
        method: "bounded-search".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_formula, parse_structure};
    use crate::syntax::{and, atom, eq, exists, forall, not, Term};

    #[test]
    fn evaluate_simple() {
        let v = Vocabulary::from_parts([("P", 1)], []);
        let st = parse_structure("domain 1; P = {(0)}", &v).unwrap();
        let f = parse_formula("forall x. P(x)", &v).unwrap();
        assert!(evaluate_sentence(&st, &f).unwrap());
    }

    #[test]
    fn evaluate_equality_domain_sensitivity() {
        let f = exists(
            vec!["y1".into(), "y2".into()],
            not(eq(Term::var("y1"), Term::var("y2"))),
        );
        let st1 = FiniteStructure::new(1);
        let st2 = FiniteStructure::new(2);
        assert!(!evaluate_sentence(&st1, &f).unwrap());
        assert!(evaluate_sentence(&st2, &f).unwrap());
    }

    #[test]
    fn evaluate_unbound_and_mismatch() {
        let st = FiniteStructure::new(2);
        let f = atom("P", vec![Term::var("x")]);
        assert!(matches!(
            evaluate(&st, &f, &Assignment::new()),
            Err(SemanticsError::VocabularyMismatch(_))
        ));
        let mut st2 = FiniteStructure::new(2);
        st2.ensure_relation("P");
        assert!(matches!(
            evaluate(&st2, &f, &Assignment::new()),
            Err(SemanticsError::UnboundVariable(_))
        ));
    }

    #[test]
    fn enumeration_counts() {
        let v1 = Vocabulary::from_parts([("P", 1)], []);
        assert_eq!(enumerate_structures(&v1, 1).count(), 2);
        let v2 = Vocabulary::from_parts([("P", 1), ("Q", 1)], []);
        assert_eq!(enumerate_structures(&v2, 2).count(), 16);
        let v3 = Vocabulary::from_parts([("R", 2)], []);
        assert_eq!(enumerate_structures(&v3, 2).count(), 16);
        assert_eq!(structure_count(&v3, 2), Some(16));
        // with a constant
        let v4 = Vocabulary::from_parts([("P", 1)], ["c"]);
        assert_eq!(enumerate_structures(&v4, 2).count(), 8);
    }

    #[test]
    fn enumeration_unique_and_deterministic() {
        let v = Vocabulary::from_parts([("P", 1), ("Q", 1)], []);
        let a: Vec<FiniteStructure> = enumerate_structures(&v, 2).collect();
        let b: Vec<FiniteStructure> = enumerate_structures(&v, 2).collect();
        assert_eq!(a, b);
        let set: std::collections::BTreeSet<String> =
            a.iter().map(|st| format!("{st:?}")).collect();
        assert_eq!(set.len(), a.len());
    }

    #[test]
    fn oracle_reflexive_and_distinguishes() {
        let v = Vocabulary::from_parts([("P", 1)], []);
        let f = parse_formula("forall x. P(x)", &v).unwrap();
        let g = parse_formula("exists x. P(x)", &v).unwrap();
        let cert = equivalent_upto(&f, &f, &v, 3, 10_000, 0);
        assert!(cert.equivalent);
        let cert = equivalent_upto(&f, &g, &v, 3, 10_000, 0);
        assert!(!cert.equivalent);
        let cex = cert.counterexample.unwrap();
        assert_ne!(
            evaluate_sentence(&cex, &f).unwrap(),
            evaluate_sentence(&cex, &g).unwrap()
        );
    }

    #[test]
    fn induced_substructure_relabels() {
        let v = Vocabulary::from_parts([("R", 2)], []);
        let st = parse_structure("domain 3; R = {(0,2),(1,2),(2,2)}", &v).unwrap();
        let s: BTreeSet<usize> = [0, 2].into_iter().collect();
        let sub = induced_substructure(&st, &s).unwrap();
        assert_eq!(sub.domain_size(), 2);
        // 0 -> 0, 2 -> 1
        assert!(sub.holds("R", &[0, 1]));
        assert!(sub.holds("R", &[1, 1]));
        assert_eq!(sub.relation("R").unwrap().len(), 2);
    }

    #[test]
    fn induced_substructure_full_domain_is_identity() {
        let v = Vocabulary::from_parts([("R", 2)], ["c"]);
        let st = parse_structure("domain 2; R = {(0,1)}; c = 1", &v).unwrap();
        let s: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(induced_substructure(&st, &s).unwrap(), st);
    }

    #[test]
    fn bsr_sat_examples() {
        // exists y1 y2. ~(y1 = y2)  is SAT with model size 2
        let v = Vocabulary::new();
        let f = exists(
            vec!["y1".into(), "y2".into()],
            not(eq(Term::var("y1"), Term::var("y2"))),
        );
        let r = bsr_sat(&f, &v).unwrap();
        assert_eq!(r.verdict, SatVerdict::Sat);
        assert_eq!(r.bound_used, 2);
        assert_eq!(r.model.as_ref().unwrap().domain_size(), 2);

        // forall x. P(x) & ~P(x)  is UNSAT at bound 1
        let v = Vocabulary::from_parts([("P", 1)], []);
        let g = forall(
            vec!["x".into()],
            and(vec![
                atom("P", vec![Term::var("x")]),
                not(atom("P", vec![Term::var("x")])),
            ]),
        );
        let r = bsr_sat(&g, &v).unwrap();
        assert_eq!(r.verdict, SatVerdict::Unsat);
        assert_eq!(r.bound_used, 1);
    }

    #[test]
    fn substructure_lemma_universal_sentences() {
        // for universal NNF sentences, truth is preserved under induced
        // substructures
        let v = Vocabulary::from_parts([("R", 2)], []);
        let f = parse_formula("forall x y. R(x,y) -> R(y,x)", &v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tried = 0;
        for _ in 0..200 {
            let st = sample_structure(&v, 3, &mut rng);
            if !evaluate_sentence(&st, &f).unwrap() {
                continue;
            }
            tried += 1;
            for drop in 0..3usize {
                let s: BTreeSet<usize> = (0..3).filter(|&e| e != drop).collect();
                let sub = induced_substructure(&st, &s).unwrap();
                assert!(evaluate_sentence(&sub, &f).unwrap());
            }
        }
        assert!(tried > 0);
    }
}
