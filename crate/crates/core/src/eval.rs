//! A compiled finite-model evaluator used by the equivalence oracle and the
//! satisfiability drivers.
//!
//! Formulas are compiled once (variable occurrences resolved to slots,
//! relations to dense tables); evaluation of quantifier blocks assigns one
//! variable at a time and prunes with a three-valued partial evaluation, so
//! sentences with long existential prefixes — the translation pipelines
//! produce those — stay tractable on small domains. Large blocks over
//! conjunctions with disjunctive members are split disjunct by disjunct at
//! compile time, which turns witness-copy searches into per-branch
//! constraint propagation.
//!
//! The recursive interpreter in [`crate::semantics`] serves as the
//! independent reference implementation.


use crate::semantics::FiniteStructure;
use crate::syntax::{and, exists, forall, or, Formula, Term, VarName, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CTerm {
    Slot(u32),
    Const(u32),
}

#[derive(Clone, Debug)]
enum CNode {
    Atom { pred: u32, args: Vec<CTerm> },
    Eq(CTerm, CTerm),
    True,
    False,
    Not(u32),
    And(Vec<u32>),
    Or(Vec<u32>),
    Quant { universal: bool, slots: Vec<u32>, body: u32 },
}

/// A formula compiled against a fixed vocabulary.
pub struct CompiledFormula {
    nodes: Vec<CNode>,
    root: u32,
    nslots: usize,
}

/// A structure compiled to dense relation tables in vocabulary order.
pub struct CompiledStructure {
    size: usize,
    rels: Vec<Vec<bool>>,
    consts: Vec<usize>,
}

/// Fixed symbol order shared by compiled formulas and structures.
pub struct CompiledVocab {
    preds: Vec<(String, usize)>,
    consts: Vec<String>,
}

impl CompiledVocab {
    pub fn new(vocab: &Vocabulary) -> Self {
        CompiledVocab {
            preds: vocab.predicates().map(|(p, a)| (p.to_string(), a)).collect(),
            consts: vocab.constants().map(|c| c.to_string()).collect(),
        }
    }

    fn pred_index(&self, name: &str) -> Option<u32> {
        self.preds.iter().position(|(p, _)| p == name).map(|i| i as u32)
    }

    fn const_index(&self, name: &str) -> Option<u32> {
        self.consts.iter().position(|c| c == name).map(|i| i as u32)
    }

    pub fn compile_structure(&self, st: &FiniteStructure) -> CompiledStructure {
        let size = st.domain_size();
        let mut rels = Vec::with_capacity(self.preds.len());
        for (p, arity) in &self.preds {
            let cells = size.pow(*arity as u32);
            let mut table = vec![false; cells];
            if let Some(tuples) = st.relation(p) {
                for t in tuples {
                    let mut idx = 0usize;
                    for &e in t {
                        idx = idx * size + e;
                    }
                    table[idx] = true;
                }
            }
            rels.push(table);
        }
        let consts = self
            .consts
            .iter()
            .map(|c| st.constant(c).expect("constant interpreted"))
            .collect();
        CompiledStructure { size, rels, consts }
    }
}

/// Splitting gate: blocks of at least this many variables get their scope's
/// disjunctive members split out.
const SPLIT_MIN_BLOCK: usize = 4;
/// Maximum multiplication factor of the compile-time splitting per
/// quantifier node.
const SPLIT_MAX_FACTOR: usize = 64;
/// Three-valued lookahead evaluates nested quantifier blocks only while the
/// branch count stays below this gate.
const LOOKAHEAD_GATE: usize = 4096;

/// Splits large quantifier blocks over conjunctions (disjunctions) with
/// disjunctive (conjunctive) members: `exists vs. (A & (B | C))` becomes
/// `(exists vs. A & B) | (exists vs. A & C)` so that each branch propagates
/// its own constraints.
fn split_for_eval(f: &Formula) -> Formula {
    match f {
        Formula::Exists(vs, body) => {
            let body = split_for_eval(body);
            if vs.len() >= SPLIT_MIN_BLOCK {
                if let Formula::And(parts) = &body {
                    let variants = expand_products(parts, true);
                    if variants.len() > 1 && variants.len() <= SPLIT_MAX_FACTOR {
                        return or(variants
                            .into_iter()
                            .map(|conj| split_for_eval(&exists(vs.clone(), and(conj))))
                            .collect());
                    }
                }
            }
            exists(vs.clone(), body)
        }
        Formula::Forall(vs, body) => {
            let body = split_for_eval(body);
            if vs.len() >= SPLIT_MIN_BLOCK {
                if let Formula::Or(parts) = &body {
                    let variants = expand_products(parts, false);
                    if variants.len() > 1 && variants.len() <= SPLIT_MAX_FACTOR {
                        return and(variants
                            .into_iter()
                            .map(|disj| split_for_eval(&forall(vs.clone(), or(disj))))
                            .collect());
                    }
                }
            }
            forall(vs.clone(), body)
        }
        Formula::And(parts) => and(parts.iter().map(split_for_eval).collect()),
        Formula::Or(parts) => or(parts.iter().map(split_for_eval).collect()),
        Formula::Not(g) => Formula::Not(Box::new(split_for_eval(g))),
        Formula::Implies(a, b) => {
            Formula::Implies(Box::new(split_for_eval(a)), Box::new(split_for_eval(b)))
        }
        Formula::Iff(a, b) => {
            Formula::Iff(Box::new(split_for_eval(a)), Box::new(split_for_eval(b)))
        }
        _ => f.clone(),
    }
}

/// All ways of choosing one disjunct from every disjunctive member (for
/// conjunctions; dual for disjunctions), capped at [`SPLIT_MAX_FACTOR`].
fn expand_products(parts: &[Formula], conjunctive: bool) -> Vec<Vec<Formula>> {
    let mut variants: Vec<Vec<Formula>> = vec![Vec::new()];
    for p in parts {
        let options: Vec<Formula> = match (conjunctive, p) {
            (true, Formula::Or(ds)) => ds.clone(),
            (false, Formula::And(cs)) => cs.clone(),
            _ => vec![p.clone()],
        };
        if variants.len() * options.len() > SPLIT_MAX_FACTOR {
            // too many branches: keep this member unsplit
            for v in &mut variants {
                v.push(p.clone());
            }
            continue;
        }
        let mut next = Vec::with_capacity(variants.len() * options.len());
        for v in &variants {
            for o in &options {
                let mut nv = v.clone();
                nv.push(o.clone());
                next.push(nv);
            }
        }
        variants = next;
    }
    variants
}

impl CompiledFormula {
    /// Compiles a sentence against the vocabulary. The formula is first
    /// brought into negation normal form and miniscoped, which undoes
    /// prenexing and restores small per-conjunct quantifier blocks, then
    /// large blocks are split disjunct by disjunct. Variable occurrences are
    /// resolved to binder slots with standard shadowing.
    pub fn compile(f: &Formula, vocab: &CompiledVocab) -> CompiledFormula {
        let miniscoped = crate::transforms::shift_quantifiers(&crate::syntax::rectify(
            &crate::syntax::to_nnf(f),
        ))
        .expect("rectified NNF input");
        let f = split_for_eval(&miniscoped);
        let mut nodes = Vec::new();
        let mut scope: Vec<(VarName, u32)> = Vec::new();
        let mut nslots = 0u32;
        let root = compile_rec(&f, vocab, &mut nodes, &mut scope, &mut nslots);
        CompiledFormula { nodes, root, nslots: nslots as usize }
    }

    /// Evaluates the compiled sentence on a compiled structure.
    pub fn eval(&self, st: &CompiledStructure) -> bool {
        let mut env: Vec<i16> = vec![-1; self.nslots.max(1)];
        self.eval_full(self.root, st, &mut env)
    }

    fn term_value(&self, t: CTerm, st: &CompiledStructure, env: &[i16]) -> i16 {
        match t {
            CTerm::Slot(s) => env[s as usize],
            CTerm::Const(c) => st.consts[c as usize] as i16,
        }
    }

    fn eval_full(&self, node: u32, st: &CompiledStructure, env: &mut Vec<i16>) -> bool {
        match &self.nodes[node as usize] {
            CNode::True => true,
            CNode::False => false,
            CNode::Atom { pred, args } => {
                let mut idx = 0usize;
                for &a in args {
                    let v = self.term_value(a, st, env);
                    debug_assert!(v >= 0, "unassigned variable in full evaluation");
                    idx = idx * st.size + v as usize;
                }
                st.rels[*pred as usize][idx]
            }
            CNode::Eq(a, b) => self.term_value(*a, st, env) == self.term_value(*b, st, env),
            CNode::Not(g) => !self.eval_full(*g, st, env),
            CNode::And(parts) => parts.iter().all(|&p| self.eval_full(p, st, env)),
            CNode::Or(parts) => parts.iter().any(|&p| self.eval_full(p, st, env)),
            CNode::Quant { universal, slots, body } => {
                self.search_block(*universal, slots, *body, st, env, 0)
            }
        }
    }

    /// Backtracking assignment of a quantifier block with three-valued
    /// pruning after every variable.
    fn search_block(
        &self,
        universal: bool,
        slots: &[u32],
        body: u32,
        st: &CompiledStructure,
        env: &mut Vec<i16>,
        depth: usize,
    ) -> bool {
        if depth == slots.len() {
            return self.eval_full(body, st, env);
        }
        let slot = slots[depth] as usize;
        for e in 0..st.size {
            env[slot] = e as i16;
            let outcome = match self.eval3(body, st, env, LOOKAHEAD_GATE) {
                Some(true) => true,
                Some(false) => false,
                None => self.search_block(universal, slots, body, st, env, depth + 1),
            };
            if outcome != universal {
                env[slot] = -1;
                return !universal;
            }
        }
        env[slot] = -1;
        universal
    }

    /// Three-valued evaluation under a partial assignment: `Some(b)` means
    /// the value is `b` under every completion; `None` is undetermined.
    /// Nested quantifier blocks are explored while the branch budget lasts.
    fn eval3(
        &self,
        node: u32,
        st: &CompiledStructure,
        env: &mut Vec<i16>,
        gas: usize,
    ) -> Option<bool> {
        match &self.nodes[node as usize] {
            CNode::True => Some(true),
            CNode::False => Some(false),
            CNode::Atom { pred, args } => {
                let mut idx = 0usize;
                for &a in args {
                    let v = self.term_value(a, st, env);
                    if v < 0 {
                        return None;
                    }
                    idx = idx * st.size + v as usize;
                }
                Some(st.rels[*pred as usize][idx])
            }
            CNode::Eq(a, b) => {
                let va = self.term_value(*a, st, env);
                let vb = self.term_value(*b, st, env);
                if va < 0 || vb < 0 {
                    // identical slots are equal under any assignment
                    if *a == *b {
                        return Some(true);
                    }
                    return None;
                }
                Some(va == vb)
            }
            CNode::Not(g) => self.eval3(*g, st, env, gas).map(|b| !b),
            CNode::And(parts) => {
                let mut all_true = true;
                for &p in parts {
                    match self.eval3(p, st, env, gas) {
                        Some(false) => return Some(false),
                        Some(true) => {}
                        None => all_true = false,
                    }
                }
                if all_true {
                    Some(true)
                } else {
                    None
                }
            }
            CNode::Or(parts) => {
                let mut all_false = true;
                for &p in parts {
                    match self.eval3(p, st, env, gas) {
                        Some(true) => return Some(true),
                        Some(false) => {}
                        None => all_false = false,
                    }
                }
                if all_false {
                    Some(false)
                } else {
                    None
                }
            }
            CNode::Quant { universal, slots, body } => {
                let branches = (st.size as u64).checked_pow(slots.len() as u32);
                match branches {
                    Some(b) if b as usize <= gas => {
                        let gas = gas / (b as usize).max(1);
                        self.quant3(*universal, slots, *body, st, env, 0, gas.max(1))
                    }
                    _ => None,
                }
            }
        }
    }

    fn quant3(
        &self,
        universal: bool,
        slots: &[u32],
        body: u32,
        st: &CompiledStructure,
        env: &mut Vec<i16>,
        depth: usize,
        gas: usize,
    ) -> Option<bool> {
        if depth == slots.len() {
            return self.eval3(body, st, env, gas);
        }
        let slot = slots[depth] as usize;
        let saved = env[slot];
        let mut decided_all = true;
        for e in 0..st.size {
            env[slot] = e as i16;
            // peek before descending: a decided body skips the subtree
            let peek = self.eval3(body, st, env, gas);
            let branch = match peek {
                Some(_) => peek,
                None => self.quant3(universal, slots, body, st, env, depth + 1, gas),
            };
            match branch {
                Some(b) if b != universal => {
                    env[slot] = saved;
                    return Some(!universal);
                }
                Some(_) => {}
                None => decided_all = false,
            }
        }
        env[slot] = saved;
        if decided_all {
            Some(universal)
        } else {
            None
        }
    }
}

fn compile_rec(
    f: &Formula,
    vocab: &CompiledVocab,
    nodes: &mut Vec<CNode>,
    scope: &mut Vec<(VarName, u32)>,
    nslots: &mut u32,
) -> u32 {
    let term = |t: &Term, scope: &Vec<(VarName, u32)>| -> CTerm {
        match t {
            Term::Var(v) => {
                let slot = scope
                    .iter()
                    .rev()
                    .find(|(name, _)| name == v)
                    .unwrap_or_else(|| panic!("unbound variable `{v}` in sentence"))
                    .1;
                CTerm::Slot(slot)
            }
            Term::Const(c) => CTerm::Const(
                vocab
                    .const_index(c)
                    .unwrap_or_else(|| panic!("constant `{c}` missing from vocabulary")),
            ),
        }
    };
    let node = match f {
        Formula::True => CNode::True,
        Formula::False => CNode::False,
        Formula::Atom(p, args) => CNode::Atom {
            pred: vocab
                .pred_index(p)
                .unwrap_or_else(|| panic!("predicate `{p}` missing from vocabulary")),
            args: args.iter().map(|t| term(t, scope)).collect(),
        },
        Formula::Eq(a, b) => CNode::Eq(term(a, scope), term(b, scope)),
        Formula::Not(g) => {
            let c = compile_rec(g, vocab, nodes, scope, nslots);
            CNode::Not(c)
        }
        Formula::And(parts) => {
            let cs = parts
                .iter()
                .map(|p| compile_rec(p, vocab, nodes, scope, nslots))
                .collect();
            CNode::And(cs)
        }
        Formula::Or(parts) => {
            let cs = parts
                .iter()
                .map(|p| compile_rec(p, vocab, nodes, scope, nslots))
                .collect();
            CNode::Or(cs)
        }
        Formula::Implies(a, b) => {
            // a -> b  ==  ~a | b
            let ca = compile_rec(a, vocab, nodes, scope, nslots);
            nodes.push(CNode::Not(ca));
            let na = (nodes.len() - 1) as u32;
            let cb = compile_rec(b, vocab, nodes, scope, nslots);
            CNode::Or(vec![na, cb])
        }
        Formula::Iff(a, b) => {
            // a <-> b  ==  (a & b) | (~a & ~b)
            let ca = compile_rec(a, vocab, nodes, scope, nslots);
            let cb = compile_rec(b, vocab, nodes, scope, nslots);
            nodes.push(CNode::Not(ca));
            let na = (nodes.len() - 1) as u32;
            nodes.push(CNode::Not(cb));
            let nb = (nodes.len() - 1) as u32;
            nodes.push(CNode::And(vec![ca, cb]));
            let both = (nodes.len() - 1) as u32;
            nodes.push(CNode::And(vec![na, nb]));
            let neither = (nodes.len() - 1) as u32;
            CNode::Or(vec![both, neither])
        }
        Formula::Forall(vs, body) | Formula::Exists(vs, body) => {
            let universal = matches!(f, Formula::Forall(..));
            let mut slots = Vec::with_capacity(vs.len());
            for v in vs {
                let slot = *nslots;
                *nslots += 1;
                scope.push((v.clone(), slot));
                slots.push(slot);
            }
            let body_id = compile_rec(body, vocab, nodes, scope, nslots);
            scope.truncate(scope.len() - vs.len());
            CNode::Quant { universal, slots, body: body_id }
        }
    };
    nodes.push(node);
    (nodes.len() - 1) as u32
}

/// Evaluates a sentence on a structure through the compiled path; the
/// vocabulary is inferred from the sentence and the structure's symbols.
pub fn eval_sentence_compiled(f: &Formula, st: &FiniteStructure, vocab: &Vocabulary) -> bool {
    let cv = CompiledVocab::new(vocab);
    let cf = CompiledFormula::compile(f, &cv);
    cf.eval(&cv.compile_structure(st))
}

/// Joint vocabulary of several formulas, merged with an optional base.
pub fn joint_vocabulary(fs: &[&Formula], base: Option<&Vocabulary>) -> Vocabulary {
    let mut vocab = base.cloned().unwrap_or_default();
    for f in fs {
        for (p, a) in f.used_predicates() {
            vocab
                .declare_predicate(p, a)
                .expect("conflicting predicate arity across formulas");
        }
        for c in f.used_constants() {
            vocab.declare_constant(c).expect("conflicting constant use");
        }
    }
    vocab
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_formula, parse_structure};
    use crate::semantics::{enumerate_structures, evaluate_sentence, sample_structure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agrees_with_reference_interpreter() {
        let vocab = Vocabulary::from_parts([("P", 1), ("R", 2)], ["c"]);
        let texts = [
            "forall x. P(x) | R(x,c)",
            "exists x y. R(x,y) & ~R(y,x)",
            "forall x. exists y. (P(x) <-> R(x,y)) -> P(y)",
            "(exists x. P(x)) <-> (forall y. R(y,y))",
            "exists x. x = c & P(x)",
        ];
        let cv = CompiledVocab::new(&vocab);
        for t in texts {
            let f = parse_formula(t, &vocab).unwrap();
            let cf = CompiledFormula::compile(&f, &cv);
            for st in enumerate_structures(&vocab, 2) {
                let fast = cf.eval(&cv.compile_structure(&st));
                let slow = evaluate_sentence(&st, &f).unwrap();
                assert_eq!(fast, slow, "{t} differs on {st:?}");
            }
        }
    }

    #[test]
    fn randomized_agreement() {
        let vocab = Vocabulary::from_parts([("P", 1), ("Q", 1), ("R", 2)], []);
        let texts = [
            "forall x. exists y. (P(x) <-> Q(y)) & (R(x,x) -> R(x,y))",
            "exists a b. forall z. R(a,z) | R(b,z) | (P(z) & ~Q(z))",
        ];
        let cv = CompiledVocab::new(&vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for t in texts {
            let f = parse_formula(t, &vocab).unwrap();
            let cf = CompiledFormula::compile(&f, &cv);
            for _ in 0..300 {
                let st = sample_structure(&vocab, 3, &mut rng);
                assert_eq!(
                    cf.eval(&cv.compile_structure(&st)),
                    evaluate_sentence(&st, &f).unwrap()
                );
            }
        }
    }

    #[test]
    fn long_existential_prefix_is_tractable() {
        // 24 existentials over paired constraints: naive evaluation would
        // branch 2^24 times
        let vocab = Vocabulary::from_parts([("R", 2)], []);
        let mut parts = Vec::new();
        let mut names = Vec::new();
        for i in 0..12 {
            names.push(format!("a{i}"));
            names.push(format!("b{i}"));
            parts.push(format!("R(a{i},b{i})"));
            parts.push(format!("~R(b{i},a{i})"));
        }
        let text = format!("exists {}. {}", names.join(" "), parts.join(" & "));
        let f = parse_formula(&text, &vocab).unwrap();
        let cv = CompiledVocab::new(&vocab);
        let cf = CompiledFormula::compile(&f, &cv);
        let st = parse_structure("domain 2; R = {(0,1)}", &vocab).unwrap();
        assert!(cf.eval(&cv.compile_structure(&st)));
        let st2 = parse_structure("domain 2; R = {(0,1),(1,0)}", &vocab).unwrap();
        assert!(!cf.eval(&cv.compile_structure(&st2)));
    }
}
