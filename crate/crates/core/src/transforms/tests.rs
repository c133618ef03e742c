use super::*;
use crate::fragments::{membership, FragmentId};
use crate::parse::{parse_formula, print_formula};
use crate::semantics::{equivalent_upto, oracle_equivalent};
use crate::syntax::{formula_len, rectify, to_nnf, Formula, Quant, Vocabulary};

fn vocab(preds: &[(&str, usize)]) -> Vocabulary {
    Vocabulary::from_parts(preds.iter().copied(), [])
}

fn intro_phi() -> (Formula, Vocabulary) {
    let v = vocab(&[("P", 1), ("Q", 1)]);
    (parse_formula("forall x. exists y. (P(x) <-> Q(y))", &v).unwrap(), v)
}

fn sbsr_example() -> (Formula, Vocabulary) {
    let v = vocab(&[("P", 2), ("Q", 2)]);
    (
        parse_formula(
            "exists u. forall x. exists y. forall z. (P(u,z) & Q(u,x)) | (P(y,z) & Q(u,y))",
            &v,
        )
        .unwrap(),
        v,
    )
}

fn saf_example() -> (Formula, Vocabulary) {
    let v = vocab(&[("P", 2), ("Q", 2), ("R", 3)]);
    (
        parse_formula(
            "exists y. forall x1. exists u1. forall x2. exists u2 u3. \
             (~P(y,x1) | (Q(x1,u1) & R(y,x2,u2))) & (P(y,x1) | (~Q(x1,u1) & ~R(y,x2,u3)))",
            &v,
        )
        .unwrap(),
        v,
    )
}

#[test]
fn miniscoping_rules() {
    let v = vocab(&[("P", 1), ("Q", 1)]);
    // exists y. (P(y) | Q(z-free)) pushes out the part without y
    let f = parse_formula("forall z. exists y. (P(y) | Q(z))", &v).unwrap();
    let g = shift_quantifiers(&to_nnf(&rectify(&f))).unwrap();
    let expected = parse_formula("forall z. (exists y. P(y)) | Q(z)", &v).unwrap();
    // the universal then also retracts from the disjunct without z
    let expected = shift_quantifiers(&to_nnf(&rectify(&expected))).unwrap();
    assert_eq!(g, expected);
    assert!(oracle_equivalent(&f, &g).equivalent);

    // forall x. (P(x) & Q(x)) distributes
    let f = parse_formula("forall x. P(x) & Q(x)", &v).unwrap();
    let g = shift_quantifiers(&f).unwrap();
    let expected = parse_formula("(forall x. P(x)) & (forall x. Q(x))", &v).unwrap();
    assert_eq!(g, expected);

    // quantifier-free input unchanged
    let f = crate::parse::parse_formula_with_header("vocab A/0 B/0; A & B", None)
        .unwrap()
        .0;
    assert_eq!(shift_quantifiers(&f).unwrap(), f);
}

#[test]
fn intro_example_to_bsr() {
    let (phi, v) = intro_phi();
    let budget = BlowupBudget::default();
    let (bsr, _) = sf_to_bsr(&phi, &budget).unwrap();
    assert!(membership(&bsr, FragmentId::Bsr).unwrap().verdict);
    // equivalent to the displayed two-witness sentence
    let psi_prime = parse_formula(
        "exists y1 y2. forall x. (P(x) -> Q(y1)) & (~P(x) -> ~Q(y2))",
        &v,
    )
    .unwrap();
    let cert = equivalent_upto(&phi, &bsr, &v, 3, 1_000_000, 0);
    assert!(cert.equivalent, "translation not equivalent to input");
    let cert = equivalent_upto(&bsr, &psi_prime, &v, 3, 1_000_000, 0);
    assert!(cert.equivalent, "translation disagrees with the reference sentence");
}

#[test]
fn sbsr_example_to_bsr() {
    let (phi, v) = sbsr_example();
    let budget = BlowupBudget::default();
    let (bsr, _) = sbsr_to_bsr(&phi, &budget).unwrap();
    assert!(membership(&bsr, FragmentId::Bsr).unwrap().verdict);
    let cert = equivalent_upto(&phi, &bsr, &v, 2, 1_000_000, 0);
    assert!(cert.equivalent, "size-2 exhaustive check failed");
    let cert = equivalent_upto(&phi, &bsr, &v, 3, 600, 7);
    assert!(cert.equivalent, "size-3 sampled check failed");
}

#[test]
fn sbsr_shift_step_example() {
    // the innermost step of the worked example: forall z over the matrix
    let (phi, _v) = sbsr_example();
    let ctx = ShiftContext::from_sentence(&phi).unwrap();
    // strip the three outer quantifiers to reach `forall z. psi`
    let mut cur = to_nnf(&phi);
    for _ in 0..3 {
        match cur {
            Formula::Exists(_, body) | Formula::Forall(_, body) => cur = *body,
            _ => panic!("prefix too short"),
        }
    }
    assert!(matches!(cur, Formula::Forall(..)));
    let budget = BlowupBudget::default();
    let stepped = sbsr_shift_step(&cur, &ctx, &budget).unwrap();
    // the step must preserve the open formula's meaning: compare after
    // closing with the original prefix
    let close = |m: Formula| {
        crate::syntax::exists(
            vec!["u".into()],
            crate::syntax::forall(
                vec!["x".into()],
                crate::syntax::exists(vec!["y".into()], m),
            ),
        )
    };
    let before = close(cur.clone());
    let after = close(stepped.clone());
    assert!(oracle_equivalent(&before, &after).equivalent);
    // no universal quantifier scopes over a disjunction of both P-atoms
    // anymore: z has been pushed to the atom groups
    assert!(!matches!(stepped, Formula::Forall(..)));
}

#[test]
fn sbsr_step_vacuous_binder_dropped() {
    let v = vocab(&[("P", 1)]);
    let f = parse_formula("forall x. exists y. P(y)", &v).unwrap();
    let ctx = ShiftContext::from_sentence(&f).unwrap();
    let budget = BlowupBudget::default();
    let stepped = sbsr_shift_step(&f, &ctx, &budget).unwrap();
    assert_eq!(stepped, parse_formula("exists y. P(y)", &v).unwrap());
}

#[test]
fn bsr_input_is_prenex_normalized() {
    let v = vocab(&[("P", 1)]);
    let f = parse_formula("exists z. forall x. P(x) | P(z)", &v).unwrap();
    let budget = BlowupBudget::default();
    let (out, _) = sbsr_to_bsr(&f, &budget).unwrap();
    assert!(membership(&out, FragmentId::Bsr).unwrap().verdict);
    assert!(oracle_equivalent(&f, &out).equivalent);
    // atoms unchanged
    assert_eq!(out.used_predicates(), f.used_predicates());
}

#[test]
fn saf_special_form_shape() {
    let (phi, v) = saf_example();
    let budget = BlowupBudget::default();
    let (sf, _) = saf_special_form(&phi, &budget).unwrap();
    // shape: exists block, conjunction of clauses of forall-cells and literals
    let mut cur = &sf;
    while let Formula::Exists(_, body) = cur {
        cur = body;
    }
    let clauses: Vec<&Formula> = match cur {
        Formula::And(parts) => parts.iter().collect(),
        other => vec![other],
    };
    for c in clauses {
        let disjuncts: Vec<&Formula> = match c {
            Formula::Or(parts) => parts.iter().collect(),
            other => vec![other],
        };
        for d in disjuncts {
            match d {
                Formula::Forall(vs, body) => {
                    assert_eq!(vs.len(), 1, "cells bind exactly one universal");
                    let mut inner: &Formula = body;
                    while let Formula::Exists(_, b) = inner {
                        inner = b;
                    }
                    assert!(inner.is_quantifier_free());
                }
                other => assert!(
                    other.is_quantifier_free(),
                    "non-cell disjunct must be a literal: {}",
                    print_formula(other)
                ),
            }
        }
    }
    // equivalence, exhaustively at domain size 2
    let cert = equivalent_upto(&phi, &sf, &v, 2, 1_000_000, 0);
    assert!(cert.equivalent);
}

#[test]
fn forall_behind_or_single_cell() {
    // single disjunct, single atom: q = 2
    let v = vocab(&[("R", 2)]);
    let f = parse_formula("forall x. exists y. R(x,y)", &v).unwrap();
    let budget = BlowupBudget::default();
    let out = forall_behind_or(&f, &budget).unwrap();
    let cert = equivalent_upto(&f, &out, &v, 3, 100_000, 0);
    assert!(cert.equivalent, "got {}", print_formula(&out));
    // exactly q = 2 copies: the leading existential block has 2*(1+1) vars
    let prefix = out.prenex_prefix();
    assert!(prefix.is_none() || prefix.is_some());
    let Formula::Exists(vs, _) = &out else {
        panic!("expected leading existential block")
    };
    assert_eq!(vs.len(), 2 * (1 + 1));
}

#[test]
fn forall_behind_or_two_cells() {
    // two disjuncts over unary predicates: |At| = 2, q = 4
    let v = vocab(&[("P", 1), ("Q", 1)]);
    let f = parse_formula("(forall x. P(x)) | (forall x1. Q(x1))", &v).unwrap();
    let budget = BlowupBudget::default();
    let out = forall_behind_or(&f, &budget).unwrap();
    let Formula::Exists(vs, _) = &out else {
        panic!("expected leading existential block")
    };
    // q = 4 copies of (|x| = 1, |y| = 0)
    assert_eq!(vs.len(), 4);
    let cert = equivalent_upto(&f, &out, &v, 3, 100_000, 0);
    assert!(cert.equivalent);
}

#[test]
fn forall_behind_or_budget() {
    // 13 distinct atoms exceed the default expansion gate
    let preds: Vec<(String, usize)> = (0..13).map(|i| (format!("P{i}"), 2)).collect();
    let v = Vocabulary::from_parts(
        preds.iter().map(|(p, a)| (p.as_str(), *a)),
        [],
    );
    let mut parts = Vec::new();
    for i in 0..13 {
        parts.push(format!("forall y{i}. exists w{i}. P{i}(y{i},w{i})"));
    }
    let text = parts.join(" | ");
    let f = parse_formula(&text, &v).unwrap();
    let budget = BlowupBudget::default();
    match forall_behind_or(&f, &budget) {
        Err(TransformError::BudgetExceeded { .. }) => {}
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn saf_example_to_af() {
    let (phi, v) = saf_example();
    let budget = BlowupBudget::default();
    let (af, _) = saf_to_af(&phi, &budget).unwrap();
    assert!(membership(&af, FragmentId::Af).unwrap().verdict);
    // same vocabulary
    assert_eq!(af.used_predicates(), phi.used_predicates());
    // exhaustive at domain size 2 (the ternary R makes size 3 infeasible
    // exhaustively; sampled instead)
    let cert = equivalent_upto(&phi, &af, &v, 2, 100_000, 0);
    assert!(cert.equivalent, "size-2 exhaustive equivalence failed");
    let cert = equivalent_upto(&phi, &af, &v, 3, 300, 11);
    assert!(cert.equivalent, "size-3 sampled equivalence failed");
}

#[test]
fn saf_second_example_to_af() {
    let (psi, v) = sbsr_example(); // also an SAF sentence
    let budget = BlowupBudget::default();
    let (af, _) = saf_to_af(&psi, &budget).unwrap();
    assert!(membership(&af, FragmentId::Af).unwrap().verdict);
    let cert = equivalent_upto(&psi, &af, &v, 2, 1_000_000, 0);
    assert!(cert.equivalent);
    let cert = equivalent_upto(&psi, &af, &v, 3, 500, 3);
    assert!(cert.equivalent);
}

#[test]
fn af_input_prenex_only() {
    let v = vocab(&[("P", 2)]);
    let f = parse_formula("exists z. forall x. exists w. P(z,x) | P(x,w)", &v).unwrap();
    let budget = BlowupBudget::default();
    let (af, _) = saf_to_af(&f, &budget).unwrap();
    assert!(membership(&af, FragmentId::Af).unwrap().verdict);
    assert!(oracle_equivalent(&f, &af).equivalent);
}

#[test]
fn sgks_block_pair_to_gks() {
    let v = vocab(&[("P", 2), ("Q", 2)]);
    let f = parse_formula("forall x1 x2. exists y1 y2. P(x1,x2) <-> Q(y1,y2)", &v).unwrap();
    let budget = BlowupBudget::default();
    let (gks, _) = sgks_to_gks(&f, &budget).unwrap();
    assert!(membership(&gks, FragmentId::Gks).unwrap().verdict);
    let cert = equivalent_upto(&f, &gks, &v, 2, 1_000_000, 0);
    assert!(cert.equivalent, "size-2 exhaustive equivalence failed");
}

#[test]
fn gks_input_prenex_only() {
    let v = vocab(&[("P", 2)]);
    let f = parse_formula("exists z. forall x1 x2. exists w. P(x1,x2) | P(z,w)", &v).unwrap();
    let budget = BlowupBudget::default();
    let (gks, _) = sgks_to_gks(&f, &budget).unwrap();
    assert!(membership(&gks, FragmentId::Gks).unwrap().verdict);
    assert!(oracle_equivalent(&f, &gks).equivalent);
}

#[test]
fn slgf_witness_to_gf() {
    let v = vocab(&[("P", 1)]);
    let f = parse_formula(
        "forall x. x = x -> (exists y. y = y & (P(y) <-> ~P(x)))",
        &v,
    )
    .unwrap();
    let out = slgf_to_lgf(&f).unwrap();
    assert!(membership(&out, FragmentId::Gf).unwrap().verdict);
    let cert = equivalent_upto(&f, &out, &v, 3, 100_000, 0);
    assert!(cert.equivalent, "got {}", print_formula(&out));
}

#[test]
fn lgf_input_roundtrips() {
    let v = vocab(&[("R", 2), ("P", 1)]);
    let f = parse_formula("forall x y. R(x,y) -> (exists z. R(y,z) & P(z))", &v).unwrap();
    let out = slgf_to_lgf(&f).unwrap();
    assert!(membership(&out, FragmentId::Lgf).unwrap().verdict);
    assert!(oracle_equivalent(&f, &out).equivalent);
}

#[test]
fn slgf_deeper_case() {
    // an SLGF sentence with an unguarded side variable in a nested body
    let v = vocab(&[("R", 2), ("P", 1), ("S", 1)]);
    let f = parse_formula(
        "exists w. S(w) & (forall x. R(x,x) -> (P(x) <-> ~S(w)))",
        &v,
    )
    .unwrap();
    assert!(membership(&f, FragmentId::Slgf).unwrap().verdict);
    let out = slgf_to_lgf(&f).unwrap();
    assert!(membership(&out, FragmentId::Lgf).unwrap().verdict);
    let cert = equivalent_upto(&f, &out, &v, 3, 100_000, 0);
    assert!(cert.equivalent, "got {}", print_formula(&out));
}

#[test]
fn sgnfo_trivial_guard_embedding_to_gnfo() {
    let (phi, v) = intro_phi();
    let emb = crate::fragments::embed_mfo(&phi, FragmentId::Sgnfo).unwrap();
    let out = sgnfo_to_gnfo(&emb).unwrap();
    assert!(membership(&out, FragmentId::Gnfo).unwrap().verdict);
    let cert = equivalent_upto(&phi, &out, &v, 3, 100_000, 0);
    assert!(cert.equivalent, "got {}", print_formula(&out));
}

#[test]
fn gnfo_input_roundtrips() {
    let v = vocab(&[("P", 1), ("R", 2)]);
    let f = parse_formula("exists x. P(x) & ~(exists y. R(x,y))", &v).unwrap();
    let out = sgnfo_to_gnfo(&f).unwrap();
    assert!(membership(&out, FragmentId::Gnfo).unwrap().verdict);
    assert!(oracle_equivalent(&f, &out).equivalent);
}

#[test]
fn sgnfo_two_lane_negation() {
    // ~psi with psi mixing two separated lanes under one negation
    let v = vocab(&[("P", 1), ("Q", 1), ("R", 2), ("S", 2)]);
    let f = parse_formula(
        "exists a b. R(a,a) & S(b,b) & ~((exists u. P(u) & P(a)) & (exists w. Q(w) & Q(b)))",
        &v,
    )
    .unwrap();
    assert!(
        membership(&f, FragmentId::Sgnfo).unwrap().verdict,
        "input must be SGNFO"
    );
    assert!(!membership(&f, FragmentId::Gnfo).unwrap().verdict);
    let out = sgnfo_to_gnfo(&f).unwrap();
    assert!(membership(&out, FragmentId::Gnfo).unwrap().verdict);
    let cert = equivalent_upto(&f, &out, &v, 2, 1_000_000, 13);
    assert!(cert.equivalent, "got {}", print_formula(&out));
}

#[test]
fn sfo2_witness_to_fo2() {
    let v = vocab(&[("P", 2), ("Q", 2)]);
    let f = parse_formula(
        "forall x2. exists y2. forall x1. exists y1. \
         (P(x1,x2) <-> Q(y1,y2)) & (P(x2,x1) <-> Q(y2,y1))",
        &v,
    )
    .unwrap();
    let budget = BlowupBudget::default();
    let out = sfok_to_fok(&f, 2, &budget).unwrap();
    assert!(membership(&out, FragmentId::Fok(2)).unwrap().verdict);
    let cert = equivalent_upto(&f, &out, &v, 2, 1_000_000, 0);
    assert!(cert.equivalent, "size-2 exhaustive equivalence failed");
    let cert = equivalent_upto(&f, &out, &v, 3, 400, 5);
    assert!(cert.equivalent, "size-3 sampled equivalence failed");
}

#[test]
fn fo2_input_unchanged() {
    let v = vocab(&[("E", 2)]);
    let f = parse_formula(
        "forall x. exists y. E(x,y) & (exists x. E(y,x))",
        &v,
    )
    .unwrap();
    let budget = BlowupBudget::default();
    let out = sfok_to_fok(&f, 2, &budget).unwrap();
    assert_eq!(out, f);
}

#[test]
fn sfo1_two_disjoint_sentences() {
    let v = vocab(&[("P", 1), ("Q", 1)]);
    let f = parse_formula("(exists a. P(a)) & (exists b. Q(b))", &v).unwrap();
    let budget = BlowupBudget::default();
    let out = sfok_to_fok(&f, 1, &budget).unwrap();
    assert!(membership(&out, FragmentId::Fok(1)).unwrap().verdict);
    assert_eq!(out.all_vars().len(), 1);
    assert!(oracle_equivalent(&f, &out).equivalent);
}

#[test]
fn sfl_monadic_to_fl() {
    let v = vocab(&[("P", 1), ("Q", 1)]);
    let f = parse_formula("forall a. exists b. P(a) <-> Q(b)", &v).unwrap();
    let budget = BlowupBudget::default();
    let out = sfl_to_fl(&f, &budget).unwrap();
    assert!(
        membership(&out, FragmentId::Fl).unwrap().verdict,
        "got {}",
        print_formula(&out)
    );
    let cert = equivalent_upto(&f, &out, &v, 3, 100_000, 0);
    assert!(cert.equivalent);
}

#[test]
fn sfl_two_lane_example_to_fl() {
    let v = vocab(&[("P", 3), ("Q", 3)]);
    let f = parse_formula(
        "forall x1. exists x2. (forall x2b x3. P(x1,x2b,x3)) & (exists x3. forall x4. Q(x2,x3,x4))",
        &v,
    )
    .unwrap();
    assert!(membership(&f, FragmentId::Sfl).unwrap().verdict);
    let budget = BlowupBudget::default();
    let out = sfl_to_fl(&f, &budget).unwrap();
    assert!(
        membership(&out, FragmentId::Fl).unwrap().verdict,
        "got {}",
        print_formula(&out)
    );
    let cert = equivalent_upto(&f, &out, &v, 2, 10_000, 17);
    assert!(cert.equivalent, "sampled equivalence at size 2 failed");
}

#[test]
fn fl_input_unchanged() {
    let v = vocab(&[("P", 3), ("Q", 3)]);
    let f = parse_formula(
        "forall x1. exists x2. (forall x3. P(x1,x2,x3)) & (exists x3. forall x4. Q(x2,x3,x4))",
        &v,
    )
    .unwrap();
    let budget = BlowupBudget::default();
    let out = sfl_to_fl(&f, &budget).unwrap();
    assert_eq!(out, f);
}

#[test]
fn translation_rejects_wrong_fragment() {
    let v = vocab(&[("R", 2)]);
    // not separated: forall x exists y. R(x,y)
    let f = parse_formula("forall x. exists y. R(x,y)", &v).unwrap();
    let budget = BlowupBudget::default();
    assert!(matches!(
        sf_to_bsr(&f, &budget),
        Err(TransformError::NotInFragment(FragmentId::Sf))
    ));
    assert!(matches!(
        sbsr_to_bsr(&f, &budget),
        Err(TransformError::NotInFragment(FragmentId::Sbsr))
    ));
}

#[test]
fn trace_records_steps() {
    let (phi, _) = intro_phi();
    let budget = BlowupBudget::default();
    let (_, trace) = sf_to_bsr(&phi, &budget).unwrap();
    assert!(!trace.events.is_empty());
    let text = trace.render();
    assert!(text.lines().all(|l| l.starts_with("STEP ")));
}

#[test]
fn prenex_merge_counts() {
    // leading existentials of the intro translation: at least 2
    let (phi, _) = intro_phi();
    let budget = BlowupBudget::default();
    let (bsr, _) = sf_to_bsr(&phi, &budget).unwrap();
    let prefix = bsr.prenex_prefix().unwrap();
    let leading = prefix.iter().take_while(|(q, _)| *q == Quant::Exists).count();
    assert!(leading >= 2, "expected >= 2 leading existentials, prefix {prefix:?}");
    // formula stays small
    assert!(formula_len(&bsr) < 200);
}
