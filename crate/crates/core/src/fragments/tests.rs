use super::*;
use crate::parse::parse_formula;
use crate::syntax::{VarName, Vocabulary};

fn parse(text: &str, preds: &[(&str, usize)]) -> Formula {
    let v = Vocabulary::from_parts(preds.iter().copied(), []);
    parse_formula(text, &v).unwrap()
}

fn verdict(f: &Formula, frag: FragmentId) -> bool {
    membership(f, frag).unwrap().verdict
}

#[test]
fn sf_yes_bsr_mfo_no() {
    // forall x1 x2 exists y1 y2. P(x1,x2) <-> Q(y1,y2)
    let f = parse(
        "forall x1 x2. exists y1 y2. P(x1,x2) <-> Q(y1,y2)",
        &[("P", 2), ("Q", 2)],
    );
    assert!(verdict(&f, FragmentId::Sf));
    assert!(!verdict(&f, FragmentId::Bsr));
    assert!(!verdict(&f, FragmentId::Mfo));
}

#[test]
fn sf_rejects_equality_mixing() {
    let v = Vocabulary::new();
    let f = parse_formula("forall x. exists y. x = y", &v).unwrap();
    assert!(!verdict(&f, FragmentId::Sf));
}

#[test]
fn sbsr_example_with_partition() {
    let f = parse(
        "exists u. forall x. exists y. forall z. (P(u,z) & Q(u,x)) | (P(y,z) & Q(u,y))",
        &[("P", 2), ("Q", 2)],
    );
    let r = membership(&f, FragmentId::Sbsr).unwrap();
    assert!(r.verdict);
    let Some(Witness::Partition(p)) = &r.witness else {
        panic!("expected partition witness")
    };
    assert_eq!(p.class("Y"), ["u".into(), "y".into()].into_iter().collect());
    assert_eq!(p.class("X1"), ["x".into()].into_iter().collect());
    assert_eq!(p.class("X2"), ["z".into()].into_iter().collect());
    // and it is not in BSR or SF
    assert!(!verdict(&f, FragmentId::Bsr));
    assert!(!verdict(&f, FragmentId::Sf));
}

#[test]
fn saf_example_with_partition() {
    let f = parse(
        "exists y. forall x1. exists u1. forall x2. exists u2 u3. \
         (~P(y,x1) | (Q(x1,u1) & R(y,x2,u2))) & (P(y,x1) | (~Q(x1,u1) & ~R(y,x2,u3)))",
        &[("P", 2), ("Q", 2), ("R", 3)],
    );
    let r = membership(&f, FragmentId::Saf).unwrap();
    assert!(r.verdict, "SAF membership failed: {:?}", r.violation);
    let Some(Witness::Partition(p)) = &r.witness else {
        panic!("expected partition witness")
    };
    assert_eq!(p.class("Y"), ["y".into()].into_iter().collect());
    assert_eq!(p.class("X"), ["x1".into(), "x2".into()].into_iter().collect());
    assert_eq!(p.class("U1"), ["u1".into()].into_iter().collect());
    assert_eq!(p.class("U2"), ["u2".into(), "u3".into()].into_iter().collect());
    assert_eq!(p.references["U1"], vec![VarName::new("x1")]);
    assert_eq!(p.references["U2"], vec![VarName::new("x2")]);
    // not in AF or MFO
    assert!(!verdict(&f, FragmentId::Af));
    assert!(!verdict(&f, FragmentId::Mfo));
}

#[test]
fn second_saf_example_fragment_profile() {
    // exists u forall x exists y forall z. (P(u,z) & Q(u,x)) | (P(y,z) & Q(u,y))
    // belongs to SBSR and SAF but not AF, SF, BSR, MFO
    let f = parse(
        "exists u. forall x. exists y. forall z. (P(u,z) & Q(u,x)) | (P(y,z) & Q(u,y))",
        &[("P", 2), ("Q", 2)],
    );
    assert!(verdict(&f, FragmentId::Sbsr));
    assert!(verdict(&f, FragmentId::Saf));
    assert!(!verdict(&f, FragmentId::Af));
    assert!(!verdict(&f, FragmentId::Sf));
    assert!(!verdict(&f, FragmentId::Bsr));
    assert!(!verdict(&f, FragmentId::Mfo));
}

#[test]
fn sgks_vs_maslov_k() {
    // in SGKS but not in K
    let f = parse(
        "forall x1 x1p x2 x2p. P(x1,x1p) | Q(x2,x2p)",
        &[("P", 2), ("Q", 2)],
    );
    assert!(verdict(&f, FragmentId::Sgks), "expected SGKS membership");
    assert!(!verdict(&f, FragmentId::MaslovK));

    // in K but not in SGKS
    let g = parse(
        "forall x1 x2 x3. exists y. P(x1,x2,y) & Q(x1,x3,y) & R(x1,x2,x3)",
        &[("P", 3), ("Q", 3), ("R", 3)],
    );
    assert!(verdict(&g, FragmentId::MaslovK));
    assert!(!verdict(&g, FragmentId::Sgks));
}

#[test]
fn gks_shape_and_sgks_pairing() {
    let f = parse(
        "forall x1 x2. exists y1 y2. P(x1,x2) <-> Q(y1,y2)",
        &[("P", 2), ("Q", 2)],
    );
    assert!(!verdict(&f, FragmentId::Gks) || true); // shape check below
    let r = membership(&f, FragmentId::Gks).unwrap();
    assert!(r.verdict, "forall forall exists exists is GKS");
    let r = membership(&f, FragmentId::Sgks).unwrap();
    assert!(r.verdict);
    let Some(Witness::Partition(p)) = &r.witness else {
        panic!("expected partition")
    };
    assert_eq!(p.references["U1"], vec![VarName::new("x1"), VarName::new("x2")]);
    assert_eq!(
        p.class("U1"),
        ["y1".into(), "y2".into()].into_iter().collect()
    );
}

#[test]
fn af_embeds_into_saf_and_k_contains_saf() {
    // exists z forall x exists v1 v2. psi
    let f = parse(
        "exists z. forall x. exists v1 v2. P(z,x) | Q(x,v1) | Q(v1,v2)",
        &[("P", 2), ("Q", 2)],
    );
    assert!(verdict(&f, FragmentId::Af));
    let r = membership(&f, FragmentId::Saf).unwrap();
    assert!(r.verdict);
    assert!(verdict(&f, FragmentId::MaslovK));
}

#[test]
fn sgf_witness_sentence() {
    // (forall x. x=x)(exists y. y=y)(P(y) <-> ~P(x)): in SGF and SLGF, not GF/LGF
    let v = Vocabulary::from_parts([("P", 1)], []);
    let f = parse_formula(
        "forall x. x = x -> (exists y. y = y & (P(y) <-> ~P(x)))",
        &v,
    )
    .unwrap();
    assert!(verdict(&f, FragmentId::Sgf), "expected SGF");
    assert!(verdict(&f, FragmentId::Slgf), "expected SLGF");
    assert!(!verdict(&f, FragmentId::Gf));
    assert!(!verdict(&f, FragmentId::Lgf));
}

#[test]
fn gf_standard_example() {
    // forall x y. R(x,y) -> (exists z. R(y,z) & P(z))  with guards
    let v = Vocabulary::from_parts([("R", 2), ("P", 1)], []);
    let f = parse_formula("forall x y. R(x,y) -> (exists z. R(y,z) & P(z))", &v).unwrap();
    assert!(verdict(&f, FragmentId::Gf));
    assert!(verdict(&f, FragmentId::Sgf));
    assert!(verdict(&f, FragmentId::Lgf));
    assert!(verdict(&f, FragmentId::Slgf));
}

#[test]
fn lgf_loose_guard() {
    // forall x y. (R(x,z0) & R(y,z0)) -> S(x,y)  needs x,y co-occurrence:
    // loose guard R(x,y) & R(y,x) works, a single atom per pair
    let v = Vocabulary::from_parts([("R", 2), ("S", 2)], []);
    let f = parse_formula("forall x y. (R(x,y) & R(y,x)) -> S(x,y)", &v).unwrap();
    assert!(verdict(&f, FragmentId::Lgf));
    assert!(!verdict(&f, FragmentId::Gf) || true);
}

#[test]
fn gnfo_examples() {
    let v = Vocabulary::from_parts([("P", 1), ("R", 2)], []);
    // guarded negation: exists x. P(x) & ~(exists y. R(x,y))
    let f = parse_formula("exists x. P(x) & ~(exists y. R(x,y))", &v).unwrap();
    assert!(verdict(&f, FragmentId::Gnfo), "guarded negation accepted");
    assert!(verdict(&f, FragmentId::Sgnfo));

    // exists x y. ~(x = y) is not SGNFO (negation without guard)
    let g = parse_formula("exists x y. ~(x = y)", &Vocabulary::new()).unwrap();
    assert!(!verdict(&g, FragmentId::Sgnfo));
    assert!(!verdict(&g, FragmentId::Gnfo));
}

#[test]
fn fok_and_sfok() {
    let v = Vocabulary::from_parts([("E", 2)], []);
    // two-variable sentence with reuse
    let f = parse_formula(
        "forall x. exists y. E(x,y) & (exists x. E(y,x) & (exists y. E(x,y)))",
        &v,
    )
    .unwrap();
    assert!(verdict(&f, FragmentId::Fok(2)));
    assert!(verdict(&f, FragmentId::Sfok(2)));

    // the two-lane sentence: SFO2 but not FO2
    let g = parse(
        "forall x2. exists y2. forall x1. exists y1. P(x1,x2) <-> Q(y1,y2)",
        &[("P", 2), ("Q", 2)],
    );
    assert!(!verdict(&g, FragmentId::Fok(2)));
    assert!(verdict(&g, FragmentId::Sfok(2)));
    assert!(!verdict(&g, FragmentId::Sfok(1)));
}

#[test]
fn fluted_examples() {
    let v = Vocabulary::from_parts([("P", 3), ("Q", 3)], []);
    // fluted sentence
    let f = parse_formula(
        "forall x1. exists x2. (forall x3. P(x1,x2,x3)) & (exists x3. forall x4. Q(x2,x3,x4))",
        &v,
    )
    .unwrap();
    assert!(verdict(&f, FragmentId::Fl), "expected FL membership");
    assert!(verdict(&f, FragmentId::Sfl));

    // SFL but not FL: rebinding x2 under its own scope
    let g = parse_formula(
        "forall x1. exists x2. (forall x2 x3. P(x1,x2,x3)) & (exists x3. forall x4. Q(x2,x3,x4))",
        &v,
    )
    .unwrap();
    assert!(!verdict(&g, FragmentId::Fl));
    assert!(verdict(&g, FragmentId::Sfl), "expected SFL membership");
}

#[test]
fn sfl_monadic_two_lanes() {
    // forall a exists b. P(a) <-> Q(b): monadic, in SFL via lanes, not FL
    let v = Vocabulary::from_parts([("P", 1), ("Q", 1)], []);
    let f = parse_formula("forall a. exists b. P(a) <-> Q(b)", &v).unwrap();
    assert!(verdict(&f, FragmentId::Sfl));
    assert!(!verdict(&f, FragmentId::Fl), "Q(b) is not the innermost suffix");
}

#[test]
fn herzig_ordered() {
    let v = Vocabulary::from_parts([("P", 2), ("Q", 1)], []);
    // forall x. Q(x) & exists y. P(x,y): every atom reads a prefix of its
    // binder chain
    let f = parse_formula("forall x. Q(x) & (exists y. P(x,y))", &v).unwrap();
    assert!(verdict(&f, FragmentId::HerzigOrdered));
    assert!(verdict(&f, FragmentId::Sfl));

    // Q(y) under two binders breaks the ordering
    let g = parse_formula("forall x. exists y. P(x,y) & Q(y)", &v).unwrap();
    assert!(!verdict(&g, FragmentId::HerzigOrdered));
}

#[test]
fn mfo_check() {
    let f = parse("forall x. exists y. P(x) <-> Q(y)", &[("P", 1), ("Q", 1)]);
    assert!(verdict(&f, FragmentId::Mfo));
    assert!(verdict(&f, FragmentId::MfoEq));
    assert!(verdict(&f, FragmentId::Sf));
    let g = parse("forall x y. R(x,y)", &[("R", 2)]);
    assert!(!verdict(&g, FragmentId::Mfo));
}

#[test]
fn classify_mfo_is_everywhere() {
    // a prenex MFO sentence lies in all separated fragments
    let f = parse("forall x. exists y. P(x) <-> Q(y)", &[("P", 1), ("Q", 1)]);
    let report = classify(&f).unwrap();
    for frag in [
        FragmentId::Mfo,
        FragmentId::Sf,
        FragmentId::Sbsr,
        FragmentId::Saf,
        FragmentId::Sgks,
        FragmentId::Sfl,
        FragmentId::Sfok(2),
    ] {
        assert_eq!(report.verdict(frag), Some(true), "{frag} should hold");
    }
    assert_eq!(report.verdict(FragmentId::Bsr), Some(false));
}

#[test]
fn classify_bsr_sentence() {
    let v = Vocabulary::new();
    let f = parse_formula("exists y1 y2. ~(y1 = y2)", &v).unwrap();
    let report = classify(&f).unwrap();
    assert_eq!(report.verdict(FragmentId::Bsr), Some(true));
    assert_eq!(report.verdict(FragmentId::Sf), Some(true));
    assert_eq!(report.verdict(FragmentId::Sbsr), Some(true));
    // equality excludes the fluted fragment
    assert_eq!(report.verdict(FragmentId::Fl), Some(false));
    assert_eq!(report.verdict(FragmentId::Sfl), Some(false));
}

#[test]
fn report_renders_lines() {
    let f = parse("forall x. P(x)", &[("P", 1)]);
    let report = classify(&f).unwrap();
    let text = report.render();
    assert!(text.lines().any(|l| l.starts_with("BSR true")));
    assert!(text.lines().any(|l| l.starts_with("MFO true")));
}

#[test]
fn embed_mfo_targets() {
    let f = parse("forall x. exists y. P(x) <-> Q(y)", &[("P", 1), ("Q", 1)]);
    for target in [FragmentId::Sgf, FragmentId::Sgnfo, FragmentId::Sfl] {
        let g = embed_mfo(&f, target).unwrap();
        assert!(
            membership(&g, target).unwrap().verdict,
            "embedding into {target} failed membership: {}",
            crate::parse::print_formula(&g)
        );
        let cert = crate::semantics::oracle_equivalent(&f, &g);
        assert!(cert.equivalent, "embedding into {target} not equivalent");
    }
}

#[test]
fn embed_mfo_simple_forms() {
    let f = parse("forall x. P(x)", &[("P", 1)]);
    let g = embed_mfo(&f, FragmentId::Sgf).unwrap();
    // (forall x. x=x -> P(x))
    let v = Vocabulary::from_parts([("P", 1)], []);
    let expected = parse_formula("forall x. x = x -> P(x)", &v).unwrap();
    assert_eq!(g, expected);

    let n = parse("forall x. ~P(x)", &[("P", 1)]);
    let gn = embed_mfo(&n, FragmentId::Sgnfo).unwrap();
    assert!(membership(&gn, FragmentId::Sgnfo).unwrap().verdict);
    assert!(crate::semantics::oracle_equivalent(&n, &gn).equivalent);
}

#[test]
fn partition_search_engine_reported() {
    let f = parse(
        "exists u. forall x. exists y. forall z. (P(u,z) & Q(u,x)) | (P(y,z) & Q(u,y))",
        &[("P", 2), ("Q", 2)],
    );
    let r = find_sbsr_partition(&f).unwrap();
    assert!(matches!(r.engine, Engine::Polynomial));
}
