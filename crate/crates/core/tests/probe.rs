use sepfrag_core::fragments::{membership, FragmentId};
use sepfrag_core::parse::parse_formula;
use sepfrag_core::semantics::equivalent_upto;
use sepfrag_core::syntax::{formula_len, Vocabulary};
use sepfrag_core::transforms::{saf_to_af, BlowupBudget};
use std::time::Instant;

#[test]
fn probe_saf() {
    let v = Vocabulary::from_parts([("P", 2), ("Q", 2), ("R", 3)], []);
    let phi = parse_formula(
        "exists y. forall x1. exists u1. forall x2. exists u2 u3. \
         (~P(y,x1) | (Q(x1,u1) & R(y,x2,u2))) & (P(y,x1) | (~Q(x1,u1) & ~R(y,x2,u3)))",
        &v,
    )
    .unwrap();
    let t0 = Instant::now();
    let (af, _) = saf_to_af(&phi, &BlowupBudget::default()).unwrap();
    eprintln!("saf_to_af: {:?}, output len {}", t0.elapsed(), formula_len(&af));
    let prefix = af.prenex_prefix().unwrap();
    eprintln!("prefix: {} quantifiers", prefix.len());
    let t0 = Instant::now();
    assert!(membership(&af, FragmentId::Af).unwrap().verdict);
    eprintln!("membership: {:?}", t0.elapsed());
    let t0 = Instant::now();
    let cert = equivalent_upto(&phi, &af, &v, 2, 100_000, 0);
    eprintln!("size-2 oracle ({} structs): {:?} -> {}", cert.structures_checked, t0.elapsed(), cert.equivalent);
    assert!(cert.equivalent);
    let t0 = Instant::now();
    let cert = equivalent_upto(&phi, &af, &v, 3, 66_000, 0);
    eprintln!("size-3 oracle w/ 10k samples ({} structs): {:?} -> {}", cert.structures_checked, t0.elapsed(), cert.equivalent);
    assert!(cert.equivalent);
}
