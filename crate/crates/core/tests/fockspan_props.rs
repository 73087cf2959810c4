mod common;

use common::{complex_in_disk, step_fn};
use num_complex::Complex64;
use proptest::prelude::*;
use qfock::fockspan::{
    contraction_witness_search, counterexample, gamma2_apply, semigroup_apply, span_norm, FockSpan,
};
use qfock::operators::OperatorSpec;
use qfock::{sampling, Cell, CouplingConstant, StepFunction};

fn c1() -> CouplingConstant {
    CouplingConstant::new(1.0).unwrap()
}

fn span(len: usize, length: f64) -> impl Strategy<Value = FockSpan> {
    (
        prop::collection::vec(complex_in_disk(1.0), len),
        prop::collection::vec(step_fn(length, 6, 0.45), len),
    )
        .prop_map(|(a, f)| FockSpan::new(a, f, c1()).unwrap())
}

fn average() -> OperatorSpec {
    OperatorSpec::Average {
        window: Cell::interval(0.0, 1.0).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isometries_preserve_span_norms(seed in any::<u64>(), xi in (1usize..5).prop_flat_map(|l| span(l, 2.0))) {
        let t = sampling::isometry(&mut sampling::rng(seed), 2.0, 4);
        let before = span_norm(&xi).unwrap();
        let after = span_norm(&gamma2_apply(&t, &xi).unwrap()).unwrap();
        prop_assert!((before - after).abs() <= 1e-10 * before.max(1e-8));
    }

    #[test]
    fn single_vectors_contract_under_average(f in step_fn(2.0, 6, 0.45)) {
        let xi = FockSpan::single(f, c1()).unwrap();
        let after = span_norm(&gamma2_apply(&average(), &xi).unwrap()).unwrap();
        prop_assert!(after <= span_norm(&xi).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn structural_contractions_contract_spans(seed in any::<u64>(), xi in (1usize..4).prop_flat_map(|l| span(l, 1.0))) {
        let t = sampling::contraction(&mut sampling::rng(seed), 1.0, 3);
        let after = span_norm(&gamma2_apply(&t, &xi).unwrap()).unwrap();
        prop_assert!(after <= span_norm(&xi).unwrap() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn semigroup_law(xi in span(3, 1.0), a in 0.0..2.0f64, b in 0.0..2.0f64, s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let (z1, z2) = (Complex64::new(-a, s), Complex64::new(-b, t));
        let stepwise = semigroup_apply(z1, &semigroup_apply(z2, &xi).unwrap()).unwrap();
        let direct = semigroup_apply(z1 + z2, &xi).unwrap();
        for (f, g) in stepwise.functions().iter().zip(direct.functions()) {
            prop_assert_eq!(f.cells(), g.cells());
            for (x, y) in f.values().iter().zip(g.values()) {
                prop_assert!((x - y).norm() <= 16.0 * f64::EPSILON * x.norm());
            }
        }
    }
}

#[test]
fn average_contracts_single_vectors_but_not_spans() {
    let mut rng = sampling::rng(21);
    for _ in 0..200 {
        let f = sampling::step_function(&mut rng, 2.0, 6, 0.45);
        let xi = FockSpan::single(f, c1()).unwrap();
        assert!(
            span_norm(&gamma2_apply(&average(), &xi).unwrap()).unwrap() <= span_norm(&xi).unwrap()
        );
    }
    let ce = counterexample(0.4, c1()).unwrap();
    let xi = ce.witness_span().unwrap();
    let grown = span_norm(&gamma2_apply(&average(), &xi).unwrap()).unwrap();
    assert!(grown > span_norm(&xi).unwrap() * (1.0 + 1e-3));
}

#[test]
fn witness_search_is_deterministic_and_sound() {
    let first = contraction_witness_search(&average(), c1(), 50, 3)
        .unwrap()
        .unwrap();
    let again = contraction_witness_search(&average(), c1(), 50, 3)
        .unwrap()
        .unwrap();
    assert_eq!(first, again);
    let after = span_norm(&gamma2_apply(&average(), &first.span).unwrap()).unwrap();
    assert!(after > span_norm(&first.span).unwrap());

    for seed in 0..5 {
        let iso = sampling::isometry(&mut sampling::rng(seed), 2.0, 3);
        assert!(contraction_witness_search(&iso, c1(), 100, seed)
            .unwrap()
            .is_none());
        let half = OperatorSpec::Mult {
            phi: StepFunction::constant(
                Cell::interval(0.0, 1.0).unwrap(),
                Complex64::new(0.5, 0.0),
            ),
        };
        assert!(contraction_witness_search(&half, c1(), 100, seed)
            .unwrap()
            .is_none());
    }
}

#[test]
fn ill_defined_operators_are_rejected() {
    let grow = OperatorSpec::ScalarExp {
        z: Complex64::new(0.2, 0.0),
    };
    let xi = FockSpan::vacuum(1, c1());
    assert!(gamma2_apply(&grow, &xi).is_err());
    assert!(contraction_witness_search(&grow, c1(), 10, 0).is_err());
}
