mod common;

use common::step_fn;
use proptest::prelude::*;
use qfock::operators::{
    apply, classify, decompose_isometry, moment_isometry_check, DiscreteOperator, OperatorSpec,
};
use qfock::sampling;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_isometries_preserve_moments(seed in any::<u64>(), pieces in 1usize..7, f in step_fn(2.0, 6, 0.45), g in step_fn(2.0, 6, 0.45)) {
        let t = sampling::isometry(&mut sampling::rng(seed), 2.0, pieces);
        prop_assert!(moment_isometry_check(&t, &[(f.clone(), g.clone())], 10).unwrap().passed);
        let cl = classify(&t, &[(f, g)], 6).unwrap();
        prop_assert!(cl.well_defined && cl.isometry && cl.unitary && cl.contraction_sufficient);
    }

    #[test]
    fn decomposition_round_trips_on_finer_bases(seed in any::<u64>(), pieces in 1usize..5, refine in 1usize..4) {
        let t = sampling::isometry(&mut sampling::rng(seed), 2.0, pieces);
        let basis = sampling::uniform_partition(2.0, pieces * refine);
        let op = DiscreteOperator::from_spec(&t, basis.clone()).unwrap();
        let dec = decompose_isometry(&op).unwrap().unwrap();
        prop_assert!(dec.residual <= 1e-12);
        let rebuilt = dec.operator();
        for cell in basis {
            let chi = qfock::StepFunction::indicator(cell);
            let a = apply(&t, &chi).unwrap();
            let b = apply(&rebuilt, &chi).unwrap();
            prop_assert_eq!(a.cells(), b.cells());
        }
    }

    #[test]
    fn composition_applies_right_to_left(seed in any::<u64>(), f in step_fn(1.0, 6, 0.45)) {
        let mut rng = sampling::rng(seed);
        let s = sampling::contraction_factor(&mut rng, 1.0);
        let t = sampling::contraction_factor(&mut rng, 1.0);
        let composed = s.clone().then_after(t.clone());
        prop_assert_eq!(apply(&composed, &f).unwrap(), apply(&s, &apply(&t, &f).unwrap()).unwrap());
    }

    #[test]
    fn structural_contractions_do_not_increase_norms(seed in any::<u64>(), f in step_fn(1.0, 6, 0.45)) {
        let t = sampling::contraction(&mut sampling::rng(seed), 1.0, 4);
        let tf = apply(&t, &f).unwrap();
        prop_assert!(tf.norm_inf() <= f.norm_inf() * (1.0 + 1e-12));
        prop_assert!(tf.norm_2() <= f.norm_2() * (1.0 + 1e-12));
    }
}

#[test]
fn classification_implications_hold() {
    let mut rng = sampling::rng(99);
    for _ in 0..40 {
        let t = sampling::contraction(&mut rng, 1.0, 3);
        let f = sampling::step_function(&mut rng, 1.0, 6, 0.45);
        let cl = classify(&t, &[(f.clone(), f)], 6).unwrap();
        assert!(!cl.unitary || cl.isometry);
        assert!(!cl.isometry || cl.well_defined);
        assert!(!cl.contraction_sufficient || cl.necessary_ok);
    }
    let avg = OperatorSpec::Average {
        window: qfock::Cell::interval(0.0, 1.0).unwrap(),
    };
    let f = sampling::step_function(&mut rng, 1.0, 6, 0.45);
    let cl = classify(&avg, &[(f.clone(), f)], 6).unwrap();
    assert!(cl.necessary_ok && !cl.contraction_sufficient);
}
