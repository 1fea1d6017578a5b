use ndarray::Array2;
use score_core::submodcheck::{
    as_set_function, consistency_run, counterexample_search, draw_batch, exhaustive_dr_check, exhaustive_lattice_check,
    DrawDomain, SearchParams, DEFAULT_TOLERANCE,
};
use score_core::{total_loss, EmbeddingBatch, LossConfig, Objective, ScoreError, Verdict};

fn cfg(obj: Objective) -> LossConfig {
    LossConfig::new(obj)
}

#[test]
fn dr_and_lattice_forms_agree() {
    for obj in Objective::ALL {
        for seed in 0..8u64 {
            for domain in [DrawDomain::NonNegative, DrawDomain::Signed] {
                let n = 4 + seed as usize % 3;
                let b = draw_batch(n, 4, domain, seed);
                let dr = exhaustive_dr_check(obj, &b, &cfg(obj), DEFAULT_TOLERANCE).unwrap();
                let lat = exhaustive_lattice_check(obj, &b, &cfg(obj), DEFAULT_TOLERANCE).unwrap();
                assert_eq!(dr.verdict, lat.verdict, "{obj} seed {seed} {domain:?}");
            }
        }
    }
}

#[test]
fn searches_are_deterministic() {
    let params = SearchParams::new(6, 130, 21);
    for obj in [Objective::GcCf, Objective::SupCon, Objective::Fl] {
        let a = consistency_run(obj, &cfg(obj), &params).unwrap();
        let b = consistency_run(obj, &cfg(obj), &params).unwrap();
        assert_eq!(a, b);
        let a = counterexample_search(obj, &cfg(obj), 6, 300, 4).unwrap();
        let b = counterexample_search(obj, &cfg(obj), 6, 300, 4).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn ground_set_bound_is_enforced() {
    let big = draw_batch(13, 4, DrawDomain::NonNegative, 0);
    let err = exhaustive_dr_check(Objective::Fl, &big, &cfg(Objective::Fl), DEFAULT_TOLERANCE).unwrap_err();
    assert_eq!(err, ScoreError::GroundSetTooLarge { n: 13, max: 12 });
    assert!(matches!(
        counterexample_search(Objective::Fl, &cfg(Objective::Fl), 20, 10, 0),
        Err(ScoreError::GroundSetTooLarge { n: 20, .. })
    ));
}

fn orthonormal(n: usize) -> EmbeddingBatch {
    EmbeddingBatch::with_default_ids(Array2::eye(n), vec![0; n]).unwrap()
}

#[test]
fn modular_functions_have_zero_margin() {
    let b = orthonormal(5);
    for obj in [Objective::GcSf, Objective::GcCf] {
        let r = exhaustive_dr_check(obj, &b, &cfg(obj), DEFAULT_TOLERANCE).unwrap();
        assert_eq!(r.violation_count, 0);
        assert!(r.min_margin.abs() < 1e-12);
    }
}

#[test]
fn modular_surrogate_is_additive() {
    let b = orthonormal(3);
    for obj in [Objective::GcSf, Objective::GcCf] {
        let f = as_set_function(obj, &b, &cfg(obj)).unwrap();
        let parts = [(vec![0], vec![1, 2]), (vec![1], vec![2]), (vec![0, 2], vec![1])];
        for (x, y) in parts {
            let mut xy = x.clone();
            xy.extend(&y);
            let lhs = f.eval(&xy).unwrap();
            let rhs = f.eval(&x).unwrap() + f.eval(&y).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{obj}");
        }
    }
}

#[test]
fn facility_location_is_consistent_on_random_kernels() {
    for seed in 0..20 {
        let b = draw_batch(6, 4, DrawDomain::NonNegative, 900 + seed);
        let r = exhaustive_dr_check(Objective::Fl, &b, &cfg(Objective::Fl), DEFAULT_TOLERANCE).unwrap();
        assert_eq!(r.verdict, Verdict::SubmodularConsistent);
    }
    let b = draw_batch(6, 4, DrawDomain::NonNegative, 3);
    let f = as_set_function(Objective::Fl, &b, &cfg(Objective::Fl)).unwrap();
    assert_eq!(f.eval(&[0, 1, 2, 3, 4, 5]).unwrap(), 0.0);
}

#[test]
fn known_non_submodular_objectives_are_caught() {
    for obj in [Objective::SupCon, Objective::Triplet, Objective::Snn] {
        let r = counterexample_search(obj, &cfg(obj), 6, 1000, 7).unwrap();
        assert_eq!(r.verdict, Verdict::Violated, "{obj}");
        let v = r.first_violation().unwrap();
        let x = v.x.unwrap();
        assert!(v.a.iter().all(|i| v.b.contains(i)));
        assert!(!v.b.contains(&x));
        assert!(v.gain_a < v.gain_b || v.gain_a.is_nan() || v.gain_b.is_nan());
    }
}

#[test]
fn graph_cut_survives_the_full_budget() {
    let r = consistency_run(Objective::GcCf, &cfg(Objective::GcCf), &SearchParams::new(6, 1000, 7)).unwrap();
    assert_eq!(r.trials, 1000);
    assert_eq!(r.violation_count, 0);
    assert!(r.min_margin >= -1e-9);
}

#[test]
fn evaluator_matches_per_class_terms() {
    for obj in Objective::ALL {
        let mut z = draw_batch(6, 4, DrawDomain::Signed, 12).vectors().clone();
        z[[0, 0]] += 0.5;
        let b = EmbeddingBatch::with_default_ids(z, vec![0, 1, 0, 1, 0, 1]).unwrap();
        let r = total_loss(&b, &cfg(obj)).unwrap();
        let f = as_set_function(obj, &b, &cfg(obj)).unwrap();
        for (class, members) in b.class_members() {
            let v = f.eval(&members).unwrap();
            assert!((v - r.per_class[&class]).abs() <= 1e-12 * (1.0 + v.abs()), "{obj}");
        }
    }
}
