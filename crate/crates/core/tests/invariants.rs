use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use acms_torsion::acms::AcmStructure;
use acms_torsion::builtins::{builtin, ParamValue, Params};
use acms_torsion::classify::{detect_type, DEFAULT_TOL};
use acms_torsion::exterior::{d_frame_constant, form_inner, interior, wedge, FrameVector, KForm};
use acms_torsion::identities::point_fields;
use acms_torsion::model::{Expr, Scope};
use acms_torsion::selftest::random_torsion;
use acms_torsion::tensor::Tensor3;
use acms_torsion::torsion::{decompose, project_components, torsion_space_residual, MODULE_COUNT};

const DIM: usize = 5;

fn form(degree: usize) -> impl Strategy<Value = KForm> {
    let len = binom(DIM, degree);
    prop::collection::vec(-2.0..2.0f64, len).prop_map(move |v| {
        let mut it = v.into_iter();
        KForm::from_fn(DIM, degree, |_| it.next().unwrap())
    })
}

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn vector() -> impl Strategy<Value = FrameVector> {
    prop::collection::vec(-2.0..2.0f64, DIM).prop_map(FrameVector::new)
}

fn close(a: &KForm, b: &KForm, tol: f64) -> bool {
    a.sub(b).max_abs() <= tol * (1.0 + a.max_abs().max(b.max_abs()))
}

/// Brackets of a left-invariant frame on a semidirect product `R ⋉ R^4`, which satisfy Jacobi.
fn solvable_brackets(entries: &[f64]) -> Tensor3 {
    let mut c = Tensor3::zeros(DIM);
    for j in 1..DIM {
        for k in 1..DIM {
            let a = entries[(j - 1) * 4 + (k - 1)];
            c.set(0, j, k, a);
            c.set(j, 0, k, -a);
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wedge_is_graded_commutative(a in form(1), b in form(2)) {
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap();
        prop_assert!(close(&ab, &ba, 1e-12));
        let aa = wedge(&a, &a).unwrap();
        prop_assert!(aa.max_abs() <= 1e-12);
    }

    #[test]
    fn wedge_is_associative(a in form(1), b in form(1), c in form(2)) {
        let left = wedge(&wedge(&a, &b).unwrap(), &c).unwrap();
        let right = wedge(&a, &wedge(&b, &c).unwrap()).unwrap();
        prop_assert!(close(&left, &right, 1e-12));
    }

    #[test]
    fn interior_is_an_antiderivation(x in vector(), a in form(1), b in form(2)) {
        let lhs = interior(&x, &wedge(&a, &b).unwrap()).unwrap();
        let ia = interior(&x, &a).unwrap().coefficients()[0];
        let rhs = b.scaled(ia).sub(&wedge(&a, &interior(&x, &b).unwrap()).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-12));
        let twice = interior(&x, &interior(&x, &b).unwrap()).unwrap();
        prop_assert!(twice.max_abs() <= 1e-12);
    }

    #[test]
    fn inner_product_matches_tuple_sum(a in form(2), b in form(2)) {
        let m = a.to_matrix();
        let n = b.to_matrix();
        let full: f64 = m.component_mul(&n).sum();
        prop_assert!((form_inner(&a, &b).unwrap() - 0.5 * full).abs() <= 1e-12 * (1.0 + full.abs()));
    }

    #[test]
    fn d_squared_vanishes_for_lie_algebra_brackets(
        entries in prop::collection::vec(-1.0..1.0f64, 16),
        a in form(1),
        b in form(2),
    ) {
        let c = solvable_brackets(&entries);
        let dda = d_frame_constant(&c, &d_frame_constant(&c, &a).unwrap()).unwrap();
        let ddb = d_frame_constant(&c, &d_frame_constant(&c, &b).unwrap()).unwrap();
        prop_assert!(dda.max_abs() <= 1e-12 && ddb.max_abs() <= 1e-12);
        let leibniz = d_frame_constant(&c, &wedge(&a, &b).unwrap()).unwrap();
        let expected = wedge(&d_frame_constant(&c, &a).unwrap(), &b)
            .unwrap()
            .sub(&wedge(&a, &d_frame_constant(&c, &b).unwrap()).unwrap());
        prop_assert!(close(&leibniz, &expected, 1e-12));
    }

    #[test]
    fn projections_partition_random_torsion(seed in any::<u64>(), n in 1usize..=3) {
        let s = AcmStructure::canonical(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_torsion(&s, &mut rng);
        prop_assert!(torsion_space_residual(&s, &t) <= 1e-12 * t.norm());
        let parts = project_components(&s, &t);
        let sum = parts.iter().fold(Tensor3::zeros(s.dim()), |acc, p| acc.add(p));
        prop_assert!(sum.sub(&t).norm() <= 1e-12 * t.norm());
        let squares: f64 = parts.iter().map(|p| p.norm().powi(2)).sum();
        prop_assert!((squares - t.norm().powi(2)).abs() <= 1e-12 * t.norm().powi(2));
    }

    #[test]
    fn type_is_scale_invariant(seed in any::<u64>(), scale in 1e-3..1e3f64) {
        let s = AcmStructure::canonical(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_torsion(&s, &mut rng);
        let a = detect_type(&decompose(&s, t.clone()), DEFAULT_TOL);
        let b = detect_type(&decompose(&s, t.scaled(scale)), DEFAULT_TOL);
        prop_assert_eq!(a.active_set, b.active_set);
    }

    #[test]
    fn synthetic_models_have_the_requested_type(
        seed in 0u64..1000,
        mask in 1u16..(1 << MODULE_COUNT),
    ) {
        let modules: Vec<f64> = (1..=MODULE_COUNT)
            .filter(|k| mask >> (k - 1) & 1 == 1 && ![1, 3].contains(k))
            .map(|k| k as f64)
            .collect();
        prop_assume!(!modules.is_empty());
        let mut p = Params::new();
        p.insert("n".into(), ParamValue::Scalar(2.0));
        p.insert("seed".into(), ParamValue::Scalar(seed as f64));
        p.insert("modules".into(), ParamValue::Vector(modules.clone()));
        let b = builtin("synthetic-random", &p).unwrap();
        let f = point_fields(&b.structure, &b.model, &vec![0.0; 5]).unwrap();
        let r = detect_type(&f.xi, DEFAULT_TOL);
        let expected: Vec<usize> = modules.iter().map(|&k| k as usize).collect();
        prop_assert_eq!(r.active_set, expected);
    }

    #[test]
    fn parsed_polynomials_evaluate_like_rust(a in -3.0..3.0f64, b in 0.1..3.0f64, x in -2.0..2.0f64, y in 0.1..2.0f64) {
        let scope = Scope::new(2).with_param("a", a).with_param("b", b);
        let e = Expr::parse("a*x1^2 - x2/b + exp(-x1)*ln(x2)", &scope).unwrap();
        let expected = a * x * x - y / b + (-x).exp() * y.ln();
        prop_assert!((e.eval(&[x, y]) - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }
}
