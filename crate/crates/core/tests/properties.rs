use num_complex::Complex64;
use proptest::prelude::*;

use wigner_ldp::dyson::{hyperbolic_distance, solve_dyson, solve_real, SpectrumModel};
use wigner_ldp::profile::sigma_quadratic_form;
use wigner_ldp::ratefn::{rate_function, RateOptions};
use wigner_ldp::simplex::project_to_simplex;
use wigner_ldp::{SimplexVector, VarianceProfile};

fn profiles() -> impl Strategy<Value = VarianceProfile> {
    (1usize..=3).prop_flat_map(|p| {
        (prop::collection::vec(0.1f64..1.0, p), prop::collection::vec(0.1f64..3.0, p * p)).prop_map(move |(w, s)| {
            let total: f64 = w.iter().sum();
            let weights = w.iter().map(|x| x / total).collect();
            let sigma = (0..p)
                .map(|k| (0..p).map(|l| s[k.min(l) * p + k.max(l)]).collect())
                .collect();
            VarianceProfile::new(weights, sigma, "random").unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dyson_solution_is_herglotz(profile in profiles(), re in -4.0f64..4.0, im in 0.01f64..3.0) {
        let z = Complex64::new(re, im);
        let sol = solve_dyson(&profile, z, None).unwrap();
        for m in &sol.m {
            prop_assert!(m.im < 0.0);
            prop_assert!(m.norm() <= 1.0 / im + 1e-9);
        }
        prop_assert!(sol.equation_residual < 1e-8);
    }

    #[test]
    fn hyperbolic_distance_is_a_metric(a in -3.0f64..3.0, b in 0.01f64..3.0, c in -3.0f64..3.0, d in 0.01f64..3.0) {
        let u = Complex64::new(a, b);
        let v = Complex64::new(c, d);
        prop_assert!(hyperbolic_distance(u, u).abs() < 1e-12);
        let (x, y) = (hyperbolic_distance(u, v), hyperbolic_distance(v, u));
        prop_assert!(x >= 0.0 && (x - y).abs() <= 1e-9 * (1.0 + x));
    }

    #[test]
    fn real_branch_is_certified_above_the_edge(profile in profiles(), dx in 0.05f64..3.0) {
        let model = SpectrumModel::new(profile.clone()).unwrap();
        let sol = solve_real(&profile, model.r_edge() + dx, None).unwrap();
        prop_assert!(sol.stability < 1.0);
        prop_assert!(sol.m.iter().all(|m| *m > 0.0));
    }

    #[test]
    fn energy_form_is_nonnegative(
        profile in profiles(),
        u in prop::collection::vec(0.01f64..1.0, 3),
        v in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let p = profile.blocks();
        let phi = SimplexVector::normalized(u[..p].to_vec()).unwrap();
        let psi = SimplexVector::normalized(v[..p].to_vec()).unwrap();
        prop_assert!(sigma_quadratic_form(&profile, &phi, &phi).unwrap() > 0.0);
        prop_assert!(sigma_quadratic_form(&profile, &phi, &psi).unwrap() >= 0.0);
    }

    #[test]
    fn simplex_projection_lands_on_the_simplex(y in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let x = project_to_simplex(&y);
        prop_assert_eq!(x.len(), y.len());
        prop_assert!(x.iter().all(|v| *v >= 0.0));
        prop_assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let again = project_to_simplex(&x);
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rate_is_nonnegative_and_bounded(profile in profiles(), dx in 0.05f64..2.0) {
        let model = SpectrumModel::new(profile.clone()).unwrap();
        let x = model.r_edge() + dx;
        let r = rate_function(&model, x, &RateOptions::default()).unwrap();
        let a = profile.lebesgue_energy();
        prop_assert!(r.rate >= 0.0);
        prop_assert!(r.rate <= x * x / (4.0 * a) + 1e-6, "{} > {}", r.rate, x * x / (4.0 * a));
        let below = rate_function(&model, model.r_edge() - 0.1, &RateOptions::default()).unwrap();
        prop_assert!(below.rate.is_infinite());
    }
}
