use proptest::prelude::*;

use dualdiv::closed_form::REGIME_EPS;
use dualdiv::hjb::{default_span, linear_grid, verify_solution};
use dualdiv::{
    characteristic_roots, effective_theta, solve_barrier, solve_signed_quadratic, solve_threshold,
    validate, DiscountSpec, DualModelParams, LevyMeasure, LevyMeasureSpec, Regime, Solution,
    ValidatedModel,
};

fn model_strategy() -> impl Strategy<Value = ValidatedModel> {
    (
        0.2..3.0f64,
        0.2..5.0f64,
        0.2..4.0f64,
        0.0..0.5f64,
        0.01..0.6f64,
        0.0..0.8f64,
    )
        .prop_filter_map("theta too small", |(c, lambda, beta, r, m, delta)| {
            validate(
                DualModelParams::new(c, lambda, beta),
                DiscountSpec::gbm(r, m, delta),
            )
            .ok()
            .filter(|mdl| mdl.theta() >= 0.005)
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quadratic_roots_have_opposite_signs(a2 in 0.01..10.0f64, a1 in -10.0..10.0f64, a0 in -10.0..-0.001f64) {
        let q = solve_signed_quadratic(a2, a1, a0).unwrap();
        prop_assert!(q.neg < 0.0 && q.pos > 0.0);
        for x in [q.pos, q.neg] {
            let scale = a2 * x * x + a1.abs() * x.abs() + a0.abs();
            prop_assert!((a2 * x * x + a1 * x + a0).abs() <= 1e-13 * scale);
        }
        prop_assert!((q.pos * q.neg - a0 / a2).abs() <= 1e-13 * (a0 / a2).abs());
    }

    #[test]
    fn theta_monotone_in_drift_and_volatility(m in 0.05..1.0f64, d in 0.0..0.3f64, dm in 0.0..0.5f64, dd in 0.0..0.3f64) {
        let t = effective_theta(&DiscountSpec::gbm(0.0, m, d)).unwrap().value();
        let up = effective_theta(&DiscountSpec::gbm(0.0, m + dm, d)).unwrap().value();
        prop_assert!(up >= t);
        if let Ok(down) = effective_theta(&DiscountSpec::gbm(0.0, m, d + dd)) {
            prop_assert!(down.value() <= t);
        }
    }

    #[test]
    fn roots_are_ordered(model in model_strategy(), xi in 0.01..3.0f64) {
        let k = characteristic_roots(&model, xi).unwrap();
        prop_assert!(k.alpha < 0.0);
        prop_assert!(k.s2 < 0.0 && 0.0 < k.s1 && k.s1 < model.beta());
        // the cap adds xi (x^2 - beta x) > 0 at s2, pushing the negative root up
        prop_assert!(k.r1 >= k.s2 - 1e-12 * k.s2.abs());
    }

    #[test]
    fn threshold_value_shape(model in model_strategy(), xi in 0.01..3.0f64) {
        let Ok(t) = solve_threshold(&model, xi) else { return Ok(()); };
        prop_assert_eq!(t.f(0.0).abs() < 1e-12 * t.cap_value(), true);
        let ratio = -xi * t.alpha / model.theta();
        prop_assert_eq!(t.regime == Regime::AlwaysMax, ratio <= 1.0 + REGIME_EPS);
        let grid = linear_grid(5.0 * default_span(&Solution::Threshold(t)), 300);
        let mut prev = -1.0;
        for &x in &grid {
            let f = t.f(x);
            prop_assert!(f <= t.cap_value() * (1.0 + 1e-12));
            prop_assert!(f >= prev - 1e-12 * t.cap_value(), "F decreasing at {}", x);
            prop_assert!(t.f_prime(x) >= -1e-12);
            prev = f;
        }
        if t.regime == Regime::Threshold {
            // below the level paying is not worth it: F' >= 1; above: F' <= 1
            for &x in &grid {
                if x < t.xhat - 1e-9 {
                    prop_assert!(t.f_prime(x) >= 1.0 - 1e-9, "F'({}) = {}", x, t.f_prime(x));
                } else if x > t.xhat + 1e-9 {
                    prop_assert!(t.f_prime(x) <= 1.0 + 1e-9, "F'({}) = {}", x, t.f_prime(x));
                }
            }
        }
    }

    #[test]
    fn barrier_top_value(model in model_strategy()) {
        let ratio = model.lambda() / (model.beta() * model.c());
        match solve_barrier(&model) {
            Ok(b) => {
                prop_assert!(ratio > 1.0 - 1e-9);
                prop_assert!(b.b > 0.0);
                let top = (model.lambda() / model.beta() - model.c()) / model.theta();
                prop_assert!((b.value_at_barrier() - top).abs() <= 1e-9 * top.abs().max(1.0));
                for x in linear_grid(b.b, 50) {
                    prop_assert!(b.f_prime(x) >= 1.0 - 1e-9);
                }
            }
            Err(e) => {
                prop_assert_eq!(e.name(), "DegenerateBarrier");
                prop_assert!(ratio < 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn solutions_verify_and_roundtrip(model in model_strategy(), xi in 0.01..3.0f64) {
        let mut sols = vec![];
        if let Ok(t) = solve_threshold(&model, xi) { sols.push(Solution::Threshold(t)); }
        if let Ok(b) = solve_barrier(&model) { sols.push(Solution::Barrier(b)); }
        for sol in sols {
            let grid = linear_grid(default_span(&sol), 60);
            let rep = verify_solution(&sol, &model, &grid, 1e-8).unwrap();
            prop_assert!(rep.pass, "{} max {:e} tol {:e}", sol.regime_name(), rep.max_abs, rep.tol);
            let back = Solution::from_json_str(&sol.to_json_string()).unwrap();
            prop_assert_eq!(back, sol);
        }
    }

    #[test]
    fn levy_drift_shift_scales_with_intensity(eta in 0.01..5.0f64, rho in 0.1..10.0f64, extra in 0.0..3.0f64) {
        let spec = |eta: f64| DiscountSpec::ExpLevy {
            r: 0.0,
            m: 0.1,
            delta: 0.2,
            levy: LevyMeasureSpec { measure: LevyMeasure::CompoundPoissonExp { eta, rho }, gamma: 0.0 },
        };
        let (Ok(base), Ok(more)) = (effective_theta(&spec(eta)), effective_theta(&spec(eta + extra))) else {
            return Ok(());
        };
        let (base, more) = (base.value(), more.value());
        // the drift shift is linear in eta
        let gbm = effective_theta(&DiscountSpec::gbm(0.0, 0.1, 0.2)).unwrap().value();
        prop_assert!((more - gbm) * (base - gbm) >= 0.0);
        prop_assert!((more - gbm).abs() >= (base - gbm).abs() - 1e-15);
    }
}
