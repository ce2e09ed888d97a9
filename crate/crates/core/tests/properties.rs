use proptest::prelude::*;

use qap_core::action::{eigenvalue, simpson};
use qap_core::classical::{s1_closed, s2_closed};
use qap_core::config::parse_grid;
use qap_core::{
    integrate_rk4, lambda_classical, lambda_star, s10_star, t0_to_s20, ClassicalParams,
    InitialData, OscillatorSpec,
};

const H: f64 = 1e-3;

fn unit() -> OscillatorSpec {
    OscillatorSpec::default()
}

prop_compose! {
    fn safe_init()(
        s10 in -1.0..1.0f64,
        s20 in -0.5..1.0f64,
        sigma10 in -1.0..1.0f64,
        sigma20 in -1.0..1.0f64,
    ) -> InitialData {
        InitialData::new(s10, s20, sigma10, sigma20)
    }
}

prop_compose! {
    /// Specs with `omega0 T` in `[0.3, 2.8]`, away from resonance.
    fn off_resonance()(
        m in 0.5..2.0f64,
        k in 0.2..3.0f64,
        phase in 0.3..2.8f64,
        x0 in -2.0..2.0f64,
        xt in -2.0..2.0f64,
    ) -> OscillatorSpec {
        let spec = OscillatorSpec { mass: m, stiffness: k, ..OscillatorSpec::default() };
        spec.with_horizon(phase / spec.omega0()).with_boundary(x0, xt)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zero_sigma_stays_zero(s10 in -2.0..2.0f64, s20 in -0.5..1.0f64, hbar in 0.0..1.0f64) {
        let spec = unit().with_hbar(hbar);
        let g = integrate_rk4(&spec, &InitialData::classical(s10, s20), H).unwrap();
        prop_assert!(g.states.iter().all(|s| s.sigma1 == 0.0 && s.sigma2 == 0.0 && s.q_sigma == 0.0));
    }

    #[test]
    fn sigma_flip_leaves_phase_kernels(init in safe_init(), hbar in 0.0..0.5f64) {
        let spec = unit().with_hbar(hbar);
        let a = integrate_rk4(&spec, &init, H).unwrap();
        let b = integrate_rk4(&spec, &init.sigma_flipped(), H).unwrap();
        for (p, q) in a.states.iter().zip(&b.states) {
            prop_assert_eq!(p.s1.to_bits(), q.s1.to_bits());
            prop_assert_eq!(p.s2.to_bits(), q.s2.to_bits());
            prop_assert_eq!(p.q_s.to_bits(), q.q_s.to_bits());
            prop_assert_eq!(p.sigma1, -q.sigma1);
            prop_assert_eq!(p.sigma2, -q.sigma2);
        }
        // the flip moves qSigma by twice the integral of sigma2
        let sigma2: Vec<f64> = a.states.iter().map(|s| s.sigma2).collect();
        let twice = 2.0 * simpson(&a.times(), &sigma2);
        let diff = a.last().q_sigma - b.last().q_sigma;
        prop_assert!((diff - twice).abs() < 1e-9, "{diff} vs {twice}");
    }

    #[test]
    fn rk4_tracks_closed_form(s10 in -2.0..2.0f64, t0 in -0.4..0.4f64) {
        let spec = unit();
        let p = ClassicalParams::new(s10, t0);
        let g = integrate_rk4(&spec, &InitialData::classical(s10, t0_to_s20(t0, &spec).unwrap()), H).unwrap();
        for s in &g.states {
            prop_assert!((s.s1 - s1_closed(s.t, &p, &spec).unwrap()).abs() < 1e-9);
            prop_assert!((s.s2 - s2_closed(s.t, &p, &spec).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn stationary_value_is_the_classical_action(spec in off_resonance(), frac in 0.1..0.9f64) {
        let t0 = frac * spec.horizon;
        let w = spec.omega0();
        // keep the caustic outside [0, T]
        prop_assume!((w * t0).abs() < 1.4 && (w * (spec.horizon - t0)).abs() < 1.4);
        let star = lambda_star(&spec).unwrap();
        let s10 = s10_star(t0, &spec).unwrap();
        let at = |s: f64| lambda_classical(&ClassicalParams::new(s, t0), &spec).unwrap();
        prop_assert!((at(s10) - star).abs() < 1e-10 * star.abs().max(1.0));
        let h = 1e-4 * s10.abs().max(1.0);
        prop_assert!(((at(s10 + h) - at(s10 - h)) / (2.0 * h)).abs() < 1e-7);

        let init = InitialData::classical(s10, t0_to_s20(t0, &spec).unwrap());
        let ode = eigenvalue(&integrate_rk4(&spec, &init, spec.horizon / 2000.0).unwrap()).unwrap();
        prop_assert!((ode.lambda - star).abs() < 1e-8 * star.abs().max(1.0), "{} vs {star}", ode.lambda);
    }

    #[test]
    fn eigenvalue_continuous_in_hbar(init in safe_init(), eps in 1e-5..1e-3f64) {
        let l0 = eigenvalue(&integrate_rk4(&unit(), &init, H).unwrap()).unwrap();
        let le = eigenvalue(&integrate_rk4(&unit().with_hbar(eps), &init, H).unwrap()).unwrap();
        prop_assert!((le.lambda - l0.lambda).abs() < 20.0 * eps * eps);
    }

    #[test]
    fn increasing_lists_parse(mut v in prop::collection::vec(-10.0..10.0f64, 1..8)) {
        v.sort_by(f64::total_cmp);
        v.dedup();
        let text = v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        prop_assert_eq!(parse_grid(&text).unwrap(), v);
    }
}
