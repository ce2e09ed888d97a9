use qap_core::extremize::HessianSignature;
use qap_core::{
    lambda_star, optimize, s10_star, stationarity_check, t0_to_s20, ActiveMask, InitialData,
    OptimizeOptions, OscillatorSpec,
};

fn frozen_s20(grad_tol: f64) -> OptimizeOptions {
    OptimizeOptions {
        active_mask: ActiveMask::S10_ONLY,
        grad_tol,
        ..OptimizeOptions::default()
    }
}

#[test]
fn optimizer_finds_closed_form_s10() {
    let specs = [
        OscillatorSpec::default(),
        OscillatorSpec::default().with_boundary(0.5, -1.0),
        OscillatorSpec {
            mass: 2.0,
            stiffness: 0.5,
            ..OscillatorSpec::default()
        }
        .with_horizon(1.5),
    ];
    for spec in specs {
        let star = lambda_star(&spec).unwrap();
        for t0 in [0.1, 0.5, 0.8] {
            let s20 = t0_to_s20(t0, &spec).unwrap();
            let r = optimize(&spec, &InitialData::classical(0.0, s20), &frozen_s20(1e-9)).unwrap();
            assert!(r.converged, "{spec:?} t0={t0}");
            let want = s10_star(t0, &spec).unwrap();
            assert!((r.init.s10 - want).abs() < 1e-6, "{} vs {want}", r.init.s10);
            assert!((r.report.lambda - star).abs() < 1e-8);
            assert_eq!(r.init.s20, s20);
        }
    }
}

#[test]
fn classical_valley_signature() {
    let spec = OscillatorSpec::default();
    let t0 = 0.4;
    let init = InitialData::classical(s10_star(t0, &spec).unwrap(), t0_to_s20(t0, &spec).unwrap());
    let opts = OptimizeOptions {
        active_mask: ActiveMask::CLASSICAL,
        ..OptimizeOptions::default()
    };
    let st = stationarity_check(&init, &spec, &opts).unwrap();
    assert!(st.gradient_norm < 1e-8);
    // one curved direction across the valley, one flat along it
    assert_eq!(
        st.signature,
        HessianSignature {
            positive: 0,
            negative: 1,
            near_zero: 1
        }
    );
}

#[test]
fn seeds_are_reproducible() {
    let spec = OscillatorSpec::default().with_hbar(0.2);
    let guess = InitialData::new(0.5, 0.1, 0.2, 0.5);
    let a = optimize(&spec, &guess, &OptimizeOptions::default()).unwrap();
    let b = optimize(&spec, &guess, &OptimizeOptions::default()).unwrap();
    assert_eq!(a, b);
}
