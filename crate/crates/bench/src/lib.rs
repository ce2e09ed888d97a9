//! Fixtures shared by the criterion benches.

use qap_core::{t0_to_s20, InitialData, OscillatorSpec};

/// Unit oscillator on the classical valley at `t0 = 0.3`.
pub fn classical() -> (OscillatorSpec, InitialData) {
    let spec = OscillatorSpec::default();
    let s20 = t0_to_s20(0.3, &spec).expect("finite stiffness");
    (spec, InitialData::classical(1.0, s20))
}

/// Quantum run used by the correction sweeps.
pub fn quantum() -> (OscillatorSpec, InitialData) {
    (
        OscillatorSpec::default().with_hbar(0.1),
        InitialData::new(1.0, 0.0, 0.3, 1.0),
    )
}
