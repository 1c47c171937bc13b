//! Fixtures shared by the benchmarks under `benches/`.

use selftrig::systems;
use selftrig::{
    quadratic_certificate, Alpha4Factor, BoundConfig, ClassKFunction, LyapunovCertificate, M2Mode, Matrix,
    QuadraticForm, TriggerBudget, TriggerPolicy,
};

pub const DELTA: f64 = 1e-4;

pub fn example1_certificate() -> LyapunovCertificate {
    let p = QuadraticForm::new(Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).expect("2x2")).expect("PD");
    let a3 = ClassKFunction::power_law(0.5, 2.0, 2.0 / 3.0).expect("class K");
    quadratic_certificate(&p, a3, 2.0 / 3.0, Alpha4Factor::Printed).expect("certificate")
}

/// Example-1 nominal safety policy, not yet precomputed.
pub fn example1_policy(theta1: f64, theta2: f64, m2_mode: M2Mode) -> TriggerPolicy {
    let (sys, fb) = systems::example1();
    let bounds = BoundConfig {
        m2_mode,
        ..BoundConfig::default()
    };
    let budget = TriggerBudget::new(theta1, theta2, 0.0).expect("budget");
    TriggerPolicy::safety(sys, fb, example1_certificate(), DELTA, budget, false, bounds).expect("policy")
}
