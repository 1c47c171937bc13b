//! Offline checks of a self-triggered policy against brute-force oracles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::dynamics::StateVector;
use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{oracle_hold_time, oracle_max_norm, HoldCriterion};
use crate::region::Region;
use crate::trigger::{check_admissible, estimate_m3, phi2, Admissibility, M2Mode, TriggerMode, TriggerPolicy};

/// Dense oracles use this many times the estimator's sample count.
pub const DENSITY: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub n_points: usize,
    /// Replaces the configured safety margin, bypassing its lower limit.
    pub force_margin: Option<f64>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            n_points: 200,
            force_margin: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub x_k: Vec<f64>,
    pub tau_s: f64,
    pub oracle_hold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: usize,
    pub failures: usize,
    /// Smallest `oracle hold / τ_s` seen (censored holds count at the window).
    pub min_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<SweepFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub estimate: f64,
    pub dense: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub mode: TriggerMode,
    pub safety_margin: f64,
    pub sweep: SweepReport,
    pub bounds: Vec<BoundCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<Admissibility>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn verify(config: &ScenarioConfig, opts: &VerifyOptions) -> Result<VerifyReport> {
    let bounds = opts.force_margin.map(|m| {
        let mut b = config.sampler.bounds.clone();
        b.safety_margin = m;
        b
    });
    let resolved = config.resolve_with_bounds(bounds)?;
    let policy = resolved
        .policy()
        .ok_or_else(|| Error::Config("sampler.mode: verify needs a self-triggered sampler".into()))?;
    verify_policy(policy, resolved.scenario.integrator_step, opts)
}

pub fn verify_policy(policy: &TriggerPolicy, step: f64, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sweep = sweep(policy, step, opts.n_points, &mut rng)?;
    let bounds = bound_checks(policy, &mut rng)?;
    let admissibility = match (policy.mode(), policy.delta()) {
        (TriggerMode::SafetyPerturbed, Some(delta)) => Some(check_admissible(
            policy.system(),
            policy.feedback(),
            policy.certificate(),
            delta,
            policy.budget().theta_g,
            policy.bounds().n_lipschitz_samples,
            policy.bounds().safety_margin,
            &mut rng,
        )?),
        _ => None,
    };
    let passed = sweep.failures == 0
        && bounds.iter().all(|b| b.ok)
        && admissibility.as_ref().is_none_or(|a| a.admissible);
    Ok(VerifyReport {
        mode: policy.mode(),
        safety_margin: policy.bounds().safety_margin,
        sweep,
        bounds,
        admissibility,
        passed,
    })
}

fn sample_point(policy: &TriggerPolicy, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let inner = policy.certificate().inner_radius();
    for _ in 0..1000 {
        let x = policy.region().sample(rng);
        if linalg::norm(&x) > inner {
            return x;
        }
    }
    policy.region().sample(rng)
}

/// Oracle hold times at random `x_k` compared with `τ_s(x_k)`.
pub fn sweep(policy: &TriggerPolicy, step: f64, n_points: usize, rng: &mut ChaCha8Rng) -> Result<SweepReport> {
    let criterion = match policy.mode() {
        TriggerMode::Stability => HoldCriterion::LyapunovDecrease {
            cert: policy.certificate().clone(),
            theta: policy.budget().theta1,
        },
        _ => HoldCriterion::SafetyBall {
            delta: policy.delta().expect("safety policy carries delta"),
            horizon: f64::INFINITY,
        },
    };
    let mut report = SweepReport {
        points: n_points,
        failures: 0,
        min_ratio: f64::INFINITY,
        first_failure: None,
    };
    for _ in 0..n_points {
        let x_k = sample_point(policy, rng);
        let tau_s = policy.next_sample_time(&StateVector::new(x_k.clone())?)?;
        let oracle_step = step.min(tau_s / 100.0);
        let tol = 1e-3 * tau_s;
        let hold = oracle_hold_time(
            policy.system(),
            policy.feedback(),
            &x_k,
            &criterion,
            10.0 * tau_s,
            tol,
            oracle_step,
        )?;
        report.min_ratio = report.min_ratio.min(hold.hold / tau_s);
        if !hold.censored && hold.hold + tol < tau_s {
            report.failures += 1;
            report.first_failure.get_or_insert(SweepFailure {
                x_k,
                tau_s,
                oracle_hold: hold.hold,
            });
        }
    }
    Ok(report)
}

/// Estimator outputs against dense maxima at [`DENSITY`] times the samples.
pub fn bound_checks(policy: &TriggerPolicy, rng: &mut ChaCha8Rng) -> Result<Vec<BoundCheck>> {
    let sys = policy.system();
    let fb = policy.feedback();
    let b = policy.bounds();
    let n = sys.state_dim();
    let region = policy.region().clone();
    let pre = policy
        .precomputed()
        .ok_or_else(|| Error::usage("verify needs a precomputed policy"))?;
    let check = |name: &str, estimate: f64, dense: f64, floor: f64| BoundCheck {
        name: name.to_string(),
        estimate,
        dense,
        ok: estimate >= dense || dense <= floor,
    };
    let mut checks = Vec::new();

    let m3 = estimate_m3(sys, fb, &region, b, rng)?;
    let dense_n = DENSITY * b.n_lipschitz_samples;
    let both = [region.clone(), region.clone()];
    let l_f0 = oracle_max_norm(
        |z| {
            let x = StateVector::new(z[..n].to_vec()).expect("dimension");
            let u = fb.eval(&StateVector::new(z[n..].to_vec()).expect("dimension")).expect("feedback");
            vec![sys.jacobians(&x, &u).map_or(f64::NAN, |j| j.dfdu.spectral_norm())]
        },
        &both,
        dense_n,
        rng,
    );
    let l_kappa = oracle_max_norm(
        |z| vec![fb.jacobian(&StateVector::new(z.to_vec()).expect("dimension")).map_or(f64::NAN, |j| j.spectral_norm())],
        std::slice::from_ref(&region),
        dense_n,
        rng,
    );
    let l_x = oracle_max_norm(|z| sys.nominal_raw(&z[..n], &fb.eval_raw(&z[n..])), &both, dense_n, rng);

    // Second differences of d_h carry roundoff of order ε·‖f0‖/h²; maxima
    // below that level are noise.
    let floor = 1e3 * f64::EPSILON * l_x / (b.fd_step * b.fd_step);
    let dense_m2 = DENSITY * b.n_level_samples;
    match b.m2_mode {
        M2Mode::Global => {
            let dense = oracle_max_norm(
                |z| phi2(sys, fb, &z[..n], &z[n..], b.fd_step),
                &[region.clone(), region.clone()],
                dense_m2,
                rng,
            );
            checks.push(check("m2", pre.m2.unwrap_or(0.0), dense, floor));
        }
        M2Mode::LevelSet => {
            for i in 0..3 {
                let x_k = sample_point(policy, rng);
                let est = policy.evaluate(&StateVector::new(x_k.clone())?)?.m2;
                let level = policy.certificate().value(&x_k);
                let set = Region::level_set(policy.certificate(), n, level, policy.working_radius())?;
                let dense = oracle_max_norm(|z| phi2(sys, fb, z, &x_k, b.fd_step), &[set], dense_m2, rng);
                checks.push(check(&format!("m2[{i}]"), est, dense, floor));
            }
        }
    }
    checks.push(check("l_f0", m3.l_f0, l_f0, 0.0));
    checks.push(check("l_kappa", m3.l_kappa, l_kappa, 0.0));
    checks.push(check("l_x", m3.l_x, l_x, 0.0));
    checks.push(check("m3", pre.m3, l_f0 * l_kappa * l_x, 0.0));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
x0 = [0.9]
[system]
name = "annulus-linear"
[certificate]
p = [[1.0]]
alpha3 = { coefficient = 0.2, exponent = 1.0, inverse_lipschitz = 5.0 }
valid_radius = 1.0
inner_radius = 0.1
[sampler]
mode = "self-triggered"
trigger = "stability"
theta1 = 0.4
theta2 = 0.1
[sampler.bounds]
n_level_samples = 50
n_lipschitz_samples = 200
n_scan = 20
"#;

    #[test]
    fn annulus_policy_verifies() {
        let cfg = ScenarioConfig::parse(CFG, &[]).unwrap();
        let report = verify(
            &cfg,
            &VerifyOptions {
                n_points: 30,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.sweep.min_ratio >= 1.0);
    }

    #[test]
    fn forced_small_margin_fails_bounds() {
        let cfg = ScenarioConfig::parse(CFG, &[]).unwrap();
        let report = verify(
            &cfg,
            &VerifyOptions {
                n_points: 5,
                force_margin: Some(0.1),
                seed: 1,
            },
        )
        .unwrap();
        assert!(!report.passed);
        assert!(report.bounds.iter().any(|b| !b.ok));
    }

    #[test]
    fn non_self_triggered_rejected() {
        let cfg = ScenarioConfig::parse(
            &CFG.replace("mode = \"self-triggered\"", "mode = \"continuous\""),
            &[],
        )
        .unwrap();
        assert!(matches!(verify(&cfg, &VerifyOptions::default()), Err(Error::Config(_))));
    }
}
