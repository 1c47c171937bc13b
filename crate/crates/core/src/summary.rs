//! Run summaries: bounds, monitor verdicts and statistics of one simulation.

use serde::{Deserialize, Serialize};

use crate::config::{Resolved, ScenarioConfig};
use crate::error::Result;
use crate::sim::{check_lyapunov_decrease, check_safety, run_scenario, DecreaseVerdict, SafetyVerdict, Trace, TraceStats};
use crate::trigger::{DelayBudgetRule, M2Mode, TriggerMode, TriggerPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsSummary {
    pub mode: TriggerMode,
    pub rule: DelayBudgetRule,
    pub m2_mode: M2Mode,
    pub theta1: f64,
    pub theta2: f64,
    pub theta_g: f64,
    pub safety_margin: f64,
    pub rhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    pub m3: f64,
    pub tau_min: f64,
    pub delta_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl BoundsSummary {
    pub fn from_policy(policy: &TriggerPolicy) -> Result<Option<Self>> {
        let Some(pre) = policy.precomputed() else {
            return Ok(None);
        };
        let b = policy.budget();
        Ok(Some(BoundsSummary {
            mode: policy.mode(),
            rule: policy.rule(),
            m2_mode: policy.bounds().m2_mode,
            theta1: b.theta1,
            theta2: b.theta2,
            theta_g: b.theta_g,
            safety_margin: policy.bounds().safety_margin,
            rhs: policy.rhs()?,
            m2: pre.m2,
            m3: pre.m3,
            tau_min: pre.tau_min,
            delta_max: pre.delta_max,
            nu: policy.nu()?,
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety: Option<SafetyVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decrease: Option<DecreaseVerdict>,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub internal_error: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub name: String,
    pub system: String,
    pub seed: u64,
    pub monitors: MonitorSummary,
    pub stats: TraceStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSummary>,
    pub config: ScenarioConfig,
}

impl RunSummary {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| crate::error::Error::Config(e.to_string()))
    }
}

/// Evaluates every armed monitor on `trace`.
pub fn evaluate_monitors(resolved: &Resolved, trace: &Trace) -> MonitorSummary {
    let safety = resolved.monitors.delta.map(|d| check_safety(trace, d));
    let decrease = resolved
        .monitors
        .decrease_theta
        .map(|theta| check_lyapunov_decrease(trace, &resolved.scenario.certificate, theta));
    let passed = !trace.diverged
        && trace.internal_error.is_none()
        && safety.as_ref().is_none_or(SafetyVerdict::safe)
        && decrease.as_ref().is_none_or(DecreaseVerdict::passed);
    MonitorSummary {
        safety,
        decrease,
        diverged: trace.diverged,
        internal_error: trace.internal_error.clone(),
        passed,
    }
}

/// Runs a resolved scenario and assembles its summary.
pub fn simulate(config: &ScenarioConfig, resolved: &Resolved) -> Result<(Trace, RunSummary)> {
    let trace = run_scenario(&resolved.scenario)?;
    let monitors = evaluate_monitors(resolved, &trace);
    let bounds = match resolved.policy() {
        Some(p) => BoundsSummary::from_policy(p)?,
        None => None,
    };
    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        name: config.name.clone(),
        system: resolved.scenario.system.name().to_string(),
        seed: config.seed,
        monitors,
        stats: trace.stats,
        bounds,
        config: config.clone(),
    };
    Ok((trace, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
name = "cont"
x0 = [1e-5, 1e-5]
[system]
name = "example1"
[certificate]
p = [[2.0, 1.0], [1.0, 3.0]]
alpha3 = { coefficient = 0.5, exponent = 2.0 }
valid_radius = 0.6666666666666666
[sampler]
mode = "constant-period"
period = 0.5
delta = 1e-4
[integration]
t_final = 5.0
"#;

    #[test]
    fn summary_serializes_and_passes() {
        let cfg = ScenarioConfig::parse(CFG, &[]).unwrap();
        let resolved = cfg.resolve().unwrap();
        let (trace, summary) = simulate(&cfg, &resolved).unwrap();
        assert!(!trace.is_empty());
        assert!(summary.monitors.passed);
        assert!(summary.bounds.is_none());
        let text = summary.to_toml().unwrap();
        assert!(text.contains("[monitors]") && text.contains("[config]"), "{text}");
    }

    #[test]
    fn long_period_violates() {
        let cfg = ScenarioConfig::parse(CFG, &["sampler.period=2.1".into(), "integration.t_final=100.0".into()]).unwrap();
        let resolved = cfg.resolve().unwrap();
        let (_, summary) = simulate(&cfg, &resolved).unwrap();
        assert!(!summary.monitors.passed);
        assert!(summary.monitors.safety.unwrap().violated_at.is_some());
    }
}
