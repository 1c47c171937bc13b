//! TOML scenario configuration.
//!
//! A config names a built-in plant (or an inline linear one), a quadratic
//! certificate, a sampler, delay and disturbance models and integration
//! settings. Unknown keys are rejected. Semantic errors are reported with
//! the line of the offending key when it can be located.

use serde::{Deserialize, Serialize};

use crate::classk::ClassKFunction;
use crate::dynamics::{BoxSet, FeedbackLaw, StateVector, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lyapunov::{quadratic_certificate, Alpha4Factor, LyapunovCertificate, QuadraticForm};
use crate::sim::{DelayModel, DisturbanceModel, Sampler, Scenario};
use crate::systems;
use crate::trigger::{BoundConfig, DelayBudgetRule, TriggerBudget, TriggerMode, TriggerPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// A built-in name, or `"linear"` with `a`, `b`, `k` given inline.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_bounds: Option<BoxSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_bounds: Option<BoxSpec>,
}

/// `c·r^q` with optional declared Lipschitz constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassKSpec {
    pub coefficient: f64,
    pub exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_lipschitz: Option<f64>,
}

impl ClassKSpec {
    pub fn build(&self, domain_max: f64) -> Result<ClassKFunction> {
        let mut f = ClassKFunction::power_law(self.coefficient, self.exponent, domain_max)?;
        if let Some(l) = self.lipschitz {
            f = f.with_lipschitz(l)?;
        }
        if let Some(l) = self.inverse_lipschitz {
            f = f.with_inverse_lipschitz(l)?;
        }
        Ok(f)
    }
}

/// `V = xᵀPx`. `α1`, `α2`, `α4` follow from `P` unless overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub p: Vec<Vec<f64>>,
    pub alpha3: ClassKSpec,
    pub valid_radius: f64,
    #[serde(default)]
    pub inner_radius: f64,
    #[serde(default)]
    pub alpha4_factor: Alpha4Factor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<ClassKSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<ClassKSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha4: Option<ClassKSpec>,
}

impl CertificateSpec {
    pub fn build(&self) -> Result<LyapunovCertificate> {
        let p = QuadraticForm::new(Matrix::from_rows(&self.p)?)?;
        let r = self.valid_radius;
        let base = quadratic_certificate(&p, self.alpha3.build(r)?, r, self.alpha4_factor)?;
        let pick = |spec: &Option<ClassKSpec>, default: &ClassKFunction| match spec {
            Some(s) => s.build(r),
            None => Ok(default.clone()),
        };
        let alphas = [
            pick(&self.alpha1, &base.alpha1)?,
            pick(&self.alpha2, &base.alpha2)?,
            base.alpha3.clone(),
            pick(&self.alpha4, &base.alpha4)?,
        ];
        let cert = if self.alpha1.is_none() && self.alpha2.is_none() && self.alpha4.is_none() {
            base
        } else {
            let (pv, pg) = (p.clone(), p.matrix().clone());
            LyapunovCertificate::new(
                move |x| pv.value(x),
                move |x| pg.mul_vec(x).expect("dimension").iter().map(|v| 2.0 * v).collect(),
                alphas,
                r,
            )?
        };
        if self.inner_radius > 0.0 {
            cert.with_inner_radius(self.inner_radius)
        } else {
            Ok(cert)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    SelfTriggered,
    ConstantPeriod,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub mode: SamplerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_g: Option<f64>,
    /// Safe radius in state units; also arms the safety monitor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub delay_rule: DelayBudgetRule,
    #[serde(default)]
    pub bounds: BoundConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSpec {
    /// Seconds.
    pub t0: f64,
    /// Seconds.
    pub t_final: f64,
    /// Seconds.
    pub step: f64,
    pub tau_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_radius: Option<f64>,
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        IntegrationSpec {
            t0: 0.0,
            t_final: 500.0,
            step: 1e-3,
            tau_scale: 1.0,
            divergence_radius: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub trace: String,
    pub summary: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            trace: "trace.csv".into(),
            summary: "summary.toml".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub x0: Vec<f64>,
    pub system: SystemSpec,
    pub certificate: CertificateSpec,
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub delay: DelayModel,
    #[serde(default)]
    pub disturbance: DisturbanceModel,
    #[serde(default)]
    pub integration: IntegrationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Monitors armed for a resolved scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorSpec {
    pub delta: Option<f64>,
    /// `θ` for the Lyapunov-decrease monitor (stability mode only).
    pub decrease_theta: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Resolved {
    pub scenario: Scenario,
    pub monitors: MonitorSpec,
}

impl Resolved {
    pub fn policy(&self) -> Option<&TriggerPolicy> {
        match &self.scenario.sampler {
            Sampler::SelfTriggered(p) => Some(p),
            _ => None,
        }
    }
}

impl ScenarioConfig {
    /// Parses `text` after applying `KEY=VALUE` overrides (dotted keys,
    /// TOML-literal values; bare words are taken as strings).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: ScenarioConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?
        } else {
            let mut table: toml::Table =
                toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
            for ov in overrides {
                apply_override(&mut table, ov)?;
            }
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {}", e.to_string().trim_end())))?
        };
        cfg.validate().map_err(|e| anchor(text, e))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Schema rules that do not need the plant or the certificate.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |path: &str, msg: String| Err(Error::Config(format!("{path}: {msg}")));
        let s = &self.sampler;
        match s.mode {
            SamplerKind::ConstantPeriod => match s.period {
                Some(p) if p > 0.0 => {}
                _ => return cfg_err("sampler.period", "constant-period sampling needs a positive period".into()),
            },
            SamplerKind::SelfTriggered => {
                let Some(trigger) = s.trigger else {
                    return cfg_err("sampler.trigger", "self-triggered sampling needs a trigger mode".into());
                };
                if s.theta1.is_none() {
                    return cfg_err("sampler.theta1", "missing".into());
                }
                if s.theta2.is_none() {
                    return cfg_err("sampler.theta2", "missing".into());
                }
                if trigger.is_safety() && s.delta.is_none() {
                    return cfg_err("sampler.delta", "safety trigger needs the safe radius delta".into());
                }
                if trigger == TriggerMode::SafetyPerturbed && s.theta_g.is_none() {
                    return cfg_err("sampler.theta_g", "perturbed safety trigger needs theta_g".into());
                }
                if let Err(e) = s.bounds.validate() {
                    return cfg_err("sampler.bounds.safety_margin", e.to_string());
                }
            }
            SamplerKind::Continuous => {}
        }
        if let Some(d) = s.delta {
            if !(d > 0.0) {
                return cfg_err("sampler.delta", format!("must be positive, got {d}"));
            }
        }
        let i = &self.integration;
        if !(i.t_final > i.t0) {
            return cfg_err("integration.t_final", "must exceed t0".into());
        }
        if !(i.step > 0.0) {
            return cfg_err("integration.step", "must be positive".into());
        }
        if !(i.tau_scale > 0.0) {
            return cfg_err("integration.tau_scale", "must be positive".into());
        }
        if self.x0.is_empty() || self.x0.iter().any(|v| !v.is_finite()) {
            return cfg_err("x0", "must be a non-empty finite vector".into());
        }
        if let Err(e) = self.delay.validate() {
            return cfg_err("delay", e.to_string());
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<(SystemModel, FeedbackLaw)> {
        let spec = &self.system;
        let (mut sys, fb) = if spec.name == "linear" {
            let m = |v: &Option<Vec<Vec<f64>>>, name: &str| -> Result<Matrix> {
                Matrix::from_rows(v.as_ref().ok_or_else(|| Error::Config(format!("system.{name}: missing")))?)
            };
            let radius = spec
                .domain_radius
                .ok_or_else(|| Error::Config("system.domain_radius: required for linear systems".into()))?;
            systems::linear(m(&spec.a, "a")?, m(&spec.b, "b")?, m(&spec.k, "k")?, radius)?
        } else {
            if spec.a.is_some() || spec.b.is_some() || spec.k.is_some() {
                return Err(Error::Config("system: a, b, k only apply to name = \"linear\"".into()));
            }
            systems::builtin(&spec.name).ok_or_else(|| {
                Error::Config(format!(
                    "system.name: unknown system {:?}; expected one of {:?} or \"linear\"",
                    spec.name,
                    systems::BUILTIN_NAMES
                ))
            })?
        };
        if let Some(r) = spec.domain_radius {
            sys = sys.with_domain_radius(r)?;
        }
        if spec.mu_bounds.is_some() || spec.d_bounds.is_some() {
            let to_box = |b: &Option<BoxSpec>, dim: usize| match b {
                Some(b) => BoxSet::new(b.lo.clone(), b.hi.clone()),
                None => Ok(BoxSet::origin(dim)),
            };
            let mu = to_box(&spec.mu_bounds, sys.mu_dim())?;
            let d = to_box(&spec.d_bounds, sys.d_dim())?;
            sys = sys.with_bounds(mu, d)?;
        }
        Ok((sys, fb))
    }

    /// Builds the scenario, precomputing trigger bounds.
    pub fn resolve(&self) -> Result<Resolved> {
        self.resolve_with_bounds(None)
    }

    /// As [`resolve`](Self::resolve) with the bound configuration replaced
    /// without validation, for deliberately broken margins.
    pub fn resolve_with_bounds(&self, bounds: Option<BoundConfig>) -> Result<Resolved> {
        let (sys, fb) = self.build_system()?;
        let cert = self.certificate.build()?;
        let x0 = StateVector::new(self.x0.clone())?;
        let s = &self.sampler;
        let mut monitors = MonitorSpec {
            delta: s.delta,
            decrease_theta: None,
        };
        let sampler = match s.mode {
            SamplerKind::ConstantPeriod => Sampler::ConstantPeriod(s.period.unwrap_or_default()),
            SamplerKind::Continuous => Sampler::Continuous,
            SamplerKind::SelfTriggered => {
                let trigger = s.trigger.ok_or_else(|| Error::Config("sampler.trigger: missing".into()))?;
                let budget = TriggerBudget::new(
                    s.theta1.unwrap_or_default(),
                    s.theta2.unwrap_or_default(),
                    s.theta_g.unwrap_or_default(),
                )?;
                let bounds = bounds.unwrap_or_else(|| s.bounds.clone());
                let policy = match trigger {
                    TriggerMode::Stability => {
                        monitors.decrease_theta = Some(budget.theta1 + budget.theta2);
                        TriggerPolicy::stability(sys.clone(), fb.clone(), cert.clone(), &x0, budget, bounds)?
                    }
                    mode => {
                        let delta = s.delta.ok_or_else(|| Error::Config("sampler.delta: missing".into()))?;
                        TriggerPolicy::safety(
                            sys.clone(),
                            fb.clone(),
                            cert.clone(),
                            delta,
                            budget,
                            mode == TriggerMode::SafetyPerturbed,
                            bounds,
                        )?
                    }
                };
                Sampler::SelfTriggered(Box::new(policy.with_rule(s.delay_rule).precompute()?))
            }
        };
        let i = &self.integration;
        let mut scenario = Scenario::new(sys, fb, cert, sampler, x0, i.t_final);
        scenario.t0 = i.t0;
        scenario.delay = self.delay.clone();
        scenario.disturbance = self.disturbance.clone();
        scenario.integrator_step = i.step;
        scenario.rng_seed = self.seed;
        scenario.delta = s.delta;
        scenario.tau_scale = i.tau_scale;
        scenario.divergence_radius = i.divergence_radius;
        scenario.validate()?;
        Ok(Resolved { scenario, monitors })
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Prefixes a `path: message` config error with the line of `path`.
fn anchor(text: &str, err: Error) -> Error {
    let Error::Config(msg) = err else { return err };
    let Some((path, _)) = msg.split_once(": ") else {
        return Error::Config(msg);
    };
    match locate(text, path) {
        Some(line) => Error::Config(format!("line {line}: {msg}")),
        None => Error::Config(msg),
    }
}

/// 1-based line of a dotted key, or of its table header when the key itself
/// is absent.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let (section, key) = match path.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", path),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(h) = trimmed.strip_prefix('[').and_then(|r| r.split(']').next()) {
            current = h.trim().to_string();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            let name = trimmed.split('=').next().unwrap_or("").trim();
            if name == key {
                return Some(i + 1);
            }
        }
    }
    header_line.or(if section.is_empty() { None } else { locate(text, section) })
}
