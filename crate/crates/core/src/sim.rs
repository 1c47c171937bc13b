//! Event-driven sampled-data simulation under zero-order hold.
//!
//! The loop samples `x(t_k)`, draws an actuation delay `Δ_k`, and switches
//! the held input to `κ(x(t_k))` exactly at `t_k + Δ_k`. Before the first
//! actuation the input is zero. Between switching instants the plant is
//! integrated by fixed-step RK4 with the segment split into equal substeps,
//! so every sampling and actuation instant is a grid point.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BoxSet, FeedbackLaw, StateVector, SystemModel};
use crate::error::{Error, Result};
use crate::integrate::{rk4_step, substeps};
use crate::linalg;
use crate::lyapunov::LyapunovCertificate;
use crate::trigger::TriggerPolicy;

/// Gap kept between a clamped delay and its upper limit.
const DELAY_EPS: f64 = 1e-9;
/// Intervals shorter than this are merged by the decrease monitor.
const MIN_QUOTIENT_SPAN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DelayModel {
    #[default]
    Zero,
    Constant {
        delay: f64,
    },
    UniformRandom {
        upper: f64,
    },
}

impl DelayModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DelayModel::Zero => Ok(()),
            DelayModel::Constant { delay: v } | DelayModel::UniformRandom { upper: v } => {
                if v >= 0.0 && v.is_finite() {
                    Ok(())
                } else {
                    Err(Error::usage(format!("delay must be finite and non-negative, got {v}")))
                }
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DelayModel::Zero => 0.0,
            DelayModel::Constant { delay } => delay,
            DelayModel::UniformRandom { upper } => {
                if upper > 0.0 {
                    rng.random_range(0.0..upper)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A signal for `d(t)` or `μ(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Signal {
    #[default]
    None,
    Constant {
        value: Vec<f64>,
    },
    /// `a_i·sin(2π·f_i·t + φ_i)` per channel.
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: Vec<f64>,
    },
    /// Uniform draw from the declared box, redrawn at each sampling instant.
    HeldUniform,
}

impl Signal {
    fn validate(&self, name: &str, bounds: &BoxSet) -> Result<()> {
        let dim = bounds.dim();
        let check_len = |len: usize| {
            if len == dim {
                Ok(())
            } else {
                Err(Error::usage(format!("{name} signal has {len} channels, box has {dim}")))
            }
        };
        match self {
            Signal::None | Signal::HeldUniform => Ok(()),
            Signal::Constant { value } => {
                check_len(value.len())?;
                bounds.check(name, value)
            }
            Signal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                check_len(amplitude.len())?;
                check_len(frequency.len())?;
                check_len(phase.len())?;
                let lo: Vec<f64> = amplitude.iter().map(|a| -a.abs()).collect();
                let hi: Vec<f64> = amplitude.iter().map(|a| a.abs()).collect();
                bounds.check(name, &lo)?;
                bounds.check(name, &hi)
            }
        }
    }

    fn is_none(&self) -> bool {
        matches!(self, Signal::None)
    }

    fn value_at(&self, t: f64, held: &[f64], dim: usize) -> Vec<f64> {
        match self {
            Signal::None => vec![0.0; dim],
            Signal::Constant { value } => value.clone(),
            Signal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => (0..dim)
                .map(|i| amplitude[i] * (std::f64::consts::TAU * frequency[i] * t + phase[i]).sin())
                .collect(),
            Signal::HeldUniform => held.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceModel {
    pub d: Signal,
    pub mu: Signal,
}

impl DisturbanceModel {
    pub fn validate(&self, sys: &SystemModel) -> Result<()> {
        self.d.validate("d", sys.d_bounds())?;
        self.mu.validate("mu", sys.mu_bounds())
    }

    pub fn is_none(&self) -> bool {
        self.d.is_none() && self.mu.is_none()
    }
}

#[derive(Clone, Debug)]
pub enum Sampler {
    SelfTriggered(Box<TriggerPolicy>),
    ConstantPeriod(f64),
    /// Samples at every integrator step, the continuous-time limit.
    Continuous,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub system: SystemModel,
    pub feedback: FeedbackLaw,
    pub certificate: LyapunovCertificate,
    pub sampler: Sampler,
    pub x0: StateVector,
    pub t0: f64,
    pub t_final: f64,
    pub delay: DelayModel,
    pub disturbance: DisturbanceModel,
    pub integrator_step: f64,
    pub rng_seed: u64,
    /// Safe radius for the safety monitor and the divergence guard.
    pub delta: Option<f64>,
    /// Multiplies every self-triggered `τ_s`; values above 1 deliberately
    /// break the trigger guarantee.
    pub tau_scale: f64,
    /// Overrides the default divergence radius.
    pub divergence_radius: Option<f64>,
}

impl Scenario {
    pub fn new(
        system: SystemModel,
        feedback: FeedbackLaw,
        certificate: LyapunovCertificate,
        sampler: Sampler,
        x0: StateVector,
        t_final: f64,
    ) -> Self {
        let delta = match &sampler {
            Sampler::SelfTriggered(p) => p.delta(),
            _ => None,
        };
        Scenario {
            system,
            feedback,
            certificate,
            sampler,
            x0,
            t0: 0.0,
            t_final,
            delay: DelayModel::Zero,
            disturbance: DisturbanceModel::default(),
            integrator_step: 1e-3,
            rng_seed: 0,
            delta,
            tau_scale: 1.0,
            divergence_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        if self.x0.dim() != n {
            return Err(Error::Dimension {
                what: "x0",
                expected: n,
                got: self.x0.dim(),
            });
        }
        if self.feedback.state_dim() != n || self.feedback.input_dim() != self.system.input_dim() {
            return Err(Error::usage("feedback law dimensions do not match the system"));
        }
        if !(self.t_final > self.t0) || !self.t0.is_finite() || !self.t_final.is_finite() {
            return Err(Error::usage("t_final must exceed t0"));
        }
        if !(self.integrator_step > 0.0 && self.integrator_step.is_finite()) {
            return Err(Error::usage("integrator_step must be positive"));
        }
        if !(self.tau_scale > 0.0 && self.tau_scale.is_finite()) {
            return Err(Error::usage("tau_scale must be positive"));
        }
        self.delay.validate()?;
        self.disturbance.validate(&self.system)?;
        if let Some(delta) = self.delta {
            if !(self.x0.norm() < delta) {
                return Err(Error::domain("‖x0‖", self.x0.norm(), 0.0, delta));
            }
        }
        match &self.sampler {
            Sampler::SelfTriggered(p) => {
                if p.precomputed().is_none() {
                    return Err(Error::usage("self-triggered sampler needs a precomputed policy"));
                }
            }
            Sampler::ConstantPeriod(t) => {
                if !(*t > 0.0 && t.is_finite()) {
                    return Err(Error::usage("sampling period must be positive"));
                }
            }
            Sampler::Continuous => {}
        }
        Ok(())
    }

    fn divergence_radius(&self) -> f64 {
        if let Some(r) = self.divergence_radius {
            return r;
        }
        match self.delta {
            Some(d) => 1e3 * d,
            None if self.x0.norm() > 0.0 => 1e3 * self.x0.norm(),
            None => 1e3 * self.system.domain_radius(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEvent {
    pub k: usize,
    pub t_k: f64,
    pub delta_k: f64,
    pub tau_s: f64,
    pub x_k: Vec<f64>,
    pub u_k: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridLabel {
    None,
    /// A sampling instant; also the actuation instant when `Δ_k = 0`.
    Sample,
    Actuate,
}

impl GridLabel {
    fn as_str(self) -> &'static str {
        match self {
            GridLabel::None => "-",
            GridLabel::Sample => "sample",
            GridLabel::Actuate => "actuate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    /// First grid time with `‖x‖ ≥ δ`.
    pub violated_at: Option<f64>,
    pub max_norm: f64,
}

impl SafetyVerdict {
    pub fn safe(&self) -> bool {
        self.violated_at.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseVerdict {
    pub checked: usize,
    pub violations: usize,
    /// `max(quotient + (1−θ)·α3)`; non-positive when the decrease holds.
    pub worst_margin: f64,
    pub first_violation: Option<f64>,
    /// Consecutive samples outside the inner radius where `V` did not drop.
    pub sample_increases: usize,
}

impl DecreaseVerdict {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.sample_increases == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub samples: usize,
    pub duration: f64,
    pub mean_inter_sample: f64,
    pub min_inter_sample: f64,
    pub max_inter_sample: f64,
    pub mean_delay: f64,
    pub max_delay: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Input in force from each grid time onwards.
    pub controls: Vec<Vec<f64>>,
    pub v_values: Vec<f64>,
    pub labels: Vec<GridLabel>,
    pub events: Vec<SampleEvent>,
    pub first_actuation: Option<f64>,
    pub diverged: bool,
    pub internal_error: Option<String>,
    pub safety: Option<SafetyVerdict>,
    pub stats: TraceStats,
}

impl Trace {
    fn push(&mut self, t: f64, x: &[f64], u: &[f64], v: f64) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.controls.push(u.to_vec());
        self.v_values.push(v);
        self.labels.push(GridLabel::None);
    }

    fn relabel(&mut self, label: GridLabel, u: &[f64]) {
        let last = self.times.len() - 1;
        self.labels[last] = label;
        self.controls[last] = u.to_vec();
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes `t,x1..xn,u1..up,V,event` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let p = self.controls.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=p).map(|i| format!("u{i}")));
        header.push("V".into());
        header.push("event".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            write!(w, "{}", self.times[i])?;
            for v in self.states[i].iter().chain(&self.controls[i]) {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", self.v_values[i], self.labels[i].as_str())?;
        }
        Ok(())
    }
}

/// Runs the sampled closed loop described by `scenario`.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    scenario.validate()?;
    let sys = &scenario.system;
    let fb = &scenario.feedback;
    let cert = &scenario.certificate;
    let p = sys.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let guard = scenario.divergence_radius();
    let h_max = scenario.integrator_step;
    let perturbed = !scenario.disturbance.is_none();
    let delta_max = match &scenario.sampler {
        Sampler::SelfTriggered(policy) => policy.precomputed().map(|pre| pre.delta_max),
        _ => None,
    };

    let mut trace = Trace {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        v_values: Vec::new(),
        labels: Vec::new(),
        events: Vec::new(),
        first_actuation: None,
        diverged: false,
        internal_error: None,
        safety: None,
        stats: empty_stats(),
    };

    let mut t = scenario.t0;
    let mut x = scenario.x0.as_slice().to_vec();
    let mut u = vec![0.0; p];
    let mut held_mu = vec![0.0; sys.mu_dim()];
    let mut held_d = vec![0.0; sys.d_dim()];
    let mut pending: Option<(f64, Vec<f64>)> = None;
    let mut next_sample = t;
    trace.push(t, &x, &u, cert.value(&x));

    'outer: while t < scenario.t_final {
        if t == next_sample {
            let xs = match StateVector::new(x.clone()) {
                Ok(xs) => xs,
                Err(_) => {
                    trace.diverged = true;
                    break;
                }
            };
            let tau = match &scenario.sampler {
                Sampler::SelfTriggered(policy) => match policy.next_sample_time(&xs) {
                    Ok(tau) => {
                        if tau < policy.bounds().tau_floor {
                            trace.internal_error = Some(format!("tau_s = {tau} below tau_floor at t = {t}"));
                            break;
                        }
                        tau * scenario.tau_scale
                    }
                    Err(e) => {
                        trace.internal_error = Some(format!("trigger evaluation failed at t = {t}: {e}"));
                        break;
                    }
                },
                Sampler::ConstantPeriod(period) => *period,
                Sampler::Continuous => h_max,
            };
            let u_k = fb.eval_raw(&x);
            if u_k.iter().any(|v| !v.is_finite()) {
                trace.diverged = true;
                break;
            }
            let limit = delta_max.map_or(tau, |dm| dm.min(tau)) - DELAY_EPS;
            let delay = scenario.delay.draw(&mut rng).min(limit).max(0.0);
            if matches!(scenario.disturbance.d, Signal::HeldUniform) {
                held_d = sys.d_bounds().sample(&mut rng);
            }
            if matches!(scenario.disturbance.mu, Signal::HeldUniform) {
                held_mu = sys.mu_bounds().sample(&mut rng);
            }
            trace.events.push(SampleEvent {
                k: trace.events.len(),
                t_k: t,
                delta_k: delay,
                tau_s: tau,
                x_k: x.clone(),
                u_k: u_k.clone(),
            });
            if delay == 0.0 {
                u = u_k;
                trace.first_actuation.get_or_insert(t);
                trace.relabel(GridLabel::Sample, &u);
            } else {
                let cur = u.clone();
                trace.relabel(GridLabel::Sample, &cur);
                pending = Some((t + delay, u_k));
            }
            next_sample = t + tau;
        }

        let mut boundary = next_sample.min(scenario.t_final);
        if let Some((t_act, _)) = &pending {
            boundary = boundary.min(*t_act);
        }
        let steps = substeps(boundary - t, h_max);
        let h = (boundary - t) / steps as f64;
        for s in 0..steps {
            let t_step = t + h * s as f64;
            x = if perturbed {
                let mu = scenario.disturbance.mu.value_at(t_step, &held_mu, sys.mu_dim());
                let d = scenario.disturbance.d.value_at(t_step, &held_d, sys.d_dim());
                rk4_step(&|x: &[f64]| sys.perturbed_raw(x, &u, &mu, &d), &x, h)
            } else {
                rk4_step(&|x: &[f64]| sys.nominal_raw(x, &u), &x, h)
            };
            let t_now = if s + 1 == steps { boundary } else { t + h * (s + 1) as f64 };
            trace.push(t_now, &x, &u, cert.value(&x));
            let r = linalg::norm(&x);
            if !(r <= guard) {
                trace.diverged = true;
                break 'outer;
            }
        }
        t = boundary;
        if let Some((_, u_new)) = pending.take_if(|(t_act, _)| *t_act == t) {
            u = u_new;
            trace.first_actuation.get_or_insert(t);
            let label = if t == next_sample { GridLabel::Sample } else { GridLabel::Actuate };
            trace.relabel(label, &u);
        }
    }

    if let Some(delta) = scenario.delta {
        trace.safety = Some(check_safety(&trace, delta));
    }
    trace.stats = trace_stats(&trace);
    Ok(trace)
}

/// First grid time with `‖x(t)‖ ≥ δ`, if any.
pub fn check_safety(trace: &Trace, delta: f64) -> SafetyVerdict {
    let mut verdict = SafetyVerdict {
        violated_at: None,
        max_norm: 0.0,
    };
    for (t, x) in trace.times.iter().zip(&trace.states) {
        let r = linalg::norm(x);
        verdict.max_norm = verdict.max_norm.max(r);
        if verdict.violated_at.is_none() && !(r < delta) {
            verdict.violated_at = Some(*t);
        }
    }
    if trace.diverged && verdict.violated_at.is_none() {
        verdict.violated_at = trace.times.last().copied();
    }
    verdict
}

/// Difference-quotient check of `V̇ ≤ −(1−θ)·α3(‖x‖)` from the first
/// actuation on, skipping intervals that touch the certificate's inner ball.
pub fn check_lyapunov_decrease(trace: &Trace, cert: &LyapunovCertificate, theta: f64) -> DecreaseVerdict {
    const TOL: f64 = 1e-6;
    let mut verdict = DecreaseVerdict {
        checked: 0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        first_violation: None,
        sample_increases: 0,
    };
    let inner = cert.inner_radius();
    let start = trace.first_actuation.unwrap_or(f64::INFINITY);
    let alpha3 = |r: f64| cert.alpha3.eval(r).ok();
    let mut i = trace.times.partition_point(|&t| t < start);
    while i + 1 < trace.len() {
        let mut j = i + 1;
        while j + 1 < trace.len() && trace.times[j] - trace.times[i] < MIN_QUOTIENT_SPAN {
            j += 1;
        }
        let (ri, rj) = (linalg::norm(&trace.states[i]), linalg::norm(&trace.states[j]));
        if ri > inner && rj > inner {
            verdict.checked += 1;
            let q = (trace.v_values[j] - trace.v_values[i]) / (trace.times[j] - trace.times[i]);
            let margin = match (alpha3(ri), alpha3(rj)) {
                (Some(a), Some(b)) => q + (1.0 - theta) * a.min(b),
                _ => f64::INFINITY,
            };
            verdict.worst_margin = verdict.worst_margin.max(margin);
            if margin > TOL {
                verdict.violations += 1;
                verdict.first_violation.get_or_insert(trace.times[i]);
            }
        }
        i = j;
    }
    for pair in trace.events.windows(2) {
        if linalg::norm(&pair[0].x_k) > inner && cert.value(&pair[1].x_k) >= cert.value(&pair[0].x_k) {
            verdict.sample_increases += 1;
        }
    }
    verdict
}

fn empty_stats() -> TraceStats {
    TraceStats {
        samples: 0,
        duration: 0.0,
        mean_inter_sample: f64::NAN,
        min_inter_sample: f64::NAN,
        max_inter_sample: f64::NAN,
        mean_delay: f64::NAN,
        max_delay: f64::NAN,
    }
}

/// Sample count plus inter-sample and delay statistics. Inter-sample times
/// are gaps between recorded sampling instants; with a single event its
/// `τ_s` is used.
pub fn trace_stats(trace: &Trace) -> TraceStats {
    let mut stats = empty_stats();
    stats.samples = trace.events.len();
    stats.duration = match (trace.times.first(), trace.times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    if trace.events.is_empty() {
        return stats;
    }
    let gaps: Vec<f64> = if trace.events.len() == 1 {
        vec![trace.events[0].tau_s]
    } else {
        trace.events.windows(2).map(|w| w[1].t_k - w[0].t_k).collect()
    };
    stats.mean_inter_sample = gaps.iter().sum::<f64>() / gaps.len() as f64;
    stats.min_inter_sample = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    stats.max_inter_sample = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let delays: Vec<f64> = trace.events.iter().map(|e| e.delta_k).collect();
    stats.mean_delay = delays.iter().sum::<f64>() / delays.len() as f64;
    stats.max_delay = delays.iter().cloned().fold(0.0, f64::max);
    stats
}
