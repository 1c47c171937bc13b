//! Next-sampling-time computation and delay/perturbation budgets.
//!
//! Holding the stale input `κ(x_k)` perturbs the closed loop by the holding
//! error `d_h(t) = f0(x, κ(x_k)) − f0(x, κ(x))`. Its Taylor expansion around
//! `t_k` gives `‖d_h(t)‖ ≤ M1(x_k)·y + M2·y²` with `y = t − t_k`, where
//! `M1 = ‖φ1(x_k)‖` is the exact first derivative and `M2` bounds half the
//! second derivative over a region. The largest `y` keeping this below a
//! budget `c` is the raw hold time `τ'_s`; subtracting the delay budget
//! `Δ_max` gives the sampling time `τ_s`.
//!
//! The regional maxima (`M2`, `M3`, `τ_min`, admissibility) have no closed
//! form, so they are estimated by seeded uniform sampling and inflated by
//! [`BoundConfig::safety_margin`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FeedbackLaw, StateVector, SystemModel};
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::linalg;
use crate::lyapunov::{compose_chain, LyapunovCertificate};
use crate::region::{sample_ball, Region};

/// Stream offset for the per-sample level-set RNG, kept apart from the
/// precomputation stream.
const LEVEL_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Split of the unit decrease budget between holding (`θ1`), delay (`θ2`)
/// and perturbation (`θ_g`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerBudget {
    pub theta1: f64,
    pub theta2: f64,
    #[serde(default)]
    pub theta_g: f64,
}

impl TriggerBudget {
    pub fn new(theta1: f64, theta2: f64, theta_g: f64) -> Result<Self> {
        let b = TriggerBudget {
            theta1,
            theta2,
            theta_g,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.theta1) {
            return Err(Error::domain("theta1", self.theta1, 0.0, 1.0));
        }
        if !open(self.theta2) {
            return Err(Error::domain("theta2", self.theta2, 0.0, 1.0));
        }
        if !(self.theta_g >= 0.0 && self.theta_g < 1.0) {
            return Err(Error::domain("theta_g", self.theta_g, 0.0, 1.0));
        }
        if self.total() >= 1.0 {
            return Err(Error::usage(format!(
                "theta1 + theta2 + theta_g must be below 1, got {}",
                self.total()
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.theta1 + self.theta2 + self.theta_g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerMode {
    /// Lyapunov decrease; needs Lipschitz constants for `α3⁻¹` and `α4`.
    Stability,
    /// Invariance of `B_δ` for the nominal plant.
    SafetyNominal,
    /// Invariance of `B_δ` under a `δ`-admissible perturbation.
    SafetyPerturbed,
}

impl TriggerMode {
    pub fn is_safety(self) -> bool {
        !matches!(self, TriggerMode::Stability)
    }
}

/// Where `M2` is maximized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum M2Mode {
    /// One offline maximum over the policy region, paired over `(x̄, x_k)`.
    #[default]
    Global,
    /// Per sample: maximum over `{x : V(x) ≤ V(x_k)}` with `x_k` fixed.
    LevelSet,
}

/// Numerator of the delay budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DelayBudgetRule {
    /// `θ2`, the share left over for delays by the budget split.
    #[default]
    Split,
    /// `1 − θ1` (or `1 − θ1 − θ_g` when perturbed), the literal published
    /// bound.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub n_level_samples: usize,
    pub n_lipschitz_samples: usize,
    pub n_scan: usize,
    /// Time step of the ± integration used for the second derivative of `d_h`.
    pub fd_step: f64,
    pub safety_margin: f64,
    pub tau_cap: f64,
    pub tau_floor: f64,
    pub m2_mode: M2Mode,
    pub seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            n_level_samples: 400,
            n_lipschitz_samples: 2000,
            n_scan: 200,
            fd_step: 1e-3,
            safety_margin: 1.25,
            tau_cap: 1e3,
            tau_floor: 1e-6,
            m2_mode: M2Mode::Global,
            seed: 0,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        self.validate_counts()?;
        if !(self.safety_margin >= 1.0 && self.safety_margin.is_finite()) {
            return Err(Error::usage(format!(
                "safety_margin must be at least 1, got {}",
                self.safety_margin
            )));
        }
        Ok(())
    }

    /// Everything except the margin floor. Used when deliberately running
    /// with an unsound margin to exercise the bound validators.
    pub fn validate_counts(&self) -> Result<()> {
        if self.n_level_samples == 0 || self.n_lipschitz_samples == 0 || self.n_scan == 0 {
            return Err(Error::usage("sample counts must be positive"));
        }
        for (name, v) in [
            ("fd_step", self.fd_step),
            ("safety_margin", self.safety_margin),
            ("tau_cap", self.tau_cap),
            ("tau_floor", self.tau_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau_floor >= self.tau_cap {
            return Err(Error::usage("tau_floor must be below tau_cap"));
        }
        Ok(())
    }
}

/// Offline bounds attached to a policy by [`TriggerPolicy::precompute`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Precomputed {
    /// Regional `M2`; absent in level-set mode where it is per sample.
    pub m2: Option<f64>,
    pub m3: f64,
    pub tau_min: f64,
    pub delta_max: f64,
}

/// Factors of `M3 = L_f0·L_κ·L_x`, each already inflated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M3Estimate {
    pub l_f0: f64,
    pub l_kappa: f64,
    pub l_x: f64,
}

impl M3Estimate {
    pub fn m3(&self) -> f64 {
        self.l_f0 * self.l_kappa * self.l_x
    }
}

/// Per-sample trigger quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerEval {
    pub m1: f64,
    pub m2: f64,
    pub tau_prime: f64,
    pub tau_s: f64,
}

#[derive(Clone, Debug)]
pub struct TriggerPolicy {
    mode: TriggerMode,
    budget: TriggerBudget,
    delta: Option<f64>,
    cert: LyapunovCertificate,
    bounds: BoundConfig,
    rule: DelayBudgetRule,
    sys: SystemModel,
    fb: FeedbackLaw,
    region: Region,
    precomputed: Option<Precomputed>,
}

impl TriggerPolicy {
    /// Safety policy on `B_δ`. `perturbed` selects the mode that reserves
    /// `θ_g` for the perturbation.
    pub fn safety(
        sys: SystemModel,
        fb: FeedbackLaw,
        cert: LyapunovCertificate,
        delta: f64,
        budget: TriggerBudget,
        perturbed: bool,
        bounds: BoundConfig,
    ) -> Result<Self> {
        budget.validate()?;
        bounds.validate_counts()?;
        check_pair(&sys, &fb)?;
        if !(delta > 0.0 && delta <= cert.valid_radius()) {
            return Err(Error::domain("safe radius delta", delta, 0.0, cert.valid_radius()));
        }
        let mode = if perturbed {
            if budget.theta_g <= 0.0 {
                return Err(Error::usage("perturbed safety mode needs theta_g > 0"));
            }
            TriggerMode::SafetyPerturbed
        } else {
            if budget.theta_g != 0.0 {
                return Err(Error::usage("theta_g is only meaningful in perturbed safety mode"));
            }
            TriggerMode::SafetyNominal
        };
        let region = Region::ball(sys.state_dim(), delta)?;
        Ok(TriggerPolicy {
            mode,
            budget,
            delta: Some(delta),
            cert,
            bounds,
            rule: DelayBudgetRule::default(),
            sys,
            fb,
            region,
            precomputed: None,
        })
    }

    /// Stability policy on the sublevel set `Ω_{V(x0)}` inside the working
    /// ball.
    pub fn stability(
        sys: SystemModel,
        fb: FeedbackLaw,
        cert: LyapunovCertificate,
        x0: &StateVector,
        budget: TriggerBudget,
        bounds: BoundConfig,
    ) -> Result<Self> {
        budget.validate()?;
        bounds.validate_counts()?;
        check_pair(&sys, &fb)?;
        if budget.theta_g != 0.0 {
            return Err(Error::usage("theta_g is only meaningful in perturbed safety mode"));
        }
        lipschitz_pair(&cert)?;
        let radius = cert.valid_radius().min(sys.domain_radius());
        if x0.dim() != sys.state_dim() {
            return Err(Error::Dimension {
                what: "x0",
                expected: sys.state_dim(),
                got: x0.dim(),
            });
        }
        if x0.norm() > radius {
            return Err(Error::domain("‖x0‖", x0.norm(), 0.0, radius));
        }
        let region = Region::level_set(&cert, sys.state_dim(), cert.value(x0.as_slice()), radius)?;
        Ok(TriggerPolicy {
            mode: TriggerMode::Stability,
            budget,
            delta: None,
            cert,
            bounds,
            rule: DelayBudgetRule::default(),
            sys,
            fb,
            region,
            precomputed: None,
        })
    }

    pub fn with_rule(mut self, rule: DelayBudgetRule) -> Self {
        self.rule = rule;
        self.precomputed = None;
        self
    }

    pub fn mode(&self) -> TriggerMode {
        self.mode
    }

    pub fn budget(&self) -> &TriggerBudget {
        &self.budget
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn certificate(&self) -> &LyapunovCertificate {
        &self.cert
    }

    pub fn bounds(&self) -> &BoundConfig {
        &self.bounds
    }

    pub fn rule(&self) -> DelayBudgetRule {
        self.rule
    }

    pub fn system(&self) -> &SystemModel {
        &self.sys
    }

    pub fn feedback(&self) -> &FeedbackLaw {
        &self.fb
    }

    /// Region over which `M2`, `M3` and `τ_min` are taken.
    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn precomputed(&self) -> Option<&Precomputed> {
        self.precomputed.as_ref()
    }

    /// Radius for level-set clipping: the certificate and plant domains.
    pub fn working_radius(&self) -> f64 {
        self.cert.valid_radius().min(self.sys.domain_radius())
    }

    /// Computes regional `M2` (global mode), `M3`, `τ_min` and `Δ_max`.
    pub fn precompute(mut self) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.bounds.seed);
        let m2 = match self.bounds.m2_mode {
            M2Mode::Global => Some(estimate_m2(&self.sys, &self.fb, &self.region, None, &self.bounds, &mut rng)?),
            M2Mode::LevelSet => None,
        };
        let m3 = estimate_m3(&self.sys, &self.fb, &self.region, &self.bounds, &mut rng)?.m3();
        let tau_min = self.scan_with(m2, &self.region, self.bounds.n_scan, &mut rng)?;
        let delta_max = self.compute_delta_max(m3, tau_min)?;
        self.precomputed = Some(Precomputed {
            m2,
            m3,
            tau_min,
            delta_max,
        });
        Ok(self)
    }

    /// Budget `c` on the right of `M1·y + M2·y² ≤ c`.
    pub fn rhs(&self) -> Result<f64> {
        match self.mode {
            TriggerMode::Stability => {
                let (l3inv, l4) = lipschitz_pair(&self.cert)?;
                Ok(self.budget.theta1 / (l3inv * l4))
            }
            _ => {
                let delta = self.delta.expect("safety policy carries delta");
                Ok(self.budget.theta1 * compose_chain(&self.cert, delta)? / self.cert.alpha4.eval(delta)?)
            }
        }
    }

    fn delay_numerator(&self) -> f64 {
        match (self.rule, self.mode) {
            (DelayBudgetRule::Split, _) => self.budget.theta2,
            (DelayBudgetRule::Printed, TriggerMode::SafetyPerturbed) => 1.0 - self.budget.theta1 - self.budget.theta_g,
            (DelayBudgetRule::Printed, _) => 1.0 - self.budget.theta1,
        }
    }

    /// `Δ_max = min{numerator / (M3·scale), τ_min}`; `τ_min` when `M3 = 0`.
    pub fn compute_delta_max(&self, m3: f64, tau_min: f64) -> Result<f64> {
        if !(m3 >= 0.0) || !(tau_min > 0.0) {
            return Err(Error::usage("compute_delta_max needs M3 ≥ 0 and tau_min > 0"));
        }
        if m3 == 0.0 {
            return Ok(tau_min);
        }
        let num = self.delay_numerator();
        let bound = match self.mode {
            TriggerMode::Stability => {
                let (l3inv, l4) = lipschitz_pair(&self.cert)?;
                num / (m3 * l3inv * l4)
            }
            _ => {
                let delta = self.delta.expect("safety policy carries delta");
                num * compose_chain(&self.cert, delta)? / (self.cert.alpha4.eval(delta)? * m3)
            }
        };
        Ok(bound.min(tau_min))
    }

    fn check_domain(&self, x_k: &[f64]) -> Result<()> {
        if x_k.len() != self.sys.state_dim() {
            return Err(Error::Dimension {
                what: "x_k",
                expected: self.sys.state_dim(),
                got: x_k.len(),
            });
        }
        let r = linalg::norm(x_k);
        let hi = self.delta.unwrap_or_else(|| self.working_radius());
        if !(r <= hi) {
            return Err(Error::domain("‖x_k‖", r, 0.0, hi));
        }
        Ok(())
    }

    fn m2_at(&self, x_k: &[f64], global: Option<f64>) -> Result<f64> {
        if let Some(m2) = global {
            return Ok(m2);
        }
        let level = self.cert.value(x_k);
        let region = Region::level_set(&self.cert, self.sys.state_dim(), level, self.working_radius())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.bounds.seed ^ LEVEL_STREAM);
        estimate_m2(&self.sys, &self.fb, &region, Some(x_k), &self.bounds, &mut rng)
    }

    /// `(M1, M2, τ'_s)` at `x_k` using `global` as `M2` when given.
    fn raw_hold(&self, x_k: &[f64], global: Option<f64>) -> Result<(f64, f64, f64)> {
        let m1 = linalg::norm(&compute_phi1(&self.sys, &self.fb, x_k)?);
        let m2 = self.m2_at(x_k, global)?;
        let tau = solve_hold_inequality(m1, m2, self.rhs()?, self.bounds.tau_cap)?;
        Ok((m1, m2, tau))
    }

    fn scan_with<R: Rng + ?Sized>(&self, global: Option<f64>, region: &Region, n_scan: usize, rng: &mut R) -> Result<f64> {
        let mut best = f64::INFINITY;
        for _ in 0..n_scan.max(1) {
            let x = region.sample(rng);
            best = best.min(self.raw_hold(&x, global)?.2);
        }
        Ok(best)
    }

    /// Minimum of `τ'_s` over `n_scan` samples of `region`.
    pub fn scan_tau_min<R: Rng + ?Sized>(&self, region: &Region, n_scan: usize, rng: &mut R) -> Result<f64> {
        let global = self.precomputed.as_ref().and_then(|p| p.m2);
        let global = match (self.bounds.m2_mode, global) {
            (M2Mode::Global, None) => Some(estimate_m2(&self.sys, &self.fb, &self.region, None, &self.bounds, rng)?),
            (_, g) => g,
        };
        self.scan_with(global, region, n_scan, rng)
    }

    /// Full trigger evaluation at `x_k`; requires [`precompute`](Self::precompute).
    pub fn evaluate(&self, x_k: &StateVector) -> Result<TriggerEval> {
        let pre = self
            .precomputed
            .as_ref()
            .ok_or_else(|| Error::usage("trigger policy used before precompute()"))?;
        self.check_domain(x_k.as_slice())?;
        let (m1, m2, tau_prime) = self.raw_hold(x_k.as_slice(), pre.m2)?;
        let tau_s = (tau_prime - pre.delta_max).max(self.bounds.tau_floor);
        Ok(TriggerEval {
            m1,
            m2,
            tau_prime,
            tau_s,
        })
    }

    /// `τ_s(x_k) = max{τ'_s(x_k) − Δ_max, tau_floor}`.
    pub fn next_sample_time(&self, x_k: &StateVector) -> Result<f64> {
        Ok(self.evaluate(x_k)?.tau_s)
    }

    /// `ν(δ)` for this policy's certificate, radius and `θ_g`.
    pub fn nu(&self) -> Result<Option<f64>> {
        match (self.mode, self.delta) {
            (TriggerMode::SafetyPerturbed, Some(d)) => Ok(Some(nu_threshold(&self.cert, d, self.budget.theta_g)?)),
            _ => Ok(None),
        }
    }
}

fn check_pair(sys: &SystemModel, fb: &FeedbackLaw) -> Result<()> {
    if sys.state_dim() != fb.state_dim() || sys.input_dim() != fb.input_dim() {
        return Err(Error::usage("feedback law dimensions do not match the system"));
    }
    Ok(())
}

fn lipschitz_pair(cert: &LyapunovCertificate) -> Result<(f64, f64)> {
    match (cert.alpha3.inverse_lipschitz(), cert.alpha4.lipschitz()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Config(
            "stability mode needs declared Lipschitz constants for the inverse of alpha3 and for alpha4".into(),
        )),
    }
}

/// `φ1(x_k) = −(∂f0/∂u)(x_k, κ(x_k))·Dκ(x_k)·f0(x_k, κ(x_k))`, the first
/// right derivative of `d_h` at `t_k`.
pub fn compute_phi1(sys: &SystemModel, fb: &FeedbackLaw, x_k: &[f64]) -> Result<Vec<f64>> {
    let xs = StateVector::new(x_k.to_vec())?;
    let u = fb.eval(&xs)?;
    let f = sys.eval_nominal(&xs, &u)?;
    let dfdu = sys.jacobians(&xs, &u)?.dfdu;
    let dk = fb.jacobian(&xs)?;
    let kf = dk.mul_vec(f.as_slice())?;
    let phi: Vec<f64> = dfdu.mul_vec(&kf)?.into_iter().map(|v| -v).collect();
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("phi1"));
    }
    Ok(phi)
}

/// `½·d²d_h/dt²` at `x̄` along the flow held at `κ(x_k)`, by one RK4 step
/// each way and a central second difference.
pub fn phi2(sys: &SystemModel, fb: &FeedbackLaw, x_bar: &[f64], x_k: &[f64], fd_step: f64) -> Vec<f64> {
    let u_k = fb.eval_raw(x_k);
    let field = |x: &[f64]| sys.nominal_raw(x, &u_k);
    let d_h = |x: &[f64]| {
        let held = sys.nominal_raw(x, &u_k);
        let fresh = sys.nominal_raw(x, &fb.eval_raw(x));
        linalg::sub(&held, &fresh)
    };
    let xp = rk4_step(&field, x_bar, fd_step);
    let xm = rk4_step(&field, x_bar, -fd_step);
    let (dp, d0, dm) = (d_h(&xp), d_h(x_bar), d_h(&xm));
    let scale = 0.5 / (fd_step * fd_step);
    (0..dp.len()).map(|i| (dp[i] - 2.0 * d0[i] + dm[i]) * scale).collect()
}

/// `safety_margin × max ‖φ2(x̄, x_k)‖` over `n_level_samples` draws of `x̄`
/// from `region`. With `anchor = Some(x_k)` the held state is fixed (and
/// `x̄ = x_k` is included); otherwise `x_k` is drawn from `region` too.
pub fn estimate_m2<R: Rng + ?Sized>(
    sys: &SystemModel,
    fb: &FeedbackLaw,
    region: &Region,
    anchor: Option<&[f64]>,
    bounds: &BoundConfig,
    rng: &mut R,
) -> Result<f64> {
    if bounds.n_level_samples == 0 {
        return Err(Error::usage("M2 estimation needs at least one sample"));
    }
    let mut best = 0.0f64;
    if let Some(x_k) = anchor {
        best = linalg::norm(&phi2(sys, fb, x_k, x_k, bounds.fd_step));
    }
    for _ in 0..bounds.n_level_samples {
        let x_bar = region.sample(rng);
        let held;
        let x_k = match anchor {
            Some(x) => x,
            None => {
                held = region.sample(rng);
                &held
            }
        };
        best = best.max(linalg::norm(&phi2(sys, fb, &x_bar, x_k, bounds.fd_step)));
    }
    if !best.is_finite() {
        return Err(Error::NonFinite("M2"));
    }
    Ok(best * bounds.safety_margin)
}

/// Sampled `L_f0 = max‖∂f0/∂u‖`, `L_κ = max‖Dκ‖`, `L_x = max‖f0(x, κ(x_k))‖`
/// over pairs `(x, x_k)` in `region`, each inflated by the margin.
pub fn estimate_m3<R: Rng + ?Sized>(
    sys: &SystemModel,
    fb: &FeedbackLaw,
    region: &Region,
    bounds: &BoundConfig,
    rng: &mut R,
) -> Result<M3Estimate> {
    let (mut l_f0, mut l_kappa, mut l_x) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..bounds.n_lipschitz_samples.max(1) {
        let x = StateVector::new(region.sample(rng))?;
        let x_k = StateVector::new(region.sample(rng))?;
        let u_k = fb.eval(&x_k)?;
        l_f0 = l_f0.max(sys.jacobians(&x, &u_k)?.dfdu.spectral_norm());
        l_kappa = l_kappa.max(fb.jacobian(&x)?.spectral_norm());
        l_x = l_x.max(sys.eval_nominal(&x, &u_k)?.norm());
    }
    let m = bounds.safety_margin;
    Ok(M3Estimate {
        l_f0: l_f0 * m,
        l_kappa: l_kappa * m,
        l_x: l_x * m,
    })
}

/// Largest `y ≥ 0` with `M1·y + M2·y² ≤ c`, capped at `tau_cap`.
pub fn solve_hold_inequality(m1: f64, m2: f64, c: f64, tau_cap: f64) -> Result<f64> {
    if !(m1 >= 0.0 && m2 >= 0.0 && m1.is_finite() && m2.is_finite()) {
        return Err(Error::usage(format!("M1, M2 must be finite and non-negative, got {m1}, {m2}")));
    }
    if !(c > 0.0) {
        return Err(Error::NoSolution(format!("hold budget c = {c} admits no positive hold time")));
    }
    if m1 == 0.0 && m2 == 0.0 {
        return Ok(tau_cap);
    }
    // Rationalized root: no cancellation when 4·M2·c ≪ M1².
    let y = 2.0 * c / (m1 + (m1 * m1 + 4.0 * m2 * c).sqrt());
    Ok(y.min(tau_cap))
}

/// `ν(δ) = θ_g·α3(α2⁻¹(α1(δ)))/α4(δ)`.
pub fn nu_threshold(cert: &LyapunovCertificate, delta: f64, theta_g: f64) -> Result<f64> {
    if !(theta_g > 0.0 && theta_g < 1.0) {
        return Err(Error::domain("theta_g", theta_g, 0.0, 1.0));
    }
    Ok(theta_g * compose_chain(cert, delta)? / cert.alpha4.eval(delta)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// `ν(δ)` minus the inflated sampled maximum.
    pub margin: f64,
    pub sampled_max: f64,
    pub nu: f64,
}

/// Compares the inflated sampled maximum of `‖g(x, κ(x_k), μ, d)‖` over
/// `x, x_k ∈ B_δ` and the `μ`, `d` boxes against `ν(δ)`. Box corners are
/// visited explicitly since norms of affine terms peak there.
#[allow(clippy::too_many_arguments)]
pub fn check_admissible<R: Rng + ?Sized>(
    sys: &SystemModel,
    fb: &FeedbackLaw,
    cert: &LyapunovCertificate,
    delta: f64,
    theta_g: f64,
    n_samples: usize,
    safety_margin: f64,
    rng: &mut R,
) -> Result<Admissibility> {
    let nu = nu_threshold(cert, delta, theta_g)?;
    let n = sys.state_dim();
    let corners = box_corners(sys);
    let mut best = 0.0f64;
    for i in 0..n_samples.max(1) {
        let x = sample_ball(n, delta, rng);
        let x_k = sample_ball(n, delta, rng);
        let u = fb.eval_raw(&x_k);
        let (mu, d) = match corners.as_ref() {
            Some(c) if i % 2 == 0 => c[(i / 2) % c.len()].clone(),
            _ => (sys.mu_bounds().sample(rng), sys.d_bounds().sample(rng)),
        };
        best = best.max(linalg::norm(&sys.perturbation(&x, &u, &mu, &d)?));
    }
    let sampled_max = best * safety_margin;
    Ok(Admissibility {
        admissible: sampled_max <= nu,
        margin: nu - sampled_max,
        sampled_max,
        nu,
    })
}

type ParamPair = (Vec<f64>, Vec<f64>);

fn box_corners(sys: &SystemModel) -> Option<Vec<ParamPair>> {
    let (mb, db) = (sys.mu_bounds(), sys.d_bounds());
    let dims = mb.dim() + db.dim();
    if dims > 12 {
        return None;
    }
    let pick = |lo: &[f64], hi: &[f64], bits: usize, offset: usize| -> Vec<f64> {
        (0..lo.len())
            .map(|j| if bits >> (offset + j) & 1 == 1 { hi[j] } else { lo[j] })
            .collect()
    };
    Some(
        (0..1usize << dims)
            .map(|bits| {
                (
                    pick(&mb.lo, &mb.hi, bits, 0),
                    pick(&db.lo, &db.hi, bits, mb.dim()),
                )
            })
            .collect(),
    )
}
