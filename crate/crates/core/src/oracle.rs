//! Brute-force baselines for checking the trigger bounds.
//!
//! These are deliberately independent of the Taylor machinery in
//! [`trigger`](crate::trigger): hold times come from simulating the held
//! flow, maxima from dense sampling, and roots from bisection.

use rand::Rng;

use crate::dynamics::{FeedbackLaw, SystemModel};
use crate::error::{Error, Result};
use crate::integrate::{rk4_step, substeps};
use crate::linalg;
use crate::lyapunov::LyapunovCertificate;
use crate::region::Region;

const PRESCAN_POINTS: usize = 32;

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum HoldCriterion {
    /// `∇V·f0(x, κ(x_k)) ≤ −(1−θ)·α3(‖x‖)` outside the certificate's inner
    /// radius, and `x` stays within its valid radius.
    LyapunovDecrease { cert: LyapunovCertificate, theta: f64 },
    /// `‖x‖ < δ`, searched over holds up to `horizon`.
    SafetyBall { delta: f64, horizon: f64 },
}

impl HoldCriterion {
    fn holds(&self, x: &[f64], f: &[f64]) -> bool {
        match self {
            HoldCriterion::SafetyBall { delta, .. } => linalg::norm(x) < *delta,
            HoldCriterion::LyapunovDecrease { cert, theta } => {
                let r = linalg::norm(x);
                if r <= cert.inner_radius() {
                    return true;
                }
                match cert.alpha3.eval(r) {
                    Ok(a3) if r <= cert.valid_radius() => {
                        linalg::dot(&cert.gradient(x), f) <= -(1.0 - theta) * a3
                    }
                    _ => false,
                }
            }
        }
    }

    fn window(&self, h_max: f64) -> f64 {
        match self {
            HoldCriterion::SafetyBall { horizon, .. } => h_max.min(*horizon),
            HoldCriterion::LyapunovDecrease { .. } => h_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleHold {
    /// Largest passing hold duration found.
    pub hold: f64,
    /// The criterion already failed within `tol` of the start.
    pub failed_immediately: bool,
    /// No failure inside the search window; `hold` is the window length.
    pub censored: bool,
}

/// Largest hold `h ∈ (0, h_max]` for which the flow `ẋ = f0(x, κ(x_k))`
/// from `x_k` meets `criterion` on all of `[0, h]`.
///
/// One trajectory is integrated at `step` until the first grid failure.
/// A 32-point pre-scan over the window locates the first failing bracket,
/// which is then bisected to `tol`; the state at an off-grid `h` is reached
/// by one partial RK4 step from the preceding grid point.
pub fn oracle_hold_time(
    sys: &SystemModel,
    fb: &FeedbackLaw,
    x_k: &[f64],
    criterion: &HoldCriterion,
    h_max: f64,
    tol: f64,
    step: f64,
) -> Result<OracleHold> {
    if !(h_max > 0.0 && tol > 0.0 && step > 0.0) {
        return Err(Error::usage("oracle needs positive h_max, tol and step"));
    }
    if x_k.len() != sys.state_dim() {
        return Err(Error::Dimension {
            what: "x_k",
            expected: sys.state_dim(),
            got: x_k.len(),
        });
    }
    let u_k = fb.eval_raw(x_k);
    let field = |x: &[f64]| sys.nominal_raw(x, &u_k);
    let ok = |x: &[f64]| criterion.holds(x, &field(x));
    let window = criterion.window(h_max);
    if !ok(x_k) {
        return Ok(OracleHold {
            hold: 0.0,
            failed_immediately: true,
            censored: false,
        });
    }

    let n = substeps(window, step);
    let h = window / n as f64;
    let mut grid = vec![x_k.to_vec()];
    let mut first_fail = None;
    for i in 1..=n {
        let next = rk4_step(&field, &grid[i - 1], h);
        let pass = next.iter().all(|v| v.is_finite()) && ok(&next);
        grid.push(next);
        if !pass {
            first_fail = Some(i);
            break;
        }
    }
    let Some(first_fail) = first_fail else {
        return Ok(OracleHold {
            hold: window,
            failed_immediately: false,
            censored: true,
        });
    };

    // Passing on [0, s]: every grid point up to s passes and so does x(s).
    let passes = |s: f64| -> bool {
        let idx = ((s / h).floor() as usize).min(n);
        if idx >= first_fail {
            return false;
        }
        let rem = s - idx as f64 * h;
        if rem <= 0.0 {
            return true;
        }
        let end = rk4_step(&field, &grid[idx], rem);
        end.iter().all(|v| v.is_finite()) && ok(&end)
    };

    let mut lo = 0.0;
    let mut hi = window;
    for j in 1..=PRESCAN_POINTS {
        let s = window * j as f64 / PRESCAN_POINTS as f64;
        if !passes(s) {
            hi = s;
            break;
        }
        lo = s;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(OracleHold {
        hold: lo,
        failed_immediately: lo == 0.0,
        censored: false,
    })
}

/// Dense-sampling maximum of `‖field(z)‖` where `z` concatenates one
/// uniform draw from each factor region.
pub fn oracle_max_norm<F, R>(field: F, factors: &[Region], n_dense: usize, rng: &mut R) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    R: Rng + ?Sized,
{
    let mut best = 0.0f64;
    let mut z = Vec::with_capacity(factors.iter().map(Region::dim).sum());
    for _ in 0..n_dense {
        z.clear();
        for region in factors {
            z.extend(region.sample(rng));
        }
        best = best.max(linalg::norm(&field(&z)));
    }
    best
}

/// Bisection for the largest `y` with `M1·y + M2·y² ≤ c`. Stops once the
/// bracket is below `tol·(1 + y)`. Returns infinity when `M1 = M2 = 0`.
pub fn oracle_root(m1: f64, m2: f64, c: f64, tol: f64) -> Result<f64> {
    if !(m1 >= 0.0 && m2 >= 0.0) {
        return Err(Error::usage("M1, M2 must be non-negative"));
    }
    if !(c > 0.0) {
        return Err(Error::NoSolution(format!("hold budget c = {c} admits no positive hold time")));
    }
    if m1 == 0.0 && m2 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let g = |y: f64| m1 * y + m2 * y * y;
    let mut hi = 1.0;
    while g(hi) <= c {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > tol * (1.0 + lo) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
