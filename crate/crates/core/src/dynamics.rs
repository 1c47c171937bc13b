//! Plant models, feedback laws and their derivative information.
//!
//! A plant is described by its nominal vector field `f0(x, u)` and an
//! optional perturbation term `g(x, u, μ, d)` so that the perturbed field is
//! `f0 + g`. Callbacks are reference counted, so models are cheap to clone
//! and can be shared across threads.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub type VectorField = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type PerturbationField = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&[f64], &[f64]) -> Matrix + Send + Sync>;
pub type StateMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type StateJacobian = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Wraps the components, rejecting empty or non-finite input.
            pub fn new(components: Vec<f64>) -> Result<Self> {
                if components.is_empty() {
                    return Err(Error::usage(concat!($what, " must have positive dimension")));
                }
                if components.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFinite($what));
                }
                Ok($name(components))
            }

            pub fn zeros(dim: usize) -> Self {
                $name(vec![0.0; dim])
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn norm(&self) -> f64 {
                linalg::norm(&self.0)
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;

            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }

        impl AsRef<[f64]> for $name {
            fn as_ref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

real_vector!(
    /// Plant state `x`.
    StateVector,
    "state vector"
);
real_vector!(
    /// Plant input `u`.
    ControlVector,
    "control vector"
);

/// Axis-aligned box `[lo_i, hi_i]`, used for the uncertainty sets of `μ` and `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                what: "box bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::usage("box bounds must be finite with lo <= hi"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| *l > 0.0 || *h < 0.0) {
            return Err(Error::usage("uncertainty box must contain the origin"));
        }
        Ok(BoxSet { lo, hi })
    }

    /// The degenerate box `{0}` of the given dimension.
    pub fn origin(dim: usize) -> Self {
        BoxSet {
            lo: vec![0.0; dim],
            hi: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// Domain error naming the first component outside the box.
    pub fn check(&self, name: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                what: "uncertainty vector",
                expected: self.dim(),
                got: v.len(),
            });
        }
        for (i, (x, (l, h))) in v.iter().zip(self.lo.iter().zip(&self.hi)).enumerate() {
            if !(*l <= *x && *x <= *h) {
                return Err(Error::domain(format!("{name}[{i}]"), *x, *l, *h));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..=h) })
            .collect()
    }
}

/// Nominal and perturbed plant dynamics.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    n: usize,
    p: usize,
    nominal: VectorField,
    perturbation: Option<PerturbationField>,
    mu_bounds: BoxSet,
    d_bounds: BoxSet,
    domain_radius: f64,
    jac_x: Option<MatrixField>,
    jac_u: Option<MatrixField>,
    fd_scale: f64,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("domain_radius", &self.domain_radius)
            .field("mu_bounds", &self.mu_bounds)
            .field("d_bounds", &self.d_bounds)
            .field("analytic_jacobians", &self.jac_x.is_some())
            .finish()
    }
}

impl SystemModel {
    /// A nominal-only model; the perturbation term defaults to zero.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        p: usize,
        domain_radius: f64,
        nominal: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("state dimension must be positive"));
        }
        if !(domain_radius > 0.0 && domain_radius.is_finite()) {
            return Err(Error::usage("working-region radius must be positive and finite"));
        }
        Ok(SystemModel {
            name: name.into(),
            n,
            p,
            nominal: Arc::new(nominal),
            perturbation: None,
            mu_bounds: BoxSet::origin(0),
            d_bounds: BoxSet::origin(0),
            domain_radius,
            jac_x: None,
            jac_u: None,
            fd_scale: 1e-6,
        })
    }

    /// Attaches `g(x, u, μ, d)`, declaring the dimensions of `μ` and `d`
    /// through the supplied boxes.
    pub fn with_perturbation(
        mut self,
        g: impl Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        mu_bounds: BoxSet,
        d_bounds: BoxSet,
    ) -> Self {
        self.perturbation = Some(Arc::new(g));
        self.mu_bounds = mu_bounds;
        self.d_bounds = d_bounds;
        self
    }

    /// Replaces the uncertainty boxes while keeping their dimensions.
    pub fn with_bounds(mut self, mu_bounds: BoxSet, d_bounds: BoxSet) -> Result<Self> {
        if mu_bounds.dim() != self.mu_bounds.dim() {
            return Err(Error::Dimension {
                what: "mu bounds",
                expected: self.mu_bounds.dim(),
                got: mu_bounds.dim(),
            });
        }
        if d_bounds.dim() != self.d_bounds.dim() {
            return Err(Error::Dimension {
                what: "disturbance bounds",
                expected: self.d_bounds.dim(),
                got: d_bounds.dim(),
            });
        }
        self.mu_bounds = mu_bounds;
        self.d_bounds = d_bounds;
        Ok(self)
    }

    pub fn with_jacobians(
        mut self,
        dfdx: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static,
        dfdu: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.jac_x = Some(Arc::new(dfdx));
        self.jac_u = Some(Arc::new(dfdu));
        self
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::usage("working-region radius must be positive and finite"));
        }
        self.domain_radius = radius;
        Ok(self)
    }

    /// Relative step factor for central differences: `h = scale · (1 + ‖x‖)`.
    pub fn with_fd_scale(mut self, scale: f64) -> Self {
        self.fd_scale = scale;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.p
    }

    pub fn mu_dim(&self) -> usize {
        self.mu_bounds.dim()
    }

    pub fn d_dim(&self) -> usize {
        self.d_bounds.dim()
    }

    pub fn mu_bounds(&self) -> &BoxSet {
        &self.mu_bounds
    }

    pub fn d_bounds(&self) -> &BoxSet {
        &self.d_bounds
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn has_perturbation(&self) -> bool {
        self.perturbation.is_some()
    }

    fn check_xu(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                what: "state",
                expected: self.n,
                got: x.len(),
            });
        }
        if u.len() != self.p {
            return Err(Error::Dimension {
                what: "control",
                expected: self.p,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `f0(x, u)` without validation; used in integrator inner loops.
    pub(crate) fn nominal_raw(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.nominal)(x, u)
    }

    /// `f0 + g` without validation.
    pub(crate) fn perturbed_raw(&self, x: &[f64], u: &[f64], mu: &[f64], d: &[f64]) -> Vec<f64> {
        let mut f = (self.nominal)(x, u);
        if let Some(g) = &self.perturbation {
            for (fi, gi) in f.iter_mut().zip(g(x, u, mu, d)) {
                *fi += gi;
            }
        }
        f
    }

    pub fn eval_nominal(&self, x: &StateVector, u: &ControlVector) -> Result<StateVector> {
        self.check_xu(x.as_slice(), u.as_slice())?;
        let f = self.nominal_raw(x.as_slice(), u.as_slice());
        if f.len() != self.n {
            return Err(Error::Dimension {
                what: "nominal field output",
                expected: self.n,
                got: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nominal vector field"));
        }
        Ok(StateVector(f))
    }

    /// `g(x, u, μ, d)`; identically zero when no perturbation is attached.
    pub fn perturbation(&self, x: &[f64], u: &[f64], mu: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        self.check_xu(x, u)?;
        self.mu_bounds.check("μ", mu)?;
        self.d_bounds.check("d", d)?;
        let g = match &self.perturbation {
            Some(g) => g(x, u, mu, d),
            None => vec![0.0; self.n],
        };
        if g.len() != self.n {
            return Err(Error::Dimension {
                what: "perturbation output",
                expected: self.n,
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("perturbation field"));
        }
        Ok(g)
    }

    pub fn eval_perturbed(
        &self,
        x: &StateVector,
        u: &ControlVector,
        mu: &[f64],
        d: &[f64],
    ) -> Result<StateVector> {
        let f0 = self.eval_nominal(x, u)?;
        let g = self.perturbation(x.as_slice(), u.as_slice(), mu, d)?;
        Ok(StateVector(linalg::axpy(1.0, &g, f0.as_slice())))
    }

    /// `d_h = f0(x, κ(x_k)) − f0(x, κ(x))`, the field error caused by
    /// holding the input computed at `x_k`.
    pub fn holding_error(
        &self,
        fb: &FeedbackLaw,
        x: &StateVector,
        x_k: &StateVector,
    ) -> Result<StateVector> {
        let held = fb.eval(x_k)?;
        let fresh = fb.eval(x)?;
        let a = self.eval_nominal(x, &held)?;
        let b = self.eval_nominal(x, &fresh)?;
        Ok(StateVector(linalg::sub(a.as_slice(), b.as_slice())))
    }

    /// Jacobians of `f0` at `(x, u)`: analytic when provided, central
    /// differences otherwise.
    pub fn jacobians(&self, x: &StateVector, u: &ControlVector) -> Result<JacobianBundle> {
        self.check_xu(x.as_slice(), u.as_slice())?;
        let (dfdx, dfdu) = match (&self.jac_x, &self.jac_u) {
            (Some(jx), Some(ju)) => (jx(x.as_slice(), u.as_slice()), ju(x.as_slice(), u.as_slice())),
            _ => {
                let h = self.fd_scale * (1.0 + x.norm());
                return self.jacobians_fd(x, u, h);
            }
        };
        JacobianBundle::checked(dfdx, dfdu, x, u, self.n, self.p)
    }

    /// Central-difference Jacobians with an explicit step.
    pub fn jacobians_fd(&self, x: &StateVector, u: &ControlVector, h: f64) -> Result<JacobianBundle> {
        self.check_xu(x.as_slice(), u.as_slice())?;
        let xs = x.as_slice();
        let us = u.as_slice();
        let dfdx = central_difference(self.n, self.n, h, |dir, step| {
            let mut xp = xs.to_vec();
            xp[dir] += step;
            self.nominal_raw(&xp, us)
        });
        let dfdu = central_difference(self.n, self.p, h, |dir, step| {
            let mut up = us.to_vec();
            up[dir] += step;
            self.nominal_raw(xs, &up)
        });
        JacobianBundle::checked(dfdx, dfdu, x, u, self.n, self.p)
    }
}

fn central_difference(
    out_dim: usize,
    in_dim: usize,
    h: f64,
    f: impl Fn(usize, f64) -> Vec<f64>,
) -> Matrix {
    let mut m = Matrix::zeros(out_dim, in_dim);
    for j in 0..in_dim {
        let fp = f(j, h);
        let fm = f(j, -h);
        for i in 0..out_dim {
            m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    m
}

/// Jacobians of the nominal field at one evaluation point.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianBundle {
    pub dfdx: Matrix,
    pub dfdu: Matrix,
    pub x: StateVector,
    pub u: ControlVector,
}

impl JacobianBundle {
    fn checked(
        dfdx: Matrix,
        dfdu: Matrix,
        x: &StateVector,
        u: &ControlVector,
        n: usize,
        p: usize,
    ) -> Result<Self> {
        if dfdx.rows() != n || dfdx.cols() != n {
            return Err(Error::Dimension {
                what: "df/dx",
                expected: n * n,
                got: dfdx.rows() * dfdx.cols(),
            });
        }
        if dfdu.rows() != n || dfdu.cols() != p {
            return Err(Error::Dimension {
                what: "df/du",
                expected: n * p,
                got: dfdu.rows() * dfdu.cols(),
            });
        }
        if !dfdx.is_finite() || !dfdu.is_finite() {
            return Err(Error::NonFinite("Jacobian"));
        }
        Ok(JacobianBundle {
            dfdx,
            dfdu,
            x: x.clone(),
            u: u.clone(),
        })
    }
}

/// State feedback `u = κ(x)`.
#[derive(Clone)]
pub struct FeedbackLaw {
    name: String,
    n: usize,
    p: usize,
    kappa: StateMap,
    jacobian: Option<StateJacobian>,
}

impl fmt::Debug for FeedbackLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackLaw")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl FeedbackLaw {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        p: usize,
        kappa: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FeedbackLaw {
            name: name.into(),
            n,
            p,
            kappa: Arc::new(kappa),
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Linear feedback `u = K x`.
    pub fn linear(k: Matrix) -> Self {
        let (p, n) = (k.rows(), k.cols());
        let kk = k.clone();
        FeedbackLaw::new("linear", n, p, move |x| kk.mul_vec(x).expect("dimension checked"))
            .with_jacobian(move |_| k.clone())
    }

    /// State-independent input.
    pub fn constant(n: usize, u: Vec<f64>) -> Self {
        let p = u.len();
        FeedbackLaw::new("constant", n, p, move |_| u.clone())
            .with_jacobian(move |_| Matrix::zeros(p, n))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.p
    }

    pub(crate) fn eval_raw(&self, x: &[f64]) -> Vec<f64> {
        (self.kappa)(x)
    }

    pub fn eval(&self, x: &StateVector) -> Result<ControlVector> {
        if x.dim() != self.n {
            return Err(Error::Dimension {
                what: "feedback input",
                expected: self.n,
                got: x.dim(),
            });
        }
        let u = self.eval_raw(x.as_slice());
        if u.len() != self.p {
            return Err(Error::Dimension {
                what: "feedback output",
                expected: self.p,
                got: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feedback law"));
        }
        Ok(ControlVector(u))
    }

    /// `Dκ(x)` as a `p × n` matrix; central differences when no analytic
    /// Jacobian was supplied.
    pub fn jacobian(&self, x: &StateVector) -> Result<Matrix> {
        let m = match &self.jacobian {
            Some(j) => j(x.as_slice()),
            None => {
                let h = 1e-6 * (1.0 + x.norm());
                let xs = x.as_slice();
                central_difference(self.p, self.n, h, |dir, step| {
                    let mut xp = xs.to_vec();
                    xp[dir] += step;
                    self.eval_raw(&xp)
                })
            }
        };
        if m.rows() != self.p || m.cols() != self.n {
            return Err(Error::Dimension {
                what: "feedback Jacobian",
                expected: self.p * self.n,
                got: m.rows() * m.cols(),
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("feedback Jacobian"));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    fn cv(v: &[f64]) -> ControlVector {
        ControlVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn example1_nominal_values() {
        let (sys, _) = systems::example1();
        assert_eq!(sys.eval_nominal(&sv(&[0.0, 0.0]), &cv(&[0.0])).unwrap(), sv(&[0.0, 0.0]));
        assert_eq!(sys.eval_nominal(&sv(&[1.0, 1.0]), &cv(&[-1.0])).unwrap(), sv(&[1.0, -2.0]));
        let f = sys.eval_nominal(&sv(&[0.1, 0.1]), &cv(&[-0.1])).unwrap();
        assert!((f[0] - 0.01).abs() < 1e-15);
        assert!((f[1] + 0.11).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let (sys, _) = systems::example1();
        let err = sys.eval_nominal(&sv(&[0.0]), &cv(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn non_finite_field_is_numeric_error() {
        let sys = SystemModel::new("blowup", 1, 1, 1.0, |x, _| vec![1.0 / x[0]]).unwrap();
        let err = sys.eval_nominal(&sv(&[0.0]), &cv(&[0.0])).unwrap_err();
        assert_eq!(err, Error::NonFinite("nominal vector field"));
    }

    #[test]
    fn perturbed_reduces_to_nominal_at_zero_uncertainty() {
        let (sys, _) = systems::example1();
        let x = sv(&[0.2, -0.1]);
        let u = cv(&[0.3]);
        let a = sys.eval_perturbed(&x, &u, &[0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(a, sys.eval_nominal(&x, &u).unwrap());
    }

    #[test]
    fn additive_disturbance_shows_up_verbatim() {
        let (sys, _) = systems::example1();
        let sys = sys
            .with_bounds(BoxSet::origin(1), BoxSet::new(vec![0.0, 0.0], vec![0.0, 1.0]).unwrap())
            .unwrap();
        let f = sys
            .eval_perturbed(&sv(&[0.0, 0.0]), &cv(&[0.0]), &[0.0], &[0.0, 0.5])
            .unwrap();
        assert_eq!(f, sv(&[0.0, 0.5]));
    }

    #[test]
    fn out_of_box_uncertainty_is_domain_error() {
        let (sys, _) = systems::example1();
        let err = sys
            .eval_perturbed(&sv(&[0.0, 0.0]), &cv(&[0.0]), &[0.0], &[0.0, 0.5])
            .unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn perturbed_minus_nominal_is_g_and_g_vanishes_at_origin() {
        let (sys, _) = systems::example1();
        let sys = sys
            .with_bounds(
                BoxSet::new(vec![-0.5], vec![0.5]).unwrap(),
                BoxSet::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            )
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = vec![rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
            let u = vec![rng.random_range(-1.0..1.0)];
            let mu = sys.mu_bounds().sample(&mut rng);
            let d = sys.d_bounds().sample(&mut rng);
            let g = sys.perturbation(&x, &u, &mu, &d).unwrap();
            let fp = sys.eval_perturbed(&sv(&x), &cv(&u), &mu, &d).unwrap();
            let f0 = sys.eval_nominal(&sv(&x), &cv(&u)).unwrap();
            for i in 0..2 {
                assert!((fp[i] - f0[i] - g[i]).abs() <= 1e-15 * (1.0 + fp[i].abs()));
            }
            assert_eq!(sys.perturbation(&x, &u, &[0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn holding_error_cases() {
        let (sys, fb) = systems::example1();
        let x = sv(&[0.3, -0.2]);
        assert_eq!(sys.holding_error(&fb, &x, &x).unwrap(), sv(&[0.0, 0.0]));

        let dh = sys.holding_error(&fb, &sv(&[0.0, 0.2]), &sv(&[0.0, 0.1])).unwrap();
        assert!(dh[0].abs() < 1e-15);
        assert!((dh[1] - 0.1).abs() < 1e-15);

        let constant = FeedbackLaw::constant(2, vec![0.7]);
        let dh = sys.holding_error(&constant, &sv(&[0.1, 0.5]), &sv(&[-0.3, 0.2])).unwrap();
        assert_eq!(dh, sv(&[0.0, 0.0]));
    }

    proptest::proptest! {
        #[test]
        fn holding_error_vanishes_on_diagonal(x1 in -0.6f64..0.6, x2 in -0.6f64..0.6) {
            let (sys, fb) = systems::example1();
            let x = sv(&[x1, x2]);
            proptest::prop_assert_eq!(sys.holding_error(&fb, &x, &x).unwrap(), sv(&[0.0, 0.0]));
        }

        #[test]
        fn zero_uncertainty_is_nominal(x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, u in -2.0f64..2.0) {
            let (sys, _) = systems::example1();
            let (x, u) = (sv(&[x1, x2]), cv(&[u]));
            proptest::prop_assert_eq!(
                sys.eval_perturbed(&x, &u, &[0.0], &[0.0, 0.0]).unwrap(),
                sys.eval_nominal(&x, &u).unwrap()
            );
        }
    }

    #[test]
    fn linear_system_jacobians_are_exact() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [-2.0, -3.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let k = Matrix::from_rows(&[[-1.0, -1.0]]).unwrap();
        let (sys, _) = systems::linear(a.clone(), b.clone(), k, 1.0).unwrap();
        for x in [[0.0, 0.0], [0.3, -0.7], [1.0, 2.0]] {
            let j = sys.jacobians(&sv(&x), &cv(&[0.4])).unwrap();
            assert_eq!(j.dfdx, a);
            assert_eq!(j.dfdu, b);
            let fd = sys.jacobians_fd(&sv(&x), &cv(&[0.4]), 1e-4).unwrap();
            assert!(fd.dfdx.add(&a.scale(-1.0)).unwrap().max_abs() < 1e-9);
        }
    }

    #[test]
    fn example1_jacobian_at_origin() {
        let (sys, _) = systems::example1();
        let j = sys.jacobians(&sv(&[0.0, 0.0]), &cv(&[0.0])).unwrap();
        assert_eq!(j.dfdx, Matrix::from_rows(&[[-1.0, 1.0], [0.0, 0.0]]).unwrap());
        assert_eq!(j.dfdu, Matrix::from_rows(&[[0.0], [1.0]]).unwrap());
        let fd = sys.jacobians_fd(&sv(&[0.0, 0.0]), &cv(&[0.0]), 1e-6).unwrap();
        assert!(fd.dfdx.add(&j.dfdx.scale(-1.0)).unwrap().max_abs() < 1e-9);
        assert!(fd.dfdu.add(&j.dfdu.scale(-1.0)).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn finite_differences_converge_at_second_order() {
        // Analytic reference for f(x, u) = (sin x1 · e^{x2}, x1³ + u·x2).
        let f = |x: &[f64], u: &[f64]| vec![x[0].sin() * x[1].exp(), x[0].powi(3) + u[0] * x[1]];
        let sys = SystemModel::new("smooth", 2, 1, 1.0, f).unwrap();
        let x = sv(&[0.4, -0.3]);
        let u = cv(&[0.8]);
        let exact = Matrix::from_rows(&[
            [0.4f64.cos() * (-0.3f64).exp(), 0.4f64.sin() * (-0.3f64).exp()],
            [3.0 * 0.16, 0.8],
        ])
        .unwrap();
        let err = |h: f64| {
            let j = sys.jacobians_fd(&x, &u, h).unwrap();
            j.dfdx.add(&exact.scale(-1.0)).unwrap().max_abs()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        assert!(e1 <= 10.0 * 1e-4, "error {e1} above 10·h²");
    }

    #[test]
    fn default_fd_step_matches_analytic_on_example1() {
        let (sys, fb) = systems::example1();
        let numeric = SystemModel::new("example1-fd", 2, 1, 2.0 / 3.0, |x, u| {
            vec![-x[0] + x[1] + x[0] * x[0], (1.0 + x[0]) * u[0]]
        })
        .unwrap();
        let x = sv(&[0.25, -0.4]);
        let u = fb.eval(&x).unwrap();
        let a = sys.jacobians(&x, &u).unwrap();
        let b = numeric.jacobians(&x, &u).unwrap();
        assert!(a.dfdx.add(&b.dfdx.scale(-1.0)).unwrap().max_abs() < 1e-8);
        assert!(a.dfdu.add(&b.dfdu.scale(-1.0)).unwrap().max_abs() < 1e-8);
    }
}
