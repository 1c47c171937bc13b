//! Lyapunov certificates and the quadratic-certificate construction.
//!
//! A certificate bundles `V`, `∇V` and four class-K functions such that
//! inside `valid_radius`
//!
//! ```text
//! α1(‖x‖) ≤ V(x) ≤ α2(‖x‖)
//! ∇V(x)·f0(x, κ(x)) ≤ −α3(‖x‖)
//! ‖∇V(x)‖ ≤ α4(‖x‖)
//! ```
//!
//! An optional `inner_radius` restricts the claims to an annulus, for
//! certificates that only hold away from the origin.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classk::ClassKFunction;
use crate::dynamics::{FeedbackLaw, StateVector, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::{self, jacobi_eigen, Matrix};
use crate::region::sample_ball;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Symmetric positive-definite matrix `P` defining `V(x) = xᵀPx`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    p: Matrix,
}

impl QuadraticForm {
    pub fn new(p: Matrix) -> Result<Self> {
        if !p.is_symmetric(1e-12) {
            return Err(Error::usage("quadratic form matrix must be symmetric"));
        }
        let (lmin, _) = symmetric_eigen_bounds(&p)?;
        if !(lmin > 0.0) {
            return Err(Error::usage(format!(
                "quadratic form matrix must be positive definite (λ_min = {lmin:e})"
            )));
        }
        Ok(QuadraticForm { p })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.rows()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let px = self.p.mul_vec(x).expect("dimension checked by caller");
        linalg::dot(x, &px)
    }
}

/// Solves `P·A_c + A_cᵀ·P = −Q` for `P`.
///
/// The equation is vectorized into an `n² × n²` linear system and solved by
/// partial-pivot elimination. For symmetric positive-definite `Q` a
/// positive-definite solution exists exactly when `A_c` is Hurwitz, so a
/// solution that fails the PD test is reported as "no solution".
pub fn solve_lyapunov_equation(a_c: &Matrix, q: &Matrix) -> Result<QuadraticForm> {
    let n = a_c.rows();
    if !a_c.is_square() || q.rows() != n || q.cols() != n {
        return Err(Error::usage("A_c and Q must be square of equal size"));
    }
    if !q.is_symmetric(1e-12) {
        return Err(Error::usage("Q must be symmetric"));
    }
    if symmetric_eigen_bounds(q)?.0 <= 0.0 {
        return Err(Error::usage("Q must be positive definite"));
    }
    let nn = n * n;
    let mut m = Matrix::zeros(nn, nn);
    let mut rhs = vec![0.0; nn];
    // Row (i, j): Σ_k P[i,k]·A[k,j] + Σ_k A[k,i]·P[k,j] = −Q[i,j].
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            rhs[row] = -q[(i, j)];
            for k in 0..n {
                m[(row, i * n + k)] += a_c[(k, j)];
                m[(row, k * n + j)] += a_c[(k, i)];
            }
        }
    }
    let vec_p = m.solve(&rhs).map_err(|e| match e {
        Error::Singular(_) => Error::NoSolution(
            "Lyapunov operator is singular (A_c has eigenvalues summing to zero)".into(),
        ),
        other => other,
    })?;
    let raw = Matrix::from_row_major(n, n, vec_p)?;
    let p = raw.add(&raw.transpose())?.scale(0.5);
    QuadraticForm::new(p).map_err(|_| Error::NoSolution("A_c is not Hurwitz".into()))
}

/// `‖P·A_c + A_cᵀ·P + Q‖_F`.
pub fn lyapunov_residual(p: &QuadraticForm, a_c: &Matrix, q: &Matrix) -> Result<f64> {
    let pa = p.matrix().matmul(a_c)?;
    let ap = a_c.transpose().matmul(p.matrix())?;
    Ok(pa.add(&ap)?.add(q)?.frobenius_norm())
}

/// Extremal eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn symmetric_eigen_bounds(p: &Matrix) -> Result<(f64, f64)> {
    if !p.is_symmetric(1e-12) {
        return Err(Error::usage("eigen bounds require a symmetric matrix"));
    }
    match p.rows() {
        0 => Err(Error::usage("empty matrix")),
        1 => Ok((p[(0, 0)], p[(0, 0)])),
        2 => {
            let (a, b, d) = (p[(0, 0)], p[(0, 1)], p[(1, 1)]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            Ok((mean - rad, mean + rad))
        }
        _ => {
            let (values, _) = jacobi_eigen(p);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok((lo, hi))
        }
    }
}

/// How `α4` is derived for a quadratic `V`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Alpha4Factor {
    /// `α4(r) = 2·λ_max·r`, the tight bound on `‖2Px‖`.
    #[default]
    Tight,
    /// `α4(r) = λ_max·r`, as used in the published Example 1 design.
    Printed,
}

/// `V`, `∇V` and the four comparison functions.
#[derive(Clone)]
pub struct LyapunovCertificate {
    v: ScalarField,
    grad: GradientField,
    pub alpha1: ClassKFunction,
    pub alpha2: ClassKFunction,
    pub alpha3: ClassKFunction,
    pub alpha4: ClassKFunction,
    valid_radius: f64,
    inner_radius: f64,
    quadratic: Option<QuadraticForm>,
}

impl fmt::Debug for LyapunovCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCertificate")
            .field("alpha1", &self.alpha1)
            .field("alpha2", &self.alpha2)
            .field("alpha3", &self.alpha3)
            .field("alpha4", &self.alpha4)
            .field("valid_radius", &self.valid_radius)
            .field("inner_radius", &self.inner_radius)
            .field("quadratic", &self.quadratic)
            .finish()
    }
}

impl LyapunovCertificate {
    pub fn new(
        v: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        alphas: [ClassKFunction; 4],
        valid_radius: f64,
    ) -> Result<Self> {
        if !(valid_radius > 0.0 && valid_radius.is_finite()) {
            return Err(Error::usage("certificate valid radius must be positive"));
        }
        let [alpha1, alpha2, alpha3, alpha4] = alphas;
        for (name, a) in [("α1", &alpha1), ("α2", &alpha2), ("α3", &alpha3), ("α4", &alpha4)] {
            if a.domain_max() < valid_radius * (1.0 - 1e-12) {
                return Err(Error::usage(format!(
                    "{name} domain [0, {}] does not cover the valid radius {valid_radius}",
                    a.domain_max()
                )));
            }
        }
        Ok(LyapunovCertificate {
            v: Arc::new(v),
            grad: Arc::new(grad),
            alpha1,
            alpha2,
            alpha3,
            alpha4,
            valid_radius,
            inner_radius: 0.0,
            quadratic: None,
        })
    }

    /// Restricts the certificate's claims to `inner ≤ ‖x‖ ≤ valid_radius`.
    pub fn with_inner_radius(mut self, inner: f64) -> Result<Self> {
        if !(inner >= 0.0 && inner < self.valid_radius) {
            return Err(Error::usage("inner radius must lie in [0, valid_radius)"));
        }
        self.inner_radius = inner;
        Ok(self)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.v)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    pub fn value_fn(&self) -> ScalarField {
        self.v.clone()
    }

    pub fn valid_radius(&self) -> f64 {
        self.valid_radius
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// The quadratic form, when the certificate was built from one.
    pub fn quadratic(&self) -> Option<&QuadraticForm> {
        self.quadratic.as_ref()
    }
}

/// Builds `V = xᵀPx` with `α1 = λ_min r²`, `α2 = λ_max r²` and `α4` per
/// `factor`; `α4` is linear so its Lipschitz constant is declared exactly.
pub fn quadratic_certificate(
    p: &QuadraticForm,
    alpha3: ClassKFunction,
    valid_radius: f64,
    factor: Alpha4Factor,
) -> Result<LyapunovCertificate> {
    let (lmin, lmax) = symmetric_eigen_bounds(p.matrix())?;
    let slope = match factor {
        Alpha4Factor::Tight => 2.0 * lmax,
        Alpha4Factor::Printed => lmax,
    };
    let alpha1 = ClassKFunction::power_law(lmin, 2.0, valid_radius)?;
    let alpha2 = ClassKFunction::power_law(lmax, 2.0, valid_radius)?;
    let alpha4 = ClassKFunction::power_law(slope, 1.0, valid_radius)?.with_lipschitz(slope)?;
    let pv = p.clone();
    let pg = p.matrix().clone();
    let mut cert = LyapunovCertificate::new(
        move |x| pv.value(x),
        move |x| pg.mul_vec(x).expect("dimension").iter().map(|v| 2.0 * v).collect(),
        [alpha1, alpha2, alpha3, alpha4],
        valid_radius,
    )?;
    cert.quadratic = Some(p.clone());
    Ok(cert)
}

/// `α3(α2⁻¹(α1(δ)))`, the decrease guaranteed on the sublevel set that fits
/// inside `B_δ`.
pub fn compose_chain(cert: &LyapunovCertificate, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain("safe radius", delta, 0.0, cert.valid_radius));
    }
    let level = cert.alpha1.eval(delta)?;
    let r = cert.alpha2.inverse(level)?;
    cert.alpha3.eval(r)
}

/// Worst-case margins of the three certificate inequalities over a sample.
///
/// Each margin is `max(lhs − rhs)`; positive values are violations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub samples: usize,
    pub sandwich_margin: f64,
    pub decrease_margin: f64,
    pub gradient_margin: f64,
    pub sandwich_violations: usize,
    pub decrease_violations: usize,
    pub gradient_violations: usize,
}

impl CertificateReport {
    pub fn violations(&self) -> usize {
        self.sandwich_violations + self.decrease_violations + self.gradient_violations
    }
}

/// Samples `n_samples` states uniformly in the certified region and records
/// the worst violation of each inequality group.
pub fn check_certificate<R: Rng + ?Sized>(
    cert: &LyapunovCertificate,
    sys: &SystemModel,
    fb: &FeedbackLaw,
    n_samples: usize,
    rng: &mut R,
) -> Result<CertificateReport> {
    let n = sys.state_dim();
    let mut report = CertificateReport {
        samples: 0,
        sandwich_margin: f64::NEG_INFINITY,
        decrease_margin: f64::NEG_INFINITY,
        gradient_margin: f64::NEG_INFINITY,
        sandwich_violations: 0,
        decrease_violations: 0,
        gradient_violations: 0,
    };
    let tol = |scale: f64| 1e-12 * (1.0 + scale.abs());
    while report.samples < n_samples {
        let x = sample_ball(n, cert.valid_radius, rng);
        let r = linalg::norm(&x);
        if r < cert.inner_radius {
            continue;
        }
        report.samples += 1;
        let v = cert.value(&x);
        let a1 = cert.alpha1.eval(r)?;
        let a2 = cert.alpha2.eval(r)?;
        let sandwich = (a1 - v).max(v - a2);
        if sandwich > tol(v) {
            report.sandwich_violations += 1;
        }
        report.sandwich_margin = report.sandwich_margin.max(sandwich);

        let xs = StateVector::new(x.clone())?;
        let f = sys.eval_nominal(&xs, &fb.eval(&xs)?)?;
        let g = cert.gradient(&x);
        let vdot = linalg::dot(&g, f.as_slice());
        let decrease = vdot + cert.alpha3.eval(r)?;
        if decrease > tol(vdot) {
            report.decrease_violations += 1;
        }
        report.decrease_margin = report.decrease_margin.max(decrease);

        let gn = linalg::norm(&g);
        let gradient = gn - cert.alpha4.eval(r)?;
        if gradient > tol(gn) {
            report.gradient_violations += 1;
        }
        report.gradient_margin = report.gradient_margin.max(gradient);
    }
    Ok(report)
}
