//! Built-in plants addressable by name.

use crate::dynamics::{BoxSet, FeedbackLaw, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &["example1", "annulus-linear"];

/// Looks up a built-in plant and its feedback law.
pub fn builtin(name: &str) -> Option<(SystemModel, FeedbackLaw)> {
    match name {
        "example1" => Some(example1()),
        "annulus-linear" => Some(annulus_linear()),
        _ => None,
    }
}

/// `ẋ1 = −x1 + x2 + x1²`, `ẋ2 = (1 + x1)·u` with `κ(x) = −x2`.
///
/// Perturbation: a parametric scaling `μ·x1²` of the quadratic term plus an
/// additive disturbance `d ∈ R²`. Both boxes default to `{0}`; working
/// region `‖x‖ ≤ 2/3`.
pub fn example1() -> (SystemModel, FeedbackLaw) {
    let sys = SystemModel::new("example1", 2, 1, 2.0 / 3.0, |x, u| {
        vec![-x[0] + x[1] + x[0] * x[0], (1.0 + x[0]) * u[0]]
    })
    .expect("valid built-in")
    .with_jacobians(
        |x, u| Matrix::from_row_major(2, 2, vec![-1.0 + 2.0 * x[0], 1.0, u[0], 0.0]).unwrap(),
        |x, _| Matrix::from_row_major(2, 1, vec![0.0, 1.0 + x[0]]).unwrap(),
    )
    .with_perturbation(
        |x, _u, mu, d| vec![mu[0] * x[0] * x[0] + d[0], d[1]],
        BoxSet::origin(1),
        BoxSet::origin(2),
    );
    let fb = FeedbackLaw::new("-x2", 2, 1, |x| vec![-x[1]])
        .with_jacobian(|_| Matrix::from_row_major(1, 2, vec![0.0, -1.0]).unwrap());
    (sys, fb)
}

/// Scalar integrator `ẋ = u + d` with `κ(x) = −x`, working region `|x| ≤ 1`.
pub fn annulus_linear() -> (SystemModel, FeedbackLaw) {
    let sys = SystemModel::new("annulus-linear", 1, 1, 1.0, |_x, u| vec![u[0]])
        .expect("valid built-in")
        .with_jacobians(
            |_, _| Matrix::zeros(1, 1),
            |_, _| Matrix::identity(1),
        )
        .with_perturbation(|_x, _u, _mu, d| vec![d[0]], BoxSet::origin(0), BoxSet::origin(1));
    let fb = FeedbackLaw::new("-x", 1, 1, |x| vec![-x[0]])
        .with_jacobian(|_| Matrix::from_row_major(1, 1, vec![-1.0]).unwrap());
    (sys, fb)
}

/// `ẋ = A x + B u + d` with `u = K x`.
pub fn linear(a: Matrix, b: Matrix, k: Matrix, domain_radius: f64) -> Result<(SystemModel, FeedbackLaw)> {
    let n = a.rows();
    if !a.is_square() {
        return Err(Error::usage("A must be square"));
    }
    if b.rows() != n {
        return Err(Error::Dimension {
            what: "B rows",
            expected: n,
            got: b.rows(),
        });
    }
    let p = b.cols();
    if k.rows() != p || k.cols() != n {
        return Err(Error::Dimension {
            what: "K",
            expected: p * n,
            got: k.rows() * k.cols(),
        });
    }
    let (af, bf) = (a.clone(), b.clone());
    let sys = SystemModel::new("linear", n, p, domain_radius, move |x, u| {
        let ax = af.mul_vec(x).expect("dimension checked");
        let bu = bf.mul_vec(u).expect("dimension checked");
        ax.iter().zip(bu).map(|(l, r)| l + r).collect()
    })?
    .with_jacobians(move |_, _| a.clone(), move |_, _| b.clone())
    .with_perturbation(|_x, _u, _mu, d| d.to_vec(), BoxSet::origin(0), BoxSet::origin(n));
    Ok((sys, FeedbackLaw::linear(k)))
}
