//! Class-K comparison functions.
//!
//! A class-K function is continuous, strictly increasing and vanishes at
//! zero. Two families are supported: power laws `c·r^q` and tabulated
//! strictly increasing samples interpolated piecewise-linearly. Each function
//! lives on a bounded domain `[0, domain_max]`; evaluating outside it is a
//! domain error rather than a silent extrapolation.
//!
//! Lipschitz constants of `α` and of `α⁻¹` can be declared. Declarations are
//! checked against the function: a power law with exponent `q < 1` has no
//! finite Lipschitz constant at the origin, so declaring one is refused.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ClassKForm {
    PowerLaw { coefficient: f64, exponent: f64 },
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassKFunction {
    form: ClassKForm,
    domain_max: f64,
    lipschitz: Option<f64>,
    inverse_lipschitz: Option<f64>,
}

impl ClassKFunction {
    /// `α(r) = c·r^q` on `[0, domain_max]`.
    pub fn power_law(coefficient: f64, exponent: f64, domain_max: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::usage(format!("class-K coefficient must be positive, got {coefficient}")));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::usage(format!("class-K exponent must be positive, got {exponent}")));
        }
        check_domain_max(domain_max)?;
        Ok(ClassKFunction {
            form: ClassKForm::PowerLaw {
                coefficient,
                exponent,
            },
            domain_max,
            lipschitz: None,
            inverse_lipschitz: None,
        })
    }

    /// Piecewise-linear interpolation through `(0, 0), (radii[i], values[i])`.
    ///
    /// A leading `(0, 0)` sample is added when missing. The last radius is the
    /// domain bound.
    pub fn tabulated(mut radii: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.is_empty() {
            return Err(Error::usage("tabulated class-K needs equally many (≥1) radii and values"));
        }
        if radii[0] != 0.0 {
            radii.insert(0, 0.0);
            values.insert(0, 0.0);
        } else if values[0] != 0.0 {
            return Err(Error::usage("tabulated class-K must vanish at zero"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1] && w[1].is_finite());
        if !increasing(&radii) || !increasing(&values) {
            return Err(Error::usage("tabulated class-K samples must be strictly increasing"));
        }
        let domain_max = *radii.last().unwrap();
        check_domain_max(domain_max)?;
        Ok(ClassKFunction {
            form: ClassKForm::Tabulated { radii, values },
            domain_max,
            lipschitz: None,
            inverse_lipschitz: None,
        })
    }

    /// Declares a Lipschitz constant for `α` on its domain.
    ///
    /// Refused when `α` is not Lipschitz there (power law with `q < 1`) or
    /// when the declared value is below the true constant.
    pub fn with_lipschitz(mut self, constant: f64) -> Result<Self> {
        let needed = match &self.form {
            ClassKForm::PowerLaw {
                coefficient,
                exponent,
            } => {
                if *exponent < 1.0 {
                    return Err(Error::usage(format!(
                        "c·r^{exponent} is not Lipschitz at the origin; refusing declared constant"
                    )));
                }
                coefficient * exponent * self.domain_max.powf(exponent - 1.0)
            }
            ClassKForm::Tabulated { radii, values } => max_slope(radii, values),
        };
        check_declared(constant, needed, "α")?;
        self.lipschitz = Some(constant);
        Ok(self)
    }

    /// Declares a Lipschitz constant for `α⁻¹` on the range of `α`.
    pub fn with_inverse_lipschitz(mut self, constant: f64) -> Result<Self> {
        let needed = match &self.form {
            ClassKForm::PowerLaw {
                coefficient,
                exponent,
            } => {
                if *exponent > 1.0 {
                    return Err(Error::usage(format!(
                        "inverse of c·r^{exponent} is not Lipschitz at the origin; refusing declared constant"
                    )));
                }
                self.domain_max.powf(1.0 - exponent) / (coefficient * exponent)
            }
            ClassKForm::Tabulated { radii, values } => 1.0 / min_slope(radii, values),
        };
        check_declared(constant, needed, "α⁻¹")?;
        self.inverse_lipschitz = Some(constant);
        Ok(self)
    }

    /// Same function on a different domain bound. Declared constants are
    /// dropped since they depend on the domain.
    pub fn with_domain_max(&self, domain_max: f64) -> Result<Self> {
        match &self.form {
            ClassKForm::PowerLaw {
                coefficient,
                exponent,
            } => ClassKFunction::power_law(*coefficient, *exponent, domain_max),
            ClassKForm::Tabulated { .. } => Err(Error::usage("cannot re-domain a tabulated class-K function")),
        }
    }

    pub fn form(&self) -> &ClassKForm {
        &self.form
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn inverse_lipschitz(&self) -> Option<f64> {
        self.inverse_lipschitz
    }

    /// `α(domain_max)`, the upper end of the range.
    pub fn range_max(&self) -> f64 {
        self.eval_unchecked(self.domain_max)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0 && r <= self.domain_max * (1.0 + DOMAIN_SLACK)) {
            return Err(Error::domain("class-K argument", r, 0.0, self.domain_max));
        }
        Ok(self.eval_unchecked(r.min(self.domain_max)))
    }

    fn eval_unchecked(&self, r: f64) -> f64 {
        match &self.form {
            ClassKForm::PowerLaw {
                coefficient,
                exponent,
            } => coefficient * r.powf(*exponent),
            ClassKForm::Tabulated { radii, values } => {
                let i = radii.partition_point(|&ri| ri <= r).clamp(1, radii.len() - 1);
                let (r0, r1) = (radii[i - 1], radii[i]);
                let (v0, v1) = (values[i - 1], values[i]);
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
        }
    }

    pub fn inverse(&self, s: f64) -> Result<f64> {
        let top = self.range_max();
        if !(s >= 0.0 && s <= top * (1.0 + DOMAIN_SLACK)) {
            return Err(Error::domain("class-K inverse argument", s, 0.0, top));
        }
        let s = s.min(top);
        Ok(match &self.form {
            ClassKForm::PowerLaw {
                coefficient,
                exponent,
            } => (s / coefficient).powf(1.0 / exponent),
            ClassKForm::Tabulated { .. } => {
                let tol = 1e-12 * self.domain_max;
                let (mut lo, mut hi) = (0.0, self.domain_max);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if self.eval_unchecked(mid) < s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        })
    }

    /// Checks the class-K defining properties on a uniform grid of
    /// `points` radii over the domain.
    pub fn is_class_k_on_grid(&self, points: usize) -> bool {
        if self.eval_unchecked(0.0) != 0.0 {
            return false;
        }
        let points = points.max(2);
        let mut prev = 0.0;
        (1..=points).all(|i| {
            let v = self.eval_unchecked(self.domain_max * i as f64 / points as f64);
            let ok = v > prev && v.is_finite();
            prev = v;
            ok
        })
    }
}

fn check_domain_max(domain_max: f64) -> Result<()> {
    if !(domain_max > 0.0 && domain_max.is_finite()) {
        return Err(Error::usage(format!("class-K domain bound must be positive, got {domain_max}")));
    }
    Ok(())
}

fn check_declared(constant: f64, needed: f64, what: &str) -> Result<()> {
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::usage(format!("Lipschitz constant of {what} must be positive")));
    }
    if constant < needed * (1.0 - 1e-12) {
        return Err(Error::usage(format!(
            "declared Lipschitz constant {constant} of {what} is below its true value {needed}"
        )));
    }
    Ok(())
}

fn slopes<'a>(radii: &'a [f64], values: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    radii
        .windows(2)
        .zip(values.windows(2))
        .map(|(r, v)| (v[1] - v[0]) / (r[1] - r[0]))
}

fn max_slope(radii: &[f64], values: &[f64]) -> f64 {
    slopes(radii, values).fold(0.0, f64::max)
}

fn min_slope(radii: &[f64], values: &[f64]) -> f64 {
    slopes(radii, values).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_law_values_and_inverse() {
        let a = ClassKFunction::power_law(1.382, 2.0, 1.0).unwrap();
        assert_eq!(a.eval(0.0).unwrap(), 0.0);
        assert!((a.eval(0.5).unwrap() - 0.3455).abs() < 1e-15);
        assert!((a.inverse(0.3455).unwrap() - 0.5).abs() < 1e-12);
        assert!(a.is_class_k_on_grid(100));
    }

    #[test]
    fn outside_domain_is_error() {
        let a = ClassKFunction::power_law(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(a.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(a.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(a.inverse(2.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn lipschitz_declarations_are_validated() {
        let quad = ClassKFunction::power_law(0.5, 2.0, 1.0).unwrap();
        // α = r²/2 is Lipschitz on [0,1] with constant 1, its inverse is not.
        assert!(quad.clone().with_lipschitz(1.0).is_ok());
        assert!(quad.clone().with_lipschitz(0.5).is_err());
        assert!(quad.with_inverse_lipschitz(100.0).is_err());

        let sqrt = ClassKFunction::power_law(1.0, 0.5, 1.0).unwrap();
        assert!(sqrt.clone().with_lipschitz(1e6).is_err());
        assert!(sqrt.with_inverse_lipschitz(2.0).is_ok());

        let lin = ClassKFunction::power_law(0.2, 1.0, 1.0).unwrap();
        assert!(lin.clone().with_inverse_lipschitz(5.0).is_ok());
        assert!(lin.with_inverse_lipschitz(4.0).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_inverts() {
        let t = ClassKFunction::tabulated(vec![0.5, 1.0, 2.0], vec![1.0, 1.5, 4.0]).unwrap();
        assert_eq!(t.eval(0.25).unwrap(), 0.5);
        assert_eq!(t.eval(1.5).unwrap(), 2.75);
        assert!((t.inverse(2.75).unwrap() - 1.5).abs() < 1e-11);
        assert!(t.clone().with_lipschitz(2.5).is_ok());
        assert!(t.clone().with_lipschitz(2.0).is_err());
        assert!(t.with_inverse_lipschitz(1.0).is_ok());
    }

    #[test]
    fn tabulated_rejects_non_monotone() {
        assert!(ClassKFunction::tabulated(vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(ClassKFunction::tabulated(vec![2.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn round_trip_on_grid() {
        let fs = [
            ClassKFunction::power_law(3.618, 2.0, 2.0 / 3.0).unwrap(),
            ClassKFunction::power_law(0.7, 0.5, 3.0).unwrap(),
            ClassKFunction::power_law(2.0, 1.0, 1.0).unwrap(),
            ClassKFunction::tabulated(vec![0.1, 0.4, 1.0], vec![0.05, 0.3, 2.0]).unwrap(),
        ];
        for f in &fs {
            let top = f.range_max();
            for i in 0..=1000 {
                let s = top * i as f64 / 1000.0;
                let back = f.eval(f.inverse(s).unwrap()).unwrap();
                assert!((back - s).abs() <= 1e-9 * (1.0 + s), "{f:?} at {s}");
            }
        }
    }

    proptest! {
        #[test]
        fn power_law_round_trip(c in 0.01f64..100.0, q in 0.2f64..4.0, frac in 0.0f64..1.0) {
            let f = ClassKFunction::power_law(c, q, 1.0).unwrap();
            let s = frac * f.range_max();
            let back = f.eval(f.inverse(s).unwrap()).unwrap();
            prop_assert!((back - s).abs() <= 1e-9 * (1.0 + s));
            prop_assert!(f.is_class_k_on_grid(100));
        }
    }
}
