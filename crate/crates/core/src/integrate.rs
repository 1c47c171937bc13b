//! Fixed-step classical Runge–Kutta integration.
//!
//! Inputs and disturbances are held constant across a step, so every field
//! handed to these routines is autonomous.

/// One RK4 step of size `h` (negative `h` integrates backwards).
pub fn rk4_step<F>(f: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let n = x.len();
    let k1 = f(x);
    let mut tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
    let k2 = f(&tmp);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    let k3 = f(&tmp);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    let k4 = f(&tmp);
    (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Number of equal substeps of length at most `h_max` covering `span`.
pub fn substeps(span: f64, h_max: f64) -> usize {
    if span <= 0.0 {
        return 0;
    }
    // Guard against 1.0000000001 turning into two steps.
    ((span / h_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Integrates `ẋ = f(x)` over `span` with `substeps(span, h_max)` equal steps.
pub fn integrate<F>(f: &F, x0: &[f64], span: f64, h_max: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let steps = substeps(span, h_max);
    let mut x = x0.to_vec();
    if steps == 0 {
        return x;
    }
    let h = span / steps as f64;
    for _ in 0..steps {
        x = rk4_step(f, &x, h);
    }
    x
}
