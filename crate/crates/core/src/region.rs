//! Sampling regions for the bound estimators.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lyapunov::LyapunovCertificate;

/// Uniform sample from the closed ball of radius `r` in `R^n`.
pub fn sample_ball<R: Rng + ?Sized>(n: usize, r: f64, rng: &mut R) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    loop {
        let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let len = linalg::norm(&dir);
        if len > 1e-12 {
            let u: f64 = rng.random();
            let scale = r * u.powf(1.0 / n as f64) / len;
            return dir.into_iter().map(|v| v * scale).collect();
        }
    }
}

/// A compact subset of the state space that can be sampled uniformly.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Region {
    /// `‖x‖ ≤ radius`.
    Ball { dim: usize, radius: f64 },
    /// `inner ≤ ‖x‖ ≤ outer`.
    Annulus { dim: usize, inner: f64, outer: f64 },
    /// `{x : V(x) ≤ level, ‖x‖ ≤ radius}`.
    LevelSet {
        cert: LyapunovCertificate,
        dim: usize,
        level: f64,
        radius: f64,
    },
}

impl Region {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::usage("ball needs positive dimension and radius"));
        }
        Ok(Region::Ball { dim, radius })
    }

    pub fn annulus(dim: usize, inner: f64, outer: f64) -> Result<Self> {
        if dim == 0 || !(inner >= 0.0 && outer > inner && outer.is_finite()) {
            return Err(Error::usage("annulus needs 0 ≤ inner < outer"));
        }
        Ok(Region::Annulus { dim, inner, outer })
    }

    /// Sublevel set of `V` clipped to a ball. The ball is shrunk to
    /// `α1⁻¹(level)` when that is smaller, since the set lies inside it.
    pub fn level_set(cert: &LyapunovCertificate, dim: usize, level: f64, radius: f64) -> Result<Self> {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::usage("level must be non-negative"));
        }
        let a1_top = cert.alpha1.range_max();
        let bound = if level < a1_top { cert.alpha1.inverse(level)? } else { radius };
        Ok(Region::LevelSet {
            cert: cert.clone(),
            dim,
            level,
            radius: bound.min(radius),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { dim, .. } | Region::Annulus { dim, .. } | Region::LevelSet { dim, .. } => *dim,
        }
    }

    /// Radius of the smallest origin-centred ball containing the region.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Region::Ball { radius, .. } | Region::LevelSet { radius, .. } => *radius,
            Region::Annulus { outer, .. } => *outer,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r = linalg::norm(x);
        match self {
            Region::Ball { radius, .. } => r <= *radius,
            Region::Annulus { inner, outer, .. } => r >= *inner && r <= *outer,
            Region::LevelSet { cert, level, radius, .. } => r <= *radius && cert.value(x) <= *level,
        }
    }

    /// Uniform sample by rejection from the bounding ball. Level sets that
    /// reject too often fall back to the origin, which every level set
    /// contains.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let r = self.outer_radius();
        for _ in 0..10_000 {
            let x = sample_ball(n, r, rng);
            if self.contains(&x) {
                return x;
            }
        }
        vec![0.0; n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ball_samples_stay_inside_and_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut max = 0.0f64;
        for _ in 0..10_000 {
            let x = sample_ball(3, 2.0, &mut rng);
            let r = linalg::norm(&x);
            assert!(r <= 2.0);
            max = max.max(r);
        }
        assert!(max > 1.98);
    }

    #[test]
    fn ball_volume_fraction() {
        // Half the mass of a uniform disc lies within radius 1/√2.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inside = (0..20_000)
            .filter(|_| linalg::norm(&sample_ball(2, 1.0, &mut rng)) < 0.5f64.sqrt())
            .count();
        assert!((inside as f64 / 20_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn annulus_samples() {
        let region = Region::annulus(1, 0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = region.sample(&mut rng);
            assert!(x[0].abs() >= 0.1 && x[0].abs() <= 1.0);
        }
    }
}
