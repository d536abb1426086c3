//! Seeded generators for the synthetic benchmark datasets: a grid of
//! bivariate Gaussian mixtures with controllable covariance skew, and the
//! matched-moments Normal vs. Laplace pair.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Mixture of `grid_side^2` bivariate Gaussians centered on a regular grid.
///
/// Unrotated components are unit isotropic. Rotated components have
/// covariance eigenvalues `{sqrt(eps), 1/sqrt(eps)}` (ratio `eps`, unit
/// geometric mean) with a per-component rotation angle drawn uniformly
/// from `[0, pi)`.
#[derive(Debug, Clone, Copy)]
pub struct GridMixtureSpec {
    pub grid_side: usize,
    /// Center-to-center distance.
    pub spacing: f64,
    /// Ratio of largest to smallest covariance eigenvalue; values below 1
    /// are folded to their reciprocal. Ignored when `rotated` is false.
    pub eps: f64,
    pub per_component: usize,
    pub rotated: bool,
}

impl Default for GridMixtureSpec {
    fn default() -> Self {
        Self {
            grid_side: 3,
            spacing: 10.0,
            eps: 1.0,
            per_component: 100,
            rotated: false,
        }
    }
}

impl GridMixtureSpec {
    fn validate(&self) -> Result<()> {
        if self.grid_side < 1 {
            return Err(Error::InvalidInput("grid_side must be >= 1".into()));
        }
        if self.per_component < 1 {
            return Err(Error::InvalidInput("per_component must be >= 1".into()));
        }
        if !(self.spacing.is_finite() && self.spacing >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "spacing must be nonnegative, got {}",
                self.spacing
            )));
        }
        if self.rotated && !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Samples the grid mixture; `grid_side^2 * per_component` rows in
/// component-major order, exactly `per_component` per component.
pub fn gen_grid_mixture(spec: &GridMixtureSpec, seed: u64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let side = spec.grid_side;
    let n_components = side * side;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Rotation angles are drawn once, before any point, so the component
    // shapes do not depend on per_component.
    let angles: Vec<f64> = if spec.rotated {
        (0..n_components)
            .map(|_| rng.random_range(0.0..std::f64::consts::PI))
            .collect()
    } else {
        vec![0.0; n_components]
    };
    let eps = if spec.rotated {
        if spec.eps < 1.0 { 1.0 / spec.eps } else { spec.eps }
    } else {
        1.0
    };
    // Covariance eigenvalues {sqrt(eps), 1/sqrt(eps)}; axis standard
    // deviations are their square roots.
    let (sd_major, sd_minor) = (eps.powf(0.25), eps.powf(-0.25));

    let offset = (side as f64 - 1.0) / 2.0;
    let mut out = DMatrix::zeros(n_components * spec.per_component, 2);
    for c in 0..n_components {
        let center = (
            spec.spacing * ((c / side) as f64 - offset),
            spec.spacing * ((c % side) as f64 - offset),
        );
        let (sin, cos) = angles[c].sin_cos();
        for p in 0..spec.per_component {
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            let (u, v) = (sd_major * z1, sd_minor * z2);
            let row = c * spec.per_component + p;
            out[(row, 0)] = center.0 + cos * u - sin * v;
            out[(row, 1)] = center.1 + sin * u + cos * v;
        }
    }
    Ok(out)
}

/// Inverse-CDF Laplace draw with scale `b`; deterministic across platforms.
fn laplace_inverse_cdf(rng: &mut ChaCha8Rng, b: f64) -> f64 {
    let u: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let t = u - 0.5;
    -b * t.signum() * (1.0 - 2.0 * t.abs()).ln()
}

/// Matched first and second moments: `n` draws from N(0, 1) and `n` draws
/// from Laplace(0, sqrt(0.5)), both with mean 0 and variance 1.
pub fn gen_normal_laplace(n: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n < 1 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let b = 0.5f64.sqrt();
    let laplace = DMatrix::from_fn(n, 1, |_, _| laplace_inverse_cdf(&mut rng, b));
    Ok((normal, laplace))
}
