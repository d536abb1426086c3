//! Squared-exponential kernel `k`, its self-convolution prior kernel `r`,
//! Gram matrices, and the median-heuristic lengthscale baseline.
//!
//! The base kernel is the isotropic squared exponential
//! `k(x, y) = exp(-||x - y||^2 / (2 theta^2))`. The prior kernel is its
//! convolution with itself under a measure on the input space,
//! `r(x, y) = integral k(x, u) k(u, y) d nu(u)`, which has a closed form
//! both for an isotropic Gaussian measure of width `eta` and in the
//! Lebesgue limit `eta -> infinity`. A Gaussian process with covariance `r`
//! has sample paths inside the RKHS of `k`, which is what makes it a valid
//! prior over mean embeddings.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Measure under which the base kernel is convolved with itself to form
/// the prior kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorMeasure {
    /// Lebesgue limit: stationary prior kernel proportional to a squared
    /// exponential with lengthscale `theta * sqrt(2)`.
    LebesgueLimit,
    /// Isotropic Gaussian measure `exp(-||u||^2 / (2 eta^2)) du`. Adds a
    /// nonstationary factor penalizing `||(x + y) / 2||`.
    Gaussian { eta: f64 },
}

/// Hyperparameters of the squared-exponential embedding model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernelParams {
    /// Lengthscale, in data units.
    pub theta: f64,
    /// Prior-measure width (defaults to the Lebesgue limit).
    pub measure: PriorMeasure,
    /// Likelihood variance of the empirical embedding link; the effective
    /// noise on the embedding scale is `tau2 / n`.
    pub tau2: f64,
}

impl SeKernelParams {
    pub fn new(theta: f64, measure: PriorMeasure, tau2: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidInput(format!("theta must be positive, got {theta}")));
        }
        if !(tau2.is_finite() && tau2 > 0.0) {
            return Err(Error::InvalidInput(format!("tau2 must be positive, got {tau2}")));
        }
        if let PriorMeasure::Gaussian { eta } = measure {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
            }
        }
        Ok(Self { theta, measure, tau2 })
    }

    /// Parameters with the Lebesgue-limit prior measure.
    pub fn lebesgue(theta: f64, tau2: f64) -> Result<Self> {
        Self::new(theta, PriorMeasure::LebesgueLimit, tau2)
    }

    /// Parameters with a Gaussian prior measure of width `eta`.
    pub fn gaussian_measure(theta: f64, eta: f64, tau2: f64) -> Result<Self> {
        Self::new(theta, PriorMeasure::Gaussian { eta }, tau2)
    }

    /// Same kernel with a different lengthscale.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(theta, self.measure, self.tau2)
    }

    /// Same kernel with a different likelihood variance.
    pub fn with_tau2(&self, tau2: f64) -> Result<Self> {
        Self::new(self.theta, self.measure, tau2)
    }
}

/// Which kernel a Gram matrix was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// The base kernel `k`.
    Base,
    /// The prior kernel `r`.
    Prior,
}

/// A kernel matrix together with the kernel it was built from.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub kind: KernelKind,
}

/// Which convention the median pairwise distance is mapped through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedianMode {
    /// `k(x, x') = exp(-||x - x'||^2 / l^2)`, i.e. `theta = l / sqrt(2)`.
    NoHalf,
    /// `k(x, x') = exp(-||x - x'||^2 / (2 l^2))`, i.e. `theta = l`.
    Half,
}

fn check_point(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidInput("empty point".into()));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    Ok(())
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    check_point(x)?;
    check_point(y)?;
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_data_matrix(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{what}: empty matrix")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what}: non-finite entry")));
    }
    Ok(())
}

#[inline]
pub(crate) fn row_sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols())
        .map(|d| {
            let t = a[(i, d)] - b[(j, d)];
            t * t
        })
        .sum()
}

#[inline]
fn se_from_sq_dist(sq_dist: f64, theta: f64) -> f64 {
    (-sq_dist / (2.0 * theta * theta)).exp()
}

/// Prior kernel from the squared distance `||x - y||^2` and the squared
/// midpoint norm `||(x + y) / 2||^2`.
fn r_from_parts(sq_dist: f64, mid_sq_norm: f64, dim: usize, params: &SeKernelParams) -> f64 {
    let theta = params.theta;
    let stationary = (-sq_dist / (4.0 * theta * theta)).exp();
    match params.measure {
        PriorMeasure::LebesgueLimit => {
            std::f64::consts::PI.powf(dim as f64 / 2.0) * theta.powi(dim as i32) * stationary
        }
        PriorMeasure::Gaussian { eta } => {
            let scale = (2.0 * std::f64::consts::PI).powf(dim as f64 / 2.0)
                * (2.0 / (theta * theta) + 1.0 / (eta * eta)).powf(-(dim as f64) / 2.0);
            let nonstationary =
                (-0.5 * mid_sq_norm / (theta * theta / 2.0 + eta * eta)).exp();
            scale * stationary * nonstationary
        }
    }
}

/// Base kernel `k(x, y) = exp(-||x - y||^2 / (2 theta^2))`.
pub fn se_eval(x: &[f64], y: &[f64], params: &SeKernelParams) -> Result<f64> {
    check_pair(x, y)?;
    let sq_dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(se_from_sq_dist(sq_dist, params.theta))
}

/// Gradient of the base kernel in its first argument:
/// component `i` is `-k(x, y) (x_i - y_i) / theta^2`.
pub fn se_grad_x(x: &[f64], y: &[f64], params: &SeKernelParams) -> Result<DVector<f64>> {
    check_pair(x, y)?;
    let k = se_eval(x, y, params)?;
    let inv_theta2 = 1.0 / (params.theta * params.theta);
    Ok(DVector::from_iterator(
        x.len(),
        x.iter().zip(y).map(|(a, b)| -k * (a - b) * inv_theta2),
    ))
}

/// Prior kernel `r(x, y)`, the self-convolution of `k` under the
/// configured measure. Closed forms:
///
/// * Lebesgue limit: `pi^(D/2) theta^D exp(-||x - y||^2 / (4 theta^2))`
/// * Gaussian measure of width `eta`:
///   `(2 pi)^(D/2) (2 / theta^2 + 1 / eta^2)^(-D/2)
///    exp(-||x - y||^2 / (4 theta^2))
///    exp(-||(x + y) / 2||^2 / (2 (theta^2 / 2 + eta^2)))`
pub fn r_eval(x: &[f64], y: &[f64], params: &SeKernelParams) -> Result<f64> {
    check_pair(x, y)?;
    let sq_dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let mid_sq_norm: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let m = 0.5 * (a + b);
            m * m
        })
        .sum();
    Ok(r_from_parts(sq_dist, mid_sq_norm, x.len(), params))
}

fn row_mid_sq_norm(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols())
        .map(|d| {
            let m = 0.5 * (a[(i, d)] + b[(j, d)]);
            m * m
        })
        .sum()
}

/// Kernel matrix over rows of `points_a` (and `points_b` when given):
/// entry `(i, j)` is `k` or `r` at `(a_i, b_j)`. Without `points_b` the
/// result is the square Gram matrix over `points_a`, filled symmetrically.
pub fn gram(
    points_a: &DMatrix<f64>,
    points_b: Option<&DMatrix<f64>>,
    params: &SeKernelParams,
    kind: KernelKind,
) -> Result<GramMatrix> {
    check_data_matrix(points_a, "points_a")?;
    let dim = points_a.ncols();
    let eval = |a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize| -> f64 {
        let sq_dist = row_sq_dist(a, i, b, j);
        match kind {
            KernelKind::Base => se_from_sq_dist(sq_dist, params.theta),
            KernelKind::Prior => r_from_parts(sq_dist, row_mid_sq_norm(a, i, b, j), dim, params),
        }
    };
    let entries = match points_b {
        Some(b) => {
            check_data_matrix(b, "points_b")?;
            if b.ncols() != dim {
                return Err(Error::InvalidInput(format!(
                    "dimension mismatch: {} vs {}",
                    dim,
                    b.ncols()
                )));
            }
            DMatrix::from_fn(points_a.nrows(), b.nrows(), |i, j| eval(points_a, i, b, j))
        }
        None => {
            let n = points_a.nrows();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = eval(points_a, i, points_a, j);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            m
        }
    };
    Ok(GramMatrix { entries, kind })
}

/// Median-heuristic lengthscale: the median of the `n(n-1)/2` pairwise
/// Euclidean distances (midpoint of the two middle values for even counts),
/// converted into the lengthscale of `se_eval`'s `exp(-d^2 / (2 theta^2))`
/// convention according to `mode`.
pub fn median_heuristic(data: &DMatrix<f64>, mode: MedianMode) -> Result<f64> {
    check_data_matrix(data, "data")?;
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("median heuristic needs n >= 2".into()));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(row_sq_dist(data, i, data, j).sqrt());
        }
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let mid = dists.len() / 2;
    let ell = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if ell == 0.0 {
        return Err(Error::DegenerateData("all pairwise distances are zero".into()));
    }
    Ok(match mode {
        MedianMode::NoHalf => ell / std::f64::consts::SQRT_2,
        MedianMode::Half => ell,
    })
}
