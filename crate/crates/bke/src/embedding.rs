//! Empirical kernel mean embedding, the conjugate Gaussian posterior over
//! the embedding, and the spectral shrinkage estimator it recovers.
//!
//! The model: the embedding `mu` has a GP prior with covariance `r` (the
//! prior kernel), and the empirical embedding value at any location is
//! `mu` plus Gaussian noise of variance `tau^2 / n`. Conjugacy gives the
//! posterior at query points `x*` in closed form,
//!
//! ```text
//! mean = R* (R + (tau^2/n) I)^-1 v
//! cov  = r** - R* (R + (tau^2/n) I)^-1 R*^T
//! ```
//!
//! with `R` the prior Gram over the data, `R*` the query-by-data prior
//! cross-Gram, `r**` the prior Gram over the queries, and `v` the empirical
//! embedding evaluated at the data points.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{check_data_matrix, gram, GramMatrix, KernelKind, SeKernelParams};
use crate::linalg::cholesky_with_jitter;

/// The empirical embedding `(1/n) sum_i k(., x_i)` of a dataset.
#[derive(Debug, Clone)]
pub struct EmpiricalEmbedding {
    data: DMatrix<f64>,
    params: SeKernelParams,
}

impl EmpiricalEmbedding {
    pub fn new(data: DMatrix<f64>, params: SeKernelParams) -> Result<Self> {
        check_data_matrix(&data, "data")?;
        Ok(Self { data, params })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn params(&self) -> &SeKernelParams {
        &self.params
    }
}

/// Gaussian posterior over the embedding at a finite set of evaluation
/// points. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct PosteriorEmbedding {
    pub eval_points: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Regularization for the spectral kernel mean shrinkage estimator.
#[derive(Debug, Clone, Copy)]
pub struct SkmseConfig {
    pub lambda: f64,
}

impl SkmseConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }
}

/// Empirical embedding values at the query rows:
/// component `j` is `(1/n) sum_i k(x_i, q_j)`.
pub fn empirical_eval(emb: &EmpiricalEmbedding, query: &DMatrix<f64>) -> Result<DVector<f64>> {
    let g = gram(emb.data(), Some(query), emb.params(), KernelKind::Base)?;
    let n = emb.data().nrows() as f64;
    Ok(DVector::from_iterator(
        query.nrows(),
        g.entries.column_iter().map(|c| c.sum() / n),
    ))
}

/// Posterior over the embedding at the query rows under the prior kernel.
pub fn posterior(emb: &EmpiricalEmbedding, query: &DMatrix<f64>) -> Result<PosteriorEmbedding> {
    posterior_with_kernel(emb, query, KernelKind::Prior)
}

/// Posterior with an explicit choice of covariance kernel. `Prior` is the
/// model posterior; `Base` substitutes `k` for `r` everywhere, in which
/// case the posterior mean coincides with the shrinkage estimator
/// [`skmse_eval`] at `lambda = tau^2 / n`.
pub fn posterior_with_kernel(
    emb: &EmpiricalEmbedding,
    query: &DMatrix<f64>,
    kind: KernelKind,
) -> Result<PosteriorEmbedding> {
    check_data_matrix(query, "query")?;
    let data = emb.data();
    if query.ncols() != data.ncols() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: query D={} vs data D={}",
            query.ncols(),
            data.ncols()
        )));
    }
    let n = data.nrows();
    let GramMatrix { entries: big_r, .. } = gram(data, None, emb.params(), kind)?;
    let GramMatrix { entries: r_star, .. } = gram(query, Some(data), emb.params(), kind)?;
    let GramMatrix { entries: r_qq, .. } = gram(query, None, emb.params(), kind)?;
    let v = empirical_eval(emb, data)?;

    let noise = emb.params().tau2 / n as f64;
    let mut a = big_r;
    for i in 0..n {
        a[(i, i)] += noise;
    }
    let chol = cholesky_with_jitter(&a, "posterior system")?;

    let mean = &r_star * chol.solve(&v);
    let cross = chol.solve(&r_star.transpose());
    let mut covariance = r_qq - &r_star * cross;
    // solve() asymmetry is at rounding level; fold it out.
    let sym = 0.5 * (&covariance + covariance.transpose());
    covariance = sym;

    Ok(PosteriorEmbedding {
        eval_points: query.clone(),
        mean,
        covariance,
    })
}

/// Spectral kernel mean shrinkage estimate at the query rows:
/// `K_{query,data} (K + n lambda I)^-1 v`, built from the base kernel.
pub fn skmse_eval(
    data: &DMatrix<f64>,
    params: &SeKernelParams,
    cfg: &SkmseConfig,
    query: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_data_matrix(query, "query")?;
    let emb = EmpiricalEmbedding::new(data.clone(), *params)?;
    if query.ncols() != data.ncols() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: query D={} vs data D={}",
            query.ncols(),
            data.ncols()
        )));
    }
    let n = data.nrows();
    let GramMatrix { entries: k, .. } = gram(data, None, params, KernelKind::Base)?;
    let GramMatrix { entries: k_star, .. } = gram(query, Some(data), params, KernelKind::Base)?;
    let v = empirical_eval(&emb, data)?;

    let mut a = k;
    let ridge = n as f64 * cfg.lambda;
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    let chol = cholesky_with_jitter(&a, "shrinkage system")?;
    Ok(&k_star * chol.solve(&v))
}

/// Posterior over the witness function `mu_P - mu_Q` from two independent
/// posteriors sharing the same evaluation points.
pub fn witness(
    post_p: &PosteriorEmbedding,
    post_q: &PosteriorEmbedding,
) -> Result<PosteriorEmbedding> {
    if post_p.eval_points != post_q.eval_points {
        return Err(Error::InvalidInput(
            "witness requires identical eval points in both posteriors".into(),
        ));
    }
    Ok(PosteriorEmbedding {
        eval_points: post_p.eval_points.clone(),
        mean: &post_p.mean - &post_q.mean,
        covariance: &post_p.covariance + &post_q.covariance,
    })
}
