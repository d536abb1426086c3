//! Internal dense linear algebra helpers: jittered Cholesky and
//! order-insensitive summation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative diagonal jitter added per retry, scaled by `trace/n`.
pub(crate) const JITTER_SCALE: f64 = 1e-10;
/// Maximum number of jittered retries after the bare attempt.
pub(crate) const JITTER_RETRIES: usize = 3;

/// Cholesky factorization with the crate-wide jitter policy: try the matrix
/// as given, then add `1e-10 * trace/n` to the diagonal and retry, up to
/// three times, before reporting a conditioning error.
pub(crate) fn cholesky_with_jitter(mat: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = mat.nrows();
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(chol);
    }
    let jitter = JITTER_SCALE * mat.trace() / n as f64;
    let mut jittered = mat.clone();
    for _ in 0..JITTER_RETRIES {
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered.clone()) {
            return Ok(chol);
        }
    }
    Err(Error::Conditioning(format!(
        "Cholesky failed after {JITTER_RETRIES} jitter retries ({context})"
    )))
}

/// Log-determinant of the factored matrix.
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// One draw from N(mean, L L^T) given the Cholesky factor L.
pub(crate) fn sample_gaussian<R: rand::Rng>(
    mean: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::from_iterator(
        mean.len(),
        (0..mean.len()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
    );
    mean + chol.l_dirty().lower_triangle() * z
}

/// Sum that depends only on the multiset of addends, not their order.
/// Sorting by total order before the fold makes reductions over data rows
/// exactly invariant under row permutations.
pub(crate) fn permutation_invariant_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}
