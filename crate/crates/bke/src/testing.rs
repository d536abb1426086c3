//! Kernel hypothesis tests: MMD two-sample and HSIC independence
//! statistics, permutation calibration, and posterior witness bands.
//!
//! Permutation calibration is exact at these sample sizes, so no
//! asymptotic null approximation is used. Replicates derive independent
//! RNG streams from the master seed and may run concurrently; the
//! aggregation is order-independent, so results are identical for any
//! thread count.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embedding::{posterior, EmpiricalEmbedding, PosteriorEmbedding};
use crate::error::{Error, Result};
use crate::kernels::{check_data_matrix, gram, KernelKind, PriorMeasure, SeKernelParams};
use crate::learn::HyperPosterior;
use crate::linalg::{cholesky_with_jitter, permutation_invariant_sum, sample_gaussian};

/// MMD^2 estimator variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mmd2Variant {
    /// V-statistic, diagonal included; always nonnegative.
    Biased,
    /// U-statistic, diagonal terms removed; may be negative.
    Unbiased,
}

/// Outcome of a permutation-calibrated hypothesis test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    /// Add-one permutation p-value `(1 + #{perm >= observed}) / (1 + B)`.
    pub p_value: f64,
    pub n_permutations: usize,
    pub alpha: f64,
    pub reject: bool,
    pub kernel: SeKernelParams,
    /// Second kernel for independence tests.
    pub kernel_y: Option<SeKernelParams>,
}

/// Inputs of a permutation test.
pub enum TestSpec<'a> {
    /// H0: both samples come from the same distribution (MMD^2, biased).
    TwoSample {
        x: &'a DMatrix<f64>,
        y: &'a DMatrix<f64>,
        params: SeKernelParams,
    },
    /// H0: the paired rows of `x` and `y` are independent (HSIC).
    Independence {
        x: &'a DMatrix<f64>,
        y: &'a DMatrix<f64>,
        params_x: SeKernelParams,
        params_y: SeKernelParams,
    },
}

/// Squared maximum mean discrepancy between the samples. The biased
/// variant is `mean(Kxx) + mean(Kyy) - 2 mean(Kxy)` clamped at zero;
/// the unbiased variant removes the diagonal terms of the within-sample
/// means. Summations are order-insensitive, so the value is exactly
/// invariant under row permutations of either input.
pub fn mmd2(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    params: &SeKernelParams,
    variant: Mmd2Variant,
) -> Result<f64> {
    check_data_matrix(x, "x")?;
    check_data_matrix(y, "y")?;
    if x.ncols() != y.ncols() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let (n, p) = (x.nrows(), y.nrows());
    if variant == Mmd2Variant::Unbiased && (n < 2 || p < 2) {
        return Err(Error::InvalidInput(
            "unbiased MMD needs at least two points per sample".into(),
        ));
    }
    let kxx = gram(x, None, params, KernelKind::Base)?.entries;
    let kyy = gram(y, None, params, KernelKind::Base)?.entries;
    let kxy = gram(x, Some(y), params, KernelKind::Base)?.entries;
    let sum_all = |m: &DMatrix<f64>| {
        let mut vals: Vec<f64> = m.iter().copied().collect();
        permutation_invariant_sum(&mut vals)
    };
    let sum_off = |m: &DMatrix<f64>| {
        let mut vals: Vec<f64> = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        permutation_invariant_sum(&mut vals)
    };
    let cross = sum_all(&kxy) / (n * p) as f64;
    Ok(match variant {
        Mmd2Variant::Biased => {
            let v = sum_all(&kxx) / (n * n) as f64 + sum_all(&kyy) / (p * p) as f64 - 2.0 * cross;
            v.max(0.0)
        }
        Mmd2Variant::Unbiased => {
            sum_off(&kxx) / (n * (n - 1)) as f64 + sum_off(&kyy) / (p * (p - 1)) as f64
                - 2.0 * cross
        }
    })
}

/// Row sums, grand sum, and the doubly centered matrix `H M H` with
/// `H = I - (1/n) 1 1^T`, all through order-insensitive summation.
fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row_sums: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
            permutation_invariant_sum(&mut row)
        })
        .collect();
    let mut totals = row_sums.clone();
    let grand = permutation_invariant_sum(&mut totals);
    DMatrix::from_fn(n, n, |i, j| {
        m[(i, j)] - row_sums[i] / nf - row_sums[j] / nf + grand / (nf * nf)
    })
}

/// Biased HSIC statistic `(1/n^2) trace(K H L H)` between the paired rows
/// of `x` and `y`. Exactly invariant under simultaneous row permutation.
pub fn hsic(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    params_x: &SeKernelParams,
    params_y: &SeKernelParams,
) -> Result<f64> {
    check_data_matrix(x, "x")?;
    check_data_matrix(y, "y")?;
    if x.nrows() != y.nrows() {
        return Err(Error::InvalidInput(format!(
            "paired samples need equal length: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let n = x.nrows();
    if n < 4 {
        return Err(Error::InvalidInput("HSIC needs n >= 4".into()));
    }
    let k = gram(x, None, params_x, KernelKind::Base)?.entries;
    let l = gram(y, None, params_y, KernelKind::Base)?.entries;
    let kc = double_center(&k);
    let mut products: Vec<f64> = kc.iter().zip(l.iter()).map(|(a, b)| a * b).collect();
    Ok(permutation_invariant_sum(&mut products) / (n * n) as f64)
}

/// Biased MMD^2 over a precomputed pooled Gram matrix, given the index
/// split. Uses row sums so each evaluation is O(n_x^2 + n) instead of
/// O((n_x + n_y)^2).
fn mmd2_biased_from_pooled(
    pooled: &DMatrix<f64>,
    row_sums: &[f64],
    total_sum: f64,
    idx_x: &[usize],
) -> f64 {
    let n_tot = pooled.nrows();
    let nx = idx_x.len();
    let ny = n_tot - nx;
    let mut s_xx = 0.0;
    for &i in idx_x {
        for &j in idx_x {
            s_xx += pooled[(i, j)];
        }
    }
    let s_x_rows: f64 = idx_x.iter().map(|&i| row_sums[i]).sum();
    let s_xy = s_x_rows - s_xx;
    let s_yy = total_sum + s_xx - 2.0 * s_x_rows;
    (s_xx / (nx * nx) as f64 + s_yy / (ny * ny) as f64 - 2.0 * s_xy / (nx * ny) as f64).max(0.0)
}

fn hsic_from_grams(k: &DMatrix<f64>, l_centered: &DMatrix<f64>, perm: &[usize]) -> f64 {
    let n = k.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += k[(perm[i], perm[j])] * l_centered[(i, j)];
        }
    }
    acc / (n * n) as f64
}

/// Permutation test for the two-sample or independence problem.
///
/// Two-sample: the samples are pooled and re-split by seeded permutations
/// preserving the original sizes. Independence: the rows of `y` are
/// permuted. The p-value uses the add-one formula, which keeps the test
/// valid and never reports exactly zero.
pub fn permutation_test(
    spec: &TestSpec,
    n_permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestResult> {
    if n_permutations < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 permutations, got {n_permutations}"
        )));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must be in (0,1), got {alpha}")));
    }
    let (observed, exceed_count, kernel, kernel_y) = match spec {
        TestSpec::TwoSample { x, y, params } => {
            check_data_matrix(x, "x")?;
            check_data_matrix(y, "y")?;
            if x.ncols() != y.ncols() {
                return Err(Error::InvalidInput("dimension mismatch between samples".into()));
            }
            let nx = x.nrows();
            let n_tot = nx + y.nrows();
            let mut pooled = DMatrix::zeros(n_tot, x.ncols());
            pooled.rows_mut(0, nx).copy_from(x);
            pooled.rows_mut(nx, y.nrows()).copy_from(y);
            let g = gram(&pooled, None, params, KernelKind::Base)?.entries;
            let row_sums: Vec<f64> = (0..n_tot).map(|i| g.row(i).sum()).collect();
            let total_sum: f64 = row_sums.iter().sum();
            let identity: Vec<usize> = (0..nx).collect();
            let observed = mmd2_biased_from_pooled(&g, &row_sums, total_sum, &identity);
            let count: usize = (0..n_permutations)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(rep as u64 + 1);
                    let mut order: Vec<usize> = (0..n_tot).collect();
                    order.shuffle(&mut rng);
                    let stat = mmd2_biased_from_pooled(&g, &row_sums, total_sum, &order[..nx]);
                    usize::from(stat >= observed)
                })
                .sum();
            (observed, count, *params, None)
        }
        TestSpec::Independence { x, y, params_x, params_y } => {
            let observed = hsic(x, y, params_x, params_y)?;
            let n = x.nrows();
            let k = gram(x, None, params_x, KernelKind::Base)?.entries;
            let l = gram(y, None, params_y, KernelKind::Base)?.entries;
            let l_centered = double_center(&l);
            // hsic() centers K; centering L instead is the same statistic
            // (H commutes through the trace), so the identity permutation
            // reproduces the observed value up to rounding.
            let count: usize = (0..n_permutations)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(rep as u64 + 1);
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    let stat = hsic_from_grams(&k, &l_centered, &perm);
                    usize::from(stat >= observed)
                })
                .sum();
            (observed, count, *params_x, Some(*params_y))
        }
    };
    let p_value = (1 + exceed_count) as f64 / (1 + n_permutations) as f64;
    Ok(TestResult {
        statistic: observed,
        p_value,
        n_permutations,
        alpha,
        reject: p_value <= alpha,
        kernel,
        kernel_y,
    })
}

/// Hyperparameter source for witness bands.
pub enum WitnessHyper<'a> {
    /// A single fixed kernel configuration.
    Fixed(SeKernelParams),
    /// Draws from a hyperparameter posterior; each function draw picks one
    /// `(theta, tau2)` uniformly at random and combines it with `measure`.
    Posterior {
        posterior: &'a HyperPosterior,
        measure: PriorMeasure,
    },
}

/// Pointwise posterior band over the witness function on a grid.
#[derive(Debug, Clone)]
pub struct WitnessBand {
    pub grid: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub level: f64,
}

struct SamplerPair {
    mean_p: DVector<f64>,
    factor_p: DMatrix<f64>,
    mean_q: DVector<f64>,
    factor_q: DMatrix<f64>,
}

fn sampler_pair(
    data_p: &DMatrix<f64>,
    data_q: &DMatrix<f64>,
    grid: &DMatrix<f64>,
    params: &SeKernelParams,
) -> Result<SamplerPair> {
    let build = |data: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let emb = EmpiricalEmbedding::new(data.clone(), *params)?;
        let post = posterior(&emb, grid)?;
        let chol = cholesky_with_jitter(&post.covariance, "witness draw covariance")?;
        Ok((post.mean, chol.l_dirty().lower_triangle()))
    };
    let (mean_p, factor_p) = build(data_p)?;
    let (mean_q, factor_q) = build(data_q)?;
    Ok(SamplerPair { mean_p, factor_p, mean_q, factor_q })
}

fn draw_witness(pair: &SamplerPair, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let p = pair.mean_p.len();
    let z1 = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
    let z2 = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
    (&pair.mean_p + &pair.factor_p * z1) - (&pair.mean_q + &pair.factor_q * z2)
}

/// Linear-interpolation empirical quantile of an ascending-sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Monte-Carlo posterior band over the witness function `mu_P - mu_Q`.
///
/// Each draw picks hyperparameters (fixed, or uniformly from the
/// posterior draws), forms the two embedding posteriors on the grid,
/// samples one function from each, and subtracts. The band is the
/// pointwise empirical `(1 -/+ level) / 2` quantile pair over `n_draws`
/// such differences; the mean is the pointwise average. Draw `d` owns RNG
/// stream `d` of the master seed, so the band is independent of
/// evaluation order and thread count.
pub fn witness_band(
    data_p: &DMatrix<f64>,
    data_q: &DMatrix<f64>,
    grid: &DMatrix<f64>,
    hyper: &WitnessHyper,
    level: f64,
    n_draws: usize,
    seed: u64,
) -> Result<WitnessBand> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must be in (0,1), got {level}")));
    }
    if n_draws == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    check_data_matrix(grid, "grid")?;

    // Resolve each draw's kernel configuration up front so posterior pairs
    // are shared across draws that picked the same hyperparameters.
    let per_draw_params: Vec<SeKernelParams> = match hyper {
        WitnessHyper::Fixed(params) => vec![*params; n_draws],
        WitnessHyper::Posterior { posterior, measure } => {
            if posterior.draws.is_empty() {
                return Err(Error::InvalidInput("empty hyperparameter posterior".into()));
            }
            (0..n_draws)
                .map(|d| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(d as u64 + 1);
                    let (theta, tau2) = posterior.draws[rng.random_range(0..posterior.draws.len())];
                    SeKernelParams::new(theta, *measure, tau2)
                })
                .collect::<Result<_>>()?
        }
    };
    let mut unique: Vec<SeKernelParams> = Vec::new();
    let mut pair_index = Vec::with_capacity(n_draws);
    for params in &per_draw_params {
        match unique.iter().position(|u| u == params) {
            Some(i) => pair_index.push(i),
            None => {
                unique.push(*params);
                pair_index.push(unique.len() - 1);
            }
        }
    }
    let pairs: Vec<SamplerPair> = unique
        .par_iter()
        .map(|params| sampler_pair(data_p, data_q, grid, params))
        .collect::<Result<_>>()?;

    let selection_range = match hyper {
        WitnessHyper::Posterior { posterior, .. } => Some(posterior.draws.len()),
        WitnessHyper::Fixed(_) => None,
    };
    let draws: Vec<DVector<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64 + 1);
            if let Some(len) = selection_range {
                // Replay the hyperparameter selection so the function draw
                // consumes the same stream positions as above.
                let _ = rng.random_range(0..len);
            }
            draw_witness(&pairs[pair_index[d]], &mut rng)
        })
        .collect();

    let p = grid.nrows();
    let mut mean = DVector::zeros(p);
    let mut lower = DVector::zeros(p);
    let mut upper = DVector::zeros(p);
    let mut column = vec![0.0; n_draws];
    for i in 0..p {
        for (d, draw) in draws.iter().enumerate() {
            column[d] = draw[i];
        }
        mean[i] = column.iter().sum::<f64>() / n_draws as f64;
        column.sort_by(|a, b| a.total_cmp(b));
        lower[i] = quantile_sorted(&column, (1.0 - level) / 2.0);
        upper[i] = quantile_sorted(&column, (1.0 + level) / 2.0);
    }

    Ok(WitnessBand { grid: grid.clone(), mean, lower, upper, level })
}

/// One joint Gaussian sample from an embedding posterior.
pub fn sample_posterior_function<R: Rng>(
    post: &PosteriorEmbedding,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(&post.covariance, "posterior draw covariance")?;
    Ok(sample_gaussian(&post.mean, &chol, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::se_eval;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn leb(theta: f64) -> SeKernelParams {
        SeKernelParams::lebesgue(theta, 1.0).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale))
    }

    fn row_vec(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
        (0..m.ncols()).map(|j| m[(i, j)]).collect()
    }

    #[test]
    fn mmd_of_identical_samples_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 12, 2, 2.0);
        let v = mmd2(&x, &x, &leb(0.9), Mmd2Variant::Biased).unwrap();
        assert!(v.abs() <= 1e-12);
    }

    #[test]
    fn mmd_two_singletons_closed_form() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let y = DMatrix::from_row_slice(1, 1, &[1.7]);
        let theta = 0.8;
        let v = mmd2(&x, &y, &leb(theta), Mmd2Variant::Biased).unwrap();
        let expect = 2.0 * (1.0 - (-1.7f64 * 1.7 / (2.0 * theta * theta)).exp());
        assert_relative_eq!(v, expect, max_relative = 1e-12);
    }

    #[test]
    fn mmd_matches_double_sum_expansion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 30, 2, 2.0);
        let y = random_matrix(&mut rng, 30, 2, 2.0);
        let params = leb(1.1);
        let v = mmd2(&x, &y, &params, Mmd2Variant::Biased).unwrap();
        let (n, p) = (30.0, 30.0);
        let mut kxx = 0.0;
        let mut kyy = 0.0;
        let mut kxy = 0.0;
        for i in 0..30 {
            for j in 0..30 {
                kxx += se_eval(&row_vec(&x, i), &row_vec(&x, j), &params).unwrap();
                kyy += se_eval(&row_vec(&y, i), &row_vec(&y, j), &params).unwrap();
                kxy += se_eval(&row_vec(&x, i), &row_vec(&y, j), &params).unwrap();
            }
        }
        let oracle = kxx / (n * n) + kyy / (p * p) - 2.0 * kxy / (n * p);
        assert!((v - oracle).abs() < 1e-12);
    }

    #[test]
    fn mmd_exactly_invariant_under_row_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 15, 2, 2.0);
        let y = random_matrix(&mut rng, 11, 2, 2.0);
        let perm_x: Vec<usize> = (0..15).rev().collect();
        let perm_y: Vec<usize> = (0..11).rev().collect();
        for variant in [Mmd2Variant::Biased, Mmd2Variant::Unbiased] {
            let a = mmd2(&x, &y, &leb(0.7), variant).unwrap();
            let b = mmd2(
                &x.select_rows(perm_x.iter()),
                &y.select_rows(perm_y.iter()),
                &leb(0.7),
                variant,
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn hsic_of_constant_column_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 10, 1, 2.0);
        let y = DMatrix::from_element(10, 1, 3.25);
        let v = hsic(&x, &y, &leb(1.0), &leb(1.0)).unwrap();
        assert!(v.abs() <= 1e-12);
    }

    #[test]
    fn self_hsic_equals_centered_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 8, 1, 2.0);
        let params = leb(0.9);
        let v = hsic(&x, &x, &params, &params).unwrap();
        let k = gram(&x, None, &params, KernelKind::Base).unwrap().entries;
        let kc = double_center(&k);
        let frob: f64 = kc.iter().map(|a| a * a).sum();
        assert!(v >= 0.0);
        assert!((v - frob / 64.0).abs() < 1e-12);
    }

    #[test]
    fn hsic_matches_four_loop_trace_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 6, 1, 2.0);
        let y = random_matrix(&mut rng, 6, 2, 2.0);
        let (px, py) = (leb(0.8), leb(1.3));
        let v = hsic(&x, &y, &px, &py).unwrap();
        let k = gram(&x, None, &px, KernelKind::Base).unwrap().entries;
        let l = gram(&y, None, &py, KernelKind::Base).unwrap().entries;
        let n = 6usize;
        let h = DMatrix::from_fn(n, n, |i, j| {
            if i == j { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 }
        });
        let mut trace = 0.0;
        for i in 0..n {
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        trace += k[(i, j)] * h[(j, a)] * l[(a, b)] * h[(b, i)];
                    }
                }
            }
        }
        assert!((v - trace / (n * n) as f64).abs() < 1e-10);
    }

    #[test]
    fn hsic_exactly_invariant_under_paired_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 9, 1, 2.0);
        let y = random_matrix(&mut rng, 9, 1, 2.0);
        let perm: Vec<usize> = vec![4, 2, 8, 0, 6, 1, 7, 3, 5];
        let a = hsic(&x, &y, &leb(1.0), &leb(1.0)).unwrap();
        let b = hsic(
            &x.select_rows(perm.iter()),
            &y.select_rows(perm.iter()),
            &leb(1.0),
            &leb(1.0),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_null_gives_large_p_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 20, 1, 2.0);
        let spec = TestSpec::TwoSample { x: &x, y: &x, params: leb(1.0) };
        let result = permutation_test(&spec, 200, 0.05, 11).unwrap();
        assert!(result.statistic.abs() <= 1e-12);
        assert!(result.p_value >= 0.5 && result.p_value <= 1.0);
        assert!(!result.reject);
    }

    #[test]
    fn permutation_test_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 25, 1, 1.0);
        let y = random_matrix(&mut rng, 20, 1, 1.0);
        let spec = TestSpec::TwoSample { x: &x, y: &y, params: leb(1.0) };
        let a = permutation_test(&spec, 150, 0.05, 5).unwrap();
        let b = permutation_test(&spec, 150, 0.05, 5).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.reject, b.reject);
        assert_eq!(a.reject, a.p_value <= a.alpha);
    }

    #[test]
    fn separated_samples_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_matrix(&mut rng, 30, 1, 1.0);
        let mut y = random_matrix(&mut rng, 30, 1, 1.0);
        y.iter_mut().for_each(|v| *v += 10.0);
        let spec = TestSpec::TwoSample { x: &x, y: &y, params: leb(1.0) };
        let result = permutation_test(&spec, 200, 0.05, 3).unwrap();
        assert!(result.reject);
        // Strongly dependent pairs for HSIC.
        let y2 = &x * 1.0 + random_matrix(&mut rng, 30, 1, 0.01);
        let spec = TestSpec::Independence {
            x: &x,
            y: &y2,
            params_x: leb(1.0),
            params_y: leb(1.0),
        };
        let result = permutation_test(&spec, 200, 0.05, 3).unwrap();
        assert!(result.reject);
        assert!(result.kernel_y.is_some());
    }

    #[test]
    fn witness_band_orders_and_brackets_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_matrix(&mut rng, 25, 1, 1.0);
        let q = random_matrix(&mut rng, 25, 1, 1.0);
        let grid = DMatrix::from_fn(31, 1, |i, _| -3.0 + 0.2 * i as f64);
        let band = witness_band(
            &p,
            &q,
            &grid,
            &WitnessHyper::Fixed(leb(0.8)),
            0.8,
            200,
            21,
        )
        .unwrap();
        for i in 0..31 {
            assert!(band.lower[i] <= band.mean[i] && band.mean[i] <= band.upper[i]);
        }
    }

    #[test]
    fn witness_band_symmetric_null_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_matrix(&mut rng, 40, 1, 1.0);
        let grid = DMatrix::from_fn(41, 1, |i, _| -2.0 + 0.1 * i as f64);
        let band = witness_band(
            &p,
            &p,
            &grid,
            &WitnessHyper::Fixed(leb(0.7)),
            0.8,
            400,
            17,
        )
        .unwrap();
        let mut ok = 0;
        for i in 0..41 {
            let std_est = (band.upper[i] - band.lower[i]) / 2.0 / 1.28;
            if band.mean[i].abs() <= 3.0 * std_est {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * 41.0, "only {ok}/41 grid points centered");
    }

    #[test]
    fn witness_band_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = random_matrix(&mut rng, 15, 1, 1.0);
        let q = random_matrix(&mut rng, 15, 1, 1.0);
        let grid = DMatrix::from_fn(11, 1, |i, _| -2.0 + 0.4 * i as f64);
        let a = witness_band(&p, &q, &grid, &WitnessHyper::Fixed(leb(1.0)), 0.8, 50, 9).unwrap();
        let b = witness_band(&p, &q, &grid, &WitnessHyper::Fixed(leb(1.0)), 0.8, 50, 9).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.lower, b.lower);
        assert_eq!(a.upper, b.upper);
    }
}
