//! Marginal pseudolikelihood of the observations given the kernel
//! hyperparameters.
//!
//! A fixed set of landmark points `z_1..z_m` defines the feature map
//! `phi(x) = [k(x, z_1), ..., k(x, z_m)]`. Pushing each observation through
//! `phi` and integrating the embedding out of the model leaves an
//! `mn`-dimensional Gaussian density over the stacked feature vectors with
//! covariance `1_n 1_n^T (x) R_zz + tau^2 I`, times the change-of-variables
//! volume `gamma(x_i) = sqrt(det(J^T J))` for each observation, where `J`
//! is the `m x D` Jacobian of `phi`.
//!
//! [`log_pseudolik_naive`] materializes the `mn x mn` covariance and is the
//! correctness oracle; [`log_pseudolik_fast`] evaluates the same quantity in
//! `O(m^3 + mn)` through the rank-one Kronecker structure:
//!
//! ```text
//! -1/2 { logdet[R + (tau^2/n) I] + mu^T (R + (tau^2/n) I)^-1 mu
//!        + ||K_xz||_F^2 / tau^2 - n ||mu||^2 / tau^2
//!        + m ln n + m (n-1) ln tau^2 + m n ln 2 pi }
//! ```
//!
//! with `mu = (1/n) K_zx 1_n` the empirical embedding at the landmarks.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{check_data_matrix, gram, row_sq_dist, KernelKind, SeKernelParams};
use crate::linalg::{chol_log_det, cholesky_with_jitter, permutation_invariant_sum};

/// Largest `m * n` the naive path will materialize.
pub const NAIVE_GUARD: usize = 2000;

/// Two landmark rows closer than this (Euclidean) count as duplicates.
const DUPLICATE_TOL: f64 = 1e-12;

/// The fixed points anchoring the feature map. Requires `m >= D`, finite
/// entries, and pairwise-distinct rows.
#[derive(Debug, Clone)]
pub struct Landmarks {
    points: DMatrix<f64>,
}

impl Landmarks {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        check_data_matrix(&points, "landmarks")?;
        let (m, d) = points.shape();
        if m < d {
            return Err(Error::InvalidInput(format!(
                "need at least as many landmarks as dimensions (m={m} < D={d})"
            )));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if row_sq_dist(&points, i, &points, j).sqrt() <= DUPLICATE_TOL {
                    return Err(Error::InvalidInput(format!(
                        "duplicate landmark rows {i} and {j}"
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn count(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Log marginal pseudolikelihood split into its two factors.
#[derive(Debug, Clone, Copy)]
pub struct PseudolikEval {
    pub log_gaussian_term: f64,
    pub log_jacobian_term: f64,
    /// Exactly `log_gaussian_term + log_jacobian_term`. `-inf` flags a
    /// degenerate Jacobian somewhere in the data.
    pub total: f64,
}

impl PseudolikEval {
    fn new(log_gaussian_term: f64, log_jacobian_term: f64) -> Self {
        Self {
            log_gaussian_term,
            log_jacobian_term,
            total: log_gaussian_term + log_jacobian_term,
        }
    }
}

fn check_dims(data: &DMatrix<f64>, landmarks: &Landmarks) -> Result<()> {
    check_data_matrix(data, "data")?;
    if data.ncols() != landmarks.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: data D={} vs landmarks D={}",
            data.ncols(),
            landmarks.dim()
        )));
    }
    Ok(())
}

/// Feature map `phi(x)_l = k(x, z_l)`.
pub fn phi_z(x: &[f64], landmarks: &Landmarks, params: &SeKernelParams) -> Result<DVector<f64>> {
    let x_mat = DMatrix::from_row_slice(1, x.len(), x);
    check_dims(&x_mat, landmarks)?;
    let g = gram(&x_mat, Some(landmarks.points()), params, KernelKind::Base)?;
    Ok(g.entries.row(0).transpose())
}

/// Largest number of row subsets the exact log-domain determinant will
/// enumerate before falling back to the scaled Gram factorization.
const SUBSET_GUARD: usize = 20_000;

fn binomial_capped(m: usize, d: usize) -> usize {
    let mut acc: usize = 1;
    for i in 0..d {
        acc = match acc.checked_mul(m - i) {
            Some(v) => v / (i + 1),
            None => return usize::MAX,
        };
        if acc > SUBSET_GUARD {
            return usize::MAX;
        }
    }
    acc
}

/// Subset terms this many log-units below the running maximum cannot move
/// the final f64 log-sum and are pruned (e^-60 ~ 9e-27 relative).
const LSE_PRUNE_MARGIN: f64 = 60.0;

struct SubsetState<'a> {
    log_k: &'a [f64],
    grads: &'a DMatrix<f64>,
    order: Vec<usize>,
    /// `suffix[i]` = sum of the largest `j` scores from position `i`,
    /// laid out as `suffix[i][j]`; used for the completion bound.
    score_prefix: Vec<f64>,
    d: usize,
    picked: Vec<usize>,
    rows: DMatrix<f64>,
    terms: Vec<f64>,
    max_term: f64,
}

impl SubsetState<'_> {
    /// Largest achievable score sum when `need` more rows must come from
    /// positions `from..` of the sorted order.
    fn completion_bound(&self, from: usize, need: usize) -> f64 {
        self.score_prefix[from + need] - self.score_prefix[from]
    }

    fn visit(&mut self, from: usize, partial_score: f64) {
        let need = self.d - self.picked.len();
        if need == 0 {
            let mut log_weight = 0.0;
            for (row, &l) in self.picked.iter().enumerate() {
                log_weight += 2.0 * self.log_k[l];
                for col in 0..self.d {
                    self.rows[(row, col)] = self.grads[(l, col)];
                }
            }
            let det = self.rows.clone().determinant();
            if det != 0.0 {
                let t = log_weight + 2.0 * det.abs().ln();
                self.terms.push(t);
                self.max_term = self.max_term.max(t);
            }
            return;
        }
        for pos in from..=(self.order.len() - need) {
            // Hadamard bound: |det| <= prod ||g_l||, so the term is at most
            // twice the score sum; skip branches that cannot reach the sum.
            let bound = 2.0 * (partial_score + self.completion_bound(pos, need));
            if bound < self.max_term - LSE_PRUNE_MARGIN {
                break;
            }
            let l = self.order[pos];
            let score = self.log_k[l]
                + 0.5 * (0..self.d).map(|c| self.grads[(l, c)].powi(2)).sum::<f64>().ln();
            self.picked.push(l);
            self.visit(pos + 1, partial_score + score);
            self.picked.pop();
        }
    }
}

/// log det(J^T J) by Cauchy-Binet: the sum over all D-row subsets S of
/// `(prod_{l in S} k(x, z_l)^2) det(G_S)^2`, with `G_S` the unweighted
/// gradient rows `(x - z_l) / theta^2`. Each subset's contribution is kept
/// as a log and combined by log-sum-exp, so the result stays exact even
/// when the kernel values themselves underflow. Subsets are visited in
/// descending score order with branch-and-bound pruning of contributions
/// that cannot register in the sum. Returns `-inf` only when every subset
/// is geometrically degenerate.
fn log_det_jtj_cauchy_binet(log_k: &[f64], grads: &DMatrix<f64>, d: usize) -> f64 {
    let m = log_k.len();
    let scores: Vec<f64> = (0..m)
        .map(|l| {
            let norm_sq: f64 = (0..d).map(|c| grads[(l, c)].powi(2)).sum();
            log_k[l] + 0.5 * norm_sq.ln()
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut score_prefix = vec![0.0; m + 1];
    for (i, &l) in order.iter().enumerate() {
        score_prefix[i + 1] = score_prefix[i] + scores[l];
    }

    let mut state = SubsetState {
        log_k,
        grads,
        order,
        score_prefix,
        d,
        picked: Vec::with_capacity(d),
        rows: DMatrix::zeros(d, d),
        terms: Vec::new(),
        max_term: f64::NEG_INFINITY,
    };
    state.visit(0, 0.0);

    if state.max_term == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let max = state.max_term;
    let sum: f64 = state
        .terms
        .iter()
        .map(|&t| if t >= max - LSE_PRUNE_MARGIN { (t - max).exp() } else { 0.0 })
        .sum();
    max + sum.ln()
}

/// Fallback for very large landmark sets: Gram of the Jacobian with the
/// dominant kernel value factored out, log-determinant via Cholesky.
/// Subject to underflow of subdominant directions; `-inf` doubles as the
/// numerically-singular flag.
fn log_det_jtj_scaled_gram(log_k: &[f64], grads: &DMatrix<f64>, d: usize) -> f64 {
    let m = log_k.len();
    let log_scale = log_k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut g = DMatrix::<f64>::zeros(d, d);
    for l in 0..m {
        let c = (log_k[l] - log_scale).exp();
        for i in 0..d {
            let gi = c * grads[(l, i)];
            for j in 0..=i {
                g[(i, j)] += gi * c * grads[(l, j)];
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            g[(i, j)] = g[(j, i)];
        }
    }
    let log_det = match Cholesky::new(g) {
        Some(chol) => chol_log_det(&chol),
        None => return f64::NEG_INFINITY,
    };
    if log_det.is_nan() {
        return f64::NEG_INFINITY;
    }
    2.0 * d as f64 * log_scale + log_det
}

/// Log of the Jacobian volume `gamma(x) = sqrt(det(J^T J))`, with
/// `J_{l j} = d k(x, z_l) / d x_j`, evaluated in the log domain so small
/// kernel values cannot underflow it. A geometrically singular `J^T J`
/// yields `-inf` (degeneracy flag), never NaN.
pub fn log_gamma(x: &[f64], landmarks: &Landmarks, params: &SeKernelParams) -> Result<f64> {
    let x_mat = DMatrix::from_row_slice(1, x.len(), x);
    check_dims(&x_mat, landmarks)?;
    let d = x.len();
    let m = landmarks.count();
    let z = landmarks.points();
    let inv_2theta2 = 1.0 / (2.0 * params.theta * params.theta);
    let inv_theta2 = 1.0 / (params.theta * params.theta);

    // log k(x, z_l) and unweighted gradient rows (x - z_l) / theta^2.
    let log_k: Vec<f64> = (0..m)
        .map(|l| -row_sq_dist(&x_mat, 0, z, l) * inv_2theta2)
        .collect();
    let grads = DMatrix::from_fn(m, d, |l, j| (x[j] - z[(l, j)]) * inv_theta2);

    let log_det = if binomial_capped(m, d) <= SUBSET_GUARD {
        log_det_jtj_cauchy_binet(&log_k, &grads, d)
    } else {
        log_det_jtj_scaled_gram(&log_k, &grads, d)
    };
    Ok(0.5 * log_det)
}

/// Jacobian volume `gamma(x)`; 0 when `J^T J` is singular.
pub fn gamma(x: &[f64], landmarks: &Landmarks, params: &SeKernelParams) -> Result<f64> {
    Ok(log_gamma(x, landmarks, params)?.exp())
}

fn log_jacobian_term(
    data: &DMatrix<f64>,
    landmarks: &Landmarks,
    params: &SeKernelParams,
) -> Result<f64> {
    // Parallel over observations; the order-insensitive sum keeps the
    // result bit-identical for any thread count.
    let mut terms = (0..data.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = (0..data.ncols()).map(|j| data[(i, j)]).collect();
            log_gamma(&row, landmarks, params)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(permutation_invariant_sum(&mut terms))
}

/// Direct evaluation through the full `mn`-dimensional Gaussian. Guarded to
/// `m * n <= 2000`; serves as the oracle for [`log_pseudolik_fast`].
pub fn log_pseudolik_naive(
    data: &DMatrix<f64>,
    landmarks: &Landmarks,
    params: &SeKernelParams,
) -> Result<PseudolikEval> {
    check_dims(data, landmarks)?;
    let n = data.nrows();
    let m = landmarks.count();
    if m * n > NAIVE_GUARD {
        return Err(Error::GuardExceeded(format!(
            "naive path needs m*n <= {NAIVE_GUARD}, got {}",
            m * n
        )));
    }

    // Stacked feature vector, observation-major: [phi(x_1); ...; phi(x_n)].
    let k_xz = gram(data, Some(landmarks.points()), params, KernelKind::Base)?.entries;
    let mut v = DVector::zeros(m * n);
    for i in 0..n {
        for l in 0..m {
            v[i * m + l] = k_xz[(i, l)];
        }
    }

    let r_zz = gram(landmarks.points(), None, params, KernelKind::Prior)?.entries;
    let mut cov = DMatrix::zeros(m * n, m * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..m {
                for l2 in 0..m {
                    cov[(i * m + l, j * m + l2)] = r_zz[(l, l2)];
                }
            }
        }
    }
    for idx in 0..(m * n) {
        cov[(idx, idx)] += params.tau2;
    }

    let chol = cholesky_with_jitter(&cov, "naive pseudolikelihood covariance")?;
    let quad = v.dot(&chol.solve(&v));
    let log_gaussian = -0.5
        * ((m * n) as f64 * (2.0 * std::f64::consts::PI).ln() + chol_log_det(&chol) + quad);

    Ok(PseudolikEval::new(
        log_gaussian,
        log_jacobian_term(data, landmarks, params)?,
    ))
}

/// Kronecker-structured evaluation, `O(m^3 + mn)` for the Gaussian term.
/// Agrees with [`log_pseudolik_naive`] to high accuracy and has no size
/// guard. Exactly invariant under permutations of the data rows.
pub fn log_pseudolik_fast(
    data: &DMatrix<f64>,
    landmarks: &Landmarks,
    params: &SeKernelParams,
) -> Result<PseudolikEval> {
    check_dims(data, landmarks)?;
    let n = data.nrows();
    let m = landmarks.count();
    let nf = n as f64;
    let tau2 = params.tau2;

    let k_xz = gram(data, Some(landmarks.points()), params, KernelKind::Base)?.entries;
    let r_zz = gram(landmarks.points(), None, params, KernelKind::Prior)?.entries;

    // Row-permutation-invariant reductions over observations.
    let mu = DVector::from_iterator(
        m,
        (0..m).map(|l| {
            let mut col: Vec<f64> = (0..n).map(|i| k_xz[(i, l)]).collect();
            permutation_invariant_sum(&mut col) / nf
        }),
    );
    let mut row_sq: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|l| k_xz[(i, l)] * k_xz[(i, l)]).sum())
        .collect();
    let frob_sq = permutation_invariant_sum(&mut row_sq);

    let mut a = r_zz;
    for l in 0..m {
        a[(l, l)] += tau2 / nf;
    }
    let chol = cholesky_with_jitter(&a, "landmark prior system")?;
    let quad = mu.dot(&chol.solve(&mu));

    let log_gaussian = -0.5
        * (chol_log_det(&chol)
            + quad
            + frob_sq / tau2
            - nf * mu.norm_squared() / tau2
            + m as f64 * nf.ln()
            + (m * (n - 1)) as f64 * tau2.ln()
            + (m * n) as f64 * (2.0 * std::f64::consts::PI).ln());

    Ok(PseudolikEval::new(
        log_gaussian,
        log_jacobian_term(data, landmarks, params)?,
    ))
}

/// Landmark count heuristic: `max(D, min(20, ceil(n / 10)))`.
pub fn default_landmark_count(n: usize, d: usize) -> usize {
    d.max(n.div_ceil(10).min(20))
}

/// Seeded selection of `m` pairwise-distinct rows to hold out as landmarks.
/// Returns the selected row indices in selection order. Rows duplicating an
/// already-selected landmark are skipped and replaced by further draws;
/// fails if fewer than `m` distinct rows exist.
pub fn choose_landmark_indices(data: &DMatrix<f64>, m: usize, seed: u64) -> Result<Vec<usize>> {
    check_data_matrix(data, "data")?;
    let n = data.nrows();
    let d = data.ncols();
    if m < d {
        return Err(Error::InvalidInput(format!("m={m} < D={d}")));
    }
    if m >= n {
        return Err(Error::InvalidInput(format!("m={m} must be < n={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut selected: Vec<usize> = Vec::with_capacity(m);
    for idx in order {
        let distinct = selected
            .iter()
            .all(|&s| row_sq_dist(data, idx, data, s).sqrt() > DUPLICATE_TOL);
        if distinct {
            selected.push(idx);
            if selected.len() == m {
                return Ok(selected);
            }
        }
    }
    Err(Error::DegenerateData(format!(
        "only {} distinct rows available for {m} landmarks",
        selected.len()
    )))
}

/// Splits the dataset into `m` held-out landmarks and the remaining
/// `n - m` working rows (kept in their original order).
pub fn choose_landmarks(
    data: &DMatrix<f64>,
    m: usize,
    seed: u64,
) -> Result<(Landmarks, DMatrix<f64>)> {
    let selected = choose_landmark_indices(data, m, seed)?;
    let landmarks = Landmarks::new(data.select_rows(selected.iter()))?;
    let mut mask = vec![true; data.nrows()];
    for &idx in &selected {
        mask[idx] = false;
    }
    let keep: Vec<usize> = (0..data.nrows()).filter(|&i| mask[i]).collect();
    Ok((landmarks, data.select_rows(keep.iter())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{r_eval, se_eval};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn leb(theta: f64, tau2: f64) -> SeKernelParams {
        SeKernelParams::lebesgue(theta, tau2).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale))
    }

    fn row_vec(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
        (0..m.ncols()).map(|j| m[(i, j)]).collect()
    }

    #[test]
    fn phi_at_landmark_is_one() {
        let lm = Landmarks::new(DMatrix::from_row_slice(1, 1, &[0.4])).unwrap();
        let phi = phi_z(&[0.4], &lm, &leb(1.0, 1.0)).unwrap();
        assert_eq!(phi.len(), 1);
        assert_eq!(phi[0], 1.0);
    }

    #[test]
    fn phi_matches_gram_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_matrix(&mut rng, 5, 2, 2.0);
        let lm = Landmarks::new(z.clone()).unwrap();
        let x = [0.3, -0.9];
        let params = leb(0.7, 1.0);
        let phi = phi_z(&x, &lm, &params).unwrap();
        for l in 0..5 {
            let expect = se_eval(&x, &row_vec(&z, l), &params).unwrap();
            assert!((phi[l] - expect).abs() < 1e-15);
            assert!(phi[l] > 0.0 && phi[l] <= 1.0);
        }
    }

    #[test]
    fn gamma_vanishes_at_single_landmark_peak() {
        let lm = Landmarks::new(DMatrix::from_row_slice(1, 1, &[0.0])).unwrap();
        let g = gamma(&[0.0], &lm, &leb(1.0, 1.0)).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(log_gamma(&[0.0], &lm, &leb(1.0, 1.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn gamma_single_entry_jacobian() {
        let lm = Landmarks::new(DMatrix::from_row_slice(1, 1, &[0.0])).unwrap();
        let g = gamma(&[1.0], &lm, &leb(1.0, 1.0)).unwrap();
        assert_relative_eq!(g, (-0.5f64).exp(), max_relative = 1e-12);
    }

    fn gamma_fd_oracle(x: &[f64], lm: &Landmarks, params: &SeKernelParams) -> f64 {
        let d = x.len();
        let m = lm.count();
        let h = 1e-5;
        let mut j = DMatrix::zeros(m, d);
        for col in 0..d {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[col] += h;
            lo[col] -= h;
            let phi_hi = phi_z(&hi, lm, params).unwrap();
            let phi_lo = phi_z(&lo, lm, params).unwrap();
            for row in 0..m {
                j[(row, col)] = (phi_hi[row] - phi_lo[row]) / (2.0 * h);
            }
        }
        (j.transpose() * j).determinant().max(0.0).sqrt()
    }

    #[test]
    fn gamma_matches_finite_difference_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..=3usize {
            let m = 4.max(d);
            let z = random_matrix(&mut rng, m, d, 1.5);
            let lm = Landmarks::new(z).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let params = leb(rng.random_range(0.5..2.0), 1.0);
            let g = gamma(&x, &lm, &params).unwrap();
            let fd = gamma_fd_oracle(&x, &lm, &params);
            assert_relative_eq!(g, fd, max_relative = 1e-4);
        }
    }

    #[test]
    fn gamma_invariant_under_rigid_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = random_matrix(&mut rng, 5, 2, 1.5);
        let x = [0.4, -0.2];
        let params = leb(0.8, 1.0);
        let phi = 0.7f64;
        let rot = DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()]);
        let z_rot = &z * rot.transpose();
        let x_rot_vec = &rot * DVector::from_row_slice(&x);
        let g1 = gamma(&x, &Landmarks::new(z).unwrap(), &params).unwrap();
        let g2 = gamma(
            x_rot_vec.as_slice(),
            &Landmarks::new(z_rot).unwrap(),
            &params,
        )
        .unwrap();
        assert_relative_eq!(g1, g2, max_relative = 1e-10);
    }

    #[test]
    fn log_gamma_stays_finite_under_kernel_underflow() {
        // max_l k(x, z_l) far below 1e-100: the log-domain path must not NaN.
        let lm = Landmarks::new(DMatrix::from_row_slice(2, 1, &[0.0, 0.1])).unwrap();
        let lg = log_gamma(&[60.0], &lm, &leb(0.05, 1.0)).unwrap();
        assert!(lg.is_finite() || lg == f64::NEG_INFINITY);
        assert!(!lg.is_nan());
        assert!(lg < -1e5);
    }

    #[test]
    fn log_gamma_survives_dominant_landmark_swamping() {
        // One near landmark, one 10 units away at theta = 0.3: the far
        // row sits ~e^-500 below the near one, far past what a direct
        // Gram determinant can retain, yet log gamma is finite. With a
        // single 2-subset the value has a closed form.
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 10.0, 0.0]);
        let lm = Landmarks::new(z.clone()).unwrap();
        let x = [0.5, 0.3];
        let theta = 0.3;
        let params = leb(theta, 1.0);
        let lg = log_gamma(&x, &lm, &params).unwrap();

        let t2 = theta * theta;
        let log_k1 = -(0.5f64 * 0.5 + 0.3 * 0.3) / (2.0 * t2);
        let log_k2 = -((0.5f64 - 10.0).powi(2) + 0.3 * 0.3) / (2.0 * t2);
        let g1 = [0.5 / t2, 0.3 / t2];
        let g2 = [(0.5 - 10.0) / t2, 0.3 / t2];
        let det = g1[0] * g2[1] - g1[1] * g2[0];
        let expect = log_k1 + log_k2 + det.abs().ln();
        assert!(lg.is_finite());
        assert_relative_eq!(lg, expect, max_relative = 1e-12);
    }

    #[test]
    fn naive_scalar_case_matches_closed_form() {
        let x = 0.7;
        let z = 0.2;
        let params = leb(0.9, 0.6);
        let lm = Landmarks::new(DMatrix::from_row_slice(1, 1, &[z])).unwrap();
        let data = DMatrix::from_row_slice(1, 1, &[x]);
        let eval = log_pseudolik_naive(&data, &lm, &params).unwrap();
        let r = r_eval(&[z], &[z], &params).unwrap();
        let k = se_eval(&[x], &[z], &params).unwrap();
        let expect = -0.5
            * ((2.0 * std::f64::consts::PI).ln() + (r + params.tau2).ln() + k * k / (r + params.tau2));
        assert_relative_eq!(eval.log_gaussian_term, expect, max_relative = 1e-12);
        assert_eq!(eval.total, eval.log_gaussian_term + eval.log_jacobian_term);
    }

    #[test]
    fn fast_agrees_with_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let d = rng.random_range(1..=3usize);
            let n = rng.random_range(3..=20usize);
            let m = rng.random_range(d.max(2)..=6usize);
            let data = random_matrix(&mut rng, n, d, 2.0);
            let lm = Landmarks::new(random_matrix(&mut rng, m, d, 2.0)).unwrap();
            let params = leb(rng.random_range(0.3..3.0), rng.random_range(0.2..5.0));
            let naive = log_pseudolik_naive(&data, &lm, &params).unwrap();
            let fast = log_pseudolik_fast(&data, &lm, &params).unwrap();
            assert!(
                (naive.log_gaussian_term - fast.log_gaussian_term).abs() < 1e-8,
                "naive {} vs fast {}",
                naive.log_gaussian_term,
                fast.log_gaussian_term
            );
            // Identical Jacobian path; a -inf flag must agree bitwise too.
            assert_eq!(naive.log_jacobian_term, fast.log_jacobian_term);
            assert!(naive.total == fast.total || (naive.total - fast.total).abs() < 1e-8);
        }
    }

    #[test]
    fn fast_collapses_to_plain_gaussian_for_single_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = 4;
        let z = random_matrix(&mut rng, m, 1, 2.0);
        let lm = Landmarks::new(z.clone()).unwrap();
        let data = random_matrix(&mut rng, 1, 1, 2.0);
        let params = leb(0.8, 0.7);
        let fast = log_pseudolik_fast(&data, &lm, &params).unwrap();

        let phi = phi_z(&row_vec(&data, 0), &lm, &params).unwrap();
        let mut cov = gram(&z, None, &params, KernelKind::Prior).unwrap().entries;
        for i in 0..m {
            cov[(i, i)] += params.tau2;
        }
        let chol = Cholesky::new(cov.clone()).unwrap();
        let expect = -0.5
            * (m as f64 * (2.0 * std::f64::consts::PI).ln()
                + cov.determinant().ln()
                + phi.dot(&chol.solve(&phi)));
        assert_relative_eq!(fast.log_gaussian_term, expect, max_relative = 1e-10);
    }

    #[test]
    fn fast_is_exactly_row_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = random_matrix(&mut rng, 17, 2, 2.0);
        let lm = Landmarks::new(random_matrix(&mut rng, 5, 2, 2.0)).unwrap();
        let params = leb(0.9, 0.8);
        let base = log_pseudolik_fast(&data, &lm, &params).unwrap();
        let perm: Vec<usize> = (0..17).rev().collect();
        let shuffled = data.select_rows(perm.iter());
        let other = log_pseudolik_fast(&shuffled, &lm, &params).unwrap();
        assert_eq!(base.total, other.total);
        assert_eq!(base.log_gaussian_term, other.log_gaussian_term);
    }

    #[test]
    fn noise_scaling_in_zero_signal_regime() {
        // Data far from the landmarks: the total is dominated by the
        // normalization, so multiplying tau2 by 10 lowers it by (mn/2) ln 10.
        let lm = Landmarks::new(DMatrix::from_row_slice(2, 1, &[0.0, 0.2])).unwrap();
        let data = DMatrix::from_row_slice(5, 1, &[30.0, 31.0, 32.0, 33.0, 34.0]);
        let theta = 0.05;
        let a = log_pseudolik_fast(&data, &lm, &leb(theta, 100.0)).unwrap();
        let b = log_pseudolik_fast(&data, &lm, &leb(theta, 1000.0)).unwrap();
        let drop = a.total - b.total;
        let expect = (2.0 * 5.0 / 2.0) * 10f64.ln();
        assert_relative_eq!(drop, expect, max_relative = 0.01);
    }

    #[test]
    fn total_is_finite_and_smooth_across_theta_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let data = random_matrix(&mut rng, 25, 1, 2.0);
        let lm = Landmarks::new(random_matrix(&mut rng, 4, 1, 2.0)).unwrap();
        let (lo, hi) = (0.05f64, 50.0f64);
        for k in 0..200 {
            let t = lo.ln() + (hi.ln() - lo.ln()) * k as f64 / 199.0;
            let params = leb(t.exp(), 1.0);
            let eval = log_pseudolik_fast(&data, &lm, &params).unwrap();
            assert!(eval.total.is_finite(), "non-finite at theta={}", t.exp());
        }
    }

    #[test]
    fn naive_guard_rejects_large_problems() {
        let data = DMatrix::from_fn(300, 1, |i, _| i as f64);
        let lm = Landmarks::new(DMatrix::from_fn(8, 1, |i, _| 1000.0 + i as f64)).unwrap();
        assert!(matches!(
            log_pseudolik_naive(&data, &lm, &leb(1.0, 1.0)),
            Err(Error::GuardExceeded(_))
        ));
    }

    #[test]
    fn landmark_split_partitions_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let data = random_matrix(&mut rng, 10, 2, 2.0);
        let (lm, rest) = choose_landmarks(&data, 3, 99).unwrap();
        assert_eq!(lm.count(), 3);
        assert_eq!(rest.nrows(), 7);
        // Every original row appears exactly once across the two parts.
        let mut seen = vec![0usize; 10];
        for i in 0..10 {
            for l in 0..3 {
                if row_sq_dist(&data, i, lm.points(), l) == 0.0 {
                    seen[i] += 1;
                }
            }
            for r in 0..7 {
                if row_sq_dist(&data, i, &rest, r) == 0.0 {
                    seen[i] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn landmark_selection_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let data = random_matrix(&mut rng, 12, 1, 2.0);
        let a = choose_landmark_indices(&data, 4, 7).unwrap();
        let b = choose_landmark_indices(&data, 4, 7).unwrap();
        assert_eq!(a, b);
        let c = choose_landmark_indices(&data, 4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn duplicate_rows_are_skipped_in_selection() {
        // 4 distinct values, each duplicated: picking 4 landmarks works and
        // never picks the same value twice; 5 is impossible.
        let data = DMatrix::from_row_slice(8, 1, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let (lm, rest) = choose_landmarks(&data, 4, 0).unwrap();
        assert_eq!(rest.nrows(), 4);
        let mut vals: Vec<f64> = (0..4).map(|l| lm.points()[(l, 0)]).collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            choose_landmarks(&data, 5, 0),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn landmark_bounds_are_enforced() {
        let data = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(choose_landmark_indices(&data, 1, 0).is_err()); // m < D
        assert!(choose_landmark_indices(&data, 4, 0).is_err()); // m >= n
        assert!(Landmarks::new(DMatrix::from_row_slice(1, 2, &[0.0, 0.0])).is_err());
        assert!(Landmarks::new(DMatrix::from_row_slice(2, 1, &[0.5, 0.5])).is_err());
    }
}
