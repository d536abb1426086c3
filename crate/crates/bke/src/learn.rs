//! Hyperparameter learning: maximize the marginal pseudolikelihood over the
//! lengthscale, or sample the posterior over `(theta, tau2)` with
//! random-walk Metropolis.
//!
//! The optimizer is derivative-free: a log-uniform grid scan records the
//! whole curve (the landscape is routinely multimodal), then golden-section
//! search refines the best bracket. The sampler walks `(ln theta, ln tau2)`
//! with independent Gaussian proposals under Gamma(1, 1) priors on both
//! parameters, the log-transform Jacobian included in the target.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{PriorMeasure, SeKernelParams};
use crate::pseudolik::{log_pseudolik_fast, Landmarks};

/// Log-uniform lengthscale grid for [`bkl_optimize`].
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Golden-section refinement of the best bracket (on by default).
    pub refine: bool,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::InvalidInput(format!("need 0 < lo < hi, got {lo}..{hi}")));
        }
        if count < 2 {
            return Err(Error::InvalidInput(format!("grid count must be >= 2, got {count}")));
        }
        Ok(Self { lo, hi, count, refine: true })
    }

    pub fn without_refinement(mut self) -> Self {
        self.refine = false;
        self
    }
}

/// Result of maximizing the marginal pseudolikelihood over the lengthscale.
#[derive(Debug, Clone)]
pub struct BklResult {
    pub theta_hat: f64,
    pub tau2: f64,
    /// `(theta, total log-pseudolikelihood)` at every grid point,
    /// thetas strictly increasing. Degenerate evaluations are `-inf`.
    pub curve: Vec<(f64, f64)>,
    /// Thetas of all interior grid maxima, in increasing order.
    pub local_optima: Vec<f64>,
}

/// Relative tolerance (in theta) of the golden-section refinement.
const REFINE_REL_TOL: f64 = 1e-3;

fn objective<'a>(
    data: &'a DMatrix<f64>,
    landmarks: &'a Landmarks,
    measure: PriorMeasure,
    tau2: f64,
) -> impl Fn(f64) -> Result<f64> + 'a {
    move |theta: f64| {
        let params = match SeKernelParams::new(theta, measure, tau2) {
            Ok(p) => p,
            Err(_) => return Ok(f64::NEG_INFINITY),
        };
        match log_pseudolik_fast(data, landmarks, &params) {
            Ok(eval) => Ok(eval.total),
            Err(Error::Conditioning(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// Argmax with ties broken toward the earlier (smaller-theta) entry.
fn argmax_tie_smaller(values: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(_, v)) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY || v.is_nan() {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) if v > values[b].1 => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Golden-section maximization of `f` over `[lo, hi]` in log-theta space.
/// Returns every `(theta, value)` probe it made.
fn golden_section_refine(
    f: &impl Fn(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
) -> Result<Vec<(f64, f64)>> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo.ln();
    let mut b = hi.ln();
    let mut evals = Vec::new();
    let mut probe = |w: f64| -> Result<f64> {
        let v = f(w.exp())?;
        evals.push((w.exp(), v));
        Ok(v)
    };
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = probe(x1)?;
    let mut f2 = probe(x2)?;
    while (b - a) > REFINE_REL_TOL {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = probe(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = probe(x2)?;
        }
    }
    Ok(evals)
}

/// Maximizes the total log-pseudolikelihood over the lengthscale at fixed
/// `tau2`: log-uniform grid scan, local-optima bookkeeping, then
/// golden-section refinement of the best bracket to a relative tolerance
/// of `1e-3` in theta. Ties break toward smaller theta.
pub fn bkl_optimize(
    data: &DMatrix<f64>,
    landmarks: &Landmarks,
    tau2: f64,
    measure: PriorMeasure,
    grid: &GridSpec,
) -> Result<BklResult> {
    if !(tau2.is_finite() && tau2 > 0.0) {
        return Err(Error::InvalidInput(format!("tau2 must be positive, got {tau2}")));
    }
    let f = objective(data, landmarks, measure, tau2);
    let (ln_lo, ln_hi) = (grid.lo.ln(), grid.hi.ln());
    let step = (ln_hi - ln_lo) / (grid.count - 1) as f64;
    let mut curve = Vec::with_capacity(grid.count);
    for k in 0..grid.count {
        let theta = (ln_lo + step * k as f64).exp();
        curve.push((theta, f(theta)?));
    }

    let local_optima: Vec<f64> = (1..grid.count - 1)
        .filter(|&k| {
            let v = curve[k].1;
            v.is_finite() && v > curve[k - 1].1 && v > curve[k + 1].1
        })
        .map(|k| curve[k].0)
        .collect();

    let best = argmax_tie_smaller(&curve)
        .ok_or_else(|| Error::OptimizationFailed("every grid evaluation was degenerate".into()))?;

    let mut candidates = curve.clone();
    if grid.refine {
        let bracket_lo = curve[best.saturating_sub(1)].0;
        let bracket_hi = curve[(best + 1).min(grid.count - 1)].0;
        if bracket_lo < bracket_hi {
            candidates.extend(golden_section_refine(&f, bracket_lo, bracket_hi)?);
        }
    }
    let winner = argmax_tie_smaller(&candidates)
        .ok_or_else(|| Error::OptimizationFailed("every evaluation was degenerate".into()))?;

    Ok(BklResult {
        theta_hat: candidates[winner].0,
        tau2,
        curve,
        local_optima,
    })
}

/// Which likelihood the sampler targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// The marginal pseudolikelihood of the data.
    Pseudolikelihood,
    /// Constant likelihood: the chain targets the priors alone. Used for
    /// prior-recovery diagnostics of the sampler itself.
    Flat,
}

/// Random-walk Metropolis configuration.
#[derive(Debug, Clone, Copy)]
pub struct MhConfig {
    pub iters: usize,
    pub warmup: usize,
    pub chains: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian proposal on the log scale.
    pub proposal_scale: f64,
    /// Hold `tau2` at this value and sample only `theta`.
    pub fixed_tau2: Option<f64>,
    pub likelihood: LikelihoodMode,
}

impl MhConfig {
    /// Paper-style defaults around the given iteration budget:
    /// proposal scale 0.15, both parameters sampled.
    pub fn new(iters: usize, warmup: usize, chains: usize, seed: u64) -> Result<Self> {
        if iters <= warmup {
            return Err(Error::InvalidInput(format!("iters={iters} must exceed warmup={warmup}")));
        }
        if chains == 0 {
            return Err(Error::InvalidInput("need at least one chain".into()));
        }
        Ok(Self {
            iters,
            warmup,
            chains,
            seed,
            proposal_scale: 0.15,
            fixed_tau2: None,
            likelihood: LikelihoodMode::Pseudolikelihood,
        })
    }

    pub fn with_proposal_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!("proposal scale must be positive, got {scale}")));
        }
        self.proposal_scale = scale;
        Ok(self)
    }

    pub fn with_fixed_tau2(mut self, tau2: f64) -> Result<Self> {
        if !(tau2.is_finite() && tau2 > 0.0) {
            return Err(Error::InvalidInput(format!("tau2 must be positive, got {tau2}")));
        }
        self.fixed_tau2 = Some(tau2);
        Ok(self)
    }

    pub fn with_likelihood(mut self, likelihood: LikelihoodMode) -> Self {
        self.likelihood = likelihood;
        self
    }
}

/// Pooled posterior draws over `(theta, tau2)`.
#[derive(Debug, Clone)]
pub struct HyperPosterior {
    /// Post-warmup draws, chain-major.
    pub draws: Vec<(f64, f64)>,
    /// Accepted proposals over all iterations of all chains.
    pub acceptance_rate: f64,
    /// Warmup iterations discarded per chain.
    pub warmup_discarded: usize,
    pub rhat_theta: f64,
    pub rhat_tau2: f64,
}

struct ChainRun {
    states: Vec<(f64, f64)>,
    accepted: usize,
}

/// One random-walk Metropolis chain over unconstrained coordinates.
/// Consumes a fixed number of RNG values per iteration, so extending
/// `iters` never disturbs earlier draws.
fn run_chain<F: Fn(f64, f64) -> f64>(
    target: &F,
    init: (f64, f64),
    scale: f64,
    iters: usize,
    warmup: usize,
    sample_second: bool,
    rng: &mut ChaCha8Rng,
) -> ChainRun {
    let mut state = init;
    let mut log_target = target(state.0, state.1);
    let mut states = Vec::with_capacity(iters - warmup);
    let mut accepted = 0;
    for it in 0..iters {
        let z1: f64 = rng.sample(rand_distr::StandardNormal);
        let prop_0 = state.0 + scale * z1;
        let prop_1 = if sample_second {
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            state.1 + scale * z2
        } else {
            state.1
        };
        let prop_target = target(prop_0, prop_1);
        let u: f64 = rng.random();
        // NaN deltas compare false, so pathological proposals are rejected.
        if u.ln() < prop_target - log_target {
            state = (prop_0, prop_1);
            log_target = prop_target;
            accepted += 1;
        }
        if it >= warmup {
            states.push(state);
        }
    }
    ChainRun { states, accepted }
}

fn exponential_draw(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -u.ln();
        }
    }
}

/// Split-R-hat over per-chain sequences: each chain is halved and the
/// usual between/within variance ratio is computed over the halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return f64::NAN;
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[c.len() - half..]);
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / half as f64).collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (half - 1) as f64)
        .collect();
    let w = vars.iter().sum::<f64>() / vars.len() as f64;
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let b = half as f64 * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (means.len() - 1) as f64;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (half as f64 - 1.0) / half as f64 * w + b / half as f64;
    (var_plus / w).sqrt()
}

/// Random-walk Metropolis over `(ln theta, ln tau2)` with Gamma(1, 1)
/// priors on `theta` and `tau2`. Chain `c` owns the generator seeded with
/// `seed + c` and starts from a prior draw; post-warmup draws are pooled
/// chain-major. Degenerate likelihood evaluations behave as `-inf` and are
/// auto-rejected.
pub fn mh_sample(
    data: &DMatrix<f64>,
    landmarks: &Landmarks,
    measure: PriorMeasure,
    cfg: &MhConfig,
) -> Result<HyperPosterior> {
    let loglik = |theta: f64, tau2: f64| -> f64 {
        match cfg.likelihood {
            LikelihoodMode::Flat => 0.0,
            LikelihoodMode::Pseudolikelihood => {
                match SeKernelParams::new(theta, measure, tau2) {
                    Ok(params) => match log_pseudolik_fast(data, landmarks, &params) {
                        Ok(eval) => eval.total,
                        Err(_) => f64::NEG_INFINITY,
                    },
                    Err(_) => f64::NEG_INFINITY,
                }
            }
        }
    };
    // Target over w = (ln theta, ln tau2): likelihood + Gamma(1,1) log
    // priors (-theta, -tau2) + the log-Jacobian of the transform (w1 + w2).
    let sample_tau2 = cfg.fixed_tau2.is_none();
    let target = |w1: f64, w2: f64| -> f64 {
        let theta = w1.exp();
        let tau2 = w2.exp();
        if !theta.is_finite() || !tau2.is_finite() || theta <= 0.0 || tau2 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let prior = if sample_tau2 {
            -theta - tau2 + w1 + w2
        } else {
            -theta + w1
        };
        loglik(theta, tau2) + prior
    };

    let mut per_chain: Vec<ChainRun> = Vec::with_capacity(cfg.chains);
    for c in 0..cfg.chains {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(c as u64));
        let theta0 = exponential_draw(&mut rng);
        let tau20 = cfg.fixed_tau2.unwrap_or_else(|| exponential_draw(&mut rng));
        per_chain.push(run_chain(
            &target,
            (theta0.ln(), tau20.ln()),
            cfg.proposal_scale,
            cfg.iters,
            cfg.warmup,
            sample_tau2,
            &mut rng,
        ));
    }

    let kept = cfg.iters - cfg.warmup;
    let mut draws = Vec::with_capacity(cfg.chains * kept);
    let mut theta_chains = Vec::with_capacity(cfg.chains);
    let mut tau2_chains = Vec::with_capacity(cfg.chains);
    let mut accepted = 0usize;
    for run in &per_chain {
        accepted += run.accepted;
        theta_chains.push(run.states.iter().map(|s| s.0.exp()).collect::<Vec<_>>());
        tau2_chains.push(run.states.iter().map(|s| s.1.exp()).collect::<Vec<_>>());
        draws.extend(run.states.iter().map(|s| (s.0.exp(), s.1.exp())));
    }

    Ok(HyperPosterior {
        draws,
        acceptance_rate: accepted as f64 / (cfg.chains * cfg.iters) as f64,
        warmup_discarded: cfg.warmup,
        rhat_theta: split_rhat(&theta_chains),
        rhat_tau2: if sample_tau2 { split_rhat(&tau2_chains) } else { 1.0 },
    })
}
