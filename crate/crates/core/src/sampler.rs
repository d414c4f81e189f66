//! Blocked Gibbs sampler for the spatially varying coefficient model with a
//! group lasso prior.
//!
//! One sweep updates, in order: every basis-coefficient block `alpha_j` from
//! its Gaussian full conditional, every group variance `tau2_j` through a
//! generalized inverse Gaussian draw of the reciprocal, the noise variance
//! `sigma2` from an inverse gamma, and the global shrinkage `lambda2` from a
//! gamma. Chains share immutable design blocks and own their state and RNG
//! stream, so runs are reproducible regardless of scheduling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, StandardNormal};
use rayon::prelude::*;

use crate::basis::BasisSystem;
use crate::data::{FitConfig, Hyperparameters, SpatialDataset};
use crate::error::{Error, Result};
use crate::rng::child_rng;

const CHAIN_STREAM: u64 = 0xc4a1;
/// Floor for the GIG 1/x coefficient; keeps the b = 0 corner sampleable.
const GIG_B_FLOOR: f64 = 1e-300;
/// Floor for the GIG x coefficient when a coefficient block is exactly zero;
/// the event has measure zero and a fresh block draw follows immediately.
const GIG_A_FLOOR: f64 = 1e-300;
/// Below this value of a*b the exp(-a*x/2) factor is flat over the bulk and
/// the exact scaling limit (b over a chi-square) applies.
const GIG_LEVY_CUTOFF: f64 = 1e-20;
/// Group variances are clamped to keep the linear systems well scaled.
const TAU2_MIN: f64 = 1e-12;
const TAU2_MAX: f64 = 1e12;
/// Full recomputation cadence for the fitted-value cache.
const CACHE_REFRESH: usize = 64;

/// One draw from GIG(-1/2, a, b), density proportional to
/// x^(-3/2) * exp(-(a*x + b/x) / 2) on (0, inf).
///
/// The order -1/2 case reduces to an inverse Gaussian with mean sqrt(b/a)
/// and shape b, so no rejection step is needed. For b = 0 the density is not
/// normalizable; b is floored at 1e-300 and the draw comes from the scaling
/// limit b/chi2_1 (exact whenever a*b is negligible).
pub fn sample_gig_half(a: f64, b: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a <= 0.0 || !a.is_finite() || b < 0.0 || !b.is_finite() {
        return Err(Error::InvalidGigParameter { a, b });
    }
    let b_eff = b.max(GIG_B_FLOOR);
    if a * b_eff < GIG_LEVY_CUTOFF {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z != 0.0 {
                return Ok(b_eff / (z * z));
            }
        }
    }
    let mean = (b_eff / a).sqrt();
    let draw = InverseGaussian::new(mean, b_eff)
        .expect("positive parameters")
        .sample(rng);
    Ok(draw.max(f64::MIN_POSITIVE))
}

/// Current parameter values of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerState {
    /// Basis coefficients, one length-L vector per predictor group.
    pub alpha: Vec<DVector<f64>>,
    /// Group shrinkage variances.
    pub tau2: Vec<f64>,
    pub sigma2: f64,
    pub lambda2: f64,
    pub iteration: usize,
}

/// Immutable per-fit precomputation: scaled design blocks W_j = X_j * Psi,
/// their Gram matrices, and the response. Shared read-only by all chains.
#[derive(Clone, Debug)]
pub struct DesignBlocks {
    w: Vec<DMatrix<f64>>,
    gram: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    group_names: Vec<String>,
    n: usize,
    l: usize,
}

impl DesignBlocks {
    /// Build per-group blocks. With `include_intercept` a constant predictor
    /// is prepended as group 0 and treated identically to the others.
    pub fn new(dataset: &SpatialDataset, basis: &BasisSystem, include_intercept: bool) -> Self {
        let psi = basis.design_matrix(&dataset.locations);
        let n = dataset.n();
        let l = basis.len();
        let m = dataset.m();
        let n_groups = m + usize::from(include_intercept);

        let mut w = Vec::with_capacity(n_groups);
        let mut group_names = Vec::with_capacity(n_groups);
        if include_intercept {
            w.push(psi.clone());
            group_names.push("intercept".to_string());
        }
        for j in 0..m {
            let mut wj = psi.clone();
            for i in 0..n {
                let xij = dataset.x[(i, j)];
                wj.row_mut(i).scale_mut(xij);
            }
            w.push(wj);
            group_names.push(dataset.predictor_names[j].clone());
        }
        let gram = w.iter().map(|wj| wj.tr_mul(wj)).collect();
        DesignBlocks { w, gram, y: dataset.y.clone(), group_names, n, l }
    }

    pub fn n_groups(&self) -> usize {
        self.w.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn basis_len(&self) -> usize {
        self.l
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn block(&self, j: usize) -> &DMatrix<f64> {
        &self.w[j]
    }

    pub fn gram(&self, j: usize) -> &DMatrix<f64> {
        &self.gram[j]
    }
}

/// Posterior shape/rate of the noise-variance inverse gamma draw.
pub fn sigma2_posterior_params(
    hyper: &Hyperparameters,
    n: usize,
    n_groups: usize,
    l: usize,
    resid_ss: f64,
    shrink_ss: f64,
) -> (f64, f64) {
    let shape = hyper.a_sigma + (n + n_groups * l) as f64 / 2.0;
    let rate = hyper.b_sigma + 0.5 * resid_ss + 0.5 * shrink_ss;
    (shape, rate)
}

/// Posterior shape/rate of the global shrinkage gamma draw.
pub fn lambda2_posterior_params(
    hyper: &Hyperparameters,
    n_groups: usize,
    l: usize,
    tau2_sum: f64,
) -> (f64, f64) {
    let shape = hyper.a_lambda + (n_groups * (l + 1)) as f64 / 2.0;
    let rate = hyper.b_lambda + 0.5 * tau2_sum;
    (shape, rate)
}

/// One Gibbs chain: owns its state, fitted-value cache, scratch buffers, and
/// RNG stream; borrows the shared design blocks.
pub struct GibbsChain<'a> {
    blocks: &'a DesignBlocks,
    hyper: Hyperparameters,
    y: DVector<f64>,
    state: SamplerState,
    fitted: DVector<f64>,
    rng: ChaCha8Rng,
    resid: DVector<f64>,
    cross: DVector<f64>,
    delta: DVector<f64>,
    work: DMatrix<f64>,
    noise: DVector<f64>,
}

impl<'a> GibbsChain<'a> {
    /// Default initialization: coefficient blocks jittered around zero, unit
    /// group variances, sigma2 at the sample variance of y, lambda2 at its
    /// prior mean.
    pub fn new(blocks: &'a DesignBlocks, hyper: Hyperparameters, mut rng: ChaCha8Rng) -> Self {
        let l = blocks.basis_len();
        let g = blocks.n_groups();
        let alpha: Vec<DVector<f64>> = (0..g)
            .map(|_| DVector::from_fn(l, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let y = blocks.response();
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let var = if y.len() > 1 {
            y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            1.0
        };
        let state = SamplerState {
            alpha,
            tau2: vec![1.0; g],
            sigma2: var.max(1e-8),
            lambda2: hyper.a_lambda / hyper.b_lambda,
            iteration: 0,
        };
        Self::with_state(blocks, hyper, state, rng)
    }

    /// Start from an explicit state (the fitted cache is rebuilt).
    pub fn with_state(
        blocks: &'a DesignBlocks,
        hyper: Hyperparameters,
        state: SamplerState,
        rng: ChaCha8Rng,
    ) -> Self {
        let n = blocks.n();
        let l = blocks.basis_len();
        let mut chain = Self {
            blocks,
            hyper,
            y: blocks.response().clone(),
            state,
            fitted: DVector::zeros(n),
            rng,
            resid: DVector::zeros(n),
            cross: DVector::zeros(l),
            delta: DVector::zeros(l),
            work: DMatrix::zeros(l, l),
            noise: DVector::zeros(l),
        };
        chain.refresh_fitted();
        chain
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn set_state(&mut self, state: SamplerState) {
        self.state = state;
        self.refresh_fitted();
    }

    /// Replace the response vector (the design stays fixed).
    pub fn set_response(&mut self, y: DVector<f64>) {
        assert_eq!(y.len(), self.blocks.n());
        self.y = y;
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn refresh_fitted(&mut self) {
        self.fitted.fill(0.0);
        for j in 0..self.blocks.n_groups() {
            self.fitted.gemv(1.0, self.blocks.block(j), &self.state.alpha[j], 1.0);
        }
    }

    /// Max-norm gap between the incremental cache and a fresh recomputation.
    pub fn fitted_drift(&self) -> f64 {
        let mut fresh = DVector::zeros(self.blocks.n());
        for j in 0..self.blocks.n_groups() {
            fresh.gemv(1.0, self.blocks.block(j), &self.state.alpha[j], 1.0);
        }
        (&fresh - &self.fitted).amax()
    }

    /// Gaussian block update of alpha_j given the rest; the fitted cache is
    /// adjusted incrementally.
    pub fn update_alpha_block(&mut self, j: usize) -> Result<()> {
        let w = self.blocks.block(j);
        let l = self.blocks.basis_len();
        let sigma2 = self.state.sigma2;
        let tau2 = self.state.tau2[j];

        // r_j = y - fitted + W_j alpha_j
        self.resid.copy_from(&self.y);
        self.resid -= &self.fitted;
        self.resid.gemv(1.0, w, &self.state.alpha[j], 1.0);
        // cross = W_j^T r_j
        self.cross.gemv_tr(1.0, w, &self.resid, 0.0);

        self.work.copy_from(self.blocks.gram(j));
        let ridge = 1.0 / tau2;
        for i in 0..l {
            self.work[(i, i)] += ridge;
        }
        let chol = self.factor_with_jitter(j)?;

        // Posterior mean solves (G + I/tau2) m = W^T r; sigma2 cancels.
        let mut draw = self.cross.clone();
        chol.solve_mut(&mut draw);
        // Add sigma * L^{-T} z for covariance sigma2 * (G + I/tau2)^{-1}.
        for i in 0..l {
            self.noise[i] = self.rng.sample(StandardNormal);
        }
        let solved = chol.l_dirty().tr_solve_lower_triangular_mut(&mut self.noise);
        debug_assert!(solved, "triangular solve after successful factorization");
        draw.axpy(sigma2.sqrt(), &self.noise, 1.0);

        // fitted += W_j (alpha_new - alpha_old)
        self.delta.copy_from(&draw);
        self.delta -= &self.state.alpha[j];
        self.fitted.gemv(1.0, w, &self.delta, 1.0);
        self.state.alpha[j] = draw;
        Ok(())
    }

    /// Group variance update: the reciprocal gamma_j follows
    /// GIG(-1/2, a = |alpha_j|^2 / sigma2, b = lambda2) and tau2_j = 1/gamma_j.
    pub fn update_tau2(&mut self, j: usize) -> Result<()> {
        let norm_sq = self.state.alpha[j].norm_squared();
        let a = (norm_sq / self.state.sigma2).max(GIG_A_FLOOR);
        let gamma = sample_gig_half(a, self.state.lambda2, &mut self.rng)?;
        self.state.tau2[j] = (1.0 / gamma).clamp(TAU2_MIN, TAU2_MAX);
        Ok(())
    }

    /// Noise variance update from its inverse gamma full conditional.
    pub fn update_sigma2(&mut self) {
        self.resid.copy_from(&self.y);
        self.resid -= &self.fitted;
        let resid_ss = self.resid.norm_squared();
        let shrink_ss: f64 = self
            .state
            .alpha
            .iter()
            .zip(&self.state.tau2)
            .map(|(a, t)| a.norm_squared() / t)
            .sum();
        let (shape, rate) = sigma2_posterior_params(
            &self.hyper,
            self.blocks.n(),
            self.blocks.n_groups(),
            self.blocks.basis_len(),
            resid_ss,
            shrink_ss,
        );
        let precision = Gamma::new(shape, 1.0 / rate)
            .expect("positive shape and scale")
            .sample(&mut self.rng);
        self.state.sigma2 = (1.0 / precision).max(f64::MIN_POSITIVE);
    }

    /// Global shrinkage update from its gamma full conditional.
    pub fn update_lambda2(&mut self) {
        let tau2_sum: f64 = self.state.tau2.iter().sum();
        let (shape, rate) = lambda2_posterior_params(
            &self.hyper,
            self.blocks.n_groups(),
            self.blocks.basis_len(),
            tau2_sum,
        );
        let draw = Gamma::new(shape, 1.0 / rate)
            .expect("positive shape and scale")
            .sample(&mut self.rng);
        self.state.lambda2 = draw.max(f64::MIN_POSITIVE);
    }

    /// One full sweep in the fixed update order: all alpha blocks, all group
    /// variances, then sigma2 and lambda2.
    pub fn sweep(&mut self) -> Result<()> {
        for j in 0..self.blocks.n_groups() {
            self.update_alpha_block(j)?;
        }
        for j in 0..self.blocks.n_groups() {
            self.update_tau2(j)?;
        }
        self.update_sigma2();
        self.update_lambda2();
        self.state.iteration += 1;
        if self.state.iteration.is_multiple_of(CACHE_REFRESH) {
            self.refresh_fitted();
        }
        Ok(())
    }

    fn factor_with_jitter(&mut self, j: usize) -> Result<Cholesky<f64, Dyn>> {
        let l = self.blocks.basis_len();
        let trace: f64 = (0..l).map(|i| self.work[(i, i)]).sum();
        let mut eps = 0.0;
        for attempt in 0..6 {
            let mut candidate = self.work.clone();
            if eps > 0.0 {
                let jitter = eps * trace / l as f64;
                for i in 0..l {
                    candidate[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(candidate) {
                return Ok(chol);
            }
            eps = if attempt == 0 { 1e-10 } else { eps * 10.0 };
        }
        Err(Error::CholeskyFailure {
            group: j,
            iteration: self.state.iteration,
            attempts: 6,
            last_jitter: 1e-6 * trace / l as f64,
        })
    }
}

/// Post-warmup draws of one chain, stored flat and iteration-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSamples {
    pub chain_id: usize,
    pub seed: u64,
    n_groups: usize,
    basis_len: usize,
    kept: usize,
    sigma2: Vec<f64>,
    lambda2: Vec<f64>,
    tau2: Vec<f64>,
    alpha: Vec<f64>,
}

impl ChainSamples {
    fn with_capacity(chain_id: usize, seed: u64, n_groups: usize, basis_len: usize, kept: usize) -> Self {
        Self {
            chain_id,
            seed,
            n_groups,
            basis_len,
            kept,
            sigma2: Vec::with_capacity(kept),
            lambda2: Vec::with_capacity(kept),
            tau2: Vec::with_capacity(kept * n_groups),
            alpha: Vec::with_capacity(kept * n_groups * basis_len),
        }
    }

    fn record(&mut self, state: &SamplerState) {
        self.sigma2.push(state.sigma2);
        self.lambda2.push(state.lambda2);
        self.tau2.extend_from_slice(&state.tau2);
        for a in &state.alpha {
            self.alpha.extend(a.iter().copied());
        }
    }

    /// Rebuild from flat columns (the layout written to the samples CSV).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        chain_id: usize,
        seed: u64,
        n_groups: usize,
        basis_len: usize,
        sigma2: Vec<f64>,
        lambda2: Vec<f64>,
        tau2: Vec<f64>,
        alpha: Vec<f64>,
    ) -> Result<Self> {
        let kept = sigma2.len();
        if lambda2.len() != kept || tau2.len() != kept * n_groups || alpha.len() != kept * n_groups * basis_len
        {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent sample columns: kept={kept}, lambda2={}, tau2={}, alpha={}",
                lambda2.len(),
                tau2.len(),
                alpha.len()
            )));
        }
        Ok(Self { chain_id, seed, n_groups, basis_len, kept, sigma2, lambda2, tau2, alpha })
    }

    /// Record a sequence of states (used by tests and custom drivers).
    pub fn from_states(chain_id: usize, seed: u64, states: &[SamplerState]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyDraws);
        }
        let n_groups = states[0].tau2.len();
        let basis_len = states[0].alpha.first().map_or(0, |a| a.len());
        let mut out = Self::with_capacity(chain_id, seed, n_groups, basis_len, states.len());
        for s in states {
            out.record(s);
        }
        Ok(out)
    }

    pub fn n_kept(&self) -> usize {
        self.kept
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn basis_len(&self) -> usize {
        self.basis_len
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn lambda2(&self) -> &[f64] {
        &self.lambda2
    }

    pub fn tau2_series(&self, j: usize) -> Vec<f64> {
        (0..self.kept).map(|t| self.tau2[t * self.n_groups + j]).collect()
    }

    pub fn tau2_at(&self, t: usize) -> &[f64] {
        &self.tau2[t * self.n_groups..(t + 1) * self.n_groups]
    }

    /// Coefficients of group j at draw t (length L).
    pub fn alpha_at(&self, t: usize, j: usize) -> &[f64] {
        let stride = self.n_groups * self.basis_len;
        let start = t * stride + j * self.basis_len;
        &self.alpha[start..start + self.basis_len]
    }

    pub fn alpha_series(&self, j: usize, l: usize) -> Vec<f64> {
        (0..self.kept).map(|t| self.alpha_at(t, j)[l]).collect()
    }
}

/// Run a single chain for `config.n_iter` sweeps, recording post-warmup
/// states. The chain RNG stream is derived from (seed, chain_id).
pub fn run_chain(blocks: &DesignBlocks, config: &FitConfig, chain_id: usize) -> Result<ChainSamples> {
    config.validate()?;
    let rng = child_rng(config.seed, &[CHAIN_STREAM, chain_id as u64]);
    let mut chain = GibbsChain::new(blocks, config.hyper, rng);
    let mut out = ChainSamples::with_capacity(
        chain_id,
        config.seed,
        blocks.n_groups(),
        blocks.basis_len(),
        config.kept(),
    );
    for it in 0..config.n_iter {
        chain.sweep().map_err(|e| Error::ChainAborted {
            chain_id,
            source: Box::new(e),
        })?;
        if it >= config.warmup {
            out.record(chain.state());
        }
    }
    Ok(out)
}

/// Run `config.n_chains` chains on independent RNG streams, possibly in
/// parallel; results are ordered by chain id regardless of schedule.
pub fn run_chains(blocks: &DesignBlocks, config: &FitConfig) -> Result<Vec<ChainSamples>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|chain_id| run_chain(blocks, config, chain_id))
        .collect()
}
