//! Convergence assessment: potential scale reduction, effective sample size,
//! and the per-fit convergence report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ChainSamples;

/// Split-chain potential scale reduction factor.
///
/// Each chain is halved (middle element dropped when odd) before comparing
/// between- and within-chain variance, which also flags within-chain drift.
/// Returns exactly 1 when the between-chain variance is zero, and the +inf
/// sentinel when the within-chain variance is zero with unequal means.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::TooFewChains(chains.len()));
    }
    for c in chains {
        if c.len() < 2 {
            return Err(Error::ChainTooShort { len: c.len(), min: 2 });
        }
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    let min_len = chains.iter().map(|c| c.len()).min().unwrap();
    if min_len >= 4 {
        for c in chains {
            let h = c.len() / 2;
            halves.push(&c[..h]);
            halves.push(&c[c.len() - h..]);
        }
    } else {
        // Too short to split meaningfully; fall back to whole chains.
        halves.extend_from_slice(chains);
    }
    psrf(&halves)
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn psrf(seqs: &[&[f64]]) -> Result<f64> {
    let m = seqs.len() as f64;
    let n = seqs[0].len();
    if seqs.iter().any(|s| s.len() != n) {
        return Err(Error::DimensionMismatch(
            "chains must have equal lengths".into(),
        ));
    }
    let stats: Vec<(f64, f64)> = seqs.iter().map(|s| mean_and_var(s)).collect();
    let within = stats.iter().map(|(_, v)| v).sum::<f64>() / m;
    let grand = stats.iter().map(|(mu, _)| mu).sum::<f64>() / m;
    let between_over_n = stats.iter().map(|(mu, _)| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);

    if between_over_n == 0.0 {
        return Ok(1.0);
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    let n = n as f64;
    let var_plus = (n - 1.0) / n * within + between_over_n;
    Ok((var_plus / within).sqrt())
}

/// Effective sample size of one chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub ess: f64,
    /// Set for constant chains, where autocorrelation is undefined and the
    /// estimate defaults to the chain length.
    pub degenerate: bool,
}

/// Geyer initial-positive-sequence estimator: autocorrelations are summed in
/// consecutive pairs until the first nonpositive pair. Capped at the chain
/// length.
pub fn effective_sample_size(chain: &[f64]) -> Result<EssEstimate> {
    let n = chain.len();
    if n < 10 {
        return Err(Error::ChainTooShort { len: n, min: 10 });
    }
    let nf = n as f64;
    let mean = chain.iter().sum::<f64>() / nf;
    let c0 = chain.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if c0 == 0.0 {
        return Ok(EssEstimate { ess: nf, degenerate: true });
    }
    let autocov = |t: usize| -> f64 {
        chain[..n - t]
            .iter()
            .zip(&chain[t..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let mut pair_sum = 0.0;
    let mut t = 0;
    while t + 1 < n {
        let gamma = (autocov(t) + autocov(t + 1)) / c0;
        if gamma <= 0.0 {
            break;
        }
        pair_sum += gamma;
        t += 2;
    }
    let tau = 2.0 * pair_sum - 1.0;
    let ess = if tau <= 0.0 { nf } else { (nf / tau).clamp(1.0, nf) };
    Ok(EssEstimate { ess, degenerate: false })
}

/// Diagnostics for one scalar parameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParameterDiagnostic {
    pub name: String,
    pub rhat: f64,
    /// Effective sample size summed over chains.
    pub ess: f64,
}

/// Convergence report over every recorded parameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub parameters: Vec<ParameterDiagnostic>,
    pub worst_rhat: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn diagnostic(&self, name: &str) -> Option<&ParameterDiagnostic> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Compute split R-hat and ESS for sigma2, lambda2, every group variance,
/// and every basis coefficient. Passes when the worst R-hat is below the
/// threshold (1.1 by default).
pub fn build_report(samples: &[ChainSamples], threshold: f64) -> Result<ConvergenceReport> {
    if samples.len() < 2 {
        return Err(Error::TooFewChains(samples.len()));
    }
    let kept = samples[0].n_kept();
    if samples.iter().any(|s| s.n_kept() != kept) {
        return Err(Error::DimensionMismatch(
            "chains have different numbers of retained draws".into(),
        ));
    }
    let g = samples[0].n_groups();
    let l = samples[0].basis_len();

    enum Param {
        Sigma2,
        Lambda2,
        Tau2(usize),
        Alpha(usize, usize),
    }
    let mut params: Vec<(String, Param)> = vec![
        ("sigma2".into(), Param::Sigma2),
        ("lambda2".into(), Param::Lambda2),
    ];
    for j in 0..g {
        params.push((format!("tau2_{j}"), Param::Tau2(j)));
    }
    for j in 0..g {
        for i in 0..l {
            params.push((format!("alpha_{j}_{i}"), Param::Alpha(j, i)));
        }
    }

    let parameters: Vec<ParameterDiagnostic> = params
        .into_par_iter()
        .map(|(name, p)| {
            let series: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| match p {
                    Param::Sigma2 => s.sigma2().to_vec(),
                    Param::Lambda2 => s.lambda2().to_vec(),
                    Param::Tau2(j) => s.tau2_series(j),
                    Param::Alpha(j, i) => s.alpha_series(j, i),
                })
                .collect();
            let views: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
            let rhat = gelman_rubin(&views)?;
            let mut ess = 0.0;
            for v in &views {
                ess += effective_sample_size(v)?.ess;
            }
            Ok(ParameterDiagnostic { name, rhat, ess })
        })
        .collect::<Result<_>>()?;

    let worst_rhat = parameters.iter().map(|p| p.rhat).fold(f64::NEG_INFINITY, f64::max);
    Ok(ConvergenceReport {
        parameters,
        worst_rhat,
        threshold,
        pass: worst_rhat < threshold,
    })
}
