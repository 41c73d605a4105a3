//! Monte Carlo validation of the latency and outage model.
//!
//! Each trial draws the cycles-per-bit `X ~ Gamma(κ, C(Q)/κ)` and one channel
//! power `g ~ Exp(1)` (block fading over the whole transmission). The latency
//! is `T = D_f·X/f_R + D_f·T0/(Q·R(ε))`; the trial is in outage when
//! `g < (2^R − 1)/γ0`.
//!
//! Work is split into fixed-size chunks, each with its own ChaCha stream, and
//! chunk results are merged in chunk order, so reports are bit-identical for a
//! given seed regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{
    cycles_per_bit, gamma0, rate_of_epsilon, total_cdf, total_latency_law, DesignPoint,
    ShiftedGamma, SystemParams,
};
use crate::specfun::{standard_exponential, standard_gamma, RngStream};

const CHUNK: usize = 1 << 16;

/// How empirical quantiles (and the KS statistic) are formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "size")]
pub enum QuantileMode {
    /// Keep every latency sample and sort once.
    Exact,
    /// Keep an evenly strided subsample of at most `size` draws (constant memory).
    Reservoir(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub design: DesignPoint,
    pub params: SystemParams,
    pub quantile_mode: QuantileMode,
    /// Levels ρ reported in [`SimReport::empirical_quantiles`].
    pub quantile_levels: Vec<f64>,
    /// Deadlines t reported in [`SimReport::empirical_reliability_at`].
    pub reliability_times: Vec<f64>,
    /// Whether a trial in outage counts as a failure for reliability.
    pub count_outage: bool,
}

impl SimConfig {
    pub fn new(params: SystemParams, design: DesignPoint, n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            stream_id: 0,
            design,
            params,
            quantile_mode: QuantileMode::Exact,
            quantile_levels: vec![0.5, 0.9, 0.95, 0.99, 0.999],
            reliability_times: Vec::new(),
            count_outage: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(domain("n_samples", 0.0, "n_samples >= 1"));
        }
        self.params.validate()?;
        self.design.validate()?;
        for &rho in &self.quantile_levels {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(domain("quantile level", rho, "0 < rho < 1"));
            }
        }
        if let QuantileMode::Reservoir(0) = self.quantile_mode {
            return Err(domain("reservoir size", 0.0, ">= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub rho: f64,
    pub empirical_s: f64,
    pub analytic_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    pub t_s: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n_samples: usize,
    pub empirical_mean_s: f64,
    pub analytic_mean_s: f64,
    pub empirical_quantiles: Vec<QuantileEstimate>,
    /// Sup distance between the empirical CDF of the kept samples and the
    /// analytic CDF.
    pub ks_distance: f64,
    /// Number of samples the KS statistic was computed from.
    pub ks_samples: usize,
    pub empirical_outage: f64,
    pub empirical_reliability_at: Vec<ReliabilityEstimate>,
}

impl SimReport {
    /// KS (equivalently DKW) acceptance radius at 1% significance.
    pub fn ks_critical_1pct(&self) -> f64 {
        ks_critical(self.ks_samples, 0.01)
    }
}

/// Asymptotic two-sided KS critical value `sqrt(ln(2/α) / (2n))`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sup |F_n − F| for sorted samples under a continuous `cdf`.
pub fn ks_distance_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

struct ChunkStats {
    sum: f64,
    outages: u64,
    reliable: Vec<u64>,
    kept: Vec<f64>,
}

struct Trial {
    law: ShiftedGamma,
    compresses: bool,
    // outage iff g < ln(1/(1−ε)), i.e. (2^R − 1)/γ0
    outage_below: f64,
}

fn chunk_stream(seed: u64, stream_id: u64, chunk: usize) -> RngStream {
    RngStream::new(seed, (stream_id << 32) | chunk as u64)
}

fn chunk_lengths(n: usize) -> Vec<usize> {
    let full = n / CHUNK;
    let mut v = vec![CHUNK; full];
    if !n.is_multiple_of(CHUNK) {
        v.push(n % CHUNK);
    }
    v
}

fn run_chunks(cfg: &SimConfig, keep_stride: Option<usize>) -> Result<Vec<ChunkStats>> {
    cfg.validate()?;
    let law = total_latency_law(&cfg.params, &cfg.design)?;
    let g0 = gamma0(&cfg.params);
    let snr_threshold =
        (rate_of_epsilon(cfg.design.epsilon, g0)? * std::f64::consts::LN_2).exp_m1();
    let trial = Trial {
        law,
        compresses: cycles_per_bit(cfg.design.q, cfg.params.psi)? > 0.0,
        outage_below: snr_threshold / g0,
    };
    let lens = chunk_lengths(cfg.n_samples);
    let stats = lens
        .par_iter()
        .enumerate()
        .map(|(i, &len)| {
            let mut rng = chunk_stream(cfg.seed, cfg.stream_id, i);
            let mut s = ChunkStats {
                sum: 0.0,
                outages: 0,
                reliable: vec![0; cfg.reliability_times.len()],
                kept: Vec::new(),
            };
            let offset = i * CHUNK;
            for j in 0..len {
                let t = if trial.compresses {
                    trial.law.shift_s
                        + trial.law.scale_s * standard_gamma(trial.law.shape, &mut rng)
                } else {
                    trial.law.shift_s
                };
                let outage = standard_exponential(&mut rng) < trial.outage_below;
                s.sum += t;
                s.outages += outage as u64;
                for (k, &deadline) in cfg.reliability_times.iter().enumerate() {
                    if t <= deadline && !(cfg.count_outage && outage) {
                        s.reliable[k] += 1;
                    }
                }
                if let Some(stride) = keep_stride {
                    if (offset + j).is_multiple_of(stride) {
                        s.kept.push(t);
                    }
                }
            }
            s
        })
        .collect();
    Ok(stats)
}

/// Simulate the total latency at a design point and compare with the analytic law.
pub fn simulate_latency(cfg: &SimConfig) -> Result<SimReport> {
    let stride = match cfg.quantile_mode {
        QuantileMode::Exact => 1,
        QuantileMode::Reservoir(size) => cfg.n_samples.div_ceil(size.max(1)),
    };
    let chunks = run_chunks(cfg, Some(stride))?;
    let law = total_latency_law(&cfg.params, &cfg.design)?;

    let n = cfg.n_samples as f64;
    let mut sum = 0.0;
    let mut outages = 0u64;
    let mut reliable = vec![0u64; cfg.reliability_times.len()];
    let mut kept = Vec::with_capacity(chunks.iter().map(|c| c.kept.len()).sum());
    for c in chunks {
        sum += c.sum;
        outages += c.outages;
        for (acc, r) in reliable.iter_mut().zip(&c.reliable) {
            *acc += r;
        }
        kept.extend(c.kept);
    }
    kept.sort_by(f64::total_cmp);

    // the sorted-sample formula assumes a continuous CDF; an atom needs its own sup
    let ks_distance = if law.is_degenerate() {
        kept.iter().filter(|&&t| t != law.shift_s).count() as f64 / kept.len() as f64
    } else {
        ks_distance_sorted(&kept, |t| total_cdf(&law, t))
    };

    let quantiles = cfg
        .quantile_levels
        .iter()
        .map(|&rho| {
            Ok(QuantileEstimate {
                rho,
                empirical_s: empirical_quantile(&kept, rho),
                analytic_s: law.quantile(rho)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SimReport {
        n_samples: cfg.n_samples,
        empirical_mean_s: sum / n,
        analytic_mean_s: law.mean(),
        empirical_quantiles: quantiles,
        ks_distance,
        ks_samples: kept.len(),
        empirical_outage: outages as f64 / n,
        empirical_reliability_at: cfg
            .reliability_times
            .iter()
            .zip(reliable)
            .map(|(&t_s, k)| ReliabilityEstimate {
                t_s,
                probability: k as f64 / n,
            })
            .collect(),
    })
}

/// Lower empirical quantile: the ⌈ρn⌉-th order statistic.
pub fn empirical_quantile(sorted: &[f64], rho: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let k = ((rho * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Fraction of `n` block-fading draws that fall below the decoding threshold
/// of the ε-outage rate.
pub fn simulate_outage(epsilon: f64, gamma0: f64, n: usize, rng: &RngStream) -> Result<f64> {
    if n == 0 {
        return Err(domain("n", 0.0, "n >= 1"));
    }
    let rate = rate_of_epsilon(epsilon, gamma0)?;
    let threshold = (rate * std::f64::consts::LN_2).exp_m1() / gamma0;
    let counts: Vec<u64> = chunk_lengths(n)
        .par_iter()
        .enumerate()
        .map(|(i, &len)| {
            let mut r = chunk_stream(rng.seed(), rng.stream_id(), i);
            (0..len)
                .filter(|_| standard_exponential(&mut r) < threshold)
                .count() as u64
        })
        .collect();
    Ok(counts.iter().sum::<u64>() as f64 / n as f64)
}

/// Probability that a transmission is both on time (`T <= t`) and, when
/// `cfg.count_outage` is set, not in outage. Streams without storing samples.
pub fn estimate_reliability(cfg: &SimConfig, t: f64) -> Result<f64> {
    let mut c = cfg.clone();
    c.reliability_times = vec![t];
    let chunks = run_chunks(&c, None)?;
    let hits: u64 = chunks.iter().map(|s| s.reliable[0]).sum();
    Ok(hits as f64 / cfg.n_samples as f64)
}
