//! Global passive adversary metrics: entropy of the target-linkage
//! distribution, sender unlinkability (ε̂, ε_R, δ), latency and bandwidth.
//!
//! Units: entropy in bits (log base 2), unlinkability in nats (natural log).

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::mixing::PacketId;
use crate::scalar::Mass;

/// Default floor applied to sender posteriors before taking log-ratios.
pub const DEFAULT_RHO: f64 = 1e-9;
/// Default residual target mass below which an entropy sample is final.
pub const DEFAULT_RESIDUAL_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no unlinkability samples")]
    NoSamples,
    #[error("residual mass {residual} above cutoff {cutoff}; sample censored")]
    Censored { residual: f64, cutoff: f64 },
}

/// Shannon entropy in bits of the normalised weights. Zero weights
/// contribute nothing; an all-zero input has zero entropy.
pub fn entropy<T: Float>(weights: &[T]) -> T {
    let total = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    if total <= T::zero() {
        return T::zero();
    }
    let h = weights
        .iter()
        .filter(|w| **w > T::zero())
        .map(|&w| {
            let p = w / total;
            p * p.log2()
        })
        .fold(T::zero(), |acc, x| acc + x);
    -h
}

/// The adversary's belief about which delivered packet is the target.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageDistribution<M> {
    pub entries: Vec<(PacketId, M)>,
    pub residual: M,
}

impl<M: Mass> LinkageDistribution<M> {
    pub fn delivered(&self) -> M {
        self.entries.iter().fold(M::zero(), |acc, (_, m)| acc + *m)
    }

    /// Entropy over delivered masses, or an error if too much mass is still
    /// inside the network.
    pub fn entropy_bits(&self, residual_cutoff: f64) -> Result<f64, MetricsError> {
        let residual = self.residual.as_f64();
        if residual >= residual_cutoff {
            return Err(MetricsError::Censored {
                residual,
                cutoff: residual_cutoff,
            });
        }
        let weights: Vec<f64> = self.entries.iter().map(|(_, m)| m.as_f64()).collect();
        Ok(entropy(&weights))
    }
}

/// One round of the sender-unlinkability experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnlinkabilitySample {
    pub pr_a: f64,
    pub pr_b: f64,
    pub round_index: u64,
}

impl UnlinkabilitySample {
    /// Normalises the two sender masses of the delivered packet into a
    /// two-hypothesis posterior, clamped into `[rho, 1 − rho]`.
    pub fn from_masses(mass_a: f64, mass_b: f64, rho: f64, round_index: u64) -> Self {
        let total = mass_a + mass_b;
        let (raw_a, raw_b) = if total > 0.0 {
            (mass_a / total, mass_b / total)
        } else {
            (0.5, 0.5)
        };
        // Clamped independently so swapping the senders swaps the fields exactly.
        Self {
            pr_a: raw_a.clamp(rho, 1.0 - rho),
            pr_b: raw_b.clamp(rho, 1.0 - rho),
            round_index,
        }
    }

    pub fn log_ratio(&self) -> f64 {
        self.pr_a.ln() - self.pr_b.ln()
    }

    pub fn swapped(&self) -> Self {
        Self {
            pr_a: self.pr_b,
            pr_b: self.pr_a,
            round_index: self.round_index,
        }
    }
}

/// Largest log-ratio a clamped sample can reach: `ln(1/rho − 1)`.
pub fn log_ratio_ceiling(rho: f64) -> f64 {
    (1.0 - rho).ln() - rho.ln()
}

/// Average per-round leakage ε̂ in nats.
pub fn epsilon_hat(samples: &[UnlinkabilitySample]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    Ok(samples.iter().map(UnlinkabilitySample::log_ratio).sum::<f64>() / samples.len() as f64)
}

/// Leakage after `rounds` observations, `R·ε̂`.
pub fn epsilon_after_rounds(eps_hat: f64, rounds: u64) -> f64 {
    rounds as f64 * eps_hat
}

/// Fraction of rounds whose absolute log-ratio exceeds `threshold`.
pub fn estimate_delta(samples: &[UnlinkabilitySample], threshold: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let over = samples.iter().filter(|s| s.log_ratio().abs() > threshold).count();
    over as f64 / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub count: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Summary of end-to-end latencies in seconds; `None` without samples.
pub fn latency_stats(latencies: &[SimTime]) -> Option<LatencyStats> {
    if latencies.is_empty() {
        return None;
    }
    let mut secs: Vec<f64> = latencies.iter().map(|t| t.as_secs_f64()).collect();
    secs.sort_by(f64::total_cmp);
    let mean = secs.iter().sum::<f64>() / secs.len() as f64;
    Some(LatencyStats {
        mean,
        p50: quantile(&secs, 0.5),
        p95: quantile(&secs, 0.95),
        max: secs[secs.len() - 1],
        count: secs.len(),
    })
}

/// Everything one run measured.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLedger {
    pub entropy_samples: Vec<f64>,
    pub unlinkability_samples: Vec<UnlinkabilitySample>,
    /// Per-round log-ratios, nats.
    pub epsilon_samples: Vec<f64>,
    /// End-to-end latencies of delivered real and target packets.
    pub latencies: Vec<SimTime>,
    pub packets_real: u64,
    pub packets_cover: u64,
    pub censored: u64,
    /// |delivered + residual − injected| for the target mass at the end of the run.
    pub mass_conservation_error: Option<f64>,
}

impl MetricsLedger {
    pub fn latency(&self) -> Option<LatencyStats> {
        latency_stats(&self.latencies)
    }

    /// (real + cover) / real; `None` if nothing real was sent.
    pub fn overhead_ratio(&self) -> Option<f64> {
        if self.packets_real == 0 {
            None
        } else {
            Some((self.packets_real + self.packets_cover) as f64 / self.packets_real as f64)
        }
    }

    pub fn entropy_mean(&self) -> Option<f64> {
        mean(&self.entropy_samples)
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Half-width of a normal-approximation 95% confidence interval of the mean.
pub fn ci95(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(1.96 * (var / xs.len() as f64).sqrt())
}
