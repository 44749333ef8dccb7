//! Seeded execution of one scenario, optionally across a thread pool.

use rayon::prelude::*;

use crate::engine::SimTime;
use crate::error::{Error, Result};
use crate::harness::scenario::Scenario;
use crate::metrics::{
    ci95, epsilon_after_rounds, epsilon_hat, estimate_delta, latency_stats, mean, LatencyStats, MetricsLedger,
    UnlinkabilitySample,
};
use crate::scalar::Mass;
use crate::sim::Simulation;

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub ledger: MetricsLedger,
}

/// All seeds of one scenario, in seed-list order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub scenario: Scenario,
    pub axis: Option<f64>,
    pub seeds: Vec<SeedResult>,
}

pub fn run_seed<M: Mass>(scenario: &Scenario, seed: u64) -> Result<MetricsLedger> {
    Ok(Simulation::<M>::new(scenario, seed)?.run()?)
}

fn thread_pool(parallel: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::Search(format!("thread pool: {e}")))
}

/// Runs every seed of `scenario`. Output order and content do not depend on
/// `parallel`.
pub fn run_point(scenario: &Scenario, axis: Option<f64>, parallel: usize) -> Result<PointResult> {
    let seeds = &scenario.run.seeds;
    let ledgers: Vec<Result<MetricsLedger>> = if parallel <= 1 {
        seeds.iter().map(|&s| run_seed::<f64>(scenario, s)).collect()
    } else {
        thread_pool(parallel)?.install(|| seeds.par_iter().map(|&s| run_seed::<f64>(scenario, s)).collect())
    };
    let seeds = seeds
        .iter()
        .zip(ledgers)
        .map(|(&seed, ledger)| ledger.map(|ledger| SeedResult { seed, ledger }))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointResult {
        scenario: scenario.clone(),
        axis,
        seeds,
    })
}

impl PointResult {
    pub fn entropy_samples(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .flat_map(|s| s.ledger.entropy_samples.iter().copied())
            .collect()
    }

    pub fn entropy_mean(&self) -> Option<f64> {
        mean(&self.entropy_samples())
    }

    pub fn entropy_ci95(&self) -> Option<f64> {
        ci95(&self.entropy_samples())
    }

    pub fn unlinkability_samples(&self) -> Vec<UnlinkabilitySample> {
        self.seeds
            .iter()
            .flat_map(|s| s.ledger.unlinkability_samples.iter().copied())
            .collect()
    }

    pub fn epsilon_hat(&self) -> Option<f64> {
        epsilon_hat(&self.unlinkability_samples()).ok()
    }

    pub fn epsilon_r(&self) -> Option<f64> {
        self.epsilon_hat()
            .map(|e| epsilon_after_rounds(e, self.scenario.run.observation_rounds))
    }

    pub fn delta(&self) -> Option<f64> {
        let samples = self.unlinkability_samples();
        (!samples.is_empty()).then(|| estimate_delta(&samples, self.scenario.run.delta_threshold_nats))
    }

    pub fn latencies(&self) -> Vec<SimTime> {
        self.seeds
            .iter()
            .flat_map(|s| s.ledger.latencies.iter().copied())
            .collect()
    }

    pub fn latency(&self) -> Option<LatencyStats> {
        latency_stats(&self.latencies())
    }

    pub fn censored(&self) -> u64 {
        self.seeds.iter().map(|s| s.ledger.censored).sum()
    }

    pub fn packets_real(&self) -> u64 {
        self.seeds.iter().map(|s| s.ledger.packets_real).sum()
    }

    pub fn packets_cover(&self) -> u64 {
        self.seeds.iter().map(|s| s.ledger.packets_cover).sum()
    }

    pub fn max_conservation_error(&self) -> f64 {
        self.seeds
            .iter()
            .filter_map(|s| s.ledger.mass_conservation_error)
            .fold(0.0, f64::max)
    }
}
