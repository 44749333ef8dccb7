//! Independent oracles and statistics shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

/// Exact two-sample Kolmogorov–Smirnov p-value, `P(D ≥ d_obs)` under the null,
/// by counting lattice paths that stay strictly inside the band.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (m, n) = (a.len(), b.len());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);

    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < m && j < n {
        let x = xs[i].min(ys[j]);
        while i < m && xs[i] <= x {
            i += 1;
        }
        while j < n && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / m as f64 - j as f64 / n as f64).abs());
    }

    // Probability that a uniformly random monotone path keeps |i/m − j/n| < d.
    let eps = 1e-12;
    let inside = |i: usize, j: usize| (i as f64 / m as f64 - j as f64 / n as f64).abs() < d - eps;
    let mut row = vec![0.0f64; n + 1];
    for i in 0..=m {
        for j in 0..=n {
            let v = if i == 0 && j == 0 {
                1.0
            } else {
                let up = if i > 0 { row[j] * i as f64 / (i + j) as f64 } else { 0.0 };
                let left = if j > 0 {
                    row[j - 1] * j as f64 / (i + j) as f64
                } else {
                    0.0
                };
                up + left
            };
            row[j] = if inside(i, j) { v } else { 0.0 };
        }
    }
    (d, (1.0 - row[n]).clamp(0.0, 1.0))
}

/// One-sided sign test: `P(X ≥ successes)` for `X ~ Bin(trials, 1/2)`.
pub fn sign_test_p(successes: u64, trials: u64) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, trials).unwrap();
    1.0 - dist.cdf(successes - 1)
}

/// Pearson χ² goodness-of-fit p-value against equal expected counts.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Observable event at a single mix whose delays are i.i.d. exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obs {
    /// An input with the given target mass enters the pool.
    In(f64),
    /// Some pooled packet leaves.
    Out,
}

/// Matching counts by brute force: `counts[k][i]` is the number of
/// input–output matchings consistent with `pattern` (true = arrival,
/// false = departure) in which output `k` is input `i`, out of `total`.
/// With i.i.d. exponential delays every consistent matching has the same
/// likelihood, so these counts are the exact posterior up to `total`.
pub fn bijection_counts(pattern: &[bool]) -> (Vec<Vec<u64>>, u64) {
    let inputs = pattern.iter().filter(|a| **a).count();
    let outputs = pattern.len() - inputs;
    let mut counts = vec![vec![0u64; inputs]; outputs];
    let mut total = 0u64;
    enumerate(pattern, 0, 0, &mut Vec::new(), &mut Vec::new(), &mut counts, &mut total);
    (counts, total)
}

/// Posterior masses of each output and the residual left in the pool.
pub fn bijection_oracle(trace: &[Obs]) -> (Vec<f64>, f64) {
    let pattern: Vec<bool> = trace.iter().map(|o| matches!(o, Obs::In(_))).collect();
    let inputs: Vec<f64> = trace
        .iter()
        .filter_map(|o| match o {
            Obs::In(m) => Some(*m),
            Obs::Out => None,
        })
        .collect();
    let (counts, total) = bijection_counts(&pattern);
    let out_mass: Vec<f64> = counts
        .iter()
        .map(|row| {
            row.iter()
                .zip(&inputs)
                .map(|(&c, &m)| c as f64 / total as f64 * m)
                .sum()
        })
        .collect();
    let residual = inputs.iter().sum::<f64>() - out_mass.iter().sum::<f64>();
    (out_mass, residual)
}

fn enumerate(
    trace: &[bool],
    pos: usize,
    next_input: usize,
    present: &mut Vec<usize>,
    chosen: &mut Vec<usize>,
    counts: &mut [Vec<u64>],
    total: &mut u64,
) {
    if pos == trace.len() {
        *total += 1;
        for (k, &i) in chosen.iter().enumerate() {
            counts[k][i] += 1;
        }
        return;
    }
    match trace[pos] {
        true => {
            present.push(next_input);
            enumerate(trace, pos + 1, next_input + 1, present, chosen, counts, total);
            present.pop();
        }
        false => {
            for slot in 0..present.len() {
                let input = present.remove(slot);
                chosen.push(input);
                enumerate(trace, pos + 1, next_input, present, chosen, counts, total);
                chosen.pop();
                present.insert(slot, input);
            }
        }
    }
}

/// Every In/Out pattern with at most `max_events` events whose pool never
/// exceeds `max_pool` and never departs from empty.
pub fn all_patterns(max_events: usize, max_pool: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    fn grow(cur: &mut Vec<bool>, pool: usize, max_events: usize, max_pool: usize, out: &mut Vec<Vec<bool>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == max_events {
            return;
        }
        if pool < max_pool {
            cur.push(true);
            grow(cur, pool + 1, max_events, max_pool, out);
            cur.pop();
        }
        if pool > 0 {
            cur.push(false);
            grow(cur, pool - 1, max_events, max_pool, out);
            cur.pop();
        }
    }
    grow(&mut Vec::new(), 0, max_events, max_pool, &mut out);
    out
}

use mixsim::harness::{Metric, RunConfig, ScenarioConfig, StrategyConfig};
use mixsim::topology::TopologyConfig;
use mixsim::traffic::{ClientConfig, CoverConfig};

pub fn seeds(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

pub fn config(
    topology: TopologyConfig,
    strategy: StrategyConfig,
    clients: usize,
    metric: Metric,
    horizon_s: f64,
    seeds: Vec<u64>,
) -> ScenarioConfig {
    ScenarioConfig {
        name: None,
        topology,
        strategy,
        clients: ClientConfig::new(clients, 1.0),
        cover: CoverConfig::off(),
        run: RunConfig::new(horizon_s, seeds, metric),
    }
}
