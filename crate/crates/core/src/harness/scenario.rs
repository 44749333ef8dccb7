//! Scenario configuration: the JSON document accepted by the CLI and its
//! resolution into a validated [`Scenario`].
//!
//! ```json
//! {
//!   "name": "stratified-desk",
//!   "topology": { "family": "stratified", "num_layers": 3, "nodes_per_layer": 3 },
//!   "strategy": { "discipline": "poisson_pool", "mean_delay_s": 0.1 },
//!   "clients":  { "num_clients": 50, "send_rate_per_s": 1.0 },
//!   "cover":    { "origin": "off" },
//!   "run":      { "horizon_s": 60, "seeds": [1, 2, 3], "metric": "entropy" }
//! }
//! ```
//!
//! Unknown keys anywhere are rejected.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::metrics::{DEFAULT_RESIDUAL_CUTOFF, DEFAULT_RHO};
use crate::mixing::MixStrategy;
use crate::topology::{cascades_needed, Family, Topology, TopologyConfig};
use crate::traffic::{ClientConfig, CoverConfig, CoverOrigin};

/// Parameter profile used to fill in capacity and batch size when a config
/// leaves them out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 100 packets/s per node, batches of 100.
    #[default]
    Desk,
    /// 1000 packets/s per node, batches of 1000. Slow.
    Full,
}

impl Profile {
    pub fn capacity_per_s(self) -> f64 {
        match self {
            Profile::Desk => 100.0,
            Profile::Full => 1000.0,
        }
    }

    pub fn batch_size(self) -> usize {
        match self {
            Profile::Desk => 100,
            Profile::Full => 1000,
        }
    }
}

pub const DEFAULT_MEAN_DELAY_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    Batch,
    PoissonPool,
    RandomPick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub discipline: Discipline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Flush partial batches after this long. Off unless set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_timeout_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_delay_s: Option<f64>,
    /// Defaults to the node capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pick_rate_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_per_s: Option<f64>,
}

impl StrategyConfig {
    pub fn poisson(mean_delay_s: f64) -> Self {
        Self {
            discipline: Discipline::PoissonPool,
            batch_size: None,
            batch_timeout_s: None,
            mean_delay_s: Some(mean_delay_s),
            pick_rate_per_s: None,
            capacity_per_s: None,
        }
    }

    pub fn batch(batch_size: usize) -> Self {
        Self {
            discipline: Discipline::Batch,
            batch_size: Some(batch_size),
            ..Self::poisson(DEFAULT_MEAN_DELAY_S)
        }
        .without_delay()
    }

    pub fn random_pick(pick_rate_per_s: f64) -> Self {
        Self {
            discipline: Discipline::RandomPick,
            pick_rate_per_s: Some(pick_rate_per_s),
            ..Self::poisson(DEFAULT_MEAN_DELAY_S)
        }
        .without_delay()
    }

    fn without_delay(mut self) -> Self {
        self.mean_delay_s = None;
        self
    }

    pub fn with_capacity(mut self, capacity_per_s: f64) -> Self {
        self.capacity_per_s = Some(capacity_per_s);
        self
    }

    pub fn resolve(&self, profile: Profile) -> Result<(MixStrategy, f64), ConfigError> {
        let capacity = self.capacity_per_s.unwrap_or(profile.capacity_per_s());
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(ConfigError::new(
                "strategy.capacity_per_s",
                format!("must be positive, got {capacity}"),
            ));
        }
        let strategy = match self.discipline {
            Discipline::Batch => MixStrategy::ThresholdBatch {
                batch_size: self.batch_size.unwrap_or(profile.batch_size()),
                timeout_s: self.batch_timeout_s,
            },
            Discipline::PoissonPool => MixStrategy::PoissonPool {
                mean_delay_s: self.mean_delay_s.unwrap_or(DEFAULT_MEAN_DELAY_S),
            },
            Discipline::RandomPick => MixStrategy::RandomPickQueue {
                pick_rate_per_s: self.pick_rate_per_s.unwrap_or(capacity),
            },
        };
        strategy.validate()?;
        Ok((strategy, capacity))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Entropy,
    Unlinkability,
    LatencyOnly,
}

fn default_warmup_factor() -> f64 {
    10.0
}
fn one() -> u64 {
    1
}
fn default_delta_threshold() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    DEFAULT_RHO
}
fn default_cutoff() -> f64 {
    DEFAULT_RESIDUAL_CUTOFF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon_s: f64,
    /// Defaults to `warmup_factor` times the expected end-to-end latency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_s: Option<f64>,
    #[serde(default = "default_warmup_factor")]
    pub warmup_factor: f64,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    /// Unlinkability rounds per seed.
    #[serde(default = "one")]
    pub rounds_per_seed: u64,
    /// R in `ε_R = R·ε̂`.
    #[serde(default = "one")]
    pub observation_rounds: u64,
    #[serde(default = "default_delta_threshold")]
    pub delta_threshold_nats: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_cutoff")]
    pub residual_cutoff: f64,
    /// Idle time between unlinkability rounds; defaults to the expected latency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_gap_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
}

impl RunConfig {
    pub fn new(horizon_s: f64, seeds: Vec<u64>, metric: Metric) -> Self {
        Self {
            horizon_s,
            warmup_s: None,
            warmup_factor: default_warmup_factor(),
            seeds,
            metric,
            rounds_per_seed: 1,
            observation_rounds: 1,
            delta_threshold_nats: default_delta_threshold(),
            rho: DEFAULT_RHO,
            residual_cutoff: DEFAULT_RESIDUAL_CUTOFF,
            round_gap_s: None,
            profile: None,
        }
    }
}

/// Raw scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub topology: TopologyConfig,
    pub strategy: StrategyConfig,
    pub clients: ClientConfig,
    #[serde(default)]
    pub cover: CoverConfig,
    pub run: RunConfig,
}

/// Validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub topology: TopologyConfig,
    pub strategy: MixStrategy,
    pub capacity_per_s: f64,
    pub clients: ClientConfig,
    pub cover: CoverConfig,
    pub run: RunSpec,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    pub rounds_per_seed: u64,
    pub observation_rounds: u64,
    pub delta_threshold_nats: f64,
    pub rho: f64,
    pub residual_cutoff: f64,
    pub round_gap_s: f64,
}

pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::new(json_field_hint(&e), e.to_string()))
}

fn json_field_hint(e: &serde_json::Error) -> String {
    format!("json (line {}, column {})", e.line(), e.column())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        parse_json(text)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("scenario config serialises")
    }

    /// Validates and fills defaults. `profile_override` wins over `run.profile`.
    pub fn resolve(&self, profile_override: Option<Profile>) -> Result<Scenario, ConfigError> {
        let profile = profile_override.or(self.run.profile).unwrap_or_default();
        self.clients.validate()?;
        self.cover.validate()?;
        let (strategy, capacity) = self.strategy.resolve(profile)?;

        let mut topology = self.topology.clone();
        match topology.family {
            Family::PeerToPeer => match topology.total_nodes {
                None => topology.total_nodes = Some(self.clients.num_clients),
                Some(n) if n != self.clients.num_clients => {
                    return Err(ConfigError::new(
                        "topology.total_nodes",
                        format!(
                            "p2p peers are the clients: expected {} (clients.num_clients), got {n}",
                            self.clients.num_clients
                        ),
                    ))
                }
                Some(_) => {}
            },
            Family::MultiCascade if topology.auto_grow => {
                let rates = client_rates(&self.clients, &self.cover);
                topology.num_cascades = Some(cascades_needed(&rates, capacity).max(1));
            }
            _ => {}
        }
        let built = Topology::build(&topology)?;
        if topology.family == Family::PeerToPeer && built.route_len() + 2 > built.node_count() {
            return Err(ConfigError::new(
                "topology.route_length",
                "p2p needs route_length + 2 peers (sender and receiver are excluded)",
            ));
        }
        if topology.family == Family::MultiCascade {
            built.assign_cascades(&client_rates(&self.clients, &self.cover), capacity)?;
        }

        let run = &self.run;
        if !(run.horizon_s > 0.0) || !run.horizon_s.is_finite() {
            return Err(ConfigError::new("run.horizon_s", "must be positive"));
        }
        if run.seeds.is_empty() {
            return Err(ConfigError::new("run.seeds", "at least one seed required"));
        }
        if !(run.rho > 0.0 && run.rho < 0.5) {
            return Err(ConfigError::new("run.rho", "must lie in (0, 0.5)"));
        }
        if !(run.residual_cutoff > 0.0 && run.residual_cutoff < 1.0) {
            return Err(ConfigError::new("run.residual_cutoff", "must lie in (0, 1)"));
        }
        if run.rounds_per_seed == 0 {
            return Err(ConfigError::new("run.rounds_per_seed", "must be positive"));
        }
        if run.observation_rounds == 0 {
            return Err(ConfigError::new("run.observation_rounds", "must be positive"));
        }
        if run.metric == Metric::Unlinkability && self.clients.num_clients < 3 {
            return Err(ConfigError::new(
                "clients.num_clients",
                "unlinkability needs two senders and a distinct receiver",
            ));
        }

        let expected = expected_latency_s(&built, &strategy, capacity, &self.clients, &self.cover);
        let warmup_s = match run.warmup_s {
            Some(w) if w >= 0.0 => w,
            Some(w) => {
                return Err(ConfigError::new(
                    "run.warmup_s",
                    format!("must be non-negative, got {w}"),
                ))
            }
            None => run.warmup_factor * expected,
        };
        if warmup_s >= run.horizon_s {
            return Err(ConfigError::new(
                "run.warmup_s",
                format!("warmup {warmup_s:.3}s must be shorter than horizon {}s", run.horizon_s),
            ));
        }
        let round_gap_s = run.round_gap_s.unwrap_or(expected);
        if !(round_gap_s >= 0.0) {
            return Err(ConfigError::new("run.round_gap_s", "must be non-negative"));
        }

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".to_string()),
            topology,
            strategy,
            capacity_per_s: capacity,
            clients: self.clients.clone(),
            cover: self.cover.clone(),
            run: RunSpec {
                horizon_s: run.horizon_s,
                warmup_s,
                seeds: run.seeds.clone(),
                metric: run.metric,
                rounds_per_seed: run.rounds_per_seed,
                observation_rounds: run.observation_rounds,
                delta_threshold_nats: run.delta_threshold_nats,
                rho: run.rho,
                residual_cutoff: run.residual_cutoff,
                round_gap_s,
            },
            profile,
        })
    }
}

/// Offered packet rate per client, including client-originated cover.
pub fn client_rates(clients: &ClientConfig, cover: &CoverConfig) -> Vec<f64> {
    let cover_rate = if cover.origin == CoverOrigin::Clients {
        cover.active_rate()
    } else {
        0.0
    };
    vec![clients.packet_rate_per_s() + cover_rate; clients.num_clients]
}

/// Rough end-to-end latency used to size warmups and round gaps.
pub fn expected_latency_s(
    topology: &Topology,
    strategy: &MixStrategy,
    capacity: f64,
    clients: &ClientConfig,
    cover: &CoverConfig,
) -> f64 {
    let hops = topology.route_len() as f64;
    let mut offered: f64 = client_rates(clients, cover).iter().sum();
    if cover.origin == CoverOrigin::Nodes {
        offered += cover.active_rate() * topology.node_count() as f64;
    }
    let active_nodes = match topology.chains() {
        Some(chains) => {
            let used = cascades_needed(&client_rates(clients, cover), capacity).clamp(1, chains.len());
            used * chains[0].len()
        }
        None => topology.node_count(),
    };
    let per_node = (offered * hops / active_nodes as f64).max(1e-9);
    let service = 1.0 / capacity;
    match *strategy {
        MixStrategy::PoissonPool { mean_delay_s } => hops * (mean_delay_s + service),
        MixStrategy::RandomPickQueue { pick_rate_per_s } => {
            let sojourn = if pick_rate_per_s > per_node {
                1.0 / (pick_rate_per_s - per_node)
            } else {
                1.0 / pick_rate_per_s
            };
            hops * (sojourn + service)
        }
        MixStrategy::ThresholdBatch { batch_size, .. } => {
            let b = batch_size as f64;
            b / per_node.min(capacity) + (hops - 1.0) * b * service + hops * service
        }
    }
}

impl Scenario {
    pub fn users(&self) -> usize {
        self.clients.num_clients
    }

    pub fn strategy_label(&self) -> String {
        self.strategy.name().to_string()
    }
}
