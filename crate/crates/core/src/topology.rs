//! Node graphs for the four topology families and per-packet route sampling.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub type NodeId = usize;
pub type ClientId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cascade,
    MultiCascade,
    Stratified,
    #[serde(rename = "p2p", alias = "peer_to_peer")]
    PeerToPeer,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Cascade => "cascade",
            Family::MultiCascade => "multi_cascade",
            Family::Stratified => "stratified",
            Family::PeerToPeer => "p2p",
        }
    }
}

/// Default number of mixes a packet traverses.
pub const DEFAULT_ROUTE_LENGTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub family: Family,
    /// Chain length for `cascade`; peer count for `p2p` (defaults to the client count).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_cascades: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cascade_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes_per_layer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_length: Option<usize>,
    /// Multi-cascade only: provision as many cascades as the offered load needs.
    #[serde(default)]
    pub auto_grow: bool,
}

impl TopologyConfig {
    fn blank(family: Family) -> Self {
        Self {
            family,
            total_nodes: None,
            num_cascades: None,
            cascade_length: None,
            num_layers: None,
            nodes_per_layer: None,
            route_length: None,
            auto_grow: false,
        }
    }

    pub fn cascade(length: usize) -> Self {
        Self {
            total_nodes: Some(length),
            ..Self::blank(Family::Cascade)
        }
    }

    pub fn multi_cascade(num_cascades: usize, cascade_length: usize) -> Self {
        Self {
            num_cascades: Some(num_cascades),
            cascade_length: Some(cascade_length),
            ..Self::blank(Family::MultiCascade)
        }
    }

    pub fn stratified(num_layers: usize, nodes_per_layer: usize) -> Self {
        Self {
            num_layers: Some(num_layers),
            nodes_per_layer: Some(nodes_per_layer),
            ..Self::blank(Family::Stratified)
        }
    }

    pub fn p2p(total_nodes: usize, route_length: usize) -> Self {
        Self {
            total_nodes: Some(total_nodes),
            route_length: Some(route_length),
            ..Self::blank(Family::PeerToPeer)
        }
    }

    /// Number of mixes every route traverses under this configuration.
    pub fn hops(&self) -> Option<usize> {
        match self.family {
            Family::Cascade => self.total_nodes,
            Family::MultiCascade => self.cascade_length,
            Family::Stratified => self.num_layers,
            Family::PeerToPeer => Some(self.route_length.unwrap_or(DEFAULT_ROUTE_LENGTH)),
        }
    }
}

fn required(value: Option<usize>, field: &str) -> Result<usize, ConfigError> {
    match value {
        None => Err(ConfigError::new(field, "required for this topology family")),
        Some(0) => Err(ConfigError::new(field, "must be positive")),
        Some(v) => Ok(v),
    }
}

/// Where a packet originates or terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Client(ClientId),
    Node(NodeId),
    CoverSink,
    DecoySink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub hops: Vec<NodeId>,
    pub sender: Endpoint,
    pub receiver: Endpoint,
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    Chains(Vec<Vec<NodeId>>),
    Layers(Vec<Vec<NodeId>>),
    Peers { count: usize, route_length: usize },
}

/// Static node graph. Immutable after [`Topology::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    family: Family,
    layout: Layout,
    successors: Vec<Vec<NodeId>>,
}

/// Result of packing clients onto parallel cascades.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeAssignment {
    pub per_client: Vec<usize>,
    pub loads: Vec<f64>,
}

impl CascadeAssignment {
    /// Number of cascades carrying at least one client.
    pub fn used(&self) -> usize {
        self.loads.iter().filter(|l| **l > 0.0).count()
    }
}

/// Cascades a load of `rates` needs when each cascade carries at most
/// `capacity` packets per second and clients are packed in index order.
pub fn cascades_needed(rates: &[f64], capacity: f64) -> usize {
    let mut count = 0;
    let mut load = 0.0;
    let slack = capacity * 1e-9;
    for &r in rates {
        if count == 0 || load + r > capacity + slack {
            count += 1;
            load = 0.0;
        }
        load += r;
    }
    count
}

impl Topology {
    pub fn build(config: &TopologyConfig) -> Result<Topology, ConfigError> {
        let (layout, successors) = match config.family {
            Family::Cascade => {
                let n = required(config.total_nodes, "topology.total_nodes")?;
                let chain: Vec<NodeId> = (0..n).collect();
                let succ = chain_successors(n, std::slice::from_ref(&chain));
                (Layout::Chains(vec![chain]), succ)
            }
            Family::MultiCascade => {
                let k = required(config.num_cascades, "topology.num_cascades")?;
                let len = required(config.cascade_length, "topology.cascade_length")?;
                let chains: Vec<Vec<NodeId>> = (0..k).map(|c| (c * len..(c + 1) * len).collect()).collect();
                let succ = chain_successors(k * len, &chains);
                (Layout::Chains(chains), succ)
            }
            Family::Stratified => {
                let layers_n = required(config.num_layers, "topology.num_layers")?;
                let per = required(config.nodes_per_layer, "topology.nodes_per_layer")?;
                if let Some(r) = config.route_length {
                    if r != layers_n {
                        return Err(ConfigError::new(
                            "topology.route_length",
                            format!("stratified routes visit every layer, expected {layers_n}"),
                        ));
                    }
                }
                let layers: Vec<Vec<NodeId>> = (0..layers_n).map(|l| (l * per..(l + 1) * per).collect()).collect();
                let mut succ = vec![Vec::new(); layers_n * per];
                for pair in layers.windows(2) {
                    for &from in &pair[0] {
                        succ[from] = pair[1].clone();
                    }
                }
                (Layout::Layers(layers), succ)
            }
            Family::PeerToPeer => {
                let n = required(config.total_nodes, "topology.total_nodes")?;
                let route_length = config.route_length.unwrap_or(DEFAULT_ROUTE_LENGTH);
                if route_length == 0 {
                    return Err(ConfigError::new("topology.route_length", "must be positive"));
                }
                if route_length >= n {
                    return Err(ConfigError::new(
                        "topology.route_length",
                        format!("must be smaller than total_nodes ({n})"),
                    ));
                }
                let succ = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
                (Layout::Peers { count: n, route_length }, succ)
            }
        };
        Ok(Topology {
            family: config.family,
            layout,
            successors,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn node_count(&self) -> usize {
        self.successors.len()
    }

    pub fn successors(&self, node: NodeId) -> &[NodeId] {
        &self.successors[node]
    }

    pub fn edge_count(&self) -> usize {
        self.successors.iter().map(Vec::len).sum()
    }

    /// Mixes per route.
    pub fn route_len(&self) -> usize {
        match &self.layout {
            Layout::Chains(chains) => chains[0].len(),
            Layout::Layers(layers) => layers.len(),
            Layout::Peers { route_length, .. } => *route_length,
        }
    }

    pub fn chains(&self) -> Option<&[Vec<NodeId>]> {
        match &self.layout {
            Layout::Chains(c) => Some(c),
            _ => None,
        }
    }

    pub fn layers(&self) -> Option<&[Vec<NodeId>]> {
        match &self.layout {
            Layout::Layers(l) => Some(l),
            _ => None,
        }
    }

    /// Samples the mixes a packet from `sender` to `receiver` traverses.
    /// `cascade` selects the chain for cascade families and is ignored otherwise.
    pub fn sample_route<R: RngCore + ?Sized>(
        &self,
        sender: Endpoint,
        receiver: Endpoint,
        cascade: usize,
        rng: &mut R,
    ) -> Result<Route, ConfigError> {
        if sender == receiver {
            return Err(ConfigError::new("route", "sender and receiver must differ"));
        }
        let hops = match &self.layout {
            Layout::Chains(chains) => chains
                .get(cascade)
                .ok_or_else(|| ConfigError::new("route", format!("no cascade {cascade}")))?
                .clone(),
            Layout::Layers(layers) => layers
                .iter()
                .map(|layer| layer[rng.random_range(0..layer.len())])
                .collect(),
            Layout::Peers { count, route_length } => {
                let excluded = [peer_of(sender), peer_of(receiver)];
                sample_peers(*count, *route_length, &excluded, rng)?
            }
        };
        Ok(Route { hops, sender, receiver })
    }

    /// Route for a packet originated by a mix node itself: it starts at that
    /// node and continues over the hops that remain from its position.
    pub fn route_from_node<R: RngCore + ?Sized>(
        &self,
        node: NodeId,
        receiver: Endpoint,
        rng: &mut R,
    ) -> Result<Route, ConfigError> {
        let hops = match &self.layout {
            Layout::Chains(chains) => {
                let chain = chains
                    .iter()
                    .find(|c| c.contains(&node))
                    .ok_or_else(|| ConfigError::new("route", format!("unknown node {node}")))?;
                let pos = chain.iter().position(|&n| n == node).unwrap_or(0);
                chain[pos..].to_vec()
            }
            Layout::Layers(layers) => {
                let start = layers
                    .iter()
                    .position(|l| l.contains(&node))
                    .ok_or_else(|| ConfigError::new("route", format!("unknown node {node}")))?;
                std::iter::once(node)
                    .chain(
                        layers[start + 1..]
                            .iter()
                            .map(|layer| layer[rng.random_range(0..layer.len())]),
                    )
                    .collect()
            }
            Layout::Peers { count, route_length } => {
                let mut rest = sample_peers(*count, route_length - 1, &[Some(node), peer_of(receiver)], rng)?;
                rest.insert(0, node);
                rest
            }
        };
        Ok(Route {
            hops,
            sender: Endpoint::Node(node),
            receiver,
        })
    }

    /// Packs clients onto cascades in index order; a cascade is full once its
    /// assigned rate reaches `capacity`.
    pub fn assign_cascades(&self, rates: &[f64], capacity: f64) -> Result<CascadeAssignment, ConfigError> {
        let chains = match &self.layout {
            Layout::Chains(c) => c.len(),
            _ => {
                return Err(ConfigError::new(
                    "topology.family",
                    "cascade assignment requires a cascade family",
                ))
            }
        };
        if self.family == Family::Cascade {
            let total = rates.iter().sum();
            return Ok(CascadeAssignment {
                per_client: vec![0; rates.len()],
                loads: vec![total],
            });
        }
        let slack = capacity * 1e-9;
        let mut per_client = Vec::with_capacity(rates.len());
        let mut loads = vec![0.0; chains];
        let mut current = 0;
        for (client, &r) in rates.iter().enumerate() {
            if r > capacity + slack {
                return Err(ConfigError::new(
                    "clients.send_rate_per_s",
                    format!("client {client} alone exceeds cascade capacity {capacity}"),
                ));
            }
            if loads[current] + r > capacity + slack {
                current += 1;
            }
            if current >= chains {
                return Err(ConfigError::new(
                    "topology.num_cascades",
                    format!(
                        "offered load {:.3}/s exceeds {chains} cascades x {capacity}/s (need {})",
                        rates.iter().sum::<f64>(),
                        cascades_needed(rates, capacity)
                    ),
                ));
            }
            loads[current] += r;
            per_client.push(current);
        }
        Ok(CascadeAssignment { per_client, loads })
    }
}

fn chain_successors(nodes: usize, chains: &[Vec<NodeId>]) -> Vec<Vec<NodeId>> {
    let mut succ = vec![Vec::new(); nodes];
    for chain in chains {
        for pair in chain.windows(2) {
            succ[pair[0]].push(pair[1]);
        }
    }
    succ
}

fn peer_of(endpoint: Endpoint) -> Option<NodeId> {
    match endpoint {
        Endpoint::Client(c) => Some(c),
        Endpoint::Node(n) => Some(n),
        _ => None,
    }
}

fn sample_peers<R: RngCore + ?Sized>(
    count: usize,
    k: usize,
    excluded: &[Option<NodeId>],
    rng: &mut R,
) -> Result<Vec<NodeId>, ConfigError> {
    let mut candidates: Vec<NodeId> = (0..count).filter(|p| !excluded.contains(&Some(*p))).collect();
    if candidates.len() < k {
        return Err(ConfigError::new(
            "topology.total_nodes",
            format!("p2p network of {count} peers cannot supply {k} distinct relays excluding endpoints"),
        ));
    }
    let (picked, _) = candidates.partial_shuffle(rng, k);
    Ok(picked.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RngStream;
    use proptest::prelude::*;

    #[test]
    fn stratified_edges() {
        let t = Topology::build(&TopologyConfig::stratified(3, 2)).unwrap();
        assert_eq!(t.node_count(), 6);
        assert_eq!(t.edge_count(), 8);
        assert_eq!(t.successors(0), &[2, 3]);
        assert!(t.successors(5).is_empty());
    }

    #[test]
    fn cascade_is_single_chain() {
        let t = Topology::build(&TopologyConfig::cascade(3)).unwrap();
        assert_eq!(t.chains().unwrap(), &[vec![0, 1, 2]]);
        assert_eq!(t.edge_count(), 2);
        let mut rng = RngStream::new(1, "r");
        for _ in 0..10 {
            let r = t
                .sample_route(Endpoint::Client(0), Endpoint::Client(1), 0, &mut rng)
                .unwrap();
            assert_eq!(r.hops, vec![0, 1, 2]);
        }
    }

    #[test]
    fn multi_cascade_disjoint_chains() {
        let t = Topology::build(&TopologyConfig::multi_cascade(4, 3)).unwrap();
        assert_eq!(t.node_count(), 12);
        let chains = t.chains().unwrap();
        assert_eq!(chains.len(), 4);
        let mut all: Vec<_> = chains.iter().flatten().copied().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 12);
    }

    #[test]
    fn p2p_small_network_is_a_permutation_of_the_rest() {
        let t = Topology::build(&TopologyConfig::p2p(5, 3)).unwrap();
        let mut rng = RngStream::new(4, "r");
        for _ in 0..50 {
            let r = t
                .sample_route(Endpoint::Client(1), Endpoint::Client(3), 0, &mut rng)
                .unwrap();
            let mut hops = r.hops.clone();
            hops.sort();
            assert_eq!(hops, vec![0, 2, 4]);
        }
    }

    #[test]
    fn p2p_too_small_is_config_error() {
        let t = Topology::build(&TopologyConfig::p2p(4, 3)).unwrap();
        let mut rng = RngStream::new(4, "r");
        let err = t
            .sample_route(Endpoint::Client(0), Endpoint::Client(1), 0, &mut rng)
            .unwrap_err();
        assert_eq!(err.field, "topology.total_nodes");
        assert!(Topology::build(&TopologyConfig::p2p(3, 3)).is_err());
    }

    #[test]
    fn missing_fields_are_named() {
        let mut cfg = TopologyConfig::stratified(3, 2);
        cfg.nodes_per_layer = None;
        assert_eq!(Topology::build(&cfg).unwrap_err().field, "topology.nodes_per_layer");
        let mut cfg = TopologyConfig::stratified(3, 2);
        cfg.route_length = Some(4);
        assert_eq!(Topology::build(&cfg).unwrap_err().field, "topology.route_length");
    }

    #[test]
    fn cascade_assignment_packs_in_order() {
        let t = Topology::build(&TopologyConfig::multi_cascade(3, 3)).unwrap();
        let a = t.assign_cascades(&vec![1.0; 2500], 1000.0).unwrap();
        assert_eq!(a.loads, vec![1000.0, 1000.0, 500.0]);
        assert_eq!(a.used(), 3);
        assert_eq!(a.per_client[999], 0);
        assert_eq!(a.per_client[1000], 1);

        assert_eq!(t.assign_cascades(&vec![1.0; 100], 1000.0).unwrap().used(), 1);
        assert_eq!(t.assign_cascades(&[], 1000.0).unwrap().used(), 0);
    }

    #[test]
    fn cascade_assignment_overflow_is_config_error() {
        let t = Topology::build(&TopologyConfig::multi_cascade(2, 3)).unwrap();
        let err = t.assign_cascades(&vec![1.0; 2500], 1000.0).unwrap_err();
        assert_eq!(err.field, "topology.num_cascades");
        assert_eq!(cascades_needed(&vec![1.0; 2500], 1000.0), 3);
        assert_eq!(cascades_needed(&[], 1000.0), 0);
    }

    #[test]
    fn node_routes_continue_from_position() {
        let t = Topology::build(&TopologyConfig::stratified(3, 4)).unwrap();
        let mut rng = RngStream::new(2, "r");
        let r = t.route_from_node(5, Endpoint::CoverSink, &mut rng).unwrap();
        assert_eq!(r.hops.len(), 2);
        assert_eq!(r.hops[0], 5);
        assert!((8..12).contains(&r.hops[1]));

        let c = Topology::build(&TopologyConfig::cascade(3)).unwrap();
        let r = c.route_from_node(1, Endpoint::CoverSink, &mut rng).unwrap();
        assert_eq!(r.hops, vec![1, 2]);

        let p = Topology::build(&TopologyConfig::p2p(10, 3)).unwrap();
        let r = p.route_from_node(7, Endpoint::CoverSink, &mut rng).unwrap();
        assert_eq!(r.hops.len(), 3);
        assert_eq!(r.hops[0], 7);
    }

    proptest! {
        #[test]
        fn stratified_routes_visit_each_layer_once(seed in any::<u64>(), layers in 1usize..6, per in 1usize..8) {
            let t = Topology::build(&TopologyConfig::stratified(layers, per)).unwrap();
            let mut rng = RngStream::new(seed, "r");
            let r = t.sample_route(Endpoint::Client(0), Endpoint::Client(1), 0, &mut rng).unwrap();
            prop_assert_eq!(r.hops.len(), layers);
            for (l, hop) in r.hops.iter().enumerate() {
                prop_assert_eq!(hop / per, l);
            }
        }

        #[test]
        fn p2p_routes_are_distinct_and_exclude_endpoints(seed in any::<u64>(), n in 6usize..40, s in 0usize..6, d in 0usize..6) {
            prop_assume!(s != d);
            let t = Topology::build(&TopologyConfig::p2p(n, 3)).unwrap();
            let mut rng = RngStream::new(seed, "r");
            let r = t.sample_route(Endpoint::Client(s), Endpoint::Client(d), 0, &mut rng).unwrap();
            let mut hops = r.hops.clone();
            hops.sort();
            hops.dedup();
            prop_assert_eq!(hops.len(), 3);
            prop_assert!(!r.hops.contains(&s) && !r.hops.contains(&d));
        }

        #[test]
        fn cascade_assignment_respects_capacity(rates in proptest::collection::vec(0.1f64..5.0, 0..200), cap in 5.0f64..50.0) {
            let needed = cascades_needed(&rates, cap).max(1);
            let t = Topology::build(&TopologyConfig::multi_cascade(needed, 3)).unwrap();
            let a = t.assign_cascades(&rates, cap).unwrap();
            for w in a.per_client.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for (k, load) in a.loads.iter().enumerate() {
                prop_assert!(*load <= cap * (1.0 + 1e-9));
                if k + 1 < a.loads.len() && a.loads[k + 1] > 0.0 {
                    // cascade k was full: the next client did not fit
                    let first_next = a.per_client.iter().position(|&c| c == k + 1).unwrap();
                    prop_assert!(load + rates[first_next] > cap * (1.0 + 1e-9) - 1e-12);
                }
            }
        }
    }
}
