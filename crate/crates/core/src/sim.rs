//! One seeded simulation run: clients, mixes, cover and the adversary's
//! measurement process driven by a single event queue.

use rand::Rng;

use crate::engine::{sample_exponential, EventQueue, RngStream, SimTime};
use crate::error::{ConfigError, Error, SimError};
use crate::harness::scenario::{Metric, Scenario};
use crate::metrics::{LinkageDistribution, MetricsLedger, UnlinkabilitySample};
use crate::mixing::{Admission, MixNode, MixStrategy, Packet, PacketId, PacketKind, SenderTag};
use crate::scalar::{Mass, Masses};
use crate::topology::{ClientId, Endpoint, Family, NodeId, Route, Topology};
use crate::traffic::{choose_receiver, CoverOrigin, PoissonProcess};

/// Client that sends the entropy target and unlinkability sender A.
pub const TARGET_SENDER: ClientId = 0;
/// Unlinkability sender B.
pub const SECOND_SENDER: ClientId = 1;
/// Receiver watched in the unlinkability experiment.
pub const WATCHED_RECEIVER: ClientId = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverSource {
    Client(ClientId),
    Node(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    ClientSend(ClientId),
    CoverSend(CoverSource),
    ServiceComplete(NodeId),
    PacketDeparture { node: NodeId, packet: PacketId },
    PickTick(NodeId),
    BatchFlush(NodeId),
    BatchTimeout { node: NodeId, generation: u64 },
    MeasurementCheckpoint,
    SimulationEnd,
}

/// Mixing-stage events with the masses involved, recorded on request.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent<M> {
    Admit {
        node: NodeId,
        packet: PacketId,
        at: SimTime,
        masses: Masses<M>,
    },
    Depart {
        node: NodeId,
        packet: PacketId,
        at: SimTime,
        masses: Masses<M>,
    },
    Deliver {
        packet: PacketId,
        at: SimTime,
        masses: Masses<M>,
    },
    SenderReset {
        at: SimTime,
    },
}

#[derive(Debug)]
struct ClientStreams {
    send: RngStream,
    route: RngStream,
    cover: RngStream,
}

#[derive(Debug)]
struct Round {
    index: u64,
    target: PacketId,
}

#[derive(Debug)]
enum Measurement<M> {
    Idle,
    Entropy {
        injected: bool,
        done: bool,
        entries: Vec<(PacketId, M)>,
    },
    Unlinkability {
        completed: u64,
        active: Option<Round>,
    },
}

pub struct Simulation<M: Mass> {
    scenario: Scenario,
    seed: u64,
    topology: Topology,
    cascade_of: Vec<usize>,
    queue: EventQueue<Action>,
    nodes: Vec<MixNode<M>>,
    node_mix_rng: Vec<RngStream>,
    node_cover_rng: Vec<RngStream>,
    clients: Vec<ClientStreams>,
    measure_rng: RngStream,
    send_process: PoissonProcess,
    cover_process: Option<PoissonProcess>,
    next_packet: PacketId,
    horizon: SimTime,
    delivered: Masses<M>,
    measurement: Measurement<M>,
    ledger: MetricsLedger,
    trace: Option<Vec<TraceEvent<M>>>,
    stopped: bool,
}

fn internal(e: ConfigError) -> SimError {
    SimError::Internal(e.to_string())
}

impl<M: Mass> Simulation<M> {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, Error> {
        let topology = Topology::build(&scenario.topology)?;
        let n_clients = scenario.clients.num_clients;
        let cascade_of = match topology.family() {
            Family::Cascade | Family::MultiCascade => {
                let rates = crate::harness::scenario::client_rates(&scenario.clients, &scenario.cover);
                topology.assign_cascades(&rates, scenario.capacity_per_s)?.per_client
            }
            _ => vec![0; n_clients],
        };
        let nodes = (0..topology.node_count())
            .map(|j| MixNode::new(j, scenario.strategy, scenario.capacity_per_s))
            .collect::<Result<Vec<_>, _>>()?;
        let send_process = PoissonProcess::new(scenario.clients.packet_rate_per_s())
            .map_err(|_| ConfigError::new("clients.send_rate_per_s", "must be positive"))?;
        let cover_rate = scenario.cover.active_rate();
        let cover_process = if cover_rate > 0.0 {
            Some(
                PoissonProcess::new(cover_rate)
                    .map_err(|e| ConfigError::new("cover.rate_per_origin_per_s", e.reason))?,
            )
        } else {
            None
        };
        let measurement = match scenario.run.metric {
            Metric::Entropy => Measurement::Entropy {
                injected: false,
                done: false,
                entries: Vec::new(),
            },
            Metric::Unlinkability => Measurement::Unlinkability {
                completed: 0,
                active: None,
            },
            Metric::LatencyOnly => Measurement::Idle,
        };

        let mut sim = Self {
            seed,
            cascade_of,
            queue: EventQueue::new(),
            node_mix_rng: (0..nodes.len())
                .map(|j| RngStream::new(seed, format!("node/{j}/mix")))
                .collect(),
            node_cover_rng: (0..nodes.len())
                .map(|j| RngStream::new(seed, format!("node/{j}/cover")))
                .collect(),
            nodes,
            clients: (0..n_clients)
                .map(|i| ClientStreams {
                    send: RngStream::new(seed, format!("client/{i}/send")),
                    route: RngStream::new(seed, format!("client/{i}/route")),
                    cover: RngStream::new(seed, format!("client/{i}/cover")),
                })
                .collect(),
            measure_rng: RngStream::new(seed, "measure"),
            send_process,
            cover_process,
            next_packet: 0,
            horizon: SimTime::from_secs_f64(scenario.run.horizon_s),
            delivered: Masses::zero(),
            measurement,
            ledger: MetricsLedger::default(),
            trace: None,
            stopped: false,
            topology,
            scenario: scenario.clone(),
        };
        sim.bootstrap()?;
        Ok(sim)
    }

    /// Records every mixing-stage admission and departure.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    fn bootstrap(&mut self) -> Result<(), SimError> {
        let now = SimTime::ZERO;
        for i in 0..self.clients.len() {
            let at = self.send_process.next_epoch(now, &mut self.clients[i].send);
            self.queue.schedule(at, Action::ClientSend(i))?;
        }
        if let Some(cover) = self.cover_process.clone() {
            match self.scenario.cover.origin {
                CoverOrigin::Clients => {
                    for i in 0..self.clients.len() {
                        let at = cover.next_epoch(now, &mut self.clients[i].cover);
                        self.queue.schedule(at, Action::CoverSend(CoverSource::Client(i)))?;
                    }
                }
                // Peers are the clients in p2p, so node cover is client cover there.
                CoverOrigin::Nodes if self.topology.family() == Family::PeerToPeer => {
                    for i in 0..self.clients.len() {
                        let at = cover.next_epoch(now, &mut self.clients[i].cover);
                        self.queue.schedule(at, Action::CoverSend(CoverSource::Client(i)))?;
                    }
                }
                CoverOrigin::Nodes => {
                    for j in 0..self.nodes.len() {
                        let at = cover.next_epoch(now, &mut self.node_cover_rng[j]);
                        self.queue.schedule(at, Action::CoverSend(CoverSource::Node(j)))?;
                    }
                }
                CoverOrigin::Off => {}
            }
        }
        if !matches!(self.measurement, Measurement::Idle) {
            self.queue.schedule(
                SimTime::from_secs_f64(self.scenario.run.warmup_s),
                Action::MeasurementCheckpoint,
            )?;
        }
        self.queue.schedule(self.horizon, Action::SimulationEnd)?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn nodes(&self) -> &[MixNode<M>] {
        &self.nodes
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn trace(&self) -> Option<&[TraceEvent<M>]> {
        self.trace.as_deref()
    }

    pub fn cascade_of(&self, client: ClientId) -> usize {
        self.cascade_of[client]
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Total mass delivered to receivers so far.
    pub fn delivered_masses(&self) -> Masses<M> {
        self.delivered
    }

    /// Mass still inside the network.
    pub fn resident_masses(&self) -> Masses<M> {
        self.nodes.iter().fold(Masses::zero(), |acc, n| acc + n.resident_mass())
    }

    /// Current linkage distribution of the entropy target, if one was injected.
    pub fn linkage(&self) -> Option<LinkageDistribution<M>> {
        match &self.measurement {
            Measurement::Entropy {
                injected: true,
                entries,
                ..
            } => Some(LinkageDistribution {
                entries: entries.clone(),
                residual: M::one() - self.delivered.target,
            }),
            _ => None,
        }
    }

    /// Processes events up to `end` (capped at the horizon) or until the
    /// measurement completes.
    pub fn run_until(&mut self, end: SimTime) -> Result<(), SimError> {
        let end = end.min(self.horizon);
        while !self.stopped {
            let Some(event) = self.queue.pop_until(end) else {
                break;
            };
            self.dispatch(event.payload)?;
        }
        Ok(())
    }

    /// Runs to completion and returns the ledger.
    pub fn run(mut self) -> Result<MetricsLedger, SimError> {
        self.run_until(self.horizon)?;
        Ok(self.finish())
    }

    /// Closes the measurement: censors unfinished samples and records the
    /// conservation error.
    pub fn finish(mut self) -> MetricsLedger {
        let injected = match &self.measurement {
            Measurement::Entropy { injected, done, .. } => {
                if *injected && !*done {
                    self.ledger.censored += 1;
                }
                *injected
            }
            Measurement::Unlinkability { active, .. } => {
                if active.is_some() {
                    self.ledger.censored += 1;
                }
                false
            }
            Measurement::Idle => false,
        };
        let expected = if injected { M::one() } else { M::zero() };
        let total = self.delivered.target + self.resident_masses().target;
        self.ledger.mass_conservation_error = Some((total - expected).as_f64().abs());
        self.ledger
    }

    fn fresh_id(&mut self) -> PacketId {
        let id = self.next_packet;
        self.next_packet += 1;
        id
    }

    fn record(&mut self, event: impl FnOnce() -> TraceEvent<M>) {
        if let Some(trace) = &mut self.trace {
            trace.push(event());
        }
    }

    fn dispatch(&mut self, action: Action) -> Result<(), SimError> {
        let now = self.queue.now();
        match action {
            Action::ClientSend(i) => {
                self.client_send(i)?;
                let at = self.send_process.next_epoch(now, &mut self.clients[i].send);
                self.queue.schedule(at, Action::ClientSend(i))?;
            }
            Action::CoverSend(source) => {
                self.cover_send(source)?;
                let process = self.cover_process.as_ref().expect("cover scheduled only when active");
                let rng = match source {
                    CoverSource::Client(i) => &mut self.clients[i].cover,
                    CoverSource::Node(j) => &mut self.node_cover_rng[j],
                };
                let at = process.next_epoch(now, rng);
                self.queue.schedule(at, Action::CoverSend(source))?;
            }
            Action::ServiceComplete(node) => self.service_complete(node)?,
            Action::PacketDeparture { node, packet } => {
                let p = self.nodes[node].pool_depart_id(packet)?;
                self.record(|| TraceEvent::Depart {
                    node,
                    packet,
                    at: now,
                    masses: p.masses,
                });
                self.forward(p)?;
            }
            Action::PickTick(node) => {
                let p = self.nodes[node].pool_depart_random(&mut self.node_mix_rng[node])?;
                self.record(|| TraceEvent::Depart {
                    node,
                    packet: p.id,
                    at: now,
                    masses: p.masses,
                });
                self.forward(p)?;
                if self.nodes[node].pool_len() > 0 {
                    self.schedule_pick(node)?;
                }
            }
            Action::BatchFlush(node) => self.flush(node, false)?,
            Action::BatchTimeout { node, generation } => {
                if self.nodes[node].batch_generation() == Some(generation) && self.nodes[node].pool_len() > 0 {
                    self.flush(node, true)?;
                }
            }
            Action::MeasurementCheckpoint => self.checkpoint()?,
            Action::SimulationEnd => self.stopped = true,
        }
        Ok(())
    }

    fn schedule_pick(&mut self, node: NodeId) -> Result<(), SimError> {
        let MixStrategy::RandomPickQueue { pick_rate_per_s } = self.nodes[node].strategy else {
            return Err(SimError::Internal("pick tick at non-pick node".into()));
        };
        let wait = sample_exponential(&mut self.node_mix_rng[node], 1.0 / pick_rate_per_s).map_err(internal)?;
        self.queue.schedule_in(wait, Action::PickTick(node))?;
        Ok(())
    }

    fn flush(&mut self, node: NodeId, partial: bool) -> Result<(), SimError> {
        let now = self.queue.now();
        let out = self.nodes[node].batch_flush(partial, &mut self.node_mix_rng[node])?;
        for p in out {
            self.record(|| TraceEvent::Depart {
                node,
                packet: p.id,
                at: now,
                masses: p.masses,
            });
            self.forward(p)?;
        }
        if self.nodes[node].batch_ready() {
            self.queue.schedule(now, Action::BatchFlush(node))?;
        } else if self.nodes[node].pool_len() > 0 {
            if let MixStrategy::ThresholdBatch { timeout_s: Some(t), .. } = self.nodes[node].strategy {
                let generation = self.nodes[node].batch_generation().unwrap_or(0);
                self.queue
                    .schedule_in(SimTime::from_secs_f64(t), Action::BatchTimeout { node, generation })?;
            }
        }
        Ok(())
    }

    fn service_complete(&mut self, node: NodeId) -> Result<(), SimError> {
        let now = self.queue.now();
        let p = self.nodes[node].complete_service()?;
        self.record(|| TraceEvent::Admit {
            node,
            packet: p.id,
            at: now,
            masses: p.masses,
        });
        match self.nodes[node].pool_admit(p, now, &mut self.node_mix_rng[node]) {
            Admission::DepartAt(packet, at) => {
                self.queue.schedule(at, Action::PacketDeparture { node, packet })?;
            }
            Admission::StartPicking => self.schedule_pick(node)?,
            Admission::FlushNow => {
                self.queue.schedule(now, Action::BatchFlush(node))?;
            }
            Admission::ArmTimeout { generation, at } => {
                self.queue.schedule(at, Action::BatchTimeout { node, generation })?;
            }
            Admission::Buffered => {}
        }
        Ok(())
    }

    /// Hands a packet to its next hop, or delivers it after the last one.
    fn forward(&mut self, mut packet: Packet<M>) -> Result<(), SimError> {
        packet.hop_index += 1;
        match packet.current_hop() {
            Some(next) => {
                self.enter(next, packet);
                Ok(())
            }
            None => self.deliver(packet),
        }
    }

    fn enter(&mut self, node: NodeId, packet: Packet<M>) {
        let now = self.queue.now();
        let done = self.nodes[node].on_arrival(packet, now);
        self.queue
            .schedule(done, Action::ServiceComplete(node))
            .expect("service completion is never in the past");
    }

    fn inject(&mut self, packet: Packet<M>) -> Result<(), SimError> {
        match packet.kind {
            PacketKind::Cover => self.ledger.packets_cover += 1,
            _ => self.ledger.packets_real += 1,
        }
        let first = packet
            .current_hop()
            .ok_or_else(|| SimError::Internal("empty route".into()))?;
        self.enter(first, packet);
        Ok(())
    }

    fn client_route(&mut self, sender: ClientId, receiver: Endpoint) -> Result<Route, SimError> {
        let cascade = self.cascade_of[sender];
        self.topology
            .sample_route(
                Endpoint::Client(sender),
                receiver,
                cascade,
                &mut self.clients[sender].route,
            )
            .map_err(internal)
    }

    fn client_send(&mut self, sender: ClientId) -> Result<(), SimError> {
        let n = self.clients.len();
        let receiver = choose_receiver(
            self.scenario.clients.receiver_selection,
            sender,
            n,
            &mut self.clients[sender].route,
        );
        // A message and its fragments share one route.
        let route = self.client_route(sender, Endpoint::Client(receiver))?;
        let now = self.queue.now();
        for _ in 0..self.scenario.clients.fragments() {
            let id = self.fresh_id();
            let p = Packet::new(
                id,
                PacketKind::Real,
                route.clone(),
                now,
                self.scenario.clients.packet_payload_bytes,
            );
            self.inject(p)?;
        }
        Ok(())
    }

    fn cover_send(&mut self, source: CoverSource) -> Result<(), SimError> {
        let route = match source {
            CoverSource::Client(i) => self.client_route(i, Endpoint::CoverSink)?,
            CoverSource::Node(j) => self
                .topology
                .route_from_node(j, Endpoint::CoverSink, &mut self.node_cover_rng[j])
                .map_err(internal)?,
        };
        let id = self.fresh_id();
        let p = Packet::new(
            id,
            PacketKind::Cover,
            route,
            self.queue.now(),
            self.scenario.clients.packet_payload_bytes,
        );
        self.inject(p)
    }

    fn checkpoint(&mut self) -> Result<(), SimError> {
        match self.measurement {
            Measurement::Entropy { injected: false, .. } => {
                let receiver = choose_receiver(
                    self.scenario.clients.receiver_selection,
                    TARGET_SENDER,
                    self.clients.len(),
                    &mut self.measure_rng,
                );
                let route = self
                    .topology
                    .sample_route(
                        Endpoint::Client(TARGET_SENDER),
                        Endpoint::Client(receiver),
                        self.cascade_of[TARGET_SENDER],
                        &mut self.measure_rng,
                    )
                    .map_err(internal)?;
                let id = self.fresh_id();
                let p = Packet::new(
                    id,
                    PacketKind::Target,
                    route,
                    self.queue.now(),
                    self.scenario.clients.packet_payload_bytes,
                );
                if let Measurement::Entropy { injected, .. } = &mut self.measurement {
                    *injected = true;
                }
                self.inject(p)
            }
            Measurement::Unlinkability {
                completed,
                active: None,
            } => self.start_round(completed),
            _ => Ok(()),
        }
    }

    /// Both senders emit one packet at the same instant; a hidden coin picks
    /// which one travels to the watched receiver.
    fn start_round(&mut self, index: u64) -> Result<(), SimError> {
        let a_is_target: bool = self.measure_rng.random();
        let a_first: bool = self.measure_rng.random();
        let watched = Endpoint::Client(WATCHED_RECEIVER);
        let now = self.queue.now();
        let size = self.scenario.clients.packet_payload_bytes;

        let make = |sim: &mut Self, sender: ClientId, tag: SenderTag, is_target: bool| -> Result<Packet<M>, SimError> {
            let receiver = if is_target { watched } else { Endpoint::DecoySink };
            let cascade = sim.cascade_of[sender];
            let route = sim
                .topology
                .sample_route(Endpoint::Client(sender), receiver, cascade, &mut sim.measure_rng)
                .map_err(internal)?;
            let id = sim.fresh_id();
            let kind = if is_target {
                PacketKind::Target
            } else {
                PacketKind::Real
            };
            let mut p = Packet::new(id, kind, route, now, size).with_sender(tag);
            p.masses.target = M::zero();
            Ok(p)
        };
        let pa = make(self, TARGET_SENDER, SenderTag::A, a_is_target)?;
        let pb = make(self, SECOND_SENDER, SenderTag::B, !a_is_target)?;
        let target = if a_is_target { pa.id } else { pb.id };
        self.measurement = Measurement::Unlinkability {
            completed: index,
            active: Some(Round { index, target }),
        };
        let (first, second) = if a_first { (pa, pb) } else { (pb, pa) };
        self.inject(first)?;
        self.inject(second)
    }

    fn deliver(&mut self, mut packet: Packet<M>) -> Result<(), SimError> {
        let now = self.queue.now();
        packet.delivered_at = Some(now);
        self.delivered = self.delivered + packet.masses;
        self.record(|| TraceEvent::Deliver {
            packet: packet.id,
            at: now,
            masses: packet.masses,
        });
        if packet.kind != PacketKind::Cover {
            self.ledger.latencies.push(now - packet.created_at);
        }

        let cutoff = self.scenario.run.residual_cutoff;
        match &mut self.measurement {
            Measurement::Entropy {
                injected: true,
                done: done @ false,
                entries,
            } => {
                if packet.masses.target > M::zero() {
                    entries.push((packet.id, packet.masses.target));
                }
                let residual = (M::one() - self.delivered.target).as_f64();
                if residual < cutoff {
                    *done = true;
                    let dist = LinkageDistribution {
                        entries: entries.clone(),
                        residual: M::one() - self.delivered.target,
                    };
                    let h = dist
                        .entropy_bits(cutoff)
                        .map_err(|e| SimError::Internal(e.to_string()))?;
                    self.ledger.entropy_samples.push(h);
                    self.stopped = true;
                }
            }
            Measurement::Unlinkability {
                completed,
                active: Some(round),
            } if round.target == packet.id => {
                let sample = UnlinkabilitySample::from_masses(
                    packet.masses.sender_a.as_f64(),
                    packet.masses.sender_b.as_f64(),
                    self.scenario.run.rho,
                    round.index,
                );
                self.ledger.epsilon_samples.push(sample.log_ratio());
                self.ledger.unlinkability_samples.push(sample);
                *completed += 1;
                let done = *completed;
                self.measurement = Measurement::Unlinkability {
                    completed: done,
                    active: None,
                };
                self.reset_sender_masses();
                if done >= self.scenario.run.rounds_per_seed {
                    self.stopped = true;
                } else {
                    let gap = SimTime::from_secs_f64(self.scenario.run.round_gap_s);
                    self.queue.schedule_in(gap, Action::MeasurementCheckpoint)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Forgets every sender-tag mass so the next round starts clean.
    fn reset_sender_masses(&mut self) {
        for node in &mut self.nodes {
            node.clear_sender_masses();
        }
        self.delivered.clear_senders();
        let now = self.queue.now();
        self.record(|| TraceEvent::SenderReset { at: now });
    }
}
