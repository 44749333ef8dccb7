//! Mix nodes: a capacity-limited FIFO server followed by a mixing stage,
//! with adversary mass propagation at every departure.
//!
//! Memoryless stages (exponential delays, uniform random picks) make every
//! pooled packet equally likely to leave next, so the pool only tracks its
//! aggregate mass: each resident packet implicitly holds `M/n`, and a
//! departure takes exactly that share. Batch stages keep per-packet masses
//! until a flush averages them.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{ConfigError, SimError};
use crate::scalar::{Mass, Masses};
use crate::topology::{NodeId, Route};

pub type PacketId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    Real,
    Cover,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SenderTag {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet<M> {
    pub id: PacketId,
    pub kind: PacketKind,
    pub sender_tag: Option<SenderTag>,
    pub route: Route,
    pub hop_index: usize,
    pub created_at: SimTime,
    pub delivered_at: Option<SimTime>,
    pub masses: Masses<M>,
    pub size_bytes: u32,
}

impl<M: Mass> Packet<M> {
    pub fn new(id: PacketId, kind: PacketKind, route: Route, created_at: SimTime, size_bytes: u32) -> Self {
        let masses = match kind {
            PacketKind::Target => Masses::target(M::one()),
            _ => Masses::zero(),
        };
        Self {
            id,
            kind,
            sender_tag: None,
            route,
            hop_index: 0,
            created_at,
            delivered_at: None,
            masses,
            size_bytes,
        }
    }

    pub fn with_sender(mut self, tag: SenderTag) -> Self {
        self.sender_tag = Some(tag);
        match tag {
            SenderTag::A => self.masses.sender_a = M::one(),
            SenderTag::B => self.masses.sender_b = M::one(),
        }
        self
    }

    pub fn target_mass(&self) -> M {
        self.masses.target
    }

    pub fn current_hop(&self) -> Option<NodeId> {
        self.route.hops.get(self.hop_index).copied()
    }
}

/// Mixing discipline of a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MixStrategy {
    /// Collect `batch_size` packets, shuffle, forward all at once. The
    /// optional timeout flushes a partial batch and is off by default.
    ThresholdBatch { batch_size: usize, timeout_s: Option<f64> },
    /// Each packet waits an independent exponential delay.
    PoissonPool { mean_delay_s: f64 },
    /// A Poisson clock at `pick_rate_per_s` releases one uniformly chosen packet per tick.
    RandomPickQueue { pick_rate_per_s: f64 },
}

impl MixStrategy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64, field: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(field, format!("must be positive, got {v}")))
            }
        };
        match *self {
            MixStrategy::ThresholdBatch { batch_size, timeout_s } => {
                if batch_size == 0 {
                    return Err(ConfigError::new("strategy.batch_size", "must be positive"));
                }
                if let Some(t) = timeout_s {
                    positive(t, "strategy.batch_timeout_s")?;
                }
                Ok(())
            }
            MixStrategy::PoissonPool { mean_delay_s } => positive(mean_delay_s, "strategy.mean_delay_s"),
            MixStrategy::RandomPickQueue { pick_rate_per_s } => positive(pick_rate_per_s, "strategy.pick_rate_per_s"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MixStrategy::ThresholdBatch { .. } => "batch",
            MixStrategy::PoissonPool { .. } => "poisson_pool",
            MixStrategy::RandomPickQueue { .. } => "random_pick",
        }
    }

    /// Pick rate of a random-pick queue whose mean sojourn time equals an
    /// exponential pool with `mean_delay_s`, given the node's arrival rate.
    /// The mean occupancy then also matches (`arrival_rate · mean_delay_s`).
    pub fn matched_pick_rate(arrival_rate_per_s: f64, mean_delay_s: f64) -> f64 {
        arrival_rate_per_s + 1.0 / mean_delay_s
    }
}

/// Pool of exchangeable packets with aggregate adversary mass.
#[derive(Debug, Clone)]
pub struct MemorylessPool<M> {
    packets: Vec<Packet<M>>,
    mass: Masses<M>,
}

impl<M: Mass> Default for MemorylessPool<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M: Mass> MemorylessPool<M> {
    pub fn new() -> Self {
        Self {
            packets: Vec::new(),
            mass: Masses::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn mass(&self) -> Masses<M> {
        self.mass
    }

    /// Mass currently held by each resident packet.
    pub fn mass_each(&self) -> Masses<M> {
        if self.packets.is_empty() {
            Masses::zero()
        } else {
            self.mass.share(self.packets.len())
        }
    }

    /// Adds a packet; its mass joins the pool total and is spread uniformly.
    pub fn admit(&mut self, packet: Packet<M>) {
        self.mass = self.mass + packet.masses;
        self.packets.push(packet);
    }

    fn depart_at(&mut self, index: usize) -> Packet<M> {
        let n = self.packets.len();
        let share = self.mass.share(n);
        self.mass = self.mass.remainder(n);
        let mut packet = self.packets.swap_remove(index);
        packet.masses = share;
        packet
    }

    /// Releases a specific packet (exponential-delay expiry).
    pub fn depart_id(&mut self, id: PacketId) -> Option<Packet<M>> {
        let index = self.packets.iter().position(|p| p.id == id)?;
        Some(self.depart_at(index))
    }

    /// Releases a uniformly chosen packet.
    pub fn depart_random<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Option<Packet<M>> {
        if self.packets.is_empty() {
            return None;
        }
        let index = rng.random_range(0..self.packets.len());
        Some(self.depart_at(index))
    }

    pub fn clear_sender_masses(&mut self) {
        self.mass.clear_senders();
    }

    pub fn packet_ids(&self) -> impl Iterator<Item = PacketId> + '_ {
        self.packets.iter().map(|p| p.id)
    }
}

/// Threshold batch buffer.
#[derive(Debug, Clone)]
pub struct BatchBuffer<M> {
    packets: Vec<Packet<M>>,
    generation: u64,
}

impl<M: Mass> Default for BatchBuffer<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M: Mass> BatchBuffer<M> {
    pub fn new() -> Self {
        Self {
            packets: Vec::new(),
            generation: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Incremented on every flush; lets stale timeouts recognise themselves.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn push(&mut self, packet: Packet<M>) {
        self.packets.push(packet);
    }

    pub fn mass(&self) -> Masses<M> {
        self.packets.iter().fold(Masses::zero(), |acc, p| acc + p.masses)
    }

    /// Forwards the oldest `count` packets in shuffled order, each carrying
    /// the batch's average mass.
    pub fn flush<R: RngCore + ?Sized>(&mut self, count: usize, rng: &mut R) -> Vec<Packet<M>> {
        let count = count.min(self.packets.len());
        let mut out: Vec<Packet<M>> = self.packets.drain(..count).collect();
        self.generation += 1;
        if out.is_empty() {
            return out;
        }
        let total = out.iter().fold(Masses::zero(), |acc, p| acc + p.masses);
        let share = total.share(out.len());
        for p in &mut out {
            p.masses = share;
        }
        out.shuffle(rng);
        out
    }

    pub fn clear_sender_masses(&mut self) {
        for p in &mut self.packets {
            p.masses.clear_senders();
        }
    }
}

#[derive(Debug, Clone)]
pub enum MixStage<M> {
    Pool(MemorylessPool<M>),
    Batch(BatchBuffer<M>),
}

/// What the owning simulation must schedule after a packet finishes service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// Exponential pool: the packet leaves at this time.
    DepartAt(PacketId, SimTime),
    /// Random-pick queue went from empty to non-empty: start the pick clock.
    StartPicking,
    /// Batch buffer reached its threshold.
    FlushNow,
    /// First packet of a fresh batch with a timeout configured.
    ArmTimeout {
        generation: u64,
        at: SimTime,
    },
    Buffered,
}

#[derive(Debug, Clone)]
pub struct MixNode<M> {
    pub id: NodeId,
    pub strategy: MixStrategy,
    capacity_per_s: f64,
    service_time: SimTime,
    server_free_at: SimTime,
    service_queue: VecDeque<Packet<M>>,
    stage: MixStage<M>,
}

impl<M: Mass> MixNode<M> {
    pub fn new(id: NodeId, strategy: MixStrategy, capacity_per_s: f64) -> Result<Self, ConfigError> {
        strategy.validate()?;
        if !(capacity_per_s > 0.0) || !capacity_per_s.is_finite() {
            return Err(ConfigError::new(
                "strategy.capacity_per_s",
                format!("must be positive, got {capacity_per_s}"),
            ));
        }
        let stage = match strategy {
            MixStrategy::ThresholdBatch { .. } => MixStage::Batch(BatchBuffer::new()),
            _ => MixStage::Pool(MemorylessPool::new()),
        };
        Ok(Self {
            id,
            strategy,
            capacity_per_s,
            service_time: SimTime::from_secs_f64(1.0 / capacity_per_s),
            server_free_at: SimTime::ZERO,
            service_queue: VecDeque::new(),
            stage,
        })
    }

    pub fn capacity_per_s(&self) -> f64 {
        self.capacity_per_s
    }

    pub fn service_time(&self) -> SimTime {
        self.service_time
    }

    pub fn queue_len(&self) -> usize {
        self.service_queue.len()
    }

    pub fn stage(&self) -> &MixStage<M> {
        &self.stage
    }

    pub fn pool(&self) -> Option<&MemorylessPool<M>> {
        match &self.stage {
            MixStage::Pool(p) => Some(p),
            MixStage::Batch(_) => None,
        }
    }

    pub fn batch(&self) -> Option<&BatchBuffer<M>> {
        match &self.stage {
            MixStage::Batch(b) => Some(b),
            MixStage::Pool(_) => None,
        }
    }

    /// Enqueues a packet for service and returns when it will complete:
    /// after every queued predecessor plus its own `1/capacity` of server time.
    pub fn on_arrival(&mut self, packet: Packet<M>, now: SimTime) -> SimTime {
        let start = self.server_free_at.max(now);
        let done = start + self.service_time;
        self.server_free_at = done;
        self.service_queue.push_back(packet);
        done
    }

    /// Removes the packet at the head of the service queue.
    pub fn complete_service(&mut self) -> Result<Packet<M>, SimError> {
        self.service_queue
            .pop_front()
            .ok_or_else(|| SimError::Internal(format!("service completion at idle node {}", self.id)))
    }

    /// Moves a serviced packet into the mixing stage. `delay` is drawn only
    /// for exponential pools.
    pub fn pool_admit<R: RngCore + ?Sized>(&mut self, packet: Packet<M>, now: SimTime, rng: &mut R) -> Admission {
        match (&mut self.stage, self.strategy) {
            (MixStage::Pool(pool), MixStrategy::PoissonPool { mean_delay_s }) => {
                let delay =
                    crate::engine::sample_exponential(rng, mean_delay_s).expect("strategy validated at construction");
                let id = packet.id;
                pool.admit(packet);
                Admission::DepartAt(id, now + delay)
            }
            (MixStage::Pool(pool), _) => {
                let was_empty = pool.is_empty();
                pool.admit(packet);
                if was_empty {
                    Admission::StartPicking
                } else {
                    Admission::Buffered
                }
            }
            (MixStage::Batch(buffer), MixStrategy::ThresholdBatch { batch_size, timeout_s }) => {
                buffer.push(packet);
                if buffer.len() == batch_size {
                    Admission::FlushNow
                } else if buffer.len() == 1 {
                    match timeout_s {
                        Some(t) => Admission::ArmTimeout {
                            generation: buffer.generation(),
                            at: now + SimTime::from_secs_f64(t),
                        },
                        None => Admission::Buffered,
                    }
                } else {
                    Admission::Buffered
                }
            }
            (MixStage::Batch(_), _) => unreachable!("batch stage only built for threshold strategy"),
        }
    }

    pub fn pool_depart_id(&mut self, id: PacketId) -> Result<Packet<M>, SimError> {
        match &mut self.stage {
            MixStage::Pool(pool) => pool.depart_id(id).ok_or(SimError::EmptyPool(self.id)),
            MixStage::Batch(_) => Err(SimError::Internal("pool departure at batch node".into())),
        }
    }

    pub fn pool_depart_random<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Result<Packet<M>, SimError> {
        match &mut self.stage {
            MixStage::Pool(pool) => pool.depart_random(rng).ok_or(SimError::EmptyPool(self.id)),
            MixStage::Batch(_) => Err(SimError::Internal("pool departure at batch node".into())),
        }
    }

    pub fn pool_len(&self) -> usize {
        match &self.stage {
            MixStage::Pool(p) => p.len(),
            MixStage::Batch(b) => b.len(),
        }
    }

    /// Flushes a full batch (or, when `partial`, whatever is buffered).
    pub fn batch_flush<R: RngCore + ?Sized>(&mut self, partial: bool, rng: &mut R) -> Result<Vec<Packet<M>>, SimError> {
        let batch_size = match self.strategy {
            MixStrategy::ThresholdBatch { batch_size, .. } => batch_size,
            _ => return Err(SimError::Internal("batch flush at pool node".into())),
        };
        let MixStage::Batch(buffer) = &mut self.stage else {
            return Err(SimError::Internal("batch flush at pool node".into()));
        };
        if partial {
            let n = buffer.len();
            Ok(buffer.flush(n, rng))
        } else if buffer.len() >= batch_size {
            Ok(buffer.flush(batch_size, rng))
        } else {
            Ok(Vec::new())
        }
    }

    /// True when a threshold batch has enough packets for another flush.
    pub fn batch_ready(&self) -> bool {
        match (&self.stage, self.strategy) {
            (MixStage::Batch(b), MixStrategy::ThresholdBatch { batch_size, .. }) => b.len() >= batch_size,
            _ => false,
        }
    }

    pub fn batch_generation(&self) -> Option<u64> {
        self.batch().map(BatchBuffer::generation)
    }

    /// Mass still inside this node (service queue plus mixing stage).
    pub fn resident_mass(&self) -> Masses<M> {
        let queued = self.service_queue.iter().fold(Masses::zero(), |acc, p| acc + p.masses);
        let staged = match &self.stage {
            MixStage::Pool(p) => p.mass(),
            MixStage::Batch(b) => b.mass(),
        };
        queued + staged
    }

    pub fn clear_sender_masses(&mut self) {
        for p in &mut self.service_queue {
            p.masses.clear_senders();
        }
        match &mut self.stage {
            MixStage::Pool(p) => p.clear_sender_masses(),
            MixStage::Batch(b) => b.clear_sender_masses(),
        }
    }
}
