//! Discrete-event core: integer-nanosecond clock, the future-event set and
//! seeded random streams.
//!
//! Events are totally ordered by `(fire_at, seq)` where `seq` is a per-queue
//! insertion counter, so simultaneous events dispatch in FIFO order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, SimError};

pub const TICKS_PER_SEC: u64 = 1_000_000_000;

/// Simulated time in nanoseconds since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub fn ticks(self) -> u64 {
        self.0
    }

    /// Converts seconds to ticks, rounding half-up. Negative and NaN inputs
    /// map to zero; callers validate signs before getting here.
    pub fn from_secs_f64(secs: f64) -> SimTime {
        if !(secs > 0.0) {
            return SimTime::ZERO;
        }
        let ticks = (secs * TICKS_PER_SEC as f64 + 0.5).floor();
        if ticks >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ticks as u64)
        }
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SEC as f64
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        self.saturating_add(rhs)
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

impl<P> Event<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.fire_at, self.seq)
    }
}

impl<P: Eq> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P: Eq> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Future-event set with a monotone clock.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Event<P>>>,
    now: SimTime,
    next_seq: u64,
    dispatched: u64,
}

impl<P: Eq> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Eq> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Inserts an event. Scheduling before the current clock is a logic
    /// error and leaves the queue untouched.
    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { fire_at, seq, payload }));
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> Result<u64, SimError> {
        self.schedule(self.now + delay, payload)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.fire_at)
    }

    /// Pops the next event if it fires at or before `end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Event<P>> {
        match self.heap.peek() {
            Some(Reverse(e)) if e.fire_at <= end => {}
            _ => return None,
        }
        let Reverse(event) = self.heap.pop()?;
        self.now = event.fire_at;
        self.dispatched += 1;
        Some(event)
    }
}

/// A labelled, independently seeded random stream.
///
/// The generator state is derived from `SHA-256(seed_le ‖ label)`, so a
/// given `(seed, label)` pair always produces the same draws, and adding a
/// new consumer never shifts the draws of an existing one.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self {
            seed,
            label,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Exponentially distributed delay with the given mean, in ticks.
pub fn sample_exponential<R: RngCore + ?Sized>(stream: &mut R, mean_s: f64) -> Result<SimTime, ConfigError> {
    if !(mean_s > 0.0) || !mean_s.is_finite() {
        return Err(ConfigError::new(
            "mean_s",
            format!("exponential mean must be positive, got {mean_s}"),
        ));
    }
    let unit: f64 = Exp1.sample(stream);
    Ok(SimTime::from_secs_f64(unit * mean_s))
}

/// Inter-arrival time of a Poisson process with the given rate, in ticks.
pub fn sample_poisson_interarrival<R: RngCore + ?Sized>(
    stream: &mut R,
    rate_per_s: f64,
) -> Result<SimTime, ConfigError> {
    if !(rate_per_s > 0.0) || !rate_per_s.is_finite() {
        return Err(ConfigError::new(
            "rate_per_s",
            format!("Poisson rate must be positive, got {rate_per_s}"),
        ));
    }
    let unit: f64 = Exp1.sample(stream);
    Ok(SimTime::from_secs_f64(unit / rate_per_s))
}
