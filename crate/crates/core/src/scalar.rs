//! Numeric abstraction for adversary probability masses.
//!
//! Mass propagation only needs field arithmetic (sums and division by a
//! packet count), so everything that moves mass around is generic over
//! [`Mass`]. That covers `f64` (the default), `f32`, and exact rationals
//! such as [`ExactMass`], which the oracle tests use to compare against
//! brute-force enumeration without rounding noise. Quantities that need
//! logarithms (entropy, log-ratios) go through `to_f64` or a [`num_traits::Float`] bound.

use std::fmt::Debug;
use std::ops::{Add, Sub};

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Exact rational masses, used for oracle comparisons on small traces.
pub type ExactMass = Ratio<i128>;

pub trait Mass: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("packet count representable in mass type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Mass for T where T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {}

/// The three adversary mass channels carried by every packet: linkage to the
/// tracked target, and posterior weight on sender A and sender B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Masses<M> {
    pub target: M,
    pub sender_a: M,
    pub sender_b: M,
}

impl<M: Mass> Masses<M> {
    pub fn zero() -> Self {
        Self {
            target: M::zero(),
            sender_a: M::zero(),
            sender_b: M::zero(),
        }
    }

    pub fn target(m: M) -> Self {
        Self {
            target: m,
            ..Self::zero()
        }
    }

    /// Share of this aggregate held by one of `n` exchangeable packets.
    pub fn share(self, n: usize) -> Self {
        let n = M::from_count(n);
        Self {
            target: self.target / n,
            sender_a: self.sender_a / n,
            sender_b: self.sender_b / n,
        }
    }

    /// What remains of this aggregate after one of `n` exchangeable packets
    /// leaves: `M·(n−1)/n`, computed directly rather than as a difference.
    pub fn remainder(self, n: usize) -> Self {
        let keep = M::from_count(n - 1);
        let n = M::from_count(n);
        Self {
            target: self.target * keep / n,
            sender_a: self.sender_a * keep / n,
            sender_b: self.sender_b * keep / n,
        }
    }

    pub fn clear_senders(&mut self) {
        self.sender_a = M::zero();
        self.sender_b = M::zero();
    }
}

impl<M: Mass> Add for Masses<M> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            target: self.target + rhs.target,
            sender_a: self.sender_a + rhs.sender_a,
            sender_b: self.sender_b + rhs.sender_b,
        }
    }
}

impl<M: Mass> Sub for Masses<M> {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self {
            target: self.target - rhs.target,
            sender_a: self.sender_a - rhs.sender_a,
            sender_b: self.sender_b - rhs.sender_b,
        }
    }
}

impl<M: Mass> Default for Masses<M> {
    fn default() -> Self {
        Self::zero()
    }
}
