//! Client and cover-traffic behaviour: Poisson message epochs, fragmentation
//! and receiver selection.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::engine::{sample_poisson_interarrival, SimTime};
use crate::error::ConfigError;
use crate::topology::ClientId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverSelection {
    FixedPairs,
    #[default]
    UniformRandom,
}

fn default_rate() -> f64 {
    1.0
}

fn default_size() -> u32 {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub num_clients: usize,
    #[serde(default = "default_rate")]
    pub send_rate_per_s: f64,
    #[serde(default = "default_size")]
    pub message_size_bytes: u32,
    #[serde(default = "default_size")]
    pub packet_payload_bytes: u32,
    #[serde(default)]
    pub receiver_selection: ReceiverSelection,
}

impl ClientConfig {
    pub fn new(num_clients: usize, send_rate_per_s: f64) -> Self {
        Self {
            num_clients,
            send_rate_per_s,
            message_size_bytes: default_size(),
            packet_payload_bytes: default_size(),
            receiver_selection: ReceiverSelection::UniformRandom,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_clients == 0 {
            return Err(ConfigError::new("clients.num_clients", "must be positive"));
        }
        if self.num_clients < 2 {
            return Err(ConfigError::new(
                "clients.num_clients",
                "need at least two clients so every sender has a distinct receiver",
            ));
        }
        if !(self.send_rate_per_s > 0.0) || !self.send_rate_per_s.is_finite() {
            return Err(ConfigError::new(
                "clients.send_rate_per_s",
                format!("must be positive, got {}", self.send_rate_per_s),
            ));
        }
        if self.message_size_bytes == 0 {
            return Err(ConfigError::new("clients.message_size_bytes", "must be positive"));
        }
        fragment(self.message_size_bytes, self.packet_payload_bytes)?;
        Ok(())
    }

    /// Packets per message.
    pub fn fragments(&self) -> usize {
        fragment(self.message_size_bytes, self.packet_payload_bytes).unwrap_or(1)
    }

    /// Offered packet rate of one client.
    pub fn packet_rate_per_s(&self) -> f64 {
        self.send_rate_per_s * self.fragments() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoverOrigin {
    Clients,
    Nodes,
    #[default]
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CoverConfig {
    #[serde(default)]
    pub origin: CoverOrigin,
    #[serde(default)]
    pub rate_per_origin_per_s: f64,
}

impl CoverConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.origin != CoverOrigin::Off
            && (!(self.rate_per_origin_per_s >= 0.0) || !self.rate_per_origin_per_s.is_finite())
        {
            return Err(ConfigError::new(
                "cover.rate_per_origin_per_s",
                format!("must be non-negative, got {}", self.rate_per_origin_per_s),
            ));
        }
        Ok(())
    }

    /// Effective per-origin rate; zero when cover is off.
    pub fn active_rate(&self) -> f64 {
        match self.origin {
            CoverOrigin::Off => 0.0,
            _ => self.rate_per_origin_per_s,
        }
    }
}

/// Number of packets a message splits into.
pub fn fragment(message_size_bytes: u32, packet_payload_bytes: u32) -> Result<usize, ConfigError> {
    if packet_payload_bytes == 0 {
        return Err(ConfigError::new("clients.packet_payload_bytes", "must be positive"));
    }
    if message_size_bytes == 0 {
        return Err(ConfigError::new("clients.message_size_bytes", "must be positive"));
    }
    Ok(message_size_bytes.div_ceil(packet_payload_bytes) as usize)
}

/// Fixed partner of client `i` among `n` clients.
pub fn pair_of(i: ClientId, n: usize) -> ClientId {
    (i + n / 2) % n
}

/// Chooses the receiver of a message from `sender`.
pub fn choose_receiver<R: RngCore + ?Sized>(
    selection: ReceiverSelection,
    sender: ClientId,
    n: usize,
    rng: &mut R,
) -> ClientId {
    match selection {
        ReceiverSelection::FixedPairs => pair_of(sender, n),
        ReceiverSelection::UniformRandom => {
            let r = rng.random_range(0..n - 1);
            if r >= sender {
                r + 1
            } else {
                r
            }
        }
    }
}

/// A Poisson emission process with its own stream.
#[derive(Debug, Clone)]
pub struct PoissonProcess {
    rate_per_s: f64,
}

impl PoissonProcess {
    pub fn new(rate_per_s: f64) -> Result<Self, ConfigError> {
        if !(rate_per_s > 0.0) || !rate_per_s.is_finite() {
            return Err(ConfigError::new(
                "rate_per_s",
                format!("must be positive, got {rate_per_s}"),
            ));
        }
        Ok(Self { rate_per_s })
    }

    pub fn rate_per_s(&self) -> f64 {
        self.rate_per_s
    }

    pub fn next_epoch<R: RngCore + ?Sized>(&self, now: SimTime, rng: &mut R) -> SimTime {
        now + sample_poisson_interarrival(rng, self.rate_per_s).expect("rate validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RngStream;

    #[test]
    fn fragmentation_rounds_up() {
        assert_eq!(fragment(2500, 1024).unwrap(), 3);
        assert_eq!(fragment(1024, 1024).unwrap(), 1);
        assert_eq!(fragment(1, 1024).unwrap(), 1);
        assert_eq!(fragment(10, 0).unwrap_err().field, "clients.packet_payload_bytes");
    }

    #[test]
    fn zero_rate_is_config_error() {
        let cfg = ClientConfig::new(10, 0.0);
        assert_eq!(cfg.validate().unwrap_err().field, "clients.send_rate_per_s");
        assert!(PoissonProcess::new(0.0).is_err());
    }

    #[test]
    fn fixed_pairs_are_stable_and_distinct() {
        for n in 2..20 {
            for i in 0..n {
                assert_ne!(pair_of(i, n), i);
            }
        }
        let mut rng = RngStream::new(1, "r");
        assert_eq!(choose_receiver(ReceiverSelection::FixedPairs, 3, 10, &mut rng), 8);
    }

    #[test]
    fn uniform_receiver_never_self() {
        let mut rng = RngStream::new(1, "r");
        let mut seen = [0u32; 5];
        for _ in 0..5000 {
            let r = choose_receiver(ReceiverSelection::UniformRandom, 2, 5, &mut rng);
            seen[r] += 1;
        }
        assert_eq!(seen[2], 0);
        assert!(seen.iter().enumerate().all(|(i, c)| i == 2 || *c > 1000));
    }

    #[test]
    fn cover_off_ignores_rate() {
        let cfg = CoverConfig {
            origin: CoverOrigin::Off,
            rate_per_origin_per_s: -5.0,
        };
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.active_rate(), 0.0);
    }
}
