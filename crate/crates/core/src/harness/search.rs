//! Bisection for the smallest knob setting that reaches an entropy objective.
//!
//! Entropy is assumed to be non-decreasing in the knob. Every probe reuses the
//! scenario's seed list, so the estimate is a deterministic function of the knob.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::harness::run::{run_point, PointResult};
use crate::harness::scenario::{parse_json, Profile, ScenarioConfig};
use crate::harness::sweep::with_value;
use crate::traffic::CoverOrigin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    CoverRate,
    MeanDelay,
}

impl Knob {
    pub fn path(self) -> &'static str {
        match self {
            Knob::CoverRate => "cover.rate_per_origin_per_s",
            Knob::MeanDelay => "strategy.mean_delay_s",
        }
    }
}

fn default_tolerance() -> f64 {
    0.05
}
fn default_iterations() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub base: ScenarioConfig,
    pub knob: Knob,
    pub lo: f64,
    pub hi: f64,
    pub objective_bits: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance_bits: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: u32,
}

impl SearchConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        parse_json(text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(ConfigError::new(
                "lo",
                format!("need lo < hi, got [{}, {}]", self.lo, self.hi),
            ));
        }
        if self.lo < 0.0 {
            return Err(ConfigError::new("lo", "must be non-negative"));
        }
        if !(self.tolerance_bits > 0.0) {
            return Err(ConfigError::new("tolerance_bits", "must be positive"));
        }
        if self.knob == Knob::CoverRate && self.base.cover.origin == CoverOrigin::Off {
            return Err(ConfigError::new(
                "cover.origin",
                "cover-rate search needs cover enabled",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub value: f64,
    pub entropy_bits: f64,
    /// Every probe in evaluation order.
    pub probes: Vec<PointResult>,
    /// False when the iteration budget ran out before the tolerance was met.
    pub converged: bool,
}

pub fn search(config: &SearchConfig, profile: Option<Profile>, parallel: usize) -> Result<SearchOutcome> {
    config.validate()?;
    let mut probes = Vec::new();
    let mut eval = |x: f64| -> Result<f64> {
        let scenario = with_value(&config.base, config.knob.path(), x)?.resolve(profile)?;
        let point = run_point(&scenario, Some(x), parallel)?;
        let h = point.entropy_mean().ok_or_else(|| {
            Error::Search(format!(
                "no entropy samples at {} = {x} ({} censored)",
                config.knob.path(),
                point.censored()
            ))
        })?;
        probes.push(point);
        Ok(h)
    };

    let goal = config.objective_bits - config.tolerance_bits;
    let h_lo = eval(config.lo)?;
    if h_lo >= goal {
        return Ok(SearchOutcome {
            value: config.lo,
            entropy_bits: h_lo,
            probes,
            converged: true,
        });
    }
    let h_hi = eval(config.hi)?;
    if h_hi < goal {
        return Err(Error::Search(format!(
            "objective {} bits not reachable in [{}, {}]: entropy {h_lo} bits at lo, {h_hi} bits at hi",
            config.objective_bits, config.lo, config.hi
        )));
    }

    let (mut lo, mut hi, mut h_at_hi) = (config.lo, config.hi, h_hi);
    for _ in 0..config.max_iterations {
        let mid = 0.5 * (lo + hi);
        let h = eval(mid)?;
        if (h - config.objective_bits).abs() <= config.tolerance_bits {
            return Ok(SearchOutcome {
                value: mid,
                entropy_bits: h,
                probes,
                converged: true,
            });
        }
        if h >= goal {
            hi = mid;
            h_at_hi = h;
        } else {
            lo = mid;
        }
    }
    Ok(SearchOutcome {
        value: hi,
        entropy_bits: h_at_hi,
        probes,
        converged: false,
    })
}
