//! One-dimensional parameter sweeps over a base scenario.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ConfigError, Error, Result};
use crate::harness::run::{run_seed, PointResult, SeedResult};
use crate::harness::scenario::{parse_json, Profile, Scenario, ScenarioConfig};

/// Config field to vary, as a dotted path such as `clients.num_clients`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub axis: Axis,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        parse_json(text)
    }
}

/// Successful points plus the axis values that failed and why.
#[derive(Debug)]
pub struct SweepOutcome {
    pub points: Vec<PointResult>,
    pub failures: Vec<(f64, Error)>,
}

/// Writes `x` at `path`, creating the final key if absent. Integral values
/// are stored as JSON integers so count fields still parse.
pub fn set_path(doc: &mut Value, path: &str, x: f64) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ConfigError::new("axis.path", "empty path"))?;
    let mut cursor = doc;
    for part in parts {
        cursor = cursor
            .get_mut(part)
            .ok_or_else(|| ConfigError::new("axis.path", format!("`{path}`: no section `{part}`")))?;
    }
    let obj = cursor
        .as_object_mut()
        .ok_or_else(|| ConfigError::new("axis.path", format!("`{path}` does not name a field")))?;
    let value = if x.fract() == 0.0 && x.abs() < 9.0e15 {
        Value::from(x as i64)
    } else {
        Value::from(x)
    };
    obj.insert(last.to_string(), value);
    Ok(())
}

/// Applies `x` at `path` to `base` and re-parses the result.
pub fn with_value(base: &ScenarioConfig, path: &str, x: f64) -> Result<ScenarioConfig, ConfigError> {
    let mut doc = base.to_value();
    set_path(&mut doc, path, x)?;
    serde_json::from_value(doc).map_err(|e| ConfigError::new(path, e.to_string()))
}

/// Resolves and runs every axis value. A point that fails to resolve or run
/// is recorded and the sweep continues.
pub fn run_sweep(config: &SweepConfig, profile: Option<Profile>, parallel: usize) -> Result<SweepOutcome> {
    let mut failures = Vec::new();
    let mut resolved: Vec<(f64, Scenario)> = Vec::new();
    for &x in &config.axis.values {
        match with_value(&config.base, &config.axis.path, x).and_then(|c| c.resolve(profile)) {
            Ok(s) => resolved.push((x, s)),
            Err(e) => failures.push((x, Error::from(e))),
        }
    }

    let jobs: Vec<(usize, u64)> = resolved
        .iter()
        .enumerate()
        .flat_map(|(i, (_, s))| s.run.seeds.iter().map(move |&seed| (i, seed)))
        .collect();
    let exec = |&(i, seed): &(usize, u64)| run_seed::<f64>(&resolved[i].1, seed);
    let results: Vec<Result<_>> = if parallel <= 1 {
        jobs.iter().map(exec).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::Search(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(exec).collect())
    };

    let mut per_point: Vec<Vec<SeedResult>> = vec![Vec::new(); resolved.len()];
    let mut broken: Vec<Option<Error>> = (0..resolved.len()).map(|_| None).collect();
    for (&(i, seed), result) in jobs.iter().zip(results) {
        match result {
            Ok(ledger) => per_point[i].push(SeedResult { seed, ledger }),
            Err(e) => {
                broken[i].get_or_insert(e);
            }
        }
    }
    let mut points = Vec::new();
    for (((x, scenario), seeds), err) in resolved.into_iter().zip(per_point).zip(broken) {
        match err {
            Some(e) => failures.push((x, e)),
            None => points.push(PointResult {
                scenario,
                axis: Some(x),
                seeds,
            }),
        }
    }
    failures.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SweepOutcome { points, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn set_path_writes_integers_and_floats() {
        let mut v = json!({"clients": {"num_clients": 10}, "cover": {}});
        set_path(&mut v, "clients.num_clients", 50.0).unwrap();
        set_path(&mut v, "cover.rate_per_origin_per_s", 2.5).unwrap();
        assert_eq!(v["clients"]["num_clients"], json!(50));
        assert_eq!(v["cover"]["rate_per_origin_per_s"], json!(2.5));
        assert!(set_path(&mut v, "nope.x", 1.0).is_err());
        assert!(set_path(&mut v, "", 1.0).is_err());
    }
}
