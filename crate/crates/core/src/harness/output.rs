//! Per-seed CSV rows. Column order is fixed; absent values are empty cells
//! and lines end in `\n`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::harness::run::PointResult;
use crate::metrics::{epsilon_after_rounds, epsilon_hat, estimate_delta, mean};

pub const CSV_HEADER: [&str; 18] = [
    "scenario_id",
    "axis",
    "seed",
    "users",
    "topology",
    "strategy",
    "mean_latency_s",
    "p50_latency_s",
    "p95_latency_s",
    "entropy_bits_mean",
    "entropy_bits_ci95",
    "eps_hat_nats",
    "eps_R_nats",
    "delta_emp",
    "packets_real",
    "packets_cover",
    "overhead_ratio",
    "censored",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scenario_id: String,
    pub axis: Option<f64>,
    pub seed: u64,
    pub users: usize,
    pub topology: String,
    pub strategy: String,
    pub mean_latency_s: Option<f64>,
    pub p50_latency_s: Option<f64>,
    pub p95_latency_s: Option<f64>,
    pub entropy_bits_mean: Option<f64>,
    /// Across-seed interval of the point, repeated on each of its rows.
    pub entropy_bits_ci95: Option<f64>,
    pub eps_hat_nats: Option<f64>,
    pub eps_r_nats: Option<f64>,
    pub delta_emp: Option<f64>,
    pub packets_real: u64,
    pub packets_cover: u64,
    pub overhead_ratio: Option<f64>,
    pub censored: u64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CsvRow {
    pub fn from_point(point: &PointResult) -> Vec<CsvRow> {
        let sc = &point.scenario;
        let ci = point.entropy_ci95();
        point
            .seeds
            .iter()
            .map(|s| {
                let l = &s.ledger;
                let lat = l.latency();
                let eps = epsilon_hat(&l.unlinkability_samples).ok();
                let has_rounds = !l.unlinkability_samples.is_empty();
                CsvRow {
                    scenario_id: sc.name.clone(),
                    axis: point.axis,
                    seed: s.seed,
                    users: sc.users(),
                    topology: sc.topology.family.name().to_string(),
                    strategy: sc.strategy_label(),
                    mean_latency_s: lat.map(|x| x.mean),
                    p50_latency_s: lat.map(|x| x.p50),
                    p95_latency_s: lat.map(|x| x.p95),
                    entropy_bits_mean: mean(&l.entropy_samples),
                    entropy_bits_ci95: ci,
                    eps_hat_nats: eps,
                    eps_r_nats: eps.map(|e| epsilon_after_rounds(e, sc.run.observation_rounds)),
                    delta_emp: has_rounds
                        .then(|| estimate_delta(&l.unlinkability_samples, sc.run.delta_threshold_nats)),
                    packets_real: l.packets_real,
                    packets_cover: l.packets_cover,
                    overhead_ratio: l.overhead_ratio(),
                    censored: l.censored,
                }
            })
            .collect()
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.scenario_id.clone(),
            cell(self.axis),
            self.seed.to_string(),
            self.users.to_string(),
            self.topology.clone(),
            self.strategy.clone(),
            cell(self.mean_latency_s),
            cell(self.p50_latency_s),
            cell(self.p95_latency_s),
            cell(self.entropy_bits_mean),
            cell(self.entropy_bits_ci95),
            cell(self.eps_hat_nats),
            cell(self.eps_r_nats),
            cell(self.delta_emp),
            self.packets_real.to_string(),
            self.packets_cover.to_string(),
            cell(self.overhead_ratio),
            self.censored.to_string(),
        ]
    }
}

/// Sorts rows by `(axis, seed)` and writes them with the fixed header.
pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut rows: Vec<&CsvRow> = rows.iter().collect();
    rows.sort_by(|a, b| {
        let ax = a.axis.unwrap_or(f64::NEG_INFINITY);
        let bx = b.axis.unwrap_or(f64::NEG_INFINITY);
        ax.total_cmp(&bx).then(a.seed.cmp(&b.seed))
    });
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.record()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(axis: f64, seed: u64) -> CsvRow {
        CsvRow {
            scenario_id: "s".into(),
            axis: Some(axis),
            seed,
            users: 10,
            topology: "cascade".into(),
            strategy: "batch".into(),
            mean_latency_s: Some(0.5),
            p50_latency_s: None,
            p95_latency_s: None,
            entropy_bits_mean: None,
            entropy_bits_ci95: None,
            eps_hat_nats: None,
            eps_r_nats: None,
            delta_emp: None,
            packets_real: 3,
            packets_cover: 0,
            overhead_ratio: Some(1.0),
            censored: 0,
        }
    }

    #[test]
    fn rows_are_sorted_and_empty_cells_blank() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row(2.0, 1), row(1.0, 2), row(1.0, 1)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split(',').count(), 18);
        assert!(lines[1].starts_with("s,1,1,"));
        assert!(lines[2].starts_with("s,1,2,"));
        assert!(lines[3].starts_with("s,2,1,"));
        assert!(lines[1].contains(",0.5,,,"));
        assert!(!text.contains('\r'));
    }
}
