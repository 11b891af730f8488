//! Scatter rows, age-binned tables and CSV export.
//!
//! Ages are reported in seconds everywhere outside the simulator; the only
//! slots-to-seconds conversion lives in [`crate::sim::SlotClock`].

use serde::{Deserialize, Serialize};

use crate::sim::{EpisodeStats, SlotClock};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLabel {
    Simulated,
    Trace,
}

impl SourceLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceLabel::Simulated => "simulated",
            SourceLabel::Trace => "trace",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simulated" => Some(SourceLabel::Simulated),
            "trace" => Some(SourceLabel::Trace),
            _ => None,
        }
    }
}

/// One evaluated episode (simulation) or one agent of one experiment
/// (trace replay).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment_id: String,
    pub policy: String,
    /// q value for simulated rows, trace identifier for replay rows.
    pub q_or_trace: String,
    pub avg_age_seconds: f64,
    pub mean_error: f64,
    pub std_error: f64,
    /// Full-state mean squared error, alongside the position-norm error.
    pub mean_squared_error: f64,
    pub query_rate: f64,
    pub mean_rtt_seconds: Option<f64>,
    pub per: Option<f64>,
    pub label: SourceLabel,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "experiment_id,policy,q_or_trace,avg_age_seconds,mean_error,std_error,mean_squared_error,query_rate,mean_rtt_seconds,per,label";

    pub fn from_episode(
        experiment_id: &str,
        policy: &str,
        stats: &EpisodeStats,
        clock: &SlotClock,
    ) -> Self {
        MetricsRecord {
            experiment_id: experiment_id.to_string(),
            policy: policy.to_string(),
            q_or_trace: format!("{}", stats.q),
            avg_age_seconds: clock.seconds(stats.avg_age_slots),
            mean_error: stats.avg_err,
            std_error: 0.0,
            mean_squared_error: stats.avg_err_sq,
            query_rate: stats.query_rate,
            mean_rtt_seconds: None,
            per: None,
            label: SourceLabel::Simulated,
        }
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            escape(&self.experiment_id),
            escape(&self.policy),
            escape(&self.q_or_trace),
            self.avg_age_seconds,
            self.mean_error,
            self.std_error,
            self.mean_squared_error,
            self.query_rate,
            opt(self.mean_rtt_seconds),
            opt(self.per),
            self.label.as_str()
        )
    }
}

fn escape(s: &str) -> String {
    s.replace(',', ";")
}

/// Scatter CSV: one row per episode / per agent-experiment.
pub const SCATTER_HEADER: &str = "avg_age_seconds,avg_error,label";

pub fn scatter_export(records: &[MetricsRecord]) -> String {
    let mut out = String::from(SCATTER_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.avg_age_seconds,
            r.mean_error,
            r.label.as_str()
        ));
    }
    out
}

/// Parses a scatter CSV back into (age, error, label) triples.
pub fn parse_scatter(text: &str) -> Result<Vec<(f64, f64, SourceLabel)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != SCATTER_HEADER {
                return Err(Error::Config(format!("bad scatter header '{line}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let age: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad scatter row {i}")))?;
        let err: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad scatter row {i}")))?;
        let label = parts
            .next()
            .and_then(SourceLabel::parse)
            .ok_or_else(|| Error::Config(format!("bad scatter label on row {i}")))?;
        rows.push((age, err, label));
    }
    Ok(rows)
}

pub const AGE_BIN_WIDTH_SECONDS: f64 = 0.05;

/// Bin index for an average age; bins are half-open [k*w, (k+1)*w). The
/// epsilon guards values like 0.30 that sit a hair below an edge in binary.
pub fn age_bin_index(age_seconds: f64) -> i64 {
    (age_seconds / AGE_BIN_WIDTH_SECONDS + 1e-9).floor() as i64
}

/// Mean and population standard deviation of the error inside one age bin.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeBin {
    pub label: SourceLabel,
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Groups records into 0.05 s age bins per source label. Empty bins are
/// omitted; std is the population standard deviation.
pub fn bin_table(rows: &[(f64, f64, SourceLabel)]) -> Vec<AgeBin> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(u8, i64), Vec<f64>> = BTreeMap::new();
    for (age, err, label) in rows {
        let key = (
            match label {
                SourceLabel::Simulated => 0u8,
                SourceLabel::Trace => 1u8,
            },
            age_bin_index(*age),
        );
        groups.entry(key).or_default().push(*err);
    }
    groups
        .into_iter()
        .map(|((label_code, idx), errs)| {
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
            AgeBin {
                label: if label_code == 0 {
                    SourceLabel::Simulated
                } else {
                    SourceLabel::Trace
                },
                lo: idx as f64 * AGE_BIN_WIDTH_SECONDS,
                hi: (idx + 1) as f64 * AGE_BIN_WIDTH_SECONDS,
                mean,
                std: var.sqrt(),
                count: errs.len(),
            }
        })
        .collect()
}

pub const BIN_TABLE_HEADER: &str = "label,age_lo,age_hi,mean_error,std_error,count";

pub fn bin_table_csv(bins: &[AgeBin]) -> String {
    let mut out = String::from(BIN_TABLE_HEADER);
    out.push('\n');
    for b in bins {
        out.push_str(&format!(
            "{},{:.2},{:.2},{},{},{}\n",
            b.label.as_str(),
            b.lo,
            b.hi,
            b.mean,
            b.std,
            b.count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_records_one_bin() {
        let rows = vec![
            (0.21, 1.0, SourceLabel::Simulated),
            (0.24, 1.4, SourceLabel::Simulated),
        ];
        let bins = bin_table(&rows);
        assert_eq!(bins.len(), 1);
        let b = &bins[0];
        assert_eq!((b.lo, b.hi), (0.2, 0.25));
        assert!((b.mean - 1.2).abs() < 1e-12);
        assert!((b.std - 0.2).abs() < 1e-12, "population std, got {}", b.std);
        assert_eq!(b.count, 2);
    }

    #[test]
    fn exact_edge_goes_to_upper_bin() {
        assert_eq!(age_bin_index(0.25), 5);
        assert_eq!(age_bin_index(0.2499999), 4);
        assert_eq!(age_bin_index(0.30), 6);
        assert_eq!(age_bin_index(0.0), 0);
    }

    #[test]
    fn labels_bin_separately_and_empty_bins_vanish() {
        let rows = vec![
            (0.22, 1.0, SourceLabel::Simulated),
            (0.22, 2.0, SourceLabel::Trace),
            (0.92, 9.0, SourceLabel::Trace),
        ];
        let bins = bin_table(&rows);
        assert_eq!(bins.len(), 3);
        assert!(bins.iter().all(|b| b.count == 1));
    }

    #[test]
    fn scatter_roundtrip() {
        let recs = vec![MetricsRecord {
            experiment_id: "e1".into(),
            policy: "kind=always".into(),
            q_or_trace: "0.5".into(),
            avg_age_seconds: 0.31,
            mean_error: 1.25,
            std_error: 0.0,
            mean_squared_error: 2.0,
            query_rate: 1.0,
            mean_rtt_seconds: None,
            per: None,
            label: SourceLabel::Simulated,
        }];
        let csv = scatter_export(&recs);
        let rows = parse_scatter(&csv).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0], (0.31, 1.25, SourceLabel::Simulated));
        // Empty export is header-only and parses to nothing.
        let empty = scatter_export(&[]);
        assert_eq!(empty.trim(), SCATTER_HEADER);
        assert!(parse_scatter(&empty).unwrap().is_empty());
    }
}
