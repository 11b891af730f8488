use std::path::Path;

use crate::{Error, Result};

/// Parsed delivery-opportunity schedule. `times` keeps every line, so a
/// timestamp with multiplicity k appears k times; when a replay outlives the
/// trace it wraps cyclically with the last timestamp as the period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSchedule {
    times: Vec<u64>,
    period: u64,
}

impl TraceSchedule {
    pub fn from_times(times: Vec<u64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Trace("trace has no delivery opportunities".into()));
        }
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Trace("timestamps must be non-decreasing".into()));
        }
        let period = *times.last().unwrap();
        if period == 0 {
            return Err(Error::Trace(
                "trace must span a nonzero duration (last timestamp is 0)".into(),
            ));
        }
        Ok(TraceSchedule { times, period })
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    /// Cycle length in ms when the trace wraps.
    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn opportunity_count(&self) -> usize {
        self.times.len()
    }

    /// Opportunities (lines) at exactly `ms` within the first cycle.
    pub fn multiplicity_at(&self, ms: u64) -> usize {
        self.times.iter().filter(|&&t| t == ms).count()
    }

    /// Deliverable bytes during `ms` of the first cycle.
    pub fn capacity_at(&self, ms: u64) -> u64 {
        self.multiplicity_at(ms) as u64 * super::link::MTU_BYTES
    }

    /// Mean capacity in bytes per second over one cycle.
    pub fn mean_bytes_per_second(&self) -> f64 {
        self.times.len() as f64 * super::link::MTU_BYTES as f64 * 1000.0 / self.period as f64
    }
}

/// Parses the published trace format: one integer per line.
pub fn parse_trace_text(text: &str) -> Result<TraceSchedule> {
    let mut times = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let t: u64 = trimmed.parse().map_err(|_| {
            Error::Trace(format!(
                "line {}: expected a non-negative integer, got '{trimmed}'",
                lineno + 1
            ))
        })?;
        times.push(t);
    }
    TraceSchedule::from_times(times)
}

pub fn parse_trace(path: &Path) -> Result<TraceSchedule> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Trace(format!("cannot read {}: {e}", path.display())))?;
    parse_trace_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeats_multiply_capacity() {
        let s = parse_trace_text("5\n5\n5\n").unwrap();
        assert_eq!(s.capacity_at(5), 4500);
        assert_eq!(s.multiplicity_at(5), 3);
        assert_eq!(s.period(), 5);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse_trace_text("").is_err());
        assert!(parse_trace_text("\n\n").is_err());
    }

    #[test]
    fn multiplicity_map() {
        let s = parse_trace_text("1\n2\n2\n10\n").unwrap();
        assert_eq!(s.capacity_at(1), 1500);
        assert_eq!(s.capacity_at(2), 3000);
        assert_eq!(s.capacity_at(10), 1500);
        assert_eq!(s.capacity_at(3), 0);
    }

    #[test]
    fn rejects_garbage_and_decreasing() {
        assert!(parse_trace_text("1\ntwo\n3\n").is_err());
        assert!(parse_trace_text("5\n3\n").is_err());
        assert!(parse_trace_text("-4\n").is_err());
        assert!(parse_trace_text("0\n").is_err());
    }
}
