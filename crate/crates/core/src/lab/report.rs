use std::fmt::Write as _;
use std::time::Duration;

use crate::losses::fmt_real;

use super::plot::Plot;

/// One checked inequality or identity. `slack ≥ 0` means it holds; `tag`
/// names the relation in machine-readable form.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub check: String,
    pub tag: String,
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// `value ≤ bound`.
    pub fn at_most(check: impl Into<String>, tag: &str, value: f64, bound: f64) -> Self {
        let slack = bound - value;
        Self {
            check: check.into(),
            tag: tag.to_string(),
            value,
            bound,
            slack,
            pass: slack >= 0.0,
        }
    }

    /// `value < bound`.
    pub fn below(check: impl Into<String>, tag: &str, value: f64, bound: f64) -> Self {
        let mut r = Self::at_most(check, tag, value, bound);
        r.pass = r.slack > 0.0;
        r
    }

    /// `value ≥ bound`.
    pub fn at_least(check: impl Into<String>, tag: &str, value: f64, bound: f64) -> Self {
        let slack = value - bound;
        Self {
            check: check.into(),
            tag: tag.to_string(),
            value,
            bound,
            slack,
            pass: slack >= 0.0,
        }
    }

    /// A yes/no condition, reported as value 1 or 0 against bound 1.
    pub fn holds(check: impl Into<String>, tag: &str, ok: bool) -> Self {
        let value = if ok { 1.0 } else { 0.0 };
        Self::at_least(check, tag, value, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub records: Vec<CheckRecord>,
    pub wall_time: Duration,
    pub plots: Vec<(String, Plot)>,
    /// Extra CSV files, `(file name, contents)`.
    pub tables: Vec<(String, String)>,
    /// Lines appended to summary.txt.
    pub notes: Vec<String>,
}

pub const REPORT_HEADER: &str = "experiment,check,tag,value,bound,slack,pass";

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            records: Vec::new(),
            wall_time: Duration::ZERO,
            plots: Vec::new(),
            tables: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.records.push(record);
    }

    pub fn passed(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// Deterministic for a fixed config: no timing fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.experiment,
                csv_field(&r.check),
                csv_field(&r.tag),
                fmt_real(r.value),
                fmt_real(r.bound),
                fmt_real(r.slack),
                r.pass
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let failed = self.failures().count();
        let mut out = format!(
            "experiment: {}\nseed: {}\nrecords: {}\nfailed: {}\nstatus: {}\nwall_time_s: {:.3}\n",
            self.experiment,
            self.seed,
            self.records.len(),
            failed,
            if self.passed() { "PASS" } else { "FAIL" },
            self.wall_time.as_secs_f64()
        );
        if let Some(worst) = self
            .records
            .iter()
            .filter(|r| r.slack.is_finite())
            .min_by(|a, b| a.slack.total_cmp(&b.slack))
        {
            let _ = writeln!(out, "tightest: {} [{}] slack {}", worst.check, worst.tag, fmt_real(worst.slack));
        }
        for note in &self.notes {
            let _ = writeln!(out, "{note}");
        }
        if failed > 0 {
            out.push_str("failing records:\n");
            for r in self.failures() {
                let _ = writeln!(
                    out,
                    "  {} [{}] value {} bound {} slack {}",
                    r.check,
                    r.tag,
                    fmt_real(r.value),
                    fmt_real(r.bound),
                    fmt_real(r.slack)
                );
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_constructors() {
        assert!(CheckRecord::at_most("a", "x<=y", 1.0, 1.0).pass);
        assert!(!CheckRecord::at_most("a", "x<=y", 1.5, 1.0).pass);
        assert!(!CheckRecord::at_most("a", "x<=y", f64::NAN, 1.0).pass);
        assert!(CheckRecord::at_least("a", "x>=y", 2.0, 1.0).pass);
        let r = CheckRecord::holds("b", "flag", false);
        assert_eq!((r.value, r.slack, r.pass), (0.0, -1.0, false));
    }

    #[test]
    fn csv_quotes_and_status() {
        let mut rep = ExperimentReport::new("demo", 1);
        assert!(!rep.passed());
        rep.push(CheckRecord::at_most("mu=1, eta=2", "t", 0.0, 1.0));
        assert!(rep.passed());
        let csv = rep.to_csv();
        assert!(csv.starts_with(REPORT_HEADER));
        assert!(csv.contains("\"mu=1, eta=2\""));
        rep.push(CheckRecord::holds("bad", "t", false));
        assert!(rep.summary().contains("failing records:\n  bad"));
    }
}
