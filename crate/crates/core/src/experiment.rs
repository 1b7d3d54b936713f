//! Run records, multi-seed sweeps, summaries and CSV output.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{ScenarioConfig, Scheme};
use crate::metrics::{MetricsReport, Summary};
use crate::network::NetCounters;
use crate::scenario::run_scenario;

pub const CSV_HEADER: &str =
    "scenario,scheme,blackholes,seed,throughput_pct,loss_pct,delay_s,mrr,vet_msgs,untrusted_paths,starved_flows";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub scheme: Scheme,
    pub blackholes: usize,
    pub seed: u64,
    pub throughput_pct: f64,
    pub loss_pct: f64,
    pub delay_s: f64,
    pub mrr: f64,
    pub vet_msgs: u64,
    pub untrusted_paths: u64,
    pub starved_flows: u64,
    /// Why the run produced no measurements.
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn from_report(scenario: &str, cfg: &ScenarioConfig, report: &MetricsReport, counters: &NetCounters) -> Self {
        RunRecord {
            scenario: scenario.to_string(),
            scheme: cfg.scheme,
            blackholes: cfg.blackholes,
            seed: cfg.seed,
            throughput_pct: report.throughput_ratio.unwrap_or(f64::NAN),
            loss_pct: report.packet_loss.unwrap_or(f64::NAN),
            delay_s: report.mean_delay.unwrap_or(f64::NAN),
            mrr: report.mean_mrr().unwrap_or(f64::NAN),
            vet_msgs: counters.vet_msgs,
            untrusted_paths: counters.untrusted_paths,
            starved_flows: report.starved_flows as u64,
            failure: None,
        }
    }

    pub fn failed(scenario: &str, cfg: &ScenarioConfig, reason: String) -> Self {
        RunRecord {
            scenario: scenario.to_string(),
            scheme: cfg.scheme,
            blackholes: cfg.blackholes,
            seed: cfg.seed,
            throughput_pct: f64::NAN,
            loss_pct: f64::NAN,
            delay_s: f64::NAN,
            mrr: f64::NAN,
            vet_msgs: 0,
            untrusted_paths: 0,
            starved_flows: 0,
            failure: Some(reason),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Metric columns in CSV order.
    pub fn values(&self) -> [f64; 7] {
        [
            self.throughput_pct,
            self.loss_pct,
            self.delay_s,
            self.mrr,
            self.vet_msgs as f64,
            self.untrusted_paths as f64,
            self.starved_flows as f64,
        ]
    }

    fn sort_key(&self) -> (&'static str, usize, u64) {
        (self.scheme.as_str(), self.blackholes, self.seed)
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{},{},{}", self.scenario, self.scheme, self.blackholes, self.seed);
        for v in [self.throughput_pct, self.loss_pct, self.delay_s, self.mrr] {
            row.push(',');
            row.push_str(&fmt_float(v));
        }
        if self.is_failed() {
            row.push_str(",NaN,NaN,NaN");
        } else {
            let _ = write!(row, ",{},{},{}", self.vet_msgs, self.untrusted_paths, self.starved_flows);
        }
        row
    }
}

pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NaN".to_string()
    }
}

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.scenario.cmp(&b.scenario)));
}

/// Mean and confidence half-width per (scheme, blackholes) group, over the
/// finite values of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub blackholes: usize,
    pub columns: [Summary; 7],
}

pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let key = (sorted[i].scheme, sorted[i].blackholes);
        let group: Vec<&RunRecord> =
            sorted[i..].iter().take_while(|r| (r.scheme, r.blackholes) == key).filter(|r| !r.is_failed()).collect();
        let len = sorted[i..].iter().take_while(|r| (r.scheme, r.blackholes) == key).count();
        let columns = std::array::from_fn(|c| Summary::of(&group.iter().map(|r| r.values()[c]).collect::<Vec<_>>()));
        out.push(SummaryRow { scheme: key.0, blackholes: key.1, columns });
        i += len;
    }
    out
}

/// Data rows only, sorted.
pub fn render_csv(records: &[RunRecord]) -> String {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &sorted {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Data rows followed by `summary_mean` and `summary_ci95` rows.
pub fn render_sweep_csv(records: &[RunRecord]) -> String {
    let mut out = render_csv(records);
    for s in summarize(records) {
        for (label, pick) in [("summary_mean", 0usize), ("summary_ci95", 1)] {
            let _ = write!(out, "{label},{},{},", s.scheme, s.blackholes);
            for c in &s.columns {
                out.push(',');
                out.push_str(&fmt_float(if pick == 0 { c.mean } else { c.ci95 }));
            }
            out.push('\n');
        }
    }
    out
}

fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    std::fs::write(path, text)
}

pub fn write_csv(records: &[RunRecord], path: &Path) -> std::io::Result<()> {
    if records.is_empty() {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "no records to write"));
    }
    write_text(path, &render_csv(records))
}

pub fn write_sweep_csv(records: &[RunRecord], path: &Path) -> std::io::Result<()> {
    if records.is_empty() {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "no records to write"));
    }
    write_text(path, &render_sweep_csv(records))
}

/// Runs one configuration, turning failures into NaN rows.
pub fn run_record(cfg: &ScenarioConfig, scenario_id: &str) -> RunRecord {
    match cfg.validate() {
        Err(e) => RunRecord::failed(scenario_id, cfg, e.to_string()),
        Ok(()) => match run_scenario(cfg, scenario_id) {
            Ok(o) => o.record,
            Err(e) => RunRecord::failed(scenario_id, cfg, e.to_string()),
        },
    }
}

/// Cross product of black-hole counts, seeds and schemes. Runs execute in
/// parallel; the returned records are sorted.
pub fn sweep(
    base: &ScenarioConfig,
    scenario_id: &str,
    blackholes: &[usize],
    seeds: &[u64],
    schemes: &[Scheme],
) -> Vec<RunRecord> {
    let mut jobs = Vec::with_capacity(blackholes.len() * seeds.len() * schemes.len());
    for &b in blackholes {
        for &seed in seeds {
            for &scheme in schemes {
                jobs.push(ScenarioConfig { blackholes: b, seed, scheme, ..base.clone() });
            }
        }
    }
    let mut records: Vec<RunRecord> = jobs.par_iter().map(|cfg| run_record(cfg, scenario_id)).collect();
    sort_records(&mut records);
    records
}

/// Every scheme at the configured black-hole count over several seeds.
pub fn compare(base: &ScenarioConfig, scenario_id: &str, seeds: &[u64]) -> Vec<RunRecord> {
    sweep(base, scenario_id, &[base.blackholes], seeds, &Scheme::ALL)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(scheme: Scheme, b: usize, seed: u64, t: f64) -> RunRecord {
        RunRecord {
            scenario: "t".into(),
            scheme,
            blackholes: b,
            seed,
            throughput_pct: t,
            loss_pct: 100.0 - t,
            delay_s: 0.01,
            mrr: 1.0,
            vet_msgs: 12,
            untrusted_paths: 0,
            starved_flows: 0,
            failure: None,
        }
    }

    #[test]
    fn single_record_is_two_lines() {
        let text = render_csv(&[rec(Scheme::Proposed, 0, 1, 100.0)]);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "t,proposed,0,1,100.000000,0.000000,0.010000,1.000000,12,0,0"
        );
    }

    #[test]
    fn rows_are_sorted_by_scheme_blackholes_seed() {
        let mut v = vec![
            rec(Scheme::Undefended, 0, 1, 1.0),
            rec(Scheme::Baseline, 2, 1, 1.0),
            rec(Scheme::Baseline, 1, 9, 1.0),
            rec(Scheme::Baseline, 1, 3, 1.0),
            rec(Scheme::Proposed, 0, 0, 1.0),
        ];
        sort_records(&mut v);
        let keys: Vec<(&str, usize, u64)> = v.iter().map(|r| (r.scheme.as_str(), r.blackholes, r.seed)).collect();
        assert_eq!(
            keys,
            vec![("baseline", 1, 3), ("baseline", 1, 9), ("baseline", 2, 1), ("proposed", 0, 0), ("undefended", 0, 1)]
        );
    }

    #[test]
    fn failed_rows_are_nan() {
        let cfg = ScenarioConfig::default();
        let row = RunRecord::failed("x", &cfg, "boom".into()).csv_row();
        assert_eq!(row, "x,proposed,0,1,NaN,NaN,NaN,NaN,NaN,NaN,NaN");
    }

    #[test]
    fn summary_means_match_rows() {
        let v = vec![rec(Scheme::Proposed, 0, 1, 90.0), rec(Scheme::Proposed, 0, 2, 80.0), rec(Scheme::Baseline, 0, 1, 70.0)];
        let s = summarize(&v);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].scheme, Scheme::Baseline);
        assert!((s[1].columns[0].mean - 85.0).abs() < 1e-12);
        let text = render_sweep_csv(&v);
        assert!(text.contains("summary_mean,proposed,0,,85.000000,15.000000"));
        assert_eq!(text.lines().count(), 1 + 3 + 4);
    }
}
