//! Machine-readable TOML reports and plot-ready CSV tables.
//!
//! A coverage report holds one `[[scenarios]]` entry per simulated
//! scenario, each with its resolved configuration, one `[[methods]]` block
//! per interval method (`coverage`, `avg_length`, `n_skipped`, ...), the
//! replication records and the per-query records.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel_smoothing::Window;
use crate::simulation::{CoverageReport, MethodSummary, MethodTally, Outcome, Scenario};

pub fn to_toml<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Report(e.to_string()))
}

#[derive(Serialize)]
struct ReplicationRow {
    index: usize,
    window: Window,
    sigma2_hat: f64,
    tallies: BTreeMap<String, MethodTally>,
}

#[derive(Serialize)]
struct QueryRow {
    replication: usize,
    query: usize,
    truth: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<f64>,
    covered: Vec<String>,
    skipped: Vec<String>,
    failed: Vec<String>,
    intervals: BTreeMap<String, [f64; 2]>,
}

#[derive(Serialize)]
struct ScenarioBlock<'a> {
    scenario: &'a Scenario,
    methods: &'a [MethodSummary],
    replications: Vec<ReplicationRow>,
    queries: Vec<QueryRow>,
}

#[derive(Serialize)]
struct CoverageDocument<'a> {
    scenarios: Vec<ScenarioBlock<'a>>,
}

fn block(report: &CoverageReport) -> ScenarioBlock<'_> {
    let replications = report
        .replications
        .iter()
        .map(|r| ReplicationRow {
            index: r.index,
            window: r.window,
            sigma2_hat: r.sigma2_hat,
            tallies: r.tallies.iter().map(|(m, t)| (m.name().to_string(), *t)).collect(),
        })
        .collect();
    let queries = report
        .queries
        .iter()
        .map(|q| {
            let mut row = QueryRow {
                replication: q.replication,
                query: q.query,
                truth: q.truth,
                estimate: q.estimate,
                covered: Vec::new(),
                skipped: Vec::new(),
                failed: Vec::new(),
                intervals: BTreeMap::new(),
            };
            for (m, o) in &q.outcomes {
                let name = m.name().to_string();
                match o {
                    Outcome::Interval { lo, hi, covered } => {
                        if *covered {
                            row.covered.push(name.clone());
                        }
                        row.intervals.insert(name, [*lo, *hi]);
                    }
                    Outcome::Skipped { .. } => row.skipped.push(name),
                    Outcome::Failed { .. } => row.failed.push(name),
                }
            }
            row
        })
        .collect();
    ScenarioBlock {
        scenario: &report.scenario,
        methods: &report.methods,
        replications,
        queries,
    }
}

/// TOML document for one or more coverage studies.
pub fn coverage_toml(reports: &[CoverageReport]) -> Result<String> {
    to_toml(&CoverageDocument {
        scenarios: reports.iter().map(block).collect(),
    })
}

/// Writes CSV rows with a header, formatting floats exactly.
pub fn write_csv<W: std::io::Write>(writer: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per test curve with the estimate, the truth and every method's
/// endpoints, sorted by estimate (curves without one last).
pub fn coverage_table_csv(report: &CoverageReport) -> Result<String> {
    let methods: Vec<_> = report.methods.iter().map(|m| m.method).collect();
    let mut header: Vec<String> = ["replication", "query", "estimate", "truth"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in &methods {
        header.push(format!("{m}_lo"));
        header.push(format!("{m}_hi"));
    }
    let mut queries: Vec<_> = report.queries.iter().collect();
    queries.sort_by(|a, b| {
        let key = |q: &&crate::simulation::QueryRecord| q.estimate.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    let rows: Vec<Vec<String>> = queries
        .iter()
        .map(|q| {
            let mut row = vec![
                q.replication.to_string(),
                q.query.to_string(),
                cell(q.estimate),
                q.truth.to_string(),
            ];
            for m in &methods {
                match q.outcomes.get(m) {
                    Some(Outcome::Interval { lo, hi, .. }) => {
                        row.push(lo.to_string());
                        row.push(hi.to_string());
                    }
                    _ => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    let mut out = Vec::new();
    write_csv(&mut out, &header, &rows)?;
    String::from_utf8(out).map_err(|e| Error::Report(e.to_string()))
}
