//! Report types and the files a run writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ConfigEcho;
use crate::error::HarnessError;

/// Version string baked in at build time (`<crate version>+<git describe>`).
pub const VERSION: &str = env!("GIBBS_VERSION");

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Whether the task's contract held against the exact reference.
    pub ok: bool,
    /// Task-specific error figure (see `metric_name` in the report).
    pub metric: f64,
    /// Oracle draws used by this seed.
    pub cost: u64,
    /// Draws per pipeline phase; sums to `cost`.
    pub phases: BTreeMap<String, u64>,
    /// Extra per-seed figures, e.g. schedule length or attempts.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
    /// Set when the estimator gave up on this seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub total: u64,
    pub mean: f64,
    pub min: u64,
    pub max: u64,
    pub phases: BTreeMap<String, u64>,
}

impl CostSummary {
    pub fn of(results: &[SeedResult]) -> Self {
        let mut phases = BTreeMap::new();
        for r in results {
            for (k, v) in &r.phases {
                *phases.entry(k.clone()).or_insert(0) += v;
            }
        }
        let total: u64 = results.iter().map(|r| r.cost).sum();
        CostSummary {
            total,
            mean: if results.is_empty() { 0.0 } else { total as f64 / results.len() as f64 },
            min: results.iter().map(|r| r.cost).min().unwrap_or(0),
            max: results.iter().map(|r| r.cost).max().unwrap_or(0),
            phases,
        }
    }
}

/// Success rate against the target `1 - gamma`, with a three-standard-error slack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub successes: usize,
    pub runs: usize,
    pub rate: f64,
    pub target: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Coverage {
    pub fn new(successes: usize, runs: usize, gamma: f64) -> Self {
        let target = 1.0 - gamma;
        let threshold = coverage_threshold(gamma, runs);
        let rate = if runs == 0 { 0.0 } else { successes as f64 / runs as f64 };
        Coverage { successes, runs, rate, target, threshold, pass: runs > 0 && rate >= threshold }
    }
}

/// `(1 - gamma) - 3 sqrt(gamma (1 - gamma) / runs)`.
pub fn coverage_threshold(gamma: f64, runs: usize) -> f64 {
    (1.0 - gamma) - 3.0 * (gamma * (1.0 - gamma) / runs.max(1) as f64).sqrt()
}

/// Exact figures of the instance the run was checked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactReference {
    pub setting: String,
    pub n: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// `ln Z(beta_max) - ln Z(beta_min)`.
    pub log_q: f64,
    pub rho: f64,
    /// Exact `mu_{beta_min}` per support point.
    pub pi: Vec<f64>,
    /// Largest probability of each support point over the range.
    pub delta_max: Vec<f64>,
    /// Exact graph counts (counting applications only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
}

/// One point of a scaling sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Value the sweep set (q, n, eps or delta).
    pub value: f64,
    /// Abscissa of the fit (q, n, 1/eps^2 or 1/delta).
    pub x: f64,
    pub costs: Vec<u64>,
    pub mean_cost: f64,
    pub coverage: Coverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub axis: String,
    pub x_label: String,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `ln(mean cost)` against `ln x`.
    pub slope: f64,
    /// 95% percentile bootstrap interval of the slope, resampling seeds.
    pub slope_ci: (f64, f64),
    /// Whether the mean cost increases with `x`.
    pub monotone: bool,
    /// Slope window the assertion checks; `None` when only monotonicity is checked.
    pub slope_window: Option<(f64, f64)>,
    pub pass: bool,
}

/// Everything a run reports. Serialized to `report.json`, which depends only on
/// the configuration, so reruns reproduce it byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ConfigEcho,
    pub metric_name: String,
    pub seeds: Vec<SeedResult>,
    pub cost: CostSummary,
    pub coverage: Coverage,
    /// Further conditions that must hold on every seed (e.g. schedule validity).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub checks: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactReference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Scaling>,
    /// Wall time; written to `timing.json` rather than the report.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl RunReport {
    /// Whether `--assert` accepts the run.
    pub fn passes(&self) -> bool {
        match &self.scaling {
            Some(s) => s.pass,
            None => self.coverage.pass && self.checks.values().all(|&b| b),
        }
    }
}

/// Row of `pi_table.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiRow {
    pub seed: u64,
    pub x: f64,
    pub pi_hat: f64,
    pub u: f64,
    pub pi_exact: f64,
}

/// Row of `ratio_knots.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KnotRow {
    pub seed: u64,
    pub beta: f64,
    pub log_q_hat: f64,
    pub log_q_exact: f64,
}

/// Tables a run produces besides the report.
#[derive(Clone, Debug, Default)]
pub struct Tables {
    pub pi: Vec<PiRow>,
    pub knots: Vec<KnotRow>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `timing.json`, `pi_table.csv` and `ratio_knots.csv` under `dir`.
pub fn write_outputs(dir: &Path, report: &RunReport, tables: &Tables) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    let timing = serde_json::json!({ "wall_seconds": report.wall_seconds, "version": report.version });
    fs::write(dir.join("timing.json"), format!("{}\n", serde_json::to_string_pretty(&timing)?))?;
    write_csv(&dir.join("pi_table.csv"), &tables.pi, &["seed", "x", "pi_hat", "u", "pi_exact"])?;
    write_csv(&dir.join("ratio_knots.csv"), &tables.knots, &["seed", "beta", "log_q_hat", "log_q_exact"])?;
    Ok(())
}
