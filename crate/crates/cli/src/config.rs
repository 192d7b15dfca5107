//! Experiment configuration and the small text formats of its fields.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gibbs_core::ConstantsProfile;
use serde::{Deserialize, Serialize};

use crate::error::{usage, HarnessError};

/// What an experiment runs on every seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    RatioAll,
    RatioPoint,
    CountsContinuous,
    CountsInteger,
    CountsLogconcave,
    Schedule,
    CountMatchings,
    CountSubgraphs,
    Bench,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::RatioAll => "ratio-all",
            Task::RatioPoint => "ratio-point",
            Task::CountsContinuous => "counts-continuous",
            Task::CountsInteger => "counts-integer",
            Task::CountsLogconcave => "counts-logconcave",
            Task::Schedule => "schedule",
            Task::CountMatchings => "count-matchings",
            Task::CountSubgraphs => "count-subgraphs",
            Task::Bench => "bench",
        }
    }

    /// Whether the task reads a graph rather than a Gibbs instance.
    pub fn wants_graph(self) -> bool {
        matches!(self, Task::CountMatchings | Task::CountSubgraphs)
    }
}

impl FromStr for Task {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        <Task as clap::ValueEnum>::from_str(s, false).map_err(|_| HarnessError::Usage(format!("unknown task {s:?}")))
    }
}

/// Generator name with `key=value` parameters, written `name:k=v,k=v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenSpec {
    pub name: String,
    pub params: Vec<(String, String)>,
}

impl GenSpec {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Parameter parsed as a number, or `default` when absent.
    pub fn num(&self, key: &str, default: Option<f64>) -> Result<f64, HarnessError> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|_| HarnessError::Usage(format!("{key}={v} is not a number"))),
            None => default.ok_or_else(|| HarnessError::Usage(format!("generator {} needs {key}=", self.name))),
        }
    }

    /// Copy with `key` set to `value`.
    pub fn with(&self, key: &str, value: &str) -> Self {
        let mut out = self.clone();
        match out.params.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => out.params.push((key.to_string(), value.to_string())),
        }
        out
    }
}

impl FromStr for GenSpec {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        if name.is_empty() {
            return usage("empty generator name");
        }
        let mut params = Vec::new();
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some((k, v)) => params.push((k.trim().to_string(), v.trim().to_string())),
                // A bare value is the generator's positional argument (e.g. a graph name).
                None => params.push(("arg".to_string(), part.trim().to_string())),
            }
        }
        Ok(GenSpec { name: name.to_string(), params })
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            let sep = if i == 0 { ':' } else { ',' };
            if k == "arg" {
                write!(f, "{sep}{v}")?;
            } else {
                write!(f, "{sep}{k}={v}")?;
            }
        }
        Ok(())
    }
}

/// Where the instance (or graph) comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstanceSource {
    File(PathBuf),
    Gen(GenSpec),
}

impl fmt::Display for InstanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceSource::File(p) => write!(f, "file:{}", p.display()),
            InstanceSource::Gen(g) => write!(f, "gen:{g}"),
        }
    }
}

/// Backend behind the oracle handle of every seed.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleSpec {
    Exact,
    /// Exact law moved by `d_tv` in the given direction.
    TvPerturbed { d_tv: f64, mode: String },
    /// Metropolis matching chain (count-matchings only).
    JsChain { mixing_constant: f64, d_tv_target: f64 },
    /// Child process speaking the `SAMPLE <beta>` line protocol.
    External { program: String, args: Vec<String> },
}

impl FromStr for OracleSpec {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| HarnessError::Usage(format!("bad number {v:?} in oracle spec")));
        match parts.as_slice() {
            ["exact"] => Ok(OracleSpec::Exact),
            ["tv", d] => Ok(OracleSpec::TvPerturbed { d_tv: num(d)?, mode: "mass-shift-up".into() }),
            ["tv", d, mode] => Ok(OracleSpec::TvPerturbed { d_tv: num(d)?, mode: mode.to_string() }),
            ["js"] => Ok(OracleSpec::JsChain { mixing_constant: 1.0, d_tv_target: 0.01 }),
            ["js", c] => Ok(OracleSpec::JsChain { mixing_constant: num(c)?, d_tv_target: 0.01 }),
            ["js", c, d] => Ok(OracleSpec::JsChain { mixing_constant: num(c)?, d_tv_target: num(d)? }),
            ["cmd", ..] => {
                let line = s["cmd:".len()..].trim();
                let mut words = line.split_whitespace().map(str::to_string);
                let program = words.next().ok_or_else(|| HarnessError::Usage("cmd: needs a program".into()))?;
                Ok(OracleSpec::External { program, args: words.collect() })
            }
            _ => usage(format!("unknown oracle spec {s:?} (exact | tv:<d>[:<mode>] | js[:<c>[:<d>]] | cmd:<program> ...)")),
        }
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSpec::Exact => write!(f, "exact"),
            OracleSpec::TvPerturbed { d_tv, mode } => write!(f, "tv:{d_tv}:{mode}"),
            OracleSpec::JsChain { mixing_constant, d_tv_target } => write!(f, "js:{mixing_constant}:{d_tv_target}"),
            OracleSpec::External { program, args } => {
                write!(f, "cmd:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
        }
    }
}

/// Seeds written `a..b` (inclusive), `a..=b`, `a,b,c` or a single number.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Usage(format!("bad seed list {s:?}"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Axis a scaling benchmark sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Log partition ratio (generator parameter `q`).
    Q,
    /// Largest energy (generator parameter `n`).
    N,
    /// Accuracy; the cost is fitted against `1/eps^2`.
    Eps,
    /// Count floor; the cost is checked for growth in `1/delta`.
    Delta,
}

/// Values along one axis, written `axis=v1,v2,...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let (axis, vals) = s.split_once('=').ok_or_else(|| HarnessError::Usage(format!("sweep {s:?} needs axis=values")))?;
        let axis = match axis.trim() {
            "q" => SweepAxis::Q,
            "n" => SweepAxis::N,
            "eps" => SweepAxis::Eps,
            "delta" => SweepAxis::Delta,
            a => return usage(format!("unknown sweep axis {a:?} (q | n | eps | delta)")),
        };
        let values = vals
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| HarnessError::Usage(format!("bad sweep value {v:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Sweep { axis, values })
    }
}

/// Everything one `gibbs` invocation needs.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub task: Task,
    pub source: InstanceSource,
    pub eps: f64,
    pub gamma: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub profile: ConstantsProfile,
    pub oracle: OracleSpec,
    pub jobs: usize,
    /// Estimator a `bench` run sweeps.
    pub bench_task: Task,
    pub sweep: Option<Sweep>,
}

impl ExperimentConfig {
    /// Defaults for `task` on `source`: eps 0.3, gamma 0.25, delta 0.1, seed 1, exact oracle.
    pub fn new(task: Task, source: InstanceSource) -> Self {
        ExperimentConfig {
            task,
            source,
            eps: 0.3,
            gamma: 0.25,
            delta: 0.1,
            seeds: vec![1],
            profile: ConstantsProfile::from_env(),
            oracle: OracleSpec::Exact,
            jobs: 1,
            bench_task: Task::RatioAll,
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        for (name, v) in [("eps", self.eps), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return usage(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if self.seeds.is_empty() {
            return usage("at least one seed is required");
        }
        if self.jobs == 0 {
            return usage("--jobs must be at least 1");
        }
        if self.task == Task::Bench {
            if self.bench_task == Task::Bench {
                return usage("the benchmarked task cannot itself be bench");
            }
            match &self.sweep {
                None => return usage("bench needs --sweep axis=v1,v2,..."),
                Some(s) if s.values.len() < 3 => return usage("a sweep needs at least 3 values"),
                _ => {}
            }
        }
        if matches!(self.oracle, OracleSpec::JsChain { .. }) && self.task != Task::CountMatchings {
            return usage("the matching chain oracle only serves count-matchings");
        }
        Ok(())
    }

    /// Serializable summary of the configuration.
    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            task: self.task,
            source: self.source.to_string(),
            eps: self.eps,
            gamma: self.gamma,
            delta: self.delta,
            seeds: self.seeds.clone(),
            profile: self.profile.clone(),
            oracle: self.oracle.to_string(),
            bench_task: (self.task == Task::Bench).then_some(self.bench_task),
            sweep: self.sweep.clone(),
        }
    }
}

/// Configuration as echoed into the report. `jobs` is left out so reports
/// do not depend on the degree of parallelism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub task: Task,
    pub source: String,
    pub eps: f64,
    pub gamma: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub profile: ConstantsProfile,
    pub oracle: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench_task: Option<Task>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}
