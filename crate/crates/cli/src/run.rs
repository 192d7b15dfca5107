//! Per-seed pipelines and the experiment driver.

use std::collections::BTreeMap;
use std::time::Instant;

use gibbs_core::apps::js_matching_oracle;
use gibbs_core::integer::{pcoef_integer_traced, pcoef_logconcave_traced, IntegerTrace};
use gibbs_core::oracle::CommandSampler;
use gibbs_core::pcoef::pcoef_continuous;
use gibbs_core::pratio::{ppe, pratio_all, RatioEstimator};
use gibbs_core::schedule::find_covering_schedule_traced;
use gibbs_core::table::PiTable;
use gibbs_core::{exact_oracle, tv_perturbed_oracle, Domain, Error, GibbsInstance, OracleHandle, ShiftMode};
use rayon::prelude::*;

use crate::bench::bench_scaling;
use crate::config::{ExperimentConfig, OracleSpec, Task};
use crate::error::{usage, HarnessError};
use crate::gen::{resolve, Problem};
use crate::report::{Coverage, CostSummary, ExactReference, KnotRow, PiRow, RunReport, SeedResult, Tables, VERSION};

/// Points of the grid the all-temperature ratio error is measured on.
const RATIO_GRID: usize = 50;

/// Runs `cfg` across its seeds and assembles the report and tables.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RunReport, Tables), HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let (mut report, tables) = if cfg.task == Task::Bench {
        (bench_scaling(cfg)?, Tables::default())
    } else {
        run_task(cfg)?
    };
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((report, tables))
}

/// Runs a non-bench task; shared by [`run_experiment`] and the sweeps.
pub(crate) fn run_task(cfg: &ExperimentConfig) -> Result<(RunReport, Tables), HarnessError> {
    if cfg.task == Task::Bench {
        return usage("bench cannot be nested");
    }
    let problem = resolve(&cfg.source, cfg.task)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| HarnessError::Usage(format!("cannot build a pool of {} threads: {e}", cfg.jobs)))?;
    let outputs: Vec<Result<(SeedResult, Tables), HarnessError>> =
        pool.install(|| cfg.seeds.par_iter().map(|&seed| run_seed(cfg, &problem, seed)).collect());
    let mut per_seed = outputs.into_iter().collect::<Result<Vec<_>, _>>()?;
    per_seed.sort_by_key(|(r, _)| r.seed);

    let mut tables = Tables::default();
    let mut seeds = Vec::with_capacity(per_seed.len());
    for (r, t) in per_seed {
        tables.pi.extend(t.pi);
        tables.knots.extend(t.knots);
        seeds.push(r);
    }
    let successes = seeds.iter().filter(|r| r.ok).count();
    let coverage = Coverage::new(successes, seeds.len(), cfg.gamma);
    let checks = task_checks(cfg.task, &seeds);
    let report = RunReport {
        version: VERSION.to_string(),
        config: cfg.echo(),
        metric_name: metric_name(cfg.task).to_string(),
        cost: CostSummary::of(&seeds),
        seeds,
        coverage,
        checks,
        exact: Some(exact_reference(&problem)?),
        scaling: None,
        wall_seconds: 0.0,
    };
    Ok((report, tables))
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::RatioAll => "sup_grid_log_error",
        Task::RatioPoint => "log_error_at_beta_max",
        Task::CountsContinuous | Task::CountsInteger | Task::CountsLogconcave => "violations",
        Task::Schedule => "inv_weight",
        Task::CountMatchings | Task::CountSubgraphs => "max_log_count_error",
        Task::Bench => "cost",
    }
}

/// Conditions that must hold on every seed, beyond the coverage target.
fn task_checks(task: Task, seeds: &[SeedResult]) -> BTreeMap<String, bool> {
    let mut checks = BTreeMap::new();
    if task == Task::Schedule {
        let built: Vec<&SeedResult> = seeds.iter().filter(|r| r.failure.is_none()).collect();
        let all = |key: &str| built.iter().all(|r| r.extra.get(key) == Some(&1.0));
        checks.insert("structurally_valid".to_string(), all("valid"));
        checks.insert("inv_weight_within_bound".to_string(), all("within_bound"));
    }
    checks
}

fn exact_reference(p: &Problem) -> Result<ExactReference, HarnessError> {
    let inst = &p.inst;
    let setting = serde_json::to_value(inst.setting())?.as_str().unwrap_or_default().to_string();
    Ok(ExactReference {
        setting,
        n: inst.n(),
        beta_min: inst.beta_min(),
        beta_max: inst.beta_max(),
        log_q: inst.q(),
        rho: inst.rho(),
        pi: inst.pi(),
        delta_max: inst.support().iter().map(|&x| inst.delta_max(x)).collect::<Result<_, _>>()?,
        counts: p.graph.as_ref().map(|g| g.counts.clone()),
    })
}

/// Oracle of `seed` as the config asks for.
pub fn make_oracle(cfg: &ExperimentConfig, p: &Problem, seed: u64) -> Result<OracleHandle, HarnessError> {
    let inst = &p.inst;
    Ok(match &cfg.oracle {
        OracleSpec::Exact => exact_oracle(inst, seed),
        OracleSpec::TvPerturbed { d_tv, mode } => {
            let mode: ShiftMode = mode.parse().map_err(|_| HarnessError::Usage(format!("unknown shift mode {mode:?}")))?;
            tv_perturbed_oracle(exact_oracle(inst, seed), *d_tv, mode, seed)?
        }
        OracleSpec::JsChain { mixing_constant, d_tv_target } => {
            let g = p.graph.as_ref().ok_or_else(|| HarnessError::Usage("the matching chain needs a graph".into()))?;
            js_matching_oracle(&g.graph, (inst.beta_min(), inst.beta_max()), *mixing_constant, *d_tv_target, seed)?
        }
        OracleSpec::External { program, args } => {
            let sampler = CommandSampler::spawn(program, args, Domain::of(inst))?;
            OracleHandle::new(Box::new(sampler), seed, "external")
        }
    })
}

fn exact_pi(inst: &GibbsInstance, pi: &[f64], x: f64) -> f64 {
    inst.support().iter().position(|&s| s == x).map_or(0.0, |j| pi[j])
}

fn pi_rows(seed: u64, inst: &GibbsInstance, table: &PiTable) -> Vec<PiRow> {
    let pi = inst.pi();
    table
        .records
        .iter()
        .map(|r| PiRow { seed, x: r.x, pi_hat: r.pi_hat, u: r.u, pi_exact: exact_pi(inst, &pi, r.x) })
        .collect()
}

fn knot_rows(seed: u64, inst: &GibbsInstance, betas: &[f64], log_q_hat: &[f64]) -> Result<Vec<KnotRow>, HarnessError> {
    betas
        .iter()
        .zip(log_q_hat)
        .map(|(&beta, &log_q_hat)| {
            Ok(KnotRow { seed, beta, log_q_hat, log_q_exact: inst.log_ratio(inst.beta_min(), beta)? })
        })
        .collect()
}

/// Accumulates the fields of one seed's result.
struct Outcome {
    ok: bool,
    metric: f64,
    phases: Vec<(&'static str, u64)>,
    extra: Vec<(&'static str, f64)>,
    tables: Tables,
}

impl Outcome {
    fn new(ok: bool, metric: f64) -> Self {
        Outcome { ok, metric, phases: Vec::new(), extra: Vec::new(), tables: Tables::default() }
    }
}

/// Runs the task on one seed. Estimators that give up mark the seed failed;
/// oracle and I/O errors abort the run.
fn run_seed(cfg: &ExperimentConfig, p: &Problem, seed: u64) -> Result<(SeedResult, Tables), HarnessError> {
    let mut oracle = make_oracle(cfg, p, seed)?;
    let outcome = match seed_pipeline(cfg, p, seed, &mut oracle) {
        Ok(o) => Ok(o),
        Err(HarnessError::Core(e @ (Error::GiveUp(_) | Error::BudgetExhausted(..)))) => Err(e.to_string()),
        Err(e) => return Err(e),
    };
    let cost = oracle.cost();
    let (out, failure) = match outcome {
        Ok(o) => (o, None),
        Err(msg) => (Outcome::new(false, f64::INFINITY), Some(msg)),
    };
    let mut phases: BTreeMap<String, u64> = out.phases.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    let attributed: u64 = phases.values().sum();
    if attributed < cost {
        *phases.entry("other".to_string()).or_insert(0) += cost - attributed;
    }
    let result = SeedResult {
        seed,
        ok: out.ok,
        metric: out.metric,
        cost,
        phases,
        extra: out.extra.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        failure,
    };
    Ok((result, out.tables))
}

fn seed_pipeline(cfg: &ExperimentConfig, p: &Problem, seed: u64, oracle: &mut OracleHandle) -> Result<Outcome, HarnessError> {
    let inst = &p.inst;
    let (eps, gamma, delta, profile) = (cfg.eps, cfg.gamma, cfg.delta, &cfg.profile);
    let bmin = inst.beta_min();
    match cfg.task {
        Task::RatioAll => {
            let est = pratio_all(oracle, eps, gamma, profile)?;
            let cost = oracle.cost();
            let mut worst: f64 = 0.0;
            for i in 0..RATIO_GRID {
                let b = bmin + (inst.beta_max() - bmin) * i as f64 / (RATIO_GRID - 1) as f64;
                worst = worst.max((est.log_ratio(b)? - inst.log_ratio(bmin, b)?).abs());
            }
            let mut out = Outcome::new(worst <= eps, worst);
            if let RatioEstimator::Hybrid(h) = &est {
                out.phases = vec![("tpa", cost - h.upper.cost), ("ppe", h.upper.cost)];
                out.extra.push(("beta_mid", h.beta_mid));
                let fitted: Vec<f64> = h.upper.knots.iter().map(|&k| est.log_ratio(k)).collect::<Result<_, _>>()?;
                out.tables.knots = knot_rows(seed, inst, &h.upper.knots, &fitted)?;
            }
            Ok(out)
        }
        Task::RatioPoint => {
            let theta = inst.theta()?;
            let n = inst.n().max(1.0);
            let spread = if theta.is_finite() { theta.max(1.0) } else { 1.0 + n.ln() };
            let k = (profile.ppe_runs * spread / (eps * eps)).ceil().max(1.0) as u64;
            let est = ppe(oracle, k, eps, gamma, profile)?;
            let err = (est.log_ratio(inst.beta_max())? - inst.q()).abs();
            let mut out = Outcome::new(err <= eps, err);
            out.phases = vec![("ppe", oracle.cost())];
            out.extra.push(("tpa_runs", k as f64));
            if let RatioEstimator::Ppe(e) = &est {
                out.tables.knots = knot_rows(seed, inst, &e.knots, &e.log_q)?;
            }
            Ok(out)
        }
        Task::CountsContinuous => {
            let (table, trace) = pcoef_continuous(oracle, delta, eps, gamma, profile)?;
            let bad = table.violations(inst, eps, delta).len();
            let mut out = Outcome::new(bad == 0, bad as f64);
            out.phases = vec![("ratio", trace.ratio_cost), ("sampling", trace.total_cost - trace.ratio_cost)];
            out.extra.push(("rounds", trace.rounds.len() as f64));
            out.tables.pi = pi_rows(seed, inst, &table);
            Ok(out)
        }
        Task::CountsInteger | Task::CountsLogconcave => {
            let (table, trace) = if cfg.task == Task::CountsInteger {
                pcoef_integer_traced(oracle, delta, eps, gamma, profile)?
            } else {
                pcoef_logconcave_traced(oracle, delta, eps, gamma, profile)?
            };
            let bad = table.violations(inst, eps, delta).len();
            let mut out = Outcome::new(bad == 0, bad as f64);
            integer_phases(&mut out, &table, &trace);
            out.tables.pi = pi_rows(seed, inst, &table);
            out.tables.knots = knot_rows(seed, inst, &trace.ratios.betas, &trace.ratios.log_q_hat)?;
            Ok(out)
        }
        Task::Schedule => {
            let outcome = find_covering_schedule_traced(oracle, gamma, profile)?;
            let s = &outcome.schedule;
            let n = inst.n();
            let valid = s.violation(bmin, inst.beta_max(), n as u32).is_none();
            let proper = valid && s.is_proper(inst)?;
            let inv = s.inv_weight();
            let bound = 6.0 * (n + 1.0) * inst.rho();
            let mut out = Outcome::new(valid && proper, inv);
            out.phases = vec![("schedule", oracle.cost())];
            let flag = |b: bool| if b { 1.0 } else { 0.0 };
            out.extra = vec![
                ("attempts", outcome.attempts as f64),
                ("bound", bound),
                ("len", s.len() as f64),
                ("proper", flag(proper)),
                ("valid", flag(valid)),
                ("within_bound", flag(inv <= bound)),
            ];
            Ok(out)
        }
        Task::CountMatchings | Task::CountSubgraphs => {
            let g = p.graph.as_ref().expect("graph tasks resolve a graph");
            let n = inst.n() as usize;
            if n == 0 {
                return Ok(Outcome::new(true, 0.0));
            }
            let floor = 1.0 / (n as f64 + 1.0);
            let (table, trace) = pcoef_logconcave_traced(oracle, floor, eps, gamma, profile)?;
            let worst = count_error(&table, &g.counts, bmin);
            let mut out = Outcome::new(worst <= eps, worst);
            integer_phases(&mut out, &table, &trace);
            out.tables.pi = pi_rows(seed, inst, &table);
            Ok(out)
        }
        Task::Bench => usage("bench cannot run per seed"),
    }
}

fn integer_phases(out: &mut Outcome, table: &PiTable, trace: &IntegerTrace) {
    let sched = trace.schedule_cost;
    let ratio = trace.ratios.cost;
    out.phases = vec![("schedule", sched), ("ratio", ratio), ("sampling", table.cost.saturating_sub(sched + ratio))];
    out.extra.push(("schedule_len", trace.schedule.len() as f64));
}

/// Largest `|ln c_hat_i - ln c_i|` over the counts, with `c_hat_i` read off the
/// table as `c_0 (pi_hat_i / pi_hat_0) e^{-beta_min i}`.
pub fn count_error(table: &PiTable, counts: &[u64], beta_min: f64) -> f64 {
    let p0 = table.records[0].pi_hat;
    if !(p0 > 0.0) {
        return f64::INFINITY;
    }
    let c0 = counts[0] as f64;
    let mut worst: f64 = 0.0;
    for (i, (&c, r)) in counts.iter().zip(&table.records).enumerate() {
        let err = if c == 0 {
            if r.pi_hat == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else if r.pi_hat > 0.0 {
            let est = c0 * r.pi_hat / p0 * (-beta_min * i as f64).exp();
            (est.ln() - (c as f64).ln()).abs()
        } else {
            f64::INFINITY
        };
        worst = worst.max(err);
    }
    worst
}
