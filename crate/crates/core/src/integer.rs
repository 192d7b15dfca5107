//! Estimators for integer energies built on covering schedules: ratios at the schedule
//! knots, count estimation in the general and log-concave settings, and the reductions
//! from a count table to all-temperature ratios and to relative counts.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gibbs::Setting;
use crate::oracle::OracleHandle;
use crate::pcoef::ratio_from_table;
use crate::pratio::{pratio_all, RatioEstimator};
use crate::profile::ConstantsProfile;
use crate::sampling::{estimate_pi, estimate_products, sample_empirical, EmpiricalDistribution, ProductSource, SampleSpec};
use crate::schedule::{find_covering_schedule, CoveringSchedule, Segment};
use crate::search::binary_search;
use crate::table::{PiRecord, PiTable};

/// Which computation produced a set of knot ratios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Products of indicator means along the schedule.
    Direct,
    /// The all-temperature estimator, queried at the knots.
    Continuous,
}

/// Costs of the two branches of a dovetailed run, `None` where a branch was stopped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DovetailCosts {
    pub direct: Option<u64>,
    pub continuous: Option<u64>,
    pub slice: u64,
}

/// Ratio estimates `Q(beta_i) = Z(beta_i) / Z(beta_min)` at the schedule knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRatios {
    pub betas: Vec<f64>,
    pub log_q_hat: Vec<f64>,
    pub provenance: Provenance,
    pub dovetail: Option<DovetailCosts>,
    pub cost: u64,
}

impl ScheduleRatios {
    pub fn q_hat(&self, i: usize) -> f64 {
        self.log_q_hat[i].exp()
    }
}

/// Indicator sources `1{x = energy}` with `x` drawn at `beta`, one per `(beta, energy)` pair.
struct IndicatorSources<'a> {
    oracle: &'a mut OracleHandle,
    points: Vec<(f64, f64)>,
}

impl ProductSource for IndicatorSources<'_> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn sample_mean(&mut self, i: usize, r: u64) -> Result<f64> {
        let (beta, x) = self.points[i - 1];
        let hits: u64 = self.oracle.draw_batch(beta, r)?.iter().filter(|p| p.0 == x).map(|p| p.1).sum();
        // Half a hit keeps a zero count finite; only an improper schedule gets here in practice.
        let hits = if hits == 0 { 0.5 } else { hits as f64 };
        Ok(hits / r as f64)
    }
}

/// Knot ratios from the two families of log running products, using the shared ends.
pub fn ratios_from_products(schedule: &CoveringSchedule, log_x: &[f64], log_y: &[f64]) -> Vec<f64> {
    let segs = &schedule.segments;
    let mut shift = 0.0;
    let mut out = vec![0.0];
    for i in 1..segs.len() {
        shift += (segs[i].beta - segs[i - 1].beta) * schedule.shared(i) as f64;
        out.push(log_x[i] - log_y[i] + shift);
    }
    out
}

/// Estimates every knot ratio of `schedule` to within `e^{±eps}` when it is proper.
pub fn pratio_covering_schedule(
    oracle: &mut OracleHandle,
    schedule: &CoveringSchedule,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<ScheduleRatios> {
    let (bmin, bmax, n) = {
        let d = oracle.domain();
        (d.beta_min, d.beta_max, d.n_int() as u32)
    };
    if let Some(v) = schedule.violation(bmin, bmax, n) {
        return domain(format!("invalid covering schedule: {v}"));
    }
    if !(eps > 0.0 && gamma > 0.0 && gamma < 1.0) {
        return domain("ratio estimation needs eps > 0 and gamma in (0, 1)");
    }
    let start = oracle.cost();
    let segs = &schedule.segments;
    let betas: Vec<f64> = segs.iter().map(|s| s.beta).collect();
    if segs.len() == 1 {
        return Ok(ScheduleRatios {
            betas,
            log_q_hat: vec![0.0],
            provenance: Provenance::Direct,
            dovetail: None,
            cost: 0,
        });
    }
    let w = schedule.inv_weight();
    let ups: Vec<(f64, f64)> = (1..segs.len()).map(|i| (segs[i - 1].beta, schedule.shared(i) as f64)).collect();
    let downs: Vec<(f64, f64)> = (1..segs.len()).map(|i| (segs[i].beta, schedule.shared(i) as f64)).collect();
    let x = estimate_products(&mut IndicatorSources { oracle, points: ups }, w, eps / 2.0, gamma / 2.0, profile)?;
    let y = estimate_products(&mut IndicatorSources { oracle, points: downs }, w, eps / 2.0, gamma / 2.0, profile)?;
    Ok(ScheduleRatios {
        betas,
        log_q_hat: ratios_from_products(schedule, &x.log_values, &y.log_values),
        provenance: Provenance::Direct,
        dovetail: None,
        cost: oracle.cost() - start,
    })
}

enum Branch {
    Direct(ScheduleRatios),
    Continuous(RatioEstimator),
}

fn slices(cost: u64, slice: u64) -> u64 {
    cost.div_ceil(slice)
}

/// Knot ratios from whichever of the direct and the all-temperature estimators finishes
/// first when both draw in alternating slices of `profile.dovetail_slice` draws.
///
/// The branches run on forked handles in two threads. The outcome is the one of the
/// sequential alternation (direct first in each round): a branch that finishes caps the
/// other at the draws it could have made before, and the parent is charged both branches'
/// draws up to that point.
pub fn pratio_points_dovetail(
    oracle: &mut OracleHandle,
    schedule: &CoveringSchedule,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<ScheduleRatios> {
    let slice = profile.dovetail_slice.max(1);
    let mut direct = oracle.fork("dovetail-direct")?;
    let mut cont = oracle.fork("dovetail-continuous")?;
    let cap_direct = Arc::new(AtomicU64::new(u64::MAX));
    let cap_cont = Arc::new(AtomicU64::new(u64::MAX));
    direct.share_limit(cap_direct.clone());
    cont.share_limit(cap_cont.clone());
    let (res_d, res_c) = std::thread::scope(|s| {
        let d = s.spawn(|| {
            let r = pratio_covering_schedule(&mut direct, schedule, eps, gamma / 2.0, profile);
            if r.is_ok() {
                // The other branch may use every slice strictly before the finishing one.
                cap_cont.fetch_min((slices(direct.cost(), slice).max(1) - 1) * slice, Ordering::AcqRel);
            }
            (r, direct.cost())
        });
        let c = s.spawn(|| {
            let r = pratio_all(&mut cont, eps, gamma / 2.0, profile);
            if r.is_ok() {
                cap_direct.fetch_min(slices(cont.cost(), slice) * slice, Ordering::AcqRel);
            }
            (r, cont.cost())
        });
        (d.join().expect("direct branch panicked"), c.join().expect("continuous branch panicked"))
    });
    let ((rd, cd), (rc, cc)) = (res_d, res_c);
    let stopped = |e: &Error| matches!(e, Error::BudgetExhausted(_) | Error::Cancelled);
    let winner = match (rd, rc) {
        (Ok(d), Ok(c)) => {
            if slices(cd, slice) <= slices(cc, slice) {
                Branch::Direct(d)
            } else {
                Branch::Continuous(c)
            }
        }
        (Ok(d), Err(e)) if stopped(&e) => Branch::Direct(d),
        (Err(e), Ok(c)) if stopped(&e) => Branch::Continuous(c),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let (charged, costs) = match &winner {
        Branch::Direct(_) => {
            let other = cc.min((slices(cd, slice).max(1) - 1) * slice);
            (cd + other, DovetailCosts { direct: Some(cd), continuous: None, slice })
        }
        Branch::Continuous(_) => {
            let other = cd.min(slices(cc, slice) * slice);
            (cc + other, DovetailCosts { direct: None, continuous: Some(cc), slice })
        }
    };
    oracle.absorb_cost(charged);
    let mut out = match winner {
        Branch::Direct(r) => r,
        Branch::Continuous(est) => ScheduleRatios {
            betas: schedule.betas(),
            log_q_hat: schedule.betas().iter().map(|&b| est.log_ratio(b)).collect::<Result<_>>()?,
            provenance: Provenance::Continuous,
            dovetail: None,
            cost: 0,
        },
    };
    out.dovetail = Some(costs);
    out.cost = charged;
    Ok(out)
}

fn check_unit(params: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in params {
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("{name} = {v} must lie in (0, 1)"));
        }
    }
    Ok(())
}

fn integer_domain(oracle: &OracleHandle) -> Result<(f64, f64, usize)> {
    let d = oracle.domain();
    if !d.is_integer() {
        return domain("this estimator needs integer energies");
    }
    Ok((d.beta_min, d.beta_max, d.n_int()))
}

/// Schedule, knot ratios and per-knot samples behind an integer count estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegerTrace {
    pub schedule: CoveringSchedule,
    pub ratios: ScheduleRatios,
    /// Inverse temperature used for each energy's estimate.
    pub used_beta: Vec<f64>,
    pub schedule_cost: u64,
}

/// Count estimation for general integer instances.
pub fn pcoef_integer(
    oracle: &mut OracleHandle,
    delta: f64,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<PiTable> {
    Ok(pcoef_integer_traced(oracle, delta, eps, gamma, profile)?.0)
}

/// [`pcoef_integer`] with the schedule and ratios it used.
pub fn pcoef_integer_traced(
    oracle: &mut OracleHandle,
    delta: f64,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<(PiTable, IntegerTrace)> {
    check_unit(&[("delta", delta), ("eps", eps), ("gamma", gamma)])?;
    let (bmin, bmax, n) = integer_domain(oracle)?;
    let start = oracle.cost();
    let fine = profile.fine_share * eps;
    let g_each = gamma / (10.0 * ((n + 1) * (n + 1)) as f64);
    let schedule = find_covering_schedule(oracle, gamma / 10.0, profile)?;
    let schedule_cost = oracle.cost() - start;
    let ratios = pratio_covering_schedule(oracle, &schedule, fine, gamma / 10.0, profile)?;
    let segs = &schedule.segments;
    let t = segs.len() - 1;
    let mut knots: Vec<EmpiricalDistribution> = Vec::with_capacity(segs.len());
    for s in segs {
        knots.push(sample_empirical(oracle, s.beta, SampleSpec::Calibrated { eps: fine, gamma: g_each, p0: s.w }, profile)?);
    }
    let mut records = Vec::with_capacity(n + 1);
    let mut used_beta = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let x = j as f64;
        let (pi_hat, u, used) = if t == 0 {
            let sample = sample_empirical(oracle, bmin, SampleSpec::Calibrated { eps: fine, gamma: g_each, p0: delta / 4.0 }, profile)?;
            let (p, u) = estimate_pi(x, bmin, 0.25, 1.0, sample.prob(x), bmin, eps, delta);
            (p, u, bmin)
        } else {
            let alpha = binary_search(oracle, bmin, bmax, x, g_each, 0.25, profile)?;
            let i = (0..t).find(|&i| alpha >= segs[i].beta && alpha <= segs[i + 1].beta).unwrap_or(t - 1);
            let k = schedule.shared(i + 1) as f64;
            let at_alpha = sample_empirical(oracle, alpha, SampleSpec::Calibrated { eps: fine, gamma: g_each, p0: delta / 4.0 }, profile)?;
            let pick = |m: usize, seg: &Segment| {
                let (p, u) = estimate_pi(x, seg.beta, seg.w / (8.0 * delta), ratios.q_hat(m), knots[m].prob(x), bmin, eps, delta);
                (p, u, seg.beta)
            };
            if at_alpha.prob(k) >= delta {
                let q_alpha = knots[i].prob(k) / at_alpha.prob(k) * ((alpha - segs[i].beta) * k).exp() * ratios.q_hat(i);
                let (p, u) = estimate_pi(x, alpha, 0.25, q_alpha, at_alpha.prob(x), bmin, eps, delta);
                (p, u, alpha)
            } else if x >= k {
                pick(i + 1, &segs[i + 1])
            } else {
                pick(i, &segs[i])
            }
        };
        records.push(PiRecord { x, pi_hat, u });
        used_beta.push(used);
    }
    let table = PiTable {
        records,
        delta,
        eps,
        gamma,
        profile: profile.name.clone(),
        cost: oracle.cost() - start,
    };
    Ok((
        table,
        IntegerTrace {
            schedule,
            ratios,
            used_beta,
            schedule_cost,
        },
    ))
}

/// Count estimation for log-concave integer instances.
pub fn pcoef_logconcave(
    oracle: &mut OracleHandle,
    delta: f64,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<PiTable> {
    Ok(pcoef_logconcave_traced(oracle, delta, eps, gamma, profile)?.0)
}

/// [`pcoef_logconcave`] with the schedule and ratios it used.
pub fn pcoef_logconcave_traced(
    oracle: &mut OracleHandle,
    delta: f64,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<(PiTable, IntegerTrace)> {
    check_unit(&[("delta", delta), ("eps", eps), ("gamma", gamma)])?;
    let (bmin, _, n) = integer_domain(oracle)?;
    if oracle.domain().setting != Setting::LogConcave {
        return domain("instance is not flagged log-concave");
    }
    let start = oracle.cost();
    let mut schedule = find_covering_schedule(oracle, gamma / 6.0, profile)?;
    let schedule_cost = oracle.cost() - start;
    let ratios = pratio_points_dovetail(oracle, &schedule, profile.ratio_share * eps, gamma / 6.0, profile)?;
    let small = delta.min(1.0 / n.max(1) as f64).min(1.0 / schedule.inv_weight());
    let t = schedule.len() - 1;
    for i in [0, t] {
        schedule.segments[i].w = schedule.segments[i].w.min(small / 2.0);
    }
    let fine = profile.fine_share * eps;
    let mut records = vec![PiRecord { x: 0.0, pi_hat: 0.0, u: 0.0 }; n + 1];
    let mut used_beta = vec![bmin; n + 1];
    for (i, s) in schedule.segments.iter().enumerate() {
        let spec = SampleSpec::Calibrated {
            eps: fine,
            gamma: gamma / (6.0 * (n + 1) as f64),
            p0: s.w,
        };
        let sample = sample_empirical(oracle, s.beta, spec, profile)?;
        let lo = s.sigma_minus.finite().map_or(0, |k| k as usize + 1);
        let hi = s.sigma_plus.finite().map_or(n, |k| k as usize);
        for k in lo..=hi {
            let x = k as f64;
            let (pi_hat, u) = estimate_pi(x, s.beta, 0.25, ratios.q_hat(i), sample.prob(x), bmin, eps, small);
            records[k] = PiRecord { x, pi_hat, u };
            used_beta[k] = s.beta;
        }
    }
    let table = PiTable {
        records,
        delta,
        eps,
        gamma,
        profile: profile.name.clone(),
        cost: oracle.cost() - start,
    };
    Ok((
        table,
        IntegerTrace {
            schedule,
            ratios,
            used_beta,
            schedule_cost,
        },
    ))
}

/// All-temperature ratio estimator read off a count table; makes no oracle draws.
pub fn pratio_all_integer(table: &PiTable, beta_min: f64, beta_max: f64) -> RatioEstimator {
    ratio_from_table(table, beta_min, beta_max)
}

/// Builds the count table with accuracy suited to ratio estimation and reads ratios off it.
pub fn pratio_all_via_counts(
    oracle: &mut OracleHandle,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<(RatioEstimator, PiTable)> {
    let (bmin, bmax, n) = integer_domain(oracle)?;
    let delta = (1.0 / n.max(1) as f64).min(0.5);
    let table = if oracle.domain().setting == Setting::LogConcave {
        pcoef_logconcave(oracle, delta, 0.1 * eps, gamma, profile)?
    } else {
        pcoef_integer(oracle, delta, 0.1 * eps, gamma, profile)?
    };
    Ok((pratio_all_integer(&table, bmin, bmax), table))
}

/// Relative count estimates: the table entry where its radius is tight, else unknown.
pub fn derive_ptcoef(table: &PiTable, eps: f64) -> Vec<(f64, Option<f64>)> {
    table
        .records
        .iter()
        .map(|r| (r.x, (r.pi_hat > 0.0 && r.u <= 0.2 * eps * r.pi_hat).then_some(r.pi_hat)))
        .collect()
}
