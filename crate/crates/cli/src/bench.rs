//! Cost-scaling sweeps.

use rand::Rng;

use gibbs_core::rng::stream;

use crate::config::{ExperimentConfig, InstanceSource, SweepAxis};
use crate::error::{usage, HarnessError};
use crate::report::{Coverage, CostSummary, RunReport, Scaling, SweepPoint, VERSION};
use crate::run::run_task;

/// Bootstrap resamples behind the slope interval.
pub const BOOTSTRAP_ROUNDS: usize = 1000;
/// Slope window checked for the `q` and `eps` axes.
pub const SLOPE_WINDOW: (f64, f64) = (0.6, 1.4);

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn mean(v: &[u64]) -> f64 {
    v.iter().map(|&c| c as f64).sum::<f64>() / v.len() as f64
}

/// Log-log slope of mean cost against `x`.
fn loglog_slope(xs: &[f64], means: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = means.iter().map(|m| m.max(1.0).ln()).collect();
    ols_slope(&lx, &ly)
}

/// 95% percentile interval of the slope under resampling of the seeds at every point.
pub fn bootstrap_slope_ci(xs: &[f64], costs: &[Vec<u64>], rounds: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream(seed, "bootstrap");
    let mut slopes: Vec<f64> = (0..rounds)
        .map(|_| {
            let means: Vec<f64> = costs
                .iter()
                .map(|c| {
                    let pick: Vec<u64> = (0..c.len()).map(|_| c[rng.random_range(0..c.len())]).collect();
                    mean(&pick)
                })
                .collect();
            loglog_slope(xs, &means)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let at = |q: f64| slopes[((q * (rounds - 1) as f64).round() as usize).min(rounds - 1)];
    (at(0.025), at(0.975))
}

/// Runs the benchmarked task at every sweep value and fits the cost growth.
pub fn bench_scaling(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let sweep = match &cfg.sweep {
        Some(s) if s.values.len() >= 3 => s.clone(),
        _ => return usage("a sweep needs at least 3 values"),
    };
    let mut points = Vec::with_capacity(sweep.values.len());
    let mut all_seeds = Vec::new();
    for &v in &sweep.values {
        let mut sub = cfg.clone();
        sub.task = cfg.bench_task;
        sub.sweep = None;
        let x = match sweep.axis {
            SweepAxis::Q | SweepAxis::N => {
                let key = if sweep.axis == SweepAxis::Q { "q" } else { "n" };
                match &cfg.source {
                    InstanceSource::Gen(g) => sub.source = InstanceSource::Gen(g.with(key, &v.to_string())),
                    InstanceSource::File(_) => return usage(format!("a {key} sweep needs a generator source")),
                }
                v
            }
            SweepAxis::Eps => {
                sub.eps = v;
                1.0 / (v * v)
            }
            SweepAxis::Delta => {
                sub.delta = v;
                1.0 / v
            }
        };
        if !(x > 0.0 && x.is_finite()) {
            return usage(format!("sweep value {v} gives a nonpositive abscissa"));
        }
        let (rep, _) = run_task(&sub)?;
        let costs: Vec<u64> = rep.seeds.iter().map(|r| r.cost).collect();
        points.push(SweepPoint { value: v, x, mean_cost: mean(&costs), costs, coverage: rep.coverage });
        all_seeds.extend(rep.seeds);
    }
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let means: Vec<f64> = points.iter().map(|p| p.mean_cost).collect();
    let costs: Vec<Vec<u64>> = points.iter().map(|p| p.costs.clone()).collect();
    let slope = loglog_slope(&xs, &means);
    let slope_ci = bootstrap_slope_ci(&xs, &costs, BOOTSTRAP_ROUNDS, cfg.seeds[0]);
    let monotone = means.windows(2).all(|w| w[1] > w[0]);
    let (axis, x_label, slope_window) = match sweep.axis {
        SweepAxis::Q => ("q", "q", Some(SLOPE_WINDOW)),
        SweepAxis::N => ("n", "n", None),
        SweepAxis::Eps => ("eps", "1/eps^2", Some(SLOPE_WINDOW)),
        SweepAxis::Delta => ("delta", "1/delta", None),
    };
    let pass = match slope_window {
        Some((lo, hi)) => slope >= lo && slope <= hi,
        None => monotone,
    };
    let successes = all_seeds.iter().filter(|r| r.ok).count();
    Ok(RunReport {
        version: VERSION.to_string(),
        config: cfg.echo(),
        metric_name: "cost".to_string(),
        cost: CostSummary::of(&all_seeds),
        coverage: Coverage::new(successes, all_seeds.len(), cfg.gamma),
        seeds: Vec::new(),
        checks: Default::default(),
        exact: None,
        scaling: Some(Scaling {
            axis: axis.to_string(),
            x_label: x_label.to_string(),
            points,
            slope,
            slope_ci,
            monotone,
            slope_window,
            pass,
        }),
        wall_seconds: 0.0,
    })
}
