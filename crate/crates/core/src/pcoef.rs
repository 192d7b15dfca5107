//! Count estimation in the continuous setting: walk the temperature down from the top,
//! and at each stop estimate the counts of the energies that are now well represented.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::oracle::OracleHandle;
use crate::pratio::{pratio_all, RatioEstimator};
use crate::profile::ConstantsProfile;
use crate::sampling::{estimate_pi, sample_empirical, SampleSpec};
use crate::search::binary_search;
use crate::table::{PiRecord, PiTable};

/// One stop of the descending walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcoefRound {
    pub t: usize,
    pub alpha: f64,
    /// Lower end of the energies assigned in this round; `None` once the walk reached the bottom.
    pub x: Option<f64>,
    pub draws: u64,
    pub assigned: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcoefTrace {
    pub rounds: Vec<PcoefRound>,
    pub ratio_cost: u64,
    pub total_cost: u64,
}

const MAX_ROUNDS: usize = 100_000;

/// Draws per stop at round `t`.
pub fn round_draws(t: usize, delta: f64, eps: f64, gamma: f64, profile: &ConstantsProfile) -> Result<u64> {
    let t2 = (t * t) as f64;
    let n = profile.pcoef_draws * (50.0 * t2 / (delta * gamma)).ln() / (delta * eps * eps);
    if !(n < 1.8e19) {
        return domain("per-round sample size overflows");
    }
    Ok(n.ceil() as u64)
}

/// Estimates `mu_{beta_min}(x)` at every candidate energy with radii meeting the
/// `(delta, eps)` contract, with probability `1 - gamma`.
pub fn pcoef_continuous(
    oracle: &mut OracleHandle,
    delta: f64,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<(PiTable, PcoefTrace)> {
    for (name, v) in [("delta", delta), ("eps", eps), ("gamma", gamma)] {
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("{name} = {v} must lie in (0, 1)"));
        }
    }
    let start = oracle.cost();
    let (beta_min, beta_max, n, support) = {
        let d = oracle.domain();
        (d.beta_min, d.beta_max, d.n, d.support.clone())
    };
    let ratios = pratio_all(oracle, profile.ratio_share * eps, gamma / 4.0, profile)?;
    let ratio_cost = oracle.cost() - start;
    let mut records: Vec<Option<PiRecord>> = vec![None; support.len()];
    let mut rounds = Vec::new();
    let (mut alpha_prev, mut x_prev) = (beta_max, n);
    for t in 1..=MAX_ROUNDS {
        let alpha = if alpha_prev > beta_min {
            let g = gamma / (100.0 * (t * t) as f64);
            binary_search(oracle, beta_min, alpha_prev, x_prev, g, 0.25, profile)?
        } else {
            beta_min
        };
        let draws = round_draws(t, delta, eps, gamma, profile)?;
        let sample = sample_empirical(oracle, alpha, SampleSpec::Draws(draws), profile)?;
        let x = if alpha > beta_min {
            let mut acc = 0;
            let need = draws as f64 / 100.0;
            sample.freq.iter().find_map(|&(v, c)| {
                acc += c;
                (acc as f64 >= need).then_some(v)
            })
        } else {
            None
        };
        if let Some(v) = x {
            debug_assert!(sample.mass(|y| y <= v) >= 0.01 && sample.mass(|y| y < v) < 0.01);
        }
        let lower = x.unwrap_or(f64::NEG_INFINITY);
        let q_hat = ratios.query(alpha)?;
        let mut assigned = 0;
        for (j, &y) in support.iter().enumerate() {
            if y > lower && y <= x_prev {
                let (pi_hat, u) = estimate_pi(y, alpha, 1.0 / 200.0, q_hat, sample.prob(y), beta_min, eps, delta);
                records[j] = Some(PiRecord { x: y, pi_hat, u });
                assigned += 1;
            }
        }
        rounds.push(PcoefRound { t, alpha, x, draws, assigned });
        if x.is_none() {
            let table = PiTable {
                records: records.into_iter().map(|r| r.expect("every energy is assigned at the bottom")).collect(),
                delta,
                eps,
                gamma,
                profile: profile.name.clone(),
                cost: oracle.cost() - start,
            };
            let trace = PcoefTrace {
                rounds,
                ratio_cost,
                total_cost: table.cost,
            };
            return Ok((table, trace));
        }
        alpha_prev = alpha;
        x_prev = lower;
    }
    Err(Error::GiveUp(MAX_ROUNDS))
}

/// The ratio estimator a continuous count estimate was built on, rebuilt from its table.
pub fn ratio_from_table(table: &PiTable, beta_min: f64, beta_max: f64) -> RatioEstimator {
    RatioEstimator::Integer(crate::pratio::IntegerRatio {
        beta_min,
        beta_max,
        pi_hat: table.records.iter().map(|r| (r.x, r.pi_hat)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::GibbsInstance;
    use crate::oracle::exact_oracle;

    fn desk() -> ConstantsProfile {
        ConstantsProfile::desk()
    }

    #[test]
    fn coverage_on_instance_a() {
        let a = GibbsInstance::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0], 0.0, 1.0).unwrap();
        let good = (0..200)
            .filter(|&s| {
                let mut o = exact_oracle(&a, s);
                let (table, trace) = pcoef_continuous(&mut o, 0.1, 0.3, 0.25, &desk()).unwrap();
                assert_eq!(trace.total_cost, o.cost());
                assert_eq!(trace.rounds.last().unwrap().alpha, 0.0);
                table.satisfies(&a, 0.3, 0.1)
            })
            .count();
        assert!(good >= 150, "{good}");
    }

    #[test]
    fn zero_counts_stay_zero() {
        let c = GibbsInstance::new(vec![0.0, 1.5, 2.5, 4.0], vec![1.0, 0.0, 2.0, 0.5], -0.5, 0.5).unwrap();
        for s in 0..20 {
            let (table, trace) = pcoef_continuous(&mut exact_oracle(&c, s), 0.1, 0.3, 0.25, &desk()).unwrap();
            assert_eq!(table.get(1.5).unwrap().pi_hat, 0.0);
            let alphas: Vec<f64> = trace.rounds.iter().map(|r| r.alpha).collect();
            assert!(alphas.windows(2).all(|w| w[1] <= w[0]));
            let xs: Vec<f64> = trace.rounds.iter().filter_map(|r| r.x).collect();
            assert!(xs.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn single_energy_is_exact() {
        let p = GibbsInstance::new(vec![2.5], vec![3.0], 0.0, 1.0).unwrap();
        let (table, trace) = pcoef_continuous(&mut exact_oracle(&p, 1), 0.1, 0.3, 0.25, &desk()).unwrap();
        assert_eq!(table.records.len(), 1);
        assert_eq!(table.records[0].pi_hat, 1.0);
        assert_eq!(trace.rounds.len(), 1);
    }

    #[test]
    fn walks_down_in_several_stops() {
        let c = GibbsInstance::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0, 4.0, 6.0, 4.0, 1.0], -1.0, 1.0).unwrap();
        let mut o = exact_oracle(&c, 3);
        let (_, trace) = pcoef_continuous(&mut o, 0.2, 0.4, 0.25, &desk()).unwrap();
        assert!(trace.rounds.len() >= 2);
        assert_eq!(trace.rounds.iter().map(|r| r.assigned).sum::<usize>(), 5);
    }
}
