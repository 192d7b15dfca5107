//! Partition-ratio estimators for the continuous setting: TPA cooling schedules,
//! the paired product estimator, and the hybrid estimator valid at every temperature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gibbs::log_sum_exp;
use crate::oracle::OracleHandle;
use crate::profile::ConstantsProfile;
use crate::sampling::{estimate_products, open01, ProductSource};

/// Data structure answering ratio queries `Q(alpha) = Z(alpha) / Z(beta_min)` without sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum RatioEstimator {
    Ppe(PpeEstimator),
    Hybrid(HybridEstimator),
    Integer(IntegerRatio),
}

/// Log-ratio estimates at knots, interpolated log-linearly in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpeEstimator {
    /// Strictly increasing; the first knot is the lower end of the range.
    pub knots: Vec<f64>,
    /// Estimated `ln Q` at each knot relative to the first; entry 0 is 0.
    pub log_q: Vec<f64>,
    pub eps: f64,
    pub gamma: f64,
    pub cost: u64,
}

/// Poisson-process counts below the switch point, paired products above it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridEstimator {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Sorted union of the TPA runs.
    pub points: Vec<f64>,
    pub runs: u64,
    pub beta_mid: f64,
    pub upper: PpeEstimator,
    pub eps: f64,
    pub gamma: f64,
    pub cost: u64,
}

/// Ratio implied by estimated counts: `sum_i pi_hat(i) e^{(alpha - beta_min) i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegerRatio {
    pub beta_min: f64,
    pub beta_max: f64,
    /// `(energy, pi_hat)` pairs.
    pub pi_hat: Vec<(f64, f64)>,
}

impl RatioEstimator {
    pub fn range(&self) -> (f64, f64) {
        match self {
            RatioEstimator::Ppe(p) => (p.knots[0], *p.knots.last().unwrap()),
            RatioEstimator::Hybrid(h) => (h.beta_min, h.beta_max),
            RatioEstimator::Integer(i) => (i.beta_min, i.beta_max),
        }
    }

    /// Oracle draws spent building the estimator.
    pub fn build_cost(&self) -> u64 {
        match self {
            RatioEstimator::Ppe(p) => p.cost,
            RatioEstimator::Hybrid(h) => h.cost,
            RatioEstimator::Integer(_) => 0,
        }
    }

    /// Estimated `ln Q(alpha)`.
    pub fn log_ratio(&self, alpha: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(alpha >= lo && alpha <= hi) {
            return domain(format!("query {alpha} outside [{lo}, {hi}]"));
        }
        Ok(match self {
            RatioEstimator::Ppe(p) => p.log_ratio(alpha),
            RatioEstimator::Hybrid(h) => h.log_ratio(alpha),
            RatioEstimator::Integer(i) => i.log_ratio(alpha),
        })
    }

    /// Estimated `Q(alpha)`.
    pub fn query(&self, alpha: f64) -> Result<f64> {
        Ok(self.log_ratio(alpha)?.exp())
    }
}

/// Estimated `Q(alpha)`; performs no sampling.
pub fn query_ratio(est: &RatioEstimator, alpha: f64) -> Result<f64> {
    est.query(alpha)
}

impl PpeEstimator {
    fn trivial(at: f64) -> Self {
        PpeEstimator {
            knots: vec![at],
            log_q: vec![0.0],
            eps: 0.0,
            gamma: 0.0,
            cost: 0,
        }
    }

    pub fn log_ratio(&self, alpha: f64) -> f64 {
        let k = &self.knots;
        let j = k.partition_point(|&b| b <= alpha);
        if j == 0 {
            return 0.0;
        }
        if j == k.len() {
            return *self.log_q.last().unwrap();
        }
        let (a, b) = (k[j - 1], k[j]);
        if alpha == a {
            return self.log_q[j - 1];
        }
        let t = (alpha - a) / (b - a);
        (1.0 - t) * self.log_q[j - 1] + t * self.log_q[j]
    }
}

impl HybridEstimator {
    /// Points in `[a, b)` per run.
    fn rate(&self, a: f64, b: f64) -> f64 {
        let lo = self.points.partition_point(|&p| p < a);
        let hi = self.points.partition_point(|&p| p < b);
        hi.saturating_sub(lo) as f64 / self.runs as f64
    }

    pub fn log_ratio(&self, alpha: f64) -> f64 {
        if alpha <= self.beta_mid {
            self.rate(self.beta_min, alpha)
        } else {
            self.rate(self.beta_min, self.beta_mid) + self.upper.log_ratio(alpha)
        }
    }
}

impl IntegerRatio {
    pub fn log_ratio(&self, alpha: f64) -> f64 {
        let shift = alpha - self.beta_min;
        log_sum_exp(self.pi_hat.iter().map(|&(x, p)| p.ln() + shift * x))
    }
}

/// Union of `k` TPA runs on `[lo, hi]`, sorted.
pub fn tpa_on(oracle: &mut OracleHandle, lo: f64, hi: f64, k: u64) -> Result<Vec<f64>> {
    let mut points = Vec::new();
    for _ in 0..k {
        let mut beta = hi;
        loop {
            let energy = oracle.draw(beta)?;
            if energy == 0.0 {
                break;
            }
            let u = open01(oracle.rng());
            beta += u.ln() / energy;
            if beta < lo {
                break;
            }
            points.push(beta);
        }
    }
    points.sort_by(|a, b| a.total_cmp(b));
    Ok(points)
}

/// Union of `k` TPA runs over the oracle's whole range, sorted.
pub fn tpa(oracle: &mut OracleHandle, k: u64) -> Result<Vec<f64>> {
    let (lo, hi) = (oracle.domain().beta_min, oracle.domain().beta_max);
    tpa_on(oracle, lo, hi, k)
}

/// Sources `exp(+-h_i K)` with `K` drawn at one end of each knot interval.
struct PairedSource<'a> {
    oracle: &'a mut OracleHandle,
    knots: &'a [f64],
    upward: bool,
}

impl ProductSource for PairedSource<'_> {
    fn len(&self) -> usize {
        self.knots.len() - 1
    }

    fn sample_mean(&mut self, i: usize, r: u64) -> Result<f64> {
        let half = 0.5 * (self.knots[i] - self.knots[i - 1]);
        let (beta, h) = if self.upward {
            (self.knots[i - 1], half)
        } else {
            (self.knots[i], -half)
        };
        let batch = self.oracle.draw_batch(beta, r)?;
        let log_mean = log_sum_exp(batch.iter().map(|&(x, c)| (c as f64).ln() + h * x)) - (r as f64).ln();
        Ok(log_mean.exp())
    }
}

/// Paired product estimator on `[lo, hi]` with `k` TPA runs per retained point.
pub fn ppe_on(
    oracle: &mut OracleHandle,
    lo: f64,
    hi: f64,
    k: u64,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<PpeEstimator> {
    if k == 0 || !(eps > 0.0 && eps < 1.0 && gamma > 0.0 && gamma < 1.0) {
        return domain("ppe needs k >= 1 and eps, gamma in (0, 1)");
    }
    if lo == hi {
        return Ok(PpeEstimator::trivial(lo));
    }
    let start = oracle.cost();
    let d = (2.0 / gamma).ln().ceil().max(1.0) as usize;
    let dense = tpa_on(oracle, lo, hi, k * d as u64)?;
    let offset = oracle.rng().random_range(0..d);
    let mut knots = vec![lo];
    for &b in dense.iter().skip(offset).step_by(d) {
        if b > *knots.last().unwrap() && b < hi {
            knots.push(b);
        }
    }
    knots.push(hi);
    let alpha = 2.0 * eps * eps;
    let up = estimate_products(
        &mut PairedSource { oracle, knots: &knots, upward: true },
        alpha,
        eps / 4.0,
        gamma / 4.0,
        profile,
    )?;
    let down = estimate_products(
        &mut PairedSource { oracle, knots: &knots, upward: false },
        alpha,
        eps / 4.0,
        gamma / 4.0,
        profile,
    )?;
    let log_q = up.log_values.iter().zip(&down.log_values).map(|(w, v)| w - v).collect();
    Ok(PpeEstimator {
        knots,
        log_q,
        eps,
        gamma,
        cost: oracle.cost() - start,
    })
}

/// Paired product estimator over the oracle's whole range.
pub fn ppe(oracle: &mut OracleHandle, k: u64, eps: f64, gamma: f64, profile: &ConstantsProfile) -> Result<RatioEstimator> {
    let (lo, hi) = (oracle.domain().beta_min, oracle.domain().beta_max);
    Ok(RatioEstimator::Ppe(ppe_on(oracle, lo, hi, k, eps, gamma, profile)?))
}

/// Number of TPA runs of the hybrid estimator.
pub fn hybrid_runs(eps: f64, gamma: f64, profile: &ConstantsProfile) -> u64 {
    (profile.hybrid_runs / (eps * eps) * (profile.hybrid_log / gamma).ln()).ceil() as u64
}

/// Ratio estimator that is `eps`-accurate at every temperature with probability `1 - gamma`.
pub fn pratio_all(oracle: &mut OracleHandle, eps: f64, gamma: f64, profile: &ConstantsProfile) -> Result<RatioEstimator> {
    if !(eps > 0.0 && eps < 1.0 && gamma > 0.0 && gamma < 1.0) {
        return domain("pratio_all needs eps and gamma in (0, 1)");
    }
    let (lo, hi, n) = {
        let d = oracle.domain();
        (d.beta_min, d.beta_max, d.n)
    };
    let start = oracle.cost();
    let runs = hybrid_runs(eps, gamma, profile);
    let points = if lo < hi { tpa_on(oracle, lo, hi, runs)? } else { Vec::new() };
    let switch = 4 * runs as usize;
    let beta_mid = if points.len() >= switch { points[switch - 1] } else { hi };
    let k2 = (profile.ppe_runs * (1.0 + n.max(1.0).ln()) / (eps * eps)).ceil() as u64;
    let upper = ppe_on(oracle, beta_mid, hi, k2, eps / 2.0, gamma / 2.0, profile)?;
    Ok(RatioEstimator::Hybrid(HybridEstimator {
        beta_min: lo,
        beta_max: hi,
        points,
        runs,
        beta_mid,
        upper,
        eps,
        gamma,
        cost: oracle.cost() - start,
    }))
}
