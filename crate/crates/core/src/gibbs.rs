//! Exact model of a Gibbs distribution given explicit counts.
//!
//! Counts are kept in the log domain; every partition sum is a log-sum-exp.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{domain, Error, Result};

/// The two settings of the energy domain the estimators distinguish.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Continuous,
    Integer,
    LogConcave,
}

/// Gibbs distribution with explicit counts on a finite support.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsInstance {
    support: Vec<f64>,
    log_counts: Vec<f64>,
    beta_min: f64,
    beta_max: f64,
    n: f64,
    integer: bool,
    log_concave: bool,
}

/// Stable summation of `exp(terms)`; returns `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

const LOG_CONCAVE_TOL: f64 = 1e-9;

impl GibbsInstance {
    /// Builds an instance from linear counts.
    pub fn new(support: Vec<f64>, counts: Vec<f64>, beta_min: f64, beta_max: f64) -> Result<Self> {
        if let Some(c) = counts.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return domain(format!("count {c} is not a finite nonnegative number"));
        }
        let log_counts = counts.iter().map(|c| c.ln()).collect();
        Self::from_log_counts(support, log_counts, beta_min, beta_max)
    }

    /// Builds an instance from natural-log counts; `-inf` marks a zero count.
    pub fn from_log_counts(
        support: Vec<f64>,
        log_counts: Vec<f64>,
        beta_min: f64,
        beta_max: f64,
    ) -> Result<Self> {
        if support.is_empty() || support.len() != log_counts.len() {
            return domain("support and counts must be nonempty and of equal length");
        }
        if !(beta_min.is_finite() && beta_max.is_finite() && beta_min <= beta_max) {
            return domain(format!("bad inverse-temperature range [{beta_min}, {beta_max}]"));
        }
        if support.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("support must be strictly increasing");
        }
        if log_counts.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return domain("log counts must be finite or -inf");
        }
        if log_counts.iter().all(|l| *l == f64::NEG_INFINITY) {
            return domain("all counts are zero");
        }
        let n = *support.last().unwrap();
        if support.iter().any(|&x| !(x == 0.0 || (x >= 1.0 && x.is_finite()))) {
            return domain("every support value must be 0 or lie in [1, n]");
        }
        let integer = support.iter().all(|x| x.fract() == 0.0);
        let mut inst = GibbsInstance {
            support,
            log_counts,
            beta_min,
            beta_max,
            n,
            integer,
            log_concave: false,
        };
        inst.log_concave = integer && inst.check_log_concave();
        Ok(inst)
    }

    /// Log count at every integer in `0..=n` (integer setting only).
    pub fn dense_log_counts(&self) -> Option<Vec<f64>> {
        if !self.integer {
            return None;
        }
        let mut dense = vec![f64::NEG_INFINITY; self.n as usize + 1];
        for (x, l) in self.support.iter().zip(&self.log_counts) {
            dense[*x as usize] = *l;
        }
        Some(dense)
    }

    fn check_log_concave(&self) -> bool {
        let dense = self.dense_log_counts().unwrap();
        let nz: Vec<usize> = (0..dense.len()).filter(|&k| dense[k] > f64::NEG_INFINITY).collect();
        let (first, last) = (nz[0], *nz.last().unwrap());
        if nz.len() != last - first + 1 {
            return false;
        }
        (first + 1..last).all(|k| 2.0 * dense[k] + LOG_CONCAVE_TOL >= dense[k - 1] + dense[k + 1])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }
    pub fn log_counts(&self) -> &[f64] {
        &self.log_counts
    }
    pub fn counts(&self) -> Vec<f64> {
        self.log_counts.iter().map(|l| l.exp()).collect()
    }
    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }
    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }
    /// Largest support value.
    pub fn n(&self) -> f64 {
        self.n
    }
    pub fn is_integer(&self) -> bool {
        self.integer
    }
    pub fn is_log_concave(&self) -> bool {
        self.log_concave
    }

    pub fn setting(&self) -> Setting {
        if self.log_concave {
            Setting::LogConcave
        } else if self.integer {
            Setting::Integer
        } else {
            Setting::Continuous
        }
    }

    /// Schedule slack parameter: `e` for log-concave instances, `1 + ln(n+1)` otherwise.
    pub fn rho(&self) -> f64 {
        rho(self.setting(), self.n)
    }

    /// Same instance on a different inverse-temperature range.
    pub fn with_range(&self, beta_min: f64, beta_max: f64) -> Result<Self> {
        Self::from_log_counts(self.support.clone(), self.log_counts.clone(), beta_min, beta_max)
    }

    fn index_of(&self, x: f64) -> Result<usize> {
        self.support
            .binary_search_by(|s| s.total_cmp(&x))
            .map_err(|_| Error::Domain(format!("{x} is not in the support")))
    }

    /// Natural log of the partition sum at `beta`.
    pub fn log_partition(&self, beta: f64) -> Result<f64> {
        if !beta.is_finite() {
            return domain("beta must be finite");
        }
        Ok(log_sum_exp(self.weights(beta)))
    }

    fn weights(&self, beta: f64) -> impl Iterator<Item = f64> + Clone + '_ {
        self.support.iter().zip(&self.log_counts).map(move |(x, l)| l + beta * x)
    }

    /// `ln Z(beta2) - ln Z(beta1)`.
    pub fn log_ratio(&self, beta1: f64, beta2: f64) -> Result<f64> {
        Ok(self.log_partition(beta2)? - self.log_partition(beta1)?)
    }

    /// Log of the partition ratio over the whole range.
    pub fn q(&self) -> f64 {
        self.log_ratio(self.beta_min, self.beta_max).unwrap()
    }

    /// Probability vector of the induced distribution at `beta`.
    pub fn induced_mu(&self, beta: f64) -> Result<Vec<f64>> {
        let z = self.log_partition(beta)?;
        Ok(self.weights(beta).map(|w| (w - z).exp()).collect())
    }

    /// Log-probability of the support point `x` at `beta`.
    pub fn log_mu_at(&self, beta: f64, x: f64) -> Result<f64> {
        let j = self.index_of(x)?;
        Ok(self.log_counts[j] + beta * x - self.log_partition(beta)?)
    }

    /// Mean energy at `beta`, which is the derivative of the log partition sum.
    pub fn mean_energy(&self, beta: f64) -> Result<f64> {
        let mu = self.induced_mu(beta)?;
        Ok(mu.iter().zip(&self.support).map(|(p, x)| p * x).sum())
    }

    /// Energy variance at `beta`, the second derivative of the log partition sum.
    pub fn energy_variance(&self, beta: f64) -> Result<f64> {
        let mu = self.induced_mu(beta)?;
        let m = self.mean_energy(beta)?;
        Ok(mu.iter().zip(&self.support).map(|(p, x)| p * (x - m) * (x - m)).sum())
    }

    /// Log of the mean-energy ratio between the range endpoints.
    pub fn theta(&self) -> Result<f64> {
        Ok((self.mean_energy(self.beta_max)? / self.mean_energy(self.beta_min)?).ln())
    }

    /// Largest probability the point `x` attains over the range, and where.
    pub fn delta_max_at(&self, x: f64) -> Result<(f64, f64)> {
        let j = self.index_of(x)?;
        if self.log_counts[j] == f64::NEG_INFINITY {
            return Ok((0.0, self.beta_min));
        }
        // log mu_beta(x) is concave in beta, so ternary search finds its maximum.
        let f = |b: f64| self.log_counts[j] + b * x - self.log_partition(b).unwrap();
        let (mut lo, mut hi) = (self.beta_min, self.beta_max);
        for _ in 0..200 {
            if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if f(m1) < f(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let mut best = (f(self.beta_min), self.beta_min);
        for b in [self.beta_max, 0.5 * (lo + hi)] {
            let v = f(b);
            if v > best.0 {
                best = (v, b);
            }
        }
        Ok((best.0.exp(), best.1))
    }

    /// Largest probability the point `x` attains over the range.
    pub fn delta_max(&self, x: f64) -> Result<f64> {
        Ok(self.delta_max_at(x)?.0)
    }

    /// Target quantity of count estimation: `mu_{beta_min}` at every support point.
    pub fn pi(&self) -> Vec<f64> {
        self.induced_mu(self.beta_min).unwrap()
    }

    pub fn to_json(&self) -> InstanceJson {
        InstanceJson {
            support: self.support.clone(),
            counts: None,
            log_counts: Some(self.log_counts.iter().map(|l| finite_or_null(*l)).collect()),
            beta_min: self.beta_min,
            beta_max: self.beta_max,
        }
    }

    /// Canonical JSON text: sorted keys and shortest round-trip floats.
    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self.to_json()).unwrap();
        serde_json::to_string(&v).unwrap()
    }

    pub fn from_json(j: &InstanceJson) -> Result<Self> {
        match (&j.counts, &j.log_counts) {
            (Some(c), None) => Self::new(j.support.clone(), c.clone(), j.beta_min, j.beta_max),
            (None, Some(l)) => Self::from_log_counts(
                j.support.clone(),
                l.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
                j.beta_min,
                j.beta_max,
            ),
            _ => domain("exactly one of counts and log_counts must be given"),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

fn finite_or_null(l: f64) -> Option<f64> {
    if l.is_finite() {
        Some(l)
    } else {
        None
    }
}

/// Wire format of an instance; `null` in `log_counts` is a zero count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceJson {
    pub support: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_counts: Option<Vec<Option<f64>>>,
    pub beta_min: f64,
    pub beta_max: f64,
}

/// Schedule slack parameter for a setting with largest energy `n`.
pub fn rho(setting: Setting, n: f64) -> f64 {
    match setting {
        Setting::LogConcave => std::f64::consts::E,
        _ => 1.0 + (n + 1.0).ln(),
    }
}

/// Upper range end at which the log partition ratio from `beta_min` equals `q_target`.
pub fn find_betamax(support: &[f64], log_counts: &[f64], beta_min: f64, q_target: f64) -> Result<f64> {
    if !(q_target >= 0.0 && q_target.is_finite()) {
        return domain("q_target must be finite and nonnegative");
    }
    let nz: Vec<usize> = (0..support.len()).filter(|&j| log_counts[j] > f64::NEG_INFINITY).collect();
    if nz.len() < 2 {
        return domain("the ratio is constant with fewer than two nonzero counts");
    }
    // The ratio is increasing and unbounded with two distinct nonzero energies.
    let z = |b: f64| log_sum_exp(nz.iter().map(|&j| log_counts[j] + b * support[j]));
    let z0 = z(beta_min);
    if q_target == 0.0 {
        return Ok(beta_min);
    }
    let (mut lo, mut step) = (beta_min, 1.0);
    let mut hi = beta_min + step;
    while z(hi) - z0 < q_target {
        lo = hi;
        step *= 2.0;
        hi = beta_min + step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if z(mid) - z0 < q_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
