//! Calibrated empirical sampling, the shared count-estimate formula, and the
//! median-amplified estimator of telescoping products.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::oracle::OracleHandle;
use crate::profile::ConstantsProfile;
use crate::rng::StreamRng;

/// Sample size giving the two-sided accuracy guarantee for every probability at least `p0`.
pub fn calibrated_sample_size(eps: f64, gamma: f64, p0: f64, profile: &ConstantsProfile) -> Result<u64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return domain(format!("eps = {eps} must be positive"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("gamma = {gamma} must lie in (0, 1)"));
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return domain(format!("p0 = {p0} must lie in (0, 1]"));
    }
    let gap = -(-eps).exp_m1();
    let n = profile.calibration * eps.exp() * (4.0 / gamma).ln() / (gap * gap * p0);
    if !(n < 1.8e19) {
        return domain(format!("sample size {n:e} is beyond the supported range"));
    }
    Ok(n.ceil() as u64)
}

/// How many draws to take.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleSpec {
    Draws(u64),
    Calibrated { eps: f64, gamma: f64, p0: f64 },
}

/// Calibration parameters a sample was drawn under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub eps: f64,
    pub gamma: f64,
    pub p0: f64,
}

/// Frequency table of `draws` oracle samples at one inverse temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub beta: f64,
    pub draws: u64,
    /// Sorted `(energy, count)` pairs with nonzero counts.
    pub freq: Vec<(f64, u64)>,
    pub calibration: Option<Calibration>,
}

impl EmpiricalDistribution {
    pub fn count(&self, x: f64) -> u64 {
        match self.freq.binary_search_by(|p| p.0.total_cmp(&x)) {
            Ok(j) => self.freq[j].1,
            Err(_) => 0,
        }
    }

    /// Empirical probability of the energy `x`.
    pub fn prob(&self, x: f64) -> f64 {
        self.count(x) as f64 / self.draws as f64
    }

    /// Empirical probability of the energies satisfying `pred`.
    pub fn mass(&self, pred: impl Fn(f64) -> bool) -> f64 {
        let c: u64 = self.freq.iter().filter(|p| pred(p.0)).map(|p| p.1).sum();
        c as f64 / self.draws as f64
    }

    /// Empirical probability of energies below `chi`.
    pub fn mass_below(&self, chi: f64) -> f64 {
        self.mass(|x| x < chi)
    }

    /// Empirical mean of `f` over the sample.
    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.freq.iter().map(|&(x, c)| c as f64 * f(x)).sum::<f64>() / self.draws as f64
    }
}

/// Draws a sample at `beta` sized by `spec`.
pub fn sample_empirical(
    oracle: &mut OracleHandle,
    beta: f64,
    spec: SampleSpec,
    profile: &ConstantsProfile,
) -> Result<EmpiricalDistribution> {
    let (draws, calibration) = match spec {
        SampleSpec::Draws(n) => (n, None),
        SampleSpec::Calibrated { eps, gamma, p0 } => (
            calibrated_sample_size(eps, gamma, p0, profile)?,
            Some(Calibration { eps, gamma, p0 }),
        ),
    };
    if draws == 0 {
        return domain("a sample needs at least one draw");
    }
    let freq = oracle.draw_batch(beta, draws)?;
    Ok(EmpiricalDistribution {
        beta,
        draws,
        freq,
        calibration,
    })
}

/// Whether `p_hat` meets both accuracy requirements of a calibrated sample for true value `p`.
pub fn well_estimates(p_hat: f64, p: f64, eps: f64, p0: f64) -> bool {
    let additive = (p_hat - p).abs() <= eps * (p + p0);
    let relative = if p >= (-eps).exp() * p0 {
        p_hat >= (-eps).exp() * p && p_hat <= eps.exp() * p
    } else {
        p_hat < p0
    };
    additive && relative
}

/// Count estimate at `x` from a sample at `alpha` and its ratio estimate, with error radius.
#[allow(clippy::too_many_arguments)]
pub fn estimate_pi(
    x: f64,
    alpha: f64,
    nu: f64,
    q_hat_alpha: f64,
    mu_hat_alpha_x: f64,
    beta_min: f64,
    eps: f64,
    delta: f64,
) -> (f64, f64) {
    let scale = q_hat_alpha * ((beta_min - alpha) * x).exp();
    let scale = if scale.is_nan() { 0.0 } else { scale };
    let pi_hat = if mu_hat_alpha_x == 0.0 { 0.0 } else { scale * mu_hat_alpha_x };
    let u = 0.5 * scale * eps * (delta * nu + mu_hat_alpha_x);
    (pi_hat, u)
}

/// Nonnegative random variables `X_1..X_N` the product estimator draws from.
pub trait ProductSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean of `r` fresh draws of `X_i`, for `i` in `1..=len()`.
    fn sample_mean(&mut self, i: usize, r: u64) -> Result<f64>;
}

/// Sources given by closures over a shared random stream.
pub struct FnSources<F> {
    count: usize,
    draw: F,
    rng: StreamRng,
}

impl<F: FnMut(usize, &mut StreamRng) -> f64> FnSources<F> {
    pub fn new(count: usize, rng: StreamRng, draw: F) -> Self {
        FnSources { count, draw, rng }
    }
}

impl<F: FnMut(usize, &mut StreamRng) -> f64> ProductSource for FnSources<F> {
    fn len(&self) -> usize {
        self.count
    }

    fn sample_mean(&mut self, i: usize, r: u64) -> Result<f64> {
        let mut s = 0.0;
        for _ in 0..r {
            let v = (self.draw)(i, &mut self.rng);
            if !(v >= 0.0) {
                return domain(format!("source {i} produced {v}"));
            }
            s += v;
        }
        Ok(s / r as f64)
    }
}

/// Independent Bernoulli sources with the given means.
pub struct BernoulliSources {
    pub means: Vec<f64>,
    pub rng: StreamRng,
}

impl ProductSource for BernoulliSources {
    fn len(&self) -> usize {
        self.means.len()
    }

    fn sample_mean(&mut self, i: usize, r: u64) -> Result<f64> {
        let p = self.means[i - 1];
        let hits = rand_distr::Distribution::sample(&rand_distr::Binomial::new(r, p).unwrap(), &mut self.rng);
        Ok(hits as f64 / r as f64)
    }
}

/// Per-index median estimates of the running products `prod_{j<=i} E[X_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductEstimates {
    /// Linear estimates; entry 0 is exactly 1. May overflow to infinity where the logs do not.
    pub values: Vec<f64>,
    /// Natural logs of the estimates.
    pub log_values: Vec<f64>,
    pub alpha: f64,
    pub eps: f64,
    pub gamma: f64,
    pub draws_per_source: u64,
    pub trials: usize,
    pub total_draws: u64,
}

const LOG_SWITCH_HIGH: f64 = 1e100;
const LOG_SWITCH_LOW: f64 = 1e-100;

/// Draws per source and trial of the product estimator.
pub fn product_draws(alpha: f64, eps: f64, profile: &ConstantsProfile) -> u64 {
    (profile.product_draws * alpha / (eps * eps)).ceil().max(1.0) as u64
}

/// Odd number of median trials for failure probability `gamma`.
pub fn median_trials(gamma: f64, profile: &ConstantsProfile) -> usize {
    let k = (profile.median_trials * (1.0 / gamma).ln()).ceil().max(1.0) as usize;
    if k % 2 == 0 {
        k + 1
    } else {
        k
    }
}

fn in_linear_range(v: f64) -> bool {
    v == 0.0 || (LOG_SWITCH_LOW..=LOG_SWITCH_HIGH).contains(&v)
}

/// Running products of one trial with `r` draws per source; entry 0 is 1.
///
/// Each entry is `(log, linear)`; `linear` is kept while all means and products stay in
/// a safe range and is `None` after the trial switched to the log domain.
pub fn product_trial(sources: &mut dyn ProductSource, r: u64) -> Result<Vec<(f64, Option<f64>)>> {
    let mut out = Vec::with_capacity(sources.len() + 1);
    out.push((0.0, Some(1.0)));
    for i in 1..=sources.len() {
        let m = sources.sample_mean(i, r)?;
        if !(m >= 0.0) {
            return domain(format!("source {i} has a negative sample mean"));
        }
        let (prev_log, prev_lin) = out[i - 1];
        let lin = prev_lin
            .filter(|_| in_linear_range(m))
            .map(|p| p * m)
            .filter(|p| in_linear_range(*p));
        let log = match lin {
            Some(p) => p.ln(),
            None => prev_log + m.ln(),
        };
        out.push((log, lin));
    }
    Ok(out)
}

/// Median-of-trials estimates of every running product of the sources' means.
pub fn estimate_products(
    sources: &mut dyn ProductSource,
    alpha: f64,
    eps: f64,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<ProductEstimates> {
    if !(alpha > 0.0 && eps > 0.0 && gamma > 0.0 && gamma < 1.0) {
        return domain("estimate_products needs alpha > 0, eps > 0 and gamma in (0, 1)");
    }
    let r = product_draws(alpha, eps, profile);
    let k = median_trials(gamma, profile);
    let n = sources.len();
    let mut trials = Vec::with_capacity(k);
    for _ in 0..k {
        trials.push(product_trial(sources, r)?);
    }
    let mut values = vec![1.0; n + 1];
    let mut log_values = vec![0.0; n + 1];
    let mut column = Vec::with_capacity(k);
    for i in 1..=n {
        column.clear();
        column.extend(trials.iter().map(|t| t[i]));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (log, lin) = column[k / 2];
        log_values[i] = log;
        values[i] = lin.unwrap_or_else(|| log.exp());
    }
    Ok(ProductEstimates {
        values,
        log_values,
        alpha,
        eps,
        gamma,
        draws_per_source: r,
        trials: k,
        total_draws: r * k as u64 * n as u64,
    })
}

/// Uniform draw from the open unit interval.
pub fn open01(rng: &mut StreamRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Rejects a median entry that is not a usable positive estimate.
pub fn require_positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{what} estimate is {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::GibbsInstance;
    use crate::oracle::exact_oracle;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn paper() -> ConstantsProfile {
        ConstantsProfile::paper()
    }

    fn inst_a() -> GibbsInstance {
        GibbsInstance::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0], 0.0, 1.0).unwrap()
    }

    #[test]
    fn sample_size_values() {
        assert_eq!(calibrated_sample_size(0.5, 0.1, 0.1, &paper()).unwrap(), 1179);
        assert_eq!(calibrated_sample_size(1.0, 0.5, 1.0, &paper()).unwrap(), 43);
        let base = calibrated_sample_size(0.3, 0.1, 0.1, &paper()).unwrap();
        assert!(calibrated_sample_size(0.4, 0.1, 0.1, &paper()).unwrap() <= base);
        assert!(calibrated_sample_size(0.3, 0.2, 0.1, &paper()).unwrap() <= base);
        assert!(calibrated_sample_size(0.3, 0.1, 0.2, &paper()).unwrap() <= base);
        assert!(calibrated_sample_size(0.0, 0.1, 0.1, &paper()).is_err());
        assert!(calibrated_sample_size(0.1, 0.1, 0.0, &paper()).is_err());
    }

    #[test]
    fn empirical_sampling() {
        let mut o = exact_oracle(&inst_a(), 4);
        let s = sample_empirical(&mut o, 0.0, SampleSpec::Draws(400_000), &paper()).unwrap();
        assert!((0.495..=0.505).contains(&s.prob(1.0)));
        assert_eq!(o.cost(), 400_000);
        assert_eq!(s.freq.iter().map(|p| p.1).sum::<u64>(), s.draws);
        let spec = SampleSpec::Calibrated { eps: 0.5, gamma: 0.1, p0: 0.1 };
        let s = sample_empirical(&mut o, 0.0, spec, &paper()).unwrap();
        assert_eq!(s.draws, 1179);
        assert_eq!(s.calibration.unwrap().p0, 0.1);
        assert!(sample_empirical(&mut o, 0.0, SampleSpec::Draws(0), &paper()).is_err());
        let point = GibbsInstance::new(vec![2.0], vec![1.0], 0.0, 1.0).unwrap();
        let mut p = exact_oracle(&point, 1);
        let s = sample_empirical(&mut p, 0.5, SampleSpec::Draws(77), &paper()).unwrap();
        assert_eq!(s.freq, vec![(2.0, 77)]);
    }

    #[test]
    fn well_estimate_cases() {
        assert!(well_estimates(0.3, 0.3, 0.1, 0.1));
        assert!(!well_estimates(0.62, 0.5, 0.2, 0.1));
        // Below the threshold both bounds still apply: 0.05 is under p0 but misses the additive bound.
        assert!(well_estimates(0.025, 0.01, 0.2, 0.1));
        assert!(!well_estimates(0.05, 0.01, 0.2, 0.1));
    }

    #[test]
    fn well_estimates_hold_for_calibrated_samples() {
        let inst = inst_a();
        let p = inst.induced_mu(0.0).unwrap()[1];
        let spec = SampleSpec::Calibrated { eps: 0.3, gamma: 0.2, p0: 0.2 };
        let good = (0..500)
            .filter(|&s| {
                let mut o = exact_oracle(&inst, s);
                let e = sample_empirical(&mut o, 0.0, spec, &paper()).unwrap();
                well_estimates(e.prob(1.0), p, 0.3, 0.2)
            })
            .count();
        assert!(good as f64 >= 0.8 * 500.0);
    }

    #[test]
    fn pi_formula() {
        let (pi, u) = estimate_pi(1.0, 1.0, 0.25, 2.0, 0.5, 0.0, 0.1, 0.05);
        assert_abs_diff_eq!(pi, 0.367879, epsilon = 1e-6);
        assert_abs_diff_eq!(u, 0.1 * (-1f64).exp() * 0.5125, epsilon = 1e-15);
        let (pi, u) = estimate_pi(1.0, 1.0, 0.25, 2.0, 0.0, 0.0, 0.1, 0.05);
        assert_eq!(pi, 0.0);
        assert_abs_diff_eq!(u, 0.5 * 2.0 * (-1f64).exp() * 0.1 * 0.05 * 0.25, epsilon = 1e-15);
        let (pi, _) = estimate_pi(3.0, 0.0, 0.25, 2.0, 0.3, 0.0, 0.1, 0.05);
        assert_eq!(pi, 0.6);
    }

    #[test]
    fn constant_and_empty_products() {
        let mut c = FnSources::new(3, stream(1, "c"), |_, _| 2.0);
        let e = estimate_products(&mut c, 1.0, 0.3, 0.1, &paper()).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 4.0, 8.0]);
        let mut none = FnSources::new(0, stream(1, "c"), |_, _| 2.0);
        let e = estimate_products(&mut none, 1.0, 0.3, 0.1, &paper()).unwrap();
        assert_eq!(e.values, vec![1.0]);
        let mut neg = FnSources::new(1, stream(1, "c"), |_, _| -1.0);
        assert!(estimate_products(&mut neg, 1.0, 0.3, 0.1, &paper()).is_err());
    }

    #[test]
    fn huge_means_use_logs() {
        let mut c = FnSources::new(4, stream(1, "c"), |_, _| 1e200);
        let e = estimate_products(&mut c, 1.0, 0.3, 0.1, &paper()).unwrap();
        assert_abs_diff_eq!(e.log_values[4], 800.0 * 10f64.ln(), epsilon = 1e-9);
        assert_eq!(e.values[4], f64::INFINITY);
    }

    #[test]
    fn bernoulli_pair_coverage() {
        let ok = (0..200)
            .filter(|&s| {
                let mut b = BernoulliSources { means: vec![0.5, 0.5], rng: stream(s, "b") };
                let e = estimate_products(&mut b, 2.0, 0.25, 0.1, &paper()).unwrap();
                (e.log_values[2] - 0.25f64.ln()).abs() <= 0.25
            })
            .count();
        assert!(ok >= 180, "{ok}");
    }

    #[test]
    fn relative_variance_of_one_trial() {
        // Y = prod of r-sample means of Bernoulli(p); its relative variance is at most e^{alpha/r}.
        let means = [0.6, 0.8, 0.7];
        let alpha: f64 = means.iter().map(|p| 1.0 / p - 1.0).sum();
        let eps = 0.5;
        let r = product_draws(alpha, eps, &paper());
        let mut b = BernoulliSources { means: means.to_vec(), rng: stream(3, "v") };
        let runs = 10_000;
        let ys: Vec<f64> = (0..runs).map(|_| product_trial(&mut b, r).unwrap()[3].1.unwrap()).collect();
        let mean = ys.iter().sum::<f64>() / runs as f64;
        let m2 = ys.iter().map(|y| y * y).sum::<f64>() / runs as f64;
        let rel = m2 / (mean * mean);
        let sd = (ys.iter().map(|y| (y * y / (mean * mean) - rel).powi(2)).sum::<f64>() / runs as f64).sqrt();
        let se = sd / (runs as f64).sqrt();
        assert!(rel <= (alpha / r as f64).exp() * (1.0 + 5.0 * se), "{rel}");
        assert!(rel <= (eps * eps / 100.0).exp() * (1.0 + 5.0 * se));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scale_equivariance(seed in 0u64..1000, c in 0.1f64..10.0, at in 1usize..4) {
            let means = [0.3, 0.6, 0.9];
            let run = |scale: f64| {
                let mut s = FnSources::new(3, stream(seed, "eq"), move |i, r: &mut StreamRng| {
                    let v = if r.random::<f64>() < means[i - 1] { 1.0 } else { 0.0 };
                    if i == at { v * scale } else { v }
                });
                estimate_products(&mut s, 3.0, 0.5, 0.2, &ConstantsProfile::desk()).unwrap()
            };
            let (a, b) = (run(1.0), run(c));
            for j in 0..=3 {
                let want = if j >= at { a.log_values[j] + c.ln() } else { a.log_values[j] };
                prop_assert!((b.log_values[j] - want).abs() < 1e-9);
            }
        }
    }
}
