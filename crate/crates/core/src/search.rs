//! Noisy binary search for an inverse temperature at which a tail probability crosses a level.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gibbs::GibbsInstance;
use crate::oracle::OracleHandle;
use crate::profile::ConstantsProfile;
use crate::sampling::{sample_empirical, SampleSpec};

/// Exact evaluation of the search target predicate at `beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaWitness {
    pub beta: f64,
    pub chi: f64,
    pub tau: f64,
    pub bounds: (f64, f64),
    /// (lower tail condition, upper tail condition).
    pub checks: (bool, bool),
}

impl LambdaWitness {
    /// Checks both tail conditions of `beta` with the exact law of `inst`.
    pub fn evaluate(inst: &GibbsInstance, beta: f64, bounds: (f64, f64), chi: f64, tau: f64) -> Result<Self> {
        let mu = inst.induced_mu(beta)?;
        let below: f64 = inst.support().iter().zip(&mu).filter(|(x, _)| **x < chi).map(|p| p.1).sum();
        let above: f64 = inst.support().iter().zip(&mu).filter(|(x, _)| **x >= chi).map(|p| p.1).sum();
        Ok(LambdaWitness {
            beta,
            chi,
            tau,
            bounds,
            checks: (beta == bounds.0 || below >= tau, beta == bounds.1 || above >= tau),
        })
    }

    pub fn is_member(&self) -> bool {
        self.checks.0 && self.checks.1
    }
}

/// Gap index in `-1..=n` whose interval `[x_v, x_{v+1}]` meets `[alpha - nu, alpha + nu]`,
/// for unknown nondecreasing coin means `x_0..x_n` with `x_{-1} = 0` and `x_{n+1} = 1`.
///
/// Keeps a posterior over the `n + 2` gaps, flips the coin at the weighted median and
/// reweights both sides by the likelihood of the outcome.
pub fn noisy_binary_search(
    coin: &mut dyn FnMut(usize) -> Result<bool>,
    n: usize,
    alpha: f64,
    nu: f64,
    profile: &ConstantsProfile,
) -> Result<i64> {
    if !(alpha > 0.0 && alpha < 1.0 && nu > 0.0 && nu < 1.0) {
        return domain("noisy binary search needs alpha and nu in (0, 1)");
    }
    let gaps = n + 2;
    let hi = (alpha + nu).min(1.0 - 1e-12);
    let lo = (alpha - nu).max(1e-12);
    let budget = (profile.search_budget * (gaps as f64).ln() / (nu * nu)).ceil() as u64;
    // Slot g holds gap g - 1.
    let mut w = vec![1.0 / gaps as f64; gaps];
    for _ in 0..budget.max(1) {
        if w.iter().any(|&m| m >= profile.search_halt) {
            break;
        }
        // Query the boundary x_i that splits the posterior most evenly.
        let mut best = (f64::INFINITY, 0);
        let mut left = 0.0;
        for i in 0..=n {
            left += w[i];
            let d = (left - 0.5).abs();
            if d < best.0 {
                best = (d, i);
            }
        }
        let i = best.1;
        let heads = coin(i)?;
        let (l_left, l_right) = if heads { (hi, lo) } else { (1.0 - hi, 1.0 - lo) };
        for (g, m) in w.iter_mut().enumerate() {
            *m *= if g <= i { l_left } else { l_right };
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|m| *m /= total);
    }
    let mode = (0..gaps).fold(0, |b, g| if w[g] > w[b] { g } else { b });
    Ok(mode as i64 - 1)
}

/// Log-odds margin that sets the grid spacing of the quantized search.
fn grid_margin(tau_p: f64) -> f64 {
    ((1.0 - tau_p) * (1.0 + 2.0 * tau_p) / (tau_p * (3.0 - 2.0 * tau_p))).ln()
}

/// Number of grid steps the quantized search uses on `[left, right]`.
pub fn grid_size(n: f64, left: f64, right: f64, tau_p: f64) -> usize {
    let steps = (n * (right - left) / (2.0 * grid_margin(tau_p))).ceil();
    if steps.is_finite() {
        (steps as usize).max(1)
    } else {
        usize::MAX / 4
    }
}

/// Inverse temperature in `[left, right]` where the upper-tail mass at `chi` is near one half.
pub fn quantized_search(
    oracle: &mut OracleHandle,
    left: f64,
    right: f64,
    chi: f64,
    tau_p: f64,
    profile: &ConstantsProfile,
) -> Result<f64> {
    let (beta_min, beta_max, n) = {
        let d = oracle.domain();
        (d.beta_min, d.beta_max, d.n)
    };
    if !(left <= right && left >= beta_min && right <= beta_max) {
        return domain(format!("bad search window [{left}, {right}]"));
    }
    if !(tau_p > 0.0 && tau_p < 0.5) {
        return domain("tau' must lie in (0, 1/2)");
    }
    if left == right {
        return Ok(left);
    }
    let steps = grid_size(n, left, right, tau_p);
    if steps > 1 << 40 {
        return domain("search grid too fine");
    }
    let at = |i: usize| left + (right - left) * i as f64 / steps as f64;
    let mut coin = |i: usize| -> Result<bool> { Ok(oracle.draw(at(i))? >= chi) };
    let v = noisy_binary_search(&mut coin, steps, 0.5, (0.5 - tau_p) / 2.0, profile)?;
    Ok(if v < 0 {
        left
    } else if v as usize >= steps {
        right
    } else {
        let v = v as usize;
        0.5 * (at(v) + at(v + 1))
    })
}

/// One round of the back-off loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRound {
    pub round: u32,
    pub window_left: f64,
    pub candidate: f64,
    pub accepted: bool,
    /// Smallest inverse temperature queried during the round, when queries are recorded.
    pub min_query: Option<f64>,
}

/// Result of [`binary_search_traced`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub beta: f64,
    pub rounds: Vec<SearchRound>,
}

/// Inverse temperature in `[left, right]` with tail masses at `chi` both at least `tau`,
/// unless clamped to the end of the window whose condition is waived.
pub fn binary_search(
    oracle: &mut OracleHandle,
    left: f64,
    right: f64,
    chi: f64,
    gamma: f64,
    tau: f64,
    profile: &ConstantsProfile,
) -> Result<f64> {
    Ok(binary_search_traced(oracle, left, right, chi, gamma, tau, profile)?.beta)
}

const MAX_ROUNDS: u32 = 64;

/// [`binary_search`] with the per-round record of windows and candidates.
pub fn binary_search_traced(
    oracle: &mut OracleHandle,
    left: f64,
    right: f64,
    chi: f64,
    gamma: f64,
    tau: f64,
    profile: &ConstantsProfile,
) -> Result<SearchOutcome> {
    if !(left < right) {
        return domain(format!("search interval [{left}, {right}] is empty"));
    }
    if !(gamma > 0.0 && gamma < 1.0 && tau > 0.0 && tau < 0.5) {
        return domain("binary search needs gamma in (0, 1) and tau in (0, 1/2)");
    }
    let n = oracle.domain().n.max(2.0);
    let first = (n / gamma).log2().log2().ceil().max(0.0) as u32;
    let tau_p = (0.5 + tau) / 2.0;
    let threshold = (tau * tau_p).sqrt();
    let mut rounds = Vec::new();
    for round in first..first + MAX_ROUNDS {
        let reach = 2f64.powf(2f64.powi(round as i32));
        let window_left = left.max(right - reach);
        let log_start = oracle.query_log().len();
        let beta = quantized_search(oracle, window_left, right, chi, tau_p, profile)?;
        let spec = SampleSpec::Calibrated {
            eps: 0.5 * (tau_p / tau).ln(),
            gamma: gamma / 2f64.powi((round - first + 2) as i32),
            p0: tau,
        };
        let sample = sample_empirical(oracle, beta, spec, profile)?;
        let below = sample.mass_below(chi);
        let accepted = (beta == left || below >= threshold) && (beta == right || 1.0 - below >= threshold);
        let min_query = oracle.query_log()[log_start..].iter().copied().reduce(f64::min);
        rounds.push(SearchRound {
            round,
            window_left,
            candidate: beta,
            accepted,
            min_query,
        });
        if accepted {
            return Ok(SearchOutcome { beta, rounds });
        }
    }
    Err(Error::GiveUp(MAX_ROUNDS as usize))
}
