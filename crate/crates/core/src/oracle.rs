//! Sampling oracles and the cost-counting handle every estimator draws through.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gibbs::{GibbsInstance, Setting};
use crate::rng::{self, StreamRng};

/// What an estimator may know about the distribution behind an oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Largest possible energy.
    pub n: f64,
    /// Candidate energies; `0..=n` in the integer settings.
    pub support: Vec<f64>,
    pub setting: Setting,
}

impl Domain {
    pub fn of(inst: &GibbsInstance) -> Self {
        let support = if inst.is_integer() {
            (0..=inst.n() as usize).map(|k| k as f64).collect()
        } else {
            inst.support().to_vec()
        };
        Domain {
            beta_min: inst.beta_min(),
            beta_max: inst.beta_max(),
            n: inst.n(),
            support,
            setting: inst.setting(),
        }
    }

    pub fn is_integer(&self) -> bool {
        self.setting != Setting::Continuous
    }

    /// Largest energy as an index (integer settings).
    pub fn n_int(&self) -> usize {
        self.n as usize
    }

    pub fn rho(&self) -> f64 {
        crate::gibbs::rho(self.setting, self.n)
    }
}

/// A source of draws from the induced distribution at a requested inverse temperature.
pub trait Sampler: Send {
    fn domain(&self) -> &Domain;

    fn sample(&mut self, beta: f64, rng: &mut StreamRng) -> Result<f64>;

    /// `n` draws aggregated as `(energy, multiplicity)` pairs.
    fn sample_batch(&mut self, beta: f64, n: u64, rng: &mut StreamRng) -> Result<Vec<(f64, u64)>> {
        let mut out = Vec::new();
        for _ in 0..n {
            out.push((self.sample(beta, rng)?, 1));
        }
        Ok(aggregate(out))
    }

    /// Exact probability vector over `domain().support` at `beta`, when known.
    fn pmf(&self, _beta: f64) -> Option<Vec<f64>> {
        None
    }

    fn fork(&self) -> Result<Box<dyn Sampler>>;
}

/// Sorts `(energy, count)` pairs and merges equal energies.
pub fn aggregate(mut pairs: Vec<(f64, u64)>) -> Vec<(f64, u64)> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, u64)> = Vec::with_capacity(pairs.len());
    for (x, c) in pairs {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 += c,
            _ => out.push((x, c)),
        }
    }
    out
}

/// Multinomial draw of `n` trials over `probs`, by sequential binomials.
pub fn multinomial(probs: &[f64], n: u64, rng: &mut StreamRng) -> Vec<u64> {
    let mut counts = vec![0; probs.len()];
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    for (j, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == probs.len() || mass <= p {
            counts[j] = left;
            break;
        }
        let frac = (p / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, frac).unwrap().sample(rng);
        counts[j] = k;
        left -= k;
        mass -= p;
    }
    counts
}

fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Exact sampler of an explicit instance.
#[derive(Clone)]
pub struct ExactSampler {
    inst: GibbsInstance,
    domain: Domain,
    cached_beta: f64,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl ExactSampler {
    pub fn new(inst: GibbsInstance) -> Self {
        ExactSampler {
            domain: Domain::of(&inst),
            inst,
            cached_beta: f64::NAN,
            probs: Vec::new(),
            cdf: Vec::new(),
        }
    }

    fn prepare(&mut self, beta: f64) -> Result<()> {
        if beta == self.cached_beta {
            return Ok(());
        }
        if !beta.is_finite() {
            return domain("beta must be finite");
        }
        // In place: this runs on every draw when the temperature changes between draws.
        let (xs, ls) = (self.inst.support(), self.inst.log_counts());
        self.probs.clear();
        self.probs.extend(xs.iter().zip(ls).map(|(x, l)| l + beta * x));
        let m = self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for p in &mut self.probs {
            *p = (*p - m).exp();
            total += *p;
        }
        self.cdf.clear();
        let mut acc = 0.0;
        for p in &mut self.probs {
            *p /= total;
            acc += *p;
            self.cdf.push(acc);
        }
        self.cached_beta = beta;
        Ok(())
    }
}

impl Sampler for ExactSampler {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn sample(&mut self, beta: f64, rng: &mut StreamRng) -> Result<f64> {
        self.prepare(beta)?;
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        Ok(self.inst.support()[inverse_cdf(&self.cdf, u)])
    }

    fn sample_batch(&mut self, beta: f64, n: u64, rng: &mut StreamRng) -> Result<Vec<(f64, u64)>> {
        self.prepare(beta)?;
        let counts = multinomial(&self.probs, n, rng);
        Ok(self
            .inst
            .support()
            .iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(x, c)| (*x, c))
            .collect())
    }

    fn pmf(&self, beta: f64) -> Option<Vec<f64>> {
        let mu = self.inst.induced_mu(beta).ok()?;
        let mut dense = vec![0.0; self.domain.support.len()];
        for (x, p) in self.inst.support().iter().zip(mu) {
            let j = self.domain.support.binary_search_by(|s| s.total_cmp(x)).ok()?;
            dense[j] = p;
        }
        Some(dense)
    }

    fn fork(&self) -> Result<Box<dyn Sampler>> {
        Ok(Box::new(self.clone()))
    }
}

/// Direction in which a perturbed oracle moves probability mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    /// From the lowest-energy point to the highest.
    MassShiftUp,
    /// From the highest-energy point to the lowest.
    MassShiftDown,
    /// Between a fixed random ordered pair of support points.
    RandomPair,
}

impl std::str::FromStr for ShiftMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" | "mass-shift-up" => Ok(ShiftMode::MassShiftUp),
            "down" | "mass-shift-down" => Ok(ShiftMode::MassShiftDown),
            "pair" | "random-pair" => Ok(ShiftMode::RandomPair),
            _ => domain(format!("unknown shift mode {s}")),
        }
    }
}

/// Oracle whose law is a fixed total-variation perturbation of an exact one.
pub struct PerturbedSampler {
    base: Box<dyn Sampler>,
    d_tv: f64,
    from: usize,
    to: usize,
    clipped: Arc<AtomicU64>,
    cached_beta: f64,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PerturbedSampler {
    /// Perturbed law at `beta` over the base domain support.
    pub fn perturbed_pmf(&self, beta: f64) -> Result<Vec<f64>> {
        let mut p = self
            .base
            .pmf(beta)
            .ok_or_else(|| Error::Oracle("base oracle has no explicit law".into()))?;
        let (from, to) = (self.from, self.to);
        if from != to {
            let moved = if self.d_tv > p[from] {
                self.clipped.fetch_add(1, Ordering::Relaxed);
                p[from]
            } else {
                self.d_tv
            };
            p[from] -= moved;
            p[to] += moved;
        }
        Ok(p)
    }

    /// Number of queries at which the requested shift exceeded the available mass.
    pub fn clip_count(&self) -> u64 {
        self.clipped.load(Ordering::Relaxed)
    }

    fn prepare(&mut self, beta: f64) -> Result<()> {
        if beta != self.cached_beta {
            self.probs = self.perturbed_pmf(beta)?;
            let mut acc = 0.0;
            self.cdf = self
                .probs
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            self.cached_beta = beta;
        }
        Ok(())
    }
}

impl Sampler for PerturbedSampler {
    fn domain(&self) -> &Domain {
        self.base.domain()
    }

    fn sample(&mut self, beta: f64, rng: &mut StreamRng) -> Result<f64> {
        if !beta.is_finite() {
            return domain("beta must be finite");
        }
        self.prepare(beta)?;
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        Ok(self.domain().support[inverse_cdf(&self.cdf, u)])
    }

    fn sample_batch(&mut self, beta: f64, n: u64, rng: &mut StreamRng) -> Result<Vec<(f64, u64)>> {
        if !beta.is_finite() {
            return domain("beta must be finite");
        }
        self.prepare(beta)?;
        let counts = multinomial(&self.probs, n, rng);
        let support = &self.base.domain().support;
        Ok(support
            .iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(x, c)| (*x, c))
            .collect())
    }

    fn pmf(&self, beta: f64) -> Option<Vec<f64>> {
        self.perturbed_pmf(beta).ok()
    }

    fn fork(&self) -> Result<Box<dyn Sampler>> {
        Ok(Box::new(PerturbedSampler {
            base: self.base.fork()?,
            d_tv: self.d_tv,
            from: self.from,
            to: self.to,
            clipped: self.clipped.clone(),
            cached_beta: f64::NAN,
            probs: Vec::new(),
            cdf: Vec::new(),
        }))
    }
}

/// External sampler speaking a line protocol: `SAMPLE <beta>` in, one energy out.
pub struct CommandSampler {
    program: String,
    args: Vec<String>,
    domain: Domain,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl CommandSampler {
    pub fn spawn(program: &str, args: &[String], domain: Domain) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Oracle(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().unwrap();
        let stdout = BufReader::new(child.stdout.take().unwrap());
        Ok(CommandSampler {
            program: program.to_string(),
            args: args.to_vec(),
            domain,
            child,
            stdin,
            stdout,
        })
    }
}

impl Drop for CommandSampler {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Sampler for CommandSampler {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn sample(&mut self, beta: f64, _rng: &mut StreamRng) -> Result<f64> {
        if !beta.is_finite() {
            return domain("beta must be finite");
        }
        let fail = |e: std::io::Error| Error::Oracle(format!("external sampler: {e}"));
        writeln!(self.stdin, "SAMPLE {beta:e}").map_err(fail)?;
        self.stdin.flush().map_err(fail)?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line).map_err(fail)? == 0 {
            return Err(Error::Oracle("external sampler closed its output".into()));
        }
        let x: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::Oracle(format!("external sampler sent {:?}", line.trim())))?;
        let ok = self.domain.support.binary_search_by(|s| s.total_cmp(&x)).is_ok();
        if !ok {
            return Err(Error::Oracle(format!("external sampler returned {x} outside the support")));
        }
        Ok(x)
    }

    fn fork(&self) -> Result<Box<dyn Sampler>> {
        Ok(Box::new(CommandSampler::spawn(&self.program, &self.args, self.domain.clone())?))
    }
}

/// Sampler with a draw counter and a private random stream.
pub struct OracleHandle {
    sampler: Box<dyn Sampler>,
    rng: StreamRng,
    seed: u64,
    label: String,
    cost: u64,
    forks: u64,
    limit: Option<Arc<AtomicU64>>,
    query_log: Option<Vec<f64>>,
}

impl OracleHandle {
    pub fn new(sampler: Box<dyn Sampler>, seed: u64, label: &str) -> Self {
        OracleHandle {
            sampler,
            rng: rng::stream(seed, label),
            seed,
            label: label.to_string(),
            cost: 0,
            forks: 0,
            limit: None,
            query_log: None,
        }
    }

    pub fn domain(&self) -> &Domain {
        self.sampler.domain()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Draws made through this handle, including those absorbed from forks.
    pub fn cost(&self) -> u64 {
        self.cost
    }

    /// Exact law of the backend when it is known.
    pub fn pmf(&self, beta: f64) -> Option<Vec<f64>> {
        self.sampler.pmf(beta)
    }

    /// Caps the total cost; draws beyond it fail with `BudgetExhausted`.
    pub fn set_budget(&mut self, max_draws: u64) {
        self.limit = Some(Arc::new(AtomicU64::new(max_draws)));
    }

    /// Shares a cost cap that another thread may lower; draws beyond it fail with `Cancelled`.
    pub(crate) fn share_limit(&mut self, limit: Arc<AtomicU64>) {
        self.limit = Some(limit);
    }

    /// Starts recording the inverse temperature of every query.
    pub fn record_queries(&mut self) {
        self.query_log = Some(Vec::new());
    }

    pub fn query_log(&self) -> &[f64] {
        self.query_log.as_deref().unwrap_or(&[])
    }

    fn admit(&mut self, beta: f64, n: u64) -> Result<()> {
        if !beta.is_finite() {
            return domain("beta must be finite");
        }
        if let Some(limit) = &self.limit {
            let cap = limit.load(Ordering::Acquire);
            if self.cost + n > cap {
                return Err(Error::BudgetExhausted(self.cost));
            }
        }
        if let Some(log) = &mut self.query_log {
            log.push(beta);
        }
        Ok(())
    }

    /// One draw at `beta`.
    pub fn draw(&mut self, beta: f64) -> Result<f64> {
        self.admit(beta, 1)?;
        let x = self.sampler.sample(beta, &mut self.rng)?;
        self.cost += 1;
        Ok(x)
    }

    /// `n` draws at `beta` as sorted `(energy, multiplicity)` pairs.
    pub fn draw_batch(&mut self, beta: f64, n: u64) -> Result<Vec<(f64, u64)>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        self.admit(beta, n)?;
        let out = self.sampler.sample_batch(beta, n, &mut self.rng)?;
        debug_assert_eq!(out.iter().map(|p| p.1).sum::<u64>(), n);
        self.cost += n;
        Ok(out)
    }

    /// Independent handle on a copy of the backend with a derived stream and zero cost.
    pub fn fork(&mut self, label: &str) -> Result<OracleHandle> {
        self.forks += 1;
        let child_label = format!("{}/{}#{}", self.label, label, self.forks);
        Ok(OracleHandle::new(self.sampler.fork()?, self.seed, &child_label))
    }

    /// Adds draws made on a fork to this handle's cost.
    pub fn absorb_cost(&mut self, draws: u64) {
        self.cost += draws;
    }

    /// Random stream for algorithmic choices that do not query the oracle.
    pub fn rng(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    pub(crate) fn into_sampler(self) -> Box<dyn Sampler> {
        self.sampler
    }
}

/// Exact oracle of `inst` on the stream `seed`.
pub fn exact_oracle(inst: &GibbsInstance, seed: u64) -> OracleHandle {
    OracleHandle::new(Box::new(ExactSampler::new(inst.clone())), seed, "exact")
}

/// Wraps `base` so that each law is moved by `d_tv` in total variation.
pub fn tv_perturbed_oracle(base: OracleHandle, d_tv: f64, mode: ShiftMode, seed: u64) -> Result<OracleHandle> {
    if !(0.0..=1.0).contains(&d_tv) {
        return domain("d_tv must lie in [0, 1]");
    }
    let label = format!("{}+tv", base.label());
    let sampler = base.into_sampler();
    let len = sampler.domain().support.len();
    if sampler.pmf(sampler.domain().beta_min).is_none() {
        return Err(Error::Oracle("base oracle has no explicit law".into()));
    }
    let (from, to) = match mode {
        ShiftMode::MassShiftUp => (0, len - 1),
        ShiftMode::MassShiftDown => (len - 1, 0),
        ShiftMode::RandomPair => {
            let mut r = rng::stream(seed, "tv-pair");
            if len < 2 {
                (0, 0)
            } else {
                let a = r.random_range(0..len);
                let b = (a + r.random_range(1..len)) % len;
                (a, b)
            }
        }
    };
    let p = PerturbedSampler {
        base: sampler,
        d_tv,
        from,
        to,
        clipped: Arc::new(AtomicU64::new(0)),
        cached_beta: f64::NAN,
        probs: Vec::new(),
        cdf: Vec::new(),
    };
    Ok(OracleHandle::new(Box::new(p), seed, &label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn inst_a() -> GibbsInstance {
        GibbsInstance::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0], 0.0, 1.0).unwrap()
    }

    fn freqs(o: &mut OracleHandle, beta: f64, n: u64, single: bool) -> Vec<f64> {
        let mut f = vec![0.0; 3];
        if single {
            for _ in 0..n {
                f[o.draw(beta).unwrap() as usize] += 1.0 / n as f64;
            }
        } else {
            for (x, c) in o.draw_batch(beta, n).unwrap() {
                f[x as usize] += c as f64 / n as f64;
            }
        }
        f
    }

    #[test]
    fn exact_frequencies_and_cost() {
        for single in [true, false] {
            let mut o = exact_oracle(&inst_a(), 1);
            let f = freqs(&mut o, 0.0, 100_000, single);
            for (got, want) in f.iter().zip([0.25, 0.5, 0.25]) {
                assert!((got - want).abs() < 0.01);
            }
            assert_eq!(o.cost(), 100_000);
        }
    }

    #[test]
    fn point_mass_and_reproducibility() {
        let p = GibbsInstance::new(vec![3.0], vec![2.0], 0.0, 1.0).unwrap();
        let mut o = exact_oracle(&p, 9);
        assert!((0..50).all(|_| o.draw(0.4).unwrap() == 3.0));
        let mut a = exact_oracle(&inst_a(), 5);
        let mut b = exact_oracle(&inst_a(), 5);
        let xa: Vec<f64> = (0..100).map(|i| a.draw(i as f64 / 100.0).unwrap()).collect();
        let xb: Vec<f64> = (0..100).map(|i| b.draw(i as f64 / 100.0).unwrap()).collect();
        assert_eq!(xa, xb);
        assert!(a.draw(f64::NAN).is_err());
    }

    #[test]
    fn perturbed_law() {
        let base = exact_oracle(&inst_a(), 2);
        let mut o = tv_perturbed_oracle(base, 0.1, ShiftMode::MassShiftUp, 3).unwrap();
        let p = o.pmf(0.0).unwrap();
        for (got, want) in p.iter().zip([0.15, 0.5, 0.35]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let exact = inst_a().induced_mu(0.0).unwrap();
        let tv: f64 = 0.5 * p.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert_abs_diff_eq!(tv, 0.1, epsilon = 1e-12);
        let f = freqs(&mut o, 0.0, 100_000, false);
        for (got, want) in f.iter().zip([0.15, 0.5, 0.35]) {
            assert!((got - want).abs() < 0.01);
        }
        let zero = tv_perturbed_oracle(exact_oracle(&inst_a(), 2), 0.0, ShiftMode::RandomPair, 3).unwrap();
        assert_eq!(zero.pmf(0.3).unwrap(), inst_a().induced_mu(0.3).unwrap());
    }

    #[test]
    fn perturbation_clips() {
        let base = exact_oracle(&inst_a(), 2);
        let o = tv_perturbed_oracle(base, 0.4, ShiftMode::MassShiftUp, 3).unwrap();
        let p = o.pmf(0.0).unwrap();
        assert_eq!(p[0], 0.0);
        assert_abs_diff_eq!(p[2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn budget_stops_draws() {
        let mut o = exact_oracle(&inst_a(), 1);
        o.set_budget(10);
        assert!(o.draw_batch(0.0, 10).is_ok());
        assert!(matches!(o.draw(0.0), Err(Error::BudgetExhausted(10))));
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut r = rng::stream(1, "m");
        for n in [0u64, 1, 17, 1_000_000_000] {
            let c = multinomial(&[0.2, 0.0, 0.5, 0.3], n, &mut r);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c[1], 0);
        }
    }
}
