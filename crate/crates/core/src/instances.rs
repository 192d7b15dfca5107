//! Instance generators: the real-rooted polynomial family, the lower-bound
//! envelopes with their indistinguishability diagnostic, and the harmonic
//! bound check for log-concave sequences.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gibbs::{find_betamax, log_sum_exp, GibbsInstance};

/// Natural-log coefficients of `x^m * prod_{k<m} (e^k + x)`, indexed by degree `0..=2m`.
pub fn poly_log_counts(m: usize) -> Vec<f64> {
    let mut poly = vec![0.0];
    for k in 0..m {
        let root = k as f64;
        let mut next = vec![f64::NEG_INFINITY; poly.len() + 1];
        for (j, slot) in next.iter_mut().enumerate() {
            let keep = poly.get(j).map_or(f64::NEG_INFINITY, |l| l + root);
            let shift = if j > 0 { poly[j - 1] } else { f64::NEG_INFINITY };
            *slot = log_sum_exp([keep, shift].into_iter());
        }
        poly = next;
    }
    let mut out = vec![f64::NEG_INFINITY; m];
    out.extend(poly);
    out
}

/// Log-concave instance on `0..=2m` with counts from [`poly_log_counts`],
/// `beta_min = 0` and `beta_max` chosen so the log partition ratio is `q_target`.
pub fn logconcave_poly_instance(m: usize, q_target: f64) -> Result<GibbsInstance> {
    if m == 0 {
        return domain("the polynomial family needs m >= 1");
    }
    let logs = poly_log_counts(m);
    let support = dense_support(2 * m);
    let beta_max = find_betamax(&support, &logs, 0.0, q_target)?;
    let inst = GibbsInstance::from_log_counts(support, logs, 0.0, beta_max)?;
    debug_assert!(inst.is_log_concave());
    Ok(inst)
}

fn dense_support(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64).collect()
}

/// Which lower-bound construction a family follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Two-point counts `(2 delta, 1)` with the low count scaled by `e^{-/+3 eps}`.
    DeltaPair,
    /// Polynomial family with exponentially tilted alternates `c_k e^{-/+k nu}`.
    PolyEnvelope,
    /// Integer comb with `2m` alternates, each moving one odd slot by `e^{+/-nu}`.
    IntegerComb,
    /// Another family with energies divided by a scale, so the range grows by it.
    Rescaled,
}

impl std::str::FromStr for FamilyKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta-pair" => Ok(FamilyKind::DeltaPair),
            "poly-envelope" => Ok(FamilyKind::PolyEnvelope),
            "integer-comb" => Ok(FamilyKind::IntegerComb),
            "rescaled" => Ok(FamilyKind::Rescaled),
            _ => domain(format!("unknown family kind {s:?}")),
        }
    }
}

/// Parameters of [`lower_bound_family`]; each kind reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub delta: f64,
    pub eps: f64,
    /// Tilt size; defaults to `3 eps / lambda` (poly envelope) or `3 eps` (comb).
    pub nu: Option<f64>,
    /// Largest energy; extra top slots are zero counts.
    pub n: usize,
    /// Target log partition ratio of the base instance.
    pub q: f64,
    /// Family to rescale (rescaled kind only).
    pub base: FamilyKind,
    /// Energy divisor (rescaled kind only); defaults to the smallest positive
    /// energy with a nonzero count.
    pub scale: Option<f64>,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            delta: 0.1,
            eps: 0.1,
            nu: None,
            n: 4,
            q: 5.0,
            base: FamilyKind::PolyEnvelope,
            scale: None,
        }
    }
}

/// A base instance surrounded by alternates on the same support and range.
#[derive(Clone, Debug)]
pub struct InstanceFamily {
    pub kind: FamilyKind,
    pub base: GibbsInstance,
    pub alternates: Vec<GibbsInstance>,
    /// Tilt used for the alternates, when the kind has one.
    pub nu: Option<f64>,
    /// Grid maximum of `ln U_beta(x)` and where it was attained `(beta, x)`.
    pub psi: f64,
    pub psi_at: (f64, f64),
}

const PSI_GRID: usize = 2000;

impl InstanceFamily {
    fn assemble(kind: FamilyKind, base: GibbsInstance, alternates: Vec<GibbsInstance>, nu: Option<f64>) -> Result<Self> {
        let mut fam = InstanceFamily {
            kind,
            base,
            alternates,
            nu,
            psi: f64::NEG_INFINITY,
            psi_at: (0.0, 0.0),
        };
        let (psi, beta, x) = fam.psi_on_grid(PSI_GRID)?;
        fam.psi = psi;
        fam.psi_at = (beta, x);
        Ok(fam)
    }

    /// Number of alternates.
    pub fn d(&self) -> usize {
        self.alternates.len()
    }

    /// Base instance followed by the alternates.
    pub fn members(&self) -> impl Iterator<Item = &GibbsInstance> {
        std::iter::once(&self.base).chain(&self.alternates)
    }

    /// Log partition ratio of every member, base first.
    pub fn log_ratios(&self) -> Vec<f64> {
        self.members().map(|m| m.q()).collect()
    }

    /// `ln U_beta(x) = sum_r ln(mu_beta(x | base) / mu_beta(x | alternate r))`.
    pub fn log_u(&self, beta: f64, x: f64) -> Result<f64> {
        let l0 = self.base.log_mu_at(beta, x)?;
        let mut total = 0.0;
        for alt in &self.alternates {
            total += l0 - alt.log_mu_at(beta, x)?;
        }
        Ok(total)
    }

    /// Maximum of `ln U_beta(x)` over an even grid of `points + 1` temperatures
    /// (plus `beta = 0` when it lies in range) and all points with a nonzero base count.
    pub fn psi_on_grid(&self, points: usize) -> Result<(f64, f64, f64)> {
        let (lo, hi) = (self.base.beta_min(), self.base.beta_max());
        let mut betas: Vec<f64> = (0..=points).map(|i| lo + (hi - lo) * i as f64 / points.max(1) as f64).collect();
        if lo < 0.0 && hi > 0.0 {
            betas.push(0.0);
        }
        let xs: Vec<f64> = self
            .base
            .support()
            .iter()
            .zip(self.base.log_counts())
            .filter(|(_, l)| **l > f64::NEG_INFINITY)
            .map(|(x, _)| *x)
            .collect();
        let mut best = (f64::NEG_INFINITY, lo, xs[0]);
        for &b in &betas {
            for &x in &xs {
                let v = self.log_u(b, x)?;
                if v > best.0 {
                    best = (v, b, x);
                }
            }
        }
        Ok(best)
    }
}

/// Builds the lower-bound family of the given kind.
pub fn lower_bound_family(kind: FamilyKind, params: &FamilyParams) -> Result<InstanceFamily> {
    let p = params;
    if !(p.q.is_finite() && p.q >= 0.0) {
        return domain("q must be finite and nonnegative");
    }
    if let Some(nu) = p.nu {
        if !(nu.is_finite() && nu > 0.0) {
            return domain("nu must be positive");
        }
    }
    match kind {
        FamilyKind::DeltaPair => delta_pair(p),
        FamilyKind::PolyEnvelope => poly_envelope(p),
        FamilyKind::IntegerComb => integer_comb(p),
        FamilyKind::Rescaled => {
            if p.base == FamilyKind::Rescaled {
                return domain("a rescaled family needs a concrete base kind");
            }
            let inner = lower_bound_family(p.base, p)?;
            let scale = match p.scale {
                Some(s) => s,
                None => smallest_positive_energy(&inner.base),
            };
            rescale_family(&inner, scale)
        }
    }
}

fn check_eps(p: &FamilyParams) -> Result<()> {
    if !(p.eps.is_finite() && p.eps > 0.0) {
        return domain("eps must be positive");
    }
    Ok(())
}

fn padded(mut logs: Vec<f64>, n: usize) -> Vec<f64> {
    if logs.len() < n + 1 {
        logs.resize(n + 1, f64::NEG_INFINITY);
    }
    logs
}

fn member(logs: Vec<f64>, beta_max: f64) -> Result<GibbsInstance> {
    let support = dense_support(logs.len() - 1);
    GibbsInstance::from_log_counts(support, logs, 0.0, beta_max)
}

fn base_and_range(logs: Vec<f64>, q: f64) -> Result<(GibbsInstance, f64)> {
    let support = dense_support(logs.len() - 1);
    let beta_max = find_betamax(&support, &logs, 0.0, q)?;
    Ok((GibbsInstance::from_log_counts(support, logs, 0.0, beta_max)?, beta_max))
}

fn delta_pair(p: &FamilyParams) -> Result<InstanceFamily> {
    check_eps(p)?;
    if !(p.delta > 0.0 && p.delta.is_finite()) {
        return domain("delta must be positive");
    }
    let n = p.n.max(1);
    let logs = padded(vec![(2.0 * p.delta).ln(), 0.0], n);
    let (base, beta_max) = base_and_range(logs.clone(), p.q)?;
    let mut alternates = Vec::new();
    for sign in [-1.0, 1.0] {
        let mut alt = logs.clone();
        alt[0] += sign * 3.0 * p.eps;
        alternates.push(member(alt, beta_max)?);
    }
    InstanceFamily::assemble(FamilyKind::DeltaPair, base, alternates, None)
}

fn poly_envelope(p: &FamilyParams) -> Result<InstanceFamily> {
    if p.n < 2 {
        return domain("the polynomial envelope needs n >= 2");
    }
    let m = p.n / 2;
    let logs = padded(poly_log_counts(m), p.n);
    let (base, beta_max) = base_and_range(logs.clone(), p.q)?;
    let nu = match p.nu {
        Some(nu) => nu,
        None => {
            check_eps(p)?;
            let slope = base.mean_energy(beta_max)? - base.mean_energy(0.0)?;
            if slope <= 0.0 {
                return domain("zero-width range leaves the tilt undefined; pass nu");
            }
            3.0 * p.eps / slope
        }
    };
    let mut alternates = Vec::new();
    for sign in [-1.0, 1.0] {
        let alt = logs.iter().enumerate().map(|(k, l)| l + sign * k as f64 * nu).collect();
        alternates.push(member(alt, beta_max)?);
    }
    InstanceFamily::assemble(FamilyKind::PolyEnvelope, base, alternates, Some(nu))
}

fn integer_comb(p: &FamilyParams) -> Result<InstanceFamily> {
    if p.n < 4 {
        return domain("the integer comb needs n >= 4");
    }
    if !(p.delta > 0.0 && p.delta.is_finite()) {
        return domain("delta must be positive");
    }
    let m = p.n / 4;
    let nu = match p.nu {
        Some(nu) => nu,
        None => {
            check_eps(p)?;
            3.0 * p.eps
        }
    };
    let ln2 = std::f64::consts::LN_2;
    let mut logs = vec![f64::NEG_INFINITY; 4 * m + 1];
    for i in 0..=m {
        logs[2 * m + 2 * i] = -((i * i) as f64) * ln2;
    }
    let odd = |i: usize| 2 * m + 2 * i + 1;
    for i in 0..m {
        logs[odd(i)] = (8.0 * p.delta).ln() - ((i + i * i) as f64) * ln2;
    }
    let logs = padded(logs, p.n);
    let (base, beta_max) = base_and_range(logs.clone(), p.q)?;
    let mut alternates = Vec::new();
    for i in 0..m {
        for sign in [1.0, -1.0] {
            let mut alt = logs.clone();
            alt[odd(i)] += sign * nu;
            alternates.push(member(alt, beta_max)?);
        }
    }
    InstanceFamily::assemble(FamilyKind::IntegerComb, base, alternates, Some(nu))
}

fn smallest_positive_energy(inst: &GibbsInstance) -> f64 {
    inst.support()
        .iter()
        .zip(inst.log_counts())
        .find(|(x, l)| **x > 0.0 && **l > f64::NEG_INFINITY)
        .map_or(1.0, |(x, _)| *x)
}

/// Instance with energies `x / scale` and range `scale * [beta_min, beta_max]`.
/// Zero-count points are dropped; the remaining energies must be 0 or at least 1.
pub fn rescale_instance(inst: &GibbsInstance, scale: f64) -> Result<GibbsInstance> {
    if !(scale.is_finite() && scale > 0.0) {
        return domain("scale must be positive");
    }
    let (support, logs): (Vec<f64>, Vec<f64>) = inst
        .support()
        .iter()
        .zip(inst.log_counts())
        .filter(|(_, l)| **l > f64::NEG_INFINITY)
        .map(|(x, l)| (x / scale, *l))
        .unzip();
    if let Some(x) = support.iter().find(|x| **x != 0.0 && **x < 1.0) {
        return domain(format!("rescaled energy {x} falls in (0, 1)"));
    }
    GibbsInstance::from_log_counts(support, logs, inst.beta_min() * scale, inst.beta_max() * scale)
}

/// Applies [`rescale_instance`] to every member and recomputes the diagnostic.
pub fn rescale_family(fam: &InstanceFamily, scale: f64) -> Result<InstanceFamily> {
    let base = rescale_instance(&fam.base, scale)?;
    let alternates = fam.alternates.iter().map(|a| rescale_instance(a, scale)).collect::<Result<_>>()?;
    InstanceFamily::assemble(FamilyKind::Rescaled, base, alternates, fam.nu)
}

/// True iff `a` is nonnegative, log-concave without interior zeros, and
/// `a_k <= 1/k` for every (1-based) position `k`.
pub fn logconcave_harmonic_check(a: &[f64]) -> bool {
    if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return false;
    }
    if a.iter().enumerate().any(|(i, v)| *v > 1.0 / (i + 1) as f64) {
        return false;
    }
    let nz: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let (Some(&first), Some(&last)) = (nz.first(), nz.last()) else {
        return true;
    };
    if nz.len() != last - first + 1 {
        return false;
    }
    (first + 1..last).all(|k| a[k] * a[k] >= a[k - 1] * a[k + 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn poly_m2_expands_by_hand() {
        let inst = logconcave_poly_instance(2, 3.0).unwrap();
        let c = inst.counts();
        let want = [0.0, 0.0, E, 1.0 + E, 1.0];
        for (a, b) in c.iter().zip(want) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
        assert!(inst.is_log_concave());
        assert_eq!(inst.beta_min(), 0.0);
        assert_relative_eq!(inst.q(), 3.0, epsilon = 1e-9);
    }

    #[test]
    fn poly_middle_and_top_counts() {
        for m in 1..=3usize {
            let l = poly_log_counts(m);
            assert_relative_eq!(l[m], (m * (m - 1)) as f64 / 2.0, epsilon = 1e-12);
            assert_relative_eq!(l[2 * m], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn poly_family_is_log_concave() {
        for m in 1..=6 {
            let inst = logconcave_poly_instance(m, 4.0).unwrap();
            assert!(inst.is_log_concave(), "m = {m}");
            let c = inst.counts();
            for k in 1..c.len() - 1 {
                assert!(c[k] * c[k] >= c[k - 1] * c[k + 1] * (1.0 - 1e-12));
            }
        }
        assert!(logconcave_poly_instance(0, 1.0).is_err());
    }

    #[test]
    fn delta_pair_example() {
        let p = FamilyParams { delta: 0.1, eps: 0.1, q: 5.0, n: 1, ..Default::default() };
        let fam = lower_bound_family(FamilyKind::DeltaPair, &p).unwrap();
        let c0 = fam.base.counts();
        assert_relative_eq!(c0[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(c0[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(fam.alternates[0].counts()[0], 0.2 * (-0.3f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(fam.alternates[1].counts()[0], 0.2 * 0.3f64.exp(), epsilon = 1e-12);
        assert_relative_eq!(fam.base.q(), 5.0, epsilon = 1e-9);
        for alt in &fam.alternates {
            assert_eq!(alt.beta_max(), fam.base.beta_max());
            assert_eq!(alt.support(), fam.base.support());
        }
        let bound = 2.0 * 0.1 * ((0.3f64).exp() + (-0.3f64).exp() - 2.0);
        assert!(fam.psi <= bound + 1e-9, "{} > {bound}", fam.psi);
        // The maximum sits at the low end of the range.
        assert_eq!(fam.psi_at.0, 0.0);
        let closed = (1.0 + 0.2 * (0.3f64.exp() + (-0.3f64).exp() - 2.0) / 1.44).ln();
        assert_relative_eq!(fam.psi, closed, epsilon = 1e-12);
    }

    #[test]
    fn delta_pair_padding_keeps_law() {
        let p = FamilyParams { n: 5, ..Default::default() };
        let fam = lower_bound_family(FamilyKind::DeltaPair, &p).unwrap();
        assert_eq!(fam.base.n(), 5.0);
        assert!(fam.base.is_log_concave());
        assert_relative_eq!(fam.base.q(), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn comb_example() {
        let p = FamilyParams { delta: 0.01, n: 8, q: 6.0, ..Default::default() };
        let fam = lower_bound_family(FamilyKind::IntegerComb, &p).unwrap();
        let c = fam.base.counts();
        assert_eq!(c.len(), 9);
        for j in 0..4 {
            assert_eq!(c[j], 0.0);
        }
        assert_relative_eq!(c[4], 1.0, epsilon = 1e-12);
        assert_relative_eq!(c[6], 0.5, epsilon = 1e-12);
        assert_relative_eq!(c[8], 1.0 / 16.0, epsilon = 1e-12);
        assert_relative_eq!(c[5], 0.08, epsilon = 1e-12);
        assert_relative_eq!(c[7], 0.08 / 4.0, epsilon = 1e-12);
        assert_eq!(fam.d(), 4);
        // Each alternate moves exactly one odd slot.
        for (r, alt) in fam.alternates.iter().enumerate() {
            let a = alt.counts();
            let slot = 5 + 2 * (r / 2);
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            for k in 0..9 {
                let want = if k == slot { c[k] * (sign * 0.3f64).exp() } else { c[k] };
                assert_relative_eq!(a[k], want, max_relative = 1e-12);
            }
        }
        // Indistinguishability stays of order delta nu^2.
        assert!(fam.psi <= 16.0 * 0.01 * 0.09 * 4.0, "psi {}", fam.psi);
    }

    #[test]
    fn envelope_tilts_and_separates_ratios() {
        let p = FamilyParams { n: 6, q: 20.0, eps: 0.05, ..Default::default() };
        let fam = lower_bound_family(FamilyKind::PolyEnvelope, &p).unwrap();
        let nu = fam.nu.unwrap();
        let c = fam.base.log_counts();
        for (k, (lm, lp)) in fam.alternates[0].log_counts().iter().zip(fam.alternates[1].log_counts()).enumerate() {
            if c[k] > f64::NEG_INFINITY {
                assert_relative_eq!(*lm, c[k] - k as f64 * nu, epsilon = 1e-12);
                assert_relative_eq!(*lp, c[k] + k as f64 * nu, epsilon = 1e-12);
            }
        }
        let q = fam.log_ratios();
        // Tilts move q by about 3 eps in opposite directions.
        assert!((q[0] - q[1]).abs() > 2.0 * p.eps && (q[2] - q[0]).abs() > 2.0 * p.eps);
        // Psi is at most kappa nu^2 with kappa <= 2e/(e-1).
        assert!(fam.psi <= 2.0 * E / (E - 1.0) * nu * nu + 1e-12);
        assert!(fam.psi >= 0.0);
    }

    #[test]
    fn rescaling_preserves_laws() {
        let p = FamilyParams { n: 4, q: 6.0, base: FamilyKind::PolyEnvelope, ..Default::default() };
        let fam = lower_bound_family(FamilyKind::Rescaled, &p).unwrap();
        let inner = lower_bound_family(FamilyKind::PolyEnvelope, &p).unwrap();
        assert_eq!(fam.base.n(), 2.0);
        assert!(!fam.base.is_integer());
        for (a, b) in fam.members().zip(inner.members()) {
            assert_relative_eq!(a.q(), b.q(), epsilon = 1e-9);
        }
        assert_relative_eq!(fam.psi, inner.psi, epsilon = 1e-9);
    }

    #[test]
    fn rescaling_delta_pair_is_exact() {
        let p = FamilyParams { n: 1, ..Default::default() };
        let fam = lower_bound_family(FamilyKind::DeltaPair, &p).unwrap();
        let s = 0.5;
        let re = rescale_family(&fam, s).unwrap();
        for (orig, resc) in fam.members().zip(re.members()) {
            for i in 0..=20 {
                let b = orig.beta_max() * i as f64 / 20.0;
                for &x in orig.support() {
                    let l1 = orig.log_mu_at(b, x).unwrap();
                    let l2 = resc.log_mu_at(b * s, x / s).unwrap();
                    assert_relative_eq!(l1, l2, epsilon = 1e-12);
                }
            }
        }
        assert!(rescale_family(&fam, 2.0).is_err());
    }

    #[test]
    fn bad_params_are_domain_errors() {
        let bad = FamilyParams { eps: 0.0, ..Default::default() };
        assert!(lower_bound_family(FamilyKind::DeltaPair, &bad).is_err());
        let bad = FamilyParams { n: 3, ..Default::default() };
        assert!(lower_bound_family(FamilyKind::IntegerComb, &bad).is_err());
        let bad = FamilyParams { q: -1.0, ..Default::default() };
        assert!(lower_bound_family(FamilyKind::PolyEnvelope, &bad).is_err());
        let bad = FamilyParams { base: FamilyKind::Rescaled, ..Default::default() };
        assert!(lower_bound_family(FamilyKind::Rescaled, &bad).is_err());
        assert!("nope".parse::<FamilyKind>().is_err());
        assert_eq!("integer-comb".parse::<FamilyKind>().unwrap(), FamilyKind::IntegerComb);
    }

    #[test]
    fn harmonic_examples() {
        // 1/k itself is log-convex: (1/2)^2 < 1 * 1/3.
        assert!(!logconcave_harmonic_check(&[1.0, 0.5, 1.0 / 3.0]));
        assert!(logconcave_harmonic_check(&[1.0, 0.5, 0.25]));
        assert!(!logconcave_harmonic_check(&[1.0, 0.1, 0.3]));
        assert!(logconcave_harmonic_check(&[]));
        assert!(!logconcave_harmonic_check(&[1.0, 0.0, 0.0, 0.25]));
        assert!(!logconcave_harmonic_check(&[0.5, 0.6]));
        assert!(!logconcave_harmonic_check(&[-0.1]));
    }

    /// Log-concave sequence pushed up against the harmonic envelope.
    fn tight_sequence() -> impl Strategy<Value = Vec<f64>> {
        (1usize..80, prop::collection::vec(-3.0f64..3.0, 80), 0.0f64..=1.0).prop_map(|(len, mut slopes, shrink)| {
            slopes.truncate(len);
            slopes.sort_by(|a, b| b.total_cmp(a));
            let mut acc = 0.0;
            let raw: Vec<f64> = slopes.iter().map(|s| { acc += s; acc }).collect();
            let fit = raw.iter().enumerate().map(|(i, l)| -((i + 1) as f64).ln() - l).fold(f64::INFINITY, f64::min);
            raw.iter().map(|l| (l + fit).exp() * (1.0 - 1e-12) * shrink.max(1e-3)).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn harmonic_sum_stays_below_e(a in tight_sequence()) {
            prop_assert!(logconcave_harmonic_check(&a));
            prop_assert!(a.iter().sum::<f64>() < E);
        }
    }
}
