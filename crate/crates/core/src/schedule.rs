//! Covering schedules over integer energies: a chain of inverse temperatures whose
//! consecutive laws share a well-represented energy.
//!
//! Construction grows a pre-schedule by filling coverage gaps, trims it to a minimal
//! one, then uncrosses it into a chained schedule (or reports failure so the caller
//! can retry).

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::gibbs::GibbsInstance;
use crate::oracle::OracleHandle;
use crate::profile::ConstantsProfile;
use crate::sampling::{sample_empirical, SampleSpec};
use crate::search::binary_search;

/// End of an energy interval: an integer energy or one of the two sentinels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bound {
    NegInf,
    At(u32),
    PosInf,
}

impl Bound {
    pub fn finite(self) -> Option<u32> {
        match self {
            Bound::At(k) => Some(k),
            _ => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Bound::NegInf => f64::NEG_INFINITY,
            Bound::At(k) => k as f64,
            Bound::PosInf => f64::INFINITY,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::NegInf => f.write_str("-inf"),
            Bound::At(k) => write!(f, "{k}"),
            Bound::PosInf => f.write_str("+inf"),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bound::At(k) => s.serialize_u32(*k),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Bound;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative integer, \"-inf\" or \"+inf\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Bound, E> {
                u32::try_from(v).map(Bound::At).map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Bound, E> {
                u32::try_from(v).map(Bound::At).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Bound, E> {
                match v {
                    "-inf" => Ok(Bound::NegInf),
                    "+inf" | "inf" => Ok(Bound::PosInf),
                    _ => Err(E::custom(format!("unknown bound {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Number of energies in `0..=n` lying in `[lo, hi]`.
pub fn span(lo: Bound, hi: Bound, n: u32) -> u32 {
    let a = match lo {
        Bound::NegInf => 0,
        Bound::At(k) => k as i64,
        Bound::PosInf => n as i64 + 1,
    };
    let b = match hi {
        Bound::NegInf => -1,
        Bound::At(k) => (k as i64).min(n as i64),
        Bound::PosInf => n as i64,
    };
    (b - a + 1).max(0) as u32
}

/// An inverse temperature, an energy interval and a weight floor for its endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub beta: f64,
    pub sigma_minus: Bound,
    pub sigma_plus: Bound,
    pub w: f64,
}

impl Segment {
    pub fn span(&self, n: u32) -> u32 {
        span(self.sigma_minus, self.sigma_plus, n)
    }

    #[cfg(test)]
    fn same_shape(&self, o: &Segment) -> bool {
        self.beta == o.beta && self.sigma_minus == o.sigma_minus && self.sigma_plus == o.sigma_plus
    }

    /// Whether both finite endpoints have probability at least `w` under `mu` (dense over `0..=n`).
    pub fn is_proper(&self, mu: &[f64]) -> bool {
        [self.sigma_minus, self.sigma_plus]
            .iter()
            .filter_map(|b| b.finite())
            .all(|k| mu.get(k as usize).is_some_and(|&p| p >= self.w))
    }

    /// Whether no energy outside the interval is much heavier than the nearer endpoint,
    /// discounted by its distance.
    pub fn is_extremal(&self, mu: &[f64], lambda: f64) -> bool {
        let n = mu.len() as u32 - 1;
        let s = self.span(n) as f64;
        let slack = 1.0 + 1e-12;
        let left = self.sigma_minus.finite().is_none_or(|lo| {
            (0..lo).all(|k| mu[k as usize] <= slack / lambda * s / (s + (lo - k) as f64) * mu[lo as usize])
        });
        let right = self.sigma_plus.finite().is_none_or(|hi| {
            (hi + 1..=n).all(|k| mu[k as usize] <= slack / lambda * s / (s + (k - hi) as f64) * mu[hi as usize])
        });
        left && right
    }
}

/// Sum of inverse weights.
pub fn inv_weight(segments: &[Segment]) -> f64 {
    segments.iter().map(|s| 1.0 / s.w).sum()
}

/// Dense law over `0..=n` of an integer instance.
pub fn dense_mu(inst: &GibbsInstance, beta: f64) -> Result<Vec<f64>> {
    if !inst.is_integer() {
        return domain("dense laws need an integer instance");
    }
    let mut out = vec![0.0; inst.n() as usize + 1];
    for (x, p) in inst.support().iter().zip(inst.induced_mu(beta)?) {
        out[*x as usize] = p;
    }
    Ok(out)
}

/// Segments sorted by inverse temperature whose intervals are meant to cover every energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreSchedule {
    pub segments: Vec<Segment>,
}

impl PreSchedule {
    pub fn inv_weight(&self) -> f64 {
        inv_weight(&self.segments)
    }

    /// First violated structural property, ignoring coverage unless `complete`.
    pub fn violation(&self, beta_min: f64, beta_max: f64, n: u32, complete: bool) -> Option<String> {
        let segs = &self.segments;
        let (first, last) = match (segs.first(), segs.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Some("empty pre-schedule".into()),
        };
        for s in segs {
            if !(s.beta >= beta_min && s.beta <= beta_max) {
                return Some(format!("beta {} outside the range", s.beta));
            }
            if s.sigma_minus == Bound::PosInf || s.sigma_plus == Bound::NegInf || s.sigma_minus > s.sigma_plus {
                return Some(format!("malformed interval [{}, {}]", s.sigma_minus, s.sigma_plus));
            }
            if [s.sigma_minus, s.sigma_plus].iter().any(|b| b.finite().is_some_and(|k| k > n)) {
                return Some("interval end beyond the largest energy".into());
            }
            if !(s.w > 0.0 && s.w <= 1.0) {
                return Some(format!("weight {} outside (0, 1]", s.w));
            }
        }
        if first.beta != beta_min || last.beta != beta_max {
            return Some("sequence must start at beta_min and end at beta_max".into());
        }
        if first.sigma_minus != Bound::NegInf || last.sigma_plus != Bound::PosInf {
            return Some("missing sentinel ends".into());
        }
        for p in segs.windows(2) {
            let (a, b) = (&p[0], &p[1]);
            if a.beta > b.beta {
                return Some("inverse temperatures decrease".into());
            }
            if a.sigma_minus > b.sigma_minus || a.sigma_plus > b.sigma_plus {
                return Some("interval ends decrease".into());
            }
            if a.beta == b.beta && a.sigma_minus != b.sigma_minus && a.sigma_plus != b.sigma_plus {
                return Some("equal temperatures without a shared end".into());
            }
        }
        for s in segs {
            if (s.sigma_minus == Bound::NegInf && s.beta != beta_min) || (s.sigma_plus == Bound::PosInf && s.beta != beta_max) {
                return Some("sentinel end away from its range end".into());
            }
        }
        if complete && !covers_everything(segs) {
            return Some("intervals leave a gap".into());
        }
        None
    }

    pub fn is_valid(&self, beta_min: f64, beta_max: f64, n: u32) -> bool {
        self.violation(beta_min, beta_max, n, true).is_none()
    }

    /// No single segment can be dropped while staying valid.
    pub fn is_minimal(&self, beta_min: f64, beta_max: f64, n: u32) -> bool {
        (0..self.segments.len()).all(|i| !self.without(i).is_valid(beta_min, beta_max, n))
    }

    /// The interleaving that minimal pre-schedules satisfy.
    pub fn is_interleaved(&self) -> bool {
        self.segments.windows(2).all(|p| {
            let (a, b) = (&p[0], &p[1]);
            a.sigma_minus < b.sigma_minus && b.sigma_minus <= a.sigma_plus && a.sigma_plus < b.sigma_plus && a.beta < b.beta
        })
    }

    fn without(&self, i: usize) -> PreSchedule {
        let mut segments = self.segments.clone();
        segments.remove(i);
        PreSchedule { segments }
    }

    /// Total span of all intervals.
    pub fn total_span(&self, n: u32) -> u32 {
        self.segments.iter().map(|s| s.span(n)).sum()
    }

    /// Whether every segment is proper under the exact law of `inst`.
    pub fn is_proper(&self, inst: &GibbsInstance) -> Result<bool> {
        all_proper(&self.segments, inst)
    }
}

fn all_proper(segments: &[Segment], inst: &GibbsInstance) -> Result<bool> {
    for s in segments {
        if !s.is_proper(&dense_mu(inst, s.beta)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether the union of the closed intervals is the whole extended line.
fn covers_everything(segs: &[Segment]) -> bool {
    let mut iv: Vec<(Bound, Bound)> = segs.iter().map(|s| (s.sigma_minus, s.sigma_plus)).collect();
    iv.sort();
    let mut reach = match iv.first() {
        Some(&(Bound::NegInf, hi)) => hi,
        _ => return false,
    };
    for &(lo, hi) in &iv[1..] {
        if lo > reach {
            return false;
        }
        reach = reach.max(hi);
    }
    reach == Bound::PosInf
}

/// Drops segments, scanning from the left and restarting after each removal,
/// until the pre-schedule is minimal and interleaved.
///
/// Removal alone can get stuck on a run of three or more segments at one temperature
/// that are chained by alternately shared ends; such a run is replaced by its hull
/// with the smallest weight of the run, and trimming resumes.
pub fn minimalize(pre: &PreSchedule, beta_min: f64, beta_max: f64, n: u32) -> Result<PreSchedule> {
    if let Some(v) = pre.violation(beta_min, beta_max, n, true) {
        return domain(format!("not a pre-schedule: {v}"));
    }
    let mut cur = trim(pre.clone(), beta_min, beta_max, n);
    if cur.segments.windows(2).any(|p| p[0].beta == p[1].beta) {
        cur = trim(merge_equal_temperatures(&cur), beta_min, beta_max, n);
    }
    debug_assert!(cur.is_interleaved());
    Ok(cur)
}

fn trim(mut cur: PreSchedule, beta_min: f64, beta_max: f64, n: u32) -> PreSchedule {
    'outer: loop {
        for i in 0..cur.segments.len() {
            let cand = cur.without(i);
            if cand.is_valid(beta_min, beta_max, n) {
                cur = cand;
                continue 'outer;
            }
        }
        return cur;
    }
}

fn merge_equal_temperatures(pre: &PreSchedule) -> PreSchedule {
    let mut out: Vec<Segment> = Vec::new();
    for s in &pre.segments {
        match out.last_mut() {
            Some(last) if last.beta == s.beta => {
                last.sigma_plus = last.sigma_plus.max(s.sigma_plus);
                last.w = last.w.min(s.w);
            }
            _ => out.push(*s),
        }
    }
    PreSchedule { segments: out }
}

/// One side of the interval search: a fixed end or a range `lo..=hi` of energies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Choice {
    Forced(Bound),
    Range(u32, u32),
}

impl Choice {
    /// The end away from the other side.
    fn far_end(self, lower: bool) -> Bound {
        match (self, lower) {
            (Choice::Forced(b), _) => b,
            (Choice::Range(lo, _), true) => Bound::At(lo),
            (Choice::Range(_, hi), false) => Bound::At(hi),
        }
    }
}

/// Threshold constant for interval searches: `tau * lambda^3 / rho`.
pub fn phi(profile: &ConstantsProfile, rho: f64) -> f64 {
    profile.schedule_tau * profile.schedule_lambda.powi(3) / rho
}

/// Scores `(energy, score)` over the range `lo..=hi`, where `anchor` is the end nearest
/// the other side and `far` marks the outer limits that get the lighter discount.
pub fn side_scores(mu_hat: &[f64], lo: u32, hi: u32, anchor: u32, far: (Bound, Bound), lambda: f64) -> Vec<(u32, f64)> {
    (lo..=hi)
        .map(|i| {
            let outer = far.0 == Bound::At(i) || far.1 == Bound::At(i);
            let factor = if outer { lambda.sqrt() } else { lambda.powf(1.5) };
            let dist = (anchor as i64 - i as i64).unsigned_abs() + 1;
            (i, dist as f64 * factor * mu_hat[i as usize])
        })
        .collect()
}

fn argmax_smallest(scores: &[(u32, f64)]) -> Option<u32> {
    scores
        .iter()
        .fold(None, |best: Option<(u32, f64)>, &(i, s)| match best {
            Some((_, b)) if s <= b => best,
            _ => Some((i, s)),
        })
        .map(|p| p.0)
}

/// Picks an interval at `beta` with ends from the two sides, favoring ends that are heavy
/// relative to their distance from the other side.
pub fn find_interval(
    oracle: &mut OracleHandle,
    beta: f64,
    minus: Choice,
    plus: Choice,
    profile: &ConstantsProfile,
) -> Result<Segment> {
    let (n, rho) = {
        let d = oracle.domain();
        if !d.is_integer() {
            return domain("interval search needs integer energies");
        }
        (d.n_int() as u32, d.rho())
    };
    for c in [minus, plus] {
        if let Choice::Range(lo, hi) = c {
            if lo > hi || hi > n {
                return domain(format!("empty or out-of-range side {lo}..={hi}"));
            }
        }
    }
    let (h_minus, h_plus) = (minus.far_end(true), plus.far_end(false));
    let s = span(h_minus, h_plus, n).max(1);
    let phi = phi(profile, rho);
    let lambda = profile.schedule_lambda;
    let need_sample = matches!(minus, Choice::Range(..)) || matches!(plus, Choice::Range(..));
    let mu_hat: Vec<f64> = if need_sample {
        let spec = SampleSpec::Calibrated {
            eps: 0.5 * (1.0 / lambda).ln(),
            gamma: 1.0 / (4.0 * ((n + 2) as f64).powi(2)),
            p0: (phi / s as f64).min(1.0),
        };
        let sample = sample_empirical(oracle, beta, spec, profile)?;
        (0..=n).map(|k| sample.prob(k as f64)).collect()
    } else {
        Vec::new()
    };
    let far = (h_minus, h_plus);
    let k_minus = match minus {
        Choice::Forced(b) => b,
        Choice::Range(lo, hi) => Bound::At(argmax_smallest(&side_scores(&mu_hat, lo, hi, hi, far, lambda)).unwrap()),
    };
    let k_plus = match plus {
        Choice::Forced(b) => b,
        Choice::Range(lo, hi) => Bound::At(argmax_smallest(&side_scores(&mu_hat, lo, hi, lo, far, lambda)).unwrap()),
    };
    if k_minus > k_plus {
        return domain(format!("sides cross: {k_minus} > {k_plus}"));
    }
    Ok(Segment {
        beta,
        sigma_minus: k_minus,
        sigma_plus: k_plus,
        w: (phi / span(k_minus, k_plus, n).max(1) as f64).min(1.0),
    })
}

/// Context of a gap-filling interval search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapFill {
    pub left: Segment,
    pub right: Segment,
    /// Half-integer energy the search aimed at.
    pub target: f64,
}

/// One interval search made while building a pre-schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalCall {
    pub beta: f64,
    pub minus: Choice,
    pub plus: Choice,
    pub gap: Option<GapFill>,
    pub segment: Segment,
}

/// Pre-schedule before and after trimming, with every interval search made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreScheduleTrace {
    pub grown: PreSchedule,
    pub minimal: PreSchedule,
    pub calls: Vec<IntervalCall>,
}

/// Builds a minimal pre-schedule for an integer-energy oracle.
pub fn build_pre_schedule(oracle: &mut OracleHandle, profile: &ConstantsProfile) -> Result<PreSchedule> {
    Ok(build_pre_schedule_traced(oracle, profile)?.minimal)
}

/// [`build_pre_schedule`] keeping the grown sequence and the interval searches.
pub fn build_pre_schedule_traced(oracle: &mut OracleHandle, profile: &ConstantsProfile) -> Result<PreScheduleTrace> {
    let (bmin, bmax, n, rho) = {
        let d = oracle.domain();
        if !d.is_integer() {
            return domain("schedules need integer energies");
        }
        (d.beta_min, d.beta_max, d.n_int() as u32, d.rho())
    };
    if bmin == bmax {
        let seg = Segment {
            beta: bmin,
            sigma_minus: Bound::NegInf,
            sigma_plus: Bound::PosInf,
            w: (phi(profile, rho) / (n + 1) as f64).min(1.0),
        };
        let pre = PreSchedule { segments: vec![seg] };
        return Ok(PreScheduleTrace {
            grown: pre.clone(),
            minimal: pre,
            calls: Vec::new(),
        });
    }
    let mut calls = Vec::new();
    let mut call = |oracle: &mut OracleHandle, beta, minus, plus, gap| -> Result<Segment> {
        let segment = find_interval(oracle, beta, minus, plus, profile)?;
        calls.push(IntervalCall {
            beta,
            minus,
            plus,
            gap,
            segment,
        });
        Ok(segment)
    };
    let first = call(oracle, bmin, Choice::Forced(Bound::NegInf), Choice::Range(0, n), None)?;
    let last = call(oracle, bmax, Choice::Range(0, n), Choice::Forced(Bound::PosInf), None)?;
    let mut segs = vec![first, last];
    let search_gamma = 1.0 / (4.0 * n.max(1) as f64);
    loop {
        let gap = segs.windows(2).position(|p| p[0].sigma_plus < p[1].sigma_minus);
        let Some(i) = gap else { break };
        let (left, right) = (segs[i], segs[i + 1]);
        let (a, b) = match (left.sigma_plus.finite(), right.sigma_minus.finite()) {
            (Some(a), Some(b)) => (a, b),
            _ => return domain("gap between sentinel ends"),
        };
        let target = a as f64 + 0.5 + ((b - a - 1) / 2) as f64;
        if !(left.beta < right.beta) {
            return domain("gap between segments at equal temperatures");
        }
        let beta = binary_search(oracle, left.beta, right.beta, target, search_gamma, profile.schedule_tau, profile)?;
        let below = target.floor() as u32;
        let lower_range = Choice::Range(left.sigma_minus.finite().unwrap_or(0), below);
        let upper_range = Choice::Range(below + 1, right.sigma_plus.finite().unwrap_or(n).min(n));
        let (minus, plus) = if beta == left.beta {
            (Choice::Forced(left.sigma_minus), upper_range)
        } else if beta == right.beta {
            (lower_range, Choice::Forced(right.sigma_plus))
        } else {
            (lower_range, upper_range)
        };
        let seg = call(oracle, beta, minus, plus, Some(GapFill { left, right, target }))?;
        segs.insert(i + 1, seg);
        let grown = PreSchedule { segments: segs.clone() };
        if let Some(v) = grown.violation(bmin, bmax, n, false) {
            return domain(format!("pre-schedule invariant broken while growing: {v}"));
        }
    }
    let grown = PreSchedule { segments: segs };
    let minimal = minimalize(&grown, bmin, bmax, n)?;
    Ok(PreScheduleTrace { grown, minimal, calls })
}

/// Chained segments: each interval starts where the previous one ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringSchedule {
    pub segments: Vec<Segment>,
}

impl CoveringSchedule {
    pub fn inv_weight(&self) -> f64 {
        inv_weight(&self.segments)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.beta).collect()
    }

    /// Energy shared by segments `i - 1` and `i`, for `i` in `1..len`.
    pub fn shared(&self, i: usize) -> u32 {
        self.segments[i].sigma_minus.finite().expect("interior ends are finite")
    }

    /// First violated chaining property.
    pub fn violation(&self, beta_min: f64, beta_max: f64, n: u32) -> Option<String> {
        let segs = &self.segments;
        let (first, last) = match (segs.first(), segs.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Some("empty schedule".into()),
        };
        if first.beta != beta_min || last.beta != beta_max {
            return Some("schedule must start at beta_min and end at beta_max".into());
        }
        if first.sigma_minus != Bound::NegInf || last.sigma_plus != Bound::PosInf {
            return Some("missing sentinel ends".into());
        }
        for s in segs {
            if !(s.w > 0.0 && s.w <= 1.0) {
                return Some(format!("weight {} outside (0, 1]", s.w));
            }
            if s.sigma_minus >= s.sigma_plus {
                return Some("empty or reversed interval".into());
            }
            if [s.sigma_minus, s.sigma_plus].iter().any(|b| b.finite().is_some_and(|k| k > n)) {
                return Some("interval end beyond the largest energy".into());
            }
        }
        for p in segs.windows(2) {
            if !(p[0].beta < p[1].beta) {
                return Some("inverse temperatures must increase".into());
            }
            if p[0].sigma_plus != p[1].sigma_minus {
                return Some("consecutive intervals must share an end".into());
            }
        }
        None
    }

    /// Whether every finite end has probability at least its segment weight under the exact law.
    pub fn is_proper(&self, inst: &GibbsInstance) -> Result<bool> {
        all_proper(&self.segments, inst)
    }
}

/// Turns a minimal pre-schedule into a covering schedule by checking a shared end between
/// each consecutive pair, or returns `None` when some pair has no such end.
pub fn uncross_schedule(
    oracle: &mut OracleHandle,
    pre: &PreSchedule,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<Option<CoveringSchedule>> {
    let (bmin, bmax, n) = {
        let d = oracle.domain();
        (d.beta_min, d.beta_max, d.n_int() as u32)
    };
    if let Some(v) = pre.violation(bmin, bmax, n, true) {
        return domain(format!("not a pre-schedule: {v}"));
    }
    if !pre.is_interleaved() {
        return domain("pre-schedule is not minimal");
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("gamma = {gamma} must lie in (0, 1)"));
    }
    let nu = profile.schedule_nu;
    let segs = &pre.segments;
    let t = segs.len() - 1;
    let mut mu_hat = Vec::with_capacity(segs.len());
    if t > 0 {
        for s in segs {
            let spec = SampleSpec::Calibrated {
                eps: nu / 2.0,
                gamma: gamma / (4.0 * (t + 1) as f64),
                p0: (-nu / 2.0).exp() * s.w,
            };
            mu_hat.push(sample_empirical(oracle, s.beta, spec, profile)?);
        }
    }
    let mut ends = vec![Bound::NegInf];
    for i in 1..=t {
        let heavy = |k: Bound| {
            let x = k.as_f64();
            mu_hat[i - 1].prob(x) >= (-nu / 2.0).exp() * segs[i - 1].w && mu_hat[i].prob(x) >= (-nu / 2.0).exp() * segs[i].w
        };
        match [segs[i - 1].sigma_plus, segs[i].sigma_minus].into_iter().find(|&k| heavy(k)) {
            Some(k) => ends.push(k),
            None => return Ok(None),
        }
    }
    ends.push(Bound::PosInf);
    let segments = segs
        .iter()
        .enumerate()
        .map(|(i, s)| Segment {
            beta: s.beta,
            sigma_minus: ends[i],
            sigma_plus: ends[i + 1],
            w: (-nu).exp() * s.w,
        })
        .collect();
    Ok(Some(CoveringSchedule { segments }))
}

/// Covering schedule together with the number of construction attempts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub schedule: CoveringSchedule,
    pub attempts: usize,
}

/// Covering schedule that is proper with probability `1 - gamma`.
pub fn find_covering_schedule(oracle: &mut OracleHandle, gamma: f64, profile: &ConstantsProfile) -> Result<CoveringSchedule> {
    Ok(find_covering_schedule_traced(oracle, gamma, profile)?.schedule)
}

/// [`find_covering_schedule`] reporting how many attempts it took.
pub fn find_covering_schedule_traced(
    oracle: &mut OracleHandle,
    gamma: f64,
    profile: &ConstantsProfile,
) -> Result<ScheduleOutcome> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("gamma = {gamma} must lie in (0, 1)"));
    }
    for attempts in 1..=profile.schedule_retries {
        let pre = build_pre_schedule(oracle, profile)?;
        if let Some(schedule) = uncross_schedule(oracle, &pre, gamma / 4.0, profile)? {
            return Ok(ScheduleOutcome { schedule, attempts });
        }
    }
    Err(Error::GiveUp(profile.schedule_retries))
}
