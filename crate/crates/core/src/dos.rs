//! Time-constrained DoS signals.
//!
//! A signal is a sorted set of intervals `H_n = {h_n} ∪ [h_n, h_n + τ_n)`. A
//! zero-length interval is a single pulse at `h_n`, and a pulse still blocks
//! a transmission attempt scheduled exactly at `h_n`.
//!
//! The frequency and duration budgets constrain every window `[a, b]`:
//!
//! ```text
//! n(a, b)   ≤ η + (b − a)/τ_D
//! |Ξ(a, b)| ≤ κ + (b − a)/T
//! ```
//!
//! Checking and fitting both reduce to windows that start at some `h_i` and end
//! right after some `h_j` (frequency) or at the end of interval `j` (duration),
//! which gives linear-time scans over the sorted intervals.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bound::Bound;
use crate::error::{Error, Result};

/// Relative slack used when comparing budget inequalities.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosInterval {
    pub h: f64,
    pub tau: f64,
}

impl DosInterval {
    pub fn new(h: f64, tau: f64) -> Self {
        Self { h, tau }
    }

    pub fn end(&self) -> f64 {
        self.h + self.tau
    }

    pub fn contains(&self, t: f64) -> bool {
        t == self.h || (self.h <= t && t < self.end())
    }
}

/// What normalization had to change in constructor input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Normalization {
    pub reordered: bool,
    pub merged: usize,
}

impl Normalization {
    pub fn changed(&self) -> bool {
        self.reordered || self.merged > 0
    }
}

/// Sorted, non-overlapping DoS intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DosSignal {
    intervals: Vec<DosInterval>,
}

impl DosSignal {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(intervals: Vec<DosInterval>) -> Result<Self> {
        Self::normalized(intervals).map(|(s, _)| s)
    }

    /// Sorts by `h` and merges overlapping intervals into their union.
    pub fn normalized(mut intervals: Vec<DosInterval>) -> Result<(Self, Normalization)> {
        for iv in &intervals {
            if !(iv.h.is_finite() && iv.tau.is_finite()) || iv.h < 0.0 || iv.tau < 0.0 {
                return Err(Error::Domain(format!(
                    "DoS interval needs finite h ≥ 0 and tau ≥ 0, got ({}, {})",
                    iv.h, iv.tau
                )));
            }
        }
        let mut report = Normalization {
            reordered: intervals.windows(2).any(|w| w[1].h < w[0].h),
            merged: 0,
        };
        intervals.sort_by(|a, b| a.h.total_cmp(&b.h).then(a.tau.total_cmp(&b.tau)));

        let mut out: Vec<DosInterval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match out.last_mut() {
                Some(cur) if iv.h == cur.h || iv.h < cur.end() => {
                    let end = cur.end().max(iv.end());
                    cur.tau = end - cur.h;
                    report.merged += 1;
                }
                _ => out.push(iv),
            }
        }
        Ok((Self { intervals: out }, report))
    }

    pub fn intervals(&self) -> &[DosInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Latest instant covered by the signal.
    pub fn extent(&self) -> f64 {
        self.intervals.last().map_or(0.0, DosInterval::end)
    }

    /// Number of off/on transitions `h_n` in `[a, b)`.
    pub fn count_transitions(&self, a: f64, b: f64) -> Result<usize> {
        check_window(a, b)?;
        let hi = self.intervals.partition_point(|iv| iv.h < b);
        let lo = self.intervals.partition_point(|iv| iv.h < a);
        Ok(hi - lo)
    }

    /// Lebesgue measure of the DoS set inside `[a, b]`.
    pub fn dos_measure(&self, a: f64, b: f64) -> Result<f64> {
        check_window(a, b)?;
        let start = self.intervals.partition_point(|iv| iv.end() <= a);
        let total = self.intervals[start..]
            .iter()
            .take_while(|iv| iv.h < b)
            .map(|iv| (iv.end().min(b) - iv.h.max(a)).max(0.0))
            .sum();
        Ok(total)
    }

    /// True when `t` lies in some `H_n`, pulses included.
    pub fn in_dos(&self, t: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.h <= t);
        idx > 0 && self.intervals[idx - 1].contains(t)
    }

    /// Whether both budget inequalities hold on every window inside `[0, horizon]`.
    pub fn check_budget(&self, budget: &DosBudget, horizon: f64) -> bool {
        let freq = self.frequency_excess(budget.tau_d, horizon);
        let dur = self.duration_excess(budget.t, horizon);
        freq <= budget.eta + BUDGET_TOL * (1.0 + budget.eta) && dur <= budget.kappa + BUDGET_TOL * (1.0 + budget.kappa)
    }

    /// Smallest `(η, κ)` for which the budget holds with the given `τ_D` and `T`.
    pub fn fit_budget(&self, tau_d: Bound, t: Bound, horizon: f64) -> Result<BudgetFit> {
        validate_tau_d(tau_d)?;
        validate_t(t)?;
        Ok(BudgetFit {
            eta: self.frequency_excess(tau_d, horizon),
            kappa: self.duration_excess(t, horizon),
        })
    }

    /// `sup_{a ≤ b ≤ horizon} n(a, b) − (b − a)/τ_D`, floored at zero.
    ///
    /// The sup is reached with `a = h_i` and `b → h_j⁺`, i.e.
    /// `(j − i + 1) − (h_j − h_i)/τ_D` over `i ≤ j` with `h_j < horizon`.
    pub fn frequency_excess(&self, tau_d: Bound, horizon: f64) -> f64 {
        let mut best = 0.0f64;
        let mut best_start = f64::NEG_INFINITY;
        for (j, iv) in self.intervals.iter().enumerate() {
            if iv.h >= horizon {
                break;
            }
            best_start = best_start.max(tau_d.ratio(iv.h) - j as f64);
            best = best.max((j + 1) as f64 - tau_d.ratio(iv.h) + best_start);
        }
        best
    }

    /// `sup_{a ≤ b ≤ horizon} |Ξ(a, b)| − (b − a)/T`, floored at zero.
    ///
    /// With `T ≥ 1` the sup is reached for `a = h_i` and `b` at the (clipped)
    /// end of some interval `j ≥ i`.
    pub fn duration_excess(&self, t: Bound, horizon: f64) -> f64 {
        let mut best = 0.0f64;
        let mut best_start = f64::NEG_INFINITY;
        let mut covered = 0.0;
        for iv in &self.intervals {
            if iv.h > horizon {
                break;
            }
            let end = iv.end().min(horizon);
            best_start = best_start.max(t.ratio(iv.h) - covered);
            covered += end - iv.h;
            best = best.max(covered - t.ratio(end) + best_start);
        }
        best
    }

    /// Reads the `h,tau` CSV format. Returns what normalization changed.
    pub fn read_csv<R: Read>(reader: R) -> Result<(Self, Normalization)> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Config(format!("DoS trace: {e}")))?
            .clone();
        if headers.len() != 2 || &headers[0] != "h" || &headers[1] != "tau" {
            return Err(Error::Config(format!(
                "DoS trace header must be `h,tau`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut raw = Vec::new();
        for (line, rec) in rdr.deserialize::<DosInterval>().enumerate() {
            raw.push(rec.map_err(|e| Error::Config(format!("DoS trace row {}: {e}", line + 1)))?);
        }
        Self::normalized(raw)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Config(format!("writing DoS trace: {e}"));
        wtr.write_record(["h", "tau"]).map_err(io)?;
        for iv in &self.intervals {
            wtr.write_record([iv.h.to_string(), iv.tau.to_string()]).map_err(io)?;
        }
        wtr.flush()
            .map_err(|e| Error::Config(format!("writing DoS trace: {e}")))
    }
}

fn check_window(a: f64, b: f64) -> Result<()> {
    if a > b || a.is_nan() || b.is_nan() {
        return Err(Error::Domain(format!("window [{a}, {b}] is empty")));
    }
    Ok(())
}

fn validate_tau_d(tau_d: Bound) -> Result<()> {
    match tau_d {
        Bound::Finite(v) if !(v > 0.0 && v.is_finite()) => {
            Err(Error::Domain(format!("tau_D must be positive, got {v}")))
        }
        _ => Ok(()),
    }
}

fn validate_t(t: Bound) -> Result<()> {
    match t {
        Bound::Finite(v) if !(v >= 1.0 && v.is_finite()) => {
            Err(Error::Domain(format!("T must be at least 1, got {v}")))
        }
        _ => Ok(()),
    }
}

/// Frequency and duration budget `(η, τ_D, κ, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosBudget {
    pub eta: f64,
    pub tau_d: Bound,
    pub kappa: f64,
    pub t: Bound,
}

impl DosBudget {
    pub fn new(eta: f64, tau_d: Bound, kappa: f64, t: Bound) -> Result<Self> {
        let b = Self { eta, tau_d, kappa, t };
        b.validate()?;
        Ok(b)
    }

    /// No DoS at all: `η = κ = 0`, `τ_D = T = ∞`.
    pub fn none() -> Self {
        Self {
            eta: 0.0,
            tau_d: Bound::Unbounded,
            kappa: 0.0,
            t: Bound::Unbounded,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!("eta must be ≥ 0, got {}", self.eta)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa must be ≥ 0, got {}", self.kappa)));
        }
        validate_tau_d(self.tau_d)?;
        validate_t(self.t)
    }

    /// `1/T + Δ/τ_D`; the predictor-based loops need this strictly below one.
    pub fn main_lhs(&self, delta: f64) -> f64 {
        self.t.recip() + self.tau_d.ratio(delta)
    }

    /// Whether `τ_D > Δ`, the well-posedness requirement on the frequency budget.
    pub fn well_posed_for(&self, delta: f64) -> bool {
        self.tau_d.value() > delta && self.t.value() > 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetFit {
    pub eta: f64,
    pub kappa: f64,
}

/// Worst-case DoS-free waiting time `Q = (κ + ηΔ)/(1 − 1/T − Δ/τ_D)`.
///
/// Every DoS realization within `budget` then has its first successful
/// transmission no later than `Q` and consecutive successes at most `Q + Δ` apart.
pub fn dos_free_deadline(budget: &DosBudget, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "transmission period must be positive, got {delta}"
        )));
    }
    budget.validate()?;
    let lhs = budget.main_lhs(delta);
    if lhs >= 1.0 {
        return Err(Error::Infeasible(format!("1/T + Δ/τ_D = {lhs} is not below 1")));
    }
    Ok((budget.kappa + budget.eta * delta) / (1.0 - lhs))
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi <= lo {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Domain(format!(
            "{name} range must satisfy 0 ≤ lo ≤ hi, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

/// Pulse-width-modulated jammer with random period and duty cycle.
///
/// Starting from `t = 0`, draws an off duration then an on duration, each
/// uniform on its range, until `horizon`. The last on-interval is clipped at
/// `horizon`. Deterministic in `seed`.
pub fn gen_random_pwm(off_range: (f64, f64), on_range: (f64, f64), horizon: f64, seed: u64) -> Result<DosSignal> {
    check_range("off", off_range)?;
    check_range("on", on_range)?;
    if off_range.1 <= 0.0 {
        return Err(Error::Domain("off range must allow positive durations".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut intervals = Vec::new();
    let mut t = 0.0;
    loop {
        t += uniform(&mut rng, off_range);
        if t >= horizon {
            break;
        }
        let tau = uniform(&mut rng, on_range).min(horizon - t);
        intervals.push(DosInterval::new(t, tau));
        t += tau;
    }
    DosSignal::new(intervals)
}

/// Pulses exactly at every transmission attempt `kΔ ≤ horizon`.
pub fn gen_pulse_train(delta: f64, horizon: f64) -> Result<DosSignal> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("period must be positive, got {delta}")));
    }
    let last = (horizon / delta + 1e-9).floor().max(-1.0) as i64;
    let intervals = (0..=last).map(|k| DosInterval::new(k as f64 * delta, 0.0)).collect();
    DosSignal::new(intervals)
}
