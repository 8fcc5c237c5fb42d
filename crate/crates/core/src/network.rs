//! Periodic transmission attempts and the successes that survive DoS.

use serde::{Deserialize, Serialize};

use crate::dos::DosSignal;
use crate::error::{Error, Result};

/// Attempts at `t_k = kΔ`, starting from `t_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    delta: f64,
}

impl Schedule {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Domain(format!(
                "transmission period must be positive, got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn attempt_time(&self, k: u64) -> f64 {
        k as f64 * self.delta
    }

    /// Index of the last attempt not after `horizon`.
    ///
    /// The horizon is inclusive up to a relative slack of `1e-9 Δ`, so that an
    /// attempt like `3 × 0.1` still counts for a horizon of `0.3`.
    pub fn last_attempt(&self, horizon: f64) -> Option<u64> {
        let limit = horizon + 1e-9 * self.delta;
        if limit < 0.0 {
            return None;
        }
        let mut k = (limit / self.delta).floor() as u64;
        while self.attempt_time(k + 1) <= limit {
            k += 1;
        }
        while k > 0 && self.attempt_time(k) > limit {
            k -= 1;
        }
        Some(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Attempt {
    pub t: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TxLog {
    pub attempts: Vec<Attempt>,
    pub successes: Vec<f64>,
}

impl TxLog {
    pub fn failure_rate(&self) -> f64 {
        if self.attempts.is_empty() {
            return 0.0;
        }
        1.0 - self.successes.len() as f64 / self.attempts.len() as f64
    }
}

/// Resolves every attempt `kΔ ≤ horizon` against the DoS signal.
///
/// An attempt fails iff it falls inside some `H_n`; in particular an attempt
/// coinciding with a zero-length pulse fails.
pub fn resolve_attempts(sched: &Schedule, sig: &DosSignal, horizon: f64) -> TxLog {
    let Some(last) = sched.last_attempt(horizon) else {
        return TxLog::default();
    };
    let attempts: Vec<Attempt> = (0..=last)
        .map(|k| {
            let t = sched.attempt_time(k);
            Attempt {
                t,
                success: !sig.in_dos(t),
            }
        })
        .collect();
    let successes = attempts.iter().filter(|a| a.success).map(|a| a.t).collect();
    TxLog { attempts, successes }
}

/// First success `z_0` and the largest gap between consecutive successes.
pub fn max_gap(log: &TxLog) -> Result<(f64, f64)> {
    let z0 = *log
        .successes
        .first()
        .ok_or_else(|| Error::Empty("no successful transmission".into()))?;
    let gap = log.successes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok((z0, gap))
}
