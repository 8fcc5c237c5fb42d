//! Event-driven hybrid simulation of the networked loop.
//!
//! Time advances on a fixed micro-step grid `t_i = i h`. Transmission attempts,
//! controller ticks and noise redraws must all fall on that grid. Between grid
//! points the input `u` and the disturbance `d` are held, so the plant is
//! propagated exactly with the zero-order-hold discretization; the analog
//! predictor is propagated jointly with the plant through `[[A, BK], [0, Φ]]`.
//!
//! At every grid point, events are handled in a fixed order: DoS status,
//! transmission attempt, controller reset or tick, then the recorded row. Rows
//! therefore hold right-continuous values.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::Bound;
use crate::control::{closed_loop, ControllerKind, DigitalPredState, DigitalPredictor, Gain, Plant};
use crate::dos::DosSignal;
use crate::error::{Error, Result};
use crate::matkit::{self, Mat, Vector};
use crate::network::Schedule;

/// Runs stop once `‖x‖` exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Runs whose state norm exceeds this are reported as diverged.
pub const DIVERGED_THRESHOLD: f64 = 1e6;

fn default_hold() -> Option<f64> {
    None
}

/// Uniform disturbance and measurement noise, redrawn every `hold` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub d_bound: f64,
    pub n_bound: f64,
    /// Redraw interval; defaults to the simulation micro-step.
    #[serde(default = "default_hold")]
    pub hold: Option<f64>,
    pub seed: u64,
    /// Both signals are zero from this time on.
    #[serde(default)]
    pub zero_after: Option<f64>,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            d_bound: 0.0,
            n_bound: 0.0,
            hold: None,
            seed: 0,
            zero_after: None,
        }
    }

    pub fn uniform(bound: f64, seed: u64) -> Self {
        Self {
            d_bound: bound,
            n_bound: bound,
            hold: None,
            seed,
            zero_after: None,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            d_bound: self.d_bound * factor,
            n_bound: self.n_bound * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "SimConfig::default_step")]
    pub h_sim: f64,
    pub controller: ControllerKind,
}

impl SimConfig {
    pub fn default_step() -> f64 {
        1e-3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vector,
    /// `x̂` (analog), `α` (digital) or the last received measurement (static).
    pub est: Vector,
    pub u: Vector,
    pub dos: bool,
    pub attempt: bool,
    pub success: bool,
    pub err_norm: f64,
    /// `sup_{s ≤ t} ‖(d(s), n(s))‖`.
    pub w_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub controller: ControllerKind,
    pub delta: f64,
    pub h_sim: f64,
    pub rows: Vec<TraceRow>,
    pub z0: Option<f64>,
    pub aborted_at: Option<f64>,
}

impl SimTrace {
    pub fn aborted(&self) -> bool {
        self.aborted_at.is_some()
    }

    pub fn states(&self) -> usize {
        self.rows.first().map_or(0, |r| r.x.len())
    }

    pub fn inputs(&self) -> usize {
        self.rows.first().map_or(0, |r| r.u.len())
    }

    /// Row at or right after `t`.
    pub fn row_at(&self, t: f64) -> Option<&TraceRow> {
        let i = self.rows.partition_point(|r| r.t < t - 1e-9 * self.h_sim);
        self.rows.get(i)
    }

    /// Writes `t,x1..xn,est1..estn,u1..um,dos,attempt,success,err_norm`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let (n, m) = (self.states(), self.inputs());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("est{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend(["dos", "attempt", "success", "err_norm"].map(String::from));

        let io = |e: csv::Error| Error::Config(format!("writing trace: {e}"));
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&header).map_err(io)?;
        let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
        for r in &self.rows {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(r.t.to_string());
            rec.extend(r.x.iter().map(f64::to_string));
            rec.extend(r.est.iter().map(f64::to_string));
            rec.extend(r.u.iter().map(f64::to_string));
            rec.extend([flag(r.dos), flag(r.attempt), flag(r.success), r.err_norm.to_string()]);
            wtr.write_record(&rec).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Config(format!("writing trace: {e}")))
    }
}

/// Number of micro-steps in `period`, which must be a whole multiple of `h`.
fn steps_in(period: f64, h: f64, what: &str) -> Result<u64> {
    let k = (period / h).round();
    if k < 1.0 || (k * h - period).abs() > 1e-9 * period {
        return Err(Error::Config(format!(
            "{what} {period} is not a whole multiple of the micro-step {h}"
        )));
    }
    Ok(k as u64)
}

struct NoiseSource {
    rng: ChaCha8Rng,
    params: NoiseSpec,
    d: Vector,
    n: Vector,
}

impl NoiseSource {
    fn new(params: NoiseSpec, dim: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            params,
            d: Vector::zeros(dim),
            n: Vector::zeros(dim),
        }
    }

    /// Draws both signals for the hold interval starting at `t`. The stream
    /// advances even when the signals are forced to zero, so runs that differ
    /// only in bounds or cut-off share their underlying draws.
    fn redraw(&mut self, t: f64) {
        let quiet = self.params.zero_after.is_some_and(|t0| t >= t0);
        for v in self.d.iter_mut() {
            *v = (2.0 * self.rng.random::<f64>() - 1.0) * self.params.d_bound;
        }
        for v in self.n.iter_mut() {
            *v = (2.0 * self.rng.random::<f64>() - 1.0) * self.params.n_bound;
        }
        if quiet {
            self.d.fill(0.0);
            self.n.fill(0.0);
        }
    }

    fn w_norm(&self) -> f64 {
        (self.d.norm_squared() + self.n.norm_squared()).sqrt()
    }
}

enum Loop {
    Static { last_y: Option<Vector> },
    Analog { xhat: Vector, flow: Mat, inject: Mat },
    Digital { pred: DigitalPredictor, tick_steps: u64 },
}

/// Simulates the closed loop from `t = 0` to `cfg.t_end`.
pub fn run(
    plant: &Plant,
    gain: &Gain,
    sched: &Schedule,
    sig: &DosSignal,
    noise: &NoiseSpec,
    cfg: &SimConfig,
) -> Result<SimTrace> {
    let n = plant.states();
    if cfg.x0.len() != n {
        return Err(Error::Config(format!(
            "x0 has length {}, plant has {n} states",
            cfg.x0.len()
        )));
    }
    if gain.k().shape() != (plant.inputs(), n) {
        return Err(Error::Config("gain does not match plant".into()));
    }
    if !(cfg.h_sim > 0.0 && cfg.t_end > 0.0 && cfg.t_end.is_finite()) {
        return Err(Error::Config("h_sim and t_end must be positive".into()));
    }
    if !(noise.d_bound >= 0.0 && noise.n_bound >= 0.0) {
        return Err(Error::Config("noise bounds must be non-negative".into()));
    }
    let h = cfg.h_sim;
    let attempt_steps = steps_in(sched.delta(), h, "transmission period")?;
    let hold_steps = match noise.hold {
        Some(hold) if hold > 0.0 => steps_in(hold, h, "noise hold")?,
        Some(hold) => return Err(Error::Config(format!("noise hold must be positive, got {hold}"))),
        None => 1,
    };
    let total_steps = (cfg.t_end / h).round() as u64;

    let identity = Mat::identity(n, n);
    let (a_h, drive) = matkit::discretize(plant.a(), &concat_cols(plant.b(), &identity), h)?;
    let m = plant.inputs();
    let b_u = drive.columns(0, m).into_owned();
    let b_d = drive.columns(m, n).into_owned();

    let mut ctl = match cfg.controller {
        ControllerKind::Static => Loop::Static { last_y: None },
        ControllerKind::Analog => {
            let phi = closed_loop(plant, gain);
            let mut aug = Mat::zeros(2 * n, 2 * n);
            aug.view_mut((0, 0), (n, n)).copy_from(plant.a());
            aug.view_mut((0, n), (n, n)).copy_from(&(plant.b() * gain.k()));
            aug.view_mut((n, n), (n, n)).copy_from(&phi);
            let mut entry = Mat::zeros(2 * n, n);
            entry.view_mut((0, 0), (n, n)).copy_from(&identity);
            let (flow, inject) = matkit::discretize(&aug, &entry, h)?;
            Loop::Analog {
                xhat: Vector::zeros(n),
                flow,
                inject,
            }
        }
        ControllerKind::Digital { b } => {
            let state = DigitalPredState::new(n, sched.delta(), b)?;
            let tick_steps = steps_in(state.delta(), h, "controller period")?;
            Loop::Digital {
                pred: DigitalPredictor::new(plant, gain, state)?,
                tick_steps,
            }
        }
    };

    let mut noise_src = NoiseSource::new(*noise, n);
    let mut x = Vector::from_column_slice(&cfg.x0);
    let mut u = Vector::zeros(m);
    let mut w_sup = 0.0f64;
    let mut z0 = None;
    let mut aborted_at = None;
    let mut rows = Vec::with_capacity(total_steps as usize + 1);

    for i in 0..=total_steps {
        let t = i as f64 * h;
        if i % hold_steps == 0 {
            noise_src.redraw(t);
            w_sup = w_sup.max(noise_src.w_norm());
        }
        let attempt = i % attempt_steps == 0;
        let measurement = if attempt {
            let t_k = sched.attempt_time(i / attempt_steps);
            (!sig.in_dos(t_k)).then(|| &x + &noise_src.n)
        } else {
            None
        };
        let success = measurement.is_some();
        if success && z0.is_none() {
            z0 = Some(t);
        }

        let est = match &mut ctl {
            Loop::Static { last_y } => {
                if let Some(y) = measurement {
                    u = gain.apply(&y);
                    *last_y = Some(y);
                }
                last_y.clone().unwrap_or_else(|| Vector::zeros(n))
            }
            Loop::Analog { xhat, .. } => {
                if let Some(y) = measurement {
                    *xhat = y;
                }
                u = gain.apply(xhat);
                xhat.clone()
            }
            Loop::Digital { pred, tick_steps } => {
                if i % *tick_steps == 0 {
                    u = pred.tick(measurement.as_ref())?;
                }
                pred.state.alpha.clone()
            }
        };

        let x_norm = x.norm();
        rows.push(TraceRow {
            t,
            err_norm: (&est - &x).norm(),
            x: x.clone(),
            est,
            u: u.clone(),
            dos: sig.in_dos(t),
            attempt,
            success,
            w_sup,
        });
        if x_norm.is_nan() || x_norm > DIVERGENCE_LIMIT {
            aborted_at = Some(t);
            break;
        }
        if i == total_steps {
            break;
        }

        match &mut ctl {
            Loop::Analog { xhat, flow, inject } => {
                let mut joint = Vector::zeros(2 * n);
                joint.rows_mut(0, n).copy_from(&x);
                joint.rows_mut(n, n).copy_from(xhat);
                let next = &*flow * joint + &*inject * &noise_src.d;
                x = next.rows(0, n).into_owned();
                *xhat = next.rows(n, n).into_owned();
            }
            _ => {
                x = &a_h * &x + &b_u * &u + &b_d * &noise_src.d;
            }
        }
    }

    Ok(SimTrace {
        controller: cfg.controller,
        delta: sched.delta(),
        h_sim: h,
        rows,
        z0,
        aborted_at,
    })
}

fn concat_cols(left: &Mat, right: &Mat) -> Mat {
    let mut out = Mat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}

/// Runs one simulation per noise setting in parallel. Results keep input order.
pub fn run_batch(
    plant: &Plant,
    gain: &Gain,
    sched: &Schedule,
    sig: &DosSignal,
    noises: &[NoiseSpec],
    cfg: &SimConfig,
) -> Result<Vec<SimTrace>> {
    noises
        .par_iter()
        .map(|noise| run(plant, gain, sched, sig, noise, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub controller: &'static str,
    pub horizon: f64,
    pub transitions: usize,
    pub dos_time: f64,
    pub tau_d_avg: Bound,
    pub t_avg: Bound,
    /// `1/T̄ + Δ/τ̄_D` from the averaged parameters.
    pub main_lhs_avg: f64,
    pub attempts: usize,
    pub successes: usize,
    pub failure_rate: f64,
    pub z0: Option<f64>,
    pub sup_x: f64,
    pub final_x: f64,
    pub sup_err_after_z0: Option<f64>,
    /// `sup ‖x‖` exceeded [`DIVERGED_THRESHOLD`].
    pub diverged: bool,
    /// Time at which the run was aborted by [`DIVERGENCE_LIMIT`].
    pub aborted_at: Option<f64>,
}

/// Fraction of attempts that failed; zero when there were no attempts.
pub fn failure_rate(attempts: usize, successes: usize) -> f64 {
    if attempts == 0 {
        0.0
    } else {
        (attempts - successes) as f64 / attempts as f64
    }
}

/// Aggregates over `[0, horizon]`.
pub fn metrics(trace: &SimTrace, sig: &DosSignal, horizon: f64) -> Result<Metrics> {
    let transitions = sig.count_transitions(0.0, horizon)?;
    let dos_time = sig.dos_measure(0.0, horizon)?;
    let tau_d_avg = Bound::quotient(horizon, transitions as f64);
    let t_avg = Bound::quotient(horizon, dos_time);
    let within = trace.rows.iter().filter(|r| r.t <= horizon + 1e-9 * trace.h_sim);
    let (mut attempts, mut successes, mut sup_x) = (0, 0, 0.0f64);
    let mut sup_err: Option<f64> = None;
    let mut final_x = 0.0;
    for r in within {
        attempts += r.attempt as usize;
        successes += r.success as usize;
        let nx = r.x.norm();
        sup_x = sup_x.max(nx);
        final_x = nx;
        if trace.z0.is_some_and(|z| r.t >= z) {
            sup_err = Some(sup_err.map_or(r.err_norm, |s: f64| s.max(r.err_norm)));
        }
    }
    Ok(Metrics {
        controller: trace.controller.name(),
        horizon,
        transitions,
        dos_time,
        tau_d_avg,
        t_avg,
        main_lhs_avg: t_avg.recip() + tau_d_avg.ratio(trace.delta),
        attempts,
        successes,
        failure_rate: failure_rate(attempts, successes),
        z0: trace.z0,
        sup_x,
        final_x,
        sup_err_after_z0: sup_err,
        diverged: trace.aborted() || sup_x > DIVERGED_THRESHOLD,
        aborted_at: trace.aborted_at,
    })
}

/// Pointwise checks of the trace-level stability envelopes.
pub mod envelope {
    use super::*;

    /// Slack added to every right-hand side.
    pub const SLACK: f64 = 1e-9;

    fn after_z0(trace: &SimTrace) -> impl Iterator<Item = &TraceRow> {
        let z0 = trace.z0.unwrap_or(f64::INFINITY);
        trace.rows.iter().filter(move |r| r.t >= z0)
    }

    /// Rows with `‖e(t)‖ > ρ ‖w_t‖_∞`.
    pub fn estimation_violations(trace: &SimTrace, rho: f64) -> Vec<f64> {
        after_z0(trace)
            .filter(|r| r.err_norm > rho * r.w_sup + SLACK)
            .map(|r| r.t)
            .collect()
    }

    /// Rows with `‖φ(t)‖ > σ‖x(t)‖ + ρ̃ ‖w_t‖_∞`.
    pub fn sampled_error_violations(trace: &SimTrace, sigma: f64, rho_tilde: f64) -> Vec<f64> {
        after_z0(trace)
            .filter(|r| r.err_norm > sigma * r.x.norm() + rho_tilde * r.w_sup + SLACK)
            .map(|r| r.t)
            .collect()
    }

    /// Rows violating `V(x(t)) ≤ e^{−ω₁(t−z₀)} V(x(z₀)) + (γ₅/ω₁)‖w_t‖²_∞`.
    pub fn iss_violations(trace: &SimTrace, p: &Mat, omega1: f64, gamma5: f64) -> Vec<f64> {
        let v = |x: &Vector| x.dot(&(p * x));
        let Some(z0) = trace.z0 else { return Vec::new() };
        let Some(start) = trace.row_at(z0) else {
            return Vec::new();
        };
        let v0 = v(&start.x);
        after_z0(trace)
            .filter(|r| {
                let bound = (-omega1 * (r.t - z0)).exp() * v0 + gamma5 / omega1 * r.w_sup * r.w_sup;
                v(&r.x) > bound * (1.0 + SLACK) + SLACK
            })
            .map(|r| r.t)
            .collect()
    }
}
