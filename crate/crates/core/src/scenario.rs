//! JSON scenario documents and the embedded reference experiment.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bound::Bound;
use crate::certify::{build_cert, verdict, LyapCert, RobustnessReport};
use crate::control::{ControllerKind, Gain, Plant};
use crate::dos::{gen_pulse_train, gen_random_pwm, DosBudget, DosInterval, DosSignal, Normalization};
use crate::error::{Error, Result};
use crate::matkit::{from_rows, Mat};
use crate::network::Schedule;
use crate::sim::{NoiseSpec, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DosSpec {
    #[default]
    None,
    /// `h,tau` CSV, relative paths resolved against the scenario file.
    File {
        path: String,
    },
    Explicit {
        intervals: Vec<DosInterval>,
    },
    RandomPwm {
        off: (f64, f64),
        on: (f64, f64),
        horizon: f64,
        seed: u64,
    },
    PulseTrain {
        horizon: f64,
    },
}

/// Budget used for certification. Missing `eta`/`kappa` are fitted to the
/// realized signal over the simulation horizon; a missing budget uses the
/// horizon-averaged `τ_D` and `T` of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub tau_d: Bound,
    pub t: Bound,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub x0: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "SimConfig::default_step")]
    pub h_sim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default = "Outputs::default_trace")]
    pub trace: String,
    #[serde(default = "Outputs::default_metrics")]
    pub metrics: String,
    #[serde(default = "Outputs::default_report")]
    pub report: String,
}

impl Outputs {
    fn default_trace() -> String {
        "trace.csv".into()
    }
    fn default_metrics() -> String {
        "metrics.json".into()
    }
    fn default_report() -> String {
        "report.json".into()
    }
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            trace: Self::default_trace(),
            metrics: Self::default_metrics(),
            report: Self::default_report(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub plant: PlantSpec,
    pub gain: Vec<Vec<f64>>,
    #[serde(default)]
    pub q_l: Option<Vec<Vec<f64>>>,
    pub delta: f64,
    pub controller: ControllerKind,
    #[serde(default)]
    pub dos: DosSpec,
    #[serde(default)]
    pub budget: Option<BudgetSpec>,
    #[serde(default = "NoiseSpec::none")]
    pub noise: NoiseSpec,
    pub sim: SimSpec,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Seed of the reference DoS realization.
pub const REFERENCE_DOS_SEED: u64 = 25;
/// Seed of the reference noise realization.
pub const REFERENCE_NOISE_SEED: u64 = 7;
pub const REFERENCE_OFF_RANGE: (f64, f64) = (0.1, 0.35);
pub const REFERENCE_ON_RANGE: (f64, f64) = (0.55, 1.0);

impl Scenario {
    /// Double integrator with a cross-coupled gain, `Δ = 0.1`, a 50 s
    /// random-PWM jammer and uniform noise of amplitude 0.1.
    pub fn reference(controller: ControllerKind) -> Self {
        Self {
            plant: PlantSpec {
                a: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
                b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            gain: vec![vec![-2.1961, -0.7545], vec![-0.7545, -2.7146]],
            q_l: None,
            delta: 0.1,
            controller,
            dos: DosSpec::RandomPwm {
                off: REFERENCE_OFF_RANGE,
                on: REFERENCE_ON_RANGE,
                horizon: 50.0,
                seed: REFERENCE_DOS_SEED,
            },
            budget: Some(BudgetSpec {
                tau_d: Bound::Finite(0.96),
                t: Bound::Finite(1.29),
                eta: None,
                kappa: None,
            }),
            noise: NoiseSpec::uniform(0.1, REFERENCE_NOISE_SEED),
            sim: SimSpec {
                x0: vec![1.0, 1.0],
                t_end: 50.0,
                h_sim: SimConfig::default_step(),
            },
            outputs: Outputs::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    /// Replaces the noise seed and, for random-PWM jammers, the DoS seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.seed = seed;
        if let DosSpec::RandomPwm { seed: s, .. } = &mut self.dos {
            *s = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        self.gain_for(&plant)?;
        if let Some(q) = self.q_l()? {
            if q.shape() != (plant.states(), plant.states()) {
                return Err(Error::Config("q_l must be n×n".into()));
            }
        }
        Schedule::new(self.delta).map_err(|e| Error::Config(e.to_string()))?;
        if self.sim.x0.len() != plant.states() {
            return Err(Error::Config(format!(
                "x0 has length {}, plant has {} states",
                self.sim.x0.len(),
                plant.states()
            )));
        }
        if let ControllerKind::Digital { b: 0 } = self.controller {
            return Err(Error::Config("digital controller needs b ≥ 1".into()));
        }
        if let Some(b) = &self.budget {
            DosBudget::new(b.eta.unwrap_or(0.0), b.tau_d, b.kappa.unwrap_or(0.0), b.t)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<Plant> {
        Plant::new(from_rows(&self.plant.a)?, from_rows(&self.plant.b)?)
    }

    fn gain_for(&self, plant: &Plant) -> Result<Gain> {
        Gain::for_plant(from_rows(&self.gain)?, plant)
    }

    pub fn gain(&self) -> Result<Gain> {
        self.gain_for(&self.plant()?)
    }

    pub fn q_l(&self) -> Result<Option<Mat>> {
        self.q_l.as_deref().map(from_rows).transpose()
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.delta)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            x0: self.sim.x0.clone(),
            t_end: self.sim.t_end,
            h_sim: self.sim.h_sim,
            controller: self.controller,
        }
    }

    /// Realizes the DoS signal. `base` anchors relative file paths.
    pub fn signal(&self, base: Option<&Path>) -> Result<(DosSignal, Normalization)> {
        let clean = |s: DosSignal| (s, Normalization::default());
        match &self.dos {
            DosSpec::None => Ok(clean(DosSignal::empty())),
            DosSpec::File { path } => {
                let p = match base {
                    Some(dir) => dir.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                let f = File::open(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                DosSignal::read_csv(f)
            }
            DosSpec::Explicit { intervals } => DosSignal::normalized(intervals.clone()),
            DosSpec::RandomPwm { off, on, horizon, seed } => gen_random_pwm(*off, *on, *horizon, *seed).map(clean),
            DosSpec::PulseTrain { horizon } => gen_pulse_train(self.delta, *horizon).map(clean),
        }
    }

    /// Budget for certification, fitted to `sig` where the scenario leaves
    /// parameters open.
    pub fn budget(&self, sig: &DosSignal) -> Result<DosBudget> {
        let horizon = self.sim.t_end.max(sig.extent());
        let (tau_d, t) = match &self.budget {
            Some(b) => (b.tau_d, b.t),
            None => averaged(sig, horizon)?,
        };
        let eta_kappa = self.budget.and_then(|b| b.eta.zip(b.kappa));
        let (eta, kappa) = match eta_kappa {
            Some(pair) => pair,
            None => {
                let fit = sig.fit_budget(tau_d, t, horizon)?;
                let b = self.budget.as_ref();
                (
                    b.and_then(|b| b.eta).unwrap_or(fit.eta),
                    b.and_then(|b| b.kappa).unwrap_or(fit.kappa),
                )
            }
        };
        DosBudget::new(eta, tau_d, kappa, t)
    }

    pub fn certificate(&self) -> Result<LyapCert> {
        let q = self
            .q_l()?
            .unwrap_or_else(|| Mat::identity(self.plant.a.len(), self.plant.a.len()));
        build_cert(&self.plant()?, &self.gain()?, &q)
    }

    pub fn report(&self, sig: &DosSignal) -> Result<RobustnessReport> {
        verdict(&self.certificate()?, &self.budget(sig)?, self.delta, self.controller)
    }
}

/// Horizon-averaged `(τ̄_D, T̄)`, clamped to the admissible `T ≥ 1`.
pub fn averaged(sig: &DosSignal, horizon: f64) -> Result<(Bound, Bound)> {
    let n = sig.count_transitions(0.0, horizon)?;
    let xi = sig.dos_measure(0.0, horizon)?;
    let t = match Bound::quotient(horizon, xi) {
        Bound::Finite(v) => Bound::Finite(v.max(1.0)),
        b => b,
    };
    Ok((Bound::quotient(horizon, n as f64), t))
}
