//! Closed-form stability certificates.
//!
//! Starting from a Lyapunov pair `(Q_L, P)` for `Φ = A + BK`, this module
//! derives the scalar constants used by the three controllers and decides
//! whether a DoS budget is tolerated:
//!
//! * predictor-based loops need `1/T + Δ/τ_D < 1`;
//! * the digital loop additionally needs its period `δ` below the bound
//!   obtained from `f(δ) ≤ σ/((1 + σ) max{‖Φ‖, 1})`;
//! * static feedback needs `1/T + Δ/τ_D < ω₁/(ω₁ + ω₂)`, with `Δ` itself under
//!   the same bound as `δ`.

use serde::{Serialize, Serializer};

use crate::bound::Bound;
use crate::control::{closed_loop, ControllerKind, Gain, Plant};
use crate::dos::{dos_free_deadline, DosBudget};
use crate::error::{Error, Result};
use crate::matkit::{self, Mat};

fn serialize_rows<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    matkit::to_rows(m).serialize(s)
}

/// Lyapunov certificate of the nominal closed loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapCert {
    #[serde(serialize_with = "serialize_rows")]
    pub q_l: Mat,
    #[serde(serialize_with = "serialize_rows")]
    pub p: Mat,
    /// `λ_min(Q_L)`
    pub gamma1: f64,
    /// `‖2PBK‖`
    pub gamma2: f64,
    /// `‖2P‖`
    pub gamma3: f64,
    /// `λ_min(P)`
    pub alpha1: f64,
    /// `λ_max(P)`
    pub alpha2: f64,
    /// `‖Φ‖`
    pub phi_norm: f64,
    /// Logarithmic norm of `A`.
    pub mu_a: f64,
}

pub fn build_cert(plant: &Plant, gain: &Gain, q_l: &Mat) -> Result<LyapCert> {
    if gain.k().shape() != (plant.inputs(), plant.states()) {
        return Err(Error::Dimension("gain does not match plant".into()));
    }
    let phi = closed_loop(plant, gain);
    let p = matkit::lyap_solve(&phi, q_l)?;
    let (gamma1, _) = matkit::sym_eig_extremes(q_l)?;
    let (alpha1, alpha2) = matkit::sym_eig_extremes(&p)?;
    let pbk = &p * plant.b() * gain.k() * 2.0;
    Ok(LyapCert {
        gamma1,
        gamma2: matkit::spectral_norm(&pbk)?,
        gamma3: matkit::spectral_norm(&(&p * 2.0))?,
        alpha1,
        alpha2,
        phi_norm: matkit::spectral_norm(&phi)?,
        mu_a: matkit::log_norm_2(plant.a())?,
        q_l: q_l.clone(),
        p,
    })
}

/// Supremum of admissible `σ` (those with `γ₁ − σγ₂ > 0`).
pub fn sigma_max(cert: &LyapCert) -> Bound {
    Bound::quotient(cert.gamma1, cert.gamma2)
}

fn check_sigma(cert: &LyapCert, sigma: f64) -> Result<()> {
    let within = match sigma_max(cert) {
        Bound::Finite(max) => sigma <= max,
        Bound::Unbounded => sigma.is_finite(),
    };
    if sigma > 0.0 && within {
        Ok(())
    } else {
        Err(Error::Domain(format!("σ = {sigma} outside (0, {}]", sigma_max(cert))))
    }
}

fn kappa1(cert: &LyapCert) -> f64 {
    cert.phi_norm.max(1.0)
}

/// `f(p) = ∫_0^p e^{μ_A s} ds` for `μ_A > 0`, and `p` otherwise.
fn growth_integral(mu: f64, p: f64) -> f64 {
    if mu > 0.0 {
        (mu * p).exp_m1() / mu
    } else {
        p
    }
}

fn period_for_level(mu: f64, level: f64) -> f64 {
    if mu > 0.0 {
        (level * mu).ln_1p() / mu
    } else {
        level
    }
}

/// Largest sampling period allowed by `σ`.
///
/// The same expression bounds the transmission period of static feedback and
/// the controller period of the digital predictor. `σ = σ_max` is accepted and
/// returns the supremum, which is not itself attained.
pub fn delta_bound(cert: &LyapCert, sigma: f64) -> Result<f64> {
    check_sigma(cert, sigma)?;
    Ok(period_for_level(cert.mu_a, sigma / (1.0 + sigma) / kappa1(cert)))
}

/// Supremum of [`delta_bound`] over admissible `σ`.
pub fn delta_bound_sup(cert: &LyapCert) -> f64 {
    let ratio = match sigma_max(cert) {
        Bound::Finite(s) => s / (1.0 + s),
        Bound::Unbounded => 1.0,
    };
    period_for_level(cert.mu_a, ratio / kappa1(cert))
}

/// Smallest admissible `σ` whose period bound reaches `period`.
///
/// Inverts `σ/(1+σ) = max{‖Φ‖,1} f(period)`.
pub fn sigma_for_period(cert: &LyapCert, period: f64) -> Result<f64> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Domain(format!("period must be positive, got {period}")));
    }
    let level = kappa1(cert) * growth_integral(cert.mu_a, period);
    if level >= 1.0 {
        return Err(Error::Infeasible(format!("period {period} exceeds every σ-bound")));
    }
    let sigma = level / (1.0 - level);
    if let Bound::Finite(max) = sigma_max(cert) {
        if sigma >= max {
            return Err(Error::Infeasible(format!(
                "period {period} needs σ = {sigma}, but σ must stay below {max}"
            )));
        }
    }
    Ok(sigma)
}

/// `(ω₁, ω₂)` of the static-feedback condition at a given `σ`.
pub fn static_rates(cert: &LyapCert, sigma: f64) -> (f64, f64) {
    let omega1 = (cert.gamma1 - cert.gamma2 * sigma) / (2.0 * cert.alpha2);
    let omega2 = 2.0 * cert.gamma2 / cert.alpha1;
    (omega1, omega2)
}

/// Right-hand side `ω₁/(ω₁ + ω₂)` of the static-feedback DoS condition.
///
/// `σ` is taken as the smallest value whose period bound admits `Δ`, which
/// makes `ω₁` (and so the ratio) as large as the transmission period allows.
pub fn static_bound(cert: &LyapCert, delta: f64) -> Result<(f64, f64)> {
    let sigma = sigma_for_period(cert, delta)?;
    let (omega1, omega2) = static_rates(cert, sigma);
    Ok((sigma, omega1 / (omega1 + omega2)))
}

/// `ρ` with `‖e(t)‖ ≤ ρ ‖w_t‖_∞` for the analog predictor.
pub fn rho_analog(cert: &LyapCert, q_deadline: f64, delta: f64) -> f64 {
    let span = q_deadline + delta;
    if cert.mu_a <= 0.0 {
        1.0 + span
    } else {
        (1.0 + 1.0 / cert.mu_a) * (cert.mu_a * span).exp()
    }
}

/// `(ρ̂, ρ̃)` with `‖φ(t)‖ ≤ σ‖x(t)‖ + ρ̃‖w_t‖_∞` for the digital predictor.
pub fn rho_digital(cert: &LyapCert, sigma: f64, delta: f64, rho: f64) -> Result<(f64, f64)> {
    let bound = delta_bound(cert, sigma)?;
    if delta.is_nan() || delta <= 0.0 || delta > bound * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "controller period {delta} exceeds the bound {bound} for σ = {sigma}"
        )));
    }
    let rho_hat = (cert.mu_a * delta).exp().max(1.0);
    Ok((rho_hat, sigma + rho_hat * rho * (1.0 + sigma)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IssMode {
    Analog,
    Digital { sigma: f64 },
}

/// Constants of `V(x(t)) ≤ e^{−ω₁(t−z₀)} V(x(z₀)) + (γ₅/ω₁)‖w_t‖²_∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IssConstants {
    pub gamma4: f64,
    pub gamma5: f64,
    pub omega1: f64,
}

/// `rho` is `ρ` for the analog loop and `ρ̃` for the digital one.
pub fn iss_constants(cert: &LyapCert, rho: f64, mode: IssMode) -> Result<IssConstants> {
    let decay = match mode {
        IssMode::Analog => cert.gamma1,
        IssMode::Digital { sigma } => {
            let d = cert.gamma1 - sigma * cert.gamma2;
            if d <= 0.0 {
                return Err(Error::Infeasible(format!("γ₁ − σγ₂ = {d} is not positive")));
            }
            d
        }
    };
    let gamma4 = cert.gamma2 * rho + cert.gamma3;
    Ok(IssConstants {
        gamma4,
        gamma5: gamma4 * gamma4 / (2.0 * decay),
        omega1: decay / (2.0 * cert.alpha2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdicts {
    #[serde(rename = "static")]
    pub static_feedback: bool,
    pub analog: bool,
    pub digital: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub controller: &'static str,
    pub delta: f64,
    pub controller_period: Option<f64>,
    pub sigma_max: Bound,
    /// Supremum of admissible controller periods.
    pub delta_bound: f64,
    pub sigma_static: Option<f64>,
    pub static_bound: Option<f64>,
    pub main_lhs: f64,
    pub q_deadline: Option<f64>,
    pub rho: Option<f64>,
    pub sigma_digital: Option<f64>,
    pub rho_hat: Option<f64>,
    pub rho_tilde: Option<f64>,
    pub gamma4: Option<f64>,
    pub gamma5: Option<f64>,
    pub omega1: Option<f64>,
    pub verdicts: Verdicts,
    pub certified: bool,
}

/// Evaluates every certificate for a budget and transmission period.
pub fn verdict(cert: &LyapCert, budget: &DosBudget, delta: f64, kind: ControllerKind) -> Result<RobustnessReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "transmission period must be positive, got {delta}"
        )));
    }
    budget.validate()?;
    let main_lhs = budget.main_lhs(delta);

    let static_part = static_bound(cert, delta).ok();
    let static_ok = static_part.is_some_and(|(_, bound)| main_lhs < bound);

    let q_deadline = dos_free_deadline(budget, delta).ok();
    let rho = q_deadline.map(|q| rho_analog(cert, q, delta));
    let analog_ok = main_lhs < 1.0;

    let controller_period = match kind {
        ControllerKind::Digital { b } if b > 0 => Some(delta / b as f64),
        ControllerKind::Digital { .. } => return Err(Error::Domain("b must be positive".into())),
        _ => None,
    };
    let sigma_digital = controller_period.and_then(|p| sigma_for_period(cert, p).ok());
    let digital_rhos = match (controller_period, sigma_digital, rho) {
        (Some(p), Some(s), Some(r)) => rho_digital(cert, s, p, r).ok(),
        _ => None,
    };
    let digital_ok = controller_period.map(|_| analog_ok && sigma_digital.is_some());

    let iss = match kind {
        ControllerKind::Static => static_part.map(|(sigma, _)| IssConstants {
            gamma4: f64::NAN,
            gamma5: f64::NAN,
            omega1: static_rates(cert, sigma).0,
        }),
        ControllerKind::Analog => rho.and_then(|r| iss_constants(cert, r, IssMode::Analog).ok()),
        ControllerKind::Digital { .. } => match (sigma_digital, digital_rhos) {
            (Some(sigma), Some((_, rho_tilde))) => iss_constants(cert, rho_tilde, IssMode::Digital { sigma }).ok(),
            _ => None,
        },
    };
    let finite = |v: f64| v.is_finite().then_some(v);

    let verdicts = Verdicts {
        static_feedback: static_ok,
        analog: analog_ok,
        digital: digital_ok,
    };
    let certified = match kind {
        ControllerKind::Static => static_ok,
        ControllerKind::Analog => analog_ok,
        ControllerKind::Digital { .. } => digital_ok == Some(true),
    };
    Ok(RobustnessReport {
        controller: kind.name(),
        delta,
        controller_period,
        sigma_max: sigma_max(cert),
        delta_bound: delta_bound_sup(cert),
        sigma_static: static_part.map(|(s, _)| s),
        static_bound: static_part.map(|(_, b)| b),
        main_lhs,
        q_deadline,
        rho,
        sigma_digital,
        rho_hat: digital_rhos.map(|(h, _)| h),
        rho_tilde: digital_rhos.map(|(_, t)| t),
        gamma4: iss.and_then(|c| finite(c.gamma4)),
        gamma5: iss.and_then(|c| finite(c.gamma5)),
        omega1: iss.map(|c| c.omega1),
        verdicts,
        certified,
    })
}
