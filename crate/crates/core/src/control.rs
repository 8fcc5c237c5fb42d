//! Static feedback and the two predictor-based controllers.
//!
//! * Static: `u = K y(z_m)` held until the next success, zero before `z_0`.
//! * Analog: a model copy `x̂` of the plant runs open loop with `u = K x̂` and
//!   jumps to the measurement at every successful transmission.
//! * Digital: the same predictor sampled at `δ = Δ/b`, with the reset routed
//!   through the auxiliary variable `α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{self, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerKind {
    Static,
    Analog,
    /// Controller period `Δ/b`.
    Digital {
        b: u32,
    },
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Static => "static",
            ControllerKind::Analog => "analog",
            ControllerKind::Digital { .. } => "digital",
        }
    }
}

/// `ẋ = A x + B u + d`, `y = x + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    a: Mat,
    b: Mat,
}

impl Plant {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {}xm, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("plant matrices must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
}

/// State-feedback matrix `K` (m×n).
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    k: Mat,
}

impl Gain {
    pub fn new(k: Mat) -> Result<Self> {
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("gain must be finite".into()));
        }
        Ok(Self { k })
    }

    /// Checks the shape against a plant.
    pub fn for_plant(k: Mat, plant: &Plant) -> Result<Self> {
        if k.shape() != (plant.inputs(), plant.states()) {
            return Err(Error::Dimension(format!(
                "K must be {}x{}, got {}x{}",
                plant.inputs(),
                plant.states(),
                k.nrows(),
                k.ncols()
            )));
        }
        Self::new(k)
    }

    pub fn k(&self) -> &Mat {
        &self.k
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.k * v
    }
}

/// `Φ = A + B K`.
pub fn closed_loop(plant: &Plant, gain: &Gain) -> Mat {
    plant.a() + plant.b() * gain.k()
}

fn check_len(v: &Vector, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StaticState {
    pub last_y: Option<Vector>,
}

impl StaticState {
    pub fn receive(&mut self, y: Vector) {
        self.last_y = Some(y);
    }
}

/// Zero before the first success, `K y(z_m)` afterwards.
pub fn static_output(st: &StaticState, gain: &Gain) -> Vector {
    match &st.last_y {
        Some(y) => gain.apply(y),
        None => Vector::zeros(gain.k().nrows()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPredState {
    pub xhat: Vector,
}

impl AnalogPredState {
    pub fn zeros(n: usize) -> Self {
        Self { xhat: Vector::zeros(n) }
    }
}

/// Jump of the predictor at a successful transmission: `x̂ := y`.
pub fn analog_reset(_st: AnalogPredState, y: Vector) -> AnalogPredState {
    AnalogPredState { xhat: y }
}

/// Flow between resets. With `u = K x̂` the predictor is autonomous,
/// `x̂(t + dt) = e^{Φ dt} x̂(t)`.
pub fn analog_flow(st: AnalogPredState, plant: &Plant, gain: &Gain, dt: f64) -> Result<AnalogPredState> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Domain(format!("flow duration must be positive, got {dt}")));
    }
    check_len(&st.xhat, plant.states(), "predictor state")?;
    let e = matkit::mat_exp(&closed_loop(plant, gain), dt)?;
    Ok(AnalogPredState { xhat: e * st.xhat })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPredState {
    pub xhat: Vector,
    pub alpha: Vector,
    delta: f64,
    b: u32,
}

impl DigitalPredState {
    /// Fresh state with `x̂(0) = 0`, ticking every `transmission_period / b`.
    pub fn new(n: usize, transmission_period: f64, b: u32) -> Result<Self> {
        if b == 0 {
            return Err(Error::Domain("b must be a positive integer".into()));
        }
        if !(transmission_period > 0.0 && transmission_period.is_finite()) {
            return Err(Error::Domain(format!(
                "transmission period must be positive, got {transmission_period}"
            )));
        }
        Ok(Self {
            xhat: Vector::zeros(n),
            alpha: Vector::zeros(n),
            delta: transmission_period / b as f64,
            b,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn b(&self) -> u32 {
        self.b
    }
}

/// Digital predictor with its discretized model cached.
#[derive(Debug, Clone)]
pub struct DigitalPredictor {
    a_delta: Mat,
    b_delta: Mat,
    gain: Gain,
    pub state: DigitalPredState,
}

impl DigitalPredictor {
    pub fn new(plant: &Plant, gain: &Gain, state: DigitalPredState) -> Result<Self> {
        check_len(&state.xhat, plant.states(), "predictor state")?;
        let (a_delta, b_delta) = matkit::discretize(plant.a(), plant.b(), state.delta)?;
        Ok(Self {
            a_delta,
            b_delta,
            gain: gain.clone(),
            state,
        })
    }

    /// One controller tick at `qδ`. Returns `u(qδ)`, held until the next tick.
    pub fn tick(&mut self, measurement: Option<&Vector>) -> Result<Vector> {
        let alpha = match measurement {
            Some(y) => {
                check_len(y, self.state.xhat.len(), "measurement")?;
                y.clone()
            }
            None => self.state.xhat.clone(),
        };
        let u = self.gain.apply(&alpha);
        self.state.xhat = &self.a_delta * &alpha + &self.b_delta * &u;
        self.state.alpha = alpha;
        Ok(u)
    }
}

/// Stateless form of [`DigitalPredictor::tick`].
pub fn digital_step(
    st: DigitalPredState,
    plant: &Plant,
    gain: &Gain,
    is_success: bool,
    y: Option<&Vector>,
) -> Result<(DigitalPredState, Vector)> {
    let measurement = match (is_success, y) {
        (true, Some(y)) => Some(y),
        (true, None) => return Err(Error::Contract("successful transmission without a measurement".into())),
        (false, Some(_)) => return Err(Error::Contract("measurement supplied on a failed transmission".into())),
        (false, None) => None,
    };
    let mut pred = DigitalPredictor::new(plant, gain, st)?;
    let u = pred.tick(measurement)?;
    Ok((pred.state, u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (Plant, Gain) {
        let plant = Plant::new(Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), Mat::identity(2, 2)).unwrap();
        let k = Mat::from_row_slice(2, 2, &[-2.1961, -0.7545, -0.7545, -2.7146]);
        let gain = Gain::for_plant(k, &plant).unwrap();
        (plant, gain)
    }

    #[test]
    fn shapes_are_validated() {
        assert!(Plant::new(Mat::zeros(2, 3), Mat::zeros(2, 1)).is_err());
        assert!(Plant::new(Mat::zeros(2, 2), Mat::zeros(3, 1)).is_err());
        let (plant, _) = reference();
        assert!(Gain::for_plant(Mat::zeros(2, 3), &plant).is_err());
    }

    #[test]
    fn static_output_holds_last_measurement() {
        let gain = Gain::new(-Mat::identity(2, 2)).unwrap();
        let mut st = StaticState::default();
        assert_eq!(static_output(&st, &gain), Vector::zeros(2));
        st.receive(Vector::from_vec(vec![1.0, 0.0]));
        assert_eq!(static_output(&st, &gain), Vector::from_vec(vec![-1.0, 0.0]));
        // Unchanged until the next reception.
        assert_eq!(static_output(&st, &gain), Vector::from_vec(vec![-1.0, 0.0]));
    }

    #[test]
    fn analog_reset_copies_measurement() {
        let x = Vector::from_vec(vec![0.3, -0.2]);
        let noise = Vector::from_vec(vec![0.01, -0.02]);
        let st = analog_reset(AnalogPredState::zeros(2), &x + &noise);
        assert!((&st.xhat - &x - &noise).amax() < 1e-15);
        let st = analog_reset(st, x.clone());
        assert_eq!(st.xhat, x);
    }

    #[test]
    fn analog_flow_closed_forms() {
        let (plant, gain) = reference();
        let st = analog_flow(AnalogPredState::zeros(2), &plant, &gain, 0.7).unwrap();
        assert_eq!(st.xhat, Vector::zeros(2));

        let plant = Plant::new(Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let gain = Gain::new(-Mat::identity(2, 2)).unwrap();
        let v = Vector::from_vec(vec![2.0, -1.0]);
        let st = analog_flow(AnalogPredState { xhat: v.clone() }, &plant, &gain, 1.0).unwrap();
        assert!((st.xhat - v * (-1.0f64).exp()).amax() < 1e-14);
        assert!(analog_flow(AnalogPredState::zeros(2), &plant, &gain, 0.0).is_err());
    }

    #[test]
    fn analog_flow_matches_fine_euler() {
        let (plant, gain) = reference();
        let phi = closed_loop(&plant, &gain);
        let v = Vector::from_vec(vec![1.0, -0.5]);
        let dt = 0.5;
        let exact = analog_flow(AnalogPredState { xhat: v.clone() }, &plant, &gain, dt)
            .unwrap()
            .xhat;
        let steps = 100_000;
        let h = dt / steps as f64;
        let mut x = v;
        for _ in 0..steps {
            // Heun keeps the oracle error well below the tolerance at this step.
            let k1 = &phi * &x;
            let k2 = &phi * (&x + &k1 * h);
            x += (k1 + k2) * (0.5 * h);
        }
        assert!((&exact - &x).norm() <= 1e-6 * x.norm());
    }

    #[test]
    fn digital_step_arithmetic() {
        let plant = Plant::new(Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let gain = Gain::new(-Mat::identity(2, 2)).unwrap();
        let v = Vector::from_vec(vec![1.0, -2.0]);
        let mut st = DigitalPredState::new(2, 1.0, 10).unwrap();
        assert!((st.delta() - 0.1).abs() < 1e-15);
        st.xhat = v.clone();
        let (next, u) = digital_step(st, &plant, &gain, false, None).unwrap();
        assert_eq!(next.alpha, v);
        assert_eq!(u, -&v);
        assert!((next.xhat - &v * 0.9).amax() < 1e-14);
    }

    #[test]
    fn digital_step_resets_on_success() {
        let (plant, gain) = reference();
        let mut st = DigitalPredState::new(2, 0.1, 10).unwrap();
        st.xhat = Vector::from_vec(vec![5.0, 5.0]);
        let y = Vector::from_vec(vec![0.1, 0.2]);
        let (next, u) = digital_step(st.clone(), &plant, &gain, true, Some(&y)).unwrap();
        assert_eq!(next.alpha, y);
        assert_eq!(u, gain.apply(&y));
        assert!(matches!(
            digital_step(st.clone(), &plant, &gain, true, None),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            digital_step(st, &plant, &gain, false, Some(&y)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn digital_without_dynamics_or_gain_is_constant() {
        let plant = Plant::new(Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let gain = Gain::new(Mat::zeros(2, 2)).unwrap();
        let mut pred = DigitalPredictor::new(&plant, &gain, DigitalPredState::new(2, 0.1, 4).unwrap()).unwrap();
        let y = Vector::from_vec(vec![0.5, 0.25]);
        pred.tick(Some(&y)).unwrap();
        for _ in 0..20 {
            pred.tick(None).unwrap();
            assert_eq!(pred.state.xhat, y);
        }
    }

    #[test]
    fn digital_between_successes_follows_lti_recursion() {
        let (plant, gain) = reference();
        let mut pred = DigitalPredictor::new(&plant, &gain, DigitalPredState::new(2, 0.1, 10).unwrap()).unwrap();
        let y = Vector::from_vec(vec![1.0, 1.0]);
        pred.tick(Some(&y)).unwrap();
        let (ad, bd) = matkit::discretize(plant.a(), plant.b(), 0.01).unwrap();
        let step = &ad + &bd * gain.k();
        let mut expect = &step * &y;
        for _ in 0..30 {
            assert!((&pred.state.xhat - &expect).amax() < 1e-12);
            pred.tick(None).unwrap();
            assert!((&pred.state.alpha - &expect).amax() < 1e-12);
            expect = &step * &expect;
        }
    }

    #[test]
    fn digital_rejects_zero_divisor() {
        assert!(DigitalPredState::new(2, 0.1, 0).is_err());
    }
}
