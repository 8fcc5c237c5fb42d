//! Dense small-dimension linear algebra.
//!
//! Everything here works on `nalgebra` dynamic matrices. The kernels are meant
//! for state dimensions of a handful of entries: the Lyapunov solver builds the
//! full Kronecker system and the exponential always uses the degree-13 Padé
//! approximant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalue real parts must be below this for a matrix to count as Hurwitz.
pub const HURWITZ_MARGIN: f64 = -1e-9;

const SYMMETRY_TOL: f64 = 1e-12;

fn require_square(m: &Mat, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn require_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} has non-finite entries")))
    }
}

/// Builds a matrix from row slices. Fails on ragged or empty input.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::Dimension("matrix must have at least one entry".into()));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    let m = Mat::from_fn(nrows, ncols, |i, j| rows[i][j]);
    require_finite(&m, "matrix")?;
    Ok(m)
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn one_norm(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{M t}` by scaling and squaring around a degree-13 Padé approximant.
pub fn mat_exp(m: &Mat, t: f64) -> Result<Mat> {
    let n = require_square(m, "exponent")?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("time {t} is not finite")));
    }
    require_finite(m, "exponent")?;

    const THETA_13: f64 = 5.371_920_351_148_152;
    const PADE: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];

    let a = m * t;
    let norm = one_norm(&a);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(squarings);

    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Domain("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Zero-order-hold discretization: returns `(e^{A h}, ∫_0^h e^{A s} ds · B)`.
///
/// Both blocks come from one exponential of the augmented matrix `[[A, B], [0, 0]]`.
pub fn discretize(a: &Mat, b: &Mat, h: f64) -> Result<(Mat, Mat)> {
    let n = require_square(a, "A")?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.nrows())));
    }
    let m = b.ncols();
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = mat_exp(&aug, h)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

/// `∫_0^δ e^{A τ} B dτ`.
pub fn hold_integral(a: &Mat, b: &Mat, delta: f64) -> Result<Mat> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Domain(format!("hold length must be positive, got {delta}")));
    }
    discretize(a, b, delta).map(|(_, gamma)| gamma)
}

fn symmetric_part(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Logarithmic norm induced by the Euclidean norm: `λ_max((A + Aᵀ)/2)`.
pub fn log_norm_2(a: &Mat) -> Result<f64> {
    require_square(a, "matrix")?;
    require_finite(a, "matrix")?;
    Ok(symmetric_part(a).symmetric_eigenvalues().max())
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> Result<f64> {
    require_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(m.singular_values().max())
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn sym_eig_extremes(s: &Mat) -> Result<(f64, f64)> {
    require_square(s, "matrix")?;
    require_finite(s, "matrix")?;
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Domain(format!(
            "matrix is not symmetric (max |S - Sᵀ| = {asym:e})"
        )));
    }
    let eig = symmetric_part(s).symmetric_eigenvalues();
    Ok((eig.min(), eig.max()))
}

/// Largest real part among the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    require_square(a, "matrix")?;
    require_finite(a, "matrix")?;
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(a: &Mat) -> Result<bool> {
    Ok(spectral_abscissa(a)? < HURWITZ_MARGIN)
}

/// Solves `Φᵀ P + P Φ + Q = 0` for symmetric positive-definite `P`.
///
/// Goes through the `n²×n²` Kronecker form, so it is only meant for small `n`.
pub fn lyap_solve(phi: &Mat, q: &Mat) -> Result<Mat> {
    let n = require_square(phi, "Φ")?;
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Q must be {n}x{n}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    let (q_min, _) = sym_eig_extremes(q)?;
    if q_min <= 0.0 {
        return Err(Error::Domain(format!("Q is not positive definite (λ_min = {q_min})")));
    }
    let abscissa = spectral_abscissa(phi)?;
    if abscissa >= HURWITZ_MARGIN {
        return Err(Error::Certification(format!(
            "closed-loop matrix is not Hurwitz (max eigenvalue real part {abscissa})"
        )));
    }

    // Column-major vec: vec(ΦᵀP) = (I ⊗ Φᵀ) vec(P), vec(PΦ) = (Φᵀ ⊗ I) vec(P).
    let id = Mat::identity(n, n);
    let phi_t = phi.transpose();
    let system = id.kronecker(&phi_t) + phi_t.kronecker(&id);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let p_vec = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Certification("Lyapunov system is singular".into()))?;
    let p = Mat::from_column_slice(n, n, p_vec.as_slice());
    let p = symmetric_part(&p);

    let (p_min, _) = sym_eig_extremes(&p)?;
    if p_min <= 0.0 {
        return Err(Error::Certification(format!(
            "Lyapunov solution is not positive definite (λ_min = {p_min})"
        )));
    }
    Ok(p)
}

/// Spectral norm of `ΦᵀP + PΦ + Q`.
pub fn lyap_residual(phi: &Mat, p: &Mat, q: &Mat) -> f64 {
    let r = phi.transpose() * p + p * phi + q;
    r.singular_values().max()
}
