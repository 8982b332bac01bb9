//! Adaptive fifth-order Cash-Karp Runge-Kutta integration for complex linear
//! systems of the form i·dy/dt = H(t)·y with a Hermitian matrix H(t).
//!
//! The right-hand side is fixed to −i·H(t)·y; the matrix is supplied entry by
//! entry through the [`Hamiltonian`] trait so the derivative loop never
//! materializes H. Step-size control follows the embedded fourth/fifth-order
//! error estimate: a step is accepted when the scaled max-norm error is below
//! the requested accuracy, otherwise it is retried with a smaller step.

use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the integrator.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum RkError {
    #[error("non-finite Hamiltonian entry at t = {t}, ({row}, {col})")]
    NonFiniteEntry { t: f64, row: usize, col: usize },
    #[error("non-finite result in Runge-Kutta stage {stage} at t = {t}")]
    NonFiniteStage { stage: usize, t: f64 },
    #[error("non-finite scaled error estimate at t = {t}")]
    NonFiniteErrorNorm { t: f64 },
    #[error("step size underflow at t = {t} (t + h == t)")]
    StepUnderflow { t: f64 },
    #[error("proposed step |h| = {h:e} below minimum {hmin:e} at t = {t}")]
    StepTooSmall { h: f64, hmin: f64, t: f64 },
    #[error("more than {maxstp} steps taken without reaching the interval end (t = {t})")]
    BudgetExceeded { maxstp: usize, t: f64 },
    #[error("state dimension {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "initial step sign does not match integration direction (h1 = {h1}, t2 - t1 = {span})"
    )]
    DirectionMismatch { h1: f64, span: f64 },
    #[error("invalid step control: {0}")]
    InvalidControl(&'static str),
    #[error("error scale must be strictly positive in every component")]
    NonPositiveScale,
    #[error("state vector contains a non-finite amplitude")]
    NonFiniteState,
}

/// Complex amplitude vector of a coupled linear system.
///
/// The dimension is fixed at construction and must be at least 1. For unitary
/// evolution the squared norm is conserved up to integrator tolerance; that is
/// checked by tests, not enforced here.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amps: Vec<Complex64>) -> Result<Self, RkError> {
        if amps.is_empty() {
            return Err(RkError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Self { amps })
    }

    /// Unit basis vector e_k of the given dimension.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index out of range");
        let mut amps = vec![Complex64::ZERO; dim];
        amps[k] = Complex64::ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Σ_i |y_i|²
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.amps
            .iter()
            .all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

impl std::ops::Index<usize> for StateVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.amps[i]
    }
}

/// Entry-wise access to the N×N matrix driving i·dy/dt = H(t)·y.
///
/// Indices are 0-based. Implementations must return the same value for the
/// same arguments; the integrator may evaluate entries in any order.
pub trait Hamiltonian {
    fn dim(&self) -> usize;
    fn entry(&self, t: f64, row: usize, col: usize) -> Complex64;
}

/// Constant matrix wrapped as a [`Hamiltonian`].
pub struct MatrixHamiltonian {
    matrix: crate::matrix::CMatrix,
}

impl MatrixHamiltonian {
    pub fn new(matrix: crate::matrix::CMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &crate::matrix::CMatrix {
        &self.matrix
    }
}

impl Hamiltonian for MatrixHamiltonian {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }
    #[inline]
    fn entry(&self, _t: f64, row: usize, col: usize) -> Complex64 {
        self.matrix.get(row, col)
    }
}

/// Closure wrapped as a [`Hamiltonian`] with an explicit dimension.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, usize, usize) -> Complex64> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, usize, usize) -> Complex64> Hamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn entry(&self, t: f64, row: usize, col: usize) -> Complex64 {
        (self.f)(t, row, col)
    }
}

/// Cash-Karp coefficients: stage abscissas `a`, stage weights `b`,
/// fifth-order weights `c` and embedded fourth-order weights `c_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct CashKarpTableau {
    pub a: [f64; 6],
    pub b: [[f64; 5]; 6],
    pub c: [f64; 6],
    pub c_star: [f64; 6],
}

impl CashKarpTableau {
    pub const fn standard() -> Self {
        Self {
            a: [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0],
            b: [
                [0.0, 0.0, 0.0, 0.0, 0.0],
                [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
                [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
                [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
                [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
                [
                    1631.0 / 55296.0,
                    175.0 / 512.0,
                    575.0 / 13824.0,
                    44275.0 / 110592.0,
                    253.0 / 4096.0,
                ],
            ],
            c: [
                37.0 / 378.0,
                0.0,
                250.0 / 621.0,
                125.0 / 594.0,
                0.0,
                512.0 / 1771.0,
            ],
            c_star: [
                2825.0 / 27648.0,
                0.0,
                18575.0 / 48384.0,
                13525.0 / 55296.0,
                277.0 / 14336.0,
                1.0 / 4.0,
            ],
        }
    }
}

pub(crate) const TABLEAU: CashKarpTableau = CashKarpTableau::standard();

/// Parameters of the adaptive step-size driver.
#[derive(Debug, Clone, PartialEq)]
pub struct StepControl {
    /// Relative accuracy target.
    pub eps: f64,
    /// Initial step guess, in units of the independent variable (1/eV).
    pub h1: f64,
    /// Minimum allowed step magnitude (may be 0).
    pub hmin: f64,
    /// Step budget for one integration.
    pub maxstp: usize,
    pub safety: f64,
    pub pgrow: f64,
    pub pshrnk: f64,
    /// Error threshold below which the step growth is capped at a factor 5.
    pub errcon: f64,
    /// Underflow guard added to every error-scale component.
    pub tiny: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            h1: 1e-5,
            hmin: 1e-7,
            maxstp: 1_000_000,
            safety: 0.9,
            pgrow: -0.2,
            pshrnk: -0.25,
            errcon: 1.89e-4,
            tiny: 1e-10,
        }
    }
}

impl StepControl {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RkError> {
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(RkError::InvalidControl("eps must be > 0"));
        }
        if self.h1 == 0.0 || !self.h1.is_finite() {
            return Err(RkError::InvalidControl("h1 must be nonzero and finite"));
        }
        if self.hmin.is_nan() || self.hmin < 0.0 {
            return Err(RkError::InvalidControl("hmin must be >= 0"));
        }
        if self.maxstp < 1 {
            return Err(RkError::InvalidControl("maxstp must be >= 1"));
        }
        Ok(())
    }
}

/// Step counts from one [`integrate`] call: accepted first-try steps (`nok`)
/// and steps that were retried with a smaller size before acceptance (`nbad`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub nok: usize,
    pub nbad: usize,
}

/// dy_i = −i · Σ_j H_ij(t) · y_j
pub fn derivative<H: Hamiltonian>(
    t: f64,
    y: &StateVector,
    ham: &H,
) -> Result<StateVector, RkError> {
    let n = y.dim();
    if ham.dim() != n {
        return Err(RkError::DimensionMismatch {
            expected: ham.dim(),
            got: n,
        });
    }
    let minus_i = Complex64::new(0.0, -1.0);
    let mut out = vec![Complex64::ZERO; n];
    for (i, out_i) in out.iter_mut().enumerate() {
        let mut acc = Complex64::ZERO;
        for j in 0..n {
            let hij = ham.entry(t, i, j);
            if !hij.re.is_finite() || !hij.im.is_finite() {
                return Err(RkError::NonFiniteEntry { t, row: i, col: j });
            }
            acc += hij * y[j];
        }
        *out_i = minus_i * acc;
    }
    Ok(StateVector { amps: out })
}

/// One Cash-Karp step of size `h` from `(t, y)` with `dydx = derivative(t, y)`.
///
/// Returns the fifth-order advance `y_out` and the embedded fourth/fifth-order
/// difference `y_err` used for step-size control.
pub fn cash_karp_step<H: Hamiltonian>(
    y: &StateVector,
    dydx: &StateVector,
    t: f64,
    h: f64,
    ham: &H,
) -> Result<(StateVector, StateVector), RkError> {
    let n = y.dim();
    if dydx.dim() != n {
        return Err(RkError::DimensionMismatch {
            expected: n,
            got: dydx.dim(),
        });
    }

    let mut k: [Vec<Complex64>; 6] = Default::default();
    k[0] = dydx.amps.iter().map(|d| d * h).collect();

    for stage in 1..6 {
        let mut y_stage = y.amps.clone();
        for (j, kj) in k.iter().enumerate().take(stage) {
            let b = TABLEAU.b[stage][j];
            if b == 0.0 {
                continue;
            }
            for i in 0..n {
                y_stage[i] += b * kj[i];
            }
        }
        let t_stage = t + TABLEAU.a[stage] * h;
        let d = derivative(t_stage, &StateVector { amps: y_stage }, ham)?;
        k[stage] = d.amps.iter().map(|d| d * h).collect();
        if k[stage]
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(RkError::NonFiniteStage { stage, t });
        }
    }

    let mut y_out = y.amps.clone();
    let mut y_err = vec![Complex64::ZERO; n];
    for (stage, ks) in k.iter().enumerate() {
        let c = TABLEAU.c[stage];
        let dc = TABLEAU.c[stage] - TABLEAU.c_star[stage];
        for i in 0..n {
            y_out[i] += c * ks[i];
            y_err[i] += dc * ks[i];
        }
    }

    Ok((StateVector { amps: y_out }, StateVector { amps: y_err }))
}

/// Single fifth-order advance with the error estimate discarded.
pub fn fixed_step<H: Hamiltonian>(
    y: &StateVector,
    dydx: &StateVector,
    t: f64,
    h: f64,
    ham: &H,
) -> Result<StateVector, RkError> {
    cash_karp_step(y, dydx, t, h, ham).map(|(y_out, _)| y_out)
}

/// Result of one quality-controlled step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub y: StateVector,
    pub t: f64,
    /// Step size that was actually accomplished.
    pub h_did: f64,
    /// Proposed size for the next step.
    pub h_next: f64,
}

/// One adaptive step: tries `h_try`, shrinks on failure until the scaled
/// max-norm error estimate drops below 1, then proposes the next step size.
///
/// `y_scale` holds the strictly positive per-component scales against which
/// the error is measured (conventionally |y_i| + |h·dydx_i| + tiny).
pub fn quality_step<H: Hamiltonian>(
    y: &StateVector,
    dydx: &StateVector,
    t: f64,
    h_try: f64,
    control: &StepControl,
    y_scale: &[f64],
    ham: &H,
) -> Result<StepOutcome, RkError> {
    let n = y.dim();
    if y_scale.len() != n {
        return Err(RkError::DimensionMismatch {
            expected: n,
            got: y_scale.len(),
        });
    }
    if y_scale.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(RkError::NonPositiveScale);
    }

    let mut h = h_try;
    loop {
        let (y_out, y_err) = cash_karp_step(y, dydx, t, h, ham)?;

        let mut err_max: f64 = 0.0;
        for i in 0..n {
            let ratio = y_err[i].norm() / y_scale[i];
            if !ratio.is_finite() {
                return Err(RkError::NonFiniteErrorNorm { t });
            }
            err_max = err_max.max(ratio);
        }
        err_max /= control.eps;
        if !err_max.is_finite() {
            return Err(RkError::NonFiniteErrorNorm { t });
        }

        if err_max <= 1.0 {
            let h_next = if err_max > control.errcon {
                control.safety * h * err_max.powf(control.pgrow)
            } else {
                5.0 * h
            };
            return Ok(StepOutcome {
                y: y_out,
                t: t + h,
                h_did: h,
                h_next,
            });
        }

        // Rejected: shrink, but never by more than a factor 10 per attempt.
        let h_temp = control.safety * h * err_max.powf(control.pshrnk);
        h = if h >= 0.0 {
            h_temp.max(0.1 * h)
        } else {
            h_temp.min(0.1 * h)
        };
        if t + h == t {
            return Err(RkError::StepUnderflow { t });
        }
    }
}

/// Adaptive driver: advances `y_start` from `t1` to `t2`.
///
/// The error scale is rebuilt before every step as |y_i| + |h·dydx_i| + tiny,
/// and the final step is clamped to land exactly on `t2`. The caller's input
/// is left untouched; the state at `t2` is returned together with the
/// accepted/retried step counts.
pub fn integrate<H: Hamiltonian>(
    y_start: &StateVector,
    t1: f64,
    t2: f64,
    control: &StepControl,
    ham: &H,
) -> Result<(StateVector, IntegrationStats), RkError> {
    control.validate()?;
    if !y_start.is_finite() {
        return Err(RkError::NonFiniteState);
    }
    if ham.dim() != y_start.dim() {
        return Err(RkError::DimensionMismatch {
            expected: ham.dim(),
            got: y_start.dim(),
        });
    }

    let mut stats = IntegrationStats::default();
    if t1 == t2 {
        return Ok((y_start.clone(), stats));
    }
    let span = t2 - t1;
    if control.h1.signum() != span.signum() {
        return Err(RkError::DirectionMismatch {
            h1: control.h1,
            span,
        });
    }

    let mut t = t1;
    let mut h = control.h1;
    let mut y = y_start.clone();

    for _ in 0..control.maxstp {
        let dydx = derivative(t, &y, ham)?;
        let y_scale: Vec<f64> = (0..y.dim())
            .map(|i| y[i].norm() + (h * dydx[i]).norm() + control.tiny)
            .collect();

        // Clamp the step if it would overshoot the interval end.
        if (t + h - t2) * (t + h - t1) > 0.0 {
            h = t2 - t;
        }

        let outcome = quality_step(&y, &dydx, t, h, control, &y_scale, ham)?;
        if outcome.h_did == h {
            stats.nok += 1;
        } else {
            stats.nbad += 1;
        }
        y = outcome.y;
        t = outcome.t;

        if (t - t2) * (t2 - t1) >= 0.0 {
            return Ok((y, stats));
        }
        if outcome.h_next.abs() < control.hmin {
            return Err(RkError::StepTooSmall {
                h: outcome.h_next,
                hmin: control.hmin,
                t,
            });
        }
        h = outcome.h_next;
    }

    Err(RkError::BudgetExceeded {
        maxstp: control.maxstp,
        t,
    })
}
