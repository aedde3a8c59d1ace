//! Exact 2x2 complex operator algebra for a single qubit.
//!
//! Rotations follow the convention `R(n, a) = cos(a/2) I - i sin(a/2) (n . sigma)`.
//! Global phases are never tracked; comparisons between unitaries go through
//! the phase-invariant overlap `|Tr(A B^dag)| / 2`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{DdError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I_UNIT: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance on `|axis| - 1` accepted by [`rotation`].
pub const AXIS_NORM_TOL: f64 = 1e-9;

/// A 2x2 complex matrix, stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Operator2 {
    pub m: [[Complex64; 2]; 2],
}

impl fmt::Debug for Operator2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]
        )
    }
}

impl Operator2 {
    pub const fn new(m: [[Complex64; 2]; 2]) -> Self {
        Operator2 { m }
    }

    pub const fn identity() -> Self {
        Operator2::new([[ONE, ZERO], [ZERO, ONE]])
    }

    pub const fn zero() -> Self {
        Operator2::new([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub const fn pauli_x() -> Self {
        Operator2::new([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn pauli_y() -> Self {
        Operator2::new([[ZERO, -I_UNIT], [I_UNIT, ZERO]])
    }

    pub fn pauli_z() -> Self {
        Operator2::new([[ONE, ZERO], [ZERO, -ONE]])
    }

    /// `sigma_k` for k = 0 (identity), 1 (x), 2 (y), 3 (z).
    pub fn pauli(k: usize) -> Self {
        match k {
            0 => Self::identity(),
            1 => Self::pauli_x(),
            2 => Self::pauli_y(),
            3 => Self::pauli_z(),
            _ => panic!("pauli index {k} out of range"),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Operator2::new([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator2) -> f64 {
        let d = *self - *other;
        d.m.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (*self * self.adjoint()).max_abs_diff(&Operator2::identity()) <= tol
    }

    /// Hilbert-Schmidt inner product `Tr(self . other^dag)`.
    pub fn hs_inner(&self, other: &Operator2) -> Complex64 {
        (*self * other.adjoint()).trace()
    }

    /// Phase-invariant overlap `|Tr(A B^dag)| / 2` between two unitaries.
    pub fn overlap(&self, other: &Operator2) -> f64 {
        self.hs_inner(other).norm() / 2.0
    }

    /// Equality up to a global phase, within `tol` entrywise.
    pub fn approx_eq_up_to_phase(&self, other: &Operator2, tol: f64) -> bool {
        let inner = other.hs_inner(self);
        if inner.norm() < 1e-300 {
            return self.max_abs_diff(other) <= tol;
        }
        let phase = inner / inner.norm();
        self.max_abs_diff(&other.scale(phase)) <= tol
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, mut n: u64) -> Self {
        let mut base = *self;
        let mut acc = Operator2::identity();
        while n > 0 {
            if n & 1 == 1 {
                acc = base * acc;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }
}

impl Mul for Operator2 {
    type Output = Operator2;

    fn mul(self, rhs: Operator2) -> Operator2 {
        let a = &self.m;
        let b = &rhs.m;
        Operator2::new([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Add for Operator2 {
    type Output = Operator2;

    fn add(self, rhs: Operator2) -> Operator2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += rhs.m[i][j];
            }
        }
        out
    }
}

impl Sub for Operator2 {
    type Output = Operator2;

    fn sub(self, rhs: Operator2) -> Operator2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] -= rhs.m[i][j];
            }
        }
        out
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `cos(angle/2) I - i sin(angle/2) (axis . sigma)` for an already-normalised axis.
fn rotation_raw(n: &[f64; 3], angle: f64) -> Operator2 {
    let (s, c) = (angle / 2.0).sin_cos();
    Operator2::new([
        [
            Complex64::new(c, -s * n[2]),
            Complex64::new(-s * n[1], -s * n[0]),
        ],
        [
            Complex64::new(s * n[1], -s * n[0]),
            Complex64::new(c, s * n[2]),
        ],
    ])
}

/// SU(2) rotation by `angle` about the unit vector `axis`.
pub fn rotation(axis: [f64; 3], angle: f64) -> Result<Operator2> {
    let norm = norm3(&axis);
    if !norm.is_finite() || (norm - 1.0).abs() > AXIS_NORM_TOL || !angle.is_finite() {
        return Err(DdError::invalid(format!(
            "rotation axis must be a unit vector (|axis| = {norm}) and angle finite"
        )));
    }
    Ok(rotation_raw(&axis, angle))
}

/// Evolution `exp(-i dt (w . sigma) / 2)` under a constant rate vector `w`.
///
/// The result is a rotation about `w / |w|` by `|w| dt`; a zero vector gives the identity.
pub fn rotation_from_rate(w: [f64; 3], dt: f64) -> Operator2 {
    let norm = norm3(&w);
    if norm == 0.0 || dt == 0.0 {
        return Operator2::identity();
    }
    let n = [w[0] / norm, w[1] / norm, w[2] / norm];
    rotation_raw(&n, norm * dt)
}

/// Coefficients of an operator in the basis (I, sigma_x, sigma_y, sigma_z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliVector(pub [Complex64; 4]);

impl PauliVector {
    pub fn reconstruct(&self) -> Operator2 {
        (0..4).fold(Operator2::zero(), |acc, k| {
            acc + Operator2::pauli(k).scale(self.0[k])
        })
    }
}

/// `c_k = Tr(sigma_k^dag op) / 2`.
pub fn pauli_decompose(op: &Operator2) -> PauliVector {
    let m = &op.m;
    PauliVector([
        (m[0][0] + m[1][1]) / 2.0,
        (m[0][1] + m[1][0]) / 2.0,
        (m[0][1] - m[1][0]) * I_UNIT / 2.0,
        (m[0][0] - m[1][1]) / 2.0,
    ])
}

/// Axis and rate of the principal-branch generator of a single-qubit unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveGenerator {
    pub axis: [f64; 3],
    /// Rotation rate in rad per unit time, within `[0, pi / duration]`.
    pub rate: f64,
}

impl EffectiveGenerator {
    /// Rate-weighted axis, i.e. the effective field vector.
    pub fn vector(&self) -> [f64; 3] {
        [
            self.axis[0] * self.rate,
            self.axis[1] * self.rate,
            self.axis[2] * self.rate,
        ]
    }
}

/// Extract `(axis, rate)` with `u = +/- rotation(axis, rate * duration)` up to a global phase.
///
/// The rotation angle is folded into `[0, pi]`, flipping the axis when needed. A
/// unitary within 1e-12 of `+/- I` yields rate 0 and the fixed axis `(0, 0, 1)`.
pub fn effective_generator(u: &Operator2, duration: f64) -> Result<EffectiveGenerator> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(DdError::invalid(format!("duration must be positive, got {duration}")));
    }
    if !u.is_finite() || !u.is_unitary(1e-9) {
        return Err(DdError::invalid("effective_generator needs a unitary operator"));
    }
    // Strip the global phase: det(e^{i a} V) = e^{2 i a} for V in SU(2).
    let det = u.det();
    let half_phase = Complex64::from_polar(1.0, -det.arg() / 2.0);
    let mut v = pauli_decompose(&u.scale(half_phase));
    if v.0[0].re < 0.0 {
        for c in v.0.iter_mut() {
            *c = -*c;
        }
    }
    let cos_half = v.0[0].re;
    // c_k = -i sin(a/2) n_k, so sin(a/2) n_k = -Im(c_k).
    let sn = [-v.0[1].im, -v.0[2].im, -v.0[3].im];
    let sin_half = norm3(&sn);
    if sin_half <= 1e-12 {
        return Ok(EffectiveGenerator { axis: [0.0, 0.0, 1.0], rate: 0.0 });
    }
    let angle = 2.0 * sin_half.atan2(cos_half);
    let axis = [sn[0] / sin_half, sn[1] / sin_half, sn[2] / sin_half];
    Ok(EffectiveGenerator { axis, rate: angle / duration })
}

/// A single-qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Operator2);

impl DensityMatrix {
    /// Validate `op` as a state: Hermitian and unit trace within 1e-12, eigenvalues >= -1e-10.
    pub fn new(op: Operator2) -> Result<Self> {
        if !op.is_finite() {
            return Err(DdError::invalid("density matrix has non-finite entries"));
        }
        if op.max_abs_diff(&op.adjoint()) > 1e-12 {
            return Err(DdError::invalid("density matrix is not Hermitian"));
        }
        if (op.trace() - ONE).norm() > 1e-12 {
            return Err(DdError::invalid("density matrix trace differs from 1"));
        }
        let bloch = bloch_of(&op);
        if 0.5 * (1.0 - norm3(&bloch)) < -1e-10 {
            return Err(DdError::invalid("density matrix has a negative eigenvalue"));
        }
        Ok(DensityMatrix(op))
    }

    /// `(I + r . sigma) / 2`; requires `|r| <= 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let op = Operator2::new([
            [Complex64::new((1.0 + r[2]) / 2.0, 0.0), Complex64::new(r[0] / 2.0, -r[1] / 2.0)],
            [Complex64::new(r[0] / 2.0, r[1] / 2.0), Complex64::new((1.0 - r[2]) / 2.0, 0.0)],
        ]);
        Self::new(op)
    }

    pub fn operator(&self) -> &Operator2 {
        &self.0
    }

    pub fn bloch(&self) -> [f64; 3] {
        bloch_of(&self.0)
    }

    /// `U rho U^dag`.
    pub fn evolve(&self, u: &Operator2) -> DensityMatrix {
        DensityMatrix(*u * self.0 * u.adjoint())
    }

    /// `<sigma_k>` for k = 1, 2, 3.
    pub fn expectation(&self, k: usize) -> f64 {
        (self.0 * Operator2::pauli(k)).trace().re
    }
}

fn bloch_of(op: &Operator2) -> [f64; 3] {
    let m = &op.m;
    [2.0 * m[1][0].re, 2.0 * m[1][0].im, (m[0][0] - m[1][1]).re]
}
