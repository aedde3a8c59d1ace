//! Pauli transfer maps, chi matrices and process fidelities.
//!
//! The chi matrix uses the operator basis `E = (I, sigma_x, i sigma_y, sigma_z)`,
//! so that `rho -> sum_mn chi_mn E_m rho E_n^dagger` and, for real-valued
//! dephasing channels, chi comes out real.

use num_complex::Complex64;

use crate::error::{DdError, Result};
use crate::su2::Operator2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Chi-matrix basis element `E_m`.
pub fn chi_basis(m: usize) -> Operator2 {
    match m {
        0 => Operator2::identity(),
        1 => Operator2::pauli_x(),
        2 => Operator2::pauli_y().scale(Complex64::new(0.0, 1.0)),
        3 => Operator2::pauli_z(),
        _ => panic!("chi basis index {m} out of range"),
    }
}

/// Real 4x4 Pauli transfer matrix `R_ij = Tr(sigma_i Phi(sigma_j)) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumMap {
    pub ptm: [[f64; 4]; 4],
}

impl QuantumMap {
    pub fn zero() -> Self {
        QuantumMap { ptm: [[0.0; 4]; 4] }
    }

    pub fn identity() -> Self {
        let mut ptm = [[0.0; 4]; 4];
        for (i, row) in ptm.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        QuantumMap { ptm }
    }

    pub fn from_unitary(u: &Operator2) -> Self {
        let ud = u.adjoint();
        let mut ptm = [[0.0; 4]; 4];
        for j in 0..4 {
            let image = *u * Operator2::pauli(j) * ud;
            for (i, row) in ptm.iter_mut().enumerate() {
                row[j] = 0.5 * (Operator2::pauli(i) * image).trace().re;
            }
        }
        QuantumMap { ptm }
    }

    pub fn add_assign(&mut self, other: &QuantumMap) {
        for i in 0..4 {
            for j in 0..4 {
                self.ptm[i][j] += other.ptm[i][j];
            }
        }
    }

    pub fn scaled(&self, s: f64) -> QuantumMap {
        let mut out = *self;
        out.ptm.iter_mut().flatten().for_each(|x| *x *= s);
        out
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &QuantumMap) -> QuantumMap {
        let mut ptm = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                ptm[i][j] = (0..4).map(|k| self.ptm[i][k] * first.ptm[k][j]).sum();
            }
        }
        QuantumMap { ptm }
    }

    /// Image of a Bloch vector.
    pub fn apply_bloch(&self, r: [f64; 3]) -> [f64; 3] {
        let v = [1.0, r[0], r[1], r[2]];
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.ptm[i + 1][j] * v[j]).sum();
        }
        out
    }

    /// Image of an arbitrary (not necessarily Hermitian) 2x2 operator.
    pub fn apply(&self, rho: &Operator2) -> Operator2 {
        let c: Vec<Complex64> = (0..4).map(|j| (Operator2::pauli(j) * *rho).trace()).collect();
        let mut out = Operator2::zero();
        for i in 0..4 {
            let coeff: Complex64 = (0..4).map(|j| c[j] * self.ptm[i][j]).sum();
            out = out + Operator2::pauli(i).scale(coeff * 0.5);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &QuantumMap) -> f64 {
        self.ptm
            .iter()
            .flatten()
            .zip(other.ptm.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Chi matrix via the Choi matrix `J = sum_ab Phi(|a><b|) (x) |a><b|`.
    pub fn to_chi(&self) -> ChiMatrix {
        // J[(i,a),(k,b)] = Phi(|a><b|)_ik with row-major vectorisation
        let mut j = [[ZERO; 4]; 4];
        for a in 0..2 {
            for b in 0..2 {
                let mut unit = Operator2::zero();
                unit.m[a][b] = Complex64::new(1.0, 0.0);
                let image = self.apply(&unit);
                for i in 0..2 {
                    for k in 0..2 {
                        j[2 * i + a][2 * k + b] = image.m[i][k];
                    }
                }
            }
        }
        let vecs: Vec<[Complex64; 4]> = (0..4)
            .map(|m| {
                let e = chi_basis(m);
                [e.m[0][0], e.m[0][1], e.m[1][0], e.m[1][1]]
            })
            .collect();
        let mut chi = [[ZERO; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                let mut s = ZERO;
                for p in 0..4 {
                    for q in 0..4 {
                        s += vecs[m][p].conj() * j[p][q] * vecs[n][q];
                    }
                }
                chi[m][n] = s * 0.25;
            }
        }
        ChiMatrix { m: chi }
    }
}

/// Process matrix in the basis of [`chi_basis`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiMatrix {
    pub m: [[Complex64; 4]; 4],
}

impl ChiMatrix {
    /// `chi = u u^dagger` with `u_m = Tr(E_m^dagger U) / 2`.
    pub fn from_unitary(u: &Operator2) -> Self {
        let coeff: Vec<Complex64> = (0..4).map(|m| (chi_basis(m).adjoint() * *u).trace() * 0.5).collect();
        let mut m = [[ZERO; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] = coeff[a] * coeff[b].conj();
            }
        }
        ChiMatrix { m }
    }

    pub fn identity() -> Self {
        Self::from_unitary(&Operator2::identity())
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.m[i][i]).sum()
    }

    pub fn apply(&self, rho: &Operator2) -> Operator2 {
        let mut out = Operator2::zero();
        for a in 0..4 {
            for b in 0..4 {
                if self.m[a][b] != ZERO {
                    let term = chi_basis(a) * *rho * chi_basis(b).adjoint();
                    out = out + term.scale(self.m[a][b]);
                }
            }
        }
        out
    }

    /// Hilbert-Schmidt inner product `Tr(self other^dagger)`.
    pub fn hs_inner(&self, other: &ChiMatrix) -> Complex64 {
        let mut s = ZERO;
        for a in 0..4 {
            for b in 0..4 {
                s += self.m[a][b] * other.m[a][b].conj();
            }
        }
        s
    }

    pub fn max_abs_diff(&self, other: &ChiMatrix) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest magnitude among entries outside the listed diagonal positions.
    pub fn max_off_pattern(&self, diagonal: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                if a == b && diagonal.contains(&a) {
                    continue;
                }
                worst = worst.max(self.m[a][b].norm());
            }
        }
        worst
    }
}

/// `|Tr(A B^dagger)| / sqrt(Tr(A A^dagger) Tr(B B^dagger))` for 2x2 operators.
pub fn unitary_fidelity(a: &Operator2, b: &Operator2) -> Result<f64> {
    let na = a.hs_inner(a).re;
    let nb = b.hs_inner(b).re;
    if !(na > 0.0 && nb > 0.0) {
        return Err(DdError::ZeroNorm);
    }
    Ok(a.hs_inner(b).norm() / (na * nb).sqrt())
}

/// The same normalised overlap for chi matrices.
pub fn chi_fidelity(a: &ChiMatrix, b: &ChiMatrix) -> Result<f64> {
    let na = a.hs_inner(a).re;
    let nb = b.hs_inner(b).re;
    if !(na > 0.0 && nb > 0.0) {
        return Err(DdError::ZeroNorm);
    }
    Ok(a.hs_inner(b).norm() / (na * nb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::su2::rotation;
    use std::f64::consts::PI;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn identity_map_gives_identity_chi() {
        let chi = QuantumMap::identity().to_chi();
        let mut expected = ChiMatrix { m: [[ZERO; 4]; 4] };
        expected.m[0][0] = re(1.0);
        assert!(chi.max_abs_diff(&expected) < 1e-15);
        assert!(chi.max_abs_diff(&ChiMatrix::identity()) < 1e-15);
    }

    #[test]
    fn choi_route_matches_unitary_oracle() {
        for (axis, angle) in [([1.0, 0.0, 0.0], PI), ([0.0, 0.6, 0.8], 1.1), ([0.0, 0.0, 1.0], 0.3)] {
            let u = rotation(axis, angle).unwrap();
            let via_map = QuantumMap::from_unitary(&u).to_chi();
            assert!(via_map.max_abs_diff(&ChiMatrix::from_unitary(&u)) < 1e-14);
        }
    }

    #[test]
    fn chi_reproduces_map() {
        let u = rotation([0.0, 0.6, 0.8], 1.1).unwrap();
        let mut map = QuantumMap::from_unitary(&u).scaled(0.5);
        map.add_assign(&QuantumMap::from_unitary(&Operator2::pauli_x()).scaled(0.5));
        let chi = map.to_chi();
        assert!((chi.trace() - re(1.0)).norm() < 1e-14);
        let rho = Operator2::new([[re(0.7), Complex64::new(0.1, 0.2)], [Complex64::new(0.1, -0.2), re(0.3)]]);
        assert!(chi.apply(&rho).max_abs_diff(&map.apply(&rho)) < 1e-14);
    }

    #[test]
    fn full_dephasing_chi() {
        // rho -> (rho + Z rho Z) / 2 kills x and y
        let mut map = QuantumMap::identity();
        map.ptm[1][1] = 0.0;
        map.ptm[2][2] = 0.0;
        let chi = map.to_chi();
        assert!((chi.m[0][0] - re(0.5)).norm() < 1e-15);
        assert!((chi.m[3][3] - re(0.5)).norm() < 1e-15);
        assert!(chi.max_off_pattern(&[0, 3]) < 1e-15);
    }

    #[test]
    fn spin_lock_chi() {
        // only x survives: (rho + X rho X) / 2
        let mut map = QuantumMap::identity();
        map.ptm[2][2] = 0.0;
        map.ptm[3][3] = 0.0;
        let chi = map.to_chi();
        assert!((chi.m[0][0] - re(0.5)).norm() < 1e-15);
        assert!((chi.m[1][1] - re(0.5)).norm() < 1e-15);
        assert!(chi.max_off_pattern(&[0, 1]) < 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let x = Operator2::pauli_x();
        assert!((unitary_fidelity(&x, &x.scale(Complex64::new(0.0, 1.0))).unwrap() - 1.0).abs() < 1e-15);
        let half = rotation([1.0, 0.0, 0.0], PI / 2.0).unwrap();
        assert!((unitary_fidelity(&half, &Operator2::identity()).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        // chi fidelity is the square of the propagator one for pure rotations
        let f = chi_fidelity(&ChiMatrix::from_unitary(&half), &ChiMatrix::identity()).unwrap();
        assert!((f - 0.5).abs() < 1e-15);
        assert!(matches!(unitary_fidelity(&Operator2::zero(), &x), Err(DdError::ZeroNorm)));
        let zero = ChiMatrix { m: [[ZERO; 4]; 4] };
        assert!(matches!(chi_fidelity(&zero, &ChiMatrix::identity()), Err(DdError::ZeroNorm)));
    }

    #[test]
    fn ptm_composition_matches_operator_product() {
        let a = rotation([1.0, 0.0, 0.0], 0.4).unwrap();
        let b = rotation([0.0, 0.0, 1.0], 1.3).unwrap();
        let composed = QuantumMap::from_unitary(&b).compose(&QuantumMap::from_unitary(&a));
        assert!(composed.max_abs_diff(&QuantumMap::from_unitary(&(b * a))) < 1e-14);
        let r = composed.apply_bloch([0.0, 0.0, 1.0]);
        let direct = crate::su2::DensityMatrix::from_bloch([0.0, 0.0, 1.0]).unwrap().evolve(&(b * a)).bloch();
        for k in 0..3 {
            assert!((r[k] - direct[k]).abs() < 1e-14);
        }
    }
}
