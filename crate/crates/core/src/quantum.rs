//! Truncated Fock-space linear algebra.
//!
//! Operators are dense row-major complex matrices. Multi-mode spaces use a
//! fixed mode ordering: microwave cavity, optical cavity, mechanical
//! resonator. The first mode is the most significant factor of the tensor
//! product, so a basis index is `((n_mw * N_opt) + n_opt) * N_mech + n_mech`.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

pub const MICROWAVE: usize = 0;
pub const OPTICAL: usize = 1;
pub const MECHANICAL: usize = 2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Square dense complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "operator dimension must be positive");
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from row-major entries; the entry count must be a perfect square.
    pub fn from_row_major(data: Vec<Complex64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != data.len() {
            return Err(invalid(format!("{} entries do not form a square matrix", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// `|psi><psi|` for a state vector.
    pub fn projector(psi: &[Complex64]) -> Self {
        Self::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// Matrix product; zero entries of the left factor are skipped, which
    /// makes products with ladder operators cheap.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let n = self.dim;
        (0..n).map(|i| (0..n).map(|k| self.data[i * n + k] * v[k]).sum()).collect()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Self) -> Self {
        let (n, m) = (self.dim, rhs.dim);
        Self::from_fn(n * m, |i, j| self[(i / m, j / m)] * rhs[(i % m, j % m)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `self − self†`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim;
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                err = err.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        err
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Ascending eigenvalues of the Hermitian part.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(self.dim, &self.data)
    }
}

impl Index<(usize, usize)> for OperatorMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for OperatorMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        OperatorMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        OperatorMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.matmul(rhs)
    }
}

/// Per-mode Fock cutoffs of a multi-mode space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpace {
    cutoffs: Vec<usize>,
}

impl ModeSpace {
    pub fn new(cutoffs: &[usize]) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(invalid("mode space needs at least one mode"));
        }
        if let Some(c) = cutoffs.iter().find(|&&c| c < 2) {
            return Err(invalid(format!("Fock cutoff must be >= 2, got {c}")));
        }
        Ok(Self { cutoffs: cutoffs.to_vec() })
    }

    /// Microwave, optical and mechanical modes with a shared cutoff.
    pub fn transducer(cutoff: usize) -> Result<Self> {
        Self::new(&[cutoff; 3])
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn num_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn total_dim(&self) -> usize {
        self.cutoffs.iter().product()
    }

    /// Basis index of a Fock occupation tuple.
    pub fn index_of(&self, occupations: &[usize]) -> usize {
        assert_eq!(occupations.len(), self.cutoffs.len());
        occupations.iter().zip(&self.cutoffs).fold(0, |acc, (&n, &c)| {
            assert!(n < c, "occupation {n} outside cutoff {c}");
            acc * c + n
        })
    }

    /// Fock occupations of a basis index.
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.cutoffs.len()];
        for (slot, &c) in self.cutoffs.iter().enumerate().rev() {
            occ[slot] = index % c;
            index /= c;
        }
        occ
    }

    pub fn basis_vector(&self, occupations: &[usize]) -> Vec<Complex64> {
        let mut v = vec![ZERO; self.total_dim()];
        v[self.index_of(occupations)] = ONE;
        v
    }

    /// Annihilation operator of one mode, embedded in the full space.
    pub fn annihilation(&self, slot: usize) -> Result<OperatorMatrix> {
        let cutoff = *self
            .cutoffs
            .get(slot)
            .ok_or_else(|| invalid(format!("mode slot {slot} out of range")))?;
        embed(&annihilation(cutoff)?, slot, self)
    }

    /// Number operator of one mode, embedded in the full space.
    pub fn number(&self, slot: usize) -> Result<OperatorMatrix> {
        let cutoff = *self
            .cutoffs
            .get(slot)
            .ok_or_else(|| invalid(format!("mode slot {slot} out of range")))?;
        embed(&number(cutoff)?, slot, self)
    }

    pub fn total_number(&self) -> OperatorMatrix {
        let diag: Vec<f64> =
            (0..self.total_dim()).map(|i| self.occupations(i).iter().sum::<usize>() as f64).collect();
        OperatorMatrix::diagonal(&diag)
    }
}

/// Single-mode annihilation operator, `a[i, i+1] = sqrt(i+1)`.
pub fn annihilation(cutoff: usize) -> Result<OperatorMatrix> {
    if cutoff < 2 {
        return Err(invalid(format!("Fock cutoff must be >= 2, got {cutoff}")));
    }
    let mut a = OperatorMatrix::zeros(cutoff);
    for i in 0..cutoff - 1 {
        a[(i, i + 1)] = Complex64::new(((i + 1) as f64).sqrt(), 0.0);
    }
    Ok(a)
}

pub fn creation(cutoff: usize) -> Result<OperatorMatrix> {
    Ok(annihilation(cutoff)?.adjoint())
}

pub fn number(cutoff: usize) -> Result<OperatorMatrix> {
    if cutoff < 2 {
        return Err(invalid(format!("Fock cutoff must be >= 2, got {cutoff}")));
    }
    let diag: Vec<f64> = (0..cutoff).map(|n| n as f64).collect();
    Ok(OperatorMatrix::diagonal(&diag))
}

/// Places `op` in mode `slot` with identities on every other mode.
pub fn embed(op: &OperatorMatrix, slot: usize, space: &ModeSpace) -> Result<OperatorMatrix> {
    let cutoffs = space.cutoffs();
    if slot >= cutoffs.len() {
        return Err(invalid(format!("mode slot {slot} out of range for {} modes", cutoffs.len())));
    }
    if op.dim() != cutoffs[slot] {
        return Err(invalid(format!(
            "operator dim {} does not match cutoff {} of slot {slot}",
            op.dim(),
            cutoffs[slot]
        )));
    }
    let before: usize = cutoffs[..slot].iter().product();
    let after: usize = cutoffs[slot + 1..].iter().product();
    let n = space.total_dim();
    let m = op.dim();
    let mut out = OperatorMatrix::zeros(n);
    // Index = (outer * m + local) * after + inner.
    for outer in 0..before {
        for r in 0..m {
            for c in 0..m {
                let v = op[(r, c)];
                if v == ZERO {
                    continue;
                }
                for inner in 0..after {
                    let i = (outer * m + r) * after + inner;
                    let j = (outer * m + c) * after + inner;
                    out[(i, j)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// `Tr(rho · op)`.
pub fn expectation(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<Complex64> {
    trace_product(rho.matrix(), op)
}

/// `Tr(a · b)` without forming the product.
pub fn trace_product(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<Complex64> {
    if a.dim() != b.dim() {
        return Err(invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    let n = a.dim();
    let mut s = ZERO;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    Ok(s)
}

/// Validated quantum state on a [`ModeSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    space: ModeSpace,
    matrix: OperatorMatrix,
}

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const EIGENVALUE_FLOOR: f64 = -1e-8;

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(space: ModeSpace, matrix: OperatorMatrix) -> Result<Self> {
        if matrix.dim() != space.total_dim() {
            return Err(invalid(format!(
                "matrix dim {} does not match space dim {}",
                matrix.dim(),
                space.total_dim()
            )));
        }
        let herm = matrix.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(invalid(format!("density matrix not Hermitian (error {herm:.3e})")));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(invalid(format!("density matrix trace {tr} differs from 1")));
        }
        let min_ev = matrix.hermitian_eigenvalues()[0];
        if min_ev < EIGENVALUE_FLOOR {
            return Err(invalid(format!("density matrix has eigenvalue {min_ev:.3e} < 0")));
        }
        Ok(Self { space, matrix })
    }

    /// Wraps a matrix whose trace and Hermiticity the caller has checked.
    pub(crate) fn from_parts_unchecked(space: ModeSpace, matrix: OperatorMatrix) -> Self {
        Self { space, matrix }
    }

    pub fn pure(space: ModeSpace, psi: &[Complex64]) -> Result<Self> {
        if psi.len() != space.total_dim() {
            return Err(invalid("state vector length does not match space"));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(invalid("zero state vector"));
        }
        let psi: Vec<_> = psi.iter().map(|z| z / norm).collect();
        Self::new(space, OperatorMatrix::projector(&psi))
    }

    pub fn fock(space: ModeSpace, occupations: &[usize]) -> Result<Self> {
        let psi = space.basis_vector(occupations);
        Self::pure(space, &psi)
    }

    pub fn vacuum(space: ModeSpace) -> Self {
        let zeros = vec![0; space.num_modes()];
        Self::fock(space, &zeros).expect("vacuum is a valid state")
    }

    pub fn maximally_mixed(space: ModeSpace) -> Self {
        let n = space.total_dim();
        let m = OperatorMatrix::identity(n).scale_real(1.0 / n as f64);
        Self { space, matrix: m }
    }

    /// Product of per-mode thermal states with the given mean occupations,
    /// renormalized within the truncated space.
    pub fn thermal(space: ModeSpace, mean_occupations: &[f64]) -> Result<Self> {
        if mean_occupations.len() != space.num_modes() {
            return Err(invalid("one mean occupation per mode required"));
        }
        if mean_occupations.iter().any(|&n| !(n >= 0.0) || !n.is_finite()) {
            return Err(invalid("mean occupations must be finite and >= 0"));
        }
        let per_mode: Vec<Vec<f64>> = mean_occupations
            .iter()
            .zip(space.cutoffs())
            .map(|(&nbar, &c)| {
                let p: Vec<f64> = (0..c)
                    .map(|k| if nbar == 0.0 { if k == 0 { 1.0 } else { 0.0 } } else { (nbar / (1.0 + nbar)).powi(k as i32) })
                    .collect();
                let z: f64 = p.iter().sum();
                p.into_iter().map(|x| x / z).collect()
            })
            .collect();
        let diag: Vec<f64> = (0..space.total_dim())
            .map(|i| space.occupations(i).iter().enumerate().map(|(m, &k)| per_mode[m][k]).product())
            .collect();
        Self::new(space, OperatorMatrix::diagonal(&diag))
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> OperatorMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// Mean occupation of one mode.
    pub fn mean_number(&self, slot: usize) -> Result<f64> {
        let n = self.space.number(slot)?;
        Ok(expectation(self, &n)?.re)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.hermitian_eigenvalues()[0]
    }
}

impl From<linalg::Singular> for Error {
    fn from(s: linalg::Singular) -> Self {
        Error::Degenerate(format!("singular pivot in column {}", s.column))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn annihilation_lowers_fock_states() {
        let a2 = annihilation(2).unwrap();
        let out = a2.apply(&[c(0.0), c(1.0)]);
        assert_eq!(out, vec![c(1.0), c(0.0)]);

        let a3 = annihilation(3).unwrap();
        assert!(a3.apply(&[c(1.0), c(0.0), c(0.0)]).iter().all(|z| z.norm() == 0.0));

        let a4 = annihilation(4).unwrap();
        let out = a4.apply(&[c(0.0), c(0.0), c(1.0), c(0.0)]);
        assert!((out[1] - c(2f64.sqrt())).norm() < 1e-15);
        assert!(out[0].norm() == 0.0 && out[2].norm() == 0.0 && out[3].norm() == 0.0);
    }

    #[test]
    fn annihilation_rejects_small_cutoff() {
        assert!(matches!(annihilation(1), Err(Error::InvalidArgument(_))));
        assert!(ModeSpace::new(&[2, 1]).is_err());
    }

    #[test]
    fn commutator_is_identity_below_truncation_corner() {
        for n in 2..8 {
            let a = annihilation(n).unwrap();
            let comm = a.commutator(&a.adjoint());
            for i in 0..n - 1 {
                for j in 0..n - 1 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((comm[(i, j)] - c(expected)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn embed_identity_is_identity() {
        let space = ModeSpace::new(&[2, 2, 2]).unwrap();
        for slot in 0..3 {
            let e = embed(&OperatorMatrix::identity(2), slot, &space).unwrap();
            assert_eq!(e, OperatorMatrix::identity(8));
        }
    }

    #[test]
    fn embed_first_slot_matches_hand_kronecker() {
        // a ⊗ I for cutoffs (2, 2): nonzeros at (0,2) and (1,3), both 1.
        let space = ModeSpace::new(&[2, 2]).unwrap();
        let e = embed(&annihilation(2).unwrap(), 0, &space).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i, j) == (0, 2) || (i, j) == (1, 3) { 1.0 } else { 0.0 };
                assert_eq!(e[(i, j)], c(expected), "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn embed_rejects_mismatched_dim() {
        let space = ModeSpace::new(&[3, 2]).unwrap();
        assert!(embed(&annihilation(2).unwrap(), 0, &space).is_err());
        assert!(embed(&annihilation(2).unwrap(), 5, &space).is_err());
    }

    #[test]
    fn embed_matches_kron_of_identities() {
        let space = ModeSpace::new(&[2, 3, 2]).unwrap();
        let a = annihilation(3).unwrap();
        let expected = OperatorMatrix::identity(2).kron(&a).kron(&OperatorMatrix::identity(2));
        assert_eq!(embed(&a, 1, &space).unwrap(), expected);
    }

    #[test]
    fn expectation_of_number_operator() {
        let space = ModeSpace::new(&[3]).unwrap();
        let n = number(3).unwrap();
        let vac = DensityMatrix::fock(space.clone(), &[0]).unwrap();
        assert_eq!(expectation(&vac, &n).unwrap(), c(0.0));
        let two = DensityMatrix::fock(space.clone(), &[2]).unwrap();
        assert!((expectation(&two, &n).unwrap() - c(2.0)).norm() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(space);
        assert!((expectation(&mixed, &n).unwrap() - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn expectation_rejects_dim_mismatch() {
        let rho = DensityMatrix::vacuum(ModeSpace::new(&[2]).unwrap());
        assert!(expectation(&rho, &number(3).unwrap()).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let space = ModeSpace::new(&[2]).unwrap();
        let not_unit = OperatorMatrix::identity(2);
        assert!(DensityMatrix::new(space.clone(), not_unit).is_err());
        let negative = OperatorMatrix::diagonal(&[1.5, -0.5]);
        assert!(DensityMatrix::new(space.clone(), negative).is_err());
        let mut non_herm = OperatorMatrix::diagonal(&[0.5, 0.5]);
        non_herm[(0, 1)] = c(0.1);
        assert!(DensityMatrix::new(space, non_herm).is_err());
    }

    #[test]
    fn thermal_state_has_requested_occupation_in_wide_space() {
        let space = ModeSpace::new(&[80]).unwrap();
        let rho = DensityMatrix::thermal(space, &[2.0]).unwrap();
        assert!((rho.mean_number(0).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn index_and_occupations_are_inverse() {
        let space = ModeSpace::new(&[2, 3, 4]).unwrap();
        for i in 0..space.total_dim() {
            assert_eq!(space.index_of(&space.occupations(i)), i);
        }
        assert_eq!(space.index_of(&[1, 0, 0]), 12);
    }

    fn hermitian_strategy(n: usize) -> impl Strategy<Value = OperatorMatrix> {
        proptest::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
            let m = OperatorMatrix::from_fn(n, |i, j| Complex64::new(v[i * n + j], v[n * n + i * n + j]));
            m.hermitian_part()
        })
    }

    proptest! {
        #[test]
        fn embed_preserves_spectrum(op in hermitian_strategy(2), slot in 0usize..3) {
            let space = ModeSpace::new(&[2, 2, 2]).unwrap();
            let e = embed(&op, slot, &space).unwrap();
            let base = op.hermitian_eigenvalues();
            let ev = e.hermitian_eigenvalues();
            // Each eigenvalue of op appears four times.
            for (k, v) in ev.iter().enumerate() {
                prop_assert!((v - base[k / 4]).abs() < 1e-10);
            }
            let tr = e.trace();
            prop_assert!((tr - op.trace() * 4.0).norm() < 1e-10);
        }

        #[test]
        fn expectation_is_linear_and_real_for_hermitian(
            a in hermitian_strategy(3),
            b in hermitian_strategy(3),
            s in -2.0f64..2.0,
            w in 0.0f64..1.0,
        ) {
            let space = ModeSpace::new(&[3]).unwrap();
            let r1 = DensityMatrix::thermal(space.clone(), &[0.7]).unwrap();
            let r2 = DensityMatrix::maximally_mixed(space.clone());
            let combo = &a + &b.scale_real(s);
            let lhs = expectation(&r1, &combo).unwrap();
            let rhs = expectation(&r1, &a).unwrap() + expectation(&r1, &b).unwrap() * s;
            prop_assert!((lhs - rhs).norm() < 1e-12);
            prop_assert!(lhs.im.abs() < 1e-9);

            let mixed = &r1.matrix().scale_real(w) + &r2.matrix().scale_real(1.0 - w);
            let rho = DensityMatrix::new(space, mixed).unwrap();
            let lhs = expectation(&rho, &a).unwrap();
            let rhs = expectation(&r1, &a).unwrap() * w + expectation(&r2, &a).unwrap() * (1.0 - w);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
