//! Small dense complex linear-algebra kernels.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// LU factorization with partial pivoting of a row-major `n x n` matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

/// Returned when a pivot falls below the relative tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub column: usize,
}

impl Lu {
    /// Factorizes `a` in place. Pivots smaller than `rel_tol * max|a_ij|`
    /// are reported as singular.
    pub fn factor(n: usize, mut a: Vec<Complex64>, rel_tol: f64) -> Result<Self, Singular> {
        assert_eq!(a.len(), n * n, "matrix storage must be n*n");
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let threshold = if scale > 0.0 { rel_tol * scale } else { f64::MIN_POSITIVE };
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, a[r * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= threshold {
                return Err(Singular { column: k });
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            let (upper, lower) = a.split_at_mut((k + 1) * n);
            let row_k = &upper[k * n..(k + 1) * n];
            for row in lower.chunks_exact_mut(n) {
                let f = row[k] / pivot;
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                row[k] = f;
                for c in (k + 1)..n {
                    row[c] -= f * row_k[c];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Eigenvalues (ascending) of a Hermitian matrix stored row-major.
pub fn hermitian_eigenvalues(n: usize, data: &[Complex64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, data);
    // Symmetrize to remove rounding-level anti-Hermitian parts.
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of a general complex matrix stored row-major.
pub fn general_eigenvalues(n: usize, data: &[Complex64]) -> Vec<Complex64> {
    let m = DMatrix::from_row_slice(n, n, data);
    m.schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_small_system() {
        let a = vec![c(2.0, 0.0), c(1.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)];
        let x_true = [c(1.0, -2.0), c(0.5, 0.25)];
        let b: Vec<_> = (0..2).map(|i| a[i * 2] * x_true[0] + a[i * 2 + 1] * x_true[1]).collect();
        let lu = Lu::factor(2, a, 1e-14).unwrap();
        let x = lu.solve(&b);
        for (u, v) in x.iter().zip(x_true.iter()) {
            assert!((u - v).norm() < 1e-14);
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let lu = Lu::factor(2, a, 1e-14).unwrap();
        let x = lu.solve(&[c(3.0, 0.0), c(4.0, 0.0)]);
        assert!((x[0] - c(4.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c(3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn detects_singular_matrix() {
        let a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        assert!(Lu::factor(2, a, 1e-12).is_err());
    }

    #[test]
    fn hermitian_spectrum_of_pauli_y() {
        let y = [c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)];
        let ev = hermitian_eigenvalues(2, &y);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn general_spectrum_of_triangular_matrix() {
        let m = [c(-1.0, 2.0), c(5.0, 0.0), c(0.0, 0.0), c(-3.0, -1.0)];
        let mut ev = general_eigenvalues(2, &m);
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - c(-3.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - c(-1.0, 2.0)).norm() < 1e-12);
    }
}
