//! Input-output scattering of the linearized transducer.
//!
//! Channels are ordered (microwave port, optical port, mechanical bath).
//! With drift matrix `M` and port couplings `K = diag(sqrt(delta_1),
//! sqrt(delta_2), sqrt(delta_m))` the scattering matrix at probe detuning
//! `omega` is `S = I - K (-i omega I - M)^{-1} K`. The mechanical bath is a
//! full channel, so `S` is unitary.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Lu};
use crate::model::TransducerParams;

pub const PORT_MICROWAVE: usize = 0;
pub const PORT_OPTICAL: usize = 1;
pub const PORT_MECHANICAL: usize = 2;

type Mat3 = [[Complex64; 3]; 3];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Linearized equations of motion for `(a_1, a_2, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftMatrix {
    pub entries: Mat3,
}

impl DriftMatrix {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let flat: Vec<Complex64> = self.entries.iter().flatten().copied().collect();
        linalg::general_eigenvalues(3, &flat)
    }

    /// All modes damped: the Hermitian part `(M + M†)/2` is negative definite.
    pub fn is_stable(&self) -> bool {
        let flat: Vec<Complex64> = self.entries.iter().flatten().copied().collect();
        linalg::hermitian_eigenvalues(3, &flat).last().is_some_and(|&top| top < 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringMatrix {
    pub omega: f64,
    pub entries: Mat3,
}

impl ScatteringMatrix {
    /// Element `output <- input`.
    pub fn element(&self, output: usize, input: usize) -> Complex64 {
        self.entries[output][input]
    }

    /// Largest entry of `S† S − I`.
    pub fn unitarity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let s: Complex64 = (0..3).map(|k| self.entries[k][i].conj() * self.entries[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((s - target).norm());
            }
        }
        err
    }
}

/// `[[−δ1/2, 0, −iG1], [0, −δ2/2, −iG2], [−iG1, −iG2, −δm/2]]`.
pub fn drift_matrix(p: &TransducerParams) -> Result<DriftMatrix> {
    for (name, d) in [("delta_1", p.delta[0]), ("delta_2", p.delta[1]), ("delta_m", p.delta_m)] {
        if !(d > 0.0) {
            return Err(invalid(format!("{name} must be > 0 (got {d})")));
        }
    }
    let g = p.cavity_rates()?;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    Ok(DriftMatrix {
        entries: [
            [c(-p.delta[0] / 2.0, 0.0), ZERO, c(0.0, -g[0])],
            [ZERO, c(-p.delta[1] / 2.0, 0.0), c(0.0, -g[1])],
            [c(0.0, -g[0]), c(0.0, -g[1]), c(-p.delta_m / 2.0, 0.0)],
        ],
    })
}

pub fn scattering_matrix(p: &TransducerParams, omega: f64) -> Result<ScatteringMatrix> {
    let m = drift_matrix(p)?;
    if !omega.is_finite() {
        return Err(invalid(format!("detuning must be finite (got {omega})")));
    }
    let k = [p.delta[0].sqrt(), p.delta[1].sqrt(), p.delta_m.sqrt()];
    // A = -i omega I - M
    let mut a = vec![ZERO; 9];
    for i in 0..3 {
        for j in 0..3 {
            a[i * 3 + j] = -m.entries[i][j];
        }
        a[i * 3 + i] -= Complex64::new(0.0, omega);
    }
    let lu = Lu::factor(3, a, 1e-14).map_err(|_| Error::ResonanceSingularity { omega })?;
    let mut entries = [[ZERO; 3]; 3];
    for col in 0..3 {
        let mut rhs = [ZERO; 3];
        rhs[col] = Complex64::new(k[col], 0.0);
        let x = lu.solve(&rhs);
        for row in 0..3 {
            let direct = if row == col { 1.0 } else { 0.0 };
            entries[row][col] = Complex64::new(direct, 0.0) - x[row] * k[row];
        }
    }
    Ok(ScatteringMatrix { omega, entries })
}

/// Microwave-to-optical power transmission `|S_21(omega)|^2`.
pub fn spectral_efficiency(p: &TransducerParams, omega: f64) -> Result<f64> {
    let s = scattering_matrix(p, omega)?;
    Ok(s.element(PORT_OPTICAL, PORT_MICROWAVE).norm_sqr())
}

/// Thermal noise quanta referred to the input, `n_th |S_23|^2 / eta`.
///
/// Returns infinity when the conversion efficiency vanishes.
pub fn added_noise_quanta(p: &TransducerParams, omega: f64) -> Result<f64> {
    let s = scattering_matrix(p, omega)?;
    let eta = s.element(PORT_OPTICAL, PORT_MICROWAVE).norm_sqr();
    let thermal = p.n_th * s.element(PORT_OPTICAL, PORT_MECHANICAL).norm_sqr();
    Ok(if thermal == 0.0 { 0.0 } else { thermal / eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{conversion_efficiency, CooperativityPair};
    use proptest::prelude::*;

    fn params(g: [f64; 2], delta: [f64; 2], delta_m: f64) -> TransducerParams {
        // gamma = 1 so that G = sqrt(n_pump).
        TransducerParams { gamma: [1.0, 1.0], n_pump: [g[0] * g[0], g[1] * g[1]], delta, delta_m, ..Default::default() }
    }

    #[test]
    fn decoupled_drift_is_diagonal() {
        let p = params([0.0, 0.0], [2.0, 3.0], 0.5);
        let m = drift_matrix(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(m.entries[i][j], ZERO);
                }
            }
        }
        assert_eq!(m.entries[0][0].re, -1.0);
        assert_eq!(m.entries[1][1].re, -1.5);
        assert_eq!(m.entries[2][2].re, -0.25);
    }

    #[test]
    fn drift_rejects_nonpositive_damping() {
        assert!(drift_matrix(&params([1.0, 1.0], [0.0, 1.0], 1.0)).is_err());
        assert!(drift_matrix(&params([1.0, 1.0], [1.0, 1.0], -1.0)).is_err());
    }

    /// Roots of the monic cubic `x^3 + c2 x^2 + c1 x + c0` by Durand-Kerner.
    fn cubic_roots(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
        let f = |x: Complex64| ((x + c2) * x + c1) * x + c0;
        let mut r = [Complex64::new(0.4, 0.9), Complex64::new(0.4, 0.9).powu(2), Complex64::new(0.4, 0.9).powu(3)];
        for _ in 0..500 {
            for i in 0..3 {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..3 {
                    if i != j {
                        denom *= r[i] - r[j];
                    }
                }
                r[i] -= f(r[i]) / denom;
            }
        }
        r
    }

    #[test]
    fn drift_eigenvalues_match_characteristic_polynomial() {
        // M = -I/2 - i G with G = [[0,0,1],[0,0,1],[1,1,0]].
        // det(xI - M) expanded by hand: with y = x + 1/2, y^3 + 2y = 0 shifted.
        let p = params([1.0, 1.0], [1.0, 1.0], 1.0);
        let m = drift_matrix(&p).unwrap();
        let h = Complex64::new(0.5, 0.0);
        // (x + 1/2)^3 + 2 (x + 1/2) = x^3 + 1.5 x^2 + 2.75 x + 1.125
        let roots = cubic_roots(Complex64::new(1.5, 0.0), Complex64::new(2.75, 0.0), Complex64::new(1.125, 0.0));
        let mut ev = m.eigenvalues();
        assert_eq!(ev.len(), 3);
        let key = |z: &Complex64| (z.im * 1e6).round() as i64;
        ev.sort_by_key(key);
        let mut roots = roots.to_vec();
        roots.sort_by_key(key);
        for (a, b) in ev.iter().zip(&roots) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
            assert!(((a + h).re).abs() < 1e-10);
        }
    }

    #[test]
    fn decoupled_full_reflection() {
        let p = params([0.0, 0.0], [2.0, 5.0], 1.0);
        let s = scattering_matrix(&p, 0.0).unwrap();
        for i in 0..3 {
            assert!((s.entries[i][i] + 1.0).norm() < 1e-14);
        }
        assert_eq!(s.element(PORT_OPTICAL, PORT_MICROWAVE), ZERO);
    }

    #[test]
    fn no_conversion_without_both_couplings() {
        for g in [[0.0, 1.3], [0.7, 0.0]] {
            let p = params(g, [1.0, 2.0], 1.0);
            for omega in [-1.0, 0.0, 0.4] {
                assert!(spectral_efficiency(&p, omega).unwrap() < 1e-30);
            }
        }
    }

    #[test]
    fn unit_cooperativity_gives_four_ninths() {
        // C = 4 G^2 / (delta_l delta_m) = 1 with G = 0.5, delta = 1.
        let p = params([0.5, 0.5], [1.0, 1.0], 1.0);
        assert!((spectral_efficiency(&p, 0.0).unwrap() - 4.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn added_noise_scales_inverse_with_microwave_cooperativity() {
        // For this model n_add = n_th / C_1 on resonance.
        let p = TransducerParams { n_pump: [4000.0, 9000.0], n_th: 3.0, ..Default::default() };
        let c = p.cooperativities().unwrap();
        let n = added_noise_quanta(&p, 0.0).unwrap();
        assert!((n - 3.0 / c.c1).abs() < 1e-9 * n);
    }

    #[test]
    fn stable_for_positive_damping() {
        let p = params([3.0, 0.1], [0.1, 7.0], 0.01);
        let m = drift_matrix(&p).unwrap();
        assert!(m.is_stable());
        assert!(m.eigenvalues().iter().all(|z| z.re < 0.0));
    }

    proptest! {
        #[test]
        fn on_resonance_matches_cooperativity_formula(
            g1 in 0.0f64..5.0, g2 in 0.0f64..5.0,
            d1 in 0.1f64..20.0, d2 in 0.1f64..20.0, dm in 0.05f64..5.0,
        ) {
            let p = params([g1, g2], [d1, d2], dm);
            let c = p.cooperativities().unwrap();
            let analytic = conversion_efficiency(CooperativityPair { c1: c.c1, c2: c.c2 }).unwrap();
            prop_assert!((spectral_efficiency(&p, 0.0).unwrap() - analytic).abs() < 1e-9);
        }

        #[test]
        fn unitary_and_reciprocal(
            g1 in 0.0f64..5.0, g2 in 0.0f64..5.0,
            d1 in 0.1f64..20.0, d2 in 0.1f64..20.0, dm in 0.05f64..5.0,
            omega in -20.0f64..20.0,
        ) {
            let p = params([g1, g2], [d1, d2], dm);
            let s = scattering_matrix(&p, omega).unwrap();
            prop_assert!(s.unitarity_error() < 1e-9);
            let s_neg = scattering_matrix(&p, -omega).unwrap();
            let fwd = s.element(PORT_OPTICAL, PORT_MICROWAVE).norm();
            prop_assert!((s.element(PORT_MICROWAVE, PORT_OPTICAL).norm() - s_neg.element(PORT_OPTICAL, PORT_MICROWAVE).norm()).abs() < 1e-12);
            prop_assert!((s.element(PORT_MICROWAVE, PORT_OPTICAL).norm() - fwd).abs() < 1e-12);
            prop_assert!(fwd * fwd <= 1.0 + 1e-12);
            prop_assert!(drift_matrix(&p).unwrap().eigenvalues().iter().all(|z| z.re <= 0.0));
        }

        #[test]
        fn symmetric_device_has_even_spectrum(g in 0.0f64..3.0, d in 0.1f64..10.0, dm in 0.1f64..3.0, omega in 0.0f64..10.0) {
            let p = params([g, g], [d, d], dm);
            let a = spectral_efficiency(&p, omega).unwrap();
            let b = spectral_efficiency(&p, -omega).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
