//! Physical model of the optomechanical transducer.
//!
//! Units are dimensionless with the mechanical damping rate as the
//! frequency unit. Index 0 of every pair refers to the microwave cavity,
//! index 1 to the optical cavity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quantum::{ModeSpace, OperatorMatrix, MECHANICAL, MICROWAVE, OPTICAL};

/// All device parameters: frequencies, couplings, pumps, damping rates and
/// bath occupation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransducerParams {
    pub omega_m: f64,
    pub omega_c: [f64; 2],
    /// Single-photon optomechanical couplings.
    pub gamma: [f64; 2],
    /// Pump amplitudes of the driven Hamiltonian.
    pub epsilon: [f64; 2],
    pub omega_d: [f64; 2],
    /// Cavity damping rates.
    pub delta: [f64; 2],
    pub delta_m: f64,
    /// Thermal occupation of the mechanical bath.
    pub n_th: f64,
    /// Pump-induced mean photon numbers.
    pub n_pump: [f64; 2],
}

impl Default for TransducerParams {
    fn default() -> Self {
        Self {
            omega_m: 50.0,
            omega_c: [500.0, 800.0],
            gamma: [0.02, 0.02],
            epsilon: [1.0, 1.0],
            // Red-detuned by one mechanical frequency.
            omega_d: [450.0, 750.0],
            delta: [10.0, 10.0],
            delta_m: 1.0,
            n_th: 2.0,
            // C_1 = C_2 = 1 with the default couplings and damping.
            n_pump: [6250.0, 6250.0],
        }
    }
}

impl TransducerParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega_m,
            self.omega_c[0],
            self.omega_c[1],
            self.gamma[0],
            self.gamma[1],
            self.epsilon[0],
            self.epsilon[1],
            self.omega_d[0],
            self.omega_d[1],
            self.delta[0],
            self.delta[1],
            self.delta_m,
            self.n_th,
            self.n_pump[0],
            self.n_pump[1],
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("transducer parameters must be finite"));
        }
        let positive = [
            ("omega_m", self.omega_m),
            ("gamma_1", self.gamma[0]),
            ("gamma_2", self.gamma[1]),
            ("delta_1", self.delta[0]),
            ("delta_2", self.delta[1]),
            ("delta_m", self.delta_m),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(invalid(format!("{name} must be > 0 (got {v})")));
            }
        }
        let nonneg = [("n_th", self.n_th), ("n_pump_1", self.n_pump[0]), ("n_pump_2", self.n_pump[1])];
        for (name, v) in nonneg {
            if v < 0.0 {
                return Err(invalid(format!("{name} must be >= 0 (got {v})")));
            }
        }
        Ok(())
    }

    /// Pump-enhanced couplings `(G_1, G_2)`.
    pub fn cavity_rates(&self) -> Result<[f64; 2]> {
        Ok([
            cavity_rate(self.gamma[0], self.n_pump[0])?,
            cavity_rate(self.gamma[1], self.n_pump[1])?,
        ])
    }

    pub fn cooperativities(&self) -> Result<CooperativityPair> {
        let g = self.cavity_rates()?;
        Ok(CooperativityPair {
            c1: cooperativity(g[0], self.delta[0], self.delta_m)?,
            c2: cooperativity(g[1], self.delta[1], self.delta_m)?,
        })
    }

    /// Analytic on-resonance efficiency of these parameters.
    pub fn efficiency(&self) -> Result<f64> {
        conversion_efficiency(self.cooperativities()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooperativityPair {
    pub c1: f64,
    pub c2: f64,
}

impl CooperativityPair {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 0.0 && c2 >= 0.0) {
            return Err(invalid(format!("cooperativities must be >= 0 (got {c1}, {c2})")));
        }
        Ok(Self { c1, c2 })
    }
}

/// `G = gamma * sqrt(n)`.
pub fn cavity_rate(gamma_l: f64, n_l: f64) -> Result<f64> {
    if gamma_l.is_nan() || gamma_l <= 0.0 {
        return Err(invalid(format!("coupling must be > 0 (got {gamma_l})")));
    }
    if n_l.is_nan() || n_l < 0.0 {
        return Err(invalid(format!("pump photon number must be >= 0 (got {n_l})")));
    }
    Ok(gamma_l * n_l.sqrt())
}

/// `C = 4 G^2 / (delta_l delta_m)`.
pub fn cooperativity(g: f64, delta_l: f64, delta_m: f64) -> Result<f64> {
    if !(delta_l > 0.0) || !(delta_m > 0.0) {
        return Err(invalid(format!("damping rates must be > 0 (got {delta_l}, {delta_m})")));
    }
    Ok(4.0 * g * g / (delta_l * delta_m))
}

/// Which denominator to use in the efficiency formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EfficiencyForm {
    /// `4 C1 C2 / (1 + C1 + C2)^2`, bounded by one.
    #[default]
    Matched,
    /// `4 C1 C2 / (1 + C1 + C2)`; unbounded, kept for comparison only.
    Unsquared,
}

/// Matched conversion efficiency `4 C1 C2 / (1 + C1 + C2)^2`.
pub fn conversion_efficiency(c: CooperativityPair) -> Result<f64> {
    conversion_efficiency_with(c, EfficiencyForm::Matched)
}

pub fn conversion_efficiency_with(c: CooperativityPair, form: EfficiencyForm) -> Result<f64> {
    let CooperativityPair { c1, c2 } = CooperativityPair::new(c.c1, c.c2)?;
    let denom = 1.0 + c1 + c2;
    Ok(match form {
        EfficiencyForm::Matched => 4.0 * c1 * c2 / (denom * denom),
        EfficiencyForm::Unsquared => 4.0 * c1 * c2 / denom,
    })
}

fn check_transducer_space(space: &ModeSpace) -> Result<()> {
    if space.num_modes() != 3 {
        return Err(invalid(format!(
            "transducer space needs 3 modes (microwave, optical, mechanical), got {}",
            space.num_modes()
        )));
    }
    Ok(())
}

/// Time-independent part of the driven Hamiltonian and its drive terms.
///
/// `H(t) = static + sum_k (X_k e^{-i w_k t} + X_k† e^{i w_k t})`.
#[derive(Debug, Clone)]
pub struct DrivenHamiltonian {
    pub static_part: OperatorMatrix,
    pub drives: Vec<DriveTerm>,
}

#[derive(Debug, Clone)]
pub struct DriveTerm {
    /// Operator multiplying `e^{-i omega t}`; its adjoint multiplies `e^{i omega t}`.
    pub op: OperatorMatrix,
    pub omega: f64,
}

impl DriveTerm {
    pub fn at(&self, t: f64) -> OperatorMatrix {
        let phase = Complex64::from_polar(1.0, -self.omega * t);
        &self.op.scale(phase) + &self.op.adjoint().scale(phase.conj())
    }
}

impl DrivenHamiltonian {
    pub fn at(&self, t: f64) -> OperatorMatrix {
        self.drives.iter().fold(self.static_part.clone(), |h, d| &h + &d.at(t))
    }
}

/// Decomposes the full three-mode Hamiltonian into static and drive parts.
pub fn full_hamiltonian_terms(p: &TransducerParams, space: &ModeSpace) -> Result<DrivenHamiltonian> {
    check_transducer_space(space)?;
    let n_m = space.number(MECHANICAL)?;
    let b = space.annihilation(MECHANICAL)?;
    let position = &b + &b.adjoint();

    let mut h = n_m.scale_real(p.omega_m);
    let mut drives = Vec::with_capacity(2);
    for (l, slot) in [MICROWAVE, OPTICAL].into_iter().enumerate() {
        let n_c = space.number(slot)?;
        let a = space.annihilation(slot)?;
        h = &h + &n_c.scale_real(p.omega_c[l]);
        h = &h + &position.matmul(&n_c).scale_real(p.gamma[l]);
        // i eps (a† e^{-i w t} - a e^{i w t}) = X e^{-i w t} + X† e^{i w t}, X = i eps a†.
        drives.push(DriveTerm { op: a.adjoint().scale(Complex64::new(0.0, p.epsilon[l])), omega: p.omega_d[l] });
    }
    Ok(DrivenHamiltonian { static_part: h, drives })
}

/// Driven three-mode Hamiltonian at time `t`.
pub fn build_full_hamiltonian(p: &TransducerParams, space: &ModeSpace, t: f64) -> Result<OperatorMatrix> {
    Ok(full_hamiltonian_terms(p, space)?.at(t))
}

/// Linearized beam-splitter Hamiltonian in the displaced (fluctuation) frame,
/// `sum_l G_l (d_l b† + d_l† b)`.
pub fn build_beam_splitter_hamiltonian(p: &TransducerParams, space: &ModeSpace) -> Result<OperatorMatrix> {
    check_transducer_space(space)?;
    let g = p.cavity_rates()?;
    let b = space.annihilation(MECHANICAL)?;
    let b_dag = b.adjoint();
    let mut h = OperatorMatrix::zeros(space.total_dim());
    for (l, slot) in [MICROWAVE, OPTICAL].into_iter().enumerate() {
        if g[l] == 0.0 {
            continue;
        }
        let d = space.annihilation(slot)?;
        let hop = d.matmul(&b_dag);
        let term = &hop + &hop.adjoint();
        h = &h + &term.scale_real(g[l]);
    }
    Ok(h)
}
