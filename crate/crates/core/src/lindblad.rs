//! Lindblad master-equation engine.
//!
//! `d rho/dt = -i[H, rho] + sum_k rate_k (c_k rho c_k† - {c_k† c_k, rho}/2)`.
//!
//! Time evolution applies the generator directly to the density matrix
//! using compressed-row copies of the (sparse) ladder-built operators.
//! The vectorized superoperator is only assembled for steady-state solves.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::Lu;
use crate::model::{self, DriveTerm, TransducerParams};
use crate::quantum::{DensityMatrix, ModeSpace, OperatorMatrix, MECHANICAL, MICROWAVE, OPTICAL};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest Hilbert dimension for which the superoperator is assembled.
pub const MAX_SUPEROPERATOR_DIM: usize = 100;
/// Largest connected block of the superoperator solved densely.
pub const MAX_DENSE_BLOCK: usize = 2500;
/// Per-step trace drift that aborts an integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// A jump operator with its damping rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseChannel {
    pub op: OperatorMatrix,
    pub rate: f64,
}

impl CollapseChannel {
    pub fn new(op: OperatorMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(invalid(format!("collapse rate must be finite and >= 0 (got {rate})")));
        }
        Ok(Self { op, rate })
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl Csr {
    fn from_dense(m: &OperatorMatrix) -> Self {
        let n = m.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != ZERO {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `out += s * (A · rho)`.
    fn left_mul_acc(&self, rho: &[Complex64], n: usize, s: Complex64, out: &mut [Complex64]) {
        for i in 0..n {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (k, v) in self.row(i) {
                let f = s * v;
                for (o, r) in out_row.iter_mut().zip(&rho[k * n..(k + 1) * n]) {
                    *o += f * r;
                }
            }
        }
    }
}

/// Operator stored together with the transpose needed for right products.
#[derive(Debug, Clone)]
struct SparseOp {
    a: Csr,
    /// Rows of `A^T`, so `(rho A)_ij = sum_k rho_ik (A^T)_jk`.
    at: Csr,
}

impl SparseOp {
    fn new(m: &OperatorMatrix) -> Self {
        let t = OperatorMatrix::from_fn(m.dim(), |i, j| m[(j, i)]);
        Self { a: Csr::from_dense(m), at: Csr::from_dense(&t) }
    }

    /// `out += s * (rho · A)`.
    fn right_mul_acc(&self, rho: &[Complex64], n: usize, s: Complex64, out: &mut [Complex64]) {
        for i in 0..n {
            let rho_row = &rho[i * n..(i + 1) * n];
            for j in 0..n {
                let mut acc = ZERO;
                for (k, v) in self.at.row(j) {
                    acc += rho_row[k] * v;
                }
                out[i * n + j] += s * acc;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    /// `K = H - (i/2) sum_k rate_k c_k† c_k`.
    k: SparseOp,
    k_dag: SparseOp,
    drives: Vec<(SparseOp, SparseOp, f64)>,
    jumps: Vec<(f64, Csr, SparseOp)>,
}

/// Generator of the master equation.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    hamiltonian: OperatorMatrix,
    drives: Vec<DriveTerm>,
    channels: Vec<CollapseChannel>,
    compiled: Compiled,
}

impl Liouvillian {
    pub fn new(hamiltonian: OperatorMatrix, channels: Vec<CollapseChannel>) -> Result<Self> {
        Self::with_drives(hamiltonian, Vec::new(), channels)
    }

    /// Generator with a time-dependent Hamiltonian `H + sum (X e^{-iwt} + h.c.)`.
    pub fn with_drives(
        hamiltonian: OperatorMatrix,
        drives: Vec<DriveTerm>,
        channels: Vec<CollapseChannel>,
    ) -> Result<Self> {
        let n = hamiltonian.dim();
        let herm = hamiltonian.hermiticity_error();
        if herm > 1e-10 {
            return Err(invalid(format!("Hamiltonian is not Hermitian (error {herm:.3e})")));
        }
        if let Some(d) = drives.iter().find(|d| d.op.dim() != n) {
            return Err(invalid(format!("drive operator dim {} does not match {n}", d.op.dim())));
        }
        for ch in &channels {
            if ch.op.dim() != n {
                return Err(invalid(format!("collapse operator dim {} does not match {n}", ch.op.dim())));
            }
            if !(ch.rate >= 0.0) {
                return Err(invalid(format!("collapse rate must be >= 0 (got {})", ch.rate)));
            }
        }
        let mut k = hamiltonian.clone();
        let mut jumps = Vec::new();
        for ch in channels.iter().filter(|c| c.rate > 0.0) {
            let cdc = ch.op.adjoint().matmul(&ch.op);
            k = &k - &cdc.scale(Complex64::new(0.0, 0.5 * ch.rate));
            jumps.push((ch.rate, Csr::from_dense(&ch.op), SparseOp::new(&ch.op.adjoint())));
        }
        let compiled = Compiled {
            k_dag: SparseOp::new(&k.adjoint()),
            k: SparseOp::new(&k),
            drives: drives
                .iter()
                .map(|d| (SparseOp::new(&d.op), SparseOp::new(&d.op.adjoint()), d.omega))
                .collect(),
            jumps,
        };
        Ok(Self { hamiltonian, drives, channels, compiled })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[CollapseChannel] {
        &self.channels
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.drives.is_empty()
    }

    pub fn hamiltonian_at(&self, t: f64) -> OperatorMatrix {
        self.drives.iter().fold(self.hamiltonian.clone(), |h, d| &h + &d.at(t))
    }

    /// `L(t) rho` for an arbitrary (not necessarily physical) matrix.
    pub fn apply_matrix_at(&self, t: f64, rho: &OperatorMatrix) -> Result<OperatorMatrix> {
        let n = self.dim();
        if rho.dim() != n {
            return Err(invalid(format!("state dim {} does not match generator dim {n}", rho.dim())));
        }
        let mut out = OperatorMatrix::zeros(n);
        self.apply_into(t, rho.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn apply_into(&self, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim();
        out.iter_mut().for_each(|z| *z = ZERO);
        let c = &self.compiled;
        c.k.a.left_mul_acc(rho, n, -I, out);
        c.k_dag.right_mul_acc(rho, n, I, out);
        for (x, x_dag, omega) in &c.drives {
            let phase = Complex64::from_polar(1.0, -omega * t);
            // D(t) = X e^{-iwt} + X† e^{iwt}; contributes -i D rho + i rho D.
            x.a.left_mul_acc(rho, n, -I * phase, out);
            x_dag.a.left_mul_acc(rho, n, -I * phase.conj(), out);
            x.right_mul_acc(rho, n, I * phase, out);
            x_dag.right_mul_acc(rho, n, I * phase.conj(), out);
        }
        let mut tmp = vec![ZERO; n * n];
        for (rate, op, op_dag) in &c.jumps {
            tmp.iter_mut().for_each(|z| *z = ZERO);
            op_dag.right_mul_acc(rho, n, Complex64::new(1.0, 0.0), &mut tmp);
            op.left_mul_acc(&tmp, n, Complex64::new(*rate, 0.0), out);
        }
    }

    /// Sparse vectorized superoperator, row-major `vec(rho)[i*d + j] = rho_ij`.
    pub fn superoperator(&self) -> Result<SparseSuperoperator> {
        let d = self.dim();
        if self.is_time_dependent() {
            return Err(invalid("superoperator requires a time-independent Hamiltonian"));
        }
        if d > MAX_SUPEROPERATOR_DIM {
            return Err(invalid(format!(
                "superoperator assembly limited to dim <= {MAX_SUPEROPERATOR_DIM}, got {d}"
            )));
        }
        let mut entries: HashMap<(usize, usize), Complex64> = HashMap::new();
        let ident = Csr::from_dense(&OperatorMatrix::identity(d));
        let c = &self.compiled;
        // A rho B  ->  entry ((i,j),(k,l)) += A_ik B_lj.
        let mut add = |a: &Csr, b: &Csr, s: Complex64| {
            for i in 0..d {
                for (k, av) in a.row(i) {
                    for l in 0..d {
                        for (j, bv) in b.row(l) {
                            *entries.entry((i * d + j, k * d + l)).or_insert(ZERO) += s * av * bv;
                        }
                    }
                }
            }
        };
        add(&c.k.a, &ident, -I);
        add(&ident, &c.k_dag.a, I);
        for (rate, op, op_dag) in &c.jumps {
            add(op, &op_dag.a, Complex64::new(*rate, 0.0));
        }
        let mut triplets: Vec<(usize, usize, Complex64)> =
            entries.into_iter().filter(|(_, v)| *v != ZERO).map(|((r, c), v)| (r, c, v)).collect();
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        Ok(SparseSuperoperator { dim: d, triplets })
    }
}

/// Superoperator in coordinate form over `d^2` vectorized indices.
#[derive(Debug, Clone)]
pub struct SparseSuperoperator {
    dim: usize,
    triplets: Vec<(usize, usize, Complex64)>,
}

impl SparseSuperoperator {
    /// Hilbert-space dimension `d`; the superoperator acts on `d^2` vectors.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    pub fn apply(&self, rho: &OperatorMatrix) -> OperatorMatrix {
        let v = rho.as_slice();
        let mut out = OperatorMatrix::zeros(self.dim);
        let o = out.as_mut_slice();
        for &(r, c, x) in &self.triplets {
            o[r] += x * v[c];
        }
        out
    }

    /// Connected blocks of the sparsity graph.
    fn components(&self) -> Vec<usize> {
        let n = self.dim * self.dim;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(r, c, _) in &self.triplets {
            let (a, b) = (find(&mut parent, r), find(&mut parent, c));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..n).map(|x| find(&mut parent, x)).collect()
    }
}

/// Evaluates `L rho` at `t = 0`.
pub fn apply_liouvillian(l: &Liouvillian, rho: &DensityMatrix) -> Result<OperatorMatrix> {
    l.apply_matrix_at(0.0, rho.matrix())
}

/// Fixed-step RK4 integration of the master equation from `t = 0`.
pub fn evolve(l: &Liouvillian, rho0: &DensityMatrix, t_final: f64, dt: f64) -> Result<DensityMatrix> {
    evolve_with(l, rho0, t_final, dt, |_, _| {})
}

/// Like [`evolve`], calling `observe(t, rho)` at `t = 0` and after every step.
pub fn evolve_with(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
    mut observe: impl FnMut(f64, &OperatorMatrix),
) -> Result<DensityMatrix> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be > 0 (got {dt})")));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(invalid(format!("final time must be >= 0 (got {t_final})")));
    }
    if rho0.dim() != l.dim() {
        return Err(invalid(format!("state dim {} does not match generator dim {}", rho0.dim(), l.dim())));
    }
    observe(0.0, rho0.matrix());
    if t_final == 0.0 {
        return Ok(rho0.clone());
    }
    let steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = t_final / steps as f64;
    let n = l.dim();
    let nn = n * n;
    let mut rho = rho0.matrix().as_slice().to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; nn], vec![ZERO; nn], vec![ZERO; nn], vec![ZERO; nn]);
    let mut stage = vec![ZERO; nn];
    let mut snapshot = OperatorMatrix::zeros(n);

    for step in 1..=steps {
        let t = (step - 1) as f64 * h;
        l.apply_into(t, &rho, &mut k1);
        axpy(&rho, &k1, 0.5 * h, &mut stage);
        l.apply_into(t + 0.5 * h, &stage, &mut k2);
        axpy(&rho, &k2, 0.5 * h, &mut stage);
        l.apply_into(t + 0.5 * h, &stage, &mut k3);
        axpy(&rho, &k3, h, &mut stage);
        l.apply_into(t + h, &stage, &mut k4);
        let w = h / 6.0;
        for idx in 0..nn {
            rho[idx] += (k1[idx] + (k2[idx] + k3[idx]) * 2.0 + k4[idx]) * w;
        }

        let tr: Complex64 = (0..n).map(|i| rho[i * n + i]).sum();
        let drift = (tr - Complex64::new(1.0, 0.0)).norm();
        if !(drift <= TRACE_DRIFT_LIMIT) {
            return Err(Error::NumericalInstability {
                step,
                detail: format!("trace drifted to {tr} (limit {TRACE_DRIFT_LIMIT:e}); reduce dt"),
            });
        }
        snapshot.as_mut_slice().copy_from_slice(&rho);
        observe(step as f64 * h, &snapshot);
    }

    let out = OperatorMatrix::from_row_major(rho)?;
    let tr = out.trace();
    if (tr - Complex64::new(1.0, 0.0)).norm() >= 1e-7 {
        return Err(Error::NumericalInstability { step: steps, detail: format!("final trace {tr}") });
    }
    let herm = out.hermiticity_error();
    if herm >= 1e-8 {
        return Err(Error::NumericalInstability { step: steps, detail: format!("Hermiticity error {herm:.3e}") });
    }
    Ok(DensityMatrix::from_parts_unchecked(rho0.space().clone(), out))
}

fn axpy(x: &[Complex64], y: &[Complex64], a: f64, out: &mut [Complex64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + yi * a;
    }
}

/// Unique fixed point of a time-independent generator.
///
/// The vectorized system `L rho = 0` is split into the connected blocks of
/// its sparsity pattern. The block holding the populations is solved with
/// one row replaced by the trace constraint; every other block must be
/// nonsingular, so its solution is zero.
pub fn steady_state(l: &Liouvillian, space: &ModeSpace) -> Result<DensityMatrix> {
    let d = l.dim();
    if space.total_dim() != d {
        return Err(invalid("space does not match generator dimension"));
    }
    let sup = l.superoperator()?;
    let comp = sup.components();

    let diag_root = comp[0];
    if (0..d).any(|i| comp[i * d + i] != diag_root) {
        return Err(Error::Degenerate(
            "populations split into disconnected blocks; multiple steady states".into(),
        ));
    }

    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for (idx, &root) in comp.iter().enumerate() {
        members.entry(root).or_default().push(idx);
    }
    let mut by_row: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); d * d];
    for &(r, c, v) in &sup.triplets {
        by_row[r].push((c, v));
    }

    let mut roots: Vec<usize> = members.keys().copied().collect();
    roots.sort_unstable();
    let mut solution = vec![ZERO; d * d];
    for root in roots {
        let idx = &members[&root];
        let m = idx.len();
        if m > MAX_DENSE_BLOCK {
            return Err(invalid(format!("superoperator block of size {m} exceeds {MAX_DENSE_BLOCK}")));
        }
        let local: HashMap<usize, usize> = idx.iter().enumerate().map(|(k, &g)| (g, k)).collect();
        let mut a = vec![ZERO; m * m];
        for (lr, &g) in idx.iter().enumerate() {
            for &(c, v) in &by_row[g] {
                a[lr * m + local[&c]] += v;
            }
        }
        if root == diag_root {
            let trace_row = local[&0];
            a[trace_row * m..(trace_row + 1) * m].iter_mut().for_each(|z| *z = ZERO);
            for i in 0..d {
                a[trace_row * m + local[&(i * d + i)]] = Complex64::new(1.0, 0.0);
            }
            let lu = Lu::factor(m, a, 1e-12).map_err(|s| {
                Error::Degenerate(format!("population block singular at column {}; steady state not unique", s.column))
            })?;
            let mut rhs = vec![ZERO; m];
            rhs[trace_row] = Complex64::new(1.0, 0.0);
            for (k, x) in lu.solve(&rhs).into_iter().enumerate() {
                solution[idx[k]] = x;
            }
        } else {
            Lu::factor(m, a, 1e-12).map_err(|s| {
                Error::Degenerate(format!("coherence block singular at column {}; undamped coherences", s.column))
            })?;
        }
    }

    let rho = OperatorMatrix::from_row_major(solution)?.hermitian_part();
    let residual = l.apply_matrix_at(0.0, &rho)?.max_abs();
    if residual >= 1e-8 {
        return Err(Error::Degenerate(format!("steady-state residual {residual:.3e} exceeds 1e-8")));
    }
    DensityMatrix::new(space.clone(), rho)
}

/// Time step used when none is given: `0.005 / max(rates)`.
pub fn default_dt(p: &TransducerParams) -> Result<f64> {
    let g = p.cavity_rates()?;
    let fastest = [p.delta[0], p.delta[1], p.delta_m, g[0], g[1]].into_iter().fold(0.0, f64::max);
    if !(fastest > 0.0) {
        return Err(invalid("no positive rate to set the time step"));
    }
    Ok(0.005 / fastest)
}

/// Damping channels of the device.
///
/// Cavities lose photons at `delta_l` into baths with occupation
/// `cavity_n_th[l]`; the mechanics couples to a bath with occupation `n_th`:
/// `delta (n+1) D[c] + delta n D[c†]` per mode.
pub fn transducer_channels(
    p: &TransducerParams,
    space: &ModeSpace,
    cavity_n_th: [f64; 2],
) -> Result<Vec<CollapseChannel>> {
    if space.num_modes() != 3 {
        return Err(invalid("transducer space needs 3 modes"));
    }
    let mut channels = Vec::new();
    let modes = [
        (MICROWAVE, p.delta[0], cavity_n_th[0]),
        (OPTICAL, p.delta[1], cavity_n_th[1]),
        (MECHANICAL, p.delta_m, p.n_th),
    ];
    for (slot, rate, nbar) in modes {
        if !(nbar >= 0.0) {
            return Err(invalid(format!("bath occupation must be >= 0 (got {nbar})")));
        }
        let a = space.annihilation(slot)?;
        channels.push(CollapseChannel::new(a.clone(), rate * (nbar + 1.0))?);
        if nbar > 0.0 {
            channels.push(CollapseChannel::new(a.adjoint(), rate * nbar)?);
        }
    }
    Ok(channels)
}

/// Generator of the linearized (beam-splitter) device with default baths.
pub fn beam_splitter_liouvillian(p: &TransducerParams, space: &ModeSpace) -> Result<Liouvillian> {
    p.validate()?;
    let h = model::build_beam_splitter_hamiltonian(p, space)?;
    Liouvillian::new(h, transducer_channels(p, space, [0.0, 0.0])?)
}

/// Generator of the full driven device.
pub fn full_liouvillian(p: &TransducerParams, space: &ModeSpace) -> Result<Liouvillian> {
    let terms = model::full_hamiltonian_terms(p, space)?;
    Liouvillian::with_drives(terms.static_part, terms.drives, transducer_channels(p, space, [0.0, 0.0])?)
}

/// Conversion efficiency measured by a weak resonant probe on the microwave
/// port.
///
/// A coherent input of flux `amplitude^2` drives the microwave cavity through
/// its port; the steady-state optical output flux `delta_2 |<a_2>|^2` divided
/// by the input flux is the on-resonance efficiency. The mechanical bath is
/// taken at zero temperature since the linear response does not depend on it,
/// and two Fock levels per mode carry the first-order response exactly.
pub fn probe_efficiency(p: &TransducerParams, amplitude: f64) -> Result<f64> {
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(invalid(format!("probe amplitude must be > 0 (got {amplitude})")));
    }
    let space = ModeSpace::transducer(2)?;
    let cold = TransducerParams { n_th: 0.0, ..p.clone() };
    cold.validate()?;
    let a1 = space.annihilation(MICROWAVE)?;
    let a2 = space.annihilation(OPTICAL)?;
    let drive = (&a1.adjoint() - &a1).scale(Complex64::new(0.0, p.delta[0].sqrt() * amplitude));
    let h = &model::build_beam_splitter_hamiltonian(&cold, &space)? + &drive;
    let l = Liouvillian::new(h, transducer_channels(&cold, &space, [0.0, 0.0])?)?;
    let rho = steady_state(&l, &space)?;
    let out = crate::quantum::expectation(&rho, &a2)?;
    Ok(p.delta[1] * out.norm_sqr() / (amplitude * amplitude))
}
