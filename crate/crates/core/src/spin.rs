//! Dipolar-coupled spin-1/2 register under global rf control.
//!
//! Units follow the usual NMR table: chemical shifts and couplings are given
//! in kHz and every operator term carries a factor of pi, so a shift of
//! `w` kHz contributes `pi * 1e3 * w * sigma_z` (rad/s). Time is in seconds.
//!
//! Drift:
//!
//! ```text
//! H = sum_i pi w_i Z_i
//!   + sum_{i<j} (pi/2) D_ij (2 Z_i Z_j - X_i X_j - Y_i Y_j)
//!   + sum_{i<j} (pi/2) J_ij (Z_i Z_j + X_i X_j + Y_i Y_j)
//! ```
//!
//! The rf field drives every spin with the same two quadratures,
//! `pi * s * (u_x sum_i X_i + u_y sum_i Y_i)` for an rf scale `s`, and a
//! static-field offset of `d` Hz adds `pi d sum_i Z_i`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{compress3_permutation, swap_permutation};
use crate::error::{Error, Result};
use crate::pulse::ControlPulse;

pub type CMatrix = DMatrix<Complex64>;

/// Largest register simulated at the propagator level.
pub const MAX_SPINS: usize = 8;

const UNITARY_TOLERANCE: f64 = 1e-8;

/// Pauli-operator coefficient (rad/s) of a frequency given in kHz.
pub fn khz_to_angular(khz: f64) -> f64 {
    PI * 1e3 * khz
}

/// One pair term of the drift. `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    #[serde(default)]
    pub dipolar_khz: f64,
    #[serde(default)]
    pub j_khz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    /// Offsets from the transmitter, kHz.
    pub shifts_khz: Vec<f64>,
    pub couplings: Vec<Coupling>,
}

impl SpinSystem {
    pub fn new(shifts_khz: Vec<f64>, couplings: Vec<Coupling>) -> Result<Self> {
        let sys = SpinSystem { shifts_khz, couplings };
        sys.validate()?;
        Ok(sys)
    }

    /// `n` uncoupled spins on resonance.
    pub fn free(n_spins: usize) -> Result<Self> {
        Self::new(vec![0.0; n_spins], Vec::new())
    }

    /// Reads the square parameter table: chemical shifts on the diagonal,
    /// dipolar couplings below it, J couplings above it (all kHz).
    pub fn from_table(table: &[Vec<f64>]) -> Result<Self> {
        let n = table.len();
        if let Some(row) = table.iter().position(|r| r.len() != n) {
            return Err(Error::domain(format!(
                "parameter table row {row} has {} entries, expected {n}",
                table[row].len()
            )));
        }
        let shifts = (0..n).map(|i| table[i][i]).collect();
        let mut couplings = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (d, jc) = (table[j][i], table[i][j]);
                if d != 0.0 || jc != 0.0 {
                    couplings.push(Coupling { i, j, dipolar_khz: d, j_khz: jc });
                }
            }
        }
        Self::new(shifts, couplings)
    }

    /// Inverse of [`SpinSystem::from_table`].
    pub fn to_table(&self) -> Vec<Vec<f64>> {
        let n = self.n_spins();
        let mut table = vec![vec![0.0; n]; n];
        for (i, &w) in self.shifts_khz.iter().enumerate() {
            table[i][i] = w;
        }
        for c in &self.couplings {
            table[c.j][c.i] += c.dipolar_khz;
            table[c.i][c.j] += c.j_khz;
        }
        table
    }

    pub fn n_spins(&self) -> usize {
        self.shifts_khz.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_spins();
        if n == 0 || n > MAX_SPINS {
            return Err(Error::domain(format!(
                "spin count {n} outside 1..={MAX_SPINS}"
            )));
        }
        if self.shifts_khz.iter().any(|w| !w.is_finite()) {
            return Err(Error::domain("chemical shifts must be finite"));
        }
        for (k, c) in self.couplings.iter().enumerate() {
            if !(c.i < c.j && c.j < n) {
                return Err(Error::domain(format!(
                    "coupling ({}, {}) must satisfy i < j < {n}",
                    c.i, c.j
                )));
            }
            if !c.dipolar_khz.is_finite() || !c.j_khz.is_finite() {
                return Err(Error::domain(format!("coupling ({}, {}) is not finite", c.i, c.j)));
            }
            if self.couplings[..k].iter().any(|o| (o.i, o.j) == (c.i, c.j)) {
                return Err(Error::domain(format!("coupling ({}, {}) listed twice", c.i, c.j)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Pauli {
    X,
    Y,
    Z,
}

/// Pauli operator on spin `i` of an `n`-spin register (spin 0 is the most
/// significant tensor factor).
fn pauli_on(n: usize, i: usize, p: Pauli) -> CMatrix {
    let dim = 1usize << n;
    let mask = 1usize << (n - 1 - i);
    let mut m = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        let up = k & mask == 0;
        match p {
            Pauli::Z => m[(k, k)] = Complex64::new(if up { 1.0 } else { -1.0 }, 0.0),
            Pauli::X => m[(k ^ mask, k)] = Complex64::new(1.0, 0.0),
            Pauli::Y => m[(k ^ mask, k)] = Complex64::new(0.0, if up { 1.0 } else { -1.0 }),
        }
    }
    m
}

fn pauli_sum(n: usize, p: Pauli) -> CMatrix {
    (0..n).fold(CMatrix::zeros(1 << n, 1 << n), |acc, i| acc + pauli_on(n, i, p))
}

fn scaled(m: &CMatrix, s: f64) -> CMatrix {
    m.map(|z| z * s)
}

/// Drift Hamiltonian in rad/s.
pub fn build_drift(sys: &SpinSystem) -> Result<CMatrix> {
    sys.validate()?;
    let n = sys.n_spins();
    let ops: Vec<[CMatrix; 3]> = (0..n)
        .map(|i| [pauli_on(n, i, Pauli::X), pauli_on(n, i, Pauli::Y), pauli_on(n, i, Pauli::Z)])
        .collect();
    let mut h = CMatrix::zeros(sys.dim(), sys.dim());
    for (i, &w) in sys.shifts_khz.iter().enumerate() {
        h += scaled(&ops[i][2], khz_to_angular(w));
    }
    for c in &sys.couplings {
        let [xi, yi, zi] = &ops[c.i];
        let [xj, yj, zj] = &ops[c.j];
        let (xx, yy, zz) = (xi * xj, yi * yj, zi * zj);
        let d = 0.5 * khz_to_angular(c.dipolar_khz);
        let j = 0.5 * khz_to_angular(c.j_khz);
        h += scaled(&zz, 2.0 * d + j) + scaled(&xx, j - d) + scaled(&yy, j - d);
    }
    Ok(h)
}

/// Global rf term `pi * rf_scale * (u_x sum X + u_y sum Y)`, amplitudes in kHz.
pub fn control_generator(sys: &SpinSystem, u_x: f64, u_y: f64, rf_scale: f64) -> Result<CMatrix> {
    sys.validate()?;
    if !(u_x.is_finite() && u_y.is_finite() && rf_scale.is_finite()) {
        return Err(Error::domain("control amplitudes must be finite"));
    }
    let n = sys.n_spins();
    Ok(scaled(&pauli_sum(n, Pauli::X), rf_scale * khz_to_angular(u_x))
        + scaled(&pauli_sum(n, Pauli::Y), rf_scale * khz_to_angular(u_y)))
}

/// Operators needed to assemble the generator of any pulse step quickly.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    drift: CMatrix,
    sum_x: CMatrix,
    sum_y: CMatrix,
    sum_z: CMatrix,
}

impl Hamiltonian {
    pub fn new(sys: &SpinSystem) -> Result<Self> {
        let n = sys.n_spins();
        Ok(Hamiltonian {
            drift: build_drift(sys)?,
            sum_x: pauli_sum(n, Pauli::X),
            sum_y: pauli_sum(n, Pauli::Y),
            sum_z: pauli_sum(n, Pauli::Z),
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    /// Drift plus a static-field offset in Hz, shared by all pulse steps.
    pub fn offset_drift(&self, offset_hz: f64) -> CMatrix {
        &self.drift + scaled(&self.sum_z, PI * offset_hz)
    }

    /// `d H / d u_c` for quadrature `c` (0 = x, 1 = y), per kHz.
    pub fn control_direction(&self, quadrature: usize, rf_scale: f64) -> CMatrix {
        let op = if quadrature == 0 { &self.sum_x } else { &self.sum_y };
        scaled(op, rf_scale * khz_to_angular(1.0))
    }

    /// Full generator of one step with the offset drift precomputed.
    pub fn generator(&self, base: &CMatrix, u: [f64; 2], rf_scale: f64) -> CMatrix {
        base + scaled(&self.sum_x, rf_scale * khz_to_angular(u[0]))
            + scaled(&self.sum_y, rf_scale * khz_to_angular(u[1]))
    }
}

/// `exp(-i H dt)` together with the eigenbasis of `H`.
#[derive(Debug, Clone)]
pub struct StepPropagator {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
    pub propagator: CMatrix,
}

impl StepPropagator {
    pub fn new(h: CMatrix, dt: f64) -> Result<Self> {
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numerical("non-finite generator"));
        }
        let eig = SymmetricEigen::new(h);
        let phases = eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * dt));
        let v = eig.eigenvectors;
        let mut scaled_v = v.clone();
        for (col, phase) in phases.iter().enumerate() {
            scaled_v.column_mut(col).iter_mut().for_each(|z| *z *= *phase);
        }
        let propagator = &scaled_v * v.adjoint();
        Ok(StepPropagator {
            eigenvalues: eig.eigenvalues,
            eigenvectors: v,
            propagator,
        })
    }
}

/// Ordered product of the step propagators of `pulse`.
pub fn propagate(sys: &SpinSystem, pulse: &ControlPulse, rf_scale: f64, offset_hz: f64) -> Result<CMatrix> {
    pulse.validate(None)?;
    let ham = Hamiltonian::new(sys)?;
    propagate_with(&ham, pulse, rf_scale, offset_hz)
}

pub fn propagate_with(ham: &Hamiltonian, pulse: &ControlPulse, rf_scale: f64, offset_hz: f64) -> Result<CMatrix> {
    if !rf_scale.is_finite() || !offset_hz.is_finite() {
        return Err(Error::numerical("non-finite ensemble parameters"));
    }
    let base = ham.offset_drift(offset_hz);
    let mut u = CMatrix::identity(ham.dim(), ham.dim());
    for &sample in &pulse.samples {
        let step = StepPropagator::new(ham.generator(&base, sample, rf_scale), pulse.dt)?;
        u = &step.propagator * u;
    }
    if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("propagator became non-finite"));
    }
    Ok(u)
}

/// Largest entry of `|U^dagger U - I|`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    prod.iter()
        .enumerate()
        .map(|(k, z)| {
            let (r, c) = (k % u.nrows(), k / u.nrows());
            let target = if r == c { 1.0 } else { 0.0 };
            (z - Complex64::new(target, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}

/// `|tr(U_goal^dagger U_sim)|^2 / d^2`.
pub fn gate_fidelity(goal: &CMatrix, sim: &CMatrix) -> Result<f64> {
    if goal.shape() != sim.shape() || !goal.is_square() {
        return Err(Error::domain(format!(
            "cannot compare {:?} and {:?} gates",
            goal.shape(),
            sim.shape()
        )));
    }
    for (name, m) in [("goal", goal), ("simulated", sim)] {
        let err = unitarity_error(m);
        if !(err <= UNITARY_TOLERANCE) {
            return Err(Error::domain(format!("{name} gate is not unitary (error {err:e})")));
        }
    }
    Ok(fidelity_unchecked(goal, sim))
}

pub(crate) fn fidelity_unchecked(goal: &CMatrix, sim: &CMatrix) -> f64 {
    let d = goal.nrows() as f64;
    overlap(goal, sim).norm_sqr() / (d * d)
}

/// `tr(A^dagger B)` without forming the product.
pub(crate) fn overlap(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Grid of rf-amplitude scales and static-field offsets with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub rf_scales: Vec<f64>,
    pub offsets_hz: Vec<f64>,
    /// Row-major over `(rf_scale, offset)`, summing to 1.
    pub weights: Vec<f64>,
}

impl Default for EnsembleSpec {
    /// 5 x 5 uniform grid over +-5% rf amplitude and +-150 Hz.
    fn default() -> Self {
        Self::uniform_grid(0.95, 1.05, 5, -150.0, 150.0, 5).expect("valid default grid")
    }
}

impl EnsembleSpec {
    /// Cartesian grid with equal weights.
    pub fn grid(rf_scales: Vec<f64>, offsets_hz: Vec<f64>) -> Result<Self> {
        let n = rf_scales.len() * offsets_hz.len();
        let spec = EnsembleSpec {
            rf_scales,
            offsets_hz,
            weights: vec![1.0 / n.max(1) as f64; n],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform_grid(
        rf_min: f64,
        rf_max: f64,
        rf_points: usize,
        offset_min_hz: f64,
        offset_max_hz: f64,
        offset_points: usize,
    ) -> Result<Self> {
        Self::grid(
            linspace(rf_min, rf_max, rf_points),
            linspace(offset_min_hz, offset_max_hz, offset_points),
        )
    }

    /// The nominal point only.
    pub fn nominal() -> Self {
        EnsembleSpec {
            rf_scales: vec![1.0],
            offsets_hz: vec![0.0],
            weights: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rf_scales.is_empty() || self.offsets_hz.is_empty() {
            return Err(Error::domain("ensemble grids must be non-empty"));
        }
        if self.rf_scales.iter().chain(&self.offsets_hz).any(|v| !v.is_finite()) {
            return Err(Error::domain("ensemble grid values must be finite"));
        }
        if self.weights.len() != self.rf_scales.len() * self.offsets_hz.len() {
            return Err(Error::domain(format!(
                "{} weights for a {}x{} grid",
                self.weights.len(),
                self.rf_scales.len(),
                self.offsets_hz.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("ensemble weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("ensemble weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// `(rf_scale, offset_hz, weight)` in fixed row-major order.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        self.rf_scales
            .iter()
            .flat_map(|&s| self.offsets_hz.iter().map(move |&o| (s, o)))
            .zip(&self.weights)
            .map(|((s, o), &w)| (s, o, w))
            .collect()
    }

    /// Same ranges with `2k - 1` points per axis for `k` points now.
    pub fn refined(&self) -> Result<Self> {
        let refine = |v: &[f64]| -> Vec<f64> {
            if v.len() < 2 {
                return v.to_vec();
            }
            let mut out = Vec::with_capacity(2 * v.len() - 1);
            for w in v.windows(2) {
                out.push(w[0]);
                out.push(0.5 * (w[0] + w[1]));
            }
            out.push(*v.last().unwrap());
            out
        };
        Self::grid(refine(&self.rf_scales), refine(&self.offsets_hz))
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Pointwise fidelities over the ensemble, in [`EnsembleSpec::points`] order.
pub fn ensemble_fidelities(
    sys: &SpinSystem,
    pulse: &ControlPulse,
    goal: &CMatrix,
    ens: &EnsembleSpec,
) -> Result<Vec<f64>> {
    ens.validate()?;
    pulse.validate(None)?;
    let ham = Hamiltonian::new(sys)?;
    if goal.nrows() != ham.dim() || !goal.is_square() {
        return Err(Error::domain(format!(
            "goal of shape {:?} for a {}-dimensional system",
            goal.shape(),
            ham.dim()
        )));
    }
    ens.points()
        .par_iter()
        .map(|&(s, o, _)| {
            let u = propagate_with(&ham, pulse, s, o)?;
            gate_fidelity(goal, &u)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustReport {
    /// Weighted mean over the grid.
    pub mean: f64,
    /// Lowest grid-point fidelity.
    pub worst: f64,
}

pub fn robust_report(
    sys: &SpinSystem,
    pulse: &ControlPulse,
    goal: &CMatrix,
    ens: &EnsembleSpec,
) -> Result<RobustReport> {
    let fids = ensemble_fidelities(sys, pulse, goal, ens)?;
    let mean = fids.iter().zip(&ens.weights).map(|(f, w)| f * w).sum();
    let worst = fids.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RobustReport { mean, worst })
}

/// Weighted mean of [`gate_fidelity`] over the ensemble grid.
pub fn robust_fidelity(
    sys: &SpinSystem,
    pulse: &ControlPulse,
    goal: &CMatrix,
    ens: &EnsembleSpec,
) -> Result<f64> {
    Ok(robust_report(sys, pulse, goal, ens)?.mean)
}

/// Target gates. All are permutations of the computational basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalGate {
    Identity,
    /// Bit flip on one spin.
    X(usize),
    Swap(usize, usize),
    /// `(target, a, b)`, the cooling compression.
    Compress3(usize, usize, usize),
}

impl GoalGate {
    pub fn unitary(&self, n_spins: usize) -> Result<CMatrix> {
        let dim = 1usize << n_spins;
        let perm: Vec<usize> = match *self {
            GoalGate::Identity => (0..dim).collect(),
            GoalGate::X(q) => {
                if q >= n_spins {
                    return Err(Error::domain(format!("X on spin {q} of {n_spins}")));
                }
                let mask = 1 << (n_spins - 1 - q);
                (0..dim).map(|k| k ^ mask).collect()
            }
            GoalGate::Swap(i, j) => swap_permutation(n_spins, i, j)?,
            GoalGate::Compress3(t, a, b) => compress3_permutation(n_spins, t, a, b)?,
        };
        Ok(permutation_matrix(&perm))
    }
}

/// Unitary sending basis state `k` to `perm[k]`.
pub fn permutation_matrix(perm: &[usize]) -> CMatrix {
    let mut m = CMatrix::zeros(perm.len(), perm.len());
    for (k, &image) in perm.iter().enumerate() {
        m[(image, k)] = Complex64::new(1.0, 0.0);
    }
    m
}
