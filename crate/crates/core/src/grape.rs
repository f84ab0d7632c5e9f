//! Robust gradient-ascent pulse engineering.
//!
//! The objective is the ensemble-averaged gate fidelity minus a smoothness
//! penalty `lambda * sum_k |u_{k+1} - u_k|^2`, where the sum runs over the
//! pulse padded with a zero sample at both ends so that switching the field
//! on and off is penalized as well. Smooth fields stay within the bandwidth
//! of the rf chain.
//!
//! Gradients are exact: each step propagator `exp(-i H dt)` is differentiated
//! in the eigenbasis of its generator `H = V diag(l) V^dagger`, where
//!
//! ```text
//! dU = V (G o (V^dagger dH V)) V^dagger,
//! G_ab = -i dt exp(-i (l_a + l_b) dt / 2) sinc((l_a - l_b) dt / 2).
//! ```
//!
//! A central finite-difference mode is kept for cross-checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::pulse::ControlPulse;
use crate::spin::{
    ensemble_fidelities, overlap, CMatrix, EnsembleSpec, GoalGate, Hamiltonian, SpinSystem,
    StepPropagator,
};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    #[default]
    Exact,
    FiniteDifference,
}

/// How each iteration picks its ascent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SearchDirection {
    /// Plain gradient.
    Steepest,
    /// Gradient preconditioned by a limited-memory BFGS estimate of the
    /// inverse Hessian; falls back to the gradient whenever that is not an
    /// ascent direction.
    #[default]
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// Uniform amplitudes within +-10% of the ceiling, per quadrature.
    #[default]
    Random,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrapeConfig {
    /// Gate the drivers build `U_goal` from; [`optimize`] itself takes the
    /// matrix.
    pub goal: GoalGate,
    pub n_samples: usize,
    /// Seconds.
    pub dt: f64,
    pub max_iterations: usize,
    pub target_fidelity: f64,
    /// Largest per-sample amplitude change (kHz) of the first trial step.
    pub initial_step_size: f64,
    /// Step shrink factor on a failed trial.
    pub backtracking: f64,
    /// Smoothness weight `lambda`, per kHz^2.
    pub smoothness_weight: f64,
    pub amplitude_ceiling_khz: f64,
    pub seed: u64,
    pub initial: InitialGuess,
    pub gradient: GradientMode,
    pub direction: SearchDirection,
    /// Central-difference step in kHz.
    pub fd_step_khz: f64,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        GrapeConfig {
            goal: GoalGate::Swap(1, 2),
            n_samples: 80,
            dt: 2e-5,
            max_iterations: 1500,
            target_fidelity: 0.9975,
            initial_step_size: 1.0,
            backtracking: 0.5,
            smoothness_weight: 1e-6,
            amplitude_ceiling_khz: 25.0,
            seed: 2007,
            initial: InitialGuess::Random,
            gradient: GradientMode::Exact,
            direction: SearchDirection::Lbfgs,
            fd_step_khz: 1e-6,
        }
    }
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("grape {name} = {v} must be positive")))
            }
        };
        positive("dt", self.dt)?;
        positive("initial_step_size", self.initial_step_size)?;
        positive("amplitude_ceiling_khz", self.amplitude_ceiling_khz)?;
        positive("fd_step_khz", self.fd_step_khz)?;
        if !(self.target_fidelity > 0.0 && self.target_fidelity <= 1.0) {
            return Err(Error::domain(format!(
                "target fidelity {} outside (0, 1]",
                self.target_fidelity
            )));
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return Err(Error::domain(format!(
                "backtracking factor {} outside (0, 1)",
                self.backtracking
            )));
        }
        if !(self.smoothness_weight.is_finite() && self.smoothness_weight >= 0.0) {
            return Err(Error::domain("smoothness weight must be >= 0"));
        }
        Ok(())
    }

    pub fn initial_pulse(&self) -> Result<ControlPulse> {
        match self.initial {
            InitialGuess::Zeros => ControlPulse::zeros(self.dt, self.n_samples),
            InitialGuess::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let span = 0.1 * self.amplitude_ceiling_khz;
                let samples = (0..self.n_samples)
                    .map(|_| [rng.random_range(-span..=span), rng.random_range(-span..=span)])
                    .collect();
                ControlPulse::new(self.dt, samples)
            }
        }
    }
}

/// Smoothness penalty `sum_k |u_{k+1} - u_k|^2` over the zero-padded pulse.
pub fn roughness(pulse: &ControlPulse) -> f64 {
    let zero = [0.0, 0.0];
    std::iter::once(&zero)
        .chain(&pulse.samples)
        .zip(pulse.samples.iter().chain(std::iter::once(&zero)))
        .map(|(a, b)| (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2))
        .sum()
}

fn roughness_gradient(pulse: &ControlPulse) -> Vec<[f64; 2]> {
    let s = &pulse.samples;
    let n = s.len();
    (0..n)
        .map(|k| {
            let prev = if k > 0 { s[k - 1] } else { [0.0; 2] };
            let next = if k + 1 < n { s[k + 1] } else { [0.0; 2] };
            [0, 1].map(|c| 2.0 * (2.0 * s[k][c] - prev[c] - next[c]))
        })
        .collect()
}

/// Robust fidelity minus the weighted smoothness penalty.
pub fn objective(
    sys: &SpinSystem,
    pulse: &ControlPulse,
    goal: &CMatrix,
    ens: &EnsembleSpec,
    smoothness_weight: f64,
) -> Result<f64> {
    Ok(evaluate(sys, pulse, goal, ens, smoothness_weight)?.objective)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub robust_fidelity: f64,
    pub worst_fidelity: f64,
}

pub fn evaluate(
    sys: &SpinSystem,
    pulse: &ControlPulse,
    goal: &CMatrix,
    ens: &EnsembleSpec,
    smoothness_weight: f64,
) -> Result<Evaluation> {
    let fids = ensemble_fidelities(sys, pulse, goal, ens)?;
    let robust: f64 = fids.iter().zip(&ens.weights).map(|(f, w)| f * w).sum();
    let worst = fids.iter().copied().fold(f64::INFINITY, f64::min);
    let objective = robust - smoothness_weight * roughness(pulse);
    if !objective.is_finite() {
        return Err(Error::numerical("objective is not finite"));
    }
    Ok(Evaluation {
        objective,
        robust_fidelity: robust,
        worst_fidelity: worst,
    })
}

/// Exact gradient of [`objective`] with respect to every `(u_x, u_y)`.
pub fn gradient(
    sys: &SpinSystem,
    pulse: &ControlPulse,
    goal: &CMatrix,
    ens: &EnsembleSpec,
    smoothness_weight: f64,
) -> Result<Vec<[f64; 2]>> {
    ens.validate()?;
    pulse.validate(None)?;
    let ham = Hamiltonian::new(sys)?;
    if goal.shape() != (ham.dim(), ham.dim()) {
        return Err(Error::domain("goal dimension does not match the spin system"));
    }
    let per_point: Vec<Vec<[f64; 2]>> = ens
        .points()
        .par_iter()
        .map(|&(s, o, _)| point_gradient(&ham, pulse, goal, s, o))
        .collect::<Result<_>>()?;
    let mut grad = vec![[0.0; 2]; pulse.len()];
    for (g, (_, _, w)) in per_point.iter().zip(ens.points()) {
        for (acc, gk) in grad.iter_mut().zip(g) {
            acc[0] += w * gk[0];
            acc[1] += w * gk[1];
        }
    }
    if smoothness_weight != 0.0 {
        for (acc, r) in grad.iter_mut().zip(roughness_gradient(pulse)) {
            acc[0] -= smoothness_weight * r[0];
            acc[1] -= smoothness_weight * r[1];
        }
    }
    if grad.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numerical("gradient is not finite"));
    }
    Ok(grad)
}

/// Fidelity gradient at one ensemble point.
fn point_gradient(
    ham: &Hamiltonian,
    pulse: &ControlPulse,
    goal: &CMatrix,
    rf_scale: f64,
    offset_hz: f64,
) -> Result<Vec<[f64; 2]>> {
    let d = ham.dim();
    let dt = pulse.dt;
    let base = ham.offset_drift(offset_hz);
    let steps: Vec<StepPropagator> = pulse
        .samples
        .iter()
        .map(|&u| StepPropagator::new(ham.generator(&base, u, rf_scale), dt))
        .collect::<Result<_>>()?;

    // forward[k] = U_{k-1} ... U_0
    let mut forward = Vec::with_capacity(steps.len() + 1);
    forward.push(CMatrix::identity(d, d));
    for step in &steps {
        let next = &step.propagator * forward.last().unwrap();
        forward.push(next);
    }
    let trace = overlap(goal, forward.last().unwrap());
    let directions = [ham.control_direction(0, rf_scale), ham.control_direction(1, rf_scale)];
    let norm = 2.0 / (d * d) as f64;

    let mut grad = vec![[0.0; 2]; steps.len()];
    // backward = G^dagger U_{N-1} ... U_{k+1}
    let mut backward = goal.adjoint();
    for k in (0..steps.len()).rev() {
        let step = &steps[k];
        let v = &step.eigenvectors;
        // d tr(G^dagger U) = tr(forward_k backward dU_k)
        let m = v.adjoint() * (&forward[k] * &backward) * v;
        let lambda = &step.eigenvalues;
        for (c, dir) in directions.iter().enumerate() {
            let e = v.adjoint() * dir * v;
            let mut dtrace = Complex64::new(0.0, 0.0);
            for a in 0..d {
                for b in 0..d {
                    let gamma = divided_difference(lambda[a], lambda[b], dt);
                    dtrace += m[(b, a)] * gamma * e[(a, b)];
                }
            }
            grad[k][c] = norm * (trace.conj() * dtrace).re;
        }
        backward = &backward * &step.propagator;
    }
    Ok(grad)
}

/// `(f(a) - f(b)) / (a - b)` for `f(l) = exp(-i l dt)`, stable at `a = b`.
fn divided_difference(a: f64, b: f64, dt: f64) -> Complex64 {
    let half = 0.5 * (a - b) * dt;
    let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    Complex64::new(0.0, -dt) * Complex64::from_polar(1.0, -0.5 * (a + b) * dt) * sinc
}

/// Central differences of [`objective`] with step `h` kHz.
pub fn finite_difference_gradient(
    sys: &SpinSystem,
    pulse: &ControlPulse,
    goal: &CMatrix,
    ens: &EnsembleSpec,
    smoothness_weight: f64,
    h: f64,
) -> Result<Vec<[f64; 2]>> {
    let mut probe = pulse.clone();
    let mut grad = vec![[0.0; 2]; pulse.len()];
    for k in 0..pulse.len() {
        for c in 0..2 {
            let orig = probe.samples[k][c];
            probe.samples[k][c] = orig + h;
            let plus = objective(sys, &probe, goal, ens, smoothness_weight)?;
            probe.samples[k][c] = orig - h;
            let minus = objective(sys, &probe, goal, ens, smoothness_weight)?;
            probe.samples[k][c] = orig;
            grad[k][c] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    TargetReached,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub objective: f64,
    pub robust_fidelity: f64,
    /// Largest per-sample change of the accepted step, kHz.
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrapeResult {
    pub pulse: ControlPulse,
    pub robust_fidelity: f64,
    pub worst_fidelity: f64,
    pub objective: f64,
    pub iterations: usize,
    /// One entry per accepted iterate, starting with the initial pulse.
    pub history: Vec<HistoryEntry>,
    pub termination: Termination,
}

impl GrapeResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,objective,robust_fidelity,step_size\n");
        for h in &self.history {
            out.push_str(&format!(
                "{},{},{},{}\n",
                h.iteration,
                sig12(h.objective),
                sig12(h.robust_fidelity),
                sig12(h.step_size)
            ));
        }
        out
    }
}

const STALL_GAIN: f64 = 1e-12;
const STALL_PATIENCE: usize = 20;
const MIN_RELATIVE_STEP: f64 = 1e-12;
const LBFGS_MEMORY: usize = 10;

/// Gradient ascent from the configured initial guess.
pub fn optimize(
    sys: &SpinSystem,
    goal: &CMatrix,
    ens: &EnsembleSpec,
    config: &GrapeConfig,
) -> Result<GrapeResult> {
    config.validate()?;
    optimize_from(sys, goal, ens, config, project(config.initial_pulse()?, config.amplitude_ceiling_khz))
}

/// Gradient ascent from an explicit initial pulse.
pub fn optimize_from(
    sys: &SpinSystem,
    goal: &CMatrix,
    ens: &EnsembleSpec,
    config: &GrapeConfig,
    initial: ControlPulse,
) -> Result<GrapeResult> {
    config.validate()?;
    let lambda = config.smoothness_weight;
    let grad_of = |p: &ControlPulse| -> Result<Vec<f64>> {
        let g = match config.gradient {
            GradientMode::Exact => gradient(sys, p, goal, ens, lambda)?,
            GradientMode::FiniteDifference => {
                finite_difference_gradient(sys, p, goal, ens, lambda, config.fd_step_khz)?
            }
        };
        Ok(g.into_iter().flatten().collect())
    };

    let mut pulse = initial;
    let mut current = evaluate(sys, &pulse, goal, ens, lambda)?;
    let mut history = vec![HistoryEntry {
        iteration: 0,
        objective: current.objective,
        robust_fidelity: current.robust_fidelity,
        step_size: 0.0,
    }];
    let finish = |pulse, current: Evaluation, history: Vec<HistoryEntry>, termination| {
        Ok(GrapeResult {
            pulse,
            robust_fidelity: current.robust_fidelity,
            worst_fidelity: current.worst_fidelity,
            objective: current.objective,
            iterations: history.len() - 1,
            history,
            termination,
        })
    };
    if current.robust_fidelity >= config.target_fidelity {
        return finish(pulse, current, history, Termination::TargetReached);
    }
    if pulse.is_empty() {
        return finish(pulse, current, history, Termination::Stalled);
    }

    let mut grad = grad_of(&pulse)?;
    let mut memory: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut step_scale = config.initial_step_size;
    let mut flat_streak = 0;

    for iteration in 1..=config.max_iterations {
        let direction = match config.direction {
            SearchDirection::Steepest => grad.clone(),
            SearchDirection::Lbfgs => lbfgs_direction(&grad, &memory),
        };
        let peak = direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return finish(pulse, current, history, Termination::Stalled);
        }

        // Trial steps measured as the largest per-sample change in kHz.
        let mut alpha = step_scale;
        let accepted = loop {
            let trial = step(&pulse, &direction, alpha / peak, config.amplitude_ceiling_khz);
            let eval = evaluate(sys, &trial, goal, ens, lambda)?;
            if eval.objective > current.objective {
                break Some((trial, eval));
            }
            alpha *= config.backtracking;
            if alpha < MIN_RELATIVE_STEP * config.initial_step_size {
                break None;
            }
        };
        let Some((trial, eval)) = accepted else {
            return finish(pulse, current, history, Termination::Stalled);
        };

        let new_grad = grad_of(&trial)?;
        let s: Vec<f64> = flat(&trial).iter().zip(flat(&pulse)).map(|(a, b)| a - b).collect();
        // Memory pairs are for minimizing the negated objective.
        let y: Vec<f64> = grad.iter().zip(&new_grad).map(|(g0, g1)| g0 - g1).collect();
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            memory.push((s, y));
            if memory.len() > LBFGS_MEMORY {
                memory.remove(0);
            }
        }
        let gain = eval.objective - current.objective;
        flat_streak = if gain < STALL_GAIN { flat_streak + 1 } else { 0 };

        let moved = flat(&trial)
            .iter()
            .zip(flat(&pulse))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        pulse = trial;
        current = eval;
        grad = new_grad;
        history.push(HistoryEntry {
            iteration,
            objective: current.objective,
            robust_fidelity: current.robust_fidelity,
            step_size: moved,
        });
        // Let the next trial start a little longer than the last success.
        step_scale = (2.0 * alpha).min(config.amplitude_ceiling_khz);

        if current.robust_fidelity >= config.target_fidelity {
            return finish(pulse, current, history, Termination::TargetReached);
        }
        if flat_streak >= STALL_PATIENCE {
            return finish(pulse, current, history, Termination::Stalled);
        }
    }
    finish(pulse, current, history, Termination::MaxIterations)
}

fn flat(p: &ControlPulse) -> Vec<f64> {
    p.samples.iter().flatten().copied().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn step(pulse: &ControlPulse, direction: &[f64], scale: f64, ceiling: f64) -> ControlPulse {
    let samples = pulse
        .samples
        .iter()
        .zip(direction.chunks_exact(2))
        .map(|(u, d)| [u[0] + scale * d[0], u[1] + scale * d[1]])
        .collect();
    project(ControlPulse { dt: pulse.dt, samples }, ceiling)
}

/// Scales every sample back onto the amplitude disk of radius `ceiling`.
fn project(mut pulse: ControlPulse, ceiling: f64) -> ControlPulse {
    for u in &mut pulse.samples {
        let r = u[0].hypot(u[1]);
        if r > ceiling {
            u[0] *= ceiling / r;
            u[1] *= ceiling / r;
        }
    }
    pulse
}

/// Two-loop recursion; returns an ascent direction for the objective.
fn lbfgs_direction(grad: &[f64], memory: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    if memory.is_empty() {
        return grad.to_vec();
    }
    // Work with q = gradient of the negated objective.
    let mut q: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push((a, rho));
    }
    let (s, y) = memory.last().unwrap();
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|qi| *qi *= gamma);
    for ((s, y), (a, rho)) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    let direction: Vec<f64> = q.iter().map(|v| -v).collect();
    if dot(&direction, grad) > 0.0 {
        direction
    } else {
        grad.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{gate_fidelity, propagate};
    use approx::assert_abs_diff_eq;

    fn random_pulse(seed: u64, n: usize, dt: f64, amp: f64) -> ControlPulse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ControlPulse::new(
            dt,
            (0..n)
                .map(|_| [rng.random_range(-amp..amp), rng.random_range(-amp..amp)])
                .collect(),
        )
        .unwrap()
    }

    fn max_relative_deviation(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn penalty_examples() {
        let sys = SpinSystem::free(1).unwrap();
        let goal = GoalGate::X(0).unitary(1).unwrap();
        let ens = EnsembleSpec::nominal();
        let pulse = ControlPulse::constant(1e-5, 10, [3.0, 4.0]).unwrap();
        assert_eq!(roughness(&pulse), 50.0);
        let f = crate::spin::robust_fidelity(&sys, &pulse, &goal, &ens).unwrap();
        assert_eq!(objective(&sys, &pulse, &goal, &ens, 0.0).unwrap(), f);
        let o1 = objective(&sys, &pulse, &goal, &ens, 1e-3).unwrap();
        let o2 = objective(&sys, &pulse, &goal, &ens, 2e-3).unwrap();
        assert_abs_diff_eq!(o2 - f, 2.0 * (o1 - f), epsilon = 1e-15);
        assert_abs_diff_eq!(o1 - f, -0.05, epsilon = 1e-15);
    }

    #[test]
    fn empty_pulse_has_empty_gradient() {
        let sys = SpinSystem::free(1).unwrap();
        let goal = GoalGate::Identity.unitary(1).unwrap();
        let g = gradient(&sys, &ControlPulse::zeros(1e-5, 0).unwrap(), &goal, &EnsembleSpec::nominal(), 0.0)
            .unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn gradient_matches_central_differences_one_spin() {
        let sys = SpinSystem::new(vec![0.3], vec![]).unwrap();
        let goal = GoalGate::X(0).unitary(1).unwrap();
        let ens = EnsembleSpec::default();
        let pulse = random_pulse(11, 16, 2e-5, 10.0);
        let exact = gradient(&sys, &pulse, &goal, &ens, 1e-4).unwrap();
        let fd = finite_difference_gradient(&sys, &pulse, &goal, &ens, 1e-4, 1e-6).unwrap();
        let dev = max_relative_deviation(&exact, &fd);
        assert!(dev <= 1e-4, "{dev}");
    }

    #[test]
    fn divided_difference_limits() {
        let dt = 1e-4;
        let a = 1234.5;
        let exact = Complex64::new(0.0, -dt) * Complex64::from_polar(1.0, -a * dt);
        let close = divided_difference(a, a, dt);
        assert_abs_diff_eq!((close - exact).norm(), 0.0, epsilon = 1e-18);
        let b = -800.0;
        let direct = (Complex64::from_polar(1.0, -a * dt) - Complex64::from_polar(1.0, -b * dt)) / (a - b);
        assert_abs_diff_eq!((divided_difference(a, b, dt) - direct).norm(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn gradient_vanishes_at_perfect_pulse() {
        let n = 20;
        let dt = 1e-5;
        let u = 0.5 / (n as f64 * dt) / 1e3;
        let sys = SpinSystem::free(1).unwrap();
        let pulse = ControlPulse::constant(dt, n, [u, 0.0]).unwrap();
        let goal = GoalGate::X(0).unitary(1).unwrap();
        let g = gradient(&sys, &pulse, &goal, &EnsembleSpec::nominal(), 0.0).unwrap();
        let norm = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "{norm}");
    }

    #[test]
    fn identity_from_zeros_stops_immediately() {
        let sys = SpinSystem::free(2).unwrap();
        let goal = GoalGate::Identity.unitary(2).unwrap();
        let config = GrapeConfig {
            initial: InitialGuess::Zeros,
            n_samples: 10,
            ..GrapeConfig::default()
        };
        let r = optimize(&sys, &goal, &EnsembleSpec::nominal(), &config).unwrap();
        assert_eq!(r.termination, Termination::TargetReached);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.robust_fidelity, 1.0);
    }

    #[test]
    fn single_spin_x_gate() {
        let sys = SpinSystem::free(1).unwrap();
        let goal = GoalGate::X(0).unitary(1).unwrap();
        let config = GrapeConfig {
            n_samples: 64,
            dt: 1e-5,
            target_fidelity: 0.999,
            amplitude_ceiling_khz: 10.0,
            ..GrapeConfig::default()
        };
        for direction in [SearchDirection::Steepest, SearchDirection::Lbfgs] {
            let config = GrapeConfig { direction, ..config.clone() };
            let r = optimize(&sys, &goal, &EnsembleSpec::nominal(), &config).unwrap();
            assert_eq!(r.termination, Termination::TargetReached, "{direction:?}");
            let u = propagate(&sys, &r.pulse, 1.0, 0.0).unwrap();
            assert!(gate_fidelity(&goal, &u).unwrap() >= 0.999);
            assert!(r.pulse.peak_amplitude() <= 10.0 * (1.0 + 1e-12));
            for w in r.history.windows(2) {
                assert!(w[1].objective >= w[0].objective);
            }
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let sys = SpinSystem::from_table(&[vec![1.0, 0.0], vec![1.2, -1.5]]).unwrap();
        let goal = GoalGate::Swap(0, 1).unitary(2).unwrap();
        let config = GrapeConfig {
            max_iterations: 15,
            n_samples: 20,
            ..GrapeConfig::default()
        };
        let ens = EnsembleSpec::default();
        let a = optimize(&sys, &goal, &ens, &config).unwrap();
        let b = optimize(&sys, &goal, &ens, &config).unwrap();
        assert_eq!(a, b);
        let other = optimize(&sys, &goal, &ens, &GrapeConfig { seed: 9, ..config }).unwrap();
        assert_ne!(a.pulse, other.pulse);
    }

    #[test]
    fn config_validation() {
        let bad = [
            GrapeConfig { target_fidelity: 0.0, ..GrapeConfig::default() },
            GrapeConfig { amplitude_ceiling_khz: -1.0, ..GrapeConfig::default() },
            GrapeConfig { backtracking: 1.0, ..GrapeConfig::default() },
            GrapeConfig { smoothness_weight: -1.0, ..GrapeConfig::default() },
            GrapeConfig { dt: 0.0, ..GrapeConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        let p = GrapeConfig::default().initial_pulse().unwrap();
        assert!(p.peak_amplitude() <= 2.5 * 2f64.sqrt());
    }
}
