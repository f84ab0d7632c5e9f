//! Machine-readable outputs of the command-line drivers. Every float is
//! written with 12 significant digits.

use serde::Serialize;

use crate::config::{RunConfig, ScheduleKind};
use crate::engine::{ppa_asymptotic_bias, SteadyState, Trajectory, C2};
use crate::format::{round12, sig12};
use crate::grape::{GrapeResult, Termination};
use crate::noise::BathModel;
use crate::spin::{GoalGate, RobustReport};

/// Closed-system limit for three equal-bias qubits, in bath units.
pub const SHANNON_BOUND: f64 = 1.5;

pub const TRAJECTORY_HEADER: &str =
    "round,step_label,qubit,bias_over_bath,bias_absolute,entropy_bits,bath_bias";

pub const SWEEP_HEADER: &str =
    "n_qubits,epsilon,depolarizing,steady_bias,steady_over_bath,asymptotic_limit,rounds_used";

/// One row per qubit and record, starting with the initial state. Labels
/// are quoted because they contain commas.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for rec in traj.records() {
        for (q, &b) in rec.biases.as_slice().iter().enumerate() {
            let over = traj.over_bath(b).map(sig12).unwrap_or_default();
            out.push_str(&format!(
                "{},\"{}\",{},{},{},{},{}\n",
                rec.round,
                rec.label(),
                q,
                over,
                sig12(b),
                sig12(rec.entropy_bits),
                sig12(rec.bath_bias)
            ));
        }
    }
    out
}

/// Ideal small-bias trajectory of the target after each compression of the
/// three-spin circuit: `b_1 = 3/2`, `b_{k+1} = b_k / 2 + 1`.
pub fn ideal_circuit_values(rounds: usize) -> Vec<f64> {
    (1..=rounds as i32).map(|k| 2.0 - 2f64.powi(-k)).collect()
}

/// Two decimals, ties rounded up.
pub fn two_decimals(x: f64) -> String {
    format!("{:.2}", (x * 100.0).round() / 100.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub n_qubits: usize,
    pub schedule: ScheduleKind,
    pub rounds: usize,
    pub bath_unit: f64,
    pub noise_convention: String,
    pub noisy_gate_count: usize,
    pub final_biases: Vec<f64>,
    pub final_biases_over_bath: Option<Vec<f64>>,
    pub final_entropy_bits: f64,
    pub target_qubit: usize,
    pub target_after_compressions_over_bath: Option<Vec<f64>>,
    /// Present for the three-spin circuit only.
    pub ideal_after_compressions: Option<Vec<f64>>,
    pub ideal_after_compressions_2dp: Option<Vec<String>>,
    pub shannon_bound_over_bath: f64,
    pub exceeds_shannon_bound: bool,
}

impl RunSummary {
    pub fn new(cfg: &RunConfig, traj: &Trajectory) -> Self {
        let target = cfg.system.naming.get("C2").copied().unwrap_or(C2);
        let finals = traj.final_biases().into_inner();
        let over = |v: &[f64]| -> Option<Vec<f64>> {
            v.iter().map(|&b| traj.over_bath(b).map(round12)).collect()
        };
        let target_over = over(&traj.after_compressions(target));
        let ideal = (cfg.schedule.kind == ScheduleKind::PaperCircuit)
            .then(|| ideal_circuit_values(cfg.schedule.rounds));
        let exceeds = traj
            .over_bath(finals[target])
            .is_some_and(|b| b > SHANNON_BOUND);
        RunSummary {
            n_qubits: cfg.system.n_qubits,
            schedule: cfg.schedule.kind,
            rounds: cfg.schedule.rounds,
            bath_unit: round12(traj.bath_unit),
            noise_convention: cfg.noise.describe(),
            noisy_gate_count: traj.noisy_gates,
            final_biases_over_bath: over(&finals),
            final_biases: finals.iter().copied().map(round12).collect(),
            final_entropy_bits: round12(traj.final_state.shannon_entropy()),
            target_qubit: target,
            target_after_compressions_over_bath: target_over,
            ideal_after_compressions_2dp: ideal
                .as_ref()
                .map(|v| v.iter().copied().map(two_decimals).collect()),
            ideal_after_compressions: ideal,
            shannon_bound_over_bath: SHANNON_BOUND,
            exceeds_shannon_bound: exceeds,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyReport {
    pub n_qubits: usize,
    pub bath_unit: f64,
    pub noise_convention: String,
    pub steady_bias: f64,
    pub steady_over_bath: Option<f64>,
    /// Noiseless limit `tanh(2^(n-2) artanh eps)` at the bath unit.
    pub asymptotic_limit: f64,
    pub rounds_used: usize,
    pub tol: f64,
}

impl SteadyReport {
    pub fn new(cfg: &RunConfig, steady: &SteadyState) -> Self {
        let unit = cfg.bath.reference_bias();
        SteadyReport {
            n_qubits: cfg.system.n_qubits,
            bath_unit: round12(unit),
            noise_convention: cfg.noise.describe(),
            steady_bias: round12(steady.bias),
            steady_over_bath: (unit != 0.0).then(|| round12(steady.bias / unit)),
            asymptotic_limit: round12(ppa_asymptotic_bias(cfg.system.n_qubits, unit)),
            rounds_used: steady.rounds_used,
            tol: cfg.steady.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_qubits: usize,
    pub epsilon: f64,
    pub depolarizing: f64,
    pub steady: SteadyState,
    pub bath: BathModel,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let unit = self.bath.reference_bias();
        let over = if unit != 0.0 { sig12(self.steady.bias / unit) } else { String::new() };
        format!(
            "{},{},{},{},{},{},{}",
            self.n_qubits,
            sig12(self.epsilon),
            sig12(self.depolarizing),
            sig12(self.steady.bias),
            over,
            sig12(ppa_asymptotic_bias(self.n_qubits, unit)),
            self.steady.rounds_used
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct GrapeSummary {
    pub goal: GoalGate,
    pub n_spins: usize,
    pub n_samples: usize,
    pub duration_s: f64,
    pub robust_fidelity: f64,
    pub worst_grid_fidelity: f64,
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub target_fidelity: f64,
    pub target_reached: bool,
}

impl GrapeSummary {
    pub fn new(cfg: &RunConfig, n_spins: usize, result: &GrapeResult) -> Self {
        GrapeSummary {
            goal: cfg.grape.goal,
            n_spins,
            n_samples: result.pulse.len(),
            duration_s: round12(result.pulse.duration()),
            robust_fidelity: round12(result.robust_fidelity),
            worst_grid_fidelity: round12(result.worst_fidelity),
            objective: round12(result.objective),
            iterations: result.iterations,
            termination: result.termination,
            target_fidelity: cfg.grape.target_fidelity,
            target_reached: result.robust_fidelity >= cfg.grape.target_fidelity,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub goal: GoalGate,
    pub n_samples: usize,
    /// Fidelity at nominal rf amplitude and zero offset.
    pub pointwise_fidelity: f64,
    pub robust_fidelity: f64,
    pub worst_grid_fidelity: f64,
}

impl VerifyReport {
    pub fn new(goal: GoalGate, n_samples: usize, pointwise: f64, grid: RobustReport) -> Self {
        VerifyReport {
            goal,
            n_samples,
            pointwise_fidelity: round12(pointwise),
            robust_fidelity: round12(grid.mean),
            worst_grid_fidelity: round12(grid.worst),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes to JSON");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_schedule;
    use crate::state::PopulationState;

    #[test]
    fn ideal_values_and_rounding() {
        let v = ideal_circuit_values(4);
        assert_eq!(v, vec![1.5, 1.75, 1.875, 1.9375]);
        let shown: Vec<String> = v.into_iter().map(two_decimals).collect();
        assert_eq!(shown, ["1.50", "1.75", "1.88", "1.94"]);
        assert_eq!(two_decimals(1.125), "1.13");
    }

    #[test]
    fn zero_rounds_give_initial_rows_only() {
        let mut cfg = RunConfig::default();
        cfg.schedule.rounds = 0;
        let traj = run_schedule(
            &PopulationState::uniform(3).unwrap(),
            &cfg.schedule().unwrap(),
            &cfg.bath,
            &cfg.noise,
        )
        .unwrap();
        let csv = trajectory_csv(&traj);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 4);
        for (q, line) in lines[1..].iter().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[..3], ["0", "\"initial\"", &q.to_string()]);
            assert_eq!(fields[3].parse::<f64>().unwrap(), 0.0);
            assert_eq!(fields[4].parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn quoted_labels_keep_column_count() {
        let cfg = RunConfig::default();
        let traj = run_schedule(
            &PopulationState::uniform(3).unwrap(),
            &cfg.schedule().unwrap(),
            &cfg.bath,
            &cfg.noise,
        )
        .unwrap();
        let csv = trajectory_csv(&traj);
        assert!(csv.contains("\"compress3(0,1,2)\""));
        assert_eq!(csv.lines().count(), 1 + 3 * (1 + 6 + 4 * 3));
    }
}
