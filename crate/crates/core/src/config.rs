//! Run configuration: one TOML document covering the cooling simulations
//! and the pulse optimizer. Unknown keys are rejected; every field has a
//! default, printed by `hbac --print-default-config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{Schedule, Step, C1, C2, CM, DEFAULT_MAX_ROUNDS, DEFAULT_STEADY_TOL};
use crate::error::{Error, Result};
use crate::grape::GrapeConfig;
use crate::noise::{BathModel, NoiseModel};
use crate::spin::{EnsembleSpec, SpinSystem};
use crate::state::{DEFAULT_MAX_QUBITS, HARD_QUBIT_LIMIT};

/// Sweeps are limited to registers this large.
pub const MAX_SWEEP_QUBITS: usize = 10;

/// Transfer efficiency of the cross-polarization refresh: the observed 3.3x
/// enhancement out of a possible 3.98x.
pub const CP_EFFICIENCY: f64 = 3.3 / 3.98;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSection,
    pub bath: BathModel,
    pub noise: NoiseModel,
    pub schedule: ScheduleSection,
    pub steady: SteadySection,
    pub sweep: SweepSection,
    pub hamiltonian: HamiltonianSection,
    pub ensemble: EnsembleSection,
    pub grape: GrapeConfig,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub n_qubits: usize,
    /// Qubit refreshed from the bath.
    pub reset_index: usize,
    pub max_qubits: usize,
    /// Spin label to qubit index. The three-spin circuit reads `C2` (target),
    /// `C1` and `Cm` (reset) from here.
    pub naming: BTreeMap<String, usize>,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            n_qubits: 3,
            reset_index: CM,
            max_qubits: DEFAULT_MAX_QUBITS,
            naming: [("C2", C2), ("C1", C1), ("Cm", CM)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    PaperCircuit,
    Ppa,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub rounds: usize,
    /// Explicit schedules: steps of round 1 (defaults to `steps`).
    pub first_steps: Vec<Step>,
    /// Explicit schedules: steps of every later round.
    pub steps: Vec<Step>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            kind: ScheduleKind::PaperCircuit,
            rounds: 4,
            first_steps: Vec::new(),
            steps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadySection {
    pub tol: f64,
    pub max_rounds: usize,
}

impl Default for SteadySection {
    fn default() -> Self {
        SteadySection {
            tol: DEFAULT_STEADY_TOL,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

/// Grid for `cool sweep`; every combination becomes one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_qubits: Vec<usize>,
    /// Bath polarizations (`bath.epsilon0` per row).
    pub epsilon: Vec<f64>,
    /// Depolarizing probabilities per gate.
    pub depolarizing: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            n_qubits: vec![3, 5],
            epsilon: vec![0.81, 0.87],
            depolarizing: vec![0.0, 0.01],
        }
    }
}

/// Parameter table in kHz: chemical shifts on the diagonal, dipolar
/// couplings below it, J couplings above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonianSection {
    pub table_khz: Vec<Vec<f64>>,
}

impl Default for HamiltonianSection {
    /// Stand-in three-spin values of a plausible magnitude; not a fitted
    /// molecule.
    fn default() -> Self {
        HamiltonianSection {
            table_khz: vec![
                vec![3.2, 0.05, 0.02],
                vec![1.8, -1.1, 0.06],
                vec![0.6, 2.4, 0.4],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub rf_scales: Vec<f64>,
    pub offsets_hz: Vec<f64>,
    /// Row-major over `(rf_scale, offset)`; equal weights when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let spec = EnsembleSpec::default();
        EnsembleSection {
            rf_scales: spec.rf_scales,
            offsets_hz: spec.offsets_hz,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub trajectory_csv: String,
    pub summary_json: String,
    pub steady_json: String,
    pub sweep_csv: String,
    pub pulse_file: String,
    pub history_csv: String,
    pub grape_json: String,
    pub verify_json: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            trajectory_csv: "trajectory.csv".into(),
            summary_json: "summary.json".into(),
            steady_json: "steady.json".into(),
            sweep_csv: "sweep.csv".into(),
            pulse_file: "pulse.txt".into(),
            history_csv: "history.csv".into(),
            grape_json: "grape.json".into(),
            verify_json: "verify.json".into(),
        }
    }
}

impl OutputSection {
    pub fn path(&self, file: &str) -> PathBuf {
        self.directory.join(file)
    }
}

/// Named starting points for `--preset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Noiseless three-spin circuit with an ideal bath.
    Ideal,
    /// Finite bath (0.5% heating per refresh), 1% depolarizing per gate and
    /// cross-polarization refresh efficiency.
    Calibrated,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" | "default" => Ok(Preset::Ideal),
            "calibrated" => Ok(Preset::Calibrated),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected `ideal` or `calibrated`)"
            ))),
        }
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = RunConfig::default();
        if preset == Preset::Calibrated {
            cfg.bath.heating_per_refresh = 0.005;
            cfg.bath.efficiency = CP_EFFICIENCY;
            cfg.noise.depolarizing_per_gate = 0.01;
        }
        cfg
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Checks every section; all failures are reported as configuration
    /// errors.
    pub fn validate(&self) -> Result<()> {
        self.validate_inner().map_err(|e| match e {
            Error::Domain(msg) => Error::Config(msg),
            other => other,
        })
    }

    fn validate_inner(&self) -> Result<()> {
        let sys = &self.system;
        if sys.max_qubits == 0 || sys.max_qubits > HARD_QUBIT_LIMIT {
            return Err(Error::Config(format!(
                "system.max_qubits must be in 1..={HARD_QUBIT_LIMIT}"
            )));
        }
        if sys.n_qubits < 2 || sys.n_qubits > sys.max_qubits {
            return Err(Error::Config(format!(
                "system.n_qubits = {} outside 2..={}",
                sys.n_qubits, sys.max_qubits
            )));
        }
        if sys.reset_index >= sys.n_qubits {
            return Err(Error::Config(format!(
                "system.reset_index = {} out of range",
                sys.reset_index
            )));
        }
        if let Some((name, q)) = sys.naming.iter().find(|(_, &q)| q >= sys.n_qubits) {
            return Err(Error::Config(format!("system.naming: {name} -> {q} out of range")));
        }
        self.bath.validate()?;
        self.noise.validate()?;
        self.schedule()?.validate(sys.n_qubits)?;
        if !(self.steady.tol > 0.0) || self.steady.max_rounds == 0 {
            return Err(Error::Config("steady.tol and steady.max_rounds must be positive".into()));
        }
        if let Some(&n) = self.sweep.n_qubits.iter().find(|&&n| !(2..=MAX_SWEEP_QUBITS).contains(&n)) {
            return Err(Error::Config(format!(
                "sweep.n_qubits entry {n} outside 2..={MAX_SWEEP_QUBITS}"
            )));
        }
        for &e in &self.sweep.epsilon {
            BathModel { epsilon0: e, ..self.bath.clone() }.validate()?;
        }
        for &p in &self.sweep.depolarizing {
            NoiseModel { depolarizing_per_gate: p, ..self.noise.clone() }.validate()?;
        }
        let spins = self.spin_system()?;
        self.ensemble_spec()?;
        self.grape.validate()?;
        self.grape.goal.unitary(spins.n_spins())?;
        Ok(())
    }

    fn named(&self, name: &str, default: usize) -> usize {
        self.system.naming.get(name).copied().unwrap_or(default)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let s = &self.schedule;
        let n = self.system.n_qubits;
        let reset = self.system.reset_index;
        match s.kind {
            ScheduleKind::PaperCircuit => {
                let (c2, c1, cm) = (self.named("C2", C2), self.named("C1", C1), self.named("Cm", CM));
                if cm != reset {
                    return Err(Error::Config(format!(
                        "the three-spin circuit refreshes Cm = {cm} but system.reset_index = {reset}"
                    )));
                }
                Ok(paper_circuit_on(c2, c1, cm, s.rounds))
            }
            ScheduleKind::Ppa => {
                if reset != n - 1 {
                    return Err(Error::Config(format!(
                        "the PPA sort needs the reset qubit last (index {}), got {reset}",
                        n - 1
                    )));
                }
                Ok(Schedule::ppa(n, s.rounds))
            }
            ScheduleKind::Explicit => {
                if s.steps.is_empty() && s.first_steps.is_empty() && s.rounds > 0 {
                    return Err(Error::Config("explicit schedule without steps".into()));
                }
                let first = if s.first_steps.is_empty() { &s.steps } else { &s.first_steps };
                Ok(Schedule::repeated(first, &s.steps, s.rounds))
            }
        }
    }

    pub fn spin_system(&self) -> Result<SpinSystem> {
        SpinSystem::from_table(&self.hamiltonian.table_khz)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let e = &self.ensemble;
        let mut spec = EnsembleSpec::grid(e.rf_scales.clone(), e.offsets_hz.clone())?;
        if let Some(w) = &e.weights {
            spec.weights = w.clone();
            spec.validate()?;
        }
        Ok(spec)
    }
}

/// The three-spin circuit on arbitrary qubit labels.
fn paper_circuit_on(c2: usize, c1: usize, cm: usize, rounds: usize) -> Schedule {
    if (c2, c1, cm) == (C2, C1, CM) {
        return Schedule::paper_circuit(rounds);
    }
    let first = [
        Step::Refresh(cm),
        Step::Swap(cm, c1),
        Step::Refresh(cm),
        Step::Swap(cm, c2),
        Step::Refresh(cm),
        Step::Compress3(c2, c1, cm),
    ];
    let later = [
        Step::Refresh(cm),
        Step::Swap(cm, c1),
        Step::Refresh(cm),
        Step::Compress3(c2, c1, cm),
    ];
    Schedule::repeated(&first, &later, rounds)
}
