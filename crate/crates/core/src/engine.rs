//! Cooling gates, schedules and the partner-pairing loop.
//!
//! All gates act on [`PopulationState`]: swaps, the three-bit compression and
//! the PPA sort are permutations of the populations, refresh replaces the
//! reset qubit's marginal by a fresh thermal one. Qubit naming for the
//! three-spin experiment: C2 is qubit 0 (target), C1 is qubit 1 and the
//! methylene carbon Cm is qubit 2 (reset).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{BathModel, NoiseModel, NoisePlacement};
use crate::state::{BiasVector, PopulationState};

/// Qubit holding C2, the compression target.
pub const C2: usize = 0;
/// Qubit holding C1.
pub const C1: usize = 1;
/// Qubit holding Cm, refreshed from the proton bath.
pub const CM: usize = 2;

/// Defaults for the steady-state driver.
pub const DEFAULT_STEADY_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ROUNDS: usize = 100_000;

/// Descending sort of the populations (ties keep their original order).
/// This is the compression step of the partner-pairing algorithm: it is the
/// permutation that maximizes the polarization of qubit 0.
pub fn ppa_sort(state: &PopulationState) -> PopulationState {
    let mut probs = state.probs().to_vec();
    probs.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    PopulationState::from_dynamics(state.n_qubits(), probs)
        .expect("sorting preserves a valid distribution")
}

/// Index map exchanging bits `i` and `j` of every basis index.
pub fn swap_permutation(n_qubits: usize, i: usize, j: usize) -> Result<Vec<usize>> {
    check_distinct(n_qubits, &[i, j])?;
    let (mi, mj) = (bit(n_qubits, i), bit(n_qubits, j));
    Ok((0..1usize << n_qubits)
        .map(|k| {
            if (k & mi == 0) != (k & mj == 0) {
                k ^ mi ^ mj
            } else {
                k
            }
        })
        .collect())
}

/// Index map transposing the bit patterns `|011>` and `|100>` on
/// `(target, a, b)` and fixing every other pattern.
pub fn compress3_permutation(
    n_qubits: usize,
    target: usize,
    a: usize,
    b: usize,
) -> Result<Vec<usize>> {
    check_distinct(n_qubits, &[target, a, b])?;
    let (mt, ma, mb) = (bit(n_qubits, target), bit(n_qubits, a), bit(n_qubits, b));
    let all = mt | ma | mb;
    Ok((0..1usize << n_qubits)
        .map(|k| match k & all {
            x if x == ma | mb || x == mt => k ^ all,
            _ => k,
        })
        .collect())
}

/// Moves the population at basis index `k` to `perm[k]`.
pub fn apply_permutation(state: &PopulationState, perm: &[usize]) -> Result<PopulationState> {
    if perm.len() != state.dim() {
        return Err(Error::domain(format!(
            "permutation of length {} applied to a state of dimension {}",
            perm.len(),
            state.dim()
        )));
    }
    let mut probs = vec![f64::NAN; state.dim()];
    for (k, &p) in state.probs().iter().enumerate() {
        probs[perm[k]] = p;
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::domain("index map is not a permutation"));
    }
    PopulationState::from_dynamics(state.n_qubits(), probs)
}

pub fn swap_qubits(state: &PopulationState, i: usize, j: usize) -> Result<PopulationState> {
    apply_permutation(state, &swap_permutation(state.n_qubits(), i, j)?)
}

pub fn compress3(
    state: &PopulationState,
    target: usize,
    a: usize,
    b: usize,
) -> Result<PopulationState> {
    apply_permutation(state, &compress3_permutation(state.n_qubits(), target, a, b)?)
}

/// Traces out the reset qubit and re-attaches it in a thermal state of
/// polarization `efficiency * bath_bias`.
pub fn refresh(
    state: &PopulationState,
    reset: usize,
    bath_bias: f64,
    efficiency: f64,
) -> Result<PopulationState> {
    state.check_qubit(reset)?;
    if !bath_bias.is_finite() || !(-1.0..=1.0).contains(&bath_bias) {
        return Err(Error::domain(format!("bath bias {bath_bias} outside [-1, 1]")));
    }
    if !efficiency.is_finite() || !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::domain(format!("efficiency {efficiency} outside [0, 1]")));
    }
    let bias = efficiency * bath_bias;
    let up = 0.5 * (1.0 + bias);
    let down = 0.5 * (1.0 - bias);
    let mask = state.qubit_mask(reset);
    let mut probs = state.probs().to_vec();
    for k in (0..probs.len()).filter(|k| k & mask == 0) {
        let rest = probs[k] + probs[k | mask];
        probs[k] = rest * up;
        probs[k | mask] = rest * down;
    }
    PopulationState::from_dynamics(state.n_qubits(), probs)
}

/// Largest polarization any permutation of the populations can give
/// qubit 0: the closed-system cooling limit.
pub fn unitary_cooling_limit(state: &PopulationState) -> f64 {
    ppa_sort(state).bias_unchecked(0)
}

/// One operation of a cooling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    /// Re-thermalize the given qubit with the bath.
    Refresh(usize),
    Swap(usize, usize),
    /// `(target, a, b)`.
    Compress3(usize, usize, usize),
    PpaSort,
}

impl Step {
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        match *self {
            Step::Refresh(r) => check_distinct(n_qubits, &[r]),
            Step::Swap(i, j) => check_distinct(n_qubits, &[i, j]),
            Step::Compress3(t, a, b) => check_distinct(n_qubits, &[t, a, b]),
            Step::PpaSort => Ok(()),
        }
    }

    pub fn is_refresh(&self) -> bool {
        matches!(self, Step::Refresh(_))
    }

    /// Compression steps are the ones after which the target is read out.
    pub fn is_compression(&self) -> bool {
        matches!(self, Step::Compress3(..) | Step::PpaSort)
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Refresh(r) => write!(f, "refresh({r})"),
            Step::Swap(i, j) => write!(f, "swap({i},{j})"),
            Step::Compress3(t, a, b) => write!(f, "compress3({t},{a},{b})"),
            Step::PpaSort => write!(f, "ppa_sort"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledStep {
    /// 1-based round the step belongs to.
    pub round: usize,
    pub step: Step,
}

/// Ordered list of steps, grouped into rounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    steps: Vec<ScheduledStep>,
    rounds: usize,
}

impl Schedule {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `first` runs in round 1, `body` in every later round.
    pub fn repeated(first: &[Step], body: &[Step], rounds: usize) -> Self {
        let steps = (1..=rounds)
            .flat_map(|round| {
                let src = if round == 1 { first } else { body };
                src.iter().map(move |&step| ScheduledStep { round, step })
            })
            .collect();
        Schedule { steps, rounds }
    }

    /// The same step list every round.
    pub fn uniform(body: &[Step], rounds: usize) -> Self {
        Self::repeated(body, body, rounds)
    }

    /// The three-spin experiment: round 1 loads bath polarization onto C1,
    /// C2 and Cm before compressing onto C2; later rounds reload only C1
    /// and Cm.
    pub fn paper_circuit(rounds: usize) -> Self {
        let first = [
            Step::Refresh(CM),
            Step::Swap(CM, C1),
            Step::Refresh(CM),
            Step::Swap(CM, C2),
            Step::Refresh(CM),
            Step::Compress3(C2, C1, CM),
        ];
        let later = [
            Step::Refresh(CM),
            Step::Swap(CM, C1),
            Step::Refresh(CM),
            Step::Compress3(C2, C1, CM),
        ];
        Self::repeated(&first, &later, rounds)
    }

    /// Partner-pairing algorithm with the last qubit as reset qubit.
    pub fn ppa(n_qubits: usize, rounds: usize) -> Self {
        Self::uniform(&[Step::Refresh(n_qubits - 1), Step::PpaSort], rounds)
    }

    pub fn steps(&self) -> &[ScheduledStep] {
        &self.steps
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        self.steps.iter().try_for_each(|s| s.step.validate(n_qubits))
    }
}

/// Snapshot of the register after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 0 for the initial state.
    pub round: usize,
    /// `None` for the initial state.
    pub step: Option<Step>,
    pub biases: BiasVector,
    pub entropy_bits: f64,
    pub bath_bias: f64,
    pub elapsed: f64,
}

impl StepRecord {
    pub fn label(&self) -> String {
        self.step.map_or_else(|| "initial".to_string(), |s| s.to_string())
    }
}

/// Result of executing a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Polarization of the reset qubit right after the first refresh; the
    /// unit for `biases_over_bath`.
    pub bath_unit: f64,
    pub initial: StepRecord,
    pub steps: Vec<StepRecord>,
    pub final_state: PopulationState,
    /// Number of depolarizing applications performed.
    pub noisy_gates: usize,
}

impl Trajectory {
    pub fn records(&self) -> impl Iterator<Item = &StepRecord> {
        std::iter::once(&self.initial).chain(&self.steps)
    }

    /// `None` when the bath unit is zero.
    pub fn over_bath(&self, bias: f64) -> Option<f64> {
        (self.bath_unit != 0.0).then(|| bias / self.bath_unit)
    }

    /// Bias of `qubit` after every compression step, in execution order.
    pub fn after_compressions(&self, qubit: usize) -> Vec<f64> {
        self.steps
            .iter()
            .filter(|r| r.step.is_some_and(|s| s.is_compression()))
            .map(|r| r.biases[qubit])
            .collect()
    }

    pub fn final_biases(&self) -> BiasVector {
        self.final_state.biases()
    }
}

/// Executes steps one at a time, tracking the bath and the clock.
#[derive(Debug, Clone)]
pub struct Runner<'a> {
    bath: &'a BathModel,
    noise: &'a NoiseModel,
    state: PopulationState,
    refreshes: usize,
    elapsed: f64,
    noisy_gates: usize,
}

impl<'a> Runner<'a> {
    pub fn new(initial: PopulationState, bath: &'a BathModel, noise: &'a NoiseModel) -> Result<Self> {
        bath.validate()?;
        noise.validate()?;
        Ok(Runner {
            bath,
            noise,
            state: initial,
            refreshes: 0,
            elapsed: 0.0,
            noisy_gates: 0,
        })
    }

    pub fn state(&self) -> &PopulationState {
        &self.state
    }

    pub fn bath_bias(&self) -> f64 {
        self.bath.bias_at(self.refreshes, self.elapsed)
    }

    pub fn apply(&mut self, step: Step) -> Result<()> {
        let durations = &self.noise.gate_durations;
        let (next, duration) = match step {
            Step::Refresh(r) => {
                let bias = self.bath_bias();
                self.refreshes += 1;
                (refresh(&self.state, r, bias, self.bath.efficiency)?, durations.refresh)
            }
            Step::Swap(i, j) => (swap_qubits(&self.state, i, j)?, durations.swap),
            Step::Compress3(t, a, b) => (compress3(&self.state, t, a, b)?, durations.compress),
            Step::PpaSort => (ppa_sort(&self.state), durations.sort),
        };
        self.elapsed += duration;
        let noisy = !self.noise.is_noiseless()
            && (!step.is_refresh() || self.noise.placement == NoisePlacement::AllSteps);
        self.state = if noisy {
            self.noisy_gates += 1;
            self.noise.apply(&next)?
        } else {
            next
        };
        Ok(())
    }

    fn record(&self, round: usize, step: Option<Step>) -> StepRecord {
        StepRecord {
            round,
            step,
            biases: self.state.biases(),
            entropy_bits: self.state.shannon_entropy(),
            bath_bias: self.bath_bias(),
            elapsed: self.elapsed,
        }
    }
}

/// Runs `schedule` from `initial`, recording the register after every step.
pub fn run_schedule(
    initial: &PopulationState,
    schedule: &Schedule,
    bath: &BathModel,
    noise: &NoiseModel,
) -> Result<Trajectory> {
    schedule.validate(initial.n_qubits())?;
    let mut runner = Runner::new(initial.clone(), bath, noise)?;
    let first = runner.record(0, None);
    let mut steps = Vec::with_capacity(schedule.steps().len());
    for s in schedule.steps() {
        runner.apply(s.step)?;
        steps.push(runner.record(s.round, Some(s.step)));
    }
    Ok(Trajectory {
        bath_unit: bath.reference_bias(),
        initial: first,
        steps,
        final_state: runner.state,
        noisy_gates: runner.noisy_gates,
    })
}

/// Partner-pairing algorithm from the maximally mixed state, resetting the
/// last qubit.
pub fn run_ppa(n_qubits: usize, bath: &BathModel, noise: &NoiseModel, rounds: usize) -> Result<Trajectory> {
    if n_qubits < 2 {
        return Err(Error::domain("the PPA needs at least two qubits"));
    }
    run_schedule(
        &PopulationState::uniform(n_qubits)?,
        &Schedule::ppa(n_qubits, rounds),
        bath,
        noise,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Qubit-0 polarization at the fixed point.
    pub bias: f64,
    pub rounds_used: usize,
    pub state: PopulationState,
}

/// Iterates PPA rounds until neither the qubit-0 bias nor any population
/// moves by `tol` or more over a round.
pub fn steady_state_bias(
    n_qubits: usize,
    bath: &BathModel,
    noise: &NoiseModel,
    tol: f64,
    max_rounds: usize,
) -> Result<SteadyState> {
    if n_qubits < 2 {
        return Err(Error::domain("the PPA needs at least two qubits"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance {tol} must be positive")));
    }
    let mut runner = Runner::new(PopulationState::uniform(n_qubits)?, bath, noise)?;
    let reset = Step::Refresh(n_qubits - 1);
    let mut previous = runner.state().clone();
    let mut prev_bias = previous.bias_unchecked(0);
    for round in 1..=max_rounds {
        runner.apply(reset)?;
        runner.apply(Step::PpaSort)?;
        let bias = runner.state().bias_unchecked(0);
        let moved = runner
            .state()
            .probs()
            .iter()
            .zip(previous.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if (bias - prev_bias).abs() < tol && moved < tol {
            return Ok(SteadyState {
                bias,
                rounds_used: round,
                state: runner.state,
            });
        }
        if round == max_rounds {
            return Err(Error::Convergence {
                rounds: max_rounds,
                previous: prev_bias,
                last: bias,
            });
        }
        previous = runner.state().clone();
        prev_bias = bias;
    }
    Err(Error::Convergence {
        rounds: max_rounds,
        previous: prev_bias,
        last: prev_bias,
    })
}

/// Qubit-0 limit of the PPA with one reset qubit at polarization `eps`:
/// `tanh(2^(n-2) artanh eps)`, which tends to `eps 2^(n-2)` for
/// `eps << 2^-n`.
pub fn ppa_asymptotic_bias(n_qubits: usize, eps: f64) -> f64 {
    let m = (1u64 << (n_qubits - 2)) as f64;
    let (up, down) = ((1.0 + eps).powf(m), (1.0 - eps).powf(m));
    (up - down) / (up + down)
}

fn bit(n_qubits: usize, i: usize) -> usize {
    1 << (n_qubits - 1 - i)
}

fn check_distinct(n_qubits: usize, qubits: &[usize]) -> Result<()> {
    for (pos, &q) in qubits.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::domain(format!(
                "qubit index {q} out of range for a {n_qubits}-qubit register"
            )));
        }
        if qubits[..pos].contains(&q) {
            return Err(Error::domain(format!("qubit index {q} repeated in {qubits:?}")));
        }
    }
    Ok(())
}
