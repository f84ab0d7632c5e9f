//! Imperfection models: depolarizing gate noise and a finite, slowly warming
//! heat bath.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::PopulationState;

/// Whether depolarizing noise acts on the whole register at once or on each
/// qubit independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DepolarizingKind {
    #[default]
    Global,
    PerQubit,
}

/// Which schedule steps count as noisy gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePlacement {
    /// Swap, three-bit compression and PPA sort each incur one application;
    /// refresh is noiseless on the register.
    #[default]
    PermutationGates,
    /// Refresh steps are noisy too.
    AllSteps,
}

impl NoisePlacement {
    pub fn describe(self) -> &'static str {
        match self {
            NoisePlacement::PermutationGates => {
                "one depolarizing application after every swap, compress3 and ppa_sort; refresh noiseless"
            }
            NoisePlacement::AllSteps => {
                "one depolarizing application after every step, refresh included"
            }
        }
    }
}

/// Wall-clock duration charged for each step kind, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateDurations {
    pub swap: f64,
    pub compress: f64,
    pub sort: f64,
    /// Two 10 us ramps around a 25 us contact.
    pub refresh: f64,
}

impl Default for GateDurations {
    fn default() -> Self {
        GateDurations {
            swap: 1.6e-3,
            compress: 2.2e-3,
            sort: 2.2e-3,
            refresh: 35e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub depolarizing_per_gate: f64,
    pub kind: DepolarizingKind,
    pub placement: NoisePlacement,
    pub gate_durations: GateDurations,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            depolarizing_per_gate: 0.0,
            kind: DepolarizingKind::Global,
            placement: NoisePlacement::PermutationGates,
            gate_durations: GateDurations::default(),
        }
    }

    pub fn depolarizing(p: f64) -> Self {
        NoiseModel {
            depolarizing_per_gate: p,
            ..Self::noiseless()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("depolarizing_per_gate", self.depolarizing_per_gate)?;
        let d = &self.gate_durations;
        for (name, t) in [
            ("swap", d.swap),
            ("compress", d.compress),
            ("sort", d.sort),
            ("refresh", d.refresh),
        ] {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::domain(format!("gate duration {name} = {t} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Applies one gate's worth of depolarizing noise.
    pub fn apply(&self, state: &PopulationState) -> Result<PopulationState> {
        match self.kind {
            DepolarizingKind::Global => apply_depolarizing(state, self.depolarizing_per_gate),
            DepolarizingKind::PerQubit => {
                apply_local_depolarizing(state, self.depolarizing_per_gate)
            }
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.depolarizing_per_gate == 0.0
    }

    pub fn describe(&self) -> String {
        let kind = match self.kind {
            DepolarizingKind::Global => "global",
            DepolarizingKind::PerQubit => "per-qubit",
        };
        format!(
            "{kind} depolarizing p = {} per gate; {}",
            self.depolarizing_per_gate,
            self.placement.describe()
        )
    }
}

/// Finite heat bath: initial polarization, heating per refresh, optional
/// rotating-frame relaxation, and the efficiency of the polarization
/// transfer onto the reset qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathModel {
    pub epsilon0: f64,
    pub heating_per_refresh: f64,
    /// Seconds; `None` disables relaxation.
    pub t1rho: Option<f64>,
    pub efficiency: f64,
}

impl Default for BathModel {
    fn default() -> Self {
        BathModel::ideal(0.01)
    }
}

impl BathModel {
    /// Infinite bath at `epsilon0` with perfect transfer.
    pub fn ideal(epsilon0: f64) -> Self {
        BathModel {
            epsilon0,
            heating_per_refresh: 0.0,
            t1rho: None,
            efficiency: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon0.is_finite() || !(0.0..=1.0).contains(&self.epsilon0) {
            return Err(Error::domain(format!("epsilon0 = {} outside [0, 1]", self.epsilon0)));
        }
        let h = self.heating_per_refresh;
        if !h.is_finite() || !(0.0..1.0).contains(&h) {
            return Err(Error::domain(format!("heating_per_refresh = {h} outside [0, 1)")));
        }
        if let Some(t) = self.t1rho {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::domain(format!("t1rho = {t} must be positive")));
            }
        }
        check_probability("efficiency", self.efficiency)
    }

    /// Bath polarization after `refresh_count` refreshes and `elapsed`
    /// seconds.
    pub fn bias_at(&self, refresh_count: usize, elapsed: f64) -> f64 {
        bath_bias_at(self, refresh_count, elapsed)
    }

    /// Polarization delivered to the reset qubit by the first refresh; the
    /// unit in which register biases are reported.
    pub fn reference_bias(&self) -> f64 {
        self.efficiency * self.epsilon0
    }
}

/// `epsilon0 (1 - h)^count exp(-elapsed / t1rho)`.
pub fn bath_bias_at(bath: &BathModel, refresh_count: usize, elapsed: f64) -> f64 {
    let heating = (1.0 - bath.heating_per_refresh).powi(refresh_count as i32);
    let relaxation = match bath.t1rho {
        Some(t1rho) => (-elapsed.max(0.0) / t1rho).exp(),
        None => 1.0,
    };
    bath.epsilon0 * heating * relaxation
}

/// Whole-register depolarizing channel: `(1 - p) state + p uniform`.
/// Every single-qubit bias scales by exactly `1 - p`.
pub fn apply_depolarizing(state: &PopulationState, p: f64) -> Result<PopulationState> {
    check_probability("depolarizing probability", p)?;
    if p == 0.0 {
        return Ok(state.clone());
    }
    let floor = p / state.dim() as f64;
    let keep = 1.0 - p;
    let probs = state.probs().iter().map(|&x| keep * x + floor).collect();
    PopulationState::from_dynamics(state.n_qubits(), probs)
}

/// Independent single-qubit depolarizing of strength `p` on every qubit.
pub fn apply_local_depolarizing(state: &PopulationState, p: f64) -> Result<PopulationState> {
    check_probability("depolarizing probability", p)?;
    if p == 0.0 {
        return Ok(state.clone());
    }
    let mut probs = state.probs().to_vec();
    for i in 0..state.n_qubits() {
        let mask = state.qubit_mask(i);
        for k in (0..probs.len()).filter(|k| k & mask == 0) {
            let (a, b) = (probs[k], probs[k | mask]);
            let mean = 0.5 * (a + b);
            probs[k] = (1.0 - p) * a + p * mean;
            probs[k | mask] = (1.0 - p) * b + p * mean;
        }
    }
    PopulationState::from_dynamics(state.n_qubits(), probs)
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}
