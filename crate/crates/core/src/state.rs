//! Diagonal n-qubit states.
//!
//! Every cooling gate used here maps diagonal density matrices to diagonal
//! density matrices, so a register is just a probability distribution over
//! the `2^n` computational basis states. Qubit 0 is the most significant bit
//! of the basis index: sorting the populations in descending order therefore
//! concentrates polarization on qubit 0.

use std::fmt;

use crate::error::{Error, Result};

/// Largest register the dense representation will allocate.
pub const HARD_QUBIT_LIMIT: usize = 26;

/// Default cap on register size accepted from configuration.
pub const DEFAULT_MAX_QUBITS: usize = 20;

/// Normalization must hold to this tolerance after every operation.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Largest normalization error repaired when constructing from raw data.
const REPAIR_TOLERANCE: f64 = 1e-9;

/// Single-qubit polarizations `P(0) - P(1)`, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVector(Vec<f64>);

impl BiasVector {
    pub fn new(biases: Vec<f64>) -> Result<Self> {
        for (i, &b) in biases.iter().enumerate() {
            if !b.is_finite() || !(-1.0..=1.0).contains(&b) {
                return Err(Error::domain(format!("bias {b} of qubit {i} outside [-1, 1]")));
            }
        }
        Ok(BiasVector(biases))
    }

    /// Same bias on every qubit.
    pub fn uniform(n: usize, bias: f64) -> Result<Self> {
        Self::new(vec![bias; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Biases divided by `unit`, e.g. in units of the bath polarization.
    pub fn scaled(&self, unit: f64) -> Vec<f64> {
        self.0.iter().map(|b| b / unit).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for BiasVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Probability distribution over the computational basis of an n-qubit
/// register (the diagonal of its density matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    n_qubits: usize,
    probs: Vec<f64>,
}

impl PopulationState {
    /// Builds a state from raw populations, repairing normalization drift
    /// up to `1e-9`. Tiny negative entries from rounding are clamped to zero.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let n_qubits = qubits_for_len(probs.len())?;
        let mut probs = probs;
        for (k, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::domain(format!("population {k} is not finite")));
            }
            if *p < 0.0 {
                if *p < -REPAIR_TOLERANCE {
                    return Err(Error::domain(format!("population {k} is negative ({p})")));
                }
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > REPAIR_TOLERANCE {
            return Err(Error::domain(format!("populations sum to {total}, expected 1")));
        }
        if (total - 1.0).abs() > 1e-14 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        if let Some(k) = probs.iter().position(|&p| p > 1.0) {
            return Err(Error::domain(format!("population {k} exceeds 1")));
        }
        Ok(PopulationState { n_qubits, probs })
    }

    /// Wraps populations produced by a dynamics step. No repair happens here:
    /// drift beyond [`NORM_TOLERANCE`] is reported as a numerical failure.
    pub(crate) fn from_dynamics(n_qubits: usize, probs: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(probs.len(), 1 << n_qubits);
        let mut total = 0.0;
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::numerical(format!("population {k} became {p}")));
            }
            if !(-NORM_TOLERANCE..=1.0 + NORM_TOLERANCE).contains(&p) {
                return Err(Error::numerical(format!("population {k} left [0, 1]: {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::numerical(format!(
                "normalization drifted to {total:.17}"
            )));
        }
        Ok(PopulationState { n_qubits, probs })
    }

    /// Infinite-temperature state: all `2^n` populations equal.
    pub fn uniform(n_qubits: usize) -> Result<Self> {
        check_register_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        Ok(PopulationState {
            n_qubits,
            probs: vec![1.0 / dim as f64; dim],
        })
    }

    /// Product state with qubit `i` at polarization `biases[i]`.
    pub fn thermal(biases: &BiasVector) -> Result<Self> {
        let n_qubits = biases.len();
        check_register_size(n_qubits)?;
        let mut probs = vec![1.0];
        for &b in biases.as_slice() {
            let up = 0.5 * (1.0 + b);
            let down = 0.5 * (1.0 - b);
            probs = probs.iter().flat_map(|&p| [p * up, p * down]).collect();
        }
        Ok(PopulationState { n_qubits, probs })
    }

    /// Convenience wrapper around [`PopulationState::thermal`] for raw slices.
    pub fn thermal_from(biases: &[f64]) -> Result<Self> {
        Self::thermal(&BiasVector::new(biases.to_vec())?)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Bit mask selecting qubit `i` inside a basis index.
    pub fn qubit_mask(&self, i: usize) -> usize {
        1 << (self.n_qubits - 1 - i)
    }

    pub(crate) fn check_qubit(&self, i: usize) -> Result<()> {
        if i >= self.n_qubits {
            return Err(Error::domain(format!(
                "qubit index {i} out of range for a {}-qubit register",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Marginal polarization `P(bit i = 0) - P(bit i = 1)`.
    pub fn qubit_bias(&self, i: usize) -> Result<f64> {
        self.check_qubit(i)?;
        Ok(self.bias_unchecked(i))
    }

    pub(crate) fn bias_unchecked(&self, i: usize) -> f64 {
        let mask = self.qubit_mask(i);
        self.probs
            .iter()
            .enumerate()
            .map(|(k, &p)| if k & mask == 0 { p } else { -p })
            .sum()
    }

    /// All single-qubit polarizations.
    pub fn biases(&self) -> BiasVector {
        BiasVector((0..self.n_qubits).map(|i| self.bias_unchecked(i)).collect())
    }

    /// Shannon entropy of the populations, in bits.
    pub fn shannon_entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    /// Joint distribution of `qubits` (listed order, first entry most
    /// significant) with every other qubit summed out.
    pub fn marginal(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        for (pos, &q) in qubits.iter().enumerate() {
            self.check_qubit(q)?;
            if qubits[..pos].contains(&q) {
                return Err(Error::domain(format!("qubit {q} listed twice")));
            }
        }
        let masks: Vec<usize> = qubits.iter().map(|&q| self.qubit_mask(q)).collect();
        let mut out = vec![0.0; 1 << qubits.len()];
        for (k, &p) in self.probs.iter().enumerate() {
            let sub = masks
                .iter()
                .fold(0usize, |acc, &m| (acc << 1) | usize::from(k & m != 0));
            out[sub] += p;
        }
        Ok(out)
    }
}

impl fmt::Display for PopulationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, p) in self.probs.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn check_register_size(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 {
        return Err(Error::domain("a register needs at least one qubit"));
    }
    if n_qubits > HARD_QUBIT_LIMIT {
        return Err(Error::domain(format!(
            "{n_qubits} qubits exceeds the dense limit of {HARD_QUBIT_LIMIT}"
        )));
    }
    Ok(())
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::domain(format!(
            "{len} populations is not 2^n for any n >= 1"
        )));
    }
    let n = len.trailing_zeros() as usize;
    check_register_size(n)?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_bias_is_uniform() {
        let s = PopulationState::thermal_from(&[0.0]).unwrap();
        assert_eq!(s.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn full_bias_is_pure() {
        let s = PopulationState::thermal_from(&[1.0]).unwrap();
        assert_eq!(s.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn thermal_ground_population() {
        let s = PopulationState::thermal_from(&[0.2, 0.2, 0.2]).unwrap();
        assert_abs_diff_eq!(s.probs()[0], 0.216, epsilon = 1e-15);
    }

    #[test]
    fn out_of_range_bias_rejected() {
        assert!(matches!(
            PopulationState::thermal_from(&[0.5, 1.2]),
            Err(Error::Domain(_))
        ));
        assert!(BiasVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn bias_round_trip_and_uniform() {
        let s = PopulationState::thermal_from(&[0.3, -0.1]).unwrap();
        assert_abs_diff_eq!(s.qubit_bias(1).unwrap(), -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s.qubit_bias(0).unwrap(), 0.3, epsilon = 1e-15);
        let u = PopulationState::uniform(3).unwrap();
        for i in 0..3 {
            assert_eq!(u.qubit_bias(i).unwrap(), 0.0);
        }
        assert!(matches!(u.qubit_bias(3), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_states() {
        assert_eq!(PopulationState::uniform(1).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(PopulationState::uniform(2).unwrap().probs(), &[0.25; 4]);
        assert!(PopulationState::uniform(0).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_abs_diff_eq!(
            PopulationState::uniform(3).unwrap().shannon_entropy(),
            3.0,
            epsilon = 1e-15
        );
        let pure = PopulationState::thermal_from(&[1.0, 1.0]).unwrap();
        assert_eq!(pure.shannon_entropy(), 0.0);
        // h(0.75) = -(0.75 log2 0.75 + 0.25 log2 0.25)
        let h = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        let s = PopulationState::thermal_from(&[0.5]).unwrap();
        assert_abs_diff_eq!(s.shannon_entropy(), h, epsilon = 1e-15);
        assert_abs_diff_eq!(h, 0.8113, epsilon = 1e-4);
    }

    #[test]
    fn construction_repairs_small_drift_only() {
        let s = PopulationState::from_probs(vec![0.5 + 1e-11, 0.5]).unwrap();
        assert_abs_diff_eq!(s.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(PopulationState::from_probs(vec![0.6, 0.5]).is_err());
        assert!(PopulationState::from_probs(vec![0.2, 0.3, 0.5]).is_err());
        assert!(PopulationState::from_probs(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn dynamics_constructor_does_not_repair() {
        assert!(matches!(
            PopulationState::from_dynamics(1, vec![0.5 + 1e-9, 0.5]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn marginal_of_correlated_pair() {
        let s = PopulationState::from_probs(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let m0 = s.marginal(&[0]).unwrap();
        assert_abs_diff_eq!(m0[0], 0.7, epsilon = 1e-15);
        let swapped = s.marginal(&[1, 0]).unwrap();
        assert_eq!(swapped, vec![0.4, 0.2, 0.3, 0.1]);
        assert!(s.marginal(&[0, 0]).is_err());
    }

    fn random_state(n: usize) -> impl Strategy<Value = PopulationState> {
        prop::collection::vec(0.0f64..1.0, 1 << n).prop_filter_map("zero mass", |w| {
            let t: f64 = w.iter().sum();
            (t > 1e-6).then(|| {
                PopulationState::from_probs(w.iter().map(|x| x / t).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn thermal_round_trips(b in prop::collection::vec(-1.0f64..=1.0, 1..7)) {
            let s = PopulationState::thermal_from(&b).unwrap();
            for (i, &bi) in b.iter().enumerate() {
                prop_assert!((s.qubit_bias(i).unwrap() - bi).abs() < 1e-14);
            }
        }

        #[test]
        fn entropy_is_permutation_invariant(
            s in random_state(3),
            perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let shuffled: Vec<f64> = perm.iter().map(|&k| s.probs()[k]).collect();
            let t = PopulationState::from_probs(shuffled).unwrap();
            prop_assert!((s.shannon_entropy() - t.shannon_entropy()).abs() < 1e-12);
            prop_assert!(s.shannon_entropy() <= 3.0 + 1e-12);
        }

        #[test]
        fn marginals_agree_with_partial_sums(s in random_state(4)) {
            // Partial summation: index = q0 q1 q2 q3, sum over the last axes
            // in nested loops, independent of the mask-based implementation.
            let p = s.probs();
            let mut by_q0 = [0.0; 2];
            let mut by_q2 = [0.0; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        for d in 0..2 {
                            let v = p[a * 8 + b * 4 + c * 2 + d];
                            by_q0[a] += v;
                            by_q2[c] += v;
                        }
                    }
                }
            }
            let m0 = s.marginal(&[0]).unwrap();
            let m2 = s.marginal(&[2]).unwrap();
            for k in 0..2 {
                prop_assert!((m0[k] - by_q0[k]).abs() < 1e-14);
                prop_assert!((m2[k] - by_q2[k]).abs() < 1e-14);
            }
            prop_assert!((s.qubit_bias(2).unwrap() - (by_q2[0] - by_q2[1])).abs() < 1e-14);
        }
    }
}
