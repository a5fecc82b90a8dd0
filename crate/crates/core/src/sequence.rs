//! Monte Carlo sample-number sequences `(M_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{MlpError, Result};

/// How `M_j` is generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceRule {
    /// `M_j = j`.
    Identity,
    /// `M_j = ⌈κ j⌉`.
    Linear { kappa: f64 },
    /// `M_j = values[j - 1]`; used for hand-built (possibly invalid) sequences.
    Explicit { values: Vec<u64>, kappa: f64 },
}

/// The sequence `(M_j)` together with the constants `κ` and `𝔅` of the
/// growth hypotheses `M_j ≤ κ j` and `M_{j+1} / M_j ≤ 𝔅`.
#[derive(Clone, Debug, PartialEq)]
pub struct McSequence {
    rule: SequenceRule,
}

impl McSequence {
    pub fn identity() -> Self {
        McSequence {
            rule: SequenceRule::Identity,
        }
    }

    pub fn linear(kappa: f64) -> Self {
        McSequence {
            rule: SequenceRule::Linear { kappa },
        }
    }

    pub fn explicit(values: Vec<u64>, kappa: f64) -> Self {
        McSequence {
            rule: SequenceRule::Explicit { values, kappa },
        }
    }

    pub fn from_rule(rule: SequenceRule) -> Self {
        McSequence { rule }
    }

    pub fn rule(&self) -> &SequenceRule {
        &self.rule
    }

    pub fn kappa(&self) -> f64 {
        match &self.rule {
            SequenceRule::Identity => 1.0,
            SequenceRule::Linear { kappa } | SequenceRule::Explicit { kappa, .. } => *kappa,
        }
    }

    /// The ratio bound `𝔅 = 2κ` implied by the growth hypotheses.
    pub fn ratio_bound(&self) -> f64 {
        2.0 * self.kappa()
    }

    /// Largest `j` for which `M_j` is defined, if finite.
    pub fn defined_up_to(&self) -> Option<u64> {
        match &self.rule {
            SequenceRule::Explicit { values, .. } => Some(values.len() as u64),
            _ => None,
        }
    }

    pub fn try_get(&self, j: u64) -> Result<u64> {
        if j == 0 {
            return Err(MlpError::InvalidArgument("M_j is indexed from j = 1".into()));
        }
        match &self.rule {
            SequenceRule::Identity => Ok(j),
            SequenceRule::Linear { kappa } => {
                let m = (kappa * j as f64).ceil();
                if !(m.is_finite() && m >= 1.0) {
                    return Err(MlpError::InvalidArgument(format!(
                        "⌈{kappa}·{j}⌉ is not a positive integer"
                    )));
                }
                Ok(m as u64)
            }
            SequenceRule::Explicit { values, .. } => values
                .get(j as usize - 1)
                .copied()
                .ok_or_else(|| MlpError::InvalidArgument(format!("explicit sequence has no entry for j = {j}"))),
        }
    }

    /// `M_j`. Panics where [`Self::try_get`] would fail.
    pub fn get(&self, j: u64) -> u64 {
        self.try_get(j).expect("sequence index out of range")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub j_max: u64,
    pub kappa: f64,
    pub strictly_increasing: bool,
    pub bounded_by_kappa_j: bool,
    /// `j ≤ M_j ≤ κ j` for all checked `j`.
    pub sandwiched: bool,
    /// Observed `max M_{j+1} / M_j`.
    pub max_ratio: f64,
    /// `2κ`.
    pub ratio_bound: f64,
    pub ratio_within_bound: bool,
    pub failures: Vec<String>,
}

impl SequenceReport {
    /// True iff both hypotheses hold. The derived facts are reported but
    /// cannot fail on their own when the hypotheses hold.
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks `M_j < M_{j+1}` and `M_j ≤ κ j` for `j ≤ j_max` and reports the
/// consequences `j ≤ M_j ≤ κ j` and `M_{j+1} / M_j ≤ 2κ`.
pub fn validate_sequence(seq: &McSequence, j_max: u64) -> SequenceReport {
    let kappa = seq.kappa();
    let mut failures = Vec::new();
    if !(kappa >= 1.0 && kappa.is_finite()) {
        failures.push(format!("κ = {kappa} is not a finite real ≥ 1"));
    }

    let values: Vec<Option<u64>> = (1..=j_max + 1).map(|j| seq.try_get(j).ok()).collect();
    let mut strictly_increasing = true;
    let mut bounded = true;
    let mut sandwiched = true;
    let mut max_ratio = 0.0f64;

    for j in 1..=j_max {
        let Some(m) = values[j as usize - 1] else {
            failures.push(format!("M_{j} is undefined"));
            strictly_increasing = false;
            bounded = false;
            sandwiched = false;
            continue;
        };
        if m == 0 {
            failures.push(format!("M_{j} = 0 is not a positive integer"));
            bounded = false;
        }
        if m as f64 > kappa * j as f64 {
            bounded = false;
            failures.push(format!("M_{j} = {m} exceeds κ·j = {}", kappa * j as f64));
        }
        if m < j || m as f64 > kappa * j as f64 {
            sandwiched = false;
        }
        // M_{j+1} only matters for the monotonicity step inside the range.
        if j < j_max {
            if let Some(next) = values[j as usize] {
                if next <= m {
                    strictly_increasing = false;
                    failures.push(format!("not strictly increasing: M_{j} = {m}, M_{} = {next}", j + 1));
                }
                if m > 0 {
                    max_ratio = max_ratio.max(next as f64 / m as f64);
                }
            }
        }
    }

    let ratio_bound = 2.0 * kappa;
    SequenceReport {
        j_max,
        kappa,
        strictly_increasing,
        bounded_by_kappa_j: bounded,
        sandwiched,
        max_ratio,
        ratio_bound,
        ratio_within_bound: max_ratio <= ratio_bound,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_with_ratio_two() {
        let r = validate_sequence(&McSequence::identity(), 10);
        assert!(r.pass(), "{:?}", r.failures);
        assert!(r.sandwiched);
        assert_eq!(r.ratio_bound, 2.0);
        assert_eq!(r.max_ratio, 2.0);
    }

    #[test]
    fn doubled_sequence_sandwiched() {
        let seq = McSequence::linear(2.0);
        assert_eq!(seq.get(3), 6);
        let r = validate_sequence(&seq, 10);
        assert!(r.pass());
        assert!(r.sandwiched);
        assert!(r.ratio_within_bound);
    }

    #[test]
    fn repeated_value_fails() {
        let r = validate_sequence(&McSequence::explicit(vec![1, 1, 2], 1.0), 3);
        assert!(!r.pass());
        assert!(!r.strictly_increasing);
    }

    #[test]
    fn exceeding_kappa_fails() {
        let r = validate_sequence(&McSequence::explicit(vec![1, 3, 4], 1.0), 3);
        assert!(!r.pass());
        assert!(!r.bounded_by_kappa_j);
        assert!(r.strictly_increasing);
    }

    #[test]
    fn undefined_entries_fail() {
        let r = validate_sequence(&McSequence::explicit(vec![1, 2], 1.0), 4);
        assert!(!r.pass());
    }

    #[test]
    fn kappa_below_one_fails() {
        let r = validate_sequence(&McSequence::explicit(vec![1, 2, 3], 0.5), 3);
        assert!(!r.pass());
    }
}
