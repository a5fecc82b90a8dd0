//! Cost recursions and the a-priori error bound.

use serde::{Deserialize, Serialize};

use crate::error::{MlpError, Result};
use crate::sequence::McSequence;

/// Cost units per realization of the noise (`𝔷`) and the per-sample overhead
/// multiplier `γ`, so that each sample costs an extra `γ 𝔷`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub z_cost: f64,
    pub gamma: f64,
}

impl CostParams {
    /// The generic parametrization matching the heat scheme in dimension `d`:
    /// `𝔷 = d`, `γ = 2`.
    pub fn heat(d: usize) -> Self {
        CostParams {
            z_cost: d as f64,
            gamma: 2.0,
        }
    }
}

/// Heat-specific cost terms: `d` draws per terminal increment and `d + 1`
/// draws per sample (one uniform, `d` normals).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatCostParams {
    pub d: usize,
}

impl HeatCostParams {
    pub fn head(&self) -> f64 {
        self.d as f64
    }

    pub fn per_sample_overhead(&self) -> f64 {
        self.d as f64 + 1.0
    }
}

/// Coefficients of the closed-form bound `(1 + α + β + γ)^n M^n 𝔷`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCost {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ClosedFormCost {
    /// `α = β = 1`, the values for the full-history recursion.
    pub fn mlp(gamma: f64) -> Self {
        ClosedFormCost {
            alpha: 1.0,
            beta: 1.0,
            gamma,
        }
    }
}

/// `Cost_{-1} = Cost_0 = 0`, `Cost_n = M^n h + Σ_{l<n} M^{n-l} (Cost_l + Cost_{l-1} + o)`
/// with head term `h` and per-sample overhead `o`, taken with equality.
pub fn cost_recursion(m: f64, n: i64, head: f64, overhead: f64) -> f64 {
    if n <= 0 {
        return 0.0;
    }
    let n = n as usize;
    // cost[k + 1] = Cost_k, so cost[0] = Cost_{-1}.
    let mut cost = vec![0.0f64; n + 2];
    for k in 1..=n {
        let mut acc = m.powi(k as i32) * head;
        for l in 0..k {
            acc += m.powi((k - l) as i32) * (cost[l + 1] + cost[l] + overhead);
        }
        cost[k + 1] = acc;
    }
    cost[n + 1]
}

fn check_order(n: i64, j: u64) -> Result<()> {
    if n < -1 {
        return Err(MlpError::InvalidArgument(format!("n = {n} must be ≥ -1")));
    }
    if j == 0 {
        return Err(MlpError::InvalidArgument("j must be ≥ 1".into()));
    }
    Ok(())
}

/// The generic cost recursion `Cost_{n,j}` with `M = M_j`, head `𝔷` and
/// overhead `γ 𝔷`.
pub fn cost_bound_recursive(params: CostParams, seq: &McSequence, n: i64, j: u64) -> Result<f64> {
    check_order(n, j)?;
    let m = seq.try_get(j)? as f64;
    Ok(cost_recursion(m, n, params.z_cost, params.gamma * params.z_cost))
}

/// The heat cost recursion with head `d` and overhead `d + 1`.
pub fn heat_cost_bound_recursive(params: HeatCostParams, seq: &McSequence, n: i64, j: u64) -> Result<f64> {
    check_order(n, j)?;
    let m = seq.try_get(j)? as f64;
    Ok(cost_recursion(m, n, params.head(), params.per_sample_overhead()))
}

/// `(1 + α + β + γ)^n M^n 𝔷` for `n ≥ 1`, and 0 for `n ≤ 0`.
pub fn cost_bound_closed_form(coeffs: ClosedFormCost, m: f64, z_cost: f64, n: i64) -> f64 {
    if n <= 0 {
        return 0.0;
    }
    let base = 1.0 + coeffs.alpha + coeffs.beta + coeffs.gamma;
    (base * m).powi(n as i32) * z_cost
}

/// Whether `(a n + b) b^{n-1} ≤ (a + b)^n`.
///
/// Evaluated in log space once the powers leave the comfortable range of
/// `f64`, with a relative slack of a few ulps for the equality case `a = 0`.
pub fn lemma_ab_check(a: f64, b: f64, n: u32) -> bool {
    assert!(a >= 0.0 && b >= 0.0 && n >= 1);
    let nf = n as f64;
    let lhs = (a * nf + b) * b.powi(n as i32 - 1);
    let rhs = (a + b).powi(n as i32);
    if lhs.is_finite() && rhs.is_finite() && rhs > f64::MIN_POSITIVE {
        return lhs <= rhs * (1.0 + 8.0 * f64::EPSILON * nf);
    }
    if a == 0.0 && b == 0.0 {
        return true;
    }
    if b == 0.0 {
        // lhs is 0 for n ≥ 2 and a for n = 1.
        return n >= 2 || a <= a + b;
    }
    let log_lhs = (a * nf + b).ln() + (nf - 1.0) * b.ln();
    let log_rhs = nf * (a + b).ln();
    log_lhs <= log_rhs + 8.0 * f64::EPSILON * nf * log_rhs.abs().max(1.0)
}

/// Constants of the error bound `C [e^κ (1 + 4c) / M_n]^{n/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundParams {
    /// The constant `C ≥ 1`.
    pub c_const: f64,
    /// The contraction constant `c > 0`; `(LT)²` for the heat equation.
    pub contraction: f64,
    pub kappa: f64,
}

impl ErrorBoundParams {
    /// Heat-equation constants with `c = (L T)²`.
    pub fn heat(c_const: f64, lipschitz: f64, horizon: f64, kappa: f64) -> Self {
        ErrorBoundParams {
            c_const,
            contraction: (lipschitz * horizon).powi(2),
            kappa,
        }
    }

    fn base(&self, m: f64) -> f64 {
        self.kappa.exp() * (1.0 + 4.0 * self.contraction) / m
    }
}

/// `C [e^κ (1 + 4c) / M_n]^{n/2}`.
pub fn error_bound(params: ErrorBoundParams, seq: &McSequence, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(MlpError::InvalidArgument("error bound is stated for n ≥ 1".into()));
    }
    let m = seq.try_get(n)? as f64;
    Ok(params.c_const * params.base(m).powf(n as f64 / 2.0))
}

/// Smallest `N` with `sup_{n ≥ N} bound(n) ≤ ε`, or `None` if it is not
/// reached within `n_horizon`.
///
/// Since `M_n` increases, the base `e^κ (1 + 4c) / M_n` is decreasing; once
/// it is below 1 the bound is decreasing too, so the supremum over the tail
/// is attained at its first element and scanning can stop.
pub fn n_epsilon(params: ErrorBoundParams, seq: &McSequence, eps: f64, n_horizon: u64) -> Option<u64> {
    let mut last_violation = 0u64;
    for n in 1..=n_horizon {
        let m = seq.try_get(n).ok()? as f64;
        let b = params.c_const * params.base(m).powf(n as f64 / 2.0);
        if b > eps {
            last_violation = n;
        } else if params.base(m) < 1.0 {
            return Some(last_violation + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recursion_small_cases() {
        let seq = McSequence::explicit(vec![2], 2.0);
        let p = CostParams {
            z_cost: 3.0,
            gamma: 2.0,
        };
        assert_eq!(cost_bound_recursive(p, &seq, 1, 1).unwrap(), 18.0);
        assert_eq!(cost_bound_recursive(p, &seq, 0, 1).unwrap(), 0.0);
        assert_eq!(cost_bound_recursive(p, &seq, -1, 1).unwrap(), 0.0);
        let h = HeatCostParams { d: 3 };
        assert_eq!(heat_cost_bound_recursive(h, &seq, 1, 1).unwrap(), 14.0);
        assert!(cost_bound_recursive(p, &seq, -2, 1).is_err());
    }

    #[test]
    fn closed_form_cases() {
        let c = ClosedFormCost::mlp(2.0);
        assert_eq!(cost_bound_closed_form(c, 3.0, 10.0, 3), 33750.0);
        assert_eq!(cost_bound_closed_form(c, 3.0, 10.0, 0), 0.0);
        let zero = ClosedFormCost {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        };
        for n in 1..6 {
            assert_eq!(cost_bound_closed_form(zero, 1.0, 4.0, n), 4.0);
        }
    }

    #[test]
    fn recursion_below_closed_form_exhaustive() {
        for gamma in [0.0, 1.0, 2.0] {
            for z in [1.0, 10.0] {
                for j in 1..=12u64 {
                    let seq = McSequence::identity();
                    for n in 1..=12i64 {
                        let rec = cost_bound_recursive(CostParams { z_cost: z, gamma }, &seq, n, j).unwrap();
                        let closed = cost_bound_closed_form(ClosedFormCost::mlp(gamma), j as f64, z, n);
                        assert!(
                            rec <= closed * (1.0 + 1e-12),
                            "n={n} j={j} γ={gamma} z={z}: {rec} > {closed}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn heat_recursion_below_generic() {
        for d in 1..20usize {
            for n in 1..=6i64 {
                let seq = McSequence::identity();
                let heat = heat_cost_bound_recursive(HeatCostParams { d }, &seq, n, n as u64).unwrap();
                let generic = cost_bound_recursive(CostParams::heat(d), &seq, n, n as u64).unwrap();
                assert!(heat <= generic);
            }
        }
    }

    #[test]
    fn lemma_ab_examples() {
        assert!(lemma_ab_check(2.0, 3.0, 2));
        assert!(lemma_ab_check(0.0, 5.0, 4));
        assert!(lemma_ab_check(0.0, 0.0, 3));
        assert!(lemma_ab_check(7.0, 0.0, 1));
        assert!(lemma_ab_check(100.0, 100.0, 30));
    }

    #[test]
    fn error_bound_examples() {
        let seq = McSequence::identity();
        let p = ErrorBoundParams {
            c_const: 120f64.sqrt(),
            contraction: 0.0,
            kappa: 1.0,
        };
        let b = error_bound(p, &seq, 4).unwrap();
        let expected = 120f64.sqrt() * (1f64.exp() / 4.0).powi(2);
        assert!((b - expected).abs() < 1e-12);
        assert!((b - 5.06).abs() < 0.01);

        let heat = ErrorBoundParams::heat(2.0, 0.5, 1.0, 1.0);
        let b = error_bound(heat, &seq, 2).unwrap();
        assert!((b - 2.0 * (1f64.exp() * 2.0 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn error_bound_decreases_in_m() {
        let p = ErrorBoundParams {
            c_const: 1.0,
            contraction: 0.3,
            kappa: 1.0,
        };
        let mut prev = f64::INFINITY;
        for m in 1..50u64 {
            let seq = McSequence::explicit(vec![m; 3], m as f64);
            let b = error_bound(p, &seq, 3).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn n_epsilon_is_minimal() {
        let seq = McSequence::identity();
        let p = ErrorBoundParams {
            c_const: 10.0,
            contraction: 0.25,
            kappa: 1.0,
        };
        for eps in [1.0, 0.1, 0.01] {
            let n = n_epsilon(p, &seq, eps, 500).unwrap();
            for k in n..n + 50 {
                assert!(error_bound(p, &seq, k).unwrap() <= eps);
            }
            if n > 1 {
                assert!(error_bound(p, &seq, n - 1).unwrap() > eps);
            }
        }
    }

    proptest! {
        #[test]
        fn lemma_ab_holds(a in 0.0f64..100.0, b in 0.0f64..100.0, n in 1u32..=30) {
            prop_assert!(lemma_ab_check(a, b, n));
        }
    }
}
