//! Monte Carlo checks of the two contraction inequalities the error analysis
//! rests on. They are statistical tests: both sides carry sampling error and a
//! pass means "not contradicted at four standard errors".

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlpError, Result};
use crate::heat::{eval_mlp, sample_level_draw, HeatProblem};
use crate::problems::ProblemSpec;
use crate::rng::{derive_stream_on, Channel, DrawCounter, IndexPath, MasterSeed};
use crate::sequence::McSequence;

/// Closed-form test function `c + a t + Σ_i b_i x_i + q ‖x‖²`; missing `b_i`
/// are zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub time: f64,
    #[serde(default)]
    pub linear: Vec<f64>,
    #[serde(default)]
    pub quadratic: f64,
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction {
            constant: c,
            ..Default::default()
        }
    }

    /// `x ↦ x_1`.
    pub fn first_coordinate() -> Self {
        TestFunction {
            linear: vec![1.0],
            ..Default::default()
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(b, v)| b * v).sum();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        self.constant + self.time * t + lin + self.quadratic * sq
    }
}

/// One draw of the random evaluation functional `ψ_k`: `ψ_0 v = v(0, ξ)`,
/// `ψ_k v = √(U^{k-1}/(k-1)!) v(UT, ξ + W_{UT})` for `k ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiSample {
    pub k: u32,
    pub u: f64,
    /// `W_{UT}`.
    pub w: Vec<f64>,
    pub weight: f64,
}

impl PsiSample {
    pub fn sample(
        k: u32,
        problem: &HeatProblem,
        seed: &MasterSeed,
        path: &IndexPath,
        ledger: &mut DrawCounter,
    ) -> Self {
        if k == 0 {
            return PsiSample {
                k,
                u: 0.0,
                w: vec![0.0; problem.d],
                weight: 1.0,
            };
        }
        let mut stream = derive_stream_on(seed, path, Channel::Functional);
        let draw = sample_level_draw(&mut stream, problem.d, problem.horizon, false, ledger);
        let factorial: f64 = (1..k).map(f64::from).product();
        PsiSample {
            k,
            u: draw.u,
            w: draw.w_at_ut,
            weight: (draw.u.powi(k as i32 - 1) / factorial).sqrt(),
        }
    }

    /// The evaluation point `(s, x)`.
    pub fn point(&self, problem: &HeatProblem) -> (f64, Vec<f64>) {
        let x = problem.xi.iter().zip(&self.w).map(|(a, b)| a + b).collect();
        (self.u * problem.horizon, x)
    }
}

/// Serialized outcome of a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub pass: bool,
    pub seed: u64,
    pub config: serde_json::Value,
}

/// `lhs ≤ rhs` up to four combined standard errors.
pub fn inequality_holds(lhs: f64, rhs: f64, se_lhs: f64, se_rhs: f64) -> bool {
    lhs <= rhs + 4.0 * (se_lhs * se_lhs + se_rhs * se_rhs).sqrt() + 1e-12 * rhs.abs()
}

/// Runs `check(mc)`, and once more with `2 mc` if it fails.
pub fn retry_doubled(mc: u64, check: impl Fn(u64) -> Result<CheckReport>) -> Result<CheckReport> {
    let first = check(mc)?;
    if first.pass {
        return Ok(first);
    }
    check(2 * mc)
}

/// Mean and standard error of the two components of `term(i)`, `i < mc`.
/// Chunks are reduced in index order, so the result ignores the thread count.
fn paired_means(mc: u64, term: impl Fn(u64) -> Result<(f64, f64)> + Sync) -> Result<[(f64, f64); 2]> {
    const CHUNK: u64 = 4096;
    let chunks: Vec<[f64; 4]> = (0..mc.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = [0.0; 4];
            for i in c * CHUNK..((c + 1) * CHUNK).min(mc) {
                let (a, b) = term(i)?;
                acc[0] += a;
                acc[1] += a * a;
                acc[2] += b;
                acc[3] += b * b;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = [0.0; 4];
    for c in &chunks {
        total.iter_mut().zip(c).for_each(|(t, v)| *t += v);
    }
    let n = mc as f64;
    let summary = |s: f64, s2: f64| {
        let m = s / n;
        let var = ((s2 / n - m * m) * n / (n - 1.0)).max(0.0);
        (m, (var / n).sqrt())
    };
    let out = [summary(total[0], total[1]), summary(total[2], total[3])];
    if out.iter().any(|(m, s)| !m.is_finite() || !s.is_finite()) {
        return Err(MlpError::NonFiniteMoment("check sample".into()));
    }
    Ok(out)
}

fn shifted(x: &[f64], w: &[f64]) -> Vec<f64> {
    x.iter().zip(w).map(|(a, b)| a + b).collect()
}

/// `E|ψ_k(Φ_n(u, v, Z))|² ≤ (LT)² E|ψ_{k+1}(u - v)|²` for `n ≥ 1`, where
/// `[Φ_n(u, v, Z)](s, x) = τ [f(s + Uτ, X, u(s + Uτ, X)) - f(s + Uτ, X, v(s + Uτ, X))]`,
/// `τ = T - s`, `X = x + W_{Uτ}`. The two sides use independent `ψ` draws;
/// `Z` is independent of `ψ_k`.
pub fn hypothesis_ii_check(
    problem: &HeatProblem,
    u: &TestFunction,
    v: &TestFunction,
    k: u32,
    mc: u64,
    seed: u64,
) -> Result<CheckReport> {
    problem.validate()?;
    if mc < 2 {
        return Err(MlpError::InvalidArgument("mc must be ≥ 2".into()));
    }
    let master = MasterSeed::from_u64(seed);
    let d = problem.d;
    let [(lhs, se_lhs), (rhs_raw, se_rhs_raw)] = paired_means(mc, |i| {
        let mut ledger = DrawCounter::default();
        let i = i as i64;

        let psi = PsiSample::sample(k, problem, &master, &IndexPath::from_slice(&[1, i]), &mut ledger);
        let (s, x) = psi.point(problem);
        let tau = problem.horizon - s;
        let mut z = derive_stream_on(&master, &IndexPath::from_slice(&[1, i]), Channel::Auxiliary);
        let draw = sample_level_draw(&mut z, d, tau, false, &mut ledger);
        let t = s + draw.u * tau;
        let y = shifted(&x, &draw.w_at_ut);
        let phi = tau * (problem.eval_f(t, &y, u.eval(t, &y))? - problem.eval_f(t, &y, v.eval(t, &y))?);
        let left = (psi.weight * phi).powi(2);

        let psi = PsiSample::sample(k + 1, problem, &master, &IndexPath::from_slice(&[2, i]), &mut ledger);
        let (s, x) = psi.point(problem);
        let right = (psi.weight * (u.eval(s, &x) - v.eval(s, &x))).powi(2);
        Ok((left, right))
    })?;
    let factor = (problem.lipschitz * problem.horizon).powi(2);
    let (rhs, se_rhs) = (factor * rhs_raw, factor * se_rhs_raw);
    Ok(CheckReport {
        check: "hypothesis_ii".into(),
        lhs,
        rhs,
        se_lhs,
        se_rhs,
        pass: inequality_holds(lhs, rhs, se_lhs, se_rhs),
        seed,
        config: serde_json::json!({
            "problem": problem.name, "d": d, "k": k, "mc": mc, "u": u, "v": v,
            "note": "Monte Carlo test of the inequality, not a proof",
        }),
    })
}

/// Inner sample count per half of the nested estimate in [`hypothesis_iii_check`].
pub const INNER_SAMPLES: u64 = 8;

/// `E|ψ_k(y - Σ_{l<n} E Φ_l(Y_{l,j}, Y_{l-1,j}, Z))|² ≤ (LT)² E|ψ_{k+1}(Y_{n-1,j} - y)|²`
/// on a problem with closed-form `y`.
///
/// The inner sum telescopes to `E[g(x + W_τ) + τ f(s + Uτ, X, Y_{n-1,j}(s + Uτ, X))]`
/// and `y` solves the same fixed-point equation, so the argument of `ψ_k` is
/// `h(s, x) = τ E[f(·, X, y) - f(·, X, Y_{n-1,j})]`. It is estimated by two
/// independent halves of [`INNER_SAMPLES`] each; `ĥ_A ĥ_B` is unbiased for `h²`.
pub fn hypothesis_iii_check(
    spec: &ProblemSpec,
    seq: &McSequence,
    n: i64,
    j: u64,
    k: u32,
    mc: u64,
    seed: u64,
) -> Result<CheckReport> {
    if n < 1 || j < 1 {
        return Err(MlpError::InvalidArgument("need n, j ≥ 1".into()));
    }
    if mc < 2 {
        return Err(MlpError::InvalidArgument("mc must be ≥ 2".into()));
    }
    if !spec.has_closed_form() {
        return Err(MlpError::UnknownProblem(spec.label()));
    }
    let problem = spec.build()?;
    let exact = |s: f64, x: &[f64]| spec.closed_form_solution(s, x).expect("checked above");
    let master = MasterSeed::from_u64(seed);
    let d = problem.d;
    let horizon = problem.horizon;
    let m = seq.try_get(j)? as f64;
    // Each Y_{n-1,j} evaluation costs at most (5M)^{n-1} d draws.
    let per_eval = (5.0 * m).powi(n as i32 - 1) * d as f64 + d as f64 + 1.0;
    let estimated = mc as f64 * (2 * INNER_SAMPLES + 1) as f64 * per_eval;
    let cap = 5e9;
    if estimated > cap {
        return Err(MlpError::BudgetExceeded { estimated, cap });
    }

    let [(lhs, se_lhs), (rhs_raw, se_rhs_raw)] = paired_means(mc, |i| {
        let mut ledger = DrawCounter::default();
        let i = i as i64;

        let psi = PsiSample::sample(k, &problem, &master, &IndexPath::from_slice(&[1, i]), &mut ledger);
        let (s, x) = psi.point(&problem);
        let tau = horizon - s;
        let mut halves = [0.0; 2];
        for (h, half) in halves.iter_mut().enumerate() {
            for q in 0..INNER_SAMPLES as i64 {
                let path = IndexPath::from_slice(&[1, i, h as i64, q]);
                let mut z = derive_stream_on(&master, &path, Channel::Auxiliary);
                let draw = sample_level_draw(&mut z, d, tau, false, &mut ledger);
                let t = s + draw.u * tau;
                let y = shifted(&x, &draw.w_at_ut);
                let approx = eval_mlp(&problem, seq, n - 1, j, t, &y, &path, &master, &mut ledger)?;
                *half += problem.eval_f(t, &y, exact(t, &y))? - problem.eval_f(t, &y, approx)?;
            }
            *half *= tau / INNER_SAMPLES as f64;
        }
        let left = psi.weight * psi.weight * halves[0] * halves[1];

        let path = IndexPath::from_slice(&[2, i]);
        let psi = PsiSample::sample(k + 1, &problem, &master, &path, &mut ledger);
        let (s, x) = psi.point(&problem);
        let approx = eval_mlp(&problem, seq, n - 1, j, s, &x, &path, &master, &mut ledger)?;
        let right = (psi.weight * (approx - exact(s, &x))).powi(2);
        Ok((left, right))
    })?;
    let factor = (problem.lipschitz * horizon).powi(2);
    let (rhs, se_rhs) = (factor * rhs_raw, factor * se_rhs_raw);
    Ok(CheckReport {
        check: "hypothesis_iii".into(),
        lhs,
        rhs,
        se_lhs,
        se_rhs,
        pass: inequality_holds(lhs, rhs, se_lhs, se_rhs),
        seed,
        config: serde_json::json!({
            "problem": spec, "n": n, "j": j, "M_j": m, "k": k, "mc": mc, "inner": INNER_SAMPLES,
            "note": "Monte Carlo test of the inequality with nested inner expectations, not a proof",
        }),
    })
}
