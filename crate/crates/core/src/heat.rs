//! MLP approximations for semi-linear heat equations
//!
//! ```text
//! ∂_t y + ½ Δ y + f(t, x, y) = 0,   y(T, x) = g(x).
//! ```
//!
//! With `τ = T - s` and `(U, W) = (U^{(θ,l,i)}, W^{(θ,l,i)})`,
//!
//! ```text
//! Y_n(s, x) = M^{-n} Σ_{i ≤ M^n} g(x + W^{(θ,0,i)}_τ)
//!           + Σ_{l<n} τ M^{-(n-l)} Σ_{i ≤ M^{n-l}} [ f(s + Uτ, x + W_{Uτ}, Y_l^{(θ,l,i)}(s + Uτ, x + W_{Uτ}))
//!                                                  - 1_{l ≥ 1} f(s + Uτ, x + W_{Uτ}, Y_{l-1}^{(θ,-l,i)}(s + Uτ, x + W_{Uτ})) ]
//! ```
//!
//! Brownian values are sampled only at the two times the scheme reads them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MlpError, Result};
use crate::gmlp::{checked_pow, pairwise_sum};
use crate::rng::{derive_stream, derive_stream_on, Channel, DrawCounter, IndexPath, MasterSeed, StreamState};
use crate::sequence::McSequence;

/// Nonlinearity `(t, x, v) ↦ f(t, x, v)`.
pub type Nonlinearity = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
/// Terminal condition `x ↦ g(x)`.
pub type TerminalCondition = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closed-form values of the two moments entering the constant `C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedMoments {
    /// `E |g(ξ + W_T)|²`.
    pub terminal_second_moment: f64,
    /// `∫_0^T E |f(t, ξ + W_t, 0)|² dt`.
    pub source_second_moment_integral: f64,
}

/// One terminal-value problem.
#[derive(Clone)]
pub struct HeatProblem {
    pub name: String,
    pub d: usize,
    pub horizon: f64,
    pub xi: Vec<f64>,
    pub f: Nonlinearity,
    pub g: TerminalCondition,
    /// Lipschitz constant of `f` in `v`.
    pub lipschitz: f64,
    /// Constant in `max{|f(t,x,0)|, |g(x)|} ≤ growth · max{1, ‖x‖^p}`.
    pub growth: f64,
    pub p: f64,
    pub moments: Option<ClosedMoments>,
}

impl fmt::Debug for HeatProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeatProblem")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("horizon", &self.horizon)
            .field("xi", &self.xi)
            .field("lipschitz", &self.lipschitz)
            .field("growth", &self.growth)
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

impl HeatProblem {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        horizon: f64,
        f: impl Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Self {
        HeatProblem {
            name: name.into(),
            d,
            horizon,
            xi: vec![0.0; d],
            f: Arc::new(f),
            g: Arc::new(g),
            lipschitz,
            growth: lipschitz,
            p: 0.0,
            moments: None,
        }
    }

    pub fn with_xi(mut self, xi: Vec<f64>) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_growth(mut self, growth: f64, p: f64) -> Self {
        self.growth = growth;
        self.p = p;
        self
    }

    pub fn with_moments(mut self, moments: ClosedMoments) -> Self {
        self.moments = Some(moments);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(MlpError::InvalidArgument("dimension must be ≥ 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(MlpError::InvalidArgument(format!(
                "horizon {} must be finite and > 0",
                self.horizon
            )));
        }
        if self.xi.len() != self.d {
            return Err(MlpError::InvalidArgument(format!(
                "ξ has {} components, expected {}",
                self.xi.len(),
                self.d
            )));
        }
        if !(self.lipschitz >= 0.0 && self.growth >= 0.0 && self.p >= 0.0) {
            return Err(MlpError::InvalidArgument("L, growth constant and p must be ≥ 0".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn eval_f(&self, t: f64, x: &[f64], v: f64) -> Result<f64> {
        let out = (self.f)(t, x, v);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(MlpError::EvaluationFault { t, x: x.to_vec(), v })
        }
    }

    #[inline]
    pub fn eval_g(&self, x: &[f64]) -> Result<f64> {
        let out = (self.g)(x);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(MlpError::EvaluationFault {
                t: self.horizon,
                x: x.to_vec(),
                v: f64::NAN,
            })
        }
    }
}

/// Realization of `(U, W)` at the times the scheme reads it.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelDraw {
    pub u: f64,
    /// `W_{Uτ}`.
    pub w_at_ut: Vec<f64>,
    /// `W_τ`, sampled only for level-0 samples.
    pub w_at_t: Option<Vec<f64>>,
}

/// Draws `U`, then `W_{Uτ} = √(Uτ) G₁` and, if requested,
/// `W_τ = W_{Uτ} + √((1-U)τ) G₂`.
pub fn sample_level_draw(
    stream: &mut StreamState,
    d: usize,
    tau: f64,
    need_terminal: bool,
    ledger: &mut DrawCounter,
) -> LevelDraw {
    let u = stream.uniform(ledger);
    let first = (u * tau).sqrt();
    let mut w_at_ut = vec![0.0; d];
    stream.fill_normals(&mut w_at_ut, ledger);
    w_at_ut.iter_mut().for_each(|w| *w *= first);
    let w_at_t = need_terminal.then(|| {
        let second = ((1.0 - u) * tau).sqrt();
        let mut w = vec![0.0; d];
        stream.fill_normals(&mut w, ledger);
        w.iter_mut().zip(&w_at_ut).for_each(|(wt, wu)| *wt = wu + second * *wt);
        w
    });
    LevelDraw { u, w_at_ut, w_at_t }
}

struct Scheme<'a> {
    problem: &'a HeatProblem,
    m: u64,
    seed: &'a MasterSeed,
}

impl Scheme<'_> {
    fn eval(&self, n: i64, s: f64, x: &[f64], path: &mut IndexPath, ledger: &mut DrawCounter) -> Result<f64> {
        Ok(self.levels(n, s, x, path, ledger)?.into_iter().fold(0.0, |a, b| a + b))
    }

    /// The `n` level terms of `Y_n`, in level order.
    fn levels(&self, n: i64, s: f64, x: &[f64], path: &mut IndexPath, ledger: &mut DrawCounter) -> Result<Vec<f64>> {
        if n <= 0 {
            return Ok(Vec::new());
        }
        let problem = self.problem;
        let d = problem.d;
        let tau = problem.horizon - s;
        let base = path.len();
        let shifted = |w: &[f64]| -> Vec<f64> { x.iter().zip(w).map(|(a, b)| a + b).collect() };

        // Level 0: g at time τ and f(·, ·, Y_0 = 0) at time Uτ share one Brownian path.
        let count0 = self.m.pow(n as u32);
        let mut level0 = |i: u64| -> Result<f64> {
            path.push_pair(0, i as i64 + 1);
            let mut stream = derive_stream(self.seed, path);
            path.truncate(base);
            let draw = sample_level_draw(&mut stream, d, tau, true, ledger);
            let terminal = draw.w_at_t.as_deref().expect("level-0 draw carries W_τ");
            let g = problem.eval_g(&shifted(terminal))?;
            let t = s + draw.u * tau;
            let f = problem.eval_f(t, &shifted(&draw.w_at_ut), 0.0)?;
            Ok(g + tau * f)
        };
        let mut terms = Vec::with_capacity(n as usize);
        terms.push(pairwise_sum(0, count0, &0.0, &mut level0)? / count0 as f64);

        for l in 1..n {
            let count = self.m.pow((n - l) as u32);
            let mut term = |i: u64| -> Result<f64> {
                let idx = i as i64 + 1;
                path.push_pair(l, idx);
                let mut stream = derive_stream(self.seed, path);
                let draw = sample_level_draw(&mut stream, d, tau, false, ledger);
                let t = s + draw.u * tau;
                let y = shifted(&draw.w_at_ut);
                let upper = self.eval(l, t, &y, path, ledger)?;
                path.truncate(base);
                path.push_pair(-l, idx);
                let lower = self.eval(l - 1, t, &y, path, ledger)?;
                path.truncate(base);
                Ok(problem.eval_f(t, &y, upper)? - problem.eval_f(t, &y, lower)?)
            };
            terms.push(tau * pairwise_sum(0, count, &0.0, &mut term)? / count as f64);
        }
        Ok(terms)
    }
}

/// Evaluates `Y_{n,j}^θ(s, x)` for `θ = path`, adding every draw to `ledger`.
#[allow(clippy::too_many_arguments)]
pub fn eval_mlp(
    problem: &HeatProblem,
    seq: &McSequence,
    n: i64,
    j: u64,
    s: f64,
    x: &[f64],
    path: &IndexPath,
    seed: &MasterSeed,
    ledger: &mut DrawCounter,
) -> Result<f64> {
    Ok(eval_mlp_levels(problem, seq, n, j, s, x, path, seed, ledger)?
        .into_iter()
        .fold(0.0, |a, b| a + b))
}

/// The level terms of `Y_{n,j}^θ(s, x)`: entry 0 is the plain Monte Carlo
/// term, entry `l ≥ 1` is `τ M^{l-n} Σ_i [f(Y_l) - f(Y_{l-1})]`. They sum to
/// [`eval_mlp`] and are independent of one another.
#[allow(clippy::too_many_arguments)]
pub fn eval_mlp_levels(
    problem: &HeatProblem,
    seq: &McSequence,
    n: i64,
    j: u64,
    s: f64,
    x: &[f64],
    path: &IndexPath,
    seed: &MasterSeed,
    ledger: &mut DrawCounter,
) -> Result<Vec<f64>> {
    problem.validate()?;
    if n < -1 {
        return Err(MlpError::InvalidArgument(format!("n = {n} must be ≥ -1")));
    }
    if j == 0 {
        return Err(MlpError::InvalidArgument("j must be ≥ 1".into()));
    }
    if !(0.0..=problem.horizon).contains(&s) {
        return Err(MlpError::InvalidArgument(format!(
            "s = {s} outside [0, {}]",
            problem.horizon
        )));
    }
    if x.len() != problem.d {
        return Err(MlpError::InvalidArgument(format!(
            "x has {} components, expected {}",
            x.len(),
            problem.d
        )));
    }
    if path.is_empty() {
        return Err(MlpError::InvalidArgument("root path must be non-empty".into()));
    }
    let m = seq.try_get(j)?;
    checked_pow(m, n.max(0) as u64)?;
    let scheme = Scheme { problem, m, seed };
    let mut scratch = path.clone();
    scheme.levels(n, s, x, &mut scratch, ledger)
}

/// `Y_{n,n}^0(0, ξ)` on the root path.
pub fn eval_at_origin(
    problem: &HeatProblem,
    seq: &McSequence,
    n: i64,
    seed: &MasterSeed,
    ledger: &mut DrawCounter,
) -> Result<f64> {
    let j = n.max(1) as u64;
    eval_mlp(problem, seq, n, j, 0.0, &problem.xi, &IndexPath::root(), seed, ledger)
}

/// Exact number of draws performed by [`eval_mlp`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawCount {
    pub normals: u128,
    pub uniforms: u128,
}

impl DrawCount {
    pub fn total(&self) -> u128 {
        self.normals + self.uniforms
    }

    pub fn matches(&self, ledger: &DrawCounter) -> bool {
        self.normals == ledger.normals as u128 && self.uniforms == ledger.uniforms as u128
    }
}

/// `N(n) = M^n d + Σ_{l<n} M^{n-l} (N(l) + N(l-1) + d)` normals and
/// `V(n) = Σ_{l<n} M^{n-l} (V(l) + V(l-1) + 1)` uniforms, with
/// `N(-1) = N(0) = V(-1) = V(0) = 0`.
pub fn exact_draw_count(d: usize, seq: &McSequence, n: i64, j: u64) -> Result<DrawCount> {
    if n < -1 {
        return Err(MlpError::InvalidArgument(format!("n = {n} must be ≥ -1")));
    }
    if n <= 0 {
        return Ok(DrawCount::default());
    }
    let m = seq.try_get(j)? as u128;
    let d = d as u128;
    let overflow = || MlpError::InvalidArgument("draw count overflows u128".into());
    let n = n as usize;
    let mut normals = vec![0u128; n + 2];
    let mut uniforms = vec![0u128; n + 2];
    for k in 1..=n {
        let mut nk = m
            .checked_pow(k as u32)
            .and_then(|p| p.checked_mul(d))
            .ok_or_else(overflow)?;
        let mut vk = 0u128;
        for l in 0..k {
            let w = m.checked_pow((k - l) as u32).ok_or_else(overflow)?;
            let per_n = normals[l + 1] + normals[l] + d;
            let per_v = uniforms[l + 1] + uniforms[l] + 1;
            nk = w
                .checked_mul(per_n)
                .and_then(|t| t.checked_add(nk))
                .ok_or_else(overflow)?;
            vk = w
                .checked_mul(per_v)
                .and_then(|t| t.checked_add(vk))
                .ok_or_else(overflow)?;
        }
        normals[k + 1] = nk;
        uniforms[k + 1] = vk;
    }
    Ok(DrawCount {
        normals: normals[n + 1],
        uniforms: uniforms[n + 1],
    })
}

/// `max{1, e^{LT} [ (E|g(ξ+W_T)|²)^{1/2} + √T (∫_0^T E|f(t, ξ+W_t, 0)|² dt)^{1/2} ]}`.
pub fn constant_c_from_moments(problem: &HeatProblem, moments: ClosedMoments) -> f64 {
    let t = problem.horizon;
    let inner = moments.terminal_second_moment.sqrt() + t.sqrt() * moments.source_second_moment_integral.sqrt();
    ((problem.lipschitz * t).exp() * inner).max(1.0)
}

/// The constant `C`, from registered closed-form moments when available and
/// by Monte Carlo otherwise.
pub fn constant_c(problem: &HeatProblem, mc_samples: u64, seed: &MasterSeed) -> Result<f64> {
    match problem.moments {
        Some(m) => Ok(constant_c_from_moments(problem, m)),
        None => constant_c_mc(problem, mc_samples, seed),
    }
}

/// Monte Carlo estimates of the moments entering `C`. The time integral uses
/// `∫_0^T E|f(t, ξ+W_t, 0)|² dt = T E|f(UT, ξ+W_{UT}, 0)|²`.
pub fn estimate_moments(problem: &HeatProblem, mc_samples: u64, seed: &MasterSeed) -> Result<ClosedMoments> {
    problem.validate()?;
    if mc_samples < 1000 {
        return Err(MlpError::InvalidArgument(format!(
            "need ≥ 1000 samples, got {mc_samples}"
        )));
    }
    let d = problem.d;
    let t = problem.horizon;
    let mut ledger = DrawCounter::default();
    let mut stream = derive_stream_on(seed, &IndexPath::from_slice(&[0]), Channel::Auxiliary);
    let mut g_sq = 0.0;
    let mut f_sq = 0.0;
    let mut x = vec![0.0; d];
    for _ in 0..mc_samples {
        let draw = sample_level_draw(&mut stream, d, t, true, &mut ledger);
        for (xi, (&c, &w)) in x.iter_mut().zip(problem.xi.iter().zip(draw.w_at_t.as_deref().unwrap())) {
            *xi = c + w;
        }
        g_sq += problem.eval_g(&x)?.powi(2);
        for (xi, (&c, &w)) in x.iter_mut().zip(problem.xi.iter().zip(&draw.w_at_ut)) {
            *xi = c + w;
        }
        f_sq += problem.eval_f(draw.u * t, &x, 0.0)?.powi(2);
    }
    let moments = ClosedMoments {
        terminal_second_moment: g_sq / mc_samples as f64,
        source_second_moment_integral: t * f_sq / mc_samples as f64,
    };
    if !(moments.terminal_second_moment.is_finite() && moments.source_second_moment_integral.is_finite()) {
        return Err(MlpError::NonFiniteMoment(format!("{moments:?}")));
    }
    Ok(moments)
}

pub fn constant_c_mc(problem: &HeatProblem, mc_samples: u64, seed: &MasterSeed) -> Result<f64> {
    Ok(constant_c_from_moments(
        problem,
        estimate_moments(problem, mc_samples, seed)?,
    ))
}

/// Outcome of a sampled regularity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub samples: u64,
    pub worst_lipschitz_ratio: f64,
    pub worst_growth_ratio: f64,
    pub lipschitz_ok: bool,
    pub growth_ok: bool,
}

/// Probes `|f(t,x,v) - f(t,x,w)| ≤ L |v - w|` and the growth bound at random
/// `(t, x, v, w)` with `x ~ ξ + N(0, 4 I)` and `v, w ~ N(0, 25)`.
pub fn check_regularity(problem: &HeatProblem, samples: u64, seed: &MasterSeed) -> RegularityReport {
    let mut ledger = DrawCounter::default();
    let mut stream = derive_stream_on(seed, &IndexPath::from_slice(&[1]), Channel::Auxiliary);
    let mut worst_l = 0.0f64;
    let mut worst_g = 0.0f64;
    let mut lip_ok = true;
    let mut growth_ok = true;
    for _ in 0..samples {
        let t = stream.uniform(&mut ledger) * problem.horizon;
        let x: Vec<f64> = problem
            .xi
            .iter()
            .map(|c| c + 2.0 * stream.normal(&mut ledger))
            .collect();
        let v = 5.0 * stream.normal(&mut ledger);
        let w = 5.0 * stream.normal(&mut ledger);
        let df = ((problem.f)(t, &x, v) - (problem.f)(t, &x, w)).abs();
        let dv = (v - w).abs();
        if dv > 0.0 {
            worst_l = worst_l.max(df / dv);
        }
        if df > problem.lipschitz * dv * (1.0 + 1e-12) + 1e-12 {
            lip_ok = false;
        }
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let envelope = 1f64.max(norm.powf(problem.p));
        let size = (problem.f)(t, &x, 0.0).abs().max((problem.g)(&x).abs());
        worst_g = worst_g.max(size / envelope);
        if size > problem.growth * envelope * (1.0 + 1e-12) + 1e-12 {
            growth_ok = false;
        }
    }
    RegularityReport {
        samples,
        worst_lipschitz_ratio: worst_l,
        worst_growth_ratio: worst_g,
        lipschitz_ok: lip_ok,
        growth_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn quadratic(d: usize) -> HeatProblem {
        HeatProblem::new(
            "quadratic",
            d,
            1.0,
            |_, _, _| 0.0,
            |x: &[f64]| x.iter().map(|a| a * a).sum(),
            0.0,
        )
        .with_growth(1.0, 2.0)
    }

    fn seed(k: u64) -> MasterSeed {
        MasterSeed::from_u64(77 + k)
    }

    #[test]
    fn order_zero_is_zero() {
        let p = quadratic(3);
        let mut l = DrawCounter::default();
        for n in [-1, 0] {
            let y = eval_mlp(
                &p,
                &McSequence::identity(),
                n,
                2,
                0.3,
                &[1.0, 2.0, 3.0],
                &IndexPath::root(),
                &seed(0),
                &mut l,
            )
            .unwrap();
            assert_eq!(y, 0.0);
        }
        assert_eq!(l.total(), 0);
    }

    #[test]
    fn constant_terminal_is_exact() {
        let p = HeatProblem::new("const", 2, 1.0, |_, _, _| 0.0, |_: &[f64]| 7.0, 0.0);
        for n in 1..=3 {
            let mut l = DrawCounter::default();
            let y = eval_at_origin(&p, &McSequence::identity(), n, &seed(1), &mut l).unwrap();
            assert_eq!(y, 7.0);
        }
    }

    #[test]
    fn zero_tau_draw_is_degenerate() {
        let mut l = DrawCounter::default();
        let mut s = derive_stream(&seed(2), &IndexPath::root());
        let d = sample_level_draw(&mut s, 3, 0.0, true, &mut l);
        assert!(d.w_at_ut.iter().all(|&w| w == 0.0));
        assert!(d.w_at_t.unwrap().iter().all(|&w| w == 0.0));
        assert_eq!(
            l,
            DrawCounter {
                normals: 6,
                uniforms: 1
            }
        );

        let mut l = DrawCounter::default();
        let d = sample_level_draw(&mut s, 4, 1.0, false, &mut l);
        assert!(d.w_at_t.is_none());
        assert_eq!(
            l,
            DrawCounter {
                normals: 4,
                uniforms: 1
            }
        );
    }

    #[test]
    fn brownian_covariance_at_uniform_time() {
        // E[W_U W_1] = E[min(U, 1)] = 1/2.
        let mut l = DrawCounter::default();
        let mut s = derive_stream(&seed(3), &IndexPath::root());
        let n = 1_000_000;
        let prods: Vec<f64> = (0..n)
            .map(|_| {
                let d = sample_level_draw(&mut s, 1, 1.0, true, &mut l);
                d.w_at_ut[0] * d.w_at_t.unwrap()[0]
            })
            .collect();
        let mean = prods.iter().sum::<f64>() / n as f64;
        let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn exact_counts_small_cases() {
        let seq = McSequence::explicit(vec![2], 2.0);
        assert_eq!(
            exact_draw_count(3, &seq, 1, 1).unwrap(),
            DrawCount {
                normals: 12,
                uniforms: 2
            }
        );
        assert_eq!(exact_draw_count(3, &seq, 0, 1).unwrap(), DrawCount::default());
        let seq = McSequence::explicit(vec![1, 2, 3], 1.0);
        assert!(exact_draw_count(10, &seq, 3, 3).unwrap().total() <= 33750);
    }

    #[test]
    fn ledger_matches_exact_count() {
        let seq = McSequence::explicit(vec![2], 2.0);
        let p = quadratic(3);
        let mut l = DrawCounter::default();
        eval_mlp(&p, &seq, 1, 1, 0.0, &p.xi, &IndexPath::root(), &seed(4), &mut l).unwrap();
        assert_eq!(
            l,
            DrawCounter {
                normals: 12,
                uniforms: 2
            }
        );

        for d in [1, 5] {
            let p = quadratic(d);
            for n in 1..=3i64 {
                let mut l = DrawCounter::default();
                eval_at_origin(&p, &McSequence::identity(), n, &seed(5), &mut l).unwrap();
                assert!(exact_draw_count(d, &McSequence::identity(), n, n as u64)
                    .unwrap()
                    .matches(&l));
            }
        }
    }

    #[test]
    fn fault_is_reported() {
        let p = HeatProblem::new("bad", 1, 1.0, |_, _, v| 1.0 / (v - v), |_: &[f64]| 1.0, 1.0);
        let mut l = DrawCounter::default();
        let err = eval_at_origin(&p, &McSequence::identity(), 1, &seed(6), &mut l).unwrap_err();
        assert!(matches!(err, MlpError::EvaluationFault { .. }));
    }

    #[test]
    fn bad_arguments_rejected() {
        let p = quadratic(2);
        let mut l = DrawCounter::default();
        let seq = McSequence::identity();
        assert!(eval_mlp(&p, &seq, 1, 1, 1.5, &[0.0, 0.0], &IndexPath::root(), &seed(0), &mut l).is_err());
        assert!(eval_mlp(&p, &seq, 1, 1, 0.0, &[0.0], &IndexPath::root(), &seed(0), &mut l).is_err());
        assert!(eval_mlp(&p, &seq, -2, 1, 0.0, &[0.0, 0.0], &IndexPath::root(), &seed(0), &mut l).is_err());
    }

    #[test]
    fn coupled_f_evaluations_share_the_point() {
        type Call = (f64, Vec<f64>, f64);
        let log: Arc<Mutex<Vec<Call>>> = Arc::default();
        let sink = log.clone();
        let p = HeatProblem::new(
            "instrumented",
            2,
            1.0,
            move |t, x: &[f64], v| {
                sink.lock().unwrap().push((t, x.to_vec(), v));
                (0.5 * v).sin()
            },
            |x: &[f64]| x[0],
            0.5,
        );
        let seq = McSequence::identity();
        let n = 3i64;
        let mut l = DrawCounter::default();
        eval_at_origin(&p, &seq, n, &seed(7), &mut l).unwrap();
        let calls = log.lock().unwrap();

        // Each level ≥ 1 sample makes two consecutive calls at one point; every
        // other call is a level-0 call with v = 0.
        let counts = exact_draw_count(2, &seq, n, n as u64).unwrap();
        let level0_samples = (counts.normals - counts.uniforms * 2) / 2;
        let coupled_samples = counts.uniforms - level0_samples;
        let mut pairs = 0u128;
        let mut k = 0;
        while k + 1 < calls.len() {
            let (t0, x0, _) = &calls[k];
            let (t1, x1, _) = &calls[k + 1];
            if t0 == t1 && x0 == x1 {
                pairs += 1;
                k += 2;
            } else {
                k += 1;
            }
        }
        assert_eq!(pairs, coupled_samples);
        assert_eq!(calls.len() as u128, level0_samples + 2 * coupled_samples);
    }

    #[test]
    fn quadratic_is_unbiased() {
        let p = quadratic(1);
        let seq = McSequence::explicit(vec![4, 4], 4.0);
        let runs = 10_000u64;
        let ys: Vec<f64> = (0..runs)
            .map(|r| {
                let mut l = DrawCounter::default();
                eval_mlp(
                    &p,
                    &seq,
                    2,
                    2,
                    0.0,
                    &[0.0],
                    &IndexPath::root(),
                    &seed(0).derive("run", r),
                    &mut l,
                )
                .unwrap()
            })
            .collect();
        let mean = ys.iter().sum::<f64>() / runs as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn first_order_matches_plain_mc() {
        // With f ≡ 0, E[Y_{1,j}(0, ξ)] = E[g(ξ + W_T)].
        let g = |x: &[f64]| (x[0] + 0.3).cos() + x[1] * x[1];
        let p = HeatProblem::new("cosine", 2, 1.0, |_, _, _| 0.0, g, 0.0).with_xi(vec![0.2, -0.1]);
        let seq = McSequence::explicit(vec![3], 3.0);
        let runs = 10_000u64;
        let ys: Vec<f64> = (0..runs)
            .map(|r| {
                let mut l = DrawCounter::default();
                eval_mlp(
                    &p,
                    &seq,
                    1,
                    1,
                    0.0,
                    &p.xi,
                    &IndexPath::root(),
                    &seed(1).derive("run", r),
                    &mut l,
                )
                .unwrap()
            })
            .collect();
        let mean = ys.iter().sum::<f64>() / runs as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;

        let mut l = DrawCounter::default();
        let mut s = derive_stream_on(&seed(2), &IndexPath::root(), Channel::Auxiliary);
        let big = 1_000_000;
        let samples: Vec<f64> = (0..big)
            .map(|_| {
                let w = s.normal_vec(2, &mut l);
                g(&[0.2 + w[0], -0.1 + w[1]])
            })
            .collect();
        let ref_mean = samples.iter().sum::<f64>() / big as f64;
        let ref_var = samples.iter().map(|y| (y - ref_mean).powi(2)).sum::<f64>() / (big - 1) as f64;
        let se = (var / runs as f64 + ref_var / big as f64).sqrt();
        assert!((mean - ref_mean).abs() < 3.0 * se, "{mean} vs {ref_mean} ± {se}");
    }

    #[test]
    fn constant_c_examples() {
        let mut p = quadratic(10);
        let c = constant_c_mc(&p, 1_000_000, &seed(8)).unwrap();
        assert!((c - 120f64.sqrt()).abs() < 0.05, "{c}");
        p.moments = Some(ClosedMoments {
            terminal_second_moment: 120.0,
            source_second_moment_integral: 0.0,
        });
        assert_eq!(constant_c(&p, 1000, &seed(8)).unwrap(), 120f64.sqrt());

        let zero = HeatProblem::new("zero", 3, 1.0, |_, _, _| 0.0, |_: &[f64]| 0.0, 0.0);
        assert_eq!(constant_c_mc(&zero, 1000, &seed(9)).unwrap(), 1.0);
        assert!(constant_c_mc(&zero, 999, &seed(9)).is_err());

        // f(v) = a v vanishes at v = 0, so C = e^{|a| T} (E g²)^{1/2}.
        let a = 0.5;
        let lin = HeatProblem::new(
            "linear",
            5,
            1.0,
            move |_, _, v| a * v,
            |x: &[f64]| x.iter().map(|v| v * v).sum(),
            a,
        );
        let c = constant_c_mc(&lin, 1_000_000, &seed(10)).unwrap();
        let expected = a.exp() * 35f64.sqrt();
        assert!((c - expected).abs() / expected < 0.01, "{c} vs {expected}");
    }

    #[test]
    fn regularity_checks() {
        let p = quadratic(3);
        let r = check_regularity(&p, 10_000, &seed(11));
        assert!(r.lipschitz_ok && r.growth_ok, "{r:?}");

        let sine =
            HeatProblem::new("sine", 1, 1.0, |_, _, v| v.sin(), |x: &[f64]| x[0] * x[0], 1.0).with_growth(1.0, 2.0);
        assert!(check_regularity(&sine, 10_000, &seed(12)).lipschitz_ok);

        let understated = HeatProblem::new("bad", 1, 1.0, |_, _, v| 2.0 * v, |_: &[f64]| 0.0, 1.0);
        assert!(!check_regularity(&understated, 1000, &seed(13)).lipschitz_ok);
    }
}
