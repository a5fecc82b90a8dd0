//! Reference values `y(0, ξ)` independent of the MLP scheme.
//!
//! Three routes: closed forms for special `(f, g)`, a deterministic Picard
//! iteration on a space-time grid for `d = 1`, and naive nested Monte Carlo
//! Picard iteration for tiny configurations.

use std::fs;
use std::path::Path;

use gauss_quad::hermite::GaussHermite;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlpError, Result};
use crate::heat::{sample_level_draw, HeatProblem};
use crate::problems::ProblemSpec;
use crate::rng::{derive_stream_on, Channel, DrawCounter, IndexPath, MasterSeed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    ClosedForm,
    PicardQuadrature,
    PlainMcPicard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub value: f64,
    pub uncertainty: f64,
    pub method: ReferenceMethod,
}

pub fn closed_form_reference(spec: &ProblemSpec) -> Result<ReferenceSolution> {
    Ok(ReferenceSolution {
        value: spec.closed_form_value()?,
        uncertainty: 0.0,
        method: ReferenceMethod::ClosedForm,
    })
}

/// Grid of the quadrature oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub n_t: usize,
    /// Odd, so that ξ is a grid node.
    pub n_x: usize,
    /// Defaults to `8 √T`.
    pub x_half_width: Option<f64>,
    pub quad_nodes: usize,
    pub iters: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid {
            n_t: 65,
            n_x: 513,
            x_half_width: None,
            quad_nodes: 40,
            iters: 30,
        }
    }
}

impl QuadratureGrid {
    /// Same box and rule with twice the spacing in `t` and `x`.
    pub fn coarsened(&self) -> Self {
        QuadratureGrid {
            n_t: (self.n_t - 1) / 2 + 1,
            n_x: (self.n_x - 1) / 2 + 1,
            ..*self
        }
    }
}

/// One resolution of the quadrature Picard iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRun {
    pub grid: QuadratureGrid,
    /// `y_k(0, ξ)` for `k = 1, 2, …`.
    pub iterates_at_xi: Vec<f64>,
    /// `|y_k - y_{k-1}|(0, ξ)`.
    pub gaps_at_xi: Vec<f64>,
    /// `sup |y_k - y_{k-1}|` over the grid.
    pub sup_gaps: Vec<f64>,
}

impl QuadratureRun {
    pub fn value(&self) -> f64 {
        *self.iterates_at_xi.last().expect("at least one iterate")
    }

    pub fn last_gap(&self) -> f64 {
        *self.gaps_at_xi.last().expect("at least one iterate")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReference {
    pub solution: ReferenceSolution,
    pub full: QuadratureRun,
    pub half: QuadratureRun,
}

/// Runs the grid Picard iteration at the requested and at half resolution.
/// The reported uncertainty is the last iterate gap plus the resolution delta.
pub fn picard_quadrature_reference(problem: &HeatProblem, grid: QuadratureGrid) -> Result<QuadratureReference> {
    let full = picard_quadrature(problem, grid)?;
    let half = picard_quadrature(problem, grid.coarsened())?;
    let solution = ReferenceSolution {
        value: full.value(),
        uncertainty: full.last_gap() + (half.value() - full.value()).abs(),
        method: ReferenceMethod::PicardQuadrature,
    };
    Ok(QuadratureReference { solution, full, half })
}

/// Iterates
///
/// ```text
/// y_{k+1}(t, x) = E[g(x + W_{T-t})] + ∫_t^T E[f(s, x + W_{s-t}, y_k(s, x + W_{s-t}))] ds,   y_0 = 0,
/// ```
///
/// on a uniform `(t, x)` grid: Gauss–Hermite for the Gaussian expectations,
/// the trapezoid rule in time, linear interpolation in `x` with constant
/// extrapolation outside the box. Stops early once the sup-norm gap reaches
/// round-off.
pub fn picard_quadrature(problem: &HeatProblem, grid: QuadratureGrid) -> Result<QuadratureRun> {
    problem.validate()?;
    if problem.d != 1 {
        return Err(MlpError::InvalidArgument("the quadrature oracle needs d = 1".into()));
    }
    if grid.n_t < 2 || grid.n_x < 3 || grid.n_x.is_multiple_of(2) || grid.iters == 0 {
        return Err(MlpError::InvalidArgument(format!("unusable grid {grid:?}")));
    }
    let rule = GaussHermite::new(grid.quad_nodes)
        .map_err(|_| MlpError::InvalidArgument(format!("{} Gauss–Hermite nodes", grid.quad_nodes)))?;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let nodes: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(z, w)| (z, w * inv_sqrt_pi))
        .collect();

    let horizon = problem.horizon;
    let xi = problem.xi[0];
    let half_width = grid.x_half_width.unwrap_or(8.0 * horizon.sqrt());
    let (n_t, n_x) = (grid.n_t, grid.n_x);
    let dt = horizon / (n_t - 1) as f64;
    let dx = 2.0 * half_width / (n_x - 1) as f64;
    let xs: Vec<f64> = (0..n_x).map(|b| xi - half_width + b as f64 * dx).collect();
    let times: Vec<f64> = (0..n_t).map(|a| a as f64 * dt).collect();
    let centre = (n_x - 1) / 2;

    let g = |x: f64| -> Result<f64> {
        let v = (problem.g)(&[x]);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(MlpError::EvaluationFault {
                t: horizon,
                x: vec![x],
                v: f64::NAN,
            })
        }
    };

    // E[g(x_b + W_{T - t_a})], exact in g.
    let mut terminal = vec![0.0; n_t * n_x];
    for a in 0..n_t {
        let sd = (2.0 * (horizon - times[a])).sqrt();
        for b in 0..n_x {
            terminal[a * n_x + b] = if a == n_t - 1 {
                g(xs[b])?
            } else {
                let mut acc = 0.0;
                for &(z, w) in &nodes {
                    acc += w * g(xs[b] + sd * z)?;
                }
                acc
            };
        }
    }

    // Per time lag m ≥ 1: node weights and shifts in grid units.
    let lags: Vec<Vec<(f64, f64)>> = (0..n_t)
        .map(|m| {
            nodes
                .iter()
                .map(|&(z, w)| (w, (2.0 * m as f64 * dt).sqrt() * z / dx))
                .collect()
        })
        .collect();

    let mut y = vec![0.0; n_t * n_x];
    let mut h = vec![0.0; n_t * n_x];
    let mut next = vec![0.0; n_t * n_x];
    let mut run = QuadratureRun {
        grid,
        iterates_at_xi: Vec::new(),
        gaps_at_xi: Vec::new(),
        sup_gaps: Vec::new(),
    };
    let mut growing = 0usize;

    for _ in 0..grid.iters {
        for a in 0..n_t {
            for b in 0..n_x {
                let v = y[a * n_x + b];
                let out = (problem.f)(times[a], &[xs[b]], v);
                if !out.is_finite() {
                    return Err(MlpError::EvaluationFault {
                        t: times[a],
                        x: vec![xs[b]],
                        v,
                    });
                }
                h[a * n_x + b] = out;
            }
        }
        next.par_chunks_mut(n_x).enumerate().for_each(|(a, row)| {
            row.copy_from_slice(&terminal[a * n_x..(a + 1) * n_x]);
            for c in a..n_t {
                let weight = if a == n_t - 1 {
                    0.0
                } else if c == a || c == n_t - 1 {
                    0.5 * dt
                } else {
                    dt
                };
                if weight == 0.0 {
                    continue;
                }
                let hc = &h[c * n_x..(c + 1) * n_x];
                if c == a {
                    row.iter_mut().zip(hc).for_each(|(r, v)| *r += weight * v);
                    continue;
                }
                for (b, r) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for &(w, shift) in &lags[c - a] {
                        acc += w * interpolate(hc, b as f64 + shift);
                    }
                    *r += weight * acc;
                }
            }
        });

        let sup_gap = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        let scale = next.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
        let at_xi = next[centre];
        run.gaps_at_xi.push((at_xi - y[centre]).abs());
        run.iterates_at_xi.push(at_xi);
        if let Some(&prev) = run.sup_gaps.last() {
            growing = if sup_gap > prev { growing + 1 } else { 0 };
        }
        run.sup_gaps.push(sup_gap);
        std::mem::swap(&mut y, &mut next);
        if growing >= 3 {
            return Err(MlpError::NonContraction(growing));
        }
        if sup_gap <= 1e-13 * scale {
            break;
        }
    }
    Ok(run)
}

/// Linear interpolation at fractional grid position `pos`, constant outside.
#[inline]
fn interpolate(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= last as f64 {
        return values[last];
    }
    let i = pos as usize;
    let frac = pos - i as f64;
    values[i] + frac * (values[i + 1] - values[i])
}

/// Configuration of the nested Monte Carlo Picard oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainMcConfig {
    pub picard_iters: usize,
    /// Samples per expectation, outermost first; the last entry repeats.
    pub samples: Vec<u64>,
    /// Refuse to run above this many estimated draws.
    pub draw_cap: f64,
}

impl PlainMcConfig {
    pub fn new(picard_iters: usize, samples: Vec<u64>) -> Self {
        PlainMcConfig {
            picard_iters,
            samples,
            draw_cap: 2e9,
        }
    }

    fn samples_at(&self, depth: usize) -> u64 {
        self.samples.get(depth).or(self.samples.last()).copied().unwrap_or(1)
    }

    /// Draws needed: every sample at depth `k` costs `1 + 2d` draws.
    pub fn estimated_draws(&self, d: usize) -> f64 {
        let mut total = 0.0;
        let mut width = 1.0;
        for depth in 0..self.picard_iters {
            width *= self.samples_at(depth) as f64;
            total += width * (1 + 2 * d) as f64;
        }
        total
    }
}

/// Naive nested Monte Carlo for the `picard_iters`-th Picard iterate at
/// `(0, ξ)`. Every expectation is re-estimated from fresh samples at every
/// nesting level, so the cost is the product of the per-level sample counts.
pub fn plain_mc_picard_reference(
    problem: &HeatProblem,
    config: &PlainMcConfig,
    seed: &MasterSeed,
) -> Result<ReferenceSolution> {
    problem.validate()?;
    if config.picard_iters == 0 || config.samples.is_empty() || config.samples.contains(&0) {
        return Err(MlpError::InvalidArgument(
            "need picard_iters ≥ 1 and positive sample counts".into(),
        ));
    }
    let estimated = config.estimated_draws(problem.d);
    if estimated > config.draw_cap {
        return Err(MlpError::BudgetExceeded {
            estimated,
            cap: config.draw_cap,
        });
    }
    let outer = config.samples_at(0);
    let samples: Vec<f64> = (0..outer)
        .into_par_iter()
        .map(|i| {
            let mut path = IndexPath::from_slice(&[i as i64]);
            let mut ledger = DrawCounter::default();
            picard_sample(
                problem,
                config,
                config.picard_iters,
                0.0,
                &problem.xi,
                &mut path,
                seed,
                &mut ledger,
            )
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ReferenceSolution {
        value: mean,
        uncertainty: 3.0 * (var / n).sqrt(),
        method: ReferenceMethod::PlainMcPicard,
    })
}

/// One sample of `g(x + W_τ) + τ f(s + Uτ, x + W_{Uτ}, ŷ_{k-1}(s + Uτ, x + W_{Uτ}))`.
#[allow(clippy::too_many_arguments)]
fn picard_sample(
    problem: &HeatProblem,
    config: &PlainMcConfig,
    k: usize,
    s: f64,
    x: &[f64],
    path: &mut IndexPath,
    seed: &MasterSeed,
    ledger: &mut DrawCounter,
) -> Result<f64> {
    let depth = config.picard_iters - k;
    let tau = problem.horizon - s;
    let mut stream = derive_stream_on(seed, path, Channel::Auxiliary);
    let draw = sample_level_draw(&mut stream, problem.d, tau, true, ledger);
    let end: Vec<f64> = x
        .iter()
        .zip(draw.w_at_t.as_deref().unwrap())
        .map(|(a, b)| a + b)
        .collect();
    let g = (problem.g)(&end);
    let t = s + draw.u * tau;
    let mid: Vec<f64> = x.iter().zip(&draw.w_at_ut).map(|(a, b)| a + b).collect();
    let inner = if k > 1 {
        let count = config.samples_at(depth + 1);
        let base = path.len();
        let mut acc = 0.0;
        for i in 0..count {
            path.push(i as i64);
            acc += picard_sample(problem, config, k - 1, t, &mid, path, seed, ledger)?;
            path.truncate(base);
        }
        acc / count as f64
    } else {
        0.0
    };
    let f = (problem.f)(t, &mid, inner);
    let out = g + tau * f;
    if !out.is_finite() {
        return Err(MlpError::EvaluationFault { t, x: mid, v: inner });
    }
    Ok(out)
}

/// A stored regression target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleTarget {
    pub problem: String,
    pub method: ReferenceMethod,
    pub value: f64,
    pub uncertainty: f64,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
}

pub fn write_oracle_targets(path: &Path, targets: &[OracleTarget]) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(targets).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_oracle_targets(path: &Path) -> std::io::Result<Vec<OracleTarget>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
