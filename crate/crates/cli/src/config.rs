use std::path::{Path, PathBuf};

use mlp_core::{CostParams, McSequence, PlainMcConfig, ProblemSpec, QuadratureGrid, SequenceRule, TestFunction};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest `n_max` accepted without `--i-know`: the scheme's cost grows like `(5 M_n)^n d`.
pub const N_MAX_GUARD: u32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default = "default_sequence")]
    pub sequence: SequenceRule,
    /// Order used by `run`; defaults to `n_max`.
    #[serde(default)]
    pub n: Option<i64>,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Slack `δ` in the complexity exponents `2(1 + δ)` and `1 + p(1 + δ)`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub oracle: OracleChoice,
    /// Samples for the Monte Carlo estimate of the constant `C` when the
    /// problem carries no closed-form moments.
    #[serde(default = "default_c_samples")]
    pub c_samples: u64,
    #[serde(default)]
    pub complexity: ComplexityConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_sequence() -> SequenceRule {
    SequenceRule::Identity
}
fn default_n_max() -> u32 {
    4
}
fn default_runs() -> usize {
    100
}
fn default_delta() -> f64 {
    0.1
}
fn default_c_samples() -> u64 {
    1_000_000
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemSpec::linear(5, 0.5),
            sequence: default_sequence(),
            n: None,
            n_max: default_n_max(),
            runs: default_runs(),
            seed: None,
            delta: default_delta(),
            output_dir: None,
            oracle: OracleChoice::default(),
            c_samples: default_c_samples(),
            complexity: ComplexityConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// Where the reference value `y(0, ξ)` comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleChoice {
    /// Closed form if registered, otherwise the quadrature oracle for `d = 1`.
    #[default]
    Auto,
    ClosedForm,
    Quadrature {
        #[serde(default)]
        grid: GridConfig,
    },
    PlainMc {
        picard_iters: usize,
        samples: Vec<u64>,
        #[serde(default)]
        draw_cap: Option<f64>,
    },
    /// A previously computed value.
    Fixed {
        value: f64,
        uncertainty: f64,
    },
}

impl OracleChoice {
    pub fn plain_mc_config(&self) -> Option<PlainMcConfig> {
        match self {
            OracleChoice::PlainMc {
                picard_iters,
                samples,
                draw_cap,
            } => {
                let mut cfg = PlainMcConfig::new(*picard_iters, samples.clone());
                if let Some(cap) = draw_cap {
                    cfg.draw_cap = *cap;
                }
                Some(cfg)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "grid_n_t")]
    pub n_t: usize,
    #[serde(default = "grid_n_x")]
    pub n_x: usize,
    #[serde(default)]
    pub x_half_width: Option<f64>,
    #[serde(default = "grid_nodes")]
    pub quad_nodes: usize,
    #[serde(default = "grid_iters")]
    pub iters: usize,
}

fn grid_n_t() -> usize {
    QuadratureGrid::default().n_t
}
fn grid_n_x() -> usize {
    QuadratureGrid::default().n_x
}
fn grid_nodes() -> usize {
    QuadratureGrid::default().quad_nodes
}
fn grid_iters() -> usize {
    QuadratureGrid::default().iters
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = QuadratureGrid::default();
        GridConfig {
            n_t: g.n_t,
            n_x: g.n_x,
            x_half_width: g.x_half_width,
            quad_nodes: g.quad_nodes,
            iters: g.iters,
        }
    }
}

impl From<&GridConfig> for QuadratureGrid {
    fn from(g: &GridConfig) -> Self {
        QuadratureGrid {
            n_t: g.n_t,
            n_x: g.n_x,
            x_half_width: g.x_half_width,
            quad_nodes: g.quad_nodes,
            iters: g.iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityConfig {
    /// Dimensions of the sweep.
    #[serde(default = "sweep_dims")]
    pub d_sweep: Vec<usize>,
    /// Order used for every dimension of the sweep.
    #[serde(default = "sweep_n")]
    pub sweep_n: u32,
    #[serde(default = "sweep_runs")]
    pub sweep_runs: usize,
    /// RMSE at which the sweep interpolates the cost.
    #[serde(default = "sweep_target")]
    pub target_rmse: f64,
    /// Tolerances for the `N_ε` table.
    #[serde(default = "epsilons")]
    pub epsilons: Vec<f64>,
}

fn sweep_dims() -> Vec<usize> {
    vec![1, 5, 10, 20]
}
fn sweep_n() -> u32 {
    3
}
fn sweep_runs() -> usize {
    50
}
fn sweep_target() -> f64 {
    0.5
}
fn epsilons() -> Vec<f64> {
    vec![1.0, 0.5, 0.25]
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            d_sweep: sweep_dims(),
            sweep_n: sweep_n(),
            sweep_runs: sweep_runs(),
            target_rmse: sweep_target(),
            epsilons: epsilons(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Sequence validated by the suite; defaults to the run sequence.
    #[serde(default)]
    pub sequence: Option<SequenceRule>,
    #[serde(default = "verify_j_max")]
    pub j_max: u64,
    /// Generic cost parameters for the cost-bound chain; default `𝔷 = d`, `γ = 2`.
    #[serde(default)]
    pub cost: Option<CostParams>,
    #[serde(default = "verify_lemma_samples")]
    pub lemma_samples: u64,
    #[serde(default = "verify_hyp2_mc")]
    pub hypothesis_ii_mc: u64,
    #[serde(default = "verify_hyp3_mc")]
    pub hypothesis_iii_mc: u64,
    /// `(u, v, k)` triples for the second hypothesis.
    #[serde(default = "verify_pairs")]
    pub pairs: Vec<TestPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPair {
    pub u: TestFunction,
    pub v: TestFunction,
    pub k: u32,
}

fn verify_j_max() -> u64 {
    50
}
fn verify_lemma_samples() -> u64 {
    10_000
}
fn verify_hyp2_mc() -> u64 {
    200_000
}
fn verify_hyp3_mc() -> u64 {
    20_000
}
pub fn verify_pairs() -> Vec<TestPair> {
    vec![
        TestPair {
            u: TestFunction::first_coordinate(),
            v: TestFunction::default(),
            k: 0,
        },
        TestPair {
            u: TestFunction {
                quadratic: 1.0,
                ..Default::default()
            },
            v: TestFunction::constant(1.0),
            k: 1,
        },
        TestPair {
            u: TestFunction {
                constant: 2.0,
                time: 1.0,
                ..Default::default()
            },
            v: TestFunction {
                linear: vec![0.5, -0.5],
                ..Default::default()
            },
            k: 2,
        },
        TestPair {
            u: TestFunction {
                quadratic: 0.5,
                ..Default::default()
            },
            v: TestFunction {
                quadratic: 0.5,
                constant: -3.0,
                ..Default::default()
            },
            k: 3,
        },
    ]
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            sequence: None,
            j_max: verify_j_max(),
            cost: None,
            lemma_samples: verify_lemma_samples(),
            hypothesis_ii_mc: verify_hyp2_mc(),
            hypothesis_iii_mc: verify_hyp3_mc(),
            pairs: verify_pairs(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn sequence(&self) -> McSequence {
        McSequence::from_rule(self.sequence.clone())
    }

    /// Rejects configs that are malformed or would run away.
    pub fn validate(&self, allow_large: bool) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let p = &self.problem;
        if p.d == 0 {
            return bad("problem.d must be ≥ 1".into());
        }
        if !(p.horizon.is_finite() && p.horizon > 0.0) {
            return bad(format!("problem.T = {} must be finite and positive", p.horizon));
        }
        if let Some(xi) = &p.xi {
            if xi.len() != p.d || xi.iter().any(|v| !v.is_finite()) {
                return bad(format!("problem.xi must hold {} finite values", p.d));
            }
        }
        if p.lipschitz.is_some_and(|l| !(l.is_finite() && l >= 0.0)) || p.p.is_some_and(|v| !v.is_finite()) {
            return bad("problem.L and problem.p must be finite, L ≥ 0".into());
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return bad(format!("delta = {} must be finite and ≥ 0", self.delta));
        }
        if self.n_max == 0 {
            return bad("n_max must be ≥ 1".into());
        }
        if self.n_max > N_MAX_GUARD && !allow_large {
            return bad(format!(
                "n_max = {} exceeds {N_MAX_GUARD}; pass --i-know to run anyway",
                self.n_max
            ));
        }
        if let Some(n) = self.n {
            if n < 0 || (n as u32 > N_MAX_GUARD && !allow_large) {
                return bad(format!("n = {n} must lie in 0..={N_MAX_GUARD} (or pass --i-know)"));
            }
        }
        if self.runs < 2 {
            return bad("runs must be ≥ 2".into());
        }
        match &self.sequence {
            SequenceRule::Linear { kappa } if !(kappa.is_finite() && *kappa >= 1.0) => {
                return bad(format!("sequence kappa = {kappa} must be finite and ≥ 1"));
            }
            SequenceRule::Explicit { values, .. } if values.is_empty() => {
                return bad("explicit sequence needs at least one value".into());
            }
            _ => {}
        }
        let c = &self.complexity;
        if c.d_sweep.contains(&0)
            || c.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || !(c.target_rmse.is_finite() && c.target_rmse > 0.0)
        {
            return bad("complexity.d_sweep entries must be ≥ 1, epsilons and target_rmse positive".into());
        }
        if let OracleChoice::Fixed { value, uncertainty } = self.oracle {
            if !value.is_finite() || !(uncertainty.is_finite() && uncertainty >= 0.0) {
                return bad("fixed oracle needs a finite value and uncertainty ≥ 0".into());
            }
        }
        Ok(())
    }
}
