//! Named, serializable problem definitions.

use serde::{Deserialize, Serialize};

use crate::error::{MlpError, Result};
use crate::heat::{ClosedMoments, HeatProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityTag {
    /// `f ≡ 0`.
    Zero,
    /// `f(t, x, v) = a v`.
    Linear { a: f64 },
    /// `f(t, x, v) = sin(v)`.
    Sine,
}

impl NonlinearityTag {
    pub fn name(&self) -> &'static str {
        match self {
            NonlinearityTag::Zero => "zero",
            NonlinearityTag::Linear { .. } => "linear",
            NonlinearityTag::Sine => "sine",
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            NonlinearityTag::Zero => 0.0,
            NonlinearityTag::Linear { a } => a.abs(),
            NonlinearityTag::Sine => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalTag {
    /// `g(x) = ‖x‖²`.
    Quadratic,
    /// `g ≡ c`.
    Constant { c: f64 },
}

impl TerminalTag {
    pub fn name(&self) -> &'static str {
        match self {
            TerminalTag::Quadratic => "quadratic",
            TerminalTag::Constant { .. } => "constant",
        }
    }

    fn growth(&self) -> (f64, f64) {
        match self {
            TerminalTag::Quadratic => (1.0, 2.0),
            TerminalTag::Constant { c } => (c.abs(), 0.0),
        }
    }
}

/// A problem from the built-in family: `d`, `T`, `ξ`, tagged `f` and `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Defaults to the origin.
    #[serde(default)]
    pub xi: Option<Vec<f64>>,
    pub f: NonlinearityTag,
    pub g: TerminalTag,
    /// Overrides the Lipschitz constant derived from `f`.
    #[serde(default, rename = "L")]
    pub lipschitz: Option<f64>,
    /// Overrides the growth exponent derived from `g`.
    #[serde(default)]
    pub p: Option<f64>,
}

impl ProblemSpec {
    pub fn new(d: usize, horizon: f64, f: NonlinearityTag, g: TerminalTag) -> Self {
        ProblemSpec {
            name: None,
            d,
            horizon,
            xi: None,
            f,
            g,
            lipschitz: None,
            p: None,
        }
    }

    /// `f ≡ 0`, `g = ‖·‖²`, `T = 1`.
    pub fn quadratic(d: usize) -> Self {
        ProblemSpec::new(d, 1.0, NonlinearityTag::Zero, TerminalTag::Quadratic).named("quadratic")
    }

    /// `f(v) = a v`, `g = ‖·‖²`, `T = 1`.
    pub fn linear(d: usize, a: f64) -> Self {
        ProblemSpec::new(d, 1.0, NonlinearityTag::Linear { a }, TerminalTag::Quadratic).named("linear")
    }

    /// `f(v) = sin v`, `g = ‖·‖²`, `T = 1`.
    pub fn sine(d: usize) -> Self {
        ProblemSpec::new(d, 1.0, NonlinearityTag::Sine, TerminalTag::Quadratic).named("sine")
    }

    /// `f ≡ 0`, `g ≡ c`, `T = 1`.
    pub fn constant(d: usize, c: f64) -> Self {
        ProblemSpec::new(d, 1.0, NonlinearityTag::Zero, TerminalTag::Constant { c }).named("constant")
    }

    /// Looks up one of the registered presets.
    pub fn preset(name: &str, d: usize) -> Option<Self> {
        match name {
            "quadratic" => Some(Self::quadratic(d)),
            "linear" => Some(Self::linear(d, 0.5)),
            "sine" => Some(Self::sine(d)),
            "constant" => Some(Self::constant(d, 7.0)),
            _ => None,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn with_dimension(&self, d: usize) -> Self {
        let mut out = self.clone();
        out.d = d;
        out.xi = self.xi.as_ref().map(|xi| {
            let fill = xi.first().copied().unwrap_or(0.0);
            let mut v = xi.clone();
            v.resize(d, fill);
            v
        });
        out
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("f={},g={}", self.f.name(), self.g.name()))
    }

    pub fn xi(&self) -> Vec<f64> {
        self.xi.clone().unwrap_or_else(|| vec![0.0; self.d])
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz.unwrap_or_else(|| self.f.lipschitz())
    }

    pub fn build(&self) -> Result<HeatProblem> {
        let xi = self.xi();
        let f_tag = self.f.clone();
        let f = move |_: f64, _: &[f64], v: f64| match f_tag {
            NonlinearityTag::Zero => 0.0,
            NonlinearityTag::Linear { a } => a * v,
            NonlinearityTag::Sine => v.sin(),
        };
        let g_tag = self.g.clone();
        let g = move |x: &[f64]| match g_tag {
            TerminalTag::Quadratic => x.iter().map(|v| v * v).sum(),
            TerminalTag::Constant { c } => c,
        };
        let (growth, p_default) = self.g.growth();
        let mut problem = HeatProblem::new(self.label(), self.d, self.horizon, f, g, self.lipschitz())
            .with_xi(xi)
            .with_growth(growth, self.p.unwrap_or(p_default));
        problem.moments = self.closed_moments();
        problem.validate()?;
        Ok(problem)
    }

    /// Every registered `f` vanishes at `v = 0`, so only `E g(ξ + W_T)²` is
    /// needed.
    fn closed_moments(&self) -> Option<ClosedMoments> {
        let t = self.horizon;
        let d = self.d as f64;
        let terminal = match self.g {
            TerminalTag::Constant { c } => c * c,
            TerminalTag::Quadratic => {
                // ‖ξ + W_T‖² is a noncentral χ² scaled by T.
                let r2: f64 = self.xi().iter().map(|v| v * v).sum();
                let mean = r2 + d * t;
                let var = 2.0 * d * t * t + 4.0 * r2 * t;
                mean * mean + var
            }
        };
        Some(ClosedMoments {
            terminal_second_moment: terminal,
            source_second_moment_integral: 0.0,
        })
    }

    /// `y(s, x)` where known in closed form.
    pub fn closed_form_solution(&self, s: f64, x: &[f64]) -> Option<f64> {
        let tau = self.horizon - s;
        let d = self.d as f64;
        let heat = match self.g {
            TerminalTag::Quadratic => x.iter().map(|v| v * v).sum::<f64>() + d * tau,
            TerminalTag::Constant { c } => c,
        };
        match self.f {
            NonlinearityTag::Zero => Some(heat),
            NonlinearityTag::Linear { a } => Some((a * tau).exp() * heat),
            NonlinearityTag::Sine => match self.g {
                TerminalTag::Constant { c: 0.0 } => Some(0.0),
                _ => None,
            },
        }
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form_solution(0.0, &self.xi()).is_some()
    }

    pub fn closed_form_value(&self) -> Result<f64> {
        self.closed_form_solution(0.0, &self.xi())
            .ok_or_else(|| MlpError::UnknownProblem(self.label()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build() {
        for name in ["quadratic", "linear", "sine", "constant"] {
            let spec = ProblemSpec::preset(name, 3).unwrap();
            let p = spec.build().unwrap();
            assert_eq!(p.d, 3);
            assert_eq!(p.name, name);
        }
        assert!(ProblemSpec::preset("nope", 1).is_none());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(ProblemSpec::quadratic(10).closed_form_value().unwrap(), 10.0);
        let lin = ProblemSpec::linear(5, 0.5).closed_form_value().unwrap();
        assert!((lin - 5.0 * 0.5f64.exp()).abs() < 1e-12);
        assert!((lin - 8.2436).abs() < 1e-4);
        assert_eq!(ProblemSpec::constant(4, 7.0).closed_form_value().unwrap(), 7.0);
        assert!(ProblemSpec::sine(1).closed_form_value().is_err());
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let ok = r#"{"d": 2, "T": 1.0, "f": {"kind": "linear", "a": 0.5}, "g": {"kind": "quadratic"}}"#;
        let spec: ProblemSpec = serde_json::from_str(ok).unwrap();
        assert_eq!(spec.lipschitz(), 0.5);
        let bad = r#"{"d": 2, "T": 1.0, "f": {"kind": "zero"}, "g": {"kind": "quadratic"}, "typo": 1}"#;
        assert!(serde_json::from_str::<ProblemSpec>(bad).is_err());
    }

    #[test]
    fn quadratic_moment_off_origin() {
        // E‖ξ + W‖⁴ for d = 1, ξ = 1, T = 1: E(1 + W)⁴ = 1 + 6 + 3 = 10.
        let mut spec = ProblemSpec::quadratic(1);
        spec.xi = Some(vec![1.0]);
        let m = spec.build().unwrap().moments.unwrap();
        assert!((m.terminal_second_moment - 10.0).abs() < 1e-12);
    }
}
