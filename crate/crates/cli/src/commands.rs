use std::path::{Path, PathBuf};
use std::time::Instant;

use mlp_core::rng::derive_stream_on;
use mlp_core::stats::mean;
use mlp_core::{
    bias_variance_identity, closed_form_reference, constant_c, cost_bound_closed_form, cost_bound_recursive,
    empirical_error, error_bound, eval_at_origin, exact_draw_count, heat_cost_bound_recursive, hypothesis_ii_check,
    hypothesis_iii_check, lemma_ab_check, linear_fit, monotone_within_se, n_epsilon, picard_quadrature_reference,
    plain_mc_picard_reference, retry_doubled, run_batch, validate_sequence, variance_additivity, Channel, CheckReport,
    ClosedFormCost, CostParams, DrawCounter, ErrorBoundParams, ErrorEstimate, HeatCostParams, HeatProblem, IndexPath,
    LinearFit, MasterSeed, McSequence, OracleTarget, ProblemSpec, ReferenceSolution,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{OracleChoice, RunConfig};
use crate::output::{fmt_f64, svg_from_csv, write_csv, write_json, write_text, PlotSpec};
use crate::CliError;

/// Seed used when neither the flag, the environment nor the config sets one.
pub const DEFAULT_SEED: u64 = 42;

pub const CONVERGE_HEADER: [&str; 10] = [
    "n",
    "M_n",
    "rmse",
    "se",
    "bound",
    "normals",
    "uniforms",
    "cost_rec",
    "cost_closed",
    "wall_ms",
];

/// Everything a command needs besides the config itself.
#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// When false, wall-clock columns are written as 0 so that output files
    /// depend on `(config, seed)` only.
    pub timing: bool,
}

impl Context {
    pub fn new(config: &RunConfig, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        Context {
            seed: seed.or(config.seed).unwrap_or(DEFAULT_SEED),
            out_dir: out
                .or_else(|| config.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("mlp-out")),
            timing: true,
        }
    }

    pub fn master(&self) -> MasterSeed {
        MasterSeed::from_u64(self.seed)
    }

    fn ensure_out_dir(&self) -> Result<&Path, CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", self.out_dir.display())))?;
        Ok(&self.out_dir)
    }

    fn elapsed_ms(&self, start: Instant) -> f64 {
        if self.timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }
}

fn build(spec: &ProblemSpec) -> Result<HeatProblem, CliError> {
    spec.build().map_err(|e| CliError::Config(e.to_string()))
}

/// Resolves the configured reference value for `spec`.
pub fn resolve_reference(config: &RunConfig, spec: &ProblemSpec, ctx: &Context) -> Result<ReferenceSolution, CliError> {
    let problem = build(spec)?;
    match &config.oracle {
        OracleChoice::Auto if spec.has_closed_form() => Ok(closed_form_reference(spec)?),
        OracleChoice::Auto if spec.d == 1 => Ok(picard_quadrature_reference(&problem, Default::default())?.solution),
        OracleChoice::Auto => Err(CliError::Config(format!(
            "no reference for `{}` in d = {}; configure an oracle",
            spec.label(),
            spec.d
        ))),
        OracleChoice::ClosedForm => {
            closed_form_reference(spec).map_err(|_| CliError::Config(format!("`{}` has no closed form", spec.label())))
        }
        OracleChoice::Quadrature { grid } => Ok(picard_quadrature_reference(&problem, grid.into())?.solution),
        OracleChoice::PlainMc { .. } => {
            let cfg = config.oracle.plain_mc_config().expect("plain Monte Carlo variant");
            Ok(plain_mc_picard_reference(
                &problem,
                &cfg,
                &ctx.master().derive("oracle", 0),
            )?)
        }
        OracleChoice::Fixed { value, uncertainty } => Ok(ReferenceSolution {
            value: *value,
            uncertainty: *uncertainty,
            method: mlp_core::ReferenceMethod::ClosedForm,
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub problem: String,
    pub n: i64,
    pub m_n: u64,
    pub value: f64,
    pub normals: u64,
    pub uniforms: u64,
    pub wall_ms: f64,
    pub seed: u64,
}

/// One evaluation of `Y_{n,n}(0, ξ)` with the seed of run 0.
pub fn cmd_run(config: &RunConfig, ctx: &Context) -> Result<RunRecord, CliError> {
    let problem = build(&config.problem)?;
    let seq = config.sequence();
    let n = config.n.unwrap_or(config.n_max as i64);
    let start = Instant::now();
    let mut ledger = DrawCounter::default();
    let value = eval_at_origin(&problem, &seq, n, &ctx.master().derive("run", 0), &mut ledger)?;
    Ok(RunRecord {
        problem: config.problem.label(),
        n,
        m_n: seq.try_get(n.max(1) as u64)?,
        value,
        normals: ledger.normals,
        uniforms: ledger.uniforms,
        wall_ms: ctx.elapsed_ms(start),
        seed: ctx.seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u32,
    pub m_n: u64,
    pub rmse: f64,
    pub se: f64,
    pub bound: f64,
    /// Per run.
    pub normals: u64,
    pub uniforms: u64,
    pub cost_rec: f64,
    pub cost_closed: f64,
    pub wall_ms: f64,
    #[serde(skip)]
    pub estimate: ErrorEstimate,
}

impl ConvergenceRow {
    fn csv(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.m_n.to_string(),
            fmt_f64(self.rmse),
            fmt_f64(self.se),
            fmt_f64(self.bound),
            self.normals.to_string(),
            self.uniforms.to_string(),
            fmt_f64(self.cost_rec),
            fmt_f64(self.cost_closed),
            fmt_f64(self.wall_ms),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub reference: ReferenceSolution,
    pub c_const: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `log(normals)` against `log(1/rmse)`; absent when fewer than two rows
    /// have positive RMSE.
    pub fit: Option<LinearFit>,
    pub monotone: bool,
    pub warnings: Vec<String>,
}

/// `C` and the per-`n` error bound parameters.
pub fn bound_params(config: &RunConfig, problem: &HeatProblem, ctx: &Context) -> Result<ErrorBoundParams, CliError> {
    let c = constant_c(problem, config.c_samples, &ctx.master().derive("constant_c", 0))?;
    Ok(ErrorBoundParams::heat(
        c,
        problem.lipschitz,
        problem.horizon,
        config.sequence().kappa(),
    ))
}

/// Empirical error, exact cost and bounds for `n = 1..=n_max`.
pub fn convergence(config: &RunConfig, ctx: &Context) -> Result<ConvergenceReport, CliError> {
    let spec = &config.problem;
    let problem = build(spec)?;
    let seq = config.sequence();
    let reference = resolve_reference(config, spec, ctx)?;
    let params = bound_params(config, &problem, ctx)?;
    let master = ctx.master();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for n in 1..=config.n_max {
        let start = Instant::now();
        let batch_seed = master.derive("converge", n as u64);
        let (estimate, batch) = empirical_error(&problem, &seq, n as i64, config.runs, &batch_seed, &reference)?;
        let wall_ms = ctx.elapsed_ms(start);
        let runs = config.runs as u64;
        let exact = exact_draw_count(problem.d, &seq, n as i64, n as u64)?;
        if batch.draws.normals != exact.normals as u64 * runs || batch.draws.uniforms != exact.uniforms as u64 * runs {
            return Err(CliError::Eval(mlp_core::MlpError::InvalidArgument(format!(
                "draw ledger {:?} disagrees with the exact count {exact:?} per run at n = {n}",
                batch.draws
            ))));
        }
        let m_n = seq.try_get(n as u64)?;
        if let Some(w) = &estimate.warning {
            warnings.push(format!("n = {n}: {w}"));
        }
        rows.push(ConvergenceRow {
            n,
            m_n,
            rmse: estimate.rmse,
            se: estimate.se_of_rmse,
            bound: error_bound(params, &seq, n as u64)?,
            normals: exact.normals as u64,
            uniforms: exact.uniforms as u64,
            cost_rec: cost_bound_recursive(CostParams::heat(problem.d), &seq, n as i64, n as u64)?,
            cost_closed: cost_bound_closed_form(ClosedFormCost::mlp(2.0), m_n as f64, problem.d as f64, n as i64),
            wall_ms,
            estimate,
        });
    }
    let estimates: Vec<ErrorEstimate> = rows.iter().map(|r| r.estimate.clone()).collect();
    let monotone = monotone_within_se(&estimates);
    if !monotone {
        warnings.push("RMSE increases by more than one combined standard error; the cost fit is unreliable".into());
    }
    let fit = cost_error_fit(&rows);
    Ok(ConvergenceReport {
        problem: spec.label(),
        reference,
        c_const: params.c_const,
        rows,
        fit,
        monotone,
        warnings,
    })
}

fn cost_error_fit(rows: &[ConvergenceRow]) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.rmse > 0.0)
        .map(|r| ((1.0 / r.rmse).ln(), (r.normals as f64).ln()))
        .unzip();
    linear_fit(&x, &y).ok()
}

pub fn converge_csv_rows(report: &ConvergenceReport) -> Vec<Vec<String>> {
    report.rows.iter().map(ConvergenceRow::csv).collect()
}

/// Sweep over `n`, then `converge.csv`, `converge.svg` and `oracle_targets.json`.
pub fn cmd_converge(config: &RunConfig, ctx: &Context) -> Result<ConvergenceReport, CliError> {
    let report = convergence(config, ctx)?;
    let dir = ctx.ensure_out_dir()?;
    let csv_path = dir.join("converge.csv");
    write_csv(&csv_path, &CONVERGE_HEADER, &converge_csv_rows(&report))?;
    let csv_text = std::fs::read_to_string(&csv_path).map_err(|e| CliError::Io(e.to_string()))?;
    let title = format!("RMSE and error bound, {}", report.problem);
    let plot = PlotSpec {
        title: &title,
        x: "n",
        ys: &["rmse", "bound"],
        log_x: false,
        log_y: true,
    };
    write_text(&dir.join("converge.svg"), &svg_from_csv(&csv_text, &plot)?)?;
    let target = OracleTarget {
        problem: report.problem.clone(),
        method: report.reference.method,
        value: report.reference.value,
        uncertainty: report.reference.uncertainty,
        config: json!({ "problem": config.problem, "oracle": config.oracle }),
        seed: Some(ctx.seed),
    };
    mlp_core::write_oracle_targets(&dir.join("oracle_targets.json"), &[target])
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    /// Smallest `N` whose bound stays below `ε` for every `n ≥ N`.
    pub n_theory: Option<u64>,
    /// Smallest `n` with measured RMSE `≤ ε`.
    pub n_empirical: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub normals: u64,
    pub uniforms: u64,
    /// RMSE for `n = 1..=sweep_n`.
    pub rmse: Vec<f64>,
    /// Normals at the target RMSE, log-log interpolated.
    pub cost_at_target: Option<f64>,
    pub extrapolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub convergence: ConvergenceReport,
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    /// `2 (1 + δ)`.
    pub slope_target: f64,
    pub reliable: bool,
    pub epsilons: Vec<EpsilonRow>,
    pub sweep: Vec<SweepRow>,
    /// Least-squares fit of normals against `d` at `sweep_n`.
    pub normals_vs_d: Option<LinearFit>,
    /// Exact normals per unit of `d` at `sweep_n`.
    pub exact_normals_per_d: f64,
    /// Fit of `log(cost at target)` against `log d`.
    pub dimension_fit: Option<LinearFit>,
    /// `1 + p (1 + δ)`.
    pub dimension_target: f64,
}

/// Cost-error exponent, `N_ε` table and dimension sweep.
pub fn complexity(config: &RunConfig, ctx: &Context) -> Result<ComplexityReport, CliError> {
    if config.n_max < 3 {
        return Err(CliError::Config(format!(
            "complexity needs n_max ≥ 3 for a fit, got {}",
            config.n_max
        )));
    }
    let convergence = convergence(config, ctx)?;
    let fit = convergence.fit;
    let reliable = convergence.monotone && fit.is_some();
    let problem = build(&config.problem)?;
    let seq = config.sequence();
    let params = bound_params(config, &problem, ctx)?;
    let epsilons = config
        .complexity
        .epsilons
        .iter()
        .map(|&eps| EpsilonRow {
            epsilon: eps,
            n_theory: n_epsilon(params, &seq, eps, 200),
            n_empirical: convergence.rows.iter().find(|r| r.rmse <= eps).map(|r| r.n),
        })
        .collect();

    let cc = &config.complexity;
    let n = cc.sweep_n as i64;
    let mut sweep = Vec::new();
    for (k, &d) in cc.d_sweep.iter().enumerate() {
        let spec = config.problem.with_dimension(d);
        let problem = build(&spec)?;
        let exact = exact_draw_count(d, &seq, n, n as u64)?;
        let reference = resolve_reference(config, &spec, ctx).ok();
        let mut rmse = Vec::new();
        let mut costs = Vec::new();
        if let Some(reference) = reference {
            for level in 1..=n {
                let seed = ctx.master().derive("sweep", (k as u64) << 8 | level as u64);
                let (est, _) = empirical_error(&problem, &seq, level, cc.sweep_runs, &seed, &reference)?;
                rmse.push(est.rmse);
                costs.push(exact_draw_count(d, &seq, level, level as u64)?.normals as f64);
            }
        }
        let (cost_at_target, extrapolated) = interpolate_cost(&rmse, &costs, cc.target_rmse);
        sweep.push(SweepRow {
            d,
            normals: exact.normals as u64,
            uniforms: exact.uniforms as u64,
            rmse,
            cost_at_target,
            extrapolated,
        });
    }
    let ds: Vec<f64> = sweep.iter().map(|r| r.d as f64).collect();
    let normals: Vec<f64> = sweep.iter().map(|r| r.normals as f64).collect();
    let normals_vs_d = linear_fit(&ds, &normals).ok();
    let (log_d, log_cost): (Vec<f64>, Vec<f64>) = sweep
        .iter()
        .filter_map(|r| r.cost_at_target.map(|c| ((r.d as f64).ln(), c.ln())))
        .unzip();
    let p = problem.p;
    Ok(ComplexityReport {
        slope: fit.map(|f| f.slope),
        slope_se: fit.map(|f| f.slope_se),
        slope_target: 2.0 * (1.0 + config.delta),
        reliable,
        epsilons,
        exact_normals_per_d: exact_draw_count(1, &seq, n, n as u64)?.normals as f64,
        sweep,
        normals_vs_d,
        dimension_fit: linear_fit(&log_d, &log_cost).ok(),
        dimension_target: 1.0 + p * (1.0 + config.delta),
        convergence,
    })
}

/// Log-log interpolation of cost at `target` from `(rmse_n, cost_n)`;
/// extrapolates from the last two points when the target is not bracketed.
fn interpolate_cost(rmse: &[f64], cost: &[f64], target: f64) -> (Option<f64>, bool) {
    let pts: Vec<(f64, f64)> = rmse
        .iter()
        .zip(cost)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, c)| (r.ln(), c.ln()))
        .collect();
    if pts.len() < 2 {
        return (None, false);
    }
    let t = target.ln();
    let segment = pts
        .windows(2)
        .find(|w| (w[0].0 - t) * (w[1].0 - t) <= 0.0 && w[0].0 != w[1].0);
    let (a, b, extrapolated) = match segment {
        Some(w) => (w[0], w[1], false),
        None => (pts[pts.len() - 2], pts[pts.len() - 1], true),
    };
    if a.0 == b.0 {
        return (None, extrapolated);
    }
    let slope = (b.1 - a.1) / (b.0 - a.0);
    (Some((a.1 + slope * (t - a.0)).exp()), extrapolated)
}

pub const COMPLEXITY_HEADER: [&str; 6] = ["n", "M_n", "rmse", "se", "normals", "uniforms"];
pub const SWEEP_HEADER: [&str; 4] = ["d", "normals", "uniforms", "cost_at_target"];

/// `complexity.csv`, `dsweep.csv`, `complexity.json` and `complexity.svg`.
pub fn cmd_complexity(config: &RunConfig, ctx: &Context) -> Result<ComplexityReport, CliError> {
    let report = complexity(config, ctx)?;
    let dir = ctx.ensure_out_dir()?;
    let rows: Vec<Vec<String>> = report
        .convergence
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.m_n.to_string(),
                fmt_f64(r.rmse),
                fmt_f64(r.se),
                r.normals.to_string(),
                r.uniforms.to_string(),
            ]
        })
        .collect();
    let csv_path = dir.join("complexity.csv");
    write_csv(&csv_path, &COMPLEXITY_HEADER, &rows)?;
    let sweep_rows: Vec<Vec<String>> = report
        .sweep
        .iter()
        .map(|r| {
            vec![
                r.d.to_string(),
                r.normals.to_string(),
                r.uniforms.to_string(),
                r.cost_at_target.map(fmt_f64).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&dir.join("dsweep.csv"), &SWEEP_HEADER, &sweep_rows)?;
    let csv_text = std::fs::read_to_string(&csv_path).map_err(|e| CliError::Io(e.to_string()))?;
    let title = format!("Normals per run against RMSE, {}", report.convergence.problem);
    let plot = PlotSpec {
        title: &title,
        x: "rmse",
        ys: &["normals"],
        log_x: true,
        log_y: true,
    };
    write_text(&dir.join("complexity.svg"), &svg_from_csv(&csv_text, &plot)?)?;
    write_json(&dir.join("complexity.json"), &report)?;
    Ok(report)
}

/// The verification suite. A check that errors counts as failed.
pub fn verify(config: &RunConfig, ctx: &Context) -> Result<Vec<CheckReport>, CliError> {
    let spec = &config.problem;
    let problem = build(spec)?;
    let seq = config.sequence();
    let vc = &config.verify;
    let seed = ctx.seed;
    let master = ctx.master();
    let mut reports = Vec::new();
    let mut push = |name: &str, outcome: Result<CheckReport, CliError>| {
        reports.push(outcome.unwrap_or_else(|e| failed(name, seed, &e)));
    };

    let checked_seq = vc
        .sequence
        .clone()
        .map(McSequence::from_rule)
        .unwrap_or_else(|| seq.clone());
    push("validate_sequence", Ok(sequence_check(&checked_seq, vc.j_max, seed)));
    push("lemma_ab", Ok(lemma_ab_sweep(vc.lemma_samples, &master, seed)));

    let cost = vc.cost.unwrap_or(CostParams::heat(problem.d));
    push(
        "cost_bound_chain",
        cost_chain(&problem, &seq, cost, config.n_max.min(6), seed),
    );
    push(
        "ledger_exactness",
        ledger_check(&problem, &seq, config.n_max.min(4), &master, seed),
    );

    // Orders evaluated below must have `M_n` defined.
    let n_stat = (config.n_max.min(3) as u64).min(seq.defined_up_to().unwrap_or(u64::MAX)) as i64;
    let h = spec.closed_form_value().unwrap_or(0.0);
    let batch = run_batch(&problem, &seq, n_stat, config.runs, &master.derive("verify", 0)).map_err(CliError::from);
    match batch {
        Ok(batch) => {
            push(
                "bias_variance_identity",
                identity_check(&batch.samples, h, n_stat, seed),
            );
            push("variance_additivity", additivity_check(&batch.levels, n_stat, seed));
        }
        Err(e) => {
            push("bias_variance_identity", Err(e.clone()));
            push("variance_additivity", Err(e));
        }
    }

    for (i, pair) in vc.pairs.iter().enumerate() {
        let s = seed.wrapping_add(1 + i as u64);
        push(
            "hypothesis_ii",
            retry_doubled(vc.hypothesis_ii_mc, |mc| {
                hypothesis_ii_check(&problem, &pair.u, &pair.v, pair.k, mc, s)
            })
            .map_err(CliError::from),
        );
    }
    if spec.has_closed_form() {
        for n in 1..=2i64.min(n_stat) {
            for k in 0..=1u32 {
                let s = seed.wrapping_add(100 + 2 * n as u64 + k as u64);
                push(
                    "hypothesis_iii",
                    retry_doubled(vc.hypothesis_iii_mc, |mc| {
                        hypothesis_iii_check(spec, &seq, n, n as u64, k, mc, s)
                    })
                    .map_err(CliError::from),
                );
            }
        }
    }
    Ok(reports)
}

fn failed(name: &str, seed: u64, e: &CliError) -> CheckReport {
    CheckReport {
        check: name.into(),
        lhs: f64::NAN,
        rhs: f64::NAN,
        se_lhs: 0.0,
        se_rhs: 0.0,
        pass: false,
        seed,
        config: json!({ "error": e.to_string() }),
    }
}

fn exact_report(name: &str, lhs: f64, rhs: f64, pass: bool, seed: u64, config: serde_json::Value) -> CheckReport {
    CheckReport {
        check: name.into(),
        lhs,
        rhs,
        se_lhs: 0.0,
        se_rhs: 0.0,
        pass,
        seed,
        config,
    }
}

/// `lhs` is the largest observed ratio `M_{j+1}/M_j`, `rhs` its bound `2κ`.
fn sequence_check(seq: &McSequence, j_max: u64, seed: u64) -> CheckReport {
    let j_max = seq.defined_up_to().map_or(j_max, |len| len.min(j_max));
    let report = validate_sequence(seq, j_max);
    exact_report(
        "validate_sequence",
        report.max_ratio,
        report.ratio_bound,
        report.pass(),
        seed,
        json!({ "sequence": seq.rule(), "report": report }),
    )
}

/// `lhs` counts violations among random `(a, b, n)`.
fn lemma_ab_sweep(samples: u64, master: &MasterSeed, seed: u64) -> CheckReport {
    let path = IndexPath::from_slice(&[1]);
    let mut stream = derive_stream_on(&master.derive("lemma_ab", 0), &path, Channel::Auxiliary);
    let mut ledger = DrawCounter::default();
    let mut violations = 0u64;
    for _ in 0..samples {
        let a = 10f64.powf(8.0 * stream.uniform(&mut ledger) - 4.0);
        let b = 10f64.powf(8.0 * stream.uniform(&mut ledger) - 4.0);
        let n = 1 + (stream.uniform(&mut ledger) * 200.0) as u32;
        if !lemma_ab_check(a, b, n) {
            violations += 1;
        }
    }
    exact_report(
        "lemma_ab",
        violations as f64,
        0.0,
        violations == 0,
        seed,
        json!({ "samples": samples }),
    )
}

/// Exact draws = heat recursion ≤ generic recursion ≤ closed form, for
/// `n = j = 1..=n_max`. `lhs` is the largest ratio of consecutive links.
fn cost_chain(
    problem: &HeatProblem,
    seq: &McSequence,
    cost: CostParams,
    n_max: u32,
    seed: u64,
) -> Result<CheckReport, CliError> {
    let mut worst = 0.0f64;
    let mut pass = true;
    let mut rows = Vec::new();
    for n in 1..=n_max as i64 {
        let j = n as u64;
        let exact = exact_draw_count(problem.d, seq, n, j)?.total() as f64;
        let heat = heat_cost_bound_recursive(HeatCostParams { d: problem.d }, seq, n, j)?;
        let generic = cost_bound_recursive(cost, seq, n, j)?;
        let closed = cost_bound_closed_form(ClosedFormCost::mlp(cost.gamma), seq.try_get(j)? as f64, cost.z_cost, n);
        pass &= exact == heat && heat <= generic && generic <= closed;
        worst = worst.max(heat / generic).max(generic / closed);
        rows.push(json!({ "n": n, "exact": exact, "heat": heat, "generic": generic, "closed": closed }));
    }
    Ok(exact_report(
        "cost_bound_chain",
        worst,
        1.0,
        pass,
        seed,
        json!({ "cost": cost, "rows": rows }),
    ))
}

/// `lhs` counts orders whose ledger differs from the exact count.
fn ledger_check(
    problem: &HeatProblem,
    seq: &McSequence,
    n_max: u32,
    master: &MasterSeed,
    seed: u64,
) -> Result<CheckReport, CliError> {
    let mut mismatches = 0u32;
    for n in 1..=n_max as i64 {
        let mut ledger = DrawCounter::default();
        eval_at_origin(problem, seq, n, &master.derive("ledger", n as u64), &mut ledger)?;
        if !exact_draw_count(problem.d, seq, n, n as u64)?.matches(&ledger) {
            mismatches += 1;
        }
    }
    Ok(exact_report(
        "ledger_exactness",
        mismatches as f64,
        0.0,
        mismatches == 0,
        seed,
        json!({ "n_max": n_max }),
    ))
}

fn identity_check(samples: &[f64], h: f64, n: i64, seed: u64) -> Result<CheckReport, CliError> {
    let reference = ReferenceSolution {
        value: h,
        uncertainty: 0.0,
        method: mlp_core::ReferenceMethod::ClosedForm,
    };
    let est = ErrorEstimate::from_samples(samples, &reference)?;
    let id = bias_variance_identity(&est);
    let scale = mean(&samples.iter().map(|x| x * x).collect::<Vec<_>>()).max(1.0);
    let pass = (id.lhs - id.rhs).abs() <= 1e-12 * scale;
    Ok(exact_report(
        "bias_variance_identity",
        id.lhs,
        id.rhs,
        pass,
        seed,
        json!({ "n": n, "h": h, "runs": samples.len() }),
    ))
}

/// The level terms of one evaluation come from disjoint streams.
fn additivity_check(levels: &[Vec<f64>], n: i64, seed: u64) -> Result<CheckReport, CliError> {
    let check = variance_additivity(levels)?;
    Ok(CheckReport {
        check: "variance_additivity".into(),
        lhs: check.variance_of_sum,
        rhs: check.sum_of_variances,
        se_lhs: check.se,
        se_rhs: 0.0,
        pass: check.pass,
        seed,
        config: json!({ "n": n, "runs": levels.len() }),
    })
}

/// Runs the suite, writes `verify_report.json`, fails with the names of the
/// failed checks.
pub fn cmd_verify(config: &RunConfig, ctx: &Context) -> Result<Vec<CheckReport>, CliError> {
    let reports = verify(config, ctx)?;
    let dir = ctx.ensure_out_dir()?;
    write_json(&dir.join("verify_report.json"), &reports)?;
    Ok(reports)
}

pub fn failed_checks(reports: &[CheckReport]) -> Vec<String> {
    let mut names: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.check.clone()).collect();
    names.dedup();
    names
}
