//! Empirical error estimation and the small statistical toolkit used by the
//! verification suite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{MlpError, Result};
use crate::heat::{eval_mlp_levels, HeatProblem};
use crate::oracle::ReferenceSolution;
use crate::rng::{DrawCounter, IndexPath, MasterSeed};
use crate::sequence::McSequence;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `1/R Σ (x - x̄)²`.
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// `1/(R-1) Σ (x - x̄)²`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Delta-method standard error of [`population_variance`].
pub fn variance_se(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let r = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / r;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / r;
    ((m4 - m2 * m2).max(0.0) / r).sqrt()
}

/// Root-mean-square error of a batch of independent runs against a reference.
///
/// `variance` uses the `1/R` normalization so that `rmse² = bias² + variance`
/// holds as an algebraic identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub runs: usize,
    pub reference: f64,
    pub oracle_uncertainty: f64,
    pub mean: f64,
    pub rmse: f64,
    pub bias: f64,
    pub variance: f64,
    pub se_of_rmse: f64,
    pub warning: Option<String>,
}

impl ErrorEstimate {
    pub fn from_samples(samples: &[f64], reference: &ReferenceSolution) -> Result<Self> {
        if samples.len() < 2 {
            return Err(MlpError::InvalidArgument("need at least two runs".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::NonFiniteMoment("run value".into()));
        }
        let r = samples.len() as f64;
        let m = mean(samples);
        let errs: Vec<f64> = samples.iter().map(|v| v - reference.value).collect();
        let m2 = errs.iter().map(|e| e * e).sum::<f64>() / r;
        let m4 = errs.iter().map(|e| e.powi(4)).sum::<f64>() / r;
        let rmse = m2.sqrt();
        let se_m2 = ((m4 - m2 * m2).max(0.0) / r).sqrt();
        let se_of_rmse = if rmse > 0.0 { se_m2 / (2.0 * rmse) } else { 0.0 };
        let warning = (reference.uncertainty > 0.2 * rmse).then(|| {
            format!(
                "reference uncertainty {:.3e} exceeds 20% of the RMSE {:.3e}",
                reference.uncertainty, rmse
            )
        });
        Ok(ErrorEstimate {
            runs: samples.len(),
            reference: reference.value,
            oracle_uncertainty: reference.uncertainty,
            mean: m,
            rmse,
            bias: m - reference.value,
            variance: population_variance(samples),
            se_of_rmse,
            warning,
        })
    }
}

/// `R` independent evaluations of `Y_{n,n}(0, ξ)`, run `r` seeded with
/// `seed.derive("run", r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunBatch {
    pub samples: Vec<f64>,
    /// Level terms of each run.
    pub levels: Vec<Vec<f64>>,
    pub draws: DrawCounter,
}

/// Results are gathered in run order, so the batch is the same for any
/// thread count.
pub fn run_batch(problem: &HeatProblem, seq: &McSequence, n: i64, runs: usize, seed: &MasterSeed) -> Result<RunBatch> {
    let j = n.max(1) as u64;
    let outcomes: Vec<(Vec<f64>, DrawCounter)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let run_seed = seed.derive("run", r as u64);
            let mut ledger = DrawCounter::default();
            let levels = eval_mlp_levels(
                problem,
                seq,
                n,
                j,
                0.0,
                &problem.xi,
                &IndexPath::root(),
                &run_seed,
                &mut ledger,
            )?;
            Ok((levels, ledger))
        })
        .collect::<Result<_>>()?;
    let mut batch = RunBatch {
        samples: Vec::with_capacity(runs),
        levels: Vec::with_capacity(runs),
        draws: DrawCounter::default(),
    };
    for (levels, ledger) in outcomes {
        batch.samples.push(levels.iter().fold(0.0, |a, b| a + b));
        batch.levels.push(levels);
        batch.draws.merge(&ledger);
    }
    Ok(batch)
}

pub fn empirical_error(
    problem: &HeatProblem,
    seq: &McSequence,
    n: i64,
    runs: usize,
    seed: &MasterSeed,
    reference: &ReferenceSolution,
) -> Result<(ErrorEstimate, RunBatch)> {
    let batch = run_batch(problem, seq, n, runs, seed)?;
    Ok((ErrorEstimate::from_samples(&batch.samples, reference)?, batch))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `rmse² = bias² + variance` up to round-off.
pub fn bias_variance_identity(estimate: &ErrorEstimate) -> IdentityCheck {
    let lhs = estimate.rmse * estimate.rmse;
    let rhs = estimate.bias * estimate.bias + estimate.variance;
    IdentityCheck {
        lhs,
        rhs,
        pass: (lhs - rhs).abs() <= 1e-10 * lhs.max(f64::MIN_POSITIVE),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditivityCheck {
    pub variance_of_sum: f64,
    pub sum_of_variances: f64,
    pub se: f64,
    pub pass: bool,
}

/// For rows of independent components, `Var Σ_g X_g = Σ_g Var X_g` within
/// four standard errors.
pub fn variance_additivity(rows: &[Vec<f64>]) -> Result<AdditivityCheck> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.len() < 2 || width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(MlpError::InvalidArgument(
            "need at least two rows of equal, non-zero width".into(),
        ));
    }
    let sums: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let mut sum_of_variances = 0.0;
    let mut se2 = variance_se(&sums).powi(2);
    for g in 0..width {
        let col: Vec<f64> = rows.iter().map(|r| r[g]).collect();
        sum_of_variances += population_variance(&col);
        se2 += variance_se(&col).powi(2);
    }
    let variance_of_sum = population_variance(&sums);
    let se = se2.sqrt();
    Ok(AdditivityCheck {
        variance_of_sum,
        sum_of_variances,
        se,
        pass: (variance_of_sum - sum_of_variances).abs() <= 4.0 * se + 1e-12 * variance_of_sum.abs(),
    })
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MlpError::InvalidArgument("need at least two paired points".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MlpError::InvalidArgument("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        r_squared,
    })
}

/// `rmse[k+1] ≤ rmse[k] + √(se[k]² + se[k+1]²)` for all consecutive pairs.
pub fn monotone_within_se(estimates: &[ErrorEstimate]) -> bool {
    estimates
        .windows(2)
        .all(|w| w[1].rmse <= w[0].rmse + (w[0].se_of_rmse.powi(2) + w[1].se_of_rmse.powi(2)).sqrt())
}

/// Welch's two-sample t-test for equal means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub dof: f64,
    pub p_value: f64,
}

pub fn welch_test(a: &[f64], b: &[f64]) -> Result<TwoSampleTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MlpError::InvalidArgument(
            "each sample needs at least two values".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let (mean_a, mean_b) = (mean(a), mean(b));
    let se = (va + vb).sqrt();
    if se == 0.0 {
        let p_value = if mean_a == mean_b { 1.0 } else { 0.0 };
        return Ok(TwoSampleTest {
            mean_a,
            mean_b,
            t: 0.0,
            dof: na + nb - 2.0,
            p_value,
        });
    }
    let t = (mean_a - mean_b) / se;
    let dof = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| MlpError::InvalidArgument(e.to_string()))?;
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TwoSampleTest {
        mean_a,
        mean_b,
        t,
        dof,
        p_value,
    })
}
