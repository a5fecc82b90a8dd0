//! Full-history recursive multilevel Picard (MLP) approximation for
//! semi-linear heat equations, with exact cost accounting, reference
//! solutions and statistical checks.

pub mod cost;
pub mod error;
pub mod gmlp;
pub mod heat;
pub mod hypothesis;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod sequence;
pub mod stats;

pub use cost::{
    cost_bound_closed_form, cost_bound_recursive, error_bound, heat_cost_bound_recursive, lemma_ab_check, n_epsilon,
    ClosedFormCost, CostParams, ErrorBoundParams, HeatCostParams,
};
pub use error::{MlpError, Result};
pub use gmlp::{gmlp_evaluate, GmlpInstance};
pub use heat::{
    constant_c, constant_c_mc, eval_at_origin, eval_mlp, eval_mlp_levels, exact_draw_count, sample_level_draw,
    DrawCount, HeatProblem, LevelDraw,
};
pub use hypothesis::{hypothesis_ii_check, hypothesis_iii_check, retry_doubled, CheckReport, PsiSample, TestFunction};
pub use oracle::{
    closed_form_reference, picard_quadrature, picard_quadrature_reference, plain_mc_picard_reference,
    read_oracle_targets, write_oracle_targets, OracleTarget, PlainMcConfig, QuadratureGrid, QuadratureReference,
    QuadratureRun, ReferenceMethod, ReferenceSolution,
};
pub use problems::{NonlinearityTag, ProblemSpec, TerminalTag};
pub use rng::{derive_stream, Channel, DrawCounter, IndexPath, MasterSeed, StreamKey, StreamState};
pub use sequence::{validate_sequence, McSequence, SequenceReport, SequenceRule};
pub use stats::{
    bias_variance_identity, empirical_error, linear_fit, monotone_within_se, run_batch, variance_additivity,
    welch_test, AdditivityCheck, ErrorEstimate, IdentityCheck, LinearFit, RunBatch, TwoSampleTest,
};
