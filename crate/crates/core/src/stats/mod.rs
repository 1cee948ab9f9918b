//! Distribution fitting for the interference samples: ECDF, Kolmogorov-Smirnov,
//! the six candidate families, the GEV maximum-likelihood fit and the
//! regression of the GEV parameters on the PRS configuration.

mod candidates;
mod ecdf;
mod gev;
mod ks;
mod regression;
mod simplex;

pub use candidates::{fit_candidates, fit_candidates_with, Candidate, CandidateFit, FitReport, POSITIVE_SHIFT_EPSILON};
pub use ecdf::{ecdf, histogram_pdf, write_curve, Ecdf};
pub use gev::{fit_gev, fit_gev_with, gev_cdf, pwm_estimate, GevFitOptions, GevParams, GUMBEL_THRESHOLD};
pub use ks::{kolmogorov_q, ks_p_value, ks_statistic, ks_test, ks_test_with, KsOptions, KsResult};
pub use regression::{
    fit_parameter_models, least_squares, model_eval, CombModel, GevModel, LeastSquares, ParameterFit,
};
