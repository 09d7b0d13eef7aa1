//! Conditional-variance models: GARCH(1,1) with standardized NIG
//! innovations for the index, ARMA(1,1)-GARCH(1,1) with Student-t
//! innovations for stress factors, and the Ljung-Box portmanteau test.

mod arma_t;
mod ljung_box;
mod nig;

use thiserror::Error;

use crate::dist::DistError;

pub use arma_t::{fit_arma_garch_t, ArmaGarchTModel, ArmaGarchTParams};
pub use ljung_box::{ljung_box, LjungBox, DEFAULT_LJUNG_BOX_LAGS};
pub use nig::{
    fit_garch_nig, fit_garch_nig_returns, fit_garch_nig_with, log_returns, FitOptions, Filtered, GarchNigModel, GarchNigParams, Simulated,
};

#[derive(Debug, Error)]
pub enum GarchError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("series must be strictly positive and finite (index {0})")]
    NonPositiveSeries(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("conditional variance overflowed at step {0}")]
    VarianceOverflow(usize),
    #[error("series is constant; autocorrelations are undefined")]
    Degenerate,
    #[error("likelihood optimization failed: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// One step of `h_t = m + a·h_{t−1} + b·h_{t−1}·ε²_{t−1}`, where
/// `h_{t−1}·ε²_{t−1}` is the squared mean-equation shock.
#[inline]
pub fn garch_variance_recursion(m: f64, a: f64, b: f64, prev_variance: f64, prev_innovation: f64) -> f64 {
    m + a * prev_variance + b * prev_variance * prev_innovation * prev_innovation
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_values() {
        assert_eq!(garch_variance_recursion(0.3, 0.0, 0.4, 2.0, 0.0), 0.3);
        assert!((garch_variance_recursion(0.1, 0.5, 0.3, 1.0, 1.0) - 0.9).abs() < 1e-15);
        let (m, a, b) = (0.05, 0.9, 0.05);
        let fixed = m / (1.0 - a - b);
        assert!((garch_variance_recursion(m, a, b, fixed, 1.0) - fixed).abs() < 1e-12);
    }

    #[test]
    fn logit_round_trip() {
        for p in [1e-6, 0.3, 0.95, 1.0 - 1e-9] {
            assert!((logistic(logit(p)) - p).abs() < 1e-12);
        }
    }
}
