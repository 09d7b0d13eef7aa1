//! Esscher risk-neutralization and Monte Carlo pricing of index options.

mod esscher;
mod options;
mod paths;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::DistError;
use crate::garch::GarchError;

pub use esscher::{solve_esscher, EsscherSolution, StepLaw};
pub use options::{
    black_scholes_call, implied_vol, implied_vol_surface, price_options, write_iv_csv, write_price_csv, IvCell,
    OptionQuote, OptionSurface,
};
pub use paths::{simulate_q_paths, step_law, PathSet, QStart};

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("Esscher domain is empty: scaled alpha {alpha} must exceed 1/2")]
    DomainTooNarrow { alpha: f64 },
    #[error("no Esscher root: g ranges over [{low}, {high}] inside the domain")]
    NoRoot { low: f64, high: f64 },
    #[error("path {path} failed after {attempts} attempts: {cause}")]
    PathFailure {
        path: usize,
        attempts: usize,
        cause: Box<PricingError>,
    },
    #[error("empty path set")]
    EmptyPaths,
    #[error("invalid pricing configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Garch(#[from] GarchError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub n_paths: usize,
    /// Number of simulated steps; options are priced at every maturity `1..=horizon`.
    pub horizon: usize,
    pub strikes: Vec<f64>,
    /// Per-step risk-free rate `r'`.
    pub riskfree: f64,
    pub seed: u64,
    /// Smallest admissible period loss before the power transform.
    pub loss_floor: f64,
    /// Rebuild the index with `NDI_t = R_t^10 + NDI_{t−1}` instead of `S_t − S_{t−1}`.
    pub legacy_recursion: bool,
    /// Resampling attempts for a path whose Esscher solve fails.
    pub max_resamples: usize,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            horizon: 12,
            strikes: (0..=8).map(|i| -2.0 + 0.5 * i as f64).collect(),
            riskfree: 0.0,
            seed: 42,
            loss_floor: 1.0,
            legacy_recursion: false,
            max_resamples: 10,
        }
    }
}

impl PricingConfig {
    pub fn validate(&self) -> Result<(), PricingError> {
        let bad = |m: &str| Err(PricingError::InvalidConfig(m.to_string()));
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.strikes.iter().any(|k| !k.is_finite()) {
            return bad("strikes must be finite");
        }
        if !self.riskfree.is_finite() {
            return bad("risk-free rate must be finite");
        }
        if !(self.loss_floor > 0.0) || !self.loss_floor.is_finite() {
            return bad("loss floor must be positive");
        }
        Ok(())
    }
}

/// Parse `"min:max:step"` or a comma-separated list of strikes.
pub fn parse_strikes(grid: &str) -> Result<Vec<f64>, PricingError> {
    let bad = || PricingError::InvalidConfig(format!("bad strike grid {grid:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = grid.split(':').collect();
    let out = match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0) || hi < lo || !lo.is_finite() || !hi.is_finite() {
                return Err(bad());
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| lo + step * i as f64).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if out.is_empty() || out.iter().any(|k| !k.is_finite()) {
        return Err(bad());
    }
    Ok(out)
}

/// `max(L_t, floor)^exponent`, keeping every value strictly positive.
pub fn floored_series(losses: &[f64], floor: f64, exponent: f64) -> Vec<f64> {
    losses.iter().map(|l| l.max(floor).powf(exponent)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strike_grids() {
        assert_eq!(parse_strikes("1:2:0.5").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_strikes("-1, 0,3").unwrap(), vec![-1.0, 0.0, 3.0]);
        assert_eq!(parse_strikes("0:0.3:0.1").unwrap().len(), 4);
        for bad in ["", "1:0:1", "1:2:0", "a,b", "1:2"] {
            assert!(parse_strikes(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn floor_keeps_positive() {
        let s = floored_series(&[0.0, 1024.0, 0.5], 1.0, 0.1);
        assert_eq!(s[0], 1.0);
        assert!((s[1] - 2.0).abs() < 1e-15);
        assert_eq!(s[2], 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(PricingConfig::default().validate().is_ok());
        let mut c = PricingConfig::default();
        c.n_paths = 0;
        assert!(c.validate().is_err());
        let mut c = PricingConfig::default();
        c.strikes.push(f64::NAN);
        assert!(c.validate().is_err());
    }
}
