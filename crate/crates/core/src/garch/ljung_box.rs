use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::GarchError;
use crate::stats;

pub const DEFAULT_LJUNG_BOX_LAGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub lags: usize,
    pub q: f64,
    pub p_value: f64,
}

/// `Q = n(n+2) Σ_{k≤lags} ρ̂_k² / (n−k)` against χ²(lags).
pub fn ljung_box(series: &[f64], lags: usize) -> Result<LjungBox, GarchError> {
    let n = series.len();
    if lags == 0 || n <= lags {
        return Err(GarchError::TooFewPoints {
            need: lags.max(1) + 1,
            got: n,
        });
    }
    let rho = stats::autocorrelations(series, lags).ok_or(GarchError::Degenerate)?;
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * r / (nf - (i + 1) as f64))
            .sum::<f64>();
    let p_value = gamma_ur(0.5 * lags as f64, 0.5 * q);
    Ok(LjungBox { lags, q, p_value })
}
