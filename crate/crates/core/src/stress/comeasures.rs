//! Left-tail co-risk measures of `Y` given stress in `X`, estimated from
//! samples of pairs `[x, y]` with type-7 empirical quantiles.

use super::StressError;
use crate::stats;

pub const MIN_CONDITIONAL: usize = 20;
pub const MIN_JOINT_TAIL: usize = 10;

fn column(pairs: &[[f64; 2]], j: usize) -> Vec<f64> {
    pairs.iter().map(|p| p[j]).collect()
}

fn check_level(q: f64) -> Result<(), StressError> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(StressError::InvalidParams(format!("level {q} must be in (0, 1)")))
    }
}

/// Empirical `VaR_q`, the lower `q`-quantile (loss-negative convention).
pub fn var(ys: &[f64], q: f64) -> f64 {
    stats::quantile(ys, q)
}

/// Mean of the values at or below `VaR_q`.
pub fn es(ys: &[f64], q: f64) -> f64 {
    let v = var(ys, q);
    let tail: Vec<f64> = ys.iter().copied().filter(|y| *y <= v).collect();
    stats::mean(&tail)
}

/// `y` values whose `x` is at or below `VaR_q(X)`.
fn conditional(pairs: &[[f64; 2]], q: f64) -> Result<Vec<f64>, StressError> {
    check_level(q)?;
    let vx = var(&column(pairs, 0), q);
    let ys: Vec<f64> = pairs.iter().filter(|p| p[0] <= vx).map(|p| p[1]).collect();
    if ys.len() < MIN_CONDITIONAL {
        return Err(StressError::TooFewConditionalScenarios {
            need: MIN_CONDITIONAL,
            got: ys.len(),
        });
    }
    Ok(ys)
}

/// `VaR_q(Y | X ≤ VaR_q(X))`.
pub fn covar(pairs: &[[f64; 2]], q: f64) -> Result<f64, StressError> {
    Ok(var(&conditional(pairs, q)?, q))
}

/// Mean of `Y` over `{Y ≤ CoVaR_q, X ≤ VaR_q(X)}`.
pub fn coes(pairs: &[[f64; 2]], q: f64) -> Result<f64, StressError> {
    let ys = conditional(pairs, q)?;
    let c = var(&ys, q);
    let tail: Vec<f64> = ys.into_iter().filter(|y| *y <= c).collect();
    if tail.is_empty() {
        return Err(StressError::TooFewConditionalScenarios { need: 1, got: 0 });
    }
    Ok(stats::mean(&tail))
}

/// Mean of `Y` over the joint tail `{Y ≤ VaR_q(Y), X ≤ VaR_q(X)}`.
pub fn coetl(pairs: &[[f64; 2]], q: f64) -> Result<f64, StressError> {
    check_level(q)?;
    let vx = var(&column(pairs, 0), q);
    let vy = var(&column(pairs, 1), q);
    let tail: Vec<f64> = pairs
        .iter()
        .filter(|p| p[0] <= vx && p[1] <= vy)
        .map(|p| p[1])
        .collect();
    if tail.len() < MIN_JOINT_TAIL {
        return Err(StressError::EmptyJointTail {
            need: MIN_JOINT_TAIL,
            got: tail.len(),
        });
    }
    Ok(stats::mean(&tail))
}
