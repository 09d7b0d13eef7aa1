use serde::{Deserialize, Serialize};

use super::PricingError;
use crate::dist::{gh_log_mgf, GhParams};

const MAX_BISECTIONS: usize = 400;

/// One-step law of the log-return `R_{t+1}` given the current variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepLaw {
    Nig(GhParams),
    Gaussian { mean: f64, variance: f64 },
}

impl StepLaw {
    pub fn log_mgf(&self, u: f64) -> Result<f64, PricingError> {
        match self {
            StepLaw::Nig(p) => Ok(gh_log_mgf(u, p)?),
            StepLaw::Gaussian { mean, variance } => Ok(mean * u + 0.5 * variance * u * u),
        }
    }

    /// Open interval of `θ` for which both `θ` and `1 + θ` lie in the MGF domain.
    pub fn theta_domain(&self) -> Result<(f64, f64), PricingError> {
        match self {
            StepLaw::Nig(p) => {
                if !(p.alpha > 0.5) {
                    return Err(PricingError::DomainTooNarrow { alpha: p.alpha });
                }
                Ok((-p.alpha - p.beta, p.alpha - p.beta - 1.0))
            }
            StepLaw::Gaussian { .. } => Ok((f64::NEG_INFINITY, f64::INFINITY)),
        }
    }

    /// The law after exponential tilting by `θ`.
    pub fn tilted(&self, theta: f64) -> Result<StepLaw, PricingError> {
        match self {
            StepLaw::Nig(p) => Ok(StepLaw::Nig(p.tilted(theta)?)),
            StepLaw::Gaussian { mean, variance } => Ok(StepLaw::Gaussian {
                mean: mean + theta * variance,
                variance: *variance,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsscherSolution {
    pub theta: f64,
    /// Final bisection interval.
    pub bracket: (f64, f64),
    /// `|ln MGF(1+θ) − ln MGF(θ) − r'|`, the relative error of the martingale condition.
    pub residual: f64,
}

/// Root of `g(θ) = ln MGF(1+θ) − ln MGF(θ) − r'`.
///
/// `g` is strictly increasing because the cumulant function is strictly
/// convex, so bisection on a sign-changing bracket finds the unique root.
pub fn solve_esscher(law: &StepLaw, riskfree: f64) -> Result<EsscherSolution, PricingError> {
    let g = |t: f64| -> Result<f64, PricingError> { Ok(law.log_mgf(1.0 + t)? - law.log_mgf(t)? - riskfree) };
    let (dlo, dhi) = law.theta_domain()?;
    let (mut lo, mut hi) = if dlo.is_finite() {
        let inset = (dhi - dlo) * 1e-13;
        (dlo + inset, dhi - inset)
    } else {
        bracket_unbounded(&g)?
    };
    let (glo, ghi) = (g(lo)?, g(hi)?);
    if glo > 0.0 || ghi < 0.0 {
        return Err(PricingError::NoRoot { low: glo, high: ghi });
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rlo, rhi) = (g(lo)?.abs(), g(hi)?.abs());
    let (theta, residual) = if rlo <= rhi { (lo, rlo) } else { (hi, rhi) };
    Ok(EsscherSolution {
        theta,
        bracket: (lo, hi),
        residual,
    })
}

fn bracket_unbounded<G>(g: &G) -> Result<(f64, f64), PricingError>
where
    G: Fn(f64) -> Result<f64, PricingError>,
{
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..1100 {
        let (glo, ghi) = (g(lo)?, g(hi)?);
        if glo <= 0.0 && ghi >= 0.0 {
            return Ok((lo, hi));
        }
        if glo > 0.0 {
            lo *= 2.0;
        }
        if ghi < 0.0 {
            hi *= 2.0;
        }
        if !lo.is_finite() || !hi.is_finite() {
            break;
        }
    }
    Err(PricingError::NoRoot {
        low: g(lo).unwrap_or(f64::NAN),
        high: g(hi).unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_closed_form() {
        let law = StepLaw::Gaussian {
            mean: 0.0,
            variance: 0.04,
        };
        let s = solve_esscher(&law, 0.0).unwrap();
        assert!((s.theta + 0.5).abs() < 1e-10, "{s:?}");
    }

    #[test]
    fn constructed_zero_root() {
        let p = GhParams::nig(3.0, 0.4, 0.7, 0.05).unwrap();
        let r = gh_log_mgf(1.0, &p).unwrap();
        let s = solve_esscher(&StepLaw::Nig(p), r).unwrap();
        assert!(s.theta.abs() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn narrow_domain_and_no_root() {
        let p = GhParams::nig(0.4, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            solve_esscher(&StepLaw::Nig(p), 0.0),
            Err(PricingError::DomainTooNarrow { .. })
        ));
        // A huge drift cannot be compensated within a bounded domain.
        let p = GhParams::nig(1.0, 0.0, 0.01, 5.0).unwrap();
        assert!(matches!(solve_esscher(&StepLaw::Nig(p), 0.0), Err(PricingError::NoRoot { .. })));
    }
}
