use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{garch_variance_recursion, logistic, logit, GarchError};
use crate::dist::{nig_draw, GhParams, NigDensity};
use crate::optim::NelderMead;
use crate::stats;

const MIN_SERIES_LEN: usize = 100;
const MAX_ALPHA: f64 = 2000.0;
const NONSTATIONARY_EDGE: f64 = 1.0 - 1e-6;

/// Coefficients of `R_t = r' + λ₀√h_t − h_t/2 + √h_t ε_t` with
/// `h_t = m + a·h_{t−1} + b·h_{t−1}ε²_{t−1}` and standardized NIG `ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchNigParams {
    pub m: f64,
    pub a: f64,
    pub b: f64,
    pub lambda0: f64,
    /// Zero-mean, unit-variance NIG law of `ε_t`.
    pub innovation: GhParams,
}

/// Output of running the variance filter over a return series.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub variance: Vec<f64>,
    pub residuals: Vec<f64>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub returns: Vec<f64>,
    pub variance: Vec<f64>,
    pub innovations: Vec<f64>,
}

impl GarchNigParams {
    pub fn new(m: f64, a: f64, b: f64, lambda0: f64, alpha: f64, beta: f64) -> Result<Self, GarchError> {
        let p = Self {
            m,
            a,
            b,
            lambda0,
            innovation: GhParams::standardized_nig(alpha, beta)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GarchError> {
        let ok = self.m >= 0.0
            && self.a >= 0.0
            && self.b >= 0.0
            && self.m.is_finite()
            && self.lambda0.is_finite()
            && self.a + self.b < 1.0;
        if !ok {
            return Err(GarchError::InvalidParams(format!(
                "need m, a, b >= 0 and a + b < 1, got m={}, a={}, b={}",
                self.m, self.a, self.b
            )));
        }
        self.innovation.validate()?;
        Ok(())
    }

    #[inline]
    pub fn variance_step(&self, h: f64, eps: f64) -> f64 {
        garch_variance_recursion(self.m, self.a, self.b, h, eps)
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.m / (1.0 - self.a - self.b)
    }

    /// Conditional mean of `R_t` given `h_t`.
    #[inline]
    pub fn conditional_mean(&self, h: f64, riskfree: f64) -> f64 {
        riskfree + self.lambda0 * h.sqrt() - 0.5 * h
    }

    /// Run the filter from `h_1 = initial_variance`.
    pub fn filter(&self, returns: &[f64], riskfree: f64, initial_variance: f64) -> Result<Filtered, GarchError> {
        if !(initial_variance > 0.0) || !(self.m > 0.0) {
            return Err(GarchError::InvalidParams(
                "filtering needs m > 0 and a positive initial variance".into(),
            ));
        }
        let dens = NigDensity::new(&self.innovation)?;
        let mut variance = Vec::with_capacity(returns.len());
        let mut residuals = Vec::with_capacity(returns.len());
        let log_likelihood = run_filter(
            self,
            riskfree,
            initial_variance,
            returns,
            |e| dens.log_pdf(e),
            |h, e| {
                variance.push(h);
                residuals.push(e);
            },
        );
        if let Some(t) = variance.iter().position(|h| !h.is_finite()) {
            return Err(GarchError::VarianceOverflow(t));
        }
        Ok(Filtered {
            variance,
            residuals,
            log_likelihood,
        })
    }

    /// Simulate `n` returns under the fitted (physical) law.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        n: usize,
        riskfree: f64,
        initial_variance: f64,
        rng: &mut R,
    ) -> Simulated {
        let mut out = Simulated {
            returns: Vec::with_capacity(n),
            variance: Vec::with_capacity(n),
            innovations: Vec::with_capacity(n),
        };
        let mut h = initial_variance;
        for _ in 0..n {
            let e = nig_draw(&self.innovation, rng);
            out.returns.push(self.conditional_mean(h, riskfree) + h.sqrt() * e);
            out.variance.push(h);
            out.innovations.push(e);
            h = self.variance_step(h, e);
        }
        out
    }
}

/// Shared filter loop; `visit` sees each `(h_t, ε_t)`.
fn run_filter<L, V>(
    p: &GarchNigParams,
    riskfree: f64,
    h1: f64,
    returns: &[f64],
    log_density: L,
    mut visit: V,
) -> f64
where
    L: Fn(f64) -> f64,
    V: FnMut(f64, f64),
{
    let mut h = h1;
    let mut ll = 0.0;
    for &r in returns {
        let sd = h.sqrt();
        let e = (r - p.conditional_mean(h, riskfree)) / sd;
        ll += log_density(e) - sd.ln();
        visit(h, e);
        h = p.variance_step(h, e);
    }
    ll
}

/// `ln(S_t / S_{t−1})`, requiring every value to be positive and finite.
pub fn log_returns(series: &[f64]) -> Result<Vec<f64>, GarchError> {
    if let Some(i) = series.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(GarchError::NonPositiveSeries(i));
    }
    Ok(series.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fix `λ₀ = 0` instead of estimating it.
    pub pin_lambda0: bool,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            pin_lambda0: false,
            max_iter: 4000,
        }
    }
}

/// A fitted GARCH(1,1)-NIG model with its filtered state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchNigModel {
    pub params: GarchNigParams,
    pub riskfree: f64,
    pub initial_variance: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the optimum sits on the `a + b = 1` boundary.
    pub nonstationary: bool,
    pub lambda0_pinned: bool,
    #[serde(default)]
    pub fitted_variance: Vec<f64>,
    #[serde(default)]
    pub residuals: Vec<f64>,
}

impl GarchNigModel {
    /// One-step-ahead variance `h_{T+1}`.
    pub fn forecast_variance(&self) -> Option<f64> {
        let h = *self.fitted_variance.last()?;
        let e = *self.residuals.last()?;
        Some(self.params.variance_step(h, e))
    }

    pub fn residual_variance(&self) -> f64 {
        stats::variance(&self.residuals)
    }
}

/// Fit on the positive series `S_t` via its log-returns.
pub fn fit_garch_nig(series: &[f64], riskfree: f64) -> Result<GarchNigModel, GarchError> {
    fit_garch_nig_with(series, riskfree, FitOptions::default())
}

pub fn fit_garch_nig_with(series: &[f64], riskfree: f64, opts: FitOptions) -> Result<GarchNigModel, GarchError> {
    if series.len() < MIN_SERIES_LEN {
        return Err(GarchError::TooFewPoints {
            need: MIN_SERIES_LEN,
            got: series.len(),
        });
    }
    fit_garch_nig_returns(&log_returns(series)?, riskfree, opts)
}

struct Coords {
    pin_lambda0: bool,
}

impl Coords {
    /// Free coordinates `(ln m, logit(a+b), logit(b/(a+b)), λ₀, ln α, atanh(β/α))`.
    fn decode(&self, x: &[f64]) -> Option<(f64, f64, f64, f64, f64, f64)> {
        let m = x[0].exp();
        let p = logistic(x[1]);
        let s = logistic(x[2]);
        let lambda0 = if self.pin_lambda0 { 0.0 } else { x[3] };
        let alpha = x[4].exp();
        if !(alpha <= MAX_ALPHA) || x[5].abs() > 8.0 || !(m > 0.0) || !m.is_finite() {
            return None;
        }
        Some((m, p * (1.0 - s), p * s, lambda0, alpha, alpha * x[5].tanh()))
    }

    fn params(&self, x: &[f64]) -> Option<GarchNigParams> {
        let (m, a, b, l, alpha, beta) = self.decode(x)?;
        let p = GarchNigParams {
            m,
            a,
            b,
            lambda0: l,
            innovation: GhParams::standardized_nig(alpha, beta).ok()?,
        };
        (p.a + p.b < 1.0).then_some(p)
    }
}

/// Fit directly on log-returns. A Gaussian quasi-likelihood pass picks the
/// variance start, then all coefficients and the NIG shape are estimated
/// jointly.
pub fn fit_garch_nig_returns(returns: &[f64], riskfree: f64, opts: FitOptions) -> Result<GarchNigModel, GarchError> {
    let n = returns.len();
    if n + 1 < MIN_SERIES_LEN {
        return Err(GarchError::TooFewPoints {
            need: MIN_SERIES_LEN,
            got: n + 1,
        });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(GarchError::InvalidParams("returns must be finite".into()));
    }
    let h1 = stats::variance(returns);
    if !(h1 > 0.0) {
        return Err(GarchError::Degenerate);
    }
    let coords = Coords {
        pin_lambda0: opts.pin_lambda0,
    };
    let nf = n as f64;
    let gauss = |e: f64| -0.5 * e * e - 0.5 * (2.0 * std::f64::consts::PI).ln();

    let gaussian_objective = |x: &[f64]| match coords.params(x) {
        Some(p) => -run_filter(&p, riskfree, h1, returns, gauss, |_, _| {}) / nf,
        None => f64::INFINITY,
    };
    let lambda_start = if opts.pin_lambda0 {
        0.0
    } else {
        (stats::mean(returns) - riskfree + 0.5 * h1) / h1.sqrt()
    };
    let big_alpha = 50f64.ln();
    let nm = NelderMead::new(6).with_max_iter(opts.max_iter);
    let stage1 = [0.5, 0.9, 0.98]
        .iter()
        .map(|&p0| {
            let x0 = [(h1 * (1.0 - p0)).ln(), logit(p0), logit(0.1), lambda_start, big_alpha, 0.0];
            nm.clone()
                .with_step(vec![0.5, 0.5, 0.5, 0.05, 0.0, 0.0])
                .minimize(gaussian_objective, &x0)
        })
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("nonempty start set");
    if !stage1.value.is_finite() {
        return Err(GarchError::NonConvergence(
            "no finite Gaussian quasi-likelihood found".into(),
        ));
    }

    // Shape start from the excess kurtosis of the Gaussian-stage residuals.
    let p1 = coords.params(&stage1.x).expect("finite objective implies valid params");
    let mut resid = Vec::with_capacity(n);
    run_filter(&p1, riskfree, h1, returns, gauss, |_, e| resid.push(e));
    let kurt = stats::excess_kurtosis(&resid).max(3.0 / (MAX_ALPHA * 0.5).powi(2));
    let mut x0 = stage1.x.clone();
    x0[4] = (3.0 / kurt).sqrt().ln();
    x0[5] = 0.0;

    let objective = |x: &[f64]| match coords.params(x) {
        Some(p) => {
            let dens = NigDensity::new(&p.innovation).expect("validated shape");
            -run_filter(&p, riskfree, h1, returns, |e| dens.log_pdf(e), |_, _| {}) / nf
        }
        None => f64::INFINITY,
    };
    let step = vec![0.2, 0.3, 0.3, if opts.pin_lambda0 { 0.0 } else { 0.05 }, 0.3, 0.1];
    let best = nm.with_step(step).minimize(objective, &x0);
    let params = coords
        .params(&best.x)
        .filter(|_| best.value.is_finite())
        .ok_or_else(|| GarchError::NonConvergence("no finite NIG likelihood found".into()))?;
    let filtered = params.filter(returns, riskfree, h1)?;
    if !best.converged {
        log::warn!("GARCH-NIG fit stopped after {} iterations without converging", best.iterations);
    }
    Ok(GarchNigModel {
        params,
        riskfree,
        initial_variance: h1,
        log_likelihood: filtered.log_likelihood,
        converged: best.converged,
        iterations: stage1.iterations + best.iterations,
        nonstationary: params.a + params.b >= NONSTATIONARY_EDGE,
        lambda0_pinned: opts.pin_lambda0,
        fitted_variance: filtered.variance,
        residuals: filtered.residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn truth() -> GarchNigParams {
        GarchNigParams::new(0.05, 0.9, 0.05, 0.1, 1.5, -0.3).unwrap()
    }

    #[test]
    fn validation() {
        assert!(GarchNigParams::new(0.1, 0.6, 0.4, 0.0, 2.0, 0.0).is_err());
        assert!(GarchNigParams::new(-0.1, 0.5, 0.1, 0.0, 2.0, 0.0).is_err());
        assert!(GarchNigParams::new(0.1, 0.5, 0.1, 0.0, 1.0, 1.0).is_err());
        assert!(GarchNigParams::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn simulate_filter_round_trip() {
        let p = truth();
        let sim = p.simulate(2000, 0.01, 0.7, &mut rng::stream(3));
        let f = p.filter(&sim.returns, 0.01, 0.7).unwrap();
        for (a, b) in f.residuals.iter().zip(&sim.innovations) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in f.variance.iter().zip(&sim.variance) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        assert!(f.variance.iter().all(|&h| h > 0.0));
    }

    #[test]
    fn log_returns_reject_nonpositive() {
        assert!(matches!(log_returns(&[1.0, 0.0, 2.0]), Err(GarchError::NonPositiveSeries(1))));
        let r = log_returns(&[1.0, std::f64::consts::E]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            fit_garch_nig(&[1.0; 50], 0.0),
            Err(GarchError::TooFewPoints { need: 100, got: 50 })
        ));
    }

    #[test]
    fn fit_moderate_sample() {
        let p = truth();
        let sim = p.simulate(3000, 0.0, 1.0, &mut rng::stream(17));
        let m = fit_garch_nig_returns(&sim.returns, 0.0, FitOptions::default()).unwrap();
        assert!(m.params.a + m.params.b < 1.0);
        let rv = m.residual_variance();
        assert!((0.8..=1.2).contains(&rv), "{rv}");
        assert!((m.params.a - 0.9).abs() < 0.1, "{:?}", m.params);
        let recomputed = m.params.filter(&sim.returns, 0.0, m.initial_variance).unwrap();
        assert_eq!(recomputed.residuals, m.residuals);
        assert!(m.forecast_variance().unwrap() > 0.0);
    }

    #[test]
    fn pinned_risk_premium_stays_zero() {
        let p = truth();
        let sim = p.simulate(500, 0.0, 1.0, &mut rng::stream(5));
        let opts = FitOptions {
            pin_lambda0: true,
            ..FitOptions::default()
        };
        let m = fit_garch_nig_returns(&sim.returns, 0.0, opts).unwrap();
        assert_eq!(m.params.lambda0, 0.0);
        assert!(m.lambda0_pinned);
    }
}
