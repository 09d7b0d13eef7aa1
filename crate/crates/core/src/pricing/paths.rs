use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_esscher, PricingConfig, PricingError, StepLaw};
use crate::dist::nig_draw;
use crate::garch::{GarchNigModel, GarchNigParams};
use crate::rng;

/// State at the valuation date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QStart {
    /// Last in-sample value of the transformed loss series.
    pub s0: f64,
    /// Last in-sample index value; only the legacy recursion uses it.
    pub ndi0: f64,
    /// Conditional variance of the first simulated step.
    pub h0: f64,
}

impl QStart {
    /// Start from a fitted model, using its one-step variance forecast.
    pub fn from_model(model: &GarchNigModel, s0: f64, ndi0: f64) -> Result<Self, PricingError> {
        let h0 = model
            .forecast_variance()
            .ok_or_else(|| PricingError::InvalidConfig("model carries no filtered state".into()))?;
        Ok(Self { s0, ndi0, h0 })
    }
}

/// Simulated risk-neutral paths, stored row-major by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub n_paths: usize,
    pub horizon: usize,
    pub start: QStart,
    pub riskfree: f64,
    /// `n_paths × (horizon + 1)` values of `S_t`, starting with `s0`.
    pub s: Vec<f64>,
    /// `n_paths × horizon` values of the index.
    pub ndi: Vec<f64>,
    /// Paths that needed at least one resample.
    pub resampled_paths: usize,
    pub resample_attempts: usize,
    /// Largest Esscher residual over every solved step.
    pub max_esscher_residual: f64,
}

impl PathSet {
    pub fn s_path(&self, k: usize) -> &[f64] {
        &self.s[k * (self.horizon + 1)..(k + 1) * (self.horizon + 1)]
    }

    pub fn ndi_path(&self, k: usize) -> &[f64] {
        &self.ndi[k * self.horizon..(k + 1) * self.horizon]
    }

    /// Index values at maturity `tau` (1-based) across all paths.
    pub fn ndi_at(&self, tau: usize) -> Vec<f64> {
        (0..self.n_paths).map(|k| self.ndi[k * self.horizon + tau - 1]).collect()
    }

    pub fn s_at(&self, tau: usize) -> Vec<f64> {
        (0..self.n_paths).map(|k| self.s[k * (self.horizon + 1) + tau]).collect()
    }
}

/// Law of `R = cm + √h·ε` with `ε` the model's standardized NIG.
pub fn step_law(params: &GarchNigParams, h: f64, riskfree: f64) -> Result<StepLaw, PricingError> {
    Ok(StepLaw::Nig(
        params.innovation.affine(h.sqrt(), params.conditional_mean(h, riskfree))?,
    ))
}

struct PathOut {
    s: Vec<f64>,
    ndi: Vec<f64>,
    max_residual: f64,
}

fn simulate_path<R: Rng + ?Sized>(
    params: &GarchNigParams,
    start: &QStart,
    cfg: &PricingConfig,
    rng: &mut R,
) -> Result<PathOut, PricingError> {
    let r = cfg.riskfree;
    let mut s = Vec::with_capacity(cfg.horizon + 1);
    let mut ndi = Vec::with_capacity(cfg.horizon);
    s.push(start.s0);
    let mut prev_ndi = start.ndi0;
    let mut h = start.h0;
    let mut max_residual: f64 = 0.0;
    for _ in 0..cfg.horizon {
        let (ret, eps) = if h > 0.0 {
            let law = step_law(params, h, r)?;
            let sol = solve_esscher(&law, r)?;
            max_residual = max_residual.max(sol.residual);
            let StepLaw::Nig(q) = law.tilted(sol.theta)? else {
                unreachable!("step law is NIG")
            };
            let ret = nig_draw(&q, rng);
            (ret, (ret - params.conditional_mean(h, r)) / h.sqrt())
        } else {
            (r, 0.0)
        };
        let prev_s = *s.last().expect("seeded with s0");
        let next_s = prev_s * ret.exp();
        let next_ndi = if cfg.legacy_recursion {
            ret.powi(10) + prev_ndi
        } else {
            next_s - prev_s
        };
        s.push(next_s);
        ndi.push(next_ndi);
        prev_ndi = next_ndi;
        h = params.variance_step(h, eps);
    }
    Ok(PathOut { s, ndi, max_residual })
}

/// Simulate `cfg.n_paths` paths under the Esscher measure. Path `k` draws
/// from its own stream derived from `(cfg.seed, k)`, so results do not
/// depend on thread count or scheduling.
pub fn simulate_q_paths(
    params: &GarchNigParams,
    start: QStart,
    cfg: &PricingConfig,
) -> Result<PathSet, PricingError> {
    cfg.validate()?;
    params.validate()?;
    if !(start.s0 > 0.0) || !(start.h0 >= 0.0) || !start.s0.is_finite() || !start.h0.is_finite() {
        return Err(PricingError::InvalidConfig(format!("invalid start state {start:?}")));
    }
    let results: Vec<(PathOut, usize)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut stream = rng::child_stream(cfg.seed, k as u64);
            let mut last_err = None;
            for attempt in 0..=cfg.max_resamples {
                match simulate_path(params, &start, cfg, &mut stream) {
                    Ok(out) => return Ok((out, attempt)),
                    Err(e) => last_err = Some(e),
                }
            }
            Err(PricingError::PathFailure {
                path: k,
                attempts: cfg.max_resamples + 1,
                cause: Box::new(last_err.expect("at least one attempt")),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut set = PathSet {
        n_paths: cfg.n_paths,
        horizon: cfg.horizon,
        start,
        riskfree: cfg.riskfree,
        s: Vec::with_capacity(cfg.n_paths * (cfg.horizon + 1)),
        ndi: Vec::with_capacity(cfg.n_paths * cfg.horizon),
        resampled_paths: 0,
        resample_attempts: 0,
        max_esscher_residual: 0.0,
    };
    for (out, attempts) in results {
        set.s.extend(out.s);
        set.ndi.extend(out.ndi);
        set.resampled_paths += usize::from(attempts > 0);
        set.resample_attempts += attempts;
        set.max_esscher_residual = set.max_esscher_residual.max(out.max_residual);
    }
    if set.resampled_paths > 0 {
        log::warn!(
            "{} paths resampled ({} extra attempts) after Esscher failures",
            set.resampled_paths,
            set.resample_attempts
        );
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GarchNigParams {
        GarchNigParams::new(0.001, 0.85, 0.1, 0.05, 2.0, -0.3).unwrap()
    }

    fn cfg(n: usize) -> PricingConfig {
        PricingConfig {
            n_paths: n,
            horizon: 6,
            riskfree: 0.001,
            ..PricingConfig::default()
        }
    }

    #[test]
    fn degenerate_model_discounts_exactly() {
        let p = GarchNigParams::new(0.0, 0.0, 0.0, 0.3, 2.0, 0.0).unwrap();
        let start = QStart { s0: 5.0, ndi0: 0.0, h0: 0.0 };
        let set = simulate_q_paths(&p, start, &cfg(3)).unwrap();
        for k in 0..3 {
            let st = set.s_path(k)[6];
            assert!((st - 5.0 * (0.001f64 * 6.0).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let start = QStart { s0: 5.0, ndi0: 0.1, h0: 0.01 };
        let a = simulate_q_paths(&params(), start, &cfg(200)).unwrap();
        let b = simulate_q_paths(&params(), start, &cfg(200)).unwrap();
        assert_eq!(a, b);
        let mut other = cfg(200);
        other.seed = 7;
        assert_ne!(a.s, simulate_q_paths(&params(), start, &other).unwrap().s);
    }

    #[test]
    fn index_is_difference_of_s() {
        let start = QStart { s0: 5.0, ndi0: 0.1, h0: 0.01 };
        let set = simulate_q_paths(&params(), start, &cfg(20)).unwrap();
        for k in 0..20 {
            let s = set.s_path(k);
            for (t, d) in set.ndi_path(k).iter().enumerate() {
                assert_eq!(*d, s[t + 1] - s[t]);
            }
        }
        assert!(set.max_esscher_residual < 1e-10);
    }

    #[test]
    fn legacy_recursion_accumulates_tenth_powers() {
        let start = QStart { s0: 5.0, ndi0: 0.25, h0: 0.01 };
        let mut c = cfg(5);
        c.legacy_recursion = true;
        let set = simulate_q_paths(&params(), start, &c).unwrap();
        let s = set.s_path(0);
        let ndi = set.ndi_path(0);
        let r1 = (s[1] / s[0]).ln();
        assert!((ndi[0] - (r1.powi(10) + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn persistent_esscher_failure_aborts() {
        // Scaled alpha below 1/2 leaves no admissible tilt.
        let p = GarchNigParams::new(1.0, 0.5, 0.1, 0.0, 0.3, 0.0).unwrap();
        let start = QStart { s0: 1.0, ndi0: 0.0, h0: 1.0 };
        let err = simulate_q_paths(&p, start, &cfg(4)).unwrap_err();
        assert!(matches!(err, PricingError::PathFailure { attempts: 11, .. }), "{err}");
    }
}
