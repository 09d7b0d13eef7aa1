use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{logistic, logit, GarchError};
use crate::dist::StudentTParams;
use crate::optim::NelderMead;
use crate::stats;

const MIN_SERIES_LEN: usize = 100;
const MAX_NU: f64 = 500.0;

/// `y_t = c + φ y_{t−1} + θ e_{t−1} + e_t`, `e_t = √h_t z_t`,
/// `h_t = ω + α₁ e²_{t−1} + β₁ h_{t−1}`, `z_t` unit-variance Student-t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaGarchTParams {
    pub constant: f64,
    pub ar1: f64,
    pub ma1: f64,
    pub omega: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub t: StudentTParams,
}

impl ArmaGarchTParams {
    pub fn validate(&self) -> Result<(), GarchError> {
        let ok = self.ar1.abs() < 1.0
            && self.ma1.abs() < 1.0
            && self.omega > 0.0
            && self.alpha1 >= 0.0
            && self.beta1 >= 0.0
            && self.alpha1 + self.beta1 < 1.0
            && self.constant.is_finite();
        if !ok {
            return Err(GarchError::InvalidParams(format!("{self:?}")));
        }
        StudentTParams::new(self.t.nu)?;
        Ok(())
    }

    /// Standardized residuals and log-likelihood, conditioning on `y_0`
    /// with `e_0 = 0` and `h_1 = initial_variance`.
    pub fn filter(&self, series: &[f64], initial_variance: f64) -> (Vec<f64>, f64) {
        let mut z = Vec::with_capacity(series.len().saturating_sub(1));
        let ll = run_filter(self, series, initial_variance, |zt| z.push(zt));
        (z, ll)
    }

    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let nu = self.t.nu;
        let scale = ((nu - 2.0) / nu).sqrt();
        let t = rand_distr::StudentT::new(nu).expect("validated degrees of freedom");
        let mut h = self.omega / (1.0 - self.alpha1 - self.beta1);
        let mut y = self.constant / (1.0 - self.ar1);
        let mut e = 0.0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            h = self.omega + self.alpha1 * e * e + self.beta1 * h;
            let z: f64 = rng.sample(t) * scale;
            let e_new = h.sqrt() * z;
            y = self.constant + self.ar1 * y + self.ma1 * e + e_new;
            e = e_new;
            out.push(y);
        }
        out
    }
}

fn t_log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln()
}

fn run_filter<V: FnMut(f64)>(p: &ArmaGarchTParams, y: &[f64], h1: f64, mut visit: V) -> f64 {
    let nu = p.t.nu;
    let norm = t_log_norm(nu);
    let mut e_prev = 0.0;
    let mut h = h1;
    let mut ll = 0.0;
    for t in 1..y.len() {
        if t > 1 {
            h = p.omega + p.alpha1 * e_prev * e_prev + p.beta1 * h;
        }
        let e = y[t] - p.constant - p.ar1 * y[t - 1] - p.ma1 * e_prev;
        let z = e / h.sqrt();
        ll += norm - 0.5 * (nu + 1.0) * (z * z / (nu - 2.0)).ln_1p() - 0.5 * h.ln();
        visit(z);
        e_prev = e;
    }
    ll
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaGarchTModel {
    pub params: ArmaGarchTParams,
    pub initial_variance: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Standardized residuals `z_t`, one shorter than the input.
    #[serde(default)]
    pub residuals: Vec<f64>,
}

fn decode(x: &[f64]) -> Option<ArmaGarchTParams> {
    let nu = 2.0 + x[6].exp();
    if !(nu <= MAX_NU) || x[1].abs() > 7.0 || x[2].abs() > 7.0 {
        return None;
    }
    let p = logistic(x[4]);
    let s = logistic(x[5]);
    let params = ArmaGarchTParams {
        constant: x[0],
        ar1: x[1].tanh(),
        ma1: x[2].tanh(),
        omega: x[3].exp(),
        alpha1: p * s,
        beta1: p * (1.0 - s),
        t: StudentTParams { nu },
    };
    params.validate().ok().map(|_| params)
}

pub fn fit_arma_garch_t(series: &[f64]) -> Result<ArmaGarchTModel, GarchError> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(GarchError::TooFewPoints {
            need: MIN_SERIES_LEN,
            got: n,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(GarchError::InvalidParams("series must be finite".into()));
    }
    let h1 = stats::variance(series);
    let rho = stats::autocorrelations(series, 1).ok_or(GarchError::Degenerate)?;
    let phi0 = rho[0].clamp(-0.9, 0.9);
    let nf = (n - 1) as f64;
    let objective = |x: &[f64]| match decode(x) {
        Some(p) => -run_filter(&p, series, h1, |_| {}) / nf,
        None => f64::INFINITY,
    };
    let nm = NelderMead::new(7)
        .with_max_iter(6000)
        .with_step(vec![0.1 * h1.sqrt(), 0.2, 0.2, 0.5, 0.5, 0.5, 0.5]);
    let best = [0.5, 0.9]
        .iter()
        .map(|&p0| {
            let x0 = [
                stats::mean(series) * (1.0 - phi0),
                phi0.atanh(),
                0.0,
                (h1 * (1.0 - p0)).ln(),
                logit(p0),
                logit(0.1),
                6f64.ln(),
            ];
            nm.minimize(objective, &x0)
        })
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("nonempty start set");
    let params = decode(&best.x)
        .filter(|_| best.value.is_finite())
        .ok_or_else(|| GarchError::NonConvergence("no finite ARMA-GARCH-t likelihood".into()))?;
    let (residuals, log_likelihood) = params.filter(series, h1);
    Ok(ArmaGarchTModel {
        params,
        initial_variance: h1,
        log_likelihood,
        converged: best.converged,
        iterations: best.iterations,
        residuals,
    })
}
