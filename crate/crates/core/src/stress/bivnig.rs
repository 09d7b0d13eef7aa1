//! Two-dimensional NIG as a normal mean-variance mixture
//! `X = μ + WΔβ + √W·Δ^{1/2}Z`, `W ~ IG(δ/γ̃, δ²)`, `γ̃² = α² − βᵀΔβ`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::StressError;
use crate::dist::sample_inverse_gaussian;
use crate::rng;
use crate::stats;

pub type Mat2 = [[f64; 2]; 2];

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv(m: &Mat2) -> Mat2 {
    let d = det(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

fn mul_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn quad(m: &Mat2, v: [f64; 2]) -> f64 {
    let mv = mul_vec(m, v);
    v[0] * mv[0] + v[1] * mv[1]
}

fn scale(m: &Mat2, c: f64) -> Mat2 {
    [[m[0][0] * c, m[0][1] * c], [m[1][0] * c, m[1][1] * c]]
}

fn is_spd(m: &Mat2) -> bool {
    m[0][0] > 0.0 && det(m) > 0.0 && m.iter().flatten().all(|v| v.is_finite())
}

/// Lower Cholesky factor of a 2×2 SPD matrix.
fn cholesky(m: &Mat2) -> Mat2 {
    let l00 = m[0][0].sqrt();
    let l10 = m[1][0] / l00;
    [[l00, 0.0], [l10, (m[1][1] - l10 * l10).sqrt()]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivNigParams {
    pub alpha: f64,
    pub beta: [f64; 2],
    pub delta: f64,
    pub mu: [f64; 2],
    /// Dispersion `Δ`, symmetric positive definite with unit determinant.
    pub gamma_matrix: Mat2,
}

impl BivNigParams {
    pub const LAMBDA: f64 = -0.5;

    pub fn new(alpha: f64, beta: [f64; 2], delta: f64, mu: [f64; 2], gamma_matrix: Mat2) -> Result<Self, StressError> {
        let p = Self {
            alpha,
            beta,
            delta,
            mu,
            gamma_matrix,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StressError> {
        let g = &self.gamma_matrix;
        if !is_spd(g) || (g[0][1] - g[1][0]).abs() > 1e-12 * g[0][1].abs().max(1.0) {
            return Err(StressError::InvalidParams("dispersion must be symmetric positive definite".into()));
        }
        if (det(g) - 1.0).abs() > 1e-9 {
            return Err(StressError::InvalidParams(format!("dispersion determinant {} must be 1", det(g))));
        }
        if !(self.delta > 0.0) || !(self.alpha > 0.0) || !self.delta.is_finite() {
            return Err(StressError::InvalidParams("alpha and delta must be positive".into()));
        }
        if !(self.alpha * self.alpha > quad(g, self.beta)) {
            return Err(StressError::InvalidParams("need alpha^2 > beta' Delta beta".into()));
        }
        if self.mu.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(StressError::InvalidParams("mu and beta must be finite".into()));
        }
        Ok(())
    }

    /// `γ̃ = sqrt(α² − βᵀΔβ)`.
    pub fn gamma_tilde(&self) -> f64 {
        (self.alpha * self.alpha - quad(&self.gamma_matrix, self.beta)).sqrt()
    }

    pub fn mean(&self) -> [f64; 2] {
        let db = mul_vec(&self.gamma_matrix, self.beta);
        let k = self.delta / self.gamma_tilde();
        [self.mu[0] + k * db[0], self.mu[1] + k * db[1]]
    }

    /// `(δ/γ̃)Δ + (δ/γ̃³)ΔββᵀΔ`.
    pub fn covariance(&self) -> Mat2 {
        let g = self.gamma_tilde();
        let db = mul_vec(&self.gamma_matrix, self.beta);
        let (a, b) = (self.delta / g, self.delta / g.powi(3));
        let d = &self.gamma_matrix;
        [
            [a * d[0][0] + b * db[0] * db[0], a * d[0][1] + b * db[0] * db[1]],
            [a * d[1][0] + b * db[1] * db[0], a * d[1][1] + b * db[1] * db[1]],
        ]
    }

    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        let d = [x[0] - self.mu[0], x[1] - self.mu[1]];
        let q = (self.delta * self.delta + quad(&inv(&self.gamma_matrix), d)).sqrt();
        let z = self.alpha * q;
        // ln K_{3/2}(z) = ½ln(π/2z) − z + ln(1 + 1/z)
        let ln_k = 0.5 * (PI / (2.0 * z)).ln() - z + (1.0 / z).ln_1p();
        self.delta.ln() - 0.5 * 2f64.ln() + 1.5 * (self.alpha / (PI * q)).ln()
            + self.delta * self.gamma_tilde()
            + self.beta[0] * d[0]
            + self.beta[1] * d[1]
            + ln_k
    }

    pub fn pdf(&self, x: [f64; 2]) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn log_likelihood(&self, pairs: &[[f64; 2]]) -> f64 {
        pairs.iter().map(|x| self.log_pdf(*x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let l = cholesky(&self.gamma_matrix);
        let db = mul_vec(&self.gamma_matrix, self.beta);
        let g = self.gamma_tilde();
        let w = sample_inverse_gaussian(self.delta / g, self.delta * self.delta, rng);
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let s = w.sqrt();
        [
            self.mu[0] + w * db[0] + s * l[0][0] * z0,
            self.mu[1] + w * db[1] + s * (l[1][0] * z0 + l[1][1] * z1),
        ]
    }
}

/// `n` draws from one stream seeded by `seed`.
pub fn simulate_bivariate_nig(p: &BivNigParams, n: usize, seed: u64) -> Result<Vec<[f64; 2]>, StressError> {
    p.validate()?;
    let mut r = rng::stream(seed);
    Ok((0..n).map(|_| p.sample(&mut r)).collect())
}

/// Mixture form used by EM: `X = μ + Wγ + √W·Σ^{1/2}Z`, `W ~ GIG(−½, χ, ψ)`.
#[derive(Debug, Clone, Copy)]
struct Mixture {
    mu: [f64; 2],
    gamma: [f64; 2],
    sigma: Mat2,
    chi: f64,
    psi: f64,
}

impl Mixture {
    /// Rescale so `det Σ = 1`; the law is unchanged.
    fn normalized(mut self) -> Self {
        let c = det(&self.sigma).sqrt();
        self.sigma = scale(&self.sigma, 1.0 / c);
        self.gamma = [self.gamma[0] / c, self.gamma[1] / c];
        self.chi *= c;
        self.psi /= c;
        self
    }

    fn to_params(self) -> Result<BivNigParams, StressError> {
        let n = self.normalized();
        let si = inv(&n.sigma);
        let beta = mul_vec(&si, n.gamma);
        let alpha = (n.psi + quad(&si, n.gamma)).sqrt();
        let mut g = n.sigma;
        let off = 0.5 * (g[0][1] + g[1][0]);
        g[0][1] = off;
        g[1][0] = off;
        BivNigParams::new(alpha, beta, n.chi.sqrt(), n.mu, g)
    }

    /// Posterior `(E[W|x], E[1/W|x])`; the posterior is `GIG(−3/2, χ+Q, ψ+γᵀΣ⁻¹γ)`.
    fn weights(&self, pairs: &[[f64; 2]], eta: &mut [f64], dlt: &mut [f64]) {
        let si = inv(&self.sigma);
        let psi_post = self.psi + quad(&si, self.gamma);
        for (i, x) in pairs.iter().enumerate() {
            let d = [x[0] - self.mu[0], x[1] - self.mu[1]];
            let chi_post = self.chi + quad(&si, d);
            let z = (chi_post * psi_post).sqrt();
            let ratio = (chi_post / psi_post).sqrt();
            // K_{1/2}/K_{3/2} = z/(z+1), K_{5/2}/K_{3/2} = (z²+3z+3)/(z(z+1)).
            eta[i] = ratio * z / (z + 1.0);
            dlt[i] = (z * z + 3.0 * z + 3.0) / (z * (z + 1.0)) / ratio;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 500,
            restarts: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivNigFit {
    pub params: BivNigParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each EM cycle of the winning start.
    pub trace: Vec<f64>,
}

const MIN_PAIRS: usize = 100;

/// MCECM fit; the first start is moment based and the remaining
/// `restarts − 1` perturb its skewness and tail weight.
pub fn fit_bivariate_nig(pairs: &[[f64; 2]]) -> Result<BivNigFit, StressError> {
    fit_bivariate_nig_with(pairs, EmOptions::default())
}

pub fn fit_bivariate_nig_with(pairs: &[[f64; 2]], opts: EmOptions) -> Result<BivNigFit, StressError> {
    let n = pairs.len();
    if n < MIN_PAIRS {
        return Err(StressError::TooFewPairs { need: MIN_PAIRS, got: n });
    }
    if pairs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StressError::InvalidParams("pairs must be finite".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
    let cov = [
        [stats::variance(&xs), stats::covariance(&xs, &ys)],
        [stats::covariance(&xs, &ys), stats::variance(&ys)],
    ];
    if !is_spd(&cov) || det(&cov) <= 1e-12 * cov[0][0] * cov[1][1] {
        return Err(StressError::DegenerateDispersion);
    }
    let m = det(&cov).sqrt();
    let base = Mixture {
        mu: [stats::mean(&xs), stats::mean(&ys)],
        gamma: [0.0, 0.0],
        sigma: scale(&cov, 1.0 / m),
        chi: m,
        psi: 1.0 / m,
    };
    let mut r = rng::stream(opts.seed);
    let mut best: Option<BivNigFit> = None;
    for k in 0..opts.restarts.max(1) {
        let start = if k == 0 {
            base
        } else {
            let shape = m * (r.random_range(-1.5..1.5f64)).exp();
            let gs = 0.3 * m.sqrt() / m;
            Mixture {
                gamma: [
                    gs * r.sample::<f64, _>(StandardNormal) * cov[0][0].sqrt(),
                    gs * r.sample::<f64, _>(StandardNormal) * cov[1][1].sqrt(),
                ],
                chi: shape,
                psi: shape / (m * m),
                ..base
            }
        };
        match run_em(pairs, start, &opts) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                    best = Some(fit);
                }
            }
            Err(e) => log::debug!("EM start {k} failed: {e}"),
        }
    }
    let best = best.ok_or_else(|| StressError::NonConvergence("every EM start failed".into()))?;
    if !best.converged {
        log::warn!("bivariate NIG EM stopped after {} iterations without converging", best.iterations);
    }
    Ok(best)
}

fn run_em(pairs: &[[f64; 2]], start: Mixture, opts: &EmOptions) -> Result<BivNigFit, StressError> {
    let n = pairs.len();
    let nf = n as f64;
    let mut cur = start.normalized();
    let mut eta = vec![0.0; n];
    let mut dlt = vec![0.0; n];
    let mut ll = cur.to_params()?.log_likelihood(pairs);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        cur.weights(pairs, &mut eta, &mut dlt);
        let eta_bar = eta.iter().sum::<f64>() / nf;
        let dlt_bar = dlt.iter().sum::<f64>() / nf;
        let xbar = [
            pairs.iter().map(|p| p[0]).sum::<f64>() / nf,
            pairs.iter().map(|p| p[1]).sum::<f64>() / nf,
        ];
        let mut sdx = [0.0; 2];
        let mut sd_x = [0.0; 2];
        for (p, d) in pairs.iter().zip(&dlt) {
            for j in 0..2 {
                sdx[j] += d * (xbar[j] - p[j]);
                sd_x[j] += d * p[j];
            }
        }
        let denom = dlt_bar * eta_bar - 1.0;
        let gamma = [sdx[0] / nf / denom, sdx[1] / nf / denom];
        let mu = [(sd_x[0] / nf - gamma[0]) / dlt_bar, (sd_x[1] / nf - gamma[1]) / dlt_bar];
        let mut psi_m = [[0.0; 2]; 2];
        for (p, d) in pairs.iter().zip(&dlt) {
            let e = [p[0] - mu[0], p[1] - mu[1]];
            for a in 0..2 {
                for b in 0..2 {
                    psi_m[a][b] += d * e[a] * e[b];
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                psi_m[a][b] = psi_m[a][b] / nf - eta_bar * gamma[a] * gamma[b];
            }
        }
        if !is_spd(&psi_m) {
            return Err(StressError::DegenerateDispersion);
        }
        cur = Mixture {
            mu,
            gamma,
            sigma: psi_m,
            ..cur
        }
        .normalized();

        cur.weights(pairs, &mut eta, &mut dlt);
        let eta_bar = eta.iter().sum::<f64>() / nf;
        let dlt_bar = dlt.iter().sum::<f64>() / nf;
        let inv_shape = dlt_bar - 1.0 / eta_bar;
        if !(inv_shape > 0.0) {
            return Err(StressError::NonConvergence("mixing law collapsed to a point mass".into()));
        }
        cur.chi = 1.0 / inv_shape;
        cur.psi = cur.chi / (eta_bar * eta_bar);

        let new_ll = cur.to_params()?.log_likelihood(pairs);
        if !new_ll.is_finite() {
            return Err(StressError::NonConvergence("non-finite likelihood".into()));
        }
        trace.push(new_ll);
        let change = (new_ll - ll).abs() / ll.abs().max(1e-300);
        ll = new_ll;
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(BivNigFit {
        params: cur.to_params()?,
        log_likelihood: ll,
        iterations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> BivNigParams {
        let g = [[1.25, 0.5], [0.5, 1.0]];
        BivNigParams::new(2.0, [0.3, -0.2], 1.2, [0.1, -0.1], g).unwrap()
    }

    #[test]
    fn validation() {
        let g = [[1.0, 0.0], [0.0, 1.0]];
        assert!(BivNigParams::new(1.0, [0.0; 2], 1.0, [0.0; 2], [[2.0, 0.0], [0.0, 1.0]]).is_err());
        assert!(BivNigParams::new(1.0, [1.0, 0.5], 1.0, [0.0; 2], g).is_err());
        assert!(BivNigParams::new(1.0, [0.0; 2], -1.0, [0.0; 2], g).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let p = example();
        let (lo, hi, n) = (-14.0, 14.0, 700);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                total += p.pdf(x);
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-4, "{}", total * h * h);
    }

    #[test]
    fn univariate_margin_limit() {
        // With Δ = I and β₂ = 0 the first margin is NIG(α, β₁, δ, μ₁).
        let p = BivNigParams::new(1.7, [0.4, 0.0], 0.9, [0.2, 0.0], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let uni = crate::dist::GhParams::nig(1.7, 0.4, 0.9, 0.2).unwrap();
        let x = 0.7;
        let h = 0.01;
        let margin: f64 = (-3000..3000).map(|k| p.pdf([x, (k as f64 + 0.5) * h])).sum::<f64>() * h;
        let direct = crate::dist::nig_pdf(x, &uni).unwrap();
        assert!((margin - direct).abs() < 1e-7 * direct, "{margin} vs {direct}");
    }

    #[test]
    fn determinism() {
        let p = example();
        assert_eq!(
            simulate_bivariate_nig(&p, 100, 5).unwrap(),
            simulate_bivariate_nig(&p, 100, 5).unwrap()
        );
    }

    #[test]
    fn mixture_round_trip() {
        let mx = Mixture {
            mu: [0.1, 0.2],
            gamma: [0.3, -0.1],
            sigma: [[2.0, 0.3], [0.3, 1.5]],
            chi: 1.3,
            psi: 0.8,
        };
        let a = mx.to_params().unwrap();
        let b = mx.normalized().to_params().unwrap();
        let x = [0.4, -1.1];
        assert!((a.log_pdf(x) - b.log_pdf(x)).abs() < 1e-12);
        assert!((det(&a.gamma_matrix) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn em_is_monotone() {
        let p = example();
        let data = simulate_bivariate_nig(&p, 3000, 9).unwrap();
        let fit = fit_bivariate_nig(&data).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        assert!(fit.log_likelihood >= p.log_likelihood(&data) - 1.0);
    }

    #[test]
    fn rejects_short_and_degenerate() {
        assert!(matches!(
            fit_bivariate_nig(&[[0.0, 1.0]; 50]),
            Err(StressError::TooFewPairs { .. })
        ));
        let line: Vec<[f64; 2]> = (0..200).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(fit_bivariate_nig(&line), Err(StressError::DegenerateDispersion)));
    }
}
