use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{PathSet, PricingConfig, PricingError};

const IV_LOW: f64 = 1e-6;
const IV_HIGH: f64 = 5.0;
const IV_PRICE_TOL: f64 = 1e-8;

/// Monte Carlo call and put prices for one `(t, T, K)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    /// Valuation step; always 0, the last in-sample period.
    pub t: usize,
    pub maturity: usize,
    pub strike: f64,
    pub call: f64,
    pub put: f64,
    pub se_call: f64,
    pub se_put: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionSurface {
    pub quotes: Vec<OptionQuote>,
    pub n_paths: usize,
    pub riskfree: f64,
}

impl OptionSurface {
    pub fn quote(&self, maturity: usize, strike: f64) -> Option<&OptionQuote> {
        self.quotes
            .iter()
            .find(|q| q.maturity == maturity && q.strike == strike)
    }
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = xs.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (nf - 1.0)).sqrt() / nf.sqrt())
}

/// Discounted averages of `(NDI_T − K)_+` and `(K − NDI_T)_+` for every
/// maturity in the path set and every configured strike.
pub fn price_options(paths: &PathSet, cfg: &PricingConfig) -> Result<OptionSurface, PricingError> {
    if paths.n_paths == 0 || paths.horizon == 0 {
        return Err(PricingError::EmptyPaths);
    }
    let n = paths.n_paths;
    let mut quotes = Vec::with_capacity(paths.horizon * cfg.strikes.len());
    for tau in 1..=paths.horizon {
        let x = paths.ndi_at(tau);
        let disc = (-paths.riskfree * tau as f64).exp();
        for &k in &cfg.strikes {
            let (c, se_c) = mean_and_se(x.iter().map(|v| (v - k).max(0.0)), n);
            let (p, se_p) = mean_and_se(x.iter().map(|v| (k - v).max(0.0)), n);
            quotes.push(OptionQuote {
                t: 0,
                maturity: tau,
                strike: k,
                call: disc * c,
                put: disc * p,
                se_call: disc * se_c,
                se_put: disc * se_p,
            });
        }
    }
    Ok(OptionSurface {
        quotes,
        n_paths: n,
        riskfree: paths.riskfree,
    })
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black-Scholes call with continuously compounded per-period rate `r`.
pub fn black_scholes_call(s: f64, k: f64, t: f64, r: f64, sigma: f64) -> f64 {
    let vt = sigma * t.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * t) / vt;
    s * norm_cdf(d1) - k * (-r * t).exp() * norm_cdf(d1 - vt)
}

/// Black-Scholes implied volatility by bisection on `[1e-6, 5]`. `None`
/// when the price is outside the no-arbitrage band or the search interval.
pub fn implied_vol(price: f64, s: f64, k: f64, t: f64, r: f64) -> Option<f64> {
    if !(s > 0.0 && k > 0.0 && t > 0.0 && price.is_finite()) {
        return None;
    }
    let intrinsic = (s - k * (-r * t).exp()).max(0.0);
    if !(price > intrinsic && price < s) {
        return None;
    }
    let f = |sig: f64| black_scholes_call(s, k, t, r, sig) - price;
    let (mut lo, mut hi) = (IV_LOW, IV_HIGH);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < IV_PRICE_TOL * 1e-4 || hi - lo < 1e-14 {
            return Some(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    (f(mid).abs() < IV_PRICE_TOL).then_some(mid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvCell {
    pub maturity: usize,
    pub strike: f64,
    /// `S / K`.
    pub moneyness: f64,
    pub iv: Option<f64>,
}

/// Implied vols of the call quotes against `spot`. Cells with a
/// nonpositive strike or a price outside the arbitrage band are missing.
pub fn implied_vol_surface(surface: &OptionSurface, spot: f64) -> Vec<IvCell> {
    surface
        .quotes
        .iter()
        .map(|q| IvCell {
            maturity: q.maturity,
            strike: q.strike,
            moneyness: if q.strike > 0.0 { spot / q.strike } else { f64::NAN },
            iv: implied_vol(q.call, spot, q.strike, q.maturity as f64, surface.riskfree),
        })
        .collect()
}

pub fn write_price_csv<W: Write>(surface: &OptionSurface, writer: W) -> Result<(), PricingError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "T", "K", "call", "put", "se_call", "se_put"])?;
    for q in &surface.quotes {
        w.write_record([
            q.t.to_string(),
            q.maturity.to_string(),
            q.strike.to_string(),
            q.call.to_string(),
            q.put.to_string(),
            q.se_call.to_string(),
            q.se_put.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_iv_csv<W: Write>(cells: &[IvCell], writer: W) -> Result<(), PricingError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["T", "M", "iv"])?;
    for c in cells.iter().filter(|c| c.moneyness.is_finite()) {
        w.write_record([
            c.maturity.to_string(),
            c.moneyness.to_string(),
            c.iv.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::QStart;

    fn toy_paths(values: &[f64]) -> PathSet {
        PathSet {
            n_paths: values.len(),
            horizon: 1,
            start: QStart { s0: 1.0, ndi0: 0.0, h0: 0.0 },
            riskfree: 0.01,
            s: values.iter().flat_map(|v| [1.0, 1.0 + v]).collect(),
            ndi: values.to_vec(),
            resampled_paths: 0,
            resample_attempts: 0,
            max_esscher_residual: 0.0,
        }
    }

    #[test]
    fn estimator_identities() {
        let paths = toy_paths(&[-0.4, 0.1, 0.3, 0.9, -1.2]);
        let cfg = PricingConfig {
            strikes: vec![-2.0, -0.5, 0.0, 0.2, 0.5, 2.0],
            ..PricingConfig::default()
        };
        let surf = price_options(&paths, &cfg).unwrap();
        let mean = (-0.4 + 0.1 + 0.3 + 0.9 - 1.2) / 5.0;
        let disc = (-0.01f64).exp();
        for w in surf.quotes.windows(2) {
            assert!(w[0].call >= w[1].call && w[0].put <= w[1].put);
        }
        for q in &surf.quotes {
            assert!((q.call - q.put - disc * (mean - q.strike)).abs() < 1e-12);
            assert!(q.call >= 0.0 && q.put >= 0.0);
        }
        assert_eq!(surf.quote(1, -2.0).unwrap().put, 0.0);
        assert_eq!(surf.quote(1, 2.0).unwrap().call, 0.0);
    }

    #[test]
    fn iv_round_trip_and_bounds() {
        for sigma in [0.1, 0.3, 1.0] {
            let c = black_scholes_call(100.0, 95.0, 0.75, 0.02, sigma);
            let iv = implied_vol(c, 100.0, 95.0, 0.75, 0.02).unwrap();
            assert!((iv - sigma).abs() < 1e-5, "{sigma} -> {iv}");
        }
        let intrinsic = 100.0 - 95.0 * (-0.02f64 * 0.75).exp();
        assert!(implied_vol(intrinsic, 100.0, 95.0, 0.75, 0.02).is_none());
        assert!(implied_vol(100.0, 100.0, 95.0, 0.75, 0.02).is_none());
        let lo = implied_vol(5.0, 100.0, 100.0, 1.0, 0.0).unwrap();
        let hi = implied_vol(6.0, 100.0, 100.0, 1.0, 0.0).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn empty_paths_rejected() {
        let mut p = toy_paths(&[0.1]);
        p.n_paths = 0;
        p.ndi.clear();
        assert!(matches!(
            price_options(&p, &PricingConfig::default()),
            Err(PricingError::EmptyPaths)
        ));
    }
}
