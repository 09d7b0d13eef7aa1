//! Stress testing of the index against climate factors: ARMA-GARCH-t
//! filtering, a bivariate NIG fit of the standardized residuals, and
//! CoVaR/CoES/CoETL estimated from simulated pairs.

mod bivnig;
mod comeasures;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::garch::{fit_arma_garch_t, ljung_box, ArmaGarchTParams, LjungBox, DEFAULT_LJUNG_BOX_LAGS};
use crate::index::NdiSeries;
use crate::{rng, stats};

pub use bivnig::{fit_bivariate_nig, fit_bivariate_nig_with, simulate_bivariate_nig, BivNigFit, BivNigParams, EmOptions, Mat2};
pub use comeasures::{coes, coetl, covar, es, var, MIN_CONDITIONAL, MIN_JOINT_TAIL};

pub const DEFAULT_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

#[derive(Debug, Error)]
pub enum StressError {
    #[error("need at least {need} conditional scenarios, got {got}")]
    TooFewConditionalScenarios { need: usize, got: usize },
    #[error("joint tail holds {got} scenarios, need {need}")]
    EmptyJointTail { need: usize, got: usize },
    #[error("need at least {need} pairs, got {got}")]
    TooFewPairs { need: usize, got: usize },
    #[error("dispersion matrix is degenerate")]
    DegenerateDispersion,
    #[error("EM did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed factor file: {0}")]
    MalformedFactor(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn stage<E: std::error::Error + Send + Sync + 'static>(stage: &'static str) -> impl FnOnce(E) -> StressError {
    move |e| StressError::Stage {
        stage,
        source: Box::new(e),
    }
}

/// Calendar month `(year, month)`.
pub type Month = (i32, u32);

fn month_index(m: Month) -> i64 {
    m.0 as i64 * 12 + m.1 as i64 - 1
}

fn month_label(m: Month) -> String {
    format!("{:04}-{:02}", m.0, m.1)
}

fn parse_month(s: &str) -> Option<Month> {
    let s = s.trim();
    let (y, m) = if let Some((y, rest)) = s.split_once('-') {
        (y, rest.split('-').next()?)
    } else if s.len() == 6 {
        (&s[..4], &s[4..])
    } else {
        return None;
    };
    let (y, m): (i32, u32) = (y.parse().ok()?, m.parse().ok()?);
    (1..=12).contains(&m).then_some((y, m))
}

/// A monthly factor series such as maximum temperature or PDSI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSeries {
    pub name: String,
    pub months: Vec<Month>,
    pub values: Vec<f64>,
}

impl FactorSeries {
    /// Two columns `month,value` with a header; months as `YYYY-MM`,
    /// `YYYYMM` or `YYYY-MM-DD`.
    pub fn from_csv<R: Read>(name: &str, reader: R) -> Result<Self, StressError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let bad = || StressError::MalformedFactor(format!("row {:?}", rec));
            let m = parse_month(rec.get(0).unwrap_or("")).ok_or_else(bad)?;
            let v: f64 = rec.get(1).unwrap_or("").parse().map_err(|_| bad())?;
            if !v.is_finite() || rows.insert(m, v).is_some() {
                return Err(bad());
            }
        }
        let (months, values) = rows.into_iter().unzip();
        Ok(Self {
            name: name.to_string(),
            months,
            values,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StressError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month", "value"])?;
        for (m, v) in self.months.iter().zip(&self.values) {
            w.write_record([month_label(*m), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `Δv` at each month whose predecessor month is present.
    pub fn differenced(&self) -> BTreeMap<Month, f64> {
        self.months
            .windows(2)
            .zip(self.values.windows(2))
            .filter(|(m, _)| month_index(m[1]) - month_index(m[0]) == 1)
            .map(|(m, v)| (m[1], v[1] - v[0]))
            .collect()
    }
}

/// Monthly index: the sum of both semimonthly values of each month. Months
/// missing a half are dropped.
pub fn monthly_ndi(ndi: &NdiSeries) -> BTreeMap<Month, f64> {
    let mut acc: BTreeMap<Month, (f64, u8)> = BTreeMap::new();
    for (p, v) in ndi.periods[1..].iter().zip(&ndi.ndi) {
        let e = acc.entry((p.year, p.month)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().filter(|(_, (_, c))| *c == 2).map(|(m, (v, _))| (m, v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressConfig {
    pub levels: Vec<f64>,
    pub n_sims: usize,
    /// Independent re-simulations used for the Monte Carlo standard errors.
    pub replicates: usize,
    pub seed: u64,
    pub ljung_box_lags: usize,
    pub em: EmOptions,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS.to_vec(),
            n_sims: 10_000,
            replicates: 20,
            seed: 42,
            ljung_box_lags: DEFAULT_LJUNG_BOX_LAGS,
            em: EmOptions::default(),
        }
    }
}

/// One co-measure estimate with its standard error, or why it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub error: Option<String>,
}

impl Estimate {
    fn from_runs(main: Result<f64, StressError>, reps: &[Result<f64, StressError>]) -> Self {
        match main {
            Ok(v) => {
                let ok: Vec<f64> = reps.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
                let se = (ok.len() == reps.len() && ok.len() >= 2).then(|| stats::std_dev(&ok));
                Self {
                    value: Some(v),
                    se,
                    error: None,
                }
            }
            Err(e) => Self {
                value: None,
                se: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoCell {
    pub level: f64,
    pub covar: Estimate,
    pub coes: Estimate,
    pub coetl: Estimate,
}

/// Co-measures at each level on `sample`, with standard errors from
/// `replicates` (each the same size as `sample`).
pub fn co_measures(sample: &[[f64; 2]], replicates: &[Vec<[f64; 2]>], levels: &[f64]) -> Vec<CoCell> {
    type Measure = fn(&[[f64; 2]], f64) -> Result<f64, StressError>;
    let est = |f: Measure, q: f64| {
        let reps: Vec<_> = replicates.iter().map(|r| f(r, q)).collect();
        Estimate::from_runs(f(sample, q), &reps)
    };
    levels
        .iter()
        .map(|&q| CoCell {
            level: q,
            covar: est(covar, q),
            coes: est(coes, q),
            coetl: est(coetl, q),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStress {
    pub factor: String,
    pub months: Vec<String>,
    pub ljung_box_factor: LjungBox,
    pub ljung_box_ndi: LjungBox,
    pub ljung_box_factor_residuals: LjungBox,
    pub ljung_box_ndi_residuals: LjungBox,
    /// Correlation of the differenced factor and monthly index.
    pub correlation_raw: f64,
    /// Correlation of the standardized residuals.
    pub correlation_residual: f64,
    pub factor_model: ArmaGarchTParams,
    pub ndi_model: ArmaGarchTParams,
    pub bivariate: BivNigFit,
    pub cells: Vec<CoCell>,
    /// Standardized residual pairs `[factor, index]`.
    #[serde(skip)]
    pub residual_pairs: Vec<[f64; 2]>,
    #[serde(skip)]
    pub simulated: Vec<[f64; 2]>,
}

/// Full pipeline for one factor. Co-measures are on the standardized
/// residual scale.
pub fn stress_pipeline(ndi: &NdiSeries, factor: &FactorSeries, cfg: &StressConfig) -> Result<FactorStress, StressError> {
    if cfg.levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) || cfg.n_sims == 0 {
        return Err(StressError::InvalidParams("levels must lie in (0, 1) and n_sims be positive".into()));
    }
    let monthly = monthly_ndi(ndi);
    let diff = factor.differenced();
    let aligned: Vec<(Month, f64, f64)> = diff
        .iter()
        .filter_map(|(m, x)| monthly.get(m).map(|y| (*m, *x, *y)))
        .collect();
    let xs: Vec<f64> = aligned.iter().map(|a| a.1).collect();
    let ys: Vec<f64> = aligned.iter().map(|a| a.2).collect();
    let lags = cfg.ljung_box_lags;
    let lb_x = ljung_box(&xs, lags).map_err(stage("factor Ljung-Box"))?;
    let lb_y = ljung_box(&ys, lags).map_err(stage("index Ljung-Box"))?;
    let fx = fit_arma_garch_t(&xs).map_err(stage("factor ARMA-GARCH filter"))?;
    let fy = fit_arma_garch_t(&ys).map_err(stage("index ARMA-GARCH filter"))?;
    let lb_rx = ljung_box(&fx.residuals, lags).map_err(stage("factor residual Ljung-Box"))?;
    let lb_ry = ljung_box(&fy.residuals, lags).map_err(stage("index residual Ljung-Box"))?;
    let pairs: Vec<[f64; 2]> = fx.residuals.iter().zip(&fy.residuals).map(|(x, y)| [*x, *y]).collect();
    let bivariate = fit_bivariate_nig_with(&pairs, cfg.em).map_err(stage("bivariate NIG fit"))?;
    let simulated =
        simulate_bivariate_nig(&bivariate.params, cfg.n_sims, cfg.seed).map_err(stage("simulation"))?;
    let replicates: Vec<Vec<[f64; 2]>> = (0..cfg.replicates as u64)
        .map(|k| simulate_bivariate_nig(&bivariate.params, cfg.n_sims, rng::child_seed(cfg.seed, k + 1)))
        .collect::<Result<_, _>>()
        .map_err(stage("simulation"))?;
    let cells = co_measures(&simulated, &replicates, &cfg.levels);
    let (rx, ry): (Vec<f64>, Vec<f64>) = pairs.iter().map(|p| (p[0], p[1])).unzip();
    Ok(FactorStress {
        factor: factor.name.clone(),
        months: aligned.iter().map(|a| month_label(a.0)).collect(),
        ljung_box_factor: lb_x,
        ljung_box_ndi: lb_y,
        ljung_box_factor_residuals: lb_rx,
        ljung_box_ndi_residuals: lb_ry,
        correlation_raw: stats::correlation(&xs, &ys),
        correlation_residual: stats::correlation(&rx, &ry),
        factor_model: fx.params,
        ndi_model: fy.params,
        bivariate,
        cells,
        residual_pairs: pairs,
        simulated,
    })
}

/// One row per factor and level.
pub fn write_table_csv<W: Write>(results: &[FactorStress], writer: W) -> Result<(), StressError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "factor", "level", "covar", "coes", "coetl", "se_covar", "se_coes", "se_coetl", "errors",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for f in results {
        for c in &f.cells {
            let errors: Vec<String> = [("CoVaR", &c.covar), ("CoES", &c.coes), ("CoETL", &c.coetl)]
                .iter()
                .filter_map(|(n, e)| e.error.as_ref().map(|m| format!("{n}: {m}")))
                .collect();
            w.write_record([
                f.factor.clone(),
                c.level.to_string(),
                opt(c.covar.value),
                opt(c.coes.value),
                opt(c.coetl.value),
                opt(c.covar.se),
                opt(c.coes.se),
                opt(c.coetl.se),
                errors.join("; "),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Simulated and observed residual pairs.
pub fn write_scatter_csv<W: Write>(results: &[FactorStress], writer: W) -> Result<(), StressError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["factor", "source", "x", "y"])?;
    for f in results {
        for (src, pts) in [("simulated", &f.simulated), ("observed", &f.residual_pairs)] {
            for p in pts.iter() {
                w.write_record([f.factor.as_str(), src, &p[0].to_string(), &p[1].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Fitted density on a `grid × grid` lattice covering the observed pairs.
pub fn write_contour_csv<W: Write>(results: &[FactorStress], grid: usize, writer: W) -> Result<(), StressError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["factor", "x", "y", "density"])?;
    let grid = grid.max(2);
    for f in results {
        let range = |j: usize| {
            let v: Vec<f64> = f.residual_pairs.iter().map(|p| p[j]).collect();
            let (lo, hi) = (stats::quantile(&v, 0.0), stats::quantile(&v, 1.0));
            let pad = 0.1 * (hi - lo).max(1e-9);
            (lo - pad, hi + pad)
        };
        let ((x0, x1), (y0, y1)) = (range(0), range(1));
        for i in 0..grid {
            for j in 0..grid {
                let x = x0 + (x1 - x0) * i as f64 / (grid - 1) as f64;
                let y = y0 + (y1 - y0) * j as f64 / (grid - 1) as f64;
                w.write_record([
                    f.factor.clone(),
                    x.to_string(),
                    y.to_string(),
                    f.bivariate.params.pdf([x, y]).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_ndi_with_exponent;
    use crate::ingest::Period;

    #[test]
    fn month_parsing() {
        assert_eq!(parse_month("1996-03"), Some((1996, 3)));
        assert_eq!(parse_month("199603"), Some((1996, 3)));
        assert_eq!(parse_month("1996-03-01"), Some((1996, 3)));
        assert_eq!(parse_month("1996-13"), None);
    }

    #[test]
    fn factor_csv_and_differencing() {
        let f = FactorSeries::from_csv("pdsi", "month,pdsi\n2000-01,1.0\n2000-02,1.5\n2000-04,0.0\n2000-05,-1\n".as_bytes())
            .unwrap();
        let d = f.differenced();
        assert_eq!(d.len(), 2);
        assert_eq!(d[&(2000, 2)], 0.5);
        assert_eq!(d[&(2000, 5)], -1.0);
        assert!(FactorSeries::from_csv("x", "m,v\n2000-01,1\n2000-01,2\n".as_bytes()).is_err());
    }

    #[test]
    fn monthly_sums_telescope() {
        let periods: Vec<Period> = (0..48)
            .map(|i| Period::new(2000 + i / 24, (i % 24 / 2) as u32 + 1, i % 2 == 1))
            .collect();
        let losses: Vec<f64> = (0..48).map(|i| ((i * 13) % 7) as f64 * 1e6 + 1.0).collect();
        let ndi = build_ndi_with_exponent(&periods, &losses, 0.1).unwrap();
        let m = monthly_ndi(&ndi);
        // January 2000 lacks its first half's difference.
        assert_eq!(m.len(), 23);
        let feb = m[&(2000, 2)];
        assert!((feb - (ndi.s[3] - ndi.s[1])).abs() < 1e-12);
    }
}
