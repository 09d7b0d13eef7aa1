//! Euler risk budgets of a weighted portfolio of per-event-type loss
//! returns, under standard deviation and historical expected tail loss.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{difference, DEFAULT_EXPONENT};
use crate::ingest::{normalize_event_type, LossPanel};
use crate::stats;

pub const DEFAULT_WINDOW: usize = 400;
pub const MIN_TAIL_SCENARIOS: usize = 10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RiskBudgetError {
    #[error("portfolio variance is zero")]
    ZeroPortfolioVariance,
    #[error("tail at level {level} holds {got} scenarios, need {need}")]
    TooFewTailScenarios { level: f64, got: usize, need: usize },
    #[error("total risk is zero; percentages are undefined")]
    ZeroTotalRisk,
    #[error("event type {0:?} appears in more than one group")]
    OverlappingGroups(String),
    #[error("event types not covered by any group: {0:?}")]
    UncoveredTypes(Vec<String>),
    #[error("unknown event type {0:?} in group definition")]
    UnknownType(String),
    #[error("panel has {got} periods, need at least {need}")]
    PanelTooShort { need: usize, got: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for RiskBudgetError {
    fn from(e: csv::Error) -> Self {
        RiskBudgetError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for RiskBudgetError {
    fn from(e: std::io::Error) -> Self {
        RiskBudgetError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub w: Vec<f64>,
}

impl PortfolioWeights {
    pub fn equal(n: usize) -> Self {
        Self {
            w: vec![1.0 / n as f64; n],
        }
    }

    pub fn new(w: Vec<f64>) -> Result<Self, RiskBudgetError> {
        if w.is_empty() || w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(RiskBudgetError::InvalidWeights("weights must be finite and nonnegative".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(RiskBudgetError::InvalidWeights(format!("weights sum to {s}, not 1")));
        }
        Ok(Self { w })
    }
}

/// Period × type matrix of loss returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub labels: Vec<String>,
    pub types: Vec<String>,
    /// One row per period.
    pub rows: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn new(labels: Vec<String>, types: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, RiskBudgetError> {
        if labels.len() != rows.len() {
            return Err(RiskBudgetError::InvalidPanel("label count differs from row count".into()));
        }
        if rows.iter().any(|r| r.len() != types.len()) {
            return Err(RiskBudgetError::InvalidPanel("row width differs from type count".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RiskBudgetError::InvalidPanel("returns must be finite".into()));
        }
        Ok(Self { labels, types, rows })
    }

    /// First differences of `L_{t,i}^0.1` per event type.
    pub fn from_loss_panel(panel: &LossPanel) -> Result<Self, RiskBudgetError> {
        Self::from_loss_panel_with_exponent(panel, DEFAULT_EXPONENT)
    }

    pub fn from_loss_panel_with_exponent(panel: &LossPanel, exponent: f64) -> Result<Self, RiskBudgetError> {
        if panel.len() < 2 {
            return Err(RiskBudgetError::PanelTooShort { need: 2, got: panel.len() });
        }
        let cols: Vec<Vec<f64>> = (0..panel.event_types.len())
            .map(|j| {
                let s: Vec<f64> = panel.column(j).iter().map(|l| l.powf(exponent)).collect();
                difference(&s).expect("at least two periods")
            })
            .collect();
        let rows = (0..panel.len() - 1)
            .map(|t| cols.iter().map(|c| c[t]).collect())
            .collect();
        let labels = panel.periods[1..].iter().map(|p| p.label()).collect();
        Self::new(labels, panel.event_types.clone(), rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> ReturnPanel {
        ReturnPanel {
            labels: self.labels[range.clone()].to_vec(),
            types: self.types.clone(),
            rows: self.rows[range].to_vec(),
        }
    }

    fn check_weights(&self, w: &PortfolioWeights) -> Result<(), RiskBudgetError> {
        if w.w.len() != self.types.len() {
            return Err(RiskBudgetError::InvalidWeights(format!(
                "{} weights for {} types",
                w.w.len(),
                self.types.len()
            )));
        }
        if self.rows.len() < 2 {
            return Err(RiskBudgetError::PanelTooShort { need: 2, got: self.rows.len() });
        }
        Ok(())
    }

    fn portfolio(&self, w: &PortfolioWeights) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(&w.w).map(|(x, wi)| x * wi).sum())
            .collect()
    }
}

/// `MCTR_i = w_i (Σw)_i / sqrt(wᵀΣw)` with the sample covariance.
/// `(Σw)_i` is computed as `cov(r_i, r_p)`, which avoids forming `Σ`.
pub fn std_mctr(panel: &ReturnPanel, w: &PortfolioWeights) -> Result<Vec<f64>, RiskBudgetError> {
    panel.check_weights(w)?;
    let rp = panel.portfolio(w);
    let var = stats::variance(&rp);
    let scale = rp.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(var > (f64::EPSILON * scale).powi(2) * rp.len() as f64) || !(scale > 0.0) {
        return Err(RiskBudgetError::ZeroPortfolioVariance);
    }
    let sd = var.sqrt();
    let mp = stats::mean(&rp);
    let n1 = (rp.len() - 1) as f64;
    Ok((0..panel.types.len())
        .map(|i| {
            if w.w[i] == 0.0 {
                return 0.0;
            }
            let col_mean = panel.rows.iter().map(|r| r[i]).sum::<f64>() / rp.len() as f64;
            let cov = panel
                .rows
                .iter()
                .zip(&rp)
                .map(|(r, p)| (r[i] - col_mean) * (p - mp))
                .sum::<f64>()
                / n1;
            w.w[i] * cov / sd
        })
        .collect())
}

/// Historical-scenario ETL contributions at confidence `level`: the tail
/// is every period whose portfolio return is at or below the type-7
/// `(1 − level)` quantile, and `MCTR_i = −w_i · mean_tail(r_i)`.
pub fn etl_mctr(panel: &ReturnPanel, w: &PortfolioWeights, level: f64) -> Result<Vec<f64>, RiskBudgetError> {
    etl_mctr_with_min(panel, w, level, MIN_TAIL_SCENARIOS)
}

/// [`etl_mctr`] with a custom minimum tail size.
pub fn etl_mctr_with_min(
    panel: &ReturnPanel,
    w: &PortfolioWeights,
    level: f64,
    min_tail: usize,
) -> Result<Vec<f64>, RiskBudgetError> {
    panel.check_weights(w)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(RiskBudgetError::InvalidWeights(format!("level {level} must be in (0, 1)")));
    }
    let rp = panel.portfolio(w);
    let threshold = stats::quantile(&rp, 1.0 - level);
    let tail: Vec<usize> = (0..rp.len()).filter(|&t| rp[t] <= threshold).collect();
    if tail.len() < min_tail.max(1) {
        return Err(RiskBudgetError::TooFewTailScenarios {
            level,
            got: tail.len(),
            need: min_tail.max(1),
        });
    }
    let nt = tail.len() as f64;
    Ok((0..panel.types.len())
        .map(|i| -w.w[i] * tail.iter().map(|&t| panel.rows[t][i]).sum::<f64>() / nt)
        .collect())
}

/// Percent contributions, summing to 100.
pub fn pctr(mctr: &[f64]) -> Result<Vec<f64>, RiskBudgetError> {
    let total: f64 = mctr.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(RiskBudgetError::ZeroTotalRisk);
    }
    Ok(mctr.iter().map(|m| 100.0 * m / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub members: Vec<String>,
}

/// Sum contributions over a partition of the event types. Members are
/// matched with the same normalization as ingestion.
pub fn group_mctr(mctr: &[f64], types: &[String], groups: &[Group]) -> Result<Vec<(String, f64)>, RiskBudgetError> {
    let index: HashMap<String, usize> = types
        .iter()
        .enumerate()
        .map(|(i, t)| (normalize_event_type(t), i))
        .collect();
    let mut owner = vec![false; types.len()];
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let mut sum = 0.0;
        for m in &g.members {
            let i = *index
                .get(&normalize_event_type(m))
                .ok_or_else(|| RiskBudgetError::UnknownType(m.clone()))?;
            if std::mem::replace(&mut owner[i], true) {
                return Err(RiskBudgetError::OverlappingGroups(types[i].clone()));
            }
            sum += mctr[i];
        }
        out.push((g.name.clone(), sum));
    }
    let missing: Vec<String> = types
        .iter()
        .zip(&owner)
        .filter(|(_, o)| !**o)
        .map(|(t, _)| t.clone())
        .collect();
    if !missing.is_empty() {
        return Err(RiskBudgetError::UncoveredTypes(missing));
    }
    Ok(out)
}

/// Parse a group file of lines `group name: type, type, …`.
pub fn parse_groups(text: &str) -> Result<Vec<Group>, RiskBudgetError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (name, members) = l
                .split_once(':')
                .ok_or_else(|| RiskBudgetError::InvalidPanel(format!("bad group line {l:?}")))?;
            Ok(Group {
                name: name.trim().to_string(),
                members: members
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RiskMeasure {
    Std,
    /// Expected tail loss at the given confidence level, e.g. 0.95.
    Etl(f64),
}

impl RiskMeasure {
    pub const TABLE: [RiskMeasure; 3] = [RiskMeasure::Etl(0.95), RiskMeasure::Etl(0.99), RiskMeasure::Std];

    pub fn mctr(&self, panel: &ReturnPanel, w: &PortfolioWeights, min_tail: usize) -> Result<Vec<f64>, RiskBudgetError> {
        match *self {
            RiskMeasure::Std => std_mctr(panel, w),
            RiskMeasure::Etl(q) => etl_mctr_with_min(panel, w, q, min_tail),
        }
    }

    /// Parse `std`, `etl95`, `etl99`, `etl97.5`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "std" {
            return Some(RiskMeasure::Std);
        }
        let pct: f64 = s.strip_prefix("etl")?.trim_matches(|c| c == '(' || c == ')').parse().ok()?;
        (pct > 0.0 && pct < 100.0).then_some(RiskMeasure::Etl(pct / 100.0))
    }
}

impl fmt::Display for RiskMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskMeasure::Std => write!(f, "Std"),
            RiskMeasure::Etl(q) => write!(f, "ETL({})", 100.0 * q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub measure: RiskMeasure,
    pub mctr: Vec<f64>,
    pub pctr: Vec<f64>,
    /// Portfolio risk, `Σ MCTR_i`.
    pub total: f64,
}

pub fn budget(panel: &ReturnPanel, w: &PortfolioWeights, measure: RiskMeasure) -> Result<Budget, RiskBudgetError> {
    budget_with_min(panel, w, measure, MIN_TAIL_SCENARIOS)
}

pub fn budget_with_min(
    panel: &ReturnPanel,
    w: &PortfolioWeights,
    measure: RiskMeasure,
    min_tail: usize,
) -> Result<Budget, RiskBudgetError> {
    let mctr = measure.mctr(panel, w, min_tail)?;
    let pctr = pctr(&mctr)?;
    let total = mctr.iter().sum();
    Ok(Budget {
        measure,
        mctr,
        pctr,
        total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskBudgetReport {
    pub types: Vec<String>,
    pub start: String,
    pub end: String,
    pub budgets: Vec<(RiskMeasure, Result<Budget, RiskBudgetError>)>,
}

/// Budgets for every measure over the whole panel; ETL tails must hold at
/// least `min_tail` scenarios.
pub fn full_sample_report(
    panel: &ReturnPanel,
    w: &PortfolioWeights,
    measures: &[RiskMeasure],
    min_tail: usize,
) -> RiskBudgetReport {
    RiskBudgetReport {
        types: panel.types.clone(),
        start: panel.labels.first().cloned().unwrap_or_default(),
        end: panel.labels.last().cloned().unwrap_or_default(),
        budgets: measures
            .iter()
            .map(|m| (*m, budget_with_min(panel, w, *m, min_tail)))
            .collect(),
    }
}

/// Budgets over every window of `window_len` consecutive periods, stepping
/// by one. Per-window failures are kept in the report.
pub fn rolling_budgets(
    panel: &ReturnPanel,
    w: &PortfolioWeights,
    window_len: usize,
    measures: &[RiskMeasure],
    min_tail: usize,
) -> Result<Vec<RiskBudgetReport>, RiskBudgetError> {
    if window_len < 2 || panel.len() < window_len + 1 {
        return Err(RiskBudgetError::PanelTooShort {
            need: window_len.max(2) + 1,
            got: panel.len(),
        });
    }
    Ok((0..=panel.len() - window_len)
        .into_par_iter()
        .map(|s| full_sample_report(&panel.slice(s..s + window_len), w, measures, min_tail))
        .collect())
}

/// One row per type with MCTR and PCTR columns for each measure.
pub fn write_table_csv<W: Write>(report: &RiskBudgetReport, writer: W) -> Result<(), RiskBudgetError> {
    let mut w = csv::Writer::from_writer(writer);
    let ok: Vec<&Budget> = report.budgets.iter().filter_map(|(_, b)| b.as_ref().ok()).collect();
    let mut header = vec!["event_type".to_string()];
    for b in &ok {
        header.push(format!("MCTR {}", b.measure));
        header.push(format!("PCTR {}", b.measure));
    }
    w.write_record(&header)?;
    for (i, t) in report.types.iter().enumerate() {
        let mut row = vec![t.clone()];
        for b in &ok {
            row.push(b.mctr[i].to_string());
            row.push(b.pctr[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: window bounds, measure, type, MCTR, PCTR, error.
pub fn write_rolling_csv<W: Write>(reports: &[RiskBudgetReport], writer: W) -> Result<(), RiskBudgetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["window_start", "window_end", "measure", "event_type", "mctr", "pctr", "error"])?;
    for r in reports {
        for (m, b) in &r.budgets {
            match b {
                Ok(b) => {
                    for (i, t) in r.types.iter().enumerate() {
                        w.write_record([
                            r.start.as_str(),
                            r.end.as_str(),
                            &m.to_string(),
                            t,
                            &b.mctr[i].to_string(),
                            &b.pctr[i].to_string(),
                            "",
                        ])?;
                    }
                }
                Err(e) => {
                    w.write_record([r.start.as_str(), r.end.as_str(), &m.to_string(), "", "", "", &e.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(rows: Vec<Vec<f64>>) -> ReturnPanel {
        let k = rows[0].len();
        ReturnPanel::new(
            (0..rows.len()).map(|t| t.to_string()).collect(),
            (0..k).map(|i| format!("T{i}")).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn two_uncorrelated_assets() {
        // Columns are orthogonal with equal sample variance.
        let rows = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        let p = panel(rows);
        let m = std_mctr(&p, &PortfolioWeights::equal(2)).unwrap();
        let sigma = (4.0f64 / 3.0).sqrt();
        for v in &m {
            assert!((v - sigma / (2.0 * 2f64.sqrt())).abs() < 1e-14);
        }
        assert!(pctr(&m).unwrap().iter().all(|p| (p - 50.0).abs() < 1e-12));
    }

    #[test]
    fn single_asset_weights() {
        let rows = vec![vec![1.0, 5.0], vec![2.0, -1.0], vec![4.0, 0.0]];
        let p = panel(rows);
        let m = std_mctr(&p, &PortfolioWeights::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert!((m[0] - stats::std_dev(&[1.0, 2.0, 4.0])).abs() < 1e-14);
        assert_eq!(m[1], 0.0);
    }

    #[test]
    fn constant_panel_has_no_variance() {
        let p = panel(vec![vec![0.3, 0.3]; 20]);
        assert_eq!(
            std_mctr(&p, &PortfolioWeights::equal(2)),
            Err(RiskBudgetError::ZeroPortfolioVariance)
        );
    }

    #[test]
    fn etl_null_asset_and_tail_size() {
        let rows: Vec<Vec<f64>> = (0..300).map(|t| vec![((t * 37) % 101) as f64 - 50.0, 0.0]).collect();
        let p = panel(rows);
        let w = PortfolioWeights::equal(2);
        let m = etl_mctr(&p, &w, 0.95).unwrap();
        assert_eq!(m[1], 0.0);
        let short = p.slice(0..100);
        assert!(matches!(
            etl_mctr(&short, &w, 0.99),
            Err(RiskBudgetError::TooFewTailScenarios { .. })
        ));
    }

    #[test]
    fn pctr_cases() {
        assert!(pctr(&[0.02; 50]).unwrap().iter().all(|p| (p - 2.0).abs() < 1e-12));
        assert_eq!(pctr(&[1.0, -1.0]), Err(RiskBudgetError::ZeroTotalRisk));
        let p = pctr(&[3.0, -1.0]).unwrap();
        assert_eq!(p, vec![150.0, -50.0]);
    }

    #[test]
    fn groups() {
        let types: Vec<String> = ["Flood", "Flash Flood", "Hail"].iter().map(|s| s.to_string()).collect();
        let m = [0.1, 0.2, 0.4];
        let g = parse_groups("floods: flood, FLASH FLOOD\nother: Hail\n").unwrap();
        let out = group_mctr(&m, &types, &g).unwrap();
        assert!((out[0].1 - 0.3).abs() < 1e-15);
        let overlap = parse_groups("a: Flood, Hail\nb: Hail, Flash Flood").unwrap();
        assert!(matches!(
            group_mctr(&m, &types, &overlap),
            Err(RiskBudgetError::OverlappingGroups(_))
        ));
        let partial = parse_groups("a: Flood").unwrap();
        assert!(matches!(
            group_mctr(&m, &types, &partial),
            Err(RiskBudgetError::UncoveredTypes(v)) if v.len() == 2
        ));
        let unknown = parse_groups("a: Sandstorm").unwrap();
        assert!(matches!(group_mctr(&m, &types, &unknown), Err(RiskBudgetError::UnknownType(_))));
    }

    #[test]
    fn measure_parsing() {
        assert_eq!(RiskMeasure::parse("std"), Some(RiskMeasure::Std));
        assert_eq!(RiskMeasure::parse("ETL95"), Some(RiskMeasure::Etl(0.95)));
        assert_eq!(RiskMeasure::parse("etl(99)"), Some(RiskMeasure::Etl(0.99)));
        assert_eq!(RiskMeasure::parse("var95"), None);
        assert_eq!(RiskMeasure::Etl(0.95).to_string(), "ETL(95)");
    }

    #[test]
    fn rolling_window_counts() {
        let rows: Vec<Vec<f64>> = (0..401).map(|t| vec![(t as f64).sin(), (t as f64 * 0.7).cos()]).collect();
        let p = panel(rows);
        let w = PortfolioWeights::equal(2);
        let reps = rolling_budgets(&p, &w, 400, &RiskMeasure::TABLE, 2).unwrap();
        assert_eq!(reps.len(), 2);
        let direct = budget(&p.slice(1..401), &w, RiskMeasure::Std).unwrap();
        assert_eq!(reps[1].budgets[2].1.as_ref().unwrap(), &direct);
        assert!(matches!(
            rolling_budgets(&p.slice(0..400), &w, 400, &RiskMeasure::TABLE, 2),
            Err(RiskBudgetError::PanelTooShort { .. })
        ));
        let flat = panel(vec![vec![1.0, 1.0]; 401]);
        let reps = rolling_budgets(&flat, &w, 400, &[RiskMeasure::Std], 10).unwrap();
        assert!(reps
            .iter()
            .all(|r| r.budgets[0].1 == Err(RiskBudgetError::ZeroPortfolioVariance)));
    }
}
