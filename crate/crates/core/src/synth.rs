//! Synthetic storm-event, CPI and climate-factor data.
//!
//! Each event type is a compound Poisson process per half-month with
//! lognormal damage in base-year dollars. A common lognormal activity shock
//! scales every type's event rate, which gives the panel cross-type
//! dependence. Damages are deflated back to nominal dollars and written with
//! the K/M/B suffixes of the real storm-event files.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CpiTable, IngestError, StormEventRecord, StudyWindow, EVENT_TYPES};
use crate::rng;
use crate::stress::{FactorSeries, Month};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic data config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProcess {
    pub event_type: String,
    /// Mean number of events per half-month at average activity.
    pub rate: f64,
    /// Location and scale of log damage in base-year dollars.
    pub log_mean: f64,
    pub log_sd: f64,
    /// Exponent applied to the common activity shock.
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub start_year: i32,
    pub end_year: i32,
    pub base_year: i32,
    pub seed: u64,
    pub annual_inflation: f64,
    /// Standard deviation of the log activity shock.
    pub activity_sd: f64,
    /// Relative amplitude of the summer peak in event rates.
    pub seasonality: f64,
    /// Share of events recorded with zero property damage.
    pub zero_damage_share: f64,
    pub processes: Vec<TypeProcess>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            start_year: 1996,
            end_year: 2018,
            base_year: 2018,
            seed: 42,
            annual_inflation: 0.025,
            activity_sd: 0.5,
            seasonality: 0.5,
            zero_damage_share: 0.4,
            processes: default_processes(),
        }
    }
}

const HEAVY: [&str; 6] = ["Flash Flood", "Flood", "Wildfire", "Hurricane (Typhoon)", "Tornado", "Hail"];

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// One process per canonical event type. Parameters are spread with
/// low-discrepancy offsets; a handful of types carry heavy damage tails.
pub fn default_processes() -> Vec<TypeProcess> {
    EVENT_TYPES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let i = i as f64;
            let heavy = HEAVY.contains(name);
            let flood = name.contains("Flood");
            TypeProcess {
                event_type: name.to_string(),
                rate: if heavy { 1.5 } else { 0.05 + 2.0 * frac(i * 0.618_034) },
                log_mean: if heavy { 12.0 } else { 8.0 + 3.0 * frac(i * 0.381_966 + 0.1) },
                log_sd: if heavy { 2.2 } else { 1.0 + frac(i * 0.754_878) },
                loading: if flood { 1.5 } else { 0.5 + frac(i * 0.569_840) },
            }
        })
        .collect()
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.end_year < self.start_year {
            return bad(format!("end year {} before start year {}", self.end_year, self.start_year));
        }
        if !(self.annual_inflation > -1.0) || !(self.activity_sd >= 0.0) {
            return bad("inflation must exceed -1 and activity_sd be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.seasonality) || !(0.0..=1.0).contains(&self.zero_damage_share) {
            return bad("seasonality must lie in [0, 1) and zero_damage_share in [0, 1]".into());
        }
        if self.processes.is_empty() {
            return bad("no event-type processes".into());
        }
        for p in &self.processes {
            if !(p.rate >= 0.0 && p.log_sd >= 0.0 && p.log_mean.is_finite() && p.loading.is_finite()) {
                return bad(format!("process {:?} has invalid parameters", p.event_type));
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Result<StudyWindow, SynthError> {
        Ok(StudyWindow::new(self.start_year, self.end_year)?)
    }

    /// Deflators `(1 + inflation)^(base − year)` over the window and base year.
    pub fn cpi(&self) -> Result<CpiTable, SynthError> {
        let lo = self.start_year.min(self.base_year);
        let hi = self.end_year.max(self.base_year);
        let factors: BTreeMap<i32, f64> = (lo..=hi)
            .map(|y| (y, (1.0 + self.annual_inflation).powi(self.base_year - y)))
            .collect();
        Ok(CpiTable::new(self.base_year, factors)?)
    }
}

fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1)
        .and_then(|d| d.pred_opt())
        .map(|d| d.day())
        .unwrap_or(28)
}

/// Damage in the storm-file notation: plain dollars below 1000, otherwise a
/// two-decimal K, M or B amount.
pub fn format_damage(dollars: f64) -> String {
    if dollars < 1e3 {
        format!("{:.0}", dollars)
    } else if dollars < 1e6 {
        format!("{:.2}K", dollars / 1e3)
    } else if dollars < 1e9 {
        format!("{:.2}M", dollars / 1e6)
    } else {
        format!("{:.2}B", dollars / 1e9)
    }
}

const STATES: [&str; 8] = ["TEXAS", "KANSAS", "FLORIDA", "IOWA", "CALIFORNIA", "OHIO", "LOUISIANA", "MONTANA"];

/// Event records over the configured window, sorted by date. Each period
/// uses its own random stream, so a record set depends only on the seed and
/// the config.
pub fn generate_events(cfg: &SynthConfig) -> Result<Vec<StormEventRecord>, SynthError> {
    cfg.validate()?;
    let window = cfg.window()?;
    let cpi = cfg.cpi()?;
    let mut out = Vec::new();
    for (k, period) in window.periods().iter().enumerate() {
        let mut r = rng::child_stream(cfg.seed, k as u64);
        let season = 1.0 + cfg.seasonality * (2.0 * PI * (period.month as f64 - 7.0) / 12.0).cos();
        let activity = (cfg.activity_sd * r.sample::<f64, _>(StandardNormal)).exp();
        let deflator = cpi.deflator(period.year)?;
        let (first, last) = if period.second_half {
            (16, days_in_month(period.year, period.month))
        } else {
            (1, 15)
        };
        for p in &cfg.processes {
            let lambda = p.rate * season * activity.powf(p.loading);
            let count = if lambda > 0.0 {
                Poisson::new(lambda)
                    .map_err(|e| SynthError::InvalidConfig(e.to_string()))?
                    .sample(&mut r) as usize
            } else {
                0
            };
            let size = LogNormal::new(p.log_mean, p.log_sd).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
            for _ in 0..count {
                let day = r.random_range(first..=last);
                let zero = r.random::<f64>() < cfg.zero_damage_share;
                let real = size.sample(&mut r);
                let damage = if zero { "0.00K".to_string() } else { format_damage(real / deflator) };
                out.push(StormEventRecord {
                    begin_date: NaiveDate::from_ymd_opt(period.year, period.month, day)
                        .expect("day within month"),
                    event_type: p.event_type.clone(),
                    damage_property_raw: damage,
                    state: Some(STATES[r.random_range(0..STATES.len())].to_string()),
                });
            }
        }
    }
    out.sort_by(|a, b| a.begin_date.cmp(&b.begin_date));
    Ok(out)
}

/// Storm-event CSV with the default column names.
pub fn write_storm_csv<W: Write>(records: &[StormEventRecord], writer: W) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["BEGIN_YEARMONTH", "BEGIN_DAY", "STATE", "EVENT_TYPE", "DAMAGE_PROPERTY"])?;
    for rec in records {
        let d = rec.begin_date;
        w.write_record([
            format!("{}{:02}", d.year(), d.month()),
            d.day().to_string(),
            rec.state.clone().unwrap_or_default(),
            rec.event_type.clone(),
            rec.damage_property_raw.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Monthly factor: a seasonal mean plus AR(1) noise, optionally clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorProcess {
    pub name: String,
    pub mean: f64,
    pub seasonal_amplitude: f64,
    pub ar: f64,
    pub noise_sd: f64,
    pub bounds: Option<(f64, f64)>,
}

impl FactorProcess {
    /// Monthly maximum temperature in °C.
    pub fn max_temp() -> Self {
        Self {
            name: "max_temp".into(),
            mean: 19.0,
            seasonal_amplitude: 9.0,
            ar: 0.3,
            noise_sd: 1.2,
            bounds: None,
        }
    }

    /// Palmer drought severity index.
    pub fn pdsi() -> Self {
        Self {
            name: "pdsi".into(),
            mean: 0.0,
            seasonal_amplitude: 0.0,
            ar: 0.9,
            noise_sd: 0.8,
            bounds: Some((-6.0, 6.0)),
        }
    }

    pub fn generate(&self, start_year: i32, end_year: i32, seed: u64) -> Result<FactorSeries, SynthError> {
        if end_year < start_year || !(self.ar.abs() < 1.0) || !(self.noise_sd >= 0.0) {
            return Err(SynthError::InvalidConfig(format!("factor process {:?}", self.name)));
        }
        let mut r = rng::stream(seed);
        let stationary_sd = self.noise_sd / (1.0 - self.ar * self.ar).sqrt();
        let mut u = stationary_sd * r.sample::<f64, _>(StandardNormal);
        let mut months: Vec<Month> = Vec::new();
        let mut values = Vec::new();
        for y in start_year..=end_year {
            for m in 1..=12u32 {
                let seasonal = self.seasonal_amplitude * (2.0 * PI * (m as f64 - 7.0) / 12.0).cos();
                let mut v = self.mean + seasonal + u;
                if let Some((lo, hi)) = self.bounds {
                    v = v.clamp(lo, hi);
                }
                months.push((y, m));
                values.push(v);
                u = self.ar * u + self.noise_sd * r.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(FactorSeries {
            name: self.name.clone(),
            months,
            values,
        })
    }
}
