//! Storm-event ingestion: damage parsing, inflation adjustment and
//! aggregation into an equally spaced semimonthly loss panel.
//!
//! Each calendar month contributes two periods, days 1-15 and day 16 to
//! month end, so a whole-year window of `n` years has exactly `24 n`
//! periods. Records are attributed to the period of their begin date.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The fifty event types that make up the index, in display form.
pub const EVENT_TYPES: [&str; 50] = [
    "Avalanche",
    "Blizzard",
    "Coastal Flood",
    "Cold/Wind Chill",
    "Debris Flow",
    "Dense Fog",
    "Dense Smoke",
    "Drought",
    "Dust Devil",
    "Dust Storm",
    "Excessive Heat",
    "Extreme Cold/Wind Chill",
    "Flash Flood",
    "Flood",
    "Frost/Freeze",
    "Funnel Cloud",
    "Freezing Fog",
    "Hail",
    "Heat",
    "Heavy Rain",
    "Heavy Snow",
    "High Surf",
    "High Wind",
    "Hurricane (Typhoon)",
    "Ice Storm",
    "Lake-Effect Snow",
    "Lakeshore Flood",
    "Lightning",
    "Marine Dense Fog",
    "Marine Heavy Freezing Spray",
    "Marine High Wind",
    "Marine Hurricane/Typhoon",
    "Marine Lightning",
    "Marine Strong Wind",
    "Marine Thunderstorm Wind",
    "Rip Current",
    "Seiche",
    "Sleet",
    "Storm Surge/Tide",
    "Strong Wind",
    "Thunderstorm Wind",
    "Tornado",
    "Tropical Depression",
    "Tropical Storm",
    "Tsunami",
    "Volcanic Ash",
    "Waterspout",
    "Wildfire",
    "Winter Storm",
    "Winter Weather",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed damage amount {0:?}")]
    MalformedDamage(String),
    #[error("malformed begin date: year-month {year_month:?}, day {day:?}")]
    MalformedDate { year_month: String, day: String },
    #[error("no CPI deflator for year {0}")]
    MissingCpiYear(i32),
    #[error("invalid CPI table: {0}")]
    InvalidCpi(String),
    #[error("study window {start}..={end} is empty")]
    EmptyWindow { start: i32, end: i32 },
    #[error("no records were accepted into the panel")]
    NoRecords,
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("unknown event type {0:?} in alias table target")]
    UnknownCanonical(String),
    #[error("malformed loss panel: {0}")]
    MalformedPanel(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse a damage amount such as `"25.00K"`, `"1.5B"` or `""`.
pub fn parse_damage(raw: &str) -> Result<f64, IngestError> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(0.0);
    }
    let malformed = || IngestError::MalformedDamage(raw.to_string());
    let (number, scale) = match s.chars().last() {
        Some(c) if c.is_ascii_alphabetic() => {
            let scale = match c.to_ascii_uppercase() {
                'K' => 1e3,
                'M' => 1e6,
                'B' => 1e9,
                _ => return Err(malformed()),
            };
            (&s[..s.len() - 1], scale)
        }
        _ => (s, 1.0),
    };
    // NOAA uses a bare suffix ("K") for zero.
    if number.is_empty() {
        return Ok(0.0);
    }
    let well_formed = number.chars().all(|c| c.is_ascii_digit() || c == '.')
        && number.chars().filter(|&c| c == '.').count() <= 1
        && number.chars().any(|c| c.is_ascii_digit());
    if !well_formed {
        return Err(malformed());
    }
    let value: f64 = number.parse().map_err(|_| malformed())?;
    Ok(value * scale)
}

/// Key used to match event-type spellings: upper case with `/`, `-`,
/// parentheses and repeated whitespace collapsed to single spaces.
pub fn normalize_event_type(raw: &str) -> String {
    raw.chars()
        .map(|c| match c {
            '/' | '(' | ')' | '-' | '_' => ' ',
            c => c.to_ascii_uppercase(),
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Maps raw event-type strings onto canonical column indices.
#[derive(Debug, Clone)]
pub struct EventTypeResolver {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for EventTypeResolver {
    fn default() -> Self {
        let names: Vec<String> = EVENT_TYPES.iter().map(|s| s.to_string()).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (normalize_event_type(n), i))
            .collect();
        Self { names, index }
    }
}

impl EventTypeResolver {
    /// Extend the canonical matching with `(alias, canonical)` pairs.
    pub fn with_aliases<'a, I>(mut self, aliases: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (alias, canonical) in aliases {
            let target = *self
                .index
                .get(&normalize_event_type(canonical))
                .ok_or_else(|| IngestError::UnknownCanonical(canonical.to_string()))?;
            self.index.insert(normalize_event_type(alias), target);
        }
        Ok(self)
    }

    pub fn resolve(&self, raw: &str) -> Option<usize> {
        self.index.get(&normalize_event_type(raw)).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Year to deflator mapping into base-year dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiTable {
    pub base_year: i32,
    factors: BTreeMap<i32, f64>,
}

impl CpiTable {
    pub fn new(base_year: i32, factors: BTreeMap<i32, f64>) -> Result<Self, IngestError> {
        if let Some((y, f)) = factors.iter().find(|(_, f)| !(**f > 0.0) || !f.is_finite()) {
            return Err(IngestError::InvalidCpi(format!(
                "deflator for {y} must be positive, got {f}"
            )));
        }
        if let Some(f) = factors.get(&base_year) {
            if (f - 1.0).abs() > 1e-12 {
                return Err(IngestError::InvalidCpi(format!(
                    "base year {base_year} deflator is {f}, expected 1"
                )));
            }
        }
        Ok(Self { base_year, factors })
    }

    /// Two-column CSV `year,deflator_to_base` with a header row.
    pub fn from_csv<R: Read>(base_year: i32, reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut factors = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let bad = || IngestError::InvalidCpi(format!("bad row {:?}", row));
            let year: i32 = row.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let f: f64 = row.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            factors.insert(year, f);
        }
        Self::new(base_year, factors)
    }

    pub fn factors(&self) -> &BTreeMap<i32, f64> {
        &self.factors
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["year", "deflator_to_base"])?;
        for (y, f) in &self.factors {
            w.write_record([y.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn deflator(&self, year: i32) -> Result<f64, IngestError> {
        if year == self.base_year {
            return Ok(1.0);
        }
        self.factors
            .get(&year)
            .copied()
            .ok_or(IngestError::MissingCpiYear(year))
    }

    /// Check every year of a window is present.
    pub fn covers(&self, window: &StudyWindow) -> Result<(), IngestError> {
        for y in window.start_year..=window.end_year {
            self.deflator(y)?;
        }
        Ok(())
    }
}

pub fn adjust_inflation(amount: f64, year: i32, cpi: &CpiTable) -> Result<f64, IngestError> {
    Ok(amount * cpi.deflator(year)?)
}

/// Whole calendar years, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start_year: i32,
    pub end_year: i32,
}

impl StudyWindow {
    pub fn new(start_year: i32, end_year: i32) -> Result<Self, IngestError> {
        if end_year < start_year {
            return Err(IngestError::EmptyWindow {
                start: start_year,
                end: end_year,
            });
        }
        Ok(Self {
            start_year,
            end_year,
        })
    }

    pub fn period_count(&self) -> usize {
        (self.end_year - self.start_year + 1) as usize * 24
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        (self.start_year..=self.end_year).contains(&date.year())
    }

    /// Zero-based semimonthly period index of a date inside the window.
    pub fn period_index(&self, date: NaiveDate) -> Option<usize> {
        if !self.contains(date) {
            return None;
        }
        let months = (date.year() - self.start_year) as usize * 12 + date.month0() as usize;
        Some(2 * months + usize::from(date.day() > 15))
    }

    pub fn periods(&self) -> Vec<Period> {
        (self.start_year..=self.end_year)
            .flat_map(|y| (1..=12).flat_map(move |m| [Period::new(y, m, false), Period::new(y, m, true)]))
            .collect()
    }
}

/// A calendar half-month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Period {
    pub year: i32,
    pub month: u32,
    /// `false` for days 1-15, `true` for day 16 onwards.
    pub second_half: bool,
}

impl Period {
    pub fn new(year: i32, month: u32, second_half: bool) -> Self {
        Self {
            year,
            month,
            second_half,
        }
    }

    /// Start date label, `YYYY-MM-01` or `YYYY-MM-16`.
    pub fn label(&self) -> String {
        format!(
            "{:04}-{:02}-{}",
            self.year,
            self.month,
            if self.second_half { "16" } else { "01" }
        )
    }

    pub fn parse(label: &str) -> Option<Self> {
        let mut it = label.trim().splitn(3, '-');
        let year = it.next()?.parse().ok()?;
        let month: u32 = it.next()?.parse().ok()?;
        let second_half = match it.next()? {
            "01" => false,
            "16" => true,
            _ => return None,
        };
        (1..=12).contains(&month).then_some(Self::new(year, month, second_half))
    }

    /// Month key `YYYY-MM`.
    pub fn month_label(&self) -> String {
        format!("{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StormEventRecord {
    pub begin_date: NaiveDate,
    pub event_type: String,
    pub damage_property_raw: String,
    pub state: Option<String>,
}

/// Column names in the storm-event CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StormColumns {
    pub year_month: String,
    pub day: String,
    pub event_type: String,
    pub damage: String,
    pub state: String,
}

impl Default for StormColumns {
    fn default() -> Self {
        Self {
            year_month: "BEGIN_YEARMONTH".into(),
            day: "BEGIN_DAY".into(),
            event_type: "EVENT_TYPE".into(),
            damage: "DAMAGE_PROPERTY".into(),
            state: "STATE".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records_read: usize,
    pub records_accepted: usize,
    pub records_skipped: usize,
    pub skipped_malformed_damage: usize,
    pub skipped_malformed_date: usize,
    pub skipped_unknown_type: usize,
    pub skipped_out_of_window: usize,
    /// Raw spellings that did not resolve, with counts.
    pub unknown_event_types: BTreeMap<String, usize>,
    /// Total adjusted dollars of accepted records.
    pub accepted_damage: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Abort on the first malformed record instead of skipping it.
    pub strict: bool,
}

fn parse_begin_date(year_month: &str, day: &str) -> Option<NaiveDate> {
    let ym: i32 = year_month.trim().parse().ok()?;
    let d: u32 = day.trim().parse().ok()?;
    NaiveDate::from_ymd_opt(ym / 100, (ym % 100) as u32, d)
}

/// Read storm-event records. Rows whose begin date cannot be parsed are
/// counted in the returned stats (or abort in strict mode).
pub fn read_storm_csv<R: Read>(
    reader: R,
    columns: &StormColumns,
    opts: IngestOptions,
) -> Result<(Vec<StormEventRecord>, IngestStats), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (i_ym, i_day, i_type, i_dmg) = (
        col(&columns.year_month)?,
        col(&columns.day)?,
        col(&columns.event_type)?,
        col(&columns.damage)?,
    );
    let i_state = col(&columns.state).ok();

    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        stats.records_read += 1;
        let field = |i: usize| row.get(i).unwrap_or("");
        match parse_begin_date(field(i_ym), field(i_day)) {
            Some(begin_date) => records.push(StormEventRecord {
                begin_date,
                event_type: field(i_type).to_string(),
                damage_property_raw: field(i_dmg).to_string(),
                state: i_state.map(|i| field(i).to_string()),
            }),
            None => {
                if opts.strict {
                    return Err(IngestError::MalformedDate {
                        year_month: field(i_ym).to_string(),
                        day: field(i_day).to_string(),
                    });
                }
                log::warn!("skipping record {} with malformed date", stats.records_read);
                stats.skipped_malformed_date += 1;
                stats.records_skipped += 1;
            }
        }
    }
    Ok((records, stats))
}

/// Per-period, per-event-type adjusted property losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPanel {
    pub periods: Vec<Period>,
    pub event_types: Vec<String>,
    /// Row-major, `periods.len()` rows of `event_types.len()` columns.
    pub losses: Vec<Vec<f64>>,
    pub total_loss: Vec<f64>,
}

impl LossPanel {
    pub fn new(
        periods: Vec<Period>,
        event_types: Vec<String>,
        losses: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        if losses.len() != periods.len() {
            return Err(IngestError::MalformedPanel(format!(
                "{} rows for {} periods",
                losses.len(),
                periods.len()
            )));
        }
        if let Some(r) = losses.iter().position(|row| row.len() != event_types.len()) {
            return Err(IngestError::MalformedPanel(format!("row {r} has wrong width")));
        }
        if losses.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(IngestError::MalformedPanel("losses must be finite and nonnegative".into()));
        }
        let total_loss = losses.iter().map(|row| row.iter().sum()).collect();
        Ok(Self {
            periods,
            event_types,
            losses,
            total_loss,
        })
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.losses.iter().map(|row| row[j]).collect()
    }

    /// CSV with one row per period: `period,<event types…>,TOTAL`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["period".to_string()];
        header.extend(self.event_types.iter().cloned());
        header.push("TOTAL".into());
        w.write_record(&header)?;
        for ((p, row), total) in self.periods.iter().zip(&self.losses).zip(&self.total_loss) {
            let mut rec = vec![p.label()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(total.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || headers.get(headers.len() - 1) != Some("TOTAL") {
            return Err(IngestError::MalformedPanel(
                "expected header period,<types…>,TOTAL".into(),
            ));
        }
        let event_types: Vec<String> = headers
            .iter()
            .skip(1)
            .take(headers.len() - 2)
            .map(str::to_string)
            .collect();
        let mut periods = Vec::new();
        let mut losses = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let label = row.get(0).unwrap_or("");
            periods.push(
                Period::parse(label)
                    .ok_or_else(|| IngestError::MalformedPanel(format!("bad period {label:?}")))?,
            );
            let vals = row
                .iter()
                .skip(1)
                .take(event_types.len())
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| IngestError::MalformedPanel(format!("bad value {v:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            losses.push(vals);
        }
        Self::new(periods, event_types, losses)
    }
}

/// Aggregate records into the semimonthly loss panel.
///
/// Cell sums are formed from the sorted contributions of each cell so the
/// result does not depend on record order.
pub fn aggregate_semimonthly(
    records: &[StormEventRecord],
    cpi: &CpiTable,
    window: StudyWindow,
    resolver: &EventTypeResolver,
    opts: IngestOptions,
) -> Result<(LossPanel, IngestStats), IngestError> {
    let window = StudyWindow::new(window.start_year, window.end_year)?;
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    cpi.covers(&window)?;
    let n_types = resolver.names().len();
    let n_periods = window.period_count();
    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); n_periods * n_types];
    let mut stats = IngestStats::default();
    let mut accepted = Vec::new();

    for rec in records {
        stats.records_read += 1;
        let Some(period) = window.period_index(rec.begin_date) else {
            stats.skipped_out_of_window += 1;
            stats.records_skipped += 1;
            continue;
        };
        let Some(col) = resolver.resolve(&rec.event_type) else {
            *stats
                .unknown_event_types
                .entry(rec.event_type.clone())
                .or_default() += 1;
            stats.skipped_unknown_type += 1;
            stats.records_skipped += 1;
            continue;
        };
        let raw = match parse_damage(&rec.damage_property_raw) {
            Ok(v) => v,
            Err(e) if opts.strict => return Err(e),
            Err(e) => {
                log::warn!("skipping record dated {}: {e}", rec.begin_date);
                stats.skipped_malformed_damage += 1;
                stats.records_skipped += 1;
                continue;
            }
        };
        let adjusted = adjust_inflation(raw, rec.begin_date.year(), cpi)?;
        cells[period * n_types + col].push(adjusted);
        accepted.push(adjusted);
        stats.records_accepted += 1;
    }
    if stats.records_accepted == 0 {
        return Err(IngestError::NoRecords);
    }
    accepted.sort_by(f64::total_cmp);
    stats.accepted_damage = accepted.iter().sum();

    let losses = (0..n_periods)
        .map(|t| {
            (0..n_types)
                .map(|j| {
                    let cell = &mut cells[t * n_types + j];
                    cell.sort_by(f64::total_cmp);
                    cell.iter().sum()
                })
                .collect()
        })
        .collect();
    let panel = LossPanel::new(window.periods(), resolver.names().to_vec(), losses)?;
    Ok((panel, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cpi(base: i32, years: std::ops::RangeInclusive<i32>) -> CpiTable {
        CpiTable::new(base, years.map(|y| (y, if y == base { 1.0 } else { 1.5 })).collect()).unwrap()
    }

    fn rec(y: i32, m: u32, d: u32, ty: &str, dmg: &str) -> StormEventRecord {
        StormEventRecord {
            begin_date: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
            event_type: ty.into(),
            damage_property_raw: dmg.into(),
            state: None,
        }
    }

    #[test]
    fn damage_suffixes() {
        assert_eq!(parse_damage("25.00K").unwrap(), 25_000.0);
        assert_eq!(parse_damage("").unwrap(), 0.0);
        assert_eq!(parse_damage("1.5B").unwrap(), 1.5e9);
        assert_eq!(parse_damage("0.00K").unwrap(), 0.0);
        assert_eq!(parse_damage("2m").unwrap(), 2e6);
        assert_eq!(parse_damage("K").unwrap(), 0.0);
        assert_eq!(parse_damage("150").unwrap(), 150.0);
        for bad in ["abc", "1.2.3K", "5X", "-3K", "1e3", "."] {
            assert!(
                matches!(parse_damage(bad), Err(IngestError::MalformedDamage(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn inflation() {
        let c = CpiTable::new(2019, [(2000, 2.0), (2019, 1.0)].into_iter().collect()).unwrap();
        assert_eq!(adjust_inflation(100.0, 2019, &c).unwrap(), 100.0);
        assert_eq!(adjust_inflation(100.0, 2000, &c).unwrap(), 200.0);
        assert_eq!(adjust_inflation(0.0, 2000, &c).unwrap(), 0.0);
        assert!(matches!(
            adjust_inflation(1.0, 1990, &c),
            Err(IngestError::MissingCpiYear(1990))
        ));
        assert!(CpiTable::new(2019, [(2000, 0.0)].into_iter().collect()).is_err());
    }

    #[test]
    fn event_type_normalization() {
        let r = EventTypeResolver::default();
        assert_eq!(r.resolve("HURRICANE/TYPHOON"), r.resolve("Hurricane (Typhoon)"));
        assert!(r.resolve("HURRICANE/TYPHOON").is_some());
        assert_eq!(r.resolve("  flash   flood "), Some(12));
        assert_eq!(r.resolve("LAKE-EFFECT SNOW"), r.resolve("Lake-Effect Snow"));
        assert!(r.resolve("Marine Hail").is_none());
        let r = r.with_aliases([("Landslide", "Debris Flow")]).unwrap();
        assert_eq!(r.resolve("LANDSLIDE"), Some(4));
        assert!(EventTypeResolver::default()
            .with_aliases([("x", "Not A Type")])
            .is_err());
    }

    #[test]
    fn bucketing_and_additivity() {
        let window = StudyWindow::new(1996, 1996).unwrap();
        let records = vec![
            rec(1996, 1, 20, "Hail", "1K"),
            rec(1996, 1, 31, "Hail", "2K"),
            rec(1996, 1, 15, "Tornado", "5K"),
            rec(1997, 1, 1, "Tornado", "5K"),
            rec(1996, 3, 3, "Made Up", "5K"),
            rec(1996, 3, 3, "Hail", "??"),
        ];
        let r = EventTypeResolver::default();
        let (panel, stats) =
            aggregate_semimonthly(&records, &cpi(1996, 1996..=1996), window, &r, IngestOptions::default())
                .unwrap();
        assert_eq!(panel.len(), 24);
        let hail = r.resolve("Hail").unwrap();
        assert_eq!(panel.periods[1].label(), "1996-01-16");
        assert_eq!(panel.losses[1][hail], 3000.0);
        assert_eq!(panel.losses[0][r.resolve("Tornado").unwrap()], 5000.0);
        assert_eq!(panel.total_loss[1], 3000.0);
        assert_eq!(stats.records_accepted, 3);
        assert_eq!(stats.skipped_out_of_window, 1);
        assert_eq!(stats.skipped_unknown_type, 1);
        assert_eq!(stats.skipped_malformed_damage, 1);
        assert_eq!(stats.records_skipped, 3);

        let strict = IngestOptions { strict: true };
        assert!(matches!(
            aggregate_semimonthly(&records, &cpi(1996, 1996..=1996), window, &r, strict),
            Err(IngestError::MalformedDamage(_))
        ));
    }

    #[test]
    fn period_counts() {
        assert_eq!(StudyWindow::new(1996, 2018).unwrap().period_count(), 552);
        assert_eq!(StudyWindow::new(1996, 2018).unwrap().periods().len(), 552);
        assert!(StudyWindow::new(2000, 1999).is_err());
        let p = Period::new(2001, 2, true);
        assert_eq!(Period::parse(&p.label()), Some(p));
    }

    #[test]
    fn empty_and_missing_cpi() {
        let r = EventTypeResolver::default();
        let w = StudyWindow::new(1996, 1997).unwrap();
        assert!(matches!(
            aggregate_semimonthly(&[], &cpi(1996, 1996..=1997), w, &r, IngestOptions::default()),
            Err(IngestError::NoRecords)
        ));
        let recs = vec![rec(1996, 5, 5, "Hail", "1K")];
        assert!(matches!(
            aggregate_semimonthly(&recs, &cpi(1996, 1996..=1996), w, &r, IngestOptions::default()),
            Err(IngestError::MissingCpiYear(1997))
        ));
    }

    #[test]
    fn csv_reading_with_quotes() {
        let data = "BEGIN_YEARMONTH,BEGIN_DAY,STATE,EVENT_TYPE,DAMAGE_PROPERTY\n\
                    199601,20,\"TEXAS\",\"Hail\",\"1.00K\"\n\
                    1996xx,20,\"TEXAS\",\"Hail\",\"1.00K\"\n\
                    199602,3,\"OHIO, NORTH\",\"Flash Flood\",\"\"\n";
        let (recs, stats) =
            read_storm_csv(data.as_bytes(), &StormColumns::default(), IngestOptions::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(stats.skipped_malformed_date, 1);
        assert_eq!(recs[1].state.as_deref(), Some("OHIO, NORTH"));
        assert!(read_storm_csv(data.as_bytes(), &StormColumns::default(), IngestOptions { strict: true }).is_err());
        let no_damage = "BEGIN_YEARMONTH,BEGIN_DAY,EVENT_TYPE\n199601,1,Hail\n";
        assert!(matches!(
            read_storm_csv(no_damage.as_bytes(), &StormColumns::default(), IngestOptions::default()),
            Err(IngestError::MissingColumn(_))
        ));
    }
}
