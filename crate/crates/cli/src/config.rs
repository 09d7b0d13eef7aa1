//! Run configuration: a TOML file with one section per pipeline stage.
//! Command-line flags override file values, and `NDI_OUT_DIR` overrides the
//! output directory from the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use ndi_core::synth::{default_processes, SynthConfig, TypeProcess};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUT_DIR_ENV: &str = "NDI_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub ingest: IngestSection,
    pub index: IndexSection,
    pub fit: FitSection,
    pub pricing: PricingSection,
    pub budget: BudgetSection,
    pub stress: StressSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("ndi-out"),
            ingest: IngestSection::default(),
            index: IndexSection::default(),
            fit: FitSection::default(),
            pricing: PricingSection::default(),
            budget: BudgetSection::default(),
            stress: StressSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Storm-event CSV files, or directories whose `*.csv` files are all read.
    pub storms: Vec<PathBuf>,
    pub cpi: Option<PathBuf>,
    pub start_year: i32,
    pub end_year: i32,
    pub base_year: i32,
    pub strict: bool,
    /// Raw event label to canonical event type.
    pub aliases: BTreeMap<String, String>,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            storms: Vec::new(),
            cpi: None,
            start_year: 1996,
            end_year: 2018,
            base_year: 2018,
            strict: false,
            aliases: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub exponent: f64,
    /// Loss panel read by the later stages; defaults to `panel.csv` in the
    /// output directory.
    pub panel: Option<PathBuf>,
}

impl Default for IndexSection {
    fn default() -> Self {
        Self {
            exponent: 0.1,
            panel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Per-period risk-free rate, shared with pricing.
    pub riskfree: f64,
    pub loss_floor: f64,
    pub pin_lambda0: bool,
    pub max_iter: usize,
    /// Keep the filtered variances and residuals in `garch_fit.json`.
    pub save_residuals: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            riskfree: 0.0,
            loss_floor: 1.0,
            pin_lambda0: false,
            max_iter: 4000,
            save_residuals: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingSection {
    pub paths: usize,
    pub horizon: usize,
    /// `lo:hi:step` or a comma-separated list.
    pub strikes: String,
    pub legacy_recursion: bool,
    pub max_resamples: usize,
}

impl Default for PricingSection {
    fn default() -> Self {
        Self {
            paths: 10_000,
            horizon: 12,
            strikes: "-2:2:0.5".into(),
            legacy_recursion: false,
            max_resamples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub window: usize,
    pub measures: Vec<String>,
    pub min_tail: usize,
    pub groups: Option<PathBuf>,
    pub rolling: bool,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            window: ndi_core::riskbudget::DEFAULT_WINDOW,
            measures: vec!["etl95".into(), "etl99".into(), "std".into()],
            min_tail: ndi_core::riskbudget::MIN_TAIL_SCENARIOS,
            groups: None,
            rolling: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorInput {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressSection {
    pub factors: Vec<FactorInput>,
    pub levels: Vec<f64>,
    pub sims: usize,
    pub replicates: usize,
    pub ljung_box_lags: usize,
    pub contour_grid: usize,
}

impl Default for StressSection {
    fn default() -> Self {
        Self {
            factors: Vec::new(),
            levels: vec![0.10, 0.05, 0.01],
            sims: 10_000,
            replicates: 20,
            ljung_box_lags: 20,
            contour_grid: 60,
        }
    }
}

/// Synthetic-data process parameters. The window, base year and seed come
/// from `[ingest]` and the global seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub annual_inflation: f64,
    pub activity_sd: f64,
    pub seasonality: f64,
    pub zero_damage_share: f64,
    /// Per-type processes; the built-in set when empty.
    pub processes: Vec<TypeProcess>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            annual_inflation: d.annual_inflation,
            activity_sd: d.activity_sd,
            seasonality: d.seasonality,
            zero_damage_share: d.zero_damage_share,
            processes: Vec::new(),
        }
    }
}

/// Flag twins of the config keys. Every flag is optional and wins over the
/// file when given.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file (TOML), or a run manifest to replay its configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides NDI_OUT_DIR and the config file).
    #[arg(long = "out", global = true)]
    pub output_dir: Option<PathBuf>,

    /// Storm-event CSV file or directory; repeatable.
    #[arg(long = "storms", global = true)]
    pub storms: Vec<PathBuf>,
    /// CPI deflator CSV (`year,deflator_to_base`).
    #[arg(long, global = true)]
    pub cpi: Option<PathBuf>,
    #[arg(long, global = true)]
    pub start_year: Option<i32>,
    #[arg(long, global = true)]
    pub end_year: Option<i32>,
    #[arg(long, global = true)]
    pub base_year: Option<i32>,
    /// Abort on the first malformed record.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Event-label alias `RAW=Canonical`; repeatable.
    #[arg(long = "alias", global = true, value_parser = parse_pair)]
    pub aliases: Vec<(String, String)>,

    /// Power applied to period losses.
    #[arg(long, global = true)]
    pub exponent: Option<f64>,
    /// Loss panel CSV read by fit, price, budget and stress.
    #[arg(long, global = true)]
    pub panel: Option<PathBuf>,

    /// Per-period risk-free rate.
    #[arg(long = "rate", global = true, allow_negative_numbers = true)]
    pub riskfree: Option<f64>,
    #[arg(long, global = true)]
    pub loss_floor: Option<f64>,
    /// Fix the risk premium λ0 at zero.
    #[arg(long, global = true)]
    pub pin_lambda0: bool,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Include filtered variances and residuals in the fit output.
    #[arg(long, global = true)]
    pub save_residuals: bool,

    /// Monte Carlo paths.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Simulated periods; options are priced at each maturity up to it.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Strike grid `lo:hi:step` or `k1,k2,...`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub strikes: Option<String>,
    /// Rebuild simulated index values with the legacy power recursion.
    #[arg(long, global = true)]
    pub legacy_recursion: bool,
    #[arg(long, global = true)]
    pub max_resamples: Option<usize>,

    /// Rolling window length in periods.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Risk measures, e.g. `etl95,etl99,std`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub measures: Option<Vec<String>>,
    /// Minimum tail scenarios for ETL.
    #[arg(long, global = true)]
    pub min_tail: Option<usize>,
    /// Group file with lines `name: type, type, ...`.
    #[arg(long, global = true)]
    pub groups: Option<PathBuf>,
    /// Skip rolling-window budgets.
    #[arg(long, global = true)]
    pub no_rolling: bool,

    /// Stress factor `name=path`; repeatable.
    #[arg(long = "factor", global = true, value_parser = parse_pair)]
    pub factors: Vec<(String, String)>,
    /// Stress levels, e.g. `0.1,0.05,0.01`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Simulated pairs per stress estimate.
    #[arg(long, global = true)]
    pub sims: Option<usize>,
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true)]
    pub lb_lags: Option<usize>,
    #[arg(long, global = true)]
    pub contour_grid: Option<usize>,

    /// Synthetic CPI inflation per year.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub inflation: Option<f64>,
    /// Volatility of the shared lognormal activity shock.
    #[arg(long, global = true)]
    pub activity_sd: Option<f64>,
    /// Relative amplitude of the seasonal event-rate cycle.
    #[arg(long, global = true)]
    pub seasonality: Option<f64>,
    /// Share of synthetic events recorded with zero damage.
    #[arg(long, global = true)]
    pub zero_damage_share: Option<f64>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

/// A replayable manifest carries the effective config under `config`.
#[derive(Deserialize)]
struct ManifestConfig {
    config: RunConfig,
}

fn read_config_file(path: &Path) -> CliResult<RunConfig> {
    if !path.is_file() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|x| x == "json");
    if is_json {
        serde_json::from_str::<ManifestConfig>(&text)
            .map(|m| m.config)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

impl RunConfig {
    /// File (or defaults), then `NDI_OUT_DIR`, then flags.
    pub fn resolve(o: &Overrides, env_out_dir: Option<PathBuf>) -> CliResult<Self> {
        let mut c = match &o.config {
            Some(p) => read_config_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = env_out_dir {
            c.output_dir = d;
        }
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(c.seed, o.seed);
        set!(c.output_dir, o.output_dir);
        if !o.storms.is_empty() {
            c.ingest.storms = o.storms.clone();
        }
        if o.cpi.is_some() {
            c.ingest.cpi = o.cpi.clone();
        }
        set!(c.ingest.start_year, o.start_year);
        set!(c.ingest.end_year, o.end_year);
        set!(c.ingest.base_year, o.base_year);
        c.ingest.strict |= o.strict;
        c.ingest.aliases.extend(o.aliases.iter().cloned());
        set!(c.index.exponent, o.exponent);
        if o.panel.is_some() {
            c.index.panel = o.panel.clone();
        }
        set!(c.fit.riskfree, o.riskfree);
        set!(c.fit.loss_floor, o.loss_floor);
        c.fit.pin_lambda0 |= o.pin_lambda0;
        set!(c.fit.max_iter, o.max_iter);
        c.fit.save_residuals |= o.save_residuals;
        set!(c.pricing.paths, o.paths);
        set!(c.pricing.horizon, o.horizon);
        set!(c.pricing.strikes, o.strikes);
        c.pricing.legacy_recursion |= o.legacy_recursion;
        set!(c.pricing.max_resamples, o.max_resamples);
        set!(c.budget.window, o.window);
        set!(c.budget.measures, o.measures);
        set!(c.budget.min_tail, o.min_tail);
        if o.groups.is_some() {
            c.budget.groups = o.groups.clone();
        }
        c.budget.rolling &= !o.no_rolling;
        if !o.factors.is_empty() {
            c.stress.factors = o
                .factors
                .iter()
                .map(|(name, path)| FactorInput {
                    name: name.clone(),
                    path: PathBuf::from(path),
                })
                .collect();
        }
        set!(c.stress.levels, o.levels);
        set!(c.stress.sims, o.sims);
        set!(c.stress.replicates, o.replicates);
        set!(c.stress.ljung_box_lags, o.lb_lags);
        set!(c.stress.contour_grid, o.contour_grid);
        set!(c.synth.annual_inflation, o.inflation);
        set!(c.synth.activity_sd, o.activity_sd);
        set!(c.synth.seasonality, o.seasonality);
        set!(c.synth.zero_damage_share, o.zero_damage_share);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.ingest.end_year < self.ingest.start_year {
            return bad("end_year precedes start_year");
        }
        if !(self.index.exponent > 0.0 && self.index.exponent.is_finite()) {
            return bad("index exponent must be positive");
        }
        if !(self.fit.loss_floor > 0.0) {
            return bad("loss_floor must be positive");
        }
        if self.pricing.paths == 0 || self.pricing.horizon == 0 {
            return bad("paths and horizon must be positive");
        }
        if self.budget.window < 2 {
            return bad("budget window must be at least 2");
        }
        if self.stress.levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return bad("stress levels must lie in (0, 1)");
        }
        if self.stress.sims == 0 || self.stress.contour_grid < 2 {
            return bad("stress sims must be positive and contour_grid at least 2");
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            start_year: self.ingest.start_year,
            end_year: self.ingest.end_year,
            base_year: self.ingest.base_year,
            seed: self.seed,
            annual_inflation: s.annual_inflation,
            activity_sd: s.activity_sd,
            seasonality: s.seasonality,
            zero_damage_share: s.zero_damage_share,
            processes: if s.processes.is_empty() { default_processes() } else { s.processes.clone() },
        }
    }

    /// Loss panel used by the later stages.
    pub fn panel_path(&self) -> PathBuf {
        self.index
            .panel
            .clone()
            .unwrap_or_else(|| self.output_dir.join(crate::commands::PANEL_FILE))
    }
}
