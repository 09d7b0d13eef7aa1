use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndi_core::garch::{fit_garch_nig_with, log_returns, FitOptions, GarchNigModel};
use ndi_core::index::{build_ndi_with_exponent, NdiSeries};
use ndi_core::ingest::{
    aggregate_semimonthly, read_storm_csv, CpiTable, EventTypeResolver, IngestOptions, IngestStats, LossPanel,
    StormColumns, StudyWindow,
};
use ndi_core::pricing::{
    floored_series, implied_vol_surface, parse_strikes, price_options, simulate_q_paths, write_iv_csv,
    write_price_csv, PricingConfig, QStart,
};
use ndi_core::riskbudget::{
    self, full_sample_report, group_mctr, parse_groups, rolling_budgets, PortfolioWeights, ReturnPanel, RiskMeasure,
};
use ndi_core::stress::{self, stress_pipeline, FactorSeries, StressConfig};
use ndi_core::synth::{generate_events, write_storm_csv, FactorProcess};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{
    budget_err, garch_err, index_err, ingest_err, pricing_err, stress_err, synth_err, CliError, CliResult,
};
use crate::manifest::write_manifest;

pub const PANEL_FILE: &str = "panel.csv";
pub const FIT_FILE: &str = "garch_fit.json";

/// Files a command read and wrote, for its manifest.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

fn open(stage: &'static str, path: &Path) -> CliResult<BufReader<File>> {
    require(path)?;
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(stage, path, e))
}

fn create(stage: &'static str, path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(stage, path, e))
}

fn write_json<T: Serialize>(stage: &'static str, path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(stage, path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::data(stage, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(stage, path, e))
}

fn prepare_output_dir(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io("setup", &cfg.output_dir, e))
}

fn finish(cfg: &RunConfig, command: &str, art: Artifacts) -> CliResult<Artifacts> {
    write_manifest(cfg, command, &art.inputs, &art.outputs)?;
    for p in &art.outputs {
        log::info!("wrote {}", p.display());
    }
    Ok(art)
}

pub fn cmd_synth(cfg: &RunConfig) -> CliResult<Artifacts> {
    prepare_output_dir(cfg)?;
    let sc = cfg.synth_config();
    let events = generate_events(&sc).map_err(synth_err)?;
    let dir = &cfg.output_dir;
    let storms = dir.join("storms.csv");
    write_storm_csv(&events, create("synth", &storms)?).map_err(synth_err)?;
    let cpi = dir.join("cpi.csv");
    sc.cpi()
        .map_err(synth_err)?
        .write_csv(create("synth", &cpi)?)
        .map_err(ingest_err)?;
    let mut outputs = vec![storms, cpi];
    for (i, proc) in [FactorProcess::max_temp(), FactorProcess::pdsi()].iter().enumerate() {
        let seed = ndi_core::rng::child_seed(cfg.seed, 1000 + i as u64);
        let series = proc.generate(sc.start_year, sc.end_year, seed).map_err(synth_err)?;
        let path = dir.join(format!("{}.csv", proc.name));
        series.write_csv(create("synth", &path)?).map_err(stress_err)?;
        outputs.push(path);
    }
    eprintln!("synth: {} events over {}-{}", events.len(), sc.start_year, sc.end_year);
    finish(cfg, "synth", Artifacts { inputs: Vec::new(), outputs })
}

fn storm_files(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    if cfg.ingest.storms.is_empty() {
        return Err(CliError::Config("no storm-event files (set [ingest] storms or --storms)".into()));
    }
    let mut files = Vec::new();
    for p in &cfg.ingest.storms {
        require(p)?;
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io("ingest", p, e))?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            if inner.is_empty() {
                return Err(CliError::Config(format!("no .csv files in {}", p.display())));
            }
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn cmd_ingest(cfg: &RunConfig) -> CliResult<Artifacts> {
    let files = storm_files(cfg)?;
    let cpi_path = cfg
        .ingest
        .cpi
        .clone()
        .ok_or_else(|| CliError::Config("no CPI file (set [ingest] cpi or --cpi)".into()))?;
    require(&cpi_path)?;
    prepare_output_dir(cfg)?;
    let ing = &cfg.ingest;
    let opts = IngestOptions { strict: ing.strict };
    let cpi = CpiTable::from_csv(ing.base_year, open("ingest", &cpi_path)?).map_err(ingest_err)?;
    let window = StudyWindow::new(ing.start_year, ing.end_year).map_err(|e| CliError::Config(e.to_string()))?;
    cpi.covers(&window).map_err(ingest_err)?;
    let resolver = EventTypeResolver::default()
        .with_aliases(ing.aliases.iter().map(|(a, c)| (a.as_str(), c.as_str())))
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut records = Vec::new();
    let mut bad_dates = 0;
    for f in &files {
        let (recs, st) = read_storm_csv(open("ingest", f)?, &StormColumns::default(), opts).map_err(ingest_err)?;
        bad_dates += st.skipped_malformed_date;
        records.extend(recs);
    }
    let (panel, mut stats): (LossPanel, IngestStats) =
        aggregate_semimonthly(&records, &cpi, window, &resolver, opts).map_err(ingest_err)?;
    stats.records_read += bad_dates;
    stats.skipped_malformed_date += bad_dates;
    stats.records_skipped += bad_dates;

    let panel_path = cfg.output_dir.join(PANEL_FILE);
    panel.write_csv(create("ingest", &panel_path)?).map_err(ingest_err)?;
    let stats_path = cfg.output_dir.join("ingest_stats.json");
    write_json("ingest", &stats_path, &stats)?;
    eprintln!(
        "ingest: {} records read, {} accepted, {} skipped, {} periods",
        stats.records_read,
        stats.records_accepted,
        stats.records_skipped,
        panel.len()
    );
    let mut inputs = files;
    inputs.push(cpi_path);
    finish(
        cfg,
        "ingest",
        Artifacts {
            inputs,
            outputs: vec![panel_path, stats_path],
        },
    )
}

fn load_panel(cfg: &RunConfig, stage: &'static str) -> CliResult<(PathBuf, LossPanel)> {
    let path = cfg.panel_path();
    let panel = LossPanel::read_csv(open(stage, &path)?).map_err(|e| CliError::data(stage, format!("{}: {e}", path.display())))?;
    Ok((path, panel))
}

fn panel_index(cfg: &RunConfig, panel: &LossPanel) -> CliResult<NdiSeries> {
    build_ndi_with_exponent(&panel.periods, &panel.total_loss, cfg.index.exponent).map_err(index_err)
}

pub fn cmd_index(cfg: &RunConfig) -> CliResult<Artifacts> {
    let (panel_path, panel) = load_panel(cfg, "index")?;
    prepare_output_dir(cfg)?;
    let ndi = panel_index(cfg, &panel)?;
    let path = cfg.output_dir.join("ndi.csv");
    ndi.write_csv(create("index", &path)?).map_err(index_err)?;
    eprintln!("index: {} values", ndi.ndi.len());
    finish(
        cfg,
        "index",
        Artifacts {
            inputs: vec![panel_path],
            outputs: vec![path],
        },
    )
}

fn fit_series(cfg: &RunConfig, panel: &LossPanel) -> Vec<f64> {
    floored_series(&panel.total_loss, cfg.fit.loss_floor, cfg.index.exponent)
}

pub fn cmd_fit(cfg: &RunConfig) -> CliResult<Artifacts> {
    let (panel_path, panel) = load_panel(cfg, "fit")?;
    prepare_output_dir(cfg)?;
    let opts = FitOptions {
        pin_lambda0: cfg.fit.pin_lambda0,
        max_iter: cfg.fit.max_iter,
    };
    let model = fit_garch_nig_with(&fit_series(cfg, &panel), cfg.fit.riskfree, opts).map_err(garch_err)?;
    if !model.converged {
        log::warn!("GARCH-NIG fit hit the iteration limit ({})", model.iterations);
    }
    if model.nonstationary {
        log::warn!("GARCH-NIG fit sits on the a + b = 1 boundary");
    }
    let p = model.params;
    let path = cfg.output_dir.join(FIT_FILE);
    if cfg.fit.save_residuals {
        write_json("fit", &path, &model)?;
    } else {
        let slim = GarchNigModel {
            fitted_variance: Vec::new(),
            residuals: Vec::new(),
            ..model.clone()
        };
        write_json("fit", &path, &slim)?;
    }
    eprintln!(
        "fit: m={:.4e} a={:.4} b={:.4} lambda0={:.4} alpha={:.4} beta={:.4} loglik={:.3}",
        p.m, p.a, p.b, p.lambda0, p.innovation.alpha, p.innovation.beta, model.log_likelihood
    );
    finish(
        cfg,
        "fit",
        Artifacts {
            inputs: vec![panel_path],
            outputs: vec![path],
        },
    )
}

#[derive(Serialize)]
struct PricingMeta {
    spot: f64,
    start: QStart,
    n_paths: usize,
    horizon: usize,
    riskfree: f64,
    seed: u64,
    legacy_recursion: bool,
    resampled_paths: usize,
    resample_attempts: usize,
    max_esscher_residual: f64,
}

pub fn cmd_price(cfg: &RunConfig) -> CliResult<Artifacts> {
    let (panel_path, panel) = load_panel(cfg, "price")?;
    let fit_path = cfg.output_dir.join(FIT_FILE);
    let mut model: GarchNigModel = serde_json::from_reader(open("price", &fit_path)?)
        .map_err(|e| CliError::data("price", format!("{}: {e}", fit_path.display())))?;
    let pc = PricingConfig {
        n_paths: cfg.pricing.paths,
        horizon: cfg.pricing.horizon,
        strikes: parse_strikes(&cfg.pricing.strikes).map_err(|e| CliError::Config(e.to_string()))?,
        riskfree: cfg.fit.riskfree,
        seed: cfg.seed,
        loss_floor: cfg.fit.loss_floor,
        legacy_recursion: cfg.pricing.legacy_recursion,
        max_resamples: cfg.pricing.max_resamples,
    };
    pc.validate().map_err(pricing_err)?;
    let series = fit_series(cfg, &panel);
    if model.residuals.is_empty() {
        // The fit was saved without its filtered state; the filter is
        // deterministic given the stored initial variance.
        let returns = log_returns(&series).map_err(garch_err)?;
        let f = model
            .params
            .filter(&returns, model.riskfree, model.initial_variance)
            .map_err(garch_err)?;
        model.fitted_variance = f.variance;
        model.residuals = f.residuals;
    }
    let ndi = panel_index(cfg, &panel)?;
    let spot = *series.last().expect("panel has periods");
    let ndi0 = *ndi.ndi.last().expect("index has values");
    let start = QStart::from_model(&model, spot, ndi0).map_err(pricing_err)?;
    let paths = simulate_q_paths(&model.params, start, &pc).map_err(pricing_err)?;
    let surface = price_options(&paths, &pc).map_err(pricing_err)?;
    let iv = implied_vol_surface(&surface, spot);

    prepare_output_dir(cfg)?;
    let prices_path = cfg.output_dir.join("option_prices.csv");
    write_price_csv(&surface, create("price", &prices_path)?).map_err(pricing_err)?;
    let iv_path = cfg.output_dir.join("implied_vol.csv");
    write_iv_csv(&iv, create("price", &iv_path)?).map_err(pricing_err)?;
    let meta_path = cfg.output_dir.join("pricing_meta.json");
    let meta = PricingMeta {
        spot,
        start,
        n_paths: pc.n_paths,
        horizon: pc.horizon,
        riskfree: pc.riskfree,
        seed: pc.seed,
        legacy_recursion: pc.legacy_recursion,
        resampled_paths: paths.resampled_paths,
        resample_attempts: paths.resample_attempts,
        max_esscher_residual: paths.max_esscher_residual,
    };
    write_json("price", &meta_path, &meta)?;
    eprintln!(
        "price: {} quotes from {} paths, spot {:.4}, {} resampled paths",
        surface.quotes.len(),
        pc.n_paths,
        spot,
        paths.resampled_paths
    );
    finish(
        cfg,
        "price",
        Artifacts {
            inputs: vec![panel_path, fit_path],
            outputs: vec![prices_path, iv_path, meta_path],
        },
    )
}

#[derive(Serialize)]
struct MeasureStatus {
    measure: String,
    total: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct GroupRow {
    measure: String,
    group: String,
    mctr: f64,
    pctr: f64,
}

pub fn cmd_budget(cfg: &RunConfig) -> CliResult<Artifacts> {
    let (panel_path, panel) = load_panel(cfg, "budget")?;
    let mut inputs = vec![panel_path];
    let measures: Vec<RiskMeasure> = cfg
        .budget
        .measures
        .iter()
        .map(|m| RiskMeasure::parse(m).ok_or_else(|| CliError::Config(format!("unknown risk measure {m:?}"))))
        .collect::<CliResult<_>>()?;
    let groups = match &cfg.budget.groups {
        Some(p) => {
            let mut text = String::new();
            std::io::Read::read_to_string(&mut open("budget", p)?, &mut text).map_err(|e| CliError::io("budget", p, e))?;
            inputs.push(p.clone());
            Some(parse_groups(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let returns = ReturnPanel::from_loss_panel_with_exponent(&panel, cfg.index.exponent).map_err(budget_err)?;
    let w = PortfolioWeights::equal(returns.types.len());
    let report = full_sample_report(&returns, &w, &measures, cfg.budget.min_tail);

    prepare_output_dir(cfg)?;
    let table_path = cfg.output_dir.join("budget_table.csv");
    riskbudget::write_table_csv(&report, create("budget", &table_path)?).map_err(budget_err)?;
    let mut outputs = vec![table_path];
    let status: Vec<MeasureStatus> = report
        .budgets
        .iter()
        .map(|(m, b)| MeasureStatus {
            measure: m.to_string(),
            total: b.as_ref().ok().map(|b| b.total),
            error: b.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    for s in &status {
        if let Some(e) = &s.error {
            eprintln!("budget: {} unavailable: {e}", s.measure);
        }
    }
    if status.iter().all(|s| s.error.is_some()) {
        let first = report.budgets.into_iter().find_map(|(_, b)| b.err());
        return Err(first.map(budget_err).unwrap_or_else(|| CliError::Config("no risk measures".into())));
    }
    let status_path = cfg.output_dir.join("budget_summary.json");
    write_json("budget", &status_path, &status)?;
    outputs.push(status_path);

    if let Some(groups) = &groups {
        let mut rows = Vec::new();
        for (m, b) in &report.budgets {
            let Ok(b) = b else { continue };
            for (group, mctr) in group_mctr(&b.mctr, &returns.types, groups).map_err(budget_err)? {
                rows.push(GroupRow {
                    measure: m.to_string(),
                    group,
                    mctr,
                    pctr: 100.0 * mctr / b.total,
                });
            }
        }
        let path = cfg.output_dir.join("budget_groups.csv");
        let mut wtr = csv_writer("budget", &path)?;
        for r in &rows {
            wtr.serialize(r).map_err(|e| CliError::data("budget", e))?;
        }
        wtr.flush().map_err(|e| CliError::io("budget", &path, e))?;
        outputs.push(path);
    }

    if cfg.budget.rolling {
        match rolling_budgets(&returns, &w, cfg.budget.window, &measures, cfg.budget.min_tail) {
            Ok(reports) => {
                let path = cfg.output_dir.join("budget_rolling.csv");
                riskbudget::write_rolling_csv(&reports, create("budget", &path)?).map_err(budget_err)?;
                eprintln!("budget: {} rolling windows of {}", reports.len(), cfg.budget.window);
                outputs.push(path);
            }
            Err(e) => eprintln!("budget: rolling windows skipped: {e}"),
        }
    }
    finish(cfg, "budget", Artifacts { inputs, outputs })
}

fn csv_writer(stage: &'static str, path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(stage, path)?))
}

pub fn cmd_stress(cfg: &RunConfig) -> CliResult<Artifacts> {
    if cfg.stress.factors.is_empty() {
        return Err(CliError::Config("no stress factors (set [[stress.factors]] or --factor name=path)".into()));
    }
    for f in &cfg.stress.factors {
        require(&f.path)?;
    }
    let (panel_path, panel) = load_panel(cfg, "stress")?;
    let ndi = panel_index(cfg, &panel)?;
    let sc = StressConfig {
        levels: cfg.stress.levels.clone(),
        n_sims: cfg.stress.sims,
        replicates: cfg.stress.replicates,
        seed: cfg.seed,
        ljung_box_lags: cfg.stress.ljung_box_lags,
        ..StressConfig::default()
    };
    let mut inputs = vec![panel_path];
    let mut results = Vec::new();
    for f in &cfg.stress.factors {
        let series = FactorSeries::from_csv(&f.name, open("stress", &f.path)?)
            .map_err(|e| CliError::data("stress", format!("{}: {e}", f.path.display())))?;
        inputs.push(f.path.clone());
        let out = stress_pipeline(&ndi, &series, &sc).map_err(stress_err)?;
        eprintln!(
            "stress: {} over {} months, R raw {:.3}, R residual {:.3}",
            f.name,
            out.months.len(),
            out.correlation_raw,
            out.correlation_residual
        );
        results.push(out);
    }
    prepare_output_dir(cfg)?;
    let dir = &cfg.output_dir;
    let table = dir.join("stress_table.csv");
    stress::write_table_csv(&results, create("stress", &table)?).map_err(stress_err)?;
    let scatter = dir.join("stress_scatter.csv");
    stress::write_scatter_csv(&results, create("stress", &scatter)?).map_err(stress_err)?;
    let contour = dir.join("stress_contour.csv");
    stress::write_contour_csv(&results, cfg.stress.contour_grid, create("stress", &contour)?).map_err(stress_err)?;
    let fits = dir.join("stress_fits.json");
    write_json("stress", &fits, &results)?;
    finish(
        cfg,
        "stress",
        Artifacts {
            inputs,
            outputs: vec![table, scatter, contour, fits],
        },
    )
}

/// ingest → index → fit → price → budget → stress. Stress is skipped when
/// no factors are configured.
pub fn cmd_all(cfg: &RunConfig) -> CliResult<Artifacts> {
    let mut all = Artifacts::default();
    let mut absorb = |a: Artifacts| {
        all.inputs.extend(a.inputs);
        all.outputs.extend(a.outputs);
    };
    absorb(cmd_ingest(cfg)?);
    absorb(cmd_index(cfg)?);
    absorb(cmd_fit(cfg)?);
    absorb(cmd_price(cfg)?);
    absorb(cmd_budget(cfg)?);
    if cfg.stress.factors.is_empty() {
        eprintln!("stress: skipped, no factors configured");
    } else {
        absorb(cmd_stress(cfg)?);
    }
    Ok(all)
}
