//! Stage-by-stage orchestration. Each stage reads the files written by the
//! previous one from the zone's output directory, so any stage can be rerun
//! on its own.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use spotvol_core::detrend::{local_linear_demean, DetrendConfig};
use spotvol_core::factor::{self, eigendecompose, factor_scores_from_rcv, rolling_loadings, variance_explained_count};
use spotvol_core::linalg::{self, Mat};
use spotvol_core::rcv::{self, differences, long_span_average, rcv_adjusted, rcv_naive};
use spotvol_core::semigroup::{
    estimate_semigroup, modulus, propagation_residuals, rolling_semigroup, spectrum, HalfLife, ResidualPanel, RidgePolicy,
    SemigroupSchedule,
};
use spotvol_core::sim::{population_moments, simulate_heat_spde};
use spotvol_core::stats::kpss::KpssTrend;
use spotvol_core::stats::nic::{trailing_mean, LeverageInputs, NicInputs};
use spotvol_core::stats::stationarity::{first_differences, stationarity_tests, StationarityReport};
use spotvol_core::stats::{
    binned_nic, functional_leverage_curves, ols_hac, ps_uncertainty_regression, AdfConfig, KpssNullCache, LeverageCurves,
    RegressionReport, TestResult,
};
use spotvol_core::{PricePanel, DAY};

use crate::config::{PipelineConfig, SemigroupMode, SimulationParams, ZoneInput};
use crate::formats::{self, bin_labels};
use crate::ingest::{build_panel, parse_price_csv, parse_timezone};

pub mod files {
    pub const PANEL_CSV: &str = "panel.csv";
    pub const PANEL_JSON: &str = "panel.json";
    pub const TRUTH_JSON: &str = "truth.json";
    pub const MHAT: &str = "mhat.csv";
    pub const DEMEANED: &str = "demeaned.csv";
    pub const DETREND_JSON: &str = "detrend.json";
    pub const SEMIGROUP_S: &str = "semigroup_S.csv";
    pub const SEMIGROUP_SPECTRUM: &str = "semigroup_spectrum.csv";
    pub const SEMIGROUP_JSON: &str = "semigroup.json";
    pub const SEMIGROUP_SCHEDULE: &str = "semigroup_schedule.json";
    pub const EPS: &str = "residuals_eps.csv";
    pub const BHAT: &str = "residuals_bhat.csv";
    pub const EPS_FULL: &str = "residuals_full_eps.csv";
    pub const BHAT_FULL: &str = "residuals_full_bhat.csv";
    pub const RCV_NAIVE: &str = "rcv_naive.csv";
    pub const RCV_NAIVE_JSON: &str = "rcv_naive.json";
    pub const RCV_ADJUSTED: &str = "rcv_adjusted.csv";
    pub const RCV_ADJUSTED_JSON: &str = "rcv_adjusted.json";
    pub const LONG_SPAN_NAIVE: &str = "long_span_naive.csv";
    pub const LONG_SPAN_ADJUSTED: &str = "long_span_adjusted.csv";
    pub const CORRELATION: &str = "realized_correlation.csv";
    pub const HEATMAP: &str = "log_vol_heatmap.csv";
    pub const RV_AVERAGE: &str = "rv_average_price.csv";
    pub const PROPAGATION_JSON: &str = "propagation_share.json";
    pub const PROPAGATION_CSV: &str = "propagation_levels.csv";
    pub const FACTOR_JSON: &str = "factor_summary.json";
    pub const FACTOR_LOADINGS: &str = "factor_loadings.csv";
    pub const FACTOR_DIRECTIONS: &str = "factor_directions.csv";
    pub const FACTOR_SCORES: &str = "factor_scores.csv";
    pub const STATIONARITY_LEVELS: &str = "stationarity_levels.csv";
    pub const STATIONARITY_DIFFERENCES: &str = "stationarity_differences.csv";
    pub const STATIONARITY_JSON: &str = "stationarity.json";
    pub const STATIONARITY_TXT: &str = "stationarity.txt";
    pub const NIC_JSON: &str = "nic_summary.json";
    pub const LEVERAGE: &str = "leverage_curves.csv";
    pub const LEVERAGE_CONDITIONAL: &str = "leverage_curves_conditional.csv";
    pub const FUNDAMENTALS: &str = "fundamentals_regression.csv";
    pub const FUNDAMENTALS_TXT: &str = "fundamentals_regression.txt";
    pub const PS_REGRESSION: &str = "ps_regression.csv";
    pub const PS_REGRESSION_TXT: &str = "ps_regression.txt";
    pub const MANIFEST: &str = "manifest.json";

    pub fn nic(spec: u8) -> String {
        format!("nic_spec{spec}.csv")
    }

    pub fn loading_surface(k: usize) -> String {
        format!("loading_surface_k{k}.csv")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Simulate,
    Detrend,
    Semigroup,
    Rcv,
    Factors,
    Stats,
}

impl Stage {
    pub const ANALYSIS: [Stage; 5] = [Stage::Detrend, Stage::Semigroup, Stage::Rcv, Stage::Factors, Stage::Stats];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Simulate => "simulate",
            Stage::Detrend => "detrend",
            Stage::Semigroup => "semigroup",
            Stage::Rcv => "rcv",
            Stage::Factors => "factors",
            Stage::Stats => "stats",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A stage failure tagged with where it happened.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed for zone `{zone}`: {source:#}")]
pub struct StageError {
    pub stage: Stage,
    pub zone: String,
    #[source]
    pub source: anyhow::Error,
}

pub fn zone_dir(cfg: &PipelineConfig, zone: &str) -> PathBuf {
    cfg.out_dir.join(zone)
}

fn stage_result<T>(stage: Stage, zone: &str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|source| StageError { stage, zone: zone.to_string(), source })
}

/// Run one analysis stage for a zone whose directory already holds the inputs.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage, zone: &str) -> std::result::Result<(), StageError> {
    let dir = zone_dir(cfg, zone);
    let r = match stage {
        Stage::Ingest => match cfg.zones.iter().find(|z| z.name == zone) {
            Some(z) => ingest_stage(cfg, z, &dir),
            None => Err(anyhow!("zone `{zone}` has no configured input")),
        },
        Stage::Simulate => match &cfg.simulation {
            Some(s) => simulate_stage(cfg, s, &dir),
            None => Err(anyhow!("no [simulation] section configured")),
        },
        Stage::Detrend => detrend_stage(cfg, &dir),
        Stage::Semigroup => semigroup_stage(cfg, &dir),
        Stage::Rcv => rcv_stage(cfg, &dir),
        Stage::Factors => factors_stage(cfg, &dir),
        Stage::Stats => stats_stage(cfg, &dir),
    };
    stage_result(stage, zone, r)
}

/// Zones processed by `run-all`, each paired with the stage that materializes its panel.
pub fn zone_sources(cfg: &PipelineConfig) -> Vec<(String, Stage)> {
    if cfg.zones.is_empty() {
        cfg.simulation.iter().map(|s| (s.zone.clone(), Stage::Simulate)).collect()
    } else {
        cfg.zones.iter().map(|z| (z.name.clone(), Stage::Ingest)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub window: usize,
    pub delta: f64,
    pub rolling: bool,
    pub bandwidth_days: f64,
    pub refit_days: usize,
    pub burn_in_days: usize,
    pub zones: BTreeMap<String, Vec<String>>,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<Manifest, StageError> {
    let mut zones = BTreeMap::new();
    for (zone, source) in zone_sources(cfg) {
        run_stage(cfg, source, &zone)?;
        for stage in Stage::ANALYSIS {
            run_stage(cfg, stage, &zone)?;
        }
        let dir = zone_dir(cfg, &zone);
        let mut produced: Vec<String> = stage_result(Stage::Stats, &zone, list_files(&dir))?;
        produced.retain(|f| f != files::MANIFEST);
        zones.insert(zone, produced);
    }
    let manifest = Manifest {
        config_hash: stage_result(Stage::Ingest, "*", cfg.hash())?,
        seed: cfg.seed,
        window: cfg.rcv.window,
        delta: cfg.rcv.delta,
        rolling: cfg.rcv.rolling,
        bandwidth_days: cfg.detrend.bandwidth_days,
        refit_days: cfg.semigroup.refit_days,
        burn_in_days: cfg.semigroup.burn_in_days,
        zones,
    };
    stage_result(Stage::Stats, "*", formats::write_json(&cfg.out_dir.join(files::MANIFEST), &manifest))?;
    Ok(manifest)
}

fn list_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let e = e?;
        if e.file_type()?.is_file() {
            names.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

fn read_panel(dir: &Path) -> Result<PricePanel> {
    formats::read_panel(&dir.join(files::PANEL_CSV), &dir.join(files::PANEL_JSON))
}

// ---------------------------------------------------------------- ingest

fn ingest_stage(cfg: &PipelineConfig, z: &ZoneInput, dir: &Path) -> Result<()> {
    let tz = parse_timezone(&z.timezone)?;
    let file = File::open(&z.input).with_context(|| format!("opening {}", z.input.display()))?;
    let parsed = parse_price_csv(std::io::BufReader::new(file), &cfg.schema)?;
    let panel = build_panel(&parsed, &z.name, &tz, &cfg.partition.build()?, z.dst_policy)?;
    formats::write_panel(&dir.join(files::PANEL_CSV), &dir.join(files::PANEL_JSON), &panel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub seed: u64,
    pub n_modes: usize,
    pub kappa: f64,
    pub zero_mode_rate: f64,
    pub sigma: Vec<f64>,
    pub delta: f64,
    pub observation: Vec<Vec<f64>>,
    /// Population targets; present when the configuration is stationary with zero drift.
    pub population: Option<PopulationFile>,
    /// Expected weighted innovation covariance over one window starting on day 1.
    pub weighted_iv_first_window: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFile {
    pub predictor: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub adjusted_limit: Vec<Vec<f64>>,
    pub naive_limit: Vec<Vec<f64>>,
    pub propagation: Vec<Vec<f64>>,
    pub weighted_iv: Vec<Vec<f64>>,
}

pub fn nested(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| linalg::row(m, r)).collect()
}

fn simulate_stage(cfg: &PipelineConfig, sim: &SimulationParams, dir: &Path) -> Result<()> {
    let sc = sim.sim_config(cfg.seed, cfg.rcv.delta)?;
    let truth = simulate_heat_spde(&sc)?;
    let panel = truth.panel.clone().with_zone(&sim.zone);
    formats::write_panel(&dir.join(files::PANEL_CSV), &dir.join(files::PANEL_JSON), &panel)?;
    let mut stationary = sc.clone();
    stationary.drift = spotvol_core::sim::DriftSpec::Zero;
    let population = population_moments(&stationary).ok().map(|m| PopulationFile {
        predictor: nested(&m.s),
        gamma: nested(&m.gamma),
        adjusted_limit: nested(&m.adjusted),
        naive_limit: nested(&m.naive),
        propagation: nested(&m.propagation),
        weighted_iv: nested(&m.weighted_iv),
    });
    let first = spotvol_core::sim::true_semigroup_weighted_iv(&sc, 1, cfg.rcv.window)?;
    let file = TruthFile {
        seed: sc.seed,
        n_modes: sc.n_modes,
        kappa: sc.kappa,
        zero_mode_rate: sc.zero_mode_rate,
        sigma: sim.sigma.clone(),
        delta: sc.delta,
        observation: nested(&truth.observation),
        population,
        weighted_iv_first_window: nested(&first),
    };
    formats::write_json(&dir.join(files::TRUTH_JSON), &file)
}

// ---------------------------------------------------------------- detrend

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetrendFile {
    pub bandwidth_days: f64,
    pub bandwidth_years: f64,
    pub dow_dummies: bool,
    pub valid_from: usize,
    pub span_start: usize,
    pub rows: usize,
}

fn detrend_stage(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let panel = read_panel(dir)?;
    let dc = DetrendConfig { bandwidth_days: cfg.detrend.bandwidth_days, dow_dummies: cfg.detrend.dow_dummies };
    let dm = local_linear_demean(&panel, &dc)?;
    let labels = bin_labels(panel.partition());
    formats::write_dated_matrix(&dir.join(files::MHAT), &labels, &dm.dates, &dm.mhat)?;
    let (dates, rows) = dm.valid_rows();
    if dates.len() < 2 {
        bail!("no valid de-trended rows; the panel is shorter than the kernel window");
    }
    formats::write_dated_matrix(&dir.join(files::DEMEANED), &labels, &dates, &rows)?;
    let meta = DetrendFile {
        bandwidth_days: dc.bandwidth_days,
        bandwidth_years: dc.bandwidth_years(),
        dow_dummies: dc.dow_dummies,
        valid_from: dm.valid_from,
        span_start: dm.span_start(),
        rows: dates.len(),
    };
    formats::write_json(&dir.join(files::DETREND_JSON), &meta)
}

// ---------------------------------------------------------------- semigroup

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupFile {
    pub n_obs: usize,
    pub ridge: f64,
    pub auto_ridge: bool,
    pub window: Option<(NaiveDate, NaiveDate)>,
    pub spectral_radius: f64,
    /// `None` when the largest eigenvalue has unit modulus or more.
    pub half_life_days: Option<f64>,
    pub mode: SemigroupMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub refit_date: NaiveDate,
    pub n_obs: usize,
    pub ridge: f64,
    pub s: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SpectrumRow {
    index: usize,
    re: f64,
    im: f64,
    modulus: f64,
}

fn write_residuals(dir: &Path, eps_name: &str, bhat_name: &str, labels: &[String], res: &ResidualPanel) -> Result<()> {
    formats::write_dated_matrix(&dir.join(eps_name), labels, &res.dates, &res.eps)?;
    formats::write_dated_matrix(&dir.join(bhat_name), labels, &res.dates, &res.bhat)
}

fn read_residuals(dir: &Path, eps_name: &str, bhat_name: &str) -> Result<ResidualPanel> {
    let (_, dates, eps) = formats::read_dated_matrix(&dir.join(eps_name))?;
    let (_, dates_b, bhat) = formats::read_dated_matrix(&dir.join(bhat_name))?;
    if dates != dates_b {
        bail!("residual files are not aligned");
    }
    Ok(ResidualPanel { dates, eps, bhat, first_row: 0 })
}

fn semigroup_stage(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let (labels, dates, rows) = formats::read_dated_matrix(&dir.join(files::DEMEANED))?;
    let policy = RidgePolicy { ridge: cfg.semigroup.ridge, auto_fallback: true };
    let mut full = estimate_semigroup(&rows, policy)?;
    full.window = Some((dates[0], dates[dates.len() - 1]));
    formats::write_matrix(&dir.join(files::SEMIGROUP_S), &labels, &labels, &full.s)?;
    let spec = spectrum(&full.s);
    let spectrum_rows: Vec<SpectrumRow> = spec
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, z)| SpectrumRow { index: i + 1, re: z.re, im: z.im, modulus: modulus(z) })
        .collect();
    formats::write_rows(&dir.join(files::SEMIGROUP_SPECTRUM), &spectrum_rows)?;
    let half_life_days = match spec.half_life {
        HalfLife::Days(h) => Some(h),
        HalfLife::Instant => Some(0.0),
        HalfLife::Undefined => None,
    };
    let meta = SemigroupFile {
        n_obs: full.n_obs,
        ridge: full.ridge,
        auto_ridge: full.auto_ridge,
        window: full.window,
        spectral_radius: spectrum_rows.first().map_or(0.0, |r| r.modulus),
        half_life_days,
        mode: cfg.semigroup.mode,
    };
    formats::write_json(&dir.join(files::SEMIGROUP_JSON), &meta)?;

    let full_schedule = SemigroupSchedule::constant(full);
    let full_res = propagation_residuals(&rows, &dates, &full_schedule)?;
    write_residuals(dir, files::EPS_FULL, files::BHAT_FULL, &labels, &full_res)?;

    let schedule = match cfg.semigroup.mode {
        SemigroupMode::Full => full_schedule,
        SemigroupMode::Rolling => rolling_semigroup(&rows, &dates, cfg.semigroup.refit_days, cfg.semigroup.burn_in_days, policy)?,
    };
    let entries: Vec<ScheduleEntry> = schedule
        .refit_rows
        .iter()
        .zip(&schedule.estimates)
        .map(|(&r, e)| ScheduleEntry { refit_date: dates[r.min(dates.len() - 1)], n_obs: e.n_obs, ridge: e.ridge, s: nested(&e.s) })
        .collect();
    formats::write_json(&dir.join(files::SEMIGROUP_SCHEDULE), &entries)?;
    let res = propagation_residuals(&rows, &dates, &schedule)?;
    write_residuals(dir, files::EPS, files::BHAT, &labels, &res)
}

// ---------------------------------------------------------------- rcv

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationFile {
    pub ps_total: f64,
    pub ps_per_hour: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PropagationRow {
    hour: String,
    ps: f64,
    propagation: f64,
    innovation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RvRow {
    date: NaiveDate,
    rv: f64,
}

fn rcv_stage(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let meta: formats::PanelMeta = formats::read_json(&dir.join(files::PANEL_JSON))?;
    let partition = spotvol_core::DeliveryPartition::new(meta.breakpoints.clone(), Some(meta.labels.clone()))?;
    let p = cfg.rcv;
    let (labels, dates, rows) = formats::read_dated_matrix(&dir.join(files::DEMEANED))?;
    let (ddates, diffs) = differences(&rows, &dates);
    let naive = rcv_naive(&diffs, &ddates, p.window, p.delta, p.rolling)?;
    formats::write_rcv(&dir.join(files::RCV_NAIVE), &dir.join(files::RCV_NAIVE_JSON), &naive)?;
    let res = read_residuals(dir, files::EPS, files::BHAT)?;
    let adjusted = rcv_adjusted(&res, p.window, p.delta, p.rolling)?;
    formats::write_rcv(&dir.join(files::RCV_ADJUSTED), &dir.join(files::RCV_ADJUSTED_JSON), &adjusted)?;

    let ls_naive = long_span_average(&naive)?;
    let ls_adjusted = long_span_average(&adjusted)?;
    formats::write_matrix(&dir.join(files::LONG_SPAN_NAIVE), &labels, &labels, &ls_naive)?;
    formats::write_matrix(&dir.join(files::LONG_SPAN_ADJUSTED), &labels, &labels, &ls_adjusted)?;
    formats::write_matrix(&dir.join(files::CORRELATION), &labels, &labels, &rcv::realized_correlation(&ls_adjusted)?)?;
    formats::write_dated_matrix(&dir.join(files::HEATMAP), &labels, &adjusted.dates, &adjusted.log_diagonals())?;

    let w = partition.average_weights();
    let rv: Vec<RvRow> = adjusted
        .dates
        .iter()
        .zip(rcv::rv_average_price(&adjusted, &w)?)
        .map(|(d, rv)| RvRow { date: *d, rv })
        .collect();
    formats::write_rows(&dir.join(files::RV_AVERAGE), &rv)?;

    let full = read_residuals(dir, files::EPS_FULL, files::BHAT_FULL)?;
    let report = rcv::propagation_share(&full, p.delta)?;
    let prop_rows: Vec<PropagationRow> = (0..labels.len())
        .map(|h| PropagationRow {
            hour: labels[h].clone(),
            ps: report.ps_per_hour[h],
            propagation: report.propagation_level[h],
            innovation: report.innovation_level[h],
        })
        .collect();
    formats::write_rows(&dir.join(files::PROPAGATION_CSV), &prop_rows)?;
    formats::write_json(&dir.join(files::PROPAGATION_JSON), &PropagationFile { ps_total: report.ps_total, ps_per_hour: report.ps_per_hour })
}

// ---------------------------------------------------------------- factors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFile {
    pub eigenvalues: Vec<f64>,
    pub explained: Vec<f64>,
    pub cumulative_explained: Vec<f64>,
    pub threshold: f64,
    pub components_for_threshold: usize,
    pub x_definition: String,
}

fn read_adjusted(dir: &Path) -> Result<rcv::RcvSeries> {
    formats::read_rcv(&dir.join(files::RCV_ADJUSTED), &dir.join(files::RCV_ADJUSTED_JSON))
}

fn factors_stage(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let meta: formats::PanelMeta = formats::read_json(&dir.join(files::PANEL_JSON))?;
    let labels = meta.labels;
    let adjusted = read_adjusted(dir)?;
    let decomp = eigendecompose(&long_span_average(&adjusted)?)?;
    let d = decomp.dim();
    let k = cfg.factors.components.min(d);
    let comp_names: Vec<String> = (1..=d).map(|i| format!("k{i}")).collect();
    formats::write_matrix(&dir.join(files::FACTOR_LOADINGS), &labels, &comp_names, &decomp.loadings())?;
    formats::write_matrix(&dir.join(files::FACTOR_DIRECTIONS), &labels, &comp_names, &decomp.directions)?;
    let scores = factor_scores_from_rcv(&decomp, &adjusted, k)?;
    let score_names: Vec<String> = (1..=k).map(|i| format!("S{i}")).collect();
    formats::write_dated_matrix(&dir.join(files::FACTOR_SCORES), &score_names, &scores.dates, &scores.scores)?;
    let surfaces = rolling_loadings(&adjusted, k)?;
    for (i, s) in surfaces.surfaces.iter().enumerate() {
        formats::write_dated_matrix(&dir.join(files::loading_surface(i + 1)), &labels, &surfaces.dates, s)?;
    }
    let summary = FactorFile {
        eigenvalues: decomp.eigenvalues.clone(),
        explained: decomp.explained(),
        cumulative_explained: decomp.cumulative_explained(),
        threshold: cfg.factors.explained_threshold,
        components_for_threshold: variance_explained_count(&decomp, cfg.factors.explained_threshold)?,
        x_definition: factor::X_DIAGONAL_ADJUSTED.to_string(),
    };
    formats::write_json(&dir.join(files::FACTOR_JSON), &summary)
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub label: String,
    pub test: String,
    pub statistic: f64,
    pub p_value: String,
    pub critical_5: f64,
    pub reject_5: bool,
    pub lags: usize,
}

fn test_row(label: &str, test: &str, r: &TestResult) -> TestRow {
    TestRow {
        label: label.to_string(),
        test: test.to_string(),
        statistic: r.statistic,
        p_value: r.p_display(),
        critical_5: r.critical_5,
        reject_5: r.reject_5,
        lags: r.lags,
    }
}

fn stationarity_rows(rep: &StationarityReport, labels: &[String]) -> Vec<TestRow> {
    let mut rows = vec![test_row("joint", "kpss_multivariate", &rep.multivariate)];
    for (h, label) in labels.iter().enumerate() {
        rows.push(test_row(label, "kpss", &rep.kpss[h]));
        rows.push(test_row(label, "adf", &rep.adf[h]));
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaritySummary {
    pub multivariate_statistic: f64,
    pub multivariate_p: String,
    pub multivariate_reject: bool,
    pub kpss_rejections: usize,
    pub adf_rejections: usize,
    pub hours: usize,
    pub median_kpss: f64,
    pub median_adf: f64,
    pub median_adf_p: f64,
}

fn summarize(rep: &StationarityReport) -> StationaritySummary {
    StationaritySummary {
        multivariate_statistic: rep.multivariate.statistic,
        multivariate_p: rep.multivariate.p_display(),
        multivariate_reject: rep.multivariate.reject_5,
        kpss_rejections: rep.kpss_rejections(),
        adf_rejections: rep.adf_rejections(),
        hours: rep.kpss.len(),
        median_kpss: rep.median_kpss(),
        median_adf: rep.median_adf(),
        median_adf_p: rep.median_adf_p(),
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn stationarity_text(zone: &str, levels: &StationaritySummary, diffs: &StationaritySummary) -> String {
    let mut s = format!("Stationarity tests, zone {zone}\n\n");
    s.push_str(&format!("{:<14}{:>14}{:>14}\n", "", "levels", "differences"));
    let line = |name: &str, a: String, b: String| format!("{name:<14}{a:>14}{b:>14}\n");
    s.push_str(&line("MV-KPSS", format!("{:.4}", levels.multivariate_statistic), format!("{:.4}", diffs.multivariate_statistic)));
    s.push_str(&line("  p-value", levels.multivariate_p.clone(), diffs.multivariate_p.clone()));
    let decision = |r: bool| if r { "Reject" } else { "Accept" }.to_string();
    s.push_str(&line("  decision", decision(levels.multivariate_reject), decision(diffs.multivariate_reject)));
    let frac = |k: usize, n: usize| format!("{k}/{n}");
    s.push_str(&line("KPSS reject", frac(levels.kpss_rejections, levels.hours), frac(diffs.kpss_rejections, diffs.hours)));
    s.push_str(&line("KPSS median", format!("{:.4}", levels.median_kpss), format!("{:.4}", diffs.median_kpss)));
    s.push_str(&line("ADF median", format!("{:.3}", levels.median_adf), format!("{:.3}", diffs.median_adf)));
    s.push_str(&line("  median p", format!("{:.4}", levels.median_adf_p), format!("{:.4}", diffs.median_adf_p)));
    s.push_str(&line("ADF reject", frac(levels.adf_rejections, levels.hours), frac(diffs.adf_rejections, diffs.hours)));
    s.push_str("\nRejections at the 5% level.\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NicRow {
    bin: usize,
    lower: f64,
    upper: f64,
    center: f64,
    count: usize,
    mu: f64,
    se: f64,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NicSummary {
    pub spec: u8,
    pub description: String,
    pub observations: usize,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub wald_statistic: f64,
    pub wald_p: f64,
    pub hac_lags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LeverageRow {
    hour: String,
    beta_plus: f64,
    plus_lo: f64,
    plus_hi: f64,
    beta_minus: f64,
    minus_lo: f64,
    minus_hi: f64,
    wald_p: f64,
    asymmetric: bool,
}

fn leverage_rows(c: &LeverageCurves, labels: &[String]) -> Vec<LeverageRow> {
    (0..c.len())
        .map(|h| {
            let (plo, phi) = c.plus_band(h);
            let (mlo, mhi) = c.minus_band(h);
            LeverageRow {
                hour: labels[h].clone(),
                beta_plus: c.beta_plus[h],
                plus_lo: plo,
                plus_hi: phi,
                beta_minus: c.beta_minus[h],
                minus_lo: mlo,
                minus_hi: mhi,
                wald_p: c.wald_p[h],
                asymmetric: c.asymmetric[h],
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CoefRow {
    name: String,
    coef: f64,
    se: f64,
    t: f64,
    p: f64,
}

fn coef_rows(r: &RegressionReport) -> Vec<CoefRow> {
    (0..r.coef.len())
        .map(|i| CoefRow { name: r.names[i].clone(), coef: r.coef[i], se: r.se[i], t: r.t_stats[i], p: r.p_values[i] })
        .collect()
}

/// Coefficients with significance stars and t-statistics in parentheses.
pub fn regression_text(title: &str, r: &RegressionReport) -> String {
    let mut s = format!("{title}\n\n");
    for i in 0..r.coef.len() {
        s.push_str(&format!("{:<16}{:>12.4}{:<4}\n{:<16}{:>12}\n", r.names[i], r.coef[i], stars(r.p_values[i]), "", format!("({:.2})", r.t_stats[i])));
    }
    s.push_str(&format!("\nR²{:>26.3}\nN{:>27}\n", r.r2, r.n));
    if let Some(l) = r.lags {
        s.push_str(&format!("Newey–West lags{:>13}\n", l));
    }
    s.push_str("Significance: *** p<0.01, ** p<0.05, * p<0.1\n");
    s
}

/// Align a dated series onto `dates`; every target date must be present.
fn align(src_dates: &[NaiveDate], values: &[f64], dates: &[NaiveDate]) -> Result<Vec<f64>> {
    let map: BTreeMap<NaiveDate, f64> = src_dates.iter().copied().zip(values.iter().copied()).collect();
    dates.iter().map(|d| map.get(d).copied().ok_or_else(|| anyhow!("no value on {d}"))).collect()
}

fn stats_stage(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let sp = &cfg.stats;
    let panel = read_panel(dir)?;
    let labels = bin_labels(panel.partition());
    let trend = if sp.kpss_trend { KpssTrend::Trend } else { KpssTrend::Level };
    let adf_cfg = AdfConfig { max_lags: sp.adf_max_lags, deterministic: sp.deterministic()?, fixed_lags: None };
    let mut cache = KpssNullCache::new(sp.kpss_draws);
    let levels = stationarity_tests(panel.values(), trend, &adf_cfg, &mut cache).context("stationarity tests on levels")?;
    let diffs = stationarity_tests(&first_differences(panel.values()), trend, &adf_cfg, &mut cache).context("stationarity tests on differences")?;
    formats::write_rows(&dir.join(files::STATIONARITY_LEVELS), &stationarity_rows(&levels, &labels))?;
    formats::write_rows(&dir.join(files::STATIONARITY_DIFFERENCES), &stationarity_rows(&diffs, &labels))?;
    let (ls, ds) = (summarize(&levels), summarize(&diffs));
    std::fs::write(dir.join(files::STATIONARITY_TXT), stationarity_text(panel.zone(), &ls, &ds))?;
    formats::write_json(&dir.join(files::STATIONARITY_JSON), &[ls, ds])?;

    // Weekly averages of the daily and hourly prices, indexed like the RCV windows.
    let w = cfg.rcv.window;
    let pbar_all = trailing_mean(&panel.daily_average(), w);
    let window_ends = panel.dates().get(w - 1..).unwrap_or(&[]);
    let (_, score_dates, scores) = formats::read_dated_matrix(&dir.join(files::FACTOR_SCORES))?;
    let s1 = linalg::column(&scores, 0);
    let pbar = align(window_ends, &pbar_all, &score_dates)?;
    let inputs = NicInputs::build(&score_dates, &pbar, &s1, sp.nic_lag_days)?;
    let mut summaries = Vec::new();
    for spec in sp.control_specs()? {
        let curve = binned_nic(&inputs, spec, sp.nic_bins, sp.nic_hac_lags).with_context(|| format!("news-impact curve, spec {}", spec.id()))?;
        let rows: Vec<NicRow> = (0..curve.mu.len())
            .map(|b| NicRow {
                bin: b + 1,
                lower: curve.lower[b],
                upper: curve.upper[b],
                center: curve.centers[b],
                count: curve.counts[b],
                mu: curve.mu[b],
                se: curve.se[b],
                lo: curve.lo[b],
                hi: curve.hi[b],
            })
            .collect();
        formats::write_rows(&dir.join(files::nic(spec.id())), &rows)?;
        summaries.push(NicSummary {
            spec: spec.id(),
            description: spec.description().to_string(),
            observations: inputs.len(),
            beta_plus: curve.beta_plus(),
            beta_minus: curve.beta_minus(),
            wald_statistic: curve.wald.statistic,
            wald_p: curve.wald.p_value,
            hac_lags: curve.hac_lags,
        });
    }
    formats::write_json(&dir.join(files::NIC_JSON), &summaries)?;

    let adjusted = read_adjusted(dir)?;
    let d = panel.bins();
    let hourly: Vec<Vec<f64>> = (0..d).map(|h| trailing_mean(&linalg::column(panel.values(), h), w)).collect();
    let mut pbar_hourly = Mat::zeros(adjusted.len(), d);
    for (h, col) in hourly.iter().enumerate() {
        for (r, v) in align(window_ends, col, &adjusted.dates)?.into_iter().enumerate() {
            pbar_hourly[(r, h)] = v;
        }
    }
    let pbar_iv = align(window_ends, &pbar_all, &adjusted.dates)?;
    let lev = LeverageInputs::build(&adjusted.dates, &adjusted.diagonals(), &pbar_iv, &pbar_hourly, w)?;
    let weak = functional_leverage_curves(&lev.iv, &lev.driver, None, sp.weekly_hac_lags).context("leverage curves")?;
    formats::write_rows(&dir.join(files::LEVERAGE), &leverage_rows(&weak, &labels))?;
    let strong = functional_leverage_curves(&lev.iv, &lev.driver, Some(&lev.controls), sp.weekly_hac_lags).context("conditional leverage curves")?;
    formats::write_rows(&dir.join(files::LEVERAGE_CONDITIONAL), &leverage_rows(&strong, &labels))?;

    if let Some(path) = &sp.fundamentals {
        let (names, fdates, x) = formats::read_dated_matrix(path)?;
        let logs: Vec<f64> = s1.iter().map(|v| v.ln()).collect();
        let y = align(&score_dates, &logs, &fdates).context("fundamentals dates must be factor-score dates")?;
        let mut design = Mat::from_element(x.nrows(), x.ncols() + 1, 1.0);
        design.columns_mut(1, x.ncols()).copy_from(&x);
        let mut all = vec!["const".to_string()];
        all.extend(names);
        let rep = ols_hac(&y, &design, Some(&all), sp.weekly_hac_lags)?;
        formats::write_rows(&dir.join(files::FUNDAMENTALS), &coef_rows(&rep))?;
        std::fs::write(dir.join(files::FUNDAMENTALS_TXT), regression_text("Regression of log level-factor score on fundamentals", &rep))?;
    }
    if let Some(path) = &sp.forecast_errors {
        #[derive(Deserialize)]
        struct ErrRow {
            hour: f64,
            wind_mse: f64,
            solar_mse: f64,
        }
        let errs: Vec<ErrRow> = formats::read_rows(path)?;
        let prop: PropagationFile = formats::read_json(&dir.join(files::PROPAGATION_JSON))?;
        if errs.len() != prop.ps_per_hour.len() {
            bail!("{} forecast-error rows for {} hours", errs.len(), prop.ps_per_hour.len());
        }
        let col = |f: fn(&ErrRow) -> f64| errs.iter().map(f).collect::<Vec<f64>>();
        let rep = ps_uncertainty_regression(&prop.ps_per_hour, &col(|e| e.hour), &col(|e| e.wind_mse), &col(|e| e.solar_mse))?;
        formats::write_rows(&dir.join(files::PS_REGRESSION), &coef_rows(&rep))?;
        std::fs::write(dir.join(files::PS_REGRESSION_TXT), regression_text("Per-hour propagation share on forecast uncertainty", &rep))?;
    }
    Ok(())
}

/// Default year fraction, re-exported for the command line.
pub const DEFAULT_DELTA: f64 = DAY;
