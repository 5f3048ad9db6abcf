//! Pipeline configuration (TOML). Every field has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spotvol_core::sim::{DriftSpec, InitialCondition, SimConfig, VolSpec};
use spotvol_core::stats::{ControlSpec, Deterministic};
use spotvol_core::{DeliveryPartition, DAY};

use crate::ingest::{CsvSchema, DstPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub zones: Vec<ZoneInput>,
    pub schema: CsvSchema,
    pub partition: PartitionConfig,
    pub detrend: DetrendParams,
    pub semigroup: SemigroupParams,
    pub rcv: RcvParams,
    pub factors: FactorParams,
    pub stats: StatsParams,
    /// Used in place of `zones` when no inputs are configured.
    pub simulation: Option<SimulationParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneInput {
    pub name: String,
    pub input: PathBuf,
    pub timezone: String,
    #[serde(default)]
    pub dst_policy: DstPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    /// Uniform partition with this many bins, unless `breakpoint_hours` is set.
    pub bins: usize,
    /// Breakpoints in hours of the day, from 0 to 24.
    pub breakpoint_hours: Option<Vec<f64>>,
    pub labels: Option<Vec<String>>,
    pub fine_grid: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { bins: 24, breakpoint_hours: None, labels: None, fine_grid: spotvol_core::panel::DEFAULT_FINE_GRID }
    }
}

impl PartitionConfig {
    pub fn build(&self) -> Result<DeliveryPartition> {
        let p = match &self.breakpoint_hours {
            Some(h) => DeliveryPartition::new(h.iter().map(|x| x / 24.0 * std::f64::consts::TAU).collect(), self.labels.clone())?,
            None => match &self.labels {
                Some(l) => DeliveryPartition::new(DeliveryPartition::uniform(self.bins)?.breakpoints().to_vec(), Some(l.clone()))?,
                None => DeliveryPartition::uniform(self.bins)?,
            },
        };
        spotvol_core::panel::observation_weights(&p, self.fine_grid)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetrendParams {
    pub bandwidth_days: f64,
    pub dow_dummies: bool,
}

impl Default for DetrendParams {
    fn default() -> Self {
        Self { bandwidth_days: spotvol_core::detrend::DEFAULT_BANDWIDTH_DAYS, dow_dummies: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemigroupMode {
    /// Backward-looking refits on a fixed cadence.
    Rolling,
    /// One estimate from the whole sample.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemigroupParams {
    pub mode: SemigroupMode,
    pub refit_days: usize,
    pub burn_in_days: usize,
    pub ridge: f64,
}

impl Default for SemigroupParams {
    fn default() -> Self {
        Self {
            mode: SemigroupMode::Rolling,
            refit_days: spotvol_core::semigroup::DEFAULT_REFIT_DAYS,
            burn_in_days: spotvol_core::semigroup::DEFAULT_BURN_IN_DAYS,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RcvParams {
    pub window: usize,
    pub delta: f64,
    pub rolling: bool,
}

impl Default for RcvParams {
    fn default() -> Self {
        Self { window: spotvol_core::rcv::DEFAULT_WINDOW, delta: DAY, rolling: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorParams {
    /// Components kept for scores and loading surfaces.
    pub components: usize,
    pub explained_threshold: f64,
}

impl Default for FactorParams {
    fn default() -> Self {
        Self { components: 3, explained_threshold: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsParams {
    pub nic_specs: Vec<u8>,
    pub nic_bins: usize,
    pub nic_hac_lags: usize,
    /// Lag in days of the news-impact differences.
    pub nic_lag_days: usize,
    pub weekly_hac_lags: usize,
    pub kpss_trend: bool,
    pub kpss_draws: usize,
    /// `nc`, `c` or `ct`.
    pub adf_deterministic: String,
    pub adf_max_lags: Option<usize>,
    /// Optional `date,<regressors...>` table for regressions of the log level-factor score.
    pub fundamentals: Option<PathBuf>,
    /// Optional `hour,wind_mse,solar_mse` table for the propagation-share regression.
    pub forecast_errors: Option<PathBuf>,
}

impl Default for StatsParams {
    fn default() -> Self {
        Self {
            nic_specs: vec![1, 2, 3, 4],
            nic_bins: spotvol_core::stats::nic::DEFAULT_BINS,
            nic_hac_lags: spotvol_core::stats::nic::DEFAULT_NIC_LAGS,
            nic_lag_days: spotvol_core::stats::nic::DEFAULT_WEEK,
            weekly_hac_lags: 7,
            kpss_trend: false,
            kpss_draws: 100_000,
            adf_deterministic: "c".into(),
            adf_max_lags: None,
            fundamentals: None,
            forecast_errors: None,
        }
    }
}

impl StatsParams {
    pub fn deterministic(&self) -> Result<Deterministic> {
        Ok(match self.adf_deterministic.as_str() {
            "nc" => Deterministic::None,
            "c" => Deterministic::Constant,
            "ct" => Deterministic::ConstantTrend,
            other => bail!("adf_deterministic must be nc, c or ct, not `{other}`"),
        })
    }

    pub fn control_specs(&self) -> Result<Vec<ControlSpec>> {
        Ok(self.nic_specs.iter().map(|&i| ControlSpec::from_id(i)).collect::<spotvol_core::Result<_>>()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationParams {
    pub zone: String,
    pub n_modes: usize,
    pub kappa: f64,
    pub zero_mode_rate: f64,
    /// Per-wavenumber volatility `σ_0..σ_M`.
    pub sigma: Vec<f64>,
    pub days: usize,
    pub substeps: usize,
    pub bins: usize,
    pub start: chrono::NaiveDate,
    pub mean_price: f64,
    pub trend_slope: f64,
    /// Monday-first weekly drift profile.
    pub weekly: [f64; 7],
    /// Overrides the top-level seed.
    pub seed: Option<u64>,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            zone: "SIM".into(),
            n_modes: 3,
            kappa: 20.0,
            zero_mode_rate: 30.0,
            sigma: vec![40.0, 30.0, 20.0, 15.0],
            days: 1200,
            substeps: 4,
            bins: 6,
            start: chrono::NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            mean_price: 50.0,
            trend_slope: 10.0,
            weekly: [20.0, 10.0, 0.0, 0.0, -10.0, -60.0, 40.0],
            seed: None,
        }
    }
}

impl SimulationParams {
    pub fn sim_config(&self, seed: u64, delta: f64) -> Result<SimConfig> {
        let drift = if self.trend_slope == 0.0 && self.weekly.iter().all(|w| *w == 0.0) {
            DriftSpec::Zero
        } else {
            DriftSpec::TrendWeekly { slope: self.trend_slope, weekly: self.weekly }
        };
        let cfg = SimConfig {
            n_modes: self.n_modes,
            kappa: self.kappa,
            zero_mode_rate: self.zero_mode_rate,
            vol: VolSpec::Constant(self.sigma.clone()),
            drift,
            initial: InitialCondition::Stationary,
            days: self.days,
            substeps: self.substeps,
            delta,
            seed: self.seed.unwrap_or(seed),
            partition: DeliveryPartition::uniform(self.bins)?,
            start: self.start,
            mean_price: self.mean_price,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seed: 20240501,
            zones: Vec::new(),
            schema: CsvSchema::default(),
            partition: PartitionConfig::default(),
            detrend: DetrendParams::default(),
            semigroup: SemigroupParams::default(),
            rcv: RcvParams::default(),
            factors: FactorParams::default(),
            stats: StatsParams::default(),
            simulation: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        // Relative input paths are taken relative to the config file.
        if let Some(base) = path.parent() {
            for z in &mut cfg.zones {
                if z.input.is_relative() {
                    z.input = base.join(&z.input);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.zones.is_empty() && self.simulation.is_none() {
            bail!("configure at least one zone or a [simulation] section");
        }
        for z in &self.zones {
            crate::ingest::parse_timezone(&z.timezone)?;
        }
        let mut names: Vec<&str> = self.zones.iter().map(|z| z.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("zone names must be unique");
        }
        self.partition.build()?;
        if !(self.detrend.bandwidth_days > 0.0) {
            bail!("detrend.bandwidth_days must be positive");
        }
        if self.semigroup.refit_days == 0 || !(self.semigroup.ridge >= 0.0) {
            bail!("semigroup.refit_days must be positive and ridge nonnegative");
        }
        if self.rcv.window == 0 || !(self.rcv.delta > 0.0) {
            bail!("rcv.window and rcv.delta must be positive");
        }
        if self.factors.components == 0 || !(self.factors.explained_threshold > 0.0 && self.factors.explained_threshold <= 1.0) {
            bail!("factors.components must be positive and explained_threshold in (0, 1]");
        }
        self.stats.deterministic()?;
        self.stats.control_specs()?;
        if self.stats.nic_bins == 0 || self.stats.nic_lag_days == 0 || self.stats.kpss_draws < 1000 {
            bail!("stats: nic_bins and nic_lag_days must be positive and kpss_draws at least 1000");
        }
        if let Some(s) = &self.simulation {
            s.sim_config(self.seed, self.rcv.delta)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML, ignoring where outputs are written.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let canonical = toml::to_string(&c)?;
        Ok(format!("{:x}", Sha256::digest(canonical.as_bytes())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM: &str = "[simulation]\n";

    #[test]
    fn defaults_match_published_choices() {
        let c = PipelineConfig::from_toml(SIM).unwrap();
        assert_eq!(c.rcv.window, 7);
        assert_eq!(c.rcv.delta, 1.0 / 365.0);
        assert_eq!(c.semigroup.refit_days, 28);
        assert_eq!(c.semigroup.burn_in_days, 364);
        assert_eq!(c.detrend.bandwidth_days, 90.0);
        assert_eq!(c.stats.nic_bins, 20);
        assert_eq!(c.stats.nic_hac_lags, 14);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml("[simulation]\n[rcv]\nwidnow = 3\n").is_err());
        assert!(PipelineConfig::from_toml("[simulation]\nbogus = 1\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig::from_toml("").is_err());
        assert!(PipelineConfig::from_toml("[simulation]\n[rcv]\nwindow = 0\n").is_err());
        assert!(PipelineConfig::from_toml("[simulation]\n[stats]\nnic_specs = [5]\n").is_err());
        assert!(PipelineConfig::from_toml("[[zones]]\nname='A'\ninput='a.csv'\ntimezone='Nowhere/Land'\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = PipelineConfig::from_toml(SIM).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.rcv.window = 14;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn toml_round_trip() {
        let a = PipelineConfig::from_toml(SIM).unwrap();
        let back = PipelineConfig::from_toml(&toml::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, back);
    }
}
