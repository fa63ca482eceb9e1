//! Experiment specification files.
//!
//! A spec is a TOML document. Every section is optional; omitted system
//! parameters fall back to the reference setup of [`SystemConfig::table_defaults`].
//!
//! ```toml
//! kind = "power-sweep"
//! seed = 7
//! drops = 20
//! output = "power_sweep.csv"
//!
//! [system]
//! num_subarrays = 4
//! subarray_spacing = "max"   # or meters
//! power_dbm = 20
//!
//! [scenario.placement]
//! kind = "sector"
//! angle = 2.0944
//! r_min = 1.0
//! r_max = 20.0
//!
//! [sweep]
//! values = [0, 10, 20, 30]
//! subarrays = [1, 4]
//! algorithms = ["AO-SC", "SVR-FC", "FD-bound"]
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use muwsa::beamforming::{AoOptions, DistanceModel};
use muwsa::channel::{PlacementPolicy, ScenarioSpec};
use muwsa::config::{dbm_to_watts, thermal_noise_power, PathGainModel};
use muwsa::evaluation::{Algorithm, GridSpec, HarnessOptions};
use muwsa::geometry::max_subarray_spacing_for;
use muwsa::SystemConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// LoS capacity against the subarray spacing for several `K`.
    DsSweep,
    /// Exhaustive `(K, d_s)` search.
    ArchSearch,
    /// Sum SE against transmit power in dBm.
    PowerSweep,
    /// Sum SE against the number of BS antennas.
    AntennaSweep,
    /// Sum SE against the number of users.
    UserSweep,
    /// Sum SE against the user distance, users on one azimuth or spread out.
    DistanceSweep,
    /// Normalized gain of the SVR columns over an azimuth/range grid.
    Beampattern,
    /// Wall-clock of the analog and digital stages.
    BenchTiming,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DsSweep => "ds-sweep",
            ExperimentKind::ArchSearch => "arch-search",
            ExperimentKind::PowerSweep => "power-sweep",
            ExperimentKind::AntennaSweep => "antenna-sweep",
            ExperimentKind::UserSweep => "user-sweep",
            ExperimentKind::DistanceSweep => "distance-sweep",
            ExperimentKind::Beampattern => "beampattern",
            ExperimentKind::BenchTiming => "bench-timing",
        }
    }
}

/// `d_s` in meters, or `"max"` for the largest spacing within the aperture
/// limit.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SpacingSpec {
    Meters(f64),
    Keyword(String),
}

/// Overrides of the reference system parameters. Powers are in dBm here and
/// converted to watts when the [`SystemConfig`] is built.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub carrier_frequency: Option<f64>,
    pub bandwidth: Option<f64>,
    pub num_tx_antennas: Option<usize>,
    pub num_rx_antennas: Option<usize>,
    pub num_subarrays: Option<usize>,
    pub subarray_spacing: Option<SpacingSpec>,
    pub element_spacing: Option<f64>,
    pub num_users: Option<usize>,
    pub streams_per_user: Option<usize>,
    /// Defaults to `num_users * streams_per_user`.
    pub tx_rf_chains: Option<usize>,
    pub rx_rf_chains: Option<usize>,
    pub num_paths: Option<usize>,
    pub power_dbm: Option<f64>,
    /// Defaults to the thermal floor over the bandwidth.
    pub noise_power_dbm: Option<f64>,
    pub aperture_limit: Option<f64>,
    pub bs_height: Option<f64>,
    pub user_height: Option<f64>,
    pub path_gain: Option<PathGainModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    #[default]
    SameAzimuth,
    DistinctAzimuths,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Axis values: dBm, antenna counts, user counts or distances in meters.
    pub values: Vec<f64>,
    /// Architectures compared at every point; `K > 1` uses the largest
    /// feasible spacing. Defaults to the system's own `K` and spacing.
    pub subarrays: Option<Vec<usize>>,
    pub algorithms: Vec<String>,
    /// ds-sweep: spacings per `K`.
    pub points: usize,
    /// distance-sweep: user `i` sits at `D (1 + spread i)`.
    pub spread: f64,
    pub layout: Layout,
    /// distance-sweep, same-azimuth layout: the common azimuth, radians.
    pub azimuth: f64,
    /// distance-sweep, distinct layout: total azimuth span, radians.
    pub span: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            subarrays: None,
            algorithms: Algorithm::ALL
                .iter()
                .map(|a| a.name().to_string())
                .collect(),
            points: 20,
            spread: 0.3,
            layout: Layout::SameAzimuth,
            azimuth: 0.3,
            span: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub azimuths: usize,
    pub ranges: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub height: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            azimuths: 181,
            ranges: 100,
            r_min: 1.0,
            r_max: 20.0,
            height: None,
        }
    }
}

impl GridSection {
    pub fn to_grid(&self) -> GridSpec {
        let mut g = GridSpec::uniform(self.azimuths, self.ranges, self.r_min, self.r_max);
        g.height = self.height;
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SvrDistance {
    #[default]
    Taylor,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub svr_distance: SvrDistance,
    pub ao_max_iters: usize,
    pub ao_tol: f64,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        let ao = AoOptions::default();
        Self {
            svr_distance: SvrDistance::Taylor,
            ao_max_iters: ao.max_iters,
            ao_tol: ao.tol,
        }
    }
}

fn default_scenario() -> ScenarioSpec {
    ScenarioSpec::two_d(PlacementPolicy::Sector {
        angle: 2.0 * PI / 3.0,
        r_min: 1.0,
        r_max: 20.0,
    })
}

fn default_drops() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_drops")]
    pub drops: usize,
    /// CSV path; defaults to `<kind>.csv`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default = "default_scenario")]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("parse error: {e}"))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config: {}", path.display()))
    }

    pub fn output_path(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", self.kind.name())))
    }

    /// The system before the spacing keyword is resolved.
    fn base_config(&self) -> SystemConfig {
        let s = &self.system;
        let mut c = SystemConfig::table_defaults();
        if let Some(f) = s.carrier_frequency {
            c = c.with_carrier(f);
        }
        if let Some(b) = s.bandwidth {
            c.bandwidth = b;
            c.noise_power = thermal_noise_power(b);
        }
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = s.$field { c.$field = v; })*};
        }
        set!(
            num_tx_antennas,
            num_rx_antennas,
            element_spacing,
            num_users,
            streams_per_user,
            rx_rf_chains,
            num_paths,
            aperture_limit,
            bs_height,
            user_height,
            path_gain
        );
        c.tx_rf_chains = s.tx_rf_chains.unwrap_or(c.num_users * c.streams_per_user);
        if let Some(p) = s.power_dbm {
            c.total_power = dbm_to_watts(p);
        }
        if let Some(n) = s.noise_power_dbm {
            c.noise_power = dbm_to_watts(n);
        }
        c.num_subarrays = s.num_subarrays.unwrap_or(1);
        c.rng_seed = self.seed;
        c
    }

    /// `config` with `k` subarrays and the spacing rule of the spec applied.
    pub fn with_architecture(
        &self,
        config: &SystemConfig,
        k: usize,
    ) -> anyhow::Result<SystemConfig> {
        let spacing = if k == 1 {
            0.0
        } else {
            match &self.system.subarray_spacing {
                Some(SpacingSpec::Meters(m)) if Some(k) == self.system.num_subarrays => *m,
                Some(SpacingSpec::Keyword(w)) if w != "max" => {
                    return Err(anyhow!(
                        "subarray_spacing: expected meters or \"max\", got {w:?}"
                    ))
                }
                _ => max_subarray_spacing_for(config, k)
                    .map_err(|e| anyhow!("num_subarrays: K = {k}: {e}"))?,
            }
        };
        Ok(config.clone().with_subarrays(k, spacing))
    }

    /// Fully resolved system of the spec.
    pub fn system_config(&self) -> anyhow::Result<SystemConfig> {
        let c = self.base_config();
        let k = c.num_subarrays;
        self.with_architecture(&c, k)
    }

    pub fn architectures(&self) -> Vec<usize> {
        self.sweep
            .subarrays
            .clone()
            .unwrap_or_else(|| vec![self.base_config().num_subarrays])
    }

    pub fn algorithms(&self) -> anyhow::Result<Vec<Algorithm>> {
        self.sweep
            .algorithms
            .iter()
            .map(|a| {
                Algorithm::parse(a).ok_or_else(|| {
                    anyhow!(
                        "sweep.algorithms: unknown algorithm {a:?} (expected one of {})",
                        Algorithm::ALL.map(|x| x.name()).join(", ")
                    )
                })
            })
            .collect()
    }

    pub fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            ao: AoOptions {
                max_iters: self.algorithm.ao_max_iters,
                tol: self.algorithm.ao_tol,
            },
            svr_distance: match self.algorithm.svr_distance {
                SvrDistance::Taylor => DistanceModel::Taylor,
                SvrDistance::Exact => DistanceModel::Exact,
            },
        }
    }

    /// Scenario of a distance-sweep point.
    pub fn distance_scenario(&self, distance: f64, users: usize) -> ScenarioSpec {
        let ranges: Vec<f64> = (0..users)
            .map(|i| distance * (1.0 + self.sweep.spread * i as f64))
            .collect();
        let placement = match self.sweep.layout {
            Layout::SameAzimuth => PlacementPolicy::SameAzimuthLine {
                azimuth: self.sweep.azimuth,
                ranges,
            },
            Layout::DistinctAzimuths => PlacementPolicy::DistinctAzimuths {
                span: self.sweep.span,
                ranges: vec![distance; users],
            },
        };
        ScenarioSpec {
            placement,
            three_d: self.scenario.three_d,
        }
    }

    /// System and scenario at one point of a sweep.
    pub fn point(&self, value: f64, k: usize) -> anyhow::Result<(SystemConfig, ScenarioSpec)> {
        let mut c = self.base_config();
        let mut scenario = self.scenario.clone();
        match self.kind {
            ExperimentKind::PowerSweep => c.total_power = dbm_to_watts(value),
            ExperimentKind::AntennaSweep => c.num_tx_antennas = value as usize,
            ExperimentKind::UserSweep => {
                c = c.with_users(value as usize);
                if let Some(l) = self.system.tx_rf_chains {
                    c.tx_rf_chains = l;
                }
            }
            ExperimentKind::DistanceSweep => scenario = self.distance_scenario(value, c.num_users),
            _ => {}
        }
        Ok((self.with_architecture(&c, k)?, scenario))
    }

    /// Every violated invariant; empty means the spec is runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.drops == 0 {
            out.push("drops must be at least 1".to_string());
        }
        if let Some(SpacingSpec::Keyword(w)) = &self.system.subarray_spacing {
            if w != "max" {
                out.push(format!(
                    "subarray_spacing: expected meters or \"max\", got {w:?}"
                ));
            }
        }
        if let Some(SpacingSpec::Meters(m)) = &self.system.subarray_spacing {
            if !(*m >= 0.0) {
                out.push("subarray_spacing must be non-negative".to_string());
            }
        }
        if let Err(e) = self.algorithms() {
            out.push(e.to_string());
        }
        let base = self.base_config();
        let mut dedup = BTreeMap::new();
        let mut record = |msg: String| {
            dedup.entry(msg).or_insert(());
        };
        let base_findings = base.findings();
        let base_ok = base_findings.is_empty();
        for f in base_findings {
            record(f);
        }

        let needs_values = matches!(
            self.kind,
            ExperimentKind::PowerSweep
                | ExperimentKind::AntennaSweep
                | ExperimentKind::UserSweep
                | ExperimentKind::DistanceSweep
        );
        if needs_values && self.sweep.values.is_empty() {
            record(format!(
                "sweep.values: {} needs at least one value",
                self.kind.name()
            ));
        }
        for &v in &self.sweep.values {
            let bad = match self.kind {
                ExperimentKind::PowerSweep => (!v.is_finite()).then_some("must be finite dBm"),
                ExperimentKind::AntennaSweep | ExperimentKind::UserSweep => {
                    (!(v >= 1.0 && v.fract() == 0.0)).then_some("must be positive integers")
                }
                ExperimentKind::DistanceSweep => {
                    (!(v > 0.0)).then_some("must be positive distances")
                }
                _ => None,
            };
            if let Some(why) = bad {
                record(format!("sweep.values: {v} {why}"));
            }
        }
        if self.kind == ExperimentKind::DsSweep && self.sweep.points == 0 {
            record("sweep.points must be at least 1".to_string());
        }
        if self.kind == ExperimentKind::Beampattern {
            let g = &self.grid;
            if g.azimuths == 0 || g.ranges == 0 || !(g.r_min > 0.0 && g.r_max >= g.r_min) {
                record("grid: needs azimuths, ranges >= 1 and 0 < r_min <= r_max".to_string());
            }
        }
        if !(self.algorithm.ao_tol > 0.0) || self.algorithm.ao_max_iters == 0 {
            record("algorithm: ao_max_iters must be >= 1 and ao_tol positive".to_string());
        }

        let values: Vec<Option<f64>> = if needs_values && !self.sweep.values.is_empty() {
            self.sweep.values.iter().map(|&v| Some(v)).collect()
        } else {
            vec![None]
        };
        for k in self.architectures() {
            for v in &values {
                let point = match *v {
                    Some(x)
                        if !(x.is_finite()
                            && (x > 0.0 || self.kind == ExperimentKind::PowerSweep)) =>
                    {
                        continue
                    }
                    Some(x) => self.point(x, k),
                    None => self.point(0.0, k),
                };
                match point {
                    Ok((c, scenario)) => {
                        for f in c.findings() {
                            let axis = v
                                .map(|v| format!(" at {} = {v}", self.axis_name()))
                                .unwrap_or_default();
                            record(format!("{f}{axis}"));
                        }
                        if c.findings().is_empty() {
                            if let Err(e) = scenario.validate(&c) {
                                record(format!("scenario: {e}"));
                            }
                        }
                    }
                    // an invalid base config already explains the failure
                    Err(e) if base_ok => record(e.to_string()),
                    Err(_) => {}
                }
            }
        }
        out.extend(dedup.into_keys());
        out
    }

    /// CSV name of the sweep axis.
    pub fn axis_name(&self) -> &'static str {
        match self.kind {
            ExperimentKind::PowerSweep => "power_dBm",
            ExperimentKind::AntennaSweep => "n_t",
            ExperimentKind::UserSweep => "users",
            ExperimentKind::DistanceSweep => "distance_m",
            _ => "value",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_uses_reference_system() {
        let s = ExperimentSpec::parse("kind = \"bench-timing\"").unwrap();
        let c = s.system_config().unwrap();
        assert_eq!(c, SystemConfig::table_defaults());
        assert!(s.validate().is_empty(), "{:?}", s.validate());
    }

    #[test]
    fn max_spacing_keyword() {
        let s = ExperimentSpec::parse(
            "kind = \"power-sweep\"\n[system]\nnum_subarrays = 4\nsubarray_spacing = \"max\"\n[sweep]\nvalues = [20]",
        )
        .unwrap();
        let c = s.system_config().unwrap();
        let expect = max_subarray_spacing_for(&c, 4).unwrap();
        assert_eq!(c.subarray_spacing, expect);
        let (p, _) = s.point(10.0, 4).unwrap();
        assert!((p.total_power - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let e =
            ExperimentSpec::parse("kind = \"ds-sweep\"\n[system]\nnum_antennas = 4").unwrap_err();
        assert!(e.to_string().contains("num_antennas"), "{e}");
    }
}
