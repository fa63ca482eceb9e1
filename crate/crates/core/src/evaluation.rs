//! Spectral efficiency, beam patterns and the Monte-Carlo harness.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beamforming::ao::{ao_analog_subconnected, AoOptions};
use crate::beamforming::benchmark::{
    capacity_upper_bound_from, fully_digital_bound_from, svd_phase_benchmark,
};
use crate::beamforming::svr::{svr_combiners, svr_stage, DistanceModel};
use crate::beamforming::{complete_digital, BeamformerSet};
use crate::channel::{realize, ChannelRealization, ScenarioSpec};
use crate::config::SystemConfig;
use crate::geometry::{ArrayGeometry, Position};
use crate::linalg::{log2_det_hpd, pinv_hermitian, CMat, CVec};
use crate::{Error, Result};

/// `log2 det(I + R_u⁻¹ S_u)` for user `u`, where `S_u` is the combined
/// desired-signal covariance and `R_u` collects the interference from every
/// other user's precoder plus the combined noise `σ² W_u^H W_u`.
///
/// `precoders[i]` is user `i`'s full precoder, power included.
pub fn user_se_matrices(
    h_u: &CMat,
    precoders: &[CMat],
    combiner: &CMat,
    u: usize,
    noise_power: f64,
) -> Result<f64> {
    if combiner.ncols() == 0 {
        return Ok(0.0);
    }
    let y = combiner.adjoint() * h_u;
    let mut r = combiner.adjoint() * combiner * Complex64::new(noise_power, 0.0);
    let mut s = CMat::zeros(r.nrows(), r.ncols());
    for (i, f) in precoders.iter().enumerate() {
        let g = &y * f;
        if i == u {
            s += &g * g.adjoint();
        } else {
            r += &g * g.adjoint();
        }
    }
    let total = &r + &s;
    match (log2_det_hpd(&total), log2_det_hpd(&r)) {
        (Ok(a), Ok(b)) => Ok((a - b).max(0.0)),
        _ => {
            log::warn!("interference-plus-noise covariance of user {u} is singular; using a pseudo-inverse");
            let m = pinv_hermitian(&r)? * &s;
            let mut id = CMat::identity(m.nrows(), m.ncols());
            id += m;
            // det of I + R⁺S through the eigenvalues of the Hermitian
            // congruent form keeps this real
            let det = id.determinant();
            Ok(det.norm().log2().max(0.0))
        }
    }
}

fn precoders_of(set: &BeamformerSet) -> Vec<CMat> {
    (0..set.num_users()).map(|u| set.user_precoder(u)).collect()
}

/// Spectral efficiency of user `u` under a hybrid design.
pub fn user_se(h_u: &CMat, set: &BeamformerSet, u: usize, noise_power: f64) -> Result<f64> {
    user_se_matrices(
        h_u,
        &precoders_of(set),
        &set.user_combiner(u),
        u,
        noise_power,
    )
}

/// Per-user spectral efficiency for all users.
pub fn all_user_se(channels: &[CMat], set: &BeamformerSet, noise_power: f64) -> Result<Vec<f64>> {
    let precoders = precoders_of(set);
    channels
        .iter()
        .enumerate()
        .map(|(u, h)| user_se_matrices(h, &precoders, &set.user_combiner(u), u, noise_power))
        .collect()
}

/// `Σ log2(1 + p_i g_i² / σ²)` over the streams of a design.
pub fn interference_free_se(set: &BeamformerSet, noise_power: f64) -> f64 {
    set.power
        .iter()
        .zip(&set.stream_gains)
        .map(|(p, g)| (1.0 + p * g * g / noise_power).log2())
        .sum()
}

/// `‖W_u^H H_u F_i‖_F / (‖W_u^H H_u‖_F ‖F_i‖_F)` for every ordered pair; the
/// diagonal holds the same ratio for the desired signal.
pub fn residual_interference(channels: &[CMat], set: &BeamformerSet) -> Vec<Vec<f64>> {
    let precoders = precoders_of(set);
    channels
        .iter()
        .enumerate()
        .map(|(u, h)| {
            let y = set.user_combiner(u).adjoint() * h;
            let ny = y.norm();
            precoders
                .iter()
                .map(|f| {
                    let d = ny * f.norm();
                    if d > 0.0 {
                        (&y * f).norm() / d
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Sample points of a beam-pattern grid: azimuths from broadside and
/// horizontal ranges, measured from the first subarray's reference antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub azimuths: Vec<f64>,
    pub ranges: Vec<f64>,
    /// Height of the grid plane; `None` uses the reference antenna's height.
    pub height: Option<f64>,
}

impl GridSpec {
    /// `n_az` azimuths over `[−π/2, π/2]` and `n_r` log-spaced ranges over
    /// `[r_min, r_max]`.
    pub fn uniform(n_az: usize, n_r: usize, r_min: f64, r_max: f64) -> Self {
        let lin = |n: usize, a: f64, b: f64| -> Vec<f64> {
            if n == 1 {
                return vec![a];
            }
            (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect()
        };
        Self {
            azimuths: lin(n_az, -PI / 2.0, PI / 2.0),
            ranges: lin(n_r, r_min.ln(), r_max.ln())
                .into_iter()
                .map(f64::exp)
                .collect(),
            height: None,
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::uniform(181, 100, 1.0, 20.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamPatternGrid {
    pub azimuths: Vec<f64>,
    pub ranges: Vec<f64>,
    /// `gain[a][r]`, normalized to a maximum of one (all zero for a zero
    /// column).
    pub gain: Vec<Vec<f64>>,
    pub column: CVec,
}

impl BeamPatternGrid {
    /// `(azimuth index, range index)` of the largest gain.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut value = f64::NEG_INFINITY;
        for (a, row) in self.gain.iter().enumerate() {
            for (r, &g) in row.iter().enumerate() {
                if g > value {
                    value = g;
                    best = (a, r);
                }
            }
        }
        best
    }

    /// `az_rad, range_m, gain_norm` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("az_rad, range_m, gain_norm\n");
        for (a, row) in self.gain.iter().enumerate() {
            for (r, g) in row.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:.9e}, {:.9e}, {:.9e}",
                    self.azimuths[a], self.ranges[r], g
                );
            }
        }
        out
    }
}

/// Grid point for azimuth `az` and horizontal range `r`.
pub fn grid_point(geometry: &ArrayGeometry, az: f64, r: f64, height: Option<f64>) -> Position {
    let o = geometry.subarray_reference_positions[0];
    Position::new(o.x + r * az.sin(), r * az.cos(), height.unwrap_or(o.z))
}

/// `|h(p)^T f|²` with the exact spherical response `h_n = e^{−j 2π |p − p_n| / λ}`.
pub fn point_gain(geometry: &ArrayGeometry, column: &CVec, p: &Position) -> f64 {
    let k = 2.0 * PI / geometry.wavelength;
    geometry
        .antenna_positions
        .iter()
        .zip(column.iter())
        .map(|(a, f)| Complex64::from_polar(1.0, -k * (p - a).norm()) * f)
        .sum::<Complex64>()
        .norm_sqr()
}

pub fn beam_pattern(
    geometry: &ArrayGeometry,
    column: &CVec,
    grid: &GridSpec,
) -> Result<BeamPatternGrid> {
    if grid.azimuths.is_empty() || grid.ranges.is_empty() {
        return Err(Error::config(
            "beam-pattern grid must have at least one azimuth and one range",
        ));
    }
    if column.len() != geometry.num_antennas() {
        return Err(Error::config(format!(
            "precoder column has {} entries, array has {} antennas",
            column.len(),
            geometry.num_antennas()
        )));
    }
    let mut gain: Vec<Vec<f64>> = grid
        .azimuths
        .par_iter()
        .map(|&az| {
            grid.ranges
                .iter()
                .map(|&r| point_gain(geometry, column, &grid_point(geometry, az, r, grid.height)))
                .collect()
        })
        .collect();
    let max = gain.iter().flatten().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        gain.iter_mut().flatten().for_each(|g| *g /= max);
    }
    Ok(BeamPatternGrid {
        azimuths: grid.azimuths.clone(),
        ranges: grid.ranges.clone(),
        gain,
        column: column.clone(),
    })
}

/// Design evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Alternating optimization, sub-connected.
    AoSc,
    /// Steering-vector reconstruction, fully connected.
    SvrFc,
    /// Per-user SVD phases, fully connected.
    SvdPhaseFc,
    /// Fully-digital BD with matched receive combining, `N_s` streams per user;
    /// the combiner search also starts from the LoS-matched combiners.
    FdBound,
    /// The better of the FD bound and full-receive BD, `N_s` streams per user.
    CapacityUb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::AoSc,
        Algorithm::SvrFc,
        Algorithm::SvdPhaseFc,
        Algorithm::FdBound,
        Algorithm::CapacityUb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AoSc => "AO-SC",
            Algorithm::SvrFc => "SVR-FC",
            Algorithm::SvdPhaseFc => "SVD-phase-FC",
            Algorithm::FdBound => "FD-bound",
            Algorithm::CapacityUb => "capacity-UB",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
    }
}

/// Knobs of the harness beyond the system configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HarnessOptions {
    pub ao: AoOptions,
    pub svr_distance: DistanceModel,
}

/// Wall-clock of the two design stages, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub analog: f64,
    pub digital: f64,
}

/// Outcome of one algorithm on one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub drop_index: u64,
    pub per_user_se: Vec<f64>,
    pub sum_se: f64,
    /// Largest off-diagonal entry of [`residual_interference`]; zero for the
    /// digital bounds, whose nulling is exact by construction.
    pub max_residual_interference: f64,
    pub timings: StageTimings,
}

fn ao_rng(realization: &ChannelRealization) -> ChaCha8Rng {
    // a stream disjoint from the one that drew the scenario
    let mut rng = ChaCha8Rng::seed_from_u64(realization.rng_seed);
    rng.set_stream(realization.drop_index | 1 << 63);
    rng
}

/// Runs `algorithm` on one realization.
pub fn evaluate(
    realization: &ChannelRealization,
    algorithm: Algorithm,
    options: &HarnessOptions,
) -> Result<EvaluationReport> {
    let config = &realization.config;
    let channels = &realization.channels;
    let sigma2 = config.noise_power;
    let report = |per_user_se: Vec<f64>, residual: f64, timings: StageTimings| EvaluationReport {
        algorithm,
        seed: realization.rng_seed,
        drop_index: realization.drop_index,
        sum_se: per_user_se.iter().sum(),
        per_user_se,
        max_residual_interference: residual,
        timings,
    };
    match algorithm {
        Algorithm::FdBound | Algorithm::CapacityUb => {
            let t = Instant::now();
            // LoS-matched combiners as a second start, when every user has a
            // LoS path and a single receive chain
            let starts: Vec<Vec<CMat>> = svr_combiners(realization).into_iter().collect();
            let bound = if algorithm == Algorithm::FdBound {
                fully_digital_bound_from(channels, config, &starts)?
            } else {
                capacity_upper_bound_from(channels, config, &starts)?
            };
            let timings = StageTimings {
                analog: 0.0,
                digital: t.elapsed().as_secs_f64(),
            };
            Ok(report(bound.per_user_se, 0.0, timings))
        }
        _ => {
            let t = Instant::now();
            let stage = match algorithm {
                Algorithm::AoSc => {
                    ao_analog_subconnected(channels, config, options.ao, &mut ao_rng(realization))?
                        .stage
                }
                Algorithm::SvrFc => svr_stage(realization, options.svr_distance)?,
                _ => svd_phase_benchmark(channels, config)?,
            };
            let analog = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let set = complete_digital(channels, stage, config)?;
            let digital = t.elapsed().as_secs_f64();
            let se = all_user_se(channels, &set, sigma2)?;
            let residual = residual_interference(channels, &set);
            let worst = residual
                .iter()
                .enumerate()
                .flat_map(|(u, row)| {
                    row.iter()
                        .enumerate()
                        .filter(move |(i, _)| *i != u)
                        .map(|(_, &x)| x)
                })
                .fold(0.0, f64::max);
            Ok(report(se, worst, StageTimings { analog, digital }))
        }
    }
}

/// Mean and sample standard deviation accumulator (Welford).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

/// Aggregate over drops; drops are listed in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub algorithm: Algorithm,
    pub drops: Vec<EvaluationReport>,
    /// `(drop index, error message)` for drops that failed.
    pub failures: Vec<(u64, String)>,
    pub sum_se: Moments,
    pub analog_time: Moments,
    pub digital_time: Moments,
}

/// Evaluates `algorithm` on drops `0..n_drops` of master seed `seed`. Drops
/// run in parallel; the report does not depend on scheduling.
pub fn run_experiment(
    config: &SystemConfig,
    scenario: &ScenarioSpec,
    algorithm: Algorithm,
    n_drops: usize,
    seed: u64,
    options: &HarnessOptions,
) -> Result<ExperimentReport> {
    let reports = run_algorithms(config, scenario, &[algorithm], n_drops, seed, options)?;
    Ok(reports.into_iter().next().expect("one algorithm requested"))
}

/// Like [`run_experiment`] for several algorithms sharing the same drops.
pub fn run_algorithms(
    config: &SystemConfig,
    scenario: &ScenarioSpec,
    algorithms: &[Algorithm],
    n_drops: usize,
    seed: u64,
    options: &HarnessOptions,
) -> Result<Vec<ExperimentReport>> {
    if n_drops == 0 {
        return Err(Error::config("n_drops must be at least 1"));
    }
    config.validate()?;
    scenario.validate(config)?;
    let per_drop: Vec<Vec<Result<EvaluationReport>>> = (0..n_drops as u64)
        .into_par_iter()
        .map(|d| match realize(config, scenario, seed, d) {
            Ok(r) => algorithms
                .iter()
                .map(|&a| evaluate(&r, a, options))
                .collect(),
            Err(e) => algorithms.iter().map(|_| Err(e.clone())).collect(),
        })
        .collect();
    Ok(algorithms
        .iter()
        .enumerate()
        .map(|(i, &algorithm)| {
            let mut report = ExperimentReport {
                algorithm,
                drops: Vec::new(),
                failures: Vec::new(),
                sum_se: Moments::default(),
                analog_time: Moments::default(),
                digital_time: Moments::default(),
            };
            for (d, results) in per_drop.iter().enumerate() {
                match &results[i] {
                    Ok(r) => {
                        report.sum_se.push(r.sum_se);
                        report.analog_time.push(r.timings.analog);
                        report.digital_time.push(r.timings.digital);
                        report.drops.push(r.clone());
                    }
                    Err(e) => report.failures.push((d as u64, e.to_string())),
                }
            }
            report
        })
        .collect())
}
