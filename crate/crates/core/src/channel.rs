//! Cross near-and-far-field channel synthesis.
//!
//! Every subarray sees each path as a plane wave, with its own distance and
//! direction. Stacking the per-subarray blocks side by side keeps the
//! spherical curvature across subarrays.

use std::f64::consts::{FRAC_PI_3, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{PathGainModel, SystemConfig};
use crate::geometry::{
    build_wsa_geometry, subarray_user_geometry, ArrayGeometry, Position, SubarrayUserGeometry,
};
use crate::linalg::{CMat, CVec};
use crate::{Error, Result};

/// Unit-modulus UPA response with entry `(m, n)` at index `m + n n_x`,
/// `exp(j 2π/λ d_a (m u_x + n u_z))`.
pub fn upa_steering_vector(
    n_x: usize,
    n_z: usize,
    u_x: f64,
    u_z: f64,
    wavelength: f64,
    d_a: f64,
) -> CVec {
    let kd = 2.0 * PI / wavelength * d_a;
    CVec::from_fn(n_x * n_z, |i, _| {
        let (m, n) = ((i % n_x) as f64, (i / n_x) as f64);
        Complex64::from_polar(1.0, kd * (m * u_x + n * u_z))
    })
}

/// One propagation path of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    /// `|α_p|`.
    pub gain: f64,
    pub is_los: bool,
    pub scatterer: Option<Position>,
    /// Last hop from every subarray reference antenna: to the user for the
    /// LoS path, to the scatterer otherwise.
    pub tx_geometry: Vec<SubarrayUserGeometry>,
    /// Scatterer-to-user length, zero for the LoS path.
    pub extra_length: f64,
    /// Direction cosines `(u_x, u_z)` of the wave from every subarray as it
    /// crosses the user array. For the LoS path these follow the subarray
    /// directions; a scattered path arrives from one direction for all `k`.
    pub rx_cosines: Vec<(f64, f64)>,
}

impl PathComponent {
    /// Total propagation distance `D_p^{uk}` from subarray `k`.
    pub fn path_length(&self, k: usize) -> f64 {
        self.tx_geometry[k].distance + self.extra_length
    }

    /// Receive azimuth and elevation of the wave from subarray `k`, same
    /// convention as the transmit side.
    pub fn rx_angles(&self, k: usize) -> (f64, f64) {
        let (u_x, u_z) = self.rx_cosines[k];
        let u_y = (1.0 - u_x * u_x - u_z * u_z).max(0.0).sqrt();
        (u_x.atan2(u_y), u_z.clamp(-1.0, 1.0).asin())
    }
}

/// Per-subarray plane-wave block
/// `|α| e^{−j 2π D/λ} a_r a_t^H`, shape `N_r × N_t/K`.
pub fn subarray_channel(
    path: &PathComponent,
    k: usize,
    geometry: &ArrayGeometry,
    config: &SystemConfig,
) -> CMat {
    let lambda = geometry.wavelength;
    let n = geometry.subarray_side;
    let g = &path.tx_geometry[k];
    let a_t = upa_steering_vector(n, n, -g.u_x, -g.u_z, lambda, geometry.element_spacing);
    let side = config.rx_side();
    let (r_x, r_z) = path.rx_cosines[k];
    let a_r = upa_steering_vector(side, side, -r_x, -r_z, lambda, lambda / 2.0);
    let phase = Complex64::from_polar(path.gain, -2.0 * PI / lambda * path.path_length(k));
    CMat::from_fn(a_r.len(), a_t.len(), |i, j| phase * a_r[i] * a_t[j].conj())
}

/// `H_u = Σ_p [H_p^{u1} | … | H_p^{uK}]`.
pub fn assemble_cnff_channel(
    paths: &[PathComponent],
    geometry: &ArrayGeometry,
    config: &SystemConfig,
) -> Result<CMat> {
    let k_count = geometry.num_subarrays();
    let width = geometry.antennas_per_subarray();
    let mut h = CMat::zeros(config.num_rx_antennas, geometry.num_antennas());
    for (p, path) in paths.iter().enumerate() {
        if path.tx_geometry.len() != k_count || path.rx_cosines.len() != k_count {
            return Err(Error::Assembly(format!(
                "path {p} carries {} subarray entries, geometry has {k_count}",
                path.tx_geometry.len()
            )));
        }
        for k in 0..k_count {
            let block = subarray_channel(path, k, geometry, config);
            if block.ncols() != width || block.nrows() != h.nrows() {
                return Err(Error::Assembly(format!(
                    "block {k} of path {p} is {}×{}, expected {}×{width}",
                    block.nrows(),
                    block.ncols(),
                    h.nrows()
                )));
            }
            let mut view = h.view_mut((0, k * width), (h.nrows(), width));
            view += &block;
        }
    }
    Ok(h)
}

/// User layout rule for a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlacementPolicy {
    /// All users along one azimuth (radians, from broadside) at the given
    /// horizontal ranges.
    SameAzimuthLine {
        azimuth: f64,
        ranges: Vec<f64>,
    },
    /// User `i` at range `ranges[i]`, azimuths evenly spread over
    /// `[−span/2, span/2]`.
    DistinctAzimuths {
        span: f64,
        ranges: Vec<f64>,
    },
    /// Uniform over the area of an annular sector of the given opening angle.
    Sector {
        angle: f64,
        r_min: f64,
        r_max: f64,
    },
    Explicit {
        positions: Vec<[f64; 3]>,
    },
}

/// Placement plus the 2-D / 3-D height rule. In 2-D users share the BS
/// height; in 3-D they sit at `user_height`. Explicit positions are used
/// verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub placement: PlacementPolicy,
    #[serde(default)]
    pub three_d: bool,
}

impl ScenarioSpec {
    pub fn two_d(placement: PlacementPolicy) -> Self {
        Self {
            placement,
            three_d: false,
        }
    }

    pub fn three_d(placement: PlacementPolicy) -> Self {
        Self {
            placement,
            three_d: true,
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        let u = config.num_users;
        let count_ok = |n: usize, what: &str| {
            if n == u {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "placement lists {n} {what}, num_users is {u}"
                )))
            }
        };
        match &self.placement {
            PlacementPolicy::SameAzimuthLine { ranges, .. }
            | PlacementPolicy::DistinctAzimuths { ranges, .. } => {
                count_ok(ranges.len(), "ranges")?;
                if ranges.iter().any(|r| !(*r > 0.0)) {
                    return Err(Error::config("placement ranges must be positive"));
                }
            }
            PlacementPolicy::Sector {
                angle,
                r_min,
                r_max,
            } => {
                if !(*r_min > 0.0) || !(*r_max > 0.0) || r_min > r_max {
                    return Err(Error::config(format!(
                        "sector radii must satisfy 0 < r_min <= r_max, got {r_min}, {r_max}"
                    )));
                }
                if !(*angle > 0.0 && *angle <= 2.0 * PI) {
                    return Err(Error::config("sector angle must lie in (0, 2π]"));
                }
            }
            PlacementPolicy::Explicit { positions } => count_ok(positions.len(), "positions")?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserPlacement {
    pub positions: Vec<Position>,
    pub three_d: Vec<bool>,
}

/// Everything a Monte-Carlo drop needs: user channels plus the metadata that
/// produced them.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub channels: Vec<CMat>,
    pub paths: Vec<Vec<PathComponent>>,
    pub placement: UserPlacement,
    pub config: SystemConfig,
    pub geometry: ArrayGeometry,
    pub rng_seed: u64,
    pub drop_index: u64,
}

impl ChannelRealization {
    pub fn num_users(&self) -> usize {
        self.channels.len()
    }
}

/// Generator for drop `drop` of a run with master seed `seed`.
pub fn drop_rng(seed: u64, drop: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(drop);
    rng
}

fn user_positions(
    config: &SystemConfig,
    spec: &ScenarioSpec,
    origin: &Position,
    rng: &mut impl Rng,
) -> Vec<Position> {
    let height = if spec.three_d {
        config.user_height
    } else {
        config.bs_height
    };
    let at = |az: f64, r: f64| Position::new(origin.x + r * az.sin(), r * az.cos(), height);
    match &spec.placement {
        PlacementPolicy::SameAzimuthLine { azimuth, ranges } => {
            ranges.iter().map(|&r| at(*azimuth, r)).collect()
        }
        PlacementPolicy::DistinctAzimuths { span, ranges } => {
            let n = ranges.len();
            ranges
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let az = if n == 1 {
                        0.0
                    } else {
                        -span / 2.0 + span * i as f64 / (n - 1) as f64
                    };
                    at(az, r)
                })
                .collect()
        }
        PlacementPolicy::Sector {
            angle,
            r_min,
            r_max,
        } => (0..config.num_users)
            .map(|_| {
                let az = rng.gen_range(-0.5..0.5) * angle;
                let t: f64 = rng.gen();
                let r = (r_min * r_min + t * (r_max * r_max - r_min * r_min)).sqrt();
                at(az, r)
            })
            .collect(),
        PlacementPolicy::Explicit { positions } => positions
            .iter()
            .map(|p| Position::new(p[0], p[1], p[2]))
            .collect(),
    }
}

fn free_space(lambda: f64, length: f64) -> f64 {
    lambda / (4.0 * PI * length)
}

/// LoS path with exact per-subarray geometry.
pub fn los_path(
    geometry: &ArrayGeometry,
    user: &Position,
    config: &SystemConfig,
) -> Result<PathComponent> {
    let tx_geometry = subarray_user_geometry(geometry, user)?;
    let gain = match config.path_gain {
        PathGainModel::FreeSpace => {
            free_space(geometry.wavelength, (user - geometry.centroid()).norm())
        }
        PathGainModel::Normalized => 1.0,
    };
    let rx_cosines = tx_geometry.iter().map(|g| (g.u_x, g.u_z)).collect();
    Ok(PathComponent {
        gain,
        is_los: true,
        scatterer: None,
        tx_geometry,
        extra_length: 0.0,
        rx_cosines,
    })
}

/// Single-bounce path via a random scatterer. The reflection loss is uniform
/// in [10, 15] dB; the arrival direction is uniform over the front
/// hemisphere of the user array.
pub fn nlos_path(
    geometry: &ArrayGeometry,
    user: &Position,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<PathComponent> {
    let origin = geometry.subarray_reference_positions[0];
    let horizontal = ((user.x - origin.x).powi(2) + user.y.powi(2)).sqrt();
    let r = horizontal * rng.gen_range(0.5..1.5);
    let az = rng.gen_range(-FRAC_PI_3..FRAC_PI_3);
    let (lo, hi) = if user.z <= config.bs_height {
        (user.z, config.bs_height)
    } else {
        (config.bs_height, user.z)
    };
    let z = lo + (hi - lo) * rng.gen::<f64>();
    let scatterer = Position::new(origin.x + r * az.sin(), r * az.cos(), z);
    let tx_geometry = subarray_user_geometry(geometry, &scatterer)?;
    let extra_length = (user - scatterer).norm();
    if !(extra_length > 0.0) {
        return Err(Error::DegenerateGeometry(
            "scatterer coincides with a user".into(),
        ));
    }
    let loss_db: f64 = rng.gen_range(10.0..15.0);
    let loss = 10f64.powf(-loss_db / 20.0);
    let gain = match config.path_gain {
        PathGainModel::FreeSpace => {
            let length = (scatterer - geometry.centroid()).norm() + extra_length;
            free_space(geometry.wavelength, length) * loss
        }
        PathGainModel::Normalized => loss,
    };
    // uniform on the hemisphere around the array normal
    let cos_normal: f64 = rng.gen();
    let spin = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - cos_normal * cos_normal).sqrt();
    let rx_cosines = vec![(s * spin.cos(), s * spin.sin()); tx_geometry.len()];
    Ok(PathComponent {
        gain,
        is_los: false,
        scatterer: Some(scatterer),
        tx_geometry,
        extra_length,
        rx_cosines,
    })
}

/// Places users and draws their paths: one LoS path plus `N_p − 1` NLoS
/// paths each.
pub fn generate_scenario(
    config: &SystemConfig,
    geometry: &ArrayGeometry,
    spec: &ScenarioSpec,
    rng: &mut impl Rng,
) -> Result<(UserPlacement, Vec<Vec<PathComponent>>)> {
    spec.validate(config)?;
    let origin = geometry.subarray_reference_positions[0];
    let positions = user_positions(config, spec, &origin, rng);
    for p in &positions {
        if geometry
            .antenna_positions
            .iter()
            .any(|a| (a - p).norm() == 0.0)
        {
            return Err(Error::DegenerateGeometry(format!(
                "user at ({}, {}, {}) coincides with an antenna",
                p.x, p.y, p.z
            )));
        }
    }
    let mut paths = Vec::with_capacity(positions.len());
    for p in &positions {
        let mut user_paths = Vec::with_capacity(config.num_paths);
        user_paths.push(los_path(geometry, p, config)?);
        for _ in 1..config.num_paths {
            user_paths.push(nlos_path(geometry, p, config, rng)?);
        }
        paths.push(user_paths);
    }
    let three_d = vec![spec.three_d; positions.len()];
    Ok((UserPlacement { positions, three_d }, paths))
}

/// Builds geometry, scenario and channels for drop `drop` of master seed
/// `seed`.
pub fn realize(
    config: &SystemConfig,
    spec: &ScenarioSpec,
    seed: u64,
    drop: u64,
) -> Result<ChannelRealization> {
    config.validate()?;
    let geometry = build_wsa_geometry(config)?;
    let mut rng = drop_rng(seed, drop);
    let (placement, paths) = generate_scenario(config, &geometry, spec, &mut rng)?;
    let channels = paths
        .iter()
        .map(|p| assemble_cnff_channel(p, &geometry, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelRealization {
        channels,
        paths,
        placement,
        config: config.clone(),
        geometry,
        rng_seed: seed,
        drop_index: drop,
    })
}
