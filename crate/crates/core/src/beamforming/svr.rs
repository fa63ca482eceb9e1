//! Steering-vector reconstruction for the fully-connected array.
//!
//! Each user's analog precoder is stitched together from per-subarray
//! far-field steering vectors, each rotated by the phase of its distance
//! offset `D^{uk} − D^{u1}`. Only the user's distance and direction as seen
//! from the first subarray are needed.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{constant_modulus_projection, AnalogStage, ConnectionMode};
use crate::channel::{upa_steering_vector, ChannelRealization};
use crate::config::SystemConfig;
use crate::geometry::{taylor_distance, ArrayGeometry, Position, SubarrayUserGeometry};
use crate::linalg::{CMat, CVec};
use crate::{Error, Result};

/// How `D^{uk}` is obtained from the first-subarray geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceModel {
    /// Second-order expansion around `D^{u1}`.
    #[default]
    Taylor,
    /// Euclidean distance to the reconstructed user position.
    Exact,
}

/// Precoder column for one user, entries of modulus `1/√N_t`.
pub fn svr_column(
    geometry: &ArrayGeometry,
    target: &SubarrayUserGeometry,
    model: DistanceModel,
) -> CVec {
    let n = geometry.subarray_side;
    let per = n * n;
    let lambda = geometry.wavelength;
    let scale = 1.0 / (geometry.num_antennas() as f64).sqrt();
    let d1 = target.distance;
    let u_y = (1.0 - target.u_x * target.u_x - target.u_z * target.u_z)
        .max(0.0)
        .sqrt();
    let mut col = CVec::zeros(geometry.num_antennas());
    for k in 0..geometry.num_subarrays() {
        let (kx, kz) = geometry.subarray_grid_index(k);
        let dx = kx as f64 * geometry.reference_pitch;
        let dz = kz as f64 * geometry.reference_pitch;
        let dk = match model {
            DistanceModel::Taylor => {
                taylor_distance(d1, kx, kz, geometry.reference_pitch, target.u_x, target.u_z)
                    .distance
            }
            DistanceModel::Exact => {
                let rel = Position::new(d1 * target.u_x - dx, d1 * u_y, d1 * target.u_z - dz);
                rel.norm()
            }
        };
        let u_x = (d1 * target.u_x - dx) / dk;
        let u_z = (d1 * target.u_z - dz) / dk;
        let a = upa_steering_vector(n, n, -u_x, -u_z, lambda, geometry.element_spacing);
        let rot = Complex64::from_polar(scale, 2.0 * PI / lambda * (dk - d1));
        for (i, x) in a.iter().enumerate() {
            col[k * per + i] = rot * x;
        }
    }
    col
}

/// `F_RF = [a^{(1)}, …, a^{(U)}]` from each user's first-subarray geometry.
pub fn svr_analog(
    geometry: &ArrayGeometry,
    targets: &[SubarrayUserGeometry],
    config: &SystemConfig,
    model: DistanceModel,
) -> Result<CMat> {
    if targets.len() > config.tx_rf_chains {
        return Err(Error::config(format!(
            "tx_rf_chains: SVR needs one RF chain per user, U = {} > L_t = {}",
            targets.len(),
            config.tx_rf_chains
        )));
    }
    if targets.len() != config.tx_rf_chains {
        return Err(Error::config(format!(
            "tx_rf_chains: SVR fills exactly one RF chain per user, U = {} but L_t = {}",
            targets.len(),
            config.tx_rf_chains
        )));
    }
    let mut f = CMat::zeros(geometry.num_antennas(), targets.len());
    for (u, t) in targets.iter().enumerate() {
        f.set_column(u, &svr_column(geometry, t, model));
    }
    Ok(f)
}

/// Matched combiners: the constant-modulus projection of the sum of the LoS
/// receive steering vectors from every subarray.
pub fn svr_combiners(realization: &ChannelRealization) -> Result<Vec<CMat>> {
    let config = &realization.config;
    if config.rx_rf_chains != 1 {
        return Err(Error::config(format!(
            "rx_rf_chains: SVR uses a single analog combiner per user, L_r = {}",
            config.rx_rf_chains
        )));
    }
    let side = config.rx_side();
    let lambda = realization.geometry.wavelength;
    let target = 1.0 / (config.num_rx_antennas as f64).sqrt();
    realization
        .paths
        .iter()
        .enumerate()
        .map(|(u, paths)| {
            let los = paths.iter().find(|p| p.is_los).ok_or_else(|| {
                Error::config(format!("user {u} has no LoS path to steer towards"))
            })?;
            let mut sum = CVec::zeros(side * side);
            for &(r_x, r_z) in &los.rx_cosines {
                sum += upa_steering_vector(side, side, -r_x, -r_z, lambda, lambda / 2.0);
            }
            Ok(constant_modulus_projection(
                &CMat::from_column_slice(sum.len(), 1, sum.as_slice()),
                target,
            ))
        })
        .collect()
}

/// First-subarray LoS geometry of every user.
pub fn los_targets(realization: &ChannelRealization) -> Result<Vec<SubarrayUserGeometry>> {
    realization
        .paths
        .iter()
        .enumerate()
        .map(|(u, paths)| {
            paths
                .iter()
                .find(|p| p.is_los)
                .map(|p| p.tx_geometry[0])
                .ok_or_else(|| Error::config(format!("user {u} has no LoS path to steer towards")))
        })
        .collect()
}

/// SVR precoder plus matched combiners.
pub fn svr_stage(realization: &ChannelRealization, model: DistanceModel) -> Result<AnalogStage> {
    let targets = los_targets(realization)?;
    let f_rf = svr_analog(&realization.geometry, &targets, &realization.config, model)?;
    Ok(AnalogStage {
        f_rf,
        w_rf: svr_combiners(realization)?,
        mode: ConnectionMode::FullyConnected,
    })
}
