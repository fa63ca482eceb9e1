//! Reference designs: an SVD-phase analog stage and the fully-digital
//! bounds.

use super::bd::{bd_digital, StreamRule};
use super::waterfill::waterfilling;
use super::{constant_modulus_projection, AnalogStage, ConnectionMode};
use crate::config::SystemConfig;
use crate::evaluation::user_se_matrices;
use crate::linalg::{row_space_basis, svd, CMat};
use crate::{Error, Result};
use num_complex::Complex64;

/// Per user, the leading `L_t / U` right and `L_r` left singular vectors of
/// `H_u`, projected onto the constant-modulus set.
pub fn svd_phase_benchmark(channels: &[CMat], config: &SystemConfig) -> Result<AnalogStage> {
    let users = channels.len();
    let l_t = config.tx_rf_chains;
    if users == 0 || !l_t.is_multiple_of(users) {
        return Err(Error::config(format!(
            "tx_rf_chains: L_t = {l_t} must be a multiple of the user count {users}"
        )));
    }
    let per_user = l_t / users;
    let n_t = config.num_tx_antennas;
    let f_mod = 1.0 / (n_t as f64).sqrt();
    let w_mod = 1.0 / (config.num_rx_antennas as f64).sqrt();
    let mut f = CMat::zeros(n_t, l_t);
    let mut w = Vec::with_capacity(users);
    for (u, h) in channels.iter().enumerate() {
        let dec = svd(h)?;
        if dec.v.ncols() < per_user || dec.u.ncols() < config.rx_rf_chains {
            return Err(Error::RankDeficient {
                user: u,
                available: dec.v.ncols(),
                required: per_user.max(config.rx_rf_chains),
            });
        }
        f.columns_mut(u * per_user, per_user)
            .copy_from(&constant_modulus_projection(
                &dec.v.columns(0, per_user).into_owned(),
                f_mod,
            ));
        w.push(constant_modulus_projection(
            &dec.u.columns(0, config.rx_rf_chains).into_owned(),
            w_mod,
        ));
    }
    Ok(AnalogStage {
        f_rf: f,
        w_rf: w,
        mode: ConnectionMode::FullyConnected,
    })
}

/// Spectral efficiency of an unconstrained (fully-digital) BD design.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalBound {
    pub per_user_se: Vec<f64>,
    pub sum_se: f64,
    /// Streams given to each user.
    pub streams: Vec<usize>,
    pub power: Vec<f64>,
}

/// Iterations of the combiner refinement in [`fully_digital_bound`].
pub const COORDINATION_ROUNDS: usize = 8;

struct DigitalDesign {
    bound: DigitalBound,
    /// Per user, the overall precoder `N_t × s_u` (power included).
    precoders: Vec<CMat>,
}

/// BD plus water-filling on `N_t`-wide channels `combined[u] = W_u^H H_u`.
fn digital_bd(combined: &[CMat], config: &SystemConfig, rule: StreamRule) -> Result<DigitalDesign> {
    if combined.is_empty() {
        return Err(Error::config("at least one user is required"));
    }
    // Only the joint row space of the channels matters; working in an
    // orthonormal basis of it keeps every SVD small.
    let rows: usize = combined.iter().map(|h| h.nrows()).sum();
    let mut stacked = CMat::zeros(rows, combined[0].ncols());
    let mut r = 0;
    for h in combined {
        stacked.rows_mut(r, h.nrows()).copy_from(h);
        r += h.nrows();
    }
    let q = row_space_basis(&stacked)?;
    let reduced: Vec<CMat> = combined.iter().map(|h| h * &q).collect();
    let bd = bd_digital(&reduced, rule)?;

    let gains: Vec<f64> = bd.gains.iter().flatten().copied().collect();
    let power = if gains.iter().any(|&g| g > 0.0) {
        waterfilling(&gains, config.total_power, config.noise_power)?
    } else {
        vec![0.0; gains.len()]
    };
    let mut precoders = Vec::with_capacity(combined.len());
    let mut offset = 0;
    for f in &bd.f_bb {
        let mut p = f.clone();
        for j in 0..p.ncols() {
            let s = Complex64::new(power[offset + j].sqrt(), 0.0);
            p.column_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        offset += p.ncols();
        precoders.push(p);
    }
    let per_user_se = reduced
        .iter()
        .enumerate()
        .map(|(u, h)| user_se_matrices(h, &precoders, &bd.w_bb[u], u, config.noise_power))
        .collect::<Result<Vec<_>>>()?;
    Ok(DigitalDesign {
        bound: DigitalBound {
            sum_se: per_user_se.iter().sum(),
            per_user_se,
            streams: bd.f_bb.iter().map(|f| f.ncols()).collect(),
            power,
        },
        precoders: precoders.iter().map(|p| &q * p).collect(),
    })
}

/// Orthonormal basis of the column space of `m`, at most `n` columns.
fn leading_left(m: &CMat, n: usize) -> Result<CMat> {
    let dec = svd(m)?;
    let n = n.min(dec.u.ncols());
    Ok(dec.u.columns(0, n).into_owned())
}

/// BD without analog constraints and `N_s` streams per user. Each user's
/// receive combiner starts at its `N_s` leading left singular vectors and is
/// then alternately matched to its own BD precoder (`W_u ∝ H_u F_u`); the
/// best of these designs is returned.
pub fn fully_digital_bound(channels: &[CMat], config: &SystemConfig) -> Result<DigitalBound> {
    fully_digital_bound_from(channels, config, &[])
}

/// [`fully_digital_bound`] with further starting combiner sets (one matrix
/// per user, orthonormalized here). The best design over all starts wins.
pub fn fully_digital_bound_from(
    channels: &[CMat],
    config: &SystemConfig,
    starts: &[Vec<CMat>],
) -> Result<DigitalBound> {
    let n_s = config.streams_per_user;
    let leading: Vec<CMat> = channels
        .iter()
        .map(|h| leading_left(h, n_s))
        .collect::<Result<_>>()?;
    let mut best: Option<DigitalBound> = None;
    let mut first_error = None;
    for start in std::iter::once(&leading).chain(starts) {
        if start.len() != channels.len() {
            return Err(Error::config(format!(
                "starting combiners given for {} users, {} channels",
                start.len(),
                channels.len()
            )));
        }
        let start = start
            .iter()
            .map(|w| leading_left(w, n_s))
            .collect::<Result<Vec<_>>>()?;
        match coordinate(channels, config, start) {
            Ok(b) => {
                if best.as_ref().is_none_or(|x| b.sum_se > x.sum_se) {
                    best = Some(b);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    match (best, first_error) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one start is always tried"),
    }
}

fn coordinate(
    channels: &[CMat],
    config: &SystemConfig,
    mut combiners: Vec<CMat>,
) -> Result<DigitalBound> {
    let n_s = config.streams_per_user;
    let mut best: Option<DigitalBound> = None;
    for _ in 0..=COORDINATION_ROUNDS {
        let combined: Vec<CMat> = channels
            .iter()
            .zip(&combiners)
            .map(|(h, w)| w.adjoint() * h)
            .collect();
        let design = match digital_bd(&combined, config, StreamRule::Fixed(n_s)) {
            Ok(d) => d,
            Err(e) if best.is_none() => return Err(e),
            Err(_) => break,
        };
        let next: Vec<CMat> = channels
            .iter()
            .zip(&design.precoders)
            .map(|(h, f)| leading_left(&(h * f), n_s))
            .collect::<Result<_>>()?;
        if best.as_ref().is_none_or(|b| design.bound.sum_se > b.sum_se) {
            best = Some(design.bound);
        }
        if next.iter().any(|w| w.ncols() < n_s) {
            break;
        }
        combiners = next;
    }
    Ok(best.expect("first round either succeeds or returns"))
}

/// The better of [`fully_digital_bound`] and BD with every receive antenna
/// kept, both with `N_s` streams per user. Either way the result is the sum
/// SE of an achievable fully-digital design.
pub fn capacity_upper_bound(channels: &[CMat], config: &SystemConfig) -> Result<DigitalBound> {
    capacity_upper_bound_from(channels, config, &[])
}

/// [`capacity_upper_bound`] with further starting combiners for the
/// fully-digital part, as in [`fully_digital_bound_from`].
pub fn capacity_upper_bound_from(
    channels: &[CMat],
    config: &SystemConfig,
    starts: &[Vec<CMat>],
) -> Result<DigitalBound> {
    let full =
        digital_bd(channels, config, StreamRule::Fixed(config.streams_per_user)).map(|d| d.bound);
    let fd = fully_digital_bound_from(channels, config, starts);
    match (full, fd) {
        (Ok(a), Ok(f)) => Ok(if a.sum_se >= f.sum_se { a } else { f }),
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(f)) => Ok(f),
        (Err(e), Err(_)) => Err(e),
    }
}
