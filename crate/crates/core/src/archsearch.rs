//! LoS capacity and the search over subarray count and spacing.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::beamforming::waterfilling;
use crate::channel::{assemble_cnff_channel, los_path, upa_steering_vector};
use crate::config::{perfect_square_root, SystemConfig};
use crate::geometry::{
    build_wsa_geometry, max_subarray_spacing_for, subarray_user_geometry, ArrayGeometry, Position,
};
use crate::linalg::{numerical_rank, singular_values, CMat};
use crate::{Error, Result};

/// How many eigenmodes share the power in [`los_capacity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// The numerical rank `r`, each mode getting `P_t / r`.
    Numerical,
    /// The `K` strongest modes, each getting `P_t / K`.
    Fixed(usize),
    /// Water-filling over the modes of the numerical rank.
    WaterFilling,
}

/// Mode used by [`theorem_guard`] and [`search_architecture`].
pub const SEARCH_RANK_MODE: RankMode = RankMode::WaterFilling;

/// Capacity `Σ log2(1 + p_i r_i² / σ²)` of `h` under the power split of `mode`.
pub fn los_capacity(h: &CMat, total_power: f64, noise_power: f64, mode: RankMode) -> Result<f64> {
    if total_power == 0.0 {
        return Ok(0.0);
    }
    let s = singular_values(h)?;
    let rank = numerical_rank(&s);
    if rank == 0 {
        log::warn!("capacity of a zero channel requested");
        return Ok(0.0);
    }
    let modes = match mode {
        RankMode::Numerical => rank,
        RankMode::Fixed(k) => k.min(s.len()),
        RankMode::WaterFilling => {
            let p = waterfilling(&s[..rank], total_power, noise_power)?;
            return Ok(s[..rank]
                .iter()
                .zip(&p)
                .map(|(r, p)| (1.0 + p * r * r / noise_power).log2())
                .sum());
        }
    };
    let rho = total_power / modes as f64;
    Ok(s[..modes]
        .iter()
        .map(|r| (1.0 + rho * r * r / noise_power).log2())
        .sum())
}

/// `‖A_r A_r^H − K I‖_F²` for a receive steering matrix with `K` columns.
pub fn gram_deviation(a_r: &CMat) -> f64 {
    let k = a_r.ncols() as f64;
    let mut g = a_r * a_r.adjoint();
    for i in 0..g.nrows() {
        g[(i, i)] -= Complex64::new(k, 0.0);
    }
    g.norm_squared()
}

/// Receive steering vectors of the LoS waves from every subarray, `N_r × K`.
pub fn receive_steering_matrix(
    geometry: &ArrayGeometry,
    user: &Position,
    config: &SystemConfig,
) -> Result<CMat> {
    let side = config.rx_side();
    let lambda = geometry.wavelength;
    let geo = subarray_user_geometry(geometry, user)?;
    let mut a = CMat::zeros(side * side, geo.len());
    for (k, g) in geo.iter().enumerate() {
        a.set_column(
            k,
            &upa_steering_vector(side, side, -g.u_x, -g.u_z, lambda, lambda / 2.0),
        );
    }
    Ok(a)
}

/// Channel of a user that only has the LoS path.
pub fn los_channel(
    geometry: &ArrayGeometry,
    user: &Position,
    config: &SystemConfig,
) -> Result<CMat> {
    let path = los_path(geometry, user, config)?;
    assemble_cnff_channel(std::slice::from_ref(&path), geometry, config)
}

/// Distance beyond which capacity is monotone in the spacing,
/// `2√2 (√N_r − 1) S`.
pub fn monotonicity_threshold(num_rx_antennas: usize, aperture: f64) -> f64 {
    2.0 * SQRT_2 * ((num_rx_antennas as f64).sqrt() - 1.0) * aperture
}

/// Largest receive-side phase-difference gap
/// `max_{k,m,i,j} |β_{k,i,j} − β_{m,i,j}|` for one user.
///
/// With `β_{k,i,j} = π (Δm u_x^k + Δn u_z^k)` over a `√N_r × √N_r` half-wave
/// grid the maximum is attained at opposite corners, giving
/// `π (√N_r − 1) max_{k,m} (|u_x^k − u_x^m| + |u_z^k − u_z^m|)`.
pub fn max_beta_gap(
    geometry: &ArrayGeometry,
    user: &Position,
    num_rx_antennas: usize,
) -> Result<f64> {
    let geo = subarray_user_geometry(geometry, user)?;
    let span = (num_rx_antennas as f64).sqrt() - 1.0;
    let mut worst: f64 = 0.0;
    for a in &geo {
        for b in &geo {
            worst = worst.max((a.u_x - b.u_x).abs() + (a.u_z - b.u_z).abs());
        }
    }
    Ok(PI * span * worst)
}

/// Increasing within a relative `slack` from each point to the next.
pub fn is_non_decreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - slack * w[0].abs())
}

pub fn is_non_increasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack * w[0].abs())
}

/// Relative slack used by the monotonicity verdicts.
pub const MONOTONE_SLACK: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremDiagnostics {
    pub tau: f64,
    /// Every user is at least `tau` from every subarray reference.
    pub distance_condition: bool,
    pub min_distance: f64,
    /// Per user.
    pub max_beta_gaps: Vec<f64>,
    /// `max |β_k − β_m| ≤ π` for every user; `None` when the distance
    /// condition fails.
    pub beta_bound_holds: Option<bool>,
    /// Per user, per spacing.
    pub gram_deviation: Vec<Vec<f64>>,
    pub capacity: Vec<Vec<f64>>,
    /// Capacities non-decreasing over the grid for every user; `None` when
    /// the distance condition fails.
    pub monotone: Option<bool>,
}

/// Checks the distance condition and the phase bound at the configured
/// spacing, then sweeps `ds_grid` for the capacity and Gram deviation of
/// each user's LoS channel.
pub fn theorem_guard(
    config: &SystemConfig,
    users: &[Position],
    ds_grid: &[f64],
) -> Result<TheoremDiagnostics> {
    let geometry = build_wsa_geometry(config)?;
    let tau = monotonicity_threshold(config.num_rx_antennas, config.aperture_limit);
    let mut min_distance = f64::INFINITY;
    let mut max_beta_gaps = Vec::with_capacity(users.len());
    for u in users {
        for g in subarray_user_geometry(&geometry, u)? {
            min_distance = min_distance.min(g.distance);
        }
        max_beta_gaps.push(max_beta_gap(&geometry, u, config.num_rx_antennas)?);
    }
    let distance_condition = min_distance >= tau;
    let beta_bound_holds =
        distance_condition.then(|| max_beta_gaps.iter().all(|&b| b <= PI * (1.0 + 1e-12)));

    let sweep = ds_grid
        .par_iter()
        .map(|&d_s| {
            let c = config.clone().with_subarrays(config.num_subarrays, d_s);
            let g = build_wsa_geometry(&c)?;
            users
                .iter()
                .map(|u| {
                    let f = gram_deviation(&receive_steering_matrix(&g, u, &c)?);
                    let h = los_channel(&g, u, &c)?;
                    let cap = los_capacity(&h, c.total_power, c.noise_power, SEARCH_RANK_MODE)?;
                    Ok((f, cap))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let per_user = |pick: fn(&(f64, f64)) -> f64| -> Vec<Vec<f64>> {
        (0..users.len())
            .map(|u| sweep.iter().map(|row| pick(&row[u])).collect())
            .collect()
    };
    let gram = per_user(|x| x.0);
    let capacity = per_user(|x| x.1);
    let monotone = distance_condition.then(|| {
        capacity
            .iter()
            .all(|c| is_non_decreasing(c, MONOTONE_SLACK))
    });
    Ok(TheoremDiagnostics {
        tau,
        distance_condition,
        min_distance,
        max_beta_gaps,
        beta_bound_holds,
        gram_deviation: gram,
        capacity,
        monotone,
    })
}

/// `n` log-spaced spacings from one wavelength (or `d_a`, if larger) up to
/// the largest feasible spacing for `k` subarrays.
pub fn spacing_grid(config: &SystemConfig, k: usize, n: usize) -> Result<Vec<f64>> {
    let hi = max_subarray_spacing_for(config, k)?;
    let lo = config.wavelength().max(config.element_spacing);
    if hi < lo {
        return Err(Error::config(format!(
            "K = {k}: largest feasible spacing {hi} m is below {lo} m"
        )));
    }
    if n == 1 {
        return Ok(vec![hi]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureCandidate {
    pub num_subarrays: usize,
    pub subarray_spacing: f64,
    pub aperture: f64,
    /// Mean LoS capacity over the users, bits/s/Hz.
    pub capacity: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub candidates: Vec<ArchitectureCandidate>,
    pub best: ArchitectureCandidate,
}

/// A larger `K` replaces the incumbent only if it is better by more than this
/// relative margin.
pub const TIE_MARGIN: f64 = 0.01;

impl SearchReport {
    /// `K, d_s_m, aperture_m, capacity_bpsHz, feasible` per candidate.
    pub fn to_table(&self) -> String {
        let mut out = String::from("K, d_s_m, aperture_m, capacity_bpsHz, feasible\n");
        for c in &self.candidates {
            let _ = writeln!(
                out,
                "{}, {:.9e}, {:.9e}, {:.9e}, {}",
                c.num_subarrays, c.subarray_spacing, c.aperture, c.capacity, c.feasible
            );
        }
        out
    }
}

fn mean_capacity(
    config: &SystemConfig,
    geometry: &ArrayGeometry,
    users: &[Position],
) -> Result<f64> {
    let caps = users
        .iter()
        .map(|u| {
            let h = los_channel(geometry, u, config)?;
            los_capacity(&h, config.total_power, config.noise_power, SEARCH_RANK_MODE)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(caps.iter().sum::<f64>() / caps.len() as f64)
}

/// Exhaustive search: every `K > 1` at its largest feasible spacing, `K = 1`
/// as the compact baseline. Candidates are scanned in increasing `K`.
pub fn search_architecture(
    config: &SystemConfig,
    users: &[Position],
    candidates: &[usize],
) -> Result<SearchReport> {
    if candidates.is_empty() {
        return Err(Error::config("architecture search needs at least one K"));
    }
    if users.is_empty() {
        return Err(Error::config("architecture search needs at least one user"));
    }
    let mut ks = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for &k in &ks {
        let ok = k > 0
            && perfect_square_root(k).is_some()
            && config.num_tx_antennas.is_multiple_of(k)
            && perfect_square_root(config.num_tx_antennas / k).is_some();
        if !ok {
            return Err(Error::config(format!(
                "K = {k} must be a perfect square dividing N_t = {}",
                config.num_tx_antennas
            )));
        }
    }
    let evaluated = ks
        .par_iter()
        .map(|&k| -> Result<ArchitectureCandidate> {
            let d_s = if k == 1 {
                0.0
            } else {
                max_subarray_spacing_for(config, k)?
            };
            let c = config.clone().with_subarrays(k, d_s);
            match build_wsa_geometry(&c) {
                Ok(g) => Ok(ArchitectureCandidate {
                    num_subarrays: k,
                    subarray_spacing: d_s,
                    aperture: g.aperture,
                    capacity: mean_capacity(&c, &g, users)?,
                    feasible: true,
                }),
                Err(Error::Config(_)) | Err(Error::ApertureViolation { .. }) => {
                    Ok(ArchitectureCandidate {
                        num_subarrays: k,
                        subarray_spacing: d_s,
                        aperture: f64::NAN,
                        capacity: f64::NAN,
                        feasible: false,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&ArchitectureCandidate> = None;
    for c in evaluated.iter().filter(|c| c.feasible) {
        best = match best {
            Some(b) if c.capacity <= b.capacity * (1.0 + TIE_MARGIN) => Some(b),
            _ => Some(c),
        };
    }
    let best = best
        .cloned()
        .ok_or_else(|| Error::config("no candidate K yields a feasible architecture"))?;
    Ok(SearchReport {
        candidates: evaluated,
        best,
    })
}
