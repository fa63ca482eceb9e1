//! Hybrid precoders and combiners.
//!
//! An analog stage ([`ao`], [`svr`] or the [`benchmark`] SVD-phase design)
//! fixes `F_RF` and every `W_RF,u`; [`complete_digital`] then runs block
//! diagonalization on the effective channels, normalizes `F_BB` so each
//! stream leaves the array with unit norm and water-fills the power.

pub mod ao;
pub mod bd;
pub mod benchmark;
pub mod svr;
pub mod waterfill;

use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::linalg::CMat;
use crate::{Error, Result};

pub use ao::{ao_analog_subconnected, AoOptions, AoOutput};
pub use bd::{bd_digital, BdOutput, StreamRule};
pub use benchmark::{
    capacity_upper_bound, capacity_upper_bound_from, fully_digital_bound, fully_digital_bound_from,
    svd_phase_benchmark, DigitalBound,
};
pub use svr::{svr_analog, svr_combiners, DistanceModel};
pub use waterfill::waterfilling;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionMode {
    FullyConnected,
    /// Block-diagonal `F_RF` with one block per subarray.
    SubConnected {
        subarrays: usize,
    },
}

/// Output of an analog design.
#[derive(Debug, Clone)]
pub struct AnalogStage {
    /// `N_t × L_t`.
    pub f_rf: CMat,
    /// Per user, `N_r × L_r`.
    pub w_rf: Vec<CMat>,
    pub mode: ConnectionMode,
}

/// A complete hybrid design for one channel realization.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub f_rf: CMat,
    /// `L_t × U N_s`, columns scaled so that `‖F_RF F_BB(:, i)‖ = 1`.
    pub f_bb: CMat,
    pub w_rf: Vec<CMat>,
    pub w_bb: Vec<CMat>,
    /// Water-filled stream powers in watts; `P = diag(√power)`.
    pub power: Vec<f64>,
    /// Effective amplitude gain of every stream after normalization.
    pub stream_gains: Vec<f64>,
    pub mode: ConnectionMode,
    pub streams_per_user: usize,
}

impl BeamformerSet {
    pub fn num_users(&self) -> usize {
        self.w_rf.len()
    }

    fn stream_range(&self, u: usize) -> std::ops::Range<usize> {
        u * self.streams_per_user..(u + 1) * self.streams_per_user
    }

    /// `F_RF F_BB,u P_u`, shape `N_t × N_s`.
    pub fn user_precoder(&self, u: usize) -> CMat {
        let r = self.stream_range(u);
        let mut f = &self.f_rf * self.f_bb.columns(r.start, r.len());
        for (j, i) in r.enumerate() {
            let scale = Complex64::new(self.power[i].sqrt(), 0.0);
            f.column_mut(j).iter_mut().for_each(|x| *x *= scale);
        }
        f
    }

    /// `W_RF,u W_BB,u`, shape `N_r × N_s`.
    pub fn user_combiner(&self, u: usize) -> CMat {
        &self.w_rf[u] * &self.w_bb[u]
    }

    /// Number of analog phase shifters: every entry of `F_RF` for a fully
    /// connected array, only the diagonal blocks for a sub-connected one.
    pub fn phase_shifter_count(&self) -> usize {
        let (n_t, l_t) = self.f_rf.shape();
        match self.mode {
            ConnectionMode::FullyConnected => n_t * l_t,
            ConnectionMode::SubConnected { subarrays } => n_t * l_t / subarrays,
        }
    }
}

/// Replaces every entry by `target` times its phase; zeros become `target`.
pub fn constant_modulus_projection(m: &CMat, target: f64) -> CMat {
    m.map(|x| {
        let r = x.norm();
        if r > 0.0 {
            x * (target / r)
        } else {
            Complex64::new(target, 0.0)
        }
    })
}

/// `W_RF,u^H H_u F_RF` for every user.
pub fn effective_channels(channels: &[CMat], f_rf: &CMat, w_rf: &[CMat]) -> Vec<CMat> {
    channels
        .iter()
        .zip(w_rf)
        .map(|(h, w)| w.adjoint() * h * f_rf)
        .collect()
}

/// BD, per-column normalization and joint water-filling on top of a fixed
/// analog stage.
pub fn complete_digital(
    channels: &[CMat],
    analog: AnalogStage,
    config: &SystemConfig,
) -> Result<BeamformerSet> {
    if channels.len() != analog.w_rf.len() {
        return Err(Error::config(format!(
            "{} channels but {} analog combiners",
            channels.len(),
            analog.w_rf.len()
        )));
    }
    let n_s = config.streams_per_user;
    let effective = effective_channels(channels, &analog.f_rf, &analog.w_rf);
    let bd = bd_digital(&effective, StreamRule::Fixed(n_s))?;

    let l_t = analog.f_rf.ncols();
    let total = channels.len() * n_s;
    let mut f_bb = CMat::zeros(l_t, total);
    let mut gains = Vec::with_capacity(total);
    for (u, (f, s)) in bd.f_bb.iter().zip(&bd.gains).enumerate() {
        for (j, &g) in s.iter().enumerate().take(n_s) {
            let col = f.column(j);
            let norm = (&analog.f_rf * col).norm();
            let c = u * n_s + j;
            if norm > 0.0 {
                f_bb.set_column(c, &(col / Complex64::new(norm, 0.0)));
                gains.push(g / norm);
            } else {
                gains.push(0.0);
            }
        }
    }
    let power = if gains.iter().any(|&g| g > 0.0) {
        waterfilling(&gains, config.total_power, config.noise_power)?
    } else {
        log::warn!("every stream has zero effective gain; no power allocated");
        vec![0.0; total]
    };
    Ok(BeamformerSet {
        f_rf: analog.f_rf,
        f_bb,
        w_rf: analog.w_rf,
        w_bb: bd.w_bb,
        power,
        stream_gains: gains,
        mode: analog.mode,
        streams_per_user: n_s,
    })
}
