//! Scalar system parameters.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, BOLTZMANN, SPEED_OF_LIGHT};

/// How the modulus of each path gain is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PathGainModel {
    /// LoS amplitude `λ / (4π D)`, NLoS additionally attenuated by a random
    /// reflection loss.
    #[default]
    FreeSpace,
    /// LoS amplitude 1, NLoS amplitude equal to the reflection loss alone.
    Normalized,
}

/// All scalar parameters of one MU-WSA system.
///
/// Powers are in watts; the dBm conversion helpers exist for the CLI boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub num_tx_antennas: usize,
    pub num_rx_antennas: usize,
    pub num_subarrays: usize,
    /// Gap `d_s` between the edge antennas of adjacent subarrays, meters.
    pub subarray_spacing: f64,
    /// Intra-subarray element spacing `d_a`, meters.
    pub element_spacing: f64,
    pub num_users: usize,
    pub streams_per_user: usize,
    pub tx_rf_chains: usize,
    pub rx_rf_chains: usize,
    pub num_paths: usize,
    pub total_power: f64,
    pub noise_power: f64,
    pub aperture_limit: f64,
    pub bs_height: f64,
    pub user_height: f64,
    pub path_gain: PathGainModel,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::table_defaults()
    }
}

/// Thermal noise power `k T B` at 290 K with a 0 dB noise figure.
pub fn thermal_noise_power(bandwidth: f64) -> f64 {
    BOLTZMANN * 290.0 * bandwidth
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub(crate) fn perfect_square_root(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

impl SystemConfig {
    /// The reference simulation setup: 300 GHz, 5 GHz bandwidth, 1024 BS
    /// antennas, 16 antennas per user, 20 single-stream users, 1 m aperture
    /// limit, 20 dBm transmit power, 2-D placement at 20 m height.
    pub fn table_defaults() -> Self {
        let carrier_frequency = 300e9;
        let lambda = SPEED_OF_LIGHT / carrier_frequency;
        let bandwidth = 5e9;
        Self {
            carrier_frequency,
            bandwidth,
            num_tx_antennas: 1024,
            num_rx_antennas: 16,
            num_subarrays: 1,
            subarray_spacing: 0.0,
            element_spacing: lambda / 2.0,
            num_users: 20,
            streams_per_user: 1,
            tx_rf_chains: 20,
            rx_rf_chains: 1,
            num_paths: 2,
            total_power: dbm_to_watts(20.0),
            noise_power: thermal_noise_power(bandwidth),
            aperture_limit: 1.0,
            bs_height: 20.0,
            user_height: 20.0,
            path_gain: PathGainModel::FreeSpace,
            rng_seed: 0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Changes the carrier and resets `d_a` to half the new wavelength.
    pub fn with_carrier(mut self, frequency: f64) -> Self {
        self.carrier_frequency = frequency;
        self.element_spacing = self.wavelength() / 2.0;
        self
    }

    pub fn with_subarrays(mut self, k: usize, spacing: f64) -> Self {
        self.num_subarrays = k;
        self.subarray_spacing = spacing;
        self
    }

    /// Sets `U` and keeps `L_t = U N_s`.
    pub fn with_users(mut self, users: usize) -> Self {
        self.num_users = users;
        self.tx_rf_chains = users * self.streams_per_user;
        self
    }

    /// Antennas per subarray.
    pub fn subarray_size(&self) -> usize {
        self.num_tx_antennas / self.num_subarrays.max(1)
    }

    /// Side length of the square receive array.
    pub fn rx_side(&self) -> usize {
        perfect_square_root(self.num_rx_antennas).unwrap_or(0)
    }

    /// Every violated invariant, as human-readable findings naming the field.
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.carrier_frequency > 0.0) {
            out.push("carrier_frequency must be positive".to_string());
        }
        if !(self.bandwidth > 0.0) {
            out.push("bandwidth must be positive".to_string());
        }
        if self.num_tx_antennas == 0 || perfect_square_root(self.num_tx_antennas).is_none() {
            out.push("num_tx_antennas (N_t) must be a positive perfect square".to_string());
        }
        if self.num_rx_antennas == 0 || perfect_square_root(self.num_rx_antennas).is_none() {
            out.push("num_rx_antennas (N_r) must be a positive perfect square".to_string());
        }
        let k = self.num_subarrays;
        if k == 0
            || perfect_square_root(k).is_none()
            || k > self.num_tx_antennas
            || !self.num_tx_antennas.is_multiple_of(k)
            || perfect_square_root(self.num_tx_antennas / k).is_none()
        {
            out.push("num_subarrays: K must be a perfect square dividing N_t".to_string());
        }
        if self.num_users == 0 {
            out.push("num_users must be at least 1".to_string());
        }
        if self.streams_per_user == 0 {
            out.push("streams_per_user must be at least 1".to_string());
        }
        if self.num_users * self.streams_per_user != self.tx_rf_chains {
            out.push(format!(
                "tx_rf_chains: U*N_s = {} must equal L_t = {} (full multiplexing assumption)",
                self.num_users * self.streams_per_user,
                self.tx_rf_chains
            ));
        }
        if self.streams_per_user > self.rx_rf_chains {
            out.push("streams_per_user: N_s must not exceed L_r".to_string());
        }
        if self.rx_rf_chains > self.num_rx_antennas {
            out.push("rx_rf_chains: L_r must not exceed N_r".to_string());
        }
        if self.tx_rf_chains > self.num_tx_antennas {
            out.push("tx_rf_chains: L_t must not exceed N_t".to_string());
        }
        if self.num_paths == 0 {
            out.push("num_paths must be at least 1".to_string());
        }
        if !(self.total_power > 0.0) {
            out.push("total_power must be positive".to_string());
        }
        if !(self.noise_power > 0.0) {
            out.push("noise_power must be positive".to_string());
        }
        if !(self.subarray_spacing >= 0.0) {
            out.push("subarray_spacing must be non-negative".to_string());
        }
        if !(self.element_spacing > 0.0) {
            out.push("element_spacing must be positive".to_string());
        }
        if !(self.aperture_limit > 0.0) {
            out.push("aperture_limit must be positive".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.findings();
        if f.is_empty() {
            Ok(())
        } else {
            Err(Error::config(f.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SystemConfig::table_defaults();
        assert!(c.findings().is_empty(), "{:?}", c.findings());
        assert!((c.wavelength() - 0.000_999_308).abs() < 1e-9);
        assert!((watts_to_dbm(c.total_power) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn thermal_noise_over_five_gigahertz() {
        let n = thermal_noise_power(5e9);
        assert!((watts_to_dbm(n) - (-76.99)).abs() < 0.01);
    }

    #[test]
    fn non_square_k_is_reported() {
        let c = SystemConfig::table_defaults().with_subarrays(3, 0.1);
        let f = c.findings();
        assert!(f
            .iter()
            .any(|s| s.contains("K must be a perfect square dividing N_t")));
    }

    #[test]
    fn rf_chain_mismatch_is_reported() {
        let mut c = SystemConfig::table_defaults();
        c.tx_rf_chains = 16;
        assert!(c.findings().iter().any(|s| s.starts_with("tx_rf_chains")));
    }
}
