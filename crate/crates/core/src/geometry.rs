//! Base-station and user geometry.
//!
//! The BS array lies in the x–z plane (y = 0) with the reference antenna of the
//! first subarray at `(0, 0, z_t)`. Subarrays sit on a `√K × √K` grid and the
//! antennas of each subarray on an `n × n` grid, both growing towards +x and
//! +z. Users are in the half-space y > 0.
//!
//! Antennas are ordered subarray-major. Subarray `k` has grid indices
//! `(k % √K, k / √K)` along (x, z) and antenna `m` inside it has grid indices
//! `(m % n, m / n)`; every matrix in the crate indexes antennas in this order.

use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::config::{perfect_square_root, SystemConfig};
use crate::{Error, Result};

pub type Position = Vector3<f64>;

/// Positions of every BS antenna plus the subarray bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub antenna_positions: Vec<Position>,
    pub subarray_reference_positions: Vec<Position>,
    /// Antennas per subarray side, `n_x = n_z = sqrt(N_t / K)`.
    pub subarray_side: usize,
    /// Subarrays per side, `sqrt(K)`.
    pub grid_side: usize,
    /// Distance between the reference antennas of adjacent subarrays.
    pub reference_pitch: f64,
    pub element_spacing: f64,
    pub subarray_spacing: f64,
    /// Diagonal of the bounding square.
    pub aperture: f64,
    pub wavelength: f64,
}

impl ArrayGeometry {
    pub fn num_antennas(&self) -> usize {
        self.antenna_positions.len()
    }

    pub fn num_subarrays(&self) -> usize {
        self.subarray_reference_positions.len()
    }

    pub fn antennas_per_subarray(&self) -> usize {
        self.subarray_side * self.subarray_side
    }

    /// Grid indices `(k_x, k_z)` of subarray `k`, zero based.
    pub fn subarray_grid_index(&self, k: usize) -> (usize, usize) {
        (k % self.grid_side, k / self.grid_side)
    }

    pub fn antennas_of(&self, k: usize) -> &[Position] {
        let n = self.antennas_per_subarray();
        &self.antenna_positions[k * n..(k + 1) * n]
    }

    /// Geometric centre of the array.
    pub fn centroid(&self) -> Position {
        let sum: Position = self.antenna_positions.iter().sum();
        sum / self.antenna_positions.len() as f64
    }

    /// Plain-text antenna table,
    /// `antenna_index, subarray_index, x_m, y_m, z_m` with 12 significant digits.
    pub fn export_table(&self) -> String {
        let mut out = String::from("antenna_index, subarray_index, x_m, y_m, z_m\n");
        let per = self.antennas_per_subarray();
        for (i, p) in self.antenna_positions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}, {}, {}, {}, {}",
                i,
                i / per,
                sig12(p.x),
                sig12(p.y),
                sig12(p.z)
            );
        }
        out
    }
}

fn sig12(x: f64) -> String {
    format!("{:.11e}", x)
}

/// Side length of the bounding square of a `K`-subarray array.
fn side_length(grid_side: usize, subarray_side: usize, d_a: f64, d_s: f64) -> f64 {
    let pitch = (subarray_side - 1) as f64 * d_a + d_s;
    (grid_side - 1) as f64 * pitch + (subarray_side - 1) as f64 * d_a
}

/// Builds the WSA geometry for `config`.
///
/// With `K = 1` the spacing is ignored and the result is the compact UPA. With
/// `K > 1` the spacing must be at least `d_a`; `d_s = d_a` reproduces the
/// compact UPA element for element (up to ordering).
pub fn build_wsa_geometry(config: &SystemConfig) -> Result<ArrayGeometry> {
    let n_t = config.num_tx_antennas;
    let k = config.num_subarrays;
    let grid_side = perfect_square_root(k)
        .filter(|_| k > 0 && k <= n_t && n_t.is_multiple_of(k))
        .ok_or_else(|| {
            Error::config(format!(
                "K = {k} must be a perfect square dividing N_t = {n_t}"
            ))
        })?;
    let subarray_side = perfect_square_root(n_t / k)
        .filter(|&s| s > 0)
        .ok_or_else(|| Error::config(format!("N_t / K = {} is not a perfect square", n_t / k)))?;
    let d_a = config.element_spacing;
    if !(d_a > 0.0) {
        return Err(Error::config("element spacing must be positive"));
    }
    let d_s = if k == 1 { 0.0 } else { config.subarray_spacing };
    if k > 1 && d_s < d_a * (1.0 - 1e-12) {
        return Err(Error::config(format!(
            "subarray spacing {d_s} m is below the element spacing {d_a} m; subarrays would overlap"
        )));
    }
    let pitch = if k == 1 {
        0.0
    } else {
        (subarray_side - 1) as f64 * d_a + d_s
    };
    let z_t = config.bs_height;

    let mut references = Vec::with_capacity(k);
    let mut antennas = Vec::with_capacity(n_t);
    for sub in 0..k {
        let (kx, kz) = (sub % grid_side, sub / grid_side);
        let r = Position::new(kx as f64 * pitch, 0.0, z_t + kz as f64 * pitch);
        references.push(r);
        for m in 0..subarray_side * subarray_side {
            let (mx, mz) = (m % subarray_side, m / subarray_side);
            antennas.push(r + Position::new(mx as f64 * d_a, 0.0, mz as f64 * d_a));
        }
    }
    let side = side_length(grid_side, subarray_side, d_a, d_s);
    let aperture = std::f64::consts::SQRT_2 * side;
    if aperture > config.aperture_limit * (1.0 + 1e-12) {
        return Err(Error::ApertureViolation {
            aperture,
            limit: config.aperture_limit,
        });
    }
    Ok(ArrayGeometry {
        antenna_positions: antennas,
        subarray_reference_positions: references,
        subarray_side,
        grid_side,
        reference_pitch: pitch,
        element_spacing: d_a,
        subarray_spacing: d_s,
        aperture,
        wavelength: config.wavelength(),
    })
}

/// Distance and direction from one subarray reference antenna to a user.
///
/// `u_x = Δx / D` and `u_z = Δz / D` are the direction cosines along the array
/// axes; azimuth is measured in the horizontal plane from broadside (+y) and
/// elevation from the horizontal plane, so `u_x = sin θ cos φ`, `u_z = sin φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubarrayUserGeometry {
    pub distance: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub u_x: f64,
    pub u_z: f64,
}

impl SubarrayUserGeometry {
    /// Geometry of the vector `to - from`.
    pub fn between(from: &Position, to: &Position) -> Result<Self> {
        let delta = to - from;
        let distance = delta.norm();
        if !(distance > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "point ({}, {}, {}) coincides with an antenna",
                to.x, to.y, to.z
            )));
        }
        let u_x = delta.x / distance;
        let u_z = delta.z / distance;
        Ok(Self {
            distance,
            azimuth: delta.x.atan2(delta.y),
            elevation: u_z.clamp(-1.0, 1.0).asin(),
            u_x,
            u_z,
        })
    }
}

/// Per-subarray distances and direction cosines from every reference antenna
/// to `user`.
pub fn subarray_user_geometry(
    geometry: &ArrayGeometry,
    user: &Position,
) -> Result<Vec<SubarrayUserGeometry>> {
    geometry
        .subarray_reference_positions
        .iter()
        .map(|r| SubarrayUserGeometry::between(r, user))
        .collect()
}

/// Second-order Taylor estimate of the distance from subarray `(k_x, k_z)` to
/// a user, built from the first subarray's distance and direction cosines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorDistance {
    pub distance: f64,
    /// `D^{uk} - D^{u1}`.
    pub delta: f64,
    pub psi: f64,
    /// `|ψ| < 1`, the expansion's domain of validity.
    pub within_domain: bool,
}

/// Taylor approximation of the distance to the subarray with zero-based grid
/// offsets `(k_x, k_z)`, reference pitch `pitch`.
///
/// With the subarray displaced by `(δx, δz) = (k_x, k_z) · pitch`,
/// `D^{uk} = D^{u1} sqrt(1 + ψ)` with
/// `ψ = (−2 (δx u_x + δz u_z) D^{u1} + δx² + δz²) / (D^{u1})²`, expanded as
/// `D^{u1} (1 + ψ/2 − ψ²/8)`.
pub fn taylor_distance(
    d_u1: f64,
    k_x: usize,
    k_z: usize,
    pitch: f64,
    u_x: f64,
    u_z: f64,
) -> TaylorDistance {
    let dx = k_x as f64 * pitch;
    let dz = k_z as f64 * pitch;
    let psi = (-2.0 * (dx * u_x + dz * u_z) * d_u1 + dx * dx + dz * dz) / (d_u1 * d_u1);
    let delta = d_u1 * (psi / 2.0 - psi * psi / 8.0);
    let within_domain = psi.abs() < 1.0;
    if !within_domain {
        log::warn!(
            "Taylor distance outside its domain: |psi| = {:.3}",
            psi.abs()
        );
    }
    TaylorDistance {
        distance: d_u1 + delta,
        delta,
        psi,
        within_domain,
    }
}

/// Which expression to use for the largest admissible subarray spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpacingFormula {
    /// `(√2 S + λ(√N_t − √K)) / (2(√K − 1))`, the closed form as usually
    /// quoted. It overshoots the aperture limit by `λ(√N_t − √K)/(√K − 1)`.
    Published,
    /// Solved from the construction in [`build_wsa_geometry`]; the aperture
    /// at this spacing equals the limit exactly.
    Geometric,
}

/// Largest subarray spacing keeping the aperture within `aperture_limit`.
/// The geometric variant assumes `d_a = λ/2`; see
/// [`max_subarray_spacing_for`] for an arbitrary element spacing.
pub fn max_subarray_spacing(
    k: usize,
    n_t: usize,
    wavelength: f64,
    aperture_limit: f64,
    formula: SpacingFormula,
) -> Result<f64> {
    max_spacing_impl(
        k,
        n_t,
        wavelength,
        wavelength / 2.0,
        aperture_limit,
        formula,
    )
}

pub fn max_subarray_spacing_for(config: &SystemConfig, k: usize) -> Result<f64> {
    max_spacing_impl(
        k,
        config.num_tx_antennas,
        config.wavelength(),
        config.element_spacing,
        config.aperture_limit,
        SpacingFormula::Geometric,
    )
}

fn max_spacing_impl(
    k: usize,
    n_t: usize,
    wavelength: f64,
    d_a: f64,
    aperture_limit: f64,
    formula: SpacingFormula,
) -> Result<f64> {
    if k == 1 {
        return Err(Error::UndefinedSpacing);
    }
    let root_k = perfect_square_root(k)
        .filter(|_| k > 0 && n_t.is_multiple_of(k))
        .ok_or_else(|| {
            Error::config(format!(
                "K = {k} must be a perfect square dividing N_t = {n_t}"
            ))
        })? as f64;
    let root_n = (n_t as f64).sqrt();
    let s2 = std::f64::consts::SQRT_2 * aperture_limit;
    Ok(match formula {
        SpacingFormula::Published => (s2 + wavelength * (root_n - root_k)) / (2.0 * (root_k - 1.0)),
        SpacingFormula::Geometric => {
            // side = √K (n − 1) d_a + (√K − 1) d_s, side = S / √2
            (s2 / 2.0 - (root_n - root_k) * d_a) / (root_k - 1.0)
        }
    })
}

/// `2 S² / λ`.
pub fn rayleigh_distance(aperture: f64, wavelength: f64) -> f64 {
    2.0 * aperture * aperture / wavelength
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_t: usize, k: usize, d_s: f64, lambda: f64) -> SystemConfig {
        let mut c = SystemConfig::table_defaults().with_subarrays(k, d_s);
        c.num_tx_antennas = n_t;
        c.carrier_frequency = crate::SPEED_OF_LIGHT / lambda;
        c.element_spacing = lambda / 2.0;
        c.aperture_limit = 100.0;
        c
    }

    #[test]
    fn compact_1024_aperture_and_rayleigh() {
        let g = build_wsa_geometry(&cfg(1024, 1, 0.0, 0.001)).unwrap();
        assert!((g.aperture - std::f64::consts::SQRT_2 * 31.0 * 0.0005).abs() < 1e-15);
        assert!((g.aperture - 0.02192).abs() < 1e-5);
        let d = rayleigh_distance(g.aperture, 0.001);
        assert!((d - 0.961).abs() < 1e-3, "{d}");
    }

    #[test]
    fn four_subarray_reference_grid() {
        let g = build_wsa_geometry(&cfg(16, 4, 0.01, 0.001)).unwrap();
        assert!((g.reference_pitch - 0.0105).abs() < 1e-15);
        let z = g.subarray_reference_positions[0].z;
        let offs: Vec<(f64, f64)> = g
            .subarray_reference_positions
            .iter()
            .map(|p| (p.x, p.z - z))
            .collect();
        let expect = [(0.0, 0.0), (0.0105, 0.0), (0.0, 0.0105), (0.0105, 0.0105)];
        for (a, b) in offs.iter().zip(expect.iter()) {
            assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
        }
    }

    #[test]
    fn spacing_equal_to_element_spacing_is_compact() {
        let wsa = build_wsa_geometry(&cfg(64, 4, 0.0005, 0.001)).unwrap();
        let compact = build_wsa_geometry(&cfg(64, 1, 0.0, 0.001)).unwrap();
        let key = |p: &Position| ((p.x * 1e7).round() as i64, (p.z * 1e7).round() as i64);
        let mut a: Vec<_> = wsa.antenna_positions.iter().map(key).collect();
        let mut b: Vec<_> = compact.antenna_positions.iter().map(key).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!((wsa.aperture - compact.aperture).abs() < 1e-15);
    }

    #[test]
    fn overlapping_subarrays_are_rejected() {
        assert!(matches!(
            build_wsa_geometry(&cfg(64, 4, 0.0, 0.001)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn aperture_violation_carries_aperture() {
        let mut c = cfg(64, 4, 0.5, 0.001);
        c.aperture_limit = 0.1;
        match build_wsa_geometry(&c) {
            Err(Error::ApertureViolation { aperture, limit }) => {
                assert!(aperture > 0.7 && limit == 0.1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_k_is_config_error() {
        assert!(build_wsa_geometry(&cfg(64, 3, 0.01, 0.001)).is_err());
        assert!(build_wsa_geometry(&cfg(64, 16, 0.01, 0.001)).is_ok());
        assert!(build_wsa_geometry(&cfg(64, 9, 0.01, 0.001)).is_err());
    }

    #[test]
    fn broadside_and_pythagorean_users() {
        let g = build_wsa_geometry(&cfg(16, 1, 0.0, 0.001)).unwrap();
        let z = g.subarray_reference_positions[0].z;
        let s = subarray_user_geometry(&g, &Position::new(0.0, 10.0, z)).unwrap();
        assert_eq!(s[0].distance, 10.0);
        assert_eq!((s[0].u_x, s[0].u_z), (0.0, 0.0));
        let s = subarray_user_geometry(&g, &Position::new(3.0, 4.0, z)).unwrap();
        assert!((s[0].distance - 5.0).abs() < 1e-15);
        assert!((s[0].u_x - 0.6).abs() < 1e-15);
        assert!((s[0].azimuth.sin() * s[0].elevation.cos() - s[0].u_x).abs() < 1e-15);
    }

    #[test]
    fn four_subarrays_match_coordinate_arithmetic() {
        let g = build_wsa_geometry(&cfg(16, 4, 0.01, 0.001)).unwrap();
        let z = g.subarray_reference_positions[0].z;
        let user = Position::new(1.0, 2.0, z);
        let s = subarray_user_geometry(&g, &user).unwrap();
        let refs = [(0.0, 0.0), (0.0105, 0.0), (0.0, 0.0105), (0.0105, 0.0105)];
        for (geo, (x, dz)) in s.iter().zip(refs) {
            let (ex, ey, ez): (f64, f64, f64) = (1.0 - x, 2.0, -dz);
            let d = (ex * ex + ey * ey + ez * ez).sqrt();
            assert!((geo.distance - d).abs() < 1e-12 * d);
            assert!((geo.u_x - ex / d).abs() < 1e-12);
            assert!((geo.u_z - ez / d).abs() < 1e-12);
        }
        let mut ds: Vec<f64> = s.iter().map(|g| g.distance).collect();
        ds.dedup();
        assert_eq!(ds.len(), 4);
    }

    #[test]
    fn coincident_user_is_degenerate() {
        let g = build_wsa_geometry(&cfg(16, 4, 0.01, 0.001)).unwrap();
        let p = g.subarray_reference_positions[2];
        assert!(matches!(
            subarray_user_geometry(&g, &p),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn taylor_trivial_cases() {
        let t = taylor_distance(7.0, 0, 0, 0.3, 0.2, 0.1);
        assert_eq!(t.distance, 7.0);
        assert_eq!(t.delta, 0.0);
        for (kx, kz) in [(0, 1), (1, 0), (3, 3)] {
            assert_eq!(taylor_distance(7.0, kx, kz, 0.0, 0.2, 0.1).distance, 7.0);
        }
    }

    #[test]
    fn taylor_matches_exact_distance_far_away() {
        // 2×2 grid of subarrays 0.05 m apart, user 20 m from the first one
        let mut c = cfg(16, 4, 0.0495, 0.001);
        c.bs_height = 0.0;
        let g = build_wsa_geometry(&c).unwrap();
        assert!((g.reference_pitch - 0.05).abs() < 1e-15);
        let dir = Position::new(0.3, 0.9, -0.2).normalize();
        let user = dir * 20.0;
        let s = subarray_user_geometry(&g, &user).unwrap();
        for k in 0..4 {
            let (kx, kz) = g.subarray_grid_index(k);
            let t = taylor_distance(s[0].distance, kx, kz, g.reference_pitch, s[0].u_x, s[0].u_z);
            assert!(t.within_domain);
            assert!(((t.distance - s[k].distance) / s[k].distance).abs() < 1e-6);
            assert!((t.delta - (s[k].distance - s[0].distance)).abs() < 1e-6 * 20.0);
        }
    }

    #[test]
    fn taylor_flags_domain_breach() {
        let t = taylor_distance(0.01, 5, 5, 1.0, 0.0, 0.0);
        assert!(!t.within_domain);
        assert!(t.distance.is_finite());
    }

    #[test]
    fn spacing_formulas() {
        let p = max_subarray_spacing(4, 1024, 0.001, 1.0, SpacingFormula::Published).unwrap();
        assert!((p - 0.722107).abs() < 1e-6, "{p}");
        let n = 1024usize;
        let p = max_subarray_spacing(n, n, 0.001, 1.0, SpacingFormula::Published).unwrap();
        let expect = std::f64::consts::SQRT_2 / (2.0 * ((n as f64).sqrt() - 1.0));
        assert!((p - expect).abs() < 1e-15);
        let g = max_subarray_spacing(4, 1024, 0.001, 1.0, SpacingFormula::Geometric).unwrap();
        assert!((g - (std::f64::consts::SQRT_2 - 0.03) / 2.0).abs() < 1e-12);
        assert_eq!(
            max_subarray_spacing(1, 1024, 0.001, 1.0, SpacingFormula::Geometric),
            Err(Error::UndefinedSpacing)
        );
    }

    #[test]
    fn geometric_spacing_round_trips_to_the_limit() {
        for k in [4usize, 16, 64, 256] {
            let mut c = SystemConfig::table_defaults();
            c.aperture_limit = 1.0;
            let d = max_subarray_spacing_for(&c, k).unwrap();
            let g = build_wsa_geometry(&c.clone().with_subarrays(k, d)).unwrap();
            assert!((g.aperture - 1.0).abs() < 1e-9, "K={k}: {}", g.aperture);
        }
    }

    #[test]
    fn rayleigh_values() {
        assert_eq!(rayleigh_distance(0.0, 0.001), 0.0);
        assert!((rayleigh_distance(1.0, 0.001) - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn export_has_one_row_per_antenna() {
        let g = build_wsa_geometry(&cfg(16, 4, 0.01, 0.001)).unwrap();
        let t = g.export_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 17);
        assert!(lines[5].starts_with("4, 1, 1.05000000000e-2"));
    }
}
