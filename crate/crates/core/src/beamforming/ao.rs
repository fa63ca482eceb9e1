//! Alternating optimization of the sub-connected analog stage.
//!
//! With every other block fixed, the best unconstrained block `F_j` spans the
//! leading right singular vectors of `X_j`; with `F_RF` fixed, the combiner
//! of user `u` is moved to the leading eigenvectors of
//! `D_u = H_u F_RF F_RF^H H_u^H` unless that lowers the objective. Both steps are repeated until the objective
//! `log2 det(I + σ⁻² F_RF^H A F_RF)` settles, then projected onto the
//! constant-modulus set.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::{constant_modulus_projection, AnalogStage, ConnectionMode};
use crate::config::SystemConfig;
use crate::linalg::{block_diag, log2_det_hpd, svd, CMat};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoOptions {
    pub max_iters: usize,
    /// Relative objective change below which the iteration stops.
    pub tol: f64,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            max_iters: 10,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AoOutput {
    /// Constant-modulus result.
    pub stage: AnalogStage,
    /// Blocks and combiners before the final projection.
    pub unconstrained_blocks: Vec<CMat>,
    pub unconstrained_combiners: Vec<CMat>,
    /// Objective after initialization and after every block update and
    /// combiner update, in order.
    pub objective_trace: Vec<f64>,
    /// Objective at the end of each full iteration.
    pub iteration_objective: Vec<f64>,
}

fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    let m = CMat::from_fn(rows, cols, |_, _| {
        Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))
    });
    m.qr().q()
}

/// `[G_1 F_1, …, G_K F_K]` for `G = W^H H`, shape `U L_r × L_t`.
fn product(g: &CMat, blocks: &[CMat], width: usize) -> CMat {
    let lt = blocks[0].ncols();
    let mut out = CMat::zeros(g.nrows(), lt * blocks.len());
    for (j, f) in blocks.iter().enumerate() {
        let gj = g.columns(j * width, width);
        out.columns_mut(j * lt, lt).copy_from(&(gj * f));
    }
    out
}

fn objective(gf: &CMat, noise_power: f64) -> Result<f64> {
    let mut m = gf.adjoint() * gf / Complex64::new(noise_power, 0.0);
    for i in 0..m.nrows() {
        m[(i, i)] += Complex64::new(1.0, 0.0);
    }
    log2_det_hpd(&m)
}

fn stacked_g(channels: &[CMat], w: &[CMat]) -> CMat {
    let rows: usize = w.iter().map(|x| x.ncols()).sum();
    let mut g = CMat::zeros(rows, channels[0].ncols());
    let mut r = 0;
    for (h, wu) in channels.iter().zip(w) {
        g.rows_mut(r, wu.ncols()).copy_from(&(wu.adjoint() * h));
        r += wu.ncols();
    }
    g
}

/// `(σ² I + T T^H)⁻¹` through a Cholesky factor, with a small ridge when the
/// factorization fails.
fn whitening_factor(t: &CMat, noise_power: f64) -> CMat {
    let n = t.nrows();
    let mut m = t * t.adjoint();
    for i in 0..n {
        m[(i, i)] += Complex64::new(noise_power, 0.0);
    }
    let chol = m.clone().cholesky().or_else(|| {
        let trace: f64 = (0..n).map(|i| m[(i, i)].re).sum();
        log::warn!("block update matrix is numerically singular; adding a ridge");
        let mut r = m.clone();
        for i in 0..n {
            r[(i, i)] += Complex64::new(1e-12 * trace, 0.0);
        }
        r.cholesky()
    });
    match chol {
        Some(c) => c.l(),
        None => CMat::identity(n, n),
    }
}

/// Best unconstrained block `j` with the other blocks and the combiners
/// fixed: the top right singular vectors of `X_j`, where
/// `X_j = σ² G_j^H (σ² I + T T^H)⁻¹ G_j = S^H S` and `T` collects
/// `G_i F_i` for `i ≠ j`.
fn update_block(g: &CMat, blocks: &[CMat], j: usize, width: usize, sigma2: f64) -> Result<CMat> {
    let lt = blocks[0].ncols();
    let mut t = CMat::zeros(g.nrows(), lt * (blocks.len() - 1));
    let mut c = 0;
    for (i, f) in blocks.iter().enumerate() {
        if i != j {
            t.columns_mut(c, lt)
                .copy_from(&(g.columns(i * width, width) * f));
            c += lt;
        }
    }
    let l = whitening_factor(&t, sigma2);
    let gj = g.columns(j * width, width).into_owned();
    let s = l
        .solve_lower_triangular(&gj)
        .ok_or_else(|| Error::Linalg("triangular solve failed".into()))?;
    let dec = svd(&s)?;
    if dec.v.ncols() < lt {
        return Err(Error::Linalg(
            "block update has too few singular vectors".into(),
        ));
    }
    Ok(dec.v.columns(0, lt).into_owned())
}

/// Runs the alternating optimization for `config.num_subarrays` blocks.
pub fn ao_analog_subconnected(
    channels: &[CMat],
    config: &SystemConfig,
    options: AoOptions,
    rng: &mut impl Rng,
) -> Result<AoOutput> {
    let k = config.num_subarrays;
    let (n_t, l_t, l_r) = (
        config.num_tx_antennas,
        config.tx_rf_chains,
        config.rx_rf_chains,
    );
    if k == 0 || l_t % k != 0 || n_t % k != 0 {
        return Err(Error::config(format!(
            "tx_rf_chains: sub-connected design needs K | L_t and K | N_t, got K = {k}, L_t = {l_t}, N_t = {n_t}"
        )));
    }
    if channels.is_empty() || channels.iter().any(|h| h.ncols() != n_t) {
        return Err(Error::config("channels must be non-empty with N_t columns"));
    }
    let width = n_t / k;
    let lt = l_t / k;
    if lt > width {
        return Err(Error::config(
            "tx_rf_chains: more RF chains per subarray than antennas",
        ));
    }
    let sigma2 = config.noise_power;

    let mut blocks: Vec<CMat> = (0..k).map(|_| random_orthonormal(width, lt, rng)).collect();
    let mut w: Vec<CMat> = channels
        .iter()
        .map(|h| random_orthonormal(h.nrows(), l_r, rng))
        .collect();

    let mut g = stacked_g(channels, &w);
    let mut trace = vec![objective(&product(&g, &blocks, width), sigma2)?];
    let mut per_iteration = Vec::new();
    let mut previous = trace[0];
    for _ in 0..options.max_iters {
        for j in 0..k {
            blocks[j] = update_block(&g, &blocks, j, width, sigma2)?;
            trace.push(objective(&product(&g, &blocks, width), sigma2)?);
        }
        let before = *trace.last().expect("trace starts non-empty");
        let mut candidate = w.clone();
        for (u, h) in channels.iter().enumerate() {
            let mut y = CMat::zeros(h.nrows(), l_t);
            for (j, f) in blocks.iter().enumerate() {
                y.columns_mut(j * lt, lt)
                    .copy_from(&(h.columns(j * width, width) * f));
            }
            let dec = svd(&y)?;
            let mut wu = CMat::zeros(h.nrows(), l_r);
            let avail = dec.u.ncols().min(l_r);
            wu.columns_mut(0, avail).copy_from(&dec.u.columns(0, avail));
            candidate[u] = wu;
        }
        // the per-user rule does not always raise the joint objective; keep
        // the old combiners when it would lower it
        let g_new = stacked_g(channels, &candidate);
        let mut current = objective(&product(&g_new, &blocks, width), sigma2)?;
        if current >= before {
            w = candidate;
            g = g_new;
        } else {
            log::debug!("combiner update rejected ({current} < {before})");
            current = before;
        }
        trace.push(current);
        per_iteration.push(current);
        let change = (current - previous).abs() / previous.abs().max(f64::MIN_POSITIVE);
        previous = current;
        if change < options.tol {
            break;
        }
    }

    let f_mod = 1.0 / (width as f64).sqrt();
    let w_mod = 1.0 / (config.num_rx_antennas as f64).sqrt();
    let projected: Vec<CMat> = blocks
        .iter()
        .map(|b| constant_modulus_projection(b, f_mod))
        .collect();
    let stage = AnalogStage {
        f_rf: block_diag(&projected),
        w_rf: w
            .iter()
            .map(|x| constant_modulus_projection(x, w_mod))
            .collect(),
        mode: ConnectionMode::SubConnected { subarrays: k },
    };
    Ok(AoOutput {
        stage,
        unconstrained_blocks: blocks,
        unconstrained_combiners: w,
        objective_trace: trace,
        iteration_objective: per_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(r: usize, c: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(r, c, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn config(n_t: usize, n_r: usize, k: usize, users: usize) -> SystemConfig {
        let mut c = SystemConfig::table_defaults()
            .with_users(users)
            .with_subarrays(k, 0.0);
        c.num_tx_antennas = n_t;
        c.num_rx_antennas = n_r;
        c.noise_power = 1.0;
        c
    }

    #[test]
    fn objective_never_decreases_before_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let c = config(64, 16, 4, 4);
            let hs: Vec<CMat> = (0..4).map(|_| gaussian(16, 64, &mut rng)).collect();
            let out = ao_analog_subconnected(&hs, &c, AoOptions::default(), &mut rng).unwrap();
            for w in out.objective_trace.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-9 * w[0].abs(),
                    "{:?}",
                    out.objective_trace
                );
            }
        }
    }

    #[test]
    fn projected_moduli_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = config(64, 4, 4, 4);
        let hs: Vec<CMat> = (0..4).map(|_| gaussian(4, 64, &mut rng)).collect();
        let out = ao_analog_subconnected(&hs, &c, AoOptions::default(), &mut rng).unwrap();
        let f = &out.stage.f_rf;
        for j in 0..4 {
            for r in 0..64 {
                let x = f[(r, j)];
                if r / 16 == j {
                    assert!((x.norm() - 0.25).abs() < 1e-15);
                } else {
                    assert_eq!(x, Complex64::new(0.0, 0.0));
                }
            }
        }
        for w in &out.stage.w_rf {
            assert!(w.iter().all(|x| (x.norm() - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn single_block_spans_top_singular_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = gaussian(6, 16, &mut rng);
        let start = random_orthonormal(16, 2, &mut rng);
        let f = update_block(&g, &[start], 0, 16, 0.3).unwrap();
        let top = svd(&g).unwrap().v.columns(0, 2).into_owned();
        // equal projectors ⇔ same subspace
        let diff = &f * f.adjoint() - &top * top.adjoint();
        assert!(diff.norm() < 1e-10);
    }

    #[test]
    fn rf_chains_must_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = config(64, 4, 4, 3);
        let hs: Vec<CMat> = (0..3).map(|_| gaussian(4, 64, &mut rng)).collect();
        assert!(matches!(
            ao_analog_subconnected(&hs, &c, AoOptions::default(), &mut rng),
            Err(Error::Config(_))
        ));
    }
}
