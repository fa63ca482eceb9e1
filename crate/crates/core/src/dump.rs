//! Plain-text dumps of channels and beamformers.
//!
//! Every section starts with `# <name> <rows> <cols>` and lists the nonzero
//! and zero entries alike as `u, row, col, re, im` with nine significant
//! digits, so two dumps of the same design compare equal line by line.

use std::fmt::Write as _;

use crate::beamforming::BeamformerSet;
use crate::channel::ChannelRealization;
use crate::linalg::CMat;

fn section(out: &mut String, name: &str, u: usize, m: &CMat) {
    let _ = writeln!(out, "# {name} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let x = m[(r, c)];
            let _ = writeln!(out, "{u}, {r}, {c}, {:.8e}, {:.8e}", x.re, x.im);
        }
    }
}

/// Header line plus one `H` section per user.
pub fn dump_channels(realization: &ChannelRealization) -> String {
    let c = &realization.config;
    let mut out = format!(
        "# channels seed={} drop={} n_t={} n_r={} users={} subarrays={} d_s={:.8e}\n",
        realization.rng_seed,
        realization.drop_index,
        c.num_tx_antennas,
        c.num_rx_antennas,
        c.num_users,
        c.num_subarrays,
        c.subarray_spacing
    );
    for (u, h) in realization.channels.iter().enumerate() {
        section(&mut out, "H", u, h);
    }
    out
}

/// `FRF`, `FBB`, then `WRFu<u>`/`WBBu<u>` per user and the stream powers as a
/// one-column `P` section.
pub fn dump_beamformers(set: &BeamformerSet) -> String {
    let mut out = format!(
        "# beamformers users={} streams_per_user={} phase_shifters={}\n",
        set.num_users(),
        set.streams_per_user,
        set.phase_shifter_count()
    );
    section(&mut out, "FRF", 0, &set.f_rf);
    section(&mut out, "FBB", 0, &set.f_bb);
    for u in 0..set.num_users() {
        section(&mut out, &format!("WRFu{u}"), u, &set.w_rf[u]);
        section(&mut out, &format!("WBBu{u}"), u, &set.w_bb[u]);
    }
    let p = CMat::from_iterator(set.power.len(), 1, set.power.iter().map(|&x| x.into()));
    section(&mut out, "P", 0, &p);
    out
}
