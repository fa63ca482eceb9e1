//! Block diagonalization of the effective multi-user channel.

use crate::linalg::{null_space_basis, svd, CMat, RANK_TOLERANCE};
use crate::{Error, Result};

/// How many streams each user receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRule {
    /// Exactly this many per user; fewer available dimensions is an error.
    Fixed(usize),
    /// Every mode of the projected channel above the rank threshold.
    AllModes,
}

/// Per-user BD output. Precoder `u` lies in the common null space of every
/// other user's effective channel.
#[derive(Debug, Clone)]
pub struct BdOutput {
    /// `L_t × s_u`.
    pub f_bb: Vec<CMat>,
    /// `L_r × s_u`.
    pub w_bb: Vec<CMat>,
    /// Leading singular values of the projected channel, one per stream.
    pub gains: Vec<Vec<f64>>,
}

fn stack_others(effective: &[CMat], skip: usize) -> CMat {
    let cols = effective[0].ncols();
    let rows: usize = effective
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, h)| h.nrows())
        .sum();
    let mut out = CMat::zeros(rows, cols);
    let mut r = 0;
    for (i, h) in effective.iter().enumerate() {
        if i != skip {
            out.view_mut((r, 0), (h.nrows(), cols)).copy_from(h);
            r += h.nrows();
        }
    }
    out
}

/// `F_BB,u = V̂_u^{(0)} V_u^{(N_s)}`, `W_BB,u = U_u^{(N_s)}` for effective
/// channels `H̄_u` of shape `L_r × L_t`.
pub fn bd_digital(effective: &[CMat], rule: StreamRule) -> Result<BdOutput> {
    if effective.is_empty() {
        return Err(Error::config(
            "block diagonalization needs at least one user",
        ));
    }
    let width = effective[0].ncols();
    if effective.iter().any(|h| h.ncols() != width) {
        return Err(Error::Assembly("effective channels differ in width".into()));
    }
    let mut out = BdOutput {
        f_bb: Vec::with_capacity(effective.len()),
        w_bb: Vec::with_capacity(effective.len()),
        gains: Vec::with_capacity(effective.len()),
    };
    for (u, h) in effective.iter().enumerate() {
        let null = null_space_basis(&stack_others(effective, u))?;
        let projected = h * &null;
        let dec = svd(&projected)?;
        let streams = match rule {
            StreamRule::Fixed(n) => {
                if null.ncols() < n || dec.s.len() < n {
                    return Err(Error::RankDeficient {
                        user: u,
                        available: null.ncols().min(dec.s.len()),
                        required: n,
                    });
                }
                n
            }
            StreamRule::AllModes => {
                let scale = crate::linalg::singular_values(h)?
                    .first()
                    .copied()
                    .unwrap_or(0.0);
                dec.s
                    .iter()
                    .filter(|&&s| s > RANK_TOLERANCE * scale)
                    .count()
            }
        };
        out.f_bb.push(&null * dec.v.columns(0, streams));
        out.w_bb.push(dec.u.columns(0, streams).into_owned());
        out.gains.push(dec.s[..streams].to_vec());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn lcg(r: usize, c: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMat::from_fn(r, c, |_, _| Complex64::new(next(), next()))
    }

    #[test]
    fn single_user_is_plain_svd() {
        let h = lcg(2, 6, 1);
        let out = bd_digital(std::slice::from_ref(&h), StreamRule::Fixed(2)).unwrap();
        let dec = svd(&h).unwrap();
        assert!((out.gains[0][0] - dec.s[0]).abs() < 1e-12);
        let g = out.w_bb[0].adjoint() * &h * &out.f_bb[0];
        assert!((g[(0, 0)].norm() - dec.s[0]).abs() < 1e-12);
        assert!(g[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn two_users_are_nulled() {
        let hs = [lcg(2, 8, 2), lcg(2, 8, 3)];
        let out = bd_digital(&hs, StreamRule::Fixed(1)).unwrap();
        for (u, h) in hs.iter().enumerate() {
            let leak = (h * &out.f_bb[1 - u]).norm();
            assert!(leak < 1e-10, "{leak}");
        }
    }

    #[test]
    fn orthogonal_rows_keep_the_svd_precoder() {
        let mut a = CMat::zeros(1, 4);
        a[(0, 0)] = Complex64::new(2.0, 0.0);
        let mut b = CMat::zeros(1, 4);
        b[(0, 2)] = Complex64::new(0.0, 3.0);
        let out = bd_digital(&[a.clone(), b], StreamRule::Fixed(1)).unwrap();
        assert!((out.gains[0][0] - 2.0).abs() < 1e-12);
        assert!((out.f_bb[0][(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((out.gains[1][0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_null_space_is_rank_deficient() {
        let hs = [lcg(2, 4, 4), lcg(2, 4, 5), lcg(1, 4, 6)];
        match bd_digital(&hs, StreamRule::Fixed(1)) {
            Err(Error::RankDeficient {
                user,
                available,
                required,
            }) => {
                assert_eq!((user, available, required), (2, 0, 1));
            }
            other => panic!("{other:?}"),
        }
    }
}
