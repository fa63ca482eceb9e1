//! Acceptance run: one `PASS`/`FAIL` line per criterion.
//!
//! Runs without the libtest harness so the verdicts reach the terminal
//! uncaptured. The process fails if any criterion outside
//! `KNOWN_FAILURES` fails; known failures are still evaluated at their full
//! tolerance and reported as `FAIL`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use muwsa::archsearch::{
    is_non_decreasing, is_non_increasing, los_capacity, los_channel, spacing_grid, theorem_guard,
    RankMode, MONOTONE_SLACK,
};
use muwsa::beamforming::ao::{ao_analog_subconnected, AoOptions};
use muwsa::beamforming::benchmark::svd_phase_benchmark;
use muwsa::beamforming::svr::{svr_stage, DistanceModel};
use muwsa::beamforming::{complete_digital, waterfilling, AnalogStage};
use muwsa::channel::{realize, PlacementPolicy, ScenarioSpec};
use muwsa::evaluation::{
    all_user_se, interference_free_se, residual_interference, run_algorithms, run_experiment,
    Algorithm, HarnessOptions,
};
use muwsa::geometry::{build_wsa_geometry, max_subarray_spacing_for, Position};
use muwsa::SystemConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail with the default design choices; see the README.
const KNOWN_FAILURES: &[usize] = &[4];

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
    /// Context printed under the verdict.
    info: Vec<String>,
    /// Deterministic results table; `None` for wall-clock measurements.
    csv: Option<String>,
}

fn sector() -> ScenarioSpec {
    ScenarioSpec::two_d(PlacementPolicy::Sector {
        angle: 2.0 * PI / 3.0,
        r_min: 1.0,
        r_max: 20.0,
    })
}

fn wsa(config: SystemConfig, k: usize) -> SystemConfig {
    let d = max_subarray_spacing_for(&config, k).expect("spacing");
    config.with_subarrays(k, d)
}

fn c1() -> Outcome {
    let mut base = SystemConfig::table_defaults().with_users(1);
    base.num_rx_antennas = 64;
    base.num_paths = 1;
    let users = [Position::new(0.35, 40.0, 20.35)];
    let reference = spacing_grid(&base, 4, 20).unwrap();
    let mut csv = String::from("K, d_s_m, capacity_bpsHz\n");
    let mut pass = true;
    let mut notes = Vec::new();
    let mut equal_power_monotone = Vec::new();
    let mut flat = Vec::new();
    let mut top = Vec::new();
    for k in [1, 4, 16, 64, 256] {
        let grid = if k == 1 {
            reference.clone()
        } else {
            spacing_grid(&base, k, 20).unwrap()
        };
        let config = base
            .clone()
            .with_subarrays(k, if k == 1 { 0.0 } else { grid[0] });
        let diag = theorem_guard(&config, &users, &grid).unwrap();
        pass &= diag.distance_condition;
        let cap = &diag.capacity[0];
        for (d, c) in grid.iter().zip(cap) {
            let _ = writeln!(csv, "{k}, {d:.9e}, {c:.9e}");
        }
        if k == 1 {
            flat = cap.clone();
            pass &= cap.iter().all(|&c| c == cap[0]);
        } else {
            let mono = is_non_decreasing(cap, MONOTONE_SLACK);
            pass &= mono;
            if !mono {
                notes.push(format!("K={k} not monotone"));
            }
            top.push((k, cap[cap.len() - 1]));
            let equal: Vec<f64> = grid
                .iter()
                .map(|&d| {
                    let c = config.clone().with_subarrays(k, d);
                    let g = build_wsa_geometry(&c).unwrap();
                    let h = los_channel(&g, &users[0], &c).unwrap();
                    los_capacity(&h, c.total_power, c.noise_power, RankMode::Numerical).unwrap()
                })
                .collect();
            equal_power_monotone.push(format!(
                "K={k}:{}",
                is_non_decreasing(&equal, MONOTONE_SLACK)
            ));
        }
    }
    let compact = flat[0];
    for &(k, c) in &top {
        if c <= compact {
            pass = false;
            notes.push(format!("K={k} at max spacing {c:.3} <= K=1 {compact:.3}"));
        }
    }
    let layering: Vec<String> = top.iter().map(|(k, c)| format!("K={k} {c:.3}")).collect();
    Outcome {
        pass,
        detail: format!(
            "K=1 flat at {compact:.3}; max spacing {} bits/s/Hz{}",
            layering.join(", "),
            if notes.is_empty() {
                String::new()
            } else {
                format!("; {}", notes.join("; "))
            }
        ),
        info: vec![format!(
            "equal power over the numerical rank, non-decreasing per K: {}",
            equal_power_monotone.join(" ")
        )],
        csv: Some(csv),
    }
}

fn c2() -> Outcome {
    let mut csv = String::from(
        "seed, K, N_r, x, y, z, max_beta_gap, gram_first, gram_last, gram_non_increasing\n",
    );
    let mut beta_ok = 0;
    let mut gram_ok = 0;
    let trials = 100;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = [4, 16, 64][rng.gen_range(0..3)];
        let n_r = [16, 64][rng.gen_range(0..2)];
        let mut config = SystemConfig::table_defaults().with_users(1);
        config.num_rx_antennas = n_r;
        config.num_paths = 1;
        let grid = spacing_grid(&config, k, 10).unwrap();
        let config = config.with_subarrays(k, grid[0]);
        let az = rng.gen_range(-1.0..1.0);
        let mut r = rng.gen_range(1.0..3.0)
            * muwsa::archsearch::monotonicity_threshold(n_r, config.aperture_limit);
        let z = config.bs_height + rng.gen_range(-2.0..2.0);
        let (user, diag) = loop {
            let user = Position::new(0.5 + r * f64::sin(az), r * f64::cos(az), z);
            let diag = theorem_guard(&config, &[user], &grid).unwrap();
            if diag.distance_condition {
                break (user, diag);
            }
            r *= 1.25;
        };
        let beta = diag.max_beta_gaps[0];
        let gram = &diag.gram_deviation[0];
        let mono = is_non_increasing(gram, MONOTONE_SLACK);
        beta_ok += usize::from(diag.beta_bound_holds == Some(true));
        gram_ok += usize::from(mono);
        let _ = writeln!(
            csv,
            "{seed}, {k}, {n_r}, {:.9e}, {:.9e}, {:.9e}, {beta:.9e}, {:.9e}, {:.9e}, {mono}",
            user.x,
            user.y,
            user.z,
            gram[0],
            gram[gram.len() - 1]
        );
    }
    Outcome {
        pass: beta_ok == trials as usize && gram_ok == trials as usize,
        detail: format!(
            "beta gap <= pi in {beta_ok}/{trials}, gram non-increasing in {gram_ok}/{trials}"
        ),
        info: Vec::new(),
        csv: Some(csv),
    }
}

fn c3() -> Outcome {
    let mut config = SystemConfig::table_defaults().with_users(4);
    config.num_tx_antennas = 256;
    let scenario = sector();
    let mut csv = String::from("drop, stage, max_leakage, se, interference_free_se\n");
    let mut worst_leak: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut errors = 0;
    for d in 0..200u64 {
        let r = realize(&config, &scenario, SEED, d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(d);
        let stages: [(&str, muwsa::Result<AnalogStage>); 3] = [
            ("SVR", svr_stage(&r, DistanceModel::Taylor)),
            ("SVD-phase", svd_phase_benchmark(&r.channels, &config)),
            (
                "AO",
                ao_analog_subconnected(&r.channels, &config, AoOptions::default(), &mut rng)
                    .map(|o| o.stage),
            ),
        ];
        for (name, stage) in stages {
            let Ok(set) = stage.and_then(|s| complete_digital(&r.channels, s, &config)) else {
                errors += 1;
                continue;
            };
            let leak = residual_interference(&r.channels, &set)
                .iter()
                .enumerate()
                .flat_map(|(u, row)| {
                    row.iter()
                        .enumerate()
                        .filter(move |(i, _)| *i != u)
                        .map(|(_, &x)| x)
                })
                .fold(0.0, f64::max);
            let se: f64 = all_user_se(&r.channels, &set, config.noise_power)
                .unwrap()
                .iter()
                .sum();
            let free = interference_free_se(&set, config.noise_power);
            worst_leak = worst_leak.max(leak);
            worst_gap = worst_gap.max((se - free).abs());
            let _ = writeln!(csv, "{d}, {name}, {leak:.3e}, {se:.9e}, {free:.9e}");
        }
    }
    Outcome {
        pass: errors == 0 && worst_leak <= 1e-9 && worst_gap <= 1e-6,
        detail: format!(
            "600 designs, {errors} errors; worst relative leakage {worst_leak:.2e}, worst |SE - interference-free| {worst_gap:.2e}"
        ),
        info: Vec::new(),
        csv: Some(csv),
    }
}

fn c4() -> Outcome {
    let config = wsa(SystemConfig::table_defaults(), 4);
    let scenario = sector();
    let drops = 50;
    let algorithms = [Algorithm::SvrFc, Algorithm::AoSc, Algorithm::FdBound];
    let reports = run_algorithms(
        &config,
        &scenario,
        &algorithms,
        drops,
        SEED,
        &HarnessOptions::default(),
    )
    .unwrap();
    let mut csv = String::from("algo, drop, sum_se\n");
    let mut failures = 0;
    for r in &reports {
        failures += r.failures.len();
        for d in &r.drops {
            let _ = writeln!(
                csv,
                "{}, {}, {:.9e}",
                r.algorithm.name(),
                d.drop_index,
                d.sum_se
            );
        }
    }
    let (svr, ao, fd) = (
        reports[0].sum_se.mean,
        reports[1].sum_se.mean,
        reports[2].sum_se.mean,
    );
    let exact = run_experiment(
        &config,
        &scenario,
        Algorithm::SvrFc,
        drops,
        SEED,
        &HarnessOptions {
            svr_distance: DistanceModel::Exact,
            ..Default::default()
        },
    )
    .unwrap();
    Outcome {
        pass: failures == 0 && svr >= 0.90 * fd && ao >= 0.75 * svr,
        detail: format!(
            "K=4, {drops} drops, {failures} failed: SVR-FC {svr:.2}, AO-SC {ao:.2}, FD bound {fd:.2}; \
             SVR/FD {:.3} (need >= 0.90), AO/SVR {:.3} (need >= 0.75)",
            svr / fd,
            ao / svr
        ),
        info: vec![format!(
            "SVR-FC with exact subarray distances {:.2} bits/s/Hz, {:.3} of the FD bound",
            exact.sum_se.mean,
            exact.sum_se.mean / fd
        )],
        csv: Some(csv),
    }
}

fn c5() -> Outcome {
    let config = SystemConfig::table_defaults().with_users(4);
    let distances: Vec<f64> = (0..10).map(|i| 60f64.powf(i as f64 / 9.0)).collect();
    let drops = 8;
    let ub = |c: &SystemConfig, placement: PlacementPolicy| {
        let r = run_experiment(
            c,
            &ScenarioSpec::two_d(placement),
            Algorithm::CapacityUb,
            drops,
            SEED,
            &HarnessOptions::default(),
        )
        .unwrap();
        assert!(
            r.failures.is_empty(),
            "capacity-UB failed: {:?}",
            r.failures
        );
        r.sum_se.mean
    };
    let compact = config.clone().with_subarrays(1, 0.0);
    let wide = wsa(config, 4);
    let mut csv = String::from("D_m, compact_same, wsa_same, compact_distinct, wsa_distinct\n");
    let mut collapse = 0;
    let mut separated = 0;
    let mut worst: f64 = 0.0;
    for &d in &distances {
        let ranges: Vec<f64> = (0..4).map(|i| d * (1.0 + 0.3 * i as f64)).collect();
        let same = || PlacementPolicy::SameAzimuthLine {
            azimuth: 0.3,
            ranges: ranges.clone(),
        };
        let distinct = || PlacementPolicy::DistinctAzimuths {
            span: 2.0,
            ranges: ranges.clone(),
        };
        let (cs, ws) = (ub(&compact, same()), ub(&wide, same()));
        let (cd, wd) = (ub(&compact, distinct()), ub(&wide, distinct()));
        let _ = writeln!(csv, "{d:.9e}, {cs:.9e}, {ws:.9e}, {cd:.9e}, {wd:.9e}");
        if cs < 0.5 * cd {
            collapse += 1;
            separated += usize::from(ws >= 2.0 * cs);
        }
        worst = worst.max((wd / cd - 1.0).abs());
    }
    Outcome {
        pass: collapse > 0 && 2 * separated >= collapse && worst <= 0.10,
        detail: format!(
            "compact collapses at {collapse}/10 distances, WSA >= 2x there at {separated}; \
             distinct azimuths worst |WSA/compact - 1| = {worst:.3}"
        ),
        info: Vec::new(),
        csv: Some(csv),
    }
}

fn c6() -> Outcome {
    let config = wsa(SystemConfig::table_defaults(), 4);
    let algorithms = [Algorithm::AoSc, Algorithm::SvrFc, Algorithm::SvdPhaseFc];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let reports = pool
        .install(|| {
            run_algorithms(
                &config,
                &sector(),
                &algorithms,
                5,
                SEED,
                &HarnessOptions::default(),
            )
        })
        .unwrap();
    let analog: Vec<f64> = reports.iter().map(|r| r.analog_time.mean).collect();
    let total: Vec<f64> = reports
        .iter()
        .map(|r| r.analog_time.mean + r.digital_time.mean)
        .collect();
    let ratio = analog[1] / analog[2];
    Outcome {
        pass: ratio <= 0.5 && total[0] > total[1] && total[0] > total[2],
        detail: format!(
            "analog stage AO {:.4} s, SVR {:.4} s, SVD-phase {:.4} s; SVR/SVD-phase {ratio:.3}; \
             totals AO {:.4} s, SVR {:.4} s, SVD-phase {:.4} s",
            analog[0], analog[1], analog[2], total[0], total[1], total[2]
        ),
        info: Vec::new(),
        csv: None,
    }
}

/// Every active set, kept when it satisfies the KKT conditions.
fn kkt_oracle(gains: &[f64], total: f64, noise: f64) -> Vec<f64> {
    let n = gains.len();
    let floor: Vec<f64> = gains.iter().map(|g| noise / (g * g)).collect();
    for mask in 1u32..(1 << n) {
        let on: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mu = (total + on.iter().map(|&i| floor[i]).sum::<f64>()) / on.len() as f64;
        let inside = on.iter().all(|&i| mu > floor[i]);
        let outside = (0..n)
            .filter(|i| mask >> i & 1 == 0)
            .all(|j| floor[j] >= mu);
        if inside && outside {
            return (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        mu - floor[i]
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }
    unreachable!("some active set satisfies the KKT conditions")
}

fn c7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut csv = String::from("trial, n, max_abs_error\n");
    let mut worst: f64 = 0.0;
    for t in 0..1000 {
        let n = rng.gen_range(1..=12);
        let gains: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.gen_range(-3.0..0.0)))
            .collect();
        let total = 10f64.powf(rng.gen_range(-1.0..1.0));
        let noise = 10f64.powf(rng.gen_range(-4.0..0.0));
        let got = waterfilling(&gains, total, noise).unwrap();
        let want = kkt_oracle(&gains, total, noise);
        let err = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        let _ = writeln!(csv, "{t}, {n}, {err:.3e}");
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("1000 trials, worst |p - p_kkt| = {worst:.2e}"),
        info: Vec::new(),
        csv: Some(csv),
    }
}

type Criterion = (usize, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, c1, Duration::from_secs(300)),
        (2, c2, Duration::from_secs(120)),
        (3, c3, Duration::from_secs(120)),
        (4, c4, Duration::from_secs(1800)),
        (5, c5, Duration::from_secs(300)),
        (6, c6, Duration::from_secs(300)),
        (7, c7, Duration::from_secs(60)),
    ];
    let mut unexpected = Vec::new();
    let mut report = |id: usize, pass: bool, detail: &str| {
        let known = KNOWN_FAILURES.contains(&id);
        println!(
            "criterion {id}: {}{} {detail}",
            if pass { "PASS" } else { "FAIL" },
            if !pass && known { " (known)" } else { "" }
        );
        if !pass && !known {
            unexpected.push(id);
        }
    };
    let mut tables = Vec::new();
    for (id, run, limit) in criteria {
        let t = Instant::now();
        let o = run();
        let elapsed = t.elapsed();
        let within = elapsed <= limit;
        report(
            id,
            o.pass && within,
            &format!(
                "[{:.1} s of {} s] {}",
                elapsed.as_secs_f64(),
                limit.as_secs(),
                o.detail
            ),
        );
        for line in &o.info {
            println!("    info: {line}");
        }
        if let Some(csv) = o.csv {
            tables.push((id, run, csv));
        }
    }
    let mut differing = Vec::new();
    for (id, run, first) in &tables {
        if run().csv.as_ref() != Some(first) {
            differing.push(id.to_string());
        }
    }
    let ids: Vec<String> = tables.iter().map(|t| t.0.to_string()).collect();
    report(
        8,
        differing.is_empty(),
        &format!(
            "reran criteria {} with seed {SEED}: {}",
            ids.join(", "),
            if differing.is_empty() {
                "tables byte-identical".to_string()
            } else {
                format!("tables differ for {}", differing.join(", "))
            }
        ),
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
