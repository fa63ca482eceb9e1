//! Execution of an [`ExperimentSpec`].

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use muwsa::archsearch::{
    is_non_decreasing, los_capacity, los_channel, search_architecture, spacing_grid, theorem_guard,
    RankMode, MONOTONE_SLACK,
};
use muwsa::beamforming::svr::svr_stage;
use muwsa::channel::realize;
use muwsa::evaluation::{beam_pattern, run_algorithms, Algorithm, ExperimentReport};
use muwsa::geometry::{build_wsa_geometry, Position};
use muwsa::SystemConfig;

use crate::spec::{ExperimentKind, ExperimentSpec};

/// Command-line overrides of a spec.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub drops: Option<usize>,
    /// Directory receiving the CSV files.
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(d) = self.drops {
            spec.drops = d;
        }
        if let Some(dir) = &self.out_dir {
            let name = spec.output_path();
            let name = name.file_name().map(PathBuf::from).unwrap_or(name);
            spec.output = Some(dir.join(name));
        }
    }
}

/// Files written and the number of failed Monte-Carlo drops.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failed_drops: usize,
}

fn write_csv(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("output: cannot create directory {}", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("output: cannot write {}", path.display()))
}

/// Fails early when the output location is not writable.
fn check_output(path: &Path) -> anyhow::Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("output: cannot create directory {}", dir.display()))?;
    let probe = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("output: directory {} is not writable", dir.display()))?;
    drop(probe);
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// Validates and runs `spec`, writing one line per sweep point to `log`.
pub fn run(spec: &ExperimentSpec, log: &mut dyn Write) -> anyhow::Result<RunOutcome> {
    let findings = spec.validate();
    if !findings.is_empty() {
        return Err(anyhow!("invalid spec:\n  {}", findings.join("\n  ")));
    }
    let out = spec.output_path();
    check_output(&out)?;
    match spec.kind {
        ExperimentKind::DsSweep => ds_sweep(spec, &out, log),
        ExperimentKind::ArchSearch => arch_search(spec, &out, log),
        ExperimentKind::PowerSweep
        | ExperimentKind::AntennaSweep
        | ExperimentKind::UserSweep
        | ExperimentKind::DistanceSweep => se_sweep(spec, &out, log),
        ExperimentKind::Beampattern => beampattern(spec, &out, log),
        ExperimentKind::BenchTiming => bench_timing(spec, &out, log),
    }
}

/// User positions of drop 0.
fn users_of(spec: &ExperimentSpec, config: &SystemConfig) -> anyhow::Result<Vec<Position>> {
    Ok(realize(config, &spec.scenario, spec.seed, 0)?
        .placement
        .positions)
}

fn ds_sweep(spec: &ExperimentSpec, out: &Path, log: &mut dyn Write) -> anyhow::Result<RunOutcome> {
    let base = spec.system_config()?;
    let users = users_of(spec, &base)?;
    let mut csv = String::from(
        "K, d_s_m, d_s_lambda, user, capacity_bpsHz, capacity_equal_power_bpsHz, gram_deviation\n",
    );
    let ks = spec.architectures();
    let reference_grid = ks
        .iter()
        .find(|&&k| k > 1)
        .map(|&k| spacing_grid(&base, k, spec.sweep.points))
        .transpose()?
        .unwrap_or_else(|| vec![0.0]);
    let lambda = base.wavelength();
    for &k in &ks {
        let grid = if k == 1 {
            reference_grid.clone()
        } else {
            spacing_grid(&base, k, spec.sweep.points)?
        };
        let config = spec.with_architecture(&base, k)?;
        let diag = theorem_guard(&config, &users, &grid)?;
        for (i, &d_s) in grid.iter().enumerate() {
            let c = config
                .clone()
                .with_subarrays(k, if k == 1 { 0.0 } else { d_s });
            let g = build_wsa_geometry(&c)?;
            for (u, p) in users.iter().enumerate() {
                let h = los_channel(&g, p, &c)?;
                let equal = los_capacity(&h, c.total_power, c.noise_power, RankMode::Numerical)?;
                let _ = writeln!(
                    csv,
                    "{k}, {d_s:.9e}, {:.9e}, {u}, {:.9e}, {equal:.9e}, {:.9e}",
                    d_s / lambda,
                    diag.capacity[u][i],
                    diag.gram_deviation[u][i]
                );
            }
        }
        let monotone = diag
            .capacity
            .iter()
            .all(|c| is_non_decreasing(c, MONOTONE_SLACK));
        let last: Vec<String> = diag
            .capacity
            .iter()
            .map(|c| format!("{:.3}", c[c.len() - 1]))
            .collect();
        writeln!(
            log,
            "K={k}: capacity at largest spacing [{}] bits/s/Hz, non-decreasing={monotone}, distance condition={}",
            last.join(", "),
            diag.distance_condition
        )?;
    }
    write_csv(out, &csv)?;
    Ok(RunOutcome {
        files: vec![out.to_path_buf()],
        failed_drops: 0,
    })
}

fn arch_search(
    spec: &ExperimentSpec,
    out: &Path,
    log: &mut dyn Write,
) -> anyhow::Result<RunOutcome> {
    let base = spec.system_config()?;
    let users = users_of(spec, &base)?;
    let report = search_architecture(&base, &users, &spec.architectures())?;
    for c in &report.candidates {
        writeln!(
            log,
            "K={}: d_s = {:.4} m, mean LoS capacity {:.3} bits/s/Hz",
            c.num_subarrays, c.subarray_spacing, c.capacity
        )?;
    }
    writeln!(
        log,
        "selected K={} at d_s = {:.4} m",
        report.best.num_subarrays, report.best.subarray_spacing
    )?;
    write_csv(out, &report.to_table())?;
    Ok(RunOutcome {
        files: vec![out.to_path_buf()],
        failed_drops: 0,
    })
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

fn se_sweep(spec: &ExperimentSpec, out: &Path, log: &mut dyn Write) -> anyhow::Result<RunOutcome> {
    let algorithms = spec.algorithms()?;
    let options = spec.harness_options();
    let mut csv = format!(
        "{}, algo, mean_sumSE, std_sumSE, K, d_s_m, drops, failed_drops\n",
        spec.axis_name()
    );
    let mut failed = 0;
    for &v in &spec.sweep.values {
        for k in spec.architectures() {
            let (config, scenario) = spec.point(v, k)?;
            let reports = run_algorithms(
                &config,
                &scenario,
                &algorithms,
                spec.drops,
                spec.seed,
                &options,
            )?;
            let mut summary = Vec::new();
            for r in &reports {
                failed += r.failures.len();
                let _ = writeln!(
                    csv,
                    "{}, {}, {:.9e}, {:.9e}, {k}, {:.9e}, {}, {}",
                    format_value(v),
                    r.algorithm.name(),
                    r.sum_se.mean,
                    r.sum_se.std(),
                    config.subarray_spacing,
                    r.drops.len(),
                    r.failures.len()
                );
                summary.push(format!("{} {:.2}", r.algorithm.name(), r.sum_se.mean));
                for (d, e) in &r.failures {
                    log::warn!("{} drop {d} failed: {e}", r.algorithm.name());
                }
            }
            writeln!(
                log,
                "{} = {} K={k}: {}",
                spec.axis_name(),
                format_value(v),
                summary.join(", ")
            )?;
        }
    }
    write_csv(out, &csv)?;
    Ok(RunOutcome {
        files: vec![out.to_path_buf()],
        failed_drops: failed,
    })
}

fn beampattern(
    spec: &ExperimentSpec,
    out: &Path,
    log: &mut dyn Write,
) -> anyhow::Result<RunOutcome> {
    let base = spec.system_config()?;
    let grid = spec.grid.to_grid();
    let mut files = Vec::new();
    for k in spec.architectures() {
        let config = spec.with_architecture(&base, k)?;
        let realization = realize(&config, &spec.scenario, spec.seed, 0)?;
        let stage = svr_stage(&realization, spec.harness_options().svr_distance)?;
        for u in 0..realization.num_users() {
            let column = stage.f_rf.column(u).into_owned();
            let pattern = beam_pattern(&realization.geometry, &column, &grid)?;
            let (a, r) = pattern.argmax();
            let target = realization.placement.positions[u];
            let origin = realization.geometry.subarray_reference_positions[0];
            let dx = target.x - origin.x;
            writeln!(
                log,
                "K={k} user {u}: target az {:.4} rad, range {:.3} m; peak az {:.4} rad, range {:.3} m",
                dx.atan2(target.y),
                dx.hypot(target.y),
                pattern.azimuths[a],
                pattern.ranges[r]
            )?;
            let path = sibling(out, &format!("K{k}_u{u}"));
            write_csv(&path, &pattern.to_csv())?;
            files.push(path);
        }
    }
    Ok(RunOutcome {
        files,
        failed_drops: 0,
    })
}

fn bench_timing(
    spec: &ExperimentSpec,
    out: &Path,
    log: &mut dyn Write,
) -> anyhow::Result<RunOutcome> {
    let algorithms = spec.algorithms()?;
    let mut csv = String::from("algo, K, analog_s_mean, analog_s_std, digital_s_mean, digital_s_std, drops, failed_drops\n");
    let mut failed = 0;
    for k in spec.architectures() {
        let (config, scenario) = spec.point(0.0, k)?;
        // drops run one after another so the timings are not inflated by
        // contention between workers
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
        let reports: Vec<ExperimentReport> = pool.install(|| {
            run_algorithms(
                &config,
                &scenario,
                &algorithms,
                spec.drops,
                spec.seed,
                &spec.harness_options(),
            )
        })?;
        for r in &reports {
            failed += r.failures.len();
            let _ = writeln!(
                csv,
                "{}, {k}, {:.6e}, {:.6e}, {:.6e}, {:.6e}, {}, {}",
                r.algorithm.name(),
                r.analog_time.mean,
                r.analog_time.std(),
                r.digital_time.mean,
                r.digital_time.std(),
                r.drops.len(),
                r.failures.len()
            );
            writeln!(
                log,
                "K={k} {}: analog {:.4} s, digital {:.4} s",
                r.algorithm.name(),
                r.analog_time.mean,
                r.digital_time.mean
            )?;
        }
        let analog = |a: Algorithm| {
            reports
                .iter()
                .find(|r| r.algorithm == a)
                .map(|r| r.analog_time.mean)
        };
        if let (Some(svr), Some(svd)) = (analog(Algorithm::SvrFc), analog(Algorithm::SvdPhaseFc)) {
            writeln!(
                log,
                "K={k}: SVR / SVD-phase analog time ratio {:.3}",
                svr / svd
            )?;
        }
    }
    write_csv(out, &csv)?;
    Ok(RunOutcome {
        files: vec![out.to_path_buf()],
        failed_drops: failed,
    })
}

/// Antenna table of the spec's system.
pub fn geometry_table(spec: &ExperimentSpec) -> anyhow::Result<String> {
    let config = spec.system_config()?;
    let findings = config.findings();
    if !findings.is_empty() {
        return Err(anyhow!("invalid spec:\n  {}", findings.join("\n  ")));
    }
    Ok(build_wsa_geometry(&config)?.export_table())
}
