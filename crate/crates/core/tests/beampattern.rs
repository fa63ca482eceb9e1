use muwsa::beamforming::svr::{svr_stage, DistanceModel};
use muwsa::channel::{realize, PlacementPolicy, ScenarioSpec};
use muwsa::evaluation::{beam_pattern, grid_point, GridSpec};
use muwsa::geometry::max_subarray_spacing_for;
use muwsa::SystemConfig;

// Users on cells of the default grid: azimuth index 107, range indices
// 23, 53, 76, 96.
fn scenario(grid: &GridSpec) -> ScenarioSpec {
    ScenarioSpec::two_d(PlacementPolicy::SameAzimuthLine {
        azimuth: grid.azimuths[107],
        ranges: [23, 53, 76, 96].map(|j| grid.ranges[j]).to_vec(),
    })
}

fn config(k: usize) -> SystemConfig {
    let mut c = SystemConfig::table_defaults().with_users(4);
    c.num_paths = 1;
    let d = if k == 1 {
        0.0
    } else {
        max_subarray_spacing_for(&c, k).unwrap()
    };
    c.with_subarrays(k, d)
}

#[test]
fn users_sit_on_grid_cells() {
    let grid = GridSpec::default();
    let r = realize(&config(4), &scenario(&grid), 1, 0).unwrap();
    for (u, j) in [23, 53, 76, 96].into_iter().enumerate() {
        let p = grid_point(&r.geometry, grid.azimuths[107], grid.ranges[j], None);
        assert!((p - r.placement.positions[u]).norm() < 1e-9);
    }
}

#[test]
fn wsa_focuses_on_angle_and_range() {
    let grid = GridSpec::default();
    let r = realize(&config(4), &scenario(&grid), 1, 0).unwrap();
    let stage = svr_stage(&r, DistanceModel::Taylor).unwrap();
    for (u, j) in [23usize, 53, 76, 96].into_iter().enumerate() {
        let pattern = beam_pattern(&r.geometry, &stage.f_rf.column(u).into_owned(), &grid).unwrap();
        let (a, k) = pattern.argmax();
        assert!(
            a.abs_diff(107) <= 1 && k.abs_diff(j) <= 1,
            "user {u}: peak at ({a}, {k})"
        );
    }
}

#[test]
fn compact_array_has_no_range_resolution() {
    let grid = GridSpec::default();
    let r = realize(&config(1), &scenario(&grid), 1, 0).unwrap();
    let stage = svr_stage(&r, DistanceModel::Taylor).unwrap();
    let pattern = beam_pattern(&r.geometry, &stage.f_rf.column(0).into_owned(), &grid).unwrap();
    let along = &pattern.gain[107];
    let hi = along.iter().cloned().fold(0.0, f64::max);
    let lo = along.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(10.0 * (hi / lo).log10() < 1.0, "{hi} / {lo}");
}
