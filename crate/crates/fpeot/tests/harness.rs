use fpeot::config::{ExperimentConfig, Family};
use fpeot::harness::{
    dump_trajectories, gaussian_check, run_density, run_suite, table_csv, table_markdown, table_rows, DensityReport,
    SuiteSummary,
};
use fpeot::io::{density_report_path, read_json, read_paths_csv, SUMMARY};
use fpeot::HarnessError;
use fpeot_core::flow::{flow_integrate, GaussianScore};
use fpeot_core::{GaussianSpec, PointCloud};
use nalgebra::DMatrix;

fn small(out: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.grid = 48;
    c.steps = 32;
    c.samples = 120;
    c.densities = 3;
    c.seed = 11;
    c.out = out.to_path_buf();
    c
}

#[test]
fn suites_are_reproducible_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = small(&dir.path().join("a"));
    let first = run_suite(&a).unwrap();
    let second = run_suite(&a).unwrap();
    a.workers = 3;
    a.out = dir.path().join("b");
    let threaded = run_suite(&a).unwrap();

    let strip = |s: &SuiteSummary| {
        let mut s = s.without_timings();
        s.config.workers = 1;
        s.config.out = Default::default();
        serde_json::to_string(&s).unwrap()
    };
    assert_eq!(strip(&first), strip(&second));
    assert_eq!(strip(&first), strip(&threaded));
    assert_eq!(first.completed, 3);
    assert!(first.failed.is_empty());
    assert_eq!(first.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![11, 12, 13]);

    let on_disk: SuiteSummary = read_json(&dir.path().join("a").join(SUMMARY)).unwrap();
    assert_eq!(strip(&on_disk), strip(&second));
    for i in 0..3 {
        let r: DensityReport = read_json(&density_report_path(&dir.path().join("a"), i)).unwrap();
        assert_eq!(r.config, small(&dir.path().join("a")));
        assert_eq!((r.index, r.seed), (i, 11 + i as u64));
        assert_eq!(r.transport.epsilon_rel, first.runs[i].epsilon_rel);
        assert!(r.transport.epsilon_rel >= -1e-12);
        assert!(r.generation.mixture.is_some() && r.map_error.is_none());
    }
}

#[test]
fn exceeding_the_failure_budget_fails_the_suite_but_keeps_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.densities = 2;
    // Nearly flat components never decay at the box faces.
    c.mixture_law.q_scale = 0.0;
    c.mixture_law.q_shift = 1e-6;
    c.mixture_law.quartic_factor = 1e-9;
    let err = run_suite(&c).unwrap_err();
    assert!(matches!(err, HarnessError::SuiteFailed { failed: 2, total: 2, allowed: 0 }), "{err}");
    assert_eq!(err.exit_code(), 3);
    let summary: SuiteSummary = read_json(&dir.path().join(SUMMARY)).unwrap();
    assert_eq!((summary.completed, summary.failed.len()), (0, 2));
    assert!(summary.failed[0].error.contains("certif"), "{}", summary.failed[0].error);
    assert_eq!(summary.max_epsilon_rel, None);
}

#[test]
fn gaussian_family_runs_match_the_closed_form_map() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.family = Family::Gaussian;
    c.grid = 96;
    c.steps = 1024;
    c.samples = 200;
    let run = run_density(&c, 0).unwrap();
    let r = &run.report;
    assert!(r.generation.gaussian.is_some());
    assert!(r.transport.epsilon_rel <= 1e-10, "{}", r.transport.epsilon_rel);
    let err = r.map_error.unwrap();
    assert!(err <= 1e-4, "{err}");
}

fn check(mean: Vec<f64>, cov: &[f64], grid: usize, steps: usize) -> (f64, f64, f64) {
    let mut c = ExperimentConfig::default();
    c.dim = mean.len();
    c.grid = grid;
    c.steps = steps;
    c.samples = 200;
    let spec = GaussianSpec::new(mean.clone(), DMatrix::from_row_slice(mean.len(), mean.len(), cov)).unwrap();
    let r = gaussian_check(&c, &spec).unwrap();
    assert!(r.transport.epsilon_rel <= 1e-10, "{}", r.transport.epsilon_rel);
    assert!(r.max_limit_error <= r.limit_gap + 1e-3, "{} vs {}", r.max_limit_error, r.limit_gap);
    (r.max_density_l2, r.max_map_error, r.limit_gap)
}

#[test]
fn standard_normal_is_a_fixed_point_of_the_check() {
    let (l2, map, gap) = check(vec![0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 64, 64);
    assert!(l2 <= 1e-6 && map <= 1e-6, "{l2} {map}");
    assert_eq!(gap, 0.0);
}

#[test]
fn shifted_normal_translates_samples() {
    let (l2, map, gap) = check(vec![1.0, -0.5], &[1.0, 0.0, 0.0, 1.0], 96, 200);
    assert!(l2 <= 1e-4 && map <= 1e-4, "{l2} {map}");
    assert!((gap - 1.25f64.sqrt() * (-5.0f64).exp()).abs() < 1e-15);
}

#[test]
fn anisotropic_normal_scales_axes() {
    let (l2, map, gap) = check(vec![0.0, 0.0], &[2.0, 0.0, 0.0, 0.5], 96, 1024);
    assert!(l2 <= 1e-4 && map <= 1e-4, "{l2} {map}");
    assert!((gap - (-5.0f64).exp()).abs() < 1e-15);
}

#[test]
fn dumps_select_sorted_ids_and_write_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GaussianSpec::standard(2).unwrap();
    let field = GaussianScore::new(spec, 16, 5.0, (-8.0, 8.0)).unwrap();
    let x0 = PointCloud::new(2, (0..60).map(|i| (i as f64 * 0.37).sin() * 2.0).collect()).unwrap();
    let flow = flow_integrate(&field, &x0).unwrap();

    let dump = dump_trajectories(&flow, 7, 5, dir.path()).unwrap();
    assert_eq!(dump.ids.len(), 7);
    assert!(dump.ids.windows(2).all(|w| w[0] < w[1]));
    assert!(dump.straightness.iter().all(|&s| s == 0.0));
    let paths = read_paths_csv(&dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(paths.iter().map(|p| p.id).collect::<Vec<_>>(), dump.ids);
    assert!(paths.iter().all(|p| p.times.len() == 17));
    assert_eq!(dump_trajectories(&flow, 7, 5, dir.path()).unwrap(), dump);

    let empty = dump_trajectories(&flow, 0, 5, dir.path()).unwrap();
    assert!(empty.ids.is_empty());
    assert_eq!(std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap(), "id,t,x_1,x_2\n");
    assert_eq!(std::fs::read_to_string(dir.path().join("straightness.csv")).unwrap(), "id,diagnostic\n");
    assert!(matches!(dump_trajectories(&flow, 61, 5, dir.path()), Err(HarnessError::MissingRunData(_))));
}

#[test]
fn mixture_runs_produce_curved_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.grid = 64;
    c.steps = 64;
    let run = run_density(&c, 1).unwrap();
    let dump = dump_trajectories(&run.flow, 40, 0, dir.path()).unwrap();
    let worst = dump.straightness.iter().copied().fold(0.0, f64::max);
    assert!(worst > 1e-3, "{worst}");
}

#[test]
fn tables_render_one_row_per_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.densities = 1;
    let s = run_suite(&c).unwrap();
    let rows = table_rows(&[s.clone(), s]);
    let csv = table_csv(&rows).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "d,grid,steps,family,densities,completed,max_epsilon_rel,median_epsilon_rel,mean_total_s"
    );
    assert!(lines.next().unwrap().starts_with("2,48,32,quartic-mixture,1,1,"));
    assert_eq!(csv.lines().count(), 3);
    let md = table_markdown(&rows);
    assert_eq!(md.lines().count(), 4);
    assert!(md.lines().nth(2).unwrap().starts_with("| 2 | 48 | 32 | quartic-mixture | 1 | 1 |"));
}
