use std::f64::consts::{SQRT_2, TAU};

use approx::assert_abs_diff_eq;
use smspace::analysis::*;
use smspace::kernel::{sample_manifold, ContinuationParams, KernelManifold};
use smspace::kinematics::{forward_kinematics, inverse_kinematics, MotorConfig, RetinaPose, WorkingSpace};
use smspace::metric::{distance_matrix, DistanceMatrix};
use smspace::sensor::{random_environment, Environment, Region, RetinaGeometry, ToyAgent};

fn envs(n: u64) -> Vec<Environment> {
    (0..n)
        .map(|k| random_environment(10, &Region::arm_default(), 40 + k).unwrap())
        .collect()
}

fn manifold_of(samples: Vec<MotorConfig>) -> KernelManifold {
    KernelManifold {
        seed_config: samples[0],
        raw_count: samples.len(),
        samples,
    }
}

#[test]
fn equal_poses_have_no_spread() {
    let pose = RetinaPose::new(1.6, 0.3, 0.4);
    let a = inverse_kinematics(&pose).unwrap();
    // Same pose reached with joint 1 rotated by 2π and joint 4 compensating.
    let b = MotorConfig([a.0[0] + TAU, a.0[1], a.0[2], a.0[3] - TAU]);
    let m = manifold_of(vec![a, b]);
    let report = check_environment_invariance(&[m], &envs(2), &RetinaGeometry::default(), TAU_POSE).unwrap();
    for e in &report.environments {
        assert!(e.spreads[0] <= 1e-12, "{}", e.spreads[0]);
        assert_eq!(e.mean_between, None);
    }
    assert!(report.spread_pass);
    assert!(report.flagged.is_empty());
}

#[test]
fn perturbed_sample_is_flagged() {
    let params = ContinuationParams::default();
    let seeds = [[0.3, -0.5, 1.1, 0.7], [0.1, -0.9, 1.4, 2.0], [-0.4, 0.2, 0.9, 1.0]];
    let mut ms: Vec<KernelManifold> = seeds
        .iter()
        .map(|s| sample_manifold(&MotorConfig(*s), &params).unwrap())
        .collect();
    let clean = check_environment_invariance(&ms, &envs(3), &RetinaGeometry::default(), TAU_POSE).unwrap();
    assert!(clean.spread_pass, "{:?}", clean.flagged);
    for k in 0..4 {
        ms[1].samples[50].0[k] += 0.1;
    }
    let bad = check_environment_invariance(&ms, &envs(3), &RetinaGeometry::default(), TAU_POSE).unwrap();
    assert!(!bad.pass);
    assert!(bad.flagged.iter().all(|&(i, _)| i == 1));
    assert!(!bad.flagged.is_empty());
}

#[test]
fn invariance_needs_two_environments() {
    let m = manifold_of(vec![MotorConfig([0.3, -0.5, 1.1, 0.7])]);
    assert!(check_environment_invariance(&[m], &envs(1), &RetinaGeometry::default(), TAU_POSE).is_err());
}

#[test]
fn sensitivity_jumps_at_field_of_view_edge() {
    let geom = RetinaGeometry::default();
    let pose = RetinaPose::new(0.0, 0.0, 0.0);
    // One source just inside the cutoff: a small rotation pushes it out.
    let beta = geom.fov_halfangle - 1e-3;
    let env = Environment::new(1, vec![[beta.cos(), beta.sin()]]).unwrap();
    let s = local_sensitivity(&pose, &geom, &env, 1e-2).unwrap();
    assert!(s > 0.5, "{s}");
    let far = Environment::new(1, vec![[1.0, 0.0]]).unwrap();
    assert!(local_sensitivity(&pose, &geom, &far, 1e-2).unwrap() < 0.05);
}

#[test]
fn probe_generators() {
    let ws = WorkingSpace::default();
    let sweep = alpha_sweep(ws.center, 12, TAU).unwrap();
    assert_eq!(sweep.len(), 12);
    for (k, (pose, m)) in sweep.iter().enumerate() {
        assert_abs_diff_eq!(pose.alpha, TAU * k as f64 / 12.0, epsilon = 1e-15);
        let p = forward_kinematics(m);
        assert_abs_diff_eq!(p.x, ws.center[0], epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, ws.center[1], epsilon = 1e-12);
    }
    let grid = fixed_alpha_grid(&ws, 1.0, 10, 10).unwrap();
    assert_eq!(grid.len(), 100);
    assert_abs_diff_eq!(grid[0].0.x, 1.075, epsilon = 1e-12);
    assert_abs_diff_eq!(grid[0].0.y, -0.9, epsilon = 1e-12);
    assert!(alpha_sweep([5.0, 0.0], 4, TAU).is_err());
}

fn sweep_matrix(arc: f64, steps: usize) -> (DistanceMatrix, Vec<RetinaPose>) {
    let family = alpha_sweep([1.75, 0.0], steps, arc).unwrap();
    let seeds: Vec<MotorConfig> = family.iter().map(|f| f.1).collect();
    let traced = trace_probes(&seeds, &ContinuationParams::default()).unwrap();
    (distance_matrix(&traced).unwrap(), family.into_iter().map(|f| f.0).collect())
}

#[test]
fn alpha_sweep_closes_and_half_sweep_stays_open() {
    let (dm, poses) = sweep_matrix(TAU, 12);
    let full = alpha_loop_diagnostic(&dm, &poses).unwrap();
    assert!(full.ratio <= CLOSURE_RATIO_MAX, "{}", full.ratio);
    let (dm, poses) = sweep_matrix(TAU / 2.0, 12);
    let half = alpha_loop_diagnostic(&dm, &poses).unwrap();
    assert!(half.ratio >= OPEN_RATIO_MIN, "{}", half.ratio);
}

#[test]
fn duplicated_alpha_gives_zero_distance() {
    let pose = RetinaPose::new(1.75, 0.0, 0.5);
    let m = inverse_kinematics(&pose).unwrap();
    let params = ContinuationParams::default();
    let a = sample_manifold(&m, &params).unwrap();
    let b = sample_manifold(&m, &params).unwrap();
    assert_eq!(smspace::metric::hausdorff(&a, &b).unwrap(), 0.0);
}

#[test]
fn loop_diagnostic_needs_a_sweep() {
    let dm = DistanceMatrix::from_upper(3, &[1.0, 1.0, 1.0], vec![0, 1, 2]).unwrap();
    let scattered = [
        RetinaPose::new(1.5, 0.0, 0.0),
        RetinaPose::new(2.0, 0.0, 1.0),
        RetinaPose::new(1.5, 0.5, 2.0),
    ];
    assert!(alpha_loop_diagnostic(&dm, &scattered).is_err());
    assert!(alpha_loop_diagnostic(&dm, &scattered[..2]).is_err());
}

#[test]
fn spearman_basics() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
    // Ties share ranks: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3).
    let r = spearman(&[5.0, 5.0, 9.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_abs_diff_eq!(r, 0.75_f64.sqrt(), epsilon = 1e-12);
}

#[test]
fn identical_poses_make_correlation_inapplicable() {
    let dm = DistanceMatrix::from_upper(3, &[1.0, 2.0, 3.0], vec![0, 1, 2]).unwrap();
    let p = RetinaPose::new(1.5, 0.0, 0.0);
    assert_eq!(external_correlation(&dm, &[p, p, p], 1.0).unwrap(), None);
    assert!(external_correlation(&dm, &[p, p], 1.0).is_err());
}

#[test]
fn external_distance_wraps_angle() {
    let a = RetinaPose::new(0.0, 0.0, 0.1);
    let b = RetinaPose::new(0.0, 0.0, TAU - 0.1);
    assert_abs_diff_eq!(external_distance(&a, &b, 1.0), 0.2, epsilon = 1e-12);
    assert_abs_diff_eq!(external_distance(&a, &b, 4.0), 0.4, epsilon = 1e-12);
}

#[test]
fn line_fit_and_distance() {
    let pts = [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]];
    let line = LineFit::fit(&pts).unwrap();
    assert_abs_diff_eq!(line.distance([0.0, 0.0]), 1.0 / SQRT_2, epsilon = 1e-15);
    assert!(LineFit::fit(&pts[..1]).is_none());
    assert!(LineFit::fit(&[[1.0, 1.0], [1.0, 1.0]]).is_none());
}

#[test]
fn two_motor_level_sets_match_parallel_line_oracle() {
    let toy_envs: Vec<Environment> = (0..2)
        .map(|k| random_environment(5, &Region::toy_default(), 90 + k).unwrap())
        .collect();
    let samples = toy_lattice(ToyAgent::TwoMotor, 8, 0.125);
    let report = toy_experiment(ToyAgent::TwoMotor, &toy_envs, &samples).unwrap();
    let ToyReport::TwoMotor {
        level_sets,
        max_deviation,
        pairs,
        max_relative_error,
        partition_consistent,
    } = report
    else {
        panic!("wrong report kind");
    };
    // Sums range over -2..=2 in steps of 1/8; the two corner sums are singletons.
    assert_eq!(level_sets.len(), 31);
    assert!(max_deviation <= 1e-6);
    assert!(max_relative_error <= 0.01);
    assert!(partition_consistent);
    let p = &pairs[0];
    assert_abs_diff_eq!(p.expected, 0.125 / SQRT_2, epsilon = 1e-15);
}

#[test]
fn one_motor_agent_sees_environment_dependent_manifolds() {
    let toy_envs: Vec<Environment> = (0..2)
        .map(|k| random_environment(5, &Region::toy_default(), 90 + k).unwrap())
        .collect();
    let samples = toy_lattice(ToyAgent::OneMotor, 16, 0.125);
    let a = toy_experiment(ToyAgent::OneMotor, &toy_envs, &samples).unwrap();
    let b = toy_experiment(ToyAgent::OneMotor, &toy_envs, &samples).unwrap();
    assert_eq!(a, b);
    let ToyReport::OneMotor {
        sensory_manifolds,
        discrepancy,
    } = a
    else {
        panic!("wrong report kind");
    };
    assert_eq!(sensory_manifolds.len(), 2);
    assert_eq!(sensory_manifolds[0].len(), 33);
    assert!(discrepancy[0] > 0.05, "{}", discrepancy[0]);
    let json = serde_json::to_string(&b).unwrap();
    assert!(json.contains("\"agent\":\"one_motor\""));
}

#[test]
fn pose_report_flags_drift() {
    let params = ContinuationParams::default();
    let mut ms = vec![sample_manifold(&MotorConfig([0.3, -0.5, 1.1, 0.7]), &params).unwrap()];
    assert!(check_pose_constancy(&ms, TAU_POSE).pass);
    ms[0].samples[3].0[0] += 0.05;
    let r = check_pose_constancy(&ms, TAU_POSE);
    assert!(!r.pass);
    assert_eq!(r.worst_manifold, Some(0));
}
