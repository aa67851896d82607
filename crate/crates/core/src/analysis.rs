//! Checks on the learned representation: sensory invariance of the kernel
//! manifolds across environments, the circle-times-plane topology of the
//! manifold of manifolds, agreement with the external pose, and the two toy
//! agents.

use std::f64::consts::{SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::embedding::{mds_spectrum, residual_variance};
use crate::error::{Error, Result};
use crate::kernel::{sample_manifold, ContinuationParams, KernelManifold};
use crate::kinematics::{forward_kinematics, inverse_kinematics, MotorConfig, RetinaPose, WorkingSpace};
use crate::metric::{canonical_angle, wrap_diff, DistanceMatrix};
use crate::parallel;
use crate::sensor::{arm_response, retina_response, toy_response, Environment, RetinaGeometry, SensoryVector, ToyAgent};

/// Position tolerance on kernel manifolds, world units.
pub const TAU_POSE: f64 = 1e-2;
/// Sensory tolerance as a fraction of the sensory dynamic range.
pub const TAU_SENSE_FRACTION: f64 = 1e-2;
/// Mean between-manifold sensory distance must exceed this many τ_sense.
pub const RICHNESS_FACTOR: f64 = 10.0;
/// Full α-sweeps must close within this ratio of their median step.
pub const CLOSURE_RATIO_MAX: f64 = 2.0;
/// Half α-sweeps must stay open by at least this ratio.
pub const OPEN_RATIO_MIN: f64 = 3.0;
/// Fixed-α sheets: residual MDS variance beyond two components.
pub const SHEET_RESIDUAL_MAX: f64 = 0.10;
/// Internal versus external distance rank correlation.
pub const CORRELATION_MIN: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseReport {
    pub max_position_drift: f64,
    pub max_orientation_drift: f64,
    pub worst_manifold: Option<usize>,
    pub tau_pose: f64,
    pub pass: bool,
}

pub fn check_pose_constancy(manifolds: &[KernelManifold], tau_pose: f64) -> PoseReport {
    let drifts = parallel::map(manifolds, |m| (m.pose_drift(), m.orientation_drift()));
    let mut worst = None;
    let (mut pos, mut ang) = (0.0_f64, 0.0_f64);
    for (i, &(p, a)) in drifts.iter().enumerate() {
        if p.max(a) > pos.max(ang) {
            worst = Some(i);
        }
        pos = pos.max(p);
        ang = ang.max(a);
    }
    PoseReport {
        max_position_drift: pos,
        max_orientation_drift: ang,
        worst_manifold: worst,
        tau_pose,
        pass: pos <= tau_pose && ang <= tau_pose,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentInvariance {
    pub environment_seed: u64,
    /// Spread between the 5th and 95th percentile of all cell values at the
    /// manifold seeds.
    pub dynamic_range: f64,
    /// Per manifold: max over samples of the max-norm sensory change from the
    /// first sample.
    pub spreads: Vec<f64>,
    /// Per manifold tolerance on the spread.
    pub tau_sense: Vec<f64>,
    pub max_spread: f64,
    /// Mean max-norm sensory distance between manifold seeds; `None` with
    /// fewer than two manifolds.
    pub mean_between: Option<f64>,
    /// Richness reference; the median is insensitive to the few manifolds
    /// seen next to a light source.
    pub median_tau_sense: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub tau_pose: f64,
    pub environments: Vec<EnvironmentInvariance>,
    /// Largest spread relative to its tolerance.
    pub max_relative_spread: f64,
    /// (manifold, environment) pairs whose spread exceeds τ_sense.
    pub flagged: Vec<(usize, usize)>,
    pub spread_pass: bool,
    pub richness_pass: bool,
    pub pass: bool,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted[((sorted.len() - 1) as f64 * p).round() as usize]
}

/// Largest max-norm sensory change caused by moving the pose to any of the
/// 26 neighbours of the cube of half-width `step` in (x, y, α). Captures
/// sources crossing the edge of the field of view.
pub fn local_sensitivity(
    pose: &RetinaPose,
    geom: &RetinaGeometry,
    env: &Environment,
    step: f64,
) -> Result<f64> {
    let base = retina_response(pose, geom, env)?;
    let mut worst = 0.0_f64;
    for k in 0..27 {
        if k == 13 {
            continue;
        }
        let offset = |d: i32| (d - 1) as f64 * step;
        let p = RetinaPose::new(
            pose.x + offset(k % 3),
            pose.y + offset(k / 3 % 3),
            pose.alpha + offset(k / 9),
        );
        worst = worst.max(retina_response(&p, geom, env)?.max_abs_diff(&base));
    }
    Ok(worst)
}

/// Sensory constancy of kernel manifolds across environments.
///
/// A manifold's tolerance in one environment is the larger of
/// `TAU_SENSE_FRACTION` of the dynamic range and the sensory change a pose
/// error of `tau_pose` would cause at its seed.
pub fn check_environment_invariance(
    manifolds: &[KernelManifold],
    environments: &[Environment],
    geom: &RetinaGeometry,
    tau_pose: f64,
) -> Result<InvarianceReport> {
    if environments.len() < 2 {
        return Err(Error::invalid("invariance check needs at least two environments"));
    }
    if manifolds.is_empty() || manifolds.iter().any(|m| m.samples.is_empty()) {
        return Err(Error::EmptyManifold);
    }
    geom.validate()?;
    let mut envs = Vec::with_capacity(environments.len());
    let mut flagged = Vec::new();
    let mut max_rel = 0.0_f64;
    let mut richness_pass = true;
    for (e, env) in environments.iter().enumerate() {
        let per_manifold: Vec<Result<(SensoryVector, f64, f64)>> = parallel::map(manifolds, |m| {
            let first = arm_response(&m.samples[0], geom, env)?;
            let mut spread = 0.0_f64;
            for s in &m.samples[1..] {
                spread = spread.max(arm_response(s, geom, env)?.max_abs_diff(&first));
            }
            let sens = local_sensitivity(&forward_kinematics(&m.seed_config), geom, env, tau_pose)?;
            Ok((first, spread, sens))
        });
        let per_manifold: Vec<(SensoryVector, f64, f64)> = per_manifold.into_iter().collect::<Result<_>>()?;

        let mut pooled: Vec<f64> = per_manifold.iter().flat_map(|(s, _, _)| s.0.iter().copied()).collect();
        pooled.sort_by(f64::total_cmp);
        let dynamic_range = percentile(&pooled, 0.95) - percentile(&pooled, 0.05);
        let floor = TAU_SENSE_FRACTION * dynamic_range;

        let spreads: Vec<f64> = per_manifold.iter().map(|p| p.1).collect();
        let tau_sense: Vec<f64> = per_manifold.iter().map(|p| p.2.max(floor)).collect();
        for (i, (&s, &t)) in spreads.iter().zip(&tau_sense).enumerate() {
            if s > t {
                flagged.push((i, e));
            }
            let rel = if t > 0.0 {
                s / t
            } else if s > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_rel = max_rel.max(rel);
        }
        let max_spread = spreads.iter().copied().fold(0.0, f64::max);
        let mut sorted_tau = tau_sense.clone();
        sorted_tau.sort_by(f64::total_cmp);
        let median_tau_sense = percentile(&sorted_tau, 0.5);

        let n = per_manifold.len();
        let mean_between = (n >= 2).then(|| {
            let mut sum = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    sum += per_manifold[i].0.max_abs_diff(&per_manifold[j].0);
                }
            }
            sum / (n * (n - 1) / 2) as f64
        });
        if let Some(mb) = mean_between {
            richness_pass &= mb >= RICHNESS_FACTOR * median_tau_sense;
        }
        envs.push(EnvironmentInvariance {
            environment_seed: env.seed,
            dynamic_range,
            spreads,
            tau_sense,
            max_spread,
            mean_between,
            median_tau_sense,
        });
    }
    let spread_pass = flagged.is_empty();
    Ok(InvarianceReport {
        tau_pose,
        environments: envs,
        max_relative_spread: max_rel,
        flagged,
        spread_pass,
        richness_pass,
        pass: spread_pass && richness_pass,
    })
}

/// Seed configurations for a sweep of the optical axis at a fixed lens
/// position: `steps` angles evenly spaced over `[0, arc)`.
pub fn alpha_sweep(position: [f64; 2], steps: usize, arc: f64) -> Result<Vec<(RetinaPose, MotorConfig)>> {
    (0..steps)
        .map(|k| {
            let pose = RetinaPose::new(position[0], position[1], arc * k as f64 / steps as f64);
            inverse_kinematics(&pose)
                .map(|m| (pose, m))
                .ok_or_else(|| Error::invalid(format!("probe position {position:?} is unreachable")))
        })
        .collect()
}

/// `nx`×`ny` lens positions at cell centres of the working space, all with
/// orientation `alpha`.
pub fn fixed_alpha_grid(
    ws: &WorkingSpace,
    alpha: f64,
    nx: usize,
    ny: usize,
) -> Result<Vec<(RetinaPose, MotorConfig)>> {
    let (x0, x1) = ws.x_range();
    let (y0, y1) = ws.y_range();
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let x = x0 + (x1 - x0) * (i as f64 + 0.5) / nx as f64;
            let y = y0 + (y1 - y0) * (j as f64 + 0.5) / ny as f64;
            let pose = RetinaPose::new(x, y, alpha);
            let m = inverse_kinematics(&pose)
                .ok_or_else(|| Error::invalid(format!("grid position ({x}, {y}) is unreachable")))?;
            out.push((pose, m));
        }
    }
    Ok(out)
}

/// Traces the kernel manifold of every probe seed.
pub fn trace_probes(seeds: &[MotorConfig], params: &ContinuationParams) -> Result<Vec<KernelManifold>> {
    parallel::map(seeds, |m| sample_manifold(m, params))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopScores {
    /// Internal distance between successive probes.
    pub consecutive: Vec<f64>,
    pub median_consecutive: f64,
    /// Internal distance between the last and the first probe.
    pub closure: f64,
    pub ratio: f64,
}

/// Closure of an α-sweep under the internal metric. `dm` and `poses` list the
/// probes in sweep order.
pub fn alpha_loop_diagnostic(dm: &DistanceMatrix, poses: &[RetinaPose]) -> Result<LoopScores> {
    let n = poses.len();
    if n < 3 || dm.len() != n {
        return Err(Error::invalid("alpha-sweep probe family missing"));
    }
    let (x, y) = (poses[0].x, poses[0].y);
    if poses.iter().any(|p| (p.x - x).abs() > 1e-9 || (p.y - y).abs() > 1e-9) {
        return Err(Error::invalid("alpha-sweep probes must share one lens position"));
    }
    let consecutive: Vec<f64> = (0..n - 1).map(|k| dm.get(k, k + 1)).collect();
    let mut sorted = consecutive.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let closure = dm.get(n - 1, 0);
    let ratio = if median > 0.0 { closure / median } else { f64::INFINITY };
    Ok(LoopScores {
        consecutive,
        median_consecutive: median,
        closure,
        ratio,
    })
}

/// External pose distance with the orientation difference wrapped and weighted.
pub fn external_distance(a: &RetinaPose, b: &RetinaPose, angle_weight: f64) -> f64 {
    let da = wrap_diff(canonical_angle(a.alpha) - canonical_angle(b.alpha));
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + angle_weight * da * da).sqrt()
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` when either side has no variation.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation between internal distances and external pose distances
/// over all pairs. `None` when the diagnostic does not apply (degenerate poses).
pub fn external_correlation(dm: &DistanceMatrix, poses: &[RetinaPose], angle_weight: f64) -> Result<Option<f64>> {
    if poses.len() != dm.len() {
        return Err(Error::DimensionMismatch {
            left: poses.len(),
            right: dm.len(),
        });
    }
    let internal = dm.upper();
    let n = poses.len();
    let mut external = Vec::with_capacity(internal.len());
    for i in 0..n {
        for j in i + 1..n {
            external.push(external_distance(&poses[i], &poses[j], angle_weight));
        }
    }
    Ok(spearman(&internal, &external))
}

/// Residual classical-MDS variance beyond two components.
pub fn sheet_flatness(dm: &DistanceMatrix) -> Result<f64> {
    Ok(residual_variance(&mds_spectrum(dm)?, 2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub full_sweep: LoopScores,
    pub half_sweep: LoopScores,
    /// One residual per fixed-α sheet.
    pub sheet_residuals: Vec<f64>,
    pub sheet_alphas: Vec<f64>,
    pub correlation: Option<f64>,
    pub closes: bool,
    pub half_stays_open: bool,
    pub sheets_flat: bool,
    pub correlated: bool,
    pub pass: bool,
}

/// Settings for [`topology_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyProbes {
    pub sweep_steps: usize,
    pub sheet_alphas: Vec<f64>,
    pub grid: usize,
    pub angle_weight: f64,
}

impl Default for TopologyProbes {
    fn default() -> Self {
        TopologyProbes {
            sweep_steps: 12,
            sheet_alphas: vec![0.0, TAU / 3.0, 2.0 * TAU / 3.0],
            grid: 10,
            angle_weight: 1.0,
        }
    }
}

/// Traces the probe families inside `ws`, and combines their diagnostics with
/// the correlation of `dm` against the ground-truth poses of `manifolds`.
pub fn topology_report(
    ws: &WorkingSpace,
    params: &ContinuationParams,
    probes: &TopologyProbes,
    manifolds: &[KernelManifold],
    dm: &DistanceMatrix,
) -> Result<TopologyReport> {
    let sweep_scores = |arc: f64| -> Result<LoopScores> {
        let family = alpha_sweep(ws.center, probes.sweep_steps, arc)?;
        let seeds: Vec<MotorConfig> = family.iter().map(|(_, m)| *m).collect();
        let traced = trace_probes(&seeds, params)?;
        let probe_dm = crate::metric::distance_matrix(&traced)?;
        let poses: Vec<RetinaPose> = family.iter().map(|(p, _)| *p).collect();
        alpha_loop_diagnostic(&probe_dm, &poses)
    };
    let full_sweep = sweep_scores(TAU)?;
    let half_sweep = sweep_scores(TAU / 2.0)?;

    let mut sheet_residuals = Vec::with_capacity(probes.sheet_alphas.len());
    for &alpha in &probes.sheet_alphas {
        let grid = fixed_alpha_grid(ws, alpha, probes.grid, probes.grid)?;
        let seeds: Vec<MotorConfig> = grid.iter().map(|(_, m)| *m).collect();
        let traced = trace_probes(&seeds, params)?;
        sheet_residuals.push(sheet_flatness(&crate::metric::distance_matrix(&traced)?)?);
    }

    let poses: Vec<RetinaPose> = manifolds.iter().map(|m| forward_kinematics(&m.seed_config)).collect();
    let correlation = external_correlation(dm, &poses, probes.angle_weight)?;

    let closes = full_sweep.ratio <= CLOSURE_RATIO_MAX;
    let half_stays_open = half_sweep.ratio >= OPEN_RATIO_MIN;
    let sheets_flat = sheet_residuals.iter().all(|&r| r <= SHEET_RESIDUAL_MAX);
    let correlated = correlation.is_some_and(|c| c >= CORRELATION_MIN);
    Ok(TopologyReport {
        full_sweep,
        half_sweep,
        sheet_residuals,
        sheet_alphas: probes.sheet_alphas.clone(),
        correlation,
        closes,
        half_stays_open,
        sheets_flat,
        correlated,
        pass: closes && half_stays_open && sheets_flat && correlated,
    })
}

// ---------------------------------------------------------------------------
// Toy agents
// ---------------------------------------------------------------------------

/// Regular motor lattice: `-half..=half` steps of `step` per motor.
pub fn toy_lattice(agent: ToyAgent, half: i32, step: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (-half..=half).map(|k| k as f64 * step).collect();
    match agent {
        ToyAgent::OneMotor => axis.iter().map(|&a| vec![a]).collect(),
        ToyAgent::TwoMotor => axis
            .iter()
            .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
            .collect(),
    }
}

/// Total-least-squares line through a point set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub point: [f64; 2],
    /// Unit direction.
    pub direction: [f64; 2],
}

impl LineFit {
    pub fn fit(points: &[[f64; 2]]) -> Option<LineFit> {
        if points.len() < 2 {
            return None;
        }
        let n = points.len() as f64;
        let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in points {
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        if sxx + syy == 0.0 {
            return None;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        Some(LineFit {
            point: [cx, cy],
            direction: [theta.cos(), theta.sin()],
        })
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let (dx, dy) = (p[0] - self.point[0], p[1] - self.point[1]);
        (dx * self.direction[1] - dy * self.direction[0]).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    /// External position shared by the members (mean of m1 + m2).
    pub position: f64,
    pub members: Vec<usize>,
    /// Largest |m1 + m2 - position| over the members.
    pub max_deviation: f64,
    pub line: Option<LineFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetPair {
    pub a: usize,
    pub b: usize,
    /// Hausdorff distance between each set and the other's fitted line.
    pub measured: f64,
    /// Distance between the parallel lines m1 + m2 = const.
    pub expected: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "agent", rename_all = "snake_case")]
pub enum ToyReport {
    OneMotor {
        /// Sensory trajectory per environment, in sample order.
        sensory_manifolds: Vec<Vec<[f64; 2]>>,
        /// Mean sensory difference between environment 0 and each other
        /// environment, relative to the mean sensory magnitude in environment 0.
        discrepancy: Vec<f64>,
    },
    TwoMotor {
        level_sets: Vec<LevelSet>,
        max_deviation: f64,
        pairs: Vec<SetPair>,
        max_relative_error: f64,
        /// The same grouping of samples was found in every environment.
        partition_consistent: bool,
    },
}

/// Groups samples whose sensory inputs coincide (relative tolerance 1e-9).
fn coincident_groups(inputs: &[SensoryVector]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..inputs.len()).collect();
    let key = |i: usize| &inputs[i].0;
    idx.sort_by(|&a, &b| {
        key(a)
            .iter()
            .zip(key(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let close = |a: usize, b: usize| {
        key(a)
            .iter()
            .zip(key(b))
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
    };
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &idx {
        match groups.last_mut() {
            Some(g) if close(*g.last().unwrap(), i) => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();
    groups
}

pub fn toy_experiment(agent: ToyAgent, environments: &[Environment], motor_samples: &[Vec<f64>]) -> Result<ToyReport> {
    if environments.is_empty() {
        return Err(Error::invalid("toy experiment needs an environment"));
    }
    let inputs: Vec<Vec<SensoryVector>> = environments
        .iter()
        .map(|env| motor_samples.iter().map(|m| toy_response(agent, m, env)).collect())
        .collect::<Result<_>>()?;

    match agent {
        ToyAgent::OneMotor => {
            let sensory_manifolds: Vec<Vec<[f64; 2]>> = inputs
                .iter()
                .map(|env| env.iter().map(|s| [s.0[0], s.0[1]]).collect())
                .collect();
            let norm = |s: &[f64; 2]| s[0].hypot(s[1]);
            let base = &sensory_manifolds[0];
            let scale = base.iter().map(norm).sum::<f64>() / base.len().max(1) as f64;
            let discrepancy = sensory_manifolds[1..]
                .iter()
                .map(|other| {
                    let d: f64 = base
                        .iter()
                        .zip(other)
                        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
                        .sum();
                    d / base.len().max(1) as f64 / scale
                })
                .collect();
            Ok(ToyReport::OneMotor {
                sensory_manifolds,
                discrepancy,
            })
        }
        ToyAgent::TwoMotor => {
            let groups = coincident_groups(&inputs[0]);
            let partition_consistent = inputs[1..].iter().all(|env| coincident_groups(env) == groups);
            let mut level_sets = Vec::new();
            for members in groups.into_iter().filter(|g| g.len() >= 2) {
                let sums: Vec<f64> = members.iter().map(|&i| motor_samples[i].iter().sum()).collect();
                let position = sums.iter().sum::<f64>() / sums.len() as f64;
                let max_deviation = sums.iter().map(|s| (s - position).abs()).fold(0.0, f64::max);
                let pts: Vec<[f64; 2]> = members.iter().map(|&i| [motor_samples[i][0], motor_samples[i][1]]).collect();
                level_sets.push(LevelSet {
                    position,
                    members,
                    max_deviation,
                    line: LineFit::fit(&pts),
                });
            }
            level_sets.sort_by(|a, b| a.position.total_cmp(&b.position));

            let points = |ls: &LevelSet| -> Vec<[f64; 2]> {
                ls.members.iter().map(|&i| [motor_samples[i][0], motor_samples[i][1]]).collect()
            };
            let mut pairs = Vec::new();
            for a in 0..level_sets.len() {
                for b in a + 1..level_sets.len() {
                    let (Some(la), Some(lb)) = (level_sets[a].line, level_sets[b].line) else {
                        continue;
                    };
                    let to_b = points(&level_sets[a]).into_iter().map(|p| lb.distance(p)).fold(0.0, f64::max);
                    let to_a = points(&level_sets[b]).into_iter().map(|p| la.distance(p)).fold(0.0, f64::max);
                    let measured = to_a.max(to_b);
                    let expected = (level_sets[a].position - level_sets[b].position).abs() / SQRT_2;
                    pairs.push(SetPair {
                        a,
                        b,
                        measured,
                        expected,
                        relative_error: (measured - expected).abs() / expected,
                    });
                }
            }
            let max_deviation = level_sets.iter().map(|l| l.max_deviation).fold(0.0, f64::max);
            let max_relative_error = pairs.iter().map(|p| p.relative_error).fold(0.0, f64::max);
            Ok(ToyReport::TwoMotor {
                level_sets,
                max_deviation,
                pairs,
                max_relative_error,
                partition_consistent,
            })
        }
    }
}
