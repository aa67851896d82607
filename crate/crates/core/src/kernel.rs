//! Tracing kernel manifolds: the closed loops of motor configurations that
//! leave the retina pose (and hence every sensory input) unchanged.
//!
//! Starting from a seed configuration, the trace repeatedly steps a fixed
//! length along the null direction of the arm Jacobian, keeping the direction
//! consistent with the previous step, until it comes back near the seed. The
//! raw trace is then resampled to a fixed number of points evenly spaced in
//! wrapped arc length.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, jacobian, pose_unreduced, MotorConfig, N_JOINTS};
use crate::metric::{canonical_angle, motor_distance, wrap_diff};

/// Number of resampled points per manifold.
pub const SAMPLES_PER_MANIFOLD: usize = 100;

/// Below this second-smallest singular value the kernel is treated as more
/// than one-dimensional.
pub const SINGULAR_THRESHOLD: f64 = 1e-8;

/// Threshold for the sign convention on null vectors.
const SIGN_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationParams {
    /// Step length.
    pub mu: f64,
    /// Loop-closure threshold on the wrapped distance back to the seed.
    pub epsilon: f64,
    pub min_steps: usize,
    pub max_steps: usize,
    /// Apply one Newton projection back onto the seed pose after every step.
    pub correct_drift: bool,
}

impl Default for ContinuationParams {
    fn default() -> Self {
        let mu = 1e-3;
        ContinuationParams {
            mu,
            epsilon: 1e-2,
            min_steps: 50,
            max_steps: default_max_steps(mu),
            correct_drift: false,
        }
    }
}

/// Ten times the steps needed to cover a loop of length 2π·√N.
pub fn default_max_steps(mu: f64) -> usize {
    let expected = TAU * (N_JOINTS as f64).sqrt();
    10 * (expected / mu).ceil() as usize
}

impl ContinuationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < self.epsilon && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "continuation needs 0 < mu < epsilon (mu = {}, epsilon = {})",
                self.mu, self.epsilon
            )));
        }
        if self.min_steps < 2 {
            return Err(Error::invalid("min_steps must be at least 2"));
        }
        if self.max_steps <= self.min_steps {
            return Err(Error::invalid("max_steps must exceed min_steps"));
        }
        Ok(())
    }
}

/// A resampled kernel manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelManifold {
    pub seed_config: MotorConfig,
    /// Continuation steps taken before resampling.
    pub raw_count: usize,
    pub samples: Vec<MotorConfig>,
}

/// Unit vector spanning the kernel of the Jacobian at `m`.
///
/// The Jacobian is padded with a zero row so the SVD yields a full set of
/// right singular vectors; the one paired with the smallest singular value is
/// the kernel. Its sign is fixed so the first coordinate larger than 1e-6 in
/// magnitude is positive.
pub fn null_direction(m: &MotorConfig) -> Result<[f64; N_JOINTS]> {
    let j = jacobian(m);
    let mut padded = Matrix4::zeros();
    padded.fixed_view_mut::<3, 4>(0, 0).copy_from(&j);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");

    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let second = svd.singular_values[order[1]];
    if second < SINGULAR_THRESHOLD {
        return Err(Error::Singular { sigma: second });
    }
    let row = v_t.row(order[0]);
    let mut v: [f64; N_JOINTS] = std::array::from_fn(|k| row[k]);
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in &mut v {
        *c /= norm;
    }
    if let Some(first) = v.iter().find(|c| c.abs() > SIGN_EPS) {
        if *first < 0.0 {
            for c in &mut v {
                *c = -*c;
            }
        }
    }
    Ok(v)
}

/// One Gauss-Newton step pulling `m` back onto the pose `target`.
fn project_to_pose(m: &mut [f64; N_JOINTS], target: &[f64; 3]) {
    let pose = pose_unreduced(m);
    let err = Vector3::new(pose[0] - target[0], pose[1] - target[1], pose[2] - target[2]);
    let j = jacobian(&MotorConfig(*m));
    let jjt: Matrix3<f64> = j * j.transpose();
    if let Some(inv) = jjt.try_inverse() {
        let dm: Vector4<f64> = j.transpose() * (inv * err);
        for k in 0..N_JOINTS {
            m[k] -= dm[k];
        }
    }
}

/// Raw output of the continuation: the seed, every intermediate point, and the
/// final point within `epsilon` of the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrace {
    pub points: Vec<[f64; N_JOINTS]>,
}

impl RawTrace {
    /// Number of continuation steps.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }
}

pub fn trace_kernel(m0: &MotorConfig, params: &ContinuationParams) -> Result<RawTrace> {
    params.validate()?;
    if !m0.is_finite() {
        return Err(Error::invalid("seed configuration is not finite"));
    }
    let distance = forward_kinematics(m0).base_distance();
    if distance <= 1.0 {
        return Err(Error::SplitManifold { distance });
    }
    let target = pose_unreduced(&m0.0);

    let mut points = Vec::with_capacity(8192);
    points.push(m0.0);
    let mut m = m0.0;
    let mut prev: Option<[f64; N_JOINTS]> = None;
    let mut closure = f64::INFINITY;
    for step in 1..=params.max_steps {
        let mut v = null_direction(&MotorConfig(m))?;
        if let Some(p) = prev {
            let dot: f64 = v.iter().zip(&p).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                for c in &mut v {
                    *c = -*c;
                }
            }
        }
        for k in 0..N_JOINTS {
            m[k] += params.mu * v[k];
        }
        if params.correct_drift {
            project_to_pose(&mut m, &target);
        }
        points.push(m);
        prev = Some(v);

        if step >= params.min_steps {
            closure = motor_distance(&m, &m0.0)?;
            if closure <= params.epsilon {
                return Ok(RawTrace { points });
            }
        }
    }
    Err(Error::NonClosure {
        steps: params.max_steps,
        distance: closure,
    })
}

/// Resamples a closed loop to `count` points evenly spaced in wrapped arc
/// length, including the closing segment from the last point back to the
/// first. Output lives in the unwrapped chart of `raw[0]`.
pub fn resample_loop(raw: &[[f64; N_JOINTS]], count: usize) -> Result<Vec<[f64; N_JOINTS]>> {
    if raw.len() < 3 {
        return Err(Error::invalid(format!(
            "closed loop needs at least 3 points, got {}",
            raw.len()
        )));
    }
    if count == 0 {
        return Err(Error::invalid("resample count must be positive"));
    }
    let step = |a: &[f64; N_JOINTS], b: &[f64; N_JOINTS]| -> [f64; N_JOINTS] {
        std::array::from_fn(|k| signed_wrap(b[k] - a[k]))
    };

    // Unwrapped chart: vertex positions and the closing vertex.
    let n = raw.len();
    let mut chart = Vec::with_capacity(n + 1);
    chart.push(raw[0]);
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for k in 0..n {
        let next = &raw[(k + 1) % n];
        let d = step(&raw[k], next);
        let last = chart[k];
        chart.push(std::array::from_fn(|c| last[c] + d[c]));
        let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        cumulative.push(cumulative[k] + len);
    }
    let total = cumulative[n];
    if total <= 0.0 {
        return Err(Error::invalid("loop has zero length"));
    }

    let mut out = Vec::with_capacity(count);
    out.push(raw[0]);
    let mut seg = 0;
    for i in 1..count {
        let t = total * i as f64 / count as f64;
        while seg + 1 < n && cumulative[seg + 1] < t {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let f = if len > 0.0 { (t - cumulative[seg]) / len } else { 0.0 };
        let (a, b) = (chart[seg], chart[seg + 1]);
        out.push(std::array::from_fn(|c| a[c] + f * (b[c] - a[c])));
    }
    Ok(out)
}

/// Difference reduced to [-π, π) with its sign preserved.
#[inline]
fn signed_wrap(d: f64) -> f64 {
    let r = (d + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    if r >= std::f64::consts::PI {
        r - TAU
    } else {
        r
    }
}

/// Traces and resamples the kernel manifold through `m0`.
pub fn sample_manifold(m0: &MotorConfig, params: &ContinuationParams) -> Result<KernelManifold> {
    let raw = trace_kernel(m0, params)?;
    let samples = resample_loop(&raw.points, SAMPLES_PER_MANIFOLD)?;
    Ok(KernelManifold {
        seed_config: *m0,
        raw_count: raw.steps(),
        samples: samples.into_iter().map(MotorConfig).collect(),
    })
}

impl KernelManifold {
    /// Largest lens-position deviation from the seed pose over all samples.
    pub fn pose_drift(&self) -> f64 {
        let p0 = forward_kinematics(&self.seed_config);
        self.samples
            .iter()
            .map(|m| {
                let p = forward_kinematics(m);
                (p.x - p0.x).hypot(p.y - p0.y)
            })
            .fold(0.0, f64::max)
    }

    /// Largest optical-axis deviation (radians) from the seed pose.
    pub fn orientation_drift(&self) -> f64 {
        let a0 = forward_kinematics(&self.seed_config).alpha;
        self.samples
            .iter()
            .map(|m| wrap_diff(canonical_angle(forward_kinematics(m).alpha) - canonical_angle(a0)).abs())
            .fold(0.0, f64::max)
    }
}
