//! Light-source environments and the sensory maps of the agents.
//!
//! The arm carries a pinhole retina: each source in the field of view projects
//! to a retinal coordinate, and each cell responds with a unit-width Gaussian
//! of its distance to that projection, attenuated by the inverse distance from
//! lens to source. The toy agents use two point sensors with an inverse-square
//! response.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, MotorConfig, RetinaPose};

/// Sources in an arm environment.
pub const ARM_SOURCES: usize = 10;
/// Sources in a toy environment.
pub const TOY_SOURCES: usize = 5;

/// Half the spacing between the two sensors of a toy agent.
pub const TOY_SENSOR_OFFSET: f64 = 0.25;
/// Height of the toy sensors above the rail.
pub const TOY_SENSOR_HEIGHT: f64 = 0.25;

/// Closed axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Region {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Region { min, max }
    }

    /// Region surrounding the arm's default working space.
    pub fn arm_default() -> Self {
        Region::new([-1.0, -3.0], [4.0, 3.0])
    }

    /// Band above the toy agents' rail.
    pub fn toy_default() -> Self {
        Region::new([-3.0, 1.0], [3.0, 3.0])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }

    fn validate(&self) -> Result<()> {
        let ok = (0..2).all(|k| {
            self.min[k].is_finite() && self.max[k].is_finite() && self.min[k] < self.max[k]
        });
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("region must be finite and non-empty"))
        }
    }
}

/// A static set of point light sources.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub seed: u64,
    pub sources: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct EnvironmentDoc {
    seed: u64,
    sources: Vec<[f64; 2]>,
}

impl Environment {
    pub fn new(seed: u64, sources: Vec<[f64; 2]>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::invalid("environment needs at least one source"));
        }
        if sources.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("source positions must be finite"));
        }
        Ok(Environment { seed, sources })
    }

    /// JSON document `{"seed": .., "sources": [[x, y], ..]}` with every
    /// coordinate written to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut s = format!("{{\"seed\":{},\"sources\":[", self.seed);
        for (i, [x, y]) in self.sources.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "[{x:.16e},{y:.16e}]").unwrap();
        }
        s.push_str("]}");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EnvironmentDoc = serde_json::from_str(text)?;
        Environment::new(doc.seed, doc.sources)
    }
}

/// `l_count` sources drawn uniformly over `region`, reproducible from `seed`.
pub fn random_environment(l_count: usize, region: &Region, seed: u64) -> Result<Environment> {
    if l_count == 0 {
        return Err(Error::invalid("environment needs at least one source"));
    }
    region.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = (0..l_count)
        .map(|_| {
            [
                rng.random_range(region.min[0]..=region.max[0]),
                rng.random_range(region.min[1]..=region.max[1]),
            ]
        })
        .collect();
    Environment::new(seed, sources)
}

/// Cell excitations; all entries finite and non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct SensoryVector(pub Vec<f64>);

impl SensoryVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Max-norm distance to another vector of the same length.
    pub fn max_abs_diff(&self, other: &SensoryVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(default)]
pub struct RetinaGeometry {
    pub focal_distance: f64,
    /// Retinal coordinates of the cells, increasing and symmetric about 0.
    pub cell_positions: Vec<f64>,
    /// Sources at a bearing of at least this angle from the optical axis are
    /// not imaged.
    pub fov_halfangle: f64,
}

impl Default for RetinaGeometry {
    fn default() -> Self {
        RetinaGeometry {
            focal_distance: 0.2,
            cell_positions: (0..6).map(|i| -0.5 + 0.2 * i as f64).collect(),
            fov_halfangle: 1.2,
        }
    }
}

impl RetinaGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_distance > 0.0 && self.focal_distance.is_finite()) {
            return Err(Error::invalid("focal distance must be positive"));
        }
        if !(self.fov_halfangle > 0.0 && self.fov_halfangle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("field-of-view half-angle must lie in (0, π/2)"));
        }
        let c = &self.cell_positions;
        if c.is_empty() || c.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("cell positions must be strictly increasing"));
        }
        let n = c.len();
        if (0..n).any(|i| (c[i] + c[n - 1 - i]).abs() > 1e-12) {
            return Err(Error::invalid("cell positions must be symmetric about 0"));
        }
        Ok(())
    }
}

#[inline]
fn bearing(pose: &RetinaPose, source: [f64; 2]) -> Result<(f64, f64)> {
    let dx = source[0] - pose.x;
    let dy = source[1] - pose.y;
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return Err(Error::DegenerateGeometry("light source coincides with the lens".into()));
    }
    let beta = (dy.atan2(dx) - pose.alpha + std::f64::consts::PI)
        .rem_euclid(std::f64::consts::TAU)
        - std::f64::consts::PI;
    Ok((beta, dist))
}

/// Retinal coordinate of a source, or `None` outside the field of view.
pub fn project_source(
    pose: &RetinaPose,
    geom: &RetinaGeometry,
    source: [f64; 2],
) -> Result<Option<f64>> {
    let (beta, _) = bearing(pose, source)?;
    Ok((beta.abs() < geom.fov_halfangle).then(|| geom.focal_distance * beta.tan()))
}

pub fn retina_response(
    pose: &RetinaPose,
    geom: &RetinaGeometry,
    env: &Environment,
) -> Result<SensoryVector> {
    let mut s = vec![0.0; geom.cell_positions.len()];
    for &src in &env.sources {
        let (beta, dist) = bearing(pose, src)?;
        if beta.abs() >= geom.fov_halfangle {
            continue;
        }
        let proj = geom.focal_distance * beta.tan();
        for (cell, out) in geom.cell_positions.iter().zip(&mut s) {
            let d = cell - proj;
            *out += (-d * d).exp() / dist;
        }
    }
    Ok(SensoryVector(s))
}

/// Sensory input of the arm at motor configuration `m`.
pub fn arm_response(m: &MotorConfig, geom: &RetinaGeometry, env: &Environment) -> Result<SensoryVector> {
    retina_response(&forward_kinematics(m), geom, env)
}

/// The two T-shaped toy agents moving along a rail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyAgent {
    /// Position set directly by a single motor.
    OneMotor,
    /// Position is the sum of two redundant motors.
    TwoMotor,
}

impl ToyAgent {
    pub fn motors(self) -> usize {
        match self {
            ToyAgent::OneMotor => 1,
            ToyAgent::TwoMotor => 2,
        }
    }

    /// Position along the rail seen from outside.
    pub fn position(self, m: &[f64]) -> Result<f64> {
        if m.len() != self.motors() {
            return Err(Error::DimensionMismatch {
                left: m.len(),
                right: self.motors(),
            });
        }
        Ok(m.iter().sum())
    }

    /// World positions of the two sensors.
    pub fn sensors(self, m: &[f64]) -> Result<[[f64; 2]; 2]> {
        let x = self.position(m)?;
        Ok([
            [x - TOY_SENSOR_OFFSET, TOY_SENSOR_HEIGHT],
            [x + TOY_SENSOR_OFFSET, TOY_SENSOR_HEIGHT],
        ])
    }
}

pub fn toy_response(agent: ToyAgent, m: &[f64], env: &Environment) -> Result<SensoryVector> {
    let sensors = agent.sensors(m)?;
    let mut s = vec![0.0; 2];
    for (pos, out) in sensors.iter().zip(&mut s) {
        for src in &env.sources {
            let d2 = (src[0] - pos[0]).powi(2) + (src[1] - pos[1]).powi(2);
            if d2 == 0.0 {
                return Err(Error::DegenerateGeometry(
                    "light source coincides with a toy sensor".into(),
                ));
            }
            *out += 1.0 / d2;
        }
    }
    Ok(SensoryVector(s))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn environments_are_seeded() {
        let r = Region::arm_default();
        let a = random_environment(10, &r, 42).unwrap();
        assert_eq!(a, random_environment(10, &r, 42).unwrap());
        assert_ne!(a.sources, random_environment(10, &r, 43).unwrap().sources);
        assert!(a.sources.iter().all(|&p| r.contains(p)));
        let unit = Region::new([0.0, 0.0], [1.0, 1.0]);
        let one = random_environment(1, &unit, 9).unwrap();
        assert_eq!(one.sources.len(), 1);
        assert!(unit.contains(one.sources[0]));
        assert!(random_environment(0, &r, 1).is_err());
        assert!(random_environment(3, &Region::new([0.0, 0.0], [0.0, 1.0]), 1).is_err());
    }

    #[test]
    fn environment_json_is_exact() {
        let env = random_environment(10, &Region::arm_default(), 7).unwrap();
        let text = env.to_json();
        assert!(text.starts_with("{\"seed\":7,\"sources\":[["));
        assert_eq!(Environment::from_json(&text).unwrap(), env);
        assert!(Environment::from_json("{\"seed\":1,\"sources\":[]}").is_err());
    }

    #[test]
    fn geometry_default_is_valid() {
        let g = RetinaGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.cell_positions.len(), 6);
        let bad = RetinaGeometry {
            cell_positions: vec![-0.1, 0.3],
            ..g.clone()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn projection_cases() {
        let g = RetinaGeometry::default();
        let pose = RetinaPose::new(1.0, 1.0, FRAC_PI_2);
        assert_eq!(project_source(&pose, &g, [1.0, 3.0]).unwrap(), Some(0.0));
        // Inverse of the projection: aim at the third cell.
        let beta = (g.cell_positions[2] / g.focal_distance).atan();
        let dir = pose.alpha + beta;
        let src = [pose.x + 2.0 * dir.cos(), pose.y + 2.0 * dir.sin()];
        let p = project_source(&pose, &g, src).unwrap().unwrap();
        assert!((p - g.cell_positions[2]).abs() < 1e-12);
        assert_eq!(project_source(&pose, &g, [1.0, -2.0]).unwrap(), None);
        assert!(project_source(&pose, &g, [1.0, 1.0]).is_err());
    }

    #[test]
    fn response_unit_case_and_empty() {
        let g = RetinaGeometry {
            focal_distance: 0.2,
            cell_positions: vec![-0.2, 0.0, 0.2],
            fov_halfangle: 1.2,
        };
        let pose = RetinaPose::new(0.0, 0.0, 0.0);
        let env = Environment::new(0, vec![[1.0, 0.0]]).unwrap();
        let s = retina_response(&pose, &g, &env).unwrap();
        assert_eq!(s.0[1], 1.0);
        assert_relative_eq!(s.0[0], (-0.04f64).exp(), max_relative = 1e-15);

        let behind = Environment::new(0, vec![[-1.0, 0.0], [0.0, 3.0]]).unwrap();
        let s = retina_response(&pose, &g, &behind).unwrap();
        assert!(s.0.iter().all(|&v| v == 0.0));

        let lens = Environment::new(0, vec![[0.0, 0.0]]).unwrap();
        assert!(retina_response(&pose, &g, &lens).is_err());
    }

    #[test]
    fn doubling_distance_halves_on_axis_cell() {
        let g = RetinaGeometry {
            cell_positions: vec![-0.1, 0.1],
            ..RetinaGeometry::default()
        };
        let pose = RetinaPose::new(0.5, -0.5, 0.3);
        let at = |r: f64| Environment::new(0, vec![[0.5 + r * 0.3f64.cos(), -0.5 + r * 0.3f64.sin()]]).unwrap();
        let near = retina_response(&pose, &g, &at(0.7)).unwrap();
        let far = retina_response(&pose, &g, &at(1.4)).unwrap();
        for k in 0..2 {
            assert_relative_eq!(far.0[k], 0.5 * near.0[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn toy_inverse_square() {
        let above = Environment::new(0, vec![[-TOY_SENSOR_OFFSET, TOY_SENSOR_HEIGHT + 1.0]]).unwrap();
        let s = toy_response(ToyAgent::OneMotor, &[0.0], &above).unwrap();
        assert_relative_eq!(s.0[0], 1.0, max_relative = 1e-15);
        let far = Environment::new(0, vec![[0.0, 1e6]]).unwrap();
        let s = toy_response(ToyAgent::OneMotor, &[0.0], &far).unwrap();
        assert_relative_eq!(s.0[0], 1e-12, max_relative = 1e-6);
        assert_relative_eq!(s.0[1], 1e-12, max_relative = 1e-6);
        assert!(toy_response(ToyAgent::TwoMotor, &[0.0], &far).is_err());
        let on = Environment::new(0, vec![[TOY_SENSOR_OFFSET, TOY_SENSOR_HEIGHT]]).unwrap();
        assert!(toy_response(ToyAgent::OneMotor, &[0.0], &on).is_err());
    }

    #[test]
    fn toy_two_motor_redundancy() {
        let env = random_environment(TOY_SOURCES, &Region::toy_default(), 3).unwrap();
        let a = toy_response(ToyAgent::TwoMotor, &[0.4, -0.1], &env).unwrap();
        let b = toy_response(ToyAgent::TwoMotor, &[0.4 + 0.5, -0.1 - 0.5], &env).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    // Direct re-evaluation: explicit loops over cells then sources.
    fn brute_retina(pose: &RetinaPose, g: &RetinaGeometry, env: &Environment) -> Vec<f64> {
        let mut out = Vec::new();
        for &cell in &g.cell_positions {
            let mut total = 0.0;
            for src in &env.sources {
                let (dx, dy) = (src[0] - pose.x, src[1] - pose.y);
                let (ca, sa) = (pose.alpha.cos(), pose.alpha.sin());
                let along = dx * ca + dy * sa;
                let across = -dx * sa + dy * ca;
                let beta = across.atan2(along);
                if beta.abs() < g.fov_halfangle {
                    let proj = g.focal_distance * across / along;
                    total += (-(cell - proj).powi(2)).exp() / (dx * dx + dy * dy).sqrt();
                }
            }
            out.push(total);
        }
        out
    }

    fn brute_toy(x: f64, env: &Environment) -> Vec<f64> {
        [-TOY_SENSOR_OFFSET, TOY_SENSOR_OFFSET]
            .iter()
            .map(|off| {
                env.sources
                    .iter()
                    .map(|s| 1.0 / ((s[0] - x - off).powi(2) + (s[1] - TOY_SENSOR_HEIGHT).powi(2)))
                    .sum()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn retina_matches_brute_force(seed in any::<u64>(), x in 1.0..2.5f64, y in -1.0..1.0f64, a in 0.0..2.0 * PI) {
            let env = random_environment(ARM_SOURCES, &Region::arm_default(), seed).unwrap();
            let g = RetinaGeometry::default();
            let pose = RetinaPose::new(x, y, a);
            let s = retina_response(&pose, &g, &env).unwrap();
            let b = brute_retina(&pose, &g, &env);
            for (u, v) in s.0.iter().zip(&b) {
                prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
                prop_assert!(*u >= 0.0 && u.is_finite());
            }
        }

        #[test]
        fn toy_matches_brute_force(seed in any::<u64>(), m1 in -2.0..2.0f64, m2 in -2.0..2.0f64) {
            let env = random_environment(TOY_SOURCES, &Region::toy_default(), seed).unwrap();
            let s = toy_response(ToyAgent::TwoMotor, &[m1, m2], &env).unwrap();
            let b = brute_toy(m1 + m2, &env);
            for (u, v) in s.0.iter().zip(&b) {
                prop_assert!((u - v).abs() <= 1e-12 * v.abs());
            }
        }

        #[test]
        fn equal_poses_give_equal_inputs(seed in any::<u64>(), m in prop::array::uniform4(-PI..PI), k in 0usize..4) {
            let env = random_environment(ARM_SOURCES, &Region::arm_default(), seed).unwrap();
            let g = RetinaGeometry::default();
            let mut shifted = m;
            shifted[k] += 2.0 * PI;
            let a = arm_response(&MotorConfig(m), &g, &env).unwrap();
            let b = arm_response(&MotorConfig(shifted), &g, &env).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-9 * (1.0 + a.0.iter().fold(0.0f64, |x, y| x.max(*y))));
            let again = arm_response(&MotorConfig(m), &g, &env).unwrap();
            prop_assert_eq!(a, again);
        }

        #[test]
        fn environments_change_the_input(seed in 0u64..1_000_000, x in 1.0..2.5f64, y in -1.0..1.0f64, a in 0.0..2.0 * PI) {
            let g = RetinaGeometry::default();
            let pose = RetinaPose::new(x, y, a);
            let e1 = random_environment(ARM_SOURCES, &Region::arm_default(), seed).unwrap();
            let e2 = random_environment(ARM_SOURCES, &Region::arm_default(), seed + 1).unwrap();
            let s1 = retina_response(&pose, &g, &e1).unwrap();
            let s2 = retina_response(&pose, &g, &e2).unwrap();
            // A retina facing away from the source region sees nothing in either.
            prop_assume!(s1.0.iter().chain(&s2.0).any(|v| *v > 0.0));
            prop_assert!(s1.max_abs_diff(&s2) > 1e-9);
        }
    }
}
