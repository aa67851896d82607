//! Experiment configuration: one TOML document, every field optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smspace::analysis::{TopologyProbes, TAU_POSE};
use smspace::kernel::ContinuationParams;
use smspace::kinematics::WorkingSpace;
use smspace::seed::{derive_seed, sha256_hex};
use smspace::sensor::{Region, RetinaGeometry, ARM_SOURCES, TOY_SOURCES};

use crate::error::{CliError, CliResult};

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Explore,
    Metric,
    Embed,
    Analyze,
    Toy,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Explore, Stage::Metric, Stage::Embed, Stage::Analyze, Stage::Toy];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Explore => "explore",
            Stage::Metric => "metric",
            Stage::Embed => "embed",
            Stage::Analyze => "analyze",
            Stage::Toy => "toy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    /// Workspace draws allowed per manifold before the run is aborted.
    pub max_draws_per_manifold: usize,
    /// Numerical failures (singular or non-closing traces) tolerated per
    /// manifold before the run is aborted.
    pub max_numerical_retries: usize,
    /// Abort when the overall rejection rate exceeds this fraction.
    pub max_rejection_rate: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            max_draws_per_manifold: 10_000,
            max_numerical_retries: 10,
            max_rejection_rate: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub count: usize,
    pub sources: usize,
    pub region: Region,
    /// Explicit environment seeds; derived from the master seed when empty.
    pub seeds: Vec<u64>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            count: 3,
            sources: ARM_SOURCES,
            region: Region::arm_default(),
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub rate_start: f64,
    pub rate_end: f64,
    pub init_noise: f64,
    /// Overrides the derived embedding seed.
    pub seed: Option<u64>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 3,
            epochs: 50,
            rate_start: 0.5,
            rate_end: 0.01,
            init_noise: 0.01,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub tau_pose: f64,
    pub probes: TopologyProbes,
    /// Manifolds (taken in id order) entering the external correlation.
    pub correlation_sample: usize,
    pub neighbourhood_k: usize,
    pub neighbourhood_min: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tau_pose: TAU_POSE,
            probes: TopologyProbes::default(),
            correlation_sample: 300,
            neighbourhood_k: 10,
            neighbourhood_min: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub environments: usize,
    pub sources: usize,
    pub region: Region,
    /// Lattice half-width in steps, per motor.
    pub lattice_half: i32,
    pub lattice_step: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            environments: 2,
            sources: TOY_SOURCES,
            region: Region::toy_default(),
            lattice_half: 8,
            lattice_step: 0.125,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of kernel manifolds (M).
    pub manifolds: usize,
    pub master_seed: u64,
    pub workspace: WorkingSpace,
    pub continuation: ContinuationParams,
    pub exploration: ExplorationConfig,
    pub retina: RetinaGeometry,
    pub environments: EnvironmentConfig,
    pub embedding: EmbeddingConfig,
    pub analysis: AnalysisConfig,
    pub toy: ToyConfig,
    /// Stages run by `all`.
    pub stages: Vec<Stage>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifolds: 2500,
            master_seed: 0,
            workspace: WorkingSpace::default(),
            continuation: ContinuationParams::default(),
            exploration: ExplorationConfig::default(),
            retina: RetinaGeometry::default(),
            environments: EnvironmentConfig::default(),
            embedding: EmbeddingConfig::default(),
            analysis: AnalysisConfig::default(),
            toy: ToyConfig::default(),
            stages: Stage::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.manifolds < 2 {
            return bad(format!("manifolds must be at least 2 (got {})", self.manifolds));
        }
        self.workspace.validate()?;
        self.continuation.validate()?;
        self.retina.validate()?;
        let ex = &self.exploration;
        if ex.max_draws_per_manifold == 0 || !(0.0..1.0).contains(&ex.max_rejection_rate) {
            return bad("exploration budgets must be positive and the rejection limit in [0, 1)".into());
        }
        let env = &self.environments;
        if env.count < 2 || env.sources == 0 {
            return bad("need at least two environments with at least one source".into());
        }
        if !env.seeds.is_empty() && env.seeds.len() != env.count {
            return bad(format!("{} environment seeds given for {} environments", env.seeds.len(), env.count));
        }
        if self.embedding.dim == 0 || self.embedding.epochs == 0 {
            return bad("embedding dim and epochs must be positive".into());
        }
        let an = &self.analysis;
        if !positive(an.tau_pose) || an.correlation_sample < 2 || an.neighbourhood_k == 0 {
            return bad("analysis thresholds must be positive".into());
        }
        if an.probes.sweep_steps < 3 || an.probes.grid < 2 {
            return bad("probe families need at least 3 sweep steps and a 2x2 grid".into());
        }
        if self.toy.environments == 0 || self.toy.sources == 0 || self.toy.lattice_half < 1 || !positive(self.toy.lattice_step)
        {
            return bad("toy settings must be positive".into());
        }
        Ok(())
    }

    pub fn environment_seed(&self, k: usize) -> u64 {
        self.environments
            .seeds
            .get(k)
            .copied()
            .unwrap_or_else(|| derive_seed(self.master_seed, "environment", k as u64))
    }

    pub fn toy_environment_seed(&self, k: usize) -> u64 {
        derive_seed(self.master_seed, "toy-environment", k as u64)
    }

    pub fn embedding_seed(&self) -> u64 {
        self.embedding
            .seed
            .unwrap_or_else(|| derive_seed(self.master_seed, "embedding", 0))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// False for NaN.
fn positive(x: f64) -> bool {
    x > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_paper_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.manifolds, 2500);
        assert_eq!(cfg.continuation.mu, 1e-3);
        assert_eq!(cfg.continuation.epsilon, 1e-2);
        assert_eq!(cfg.continuation.min_steps, 50);
        assert_eq!(cfg.environments.sources, 10);
        assert_eq!(cfg.workspace, WorkingSpace::default());
        assert_eq!(cfg.stages, Stage::ALL.to_vec());
    }

    #[test]
    fn nested_overrides() {
        let cfg = ExperimentConfig::from_toml(
            "manifolds = 40\nmaster_seed = 9\n[workspace]\ncenter = [2.0, 0.5]\nwidth = 0.5\nheight = 0.5\n\
             [continuation]\ncorrect_drift = true\n[environments]\nseeds = [1, 2, 3]\n",
        )
        .unwrap();
        assert_eq!(cfg.manifolds, 40);
        assert_eq!(cfg.workspace.center, [2.0, 0.5]);
        assert!(cfg.continuation.correct_drift);
        assert_eq!(cfg.continuation.mu, 1e-3);
        assert_eq!(cfg.environment_seed(2), 3);
    }

    #[test]
    fn invalid_documents_rejected() {
        for text in [
            "manifolds = 1",
            "unknown = 3",
            "[continuation]\nmu = 0.5",
            "[environments]\ncount = 1",
            "[environments]\nseeds = [1]",
            "[embedding]\ndim = 0",
            "manifolds = \"many\"",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn derived_seeds_follow_master_seed() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            master_seed: 1,
            ..Default::default()
        };
        assert_ne!(a.environment_seed(0), b.environment_seed(0));
        assert_ne!(a.environment_seed(0), a.environment_seed(1));
        assert_ne!(a.embedding_seed(), b.embedding_seed());
        assert_eq!(a.hash(), ExperimentConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
