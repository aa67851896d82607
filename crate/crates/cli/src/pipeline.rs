//! The experiment stages, as plain functions over in-memory data and as
//! cached runs over a [`RunDir`].

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smspace::analysis::{
    check_environment_invariance, check_pose_constancy, toy_experiment, toy_lattice, topology_report,
    InvarianceReport, PoseReport, TopologyReport, ToyReport,
};
use smspace::embedding::{cca, neighborhood_preservation, CcaSchedule, EmbeddingResult};
use smspace::kernel::{null_direction, sample_manifold, KernelManifold};
use smspace::kinematics::{forward_kinematics, in_working_space, MotorConfig, RetinaPose};
use smspace::manifold_set::ManifoldSet;
use smspace::metric::{distance_matrix_tiled, DistanceMatrix, DEFAULT_BLOCK};
use smspace::parallel;
use smspace::seed::derive_seed;
use smspace::sensor::{random_environment, Environment, ToyAgent};

use crate::config::{ExperimentConfig, Stage};
use crate::error::{CliError, CliResult};
use crate::run_dir::{stage_key, RunDir};

pub const MANIFOLDS_FILE: &str = "manifolds.json";
pub const DISTANCES_FILE: &str = "distances.bin";
pub const DISTANCES_CSV: &str = "distances.csv";
pub const EMBEDDING_FILE: &str = "embedding.json";
pub const EMBEDDING_CSV: &str = "embedding.csv";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const TOY_FILE: &str = "toy.json";

/// Draw statistics of one exploration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplorationStats {
    pub accepted: usize,
    pub draws: usize,
    pub outside_workspace: usize,
    pub singular: usize,
    pub numerical_retries: usize,
}

impl ExplorationStats {
    pub fn rejection_rate(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            (self.outside_workspace + self.singular) as f64 / self.draws as f64
        }
    }

    fn add(&mut self, o: &ExplorationStats) {
        self.accepted += o.accepted;
        self.draws += o.draws;
        self.outside_workspace += o.outside_workspace;
        self.singular += o.singular;
        self.numerical_retries += o.numerical_retries;
    }
}

enum SlotError {
    DrawsExhausted,
    Numerical(smspace::Error),
}

/// Draws configurations for one manifold slot from its own RNG stream until
/// one lies in the working space and traces cleanly.
fn explore_slot(cfg: &ExperimentConfig, slot: usize) -> (Result<KernelManifold, SlotError>, ExplorationStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, "explore", slot as u64));
    let mut stats = ExplorationStats::default();
    let budget = &cfg.exploration;
    while stats.draws < budget.max_draws_per_manifold {
        let m = MotorConfig(std::array::from_fn(|_| rng.random_range(0.0..TAU)));
        stats.draws += 1;
        if !in_working_space(&forward_kinematics(&m), &cfg.workspace) {
            stats.outside_workspace += 1;
            continue;
        }
        if null_direction(&m).is_err() {
            stats.singular += 1;
            continue;
        }
        match sample_manifold(&m, &cfg.continuation) {
            Ok(manifold) => {
                stats.accepted = 1;
                return (Ok(manifold), stats);
            }
            Err(e) if e.is_numerical() => {
                stats.numerical_retries += 1;
                if stats.numerical_retries > budget.max_numerical_retries {
                    return (Err(SlotError::Numerical(e)), stats);
                }
            }
            Err(e) => return (Err(SlotError::Numerical(e)), stats),
        }
    }
    (Err(SlotError::DrawsExhausted), stats)
}

fn rejection_diagnostic(cfg: &ExperimentConfig, stats: &ExplorationStats) -> String {
    let (near, far) = cfg.workspace.base_distance_bounds();
    let (x0, x1) = cfg.workspace.x_range();
    let (y0, y1) = cfg.workspace.y_range();
    format!(
        "{} of {} draws rejected ({:.2}%, limit {:.2}%): {} outside the working space, {} singular. \
         Working space x in [{x0}, {x1}], y in [{y0}, {y1}] spans base distances [{near:.3}, {far:.3}]; \
         the arm reaches base distances below 3",
        stats.outside_workspace + stats.singular,
        stats.draws,
        100.0 * stats.rejection_rate(),
        100.0 * cfg.exploration.max_rejection_rate,
        stats.outside_workspace,
        stats.singular,
    )
}

/// Samples `cfg.manifolds` kernel manifolds. Slot `i` uses its own seed
/// derived from the master seed, so the result does not depend on the number
/// of workers.
pub fn explore(cfg: &ExperimentConfig) -> CliResult<(ManifoldSet, ExplorationStats)> {
    cfg.validate()?;
    let results = parallel::map_range(cfg.manifolds, |i| explore_slot(cfg, i));
    let mut total = ExplorationStats::default();
    for (_, s) in &results {
        total.add(s);
    }
    if total.rejection_rate() > cfg.exploration.max_rejection_rate {
        return Err(CliError::Rejection(rejection_diagnostic(cfg, &total)));
    }
    let mut manifolds = Vec::with_capacity(cfg.manifolds);
    for (slot, (r, _)) in results.into_iter().enumerate() {
        match r {
            Ok(m) => manifolds.push(m),
            Err(SlotError::DrawsExhausted) => {
                return Err(CliError::Rejection(format!(
                    "slot {slot} exhausted {} draws. {}",
                    cfg.exploration.max_draws_per_manifold,
                    rejection_diagnostic(cfg, &total)
                )))
            }
            Err(SlotError::Numerical(e)) => {
                return Err(CliError::Numerical(format!("slot {slot}: {e} (retry budget exhausted)")))
            }
        }
    }
    Ok((
        ManifoldSet::new(cfg.master_seed, cfg.workspace, cfg.continuation, manifolds),
        total,
    ))
}

pub fn metric(set: &ManifoldSet) -> CliResult<DistanceMatrix> {
    if set.manifolds.is_empty() {
        return Err(CliError::Usage("manifold set is empty".into()));
    }
    let ids = (0..set.manifolds.len() as u64).collect();
    Ok(distance_matrix_tiled(&set.manifolds, ids, DEFAULT_BLOCK)?)
}

pub fn cca_schedule(cfg: &ExperimentConfig, dm: &DistanceMatrix) -> CcaSchedule {
    let e = &cfg.embedding;
    CcaSchedule {
        epochs: e.epochs,
        rate_start: e.rate_start,
        rate_end: e.rate_end,
        init_noise: e.init_noise,
        ..CcaSchedule::for_distances(dm, cfg.embedding_seed())
    }
}

pub fn embed(cfg: &ExperimentConfig, dm: &DistanceMatrix) -> CliResult<EmbeddingResult> {
    Ok(cca(dm, cfg.embedding.dim, &cca_schedule(cfg, dm))?)
}

pub fn environments(cfg: &ExperimentConfig) -> CliResult<Vec<Environment>> {
    let e = &cfg.environments;
    (0..e.count)
        .map(|k| Ok(random_environment(e.sources, &e.region, cfg.environment_seed(k))?))
        .collect()
}

pub fn toy_environments(cfg: &ExperimentConfig) -> CliResult<Vec<Environment>> {
    let t = &cfg.toy;
    (0..t.environments)
        .map(|k| Ok(random_environment(t.sources, &t.region, cfg.toy_environment_seed(k))?))
        .collect()
}

/// Largest level-set deviation and line-oracle error accepted for the
/// two-motor agent.
pub const TOY_MAX_DEVIATION: f64 = 1e-6;
pub const TOY_MAX_RELATIVE_ERROR: f64 = 0.01;
/// Minimum relative sensory discrepancy between environments for the
/// one-motor agent.
pub const TOY_MIN_DISCREPANCY: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyReports {
    pub environment_seeds: Vec<u64>,
    pub one_motor: ToyReport,
    pub two_motor: ToyReport,
    pub one_motor_varies: bool,
    pub two_motor_matches_oracle: bool,
    pub pass: bool,
}

pub fn toy(cfg: &ExperimentConfig) -> CliResult<ToyReports> {
    let envs = toy_environments(cfg)?;
    let t = &cfg.toy;
    let one_motor = toy_experiment(
        ToyAgent::OneMotor,
        &envs,
        &toy_lattice(ToyAgent::OneMotor, t.lattice_half, t.lattice_step),
    )?;
    let two_motor = toy_experiment(
        ToyAgent::TwoMotor,
        &envs,
        &toy_lattice(ToyAgent::TwoMotor, t.lattice_half, t.lattice_step),
    )?;
    let one_motor_varies = match &one_motor {
        ToyReport::OneMotor { discrepancy, .. } => discrepancy.iter().all(|&d| d >= TOY_MIN_DISCREPANCY),
        _ => false,
    };
    let two_motor_matches_oracle = match &two_motor {
        ToyReport::TwoMotor {
            max_deviation,
            max_relative_error,
            partition_consistent,
            pairs,
            ..
        } => {
            !pairs.is_empty()
                && *max_deviation <= TOY_MAX_DEVIATION
                && *max_relative_error <= TOY_MAX_RELATIVE_ERROR
                && *partition_consistent
        }
        _ => false,
    };
    Ok(ToyReports {
        environment_seeds: envs.iter().map(|e| e.seed).collect(),
        one_motor,
        two_motor,
        // A single environment cannot show variability; the check then only
        // covers the two-motor agent.
        one_motor_varies: one_motor_varies || envs.len() < 2,
        two_motor_matches_oracle,
        pass: (one_motor_varies || envs.len() < 2) && two_motor_matches_oracle,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighbourhoodCheck {
    pub k: usize,
    pub preservation: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub manifolds: usize,
    pub environment_seeds: Vec<u64>,
    pub pose: PoseReport,
    pub invariance: InvarianceReport,
    pub topology: TopologyReport,
    pub neighbourhood: NeighbourhoodCheck,
    pub toy: ToyReports,
    pub pass: bool,
}

impl AnalysisReport {
    pub fn summary(&self) -> String {
        let mark = |b: bool| if b { "PASS" } else { "FAIL" };
        let t = &self.topology;
        let inv = &self.invariance;
        let mut s = String::new();
        let mut line = |l: String| {
            s.push_str(&l);
            s.push('\n');
        };
        line(format!("manifolds analysed: {}", self.manifolds));
        line(format!(
            "{}  pose constancy: max drift {:.3e} (position), {:.3e} (orientation), tolerance {:.1e}",
            mark(self.pose.pass),
            self.pose.max_position_drift,
            self.pose.max_orientation_drift,
            self.pose.tau_pose
        ));
        line(format!(
            "{}  sensory invariance: {} flagged manifold x environment pairs, max spread / tolerance {:.3}",
            mark(inv.spread_pass),
            inv.flagged.len(),
            inv.max_relative_spread
        ));
        for e in &inv.environments {
            line(format!(
                "      environment {}: max spread {:.3e}, median tolerance {:.3e}, mean between-manifold {}",
                e.environment_seed,
                e.max_spread,
                e.median_tau_sense,
                e.mean_between.map_or("n/a".into(), |v| format!("{v:.3e}"))
            ));
        }
        line(format!("{}  sensory richness", mark(inv.richness_pass)));
        line(format!(
            "{}  alpha sweep closes: ratio {:.3}",
            mark(t.closes),
            t.full_sweep.ratio
        ));
        line(format!(
            "{}  half sweep stays open: ratio {:.3}",
            mark(t.half_stays_open),
            t.half_sweep.ratio
        ));
        line(format!(
            "{}  fixed-alpha sheets flat: residual variance {:?}",
            mark(t.sheets_flat),
            t.sheet_residuals.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>()
        ));
        line(format!(
            "{}  internal vs external distance: Spearman {}",
            mark(t.correlated),
            t.correlation.map_or("n/a".into(), |c| format!("{c:.4}"))
        ));
        line(format!(
            "{}  neighbourhood preservation (k = {}): {:.4}",
            mark(self.neighbourhood.pass),
            self.neighbourhood.k,
            self.neighbourhood.preservation
        ));
        line(format!("{}  one-motor toy varies across environments", mark(self.toy.one_motor_varies)));
        line(format!("{}  two-motor toy matches line oracle", mark(self.toy.two_motor_matches_oracle)));
        line(format!("overall: {}", mark(self.pass)));
        s
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let t = &self.topology;
        [
            (self.pose.pass, "pose constancy"),
            (self.invariance.spread_pass, "sensory invariance"),
            (self.invariance.richness_pass, "sensory richness"),
            (t.closes, "alpha sweep closure"),
            (t.half_stays_open, "half sweep openness"),
            (t.sheets_flat, "sheet flatness"),
            (t.correlated, "external correlation"),
            (self.neighbourhood.pass, "neighbourhood preservation"),
            (self.toy.pass, "toy agents"),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, name)| name)
        .collect()
    }
}

pub fn analyze(
    cfg: &ExperimentConfig,
    set: &ManifoldSet,
    dm: &DistanceMatrix,
    embedding: &EmbeddingResult,
) -> CliResult<AnalysisReport> {
    let n = set.manifolds.len();
    if dm.len() != n || embedding.coords.len() != n {
        return Err(CliError::Usage(format!(
            "artifacts disagree: {n} manifolds, {} matrix rows, {} embedded points (re-run upstream stages)",
            dm.len(),
            embedding.coords.len()
        )));
    }
    let an = &cfg.analysis;
    let envs = environments(cfg)?;
    let pose = check_pose_constancy(&set.manifolds, an.tau_pose);
    let invariance = check_environment_invariance(&set.manifolds, &envs, &cfg.retina, an.tau_pose)?;

    let sample: Vec<usize> = (0..n.min(an.correlation_sample)).collect();
    let sub_manifolds: Vec<KernelManifold> = sample.iter().map(|&i| set.manifolds[i].clone()).collect();
    let topology = topology_report(
        &cfg.workspace,
        &cfg.continuation,
        &an.probes,
        &sub_manifolds,
        &dm.select(&sample),
    )?;

    let k = an.neighbourhood_k.min(n - 1);
    let preservation = neighborhood_preservation(dm, embedding, k)?;
    let neighbourhood = NeighbourhoodCheck {
        k,
        preservation,
        threshold: an.neighbourhood_min,
        pass: preservation >= an.neighbourhood_min,
    };
    let toy = toy(cfg)?;
    let pass = pose.pass && invariance.pass && topology.pass && neighbourhood.pass && toy.pass;
    Ok(AnalysisReport {
        manifolds: n,
        environment_seeds: envs.iter().map(|e| e.seed).collect(),
        pose,
        invariance,
        topology,
        neighbourhood,
        toy,
        pass,
    })
}

/// Ground-truth pose of every manifold seed, in id order.
pub fn seed_poses(set: &ManifoldSet) -> Vec<RetinaPose> {
    set.manifolds.iter().map(|m| forward_kinematics(&m.seed_config)).collect()
}

// ---------------------------------------------------------------------------
// Cached stage runs over a run directory
// ---------------------------------------------------------------------------

/// What a stage run did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Cached,
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("report serializes");
    b.push(b'\n');
    b
}

fn log(stage: Stage, msg: impl AsRef<str>) {
    eprintln!("[{}] {}", stage.name(), msg.as_ref());
}

fn parse_manifolds(dir: &RunDir) -> CliResult<ManifoldSet> {
    let bytes = dir.read(MANIFOLDS_FILE)?;
    Ok(ManifoldSet::read(bytes.as_slice())?)
}

fn parse_distances(dir: &RunDir) -> CliResult<DistanceMatrix> {
    let bytes = dir.read(DISTANCES_FILE)?;
    Ok(DistanceMatrix::read_binary(bytes.as_slice())?)
}

fn parse_embedding(dir: &RunDir) -> CliResult<EmbeddingResult> {
    let bytes = dir.read(EMBEDDING_FILE)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("malformed {EMBEDDING_FILE}: {e}")))
}

#[derive(Serialize)]
struct ExploreSection<'a> {
    manifolds: usize,
    master_seed: u64,
    workspace: &'a smspace::kinematics::WorkingSpace,
    continuation: &'a smspace::kernel::ContinuationParams,
    exploration: &'a crate::config::ExplorationConfig,
}

pub fn run_exploration(cfg: &ExperimentConfig, dir: &mut RunDir, use_cache: bool) -> CliResult<StageOutcome> {
    let section = ExploreSection {
        manifolds: cfg.manifolds,
        master_seed: cfg.master_seed,
        workspace: &cfg.workspace,
        continuation: &cfg.continuation,
        exploration: &cfg.exploration,
    };
    let key = stage_key(Stage::Explore, &section, &BTreeMap::new());
    if use_cache && dir.is_cached(Stage::Explore, &key) {
        log(Stage::Explore, "up to date");
        return Ok(StageOutcome::Cached);
    }
    let start = Instant::now();
    let (set, stats) = explore(cfg)?;
    let hash = dir.write(MANIFOLDS_FILE, &set.to_bytes()?)?;
    log(
        Stage::Explore,
        format!(
            "{} manifolds from {} draws: {} outside working space, {} singular, rejection rate {:.2}%, {} numerical retries, {:.2?} on {} workers",
            stats.accepted,
            stats.draws,
            stats.outside_workspace,
            stats.singular,
            100.0 * stats.rejection_rate(),
            stats.numerical_retries,
            start.elapsed(),
            parallel::current_workers()
        ),
    );
    dir.record(Stage::Explore, key, BTreeMap::from([(MANIFOLDS_FILE.to_string(), hash)]))?;
    Ok(StageOutcome::Ran)
}

pub fn run_metric(dir: &mut RunDir, use_cache: bool) -> CliResult<StageOutcome> {
    let inputs = dir.hashes(&[MANIFOLDS_FILE])?;
    let key = stage_key(Stage::Metric, &(), &inputs);
    if use_cache && dir.is_cached(Stage::Metric, &key) {
        log(Stage::Metric, "up to date");
        return Ok(StageOutcome::Cached);
    }
    let set = parse_manifolds(dir)?;
    let start = Instant::now();
    let dm = metric(&set)?;
    let elapsed = start.elapsed();
    let pairs = dm.len() * (dm.len() - 1) / 2;
    let mut bin = Vec::new();
    dm.write_binary(&mut bin)?;
    let mut csv = Vec::new();
    dm.write_csv(&mut csv)?;
    let outputs = BTreeMap::from([
        (DISTANCES_FILE.to_string(), dir.write(DISTANCES_FILE, &bin)?),
        (DISTANCES_CSV.to_string(), dir.write(DISTANCES_CSV, &csv)?),
    ]);
    log(
        Stage::Metric,
        format!(
            "{} x {} matrix, {pairs} pairs in {elapsed:.2?} ({:.0} pairs/s) on {} workers",
            dm.len(),
            dm.len(),
            pairs as f64 / elapsed.as_secs_f64().max(1e-9),
            parallel::current_workers()
        ),
    );
    dir.record(Stage::Metric, key, outputs)?;
    Ok(StageOutcome::Ran)
}

pub fn run_embedding(cfg: &ExperimentConfig, dir: &mut RunDir, use_cache: bool) -> CliResult<StageOutcome> {
    let inputs = dir.hashes(&[DISTANCES_FILE])?;
    let section = (&cfg.embedding, cfg.embedding_seed());
    let key = stage_key(Stage::Embed, &section, &inputs);
    if use_cache && dir.is_cached(Stage::Embed, &key) {
        log(Stage::Embed, "up to date");
        return Ok(StageOutcome::Cached);
    }
    let dm = parse_distances(dir)?;
    let start = Instant::now();
    let emb = embed(cfg, &dm)?;
    let mut csv = Vec::new();
    emb.write_csv(dm.manifold_ids(), &mut csv)?;
    let outputs = BTreeMap::from([
        (EMBEDDING_FILE.to_string(), dir.write(EMBEDDING_FILE, &json_bytes(&emb))?),
        (EMBEDDING_CSV.to_string(), dir.write(EMBEDDING_CSV, &csv)?),
    ]);
    log(
        Stage::Embed,
        format!(
            "{} points in {} dimensions, final stress {:.4e}, {:.2?}",
            emb.coords.len(),
            emb.dim(),
            emb.final_stress,
            start.elapsed()
        ),
    );
    dir.record(Stage::Embed, key, outputs)?;
    Ok(StageOutcome::Ran)
}

fn environment_file(k: usize) -> String {
    format!("environment_{k}.json")
}

/// Runs the analysis, writes the reports, and fails with
/// [`CliError::AnalysisFailed`] when any check fails.
pub fn run_analysis(cfg: &ExperimentConfig, dir: &mut RunDir, use_cache: bool) -> CliResult<StageOutcome> {
    let inputs = dir.hashes(&[MANIFOLDS_FILE, DISTANCES_FILE, EMBEDDING_FILE])?;
    let section = (
        &cfg.analysis,
        &cfg.environments,
        &cfg.retina,
        &cfg.toy,
        cfg.master_seed,
        &cfg.workspace,
        &cfg.continuation,
    );
    let key = stage_key(Stage::Analyze, &section, &inputs);
    if use_cache && dir.is_cached(Stage::Analyze, &key) {
        log(Stage::Analyze, "up to date");
        let bytes = dir.read(ANALYSIS_FILE)?;
        let report: AnalysisReport = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Usage(format!("malformed {ANALYSIS_FILE}: {e}")))?;
        print!("{}", report.summary());
        return finish_analysis(&report, StageOutcome::Cached);
    }
    let set = parse_manifolds(dir)?;
    let dm = parse_distances(dir)?;
    let emb = parse_embedding(dir)?;
    let start = Instant::now();
    let report = analyze(cfg, &set, &dm, &emb)?;
    log(Stage::Analyze, format!("done in {:.2?}", start.elapsed()));
    let mut outputs = BTreeMap::new();
    for (k, env) in environments(cfg)?.iter().enumerate() {
        let name = environment_file(k);
        let hash = dir.write(&name, env.to_json().as_bytes())?;
        outputs.insert(name, hash);
    }
    outputs.insert(ANALYSIS_FILE.to_string(), dir.write(ANALYSIS_FILE, &json_bytes(&report))?);
    dir.record(Stage::Analyze, key, outputs)?;
    print!("{}", report.summary());
    finish_analysis(&report, StageOutcome::Ran)
}

fn finish_analysis(report: &AnalysisReport, outcome: StageOutcome) -> CliResult<StageOutcome> {
    if report.pass {
        Ok(outcome)
    } else {
        Err(CliError::AnalysisFailed(report.failures().join(", ")))
    }
}

pub fn run_toy(cfg: &ExperimentConfig, dir: &mut RunDir, use_cache: bool) -> CliResult<StageOutcome> {
    let key = stage_key(Stage::Toy, &(&cfg.toy, cfg.master_seed), &BTreeMap::new());
    if use_cache && dir.is_cached(Stage::Toy, &key) {
        log(Stage::Toy, "up to date");
        return Ok(StageOutcome::Cached);
    }
    let report = toy(cfg)?;
    let hash = dir.write(TOY_FILE, &json_bytes(&report))?;
    dir.record(Stage::Toy, key, BTreeMap::from([(TOY_FILE.to_string(), hash)]))?;
    let mark = |b: bool| if b { "PASS" } else { "FAIL" };
    println!("{}  one-motor toy varies across environments", mark(report.one_motor_varies));
    println!("{}  two-motor toy matches line oracle", mark(report.two_motor_matches_oracle));
    if report.pass {
        Ok(StageOutcome::Ran)
    } else {
        Err(CliError::AnalysisFailed("toy agents".into()))
    }
}

/// Runs `stages` in order. Analysis failures do not stop later stages; the
/// first one is returned at the end.
pub fn run_stages(
    cfg: &ExperimentConfig,
    dir: &mut RunDir,
    stages: &[Stage],
    use_cache: bool,
) -> CliResult<()> {
    let mut deferred = None;
    for &stage in stages {
        let r = match stage {
            Stage::Explore => run_exploration(cfg, dir, use_cache),
            Stage::Metric => run_metric(dir, use_cache),
            Stage::Embed => run_embedding(cfg, dir, use_cache),
            Stage::Analyze => run_analysis(cfg, dir, use_cache),
            Stage::Toy => run_toy(cfg, dir, use_cache),
        };
        match r {
            Ok(_) => {}
            Err(e @ CliError::AnalysisFailed(_)) => {
                deferred.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    deferred.map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(manifolds: usize) -> ExperimentConfig {
        ExperimentConfig {
            manifolds,
            master_seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn exploration_does_not_depend_on_worker_count() {
        let cfg = small(6);
        let one = crate::with_workers(Some(1), || explore(&cfg).unwrap()).unwrap();
        let four = crate::with_workers(Some(4), || explore(&cfg).unwrap()).unwrap();
        assert_eq!(one.0.to_bytes().unwrap(), four.0.to_bytes().unwrap());
        assert_eq!(one.1, four.1);
        assert_eq!(one.1.accepted, 6);
        assert!(one.1.draws > 6);
        for m in &one.0.manifolds {
            assert!(in_working_space(&forward_kinematics(&m.seed_config), &cfg.workspace));
        }
    }

    #[test]
    fn slots_draw_independent_streams() {
        let a = explore(&small(3)).unwrap().0;
        let b = explore(&small(5)).unwrap().0;
        // Adding slots leaves the earlier ones untouched.
        assert_eq!(a.manifolds[..], b.manifolds[..3]);
    }

    #[test]
    fn rejection_rate_counts_workspace_and_singular_draws() {
        let s = ExplorationStats {
            accepted: 1,
            draws: 10,
            outside_workspace: 8,
            singular: 1,
            numerical_retries: 0,
        };
        assert_eq!(s.rejection_rate(), 0.9);
        assert_eq!(ExplorationStats::default().rejection_rate(), 0.0);
    }

    #[test]
    fn environments_follow_config_seeds() {
        let mut cfg = small(2);
        cfg.environments.seeds = vec![4, 5, 6];
        let envs = environments(&cfg).unwrap();
        assert_eq!(envs.iter().map(|e| e.seed).collect::<Vec<_>>(), vec![4, 5, 6]);
        assert!(envs.iter().all(|e| e.sources.len() == 10));
    }

    #[test]
    fn embedding_is_seeded_by_config() {
        let cfg = small(8);
        let set = explore(&cfg).unwrap().0;
        let dm = metric(&set).unwrap();
        assert_eq!(embed(&cfg, &dm).unwrap(), embed(&cfg, &dm).unwrap());
        let mut other = cfg.clone();
        other.embedding.seed = Some(99);
        assert_ne!(embed(&cfg, &dm).unwrap(), embed(&other, &dm).unwrap());
    }

    #[test]
    fn stage_keys_change_with_inputs() {
        let none = BTreeMap::new();
        let some = BTreeMap::from([("a".to_string(), "00".to_string())]);
        assert_ne!(stage_key(Stage::Metric, &(), &none), stage_key(Stage::Metric, &(), &some));
        assert_ne!(stage_key(Stage::Metric, &(), &none), stage_key(Stage::Embed, &(), &none));
        assert_eq!(stage_key(Stage::Toy, &1, &none), stage_key(Stage::Toy, &1, &none));
    }
}
