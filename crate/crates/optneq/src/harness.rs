//! Experiment configuration, presets, assumption validation, and the runner
//! that produces CSV logs and a manifest.
//!
//! A configuration is a single JSON document; the four built-in presets cover
//! the standard benchmark settings (directed star and random digraph for
//! push-pull, Petersen and random undirected graphs for the stochastic
//! gossip variant). Every run is fully determined by the config: problem
//! draws, topology draws, initial stacks, and per-iteration noise all come
//! from keyed streams, so reruns — at any worker count — reproduce output
//! files byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::graph::{
    build_gossip_matrix, build_pull_matrix, build_push_matrix, build_topology,
    spectral_report, MixingMatrix, Topology, TopologyKind, STOCHASTICITY_TOL,
};
use crate::metrics::{
    aggregate_paths, compute_metrics, rows_to_csv, weighted_average, MetricRow,
};
use crate::problem::{build_cournot, CostSpec, ProblemInstance};
use crate::rng::{DrawKey, STREAM_INIT};
use crate::schedule::ScheduleParams;
use crate::solvers::{
    sequential_regularization, tikhonov_solve, Dsgt, OracleSolution, PushPull, SolverState,
    TIKHONOV_EVAL_BUDGET,
};
use crate::{Algorithm, Error, Result};

/// Network shape and size.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub m: usize,
    /// Exact edge count for the random shapes (ordered arcs for digraphs,
    /// undirected links otherwise); ignored by star and Petersen.
    #[serde(default)]
    pub edge_target: Option<usize>,
    /// Seed for the random shapes.
    #[serde(default)]
    pub seed: u64,
}

/// Stepsize/regularization schedule family shared by all `(a, b)` variants.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScheduleSpec {
    pub step_coef: f64,
    pub reg_coef: f64,
    pub offset: f64,
    /// Exponent pairs `(a, b)`; one experiment variant runs per pair.
    pub pairs: Vec<(f64, f64)>,
    /// Optional per-agent stepsize multipliers in (0, 1] (push-pull only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_multipliers: Option<Vec<f64>>,
}

/// Cournot instance generator settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProblemSpec {
    pub m: usize,
    /// Rank of the interaction matrix factor, in `[1, m)`.
    pub rank: usize,
    pub seed: u64,
    /// Moreau smoothing parameter η.
    pub smoothing: f64,
    pub cap_range: (f64, f64),
    /// Variance of the factor entries; default `1/m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_variance: Option<f64>,
    pub cost: CostSpec,
}

/// Ground-truth computation settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleSpec {
    /// Whether to run the regularization sweep and log `dist_opt`.
    pub compute: bool,
    /// Strictly decreasing regularization weights.
    pub reg_sweep: Vec<f64>,
    /// Residual tolerance per stage (same length as `reg_sweep`).
    pub tolerances: Vec<f64>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            compute: true,
            reg_sweep: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            tolerances: vec![1e-7, 1e-7, 1e-7, 1e-7, 1e-7, 1e-7, 1e-9],
        }
    }
}

/// A complete, self-describing experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    /// Short identifier used in output file names (`[A-Za-z0-9_-]`).
    pub name: String,
    pub algorithm: Algorithm,
    pub topology: TopologySpec,
    pub schedule: ScheduleSpec,
    pub problem: ProblemSpec,
    /// Iterations per variant (per path for the stochastic algorithm).
    pub iterations: u64,
    /// Checkpoint spacing; iteration 0 and the final iteration always log.
    pub log_every: u64,
    /// Sample paths (must be 1 for the deterministic push-pull loop).
    pub paths: u32,
    /// Root seed for initial stacks and per-path noise streams.
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleSpec,
    /// Spacing (in iterations) of `dist_tikhonov` reference solves at logged
    /// checkpoints; `null` disables them.
    #[serde(default)]
    pub tikhonov_every: Option<u64>,
    /// Residual tolerance of the reference solves.
    pub tikhonov_tol: f64,
    /// Worker thread cap; `null` means one per available core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Output directory override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Parse a JSON config document (strict: unknown shapes fail).
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Schedule parameters of one `(a, b)` variant.
    pub fn schedule_params(&self, pair: (f64, f64)) -> ScheduleParams {
        ScheduleParams {
            step_coef: self.schedule.step_coef,
            step_exp: pair.0,
            reg_coef: self.schedule.reg_coef,
            reg_exp: pair.1,
            offset: self.schedule.offset,
            mode: self.algorithm,
        }
    }

    /// Structural problems that make a config unusable, independent of any
    /// numerical checks.
    pub fn shape_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            errs.push(format!(
                "name {:?} must be nonempty and use only [A-Za-z0-9_-]",
                self.name
            ));
        }
        if self.topology.m != self.problem.m {
            errs.push(format!(
                "topology has {} nodes but the problem has {} players",
                self.topology.m, self.problem.m
            ));
        }
        if self.iterations == 0 {
            errs.push("iterations must be at least 1".into());
        }
        if self.log_every == 0 {
            errs.push("log_every must be at least 1".into());
        }
        if self.paths == 0 {
            errs.push("paths must be at least 1".into());
        }
        if self.algorithm == Algorithm::IrPushPull && self.paths != 1 {
            errs.push(format!(
                "push-pull is deterministic; paths must be 1, got {}",
                self.paths
            ));
        }
        if self.schedule.pairs.is_empty() {
            errs.push("schedule needs at least one (a, b) pair".into());
        }
        if let Some(mult) = &self.schedule.step_multipliers {
            if mult.len() != self.problem.m {
                errs.push(format!(
                    "{} step multipliers for {} agents",
                    mult.len(),
                    self.problem.m
                ));
            }
        }
        if self.oracle.compute && self.oracle.reg_sweep.len() != self.oracle.tolerances.len()
        {
            errs.push(format!(
                "oracle sweep has {} weights but {} tolerances",
                self.oracle.reg_sweep.len(),
                self.oracle.tolerances.len()
            ));
        }
        if self.tikhonov_every == Some(0) {
            errs.push("tikhonov_every must be at least 1 when set".into());
        }
        if !(self.tikhonov_tol > 0.0) {
            errs.push(format!("tikhonov_tol must be positive, got {}", self.tikhonov_tol));
        }
        errs
    }
}

/// Built-in preset names, as accepted by [`preset`] and the CLI.
pub const PRESET_NAMES: [&str; 4] =
    ["star-pp", "random-digraph-pp", "petersen-dsgt", "random-undirected-dsgt"];

/// The four standard experiment settings.
///
/// The push-pull presets run the deterministic loop for 10⁵ iterations with
/// exponent pairs (0.5, 0.3), (0.6, 0.25), (0.675, 0.2); the gossip presets
/// run 10 sample paths of 10⁴ iterations with pairs (0.5, 0.4), (0.55, 0.3),
/// (0.6, 0.175). Reference-distance logging is enabled only at 10-node scale,
/// where the inner solves are cheap.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let pp_pairs = vec![(0.5, 0.3), (0.6, 0.25), (0.675, 0.2)];
    let dsgt_pairs = vec![(0.5, 0.4), (0.55, 0.3), (0.6, 0.175)];
    let schedule = |pairs: Vec<(f64, f64)>| ScheduleSpec {
        step_coef: 1.0,
        reg_coef: 1.0,
        offset: 10.0,
        pairs,
        step_multipliers: None,
    };
    let problem = |m: usize, cost: CostSpec| ProblemSpec {
        m,
        rank: m / 2,
        seed: 3,
        smoothing: 0.1,
        cap_range: (50.0, 100.0),
        factor_variance: None,
        cost,
    };
    let gaussian = CostSpec::GaussianFixed { mean: 0.0, variance: 10.0 };
    let uniform = CostSpec::UniformSampled { lo: 1.0, hi: 10.0 };
    let cfg = match name {
        "star-pp" => ExperimentConfig {
            name: "star-pp".into(),
            algorithm: Algorithm::IrPushPull,
            topology: TopologySpec {
                kind: TopologyKind::StarDigraph,
                m: 10,
                edge_target: None,
                seed: 0,
            },
            schedule: schedule(pp_pairs.clone()),
            problem: problem(10, gaussian),
            iterations: 100_000,
            log_every: 100,
            paths: 1,
            seed: 7,
            oracle: OracleSpec::default(),
            tikhonov_every: Some(100),
            tikhonov_tol: 1e-7,
            workers: None,
            out_dir: None,
        },
        "random-digraph-pp" => ExperimentConfig {
            name: "random-digraph-pp".into(),
            algorithm: Algorithm::IrPushPull,
            topology: TopologySpec {
                kind: TopologyKind::RandomDigraph,
                m: 100,
                edge_target: Some(460),
                seed: 1,
            },
            schedule: schedule(pp_pairs),
            problem: problem(100, gaussian),
            iterations: 100_000,
            log_every: 100,
            paths: 1,
            seed: 7,
            oracle: OracleSpec { compute: false, ..OracleSpec::default() },
            tikhonov_every: None,
            tikhonov_tol: 1e-7,
            workers: None,
            out_dir: None,
        },
        "petersen-dsgt" => ExperimentConfig {
            name: "petersen-dsgt".into(),
            algorithm: Algorithm::IrDsgt,
            topology: TopologySpec {
                kind: TopologyKind::Petersen,
                m: 10,
                edge_target: None,
                seed: 0,
            },
            schedule: schedule(dsgt_pairs.clone()),
            problem: problem(10, uniform),
            iterations: 10_000,
            log_every: 10,
            paths: 10,
            seed: 7,
            oracle: OracleSpec::default(),
            tikhonov_every: Some(100),
            tikhonov_tol: 1e-7,
            workers: None,
            out_dir: None,
        },
        "random-undirected-dsgt" => ExperimentConfig {
            name: "random-undirected-dsgt".into(),
            algorithm: Algorithm::IrDsgt,
            topology: TopologySpec {
                kind: TopologyKind::RandomUndirected,
                m: 100,
                edge_target: Some(460),
                seed: 2,
            },
            schedule: schedule(dsgt_pairs),
            problem: problem(100, uniform),
            iterations: 10_000,
            log_every: 10,
            paths: 10,
            seed: 7,
            oracle: OracleSpec { compute: false, ..OracleSpec::default() },
            tikhonov_every: None,
            tikhonov_tol: 1e-7,
            workers: None,
            out_dir: None,
        },
        other => {
            return Err(Error::Validation(format!(
                "unknown preset {other:?}; available: {}",
                PRESET_NAMES.join(", ")
            )));
        }
    };
    Ok(cfg)
}

/// Everything a run needs, constructed from a config.
pub struct BuiltExperiment {
    pub topology: Topology,
    pub pull: Option<MixingMatrix>,
    pub push: Option<MixingMatrix>,
    pub gossip: Option<MixingMatrix>,
    pub instance: ProblemInstance,
    /// Stationary weighting of the network average (push-pull); `None` means
    /// uniform.
    pub average_weights: Option<Array1<f64>>,
    /// Stationary tracker profile (push-pull); `None` means all-ones.
    pub tracker_profile: Option<Array1<f64>>,
}

/// Build topology, mixing matrices, problem instance, and stationary vectors.
pub fn build_experiment(cfg: &ExperimentConfig) -> Result<BuiltExperiment> {
    let errs = cfg.shape_errors();
    if !errs.is_empty() {
        return Err(Error::Validation(errs.join("; ")));
    }
    let topology =
        build_topology(cfg.topology.kind, cfg.topology.m, cfg.topology.edge_target, cfg.topology.seed)?;
    let params = build_cournot(
        cfg.problem.m,
        cfg.problem.rank,
        cfg.problem.seed,
        cfg.problem.smoothing,
        cfg.problem.cap_range,
        cfg.problem.factor_variance,
        cfg.problem.cost,
    )?;
    let instance = ProblemInstance::cournot(params)?;
    match cfg.algorithm {
        Algorithm::IrPushPull => {
            let pull = build_pull_matrix(&topology, None)?;
            let push = build_push_matrix(&topology, None)?;
            let report = spectral_report(Some(&pull), Some(&push), None)?;
            Ok(BuiltExperiment {
                topology,
                average_weights: report.pull_weights,
                tracker_profile: report.push_weights,
                pull: Some(pull),
                push: Some(push),
                gossip: None,
                instance,
            })
        }
        Algorithm::IrDsgt => {
            let gossip = build_gossip_matrix(&topology)?;
            Ok(BuiltExperiment {
                topology,
                pull: None,
                push: None,
                gossip: Some(gossip),
                instance,
                average_weights: None,
                tracker_profile: None,
            })
        }
    }
}

/// The initial stack shared by every variant and path of a config: row `i` is
/// agent `i`'s start point, drawn uniformly in `[0, cap_j]` per coordinate
/// from a dedicated keyed stream.
pub fn initial_stack(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<Array2<f64>> {
    let caps = inst
        .cournot_params()
        .map(|p| p.caps.clone())
        .ok_or_else(|| Error::Validation("initial stack needs a Cournot instance".into()))?;
    let m = inst.agents();
    let n = inst.dim();
    let mut x0 = Array2::zeros((m, n));
    for i in 0..m {
        let mut rng = DrawKey::setup(cfg.seed, STREAM_INIT, i as u32).rng();
        for j in 0..n {
            x0[(i, j)] = rng.random_range(0.0..caps[j]);
        }
    }
    Ok(x0)
}

/// One validation check with its measured evidence.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    /// Hard checks gate `run`; soft ones only warn.
    pub hard: bool,
    pub measured: String,
}

/// Outcome of [`validate_setup`]: one entry per checkable assumption.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    /// True when no hard check failed.
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed || !e.hard)
    }

    pub fn hard_failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed && e.hard)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let tag = if e.passed {
                "PASS"
            } else if e.hard {
                "FAIL"
            } else {
                "WARN"
            };
            writeln!(f, "{tag}  {:<28} {}", e.name, e.measured)?;
        }
        let failures = self.hard_failures().count();
        if failures == 0 {
            write!(f, "all hard checks passed")
        } else {
            write!(f, "{failures} hard check(s) failed")
        }
    }
}

struct ReportBuilder {
    entries: Vec<CheckEntry>,
}

impl ReportBuilder {
    fn push(&mut self, name: &str, hard: bool, passed: bool, measured: String) {
        self.entries.push(CheckEntry { name: name.into(), passed, hard, measured });
    }
}

/// Run every checkable assumption and report the outcome. Build failures
/// become failed entries rather than errors, so a report always comes back.
pub fn validate_setup(cfg: &ExperimentConfig) -> ValidationReport {
    let mut rb = ReportBuilder { entries: Vec::new() };

    let shape = cfg.shape_errors();
    rb.push(
        "config shape",
        true,
        shape.is_empty(),
        if shape.is_empty() { "well-formed".into() } else { shape.join("; ") },
    );
    if !shape.is_empty() {
        return ValidationReport { entries: rb.entries };
    }

    // Orientation is a convention, not a hard requirement: push-pull runs on
    // a symmetric digraph, so mismatches only warn.
    let want_directed = cfg.algorithm == Algorithm::IrPushPull;
    let is_directed = matches!(
        cfg.topology.kind,
        TopologyKind::StarDigraph | TopologyKind::RandomDigraph
    );
    rb.push(
        "algorithm orientation",
        false,
        want_directed == is_directed,
        format!("{} on a {} topology", cfg.algorithm, if is_directed { "directed" } else { "undirected" }),
    );

    let topology = match build_topology(
        cfg.topology.kind,
        cfg.topology.m,
        cfg.topology.edge_target,
        cfg.topology.seed,
    ) {
        Ok(t) => {
            rb.push(
                "topology",
                true,
                true,
                format!("m = {}, {} edges", t.m, t.edge_count()),
            );
            Some(t)
        }
        Err(e) => {
            rb.push("topology", true, false, e.to_string());
            None
        }
    };

    if let Some(t) = &topology {
        match cfg.algorithm {
            Algorithm::IrPushPull => validate_push_pull_matrices(&mut rb, cfg, t),
            Algorithm::IrDsgt => validate_gossip_matrix(&mut rb, t),
        }
    }

    for &pair in &cfg.schedule.pairs {
        let sched = cfg.schedule_params(pair);
        let violations = sched.violations();
        rb.push(
            &format!("schedule ({}, {})", pair.0, pair.1),
            true,
            violations.is_empty(),
            if violations.is_empty() {
                "admissible".into()
            } else {
                violations.join("; ")
            },
        );
    }

    match build_cournot(
        cfg.problem.m,
        cfg.problem.rank,
        cfg.problem.seed,
        cfg.problem.smoothing,
        cfg.problem.cap_range,
        cfg.problem.factor_variance,
        cfg.problem.cost,
    ) {
        Ok(params) => {
            match params.interaction_min_eigenvalue() {
                Ok(eig) => rb.push(
                    "interaction psd",
                    true,
                    eig >= -1e-8,
                    format!("min eigenvalue {eig:.3e}"),
                ),
                Err(e) => rb.push("interaction psd", true, false, e.to_string()),
            }
            match params.validate() {
                Ok(()) => rb.push(
                    "problem parameters",
                    true,
                    true,
                    format!("m = {}, theta = {:.3e}", params.m(), params.welfare_reg),
                ),
                Err(e) => rb.push("problem parameters", true, false, e.to_string()),
            }
            if let CostSpec::UniformSampled { lo, hi } = cfg.problem.cost {
                match ProblemInstance::cournot(params) {
                    Ok(inst) => {
                        let z = sampling_z_score(cfg, &inst, lo, hi);
                        rb.push(
                            "sampling unbiasedness",
                            true,
                            z <= 5.0,
                            format!("max |z| = {z:.2} over 3 points (5000 draws each)"),
                        );
                    }
                    Err(e) => rb.push("sampling unbiasedness", true, false, e.to_string()),
                }
            }
        }
        Err(e) => rb.push("problem parameters", true, false, e.to_string()),
    }

    ValidationReport { entries: rb.entries }
}

fn validate_push_pull_matrices(rb: &mut ReportBuilder, cfg: &ExperimentConfig, t: &Topology) {
    let mult = cfg.schedule.step_multipliers.as_deref();
    let pull = match build_pull_matrix(t, None) {
        Ok(p) => p,
        Err(e) => {
            rb.push("pull matrix", true, false, e.to_string());
            return;
        }
    };
    let push = match build_push_matrix(t, None) {
        Ok(p) => p,
        Err(e) => {
            rb.push("push matrix", true, false, e.to_string());
            return;
        }
    };
    if let Some(mult) = mult {
        let ok = mult.iter().all(|&v| v > 0.0 && v <= 1.0);
        rb.push(
            "step multipliers",
            true,
            ok,
            format!("{} per-agent multipliers in (0, 1]", mult.len()),
        );
    }
    let dev_pull = pull.stochasticity_deviation();
    rb.push(
        "pull stochasticity",
        true,
        dev_pull <= STOCHASTICITY_TOL,
        format!("max row-sum deviation {dev_pull:.2e}"),
    );
    let dev_push = push.stochasticity_deviation();
    rb.push(
        "push stochasticity",
        true,
        dev_push <= STOCHASTICITY_TOL,
        format!("max column-sum deviation {dev_push:.2e}"),
    );
    match crate::graph::check_root_intersection(&pull, &push) {
        Ok(ok) => rb.push(
            "root intersection",
            true,
            ok,
            if ok { "influence digraphs share a root".into() } else { "no shared root".into() },
        ),
        Err(e) => rb.push("root intersection", true, false, e.to_string()),
    }
    match spectral_report(Some(&pull), Some(&push), None) {
        Ok(rep) => {
            let sp = rep.sigma_pull.unwrap_or(f64::NAN);
            let sc = rep.sigma_push.unwrap_or(f64::NAN);
            rb.push(
                "pull contraction",
                true,
                sp < 1.0,
                format!("deflated spectral radius {sp:.4}"),
            );
            rb.push(
                "push contraction",
                true,
                sc < 1.0,
                format!("deflated spectral radius {sc:.4}"),
            );
        }
        Err(e) => rb.push("pull contraction", true, false, e.to_string()),
    }
}

fn validate_gossip_matrix(rb: &mut ReportBuilder, t: &Topology) {
    rb.push(
        "gossip connectivity",
        true,
        t.connected(),
        if t.connected() { "connected".into() } else { "disconnected".into() },
    );
    let gossip = match build_gossip_matrix(t) {
        Ok(w) => w,
        Err(e) => {
            rb.push("gossip matrix", true, false, e.to_string());
            return;
        }
    };
    let dev = gossip.stochasticity_deviation();
    rb.push(
        "gossip stochasticity",
        true,
        dev <= STOCHASTICITY_TOL,
        format!("max row/column-sum deviation {dev:.2e}"),
    );
    match spectral_report(None, None, Some(&gossip)) {
        Ok(rep) => {
            let rho = rep.gossip_radius.unwrap_or(f64::NAN);
            rb.push(
                "gossip contraction",
                true,
                rho <= 0.99,
                format!("deflated spectral norm {rho:.4} (margin {:.4})", 1.0 - rho),
            );
        }
        Err(e) => rb.push("gossip contraction", true, false, e.to_string()),
    }
}

/// Worst standardized deviation of sampled map coordinates from their
/// deterministic counterparts, over 3 probe points and up to 5 agents.
fn sampling_z_score(cfg: &ExperimentConfig, inst: &ProblemInstance, lo: f64, hi: f64) -> f64 {
    const PROBE_PATH: u32 = u32::MAX - 1;
    const DRAWS: u64 = 5000;
    let caps = inst.cournot_params().expect("built from a Cournot spec").caps.clone();
    let n = inst.dim();
    let mut point_rng = DrawKey::at(cfg.problem.seed, PROBE_PATH, u64::MAX, 0).rng();
    let sigma = (hi - lo) / 12f64.sqrt();
    let mut worst: f64 = 0.0;
    for t in 0..3u64 {
        let x = Array1::from_shape_fn(n, |j| point_rng.random_range(0.0..caps[j]));
        for agent in 0..inst.agents().min(5) {
            let oracle = inst.oracle(agent);
            let det = oracle.map(x.view()).expect("deterministic map");
            let mut mean = 0.0;
            for d in 0..DRAWS {
                let key = DrawKey::at(cfg.problem.seed, PROBE_PATH, t * 1_000_000 + d, agent as u32);
                let sampled = oracle.map_sampled(x.view(), key).expect("sampled map");
                mean += sampled[agent];
            }
            mean /= DRAWS as f64;
            let z = (mean - det[agent]).abs() / (sigma / (DRAWS as f64).sqrt());
            worst = worst.max(z);
        }
    }
    worst
}

/// Per-variant output record in the manifest.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VariantRecord {
    pub pair: (f64, f64),
    /// CSV file names, one per path, relative to the output directory.
    pub files: Vec<String>,
    /// Path-mean CSV (stochastic runs only).
    pub mean_file: Option<String>,
    /// Failure detail when the variant aborted; its files are not written.
    pub error: Option<String>,
}

/// Run description written next to the CSVs as `manifest.json`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub crate_version: String,
    /// Wall-clock duration; the only non-reproducible field.
    pub wall_seconds: f64,
    pub validation: Vec<CheckEntry>,
    pub variants: Vec<VariantRecord>,
    pub oracle: Option<OracleSolution>,
}

/// File name of the manifest inside the output directory.
pub const MANIFEST_FILE: &str = "manifest.json";

fn variant_stem(name: &str, pair: (f64, f64)) -> String {
    format!("{name}-a{}-b{}", pair.0, pair.1)
}

enum Loop<'a> {
    PushPull(PushPull<'a>),
    Dsgt(Dsgt<'a>),
}

impl Loop<'_> {
    fn init(&self, x0: Array2<f64>) -> Result<SolverState> {
        match self {
            Loop::PushPull(s) => s.init(x0),
            Loop::Dsgt(s) => s.init(x0),
        }
    }

    fn step(&self, state: &mut SolverState) -> Result<()> {
        match self {
            Loop::PushPull(s) => s.step(state),
            Loop::Dsgt(s) => s.step(state),
        }
    }
}

fn make_loop<'a>(
    cfg: &ExperimentConfig,
    built: &'a BuiltExperiment,
    sched: ScheduleParams,
    path: u32,
) -> Result<Loop<'a>> {
    match cfg.algorithm {
        Algorithm::IrPushPull => {
            let pull = built.pull.as_ref().expect("built for push-pull");
            let push = built.push.as_ref().expect("built for push-pull");
            let mut solver = PushPull::new(&built.instance, sched, pull, push)?;
            if let Some(mult) = &cfg.schedule.step_multipliers {
                solver = solver.with_step_multipliers(mult)?;
            }
            Ok(Loop::PushPull(solver))
        }
        Algorithm::IrDsgt => {
            let gossip = built.gossip.as_ref().expect("built for gossip");
            Ok(Loop::Dsgt(Dsgt::new(&built.instance, sched, gossip, cfg.seed, path)?))
        }
    }
}

/// Reference solutions of the regularized problems at the scheduled weights,
/// warm-started along decreasing weights.
fn tikhonov_references(
    inst: &ProblemInstance,
    sched: &ScheduleParams,
    checkpoints: &[u64],
    tol: f64,
) -> Result<BTreeMap<u64, Array1<f64>>> {
    let mut out = BTreeMap::new();
    let mut warm: Option<Array1<f64>> = None;
    for &k in checkpoints {
        let (x, _) = tikhonov_solve(
            inst,
            sched.reg(k),
            tol,
            TIKHONOV_EVAL_BUDGET,
            warm.as_ref().map(|v| v.view()),
        )?;
        warm = Some(x.clone());
        out.insert(k, x);
    }
    Ok(out)
}

fn logged_checkpoints(cfg: &ExperimentConfig) -> Vec<u64> {
    let mut ks: Vec<u64> =
        (0..=cfg.iterations).step_by(cfg.log_every as usize).collect();
    if *ks.last().expect("0 is always logged") != cfg.iterations {
        ks.push(cfg.iterations);
    }
    ks
}

fn run_variant_path(
    cfg: &ExperimentConfig,
    built: &BuiltExperiment,
    pair: (f64, f64),
    path: u32,
    tik_refs: Option<&BTreeMap<u64, Array1<f64>>>,
    opt_point: Option<&Array1<f64>>,
) -> Result<Vec<MetricRow>> {
    let sched = cfg.schedule_params(pair);
    let solver = make_loop(cfg, built, sched, path)?;
    let mut state = solver.init(initial_stack(cfg, &built.instance)?)?;
    let u = built.average_weights.as_ref();
    let v = built.tracker_profile.as_ref();
    let mut rows = Vec::with_capacity(cfg.iterations as usize / cfg.log_every as usize + 2);
    let mut pending: Option<(u64, Array2<f64>, Array2<f64>)> = None;
    let finalize = |pending: &mut Option<(u64, Array2<f64>, Array2<f64>)>,
                        state: &SolverState,
                        rows: &mut Vec<MetricRow>|
     -> Result<()> {
        if let Some((k, x, y)) = pending.take() {
            let next_avg = weighted_average(&state.x, u);
            let tik = tik_refs.and_then(|r| r.get(&k)).map(|p| p.view());
            let row = compute_metrics(
                k,
                &x,
                &y,
                u,
                v,
                &built.instance,
                next_avg.view(),
                tik,
                opt_point.map(|p| p.view()),
            )?;
            rows.push(row);
        }
        Ok(())
    };
    for k in 0..=cfg.iterations {
        finalize(&mut pending, &state, &mut rows)?;
        if k % cfg.log_every == 0 || k == cfg.iterations {
            pending = Some((k, state.x.clone(), state.y.clone()));
        }
        // The step at k = iterations is the one-iteration peek that the final
        // row's upper metric needs.
        solver.step(&mut state)?;
    }
    finalize(&mut pending, &state, &mut rows)?;
    Ok(rows)
}

/// Run every `(a, b)` variant (and sample path) of a validated config,
/// writing CSV logs and `manifest.json` into `out_dir`.
///
/// A diverging variant is recorded in the manifest and does not stop the
/// others. Outputs are byte-deterministic for a fixed config, whatever
/// `workers` resolves to.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
    force: bool,
) -> Result<Manifest> {
    let started = Instant::now();
    let report = validate_setup(cfg);
    if !report.passed() && !force {
        let names: Vec<&str> =
            report.hard_failures().map(|e| e.name.as_str()).collect();
        return Err(Error::Validation(format!(
            "setup validation failed ({}); rerun with --force to override",
            names.join(", ")
        )));
    }
    let built = build_experiment(cfg)?;
    let oracle = if cfg.oracle.compute {
        Some(sequential_regularization(
            &built.instance,
            &cfg.oracle.reg_sweep,
            &cfg.oracle.tolerances,
            None,
            TIKHONOV_EVAL_BUDGET,
        )?)
    } else {
        None
    };
    let opt_point = oracle.as_ref().map(|o| o.x_star_array());
    let checkpoints = logged_checkpoints(cfg);

    // Reference trajectories are shared by all paths of a variant; compute
    // them first so worker threads can borrow them.
    let mut variant_refs: Vec<std::result::Result<Option<BTreeMap<u64, Array1<f64>>>, String>> =
        Vec::new();
    for &pair in &cfg.schedule.pairs {
        let refs = match cfg.tikhonov_every {
            Some(every) => {
                let sched = cfg.schedule_params(pair);
                let ks: Vec<u64> =
                    checkpoints.iter().copied().filter(|k| k % every == 0).collect();
                match tikhonov_references(&built.instance, &sched, &ks, cfg.tikhonov_tol) {
                    Ok(map) => Ok(Some(map)),
                    Err(e) => Err(e.to_string()),
                }
            }
            None => Ok(None),
        };
        variant_refs.push(refs);
    }

    let pairs = cfg.schedule.pairs.clone();
    let n_paths = cfg.paths as usize;
    let jobs: Vec<(usize, u32)> = (0..pairs.len())
        .flat_map(|v| (0..cfg.paths).map(move |p| (v, p)))
        .collect();
    let n_workers = workers
        .or(cfg.workers)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
        .clamp(1, jobs.len().max(1));

    let queue = Mutex::new(jobs.clone());
    let results: Mutex<Vec<Option<std::result::Result<Vec<MetricRow>, String>>>> =
        Mutex::new(vec![None; pairs.len() * n_paths]);
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop();
                let Some((v, p)) = job else { break };
                if variant_refs[v].is_err() {
                    // The reference solve already failed; skip the paths.
                    continue;
                }
                let refs = variant_refs[v].as_ref().expect("checked").as_ref();
                let outcome =
                    run_variant_path(cfg, &built, pairs[v], p, refs, opt_point.as_ref())
                        .map_err(|e| e.to_string());
                results.lock().expect("results lock")[v * n_paths + p as usize] =
                    Some(outcome);
            });
        }
    });
    let results = results.into_inner().expect("scope joined");

    std::fs::create_dir_all(out_dir)?;
    let mut variants = Vec::with_capacity(pairs.len());
    for (v, &pair) in pairs.iter().enumerate() {
        let stem = variant_stem(&cfg.name, pair);
        if let Err(e) = &variant_refs[v] {
            variants.push(VariantRecord {
                pair,
                files: Vec::new(),
                mean_file: None,
                error: Some(format!("reference solve failed: {e}")),
            });
            continue;
        }
        let mut path_rows = Vec::with_capacity(n_paths);
        let mut error = None;
        for p in 0..n_paths {
            match &results[v * n_paths + p] {
                Some(Ok(rows)) => path_rows.push(rows.clone()),
                Some(Err(e)) => {
                    error = Some(format!("path {p}: {e}"));
                    break;
                }
                None => {
                    error = Some(format!("path {p}: not executed"));
                    break;
                }
            }
        }
        if let Some(error) = error {
            variants.push(VariantRecord {
                pair,
                files: Vec::new(),
                mean_file: None,
                error: Some(error),
            });
            continue;
        }
        let mut files = Vec::with_capacity(n_paths);
        if cfg.algorithm == Algorithm::IrDsgt {
            for (p, rows) in path_rows.iter().enumerate() {
                let file = format!("{stem}-path{p}.csv");
                std::fs::write(out_dir.join(&file), rows_to_csv(rows))?;
                files.push(file);
            }
            let agg = aggregate_paths(&path_rows)?;
            let mean_file = format!("{stem}-mean.csv");
            std::fs::write(out_dir.join(&mean_file), rows_to_csv(&agg.mean))?;
            variants.push(VariantRecord { pair, files, mean_file: Some(mean_file), error: None });
        } else {
            let file = format!("{stem}.csv");
            std::fs::write(out_dir.join(&file), rows_to_csv(&path_rows[0]))?;
            files.push(file);
            variants.push(VariantRecord { pair, files, mean_file: None, error: None });
        }
    }

    let manifest = Manifest {
        config: cfg.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_seconds: started.elapsed().as_secs_f64(),
        validation: report.entries,
        variants,
        oracle,
    };
    std::fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )?;
    Ok(manifest)
}
