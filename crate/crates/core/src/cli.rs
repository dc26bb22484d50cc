//! Configuration ingestion, command orchestration, caching, seeding, and
//! result persistence for the `contest` binary.
//!
//! Commands: `index | simulate | verify | experiment`. Exit codes: 0 ok,
//! 2 config error, 3 verification failure, 4 instance too large. Outputs are
//! bit-identical for a fixed `(config, seed)` regardless of `--threads`;
//! every output directory gets exactly one `manifest.json`, written and
//! fsynced before any result file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::engine::{self, ContestConfig, Outcome, PreparedContest};
use crate::index::{self, IndexTable};
use crate::lab;
use crate::oracle;
use crate::typeproc::TypeChain;
use crate::worker::WorkerSpec;

/// Environment variable overriding the index-table cache directory.
pub const CACHE_DIR_ENV: &str = "CONTEST_CACHE_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;
pub const EXIT_TOO_LARGE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::TooLarge(_) => EXIT_TOO_LARGE,
            CliError::Io(_) => EXIT_CONFIG,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

// ---------------------------------------------------------------------------
// Config file schema
// ---------------------------------------------------------------------------

/// How a worker's chain is specified in the config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainSpec {
    BadNews {
        p0: f64,
        lam: f64,
        grid_points: usize,
        delta: f64,
    },
    Brownian {
        p0: f64,
        snr: f64,
        grid_points: usize,
        delta: f64,
    },
    Ladder {
        mu: f64,
        lam: f64,
        x_max: f64,
        grid_points: usize,
        delta: f64,
    },
    Inline(Box<TypeChain>),
    File(String),
}

/// Flow specification: explicit values, a constant, or the type itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlowSpec {
    Values(Vec<f64>),
    Constant { constant: f64 },
    Named(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkerConfig {
    pub chain: ChainSpec,
    pub pi: FlowSpec,
    pub cost: FlowSpec,
    pub prize: f64,
    /// Optional initial type value, snapped to the nearest grid state.
    #[serde(default)]
    pub initial: Option<f64>,
}

/// The one JSON document a run is reproduced from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub discount: f64,
    pub step: f64,
    pub outside_option: f64,
    pub horizon_cap: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub priority: Option<Vec<usize>>,
    pub workers: Vec<WorkerConfig>,
    /// Extra parameters consumed by `contest experiment`.
    #[serde(default)]
    pub experiment: Option<serde_json::Value>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(config_err)
    }

    fn resolve_chain(&self, spec: &ChainSpec, base: &Path) -> Result<TypeChain, CliError> {
        match spec {
            ChainSpec::BadNews {
                p0,
                lam,
                grid_points,
                delta,
            } => crate::typeproc::build_bad_news_belief(*p0, *lam, *grid_points, *delta)
                .map_err(config_err),
            ChainSpec::Brownian {
                p0,
                snr,
                grid_points,
                delta,
            } => crate::typeproc::build_brownian_belief(*p0, *snr, *grid_points, *delta)
                .map_err(config_err),
            ChainSpec::Ladder {
                mu,
                lam,
                x_max,
                grid_points,
                delta,
            } => crate::typeproc::build_ladder_deadend(*mu, *lam, *x_max, *grid_points, *delta)
                .map_err(config_err),
            ChainSpec::Inline(chain) => Ok((**chain).clone()),
            ChainSpec::File(rel) => {
                let path = base.join(rel);
                let text = fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("cannot read chain file {}: {e}", path.display()))
                })?;
                TypeChain::from_json(&text).map_err(config_err)
            }
        }
    }

    fn resolve_flow(
        &self,
        spec: &FlowSpec,
        chain: &TypeChain,
        what: &str,
    ) -> Result<Vec<f64>, CliError> {
        let n = chain.n_states();
        match spec {
            FlowSpec::Values(v) => {
                if v.len() != n {
                    return Err(CliError::Config(format!(
                        "{what} has {} entries for a {n}-state grid",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
            FlowSpec::Constant { constant } => Ok(vec![*constant; n]),
            FlowSpec::Named(name) if name == "type" => Ok(chain.grid.clone()),
            FlowSpec::Named(name) => Err(CliError::Config(format!(
                "unknown {what} spec '{name}' (use \"type\")"
            ))),
        }
    }

    /// Build the engine config, validating chains as they resolve.
    pub fn to_contest(&self, base: &Path) -> Result<ContestConfig, CliError> {
        let mut workers = Vec::with_capacity(self.workers.len());
        for (i, w) in self.workers.iter().enumerate() {
            let mut chain = self.resolve_chain(&w.chain, base)?;
            let violations = crate::typeproc::validate(&chain);
            if !violations.is_empty() {
                let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(CliError::Config(format!(
                    "worker {i} chain is not admissible:\n  {}",
                    lines.join("\n  ")
                )));
            }
            if let Some(x0) = w.initial {
                chain.initial_state = chain.nearest_state(x0);
            }
            let pi = self.resolve_flow(&w.pi, &chain, "pi")?;
            let cost = self.resolve_flow(&w.cost, &chain, "cost")?;
            workers.push(WorkerSpec {
                chain,
                pi,
                cost,
                prize: w.prize,
                discount: self.discount,
            });
        }
        let config = ContestConfig {
            priority: self
                .priority
                .clone()
                .unwrap_or_else(|| ContestConfig::default_priority(workers.len())),
            workers,
            outside_option: self.outside_option,
            step: self.step,
            horizon_cap: self.horizon_cap,
            replications: self.replications,
            seed: self.seed,
        };
        config.validate().map_err(config_err)?;
        Ok(config)
    }
}

/// Canonical hash of a resolved contest config.
pub fn config_hash(config: &ContestConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex(&Sha256::digest(json.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub started_at_unix_ms: u128,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config_path: &Path, hash: &str, seed: u64, outputs: &[&str]) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.display().to_string(),
            config_hash: hash.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            started_at_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Written and fsynced before any result file.
    fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest.json");
        let mut file = fs::File::create(&path)?;
        file.write_all(
            serde_json::to_string_pretty(self)
                .expect("manifest")
                .as_bytes(),
        )?;
        file.sync_all()?;
        Ok(())
    }
}

fn write_output(out_dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), contents)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Index tables and the cache
// ---------------------------------------------------------------------------

fn cache_dir(out_dir: &Path) -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| out_dir.join("cache"))
}

fn cached_table(dir: &Path, hash: &str) -> Option<IndexTable> {
    let path = dir.join(format!("indextable-{hash}.json"));
    let text = fs::read_to_string(path).ok()?;
    let table: IndexTable = serde_json::from_str(&text).ok()?;
    // Refuse stale caches: the table must key to this spec and version.
    if table.meta.spec_hash != hash || table.meta.version != env!("CARGO_PKG_VERSION") {
        return None;
    }
    Some(table)
}

fn store_table(dir: &Path, hash: &str, table: &IndexTable) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(format!("indextable-{hash}.json")),
        serde_json::to_string_pretty(table).expect("table serializes"),
    )?;
    Ok(())
}

/// Full tables for every worker, cache-aware.
fn tables_for(config: &ContestConfig, cache: &Path) -> Result<Vec<IndexTable>, CliError> {
    let mut tables = Vec::with_capacity(config.workers.len());
    for (i, spec) in config.workers.iter().enumerate() {
        let hash = index::spec_hash(spec);
        if let Some(table) = cached_table(cache, &hash) {
            eprintln!("cache hit: worker {i} table {hash}");
            tables.push(table);
            continue;
        }
        let table = IndexTable::build(spec).map_err(config_err)?;
        store_table(cache, &hash, &table)?;
        tables.push(table);
    }
    Ok(tables)
}

/// `contest index`: compute and persist index tables.
pub fn cmd_index(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let run = RunConfig::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let config = run.to_contest(base)?;
    let hash = config_hash(&config);

    let mut outputs = Vec::new();
    for i in 0..config.workers.len() {
        outputs.push(format!("indextable-worker{i}.json"));
        outputs.push(format!("indices-worker{i}.csv"));
    }
    let output_refs: Vec<&str> = outputs.iter().map(|s| s.as_str()).collect();
    RunManifest::new("index", config_path, &hash, run.seed, &output_refs).write(out_dir)?;

    let cache = cache_dir(out_dir);
    let tables = tables_for(&config, &cache)?;
    for (i, (spec, table)) in config.workers.iter().zip(&tables).enumerate() {
        write_output(
            out_dir,
            &format!("indextable-worker{i}.json"),
            &serde_json::to_string_pretty(table).expect("table serializes"),
        )?;
        let mut csv =
            String::from("# index-table v1\nstate,type,gittins,strategic_diagonal,threshold\n");
        for s in 0..table.n_states() {
            let threshold = match table.thresholds[s] {
                None => String::from("never"),
                Some(t) => t.to_string(),
            };
            csv.push_str(&format!(
                "{s},{},{},{},{threshold}\n",
                spec.chain.grid[s],
                table.gittins[s],
                table.diagonal(s),
            ));
        }
        write_output(out_dir, &format!("indices-worker{i}.csv"), &csv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct SimulationSummary {
    pub schema: String,
    pub config_hash: String,
    pub replications: usize,
    pub seed: u64,
    pub principal_mean: f64,
    pub principal_se: f64,
    pub envelope_charge_mean: f64,
    pub envelope_charge_se: f64,
    pub worker_payoff_means: Vec<f64>,
    pub promoted_per_worker: Vec<usize>,
    pub outside_count: usize,
    pub capped_count: usize,
    pub promotion_share_per_worker: Vec<f64>,
    pub time_to_promotion_quantiles: Option<[f64; 3]>,
    pub mean_type_at_promotion_per_worker: Vec<Option<f64>>,
}

pub fn summarize(config: &ContestConfig, set: &engine::ReplicationSet) -> SimulationSummary {
    let n = config.workers.len();
    let reps = set.stats.len();
    let payoffs: Vec<f64> = set.stats.iter().map(|s| s.principal).collect();
    let charges: Vec<f64> = set.stats.iter().map(|s| s.envelope_charge).collect();
    let (principal_mean, principal_se) = engine::mean_se(&payoffs);
    let (charge_mean, charge_se) = engine::mean_se(&charges);

    let mut promoted = vec![0usize; n];
    let mut outside = 0usize;
    let mut capped = 0usize;
    let mut times: Vec<f64> = Vec::new();
    let mut type_sums = vec![0.0; n];
    for s in &set.stats {
        match s.outcome {
            Outcome::Promoted {
                worker,
                time,
                state,
            } => {
                promoted[worker] += 1;
                times.push(time);
                type_sums[worker] += config.workers[worker].chain.grid[state];
            }
            Outcome::OutsideOption { .. } => outside += 1,
            Outcome::Capped => capped += 1,
        }
    }
    times.sort_by(f64::total_cmp);
    let quantile = |q: f64| times[(q * (times.len() - 1) as f64).round() as usize];
    let worker_means: Vec<f64> = (0..n)
        .map(|j| set.stats.iter().map(|s| s.workers[j]).sum::<f64>() / reps.max(1) as f64)
        .collect();

    SimulationSummary {
        schema: "contest-summary v1".into(),
        config_hash: config_hash(config),
        replications: reps,
        seed: config.seed,
        principal_mean,
        principal_se,
        envelope_charge_mean: charge_mean,
        envelope_charge_se: charge_se,
        worker_payoff_means: worker_means,
        promotion_share_per_worker: promoted
            .iter()
            .map(|&c| c as f64 / reps.max(1) as f64)
            .collect(),
        mean_type_at_promotion_per_worker: (0..n)
            .map(|j| (promoted[j] > 0).then(|| type_sums[j] / promoted[j] as f64))
            .collect(),
        promoted_per_worker: promoted,
        outside_count: outside,
        capped_count: capped,
        time_to_promotion_quantiles: (!times.is_empty())
            .then(|| [quantile(0.1), quantile(0.5), quantile(0.9)]),
    }
}

fn traces_csv(traces: &[engine::ContestTrace]) -> String {
    let mut csv = String::from("# contest-trace v1\nrep,t,worker,x,m,index,action\n");
    for (rep, trace) in traces.iter().enumerate() {
        for e in &trace.events {
            csv.push_str(&format!(
                "{rep},{},{},{},{},{},delegate\n",
                e.t, e.worker, e.x_pre, e.m_pre, e.index
            ));
        }
        match &trace.outcome {
            Outcome::Promoted {
                worker,
                time,
                state,
            } => {
                csv.push_str(&format!("{rep},{time},{worker},{state},,,promote\n"));
            }
            Outcome::OutsideOption { time } => {
                csv.push_str(&format!("{rep},{time},,,,,outside\n"));
            }
            Outcome::Capped => csv.push_str(&format!("{rep},,,,,,capped\n")),
        }
    }
    csv
}

pub struct SimulateArgs {
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub trace_sample: usize,
}

/// `contest simulate`: replicate the index contest and persist summaries.
pub fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    args: &SimulateArgs,
) -> Result<(), CliError> {
    let run = RunConfig::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mut config = run.to_contest(base)?;
    if let Some(reps) = args.replications {
        config.replications = reps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let hash = config_hash(&config);
    RunManifest::new(
        "simulate",
        config_path,
        &hash,
        config.seed,
        &["summary.json", "traces.csv"],
    )
    .write(out_dir)?;

    let work = || -> Result<(), CliError> {
        let (prep, warnings) = PreparedContest::new(config.clone()).map_err(config_err)?;
        for w in &warnings {
            eprintln!("warning: {w:?}");
        }
        let set =
            engine::run_replications(&prep, config.replications, config.seed, args.trace_sample)
                .map_err(config_err)?;
        let summary = summarize(&config, &set);
        if summary.capped_count > 0 {
            eprintln!(
                "warning: {} of {} traces hit the horizon cap",
                summary.capped_count, summary.replications
            );
        }
        write_output(
            out_dir,
            "summary.json",
            &serde_json::to_string_pretty(&summary).expect("summary"),
        )?;
        write_output(out_dir, "traces.csv", &traces_csv(&set.traces))?;
        Ok(())
    };
    match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(config_err)?
            .install(work),
        None => work(),
    }
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub schema: String,
    pub config_hash: String,
    pub checks: Vec<VerifyCheck>,
    pub all_pass: bool,
}

/// `contest verify`: oracle agreement, implementability, the envelope
/// identity, and the feasible-family upper bound.
pub fn cmd_verify(config_path: &Path, out_dir: &Path, family: &str) -> Result<(), CliError> {
    let run = RunConfig::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let config = run.to_contest(base)?;
    let hash = config_hash(&config);
    RunManifest::new(
        "verify",
        config_path,
        &hash,
        config.seed,
        &["verify.json", "family.json"],
    )
    .write(out_dir)?;

    let mut checks: Vec<VerifyCheck> = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| {
        checks.push(VerifyCheck {
            name: name.into(),
            pass,
            detail,
        });
    };

    // Single-arm contracts against the exhaustive search.
    for (i, spec) in config.workers.iter().enumerate() {
        let contract =
            crate::worker::single_arm_contract(spec, config.outside_option).map_err(config_err)?;
        match oracle::brute_force_single_arm(spec, config.outside_option) {
            Ok(sol) => {
                let gap = (sol.value - contract.principal_value).abs();
                push(
                    &format!("single_arm_optimality_worker{i}"),
                    gap <= 1e-8,
                    format!(
                        "contract {} vs oracle {} (gap {gap:.3e})",
                        contract.principal_value, sol.value
                    ),
                );
                push(
                    &format!("single_arm_corridor_structure_worker{i}"),
                    sol.corridor.is_some(),
                    format!(
                        "{} feasible of {} candidates",
                        sol.n_feasible, sol.n_candidates
                    ),
                );
            }
            Err(oracle::OracleError::InstanceTooLarge { size, cap }) => {
                return Err(CliError::TooLarge(format!(
                    "worker {i}: {size} reachable augmented states exceed the oracle cap {cap}"
                )));
            }
            Err(e) => return Err(config_err(e)),
        }
    }

    // Build the prepared contest from cached tables when available, so a
    // corrupted cache shows up as a broken identity below.
    let cache = cache_dir(out_dir);
    let prep = {
        let mut cached = Vec::new();
        let mut all_cached = true;
        for spec in &config.workers {
            match cached_table(&cache, &index::spec_hash(spec)) {
                Some(t) => cached.push(t),
                None => {
                    all_cached = false;
                    break;
                }
            }
        }
        if all_cached {
            eprintln!("verify: using {} cached index tables", cached.len());
            PreparedContest::from_tables(config.clone(), cached).map_err(config_err)?
        } else {
            let (prep, _) = PreparedContest::new(config.clone()).map_err(config_err)?;
            prep
        }
    };

    // Implementability of the index contest.
    let policy = engine::IndexContestPolicy::new(&prep);
    match engine::check_ir(&prep, &policy, 1e-8) {
        Ok(ir) => push(
            "implementability_min_worker_value",
            ir.min_value >= -1e-8,
            format!(
                "min continuation {} over {} product states",
                ir.min_value, ir.n_reachable
            ),
        ),
        Err(engine::EngineError::StateSpaceOverflow { states, cap }) => {
            return Err(CliError::TooLarge(format!(
                "product chain: {states} > {cap}"
            )));
        }
        Err(e) => return Err(config_err(e)),
    }

    // Envelope identity: exact value vs Monte Carlo payoff mean.
    match engine::principal_value_envelope(&prep) {
        Ok(exact) => {
            let reps = config.replications.max(1000);
            let set = engine::run_replications(&prep, reps, config.seed, 0).map_err(config_err)?;
            let payoffs: Vec<f64> = set.stats.iter().map(|s| s.principal).collect();
            let (mean, se) = engine::mean_se(&payoffs);
            push(
                "envelope_identity",
                (mean - exact).abs() <= 3.0 * se,
                format!("exact {exact} vs MC {mean} ± {se} at {reps} replications"),
            );
        }
        Err(engine::EngineError::StateSpaceOverflow { states, cap }) => {
            return Err(CliError::TooLarge(format!(
                "product chain: {states} > {cap}"
            )));
        }
        Err(e) => return Err(config_err(e)),
    }

    // Feasible-family upper bound.
    let family_policies = match family {
        "standard" | "all" => oracle::standard_family(&prep),
        other => {
            return Err(CliError::Config(format!(
                "unknown family '{other}' (available: standard)"
            )))
        }
    };
    match oracle::enumerate_feasible_contests(&prep, &family_policies) {
        Ok(report) => {
            let envelope = engine::principal_value_envelope(&prep).map_err(config_err)?;
            let violators: Vec<&oracle::FamilyOutcome> = report
                .outcomes
                .iter()
                .filter(|o| o.feasible && o.value > envelope + 1e-9)
                .collect();
            push(
                "upper_bound_over_family",
                violators.is_empty(),
                format!(
                    "{} feasible of {} candidates; best {} ({}); envelope {envelope}",
                    report.n_feasible, report.n_candidates, report.best_value, report.best_desc
                ),
            );
            write_output(
                out_dir,
                "family.json",
                &serde_json::to_string_pretty(&report).expect("family report"),
            )?;
        }
        Err(oracle::OracleError::Engine(engine::EngineError::StateSpaceOverflow {
            states,
            cap,
        })) => {
            return Err(CliError::TooLarge(format!(
                "product chain: {states} > {cap}"
            )));
        }
        Err(e) => return Err(config_err(e)),
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport {
        schema: "contest-verify v1".into(),
        config_hash: hash,
        checks,
        all_pass,
    };
    write_output(
        out_dir,
        "verify.json",
        &serde_json::to_string_pretty(&report).expect("report"),
    )?;
    for c in &report.checks {
        println!(
            "{}: {} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if !all_pass {
        return Err(CliError::Verification(
            "one or more verification checks failed".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

pub const EXPERIMENT_NAMES: [&str; 6] = [
    "tbar",
    "reinforcing",
    "gap",
    "fasttrack",
    "seniority",
    "convexcomp",
];

/// `contest experiment <name>`: run a lab experiment and persist the report.
pub fn cmd_experiment(name: &str, config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    if !EXPERIMENT_NAMES.contains(&name) {
        return Err(CliError::Config(format!(
            "unknown experiment '{name}'; available: {}",
            EXPERIMENT_NAMES.join(", ")
        )));
    }
    let run = RunConfig::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let params = run.experiment.clone().unwrap_or(serde_json::Value::Null);

    let report = match name {
        "tbar" => {
            #[derive(Deserialize)]
            struct TbarParams {
                lam: f64,
                c: f64,
                g: f64,
                r: f64,
            }
            let p: TbarParams = serde_json::from_value(params).map_err(config_err)?;
            let t = lab::tbar(p.lam, p.c, p.g, p.r).map_err(config_err)?;
            let tq = lab::tbar_quadrature(p.lam, p.c, p.g, p.r).map_err(config_err)?;
            let survival = lab::exponential_survival(p.lam, t);
            let breakeven = lab::breakeven_climb_time(p.lam, p.c, p.g, p.r).map_err(config_err)?;
            let mut stats = vec![
                lab::Statistic {
                    name: "tbar".into(),
                    value: t,
                    se: None,
                    count: None,
                },
                lab::Statistic {
                    name: "tbar_quadrature".into(),
                    value: tq,
                    se: None,
                    count: None,
                },
                lab::Statistic {
                    name: "survival_at_tbar".into(),
                    value: survival,
                    se: None,
                    count: None,
                },
                lab::Statistic {
                    name: "one_minus_survival_at_tbar".into(),
                    value: 1.0 - survival,
                    se: None,
                    count: None,
                },
                lab::Statistic {
                    name: "breakeven_climb_time".into(),
                    value: breakeven,
                    se: None,
                    count: None,
                },
            ];
            let flags = vec![lab::ClaimFlag {
                claim: "closed form matches quadrature within 1e-10".into(),
                status: if (t - tq).abs() <= 1e-10 {
                    lab::ClaimStatus::Pass
                } else {
                    lab::ClaimStatus::Fail
                },
                detail: format!("{t} vs {tq}"),
            }];
            stats.shrink_to_fit();
            lab::ExperimentReport {
                experiment: "tbar".into(),
                config_hash: String::new(),
                statistics: stats,
                flags,
                provenance: lab::Provenance {
                    seed: run.seed,
                    replications: 0,
                    delta: 0.0,
                },
            }
        }
        "reinforcing" => {
            #[derive(Deserialize)]
            struct P {
                #[serde(default = "default_delta_level")]
                delta_level: f64,
            }
            let p: P = serde_json::from_value(params).map_err(config_err)?;
            let config = run.to_contest(base)?;
            let reps = config.replications;
            let seed = config.seed;
            let (prep, _) = PreparedContest::new(config).map_err(config_err)?;
            lab::reinforcing_check(&prep, p.delta_level, reps, seed).map_err(config_err)?
        }
        "gap" => {
            #[derive(Deserialize)]
            struct P {
                groups: Vec<usize>,
                #[serde(default)]
                expect_symmetric: bool,
            }
            let p: P = serde_json::from_value(params).map_err(config_err)?;
            let config = run.to_contest(base)?;
            let reps = config.replications;
            let seed = config.seed;
            let (prep, _) = PreparedContest::new(config).map_err(config_err)?;
            lab::promotion_gap_experiment(&prep, &p.groups, p.expect_symmetric, reps, seed)
                .map_err(config_err)?
        }
        "fasttrack" => {
            let config = run.to_contest(base)?;
            let reps = config.replications;
            let seed = config.seed;
            let (prep, _) = PreparedContest::new(config).map_err(config_err)?;
            let set = engine::run_replications(&prep, reps, seed, reps).map_err(config_err)?;
            lab::fast_track_stat(&prep, &set.traces, seed).map_err(config_err)?
        }
        "seniority" => {
            #[derive(Deserialize)]
            struct P {
                type_value: f64,
                times: Vec<f64>,
            }
            let p: P = serde_json::from_value(params).map_err(config_err)?;
            let config = run.to_contest(base)?;
            let reps = config.replications;
            let seed = config.seed;
            let (prep, _) = PreparedContest::new(config).map_err(config_err)?;
            let x = prep.config.workers[0].chain.nearest_state(p.type_value);
            let set = engine::run_replications(&prep, reps, seed, reps).map_err(config_err)?;
            lab::seniority_stat(&prep, &set.traces, x, &p.times, seed).map_err(config_err)?
        }
        "convexcomp" => {
            #[derive(Deserialize)]
            struct P {
                g_grid: Vec<f64>,
                #[serde(default)]
                pi_scale: Option<f64>,
            }
            let p: P = serde_json::from_value(params).map_err(config_err)?;
            let config = run.to_contest(base)?;
            let pi_pair = p.pi_scale.map(|scale| {
                let lo: Vec<Vec<f64>> = config.workers.iter().map(|w| w.pi.clone()).collect();
                let hi = lo
                    .iter()
                    .map(|pi| pi.iter().map(|v| v * scale).collect())
                    .collect();
                (lo, hi)
            });
            let args = lab::ConvexCompensationArgs {
                replications: config.replications,
                seed: config.seed,
                base: config,
                g_grid: p.g_grid,
                pi_pair,
                _marker: std::marker::PhantomData,
            };
            lab::convex_compensation(&args).map_err(config_err)?
        }
        _ => unreachable!("gated above"),
    };

    let hash = report.config_hash.clone();
    RunManifest::new(
        &format!("experiment {name}"),
        config_path,
        &hash,
        run.seed,
        &["report.json", "report.csv"],
    )
    .write(out_dir)?;
    write_output(out_dir, "report.json", &report.to_json())?;
    write_output(out_dir, "report.csv", &report.to_csv())?;
    for f in &report.flags {
        println!("{:?}: {} ({})", f.status, f.claim, f.detail);
    }
    Ok(())
}

fn default_delta_level() -> f64 {
    0.25
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_spec_parses_all_forms() {
        let v: FlowSpec = serde_json::from_str("[0.0, 1.0]").unwrap();
        assert!(matches!(v, FlowSpec::Values(_)));
        let c: FlowSpec = serde_json::from_str("{\"constant\": 0.5}").unwrap();
        assert!(matches!(c, FlowSpec::Constant { .. }));
        let t: FlowSpec = serde_json::from_str("\"type\"").unwrap();
        assert!(matches!(t, FlowSpec::Named(_)));
    }

    #[test]
    fn run_config_round_trips() {
        let json = r#"{
            "discount": 0.2, "step": 0.1, "outside_option": 0.1,
            "horizon_cap": 300.0, "replications": 1000, "seed": 7,
            "workers": [
                {"chain": {"bad_news": {"p0": 0.5, "lam": 1.0, "grid_points": 6, "delta": 0.1}},
                 "pi": "type", "cost": {"constant": 0.05}, "prize": 0.6}
            ]
        }"#;
        let run: RunConfig = serde_json::from_str(json).unwrap();
        let config = run.to_contest(Path::new(".")).unwrap();
        assert_eq!(config.workers.len(), 1);
        assert_eq!(config.priority, vec![0]);
        assert_eq!(config.workers[0].pi, config.workers[0].chain.grid);
    }

    #[test]
    fn malformed_kernel_is_named_in_the_error() {
        let dir = std::env::temp_dir().join(format!("contest-cli-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let chain = crate::typeproc::build_bad_news_belief(0.5, 1.0, 5, 0.1).unwrap();
        let mut bad = chain.clone();
        bad.kernel[2][0] += 0.25;
        let chain_json = bad.to_json();
        fs::write(dir.join("bad-chain.json"), chain_json).unwrap();
        let config = r#"{
            "discount": 0.2, "step": 0.1, "outside_option": 0.1,
            "horizon_cap": 300.0, "replications": 10, "seed": 7,
            "workers": [
                {"chain": {"file": "bad-chain.json"},
                 "pi": "type", "cost": {"constant": 0.05}, "prize": 0.6}
            ]
        }"#;
        let path = dir.join("config.json");
        fs::write(&path, config).unwrap();
        let run = RunConfig::from_path(&path).unwrap();
        let err = run.to_contest(&dir).unwrap_err();
        let text = err.to_string();
        assert!(
            text.contains("row 2"),
            "error must name the offending row: {text}"
        );
        fs::remove_dir_all(&dir).ok();
    }
}
