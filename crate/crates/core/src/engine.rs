//! The contest itself: index-rule delegation, promotion on first threshold
//! hit, outside option when every lower envelope is exhausted, payoff
//! accounting, exact product-chain evaluation, and benchmark policies.
//!
//! Discrete-time conventions (shared with the rest of the crate): flows
//! accrue at the start-of-step state with weight `(1-e^{-rΔ})/r`, the state
//! moves at the end of the step, promotion is checked on landing, and the
//! outside option is taken at weak inequality `max Γ̲ ≤ W`. Because the lower
//! envelope of a strategic index only falls at new running minima, the
//! envelope of worker `i` is just the diagonal table value `Γ^s(m_i, m_i)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

use crate::index::{IndexError, IndexTable};
use crate::solve::{self, Discounting, SolveError, SparseRows};
use crate::typeproc::ChainSampler;
use crate::worker::{self, WorkerError, WorkerSpec};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid contest config: {0}")]
    InvalidConfig(String),
    #[error("policy error: {0}")]
    Policy(String),
    #[error("product state space has {states} states, above the exact-mode cap {cap}; use the Monte Carlo mode")]
    StateSpaceOverflow { states: usize, cap: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Worker(#[from] WorkerError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Largest product state space the exact evaluator accepts (a dense solve
/// beyond this is impractical; simulate instead).
pub const EXACT_STATE_CAP: usize = 4_000;

/// A full contest specification.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ContestConfig {
    pub workers: Vec<WorkerSpec>,
    /// Outside option `W`.
    pub outside_option: f64,
    /// Tie-break order on worker ids; earlier entries win ties.
    pub priority: Vec<usize>,
    /// Effort step `Δ`, shared by all chains.
    pub step: f64,
    /// Simulation safety bound on global time.
    pub horizon_cap: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConfigWarning {
    /// `e^{-r·horizon_cap}` is not negligible; capped traces bias payoffs.
    HorizonDiscount { weight: f64 },
}

impl ContestConfig {
    pub fn validate(&self) -> Result<Vec<ConfigWarning>, EngineError> {
        if self.workers.is_empty() {
            return Err(EngineError::InvalidConfig("at least one worker".into()));
        }
        let r = self.workers[0].discount;
        for (i, w) in self.workers.iter().enumerate() {
            w.validate()
                .map_err(|e| EngineError::InvalidConfig(format!("worker {i}: {e}")))?;
            if w.discount != r {
                return Err(EngineError::InvalidConfig(
                    "all workers must share the discount rate".into(),
                ));
            }
            if w.chain.step != self.step {
                return Err(EngineError::InvalidConfig(format!(
                    "worker {i} chain step {} differs from contest step {}",
                    w.chain.step, self.step
                )));
            }
        }
        if self.outside_option < 0.0 {
            return Err(EngineError::InvalidConfig(
                "outside option must be nonnegative".into(),
            ));
        }
        if self.priority.len() != self.workers.len() {
            return Err(EngineError::InvalidConfig(
                "priority must order every worker id".into(),
            ));
        }
        let mut seen = vec![false; self.workers.len()];
        for &i in &self.priority {
            if i >= self.workers.len() || seen[i] {
                return Err(EngineError::InvalidConfig(
                    "priority must be a permutation".into(),
                ));
            }
            seen[i] = true;
        }
        if !(self.horizon_cap > 0.0) {
            return Err(EngineError::InvalidConfig(
                "horizon cap must be positive".into(),
            ));
        }
        let mut warnings = Vec::new();
        let weight = (-r * self.horizon_cap).exp();
        if weight >= 1e-9 {
            warnings.push(ConfigWarning::HorizonDiscount { weight });
        }
        Ok(warnings)
    }

    pub fn default_priority(n: usize) -> Vec<usize> {
        (0..n).collect()
    }
}

/// Index tables and samplers built once per config.
pub struct PreparedContest {
    pub config: ContestConfig,
    pub tables: Vec<IndexTable>,
    /// Promotion continuation `E[∫e^{-rt}π dt | x]` per worker per state.
    pub perp_lump: Vec<Vec<f64>>,
    pub disc: Discounting,
    samplers: Vec<ChainSampler>,
    /// `rank[i]` = position of worker `i` in the priority order.
    rank: Vec<usize>,
}

impl PreparedContest {
    /// Tables are built with contest-reachable coverage — everything the
    /// engine, the exact evaluator, and the oracle families ever query.
    pub fn new(config: ContestConfig) -> Result<(Self, Vec<ConfigWarning>), EngineError> {
        let warnings = config.validate()?;
        let tables = config
            .workers
            .iter()
            .map(IndexTable::build_reachable)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_tables(config, tables).map(|p| (p, warnings))
    }

    /// Reuse previously built tables (the CLI cache path). The caller is
    /// responsible for hash-checking staleness.
    pub fn from_tables(
        config: ContestConfig,
        tables: Vec<IndexTable>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if tables.len() != config.workers.len() {
            return Err(EngineError::InvalidConfig(
                "one index table per worker".into(),
            ));
        }
        let perp_lump = config
            .workers
            .iter()
            .map(worker::perpetuity_lumps)
            .collect::<Result<Vec<_>, _>>()?;
        let disc = Discounting::new(config.workers[0].discount, config.step);
        let samplers = config
            .workers
            .iter()
            .map(|w| ChainSampler::new(&w.chain))
            .collect();
        let mut rank = vec![0usize; config.workers.len()];
        for (pos, &i) in config.priority.iter().enumerate() {
            rank[i] = pos;
        }
        Ok(Self {
            config,
            tables,
            perp_lump,
            disc,
            samplers,
            rank,
        })
    }

    pub fn n_workers(&self) -> usize {
        self.config.workers.len()
    }

    /// Lower envelope of worker `i`'s strategic index given running min `m`.
    pub fn envelope(&self, i: usize, m: usize) -> f64 {
        self.tables[i].diagonal(m)
    }

    pub fn initial_states(&self) -> Vec<(usize, usize)> {
        self.config
            .workers
            .iter()
            .map(|w| (w.chain.initial_state, w.chain.initial_state))
            .collect()
    }

    fn prefer(&self, a: usize, b: usize) -> usize {
        if self.rank[a] <= self.rank[b] {
            a
        } else {
            b
        }
    }
}

/// What a policy sees each step: every worker's `(type, running minimum)`,
/// the global clock, and whether someone has been promoted. The loop ends at
/// promotion (delegation is pinned to the promoted worker afterward), so
/// live policies always observe `None`.
pub struct PolicyObs<'a> {
    pub t: f64,
    pub states: &'a [(usize, usize)],
    pub promoted: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAction {
    Delegate(usize),
    Promote(usize),
    Outside,
}

/// A delegation-plus-promotion rule driving the simulation loop.
pub trait DelegationPolicy {
    fn act(&self, obs: &PolicyObs) -> PolicyAction;
}

/// The index contest: promote on first threshold hit, take the outside
/// option when every lower envelope is at most `W`, otherwise delegate to
/// the highest lower envelope with priority-order tie-breaks.
pub struct IndexContestPolicy<'a> {
    prep: &'a PreparedContest,
}

impl<'a> IndexContestPolicy<'a> {
    pub fn new(prep: &'a PreparedContest) -> Self {
        Self { prep }
    }
}

impl DelegationPolicy for IndexContestPolicy<'_> {
    fn act(&self, obs: &PolicyObs) -> PolicyAction {
        let prep = self.prep;
        let w = prep.config.outside_option;

        // Promotion first. Only the just-moved worker can newly hit his
        // threshold; at t=0 several might start inside the region, in which
        // case the envelope/priority order picks the one delegation would.
        let mut promote: Option<usize> = None;
        for (i, &(x, m)) in obs.states.iter().enumerate() {
            if prep.tables[i].threshold(m).reached_by(x) && prep.envelope(i, m) > w {
                promote = Some(match promote {
                    None => i,
                    Some(j) => {
                        let (ei, ej) = (prep.envelope(i, m), prep.envelope(j, obs.states[j].1));
                        if ei > ej {
                            i
                        } else if ej > ei {
                            j
                        } else {
                            prep.prefer(i, j)
                        }
                    }
                });
            }
        }
        if let Some(i) = promote {
            return PolicyAction::Promote(i);
        }

        let mut best: Option<(usize, f64)> = None;
        for (i, &(_, m)) in obs.states.iter().enumerate() {
            let env = prep.envelope(i, m);
            best = Some(match best {
                None => (i, env),
                Some((j, e)) => {
                    if env > e {
                        (i, env)
                    } else if env < e {
                        (j, e)
                    } else {
                        (prep.prefer(i, j), e)
                    }
                }
            });
        }
        let (i, env) = best.expect("at least one worker");
        if env <= w {
            PolicyAction::Outside
        } else {
            PolicyAction::Delegate(i)
        }
    }
}

/// One simulated step.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub t: f64,
    pub worker: usize,
    pub x_pre: usize,
    pub m_pre: usize,
    pub x_post: usize,
    pub m_post: usize,
    /// Delegated worker's lower envelope at decision time.
    pub index: f64,
    /// Max lower envelope across workers at decision time.
    pub envelope_max: f64,
    /// Worker continuation values at decision time, when the caller supplied
    /// exact tables for a Markov policy.
    pub worker_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Outcome {
    Promoted {
        worker: usize,
        time: f64,
        state: usize,
    },
    OutsideOption {
        time: f64,
    },
    Capped,
}

/// One simulated contest path.
#[derive(Debug, Clone, Serialize)]
pub struct ContestTrace {
    pub events: Vec<TraceEvent>,
    pub outcome: Outcome,
    pub principal_payoff: f64,
    pub worker_payoffs: Vec<f64>,
    pub effort_clocks: Vec<f64>,
    /// Pathwise `Σ β^t·a·r·maxΓ̲ + β^τ·terminal` — the envelope-charge
    /// integral whose mean reproduces the principal's payoff under the
    /// index rule.
    pub envelope_charge: f64,
}

/// Simulate one contest under an arbitrary policy.
///
/// `ir_tables`, when given for a Markov policy, annotates each event with
/// the workers' exact continuation values at the visited product state.
pub fn run_policy<R: Rng + ?Sized>(
    prep: &PreparedContest,
    policy: &dyn DelegationPolicy,
    rng: &mut R,
    ir_tables: Option<&ExactEvaluation>,
) -> Result<ContestTrace, EngineError> {
    let n = prep.n_workers();
    let disc = prep.disc;
    let w = prep.config.outside_option;
    let max_steps = (prep.config.horizon_cap / disc.delta).ceil() as usize;

    let mut states = prep.initial_states();
    let mut discount = 1.0_f64;
    let mut principal = 0.0;
    let mut charge = 0.0;
    let mut workers = vec![0.0; n];
    let mut effort = vec![0.0; n];
    let mut events = Vec::new();

    let mut step_count = 0usize;
    let outcome = loop {
        let t = step_count as f64 * disc.delta;
        let obs = PolicyObs {
            t,
            states: &states,
            promoted: None,
        };
        match policy.act(&obs) {
            PolicyAction::Outside => {
                principal += discount * w;
                charge += discount * w;
                break Outcome::OutsideOption { time: t };
            }
            PolicyAction::Promote(i) => {
                if i >= n {
                    return Err(EngineError::Policy(format!(
                        "promote of unknown worker {i}"
                    )));
                }
                let (x, _) = states[i];
                principal += discount * prep.perp_lump[i][x];
                // The lower envelope never rises: after promotion the charge
                // integrand stays at the final excursion level, not at the
                // (weakly higher) promoted perpetuity.
                let env_max = (0..n)
                    .map(|j| prep.envelope(j, states[j].1))
                    .fold(f64::NEG_INFINITY, f64::max);
                charge += discount * env_max;
                workers[i] += discount * prep.config.workers[i].prize;
                break Outcome::Promoted {
                    worker: i,
                    time: t,
                    state: x,
                };
            }
            PolicyAction::Delegate(i) => {
                if i >= n {
                    return Err(EngineError::Policy(format!(
                        "delegation to unknown worker {i}"
                    )));
                }
                let (x, m) = states[i];
                let spec = &prep.config.workers[i];
                principal += discount * disc.step_weight * spec.pi[x];
                workers[i] -= discount * disc.step_weight * spec.cost[x];
                let env_max = (0..n)
                    .map(|j| prep.envelope(j, states[j].1))
                    .fold(f64::NEG_INFINITY, f64::max);
                charge += discount * disc.step_weight * disc.r * env_max;

                let x2 = prep.samplers[i].step(x, rng);
                let m2 = m.min(x2);
                events.push(TraceEvent {
                    t,
                    worker: i,
                    x_pre: x,
                    m_pre: m,
                    x_post: x2,
                    m_post: m2,
                    index: prep.envelope(i, m),
                    envelope_max: env_max,
                    worker_values: ir_tables.and_then(|tab| tab.worker_values_at(&states)),
                });
                states[i] = (x2, m2);
                effort[i] += disc.delta;
                discount *= disc.beta;
                step_count += 1;
                if step_count >= max_steps {
                    break Outcome::Capped;
                }
            }
        }
    };

    Ok(ContestTrace {
        events,
        outcome,
        principal_payoff: principal,
        worker_payoffs: workers,
        effort_clocks: effort,
        envelope_charge: charge,
    })
}

/// Simulate the index contest itself.
pub fn run_index_contest<R: Rng + ?Sized>(
    prep: &PreparedContest,
    rng: &mut R,
) -> Result<ContestTrace, EngineError> {
    run_policy(prep, &IndexContestPolicy::new(prep), rng, None)
}

/// Effort clocks produced by [`time_change_construction`].
pub struct TimeChange {
    /// Delegated worker per global step.
    pub delegation: Vec<usize>,
    /// `clocks[i][g]` = worker `i`'s consumed effort steps after global step
    /// `g+1`.
    pub clocks: Vec<Vec<usize>>,
}

/// The index delegation rule reconstructed from realized index paths alone,
/// by the synchronization construction on step functions.
///
/// For each worker, `σ(W)` is the first effort step at which his index path
/// is at most `W`, and `σ(W⁻)` the first at which it is strictly below; the
/// stretch between them is his excursion at level `W`. Processing the
/// distinct envelope levels from the top down and, within a level, paying
/// out each worker's stretch in ascending id order yields the global
/// delegation order.
pub fn time_change_construction(index_paths: &[Vec<f64>]) -> TimeChange {
    let envs: Vec<Vec<f64>> = index_paths
        .iter()
        .map(|p| crate::index::lower_envelope(p))
        .collect();
    let mut levels: Vec<f64> = envs.iter().flatten().copied().collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();

    let mut delegation = Vec::new();
    for &level in &levels {
        for (i, env) in envs.iter().enumerate() {
            let start = env.iter().position(|&v| v <= level).unwrap_or(env.len());
            let stop = env.iter().position(|&v| v < level).unwrap_or(env.len());
            for _ in start..stop {
                delegation.push(i);
            }
        }
    }

    let n = index_paths.len();
    let mut clocks = vec![Vec::with_capacity(delegation.len()); n];
    let mut counts = vec![0usize; n];
    for &i in &delegation {
        counts[i] += 1;
        for (j, clock) in clocks.iter_mut().enumerate() {
            clock.push(counts[j]);
        }
    }
    TimeChange { delegation, clocks }
}

// ---------------------------------------------------------------------------
// Exact product-chain evaluation
// ---------------------------------------------------------------------------

/// Flow accrued per step in the exact evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    /// True payoffs: the delegated worker's `π` flow.
    Realized,
    /// The fair-charge flow `r·max Γ̲`, whose policy value equals the
    /// realized one under the index rule (the envelope identity).
    EnvelopeCharge,
}

/// A Markov policy on the product of augmented states, optionally cycling
/// through a finite set of phases (for calendar-based rules like round-robin
/// switchers). Phases advance by one per delegation step.
pub trait ExactPolicy {
    fn phases(&self) -> usize {
        1
    }
    fn act(&self, phase: usize, states: &[(usize, usize)]) -> PolicyAction;
}

impl ExactPolicy for IndexContestPolicy<'_> {
    fn act(&self, _phase: usize, states: &[(usize, usize)]) -> PolicyAction {
        DelegationPolicy::act(
            self,
            &PolicyObs {
                t: 0.0,
                states,
                promoted: None,
            },
        )
    }
}

#[derive(Debug, Clone)]
struct ProductState {
    phase: usize,
    states: Vec<(usize, usize)>,
    action: PolicyAction,
}

/// Exact policy evaluation on the reachable product chain.
#[derive(Debug)]
pub struct ExactEvaluation {
    pub principal_value: f64,
    /// Worker values at the initial product state.
    pub worker_start_values: Vec<f64>,
    pub min_worker_value: f64,
    /// `(product state, worker)` attaining the minimum.
    pub min_witness: Option<(Vec<(usize, usize)>, usize)>,
    pub n_reachable: usize,
    states: Vec<ProductState>,
    ids: HashMap<Vec<u16>, usize>,
    worker_values: Vec<Vec<f64>>,
}

impl ExactEvaluation {
    /// Continuation values of every worker at a visited phase-0 state.
    pub fn worker_values_at(&self, states: &[(usize, usize)]) -> Option<Vec<f64>> {
        let key = encode(0, states);
        let id = *self.ids.get(&key)?;
        Some(self.worker_values.iter().map(|v| v[id]).collect())
    }

    /// Negative-value states, for implementability reports.
    pub fn negatives(&self, tol: f64) -> Vec<(Vec<(usize, usize)>, usize, f64)> {
        let mut out = Vec::new();
        for (j, values) in self.worker_values.iter().enumerate() {
            for (id, &v) in values.iter().enumerate() {
                if v < -tol {
                    out.push((self.states[id].states.clone(), j, v));
                }
            }
        }
        out
    }
}

fn encode(phase: usize, states: &[(usize, usize)]) -> Vec<u16> {
    let mut key = Vec::with_capacity(states.len() + 1);
    key.push(phase as u16);
    for &(x, m) in states {
        key.push(((x as u16) << 8) | m as u16);
    }
    key
}

/// Evaluate a Markov contest policy exactly on the product chain reachable
/// from the initial states.
pub fn evaluate_exact(
    prep: &PreparedContest,
    policy: &dyn ExactPolicy,
    mode: FlowMode,
) -> Result<ExactEvaluation, EngineError> {
    let n = prep.n_workers();
    let disc = prep.disc;
    let w = prep.config.outside_option;
    let phases = policy.phases().max(1);

    let start = prep.initial_states();
    let mut ids: HashMap<Vec<u16>, usize> = HashMap::new();
    let mut discovered: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    ids.insert(encode(0, &start), 0);
    discovered.push((0, start.clone()));

    let mut cursor = 0usize;
    while cursor < discovered.len() {
        let (phase, st) = discovered[cursor].clone();
        cursor += 1;
        if let PolicyAction::Delegate(i) = policy.act(phase, &st) {
            if i >= n {
                return Err(EngineError::Policy(format!(
                    "delegation to unknown worker {i}"
                )));
            }
            let next_phase = (phase + 1) % phases;
            let (x, m) = st[i];
            for (x2, &p) in prep.config.workers[i].chain.kernel[x].iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let mut nxt = st.clone();
                nxt[i] = (x2, m.min(x2));
                let key = encode(next_phase, &nxt);
                if let std::collections::hash_map::Entry::Vacant(slot) = ids.entry(key) {
                    slot.insert(discovered.len());
                    discovered.push((next_phase, nxt));
                    if discovered.len() > EXACT_STATE_CAP {
                        return Err(EngineError::StateSpaceOverflow {
                            states: discovered.len(),
                            cap: EXACT_STATE_CAP,
                        });
                    }
                }
            }
        }
    }

    let states: Vec<ProductState> = discovered
        .into_iter()
        .map(|(phase, st)| {
            let action = policy.act(phase, &st);
            ProductState {
                phase,
                states: st,
                action,
            }
        })
        .collect();

    let n_states = states.len();
    let mut rows: SparseRows = vec![Vec::new(); n_states];
    let mut fixed_principal = vec![None; n_states];
    let mut inflow_principal = vec![0.0; n_states];
    let mut fixed_workers = vec![vec![None; n_states]; n];
    let mut inflow_workers = vec![vec![0.0; n_states]; n];

    for (id, st) in states.iter().enumerate() {
        match st.action {
            PolicyAction::Outside => {
                fixed_principal[id] = Some(w);
                for j in 0..n {
                    fixed_workers[j][id] = Some(0.0);
                }
            }
            PolicyAction::Promote(i) => {
                let (x, _) = st.states[i];
                fixed_principal[id] = Some(match mode {
                    FlowMode::Realized => prep.perp_lump[i][x],
                    // Post-promotion the envelope is frozen at the final
                    // excursion level.
                    FlowMode::EnvelopeCharge => (0..n)
                        .map(|j| prep.envelope(j, st.states[j].1))
                        .fold(f64::NEG_INFINITY, f64::max),
                });
                for j in 0..n {
                    fixed_workers[j][id] = Some(if j == i {
                        prep.config.workers[i].prize
                    } else {
                        0.0
                    });
                }
            }
            PolicyAction::Delegate(i) => {
                let (x, m) = st.states[i];
                inflow_principal[id] = match mode {
                    FlowMode::Realized => disc.step_weight * prep.config.workers[i].pi[x],
                    FlowMode::EnvelopeCharge => {
                        let env_max = (0..n)
                            .map(|j| prep.envelope(j, st.states[j].1))
                            .fold(f64::NEG_INFINITY, f64::max);
                        disc.step_weight * disc.r * env_max
                    }
                };
                inflow_workers[i][id] = -disc.step_weight * prep.config.workers[i].cost[x];
                let next_phase = (st.phase + 1) % phases;
                for (x2, &p) in prep.config.workers[i].chain.kernel[x].iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    let mut nxt = st.states.clone();
                    nxt[i] = (x2, m.min(x2));
                    rows[id].push((ids[&encode(next_phase, &nxt)], p));
                }
            }
        }
    }

    let principal =
        solve::solve_linear_value(&rows, disc.beta, &inflow_principal, &fixed_principal)?;
    let mut worker_values = Vec::with_capacity(n);
    for j in 0..n {
        worker_values.push(solve::solve_linear_value(
            &rows,
            disc.beta,
            &inflow_workers[j],
            &fixed_workers[j],
        )?);
    }

    let start_id = ids[&encode(0, &start)];
    let mut min_value = f64::INFINITY;
    let mut witness = None;
    for (j, values) in worker_values.iter().enumerate() {
        for (id, &v) in values.iter().enumerate() {
            if v < min_value {
                min_value = v;
                witness = Some((states[id].states.clone(), j));
            }
        }
    }

    Ok(ExactEvaluation {
        principal_value: principal[start_id],
        worker_start_values: worker_values.iter().map(|v| v[start_id]).collect(),
        min_worker_value: min_value,
        min_witness: witness,
        n_reachable: n_states,
        states,
        ids,
        worker_values,
    })
}

/// Exact-mode principal value of the index contest: policy-evaluate the
/// fair-charge flow `r·max Γ̲` on the product chain.
pub fn principal_value_envelope(prep: &PreparedContest) -> Result<f64, EngineError> {
    let policy = IndexContestPolicy::new(prep);
    Ok(evaluate_exact(prep, &policy, FlowMode::EnvelopeCharge)?.principal_value)
}

/// Monte Carlo estimate of the same envelope integral, with its standard
/// error.
pub fn principal_value_envelope_mc(
    prep: &PreparedContest,
    replications: usize,
    seed: u64,
) -> Result<(f64, f64), EngineError> {
    let samples = run_replications(prep, replications, seed, 0)?;
    let charges: Vec<f64> = samples.stats.iter().map(|s| s.envelope_charge).collect();
    Ok(mean_se(&charges))
}

/// Implementability report for a Markov policy.
#[derive(Debug)]
pub struct IrReport {
    pub min_value: f64,
    pub witness: Option<(Vec<(usize, usize)>, usize)>,
    pub n_reachable: usize,
    pub negatives: Vec<(Vec<(usize, usize)>, usize, f64)>,
}

/// Compute every worker's continuation value at every reachable product
/// state and report the minimum and all negative entries.
pub fn check_ir(
    prep: &PreparedContest,
    policy: &dyn ExactPolicy,
    tol: f64,
) -> Result<IrReport, EngineError> {
    let eval = evaluate_exact(prep, policy, FlowMode::Realized)?;
    Ok(IrReport {
        min_value: eval.min_worker_value,
        witness: eval.min_witness.clone(),
        n_reachable: eval.n_reachable,
        negatives: eval.negatives(tol),
    })
}

// ---------------------------------------------------------------------------
// Replicated simulation
// ---------------------------------------------------------------------------

/// Per-replication scalars kept for aggregation.
#[derive(Debug, Clone)]
pub struct RepStats {
    pub principal: f64,
    pub envelope_charge: f64,
    pub workers: Vec<f64>,
    pub outcome: Outcome,
}

pub struct ReplicationSet {
    pub stats: Vec<RepStats>,
    /// Fully recorded traces for the first `sample` replications.
    pub traces: Vec<ContestTrace>,
}

/// Run `replications` independent contests with per-replication ChaCha
/// substreams of `seed`; results are identical for any thread count.
pub fn run_replications(
    prep: &PreparedContest,
    replications: usize,
    seed: u64,
    sample: usize,
) -> Result<ReplicationSet, EngineError> {
    let results: Result<Vec<(RepStats, Option<ContestTrace>)>, EngineError> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let trace = run_index_contest(prep, &mut rng)?;
            let stats = RepStats {
                principal: trace.principal_payoff,
                envelope_charge: trace.envelope_charge,
                workers: trace.worker_payoffs.clone(),
                outcome: trace.outcome.clone(),
            };
            Ok((stats, (rep < sample).then_some(trace)))
        })
        .collect();
    let results = results?;
    let mut stats = Vec::with_capacity(replications);
    let mut traces = Vec::new();
    for (s, t) in results {
        stats.push(s);
        if let Some(t) = t {
            traces.push(t);
        }
    }
    Ok(ReplicationSet { stats, traces })
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typeproc::build_bad_news_belief;

    fn bad_news_worker(p0: f64, cost: f64, prize: f64) -> WorkerSpec {
        let chain = build_bad_news_belief(p0, 1.0, 9, 0.1).unwrap();
        let n = chain.n_states();
        WorkerSpec {
            pi: chain.grid.clone(),
            cost: vec![cost; n],
            prize,
            discount: 0.2,
            chain,
        }
    }

    fn two_worker_config(w: f64) -> ContestConfig {
        let a = bad_news_worker(0.55, 0.05, 0.6);
        let b = bad_news_worker(0.45, 0.05, 0.6);
        ContestConfig {
            workers: vec![a, b],
            outside_option: w,
            priority: vec![0, 1],
            step: 0.1,
            horizon_cap: 400.0,
            replications: 100,
            seed: 7,
        }
    }

    #[test]
    fn dominant_outside_option_is_taken_immediately() {
        let (prep, _) = PreparedContest::new(two_worker_config(50.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = run_index_contest(&prep, &mut rng).unwrap();
        assert_eq!(trace.outcome, Outcome::OutsideOption { time: 0.0 });
        assert_eq!(trace.principal_payoff, 50.0);
        assert!(trace.events.is_empty());
    }

    #[test]
    fn delegation_attains_the_max_envelope_and_effort_adds_up() {
        let (prep, _) = PreparedContest::new(two_worker_config(0.05)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trace = run_index_contest(&prep, &mut rng).unwrap();
        assert!(!trace.events.is_empty());
        for e in &trace.events {
            assert!(
                (e.index - e.envelope_max).abs() < 1e-15,
                "delegated worker must attain the max lower envelope"
            );
        }
        let total: f64 = trace.effort_clocks.iter().sum();
        let horizon = trace.events.len() as f64 * prep.disc.delta;
        assert!(total <= horizon + 1e-12);
        // promotion, when it happens, is a threshold hit by the delegated worker
        if let Outcome::Promoted { worker, state, .. } = trace.outcome {
            let m = trace
                .events
                .iter()
                .rev()
                .find(|e| e.worker == worker)
                .map(|e| e.m_post);
            let m = m.unwrap_or(state);
            assert!(prep.tables[worker].threshold(m).reached_by(state));
        }
    }

    #[test]
    fn single_worker_contest_matches_the_contract_value() {
        let spec = bad_news_worker(0.5, 0.05, 0.6);
        let w = 0.2;
        let contract = worker::single_arm_contract(&spec, w).unwrap();
        let config = ContestConfig {
            workers: vec![spec],
            outside_option: w,
            priority: vec![0],
            step: 0.1,
            horizon_cap: 400.0,
            replications: 0,
            seed: 0,
        };
        let (prep, _) = PreparedContest::new(config).unwrap();
        let exact =
            evaluate_exact(&prep, &IndexContestPolicy::new(&prep), FlowMode::Realized).unwrap();
        assert!(
            (exact.principal_value - contract.principal_value).abs() < 1e-8,
            "engine N=1 value {} vs contract {}",
            exact.principal_value,
            contract.principal_value
        );
    }

    #[test]
    fn envelope_charge_identity_holds() {
        let (prep, _) = PreparedContest::new(two_worker_config(0.1)).unwrap();
        let policy = IndexContestPolicy::new(&prep);
        let realized = evaluate_exact(&prep, &policy, FlowMode::Realized).unwrap();
        let charged = evaluate_exact(&prep, &policy, FlowMode::EnvelopeCharge).unwrap();
        assert!(
            (realized.principal_value - charged.principal_value).abs() < 1e-6,
            "fair-charge identity: realized {} vs charged {}",
            realized.principal_value,
            charged.principal_value
        );
    }

    #[test]
    fn monte_carlo_agrees_with_exact_value() {
        let (prep, _) = PreparedContest::new(two_worker_config(0.1)).unwrap();
        let exact = principal_value_envelope(&prep).unwrap();
        let set = run_replications(&prep, 20_000, 11, 0).unwrap();
        let payoffs: Vec<f64> = set.stats.iter().map(|s| s.principal).collect();
        let (mean, se) = mean_se(&payoffs);
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "MC payoff {mean} ± {se} vs exact {exact}"
        );
        let (charge_mean, charge_se) = principal_value_envelope_mc(&prep, 20_000, 11).unwrap();
        assert!((charge_mean - exact).abs() <= 3.0 * charge_se);
    }

    #[test]
    fn replications_are_thread_count_independent() {
        let (prep, _) = PreparedContest::new(two_worker_config(0.1)).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let a = pool1
            .install(|| run_replications(&prep, 500, 42, 0))
            .unwrap();
        let b = pool8
            .install(|| run_replications(&prep, 500, 42, 0))
            .unwrap();
        for (x, y) in a.stats.iter().zip(&b.stats) {
            assert_eq!(x.principal.to_bits(), y.principal.to_bits());
            assert_eq!(x.outcome, y.outcome);
        }
    }

    #[test]
    fn time_change_matches_hand_trace() {
        // Hand-traced from the synchronization definitions: levels 5,4,3,2,1,0.
        let paths = vec![vec![5.0, 2.0, 2.0, 1.0], vec![4.0, 4.0, 3.0, 0.0]];
        let tc = time_change_construction(&paths);
        assert_eq!(tc.delegation, vec![0, 1, 1, 1, 0, 0, 0, 1]);
        assert_eq!(tc.clocks[0], vec![1, 1, 1, 1, 2, 3, 4, 4]);
        assert_eq!(tc.clocks[1], vec![0, 1, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn time_change_single_worker_is_identity() {
        let paths = vec![vec![3.0, 1.0, 0.5, 2.0, 0.2]];
        let tc = time_change_construction(&paths);
        assert_eq!(tc.delegation, vec![0; 5]);
    }

    #[test]
    fn time_change_constant_indices_run_in_index_order() {
        let paths = vec![vec![5.0; 4], vec![3.0; 3]];
        let tc = time_change_construction(&paths);
        assert_eq!(tc.delegation, vec![0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn engine_delegation_equals_time_change_on_realized_paths() {
        let (prep, _) = PreparedContest::new(two_worker_config(0.05)).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trace = run_index_contest(&prep, &mut rng).unwrap();
            if trace.events.is_empty() {
                continue;
            }
            let mut paths: Vec<Vec<f64>> = vec![Vec::new(); prep.n_workers()];
            for e in &trace.events {
                paths[e.worker].push(prep.tables[e.worker].strategic_at(e.x_pre, e.m_pre));
            }
            let engine_order: Vec<usize> = trace.events.iter().map(|e| e.worker).collect();
            let tc = time_change_construction(&paths);
            assert_eq!(tc.delegation, engine_order, "seed {seed}");
        }
    }

    #[test]
    fn check_ir_flags_exploitative_policy() {
        struct AlwaysFirst;
        impl ExactPolicy for AlwaysFirst {
            fn act(&self, _phase: usize, _states: &[(usize, usize)]) -> PolicyAction {
                PolicyAction::Delegate(0)
            }
        }
        let (prep, _) = PreparedContest::new(two_worker_config(0.05)).unwrap();
        let report = check_ir(&prep, &AlwaysFirst, 1e-8).unwrap();
        assert!(
            report.min_value < -1e-6,
            "pure cost with no prize must go negative"
        );
        assert!(!report.negatives.is_empty());

        // The index contest is implementable.
        let policy = IndexContestPolicy::new(&prep);
        let report = check_ir(&prep, &policy, 1e-8).unwrap();
        assert!(
            report.min_value >= -1e-8,
            "min worker value {}",
            report.min_value
        );
    }

    #[test]
    fn narrative_switch_exists_among_seeds() {
        // Two bad-news workers; some seed must reproduce the story: the
        // better worker is delegated first, his bad news arrives, the task
        // switches to worker 2, and worker 2 is promoted.
        let (prep, _) = PreparedContest::new(two_worker_config(0.01)).unwrap();
        let mut found = false;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trace = run_index_contest(&prep, &mut rng).unwrap();
            let starts_with_0 = trace.events.first().is_some_and(|e| e.worker == 0);
            let zero_crashed = trace.events.iter().any(|e| e.worker == 0 && e.x_post == 0);
            let switched = trace
                .events
                .iter()
                .skip_while(|e| e.worker == 0)
                .all(|e| e.worker == 1);
            let promoted_1 = matches!(trace.outcome, Outcome::Promoted { worker: 1, .. });
            if starts_with_0 && zero_crashed && switched && promoted_1 {
                found = true;
                break;
            }
        }
        assert!(
            found,
            "no seed reproduced the delegate-crash-switch-promote order"
        );
    }

    #[test]
    fn fixed_policy_on_deterministic_ladder_matches_hand_arithmetic() {
        // One-worker staircase, no dead ends: "always delegate, promote at
        // the top" pays Σ_{k<K} β^k·a·π(k) + β^K·perp(top), with
        // perp(top) = π(top)/r at the absorbing top.
        let chain = crate::typeproc::build_ladder_deadend(1.0, 0.0, 1.0, 6, 0.2).unwrap();
        let n = chain.n_states();
        let spec = WorkerSpec {
            pi: chain.grid.clone(),
            cost: vec![0.1; n],
            prize: 0.4,
            discount: 0.5,
            chain,
        };
        let config = ContestConfig {
            workers: vec![spec],
            outside_option: 0.0,
            priority: vec![0],
            step: 0.2,
            horizon_cap: 100.0,
            replications: 0,
            seed: 0,
        };
        let (prep, _) = PreparedContest::new(config).unwrap();

        struct AlwaysPromoteAtTop;
        impl DelegationPolicy for AlwaysPromoteAtTop {
            fn act(&self, obs: &PolicyObs) -> PolicyAction {
                if obs.states[0].0 == 5 {
                    PolicyAction::Promote(0)
                } else {
                    PolicyAction::Delegate(0)
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace = run_policy(&prep, &AlwaysPromoteAtTop, &mut rng, None).unwrap();

        let disc = prep.disc;
        let spec = &prep.config.workers[0];
        let mut expected = 0.0;
        for k in 0..5 {
            expected += disc.beta.powi(k as i32) * disc.step_weight * spec.pi[k];
        }
        expected += disc.beta.powi(5) * spec.pi[5] / spec.discount;
        assert!(
            (trace.principal_payoff - expected).abs() < 1e-12,
            "trace {} vs hand arithmetic {expected}",
            trace.principal_payoff
        );
        // worker side: pays cost for 5 steps, then the prize
        let mut worker_expected = 0.0;
        for k in 0..5 {
            worker_expected -= disc.beta.powi(k) * disc.step_weight * 0.1;
        }
        worker_expected += disc.beta.powi(5) * 0.4;
        assert!((trace.worker_payoffs[0] - worker_expected).abs() < 1e-12);

        struct ImmediateOutside;
        impl DelegationPolicy for ImmediateOutside {
            fn act(&self, _obs: &PolicyObs) -> PolicyAction {
                PolicyAction::Outside
            }
        }
        let mut config2 = prep.config.clone();
        config2.outside_option = 0.33;
        let (prep2, _) = PreparedContest::new(config2).unwrap();
        let trace = run_policy(&prep2, &ImmediateOutside, &mut rng, None).unwrap();
        assert_eq!(trace.principal_payoff, 0.33);
    }

    #[test]
    fn single_constant_worker_envelope_is_the_index() {
        // N=1 with a constant flow: the index is ρ/r everywhere and the
        // envelope accrual integrates to exactly that.
        let chain = crate::typeproc::build_bad_news_belief(0.5, 1.0, 6, 0.1).unwrap();
        let n = chain.n_states();
        let spec = WorkerSpec {
            pi: vec![0.9; n],
            cost: vec![0.0; n],
            prize: 0.5,
            discount: 0.3,
            chain,
        };
        let config = ContestConfig {
            workers: vec![spec],
            outside_option: 0.0,
            priority: vec![0],
            step: 0.1,
            horizon_cap: 200.0,
            replications: 0,
            seed: 0,
        };
        let (prep, _) = PreparedContest::new(config).unwrap();
        let value = principal_value_envelope(&prep).unwrap();
        assert!((value - 0.9 / 0.3).abs() < 1e-8, "envelope {value} vs 3.0");
    }

    #[test]
    fn capped_traces_are_flagged() {
        let mut config = two_worker_config(0.0);
        // tiny horizon forces the cap
        config.horizon_cap = 0.3;
        for w in &mut config.workers {
            w.pi = w.pi.iter().map(|p| p + 0.5).collect();
        }
        let (prep, warnings) = PreparedContest::new(config).unwrap();
        assert!(!warnings.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trace = run_index_contest(&prep, &mut rng).unwrap();
        assert_eq!(trace.outcome, Outcome::Capped);
    }
}
