//! Worker-side values: continuation value of effort, promotion thresholds,
//! post-promotion perpetuity, and the single-arm optimal contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{self, AugmentedChain, QuitBoundary};
use crate::solve::{self, Discounting, SolveError, SparseRows};
use crate::typeproc::{validate, TypeChain};

/// Participation comparisons treat values above this as nonnegative,
/// absorbing linear-solver noise.
pub const PARTICIPATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WorkerError {
    #[error("invalid worker spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// One worker's primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub chain: TypeChain,
    /// Principal's flow reward per state; nondecreasing, nonnegative.
    pub pi: Vec<f64>,
    /// Worker's flow effort cost per state; nonincreasing, nonnegative.
    pub cost: Vec<f64>,
    /// Lump prize paid at promotion.
    pub prize: f64,
    /// Common discount rate `r`.
    pub discount: f64,
}

impl WorkerSpec {
    pub fn validate(&self) -> Result<(), WorkerError> {
        let n = self.chain.n_states();
        if self.pi.len() != n || self.cost.len() != n {
            return Err(WorkerError::InvalidSpec(format!(
                "pi and cost must have one entry per grid state ({n})"
            )));
        }
        if self.pi.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(WorkerError::InvalidSpec("pi must be nonnegative".into()));
        }
        if self.pi.windows(2).any(|w| w[1] < w[0]) {
            return Err(WorkerError::InvalidSpec("pi must be nondecreasing".into()));
        }
        if self.cost.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(WorkerError::InvalidSpec("cost must be nonnegative".into()));
        }
        if self.cost.windows(2).any(|w| w[1] > w[0]) {
            return Err(WorkerError::InvalidSpec(
                "cost must be nonincreasing".into(),
            ));
        }
        if !(self.prize > 0.0) {
            return Err(WorkerError::InvalidSpec("prize must be positive".into()));
        }
        if !(self.discount > 0.0) {
            return Err(WorkerError::InvalidSpec("discount must be positive".into()));
        }
        let violations = validate(&self.chain);
        if !violations.is_empty() {
            return Err(WorkerError::InvalidSpec(format!(
                "chain is not admissible: {}",
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
        Ok(())
    }

    pub fn discounting(&self) -> Discounting {
        Discounting::new(self.discount, self.chain.step)
    }

    pub fn base_rows(&self) -> SparseRows {
        self.chain
            .kernel
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect()
    }
}

/// Promotion target for one running-minimum state.
///
/// `Never` means the scan accepted the supremum beyond the truncated grid:
/// the promotion region is empty (this is what a zero effort cost produces,
/// where the continuous-state threshold is the unattained top of the state
/// space).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Threshold {
    Never,
    At(usize),
}

impl Threshold {
    pub fn reached_by(&self, x: usize) -> bool {
        match self {
            Threshold::Never => false,
            Threshold::At(t) => x >= *t,
        }
    }

    /// Order with `Never` on top, matching the sup convention.
    fn rank(&self) -> usize {
        match self {
            Threshold::Never => usize::MAX,
            Threshold::At(t) => *t,
        }
    }
}

/// Discounted first-exit value of effort inside the corridor `(x_lo, x_hi)`.
///
/// The worker pays his flow cost while the state stays strictly inside,
/// collects the prize on landing at or above `x_hi`, and gets 0 on landing at
/// or below `x_lo`. Exact to linear-solver tolerance.
pub fn continuation_value(
    spec: &WorkerSpec,
    x: usize,
    x_lo: usize,
    x_hi: usize,
) -> Result<f64, WorkerError> {
    let n = spec.chain.n_states();
    if x >= n || x_hi >= n || !(x_lo <= x && x <= x_hi) {
        return Err(WorkerError::InvalidArgument(format!(
            "corridor must satisfy x_lo <= x <= x_hi on the grid, got {x_lo} <= {x} <= {x_hi}"
        )));
    }
    let disc = spec.discounting();
    let rows = spec.base_rows();
    let inflow: Vec<f64> = spec.cost.iter().map(|c| -disc.step_weight * c).collect();
    let fixed: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if i <= x_lo {
                Some(0.0)
            } else if i >= x_hi {
                Some(spec.prize)
            } else {
                None
            }
        })
        .collect();
    Ok(solve::solve_linear_value(&rows, disc.beta, &inflow, &fixed)?[x])
}

/// Worker value of effort from the floor `m` itself, exiting with 0 on any
/// landing strictly below `m` and with the prize on reaching `target`.
///
/// This is the discrete stand-in for the paper-side limit of the corridor
/// value as the type approaches the running minimum from above: on a grid
/// the worker spends whole steps at the floor and pays the flow cost there,
/// so participation has to be priced at the floor state, not one cell up.
pub fn floor_continuation_value(
    spec: &WorkerSpec,
    m: usize,
    target: Threshold,
) -> Result<f64, WorkerError> {
    let n = spec.chain.n_states();
    if m >= n {
        return Err(WorkerError::InvalidArgument(format!(
            "state {m} outside grid of size {n}"
        )));
    }
    if let Threshold::At(t) = target {
        if t <= m || t >= n {
            return Err(WorkerError::InvalidArgument(format!(
                "target must lie strictly above the floor and on the grid, got {t}"
            )));
        }
    }
    let disc = spec.discounting();
    let rows = spec.base_rows();
    let inflow: Vec<f64> = spec.cost.iter().map(|c| -disc.step_weight * c).collect();
    let fixed: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if i < m {
                Some(0.0)
            } else {
                match target {
                    Threshold::At(t) if i >= t => Some(spec.prize),
                    _ => None,
                }
            }
        })
        .collect();
    Ok(solve::solve_linear_value(&rows, disc.beta, &inflow, &fixed)?[m])
}

/// The full promotion-threshold schedule `m ↦ P̄(m)`.
///
/// For each running minimum `m`, the largest target (scanning from `Never`
/// down through the grid, so ties break upward) whose floor continuation
/// value is nonnegative. Nondecreasing in `m` by construction.
pub fn promotion_thresholds(spec: &WorkerSpec) -> Result<Vec<Threshold>, WorkerError> {
    let n = spec.chain.n_states();
    let mut out = Vec::with_capacity(n);
    let mut prev = Threshold::At(0);
    for m in 0..n {
        let found = scan_threshold(spec, m)?;
        let clamped = if found.rank() >= prev.rank() {
            found
        } else {
            prev
        };
        out.push(clamped);
        prev = clamped;
    }
    Ok(out)
}

/// Thresholds at selected minima only (ascending), monotone-clamped within
/// the list. Large chains only ever visit a handful of running minima, and
/// each scan costs a column of corridor solves.
pub fn promotion_thresholds_at(
    spec: &WorkerSpec,
    minima: &[usize],
) -> Result<Vec<(usize, Threshold)>, WorkerError> {
    debug_assert!(
        minima.windows(2).all(|w| w[0] < w[1]),
        "minima must be ascending"
    );
    let mut out = Vec::with_capacity(minima.len());
    let mut prev = Threshold::At(0);
    for &m in minima {
        let found = scan_threshold(spec, m)?;
        let clamped = if found.rank() >= prev.rank() {
            found
        } else {
            prev
        };
        out.push((m, clamped));
        prev = clamped;
    }
    Ok(out)
}

fn scan_threshold(spec: &WorkerSpec, m: usize) -> Result<Threshold, WorkerError> {
    let n = spec.chain.n_states();
    if floor_continuation_value(spec, m, Threshold::Never)? >= -PARTICIPATION_TOL {
        return Ok(Threshold::Never);
    }
    for cand in (m + 1..n).rev() {
        if floor_continuation_value(spec, m, Threshold::At(cand))? >= -PARTICIPATION_TOL {
            return Ok(Threshold::At(cand));
        }
    }
    // No target above the floor keeps the worker whole: touch-promotion.
    Ok(Threshold::At(m))
}

/// Single running-minimum lookup; see [`promotion_thresholds`].
pub fn promotion_threshold(spec: &WorkerSpec, m: usize) -> Result<Threshold, WorkerError> {
    let n = spec.chain.n_states();
    if m >= n {
        return Err(WorkerError::InvalidArgument(format!(
            "state {m} outside grid of size {n}"
        )));
    }
    Ok(promotion_thresholds(spec)?[m])
}

/// Perpetual-delegation reward rate `π̄(x) = r·E[∫ e^{-rt} π(X_t) dt | x]`,
/// for every state at once (one linear solve; hold the vector to reuse it).
pub fn perpetuity_values(spec: &WorkerSpec) -> Result<Vec<f64>, WorkerError> {
    Ok(perpetuity_lumps(spec)?
        .into_iter()
        .map(|v| v * spec.discount)
        .collect())
}

/// The undiscounted-rate-free version `E[∫ e^{-rt} π dt | x] = π̄(x)/r`; this
/// is the principal's continuation value upon promoting at `x`.
pub fn perpetuity_lumps(spec: &WorkerSpec) -> Result<Vec<f64>, WorkerError> {
    let disc = spec.discounting();
    let rows = spec.base_rows();
    let inflow: Vec<f64> = spec.pi.iter().map(|p| disc.step_weight * p).collect();
    let fixed = vec![None; spec.chain.n_states()];
    Ok(solve::solve_linear_value(
        &rows, disc.beta, &inflow, &fixed,
    )?)
}

/// Perpetuity rate at one state; see [`perpetuity_values`].
pub fn perpetuity_value(spec: &WorkerSpec, x: usize) -> Result<f64, WorkerError> {
    let n = spec.chain.n_states();
    if x >= n {
        return Err(WorkerError::InvalidArgument(format!(
            "state {x} outside grid of size {n}"
        )));
    }
    Ok(perpetuity_values(spec)?[x])
}

/// The optimal single-worker promotion contract.
#[derive(Debug, Clone)]
pub struct SingleArmContract {
    /// Quit boundary `p̲(W)`.
    pub quit_state: QuitBoundary,
    /// Promotion threshold per running minimum.
    pub thresholds: Vec<Threshold>,
    /// Principal's value at the chain's initial state.
    pub principal_value: f64,
    /// Immediate promotion at the start (the experimentation assumption
    /// fails); the contract degenerates to promote-at-start.
    pub degenerate_promote_at_start: bool,
    aug: AugmentedChain,
    worker_values: Vec<f64>,
    principal_values: Vec<f64>,
    reachable: Vec<bool>,
}

/// What the contract does at an augmented state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractAction {
    Continue,
    Quit,
    Promote,
}

impl SingleArmContract {
    pub fn action(&self, x: usize, m: usize) -> ContractAction {
        contract_action(&self.thresholds, &self.quit_state, x, m)
    }

    pub fn worker_value(&self, x: usize, m: usize) -> f64 {
        self.worker_values[self.aug.id(x, m)]
    }

    pub fn principal_value_at(&self, x: usize, m: usize) -> f64 {
        self.principal_values[self.aug.id(x, m)]
    }

    /// Whether `(x, m)` is reachable from the initial state under the
    /// contract itself.
    pub fn is_reachable(&self, x: usize, m: usize) -> bool {
        self.reachable[self.aug.id(x, m)]
    }

    pub fn augmented(&self) -> &AugmentedChain {
        &self.aug
    }
}

/// Quit wins over a degenerate touch-promotion: the outside option is taken
/// wherever the experimentation corridor is empty, and genuine threshold
/// hits always happen strictly above the quit boundary.
fn contract_action(
    thresholds: &[Threshold],
    quit: &QuitBoundary,
    x: usize,
    m: usize,
) -> ContractAction {
    if matches!(quit, QuitBoundary::At(p) if x <= *p) {
        ContractAction::Quit
    } else if thresholds[m].reached_by(x) {
        ContractAction::Promote
    } else {
        ContractAction::Continue
    }
}

/// Assemble and evaluate the optimal single-arm contract against outside
/// option `W`: quit below the strategic-index boundary, promote at the
/// largest participation-compatible thresholds.
pub fn single_arm_contract(spec: &WorkerSpec, w: f64) -> Result<SingleArmContract, WorkerError> {
    if w < 0.0 {
        return Err(WorkerError::InvalidArgument(
            "outside option must be nonnegative".into(),
        ));
    }
    spec.validate()?;

    let thresholds = promotion_thresholds(spec)?;
    let quit_state = index::quit_boundary(spec, w).map_err(index_to_worker_error)?;
    let disc = spec.discounting();
    let aug = AugmentedChain::build(&spec.chain);
    let perp = perpetuity_lumps(spec)?;

    let n_aug = aug.len();
    let mut fixed_worker = vec![None; n_aug];
    let mut fixed_principal = vec![None; n_aug];
    let mut inflow_worker = vec![0.0; n_aug];
    let mut inflow_principal = vec![0.0; n_aug];
    for id in 0..n_aug {
        let (x, m) = aug.pair(id);
        match contract_action(&thresholds, &quit_state, x, m) {
            ContractAction::Promote => {
                fixed_worker[id] = Some(spec.prize);
                fixed_principal[id] = Some(perp[x]);
            }
            ContractAction::Quit => {
                fixed_worker[id] = Some(0.0);
                fixed_principal[id] = Some(w);
            }
            ContractAction::Continue => {
                inflow_worker[id] = -disc.step_weight * spec.cost[x];
                inflow_principal[id] = disc.step_weight * spec.pi[x];
            }
        }
    }

    let worker_values =
        solve::solve_linear_value(aug.rows(), disc.beta, &inflow_worker, &fixed_worker)?;
    let principal_values =
        solve::solve_linear_value(aug.rows(), disc.beta, &inflow_principal, &fixed_principal)?;

    let x0 = spec.chain.initial_state;
    let start = aug.id(x0, x0);
    let reachable = reachable_under_contract(&aug, &thresholds, &quit_state, start);
    let degenerate = contract_action(&thresholds, &quit_state, x0, x0) == ContractAction::Promote;

    Ok(SingleArmContract {
        quit_state,
        thresholds,
        principal_value: principal_values[start],
        degenerate_promote_at_start: degenerate,
        aug,
        worker_values,
        principal_values,
        reachable,
    })
}

fn reachable_under_contract(
    aug: &AugmentedChain,
    thresholds: &[Threshold],
    quit: &QuitBoundary,
    start: usize,
) -> Vec<bool> {
    let mut seen = vec![false; aug.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(id) = stack.pop() {
        let (x, m) = aug.pair(id);
        if contract_action(thresholds, quit, x, m) != ContractAction::Continue {
            continue;
        }
        for &(next, _) in &aug.rows()[id] {
            if !seen[next] {
                seen[next] = true;
                stack.push(next);
            }
        }
    }
    seen
}

fn index_to_worker_error(e: index::IndexError) -> WorkerError {
    match e {
        index::IndexError::Solve(s) => WorkerError::Solve(s),
        other => WorkerError::InvalidSpec(other.to_string()),
    }
}
