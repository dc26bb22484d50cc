//! Discretized worker type processes.
//!
//! A worker's type evolves only while he works on the non-routine task.  The
//! continuous-time processes (belief diffusions, bad-news Poisson learning,
//! drift-with-dead-ends ladders) are represented by uniformized jump chains on
//! a finite grid: one kernel row per state, consumed per unit `Δ` of effective
//! effort time.  Indices, thresholds, and contest values are computed on the
//! chain and read as `Δ → 0` approximations.
//!
//! All generator outputs satisfy the admissibility checks in [`validate`]:
//! stochastic row sums, stochastic monotonicity (first-order dominance of
//! successor laws in the current state), one-sided multi-state jumps, and
//! upward reachability from every non-absorbing interior state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Errors from chain construction.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChainError {
    /// A generator parameter is outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    /// The grid is too coarse for the requested dynamics.
    #[error("discretization failure at state {state}: {detail}")]
    Discretization { state: usize, detail: String },
    /// The effort step is incompatible with the requested rates.
    #[error("step size error: {0}")]
    StepSize(String),
    /// A serialized chain is malformed.
    #[error("malformed chain: {0}")]
    Malformed(String),
}

/// Direction restriction on multi-state jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSign {
    /// No jumps: every move is to an adjacent grid state.
    None,
    /// Multi-state moves go up only; downward moves are adjacent.
    UpOnly,
    /// Multi-state moves go down only; upward moves are adjacent.
    DownOnly,
}

/// How an endpoint of the grid behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Absorbing,
    /// The endpoint only exists because the grid truncates the state space;
    /// the chain can leave it again.
    Reflecting,
}

/// Endpoint flags for the two ends of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub lower: BoundaryKind,
    pub upper: BoundaryKind,
}

/// A discretized worker type process.
///
/// `kernel[i]` is the distribution of the successor state after one effort
/// step of length [`step`](Self::step) starting from `grid[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeChain {
    /// Ascending type values `x_0 < … < x_K`.
    pub grid: Vec<f64>,
    /// Row-stochastic transition kernel per effort step.
    pub kernel: Vec<Vec<f64>>,
    /// Effort-time length `Δ` of one step.
    pub step: f64,
    pub jump_sign: JumpSign,
    pub boundary: Boundary,
    /// Designated start state (the generator's `p0` or the ladder's floor).
    pub initial_state: usize,
}

impl TypeChain {
    /// Basic shape checks; deep admissibility lives in [`validate`].
    pub fn from_parts(
        grid: Vec<f64>,
        kernel: Vec<Vec<f64>>,
        step: f64,
        jump_sign: JumpSign,
        boundary: Boundary,
        initial_state: usize,
    ) -> Result<Self, ChainError> {
        if grid.len() < 2 {
            return Err(ChainError::Malformed("grid needs at least 2 states".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ChainError::Malformed(
                "grid must be strictly ascending".into(),
            ));
        }
        if kernel.len() != grid.len() || kernel.iter().any(|r| r.len() != grid.len()) {
            return Err(ChainError::Malformed(
                "kernel must be square on the grid".into(),
            ));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(ChainError::Malformed("step must be positive".into()));
        }
        if initial_state >= grid.len() {
            return Err(ChainError::Malformed("initial_state out of range".into()));
        }
        Ok(Self {
            grid,
            kernel,
            step,
            jump_sign,
            boundary,
            initial_state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.grid.len()
    }

    /// Index of the grid state closest to `x` (ties go up).
    pub fn nearest_state(&self, x: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &g) in self.grid.iter().enumerate() {
            let d = (g - x).abs();
            if d < dist || (d == dist && i > best) {
                best = i;
                dist = d;
            }
        }
        best
    }

    /// A state is absorbing when its row is a point mass on itself.
    pub fn is_absorbing(&self, state: usize) -> bool {
        self.kernel[state].iter().enumerate().all(|(j, &p)| {
            if j == state {
                (p - 1.0).abs() <= ROW_SUM_TOL
            } else {
                p.abs() <= ROW_SUM_TOL
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ChainError> {
        let chain: TypeChain =
            serde_json::from_str(s).map_err(|e| ChainError::Malformed(e.to_string()))?;
        TypeChain::from_parts(
            chain.grid,
            chain.kernel,
            chain.step,
            chain.jump_sign,
            chain.boundary,
            chain.initial_state,
        )
    }
}

/// Bad-news Poisson learning about a binary type.
///
/// The worker is good with belief `p`.  While he works, conclusive bad news
/// arrives at rate `lam` if he is bad, so per step of length `delta` the
/// posterior jumps to the absorbing bottom state (belief 0) with the exact
/// Bayes hazard `(1-p)·(1-e^{-lam·delta})`; absent news it climbs to
/// `p / (p + (1-p)·e^{-lam·delta})`.
///
/// The interior grid is the no-news orbit of `p0`, so the up-move lands
/// exactly on the next grid state and the belief is a martingale everywhere
/// except at the truncated top.
pub fn build_bad_news_belief(
    p0: f64,
    lam: f64,
    grid_points: usize,
    delta: f64,
) -> Result<TypeChain, ChainError> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(ChainError::ParameterDomain(format!(
            "p0 must lie in (0,1), got {p0}"
        )));
    }
    if !(lam > 0.0) {
        return Err(ChainError::ParameterDomain(format!(
            "lam must be positive, got {lam}"
        )));
    }
    if grid_points < 3 {
        return Err(ChainError::ParameterDomain(format!(
            "grid_points must be at least 3, got {grid_points}"
        )));
    }
    if !(delta > 0.0) {
        return Err(ChainError::ParameterDomain(format!(
            "delta must be positive, got {delta}"
        )));
    }

    let survive = (-lam * delta).exp();
    let mut grid = Vec::with_capacity(grid_points);
    grid.push(0.0);
    let mut p = p0;
    for _ in 1..grid_points {
        grid.push(p);
        p = p / (p + (1.0 - p) * survive);
    }

    let n = grid.len();
    let mut kernel = vec![vec![0.0; n]; n];
    kernel[0][0] = 1.0;
    // Truncated top is absorbing, which keeps the belief an exact martingale
    // at every state.
    kernel[n - 1][n - 1] = 1.0;
    for i in 1..n - 1 {
        let hazard = (1.0 - grid[i]) * (1.0 - survive);
        kernel[i][0] = hazard;
        kernel[i][i + 1] = 1.0 - hazard;
    }

    TypeChain::from_parts(
        grid,
        kernel,
        delta,
        JumpSign::DownOnly,
        Boundary {
            lower: BoundaryKind::Absorbing,
            upper: BoundaryKind::Absorbing,
        },
        1,
    )
}

/// Belief diffusion for a Brownian signal, as a birth-death chain.
///
/// The posterior about a binary type follows `dp = snr·p(1-p)·dB̄`, a
/// martingale with local variance `snr²p²(1-p)²`.  On a uniform grid with
/// spacing `h` the chain moves one cell up or down with probability
/// `q = snr²p²(1-p)²·delta / (2h²)` each, matching the first two local
/// moments to order `delta`.  Endpoints are absorbing.
pub fn build_brownian_belief(
    p0: f64,
    snr: f64,
    grid_points: usize,
    delta: f64,
) -> Result<TypeChain, ChainError> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(ChainError::ParameterDomain(format!(
            "p0 must lie in (0,1), got {p0}"
        )));
    }
    if !(snr > 0.0) {
        return Err(ChainError::ParameterDomain(format!(
            "snr must be positive, got {snr}"
        )));
    }
    if grid_points < 3 {
        return Err(ChainError::ParameterDomain(format!(
            "grid_points must be at least 3, got {grid_points}"
        )));
    }
    if !(delta > 0.0) {
        return Err(ChainError::ParameterDomain(format!(
            "delta must be positive, got {delta}"
        )));
    }

    let n = grid_points;
    let h = 1.0 / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();

    let mut kernel = vec![vec![0.0; n]; n];
    kernel[0][0] = 1.0;
    kernel[n - 1][n - 1] = 1.0;
    for i in 1..n - 1 {
        let p = grid[i];
        let var = snr * snr * p * p * (1.0 - p) * (1.0 - p);
        let q = var * delta / (2.0 * h * h);
        let stay = 1.0 - 2.0 * q;
        if stay < 0.0 {
            return Err(ChainError::Discretization {
                state: i,
                detail: format!(
                    "move probability {q:.6} exceeds 1/2; refine delta or coarsen the grid"
                ),
            });
        }
        kernel[i][i - 1] = q;
        kernel[i][i] = stay;
        kernel[i][i + 1] = q;
    }

    let initial = nearest_index(&grid, p0);
    TypeChain::from_parts(
        grid,
        kernel,
        delta,
        JumpSign::None,
        Boundary {
            lower: BoundaryKind::Absorbing,
            upper: BoundaryKind::Absorbing,
        },
        initial,
    )
}

/// Productivity ladder with dead ends.
///
/// Working raises the type at speed `mu` (one grid cell per `cell/mu` of
/// effort time); independently a dead end arrives with probability
/// `lam·delta` per step and resets the type to 0, from which the worker
/// climbs again.  When `mu·delta < cell` the up-move is Bernoulli with the
/// matching mean drift; `mu·delta = cell` gives the deterministic staircase.
pub fn build_ladder_deadend(
    mu: f64,
    lam: f64,
    x_max: f64,
    grid_points: usize,
    delta: f64,
) -> Result<TypeChain, ChainError> {
    if !(mu > 0.0) {
        return Err(ChainError::ParameterDomain(format!(
            "mu must be positive, got {mu}"
        )));
    }
    if lam < 0.0 {
        return Err(ChainError::ParameterDomain(format!(
            "lam must be nonnegative, got {lam}"
        )));
    }
    if !(x_max > 0.0) {
        return Err(ChainError::ParameterDomain(format!(
            "x_max must be positive, got {x_max}"
        )));
    }
    if grid_points < 2 {
        return Err(ChainError::ParameterDomain(format!(
            "grid_points must be at least 2, got {grid_points}"
        )));
    }
    if !(delta > 0.0) {
        return Err(ChainError::ParameterDomain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let p_dead = lam * delta;
    if p_dead >= 1.0 {
        return Err(ChainError::StepSize(format!(
            "lam·delta = {p_dead} must be below 1; shrink the step"
        )));
    }
    let n = grid_points;
    let cell = x_max / (n - 1) as f64;
    let p_up = mu * delta / cell;
    if p_up > 1.0 + 1e-12 {
        return Err(ChainError::StepSize(format!(
            "mu·delta = {} exceeds one grid cell {cell}; shrink the step or coarsen the grid",
            mu * delta
        )));
    }
    let p_up = p_up.min(1.0);

    let grid: Vec<f64> = (0..n).map(|i| i as f64 * cell).collect();
    let mut kernel = vec![vec![0.0; n]; n];
    for i in 0..n {
        if i + 1 < n {
            kernel[i][i + 1] = (1.0 - p_dead) * p_up;
            kernel[i][i] += (1.0 - p_dead) * (1.0 - p_up);
        } else {
            kernel[i][i] += 1.0 - p_dead;
        }
        kernel[i][0] += p_dead;
    }

    let upper = if lam == 0.0 {
        BoundaryKind::Absorbing
    } else {
        BoundaryKind::Reflecting
    };
    TypeChain::from_parts(
        grid,
        kernel,
        delta,
        JumpSign::DownOnly,
        Boundary {
            lower: BoundaryKind::Reflecting,
            upper,
        },
        0,
    )
}

fn nearest_index(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let d = (g - x).abs();
        if d < dist || (d == dist && i > best) {
            best = i;
            dist = d;
        }
    }
    best
}

/// Sample the successor of `state` from the kernel row.
///
/// Inverse-CDF with a single uniform draw, so two chains driven by the same
/// uniforms stay ordered whenever the kernel is stochastically monotone.
pub fn step<R: rand::Rng + ?Sized>(chain: &TypeChain, state: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    successor_from_uniform(&chain.kernel[state], u)
}

/// Deterministic inverse-CDF lookup shared by [`step`] and [`ChainSampler`].
pub fn successor_from_uniform(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = j;
            if u < acc {
                return j;
            }
        }
    }
    // Residual rounding mass goes to the last reachable state.
    last_positive
}

/// Precomputed row CDFs for simulation hot loops.
///
/// Draw-for-draw identical to [`step`] on the same rng stream.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    cdf: Vec<Vec<(usize, f64)>>,
}

impl ChainSampler {
    pub fn new(chain: &TypeChain) -> Self {
        let cdf = chain
            .kernel
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                let mut entries = Vec::new();
                for (j, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        acc += p;
                        entries.push((j, acc));
                    }
                }
                entries
            })
            .collect();
        Self { cdf }
    }

    pub fn step<R: rand::Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.cdf[state];
        for &(j, acc) in row {
            if u < acc {
                return j;
            }
        }
        row.last().expect("nonempty row").0
    }
}

/// One violated admissibility condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Row does not sum to 1 within tolerance, or has entries outside `[0,1]`.
    RowSum { state: usize, sum: f64 },
    /// Successor law from the higher state fails to dominate the lower one.
    NotMonotone {
        lower: usize,
        higher: usize,
        at: usize,
    },
    /// A multi-state move in the direction the jump sign forbids.
    JumpSign { from: usize, to: usize },
    /// A non-absorbing interior state that can never move up.
    UpwardReachability { state: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RowSum { state, sum } => {
                write!(f, "kernel row {state} sums to {sum} (must be 1 within {ROW_SUM_TOL})")
            }
            Violation::NotMonotone { lower, higher, at } => write!(
                f,
                "rows {lower} and {higher} cross: CDF from state {higher} exceeds CDF from state {lower} at grid index {at}"
            ),
            Violation::JumpSign { from, to } => {
                write!(f, "transition {from} -> {to} violates the declared jump sign")
            }
            Violation::UpwardReachability { state } => {
                write!(f, "state {state} is not absorbing but can never move up")
            }
        }
    }
}

/// Admissibility report: empty means the chain is admissible.
pub fn validate(chain: &TypeChain) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = chain.n_states();

    for (i, row) in chain.kernel.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| p < 0.0 || p > 1.0 + ROW_SUM_TOL)
        {
            out.push(Violation::RowSum { state: i, sum });
        }
    }

    // First-order dominance, checked pairwise on row CDFs.
    for lo in 0..n {
        'pair: for hi in lo + 1..n {
            let mut cdf_lo = 0.0;
            let mut cdf_hi = 0.0;
            for k in 0..n {
                cdf_lo += chain.kernel[lo][k];
                cdf_hi += chain.kernel[hi][k];
                if cdf_hi > cdf_lo + 1e-12 {
                    out.push(Violation::NotMonotone {
                        lower: lo,
                        higher: hi,
                        at: k,
                    });
                    continue 'pair;
                }
            }
        }
    }

    for (i, row) in chain.kernel.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let bad = match chain.jump_sign {
                JumpSign::None => false,
                JumpSign::UpOnly => j + 1 < i,
                JumpSign::DownOnly => j > i + 1,
            };
            if bad {
                out.push(Violation::JumpSign { from: i, to: j });
            }
        }
    }

    // Only the grid endpoints may absorb (they stand in for the state
    // space's boundary); every interior state must be able to move up.
    for i in 0..n.saturating_sub(1) {
        if i == 0 && chain.is_absorbing(i) {
            continue;
        }
        let up_mass: f64 = chain.kernel[i][i + 1..].iter().sum();
        if up_mass <= 0.0 {
            out.push(Violation::UpwardReachability { state: i });
        }
    }

    out
}
