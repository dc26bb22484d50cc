//! Classical Gittins indices, strategic indices on the running-minimum
//! augmented chain, retirement values, lower envelopes, and the quit
//! boundary.
//!
//! Both indices are equitable surrender values: the smallest retirement
//! payoff `W` at which stopping immediately is weakly optimal. The classical
//! index prices the raw reward stream `π(X)`; the strategic index prices the
//! stream that freezes at the worker's promotion time — `π(X)` before the
//! promotion region is hit, the constant expected rate `π̄(X_τ)` after — so
//! it never exceeds the classical index and approaches it as effort costs
//! vanish.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::solve::{
    self, Discounting, SolveError, SparseRows, BISECTION_ITERATIONS, BISECTION_TOL,
};
use crate::typeproc::TypeChain;
use crate::worker::{self, Threshold, WorkerError, WorkerSpec};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IndexError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl From<WorkerError> for IndexError {
    fn from(e: WorkerError) -> Self {
        match e {
            WorkerError::Solve(s) => IndexError::Solve(s),
            other => IndexError::InvalidSpec(other.to_string()),
        }
    }
}

/// The `(type, running minimum)` chain induced by a base chain.
///
/// States are all pairs `(x, m)` with `m ≤ x`; a base transition `x → x'`
/// becomes `(x, m) → (x', min(m, x'))`, so the minimum never increases.
/// Pairs with `m > x` are unreachable and not allocated.
#[derive(Debug, Clone)]
pub struct AugmentedChain {
    n_base: usize,
    pairs: Vec<(usize, usize)>,
    ids: Vec<Vec<usize>>,
    rows: SparseRows,
}

impl AugmentedChain {
    pub fn build(chain: &TypeChain) -> Self {
        let n = chain.n_states();
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        let mut ids = vec![Vec::new(); n];
        for m in 0..n {
            for x in m..n {
                ids[m].push(pairs.len());
                pairs.push((x, m));
            }
        }
        let mut rows: SparseRows = Vec::with_capacity(pairs.len());
        for &(x, m) in &pairs {
            let row = chain.kernel[x]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(x2, &p)| {
                    let m2 = m.min(x2);
                    (ids[m2][x2 - m2], p)
                })
                .collect();
            rows.push(row);
        }
        Self {
            n_base: n,
            pairs,
            ids,
            rows,
        }
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn id(&self, x: usize, m: usize) -> usize {
        debug_assert!(m <= x && x < self.n_base);
        self.ids[m][x - m]
    }

    pub fn pair(&self, id: usize) -> (usize, usize) {
        self.pairs[id]
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    /// Ids reachable from `start` following the raw augmented kernel.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(id) = stack.pop() {
            for &(next, _) in &self.rows[id] {
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen
    }
}

/// A finite reward chain for the retirement problem.
pub struct FlowChain {
    pub rows: SparseRows,
    pub flow: Vec<f64>,
}

/// Value of optimally stopping to collect `W` against the discounted flow
/// stream of `fc`, starting from `state`.
pub fn retirement_value(
    fc: &FlowChain,
    disc: &Discounting,
    state: usize,
    w: f64,
) -> Result<f64, IndexError> {
    if w < 0.0 {
        return Err(IndexError::InvalidSpec(
            "retirement payoff must be nonnegative".into(),
        ));
    }
    let inflow: Vec<f64> = fc.flow.iter().map(|f| disc.step_weight * f).collect();
    let values = solve::retirement_values(&fc.rows, disc.beta, &inflow, w)?;
    Ok(values[state])
}

fn bisection_bracket(spec: &WorkerSpec) -> f64 {
    let max_flow = spec.pi.iter().cloned().fold(0.0_f64, f64::max);
    max_flow / spec.discount + spec.prize
}

/// Classical Gittins index of every base state, in lump units (`rΓ` is the
/// flow equivalent; a constant flow `ρ` has index `ρ/r`).
pub fn gittins_index(spec: &WorkerSpec) -> Result<Vec<f64>, IndexError> {
    spec.validate()?;
    let disc = spec.discounting();
    let rows = spec.base_rows();
    let pins = vec![None; spec.chain.n_states()];
    Ok(solve::calibrate_indices(
        &rows,
        &disc,
        &spec.pi,
        bisection_bracket(spec),
        &pins,
    )?)
}

/// Running-minimum states the chain can ever visit from its initial state
/// (policy-independent: any state at or above the current minimum may be
/// occupied when a down-move lands below it). Ascending.
pub fn min_closure(chain: &TypeChain) -> Vec<usize> {
    let n = chain.n_states();
    let mut inset = vec![false; n];
    let mut stack = vec![chain.initial_state];
    inset[chain.initial_state] = true;
    while let Some(m) = stack.pop() {
        for x in m..n {
            for x2 in 0..m {
                if chain.kernel[x][x2] > 0.0 && !inset[x2] {
                    inset[x2] = true;
                    stack.push(x2);
                }
            }
        }
    }
    (0..n).filter(|&m| inset[m]).collect()
}

/// Strategic index values on the augmented chain.
///
/// Coverage may be partial: reachable-mode builders only calibrate the
/// states a contest from the chain's initial state can visit, and uncovered
/// entries hold NaN.
#[derive(Debug, Clone)]
pub struct StrategicIndex {
    pub aug: AugmentedChain,
    /// Placeholder `Never` at uncovered minima; check `covered_minima`.
    pub thresholds: Vec<Threshold>,
    /// Index per augmented-state id (NaN where uncovered).
    pub values: Vec<f64>,
    /// Promotion flow rate `π̄(x)` per base state.
    pub perpetuity: Vec<f64>,
    pub covered_minima: Vec<bool>,
}

impl StrategicIndex {
    pub fn at(&self, x: usize, m: usize) -> f64 {
        let v = self.values[self.aug.id(x, m)];
        debug_assert!(!v.is_nan(), "strategic index not covered at ({x},{m})");
        v
    }

    /// `Γ^s(m, m)` — the lower envelope of the index along any path whose
    /// running minimum is `m`, since the index only falls at new minima.
    pub fn diagonal(&self, m: usize) -> f64 {
        self.at(m, m)
    }

    pub fn is_promoted_state(&self, x: usize, m: usize) -> bool {
        debug_assert!(self.covered_minima[m]);
        self.thresholds[m].reached_by(x)
    }
}

/// Gittins index of the promotion-frozen reward stream at every `(x, m)`.
///
/// Promotion-region states are absorbing with constant flow `π̄(x)`, so their
/// index is pinned to the exact perpetuity `π̄(x)/r`; all other states are
/// calibrated by bisection on the augmented chain.
pub fn strategic_index(spec: &WorkerSpec) -> Result<StrategicIndex, IndexError> {
    spec.validate()?;
    let thresholds = worker::promotion_thresholds(spec)?;
    let n = spec.chain.n_states();
    build_strategic(spec, thresholds, vec![true; n], None)
}

/// Same calibration restricted to the contest-reachable part of the
/// augmented chain: thresholds at the minima in [`min_closure`], index
/// values on the states those excursions can visit before absorbing.
pub fn strategic_index_reachable(spec: &WorkerSpec) -> Result<StrategicIndex, IndexError> {
    spec.validate()?;
    let n = spec.chain.n_states();
    let minima = min_closure(&spec.chain);
    let pairs = worker::promotion_thresholds_at(spec, &minima)?;
    let mut thresholds = vec![Threshold::Never; n];
    let mut covered = vec![false; n];
    for (m, t) in pairs {
        thresholds[m] = t;
        covered[m] = true;
    }
    build_strategic(spec, thresholds, covered, Some(minima))
}

fn build_strategic(
    spec: &WorkerSpec,
    thresholds: Vec<Threshold>,
    covered_minima: Vec<bool>,
    restrict_to_minima: Option<Vec<usize>>,
) -> Result<StrategicIndex, IndexError> {
    let disc = spec.discounting();
    let perpetuity = worker::perpetuity_values(spec)?;
    let aug = AugmentedChain::build(&spec.chain);
    let n_aug = aug.len();

    // States to calibrate: everything (full mode) or the closure of the
    // covered diagonals under promotion-absorbed transitions.
    let in_set: Vec<bool> = match &restrict_to_minima {
        None => vec![true; n_aug],
        Some(minima) => {
            let mut inset = vec![false; n_aug];
            let mut stack: Vec<usize> = minima.iter().map(|&m| aug.id(m, m)).collect();
            for &id in &stack {
                inset[id] = true;
            }
            while let Some(id) = stack.pop() {
                let (x, m) = aug.pair(id);
                if thresholds[m].reached_by(x) {
                    continue;
                }
                for &(next, _) in &aug.rows()[id] {
                    if !inset[next] {
                        inset[next] = true;
                        stack.push(next);
                    }
                }
            }
            inset
        }
    };

    let members: Vec<usize> = (0..n_aug).filter(|&id| in_set[id]).collect();
    let mut local = vec![usize::MAX; n_aug];
    for (k, &id) in members.iter().enumerate() {
        local[id] = k;
    }
    let s = members.len();
    let mut rows: SparseRows = Vec::with_capacity(s);
    let mut flow = vec![0.0; s];
    let mut pins = vec![None; s];
    for (k, &id) in members.iter().enumerate() {
        let (x, m) = aug.pair(id);
        if thresholds[m].reached_by(x) {
            rows.push(vec![(k, 1.0)]);
            flow[k] = perpetuity[x];
            pins[k] = Some(perpetuity[x] / spec.discount);
        } else {
            rows.push(aug.rows()[id].iter().map(|&(j, p)| (local[j], p)).collect());
            flow[k] = spec.pi[x];
        }
    }

    let local_values =
        solve::calibrate_indices(&rows, &disc, &flow, bisection_bracket(spec), &pins)?;
    let mut values = vec![f64::NAN; n_aug];
    for (k, &id) in members.iter().enumerate() {
        values[id] = local_values[k];
    }
    Ok(StrategicIndex {
        aug,
        thresholds,
        values,
        perpetuity,
        covered_minima,
    })
}

/// Where the principal stops experimenting with a worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuitBoundary {
    /// The strategic index exceeds `W` even at the bottom of the grid.
    Never,
    /// Largest grid state whose diagonal strategic index is at most `W`.
    At(usize),
}

/// Largest `p` with `Γ^s(p, p) ≤ W`.
pub fn quit_boundary(spec: &WorkerSpec, w: f64) -> Result<QuitBoundary, IndexError> {
    let idx = strategic_index(spec)?;
    let diag: Vec<f64> = (0..spec.chain.n_states())
        .map(|m| idx.diagonal(m))
        .collect();
    Ok(quit_boundary_from_diagonal(&diag, w))
}

/// Same rule on a precomputed diagonal.
pub fn quit_boundary_from_diagonal(diag: &[f64], w: f64) -> QuitBoundary {
    for p in (0..diag.len()).rev() {
        if diag[p] <= w {
            return QuitBoundary::At(p);
        }
    }
    QuitBoundary::Never
}

/// Running minimum of an index path.
pub fn lower_envelope(path: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut min = f64::INFINITY;
    for &v in path {
        min = min.min(v);
        out.push(min);
    }
    out
}

/// Canonical hash of a worker spec, used to key cached index tables.
pub fn spec_hash(spec: &WorkerSpec) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializable index table: classical per-state values, strategic values
/// per `(x, m)`, promotion thresholds, and calibration metadata.
///
/// Tables built by [`IndexTable::build`] cover everything; the engine's
/// internal tables (built by [`IndexTable::build_reachable`]) cover only the
/// minima and excursion states a contest from the initial state can visit,
/// which keeps large-grid simulations tractable. Only full tables should be
/// persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexTable {
    /// Classical Gittins values (empty in reachable-coverage tables).
    pub gittins: Vec<f64>,
    /// `strategic[m]` holds values for `x = m, m+1, …, K` (NaN where not
    /// covered).
    pub strategic: Vec<Vec<f64>>,
    /// `None` encodes an empty promotion region for that minimum.
    pub thresholds: Vec<Option<usize>>,
    /// Which minima carry meaningful thresholds and index values.
    pub covered_minima: Vec<bool>,
    /// Promotion flow rate `π̄(x)` per base state.
    pub perpetuity: Vec<f64>,
    pub meta: TableMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableMeta {
    pub spec_hash: String,
    pub bisection_tol: f64,
    pub bracket: [f64; 2],
    pub bisection_cap: u32,
    pub version: String,
}

impl IndexTable {
    pub fn build(spec: &WorkerSpec) -> Result<Self, IndexError> {
        let gittins = gittins_index(spec)?;
        let s = strategic_index(spec)?;
        Self::assemble(spec, gittins, s)
    }

    /// Contest-reachable coverage; skips the classical table entirely.
    pub fn build_reachable(spec: &WorkerSpec) -> Result<Self, IndexError> {
        let s = strategic_index_reachable(spec)?;
        Self::assemble(spec, Vec::new(), s)
    }

    fn assemble(
        spec: &WorkerSpec,
        gittins: Vec<f64>,
        s: StrategicIndex,
    ) -> Result<Self, IndexError> {
        let n = spec.chain.n_states();
        let strategic: Vec<Vec<f64>> = (0..n)
            .map(|m| (m..n).map(|x| s.values[s.aug.id(x, m)]).collect())
            .collect();
        let thresholds = s
            .thresholds
            .iter()
            .map(|t| match t {
                Threshold::Never => None,
                Threshold::At(v) => Some(*v),
            })
            .collect();
        Ok(Self {
            gittins,
            strategic,
            thresholds,
            covered_minima: s.covered_minima,
            perpetuity: s.perpetuity,
            meta: TableMeta {
                spec_hash: spec_hash(spec),
                bisection_tol: BISECTION_TOL,
                bracket: [0.0, bisection_bracket(spec)],
                bisection_cap: BISECTION_ITERATIONS,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }

    pub fn n_states(&self) -> usize {
        self.strategic.len()
    }

    pub fn is_fully_covered(&self) -> bool {
        self.covered_minima.iter().all(|&b| b)
    }

    pub fn strategic_at(&self, x: usize, m: usize) -> f64 {
        let v = self.strategic[m][x - m];
        debug_assert!(!v.is_nan(), "strategic index not covered at ({x},{m})");
        v
    }

    /// Lower-envelope value for a path whose running minimum is `m`.
    pub fn diagonal(&self, m: usize) -> f64 {
        self.strategic_at(m, m)
    }

    pub fn threshold(&self, m: usize) -> Threshold {
        debug_assert!(
            self.covered_minima[m],
            "threshold not covered at minimum {m}"
        );
        match self.thresholds[m] {
            None => Threshold::Never,
            Some(t) => Threshold::At(t),
        }
    }

    pub fn is_promoted_state(&self, x: usize, m: usize) -> bool {
        self.threshold(m).reached_by(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typeproc::{build_bad_news_belief, build_ladder_deadend};

    fn bad_news_spec(cost: f64) -> WorkerSpec {
        let chain = build_bad_news_belief(0.5, 1.0, 7, 0.1).unwrap();
        let n = chain.n_states();
        WorkerSpec {
            pi: chain.grid.clone(),
            cost: vec![cost; n],
            prize: 0.6,
            discount: 0.2,
            chain,
        }
    }

    #[test]
    fn augmented_chain_shape_and_minimum_monotonicity() {
        let chain = build_bad_news_belief(0.5, 1.0, 6, 0.1).unwrap();
        let aug = AugmentedChain::build(&chain);
        let n = chain.n_states();
        assert_eq!(aug.len(), n * (n + 1) / 2);
        for id in 0..aug.len() {
            let (_, m) = aug.pair(id);
            for &(next, _) in &aug.rows()[id] {
                let (_, m2) = aug.pair(next);
                assert!(m2 <= m, "running minimum increased along a transition");
            }
        }
        // From a non-top start the reachable count respects K(K+1)/2 + K.
        let k = n - 1;
        let start = aug.id(chain.initial_state, chain.initial_state);
        let reachable = aug.reachable_from(start).iter().filter(|&&b| b).count();
        assert!(reachable <= k * (k + 1) / 2 + k);
    }

    #[test]
    fn retirement_value_trivial_cases() {
        let spec = bad_news_spec(0.0);
        let disc = spec.discounting();
        let fc = FlowChain {
            rows: spec.base_rows(),
            flow: spec.pi.clone(),
        };
        // W = 0 with nonnegative flows: never retire, value is the perpetual
        // flow value.
        let v0 = retirement_value(&fc, &disc, spec.chain.initial_state, 0.0).unwrap();
        let perp = worker::perpetuity_lumps(&spec).unwrap();
        assert!((v0 - perp[spec.chain.initial_state]).abs() < 1e-10);
        // W above every flow perpetuity: retire immediately.
        let w = 100.0;
        let v = retirement_value(&fc, &disc, spec.chain.initial_state, w).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn retirement_value_matches_stopping_set_enumeration() {
        let spec = bad_news_spec(0.0);
        let disc = spec.discounting();
        let rows = spec.base_rows();
        let n = 3.min(spec.chain.n_states());
        // Restrict to a 3-state sub-chain by capping transitions upward.
        let mut small_rows: SparseRows = vec![Vec::new(); 3];
        for i in 0..3 {
            for &(j, p) in &rows[i] {
                small_rows[i].push((j.min(2), p));
            }
        }
        let flow = vec![0.1, 0.5, 1.2];
        let w = 4.0;
        let inflow: Vec<f64> = flow.iter().map(|f| disc.step_weight * f).collect();
        let mut best = vec![f64::NEG_INFINITY; n];
        for mask in 0..(1u32 << n) {
            let fixed: Vec<Option<f64>> = (0..n)
                .map(|i| if mask & (1 << i) != 0 { Some(w) } else { None })
                .collect();
            let v = solve::solve_linear_value(&small_rows, disc.beta, &inflow, &fixed).unwrap();
            for i in 0..n {
                best[i] = best[i].max(v[i]);
            }
        }
        let fc = FlowChain {
            rows: small_rows,
            flow,
        };
        for i in 0..n {
            let v = retirement_value(&fc, &disc, i, w).unwrap();
            assert!((v - best[i]).abs() < 1e-10, "state {i}: {v} vs {}", best[i]);
        }
    }

    #[test]
    fn gittins_constant_flow_and_absorbing_state() {
        let mut spec = bad_news_spec(0.0);
        spec.pi = vec![0.8; spec.chain.n_states()];
        let idx = gittins_index(&spec).unwrap();
        for &g in &idx {
            assert!((g - 0.8 / spec.discount).abs() < 1e-8);
        }

        // Absorbing bottom with flow ρ has index ρ/r regardless of the rest.
        let spec = bad_news_spec(0.0);
        let idx = gittins_index(&spec).unwrap();
        assert!((idx[0] - spec.pi[0] / spec.discount).abs() < 1e-8);
    }

    #[test]
    fn strategic_equals_gittins_when_cost_is_zero() {
        let spec = bad_news_spec(0.0);
        let s = strategic_index(&spec).unwrap();
        let g = gittins_index(&spec).unwrap();
        for x in 0..spec.chain.n_states() {
            assert!(
                (s.at(x, x) - g[x]).abs() < 1e-6,
                "Γ^s({x},{x}) = {} vs Γ^g = {}",
                s.at(x, x),
                g[x]
            );
        }
    }

    #[test]
    fn strategic_at_promoted_states_is_the_perpetuity() {
        let spec = bad_news_spec(0.05);
        let s = strategic_index(&spec).unwrap();
        let n = spec.chain.n_states();
        let mut saw_promoted = false;
        for m in 0..n {
            for x in m..n {
                if s.is_promoted_state(x, m) {
                    saw_promoted = true;
                    assert_eq!(s.at(x, m), s.perpetuity[x] / spec.discount);
                }
            }
        }
        assert!(
            saw_promoted,
            "fixture should have a nonempty promotion region"
        );
    }

    #[test]
    fn strategic_below_gittins_and_monotone_in_x() {
        let spec = bad_news_spec(0.05);
        let s = strategic_index(&spec).unwrap();
        let g = gittins_index(&spec).unwrap();
        let n = spec.chain.n_states();
        for m in 0..n {
            for x in m..n {
                assert!(
                    s.at(x, m) <= g[x] + 1e-8,
                    "strategic exceeds Gittins at ({x},{m})"
                );
                if x > m {
                    assert!(
                        s.at(x, m) >= s.at(x - 1, m) - 1e-9,
                        "not monotone in x at ({x},{m})"
                    );
                }
            }
        }
    }

    #[test]
    fn strategic_converges_to_gittins_from_below_as_cost_vanishes() {
        // As the effort cost vanishes the promotion region recedes to the
        // untruncated supremum and the frozen stream recovers the raw one.
        let g = gittins_index(&bad_news_spec(0.0)).unwrap();
        let x0 = 1;
        let mut prev = f64::NEG_INFINITY;
        for &c in &[0.2, 0.1, 0.05, 0.01, 1e-4, 1e-12] {
            let s = strategic_index(&bad_news_spec(c)).unwrap();
            let v = s.at(x0, x0);
            assert!(v >= prev - 1e-9, "not monotone in shrinking cost");
            assert!(v <= g[x0] + 1e-8);
            prev = v;
        }
        assert!(
            (g[x0] - prev).abs() < 1e-6,
            "limit {prev} vs Gittins {}",
            g[x0]
        );
    }

    #[test]
    fn quit_boundary_cases() {
        // Strictly positive flows and W = 0: never quit.
        let mut spec = bad_news_spec(0.05);
        spec.pi = spec.pi.iter().map(|p| p + 0.2).collect();
        assert_eq!(quit_boundary(&spec, 0.0).unwrap(), QuitBoundary::Never);

        // W at or above the top diagonal index: quit at the top.
        let s = strategic_index(&spec).unwrap();
        let top = spec.chain.n_states() - 1;
        let w = s.diagonal(top) + 1.0;
        assert_eq!(quit_boundary(&spec, w).unwrap(), QuitBoundary::At(top));
    }

    #[test]
    fn quit_boundary_never_taken_in_small_w_ladder() {
        let chain = build_ladder_deadend(1.0, 1.0, 1.0, 21, 0.05).unwrap();
        let n = chain.n_states();
        let spec = WorkerSpec {
            pi: chain.grid.iter().map(|x| x + 0.05).collect(),
            cost: vec![0.4; n],
            prize: 0.3,
            discount: 0.1,
            chain,
        };
        assert_eq!(quit_boundary(&spec, 0.0).unwrap(), QuitBoundary::Never);
    }

    #[test]
    fn lower_envelope_examples() {
        assert_eq!(
            lower_envelope(&[3.0, 5.0, 2.0, 4.0]),
            vec![3.0, 3.0, 2.0, 2.0]
        );
        let monotone = vec![5.0, 4.0, 3.0];
        assert_eq!(lower_envelope(&monotone), monotone);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let path: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
            let env = lower_envelope(&path);
            for k in 0..path.len() {
                let brute = path[..=k].iter().cloned().fold(f64::INFINITY, f64::min);
                assert_eq!(env[k], brute);
            }
        }
    }

    #[test]
    fn index_table_round_trip_and_lookup() {
        let spec = bad_news_spec(0.05);
        let table = IndexTable::build(&spec).unwrap();
        assert_eq!(table.meta.spec_hash, spec_hash(&spec));
        let json = serde_json::to_string(&table).unwrap();
        let back: IndexTable = serde_json::from_str(&json).unwrap();
        for m in 0..table.n_states() {
            for x in m..table.n_states() {
                assert_eq!(
                    table.strategic_at(x, m).to_bits(),
                    back.strategic_at(x, m).to_bits()
                );
            }
        }
    }
}
