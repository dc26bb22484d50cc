//! Discounted Markov-reward machinery shared by the index, worker, engine,
//! and oracle modules.
//!
//! Conventions, fixed once for the whole crate:
//! - one step lasts `Δ` of effort time and is discounted by `β = e^{-rΔ}`;
//! - a flow `f` held for one step is worth `a·f` with `a = (1-β)/r`, the
//!   exact value of `∫_0^Δ e^{-rt} f dt`;
//! - index values are reported in lump units: `Γ` is the retirement payoff
//!   at which stopping and continuing are worth the same, so a constant flow
//!   `f` has index `f/r`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error("linear system is singular")]
    Singular,
    #[error("value iteration did not converge: residual {residual} after {iterations} sweeps")]
    NoConvergence { residual: f64, iterations: usize },
}

/// Discount bookkeeping for a fixed step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounting {
    pub r: f64,
    pub delta: f64,
    /// `e^{-rΔ}`.
    pub beta: f64,
    /// `(1-β)/r`, the discounted weight of one step's flow.
    pub step_weight: f64,
}

impl Discounting {
    pub fn new(r: f64, delta: f64) -> Self {
        assert!(
            r > 0.0 && delta > 0.0,
            "discount rate and step must be positive"
        );
        let beta = (-r * delta).exp();
        Self {
            r,
            delta,
            beta,
            step_weight: (1.0 - beta) / r,
        }
    }
}

/// Sparse row-major transition structure: `rows[i]` lists `(successor, prob)`.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

/// Solve `v_i = inflow_i + β Σ_j p_ij v_j` with some states pinned.
///
/// `fixed[i] = Some(c)` removes state `i` from the system and substitutes the
/// constant. The matrix is strictly diagonally dominant for `β < 1`, so the
/// LU solve is stable without special handling.
pub fn solve_linear_value(
    rows: &SparseRows,
    beta: f64,
    inflow: &[f64],
    fixed: &[Option<f64>],
) -> Result<Vec<f64>, SolveError> {
    let n = rows.len();
    debug_assert_eq!(inflow.len(), n);
    debug_assert_eq!(fixed.len(), n);

    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut out: Vec<f64> = (0..n).map(|i| fixed[i].unwrap_or(0.0)).collect();
    if free.is_empty() {
        return Ok(out);
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }

    let nf = free.len();
    let mut a = DMatrix::<f64>::identity(nf, nf);
    let mut b = DVector::<f64>::zeros(nf);
    for (k, &i) in free.iter().enumerate() {
        b[k] = inflow[i];
        for &(j, p) in &rows[i] {
            match fixed[j] {
                Some(c) => b[k] += beta * p * c,
                None => a[(k, pos[j])] -= beta * p,
            }
        }
    }

    let solved = a.lu().solve(&b).ok_or(SolveError::Singular)?;
    for (k, &i) in free.iter().enumerate() {
        out[i] = solved[k];
    }
    Ok(out)
}

/// Same fixed-point as [`solve_linear_value`], by plain value iteration.
///
/// Kept as an independent route for oracle self-checks.
pub fn value_iterate(
    rows: &SparseRows,
    beta: f64,
    inflow: &[f64],
    fixed: &[Option<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, SolveError> {
    let n = rows.len();
    let mut v: Vec<f64> = (0..n).map(|i| fixed[i].unwrap_or(0.0)).collect();
    let mut next = v.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        residual = 0.0;
        for i in 0..n {
            if fixed[i].is_some() {
                continue;
            }
            let mut acc = inflow[i];
            for &(j, p) in &rows[i] {
                acc += beta * p * v[j];
            }
            residual = residual.max((acc - v[i]).abs());
            next[i] = acc;
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            return Ok(v);
        }
    }
    Err(SolveError::NoConvergence {
        residual,
        iterations: max_iter,
    })
}

/// Optimal stopping against a retirement payoff `W`:
/// `v_i = max(W, inflow_i + β Σ p_ij v_j)`.
///
/// Returned alongside the values is the stop set (ties stop, matching the
/// discrete convention that the outside option is taken at exact
/// indifference). Policy iteration with exact policy evaluation, warm-started
/// from `hint` when given.
pub fn retirement_stop(
    rows: &SparseRows,
    beta: f64,
    inflow: &[f64],
    w: f64,
    hint: Option<&[bool]>,
) -> Result<(Vec<f64>, Vec<bool>), SolveError> {
    let n = rows.len();
    let mut stop = match hint {
        Some(h) if h.len() == n => h.to_vec(),
        _ => vec![false; n],
    };
    // Bisection on W lands exactly at indifference points, so policy flips
    // must require a strict margin or float-level ties cycle forever. A
    // final weak-inequality pass classifies the tied states as stopped.
    const TIE: f64 = 1e-12;
    let mut last_residual = f64::INFINITY;
    for _sweep in 0..200 {
        let fixed: Vec<Option<f64>> = stop
            .iter()
            .map(|&s| if s { Some(w) } else { None })
            .collect();
        let values = solve_linear_value(rows, beta, inflow, &fixed)?;
        let mut changed = false;
        last_residual = 0.0;
        for i in 0..n {
            let mut cont = inflow[i];
            for &(j, p) in &rows[i] {
                cont += beta * p * values[j];
            }
            if stop[i] && cont > w + TIE {
                stop[i] = false;
                changed = true;
                last_residual = last_residual.max(cont - w);
            } else if !stop[i] && w > cont + TIE {
                stop[i] = true;
                changed = true;
                last_residual = last_residual.max(w - cont);
            }
        }
        if !changed {
            let mut out_stop = vec![false; n];
            let mut out_values = values.clone();
            for i in 0..n {
                let mut cont = inflow[i];
                for &(j, p) in &rows[i] {
                    cont += beta * p * values[j];
                }
                out_stop[i] = w >= cont - TIE;
                if out_stop[i] {
                    out_values[i] = w;
                }
            }
            return Ok((out_values, out_stop));
        }
    }
    Err(SolveError::NoConvergence {
        residual: last_residual,
        iterations: 200,
    })
}

/// Retirement value of one state (the full vector is computed anyway).
pub fn retirement_values(
    rows: &SparseRows,
    beta: f64,
    inflow: &[f64],
    w: f64,
) -> Result<Vec<f64>, SolveError> {
    retirement_stop(rows, beta, inflow, w, None).map(|(v, _)| v)
}

/// Bisection cap for index calibration.
pub const BISECTION_ITERATIONS: u32 = 60;
/// Bracket width at which a group of states is considered resolved.
pub const BISECTION_TOL: f64 = 1e-11;

/// Equitable-surrender-value indices for every state of a reward chain.
///
/// `Γ(i) = inf { W : retirement value at i equals W }`, found by bisection on
/// `W` over `[0, bracket_hi]`. States whose brackets coincide are refined
/// together, so one retirement solve serves many states. The bisection target
/// is monotone — `V_W(i) - W` is nonincreasing in `W` — and this is asserted
/// across every evaluation a state participates in.
pub fn calibrate_indices(
    rows: &SparseRows,
    disc: &Discounting,
    flow: &[f64],
    bracket_hi: f64,
    pinned: &[Option<f64>],
) -> Result<Vec<f64>, SolveError> {
    let n = rows.len();
    let inflow: Vec<f64> = flow.iter().map(|f| disc.step_weight * f).collect();
    let mut lo = vec![0.0_f64; n];
    let mut hi = vec![bracket_hi.max(1e-12); n];
    let mut last_eval: Vec<Option<(f64, f64)>> = vec![None; n];

    let mut active: Vec<usize> = Vec::new();
    for i in 0..n {
        if let Some(v) = pinned[i] {
            lo[i] = v;
            hi[i] = v;
        } else {
            active.push(i);
        }
    }

    let mut groups: Vec<Vec<usize>> = if active.is_empty() {
        vec![]
    } else {
        vec![active]
    };
    let mut hint: Option<Vec<bool>> = None;
    for _ in 0..BISECTION_ITERATIONS {
        if groups.is_empty() {
            break;
        }
        let mut next: Vec<Vec<usize>> = Vec::new();
        for group in groups {
            let head = group[0];
            let w = 0.5 * (lo[head] + hi[head]);
            let (values, stop) = retirement_stop(rows, disc.beta, &inflow, w, hint.as_deref())?;
            hint = Some(stop.clone());
            let mut stopped = Vec::new();
            let mut continued = Vec::new();
            for &i in &group {
                let gap = values[i] - w;
                if let Some((w_prev, gap_prev)) = last_eval[i] {
                    if w > w_prev {
                        assert!(
                            gap <= gap_prev + 1e-9,
                            "retirement gap must be nonincreasing in W (state {i})"
                        );
                    } else if w < w_prev {
                        assert!(
                            gap >= gap_prev - 1e-9,
                            "retirement gap monotonicity (state {i})"
                        );
                    }
                }
                last_eval[i] = Some((w, gap));
                if stop[i] {
                    hi[i] = w;
                    stopped.push(i);
                } else {
                    lo[i] = w;
                    continued.push(i);
                }
            }
            for sub in [stopped, continued] {
                if !sub.is_empty() && hi[sub[0]] - lo[sub[0]] > BISECTION_TOL {
                    next.push(sub);
                }
            }
        }
        groups = next;
    }

    Ok((0..n).map(|i| 0.5 * (lo[i] + hi[i])).collect())
}
