//! The worked example and comparative statics as reproducible experiments:
//! reinforcing environments, promotion-gap amplification, fast track,
//! seniority, and convex compensation.
//!
//! Statistical assertions use 3-standard-error bands and are labeled as
//! such; every analytic target (trial times, survival probabilities, ruin
//! probabilities) is computed by a closed-form function in this module,
//! never hard-coded into a report.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{self, ContestTrace, EngineError, Outcome, PreparedContest};
use crate::typeproc::{ChainSampler, JumpSign, TypeChain};
use crate::worker::{Threshold, WorkerError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Worker(#[from] WorkerError),
}

/// One reported statistic, always carrying its provenance counts.
#[derive(Debug, Clone, Serialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
    pub count: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// A pass/fail flag for one claim checked by an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ClaimFlag {
    pub claim: String,
    pub status: ClaimStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub replications: usize,
    pub delta: f64,
}

/// Experiment output: statistics with standard errors plus claim flags.
#[derive(Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub statistics: Vec<Statistic>,
    pub flags: Vec<ClaimFlag>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Tidy CSV: one row per statistic.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# experiment-report v1\nexperiment,name,value,se,count\n");
        for s in &self.statistics {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.experiment,
                s.name,
                s.value,
                s.se.map_or(String::new(), |v| v.to_string()),
                s.count.map_or(String::new(), |v| v.to_string()),
            ));
        }
        out
    }

    pub fn all_pass(&self) -> bool {
        self.flags.iter().all(|f| f.status != ClaimStatus::Fail)
    }

    fn stat(&mut self, name: &str, value: f64, se: Option<f64>, count: Option<u64>) {
        self.statistics.push(Statistic {
            name: name.into(),
            value,
            se,
            count,
        });
    }

    fn flag(&mut self, claim: &str, pass: bool, detail: String) {
        self.flags.push(ClaimFlag {
            claim: claim.into(),
            status: if pass {
                ClaimStatus::Pass
            } else {
                ClaimStatus::Fail
            },
            detail,
        });
    }
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Trial length from the ladder display `λc∫₀^t e^{-(r+λ)s} ds = g`:
/// `t̄ = -ln(1 - g(r+λ)/(λc)) / (r+λ)`.
pub fn tbar(lam: f64, c: f64, g: f64, r: f64) -> Result<f64, LabError> {
    if !(lam > 0.0 && c > 0.0 && g > 0.0 && r > 0.0) {
        return Err(LabError::Domain(
            "all of lam, c, g, r must be positive".into(),
        ));
    }
    let arg = 1.0 - g * (r + lam) / (lam * c);
    if arg <= 0.0 {
        return Err(LabError::Domain(format!(
            "g(r+lam) = {} must be below lam·c = {}: the prize is too large to ever bind",
            g * (r + lam),
            lam * c
        )));
    }
    Ok(-arg.ln() / (r + lam))
}

/// Same trial length by numerical quadrature of the display's integral and
/// bisection on the horizon — an implementation-independent cross-check of
/// [`tbar`].
pub fn tbar_quadrature(lam: f64, c: f64, g: f64, r: f64) -> Result<f64, LabError> {
    if !(lam > 0.0 && c > 0.0 && g > 0.0 && r > 0.0) {
        return Err(LabError::Domain(
            "all of lam, c, g, r must be positive".into(),
        ));
    }
    let integral = |t: f64| simpson(|s| lam * c * (-(r + lam) * s).exp(), 0.0, t, 4096);
    let mut hi = 1.0;
    while integral(hi) < g {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(LabError::Domain(
                "the prize is too large to ever bind".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if integral(mid) < g {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Climb time at which the worker's corridor value at the floor is exactly
/// zero on the ladder: `ln(1 + g(r+λ)/c)/(r+λ)`. This is the threshold
/// distance the participation-based schedule actually uses; it differs from
/// [`tbar`], and the reinforcing report surfaces both.
pub fn breakeven_climb_time(lam: f64, c: f64, g: f64, r: f64) -> Result<f64, LabError> {
    if !(c > 0.0 && g > 0.0 && r > 0.0) || lam < 0.0 {
        return Err(LabError::Domain(
            "need c, g, r positive and lam nonnegative".into(),
        ));
    }
    Ok((1.0 + g * (r + lam) / c).ln() / (r + lam))
}

/// Survival of a Poisson clock with rate `lam` over a horizon `t`.
pub fn exponential_survival(lam: f64, t: f64) -> f64 {
    (-lam * t).exp()
}

/// Discrete per-step analogue: no dead end in `k` steps of hazard `lam·Δ`.
pub fn discrete_survival(lam: f64, delta: f64, k: usize) -> f64 {
    (1.0 - lam * delta).powi(k as i32)
}

/// Gambler's ruin for a symmetric unit-step walk: probability of climbing
/// `cells_up` before one step down, i.e. `1/(cells_up + 1)`.
pub fn symmetric_ruin_probability(cells_up: usize) -> f64 {
    1.0 / (cells_up as f64 + 1.0)
}

// ---------------------------------------------------------------------------
// First-passage Monte Carlo
// ---------------------------------------------------------------------------

/// Monte Carlo estimate of `P(reach a state ≥ target before falling
/// strictly below start)`, the per-trial success event of the reinforcing
/// condition. Returns `(estimate, standard error)`.
pub fn first_passage_probability(
    chain: &TypeChain,
    start: usize,
    target: usize,
    replications: usize,
    seed: u64,
) -> (f64, f64) {
    use rand_chacha::rand_core::SeedableRng;
    use rayon::prelude::*;

    let sampler = ChainSampler::new(chain);
    let wins: usize = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut s = start;
            loop {
                if s >= target {
                    return 1usize;
                }
                if s < start {
                    return 0;
                }
                let next = sampler.step(s, &mut rng);
                if next == s && chain.is_absorbing(s) {
                    // absorbed below the target: the trial cannot succeed
                    return 0;
                }
                s = next;
            }
        })
        .sum();
    let p = wins as f64 / replications as f64;
    let se = (p * (1.0 - p) / replications as f64).sqrt();
    (p, se)
}

// ---------------------------------------------------------------------------
// Ladder recognition (for analytic enrichment of reports)
// ---------------------------------------------------------------------------

/// Parameters recovered from a ladder-with-dead-ends worker, when the spec
/// matches that shape (uniform grid, one-cell climbs, dead ends to 0,
/// constant cost).
pub struct LadderShape {
    pub lam: f64,
    pub cost: f64,
    pub cell: f64,
}

pub fn recognize_ladder(spec: &crate::worker::WorkerSpec) -> Option<LadderShape> {
    let chain = &spec.chain;
    if chain.jump_sign != JumpSign::DownOnly || chain.n_states() < 3 {
        return None;
    }
    let cell = chain.grid[1] - chain.grid[0];
    if chain
        .grid
        .windows(2)
        .any(|w| (w[1] - w[0] - cell).abs() > 1e-12)
    {
        return None;
    }
    let c0 = spec.cost[0];
    if spec.cost.iter().any(|c| (c - c0).abs() > 1e-12) {
        return None;
    }
    // interior rows: mass only on {0, self, self+1} with deterministic climb
    let p_dead = chain.kernel[1][0];
    for i in 1..chain.n_states() - 1 {
        let row = &chain.kernel[i];
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 && j != 0 && j != i && j != i + 1 {
                return None;
            }
        }
        if (row[0] - p_dead).abs() > 1e-12 {
            return None;
        }
        // up-move must absorb the whole non-dead mass (deterministic climb)
        if (row[i + 1] - (1.0 - p_dead)).abs() > 1e-12 {
            return None;
        }
    }
    Some(LadderShape {
        lam: p_dead / chain.step,
        cost: c0,
        cell,
    })
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Reinforcing-environment check: for every worker whose initial strategic
/// index attains the maximum, estimate the per-trial success probability
/// `P(hit P̄(x₀) before falling below x₀)` and flag the environment as
/// reinforcing at `delta_level` when every estimate clears it by two
/// standard errors.
pub fn reinforcing_check(
    prep: &PreparedContest,
    delta_level: f64,
    replications: usize,
    seed: u64,
) -> Result<ExperimentReport, LabError> {
    let mut report = ExperimentReport {
        experiment: "reinforcing".into(),
        config_hash: engine_config_hash(&prep.config),
        statistics: Vec::new(),
        flags: Vec::new(),
        provenance: Provenance {
            seed,
            replications,
            delta: prep.disc.delta,
        },
    };

    let envs: Vec<f64> = (0..prep.n_workers())
        .map(|i| prep.envelope(i, prep.config.workers[i].chain.initial_state))
        .collect();
    let top = envs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut all_clear = true;
    for (i, &env) in envs.iter().enumerate() {
        if env < top {
            continue;
        }
        let spec = &prep.config.workers[i];
        let x0 = spec.chain.initial_state;
        let target = match prep.tables[i].threshold(x0) {
            Threshold::Never => {
                report.flag(
                    &format!("worker {i} has a nonempty promotion region"),
                    false,
                    "promotion region is empty; success probability is 0".into(),
                );
                all_clear = false;
                continue;
            }
            Threshold::At(t) => t,
        };
        let (p, se) =
            first_passage_probability(&spec.chain, x0, target, replications, seed ^ (i as u64));
        report.stat(
            &format!("success_probability_worker{i}"),
            p,
            Some(se),
            Some(replications as u64),
        );
        if !(p - 2.0 * se > delta_level) {
            all_clear = false;
        }

        if let Some(ladder) = recognize_ladder(spec) {
            let k = target - x0;
            let climb = k as f64 * spec.chain.step;
            let analytic = exponential_survival(ladder.lam, climb);
            let discrete = discrete_survival(ladder.lam, spec.chain.step, k);
            report.stat(&format!("climb_time_worker{i}"), climb, None, None);
            report.stat(
                &format!("analytic_survival_worker{i}"),
                analytic,
                None,
                None,
            );
            report.stat(
                &format!("discrete_survival_worker{i}"),
                discrete,
                None,
                None,
            );
            report.flag(
                &format!("worker {i} MC success matches e^(-lam*climb) within 3 SE"),
                (p - analytic).abs() <= 3.0 * se + (discrete - analytic).abs(),
                format!("estimate {p:.5} ± {se:.5} vs analytic {analytic:.5}"),
            );
            // The printed trial-length display and the participation-based
            // climb time disagree; surface both rather than resolving
            // silently.
            if let Ok(t_paper) = tbar(ladder.lam, ladder.cost, spec.prize, spec.discount) {
                let s_paper = exponential_survival(ladder.lam, t_paper);
                report.stat(&format!("tbar_display_worker{i}"), t_paper, None, None);
                report.stat(
                    &format!("survival_at_tbar_display_worker{i}"),
                    s_paper,
                    None,
                    None,
                );
                report.stat(
                    &format!("one_minus_survival_at_tbar_display_worker{i}"),
                    1.0 - s_paper,
                    None,
                    None,
                );
            }
            if let Ok(t_zero) =
                breakeven_climb_time(ladder.lam, ladder.cost, spec.prize, spec.discount)
            {
                report.stat(
                    &format!("breakeven_climb_time_worker{i}"),
                    t_zero,
                    None,
                    None,
                );
                report.flag(
                    &format!("worker {i} realized climb sits at the breakeven time"),
                    (climb - t_zero).abs() <= 2.0 * spec.chain.step,
                    format!(
                        "climb {climb:.5} vs breakeven {t_zero:.5} (one cell = {})",
                        spec.chain.step
                    ),
                );
            }
        }
    }
    report.flag(
        &format!("reinforcing at level {delta_level}"),
        all_clear,
        "every index-maximal worker clears the level by 2 SE".into(),
    );
    Ok(report)
}

/// Group labels for the promotion-gap experiment: `groups[i]` is worker
/// `i`'s group (0 = advantaged, 1 = disadvantaged). Set `expect_symmetric`
/// only when the config genuinely symmetrizes the tie-break (the
/// indistinguishability test is meaningless under a deterministic priority
/// advantage).
pub fn promotion_gap_experiment(
    prep: &PreparedContest,
    groups: &[usize],
    expect_symmetric: bool,
    replications: usize,
    seed: u64,
) -> Result<ExperimentReport, LabError> {
    let n = prep.n_workers();
    assert_eq!(groups.len(), n, "one group label per worker");
    let mut report = ExperimentReport {
        experiment: "gap".into(),
        config_hash: engine_config_hash(&prep.config),
        statistics: Vec::new(),
        flags: Vec::new(),
        provenance: Provenance {
            seed,
            replications,
            delta: prep.disc.delta,
        },
    };

    let set = engine::run_replications(prep, replications, seed, replications.min(200_000))?;
    let mut group_promotions = [0usize; 2];
    let mut group_sizes = [0usize; 2];
    for (i, &g) in groups.iter().enumerate() {
        let _ = i;
        group_sizes[g] += 1;
    }
    let mut promo_times: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut promo_types: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut first_trials = 0usize;
    let mut first_trial_successes = 0usize;
    for (rep, stats) in set.stats.iter().enumerate() {
        if let Outcome::Promoted {
            worker,
            time,
            state,
        } = stats.outcome
        {
            let g = groups[worker];
            group_promotions[g] += 1;
            promo_times[g].push(time);
            promo_types[g].push(prep.config.workers[worker].chain.grid[state]);
        }
        // first-trial success: the first delegated worker is promoted
        // without the task ever moving
        if let Some(trace) = set.traces.get(rep) {
            if let Some(first) = trace.events.first() {
                first_trials += 1;
                let single = trace.events.iter().all(|e| e.worker == first.worker);
                if single
                    && matches!(trace.outcome, Outcome::Promoted { worker, .. } if worker == first.worker)
                {
                    first_trial_successes += 1;
                }
            }
        }
    }

    let reps = replications as f64;
    let share: Vec<f64> = (0..2).map(|g| group_promotions[g] as f64 / reps).collect();
    let share_se: Vec<f64> = share
        .iter()
        .map(|p| (p * (1.0 - p) / reps).sqrt())
        .collect();
    for g in 0..2 {
        report.stat(
            &format!("promotion_share_group{g}"),
            share[g],
            Some(share_se[g]),
            Some(replications as u64),
        );
        let (mt, mt_se) = engine::mean_se(&promo_times[g]);
        if !promo_times[g].is_empty() {
            report.stat(
                &format!("mean_time_to_promotion_group{g}"),
                mt,
                Some(mt_se),
                Some(promo_times[g].len() as u64),
            );
            let (ty, ty_se) = engine::mean_se(&promo_types[g]);
            report.stat(
                &format!("mean_type_at_promotion_group{g}"),
                ty,
                Some(ty_se),
                Some(promo_types[g].len() as u64),
            );
        }
    }

    let delta_hat = if first_trials > 0 {
        first_trial_successes as f64 / first_trials as f64
    } else {
        f64::NAN
    };
    let delta_se = if first_trials > 0 {
        (delta_hat * (1.0 - delta_hat) / first_trials as f64).sqrt()
    } else {
        f64::NAN
    };
    report.stat(
        "delta_hat_first_trial_success",
        delta_hat,
        Some(delta_se),
        Some(first_trials as u64),
    );

    let k = group_sizes[0] as f64;
    if delta_hat.is_finite() {
        let bound = (1.0 - delta_hat).powf(k);
        // propagate the delta_hat uncertainty through the bound
        let bound_se = k * (1.0 - delta_hat).powf(k - 1.0) * delta_se;
        report.stat("reinforcing_bound", bound, Some(bound_se), None);
        report.flag(
            "disadvantaged promotion share below (1-delta)^K + 3 SE",
            share[1] <= bound + 3.0 * (share_se[1] + bound_se),
            format!("share {} vs bound {bound}", share[1]),
        );
        if group_sizes[0] == 1 && group_sizes[1] == 1 {
            let predicted = (1.0 - delta_hat) * delta_hat;
            report.stat("decomposition_prediction_group1", predicted, None, None);
            report.flag(
                "two-worker share decomposition (1-delta)*delta within 3 SE",
                (share[1] - predicted).abs() <= 3.0 * (share_se[1] + 2.0 * delta_se),
                format!("share {} vs predicted {predicted}", share[1]),
            );
        }
    }

    // Two-sample test, asserted only for genuinely symmetric setups.
    if group_sizes[0] == group_sizes[1] {
        let pooled = (share[0] + share[1]) / 2.0;
        let z_den = (2.0 * pooled * (1.0 - pooled) / reps).sqrt();
        if z_den > 0.0 {
            let z = (share[0] - share[1]).abs() / z_den;
            report.stat("two_sample_z", z, None, None);
            if expect_symmetric {
                report.flag(
                    "groups indistinguishable at 1%",
                    z < 2.576,
                    format!("z = {z:.3}"),
                );
            }
        }
    }
    Ok(report)
}

/// Pathwise and cross-sectional fast-track checks on promoted traces.
pub fn fast_track_stat(
    prep: &PreparedContest,
    traces: &[ContestTrace],
    seed: u64,
) -> Result<ExperimentReport, LabError> {
    let mut report = ExperimentReport {
        experiment: "fasttrack".into(),
        config_hash: engine_config_hash(&prep.config),
        statistics: Vec::new(),
        flags: Vec::new(),
        provenance: Provenance {
            seed,
            replications: traces.len(),
            delta: prep.disc.delta,
        },
    };

    let rank = |t: Threshold| match t {
        Threshold::Never => usize::MAX,
        Threshold::At(v) => v,
    };
    let mut pathwise_ok = true;
    let mut touch_ok = true;
    let mut promo_points: Vec<(f64, f64)> = Vec::new();
    for trace in traces {
        // thresholds are nonincreasing along every path
        let mut last_rank: Vec<Option<usize>> = vec![None; prep.n_workers()];
        for e in &trace.events {
            let r = rank(prep.tables[e.worker].threshold(e.m_post));
            if let Some(prev) = last_rank[e.worker] {
                if r > prev {
                    pathwise_ok = false;
                }
            }
            last_rank[e.worker] = Some(r);
        }
        if let Outcome::Promoted {
            worker,
            time,
            state,
        } = trace.outcome
        {
            let m = trace
                .events
                .iter()
                .rev()
                .find(|e| e.worker == worker)
                .map(|e| e.m_post)
                .unwrap_or(state);
            match prep.tables[worker].threshold(m) {
                Threshold::At(t) if state == t => {}
                Threshold::At(t) if state > t => {
                    // landing above the threshold is possible only for chains
                    // with upward jumps
                    if prep.config.workers[worker].chain.jump_sign == JumpSign::DownOnly {
                        touch_ok = false;
                    }
                }
                _ => touch_ok = false,
            }
            promo_points.push((time, prep.config.workers[worker].chain.grid[state]));
        }
    }
    report.flag(
        "P̄(m_t) is pathwise nonincreasing",
        pathwise_ok,
        String::new(),
    );
    report.flag(
        "promoted type equals P̄(m) at promotion",
        touch_ok,
        String::new(),
    );

    // Regression of type-at-promotion on promotion time.
    let n = promo_points.len();
    report.stat("n_promotions", n as f64, None, Some(n as u64));
    if n >= 3 {
        let mean_t = promo_points.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let mean_y = promo_points.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let sxx: f64 = promo_points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
        if sxx < 1e-12 {
            report.flag(
                "type-at-promotion slope nonpositive at 95%",
                true,
                "degenerate: all promotions at the same time".into(),
            );
        } else {
            let sxy: f64 = promo_points
                .iter()
                .map(|p| (p.0 - mean_t) * (p.1 - mean_y))
                .sum();
            let slope = sxy / sxx;
            let residual_var: f64 = promo_points
                .iter()
                .map(|p| {
                    let fit = mean_y + slope * (p.0 - mean_t);
                    (p.1 - fit).powi(2)
                })
                .sum::<f64>()
                / (n as f64 - 2.0);
            let slope_se = (residual_var / sxx).sqrt();
            report.stat("slope_type_on_time", slope, Some(slope_se), Some(n as u64));
            report.flag(
                "type-at-promotion slope nonpositive at 95%",
                slope <= 1.645 * slope_se,
                format!("slope {slope:.5} ± {slope_se:.5}"),
            );
        }
    } else {
        report.flags.push(ClaimFlag {
            claim: "type-at-promotion slope nonpositive at 95%".into(),
            status: ClaimStatus::Inconclusive,
            detail: format!("only {n} promotions"),
        });
    }
    Ok(report)
}

/// Type of worker `i` at global time `t` along a trace (states persist
/// between the worker's own moves).
fn worker_state_at(prep: &PreparedContest, trace: &ContestTrace, worker: usize, t: f64) -> usize {
    let mut state = prep.config.workers[worker].chain.initial_state;
    for e in &trace.events {
        if e.t >= t {
            break;
        }
        if e.worker == worker {
            state = e.x_post;
        }
    }
    state
}

/// Promotion prospects conditional on holding type `x` at several elapsed
/// times: seniority helps when the conditional promotion probability rises
/// and the residual time falls.
pub fn seniority_stat(
    prep: &PreparedContest,
    traces: &[ContestTrace],
    x: usize,
    times: &[f64],
    seed: u64,
) -> Result<ExperimentReport, LabError> {
    let mut report = ExperimentReport {
        experiment: "seniority".into(),
        config_hash: engine_config_hash(&prep.config),
        statistics: Vec::new(),
        flags: Vec::new(),
        provenance: Provenance {
            seed,
            replications: traces.len(),
            delta: prep.disc.delta,
        },
    };
    const MIN_CELL: usize = 25;

    let mut probs: Vec<(f64, f64)> = Vec::new();
    let mut residuals: Vec<(f64, f64)> = Vec::new();
    for &t in times {
        let mut hits = 0usize;
        let mut promoted = 0usize;
        let mut residual_samples: Vec<f64> = Vec::new();
        for trace in traces {
            for i in 0..prep.n_workers() {
                let alive = match trace.outcome {
                    Outcome::Promoted { time, .. } => time >= t,
                    Outcome::OutsideOption { time } => time >= t,
                    Outcome::Capped => true,
                };
                if !alive {
                    continue;
                }
                if worker_state_at(prep, trace, i, t) != x {
                    continue;
                }
                hits += 1;
                if let Outcome::Promoted { worker, time, .. } = trace.outcome {
                    if worker == i {
                        promoted += 1;
                        residual_samples.push(time - t);
                    }
                }
            }
        }
        if hits >= MIN_CELL {
            let p = promoted as f64 / hits as f64;
            let se = (p * (1.0 - p) / hits as f64).sqrt();
            report.stat(
                &format!("promotion_probability_at_t{t}"),
                p,
                Some(se),
                Some(hits as u64),
            );
            probs.push((p, se));
            if residual_samples.len() >= MIN_CELL {
                let (mr, mr_se) = crate::engine::mean_se(&residual_samples);
                report.stat(
                    &format!("mean_residual_time_at_t{t}"),
                    mr,
                    Some(mr_se),
                    Some(residual_samples.len() as u64),
                );
                residuals.push((mr, mr_se));
            }
        } else {
            report.flags.push(ClaimFlag {
                claim: format!("conditioning mass at t={t}"),
                status: ClaimStatus::Inconclusive,
                detail: format!("{hits} observations (< {MIN_CELL})"),
            });
        }
    }

    if probs.len() >= 2 {
        let monotone = probs
            .windows(2)
            .all(|w| w[1].0 >= w[0].0 - 2.0 * (w[0].1 + w[1].1));
        report.flag(
            "conditional promotion probability nondecreasing in elapsed time (within CI)",
            monotone,
            format!("{:?}", probs.iter().map(|p| p.0).collect::<Vec<_>>()),
        );
    } else {
        report.flags.push(ClaimFlag {
            claim: "conditional promotion probability nondecreasing in elapsed time".into(),
            status: ClaimStatus::Inconclusive,
            detail: "fewer than two time cells with enough mass".into(),
        });
    }
    if residuals.len() >= 2 {
        let monotone = residuals
            .windows(2)
            .all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1 + w[1].1));
        report.flag(
            "expected residual time to promotion nonincreasing in elapsed time (within CI)",
            monotone,
            format!("{:?}", residuals.iter().map(|p| p.0).collect::<Vec<_>>()),
        );
    } else {
        report.flags.push(ClaimFlag {
            claim: "expected residual time to promotion nonincreasing in elapsed time".into(),
            status: ClaimStatus::Inconclusive,
            detail: "fewer than two time cells with enough residual mass".into(),
        });
    }
    Ok(report)
}

/// Prize comparative statics: value and thresholds move with `g`, promotion
/// times are stochastically later, and the value of information is
/// supermodular in `(g, π)` for a declared flow-payoff pair.
pub struct ConvexCompensationArgs<'a> {
    /// Base configuration; every worker's prize is replaced per grid point.
    pub base: engine::ContestConfig,
    /// Ascending prize levels (at least 3).
    pub g_grid: Vec<f64>,
    /// Optional `(π, π̃)` pair with a declared value-of-information ranking
    /// (π̃ richer), checked at the four `(g, π)` corners.
    pub pi_pair: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    pub replications: usize,
    pub seed: u64,
    pub _marker: std::marker::PhantomData<&'a ()>,
}

pub fn convex_compensation(args: &ConvexCompensationArgs) -> Result<ExperimentReport, LabError> {
    if args.g_grid.len() < 3 {
        return Err(LabError::Domain("need at least 3 prize levels".into()));
    }
    if args.g_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::Domain("prize grid must be ascending".into()));
    }
    let mut report = ExperimentReport {
        experiment: "convexcomp".into(),
        config_hash: engine_config_hash(&args.base),
        statistics: Vec::new(),
        flags: Vec::new(),
        provenance: Provenance {
            seed: args.seed,
            replications: args.replications,
            delta: args.base.step,
        },
    };

    let with_prize = |g: f64, pi: Option<&[Vec<f64>]>| {
        let mut config = args.base.clone();
        for (i, w) in config.workers.iter_mut().enumerate() {
            w.prize = g;
            if let Some(p) = pi {
                w.pi = p[i].clone();
            }
        }
        config
    };

    let mut values = Vec::new();
    let mut thresholds_per_g: Vec<Vec<Vec<(usize, Threshold)>>> = Vec::new();
    let mut tau_samples: Vec<Vec<f64>> = Vec::new();
    for &g in &args.g_grid {
        let (prep, _) = PreparedContest::new(with_prize(g, None))?;
        let value = engine::principal_value_envelope(&prep)?;
        values.push(value);
        report.stat(&format!("envelope_value_g{g}"), value, None, None);
        thresholds_per_g.push(
            (0..prep.n_workers())
                .map(|i| {
                    (0..prep.tables[i].n_states())
                        .filter(|&m| prep.tables[i].covered_minima[m])
                        .map(|m| (m, prep.tables[i].threshold(m)))
                        .collect()
                })
                .collect(),
        );
        let set = engine::run_replications(&prep, args.replications, args.seed, 0)?;
        let taus: Vec<f64> = set
            .stats
            .iter()
            .map(|s| match s.outcome {
                Outcome::Promoted { time, .. } => time,
                _ => f64::INFINITY,
            })
            .collect();
        tau_samples.push(taus);
    }

    let monotone_value = values.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    report.flag(
        "principal value nondecreasing in the prize",
        monotone_value,
        format!("{values:?}"),
    );

    let rank = |t: Threshold| match t {
        Threshold::Never => usize::MAX,
        Threshold::At(v) => v,
    };
    let mut monotone_thresholds = true;
    for pair in thresholds_per_g.windows(2) {
        for (lo_w, hi_w) in pair[0].iter().zip(&pair[1]) {
            for (&(m_lo, lo), &(m_hi, hi)) in lo_w.iter().zip(hi_w) {
                debug_assert_eq!(m_lo, m_hi, "coverage is chain-determined");
                if rank(hi) < rank(lo) {
                    monotone_thresholds = false;
                }
            }
        }
    }
    report.flag(
        "promotion thresholds nondecreasing in the prize (statewise)",
        monotone_thresholds,
        String::new(),
    );

    // First-order dominance of promotion times: higher prizes promote later.
    let horizon = args.base.horizon_cap;
    let grid: Vec<f64> = (0..50).map(|k| horizon * k as f64 / 50.0).collect();
    let mut fosd = true;
    for pair in tau_samples.windows(2) {
        let n0 = pair[0].len() as f64;
        let n1 = pair[1].len() as f64;
        for &t in &grid {
            let c0 = pair[0].iter().filter(|&&v| v <= t).count() as f64 / n0;
            let c1 = pair[1].iter().filter(|&&v| v <= t).count() as f64 / n1;
            let se = (c0 * (1.0 - c0) / n0).sqrt() + (c1 * (1.0 - c1) / n1).sqrt();
            if c1 > c0 + 3.0 * se + 1e-12 {
                fosd = false;
            }
        }
    }
    report.flag(
        "promotion time stochastically later for larger prizes",
        fosd,
        String::new(),
    );

    if let Some((pi_lo, pi_hi)) = &args.pi_pair {
        let g_lo = args.g_grid[0];
        let g_hi = *args.g_grid.last().expect("nonempty grid");
        let corner = |g: f64, pi: &[Vec<f64>]| -> Result<f64, LabError> {
            let (prep, _) = PreparedContest::new(with_prize(g, Some(pi)))?;
            Ok(engine::principal_value_envelope(&prep)?)
        };
        let v_hh = corner(g_hi, pi_hi)?;
        let v_hl = corner(g_hi, pi_lo)?;
        let v_lh = corner(g_lo, pi_hi)?;
        let v_ll = corner(g_lo, pi_lo)?;
        report.stat("supermodularity_lhs", v_hh - v_hl, None, None);
        report.stat("supermodularity_rhs", v_lh - v_ll, None, None);
        report.flag(
            "value-of-information supermodularity at the four corners",
            v_hh - v_hl >= v_lh - v_ll - 1e-8,
            format!("{} vs {}", v_hh - v_hl, v_lh - v_ll),
        );
    }
    Ok(report)
}

fn engine_config_hash(config: &engine::ContestConfig) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Two identical ladder workers starting one cell above the restart floor —
/// the worked two-worker environment. `grid_points` controls discretization
/// accuracy; `x_max` must leave room above the implied threshold.
pub struct LadderContestParams {
    pub mu: f64,
    pub lam: f64,
    pub cost: f64,
    pub prize: f64,
    pub discount: f64,
    pub x_max: f64,
    pub grid_points: usize,
    pub outside_option: f64,
    pub replications: usize,
    pub seed: u64,
}

pub fn ladder_contest_config(p: &LadderContestParams) -> Result<engine::ContestConfig, LabError> {
    let delta = p.x_max / (p.grid_points - 1) as f64 / p.mu;
    let mk = || -> Result<crate::worker::WorkerSpec, LabError> {
        let mut chain =
            crate::typeproc::build_ladder_deadend(p.mu, p.lam, p.x_max, p.grid_points, delta)
                .map_err(|e| LabError::Domain(e.to_string()))?;
        chain.initial_state = 1;
        let n = chain.n_states();
        Ok(crate::worker::WorkerSpec {
            pi: chain.grid.clone(),
            cost: vec![p.cost; n],
            prize: p.prize,
            discount: p.discount,
            chain,
        })
    };
    Ok(engine::ContestConfig {
        workers: vec![mk()?, mk()?],
        outside_option: p.outside_option,
        priority: vec![0, 1],
        step: delta,
        horizon_cap: 40.0 / p.discount.min(1.0),
        replications: p.replications,
        seed: p.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ContestConfig;
    use crate::typeproc::build_brownian_belief;
    use crate::worker::WorkerSpec;

    #[test]
    fn tbar_closed_form_matches_quadrature() {
        let t = tbar(1.0, 1.0, 0.5, 0.1).unwrap();
        let tq = tbar_quadrature(1.0, 1.0, 0.5, 0.1).unwrap();
        assert!((t - tq).abs() < 1e-10, "closed form {t} vs quadrature {tq}");
        // frozen value from the quadrature oracle: -ln(0.45)/1.1
        assert!((t - 0.7259160873).abs() < 1e-9);
    }

    #[test]
    fn tbar_small_prize_vanishes_and_boundary_blows_up() {
        assert!(tbar(1.0, 1.0, 1e-12, 0.1).unwrap() < 1e-10);
        // g(r+lam) close to lam*c from below
        let g = (1.0 - 1e-9) / 1.1;
        assert!(tbar(1.0, 1.0, g, 0.1).unwrap() > 15.0);
        assert!(matches!(tbar(1.0, 1.0, 2.0, 0.1), Err(LabError::Domain(_))));
    }

    #[test]
    fn breakeven_time_has_the_undiscounted_limit() {
        // as r, lam → 0 the breakeven climb time approaches g/c
        let t = breakeven_climb_time(1e-9, 2.0, 1.0, 1e-9).unwrap();
        assert!((t - 0.5).abs() < 1e-6);
    }

    #[test]
    fn gamblers_ruin_on_a_symmetric_walk() {
        let chain = build_brownian_belief(0.5, 1.0, 11, 4e-3).unwrap();
        // interior rows are symmetric; from state 5, winning means reaching
        // 10 before dipping to 4
        let (p, se) = first_passage_probability(&chain, 5, 10, 40_000, 3);
        let analytic = symmetric_ruin_probability(5);
        assert!(
            (p - analytic).abs() <= 3.0 * se,
            "estimate {p} ± {se} vs ruin formula {analytic}"
        );
    }

    #[test]
    fn deterministic_ladder_always_succeeds() {
        let chain = crate::typeproc::build_ladder_deadend(1.0, 0.0, 1.0, 11, 0.1).unwrap();
        let (p, _) = first_passage_probability(&chain, 0, 10, 2_000, 1);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn ladder_contest_reinforcing_report() {
        let config = ladder_contest_config(&LadderContestParams {
            mu: 1.0,
            lam: 1.0,
            cost: 1.0,
            prize: 0.5,
            discount: 0.1,
            x_max: 2.0,
            grid_points: 201,
            outside_option: 0.0,
            replications: 0,
            seed: 0,
        })
        .unwrap();
        let (prep, _) = PreparedContest::new(config).unwrap();
        let report = reinforcing_check(&prep, 0.4, 30_000, 5).unwrap();
        assert!(report.all_pass(), "{:#?}", report.flags);
        // the report carries both trial-time displays
        assert!(report
            .statistics
            .iter()
            .any(|s| s.name.starts_with("tbar_display")));
        assert!(report
            .statistics
            .iter()
            .any(|s| s.name.starts_with("breakeven_climb_time")));
    }

    #[test]
    fn symmetric_gap_experiment_is_balanced() {
        let config = ladder_contest_config(&LadderContestParams {
            mu: 1.0,
            lam: 1.0,
            cost: 1.0,
            prize: 0.5,
            discount: 0.1,
            x_max: 1.6,
            grid_points: 81,
            outside_option: 0.0,
            replications: 0,
            seed: 0,
        })
        .unwrap();
        // symmetrize priority by alternating? the tie-break favors worker 0,
        // so symmetric groups need the asymmetry disclosed; here we check the
        // machinery on group shares instead
        let (prep, _) = PreparedContest::new(config).unwrap();
        let report = promotion_gap_experiment(&prep, &[0, 1], false, 20_000, 9).unwrap();
        let share0 = report
            .statistics
            .iter()
            .find(|s| s.name == "promotion_share_group0")
            .unwrap()
            .value;
        let share1 = report
            .statistics
            .iter()
            .find(|s| s.name == "promotion_share_group1")
            .unwrap()
            .value;
        // priority advantage: worker 0 takes the first (often only) trial
        assert!(share0 > share1);
        assert!(
            report
                .flags
                .iter()
                .any(|f| f.claim.contains("(1-delta)^K") && f.status == ClaimStatus::Pass),
            "{:#?}",
            report.flags
        );
        assert!(
            report
                .flags
                .iter()
                .any(|f| f.claim.contains("decomposition") && f.status == ClaimStatus::Pass),
            "{:#?}",
            report.flags
        );
    }

    #[test]
    fn large_advantaged_group_compounds_the_gap() {
        // Three identical advantaged workers ahead of one disadvantaged:
        // his promotion share stays below (1-delta)^3 plus noise.
        let base = ladder_contest_config(&LadderContestParams {
            mu: 1.0,
            lam: 1.0,
            cost: 1.0,
            prize: 0.5,
            discount: 0.1,
            x_max: 1.6,
            grid_points: 81,
            outside_option: 0.0,
            replications: 0,
            seed: 0,
        })
        .unwrap();
        let mut config = base.clone();
        config.workers = vec![
            base.workers[0].clone(),
            base.workers[0].clone(),
            base.workers[0].clone(),
            base.workers[1].clone(),
        ];
        config.priority = vec![0, 1, 2, 3];
        let (prep, _) = PreparedContest::new(config).unwrap();
        let report = promotion_gap_experiment(&prep, &[0, 0, 0, 1], false, 20_000, 21).unwrap();
        assert!(
            report
                .flags
                .iter()
                .any(|f| f.claim.contains("(1-delta)^K") && f.status == ClaimStatus::Pass),
            "{:#?}",
            report.flags
        );
        let share1 = report
            .statistics
            .iter()
            .find(|s| s.name == "promotion_share_group1")
            .unwrap()
            .value;
        let delta = report
            .statistics
            .iter()
            .find(|s| s.name == "delta_hat_first_trial_success")
            .unwrap()
            .value;
        assert!(
            share1 < (1.0 - delta).powi(2),
            "three prior trials should compound: {share1}"
        );
    }

    #[test]
    fn symmetrized_priority_makes_groups_indistinguishable() {
        // Zero initial offset plus a coin-flip over the tie-break order:
        // pooling runs with both priorities, the two groups' promotion
        // shares must pass a two-sample test at 1%.
        let mut config = ladder_contest_config(&LadderContestParams {
            mu: 1.0,
            lam: 1.0,
            cost: 1.0,
            prize: 0.5,
            discount: 0.1,
            x_max: 1.6,
            grid_points: 81,
            outside_option: 0.0,
            replications: 0,
            seed: 0,
        })
        .unwrap();
        let reps = 10_000usize;
        let mut promoted = [0usize; 2];
        for (run, order) in [(0u64, vec![0, 1]), (1, vec![1, 0])] {
            config.priority = order;
            let (prep, _) = PreparedContest::new(config.clone()).unwrap();
            let set = engine::run_replications(&prep, reps, 1000 + run, 0).unwrap();
            for s in &set.stats {
                if let Outcome::Promoted { worker, .. } = s.outcome {
                    promoted[worker] += 1;
                }
            }
        }
        let total = (2 * reps) as f64;
        let (s0, s1) = (promoted[0] as f64 / total, promoted[1] as f64 / total);
        let pooled = (s0 + s1) / 2.0;
        let z = (s0 - s1).abs() / (2.0 * pooled * (1.0 - pooled) / total).sqrt();
        assert!(z < 2.576, "pooled shares {s0} vs {s1}: z = {z}");
    }

    #[test]
    fn fast_track_on_ladder_traces() {
        let config = ladder_contest_config(&LadderContestParams {
            mu: 1.0,
            lam: 1.0,
            cost: 1.0,
            prize: 0.5,
            discount: 0.1,
            x_max: 1.6,
            grid_points: 81,
            outside_option: 0.0,
            replications: 0,
            seed: 0,
        })
        .unwrap();
        let (prep, _) = PreparedContest::new(config).unwrap();
        let set = engine::run_replications(&prep, 4_000, 17, 4_000).unwrap();
        let report = fast_track_stat(&prep, &set.traces, 17).unwrap();
        assert!(report.all_pass(), "{:#?}", report.flags);
    }

    #[test]
    fn convex_compensation_equal_prizes_are_flat() {
        let chain = crate::typeproc::build_bad_news_belief(0.5, 1.0, 6, 0.2).unwrap();
        let n = chain.n_states();
        let worker = WorkerSpec {
            pi: chain.grid.clone(),
            cost: vec![0.05; n],
            prize: 0.5,
            discount: 0.2,
            chain,
        };
        let base = ContestConfig {
            workers: vec![worker.clone(), worker],
            outside_option: 0.1,
            priority: vec![0, 1],
            step: 0.2,
            horizon_cap: 150.0,
            replications: 0,
            seed: 0,
        };
        let args = ConvexCompensationArgs {
            base,
            g_grid: vec![0.5, 0.5, 0.5],
            pi_pair: None,
            replications: 2_000,
            seed: 5,
            _marker: std::marker::PhantomData,
        };
        let report = convex_compensation(&args).unwrap();
        assert!(report.all_pass(), "{:#?}", report.flags);
        let values: Vec<f64> = report
            .statistics
            .iter()
            .filter(|s| s.name.starts_with("envelope_value"))
            .map(|s| s.value)
            .collect();
        assert!(values.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn convex_compensation_supermodularity_with_doubled_stakes() {
        let chain = crate::typeproc::build_bad_news_belief(0.5, 1.0, 6, 0.2).unwrap();
        let n = chain.n_states();
        let worker = WorkerSpec {
            pi: chain.grid.clone(),
            cost: vec![0.05; n],
            prize: 0.5,
            discount: 0.2,
            chain: chain.clone(),
        };
        let base = ContestConfig {
            workers: vec![worker.clone(), worker],
            outside_option: 0.1,
            priority: vec![0, 1],
            step: 0.2,
            horizon_cap: 150.0,
            replications: 0,
            seed: 0,
        };
        let pi_lo: Vec<Vec<f64>> = vec![chain.grid.clone(), chain.grid.clone()];
        let pi_hi: Vec<Vec<f64>> = pi_lo
            .iter()
            .map(|p| p.iter().map(|v| 2.0 * v).collect())
            .collect();
        let args = ConvexCompensationArgs {
            base,
            g_grid: vec![0.3, 0.5, 0.8],
            pi_pair: Some((pi_lo, pi_hi)),
            replications: 4_000,
            seed: 5,
            _marker: std::marker::PhantomData,
        };
        let report = convex_compensation(&args).unwrap();
        assert!(report.all_pass(), "{:#?}", report.flags);
    }

    #[test]
    fn report_serialization() {
        let report = ExperimentReport {
            experiment: "tbar".into(),
            config_hash: "abc".into(),
            statistics: vec![Statistic {
                name: "t".into(),
                value: 0.5,
                se: None,
                count: None,
            }],
            flags: vec![],
            provenance: Provenance {
                seed: 1,
                replications: 0,
                delta: 0.1,
            },
        };
        let json = report.to_json();
        assert!(json.contains("\"experiment\": \"tbar\""));
        let csv = report.to_csv();
        assert!(csv.starts_with("# experiment-report v1"));
        assert!(csv.contains("tbar,t,0.5"));
    }
}
