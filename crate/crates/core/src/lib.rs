//! Dynamic promotion contests on discretized type processes.
//!
//! A principal delegates one non-routine task among strategic workers and
//! promotes the first whose type reaches a participation-compatible
//! threshold. The crate computes the classical Gittins and strategic indices
//! that drive the optimal contest, simulates the contest itself, and ships
//! brute-force oracles that certify optimality and the comparative statics
//! on small discrete instances.
//!
//! Module map:
//! - [`typeproc`]: discretized type processes (bad-news learning, belief
//!   diffusions, ladders with dead ends) and their admissibility checks;
//! - [`worker`]: continuation values, promotion thresholds, perpetuities,
//!   and the single-arm optimal contract;
//! - [`index`]: Gittins and strategic index tables, quit boundary, lower
//!   envelopes;
//! - [`engine`]: the index-rule time change, contest simulation, exact
//!   product-chain evaluation, and implementability checks;
//! - [`oracle`]: exhaustive small-instance solvers the fast paths are tested
//!   against;
//! - [`lab`]: the worked examples and comparative statics as reproducible
//!   experiments;
//! - [`cli`]: configuration, caching, and the `contest` command set.

pub mod cli;
pub mod engine;
pub mod index;
pub mod lab;
pub mod oracle;
pub mod solve;
pub mod typeproc;
pub mod worker;

pub use index::{gittins_index, lower_envelope, quit_boundary, strategic_index, IndexTable};
pub use typeproc::{
    build_bad_news_belief, build_brownian_belief, build_ladder_deadend, validate, TypeChain,
};
pub use worker::{
    continuation_value, perpetuity_value, promotion_threshold, single_arm_contract, WorkerSpec,
};
