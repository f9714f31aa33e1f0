//! Scheduling elastic and inelastic jobs on a cluster of `k` servers.
//!
//! Two job classes share the cluster: *elastic* jobs parallelize linearly
//! across any number of servers, while *inelastic* jobs can occupy at most one
//! server at a time. This crate provides:
//!
//! - [`domain`]: system parameters, states, allocations, and arrival sequences;
//! - [`policies`]: the Inelastic-First and Elastic-First allocation policies,
//!   table-driven custom policies, policy classification (work conservation,
//!   GREEDY/GREEDY*, class P), and a Lyapunov drift certificate;
//! - [`simulator`]: event-driven steady-state simulation, deterministic fluid
//!   sample paths for coupled policy comparison, and transient estimation;
//! - [`analytic`]: M/M/1 and M/M/k closed forms, busy-period moments, Coxian
//!   moment matching, and a quasi-birth-death solver for mean response times
//!   under both priority policies;
//! - [`offline`]: SRPT-k scheduling of one-shot instances with per-job
//!   parallelizability caps, plus a dual-fitting approximation certificate;
//! - [`experiments`]: the CLI experiment runners and CSV/SVG emission.

pub mod analytic;
pub mod domain;
pub mod experiments;
pub mod offline;
pub mod policies;
pub mod simulator;

mod stats;
mod svg;
