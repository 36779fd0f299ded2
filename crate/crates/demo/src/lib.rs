//! Runnable scenarios for the policy engine: seeded datasets, policy sets,
//! HTTP endpoints, and the oracles that check them.
//!
//! Every scenario wires the same pieces together: a deterministic dataset, a
//! registry of field policies, and a set of [`endpoint::Endpoint`]s. Each
//! endpoint carries two implementations — one that routes queries through
//! the engine, and a hand-written baseline that enforces the same rules with
//! inline checks. The equivalence runner sweeps both and diffs the JSON.

pub mod baseline;
pub mod endpoint;
pub mod oracle;
pub mod policies;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod service;
