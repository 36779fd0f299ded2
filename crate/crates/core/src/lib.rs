//! Core building blocks: a small relational query AST, an embedded row store,
//! and a policy engine that mediates every query an application runs.
//!
//! Applications build [`query::Query`] values against a [`store::Database`]
//! and hand them to [`policy::Engine::enforce`]. The engine selects the
//! registered policies that cover the fields the query touches, lets pre-phase
//! policies rewrite the query, executes it exactly once, and lets post-phase
//! policies transform the result before it is returned.

pub mod policy;
pub mod query;
pub mod schema;
pub mod store;
pub mod value;
