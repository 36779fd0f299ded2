//! Policy definition, selection, and enforcement.
//!
//! A [`Policy`] couples a [`Selector`] (which fields it protects) with a body
//! that runs in one of two phases: pre-phase bodies rewrite the query before
//! it executes, post-phase bodies transform the fetched result. Policies may
//! be pinned to specific APIs; for a given phase, API-specific policies that
//! match a query replace *all* matching generic ones.
//!
//! [`Engine::enforce`] is the only path from application code to data: it
//! selects policies by the fields the original query uses, applies pre
//! bodies (or denies by default when nothing matches), executes the
//! rewritten query exactly once, then applies post bodies.

mod engine;
mod registry;
mod selector;

pub use engine::{default_deny, EnforceMetrics, EnforceTrace, Engine, PhaseTrace, PolicyRef, Privileged};
pub use registry::{Policy, PolicyPhase, PolicyRegistry, PostBody, PreBody, Selection, SelectionKind};
pub use selector::{Selector, SelectorEntry};

use std::collections::BTreeMap;
use std::fmt;

use crate::query::QueryError;
use crate::store::StoreError;
use crate::value::Value;

/// Name of an application entry point, e.g. `get_events`. Policies can be
/// scoped to a set of these.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ApiId(String);

impl ApiId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ApiId {
    fn from(s: &str) -> ApiId {
        ApiId(s.to_string())
    }
}

impl From<String> for ApiId {
    fn from(s: String) -> ApiId {
        ApiId(s)
    }
}

impl fmt::Display for ApiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Who is asking. Anonymous requests carry no id and no attributes; policies
/// decide what, if anything, they may see.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    id: Option<i64>,
    attributes: BTreeMap<String, Value>,
}

impl UserContext {
    pub fn anonymous() -> UserContext {
        UserContext {
            id: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn authenticated(id: i64) -> UserContext {
        UserContext {
            id: Some(id),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: impl Into<Value>) -> UserContext {
        self.attributes.insert(name.into(), value.into());
        self
    }

    pub fn is_authenticated(&self) -> bool {
        self.id.is_some()
    }

    pub fn id(&self) -> Option<i64> {
        self.id
    }

    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attributes.get(name)
    }

    pub fn attr_text(&self, name: &str) -> Option<&str> {
        match self.attributes.get(name) {
            Some(Value::Text(s)) => Some(s),
            _ => None,
        }
    }
}

/// Everything policies may condition on: the requesting user and the API
/// the request came through.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestContext {
    pub user: UserContext,
    pub api: ApiId,
}

impl RequestContext {
    pub fn new(user: UserContext, api: impl Into<ApiId>) -> RequestContext {
        RequestContext {
            user,
            api: api.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("registry is sealed; register policies before building the engine")]
    Sealed,
    #[error("a policy named {0} is already registered")]
    DuplicatePolicy(String),
    #[error("selector must contain at least one entry")]
    EmptySelector,
    #[error("policy {policy} failed: {source}")]
    PolicyFault {
        policy: String,
        #[source]
        source: Box<EngineError>,
    },
    #[error("policy {policy} wrote outside its selector: {detail}")]
    ScopeViolation { policy: String, detail: String },
    #[error("{0}")]
    Body(String),
}

impl EngineError {
    /// An ad-hoc failure raised inside a policy body.
    pub fn body(message: impl Into<String>) -> EngineError {
        EngineError::Body(message.into())
    }
}
