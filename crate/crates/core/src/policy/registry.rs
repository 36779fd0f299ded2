//! Policies, their bodies, and the registry they are selected from.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::query::{FieldUse, Query};
use crate::store::ResultSet;

use super::engine::Privileged;
use super::selector::Selector;
use super::{ApiId, EngineError, RequestContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyPhase {
    /// Rewrites the query before it executes.
    Pre,
    /// Transforms the fetched result.
    Post,
}

/// A pre-phase policy body. Bodies run with privileged store access and are
/// not themselves subject to enforcement.
pub trait PreBody: Send + Sync {
    fn apply(
        &self,
        query: Query,
        ctx: &RequestContext,
        store: &Privileged,
    ) -> Result<Query, EngineError>;
}

impl<F> PreBody for F
where
    F: Fn(Query, &RequestContext, &Privileged) -> Result<Query, EngineError> + Send + Sync,
{
    fn apply(
        &self,
        query: Query,
        ctx: &RequestContext,
        store: &Privileged,
    ) -> Result<Query, EngineError> {
        self(query, ctx, store)
    }
}

/// A post-phase policy body.
pub trait PostBody: Send + Sync {
    fn apply(
        &self,
        result: ResultSet,
        ctx: &RequestContext,
        store: &Privileged,
    ) -> Result<ResultSet, EngineError>;
}

impl<F> PostBody for F
where
    F: Fn(ResultSet, &RequestContext, &Privileged) -> Result<ResultSet, EngineError> + Send + Sync,
{
    fn apply(
        &self,
        result: ResultSet,
        ctx: &RequestContext,
        store: &Privileged,
    ) -> Result<ResultSet, EngineError> {
        self(result, ctx, store)
    }
}

pub(crate) enum PolicyBody {
    Pre(Box<dyn PreBody>),
    Post(Box<dyn PostBody>),
}

/// A named rule protecting the fields its selector names.
pub struct Policy {
    name: String,
    selector: Selector,
    apis: Option<BTreeSet<ApiId>>,
    pub(crate) body: PolicyBody,
}

impl Policy {
    pub fn pre(name: impl Into<String>, selector: Selector, body: impl PreBody + 'static) -> Policy {
        Policy {
            name: name.into(),
            selector,
            apis: None,
            body: PolicyBody::Pre(Box::new(body)),
        }
    }

    pub fn post(name: impl Into<String>, selector: Selector, body: impl PostBody + 'static) -> Policy {
        Policy {
            name: name.into(),
            selector,
            apis: None,
            body: PolicyBody::Post(Box::new(body)),
        }
    }

    /// Restrict the policy to the given APIs. Unrestricted policies are
    /// generic: they apply through every API, but step aside whenever an
    /// API-specific policy of the same phase matches the query.
    pub fn for_apis(mut self, apis: impl IntoIterator<Item = impl Into<ApiId>>) -> Policy {
        self.apis = Some(apis.into_iter().map(Into::into).collect());
        self
    }

    /// Wrap the body so `probe` is called with the policy's name every time
    /// it runs. Diagnostics and tests use this to observe which bodies
    /// actually execute.
    pub fn with_probe(mut self, probe: std::sync::Arc<dyn Fn(&str) + Send + Sync>) -> Policy {
        let name = self.name.clone();
        self.body = match self.body {
            PolicyBody::Pre(inner) => PolicyBody::Pre(Box::new(
                move |q: Query, ctx: &RequestContext, store: &Privileged| {
                    probe(&name);
                    inner.apply(q, ctx, store)
                },
            )),
            PolicyBody::Post(inner) => PolicyBody::Post(Box::new(
                move |rs: ResultSet, ctx: &RequestContext, store: &Privileged| {
                    probe(&name);
                    inner.apply(rs, ctx, store)
                },
            )),
        };
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn selector(&self) -> &Selector {
        &self.selector
    }

    pub fn phase(&self) -> PolicyPhase {
        match self.body {
            PolicyBody::Pre(_) => PolicyPhase::Pre,
            PolicyBody::Post(_) => PolicyPhase::Post,
        }
    }

    pub fn apis(&self) -> Option<&BTreeSet<ApiId>> {
        self.apis.as_ref()
    }

    fn is_api_specific(&self) -> bool {
        self.apis.is_some()
    }

    fn applies_to_api(&self, api: &ApiId) -> bool {
        match &self.apis {
            None => true,
            Some(apis) => apis.contains(api),
        }
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy")
            .field("name", &self.name)
            .field("phase", &self.phase())
            .field("selector", &self.selector.to_string())
            .field("apis", &self.apis)
            .finish_non_exhaustive()
    }
}

/// How a selection was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionKind {
    /// At least one policy pinned to the request's API matched; generic
    /// policies were displaced.
    ApiSpecific,
    /// Only generic policies matched.
    Generic,
    /// Nothing matched and the phase denies by default.
    DefaultDeny,
    /// Nothing matched and the phase passes through.
    Unmatched,
}

impl SelectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionKind::ApiSpecific => "api_specific",
            SelectionKind::Generic => "generic",
            SelectionKind::DefaultDeny => "default_deny",
            SelectionKind::Unmatched => "unmatched",
        }
    }
}

/// The policies chosen for one phase of one request, in registration order.
pub struct Selection<'a> {
    pub kind: SelectionKind,
    pub policies: Vec<(usize, &'a Policy)>,
}

/// All registered policies, in registration order. Registration happens at
/// startup; the registry is sealed before the first request and immutable
/// afterwards.
#[derive(Default)]
pub struct PolicyRegistry {
    policies: Vec<Policy>,
    sealed: bool,
}

impl PolicyRegistry {
    pub fn new() -> PolicyRegistry {
        PolicyRegistry::default()
    }

    /// Add a policy. Names must be unique; they identify policies in traces.
    pub fn register(&mut self, policy: Policy) -> Result<usize, EngineError> {
        if self.sealed {
            return Err(EngineError::Sealed);
        }
        if self.policies.iter().any(|p| p.name == policy.name) {
            return Err(EngineError::DuplicatePolicy(policy.name));
        }
        self.policies.push(policy);
        Ok(self.policies.len() - 1)
    }

    pub fn seal(&mut self) {
        self.sealed = true;
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn find(&self, name: &str) -> Option<(usize, &Policy)> {
        self.policies
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
    }

    /// The APIs referenced by at least one policy.
    pub fn known_apis(&self) -> HashSet<&ApiId> {
        self.policies
            .iter()
            .filter_map(|p| p.apis.as_ref())
            .flatten()
            .collect()
    }

    /// Select the policies governing a query whose used fields are `fields`,
    /// issued through `api`, for one phase.
    ///
    /// Matching API-specific policies displace all generic ones. When
    /// nothing matches, `use_default` decides between denial (pre phase:
    /// unmatched queries return nothing) and pass-through (post phase).
    pub fn select<'a>(
        &'a self,
        fields: &BTreeSet<FieldUse>,
        api: &ApiId,
        phase: PolicyPhase,
        use_default: bool,
    ) -> Selection<'a> {
        let mut api_specific = Vec::new();
        let mut generic = Vec::new();
        for (idx, policy) in self.policies.iter().enumerate() {
            if policy.phase() != phase
                || !policy.applies_to_api(api)
                || !policy.selector.matches(fields)
            {
                continue;
            }
            if policy.is_api_specific() {
                api_specific.push((idx, policy));
            } else {
                generic.push((idx, policy));
            }
        }
        if !api_specific.is_empty() {
            return Selection {
                kind: SelectionKind::ApiSpecific,
                policies: api_specific,
            };
        }
        if !generic.is_empty() {
            return Selection {
                kind: SelectionKind::Generic,
                policies: generic,
            };
        }
        Selection {
            kind: if use_default {
                SelectionKind::DefaultDeny
            } else {
                SelectionKind::Unmatched
            },
            policies: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::col;

    fn identity_pre(q: Query, _: &RequestContext, _: &Privileged) -> Result<Query, EngineError> {
        Ok(q)
    }

    fn field_set(cols: &[(&str, &str)]) -> BTreeSet<FieldUse> {
        cols.iter()
            .map(|(t, c)| FieldUse::plain(col(*t, *c)))
            .collect()
    }

    #[test]
    fn api_specific_policies_displace_all_generics() {
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre("generic_a", Selector::column("T", "x"), identity_pre))
            .unwrap();
        reg.register(
            Policy::pre("special", Selector::column("T", "x"), identity_pre)
                .for_apis(["report"]),
        )
        .unwrap();
        reg.register(Policy::pre("generic_b", Selector::column("T", "x"), identity_pre))
            .unwrap();

        let fields = field_set(&[("T", "x")]);
        let through_report = reg.select(&fields, &"report".into(), PolicyPhase::Pre, true);
        assert_eq!(through_report.kind, SelectionKind::ApiSpecific);
        let names: Vec<&str> = through_report.policies.iter().map(|(_, p)| p.name()).collect();
        assert_eq!(names, ["special"]);

        let through_other = reg.select(&fields, &"other".into(), PolicyPhase::Pre, true);
        assert_eq!(through_other.kind, SelectionKind::Generic);
        let names: Vec<&str> = through_other.policies.iter().map(|(_, p)| p.name()).collect();
        assert_eq!(names, ["generic_a", "generic_b"]);
    }

    #[test]
    fn no_match_denies_pre_and_passes_post() {
        let reg = PolicyRegistry::new();
        let fields = field_set(&[("T", "x")]);
        let pre = reg.select(&fields, &"any".into(), PolicyPhase::Pre, true);
        assert_eq!(pre.kind, SelectionKind::DefaultDeny);
        assert!(pre.policies.is_empty());
        let post = reg.select(&fields, &"any".into(), PolicyPhase::Post, false);
        assert_eq!(post.kind, SelectionKind::Unmatched);
    }

    #[test]
    fn selection_is_per_phase() {
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre("rewrite", Selector::column("T", "x"), identity_pre))
            .unwrap();
        let fields = field_set(&[("T", "x")]);
        let post = reg.select(&fields, &"any".into(), PolicyPhase::Post, false);
        assert_eq!(post.kind, SelectionKind::Unmatched);
    }

    #[test]
    fn registration_is_name_unique_and_stops_at_seal() {
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre("p", Selector::column("T", "x"), identity_pre))
            .unwrap();
        assert!(matches!(
            reg.register(Policy::pre("p", Selector::column("T", "y"), identity_pre)),
            Err(EngineError::DuplicatePolicy(_))
        ));
        reg.seal();
        assert!(matches!(
            reg.register(Policy::pre("q", Selector::column("T", "x"), identity_pre)),
            Err(EngineError::Sealed)
        ));
    }
}
