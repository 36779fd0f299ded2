//! The enforcement pipeline.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::query::Query;
use crate::schema::SchemaCatalog;
use crate::store::{Database, ResultSet};

use super::registry::{Policy, PolicyBody, PolicyPhase, PolicyRegistry, Selection, SelectionKind};
use super::{EngineError, RequestContext};

/// Store access handed to policy bodies. Queries made through it bypass
/// enforcement (bodies implement policy; they are not subject to it) and are
/// counted separately from application executions.
///
/// Only the engine can construct one, so application code cannot acquire
/// privileged access by importing a type.
pub struct Privileged {
    db: Arc<Database>,
}

impl Privileged {
    pub(crate) fn new(db: Arc<Database>) -> Privileged {
        Privileged { db }
    }

    pub fn execute(&self, query: &Query) -> Result<ResultSet, EngineError> {
        Ok(self.db.execute_privileged(query)?)
    }

    pub fn exists(&self, query: &Query) -> Result<bool, EngineError> {
        Ok(self.db.exists_privileged(query)?)
    }

    pub fn catalog(&self) -> &SchemaCatalog {
        self.db.catalog()
    }
}

/// The rewrite applied when no policy matches a query: same shape, no rows.
pub fn default_deny(query: &Query) -> Query {
    query.clone().none()
}

/// Wall-clock cost of one enforcement, split by stage. `execute_ns` is the
/// store's work; the other three are enforcement overhead.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EnforceMetrics {
    /// Field extraction plus policy selection for both phases.
    pub selection_ns: u64,
    /// Pre-phase bodies (query rewriting).
    pub rewrite_ns: u64,
    /// The single store execution.
    pub execute_ns: u64,
    /// Post-phase bodies (result transformation).
    pub post_ns: u64,
}

impl EnforceMetrics {
    /// Time spent on policy work, excluding the store execution.
    pub fn policy_ns(&self) -> u64 {
        self.selection_ns + self.rewrite_ns + self.post_ns
    }

    pub fn total_ns(&self) -> u64 {
        self.policy_ns() + self.execute_ns
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyRef {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseTrace {
    pub selection: &'static str,
    pub policies: Vec<PolicyRef>,
}

/// A record of every decision one enforcement made, for `explain`-style
/// tooling and debugging.
#[derive(Debug, Clone, Serialize)]
pub struct EnforceTrace {
    pub api: String,
    pub user: Option<i64>,
    pub fields: Vec<String>,
    pub pre: PhaseTrace,
    pub post: PhaseTrace,
    pub sql_requested: String,
    pub sql_executed: String,
    pub rows_fetched: usize,
    pub rows_returned: usize,
}

/// The mediator between application code and the store.
///
/// Construction seals the registry: the policy set is fixed for the engine's
/// lifetime. Handlers hold only an `&Engine` — there is no way to reach the
/// store through it except [`Engine::enforce`].
pub struct Engine {
    db: Arc<Database>,
    registry: PolicyRegistry,
    scope_checks: bool,
    enforces: AtomicU64,
}

impl Engine {
    pub fn new(db: Arc<Database>, mut registry: PolicyRegistry) -> Engine {
        registry.seal();
        Engine {
            db,
            registry,
            scope_checks: false,
            enforces: AtomicU64::new(0),
        }
    }

    /// Verify after each post-phase body that it only rewrote cells its
    /// selector covers. Costs a result clone per body; meant for development
    /// and tests, not production traffic.
    pub fn with_scope_checks(mut self, on: bool) -> Engine {
        self.scope_checks = on;
        self
    }

    pub fn registry(&self) -> &PolicyRegistry {
        &self.registry
    }

    pub fn catalog(&self) -> &SchemaCatalog {
        self.db.catalog()
    }

    /// How many enforcements completed successfully.
    pub fn enforce_calls(&self) -> u64 {
        self.enforces.load(Ordering::Relaxed)
    }

    /// Enforce all matching policies on `query` and return the governed
    /// result. The store executes exactly one application query per call.
    pub fn enforce(&self, query: &Query, ctx: &RequestContext) -> Result<ResultSet, EngineError> {
        self.run(query, ctx, false).map(|(rs, _, _)| rs)
    }

    /// Like [`Engine::enforce`], also reporting what was decided and why.
    pub fn enforce_traced(
        &self,
        query: &Query,
        ctx: &RequestContext,
    ) -> Result<(ResultSet, EnforceTrace), EngineError> {
        let (rs, trace, _) = self.run(query, ctx, true)?;
        Ok((rs, trace.expect("trace was requested")))
    }

    /// Like [`Engine::enforce`], also reporting per-stage timings.
    pub fn enforce_metered(
        &self,
        query: &Query,
        ctx: &RequestContext,
    ) -> Result<(ResultSet, EnforceMetrics), EngineError> {
        let (rs, _, metrics) = self.run(query, ctx, false)?;
        Ok((rs, metrics))
    }

    fn run(
        &self,
        query: &Query,
        ctx: &RequestContext,
        want_trace: bool,
    ) -> Result<(ResultSet, Option<EnforceTrace>, EnforceMetrics), EngineError> {
        // Fields come from the query as the application wrote it. Rewrites
        // must not change which policies are considered to match.
        let select_started = Instant::now();
        let fields = query.fields_used(self.db.catalog())?;
        let pre = self.registry.select(&fields, &ctx.api, PolicyPhase::Pre, true);
        let post = self.registry.select(&fields, &ctx.api, PolicyPhase::Post, false);
        let selection_ns = elapsed_ns(select_started);

        let privileged = Privileged::new(self.db.clone());

        let rewrite_started = Instant::now();
        let mut effective = query.clone();
        if pre.kind == SelectionKind::DefaultDeny {
            effective = default_deny(&effective);
        } else {
            for (_, policy) in &pre.policies {
                let PolicyBody::Pre(body) = &policy.body else {
                    unreachable!("pre selection only yields pre policies")
                };
                effective = body
                    .apply(effective, ctx, &privileged)
                    .map_err(|e| fault(policy, e))?;
            }
        }
        let rewrite_ns = elapsed_ns(rewrite_started);

        let execute_started = Instant::now();
        let fetched = self.db.execute(&effective)?;
        let execute_ns = elapsed_ns(execute_started);
        let rows_fetched = fetched.row_count();

        let post_started = Instant::now();
        let mut result = fetched;
        for (_, policy) in &post.policies {
            let PolicyBody::Post(body) = &policy.body else {
                unreachable!("post selection only yields post policies")
            };
            let before = self.scope_checks.then(|| result.clone());
            result = body
                .apply(result, ctx, &privileged)
                .map_err(|e| fault(policy, e))?;
            if let Some(before) = &before {
                check_scope(policy, before, &result)?;
            }
        }
        let post_ns = elapsed_ns(post_started);

        self.enforces.fetch_add(1, Ordering::Relaxed);

        let trace = if want_trace {
            Some(EnforceTrace {
                api: ctx.api.to_string(),
                user: ctx.user.id(),
                fields: fields.iter().map(|f| f.to_string()).collect(),
                pre: phase_trace(&pre),
                post: phase_trace(&post),
                sql_requested: query.to_sql(self.db.catalog())?,
                sql_executed: effective.to_sql(self.db.catalog())?,
                rows_fetched,
                rows_returned: result.row_count(),
            })
        } else {
            None
        };
        let metrics = EnforceMetrics {
            selection_ns,
            rewrite_ns,
            execute_ns,
            post_ns,
        };
        Ok((result, trace, metrics))
    }
}

fn elapsed_ns(since: Instant) -> u64 {
    u64::try_from(since.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

fn fault(policy: &Policy, source: EngineError) -> EngineError {
    EngineError::PolicyFault {
        policy: policy.name().to_string(),
        source: Box::new(source),
    }
}

fn phase_trace(selection: &Selection<'_>) -> PhaseTrace {
    PhaseTrace {
        selection: selection.kind.as_str(),
        policies: selection
            .policies
            .iter()
            .map(|(index, p)| PolicyRef {
                index: *index,
                name: p.name().to_string(),
            })
            .collect(),
    }
}

fn check_scope(policy: &Policy, before: &ResultSet, after: &ResultSet) -> Result<(), EngineError> {
    let violation = |detail: String| EngineError::ScopeViolation {
        policy: policy.name().to_string(),
        detail,
    };
    if after.is_message() {
        // Wholesale replacement hides everything; nothing new can leak.
        return Ok(());
    }
    if after.header() != before.header() {
        return Err(violation("changed the result header".into()));
    }
    if after.row_count() > before.row_count() {
        return Err(violation("added rows".into()));
    }
    if after.row_count() == before.row_count() {
        for (i, (b, a)) in before.rows().iter().zip(after.rows()).enumerate() {
            for (j, field) in before.header().iter().enumerate() {
                if b[j] != a[j] && !policy.selector().covers_column(&field.column) {
                    return Err(violation(format!(
                        "modified {} in row {i}",
                        field.column
                    )));
                }
            }
        }
    }
    // Fewer rows reveal strictly less; allowed.
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Policy, PolicyRegistry, Selector, UserContext};
    use crate::query::{col, Predicate, Query};
    use crate::schema::TableSchema;
    use crate::value::{Value, ValueKind};

    fn db() -> Arc<Database> {
        let mut db = Database::new();
        db.create_table(
            TableSchema::new(
                "T",
                &[
                    ("id", ValueKind::Int),
                    ("x", ValueKind::Int),
                    ("y", ValueKind::Int),
                ],
                Some("id"),
            )
            .unwrap(),
        )
        .unwrap();
        for (id, x, y) in [(1, 10, 100), (2, 20, 200), (3, 30, 300)] {
            db.insert("T", vec![id.into(), x.into(), y.into()]).unwrap();
        }
        Arc::new(db)
    }

    fn ctx(id: i64) -> RequestContext {
        RequestContext::new(UserContext::authenticated(id), "api")
    }

    fn own_rows_only(
        q: Query,
        ctx: &RequestContext,
        _: &Privileged,
    ) -> Result<Query, EngineError> {
        let id = ctx.user.id().unwrap_or(-1);
        Ok(q.filter(Predicate::eq(col("T", "id"), id)))
    }

    #[test]
    fn pre_policies_rewrite_before_the_single_execution() {
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre("own_rows", Selector::column("T", "x"), own_rows_only))
            .unwrap();
        let engine = Engine::new(db.clone(), reg);

        let rs = engine.enforce(&Query::all("T"), &ctx(2)).unwrap();
        assert_eq!(rs.row_count(), 1);
        assert_eq!(rs.value(0, "x"), Some(&Value::Int(20)));

        let stats = db.stats();
        assert_eq!(stats.executes, 1, "exactly one application execution");
        assert_eq!(stats.privileged_executes, 0);
        assert_eq!(engine.enforce_calls(), 1);
    }

    #[test]
    fn unmatched_queries_deny_by_default() {
        let db = db();
        let engine = Engine::new(db, PolicyRegistry::new());
        let (rs, trace) = engine
            .enforce_traced(&Query::all("T"), &ctx(1))
            .unwrap();
        assert_eq!(rs.row_count(), 0);
        assert_eq!(rs.header().len(), 3, "shape survives denial");
        assert_eq!(trace.pre.selection, "default_deny");
        assert!(trace.pre.policies.is_empty());
        assert!(trace.sql_executed.contains("WHERE (1 = 0)"));
        assert_eq!(trace.post.selection, "unmatched");
    }

    #[test]
    fn post_policies_transform_with_privileged_access() {
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre(
            "allow",
            Selector::column("T", "x"),
            |q: Query, _: &RequestContext, _: &Privileged| Ok(q),
        ))
        .unwrap();
        reg.register(Policy::post(
            "mask_x",
            Selector::column("T", "x"),
            |mut rs: ResultSet, _: &RequestContext, store: &Privileged| {
                // A privileged read that is not an application execution.
                let _ = store.exists(&Query::all("T"))?;
                for i in 0..rs.row_count() {
                    rs.set_value(i, "x", Value::Int(0));
                }
                Ok(rs)
            },
        ))
        .unwrap();
        let engine = Engine::new(db.clone(), reg).with_scope_checks(true);

        let rs = engine.enforce(&Query::all("T"), &ctx(1)).unwrap();
        assert!(rs.rows().iter().all(|r| r[1] == Value::Int(0)));
        assert_eq!(db.stats().executes, 1);
        assert_eq!(db.stats().privileged_executes, 1);
    }

    #[test]
    fn scope_checks_catch_out_of_selector_writes() {
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre(
            "allow",
            Selector::column("T", "x"),
            |q: Query, _: &RequestContext, _: &Privileged| Ok(q),
        ))
        .unwrap();
        reg.register(Policy::post(
            "overreach",
            Selector::column("T", "x"),
            |mut rs: ResultSet, _: &RequestContext, _: &Privileged| {
                rs.set_value(0, "y", Value::Int(-1));
                Ok(rs)
            },
        ))
        .unwrap();
        let engine = Engine::new(db, reg).with_scope_checks(true);
        let err = engine.enforce(&Query::all("T"), &ctx(1)).unwrap_err();
        match err {
            EngineError::ScopeViolation { policy, detail } => {
                assert_eq!(policy, "overreach");
                assert!(detail.contains("T.y"), "detail: {detail}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn message_replacement_passes_scope_checks() {
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre(
            "allow",
            Selector::column("T", "x"),
            |q: Query, _: &RequestContext, _: &Privileged| Ok(q),
        ))
        .unwrap();
        reg.register(Policy::post(
            "replace",
            Selector::column("T", "x"),
            |_: ResultSet, _: &RequestContext, _: &Privileged| {
                Ok(ResultSet::message("nothing to see"))
            },
        ))
        .unwrap();
        let engine = Engine::new(db, reg).with_scope_checks(true);
        let rs = engine.enforce(&Query::all("T"), &ctx(1)).unwrap();
        assert_eq!(rs.message_text(), Some("nothing to see"));
    }

    #[test]
    fn body_failures_name_the_policy() {
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre(
            "fragile",
            Selector::column("T", "x"),
            |_: Query, _: &RequestContext, _: &Privileged| Err(EngineError::body("boom")),
        ))
        .unwrap();
        let engine = Engine::new(db.clone(), reg);
        let err = engine.enforce(&Query::all("T"), &ctx(1)).unwrap_err();
        match err {
            EngineError::PolicyFault { policy, source } => {
                assert_eq!(policy, "fragile");
                assert!(matches!(*source, EngineError::Body(_)));
            }
            other => panic!("unexpected error {other:?}"),
        }
        // A failed enforcement executes nothing and is not counted.
        assert_eq!(db.stats().executes, 0);
        assert_eq!(engine.enforce_calls(), 0);
    }

    #[test]
    fn traces_record_both_phases_and_sql() {
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre("own_rows", Selector::column("T", "x"), own_rows_only))
            .unwrap();
        let engine = Engine::new(db, reg);
        let (_, trace) = engine
            .enforce_traced(&Query::all("T").values(&["x"]).unwrap(), &ctx(3))
            .unwrap();
        assert_eq!(trace.api, "api");
        assert_eq!(trace.user, Some(3));
        assert_eq!(trace.fields, ["T.x"]);
        assert_eq!(trace.pre.selection, "generic");
        assert_eq!(trace.pre.policies[0].name, "own_rows");
        assert_eq!(trace.sql_requested, "SELECT x FROM T ORDER BY id");
        assert_eq!(trace.sql_executed, "SELECT x FROM T WHERE (id = 3) ORDER BY id");
        assert_eq!(trace.rows_fetched, 1);
        assert_eq!(trace.rows_returned, 1);
        let json = serde_json::to_value(&trace).unwrap();
        assert_eq!(json["pre"]["selection"], "generic");
        assert_eq!(json["post"]["selection"], "unmatched");
    }

    #[test]
    fn rewrites_do_not_change_policy_selection() {
        // A pre body that narrows the query to a field with stricter
        // policies must not cause those policies to fire: selection is
        // based on the original query.
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre(
            "narrow_to_y",
            Selector::column("T", "x"),
            |q: Query, _: &RequestContext, _: &Privileged| {
                Ok(q.filter(Predicate::gt(col("T", "y"), 100)))
            },
        ))
        .unwrap();
        reg.register(Policy::pre(
            "deny_y",
            Selector::column("T", "y"),
            |q: Query, _: &RequestContext, _: &Privileged| Ok(q.none()),
        ))
        .unwrap();
        let engine = Engine::new(db, reg);
        let q = Query::all("T").values(&["x"]).unwrap();
        let (rs, trace) = engine.enforce_traced(&q, &ctx(1)).unwrap();
        // deny_y did not run even though the rewritten query touches y.
        assert_eq!(trace.pre.policies.len(), 1);
        assert_eq!(trace.pre.policies[0].name, "narrow_to_y");
        assert_eq!(rs.row_count(), 2);
    }

    #[test]
    fn metrics_cover_all_stages() {
        let db = db();
        let mut reg = PolicyRegistry::new();
        reg.register(Policy::pre("own_rows", Selector::column("T", "x"), own_rows_only))
            .unwrap();
        let engine = Engine::new(db, reg);
        let (_, m) = engine.enforce_metered(&Query::all("T"), &ctx(1)).unwrap();
        assert!(m.execute_ns > 0);
        assert!(m.total_ns() >= m.policy_ns());
    }
}
