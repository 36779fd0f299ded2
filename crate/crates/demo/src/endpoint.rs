//! HTTP-facing endpoints, each carrying two implementations of the same
//! contract: one through the policy engine and one with inline checks
//! ([`crate::baseline`]). Keeping both behind one trait object lets the
//! service, the equivalence runner, and the bench driver treat them
//! uniformly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use fieldgate_core::policy::{ApiId, Engine, EngineError, RequestContext, UserContext};
use fieldgate_core::query::{col, Predicate, Query, QueryError, Transform};
use fieldgate_core::store::{Database, StoreError};
use fieldgate_core::value::Value;
use thiserror::Error;

use crate::baseline;
use crate::policies::AddressGranularity;

/// Path/query parameters, already flattened to strings.
pub type Params = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("bad request: {0}")]
    BadRequest(String),
}

/// One API of the demo application.
///
/// `plan` names the queries a request issues; the default `enforced` runs
/// them through the engine and shapes the response (single query -> bare
/// result, several -> object keyed by query name). `baseline` answers the
/// same request with inline checks against the raw store and must produce
/// byte-identical JSON.
pub trait Endpoint: Send + Sync {
    fn api(&self) -> ApiId;
    fn route(&self) -> &'static str;
    fn summary(&self) -> &'static str;

    /// Parameter sets worth exercising against a given dataset.
    fn sample_params(&self, db: &Database) -> Vec<Params>;

    fn plan(&self, params: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError>;

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        params: &Params,
    ) -> Result<serde_json::Value, EndpointError>;

    fn enforced(
        &self,
        engine: &Engine,
        ctx: &RequestContext,
        params: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        let mut plan = self.plan(params)?;
        if plan.len() == 1 {
            let (_, query) = plan.pop().expect("plan checked non-empty");
            return Ok(engine.enforce(&query, ctx)?.to_json());
        }
        let mut out = serde_json::Map::new();
        for (name, query) in plan {
            out.insert(name.to_string(), engine.enforce(&query, ctx)?.to_json());
        }
        Ok(serde_json::Value::Object(out))
    }
}

pub fn intranet_endpoints(granularity: AddressGranularity) -> Vec<Arc<dyn Endpoint>> {
    vec![
        Arc::new(FriendAges),
        Arc::new(ListUsers { granularity }),
        Arc::new(AvgSalary),
        Arc::new(ListAddresses { granularity }),
        Arc::new(GetEvents),
        Arc::new(DeleteEvents),
        Arc::new(LocationEvents),
        Arc::new(ListInvitees),
    ]
}

pub fn social_endpoints() -> Vec<Arc<dyn Endpoint>> {
    vec![
        Arc::new(PostsView),
        Arc::new(ProfileView),
        Arc::new(BrowseUsers),
    ]
}

pub fn wide_endpoints() -> Vec<Arc<dyn Endpoint>> {
    vec![wide_endpoint(crate::policies::WIDE_DEFAULT_CONDITIONS)]
}

/// A wide-table endpoint whose inline checks cover `conditions` columns, for
/// pairing with [`crate::policies::wide_specs`] at the same width.
pub fn wide_endpoint(conditions: usize) -> Arc<dyn Endpoint> {
    Arc::new(WideView { conditions })
}

fn no_params(_: &Database) -> Vec<Params> {
    vec![Params::new()]
}

fn single_param(key: &str, value: impl Into<String>) -> Params {
    let mut params = Params::new();
    params.insert(key.to_string(), value.into());
    params
}

fn require<'a>(params: &'a Params, key: &str) -> Result<&'a str, EndpointError> {
    params
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| EndpointError::BadRequest(format!("missing parameter `{key}`")))
}

fn require_int(params: &Params, key: &str) -> Result<i64, EndpointError> {
    require(params, key)?
        .parse()
        .map_err(|_| EndpointError::BadRequest(format!("parameter `{key}` must be an integer")))
}

// --- intranet ---------------------------------------------------------------

struct FriendAges;

impl Endpoint for FriendAges {
    fn api(&self) -> ApiId {
        "friend_ages".into()
    }

    fn route(&self) -> &'static str {
        "/ages"
    }

    fn summary(&self) -> &'static str {
        "ids and ages, released for the caller's friends only"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("ages", Query::all("User").values(&["id", "age"])?)])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::friend_ages(db, user)
    }
}

struct ListUsers {
    granularity: AddressGranularity,
}

impl Endpoint for ListUsers {
    fn api(&self) -> ApiId {
        "list_users".into()
    }

    fn route(&self) -> &'static str {
        "/users"
    }

    fn summary(&self) -> &'static str {
        "full directory rows; the name/age pair narrows to HR or self"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("users", Query::all("User"))])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::list_users(db, user, self.granularity)
    }
}

struct AvgSalary;

impl Endpoint for AvgSalary {
    fn api(&self) -> ApiId {
        "avg_salary".into()
    }

    fn route(&self) -> &'static str {
        "/payroll/average"
    }

    fn summary(&self) -> &'static str {
        "company-wide salary average; managers' rows hidden from non-managers"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![(
            "average",
            Query::all("Payroll").aggregate(Transform::Avg, "salary")?,
        )])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::avg_salary(db, user)
    }
}

struct ListAddresses {
    granularity: AddressGranularity,
}

impl Endpoint for ListAddresses {
    fn api(&self) -> ApiId {
        "list_addresses".into()
    }

    fn route(&self) -> &'static str {
        "/addresses"
    }

    fn summary(&self) -> &'static str {
        "addresses coarsened by relationship to the caller"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![(
            "addresses",
            Query::all("User").values(&["id", "address"])?,
        )])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::list_addresses(db, user, self.granularity)
    }
}

struct GetEvents;

impl Endpoint for GetEvents {
    fn api(&self) -> ApiId {
        "get_events".into()
    }

    fn route(&self) -> &'static str {
        "/events"
    }

    fn summary(&self) -> &'static str {
        "calendar entries the caller is invited to"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("events", Query::all("EventCalendar"))])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::get_events(db, user)
    }
}

struct DeleteEvents;

impl Endpoint for DeleteEvents {
    fn api(&self) -> ApiId {
        "delete_events".into()
    }

    fn route(&self) -> &'static str {
        "/events/deletable"
    }

    fn summary(&self) -> &'static str {
        "calendar entries the caller may delete (their own)"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("deletable", Query::all("EventCalendar"))])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::delete_events(db, user)
    }
}

struct LocationEvents;

impl Endpoint for LocationEvents {
    fn api(&self) -> ApiId {
        "get_location_events".into()
    }

    fn route(&self) -> &'static str {
        "/events/location/{loc}"
    }

    fn summary(&self) -> &'static str {
        "everything booked at a location, with uninvited events blinded"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        let mut locations = BTreeSet::new();
        if let Ok(query) = Query::all("EventCalendar").values(&["location"]) {
            if let Ok(rs) = db.execute(&query) {
                for row in rs.rows() {
                    if let Some(Value::Text(loc)) = row.first() {
                        locations.insert(loc.clone());
                    }
                }
            }
        }
        let mut out: Vec<Params> = locations
            .into_iter()
            .take(3)
            .map(|loc| single_param("loc", loc))
            .collect();
        out.push(single_param("loc", "Nowhere Hall"));
        out
    }

    fn plan(&self, params: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        let loc = require(params, "loc")?;
        Ok(vec![(
            "events",
            Query::all("EventCalendar")
                .filter(Predicate::eq(col("EventCalendar", "location"), loc)),
        )])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        params: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::location_events(db, user, require(params, "loc")?)
    }
}

struct ListInvitees;

impl Endpoint for ListInvitees {
    fn api(&self) -> ApiId {
        "list_invitees".into()
    }

    fn route(&self) -> &'static str {
        "/invitees"
    }

    fn summary(&self) -> &'static str {
        "raw invitation table; no policy releases it, so it always comes back empty"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("invitees", Query::all("Invitee"))])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::list_invitees(db, user)
    }
}

// --- social -----------------------------------------------------------------

struct PostsView;

impl Endpoint for PostsView {
    fn api(&self) -> ApiId {
        "posts_view".into()
    }

    fn route(&self) -> &'static str {
        "/posts"
    }

    fn summary(&self) -> &'static str {
        "the caller's feed: posts by people they follow"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("posts", Query::all("Post"))])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::posts_view(db, user)
    }
}

struct ProfileView;

impl Endpoint for ProfileView {
    fn api(&self) -> ApiId {
        "profile_view".into()
    }

    fn route(&self) -> &'static str {
        "/profile/{uid}"
    }

    fn summary(&self) -> &'static str {
        "one user's profile and posts; posts are replaced by a notice unless followed"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        let mut out: Vec<Params> = crate::seed::user_ids(db, 4)
            .into_iter()
            .map(|id| single_param("uid", id.to_string()))
            .collect();
        out.push(single_param("uid", "999999"));
        out
    }

    fn plan(&self, params: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        let uid = require_int(params, "uid")?;
        Ok(vec![
            (
                "profile",
                Query::all("User").filter(Predicate::eq(col("User", "id"), uid)),
            ),
            (
                "posts",
                Query::all("Post").filter(Predicate::eq(col("Post", "user"), uid)),
            ),
        ])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        params: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::profile_view(db, user, require_int(params, "uid")?)
    }
}

struct BrowseUsers;

impl Endpoint for BrowseUsers {
    fn api(&self) -> ApiId {
        "browse_users".into()
    }

    fn route(&self) -> &'static str {
        "/users"
    }

    fn summary(&self) -> &'static str {
        "member directory, signed-in users only"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("users", Query::all("User"))])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::browse_users(db, user)
    }
}

// --- wide -------------------------------------------------------------------

struct WideView {
    conditions: usize,
}

impl Endpoint for WideView {
    fn api(&self) -> ApiId {
        "wide_view".into()
    }

    fn route(&self) -> &'static str {
        "/wide"
    }

    fn summary(&self) -> &'static str {
        "id and first column of the wide table, guarded by a conjunction of bounds"
    }

    fn sample_params(&self, db: &Database) -> Vec<Params> {
        no_params(db)
    }

    fn plan(&self, _: &Params) -> Result<Vec<(&'static str, Query)>, EndpointError> {
        Ok(vec![("wide", Query::all("Wide1").values(&["id", "c000"])?)])
    }

    fn baseline(
        &self,
        db: &Database,
        user: &UserContext,
        _: &Params,
    ) -> Result<serde_json::Value, EndpointError> {
        baseline::wide_view(db, user, self.conditions)
    }
}
