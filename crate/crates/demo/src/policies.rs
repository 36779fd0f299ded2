//! The field policies each scenario registers.
//!
//! Bodies are plain functions over the query/result plus the request
//! context and privileged store access. Conventions shared by all of them:
//! anonymous requests are cut down to nothing by the pre phase, and post
//! bodies only rewrite cells their selector covers.

use std::collections::HashSet;

use fieldgate_core::policy::{
    EngineError, Policy, Privileged, RequestContext, Selector,
};
use fieldgate_core::query::{col, Predicate, Query, Transform};
use fieldgate_core::store::ResultSet;
use fieldgate_core::value::Value;

use crate::scenario::PolicySpec;

/// How the intranet address policy decides who sees a coarser address:
/// befriended users keep the district, everyone else gets the city.
/// The department variant keys on shared department instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressGranularity {
    ByFriendship,
    ByDepartment,
}

pub fn intranet_specs(granularity: AddressGranularity) -> Vec<PolicySpec> {
    let mut specs = vec![
        PolicySpec::new("friend_ages_only", || {
            Policy::pre(
                "friend_ages_only",
                Selector::column("User", "age"),
                friend_ages_body,
            )
            .for_apis(["friend_ages"])
        }),
        PolicySpec::new("user_name_age_link", || {
            Policy::pre(
                "user_name_age_link",
                Selector::columns(&[("User", "name"), ("User", "age")]),
                name_age_link_body,
            )
        }),
        PolicySpec::new("avg_salary_release", || {
            Policy::pre(
                "avg_salary_release",
                Selector::transformed("Payroll", "salary", Transform::Avg),
                avg_salary_body,
            )
        }),
        PolicySpec::new("address_visibility", || {
            Policy::pre(
                "address_visibility",
                Selector::column("User", "address"),
                authenticated_only_body,
            )
        }),
    ];
    specs.push(match granularity {
        AddressGranularity::ByFriendship => PolicySpec::new("address_granularity", || {
            Policy::post(
                "address_granularity",
                Selector::column("User", "address"),
                address_mask_friend_body,
            )
        }),
        AddressGranularity::ByDepartment => PolicySpec::new("address_granularity", || {
            Policy::post(
                "address_granularity",
                Selector::column("User", "address"),
                address_mask_dept_body,
            )
        }),
    });
    specs.extend([
        PolicySpec::new("events_invited", || {
            Policy::pre(
                "events_invited",
                Selector::table("EventCalendar"),
                events_invited_body,
            )
        }),
        PolicySpec::new("events_deletable", || {
            Policy::pre(
                "events_deletable",
                Selector::table("EventCalendar"),
                events_deletable_body,
            )
            .for_apis(["delete_events"])
        }),
        PolicySpec::new("events_location_pass", || {
            Policy::pre(
                "events_location_pass",
                Selector::table("EventCalendar"),
                authenticated_only_body,
            )
            .for_apis(["get_location_events"])
        }),
        PolicySpec::new("events_location_mask", || {
            Policy::post(
                "events_location_mask",
                Selector::table("EventCalendar"),
                events_location_mask_body,
            )
            .for_apis(["get_location_events"])
        }),
    ]);
    specs
}

pub fn social_specs() -> Vec<PolicySpec> {
    vec![
        PolicySpec::new("posts_follow", || {
            Policy::pre("posts_follow", Selector::table("Post"), posts_follow_body)
        }),
        PolicySpec::new("posts_profile_msg", || {
            Policy::post(
                "posts_profile_msg",
                Selector::table("Post"),
                posts_profile_msg_body,
            )
            .for_apis(["profile_view"])
        }),
        PolicySpec::new("user_visible", || {
            Policy::pre("user_visible", Selector::table("User"), authenticated_only_body)
        }),
    ]
}

pub const WIDE_DEFAULT_CONDITIONS: usize = 16;

/// The guard predicate the wide scenario's policy injects: a conjunction of
/// `n` per-column bounds. Also used by the baseline to price what an inline
/// check of the same complexity costs.
pub fn wide_conditions(n: usize) -> Predicate {
    let mut p = Predicate::True;
    for i in 0..n.min(crate::seed::WIDE_COLUMNS) {
        p = p.and_with(Predicate::ge(col("Wide1", format!("c{i:03}")), 0));
    }
    p
}

pub fn wide_specs(conditions: usize) -> Vec<PolicySpec> {
    vec![PolicySpec::new("wide_guard", move || {
        Policy::pre(
            "wide_guard",
            Selector::table("Wide1"),
            move |q: Query, _: &RequestContext, _: &Privileged| Ok(q.filter(wide_conditions(conditions))),
        )
    })]
}

// --- shared helpers -------------------------------------------------------

/// Authenticated requests pass through; anonymous ones keep the query shape
/// but lose every row.
fn authenticated_only_body(
    q: Query,
    ctx: &RequestContext,
    _: &Privileged,
) -> Result<Query, EngineError> {
    if ctx.user.is_authenticated() {
        Ok(q)
    } else {
        Ok(q.none())
    }
}

fn int_column_set(rs: &ResultSet) -> HashSet<i64> {
    rs.rows()
        .iter()
        .filter_map(|r| match r.first() {
            Some(Value::Int(i)) => Some(*i),
            _ => None,
        })
        .collect()
}

fn friend_ids(store: &Privileged, me: i64) -> Result<HashSet<i64>, EngineError> {
    let q = Query::all("Friends")
        .values(&["fid"])?
        .filter(Predicate::eq(col("Friends", "uid"), me));
    Ok(int_column_set(&store.execute(&q)?))
}

fn without_street(addr: &str) -> String {
    match addr.split_once(", ") {
        Some((_, rest)) => rest.to_string(),
        None => addr.to_string(),
    }
}

fn city_only(addr: &str) -> String {
    addr.rsplit(", ").next().unwrap_or(addr).to_string()
}

// --- intranet bodies ------------------------------------------------------

fn friend_ages_body(q: Query, ctx: &RequestContext, _: &Privileged) -> Result<Query, EngineError> {
    let Some(me) = ctx.user.id() else {
        return Ok(q.none());
    };
    let friends = Query::all("Friends")
        .values(&["fid"])?
        .filter(Predicate::eq(col("Friends", "uid"), me));
    Ok(q.filter(Predicate::in_subquery(col("User", "id"), friends)?))
}

/// The name/age pair identifies people; only HR may see it across the
/// directory. Everyone else is narrowed to their own row — including in
/// predicates, since this policy matches queries that merely filter on age.
fn name_age_link_body(q: Query, ctx: &RequestContext, _: &Privileged) -> Result<Query, EngineError> {
    match ctx.user.id() {
        None => Ok(q.none()),
        Some(_) if ctx.user.attr_text("dept") == Some("HR") => Ok(q),
        Some(me) => Ok(q.filter(Predicate::eq(col("User", "id"), me))),
    }
}

/// Managers see the true average; everyone else sees the average with
/// managers' own salaries excluded; anonymous callers see nothing.
fn avg_salary_body(q: Query, ctx: &RequestContext, store: &Privileged) -> Result<Query, EngineError> {
    let Some(me) = ctx.user.id() else {
        return Ok(q.none());
    };
    let manages_someone = Query::all("Payroll").filter(Predicate::eq(col("Payroll", "mgid"), me));
    if store.exists(&manages_someone)? {
        return Ok(q);
    }
    let managers = Query::all("Payroll").values(&["mgid"])?;
    Ok(q.exclude(Predicate::in_subquery(col("Payroll", "id"), managers)?))
}

fn address_mask_friend_body(
    rs: ResultSet,
    ctx: &RequestContext,
    store: &Privileged,
) -> Result<ResultSet, EngineError> {
    let me = ctx.user.id();
    let peers = match me {
        Some(id) => friend_ids(store, id)?,
        None => HashSet::new(),
    };
    Ok(mask_addresses(rs, me, &peers))
}

fn address_mask_dept_body(
    rs: ResultSet,
    ctx: &RequestContext,
    store: &Privileged,
) -> Result<ResultSet, EngineError> {
    let me = ctx.user.id();
    let peers = match ctx.user.attr_text("dept") {
        Some(dept) => {
            let q = Query::all("User")
                .values(&["id"])?
                .filter(Predicate::eq(col("User", "dept"), dept));
            int_column_set(&store.execute(&q)?)
        }
        None => HashSet::new(),
    };
    Ok(mask_addresses(rs, me, &peers))
}

/// Own row keeps the full address, peers keep district and city, everyone
/// else is reduced to the city. Rows that cannot be attributed (no id in
/// the result) are treated as strangers.
fn mask_addresses(mut rs: ResultSet, me: Option<i64>, peers: &HashSet<i64>) -> ResultSet {
    for i in 0..rs.row_count() {
        let row_id = match rs.value(i, "id") {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        };
        if row_id.is_some() && row_id == me {
            continue;
        }
        let Some(Value::Text(addr)) = rs.value(i, "address") else {
            continue;
        };
        let addr = addr.clone();
        let masked = if row_id.is_some_and(|r| peers.contains(&r)) {
            without_street(&addr)
        } else {
            city_only(&addr)
        };
        rs.set_value(i, "address", Value::Text(masked));
    }
    rs
}

fn events_invited_body(q: Query, ctx: &RequestContext, _: &Privileged) -> Result<Query, EngineError> {
    let Some(me) = ctx.user.id() else {
        return Ok(q.none());
    };
    let invited = Query::all("Invitee")
        .values(&["eid"])?
        .filter(Predicate::eq(col("Invitee", "empid"), me));
    Ok(q.filter(Predicate::in_subquery(col("EventCalendar", "eid"), invited)?))
}

fn events_deletable_body(
    q: Query,
    ctx: &RequestContext,
    _: &Privileged,
) -> Result<Query, EngineError> {
    let Some(me) = ctx.user.id() else {
        return Ok(q.none());
    };
    Ok(q.filter(Predicate::eq(col("EventCalendar", "orgid"), me)))
}

/// Events the caller is not invited to (and does not organize) stay in the
/// listing, but their subject is blinded and the organizer zeroed.
fn events_location_mask_body(
    mut rs: ResultSet,
    ctx: &RequestContext,
    store: &Privileged,
) -> Result<ResultSet, EngineError> {
    let Some(me) = ctx.user.id() else {
        return Ok(rs);
    };
    let invited_q = Query::all("Invitee")
        .values(&["eid"])?
        .filter(Predicate::eq(col("Invitee", "empid"), me));
    let invited = int_column_set(&store.execute(&invited_q)?);
    for i in 0..rs.row_count() {
        let eid = match rs.value(i, "eid") {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        };
        let orgid = match rs.value(i, "orgid") {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        };
        let visible = eid.is_some_and(|e| invited.contains(&e)) || orgid == Some(me);
        if !visible {
            rs.set_value(i, "event", Value::Text("Private event".into()));
            rs.set_value(i, "orgid", Value::Int(0));
        }
    }
    Ok(rs)
}

// --- social bodies --------------------------------------------------------

fn posts_follow_body(q: Query, ctx: &RequestContext, _: &Privileged) -> Result<Query, EngineError> {
    let Some(me) = ctx.user.id() else {
        return Ok(q.none());
    };
    let followed = Query::all("Follow")
        .values(&["fid"])?
        .filter(Predicate::eq(col("Follow", "uid"), me));
    Ok(q.filter(Predicate::in_subquery(col("Post", "user"), followed)?))
}

/// Replace an empty post listing wholesale, so profile pages do not reveal
/// whether a non-followed user has posts at all.
fn posts_profile_msg_body(
    rs: ResultSet,
    _: &RequestContext,
    _: &Privileged,
) -> Result<ResultSet, EngineError> {
    if rs.is_empty() && !rs.is_message() {
        Ok(ResultSet::message("Follow user to see the posts"))
    } else {
        Ok(rs)
    }
}
