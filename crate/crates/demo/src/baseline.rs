//! Inline-check implementations of every endpoint.
//!
//! These answer the same requests as the enforced path, but with the checks
//! hand-written into each handler the way an application without an
//! enforcement layer would do it: fetch, then filter or mask in code. They
//! deliberately do not call into the policy module; agreement between the
//! two paths is established by the equivalence suite, not by shared code.
//! The one exception is the wide scenario's guard predicate, which both
//! sides build with [`wide_conditions`] because it exists purely to price
//! predicate complexity.

use std::collections::HashSet;

use fieldgate_core::policy::UserContext;
use fieldgate_core::query::{col, Predicate, Query};
use fieldgate_core::store::{Database, ResultSet};
use fieldgate_core::value::Value;

use crate::endpoint::EndpointError;
use crate::policies::{wide_conditions, AddressGranularity};

type Json = serde_json::Value;

fn int_set(rs: &ResultSet) -> HashSet<i64> {
    rs.rows()
        .iter()
        .filter_map(|r| match r.first() {
            Some(Value::Int(i)) => Some(*i),
            _ => None,
        })
        .collect()
}

/// `SELECT out_col FROM table WHERE key_col = key` as a set of ids.
fn ids_matching(
    db: &Database,
    table: &str,
    key_col: &str,
    key: impl Into<Value>,
    out_col: &str,
) -> Result<HashSet<i64>, EndpointError> {
    let q = Query::all(table)
        .values(&[out_col])?
        .filter(Predicate::eq(col(table, key_col), key));
    Ok(int_set(&db.execute(&q)?))
}

fn row_int(row: &[Value], idx: Option<usize>) -> Option<i64> {
    match idx.and_then(|i| row.get(i)) {
        Some(Value::Int(v)) => Some(*v),
        _ => None,
    }
}

fn cell_int(rs: &ResultSet, row: usize, column: &str) -> Option<i64> {
    match rs.value(row, column) {
        Some(Value::Int(v)) => Some(*v),
        _ => None,
    }
}

// --- intranet ---------------------------------------------------------------

pub fn friend_ages(db: &Database, user: &UserContext) -> Result<Json, EndpointError> {
    let mut rs = db.execute(&Query::all("User").values(&["id", "age"])?)?;
    match user.id() {
        None => rs.retain_rows(|_| false),
        Some(me) => {
            let friends = ids_matching(db, "Friends", "uid", me, "fid")?;
            let id_idx = rs.column_index("id");
            rs.retain_rows(|row| row_int(row, id_idx).is_some_and(|id| friends.contains(&id)));
        }
    }
    Ok(rs.to_json())
}

pub fn list_users(
    db: &Database,
    user: &UserContext,
    granularity: AddressGranularity,
) -> Result<Json, EndpointError> {
    let mut rs = db.execute(&Query::all("User"))?;
    let Some(me) = user.id() else {
        rs.retain_rows(|_| false);
        return Ok(rs.to_json());
    };
    if user.attr_text("dept") != Some("HR") {
        let id_idx = rs.column_index("id");
        rs.retain_rows(|row| row_int(row, id_idx) == Some(me));
    }
    coarsen_addresses(db, &mut rs, user, granularity)?;
    Ok(rs.to_json())
}

pub fn avg_salary(db: &Database, user: &UserContext) -> Result<Json, EndpointError> {
    let Some(me) = user.id() else {
        return Ok(Json::Null);
    };
    let payroll = db.execute(&Query::all("Payroll").values(&["id", "mgid", "salary"])?)?;
    let managers: HashSet<i64> = payroll
        .rows()
        .iter()
        .filter_map(|r| match r.get(1) {
            Some(Value::Int(m)) => Some(*m),
            _ => None,
        })
        .collect();
    let caller_manages = managers.contains(&me);
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in payroll.rows() {
        let Some(Value::Int(id)) = row.first() else {
            continue;
        };
        if !caller_manages && managers.contains(id) {
            continue;
        }
        match row.get(2) {
            Some(Value::Int(s)) => {
                sum += *s as f64;
                count += 1;
            }
            Some(Value::Float(s)) => {
                sum += *s;
                count += 1;
            }
            _ => {}
        }
    }
    if count == 0 {
        return Ok(Json::Null);
    }
    Ok(Value::Float(sum / count as f64).to_json())
}

pub fn list_addresses(
    db: &Database,
    user: &UserContext,
    granularity: AddressGranularity,
) -> Result<Json, EndpointError> {
    let mut rs = db.execute(&Query::all("User").values(&["id", "address"])?)?;
    if !user.is_authenticated() {
        rs.retain_rows(|_| false);
        return Ok(rs.to_json());
    }
    coarsen_addresses(db, &mut rs, user, granularity)?;
    Ok(rs.to_json())
}

pub fn get_events(db: &Database, user: &UserContext) -> Result<Json, EndpointError> {
    let mut rs = db.execute(&Query::all("EventCalendar"))?;
    match user.id() {
        None => rs.retain_rows(|_| false),
        Some(me) => {
            let invited = ids_matching(db, "Invitee", "empid", me, "eid")?;
            let eid_idx = rs.column_index("eid");
            rs.retain_rows(|row| row_int(row, eid_idx).is_some_and(|e| invited.contains(&e)));
        }
    }
    Ok(rs.to_json())
}

pub fn delete_events(db: &Database, user: &UserContext) -> Result<Json, EndpointError> {
    let mut rs = db.execute(&Query::all("EventCalendar"))?;
    match user.id() {
        None => rs.retain_rows(|_| false),
        Some(me) => {
            let org_idx = rs.column_index("orgid");
            rs.retain_rows(|row| row_int(row, org_idx) == Some(me));
        }
    }
    Ok(rs.to_json())
}

pub fn location_events(
    db: &Database,
    user: &UserContext,
    loc: &str,
) -> Result<Json, EndpointError> {
    let mut rs = db.execute(
        &Query::all("EventCalendar")
            .filter(Predicate::eq(col("EventCalendar", "location"), loc)),
    )?;
    let Some(me) = user.id() else {
        rs.retain_rows(|_| false);
        return Ok(rs.to_json());
    };
    let invited = ids_matching(db, "Invitee", "empid", me, "eid")?;
    for i in 0..rs.row_count() {
        let eid = cell_int(&rs, i, "eid");
        let orgid = cell_int(&rs, i, "orgid");
        let visible = eid.is_some_and(|e| invited.contains(&e)) || orgid == Some(me);
        if !visible {
            rs.set_value(i, "event", Value::Text("Private event".into()));
            rs.set_value(i, "orgid", Value::Int(0));
        }
    }
    Ok(rs.to_json())
}

pub fn list_invitees(db: &Database, _user: &UserContext) -> Result<Json, EndpointError> {
    // Nothing in the application ever shows invitation rows to anyone.
    let mut rs = db.execute(&Query::all("Invitee"))?;
    rs.retain_rows(|_| false);
    Ok(rs.to_json())
}

/// Peers keep "district, city", strangers keep the city, the caller's own
/// row stays complete. Who counts as a peer depends on the variant.
fn coarsen_addresses(
    db: &Database,
    rs: &mut ResultSet,
    user: &UserContext,
    granularity: AddressGranularity,
) -> Result<(), EndpointError> {
    let me = user.id();
    let peers = match (granularity, me) {
        (AddressGranularity::ByFriendship, Some(id)) => {
            ids_matching(db, "Friends", "uid", id, "fid")?
        }
        (AddressGranularity::ByDepartment, Some(_)) => match user.attr_text("dept") {
            Some(dept) => ids_matching(db, "User", "dept", dept, "id")?,
            None => HashSet::new(),
        },
        _ => HashSet::new(),
    };
    for i in 0..rs.row_count() {
        let row_id = cell_int(rs, i, "id");
        if row_id.is_some() && row_id == me {
            continue;
        }
        let Some(Value::Text(addr)) = rs.value(i, "address") else {
            continue;
        };
        let addr = addr.clone();
        let parts: Vec<&str> = addr.split(", ").collect();
        let masked = if row_id.is_some_and(|r| peers.contains(&r)) {
            if parts.len() > 1 {
                parts[1..].join(", ")
            } else {
                addr.clone()
            }
        } else {
            parts.last().copied().unwrap_or(&addr).to_string()
        };
        rs.set_value(i, "address", Value::Text(masked));
    }
    Ok(())
}

// --- social -----------------------------------------------------------------

pub fn posts_view(db: &Database, user: &UserContext) -> Result<Json, EndpointError> {
    let mut rs = db.execute(&Query::all("Post"))?;
    match user.id() {
        None => rs.retain_rows(|_| false),
        Some(me) => {
            let followed = ids_matching(db, "Follow", "uid", me, "fid")?;
            let user_idx = rs.column_index("user");
            rs.retain_rows(|row| row_int(row, user_idx).is_some_and(|u| followed.contains(&u)));
        }
    }
    Ok(rs.to_json())
}

fn follow_notice() -> Json {
    serde_json::json!(["Follow user to see the posts"])
}

pub fn profile_view(db: &Database, user: &UserContext, uid: i64) -> Result<Json, EndpointError> {
    let mut profile =
        db.execute(&Query::all("User").filter(Predicate::eq(col("User", "id"), uid)))?;
    if !user.is_authenticated() {
        profile.retain_rows(|_| false);
    }
    let posts = match user.id() {
        None => follow_notice(),
        Some(me) => {
            let followed = ids_matching(db, "Follow", "uid", me, "fid")?;
            if followed.contains(&uid) {
                let rs = db
                    .execute(&Query::all("Post").filter(Predicate::eq(col("Post", "user"), uid)))?;
                if rs.is_empty() {
                    follow_notice()
                } else {
                    rs.to_json()
                }
            } else {
                follow_notice()
            }
        }
    };
    Ok(serde_json::json!({ "profile": profile.to_json(), "posts": posts }))
}

pub fn browse_users(db: &Database, user: &UserContext) -> Result<Json, EndpointError> {
    let mut rs = db.execute(&Query::all("User"))?;
    if !user.is_authenticated() {
        rs.retain_rows(|_| false);
    }
    Ok(rs.to_json())
}

// --- wide -------------------------------------------------------------------

pub fn wide_view(
    db: &Database,
    _user: &UserContext,
    conditions: usize,
) -> Result<Json, EndpointError> {
    let q = Query::all("Wide1")
        .values(&["id", "c000"])?
        .filter(wide_conditions(conditions));
    Ok(db.execute(&q)?.to_json())
}
