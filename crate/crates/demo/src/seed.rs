//! Deterministic dataset construction. Every generator draws from a fixed
//! ChaCha stream, so seeding the same scenario at the same scale always
//! yields byte-identical snapshots.

use fieldgate_core::query::Query;
use fieldgate_core::schema::TableSchema;
use fieldgate_core::store::{Database, StoreError};
use fieldgate_core::value::{Value, ValueKind};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED_INTRANET: u64 = 0xF1E1_D001;
const SEED_SOCIAL: u64 = 0xF1E1_D002;
const SEED_WIDE: u64 = 0xF1E1_D003;

const STREETS: &[&str] = &["Oak St", "Elm Ave", "Pine Rd", "Maple Dr", "Cedar Ln", "Birch Way"];
const DISTRICTS: &[&str] = &[
    "Shadyside",
    "Friendship",
    "Oakland",
    "Squirrel Hill",
    "Bloomfield",
    "Lawrenceville",
];
const CITIES: &[&str] = &["Pittsburgh", "Springfield", "Riverton"];
const DEPTS: &[&str] = &["HR", "Transportation", "Engineering", "Finance", "Facilities"];
const LOCATIONS: &[&str] = &[
    "Auditorium A",
    "Auditorium B",
    "Room 101",
    "Room 202",
    "Cafeteria",
    "Lab 3",
    "Annex",
    "Roof Garden",
];
const EVENT_KINDS: &[&str] = &[
    "Standup",
    "Budget Review",
    "Design Sync",
    "All Hands",
    "Retro",
    "Planning",
    "Demo Day",
];

fn intranet_tables(db: &mut Database) -> Result<(), StoreError> {
    db.create_table(TableSchema::new(
        "User",
        &[
            ("id", ValueKind::Int),
            ("name", ValueKind::Text),
            ("age", ValueKind::Int),
            ("address", ValueKind::Text),
            ("dept", ValueKind::Text),
        ],
        Some("id"),
    )?)?;
    db.create_table(TableSchema::new(
        "Payroll",
        &[
            ("id", ValueKind::Int),
            ("mgid", ValueKind::Int),
            ("salary", ValueKind::Int),
        ],
        Some("id"),
    )?)?;
    db.create_table(TableSchema::new(
        "Friends",
        &[("id", ValueKind::Int), ("uid", ValueKind::Int), ("fid", ValueKind::Int)],
        Some("id"),
    )?)?;
    db.create_table(TableSchema::new(
        "EventCalendar",
        &[
            ("eid", ValueKind::Int),
            ("date", ValueKind::Text),
            ("location", ValueKind::Text),
            ("orgid", ValueKind::Int),
            ("event", ValueKind::Text),
        ],
        Some("eid"),
    )?)?;
    db.create_table(TableSchema::new(
        "Invitee",
        &[("eid", ValueKind::Int), ("empid", ValueKind::Int)],
        None,
    )?)?;
    Ok(())
}

/// Three users, three payroll rows, two events — small enough to check every
/// response by hand. User 2 is befriended with user 1; user 2 is the only
/// non-manager; event 2 is invisible to user 1 until it shows up masked.
pub fn intranet_small() -> Result<Database, StoreError> {
    let mut db = Database::new();
    intranet_tables(&mut db)?;
    let users: &[(i64, &str, i64, &str, &str)] = &[
        (1, "Alice", 52, "12 Oak St, Shadyside, Pittsburgh", "HR"),
        (2, "Basil", 38, "34 Elm Ave, Friendship, Pittsburgh", "Transportation"),
        (3, "Coral", 45, "56 Pine Rd, Oakland, Pittsburgh", "Engineering"),
    ];
    for (id, name, age, address, dept) in users {
        db.insert(
            "User",
            vec![(*id).into(), (*name).into(), (*age).into(), (*address).into(), (*dept).into()],
        )?;
    }
    for (id, mgid, salary) in [(1i64, 3i64, 100i64), (2, 3, 80), (3, 1, 120)] {
        db.insert("Payroll", vec![id.into(), mgid.into(), salary.into()])?;
    }
    db.insert("Friends", vec![1i64.into(), 2i64.into(), 1i64.into()])?;
    let events: &[(i64, &str, &str, i64, &str)] = &[
        (1, "2024-03-01", "Auditorium A", 1, "Standup"),
        (2, "2024-03-02", "Auditorium A", 2, "Budget Review"),
    ];
    for (eid, date, location, orgid, event) in events {
        db.insert(
            "EventCalendar",
            vec![(*eid).into(), (*date).into(), (*location).into(), (*orgid).into(), (*event).into()],
        )?;
    }
    for (eid, empid) in [(1i64, 1i64), (1, 2), (2, 2)] {
        db.insert("Invitee", vec![eid.into(), empid.into()])?;
    }
    Ok(db)
}

/// Generated directory: 200 users and 1000 events per scale unit, everyone
/// with at least five friends. The first three users are the hand-picked trio
/// from [`intranet_small`], so worked examples stay valid at any scale.
/// Scale 0 yields the schema with no rows.
pub fn intranet(scale: u32) -> Result<Database, StoreError> {
    if scale == 0 {
        let mut db = Database::new();
        intranet_tables(&mut db)?;
        return Ok(db);
    }
    let scale = scale as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_INTRANET);
    let mut db = intranet_small()?;
    let users = 200 * scale;
    let events = 1000 * scale;

    for id in 4..=users {
        let name = format!("User{id:04}");
        let age = rng.random_range(22..=65);
        let address = format!(
            "{} {}, {}, {}",
            rng.random_range(1..=99),
            STREETS[rng.random_range(0..STREETS.len())],
            DISTRICTS[rng.random_range(0..DISTRICTS.len())],
            CITIES[rng.random_range(0..CITIES.len())],
        );
        let dept = DEPTS[rng.random_range(0..DEPTS.len())];
        db.insert(
            "User",
            vec![id.into(), name.into(), age.into(), address.into(), dept.into()],
        )?;
    }

    // Managers are drawn from the first tenth of the directory; someone is
    // a manager iff their id shows up in the mgid column.
    let pool = (users / 10).max(1);
    for id in 4..=users {
        let mgid = rng.random_range(1..=pool);
        let salary = rng.random_range(50_000..=150_000i64);
        db.insert("Payroll", vec![id.into(), mgid.into(), salary.into()])?;
    }

    // Everyone ends up with at least five distinct friends; user 2 keeps the
    // hand-seeded edge to user 1 from the small fixture.
    let mut friend_row = 2i64;
    for uid in 1..=users {
        let mut friends: Vec<i64> = if uid == 2 { vec![1] } else { Vec::new() };
        let seeded = friends.len();
        while friends.len() < 5 {
            let fid = rng.random_range(1..=users);
            if fid != uid && !friends.contains(&fid) {
                friends.push(fid);
            }
        }
        for fid in friends.into_iter().skip(seeded) {
            db.insert("Friends", vec![friend_row.into(), uid.into(), fid.into()])?;
            friend_row += 1;
        }
    }

    for eid in 3..=(events + 2) {
        let date = format!(
            "2024-{:02}-{:02}",
            rng.random_range(1..=12),
            rng.random_range(1..=28)
        );
        let location = LOCATIONS[rng.random_range(0..LOCATIONS.len())];
        let orgid = rng.random_range(1..=users);
        let event = format!(
            "{} #{eid}",
            EVENT_KINDS[rng.random_range(0..EVENT_KINDS.len())]
        );
        db.insert(
            "EventCalendar",
            vec![eid.into(), date.into(), location.into(), orgid.into(), event.into()],
        )?;
        let invitees = rng.random_range(0..=5);
        let mut seen = Vec::new();
        for _ in 0..invitees {
            let empid = rng.random_range(1..=users);
            if !seen.contains(&empid) {
                seen.push(empid);
                db.insert("Invitee", vec![eid.into(), empid.into()])?;
            }
        }
    }
    Ok(db)
}

fn social_tables(db: &mut Database) -> Result<(), StoreError> {
    db.create_table(TableSchema::new(
        "User",
        &[("id", ValueKind::Int), ("name", ValueKind::Text)],
        Some("id"),
    )?)?;
    db.create_table(TableSchema::new(
        "Post",
        &[
            ("pid", ValueKind::Int),
            ("user", ValueKind::Int),
            ("title", ValueKind::Text),
        ],
        Some("pid"),
    )?)?;
    db.create_table(TableSchema::new(
        "Follow",
        &[("uid", ValueKind::Int), ("fid", ValueKind::Int)],
        None,
    )?)?;
    Ok(())
}

/// Five users; user 1 follows 2 and 5, user 2 follows 1 back.
pub fn social_small() -> Result<Database, StoreError> {
    let mut db = Database::new();
    social_tables(&mut db)?;
    for (id, name) in [(1i64, "Ana"), (2, "Bo"), (3, "Cy"), (4, "Dee"), (5, "Eve")] {
        db.insert("User", vec![id.into(), name.into()])?;
    }
    for (uid, fid) in [(1i64, 2i64), (1, 5), (2, 1)] {
        db.insert("Follow", vec![uid.into(), fid.into()])?;
    }
    for (pid, user, title) in [
        (1i64, 2i64, "Hello"),
        (2, 5, "World"),
        (3, 3, "Hidden"),
        (4, 1, "Mine"),
    ] {
        db.insert("Post", vec![pid.into(), user.into(), title.into()])?;
    }
    Ok(db)
}

/// Generated feed: 100 users and 2000 posts per scale unit, each user
/// following zero to three others. Scale 0 yields the schema with no rows.
pub fn social(scale: u32) -> Result<Database, StoreError> {
    let scale = scale as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_SOCIAL);
    let mut db = Database::new();
    social_tables(&mut db)?;
    let users = 100 * scale;
    let posts = 2000 * scale;
    for id in 1..=users {
        db.insert("User", vec![id.into(), format!("Member {id}").into()])?;
    }
    for uid in 1..=users {
        let n = rng.random_range(0..=3);
        let mut follows = Vec::new();
        for _ in 0..n {
            let fid = rng.random_range(1..=users);
            if fid != uid && !follows.contains(&fid) {
                follows.push(fid);
            }
        }
        for fid in follows {
            db.insert("Follow", vec![uid.into(), fid.into()])?;
        }
    }
    for pid in 1..=posts {
        let user = rng.random_range(1..=users);
        db.insert(
            "Post",
            vec![pid.into(), user.into(), format!("Post {pid}").into()],
        )?;
    }
    Ok(db)
}

pub const WIDE_COLUMNS: usize = 100;

/// One table, `id` plus 100 int columns, 10000 rows per scale unit.
/// Scale 0 yields the schema with no rows.
pub fn wide(scale: u32) -> Result<Database, StoreError> {
    let scale = scale as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED_WIDE);
    let mut db = Database::new();
    let names: Vec<String> = (0..WIDE_COLUMNS).map(|i| format!("c{i:03}")).collect();
    let mut columns: Vec<(&str, ValueKind)> = vec![("id", ValueKind::Int)];
    columns.extend(names.iter().map(|n| (n.as_str(), ValueKind::Int)));
    db.create_table(TableSchema::new("Wide1", &columns, Some("id"))?)?;
    for id in 1..=(10_000 * scale) {
        let mut row: Vec<Value> = Vec::with_capacity(WIDE_COLUMNS + 1);
        row.push(id.into());
        for _ in 0..WIDE_COLUMNS {
            row.push(rng.random_range(-50..=950i64).into());
        }
        db.insert("Wide1", row)?;
    }
    Ok(db)
}

/// The first `limit` user ids of a scenario database, if it has a User table.
pub fn user_ids(db: &Database, limit: usize) -> Vec<i64> {
    if db.catalog().table("User").is_none() {
        return Vec::new();
    }
    let q = Query::all("User").values(&["id"]).expect("id column exists");
    match db.execute(&q) {
        Ok(rs) => rs
            .rows()
            .iter()
            .take(limit)
            .filter_map(|r| match &r[0] {
                Value::Int(i) => Some(*i),
                _ => None,
            })
            .collect(),
        Err(_) => Vec::new(),
    }
}
