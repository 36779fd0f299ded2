//! A second opinion on query execution.
//!
//! [`NaiveStore`] re-reads a database snapshot with its own parser and
//! interprets queries with its own evaluation code — rows as JSON maps, a
//! per-row predicate walk, aggregates recomputed from scratch. It shares
//! the query AST with the store but none of the execution machinery, so
//! agreement between the two is meaningful. [`run_store_equivalence`]
//! drives both over seeded random databases and queries.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;

use fieldgate_core::query::{col, CompareOp, Predicate, PredicateAtom, Query, Transform};
use fieldgate_core::schema::TableSchema;
use fieldgate_core::store::{Database, ResultSet};
use fieldgate_core::value::{Value, ValueKind};

pub struct NaiveStore {
    tables: BTreeMap<String, NaiveTable>,
}

struct NaiveTable {
    columns: Vec<String>,
    primary_key: Option<String>,
    rows: Vec<BTreeMap<String, Json>>,
}

/// What a naive execution produces: plain rows or one aggregate scalar.
pub enum NaiveOutput {
    Rows {
        columns: Vec<String>,
        rows: Vec<Vec<Json>>,
    },
    Scalar(Json),
}

impl NaiveStore {
    /// Parse snapshot text: a catalog line, then one JSON object per row.
    pub fn parse(text: &str) -> Result<NaiveStore, String> {
        let mut lines = text.as_bytes().lines();
        let first = lines
            .next()
            .ok_or("empty snapshot")?
            .map_err(|e| e.to_string())?;
        let catalog: Json =
            serde_json::from_str(&first).map_err(|e| format!("catalog line: {e}"))?;
        let mut tables = BTreeMap::new();
        let mut order = Vec::new();
        for t in catalog
            .get("tables")
            .and_then(Json::as_array)
            .ok_or("catalog line lacks tables")?
        {
            let name = t
                .get("name")
                .and_then(Json::as_str)
                .ok_or("table without name")?
                .to_string();
            let columns: Vec<String> = t
                .get("columns")
                .and_then(Json::as_array)
                .ok_or("table without columns")?
                .iter()
                .filter_map(|c| c.get("name").and_then(Json::as_str))
                .map(str::to_string)
                .collect();
            let primary_key = t
                .get("primary_key")
                .and_then(Json::as_str)
                .map(str::to_string);
            order.push(name.clone());
            tables.insert(
                name,
                NaiveTable {
                    columns,
                    primary_key,
                    rows: Vec::new(),
                },
            );
        }
        for line in lines {
            let line = line.map_err(|e| e.to_string())?;
            let row: Json = serde_json::from_str(&line).map_err(|e| format!("row line: {e}"))?;
            let obj = row.as_object().ok_or("row line is not an object")?;
            let table = obj
                .get("_table")
                .and_then(Json::as_str)
                .ok_or("row without _table")?;
            let dest = tables
                .get_mut(table)
                .ok_or_else(|| format!("row for unknown table {table}"))?;
            let mut cells = BTreeMap::new();
            for c in &dest.columns {
                cells.insert(c.clone(), obj.get(c).cloned().unwrap_or(Json::Null));
            }
            dest.rows.push(cells);
        }
        // Keyed tables answer in key order regardless of file order.
        for table in tables.values_mut() {
            if let Some(pk) = table.primary_key.clone() {
                table.rows.sort_by(|a, b| json_sort_key(a.get(&pk)).cmp(&json_sort_key(b.get(&pk))));
            }
        }
        let _ = order;
        Ok(NaiveStore { tables })
    }

    pub fn run(&self, query: &Query) -> Result<NaiveOutput, String> {
        let table = self
            .tables
            .get(query.base())
            .ok_or_else(|| format!("unknown table {}", query.base()))?;
        let mut kept: Vec<&BTreeMap<String, Json>> = Vec::new();
        if !query.is_none_marked() {
            for row in &table.rows {
                if self.eval(query.base(), row, query.predicate())? {
                    kept.push(row);
                }
            }
        }
        if let Some(agg) = query.aggregate_field() {
            let cells: Vec<&Json> = kept
                .iter()
                .map(|r| {
                    r.get(&agg.column.column)
                        .ok_or_else(|| format!("missing column {}", agg.column.column))
                })
                .collect::<Result<_, _>>()?;
            return Ok(NaiveOutput::Scalar(aggregate(agg.transform, &cells)?));
        }
        let columns: Vec<String> = if query.projection().is_empty() {
            table.columns.clone()
        } else {
            query
                .projection()
                .iter()
                .map(|f| f.column.column.clone())
                .collect()
        };
        let mut rows = Vec::with_capacity(kept.len());
        for row in kept {
            let mut out = Vec::with_capacity(columns.len());
            for c in &columns {
                out.push(
                    row.get(c)
                        .cloned()
                        .ok_or_else(|| format!("missing column {c}"))?,
                );
            }
            rows.push(out);
        }
        Ok(NaiveOutput::Rows { columns, rows })
    }

    fn eval(
        &self,
        base: &str,
        row: &BTreeMap<String, Json>,
        pred: &Predicate,
    ) -> Result<bool, String> {
        match pred {
            Predicate::True => Ok(true),
            Predicate::False => Ok(false),
            Predicate::And(parts) => {
                for p in parts {
                    if !self.eval(base, row, p)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Predicate::Not(inner) => Ok(!self.eval(base, row, inner)?),
            Predicate::Atom(atom) => self.eval_atom(base, row, atom),
        }
    }

    fn eval_atom(
        &self,
        base: &str,
        row: &BTreeMap<String, Json>,
        atom: &PredicateAtom,
    ) -> Result<bool, String> {
        let fetch = |column: &fieldgate_core::query::ColumnRef| -> Result<&Json, String> {
            if column.table != base {
                return Err(format!(
                    "predicate column {}.{} does not belong to {base}",
                    column.table, column.column
                ));
            }
            row.get(&column.column)
                .ok_or_else(|| format!("missing column {}", column.column))
        };
        match atom {
            PredicateAtom::Compare { column, op, value } => {
                let cell = fetch(column)?;
                Ok(compare_cell(cell, &value.to_json())
                    .map(|ord| op_holds(*op, ord))
                    .unwrap_or(false))
            }
            PredicateAtom::InList { column, values } => {
                let cell = fetch(column)?;
                Ok(values
                    .iter()
                    .any(|v| compare_cell(cell, &v.to_json()) == Some(std::cmp::Ordering::Equal)))
            }
            PredicateAtom::InSubquery { column, query } => {
                let cell = fetch(column)?;
                let NaiveOutput::Rows { rows, .. } = self.run(query)? else {
                    return Err("IN subquery must produce rows".into());
                };
                Ok(rows.iter().any(|r| {
                    r.first()
                        .and_then(|v| compare_cell(cell, v))
                        .map(|ord| ord == std::cmp::Ordering::Equal)
                        .unwrap_or(false)
                }))
            }
        }
    }
}

/// Nulls never order; numbers compare numerically regardless of int/float;
/// anything else compares within its own type only.
fn compare_cell(a: &Json, b: &Json) -> Option<std::cmp::Ordering> {
    match (a, b) {
        (Json::Null, _) | (_, Json::Null) => None,
        (Json::Number(x), Json::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(i), Some(j)) => Some(i.cmp(&j)),
            _ => x.as_f64()?.partial_cmp(&y.as_f64()?),
        },
        (Json::String(x), Json::String(y)) => Some(x.cmp(y)),
        (Json::Bool(x), Json::Bool(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn op_holds(op: CompareOp, ord: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        CompareOp::Eq => ord == Equal,
        CompareOp::Ne => ord != Equal,
        CompareOp::Lt => ord == Less,
        CompareOp::Le => ord != Greater,
        CompareOp::Gt => ord == Greater,
        CompareOp::Ge => ord != Less,
    }
}

fn aggregate(transform: Transform, cells: &[&Json]) -> Result<Json, String> {
    let present: Vec<&Json> = cells.iter().copied().filter(|c| !c.is_null()).collect();
    match transform {
        Transform::None => Err("identity aggregate".into()),
        Transform::Count => Ok(Json::from(present.len() as i64)),
        _ if present.is_empty() => Ok(Json::Null),
        Transform::Avg => {
            let mut sum = 0.0;
            for c in &present {
                sum += c.as_f64().ok_or("AVG over non-numeric cell")?;
            }
            Ok(Json::from(sum / present.len() as f64))
        }
        Transform::Sum => {
            if present.iter().all(|c| c.as_i64().is_some()) {
                let mut sum: i64 = 0;
                for c in &present {
                    sum = sum
                        .checked_add(c.as_i64().expect("checked above"))
                        .ok_or("SUM overflow")?;
                }
                Ok(Json::from(sum))
            } else {
                let mut sum = 0.0;
                for c in &present {
                    sum += c.as_f64().ok_or("SUM over non-numeric cell")?;
                }
                Ok(Json::from(sum))
            }
        }
        Transform::Min | Transform::Max => {
            let mut best = present[0];
            for c in &present[1..] {
                let ord = compare_cell(c, best).ok_or("MIN/MAX over mixed cells")?;
                let replace = matches!(
                    (transform, ord),
                    (Transform::Min, std::cmp::Ordering::Less)
                        | (Transform::Max, std::cmp::Ordering::Greater)
                );
                if replace {
                    best = c;
                }
            }
            Ok(best.clone())
        }
    }
}

fn json_sort_key(v: Option<&Json>) -> (u8, i64, String) {
    match v {
        Some(Json::Number(n)) => (0, n.as_i64().unwrap_or(i64::MAX), String::new()),
        Some(Json::String(s)) => (1, 0, s.clone()),
        _ => (2, 0, String::new()),
    }
}

/// Numeric cells within `tol` (absolute, scaled by magnitude) count as
/// equal; everything else must match exactly.
fn json_close(a: &Json, b: &Json, tol: f64) -> bool {
    match (a, b) {
        (Json::Number(x), Json::Number(y)) => {
            if let (Some(i), Some(j)) = (x.as_i64(), y.as_i64()) {
                return i == j;
            }
            match (x.as_f64(), y.as_f64()) {
                (Some(i), Some(j)) => (i - j).abs() <= tol * 1.0_f64.max(i.abs()).max(j.abs()),
                _ => false,
            }
        }
        _ => a == b,
    }
}

/// Check one store result against the naive interpretation of the same
/// query. Returns a description of the first difference.
pub fn results_match(rs: &ResultSet, naive: &NaiveOutput, tol: f64) -> Result<(), String> {
    match naive {
        NaiveOutput::Scalar(expected) => {
            let got = rs
                .single_value()
                .ok_or("store result is not an aggregate")?
                .to_json();
            if json_close(&got, expected, tol) {
                Ok(())
            } else {
                Err(format!("aggregate mismatch: store {got}, naive {expected}"))
            }
        }
        NaiveOutput::Rows { columns, rows } => {
            let store_cols: Vec<&str> = rs.header().iter().map(|f| f.column.column.as_str()).collect();
            if store_cols != columns.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(format!(
                    "column mismatch: store {store_cols:?}, naive {columns:?}"
                ));
            }
            if rs.row_count() != rows.len() {
                return Err(format!(
                    "row count mismatch: store {}, naive {}",
                    rs.row_count(),
                    rows.len()
                ));
            }
            for (i, (srow, nrow)) in rs.rows().iter().zip(rows).enumerate() {
                for (j, (sv, nv)) in srow.iter().zip(nrow).enumerate() {
                    let sv = sv.to_json();
                    if !json_close(&sv, nv, tol) {
                        return Err(format!(
                            "cell ({i},{j}) mismatch: store {sv}, naive {nv}"
                        ));
                    }
                }
            }
            Ok(())
        }
    }
}

/// Outcome of a generator sweep.
pub struct SweepSummary {
    pub pairs: usize,
    pub datasets: usize,
}

const QUERIES_PER_DATASET: usize = 250;
const FLOAT_TOLERANCE: f64 = 1e-9;

/// Generate `pairs` random (database, query) pairs from `seed`, run each
/// query through the store and the naive interpreter, and demand they
/// agree. Every dataset's snapshot must also survive a byte-exact
/// save/load/save round trip.
pub fn run_store_equivalence(pairs: usize, seed: u64) -> Result<SweepSummary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = pairs;
    let mut datasets = 0;
    while remaining > 0 {
        datasets += 1;
        let db = random_database(&mut rng).map_err(|e| format!("dataset {datasets}: {e}"))?;
        let text = db.snapshot_string();
        let reloaded = Database::load(text.as_bytes())
            .map_err(|e| format!("dataset {datasets}: reload failed: {e}"))?;
        if reloaded.snapshot_string() != text {
            return Err(format!("dataset {datasets}: snapshot round trip changed bytes"));
        }
        let naive = NaiveStore::parse(&text).map_err(|e| format!("dataset {datasets}: {e}"))?;
        let batch = remaining.min(QUERIES_PER_DATASET);
        for i in 0..batch {
            let query = random_query(&mut rng);
            let context = || {
                format!(
                    "dataset {datasets} query {i}: {}",
                    query
                        .to_sql(db.catalog())
                        .unwrap_or_else(|e| format!("<unrenderable: {e}>"))
                )
            };
            let store_rs = db.execute(&query).map_err(|e| format!("{}: store: {e}", context()))?;
            let naive_out = naive.run(&query).map_err(|e| format!("{}: naive: {e}", context()))?;
            results_match(&store_rs, &naive_out, FLOAT_TOLERANCE)
                .map_err(|e| format!("{}: {e}", context()))?;
        }
        remaining -= batch;
    }
    Ok(SweepSummary { pairs, datasets })
}

fn random_database(rng: &mut ChaCha8Rng) -> Result<Database, String> {
    let mut db = Database::default();
    db.create_table(
        TableSchema::new(
            "T",
            &[
                ("id", ValueKind::Int),
                ("a", ValueKind::Int),
                ("b", ValueKind::Float),
                ("c", ValueKind::Text),
                ("d", ValueKind::Int),
            ],
            Some("id"),
        )
        .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    db.create_table(
        TableSchema::new("S", &[("sid", ValueKind::Int), ("k", ValueKind::Int)], Some("sid"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    let colors = ["red", "green", "blue", "amber"];
    let t_rows = rng.random_range(0..=30);
    for id in 1..=t_rows {
        let a = if rng.random_range(0..10) == 0 {
            Value::Null
        } else {
            Value::Int(rng.random_range(-20..=20))
        };
        let b = if rng.random_range(0..10) == 0 {
            Value::Null
        } else {
            Value::Float(rng.random_range(-20..=20) as f64 * 0.25)
        };
        let c = if rng.random_range(0..10) == 0 {
            Value::Null
        } else {
            Value::Text(colors[rng.random_range(0..colors.len())].to_string())
        };
        let d = Value::Int(rng.random_range(0..=5));
        db.insert("T", vec![Value::Int(id), a, b, c, d])
            .map_err(|e| e.to_string())?;
    }
    let s_rows = rng.random_range(0..=12);
    for sid in 1..=s_rows {
        let k = if rng.random_range(0..10) == 0 {
            Value::Null
        } else {
            Value::Int(rng.random_range(-3..=8))
        };
        db.insert("S", vec![Value::Int(sid), k])
            .map_err(|e| e.to_string())?;
    }
    Ok(db)
}

fn random_query(rng: &mut ChaCha8Rng) -> Query {
    let on_t = rng.random_range(0..10) < 8;
    let base = if on_t { "T" } else { "S" };
    let mut q = Query::all(base);
    match rng.random_range(0..10) {
        0..=1 => {
            // Aggregate: AVG/SUM stay numeric, the rest take any column.
            let (transform, column) = if on_t {
                match rng.random_range(0..5) {
                    0 => (Transform::Avg, ["a", "b", "d"][rng.random_range(0..3)]),
                    1 => (Transform::Sum, ["a", "b", "d"][rng.random_range(0..3)]),
                    2 => (Transform::Count, ["a", "b", "c", "d", "id"][rng.random_range(0..5)]),
                    3 => (Transform::Min, ["a", "b", "c", "d"][rng.random_range(0..4)]),
                    _ => (Transform::Max, ["a", "b", "c", "d"][rng.random_range(0..4)]),
                }
            } else {
                (
                    [Transform::Avg, Transform::Sum, Transform::Count, Transform::Min, Transform::Max]
                        [rng.random_range(0..5)],
                    "k",
                )
            };
            q = q.aggregate(transform, column).expect("fresh query");
        }
        2..=3 => {
            let pool: &[&str] = if on_t { &["id", "a", "b", "c", "d"] } else { &["sid", "k"] };
            let take = rng.random_range(1..=pool.len());
            let mut picked: Vec<&str> = Vec::new();
            for (i, c) in pool.iter().enumerate() {
                if picked.len() < take && rng.random_range(0..pool.len()) <= i {
                    picked.push(c);
                }
            }
            if picked.is_empty() {
                picked.push(pool[0]);
            }
            q = q.values(&picked).expect("columns from the schema");
        }
        _ => {}
    }
    let depth = rng.random_range(0..=3);
    let pred = random_predicate(rng, base, depth);
    q = if rng.random_range(0..4) == 0 { q.exclude(pred) } else { q.filter(pred) };
    if rng.random_range(0..12) == 0 {
        q = q.none();
    }
    q
}

fn random_predicate(rng: &mut ChaCha8Rng, base: &str, depth: u32) -> Predicate {
    if depth == 0 {
        return random_atom(rng, base);
    }
    match rng.random_range(0..4) {
        0 => random_predicate(rng, base, depth - 1)
            .and_with(random_predicate(rng, base, depth - 1)),
        1 => random_predicate(rng, base, depth - 1).negate(),
        _ => random_atom(rng, base),
    }
}

fn random_atom(rng: &mut ChaCha8Rng, base: &str) -> Predicate {
    let ops = [
        CompareOp::Eq,
        CompareOp::Ne,
        CompareOp::Lt,
        CompareOp::Le,
        CompareOp::Gt,
        CompareOp::Ge,
    ];
    let int_columns: &[&str] = if base == "T" { &["id", "a", "d"] } else { &["sid", "k"] };
    match rng.random_range(0..6) {
        // IN (list of ints)
        0 => {
            let column = int_columns[rng.random_range(0..int_columns.len())];
            let n = rng.random_range(1..=4);
            let values: Vec<i64> = (0..n).map(|_| rng.random_range(-5..=25)).collect();
            Predicate::in_list(col(base, column), values)
        }
        // IN (subquery over the other table's int column)
        1 => {
            let column = int_columns[rng.random_range(0..int_columns.len())];
            let (inner_base, inner_col) = if base == "T" {
                ("S", ["sid", "k"][rng.random_range(0..2)])
            } else {
                ("T", ["id", "a", "d"][rng.random_range(0..3)])
            };
            let mut inner = Query::all(inner_base)
                .values(&[inner_col])
                .expect("known column");
            if rng.random_range(0..2) == 0 {
                inner = inner.filter(random_atom_shallow(rng, inner_base));
            }
            if rng.random_range(0..8) == 0 {
                inner = inner.none();
            }
            Predicate::in_subquery(col(base, column), inner).expect("single plain column")
        }
        _ => random_compare(rng, base, &ops),
    }
}

/// Compare atoms only — keeps subqueries from nesting unboundedly.
fn random_atom_shallow(rng: &mut ChaCha8Rng, base: &str) -> Predicate {
    let ops = [
        CompareOp::Eq,
        CompareOp::Ne,
        CompareOp::Lt,
        CompareOp::Le,
        CompareOp::Gt,
        CompareOp::Ge,
    ];
    random_compare(rng, base, &ops)
}

fn random_compare(rng: &mut ChaCha8Rng, base: &str, ops: &[CompareOp]) -> Predicate {
    let op = ops[rng.random_range(0..ops.len())];
    let (column, literal) = if base == "T" {
        match rng.random_range(0..5) {
            0 => ("id", Value::Int(rng.random_range(0..=31))),
            1 => ("a", Value::Int(rng.random_range(-21..=21))),
            2 => ("b", Value::Float(rng.random_range(-21..=21) as f64 * 0.25)),
            3 => (
                "c",
                Value::Text(["red", "green", "blue", "amber", "plum"][rng.random_range(0..5)].to_string()),
            ),
            _ => ("d", Value::Int(rng.random_range(-1..=6))),
        }
    } else {
        match rng.random_range(0..2) {
            0 => ("sid", Value::Int(rng.random_range(0..=13))),
            _ => ("k", Value::Int(rng.random_range(-4..=9))),
        }
    };
    compare_with(op, col(base, column), literal)
}

fn compare_with(op: CompareOp, column: fieldgate_core::query::ColumnRef, value: Value) -> Predicate {
    match op {
        CompareOp::Eq => Predicate::eq(column, value),
        CompareOp::Ne => Predicate::ne(column, value),
        CompareOp::Lt => Predicate::lt(column, value),
        CompareOp::Le => Predicate::le(column, value),
        CompareOp::Gt => Predicate::gt(column, value),
        CompareOp::Ge => Predicate::ge(column, value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_store_agrees_on_a_hand_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let db = random_database(&mut rng).unwrap();
        let naive = NaiveStore::parse(&db.snapshot_string()).unwrap();
        let q = Query::all("T").filter(Predicate::gt(col("T", "a"), 0));
        let rs = db.execute(&q).unwrap();
        let out = naive.run(&q).unwrap();
        results_match(&rs, &out, 1e-9).unwrap();
    }

    #[test]
    fn short_sweep_is_clean() {
        let summary = run_store_equivalence(500, 0xACE).unwrap();
        assert_eq!(summary.pairs, 500);
        assert!(summary.datasets >= 2);
    }

    #[test]
    fn results_match_flags_differences() {
        let mut db = Database::default();
        db.create_table(TableSchema::new("T", &[("id", ValueKind::Int)], Some("id")).unwrap())
            .unwrap();
        db.insert("T", vec![Value::Int(1)]).unwrap();
        let q = Query::all("T");
        let rs = db.execute(&q).unwrap();
        let naive = NaiveOutput::Rows {
            columns: vec!["id".into()],
            rows: vec![vec![Json::from(2)]],
        };
        let err = results_match(&rs, &naive, 1e-9).unwrap_err();
        assert!(err.contains("mismatch"), "unexpected error text: {err}");
    }
}
