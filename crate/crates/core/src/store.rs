//! An embedded, in-memory relational store.
//!
//! Rows live in `BTreeMap`s keyed by primary key (or insertion order for
//! tables without one), so scans and therefore results are deterministic.
//! The store counts every query executed through the public interface
//! separately from privileged executions made by policy code; tests use the
//! two counters to prove each request touches the store exactly once.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::query::{CompareOp, FieldUse, Predicate, PredicateAtom, Query, QueryError, Transform};
use crate::schema::{SchemaCatalog, SchemaError, TableSchema};
use crate::value::{KeyValue, Value, ValueKind};

/// FNV-1a over a byte string; used for query fingerprints and anywhere a
/// stable, dependency-free checksum is handy.
pub fn fingerprint64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("table {table} expects {expected} values, got {got}")]
    Arity {
        table: String,
        expected: usize,
        got: usize,
    },
    #[error("column {table}.{column} holds {expected}, got a {got} value")]
    ValueKind {
        table: String,
        column: String,
        expected: ValueKind,
        got: ValueKind,
    },
    #[error("primary key of {0} must be a non-null int or text value")]
    InvalidKey(String),
    #[error("duplicate primary key {key} in table {table}")]
    DuplicateKey { table: String, key: KeyValue },
    #[error("predicate references {column}, which is not a column of {table}")]
    PredicateColumn { table: String, column: String },
    #[error("cannot compare {column} ({kind}) with {literal}")]
    IncomparableLiteral {
        column: String,
        kind: ValueKind,
        literal: String,
    },
    #[error("{transform:?} cannot aggregate {column}, which holds {kind}")]
    BadAggregate {
        transform: Transform,
        column: String,
        kind: ValueKind,
    },
    #[error("integer overflow while aggregating {0}")]
    NumericOverflow(String),
    #[error("table {0} has no primary key")]
    NoPrimaryKey(String),
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error("snapshot I/O: {0}")]
    Io(#[from] io::Error),
}

/// The rows a query produced, with the header describing each column.
///
/// A result may instead be a bare message: post-phase policies replace
/// results wholesale when even row counts must not leak.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    fingerprint: u64,
    header: Vec<FieldUse>,
    rows: Vec<Vec<Value>>,
    message: Option<String>,
}

impl ResultSet {
    pub(crate) fn new(fingerprint: u64, header: Vec<FieldUse>, rows: Vec<Vec<Value>>) -> ResultSet {
        ResultSet {
            fingerprint,
            header,
            rows,
            message: None,
        }
    }

    /// A synthetic result carrying only `text`.
    pub fn message(text: impl Into<String>) -> ResultSet {
        let text = text.into();
        ResultSet {
            fingerprint: fingerprint64(format!("message:{text}").as_bytes()),
            header: Vec::new(),
            rows: Vec::new(),
            message: Some(text),
        }
    }

    pub fn is_message(&self) -> bool {
        self.message.is_some()
    }

    pub fn message_text(&self) -> Option<&str> {
        self.message.as_deref()
    }

    /// Stable hash of the executed query's rendered form.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn header(&self) -> &[FieldUse] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_aggregate(&self) -> bool {
        self.header.len() == 1 && self.header[0].transform != Transform::None
    }

    /// The single value of an aggregate result.
    pub fn single_value(&self) -> Option<&Value> {
        if self.is_aggregate() && self.rows.len() == 1 {
            self.rows[0].first()
        } else {
            None
        }
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.header.iter().position(|f| f.column.column == column)
    }

    pub fn value(&self, row: usize, column: &str) -> Option<&Value> {
        let idx = self.column_index(column)?;
        self.rows.get(row)?.get(idx)
    }

    /// Overwrite one cell; returns false if the row or column is missing.
    pub fn set_value(&mut self, row: usize, column: &str, value: Value) -> bool {
        let Some(idx) = self.column_index(column) else {
            return false;
        };
        match self.rows.get_mut(row).and_then(|r| r.get_mut(idx)) {
            Some(cell) => {
                *cell = value;
                true
            }
            None => false,
        }
    }

    /// Keep only rows the closure accepts.
    pub fn retain_rows(&mut self, mut keep: impl FnMut(&[Value]) -> bool) {
        self.rows.retain(|r| keep(r));
    }

    /// Canonical JSON: an array of objects for row results, a bare scalar
    /// for aggregates, and `[text]` for message results.
    pub fn to_json(&self) -> serde_json::Value {
        if let Some(text) = &self.message {
            return serde_json::Value::Array(vec![serde_json::Value::from(text.as_str())]);
        }
        if self.is_aggregate() {
            return self.rows[0][0].to_json();
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (field, value) in self.header.iter().zip(row) {
                    obj.insert(field.column.column.clone(), value.to_json());
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

/// Point-in-time reading of the store's execution counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsSnapshot {
    /// Queries run through [`Database::execute`] / [`Database::exists`].
    pub executes: u64,
    /// Queries run by policy bodies through privileged access.
    pub privileged_executes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum RowKey {
    Seq(u64),
    Key(KeyValue),
}

impl From<KeyValue> for RowKey {
    fn from(k: KeyValue) -> RowKey {
        RowKey::Key(k)
    }
}

impl From<&KeyValue> for RowKey {
    fn from(k: &KeyValue) -> RowKey {
        RowKey::Key(k.clone())
    }
}

#[derive(Debug, Default)]
struct TableData {
    rows: BTreeMap<RowKey, Vec<Value>>,
    next_seq: u64,
}

#[derive(Debug, Default)]
pub struct Database {
    catalog: SchemaCatalog,
    tables: BTreeMap<String, TableData>,
    executes: AtomicU64,
    privileged: AtomicU64,
}

impl Database {
    pub fn new() -> Database {
        Database::default()
    }

    pub fn catalog(&self) -> &SchemaCatalog {
        &self.catalog
    }

    pub fn create_table(&mut self, schema: TableSchema) -> Result<(), StoreError> {
        let name = schema.name.clone();
        self.catalog.add_table(schema)?;
        self.tables.insert(name, TableData::default());
        Ok(())
    }

    pub fn row_count(&self, table: &str) -> usize {
        self.tables.get(table).map_or(0, |t| t.rows.len())
    }

    /// Insert one row, given positionally in schema column order.
    pub fn insert(&mut self, table: &str, values: Vec<Value>) -> Result<(), StoreError> {
        let schema = self
            .catalog
            .table(table)
            .ok_or_else(|| QueryError::UnknownTable(table.to_string()))?;
        if values.len() != schema.columns.len() {
            return Err(StoreError::Arity {
                table: table.to_string(),
                expected: schema.columns.len(),
                got: values.len(),
            });
        }
        for (def, value) in schema.columns.iter().zip(&values) {
            if !value.fits(def.kind) {
                return Err(StoreError::ValueKind {
                    table: table.to_string(),
                    column: def.name.clone(),
                    expected: def.kind,
                    got: value.kind().expect("non-null: null fits every column"),
                });
            }
        }
        let key = match schema.primary_key_index() {
            Some(idx) => {
                let key = values[idx]
                    .as_key()
                    .ok_or_else(|| StoreError::InvalidKey(table.to_string()))?;
                RowKey::Key(key)
            }
            None => RowKey::Seq(u64::MAX), // placeholder, replaced below
        };
        let data = self.tables.get_mut(table).expect("catalog and data agree");
        let key = match key {
            RowKey::Seq(_) => {
                let k = RowKey::Seq(data.next_seq);
                data.next_seq += 1;
                k
            }
            RowKey::Key(k) => {
                if data.rows.contains_key(&RowKey::Key(k.clone())) {
                    return Err(StoreError::DuplicateKey {
                        table: table.to_string(),
                        key: k,
                    });
                }
                RowKey::Key(k)
            }
        };
        data.rows.insert(key, values);
        Ok(())
    }

    /// Fetch one row by primary key, bypassing query execution. Intended
    /// for request-context construction, not data access; it is not counted.
    pub fn lookup(&self, table: &str, key: &Value) -> Result<Option<Vec<(String, Value)>>, StoreError> {
        let schema = self
            .catalog
            .table(table)
            .ok_or_else(|| QueryError::UnknownTable(table.to_string()))?;
        if schema.primary_key.is_none() {
            return Err(StoreError::NoPrimaryKey(table.to_string()));
        }
        let Some(key) = key.as_key() else {
            return Ok(None);
        };
        let data = self.tables.get(table).expect("catalog and data agree");
        Ok(data.rows.get(&RowKey::Key(key)).map(|row| {
            schema
                .column_names()
                .map(str::to_string)
                .zip(row.iter().cloned())
                .collect()
        }))
    }

    pub fn stats(&self) -> StatsSnapshot {
        StatsSnapshot {
            executes: self.executes.load(Ordering::Relaxed),
            privileged_executes: self.privileged.load(Ordering::Relaxed),
        }
    }

    /// Run a query on behalf of the application. Counted.
    pub fn execute(&self, query: &Query) -> Result<ResultSet, StoreError> {
        self.executes.fetch_add(1, Ordering::Relaxed);
        self.run(query)
    }

    /// Whether the query yields at least one row. Counted.
    pub fn exists(&self, query: &Query) -> Result<bool, StoreError> {
        self.executes.fetch_add(1, Ordering::Relaxed);
        self.probe(query)
    }

    pub(crate) fn execute_privileged(&self, query: &Query) -> Result<ResultSet, StoreError> {
        self.privileged.fetch_add(1, Ordering::Relaxed);
        self.run(query)
    }

    pub(crate) fn exists_privileged(&self, query: &Query) -> Result<bool, StoreError> {
        self.privileged.fetch_add(1, Ordering::Relaxed);
        self.probe(query)
    }

    fn table_parts(&self, name: &str) -> Result<(&TableSchema, &TableData), StoreError> {
        let schema = self
            .catalog
            .table(name)
            .ok_or_else(|| QueryError::UnknownTable(name.to_string()))?;
        Ok((schema, self.tables.get(name).expect("catalog and data agree")))
    }

    fn run(&self, query: &Query) -> Result<ResultSet, StoreError> {
        let (schema, data) = self.table_parts(query.base())?;
        let header = self.result_header(query, schema)?;
        let pred = self.resolve_predicate(query.predicate(), schema)?;
        let fingerprint = fingerprint64(query.to_sql(&self.catalog)?.as_bytes());

        let mut matched: Vec<&Vec<Value>> = Vec::new();
        if !query.is_none_marked() {
            for row in data.rows.values() {
                if pred.eval(row)? {
                    matched.push(row);
                }
            }
        }

        let rows = match query.aggregate_field() {
            Some(agg) => {
                let idx = schema
                    .column_index(&agg.column.column)
                    .expect("validated by result_header");
                let kind = schema.columns[idx].kind;
                vec![vec![aggregate_column(
                    agg.transform,
                    &agg.column.column,
                    kind,
                    matched.iter().map(|r| &r[idx]),
                )?]]
            }
            None => {
                let indices: Vec<usize> = header
                    .iter()
                    .map(|f| {
                        schema
                            .column_index(&f.column.column)
                            .expect("validated by result_header")
                    })
                    .collect();
                matched
                    .into_iter()
                    .map(|row| indices.iter().map(|i| row[*i].clone()).collect())
                    .collect()
            }
        };
        Ok(ResultSet::new(fingerprint, header, rows))
    }

    fn probe(&self, query: &Query) -> Result<bool, StoreError> {
        let (schema, data) = self.table_parts(query.base())?;
        self.result_header(query, schema)?;
        if query.aggregate_field().is_some() {
            // Aggregates always yield exactly one row.
            return Ok(true);
        }
        if query.is_none_marked() {
            return Ok(false);
        }
        let pred = self.resolve_predicate(query.predicate(), schema)?;
        for row in data.rows.values() {
            if pred.eval(row)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn result_header(&self, query: &Query, schema: &TableSchema) -> Result<Vec<FieldUse>, StoreError> {
        if let Some(agg) = query.aggregate_field() {
            let def = schema.column(&agg.column.column).ok_or_else(|| {
                QueryError::UnknownColumn {
                    table: schema.name.clone(),
                    column: agg.column.column.clone(),
                }
            })?;
            if matches!(agg.transform, Transform::Avg | Transform::Sum)
                && !matches!(def.kind, ValueKind::Int | ValueKind::Float)
            {
                return Err(StoreError::BadAggregate {
                    transform: agg.transform,
                    column: agg.column.column.clone(),
                    kind: def.kind,
                });
            }
            return Ok(vec![agg.clone()]);
        }
        if query.projection().is_empty() {
            return Ok(schema
                .column_names()
                .map(|c| FieldUse::plain(crate::query::col(&schema.name, c)))
                .collect());
        }
        for f in query.projection() {
            if schema.column(&f.column.column).is_none() {
                return Err(QueryError::UnknownColumn {
                    table: schema.name.clone(),
                    column: f.column.column.clone(),
                }
                .into());
            }
        }
        Ok(query.projection().to_vec())
    }

    fn resolve_predicate(&self, pred: &Predicate, schema: &TableSchema) -> Result<EvalPred, StoreError> {
        Ok(match pred {
            Predicate::True => EvalPred::Always(true),
            Predicate::False => EvalPred::Always(false),
            Predicate::And(parts) => EvalPred::All(
                parts
                    .iter()
                    .map(|p| self.resolve_predicate(p, schema))
                    .collect::<Result<_, _>>()?,
            ),
            Predicate::Not(inner) => EvalPred::Negate(Box::new(self.resolve_predicate(inner, schema)?)),
            Predicate::Atom(atom) => {
                let column = match atom {
                    PredicateAtom::Compare { column, .. } => column,
                    PredicateAtom::InList { column, .. } => column,
                    PredicateAtom::InSubquery { column, .. } => column,
                };
                if column.table != schema.name {
                    return Err(StoreError::PredicateColumn {
                        table: schema.name.clone(),
                        column: column.to_string(),
                    });
                }
                let idx = schema.column_index(&column.column).ok_or_else(|| {
                    StoreError::PredicateColumn {
                        table: schema.name.clone(),
                        column: column.to_string(),
                    }
                })?;
                let kind = schema.columns[idx].kind;
                match atom {
                    PredicateAtom::Compare { op, value, .. } => {
                        check_literal(&column.column, kind, value)?;
                        EvalPred::Cmp {
                            idx,
                            op: *op,
                            value: value.clone(),
                        }
                    }
                    PredicateAtom::InList { values, .. } => {
                        for v in values {
                            check_literal(&column.column, kind, v)?;
                        }
                        EvalPred::In {
                            idx,
                            values: values.clone(),
                        }
                    }
                    PredicateAtom::InSubquery { query, .. } => {
                        // Subqueries are materialized once per execution,
                        // not per row, and are part of the same execution
                        // (they do not bump any counter).
                        let inner = self.run(query)?;
                        let inner_kind = {
                            let inner_schema = self
                                .catalog
                                .table(query.base())
                                .expect("validated by run");
                            let inner_col = &inner.header()[0].column.column;
                            inner_schema
                                .column(inner_col)
                                .expect("validated by run")
                                .kind
                        };
                        if !kinds_comparable(kind, inner_kind) {
                            return Err(StoreError::IncomparableLiteral {
                                column: column.column.clone(),
                                kind,
                                literal: format!("subquery of {inner_kind} values"),
                            });
                        }
                        EvalPred::In {
                            idx,
                            values: inner.rows.into_iter().map(|mut r| r.remove(0)).collect(),
                        }
                    }
                }
            }
        })
    }

    /// Serialize the catalog and every row as JSON lines. Loading the output
    /// reproduces the database byte-for-byte when snapshotted again.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        let catalog_doc = serde_json::json!({
            "tables": self
                .catalog
                .tables()
                .map(|t| {
                    serde_json::json!({
                        "name": t.name,
                        "primary_key": t.primary_key,
                        "columns": t.columns,
                    })
                })
                .collect::<Vec<_>>(),
        });
        writeln!(w, "{catalog_doc}")?;
        for schema in self.catalog.tables() {
            let data = &self.tables[&schema.name];
            for row in data.rows.values() {
                let mut obj = serde_json::Map::new();
                obj.insert("_table".into(), serde_json::Value::from(schema.name.as_str()));
                for (def, value) in schema.columns.iter().zip(row) {
                    obj.insert(def.name.clone(), value.to_json());
                }
                writeln!(w, "{}", serde_json::Value::Object(obj))?;
            }
        }
        Ok(())
    }

    pub fn snapshot_string(&self) -> String {
        let mut out = Vec::new();
        self.write_snapshot(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    /// Rebuild a database from [`Database::write_snapshot`] output.
    pub fn load<R: BufRead>(reader: R) -> Result<Database, StoreError> {
        let mut lines = reader.lines();
        let first = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(StoreError::Snapshot {
                    line: 1,
                    message: "empty snapshot: missing catalog line".into(),
                })
            }
        };
        let mut db = Database::new();
        for schema in parse_catalog_line(&first)? {
            db.create_table(schema)
                .map_err(|e| StoreError::Snapshot {
                    line: 1,
                    message: e.to_string(),
                })?;
        }
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line?;
            let (table, values) = parse_row_line(&line, &db.catalog).map_err(|message| {
                StoreError::Snapshot {
                    line: line_no,
                    message,
                }
            })?;
            db.insert(&table, values).map_err(|e| StoreError::Snapshot {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(db)
    }
}

fn check_literal(column: &str, kind: ValueKind, literal: &Value) -> Result<(), StoreError> {
    match literal.kind() {
        None => Ok(()), // null literals never match, but are well-formed
        Some(lit) if kinds_comparable(kind, lit) => Ok(()),
        Some(_) => Err(StoreError::IncomparableLiteral {
            column: column.to_string(),
            kind,
            literal: literal.to_string(),
        }),
    }
}

fn kinds_comparable(a: ValueKind, b: ValueKind) -> bool {
    use ValueKind::*;
    a == b || matches!((a, b), (Int, Float) | (Float, Int))
}

/// Transform a stream of column values into the aggregate's single value.
/// Nulls are skipped; an empty input yields null (or 0 for counts).
fn aggregate_column<'a>(
    transform: Transform,
    column: &str,
    kind: ValueKind,
    values: impl Iterator<Item = &'a Value>,
) -> Result<Value, StoreError> {
    let present: Vec<&Value> = values.filter(|v| !matches!(v, Value::Null)).collect();
    match transform {
        Transform::Count => Ok(Value::Int(present.len() as i64)),
        Transform::None => Err(QueryError::IdentityAggregate.into()),
        _ if present.is_empty() => Ok(Value::Null),
        Transform::Avg => {
            let mut sum = 0.0;
            for v in &present {
                sum += numeric(v);
            }
            Ok(Value::Float(sum / present.len() as f64))
        }
        Transform::Sum => match kind {
            ValueKind::Int => {
                let mut sum: i64 = 0;
                for v in &present {
                    let Value::Int(i) = v else { unreachable!("kind-checked") };
                    sum = sum
                        .checked_add(*i)
                        .ok_or_else(|| StoreError::NumericOverflow(column.to_string()))?;
                }
                Ok(Value::Int(sum))
            }
            _ => {
                let mut sum = 0.0;
                for v in &present {
                    sum += numeric(v);
                }
                Ok(Value::Float(sum))
            }
        },
        Transform::Min | Transform::Max => {
            let mut best = present[0];
            for v in &present[1..] {
                let ord = v.compare(best).map_err(|e| StoreError::IncomparableLiteral {
                    column: column.to_string(),
                    kind,
                    literal: e.to_string(),
                })?;
                let replace = match (transform, ord) {
                    (Transform::Min, Some(std::cmp::Ordering::Less)) => true,
                    (Transform::Max, Some(std::cmp::Ordering::Greater)) => true,
                    _ => false,
                };
                if replace {
                    best = v;
                }
            }
            Ok(best.clone())
        }
    }
}

fn numeric(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        _ => unreachable!("kind-checked before aggregation"),
    }
}

/// A predicate with column names resolved to row indices and subqueries
/// already materialized. Comparisons involving null are false; `Negate` is
/// plain boolean negation over that two-valued result.
#[derive(Debug)]
enum EvalPred {
    Always(bool),
    Cmp { idx: usize, op: CompareOp, value: Value },
    In { idx: usize, values: Vec<Value> },
    All(Vec<EvalPred>),
    Negate(Box<EvalPred>),
}

impl EvalPred {
    fn eval(&self, row: &[Value]) -> Result<bool, StoreError> {
        Ok(match self {
            EvalPred::Always(b) => *b,
            EvalPred::Cmp { idx, op, value } => {
                let ord = row[*idx].compare(value).map_err(|e| {
                    StoreError::IncomparableLiteral {
                        column: format!("#{idx}"),
                        kind: e.left,
                        literal: value.to_string(),
                    }
                })?;
                match ord {
                    None => false,
                    Some(ord) => match op {
                        CompareOp::Eq => ord.is_eq(),
                        CompareOp::Ne => ord.is_ne(),
                        CompareOp::Lt => ord.is_lt(),
                        CompareOp::Le => ord.is_le(),
                        CompareOp::Gt => ord.is_gt(),
                        CompareOp::Ge => ord.is_ge(),
                    },
                }
            }
            EvalPred::In { idx, values } => {
                let cell = &row[*idx];
                let mut found = false;
                for v in values {
                    if cell.compares_equal(v).unwrap_or(false) {
                        found = true;
                        break;
                    }
                }
                found
            }
            EvalPred::All(parts) => {
                for p in parts {
                    if !p.eval(row)? {
                        return Ok(false);
                    }
                }
                true
            }
            EvalPred::Negate(inner) => !inner.eval(row)?,
        })
    }
}

fn parse_catalog_line(line: &str) -> Result<Vec<TableSchema>, StoreError> {
    let snap_err = |message: String| StoreError::Snapshot { line: 1, message };
    let doc: serde_json::Value =
        serde_json::from_str(line).map_err(|e| snap_err(format!("invalid JSON: {e}")))?;
    let tables = doc
        .get("tables")
        .and_then(|t| t.as_array())
        .ok_or_else(|| snap_err("catalog line must be {\"tables\": [...]}".into()))?;
    let mut out = Vec::with_capacity(tables.len());
    for t in tables {
        let parsed: CatalogTable = serde_json::from_value(t.clone())
            .map_err(|e| snap_err(format!("bad table entry: {e}")))?;
        let columns: Vec<(&str, ValueKind)> = parsed
            .columns
            .iter()
            .map(|c| (c.name.as_str(), c.kind))
            .collect();
        let schema = TableSchema::new(&parsed.name, &columns, parsed.primary_key.as_deref())
            .map_err(|e| snap_err(e.to_string()))?;
        out.push(schema);
    }
    Ok(out)
}

#[derive(serde::Deserialize)]
struct CatalogTable {
    name: String,
    primary_key: Option<String>,
    columns: Vec<crate::schema::ColumnDef>,
}

fn parse_row_line(line: &str, catalog: &SchemaCatalog) -> Result<(String, Vec<Value>), String> {
    let doc: serde_json::Value =
        serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = doc.as_object().ok_or("row line must be a JSON object")?;
    let table = obj
        .get("_table")
        .and_then(|t| t.as_str())
        .ok_or("row line missing string `_table`")?
        .to_string();
    let schema = catalog
        .table(&table)
        .ok_or_else(|| format!("row for unknown table {table}"))?;
    if obj.len() != schema.columns.len() + 1 {
        return Err(format!(
            "table {table} expects {} columns, row line has {}",
            schema.columns.len(),
            obj.len() - 1
        ));
    }
    let mut values = Vec::with_capacity(schema.columns.len());
    for def in &schema.columns {
        let raw = obj
            .get(&def.name)
            .ok_or_else(|| format!("row for {table} missing column {}", def.name))?;
        let value = Value::from_json(def.kind, raw)
            .map_err(|e| format!("column {}.{}: {e}", table, def.name))?;
        values.push(value);
    }
    Ok((table, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{col, Predicate, Query, Transform};

    fn sample_db() -> Database {
        let mut db = Database::new();
        db.create_table(
            TableSchema::new(
                "User",
                &[
                    ("id", ValueKind::Int),
                    ("name", ValueKind::Text),
                    ("age", ValueKind::Int),
                ],
                Some("id"),
            )
            .unwrap(),
        )
        .unwrap();
        db.create_table(
            TableSchema::new(
                "Payroll",
                &[
                    ("id", ValueKind::Int),
                    ("mgid", ValueKind::Int),
                    ("salary", ValueKind::Int),
                ],
                Some("id"),
            )
            .unwrap(),
        )
        .unwrap();
        db.create_table(
            TableSchema::new(
                "Invitee",
                &[("eid", ValueKind::Int), ("empid", ValueKind::Int)],
                None,
            )
            .unwrap(),
        )
        .unwrap();
        for (id, name, age) in [(3, "Coral", 29), (1, "Alice", 52), (2, "Basil", 41)] {
            db.insert("User", vec![id.into(), name.into(), age.into()])
                .unwrap();
        }
        for (id, mgid, salary) in [(1, 3, 100), (2, 3, 80), (3, 1, 120)] {
            db.insert("Payroll", vec![id.into(), mgid.into(), salary.into()])
                .unwrap();
        }
        for (eid, empid) in [(10, 1), (10, 2), (11, 2)] {
            db.insert("Invitee", vec![eid.into(), empid.into()]).unwrap();
        }
        db
    }

    #[test]
    fn scans_return_rows_in_key_order() {
        let db = sample_db();
        let rs = db.execute(&Query::all("User")).unwrap();
        let names: Vec<&Value> = rs.rows().iter().map(|r| &r[1]).collect();
        assert_eq!(
            names,
            [&Value::from("Alice"), &Value::from("Basil"), &Value::from("Coral")]
        );
    }

    #[test]
    fn tables_without_keys_keep_insertion_order() {
        let db = sample_db();
        let rs = db.execute(&Query::all("Invitee")).unwrap();
        let pairs: Vec<(i64, i64)> = rs
            .rows()
            .iter()
            .map(|r| match (&r[0], &r[1]) {
                (Value::Int(a), Value::Int(b)) => (*a, *b),
                _ => panic!("ints expected"),
            })
            .collect();
        assert_eq!(pairs, [(10, 1), (10, 2), (11, 2)]);
    }

    #[test]
    fn filter_and_projection() {
        let db = sample_db();
        let q = Query::all("User")
            .values(&["name"])
            .unwrap()
            .filter(Predicate::gt(col("User", "age"), 45));
        let rs = db.execute(&q).unwrap();
        assert_eq!(rs.to_json(), serde_json::json!([{"name": "Alice"}]));
    }

    #[test]
    fn subquery_exclusion_matches_hand_computation() {
        // Non-managers in Payroll: ids not appearing in mgid = {2}.
        let managers = Query::all("Payroll").values(&["mgid"]).unwrap();
        let q = Query::all("Payroll")
            .exclude(Predicate::in_subquery(col("Payroll", "id"), managers).unwrap())
            .aggregate(Transform::Avg, "salary")
            .unwrap();
        let db = sample_db();
        let rs = db.execute(&q).unwrap();
        assert_eq!(rs.single_value(), Some(&Value::Float(80.0)));
    }

    #[test]
    fn aggregates_over_empty_sets() {
        let db = sample_db();
        let base = Query::all("Payroll").none();
        let avg = base.clone().aggregate(Transform::Avg, "salary").unwrap();
        assert_eq!(db.execute(&avg).unwrap().single_value(), Some(&Value::Null));
        let count = base.clone().aggregate(Transform::Count, "salary").unwrap();
        assert_eq!(db.execute(&count).unwrap().single_value(), Some(&Value::Int(0)));
        let sum = base.aggregate(Transform::Sum, "salary").unwrap();
        assert_eq!(db.execute(&sum).unwrap().single_value(), Some(&Value::Null));
    }

    #[test]
    fn min_max_and_count_of_values() {
        let db = sample_db();
        let q = Query::all("Payroll").aggregate(Transform::Max, "salary").unwrap();
        assert_eq!(db.execute(&q).unwrap().single_value(), Some(&Value::Int(120)));
        let q = Query::all("Payroll").aggregate(Transform::Min, "salary").unwrap();
        assert_eq!(db.execute(&q).unwrap().single_value(), Some(&Value::Int(80)));
        let q = Query::all("Payroll").aggregate(Transform::Count, "id").unwrap();
        assert_eq!(db.execute(&q).unwrap().single_value(), Some(&Value::Int(3)));
    }

    #[test]
    fn null_comparisons_never_match() {
        let mut db = sample_db();
        db.insert("User", vec![4.into(), "Dana".into(), Value::Null])
            .unwrap();
        let older = Query::all("User").filter(Predicate::gt(col("User", "age"), 0));
        assert_eq!(db.execute(&older).unwrap().row_count(), 3);
        // Two-valued negation: NOT (null > 0) is true here, unlike SQL.
        let negated = Query::all("User").exclude(Predicate::gt(col("User", "age"), 0));
        let rs = db.execute(&negated).unwrap();
        assert_eq!(rs.row_count(), 1);
        assert_eq!(rs.value(0, "name"), Some(&Value::from("Dana")));
    }

    #[test]
    fn insert_validation() {
        let mut db = sample_db();
        assert!(matches!(
            db.insert("User", vec![9.into(), "X".into()]).unwrap_err(),
            StoreError::Arity { expected: 3, got: 2, .. }
        ));
        assert!(matches!(
            db.insert("User", vec![9.into(), 7.into(), 7.into()]).unwrap_err(),
            StoreError::ValueKind { .. }
        ));
        assert!(matches!(
            db.insert("User", vec![1.into(), "Dup".into(), 1.into()]).unwrap_err(),
            StoreError::DuplicateKey { .. }
        ));
        assert!(matches!(
            db.insert("User", vec![Value::Null, "N".into(), 1.into()]).unwrap_err(),
            StoreError::InvalidKey(_)
        ));
        assert!(matches!(
            db.insert("Ghost", vec![]).unwrap_err(),
            StoreError::Query(QueryError::UnknownTable(_))
        ));
    }

    #[test]
    fn execution_validation() {
        let db = sample_db();
        let foreign = Query::all("User").filter(Predicate::eq(col("Payroll", "id"), 1));
        assert!(matches!(
            db.execute(&foreign).unwrap_err(),
            StoreError::PredicateColumn { .. }
        ));
        let mistyped = Query::all("User").filter(Predicate::eq(col("User", "name"), 3));
        assert!(matches!(
            db.execute(&mistyped).unwrap_err(),
            StoreError::IncomparableLiteral { .. }
        ));
        let missing = Query::all("User").values(&["ghost"]).unwrap();
        assert!(matches!(
            db.execute(&missing).unwrap_err(),
            StoreError::Query(QueryError::UnknownColumn { .. })
        ));
        let text_avg = Query::all("User").aggregate(Transform::Avg, "name").unwrap();
        assert!(matches!(
            db.execute(&text_avg).unwrap_err(),
            StoreError::BadAggregate { .. }
        ));
    }

    #[test]
    fn exists_and_counters() {
        let db = sample_db();
        assert!(db.exists(&Query::all("User")).unwrap());
        assert!(!db.exists(&Query::all("User").none()).unwrap());
        assert!(!db
            .exists(&Query::all("User").filter(Predicate::gt(col("User", "age"), 99)))
            .unwrap());
        let _ = db.execute(&Query::all("User")).unwrap();
        let stats = db.stats();
        assert_eq!(stats.executes, 4);
        assert_eq!(stats.privileged_executes, 0);
        let _ = db.execute_privileged(&Query::all("User")).unwrap();
        assert_eq!(db.stats().privileged_executes, 1);
        assert_eq!(db.stats().executes, 4);
    }

    #[test]
    fn lookup_by_key() {
        let db = sample_db();
        let row = db.lookup("User", &Value::Int(2)).unwrap().unwrap();
        assert_eq!(row[1], ("name".to_string(), Value::from("Basil")));
        assert!(db.lookup("User", &Value::Int(99)).unwrap().is_none());
        assert!(matches!(
            db.lookup("Invitee", &Value::Int(10)).unwrap_err(),
            StoreError::NoPrimaryKey(_)
        ));
    }

    #[test]
    fn snapshot_round_trips_byte_for_byte() {
        let db = sample_db();
        let first = db.snapshot_string();
        let reloaded = Database::load(first.as_bytes()).unwrap();
        assert_eq!(reloaded.snapshot_string(), first);
        assert_eq!(reloaded.row_count("User"), 3);
        assert_eq!(reloaded.row_count("Invitee"), 3);
        // Insertion order of keyless tables survives the round trip.
        let rs = reloaded.execute(&Query::all("Invitee")).unwrap();
        assert_eq!(rs.rows()[0], vec![Value::Int(10), Value::Int(1)]);
    }

    #[test]
    fn snapshot_errors_carry_line_numbers() {
        let db = sample_db();
        let snap = db.snapshot_string();
        let mut lines: Vec<&str> = snap.lines().collect();
        lines[3] = "{\"_table\": \"Nope\"}";
        let text = lines.join("\n");
        match Database::load(text.as_bytes()).unwrap_err() {
            StoreError::Snapshot { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("Nope"), "message: {message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        match Database::load("not json".as_bytes()).unwrap_err() {
            StoreError::Snapshot { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fingerprints_are_stable_and_distinguish_queries() {
        let db = sample_db();
        let a = db.execute(&Query::all("User")).unwrap();
        let b = db.execute(&Query::all("User")).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = db.execute(&Query::all("User").none()).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn message_results_serialize_as_a_single_string() {
        let rs = ResultSet::message("Follow user to see the posts");
        assert!(rs.is_message());
        assert_eq!(
            rs.to_json(),
            serde_json::json!(["Follow user to see the posts"])
        );
    }
}
