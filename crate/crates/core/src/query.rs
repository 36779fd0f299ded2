//! The query AST applications build and policies rewrite.
//!
//! A [`Query`] starts from [`Query::all`] and is narrowed by the combinators
//! `filter`, `exclude`, `values`, `none`, and `aggregate`. Builders never
//! consult the schema; name resolution happens when the query is executed or
//! rendered, so policies can rewrite queries without holding a database
//! handle.

use std::collections::BTreeSet;
use std::fmt;

use crate::schema::SchemaCatalog;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> ColumnRef {
        ColumnRef {
            table: table.into(),
            column: column.into(),
        }
    }
}

/// Shorthand for [`ColumnRef::new`].
pub fn col(table: impl Into<String>, column: impl Into<String>) -> ColumnRef {
    ColumnRef::new(table, column)
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// Aggregation applied to a column. `None` is the identity: the column's
/// plain values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transform {
    None,
    Avg,
    Count,
    Sum,
    Min,
    Max,
}

impl Transform {
    pub fn sql_name(self) -> &'static str {
        match self {
            Transform::None => "",
            Transform::Avg => "AVG",
            Transform::Count => "COUNT",
            Transform::Sum => "SUM",
            Transform::Min => "MIN",
            Transform::Max => "MAX",
        }
    }
}

/// A column together with the transform under which a query uses it.
/// `Payroll.salary` accessed through an average is a different field use
/// than the raw column, and policies may target either.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldUse {
    pub column: ColumnRef,
    pub transform: Transform,
}

impl FieldUse {
    pub fn plain(column: ColumnRef) -> FieldUse {
        FieldUse {
            column,
            transform: Transform::None,
        }
    }

    pub fn transformed(column: ColumnRef, transform: Transform) -> FieldUse {
        FieldUse { column, transform }
    }
}

impl fmt::Display for FieldUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transform {
            Transform::None => write!(f, "{}", self.column),
            t => write!(f, "{:?}({})", t, self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn sql_symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "<>",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredicateAtom {
    Compare {
        column: ColumnRef,
        op: CompareOp,
        value: Value,
    },
    InList {
        column: ColumnRef,
        values: Vec<Value>,
    },
    InSubquery {
        column: ColumnRef,
        query: Box<Query>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    True,
    False,
    Atom(PredicateAtom),
    And(Vec<Predicate>),
    Not(Box<Predicate>),
}

macro_rules! compare_ctor {
    ($name:ident, $op:ident) => {
        pub fn $name(column: ColumnRef, value: impl Into<Value>) -> Predicate {
            Predicate::Atom(PredicateAtom::Compare {
                column,
                op: CompareOp::$op,
                value: value.into(),
            })
        }
    };
}

impl Predicate {
    compare_ctor!(eq, Eq);
    compare_ctor!(ne, Ne);
    compare_ctor!(lt, Lt);
    compare_ctor!(le, Le);
    compare_ctor!(gt, Gt);
    compare_ctor!(ge, Ge);

    pub fn in_list(column: ColumnRef, values: impl IntoIterator<Item = impl Into<Value>>) -> Predicate {
        Predicate::Atom(PredicateAtom::InList {
            column,
            values: values.into_iter().map(Into::into).collect(),
        })
    }

    /// Membership in the rows of a subquery. The subquery must project
    /// exactly one plain column.
    pub fn in_subquery(column: ColumnRef, query: Query) -> Result<Predicate, QueryError> {
        if query.aggregate.is_some() || query.projection.len() != 1 {
            return Err(QueryError::SubqueryShape);
        }
        Ok(Predicate::Atom(PredicateAtom::InSubquery {
            column,
            query: Box::new(query),
        }))
    }

    pub fn negate(self) -> Predicate {
        Predicate::Not(Box::new(self))
    }

    /// Conjunction, flattening `True` operands away.
    pub fn and_with(self, other: Predicate) -> Predicate {
        match (self, other) {
            (Predicate::True, p) | (p, Predicate::True) => p,
            (Predicate::And(mut parts), p) => {
                parts.push(p);
                Predicate::And(parts)
            }
            (a, b) => Predicate::And(vec![a, b]),
        }
    }

    fn collect_fields(&self, out: &mut BTreeSet<FieldUse>, catalog: &SchemaCatalog) -> Result<(), QueryError> {
        match self {
            Predicate::True | Predicate::False => Ok(()),
            Predicate::Atom(atom) => {
                let column = match atom {
                    PredicateAtom::Compare { column, .. } => column,
                    PredicateAtom::InList { column, .. } => column,
                    PredicateAtom::InSubquery { column, query } => {
                        query.collect_fields(out, catalog)?;
                        column
                    }
                };
                out.insert(FieldUse::plain(column.clone()));
                Ok(())
            }
            Predicate::And(parts) => {
                for p in parts {
                    p.collect_fields(out, catalog)?;
                }
                Ok(())
            }
            Predicate::Not(inner) => inner.collect_fields(out, catalog),
        }
    }

    fn render(&self, catalog: &SchemaCatalog) -> Result<String, QueryError> {
        Ok(match self {
            Predicate::True => "1 = 1".to_string(),
            Predicate::False => "1 = 0".to_string(),
            Predicate::Atom(PredicateAtom::Compare { column, op, value }) => {
                format!("{} {} {}", column.column, op.sql_symbol(), value)
            }
            Predicate::Atom(PredicateAtom::InList { column, values }) => {
                let items: Vec<String> = values.iter().map(Value::to_string).collect();
                format!("{} IN ({})", column.column, items.join(", "))
            }
            Predicate::Atom(PredicateAtom::InSubquery { column, query }) => {
                format!("{} IN ({})", column.column, query.render_sql(catalog, false)?)
            }
            Predicate::And(parts) => {
                let rendered: Result<Vec<String>, QueryError> =
                    parts.iter().map(|p| Ok(format!("({})", p.render(catalog)?))).collect();
                rendered?.join(" AND ")
            }
            Predicate::Not(inner) => format!("NOT ({})", inner.render(catalog)?),
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum QueryError {
    #[error("table {0} does not exist")]
    UnknownTable(String),
    #[error("table {table} has no column {column}")]
    UnknownColumn { table: String, column: String },
    #[error("values() requires at least one column")]
    EmptyColumnList,
    #[error("column {0} is listed twice")]
    DuplicateColumn(String),
    #[error("column {0} is not in the current projection")]
    NotInProjection(String),
    #[error("query is already aggregated")]
    AlreadyAggregated,
    #[error("aggregate requires a real transform, not the identity")]
    IdentityAggregate,
    #[error("IN subquery must project exactly one plain column")]
    SubqueryShape,
}

/// A read query over a single table.
///
/// `projection` empty means "all columns of the base table". `none_marked`
/// queries keep their shape but return no rows. An `aggregate` replaces the
/// projection with a single transformed column.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    base: String,
    projection: Vec<FieldUse>,
    predicate: Predicate,
    aggregate: Option<FieldUse>,
    none_marked: bool,
}

impl Query {
    /// Every row and column of `table`.
    pub fn all(table: impl Into<String>) -> Query {
        Query {
            base: table.into(),
            projection: Vec::new(),
            predicate: Predicate::True,
            aggregate: None,
            none_marked: false,
        }
    }

    /// Keep only rows satisfying `predicate`.
    pub fn filter(mut self, predicate: Predicate) -> Query {
        self.predicate = self.predicate.and_with(predicate);
        self
    }

    /// Drop rows satisfying `predicate`.
    pub fn exclude(self, predicate: Predicate) -> Query {
        self.filter(predicate.negate())
    }

    /// Narrow the projection to `columns`. On a query that already has an
    /// explicit projection only a subset of it may be kept.
    pub fn values(mut self, columns: &[&str]) -> Result<Query, QueryError> {
        if self.aggregate.is_some() {
            return Err(QueryError::AlreadyAggregated);
        }
        if columns.is_empty() {
            return Err(QueryError::EmptyColumnList);
        }
        let mut seen = BTreeSet::new();
        for c in columns {
            if !seen.insert(*c) {
                return Err(QueryError::DuplicateColumn(c.to_string()));
            }
            if !self.projection.is_empty()
                && !self.projection.iter().any(|f| f.column.column == *c)
            {
                return Err(QueryError::NotInProjection(c.to_string()));
            }
        }
        self.projection = columns
            .iter()
            .map(|c| FieldUse::plain(col(self.base.clone(), *c)))
            .collect();
        Ok(self)
    }

    /// Same shape, no rows.
    pub fn none(mut self) -> Query {
        self.none_marked = true;
        self
    }

    /// Collapse the query to a single aggregated value of `column`.
    pub fn aggregate(mut self, transform: Transform, column: &str) -> Result<Query, QueryError> {
        if transform == Transform::None {
            return Err(QueryError::IdentityAggregate);
        }
        if self.aggregate.is_some() {
            return Err(QueryError::AlreadyAggregated);
        }
        if !self.projection.is_empty()
            && !self.projection.iter().any(|f| f.column.column == column)
        {
            return Err(QueryError::NotInProjection(column.to_string()));
        }
        self.aggregate = Some(FieldUse::transformed(
            col(self.base.clone(), column),
            transform,
        ));
        self.projection.clear();
        Ok(self)
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn projection(&self) -> &[FieldUse] {
        &self.projection
    }

    pub fn predicate(&self) -> &Predicate {
        &self.predicate
    }

    pub fn aggregate_field(&self) -> Option<&FieldUse> {
        self.aggregate.as_ref()
    }

    pub fn is_none_marked(&self) -> bool {
        self.none_marked
    }

    fn collect_fields(&self, out: &mut BTreeSet<FieldUse>, catalog: &SchemaCatalog) -> Result<(), QueryError> {
        match (&self.aggregate, self.projection.is_empty()) {
            (Some(agg), _) => {
                // An aggregated column is used both under the transform and,
                // implicitly, as the raw column the aggregate reads.
                out.insert(agg.clone());
                out.insert(FieldUse::plain(agg.column.clone()));
            }
            (None, false) => {
                out.extend(self.projection.iter().cloned());
            }
            (None, true) => {
                let schema = catalog
                    .table(&self.base)
                    .ok_or_else(|| QueryError::UnknownTable(self.base.clone()))?;
                out.extend(
                    schema
                        .column_names()
                        .map(|c| FieldUse::plain(col(&self.base, c))),
                );
            }
        }
        self.predicate.collect_fields(out, catalog)
    }

    /// Every field the query touches anywhere: projection (expanded against
    /// the catalog when implicit), aggregates, and all predicate columns,
    /// including those of subqueries. Policy selection matches on this set,
    /// so a field only referenced in a WHERE clause is still covered.
    pub fn fields_used(&self, catalog: &SchemaCatalog) -> Result<BTreeSet<FieldUse>, QueryError> {
        let mut out = BTreeSet::new();
        self.collect_fields(&mut out, catalog)?;
        Ok(out)
    }

    fn render_sql(&self, catalog: &SchemaCatalog, top_level: bool) -> Result<String, QueryError> {
        let schema = catalog
            .table(&self.base)
            .ok_or_else(|| QueryError::UnknownTable(self.base.clone()))?;
        let select = match &self.aggregate {
            Some(agg) => format!(
                "{}({})",
                agg.transform.sql_name(),
                agg.column.column
            ),
            None if self.projection.is_empty() => {
                schema.column_names().collect::<Vec<_>>().join(", ")
            }
            None => self
                .projection
                .iter()
                .map(|f| f.column.column.clone())
                .collect::<Vec<_>>()
                .join(", "),
        };
        let mut sql = format!("SELECT {select} FROM {}", self.base);
        if self.none_marked {
            sql.push_str(" WHERE (1 = 0)");
        } else if self.predicate != Predicate::True {
            sql.push_str(&format!(" WHERE ({})", self.predicate.render(catalog)?));
        }
        if top_level && self.aggregate.is_none() {
            if let Some(pk) = &schema.primary_key {
                sql.push_str(&format!(" ORDER BY {pk}"));
            }
        }
        Ok(sql)
    }

    /// Render the query as SQL. Purely informational: the embedded store
    /// evaluates the AST directly, but traces and logs show this form.
    pub fn to_sql(&self, catalog: &SchemaCatalog) -> Result<String, QueryError> {
        self.render_sql(catalog, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::TableSchema;
    use crate::value::ValueKind;

    fn catalog() -> SchemaCatalog {
        let mut c = SchemaCatalog::new();
        c.add_table(
            TableSchema::new(
                "User",
                &[
                    ("id", ValueKind::Int),
                    ("name", ValueKind::Text),
                    ("age", ValueKind::Int),
                    ("address", ValueKind::Text),
                    ("dept", ValueKind::Text),
                ],
                Some("id"),
            )
            .unwrap(),
        )
        .unwrap();
        c.add_table(
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
        c.add_table(
            TableSchema::new(
                "Invitee",
                &[("eid", ValueKind::Int), ("empid", ValueKind::Int)],
                None,
            )
            .unwrap(),
        )
        .unwrap();
        c
    }

    #[test]
    fn sql_for_plain_filter() {
        let q = Query::all("User").filter(Predicate::eq(col("User", "id"), 7));
        assert_eq!(
            q.to_sql(&catalog()).unwrap(),
            "SELECT id, name, age, address, dept FROM User WHERE (id = 7) ORDER BY id"
        );
    }

    #[test]
    fn sql_for_aggregate_has_no_order_by() {
        let q = Query::all("Payroll")
            .aggregate(Transform::Avg, "salary")
            .unwrap();
        assert_eq!(
            q.to_sql(&catalog()).unwrap(),
            "SELECT AVG(salary) FROM Payroll"
        );
    }

    #[test]
    fn sql_for_none_pins_empty_where() {
        let q = Query::all("User").none();
        assert_eq!(
            q.to_sql(&catalog()).unwrap(),
            "SELECT id, name, age, address, dept FROM User WHERE (1 = 0) ORDER BY id"
        );
    }

    #[test]
    fn sql_for_subquery_and_exclusion() {
        let managers = Query::all("Payroll").values(&["mgid"]).unwrap();
        let q = Query::all("Payroll")
            .exclude(Predicate::in_subquery(col("Payroll", "id"), managers).unwrap())
            .aggregate(Transform::Avg, "salary")
            .unwrap();
        assert_eq!(
            q.to_sql(&catalog()).unwrap(),
            "SELECT AVG(salary) FROM Payroll WHERE (NOT (id IN (SELECT mgid FROM Payroll)))"
        );
    }

    #[test]
    fn sql_conjunction_parenthesizes_operands() {
        let q = Query::all("User")
            .filter(Predicate::gt(col("User", "age"), 30))
            .filter(Predicate::in_list(col("User", "id"), [1, 3]));
        assert_eq!(
            q.to_sql(&catalog()).unwrap(),
            "SELECT id, name, age, address, dept FROM User WHERE ((age > 30) AND (id IN (1, 3))) ORDER BY id"
        );
    }

    #[test]
    fn sql_without_primary_key_has_no_order_by() {
        let q = Query::all("Invitee");
        assert_eq!(
            q.to_sql(&catalog()).unwrap(),
            "SELECT eid, empid FROM Invitee"
        );
    }

    #[test]
    fn fields_expand_implicit_projection() {
        let q = Query::all("User").filter(Predicate::gt(col("User", "age"), 45));
        let fields = q.fields_used(&catalog()).unwrap();
        let shown: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
        assert_eq!(
            shown,
            ["User.address", "User.age", "User.dept", "User.id", "User.name"]
        );
    }

    #[test]
    fn fields_of_projected_query_include_predicate_columns() {
        // Projecting only `name` while filtering on `age` still uses `age`:
        // the result depends on it, so policies over `age` must see it.
        let q = Query::all("User")
            .values(&["name"])
            .unwrap()
            .filter(Predicate::gt(col("User", "age"), 45));
        let fields = q.fields_used(&catalog()).unwrap();
        let shown: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
        assert_eq!(shown, ["User.age", "User.name"]);
    }

    #[test]
    fn fields_of_aggregate_include_raw_column_and_subquery() {
        let managers = Query::all("Payroll").values(&["mgid"]).unwrap();
        let q = Query::all("Payroll")
            .exclude(Predicate::in_subquery(col("Payroll", "id"), managers).unwrap())
            .aggregate(Transform::Avg, "salary")
            .unwrap();
        let fields = q.fields_used(&catalog()).unwrap();
        let shown: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
        assert_eq!(
            shown,
            ["Payroll.id", "Payroll.mgid", "Payroll.salary", "Avg(Payroll.salary)"]
        );
    }

    #[test]
    fn values_narrows_but_never_widens() {
        let q = Query::all("User").values(&["id", "age"]).unwrap();
        let narrowed = q.clone().values(&["age"]).unwrap();
        assert_eq!(narrowed.projection().len(), 1);
        assert_eq!(
            q.values(&["name"]).unwrap_err(),
            QueryError::NotInProjection("name".into())
        );
    }

    #[test]
    fn builder_misuse_is_rejected() {
        assert_eq!(
            Query::all("User").values(&[]).unwrap_err(),
            QueryError::EmptyColumnList
        );
        assert_eq!(
            Query::all("User").values(&["id", "id"]).unwrap_err(),
            QueryError::DuplicateColumn("id".into())
        );
        assert_eq!(
            Query::all("Payroll")
                .aggregate(Transform::None, "salary")
                .unwrap_err(),
            QueryError::IdentityAggregate
        );
        let agg = Query::all("Payroll")
            .aggregate(Transform::Avg, "salary")
            .unwrap();
        assert_eq!(
            agg.clone().aggregate(Transform::Sum, "salary").unwrap_err(),
            QueryError::AlreadyAggregated
        );
        assert_eq!(
            agg.values(&["salary"]).unwrap_err(),
            QueryError::AlreadyAggregated
        );
        assert_eq!(
            Predicate::in_subquery(col("Payroll", "id"), Query::all("Payroll")).unwrap_err(),
            QueryError::SubqueryShape
        );
    }

    #[test]
    fn filter_on_none_keeps_the_marker() {
        let q = Query::all("User").none().filter(Predicate::eq(col("User", "id"), 1));
        assert!(q.is_none_marked());
        assert!(q.to_sql(&catalog()).unwrap().contains("WHERE (1 = 0)"));
    }

    #[test]
    fn unknown_table_fails_at_render_time_not_build_time() {
        let q = Query::all("Ghost");
        assert_eq!(
            q.to_sql(&catalog()).unwrap_err(),
            QueryError::UnknownTable("Ghost".into())
        );
        assert_eq!(
            q.fields_used(&catalog()).unwrap_err(),
            QueryError::UnknownTable("Ghost".into())
        );
    }
}
