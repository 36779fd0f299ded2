//! Selectors: the field sets policies attach to.

use std::collections::BTreeSet;
use std::fmt;

use crate::query::{col, ColumnRef, FieldUse, Transform};

use super::EngineError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SelectorEntry {
    /// Any use of the column — raw or under any transform.
    Column(ColumnRef),
    /// The column used under exactly this transform. A policy over
    /// `Avg(Payroll.salary)` governs the released average, not the raw
    /// salaries.
    Transformed(ColumnRef, Transform),
    /// Any use of any column of the table.
    Table(String),
}

impl SelectorEntry {
    fn covered_by(&self, fields: &BTreeSet<FieldUse>) -> bool {
        match self {
            SelectorEntry::Column(c) => fields.iter().any(|f| f.column == *c),
            SelectorEntry::Transformed(c, t) => fields.contains(&FieldUse {
                column: c.clone(),
                transform: *t,
            }),
            SelectorEntry::Table(t) => fields.iter().any(|f| f.column.table == *t),
        }
    }

    /// Whether a post-phase body owning this entry may rewrite `column`.
    pub fn covers_column(&self, column: &ColumnRef) -> bool {
        match self {
            SelectorEntry::Column(c) => c == column,
            SelectorEntry::Transformed(c, _) => c == column,
            SelectorEntry::Table(t) => *t == column.table,
        }
    }
}

impl fmt::Display for SelectorEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorEntry::Column(c) => write!(f, "{c}"),
            SelectorEntry::Transformed(c, t) => write!(f, "{t:?}({c})"),
            SelectorEntry::Table(t) => write!(f, "{t}.*"),
        }
    }
}

/// A non-empty set of [`SelectorEntry`]s. A selector matches a query when
/// **every** entry is covered by the query's used fields — a policy over the
/// name/age pair fires only on queries that involve both, while single-entry
/// selectors fire on any use of their field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    entries: BTreeSet<SelectorEntry>,
}

impl Selector {
    pub fn new(entries: impl IntoIterator<Item = SelectorEntry>) -> Result<Selector, EngineError> {
        let entries: BTreeSet<SelectorEntry> = entries.into_iter().collect();
        if entries.is_empty() {
            return Err(EngineError::EmptySelector);
        }
        Ok(Selector { entries })
    }

    /// Single plain column.
    pub fn column(table: &str, column: &str) -> Selector {
        Selector::new([SelectorEntry::Column(col(table, column))]).expect("non-empty")
    }

    /// Several plain columns of possibly different tables.
    pub fn columns<'a>(cols: impl IntoIterator<Item = &'a (&'a str, &'a str)>) -> Selector {
        Selector::new(
            cols.into_iter()
                .map(|(t, c)| SelectorEntry::Column(col(*t, *c))),
        )
        .expect("caller passes at least one column")
    }

    /// A column under an exact transform.
    pub fn transformed(table: &str, column: &str, transform: Transform) -> Selector {
        Selector::new([SelectorEntry::Transformed(col(table, column), transform)])
            .expect("non-empty")
    }

    /// Whole-table wildcard.
    pub fn table(table: &str) -> Selector {
        Selector::new([SelectorEntry::Table(table.to_string())]).expect("non-empty")
    }

    pub fn entries(&self) -> impl Iterator<Item = &SelectorEntry> {
        self.entries.iter()
    }

    pub fn matches(&self, fields: &BTreeSet<FieldUse>) -> bool {
        self.entries.iter().all(|e| e.covered_by(fields))
    }

    pub fn covers_column(&self, column: &ColumnRef) -> bool {
        self.entries.iter().any(|e| e.covers_column(column))
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        f.write_str("{")?;
        for e in &self.entries {
            if !first {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
            first = false;
        }
        f.write_str("}")
    }
}
