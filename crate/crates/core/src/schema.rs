//! Table schemas and the catalog a database is created from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::value::ValueKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("table {table} declares column {column} twice")]
    DuplicateColumn { table: String, column: String },
    #[error("table {table} has no columns")]
    NoColumns { table: String },
    #[error("primary key {column} is not a column of table {table}")]
    UnknownPrimaryKey { table: String, column: String },
    #[error("primary key {column} of table {table} must be int or text, not {kind}")]
    UnkeyableKind {
        table: String,
        column: String,
        kind: ValueKind,
    },
    #[error("table {0} is already defined")]
    DuplicateTable(String),
}

/// Column layout of one table. Row storage and result headers follow the
/// declaration order of `columns`.
///
/// `primary_key` is optional: tables without one (pure association tables
/// such as an event/invitee mapping) keep their rows in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub primary_key: Option<String>,
}

impl TableSchema {
    pub fn new(
        name: impl Into<String>,
        columns: &[(&str, ValueKind)],
        primary_key: Option<&str>,
    ) -> Result<TableSchema, SchemaError> {
        let name = name.into();
        if columns.is_empty() {
            return Err(SchemaError::NoColumns { table: name });
        }
        let mut defs = Vec::with_capacity(columns.len());
        for (col, kind) in columns {
            if defs.iter().any(|d: &ColumnDef| d.name == *col) {
                return Err(SchemaError::DuplicateColumn {
                    table: name,
                    column: col.to_string(),
                });
            }
            defs.push(ColumnDef {
                name: col.to_string(),
                kind: *kind,
            });
        }
        if let Some(pk) = primary_key {
            match defs.iter().find(|d| d.name == pk) {
                None => {
                    return Err(SchemaError::UnknownPrimaryKey {
                        table: name,
                        column: pk.to_string(),
                    })
                }
                Some(def) if !matches!(def.kind, ValueKind::Int | ValueKind::Text) => {
                    return Err(SchemaError::UnkeyableKind {
                        table: name,
                        column: pk.to_string(),
                        kind: def.kind,
                    })
                }
                Some(_) => {}
            }
        }
        Ok(TableSchema {
            name,
            columns: defs,
            primary_key: primary_key.map(str::to_string),
        })
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == column)
    }

    pub fn column(&self, column: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == column)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn primary_key_index(&self) -> Option<usize> {
        self.primary_key
            .as_deref()
            .and_then(|pk| self.column_index(pk))
    }
}

/// All table schemas of a database, keyed by table name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaCatalog {
    tables: BTreeMap<String, TableSchema>,
}

impl SchemaCatalog {
    pub fn new() -> SchemaCatalog {
        SchemaCatalog::default()
    }

    pub fn add_table(&mut self, schema: TableSchema) -> Result<(), SchemaError> {
        if self.tables.contains_key(&schema.name) {
            return Err(SchemaError::DuplicateTable(schema.name));
        }
        self.tables.insert(schema.name.clone(), schema);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.get(name)
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableSchema> {
        self.tables.values()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_columns_and_unknown_pk() {
        let err = TableSchema::new(
            "T",
            &[("a", ValueKind::Int), ("a", ValueKind::Text)],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateColumn { .. }));

        let err = TableSchema::new("T", &[("a", ValueKind::Int)], Some("b")).unwrap_err();
        assert!(matches!(err, SchemaError::UnknownPrimaryKey { .. }));

        let err = TableSchema::new("T", &[("a", ValueKind::Float)], Some("a")).unwrap_err();
        assert!(matches!(err, SchemaError::UnkeyableKind { .. }));
    }

    #[test]
    fn catalog_rejects_duplicate_tables() {
        let mut catalog = SchemaCatalog::new();
        let t = TableSchema::new("T", &[("a", ValueKind::Int)], Some("a")).unwrap();
        catalog.add_table(t.clone()).unwrap();
        assert_eq!(
            catalog.add_table(t).unwrap_err(),
            SchemaError::DuplicateTable("T".into())
        );
    }
}
