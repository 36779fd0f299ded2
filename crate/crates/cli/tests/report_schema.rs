//! The bench report's JSON shape is a published interface: plotting scripts
//! consume it. These tests validate real reports against the committed
//! schema so accidental field renames fail loudly.

use std::path::PathBuf;
use std::sync::Arc;

use serde_json::Value;

use fieldgate_cli::bench::{self, BenchConfig, Transport};
use fieldgate_demo::scenario::find_builder;

fn schema() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/bench-report.schema.json");
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).expect("schema parses")
}

/// Minimal structural validator for the subset of JSON Schema the committed
/// schema uses: type, required, properties, additionalProperties: false,
/// items, enum, minimum, minLength/maxLength, and $ref into definitions.
fn validate(root: &Value, schema: &Value, value: &Value, path: &str, errors: &mut Vec<String>) {
    let schema = match schema.get("$ref").and_then(Value::as_str) {
        Some(reference) => {
            let name = reference
                .strip_prefix("#/definitions/")
                .unwrap_or_else(|| panic!("unsupported $ref {reference}"));
            &root["definitions"][name]
        }
        None => schema,
    };

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: {value} not in enum {allowed:?}"));
        }
        return;
    }

    let kind = schema.get("type").and_then(Value::as_str).unwrap_or("any");
    let ok = match kind {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.is_i64() || value.is_u64(),
        "boolean" => value.is_boolean(),
        "any" => true,
        other => panic!("unsupported schema type {other}"),
    };
    if !ok {
        errors.push(format!("{path}: expected {kind}, got {value}"));
        return;
    }

    if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
        if value.as_f64().is_some_and(|v| v < min) {
            errors.push(format!("{path}: {value} below minimum {min}"));
        }
    }
    if let Some(min_len) = schema.get("minLength").and_then(Value::as_u64) {
        if value.as_str().is_some_and(|s| (s.len() as u64) < min_len) {
            errors.push(format!("{path}: shorter than {min_len}"));
        }
    }
    if let Some(max_len) = schema.get("maxLength").and_then(Value::as_u64) {
        if value.as_str().is_some_and(|s| (s.len() as u64) > max_len) {
            errors.push(format!("{path}: longer than {max_len}"));
        }
    }

    if let Some(object) = value.as_object() {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for field in required {
                let field = field.as_str().expect("required lists strings");
                if !object.contains_key(field) {
                    errors.push(format!("{path}: missing required field '{field}'"));
                }
            }
        }
        let properties = schema.get("properties").and_then(Value::as_object);
        let sealed = schema.get("additionalProperties") == Some(&Value::Bool(false));
        for (key, item) in object {
            match properties.and_then(|p| p.get(key)) {
                Some(sub) => validate(root, sub, item, &format!("{path}.{key}"), errors),
                None if sealed => errors.push(format!("{path}: unexpected field '{key}'")),
                None => {}
            }
        }
    }

    if let Some(items) = value.as_array() {
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                validate(root, item_schema, item, &format!("{path}[{i}]"), errors);
            }
        }
    }
}

fn assert_valid(report: &Value) {
    let schema = schema();
    let mut errors = Vec::new();
    validate(&schema, &schema, report, "$", &mut errors);
    assert!(errors.is_empty(), "schema violations:\n{}", errors.join("\n"));
}

fn quick_config() -> BenchConfig {
    BenchConfig {
        trials: 5,
        concurrency: 4,
        requests: 40,
        warmup: 2,
        transport: Transport::InProcess,
        ..BenchConfig::default()
    }
}

#[test]
fn intranet_report_matches_committed_schema() {
    let scenario = Arc::new(find_builder("intranet-small").unwrap().build(1).unwrap());
    let report = bench::run(&scenario, &quick_config()).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    assert!(json.get("wide_columns").is_none(), "no width sweep outside the wide scenario");
    assert_valid(&json);
}

#[test]
fn wide_report_includes_column_sweep_and_matches_schema() {
    let scenario = Arc::new(find_builder("wide").unwrap().build(1).unwrap());
    let report = bench::run(&scenario, &quick_config()).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    let sweep = json["wide_columns"].as_array().expect("width sweep present");
    assert_eq!(sweep.len(), bench::WIDE_SERIES_COLUMNS.len());
    assert_valid(&json);
}

#[test]
fn validator_rejects_malformed_reports() {
    let scenario = Arc::new(find_builder("intranet-small").unwrap().build(1).unwrap());
    let report = bench::run(&scenario, &quick_config()).unwrap();
    let mut json = serde_json::to_value(&report).unwrap();

    let schema = schema();
    let mut errors = Vec::new();
    json["config"]["transport"] = Value::String("carrier-pigeon".into());
    json["endpoints"][0]["overhead"] = Value::String("2%".into());
    json.as_object_mut().unwrap().remove("throughput");
    json.as_object_mut().unwrap().insert("extra".into(), Value::Null);
    validate(&schema, &schema, &json, "$", &mut errors);
    assert_eq!(errors.len(), 4, "expected four violations, got: {errors:?}");
}
