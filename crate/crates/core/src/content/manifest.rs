//! Manifest reader and writer.
//!
//! A manifest is a JSON document `{"curriculum": node}`. Cluster nodes are
//! `{"id", "level", "children"}`, item nodes are `{"id", "units"}` and units
//! are `{"id", "kind", "payload_ref", "mastery_score"?, "time_limit"?}`.
//! Array order is significant and preserved.

use serde_json::{Map, Value};
use thiserror::Error;

use super::{validate_tree, ActivityTree, Cluster, ContentUnit, Item, Level, Node, UnitKind, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}{}: {message}", id.as_ref().map(|i| format!(" (id '{i}')")).unwrap_or_default())]
    Schema {
        path: String,
        id: Option<String>,
        message: String,
    },
    #[error("model error: {0}")]
    Model(Violation),
}

impl ManifestError {
    /// The tree id the error is about, when one is known.
    pub fn offending_id(&self) -> Option<&str> {
        match self {
            ManifestError::Syntax { .. } => None,
            ManifestError::Schema { id, .. } => id.as_deref(),
            ManifestError::Model(v) => Some(&v.node_id),
        }
    }
}

/// Parses and validates a manifest document.
pub fn parse_manifest(document: &str) -> Result<ActivityTree, ManifestError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ManifestError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let top = expect_object(&value, "$", None)?;
    reject_unknown(top, &["curriculum"], "$", None)?;
    let root_value = top.get("curriculum").ok_or_else(|| ManifestError::Schema {
        path: "$".into(),
        id: None,
        message: "missing required field 'curriculum'".into(),
    })?;
    let root = match read_node(root_value, "$.curriculum")? {
        Node::Cluster(c) => c,
        Node::Item(i) => {
            return Err(ManifestError::Schema {
                path: "$.curriculum".into(),
                id: Some(i.id),
                message: "the curriculum must be a cluster".into(),
            })
        }
    };
    let tree = ActivityTree::new(root);
    if let Some(v) = validate_tree(&tree).into_iter().next() {
        return Err(ManifestError::Model(v));
    }
    Ok(tree)
}

/// Renders a tree back to manifest text (pretty-printed, documented key order).
pub fn to_manifest_string(tree: &ActivityTree) -> String {
    let mut top = Map::new();
    top.insert("curriculum".into(), write_cluster(tree.root()));
    let mut out = serde_json::to_string_pretty(&Value::Object(top)).expect("manifest values serialize");
    out.push('\n');
    out
}

fn write_cluster(c: &Cluster) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(c.id.clone()));
    m.insert("level".into(), Value::String(c.level.as_str().into()));
    m.insert(
        "children".into(),
        Value::Array(
            c.children
                .iter()
                .map(|n| match n {
                    Node::Cluster(c) => write_cluster(c),
                    Node::Item(i) => write_item(i),
                })
                .collect(),
        ),
    );
    Value::Object(m)
}

fn write_item(i: &Item) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(i.id.clone()));
    m.insert("units".into(), Value::Array(i.units.iter().map(write_unit).collect()));
    Value::Object(m)
}

fn write_unit(u: &ContentUnit) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(u.id.clone()));
    m.insert("kind".into(), Value::String(u.kind.as_str().into()));
    m.insert("payload_ref".into(), Value::String(u.payload_ref.clone()));
    if let Some(s) = u.mastery_score {
        m.insert("mastery_score".into(), serde_json::json!(s));
    }
    if let Some(t) = u.time_limit {
        m.insert("time_limit".into(), Value::from(t));
    }
    Value::Object(m)
}

fn schema(path: &str, id: Option<&str>, message: impl Into<String>) -> ManifestError {
    ManifestError::Schema {
        path: path.to_string(),
        id: id.map(str::to_string),
        message: message.into(),
    }
}

fn expect_object<'a>(v: &'a Value, path: &str, id: Option<&str>) -> Result<&'a Map<String, Value>, ManifestError> {
    v.as_object()
        .ok_or_else(|| schema(path, id, format!("expected an object, found {}", type_name(v))))
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn reject_unknown(m: &Map<String, Value>, allowed: &[&str], path: &str, id: Option<&str>) -> Result<(), ManifestError> {
    match m.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(path, id, format!("unknown field '{k}'"))),
        None => Ok(()),
    }
}

fn required<'a>(
    m: &'a Map<String, Value>,
    key: &str,
    path: &str,
    id: Option<&str>,
) -> Result<&'a Value, ManifestError> {
    m.get(key)
        .ok_or_else(|| schema(path, id, format!("missing required field '{key}'")))
}

fn string_field(m: &Map<String, Value>, key: &str, path: &str, id: Option<&str>) -> Result<String, ManifestError> {
    match required(m, key, path, id)? {
        Value::String(s) => Ok(s.clone()),
        other => Err(schema(
            path,
            id,
            format!("field '{key}' must be a string, found {}", type_name(other)),
        )),
    }
}

fn read_node(v: &Value, path: &str) -> Result<Node, ManifestError> {
    let m = expect_object(v, path, None)?;
    let id = string_field(m, "id", path, None)?;
    let has_children = m.contains_key("children");
    let has_units = m.contains_key("units");
    match (has_children, has_units) {
        (true, true) => Err(schema(
            path,
            Some(&id),
            "a node has either 'children' (cluster) or 'units' (item), not both",
        )),
        (false, false) => {
            if m.contains_key("level") {
                Err(schema(path, Some(&id), "missing required field 'children'"))
            } else {
                Err(schema(path, Some(&id), "missing required field 'units'"))
            }
        }
        (true, false) => read_cluster(m, id, path).map(Node::Cluster),
        (false, true) => read_item(m, id, path).map(Node::Item),
    }
}

fn read_cluster(m: &Map<String, Value>, id: String, path: &str) -> Result<Cluster, ManifestError> {
    reject_unknown(m, &["id", "level", "children"], path, Some(&id))?;
    let level_name = string_field(m, "level", path, Some(&id))?;
    let level =
        Level::parse(&level_name).ok_or_else(|| schema(path, Some(&id), format!("unknown level '{level_name}'")))?;
    let children = match &m["children"] {
        Value::Array(a) => a,
        other => {
            return Err(schema(
                path,
                Some(&id),
                format!("'children' must be an array, found {}", type_name(other)),
            ))
        }
    };
    let children = children
        .iter()
        .enumerate()
        .map(|(k, c)| read_node(c, &format!("{path}.children[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Cluster { id, level, children })
}

fn read_item(m: &Map<String, Value>, id: String, path: &str) -> Result<Item, ManifestError> {
    reject_unknown(m, &["id", "units"], path, Some(&id))?;
    let units = match &m["units"] {
        Value::Array(a) => a,
        other => {
            return Err(schema(
                path,
                Some(&id),
                format!("'units' must be an array, found {}", type_name(other)),
            ))
        }
    };
    let units = units
        .iter()
        .enumerate()
        .map(|(k, u)| read_unit(u, &format!("{path}.units[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Item { id, units })
}

fn read_unit(v: &Value, path: &str) -> Result<ContentUnit, ManifestError> {
    let m = expect_object(v, path, None)?;
    let id = string_field(m, "id", path, None)?;
    let idr = Some(id.as_str());
    reject_unknown(
        m,
        &["id", "kind", "payload_ref", "mastery_score", "time_limit"],
        path,
        idr,
    )?;
    let kind = match string_field(m, "kind", path, idr)?.as_str() {
        "asset" => UnitKind::Asset,
        "assessment" => UnitKind::AssessmentAsset,
        other => {
            return Err(schema(
                path,
                idr,
                format!("unknown unit kind '{other}' (expected 'asset' or 'assessment')"),
            ))
        }
    };
    let payload_ref = string_field(m, "payload_ref", path, idr)?;
    let mastery_score = match m.get("mastery_score") {
        None => None,
        Some(Value::Number(n)) => n.as_f64(),
        Some(other) => {
            return Err(schema(
                path,
                idr,
                format!("'mastery_score' must be a number, found {}", type_name(other)),
            ))
        }
    };
    let time_limit = match m.get("time_limit") {
        None => None,
        Some(Value::Number(n)) => Some(
            n.as_u64()
                .ok_or_else(|| schema(path, idr, "'time_limit' must be a nonnegative integer"))?,
        ),
        Some(other) => {
            return Err(schema(
                path,
                idr,
                format!("'time_limit' must be an integer, found {}", type_name(other)),
            ))
        }
    };
    Ok(ContentUnit {
        id,
        kind,
        payload_ref,
        mastery_score,
        time_limit,
    })
}
