use serde_json::{json, Map, Value};

use super::model::{ElementData, ElementKind, Member, OsmDocument, OsmElement, TagMap};
use super::OsmError;

/// Parse a raw Overpass-style OSM JSON document (`{"elements":[...]}`).
///
/// Unknown top-level fields are ignored and element order is preserved.
pub fn parse_osm_json(bytes: &[u8]) -> Result<OsmDocument, OsmError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| OsmError::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let elements = match value.get("elements") {
        Some(Value::Array(arr)) => arr,
        Some(_) => {
            return Err(OsmError::Schema {
                index: 0,
                message: "\"elements\" is not an array".into(),
            })
        }
        None => {
            return Err(OsmError::Schema {
                index: 0,
                message: "missing top-level \"elements\" array".into(),
            })
        }
    };

    let mut parsed = Vec::with_capacity(elements.len());
    for (i, el) in elements.iter().enumerate() {
        parsed.push(parse_element_json(el, i)?);
    }
    OsmDocument::from_elements(parsed)
}

pub(crate) fn parse_element_json(el: &Value, index: usize) -> Result<OsmElement, OsmError> {
    let obj = el.as_object().ok_or_else(|| OsmError::Schema {
        index,
        message: "element is not an object".into(),
    })?;
    let kind = match require_str(obj, "type", index)? {
        "node" => ElementKind::Node,
        "way" => ElementKind::Way,
        "relation" => ElementKind::Relation,
        other => {
            return Err(OsmError::Schema {
                index,
                message: format!("unknown element type {other:?}"),
            })
        }
    };
    let id = obj
        .get("id")
        .and_then(Value::as_i64)
        .ok_or_else(|| OsmError::Schema {
            index,
            message: "missing mandatory field \"id\"".into(),
        })?;
    let tags = match obj.get("tags") {
        None => TagMap::new(),
        Some(Value::Object(map)) => {
            let pairs: Vec<(String, String)> = map
                .iter()
                .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                .collect();
            TagMap::from_pairs(pairs).map_err(|e| OsmError::Schema {
                index,
                message: e.to_string(),
            })?
        }
        Some(_) => {
            return Err(OsmError::Schema {
                index,
                message: "\"tags\" is not an object".into(),
            })
        }
    };

    let data = match kind {
        ElementKind::Node => {
            let lon = require_f64(obj, "lon", index)?;
            let lat = require_f64(obj, "lat", index)?;
            if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                return Err(OsmError::Range {
                    index,
                    message: format!("lon={lon} lat={lat}"),
                });
            }
            ElementData::Node { lon, lat }
        }
        ElementKind::Way => {
            let refs = obj
                .get("nodes")
                .and_then(Value::as_array)
                .ok_or_else(|| OsmError::Schema {
                    index,
                    message: "way missing \"nodes\" array".into(),
                })?;
            let node_refs: Vec<i64> = refs.iter().filter_map(Value::as_i64).collect();
            if node_refs.len() != refs.len() {
                return Err(OsmError::Schema {
                    index,
                    message: "non-integer node reference".into(),
                });
            }
            if node_refs.len() < 2 {
                return Err(OsmError::Schema {
                    index,
                    message: format!("way has {} node refs, need >= 2", node_refs.len()),
                });
            }
            ElementData::Way { node_refs }
        }
        ElementKind::Relation => {
            let raw = obj
                .get("members")
                .and_then(Value::as_array)
                .ok_or_else(|| OsmError::Schema {
                    index,
                    message: "relation missing \"members\" array".into(),
                })?;
            let mut members = Vec::with_capacity(raw.len());
            for m in raw {
                let mo = m.as_object().ok_or_else(|| OsmError::Schema {
                    index,
                    message: "relation member is not an object".into(),
                })?;
                let mkind = match require_str(mo, "type", index)? {
                    "node" => ElementKind::Node,
                    "way" => ElementKind::Way,
                    "relation" => ElementKind::Relation,
                    other => {
                        return Err(OsmError::Schema {
                            index,
                            message: format!("unknown member type {other:?}"),
                        })
                    }
                };
                let mid = mo
                    .get("ref")
                    .and_then(Value::as_i64)
                    .ok_or_else(|| OsmError::Schema {
                        index,
                        message: "member missing \"ref\"".into(),
                    })?;
                let role = mo
                    .get("role")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_string();
                members.push(Member {
                    id: mid,
                    kind: mkind,
                    role,
                });
            }
            if members.is_empty() {
                return Err(OsmError::Schema {
                    index,
                    message: "relation has no members".into(),
                });
            }
            ElementData::Relation { members }
        }
    };

    Ok(OsmElement { id, tags, data })
}

fn require_str<'a>(obj: &'a Map<String, Value>, key: &str, index: usize) -> Result<&'a str, OsmError> {
    obj.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| OsmError::Schema {
            index,
            message: format!("missing mandatory field {key:?}"),
        })
}

fn require_f64(obj: &Map<String, Value>, key: &str, index: usize) -> Result<f64, OsmError> {
    obj.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| OsmError::Schema {
            index,
            message: format!("node missing {key:?}"),
        })
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut remaining = line - 1;
    let mut offset = 0;
    for (i, b) in bytes.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if *b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

/// Serialize an element in the Overpass `elements` convention.
pub fn element_to_json(el: &OsmElement) -> Value {
    let mut obj = Map::new();
    obj.insert("type".into(), json!(el.kind().to_string()));
    obj.insert("id".into(), json!(el.id));
    match &el.data {
        ElementData::Node { lon, lat } => {
            obj.insert("lat".into(), json!(lat));
            obj.insert("lon".into(), json!(lon));
        }
        ElementData::Way { node_refs } => {
            obj.insert("nodes".into(), json!(node_refs));
        }
        ElementData::Relation { members } => {
            let ms: Vec<Value> = members
                .iter()
                .map(|m| json!({"type": m.kind.to_string(), "ref": m.id, "role": m.role}))
                .collect();
            obj.insert("members".into(), json!(ms));
        }
    }
    if !el.tags.is_empty() {
        let mut tags = Map::new();
        for (k, v) in el.tags.iter() {
            tags.insert(k.to_string(), json!(v));
        }
        obj.insert("tags".into(), Value::Object(tags));
    }
    Value::Object(obj)
}

/// Serialize a document back to the Overpass convention, preserving
/// element order.
pub fn document_to_json(doc: &OsmDocument) -> Value {
    let elements: Vec<Value> = doc.elements().iter().map(element_to_json).collect();
    json!({ "elements": elements })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        let doc = parse_osm_json(br#"{"elements":[]}"#).unwrap();
        assert!(doc.is_empty());
    }

    #[test]
    fn minimal_node() {
        let doc = parse_osm_json(br#"{"elements":[{"type":"node","id":1,"lat":0,"lon":0}]}"#).unwrap();
        assert_eq!(doc.count(ElementKind::Node), 1);
        assert_eq!(doc.count(ElementKind::Way), 0);
    }

    #[test]
    fn malformed_json_reports_offset() {
        let err = parse_osm_json(b"{\"elements\":[\n  {bad}]}").unwrap_err();
        match err {
            OsmError::Parse { offset, .. } => assert!(offset > 13, "offset {offset}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_id_names_index() {
        let err =
            parse_osm_json(br#"{"elements":[{"type":"node","id":1,"lat":0,"lon":0},{"type":"node","lat":0,"lon":0}]}"#)
                .unwrap_err();
        match err {
            OsmError::Schema { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_coordinate() {
        let err = parse_osm_json(br#"{"elements":[{"type":"node","id":1,"lat":99,"lon":0}]}"#).unwrap_err();
        assert!(matches!(err, OsmError::Range { index: 0, .. }));
    }

    #[test]
    fn roundtrip_preserves_order_and_tags() {
        let raw = br#"{"elements":[
            {"type":"node","id":5,"lat":1.5,"lon":2.5,"tags":{"zeta":"first","alpha":"second"}},
            {"type":"node","id":2,"lat":0.0,"lon":0.0},
            {"type":"way","id":9,"nodes":[5,2],"tags":{"highway":"residential"}}
        ]}"#;
        let doc = parse_osm_json(raw).unwrap();
        let out = document_to_json(&doc);
        let doc2 = parse_osm_json(out.to_string().as_bytes()).unwrap();
        assert_eq!(doc.elements(), doc2.elements());
        // Tag insertion order survives.
        let tags: Vec<_> = doc.get(ElementKind::Node, 5).unwrap().tags.iter().collect();
        assert_eq!(tags[0].0, "zeta");
    }
}
