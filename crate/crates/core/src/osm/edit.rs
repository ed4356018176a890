use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::{ElementKind, OsmDocument, OsmElement, TagMap};
use super::parse::{element_to_json, parse_element_json};
use super::OsmError;

/// One structured map edit. New-feature ids use negative values by
/// convention so they never collide with live OSM ids.
#[derive(Debug, Clone, PartialEq)]
pub enum EditOp {
    /// Add new elements (a feature way plus any member nodes).
    AddFeature(Vec<OsmElement>),
    RemoveFeature { id: i64, kind: ElementKind },
    ChangeTags { id: i64, kind: ElementKind, tags: TagMap },
}

/// Ordered list of edits producing a before/after document pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn new(ops: Vec<EditOp>) -> Self {
        EditScript { ops }
    }

    /// Parse the JSON array-of-op-objects serialization.
    pub fn from_json(bytes: &[u8]) -> Result<Self, OsmError> {
        let raw: Vec<RawOp> = serde_json::from_slice(bytes).map_err(|e| OsmError::Parse {
            offset: 0,
            message: e.to_string(),
        })?;
        let ops = raw
            .into_iter()
            .enumerate()
            .map(|(i, op)| op.into_op(i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EditScript { ops })
    }

    pub fn to_json(&self) -> Value {
        Value::Array(self.ops.iter().map(op_to_json).collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum RawOp {
    Add { elements: Vec<Value> },
    Remove { id: i64, kind: ElementKind },
    Change { id: i64, kind: ElementKind, tags: Value },
}

impl RawOp {
    fn into_op(self, index: usize) -> Result<EditOp, OsmError> {
        match self {
            RawOp::Add { elements } => {
                let els = elements
                    .iter()
                    .map(|v| parse_element_json(v, index))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(EditOp::AddFeature(els))
            }
            RawOp::Remove { id, kind } => Ok(EditOp::RemoveFeature { id, kind }),
            RawOp::Change { id, kind, tags } => {
                let obj = tags.as_object().ok_or_else(|| OsmError::Edit {
                    op_index: index,
                    message: "\"tags\" is not an object".into(),
                })?;
                let pairs: Vec<(String, String)> = obj
                    .iter()
                    .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                    .collect();
                let tags = TagMap::from_pairs(pairs).map_err(|e| OsmError::Edit {
                    op_index: index,
                    message: e.to_string(),
                })?;
                Ok(EditOp::ChangeTags { id, kind, tags })
            }
        }
    }
}

fn op_to_json(op: &EditOp) -> Value {
    match op {
        EditOp::AddFeature(els) => serde_json::json!({
            "op": "add",
            "elements": els.iter().map(element_to_json).collect::<Vec<_>>(),
        }),
        EditOp::RemoveFeature { id, kind } => {
            serde_json::json!({"op": "remove", "id": id, "kind": kind})
        }
        EditOp::ChangeTags { id, kind, tags } => {
            let mut map = serde_json::Map::new();
            for (k, v) in tags.iter() {
                map.insert(k.to_string(), Value::String(v.to_string()));
            }
            serde_json::json!({"op": "change", "id": id, "kind": kind, "tags": map})
        }
    }
}

/// Apply `script` to `doc`, returning a new document. The input is
/// never modified.
pub fn apply_edit(doc: &OsmDocument, script: &EditScript) -> Result<OsmDocument, OsmError> {
    let mut elements: Vec<OsmElement> = doc.elements().to_vec();
    for (i, op) in script.ops.iter().enumerate() {
        match op {
            EditOp::AddFeature(new_els) => {
                for el in new_els {
                    let exists = elements
                        .iter()
                        .any(|e| e.kind() == el.kind() && e.id == el.id);
                    if exists {
                        return Err(OsmError::Edit {
                            op_index: i,
                            message: format!("id collision: {} {}", el.kind(), el.id),
                        });
                    }
                    elements.push(el.clone());
                }
            }
            EditOp::RemoveFeature { id, kind } => {
                let pos = elements
                    .iter()
                    .position(|e| e.kind() == *kind && e.id == *id)
                    .ok_or_else(|| OsmError::Edit {
                        op_index: i,
                        message: format!("missing element: {kind} {id}"),
                    })?;
                elements.remove(pos);
            }
            EditOp::ChangeTags { id, kind, tags } => {
                let el = elements
                    .iter_mut()
                    .find(|e| e.kind() == *kind && e.id == *id)
                    .ok_or_else(|| OsmError::Edit {
                        op_index: i,
                        message: format!("missing element: {kind} {id}"),
                    })?;
                el.tags = tags.clone();
            }
        }
    }
    let mut out = OsmDocument::from_elements(elements)?;
    out.capture_timestamp = doc.capture_timestamp;
    out.source_bounds = doc.source_bounds;
    Ok(out)
}

/// Difference between two documents, keyed by (id, kind).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangeSet {
    pub added: Vec<(i64, ElementKind)>,
    pub removed: Vec<(i64, ElementKind)>,
    pub retagged: Vec<(i64, ElementKind, TagMap, TagMap)>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.retagged.is_empty()
    }

    /// Rebuild an edit script that transforms `before` into `after`
    /// (added elements are pulled from `after`).
    pub fn to_script(&self, after: &OsmDocument) -> EditScript {
        let mut ops = Vec::new();
        for (id, kind) in &self.removed {
            ops.push(EditOp::RemoveFeature {
                id: *id,
                kind: *kind,
            });
        }
        let added: Vec<OsmElement> = self
            .added
            .iter()
            .filter_map(|(id, kind)| after.get(*kind, *id).cloned())
            .collect();
        if !added.is_empty() {
            ops.push(EditOp::AddFeature(added));
        }
        for (id, kind, _, new_tags) in &self.retagged {
            ops.push(EditOp::ChangeTags {
                id: *id,
                kind: *kind,
                tags: new_tags.clone(),
            });
        }
        EditScript { ops }
    }
}

/// Compute the change set between two documents. Geometry changes on a
/// kept element show up through its nodes (which are elements too).
pub fn diff_documents(before: &OsmDocument, after: &OsmDocument) -> ChangeSet {
    let mut set = ChangeSet::default();
    for el in before.elements() {
        match after.get(el.kind(), el.id) {
            None => set.removed.push((el.id, el.kind())),
            Some(other) => {
                if other.tags != el.tags {
                    set.retagged
                        .push((el.id, el.kind(), el.tags.clone(), other.tags.clone()));
                }
            }
        }
    }
    for el in after.elements() {
        if !before.contains(el.kind(), el.id) {
            set.added.push((el.id, el.kind()));
        }
    }
    set
}
