use crate::encoders::TimeStamp6D;
use crate::geo::GeoBounds;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::OsmError;

/// Ordered key/value tag set. Keys are unique and non-empty; insertion
/// order is preserved for deterministic serialization.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagMap(IndexMap<String, String>);

impl TagMap {
    pub fn new() -> Self {
        TagMap(IndexMap::new())
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self, OsmError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut map = IndexMap::new();
        for (k, v) in pairs {
            let (k, v) = (k.into(), v.into());
            if k.is_empty() || v.is_empty() {
                return Err(OsmError::Tags("empty tag key or value".into()));
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(OsmError::Tags(format!("duplicate tag key {k:?}")));
            }
        }
        Ok(TagMap(map))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Node,
    Way,
    Relation,
}

impl std::fmt::Display for ElementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ElementKind::Node => write!(f, "node"),
            ElementKind::Way => write!(f, "way"),
            ElementKind::Relation => write!(f, "relation"),
        }
    }
}

/// Relation member reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: i64,
    pub kind: ElementKind,
    pub role: String,
}

/// Kind-specific payload of an element.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementData {
    Node { lon: f64, lat: f64 },
    Way { node_refs: Vec<i64> },
    Relation { members: Vec<Member> },
}

/// A single OSM element: node, way, or relation, with tags.
#[derive(Debug, Clone, PartialEq)]
pub struct OsmElement {
    pub id: i64,
    pub tags: TagMap,
    pub data: ElementData,
}

impl OsmElement {
    pub fn node(id: i64, lon: f64, lat: f64, tags: TagMap) -> Result<Self, OsmError> {
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(OsmError::Range {
                index: 0,
                message: format!("lon={lon} lat={lat}"),
            });
        }
        Ok(OsmElement {
            id,
            tags,
            data: ElementData::Node { lon, lat },
        })
    }

    pub fn way(id: i64, node_refs: Vec<i64>, tags: TagMap) -> Result<Self, OsmError> {
        if node_refs.len() < 2 {
            return Err(OsmError::Geometry(format!(
                "way {id} has {} node refs, need >= 2",
                node_refs.len()
            )));
        }
        Ok(OsmElement {
            id,
            tags,
            data: ElementData::Way { node_refs },
        })
    }

    pub fn relation(id: i64, members: Vec<Member>, tags: TagMap) -> Result<Self, OsmError> {
        if members.is_empty() {
            return Err(OsmError::Geometry(format!("relation {id} has no members")));
        }
        Ok(OsmElement {
            id,
            tags,
            data: ElementData::Relation { members },
        })
    }

    pub fn kind(&self) -> ElementKind {
        match self.data {
            ElementData::Node { .. } => ElementKind::Node,
            ElementData::Way { .. } => ElementKind::Way,
            ElementData::Relation { .. } => ElementKind::Relation,
        }
    }
}

/// Parsed OSM document. Immutable after construction; edits produce a
/// new document. Element order matches the source for deterministic
/// downstream rendering.
#[derive(Debug, Clone, Default)]
pub struct OsmDocument {
    elements: Vec<OsmElement>,
    index: HashMap<(ElementKind, i64), usize>,
    pub capture_timestamp: Option<TimeStamp6D>,
    pub source_bounds: Option<GeoBounds>,
}

impl OsmDocument {
    pub fn from_elements(elements: Vec<OsmElement>) -> Result<Self, OsmError> {
        let mut index = HashMap::with_capacity(elements.len());
        for (i, el) in elements.iter().enumerate() {
            if index.insert((el.kind(), el.id), i).is_some() {
                return Err(OsmError::Schema {
                    index: i,
                    message: format!("duplicate {} id {}", el.kind(), el.id),
                });
            }
        }
        Ok(OsmDocument {
            elements,
            index,
            capture_timestamp: None,
            source_bounds: None,
        })
    }

    pub fn elements(&self) -> &[OsmElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn get(&self, kind: ElementKind, id: i64) -> Option<&OsmElement> {
        self.index.get(&(kind, id)).map(|&i| &self.elements[i])
    }

    pub fn contains(&self, kind: ElementKind, id: i64) -> bool {
        self.index.contains_key(&(kind, id))
    }

    pub fn node_coords(&self, id: i64) -> Option<(f64, f64)> {
        match self.get(ElementKind::Node, id)?.data {
            ElementData::Node { lon, lat } => Some((lon, lat)),
            _ => None,
        }
    }

    pub fn count(&self, kind: ElementKind) -> usize {
        self.elements.iter().filter(|e| e.kind() == kind).count()
    }
}
