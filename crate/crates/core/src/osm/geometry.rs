use super::model::{ElementData, ElementKind, OsmDocument, TagMap};
use super::OsmError;

/// A closed ring of (lon, lat) vertices; first vertex equals last.
pub type Ring = Vec<(f64, f64)>;

/// Assembled element geometry, coordinates in degrees.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point { lon: f64, lat: f64 },
    Polyline(Vec<(f64, f64)>),
    Polygon { outer: Ring, holes: Vec<Ring> },
}

/// Signed shoelace area of a ring, in degree^2. Positive for
/// counter-clockwise winding.
pub fn ring_area(ring: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        acc += x1 * y2 - x2 * y1;
    }
    acc / 2.0
}

fn collapse_duplicates(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.dedup_by(|a, b| a == b);
    pts
}

// Proper segment intersection (shared ring vertices excluded by the caller).
fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    }
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn validate_ring(ring: &[(f64, f64)]) -> Result<(), OsmError> {
    if ring.len() < 4 {
        return Err(OsmError::Geometry(format!(
            "ring has {} vertices, need >= 4 including closure",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(OsmError::Geometry("ring not closed".into()));
    }
    let n = ring.len() - 1; // segment count
    for i in 0..n {
        for j in (i + 1)..n {
            // Skip adjacent segments (they share an endpoint).
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = (ring[i], ring[i + 1]);
            let (c, d) = (ring[j], ring[j + 1]);
            if segments_cross(a, b, c, d) {
                return Err(OsmError::Geometry(format!(
                    "ring self-intersects between segments {i} and {j}"
                )));
            }
        }
    }
    Ok(())
}

/// Even-odd point-in-ring test.
pub(crate) fn point_in_ring(p: (f64, f64), ring: &[(f64, f64)]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        if (y1 <= p.1) != (y2 <= p.1) {
            let cx = x1 + (p.1 - y1) * (x2 - x1) / (y2 - y1);
            if cx > p.0 {
                inside = !inside;
            }
        }
    }
    inside
}

fn way_coords(doc: &OsmDocument, node_refs: &[i64]) -> Result<Vec<(f64, f64)>, OsmError> {
    node_refs
        .iter()
        .map(|&id| doc.node_coords(id).ok_or(OsmError::MissingNode(id)))
        .collect()
}

/// Assemble the geometry of one element.
///
/// Closed ways whose tags pass `is_area` become polygons; everything
/// else becomes a polyline. Multipolygon relations are stitched from
/// their outer/inner way members. Relations of other types are not
/// geometry (see module docs).
pub fn resolve_geometry<F>(
    doc: &OsmDocument,
    id: i64,
    kind: ElementKind,
    is_area: F,
) -> Result<Geometry, OsmError>
where
    F: Fn(&TagMap) -> bool,
{
    let el = doc.get(kind, id).ok_or(OsmError::NotFound { id, kind })?;
    match &el.data {
        ElementData::Node { lon, lat } => Ok(Geometry::Point {
            lon: *lon,
            lat: *lat,
        }),
        ElementData::Way { node_refs } => {
            let coords = collapse_duplicates(way_coords(doc, node_refs)?);
            let closed = node_refs.first() == node_refs.last() && coords.len() >= 3;
            if closed && is_area(&el.tags) {
                let mut ring = coords;
                if ring.first() != ring.last() {
                    let first = ring[0];
                    ring.push(first);
                }
                validate_ring(&ring)?;
                Ok(Geometry::Polygon {
                    outer: ring,
                    holes: Vec::new(),
                })
            } else {
                if coords.len() < 2 {
                    return Err(OsmError::Geometry(format!(
                        "way {id} degenerates to fewer than 2 distinct vertices"
                    )));
                }
                Ok(Geometry::Polyline(coords))
            }
        }
        ElementData::Relation { members } => {
            if el.tags.get("type") != Some("multipolygon") {
                return Err(OsmError::Geometry(format!(
                    "relation {id} is not a multipolygon"
                )));
            }
            assemble_multipolygon(doc, id, members)
        }
    }
}

fn assemble_multipolygon(
    doc: &OsmDocument,
    rel_id: i64,
    members: &[super::model::Member],
) -> Result<Geometry, OsmError> {
    let mut outer_ways: Vec<Vec<i64>> = Vec::new();
    let mut inner_ways: Vec<Vec<i64>> = Vec::new();
    for m in members {
        if m.kind != ElementKind::Way {
            continue;
        }
        let way = doc
            .get(ElementKind::Way, m.id)
            .ok_or(OsmError::NotFound {
                id: m.id,
                kind: ElementKind::Way,
            })?;
        let refs = match &way.data {
            ElementData::Way { node_refs } => node_refs.clone(),
            _ => unreachable!(),
        };
        match m.role.as_str() {
            "outer" | "" => outer_ways.push(refs),
            "inner" => inner_ways.push(refs),
            other => log::warn!("relation {rel_id}: ignoring member role {other:?}"),
        }
    }

    let outer_rings = stitch_rings(doc, outer_ways)?;
    let inner_rings = stitch_rings(doc, inner_ways)?;
    if outer_rings.is_empty() {
        return Err(OsmError::Geometry(format!(
            "multipolygon relation {rel_id} has no valid outer ring"
        )));
    }

    // Single outer supported; with several, keep the largest footprint.
    let outer = if outer_rings.len() == 1 {
        outer_rings.into_iter().next().unwrap()
    } else {
        log::warn!(
            "relation {rel_id}: {} outer rings, keeping the largest",
            outer_rings.len()
        );
        outer_rings
            .into_iter()
            .max_by(|a, b| {
                ring_area(a)
                    .abs()
                    .partial_cmp(&ring_area(b).abs())
                    .unwrap()
            })
            .unwrap()
    };

    let holes: Vec<Ring> = inner_rings
        .into_iter()
        .filter(|r| point_in_ring(r[0], &outer))
        .collect();

    Ok(Geometry::Polygon { outer, holes })
}

// Chain ways (as node-id sequences) into closed rings, then resolve to
// validated coordinate rings.
fn stitch_rings(doc: &OsmDocument, ways: Vec<Vec<i64>>) -> Result<Vec<Ring>, OsmError> {
    let mut pool: Vec<Vec<i64>> = ways;
    let mut rings = Vec::new();
    while let Some(mut current) = pool.pop() {
        loop {
            if current.first() == current.last() && current.len() >= 4 {
                break;
            }
            let end = *current.last().unwrap();
            let pos = pool.iter().position(|w| {
                *w.first().unwrap() == end || *w.last().unwrap() == end
            });
            match pos {
                Some(i) => {
                    let mut next = pool.remove(i);
                    if *next.last().unwrap() == end {
                        next.reverse();
                    }
                    current.extend_from_slice(&next[1..]);
                }
                None => {
                    return Err(OsmError::Geometry(
                        "multipolygon member ways do not close into a ring".into(),
                    ))
                }
            }
        }
        let mut coords = collapse_duplicates(way_coords(doc, &current)?);
        if coords.first() != coords.last() {
            let first = coords[0];
            coords.push(first);
        }
        validate_ring(&coords)?;
        rings.push(coords);
    }
    Ok(rings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osm::model::OsmElement;
    use crate::osm::parse::parse_osm_json;
    use approx::assert_abs_diff_eq;

    fn tags(pairs: &[(&str, &str)]) -> TagMap {
        TagMap::from_pairs(pairs.iter().copied()).unwrap()
    }

    fn square_doc() -> OsmDocument {
        let mut els = vec![
            OsmElement::node(1, 0.0, 0.0, TagMap::new()).unwrap(),
            OsmElement::node(2, 0.0, 1.0, TagMap::new()).unwrap(),
            OsmElement::node(3, 1.0, 1.0, TagMap::new()).unwrap(),
            OsmElement::node(4, 1.0, 0.0, TagMap::new()).unwrap(),
        ];
        els.push(
            OsmElement::way(10, vec![1, 2, 3, 4, 1], tags(&[("building", "yes")])).unwrap(),
        );
        OsmDocument::from_elements(els).unwrap()
    }

    fn area_if_building(t: &TagMap) -> bool {
        t.contains("building")
    }

    #[test]
    fn closed_building_way_is_polygon() {
        let doc = square_doc();
        let g = resolve_geometry(&doc, 10, ElementKind::Way, area_if_building).unwrap();
        match g {
            Geometry::Polygon { outer, holes } => {
                assert_eq!(outer.first(), outer.last());
                assert_eq!(outer.len(), 5);
                assert!(holes.is_empty());
                assert_abs_diff_eq!(ring_area(&outer).abs(), 1.0);
            }
            other => panic!("expected polygon, got {other:?}"),
        }
    }

    #[test]
    fn two_node_highway_is_polyline() {
        let els = vec![
            OsmElement::node(1, 0.0, 0.0, TagMap::new()).unwrap(),
            OsmElement::node(2, 0.5, 0.5, TagMap::new()).unwrap(),
            OsmElement::way(10, vec![1, 2], tags(&[("highway", "residential")])).unwrap(),
        ];
        let doc = OsmDocument::from_elements(els).unwrap();
        let g = resolve_geometry(&doc, 10, ElementKind::Way, area_if_building).unwrap();
        assert_eq!(g, Geometry::Polyline(vec![(0.0, 0.0), (0.5, 0.5)]));
    }

    #[test]
    fn dangling_node_reference() {
        let els = vec![
            OsmElement::node(1, 0.0, 0.0, TagMap::new()).unwrap(),
            OsmElement::way(10, vec![1, 99], TagMap::new()).unwrap(),
        ];
        let doc = OsmDocument::from_elements(els).unwrap();
        let err = resolve_geometry(&doc, 10, ElementKind::Way, area_if_building).unwrap_err();
        assert!(matches!(err, OsmError::MissingNode(99)));
    }

    #[test]
    fn multipolygon_with_hole() {
        let raw = br#"{"elements":[
            {"type":"node","id":1,"lat":0,"lon":0},
            {"type":"node","id":2,"lat":4,"lon":0},
            {"type":"node","id":3,"lat":4,"lon":4},
            {"type":"node","id":4,"lat":0,"lon":4},
            {"type":"node","id":5,"lat":1,"lon":1},
            {"type":"node","id":6,"lat":3,"lon":1},
            {"type":"node","id":7,"lat":3,"lon":3},
            {"type":"node","id":8,"lat":1,"lon":3},
            {"type":"way","id":20,"nodes":[1,2,3,4,1]},
            {"type":"way","id":21,"nodes":[5,6,7,8,5]},
            {"type":"relation","id":30,"members":[
                {"type":"way","ref":20,"role":"outer"},
                {"type":"way","ref":21,"role":"inner"}],
             "tags":{"type":"multipolygon","natural":"water"}}
        ]}"#;
        let doc = parse_osm_json(raw).unwrap();
        let g = resolve_geometry(&doc, 30, ElementKind::Relation, |_| true).unwrap();
        match g {
            Geometry::Polygon { outer, holes } => {
                assert_eq!(holes.len(), 1);
                // Hole area equals the shoelace area of the inner ring.
                assert_abs_diff_eq!(ring_area(&holes[0]).abs(), 4.0);
                assert_abs_diff_eq!(ring_area(&outer).abs(), 16.0);
            }
            other => panic!("expected polygon, got {other:?}"),
        }
    }

    #[test]
    fn self_intersecting_ring_rejected() {
        let els = vec![
            OsmElement::node(1, 0.0, 0.0, TagMap::new()).unwrap(),
            OsmElement::node(2, 1.0, 1.0, TagMap::new()).unwrap(),
            OsmElement::node(3, 1.0, 0.0, TagMap::new()).unwrap(),
            OsmElement::node(4, 0.0, 1.0, TagMap::new()).unwrap(),
            OsmElement::way(10, vec![1, 2, 3, 4, 1], tags(&[("building", "yes")])).unwrap(),
        ];
        let doc = OsmDocument::from_elements(els).unwrap();
        let err = resolve_geometry(&doc, 10, ElementKind::Way, area_if_building).unwrap_err();
        assert!(matches!(err, OsmError::Geometry(_)));
    }

    #[test]
    fn duplicate_consecutive_vertices_collapsed() {
        let els = vec![
            OsmElement::node(1, 0.0, 0.0, TagMap::new()).unwrap(),
            OsmElement::node(2, 0.0, 0.0, TagMap::new()).unwrap(),
            OsmElement::node(3, 1.0, 1.0, TagMap::new()).unwrap(),
            OsmElement::way(10, vec![1, 2, 3], TagMap::new()).unwrap(),
        ];
        let doc = OsmDocument::from_elements(els).unwrap();
        let g = resolve_geometry(&doc, 10, ElementKind::Way, area_if_building).unwrap();
        assert_eq!(g, Geometry::Polyline(vec![(0.0, 0.0), (1.0, 1.0)]));
    }
}
