//! Tag classification: maps OSM tags onto the general surface-category
//! set and the specific POI subtype registry, with stable palettes.
//!
//! Rules and palettes live in a versioned JSON config shipped with the
//! repo (`config/taxonomy.json`); [`ClassificationRules::default_rules`]
//! loads the embedded copy.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

use crate::geo::TileRef;
use crate::osm::{OsmDocument, TagMap};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("invalid taxonomy config: {0}")]
    Config(String),
    #[error("palette not injective: {0}")]
    Palette(String),
}

/// Broad surface categories of the general mask. The discriminant is
/// the palette index; background is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum GeneralClass {
    Background = 0,
    Road = 1,
    Water = 2,
    Vegetation = 3,
    Building = 4,
    OtherSurface = 5,
}

impl GeneralClass {
    pub const ALL: [GeneralClass; 6] = [
        GeneralClass::Background,
        GeneralClass::Road,
        GeneralClass::Water,
        GeneralClass::Vegetation,
        GeneralClass::Building,
        GeneralClass::OtherSurface,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneralClass::Background => "background",
            GeneralClass::Road => "road",
            GeneralClass::Water => "water",
            GeneralClass::Vegetation => "vegetation",
            GeneralClass::Building => "building",
            GeneralClass::OtherSurface => "other_surface",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

/// Geometry kind a specific class renders as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeomKind {
    Area,
    Line,
    Point,
}

/// One registry entry of the specific (POI subtype) palette.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecificClass {
    pub name: String,
    pub index: u8,
    pub color: [u8; 3],
    pub parent: GeneralClass,
    pub geometry: GeomKind,
}

/// A single tag condition; `value: None` means key presence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagPredicate {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl TagPredicate {
    fn matches(&self, tags: &TagMap) -> bool {
        match &self.value {
            Some(v) => tags.get(&self.key) == Some(v.as_str()),
            None => tags.contains(&self.key),
        }
    }
}

#[derive(Debug, Clone)]
struct Rule {
    when: Vec<TagPredicate>,
    class: String,
}

impl Rule {
    fn matches(&self, tags: &TagMap) -> bool {
        self.when.iter().all(|p| p.matches(tags))
    }
}

/// Immutable classification rule set: ordered first-match-wins rules
/// for both masks, the area-tag rule, palettes, and stroke widths.
#[derive(Debug, Clone)]
pub struct ClassificationRules {
    pub version: String,
    general_palette: [[u8; 3]; 6],
    specific: Vec<SpecificClass>,
    general_rules: Vec<Rule>,
    specific_rules: Vec<Rule>,
    area_tags: Vec<TagPredicate>,
    stroke_default_px: f64,
    stroke_per_class: HashMap<String, f64>,
    pub summary_top_k: usize,
}

#[derive(Deserialize)]
struct RawConfig {
    version: String,
    general_palette: HashMap<String, String>,
    specific_classes: Vec<RawSpecific>,
    specific_rules: Vec<RawRule>,
    general_rules: Vec<RawRule>,
    area_tags: Vec<TagPredicate>,
    stroke_widths_px: HashMap<String, f64>,
    #[serde(default = "default_top_k")]
    summary_top_k: usize,
}

fn default_top_k() -> usize {
    5
}

#[derive(Deserialize)]
struct RawSpecific {
    name: String,
    index: u8,
    color: String,
    parent: String,
    geometry: GeomKind,
}

#[derive(Deserialize)]
struct RawRule {
    when: Vec<TagPredicate>,
    class: String,
}

fn parse_hex_color(s: &str) -> Result<[u8; 3], TaxonomyError> {
    let hex = s.strip_prefix('#').unwrap_or(s);
    if hex.len() != 6 {
        return Err(TaxonomyError::Config(format!("bad color {s:?}")));
    }
    let v = u32::from_str_radix(hex, 16)
        .map_err(|_| TaxonomyError::Config(format!("bad color {s:?}")))?;
    Ok([(v >> 16) as u8, (v >> 8) as u8, v as u8])
}

impl ClassificationRules {
    /// Load and validate a rule config from JSON bytes.
    pub fn from_json(bytes: &[u8]) -> Result<Self, TaxonomyError> {
        let raw: RawConfig =
            serde_json::from_slice(bytes).map_err(|e| TaxonomyError::Config(e.to_string()))?;

        let mut general_palette = [[0u8; 3]; 6];
        for class in GeneralClass::ALL {
            let hex = raw
                .general_palette
                .get(class.name())
                .ok_or_else(|| {
                    TaxonomyError::Config(format!("missing general color for {}", class.name()))
                })?;
            general_palette[class.index() as usize] = parse_hex_color(hex)?;
        }
        let distinct: HashSet<[u8; 3]> = general_palette.iter().copied().collect();
        if distinct.len() != 6 {
            return Err(TaxonomyError::Palette("general palette".into()));
        }

        let mut specific = Vec::with_capacity(raw.specific_classes.len());
        for rs in raw.specific_classes {
            let parent = GeneralClass::from_name(&rs.parent).ok_or_else(|| {
                TaxonomyError::Config(format!("unknown parent class {:?}", rs.parent))
            })?;
            if rs.index == 0 {
                return Err(TaxonomyError::Config(format!(
                    "specific class {:?} uses reserved index 0",
                    rs.name
                )));
            }
            specific.push(SpecificClass {
                name: rs.name,
                index: rs.index,
                color: parse_hex_color(&rs.color)?,
                parent,
                geometry: rs.geometry,
            });
        }
        let mut colors = HashSet::new();
        let mut indices = HashSet::new();
        colors.insert([0u8, 0, 0]); // specific background
        for sc in &specific {
            if !colors.insert(sc.color) {
                return Err(TaxonomyError::Palette(format!("specific class {}", sc.name)));
            }
            if !indices.insert(sc.index) {
                return Err(TaxonomyError::Config(format!(
                    "duplicate specific index {}",
                    sc.index
                )));
            }
        }

        let names: HashSet<&str> = specific.iter().map(|s| s.name.as_str()).collect();
        let specific_rules = raw
            .specific_rules
            .into_iter()
            .map(|r| {
                if !names.contains(r.class.as_str()) {
                    return Err(TaxonomyError::Config(format!(
                        "specific rule targets unknown class {:?}",
                        r.class
                    )));
                }
                Ok(Rule {
                    when: r.when,
                    class: r.class,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let general_rules = raw
            .general_rules
            .into_iter()
            .map(|r| {
                if GeneralClass::from_name(&r.class).is_none() {
                    return Err(TaxonomyError::Config(format!(
                        "general rule targets unknown class {:?}",
                        r.class
                    )));
                }
                Ok(Rule {
                    when: r.when,
                    class: r.class,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let stroke_default_px = raw
            .stroke_widths_px
            .get("default")
            .copied()
            .unwrap_or(3.0);

        Ok(ClassificationRules {
            version: raw.version,
            general_palette,
            specific,
            general_rules,
            specific_rules,
            area_tags: raw.area_tags,
            stroke_default_px,
            stroke_per_class: raw.stroke_widths_px,
            summary_top_k: raw.summary_top_k,
        })
    }

    /// The default registry shipped with the repo.
    pub fn default_rules() -> Self {
        Self::from_json(include_bytes!("../config/taxonomy.json"))
            .expect("embedded taxonomy config is valid")
    }

    pub fn general_color(&self, class: GeneralClass) -> [u8; 3] {
        self.general_palette[class.index() as usize]
    }

    /// RGB for a specific palette index; background (0) and unknown
    /// indices render black.
    pub fn specific_color(&self, index: u8) -> [u8; 3] {
        self.specific
            .iter()
            .find(|s| s.index == index)
            .map(|s| s.color)
            .unwrap_or([0, 0, 0])
    }

    pub fn specific_classes(&self) -> &[SpecificClass] {
        &self.specific
    }

    pub fn specific_by_name(&self, name: &str) -> Option<&SpecificClass> {
        self.specific.iter().find(|s| s.name == name)
    }

    pub fn specific_by_index(&self, index: u8) -> Option<&SpecificClass> {
        self.specific.iter().find(|s| s.index == index)
    }

    /// Does a closed way with these tags enclose an area? `area=yes/no`
    /// overrides the tag list.
    pub fn is_area(&self, tags: &TagMap) -> bool {
        match tags.get("area") {
            Some("yes") => return true,
            Some("no") => return false,
            _ => {}
        }
        self.area_tags.iter().any(|p| p.matches(tags))
    }

    /// Stroke width in pixels at zoom `z` for an optional specific
    /// class; the base widths apply at z=18 and scale by 2^(z-18).
    pub fn stroke_width(&self, class: Option<&str>, z: u8) -> f64 {
        let base = class
            .and_then(|c| self.stroke_per_class.get(c))
            .copied()
            .unwrap_or(self.stroke_default_px);
        (base * 2f64.powi(z as i32 - 18)).max(1.0)
    }
}

/// First matching general rule wins; untagged or unmatched elements are
/// not drawn in the general mask.
pub fn classify_general(tags: &TagMap, rules: &ClassificationRules) -> Option<GeneralClass> {
    if tags.is_empty() {
        return None;
    }
    rules
        .general_rules
        .iter()
        .find(|r| r.matches(tags))
        .and_then(|r| GeneralClass::from_name(&r.class))
}

/// First matching specific rule wins; `None` when no subtype matches
/// (the element may still appear in the general mask).
pub fn classify_specific<'r>(
    tags: &TagMap,
    rules: &'r ClassificationRules,
) -> Option<&'r SpecificClass> {
    if tags.is_empty() {
        return None;
    }
    rules
        .specific_rules
        .iter()
        .find(|r| r.matches(tags))
        .and_then(|r| rules.specific_by_name(&r.class))
}

/// Both masks' classes for one element, with the parent-consistency
/// override applied: a specific match forces its parent general class.
pub fn effective_classes<'r>(
    tags: &TagMap,
    rules: &'r ClassificationRules,
) -> (Option<GeneralClass>, Option<&'r SpecificClass>) {
    let specific = classify_specific(tags, rules);
    let general = match specific {
        Some(sc) => Some(sc.parent),
        None => classify_general(tags, rules),
    };
    (general, specific)
}

/// Distinct specific classes present in `doc`, ordered by descending
/// rasterized pixel area on `tile` (ties alphabetical), truncated to
/// the configured top-k.
pub fn summarize_categories(
    doc: &OsmDocument,
    tile: &TileRef,
    rules: &ClassificationRules,
) -> Vec<String> {
    let masks = crate::raster::render_masks(doc, tile, rules);
    let mut counts: HashMap<u8, u64> = HashMap::new();
    for &v in masks.specific.data() {
        if v != 0 {
            *counts.entry(v).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter_map(|(idx, n)| rules.specific_by_index(idx).map(|s| (s.name.clone(), n)))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(rules.summary_top_k);
    entries.into_iter().map(|(name, _)| name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(pairs: &[(&str, &str)]) -> TagMap {
        TagMap::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn default_config_loads() {
        let rules = ClassificationRules::default_rules();
        assert_eq!(rules.version, "1");
        assert!(rules.specific_by_name("stadium").is_some());
    }

    #[test]
    fn general_classification_table() {
        let rules = ClassificationRules::default_rules();
        assert_eq!(
            classify_general(&tags(&[("building", "yes")]), &rules),
            Some(GeneralClass::Building)
        );
        assert_eq!(classify_general(&TagMap::new(), &rules), None);
        assert_eq!(
            classify_general(&tags(&[("natural", "water")]), &rules),
            Some(GeneralClass::Water)
        );
        assert_eq!(
            classify_general(&tags(&[("landuse", "forest")]), &rules),
            Some(GeneralClass::Vegetation)
        );
        assert_eq!(
            classify_general(&tags(&[("highway", "residential")]), &rules),
            Some(GeneralClass::Road)
        );
    }

    #[test]
    fn specific_classification_table() {
        let rules = ClassificationRules::default_rules();
        assert_eq!(
            classify_specific(&tags(&[("leisure", "stadium")]), &rules).unwrap().name,
            "stadium"
        );
        assert_eq!(
            classify_specific(&tags(&[("man_made", "storage_tank")]), &rules)
                .unwrap()
                .name,
            "storage tank"
        );
        // Lake beats generic water: specific predicates precede general ones.
        let lake = tags(&[("water", "lake"), ("natural", "water")]);
        assert_eq!(classify_specific(&lake, &rules).unwrap().name, "lake");
        assert_eq!(
            classify_general(&lake, &rules),
            Some(GeneralClass::Water)
        );
    }

    #[test]
    fn parent_consistency() {
        let rules = ClassificationRules::default_rules();
        for sc in rules.specific_classes() {
            // Construct a tag map from the first rule that targets this class
            // and check the effective general class equals the parent.
            let rule = rules
                .specific_rules
                .iter()
                .find(|r| r.class == sc.name)
                .expect("every class has at least one rule");
            let pairs: Vec<(String, String)> = rule
                .when
                .iter()
                .map(|p| (p.key.clone(), p.value.clone().unwrap_or_else(|| "x".into())))
                .collect();
            let t = TagMap::from_pairs(pairs).unwrap();
            let (general, specific) = effective_classes(&t, &rules);
            assert_eq!(specific.unwrap().name, sc.name);
            assert_eq!(general, Some(sc.parent), "class {}", sc.name);
        }
    }

    #[test]
    fn palette_injectivity_enforced() {
        let mut cfg: serde_json::Value =
            serde_json::from_slice(include_bytes!("../config/taxonomy.json")).unwrap();
        cfg["specific_classes"][1]["color"] = cfg["specific_classes"][0]["color"].clone();
        let err = ClassificationRules::from_json(cfg.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, TaxonomyError::Palette(_)));
    }

    #[test]
    fn stroke_widths_scale_with_zoom() {
        let rules = ClassificationRules::default_rules();
        assert_eq!(rules.stroke_width(Some("major road"), 18), 5.0);
        assert_eq!(rules.stroke_width(Some("major road"), 19), 10.0);
        assert_eq!(rules.stroke_width(None, 18), 3.0);
        // Never below one pixel.
        assert_eq!(rules.stroke_width(Some("path"), 15), 1.0);
    }
}
