//! Element sets for the prompt model: the furnishing/decorative partition,
//! category-aware stochastic masking, inference-time attribute transfer and
//! training-record construction.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterStream;

/// Categories treated as decorative; everything else is a core furnishing.
pub const DECORATIVE_CATEGORIES: [&str; 2] = ["Decorative Items", "Plants"];

/// Reserved token replacing masked categories and attributes.
pub const MASK_TOKEN: &str = "<MASK>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    CoreFurnishing,
    Decorative,
}

impl ElementKind {
    pub fn of(category: &str) -> Self {
        if DECORATIVE_CATEGORIES.contains(&category) {
            ElementKind::Decorative
        } else {
            ElementKind::CoreFurnishing
        }
    }
}

/// A `(category, attributes)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawElement")]
pub struct Element {
    pub category: String,
    pub attributes: Vec<String>,
    pub kind: ElementKind,
}

#[derive(Deserialize)]
struct RawElement {
    category: String,
    #[serde(default)]
    attributes: Vec<String>,
    kind: Option<ElementKind>,
}

impl TryFrom<RawElement> for Element {
    type Error = Error;

    fn try_from(raw: RawElement) -> Result<Self> {
        let el = Element::new(raw.category, raw.attributes)?;
        if let Some(kind) = raw.kind {
            if kind != el.kind {
                return Err(Error::invalid(format!(
                    "category {:?} declared {kind:?} but is {:?}",
                    el.category, el.kind
                )));
            }
        }
        Ok(el)
    }
}

impl Element {
    pub fn new<S: Into<String>>(category: impl Into<String>, attributes: impl IntoIterator<Item = S>) -> Result<Self> {
        let category = category.into();
        let attributes: Vec<String> = attributes.into_iter().map(Into::into).collect();
        if category.is_empty() || category == MASK_TOKEN {
            return Err(Error::invalid(format!("invalid category token {category:?}")));
        }
        if attributes.iter().any(|a| a == MASK_TOKEN) {
            return Err(Error::invalid("attribute tokens may not use the mask sentinel"));
        }
        Ok(Self {
            kind: ElementKind::of(&category),
            category,
            attributes,
        })
    }

    pub fn is_decorative(&self) -> bool {
        self.kind == ElementKind::Decorative
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawElementSet")]
pub struct ElementSet {
    pub style: String,
    pub room_type: String,
    pub elements: Vec<Element>,
}

#[derive(Deserialize)]
struct RawElementSet {
    style: String,
    room_type: String,
    elements: Vec<Element>,
}

impl TryFrom<RawElementSet> for ElementSet {
    type Error = Error;

    fn try_from(raw: RawElementSet) -> Result<Self> {
        ElementSet::new(raw.style, raw.room_type, raw.elements)
    }
}

impl ElementSet {
    /// Core-furnishing categories must be unique within a set.
    pub fn new(style: impl Into<String>, room_type: impl Into<String>, elements: Vec<Element>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in elements.iter().filter(|e| !e.is_decorative()) {
            if !seen.insert(e.category.as_str()) {
                return Err(Error::invalid(format!(
                    "core furnishing {:?} appears more than once",
                    e.category
                )));
            }
        }
        Ok(Self {
            style: style.into(),
            room_type: room_type.into(),
            elements,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().map(|e| e.category.as_str())
    }
}

/// Splits elements into `(core furnishings, decoratives)`, preserving order.
pub fn partition_elements(set: &ElementSet) -> (Vec<Element>, Vec<Element>) {
    set.elements.iter().cloned().partition(|e| !e.is_decorative())
}

/// Inverse of [`partition_elements`] up to interleaving: furnishings first.
pub fn merge_elements(style: &str, room_type: &str, fur: Vec<Element>, dec: Vec<Element>) -> Result<ElementSet> {
    let mut elements = fur;
    elements.extend(dec);
    ElementSet::new(style, room_type, elements)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingConfig {
    /// Attribute masking rate for core furnishings.
    pub p_attr_fur: f64,
    /// Category masking rate for decorative elements.
    pub p_cat_dec: f64,
    /// Attribute masking rate for decorative elements whose category survives.
    pub p_attr_dec: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            p_attr_fur: 0.3,
            p_cat_dec: 0.5,
            p_attr_dec: 0.5,
        }
    }
}

impl MaskingConfig {
    pub fn uniform(p: f64) -> Self {
        Self {
            p_attr_fur: p,
            p_cat_dec: p,
            p_attr_dec: p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_attr_fur", self.p_attr_fur),
            ("p_cat_dec", self.p_cat_dec),
            ("p_attr_dec", self.p_attr_dec),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedElement {
    /// Category text, or [`MASK_TOKEN`] when masked.
    pub category: String,
    pub category_masked: bool,
    pub attributes: Vec<String>,
    pub attribute_masked: Vec<bool>,
    pub kind: ElementKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedElementSet {
    pub style: String,
    pub room_type: String,
    pub elements: Vec<MaskedElement>,
    pub masking_config: MaskingConfig,
    pub seed: u64,
}

impl MaskedElementSet {
    pub fn masked_attribute_count(&self) -> usize {
        self.elements
            .iter()
            .flat_map(|e| &e.attribute_masked)
            .filter(|m| **m)
            .count()
    }
}

/// Category-aware masking. Furnishing categories are never masked; their
/// attributes drop independently with `p_attr_fur`. A decorative category
/// drops with `p_cat_dec` and takes all its attributes with it; otherwise
/// each attribute drops with `p_attr_dec`.
///
/// Draws come from the seed's counter stream in element order: one draw per
/// furnishing attribute; for a decorative element one category draw followed,
/// if the category survives, by one draw per attribute.
pub fn mask_elements(set: &ElementSet, cfg: &MaskingConfig, seed: u64) -> Result<MaskedElementSet> {
    cfg.validate()?;
    let mut stream = CounterStream::new(seed);
    let mask_attrs = |attrs: &[String], p: f64, stream: &mut CounterStream| -> (Vec<String>, Vec<bool>) {
        attrs
            .iter()
            .map(|a| {
                if stream.bernoulli(p) {
                    (MASK_TOKEN.to_string(), true)
                } else {
                    (a.clone(), false)
                }
            })
            .unzip()
    };
    let elements = set
        .elements
        .iter()
        .map(|e| match e.kind {
            ElementKind::CoreFurnishing => {
                let (attributes, attribute_masked) = mask_attrs(&e.attributes, cfg.p_attr_fur, &mut stream);
                MaskedElement {
                    category: e.category.clone(),
                    category_masked: false,
                    attributes,
                    attribute_masked,
                    kind: e.kind,
                }
            }
            ElementKind::Decorative => {
                if stream.bernoulli(cfg.p_cat_dec) {
                    MaskedElement {
                        category: MASK_TOKEN.into(),
                        category_masked: true,
                        attributes: vec![MASK_TOKEN.to_string(); e.attributes.len()],
                        attribute_masked: vec![true; e.attributes.len()],
                        kind: e.kind,
                    }
                } else {
                    let (attributes, attribute_masked) = mask_attrs(&e.attributes, cfg.p_attr_dec, &mut stream);
                    MaskedElement {
                        category: e.category.clone(),
                        category_masked: false,
                        attributes,
                        attribute_masked,
                        kind: e.kind,
                    }
                }
            }
        })
        .collect();
    Ok(MaskedElementSet {
        style: set.style.clone(),
        room_type: set.room_type.clone(),
        elements,
        masking_config: *cfg,
        seed,
    })
}

/// Category registry, attribute classes and the attribute-class →
/// compatible-category table used for attribute transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub version: u32,
    /// Registry order; transfer picks the first compatible category in it.
    pub categories: Vec<String>,
    /// Attribute token → attribute class such as `material/wood`.
    pub attributes: BTreeMap<String, String>,
    /// Attribute class → compatible categories.
    pub compatibility: BTreeMap<String, Vec<String>>,
}

const SHIPPED_VOCABULARY: &str = include_str!("../assets/vocabulary.json");

impl Vocabulary {
    pub fn shipped() -> Self {
        let v: Vocabulary = serde_json::from_str(SHIPPED_VOCABULARY).expect("shipped vocabulary parses");
        v.validate().expect("shipped vocabulary is consistent");
        v
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Vocabulary = serde_json::from_str(&text)?;
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let cats: HashSet<&str> = self.categories.iter().map(String::as_str).collect();
        if cats.len() != self.categories.len() {
            return Err(Error::invalid("vocabulary lists a category twice"));
        }
        for (class, targets) in &self.compatibility {
            if let Some(bad) = targets.iter().find(|t| !cats.contains(t.as_str())) {
                return Err(Error::invalid(format!(
                    "compatibility entry {class:?} names unknown category {bad:?}"
                )));
            }
        }
        Ok(())
    }

    /// First category in registry order that is compatible with `attribute`
    /// and satisfies `allowed`.
    pub fn compatible_target(&self, attribute: &str, allowed: impl Fn(&str) -> bool) -> Option<&str> {
        let class = self.attributes.get(attribute)?;
        let compatible = self.compatibility.get(class)?;
        self.categories
            .iter()
            .map(String::as_str)
            .find(|c| compatible.iter().any(|t| t == c) && allowed(c))
    }
}

/// Drops core furnishings the place image does not allow and re-attaches
/// their attributes to the first compatible allowed furnishing category.
/// Decorative elements pass through. A compatible category with no element in
/// the set yet gets a new element appended.
pub fn transfer_attributes(reference: &ElementSet, place_categories: &[impl AsRef<str>], vocab: &Vocabulary) -> Result<ElementSet> {
    let allowed: HashSet<&str> = place_categories.iter().map(|c| c.as_ref()).collect();
    let is_target = |c: &str| allowed.contains(c) && ElementKind::of(c) == ElementKind::CoreFurnishing;

    let mut kept: Vec<Element> = Vec::new();
    let mut orphans: Vec<String> = Vec::new();
    for e in &reference.elements {
        if e.is_decorative() || allowed.contains(e.category.as_str()) {
            kept.push(e.clone());
        } else {
            orphans.extend(e.attributes.iter().cloned());
        }
    }
    for attr in orphans {
        let Some(target) = vocab.compatible_target(&attr, is_target) else {
            continue;
        };
        match kept.iter_mut().find(|e| e.category == target) {
            Some(e) => {
                if !e.attributes.contains(&attr) {
                    e.attributes.push(attr);
                }
            }
            None => kept.push(Element::new(target, [attr])?),
        }
    }
    ElementSet::new(reference.style.clone(), reference.room_type.clone(), kept)
}

/// One supervised pair for the prompt model: masked inputs and the target
/// design description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub inputs: MaskedElementSet,
    pub target: String,
}

impl TrainingRecord {
    /// Single-line JSON for line-delimited corpora.
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

pub fn build_training_record(set: &ElementSet, cfg: &MaskingConfig, seed: u64, target_description: &str) -> Result<TrainingRecord> {
    if target_description.trim().is_empty() {
        return Err(Error::invalid("target description is empty"));
    }
    Ok(TrainingRecord {
        inputs: mask_elements(set, cfg, seed)?,
        target: target_description.to_string(),
    })
}
