//! Semantic classes, their grouping into categories, and the surface orientation each
//! category is regularized towards.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The seven CityScapes-style categories the 19 segmentation classes are grouped into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Flat,
    Human,
    Vehicle,
    Construction,
    Object,
    Nature,
    Sky,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Flat,
        Category::Human,
        Category::Vehicle,
        Category::Construction,
        Category::Object,
        Category::Nature,
        Category::Sky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Flat => "flat",
            Category::Human => "human",
            Category::Vehicle => "vehicle",
            Category::Construction => "construction",
            Category::Object => "object",
            Category::Nature => "nature",
            Category::Sky => "sky",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    /// Orientation used when a mapping file does not override it.
    pub fn default_orientation(self) -> Orientation {
        match self {
            Category::Flat | Category::Sky => Orientation::Horizontal,
            Category::Human | Category::Vehicle | Category::Construction | Category::Object | Category::Nature => {
                Orientation::Vertical
            }
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown category '{s}'")))
    }
}

/// Surface orientation relative to gravity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Orientation {
    /// Normal along gravity (roads, sidewalks).
    Horizontal,
    /// Normal orthogonal to gravity (walls, fences).
    Vertical,
    Unconstrained,
}

impl Orientation {
    pub fn name(self) -> &'static str {
        match self {
            Orientation::Horizontal => "horizontal",
            Orientation::Vertical => "vertical",
            Orientation::Unconstrained => "unconstrained",
        }
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "horizontal" | "hp" => Ok(Orientation::Horizontal),
            "vertical" | "vp" => Ok(Orientation::Vertical),
            "unconstrained" | "none" => Ok(Orientation::Unconstrained),
            other => Err(Error::invalid(format!("unknown orientation '{other}'"))),
        }
    }
}

/// Set of categories the geometric losses are applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CategorySet(u8);

impl CategorySet {
    pub fn empty() -> Self {
        CategorySet(0)
    }

    pub fn all() -> Self {
        Category::ALL.into_iter().collect()
    }

    pub fn contains(self, c: Category) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn insert(&mut self, c: Category) {
        self.0 |= c.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Category> {
        Category::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

/// Vehicle, construction and flat.
impl Default for CategorySet {
    fn default() -> Self {
        [Category::Vehicle, Category::Construction, Category::Flat]
            .into_iter()
            .collect()
    }
}

impl FromIterator<Category> for CategorySet {
    fn from_iter<I: IntoIterator<Item = Category>>(iter: I) -> Self {
        let mut s = CategorySet::empty();
        for c in iter {
            s.insert(c);
        }
        s
    }
}

impl FromStr for CategorySet {
    type Err = Error;

    /// Comma-separated names, `all`, `none`, or `V+C+F`-style initials.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "" | "none" => return Ok(CategorySet::empty()),
            "all" => return Ok(CategorySet::all()),
            _ => {}
        }
        if s.contains('+') {
            return s
                .split('+')
                .map(|tok| match tok.trim().to_ascii_uppercase().as_str() {
                    "F" => Ok(Category::Flat),
                    "H" => Ok(Category::Human),
                    "V" => Ok(Category::Vehicle),
                    "C" => Ok(Category::Construction),
                    "O" => Ok(Category::Object),
                    "N" => Ok(Category::Nature),
                    "S" => Ok(Category::Sky),
                    _ => tok.parse::<Category>(),
                })
                .collect();
        }
        s.split(',').map(str::parse::<Category>).collect()
    }
}

impl fmt::Display for CategorySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(Category::name).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

/// CityScapes train ids and class names.
pub const CITYSCAPES_CLASSES: [(u8, &str, Category); 19] = [
    (0, "road", Category::Flat),
    (1, "sidewalk", Category::Flat),
    (2, "building", Category::Construction),
    (3, "wall", Category::Construction),
    (4, "fence", Category::Construction),
    (5, "pole", Category::Object),
    (6, "traffic_light", Category::Object),
    (7, "traffic_sign", Category::Object),
    (8, "vegetation", Category::Nature),
    (9, "terrain", Category::Nature),
    (10, "sky", Category::Sky),
    (11, "person", Category::Human),
    (12, "rider", Category::Human),
    (13, "car", Category::Vehicle),
    (14, "truck", Category::Vehicle),
    (15, "bus", Category::Vehicle),
    (16, "train", Category::Vehicle),
    (17, "motorcycle", Category::Vehicle),
    (18, "bicycle", Category::Vehicle),
];

/// Looks up a CityScapes class id by name.
pub fn cityscapes_class_id(name: &str) -> Option<u8> {
    CITYSCAPES_CLASSES
        .iter()
        .find(|(_, n, _)| n.eq_ignore_ascii_case(name))
        .map(|(id, _, _)| *id)
}

/// What an unmapped class id resolves to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefaultClass {
    /// Unmapped ids are an error.
    Reject,
    /// Unmapped ids are unconstrained.
    Unconstrained,
    Category(Category),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassEntry {
    pub name: String,
    pub category: Category,
}

/// class id -> category -> orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryMapping {
    classes: BTreeMap<u8, ClassEntry>,
    orientations: [Orientation; 7],
    default: DefaultClass,
}

impl Default for CategoryMapping {
    fn default() -> Self {
        Self::cityscapes()
    }
}

impl CategoryMapping {
    /// The 19 CityScapes classes grouped into 7 categories; unknown ids (e.g. 255) are
    /// unconstrained.
    pub fn cityscapes() -> Self {
        let classes = CITYSCAPES_CLASSES
            .iter()
            .map(|(id, name, cat)| {
                (
                    *id,
                    ClassEntry {
                        name: (*name).to_string(),
                        category: *cat,
                    },
                )
            })
            .collect();
        Self {
            classes,
            orientations: Category::ALL.map(Category::default_orientation),
            default: DefaultClass::Unconstrained,
        }
    }

    pub fn empty(default: DefaultClass) -> Self {
        Self {
            classes: BTreeMap::new(),
            orientations: Category::ALL.map(Category::default_orientation),
            default,
        }
    }

    pub fn insert(&mut self, id: u8, name: impl Into<String>, category: Category) {
        self.classes.insert(
            id,
            ClassEntry {
                name: name.into(),
                category,
            },
        );
    }

    pub fn set_orientation(&mut self, category: Category, orientation: Orientation) {
        self.orientations[category as usize] = orientation;
    }

    pub fn orientation(&self, category: Category) -> Orientation {
        self.orientations[category as usize]
    }

    pub fn default_class(&self) -> DefaultClass {
        self.default
    }

    pub fn set_default(&mut self, default: DefaultClass) {
        self.default = default;
    }

    pub fn classes(&self) -> impl Iterator<Item = (u8, &ClassEntry)> {
        self.classes.iter().map(|(k, v)| (*k, v))
    }

    pub fn class_id(&self, name: &str) -> Option<u8> {
        self.classes
            .iter()
            .find(|(_, e)| e.name.eq_ignore_ascii_case(name))
            .map(|(id, _)| *id)
    }

    /// `Ok(None)` means the id is unconstrained.
    pub fn resolve(&self, id: u8) -> std::result::Result<Option<Category>, u8> {
        match self.classes.get(&id) {
            Some(e) => Ok(Some(e.category)),
            None => match self.default {
                DefaultClass::Reject => Err(id),
                DefaultClass::Unconstrained => Ok(None),
                DefaultClass::Category(c) => Ok(Some(c)),
            },
        }
    }
}

/// Per-pixel class ids with their resolved category and orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticMask {
    width: usize,
    height: usize,
    class_ids: Vec<u8>,
    categories: Vec<Option<Category>>,
    orientations: Vec<Orientation>,
}

impl SemanticMask {
    /// Resolves every id through `mapping`; all unmapped ids are reported together.
    pub fn from_class_ids(width: usize, height: usize, class_ids: Vec<u8>, mapping: &CategoryMapping) -> Result<Self> {
        if class_ids.len() != width * height || width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {width}x{height} mask",
                class_ids.len()
            )));
        }
        let mut categories = Vec::with_capacity(class_ids.len());
        let mut unmapped = std::collections::BTreeSet::new();
        for &id in &class_ids {
            match mapping.resolve(id) {
                Ok(c) => categories.push(c),
                Err(id) => {
                    unmapped.insert(id);
                    categories.push(None);
                }
            }
        }
        if !unmapped.is_empty() {
            return Err(Error::UnmappedClasses {
                ids: unmapped.into_iter().collect(),
            });
        }
        let orientations = categories
            .iter()
            .map(|c| c.map_or(Orientation::Unconstrained, |c| mapping.orientation(c)))
            .collect();
        Ok(Self {
            width,
            height,
            class_ids,
            categories,
            orientations,
        })
    }

    /// Every pixel unconstrained.
    pub fn unconstrained(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            class_ids: vec![255; n],
            categories: vec![None; n],
            orientations: vec![Orientation::Unconstrained; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn class_ids(&self) -> &[u8] {
        &self.class_ids
    }
    pub fn category(&self, index: usize) -> Option<Category> {
        self.categories[index]
    }
    pub fn orientation(&self, index: usize) -> Orientation {
        self.orientations[index]
    }

    /// Orientation after gating: pixels whose category is not in `enabled` are unconstrained.
    pub fn gated_orientation(&self, index: usize, enabled: CategorySet) -> Orientation {
        match self.categories[index] {
            Some(c) if enabled.contains(c) => self.orientations[index],
            _ => Orientation::Unconstrained,
        }
    }
}
