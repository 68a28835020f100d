//! Function-call taxonomy: category codes and the name → code catalog.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The seed catalog shipped with the crate.
pub const SEED_CATALOG_JSON: &str = include_str!("../assets/catalog.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("malformed catalog config: {0}")]
    MalformedConfig(String),
    #[error("invalid category code {code:?} for entry {entry:?}")]
    InvalidCategoryCode { entry: String, code: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CategoryGroup {
    L,
    PP,
    ST,
    V,
    S,
    ML,
}

impl CategoryGroup {
    pub const ALL: [CategoryGroup; 6] = [
        CategoryGroup::L,
        CategoryGroup::PP,
        CategoryGroup::ST,
        CategoryGroup::V,
        CategoryGroup::S,
        CategoryGroup::ML,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            CategoryGroup::L => "L",
            CategoryGroup::PP => "PP",
            CategoryGroup::ST => "ST",
            CategoryGroup::V => "V",
            CategoryGroup::S => "S",
            CategoryGroup::ML => "ML",
        }
    }

    /// Human-readable group name, also used as the fallback section title.
    pub fn display_name(self) -> &'static str {
        match self {
            CategoryGroup::L => "Load",
            CategoryGroup::PP => "Pre-Processing",
            CategoryGroup::ST => "Statistics",
            CategoryGroup::V => "Visualization",
            CategoryGroup::S => "Domain Specific Functions",
            CategoryGroup::ML => "Machine Learning",
        }
    }

    /// Inclusive range of valid sub-code indices.
    pub fn index_range(self) -> (u8, u8) {
        match self {
            CategoryGroup::L => (1, 4),
            CategoryGroup::PP => (0, 5),
            CategoryGroup::ST => (1, 5),
            CategoryGroup::V => (1, 5),
            CategoryGroup::S => (1, 5),
            CategoryGroup::ML => (1, 8),
        }
    }
}

/// One functional category, e.g. `L2` (Fetch/Load) or `ML4` (Verify).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryCode {
    group: CategoryGroup,
    index: u8,
}

impl CategoryCode {
    pub fn new(group: CategoryGroup, index: u8) -> Option<Self> {
        let (lo, hi) = group.index_range();
        (lo..=hi).contains(&index).then_some(Self { group, index })
    }

    pub fn group(self) -> CategoryGroup {
        self.group
    }

    pub fn index(self) -> u8 {
        self.index
    }

    /// All 33 valid codes in group order.
    pub fn all() -> Vec<CategoryCode> {
        CategoryGroup::ALL
            .iter()
            .flat_map(|&g| {
                let (lo, hi) = g.index_range();
                (lo..=hi).map(move |i| CategoryCode { group: g, index: i })
            })
            .collect()
    }

    pub fn is_group(self, group: CategoryGroup) -> bool {
        self.group == group
    }

    /// Short category name.
    pub fn name(self) -> &'static str {
        use CategoryGroup::*;
        match (self.group, self.index) {
            (L, 1) => "Import/Generate",
            (L, 2) => "Fetch/Load",
            (L, 3) => "Parsing",
            (L, 4) => "Export",
            (PP, 0) => "String Operations",
            (PP, 1) => "Tidying Data",
            (PP, 2) => "Transforming Data",
            (PP, 3) => "Formatting Data",
            (PP, 4) => "Summary",
            (PP, 5) => "Data Inspection",
            (ST, 1) => "Summary",
            (ST, 2) => "Measure",
            (ST, 3) => "Plot",
            (ST, 4) => "Statistical Test",
            (ST, 5) => "Model",
            (V, 1) => "Distribution",
            (V, 2) => "Relational",
            (V, 3) => "Comparative",
            (V, 4) => "Modify Visualization",
            (V, 5) => "ML Visualization",
            (S, 1) => "NLP Operations",
            (S, 2) => "Querying",
            (S, 3) => "Math/Science",
            (S, 4) => "Domain Specific Functions",
            (S, 5) => "Image Processing",
            (ML, 1) => "Prep",
            (ML, 2) => "Train",
            (ML, 3) => "Test",
            (ML, 4) => "Verify",
            (ML, 5) => "Clustering",
            (ML, 6) => "Featuring",
            (ML, 7) => "Tuning",
            (ML, 8) => "Special",
            _ => unreachable!("CategoryCode is validated on construction"),
        }
    }
}

impl fmt::Display for CategoryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.group.prefix(), self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid category code {0:?}")]
pub struct ParseCodeError(pub String);

impl FromStr for CategoryCode {
    type Err = ParseCodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseCodeError(s.to_string());
        // longest prefixes first so "PP3" is not read as "P" + "P3"
        let (group, digits) = [
            ("PP", CategoryGroup::PP),
            ("ST", CategoryGroup::ST),
            ("ML", CategoryGroup::ML),
            ("L", CategoryGroup::L),
            ("V", CategoryGroup::V),
            ("S", CategoryGroup::S),
        ]
        .iter()
        .find_map(|(p, g)| s.strip_prefix(p).map(|rest| (*g, rest)))
        .ok_or_else(err)?;
        if digits.len() != 1 || !digits.as_bytes()[0].is_ascii_digit() {
            return Err(err());
        }
        CategoryCode::new(group, digits.as_bytes()[0] - b'0').ok_or_else(err)
    }
}

impl Serialize for CategoryCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CategoryCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Qualified function name → category mapping with a trailing-name fallback.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    pub version: String,
    pub functions: BTreeMap<String, CategoryCode>,
    pub fallback_names: BTreeMap<String, CategoryCode>,
    /// Documentation strings per code, carried through unchanged.
    pub categories: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    version: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    categories: BTreeMap<String, String>,
    #[serde(default)]
    functions: BTreeMap<String, String>,
    #[serde(default)]
    fallback_names: BTreeMap<String, String>,
}

impl Catalog {
    pub fn seed() -> Self {
        load_catalog(SEED_CATALOG_JSON.as_bytes()).expect("seed catalog is valid")
    }

    /// Exact match on the qualified name, then the trailing dotted segment
    /// against `fallback_names`.
    pub fn lookup(&self, qualified_name: &str) -> Option<CategoryCode> {
        if let Some(code) = self.functions.get(qualified_name) {
            return Some(*code);
        }
        let trailing = qualified_name.rsplit('.').next().unwrap_or(qualified_name);
        self.fallback_names.get(trailing).copied()
    }

    pub fn len(&self) -> usize {
        self.functions.len() + self.fallback_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty() && self.fallback_names.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            version: self.version.clone(),
            categories: self.categories.clone(),
            functions: self
                .functions
                .iter()
                .map(|(k, v)| (k.clone(), v.to_string()))
                .collect(),
            fallback_names: self
                .fallback_names
                .iter()
                .map(|(k, v)| (k.clone(), v.to_string()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }
}

pub fn load_catalog(config: &[u8]) -> Result<Catalog, CatalogError> {
    let file: CatalogFile =
        serde_json::from_slice(config).map_err(|e| CatalogError::MalformedConfig(e.to_string()))?;
    let parse_all = |map: BTreeMap<String, String>| {
        map.into_iter()
            .map(|(name, code)| match code.parse::<CategoryCode>() {
                Ok(c) => Ok((name, c)),
                Err(_) => Err(CatalogError::InvalidCategoryCode { entry: name, code }),
            })
            .collect::<Result<BTreeMap<_, _>, _>>()
    };
    let functions = parse_all(file.functions)?;
    let fallback_names = parse_all(file.fallback_names)?;
    for key in file.categories.keys() {
        if key.parse::<CategoryCode>().is_err() {
            return Err(CatalogError::InvalidCategoryCode {
                entry: format!("categories.{key}"),
                code: key.clone(),
            });
        }
    }
    Ok(Catalog {
        version: file.version,
        functions,
        fallback_names,
        categories: file.categories,
    })
}

/// Layers a user catalog over a base catalog; user entries win.
pub fn merge_extension(base: &Catalog, user: &Catalog) -> Catalog {
    let mut merged = base.clone();
    merged
        .functions
        .extend(user.functions.iter().map(|(k, v)| (k.clone(), *v)));
    merged
        .fallback_names
        .extend(user.fallback_names.iter().map(|(k, v)| (k.clone(), *v)));
    merged
        .categories
        .extend(user.categories.iter().map(|(k, v)| (k.clone(), v.clone())));
    merged.version = match (base.version.is_empty(), user.version.is_empty()) {
        (_, true) => base.version.clone(),
        (true, false) => user.version.clone(),
        (false, false) => format!("{}+{}", base.version, user.version),
    };
    merged
}
