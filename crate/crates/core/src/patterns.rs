//! Code-purpose patterns and the sequence matcher.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::CategoryCode;
use crate::encoding::EncodedNotebook;

pub const SEED_PATTERNS_JSON: &str = include_str!("../assets/patterns.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("malformed pattern config: {0}")]
    MalformedConfig(String),
    #[error("invalid category code {code:?} in pattern {purpose:?}")]
    InvalidCategoryCode { purpose: String, code: String },
    #[error("duplicate purpose {0:?}")]
    DuplicatePurpose(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Icon {
    Archive,
    Building,
    Database,
    Eject,
    Save,
    Camera,
    Exchange,
    Eye,
    Cogs,
    Flask,
    Magic,
    Puzzle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurposePattern {
    pub purpose: String,
    pub icon: Icon,
    pub sequences: Vec<Vec<CategoryCode>>,
    #[serde(default)]
    pub priority: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub purpose: String,
    pub unit_range: Range<usize>,
    /// 0-based (first, last) cell indices covered by the matched units.
    pub cell_span: (usize, usize),
    pub matched_sequence: Vec<CategoryCode>,
}

#[derive(Deserialize)]
struct PatternFile {
    patterns: Vec<RawPattern>,
}

#[derive(Deserialize)]
struct RawPattern {
    purpose: String,
    icon: Icon,
    sequences: Vec<Vec<String>>,
    #[serde(default)]
    priority: i32,
    #[serde(default)]
    provenance: Option<String>,
}

/// Loads and validates a pattern catalog, ordered by priority (ascending)
/// and then declaration order.
pub fn load_pattern_catalog(config: &[u8]) -> Result<Vec<PurposePattern>, PatternError> {
    let file: PatternFile =
        serde_json::from_slice(config).map_err(|e| PatternError::MalformedConfig(e.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(file.patterns.len());
    for raw in file.patterns {
        if !seen.insert(raw.purpose.clone()) {
            return Err(PatternError::DuplicatePurpose(raw.purpose));
        }
        if raw.sequences.is_empty() {
            return Err(PatternError::MalformedConfig(format!(
                "pattern {:?} has no sequences",
                raw.purpose
            )));
        }
        let mut sequences = Vec::with_capacity(raw.sequences.len());
        for seq in raw.sequences {
            if seq.is_empty() {
                return Err(PatternError::MalformedConfig(format!(
                    "pattern {:?} has an empty sequence",
                    raw.purpose
                )));
            }
            let codes = seq
                .into_iter()
                .map(|s| {
                    s.parse::<CategoryCode>()
                        .map_err(|_| PatternError::InvalidCategoryCode {
                            purpose: raw.purpose.clone(),
                            code: s,
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            sequences.push(codes);
        }
        out.push(PurposePattern {
            purpose: raw.purpose,
            icon: raw.icon,
            sequences,
            priority: raw.priority,
            provenance: raw.provenance,
        });
    }
    // stable sort keeps declaration order within a priority
    out.sort_by_key(|p| p.priority);
    Ok(out)
}

pub fn seed_patterns() -> Vec<PurposePattern> {
    load_pattern_catalog(SEED_PATTERNS_JSON.as_bytes()).expect("seed patterns are valid")
}

pub fn patterns_to_json(patterns: &[PurposePattern]) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        patterns: &'a [PurposePattern],
    }
    serde_json::to_string_pretty(&Out { patterns }).expect("patterns serialize")
}

/// Prefix tree over every catalog sequence. A terminal node keeps the
/// (pattern, sequence) with the lowest priority, earliest declared.
#[derive(Default)]
struct Trie {
    children: HashMap<CategoryCode, usize>,
    terminal: Option<(usize, usize)>,
}

pub struct Matcher<'a> {
    patterns: &'a [PurposePattern],
    nodes: Vec<Trie>,
}

impl<'a> Matcher<'a> {
    pub fn new(patterns: &'a [PurposePattern]) -> Self {
        let mut nodes = vec![Trie::default()];
        for (pi, pattern) in patterns.iter().enumerate() {
            for (si, seq) in pattern.sequences.iter().enumerate() {
                let mut node = 0;
                for code in seq {
                    node = match nodes[node].children.get(code) {
                        Some(&next) => next,
                        None => {
                            nodes.push(Trie::default());
                            let next = nodes.len() - 1;
                            nodes[node].children.insert(*code, next);
                            next
                        }
                    };
                }
                let slot = &mut nodes[node].terminal;
                if slot.is_none_or(|(best, _)| pattern.priority < patterns[best].priority) {
                    *slot = Some((pi, si));
                }
            }
        }
        Self { patterns, nodes }
    }

    /// Longest sequence starting at `codes[0]`, as (length, pattern, sequence).
    fn longest_at(&self, codes: &[CategoryCode]) -> Option<(usize, usize, usize)> {
        let mut node = 0;
        let mut best = None;
        for (i, code) in codes.iter().enumerate() {
            match self.nodes[node].children.get(code) {
                Some(&next) => node = next,
                None => break,
            }
            if let Some((pi, si)) = self.nodes[node].terminal {
                best = Some((i + 1, pi, si));
            }
        }
        best
    }

    /// Left-to-right, longest-match-first, non-overlapping scan.
    pub fn find(&self, enc: &EncodedNotebook) -> Vec<PatternMatch> {
        let codes = enc.codes();
        let mut out = Vec::new();
        let mut i = 0;
        while i < codes.len() {
            match self.longest_at(&codes[i..]) {
                Some((len, pi, si)) => {
                    let units = &enc.units[i..i + len];
                    let first = units.iter().map(|u| u.span.first_cell).min().unwrap_or(0);
                    let last = units.iter().map(|u| u.span.last_cell).max().unwrap_or(0);
                    out.push(PatternMatch {
                        purpose: self.patterns[pi].purpose.clone(),
                        unit_range: i..i + len,
                        cell_span: (first, last),
                        matched_sequence: self.patterns[pi].sequences[si].clone(),
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

pub fn match_patterns(enc: &EncodedNotebook, patterns: &[PurposePattern]) -> Vec<PatternMatch> {
    Matcher::new(patterns).find(enc)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub total: usize,
    /// Counts in corpus order.
    pub per_notebook: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub notebooks: Vec<String>,
    pub rows: BTreeMap<String, FrequencyRow>,
}

impl FrequencyTable {
    pub fn total(&self, purpose: &str) -> usize {
        self.rows.get(purpose).map_or(0, |r| r.total)
    }

    /// Appends another table's notebooks; totals add.
    pub fn extend(&mut self, other: &FrequencyTable) {
        let before = self.notebooks.len();
        self.notebooks.extend(other.notebooks.iter().cloned());
        for row in self.rows.values_mut() {
            row.per_notebook.resize(before, 0);
        }
        let purposes: BTreeSet<String> =
            self.rows.keys().chain(other.rows.keys()).cloned().collect();
        for purpose in purposes {
            let row = self
                .rows
                .entry(purpose.clone())
                .or_insert_with(|| FrequencyRow {
                    total: 0,
                    per_notebook: vec![0; before],
                });
            match other.rows.get(&purpose) {
                Some(o) => {
                    row.total += o.total;
                    row.per_notebook.extend(o.per_notebook.iter().copied());
                }
                None => row
                    .per_notebook
                    .extend(std::iter::repeat_n(0, other.notebooks.len())),
            }
        }
    }

    /// CSV with header `purpose,total,notebook,count`, one row per
    /// (purpose, notebook).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["purpose", "total", "notebook", "count"])
            .expect("in-memory write");
        for (purpose, row) in &self.rows {
            for (nb, count) in self.notebooks.iter().zip(&row.per_notebook) {
                w.write_record([
                    purpose.as_str(),
                    &row.total.to_string(),
                    nb.as_str(),
                    &count.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Counts pattern matches per notebook. `corpus` pairs a notebook name with
/// its run-collapsed encoding.
pub fn count_frequencies(
    corpus: &[(String, EncodedNotebook)],
    patterns: &[PurposePattern],
) -> FrequencyTable {
    let matcher = Matcher::new(patterns);
    let mut table = FrequencyTable {
        notebooks: corpus.iter().map(|(name, _)| name.clone()).collect(),
        rows: patterns
            .iter()
            .map(|p| {
                (
                    p.purpose.clone(),
                    FrequencyRow {
                        total: 0,
                        per_notebook: vec![0; corpus.len()],
                    },
                )
            })
            .collect(),
    };
    for (i, (_, enc)) in corpus.iter().enumerate() {
        for m in matcher.find(enc) {
            if let Some(row) = table.rows.get_mut(&m.purpose) {
                row.total += 1;
                row.per_notebook[i] += 1;
            }
        }
    }
    table
}
