//! Highlight annotations kept in a sidecar file next to the notebook.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::notebook::Notebook;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("anchor {start}..{end} is outside cell {cell} (length {len})")]
    AnchorOutOfBounds {
        cell: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("cell {0} does not exist")]
    UnknownCell(usize),
    #[error("annotation id {0:?} already exists")]
    DuplicateId(String),
    #[error("malformed annotation file: {0}")]
    MalformedStoreFile(String),
}

impl AnnotationError {
    /// Stable variant name, used in HTTP error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            Self::AnchorOutOfBounds { .. } => "AnchorOutOfBounds",
            Self::UnknownCell(_) => "UnknownCell",
            Self::DuplicateId(_) => "DuplicateId",
            Self::MalformedStoreFile(_) => "MalformedStoreFile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    Yellow,
    Blue,
    Green,
    Pink,
    Orange,
}

impl Color {
    pub const ALL: [Color; 5] = [
        Color::Yellow,
        Color::Blue,
        Color::Green,
        Color::Pink,
        Color::Orange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Yellow => "Yellow",
            Color::Blue => "Blue",
            Color::Green => "Green",
            Color::Pink => "Pink",
            Color::Orange => "Orange",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Color {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Color::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown color {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub start_char: usize,
    pub end_char: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub cell_display: usize,
    pub anchor: Anchor,
    pub color: Color,
    pub comment: String,
    pub author: String,
    #[serde(with = "iso_seconds")]
    pub created_at: i64,
    /// Set when a lenient load finds the anchor no longer fits the notebook.
    #[serde(skip)]
    pub orphaned: bool,
}

mod iso_seconds {
    use super::*;

    pub fn serialize<S: Serializer>(secs: &i64, s: S) -> Result<S::Ok, S::Error> {
        let dt = DateTime::<Utc>::from_timestamp(*secs, 0)
            .ok_or_else(|| serde::ser::Error::custom("timestamp out of range"))?;
        s.serialize_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i64, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|dt| dt.timestamp())
            .map_err(serde::de::Error::custom)
    }
}

pub fn format_timestamp(secs: i64) -> Option<String> {
    DateTime::<Utc>::from_timestamp(secs, 0).map(|dt| dt.to_rfc3339_opts(SecondsFormat::Secs, true))
}

/// Checks that `ann` anchors inside an existing cell of `nb`.
pub fn validate_anchor(nb: &Notebook, ann: &Annotation) -> Result<(), AnnotationError> {
    let cell = nb
        .cell_by_display(ann.cell_display)
        .ok_or(AnnotationError::UnknownCell(ann.cell_display))?;
    let len = cell.char_len();
    let Anchor {
        start_char,
        end_char,
    } = ann.anchor;
    if start_char >= end_char || end_char > len {
        return Err(AnnotationError::AnchorOutOfBounds {
            cell: ann.cell_display,
            start: start_char,
            end: end_char,
            len,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationStore {
    pub notebook_id: String,
    pub annotations: Vec<Annotation>,
}

impl AnnotationStore {
    pub fn new(notebook_id: impl Into<String>) -> Self {
        Self {
            notebook_id: notebook_id.into(),
            annotations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Annotation> {
        self.annotations.iter().find(|a| a.id == id)
    }

    pub fn add(&mut self, nb: &Notebook, ann: Annotation) -> Result<(), AnnotationError> {
        validate_anchor(nb, &ann)?;
        if self.get(&ann.id).is_some() {
            return Err(AnnotationError::DuplicateId(ann.id));
        }
        self.annotations.push(ann);
        Ok(())
    }

    /// Filters by cell and color, sorted by (cell, start, created_at, id).
    pub fn query(&self, cell_display: Option<usize>, color: Option<Color>) -> Vec<&Annotation> {
        let mut hits: Vec<&Annotation> = self
            .annotations
            .iter()
            .filter(|a| cell_display.is_none_or(|c| a.cell_display == c))
            .filter(|a| color.is_none_or(|c| a.color == c))
            .collect();
        hits.sort_by(|a, b| {
            (a.cell_display, a.anchor.start_char, a.created_at, &a.id).cmp(&(
                b.cell_display,
                b.anchor.start_char,
                b.created_at,
                &b.id,
            ))
        });
        hits
    }

    /// Sidecar contents: a JSON array in insertion order.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.annotations).expect("annotations serialize");
        s.push('\n');
        s
    }

    /// Parses a sidecar file. With a notebook and `strict`, bad anchors are
    /// errors; without `strict` they are kept and marked orphaned.
    pub fn from_json(
        raw: &[u8],
        notebook_id: impl Into<String>,
        nb: Option<&Notebook>,
        strict: bool,
    ) -> Result<Self, AnnotationError> {
        let mut annotations: Vec<Annotation> = serde_json::from_slice(raw)
            .map_err(|e| AnnotationError::MalformedStoreFile(e.to_string()))?;
        let mut ids = BTreeSet::new();
        for ann in &mut annotations {
            if !ids.insert(ann.id.clone()) {
                return Err(AnnotationError::DuplicateId(ann.id.clone()));
            }
            if let Some(nb) = nb {
                match validate_anchor(nb, ann) {
                    Ok(()) => {}
                    Err(e) if strict => return Err(e),
                    Err(_) => ann.orphaned = true,
                }
            }
        }
        Ok(Self {
            notebook_id: notebook_id.into(),
            annotations,
        })
    }

    pub fn orphans(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(|a| a.orphaned)
    }
}
