//! Notebook document model.
//!
//! Parses nbformat-4 JSON into an ordered, immutable list of cells and
//! summarizes each output into an [`OutputRecord`] whose [`OutputKind`] feeds
//! the chapter/section flags.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NotebookError {
    #[error("malformed notebook JSON: {0}")]
    MalformedJson(String),
    #[error("unsupported notebook format {major}.{minor} (only nbformat 4 is accepted)")]
    UnsupportedFormat { major: i64, minor: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputKind {
    Image,
    Table,
    Text,
    Error,
    Other,
}

/// Summary of one entry in a code cell's `outputs` list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub kind: OutputKind,
    pub mime_hint: String,
    /// Plain-text rendering (stream text, `text/plain`, or `ename: evalue`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Base64 payload of the first image mime type, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_base64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub kind: CellKind,
    pub source: String,
    pub outputs: Vec<OutputRecord>,
    pub display_number: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_count: Option<i64>,
}

impl Cell {
    pub fn new(index: usize, kind: CellKind, source: impl Into<String>) -> Self {
        Self {
            index,
            kind,
            source: source.into(),
            outputs: Vec::new(),
            display_number: index + 1,
            execution_count: None,
        }
    }

    pub fn with_outputs(mut self, outputs: Vec<OutputRecord>) -> Self {
        self.outputs = outputs;
        self
    }

    pub fn is_code(&self) -> bool {
        self.kind == CellKind::Code
    }

    /// Length of the source in characters; annotation anchors index into this.
    pub fn char_len(&self) -> usize {
        self.source.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notebook {
    pub id: String,
    pub cells: Vec<Cell>,
    pub format_version: (i64, i64),
}

impl Notebook {
    /// Builds a notebook from cells, renumbering indices densely.
    pub fn from_cells(id: impl Into<String>, cells: Vec<Cell>) -> Self {
        let cells = cells
            .into_iter()
            .enumerate()
            .map(|(i, mut c)| {
                c.index = i;
                c.display_number = i + 1;
                c
            })
            .collect();
        Self {
            id: id.into(),
            cells,
            format_version: (4, 5),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_by_display(&self, display: usize) -> Option<&Cell> {
        display.checked_sub(1).and_then(|i| self.cells.get(i))
    }

    pub fn code_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.is_code())
    }
}

/// Parses raw `.ipynb` bytes.
///
/// The notebook id defaults to a short content hash; callers that know the
/// file path usually replace it with [`Notebook::with_id`].
pub fn parse_notebook(raw: &[u8]) -> Result<Notebook, NotebookError> {
    let doc: Value =
        serde_json::from_slice(raw).map_err(|e| NotebookError::MalformedJson(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| NotebookError::MalformedJson("top level is not an object".into()))?;

    let major = obj.get("nbformat").and_then(Value::as_i64).unwrap_or(-1);
    let minor = obj
        .get("nbformat_minor")
        .and_then(Value::as_i64)
        .unwrap_or(0);
    if major != 4 {
        return Err(NotebookError::UnsupportedFormat { major, minor });
    }

    let raw_cells = match obj.get("cells") {
        None | Some(Value::Null) => &[][..],
        Some(Value::Array(cells)) => cells.as_slice(),
        Some(_) => {
            return Err(NotebookError::MalformedJson(
                "`cells` is not an array".into(),
            ))
        }
    };

    let mut cells = Vec::with_capacity(raw_cells.len());
    for (index, raw_cell) in raw_cells.iter().enumerate() {
        let cell_obj = raw_cell.as_object().ok_or_else(|| {
            NotebookError::MalformedJson(format!("cell {index} is not an object"))
        })?;
        let kind = match cell_obj.get("cell_type").and_then(Value::as_str) {
            Some("code") => CellKind::Code,
            Some("markdown") => CellKind::Markdown,
            Some("raw") => CellKind::Raw,
            other => {
                return Err(NotebookError::MalformedJson(format!(
                    "cell {index} has unknown cell_type {other:?}"
                )))
            }
        };
        let source = join_multiline(cell_obj.get("source"));
        let outputs = if kind == CellKind::Code {
            cell_obj
                .get("outputs")
                .and_then(Value::as_array)
                .map(|outs| outs.iter().map(summarize_output).collect())
                .unwrap_or_default()
        } else {
            Vec::new()
        };
        let execution_count = cell_obj.get("execution_count").and_then(Value::as_i64);
        cells.push(Cell {
            index,
            kind,
            source,
            outputs,
            display_number: index + 1,
            execution_count,
        });
    }

    let digest = Sha256::digest(raw);
    let id = format!(
        "sha256:{}",
        digest
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    );
    Ok(Notebook {
        id,
        cells,
        format_version: (major, minor),
    })
}

/// nbformat stores multi-line strings either as one string or as a list of
/// lines that already carry their trailing newline.
fn join_multiline(value: Option<&Value>) -> String {
    match value {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => parts.iter().filter_map(Value::as_str).collect(),
        _ => String::new(),
    }
}

fn summarize_output(output: &Value) -> OutputRecord {
    let output_type = output
        .get("output_type")
        .and_then(Value::as_str)
        .unwrap_or("");
    match output_type {
        "error" => {
            let ename = output
                .get("ename")
                .and_then(Value::as_str)
                .unwrap_or("Error");
            let evalue = output.get("evalue").and_then(Value::as_str).unwrap_or("");
            OutputRecord {
                kind: OutputKind::Error,
                mime_hint: "error".into(),
                text: Some(format!("{ename}: {evalue}")),
                image_base64: None,
            }
        }
        "stream" => {
            let name = output
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or("stdout");
            let text = join_multiline(output.get("text"));
            let kind = if looks_like_dataframe_text(&text) {
                OutputKind::Table
            } else {
                OutputKind::Text
            };
            OutputRecord {
                kind,
                mime_hint: format!("stream/{name}"),
                text: Some(text),
                image_base64: None,
            }
        }
        "display_data" | "execute_result" => summarize_mime_bundle(output.get("data")),
        _ => OutputRecord {
            kind: OutputKind::Other,
            mime_hint: output_type.to_string(),
            text: None,
            image_base64: None,
        },
    }
}

fn summarize_mime_bundle(data: Option<&Value>) -> OutputRecord {
    let Some(bundle) = data.and_then(Value::as_object) else {
        return OutputRecord {
            kind: OutputKind::Other,
            mime_hint: String::new(),
            text: None,
            image_base64: None,
        };
    };
    let plain = bundle.get("text/plain").map(|v| join_multiline(Some(v)));

    if let Some((mime, payload)) = bundle.iter().find(|(k, _)| k.starts_with("image/")) {
        let payload = join_multiline(Some(payload));
        return OutputRecord {
            kind: OutputKind::Image,
            mime_hint: mime.clone(),
            text: plain,
            image_base64: Some(payload.split_whitespace().collect()),
        };
    }
    if let Some(html) = bundle.get("text/html") {
        if join_multiline(Some(html))
            .to_ascii_lowercase()
            .contains("<table")
        {
            return OutputRecord {
                kind: OutputKind::Table,
                mime_hint: "text/html".into(),
                text: plain,
                image_base64: None,
            };
        }
    }
    if let Some(text) = plain {
        let kind = if looks_like_dataframe_text(&text) {
            OutputKind::Table
        } else {
            OutputKind::Text
        };
        return OutputRecord {
            kind,
            mime_hint: "text/plain".into(),
            text: Some(text),
            image_base64: None,
        };
    }
    OutputRecord {
        kind: OutputKind::Other,
        mime_hint: bundle.keys().next().cloned().unwrap_or_default(),
        text: None,
        image_base64: None,
    }
}

/// Returns the distinct output kinds of a code cell. Non-code cells have none.
pub fn classify_outputs(cell: &Cell) -> BTreeSet<OutputKind> {
    if !cell.is_code() {
        return BTreeSet::new();
    }
    cell.outputs.iter().map(|o| o.kind).collect()
}

/// Detects the plain-text rendering of a data frame: an indented header line of
/// column names followed by rows of `index value...` whose value tokens are
/// right-aligned under the header tokens.
pub fn looks_like_dataframe_text(text: &str) -> bool {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return false;
    };
    if !header.starts_with(' ') {
        return false;
    }
    let header_ends = token_ends(header);
    if header_ends.is_empty() {
        return false;
    }

    let mut aligned_rows = 0;
    let mut checked = 0;
    let mut first = true;
    for line in lines {
        // pandas prints the index name on its own line under the header
        if first && !line.starts_with(' ') && token_ends(line).len() == 1 {
            first = false;
            continue;
        }
        first = false;
        let trimmed = line.trim();
        if trimmed == "..."
            || trimmed.starts_with('[')
            || trimmed.chars().all(|c| c == '.' || c == ' ')
        {
            continue;
        }
        checked += 1;
        if checked > 5 {
            break;
        }
        if line.starts_with(' ') {
            return false;
        }
        let row_ends = token_ends(line);
        if row_ends.len() != header_ends.len() + 1 {
            return false;
        }
        if row_ends[1..] != header_ends[..] {
            return false;
        }
        aligned_rows += 1;
    }
    aligned_rows >= 1
}

fn token_ends(line: &str) -> Vec<usize> {
    let chars: Vec<char> = line.chars().collect();
    let mut ends = Vec::new();
    for (i, c) in chars.iter().enumerate() {
        if !c.is_whitespace() && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            ends.push(i + 1);
        }
    }
    ends
}
