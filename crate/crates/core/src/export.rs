//! Export of the expanded parts of an overlay, with their annotations.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{Annotation, AnnotationStore};
use crate::notebook::{CellKind, Notebook, OutputKind, OutputRecord};
use crate::overlay::{FlagSet, OverlayDocument};
use crate::patterns::Icon;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExportError {
    #[error("invalid view state: {0}")]
    InvalidViewState(String),
    #[error("unknown export format {0:?}")]
    UnknownFormat(String),
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
    #[error("snapshot was written by version {found}, newer than {reader}")]
    VersionMismatch { found: String, reader: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Markdown,
    Html,
    SnapshotJson,
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "html" => Ok(Self::Html),
            "snapshot-json" | "json" => Ok(Self::SnapshotJson),
            other => Err(ExportError::UnknownFormat(other.to_string())),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Markdown => "md",
            Self::Html => "html",
            Self::SnapshotJson => "snapshot.json",
        }
    }
}

/// Expanded chapters and sections, both 1-based.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewState {
    pub expanded_sections: BTreeSet<(usize, usize)>,
    pub expanded_chapters: BTreeSet<usize>,
}

impl ViewState {
    pub fn all(overlay: &OverlayDocument) -> Self {
        let mut v = Self::default();
        for ch in &overlay.chapters {
            v.expanded_chapters.insert(ch.number);
            v.expanded_sections
                .extend((1..=ch.sections.len()).map(|s| (ch.number, s)));
        }
        v
    }

    /// Parses `all`, `none`, or a comma list of `chapter` and
    /// `chapter.section` items. A bare chapter expands all its sections.
    pub fn parse_spec(spec: &str, overlay: &OverlayDocument) -> Result<Self, ExportError> {
        let spec = spec.trim();
        match spec {
            "all" => return Ok(Self::all(overlay)),
            "none" | "" => return Ok(Self::default()),
            _ => {}
        }
        let bad = |item: &str| ExportError::InvalidViewState(format!("cannot parse {item:?}"));
        let mut v = Self::default();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('.') {
                Some((c, s)) => {
                    let c: usize = c.parse().map_err(|_| bad(item))?;
                    let s: usize = s.parse().map_err(|_| bad(item))?;
                    v.expanded_chapters.insert(c);
                    v.expanded_sections.insert((c, s));
                }
                None => {
                    let c: usize = item.parse().map_err(|_| bad(item))?;
                    v.expanded_chapters.insert(c);
                    let n = overlay.chapter(c).map_or(0, |ch| ch.sections.len());
                    v.expanded_sections.extend((1..=n).map(|s| (c, s)));
                }
            }
        }
        v.validate(overlay)?;
        Ok(v)
    }

    pub fn validate(&self, overlay: &OverlayDocument) -> Result<(), ExportError> {
        for &c in &self.expanded_chapters {
            if overlay.chapter(c).is_none() {
                return Err(ExportError::InvalidViewState(format!(
                    "chapter {c} does not exist (overlay has {})",
                    overlay.chapters.len()
                )));
            }
        }
        for &(c, s) in &self.expanded_sections {
            if overlay.section(c, s).is_none() {
                return Err(ExportError::InvalidViewState(format!(
                    "section {c}.{s} does not exist"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedOutput {
    pub kind: OutputKind,
    pub mime_hint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedCell {
    pub display: usize,
    pub kind: CellKind,
    pub source: String,
    pub outputs: Vec<ExportedOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedSection {
    pub number: usize,
    pub title: String,
    pub cell_range: (usize, usize),
    pub icon: Icon,
    pub flags: FlagSet,
    pub expanded: bool,
    pub cells: Vec<ExportedCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedChapter {
    pub number: usize,
    pub title: String,
    pub description: String,
    pub cell_ranges: Vec<(usize, usize)>,
    pub cell_count: usize,
    pub flags: FlagSet,
    pub expanded: bool,
    pub header_cell: Option<usize>,
    pub sections: Vec<ExportedSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlaySubset {
    pub notebook_id: String,
    pub chapters: Vec<ExportedChapter>,
}

impl OverlaySubset {
    /// Display numbers of every cell carried by the subset.
    pub fn cells(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for ch in &self.chapters {
            for s in &ch.sections {
                out.extend(s.cells.iter().map(|c| c.display));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub generator_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exported_at: Option<String>,
    pub view_state: ViewState,
    pub annotations: Vec<Annotation>,
    pub overlay_subset: OverlaySubset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportDocument {
    pub bytes: Vec<u8>,
    /// Files referenced by the document (Markdown image outputs).
    pub attachments: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    pub generator_version: String,
    /// ISO-8601 timestamp recorded in snapshots; omitted when None.
    pub exported_at: Option<String>,
}

fn export_cell(nb: &Notebook, display: usize) -> Option<ExportedCell> {
    let cell = nb.cell_by_display(display)?;
    Some(ExportedCell {
        display,
        kind: cell.kind,
        source: cell.source.clone(),
        outputs: cell
            .outputs
            .iter()
            .map(|o| ExportedOutput {
                kind: o.kind,
                mime_hint: o.mime_hint.clone(),
                text: o.text.clone(),
            })
            .collect(),
    })
}

/// The part of the overlay a view state exposes.
pub fn overlay_subset(overlay: &OverlayDocument, nb: &Notebook, view: &ViewState) -> OverlaySubset {
    let chapters = overlay
        .chapters
        .iter()
        .map(|ch| ExportedChapter {
            number: ch.number,
            title: ch.title.clone(),
            description: ch.description.clone(),
            cell_ranges: ch.cell_ranges.clone(),
            cell_count: ch.cell_count,
            flags: ch.flags,
            expanded: view.expanded_chapters.contains(&ch.number),
            header_cell: ch.header_cell,
            sections: ch
                .sections
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let expanded = view.expanded_sections.contains(&(ch.number, i + 1));
                    ExportedSection {
                        number: i + 1,
                        title: s.title.clone(),
                        cell_range: s.cell_range,
                        icon: s.icon,
                        flags: s.flags,
                        expanded,
                        cells: if expanded {
                            (s.cell_range.0..=s.cell_range.1)
                                .filter_map(|d| export_cell(nb, d))
                                .collect()
                        } else {
                            Vec::new()
                        },
                    }
                })
                .collect(),
        })
        .collect();
    OverlaySubset {
        notebook_id: overlay.notebook_id.clone(),
        chapters,
    }
}

pub fn export(
    overlay: &OverlayDocument,
    nb: &Notebook,
    store: &AnnotationStore,
    view: &ViewState,
    format: ExportFormat,
    opts: &ExportOptions,
) -> Result<ExportDocument, ExportError> {
    view.validate(overlay)?;
    let subset = overlay_subset(overlay, nb, view);
    let included = subset.cells();
    let annotations: Vec<Annotation> = store
        .query(None, None)
        .into_iter()
        .filter(|a| included.contains(&a.cell_display))
        .cloned()
        .collect();
    Ok(match format {
        ExportFormat::SnapshotJson => {
            let snap = Snapshot {
                generator_version: opts.generator_version.clone(),
                exported_at: opts.exported_at.clone(),
                view_state: view.clone(),
                annotations,
                overlay_subset: subset,
            };
            let mut s = serde_json::to_string_pretty(&snap).expect("snapshot serializes");
            s.push('\n');
            ExportDocument {
                bytes: s.into_bytes(),
                attachments: Vec::new(),
            }
        }
        ExportFormat::Markdown => render_markdown(&subset, nb, &annotations, opts),
        ExportFormat::Html => render_html(&subset, nb, &annotations, opts),
    })
}

fn range_label((a, b): (usize, usize)) -> String {
    if a == b {
        format!("cell {a}")
    } else {
        format!("cells {a}-{b}")
    }
}

fn chapter_label(ch: &ExportedChapter) -> String {
    let ranges: Vec<String> = ch.cell_ranges.iter().map(|&r| range_label(r)).collect();
    format!("{}, {} cells", ranges.join(", "), ch.cell_count)
}

fn image_bytes(o: &OutputRecord) -> Option<Vec<u8>> {
    let data = o.image_base64.as_deref()?;
    let compact: String = data.chars().filter(|c| !c.is_whitespace()).collect();
    base64::engine::general_purpose::STANDARD
        .decode(compact)
        .ok()
}

fn image_extension(mime: &str) -> &str {
    match mime {
        "image/png" => "png",
        "image/jpeg" => "jpg",
        "image/gif" => "gif",
        "image/svg+xml" => "svg",
        other => other.strip_prefix("image/").unwrap_or("bin"),
    }
}

fn fence_for(text: &str) -> String {
    let longest = text.split(|c| c != '`').map(str::len).max().unwrap_or(0);
    "`".repeat(longest.max(2) + 1)
}

fn render_markdown(
    subset: &OverlaySubset,
    nb: &Notebook,
    annotations: &[Annotation],
    opts: &ExportOptions,
) -> ExportDocument {
    let mut out = String::new();
    let mut attachments = Vec::new();
    let _ = writeln!(out, "<!-- nbpurpose export {} -->", opts.generator_version);
    let _ = writeln!(out, "# {}\n", subset.notebook_id);

    let mut cell_md = |out: &mut String, cell: &ExportedCell| {
        let _ = writeln!(out, "<!-- cell {} -->", cell.display);
        match cell.kind {
            CellKind::Markdown => {
                let _ = writeln!(out, "{}\n", cell.source.trim_end());
            }
            CellKind::Code | CellKind::Raw => {
                let fence = fence_for(&cell.source);
                let lang = if cell.kind == CellKind::Code {
                    "python"
                } else {
                    ""
                };
                let _ = writeln!(out, "{fence}{lang}\n{}\n{fence}\n", cell.source.trim_end());
            }
        }
        let records = nb
            .cell_by_display(cell.display)
            .map_or(&[][..], |c| &c.outputs[..]);
        for (i, o) in records.iter().enumerate() {
            if o.kind == OutputKind::Image {
                if let Some(bytes) = image_bytes(o) {
                    let name = format!(
                        "cell-{}-output-{}.{}",
                        cell.display,
                        i + 1,
                        image_extension(&o.mime_hint)
                    );
                    let _ = writeln!(out, "![cell {} output {}]({name})\n", cell.display, i + 1);
                    attachments.push((name, bytes));
                    continue;
                }
            }
            if let Some(text) = &o.text {
                let fence = fence_for(text);
                let _ = writeln!(out, "{fence}text\n{}\n{fence}\n", text.trim_end());
            }
        }
        for a in annotations
            .iter()
            .filter(|a| a.cell_display == cell.display)
        {
            let _ = writeln!(out, "<!-- annotation {} -->", a.id);
            let quoted = cell_excerpt(nb, a);
            let _ = writeln!(
                out,
                "> **{}** on `{}`: {} ({})\n",
                a.color,
                quoted.replace('`', "'"),
                a.comment,
                a.author
            );
        }
    };

    for ch in &subset.chapters {
        let _ = writeln!(
            out,
            "## {}. {} ({})\n",
            ch.number,
            ch.title,
            chapter_label(ch)
        );
        if !ch.description.is_empty() {
            let _ = writeln!(out, "_{}_\n", ch.description);
        }
        for s in &ch.sections {
            if s.expanded {
                let _ = writeln!(
                    out,
                    "### {}.{} {} ({})\n",
                    ch.number,
                    s.number,
                    s.title,
                    range_label(s.cell_range)
                );
                for c in &s.cells {
                    cell_md(&mut out, c);
                }
            } else {
                let _ = writeln!(
                    out,
                    "### {}.{} {} ({}) [collapsed]\n",
                    ch.number,
                    s.number,
                    s.title,
                    range_label(s.cell_range)
                );
            }
        }
    }
    ExportDocument {
        bytes: out.into_bytes(),
        attachments,
    }
}

fn cell_excerpt(nb: &Notebook, a: &Annotation) -> String {
    nb.cell_by_display(a.cell_display)
        .map(|c| {
            c.source
                .chars()
                .skip(a.anchor.start_char)
                .take(a.anchor.end_char.saturating_sub(a.anchor.start_char))
                .collect::<String>()
        })
        .unwrap_or_default()
        .replace('\n', " ")
}

pub fn html_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const HTML_STYLE: &str = "body{font-family:sans-serif;max-width:60em;margin:2em auto;color:#222}\
pre{background:#f6f6f6;padding:.6em;overflow-x:auto}\
.stub{color:#777}\
.chapter-meta{color:#555;font-size:.9em}\
.annotation{border-left:4px solid;padding:.3em .6em;margin:.4em 0}\
.annotation[data-color=Yellow]{border-color:#e6c200;background:#fff8d0}\
.annotation[data-color=Blue]{border-color:#3b7dd8;background:#e4efff}\
.annotation[data-color=Green]{border-color:#3aa655;background:#e3f6e8}\
.annotation[data-color=Pink]{border-color:#d85ba0;background:#fde6f2}\
.annotation[data-color=Orange]{border-color:#e98a15;background:#fdebd6}";

fn render_html(
    subset: &OverlaySubset,
    nb: &Notebook,
    annotations: &[Annotation],
    opts: &ExportOptions,
) -> ExportDocument {
    let mut out = String::new();
    let title = html_escape(&subset.notebook_id);
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n\
         <meta name=\"generator\" content=\"nbpurpose {}\">\n<title>{title}</title>\n<style>{HTML_STYLE}</style>\n</head>\n<body>\n<h1>{title}</h1>\n",
        html_escape(&opts.generator_version)
    );

    let cell_html = |out: &mut String, cell: &ExportedCell| {
        let _ = writeln!(out, "<div class=\"cell\" data-cell=\"{}\">", cell.display);
        let _ = writeln!(
            out,
            "<pre><code>{}</code></pre>",
            html_escape(cell.source.trim_end())
        );
        let records = nb
            .cell_by_display(cell.display)
            .map_or(&[][..], |c| &c.outputs[..]);
        for o in records {
            match (&o.kind, &o.image_base64, &o.text) {
                (OutputKind::Image, Some(data), _) => {
                    let compact: String = data.chars().filter(|c| !c.is_whitespace()).collect();
                    let _ = writeln!(
                        out,
                        "<img alt=\"cell {} output\" src=\"data:{};base64,{compact}\">",
                        cell.display,
                        html_escape(&o.mime_hint)
                    );
                }
                (_, _, Some(text)) => {
                    let _ = writeln!(
                        out,
                        "<pre class=\"output\">{}</pre>",
                        html_escape(text.trim_end())
                    );
                }
                _ => {}
            }
        }
        for a in annotations
            .iter()
            .filter(|a| a.cell_display == cell.display)
        {
            let _ = writeln!(
                out,
                "<aside class=\"annotation\" data-annotation=\"{}\" data-color=\"{}\"><b>{}</b> on <code>{}</code>: {} <i>({})</i></aside>",
                html_escape(&a.id),
                a.color,
                a.color,
                html_escape(&cell_excerpt(nb, a)),
                html_escape(&a.comment),
                html_escape(&a.author)
            );
        }
        out.push_str("</div>\n");
    };

    for ch in &subset.chapters {
        let _ = writeln!(
            out,
            "<section class=\"chapter\" data-chapter=\"{}\">",
            ch.number
        );
        let _ = writeln!(out, "<h2>{}. {}</h2>", ch.number, html_escape(&ch.title));
        let _ = writeln!(out, "<p class=\"chapter-meta\">{}</p>", chapter_label(ch));
        if !ch.description.is_empty() {
            let _ = writeln!(
                out,
                "<p class=\"description\">{}</p>",
                html_escape(&ch.description)
            );
        }
        for s in &ch.sections {
            if s.expanded {
                let _ = writeln!(
                    out,
                    "<section class=\"section\" data-section=\"{}.{}\">\n<h3>{}.{} {} ({})</h3>",
                    ch.number,
                    s.number,
                    ch.number,
                    s.number,
                    html_escape(&s.title),
                    range_label(s.cell_range)
                );
                for c in &s.cells {
                    cell_html(&mut out, c);
                }
                out.push_str("</section>\n");
            } else {
                let _ = writeln!(
                    out,
                    "<h3 class=\"stub\" data-section=\"{}.{}\">{}.{} {} ({})</h3>",
                    ch.number,
                    s.number,
                    ch.number,
                    s.number,
                    html_escape(&s.title),
                    range_label(s.cell_range)
                );
            }
        }
        out.push_str("</section>\n");
    }
    out.push_str("</body>\n</html>\n");
    ExportDocument {
        bytes: out.into_bytes(),
        attachments: Vec::new(),
    }
}

fn parse_version(v: &str) -> Option<(u64, u64, u64)> {
    let core = v.split(['-', '+']).next()?;
    let mut parts = core.split('.').map(|p| p.parse::<u64>());
    let major = parts.next()?.ok()?;
    let minor = parts.next().unwrap_or(Ok(0)).ok()?;
    let patch = parts.next().unwrap_or(Ok(0)).ok()?;
    Some((major, minor, patch))
}

/// Parses a snapshot written by `export`, refusing ones from newer writers.
pub fn import_snapshot(raw: &[u8], reader_version: &str) -> Result<Snapshot, ExportError> {
    let snap: Snapshot =
        serde_json::from_slice(raw).map_err(|e| ExportError::MalformedSnapshot(e.to_string()))?;
    let found = parse_version(&snap.generator_version).ok_or_else(|| {
        ExportError::MalformedSnapshot(format!("bad version {:?}", snap.generator_version))
    })?;
    let reader = parse_version(reader_version).ok_or_else(|| {
        ExportError::MalformedSnapshot(format!("bad reader version {reader_version:?}"))
    })?;
    if found > reader {
        return Err(ExportError::VersionMismatch {
            found: snap.generator_version,
            reader: reader_version.to_string(),
        });
    }
    Ok(snap)
}

/// Rebuilds a store holding only the snapshot's annotations.
pub fn snapshot_store(snap: &Snapshot) -> AnnotationStore {
    AnnotationStore {
        notebook_id: snap.overlay_subset.notebook_id.clone(),
        annotations: snap.annotations.clone(),
    }
}
