//! Chapter and section overlay built on top of a notebook.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CategoryGroup};
use crate::encoding::{collapse_runs, encode_notebook, EncodedNotebook, EncodedUnit};
use crate::notebook::{classify_outputs, Cell, CellKind, Notebook, OutputKind};
use crate::patterns::{Icon, Matcher, PatternMatch, PurposePattern};

pub const DESCRIPTION_LEAD_IN: &str = "In this chapter, the data scientist";
pub const MAX_DESCRIPTION_SENTENCES: usize = 5;
pub const INTRODUCTION_TITLE: &str = "Introduction";
pub const CODE_FALLBACK_TITLE: &str = "Code";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverlayError {
    #[error("chapter ranges do not tile cells 1..{cells}: {detail}")]
    InvalidTiling { cells: usize, detail: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlagSet {
    pub data: bool,
    pub library: bool,
    pub graph: bool,
    pub table: bool,
    pub model: bool,
    pub notes: bool,
}

impl FlagSet {
    pub fn union(self, other: FlagSet) -> FlagSet {
        FlagSet {
            data: self.data || other.data,
            library: self.library || other.library,
            graph: self.graph || other.graph,
            table: self.table || other.table,
            model: self.model || other.model,
            notes: self.notes || other.notes,
        }
    }

    /// True when every flag set in `self` is also set in `other`.
    pub fn is_subset_of(self, other: FlagSet) -> bool {
        self.union(other) == other
    }

    pub fn names(self) -> Vec<&'static str> {
        [
            (self.data, "data"),
            (self.library, "library"),
            (self.graph, "graph"),
            (self.table, "table"),
            (self.model, "model"),
            (self.notes, "notes"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionOrigin {
    Pattern,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    /// 1-based inclusive display numbers.
    pub cell_range: (usize, usize),
    pub flags: FlagSet,
    pub icon: Icon,
    pub origin: SectionOrigin,
    pub collapsed_default: bool,
}

impl Section {
    pub fn contains(&self, display: usize) -> bool {
        (self.cell_range.0..=self.cell_range.1).contains(&display)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chapter {
    pub number: usize,
    pub title: String,
    pub description: String,
    /// Display number of the header cell, if the chapter has one.
    pub header_cell: Option<usize>,
    pub cell_ranges: Vec<(usize, usize)>,
    pub cell_count: usize,
    pub flags: FlagSet,
    pub sections: Vec<Section>,
}

impl Chapter {
    /// 0-based half-open cell indices covered by the first range.
    pub fn index_range(&self) -> Range<usize> {
        match self.cell_ranges.first() {
            Some(&(a, b)) => a - 1..b,
            None => 0..0,
        }
    }

    pub fn contains(&self, display: usize) -> bool {
        self.cell_ranges
            .iter()
            .any(|&(a, b)| (a..=b).contains(&display))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterEncoding {
    pub chapter: usize,
    /// Units after run collapse.
    pub units: usize,
    /// Units before run collapse.
    pub calls: usize,
    pub unknown_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayDocument {
    pub notebook_id: String,
    pub generator_version: String,
    pub chapters: Vec<Chapter>,
    pub encoding_summary: Vec<ChapterEncoding>,
}

impl OverlayDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("overlay serializes");
        s.push('\n');
        s
    }

    pub fn from_json(raw: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(raw)
    }

    pub fn chapter(&self, number: usize) -> Option<&Chapter> {
        number.checked_sub(1).and_then(|i| self.chapters.get(i))
    }

    pub fn section(&self, chapter: usize, section: usize) -> Option<&Section> {
        self.chapter(chapter)
            .and_then(|c| section.checked_sub(1).and_then(|i| c.sections.get(i)))
    }
}

/// Title of a markdown header cell, or None if the cell is not a header.
pub fn header_title(cell: &Cell) -> Option<String> {
    if cell.kind != CellKind::Markdown {
        return None;
    }
    let line = cell
        .source
        .lines()
        .find(|l| !l.trim().is_empty())?
        .trim_start();
    let hashes = line.chars().take_while(|&c| c == '#').count();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let title = line[hashes..].trim().trim_end_matches('#').trim();
    let title = strip_inline_markdown(title);
    Some(if title.is_empty() {
        "Untitled".to_string()
    } else {
        title
    })
}

/// Splits the notebook at header cells. Descriptions are filled in; flags and
/// sections are left empty.
pub fn build_chapters(nb: &Notebook) -> Vec<Chapter> {
    let mut starts: Vec<(usize, Option<String>)> = Vec::new();
    for cell in &nb.cells {
        if let Some(title) = header_title(cell) {
            starts.push((cell.index, Some(title)));
        } else if starts.is_empty() {
            starts.push((cell.index, None));
        }
    }
    let mut chapters = Vec::with_capacity(starts.len());
    for (i, (start, title)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(nb.len(), |s| s.0);
        let cells = &nb.cells[*start..end];
        let prose: Vec<&str> = cells
            .iter()
            .filter(|c| c.kind == CellKind::Markdown)
            .map(|c| c.source.as_str())
            .collect();
        chapters.push(Chapter {
            number: i + 1,
            title: title
                .clone()
                .unwrap_or_else(|| INTRODUCTION_TITLE.to_string()),
            description: compose_description(&prose),
            header_cell: title.as_ref().map(|_| start + 1),
            cell_ranges: vec![(start + 1, end)],
            cell_count: end - start,
            flags: FlagSet::default(),
            sections: Vec::new(),
        });
    }
    chapters
}

fn strip_inline_markdown(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '!' if chars.get(i + 1) == Some(&'[') => {
                // drop images entirely
                match skip_link(&chars, i + 1) {
                    Some((_, next)) => i = next,
                    None => {
                        out.push(c);
                        i += 1;
                    }
                }
            }
            '[' => match skip_link(&chars, i) {
                Some((label, next)) => {
                    out.push_str(&strip_inline_markdown(&label));
                    i = next;
                }
                None => {
                    out.push(c);
                    i += 1;
                }
            },
            '<' => match chars[i..].iter().position(|&c| c == '>') {
                Some(len)
                    if chars
                        .get(i + 1)
                        .is_some_and(|c| c.is_ascii_alphabetic() || *c == '/') =>
                {
                    i += len + 1;
                }
                _ => {
                    out.push(c);
                    i += 1;
                }
            },
            '*' | '`' => i += 1,
            '_' if chars.get(i + 1) == Some(&'_') => i += 2,
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// Parses `[label](target)` at `open`; returns the label and the index after it.
fn skip_link(chars: &[char], open: usize) -> Option<(String, usize)> {
    let close = open + chars[open..].iter().position(|&c| c == ']')?;
    if chars.get(close + 1) != Some(&'(') {
        return None;
    }
    let end = close + 1 + chars[close + 1..].iter().position(|&c| c == ')')?;
    Some((chars[open + 1..close].iter().collect(), end + 1))
}

fn prose_lines(markdown: &str) -> Vec<String> {
    let mut lines = Vec::new();
    let mut in_fence = false;
    for raw in markdown.lines() {
        let line = raw.trim();
        if line.starts_with("```") || line.starts_with("~~~") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence || line.is_empty() || line.starts_with('#') || line.starts_with('|') {
            continue;
        }
        if line
            .chars()
            .all(|c| matches!(c, '-' | '*' | '_' | '=' | ' '))
        {
            continue;
        }
        let mut body = line.trim_start_matches('>').trim_start();
        for bullet in ["- ", "* ", "+ "] {
            if let Some(rest) = body.strip_prefix(bullet) {
                body = rest;
            }
        }
        let digits = body.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 && body[digits..].starts_with(". ") {
            body = &body[digits + 2..];
        }
        let text = strip_inline_markdown(body);
        if !text.trim().is_empty() {
            lines.push(text.trim().to_string());
        }
    }
    lines
}

/// Splits after `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(paragraph: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = paragraph.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

const MODALS: &[&str] = &[
    "will", "can", "could", "should", "would", "may", "might", "must", "shall",
];
const ADVERBS: &[&str] = &[
    "also", "then", "first", "now", "next", "finally", "further", "again", "only", "just",
];

fn third_person(verb: &str) -> String {
    match verb {
        "are" | "am" => return "is".into(),
        "were" => return "was".into(),
        "have" => return "has".into(),
        "do" => return "does".into(),
        "go" => return "goes".into(),
        _ => {}
    }
    if MODALS.contains(&verb)
        || !verb.chars().all(|c| c.is_ascii_lowercase() || c == '-')
        || verb.is_empty()
    {
        return verb.to_string();
    }
    let bytes = verb.as_bytes();
    let last = bytes[bytes.len() - 1];
    let before = bytes.len().checked_sub(2).map(|i| bytes[i]);
    if last == b'y' && before.is_some_and(|b| !b"aeiou".contains(&b)) {
        format!("{}ies", &verb[..verb.len() - 1])
    } else if verb.ends_with('s')
        || verb.ends_with('x')
        || verb.ends_with('z')
        || verb.ends_with("ch")
        || verb.ends_with("sh")
    {
        format!("{verb}es")
    } else {
        format!("{verb}s")
    }
}

/// Rewrites a first-person opening ("We load ...") into the lead-in.
fn lead_in(first: &str) -> String {
    let words: Vec<&str> = first.split_whitespace().collect();
    let contracted = |w: &str| match w.to_ascii_lowercase().replace('’', "'").as_str() {
        "we'll" | "i'll" => Some("will"),
        "we've" | "i've" => Some("has"),
        "we're" | "i'm" => Some("is"),
        _ => None,
    };
    let head = words.first().copied().unwrap_or("");
    let rest_from = |i: usize| words.get(i..).map(|w| w.join(" ")).unwrap_or_default();
    if let Some(aux) = contracted(head) {
        return join_words(&[DESCRIPTION_LEAD_IN, aux, &rest_from(1)]);
    }
    let subject_len = match head.to_ascii_lowercase().replace('’', "'").as_str() {
        "we" | "i" => 1,
        "let's" | "lets" => 1,
        "let" if words.get(1).is_some_and(|w| w.eq_ignore_ascii_case("us")) => 2,
        _ => 0,
    };
    if subject_len == 0 || words.len() <= subject_len {
        return format!("{DESCRIPTION_LEAD_IN} notes: {first}");
    }
    let mut i = subject_len;
    let mut adverbs = Vec::new();
    while i + 1 < words.len() && ADVERBS.contains(&words[i].to_ascii_lowercase().as_str()) {
        adverbs.push(words[i]);
        i += 1;
    }
    let bare = words[i].trim_end_matches(|c: char| c.is_ascii_punctuation());
    let verb = format!("{}{}", third_person(bare), &words[i][bare.len()..]);
    let mut parts = vec![DESCRIPTION_LEAD_IN.to_string()];
    parts.extend(adverbs.iter().map(|s| s.to_string()));
    parts.push(verb);
    parts.push(rest_from(i + 1));
    join_words(&parts.iter().map(String::as_str).collect::<Vec<_>>())
}

fn join_words(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|p| !p.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Chapter description from the chapter's markdown cell sources.
pub fn compose_description(chapter_markdown: &[&str]) -> String {
    let paragraph = chapter_markdown
        .iter()
        .flat_map(|md| prose_lines(md))
        .collect::<Vec<_>>()
        .join(" ");
    let sentences = split_sentences(&paragraph);
    if sentences.is_empty() {
        return String::new();
    }
    let truncated = sentences.len() > MAX_DESCRIPTION_SENTENCES;
    let mut kept: Vec<String> = sentences
        .into_iter()
        .take(MAX_DESCRIPTION_SENTENCES)
        .collect();
    kept[0] = lead_in(&kept[0]);
    let mut text = kept.join(" ");
    if truncated {
        text.push_str(" …");
    }
    text
}

/// Flags for a span of cells and the (uncollapsed) units located in it.
pub fn compute_flags(cells: &[Cell], units: &[EncodedUnit]) -> FlagSet {
    use CategoryGroup::*;
    let mut f = FlagSet::default();
    for u in units {
        let code = u.code;
        let (group, index) = (code.group(), code.index());
        f.data |= group == L && matches!(index, 2 | 3);
        f.library |= group == L && index == 1;
        f.graph |= group == V || (group == ST && index == 3);
        f.table |= group == PP && index == 4;
        f.model |= (group == ML && matches!(index, 2 | 4 | 8)) || (group == ST && index == 5);
    }
    for cell in cells {
        match cell.kind {
            CellKind::Markdown => f.notes = true,
            CellKind::Code => {
                let kinds = classify_outputs(cell);
                f.graph |= kinds.contains(&OutputKind::Image);
                f.table |= kinds.contains(&OutputKind::Table);
            }
            CellKind::Raw => {}
        }
    }
    f
}

fn units_in(units: &[EncodedUnit], cells: Range<usize>) -> Vec<EncodedUnit> {
    units
        .iter()
        .filter(|u| cells.contains(&u.span.first_cell))
        .cloned()
        .collect()
}

pub fn fallback_icon(group: Option<CategoryGroup>) -> Icon {
    match group {
        Some(CategoryGroup::L) => Icon::Database,
        Some(CategoryGroup::PP) => Icon::Exchange,
        Some(CategoryGroup::ST) => Icon::Puzzle,
        Some(CategoryGroup::V) => Icon::Eye,
        Some(CategoryGroup::S) => Icon::Eject,
        Some(CategoryGroup::ML) => Icon::Magic,
        None => Icon::Cogs,
    }
}

/// Group with the largest multiplicity-weighted unit count; ties go to the
/// group listed first in `CategoryGroup::ALL`.
pub fn dominant_group(units: &[EncodedUnit]) -> Option<CategoryGroup> {
    let mut best: Option<(CategoryGroup, usize)> = None;
    for g in CategoryGroup::ALL {
        let weight: usize = units
            .iter()
            .filter(|u| u.code.group() == g)
            .map(|u| u.multiplicity)
            .sum();
        if weight > 0 && best.is_none_or(|(_, w)| weight > w) {
            best = Some((g, weight));
        }
    }
    best.map(|(g, _)| g)
}

/// Sections of one chapter. `matches` must come from the chapter's own
/// encoding; `units` are the chapter's uncollapsed units.
pub fn build_sections(
    nb: &Notebook,
    chapter: &Chapter,
    matches: &[PatternMatch],
    units: &[EncodedUnit],
    patterns: &[PurposePattern],
) -> Vec<Section> {
    let range = chapter.index_range();
    let code: Vec<usize> = range.clone().filter(|&i| nb.cells[i].is_code()).collect();
    if code.is_empty() {
        return Vec::new();
    }

    // cell-expanded match ranges, earlier matches keep shared cells
    let mut claimed: Vec<(usize, usize, &PatternMatch)> = Vec::new();
    let mut next_free = range.start;
    for m in matches {
        let first = m.cell_span.0.max(range.start).max(next_free);
        let last = m.cell_span.1.min(range.end - 1);
        if first > last {
            continue;
        }
        claimed.push((first, last, m));
        next_free = last + 1;
    }

    let section_for =
        |first: usize, last: usize, title: String, icon: Icon, origin: SectionOrigin| Section {
            title,
            cell_range: (first + 1, last + 1),
            flags: compute_flags(&nb.cells[first..=last], &units_in(units, first..last + 1)),
            icon,
            origin,
            collapsed_default: true,
        };

    let mut sections = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let flush = |pending: &mut Vec<usize>, sections: &mut Vec<Section>| {
        if let (Some(&first), Some(&last)) = (pending.first(), pending.last()) {
            let run_units = units_in(units, first..last + 1);
            let group = dominant_group(&run_units);
            let title = group
                .map_or(CODE_FALLBACK_TITLE, CategoryGroup::display_name)
                .to_string();
            sections.push(section_for(
                first,
                last,
                title,
                fallback_icon(group),
                SectionOrigin::Fallback,
            ));
        }
        pending.clear();
    };

    let mut claims = claimed.iter().peekable();
    for &cell in &code {
        while claims.peek().is_some_and(|c| c.1 < cell) {
            claims.next();
        }
        match claims.peek() {
            Some(&&(first, last, m)) if first <= cell && cell <= last => {
                flush(&mut pending, &mut sections);
                if sections
                    .last()
                    .is_none_or(|s: &Section| s.cell_range.0 != first + 1)
                {
                    let icon = patterns
                        .iter()
                        .find(|p| p.purpose == m.purpose)
                        .map_or(Icon::Cogs, |p| p.icon);
                    sections.push(section_for(
                        first,
                        last,
                        m.purpose.clone(),
                        icon,
                        SectionOrigin::Pattern,
                    ));
                }
            }
            _ => pending.push(cell),
        }
    }
    flush(&mut pending, &mut sections);
    sections
}

/// Checks that chapters are numbered 1..k and tile display cells 1..n, then
/// wraps them into a document.
pub fn emit_overlay(
    nb: &Notebook,
    chapters: Vec<Chapter>,
    encoding_summary: Vec<ChapterEncoding>,
    version: &str,
) -> Result<OverlayDocument, OverlayError> {
    let n = nb.len();
    let fail = |detail: String| OverlayError::InvalidTiling { cells: n, detail };
    let mut next = 1;
    for (i, ch) in chapters.iter().enumerate() {
        if ch.number != i + 1 {
            return Err(fail(format!("chapter {} is numbered {}", i + 1, ch.number)));
        }
        for &(a, b) in &ch.cell_ranges {
            if a != next || b < a {
                return Err(fail(format!(
                    "chapter {} range {a}-{b} does not start at {next}",
                    ch.number
                )));
            }
            next = b + 1;
        }
    }
    if next != n + 1 {
        return Err(fail(format!("cells {next}..{n} are not covered")));
    }
    Ok(OverlayDocument {
        notebook_id: nb.id.clone(),
        generator_version: version.to_string(),
        chapters,
        encoding_summary,
    })
}

/// Everything the overlay needs from the encoder, computed per chapter so that
/// collapsed units and matches never cross a chapter boundary.
#[derive(Debug, Clone)]
pub struct ChapterAnalysis {
    pub raw: EncodedNotebook,
    pub collapsed: EncodedNotebook,
    pub matches: Vec<PatternMatch>,
}

pub fn analyze_chapters(
    nb: &Notebook,
    chapters: &[Chapter],
    catalog: &Catalog,
    patterns: &[PurposePattern],
) -> Vec<ChapterAnalysis> {
    let enc = encode_notebook(nb, catalog);
    let matcher = Matcher::new(patterns);
    chapters
        .iter()
        .map(|ch| {
            let raw = enc.restrict_to_cells(ch.index_range());
            let collapsed = collapse_runs(&raw);
            let matches = matcher.find(&collapsed);
            ChapterAnalysis {
                raw,
                collapsed,
                matches,
            }
        })
        .collect()
}

/// Full pipeline from a parsed notebook to an overlay document.
pub fn build_overlay(
    nb: &Notebook,
    catalog: &Catalog,
    patterns: &[PurposePattern],
    version: &str,
) -> Result<OverlayDocument, OverlayError> {
    let mut chapters = build_chapters(nb);
    let analyses = analyze_chapters(nb, &chapters, catalog, patterns);
    let mut summary = Vec::with_capacity(chapters.len());
    for (ch, a) in chapters.iter_mut().zip(&analyses) {
        let range = ch.index_range();
        ch.flags = compute_flags(&nb.cells[range], &a.raw.units);
        ch.sections = build_sections(nb, ch, &a.matches, &a.raw.units, patterns);
        summary.push(ChapterEncoding {
            chapter: ch.number,
            units: a.collapsed.units.len(),
            calls: a.raw.units.len(),
            unknown_calls: a.raw.unknown_calls.len(),
        });
    }
    emit_overlay(nb, chapters, summary, version)
}

/// Display numbers of code cells covered by a chapter's sections.
pub fn section_cells(nb: &Notebook, section: &Section) -> BTreeSet<usize> {
    (section.cell_range.0..=section.cell_range.1)
        .filter(|&d| nb.cell_by_display(d).is_some_and(Cell::is_code))
        .collect()
}
