//! Independent oracles shared by the core tests and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use nbpurpose_core::catalog::SEED_CATALOG_JSON;
use nbpurpose_core::export::{export, import_snapshot, snapshot_store, ExportOptions};
use nbpurpose_core::patterns::{PatternMatch, PurposePattern};
use nbpurpose_core::synth::{synth_notebook, Stmt, SynthCell, SynthConfig, SynthNotebook};
use nbpurpose_core::{
    collapse_runs, encode_notebook, flag_repeats, parse_notebook, segment, Anchor, Annotation,
    AnnotationStore, Catalog, CategoryCode, CellKind, Color, ExportFormat, Notebook, OutputKind,
    OverlayDocument, ViewState,
};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::Value;

pub const FIXTURES: [&str; 3] = ["tiny", "house_prices", "titanic"];

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn load_fixture(name: &str) -> Notebook {
    let raw = std::fs::read(fixtures_dir().join(format!("{name}.ipynb"))).unwrap();
    parse_notebook(&raw).unwrap().with_id(name)
}

pub fn opts() -> ExportOptions {
    ExportOptions {
        generator_version: "0.1.0".into(),
        exported_at: None,
    }
}

// ---- pattern matching ----

pub type RefMatch = (String, usize, usize, Vec<CategoryCode>);

/// Every (position, pattern, sequence) triple, longest first, then by
/// priority, pattern index and sequence index.
pub fn brute_force(codes: &[CategoryCode], patterns: &[PurposePattern]) -> Vec<RefMatch> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < codes.len() {
        let mut best: Option<(usize, i32, usize, usize)> = None;
        for (pi, p) in patterns.iter().enumerate() {
            for (si, seq) in p.sequences.iter().enumerate() {
                let fits = i + seq.len() <= codes.len() && codes[i..i + seq.len()] == seq[..];
                if !fits {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((len, prio, bpi, bsi)) => {
                        seq.len() > len
                            || (seq.len() == len && (p.priority, pi, si) < (prio, bpi, bsi))
                    }
                };
                if better {
                    best = Some((seq.len(), p.priority, pi, si));
                }
            }
        }
        match best {
            Some((len, _, pi, si)) => {
                out.push((
                    patterns[pi].purpose.clone(),
                    i,
                    i + len,
                    patterns[pi].sequences[si].clone(),
                ));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

pub fn simplify(ms: &[PatternMatch]) -> Vec<RefMatch> {
    ms.iter()
        .map(|m| {
            (
                m.purpose.clone(),
                m.unit_range.start,
                m.unit_range.end,
                m.matched_sequence.clone(),
            )
        })
        .collect()
}

/// Per-purpose totals over a corpus, straight from the brute-force matcher.
pub fn brute_force_totals(
    corpus: &[(String, Vec<CategoryCode>)],
    patterns: &[PurposePattern],
) -> std::collections::BTreeMap<String, usize> {
    let mut totals: std::collections::BTreeMap<String, usize> =
        patterns.iter().map(|p| (p.purpose.clone(), 0)).collect();
    for (_, codes) in corpus {
        for (purpose, ..) in brute_force(codes, patterns) {
            *totals.get_mut(&purpose).unwrap() += 1;
        }
    }
    totals
}

// ---- encoding pipeline ----

pub struct RefCatalog(Value);

impl RefCatalog {
    pub fn seed() -> Self {
        Self(serde_json::from_str(SEED_CATALOG_JSON).unwrap())
    }

    pub fn lookup(&self, name: &str) -> Option<String> {
        if let Some(code) = self.0["functions"].get(name) {
            return code.as_str().map(str::to_string);
        }
        let tail = name.rsplit('.').next().unwrap();
        self.0["fallback_names"]
            .get(tail)
            .and_then(|c| c.as_str())
            .map(str::to_string)
    }
}

/// H1-H3 by hand: (code, cell) per categorized call, and the miss count.
pub fn reference_units(s: &SynthNotebook, cat: &RefCatalog) -> (Vec<(String, usize)>, usize) {
    let defined: Vec<usize> = s
        .cells
        .iter()
        .filter_map(|c| match c {
            SynthCell::Code(stmts) => Some(stmts.iter().filter_map(|st| match st {
                Stmt::DefBlock(n) => Some(*n),
                _ => None,
            })),
            _ => None,
        })
        .flatten()
        .collect();
    let mut units = Vec::new();
    let mut misses = 0;
    for (cell, shape) in s.cells.iter().enumerate() {
        let SynthCell::Code(stmts) = shape else {
            continue;
        };
        let mut names: Vec<String> = Vec::new();
        for st in stmts {
            match st {
                Stmt::Import { .. } | Stmt::FromImport { .. } => {
                    units.extend(
                        names
                            .drain(..)
                            .filter_map(|n| tally(cat, &n, &mut misses))
                            .map(|c| (c, cell)),
                    );
                    units.push(("L1".to_string(), cell));
                }
                Stmt::Call(q) => names.push(q.clone()),
                Stmt::Nested { inner, outer } | Stmt::Multiline { inner, outer } => {
                    names.push(inner.clone());
                    names.push(outer.clone());
                }
                Stmt::Unknown(n) => names.push(n.clone()),
                Stmt::Masked(_) | Stmt::DefBlock(_) => {}
                Stmt::Method(m) => names.push(format!("df.{m}")),
                Stmt::Chain(a, b) => {
                    names.push(format!("df.{a}"));
                    names.push(b.clone());
                }
                Stmt::UseDef(n) if defined.contains(n) => {
                    names.extend(s.defs[*n].body.iter().cloned())
                }
                Stmt::UseDef(n) => names.push(format!("udf_{n}")),
            }
        }
        units.extend(
            names
                .drain(..)
                .filter_map(|n| tally(cat, &n, &mut misses))
                .map(|c| (c, cell)),
        );
    }
    (units, misses)
}

fn tally(cat: &RefCatalog, name: &str, misses: &mut usize) -> Option<String> {
    let hit = cat.lookup(name);
    if hit.is_none() {
        *misses += 1;
    }
    hit
}

/// H7 by hand: (code, multiplicity, first cell, last cell).
pub fn reference_collapse(units: &[(String, usize)]) -> Vec<(String, usize, usize, usize)> {
    let mut out: Vec<(String, usize, usize, usize)> = Vec::new();
    for (code, cell) in units {
        if let Some(last) = out.last_mut() {
            if &last.0 == code {
                last.1 += 1;
                last.3 = *cell;
                continue;
            }
        }
        out.push((code.clone(), 1, *cell, *cell));
    }
    out
}

/// H4/H5 by hand: (start, end, opener, closer).
pub fn reference_segments(codes: &[String]) -> Vec<(usize, usize, Option<usize>, Option<usize>)> {
    let is_opener = |c: &str| c.starts_with('L');
    let is_closer = |c: &str| c.starts_with('V') || c == "ML4";
    let mut out = Vec::new();
    let mut i = 0;
    while i < codes.len() {
        if is_opener(&codes[i]) {
            let start = i;
            let mut j = i + 1;
            while j < codes.len() && !is_closer(&codes[j]) {
                j += 1;
            }
            if j < codes.len() {
                out.push((start, j + 1, Some(start), Some(j)));
                i = j + 1;
            } else {
                out.push((start, codes.len(), Some(start), None));
                i = codes.len();
            }
        } else {
            let start = i;
            while i < codes.len() && !is_opener(&codes[i]) {
                i += 1;
            }
            out.push((start, i, None, None));
        }
    }
    out
}

/// Runs the pipeline on one synthetic notebook and compares every stage
/// with the hand-written reference.
pub fn check_pipeline_seed(seed: u64) -> Result<(), String> {
    let catalog = Catalog::seed();
    let reference = RefCatalog::seed();
    let s = synth_notebook(seed, &catalog, &SynthConfig::default());

    let (want_units, want_misses) = reference_units(&s, &reference);
    let enc = encode_notebook(&s.notebook, &catalog);
    let got_units: Vec<(String, usize)> = enc
        .units
        .iter()
        .map(|u| (u.code.to_string(), u.span.first_cell))
        .collect();
    if got_units != want_units {
        return Err(format!(
            "seed {seed}: raw encoding {got_units:?} != {want_units:?}"
        ));
    }
    if enc.unknown_calls.len() != want_misses {
        return Err(format!(
            "seed {seed}: {} unknown calls, want {want_misses}",
            enc.unknown_calls.len()
        ));
    }

    let collapsed = collapse_runs(&enc);
    let got: Vec<_> = collapsed
        .units
        .iter()
        .map(|u| {
            (
                u.code.to_string(),
                u.multiplicity,
                u.span.first_cell,
                u.span.last_cell,
            )
        })
        .collect();
    let want = reference_collapse(&want_units);
    if got != want {
        return Err(format!("seed {seed}: collapse {got:?} != {want:?}"));
    }

    let codes: Vec<String> = want.iter().map(|u| u.0.clone()).collect();
    let got_segments: Vec<_> = segment(&collapsed)
        .into_iter()
        .map(|s| (s.unit_range.start, s.unit_range.end, s.opener, s.closer))
        .collect();
    let want_segments = reference_segments(&codes);
    if got_segments != want_segments {
        return Err(format!(
            "seed {seed}: segments {got_segments:?} != {want_segments:?}"
        ));
    }

    // repeat reports only point at exact repeats and leave the encoding alone
    let before = collapsed.clone();
    for r in flag_repeats(&collapsed, 2, 2) {
        if r.count != r.occurrences.len() {
            return Err(format!("seed {seed}: repeat count mismatch"));
        }
        for occ in &r.occurrences {
            if collapsed.codes()[occ.clone()] != r.subsequence[..] {
                return Err(format!(
                    "seed {seed}: repeat occurrence {occ:?} is not the subsequence"
                ));
            }
        }
    }
    if collapsed != before {
        return Err(format!("seed {seed}: repeat review altered the encoding"));
    }
    Ok(())
}

// ---- overlay structure ----

const GROUP_TITLES: [&str; 7] = [
    "Load",
    "Pre-Processing",
    "Statistics",
    "Visualization",
    "Domain Specific Functions",
    "Machine Learning",
    "Code",
];

/// Flags from the rule table, over display cells `cells` (1-based, inclusive).
fn reference_flags(nb: &Notebook, codes_by_cell: &[Vec<String>], cells: &[usize]) -> [bool; 6] {
    let mut f = [false; 6];
    for &d in cells {
        let cell = &nb.cells[d - 1];
        for code in &codes_by_cell[d - 1] {
            let c = code.as_str();
            f[0] |= c == "L2" || c == "L3";
            f[1] |= c == "L1";
            f[2] |= c.starts_with('V') || c == "ST3";
            f[3] |= c == "PP4";
            f[4] |= matches!(c, "ML2" | "ML4" | "ML8" | "ST5");
        }
        match cell.kind {
            CellKind::Markdown => f[5] = true,
            CellKind::Code => {
                f[2] |= cell.outputs.iter().any(|o| o.kind == OutputKind::Image);
                f[3] |= cell.outputs.iter().any(|o| o.kind == OutputKind::Table);
            }
            CellKind::Raw => {}
        }
    }
    f
}

fn flag_array(v: &Value) -> [bool; 6] {
    ["data", "library", "graph", "table", "model", "notes"].map(|k| v[k].as_bool().unwrap_or(false))
}

/// Every structural invariant of an overlay, checked against the
/// notebook. Returns one line per violation.
pub fn structural_violations(
    nb: &Notebook,
    catalog: &Catalog,
    patterns: &[PurposePattern],
    build: impl Fn() -> OverlayDocument,
) -> Vec<String> {
    let mut bad = Vec::new();
    let overlay = build();
    let first = overlay.to_json();
    if build().to_json() != first {
        bad.push("overlay bytes differ between runs".into());
    }
    if OverlayDocument::from_json(first.as_bytes())
        .map(|d| d.to_json())
        .ok()
        .as_deref()
        != Some(&first[..])
    {
        bad.push("overlay does not survive a JSON round trip".into());
    }
    let doc: Value = serde_json::from_str(&first).unwrap();

    let enc = encode_notebook(nb, catalog);
    let mut codes_by_cell = vec![Vec::new(); nb.len()];
    for u in &enc.units {
        codes_by_cell[u.span.first_cell].push(u.code.to_string());
    }
    let collapsed = collapse_runs(&enc);
    if collapse_runs(&collapsed) != collapsed {
        bad.push("collapse_runs is not idempotent".into());
    }

    let purposes: BTreeSet<&str> = patterns.iter().map(|p| p.purpose.as_str()).collect();
    let mut next = 1;
    for (ci, ch) in doc["chapters"].as_array().unwrap().iter().enumerate() {
        if ch["number"].as_u64() != Some(ci as u64 + 1) {
            bad.push(format!("chapter {} is numbered {}", ci + 1, ch["number"]));
        }
        let mut cells = Vec::new();
        for r in ch["cell_ranges"].as_array().unwrap() {
            let (a, b) = (
                r[0].as_u64().unwrap() as usize,
                r[1].as_u64().unwrap() as usize,
            );
            if a != next || b < a {
                bad.push(format!(
                    "chapter {} range {a}-{b} does not continue at {next}",
                    ci + 1
                ));
            }
            cells.extend(a..=b);
            next = b + 1;
        }
        if ch["cell_count"].as_u64() != Some(cells.len() as u64) {
            bad.push(format!(
                "chapter {} count {} != {}",
                ci + 1,
                ch["cell_count"],
                cells.len()
            ));
        }
        let in_chapter: BTreeSet<usize> = cells.iter().copied().collect();
        let code_cells: Vec<usize> = cells
            .iter()
            .copied()
            .filter(|&d| d <= nb.len() && nb.cells[d - 1].is_code())
            .collect();

        let mut covered = Vec::new();
        let mut last_end = 0;
        for s in ch["sections"].as_array().unwrap() {
            let (a, b) = (
                s["cell_range"][0].as_u64().unwrap() as usize,
                s["cell_range"][1].as_u64().unwrap() as usize,
            );
            if !(in_chapter.contains(&a) && in_chapter.contains(&b)) || b < a {
                bad.push(format!("section {a}-{b} leaves chapter {}", ci + 1));
            }
            if a <= last_end {
                bad.push(format!(
                    "section {a}-{b} overlaps or precedes cell {last_end}"
                ));
            }
            last_end = b;
            covered.extend((a..=b).filter(|&d| d <= nb.len() && nb.cells[d - 1].is_code()));
            let title = s["title"].as_str().unwrap_or("");
            if !purposes.contains(title) && !GROUP_TITLES.contains(&title) {
                bad.push(format!(
                    "section title {title:?} is neither a purpose nor a group"
                ));
            }
            let span: Vec<usize> = (a..=b).filter(|d| *d <= nb.len()).collect();
            if flag_array(&s["flags"]) != reference_flags(nb, &codes_by_cell, &span) {
                bad.push(format!(
                    "section {a}-{b} flags disagree with the rule table"
                ));
            }
        }
        if covered != code_cells {
            bad.push(format!(
                "chapter {} sections cover {covered:?}, code cells are {code_cells:?}",
                ci + 1
            ));
        }

        if flag_array(&ch["flags"]) != reference_flags(nb, &codes_by_cell, &cells) {
            bad.push(format!(
                "chapter {} flags disagree with the rule table",
                ci + 1
            ));
        }
        let mut prev = [false; 6];
        for k in 1..=cells.len() {
            let now = reference_flags(nb, &codes_by_cell, &cells[..k]);
            if prev.iter().zip(&now).any(|(p, n)| *p && !*n) {
                bad.push(format!(
                    "chapter {} flags drop when adding cell {}",
                    ci + 1,
                    cells[k - 1]
                ));
            }
            prev = now;
        }
    }
    if next != nb.len() + 1 {
        bad.push(format!(
            "chapters stop at cell {}, notebook has {}",
            next - 1,
            nb.len()
        ));
    }
    bad
}

// ---- export ----

pub fn random_view(rng: &mut impl Rng, overlay: &OverlayDocument) -> ViewState {
    let mut v = ViewState::default();
    let p = rng.random_range(0.0..1.0);
    for ch in &overlay.chapters {
        if rng.random_bool(p) {
            v.expanded_chapters.insert(ch.number);
        }
        for s in 1..=ch.sections.len() {
            if rng.random_bool(p) {
                v.expanded_chapters.insert(ch.number);
                v.expanded_sections.insert((ch.number, s));
            }
        }
    }
    v
}

pub fn random_store(rng: &mut impl Rng, nb: &Notebook) -> AnnotationStore {
    let mut store = AnnotationStore::new(nb.id.clone());
    let candidates: Vec<usize> = nb
        .cells
        .iter()
        .filter(|c| c.char_len() > 0)
        .map(|c| c.display_number)
        .collect();
    for i in 0..rng.random_range(0..15) {
        let Some(&cell) = candidates.choose(rng) else {
            break;
        };
        let len = nb.cells[cell - 1].char_len();
        let start = rng.random_range(0..len);
        let end = rng.random_range(start + 1..=len);
        let ann = Annotation {
            id: format!("r{i}"),
            cell_display: cell,
            anchor: Anchor {
                start_char: start,
                end_char: end,
            },
            color: *Color::ALL.choose(rng).unwrap(),
            comment: format!("check this ({i})"),
            author: "reviewer".into(),
            created_at: rng.random_range(1_600_000_000..1_700_000_000),
            orphaned: false,
        };
        store.add(nb, ann).unwrap();
    }
    store
}

/// Display numbers of the cells inside expanded sections.
pub fn expected_cells(overlay: &OverlayDocument, view: &ViewState) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for &(c, s) in &view.expanded_sections {
        let sec = &overlay.chapters[c - 1].sections[s - 1];
        out.extend(sec.cell_range.0..=sec.cell_range.1);
    }
    out
}

fn markers(text: &str, prefix: &str, suffix: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find(prefix) {
        rest = &rest[i + prefix.len()..];
        if let Some(j) = rest.find(suffix) {
            out.push(rest[..j].to_string());
            rest = &rest[j..];
        }
    }
    out
}

/// (cells, annotation ids) a rendered document carries.
pub fn document_contents(
    format: ExportFormat,
    bytes: &[u8],
) -> (BTreeSet<usize>, BTreeSet<String>) {
    let text = std::str::from_utf8(bytes).unwrap();
    match format {
        ExportFormat::Markdown => (
            markers(text, "<!-- cell ", " -->")
                .iter()
                .map(|s| s.parse().unwrap())
                .collect(),
            markers(text, "<!-- annotation ", " -->")
                .into_iter()
                .collect(),
        ),
        ExportFormat::Html => (
            markers(text, "data-cell=\"", "\"")
                .iter()
                .map(|s| s.parse().unwrap())
                .collect(),
            markers(text, "data-annotation=\"", "\"")
                .into_iter()
                .collect(),
        ),
        ExportFormat::SnapshotJson => {
            let v: Value = serde_json::from_str(text).unwrap();
            let mut cells = BTreeSet::new();
            for ch in v["overlay_subset"]["chapters"].as_array().unwrap() {
                for s in ch["sections"].as_array().unwrap() {
                    for c in s["cells"].as_array().unwrap() {
                        cells.insert(c["display"].as_u64().unwrap() as usize);
                    }
                }
            }
            let ids = v["annotations"]
                .as_array()
                .unwrap()
                .iter()
                .map(|a| a["id"].as_str().unwrap().to_string());
            (cells, ids.collect())
        }
    }
}

/// Inclusion laws for all three formats plus snapshot byte stability.
pub fn export_violations(
    overlay: &OverlayDocument,
    nb: &Notebook,
    store: &AnnotationStore,
    view: &ViewState,
) -> Vec<String> {
    let mut bad = Vec::new();
    let want_cells = expected_cells(overlay, view);
    let want_ids: BTreeSet<String> = store
        .annotations
        .iter()
        .filter(|a| want_cells.contains(&a.cell_display))
        .map(|a| a.id.clone())
        .collect();
    for format in [
        ExportFormat::Markdown,
        ExportFormat::Html,
        ExportFormat::SnapshotJson,
    ] {
        let doc = match export(overlay, nb, store, view, format, &opts()) {
            Ok(d) => d,
            Err(e) => {
                bad.push(format!("{format:?}: {e}"));
                continue;
            }
        };
        let again = export(overlay, nb, store, view, format, &opts()).unwrap();
        if again != doc {
            bad.push(format!("{format:?}: export is not deterministic"));
        }
        let (cells, ids) = document_contents(format, &doc.bytes);
        if cells != want_cells {
            bad.push(format!(
                "{format:?}: cells {cells:?}, expected {want_cells:?}"
            ));
        }
        if ids != want_ids {
            bad.push(format!(
                "{format:?}: annotations {ids:?}, expected {want_ids:?}"
            ));
        }
        if format == ExportFormat::SnapshotJson {
            let snap = match import_snapshot(&doc.bytes, "0.1.0") {
                Ok(s) => s,
                Err(e) => {
                    bad.push(format!("snapshot does not import: {e}"));
                    continue;
                }
            };
            if &snap.view_state != view {
                bad.push("snapshot view state differs".into());
            }
            let restored = snapshot_store(&snap);
            let round = export(overlay, nb, &restored, &snap.view_state, format, &opts()).unwrap();
            if round.bytes != doc.bytes {
                bad.push("snapshot export -> import -> export is not byte-stable".into());
            }
        }
    }
    bad
}
