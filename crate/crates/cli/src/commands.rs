use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use nbpurpose_core::export::{export as export_document, ExportOptions};
use nbpurpose_core::overlay::{analyze_chapters, build_overlay};
use nbpurpose_core::patterns::seed_patterns;
use nbpurpose_core::{
    collapse_runs, count_frequencies, encode_notebook, flag_repeats, load_catalog,
    load_pattern_catalog, merge_extension, parse_notebook, AnnotationStore, Catalog,
    EncodedNotebook, ExportFormat, Notebook, OverlayDocument, PurposePattern, ViewState,
    GENERATOR_VERSION,
};

use crate::{AnalyzeArgs, CatalogArgs, CorpusArgs, ExportArgs, SourceArgs};

/// Any error that ends the run with exit code 2.
pub type Fatal = anyhow::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Partial,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Clean => 0,
            Outcome::Partial => 1,
        }
    }
}

pub fn load_catalogs(args: &CatalogArgs) -> Result<(Catalog, Vec<PurposePattern>), Fatal> {
    let mut catalog = Catalog::seed();
    if let Some(path) = &args.catalog {
        let raw =
            fs::read(path).with_context(|| format!("cannot read catalog {}", path.display()))?;
        let user =
            load_catalog(&raw).with_context(|| format!("invalid catalog {}", path.display()))?;
        catalog = merge_extension(&catalog, &user);
    }
    let patterns = match &args.patterns {
        Some(path) => {
            let raw = fs::read(path)
                .with_context(|| format!("cannot read patterns {}", path.display()))?;
            load_pattern_catalog(&raw)
                .with_context(|| format!("invalid patterns {}", path.display()))?
        }
        None => seed_patterns(),
    };
    Ok((catalog, patterns))
}

pub fn notebook_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || "notebook".to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

/// `<dir>/<name><suffix>` for the notebook at `path`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_file_name(format!("{}{suffix}", notebook_name(path)))
}

pub fn read_notebook(path: &Path) -> Result<Notebook, Fatal> {
    let raw = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let nb = parse_notebook(&raw).with_context(|| format!("cannot parse {}", path.display()))?;
    Ok(nb.with_id(notebook_name(path)))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Fatal> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Outcome, Fatal> {
    let (catalog, patterns) = load_catalogs(&args.catalogs)?;
    let nb = read_notebook(&args.notebook)?;
    let overlay = build_overlay(&nb, &catalog, &patterns, GENERATOR_VERSION)?;

    let default_name = format!("{}.overlay.json", notebook_name(&args.notebook));
    let out = match &args.out {
        Some(p) if p.is_dir() => p.join(default_name),
        Some(p) => p.clone(),
        None => sidecar(&args.notebook, ".overlay.json"),
    };
    write(&out, overlay.to_json().as_bytes())?;

    let whole = encode_notebook(&nb, &catalog);
    if !whole.unknown_calls.is_empty() {
        eprintln!(
            "warning: {} calls not in the catalog",
            whole.unknown_calls.len()
        );
    }
    for r in flag_repeats(
        &collapse_runs(&whole),
        args.min_repeat_len,
        args.min_repeat_count,
    ) {
        let codes: Vec<String> = r.subsequence.iter().map(ToString::to_string).collect();
        eprintln!("repeat: [{}] x{}", codes.join(", "), r.count);
    }
    if args.dump_encoding {
        let chapters = nbpurpose_core::build_chapters(&nb);
        let mut units = EncodedNotebook::default();
        for a in analyze_chapters(&nb, &chapters, &catalog, &patterns) {
            units.units.extend(a.collapsed.units);
        }
        print!("{}", units.to_json_lines());
    }
    Ok(Outcome::Clean)
}

pub fn corpus(args: &CorpusArgs) -> Result<Outcome, Fatal> {
    let (catalog, patterns) = load_catalogs(&args.catalogs)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.dir)
        .with_context(|| format!("cannot read directory {}", args.dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "ipynb"))
        .collect();
    paths.sort();

    let mut outcome = Outcome::Clean;
    let mut encoded = Vec::new();
    for path in &paths {
        match read_notebook(path) {
            Ok(nb) => encoded.push((
                notebook_name(path),
                collapse_runs(&encode_notebook(&nb, &catalog)),
            )),
            Err(e) => {
                eprintln!("warning: skipping {}: {e:#}", path.display());
                outcome = Outcome::Partial;
            }
        }
    }
    let table = count_frequencies(&encoded, &patterns);
    write(&args.out, table.to_csv().as_bytes())?;
    write(
        &args.out.with_extension("json"),
        (table.to_json() + "\n").as_bytes(),
    )?;
    Ok(outcome)
}

pub struct Loaded {
    pub notebook: Notebook,
    pub overlay: OverlayDocument,
    /// The overlay as served: file bytes when read from disk.
    pub overlay_bytes: Vec<u8>,
    pub store: AnnotationStore,
    pub annotations_path: PathBuf,
}

pub fn load_source(args: &SourceArgs) -> Result<Loaded, Fatal> {
    let nb = read_notebook(&args.notebook)?;
    let overlay_path = args
        .overlay
        .clone()
        .unwrap_or_else(|| sidecar(&args.notebook, ".overlay.json"));
    let (overlay, overlay_bytes) = if args.overlay.is_some() || overlay_path.exists() {
        let raw = fs::read(&overlay_path)
            .with_context(|| format!("cannot read {}", overlay_path.display()))?;
        let overlay = OverlayDocument::from_json(&raw)
            .with_context(|| format!("cannot parse overlay {}", overlay_path.display()))?;
        (overlay, raw)
    } else {
        let (catalog, patterns) = load_catalogs(&args.catalogs)?;
        let overlay = build_overlay(&nb, &catalog, &patterns, GENERATOR_VERSION)?;
        let bytes = overlay.to_json().into_bytes();
        (overlay, bytes)
    };
    let last = overlay
        .chapters
        .iter()
        .flat_map(|c| c.cell_ranges.iter().map(|r| r.1))
        .max()
        .unwrap_or(0);
    if last != nb.len() {
        return Err(anyhow!(
            "overlay covers {last} cells but {} has {}",
            args.notebook.display(),
            nb.len()
        ));
    }

    let annotations_path = args
        .annotations
        .clone()
        .unwrap_or_else(|| sidecar(&args.notebook, ".annotations.json"));
    let store = if annotations_path.exists() {
        let raw = fs::read(&annotations_path)
            .with_context(|| format!("cannot read {}", annotations_path.display()))?;
        let store = AnnotationStore::from_json(&raw, nb.id.clone(), Some(&nb), false)
            .with_context(|| format!("cannot load {}", annotations_path.display()))?;
        for a in store.orphans() {
            eprintln!(
                "warning: annotation {} no longer fits cell {}",
                a.id, a.cell_display
            );
        }
        store
    } else {
        AnnotationStore::new(nb.id.clone())
    };
    Ok(Loaded {
        notebook: nb,
        overlay,
        overlay_bytes,
        store,
        annotations_path,
    })
}

pub fn export(args: &ExportArgs) -> Result<Outcome, Fatal> {
    let format: ExportFormat = args.format.parse()?;
    let src = load_source(&args.source)?;
    let view = ViewState::parse_spec(&args.expand, &src.overlay)?;
    let opts = ExportOptions {
        generator_version: GENERATOR_VERSION.to_string(),
        exported_at: None,
    };
    let doc = export_document(
        &src.overlay,
        &src.notebook,
        &src.store,
        &view,
        format,
        &opts,
    )?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| sidecar(&args.source.notebook, &format!(".{}", format.extension())));
    write(&out, &doc.bytes)?;
    let dir = out.parent().unwrap_or(Path::new("."));
    for (name, bytes) in &doc.attachments {
        write(&dir.join(name), bytes)?;
    }
    Ok(Outcome::Clean)
}
