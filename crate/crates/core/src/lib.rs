//! Static analysis of computational notebooks: call categorization,
//! purpose-pattern matching and a chapter/section overlay.

pub mod annotations;
pub mod catalog;
pub mod encoding;
pub mod export;
pub mod extract;
pub mod notebook;
pub mod overlay;
pub mod patterns;
pub mod synth;

pub use annotations::{Anchor, Annotation, AnnotationError, AnnotationStore, Color};
pub use catalog::{
    load_catalog, merge_extension, Catalog, CatalogError, CategoryCode, CategoryGroup,
};
pub use encoding::{
    collapse_runs, encode_notebook, flag_repeats, segment, EncodedNotebook, EncodedUnit,
    RepeatReport, Segment, Span, UnitSource,
};
pub use export::{
    export, import_snapshot, ExportDocument, ExportError, ExportFormat, ExportOptions, Snapshot,
    ViewState,
};
pub use extract::{
    collect_definitions, extract_calls, resolve_aliases, AliasMap, CallEvent, DefinitionTable,
};
pub use notebook::{
    classify_outputs, parse_notebook, Cell, CellKind, Notebook, NotebookError, OutputKind,
    OutputRecord,
};
pub use overlay::{
    build_chapters, build_overlay, build_sections, compose_description, compute_flags,
    emit_overlay, Chapter, FlagSet, OverlayDocument, OverlayError, Section,
};
pub use patterns::{
    count_frequencies, load_pattern_catalog, match_patterns, FrequencyTable, Icon, PatternError,
    PatternMatch, PurposePattern,
};

pub const GENERATOR_VERSION: &str = env!("CARGO_PKG_VERSION");
