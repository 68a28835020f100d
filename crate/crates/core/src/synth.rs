//! Seeded generators for synthetic notebooks, code sequences and pattern
//! catalogs. Generated notebooks keep their statement structure so tests can
//! predict the encoding without running the extractor.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Catalog, CategoryCode};
use crate::encoding::{EncodedNotebook, EncodedUnit, Span, UnitSource};
use crate::notebook::{Cell, CellKind, Notebook};
use crate::patterns::{Icon, PurposePattern};

/// Module heads the generator imports, with the alias used in source.
pub const MODULE_ALIASES: &[(&str, &str)] = &[
    ("pandas", "pd"),
    ("numpy", "np"),
    ("seaborn", "sns"),
    ("matplotlib", "mpl"),
    ("sklearn", "sk"),
    ("scipy", "sp"),
    ("statsmodels", "sm"),
    ("os", "os"),
    ("math", "math"),
];

/// One generated statement. Function names are canonical catalog keys;
/// rendering applies the notebook's aliases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    /// `import head as alias`
    Import {
        module: String,
        alias: String,
    },
    /// `from module import name as alias`
    FromImport {
        qualified: String,
        alias: String,
    },
    Call(String),
    /// `outer(inner(...))` on one line.
    Nested {
        inner: String,
        outer: String,
    },
    /// `outer(` / `inner(...),` / `...)` over three lines.
    Multiline {
        inner: String,
        outer: String,
    },
    /// A call to a name missing from the catalog.
    Unknown(String),
    /// Call text that only appears inside a string and a comment.
    Masked(String),
    /// `df.method()` where `method` is a fallback name.
    Method(String),
    /// `df.first().second()` with fallback names.
    Chain(String, String),
    /// Call to a locally defined function `udf_<n>`.
    UseDef(usize),
    /// Top-level definition of `udf_<n>`.
    DefBlock(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthCell {
    Header(String),
    Prose,
    Raw,
    Code(Vec<Stmt>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthDef {
    pub name: String,
    /// Canonical names called by the body, in order.
    pub body: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthNotebook {
    pub notebook: Notebook,
    /// Parallel to `notebook.cells`.
    pub cells: Vec<SynthCell>,
    pub defs: Vec<SynthDef>,
}

impl SynthNotebook {
    /// nbformat-4 JSON for the generated cells, without outputs.
    pub fn to_ipynb(&self) -> String {
        let cells: Vec<serde_json::Value> = self
            .notebook
            .cells
            .iter()
            .map(|c| {
                let kind = match c.kind {
                    CellKind::Code => "code",
                    CellKind::Markdown => "markdown",
                    CellKind::Raw => "raw",
                };
                let mut cell =
                    serde_json::json!({"cell_type": kind, "metadata": {}, "source": c.source});
                if c.kind == CellKind::Code {
                    cell["outputs"] = serde_json::json!([]);
                    cell["execution_count"] = serde_json::Value::Null;
                }
                cell
            })
            .collect();
        let doc =
            serde_json::json!({"nbformat": 4, "nbformat_minor": 5, "metadata": {}, "cells": cells});
        serde_json::to_string_pretty(&doc).expect("notebook serializes")
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub max_cells: usize,
    pub max_stmts_per_cell: usize,
    pub max_defs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            max_cells: 30,
            max_stmts_per_cell: 6,
            max_defs: 3,
        }
    }
}

struct Vocabulary {
    /// Catalog functions whose head is in `MODULE_ALIASES`.
    qualified: Vec<String>,
    methods: Vec<String>,
}

impl Vocabulary {
    fn new(catalog: &Catalog) -> Self {
        let qualified = catalog
            .functions
            .keys()
            .filter(|k| {
                let head = k.split('.').next().unwrap_or("");
                k.contains('.') && MODULE_ALIASES.iter().any(|(m, _)| *m == head)
            })
            .cloned()
            .collect();
        let methods = catalog
            .fallback_names
            .keys()
            .filter(|k| k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
            .cloned()
            .collect();
        Self { qualified, methods }
    }
}

fn alias_of(head: &str) -> &'static str {
    MODULE_ALIASES
        .iter()
        .find(|(m, _)| *m == head)
        .map(|(_, a)| *a)
        .expect("generator only uses known heads")
}

/// How a canonical name is spelled in the generated source.
struct Spelling {
    from_imports: BTreeMap<String, String>,
}

impl Spelling {
    fn render(&self, qualified: &str) -> String {
        if let Some(alias) = self.from_imports.get(qualified) {
            return alias.clone();
        }
        match qualified.split_once('.') {
            Some((head, rest)) => format!("{}.{rest}", alias_of(head)),
            None => qualified.to_string(),
        }
    }
}

const ARGS: &[&str] = &["data", "1", "'a'", "x, y", "n=3", "", "[1, 2]", "axis=0"];

fn args(rng: &mut ChaCha8Rng) -> &'static str {
    ARGS.choose(rng).copied().unwrap_or("")
}

fn render_stmt(stmt: &Stmt, sp: &Spelling, rng: &mut ChaCha8Rng, defs: &[SynthDef]) -> String {
    match stmt {
        Stmt::Import { module, alias } if module == alias => format!("import {module}"),
        Stmt::Import { module, alias } => format!("import {module} as {alias}"),
        Stmt::FromImport { qualified, alias } => {
            let (module, name) = qualified.rsplit_once('.').expect("qualified name");
            format!("from {module} import {name} as {alias}")
        }
        Stmt::Call(f) => format!("v = {}({})", sp.render(f), args(rng)),
        Stmt::Nested { inner, outer } => {
            format!("{}({}({}))", sp.render(outer), sp.render(inner), args(rng))
        }
        Stmt::Multiline { inner, outer } => format!(
            "w = {}(\n    {}({}),\n    {})",
            sp.render(outer),
            sp.render(inner),
            args(rng),
            args(rng)
        ),
        Stmt::Unknown(name) => format!("{name}({})", args(rng)),
        Stmt::Masked(f) => format!("s = \"{0}()\"  # {0}(x)", sp.render(f)),
        Stmt::Method(m) => format!("df.{m}({})", args(rng)),
        Stmt::Chain(a, b) => format!("df = df.{a}().{b}({})", args(rng)),
        Stmt::UseDef(n) => format!("r = udf_{n}(data)"),
        Stmt::DefBlock(n) => {
            let mut s = format!("def udf_{n}(x):\n");
            for f in &defs[*n].body {
                s.push_str(&format!("    x = {}(x)\n", sp.render(f)));
            }
            s.push_str("    return x");
            s
        }
    }
}

/// Generates one notebook. The first code cell holds the imports every later
/// call relies on; definitions get a cell of their own.
pub fn synth_notebook(seed: u64, catalog: &Catalog, cfg: &SynthConfig) -> SynthNotebook {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::new(catalog);
    let pick_q = |rng: &mut ChaCha8Rng| {
        vocab
            .qualified
            .choose(rng)
            .cloned()
            .expect("catalog has module functions")
    };
    let pick_m = |rng: &mut ChaCha8Rng| {
        vocab
            .methods
            .choose(rng)
            .cloned()
            .expect("catalog has fallback names")
    };

    let n_defs = rng.random_range(0..=cfg.max_defs);
    let defs: Vec<SynthDef> = (0..n_defs)
        .map(|n| SynthDef {
            name: format!("udf_{n}"),
            body: (0..rng.random_range(1..=3))
                .map(|_| pick_q(&mut rng))
                .collect(),
        })
        .collect();

    let mut imports = vec![];
    for (module, alias) in MODULE_ALIASES {
        imports.push(Stmt::Import {
            module: module.to_string(),
            alias: alias.to_string(),
        });
    }
    let mut from_imports = BTreeMap::new();
    for k in 0..rng.random_range(0..=2) {
        let q = pick_q(&mut rng);
        if q.matches('.').count() >= 1 && !from_imports.contains_key(&q) {
            let alias = format!("fn_{k}");
            from_imports.insert(q.clone(), alias.clone());
            imports.push(Stmt::FromImport {
                qualified: q,
                alias,
            });
        }
    }
    let spelling = Spelling { from_imports };

    let n_cells = rng.random_range(1..=cfg.max_cells.max(1));
    let mut cells = Vec::with_capacity(n_cells);
    let mut pending_defs: Vec<usize> = (0..n_defs).collect();
    cells.push(SynthCell::Code(imports));
    while cells.len() < n_cells {
        let roll = rng.random_range(0..100);
        if roll < 12 {
            cells.push(SynthCell::Header(format!("Part {}", cells.len())));
        } else if roll < 18 {
            cells.push(SynthCell::Prose);
        } else if roll < 20 {
            cells.push(SynthCell::Raw);
        } else if !pending_defs.is_empty() && roll < 30 {
            cells.push(SynthCell::Code(vec![Stmt::DefBlock(
                pending_defs.remove(0),
            )]));
        } else {
            let n = rng.random_range(1..=cfg.max_stmts_per_cell.max(1));
            let stmts = (0..n)
                .map(|_| match rng.random_range(0..100) {
                    0..=34 => Stmt::Call(pick_q(&mut rng)),
                    35..=44 => Stmt::Nested {
                        inner: pick_q(&mut rng),
                        outer: pick_q(&mut rng),
                    },
                    45..=51 => Stmt::Multiline {
                        inner: pick_q(&mut rng),
                        outer: pick_q(&mut rng),
                    },
                    52..=59 => Stmt::Unknown(format!("zz_unknown_{}", rng.random_range(0..50))),
                    60..=65 => Stmt::Masked(pick_q(&mut rng)),
                    66..=79 => Stmt::Method(pick_m(&mut rng)),
                    80..=87 => Stmt::Chain(pick_m(&mut rng), pick_m(&mut rng)),
                    88..=93 if n_defs > 0 => Stmt::UseDef(rng.random_range(0..n_defs)),
                    _ => match spelling.from_imports.keys().next() {
                        Some(q) => Stmt::Call(q.clone()),
                        None => Stmt::Call(pick_q(&mut rng)),
                    },
                })
                .collect();
            cells.push(SynthCell::Code(stmts));
        }
    }

    let nb_cells = cells
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            SynthCell::Header(title) => Cell::new(
                i,
                CellKind::Markdown,
                format!("# {title}\nWe look at part {i}."),
            ),
            SynthCell::Prose => Cell::new(
                i,
                CellKind::Markdown,
                "Some notes about the data (see `df.head()`).",
            ),
            SynthCell::Raw => Cell::new(i, CellKind::Raw, "pd.read_csv('raw cells are ignored')"),
            SynthCell::Code(stmts) => {
                let src = stmts
                    .iter()
                    .map(|s| render_stmt(s, &spelling, &mut rng, &defs))
                    .collect::<Vec<_>>()
                    .join("\n");
                Cell::new(i, CellKind::Code, src)
            }
        })
        .collect();

    SynthNotebook {
        notebook: Notebook::from_cells(format!("synth-{seed}"), nb_cells),
        cells,
        defs,
    }
}

pub fn synth_corpus(
    seed: u64,
    n: usize,
    catalog: &Catalog,
    cfg: &SynthConfig,
) -> Vec<SynthNotebook> {
    (0..n as u64)
        .map(|i| synth_notebook(seed.wrapping_mul(1_000_003).wrapping_add(i), catalog, cfg))
        .collect()
}

/// A collapsed-looking encoding over a small code alphabet, so that random
/// pattern catalogs actually match.
pub fn random_encoding(
    rng: &mut impl Rng,
    max_len: usize,
    alphabet: &[CategoryCode],
) -> EncodedNotebook {
    let len = rng.random_range(0..=max_len);
    EncodedNotebook {
        units: (0..len)
            .map(|i| EncodedUnit {
                code: *alphabet.choose(rng).expect("non-empty alphabet"),
                span: Span::new(i, 0, 0),
                multiplicity: 1,
                source: UnitSource::Call,
            })
            .collect(),
        unknown_calls: Vec::new(),
    }
}

/// Random catalog in declaration order; priorities are not sorted.
pub fn random_patterns(
    rng: &mut impl Rng,
    max_patterns: usize,
    alphabet: &[CategoryCode],
) -> Vec<PurposePattern> {
    let icons = [Icon::Eye, Icon::Magic, Icon::Flask, Icon::Cogs];
    let n = rng.random_range(0..=max_patterns);
    (0..n)
        .map(|i| PurposePattern {
            purpose: format!("purpose-{i}"),
            icon: *icons.choose(rng).expect("icons"),
            sequences: (0..rng.random_range(1..=3))
                .map(|_| {
                    (0..rng.random_range(1..=4))
                        .map(|_| *alphabet.choose(rng).expect("non-empty alphabet"))
                        .collect()
                })
                .collect(),
            priority: rng.random_range(0..3),
            provenance: None,
        })
        .collect()
}

/// A small alphabet drawn from every group.
pub fn small_alphabet() -> Vec<CategoryCode> {
    [
        "L1", "L2", "PP1", "PP3", "ST1", "V1", "ML1", "ML2", "ML3", "ML4",
    ]
    .iter()
    .map(|s| s.parse().expect("valid code"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notebook::parse_notebook;

    #[test]
    fn ipynb_output_parses_back_to_the_same_cells() {
        let s = synth_notebook(3, &Catalog::seed(), &SynthConfig::default());
        let back = parse_notebook(s.to_ipynb().as_bytes())
            .unwrap()
            .with_id(s.notebook.id.clone());
        assert_eq!(back, s.notebook);
    }

    #[test]
    fn generation_is_seeded() {
        let cat = Catalog::seed();
        let a = synth_notebook(7, &cat, &SynthConfig::default());
        let b = synth_notebook(7, &cat, &SynthConfig::default());
        assert_eq!(a.notebook, b.notebook);
        assert_eq!(a.cells.len(), a.notebook.len());
        assert!(a.notebook.len() <= 30);
    }

    #[test]
    fn cells_match_structure() {
        let cat = Catalog::seed();
        for seed in 0..10 {
            let s = synth_notebook(seed, &cat, &SynthConfig::default());
            for (cell, shape) in s.notebook.cells.iter().zip(&s.cells) {
                let want = match shape {
                    SynthCell::Header(_) | SynthCell::Prose => CellKind::Markdown,
                    SynthCell::Raw => CellKind::Raw,
                    SynthCell::Code(_) => CellKind::Code,
                };
                assert_eq!(cell.kind, want);
            }
        }
        assert!(parse_notebook(b"{\"nbformat\": 4, \"cells\": []}").is_ok());
    }
}
