//! Synthetic notebooks checked against a literal, step-by-step reference of
//! the encoding heuristics.

mod support;

use nbpurpose_core::encoding::encode_notebook;
use nbpurpose_core::extract::{collect_definitions, extract_calls, resolve_aliases};
use nbpurpose_core::synth::{synth_notebook, SynthCell, SynthConfig};
use nbpurpose_core::Catalog;
use support::check_pipeline_seed;

#[test]
fn twenty_synthetic_notebooks_match_reference() {
    for seed in 0..20 {
        check_pipeline_seed(seed).unwrap();
    }
}

#[test]
fn generator_exercises_every_statement_shape() {
    let catalog = Catalog::seed();
    let mut seen = std::collections::HashSet::new();
    let mut spliced = 0;
    for seed in 0..20 {
        let s = synth_notebook(seed, &catalog, &SynthConfig::default());
        for shape in &s.cells {
            if let SynthCell::Code(stmts) = shape {
                for st in stmts {
                    seen.insert(std::mem::discriminant(st));
                }
            }
        }
        spliced += encode_notebook(&s.notebook, &catalog)
            .units
            .iter()
            .filter(|u| u.source == nbpurpose_core::UnitSource::SplicedDefinition)
            .count();
    }
    assert_eq!(seen.len(), 11);
    assert!(spliced > 0);
}

#[test]
fn many_more_synthetic_notebooks_match_reference() {
    for seed in 1000..1200 {
        check_pipeline_seed(seed).unwrap();
    }
}

#[test]
fn call_events_are_ordered_and_point_at_real_lines() {
    let catalog = Catalog::seed();
    for seed in 0..50 {
        let s = synth_notebook(seed, &catalog, &SynthConfig::default());
        let aliases = resolve_aliases(&s.notebook);
        let defs = collect_definitions(&s.notebook, &aliases);
        for cell in s.notebook.code_cells() {
            let events = extract_calls(cell, &aliases, &defs);
            assert!(events.windows(2).all(|w| w[0].seq < w[1].seq));
            let lines = cell.source.split('\n').count();
            assert!(events
                .iter()
                .all(|e| e.cell_index == cell.index && e.line_index < lines));
            assert_eq!(extract_calls(cell, &aliases, &defs), events);
        }
    }
}
