//! Hand-written fixture notebooks: frozen overlays, side-panel goldens,
//! structural invariants and export inclusion laws.

mod support;

use std::fs;

use nbpurpose_core::export::{export, ExportFormat};
use nbpurpose_core::overlay::build_overlay;
use nbpurpose_core::patterns::seed_patterns;
use nbpurpose_core::synth::{synth_notebook, SynthConfig};
use nbpurpose_core::{Catalog, OverlayDocument, ViewState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use support::*;

fn overlay_for(name: &str) -> OverlayDocument {
    build_overlay(
        &load_fixture(name),
        &Catalog::seed(),
        &seed_patterns(),
        "0.1.0",
    )
    .unwrap()
}

#[test]
fn overlays_match_frozen_goldens() {
    for name in FIXTURES {
        let golden =
            fs::read_to_string(fixtures_dir().join(format!("golden/{name}.overlay.json"))).unwrap();
        assert_eq!(overlay_for(name).to_json(), golden, "{name}");
    }
}

#[test]
fn side_panels_match_hand_built_goldens() {
    for name in FIXTURES {
        let raw = fs::read(fixtures_dir().join(format!("golden/{name}.panel.json"))).unwrap();
        let panel: Value = serde_json::from_slice(&raw).unwrap();
        let overlay = overlay_for(name);
        let panel = panel.as_array().unwrap();
        assert_eq!(panel.len(), overlay.chapters.len(), "{name}");
        for (want, got) in panel.iter().zip(&overlay.chapters) {
            assert_eq!(want["title"], got.title.as_str(), "{name}");
            let ranges: Vec<(usize, usize)> =
                serde_json::from_value(want["ranges"].clone()).unwrap();
            assert_eq!(ranges, got.cell_ranges, "{name} {}", got.title);
            assert_eq!(want["count"], got.cell_count, "{name} {}", got.title);
            let sections: Vec<(String, usize, usize)> =
                serde_json::from_value(want["sections"].clone()).unwrap();
            let got_sections: Vec<(String, usize, usize)> = got
                .sections
                .iter()
                .map(|s| (s.title.clone(), s.cell_range.0, s.cell_range.1))
                .collect();
            assert_eq!(sections, got_sections, "{name} {}", got.title);
        }
    }
}

#[test]
fn goldens_conform_to_the_schema() {
    let schema: Value =
        serde_json::from_slice(&fs::read(fixtures_dir().join("../overlay.schema.json")).unwrap())
            .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for name in FIXTURES {
        let doc: Value = serde_json::from_str(&overlay_for(name).to_json()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
    }
    let broken = serde_json::json!({"notebook_id": "x", "generator_version": "0.1.0", "chapters": [{}], "encoding_summary": []});
    assert!(!validator.is_valid(&broken));
}

#[test]
fn fixtures_satisfy_structural_invariants() {
    let catalog = Catalog::seed();
    let patterns = seed_patterns();
    for name in FIXTURES {
        let nb = load_fixture(name);
        let bad = structural_violations(&nb, &catalog, &patterns, || {
            build_overlay(&nb, &catalog, &patterns, "0.1.0").unwrap()
        });
        assert!(bad.is_empty(), "{name}: {bad:#?}");
    }
}

#[test]
fn synthetic_notebooks_satisfy_structural_invariants() {
    let catalog = Catalog::seed();
    let patterns = seed_patterns();
    for seed in 0..60 {
        let nb = synth_notebook(seed, &catalog, &SynthConfig::default()).notebook;
        let bad = structural_violations(&nb, &catalog, &patterns, || {
            build_overlay(&nb, &catalog, &patterns, "0.1.0").unwrap()
        });
        assert!(bad.is_empty(), "seed {seed}: {bad:#?}");
    }
}

#[test]
fn empty_pattern_catalog_still_covers_every_code_cell() {
    let catalog = Catalog::seed();
    for name in FIXTURES {
        let nb = load_fixture(name);
        let bad = structural_violations(&nb, &catalog, &[], || {
            build_overlay(&nb, &catalog, &[], "0.1.0").unwrap()
        });
        assert!(bad.is_empty(), "{name}: {bad:#?}");
    }
}

#[test]
fn random_view_states_obey_inclusion_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for round in 0..50 {
        let name = FIXTURES[round % FIXTURES.len()];
        let nb = load_fixture(name);
        let overlay = overlay_for(name);
        let view = random_view(&mut rng, &overlay);
        let store = random_store(&mut rng, &nb);
        let bad = export_violations(&overlay, &nb, &store, &view);
        assert!(bad.is_empty(), "{name} round {round}: {bad:#?}");
    }
}

#[test]
fn expanding_one_section_exports_exactly_its_cells() {
    let nb = load_fixture("house_prices");
    let overlay = overlay_for("house_prices");
    let view = ViewState::parse_spec("5.1", &overlay).unwrap();
    let doc = export(
        &overlay,
        &nb,
        &Default::default(),
        &view,
        ExportFormat::Markdown,
        &opts(),
    )
    .unwrap();
    let (cells, _) = document_contents(ExportFormat::Markdown, &doc.bytes);
    assert_eq!(cells, (18..=20).collect());
    let text = String::from_utf8(doc.bytes).unwrap();
    assert!(text.contains("### 5.1 Generic modeling (cells 18-20)"));
    assert!(text.contains("### 5.2 Pre-Processing (cell 21) [collapsed]"));
}

#[test]
fn markdown_images_become_attachments() {
    let nb = load_fixture("house_prices");
    let overlay = overlay_for("house_prices");
    let view = ViewState::parse_spec("3", &overlay).unwrap();
    let doc = export(
        &overlay,
        &nb,
        &Default::default(),
        &view,
        ExportFormat::Markdown,
        &opts(),
    )
    .unwrap();
    let names: Vec<&str> = doc.attachments.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "cell-8-output-1.png",
            "cell-9-output-1.png",
            "cell-10-output-1.png"
        ]
    );
    assert!(doc
        .attachments
        .iter()
        .all(|(_, b)| b.starts_with(b"\x89PNG")));
    let html = export(
        &overlay,
        &nb,
        &Default::default(),
        &view,
        ExportFormat::Html,
        &opts(),
    )
    .unwrap();
    assert!(html.attachments.is_empty());
    assert_eq!(
        String::from_utf8(html.bytes)
            .unwrap()
            .matches("src=\"data:image/png;base64,")
            .count(),
        3
    );
}
