//! Inputs for the criterion benchmarks.

use std::path::PathBuf;

use nbpurpose_core::synth::{
    random_encoding, random_patterns, small_alphabet, synth_notebook, SynthConfig,
};
use nbpurpose_core::{parse_notebook, Catalog, EncodedNotebook, Notebook, PurposePattern};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> Notebook {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../fixtures/{name}.ipynb"));
    parse_notebook(&std::fs::read(path).expect("fixture exists")).expect("fixture parses")
}

/// A synthetic notebook with roughly `cells` cells.
pub fn synthetic(seed: u64, cells: usize, catalog: &Catalog) -> Notebook {
    let cfg = SynthConfig {
        max_cells: cells,
        ..SynthConfig::default()
    };
    synth_notebook(seed, catalog, &cfg).notebook
}

/// A random code sequence of exactly `len` units and a pattern list over
/// the same alphabet.
pub fn matcher_input(seed: u64, len: usize) -> (EncodedNotebook, Vec<PurposePattern>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = small_alphabet();
    let mut enc = EncodedNotebook::default();
    while enc.units.len() < len {
        enc.units
            .extend(random_encoding(&mut rng, 64, &alphabet).units);
    }
    enc.units.truncate(len);
    (enc, random_patterns(&mut rng, 10, &alphabet))
}
