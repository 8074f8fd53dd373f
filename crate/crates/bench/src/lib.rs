//! Shared inputs for the benchmarks.

use ahlm_core::dataio::{generate_corpus, GenSpec, Video};
use ahlm_core::dfc::{DfcConfig, DfcModel};
use ahlm_core::efc::{EfcConfig, EfcModel};

/// Test videos of the default corpus with freshly initialized models.
pub struct Fixture {
    pub videos: Vec<Video>,
    pub dfc: DfcModel,
    pub efc: EfcModel,
}

pub fn fixture() -> Fixture {
    let corpus = generate_corpus(&GenSpec::default()).expect("default spec is valid");
    Fixture {
        videos: corpus.test().to_vec(),
        dfc: DfcModel::new(DfcConfig::default(), 0).expect("default config is valid"),
        efc: EfcModel::new(EfcConfig::default(), 0).expect("default config is valid"),
    }
}
