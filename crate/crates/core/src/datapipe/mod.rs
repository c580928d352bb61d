//! Paired training data: the multi-view synthetic pipeline, the reverse
//! "natural image" pipeline, and on-disk manifests.

pub mod bbox;
pub mod manifest;
pub mod natural;
pub mod pair;

pub use bbox::BBox;
pub use manifest::{build_dataset, load_batches, DatasetKind, DatasetManifest, EpochStream};
pub use natural::{build_natural_pair, NaturalSource, NovelViewSynthesizer};
pub use pair::{build_synthetic_pair, fitted_render, scene_view, DataConfig, Provenance, SceneInfo, TrainingPair};
