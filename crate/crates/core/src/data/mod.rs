//! Synthetic phantoms, manifests, image files and checkpoints.

pub mod checkpoint;
mod dataset;
pub mod image;
mod manifest;
pub mod pgm;
mod phantom;

pub use dataset::{high_res_view, load_sample, load_split, low_res_view, Batch, LoadedSample};
pub use manifest::{assign_splits, split_counts, Domain, LesionClass, Manifest, Sample, Split, MANIFEST_FILE};
pub use phantom::{generate, render, synthesize, GenConfig, Lesion};
