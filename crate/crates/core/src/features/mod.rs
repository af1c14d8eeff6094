//! The shallow feature pipeline: patch extraction, k-means codebooks,
//! hard/soft patch encoding, and spatial-pyramid image descriptors.

mod io;
mod kmeans;
mod patches;
mod spm;

pub use io::{
    decode_codebook, decode_features, encode_codebook, encode_features, read_codebook,
    read_features, write_codebook, write_features, FeatureFile, XCBK_MAGIC, XFTR_MAGIC,
};
pub use kmeans::{train_codebook, Codebook};
pub use patches::{cut_patch, extract_patches, image_to_grid, standardize, Patch, PatchSet};
pub use spm::{
    image_crop_features, image_feature, resize_bilinear, spm_pool, FeatureParams,
    PatchAssignment, SPM_CELLS, SPM_LEVELS,
};

use crate::error::Result;

/// Maps a standardized patch to a non-negative assignment vector.
///
/// The hard implementation is a codebook one-hot; the soft implementation is
/// the autoencoder's softmax bottleneck.
pub trait PatchEncoder: Sync {
    fn dim(&self) -> usize;
    fn encode(&self, patch: &[f64]) -> Result<Vec<f64>>;
}
