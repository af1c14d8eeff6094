//! Dataset generation, serialization and manifests.

mod config;
mod formats;
mod generate;
mod manifest;
mod sampler;

pub use config::{
    BeamstopWeights, GenerationConfig, ModuleProbabilities, ParamRange, RecipeDistribution,
    RecipeRanges,
};
pub use formats::{read_image, write_image, SyntheticImage, XSIM_MAGIC, XSIM_VERSION};
pub use generate::{
    fnv1a64, generate_dataset, GeneratedDataset, CONFIG_FILE, IMAGES_DIR, MANIFEST_FILE, RUNS_FILE,
};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use sampler::{derive_run_templates, sample_recipe, sample_scene, RunTemplate, SampledScene};
