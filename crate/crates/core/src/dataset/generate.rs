//! Dataset generation: parallel image synthesis plus manifest assembly.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::GenerationConfig;
use super::formats::write_image;
use super::manifest::{write_manifest, ManifestEntry};
use super::sampler::{derive_run_templates, sample_scene, RunTemplate};
use crate::error::{Error, Result};
use crate::geometry::rasterize_mask;
use crate::rng::{mix64, substream, STREAM_NOISE};
use crate::simkit::corrupt_and_quantize;

/// FNV-1a over the serialized recipe; stable per implementation.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Everything `generate_dataset` wrote.
pub struct GeneratedDataset {
    pub entries: Vec<ManifestEntry>,
    pub templates: Vec<RunTemplate>,
}

/// File names inside a dataset root.
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const RUNS_FILE: &str = "runs.json";
pub const CONFIG_FILE: &str = "config.json";
pub const IMAGES_DIR: &str = "images";

/// Generates `cfg.image_count` images under `cfg.output_dir`.
///
/// Images are distributed round-robin over `run_count` runs, each generated
/// under its run template. Image `i` uses seed `mix64(master_seed, i)`;
/// generation is parallel across images and byte-identical across re-runs.
/// The manifest is written only after every image has been synthesized, so a
/// failed generation leaves no manifest behind.
pub fn generate_dataset(cfg: &GenerationConfig) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let root = cfg.output_dir.as_ref().ok_or(Error::Config {
        field: "output_dir",
        reason: "no output directory configured".into(),
    })?;
    let images_dir = root.join(IMAGES_DIR);
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let templates = derive_run_templates(cfg);
    let entries: Vec<ManifestEntry> = (0..cfg.image_count)
        .into_par_iter()
        .map(|index| generate_one(cfg, &templates, index, root))
        .collect::<Result<Vec<_>>>()?;

    write_manifest(&root.join(MANIFEST_FILE), &entries)?;
    let runs_path = root.join(RUNS_FILE);
    let runs_json = serde_json::to_string_pretty(&templates).expect("templates serialize");
    fs::write(&runs_path, runs_json).map_err(|e| Error::io(&runs_path, e))?;
    let cfg_path = root.join(CONFIG_FILE);
    let cfg_json = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(&cfg_path, cfg_json).map_err(|e| Error::io(&cfg_path, e))?;

    Ok(GeneratedDataset { entries, templates })
}

fn generate_one(
    cfg: &GenerationConfig,
    templates: &[RunTemplate],
    index: usize,
    root: &Path,
) -> Result<ManifestEntry> {
    let run_id = (index % cfg.run_count) as u32;
    let image_seed = mix64(cfg.master_seed, index as u64);
    let scene = sample_scene(cfg, &templates[run_id as usize], image_seed)?;

    let mask = rasterize_mask(&scene.recipe.detector, &scene.recipe.mask)?;
    let mut noise_rng = substream(image_seed, STREAM_NOISE);
    let image = corrupt_and_quantize(&scene.pre_noise, &scene.recipe.noise, &mask, &mut noise_rng)?;

    let id = format!("img_{index:06}");
    let rel_path = format!("{IMAGES_DIR}/{id}.xsim");
    write_image(&root.join(&rel_path), &image)?;

    let recipe_json = serde_json::to_vec(&scene.recipe).expect("recipe serializes");
    Ok(ManifestEntry {
        id,
        path: rel_path,
        run_id,
        seed: image_seed,
        attributes: scene.tags.canonical_names().iter().map(|s| s.to_string()).collect(),
        extended: scene.tags.extended.iter().cloned().collect(),
        recipe_digest: format!("{:016x}", fnv1a64(&recipe_json)),
        extra: Default::default(),
    })
}
