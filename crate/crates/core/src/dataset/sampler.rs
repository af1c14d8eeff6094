//! Recipe sampling: run templates and per-image scene draws.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GenerationConfig, RecipeRanges};
use crate::error::{Error, Result};
use crate::geometry::{
    build_qmap, Beamstop, DetectorConfig, GapAxis, GapBand, MaskSpec, QMap,
};
use crate::rng::{mix64, substream, STREAM_MODULE_BASE, STREAM_RUN_TEMPLATE, STREAM_SAMPLER};
use crate::simkit::{
    compose_scene_on, derive_tags_from_parts, Anisotropy, AttributeSet, LatticeSymmetry,
    LatticeTexture, ModuleSpec, NoiseSpec, PeakSpec, SceneModule, SceneRecipe, HALO_BREADTH_RATIO,
};

/// First form-factor zero of a sphere: root of `tan x = x` in `(pi, 3 pi/2)`.
const SPHERE_FIRST_ZERO: f64 = 4.493_409_457_909_064;

/// Per-run specialization: a detector preset plus every parameter range
/// narrowed to a sub-interval. This is what makes images within a run more
/// alike than images across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTemplate {
    pub run_id: u32,
    /// Short-camera (high-q) preset when true, long-camera otherwise.
    pub waxs: bool,
    pub ranges: RecipeRanges,
}

impl RunTemplate {
    /// True iff at least one parameter sub-range differs between the runs.
    pub fn differs_from(&self, other: &RunTemplate) -> bool {
        self.waxs != other.waxs
            || self
                .ranges
                .named()
                .iter()
                .zip(other.ranges.named())
                .any(|(a, b)| a.1 != b.1)
    }
}

/// Draws the per-run templates from the master seed.
pub fn derive_run_templates(cfg: &GenerationConfig) -> Vec<RunTemplate> {
    (0..cfg.run_count)
        .map(|run| {
            let mut rng = substream(cfg.master_seed, STREAM_RUN_TEMPLATE + run as u64);
            let waxs = rng.gen::<f64>() < cfg.distribution.waxs_prob;
            let ranges = cfg.distribution.ranges.narrowed(&mut rng, 0.3);
            RunTemplate {
                run_id: run as u32,
                waxs,
                ranges,
            }
        })
        .collect()
}

/// A fully sampled scene: the recipe plus everything derived from it that the
/// generator needs again (q-map, pre-noise grid, tags).
pub struct SampledScene {
    pub recipe: SceneRecipe,
    pub tags: AttributeSet,
    pub qmap: QMap,
    pub pre_noise: Array2<f64>,
}

/// Analytic maximum q over the pixel-center rectangle (used to scale
/// fractional parameters; the tag rules use the exact per-pixel map).
fn analytic_q_max(cfg: &DetectorConfig) -> f64 {
    let (cx, cy) = cfg.beam_center;
    let corners = [
        (0.5, 0.5),
        (cfg.width_px as f64 - 0.5, 0.5),
        (0.5, cfg.height_px as f64 - 0.5),
        (cfg.width_px as f64 - 0.5, cfg.height_px as f64 - 0.5),
    ];
    let r_max = corners
        .iter()
        .map(|(x, y)| (x - cx).hypot(y - cy))
        .fold(0.0f64, f64::max);
    let theta = (r_max * cfg.pixel_size_mm / cfg.sample_distance_mm).atan();
    4.0 * std::f64::consts::PI / cfg.wavelength_a * (theta / 2.0).sin()
}

fn sample_phi<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
}

fn sample_detector(cfg: &GenerationConfig, template: &RunTemplate, rng: &mut ChaCha8Rng) -> DetectorConfig {
    let size = cfg.image_size;
    let mut detector = if template.waxs {
        DetectorConfig::waxs_preset(size, size)
    } else {
        DetectorConfig::saxs_preset(size, size)
    };
    let s = size as f64;
    if rng.gen::<f64>() < cfg.distribution.beam_off_prob {
        let margin = template.ranges.beam_off_margin_frac.sample(rng) * s;
        let along = rng.gen_range(0.0..s);
        detector.beam_center = match rng.gen_range(0u8..4) {
            0 => (-margin, along),
            1 => (s + margin, along),
            2 => (along, -margin),
            _ => (along, s + margin),
        };
    } else {
        let jx = template.ranges.beam_jitter_frac.sample(rng) * s;
        let jy = template.ranges.beam_jitter_frac.sample(rng) * s;
        detector.beam_center = (s / 2.0 + jx, s / 2.0 + jy);
    }
    detector
}

fn sample_mask(cfg: &GenerationConfig, template: &RunTemplate, size: f64, rng: &mut ChaCha8Rng) -> MaskSpec {
    let w = cfg.distribution.beamstop;
    let total = w.none + w.linear + w.circular + w.wedge;
    let draw = rng.gen_range(0.0..total);
    let beamstop = if draw < w.none {
        Beamstop::None
    } else if draw < w.none + w.linear {
        Beamstop::Linear {
            width_px: template.ranges.beamstop_width_frac.sample(rng) * size,
            angle_rad: sample_phi(rng),
        }
    } else if draw < w.none + w.linear + w.circular {
        Beamstop::Circular {
            radius_px: template.ranges.beamstop_radius_frac.sample(rng) * size,
        }
    } else {
        Beamstop::Wedge {
            half_angle_rad: template.ranges.wedge_half_angle.sample(rng),
            orientation_rad: sample_phi(rng),
            radius_px: template.ranges.beamstop_radius_frac.sample(rng) * size * 2.0,
        }
    };
    let mut gaps = Vec::new();
    if rng.gen::<f64>() < cfg.distribution.gap_prob {
        let width = template.ranges.gap_width_px.sample(rng).floor().max(1.0) as usize;
        let start = rng.gen_range(0..(size as usize).saturating_sub(width).max(1));
        let axis = if rng.gen::<bool>() { GapAxis::Rows } else { GapAxis::Cols };
        gaps.push(GapBand {
            start_px: start,
            width_px: width,
            axis,
        });
    }
    MaskSpec { beamstop, gaps }
}

fn sample_noise(cfg: &GenerationConfig, template: &RunTemplate, rng: &mut ChaCha8Rng) -> NoiseSpec {
    NoiseSpec {
        background_level: template.ranges.background_level.sample(rng),
        read_sigma: template.ranges.read_sigma.sample(rng),
        shot_noise: rng.gen::<f64>() < cfg.distribution.shot_noise_prob,
        exposure_scale: template.ranges.exposure_scale.sample(rng),
    }
}

fn sample_anisotropy(cfg: &GenerationConfig, template: &RunTemplate, rng: &mut ChaCha8Rng) -> Option<Anisotropy> {
    if rng.gen::<f64>() < cfg.distribution.anisotropy_prob {
        Some(Anisotropy {
            kappa: template.ranges.aniso_kappa.sample(rng),
            phi0: sample_phi(rng),
        })
    } else {
        None
    }
}

/// Draws the module list for one attempt. Inclusion is an independent
/// Bernoulli trial per variant, in a fixed variant order.
fn sample_modules(
    cfg: &GenerationConfig,
    template: &RunTemplate,
    q_max: f64,
    image_seed: u64,
    attempt: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<SceneModule> {
    let ranges = &template.ranges;
    let probs = &cfg.distribution.modules;
    let mut modules = Vec::new();
    let mut slot = 0u64;
    let push = |spec: ModuleSpec, modules: &mut Vec<SceneModule>, slot: &mut u64| {
        let seed = mix64(image_seed, STREAM_MODULE_BASE + attempt * 256 + *slot);
        modules.push(SceneModule { seed, spec });
        *slot += 1;
    };

    if rng.gen::<f64>() < probs.ring {
        let spec = ModuleSpec::Ring {
            q0: ranges.ring_q0_frac.sample(rng) * q_max,
            sigma_q: ranges.ring_sigma_frac.sample(rng) * q_max,
            amplitude: ranges.ring_amplitude.sample(rng),
            anisotropy: sample_anisotropy(cfg, template, rng),
            n_orders: ranges.ring_orders.sample(rng).floor().max(1.0) as usize,
            order_decay: ranges.ring_order_decay.sample(rng),
        };
        push(spec, &mut modules, &mut slot);
    }
    if rng.gen::<f64>() < probs.halo {
        let q0 = ranges.halo_q0_frac.sample(rng) * q_max;
        let sigma = (ranges.halo_sigma_frac.sample(rng) * q_max)
            .max(q0 * (HALO_BREADTH_RATIO + 1e-3));
        let spec = ModuleSpec::Halo {
            q0,
            sigma_q: sigma,
            amplitude: ranges.halo_amplitude.sample(rng),
            anisotropy: sample_anisotropy(cfg, template, rng),
        };
        push(spec, &mut modules, &mut slot);
    }
    if rng.gen::<f64>() < probs.diffuse_low_q {
        let q_floor = ranges.diffuse_low_floor_frac.sample(rng) * q_max;
        let power = ranges.diffuse_low_power.sample(rng);
        // parameterized by the clamped peak value so counts stay bounded
        let peak = ranges.diffuse_low_peak.sample(rng);
        let spec = ModuleSpec::DiffuseLowQ {
            amplitude: peak * q_floor.powf(power),
            power,
            q_floor,
        };
        push(spec, &mut modules, &mut slot);
    }
    if rng.gen::<f64>() < probs.diffuse_high_q {
        let spec = ModuleSpec::DiffuseHighQ {
            amplitude: ranges.diffuse_high_amplitude.sample(rng),
            q_onset: ranges.diffuse_high_onset_frac.sample(rng) * q_max,
            softness: ranges.diffuse_high_softness_frac.sample(rng) * q_max,
        };
        push(spec, &mut modules, &mut slot);
    }
    if rng.gen::<f64>() < probs.sphere_ff {
        let zero_q = ranges.sphere_zero_frac.sample(rng) * q_max;
        let spec = ModuleSpec::SphereFf {
            radius_a: SPHERE_FIRST_ZERO / zero_q,
            amplitude: ranges.sphere_amplitude.sample(rng),
            polydispersity: ranges.sphere_polydispersity.sample(rng),
        };
        push(spec, &mut modules, &mut slot);
    }
    if rng.gen::<f64>() < probs.lattice {
        let symmetry = if rng.gen::<bool>() {
            LatticeSymmetry::Bcc
        } else {
            LatticeSymmetry::Fcc
        };
        let s1 = match symmetry {
            LatticeSymmetry::Bcc => 2.0f64, // (110)
            LatticeSymmetry::Fcc => 3.0f64, // (111)
        };
        let q1 = ranges.lattice_q1_frac.sample(rng) * q_max;
        let texture = if rng.gen::<bool>() {
            LatticeTexture::Powder
        } else {
            LatticeTexture::Spots {
                n_spots: ranges.spot_count.sample(rng).floor().max(2.0) as usize,
                spot_sigma_phi: ranges.spot_sigma_phi.sample(rng),
                rotation_phi: sample_phi(rng),
            }
        };
        let spec = ModuleSpec::Lattice {
            symmetry,
            lattice_const_a: 2.0 * std::f64::consts::PI * s1.sqrt() / q1,
            amplitude: ranges.lattice_amplitude.sample(rng),
            peak_sigma_q: ranges.lattice_sigma_frac.sample(rng) * q_max,
            n_orders: ranges.lattice_orders.sample(rng).floor().clamp(1.0, 8.0) as usize,
            texture,
            dw_factor: ranges.lattice_dw_q1sq.sample(rng) / (q1 * q1),
        };
        push(spec, &mut modules, &mut slot);
    }
    if rng.gen::<f64>() < probs.debye_cloud {
        let n_points = ranges.debye_points.sample(rng).floor().max(2.0) as usize;
        let radius = std::f64::consts::PI / (ranges.debye_feature_frac.sample(rng) * q_max);
        let mut points = Vec::with_capacity(n_points);
        while points.len() < n_points {
            let p = [
                rng.gen_range(-radius..radius),
                rng.gen_range(-radius..radius),
                rng.gen_range(-radius..radius),
            ];
            if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= radius {
                points.push(p);
            }
        }
        let spec = ModuleSpec::DebyeCloud {
            strength: ranges.debye_amplitude.sample(rng) / (n_points * n_points) as f64,
            points,
            q_samples: 256,
        };
        push(spec, &mut modules, &mut slot);
    }
    if rng.gen::<f64>() < probs.peak_set {
        let count = ranges.peak_count.sample(rng).floor().max(1.0) as usize;
        let peaks = (0..count)
            .map(|_| PeakSpec {
                q: ranges.peak_q_frac.sample(rng) * q_max,
                phi: sample_phi(rng),
                sigma_q: ranges.peak_sigma_q_frac.sample(rng) * q_max,
                sigma_phi: ranges.peak_sigma_phi.sample(rng),
                amplitude: ranges.peak_amplitude.sample(rng),
            })
            .collect();
        push(ModuleSpec::PeakSet { peaks }, &mut modules, &mut slot);
    }
    modules
}

/// Samples one scene. Attempts are rejected while the module list is empty or
/// the canonical tag set comes out empty; after 64 rejections the sampler
/// falls back to a forced ring if only empty module lists were seen, and
/// reports a degenerate config otherwise.
pub fn sample_scene(
    cfg: &GenerationConfig,
    template: &RunTemplate,
    image_seed: u64,
) -> Result<SampledScene> {
    let mut rng = substream(image_seed, STREAM_SAMPLER);
    let mut empty_tag_rejections = 0usize;
    for attempt in 0..64u64 {
        let detector = sample_detector(cfg, template, &mut rng);
        let mask = sample_mask(cfg, template, cfg.image_size as f64, &mut rng);
        let noise = sample_noise(cfg, template, &mut rng);
        let q_max = analytic_q_max(&detector);
        let modules = sample_modules(cfg, template, q_max, image_seed, attempt, &mut rng);
        if modules.is_empty() {
            continue;
        }
        let recipe = SceneRecipe {
            modules,
            noise,
            mask,
            detector,
            seed: image_seed,
        };
        let qmap = build_qmap(&recipe.detector)?;
        let pre_noise = compose_scene_on(&recipe, &qmap)?;
        let tags = derive_tags_from_parts(&recipe, &qmap, &pre_noise, &cfg.thresholds);
        if tags.is_canonically_empty() {
            empty_tag_rejections += 1;
            continue;
        }
        return Ok(SampledScene {
            recipe,
            tags,
            qmap,
            pre_noise,
        });
    }
    if empty_tag_rejections > 0 {
        return Err(Error::DegenerateConfig(format!(
            "64 recipe draws rejected ({empty_tag_rejections} with empty canonical tag sets)"
        )));
    }
    // every rejection was an empty module list: force a ring
    let detector = sample_detector(cfg, template, &mut rng);
    let mask = sample_mask(cfg, template, cfg.image_size as f64, &mut rng);
    let noise = sample_noise(cfg, template, &mut rng);
    let q_max = analytic_q_max(&detector);
    let seed = mix64(image_seed, STREAM_MODULE_BASE + 64 * 256);
    let recipe = SceneRecipe {
        modules: vec![SceneModule {
            seed,
            spec: ModuleSpec::Ring {
                q0: 0.35 * q_max,
                sigma_q: 0.015 * q_max,
                amplitude: 3.0,
                anisotropy: None,
                n_orders: 1,
                order_decay: 1.0,
            },
        }],
        noise,
        mask,
        detector,
        seed: image_seed,
    };
    let qmap = build_qmap(&recipe.detector)?;
    let pre_noise = compose_scene_on(&recipe, &qmap)?;
    let tags = derive_tags_from_parts(&recipe, &qmap, &pre_noise, &cfg.thresholds);
    Ok(SampledScene {
        recipe,
        tags,
        qmap,
        pre_noise,
    })
}

/// Samples the recipe for one image (see [`sample_scene`] for the retry
/// contract).
pub fn sample_recipe(
    cfg: &GenerationConfig,
    template: &RunTemplate,
    image_seed: u64,
) -> Result<SceneRecipe> {
    sample_scene(cfg, template, image_seed).map(|s| s.recipe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::Attribute;

    fn tiny_cfg() -> GenerationConfig {
        GenerationConfig {
            image_size: 64,
            image_count: 10,
            run_count: 2,
            ..GenerationConfig::default()
        }
    }

    #[test]
    fn ring_only_config_yields_exactly_one_ring() {
        let mut cfg = tiny_cfg();
        cfg.distribution.modules = super::super::config::ModuleProbabilities {
            ring: 1.0,
            halo: 0.0,
            diffuse_low_q: 0.0,
            diffuse_high_q: 0.0,
            sphere_ff: 0.0,
            lattice: 0.0,
            debye_cloud: 0.0,
            peak_set: 0.0,
        };
        let template = &derive_run_templates(&cfg)[0];
        for seed in 0..20 {
            let recipe = sample_recipe(&cfg, template, seed).unwrap();
            assert_eq!(recipe.modules.len(), 1);
            assert!(matches!(recipe.modules[0].spec, ModuleSpec::Ring { .. }));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = tiny_cfg();
        let template = &derive_run_templates(&cfg)[1];
        let a = sample_recipe(&cfg, template, 77).unwrap();
        let b = sample_recipe(&cfg, template, 77).unwrap();
        assert_eq!(a, b);
        let c = sample_recipe(&cfg, template, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn all_zero_probabilities_fall_back_to_forced_ring() {
        let mut cfg = tiny_cfg();
        cfg.distribution.modules = super::super::config::ModuleProbabilities {
            ring: 0.0,
            halo: 0.0,
            diffuse_low_q: 0.0,
            diffuse_high_q: 0.0,
            sphere_ff: 0.0,
            lattice: 0.0,
            debye_cloud: 0.0,
            peak_set: 0.0,
        };
        let template = &derive_run_templates(&cfg)[0];
        let scene = sample_scene(&cfg, template, 5).unwrap();
        assert_eq!(scene.recipe.modules.len(), 1);
        assert!(matches!(scene.recipe.modules[0].spec, ModuleSpec::Ring { .. }));
        assert!(scene.tags.contains(Attribute::Ring));
    }

    #[test]
    fn sampled_scenes_have_nonempty_tags_and_valid_recipes() {
        let cfg = tiny_cfg();
        let templates = derive_run_templates(&cfg);
        for seed in 0..30 {
            let scene = sample_scene(&cfg, &templates[seed % 2], seed as u64).unwrap();
            assert!(!scene.tags.is_canonically_empty());
            scene.recipe.validate().unwrap();
            assert!(scene.pre_noise.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn run_templates_differ_pairwise() {
        let cfg = GenerationConfig::default();
        let templates = derive_run_templates(&cfg);
        assert_eq!(templates.len(), 13);
        for i in 0..templates.len() {
            for j in (i + 1)..templates.len() {
                assert!(templates[i].differs_from(&templates[j]));
            }
        }
    }
}
