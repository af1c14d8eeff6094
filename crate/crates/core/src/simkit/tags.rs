//! Rule-based attribute tagging.
//!
//! Tags are a pure function of the recipe: module variants and the mask map
//! directly to attributes, order-visibility tags consult the detector q
//! range, and the Strong/Weak/High-background triplet compares expected
//! counts against configurable thresholds.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::kernels::lattice_peak_positions;
use super::{Attribute, AttributeSet, LatticeTexture, ModuleSpec, SceneRecipe};
use crate::error::{Error, Result};
use crate::geometry::{build_qmap, Beamstop, QMap};
use crate::simkit::compose::compose_scene_on;

/// Thresholds for the count-based tags. All config-file overridable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagThresholds {
    /// Distinct visible ring/lattice orders needed for "Many rings".
    pub ring_many: usize,
    /// Background counts/pixel at or above which "High background" applies.
    pub high_background: f64,
    /// Signal-to-background ratio at or above which "Strong scattering" applies.
    pub strong: f64,
    /// Signal-to-background ratio at or below which "Weak scattering" applies.
    pub weak: f64,
}

impl Default for TagThresholds {
    fn default() -> Self {
        TagThresholds {
            ring_many: 5,
            high_background: 50.0,
            strong: 20.0,
            weak: 2.0,
        }
    }
}

impl TagThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.strong <= self.weak {
            return Err(Error::Config {
                field: "thresholds.strong",
                reason: format!(
                    "strong threshold ({}) must exceed weak threshold ({}) so the tags are exclusive",
                    self.strong, self.weak
                ),
            });
        }
        if self.ring_many < 2 {
            return Err(Error::Config {
                field: "thresholds.ring_many",
                reason: "must be >= 2".into(),
            });
        }
        Ok(())
    }
}

/// Derives the attribute set for a recipe. Composes the scene internally;
/// prefer [`derive_tags_from_parts`] when the grid is already available.
pub fn derive_tags(recipe: &SceneRecipe, thresholds: &TagThresholds) -> Result<AttributeSet> {
    let qmap = build_qmap(&recipe.detector)?;
    let grid = compose_scene_on(recipe, &qmap)?;
    Ok(derive_tags_from_parts(recipe, &qmap, &grid, thresholds))
}

/// Tag derivation against a precomputed q-map and pre-noise grid.
pub fn derive_tags_from_parts(
    recipe: &SceneRecipe,
    qmap: &QMap,
    pre_noise: &Array2<f64>,
    thresholds: &TagThresholds,
) -> AttributeSet {
    let mut tags = AttributeSet::new();
    let (q_lo, q_hi) = qmap.q_range();
    let visible = |q: f64| q >= q_lo && q <= q_hi;
    let mut visible_orders: Vec<f64> = Vec::new();

    for module in &recipe.modules {
        match &module.spec {
            ModuleSpec::Ring {
                q0,
                anisotropy,
                n_orders,
                ..
            } => {
                tags.insert(Attribute::Ring);
                tags.insert_extended(if anisotropy.is_some() {
                    "Ring: Anisotropic"
                } else {
                    "Ring: Isotropic"
                });
                let orders: Vec<f64> = (1..=*n_orders)
                    .map(|n| n as f64 * q0)
                    .filter(|&q| visible(q))
                    .collect();
                if orders.len() >= 2 {
                    tags.insert(Attribute::HigherOrders);
                }
                visible_orders.extend(orders);
            }
            ModuleSpec::Halo { anisotropy, .. } => {
                tags.insert(Attribute::Halo);
                tags.insert_extended(if anisotropy.is_some() {
                    "Halo: Anisotropic"
                } else {
                    "Halo: Isotropic"
                });
            }
            ModuleSpec::DiffuseLowQ { .. } => {
                tags.insert(Attribute::DiffuseLowQ);
            }
            ModuleSpec::DiffuseHighQ { .. } => {
                tags.insert(Attribute::DiffuseHighQ);
            }
            ModuleSpec::SphereFf { .. } => {
                tags.insert_extended("Sphere form factor");
            }
            ModuleSpec::Lattice {
                symmetry,
                lattice_const_a,
                n_orders,
                texture,
                ..
            } => {
                tags.insert(Attribute::StructureFactor);
                tags.insert(match symmetry {
                    super::LatticeSymmetry::Bcc => Attribute::Bcc,
                    super::LatticeSymmetry::Fcc => Attribute::Fcc,
                });
                if matches!(texture, LatticeTexture::Powder) {
                    tags.insert(Attribute::Polycrystalline);
                }
                let orders: Vec<f64> = lattice_peak_positions(*symmetry, *lattice_const_a, *n_orders)
                    .into_iter()
                    .filter(|&q| visible(q))
                    .collect();
                if orders.len() >= 2 {
                    tags.insert(Attribute::HigherOrders);
                }
                visible_orders.extend(orders);
            }
            ModuleSpec::DebyeCloud { .. } => {
                tags.insert_extended("Debye cloud");
            }
            ModuleSpec::PeakSet { .. } => {
                tags.insert_extended("Peaks");
            }
        }
    }

    // distinct visible orders across all ring/lattice modules
    visible_orders.sort_by(|a, b| a.partial_cmp(b).unwrap());
    visible_orders.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));
    if visible_orders.len() >= thresholds.ring_many {
        tags.insert(Attribute::ManyRings);
    }

    match &recipe.mask.beamstop {
        Beamstop::None => {}
        Beamstop::Linear { .. } => tags.insert(Attribute::LinearBeamstop),
        Beamstop::Circular { .. } => tags.insert(Attribute::CircBeamstop),
        Beamstop::Wedge { .. } => tags.insert(Attribute::WedgeBeamstop),
    }
    if !recipe.mask.gaps.is_empty() {
        tags.insert_extended("Detector gaps");
    }

    if !recipe.detector.beam_on_image() {
        tags.insert(Attribute::BeamOffImage);
    }

    if recipe.noise.background_level >= thresholds.high_background {
        tags.insert(Attribute::HighBackground);
    }

    // signal-to-background: 99.9th percentile of expected signal counts
    let p999 = percentile_999(pre_noise, recipe.noise.exposure_scale);
    let ratio = p999 / (recipe.noise.background_level + 1.0);
    if ratio >= thresholds.strong {
        tags.insert(Attribute::StrongScattering);
    } else if ratio <= thresholds.weak {
        tags.insert(Attribute::WeakScattering);
    }

    tags
}

fn percentile_999(pre_noise: &Array2<f64>, exposure_scale: f64) -> f64 {
    let mut scaled: Vec<f64> = pre_noise.iter().map(|&v| v * exposure_scale).collect();
    scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = scaled.len();
    let idx = ((n as f64 * 0.999).ceil() as usize).clamp(1, n) - 1;
    scaled[idx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DetectorConfig, GapAxis, GapBand, MaskSpec};
    use crate::simkit::{Anisotropy, LatticeSymmetry, NoiseSpec, SceneModule};

    fn base_recipe(modules: Vec<ModuleSpec>) -> SceneRecipe {
        SceneRecipe {
            modules: modules
                .into_iter()
                .enumerate()
                .map(|(i, spec)| SceneModule { seed: i as u64, spec })
                .collect(),
            noise: NoiseSpec {
                background_level: 10.0,
                read_sigma: 0.0,
                shot_noise: false,
                exposure_scale: 100.0,
            },
            mask: MaskSpec::none(),
            // q range here is roughly [0, 1.12] A^-1
            detector: DetectorConfig::waxs_preset(256, 256),
            seed: 5,
        }
    }

    fn tags_of(recipe: &SceneRecipe) -> AttributeSet {
        derive_tags(recipe, &TagThresholds::default()).unwrap()
    }

    #[test]
    fn bcc_powder_lattice_tags() {
        // q1 at 0.3 -> first three BCC orders 0.3, 0.424, 0.52 all visible
        let a = 2.0 * std::f64::consts::PI * 2.0f64.sqrt() / 0.3;
        let recipe = base_recipe(vec![ModuleSpec::Lattice {
            symmetry: LatticeSymmetry::Bcc,
            lattice_const_a: a,
            amplitude: 1.0,
            peak_sigma_q: 0.01,
            n_orders: 3,
            texture: LatticeTexture::Powder,
            dw_factor: 0.0,
        }]);
        let tags = tags_of(&recipe);
        for attr in [
            Attribute::Bcc,
            Attribute::StructureFactor,
            Attribute::Polycrystalline,
            Attribute::HigherOrders,
        ] {
            assert!(tags.contains(attr), "missing {attr}");
        }
        assert!(!tags.contains(Attribute::ManyRings)); // only 3 visible orders
        assert!(!tags.contains(Attribute::Fcc));
    }

    #[test]
    fn many_rings_counts_distinct_visible_orders_across_modules() {
        let ring = |q0: f64, n: usize| ModuleSpec::Ring {
            q0,
            sigma_q: 0.01,
            amplitude: 1.0,
            anisotropy: None,
            n_orders: n,
            order_decay: 0.8,
        };
        // 3 + 2 distinct visible orders
        let recipe = base_recipe(vec![ring(0.2, 3), ring(0.33, 2)]);
        let tags = tags_of(&recipe);
        assert!(tags.contains(Attribute::ManyRings));
        // same total orders but half are off-detector (q_hi ~ 1.12)
        let recipe = base_recipe(vec![ring(0.2, 3), ring(1.0, 2)]);
        let tags = tags_of(&recipe);
        assert!(!tags.contains(Attribute::ManyRings));
        assert!(tags.contains(Attribute::HigherOrders)); // ring 1 has 3 visible
    }

    #[test]
    fn beam_off_grid_sets_beam_off_image() {
        let mut recipe = base_recipe(vec![ModuleSpec::Halo {
            q0: 0.2,
            sigma_q: 0.2,
            amplitude: 1.0,
            anisotropy: Some(Anisotropy { kappa: 1.5, phi0: 0.0 }),
        }]);
        recipe.detector.beam_center = (-40.0, 32.0);
        let tags = tags_of(&recipe);
        assert!(tags.contains(Attribute::BeamOffImage));
        assert!(tags.contains(Attribute::Halo));
        assert!(tags.extended.contains("Halo: Anisotropic"));
    }

    #[test]
    fn mask_variants_map_to_beamstop_tags() {
        let diffuse = ModuleSpec::DiffuseLowQ {
            amplitude: 1.0,
            power: 3.0,
            q_floor: 0.01,
        };
        let mut recipe = base_recipe(vec![diffuse.clone()]);
        recipe.mask.beamstop = Beamstop::Circular { radius_px: 5.0 };
        assert!(tags_of(&recipe).contains(Attribute::CircBeamstop));
        recipe.mask.beamstop = Beamstop::Linear {
            width_px: 4.0,
            angle_rad: 1.0,
        };
        assert!(tags_of(&recipe).contains(Attribute::LinearBeamstop));
        recipe.mask.beamstop = Beamstop::Wedge {
            half_angle_rad: 0.4,
            orientation_rad: 0.0,
            radius_px: 20.0,
        };
        let tags = tags_of(&recipe);
        assert!(tags.contains(Attribute::WedgeBeamstop));
        assert!(tags.contains(Attribute::DiffuseLowQ));
        recipe.mask.gaps.push(GapBand {
            start_px: 10,
            width_px: 2,
            axis: GapAxis::Rows,
        });
        assert!(tags_of(&recipe).extended.contains("Detector gaps"));
    }

    #[test]
    fn strong_and_weak_scattering_are_exclusive_and_threshold_driven() {
        let ring = ModuleSpec::Ring {
            q0: 0.4,
            sigma_q: 0.02,
            amplitude: 10.0,
            anisotropy: None,
            n_orders: 1,
            order_decay: 1.0,
        };
        // peak signal = 10 * 100 = 1000 counts, background 10 -> S ~ 91
        let recipe = base_recipe(vec![ring.clone()]);
        let tags = tags_of(&recipe);
        assert!(tags.contains(Attribute::StrongScattering));
        assert!(!tags.contains(Attribute::WeakScattering));

        // weak: scale exposure down so S <= 2
        let mut weak = base_recipe(vec![ring]);
        weak.noise.exposure_scale = 1.0;
        weak.noise.background_level = 100.0;
        let tags = tags_of(&weak);
        assert!(tags.contains(Attribute::WeakScattering));
        assert!(!tags.contains(Attribute::StrongScattering));
        assert!(tags.contains(Attribute::HighBackground));
    }

    #[test]
    fn seed_change_leaves_canonical_tags_unchanged() {
        let modules = vec![
            ModuleSpec::Ring {
                q0: 0.35,
                sigma_q: 0.02,
                amplitude: 2.0,
                anisotropy: None,
                n_orders: 2,
                order_decay: 0.6,
            },
            ModuleSpec::DiffuseHighQ {
                amplitude: 0.5,
                q_onset: 0.6,
                softness: 0.1,
            },
        ];
        let mut a = base_recipe(modules.clone());
        let mut b = base_recipe(modules);
        a.seed = 1;
        b.seed = 999;
        assert_eq!(tags_of(&a).canonical, tags_of(&b).canonical);
    }

    #[test]
    fn diffuse_high_q_tag() {
        let recipe = base_recipe(vec![ModuleSpec::DiffuseHighQ {
            amplitude: 1.0,
            q_onset: 0.5,
            softness: 0.05,
        }]);
        assert!(tags_of(&recipe).contains(Attribute::DiffuseHighQ));
    }

    #[test]
    fn sphere_only_recipe_has_empty_canonical_set_at_mid_signal() {
        let mut recipe = base_recipe(vec![ModuleSpec::SphereFf {
            radius_a: 60.0,
            amplitude: 1.0,
            polydispersity: 0.05,
        }]);
        // tune S into the (weak, strong) dead band: peak ~ 1 * exposure
        recipe.noise.exposure_scale = 100.0;
        recipe.noise.background_level = 10.0;
        let tags = tags_of(&recipe);
        assert!(tags.is_canonically_empty());
        assert!(tags.extended.contains("Sphere form factor"));
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let t = TagThresholds {
            strong: 1.0,
            weak: 2.0,
            ..TagThresholds::default()
        };
        assert!(t.validate().is_err());
    }
}
