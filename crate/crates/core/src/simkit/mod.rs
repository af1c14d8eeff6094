//! Scattering-pattern kernels, scene composition and attribute tagging.
//!
//! A scene is a list of seeded module specifications. Each module evaluates
//! to a non-negative intensity grid on the detector; the scene is their sum.
//! Detector effects (background, shot noise, read noise, shadow masks,
//! 16-bit quantization) are applied afterwards by
//! [`corrupt_and_quantize`](compose::corrupt_and_quantize).

mod attributes;
mod compose;
mod kernels;
mod tags;

pub use attributes::{Attribute, AttributeSet};
pub use compose::{compose_scene, compose_scene_on, corrupt_and_quantize, eval_module};
pub use kernels::{
    debye_intensity, eval_diffuse_high, eval_diffuse_low, eval_lattice, eval_peaks, eval_ring,
    eval_sphere, lattice_peak_positions, sphere_form_factor, sphere_intensity, RingParams,
};
pub use tags::{derive_tags, derive_tags_from_parts, TagThresholds};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DetectorConfig, MaskSpec};

/// A Halo is a ring-type feature whose radial width is at least this fraction
/// of `max(q0, sigma_q)`.
pub const HALO_BREADTH_RATIO: f64 = 0.35;

/// Two-fold symmetric azimuthal modulation `exp(kappa (cos 2(phi - phi0) - 1))`,
/// normalized to peak value 1 at `phi0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anisotropy {
    pub kappa: f64,
    pub phi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeSymmetry {
    Fcc,
    Bcc,
}

/// Orientation texture of a lattice: powder rings or discrete spots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeTexture {
    Powder,
    Spots {
        n_spots: usize,
        spot_sigma_phi: f64,
        /// Global rotation of the spot pattern; drawn from the scene seed at
        /// sampling time so evaluation stays pure.
        rotation_phi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    pub q: f64,
    pub phi: f64,
    pub sigma_q: f64,
    pub sigma_phi: f64,
    pub amplitude: f64,
}

/// One scattering-pattern generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleSpec {
    /// Sharp circle(s) of intensity at `q0, 2 q0, ...`.
    Ring {
        q0: f64,
        sigma_q: f64,
        amplitude: f64,
        anisotropy: Option<Anisotropy>,
        n_orders: usize,
        order_decay: f64,
    },
    /// Broad, liquid-like ring.
    Halo {
        q0: f64,
        sigma_q: f64,
        amplitude: f64,
        anisotropy: Option<Anisotropy>,
    },
    /// Power-law scattering concentrated near the beam center.
    DiffuseLowQ { amplitude: f64, power: f64, q_floor: f64 },
    /// Sigmoidal rise of intensity beyond `q_onset`.
    DiffuseHighQ {
        amplitude: f64,
        q_onset: f64,
        softness: f64,
    },
    /// Polydisperse spherical nanoparticle form factor.
    SphereFf {
        radius_a: f64,
        amplitude: f64,
        /// Relative radius spread sigma_R / R, in [0, 0.3].
        polydispersity: f64,
    },
    /// Cubic lattice structure factor with Debye-Waller damping.
    Lattice {
        symmetry: LatticeSymmetry,
        lattice_const_a: f64,
        amplitude: f64,
        peak_sigma_q: f64,
        n_orders: usize,
        texture: LatticeTexture,
        dw_factor: f64,
    },
    /// Orientationally-averaged scattering of an explicit point arrangement.
    DebyeCloud {
        points: Vec<[f64; 3]>,
        strength: f64,
        q_samples: usize,
    },
    /// Hand-placed (q, phi) Gaussian peaks.
    PeakSet { peaks: Vec<PeakSpec> },
}

impl ModuleSpec {
    /// Short lowercase tag for diagnostics and digests.
    pub fn kind(&self) -> &'static str {
        match self {
            ModuleSpec::Ring { .. } => "ring",
            ModuleSpec::Halo { .. } => "halo",
            ModuleSpec::DiffuseLowQ { .. } => "diffuse_low_q",
            ModuleSpec::DiffuseHighQ { .. } => "diffuse_high_q",
            ModuleSpec::SphereFf { .. } => "sphere_ff",
            ModuleSpec::Lattice { .. } => "lattice",
            ModuleSpec::DebyeCloud { .. } => "debye_cloud",
            ModuleSpec::PeakSet { .. } => "peak_set",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        let pos = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config {
                    field,
                    reason: format!("must be > 0 and finite, got {v}"),
                })
            }
        };
        let non_neg = |field: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config {
                    field,
                    reason: format!("must be >= 0 and finite, got {v}"),
                })
            }
        };
        match self {
            ModuleSpec::Ring {
                q0,
                sigma_q,
                amplitude,
                anisotropy,
                n_orders,
                order_decay,
            } => {
                pos("ring.q0", *q0)?;
                pos("ring.sigma_q", *sigma_q)?;
                non_neg("ring.amplitude", *amplitude)?;
                if let Some(a) = anisotropy {
                    non_neg("ring.anisotropy.kappa", a.kappa)?;
                }
                if *n_orders < 1 {
                    return bad("ring.n_orders", "must be >= 1".into());
                }
                if !(*order_decay > 0.0 && *order_decay <= 1.0) {
                    return bad("ring.order_decay", format!("must lie in (0, 1], got {order_decay}"));
                }
            }
            ModuleSpec::Halo {
                q0,
                sigma_q,
                amplitude,
                anisotropy,
            } => {
                non_neg("halo.q0", *q0)?;
                pos("halo.sigma_q", *sigma_q)?;
                non_neg("halo.amplitude", *amplitude)?;
                if let Some(a) = anisotropy {
                    non_neg("halo.anisotropy.kappa", a.kappa)?;
                }
                if sigma_q / q0.max(*sigma_q) < HALO_BREADTH_RATIO {
                    return bad(
                        "halo.sigma_q",
                        format!("halo must be broad: sigma_q/max(q0, sigma_q) >= {HALO_BREADTH_RATIO}"),
                    );
                }
            }
            ModuleSpec::DiffuseLowQ { amplitude, power, q_floor } => {
                non_neg("diffuse_low_q.amplitude", *amplitude)?;
                if !(*power >= 2.0 && *power <= 4.0) {
                    return bad("diffuse_low_q.power", format!("must lie in [2, 4], got {power}"));
                }
                pos("diffuse_low_q.q_floor", *q_floor)?;
            }
            ModuleSpec::DiffuseHighQ {
                amplitude,
                q_onset,
                softness,
            } => {
                non_neg("diffuse_high_q.amplitude", *amplitude)?;
                pos("diffuse_high_q.q_onset", *q_onset)?;
                pos("diffuse_high_q.softness", *softness)?;
            }
            ModuleSpec::SphereFf {
                radius_a,
                amplitude,
                polydispersity,
            } => {
                pos("sphere_ff.radius_a", *radius_a)?;
                non_neg("sphere_ff.amplitude", *amplitude)?;
                if !(*polydispersity >= 0.0 && *polydispersity <= 0.3) {
                    return bad(
                        "sphere_ff.polydispersity",
                        format!("must lie in [0, 0.3], got {polydispersity}"),
                    );
                }
            }
            ModuleSpec::Lattice {
                lattice_const_a,
                amplitude,
                peak_sigma_q,
                n_orders,
                texture,
                dw_factor,
                ..
            } => {
                pos("lattice.lattice_const_a", *lattice_const_a)?;
                non_neg("lattice.amplitude", *amplitude)?;
                pos("lattice.peak_sigma_q", *peak_sigma_q)?;
                if !(1..=8).contains(n_orders) {
                    return bad("lattice.n_orders", format!("must lie in [1, 8], got {n_orders}"));
                }
                non_neg("lattice.dw_factor", *dw_factor)?;
                if let LatticeTexture::Spots {
                    n_spots,
                    spot_sigma_phi,
                    ..
                } = texture
                {
                    if !(2..=24).contains(n_spots) {
                        return bad("lattice.n_spots", format!("must lie in [2, 24], got {n_spots}"));
                    }
                    pos("lattice.spot_sigma_phi", *spot_sigma_phi)?;
                }
            }
            ModuleSpec::DebyeCloud {
                points,
                strength,
                q_samples,
            } => {
                if points.is_empty() {
                    return bad("debye_cloud.points", "need at least one point".into());
                }
                non_neg("debye_cloud.strength", *strength)?;
                if *q_samples < 64 {
                    return bad("debye_cloud.q_samples", format!("must be >= 64, got {q_samples}"));
                }
            }
            ModuleSpec::PeakSet { peaks } => {
                for p in peaks {
                    non_neg("peak_set.q", p.q)?;
                    pos("peak_set.sigma_q", p.sigma_q)?;
                    pos("peak_set.sigma_phi", p.sigma_phi)?;
                    non_neg("peak_set.amplitude", p.amplitude)?;
                }
            }
        }
        Ok(())
    }
}

/// Detector-effect model applied after composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Expected background counts per pixel.
    pub background_level: f64,
    /// Gaussian read noise sigma in counts.
    pub read_sigma: f64,
    pub shot_noise: bool,
    /// Maps unit-less module intensity to expected counts.
    pub exposure_scale: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if !(self.background_level >= 0.0 && self.background_level.is_finite()) {
            return bad("background_level", format!("must be >= 0, got {}", self.background_level));
        }
        if !(self.read_sigma >= 0.0 && self.read_sigma.is_finite()) {
            return bad("read_sigma", format!("must be >= 0, got {}", self.read_sigma));
        }
        if !(self.exposure_scale > 0.0 && self.exposure_scale.is_finite()) {
            return bad("exposure_scale", format!("must be > 0, got {}", self.exposure_scale));
        }
        Ok(())
    }
}

/// One module slot in a scene: the spec plus the sub-seed it was sampled
/// under. Sub-seeds travel with their spec so that permuting the module list
/// leaves the composed scene bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneModule {
    pub seed: u64,
    pub spec: ModuleSpec,
}

/// The generative ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub modules: Vec<SceneModule>,
    pub noise: NoiseSpec,
    pub mask: MaskSpec,
    pub detector: DetectorConfig,
    pub seed: u64,
}

impl SceneRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.modules.is_empty() {
            return Err(Error::Recipe("module list is empty".into()));
        }
        for m in &self.modules {
            m.spec.validate()?;
        }
        self.noise.validate()?;
        self.mask.validate()?;
        self.detector.validate()?;
        Ok(())
    }
}
