//! Generation configuration: module inclusion probabilities and sampling
//! ranges for every recipe parameter.
//!
//! The config is a JSON document; every field has a default, so `{}` is a
//! valid config. q-type parameters are expressed as fractions of the
//! detector's maximum q so the same distribution works for both detector
//! presets.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkit::TagThresholds;

/// Inclusive sampling interval, uniform either linearly or in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub log: bool,
}

impl ParamRange {
    pub const fn lin(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi, log: false }
    }

    pub const fn logspace(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi, log: true }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        if self.log {
            let (a, b) = (self.lo.ln(), self.hi.ln());
            rng.gen_range(a..b).exp()
        } else {
            rng.gen_range(self.lo..self.hi)
        }
    }

    /// Random sub-interval covering `frac` of this range (in sampling space).
    pub fn narrowed<R: Rng>(&self, rng: &mut R, frac: f64) -> ParamRange {
        if self.lo == self.hi {
            return *self;
        }
        if self.log {
            let (a, b) = (self.lo.ln(), self.hi.ln());
            let width = (b - a) * frac;
            let start = rng.gen_range(a..(b - width));
            ParamRange {
                lo: start.exp(),
                hi: (start + width).exp(),
                log: true,
            }
        } else {
            let width = (self.hi - self.lo) * frac;
            let start = rng.gen_range(self.lo..(self.hi - width));
            ParamRange {
                lo: start,
                hi: start + width,
                log: false,
            }
        }
    }

    pub fn validate(&self, field: &'static str) -> Result<()> {
        let bad = |reason: String| Err(Error::Config { field, reason });
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return bad(format!("range [{}, {}] must be finite", self.lo, self.hi));
        }
        if self.log {
            if !(self.lo > 0.0) {
                return bad(format!("log range low bound must be > 0, got {}", self.lo));
            }
            if !(self.lo < self.hi) {
                return bad(format!(
                    "log range must be non-degenerate, got [{}, {}]",
                    self.lo, self.hi
                ));
            }
        } else if self.lo > self.hi {
            return bad(format!("range low {} exceeds high {}", self.lo, self.hi));
        }
        Ok(())
    }
}

/// Per-variant inclusion probabilities (independent Bernoulli trials).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleProbabilities {
    pub ring: f64,
    pub halo: f64,
    pub diffuse_low_q: f64,
    pub diffuse_high_q: f64,
    pub sphere_ff: f64,
    pub lattice: f64,
    pub debye_cloud: f64,
    pub peak_set: f64,
}

impl Default for ModuleProbabilities {
    fn default() -> Self {
        ModuleProbabilities {
            ring: 0.55,
            halo: 0.40,
            diffuse_low_q: 0.38,
            diffuse_high_q: 0.32,
            sphere_ff: 0.18,
            lattice: 0.32,
            debye_cloud: 0.12,
            peak_set: 0.18,
        }
    }
}

impl ModuleProbabilities {
    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("ring", self.ring),
            ("halo", self.halo),
            ("diffuse_low_q", self.diffuse_low_q),
            ("diffuse_high_q", self.diffuse_high_q),
            ("sphere_ff", self.sphere_ff),
            ("lattice", self.lattice),
            ("debye_cloud", self.debye_cloud),
            ("peak_set", self.peak_set),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config {
                    field: "module_probabilities",
                    reason: format!("{name} probability {p} outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// Relative weights of the beamstop variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamstopWeights {
    pub none: f64,
    pub linear: f64,
    pub circular: f64,
    pub wedge: f64,
}

impl Default for BeamstopWeights {
    fn default() -> Self {
        BeamstopWeights {
            none: 0.35,
            linear: 0.28,
            circular: 0.22,
            wedge: 0.15,
        }
    }
}

/// Sampling ranges for every recipe parameter. Fields suffixed `_frac` are
/// fractions of the detector's maximum q (or of the image size where noted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecipeRanges {
    pub ring_q0_frac: ParamRange,
    pub ring_sigma_frac: ParamRange,
    pub ring_amplitude: ParamRange,
    pub ring_orders: ParamRange,
    pub ring_order_decay: ParamRange,
    pub aniso_kappa: ParamRange,
    pub halo_q0_frac: ParamRange,
    pub halo_sigma_frac: ParamRange,
    pub halo_amplitude: ParamRange,
    pub diffuse_low_peak: ParamRange,
    pub diffuse_low_power: ParamRange,
    pub diffuse_low_floor_frac: ParamRange,
    pub diffuse_high_amplitude: ParamRange,
    pub diffuse_high_onset_frac: ParamRange,
    pub diffuse_high_softness_frac: ParamRange,
    /// Position of the first form-factor zero as a fraction of max q.
    pub sphere_zero_frac: ParamRange,
    pub sphere_amplitude: ParamRange,
    pub sphere_polydispersity: ParamRange,
    /// Position of the first lattice reflection as a fraction of max q.
    pub lattice_q1_frac: ParamRange,
    pub lattice_amplitude: ParamRange,
    pub lattice_sigma_frac: ParamRange,
    pub lattice_orders: ParamRange,
    /// Debye-Waller damping expressed as `dw * q1^2`.
    pub lattice_dw_q1sq: ParamRange,
    pub spot_count: ParamRange,
    pub spot_sigma_phi: ParamRange,
    pub debye_points: ParamRange,
    /// Dominant feature position of the point cloud as a fraction of max q.
    pub debye_feature_frac: ParamRange,
    pub debye_amplitude: ParamRange,
    pub peak_count: ParamRange,
    pub peak_q_frac: ParamRange,
    pub peak_sigma_q_frac: ParamRange,
    pub peak_sigma_phi: ParamRange,
    pub peak_amplitude: ParamRange,
    pub background_level: ParamRange,
    pub read_sigma: ParamRange,
    pub exposure_scale: ParamRange,
    /// Beamstop radius as a fraction of the image size.
    pub beamstop_radius_frac: ParamRange,
    pub beamstop_width_frac: ParamRange,
    pub wedge_half_angle: ParamRange,
    pub gap_width_px: ParamRange,
    /// On-image beam-center offset from the detector center (fraction of size).
    pub beam_jitter_frac: ParamRange,
    /// Off-image beam-center margin beyond the edge (fraction of size).
    pub beam_off_margin_frac: ParamRange,
}

impl Default for RecipeRanges {
    fn default() -> Self {
        RecipeRanges {
            ring_q0_frac: ParamRange::lin(0.12, 0.80),
            ring_sigma_frac: ParamRange::logspace(0.005, 0.030),
            ring_amplitude: ParamRange::logspace(0.3, 8.0),
            ring_orders: ParamRange::lin(1.0, 5.99),
            ring_order_decay: ParamRange::lin(0.30, 0.90),
            aniso_kappa: ParamRange::logspace(0.5, 4.0),
            halo_q0_frac: ParamRange::lin(0.0, 0.50),
            halo_sigma_frac: ParamRange::lin(0.15, 0.45),
            halo_amplitude: ParamRange::logspace(0.3, 6.0),
            diffuse_low_peak: ParamRange::logspace(0.5, 20.0),
            diffuse_low_power: ParamRange::lin(2.0, 4.0),
            diffuse_low_floor_frac: ParamRange::lin(0.02, 0.08),
            diffuse_high_amplitude: ParamRange::logspace(0.05, 1.5),
            diffuse_high_onset_frac: ParamRange::lin(0.30, 0.80),
            diffuse_high_softness_frac: ParamRange::lin(0.02, 0.10),
            sphere_zero_frac: ParamRange::lin(0.15, 0.70),
            sphere_amplitude: ParamRange::logspace(1.0, 20.0),
            sphere_polydispersity: ParamRange::lin(0.01, 0.15),
            lattice_q1_frac: ParamRange::lin(0.15, 0.60),
            lattice_amplitude: ParamRange::logspace(0.5, 8.0),
            lattice_sigma_frac: ParamRange::logspace(0.004, 0.020),
            lattice_orders: ParamRange::lin(1.0, 8.99),
            lattice_dw_q1sq: ParamRange::lin(0.0, 1.2),
            spot_count: ParamRange::lin(2.0, 12.99),
            spot_sigma_phi: ParamRange::logspace(0.05, 0.30),
            debye_points: ParamRange::lin(20.0, 120.99),
            debye_feature_frac: ParamRange::lin(0.10, 0.60),
            debye_amplitude: ParamRange::logspace(0.5, 10.0),
            peak_count: ParamRange::lin(2.0, 8.99),
            peak_q_frac: ParamRange::lin(0.15, 0.85),
            peak_sigma_q_frac: ParamRange::logspace(0.005, 0.030),
            peak_sigma_phi: ParamRange::logspace(0.05, 0.40),
            peak_amplitude: ParamRange::logspace(0.5, 10.0),
            background_level: ParamRange::logspace(0.5, 300.0),
            read_sigma: ParamRange::lin(0.0, 4.0),
            exposure_scale: ParamRange::logspace(30.0, 3000.0),
            beamstop_radius_frac: ParamRange::lin(0.02, 0.10),
            beamstop_width_frac: ParamRange::lin(0.010, 0.045),
            wedge_half_angle: ParamRange::lin(0.15, 0.70),
            gap_width_px: ParamRange::lin(2.0, 10.99),
            beam_jitter_frac: ParamRange::lin(-0.15, 0.15),
            beam_off_margin_frac: ParamRange::lin(0.05, 0.50),
        }
    }
}

impl RecipeRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in self.named() {
            r.validate(name)?;
        }
        Ok(())
    }

    /// Stable (name, range) listing used for validation, narrowing and the
    /// run-difference check.
    pub fn named(&self) -> Vec<(&'static str, ParamRange)> {
        vec![
            ("ring_q0_frac", self.ring_q0_frac),
            ("ring_sigma_frac", self.ring_sigma_frac),
            ("ring_amplitude", self.ring_amplitude),
            ("ring_orders", self.ring_orders),
            ("ring_order_decay", self.ring_order_decay),
            ("aniso_kappa", self.aniso_kappa),
            ("halo_q0_frac", self.halo_q0_frac),
            ("halo_sigma_frac", self.halo_sigma_frac),
            ("halo_amplitude", self.halo_amplitude),
            ("diffuse_low_peak", self.diffuse_low_peak),
            ("diffuse_low_power", self.diffuse_low_power),
            ("diffuse_low_floor_frac", self.diffuse_low_floor_frac),
            ("diffuse_high_amplitude", self.diffuse_high_amplitude),
            ("diffuse_high_onset_frac", self.diffuse_high_onset_frac),
            ("diffuse_high_softness_frac", self.diffuse_high_softness_frac),
            ("sphere_zero_frac", self.sphere_zero_frac),
            ("sphere_amplitude", self.sphere_amplitude),
            ("sphere_polydispersity", self.sphere_polydispersity),
            ("lattice_q1_frac", self.lattice_q1_frac),
            ("lattice_amplitude", self.lattice_amplitude),
            ("lattice_sigma_frac", self.lattice_sigma_frac),
            ("lattice_orders", self.lattice_orders),
            ("lattice_dw_q1sq", self.lattice_dw_q1sq),
            ("spot_count", self.spot_count),
            ("spot_sigma_phi", self.spot_sigma_phi),
            ("debye_points", self.debye_points),
            ("debye_feature_frac", self.debye_feature_frac),
            ("debye_amplitude", self.debye_amplitude),
            ("peak_count", self.peak_count),
            ("peak_q_frac", self.peak_q_frac),
            ("peak_sigma_q_frac", self.peak_sigma_q_frac),
            ("peak_sigma_phi", self.peak_sigma_phi),
            ("peak_amplitude", self.peak_amplitude),
            ("background_level", self.background_level),
            ("read_sigma", self.read_sigma),
            ("exposure_scale", self.exposure_scale),
            ("beamstop_radius_frac", self.beamstop_radius_frac),
            ("beamstop_width_frac", self.beamstop_width_frac),
            ("wedge_half_angle", self.wedge_half_angle),
            ("gap_width_px", self.gap_width_px),
            ("beam_jitter_frac", self.beam_jitter_frac),
            ("beam_off_margin_frac", self.beam_off_margin_frac),
        ]
    }

    /// Narrows every range to a random sub-interval of the given fractional
    /// width (the per-run specialization mechanism).
    pub fn narrowed<R: Rng>(&self, rng: &mut R, frac: f64) -> RecipeRanges {
        let mut out = *self;
        out.ring_q0_frac = self.ring_q0_frac.narrowed(rng, frac);
        out.ring_sigma_frac = self.ring_sigma_frac.narrowed(rng, frac);
        out.ring_amplitude = self.ring_amplitude.narrowed(rng, frac);
        out.ring_orders = self.ring_orders.narrowed(rng, frac);
        out.ring_order_decay = self.ring_order_decay.narrowed(rng, frac);
        out.aniso_kappa = self.aniso_kappa.narrowed(rng, frac);
        out.halo_q0_frac = self.halo_q0_frac.narrowed(rng, frac);
        out.halo_sigma_frac = self.halo_sigma_frac.narrowed(rng, frac);
        out.halo_amplitude = self.halo_amplitude.narrowed(rng, frac);
        out.diffuse_low_peak = self.diffuse_low_peak.narrowed(rng, frac);
        out.diffuse_low_power = self.diffuse_low_power.narrowed(rng, frac);
        out.diffuse_low_floor_frac = self.diffuse_low_floor_frac.narrowed(rng, frac);
        out.diffuse_high_amplitude = self.diffuse_high_amplitude.narrowed(rng, frac);
        out.diffuse_high_onset_frac = self.diffuse_high_onset_frac.narrowed(rng, frac);
        out.diffuse_high_softness_frac = self.diffuse_high_softness_frac.narrowed(rng, frac);
        out.sphere_zero_frac = self.sphere_zero_frac.narrowed(rng, frac);
        out.sphere_amplitude = self.sphere_amplitude.narrowed(rng, frac);
        out.sphere_polydispersity = self.sphere_polydispersity.narrowed(rng, frac);
        out.lattice_q1_frac = self.lattice_q1_frac.narrowed(rng, frac);
        out.lattice_amplitude = self.lattice_amplitude.narrowed(rng, frac);
        out.lattice_sigma_frac = self.lattice_sigma_frac.narrowed(rng, frac);
        out.lattice_orders = self.lattice_orders.narrowed(rng, frac);
        out.lattice_dw_q1sq = self.lattice_dw_q1sq.narrowed(rng, frac);
        out.spot_count = self.spot_count.narrowed(rng, frac);
        out.spot_sigma_phi = self.spot_sigma_phi.narrowed(rng, frac);
        out.debye_points = self.debye_points.narrowed(rng, frac);
        out.debye_feature_frac = self.debye_feature_frac.narrowed(rng, frac);
        out.debye_amplitude = self.debye_amplitude.narrowed(rng, frac);
        out.peak_count = self.peak_count.narrowed(rng, frac);
        out.peak_q_frac = self.peak_q_frac.narrowed(rng, frac);
        out.peak_sigma_q_frac = self.peak_sigma_q_frac.narrowed(rng, frac);
        out.peak_sigma_phi = self.peak_sigma_phi.narrowed(rng, frac);
        out.peak_amplitude = self.peak_amplitude.narrowed(rng, frac);
        out.background_level = self.background_level.narrowed(rng, frac);
        out.read_sigma = self.read_sigma.narrowed(rng, frac);
        out.exposure_scale = self.exposure_scale.narrowed(rng, frac);
        out.beamstop_radius_frac = self.beamstop_radius_frac.narrowed(rng, frac);
        out.beamstop_width_frac = self.beamstop_width_frac.narrowed(rng, frac);
        out.wedge_half_angle = self.wedge_half_angle.narrowed(rng, frac);
        out.gap_width_px = self.gap_width_px.narrowed(rng, frac);
        out.beam_jitter_frac = self.beam_jitter_frac.narrowed(rng, frac);
        out.beam_off_margin_frac = self.beam_off_margin_frac.narrowed(rng, frac);
        out
    }
}

/// Everything the recipe sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecipeDistribution {
    pub modules: ModuleProbabilities,
    pub beamstop: BeamstopWeights,
    pub anisotropy_prob: f64,
    pub gap_prob: f64,
    pub shot_noise_prob: f64,
    pub beam_off_prob: f64,
    /// Probability that a run uses the short-camera (high-q) preset.
    pub waxs_prob: f64,
    pub ranges: RecipeRanges,
}

impl Default for RecipeDistribution {
    fn default() -> Self {
        RecipeDistribution {
            modules: ModuleProbabilities::default(),
            beamstop: BeamstopWeights::default(),
            anisotropy_prob: 0.45,
            gap_prob: 0.22,
            shot_noise_prob: 0.92,
            beam_off_prob: 0.06,
            waxs_prob: 0.5,
            ranges: RecipeRanges::default(),
        }
    }
}

/// Top-level generation config (a JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub master_seed: u64,
    pub image_count: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    pub run_count: usize,
    pub distribution: RecipeDistribution,
    pub thresholds: TagThresholds,
    /// Dataset root; usually supplied on the command line instead.
    pub output_dir: Option<PathBuf>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            master_seed: 0,
            image_count: 100,
            image_size: 256,
            run_count: 13,
            distribution: RecipeDistribution::default(),
            thresholds: TagThresholds::default(),
            output_dir: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if self.run_count < 1 {
            return bad("run_count", "must be >= 1".into());
        }
        if self.image_count < self.run_count {
            return bad(
                "image_count",
                format!(
                    "must be >= run_count ({} < {})",
                    self.image_count, self.run_count
                ),
            );
        }
        if self.image_size < 32 {
            return bad("image_size", format!("must be >= 32, got {}", self.image_size));
        }
        self.distribution.modules.validate()?;
        for (name, p) in [
            ("anisotropy_prob", self.distribution.anisotropy_prob),
            ("gap_prob", self.distribution.gap_prob),
            ("shot_noise_prob", self.distribution.shot_noise_prob),
            ("beam_off_prob", self.distribution.beam_off_prob),
            ("waxs_prob", self.distribution.waxs_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad("distribution", format!("{name} = {p} outside [0, 1]"));
            }
        }
        let w = &self.distribution.beamstop;
        if w.none < 0.0 || w.linear < 0.0 || w.circular < 0.0 || w.wedge < 0.0 {
            return bad("beamstop", "weights must be non-negative".into());
        }
        if w.none + w.linear + w.circular + w.wedge <= 0.0 {
            return bad("beamstop", "weights must not all be zero".into());
        }
        self.distribution.ranges.validate()?;
        self.thresholds.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<GenerationConfig> {
        let cfg: GenerationConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            field: "config",
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
