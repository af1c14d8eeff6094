//! Detector geometry: pixel -> reciprocal-space maps and shadow masks.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * Pixel `(row, col)` has its center at `(col + 0.5, row + 0.5)` in
//!   beam-center coordinates; the beam center itself is real-valued and may
//!   lie outside the pixel grid.
//! * `phi` is measured from the +x axis, counterclockwise, with the image
//!   row index increasing downward (so "up" on screen is +pi/2).
//! * The exact scattering formula `q = (4 pi / lambda) sin(theta / 2)` with
//!   `theta = atan(r_mm / distance_mm)` is used, not the small-angle
//!   approximation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat-detector experiment geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub width_px: usize,
    pub height_px: usize,
    /// Pixel pitch in millimetres.
    pub pixel_size_mm: f64,
    /// Sample-to-detector distance in millimetres.
    pub sample_distance_mm: f64,
    /// X-ray wavelength in Angstroms.
    pub wavelength_a: f64,
    /// Direct-beam position `(cx, cy)` in pixel coordinates; may be off-grid.
    pub beam_center: (f64, f64),
}

impl DetectorConfig {
    /// Long-camera preset probing large length scales (low q).
    pub fn saxs_preset(width_px: usize, height_px: usize) -> Self {
        DetectorConfig {
            width_px,
            height_px,
            pixel_size_mm: 0.2,
            sample_distance_mm: 1000.0,
            wavelength_a: 1.0,
            beam_center: (width_px as f64 / 2.0, height_px as f64 / 2.0),
        }
    }

    /// Short-camera preset probing atomic length scales (high q).
    pub fn waxs_preset(width_px: usize, height_px: usize) -> Self {
        DetectorConfig {
            sample_distance_mm: 200.0,
            ..Self::saxs_preset(width_px, height_px)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if self.width_px < 16 {
            return err("width_px", format!("must be >= 16, got {}", self.width_px));
        }
        if self.height_px < 16 {
            return err("height_px", format!("must be >= 16, got {}", self.height_px));
        }
        if !(self.pixel_size_mm > 0.0) {
            return err("pixel_size_mm", format!("must be > 0, got {}", self.pixel_size_mm));
        }
        if !(self.sample_distance_mm > 0.0) {
            return err(
                "sample_distance_mm",
                format!("must be > 0, got {}", self.sample_distance_mm),
            );
        }
        if !(self.wavelength_a > 0.0) {
            return err("wavelength_a", format!("must be > 0, got {}", self.wavelength_a));
        }
        if self.sample_distance_mm <= self.pixel_size_mm {
            return err(
                "sample_distance_mm",
                format!(
                    "must exceed pixel_size_mm ({} <= {})",
                    self.sample_distance_mm, self.pixel_size_mm
                ),
            );
        }
        if !self.beam_center.0.is_finite() || !self.beam_center.1.is_finite() {
            return err("beam_center", "must be finite".to_string());
        }
        Ok(())
    }

    /// True iff the direct beam lands on the pixel grid (strict bounds at 0).
    pub fn beam_on_image(&self) -> bool {
        let (cx, cy) = self.beam_center;
        cx >= 0.0 && cx < self.width_px as f64 && cy >= 0.0 && cy < self.height_px as f64
    }
}

/// Per-pixel reciprocal-space coordinates.
///
/// `q` in inverse Angstroms, `phi` in `(-pi, pi]`. A pixel whose center lies
/// within half a pixel of the beam center stores `q = 0`, `phi = 0`.
#[derive(Debug, Clone)]
pub struct QMap {
    pub q: Array2<f64>,
    pub phi: Array2<f64>,
}

impl QMap {
    pub fn q_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.q.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Computes the (q, phi) map for a detector configuration.
pub fn build_qmap(cfg: &DetectorConfig) -> Result<QMap> {
    cfg.validate()?;
    let (h, w) = (cfg.height_px, cfg.width_px);
    let mut q = Array2::zeros((h, w));
    let mut phi = Array2::zeros((h, w));
    let k = 4.0 * std::f64::consts::PI / cfg.wavelength_a;
    let (cx, cy) = cfg.beam_center;
    for row in 0..h {
        let dy = (row as f64 + 0.5) - cy;
        for col in 0..w {
            let dx = (col as f64 + 0.5) - cx;
            let r_px = dx.hypot(dy);
            if r_px <= 0.5 {
                // the beam-center pixel: q exactly 0, phi stored as 0
                continue;
            }
            let theta = (r_px * cfg.pixel_size_mm / cfg.sample_distance_mm).atan();
            q[(row, col)] = k * (theta / 2.0).sin();
            // row index grows downward; counterclockwise phi needs -dy
            let mut a = (-dy).atan2(dx);
            if a <= -std::f64::consts::PI {
                a = std::f64::consts::PI;
            }
            phi[(row, col)] = a;
        }
    }
    Ok(QMap { q, phi })
}

/// Beamstop shadow geometry, in pixel units about the beam center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Beamstop {
    None,
    /// A band of the given width running from the beam center to the detector
    /// edge along `angle_rad` (phi convention).
    Linear { width_px: f64, angle_rad: f64 },
    /// A disc centered on the beam center.
    Circular { radius_px: f64 },
    /// An angular sector of the given half-angle about `orientation_rad`,
    /// out to `radius_px`.
    Wedge {
        half_angle_rad: f64,
        orientation_rad: f64,
        radius_px: f64,
    },
}

/// Detector rows/columns lost to inter-module gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapAxis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBand {
    pub start_px: usize,
    pub width_px: usize,
    pub axis: GapAxis,
}

/// Full shadow specification for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub beamstop: Beamstop,
    pub gaps: Vec<GapBand>,
}

impl MaskSpec {
    pub fn none() -> Self {
        MaskSpec {
            beamstop: Beamstop::None,
            gaps: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        match &self.beamstop {
            Beamstop::None => {}
            Beamstop::Linear { width_px, .. } => {
                if !(*width_px > 0.0) {
                    return err("beamstop.width_px", format!("must be > 0, got {width_px}"));
                }
            }
            Beamstop::Circular { radius_px } => {
                if !(*radius_px > 0.0) {
                    return err("beamstop.radius_px", format!("must be > 0, got {radius_px}"));
                }
            }
            Beamstop::Wedge {
                half_angle_rad,
                radius_px,
                ..
            } => {
                if !(*half_angle_rad > 0.0 && *half_angle_rad <= std::f64::consts::FRAC_PI_2) {
                    return err(
                        "beamstop.half_angle_rad",
                        format!("must lie in (0, pi/2], got {half_angle_rad}"),
                    );
                }
                if !(*radius_px > 0.0) {
                    return err("beamstop.radius_px", format!("must be > 0, got {radius_px}"));
                }
            }
        }
        for gap in &self.gaps {
            if gap.width_px == 0 {
                return err("gaps.width_px", "must be > 0".to_string());
            }
        }
        Ok(())
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Rasterizes the shadow mask; `true` marks a shadowed pixel.
pub fn rasterize_mask(cfg: &DetectorConfig, spec: &MaskSpec) -> Result<Array2<bool>> {
    cfg.validate()?;
    spec.validate()?;
    let (h, w) = (cfg.height_px, cfg.width_px);
    let (cx, cy) = cfg.beam_center;
    let mut mask = Array2::from_elem((h, w), false);

    match &spec.beamstop {
        Beamstop::None => {}
        Beamstop::Linear { width_px, angle_rad } => {
            let (sin_a, cos_a) = angle_rad.sin_cos();
            for row in 0..h {
                let dy = (row as f64 + 0.5) - cy;
                for col in 0..w {
                    let dx = (col as f64 + 0.5) - cx;
                    // physical coordinates: x right, y up (= -row direction)
                    let lon = dx * cos_a - dy * sin_a;
                    let tra = -dx * sin_a - dy * cos_a;
                    if lon >= 0.0 && tra.abs() <= width_px / 2.0 {
                        mask[(row, col)] = true;
                    }
                }
            }
        }
        Beamstop::Circular { radius_px } => {
            for row in 0..h {
                let dy = (row as f64 + 0.5) - cy;
                for col in 0..w {
                    let dx = (col as f64 + 0.5) - cx;
                    if dx.hypot(dy) <= *radius_px {
                        mask[(row, col)] = true;
                    }
                }
            }
        }
        Beamstop::Wedge {
            half_angle_rad,
            orientation_rad,
            radius_px,
        } => {
            for row in 0..h {
                let dy = (row as f64 + 0.5) - cy;
                for col in 0..w {
                    let dx = (col as f64 + 0.5) - cx;
                    let r = dx.hypot(dy);
                    if r > *radius_px {
                        continue;
                    }
                    let phi = (-dy).atan2(dx);
                    if r == 0.0 || wrap_angle(phi - orientation_rad).abs() <= *half_angle_rad {
                        mask[(row, col)] = true;
                    }
                }
            }
        }
    }

    for gap in &spec.gaps {
        let end = gap.start_px.saturating_add(gap.width_px);
        match gap.axis {
            GapAxis::Rows => {
                for row in gap.start_px..end.min(h) {
                    for col in 0..w {
                        mask[(row, col)] = true;
                    }
                }
            }
            GapAxis::Cols => {
                for col in gap.start_px..end.min(w) {
                    for row in 0..h {
                        mask[(row, col)] = true;
                    }
                }
            }
        }
    }

    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg_256() -> DetectorConfig {
        DetectorConfig {
            width_px: 256,
            height_px: 256,
            pixel_size_mm: 0.1,
            sample_distance_mm: 1000.0,
            wavelength_a: 1.0,
            beam_center: (128.5, 128.5),
        }
    }

    #[test]
    fn qmap_zero_at_beam_center() {
        let qmap = build_qmap(&cfg_256()).unwrap();
        // beam center (128.5, 128.5) is the center of pixel (128, 128)
        assert_eq!(qmap.q[(128, 128)], 0.0);
        assert_eq!(qmap.phi[(128, 128)], 0.0);
        assert!(qmap.q[(128, 129)] > 0.0);
    }

    #[test]
    fn qmap_matches_hand_evaluated_formula_at_100px() {
        // oracle: independent two-step evaluation of the exact formula
        let mut cfg = cfg_256();
        cfg.beam_center = (0.5, 0.5); // center of pixel (0, 0)
        let qmap = build_qmap(&cfg).unwrap();
        let got = qmap.q[(0, 100)]; // dx = 100 px exactly
        let theta = (100.0 * 0.1 / 1000.0_f64).atan();
        let expected = (4.0 * std::f64::consts::PI / 1.0) * (theta / 2.0).sin();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
        // small-angle form agrees to 1e-3 in this regime
        let small_angle = 2.0 * std::f64::consts::PI * 100.0 * 0.1 / (1.0 * 1000.0);
        assert!((got - small_angle).abs() / got < 1e-3);
        assert!((got - 0.06283).abs() < 1e-4);
    }

    #[test]
    fn doubling_distance_lowers_q_everywhere() {
        let cfg = cfg_256();
        let far = DetectorConfig {
            sample_distance_mm: 2000.0,
            ..cfg.clone()
        };
        let q1 = build_qmap(&cfg).unwrap().q;
        let q2 = build_qmap(&far).unwrap().q;
        for (near, far) in q1.iter().zip(q2.iter()) {
            if *near > 0.0 {
                assert!(far < near);
            }
        }
    }

    #[test]
    fn q_strictly_increases_along_rays() {
        let cfg = cfg_256();
        let qmap = build_qmap(&cfg).unwrap();
        let dirs: [(isize, isize); 8] = [
            (0, 1),
            (0, -1),
            (1, 0),
            (-1, 0),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        for (dr, dc) in dirs {
            let mut prev = qmap.q[(128, 128)];
            let (mut r, mut c) = (128isize, 128isize);
            loop {
                r += dr;
                c += dc;
                if !(0..256).contains(&r) || !(0..256).contains(&c) {
                    break;
                }
                let cur = qmap.q[(r as usize, c as usize)];
                assert!(cur > prev, "ray ({dr},{dc}) not strictly increasing");
                prev = cur;
            }
        }
    }

    #[test]
    fn phi_convention_right_is_zero_up_is_positive() {
        let qmap = build_qmap(&cfg_256()).unwrap();
        assert_relative_eq!(qmap.phi[(128, 200)], 0.0, epsilon = 1e-12);
        // smaller row = physically up = +pi/2
        assert_relative_eq!(qmap.phi[(60, 128)], std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(qmap.phi[(200, 128)], -std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        // left of center sits on the branch cut: must be +pi, never -pi
        assert_relative_eq!(qmap.phi[(128, 10)], std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn empty_mask_is_all_false() {
        let mask = rasterize_mask(&cfg_256(), &MaskSpec::none()).unwrap();
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn circular_mask_matches_brute_force_count() {
        let cfg = cfg_256();
        let spec = MaskSpec {
            beamstop: Beamstop::Circular { radius_px: 10.0 },
            gaps: Vec::new(),
        };
        let mask = rasterize_mask(&cfg, &spec).unwrap();
        let got = mask.iter().filter(|&&m| m).count();
        let mut expected = 0usize;
        for row in 0..256 {
            for col in 0..256 {
                let dx = (col as f64 + 0.5) - 128.5;
                let dy = (row as f64 + 0.5) - 128.5;
                if (dx * dx + dy * dy).sqrt() <= 10.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(got, expected);
        assert!(got > 0);
    }

    #[test]
    fn gap_band_adds_exactly_width_times_extent() {
        let cfg = cfg_256();
        let base = MaskSpec {
            beamstop: Beamstop::Circular { radius_px: 10.0 },
            gaps: Vec::new(),
        };
        let with_gap = MaskSpec {
            beamstop: Beamstop::Circular { radius_px: 10.0 },
            gaps: vec![GapBand {
                start_px: 200,
                width_px: 4,
                axis: GapAxis::Rows,
            }],
        };
        let m0 = rasterize_mask(&cfg, &base).unwrap();
        let m1 = rasterize_mask(&cfg, &with_gap).unwrap();
        let n0 = m0.iter().filter(|&&m| m).count();
        let n1 = m1.iter().filter(|&&m| m).count();
        assert_eq!(n1 - n0, 4 * 256);
    }

    #[test]
    fn linear_beamstop_covers_center_to_edge() {
        let cfg = cfg_256();
        let spec = MaskSpec {
            beamstop: Beamstop::Linear {
                width_px: 6.0,
                angle_rad: 0.0,
            },
            gaps: Vec::new(),
        };
        let mask = rasterize_mask(&cfg, &spec).unwrap();
        // band runs to the right from the beam center
        assert!(mask[(128, 128)]);
        assert!(mask[(128, 255)]);
        assert!(!mask[(128, 10)]);
        assert!(!mask[(60, 200)]);
    }

    #[test]
    fn wedge_shadows_sector_only() {
        let cfg = cfg_256();
        let spec = MaskSpec {
            beamstop: Beamstop::Wedge {
                half_angle_rad: 0.3,
                orientation_rad: std::f64::consts::FRAC_PI_2,
                radius_px: 60.0,
            },
            gaps: Vec::new(),
        };
        let mask = rasterize_mask(&cfg, &spec).unwrap();
        assert!(mask[(100, 128)]); // up, r = 28.5
        assert!(!mask[(128, 160)]); // right
        assert!(!mask[(30, 128)]); // up but beyond radius (r = 98.5)
    }

    #[test]
    fn rasterization_is_idempotent_and_circle_has_180_symmetry() {
        let mut cfg = cfg_256();
        cfg.beam_center = (128.0, 128.0);
        let spec = MaskSpec {
            beamstop: Beamstop::Circular { radius_px: 17.3 },
            gaps: Vec::new(),
        };
        let a = rasterize_mask(&cfg, &spec).unwrap();
        let b = rasterize_mask(&cfg, &spec).unwrap();
        assert_eq!(a, b);
        // (row, col) -> (255 - row, 255 - col) is a 180 deg rotation about (128, 128)
        for row in 0..256 {
            for col in 0..256 {
                assert_eq!(a[(row, col)], a[(255 - row, 255 - col)]);
            }
        }
    }

    #[test]
    fn beam_on_image_cases() {
        let mut cfg = cfg_256();
        assert!(cfg.beam_on_image());
        cfg.beam_center = (-50.0, 128.0);
        assert!(!cfg.beam_on_image());
        cfg.beam_center = (-0.4, 10.0);
        assert!(!cfg.beam_on_image());
        cfg.beam_center = (0.0, 0.0);
        assert!(cfg.beam_on_image());
        // invariant to wavelength/distance
        cfg.beam_center = (12.0, 12.0);
        let on = cfg.beam_on_image();
        cfg.wavelength_a = 2.0;
        cfg.sample_distance_mm = 333.0;
        assert_eq!(on, cfg.beam_on_image());
    }

    #[test]
    fn invalid_config_names_field() {
        let mut cfg = cfg_256();
        cfg.pixel_size_mm = -1.0;
        match build_qmap(&cfg) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "pixel_size_mm"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
