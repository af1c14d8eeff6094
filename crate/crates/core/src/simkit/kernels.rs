//! Per-pixel evaluation of the scattering-pattern kernels.
//!
//! Every kernel maps a `QMap` to a non-negative, finite intensity grid.
//! Amplitudes are unit-less; `NoiseSpec::exposure_scale` converts to counts.

use ndarray::Array2;

use super::{Anisotropy, LatticeSymmetry, LatticeTexture, ModuleSpec, PeakSpec};
use crate::geometry::QMap;

/// `sin(x)/x` with a series fallback near zero to avoid cancellation.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
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

/// Azimuthal modulation, peak value 1.
fn angular_envelope(phi: f64, aniso: Option<&Anisotropy>) -> f64 {
    match aniso {
        None => 1.0,
        Some(a) => (a.kappa * ((2.0 * (phi - a.phi0)).cos() - 1.0)).exp(),
    }
}

/// Shared parameters of ring-type kernels (Ring and Halo).
#[derive(Debug, Clone, Copy)]
pub struct RingParams<'a> {
    pub q0: f64,
    pub sigma_q: f64,
    pub amplitude: f64,
    pub anisotropy: Option<&'a Anisotropy>,
    pub n_orders: usize,
    pub order_decay: f64,
}

/// Gaussian ridge(s) at `n q0` with geometric order decay and optional
/// azimuthal anisotropy.
pub fn eval_ring(params: &RingParams, qmap: &QMap) -> Array2<f64> {
    let mut out = Array2::zeros(qmap.q.raw_dim());
    let two_sigma2 = 2.0 * params.sigma_q * params.sigma_q;
    for ((idx, &q), &phi) in qmap.q.indexed_iter().zip(qmap.phi.iter()) {
        let a = angular_envelope(phi, params.anisotropy);
        let mut acc = 0.0;
        let mut order_amp = params.amplitude;
        for n in 1..=params.n_orders {
            let dq = q - n as f64 * params.q0;
            acc += order_amp * (-dq * dq / two_sigma2).exp();
            order_amp *= params.order_decay;
        }
        out[idx] = acc * a;
    }
    out
}

/// `amplitude * max(q, q_floor)^(-power)`: finite power-law scattering
/// concentrated at the beam center.
pub fn eval_diffuse_low(amplitude: f64, power: f64, q_floor: f64, qmap: &QMap) -> Array2<f64> {
    qmap.q.mapv(|q| amplitude * q.max(q_floor).powf(-power))
}

/// `amplitude * sigmoid((q - q_onset) / softness)`.
pub fn eval_diffuse_high(amplitude: f64, q_onset: f64, softness: f64, qmap: &QMap) -> Array2<f64> {
    qmap.q
        .mapv(|q| amplitude / (1.0 + (-(q - q_onset) / softness).exp()))
}

/// Normalized sphere scattering amplitude
/// `F(q, R) = 3 (sin(qR) - qR cos(qR)) / (qR)^3`, with `F(0) = 1`.
pub fn sphere_form_factor(q: f64, radius_a: f64) -> f64 {
    let x = q * radius_a;
    if x.abs() < 1e-3 {
        // series: 1 - x^2/10 + x^4/280
        let x2 = x * x;
        1.0 - x2 / 10.0 + x2 * x2 / 280.0
    } else {
        3.0 * (x.sin() - x * x.cos()) / (x * x * x)
    }
}

/// `<F^2>` averaged over a Gaussian radius distribution truncated at
/// `R +- 3 sigma_R` (Simpson quadrature, 33 nodes).
pub fn sphere_intensity(q: f64, radius_a: f64, polydispersity: f64) -> f64 {
    let sigma_r = polydispersity * radius_a;
    if sigma_r == 0.0 {
        let f = sphere_form_factor(q, radius_a);
        return f * f;
    }
    const INTERVALS: usize = 32; // 33 nodes
    let lo = radius_a - 3.0 * sigma_r;
    let hi = radius_a + 3.0 * sigma_r;
    let h = (hi - lo) / INTERVALS as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=INTERVALS {
        let r = lo + i as f64 * h;
        let w = if i == 0 || i == INTERVALS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let z = (r - radius_a) / sigma_r;
        let pdf = (-0.5 * z * z).exp();
        let f = sphere_form_factor(q, r.max(1e-9));
        num += w * pdf * f * f;
        den += w * pdf;
    }
    num / den
}

/// Polydisperse sphere form-factor intensity on the detector.
pub fn eval_sphere(radius_a: f64, amplitude: f64, polydispersity: f64, qmap: &QMap) -> Array2<f64> {
    qmap.q
        .mapv(|q| amplitude * sphere_intensity(q, radius_a, polydispersity))
}

/// Allowed reflection positions `q_hkl = (2 pi / a) sqrt(h^2 + k^2 + l^2)`,
/// deduplicated, ascending, truncated to `n_orders`.
///
/// Selection rules: BCC keeps `h + k + l` even; FCC keeps `h, k, l` all even
/// or all odd.
pub fn lattice_peak_positions(
    symmetry: LatticeSymmetry,
    lattice_const_a: f64,
    n_orders: usize,
) -> Vec<f64> {
    let mut s_values: Vec<u64> = Vec::new();
    let max_idx: i64 = 8;
    for h in 0..=max_idx {
        for k in 0..=max_idx {
            for l in 0..=max_idx {
                if h == 0 && k == 0 && l == 0 {
                    continue;
                }
                let allowed = match symmetry {
                    LatticeSymmetry::Bcc => (h + k + l) % 2 == 0,
                    LatticeSymmetry::Fcc => {
                        let e = (h % 2 == 0, k % 2 == 0, l % 2 == 0);
                        e == (true, true, true) || e == (false, false, false)
                    }
                };
                if allowed {
                    s_values.push((h * h + k * k + l * l) as u64);
                }
            }
        }
    }
    s_values.sort_unstable();
    s_values.dedup();
    let base = 2.0 * std::f64::consts::PI / lattice_const_a;
    s_values
        .into_iter()
        .take(n_orders)
        .map(|s| base * (s as f64).sqrt())
        .collect()
}

/// Lattice structure factor on the detector: Gaussian ridges at each allowed
/// reflection, Debye-Waller damped, textured as powder rings or discrete
/// spots.
#[allow(clippy::too_many_arguments)]
pub fn eval_lattice(
    symmetry: LatticeSymmetry,
    lattice_const_a: f64,
    amplitude: f64,
    peak_sigma_q: f64,
    n_orders: usize,
    texture: &LatticeTexture,
    dw_factor: f64,
    qmap: &QMap,
) -> Array2<f64> {
    let positions = lattice_peak_positions(symmetry, lattice_const_a, n_orders);
    let peak_amps: Vec<f64> = positions
        .iter()
        .map(|&qn| amplitude * (-dw_factor * qn * qn).exp())
        .collect();
    let two_sigma2 = 2.0 * peak_sigma_q * peak_sigma_q;
    let mut out = Array2::zeros(qmap.q.raw_dim());
    for ((idx, &q), &phi) in qmap.q.indexed_iter().zip(qmap.phi.iter()) {
        // the angular envelope is shared by all orders
        let ang = match texture {
            LatticeTexture::Powder => 1.0,
            LatticeTexture::Spots {
                n_spots,
                spot_sigma_phi,
                rotation_phi,
            } => {
                let mut a = 0.0;
                let step = std::f64::consts::TAU / *n_spots as f64;
                let two_sp2 = 2.0 * spot_sigma_phi * spot_sigma_phi;
                for k in 0..*n_spots {
                    let d = wrap_angle(phi - (rotation_phi + k as f64 * step));
                    a += (-d * d / two_sp2).exp();
                }
                a
            }
        };
        if ang == 0.0 {
            continue;
        }
        let mut radial = 0.0;
        for (qn, amp) in positions.iter().zip(&peak_amps) {
            let dq = q - qn;
            radial += amp * (-dq * dq / two_sigma2).exp();
        }
        out[idx] = radial * ang;
    }
    out
}

/// Orientationally-averaged intensity of a point arrangement:
/// `I(q) = sum_i sum_j sinc(q r_ij)` with unit scattering lengths.
pub fn debye_intensity(points: &[[f64; 3]], q_values: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            let dz = points[i][2] - points[j][2];
            distances.push((dx * dx + dy * dy + dz * dz).sqrt());
        }
    }
    q_values
        .iter()
        .map(|&q| {
            let mut acc = n as f64; // i == j terms: sinc(0) = 1
            for &r in &distances {
                acc += 2.0 * sinc(q * r);
            }
            acc.max(0.0)
        })
        .collect()
}

/// Debye point-cloud scattering mapped onto the detector via a 1-D radial
/// profile (`q_samples` points, linear in q) and per-pixel linear
/// interpolation.
pub fn eval_debye(
    points: &[[f64; 3]],
    strength: f64,
    q_samples: usize,
    qmap: &QMap,
) -> Array2<f64> {
    let (q_lo, q_hi) = qmap.q_range();
    let span = (q_hi - q_lo).max(f64::MIN_POSITIVE);
    let grid: Vec<f64> = (0..q_samples)
        .map(|i| q_lo + span * i as f64 / (q_samples - 1) as f64)
        .collect();
    let profile = debye_intensity(points, &grid);
    let step = span / (q_samples - 1) as f64;
    qmap.q.mapv(|q| {
        let t = ((q - q_lo) / step).clamp(0.0, (q_samples - 1) as f64);
        let i0 = (t.floor() as usize).min(q_samples - 2);
        let frac = t - i0 as f64;
        strength * (profile[i0] * (1.0 - frac) + profile[i0 + 1] * frac)
    })
}

/// Hand-placed Gaussian peaks in (q, phi).
pub fn eval_peaks(peaks: &[PeakSpec], qmap: &QMap) -> Array2<f64> {
    let mut out = Array2::zeros(qmap.q.raw_dim());
    for ((idx, &q), &phi) in qmap.q.indexed_iter().zip(qmap.phi.iter()) {
        let mut acc = 0.0;
        for p in peaks {
            let dq = q - p.q;
            let dphi = wrap_angle(phi - p.phi);
            acc += p.amplitude
                * (-dq * dq / (2.0 * p.sigma_q * p.sigma_q)).exp()
                * (-dphi * dphi / (2.0 * p.sigma_phi * p.sigma_phi)).exp();
        }
        out[idx] = acc;
    }
    out
}

/// Evaluates one module spec on the detector.
pub(super) fn eval_spec(spec: &ModuleSpec, qmap: &QMap) -> Array2<f64> {
    match spec {
        ModuleSpec::Ring {
            q0,
            sigma_q,
            amplitude,
            anisotropy,
            n_orders,
            order_decay,
        } => eval_ring(
            &RingParams {
                q0: *q0,
                sigma_q: *sigma_q,
                amplitude: *amplitude,
                anisotropy: anisotropy.as_ref(),
                n_orders: *n_orders,
                order_decay: *order_decay,
            },
            qmap,
        ),
        ModuleSpec::Halo {
            q0,
            sigma_q,
            amplitude,
            anisotropy,
        } => eval_ring(
            &RingParams {
                q0: *q0,
                sigma_q: *sigma_q,
                amplitude: *amplitude,
                anisotropy: anisotropy.as_ref(),
                n_orders: 1,
                order_decay: 1.0,
            },
            qmap,
        ),
        ModuleSpec::DiffuseLowQ { amplitude, power, q_floor } => {
            eval_diffuse_low(*amplitude, *power, *q_floor, qmap)
        }
        ModuleSpec::DiffuseHighQ {
            amplitude,
            q_onset,
            softness,
        } => eval_diffuse_high(*amplitude, *q_onset, *softness, qmap),
        ModuleSpec::SphereFf {
            radius_a,
            amplitude,
            polydispersity,
        } => eval_sphere(*radius_a, *amplitude, *polydispersity, qmap),
        ModuleSpec::Lattice {
            symmetry,
            lattice_const_a,
            amplitude,
            peak_sigma_q,
            n_orders,
            texture,
            dw_factor,
        } => eval_lattice(
            *symmetry,
            *lattice_const_a,
            *amplitude,
            *peak_sigma_q,
            *n_orders,
            texture,
            *dw_factor,
            qmap,
        ),
        ModuleSpec::DebyeCloud {
            points,
            strength,
            q_samples,
        } => eval_debye(points, *strength, *q_samples, qmap),
        ModuleSpec::PeakSet { peaks } => eval_peaks(peaks, qmap),
    }
}
