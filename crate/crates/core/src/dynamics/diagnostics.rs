//! Diagnostics of a registration snapshot: central mass, angular memory of the
//! initial spin direction, axis registration, and the down-branch radial slope.

use serde::Serialize;

use crate::model::JointField;

use super::outcome::QuadrantWeights;

/// Radius of the central (unregistered) region.
pub const CENTRAL_RADIUS: f64 = 0.2;

/// Per-snapshot summary stored with the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotDiagnostics {
    pub weights: QuadrantWeights,
    pub central_mass: f64,
    pub mass: f64,
}

/// Iterator over `(m, m', flat index)` of a field.
fn points(field: &JointField) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
    let cols = field.cols();
    field
        .grid
        .values()
        .iter()
        .enumerate()
        .flat_map(move |(i, &m)| field.grid_p.values().iter().enumerate().map(move |(j, &mp)| (m, mp, i * cols + j)))
}

/// Mass of `P` within `r = sqrt(m^2 + m'^2) < radius`.
pub fn central_mass(field: &JointField, radius: f64) -> f64 {
    points(field).filter(|&(m, mp, _)| m.hypot(mp) < radius).map(|(_, _, k)| field.p[k]).sum()
}

/// How the mass splits between registration by one, the other, both or neither magnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisRegistration {
    /// `|m| > threshold` with `|m'| < para_bound`.
    pub first_only: f64,
    /// `|m'| > threshold` with `|m| < para_bound`.
    pub second_only: f64,
    pub both: f64,
    pub other: f64,
}

pub fn axis_registration(field: &JointField, threshold: f64, para_bound: f64) -> AxisRegistration {
    let mut out = AxisRegistration { first_only: 0.0, second_only: 0.0, both: 0.0, other: 0.0 };
    for (m, mp, k) in points(field) {
        let p = field.p[k];
        let slot = if m.abs() > threshold && mp.abs() < para_bound {
            &mut out.first_only
        } else if mp.abs() > threshold && m.abs() < para_bound {
            &mut out.second_only
        } else if m.abs() > threshold && mp.abs() > threshold {
            &mut out.both
        } else {
            &mut out.other
        };
        *slot += p;
    }
    out
}

/// First angular harmonics of `P` on one ring `r_lo <= r < r_hi`, `theta = atan2(m', m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingMoment {
    pub r_lo: f64,
    pub r_hi: f64,
    pub mass: f64,
    pub cos_moment: f64,
    pub sin_moment: f64,
}

/// Straight-line fit of `ln P_down` against `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnisotropyReport {
    pub rings: Vec<RingMoment>,
    pub cos_moment: f64,
    pub sin_moment: f64,
    pub central_mass: f64,
    pub down_slope: Option<SlopeFit>,
}

/// Ring moments over `n_rings` equal rings out to `r = sqrt 2`, the central mass and
/// the down-branch slope fitted within `slope_radius`.
pub fn anisotropy_diagnostics(field: &JointField, n_rings: usize, slope_radius: f64) -> AnisotropyReport {
    let n_rings = n_rings.max(1);
    let r_max = std::f64::consts::SQRT_2 * (1.0 + 1e-12);
    let width = r_max / n_rings as f64;
    let mut rings: Vec<RingMoment> = (0..n_rings)
        .map(|b| RingMoment {
            r_lo: b as f64 * width,
            r_hi: (b + 1) as f64 * width,
            mass: 0.0,
            cos_moment: 0.0,
            sin_moment: 0.0,
        })
        .collect();
    let (mut c, mut s) = (0.0, 0.0);
    for (m, mp, k) in points(field) {
        let r = m.hypot(mp);
        let p = field.p[k];
        let (ct, st) = if r > 0.0 { (m / r, mp / r) } else { (0.0, 0.0) };
        let ring = &mut rings[((r / width) as usize).min(n_rings - 1)];
        ring.mass += p;
        ring.cos_moment += p * ct;
        ring.sin_moment += p * st;
        c += p * ct;
        s += p * st;
    }
    AnisotropyReport {
        rings,
        cos_moment: c,
        sin_moment: s,
        central_mass: central_mass(field, CENTRAL_RADIUS),
        down_slope: down_branch_slope(field, slope_radius),
    }
}

/// Least-squares slope of `ln((P - C_u)/2)` against `r` over grid points with `r < radius`.
///
/// Points whose down-branch weight is below `1e-13` of the local maximum are skipped.
pub fn down_branch_slope(field: &JointField, radius: f64) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = points(field)
        .map(|(m, mp, k)| (m.hypot(mp), 0.5 * (field.p[k] - field.cu[k])))
        .filter(|&(r, _)| r < radius)
        .collect();
    let top = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let data: Vec<(f64, f64)> = pts.into_iter().filter(|&(_, v)| v > 1e-13 * top).map(|(r, v)| (r, v.ln())).collect();
    let n = data.len() as f64;
    if data.len() < 3 {
        return None;
    }
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    let slope = sxy / sxx;
    Some(SlopeFit { slope, intercept: my - slope * mx, points: data.len() })
}
