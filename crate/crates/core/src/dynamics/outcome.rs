//! Outcome probabilities read off the final magnet distribution, and the linear
//! response fit that turns them into the efficiencies `lambda`, `lambda'`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{init_joint_field, ApparatusParams, BlochState, JointField};

use super::registration::{evolve, SolverConfig};

/// Largest `|sum - 1|` accepted for a normalized outcome distribution.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Probabilities of the four joint outcomes `(eps, eps') in {+,-}^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeWeights {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl OutcomeWeights {
    pub fn new(pp: f64, pm: f64, mp: f64, mm: f64) -> Result<Self> {
        let w = Self { pp, pm, mp, mm };
        if w.as_array().iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("outcome probabilities must be finite and non-negative"));
        }
        let s = w.sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("outcome probabilities sum to {s}")));
        }
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    pub fn sum(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }

    /// Outcome signs in the order of [`Self::as_array`].
    pub const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
}

/// Raw probability mass in the four registered corners plus what is left elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrantWeights {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
    /// Mass outside all four corners (unregistered).
    pub residual: f64,
}

impl QuadrantWeights {
    pub fn registered(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    /// Corner weights conditioned on registration.
    pub fn conditional(&self) -> Result<OutcomeWeights> {
        let r = self.registered();
        if r <= 0.0 {
            return Err(Error::UndefinedConditional("no mass in any registered corner".into()));
        }
        OutcomeWeights::new(self.pp / r, self.pm / r, self.mp / r, self.mm / r)
    }
}

/// Sums `P` over `|m| > threshold` and `|m'| > threshold` per sign quadrant.
pub fn quadrant_weights(field: &JointField, threshold: f64) -> Result<QuadrantWeights> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("corner threshold {threshold} outside (0, 1)")));
    }
    let mut q = [0.0; 4];
    let mut total = 0.0;
    for (i, &m) in field.grid.values().iter().enumerate() {
        for (j, &mp) in field.grid_p.values().iter().enumerate() {
            let p = field.p[field.idx(i, j)];
            total += p;
            if m.abs() > threshold && mp.abs() > threshold {
                let slot = match (m > 0.0, mp > 0.0) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                q[slot] += p;
            }
        }
    }
    let registered: f64 = q.iter().sum();
    Ok(QuadrantWeights { pp: q[0], pm: q[1], mp: q[2], mm: q[3], residual: total - registered })
}

/// Corner weights observed for one initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponseRun {
    pub state: BlochState,
    pub weights: QuadrantWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseFit {
    pub lambda: f64,
    pub lambda_prime: f64,
    /// Root-mean-square misfit of the corner probabilities.
    pub rms_residual: f64,
    pub max_residual: f64,
    /// Set when `max_residual` exceeds [`LINEARITY_TOL`].
    pub nonlinear: bool,
    pub runs: Vec<ResponseRun>,
}

pub const LINEARITY_TOL: f64 = 1e-3;

/// Least-squares fit of `p = (1 + eps lambda r_z + eps' lambda' r_x) / 4` to observed corner weights.
pub fn fit_response(runs: &[ResponseRun]) -> Result<ResponseFit> {
    if runs.len() < 3 {
        return Err(invalid("response fit needs at least 3 initial states"));
    }
    // normal equations of the two-parameter linear model
    let (mut szz, mut sxx, mut szx, mut bz, mut bx) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for run in runs {
        let (rx, rz) = (run.state.rx, run.state.rz);
        for (p, (e, ep)) in run.weights.as_array().iter().zip(OutcomeWeights::SIGNS) {
            let y = 4.0 * p - 1.0;
            let (xz, xx) = (e * rz, ep * rx);
            szz += xz * xz;
            sxx += xx * xx;
            szx += xz * xx;
            bz += xz * y;
            bx += xx * y;
        }
    }
    let det = szz * sxx - szx * szx;
    if det.abs() <= 1e-12 * (szz * sxx).max(f64::MIN_POSITIVE) {
        return Err(invalid("initial states do not span the (r_x, r_z) plane"));
    }
    let lambda = (bz * sxx - bx * szx) / det;
    let lambda_prime = (bx * szz - bz * szx) / det;

    let mut sq = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut count = 0;
    for run in runs {
        for (p, (e, ep)) in run.weights.as_array().iter().zip(OutcomeWeights::SIGNS) {
            let model = 0.25 * (1.0 + e * lambda * run.state.rz + ep * lambda_prime * run.state.rx);
            let r = p - model;
            sq += r * r;
            max_residual = max_residual.max(r.abs());
            count += 1;
        }
    }
    Ok(ResponseFit {
        lambda,
        lambda_prime,
        rms_residual: (sq / count as f64).sqrt(),
        max_residual,
        nonlinear: max_residual > LINEARITY_TOL,
        runs: runs.to_vec(),
    })
}

/// Runs the registration for every initial state up to `cfg.t_end` and fits the response.
///
/// Uses the raw corner masses; unregistered mass shows up in the residual.
pub fn response_fit(
    a: &ApparatusParams,
    ap: &ApparatusParams,
    cfg: &SolverConfig,
    states: &[BlochState],
) -> Result<ResponseFit> {
    let runs = states
        .iter()
        .map(|s| {
            let field = init_joint_field(s, a, ap)?;
            let tr = evolve(&field, a, ap, cfg)?;
            Ok(ResponseRun { state: *s, weights: tr.last().diagnostics.weights })
        })
        .collect::<Result<Vec<_>>>()?;
    fit_response(&runs)
}
