//! The joint measurement as a four-outcome POVM preceded by a lossy channel,
//! plus outcome sampling and linear-inversion estimation of the spin state.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::dynamics::OutcomeWeights;
use crate::error::{invalid, Error, Result};
use crate::model::{ApparatusParams, BlochState};

const TOL: f64 = 1e-12;

/// One of the four joint outcomes `(eps, eps')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    PP,
    PM,
    MP,
    MM,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::PP, Outcome::PM, Outcome::MP, Outcome::MM];

    pub fn signs(self) -> (f64, f64) {
        OutcomeWeights::SIGNS[self as usize]
    }
}

/// Hermitian 2x2 operator `id I + x sigma_x + y sigma_y + z sigma_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Effect {
    pub id: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Effect {
    pub fn is_positive(&self) -> bool {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt() <= self.id + TOL
    }

    pub fn to_matrix(&self) -> [[Complex64; 2]; 2] {
        let c = Complex64::new;
        [[c(self.id + self.z, 0.0), c(self.x, -self.y)], [c(self.x, self.y), c(self.id - self.z, 0.0)]]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.id, self.x, self.y, self.z]
    }
}

/// Effects, channel contractions and final field directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementModel {
    /// Ordered `(++, +-, -+, --)`.
    pub effects: [Effect; 4],
    pub alpha_x: f64,
    pub alpha_z: f64,
    /// `(u_x, u_z)` of the final direction in the `(+, +)` quadrant.
    pub u_f: (f64, f64),
}

/// Unit directions `(eps' N' g', 0, eps N g) / norm` of the four effects.
fn final_frame(a: &ApparatusParams, ap: &ApparatusParams) -> Result<(f64, f64)> {
    let z = a.n as f64 * a.g;
    let x = ap.n as f64 * ap.g;
    let norm = z.hypot(x);
    if norm == 0.0 {
        return Err(invalid("POVM needs at least one nonzero coupling"));
    }
    Ok((x / norm, z / norm))
}

/// Rank-one effects `F = (I + u . sigma) / 4` along the four final directions.
pub fn povm_elements(a: &ApparatusParams, ap: &ApparatusParams) -> Result<[Effect; 4]> {
    let (ux, uz) = final_frame(a, ap)?;
    Ok(Outcome::ALL.map(|o| {
        let (e, ep) = o.signs();
        Effect { id: 0.25, x: 0.25 * ep * ux, y: 0.0, z: 0.25 * e * uz }
    }))
}

fn check_alpha(v: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} outside [0, 1]")))
    }
}

impl MeasurementModel {
    pub fn new(a: &ApparatusParams, ap: &ApparatusParams, alpha_x: f64, alpha_z: f64) -> Result<Self> {
        check_alpha(alpha_x, "alpha_x")?;
        check_alpha(alpha_z, "alpha_z")?;
        Ok(Self { effects: povm_elements(a, ap)?, alpha_x, alpha_z, u_f: final_frame(a, ap)? })
    }

    /// Model reproducing the efficiencies `lambda = alpha_z u_z`, `lambda' = alpha_x u_x`.
    pub fn from_efficiencies(
        a: &ApparatusParams,
        ap: &ApparatusParams,
        lambda: f64,
        lambda_prime: f64,
    ) -> Result<Self> {
        let (ux, uz) = final_frame(a, ap)?;
        let solve = |l: f64, u: f64, name: &str| -> Result<f64> {
            if l == 0.0 {
                return Ok(0.0);
            }
            if u == 0.0 {
                return Err(Error::ModelInconsistency(format!("{name} = {l} with a vanishing final direction")));
            }
            let alpha = l / u;
            if !(0.0..=1.0 + TOL).contains(&alpha) {
                return Err(Error::ModelInconsistency(format!("{name} = {l} needs channel contraction {alpha}")));
            }
            Ok(alpha.min(1.0))
        };
        let alpha_z = solve(lambda, uz, "lambda")?;
        let alpha_x = solve(lambda_prime, ux, "lambda'")?;
        Self::new(a, ap, alpha_x, alpha_z)
    }

    pub fn lambda(&self) -> f64 {
        self.alpha_z * self.u_f.1
    }

    pub fn lambda_prime(&self) -> f64 {
        self.alpha_x * self.u_f.0
    }

    /// Pure post-measurement direction of one outcome.
    pub fn direction(&self, o: Outcome) -> BlochState {
        let (e, ep) = o.signs();
        BlochState { rx: ep * self.u_f.0, ry: 0.0, rz: e * self.u_f.1 }
    }

    /// Completeness defect `|sum F - I|` in the Pauli basis.
    pub fn completeness_defect(&self) -> f64 {
        let mut s = [0.0; 4];
        for e in &self.effects {
            for (acc, v) in s.iter_mut().zip(e.as_array()) {
                *acc += v;
            }
        }
        (s[0] - 1.0).abs().max(s[1].abs()).max(s[2].abs()).max(s[3].abs())
    }
}

/// `(r_x, r_y, r_z) -> (alpha_x r_x, 0, alpha_z r_z)`.
pub fn lossy_channel(s: &BlochState, alpha_x: f64, alpha_z: f64) -> Result<BlochState> {
    check_alpha(alpha_x, "alpha_x")?;
    check_alpha(alpha_z, "alpha_z")?;
    Ok(BlochState { rx: alpha_x * s.rx, ry: 0.0, rz: alpha_z * s.rz })
}

/// Closed form `p = (1 + eps lambda r_z + eps' lambda' r_x) / 4`.
pub fn outcome_probabilities(s: &BlochState, model: &MeasurementModel) -> Result<OutcomeWeights> {
    s.validate()?;
    let (l, lp) = (model.lambda(), model.lambda_prime());
    let p = Outcome::ALL.map(|o| {
        let (e, ep) = o.signs();
        0.25 * (1.0 + e * l * s.rz + ep * lp * s.rx)
    });
    if let Some(bad) = p.iter().find(|&&v| v < -TOL) {
        return Err(Error::ModelInconsistency(format!("negative outcome probability {bad}")));
    }
    let p = p.map(|v| v.max(0.0));
    OutcomeWeights::new(p[0], p[1], p[2], p[3])
}

fn density_matrix(s: &BlochState) -> [[Complex64; 2]; 2] {
    Effect { id: 0.5, x: 0.5 * s.rx, y: 0.5 * s.ry, z: 0.5 * s.rz }.to_matrix()
}

fn mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// `Tr(C(rho) F)` evaluated with explicit 2x2 complex matrices.
pub fn outcome_probabilities_trace(s: &BlochState, model: &MeasurementModel) -> Result<[f64; 4]> {
    let rho = density_matrix(&lossy_channel(s, model.alpha_x, model.alpha_z)?);
    Ok(model.effects.map(|f| {
        let prod = mul(&rho, &f.to_matrix());
        (prod[0][0] + prod[1][1]).re
    }))
}

/// State after outcome `o`: `M rho M^dag / Tr(...)` with `M = sqrt(2) F`, as a Bloch vector.
pub fn post_measurement_state(o: Outcome, model: &MeasurementModel, s: &BlochState) -> Result<BlochState> {
    let rho = density_matrix(&lossy_channel(s, model.alpha_x, model.alpha_z)?);
    let f = model.effects[o as usize];
    let m =
        Effect { id: f.id * 2f64.sqrt(), x: f.x * 2f64.sqrt(), y: f.y * 2f64.sqrt(), z: f.z * 2f64.sqrt() }.to_matrix();
    // M is Hermitian, so M^dag = M
    let out = mul(&mul(&m, &rho), &m);
    let tr = (out[0][0] + out[1][1]).re;
    if tr <= TOL {
        return Err(Error::UndefinedConditional(format!("outcome {o:?} has zero probability")));
    }
    Ok(BlochState { rx: 2.0 * out[1][0].re / tr, ry: 2.0 * out[1][0].im / tr, rz: (out[0][0].re - out[1][1].re) / tr })
}

/// Multinomial counts of `n` outcomes, drawn as a chain of binomials from a seeded ChaCha8 stream.
pub fn sample_outcomes(p: &OutcomeWeights, n: u64, seed: u64) -> Result<[u64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = p.as_array();
    let mut counts = [0u64; 4];
    let mut left = n;
    let mut mass = 1.0;
    for k in 0..3 {
        if left == 0 {
            break;
        }
        let q = if mass > 0.0 { (probs[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, q).map_err(|e| invalid(format!("binomial parameters: {e}")))?;
        counts[k] = draw.sample(&mut rng);
        left -= counts[k];
        mass -= probs[k];
    }
    counts[3] = left;
    Ok(counts)
}

/// Linear-inversion estimate of `(r_x, r_z)` with binomial standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlochEstimate {
    pub rx: f64,
    pub rz: f64,
    pub se_rx: f64,
    pub se_rz: f64,
    pub n: u64,
}

pub fn estimate_bloch(counts: &[u64; 4], lambda: f64, lambda_prime: f64) -> Result<BlochEstimate> {
    if lambda == 0.0 || lambda_prime == 0.0 {
        return Err(Error::Unestimable(format!(
            "efficiencies lambda = {lambda}, lambda' = {lambda_prime} must both be nonzero"
        )));
    }
    if !(lambda > 0.0 && lambda_prime > 0.0) {
        return Err(invalid("efficiencies must be positive"));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(invalid("no samples"));
    }
    let nf = n as f64;
    let [pp, pm, mp, mm] = counts.map(|c| c as f64);
    let dz = ((pp + pm) - (mp + mm)) / nf;
    let dx = ((pp + mp) - (pm + mm)) / nf;
    // each sample contributes +-1 to D, so var(D) = (1 - D^2) / n
    Ok(BlochEstimate {
        rx: dx / lambda_prime,
        rz: dz / lambda,
        se_rx: ((1.0 - dx * dx).max(0.0) / nf).sqrt() / lambda_prime,
        se_rz: ((1.0 - dz * dz).max(0.0) / nf).sqrt() / lambda,
        n,
    })
}
