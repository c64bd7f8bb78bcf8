//! Shared data model: the tested spin, apparatus parameters, magnetization
//! grids and the joint (P, C_u) field over the two magnetizations.
//!
//! Spin expectations are Bloch components `r = <sigma>` in `[-1, 1]`. Energies
//! are in the units of the apparatus couplings and `hbar = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Slack allowed on the Bloch-ball constraint.
pub const BLOCH_TOL: f64 = 1e-12;

/// Qubit state as the vector of Pauli expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl BlochState {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Result<Self> {
        let s = Self { rx, ry, rz };
        s.validate()?;
        Ok(s)
    }

    pub const fn mixed() -> Self {
        Self { rx: 0.0, ry: 0.0, rz: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rx.is_finite() && self.ry.is_finite() && self.rz.is_finite()) {
            return Err(invalid("Bloch components must be finite"));
        }
        let n2 = self.norm_sqr();
        if n2 > 1.0 + BLOCH_TOL {
            return Err(invalid(format!("Bloch vector norm^2 {n2} exceeds 1")));
        }
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.rx * self.rx + self.ry * self.ry + self.rz * self.rz
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

/// One magnet + bath parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApparatusParams {
    /// Number of spins in the magnet.
    pub n: usize,
    pub j2: f64,
    pub j4: f64,
    /// System-magnet coupling.
    pub g: f64,
    /// Dimensionless magnet-bath coupling.
    pub gamma: f64,
    /// Inverse bath temperature.
    pub beta: f64,
    /// Debye cutoff frequency of the bath.
    pub cutoff: f64,
}

impl ApparatusParams {
    /// Builds a parameter set with the default cutoff `1000 * max(J2 + J4, g)`.
    pub fn new(n: usize, j2: f64, j4: f64, g: f64, gamma: f64, beta: f64) -> Result<Self> {
        let p = Self { n, j2, j4, g, gamma, beta, cutoff: default_cutoff(&[j2 + j4, g]) };
        p.validate()?;
        Ok(p)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Result<Self> {
        self.cutoff = cutoff;
        self.validate()?;
        Ok(self)
    }

    pub fn with_coupling(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("spin count N must be positive"));
        }
        let finite = [self.j2, self.j4, self.g, self.gamma, self.beta, self.cutoff].iter().all(|v| v.is_finite());
        if !finite {
            return Err(invalid("apparatus parameters must be finite"));
        }
        if self.j2 < 0.0 || self.j4 < 0.0 {
            return Err(invalid("couplings J2, J4 must be non-negative"));
        }
        if self.g < 0.0 {
            return Err(invalid("system-magnet coupling g must be non-negative"));
        }
        if self.gamma <= 0.0 || self.beta <= 0.0 || self.cutoff <= 0.0 {
            return Err(invalid("gamma, beta and cutoff must be positive"));
        }
        if self.j4 > 0.0 && self.j2 >= 3.0 * self.j4 {
            return Err(invalid(format!(
                "J2 = {} must stay below 3 J4 = {} (first-order regime)",
                self.j2,
                3.0 * self.j4
            )));
        }
        Ok(())
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    /// Magnet energy scale used for the registration time unit.
    pub fn energy_scale(&self) -> f64 {
        if self.j4 > 0.0 {
            self.j4
        } else if self.j2 > 0.0 {
            self.j2
        } else {
            1.0
        }
    }

    /// Registration time unit `tau = 1 / (gamma J)`.
    pub fn tau(&self) -> f64 {
        1.0 / (self.gamma * self.energy_scale())
    }

    /// Magnet energy `H_M(m)`.
    pub fn magnet_energy(&self, m: f64) -> f64 {
        let n = self.n as f64;
        -self.j2 * n * m * m / 2.0 - self.j4 * n * m.powi(4) / 4.0
    }
}

/// `1000 * max(scales)`, falling back to 1000 when every scale vanishes.
pub fn default_cutoff(scales: &[f64]) -> f64 {
    let s = scales.iter().cloned().fold(0.0_f64, f64::max);
    1000.0 * if s > 0.0 { s } else { 1.0 }
}

/// Sets a common cutoff on both apparatuses, `1000 * max(J2 + J4, J2' + J4', g, g')`.
pub fn harmonize_cutoff(a: &mut ApparatusParams, ap: &mut ApparatusParams) {
    let c = default_cutoff(&[a.j2 + a.j4, ap.j2 + ap.j4, a.g, ap.g]);
    a.cutoff = c;
    ap.cutoff = c;
}

/// Eigenvalues `m_i = -1 + 2i/N` of the magnetization with their log-degeneracies.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetGrid {
    n: usize,
    values: Vec<f64>,
    log_g: Vec<f64>,
}

impl MagnetGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid needs N >= 1"));
        }
        let lf = log_factorials(n);
        let nf = n as f64;
        let values = (0..=n)
            // (2i - N)/N keeps the grid exactly antisymmetric and the endpoints at +-1
            .map(|i| (2.0 * i as f64 - nf) / nf)
            .collect();
        // mirrored so that ln G(m) = ln G(-m) holds bit for bit
        let log_g = (0..=n)
            .map(|i| {
                let k = i.min(n - i);
                lf[n] - lf[k] - lf[n - k]
            })
            .collect();
        Ok(Self { n, values, log_g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_degeneracies(&self) -> &[f64] {
        &self.log_g
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Spacing `2/N` between neighbouring eigenvalues.
    pub fn spacing(&self) -> f64 {
        2.0 / self.n as f64
    }

    /// Index of a grid value; off-grid values are rejected.
    pub fn index_of(&self, m: f64) -> Result<usize> {
        if !m.is_finite() || m.abs() > 1.0 + 1e-12 {
            return Err(invalid(format!("m = {m} lies outside [-1, 1]")));
        }
        let pos = (m + 1.0) * self.n as f64 / 2.0;
        let i = pos.round();
        if (pos - i).abs() > 1e-9 {
            return Err(invalid(format!("m = {m} is not on the grid of N = {}", self.n)));
        }
        Ok(i as usize)
    }
}

/// `ln k!` for `k = 0..=n`, by cumulative summation of `ln k`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `ln G(m)` with `G(m) = N! / ((N(1+m)/2)! (N(1-m)/2)!)`, from exact log-factorials.
pub fn degeneracy_log(n: usize, m: f64) -> Result<f64> {
    let grid = MagnetGrid::new(n)?;
    let i = grid.index_of(m)?;
    Ok(grid.log_g[i])
}

/// Stirling form `-ln(2 pi N)/2 - (N/2)(ln((1-m^2)/4) + m ln((1+m)/(1-m)))` of `ln G(m)`.
pub fn degeneracy_log_stirling(n: usize, m: f64) -> Result<f64> {
    if m.abs() >= 1.0 {
        return Err(Error::Domain(format!("Stirling form diverges at m = {m}")));
    }
    let nf = n as f64;
    Ok(-(2.0 * std::f64::consts::PI * nf).ln() / 2.0
        - nf / 2.0 * (((1.0 - m * m) / 4.0).ln() + m * ((1.0 + m) / (1.0 - m)).ln()))
}

/// Exact paramagnetic distribution `P0(m) = G(m) / 2^N`.
pub fn initial_magnet_dist(grid: &MagnetGrid) -> Vec<f64> {
    let ln2n = grid.n as f64 * std::f64::consts::LN_2;
    let mut p: Vec<f64> = grid.log_g.iter().map(|lg| (lg - ln2n).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Large-N Gaussian density `sqrt(N / 2 pi) exp(-N m^2 / 2)`, per unit of m.
///
/// Grid probabilities are approximately this density times the spacing `2/N`.
pub fn gaussian_magnet_density(n: usize, m: f64) -> f64 {
    let nf = n as f64;
    (nf / (2.0 * std::f64::consts::PI)).sqrt() * (-nf * m * m / 2.0).exp()
}

/// Magnitude and direction of the effective field the magnets exert on the spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldFrame {
    pub w: f64,
    pub ux: f64,
    pub uz: f64,
}

/// `w = |(N g m) z + (N' g' m') x|` and `u` its unit direction; `u = z` when `w = 0`.
pub fn field_frame(m: f64, mp: f64, a: &ApparatusParams, ap: &ApparatusParams) -> FieldFrame {
    let z = a.n as f64 * a.g * m;
    let x = ap.n as f64 * ap.g * mp;
    let w = z.hypot(x);
    if w == 0.0 {
        FieldFrame { w: 0.0, ux: 0.0, uz: 1.0 }
    } else {
        FieldFrame { w, ux: x / w, uz: z / w }
    }
}

/// The pair of real fields `(P, C_u)` over the joint magnetization grid.
///
/// `P` is the joint distribution of `(m, m')` and `C_u` the correlation of the
/// spin component along the local field direction. Storage is row-major with
/// `m` as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct JointField {
    pub grid: MagnetGrid,
    pub grid_p: MagnetGrid,
    pub p: Vec<f64>,
    pub cu: Vec<f64>,
    pub t: f64,
}

impl JointField {
    pub fn zeros(grid: MagnetGrid, grid_p: MagnetGrid) -> Self {
        let len = grid.len() * grid_p.len();
        Self { grid, grid_p, p: vec![0.0; len], cu: vec![0.0; len], t: 0.0 }
    }

    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    pub fn cols(&self) -> usize {
        self.grid_p.len()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.grid_p.len() + j
    }

    pub fn mass(&self) -> f64 {
        self.p.iter().sum()
    }

    /// `P_up = (P + C_u) / 2`, the weight aligned with the local field.
    pub fn p_aligned(&self) -> Vec<f64> {
        self.p.iter().zip(&self.cu).map(|(p, c)| 0.5 * (p + c)).collect()
    }

    /// `P_down = (P - C_u) / 2`.
    pub fn p_anti(&self) -> Vec<f64> {
        self.p.iter().zip(&self.cu).map(|(p, c)| 0.5 * (p - c)).collect()
    }

    /// Largest violation of `|C_u| <= P`, zero when the bound holds.
    pub fn max_correlation_excess(&self) -> f64 {
        self.p.iter().zip(&self.cu).map(|(p, c)| (c.abs() - p).max(0.0)).fold(0.0, f64::max)
    }

    pub fn min_probability(&self) -> f64 {
        self.p.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Image under `(m, m') -> (-m, -m')`.
    pub fn reflected(&self) -> Self {
        let mut out = self.clone();
        let (r, c) = (self.rows(), self.cols());
        for i in 0..r {
            for j in 0..c {
                let src = self.idx(r - 1 - i, c - 1 - j);
                let dst = self.idx(i, j);
                out.p[dst] = self.p[src];
                out.cu[dst] = self.cu[src];
            }
        }
        out
    }

    pub fn marginal_m(&self) -> Vec<f64> {
        self.p.chunks(self.cols()).map(|row| row.iter().sum()).collect()
    }

    pub fn marginal_mp(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        for row in self.p.chunks(self.cols()) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out
    }

    /// Checks normalization to `tol` and `|C_u| <= P` to `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() > tol {
            return Err(Error::ModelInconsistency(format!("sum P = {mass}")));
        }
        let excess = self.max_correlation_excess();
        if excess > tol {
            return Err(Error::ModelInconsistency(format!("|C_u| exceeds P by {excess}")));
        }
        Ok(())
    }
}

/// Product paramagnetic initial state with `C_u = (u . r) P0 P0'`.
pub fn init_joint_field(s: &BlochState, a: &ApparatusParams, ap: &ApparatusParams) -> Result<JointField> {
    s.validate()?;
    a.validate()?;
    ap.validate()?;
    let grid = MagnetGrid::new(a.n)?;
    let grid_p = MagnetGrid::new(ap.n)?;
    let p0 = initial_magnet_dist(&grid);
    let p0p = initial_magnet_dist(&grid_p);
    let mut field = JointField::zeros(grid, grid_p);
    for (i, &m) in field.grid.values().to_vec().iter().enumerate() {
        for (j, &mp) in field.grid_p.values().to_vec().iter().enumerate() {
            let k = field.idx(i, j);
            let prob = p0[i] * p0p[j];
            let f = field_frame(m, mp, a, ap);
            field.p[k] = prob;
            field.cu[k] = (f.uz * s.rz + f.ux * s.rx) * prob;
        }
    }
    Ok(field)
}
