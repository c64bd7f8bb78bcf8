//! Registration dynamics on the `(m, m')` grid.
//!
//! The reduced equations evolve `(P, C_u)`; the four-field system `(P, C_x, C_y, C_z)`
//! with precession and `kappa` terms is kept for short-time cross-checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{branch_frequencies, rate_coefficients, rate_coefficients_no_kappa, KernelParams};
use crate::error::{Error, Result};
use crate::landscape::ferro_magnetization;
use crate::model::{field_frame, ApparatusParams, BlochState, JointField, MagnetGrid};

use super::diagnostics::{central_mass, SnapshotDiagnostics};
use super::outcome::quadrant_weights;

/// Time-independent coefficients of the registration equations on one grid pair.
///
/// Unprimed arrays drive steps along `m`, primed (`*_p`) arrays steps along `m'`.
#[derive(Debug, Clone)]
pub struct RateTable {
    rows: usize,
    cols: usize,
    /// `gamma N / 2` and `gamma' N' / 2`.
    c: f64,
    c_p: f64,
    a_plus: Vec<f64>,
    a_minus: Vec<f64>,
    b_plus: Vec<f64>,
    b_minus: Vec<f64>,
    a_plus_p: Vec<f64>,
    a_minus_p: Vec<f64>,
    b_plus_p: Vec<f64>,
    b_minus_p: Vec<f64>,
    kappa: Option<[Vec<f64>; 4]>,
    pub ux: Vec<f64>,
    pub uz: Vec<f64>,
    pub w: Vec<f64>,
    /// `u(m, m') . u(m +- 2/N, m')`, zero where the neighbour is off the grid.
    dot_up: Vec<f64>,
    dot_dn: Vec<f64>,
    dot_up_p: Vec<f64>,
    dot_dn_p: Vec<f64>,
}

impl RateTable {
    /// Tabulates all coefficients; `with_kappa` adds the Matsubara terms used by [`full_rhs`].
    pub fn new(a: &ApparatusParams, ap: &ApparatusParams, with_kappa: bool) -> Result<Self> {
        a.validate()?;
        ap.validate()?;
        let grid = MagnetGrid::new(a.n)?;
        let grid_p = MagnetGrid::new(ap.n)?;
        let (rows, cols) = (grid.len(), grid_p.len());
        let len = rows * cols;
        let kp = KernelParams::from_apparatus(a)?;
        let kp_p = KernelParams::from_apparatus(ap)?;

        let mut ux = vec![0.0; len];
        let mut uz = vec![0.0; len];
        let mut w = vec![0.0; len];
        for (i, &m) in grid.values().iter().enumerate() {
            for (j, &mp) in grid_p.values().iter().enumerate() {
                let f = field_frame(m, mp, a, ap);
                let k = i * cols + j;
                ux[k] = f.ux;
                uz[k] = f.uz;
                w[k] = f.w;
            }
        }

        let coeff = |k: usize| -> Result<_> {
            let (i, j) = (k / cols, k % cols);
            let (m, mp) = (grid.value(i), grid_p.value(j));
            let (wp, wm) = branch_frequencies(m, uz[k], a);
            let (wp_p, wm_p) = branch_frequencies(mp, ux[k], ap);
            let wmax = wp.abs().max(wm.abs());
            let wmax_p = wp_p.abs().max(wm_p.abs());
            if 2.0 * wmax >= a.cutoff || 2.0 * wmax_p >= ap.cutoff {
                return Err(Error::Config(format!(
                    "bath cutoff must exceed all transition frequencies (2 omega = {})",
                    2.0 * wmax.max(wmax_p)
                )));
            }
            let rate = if with_kappa { rate_coefficients } else { rate_coefficients_no_kappa };
            Ok((rate(m, wp, wm, &kp), rate(mp, wp_p, wm_p, &kp_p)))
        };
        let coeffs: Vec<_> = (0..len).into_par_iter().map(coeff).collect::<Result<_>>()?;

        let pick = |f: fn(&(crate::bath::RateCoefficients, crate::bath::RateCoefficients)) -> f64| {
            coeffs.iter().map(f).collect::<Vec<f64>>()
        };
        let kappa = with_kappa.then(|| {
            [pick(|c| c.0.kappa_plus), pick(|c| c.0.kappa_minus), pick(|c| c.1.kappa_plus), pick(|c| c.1.kappa_minus)]
        });

        let dot = |k: usize, l: usize| ux[k] * ux[l] + uz[k] * uz[l];
        let mut dot_up = vec![0.0; len];
        let mut dot_dn = vec![0.0; len];
        let mut dot_up_p = vec![0.0; len];
        let mut dot_dn_p = vec![0.0; len];
        for i in 0..rows {
            for j in 0..cols {
                let k = i * cols + j;
                if i + 1 < rows {
                    dot_up[k] = dot(k, k + cols);
                }
                if i > 0 {
                    dot_dn[k] = dot(k, k - cols);
                }
                if j + 1 < cols {
                    dot_up_p[k] = dot(k, k + 1);
                }
                if j > 0 {
                    dot_dn_p[k] = dot(k, k - 1);
                }
            }
        }

        Ok(Self {
            rows,
            cols,
            c: a.gamma * a.n as f64 / 2.0,
            c_p: ap.gamma * ap.n as f64 / 2.0,
            a_plus: pick(|c| c.0.alpha_plus),
            a_minus: pick(|c| c.0.alpha_minus),
            b_plus: pick(|c| c.0.beta_plus),
            b_minus: pick(|c| c.0.beta_minus),
            a_plus_p: pick(|c| c.1.alpha_plus),
            a_minus_p: pick(|c| c.1.alpha_minus),
            b_plus_p: pick(|c| c.1.beta_plus),
            b_minus_p: pick(|c| c.1.beta_minus),
            kappa,
            ux,
            uz,
            w,
            dot_up,
            dot_dn,
            dot_up_p,
            dot_dn_p,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest total escape rate out of a grid point on either field branch.
    pub fn max_outflow(&self) -> f64 {
        (0..self.len())
            .map(|k| {
                let up = self.c * (self.a_plus[k] + self.b_plus[k] + self.a_minus[k] + self.b_minus[k])
                    + self.c_p * (self.a_plus_p[k] + self.b_plus_p[k] + self.a_minus_p[k] + self.b_minus_p[k]);
                let down = self.c * (self.a_plus[k] - self.b_plus[k] + self.a_minus[k] - self.b_minus[k])
                    + self.c_p * (self.a_plus_p[k] - self.b_plus_p[k] + self.a_minus_p[k] - self.b_minus_p[k]);
                up.max(down)
            })
            .fold(0.0, f64::max)
    }

    /// Reduced right-hand side, written into `dp`, `dcu`.
    pub fn rhs_into(&self, p: &[f64], cu: &[f64], scratch: &mut Scratch, dp: &mut [f64], dcu: &mut [f64]) {
        let len = self.len();
        let cols = self.cols;
        scratch.resize(len);
        let Scratch { f_plus, f_minus, g_plus, g_minus, f_plus_p, f_minus_p, g_plus_p, g_minus_p } = scratch;

        // fluxes: f = alpha P + beta C_u enters dP, g = alpha C_u + beta P enters dC_u
        (f_plus.par_iter_mut(), f_minus.par_iter_mut(), g_plus.par_iter_mut(), g_minus.par_iter_mut())
            .into_par_iter()
            .enumerate()
            .for_each(|(k, (fp, fm, gp, gm))| {
                *fp = self.a_plus[k] * p[k] + self.b_plus[k] * cu[k];
                *fm = self.a_minus[k] * p[k] + self.b_minus[k] * cu[k];
                *gp = self.a_plus[k] * cu[k] + self.b_plus[k] * p[k];
                *gm = self.a_minus[k] * cu[k] + self.b_minus[k] * p[k];
            });
        (f_plus_p.par_iter_mut(), f_minus_p.par_iter_mut(), g_plus_p.par_iter_mut(), g_minus_p.par_iter_mut())
            .into_par_iter()
            .enumerate()
            .for_each(|(k, (fp, fm, gp, gm))| {
                *fp = self.a_plus_p[k] * p[k] + self.b_plus_p[k] * cu[k];
                *fm = self.a_minus_p[k] * p[k] + self.b_minus_p[k] * cu[k];
                *gp = self.a_plus_p[k] * cu[k] + self.b_plus_p[k] * p[k];
                *gm = self.a_minus_p[k] * cu[k] + self.b_minus_p[k] * p[k];
            });

        let (fp, fm, gp, gm) = (&*f_plus, &*f_minus, &*g_plus, &*g_minus);
        let (fpp, fmp, gpp, gmp) = (&*f_plus_p, &*f_minus_p, &*g_plus_p, &*g_minus_p);
        let rows = self.rows;
        dp.par_chunks_mut(cols).zip(dcu.par_chunks_mut(cols)).enumerate().for_each(|(i, (dp_row, dcu_row))| {
            for j in 0..cols {
                let k = i * cols + j;
                let up = i + 1 < rows;
                let dn = i > 0;
                let up_p = j + 1 < cols;
                let dn_p = j > 0;
                let at = |v: &[f64], ok: bool, idx: usize| if ok { v[idx] } else { 0.0 };

                let along_m = (at(fp, up, k + cols) - fp[k]) + (at(fm, dn, k.wrapping_sub(cols)) - fm[k]);
                let along_mp = (at(fpp, up_p, k + 1) - fpp[k]) + (at(fmp, dn_p, k.wrapping_sub(1)) - fmp[k]);
                dp_row[j] = self.c * along_m + self.c_p * along_mp;

                // u . Delta{u g} with |u| = 1 reduces to (u . u_neighbour) g_neighbour - g
                let corr_m = (self.dot_up[k] * at(gp, up, k + cols) - gp[k])
                    + (self.dot_dn[k] * at(gm, dn, k.wrapping_sub(cols)) - gm[k]);
                let corr_mp = (self.dot_up_p[k] * at(gpp, up_p, k + 1) - gpp[k])
                    + (self.dot_dn_p[k] * at(gmp, dn_p, k.wrapping_sub(1)) - gmp[k]);
                dcu_row[j] = self.c * corr_m + self.c_p * corr_mp;
            }
        });
    }
}

/// Reusable flux buffers for [`RateTable::rhs_into`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    f_plus: Vec<f64>,
    f_minus: Vec<f64>,
    g_plus: Vec<f64>,
    g_minus: Vec<f64>,
    f_plus_p: Vec<f64>,
    f_minus_p: Vec<f64>,
    g_plus_p: Vec<f64>,
    g_minus_p: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, len: usize) {
        for v in [
            &mut self.f_plus,
            &mut self.f_minus,
            &mut self.g_plus,
            &mut self.g_minus,
            &mut self.f_plus_p,
            &mut self.f_minus_p,
            &mut self.g_plus_p,
            &mut self.g_minus_p,
        ] {
            v.resize(len, 0.0);
        }
    }
}

/// Time derivative `(dP/dt, dC_u/dt)` of the reduced registration equations.
pub fn registration_rhs(field: &JointField, a: &ApparatusParams, ap: &ApparatusParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let table = RateTable::new(a, ap, false)?;
    check_shape(field, &table)?;
    let mut dp = vec![0.0; table.len()];
    let mut dcu = vec![0.0; table.len()];
    table.rhs_into(&field.p, &field.cu, &mut Scratch::default(), &mut dp, &mut dcu);
    Ok((dp, dcu))
}

fn check_shape(field: &JointField, table: &RateTable) -> Result<()> {
    if field.rows() != table.rows || field.cols() != table.cols {
        return Err(Error::InvalidArgument(format!(
            "field grid {}x{} does not match apparatus grid {}x{}",
            field.rows(),
            field.cols(),
            table.rows,
            table.cols
        )));
    }
    Ok(())
}

/// The four real fields `(P, C_x, C_y, C_z)` over the joint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FullField {
    pub p: Vec<f64>,
    pub cx: Vec<f64>,
    pub cy: Vec<f64>,
    pub cz: Vec<f64>,
}

impl FullField {
    /// Product paramagnetic state with `C = r P0 P0'`.
    pub fn initial(s: &BlochState, a: &ApparatusParams, ap: &ApparatusParams) -> Result<Self> {
        let base = crate::model::init_joint_field(&BlochState::mixed(), a, ap)?;
        s.validate()?;
        Ok(Self {
            cx: base.p.iter().map(|p| s.rx * p).collect(),
            cy: base.p.iter().map(|p| s.ry * p).collect(),
            cz: base.p.iter().map(|p| s.rz * p).collect(),
            p: base.p,
        })
    }

    /// Embeds a reduced state: `C = C_u u`, no transverse part.
    pub fn lift(field: &JointField, table: &RateTable) -> Result<Self> {
        check_shape(field, table)?;
        Ok(Self {
            p: field.p.clone(),
            cx: (0..field.p.len()).map(|k| table.ux[k] * field.cu[k]).collect(),
            cy: vec![0.0; field.p.len()],
            cz: (0..field.p.len()).map(|k| table.uz[k] * field.cu[k]).collect(),
        })
    }

    /// Projection `C_u = u_x C_x + u_z C_z`.
    pub fn project(&self, table: &RateTable) -> Vec<f64> {
        (0..self.p.len()).map(|k| table.ux[k] * self.cx[k] + table.uz[k] * self.cz[k]).collect()
    }

    fn axpy(&self, h: f64, d: &FullField) -> FullField {
        let f = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + h * b).collect();
        FullField { p: f(&self.p, &d.p), cx: f(&self.cx, &d.cx), cy: f(&self.cy, &d.cy), cz: f(&self.cz, &d.cz) }
    }
}

/// Four-field right-hand side with precession at `w(m, m')` and the `kappa` couplings.
///
/// The terms from the second apparatus mirror those of the first with primed
/// coefficients and steps along `m'`.
pub fn full_rhs(f: &FullField, table: &RateTable) -> Result<FullField> {
    let kappa = table
        .kappa
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("rate table built without kappa coefficients".into()))?;
    let (rows, cols) = (table.rows, table.cols);
    let len = table.len();
    if f.p.len() != len {
        return Err(Error::InvalidArgument("field size does not match rate table".into()));
    }
    let (ux, uz) = (&table.ux, &table.uz);
    let s: Vec<f64> = (0..len).map(|k| ux[k] * f.cx[k] + uz[k] * f.cz[k]).collect();

    // brackets {.} of the four equations at point k for one direction and sign
    let brackets = |k: usize, a: f64, b: f64, kap: f64| -> [f64; 4] {
        [
            a * f.p[k] + b * s[k],
            b * ux[k] * f.p[k] + a * f.cx[k] + kap * f.cy[k] * uz[k],
            a * f.cy[k] - kap * (f.cz[k] * ux[k] + uz[k] * f.cx[k]),
            b * uz[k] * f.p[k] + a * f.cz[k] + kap * f.cy[k] * ux[k],
        ]
    };
    let mut out = FullField { p: vec![0.0; len], cx: vec![0.0; len], cy: vec![0.0; len], cz: vec![0.0; len] };
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let mut acc = [0.0; 4];
            // (prefactor, neighbour, alpha, beta, kappa) for Delta_+ and Delta_- on both axes
            let terms = [
                (table.c, (i + 1 < rows).then(|| k + cols), &table.a_plus, &table.b_plus, &kappa[0]),
                (table.c, (i > 0).then(|| k - cols), &table.a_minus, &table.b_minus, &kappa[1]),
                (table.c_p, (j + 1 < cols).then(|| k + 1), &table.a_plus_p, &table.b_plus_p, &kappa[2]),
                (table.c_p, (j > 0).then(|| k - 1), &table.a_minus_p, &table.b_minus_p, &kappa[3]),
            ];
            for (c, nb, a, b, kap) in terms {
                let here = brackets(k, a[k], b[k], kap[k]);
                let there = nb.map(|l| brackets(l, a[l], b[l], kap[l])).unwrap_or([0.0; 4]);
                for q in 0..4 {
                    acc[q] += c * (there[q] - here[q]);
                }
            }
            let w = table.w[k];
            out.p[k] = acc[0];
            out.cx[k] = acc[1] + w * uz[k] * f.cy[k];
            out.cy[k] = acc[2] - w * (uz[k] * f.cx[k] - ux[k] * f.cz[k]);
            out.cz[k] = acc[3] - w * ux[k] * f.cy[k];
        }
    }
    Ok(out)
}

/// Classical RK4 step of the four-field system.
pub fn full_rk4_step(f: &FullField, table: &RateTable, h: f64) -> Result<FullField> {
    let k1 = full_rhs(f, table)?;
    let k2 = full_rhs(&f.axpy(h / 2.0, &k1), table)?;
    let k3 = full_rhs(&f.axpy(h / 2.0, &k2), table)?;
    let k4 = full_rhs(&f.axpy(h, &k3), table)?;
    let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..x.len()).map(|k| x[k] + h / 6.0 * (a[k] + 2.0 * b[k] + 2.0 * c[k] + d[k])).collect()
    };
    Ok(FullField {
        p: comb(&f.p, &k1.p, &k2.p, &k3.p, &k4.p),
        cx: comb(&f.cx, &k1.cx, &k2.cx, &k3.cx, &k4.cx),
        cy: comb(&f.cy, &k1.cy, &k2.cy, &k3.cy, &k4.cy),
        cz: comb(&f.cz, &k1.cz, &k2.cz, &k3.cz, &k4.cz),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// Time-stepping policy. All times are in units of `tau = 1 / (gamma J)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Fixed step; when absent the step is `dt_factor / Theta` with `Theta` the largest escape rate.
    pub dt: Option<f64>,
    pub dt_factor: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub integrator: Integrator,
    pub allow_unequal_temperatures: bool,
    /// Negative probabilities below `-clip_tol` are clipped to zero.
    pub clip_tol: f64,
    /// Abort when `|sum P - 1|` exceeds this.
    pub norm_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: None,
            dt_factor: 0.01,
            t_end: 12.0,
            snapshot_times: Vec::new(),
            integrator: Integrator::Rk4,
            allow_unequal_temperatures: false,
            clip_tol: 1e-12,
            norm_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn until(t_end: f64) -> Self {
        Self { t_end, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end = {} must be finite and >= 0", self.t_end)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("dt = {dt} must be positive")));
            }
        }
        if !(self.dt_factor > 0.0 && self.dt_factor < 0.5) {
            return Err(Error::Config(format!("dt_factor = {} outside (0, 0.5)", self.dt_factor)));
        }
        if let Some(t) = self.snapshot_times.iter().find(|&&t| !(0.0..=self.t_end).contains(&t)) {
            return Err(Error::Config(format!("snapshot time {t} outside [0, t_end]")));
        }
        if !(self.clip_tol >= 0.0 && self.norm_tol > 0.0) {
            return Err(Error::Config("clip_tol and norm_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// A stored state together with its diagnostics.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Time in units of tau.
    pub t: f64,
    pub field: JointField,
    pub diagnostics: SnapshotDiagnostics,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    /// Step actually used, in units of tau.
    pub dt: f64,
    pub steps: usize,
    pub snapshots: Vec<Snapshot>,
    pub clip_events: usize,
    /// Set when the two baths have different temperatures.
    pub nonstandard: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory always holds the final state")
    }
}

/// `0.9 min(m_F, m_F')`, the magnetization beyond which a magnet counts as registered.
pub fn registration_threshold(a: &ApparatusParams, ap: &ApparatusParams) -> f64 {
    0.9 * ferro_magnetization(a).min(ferro_magnetization(ap))
}

/// Registration time unit for a pair of apparatuses, taken from the first one.
pub fn time_unit(a: &ApparatusParams) -> f64 {
    a.tau()
}

/// Integrates the reduced registration equations from `field`.
pub fn evolve(field: &JointField, a: &ApparatusParams, ap: &ApparatusParams, cfg: &SolverConfig) -> Result<Trajectory> {
    evolve_observed(field, a, ap, cfg, |_| {})
}

/// Like [`evolve`], handing every snapshot to `observe` as soon as it is taken, so
/// snapshots before a numerical abort are not lost.
pub fn evolve_observed(
    field: &JointField,
    a: &ApparatusParams,
    ap: &ApparatusParams,
    cfg: &SolverConfig,
    mut observe: impl FnMut(&Snapshot),
) -> Result<Trajectory> {
    cfg.validate()?;
    let nonstandard = a.beta != ap.beta;
    if nonstandard && !cfg.allow_unequal_temperatures {
        return Err(Error::Config(format!(
            "bath temperatures differ (beta = {}, beta' = {}); set allow_unequal_temperatures to proceed",
            a.beta, ap.beta
        )));
    }
    let table = RateTable::new(a, ap, false)?;
    check_shape(field, &table)?;
    let tau = time_unit(a);
    let theta = table.max_outflow();
    let dt = match cfg.dt {
        Some(dt) => dt * tau,
        None if theta > 0.0 => cfg.dt_factor / theta,
        None => tau,
    };
    if dt * theta >= 0.5 {
        return Err(Error::Config(format!("step {dt} fails the stability bound dt * Theta = {} < 0.5", dt * theta)));
    }
    let threshold = registration_threshold(a, ap);

    let mut targets: Vec<f64> = cfg.snapshot_times.clone();
    targets.push(cfg.t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let mut state = field.clone();
    let mut stepper = Stepper::new(&table, cfg.integrator);
    let mut snapshots = Vec::with_capacity(targets.len());
    let mut steps = 0;
    let mut clip_events = 0;
    let mut t_tau = state.t / tau;
    for target in targets {
        let span = (target - t_tau) * tau;
        if span > 0.0 {
            let n = (span / dt).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for s in 0..n {
                stepper.step(&mut state, h);
                steps += 1;
                let t_now = (t_tau * tau) + h * (s + 1) as f64;
                clip_events += enforce(&mut state, cfg, t_now)?;
            }
            t_tau = target;
        }
        state.t = t_tau * tau;
        let diagnostics = SnapshotDiagnostics {
            weights: quadrant_weights(&state, threshold)?,
            central_mass: central_mass(&state, super::diagnostics::CENTRAL_RADIUS),
            mass: state.mass(),
        };
        let snap = Snapshot { t: target, field: state.clone(), diagnostics };
        observe(&snap);
        snapshots.push(snap);
    }
    Ok(Trajectory { tau, dt: dt / tau, steps, snapshots, clip_events, nonstandard })
}

/// Clips negative probabilities and checks normalization; returns 1 when clipping happened.
fn enforce(state: &mut JointField, cfg: &SolverConfig, t: f64) -> Result<usize> {
    if state.p.iter().chain(&state.cu).any(|v| !v.is_finite()) {
        return Err(Error::NumericalAbort { t, reason: "non-finite value in field".into() });
    }
    let mut clipped = false;
    for (p, c) in state.p.iter_mut().zip(state.cu.iter_mut()) {
        if *p < -cfg.clip_tol {
            *p = 0.0;
            *c = 0.0;
            clipped = true;
        }
    }
    if clipped {
        let mass = state.mass();
        log::warn!("negative probability clipped at t = {t}; renormalizing mass {mass}");
        state.p.iter_mut().for_each(|v| *v /= mass);
        state.cu.iter_mut().for_each(|v| *v /= mass);
    }
    let drift = (state.mass() - 1.0).abs();
    if drift > cfg.norm_tol {
        return Err(Error::NumericalAbort { t, reason: format!("normalization drift {drift:e}") });
    }
    Ok(clipped as usize)
}

/// Explicit integrator with preallocated stage buffers.
pub struct Stepper<'a> {
    table: &'a RateTable,
    integrator: Integrator,
    scratch: Scratch,
    k: [(Vec<f64>, Vec<f64>); 4],
    tmp: (Vec<f64>, Vec<f64>),
}

impl<'a> Stepper<'a> {
    pub fn new(table: &'a RateTable, integrator: Integrator) -> Self {
        let z = || (vec![0.0; table.len()], vec![0.0; table.len()]);
        Self { table, integrator, scratch: Scratch::default(), k: [z(), z(), z(), z()], tmp: z() }
    }

    pub fn step(&mut self, state: &mut JointField, h: f64) {
        let t = self.table;
        match self.integrator {
            Integrator::Euler => {
                let (dp, dc) = &mut self.k[0];
                t.rhs_into(&state.p, &state.cu, &mut self.scratch, dp, dc);
                axpy_into(&mut state.p, h, dp);
                axpy_into(&mut state.cu, h, dc);
            }
            Integrator::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                let (tp, tc) = &mut self.tmp;
                t.rhs_into(&state.p, &state.cu, &mut self.scratch, &mut k1.0, &mut k1.1);
                stage(tp, &state.p, h / 2.0, &k1.0);
                stage(tc, &state.cu, h / 2.0, &k1.1);
                t.rhs_into(tp, tc, &mut self.scratch, &mut k2.0, &mut k2.1);
                stage(tp, &state.p, h / 2.0, &k2.0);
                stage(tc, &state.cu, h / 2.0, &k2.1);
                t.rhs_into(tp, tc, &mut self.scratch, &mut k3.0, &mut k3.1);
                stage(tp, &state.p, h, &k3.0);
                stage(tc, &state.cu, h, &k3.1);
                t.rhs_into(tp, tc, &mut self.scratch, &mut k4.0, &mut k4.1);
                combine(&mut state.p, h, &k1.0, &k2.0, &k3.0, &k4.0);
                combine(&mut state.cu, h, &k1.1, &k2.1, &k3.1, &k4.1);
            }
        }
        state.t += h;
    }
}

fn axpy_into(y: &mut [f64], h: f64, d: &[f64]) {
    y.par_iter_mut().zip(d).for_each(|(y, d)| *y += h * d);
}

fn stage(out: &mut [f64], y: &[f64], h: f64, d: &[f64]) {
    out.par_iter_mut().zip(y).zip(d).for_each(|((o, y), d)| *o = y + h * d);
}

fn combine(y: &mut [f64], h: f64, k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]) {
    y.par_iter_mut().enumerate().for_each(|(i, y)| {
        *y += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    });
}
