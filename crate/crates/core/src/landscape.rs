//! Free-energy landscapes of one and two magnets coupled to the tested spin,
//! their minima, and the critical couplings `h_c` and `h_d`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{field_frame, ApparatusParams, MagnetGrid};

/// Default coupling step of the barrier scans.
pub const SCAN_STEP: f64 = 1e-3;

/// Which effective free energy is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Eq,
    Up,
    Down,
}

impl Branch {
    /// Spin projection `s` multiplying the coupling term.
    pub fn spin(self) -> f64 {
        match self {
            Branch::Eq => 0.0,
            Branch::Up => 0.5,
            Branch::Down => -0.5,
        }
    }
}

fn check_open(m: f64) -> Result<()> {
    if m.is_finite() && m.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("free energy needs |m| < 1, got m = {m}")))
    }
}

/// `x ln x` with the limit 0 at `x = 0`.
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entropic part `(ln((1-m^2)/4) + m ln((1+m)/(1-m))) / 2`, valid on the closed interval.
fn entropy_term(m: f64) -> f64 {
    0.5 * (xlogx(1.0 + m) + xlogx(1.0 - m)) - std::f64::consts::LN_2
}

/// `F_eq(m) = H_M(m) - T ln G(m)` in Stirling form, without the constant `-ln(2 pi N)/2`.
pub fn free_energy_eq(m: f64, a: &ApparatusParams) -> Result<f64> {
    check_open(m)?;
    let n = a.n as f64;
    let x = m.abs();
    Ok(a.magnet_energy(x) + n / (2.0 * a.beta) * (((1.0 - x * x) / 4.0).ln() + x * ((1.0 + x) / (1.0 - x)).ln()))
}

/// `F_eq` continued to `m = +-1` by its one-sided limits.
pub fn free_energy_eq_closed(m: f64, a: &ApparatusParams) -> f64 {
    let m = m.abs().min(1.0);
    a.magnet_energy(m) + a.n as f64 / a.beta * entropy_term(m)
}

/// `(1/N) dF_eq/dm = -J2 m - J4 m^3 + T artanh m`.
pub fn free_energy_eq_slope(m: f64, a: &ApparatusParams) -> Result<f64> {
    check_open(m)?;
    Ok(-a.j2 * m - a.j4 * m.powi(3) + m.atanh() / a.beta)
}

/// `F_i(m) = -s_i N g m + F_eq(m)`.
pub fn free_energy_single(m: f64, a: &ApparatusParams, branch: Branch) -> Result<f64> {
    Ok(-branch.spin() * a.n as f64 * a.g * m + free_energy_eq(m, a)?)
}

/// `F_i(m, m') = -s_i w(m, m') + F_eq(m) + F_eq'(m')`.
pub fn free_energy_joint(m: f64, mp: f64, a: &ApparatusParams, ap: &ApparatusParams, branch: Branch) -> Result<f64> {
    let w = field_frame(m, mp, a, ap).w;
    Ok(-branch.spin() * w + free_energy_eq(m, a)? + free_energy_eq(mp, ap)?)
}

/// Ferromagnetic magnetization `m_F`: the largest positive root of
/// `T artanh m = J2 m + J4 m^3`, or 0 when the magnet has no ordered phase.
pub fn ferro_magnetization(a: &ApparatusParams) -> f64 {
    // with m = tanh y the root condition is smooth in y and the approach to 1 is resolved
    let t = a.temperature();
    let f = |y: f64| {
        let m = y.tanh();
        t * y - a.j2 * m - a.j4 * m.powi(3)
    };
    let dy = 1e-3;
    let y_max = 25.0;
    let mut y = y_max;
    if f(y) <= 0.0 {
        return 1.0;
    }
    while y > dy {
        let y_lo = y - dy;
        let lo = f(y_lo);
        if lo < 0.0 {
            let (mut a_, mut b_) = (y_lo, y);
            for _ in 0..200 {
                let mid = 0.5 * (a_ + b_);
                if f(mid) < 0.0 {
                    a_ = mid;
                } else {
                    b_ = mid;
                }
                if b_ - a_ < 1e-15 {
                    break;
                }
            }
            return (0.5 * (a_ + b_)).tanh();
        }
        y = y_lo;
    }
    0.0
}

/// Free energy of one magnet tabulated on its grid.
#[derive(Debug, Clone)]
pub struct Landscape1D {
    pub grid: MagnetGrid,
    pub f: Vec<f64>,
    pub branch: Branch,
    pub g_eff: f64,
}

impl Landscape1D {
    pub fn new(a: &ApparatusParams, branch: Branch) -> Result<Self> {
        let grid = MagnetGrid::new(a.n)?;
        let n = a.n as f64;
        let f = grid.values().iter().map(|&m| -branch.spin() * n * a.g * m + free_energy_eq_closed(m, a)).collect();
        Ok(Self { grid, f, branch, g_eff: a.g })
    }
}

/// Joint free energy tabulated on the `(m, m')` grid, row-major in `m`.
#[derive(Debug, Clone)]
pub struct Landscape2D {
    pub grid: MagnetGrid,
    pub grid_p: MagnetGrid,
    pub f: Vec<f64>,
    pub branch: Branch,
}

impl Landscape2D {
    /// Endpoints use the one-sided limits of `F_eq`.
    pub fn new(a: &ApparatusParams, ap: &ApparatusParams, branch: Branch) -> Result<Self> {
        let grid = MagnetGrid::new(a.n)?;
        let grid_p = MagnetGrid::new(ap.n)?;
        let feq: Vec<f64> = grid.values().iter().map(|&m| free_energy_eq_closed(m, a)).collect();
        let feqp: Vec<f64> = grid_p.values().iter().map(|&m| free_energy_eq_closed(m, ap)).collect();
        let mut f = Vec::with_capacity(grid.len() * grid_p.len());
        for (i, &m) in grid.values().iter().enumerate() {
            for (j, &mp) in grid_p.values().iter().enumerate() {
                let w = field_frame(m, mp, a, ap).w;
                f.push(-branch.spin() * w + feq[i] + feqp[j]);
            }
        }
        Ok(Self { grid, grid_p, f, branch })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.grid_p.len() + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Para,
    Ferro,
}

fn phase_of(m: f64) -> Phase {
    if m.abs() > 0.5 {
        Phase::Ferro
    } else {
        Phase::Para
    }
}

/// A grid-local minimum of a 2D landscape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub m: f64,
    pub mp: f64,
    pub f: f64,
    pub phase_m: Phase,
    pub phase_mp: Phase,
}

/// Grid-local minima over the 4-neighbourhood.
///
/// Ties between adjacent minimal points (e.g. the two grid points straddling
/// `m = 0` when N is odd) are merged into one point at their centroid.
pub fn locate_minima(l: &Landscape2D) -> Vec<StationaryPoint> {
    let (r, c) = (l.grid.len(), l.grid_p.len());
    let scale = l.f.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let neighbours = |i: usize, j: usize| {
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push((i - 1, j));
        }
        if i + 1 < r {
            out.push((i + 1, j));
        }
        if j > 0 {
            out.push((i, j - 1));
        }
        if j + 1 < c {
            out.push((i, j + 1));
        }
        out
    };
    let mut is_min = vec![false; r * c];
    for i in 0..r {
        for j in 0..c {
            let v = l.at(i, j);
            is_min[i * c + j] = neighbours(i, j).iter().all(|&(a, b)| v <= l.at(a, b) + tol);
        }
    }
    let mut seen = vec![false; r * c];
    let mut out = Vec::new();
    for start in 0..r * c {
        if !is_min[start] || seen[start] {
            continue;
        }
        let mut stack = vec![(start / c, start % c)];
        seen[start] = true;
        let (mut sm, mut smp, mut count) = (0.0, 0.0, 0usize);
        let v0 = l.f[start];
        while let Some((i, j)) = stack.pop() {
            sm += l.grid.value(i);
            smp += l.grid_p.value(j);
            count += 1;
            for (a, b) in neighbours(i, j) {
                let k = a * c + b;
                if is_min[k] && !seen[k] && (l.f[k] - v0).abs() <= tol {
                    seen[k] = true;
                    stack.push((a, b));
                }
            }
        }
        let (m, mp) = (sm / count as f64, smp / count as f64);
        out.push(StationaryPoint { m, mp, f: v0, phase_m: phase_of(m), phase_mp: phase_of(mp) });
    }
    out
}

/// Smallest `k * step` for which `no_barrier(k * step)` holds, up to `g_max`.
fn first_passing(step: f64, g_max: f64, no_barrier: impl Fn(f64) -> bool) -> Option<f64> {
    let kmax = (g_max / step).ceil() as usize;
    (0..=kmax).map(|k| k as f64 * step).find(|&g| no_barrier(g))
}

/// Discrete forward differences of `f` along the grid points in `(0, m_F)` stay below `eps`.
fn monotone_on(grid: &MagnetGrid, m_f: f64, eps: f64, f: impl Fn(f64) -> f64) -> bool {
    let v = grid.values();
    v.windows(2).filter(|w| w[0] > 0.0 && w[1] < m_f).all(|w| f(w[1]) - f(w[0]) <= eps)
}

/// The two estimates of the single-apparatus critical coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalCoupling {
    /// Closed form, `None` outside its range of validity (J2 > 0 or T >= 3 J4 / 4).
    pub closed_form: Option<f64>,
    /// Inflection magnetization `m_c` of the closed form.
    pub m_c: Option<f64>,
    /// Smallest scanned `g` for which `F_up` has no barrier on `(0, m_F)`.
    pub scan: Option<f64>,
}

impl CriticalCoupling {
    /// Preferred value: the closed form when printed, the scan otherwise.
    pub fn value(&self) -> Option<f64> {
        self.closed_form.or(self.scan)
    }
}

/// Closed form `h_c = (T/2) ln((1+m_c)/(1-m_c))` with `2 m_c^2 = 1 - sqrt(1 - 4T/(3 J4))`.
pub fn critical_coupling_closed_form(a: &ApparatusParams) -> Result<(f64, f64)> {
    let t = a.temperature();
    if a.j2 != 0.0 {
        return Err(Error::UnsupportedRegime("closed-form h_c is only available for J2 = 0".into()));
    }
    if a.j4 <= 0.0 || t >= 0.75 * a.j4 {
        return Err(Error::UnsupportedRegime(format!(
            "closed-form h_c needs T < 3 J4 / 4, got T = {t}, J4 = {}",
            a.j4
        )));
    }
    let m_c = ((1.0 - (1.0 - 4.0 * t / (3.0 * a.j4)).sqrt()) / 2.0).sqrt();
    Ok((t / 2.0 * ((1.0 + m_c) / (1.0 - m_c)).ln(), m_c))
}

/// Barrier scan for `F_up` of one magnet with coupling step `step`.
pub fn critical_coupling_scan(a: &ApparatusParams, step: f64) -> Option<f64> {
    let grid = MagnetGrid::new(a.n).ok()?;
    let m_f = ferro_magnetization(a);
    if m_f <= 0.0 {
        return None;
    }
    let n = a.n as f64;
    let eps = 1e-9 * n;
    let g_max = 10.0 * (a.j2 + a.j4 + a.temperature());
    first_passing(step, g_max, |g| monotone_on(&grid, m_f, eps, |m| -0.5 * n * g * m + free_energy_eq_closed(m, a)))
}

/// Both `h_c` estimates for one apparatus.
pub fn critical_coupling_single(a: &ApparatusParams) -> Result<CriticalCoupling> {
    a.validate()?;
    let closed = critical_coupling_closed_form(a);
    if let Err(e @ Error::UnsupportedRegime(_)) = &closed {
        if a.j2 == 0.0 {
            return Err(e.clone());
        }
    }
    let (closed_form, m_c) = match closed {
        Ok((h, m)) => (Some(h), Some(m)),
        Err(_) => (None, None),
    };
    Ok(CriticalCoupling { closed_form, m_c, scan: critical_coupling_scan(a, SCAN_STEP) })
}

/// Estimates of the double-registration threshold `h_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointThreshold {
    /// `2 max(T - J2, T' - J2')`, floored at zero.
    pub closed_form: f64,
    /// Scan with the partner magnet fixed at full polarization.
    pub scan_full: Option<f64>,
    /// Same scan with the partner at its ferromagnetic value `m_F`.
    pub scan_ferro: Option<f64>,
}

/// Scan for the smallest coupling with no barrier in the joint up-branch landscape,
/// keeping the ratio `g'/g` of the inputs.
pub fn critical_coupling_joint_scan(
    a: &ApparatusParams,
    ap: &ApparatusParams,
    partner: impl Fn(&ApparatusParams) -> f64,
    step: f64,
) -> Option<f64> {
    let grid = MagnetGrid::new(a.n).ok()?;
    let grid_p = MagnetGrid::new(ap.n).ok()?;
    let (mf, mfp) = (ferro_magnetization(a), ferro_magnetization(ap));
    if mf <= 0.0 || mfp <= 0.0 {
        return None;
    }
    let ratio = if a.g > 0.0 { ap.g / a.g } else { 1.0 };
    let (pm, pmp) = (partner(ap), partner(a));
    let eps = 1e-9 * a.n.max(ap.n) as f64;
    let g_max = 10.0 * (a.j2 + a.j4 + a.temperature()).max(ap.j2 + ap.j4 + ap.temperature());
    first_passing(step, g_max, |g| {
        let a_g = a.with_coupling(g);
        let ap_g = ap.with_coupling(g * ratio);
        // A(m): slope along m at m' fixed; F_eq'(m') is a constant there and drops out
        let along_m =
            monotone_on(&grid, mf, eps, |m| -0.5 * field_frame(m, pm, &a_g, &ap_g).w + free_energy_eq_closed(m, &a_g));
        let along_mp = monotone_on(&grid_p, mfp, eps, |mp| {
            -0.5 * field_frame(pmp, mp, &a_g, &ap_g).w + free_energy_eq_closed(mp, &ap_g)
        });
        along_m && along_mp
    })
}

/// Closed-form `h_d` together with the `m' = 1` and `m' = m_F` scans.
pub fn critical_coupling_joint(a: &ApparatusParams, ap: &ApparatusParams) -> Result<JointThreshold> {
    a.validate()?;
    ap.validate()?;
    let closed_form = (2.0 * (a.temperature() - a.j2).max(ap.temperature() - ap.j2)).max(0.0);
    Ok(JointThreshold {
        closed_form,
        scan_full: critical_coupling_joint_scan(a, ap, |_| 1.0, SCAN_STEP),
        scan_ferro: critical_coupling_joint_scan(a, ap, ferro_magnetization, SCAN_STEP),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    None,
    One,
    Both,
}

/// Threshold values, the predicted regime, and the up-branch minima at the given couplings.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub h_c: f64,
    pub h_c_scan: Option<f64>,
    pub h_c_prime: f64,
    pub h_d: f64,
    pub h_d_scan: Option<f64>,
    pub h_d_scan_ferro: Option<f64>,
    pub regime: Regime,
    /// Set when a coupling is within tolerance of a threshold or between the two `h_c` estimates.
    pub boundary: bool,
    /// Set when `g != g'`; the classification is then conservative.
    pub unequal_couplings: bool,
    pub minima: Vec<StationaryPoint>,
}

/// Classifies the registration regime for couplings `(g, g')`.
///
/// `g`, `g'` override the couplings stored in the parameter sets.
pub fn classify_regime(g: f64, gp: f64, a: &ApparatusParams, ap: &ApparatusParams) -> Result<RegimeReport> {
    let a = a.with_coupling(g);
    let ap = ap.with_coupling(gp);
    a.validate()?;
    ap.validate()?;
    let hc = critical_coupling_single(&a)?;
    let hcp = critical_coupling_single(&ap)?;
    let h_c = hc.value().ok_or_else(|| Error::UnsupportedRegime("magnet has no ferromagnetic phase".into()))?;
    let h_c_prime =
        hcp.value().ok_or_else(|| Error::UnsupportedRegime("partner magnet has no ferromagnetic phase".into()))?;
    let hd = critical_coupling_joint(&a, &ap)?;
    let h_d = hd.closed_form;

    let regime = if g < h_c && gp < h_c_prime {
        Regime::None
    } else if g.min(gp) >= h_d {
        Regime::Both
    } else {
        Regime::One
    };

    let tol = SCAN_STEP;
    let near = |x: f64, h: f64| (x - h).abs() <= tol;
    let between = |x: f64, c: &CriticalCoupling| match (c.closed_form, c.scan) {
        (Some(u), Some(v)) => x >= u.min(v) && x <= u.max(v),
        _ => false,
    };
    let boundary =
        near(g, h_c) || near(gp, h_c_prime) || near(g, h_d) || near(gp, h_d) || between(g, &hc) || between(gp, &hcp);

    let minima = locate_minima(&Landscape2D::new(&a, &ap, Branch::Up)?);
    Ok(RegimeReport {
        h_c,
        h_c_scan: hc.scan,
        h_c_prime,
        h_d,
        h_d_scan: hd.scan_full,
        h_d_scan_ferro: hd.scan_ferro,
        regime,
        boundary,
        unequal_couplings: g != gp,
        minima,
    })
}
