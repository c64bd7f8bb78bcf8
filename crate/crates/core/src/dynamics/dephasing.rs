//! Bath-free dephasing of the tested spin by the magnets' initial spread.

use crate::error::Result;
use crate::model::{field_frame, initial_magnet_dist, ApparatusParams, BlochState, MagnetGrid};

/// `tau_d = 1 / (sqrt(2N) g)`.
pub fn dephasing_time(a: &ApparatusParams) -> f64 {
    1.0 / ((2.0 * a.n as f64).sqrt() * a.g)
}

/// Single apparatus: `r_x, r_y` decay as `exp(-(t/tau_d)^2)`, `r_z` is untouched.
pub fn dephasing_single(t: f64, s: &BlochState, a: &ApparatusParams) -> BlochState {
    let x = t / dephasing_time(a);
    let f = (-x * x).exp();
    BlochState { rx: s.rx * f, ry: s.ry * f, rz: s.rz }
}

/// Two apparatuses: explicit sum over the joint grid of the precession about `u(m, m')`.
///
/// With `v = (u_z, 0, -u_x)` the components `C_v`, `C_y` rotate as
/// `C_v cos(wt) + C_y sin(wt)`, `C_y cos(wt) - C_v sin(wt)`; `C_u` is conserved.
pub fn dephasing_joint_numeric(
    t: f64,
    s: &BlochState,
    a: &ApparatusParams,
    ap: &ApparatusParams,
) -> Result<BlochState> {
    let grid = MagnetGrid::new(a.n)?;
    let grid_p = MagnetGrid::new(ap.n)?;
    let p0 = initial_magnet_dist(&grid);
    let p0p = initial_magnet_dist(&grid_p);
    let mut out = BlochState::mixed();
    for (i, &m) in grid.values().iter().enumerate() {
        for (j, &mp) in grid_p.values().iter().enumerate() {
            let p = p0[i] * p0p[j];
            let f = field_frame(m, mp, a, ap);
            let cu = f.ux * s.rx + f.uz * s.rz;
            let cv = f.uz * s.rx - f.ux * s.rz;
            let (sn, cs) = (f.w * t).sin_cos();
            let cv_t = cv * cs + s.ry * sn;
            let cy_t = s.ry * cs - cv * sn;
            // back to (x, z): C = C_u u + C_v v
            out.rx += p * (cu * f.ux + cv_t * f.uz);
            out.ry += p * cy_t;
            out.rz += p * (cu * f.uz - cv_t * f.ux);
        }
    }
    Ok(out)
}

/// Large-N limit: `r_x sqrt(N') g' / S`, `0`, `r_z sqrt(N) g / S` with `S = sqrt(N) g + sqrt(N') g'`.
pub fn dephasing_joint_asymptote(s: &BlochState, a: &ApparatusParams, ap: &ApparatusParams) -> BlochState {
    let z = (a.n as f64).sqrt() * a.g;
    let x = (ap.n as f64).sqrt() * ap.g;
    let sum = z + x;
    if sum == 0.0 {
        return *s;
    }
    BlochState { rx: s.rx * x / sum, ry: 0.0, rz: s.rz * z / sum }
}
