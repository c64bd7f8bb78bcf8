//! Quasi-Ohmic bath kernels and the flip rates, drift and diffusion they induce.
//!
//! Frequencies are in energy units (`hbar = 1`).

use crate::error::{invalid, Result};
use crate::model::ApparatusParams;

/// Below this `|beta omega|` the kernel and `coth` use their series limits.
const SMALL_X: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub beta: f64,
    pub cutoff: f64,
    /// Relative tail tolerance of the Matsubara sum in `K'`.
    pub matsubara_tol: f64,
}

impl KernelParams {
    pub fn new(beta: f64, cutoff: f64, matsubara_tol: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) || !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(invalid("kernel needs finite beta > 0 and cutoff > 0"));
        }
        if !(matsubara_tol > 0.0 && matsubara_tol <= 1e-6) {
            return Err(invalid(format!("matsubara_tol {matsubara_tol} outside (0, 1e-6]")));
        }
        Ok(Self { beta, cutoff, matsubara_tol })
    }

    pub fn from_apparatus(a: &ApparatusParams) -> Result<Self> {
        Self::new(a.beta, a.cutoff, 1e-10)
    }
}

/// `K(omega) = omega exp(-|omega|/Gamma) / (4 (exp(beta omega) - 1))`.
pub fn noise_kernel(omega: f64, kp: &KernelParams) -> f64 {
    let x = kp.beta * omega;
    let damp = (-omega.abs() / kp.cutoff).exp();
    if x.abs() < SMALL_X {
        damp / (4.0 * kp.beta)
    } else {
        omega * damp / (4.0 * x.exp_m1())
    }
}

/// Frequency-dependent part of `K'(omega)`:
/// `-(1/(2 beta)) sum_{n>=1} exp(-W_n/Gamma) W_n / (omega^2 + W_n^2)` with `W_n = 2 pi n / beta`.
///
/// The omega-independent constant is left out since only differences of `K'` enter the rates.
pub fn noise_kernel_prime(omega: f64, kp: &KernelParams) -> f64 {
    let w1 = 2.0 * std::f64::consts::PI / kp.beta;
    let o2 = omega * omega;
    let tol = kp.matsubara_tol;
    let mut sum = 0.0;
    let mut n = 1usize;
    loop {
        let wn = w1 * n as f64;
        let damp = (-wn / kp.cutoff).exp();
        sum += damp * wn / (o2 + wn * wn);
        // the remaining terms are bounded by Gamma/(2 pi n) * exp(-W_n/Gamma)
        let tail = kp.cutoff / (2.0 * std::f64::consts::PI * n as f64) * damp;
        if damp < tol && tail < tol * sum.abs() {
            break;
        }
        n += 1;
    }
    -sum / (2.0 * kp.beta)
}

/// Flip-rate combinations entering the registration equations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateCoefficients {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
}

/// Branch frequencies `omega_+- = J2 m + J4 m^3 +- g u` for one magnet,
/// with `u` the field-direction component it couples to.
pub fn branch_frequencies(m: f64, u: f64, a: &ApparatusParams) -> (f64, f64) {
    let base = a.j2 * m + a.j4 * m.powi(3);
    (base + a.g * u, base - a.g * u)
}

fn rate_coefficients_with(m: f64, wp: f64, wm: f64, kp: &KernelParams, prime: bool) -> RateCoefficients {
    let (kpp, kpm) = (noise_kernel(2.0 * wp, kp), noise_kernel(2.0 * wm, kp));
    let (kmp, kmm) = (noise_kernel(-2.0 * wp, kp), noise_kernel(-2.0 * wm, kp));
    let (up, dn) = (1.0 + m, 1.0 - m);
    let (kappa_plus, kappa_minus) = if prime && wp != wm {
        // K' is even, so the (1 - m) pair reuses the same two values
        let (qp, qm) = (noise_kernel_prime(2.0 * wp, kp), noise_kernel_prime(2.0 * wm, kp));
        (up * (qm - qp), dn * (qm - qp))
    } else {
        (0.0, 0.0)
    };
    RateCoefficients {
        alpha_plus: up * (kpp + kpm),
        alpha_minus: dn * (kmp + kmm),
        beta_plus: up * (kpp - kpm),
        beta_minus: dn * (kmp - kmm),
        kappa_plus,
        kappa_minus,
    }
}

/// The six combinations `alpha_+-`, `beta_+-`, `kappa_+-` at magnetization `m`.
pub fn rate_coefficients(m: f64, omega_plus: f64, omega_minus: f64, kp: &KernelParams) -> RateCoefficients {
    rate_coefficients_with(m, omega_plus, omega_minus, kp, true)
}

/// As [`rate_coefficients`] with `kappa_+-` left at zero, skipping the Matsubara sums.
pub fn rate_coefficients_no_kappa(m: f64, omega_plus: f64, omega_minus: f64, kp: &KernelParams) -> RateCoefficients {
    rate_coefficients_with(m, omega_plus, omega_minus, kp, false)
}

/// `x coth x`, with the series `1 + x^2/3` near zero.
pub fn x_coth_x(x: f64) -> f64 {
    if x.abs() < SMALL_X {
        1.0 + x * x / 3.0
    } else {
        x / x.tanh()
    }
}

/// Drift `v = gamma omega (1 - m coth(beta omega))` and diffusion
/// `w = gamma omega (coth(beta omega) - m)` for one branch frequency.
pub fn drift_diffusion(m: f64, omega: f64, a: &ApparatusParams) -> (f64, f64) {
    let oc = x_coth_x(a.beta * omega) / a.beta;
    (a.gamma * (omega - m * oc), a.gamma * (oc - m * omega))
}
