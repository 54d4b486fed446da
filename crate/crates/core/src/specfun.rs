//! Bessel and Hankel functions of orders 0 and 1 for complex argument, and
//! the radiating fundamental solution of the 2D Helmholtz equation.
//!
//! Two evaluation branches are used:
//!
//! - `|z| < 12`: ascending power series for `J0`, `J1` and the logarithmic
//!   series (with the Euler–Mascheroni constant) for `Y0`, `Y1`.
//! - `|z| >= 12`: Hankel's asymptotic expansion, truncated at its smallest
//!   term, for `H^(1)` and `H^(2)`; `J` and `Y` are recovered from them.
//!
//! Both branches agree to about `5e-11` of the envelope `|H^(1)(z)|` on the
//! crossover circle. The asymptotic branch assumes `Im(z) >= 0`; accuracy
//! degrades gracefully (it only loses digits relative to the growing
//! `H^(2)` part) for `Im(z)` beyond about 50.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::medium::Point;

/// Radius separating the series and asymptotic branches.
pub const CROSSOVER_RADIUS: f64 = 12.0;

/// Largest admissible `|z|`.
pub const MAX_ARGUMENT: f64 = 1e4;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `J0, J1, Y0, Y1` evaluated at the same argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselSet {
    pub j0: Complex64,
    pub j1: Complex64,
    pub y0: Complex64,
    pub y1: Complex64,
}

impl BesselSet {
    pub fn h0(&self) -> Complex64 {
        self.j0 + Complex64::i() * self.y0
    }

    pub fn h1(&self) -> Complex64 {
        self.j1 + Complex64::i() * self.y1
    }
}

fn check_argument(z: Complex64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("non-finite Bessel argument {z}")));
    }
    if z.norm() > MAX_ARGUMENT {
        return Err(Error::Domain(format!("|z| = {} exceeds the supported range {MAX_ARGUMENT}", z.norm())));
    }
    Ok(())
}

/// Power-series branch. Accurate for `|z| <= 12`; `z` must be nonzero
/// for the `Y` entries to be finite.
pub fn series(z: Complex64) -> BesselSet {
    let half = z * 0.5;
    let q = -(half * half);

    // t_k  = (-1)^k (z/2)^{2k}   / (k!)^2
    // tt_k = (-1)^k (z/2)^{2k+1} / (k! (k+1)!)
    let mut t = Complex64::new(1.0, 0.0);
    let mut tt = half;
    let mut j0 = Complex64::new(0.0, 0.0);
    let mut j1 = Complex64::new(0.0, 0.0);
    let mut y0_sum = Complex64::new(0.0, 0.0);
    let mut y1_sum = Complex64::new(0.0, 0.0);
    let mut harmonic = 0.0;
    let mut k = 0u32;
    loop {
        j0 += t;
        j1 += tt;
        if k >= 1 {
            y0_sum -= t * harmonic;
        }
        // psi(k+1) + psi(k+2) = -2 gamma + 2 H_k + 1/(k+1)
        let psi_pair = -2.0 * EULER_GAMMA + 2.0 * harmonic + 1.0 / (k as f64 + 1.0);
        y1_sum += tt * psi_pair;

        k += 1;
        let kf = k as f64;
        harmonic += 1.0 / kf;
        t *= q / (kf * kf);
        tt *= q / (kf * (kf + 1.0));
        let small_t = t.norm() <= 1e-18 * j0.norm().max(1e-300);
        let small_tt = tt.norm() <= 1e-18 * j1.norm().max(1e-300);
        if (k > 4 && small_t && small_tt) || k > 200 {
            break;
        }
    }

    if z == Complex64::new(0.0, 0.0) {
        let inf = Complex64::new(f64::NEG_INFINITY, 0.0);
        return BesselSet { j0, j1, y0: inf, y1: inf };
    }
    let log_half = half.ln();
    let y0 = (2.0 / PI) * ((log_half + EULER_GAMMA) * j0 + y0_sum);
    let y1 = -2.0 / (PI * z) + (2.0 / PI) * log_half * j1 - y1_sum / PI;
    BesselSet { j0, j1, y0, y1 }
}

/// Returns `(H^(1)_nu(z), H^(2)_nu(z))` from Hankel's expansion.
fn hankel_asymptotic(nu: f64, z: Complex64) -> (Complex64, Complex64) {
    let mu = 4.0 * nu * nu;
    let i = Complex64::i();
    let inv_z = 1.0 / z;
    let mut coeff = Complex64::new(1.0, 0.0);
    let mut sum_plus = coeff;
    let mut sum_minus = coeff;
    let mut previous = 1.0;
    let mut i_pow = Complex64::new(1.0, 0.0);
    for k in 1..80 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        coeff *= inv_z * ((mu - odd * odd) / (8.0 * kf));
        let size = coeff.norm();
        if size == 0.0 || size > previous {
            break;
        }
        i_pow *= i;
        sum_plus += i_pow * coeff;
        sum_minus += i_pow.conj() * coeff;
        previous = size;
        if size < 1e-17 {
            break;
        }
    }
    let phase = z - nu * PI / 2.0 - PI / 4.0;
    let pre = (2.0 / (PI * z)).sqrt();
    let h1 = pre * (i * phase).exp() * sum_plus;
    let h2 = pre * (-i * phase).exp() * sum_minus;
    (h1, h2)
}

/// Asymptotic branch. Accurate for `|z| >= 12`, `Im(z) >= 0`.
pub fn asymptotic(z: Complex64) -> BesselSet {
    let i = Complex64::i();
    let (h10, h20) = hankel_asymptotic(0.0, z);
    let (h11, h21) = hankel_asymptotic(1.0, z);
    BesselSet { j0: (h10 + h20) * 0.5, y0: (h10 - h20) / (2.0 * i), j1: (h11 + h21) * 0.5, y1: (h11 - h21) / (2.0 * i) }
}

/// `J0, J1, Y0, Y1` at `z` with branch selection. Requires `z != 0` and
/// `Im(z) >= 0`.
pub fn bessel_set(z: Complex64) -> Result<BesselSet> {
    check_argument(z)?;
    if z.norm() == 0.0 {
        return Err(Error::Singularity("Y and H are singular at z = 0".into()));
    }
    if z.im < 0.0 {
        return Err(Error::Domain(format!("Im(z) = {} < 0 is outside the radiating regime", z.im)));
    }
    Ok(if z.norm() < CROSSOVER_RADIUS { series(z) } else { asymptotic(z) })
}

fn check_order(order: u32) -> Result<()> {
    if order > 1 {
        return Err(Error::Domain(format!("Bessel order {order} not in {{0, 1}}")));
    }
    Ok(())
}

/// Bessel function of the first kind `J_order(z)`, order 0 or 1.
pub fn bessel_j(order: u32, z: Complex64) -> Result<Complex64> {
    check_order(order)?;
    check_argument(z)?;
    // J is entire; J(conj z) = conj J(z) covers the lower half-plane.
    let flip = z.im < 0.0;
    let w = if flip { z.conj() } else { z };
    let set = if w.norm() < CROSSOVER_RADIUS { series(w) } else { asymptotic(w) };
    let v = if order == 0 { set.j0 } else { set.j1 };
    Ok(if flip { v.conj() } else { v })
}

/// Bessel function of the second kind `Y_order(z)`, order 0 or 1.
pub fn bessel_y(order: u32, z: Complex64) -> Result<Complex64> {
    check_order(order)?;
    let set = bessel_set(z)?;
    Ok(if order == 0 { set.y0 } else { set.y1 })
}

/// Hankel function of the first kind `H^(1)_order(z)`, order 0 or 1.
pub fn hankel1(order: u32, z: Complex64) -> Result<Complex64> {
    check_order(order)?;
    let set = bessel_set(z)?;
    Ok(if order == 0 { set.h0() } else { set.h1() })
}

/// Radiating fundamental solution `(i/4) H0^(1)(k |x - y|)`.
pub fn phi(k0t: Complex64, x: Point, y: Point) -> Result<Complex64> {
    let r = x.distance(y);
    if r == 0.0 {
        return Err(Error::Singularity("fundamental solution evaluated at x = y".into()));
    }
    phi_at_distance(k0t, r)
}

/// `(i/4) H0^(1)(k r)` for `r > 0`.
pub fn phi_at_distance(k0t: Complex64, r: f64) -> Result<Complex64> {
    if k0t.im < 0.0 {
        return Err(Error::Domain(format!("wavenumber {k0t} has negative imaginary part")));
    }
    Ok(Complex64::new(0.0, 0.25) * hankel1(0, k0t * r)?)
}
