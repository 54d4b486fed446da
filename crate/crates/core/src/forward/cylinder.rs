//! Separation-of-variables series for a penetrable circular cylinder under
//! line-source incidence.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::medium::Point;
use crate::specfun;

const MAX_ORDER: usize = 200;
const TAIL_TOL: f64 = 1e-15;

/// Homogeneous circular cylinder; `relative_index` is the ratio of its
/// refractive index to the exterior one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub center: Point,
    pub radius: f64,
    pub relative_index: Complex64,
}

impl Cylinder {
    pub fn dielectric(center: Point, radius: f64, eps_r: f64) -> Self {
        Self { center, radius, relative_index: Complex64::new(eps_r, 0.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderField {
    pub values: Vec<Complex64>,
    /// Highest angular order kept in the series.
    pub order: usize,
}

/// `J_0..=J_nmax` by backward recurrence normalized against `J0` or `J1`.
fn bessel_j_array(nmax: usize, z: Complex64) -> Result<Vec<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    if z.norm() == 0.0 {
        let mut v = vec![zero; nmax + 1];
        v[0] = Complex64::new(1.0, 0.0);
        return Ok(v);
    }
    let start = nmax + z.norm().ceil() as usize + 30 + (40.0 * nmax as f64).sqrt() as usize;
    let mut vals = vec![zero; start + 2];
    vals[start] = Complex64::new(1e-300, 0.0);
    for k in (1..=start).rev() {
        vals[k - 1] = (2.0 * k as f64) / z * vals[k] - vals[k + 1];
        if vals[k - 1].norm() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let peak = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    vals.iter_mut().for_each(|v| *v /= peak);
    let j0 = specfun::bessel_j(0, z)?;
    let j1 = specfun::bessel_j(1, z)?;
    let scale = if j0.norm() >= j1.norm() { j0 / vals[0] } else { j1 / vals[1] };
    vals.truncate(nmax + 1);
    Ok(vals.into_iter().map(|v| v * scale).collect())
}

/// `H_0..=H_n` of the first kind, `Y` by upward recurrence. The array stops
/// early, before `n = nmax`, once `|Y|` approaches overflow.
fn hankel_array(nmax: usize, z: Complex64) -> Result<Vec<Complex64>> {
    let j = bessel_j_array(nmax, z)?;
    let set = specfun::bessel_set(z)?;
    let mut y = vec![set.y0, set.y1];
    for n in 1..nmax {
        let next = (2.0 * n as f64) / z * y[n] - y[n - 1];
        if next.norm() > 1e280 {
            break;
        }
        y.push(next);
    }
    y.truncate(nmax + 1);
    Ok(y.iter().zip(&j).map(|(b, a)| a + Complex64::i() * b).collect())
}

/// `C_n'(z) = (n/z) C_n(z) - C_{n+1}(z)`.
fn derivative(c: &[Complex64], n: usize, z: Complex64) -> Complex64 {
    (n as f64) / z * c[n] - c[n + 1]
}

fn polar(c: Point, p: Point) -> (f64, f64) {
    let dx = p.x - c.x;
    let dy = p.y - c.y;
    (dx.hypot(dy), dy.atan2(dx))
}

struct Series {
    b: Vec<Complex64>,
    hs: Vec<Complex64>,
    phs: f64,
    /// Highest order available without overflow.
    top: usize,
}

fn prepare(cyl: &Cylinder, k0t: Complex64, source: Point, nmax: usize) -> Result<Series> {
    if !(cyl.radius > 0.0) {
        return Err(Error::Domain(format!("cylinder radius {} must be positive", cyl.radius)));
    }
    let (rs, phs) = polar(cyl.center, source);
    if rs <= cyl.radius {
        return Err(Error::Domain("line source lies inside the cylinder".into()));
    }
    let k1 = k0t * cyl.relative_index.sqrt();
    let za = k0t * cyl.radius;
    let z1 = k1 * cyl.radius;
    let ja = bessel_j_array(nmax + 1, za)?;
    let ha = hankel_array(nmax + 1, za)?;
    let j1 = bessel_j_array(nmax + 1, z1)?;
    let hs = hankel_array(nmax, k0t * rs)?;
    let top = nmax.min(ha.len() - 2).min(hs.len() - 1);
    let b = (0..=top)
        .map(|n| {
            let num = k0t * derivative(&ja, n, za) * j1[n] - k1 * ja[n] * derivative(&j1, n, z1);
            let den = k1 * ha[n] * derivative(&j1, n, z1) - k0t * derivative(&ha, n, za) * j1[n];
            let b = num / den;
            // Both vanish once the interior Bessel values underflow.
            if b.re.is_finite() && b.im.is_finite() {
                b
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(Series { b, hs, phs, top })
}

fn terms_at(series: &Series, cyl: &Cylinder, k0t: Complex64, p: Point, nmax: usize) -> Result<Vec<Complex64>> {
    let (r, ph) = polar(cyl.center, p);
    if r <= cyl.radius {
        return Err(Error::Domain(format!("observation point ({}, {}) inside the cylinder", p.x, p.y)));
    }
    let hp = hankel_array(nmax, k0t * r)?;
    let top = nmax.min(series.top).min(hp.len() - 1);
    let quarter = Complex64::new(0.0, 0.25);
    Ok((0..=top)
        .map(|n| {
            let weight = if n == 0 { 1.0 } else { 2.0 * ((n as f64) * (ph - series.phs)).cos() };
            quarter * weight * series.b[n] * series.hs[n] * hp[n]
        })
        .collect())
}

/// Scattered field summed to a fixed angular order.
pub fn analytic_cylinder_with_order(
    cyl: &Cylinder,
    k0t: Complex64,
    source: Point,
    obs: &[Point],
    order: usize,
) -> Result<CylinderField> {
    let series = prepare(cyl, k0t, source, order)?;
    let values = obs
        .iter()
        .map(|&p| {
            let terms = terms_at(&series, cyl, k0t, p, order)?;
            if terms.len() <= order {
                return Err(Error::Domain(format!("cylinder series order {order} overflows")));
            }
            Ok(terms.iter().sum())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CylinderField { values, order })
}

/// Scattered field with the order chosen so that the neglected terms are
/// below `1e-15` of the partial sum at every observation point.
pub fn analytic_cylinder(cyl: &Cylinder, k0t: Complex64, source: Point, obs: &[Point]) -> Result<CylinderField> {
    let series = prepare(cyl, k0t, source, MAX_ORDER)?;
    let min_order = (k0t * cyl.radius * cyl.relative_index.sqrt()).norm().ceil() as usize + 5;
    let mut order = min_order.min(MAX_ORDER);
    let mut all_terms = Vec::with_capacity(obs.len());
    for &p in obs {
        let terms = terms_at(&series, cyl, k0t, p, MAX_ORDER)?;
        let total: f64 = terms.iter().map(|t| t.norm()).sum();
        let mut needed = None;
        let mut quiet = 0;
        for (n, t) in terms.iter().enumerate() {
            if t.norm() <= TAIL_TOL * total {
                quiet += 1;
                if quiet >= 3 && n >= min_order {
                    needed = Some(n);
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        let needed =
            needed.ok_or_else(|| Error::Domain(format!("cylinder series not converged within order {MAX_ORDER}")))?;
        order = order.max(needed);
        all_terms.push(terms);
    }
    let values = all_terms.iter().map(|t| t[..=order].iter().sum()).collect();
    Ok(CylinderField { values, order })
}
