//! Linear sampling method with Tikhonov regularization.
//!
//! The data operator maps source weights to receiver samples,
//! `F[r, s] = (u_s - u_s_b)[s, r] * 2 pi R / S`. For each sampling point
//! `z` the regularized solution of `F g = G(., z)` is computed through the
//! singular system of `F`, with `alpha` chosen by the discrepancy
//! principle, and `1 / ||g||^2` is the indicator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::acquisition::{ArrayGeometry, MultistaticData};
use crate::error::{Error, Result};
use crate::forward::{green_background, LsKernel};
use crate::medium::{angular_frequency, Grid, MediumMap, Point};
use crate::specfun;

pub const INDICATOR_CEILING: f64 = 1e12;

/// Data operator and its thin singular system, values nonincreasing.
#[derive(Debug, Clone)]
pub struct LsmOperator {
    pub matrix: DMatrix<Complex64>,
    pub singular_values: Vec<f64>,
    /// Left singular vectors as columns, `R x k`.
    pub u: DMatrix<Complex64>,
    /// Right singular vectors as columns, `S x k`.
    pub v: DMatrix<Complex64>,
}

impl LsmOperator {
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Self {
        let svd = matrix.clone().svd(true, true);
        let u = svd.u.expect("left vectors requested");
        let v_t = svd.v_t.expect("right vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
        let v = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)].conj());
        Self { matrix, singular_values, u, v }
    }

    pub fn n_receivers(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.matrix.ncols()
    }

    /// `U diag(sigma) V*`.
    pub fn reassemble(&self) -> DMatrix<Complex64> {
        let k = self.singular_values.len();
        let mut us = self.u.clone();
        for c in 0..k {
            let s = self.singular_values[c];
            us.column_mut(c).iter_mut().for_each(|x| *x *= s);
        }
        us * self.v.adjoint()
    }

    fn coefficients(&self, b: &[Complex64]) -> Vec<Complex64> {
        (0..self.singular_values.len())
            .map(|c| self.u.column(c).iter().zip(b).map(|(ui, bi)| ui.conj() * bi).sum())
            .collect()
    }
}

/// Builds the operator from data with attached background fields.
pub fn build_lsm_operator(data: &MultistaticData) -> Result<LsmOperator> {
    let usb =
        data.u_s_b.as_ref().ok_or_else(|| Error::MissingBackground("linear sampling needs background data".into()))?;
    let s = data.n_sources();
    let r = data.n_receivers();
    let weight = 2.0 * PI * data.geometry.radius / s as f64;
    let matrix = DMatrix::from_fn(r, s, |ri, si| (data.u_s[si * r + ri] - usb[si * r + ri]) * weight);
    Ok(LsmOperator::from_matrix(matrix))
}

/// Background Green's functions `G(z; x_r)` for every receiver, stored as
/// the closed-form part plus the grid-sampled perturbation.
#[derive(Debug, Clone)]
pub struct GreenCache {
    pub grid: Grid,
    pub k0t: Complex64,
    pub receivers: Vec<Point>,
    /// Perturbations `us_b(.; x_r)` on the grid, one per receiver; empty
    /// for a homogeneous background.
    pub perturbations: Vec<Vec<Complex64>>,
}

impl GreenCache {
    pub fn homogeneous(grid: Grid, k0t: Complex64, receivers: Vec<Point>) -> Self {
        Self { grid, k0t, receivers, perturbations: Vec::new() }
    }

    /// One background solve per receiver; by reciprocity these give
    /// `G(x_r; z)` for every `z`.
    pub fn build(background: &MediumMap, geometry: &ArrayGeometry, freq: f64, tol: f64) -> Result<Self> {
        let omega = angular_frequency(freq);
        let k0t = background.wavenumber(omega)?;
        let receivers = geometry.receivers();
        let mb = background.exterior_contrast(omega)?;
        if mb.is_zero() {
            return Ok(Self::homogeneous(background.grid, k0t, receivers));
        }
        let kernel = LsKernel::new(background.grid, k0t)?;
        let perturbations = receivers
            .par_iter()
            .map(|&x| green_background(&mb, &kernel, x, tol).map(|(_, usb)| usb.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: background.grid, k0t, receivers, perturbations })
    }

    pub fn is_homogeneous(&self) -> bool {
        self.perturbations.is_empty()
    }
}

/// Bilinear weights between cell centers, clamped at the outer half-cells.
fn bilinear(grid: &Grid, z: Point) -> Result<[(usize, f64); 4]> {
    let (lo, hi) = grid.extent();
    let slack = 1e-9 * grid.h;
    if z.x < lo.x - slack || z.x > hi.x + slack || z.y < lo.y - slack || z.y > hi.y + slack {
        return Err(Error::Domain(format!("sampling point ({}, {}) outside the cached grid", z.x, z.y)));
    }
    let axis = |coord: f64, origin: f64, n: usize| -> (usize, usize, f64) {
        let f = ((coord - origin) / grid.h - 0.5).clamp(0.0, (n - 1) as f64);
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i0 = (f.floor() as usize).min(n - 2);
        (i0, i0 + 1, f - i0 as f64)
    };
    let (x0, x1, tx) = axis(z.x, grid.origin.x, grid.nx);
    let (y0, y1, ty) = axis(z.y, grid.origin.y, grid.ny);
    Ok([
        (grid.index(x0, y0), (1.0 - tx) * (1.0 - ty)),
        (grid.index(x1, y0), tx * (1.0 - ty)),
        (grid.index(x0, y1), (1.0 - tx) * ty),
        (grid.index(x1, y1), tx * ty),
    ])
}

/// `G(x_r; z)` for every receiver.
pub fn lsm_rhs(cache: &GreenCache, z: Point) -> Result<Vec<Complex64>> {
    let weights = bilinear(&cache.grid, z)?;
    cache
        .receivers
        .iter()
        .enumerate()
        .map(|(r, &x)| {
            let mut g = specfun::phi(cache.k0t, x, z)?;
            if let Some(field) = cache.perturbations.get(r) {
                g += weights.iter().map(|&(j, w)| field[j] * w).sum::<Complex64>();
            }
            Ok(g)
        })
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("regularization parameter must be positive, got {alpha}")))
    }
}

/// Minimizer of `||F g - b||^2 + alpha ||g||^2`.
pub fn tikhonov_solve(op: &LsmOperator, b: &[Complex64], alpha: f64) -> Result<Vec<Complex64>> {
    check_alpha(alpha)?;
    if b.len() != op.n_receivers() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for {} receivers",
            b.len(),
            op.n_receivers()
        )));
    }
    Ok(filtered_solution(op, &op.coefficients(b), alpha))
}

fn filtered_solution(op: &LsmOperator, beta: &[Complex64], alpha: f64) -> Vec<Complex64> {
    let mut g = vec![Complex64::new(0.0, 0.0); op.n_sources()];
    for (c, (&s, &bc)) in op.singular_values.iter().zip(beta).enumerate() {
        let f = s / (s * s + alpha) * bc;
        for (gi, vi) in g.iter_mut().zip(op.v.column(c).iter()) {
            *gi += f * vi;
        }
    }
    g
}

/// `||F g_alpha - b||` from the singular coefficients; `outside` is the
/// squared norm of the part of `b` orthogonal to the range of `U`.
fn discrepancy(op: &LsmOperator, beta: &[Complex64], outside: f64, alpha: f64) -> f64 {
    let inside: f64 =
        op.singular_values.iter().zip(beta).map(|(&s, bc)| (alpha / (s * s + alpha)).powi(2) * bc.norm_sqr()).sum();
    (inside + outside).sqrt()
}

/// Bracket `[alpha_min, alpha_max]` searched by the discrepancy rule.
pub fn alpha_bracket(op: &LsmOperator) -> (f64, f64) {
    let smax = op.singular_values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (1e-6, 1e6);
    }
    let smin = op.singular_values.last().copied().unwrap_or(0.0).max(smax * 1e-8);
    (smin * smin * 1e-6, smax * smax * 1e6)
}

/// Discrepancy-principle `alpha`: `||F g - b|| = noise_level ||b||`.
pub fn select_alpha(op: &LsmOperator, b: &[Complex64], noise_level: f64) -> f64 {
    let beta = op.coefficients(b);
    select_alpha_with(op, b, &beta, noise_level)
}

fn select_alpha_with(op: &LsmOperator, b: &[Complex64], beta: &[Complex64], noise_level: f64) -> f64 {
    let smax = op.singular_values.first().copied().unwrap_or(0.0);
    if noise_level <= 0.0 {
        return if smax > 0.0 { smax * smax * 1e-8 } else { 1e-8 };
    }
    let (lo, hi) = alpha_bracket(op);
    let b2: f64 = b.iter().map(|v| v.norm_sqr()).sum();
    let outside = (b2 - beta.iter().map(|v| v.norm_sqr()).sum::<f64>()).max(0.0);
    let target = noise_level * b2.sqrt();
    let gap = |alpha: f64| discrepancy(op, beta, outside, alpha) - target;
    let (g_lo, g_hi) = (gap(lo), gap(hi));
    if g_lo >= 0.0 {
        return lo;
    }
    if g_hi <= 0.0 {
        return hi;
    }
    let (mut a, mut c) = (lo.log10(), hi.log10());
    while c - a > 1e-3 {
        let mid = 0.5 * (a + c);
        if gap(10f64.powf(mid)) < 0.0 {
            a = mid;
        } else {
            c = mid;
        }
    }
    10f64.powf(0.5 * (a + c))
}

/// Mean of the lowest `fraction` of the Marchenko–Pastur law with ratio
/// `gamma <= 1` and unit mean.
fn marchenko_pastur_tail_mean(gamma: f64, fraction: f64) -> f64 {
    const STEPS: usize = 4096;
    let (a, b) = ((1.0 - gamma.sqrt()).powi(2), (1.0 + gamma.sqrt()).powi(2));
    // x = a + (b - a) sin^2 t removes the square-root endpoint behaviour.
    let dt = std::f64::consts::FRAC_PI_2 / STEPS as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for i in 0..STEPS {
        let t = (i as f64 + 0.5) * dt;
        let (s, c) = t.sin_cos();
        let x = a + (b - a) * s * s;
        let weight = (b - a).powi(2) * 2.0 * (s * c).powi(2) / (2.0 * PI * gamma) * dt;
        if mass + weight / x > fraction {
            let part = (fraction - mass) * x;
            return (first + part) / fraction;
        }
        mass += weight / x;
        first += weight;
    }
    first / mass
}

/// Relative noise level `||N|| / ||F||` estimated from the smallest 20% of
/// singular values, assuming i.i.d. complex Gaussian noise.
pub fn estimate_noise_level(op: &LsmOperator) -> f64 {
    let n = op.singular_values.len();
    let total: f64 = op.singular_values.iter().map(|s| s * s).sum();
    if n == 0 || total == 0.0 {
        return 0.0;
    }
    let tail = (n / 5).max(1);
    let fraction = tail as f64 / n as f64;
    let tail_mean: f64 = op.singular_values[n - tail..].iter().map(|s| s * s).sum::<f64>() / tail as f64;
    let (rows, cols) = (op.n_receivers(), op.n_sources());
    let gamma = rows.min(cols) as f64 / rows.max(cols) as f64;
    let scale = marchenko_pastur_tail_mean(gamma, fraction);
    (tail_mean * n as f64 / (scale * total)).sqrt().min(1.0)
}

/// `1 / ||g_z||^2` on a sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMap {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl IndicatorMap {
    /// Index of the largest indicator value.
    pub fn argmax(&self) -> usize {
        self.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
    }
}

/// Indicator on every cell center of `sampling`, with a per-point
/// discrepancy `alpha`. A `None` noise level is estimated from the data.
pub fn indicator_map(
    op: &LsmOperator,
    cache: &GreenCache,
    sampling: &Grid,
    noise_level: Option<f64>,
) -> Result<IndicatorMap> {
    if cache.receivers.len() != op.n_receivers() {
        return Err(Error::DimensionMismatch(format!(
            "Green cache has {} receivers, data {}",
            cache.receivers.len(),
            op.n_receivers()
        )));
    }
    let delta = noise_level.unwrap_or_else(|| estimate_noise_level(op));
    let values = (0..sampling.len())
        .into_par_iter()
        .map(|i| {
            let b = lsm_rhs(cache, sampling.center_of(i))?;
            let beta = op.coefficients(&b);
            let alpha = select_alpha_with(op, &b, &beta, delta);
            let g = filtered_solution(op, &beta, alpha);
            let n2: f64 = g.iter().map(|v| v.norm_sqr()).sum();
            Ok(if n2 > 0.0 { (1.0 / n2).min(INDICATOR_CEILING) } else { INDICATOR_CEILING })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IndicatorMap { grid: *sampling, values })
}
