//! Method-of-moments solution of the Lippmann–Schwinger equation on a
//! uniform grid.

mod cylinder;
mod kernel;

pub use cylinder::{analytic_cylinder, analytic_cylinder_with_order, Cylinder, CylinderField};
pub use kernel::{cell_integral, off_cell_factor, LatticeConvolution, LsKernel};

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::krylov::{tfqmr, LinearOperator, SolveReport, TfqmrOptions};
use crate::medium::{ComplexGridField, ContrastMap, Grid, Point};
use crate::specfun;

pub const MAX_ITERATIONS: usize = 2000;

fn check_grid(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{what} is defined on a different grid")))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 1e-14 && tol < 1e-2 {
        Ok(())
    } else {
        Err(Error::Domain(format!("solver tolerance {tol} outside (1e-14, 1e-2)")))
    }
}

/// `x -> k^2 C (m x)` written into `out`.
fn ls_apply(kernel: &LsKernel, m: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
    let k2 = kernel.k0t_sq();
    let w: Vec<Complex64> = m.iter().zip(x).map(|(mi, xi)| k2 * mi * xi).collect();
    kernel.convolve(&w, out);
}

/// `I + k^2 C M` as a linear operator.
pub struct LsOperator<'a> {
    kernel: &'a LsKernel,
    m: &'a [Complex64],
}

impl<'a> LsOperator<'a> {
    pub fn new(kernel: &'a LsKernel, m: &'a ContrastMap) -> Result<Self> {
        check_grid(kernel.grid(), &m.grid, "contrast")?;
        Ok(Self { kernel, m: &m.values })
    }
}

impl LinearOperator for LsOperator<'_> {
    fn dim(&self) -> usize {
        self.m.len()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        ls_apply(self.kernel, self.m, x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi;
        }
    }
}

/// `k^2 sum_j m_j f_j c(x_l - y_j)` on every cell.
pub fn apply_ls_operator(f: &ComplexGridField, m: &ContrastMap, kernel: &LsKernel) -> Result<ComplexGridField> {
    check_grid(kernel.grid(), &f.grid, "field")?;
    check_grid(kernel.grid(), &m.grid, "contrast")?;
    let mut out = ComplexGridField::zeros(f.grid);
    if !m.is_zero() {
        ls_apply(kernel, &m.values, &f.values, &mut out.values);
    }
    Ok(out)
}

fn resolution_warning(m: &ContrastMap, kernel: &LsKernel) {
    let one = Complex64::new(1.0, 0.0);
    let max_root = m.values.iter().map(|v| (one - v).sqrt().norm()).fold(1.0, f64::max);
    let lambda = 2.0 * PI / (kernel.k0t().re * max_root);
    if kernel.grid().h > lambda / 10.0 {
        log::warn!(
            "grid spacing {:.3e} m exceeds a tenth of the interior wavelength {:.3e} m",
            kernel.grid().h,
            lambda
        );
    }
}

/// Solves `u + k^2 C(m u) = u_inc`.
pub fn solve_total_field(
    u_inc: &ComplexGridField,
    m: &ContrastMap,
    kernel: &LsKernel,
    tol: f64,
) -> Result<(ComplexGridField, SolveReport)> {
    check_tol(tol)?;
    check_grid(kernel.grid(), &u_inc.grid, "incident field")?;
    let op = LsOperator::new(kernel, m)?;
    if m.is_zero() {
        return Ok((u_inc.clone(), SolveReport { iterations: 0, final_relative_residual: 0.0, converged: true }));
    }
    resolution_warning(m, kernel);
    let mut u = u_inc.values.clone();
    let report = tfqmr(&op, &u_inc.values, &mut u, TfqmrOptions { tol, max_iter: MAX_ITERATIONS });
    if !report.converged {
        return Err(Error::NonConvergence { report });
    }
    Ok((ComplexGridField { grid: u_inc.grid, values: u }, report))
}

/// Fundamental solution with source `x0` sampled at the cell centers. A
/// center that coincides with `x0` gets the cell average of the kernel.
pub fn point_source_field(kernel: &LsKernel, x0: Point) -> Result<ComplexGridField> {
    let grid = *kernel.grid();
    let k = kernel.k0t();
    let coincident = 1e-12 * grid.h;
    let values = grid
        .centers()
        .map(|p| {
            let d = p.distance(x0);
            if d <= coincident {
                Ok(kernel.self_term() / grid.cell_area())
            } else {
                specfun::phi_at_distance(k, d)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplexGridField { grid, values })
}

fn nearest_support_distance(m: &ContrastMap, p: Point) -> f64 {
    m.support
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(j, _)| m.grid.center_of(j).distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Green's function of the background `m_b` for the source `x0`, split as
/// `G = Phi(., x0) + us_b` on the cell centers.
pub fn green_background(
    mb: &ContrastMap,
    kernel: &LsKernel,
    x0: Point,
    tol: f64,
) -> Result<(ComplexGridField, ComplexGridField)> {
    check_tol(tol)?;
    check_grid(kernel.grid(), &mb.grid, "background contrast")?;
    let h = kernel.grid().h;
    let gap = nearest_support_distance(mb, x0);
    if gap < 0.5 * h {
        return Err(Error::Proximity(format!("source ({}, {}) lies inside the background support", x0.x, x0.y)));
    }
    let phi = point_source_field(kernel, x0)?;
    let usb = background_perturbation(mb, kernel, &phi, tol)?;
    let g =
        ComplexGridField { grid: phi.grid, values: phi.values.iter().zip(&usb.values).map(|(a, b)| a + b).collect() };
    Ok((g, usb))
}

/// `u - u_inc` for the total field of `m` under incidence `u_inc`.
pub fn background_perturbation(
    mb: &ContrastMap,
    kernel: &LsKernel,
    u_inc: &ComplexGridField,
    tol: f64,
) -> Result<ComplexGridField> {
    let (u, _) = solve_total_field(u_inc, mb, kernel, tol)?;
    Ok(ComplexGridField { grid: u.grid, values: u.values.iter().zip(&u_inc.values).map(|(a, b)| a - b).collect() })
}

/// Precomputed `-k^2 c(|p_r - y_j|)` between evaluation points and a set
/// of grid cells.
#[derive(Debug, Clone)]
pub struct PointEvaluator {
    grid: Grid,
    cells: Vec<usize>,
    points: usize,
    /// Row-major `points x cells`.
    weights: Vec<Complex64>,
}

impl PointEvaluator {
    /// Fails with a proximity error if a point is closer than `h/2` to the
    /// center of one of `cells`.
    pub fn new(kernel: &LsKernel, points: &[Point], cells: &[usize]) -> Result<Self> {
        let grid = *kernel.grid();
        let k2 = kernel.k0t_sq();
        let factor = off_cell_factor(kernel.k0t(), kernel.equivalent_radius())?;
        let mut weights = Vec::with_capacity(points.len() * cells.len());
        for p in points {
            for &j in cells {
                let d = grid.center_of(j).distance(*p);
                if d < 0.5 * grid.h {
                    return Err(Error::Proximity(format!(
                        "evaluation point ({}, {}) is within h/2 of cell {j}",
                        p.x, p.y
                    )));
                }
                weights.push(-k2 * factor * specfun::phi_at_distance(kernel.k0t(), d)?);
            }
        }
        Ok(Self { grid, cells: cells.to_vec(), points: points.len(), weights })
    }

    /// Evaluator over every grid cell.
    pub fn all_cells(kernel: &LsKernel, points: &[Point]) -> Result<Self> {
        let cells: Vec<usize> = (0..kernel.grid().len()).collect();
        Self::new(kernel, points, &cells)
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    /// Scattered field at the points from the contrast source `w`; `w`
    /// must vanish outside the evaluator's cells.
    pub fn evaluate(&self, w: &ComplexGridField) -> Result<Vec<Complex64>> {
        check_grid(&self.grid, &w.grid, "contrast source")?;
        let local: Vec<Complex64> = self.cells.iter().map(|&j| w.values[j]).collect();
        Ok(self.evaluate_local(&local))
    }

    /// Same with `w` given on the evaluator's cells only.
    pub fn evaluate_local(&self, w: &[Complex64]) -> Vec<Complex64> {
        let n = self.cells.len();
        self.weights
            .chunks_exact(n.max(1))
            .take(self.points)
            .map(|row| if n == 0 { Complex64::new(0.0, 0.0) } else { row.iter().zip(w).map(|(a, b)| a * b).sum() })
            .collect()
    }

    /// Adjoint map from point values back to the evaluator's cells.
    pub fn adjoint_local(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.cells.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (r, vr) in v.iter().enumerate().take(self.points) {
            for (o, a) in out.iter_mut().zip(&self.weights[r * n..(r + 1) * n]) {
                *o += a.conj() * vr;
            }
        }
        out
    }

    /// Row-major `points x cells` weights.
    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }
}

/// `-k^2 sum_j w_j c(|p - y_j|)` at external points.
pub fn scattered_at_points(w: &ComplexGridField, kernel: &LsKernel, points: &[Point]) -> Result<Vec<Complex64>> {
    check_grid(kernel.grid(), &w.grid, "contrast source")?;
    let cells: Vec<usize> = (0..w.values.len()).filter(|&j| w.values[j].norm() > 0.0).collect();
    PointEvaluator::new(kernel, points, &cells)?.evaluate(w)
}
