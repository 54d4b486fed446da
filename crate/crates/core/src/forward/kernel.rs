//! Cell-integrated fundamental solution on a uniform lattice and its
//! zero-padded circulant embedding for FFT convolution.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::medium::Grid;
use crate::specfun;

/// Integral of the fundamental solution over a cell replaced by the disk
/// of equal area, radius `a`, seen from distance `d` (zero for the cell
/// itself). The classical closed forms give `k^2` times this integral.
pub fn cell_integral(k0t: Complex64, a: f64, d: f64) -> Result<Complex64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("equivalent cell radius must be positive, got {a}")));
    }
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("distance must be nonnegative, got {d}")));
    }
    let i = Complex64::i();
    let ka = k0t * a;
    let k2 = k0t * k0t;
    if d == 0.0 {
        let h1 = specfun::hankel1(1, ka)?;
        Ok(i * 0.5 * (PI * ka * h1 + 2.0 * i) / k2)
    } else {
        let j1 = specfun::bessel_j(1, ka)?;
        let h0 = specfun::hankel1(0, k0t * d)?;
        Ok(i * PI * ka * 0.5 * j1 * h0 / k2)
    }
}

/// Off-cell weight `c(d) = beta * Phi(d)`, i.e. `beta = 2 pi a J1(k a) / k`.
pub fn off_cell_factor(k0t: Complex64, a: f64) -> Result<Complex64> {
    let j1 = specfun::bessel_j(1, k0t * a)?;
    Ok(2.0 * PI * a * j1 / k0t)
}

/// 2D FFT convolution with a fixed lattice kernel on an `nx x ny` grid,
/// embedded in a `2nx x 2ny` circulant.
pub struct LatticeConvolution {
    nx: usize,
    ny: usize,
    px: usize,
    py: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    /// Kernel spectrum, column-major (`ix * py + ky`), pre-scaled by 1/(px py).
    spectrum: Vec<Complex64>,
}

impl LatticeConvolution {
    /// `sample(dx, dy)` is the kernel value for lattice offset `(dx, dy)`,
    /// queried for `|dx| < nx`, `|dy| < ny`.
    pub fn new(nx: usize, ny: usize, sample: impl Fn(isize, isize) -> Complex64) -> Self {
        let px = 2 * nx;
        let py = 2 * ny;
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(px);
        let row_inv = planner.plan_fft_inverse(px);
        let col_fwd = planner.plan_fft_forward(py);
        let col_inv = planner.plan_fft_inverse(py);
        let zero = Complex64::new(0.0, 0.0);
        let mut table = vec![zero; px * py];
        for dy in -(ny as isize - 1)..(ny as isize) {
            for dx in -(nx as isize - 1)..(nx as isize) {
                let ix = dx.rem_euclid(px as isize) as usize;
                let iy = dy.rem_euclid(py as isize) as usize;
                table[iy * px + ix] = sample(dx, dy);
            }
        }
        let mut conv = Self { nx, ny, px, py, row_fwd, row_inv, col_fwd, col_inv, spectrum: Vec::new() };
        let scale = 1.0 / (px * py) as f64;
        conv.spectrum = conv.forward_full(table).into_iter().map(|v| v * scale).collect();
        conv
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Forward 2D transform of a full `px x py` row-major buffer; result is
    /// column-major.
    fn forward_full(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        let (px, py) = (self.px, self.py);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len()];
        for row in buf.chunks_exact_mut(px) {
            self.row_fwd.process_with_scratch(row, &mut scratch);
        }
        let mut t = vec![Complex64::new(0.0, 0.0); px * py];
        for iy in 0..py {
            for ix in 0..px {
                t[ix * py + iy] = buf[iy * px + ix];
            }
        }
        for col in t.chunks_exact_mut(py) {
            self.col_fwd.process_with_scratch(col, &mut scratch);
        }
        t
    }

    fn scratch_len(&self) -> usize {
        [
            self.row_fwd.get_inplace_scratch_len(),
            self.row_inv.get_inplace_scratch_len(),
            self.col_fwd.get_inplace_scratch_len(),
            self.col_inv.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }

    /// `out[l] = sum_j c(l - j) input[j]` over the `nx x ny` grid.
    pub fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.apply_inner(input, out, false);
    }

    /// Same with the complex-conjugated kernel.
    pub fn apply_conj(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.apply_inner(input, out, true);
    }

    fn apply_inner(&self, input: &[Complex64], out: &mut [Complex64], conjugate: bool) {
        let (nx, ny, px, py) = (self.nx, self.ny, self.px, self.py);
        assert_eq!(input.len(), nx * ny);
        assert_eq!(out.len(), nx * ny);
        let zero = Complex64::new(0.0, 0.0);
        let mut scratch = vec![zero; self.scratch_len()];
        // Rows ny..py of the padded input are zero and stay zero after the
        // row transforms, so only the first ny rows are transformed.
        let mut rows = vec![zero; ny * px];
        for iy in 0..ny {
            let row = &mut rows[iy * px..(iy + 1) * px];
            row[..nx].copy_from_slice(&input[iy * nx..(iy + 1) * nx]);
            self.row_fwd.process_with_scratch(row, &mut scratch);
        }
        let mut cols = vec![zero; px * py];
        for iy in 0..ny {
            for ix in 0..px {
                cols[ix * py + iy] = rows[iy * px + ix];
            }
        }
        for (ix, col) in cols.chunks_exact_mut(py).enumerate() {
            self.col_fwd.process_with_scratch(col, &mut scratch);
            let spec = &self.spectrum[ix * py..(ix + 1) * py];
            if conjugate {
                // conj(c) * x = conj(c * conj(x)) pointwise in space; in the
                // frequency domain use the spectrum of conj(c), which is
                // conj(S(-k)).
                for (ky, v) in col.iter_mut().enumerate() {
                    let jx = (px - ix) % px;
                    let jy = (py - ky) % py;
                    *v *= self.spectrum[jx * py + jy].conj();
                }
            } else {
                for (v, s) in col.iter_mut().zip(spec) {
                    *v *= s;
                }
            }
            self.col_inv.process_with_scratch(col, &mut scratch);
        }
        for iy in 0..ny {
            let row = &mut rows[iy * px..(iy + 1) * px];
            for (ix, v) in row.iter_mut().enumerate() {
                *v = cols[ix * py + iy];
            }
            self.row_inv.process_with_scratch(row, &mut scratch);
            out[iy * nx..(iy + 1) * nx].copy_from_slice(&row[..nx]);
        }
    }
}

/// Cell integrals of the fundamental solution for every lattice offset of
/// a grid, with the FFT embedding used by the volume integral operators.
pub struct LsKernel {
    grid: Grid,
    k0t: Complex64,
    radius: f64,
    self_term: Complex64,
    /// `|dx| + |dy| (nx)` indexed table for offsets with `dx, dy >= 0`.
    quadrant: Vec<Complex64>,
    conv: LatticeConvolution,
}

impl LsKernel {
    pub fn new(grid: Grid, k0t: Complex64) -> Result<Self> {
        if k0t.im < 0.0 || !k0t.re.is_finite() || !k0t.im.is_finite() || k0t.norm() == 0.0 {
            return Err(Error::Domain(format!("invalid wavenumber {k0t}")));
        }
        let a = grid.equivalent_radius();
        let self_term = cell_integral(k0t, a, 0.0)?;
        let factor = off_cell_factor(k0t, a)?;
        let mut quadrant = vec![Complex64::new(0.0, 0.0); grid.nx * grid.ny];
        for dy in 0..grid.ny {
            for dx in 0..grid.nx {
                quadrant[dy * grid.nx + dx] = if dx == 0 && dy == 0 {
                    self_term
                } else {
                    let d = grid.h * (dx as f64).hypot(dy as f64);
                    factor * specfun::phi_at_distance(k0t, d)?
                };
            }
        }
        let nx = grid.nx;
        let conv =
            LatticeConvolution::new(grid.nx, grid.ny, |dx, dy| quadrant[dy.unsigned_abs() * nx + dx.unsigned_abs()]);
        Ok(Self { grid, k0t, radius: a, self_term, quadrant, conv })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k0t(&self) -> Complex64 {
        self.k0t
    }

    pub fn k0t_sq(&self) -> Complex64 {
        self.k0t * self.k0t
    }

    pub fn equivalent_radius(&self) -> f64 {
        self.radius
    }

    pub fn self_term(&self) -> Complex64 {
        self.self_term
    }

    /// Cell integral between cells separated by lattice offset `(dx, dy)`.
    pub fn offset_value(&self, dx: isize, dy: isize) -> Complex64 {
        self.quadrant[dy.unsigned_abs() * self.grid.nx + dx.unsigned_abs()]
    }

    /// Cell integral of the cell at `index` seen from an arbitrary point
    /// outside that cell.
    pub fn point_value(&self, distance: f64) -> Result<Complex64> {
        cell_integral(self.k0t, self.radius, distance)
    }

    /// `out = C input`, the lattice convolution with cell integrals.
    pub fn convolve(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.conv.apply(input, out);
    }

    /// `out = conj(C) input`; the adjoint of `C`, since `C` is symmetric.
    pub fn convolve_adjoint(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.conv.apply_conj(input, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_term_vanishes_with_area() {
        let k = Complex64::new(2.0 * PI, 0.1);
        let mut prev = f64::INFINITY;
        for &a in &[1e-2, 1e-3, 1e-4, 1e-5] {
            let v = cell_integral(k, a, 0.0).unwrap().norm();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn off_cell_tends_to_area_times_kernel() {
        let k = Complex64::new(2.0 * PI, 0.0);
        let d = 0.3;
        let phi = specfun::phi_at_distance(k, d).unwrap();
        for &a in &[1e-2, 1e-3, 1e-4] {
            let v = cell_integral(k, a, d).unwrap();
            let area = PI * a * a;
            let rel = (v - area * phi).norm() / (area * phi).norm();
            assert!(rel < (k.norm() * a).powi(2), "a = {a}: {rel}");
        }
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(cell_integral(Complex64::new(1.0, 0.0), 0.0, 1.0).is_err());
        assert!(cell_integral(Complex64::new(1.0, 0.0), -1.0, 0.0).is_err());
    }

    fn dense(grid: &Grid, kernel: &LsKernel, x: &[Complex64], conj: bool) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        for l in 0..grid.len() {
            for j in 0..grid.len() {
                let d = if l == j { 0.0 } else { grid.center_of(l).distance(grid.center_of(j)) };
                let c = cell_integral(kernel.k0t(), grid.equivalent_radius(), d).unwrap();
                let c = if conj { c.conj() } else { c };
                out[l] += c * x[j];
            }
        }
        out
    }

    #[test]
    fn fft_convolution_matches_dense_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(nx, ny) in &[(1, 1), (3, 5), (7, 4), (8, 8)] {
            let grid = Grid::new(Point::new(-0.3, 0.1), 0.05, nx, ny).unwrap();
            let kernel = LsKernel::new(grid, Complex64::new(2.0 * PI, 0.2)).unwrap();
            let x: Vec<Complex64> =
                (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            for conj in [false, true] {
                let mut fast = vec![Complex64::new(0.0, 0.0); grid.len()];
                if conj {
                    kernel.convolve_adjoint(&x, &mut fast);
                } else {
                    kernel.convolve(&x, &mut fast);
                }
                let slow = dense(&grid, &kernel, &x, conj);
                let err: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let scale: f64 = slow.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                assert!(err <= 1e-12 * scale, "{nx}x{ny} conj={conj}: {err}");
            }
        }
    }
}
