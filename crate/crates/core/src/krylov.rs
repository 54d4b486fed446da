//! Transpose-free QMR for non-Hermitian complex systems.
//!
//! The iteration only needs products with the operator itself, which suits
//! the FFT-applied integral operators of this crate. The quasi-residual
//! bound triggers a true-residual check; a cycle that stops reducing the
//! true residual is restarted from its current iterate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Products `y = A x` with a square complex operator.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TfqmrOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TfqmrOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 2000 }
    }
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn true_residual<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[Complex64],
    x: &[Complex64],
    scratch: &mut [Complex64],
) -> f64 {
    op.apply(x, scratch);
    let r: f64 = b.iter().zip(scratch.iter()).map(|(bi, ai)| (bi - ai).norm_sqr()).sum::<f64>().sqrt();
    r
}

const RESTART_AFTER: usize = 400;

/// Solves `A x = b` starting from `x`, overwriting it with the solution.
///
/// The report carries the true relative residual `||b - A x|| / ||b||`
/// (quasi-residual bounds are never reported as final).
pub fn tfqmr<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[Complex64],
    x: &mut [Complex64],
    opts: TfqmrOptions,
) -> SolveReport {
    let mut used = 0;
    let mut best = f64::INFINITY;
    loop {
        let budget = (opts.max_iter - used).min(RESTART_AFTER);
        let report = tfqmr_cycle(op, b, x, TfqmrOptions { tol: opts.tol, max_iter: budget });
        used += report.iterations;
        let report = SolveReport { iterations: used, ..report };
        if report.converged || used >= opts.max_iter || report.iterations == 0 {
            return report;
        }
        if report.final_relative_residual >= best {
            return report;
        }
        best = report.final_relative_residual;
        log::debug!("tfqmr restart after {used} iterations at residual {best:.3e}");
    }
}

fn tfqmr_cycle<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[Complex64],
    x: &mut [Complex64],
    opts: TfqmrOptions,
) -> SolveReport {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let zero = Complex64::new(0.0, 0.0);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        return SolveReport { iterations: 0, final_relative_residual: 0.0, converged: true };
    }

    let mut scratch = vec![zero; n];
    op.apply(x, &mut scratch);
    let r: Vec<Complex64> = b.iter().zip(&scratch).map(|(bi, ai)| bi - ai).collect();
    let r_norm = norm(&r);
    if r_norm <= opts.tol * b_norm {
        return SolveReport { iterations: 0, final_relative_residual: r_norm / b_norm, converged: true };
    }

    let r_shadow = r.clone();
    let mut w = r.clone();
    let mut y1 = r;
    let mut y2 = vec![zero; n];
    let mut v = vec![zero; n];
    op.apply(&y1, &mut v);
    let mut u1 = v.clone();
    let mut u2 = vec![zero; n];
    let mut d = vec![zero; n];
    let mut theta = 0.0f64;
    let mut eta = zero;
    let mut tau = r_norm;
    let mut rho = dot(&r_shadow, &y1);
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let sigma = dot(&r_shadow, &v);
        if sigma.norm() == 0.0 || rho.norm() == 0.0 {
            break;
        }
        let alpha = rho / sigma;
        for ((y2i, y1i), vi) in y2.iter_mut().zip(&y1).zip(&v) {
            *y2i = y1i - alpha * vi;
        }
        op.apply(&y2, &mut u2);

        for half in 0..2 {
            let m = 2 * it - 1 + half;
            let (y, u) = if half == 0 { (&y1, &u1) } else { (&y2, &u2) };
            for (wi, ui) in w.iter_mut().zip(u.iter()) {
                *wi -= alpha * ui;
            }
            let coef = eta * (theta * theta) / alpha;
            for (di, yi) in d.iter_mut().zip(y.iter()) {
                *di = yi + coef * *di;
            }
            theta = norm(&w) / tau;
            let c = 1.0 / (1.0 + theta * theta).sqrt();
            tau *= theta * c;
            eta = alpha * (c * c);
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += eta * di;
            }
            if tau * ((m + 1) as f64).sqrt() <= opts.tol * b_norm {
                let residual = true_residual(op, b, x, &mut scratch) / b_norm;
                if residual <= opts.tol {
                    return SolveReport { iterations: it, final_relative_residual: residual, converged: true };
                }
            }
        }

        let rho_new = dot(&r_shadow, &w);
        let beta = rho_new / rho;
        rho = rho_new;
        for ((y1i, wi), y2i) in y1.iter_mut().zip(&w).zip(&y2) {
            *y1i = wi + beta * y2i;
        }
        op.apply(&y1, &mut u1);
        for ((vi, u1i), u2i) in v.iter_mut().zip(&u1).zip(&u2) {
            *vi = u1i + beta * (u2i + beta * *vi);
        }
        if it % 50 == 0 {
            let residual = true_residual(op, b, x, &mut scratch) / b_norm;
            if residual <= opts.tol {
                return SolveReport { iterations: it, final_relative_residual: residual, converged: true };
            }
            log::trace!("tfqmr iteration {it}: relative residual {residual:.3e}");
        }
    }
    let residual = true_residual(op, b, x, &mut scratch) / b_norm;
    SolveReport { iterations, final_relative_residual: residual, converged: residual <= opts.tol }
}

/// Dense row-major matrix as an operator (test and small-problem use).
pub struct DenseOperator {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, seed: u64, shift: f64) -> (DenseOperator, Vec<Complex64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for (k, v) in data.iter_mut().enumerate() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (n as f64).sqrt();
            if k % (n + 1) == 0 {
                *v += Complex64::new(shift, 0.5);
            }
        }
        let b = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        (DenseOperator { n, data }, b)
    }

    #[test]
    fn solves_nonhermitian_systems() {
        for seed in 0..5 {
            let (op, b) = random_system(60, seed, 2.0);
            let mut x = vec![Complex64::new(0.0, 0.0); 60];
            let rep = tfqmr(&op, &b, &mut x, TfqmrOptions { tol: 1e-12, max_iter: 500 });
            assert!(rep.converged, "{rep:?}");
            let mut ax = vec![Complex64::new(0.0, 0.0); 60];
            op.apply(&x, &mut ax);
            let res: f64 = norm(&ax.iter().zip(&b).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(&b);
            assert!(res <= 1e-12);
            assert!((res - rep.final_relative_residual).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_and_exact_guess() {
        let (op, b) = random_system(10, 7, 3.0);
        let mut x = vec![Complex64::new(1.0, 1.0); 10];
        let rep = tfqmr(&op, &vec![Complex64::new(0.0, 0.0); 10], &mut x, TfqmrOptions::default());
        assert_eq!(rep.iterations, 0);
        assert!(x.iter().all(|v| v.norm() == 0.0));

        let mut x = vec![Complex64::new(0.0, 0.0); 10];
        tfqmr(&op, &b, &mut x, TfqmrOptions { tol: 1e-13, max_iter: 200 });
        let again = tfqmr(&op, &b, &mut x, TfqmrOptions { tol: 1e-10, max_iter: 200 });
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn reports_nonconvergence() {
        let (op, b) = random_system(80, 3, 0.0);
        let mut x = vec![Complex64::new(0.0, 0.0); 80];
        let rep = tfqmr(&op, &b, &mut x, TfqmrOptions { tol: 1e-14, max_iter: 3 });
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert!(rep.final_relative_residual > 1e-14);
    }
}
