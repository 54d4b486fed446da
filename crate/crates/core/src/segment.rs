//! Two-phase Chan–Vese segmentation of an indicator map.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lsm::IndicatorMap;
use crate::medium::Grid;

/// Boolean cells of a grid with their 4-connected component count.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub grid: Grid,
    pub inside: Vec<bool>,
    pub components: usize,
    pub area: usize,
}

impl RegionMask {
    pub fn new(grid: Grid, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask of {} cells on a grid of {}",
                inside.len(),
                grid.len()
            )));
        }
        let area = inside.iter().filter(|&&v| v).count();
        let components = count_components(&grid, &inside);
        Ok(Self { grid, inside, components, area })
    }

    pub fn empty(grid: Grid) -> Self {
        Self { grid, inside: vec![false; grid.len()], components: 0, area: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.inside.len()).filter(|&i| self.inside[i]).collect()
    }

    /// `|A ∩ B| / |A ∪ B|`, one for two empty masks.
    pub fn jaccard(&self, other: &RegionMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.inside.iter().zip(&other.inside) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Fraction of `other`'s cells that lie inside `self`.
    pub fn coverage_of(&self, other: &RegionMask) -> f64 {
        if other.area == 0 {
            return 1.0;
        }
        let hit = self.inside.iter().zip(&other.inside).filter(|(&a, &b)| a && b).count();
        hit as f64 / other.area as f64
    }

    /// Smallest `(ix0, iy0, nx, ny)` window containing every inside cell.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for i in self.indices() {
            let (x, y) = self.grid.coords(i);
            bounds = Some(match bounds {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bounds.map(|(x0, y0, x1, y1)| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

fn neighbors4(grid: &Grid, i: usize) -> impl Iterator<Item = usize> + '_ {
    let (x, y) = grid.coords(i);
    let mut out = [None; 4];
    if x > 0 {
        out[0] = Some(grid.index(x - 1, y));
    }
    if x + 1 < grid.nx {
        out[1] = Some(grid.index(x + 1, y));
    }
    if y > 0 {
        out[2] = Some(grid.index(x, y - 1));
    }
    if y + 1 < grid.ny {
        out[3] = Some(grid.index(x, y + 1));
    }
    out.into_iter().flatten()
}

fn count_components(grid: &Grid, inside: &[bool]) -> usize {
    let mut seen = vec![false; inside.len()];
    let mut count = 0;
    for start in 0..inside.len() {
        if !inside[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in neighbors4(grid, i) {
                if inside[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    count
}

/// Dilation by the 3x3 square, `iterations` times.
pub fn dilate(mask: &RegionMask, iterations: usize) -> RegionMask {
    let grid = mask.grid;
    let mut inside = mask.inside.clone();
    for _ in 0..iterations {
        let prev = inside.clone();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                if prev[grid.index(ix, iy)] {
                    continue;
                }
                let hit = (iy.saturating_sub(1)..=(iy + 1).min(grid.ny - 1))
                    .any(|y| (ix.saturating_sub(1)..=(ix + 1).min(grid.nx - 1)).any(|x| prev[grid.index(x, y)]));
                inside[grid.index(ix, iy)] = hit;
            }
        }
    }
    RegionMask::new(grid, inside).expect("same grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChanVeseParams {
    /// Length weight relative to the squared dynamic range of the
    /// normalized map.
    pub mu: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub time_step: f64,
    /// Segment `ln(psi)` instead of `psi`.
    pub log_transform: bool,
}

impl Default for ChanVeseParams {
    fn default() -> Self {
        Self { mu: 0.1, max_iter: 500, tol: 1e-5, time_step: 0.5, log_transform: false }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub mask: RegionMask,
    /// Energy after initialization and after every accepted step.
    pub energy: Vec<f64>,
    pub iterations: usize,
}

const REINIT_EVERY: usize = 10;
const STALL_WINDOW: usize = 10;
const MIN_STEP: f64 = 1e-8;

fn phase_means(u: &[f64], phi: &[f64]) -> Option<(f64, f64)> {
    let (mut s1, mut n1, mut s2, mut n2) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &p) in u.iter().zip(phi) {
        if p > 0.0 {
            s1 += v;
            n1 += 1;
        } else {
            s2 += v;
            n2 += 1;
        }
    }
    if n1 == 0 || n2 == 0 {
        None
    } else {
        Some((s1 / n1 as f64, s2 / n2 as f64))
    }
}

/// Sharp-partition energy: `mu` times the number of unit cell faces
/// separating the phases plus the squared deviations from the phase means.
fn energy(grid: &Grid, u: &[f64], phi: &[f64], mu: f64) -> f64 {
    let Some((c1, c2)) = phase_means(u, phi) else {
        return u.iter().map(|v| (v - u.iter().sum::<f64>() / u.len() as f64).powi(2)).sum();
    };
    let mut e = 0.0;
    for (i, (&v, &p)) in u.iter().zip(phi).enumerate() {
        e += if p > 0.0 { (v - c1).powi(2) } else { (v - c2).powi(2) };
        let (x, y) = grid.coords(i);
        if x + 1 < grid.nx && (p > 0.0) != (phi[grid.index(x + 1, y)] > 0.0) {
            e += mu;
        }
        if y + 1 < grid.ny && (p > 0.0) != (phi[grid.index(x, y + 1)] > 0.0) {
            e += mu;
        }
    }
    e
}

/// Signed distance in cell units to the phase boundary, positive inside;
/// the sign pattern of `phi` is preserved.
fn reinitialize(grid: &Grid, phi: &mut [f64]) {
    let inside: Vec<bool> = phi.iter().map(|&p| p > 0.0).collect();
    let boundary: Vec<(f64, f64, bool)> = (0..inside.len())
        .filter(|&i| neighbors4(grid, i).any(|j| inside[j] != inside[i]))
        .map(|i| {
            let (x, y) = grid.coords(i);
            (x as f64, y as f64, inside[i])
        })
        .collect();
    for (i, p) in phi.iter_mut().enumerate() {
        let (x, y) = grid.coords(i);
        let (x, y) = (x as f64, y as f64);
        let d = boundary
            .iter()
            .filter(|b| b.2 != inside[i])
            .map(|b| (b.0 - x).hypot(b.1 - y))
            .fold(f64::INFINITY, f64::min);
        let d = if d.is_finite() { d - 0.5 } else { grid.nx.max(grid.ny) as f64 };
        *p = if inside[i] { d } else { -d };
    }
}

fn dirac(phi: f64) -> f64 {
    1.0 / (PI * (1.0 + phi * phi))
}

/// One semi-implicit Chan–Vese update with neighbors from the old level set.
fn evolve(grid: &Grid, u: &[f64], phi: &[f64], c1: f64, c2: f64, mu: f64, dt: f64) -> Vec<f64> {
    const ETA: f64 = 1e-8;
    let (nx, ny) = (grid.nx, grid.ny);
    let at = |x: usize, y: usize| phi[y * nx + x];
    let mut out = phi.to_vec();
    for y in 0..ny {
        for x in 0..nx {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(nx - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(ny - 1);
            let p = at(x, y);
            let c_e = 1.0 / (ETA + (at(xp, y) - p).powi(2) + ((at(x, yp) - at(x, ym)) / 2.0).powi(2)).sqrt();
            let c_w = 1.0 / (ETA + (p - at(xm, y)).powi(2) + ((at(xm, yp) - at(xm, ym)) / 2.0).powi(2)).sqrt();
            let c_n = 1.0 / (ETA + ((at(xp, y) - at(xm, y)) / 2.0).powi(2) + (at(x, yp) - p).powi(2)).sqrt();
            let c_s = 1.0 / (ETA + ((at(xp, ym) - at(xm, ym)) / 2.0).powi(2) + (p - at(x, ym)).powi(2)).sqrt();
            let v = u[y * nx + x];
            let m = dt * dirac(p) * mu;
            let force = -(v - c1).powi(2) + (v - c2).powi(2);
            let num =
                p + m * (c_e * at(xp, y) + c_w * at(xm, y) + c_n * at(x, yp) + c_s * at(x, ym)) + dt * dirac(p) * force;
            out[y * nx + x] = num / (1.0 + m * (c_e + c_w + c_n + c_s));
        }
    }
    out
}

/// Segments `psi` into two phases and returns the one with the higher
/// mean. Fails on a map without two-phase structure.
pub fn chan_vese(psi: &IndicatorMap, params: &ChanVeseParams) -> Result<Segmentation> {
    let grid = psi.grid;
    if psi.values.len() != grid.len() {
        return Err(Error::DimensionMismatch("indicator does not match its grid".into()));
    }
    if psi.values.iter().any(|v| !v.is_finite()) || (params.log_transform && psi.values.iter().any(|&v| v <= 0.0)) {
        return Err(Error::Segmentation("indicator map has non-finite or non-positive values".into()));
    }
    let raw: Vec<f64> =
        if params.log_transform { psi.values.iter().map(|v| v.ln()).collect() } else { psi.values.clone() };
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Segmentation("indicator map is constant".into()));
    }
    let u: Vec<f64> = raw.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let mu = params.mu;

    let mut phi: Vec<f64> = u.iter().map(|&v| if v > 0.5 { 1.0 } else { -1.0 }).collect();
    reinitialize(&grid, &mut phi);
    let mut history = vec![energy(&grid, &u, &phi, mu)];
    let mut dt = params.time_step;
    let mut iterations = 0;
    let mut accepted = 0;
    while iterations < params.max_iter && dt >= MIN_STEP {
        iterations += 1;
        let Some((c1, c2)) = phase_means(&u, &phi) else { break };
        let trial = evolve(&grid, &u, &phi, c1, c2, mu, dt);
        let e = energy(&grid, &u, &trial, mu);
        let current = *history.last().expect("nonempty");
        if e > current || phase_means(&u, &trial).is_none() {
            dt *= 0.5;
            continue;
        }
        phi = trial;
        history.push(e);
        accepted += 1;
        if accepted % REINIT_EVERY == 0 {
            reinitialize(&grid, &mut phi);
        }
        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW];
            if (old - e) <= params.tol * e.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }

    let Some((c1, c2)) = phase_means(&u, &phi) else {
        return Err(Error::Segmentation("segmentation collapsed to one phase".into()));
    };
    let bright_inside = c1 >= c2;
    let inside: Vec<bool> = phi.iter().map(|&p| (p > 0.0) == bright_inside).collect();
    let mask = RegionMask::new(grid, inside)?;
    if mask.is_empty() {
        return Err(Error::Segmentation("empty mask".into()));
    }
    Ok(Segmentation { mask, energy: history, iterations })
}
