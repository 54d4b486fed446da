//! Antenna geometry, multistatic data simulation and noise.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::forward::{point_source_field, solve_total_field, LsKernel, PointEvaluator};
use crate::medium::{angular_frequency, ComplexGridField, ContrastMap, MediumMap, Point};

/// Sources and receivers on a circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub center: Point,
    pub radius: f64,
    pub n_sources: usize,
    pub n_receivers: usize,
    pub receiver_shift: f64,
}

impl ArrayGeometry {
    /// `n` sources and `n` receivers rotated by `pi / n`.
    pub fn standard(center: Point, radius: f64, n: usize) -> Self {
        Self { center, radius, n_sources: n, n_receivers: n, receiver_shift: PI / n as f64 }
    }

    fn on_circle(&self, count: usize, shift: f64) -> Vec<Point> {
        (0..count)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / count as f64 + shift;
                Point::new(self.center.x + self.radius * t.cos(), self.center.y + self.radius * t.sin())
            })
            .collect()
    }

    pub fn sources(&self) -> Vec<Point> {
        self.on_circle(self.n_sources, 0.0)
    }

    pub fn receivers(&self) -> Vec<Point> {
        self.on_circle(self.n_receivers, self.receiver_shift)
    }

    /// Checks counts, radius, and that the circle encloses every cell
    /// flagged in `support`.
    pub fn validate(&self, medium: &MediumMap) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_sources == 0 || self.n_receivers == 0 {
            problems.push("at least one source and one receiver are required".to_string());
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            problems.push(format!("array radius must be positive, got {}", self.radius));
        }
        let grid = medium.grid;
        let half_diag = grid.h * FRAC_1_SQRT_2;
        let circumradius = medium
            .support()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(j, _)| grid.center_of(j).distance(self.center) + half_diag)
            .fold(0.0, f64::max);
        if self.radius <= circumradius {
            problems.push(format!(
                "array radius {} does not enclose the scatterer support (circumradius {circumradius})",
                self.radius
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Scattered fields for every source/receiver pair, source-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultistaticData {
    pub geometry: ArrayGeometry,
    pub u_s: Vec<Complex64>,
    pub u_s_b: Option<Vec<Complex64>>,
}

impl MultistaticData {
    pub fn new(geometry: ArrayGeometry, u_s: Vec<Complex64>, u_s_b: Option<Vec<Complex64>>) -> Result<Self> {
        let n = geometry.n_sources * geometry.n_receivers;
        if u_s.len() != n || u_s_b.as_ref().is_some_and(|b| b.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "data for {}x{} antennas must have {n} entries",
                geometry.n_sources, geometry.n_receivers
            )));
        }
        let finite = |v: &[Complex64]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite(&u_s) || u_s_b.as_deref().is_some_and(|b| !finite(b)) {
            return Err(Error::Domain("multistatic data contain non-finite entries".into()));
        }
        Ok(Self { geometry, u_s, u_s_b })
    }

    pub fn n_sources(&self) -> usize {
        self.geometry.n_sources
    }

    pub fn n_receivers(&self) -> usize {
        self.geometry.n_receivers
    }

    pub fn get(&self, s: usize, r: usize) -> Complex64 {
        self.u_s[s * self.geometry.n_receivers + r]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.u_s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `u_s - u_s_b`, or `u_s` when no background data are attached.
    pub fn background_subtracted(&self) -> Vec<Complex64> {
        match &self.u_s_b {
            Some(b) => self.u_s.iter().zip(b).map(|(a, b)| a - b).collect(),
            None => self.u_s.clone(),
        }
    }
}

fn support_cells(maps: &[&ContrastMap]) -> Vec<usize> {
    let n = maps[0].values.len();
    (0..n).filter(|&j| maps.iter().any(|m| m.support[j])).collect()
}

/// Scattered field rows for every source, computed in parallel.
fn simulate_rows(
    kernel: &LsKernel,
    m: &ContrastMap,
    sources: &[Point],
    evaluator: &PointEvaluator,
    tol: f64,
) -> Result<Vec<Vec<Complex64>>> {
    sources
        .par_iter()
        .map(|&xs| {
            if m.is_zero() {
                return Ok(vec![Complex64::new(0.0, 0.0); evaluator.num_points()]);
            }
            let uinc = point_source_field(kernel, xs)?;
            let (u, _) = solve_total_field(&uinc, m, kernel, tol)?;
            let w =
                ComplexGridField { grid: u.grid, values: u.values.iter().zip(&m.values).map(|(a, b)| a * b).collect() };
            evaluator.evaluate(&w)
        })
        .collect()
}

/// Multistatic scattered fields of `total_medium` and `background_medium`
/// under unit point-source incidence.
pub fn simulate_dataset(
    total_medium: &MediumMap,
    background_medium: &MediumMap,
    geometry: &ArrayGeometry,
    freq: f64,
    tol: f64,
) -> Result<MultistaticData> {
    if !total_medium.grid.same_as(&background_medium.grid) || total_medium.exterior != background_medium.exterior {
        return Err(Error::DimensionMismatch("total and background media must share grid and exterior".into()));
    }
    geometry.validate(total_medium)?;
    geometry.validate(background_medium)?;
    let omega = angular_frequency(freq);
    let m = total_medium.exterior_contrast(omega)?;
    let mb = background_medium.exterior_contrast(omega)?;
    let kernel = LsKernel::new(total_medium.grid, total_medium.wavenumber(omega)?)?;
    let cells = support_cells(&[&m, &mb]);
    let sources = geometry.sources();
    let receivers = geometry.receivers();
    let probe = PointEvaluator::new(&kernel, &sources, &cells);
    if let Err(Error::Proximity(msg)) = probe {
        return Err(Error::Validation(vec![format!("source too close to the scatterer: {msg}")]));
    }
    let evaluator = PointEvaluator::new(&kernel, &receivers, &cells)?;

    let rows = simulate_rows(&kernel, &m, &sources, &evaluator, tol)?;
    let rows_b =
        if mb.values == m.values { rows.clone() } else { simulate_rows(&kernel, &mb, &sources, &evaluator, tol)? };
    MultistaticData::new(*geometry, rows.concat(), Some(rows_b.concat()))
}

/// How the noise standard deviation is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Same deviation for every entry: `level * ||u_s||_F / sqrt(S R)`.
    #[default]
    FrobeniusRms,
    /// Deviation proportional to each entry's magnitude.
    PerEntry,
}

/// Adds circular complex Gaussian noise to `u_s`; background data are left
/// untouched.
pub fn add_noise(data: &MultistaticData, level: f64, seed: u64) -> Result<MultistaticData> {
    add_noise_with(data, level, seed, NoiseMode::FrobeniusRms)
}

pub fn add_noise_with(data: &MultistaticData, level: f64, seed: u64, mode: NoiseMode) -> Result<MultistaticData> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::Domain(format!("noise level must be nonnegative, got {level}")));
    }
    let mut out = data.clone();
    if level == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rms = data.frobenius_norm() / (data.u_s.len() as f64).sqrt();
    for v in out.u_s.iter_mut() {
        let std = match mode {
            NoiseMode::FrobeniusRms => level * rms,
            NoiseMode::PerEntry => level * v.norm(),
        };
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v += Complex64::new(re, im) * (std * FRAC_1_SQRT_2);
    }
    Ok(out)
}
