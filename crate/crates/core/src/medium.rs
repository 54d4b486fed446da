//! Grids, media and contrast maps.
//!
//! Cells are uniform squares of side `h`. Cell `(ix, iy)` has center
//! `origin + ((ix + 0.5) h, (iy + 0.5) h)` and storage index `iy * nx + ix`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Vacuum permittivity in F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Speed of light in vacuum in m/s.
pub const C0: f64 = 299_792_458.0;

/// Relative slack applied to shape boundaries during rasterization so that
/// cell centers lying exactly on a boundary count as inside.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Angular frequency for a frequency in Hz.
pub fn angular_frequency(freq_hz: f64) -> f64 {
    2.0 * PI * freq_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(origin: Point, h: f64, nx: usize, ny: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if !(h > 0.0 && h.is_finite()) {
            problems.push(format!("cell size must be positive, got {h}"));
        }
        if nx == 0 || ny == 0 {
            problems.push(format!("cell counts must be at least 1, got {nx}x{ny}"));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            problems.push("grid origin must be finite".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self { origin, h, nx, ny })
    }

    /// Square grid of `n x n` cells centered on `center`.
    pub fn centered(center: Point, h: f64, n: usize) -> Result<Self> {
        let half = 0.5 * h * n as f64;
        Self::new(Point::new(center.x - half, center.y - half), h, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        Point::new(self.origin.x + (ix as f64 + 0.5) * self.h, self.origin.y + (iy as f64 + 0.5) * self.h)
    }

    pub fn center_of(&self, index: usize) -> Point {
        let (ix, iy) = self.coords(index);
        self.cell_center(ix, iy)
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.center_of(i))
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// Radius of the disk with the same area as one cell.
    pub fn equivalent_radius(&self) -> f64 {
        (self.cell_area() / PI).sqrt()
    }

    pub fn extent(&self) -> (Point, Point) {
        (self.origin, Point::new(self.origin.x + self.h * self.nx as f64, self.origin.y + self.h * self.ny as f64))
    }

    /// Cell containing `p`, if any.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.h;
        let fy = (p.y - self.origin.y) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        (ix < self.nx && iy < self.ny).then_some((ix, iy))
    }

    /// Same extent with every cell split into `factor x factor` cells.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Validation(vec!["refinement factor must be >= 1".into()]));
        }
        Self::new(self.origin, self.h / factor as f64, self.nx * factor, self.ny * factor)
    }

    /// Sub-grid covering cells `ix0..ix0+nx`, `iy0..iy0+ny`.
    pub fn window(&self, ix0: usize, iy0: usize, nx: usize, ny: usize) -> Result<Self> {
        if ix0 + nx > self.nx || iy0 + ny > self.ny {
            return Err(Error::DimensionMismatch("window exceeds grid".into()));
        }
        Self::new(Point::new(self.origin.x + ix0 as f64 * self.h, self.origin.y + iy0 as f64 * self.h), self.h, nx, ny)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self == other
    }
}

/// Relative permittivity and conductivity of a material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub eps_r: f64,
    #[serde(default)]
    pub sigma: f64,
}

impl Material {
    pub const VACUUM: Material = Material { eps_r: 1.0, sigma: 0.0 };

    pub const fn new(eps_r: f64, sigma: f64) -> Self {
        Self { eps_r, sigma }
    }

    fn problems(&self, what: &str, out: &mut Vec<String>) {
        if !(self.eps_r >= 1.0 && self.eps_r.is_finite()) {
            out.push(format!("{what}: eps_r must be >= 1, got {}", self.eps_r));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            out.push(format!("{what}: sigma must be >= 0, got {}", self.sigma));
        }
    }

    pub fn refractive_index(&self, omega: f64) -> Result<Complex64> {
        refractive_index(self.eps_r, self.sigma, omega)
    }
}

/// Complex refractive index `eps_r + i sigma / (omega eps0)`.
pub fn refractive_index(eps_r: f64, sigma: f64, omega: f64) -> Result<Complex64> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("negative conductivity {sigma}")));
    }
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("angular frequency must be positive, got {omega}")));
    }
    if !(eps_r >= 1.0) {
        return Err(Error::Domain(format!("relative permittivity {eps_r} < 1")));
    }
    Ok(Complex64::new(eps_r, sigma / (omega * EPS0)))
}

/// Wavenumber `k sqrt(n0)` of a medium with refractive index `n0`.
pub fn wavenumber(omega: f64, n0: Complex64) -> Complex64 {
    (omega / C0) * n0.sqrt()
}

/// Per-cell permittivity and conductivity plus the unbounded exterior.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumMap {
    pub grid: Grid,
    pub eps_r: Vec<f64>,
    pub sigma: Vec<f64>,
    pub exterior: Material,
}

impl MediumMap {
    pub fn uniform(grid: Grid, exterior: Material) -> Self {
        Self { grid, eps_r: vec![exterior.eps_r; grid.len()], sigma: vec![exterior.sigma; grid.len()], exterior }
    }

    pub fn from_parts(grid: Grid, eps_r: Vec<f64>, sigma: Vec<f64>, exterior: Material) -> Result<Self> {
        if eps_r.len() != grid.len() || sigma.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "medium maps of length {}/{} for a grid of {} cells",
                eps_r.len(),
                sigma.len(),
                grid.len()
            )));
        }
        let mut problems = Vec::new();
        exterior.problems("exterior", &mut problems);
        if eps_r.iter().any(|e| !(*e >= 1.0)) {
            problems.push("eps_r must be >= 1 in every cell".into());
        }
        if sigma.iter().any(|s| !(*s >= 0.0)) {
            problems.push("sigma must be >= 0 in every cell".into());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self { grid, eps_r, sigma, exterior })
    }

    pub fn material(&self, index: usize) -> Material {
        Material::new(self.eps_r[index], self.sigma[index])
    }

    pub fn set_material(&mut self, index: usize, m: Material) {
        self.eps_r[index] = m.eps_r;
        self.sigma[index] = m.sigma;
    }

    pub fn exterior_index(&self, omega: f64) -> Result<Complex64> {
        self.exterior.refractive_index(omega)
    }

    pub fn wavenumber(&self, omega: f64) -> Result<Complex64> {
        Ok(wavenumber(omega, self.exterior_index(omega)?))
    }

    pub fn index_map(&self, omega: f64) -> Result<Vec<Complex64>> {
        self.eps_r.iter().zip(&self.sigma).map(|(&e, &s)| refractive_index(e, s, omega)).collect()
    }

    /// Contrast `(n0 - n) / n0` of this medium against its own exterior.
    pub fn exterior_contrast(&self, omega: f64) -> Result<ContrastMap> {
        let n0 = self.exterior_index(omega)?;
        let n = self.index_map(omega)?;
        let nb = vec![n0; n.len()];
        contrast(self.grid, &n, &nb, n0)
    }

    /// True where the cell differs from the exterior medium.
    pub fn support(&self) -> Vec<bool> {
        self.eps_r
            .iter()
            .zip(&self.sigma)
            .map(|(&e, &s)| e != self.exterior.eps_r || s != self.exterior.sigma)
            .collect()
    }
}

/// Complex contrast values on a grid, zero outside `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMap {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub support: Vec<bool>,
}

impl ContrastMap {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()], support: vec![false; grid.len()] }
    }

    /// Builds a map from raw values; the support is where values are nonzero.
    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!("{} contrast values for {} cells", values.len(), grid.len())));
        }
        let support = values.iter().map(|v| v.norm() > 0.0).collect();
        Ok(Self { grid, values, support })
    }

    pub fn is_zero(&self) -> bool {
        !self.support.iter().any(|&s| s)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self::from_values(self.grid, self.values.iter().map(|v| v * factor).collect()).expect("same grid")
    }

    pub fn support_count(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }
}

/// Per-cell contrast `(nb - n) / n0`.
pub fn contrast(grid: Grid, n_map: &[Complex64], nb_map: &[Complex64], n0t: Complex64) -> Result<ContrastMap> {
    if n0t.norm() == 0.0 {
        return Err(Error::Domain("exterior refractive index is zero".into()));
    }
    if n_map.len() != grid.len() || nb_map.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "index maps of length {}/{} on a grid of {} cells",
            n_map.len(),
            nb_map.len(),
            grid.len()
        )));
    }
    let values = n_map.iter().zip(nb_map).map(|(n, nb)| (nb - n) / n0t).collect();
    ContrastMap::from_values(grid, values)
}

/// Complex samples on the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGridField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl ComplexGridField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!("{} field values for {} cells", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> Complex64) -> Self {
        Self { grid, values: grid.centers().map(f).collect() }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Geometric primitive of a phantom description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disk {
        center: [f64; 2],
        radius: f64,
        #[serde(flatten)]
        material: Material,
    },
    Annulus {
        center: [f64; 2],
        inner_radius: f64,
        outer_radius: f64,
        #[serde(flatten)]
        material: Material,
    },
    Rectangle {
        min: [f64; 2],
        max: [f64; 2],
        #[serde(flatten)]
        material: Material,
    },
    /// Concentric layers; `radii[i]` is the outer radius of layer `i`,
    /// listed from the outermost layer inwards.
    LayeredDisk { center: [f64; 2], radii: Vec<f64>, materials: Vec<Material> },
}

impl Shape {
    fn bounding_box(&self) -> (Point, Point) {
        match self {
            Shape::Disk { center, radius, .. } => square_box(*center, *radius),
            Shape::Annulus { center, outer_radius, .. } => square_box(*center, *outer_radius),
            Shape::Rectangle { min, max, .. } => (Point::new(min[0], min[1]), Point::new(max[0], max[1])),
            Shape::LayeredDisk { center, radii, .. } => square_box(*center, radii.iter().copied().fold(0.0, f64::max)),
        }
    }

    fn problems(&self, label: &str, out: &mut Vec<String>) {
        let nonneg = |v: f64, name: &str, out: &mut Vec<String>| {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{label}: {name} must be >= 0, got {v}"));
            }
        };
        match self {
            Shape::Disk { radius, material, .. } => {
                nonneg(*radius, "radius", out);
                material.problems(label, out);
            }
            Shape::Annulus { inner_radius, outer_radius, material, .. } => {
                nonneg(*inner_radius, "inner_radius", out);
                nonneg(*outer_radius, "outer_radius", out);
                if inner_radius > outer_radius {
                    out.push(format!("{label}: inner_radius exceeds outer_radius"));
                }
                material.problems(label, out);
            }
            Shape::Rectangle { min, max, material } => {
                if min[0] > max[0] || min[1] > max[1] {
                    out.push(format!("{label}: rectangle min exceeds max"));
                }
                material.problems(label, out);
            }
            Shape::LayeredDisk { radii, materials, .. } => {
                if radii.len() != materials.len() {
                    out.push(format!("{label}: {} radii but {} materials", radii.len(), materials.len()));
                }
                for r in radii {
                    nonneg(*r, "layer radius", out);
                }
                if radii.windows(2).any(|w| w[1] > w[0]) {
                    out.push(format!("{label}: layer radii must be listed outermost first"));
                }
                for m in materials {
                    m.problems(label, out);
                }
            }
        }
    }

    /// Material at `p`, if `p` lies inside the shape.
    fn material_at(&self, p: Point, h: f64) -> Option<Material> {
        let in_disk = |c: &[f64; 2], r: f64| {
            r > 0.0 && {
                let d2 = (p.x - c[0]).powi(2) + (p.y - c[1]).powi(2);
                d2 <= r * r * (1.0 + BOUNDARY_SLACK)
            }
        };
        match self {
            Shape::Disk { center, radius, material } => in_disk(center, *radius).then_some(*material),
            Shape::Annulus { center, inner_radius, outer_radius, material } => {
                let d2 = (p.x - center[0]).powi(2) + (p.y - center[1]).powi(2);
                let outside_hole = *inner_radius == 0.0 || d2 >= inner_radius * inner_radius * (1.0 - BOUNDARY_SLACK);
                (in_disk(center, *outer_radius) && outside_hole).then_some(*material)
            }
            Shape::Rectangle { min, max, material } => {
                let tol = BOUNDARY_SLACK * h;
                let inside = max[0] > min[0]
                    && max[1] > min[1]
                    && p.x >= min[0] - tol
                    && p.x <= max[0] + tol
                    && p.y >= min[1] - tol
                    && p.y <= max[1] + tol;
                inside.then_some(*material)
            }
            Shape::LayeredDisk { center, radii, materials } => {
                radii.iter().zip(materials).rev().find(|(r, _)| in_disk(center, **r)).map(|(_, m)| *m)
            }
        }
    }
}

fn square_box(c: [f64; 2], r: f64) -> (Point, Point) {
    (Point::new(c[0] - r, c[1] - r), Point::new(c[0] + r, c[1] + r))
}

/// Phantom description: an exterior medium and an ordered shape list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub exterior: Material,
    #[serde(default)]
    pub shapes: Vec<Shape>,
}

impl PhantomSpec {
    pub fn homogeneous(exterior: Material) -> Self {
        Self { exterior, shapes: Vec::new() }
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shapes.push(shape);
        self
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let mut problems = Vec::new();
        self.exterior.problems("exterior", &mut problems);
        let (lo, hi) = grid.extent();
        let tol = BOUNDARY_SLACK * grid.h;
        for (i, shape) in self.shapes.iter().enumerate() {
            let label = format!("shape {i}");
            shape.problems(&label, &mut problems);
            let (a, b) = shape.bounding_box();
            if a.x < lo.x - tol || a.y < lo.y - tol || b.x > hi.x + tol || b.y > hi.y + tol {
                problems.push(format!("{label}: extends beyond the grid"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Rasterizes a phantom: a cell takes a shape's material iff its center
/// lies inside the shape; later shapes overwrite earlier ones.
pub fn make_phantom(spec: &PhantomSpec, grid: &Grid) -> Result<MediumMap> {
    spec.validate(grid)?;
    let mut medium = MediumMap::uniform(*grid, spec.exterior);
    for shape in &spec.shapes {
        for idx in 0..grid.len() {
            if let Some(m) = shape.material_at(grid.center_of(idx), grid.h) {
                medium.set_material(idx, m);
            }
        }
    }
    Ok(medium)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn refractive_index_values() {
        let w = angular_frequency(3e9);
        assert_eq!(refractive_index(1.0, 0.0, w).unwrap(), c(1.0, 0.0));
        assert_eq!(refractive_index(4.0, 0.0, 1.0).unwrap(), c(4.0, 0.0));
        let n = refractive_index(10.0, 1.0, w).unwrap();
        // 1 / (2 pi 3e9 * 8.8541878128e-12) = 5.991701194840782
        assert_eq!(n.re, 10.0);
        assert!((n.im - 5.991_701_194_840_782).abs() < 1e-12, "{}", n.im);
        assert!(matches!(refractive_index(2.0, -1.0, w), Err(Error::Domain(_))));
        assert!(matches!(refractive_index(2.0, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn contrast_cases() {
        let g = Grid::new(Point::new(0.0, 0.0), 1.0, 2, 1).unwrap();
        let n = [c(1.5, 0.2), c(3.0, 0.0)];
        let same = contrast(g, &n, &n, c(1.0, 0.0)).unwrap();
        assert!(same.is_zero());
        assert!(same.values.iter().all(|v| *v == c(0.0, 0.0)));

        let one = [c(1.0, 0.0); 2];
        let m = contrast(g, &[c(2.0, 0.0), c(1.0, 0.0)], &one, c(1.0, 0.0)).unwrap();
        assert_eq!(m.values, vec![c(-1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(m.support, vec![true, false]);
        assert!(matches!(contrast(g, &one, &one, c(0.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn contrast_linear_in_difference() {
        let g = Grid::new(Point::new(0.0, 0.0), 1.0, 3, 1).unwrap();
        let nb = [c(2.0, 0.1), c(1.0, 0.0), c(4.0, 1.0)];
        let n = [c(1.0, 0.0), c(1.5, 0.5), c(2.0, 0.0)];
        let n0 = c(1.2, 0.3);
        let base = contrast(g, &n, &nb, n0).unwrap();
        let s = 2.5;
        let n_scaled: Vec<_> = nb.iter().zip(&n).map(|(b, x)| b - (b - x) * s).collect();
        let scaled = contrast(g, &n_scaled, &nb, n0).unwrap();
        for (a, b) in base.values.iter().zip(&scaled.values) {
            assert!((a * s - b).norm() < 1e-14);
        }
    }

    #[test]
    fn background_contrast_of_disk() {
        let g = Grid::centered(Point::new(0.0, 0.0), 0.1, 10).unwrap();
        let spec = PhantomSpec::homogeneous(Material::VACUUM).with_shape(Shape::Disk {
            center: [0.0, 0.0],
            radius: 0.25,
            material: Material::new(2.0, 0.0),
        });
        let medium = make_phantom(&spec, &g).unwrap();
        let mb = medium.exterior_contrast(1e9).unwrap();
        for (v, s) in mb.values.iter().zip(&mb.support) {
            if *s {
                assert_eq!(*v, c(-1.0, 0.0));
            } else {
                assert_eq!(*v, c(0.0, 0.0));
            }
        }
        assert!(mb.support_count() > 0);
    }

    #[test]
    fn empty_and_zero_radius_phantoms_are_uniform() {
        let g = Grid::centered(Point::new(0.0, 0.0), 0.1, 8).unwrap();
        let ext = Material::new(3.0, 0.1);
        let uniform = MediumMap::uniform(g, ext);
        assert_eq!(make_phantom(&PhantomSpec::homogeneous(ext), &g).unwrap(), uniform);
        let spec = PhantomSpec::homogeneous(ext).with_shape(Shape::Disk {
            center: [0.05, 0.05],
            radius: 0.0,
            material: Material::new(5.0, 0.0),
        });
        assert_eq!(make_phantom(&spec, &g).unwrap(), uniform);
    }

    #[test]
    fn disk_raster_matches_enumeration() {
        let h = 0.1;
        let g = Grid::new(Point::new(0.0, 0.0), h, 32, 32).unwrap();
        // Centered on the center of cell (15, 17).
        let spec = PhantomSpec::homogeneous(Material::VACUUM).with_shape(Shape::Disk {
            center: [15.5 * h, 17.5 * h],
            radius: 3.0 * h,
            material: Material::new(2.0, 0.0),
        });
        let medium = make_phantom(&spec, &g).unwrap();
        let count = medium.support().iter().filter(|&&s| s).count();
        let mut expected = 0;
        for i in -5i32..=5 {
            for j in -5i32..=5 {
                if i * i + j * j <= 9 {
                    expected += 1;
                }
            }
        }
        assert_eq!(count, expected);
    }

    #[test]
    fn later_shapes_win_and_layers_nest() {
        let g = Grid::centered(Point::new(0.0, 0.0), 0.1, 20).unwrap();
        let spec = PhantomSpec::homogeneous(Material::VACUUM)
            .with_shape(Shape::LayeredDisk {
                center: [0.0, 0.0],
                radii: vec![0.8, 0.6],
                materials: vec![Material::new(4.0, 0.5), Material::new(2.0, 0.1)],
            })
            .with_shape(Shape::Rectangle { min: [0.0, 0.0], max: [0.2, 0.2], material: Material::new(9.0, 0.0) });
        let m = make_phantom(&spec, &g).unwrap();
        let at = |x: f64, y: f64| {
            let (ix, iy) = g.cell_of(Point::new(x, y)).unwrap();
            m.material(g.index(ix, iy))
        };
        assert_eq!(at(0.05, 0.05), Material::new(9.0, 0.0));
        assert_eq!(at(-0.25, -0.05), Material::new(2.0, 0.1));
        assert_eq!(at(-0.65, 0.05), Material::new(4.0, 0.5));
        assert_eq!(at(-0.95, -0.95), Material::VACUUM);
    }

    #[test]
    fn validation_lists_every_problem() {
        let g = Grid::centered(Point::new(0.0, 0.0), 0.1, 10).unwrap();
        let spec = PhantomSpec::homogeneous(Material::new(0.5, 0.0))
            .with_shape(Shape::Disk { center: [0.0, 0.0], radius: -1.0, material: Material::VACUUM })
            .with_shape(Shape::Disk { center: [0.9, 0.0], radius: 0.3, material: Material::new(2.0, -1.0) });
        match make_phantom(&spec, &g) {
            Err(Error::Validation(p)) => assert!(p.len() >= 4, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_helpers() {
        let g = Grid::new(Point::new(-1.0, 2.0), 0.5, 4, 3).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(g.coords(g.index(3, 2)), (3, 2));
        assert_eq!(g.cell_center(0, 0), Point::new(-0.75, 2.25));
        assert_eq!(g.cell_of(Point::new(-0.9, 3.4)), Some((0, 2)));
        assert_eq!(g.cell_of(Point::new(1.1, 2.1)), None);
        let f = g.refined(2).unwrap();
        assert_eq!((f.nx, f.ny, f.h), (8, 6, 0.25));
        assert!(Grid::new(Point::new(0.0, 0.0), 0.0, 1, 1).is_err());
        assert!(Grid::new(Point::new(0.0, 0.0), 1.0, 0, 1).is_err());
    }
}
