use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use hybridscat::acquisition::{ArrayGeometry, NoiseMode};
use hybridscat::csi::{CsiConfig, StateNormalization};
use hybridscat::medium::{angular_frequency, make_phantom, Grid, MediumMap, PhantomSpec, Point, C0};
use hybridscat::segment::ChanVeseParams;

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, message: String },
    Validation(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse { path, message } => write!(f, "{}: {message}", path.display()),
            ConfigError::Validation(problems) => {
                write!(f, "invalid configuration:")?;
                for p in problems {
                    write!(f, "\n  - {p}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// A phantom given inline or as a path to a TOML phantom file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecSource {
    File(PathBuf),
    Inline(PhantomSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Lower-left corner; the grid is centered on the origin if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 2]>,
    /// Refinement factor of the grid the synthetic data are simulated on.
    #[serde(default = "default_refinement")]
    pub data_refinement: usize,
}

fn default_refinement() -> usize {
    2
}

impl GridConfig {
    pub fn grid(&self) -> hybridscat::Result<Grid> {
        let origin = match self.origin {
            Some([x, y]) => Point::new(x, y),
            None => Point::new(-0.5 * self.h * self.nx as f64, -0.5 * self.h * self.ny as f64),
        };
        Grid::new(origin, self.h, self.nx, self.ny)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_sources: usize,
    pub n_receivers: usize,
    /// Array radius; three exterior wavelengths if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Receiver rotation; `pi / n_receivers` if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    pub center: [f64; 2],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { n_sources: 30, n_receivers: 30, radius: None, shift: None, center: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub level: f64,
    pub seed: u64,
    pub mode: NoiseMode,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { level: 0.0, seed: 0, mode: NoiseMode::FrobeniusRms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsmConfig {
    /// Relative data noise for the discrepancy principle; estimated from
    /// the singular values if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub mu: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub time_step: f64,
    pub log_transform: bool,
    pub dilations: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        let p = ChanVeseParams::default();
        Self {
            mu: p.mu,
            max_iter: p.max_iter,
            tol: p.tol,
            time_step: p.time_step,
            log_transform: p.log_transform,
            dilations: 2,
        }
    }
}

impl SegmentConfig {
    pub fn params(&self) -> ChanVeseParams {
        ChanVeseParams {
            mu: self.mu,
            max_iter: self.max_iter,
            tol: self.tol,
            time_step: self.time_step,
            log_transform: self.log_transform,
        }
    }
}

/// Where the quantitative inversion runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiDomain {
    /// The segmented mask inside the known background.
    #[default]
    Segmented,
    /// The whole grid against the homogeneous exterior medium.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsiSection {
    pub domain: CsiDomain,
    pub max_iter: usize,
    pub tol: f64,
    pub positivity: bool,
    pub block_size: usize,
    pub state_normalization: StateNormalization,
}

impl Default for CsiSection {
    fn default() -> Self {
        let c = CsiConfig::default();
        Self {
            domain: CsiDomain::Segmented,
            max_iter: c.max_iter,
            tol: c.tol,
            positivity: c.positivity,
            block_size: c.block_size,
            state_normalization: c.state_normalization,
        }
    }
}

impl CsiSection {
    pub fn config(&self, solver_tol: f64) -> CsiConfig {
        CsiConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            positivity: self.positivity,
            block_size: self.block_size,
            solver_tol,
            state_normalization: self.state_normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Hz.
    pub frequency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub grid: GridConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    pub phantom: SpecSource,
    /// Known background; the phantom's exterior medium if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<SpecSource>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub lsm: LsmConfig,
    #[serde(default)]
    pub segment: SegmentConfig,
    #[serde(default)]
    pub csi: CsiSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn read_spec(base: &Path, source: &SpecSource) -> Result<PhantomSpec, ConfigError> {
    match source {
        SpecSource::Inline(spec) => Ok(spec.clone()),
        SpecSource::File(rel) => {
            let path = base.join(rel);
            let text =
                std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path, message: e.to_string() })
        }
    }
}

impl PipelineConfig {
    pub fn grid(&self) -> hybridscat::Result<Grid> {
        self.grid.grid()
    }

    pub fn data_grid(&self) -> hybridscat::Result<Grid> {
        self.grid()?.refined(self.grid.data_refinement)
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec, ConfigError> {
        read_spec(&self.base_dir, &self.phantom)
    }

    pub fn background_spec(&self) -> Result<PhantomSpec, ConfigError> {
        match &self.background {
            Some(source) => read_spec(&self.base_dir, source),
            None => Ok(PhantomSpec::homogeneous(self.phantom_spec()?.exterior)),
        }
    }

    /// Referenced phantom files, resolved.
    pub fn input_files(&self) -> Vec<PathBuf> {
        [Some(&self.phantom), self.background.as_ref()]
            .into_iter()
            .flatten()
            .filter_map(|s| match s {
                SpecSource::File(p) => Some(self.base_dir.join(p)),
                SpecSource::Inline(_) => None,
            })
            .collect()
    }

    pub fn geometry(&self) -> Result<ArrayGeometry, ConfigError> {
        let g = &self.geometry;
        let radius = match g.radius {
            Some(r) => r,
            None => {
                let ext = self.phantom_spec()?.exterior;
                let n = ext
                    .refractive_index(angular_frequency(self.frequency))
                    .map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
                3.0 * C0 / (self.frequency * n.sqrt().re)
            }
        };
        Ok(ArrayGeometry {
            center: Point::new(g.center[0], g.center[1]),
            radius,
            n_sources: g.n_sources,
            n_receivers: g.n_receivers,
            receiver_shift: g.shift.unwrap_or(PI / g.n_receivers.max(1) as f64),
        })
    }

    /// Every violation, not just the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut p = Vec::new();
        let positive = |v: f64, name: &str, p: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                p.push(format!("{name} must be positive, got {v}"));
            }
        };
        positive(self.frequency, "frequency", &mut p);
        positive(self.grid.h, "grid.h", &mut p);
        if self.grid.nx == 0 || self.grid.ny == 0 {
            p.push("grid.nx and grid.ny must be at least 1".into());
        }
        if self.grid.data_refinement == 0 {
            p.push("grid.data_refinement must be at least 1".into());
        }
        if self.geometry.n_sources == 0 || self.geometry.n_receivers == 0 {
            p.push("geometry needs at least one source and one receiver".into());
        }
        if let Some(r) = self.geometry.radius {
            positive(r, "geometry.radius", &mut p);
        }
        if !(self.noise.level >= 0.0 && self.noise.level.is_finite()) {
            p.push(format!("noise.level must be nonnegative, got {}", self.noise.level));
        }
        if !(self.solver.tol > 1e-14 && self.solver.tol < 1e-2) {
            p.push(format!("solver.tol must lie in (1e-14, 1e-2), got {}", self.solver.tol));
        }
        if let Some(d) = self.lsm.noise_level {
            if !(0.0..1.0).contains(&d) {
                p.push(format!("lsm.noise_level must lie in [0, 1), got {d}"));
            }
        }
        positive(self.segment.mu, "segment.mu", &mut p);
        positive(self.segment.time_step, "segment.time_step", &mut p);
        if self.segment.max_iter == 0 {
            p.push("segment.max_iter must be at least 1".into());
        }
        if self.csi.block_size == 0 {
            p.push("csi.block_size must be at least 1".into());
        }

        let grid = if p.is_empty() { self.grid().map_err(|e| p.push(e.to_string())).ok() } else { None };
        let mut specs = Vec::new();
        for (name, spec) in [("phantom", self.phantom_spec()), ("background", self.background_spec())] {
            match spec {
                Ok(s) => specs.push((name, s)),
                Err(ConfigError::Validation(v)) => p.extend(v),
                Err(e) => p.push(e.to_string()),
            }
        }
        if let [(_, phantom), (_, background)] = specs.as_slice() {
            if phantom.exterior != background.exterior {
                p.push("phantom and background must share the exterior medium".into());
            }
        }
        if let Some(grid) = grid {
            for (name, spec) in &specs {
                match make_phantom(spec, &grid) {
                    Ok(medium) if *name == "phantom" => {
                        if let Ok(geometry) = self.geometry() {
                            if let Err(e) = geometry.validate(&medium) {
                                p.push(format!("geometry: {e}"));
                            }
                        }
                    }
                    Ok(_) => {}
                    Err(e) => p.push(format!("{name}: {e}")),
                }
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(p))
        }
    }

    pub fn media(&self) -> Result<(MediumMap, MediumMap), ConfigError> {
        let grid = self.grid().map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
        let to_cfg = |e: hybridscat::Error| ConfigError::Validation(vec![e.to_string()]);
        Ok((
            make_phantom(&self.phantom_spec()?, &grid).map_err(to_cfg)?,
            make_phantom(&self.background_spec()?, &grid).map_err(to_cfg)?,
        ))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Parses and validates configuration text; relative paths are resolved
/// against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path, origin: &Path) -> Result<PipelineConfig, ConfigError> {
    let mut config: PipelineConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
    config.base_dir = base_dir.to_path_buf();
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hybridscat::medium::{Material, Shape};
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
frequency = 299792458.0

[grid]
h = 0.05
nx = 32
ny = 32

[phantom]
exterior = { eps_r = 1.0 }
shapes = [{ kind = "disk", center = [0.0, 0.0], radius = 0.3, eps_r = 2.0 }]
"#;

    fn parse(text: &str) -> Result<PipelineConfig, ConfigError> {
        parse_config_str(text, Path::new("."), Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        let g = c.geometry().unwrap();
        assert_eq!((g.n_sources, g.n_receivers), (30, 30));
        assert!((g.receiver_shift - PI / 30.0).abs() < 1e-15);
        assert!((g.radius - 3.0).abs() < 1e-12);
        assert_eq!(c.noise.level, 0.0);
        assert_eq!(c.grid.data_refinement, 2);
        assert_eq!(c.background_spec().unwrap(), PhantomSpec::homogeneous(Material::VACUUM));
    }

    #[test]
    fn violations_are_listed_together() {
        let text = MINIMAL.replace("299792458.0", "-1.0").replace("h = 0.05", "h = 0.0");
        match parse(&text) {
            Err(ConfigError::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("frequency")));
                assert!(v.iter().any(|m| m.contains("grid.h")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = parse(&format!("{MINIMAL}\n[noise]\nlevle = 0.03\n")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Parse { .. }));
        assert!(msg.contains("levle"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn geometry_must_enclose_the_phantom() {
        let text = format!("{MINIMAL}\n[geometry]\nradius = 0.2\n");
        assert!(matches!(parse(&text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn phantom_files_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.toml"), "exterior = { eps_r = 1.0 }\n").unwrap();
        let text = "frequency = 3e8\nphantom = \"p.toml\"\n[grid]\nh = 0.05\nnx = 8\nny = 8\n";
        std::fs::write(dir.path().join("c.toml"), text).unwrap();
        let c = parse_config(&dir.path().join("c.toml")).unwrap();
        assert_eq!(c.input_files(), vec![dir.path().join("p.toml")]);
        std::fs::remove_file(dir.path().join("p.toml")).unwrap();
        assert!(parse_config(&dir.path().join("c.toml")).is_err());
    }

    fn config_strategy() -> impl Strategy<Value = PipelineConfig> {
        (
            1e8f64..1e10,
            8usize..40,
            0.0f64..0.1,
            0u64..1000,
            prop::option::of(0.0f64..0.5),
            1usize..4,
            any::<bool>(),
            1.1f64..5.0,
        )
            .prop_map(|(freq, n, level, seed, noise_level, dilations, full, eps)| {
                let lambda = C0 / freq;
                PipelineConfig {
                    frequency: freq,
                    output: None,
                    grid: GridConfig { h: lambda / 20.0, nx: n, ny: n + 1, origin: None, data_refinement: 2 },
                    geometry: GeometryConfig { radius: Some(3.0 * lambda), ..Default::default() },
                    phantom: SpecSource::Inline(PhantomSpec::homogeneous(Material::VACUUM).with_shape(Shape::Disk {
                        center: [0.0, 0.0],
                        radius: lambda / 8.0,
                        material: Material::new(eps, 0.0),
                    })),
                    background: None,
                    noise: NoiseConfig { level, seed, mode: NoiseMode::FrobeniusRms },
                    solver: SolverConfig::default(),
                    lsm: LsmConfig { noise_level },
                    segment: SegmentConfig { dilations, ..Default::default() },
                    csi: CsiSection {
                        domain: if full { CsiDomain::Full } else { CsiDomain::Segmented },
                        ..Default::default()
                    },
                    base_dir: PathBuf::from("."),
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn serialization_round_trips(config in config_strategy()) {
            let text = config.to_toml();
            let parsed = parse(&text).unwrap();
            prop_assert_eq!(parsed, config);
        }
    }
}
