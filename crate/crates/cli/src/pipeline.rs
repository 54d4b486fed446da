use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hybridscat::acquisition::{add_noise_with, simulate_dataset, MultistaticData};
use hybridscat::csi::{contrast_to_physical, run_csi};
use hybridscat::io;
use hybridscat::lsm::{build_lsm_operator, indicator_map, GreenCache, IndicatorMap};
use hybridscat::medium::{angular_frequency, make_phantom, MediumMap};
use hybridscat::segment::{chan_vese, dilate, RegionMask};

use crate::config::{ConfigError, CsiDomain, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Phantom,
    Forward,
    Lsm,
    Segment,
    Csi,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Phantom, Stage::Forward, Stage::Lsm, Stage::Segment, Stage::Csi];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Phantom => "phantom",
            Stage::Forward => "forward",
            Stage::Lsm => "lsm",
            Stage::Segment => "segment",
            Stage::Csi => "csi",
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Phantom => &[
                "phantom_eps_r.rgrid",
                "phantom_sigma.rgrid",
                "background_eps_r.rgrid",
                "background_sigma.rgrid",
                "phantom_eps_r.pgm",
            ],
            Stage::Forward => &["u_s.mstat", "u_s_b.mstat"],
            Stage::Lsm => &["indicator.rgrid", "indicator.pgm"],
            Stage::Segment => &["mask.bgrid", "mask.pgm"],
            Stage::Csi => &["csi_eps_r.rgrid", "csi_sigma.rgrid", "csi_eps_r.pgm", "csi_history.csv"],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug)]
pub enum PipelineError {
    Config(ConfigError),
    Stage { stage: Stage, source: hybridscat::Error },
    Io(std::io::Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        use hybridscat::Error as E;
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { source, .. } => match source {
                E::NonConvergence { .. } | E::Singularity(_) | E::Proximity(_) => 3,
                E::Segmentation(_) => 4,
                E::Validation(_) | E::Domain(_) | E::MissingBackground(_) => 2,
                _ => 1,
            },
            PipelineError::Io(_) => 1,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Config(e) => write!(f, "{e}"),
            PipelineError::Stage { stage, source } => write!(f, "stage {stage} failed: {source}"),
            PipelineError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e)
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Reused,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: Stage,
    pub status: StageStatus,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<FileRecord>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

pub const MANIFEST: &str = "manifest.json";
const STAMPS: &str = ".stamps";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output: PathBuf,
    /// Last stage to run.
    pub until: Stage,
    /// Stage rerun even if its artifacts are current.
    pub force: Option<Stage>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_record(path: &Path, shown: String) -> std::io::Result<FileRecord> {
    let bytes = std::fs::read(path)?;
    Ok(FileRecord { path: shown, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// Hash over the settings that determine a stage's artifacts and the
/// fingerprint of the stage before it.
fn fingerprint(config: &PipelineConfig, stage: Stage, upstream: &str) -> Result<String, ConfigError> {
    let phantom = config.phantom_spec()?;
    let background = config.background_spec()?;
    let settings = match stage {
        Stage::Phantom => serde_json::json!({ "grid": config.grid, "phantom": phantom, "background": background }),
        Stage::Forward => serde_json::json!({
            "frequency": config.frequency,
            "geometry": config.geometry,
            "noise": config.noise,
            "solver": config.solver,
        }),
        Stage::Lsm => serde_json::json!({ "lsm": config.lsm }),
        Stage::Segment => serde_json::json!({ "segment": config.segment }),
        Stage::Csi => serde_json::json!({ "csi": config.csi }),
    };
    let text = format!("{}\n{}\n{}\n{}", env!("CARGO_PKG_VERSION"), stage, upstream, settings);
    Ok(sha256_hex(text.as_bytes()))
}

struct Context<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
}

impl Context<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn background(&self) -> hybridscat::Result<MediumMap> {
        let grid = self.config.grid()?;
        let (g1, eps) = io::read_real_grid(&self.path("background_eps_r.rgrid"))?;
        let (g2, sigma) = io::read_real_grid(&self.path("background_sigma.rgrid"))?;
        if !g1.same_as(&grid) || !g2.same_as(&grid) {
            return Err(hybridscat::Error::Format("background grid differs from the configured grid".into()));
        }
        let exterior = self.config.phantom_spec().map_err(to_validation)?.exterior;
        MediumMap::from_parts(grid, eps, sigma, exterior)
    }

    fn data(&self) -> hybridscat::Result<MultistaticData> {
        let geometry = self.config.geometry().map_err(to_validation)?;
        let (s, r, u_s) = io::read_multistatic(&self.path("u_s.mstat"))?;
        let (sb, rb, u_s_b) = io::read_multistatic(&self.path("u_s_b.mstat"))?;
        if (s, r) != (geometry.n_sources, geometry.n_receivers) || (sb, rb) != (s, r) {
            return Err(hybridscat::Error::Format(format!(
                "data are {s}x{r}, geometry expects {}x{}",
                geometry.n_sources, geometry.n_receivers
            )));
        }
        MultistaticData::new(geometry, u_s, Some(u_s_b))
    }

    fn run(&self, stage: Stage) -> hybridscat::Result<()> {
        let c = self.config;
        match stage {
            Stage::Phantom => {
                let (phantom, background) = c.media().map_err(to_validation)?;
                io::write_real_grid(&self.path("phantom_eps_r.rgrid"), &phantom.grid, &phantom.eps_r)?;
                io::write_real_grid(&self.path("phantom_sigma.rgrid"), &phantom.grid, &phantom.sigma)?;
                io::write_real_grid(&self.path("background_eps_r.rgrid"), &background.grid, &background.eps_r)?;
                io::write_real_grid(&self.path("background_sigma.rgrid"), &background.grid, &background.sigma)?;
                io::write_pgm(&self.path("phantom_eps_r.pgm"), &phantom.grid, &phantom.eps_r)
            }
            Stage::Forward => {
                let fine = c.data_grid()?;
                let total = make_phantom(&c.phantom_spec().map_err(to_validation)?, &fine)?;
                let background = make_phantom(&c.background_spec().map_err(to_validation)?, &fine)?;
                let geometry = c.geometry().map_err(to_validation)?;
                let clean = simulate_dataset(&total, &background, &geometry, c.frequency, c.solver.tol)?;
                let data = add_noise_with(&clean, c.noise.level, c.noise.seed, c.noise.mode)?;
                let (s, r) = (data.n_sources(), data.n_receivers());
                io::write_multistatic(&self.path("u_s.mstat"), s, r, &data.u_s)?;
                let u_s_b = data.u_s_b.as_ref().expect("simulated data carry background fields");
                io::write_multistatic(&self.path("u_s_b.mstat"), s, r, u_s_b)
            }
            Stage::Lsm => {
                let background = self.background()?;
                let data = self.data()?;
                let op = build_lsm_operator(&data)?;
                let cache = GreenCache::build(&background, &data.geometry, c.frequency, c.solver.tol)?;
                let map = indicator_map(&op, &cache, &background.grid, discrepancy_level(c, &data))?;
                io::write_real_grid(&self.path("indicator.rgrid"), &map.grid, &map.values)?;
                io::write_pgm(&self.path("indicator.pgm"), &map.grid, &map.values)
            }
            Stage::Segment => {
                let (grid, values) = io::read_real_grid(&self.path("indicator.rgrid"))?;
                let seg = chan_vese(&IndicatorMap { grid, values }, &c.segment.params())?;
                let mask = dilate(&seg.mask, c.segment.dilations);
                io::write_mask(&self.path("mask.bgrid"), &mask)?;
                io::write_mask_pgm(&self.path("mask.pgm"), &mask)
            }
            Stage::Csi => {
                let background = self.background()?;
                let data = self.data()?;
                let config = c.csi.config(c.solver.tol);
                let (reference, t, data) = match c.csi.domain {
                    CsiDomain::Segmented => {
                        let mask = io::read_mask(&self.path("mask.bgrid"))?;
                        (background, mask, data)
                    }
                    CsiDomain::Full => {
                        let uniform = MediumMap::uniform(background.grid, background.exterior);
                        let t = RegionMask::new(background.grid, vec![true; background.grid.len()])?;
                        let plain = MultistaticData::new(data.geometry, data.u_s, None)?;
                        (uniform, t, plain)
                    }
                };
                if !t.grid.same_as(&reference.grid) {
                    return Err(hybridscat::Error::Format("mask grid differs from the configured grid".into()));
                }
                let result = run_csi(&data, &reference, &t, c.frequency, &config)?;
                let omega = angular_frequency(c.frequency);
                let n0t = reference.exterior_index(omega)?;
                let maps = contrast_to_physical(&result.contrast, n0t, omega)?;
                let mut eps = reference.eps_r.clone();
                let mut sigma = reference.sigma.clone();
                for i in t.indices() {
                    eps[i] = maps.eps_r[i];
                    sigma[i] = maps.sigma[i];
                }
                io::write_real_grid(&self.path("csi_eps_r.rgrid"), &reference.grid, &eps)?;
                io::write_real_grid(&self.path("csi_sigma.rgrid"), &reference.grid, &sigma)?;
                io::write_pgm(&self.path("csi_eps_r.pgm"), &reference.grid, &eps)?;
                io::write_history(&self.path("csi_history.csv"), &result.history)
            }
        }
    }
}

/// Configured discrepancy level, else the injected noise fraction rescaled
/// from `||u_s||` to the norm of the difference matrix, else `None` so the
/// level is estimated from the singular values.
fn discrepancy_level(c: &PipelineConfig, data: &MultistaticData) -> Option<f64> {
    c.lsm.noise_level.or_else(|| {
        let diff: f64 = data.background_subtracted().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        (c.noise.level > 0.0 && diff > 0.0).then(|| c.noise.level * data.frobenius_norm() / diff)
    })
}

fn to_validation(e: ConfigError) -> hybridscat::Error {
    hybridscat::Error::Validation(vec![e.to_string()])
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(out.join(MANIFEST), text + "\n")?;
    Ok(())
}

/// Runs stages in order up to `opts.until`, reusing any stage whose
/// artifacts exist and whose fingerprint matches; a rerun stage forces
/// every later stage to rerun. The manifest is rewritten after each stage.
pub fn run_pipeline(config: &PipelineConfig, opts: &RunOptions) -> Result<Manifest, PipelineError> {
    let out = opts.output.as_path();
    std::fs::create_dir_all(out.join(STAMPS))?;
    let ctx = Context { config, out };

    let mut inputs = Vec::new();
    for path in config.input_files() {
        inputs.push(file_record(&path, path.display().to_string())?);
    }
    let mut manifest = Manifest {
        tool: "hybridscat".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.noise.seed,
        config: serde_json::to_value(config).expect("configuration serializes"),
        inputs,
        stages: Vec::new(),
        outputs: Vec::new(),
        failed_stage: None,
        error: None,
    };

    let mut upstream = String::new();
    let mut dirty = false;
    for stage in Stage::ALL.into_iter().filter(|s| *s <= opts.until) {
        let print = fingerprint(config, stage, &upstream)?;
        let stamp = out.join(STAMPS).join(stage.name());
        let current = std::fs::read_to_string(&stamp).is_ok_and(|s| s == print)
            && stage.outputs().iter().all(|f| out.join(f).is_file());
        let start = Instant::now();
        let status = if current && !dirty && opts.force != Some(stage) {
            log::info!("{stage}: reusing artifacts");
            StageStatus::Reused
        } else {
            log::info!("{stage}: running");
            let _ = std::fs::remove_file(&stamp);
            match ctx.run(stage) {
                Ok(()) => {
                    std::fs::write(&stamp, &print)?;
                    dirty = true;
                    StageStatus::Ran
                }
                Err(source) => {
                    manifest.stages.push(StageRecord {
                        name: stage,
                        status: StageStatus::Failed,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    });
                    manifest.failed_stage = Some(stage);
                    manifest.error = Some(source.to_string());
                    manifest.outputs = collect_outputs(out)?;
                    write_manifest(out, &manifest)?;
                    return Err(PipelineError::Stage { stage, source });
                }
            }
        };
        manifest.stages.push(StageRecord { name: stage, status, wall_time_s: start.elapsed().as_secs_f64() });
        manifest.outputs = collect_outputs(out)?;
        write_manifest(out, &manifest)?;
        upstream = print;
    }
    Ok(manifest)
}

fn collect_outputs(out: &Path) -> std::io::Result<Vec<FileRecord>> {
    let mut records = Vec::new();
    for stage in Stage::ALL {
        for name in stage.outputs() {
            let path = out.join(name);
            if path.is_file() {
                records.push(file_record(&path, (*name).to_string())?);
            }
        }
    }
    Ok(records)
}
