//! Binary tensor files, atomic output and the batch run configuration.
//!
//! Tensor file layout, all integers and floats little-endian:
//!
//! | offset | size      | content                           |
//! |--------|-----------|-----------------------------------|
//! | 0      | 4         | magic `RIT3`                      |
//! | 4      | 4         | version, `u32` = 1                |
//! | 8      | 24        | `nx`, `ny`, `nz` as `u64`         |
//! | 32     | 16·n      | `(re, im)` pairs as `f64`, k fastest |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{system_preset, RadarGeometry};
use crate::operators::OperatorPair;
use crate::regularizers::CognitionSpec;
use crate::solver::{admm_solve, matched_filter, SolverParams};
use crate::tasks::{sparse_cognitions, task_preset, TaskId, DEFAULT_GRID};
use crate::tensor::ComplexTensor3;

pub const MAGIC: &[u8; 4] = b"RIT3";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

/// Largest element count a reader accepts (2^31 voxels, 32 GiB payload).
pub const MAX_ELEMENTS: u64 = 1 << 31;

pub fn encode_tensor(t: &ComplexTensor3) -> Vec<u8> {
    let (nx, ny, nz) = t.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in [nx, ny, nz] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for z in t.as_slice() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<ComplexTensor3> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "header truncated: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (nx, ny, nz) = (dim(8), dim(16), dim(24));
    let count = nx
        .checked_mul(ny)
        .and_then(|n| n.checked_mul(nz))
        .filter(|&n| n > 0 && n <= MAX_ELEMENTS)
        .ok_or_else(|| Error::Format(format!("unsupported dims ({nx}, {ny}, {nz})")))?;
    let expected = 16 * count as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "payload truncated: {} of {expected} bytes",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    ComplexTensor3::from_vec((nx as usize, ny as usize, nz as usize), values)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<ComplexTensor3> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &ComplexTensor3) -> Result<()> {
    write_atomic(path, &encode_tensor(t))
}

/// Writes to a sibling temporary file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "output path has no file name",
        ))
    })?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Geometry section of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometryConfig {
    /// A system preset name on the default grid, e.g. `"task2"`.
    Named(String),
    /// A system preset discretized on a chosen grid.
    Preset(PresetGrid),
    Explicit(RadarGeometry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetGrid {
    pub preset: String,
    pub nx: usize,
    pub ny: usize,
    pub nr: usize,
}

impl GeometryConfig {
    pub fn resolve(&self) -> Result<RadarGeometry> {
        let lookup = |name: &str| {
            system_preset(name)
                .ok_or_else(|| Error::Config(format!("unknown geometry preset {name:?}")))
        };
        let g = match self {
            GeometryConfig::Named(name) => {
                let (nx, ny, nr) = DEFAULT_GRID;
                RadarGeometry::from_preset(&lookup(name)?, nx, ny, nr)?
            }
            GeometryConfig::Preset(p) => {
                RadarGeometry::from_preset(&lookup(&p.preset)?, p.nx, p.ny, p.nr)?
            }
            GeometryConfig::Explicit(g) => *g,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Solver fields a config may override; unset fields keep the task preset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub gamma: Option<f64>,
    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub component_count: Option<usize>,
}

impl SolverOverrides {
    pub fn apply(&self, mut p: SolverParams) -> SolverParams {
        p.gamma = self.gamma.unwrap_or(p.gamma);
        p.max_iters = self.max_iters.unwrap_or(p.max_iters);
        p.rel_tol = self.rel_tol.unwrap_or(p.rel_tol);
        p.component_count = self.component_count.unwrap_or(p.component_count);
        p
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub echo: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// JSON document driving one batch run.
///
/// ```json
/// { "task": 2, "geometry": {"preset": "task2", "nx": 32, "ny": 32, "nr": 64},
///   "seed": 7, "snr_db": 10.0, "solver": {"gamma": 1.5} }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, deserialize_with = "task_id_opt")]
    pub task: Option<TaskId>,
    /// Defaults to the task's own system preset on the default grid.
    #[serde(default)]
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the task preset's SNR.
    #[serde(default)]
    pub snr_db: Option<f64>,
    /// Simulate without noise; conflicts with `snr_db`.
    #[serde(default)]
    pub noiseless: bool,
    /// Replaces the task preset's regularizer list.
    #[serde(default)]
    pub cognitions: Option<Vec<CognitionSpec>>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub paths: PathsConfig,
}

fn task_id_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<TaskId>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(u64),
        Name(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Num(n)) => TaskId::from_number(n)
            .map(Some)
            .map_err(serde::de::Error::custom),
        Some(Raw::Name(s)) => s.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

/// A config with every default filled in and every field validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub task: TaskId,
    pub geometry: RadarGeometry,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub cognitions: Vec<CognitionSpec>,
    pub solver: SolverParams,
    pub output_component: usize,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Fills defaults from the task preset and validates the result. A task
    /// given on the command line must agree with the config's.
    pub fn resolve(&self, task: Option<TaskId>) -> Result<ResolvedRun> {
        let task = match (task, self.task) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "task {a} on the command line but {b} in the config"
                )));
            }
            (Some(t), _) | (None, Some(t)) => t,
            (None, None) => return Err(Error::Config("no task given".into())),
        };
        let preset = task_preset(task);
        let geometry = match &self.geometry {
            Some(g) => g.resolve()?,
            None => preset.geometry_default,
        };
        if self.noiseless && self.snr_db.is_some() {
            return Err(Error::Config(
                "noiseless and snr_db are mutually exclusive".into(),
            ));
        }
        let snr_db = if self.noiseless {
            None
        } else {
            Some(self.snr_db.unwrap_or(preset.snr_db))
        };
        if let Some(s) = snr_db {
            if !s.is_finite() {
                return Err(Error::Config(format!("snr_db must be finite, got {s}")));
            }
        }
        let solver = self.solver.apply(preset.solver_params());
        solver.validate()?;
        let cognitions = self.cognitions.clone().unwrap_or(preset.cognitions);
        for c in &cognitions {
            c.validate(solver.component_count)?;
        }
        if preset.output_component >= solver.component_count {
            return Err(Error::Config(format!(
                "task {task} reads component {} but only {} are configured",
                preset.output_component, solver.component_count
            )));
        }
        Ok(ResolvedRun {
            task,
            geometry,
            seed: self.seed,
            snr_db,
            cognitions,
            solver,
            output_component: preset.output_component,
            paths: self.paths.clone(),
        })
    }
}

/// Reconstruction method of a batch run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Matched filter only.
    Mf,
    /// One ℓ1 term on a single component.
    Sparse,
    /// The task's full regularizer set.
    Task,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(Method::Mf),
            "sparse" => Ok(Method::Sparse),
            "task" => Ok(Method::Task),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

impl ResolvedRun {
    /// Swaps the regularizers for the sparsity-only baseline. Solver
    /// overrides from the config still apply on top of the defaults.
    pub fn sparse_baseline(&self, overrides: &SolverOverrides) -> Result<ResolvedRun> {
        let solver = overrides.apply(SolverParams::default());
        solver.validate()?;
        if solver.component_count != 1 {
            return Err(Error::Config(
                "the sparse baseline has exactly one component".into(),
            ));
        }
        Ok(ResolvedRun {
            cognitions: sparse_cognitions(self.task),
            solver,
            output_component: 0,
            ..self.clone()
        })
    }

    /// Reconstructs an image from an echo with this run's regularizers.
    pub fn reconstruct(&self, y: &ComplexTensor3) -> Result<ComplexTensor3> {
        let dims = self.geometry.dims();
        if y.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: y.dims(),
            });
        }
        let op = OperatorPair::new(&self.geometry)?;
        let mut components = admm_solve(&op, y, &self.cognitions, &self.solver)?.0;
        Ok(components.swap_remove(self.output_component))
    }

    /// Runs one of the three methods on an echo.
    pub fn run_method(
        &self,
        method: Method,
        overrides: &SolverOverrides,
        y: &ComplexTensor3,
    ) -> Result<ComplexTensor3> {
        match method {
            Method::Mf => {
                let dims = self.geometry.dims();
                if y.dims() != dims {
                    return Err(Error::DimensionMismatch {
                        expected: dims,
                        found: y.dims(),
                    });
                }
                matched_filter(&OperatorPair::new(&self.geometry)?, y)
            }
            Method::Sparse => self.sparse_baseline(overrides)?.reconstruct(y),
            Method::Task => self.reconstruct(y),
        }
    }
}
