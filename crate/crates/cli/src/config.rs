//! `key = value` run configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Flow,
    Perim,
    Curvature,
    Alexandrov,
    Limits,
    Holder,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "flow" => Mode::Flow,
            "perim" => Mode::Perim,
            "curvature" => Mode::Curvature,
            "alexandrov" => Mode::Alexandrov,
            "limits" => Mode::Limits,
            "holder" => Mode::Holder,
            _ => return Err(format!("unknown mode `{s}`")),
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Flow => "flow",
            Mode::Perim => "perim",
            Mode::Curvature => "curvature",
            Mode::Alexandrov => "alexandrov",
            Mode::Limits => "limits",
            Mode::Holder => "holder",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Ball { r: f64 },
    Ellipse { rx: f64, ry: f64 },
    /// Two disks of radius `r` centered at `(±d/2, 0)`.
    TwoBalls { r: f64, d: f64 },
    Mask(PathBuf),
    /// Raster of `B_f` for the configured deformation file.
    Deformation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelOverrides {
    pub nearfield_radius: Option<usize>,
    pub subdivision_depth: Option<u32>,
    pub r_cut: Option<f64>,
    pub tail_tolerance: Option<f64>,
    pub far_field: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub s: Option<f64>,
    pub s_list: Vec<f64>,
    pub h: Option<f64>,
    pub m: Option<f64>,
    pub grid: Option<GridSpec>,
    pub shape: Option<Shape>,
    pub n_steps: Option<usize>,
    pub snapshot_stride: usize,
    pub gamma: f64,
    pub tol_ball: f64,
    pub stop_on_ball: bool,
    pub kernel: KernelOverrides,
    pub delta: f64,
    pub k_max: usize,
    pub samples: usize,
    pub deformation: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub dump_weights: bool,
    /// Accepted entries in file order, for the report echo.
    pub entries: Vec<(String, String)>,
}

const KEYS: &[&str] = &[
    "mode",
    "s",
    "s_list",
    "h",
    "m",
    "grid",
    "shape",
    "n_steps",
    "snapshot_stride",
    "gamma",
    "tol_ball",
    "stop_on_ball",
    "nearfield_radius",
    "subdivision_depth",
    "r_cut",
    "tail_tolerance",
    "far_field",
    "delta",
    "k_max",
    "samples",
    "deformation",
    "snapshots",
    "output_dir",
    "seed",
    "dump_weights",
];

fn bad(key: &str, value: &str, why: &str) -> CliError {
    CliError::Config(format!("`{key} = {value}`: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad(key, value, "malformed value"))
}

fn positive(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = num(key, value)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, value, "must be positive"))
    }
}

fn exponent(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = num(key, value)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(bad(key, value, "must lie in (0, 1)"))
    }
}

fn flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn count(key: &str, value: &str) -> Result<usize, CliError> {
    let v: usize = num(key, value)?;
    if v == 0 {
        return Err(bad(key, value, "must be at least 1"));
    }
    Ok(v)
}

fn parse_grid(value: &str) -> Result<GridSpec, CliError> {
    let f: Vec<&str> = value.split_whitespace().collect();
    if f.len() != 3 {
        return Err(bad("grid", value, "expected `nx ny a`"));
    }
    Ok(GridSpec {
        nx: count("grid", f[0])?,
        ny: count("grid", f[1])?,
        a: positive("grid", f[2])?,
    })
}

fn parse_shape(value: &str) -> Result<Shape, CliError> {
    let f: Vec<&str> = value.split_whitespace().collect();
    let arity = |n: usize| {
        if f.len() == n + 1 {
            Ok(())
        } else {
            Err(bad("shape", value, &format!("`{}` takes {n} argument(s)", f[0])))
        }
    };
    match f.first().copied() {
        Some("ball") => {
            arity(1)?;
            Ok(Shape::Ball { r: positive("shape", f[1])? })
        }
        Some("ellipse") => {
            arity(2)?;
            Ok(Shape::Ellipse {
                rx: positive("shape", f[1])?,
                ry: positive("shape", f[2])?,
            })
        }
        Some("two-balls") => {
            arity(2)?;
            Ok(Shape::TwoBalls {
                r: positive("shape", f[1])?,
                d: positive("shape", f[2])?,
            })
        }
        Some("mask") => {
            arity(1)?;
            Ok(Shape::Mask(PathBuf::from(f[1])))
        }
        Some("deformation") => {
            arity(0)?;
            Ok(Shape::Deformation)
        }
        _ => Err(bad("shape", value, "expected ball, ellipse, two-balls, mask or deformation")),
    }
}

/// Parses and validates a configuration whose `mode` key is required.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    parse_config_for(text, None)
}

/// As [`parse_config`]; `mode` may come from the command line instead, and
/// must agree with the file when both are given.
pub fn parse_config_for(text: &str, cli_mode: Option<Mode>) -> Result<RunConfig, CliError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut entries = Vec::new();
    let mut unknown = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if !KEYS.contains(&key.as_str()) {
            unknown.push(key);
            continue;
        }
        if let Some(first) = seen.insert(key.clone(), n + 1) {
            return Err(CliError::Config(format!(
                "duplicate key `{key}` on lines {first} and {}",
                n + 1
            )));
        }
        entries.push((key, value));
    }
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    let get = |k: &str| entries.iter().find(|e| e.0 == k).map(|e| e.1.as_str());

    let mode = match (get("mode"), cli_mode) {
        (Some(v), cli) => {
            let m: Mode = v.parse().map_err(|e: String| bad("mode", v, &e))?;
            if cli.is_some_and(|c| c != m) {
                return Err(CliError::Config(format!(
                    "config mode `{m}` differs from command-line mode `{}`",
                    cli.unwrap()
                )));
            }
            m
        }
        (None, Some(c)) => c,
        (None, None) => return Err(CliError::Config("missing required key `mode`".into())),
    };

    let opt = |k: &str, f: fn(&str, &str) -> Result<f64, CliError>| get(k).map(|v| f(k, v)).transpose();
    let mut cfg = RunConfig {
        mode,
        s: opt("s", exponent)?,
        s_list: match get("s_list") {
            Some(v) => v
                .split(',')
                .map(|x| exponent("s_list", x.trim()))
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        },
        h: opt("h", positive)?,
        m: opt("m", positive)?,
        grid: get("grid").map(parse_grid).transpose()?,
        shape: get("shape").map(parse_shape).transpose()?,
        n_steps: get("n_steps").map(|v| count("n_steps", v)).transpose()?,
        snapshot_stride: get("snapshot_stride").map_or(Ok(0), |v| num("snapshot_stride", v))?,
        gamma: opt("gamma", positive)?.unwrap_or(fracflow::step::DEFAULT_GAMMA),
        tol_ball: opt("tol_ball", positive)?.unwrap_or(0.02),
        stop_on_ball: get("stop_on_ball").map_or(Ok(true), |v| flag("stop_on_ball", v))?,
        kernel: KernelOverrides {
            nearfield_radius: get("nearfield_radius")
                .map(|v| count("nearfield_radius", v))
                .transpose()?,
            subdivision_depth: get("subdivision_depth")
                .map(|v| count("subdivision_depth", v).map(|d| d as u32))
                .transpose()?,
            r_cut: opt("r_cut", positive)?,
            tail_tolerance: opt("tail_tolerance", positive)?,
            far_field: get("far_field").map_or(Ok(true), |v| flag("far_field", v))?,
        },
        delta: opt("delta", positive)?.unwrap_or(fracflow::deform::DEFAULT_DELTA),
        k_max: get("k_max").map_or(Ok(8), |v| count("k_max", v))?,
        samples: get("samples").map_or(Ok(0), |v| num("samples", v))?,
        deformation: get("deformation").map(PathBuf::from),
        snapshots: get("snapshots").map(PathBuf::from),
        output_dir: get("output_dir").map(PathBuf::from),
        seed: get("seed").map_or(Ok(0), |v| num("seed", v))?,
        dump_weights: get("dump_weights").map_or(Ok(false), |v| flag("dump_weights", v))?,
        entries: Vec::new(),
    };
    if cfg.s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("s_list", get("s_list").unwrap_or(""), "values must increase"));
    }
    if !(2..=fracflow::deform::MAX_MODES).contains(&cfg.k_max) {
        return Err(bad("k_max", &cfg.k_max.to_string(), "must lie in 2..=64"));
    }
    cfg.entries = entries;
    require(&cfg)?;
    Ok(cfg)
}

fn require(cfg: &RunConfig) -> Result<(), CliError> {
    let missing = |k: &str| Err(CliError::Config(format!("mode {} needs key `{k}`", cfg.mode)));
    let needs_s = matches!(
        cfg.mode,
        Mode::Flow | Mode::Perim | Mode::Curvature | Mode::Holder
    );
    if needs_s && cfg.s.is_none() {
        return missing("s");
    }
    match cfg.mode {
        Mode::Flow => {
            if cfg.h.is_none() {
                return missing("h");
            }
            if cfg.n_steps.is_none() {
                return missing("n_steps");
            }
        }
        Mode::Holder => {
            if cfg.h.is_none() {
                return missing("h");
            }
            if cfg.snapshots.is_none() {
                return missing("snapshots");
            }
        }
        Mode::Alexandrov => {
            if cfg.s.is_none() && cfg.s_list.is_empty() {
                return missing("s");
            }
            if cfg.deformation.is_none() && cfg.samples == 0 {
                return missing("deformation");
            }
        }
        Mode::Limits => {
            if cfg.s_list.is_empty() {
                return missing("s_list");
            }
        }
        Mode::Perim | Mode::Curvature => {}
    }
    if matches!(cfg.mode, Mode::Flow | Mode::Perim | Mode::Curvature) {
        match &cfg.shape {
            None => return missing("shape"),
            Some(Shape::Mask(_)) => {}
            Some(shape) => {
                if cfg.grid.is_none() {
                    return missing("grid");
                }
                if *shape == Shape::Deformation && cfg.deformation.is_none() {
                    return missing("deformation");
                }
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Rewrites relative input paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(Shape::Mask(p)) = &mut self.shape {
            fix(p);
        }
        if let Some(p) = &mut self.deformation {
            fix(p);
        }
        if let Some(p) = &mut self.snapshots {
            fix(p);
        }
    }

    /// The `s` values a mode sweeps over.
    pub fn s_values(&self) -> Vec<f64> {
        if self.s_list.is_empty() {
            self.s.into_iter().collect()
        } else {
            self.s_list.clone()
        }
    }
}
