//! TOML run configuration.
//!
//! ```toml
//! sign = "antifano"            # or "fano"
//! output_dir = "out"           # relative to the config file
//!
//! [geometry]
//! type = "mesh"                # or "radial"
//! mesh_path = "sphere.off"     # or: icosphere = 3
//!
//! [geometry.f_spec]
//! type = "preset"              # or "file" with `path`
//! fields = [
//!   { kind = "constant", value = 1.0 },
//!   { kind = "linear", scale = 1.0, eps = 0.3, axis = "z" },
//!   { kind = "sine", scale = 0.8, eps = 0.2, axis = "x", frequency = 2.0 },
//! ]
//!
//! # radial: type = "radial", n = 1, k = 2, a = [1.0, 1.0], grid_size = 256
//!
//! [path]        # t_max, dt_initial, dt_min, newton_tol, newton_max_iters,
//!               # armijo_slope, armijo_backtrack, armijo_max_backtracks, blowup_threshold
//! [monitors]    # c0, laplacian, lambda, jensen, green_samples, spectrum,
//!               # weitzenbock, weitzenbock_samples
//! [verify]      # uniqueness_magnitude, uniqueness_seeds
//! [manufacture] # t_star, constants = [..], target = [field, ..]
//! ```
//!
//! Every key not listed here is rejected with its full dotted path.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::continuity::{ArmijoParams, PathConfig};
use crate::error::{Error, Result};
use crate::estimates::MonitorSettings;
use crate::geometry::Sign;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub sign: Sign,
    pub path: PathConfig,
    pub monitors: MonitorSettings,
    pub weitzenbock: bool,
    pub weitzenbock_samples: usize,
    pub verify: VerifySettings,
    pub manufacture: Option<ManufactureSpec>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    Mesh {
        source: MeshSource,
        background: Option<BackgroundSpec>,
    },
    Radial {
        n: usize,
        a: Vec<f64>,
        grid_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    File(PathBuf),
    Icosphere(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundSpec {
    Preset(Vec<FieldSpec>),
    /// Whitespace table with one row per vertex and one column per equation.
    File(PathBuf),
}

/// Analytic field evaluated at vertex positions.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `scale * (1 + eps * x_axis)`
    Linear {
        scale: f64,
        eps: f64,
        axis: usize,
    },
    /// `scale * (1 + eps * sin(frequency * x_axis))`
    Sine {
        scale: f64,
        eps: f64,
        axis: usize,
        frequency: f64,
    },
}

impl FieldSpec {
    pub fn evaluate(&self, positions: &[[f64; 3]]) -> Vec<f64> {
        positions
            .iter()
            .map(|p| match *self {
                FieldSpec::Constant { value } => value,
                FieldSpec::Linear { scale, eps, axis } => scale * (1.0 + eps * p[axis]),
                FieldSpec::Sine {
                    scale,
                    eps,
                    axis,
                    frequency,
                } => scale * (1.0 + eps * (frequency * p[axis]).sin()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub uniqueness_magnitude: f64,
    pub uniqueness_seeds: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManufactureSpec {
    pub t_star: f64,
    pub constants: Vec<f64>,
    /// Target potentials. The generic field formula is used as is, so a
    /// `constant` entry is a constant potential.
    pub target: Vec<FieldSpec>,
}

#[derive(Deserialize, Default)]
struct RawConfig {
    geometry: Option<RawGeometry>,
    sign: Option<String>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    path: RawPath,
    #[serde(default)]
    monitors: RawMonitors,
    #[serde(default)]
    verify: RawVerify,
    manufacture: Option<RawManufacture>,
}

#[derive(Deserialize)]
struct RawGeometry {
    #[serde(rename = "type")]
    kind: String,
    mesh_path: Option<PathBuf>,
    icosphere: Option<u32>,
    f_spec: Option<RawBackground>,
    n: Option<usize>,
    k: Option<usize>,
    a: Option<Vec<f64>>,
    grid_size: Option<usize>,
}

#[derive(Deserialize)]
struct RawBackground {
    #[serde(rename = "type")]
    kind: String,
    path: Option<PathBuf>,
    fields: Option<Vec<RawField>>,
}

#[derive(Deserialize)]
struct RawField {
    kind: String,
    value: Option<f64>,
    scale: Option<f64>,
    eps: Option<f64>,
    axis: Option<String>,
    frequency: Option<f64>,
}

#[derive(Deserialize, Default)]
struct RawPath {
    t_max: Option<f64>,
    dt_initial: Option<f64>,
    dt_min: Option<f64>,
    newton_tol: Option<f64>,
    newton_max_iters: Option<usize>,
    armijo_slope: Option<f64>,
    armijo_backtrack: Option<f64>,
    armijo_max_backtracks: Option<usize>,
    blowup_threshold: Option<f64>,
}

#[derive(Deserialize, Default)]
struct RawMonitors {
    c0: Option<bool>,
    laplacian: Option<bool>,
    lambda: Option<f64>,
    jensen: Option<bool>,
    green_samples: Option<usize>,
    spectrum: Option<bool>,
    weitzenbock: Option<bool>,
    weitzenbock_samples: Option<usize>,
}

#[derive(Deserialize, Default)]
struct RawVerify {
    uniqueness_magnitude: Option<f64>,
    uniqueness_seeds: Option<u64>,
}

#[derive(Deserialize)]
struct RawManufacture {
    t_star: f64,
    constants: Vec<f64>,
    target: Vec<RawField>,
}

/// Reads and validates a config file. Relative paths inside it are resolved
/// against the file's directory.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(toml_error)?;
    let mut unknown = Vec::new();
    let raw: RawConfig =
        serde_ignored::deserialize(de, |p| unknown.push(p.to_string())).map_err(toml_error)?;
    if let Some(key) = unknown.into_iter().next() {
        return Err(Error::config(first_leaf(text, key), "unknown key"));
    }
    validate(raw, base_dir)
}

/// An unknown table is reported by its first key, e.g. `solver.turbo`.
fn first_leaf(text: &str, mut key: String) -> String {
    let Ok(doc) = text.parse::<toml::Table>() else {
        return key;
    };
    let mut value = key
        .split('.')
        .try_fold(None::<&toml::Value>, |v, part| match v {
            None => doc.get(part).map(Some),
            Some(toml::Value::Table(t)) => t.get(part).map(Some),
            Some(_) => None,
        });
    while let Some(Some(toml::Value::Table(t))) = value {
        let Some((k, v)) = t.iter().next() else { break };
        key = format!("{key}.{k}");
        value = Some(Some(v));
    }
    key
}

fn toml_error(e: toml::de::Error) -> Error {
    Error::config("<document>", e.to_string().trim().to_string())
}

fn validate(raw: RawConfig, base: &Path) -> Result<RunConfig> {
    let sign = match raw.sign.as_deref() {
        Some("fano") => Sign::Fano,
        Some("antifano") => Sign::AntiFano,
        Some(other) => {
            return Err(Error::config(
                "sign",
                format!("expected \"fano\" or \"antifano\", got {other:?}"),
            ))
        }
        None => return Err(Error::config("sign", "missing")),
    };
    let geometry = raw
        .geometry
        .ok_or_else(|| Error::config("geometry", "missing"))?;
    let geometry = match geometry.kind.as_str() {
        "mesh" => mesh_geometry(geometry, base)?,
        "radial" => radial_geometry(geometry, sign)?,
        other => {
            return Err(Error::config(
                "geometry.type",
                format!("expected \"mesh\" or \"radial\", got {other:?}"),
            ))
        }
    };

    let defaults = PathConfig::default();
    let rp = raw.path;
    let path = PathConfig {
        t_max: rp.t_max.unwrap_or(defaults.t_max),
        dt_initial: rp.dt_initial.unwrap_or(defaults.dt_initial),
        dt_min: rp.dt_min.unwrap_or(defaults.dt_min),
        newton_tol: rp.newton_tol,
        newton_max_iters: rp.newton_max_iters.unwrap_or(defaults.newton_max_iters),
        armijo: ArmijoParams {
            slope: rp.armijo_slope.unwrap_or(defaults.armijo.slope),
            backtrack: rp.armijo_backtrack.unwrap_or(defaults.armijo.backtrack),
            max_backtracks: rp
                .armijo_max_backtracks
                .unwrap_or(defaults.armijo.max_backtracks),
        },
        blowup_threshold: rp.blowup_threshold.unwrap_or(defaults.blowup_threshold),
    };
    path.validate()
        .map_err(|e| Error::config("path", e.to_string()))?;

    let md = MonitorSettings::default();
    let rm = raw.monitors;
    let monitors = MonitorSettings {
        c0: rm.c0.unwrap_or(md.c0),
        laplacian: rm.laplacian.unwrap_or(md.laplacian),
        lambda: rm.lambda.unwrap_or(md.lambda),
        jensen: rm.jensen.unwrap_or(md.jensen),
        green_samples: rm.green_samples.unwrap_or(md.green_samples),
        spectrum: rm.spectrum.unwrap_or(md.spectrum),
    };
    if !(monitors.lambda > 0.0) {
        return Err(Error::config("monitors.lambda", "must be positive"));
    }
    if monitors.green_samples == 0 {
        return Err(Error::config(
            "monitors.green_samples",
            "must be at least 1",
        ));
    }
    let weitzenbock_samples = rm.weitzenbock_samples.unwrap_or(4);
    if weitzenbock_samples == 0 {
        return Err(Error::config(
            "monitors.weitzenbock_samples",
            "must be at least 1",
        ));
    }

    let verify = VerifySettings {
        uniqueness_magnitude: raw.verify.uniqueness_magnitude.unwrap_or(0.1),
        uniqueness_seeds: raw.verify.uniqueness_seeds.unwrap_or(5),
    };
    if !(verify.uniqueness_magnitude >= 0.0) {
        return Err(Error::config(
            "verify.uniqueness_magnitude",
            "must be non-negative",
        ));
    }

    let manufacture = raw
        .manufacture
        .map(|m| -> Result<ManufactureSpec> {
            if !(0.0..=1.0).contains(&m.t_star) {
                return Err(Error::config("manufacture.t_star", "must lie in [0, 1]"));
            }
            if m.constants.iter().any(|c| !(*c > 0.0)) {
                return Err(Error::config("manufacture.constants", "must be positive"));
            }
            if m.constants.len() != m.target.len() {
                return Err(Error::config(
                    "manufacture.target",
                    "needs one field per constant",
                ));
            }
            let target = m
                .target
                .into_iter()
                .enumerate()
                .map(|(i, f)| field(f, &format!("manufacture.target[{i}]")))
                .collect::<Result<_>>()?;
            Ok(ManufactureSpec {
                t_star: m.t_star,
                constants: m.constants,
                target,
            })
        })
        .transpose()?;

    Ok(RunConfig {
        geometry,
        sign,
        path,
        monitors,
        weitzenbock: rm.weitzenbock.unwrap_or(true),
        weitzenbock_samples,
        verify,
        manufacture,
        output_dir: base.join(raw.output_dir.unwrap_or_else(|| PathBuf::from("out"))),
    })
}

fn mesh_geometry(g: RawGeometry, base: &Path) -> Result<GeometrySpec> {
    for (key, present) in [
        ("n", g.n.is_some()),
        ("k", g.k.is_some()),
        ("a", g.a.is_some()),
        ("grid_size", g.grid_size.is_some()),
    ] {
        if present {
            return Err(Error::config(
                format!("geometry.{key}"),
                "only valid for radial geometry",
            ));
        }
    }
    let source = match (g.mesh_path, g.icosphere) {
        (Some(p), None) => MeshSource::File(base.join(p)),
        (None, Some(s)) if s <= 7 => MeshSource::Icosphere(s),
        (None, Some(_)) => {
            return Err(Error::config(
                "geometry.icosphere",
                "at most 7 subdivisions",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "geometry",
                "give exactly one of mesh_path and icosphere",
            ))
        }
        (None, None) => return Err(Error::config("geometry.mesh_path", "missing")),
    };
    let background = g
        .f_spec
        .map(|f| -> Result<BackgroundSpec> {
            match f.kind.as_str() {
                "preset" => {
                    if f.path.is_some() {
                        return Err(Error::config(
                            "geometry.f_spec.path",
                            "only valid for type = \"file\"",
                        ));
                    }
                    let fields = f
                        .fields
                        .ok_or_else(|| Error::config("geometry.f_spec.fields", "missing"))?;
                    if fields.is_empty() {
                        return Err(Error::config(
                            "geometry.f_spec.fields",
                            "need at least one field",
                        ));
                    }
                    let specs = fields
                        .into_iter()
                        .enumerate()
                        .map(|(i, f)| {
                            let key = format!("geometry.f_spec.fields[{i}]");
                            let spec = field(f, &key)?;
                            if !field_is_positive(&spec) {
                                return Err(Error::config(
                                    key,
                                    "density must be positive everywhere",
                                ));
                            }
                            Ok(spec)
                        })
                        .collect::<Result<_>>()?;
                    Ok(BackgroundSpec::Preset(specs))
                }
                "file" => {
                    if f.fields.is_some() {
                        return Err(Error::config(
                            "geometry.f_spec.fields",
                            "only valid for type = \"preset\"",
                        ));
                    }
                    let p = f
                        .path
                        .ok_or_else(|| Error::config("geometry.f_spec.path", "missing"))?;
                    Ok(BackgroundSpec::File(base.join(p)))
                }
                other => Err(Error::config(
                    "geometry.f_spec.type",
                    format!("expected \"preset\" or \"file\", got {other:?}"),
                )),
            }
        })
        .transpose()?;
    Ok(GeometrySpec::Mesh { source, background })
}

/// Positivity on the unit ball of coordinates, which contains every vertex
/// of a mesh inscribed in the unit sphere. Other meshes are checked after
/// evaluation.
fn field_is_positive(spec: &FieldSpec) -> bool {
    match *spec {
        FieldSpec::Constant { value } => value > 0.0,
        FieldSpec::Linear { scale, .. } | FieldSpec::Sine { scale, .. } => scale > 0.0,
    }
}

fn radial_geometry(g: RawGeometry, sign: Sign) -> Result<GeometrySpec> {
    for (key, present) in [
        ("mesh_path", g.mesh_path.is_some()),
        ("icosphere", g.icosphere.is_some()),
        ("f_spec", g.f_spec.is_some()),
    ] {
        if present {
            return Err(Error::config(
                format!("geometry.{key}"),
                "only valid for mesh geometry",
            ));
        }
    }
    if sign != Sign::Fano {
        return Err(Error::config(
            "sign",
            "the radial model of P^n has positive first Chern class; use \"fano\"",
        ));
    }
    let n = g.n.ok_or_else(|| Error::config("geometry.n", "missing"))?;
    if n == 0 {
        return Err(Error::config("geometry.n", "must be at least 1"));
    }
    let a = match (g.a, g.k) {
        (Some(a), Some(k)) if a.len() != k => {
            return Err(Error::config(
                "geometry.a",
                format!("has {} entries but k = {k}", a.len()),
            ))
        }
        (Some(a), _) => a,
        (None, Some(k)) if k > 0 => vec![(n + 1) as f64 / k as f64; k],
        (None, Some(_)) => return Err(Error::config("geometry.k", "must be at least 1")),
        (None, None) => return Err(Error::config("geometry.a", "give a or k")),
    };
    if a.is_empty() || a.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::config("geometry.a", "entries must be positive"));
    }
    let sum: f64 = a.iter().sum();
    if (sum - (n + 1) as f64).abs() > 1e-12 {
        return Err(Error::config(
            "geometry.a",
            format!("entries sum to {sum}, expected n + 1 = {}", n + 1),
        ));
    }
    let grid_size = g.grid_size.unwrap_or(256);
    if grid_size < 16 {
        return Err(Error::config("geometry.grid_size", "must be at least 16"));
    }
    Ok(GeometrySpec::Radial { n, a, grid_size })
}

fn field(f: RawField, key: &str) -> Result<FieldSpec> {
    let axis = |f: &RawField| -> Result<usize> {
        match f.axis.as_deref() {
            Some("x") => Ok(0),
            Some("y") => Ok(1),
            Some("z") | None => Ok(2),
            Some(other) => Err(Error::config(
                format!("{key}.axis"),
                format!("expected x, y or z, got {other:?}"),
            )),
        }
    };
    let unused = |name: &str, present: bool| -> Result<()> {
        if present {
            Err(Error::config(
                format!("{key}.{name}"),
                format!("not used by kind {:?}", f.kind),
            ))
        } else {
            Ok(())
        }
    };
    match f.kind.as_str() {
        "constant" => {
            unused("eps", f.eps.is_some())?;
            unused("axis", f.axis.is_some())?;
            unused("scale", f.scale.is_some())?;
            unused("frequency", f.frequency.is_some())?;
            let value = f
                .value
                .ok_or_else(|| Error::config(format!("{key}.value"), "missing"))?;
            Ok(FieldSpec::Constant { value })
        }
        "linear" => {
            unused("value", f.value.is_some())?;
            unused("frequency", f.frequency.is_some())?;
            Ok(FieldSpec::Linear {
                scale: f.scale.unwrap_or(1.0),
                eps: f.eps.unwrap_or(0.0),
                axis: axis(&f)?,
            })
        }
        "sine" => {
            unused("value", f.value.is_some())?;
            Ok(FieldSpec::Sine {
                scale: f.scale.unwrap_or(1.0),
                eps: f.eps.unwrap_or(0.0),
                axis: axis(&f)?,
                frequency: f.frequency.unwrap_or(1.0),
            })
        }
        other => Err(Error::config(
            format!("{key}.kind"),
            format!("expected constant, linear or sine, got {other:?}"),
        )),
    }
}
