//! TOML scene files.
//!
//! Every block declares its units. Lengths are given in `mm` (or `m`),
//! moduli in `MPa` (or `Pa`, `kPa`, `GPa`) and angles in degrees; everything
//! is converted to SI on load. The penalty factor is always N/m^2 and the
//! projection tolerance is in m^2.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::contact::{BoundaryMode, ContactConfig, ContactIntegration};
use crate::elasticity::Material;
use crate::mesh::MAX_GAUSS_POINTS;
use crate::scene::{LoadSchedule, Scene, TubeSheath};
use crate::solver::SolveError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}{message}", line_prefix(*line))]
    Parse { line: Option<usize>, message: String },
    #[error("{}[{table}] {key}: {message}", line_prefix(*line))]
    Invalid { line: Option<usize>, table: String, key: String, message: String },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

/// Fully resolved run description in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub geometry: TubeSheath,
    pub contact: ContactConfig,
    pub schedule: LoadSchedule,
    /// Gauss points per parametric direction.
    pub quadrature: usize,
    pub output: PathBuf,
}

impl Default for SceneConfig {
    /// The validation scene: 100 steps of 1 nm at penalty 1e12, 50 elements.
    fn default() -> Self {
        Self {
            geometry: TubeSheath::default(),
            contact: ContactConfig::default(),
            schedule: LoadSchedule { increment: 1e-9, total: 1e-7 },
            quadrature: 3,
            output: PathBuf::from("results"),
        }
    }
}

impl SceneConfig {
    pub fn scene(&self) -> Result<Scene, SolveError> {
        let mut s = Scene::tube_sheath(&self.geometry, self.contact, self.schedule)?;
        s.quadrature = self.quadrature;
        s.validate()?;
        Ok(s)
    }

    /// Keep the increment and run `steps` of it.
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.schedule.total = self.schedule.increment * steps as f64;
        self
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        raw.resolve(text)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[table]`, for diagnostics.
fn locate(text: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if current == table && key.is_empty() {
                return Some(i + 1);
            }
            continue;
        }
        let head = t.split('=').next().unwrap_or("").trim();
        if current == table && head == key {
            return Some(i + 1);
        }
    }
    None
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    geometry: RawGeometry,
    materials: RawMaterials,
    contact: RawContact,
    load: RawLoad,
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    units: String,
    tube_inner_radius: f64,
    tube_outer_radius: f64,
    sheath_inner_radius: f64,
    sheath_outer_radius: f64,
    arc_span_deg: f64,
    contact_angle_deg: f64,
    #[serde(default)]
    initial_gap: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterials {
    units: String,
    tube: RawMaterial,
    sheath: RawMaterial,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    young_modulus: f64,
    poisson_ratio: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContact {
    units: String,
    penalty: f64,
    #[serde(default = "default_boundary")]
    boundary: String,
    #[serde(default)]
    segments: Option<usize>,
    #[serde(default = "default_integration")]
    integration: ContactIntegration,
    #[serde(default)]
    projection_tolerance: Option<f64>,
    #[serde(default)]
    max_iterations: Option<usize>,
    #[serde(default)]
    adjust_tolerance: Option<f64>,
}

fn default_boundary() -> String {
    "exact-nurbs".into()
}

fn default_integration() -> ContactIntegration {
    ContactIntegration::Collocated
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    units: String,
    increment: f64,
    total: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    insertions: usize,
    quadrature: usize,
}

impl Default for RawMesh {
    fn default() -> Self {
        Self { insertions: 4, quadrature: 3 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self { directory: PathBuf::from("results") }
    }
}

struct Checker<'a> {
    text: &'a str,
}

impl Checker<'_> {
    fn err(&self, table: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            line: locate(self.text, table, key),
            table: table.into(),
            key: key.into(),
            message: message.into(),
        }
    }

    /// Divisor taking the block's lengths to metres.
    fn length_scale(&self, table: &str, units: &str) -> Result<f64, ConfigError> {
        match units {
            "mm" => Ok(1e3),
            "m" => Ok(1.0),
            u => Err(self.err(table, "units", format!("length unit {u:?} not recognised (mm or m)"))),
        }
    }

    fn positive(&self, table: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(table, key, format!("must be positive and finite, got {v}")))
        }
    }
}

impl RawConfig {
    fn resolve(self, text: &str) -> Result<SceneConfig, ConfigError> {
        let c = Checker { text };
        let g = &self.geometry;
        let mm = c.length_scale("geometry", &g.units)?;
        let ri = c.positive("geometry", "tube_inner_radius", g.tube_inner_radius)?;
        let ro = c.positive("geometry", "tube_outer_radius", g.tube_outer_radius)?;
        let si = c.positive("geometry", "sheath_inner_radius", g.sheath_inner_radius)?;
        let so = c.positive("geometry", "sheath_outer_radius", g.sheath_outer_radius)?;
        if ro <= ri {
            return Err(c.err("geometry", "tube_outer_radius", "must exceed tube_inner_radius"));
        }
        if so <= si {
            return Err(c.err("geometry", "sheath_outer_radius", "must exceed sheath_inner_radius"));
        }
        if !(g.arc_span_deg > 0.0 && g.arc_span_deg < 180.0) {
            return Err(c.err("geometry", "arc_span_deg", format!("must lie in (0, 180), got {}", g.arc_span_deg)));
        }
        if !g.contact_angle_deg.is_finite() {
            return Err(c.err("geometry", "contact_angle_deg", "must be finite"));
        }
        if !(g.initial_gap.is_finite() && g.initial_gap >= 0.0) {
            return Err(c.err("geometry", "initial_gap", "must be non-negative"));
        }
        if ro + g.initial_gap >= si {
            return Err(c.err(
                "geometry",
                "sheath_inner_radius",
                "tube (plus initial gap) does not fit inside the sheath",
            ));
        }

        let m = &self.materials;
        let pa = match m.units.as_str() {
            "Pa" => 1.0,
            "kPa" => 1e3,
            "MPa" => 1e6,
            "GPa" => 1e9,
            u => {
                return Err(c.err(
                    "materials",
                    "units",
                    format!("stress unit {u:?} not recognised (Pa, kPa, MPa, GPa)"),
                ))
            }
        };
        let material = |name: &str, r: &RawMaterial| {
            Material::new(r.young_modulus * pa, r.poisson_ratio).map_err(|e| c.err("materials", name, e.to_string()))
        };
        let tube = material("tube", &m.tube)?;
        let sheath = material("sheath", &m.sheath)?;

        let ct = &self.contact;
        let contact_mm = c.length_scale("contact", &ct.units)?;
        let defaults = ContactConfig::default();
        let boundary = match (ct.boundary.as_str(), ct.segments) {
            ("exact-nurbs", _) => BoundaryMode::ExactNurbs,
            ("faceted", Some(n)) if n >= 2 => BoundaryMode::Faceted { segments: n },
            ("faceted", _) => return Err(c.err("contact", "segments", "faceted boundary needs segments >= 2")),
            (b, _) => return Err(c.err("contact", "boundary", format!("unknown mode {b:?} (exact-nurbs or faceted)"))),
        };
        let contact = ContactConfig {
            penalty: c.positive("contact", "penalty", ct.penalty)?,
            projection_tolerance: match ct.projection_tolerance {
                Some(t) => c.positive("contact", "projection_tolerance", t)?,
                None => defaults.projection_tolerance,
            },
            max_iterations: match ct.max_iterations {
                Some(0) => return Err(c.err("contact", "max_iterations", "must be at least 1")),
                Some(n) => n,
                None => defaults.max_iterations,
            },
            boundary,
            integration: ct.integration,
            adjust_tolerance: match ct.adjust_tolerance {
                Some(t) if t >= 0.0 && t.is_finite() => t / contact_mm,
                Some(t) => return Err(c.err("contact", "adjust_tolerance", format!("must be non-negative, got {t}"))),
                None => defaults.adjust_tolerance,
            },
        };

        let l = &self.load;
        let load_mm = c.length_scale("load", &l.units)?;
        let schedule = LoadSchedule {
            increment: c.positive("load", "increment", l.increment)? / load_mm,
            total: c.positive("load", "total", l.total)? / load_mm,
        };
        schedule.validate().map_err(|e| c.err("load", "total", e.to_string()))?;

        if !(1..=MAX_GAUSS_POINTS).contains(&self.mesh.quadrature) {
            return Err(c.err("mesh", "quadrature", format!("must lie in 1..={MAX_GAUSS_POINTS}")));
        }
        if self.mesh.insertions > 200 {
            return Err(c.err("mesh", "insertions", "at most 200 knots per direction"));
        }

        Ok(SceneConfig {
            geometry: TubeSheath {
                tube_inner_radius: ri / mm,
                tube_outer_radius: ro / mm,
                sheath_inner_radius: si / mm,
                sheath_outer_radius: so / mm,
                arc_span: g.arc_span_deg.to_radians(),
                contact_angle: g.contact_angle_deg.to_radians(),
                initial_gap: g.initial_gap / mm,
                tube,
                sheath,
                insertions: self.mesh.insertions,
            },
            contact,
            schedule,
            quadrature: self.mesh.quadrature,
            output: self.output.directory,
        })
    }
}
