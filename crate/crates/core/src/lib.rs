//! Isogeometric plane-strain contact between a slave tube and a master sheath.
//!
//! Both bodies are exact NURBS annular sectors. Contact is enforced by a
//! penalty on the gap measured from slave Gauss stations to their closest
//! points on the master edge, under displacement-controlled load steps.

// `!(x > 0.0)` is the intended NaN-rejecting form; index loops mirror the
// textbook spline recurrences.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod body;
pub mod config;
pub mod contact;
pub mod elasticity;
pub mod mesh;
pub mod nurbs;
pub mod post;
pub mod scene;
pub mod solver;
pub mod validate;

pub use body::{Body, Role};
pub use config::{ConfigError, SceneConfig};
pub use contact::{BoundaryMode, ContactConfig, ContactError, ContactIntegration, ContactPair};
pub use elasticity::{ElasticityError, Material};
pub use mesh::{DofMap, Element, GaussRule, MeshError};
pub use nurbs::{Edge, GeometryError, KnotVector, NurbsCurve, NurbsPatch, Vec2};
pub use scene::{LoadSchedule, Scene, TubeSheath};
pub use solver::{run_load_steps, RunHistory, Simulation, SolveError, StepResult};
