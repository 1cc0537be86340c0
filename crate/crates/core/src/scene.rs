//! Problem description: two bodies, contact settings and the load schedule.

use serde::{Deserialize, Serialize};

use crate::body::{Body, Role};
use crate::contact::ContactConfig;
use crate::elasticity::Material;
use crate::mesh::MAX_GAUSS_POINTS;
use crate::nurbs::{make_annulus_patch, Edge, Vec2};
use crate::solver::SolveError;

/// Displacement-controlled loading in equal increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    /// Prescribed displacement per step (m).
    pub increment: f64,
    /// Total prescribed displacement (m).
    pub total: f64,
}

impl LoadSchedule {
    pub fn new(increment: f64, total: f64) -> Result<Self, SolveError> {
        let s = Self { increment, total };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.increment > 0.0 && self.total > 0.0) {
            return Err(SolveError::Config("load increment and total must be positive".into()));
        }
        let ratio = self.total / self.increment;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(SolveError::Config(format!(
                "total displacement {} is not an integer multiple of the increment {}",
                self.total, self.increment
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.total / self.increment).round() as usize
    }

    /// Cumulative prescribed displacement after `step` increments.
    pub fn prescribed(&self, step: usize) -> f64 {
        step as f64 * self.increment
    }
}

/// Slave tube sector resting inside a master sheath sector; both are annular
/// sectors centred on the contact direction and initially tangent (plus
/// `initial_gap`) at the origin. Lengths in metres, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeSheath {
    pub tube_inner_radius: f64,
    pub tube_outer_radius: f64,
    pub sheath_inner_radius: f64,
    pub sheath_outer_radius: f64,
    /// Angular span of both sectors.
    pub arc_span: f64,
    /// Direction from the tube centre to the contact point.
    pub contact_angle: f64,
    /// Radial clearance between the bodies at the contact point.
    pub initial_gap: f64,
    pub tube: Material,
    pub sheath: Material,
    /// Knots inserted per parametric direction in each body.
    pub insertions: usize,
}

impl Default for TubeSheath {
    fn default() -> Self {
        Self {
            tube_inner_radius: 12.7e-3 / 2.0,
            tube_outer_radius: 14.2e-3 / 2.0,
            sheath_inner_radius: 58.45e-3 / 2.0,
            sheath_outer_radius: 60.45e-3 / 2.0,
            arc_span: 120f64.to_radians(),
            contact_angle: 270f64.to_radians(),
            initial_gap: 0.0,
            tube: Material { young_modulus: 2.0e11, poisson_ratio: 0.3 },
            sheath: Material { young_modulus: 7.0e8, poisson_ratio: 0.35 },
            insertions: 4,
        }
    }
}

impl TubeSheath {
    /// Unit vector at `contact_angle`; components below 1e-15 are snapped to
    /// zero so axis-aligned pushes stay exactly axis-aligned.
    pub fn contact_direction(&self) -> Vec2 {
        let snap = |c: f64| if c.abs() < 1e-15 { 0.0 } else { c };
        Vec2::new(snap(self.contact_angle.cos()), snap(self.contact_angle.sin()))
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        self.tube.validate()?;
        self.sheath.validate()?;
        if self.tube_outer_radius + self.initial_gap >= self.sheath_inner_radius {
            return Err(SolveError::Config("tube does not fit inside the sheath".into()));
        }
        if !(self.initial_gap > -self.tube_outer_radius) {
            return Err(SolveError::Config("initial gap out of range".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<(Body, Body), SolveError> {
        self.validate()?;
        let dir = self.contact_direction();
        let sheath_center = -dir * self.sheath_inner_radius;
        let tube_center = dir * -(self.tube_outer_radius + self.initial_gap);
        let (t0, t1) = (self.contact_angle - 0.5 * self.arc_span, self.contact_angle + 0.5 * self.arc_span);
        let sheath = make_annulus_patch(sheath_center, self.sheath_inner_radius, self.sheath_outer_radius, t0, t1)?
            .refine_uniform(self.insertions)?;
        let tube = make_annulus_patch(tube_center, self.tube_inner_radius, self.tube_outer_radius, t0, t1)?
            .refine_uniform(self.insertions)?;
        // outer arc of the tube touches the inner arc of the sheath
        let slave = Body::new("tube", Role::Slave, self.tube, tube, Edge::UMax, Edge::UMin);
        let master = Body::new("sheath", Role::Master, self.sheath, sheath, Edge::UMin, Edge::UMax);
        Ok((slave, master))
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub slave: Body,
    pub master: Body,
    pub contact: ContactConfig,
    pub schedule: LoadSchedule,
    /// Direction in which the slave's driven edge is pushed.
    pub drive_direction: Vec2,
    /// Gauss points per parametric direction.
    pub quadrature: usize,
}

impl Scene {
    pub fn tube_sheath(
        geometry: &TubeSheath,
        contact: ContactConfig,
        schedule: LoadSchedule,
    ) -> Result<Self, SolveError> {
        contact.validate()?;
        schedule.validate()?;
        let (slave, master) = geometry.build()?;
        Ok(Self { slave, master, contact, schedule, drive_direction: geometry.contact_direction(), quadrature: 3 })
    }

    /// The validation scene: default geometry, penalty 1e12, 100 steps of 1 nm.
    pub fn reference() -> Self {
        Self::tube_sheath(
            &TubeSheath::default(),
            ContactConfig::default(),
            LoadSchedule { increment: 1e-9, total: 1e-7 },
        )
        .expect("reference scene is valid")
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.slave.role != Role::Slave || self.master.role != Role::Master {
            return Err(SolveError::Config("scene needs exactly one slave and one master".into()));
        }
        self.contact.validate()?;
        self.schedule.validate()?;
        self.slave.material.validate()?;
        self.master.material.validate()?;
        if !(1..=MAX_GAUSS_POINTS).contains(&self.quadrature) {
            return Err(SolveError::Config(format!("quadrature order {} unsupported", self.quadrature)));
        }
        Ok(())
    }

    pub fn elements(&self) -> usize {
        self.slave.reference().knots_u().spans().len() * self.slave.reference().knots_v().spans().len()
            + self.master.reference().knots_u().spans().len() * self.master.reference().knots_v().spans().len()
    }

    pub fn dofs(&self) -> usize {
        2 * (self.slave.reference().num_points() + self.master.reference().num_points())
    }
}
