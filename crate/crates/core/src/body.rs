use serde::{Deserialize, Serialize};

use crate::elasticity::Material;
use crate::nurbs::{Edge, NurbsCurve, NurbsPatch, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Contact points are sampled on the slave edge.
    Slave,
    /// Slave points are projected onto the master edge.
    Master,
}

/// A deformable body: reference patch, current control point displacements,
/// material and boundary tags.
#[derive(Debug, Clone)]
pub struct Body {
    pub name: String,
    pub role: Role,
    pub material: Material,
    reference: NurbsPatch,
    displacement: Vec<Vec2>,
    /// Edge that may touch the other body.
    pub contact_edge: Edge,
    /// Edge carrying the Dirichlet condition: driven for the slave, fixed for
    /// the master.
    pub support_edge: Edge,
}

impl Body {
    pub fn new(
        name: impl Into<String>,
        role: Role,
        material: Material,
        reference: NurbsPatch,
        contact_edge: Edge,
        support_edge: Edge,
    ) -> Self {
        let n = reference.num_points();
        Self {
            name: name.into(),
            role,
            material,
            reference,
            displacement: vec![Vec2::zeros(); n],
            contact_edge,
            support_edge,
        }
    }

    pub fn reference(&self) -> &NurbsPatch {
        &self.reference
    }

    pub fn displacement(&self) -> &[Vec2] {
        &self.displacement
    }

    pub fn set_displacement(&mut self, disp: Vec<Vec2>) {
        assert_eq!(disp.len(), self.reference.num_points());
        self.displacement = disp;
    }

    /// Patch with control points at their displaced positions.
    pub fn current(&self) -> NurbsPatch {
        self.reference.displaced(&self.displacement)
    }

    /// Reference contact edge curve and its per-control-point displacements;
    /// `indices[k]` is the patch index of curve control point `k`.
    pub fn contact_edge_data(&self) -> EdgeData {
        let indices = self.reference.edge_indices(self.contact_edge);
        EdgeData {
            reference: self.reference.edge_curve(self.contact_edge),
            displacement: indices.iter().map(|&k| self.displacement[k]).collect(),
            indices,
            outward_left: self.contact_edge.outward_is_left(),
        }
    }

    /// Rebuild on a refined reference patch; displacement resets to zero.
    pub fn with_reference(&self, reference: NurbsPatch) -> Self {
        Body::new(self.name.clone(), self.role, self.material, reference, self.contact_edge, self.support_edge)
    }
}

#[derive(Debug, Clone)]
pub struct EdgeData {
    pub reference: NurbsCurve,
    pub displacement: Vec<Vec2>,
    pub indices: Vec<usize>,
    pub outward_left: bool,
}

impl EdgeData {
    pub fn current(&self) -> NurbsCurve {
        self.reference.displaced(&self.displacement)
    }
}
