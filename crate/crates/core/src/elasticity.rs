//! Plane-strain linear elasticity on NURBS elements.
//!
//! Unit thickness throughout: stiffness in N/m per metre of depth, loads in
//! N per metre of depth.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Element, GaussRule};
use crate::nurbs::{NurbsPatch, Vec2};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ElasticityError {
    #[error("invalid material: {0}")]
    Material(String),
    #[error("inverted element (body {body}, spans {span_u},{span_v}): det J = {det}")]
    InvertedElement { body: usize, span_u: usize, span_v: usize, det: f64 },
}

/// Poisson ratios above this make the plane-strain law too ill-conditioned.
pub const MAX_POISSON: f64 = 0.49;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Pa
    pub young_modulus: f64,
    pub poisson_ratio: f64,
}

impl Material {
    pub fn new(young_modulus: f64, poisson_ratio: f64) -> Result<Self, ElasticityError> {
        let m = Self { young_modulus, poisson_ratio };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ElasticityError> {
        if !(self.young_modulus > 0.0 && self.young_modulus.is_finite()) {
            return Err(ElasticityError::Material(format!("Young's modulus {} must be positive", self.young_modulus)));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(ElasticityError::Material(format!("Poisson ratio {} outside [0, 0.5)", self.poisson_ratio)));
        }
        if self.poisson_ratio > MAX_POISSON {
            return Err(ElasticityError::Material(format!(
                "Poisson ratio {} above {MAX_POISSON}: near-incompressible plane strain is not supported",
                self.poisson_ratio
            )));
        }
        Ok(())
    }
}

/// Plane-strain constitutive matrix, Voigt order `(xx, yy, xy)` with
/// engineering shear strain.
pub fn plane_strain_matrix(m: &Material) -> Result<Matrix3<f64>, ElasticityError> {
    m.validate()?;
    let (e, nu) = (m.young_modulus, m.poisson_ratio);
    let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok(Matrix3::new(c * (1.0 - nu), c * nu, 0.0, c * nu, c * (1.0 - nu), 0.0, 0.0, 0.0, e / (2.0 * (1.0 + nu))))
}

/// Physical gradients of the rational basis at one point of an element.
#[derive(Debug, Clone)]
pub struct ShapeGradients {
    pub values: Vec<f64>,
    pub grads: Vec<Vec2>,
    /// Includes the reference-square to parameter-rectangle scaling.
    pub det_j: f64,
}

pub fn shape_gradients(el: &Element, patch: &NurbsPatch, xi: f64, eta: f64) -> Result<ShapeGradients, ElasticityError> {
    let (u, v) = el.parameters(xi, eta);
    let b = patch.basis_on_spans(el.span_u, el.span_v, u, v);
    let pts = patch.points();
    let mut jac = Matrix2::zeros();
    for (k, &idx) in b.indices.iter().enumerate() {
        let x = pts[idx];
        jac[(0, 0)] += x.x * b.du[k];
        jac[(0, 1)] += x.x * b.dv[k];
        jac[(1, 0)] += x.y * b.du[k];
        jac[(1, 1)] += x.y * b.dv[k];
    }
    let det = jac.determinant();
    if !(det > 0.0) {
        return Err(ElasticityError::InvertedElement { body: el.body, span_u: el.span_u, span_v: el.span_v, det });
    }
    let inv = jac.try_inverse().expect("non-singular");
    let grads =
        b.du.iter()
            .zip(&b.dv)
            .map(|(&du, &dv)| Vec2::new(du * inv[(0, 0)] + dv * inv[(1, 0)], du * inv[(0, 1)] + dv * inv[(1, 1)]))
            .collect();
    Ok(ShapeGradients { values: b.values, grads, det_j: det * el.parametric_scale() })
}

/// Strain-displacement matrix (3 x 2k, dofs interleaved x,y per control
/// point) and the scaled Jacobian determinant.
pub fn strain_displacement(
    el: &Element,
    patch: &NurbsPatch,
    xi: f64,
    eta: f64,
) -> Result<(DMatrix<f64>, f64), ElasticityError> {
    let sg = shape_gradients(el, patch, xi, eta)?;
    Ok((b_matrix(&sg.grads), sg.det_j))
}

pub(crate) fn b_matrix(grads: &[Vec2]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(3, 2 * grads.len());
    for (k, g) in grads.iter().enumerate() {
        b[(0, 2 * k)] = g.x;
        b[(1, 2 * k + 1)] = g.y;
        b[(2, 2 * k)] = g.y;
        b[(2, 2 * k + 1)] = g.x;
    }
    b
}

#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub stiffness: DMatrix<f64>,
    pub load: DVector<f64>,
}

/// `K = sum B^T D B detJ w` over the tensor Gauss rule. Body loads are zero.
pub fn element_stiffness(
    el: &Element,
    patch: &NurbsPatch,
    material: &Material,
    rule: &GaussRule,
) -> Result<ElementMatrices, ElasticityError> {
    let d = plane_strain_matrix(material)?;
    let n = 2 * el.support.len();
    let mut k = DMatrix::zeros(n, n);
    for (xi, eta, w) in rule.tensor() {
        let (b, det_j) = strain_displacement(el, patch, xi, eta)?;
        let db = d * &b * (det_j * w);
        k += b.transpose() * db;
    }
    // exact symmetry
    let k = (&k + k.transpose()) * 0.5;
    Ok(ElementMatrices { stiffness: k, load: DVector::zeros(n) })
}

/// Stress `D B u_e` at a reference point, given the element's control point
/// displacements in support order.
pub fn element_stress(
    el: &Element,
    patch: &NurbsPatch,
    material: &Material,
    disp: &[Vec2],
    xi: f64,
    eta: f64,
) -> Result<Vector3<f64>, ElasticityError> {
    let d = plane_strain_matrix(material)?;
    let sg = shape_gradients(el, patch, xi, eta)?;
    let mut strain = Vector3::zeros();
    for (g, u) in sg.grads.iter().zip(disp) {
        strain[0] += g.x * u.x;
        strain[1] += g.y * u.y;
        strain[2] += g.y * u.x + g.x * u.y;
    }
    Ok(d * strain)
}
