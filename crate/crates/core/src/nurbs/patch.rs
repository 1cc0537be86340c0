use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::curve::{insert_homogeneous, NurbsCurve};
use super::knots::KnotVector;
use super::{GeometryError, Vec2};

/// Boundary edge of a patch, named by the fixed parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Edge {
    UMin,
    UMax,
    VMin,
    VMax,
}

impl Edge {
    /// Whether the outward normal lies to the left of the edge tangent
    /// (tangent taken along increasing edge parameter), assuming a patch with
    /// positive Jacobian.
    pub fn outward_is_left(self) -> bool {
        matches!(self, Edge::UMin | Edge::VMax)
    }
}

/// Bivariate tensor-product NURBS patch mapping `[0,1]^2` into the plane.
///
/// Control point `(i, j)` (u-index `i`, v-index `j`) is stored at
/// `i + n_u * j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPatch")]
pub struct NurbsPatch {
    knots_u: KnotVector,
    knots_v: KnotVector,
    points: Vec<Vec2>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPatch {
    knots_u: KnotVector,
    knots_v: KnotVector,
    points: Vec<Vec2>,
    weights: Vec<f64>,
}

impl TryFrom<RawPatch> for NurbsPatch {
    type Error = GeometryError;

    fn try_from(raw: RawPatch) -> Result<Self, Self::Error> {
        NurbsPatch::new(raw.knots_u, raw.knots_v, raw.points, raw.weights)
    }
}

/// Rational basis with parametric first derivatives at one point.
#[derive(Debug, Clone)]
pub struct PatchBasis {
    /// Control point indices, `(p+1)(q+1)` of them.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

impl NurbsPatch {
    pub fn new(
        knots_u: KnotVector,
        knots_v: KnotVector,
        points: Vec<Vec2>,
        weights: Vec<f64>,
    ) -> Result<Self, GeometryError> {
        let n = knots_u.num_basis() * knots_v.num_basis();
        if points.len() != n || weights.len() != n {
            return Err(GeometryError::CountMismatch { expected: n, points: points.len(), weights: weights.len() });
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(GeometryError::NonPositiveWeight { index: i, weight: weights[i] });
        }
        Ok(Self { knots_u, knots_v, points, weights })
    }

    pub fn knots_u(&self) -> &KnotVector {
        &self.knots_u
    }

    pub fn knots_v(&self) -> &KnotVector {
        &self.knots_v
    }

    pub fn n_u(&self) -> usize {
        self.knots_u.num_basis()
    }

    pub fn n_v(&self) -> usize {
        self.knots_v.num_basis()
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n_u() * j
    }

    pub fn point(&self, u: f64, v: f64) -> Result<Vec2, GeometryError> {
        let b = self.basis(u, v)?;
        Ok(b.indices.iter().zip(&b.values).map(|(&k, r)| self.points[k] * *r).sum())
    }

    pub fn basis(&self, u: f64, v: f64) -> Result<PatchBasis, GeometryError> {
        let su = self.knots_u.find_span(u)?;
        let sv = self.knots_v.find_span(v)?;
        Ok(self.basis_on_spans(su, sv, u, v))
    }

    pub fn basis_on_spans(&self, span_u: usize, span_v: usize, u: f64, v: f64) -> PatchBasis {
        let (p, q) = (self.knots_u.degree(), self.knots_v.degree());
        let nu = self.knots_u.local_derivatives(span_u, u, 1);
        let nv = self.knots_v.local_derivatives(span_v, v, 1);
        let count = (p + 1) * (q + 1);
        let mut indices = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        let mut du = Vec::with_capacity(count);
        let mut dv = Vec::with_capacity(count);
        let (mut w, mut wu, mut wv) = (0.0, 0.0, 0.0);
        for b in 0..=q {
            for a in 0..=p {
                let k = self.index(span_u - p + a, span_v - q + b);
                let wk = self.weights[k];
                let n = nu[0][a] * nv[0][b] * wk;
                let nu_ = nu[1][a] * nv[0][b] * wk;
                let nv_ = nu[0][a] * nv[1][b] * wk;
                indices.push(k);
                values.push(n);
                du.push(nu_);
                dv.push(nv_);
                w += n;
                wu += nu_;
                wv += nv_;
            }
        }
        for m in 0..count {
            let r = values[m] / w;
            du[m] = (du[m] - r * wu) / w;
            dv[m] = (dv[m] - r * wv) / w;
            values[m] = r;
        }
        PatchBasis { indices, values, du, dv }
    }

    /// Control point indices along an edge, ordered by increasing edge parameter.
    pub fn edge_indices(&self, edge: Edge) -> Vec<usize> {
        let (nu, nv) = (self.n_u(), self.n_v());
        match edge {
            Edge::UMin => (0..nv).map(|j| self.index(0, j)).collect(),
            Edge::UMax => (0..nv).map(|j| self.index(nu - 1, j)).collect(),
            Edge::VMin => (0..nu).map(|i| self.index(i, 0)).collect(),
            Edge::VMax => (0..nu).map(|i| self.index(i, nv - 1)).collect(),
        }
    }

    /// Boundary curve of a clamped patch. Its control point `k` is patch
    /// control point `edge_indices(edge)[k]`.
    pub fn edge_curve(&self, edge: Edge) -> NurbsCurve {
        let idx = self.edge_indices(edge);
        let knots = match edge {
            Edge::UMin | Edge::UMax => self.knots_v.clone(),
            Edge::VMin | Edge::VMax => self.knots_u.clone(),
        };
        let points = idx.iter().map(|&k| self.points[k]).collect();
        let weights = idx.iter().map(|&k| self.weights[k]).collect();
        NurbsCurve::new(knots, points, weights).expect("patch edge inherits valid data")
    }

    fn homogeneous(&self) -> Vec<Vector3<f64>> {
        self.points.iter().zip(&self.weights).map(|(p, w)| Vector3::new(p.x * w, p.y * w, *w)).collect()
    }

    fn from_homogeneous(knots_u: KnotVector, knots_v: KnotVector, h: &[Vector3<f64>]) -> Result<Self, GeometryError> {
        let (points, weights) = h.iter().map(|h| (Vec2::new(h.x / h.z, h.y / h.z), h.z)).unzip();
        NurbsPatch::new(knots_u, knots_v, points, weights)
    }

    pub fn insert_knot_u(&self, u: f64) -> Result<NurbsPatch, GeometryError> {
        let (span, new_u) = self.knots_u.with_knot(u)?;
        let h = self.homogeneous();
        let (nu, nv) = (self.n_u(), self.n_v());
        let mut out = vec![Vector3::zeros(); (nu + 1) * nv];
        for j in 0..nv {
            let row = &h[j * nu..(j + 1) * nu];
            let r = insert_homogeneous(self.knots_u.knots(), self.knots_u.degree(), span, u, row);
            out[j * (nu + 1)..(j + 1) * (nu + 1)].copy_from_slice(&r);
        }
        Self::from_homogeneous(new_u, self.knots_v.clone(), &out)
    }

    pub fn insert_knot_v(&self, v: f64) -> Result<NurbsPatch, GeometryError> {
        let (span, new_v) = self.knots_v.with_knot(v)?;
        let h = self.homogeneous();
        let (nu, nv) = (self.n_u(), self.n_v());
        let mut out = vec![Vector3::zeros(); nu * (nv + 1)];
        for i in 0..nu {
            let col: Vec<_> = (0..nv).map(|j| h[i + nu * j]).collect();
            let r = insert_homogeneous(self.knots_v.knots(), self.knots_v.degree(), span, v, &col);
            for (j, x) in r.into_iter().enumerate() {
                out[i + nu * j] = x;
            }
        }
        Self::from_homogeneous(self.knots_u.clone(), new_v, &out)
    }

    /// Insert `count` knots at `j/(count+1)` in both directions.
    pub fn refine_uniform(&self, count: usize) -> Result<NurbsPatch, GeometryError> {
        let mut p = self.clone();
        for j in 1..=count {
            let t = j as f64 / (count + 1) as f64;
            p = p.insert_knot_u(t)?.insert_knot_v(t)?;
        }
        Ok(p)
    }

    /// Same parametrisation, control points moved by `disp`.
    pub fn displaced(&self, disp: &[Vec2]) -> NurbsPatch {
        assert_eq!(disp.len(), self.points.len());
        NurbsPatch {
            knots_u: self.knots_u.clone(),
            knots_v: self.knots_v.clone(),
            points: self.points.iter().zip(disp).map(|(p, d)| p + d).collect(),
            weights: self.weights.clone(),
        }
    }
}
