use serde::{Deserialize, Serialize};

use super::knots::KnotVector;
use super::{GeometryError, Vec2};
use nalgebra::Vector3;

/// Rational B-spline curve in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct NurbsCurve {
    knots: KnotVector,
    points: Vec<Vec2>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCurve {
    knots: KnotVector,
    points: Vec<Vec2>,
    weights: Vec<f64>,
}

impl TryFrom<RawCurve> for NurbsCurve {
    type Error = GeometryError;

    fn try_from(raw: RawCurve) -> Result<Self, Self::Error> {
        NurbsCurve::new(raw.knots, raw.points, raw.weights)
    }
}

/// Rational basis values (and optionally first derivatives) on one span.
#[derive(Debug, Clone)]
pub struct RationalBasis {
    /// Index of the first non-zero function.
    pub first: usize,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl NurbsCurve {
    pub fn new(knots: KnotVector, points: Vec<Vec2>, weights: Vec<f64>) -> Result<Self, GeometryError> {
        let n = knots.num_basis();
        if points.len() != n || weights.len() != n {
            return Err(GeometryError::CountMismatch { expected: n, points: points.len(), weights: weights.len() });
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(GeometryError::NonPositiveWeight { index: i, weight: weights[i] });
        }
        Ok(Self { knots, points, weights })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.knots.domain()
    }

    pub fn point(&self, u: f64) -> Result<Vec2, GeometryError> {
        let span = self.knots.find_span(u)?;
        Ok(self.point_on_span(span, u))
    }

    fn point_on_span(&self, span: usize, u: f64) -> Vec2 {
        let p = self.degree();
        let n = self.knots.local_basis(span, u);
        let mut num = Vec2::zeros();
        let mut den = 0.0;
        for (j, nj) in n.iter().enumerate() {
            let i = span - p + j;
            let nw = nj * self.weights[i];
            num += self.points[i] * nw;
            den += nw;
        }
        num / den
    }

    /// `C(u)` and its first `order` derivatives.
    pub fn derivatives(&self, u: f64, order: usize) -> Result<Vec<Vec2>, GeometryError> {
        let span = self.knots.find_span(u)?;
        Ok(self.derivatives_on_span(span, u, order))
    }

    /// Derivatives using the polynomial piece of a given span. At a knot this
    /// yields the one-sided derivative from that span.
    pub fn derivatives_on_span(&self, span: usize, u: f64, order: usize) -> Vec<Vec2> {
        let p = self.degree();
        let ders = self.knots.local_derivatives(span, u, order);
        // homogeneous derivatives A^(k), w^(k)
        let mut aders = vec![Vec2::zeros(); order + 1];
        let mut wders = vec![0.0; order + 1];
        for k in 0..=order {
            for j in 0..=p {
                let i = span - p + j;
                let nw = ders[k][j] * self.weights[i];
                aders[k] += self.points[i] * nw;
                wders[k] += nw;
            }
        }
        let mut ck = vec![Vec2::zeros(); order + 1];
        for k in 0..=order {
            let mut v = aders[k];
            for i in 1..=k {
                v -= ck[k - i] * (binomial(k, i) * wders[i]);
            }
            ck[k] = v / wders[0];
        }
        ck
    }

    /// Rational basis `R_i(u)` with first derivatives on the span containing `u`.
    pub fn rational_basis(&self, u: f64) -> Result<RationalBasis, GeometryError> {
        let span = self.knots.find_span(u)?;
        Ok(self.rational_basis_on_span(span, u))
    }

    pub(crate) fn rational_basis_on_span(&self, span: usize, u: f64) -> RationalBasis {
        let p = self.degree();
        let ders = self.knots.local_derivatives(span, u, 1);
        let first = span - p;
        let w = &self.weights[first..=span];
        let wsum: f64 = ders[0].iter().zip(w).map(|(n, w)| n * w).sum();
        let dwsum: f64 = ders[1].iter().zip(w).map(|(n, w)| n * w).sum();
        let values: Vec<f64> = ders[0].iter().zip(w).map(|(n, w)| n * w / wsum).collect();
        let derivs = ders[1].iter().zip(w).zip(&values).map(|((dn, w), r)| (dn * w - r * dwsum) / wsum).collect();
        RationalBasis { first, values, derivs }
    }

    /// Boehm single-knot insertion. Geometry is unchanged.
    pub fn insert_knot(&self, u: f64) -> Result<NurbsCurve, GeometryError> {
        let (span, knots) = self.knots.with_knot(u)?;
        let homo: Vec<Vector3<f64>> =
            self.points.iter().zip(&self.weights).map(|(pt, w)| Vector3::new(pt.x * w, pt.y * w, *w)).collect();
        let refined = insert_homogeneous(self.knots.knots(), self.degree(), span, u, &homo);
        let (points, weights) = refined.iter().map(|h| (Vec2::new(h.x / h.z, h.y / h.z), h.z)).unzip();
        NurbsCurve::new(knots, points, weights)
    }

    /// Insert every value in `us`, in order.
    pub fn refine(&self, us: &[f64]) -> Result<NurbsCurve, GeometryError> {
        let mut c = self.clone();
        for &u in us {
            c = c.insert_knot(u)?;
        }
        Ok(c)
    }

    /// Same knots and weights, control points moved by `disp`.
    pub fn displaced(&self, disp: &[Vec2]) -> NurbsCurve {
        assert_eq!(disp.len(), self.points.len());
        NurbsCurve {
            knots: self.knots.clone(),
            points: self.points.iter().zip(disp).map(|(p, d)| p + d).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// One Boehm step on homogeneous control points. `span` is the span of `u`
/// in the knot vector *before* insertion.
pub(crate) fn insert_homogeneous(
    knots: &[f64],
    p: usize,
    span: usize,
    u: f64,
    pts: &[Vector3<f64>],
) -> Vec<Vector3<f64>> {
    let n = pts.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let q = if i + p <= span {
            pts[i]
        } else if i > span {
            pts[i - 1]
        } else {
            let alpha = (u - knots[i]) / (knots[i + p] - knots[i]);
            pts[i] * alpha + pts[i - 1] * (1.0 - alpha)
        };
        out.push(q);
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn quarter_arc() -> NurbsCurve {
        NurbsCurve::new(
            KnotVector::uniform(2, 0),
            vec![Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
            vec![1.0, FRAC_1_SQRT_2, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn arc_midpoint_and_ends() {
        let c = quarter_arc();
        let m = c.point(0.5).unwrap();
        assert!((m.x - FRAC_1_SQRT_2).abs() < 1e-15 && (m.y - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(c.point(0.0).unwrap(), Vec2::new(1.0, 0.0));
        assert_eq!(c.point(1.0).unwrap(), Vec2::new(0.0, 1.0));
    }

    #[test]
    fn unit_weights_reduce_to_bspline() {
        let kv = KnotVector::uniform(2, 2);
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 2.0),
            Vec2::new(2.0, -1.0),
            Vec2::new(3.0, 0.5),
            Vec2::new(4.0, 0.0),
        ];
        let c = NurbsCurve::new(kv.clone(), pts.clone(), vec![1.0; 5]).unwrap();
        for i in 0..=20 {
            let u = i as f64 / 20.0;
            let n = kv.basis_functions(u).unwrap();
            let b: Vec2 = n.iter().zip(&pts).map(|(n, p)| p * *n).sum();
            assert!((c.point(u).unwrap() - b).norm() < 1e-14);
        }
    }

    #[test]
    fn straight_line_derivatives() {
        let c = NurbsCurve::new(
            KnotVector::uniform(2, 1),
            // control points at the Greville abscissae give x(u) = 3u
            vec![Vec2::new(0.0, 0.0), Vec2::new(0.75, 0.75), Vec2::new(2.25, 2.25), Vec2::new(3.0, 3.0)],
            vec![1.0; 4],
        )
        .unwrap();
        for i in 0..=10 {
            let d = c.derivatives(i as f64 / 10.0, 2).unwrap();
            assert!((d[1].x - d[1].y).abs() < 1e-13);
            assert!(d[2].norm() < 1e-12);
        }
    }

    #[test]
    fn circle_tangent_is_orthogonal_to_radius() {
        let c = quarter_arc();
        for i in 0..=50 {
            let d = c.derivatives(i as f64 / 50.0, 2).unwrap();
            assert!((d[0].norm() - 1.0).abs() < 1e-14);
            assert!(d[0].dot(&d[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = quarter_arc().refine(&[0.3, 0.7]).unwrap();
        let h = 1e-7;
        for &u in &[0.1, 0.25, 0.5, 0.8] {
            let d = c.derivatives(u, 2).unwrap();
            let fd1 = (c.point(u + h).unwrap() - c.point(u - h).unwrap()) / (2.0 * h);
            assert!((fd1 - d[1]).norm() < 1e-5 * d[1].norm());
            let h2 = 1e-4;
            let fd2 = (c.derivatives(u + h2, 1).unwrap()[1] - c.derivatives(u - h2, 1).unwrap()[1]) / (2.0 * h2);
            assert!((fd2 - d[2]).norm() < 1e-5 * d[2].norm().max(1.0));
        }
    }

    #[test]
    fn rational_basis_sums_to_one() {
        let c = quarter_arc().refine(&[0.2, 0.5]).unwrap();
        for i in 0..=40 {
            let rb = c.rational_basis(i as f64 / 40.0).unwrap();
            assert!((rb.values.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(rb.derivs.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn insertion_preserves_shape() {
        let c = quarter_arc();
        let r = c.refine(&[0.2, 0.4, 0.6, 0.8]).unwrap();
        assert_eq!(r.knots().knots(), &[0., 0., 0., 0.2, 0.4, 0.6, 0.8, 1., 1., 1.]);
        assert_eq!(r.points().len(), 7);
        for i in 0..100 {
            let u = i as f64 / 99.0;
            assert!((c.point(u).unwrap() - r.point(u).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_positive_weight() {
        let e = NurbsCurve::new(KnotVector::uniform(2, 0), vec![Vec2::zeros(); 3], vec![1.0, 0.0, 1.0]);
        assert!(matches!(e, Err(GeometryError::NonPositiveWeight { index: 1, .. })));
    }
}
