//! Exact NURBS geometry: knot vectors, basis functions, curves, patches,
//! knot insertion and constructors for circular arcs and annular sectors.

mod curve;
mod knots;
mod patch;

use std::f64::consts::PI;

use thiserror::Error;

pub use curve::{NurbsCurve, RationalBasis};
pub use knots::KnotVector;
pub use patch::{Edge, NurbsPatch, PatchBasis};

pub type Vec2 = nalgebra::Vector2<f64>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),
    #[error("parameter {u} outside the knot range [{lower}, {upper}]")]
    OutOfDomain { u: f64, lower: f64, upper: f64 },
    #[error("cannot insert knot {u}: must lie strictly inside ({lower}, {upper})")]
    InsertOutOfRange { u: f64, lower: f64, upper: f64 },
    #[error("cannot insert knot {u}: multiplicity {multiplicity} already at the limit for degree {degree}")]
    Multiplicity { u: f64, multiplicity: usize, degree: usize },
    #[error("expected {expected} control points and weights, got {points} and {weights}")]
    CountMismatch { expected: usize, points: usize, weights: usize },
    #[error("weight {index} is {weight}; weights must be positive")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("arc span {span} rad must lie in (0, pi)")]
    ArcSpan { span: f64 },
    #[error("radii must satisfy 0 < inner < outer (got {inner}, {outer})")]
    Radii { inner: f64, outer: f64 },
    #[error("geometry document: {0}")]
    Document(String),
}

/// Rational quadratic arc from `theta0` to `theta1` (counter-clockwise).
pub fn make_arc(center: Vec2, radius: f64, theta0: f64, theta1: f64) -> Result<NurbsCurve, GeometryError> {
    if !(radius > 0.0) {
        return Err(GeometryError::Radii { inner: radius, outer: radius });
    }
    let (points, weights) = arc_control(center, radius, theta0, theta1)?;
    NurbsCurve::new(KnotVector::uniform(2, 0), points.to_vec(), weights.to_vec())
}

fn arc_control(center: Vec2, radius: f64, theta0: f64, theta1: f64) -> Result<([Vec2; 3], [f64; 3]), GeometryError> {
    let span = theta1 - theta0;
    if !(span > 0.0 && span < PI) {
        return Err(GeometryError::ArcSpan { span });
    }
    let half = 0.5 * span;
    let mid = theta0 + half;
    let w = half.cos();
    let at = |r: f64, t: f64| center + Vec2::new(t.cos(), t.sin()) * r;
    Ok(([at(radius, theta0), at(radius / w, mid), at(radius, theta1)], [1.0, w, 1.0]))
}

/// Biquadratic annular sector. `u` runs radially from `r_inner` to `r_outer`,
/// `v` counter-clockwise from `theta0` to `theta1`, which gives the patch a
/// positive Jacobian. The inner arc is edge `UMin`, the outer arc `UMax`.
pub fn make_annulus_patch(
    center: Vec2,
    r_inner: f64,
    r_outer: f64,
    theta0: f64,
    theta1: f64,
) -> Result<NurbsPatch, GeometryError> {
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(GeometryError::Radii { inner: r_inner, outer: r_outer });
    }
    let radii = [r_inner, 0.5 * (r_inner + r_outer), r_outer];
    let mut points = vec![Vec2::zeros(); 9];
    let mut weights = vec![0.0; 9];
    for (i, &r) in radii.iter().enumerate() {
        let (pts, ws) = arc_control(center, r, theta0, theta1)?;
        for j in 0..3 {
            points[i + 3 * j] = pts[j];
            weights[i + 3 * j] = ws[j];
        }
    }
    NurbsPatch::new(KnotVector::uniform(2, 0), KnotVector::uniform(2, 0), points, weights)
}

/// Serialise geometry as a JSON document (shortest round-trip decimals).
pub fn to_document<T: serde::Serialize>(geometry: &T) -> String {
    serde_json::to_string_pretty(geometry).expect("geometry serialises")
}

/// Parse a geometry document; all invariants are re-validated.
pub fn from_document<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, GeometryError> {
    serde_json::from_str(text).map_err(|e| GeometryError::Document(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn arc_weights() {
        let c = make_arc(Vec2::zeros(), 2.0, 0.0, 2.0 * PI / 3.0).unwrap();
        assert!((c.weights()[1] - 0.5).abs() < 1e-15);
        let q = make_arc(Vec2::zeros(), 1.0, 0.0, PI / 2.0).unwrap();
        assert!((q.weights()[1] - FRAC_1_SQRT_2).abs() < 1e-15);
        let m = q.point(0.5).unwrap();
        assert!((m - Vec2::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn arc_radius_exact() {
        let c = Vec2::new(0.3, -1.2);
        let arc = make_arc(c, 0.029225, 7.0 * PI / 6.0, 11.0 * PI / 6.0).unwrap();
        for i in 0..1000 {
            let u = i as f64 / 999.0;
            let r = (arc.point(u).unwrap() - c).norm();
            assert!((r - 0.029225).abs() / 0.029225 < 1e-12);
        }
    }

    #[test]
    fn arc_span_limits() {
        assert!(matches!(make_arc(Vec2::zeros(), 1.0, 0.0, PI), Err(GeometryError::ArcSpan { .. })));
        assert!(make_arc(Vec2::zeros(), 1.0, 1.0, 1.0).is_err());
        assert!(make_annulus_patch(Vec2::zeros(), 2.0, 1.0, 0.0, 1.0).is_err());
        assert!(make_annulus_patch(Vec2::zeros(), 0.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn annulus_iso_curves_are_circles() {
        let p = make_annulus_patch(Vec2::zeros(), 6.35e-3, 7.1e-3, 7.0 * PI / 6.0, 11.0 * PI / 6.0).unwrap();
        assert_eq!(p.num_points(), 9);
        for k in 0..=100 {
            let v = k as f64 / 100.0;
            assert!((p.point(0.0, v).unwrap().norm() - 6.35e-3).abs() < 1e-15);
            assert!((p.point(1.0, v).unwrap().norm() - 7.1e-3).abs() < 1e-15);
            assert!((p.point(0.5, v).unwrap().norm() - 6.725e-3).abs() < 1e-15);
        }
    }

    #[test]
    fn document_round_trip() {
        let c = make_arc(Vec2::new(0.1, 0.2), 0.7, 0.1, 2.0).unwrap().refine(&[0.3]).unwrap();
        let text = to_document(&c);
        let back: NurbsCurve = from_document(&text).unwrap();
        assert_eq!(back, c);
        let bad = text.replace("\"degree\": 2", "\"degree\": 5");
        assert!(from_document::<NurbsCurve>(&bad).is_err());
    }
}
