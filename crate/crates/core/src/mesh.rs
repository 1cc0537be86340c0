//! Element extraction from patch knot spans, global degree-of-freedom
//! numbering and Gauss-Legendre rules.

use thiserror::Error;

use crate::nurbs::NurbsPatch;

/// Largest supported Gauss-Legendre rule.
pub const MAX_GAUSS_POINTS: usize = 20;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MeshError {
    #[error("Gauss rule with {0} points is not supported (1..={MAX_GAUSS_POINTS})")]
    UnsupportedRule(usize),
}

/// One non-empty knot-span rectangle of a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub body: usize,
    pub span_u: usize,
    pub span_v: usize,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    /// Patch control point indices with support on the element, in the order
    /// used by [`NurbsPatch::basis_on_spans`].
    pub support: Vec<usize>,
}

impl Element {
    /// Map reference coordinates in `[-1,1]^2` to patch parameters.
    pub fn parameters(&self, xi: f64, eta: f64) -> (f64, f64) {
        let (ua, ub) = self.u_range;
        let (va, vb) = self.v_range;
        (0.5 * ((ub - ua) * xi + ub + ua), 0.5 * ((vb - va) * eta + vb + va))
    }

    /// `d(u,v)/d(xi,eta)` determinant.
    pub fn parametric_scale(&self) -> f64 {
        0.25 * (self.u_range.1 - self.u_range.0) * (self.v_range.1 - self.v_range.0)
    }
}

pub fn extract_elements(body: usize, patch: &NurbsPatch) -> Vec<Element> {
    let (p, q) = (patch.knots_u().degree(), patch.knots_v().degree());
    let spans_u = patch.knots_u().spans();
    let spans_v = patch.knots_v().spans();
    let mut out = Vec::with_capacity(spans_u.len() * spans_v.len());
    for &(sv, va, vb) in &spans_v {
        for &(su, ua, ub) in &spans_u {
            let support = (0..=q)
                .flat_map(|b| (0..=p).map(move |a| (a, b)))
                .map(|(a, b)| patch.index(su - p + a, sv - q + b))
                .collect();
            out.push(Element { body, span_u: su, span_v: sv, u_range: (ua, ub), v_range: (va, vb), support });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tensor-product points `(xi, eta, weight)`, `xi` fastest.
    pub fn tensor(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.points.iter().zip(&self.weights).flat_map(move |(&eta, &we)| {
            self.points.iter().zip(&self.weights).map(move |(&xi, &wx)| (xi, eta, wx * we))
        })
    }
}

/// Gauss-Legendre rule on `[-1,1]`; roots by Newton iteration on `P_n`.
pub fn gauss_rule(n: usize) -> Result<GaussRule, MeshError> {
    if !(1..=MAX_GAUSS_POINTS).contains(&n) {
        return Err(MeshError::UnsupportedRule(n));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(GaussRule { points, weights })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Global numbering: body `b`, control point `k`, direction `d` (0 = x,
/// 1 = y) maps to `2 * (offset[b] + k) + d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    offsets: Vec<usize>,
    total_points: usize,
}

impl DofMap {
    pub fn new(points_per_body: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(points_per_body.len());
        let mut total = 0;
        for &n in points_per_body {
            offsets.push(total);
            total += n;
        }
        Self { offsets, total_points: total }
    }

    pub fn dof(&self, body: usize, point: usize, dir: usize) -> usize {
        2 * (self.offsets[body] + point) + dir
    }

    pub fn point_offset(&self, body: usize) -> usize {
        self.offsets[body]
    }

    pub fn num_bodies(&self) -> usize {
        self.offsets.len()
    }

    pub fn total_points(&self) -> usize {
        self.total_points
    }

    pub fn total_dofs(&self) -> usize {
        2 * self.total_points
    }
}

pub fn build_dof_map(patches: &[&NurbsPatch]) -> DofMap {
    DofMap::new(&patches.iter().map(|p| p.num_points()).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nurbs::{make_annulus_patch, Vec2};

    fn patch(k: usize) -> NurbsPatch {
        make_annulus_patch(Vec2::zeros(), 1.0, 2.0, 0.0, 2.0).unwrap().refine_uniform(k).unwrap()
    }

    #[test]
    fn element_counts() {
        assert_eq!(extract_elements(0, &patch(0)).len(), 1);
        assert_eq!(extract_elements(0, &patch(4)).len(), 25);
        assert_eq!(extract_elements(0, &patch(20)).len(), 441);
        assert!(extract_elements(0, &patch(3)).iter().all(|e| e.support.len() == 9));
    }

    #[test]
    fn elements_tile_domain() {
        let els = extract_elements(0, &patch(5));
        let area: f64 = els.iter().map(|e| (e.u_range.1 - e.u_range.0) * (e.v_range.1 - e.v_range.0)).sum();
        assert!((area - 1.0).abs() < 1e-14);
        for (a, ea) in els.iter().enumerate() {
            for eb in &els[a + 1..] {
                let ou = ea.u_range.1.min(eb.u_range.1) - ea.u_range.0.max(eb.u_range.0);
                let ov = ea.v_range.1.min(eb.v_range.1) - ea.v_range.0.max(eb.v_range.0);
                assert!(ou <= 1e-15 || ov <= 1e-15);
            }
        }
    }

    #[test]
    fn gauss_values() {
        let g1 = gauss_rule(1).unwrap();
        assert_eq!((g1.points[0], g1.weights[0]), (0.0, 2.0));
        let g2 = gauss_rule(2).unwrap();
        assert!((g2.points[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((g2.weights[0] - 1.0).abs() < 1e-15);
        let g3 = gauss_rule(3).unwrap();
        let i4: f64 = g3.points.iter().zip(&g3.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert!((i4 - 0.4).abs() < 1e-14);
        assert!(gauss_rule(0).is_err() && gauss_rule(MAX_GAUSS_POINTS + 1).is_err());
    }

    #[test]
    fn gauss_exactness_all_orders() {
        for n in 1..=MAX_GAUSS_POINTS {
            let g = gauss_rule(n).unwrap();
            assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let num: f64 = g.points.iter().zip(&g.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
                assert!((num - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn table_dof_counts() {
        for (k, dof) in [(0, 36), (4, 196), (18, 1764)] {
            let p = patch(k);
            assert_eq!(build_dof_map(&[&p, &p]).total_dofs(), dof);
        }
    }
}
