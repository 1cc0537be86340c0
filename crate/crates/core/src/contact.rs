//! Knot-to-surface contact search, gap evaluation and penalty contributions.
//!
//! Slave points are the Gauss stations of the slave contact edge; each is
//! projected onto the master contact edge by Newton iteration on
//! `(x_s - x_m(u)) . x_m'(u) = 0`. Gaps are positive for separation and
//! negative for penetration, measured along the master's outward normal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::{Body, EdgeData};
use crate::mesh::GaussRule;
use crate::nurbs::{GeometryError, NurbsCurve, Vec2};

/// Parameter samples used when Newton projection fails.
pub const FALLBACK_SAMPLES: usize = 1000;

/// Contact-point displacements below this make `F_c / d_m` meaningless.
pub const MIN_STIFFNESS_DISPLACEMENT: f64 = 1e-15;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ContactError {
    #[error("closest-point projection of ({x:e}, {y:e}) did not converge")]
    Projection { x: f64, y: f64 },
    #[error("degenerate master tangent at u = {u} (|x'| = {norm:e})")]
    DegenerateTangent { u: f64, norm: f64 },
    #[error("invalid contact configuration: {0}")]
    Config(String),
    #[error("contact-point displacement {0:e} m too small to define a stiffness")]
    UndefinedStiffness(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Gaps measured against the exact NURBS edge.
    ExactNurbs,
    /// Gaps measured against the chord polygon through `segments + 1`
    /// equally spaced parameter values of the master edge.
    Faceted { segments: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactIntegration {
    /// Each slave Gauss station carries a concentrated force `P_N` (N/m).
    Collocated,
    /// `P_N` is a traction integrated with the Gauss weight and edge Jacobian.
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    /// Penalty factor: N/m of contact force per metre of penetration.
    pub penalty: f64,
    /// Bound on `|(x_s - x_m) . x_m'|` at a converged projection.
    pub projection_tolerance: f64,
    pub max_iterations: usize,
    pub boundary: BoundaryMode,
    pub integration: ContactIntegration,
    /// Initial gaps smaller than this (m) are treated as exact touching and
    /// removed from all later gap evaluations at that station.
    pub adjust_tolerance: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            penalty: 1e12,
            projection_tolerance: 1e-10,
            max_iterations: 50,
            boundary: BoundaryMode::ExactNurbs,
            integration: ContactIntegration::Collocated,
            adjust_tolerance: 1e-12,
        }
    }
}

impl ContactConfig {
    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(ContactError::Config(format!("penalty {} must be positive", self.penalty)));
        }
        if !(self.projection_tolerance > 0.0) {
            return Err(ContactError::Config("projection tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(ContactError::Config("max_iterations must be at least 1".into()));
        }
        if let BoundaryMode::Faceted { segments } = self.boundary {
            if segments < 2 {
                return Err(ContactError::Config(format!("faceted boundary needs >= 2 segments, got {segments}")));
            }
        }
        if !(self.adjust_tolerance >= 0.0) {
            return Err(ContactError::Config("adjust tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Penalty force `eps * <-g>`.
pub fn contact_force(gap: f64, penalty: f64) -> f64 {
    penalty * (-gap).max(0.0)
}

/// `S = F_c / d_m`.
pub fn effective_contact_stiffness(force: f64, displacement: f64) -> Result<f64, ContactError> {
    if displacement.abs() < MIN_STIFFNESS_DISPLACEMENT {
        return Err(ContactError::UndefinedStiffness(displacement));
    }
    Ok(force / displacement)
}

fn newton_projection(x_s: Vec2, master: &NurbsCurve, u0: f64, cfg: &ContactConfig) -> Option<f64> {
    let (a, b) = master.domain();
    let mut u = u0.clamp(a, b);
    for _ in 0..cfg.max_iterations {
        let d = master.derivatives(u, 2).ok()?;
        let r = x_s - d[0];
        let f = r.dot(&d[1]);
        let fp = r.dot(&d[2]) - d[1].norm_squared();
        if fp >= 0.0 {
            // not heading for a distance minimum
            return None;
        }
        let du = f / fp;
        let next = (u - du).clamp(a, b);
        if f.abs() < cfg.projection_tolerance && du.abs() < 1e-12 {
            return Some(next);
        }
        if next == u {
            // pinned at an end of the curve
            return Some(u);
        }
        u = next;
    }
    None
}

/// Parameter of the master point closest to `x_s`, starting from `u0`.
pub fn closest_point_projection(
    x_s: Vec2,
    master: &NurbsCurve,
    u0: f64,
    cfg: &ContactConfig,
) -> Result<f64, ContactError> {
    if let Some(u) = newton_projection(x_s, master, u0, cfg) {
        return Ok(u);
    }
    let (a, b) = master.domain();
    let mut best = (f64::INFINITY, a);
    for i in 0..=FALLBACK_SAMPLES {
        let u = a + (b - a) * i as f64 / FALLBACK_SAMPLES as f64;
        let d = (master.point(u)? - x_s).norm_squared();
        if d < best.0 {
            best = (d, u);
        }
    }
    newton_projection(x_s, master, best.1, cfg).ok_or(ContactError::Projection { x: x_s.x, y: x_s.y })
}

/// Unit outward normal of a curve at `u`.
pub fn outward_normal(curve: &NurbsCurve, u: f64, outward_left: bool) -> Result<Vec2, ContactError> {
    let d = curve.derivatives(u, 1)?;
    unit_normal(d[1], u, outward_left)
}

fn unit_normal(tangent: Vec2, u: f64, outward_left: bool) -> Result<Vec2, ContactError> {
    let norm = tangent.norm();
    if norm < 1e-14 {
        return Err(ContactError::DegenerateTangent { u, norm });
    }
    let t = tangent / norm;
    Ok(if outward_left { Vec2::new(-t.y, t.x) } else { Vec2::new(t.y, -t.x) })
}

/// Signed gap of `x_s` against the master point at `u_m`, with the normal.
pub fn gap(x_s: Vec2, master: &NurbsCurve, u_m: f64, outward_left: bool) -> Result<(f64, Vec2), ContactError> {
    let n = outward_normal(master, u_m, outward_left)?;
    Ok(((x_s - master.point(u_m)?).dot(&n), n))
}

/// Angles (rad) between one-sided tangents at each interior knot.
pub fn knot_normal_jumps(curve: &NurbsCurve) -> Vec<f64> {
    let spans = curve.knots().spans();
    spans
        .windows(2)
        .map(|w| {
            let (left, _, u) = w[0];
            let (right, _, _) = w[1];
            let tl = curve.derivatives_on_span(left, u, 1)[1];
            let tr = curve.derivatives_on_span(right, u, 1)[1];
            angle_between(tl, tr)
        })
        .collect()
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    let cross = a.x * b.y - a.y * b.x;
    cross.atan2(a.dot(&b)).abs()
}

/// Chord-polygon replacement of a master edge.
#[derive(Debug, Clone)]
pub struct FacetedBoundary {
    pub params: Vec<f64>,
    pub vertices: Vec<Vec2>,
    pub outward_left: bool,
}

pub fn faceted_boundary(
    master: &NurbsCurve,
    segments: usize,
    outward_left: bool,
) -> Result<FacetedBoundary, ContactError> {
    if segments < 2 {
        return Err(ContactError::Config(format!("faceted boundary needs >= 2 segments, got {segments}")));
    }
    let (a, b) = master.domain();
    let params: Vec<f64> = (0..=segments).map(|j| a + (b - a) * j as f64 / segments as f64).collect();
    let vertices = params.iter().map(|&u| master.point(u)).collect::<Result<_, _>>()?;
    Ok(FacetedBoundary { params, vertices, outward_left })
}

impl FacetedBoundary {
    pub fn segments(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn normal(&self, seg: usize) -> Vec2 {
        let t = self.vertices[seg + 1] - self.vertices[seg];
        unit_normal(t, self.params[seg], self.outward_left).expect("distinct vertices")
    }

    /// Closest segment and local coordinate `t` in `[0,1]`.
    pub fn closest(&self, x: Vec2) -> (usize, f64) {
        let mut best = (f64::INFINITY, 0, 0.0);
        for s in 0..self.segments() {
            let (a, b) = (self.vertices[s], self.vertices[s + 1]);
            let ab = b - a;
            let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (a + ab * t - x).norm_squared();
            if d < best.0 {
                best = (d, s, t);
            }
        }
        (best.1, best.2)
    }

    pub fn gap(&self, x: Vec2) -> (f64, Vec2) {
        let (s, t) = self.closest(x);
        let p = self.vertices[s] * (1.0 - t) + self.vertices[s + 1] * t;
        let n = self.normal(s);
        ((x - p).dot(&n), n)
    }

    /// Normal direction change (rad) at each interior vertex.
    pub fn junction_jumps(&self) -> Vec<f64> {
        (1..self.segments())
            .map(|j| angle_between(self.vertices[j] - self.vertices[j - 1], self.vertices[j + 1] - self.vertices[j]))
            .collect()
    }
}

/// One slave Gauss station paired with its closest master point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPair {
    /// Element index along the slave contact edge.
    pub slave_element: usize,
    /// Station index along the whole slave edge.
    pub gauss_index: usize,
    pub slave_param: f64,
    pub slave_point: Vec2,
    pub master_param: f64,
    pub master_point: Vec2,
    pub normal: Vec2,
    pub gap: f64,
    pub active: bool,
    /// 1 for collocated stations, Gauss weight x edge Jacobian otherwise.
    pub weight: f64,
    /// (slave patch control point, basis value)
    pub slave_basis: Vec<(usize, f64)>,
    /// (master patch control point, basis value)
    pub master_basis: Vec<(usize, f64)>,
    /// Current displacements interpolated at both points.
    pub slave_displacement: Vec2,
    pub master_displacement: Vec2,
}

impl ContactPair {
    /// Penalty force at this station (N/m for collocated stations).
    pub fn force(&self, penalty: f64) -> f64 {
        contact_force(self.gap, penalty)
    }

    /// `dg/dU` over the local layout: slave points (x,y) then master points (x,y).
    pub fn coupling_vector(&self) -> DVector<f64> {
        let ns = self.slave_basis.len();
        let mut g = DVector::zeros(2 * (ns + self.master_basis.len()));
        for (k, &(_, r)) in self.slave_basis.iter().enumerate() {
            g[2 * k] = r * self.normal.x;
            g[2 * k + 1] = r * self.normal.y;
        }
        for (k, &(_, r)) in self.master_basis.iter().enumerate() {
            g[2 * (ns + k)] = -r * self.normal.x;
            g[2 * (ns + k) + 1] = -r * self.normal.y;
        }
        g
    }
}

/// Linearised penalty stiffness `eps w G G^T` in the pair's local layout.
pub fn contact_stiffness_matrix(pair: &ContactPair, cfg: &ContactConfig) -> DMatrix<f64> {
    let g = pair.coupling_vector();
    if !pair.active {
        return DMatrix::zeros(g.len(), g.len());
    }
    &g * g.transpose() * (cfg.penalty * pair.weight)
}

enum MasterSurface {
    Exact(NurbsCurve),
    Faceted(FacetedBoundary),
}

/// (patch control point, basis value) pairs, reference point, displacement.
type EdgeSample = (Vec<(usize, f64)>, Vec2, Vec2);

fn interpolate(edge: &EdgeData, curve: &NurbsCurve, u: f64) -> Result<EdgeSample, ContactError> {
    let rb = curve.rational_basis(u)?;
    let mut basis = Vec::with_capacity(rb.values.len());
    let (mut x, mut d) = (Vec2::zeros(), Vec2::zeros());
    for (j, &r) in rb.values.iter().enumerate() {
        let k = rb.first + j;
        basis.push((edge.indices[k], r));
        x += edge.reference.points()[k] * r;
        d += edge.displacement[k] * r;
    }
    Ok((basis, x, d))
}

/// Pair every Gauss station of the slave contact edge with the master edge.
/// `guesses` warm-starts the projections (one parameter per station);
/// otherwise each starts from the middle of the master's knot range.
pub fn detect_contacts(
    slave: &Body,
    master: &Body,
    cfg: &ContactConfig,
    rule: &GaussRule,
    guesses: Option<&[f64]>,
) -> Result<Vec<ContactPair>, ContactError> {
    let s_edge = slave.contact_edge_data();
    let m_edge = master.contact_edge_data();
    let s_cur = s_edge.current();
    let m_cur = m_edge.current();
    let surface = match cfg.boundary {
        BoundaryMode::ExactNurbs => MasterSurface::Exact(m_cur),
        BoundaryMode::Faceted { segments } => {
            MasterSurface::Faceted(faceted_boundary(&m_cur, segments, m_edge.outward_left)?)
        }
    };
    let (ma, mb) = m_edge.reference.domain();
    let mut pairs = Vec::new();
    for (e, (span, a, b)) in s_edge.reference.knots().spans().into_iter().enumerate() {
        let half = 0.5 * (b - a);
        for (&xi, &w) in rule.points.iter().zip(&rule.weights) {
            let idx = pairs.len();
            let v = a + half * (xi + 1.0);
            let (slave_basis, xs_ref, us) = interpolate(&s_edge, &s_edge.reference, v)?;
            let x_s = xs_ref + us;
            let weight = match cfg.integration {
                ContactIntegration::Collocated => 1.0,
                ContactIntegration::Consistent => w * half * s_cur.derivatives_on_span(span, v, 1)[1].norm(),
            };
            // gap split into reference and displacement parts keeps the
            // small displacement difference free of coordinate round-off
            let (master_param, master_basis, xm_ref, um, normal) = match &surface {
                MasterSurface::Exact(curve) => {
                    let u0 = guesses.map(|gs| gs[idx]).unwrap_or(0.5 * (ma + mb));
                    let u = closest_point_projection(x_s, curve, u0, cfg)?;
                    let n = outward_normal(curve, u, m_edge.outward_left)?;
                    let (basis, xm, um) = interpolate(&m_edge, &m_edge.reference, u)?;
                    (u, basis, xm, um, n)
                }
                MasterSurface::Faceted(fb) => {
                    let (s, t) = fb.closest(x_s);
                    let (ba, xa, ua) = interpolate(&m_edge, &m_edge.reference, fb.params[s])?;
                    let (bb, xb, ub) = interpolate(&m_edge, &m_edge.reference, fb.params[s + 1])?;
                    let mut basis: Vec<(usize, f64)> = ba.iter().map(|&(k, r)| (k, r * (1.0 - t))).collect();
                    for (k, r) in bb {
                        match basis.iter_mut().find(|(kk, _)| *kk == k) {
                            Some(entry) => entry.1 += r * t,
                            None => basis.push((k, r * t)),
                        }
                    }
                    let u = fb.params[s] + t * (fb.params[s + 1] - fb.params[s]);
                    (u, basis, xa * (1.0 - t) + xb * t, ua * (1.0 - t) + ub * t, fb.normal(s))
                }
            };
            let gap = (xs_ref - xm_ref).dot(&normal) + (us - um).dot(&normal);
            pairs.push(ContactPair {
                slave_element: e,
                gauss_index: idx,
                slave_param: v,
                slave_point: x_s,
                master_param,
                master_point: xm_ref + um,
                normal,
                gap,
                active: gap < 0.0,
                weight,
                slave_basis,
                master_basis,
                slave_displacement: us,
                master_displacement: um,
            });
        }
    }
    Ok(pairs)
}

/// Stateful search over a load history: warm-starts projections from the
/// previous call and applies the initial-gap adjustment recorded on the
/// first call.
#[derive(Debug, Clone)]
pub struct ContactSearch {
    config: ContactConfig,
    rule: GaussRule,
    previous: Option<Vec<f64>>,
    offsets: Option<Vec<f64>>,
    warm_start: bool,
}

impl ContactSearch {
    pub fn new(config: ContactConfig, rule: GaussRule) -> Self {
        Self { config, rule, previous: None, offsets: None, warm_start: true }
    }

    /// Always start projections from the middle of the knot range.
    pub fn cold(mut self) -> Self {
        self.warm_start = false;
        self
    }

    pub fn config(&self) -> &ContactConfig {
        &self.config
    }

    pub fn detect(&mut self, slave: &Body, master: &Body) -> Result<Vec<ContactPair>, ContactError> {
        let guesses = if self.warm_start { self.previous.as_deref() } else { None };
        let mut pairs = detect_contacts(slave, master, &self.config, &self.rule, guesses)?;
        let tol = self.config.adjust_tolerance;
        let offsets = self
            .offsets
            .get_or_insert_with(|| pairs.iter().map(|p| if p.gap.abs() < tol { -p.gap } else { 0.0 }).collect());
        for (p, off) in pairs.iter_mut().zip(offsets.iter()) {
            p.gap += off;
            p.active = p.gap < 0.0;
        }
        self.previous = Some(pairs.iter().map(|p| p.master_param).collect());
        Ok(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nurbs::make_arc;
    use std::f64::consts::PI;

    fn sheath_arc() -> NurbsCurve {
        make_arc(Vec2::zeros(), 0.029225, 7.0 * PI / 6.0, 11.0 * PI / 6.0)
            .unwrap()
            .refine(&[0.2, 0.4, 0.6, 0.8])
            .unwrap()
    }

    #[test]
    fn radial_projection_on_circle() {
        let c = sheath_arc();
        let cfg = ContactConfig::default();
        for &(x, y) in &[(0.01, -0.04), (-0.005, -0.02), (0.0, -0.0292), (0.012, -0.021)] {
            let xs = Vec2::new(x, y);
            let u = closest_point_projection(xs, &c, 0.5, &cfg).unwrap();
            let expect = xs / xs.norm() * 0.029225;
            assert!((c.point(u).unwrap() - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn on_curve_point_recovers_parameter() {
        let c = sheath_arc();
        let cfg = ContactConfig::default();
        for &u in &[0.05, 0.33, 0.5, 0.71, 0.97] {
            let got = closest_point_projection(c.point(u).unwrap(), &c, 0.5, &cfg).unwrap();
            assert!((got - u).abs() < 1e-8);
        }
    }

    #[test]
    fn gap_signs() {
        // inner side of a circle centred at the origin, outward normal toward the centre
        let c = make_arc(Vec2::zeros(), 1.0, 7.0 * PI / 6.0, 11.0 * PI / 6.0).unwrap();
        let d = 1e-3;
        let (g, n) = gap(Vec2::new(0.0, -1.0 + d), &c, 0.5, true).unwrap();
        assert!((g - d).abs() < 1e-15 && (n - Vec2::new(0.0, 1.0)).norm() < 1e-15);
        let (g, _) = gap(Vec2::new(0.0, -1.0 - d), &c, 0.5, true).unwrap();
        assert!((g + d).abs() < 1e-15);
    }

    #[test]
    fn penalty_law() {
        // 1e-9 is not a binary fraction: equality holds to one rounding
        assert!((contact_force(-1e-9, 1e12) / 1000.0 - 1.0).abs() < 1e-15);
        assert_eq!(contact_force(0.0, 1e12), 0.0);
        assert_eq!(contact_force(3e-9, 1e12), 0.0);
        assert_eq!(contact_force(-1e-9, 2e12), 2.0 * contact_force(-1e-9, 1e12));
    }

    #[test]
    fn stiffness_ratio() {
        assert!((effective_contact_stiffness(1000.0, 1e-9).unwrap() / 1e12 - 1.0).abs() < 1e-15);
        assert_eq!(effective_contact_stiffness(0.0, 1e-9).unwrap(), 0.0);
        assert!(effective_contact_stiffness(1.0, 1e-16).is_err());
    }

    #[test]
    fn faceted_geometry() {
        let c = make_arc(Vec2::zeros(), 0.029225, 7.0 * PI / 6.0, 11.0 * PI / 6.0).unwrap();
        let fb = faceted_boundary(&c, 16, true).unwrap();
        assert!(fb.junction_jumps().iter().all(|&j| j > 0.0));
        assert!(knot_normal_jumps(&c.refine(&[0.25, 0.5, 0.75]).unwrap()).iter().all(|&j| j < 1e-12));
        assert!(faceted_boundary(&c, 1, true).is_err());
        // a point on the arc sits behind the chord: spurious penetration
        let (g, _) = fb.gap(c.point(0.5 / 16.0).unwrap());
        assert!(g < 0.0);
    }

    #[test]
    fn inactive_pair_has_zero_stiffness() {
        let pair = ContactPair {
            slave_element: 0,
            gauss_index: 0,
            slave_param: 0.5,
            slave_point: Vec2::zeros(),
            master_param: 0.5,
            master_point: Vec2::zeros(),
            normal: Vec2::new(0.6, 0.8),
            gap: 1e-6,
            active: false,
            weight: 1.0,
            slave_basis: vec![(0, 0.25), (1, 0.75)],
            master_basis: vec![(4, 0.5), (5, 0.5)],
            slave_displacement: Vec2::zeros(),
            master_displacement: Vec2::zeros(),
        };
        let cfg = ContactConfig::default();
        assert_eq!(contact_stiffness_matrix(&pair, &cfg).norm(), 0.0);
        let active = ContactPair { gap: -1e-9, active: true, ..pair };
        let k = contact_stiffness_matrix(&active, &cfg);
        assert_eq!(k, k.transpose());
        let eig = k.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l >= -1e-9 * eig.max()));
        // equal translation of both sides produces no force change
        let t = DVector::from_iterator(8, (0..8).map(|i| if i % 2 == 0 { 0.3 } else { -1.1 }));
        assert!((&k * t).norm() < 1e-9 * k.norm());
    }
}
