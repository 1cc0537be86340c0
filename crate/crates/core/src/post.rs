//! Stress recovery, parameter studies and report files.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use crate::body::Body;
use crate::config::SceneConfig;
use crate::contact::{faceted_boundary, knot_normal_jumps, BoundaryMode, ContactPair};
use crate::elasticity::{element_stress, ElasticityError};
use crate::mesh::{extract_elements, GaussRule};
use crate::nurbs::{NurbsCurve, Vec2};
use crate::solver::{run_load_steps, RunHistory, SolveError, MASTER, SLAVE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressSample {
    pub body: usize,
    /// Deformed position (m).
    pub point: Vec2,
    pub sigma_xx: f64,
    pub sigma_yy: f64,
    pub tau_xy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleGrid {
    /// The analysis Gauss points.
    Gauss,
    /// `n x n` equally spaced points per element, edges included.
    Uniform(usize),
}

/// Small-strain stresses `D B u_e` of one body: `B` on the reference
/// geometry, `u_e` the total displacement. Points are reported deformed.
pub fn stress_field(
    body: &Body,
    id: usize,
    rule: &GaussRule,
    grid: SampleGrid,
) -> Result<Vec<StressSample>, ElasticityError> {
    let patch = body.reference();
    let current = body.current();
    let disp = body.displacement();
    let locals: Vec<(f64, f64)> = match grid {
        SampleGrid::Gauss => rule.tensor().map(|(xi, eta, _)| (xi, eta)).collect(),
        SampleGrid::Uniform(n) => {
            let n = n.max(2);
            let s = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            (0..n).flat_map(|j| (0..n).map(move |i| (s(i), s(j)))).collect()
        }
    };
    let elements = extract_elements(id, patch);
    let per_element: Vec<Vec<StressSample>> = elements
        .par_iter()
        .map(|el| {
            let ue: Vec<Vec2> = el.support.iter().map(|&k| disp[k]).collect();
            locals
                .iter()
                .map(|&(xi, eta)| {
                    let s = element_stress(el, patch, &body.material, &ue, xi, eta)?;
                    let (u, v) = el.parameters(xi, eta);
                    let point = current.point(u, v).expect("parameters inside the element");
                    Ok(StressSample { body: id, point, sigma_xx: s[0], sigma_yy: s[1], tau_xy: s[2] })
                })
                .collect::<Result<Vec<_>, ElasticityError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_element.into_iter().flatten().collect())
}

/// Largest `|sigma_yy|` over the Gauss points of a body.
pub fn max_abs_sigma_yy(body: &Body, rule: &GaussRule) -> Result<f64, ElasticityError> {
    Ok(stress_field(body, 0, rule, SampleGrid::Gauss)?.iter().map(|s| s.sigma_yy.abs()).fold(0.0, f64::max))
}

/// One row of the mesh refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub insertions: usize,
    pub elements: usize,
    pub dofs: usize,
    pub sigma_ymax: f64,
    pub contact_force: f64,
}

/// Run the scene once per insertion count; rows follow the given order.
pub fn converge_study(base: &SceneConfig, insertions: &[usize]) -> Result<Vec<ConvergeRow>, SolveError> {
    insertions
        .par_iter()
        .map(|&k| {
            let mut cfg = base.clone();
            cfg.geometry.insertions = k;
            let annotate =
                |e: SolveError| SolveError::Study { label: format!("{k} inserted knots"), source: Box::new(e) };
            let history = run_load_steps(cfg.scene().map_err(annotate)?).map_err(annotate)?;
            let last = history.last();
            Ok(ConvergeRow {
                insertions: k,
                elements: history.elements,
                dofs: history.dofs,
                sigma_ymax: last.sigma_ymax,
                contact_force: last.contact_force,
            })
        })
        .collect()
}

/// One row of the penalty study; `error` holds the failure of that run.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyRow {
    pub penalty: f64,
    pub contact_force: f64,
    /// Largest penetration in the final state (m).
    pub max_penetration: f64,
    /// Largest penetration seen at any step (m); step 1 always reaches `d`.
    pub peak_penetration: f64,
    pub slave_displacement: f64,
    pub master_displacement: f64,
    pub sigma_ymax: f64,
    pub sigma_max: f64,
    pub error: Option<String>,
}

/// Run the scene once per penalty factor. A failing run produces a row with
/// NaN values and the error text; the sweep continues.
pub fn penalty_sweep(base: &SceneConfig, penalties: &[f64]) -> Vec<PenaltyRow> {
    penalties
        .par_iter()
        .map(|&eps| {
            let mut cfg = base.clone();
            cfg.contact.penalty = eps;
            match cfg.scene().and_then(run_load_steps) {
                Ok(h) => {
                    let last = h.last();
                    PenaltyRow {
                        penalty: eps,
                        contact_force: last.contact_force,
                        max_penetration: last.max_penetration,
                        peak_penetration: h.steps.iter().map(|s| s.max_penetration).fold(0.0, f64::max),
                        slave_displacement: last.slave_displacement,
                        master_displacement: last.master_displacement,
                        sigma_ymax: last.sigma_ymax,
                        sigma_max: last.sigma_max,
                        error: None,
                    }
                }
                Err(e) => PenaltyRow {
                    penalty: eps,
                    contact_force: f64::NAN,
                    max_penetration: f64::NAN,
                    peak_penetration: f64::NAN,
                    slave_displacement: f64::NAN,
                    master_displacement: f64::NAN,
                    sigma_ymax: f64::NAN,
                    sigma_max: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Boundary representation metrics of a circular master edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetMetrics {
    pub segments: usize,
    /// Smallest and largest normal jump over interior facet junctions (rad).
    pub min_junction_jump: f64,
    pub max_junction_jump: f64,
    /// Largest normal jump at interior knots of the exact edge (rad).
    pub exact_knot_jump: f64,
    /// Largest `|gap|` of points on the exact arc against the facets (m).
    pub max_gap_error: f64,
    /// Largest chord sagitta `R (1 - cos(phi/2))` over the facets (m).
    pub sagitta_bound: f64,
}

/// Compare the exact edge with its `segments`-facet chord polygon. `samples`
/// points along the exact arc probe the facet gap error.
pub fn facet_metrics(
    edge: &NurbsCurve,
    outward_left: bool,
    radius: f64,
    segments: usize,
    samples: usize,
) -> Result<FacetMetrics, SolveError> {
    let fb = faceted_boundary(edge, segments, outward_left)?;
    let jumps = fb.junction_jumps();
    let (a, b) = edge.domain();
    let mut max_gap_error: f64 = 0.0;
    for i in 0..=samples {
        let x = edge.point(a + (b - a) * i as f64 / samples as f64)?;
        max_gap_error = max_gap_error.max(fb.gap(x).0.abs());
    }
    let sagitta_bound = fb
        .vertices
        .windows(2)
        .map(|w| {
            let half = ((w[1] - w[0]).norm() / (2.0 * radius)).min(1.0).asin();
            radius * (1.0 - half.cos())
        })
        .fold(0.0, f64::max);
    Ok(FacetMetrics {
        segments,
        min_junction_jump: jumps.iter().copied().fold(f64::INFINITY, f64::min),
        max_junction_jump: jumps.iter().copied().fold(0.0, f64::max),
        exact_knot_jump: knot_normal_jumps(edge).into_iter().fold(0.0, f64::max),
        max_gap_error,
        sagitta_bound,
    })
}

/// Exact and faceted runs of the same scene plus the boundary metrics.
#[derive(Debug, Clone)]
pub struct FacetComparison {
    pub metrics: FacetMetrics,
    pub exact: RunHistory,
    pub faceted: RunHistory,
}

pub fn facet_compare(base: &SceneConfig, segments: usize) -> Result<FacetComparison, SolveError> {
    let mut exact_cfg = base.clone();
    exact_cfg.contact.boundary = BoundaryMode::ExactNurbs;
    let mut facet_cfg = base.clone();
    facet_cfg.contact.boundary = BoundaryMode::Faceted { segments };
    let scene = exact_cfg.scene()?;
    let edge = scene.master.contact_edge_data();
    let metrics =
        facet_metrics(&edge.reference, edge.outward_left, base.geometry.sheath_inner_radius, segments, 20_000)?;
    let (exact, faceted) = rayon::join(|| run_load_steps(scene), || facet_cfg.scene().and_then(run_load_steps));
    Ok(FacetComparison { metrics, exact: exact?, faceted: faceted? })
}

fn num(x: f64) -> String {
    // adding zero folds -0 into 0
    format!("{:e}", x + 0.0)
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()
}

pub const HISTORY_HEADER: [&str; 10] = [
    "step",
    "prescribed_m",
    "contact_force_N_per_m",
    "max_penetration_m",
    "slave_displacement_m",
    "master_displacement_m",
    "contact_stiffness_N_per_m2",
    "sigma_ymax_Pa",
    "active_pairs",
    "relative_residual",
];

pub fn write_history(path: &Path, history: &RunHistory) -> io::Result<()> {
    write_rows(
        path,
        &HISTORY_HEADER,
        history.steps.iter().map(|s| {
            vec![
                s.step.to_string(),
                num(s.prescribed),
                num(s.contact_force),
                num(s.max_penetration),
                num(s.slave_displacement),
                num(s.master_displacement),
                opt(s.stiffness),
                num(s.sigma_ymax),
                s.active_pairs.to_string(),
                num(s.residual),
            ]
        }),
    )
}

pub fn write_contact_pairs(path: &Path, pairs: &[ContactPair], penalty: f64) -> io::Result<()> {
    write_rows(
        path,
        &[
            "station",
            "slave_element",
            "slave_param",
            "slave_x_m",
            "slave_y_m",
            "master_param",
            "master_x_m",
            "master_y_m",
            "normal_x",
            "normal_y",
            "gap_m",
            "active",
            "force_N_per_m",
        ],
        pairs.iter().map(|p| {
            vec![
                p.gauss_index.to_string(),
                p.slave_element.to_string(),
                num(p.slave_param),
                num(p.slave_point.x),
                num(p.slave_point.y),
                num(p.master_param),
                num(p.master_point.x),
                num(p.master_point.y),
                num(p.normal.x),
                num(p.normal.y),
                num(p.gap),
                p.active.to_string(),
                num(p.force(penalty) * p.weight),
            ]
        }),
    )
}

pub fn write_stress_field(path: &Path, samples: &[StressSample]) -> io::Result<()> {
    write_rows(
        path,
        &["body", "x_m", "y_m", "sigma_xx_Pa", "sigma_yy_Pa", "tau_xy_Pa"],
        samples.iter().map(|s| {
            vec![
                if s.body == SLAVE { "tube" } else { "sheath" }.to_string(),
                num(s.point.x),
                num(s.point.y),
                num(s.sigma_xx),
                num(s.sigma_yy),
                num(s.tau_xy),
            ]
        }),
    )
}

pub fn write_converge(path: &Path, rows: &[ConvergeRow]) -> io::Result<()> {
    write_rows(
        path,
        &["inserted_knots", "elements", "dofs", "sigma_ymax_Pa", "contact_force_N_per_m"],
        rows.iter().map(|r| {
            vec![
                r.insertions.to_string(),
                r.elements.to_string(),
                r.dofs.to_string(),
                num(r.sigma_ymax),
                num(r.contact_force),
            ]
        }),
    )
}

pub fn write_penalty(path: &Path, rows: &[PenaltyRow]) -> io::Result<()> {
    write_rows(
        path,
        &[
            "penalty_N_per_m2",
            "contact_force_N_per_m",
            "max_penetration_m",
            "peak_penetration_m",
            "slave_displacement_m",
            "master_displacement_m",
            "sigma_ymax_Pa",
            "sigma_max_Pa",
            "error",
        ],
        rows.iter().map(|r| {
            vec![
                num(r.penalty),
                num(r.contact_force),
                num(r.max_penetration),
                num(r.peak_penetration),
                num(r.slave_displacement),
                num(r.master_displacement),
                num(r.sigma_ymax),
                num(r.sigma_max),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Both bodies' Gauss-point stresses at the end of a run.
pub fn final_stress_field(
    history: &RunHistory,
    rule: &GaussRule,
    grid: SampleGrid,
) -> Result<Vec<StressSample>, ElasticityError> {
    let mut out = stress_field(&history.slave, SLAVE, rule, grid)?;
    out.extend(stress_field(&history.master, MASTER, rule, grid)?);
    Ok(out)
}

/// Plain-text run summary. Deterministic: no timings.
pub fn summary(history: &RunHistory, penalty: f64) -> String {
    let mut s = String::new();
    let last = history.last();
    let _ = writeln!(s, "elements             {}", history.elements);
    let _ = writeln!(s, "dofs                 {}", history.dofs);
    let _ = writeln!(s, "steps                {}", history.steps.len());
    let _ = writeln!(s, "penalty_N_per_m2     {}", num(penalty));
    let _ = writeln!(s, "prescribed_m         {}", num(last.prescribed));
    let _ = writeln!(s, "contact_force_N_per_m {}", num(last.contact_force));
    let _ = writeln!(s, "max_penetration_m    {}", num(last.max_penetration));
    let _ = writeln!(s, "slave_displacement_m {}", num(last.slave_displacement));
    let _ = writeln!(s, "master_displacement_m {}", num(last.master_displacement));
    let _ = writeln!(s, "contact_stiffness_N_per_m2 {}", opt(last.stiffness));
    let _ = writeln!(s, "sigma_ymax_Pa        {}", num(last.sigma_ymax));
    let _ = writeln!(s, "active_pairs         {}", last.active_pairs);
    let _ = writeln!(s, "max_relative_residual {}", num(history.steps.iter().map(|r| r.residual).fold(0.0, f64::max)));
    let _ = writeln!(s, "\nfirst steps: step force_N_per_m penetration_m master_displacement_m");
    for r in history.steps.iter().take(5) {
        let _ = writeln!(
            s,
            "  {} {} {} {}",
            r.step,
            num(r.contact_force),
            num(r.max_penetration),
            num(r.master_displacement)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::Role;
    use crate::elasticity::{plane_strain_matrix, Material};
    use crate::mesh::gauss_rule;
    use crate::nurbs::Edge;
    use crate::nurbs::{make_annulus_patch, make_arc};
    use std::f64::consts::PI;

    fn sector() -> Body {
        let p = make_annulus_patch(Vec2::zeros(), 1.0, 2.0, 0.2, 1.4).unwrap().refine_uniform(2).unwrap();
        Body::new("b", Role::Slave, Material::new(1e9, 0.3).unwrap(), p, Edge::UMax, Edge::UMin)
    }

    #[test]
    fn zero_displacement_zero_stress() {
        let b = sector();
        let rule = gauss_rule(3).unwrap();
        assert!(stress_field(&b, 0, &rule, SampleGrid::Uniform(3))
            .unwrap()
            .iter()
            .all(|s| s.sigma_yy == 0.0 && s.sigma_xx == 0.0));
        assert_eq!(max_abs_sigma_yy(&b, &rule).unwrap(), 0.0);
    }

    #[test]
    fn uniform_compression_patch() {
        let mut b = sector();
        let eps = -1e-4;
        let disp = b.reference().points().iter().map(|x| Vec2::new(0.0, eps * x.y)).collect();
        b.set_displacement(disp);
        let d = plane_strain_matrix(&b.material).unwrap();
        for s in stress_field(&b, 0, &gauss_rule(3).unwrap(), SampleGrid::Uniform(4)).unwrap() {
            assert!((s.sigma_yy / (d[(1, 1)] * eps) - 1.0).abs() < 1e-8);
            assert!((s.sigma_xx / (d[(0, 1)] * eps) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn sagitta_matches_facets() {
        let c = make_arc(Vec2::zeros(), 0.029225, 7.0 * PI / 6.0, 11.0 * PI / 6.0).unwrap();
        let m = facet_metrics(&c, true, 0.029225, 8, 4000).unwrap();
        assert!(m.min_junction_jump > 0.0);
        assert!(m.exact_knot_jump < 1e-12);
        assert!((m.max_gap_error / m.sagitta_bound - 1.0).abs() < 0.1);
    }
}
