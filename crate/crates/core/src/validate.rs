//! Invariant suite run by the `validate` command.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{Body, Role};
use crate::config::SceneConfig;
use crate::contact::{closest_point_projection, ContactConfig};
use crate::elasticity::{plane_strain_matrix, Material};
use crate::mesh::gauss_rule;
use crate::nurbs::{make_annulus_patch, make_arc, Edge, Vec2};
use crate::post::{facet_metrics, stress_field, SampleGrid};
use crate::scene::TubeSheath;
use crate::solver::{spmv, Simulation};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn failed(name: &'static str, err: impl std::fmt::Display) -> Self {
        Self { name, passed: false, detail: format!("error: {err}") }
    }
}

/// Run every check against `base` (geometry and schedule of the scene file).
pub fn run_all(base: &SceneConfig) -> Vec<Check> {
    vec![
        mesh_counts(),
        arc_exactness(),
        refinement_invariance(),
        partition_of_unity(),
        projection_oracle(),
        patch_test(),
        reference_run(base),
        facets(base),
    ]
}

fn mesh_counts() -> Check {
    let expect = [(0, 2, 36), (2, 18, 100), (4, 50, 196), (20, 882, 2116)];
    let mut got = Vec::new();
    for &(k, _, _) in &expect {
        let cfg =
            SceneConfig { geometry: TubeSheath { insertions: k, ..TubeSheath::default() }, ..SceneConfig::default() };
        match cfg.scene() {
            Ok(s) => got.push((k, s.elements(), s.dofs())),
            Err(e) => return Check::failed("mesh counts", e),
        }
    }
    Check::new("mesh counts", got == expect, format!("{got:?}"))
}

fn arc_exactness() -> Check {
    let r = 0.029225;
    let arc = match make_arc(Vec2::zeros(), r, 7.0 * PI / 6.0, 11.0 * PI / 6.0) {
        Ok(a) => a,
        Err(e) => return Check::failed("arc exactness", e),
    };
    let err = (0..=1000).map(|i| (arc.point(i as f64 / 1000.0).unwrap().norm() / r - 1.0).abs()).fold(0.0, f64::max);
    Check::new("arc exactness", err < 1e-12, format!("max relative radial error {err:e}"))
}

fn refinement_invariance() -> Check {
    let arc = make_arc(Vec2::new(0.1, -0.2), 0.03, 0.3, 2.2).unwrap();
    let fine = match arc.refine(&[0.1, 0.37, 0.5, 0.5, 0.81]) {
        Ok(f) => f,
        Err(e) => return Check::failed("knot insertion invariance", e),
    };
    let err = (0..=1000)
        .map(|i| {
            let u = i as f64 / 1000.0;
            (arc.point(u).unwrap() - fine.point(u).unwrap()).norm()
        })
        .fold(0.0, f64::max);
    Check::new("knot insertion invariance", err < 1e-12, format!("max point shift {err:e} m"))
}

fn partition_of_unity() -> Check {
    let patch = make_annulus_patch(Vec2::zeros(), 1.0, 2.0, 0.0, 2.0).unwrap().refine_uniform(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut err: f64 = 0.0;
    for _ in 0..1000 {
        let b = patch.basis(rng.gen(), rng.gen()).unwrap();
        err = err.max((b.values.iter().sum::<f64>() - 1.0).abs());
    }
    Check::new("partition of unity", err < 1e-12, format!("max error {err:e}"))
}

fn projection_oracle() -> Check {
    let r = 0.029225;
    let arc =
        make_arc(Vec2::zeros(), r, 7.0 * PI / 6.0, 11.0 * PI / 6.0).unwrap().refine(&[0.2, 0.4, 0.6, 0.8]).unwrap();
    let cfg = ContactConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        // query points near the middle of the arc, both sides
        let theta = rng.gen_range(1.25 * PI..1.75 * PI);
        let rho = r * rng.gen_range(0.8..1.2);
        let x = Vec2::new(rho * theta.cos(), rho * theta.sin());
        let u = match closest_point_projection(x, &arc, 0.5, &cfg) {
            Ok(u) => u,
            Err(e) => return Check::failed("closest-point projection", e),
        };
        // the foot of the perpendicular on a circle is radial
        let foot = x / x.norm() * r;
        worst = worst.max((arc.point(u).unwrap() - foot).norm() / r);
    }
    Check::new("closest-point projection", worst < 1e-9, format!("max relative foot-point error {worst:e}"))
}

fn patch_test() -> Check {
    let patch = make_annulus_patch(Vec2::zeros(), 1.0, 2.0, 0.2, 1.4).unwrap().refine_uniform(3).unwrap();
    let mut body = Body::new("patch", Role::Slave, Material::new(1e9, 0.3).unwrap(), patch, Edge::UMax, Edge::UMin);
    let eps = -1e-4;
    let disp = body.reference().points().iter().map(|x| Vec2::new(0.0, eps * x.y)).collect();
    body.set_displacement(disp);
    let expect = plane_strain_matrix(&body.material).unwrap()[(1, 1)] * eps;
    match stress_field(&body, 0, &gauss_rule(3).unwrap(), SampleGrid::Gauss) {
        Ok(samples) => {
            let err = samples.iter().map(|s| (s.sigma_yy / expect - 1.0).abs()).fold(0.0, f64::max);
            Check::new("constant-stress patch test", err < 1e-8, format!("max relative error {err:e}"))
        }
        Err(e) => Check::failed("constant-stress patch test", e),
    }
}

fn reference_run(base: &SceneConfig) -> Check {
    let name = "reference run (symmetry, SPD, residual, first step)";
    let scene = match base.scene() {
        Ok(s) => s,
        Err(e) => return Check::failed(name, e),
    };
    let (d, eps) = (scene.schedule.increment, scene.contact.penalty);
    let mut sim = match Simulation::new(scene) {
        Ok(s) => s,
        Err(e) => return Check::failed(name, e),
    };
    let mut asym: f64 = 0.0;
    let mut rigid: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut first = None;
    while !sim.is_done() {
        let sys = match sim.global_system() {
            Ok(s) => s,
            Err(e) => return Check::failed(name, e),
        };
        let k = &sys.stiffness;
        let kt = k.transpose();
        let diff: f64 = (k - &kt).values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm: f64 = k.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        asym = asym.max(diff / norm);
        if sim.step() == 0 {
            let t =
                nalgebra::DVector::from_iterator(k.nrows(), (0..k.nrows()).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }));
            rigid = spmv(k, &t).norm() / (norm * t.norm());
        }
        match sim.advance() {
            Ok(r) => {
                worst_res = worst_res.max(r.residual);
                first.get_or_insert((r.contact_force, r.max_penetration));
            }
            Err(e) => return Check::failed(name, e),
        }
    }
    let (f1, g1) = first.unwrap_or((f64::NAN, f64::NAN));
    let first_ok = (f1 / (eps * d) - 1.0).abs() < 1e-9 && (g1 / d - 1.0).abs() < 1e-9;
    let passed = asym < 1e-12 && rigid < 1e-9 && worst_res < 1e-10 && first_ok;
    Check::new(
        name,
        passed,
        format!("asymmetry {asym:e}, rigid residual {rigid:e}, max solve residual {worst_res:e}, step 1 force {f1:e} N/m penetration {g1:e} m"),
    )
}

fn facets(base: &SceneConfig) -> Check {
    let scene = match base.scene() {
        Ok(s) => s,
        Err(e) => return Check::failed("faceted boundary", e),
    };
    let edge = scene.master.contact_edge_data();
    let mut detail = Vec::new();
    let mut passed = true;
    for n in [8, 16, 32, 64] {
        match facet_metrics(&edge.reference, edge.outward_left, base.geometry.sheath_inner_radius, n, 20_000) {
            Ok(m) => {
                let ratio = m.max_gap_error / m.sagitta_bound;
                passed &= m.min_junction_jump > 0.0 && m.exact_knot_jump < 1e-12 && (ratio - 1.0).abs() < 0.1;
                detail.push(format!("{n}: jump {:.3e} rad, gap/sagitta {ratio:.4}", m.min_junction_jump));
            }
            Err(e) => return Check::failed("faceted boundary", e),
        }
    }
    Check::new("faceted boundary", passed, detail.join("; "))
}
