//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use nalgebra_sparse::CscMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iga_contact::contact::{closest_point_projection, faceted_boundary, knot_normal_jumps};
use iga_contact::mesh::gauss_rule;
use iga_contact::nurbs::{make_annulus_patch, make_arc};
use iga_contact::post::{converge_study, penalty_sweep, stress_field, SampleGrid};
use iga_contact::{
    run_load_steps, Body, ContactConfig, Edge, Material, NurbsCurve, Role, SceneConfig, Simulation, TubeSheath, Vec2,
};

struct Outcome {
    passed: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.passed &= ok;
        self.lines.push(format!("    [{}] {}", if ok { "ok" } else { "x" }, what.into()));
    }
}

fn reference() -> SceneConfig {
    SceneConfig::default()
}

fn mesh_bookkeeping() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let ks = [0, 2, 4, 6, 8, 10, 14, 18, 20];
    let elements = [2, 18, 50, 98, 162, 242, 450, 722, 882];
    let dofs = [36, 100, 196, 324, 484, 676, 1156, 1764, 2116];
    for ((&k, &el), &dof) in ks.iter().zip(&elements).zip(&dofs) {
        let cfg = SceneConfig { geometry: TubeSheath { insertions: k, ..TubeSheath::default() }, ..reference() };
        let s = cfg.scene().unwrap();
        o.check(s.elements() == el && s.dofs() == dof, format!("k={k}: {} elements, {} dofs", s.elements(), s.dofs()));
    }
    let t = start.elapsed().as_secs_f64();
    o.check(t < 1.0, format!("runtime {t:.3} s"));
    o
}

fn convergence() -> Outcome {
    let mut o = Outcome::new();
    let ks = [0, 2, 4, 6, 8, 10, 14, 18, 20];
    let start = Instant::now();
    let rows = converge_study(&reference(), &ks).unwrap();
    let t = start.elapsed().as_secs_f64();
    let sigma = |k: usize| rows.iter().find(|r| r.insertions == k).unwrap().sigma_ymax;
    let dev = (sigma(4) / sigma(20) - 1.0).abs();
    o.check(
        dev < 0.05,
        format!("sigma_ymax(4) = {:.4e} Pa vs sigma_ymax(20) = {:.4e} Pa: {:.2}%", sigma(4), sigma(20), 100.0 * dev),
    );
    for w in [8, 10, 14, 18, 20].windows(2) {
        let change = (sigma(w[1]) / sigma(w[0]) - 1.0).abs();
        o.check(change < 0.03, format!("k={} -> {}: {:.2}%", w[0], w[1], 100.0 * change));
    }
    // the 2-element mesh should see essentially no contact stress
    let coarse = sigma(0) / sigma(20);
    o.check(
        coarse < 1e-2,
        format!("sigma_ymax(0) = {:.4e} Pa is {coarse:.3e} x sigma_ymax(20) (allowed < 1e-2)", sigma(0)),
    );
    let table = 1.10e5;
    let ratio = sigma(20) / table;
    o.check(
        (1.0 / 3.0..=3.0).contains(&ratio),
        format!("magnitude {:.3e} Pa is {ratio:.2} x 1.10e5 Pa (allowed 1/3..3)", sigma(20)),
    );
    o.check(t < 60.0, format!("sweep runtime {t:.1} s"));
    o
}

fn penalty_study() -> Outcome {
    let mut o = Outcome::new();
    let eps = [1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15];
    let base = reference();
    let d = base.schedule.increment;
    let start = Instant::now();
    let rows = penalty_sweep(&base, &eps);
    let t = start.elapsed().as_secs_f64();
    o.check(rows.iter().all(|r| r.error.is_none()), "every run completed");
    let decreasing = rows.windows(2).all(|w| w[1].max_penetration < w[0].max_penetration);
    let pens: Vec<String> = rows.iter().map(|r| format!("{:.2e}", r.max_penetration)).collect();
    o.check(decreasing, format!("max |g_N| strictly decreasing: {}", pens.join(", ")));
    for r in rows.iter().filter(|r| r.penalty >= 1e12) {
        o.check(
            r.max_penetration <= 0.01 * d,
            format!("eps {:.0e}: max |g_N| {:.3e} m vs 1% of d = {:.1e} m", r.penalty, r.max_penetration, 0.01 * d),
        );
    }
    let s12 = rows[3].sigma_max;
    let s14 = rows[5].sigma_max;
    let change = (s14 / s12 - 1.0).abs();
    o.check(change < 0.02, format!("sigma_max change 1e12 -> 1e14: {:.2}%", 100.0 * change));
    o.check(t < 60.0, format!("runtime {t:.1} s"));
    o
}

fn first_step() -> Outcome {
    let mut o = Outcome::new();
    let cfg = reference();
    let (eps, d) = (cfg.contact.penalty, cfg.schedule.increment);
    assert_eq!((eps, d), (1e12, 1e-9));
    let mut sim = Simulation::new(cfg.scene().unwrap()).unwrap();
    let r = sim.advance().unwrap();
    let pen_err = (r.max_penetration / 1e-9 - 1.0).abs();
    let force_err = (r.contact_force / 1000.0 - 1.0).abs();
    o.check(pen_err < 1e-9, format!("penetration {:e} m (relative error {pen_err:.1e})", r.max_penetration));
    o.check(force_err < 1e-9, format!("contact force {:e} N/m (relative error {force_err:.1e})", r.contact_force));
    o
}

fn linearity() -> Outcome {
    let mut o = Outcome::new();
    let h = run_load_steps(reference().scene().unwrap()).unwrap();
    let pts: Vec<(f64, f64)> = h
        .steps
        .iter()
        .filter(|s| (10..=100).contains(&s.step))
        .map(|s| (s.master_displacement, s.contact_force))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    o.check(pts.len() == 91, format!("{} regression points", pts.len()));
    o.check(r2 > 0.999, format!("R^2 = {r2:.8}, slope {:.4e} N/m^2", sxy / sxx));
    o
}

fn geometry() -> Outcome {
    let mut o = Outcome::new();
    let (c, r) = (Vec2::new(0.013, -0.021), 0.029225);
    let arc = make_arc(c, r, 7.0 * PI / 6.0, 11.0 * PI / 6.0).unwrap();
    let radial =
        (0..1000).map(|i| ((arc.point(i as f64 / 999.0).unwrap() - c).norm() / r - 1.0).abs()).fold(0.0, f64::max);
    o.check(radial < 1e-12, format!("arc radial error {radial:.2e}"));

    let coarse = make_annulus_patch(c, 0.02, 0.03, 1.2, 3.0).unwrap();
    let fine = coarse.refine_uniform(20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut shift: f64 = 0.0;
    let mut pou: f64 = 0.0;
    for _ in 0..1000 {
        let (u, v) = (rng.gen::<f64>(), rng.gen::<f64>());
        shift = shift.max((coarse.point(u, v).unwrap() - fine.point(u, v).unwrap()).norm());
        pou = pou.max((fine.basis(u, v).unwrap().values.iter().sum::<f64>() - 1.0).abs());
        pou = pou.max((arc.rational_basis(u).unwrap().values.iter().sum::<f64>() - 1.0).abs());
    }
    o.check(shift < 1e-12, format!("knot insertion point shift {shift:.2e} m"));
    o.check(pou < 1e-12, format!("partition of unity error {pou:.2e}"));
    o
}

/// Brute-force foot point: dense sampling, then bisection on the sign of a
/// central-difference tangent condition. Uses point evaluation only.
fn brute_force_parameter(curve: &NurbsCurve, x: Vec2) -> f64 {
    let n = 20_000;
    let dist = |u: f64| (curve.point(u).unwrap() - x).norm_squared();
    let best = (0..=n).map(|i| i as f64 / n as f64).min_by(|a, b| dist(*a).total_cmp(&dist(*b))).unwrap();
    let h = 1e-6;
    let f = |u: f64| {
        (x - curve.point(u).unwrap())
            .dot(&(curve.point((u + h).min(1.0)).unwrap() - curve.point((u - h).max(0.0)).unwrap()))
    };
    let (mut a, mut b) = ((best - 1.0 / n as f64).max(0.0), (best + 1.0 / n as f64).min(1.0));
    // f > 0 below the foot point, f < 0 above
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn projection() -> Outcome {
    let mut o = Outcome::new();
    let scene = reference().scene().unwrap();
    let edge = scene.master.contact_edge_data().reference;
    let r = TubeSheath::default().sheath_inner_radius;
    let centre = Vec2::new(0.0, r);
    let cfg = ContactConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let theta = rng.gen_range(210f64.to_radians()..330f64.to_radians());
        let rho = r * rng.gen_range(0.7..1.3);
        let x = centre + Vec2::new(rho * theta.cos(), rho * theta.sin());
        let u = closest_point_projection(x, &edge, 0.5, &cfg).unwrap();
        worst = worst.max((u - brute_force_parameter(&edge, x)).abs());
    }
    o.check(worst < 1e-8, format!("1000 queries, max parameter difference {worst:.2e}"));
    o
}

fn facets() -> Outcome {
    let mut o = Outcome::new();
    let scene = reference().scene().unwrap();
    let data = scene.master.contact_edge_data();
    let r = TubeSheath::default().sheath_inner_radius;
    let centre = Vec2::new(0.0, r);
    let exact_jump = knot_normal_jumps(&data.reference).into_iter().fold(0.0, f64::max);
    o.check(exact_jump < 1e-12, format!("exact edge knot normal jump {exact_jump:.2e} rad"));
    for n in [4, 8, 16, 32, 64] {
        let fb = faceted_boundary(&data.reference, n, data.outward_left).unwrap();
        let angles: Vec<f64> = fb.vertices.iter().map(|v| (v.y - centre.y).atan2(v.x - centre.x)).collect();
        // for a chord polygon on a circle, the normal turns by half the sum
        // of the two adjacent subtended angles
        let min_jump = (1..n).map(|j| 0.5 * (angles[j + 1] - angles[j - 1]).abs()).fold(f64::INFINITY, f64::min);
        let measured_jump = fb.junction_jumps().into_iter().fold(f64::INFINITY, f64::min);
        let sagitta = angles.windows(2).map(|w| r * (1.0 - (0.5 * (w[1] - w[0])).cos())).fold(0.0, f64::max);
        let mut gap_error: f64 = 0.0;
        for i in 0..=20_000 {
            let x = data.reference.point(i as f64 / 20_000.0).unwrap();
            gap_error = gap_error.max(fb.gap(x).0.abs());
        }
        let ratio = gap_error / sagitta;
        o.check(
            measured_jump > 0.0 && (measured_jump / min_jump - 1.0).abs() < 1e-9 && (ratio - 1.0).abs() < 0.1,
            format!("{n} facets: min junction jump {measured_jump:.3e} rad, gap error / sagitta {ratio:.4}"),
        );
    }
    o
}

fn dense(a: &CscMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        m[(i, j)] += *v;
    }
    m
}

fn mechanics() -> Outcome {
    let mut o = Outcome::new();
    let patch = make_annulus_patch(Vec2::zeros(), 6.35e-3, 7.1e-3, 210f64.to_radians(), 330f64.to_radians())
        .unwrap()
        .refine_uniform(4)
        .unwrap();
    let (e, nu) = (2e11, 0.3);
    let mut body = Body::new("tube", Role::Slave, Material::new(e, nu).unwrap(), patch, Edge::UMax, Edge::UMin);
    let strain = -2e-6;
    let disp = body.reference().points().iter().map(|x| Vec2::new(0.0, strain * x.y)).collect();
    body.set_displacement(disp);
    let syy = e * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu)) * strain;
    let sxx = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)) * strain;
    let err = stress_field(&body, 0, &gauss_rule(3).unwrap(), SampleGrid::Uniform(5))
        .unwrap()
        .iter()
        .map(|s| {
            ((s.sigma_yy - syy).abs() / syy.abs())
                .max((s.sigma_xx - sxx).abs() / sxx.abs())
                .max(s.tau_xy.abs() / syy.abs())
        })
        .fold(0.0, f64::max);
    o.check(err < 1e-8, format!("patch test constant stress error {err:.2e}"));

    let mut sim = Simulation::new(reference().scene().unwrap()).unwrap();
    let (mut asym, mut min_eig, mut res): (f64, f64, f64) = (0.0, f64::INFINITY, 0.0);
    while !sim.is_done() {
        let k = dense(&sim.global_system().unwrap().stiffness);
        asym = asym.max((&k - k.transpose()).norm() / k.norm());
        if sim.step() < 3 || sim.step().is_multiple_of(25) {
            let c = dense(&sim.constrained_system().unwrap().matrix);
            let eig = c.symmetric_eigenvalues();
            min_eig = min_eig.min(eig.min() / eig.max());
        }
        res = res.max(sim.advance().unwrap().residual);
    }
    o.check(asym < 1e-12, format!("global K asymmetry {asym:.2e}"));
    o.check(min_eig > 0.0, format!("constrained K smallest / largest eigenvalue {min_eig:.2e}"));
    o.check(res < 1e-10, format!("max solve residual {res:.2e}"));
    o
}

fn runtime() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let h = run_load_steps(reference().scene().unwrap()).unwrap();
    let t = start.elapsed().as_secs_f64();
    o.check(h.steps.len() == 100 && h.elements == 50, format!("{} steps on {} elements", h.steps.len(), h.elements));
    o.check(t < 10.0, format!("runtime {t:.2} s"));
    o
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("mesh bookkeeping", mesh_bookkeeping),
        ("stress convergence", convergence),
        ("penalty sweep", penalty_study),
        ("first-step force", first_step),
        ("force-displacement linearity", linearity),
        ("geometry exactness", geometry),
        ("projection oracle", projection),
        ("facet comparison", facets),
        ("mechanics sanity", mechanics),
        ("desk-scale runtime", runtime),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!("criterion {:>2} {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" });
        for l in &o.lines {
            println!("{l}");
        }
        failed += usize::from(!o.passed);
    }
    println!("\nacceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
