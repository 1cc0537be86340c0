//! Global assembly, Dirichlet elimination, sparse Cholesky solve and the
//! displacement-controlled load-step loop.
//!
//! Each step re-assembles the elastic stiffness on the current geometry,
//! adds the penalty stiffness of the pairs found active at the end of the
//! previous step together with their linearised gap offsets, solves once for
//! the total control point displacement, updates the geometry and repeats the
//! contact search on it.

use std::collections::BTreeMap;

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;
use thiserror::Error;

use crate::body::Body;
use crate::contact::{contact_stiffness_matrix, effective_contact_stiffness, ContactError, ContactPair, ContactSearch};
use crate::elasticity::{element_stiffness, ElasticityError};
use crate::mesh::{build_dof_map, extract_elements, gauss_rule, DofMap, GaussRule, MeshError};
use crate::nurbs::{GeometryError, Vec2};
use crate::post::max_abs_sigma_yy;
use crate::scene::Scene;

pub const SLAVE: usize = 0;
pub const MASTER: usize = 1;

/// Iterative-refinement passes stop once the relative residual is below this.
const REFINE_TARGET: f64 = 1e-14;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("internal consistency: {0}")]
    Consistency(String),
    #[error("Cholesky factorisation failed: matrix is singular or indefinite")]
    Factorization,
    #[error("load step {step}: {source}")]
    AtStep { step: usize, source: Box<SolveError> },
    #[error("{label}: {source}")]
    Study { label: String, source: Box<SolveError> },
}

impl SolveError {
    fn at(self, step: usize) -> Self {
        match self {
            SolveError::AtStep { .. } => self,
            e => SolveError::AtStep { step, source: Box::new(e) },
        }
    }
}

/// Assembled unconstrained system `K U = F`.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub stiffness: CscMatrix<f64>,
    pub load: DVector<f64>,
}

fn body_triplets(
    body: &Body,
    id: usize,
    dofs: &DofMap,
    rule: &GaussRule,
) -> Result<Vec<(usize, usize, f64)>, SolveError> {
    let patch = body.current();
    let elements = extract_elements(id, &patch);
    let blocks: Vec<_> = elements
        .par_iter()
        .map(|el| element_stiffness(el, &patch, &body.material, rule).map(|m| (el, m)))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(blocks.len() * 18 * 18);
    for (el, m) in blocks {
        let map: Vec<usize> = el.support.iter().flat_map(|&k| [dofs.dof(id, k, 0), dofs.dof(id, k, 1)]).collect();
        for (a, &ga) in map.iter().enumerate() {
            for (b, &gb) in map.iter().enumerate() {
                out.push((ga, gb, m.stiffness[(a, b)]));
            }
        }
    }
    Ok(out)
}

fn pair_dofs(pair: &ContactPair, dofs: &DofMap) -> Vec<usize> {
    pair.slave_basis
        .iter()
        .map(|&(k, _)| (SLAVE, k))
        .chain(pair.master_basis.iter().map(|&(k, _)| (MASTER, k)))
        .flat_map(|(b, k)| [dofs.dof(b, k, 0), dofs.dof(b, k, 1)])
        .collect()
}

/// `K = K_g + K_c` and the contact right-hand side. For each active pair the
/// gap is linearised about `previous`: `g = g_old + G^T (U - U_prev)`.
pub fn assemble(
    slave: &Body,
    master: &Body,
    pairs: &[ContactPair],
    dofs: &DofMap,
    scene: &Scene,
    rule: &GaussRule,
    previous: &DVector<f64>,
) -> Result<GlobalSystem, SolveError> {
    let n = dofs.total_dofs();
    if previous.len() != n {
        return Err(SolveError::Consistency(format!("displacement has {} entries, expected {n}", previous.len())));
    }
    let mut coo = CooMatrix::new(n, n);
    for (i, j, v) in
        body_triplets(slave, SLAVE, dofs, rule)?.into_iter().chain(body_triplets(master, MASTER, dofs, rule)?)
    {
        coo.push(i, j, v);
    }
    let mut load = DVector::zeros(n);
    for pair in pairs.iter().filter(|p| p.active) {
        let map = pair_dofs(pair, dofs);
        if let Some(&bad) = map.iter().find(|&&d| d >= n) {
            return Err(SolveError::Consistency(format!("contact dof {bad} out of range")));
        }
        let kc = contact_stiffness_matrix(pair, &scene.contact);
        for (a, &ga) in map.iter().enumerate() {
            for (b, &gb) in map.iter().enumerate() {
                coo.push(ga, gb, kc[(a, b)]);
            }
        }
        let g = pair.coupling_vector();
        let projected: f64 = map.iter().zip(g.iter()).map(|(&d, gi)| previous[d] * gi).sum();
        let scale = scene.contact.penalty * pair.weight * (projected - pair.gap);
        for (&d, gi) in map.iter().zip(g.iter()) {
            load[d] += scale * gi;
        }
    }
    Ok(GlobalSystem { stiffness: CscMatrix::from(&coo), load })
}

/// Prescribed dof values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    values: BTreeMap<usize, f64>,
}

impl Constraints {
    pub fn prescribe(&mut self, dof: usize, value: f64) -> Result<(), SolveError> {
        if self.values.insert(dof, value).is_some() {
            return Err(SolveError::Config(format!("dof {dof} prescribed twice")));
        }
        Ok(())
    }

    pub fn get(&self, dof: usize) -> Option<f64> {
        self.values.get(&dof).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().map(|(&d, &v)| (d, v))
    }
}

/// Master support edge fixed in x and y; slave driven edge moved rigidly by
/// `prescribed(step)` along the drive direction (no transverse motion).
pub fn boundary_conditions(scene: &Scene, dofs: &DofMap, step: usize) -> Result<Constraints, SolveError> {
    let mut c = Constraints::default();
    for k in scene.master.reference().edge_indices(scene.master.support_edge) {
        c.prescribe(dofs.dof(MASTER, k, 0), 0.0)?;
        c.prescribe(dofs.dof(MASTER, k, 1), 0.0)?;
    }
    let shift = scene.drive_direction * scene.schedule.prescribed(step);
    for k in scene.slave.reference().edge_indices(scene.slave.support_edge) {
        c.prescribe(dofs.dof(SLAVE, k, 0), shift.x)?;
        c.prescribe(dofs.dof(SLAVE, k, 1), shift.y)?;
    }
    Ok(c)
}

/// System on the free dofs after eliminating prescribed values.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub matrix: CscMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Global dof of each free unknown.
    pub free: Vec<usize>,
    pub constraints: Constraints,
    total: usize,
}

impl ConstrainedSystem {
    /// Full displacement vector from the free solution.
    pub fn expand(&self, free_values: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.total);
        for (i, &d) in self.free.iter().enumerate() {
            u[d] = free_values[i];
        }
        for (d, v) in self.constraints.iter() {
            u[d] = v;
        }
        u
    }
}

pub fn apply_boundary_conditions(system: &GlobalSystem, constraints: &Constraints) -> ConstrainedSystem {
    let n = system.load.len();
    let mut index = vec![usize::MAX; n];
    let mut free = Vec::with_capacity(n - constraints.len());
    for d in 0..n {
        if constraints.get(d).is_none() {
            index[d] = free.len();
            free.push(d);
        }
    }
    let nf = free.len();
    let mut rhs = DVector::from_iterator(nf, free.iter().map(|&d| system.load[d]));
    let mut coo = CooMatrix::new(nf, nf);
    let k = &system.stiffness;
    for col in 0..n {
        let lane = k.col(col);
        let prescribed = constraints.get(col);
        for (&row, &v) in lane.row_indices().iter().zip(lane.values()) {
            let fr = index[row];
            if fr == usize::MAX {
                continue;
            }
            match prescribed {
                Some(value) => rhs[fr] -= v * value,
                None => coo.push(fr, index[col], v),
            }
        }
    }
    ConstrainedSystem { matrix: CscMatrix::from(&coo), rhs, free, constraints: constraints.clone(), total: n }
}

pub fn spmv(a: &CscMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for col in 0..a.ncols() {
        let lane = a.col(col);
        let xc = x[col];
        for (&row, &v) in lane.row_indices().iter().zip(lane.values()) {
            y[row] += v * xc;
        }
    }
    y
}

/// `||K U - F|| / ||F||`, or the absolute residual when `F = 0`.
pub fn relative_residual(a: &CscMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let r = (spmv(a, x) - b).norm();
    let bn = b.norm();
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

/// Sparse Cholesky solve with a few passes of iterative refinement.
/// Returns the solution and its relative residual.
pub fn solve_step(matrix: &CscMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64), SolveError> {
    if rhs.is_empty() {
        return Ok((DVector::zeros(0), 0.0));
    }
    let chol = CscCholesky::factor(matrix).map_err(|_| SolveError::Factorization)?;
    let solve = |b: &DVector<f64>| -> DVector<f64> { chol.solve(b).column(0).into_owned() };
    let mut x = solve(rhs);
    let mut res = relative_residual(matrix, &x, rhs);
    for _ in 0..3 {
        if res < REFINE_TARGET || !res.is_finite() {
            break;
        }
        let r = rhs - spmv(matrix, &x);
        let candidate = &x + solve(&r);
        let cres = relative_residual(matrix, &candidate, rhs);
        if cres >= res {
            break;
        }
        x = candidate;
        res = cres;
    }
    if !res.is_finite() {
        return Err(SolveError::Factorization);
    }
    Ok((x, res))
}

/// Recorded state after one load step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub step: usize,
    /// Cumulative prescribed displacement (m).
    pub prescribed: f64,
    /// Global control point displacements.
    pub displacement: DVector<f64>,
    /// Sum of penalty forces over active pairs (N/m).
    pub contact_force: f64,
    /// Largest penetration `-g_N` over active pairs (m), zero if none.
    pub max_penetration: f64,
    /// Displacement of the slave contact point towards the master (m).
    pub slave_displacement: f64,
    /// Displacement of the master contact point along the push (m).
    pub master_displacement: f64,
    /// `F_c / d_m` (N/m^2); `None` while `d_m` is too small.
    pub stiffness: Option<f64>,
    /// Max `|sigma_yy|` over slave Gauss points (Pa).
    pub sigma_ymax: f64,
    /// Max `|sigma_yy|` over Gauss points of both bodies (Pa).
    pub sigma_max: f64,
    pub residual: f64,
    pub active_pairs: usize,
    pub pairs: Vec<ContactPair>,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub elements: usize,
    pub dofs: usize,
    pub steps: Vec<StepResult>,
    pub slave: Body,
    pub master: Body,
}

impl RunHistory {
    pub fn last(&self) -> &StepResult {
        self.steps.last().expect("at least one step")
    }
}

/// Load-step driver that exposes its intermediate state.
#[derive(Debug, Clone)]
pub struct Simulation {
    scene: Scene,
    dofs: DofMap,
    rule: GaussRule,
    search: ContactSearch,
    displacement: DVector<f64>,
    pairs: Vec<ContactPair>,
    step: usize,
}

impl Simulation {
    pub fn new(scene: Scene) -> Result<Self, SolveError> {
        scene.validate()?;
        let dofs = build_dof_map(&[scene.slave.reference(), scene.master.reference()]);
        let rule = gauss_rule(scene.quadrature)?;
        let mut search = ContactSearch::new(scene.contact, rule.clone());
        let pairs = search.detect(&scene.slave, &scene.master).map_err(|e| SolveError::from(e).at(0))?;
        let displacement = DVector::zeros(dofs.total_dofs());
        Ok(Self { scene, dofs, rule, search, displacement, pairs, step: 0 })
    }

    /// Force projections to restart from the middle of the knot range.
    pub fn cold_start(mut self) -> Self {
        self.search = self.search.cold();
        self
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn pairs(&self) -> &[ContactPair] {
        &self.pairs
    }

    pub fn displacement(&self) -> &DVector<f64> {
        &self.displacement
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.scene.schedule.steps()
    }

    /// Unconstrained system for the next step.
    pub fn global_system(&self) -> Result<GlobalSystem, SolveError> {
        assemble(
            &self.scene.slave,
            &self.scene.master,
            &self.pairs,
            &self.dofs,
            &self.scene,
            &self.rule,
            &self.displacement,
        )
    }

    /// Constrained system for the next step.
    pub fn constrained_system(&self) -> Result<ConstrainedSystem, SolveError> {
        let sys = self.global_system()?;
        let bc = boundary_conditions(&self.scene, &self.dofs, self.step + 1)?;
        Ok(apply_boundary_conditions(&sys, &bc))
    }

    pub fn advance(&mut self) -> Result<StepResult, SolveError> {
        let step = self.step + 1;
        self.advance_inner(step).map_err(|e| e.at(step))
    }

    fn advance_inner(&mut self, step: usize) -> Result<StepResult, SolveError> {
        let system = self.constrained_system()?;
        let (free, residual) = solve_step(&system.matrix, &system.rhs)?;
        self.displacement = system.expand(&free);
        self.scatter();
        self.pairs = self.search.detect(&self.scene.slave, &self.scene.master)?;
        self.step = step;
        Ok(self.record(residual))
    }

    fn scatter(&mut self) {
        let u = &self.displacement;
        for (id, body) in [(SLAVE, &mut self.scene.slave), (MASTER, &mut self.scene.master)] {
            let n = body.reference().num_points();
            let disp = (0..n).map(|k| Vec2::new(u[self.dofs.dof(id, k, 0)], u[self.dofs.dof(id, k, 1)])).collect();
            body.set_displacement(disp);
        }
    }

    fn record(&self, residual: f64) -> StepResult {
        let penalty = self.scene.contact.penalty;
        let active: Vec<&ContactPair> = self.pairs.iter().filter(|p| p.active).collect();
        let contact_force = active.iter().map(|p| p.force(penalty) * p.weight).sum();
        // contact point: deepest active pair, else the closest one
        let focus = self.pairs.iter().min_by(|a, b| a.gap.total_cmp(&b.gap));
        let (slave_displacement, master_displacement) = focus
            .map(|p| (-p.slave_displacement.dot(&p.normal), -p.master_displacement.dot(&p.normal)))
            .unwrap_or((0.0, 0.0));
        let max_penetration = active.iter().map(|p| -p.gap).fold(0.0, f64::max);
        let sigma_slave = max_abs_sigma_yy(&self.scene.slave, &self.rule).unwrap_or(f64::NAN);
        let sigma_master = max_abs_sigma_yy(&self.scene.master, &self.rule).unwrap_or(f64::NAN);
        StepResult {
            step: self.step,
            prescribed: self.scene.schedule.prescribed(self.step),
            displacement: self.displacement.clone(),
            contact_force,
            max_penetration,
            slave_displacement,
            master_displacement,
            stiffness: effective_contact_stiffness(contact_force, master_displacement).ok(),
            sigma_ymax: sigma_slave,
            sigma_max: sigma_slave.max(sigma_master),
            residual,
            active_pairs: active.len(),
            pairs: self.pairs.clone(),
        }
    }

    pub fn into_history(self, steps: Vec<StepResult>) -> RunHistory {
        RunHistory {
            elements: self.scene.elements(),
            dofs: self.dofs.total_dofs(),
            steps,
            slave: self.scene.slave,
            master: self.scene.master,
        }
    }
}

/// Run every load step of the scene's schedule.
pub fn run_load_steps(scene: Scene) -> Result<RunHistory, SolveError> {
    let mut sim = Simulation::new(scene)?;
    let mut steps = Vec::with_capacity(sim.scene.schedule.steps());
    while !sim.is_done() {
        steps.push(sim.advance()?);
    }
    Ok(sim.into_history(steps))
}
