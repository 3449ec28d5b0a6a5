//! Cell-centered finite-difference solver for transient conduction on the
//! monoblock. Backward Euler in time, matrix-free Jacobi-preconditioned
//! conjugate gradient for the implicit system.
//!
//! Cylinders are resolved as staircases: a cell takes the material found at
//! its center. Coolant cells are not unknowns; solid faces touching them
//! exchange `h A (T - T_f)`.

use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    material_props, top_temperature, BoundaryMode, ConvectiveSpec, MaterialId, MonoblockGeometry, Point3,
    Region,
};
use crate::sampling::{Category, SamplePoint, SampleSet};

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    pub dims: [usize; 3],
    /// Cell edge lengths per axis, meters.
    pub spacing: [f64; 3],
    /// `None` marks a coolant cell.
    pub cells: Vec<Option<MaterialId>>,
}

impl StructuredGrid {
    /// A grid of the given shape filled by `fill` evaluated at cell centers.
    pub fn from_fn(dims: [usize; 3], spacing: [f64; 3], fill: impl Fn(Point3) -> Option<MaterialId>) -> Self {
        let mut cells = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let c = [
                        (i as f64 + 0.5) * spacing[0],
                        (j as f64 + 0.5) * spacing[1],
                        (k as f64 + 0.5) * spacing[2],
                    ];
                    cells.push(fill(c));
                }
            }
        }
        StructuredGrid { dims, spacing, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn center(&self, idx: usize) -> Point3 {
        let [i, j, k] = self.ijk(idx);
        [
            (i as f64 + 0.5) * self.spacing[0],
            (j as f64 + 0.5) * self.spacing[1],
            (k as f64 + 0.5) * self.spacing[2],
        ]
    }

    pub fn extents(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.dims[a] as f64 * self.spacing[a])
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn count(&self, m: Option<MaterialId>) -> usize {
        self.cells.iter().filter(|c| **c == m).count()
    }
}

/// Monoblock grid with cells of edge close to `cell_size`.
pub fn build_grid(g: &MonoblockGeometry, cell_size: f64) -> Result<StructuredGrid> {
    if !(cell_size > 0.0) {
        return Err(Error::InvalidConfig("cell size must be positive".into()));
    }
    let thinnest = (g.r_cucrzr_outer - g.r_coolant).min(g.r_cu_outer - g.r_cucrzr_outer);
    if cell_size > thinnest {
        return Err(Error::ResolutionTooCoarse(format!(
            "cell size {cell_size} exceeds the thinnest shell ({thinnest})"
        )));
    }
    let ext = g.extents();
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let n = (ext[a] / cell_size).round().max(1.0);
        if (n * cell_size - ext[a]).abs() > 0.01 * ext[a] {
            return Err(Error::InvalidConfig(format!(
                "cell size {cell_size} does not divide extent {} within 1%",
                ext[a]
            )));
        }
        dims[a] = n as usize;
    }
    let spacing = std::array::from_fn(|a| ext[a] / dims[a] as f64);
    let grid = StructuredGrid::from_fn(dims, spacing, |p| match g.classify_material(p) {
        Region::Solid(m) => Some(m),
        _ => None,
    });
    for m in MaterialId::ALL {
        if grid.count(Some(m)) == 0 {
            return Err(Error::ResolutionTooCoarse(format!("no {} cells at cell size {cell_size}", m.name())));
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DirichletValue {
    Uniform(f64),
    /// [`top_temperature`] evaluated at the face center.
    TopProfile(BoundaryMode),
}

impl DirichletValue {
    fn at(&self, p: Point3) -> f64 {
        match *self {
            DirichletValue::Uniform(v) => v,
            DirichletValue::TopProfile(mode) => top_temperature(p, mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FaceBc {
    Adiabatic,
    Dirichlet(DirichletValue),
}

/// Conditions on the six box faces (order x-, x+, y-, y+, z-, z+) and the
/// coolant wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub faces: [FaceBc; 6],
    pub convective: ConvectiveSpec,
}

impl BoundarySet {
    /// Heated top, adiabatic elsewhere, Robin cooling at the pipe.
    pub fn monoblock(mode: BoundaryMode, convective: ConvectiveSpec) -> Self {
        let mut faces = [FaceBc::Adiabatic; 6];
        faces[5] = FaceBc::Dirichlet(DirichletValue::TopProfile(mode));
        BoundarySet { faces, convective }
    }

    pub fn adiabatic(convective: ConvectiveSpec) -> Self {
        BoundarySet { faces: [FaceBc::Adiabatic; 6], convective }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub time: f64,
    /// Temperature per grid cell, deg C; coolant cells hold `T_f`.
    pub values: Vec<f64>,
}

impl FieldSnapshot {
    pub fn uniform(grid: &StructuredGrid, time: f64, t_solid: f64, t_fluid: f64) -> Self {
        let values = grid.cells.iter().map(|c| if c.is_some() { t_solid } else { t_fluid }).collect();
        FieldSnapshot { time, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub dt: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { dt: 0.01, cg_tol: 1e-8, cg_max_iter: 5000 }
    }
}

const NONE: u32 = u32::MAX;

/// Assembled implicit operator for a fixed grid, boundary set and time step.
pub struct HeatSolver {
    grid_len: usize,
    /// Grid index of each unknown.
    cell_of: Vec<usize>,
    /// Unknown index of each grid cell (NONE for coolant).
    unknown_of: Vec<u32>,
    /// Heat capacity over time step, W/K.
    capacity: Vec<f64>,
    diag: Vec<f64>,
    nbr: Vec<[u32; 6]>,
    cond: Vec<[f64; 6]>,
    /// Constant boundary contribution to the right-hand side, W.
    source: Vec<f64>,
    t_fluid: f64,
    pub params: SolverParams,
}

impl HeatSolver {
    pub fn new(grid: &StructuredGrid, bc: &BoundarySet, params: SolverParams) -> Result<Self> {
        if !(params.dt > 0.0) {
            return Err(Error::InvalidConfig("time step must be positive".into()));
        }
        let [hx, hy, hz] = grid.spacing;
        let area = [hy * hz, hx * hz, hx * hy];
        let vol = grid.cell_volume();
        let mut unknown_of = vec![NONE; grid.len()];
        let mut cell_of = Vec::new();
        for (idx, c) in grid.cells.iter().enumerate() {
            if c.is_some() {
                unknown_of[idx] = cell_of.len() as u32;
                cell_of.push(idx);
            }
        }
        let n = cell_of.len();
        let mut capacity = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut nbr = vec![[NONE; 6]; n];
        let mut cond = vec![[0.0; 6]; n];
        let mut source = vec![0.0; n];
        let h = bc.convective.h;
        let t_fluid = bc.convective.t_fluid;

        for (u, &idx) in cell_of.iter().enumerate() {
            let props = material_props(grid.cells[idx].expect("solid"));
            capacity[u] = props.heat_capacity() * vol / params.dt;
            let [i, j, k] = grid.ijk(idx);
            let pos = [i, j, k];
            let center = grid.center(idx);
            for dir in 0..6 {
                let axis = dir / 2;
                let upper = dir % 2 == 1;
                let at_edge = if upper { pos[axis] + 1 == grid.dims[axis] } else { pos[axis] == 0 };
                let h_axis = grid.spacing[axis];
                if at_edge {
                    if let FaceBc::Dirichlet(value) = bc.faces[dir] {
                        let mut face = center;
                        face[axis] += if upper { 0.5 * h_axis } else { -0.5 * h_axis };
                        let g = props.k * area[axis] / (0.5 * h_axis);
                        diag[u] += g;
                        source[u] += g * value.at(face);
                    }
                    continue;
                }
                let mut q = pos;
                if upper {
                    q[axis] += 1;
                } else {
                    q[axis] -= 1;
                }
                let nidx = grid.index(q[0], q[1], q[2]);
                match grid.cells[nidx] {
                    Some(m) => {
                        let k2 = material_props(m).k;
                        let kf = 2.0 * props.k * k2 / (props.k + k2);
                        let g = kf * area[axis] / h_axis;
                        diag[u] += g;
                        nbr[u][dir] = unknown_of[nidx];
                        cond[u][dir] = g;
                    }
                    None => {
                        let g = h * area[axis];
                        diag[u] += g;
                        source[u] += g * t_fluid;
                    }
                }
            }
            diag[u] += capacity[u];
        }
        Ok(HeatSolver {
            grid_len: grid.len(),
            cell_of,
            unknown_of,
            capacity,
            diag,
            nbr,
            cond,
            source,
            t_fluid,
            params,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.cell_of.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for u in 0..x.len() {
            let mut acc = self.diag[u] * x[u];
            for d in 0..6 {
                let v = self.nbr[u][d];
                if v != NONE {
                    acc -= self.cond[u][d] * x[v as usize];
                }
            }
            y[u] = acc;
        }
    }

    /// One backward-Euler step.
    pub fn step(&self, field: &FieldSnapshot) -> Result<FieldSnapshot> {
        if field.values.len() != self.grid_len {
            return Err(Error::LengthMismatch(field.values.len(), self.grid_len));
        }
        let n = self.unknowns();
        let old: Vec<f64> = self.cell_of.iter().map(|&c| field.values[c]).collect();
        let b: Vec<f64> = (0..n).map(|u| self.capacity[u] * old[u] + self.source[u]).collect();
        let x = self.conjugate_gradient(&b, old)?;
        let mut values = vec![self.t_fluid; self.grid_len];
        for (u, &c) in self.cell_of.iter().enumerate() {
            values[c] = x[u];
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("oracle field"));
        }
        Ok(FieldSnapshot { time: field.time + self.params.dt, values })
    }

    fn conjugate_gradient(&self, b: &[f64], mut x: Vec<f64>) -> Result<Vec<f64>> {
        let n = b.len();
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut r = vec![0.0; n];
        self.apply(&x, &mut r);
        for u in 0..n {
            r[u] = b[u] - r[u];
        }
        let mut z: Vec<f64> = (0..n).map(|u| r[u] / self.diag[u]).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let tol = self.params.cg_tol * b_norm;
        let mut res = dot(&r, &r).sqrt();
        for _ in 0..self.params.cg_max_iter {
            if res <= tol {
                return Ok(x);
            }
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for u in 0..n {
                x[u] += alpha * p[u];
                r[u] -= alpha * ap[u];
            }
            res = dot(&r, &r).sqrt();
            for u in 0..n {
                z[u] = r[u] / self.diag[u];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for u in 0..n {
                p[u] = z[u] + beta * p[u];
            }
        }
        if res <= tol {
            return Ok(x);
        }
        Err(Error::SolverDiverged { iterations: self.params.cg_max_iter, residual: res / b_norm })
    }

    /// Net heat flow (W) into the solid through Dirichlet faces and through
    /// coolant faces, for the given field. Positive means into the solid.
    pub fn boundary_heat_flows(&self, grid: &StructuredGrid, bc: &BoundarySet, field: &FieldSnapshot) -> (f64, f64) {
        let [hx, hy, hz] = grid.spacing;
        let area = [hy * hz, hx * hz, hx * hy];
        let mut dirichlet = 0.0;
        let mut coolant = 0.0;
        for &idx in &self.cell_of {
            let props = material_props(grid.cells[idx].expect("solid"));
            let t = field.values[idx];
            let pos = grid.ijk(idx);
            let center = grid.center(idx);
            for dir in 0..6 {
                let axis = dir / 2;
                let upper = dir % 2 == 1;
                let at_edge = if upper { pos[axis] + 1 == grid.dims[axis] } else { pos[axis] == 0 };
                if at_edge {
                    if let FaceBc::Dirichlet(value) = bc.faces[dir] {
                        let mut face = center;
                        face[axis] += if upper { 0.5 } else { -0.5 } * grid.spacing[axis];
                        let g = props.k * area[axis] / (0.5 * grid.spacing[axis]);
                        dirichlet += g * (value.at(face) - t);
                    }
                    continue;
                }
                let mut q = pos;
                if upper {
                    q[axis] += 1;
                } else {
                    q[axis] -= 1;
                }
                if self.unknown_of[grid.index(q[0], q[1], q[2])] == NONE {
                    coolant += bc.convective.h * area[axis] * (bc.convective.t_fluid - t);
                }
            }
        }
        (dirichlet, coolant)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Single backward-Euler step; assembles the operator on every call.
pub fn step(grid: &StructuredGrid, field: &FieldSnapshot, dt: f64, bc: &BoundarySet) -> Result<FieldSnapshot> {
    let solver = HeatSolver::new(grid, bc, SolverParams { dt, ..SolverParams::default() })?;
    solver.step(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub cell_size: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub t_init: f64,
    pub solver: SolverParams,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cell_size: 5e-4, t_end: 10.0, snapshot_stride: 10, t_init: 30.0, solver: SolverParams::default() }
    }
}

/// Transient solve from a uniform initial temperature; keeps the initial
/// field, every `stride`-th step and the final step.
pub fn solve(
    grid: &StructuredGrid,
    bc: &BoundarySet,
    t_end: f64,
    params: SolverParams,
    t_init: f64,
    stride: usize,
) -> Result<Vec<FieldSnapshot>> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidConfig("t_end must be positive".into()));
    }
    let solver = HeatSolver::new(grid, bc, params)?;
    let steps = ((t_end / params.dt).round() as usize).max(1);
    let stride = stride.max(1);
    let mut current = FieldSnapshot::uniform(grid, 0.0, t_init, bc.convective.t_fluid);
    let mut series = vec![current.clone()];
    for s in 1..=steps {
        let mut next = solver.step(&current)?;
        next.time = s as f64 * params.dt;
        if s % stride == 0 || s == steps {
            series.push(next.clone());
        }
        current = next;
    }
    Ok(series)
}

/// Per-material supervision counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisionBudget {
    pub w: usize,
    pub cu: usize,
    pub cucrzr: usize,
}

impl SupervisionBudget {
    pub fn default_for(mode: BoundaryMode) -> Self {
        match mode {
            BoundaryMode::Constant => SupervisionBudget { cucrzr: 5, cu: 10, w: 15 },
            BoundaryMode::Gaussian => SupervisionBudget { w: 30, cu: 50, cucrzr: 80 },
        }
    }

    pub fn get(&self, m: MaterialId) -> usize {
        match m {
            MaterialId::W => self.w,
            MaterialId::Cu => self.cu,
            MaterialId::CuCrZr => self.cucrzr,
        }
    }

    pub fn total(&self) -> usize {
        self.w + self.cu + self.cucrzr
    }
}

/// Snapshot indices eligible for sampling: all but the initial field when
/// later ones exist.
fn sampled_frames(series: &[FieldSnapshot]) -> std::ops::Range<usize> {
    if series.len() > 1 {
        1..series.len()
    } else {
        0..series.len()
    }
}

/// Picks distinct cells per material, each paired with a random snapshot,
/// and records the oracle temperature there.
pub fn export_supervision(
    grid: &StructuredGrid,
    series: &[FieldSnapshot],
    budget: &SupervisionBudget,
    rng: &mut ChaCha8Rng,
) -> Result<SampleSet> {
    if series.is_empty() {
        return Err(Error::InvalidConfig("empty oracle series".into()));
    }
    let frames = sampled_frames(series);
    let mut points = Vec::with_capacity(budget.total());
    for m in [MaterialId::CuCrZr, MaterialId::Cu, MaterialId::W] {
        let cells: Vec<usize> = (0..grid.len()).filter(|&i| grid.cells[i] == Some(m)).collect();
        let want = budget.get(m);
        if want > cells.len() {
            return Err(Error::BudgetExceedsCells { material: m.name(), requested: want, available: cells.len() });
        }
        for pick in sample_indices(rng, cells.len(), want).into_iter() {
            let cell = cells[pick];
            let snap = &series[rng.gen_range(frames.clone())];
            points.push(SamplePoint {
                t_data: Some(snap.values[cell]),
                ..SamplePoint::new(grid.center(cell), snap.time, Category::Supervision)
            });
        }
    }
    Ok(SampleSet { points })
}

/// Reference temperatures at sampled (solid cell, snapshot) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub points: Vec<(Point3, f64)>,
    pub truth: Vec<f64>,
}

/// Uniform (solid cell, snapshot) pairs, excluding the initial snapshot.
pub fn evaluation_set(
    grid: &StructuredGrid,
    series: &[FieldSnapshot],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalSet> {
    if series.is_empty() {
        return Err(Error::InvalidConfig("empty oracle series".into()));
    }
    let solid: Vec<usize> = (0..grid.len()).filter(|&i| grid.cells[i].is_some()).collect();
    let frames = sampled_frames(series);
    let mut points = Vec::with_capacity(count);
    let mut truth = Vec::with_capacity(count);
    for _ in 0..count {
        let cell = solid[rng.gen_range(0..solid.len())];
        let snap = &series[rng.gen_range(frames.clone())];
        points.push((grid.center(cell), snap.time));
        truth.push(snap.values[cell]);
    }
    Ok(EvalSet { points, truth })
}

/// Wall-clock seconds per stored frame of a full transient solve.
pub fn frame_time_baseline(
    grid: &StructuredGrid,
    bc: &BoundarySet,
    cfg: &OracleConfig,
) -> Result<(f64, Vec<FieldSnapshot>)> {
    let start = Instant::now();
    let series = solve(grid, bc, cfg.t_end, cfg.solver, cfg.t_init, cfg.snapshot_stride)?;
    let elapsed = start.elapsed().as_secs_f64();
    let frames = (series.len() - 1).max(1);
    Ok((elapsed / frames as f64, series))
}
