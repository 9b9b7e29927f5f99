//! Hybridized lowest-order Raviart–Thomas / P0 mixed finite elements for
//! `q = -a grad u`, `div q = f` with Dirichlet inflow/outflow pressures and
//! no-flow top and bottom boundaries.
//!
//! Each element uses the flux-normalized local basis
//! `psi_i(x) = (x - P_i) / (2|T|)`, where `P_i` is the vertex opposite local
//! edge `i`; `psi_i` has unit outward flux through edge `i` and none through
//! the other two. Velocity and pressure are eliminated element by element and
//! only the interior-edge multipliers are solved for globally.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{default_max_iterations, solve_spd, CsrMatrix};
use crate::mesh::{EdgeTag, Mesh};
use crate::randfield::FieldRealization;

/// Relative residual for the multiplier solve.
pub const SOLVER_TOL: f64 = 1e-12;

/// Boundary pressures and a constant source term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemData {
    pub inflow_pressure: f64,
    pub outflow_pressure: f64,
    pub source: f64,
}

impl ProblemData {
    /// `u = 1` at `x = 0`, `u = 0` at `x = 1`, no source.
    pub fn flow_cell() -> Self {
        ProblemData { inflow_pressure: 1.0, outflow_pressure: 0.0, source: 0.0 }
    }

    pub fn boundary_pressure(&self, tag: EdgeTag) -> Option<f64> {
        match tag {
            EdgeTag::DirichletIn => Some(self.inflow_pressure),
            EdgeTag::DirichletOut => Some(self.outflow_pressure),
            _ => None,
        }
    }
}

impl Default for ProblemData {
    fn default() -> Self {
        Self::flow_cell()
    }
}

/// Element matrices in the global edge orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalElementSystem {
    /// `∫_T a^{-1} phi_i . phi_j`.
    pub mass: [[f64; 3]; 3],
    /// `∫_T div phi_i`, equal to the element's edge signs.
    pub div: [f64; 3],
    pub area: f64,
    pub edge_lengths: [f64; 3],
}

/// Unit-coefficient mass matrix in the local outward orientation, integrated
/// with the edge-midpoint rule (exact for quadratics).
fn unit_mass(p: &[[f64; 2]; 3], area: f64) -> [[f64; 3]; 3] {
    let mids = [
        [(p[1][0] + p[2][0]) / 2.0, (p[1][1] + p[2][1]) / 2.0],
        [(p[0][0] + p[2][0]) / 2.0, (p[0][1] + p[2][1]) / 2.0],
        [(p[0][0] + p[1][0]) / 2.0, (p[0][1] + p[1][1]) / 2.0],
    ];
    let scale = area / 3.0 / (4.0 * area * area);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = scale
                * mids
                    .iter()
                    .map(|x| (x[0] - p[i][0]) * (x[0] - p[j][0]) + (x[1] - p[i][1]) * (x[1] - p[j][1]))
                    .sum::<f64>();
        }
    }
    m
}

pub fn local_system(mesh: &Mesh, element: usize, a: f64) -> Result<LocalElementSystem> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("coefficient must be positive and finite, got {a}")));
    }
    if element >= mesh.num_elements() {
        return Err(Error::invalid(format!("element {element} out of range")));
    }
    let p = mesh.element_vertices(element);
    let area = mesh.area(element);
    let s = mesh.element_signs(element);
    let m1 = unit_mass(&p, area);
    let mut mass = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            mass[i][j] = s[i] * s[j] * m1[i][j] / a;
        }
    }
    let edges = mesh.element_edges(element);
    Ok(LocalElementSystem { mass, div: s, area, edge_lengths: edges.map(|e| mesh.edge_length(e)) })
}

/// Condensed unit-coefficient element data. Inactive (no-flow) edges have
/// zero rows and columns.
#[derive(Clone, Debug)]
struct Condensed {
    active: [bool; 3],
    mass: [[f64; 3]; 3],
    inv: [[f64; 3]; 3],
    w: [f64; 3],
    s: f64,
    schur: [[f64; 3]; 3],
}

impl Condensed {
    fn new(mass: [[f64; 3]; 3], active: [bool; 3]) -> Self {
        let idx: Vec<usize> = (0..3).filter(|&i| active[i]).collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |r, c| mass[idx[r]][idx[c]]);
        let sub_inv = sub.try_inverse().expect("RT0 mass matrix is SPD");
        let mut inv = [[0.0; 3]; 3];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                inv[i][j] = sub_inv[(r, c)];
            }
        }
        let w: [f64; 3] = std::array::from_fn(|i| inv[i].iter().sum());
        let s: f64 = w.iter().sum();
        let schur = std::array::from_fn(|i| std::array::from_fn(|j| inv[i][j] - w[i] * w[j] / s));
        Condensed { active, mass, inv, w, s, schur }
    }
}

/// One mixed solve.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSolution {
    /// Normal flux through each edge along its global normal.
    pub edge_flux: Vec<f64>,
    /// Piecewise-constant pressure per element.
    pub pressure: Vec<f64>,
    /// Pressure trace per edge: solved on interior edges, boundary data on
    /// Dirichlet edges, locally recovered on no-flow edges.
    pub multipliers: Vec<f64>,
    /// Recovered linear pressure per element as its values at the midpoints
    /// of the element's three edges (local edge order).
    pub recovered_pressure: Vec<[f64; 3]>,
    pub iterations: usize,
    pub residual: f64,
}

/// Per-mesh precomputation for repeated solves.
#[derive(Clone, Debug)]
pub struct MixedFem {
    mesh: Arc<Mesh>,
    elements: Vec<Condensed>,
    /// Compact unknown index of each interior edge.
    unknown: Vec<Option<usize>>,
    pattern: CsrMatrix,
    /// Matrix slot for each `(element, i, j)` with both edges interior.
    slots: Vec<[[usize; 3]; 3]>,
}

impl MixedFem {
    pub fn new(mesh: &Mesh) -> Self {
        Self::from_arc(Arc::new(mesh.clone()))
    }

    pub fn from_arc(mesh: Arc<Mesh>) -> Self {
        let mut unknown = vec![None; mesh.num_edges()];
        let mut count = 0;
        for (e, slot) in unknown.iter_mut().enumerate() {
            if mesh.edge_tag(e) == EdgeTag::Interior {
                *slot = Some(count);
                count += 1;
            }
        }
        let mut elements = Vec::with_capacity(mesh.num_elements());
        let mut entries = Vec::new();
        for t in 0..mesh.num_elements() {
            let edges = mesh.element_edges(t);
            let active = edges.map(|e| mesh.edge_tag(e) != EdgeTag::Neumann);
            elements.push(Condensed::new(unit_mass(&mesh.element_vertices(t), mesh.area(t)), active));
            for &ei in &edges {
                for &ej in &edges {
                    if let (Some(r), Some(c)) = (unknown[ei], unknown[ej]) {
                        entries.push((r, c));
                    }
                }
            }
        }
        let (pattern, flat) = CsrMatrix::with_pattern(count, &entries);
        let mut slots = vec![[[usize::MAX; 3]; 3]; mesh.num_elements()];
        let mut k = 0;
        for (t, slot) in slots.iter_mut().enumerate() {
            let edges = mesh.element_edges(t);
            for i in 0..3 {
                for j in 0..3 {
                    if unknown[edges[i]].is_some() && unknown[edges[j]].is_some() {
                        slot[i][j] = flat[k];
                        k += 1;
                    }
                }
            }
        }
        MixedFem { mesh, elements, unknown, pattern, slots }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn num_unknowns(&self) -> usize {
        self.pattern.dim()
    }

    /// Assembles the condensed multiplier system `K lambda = rhs`.
    pub fn assemble(&self, field: &FieldRealization, data: &ProblemData) -> Result<(CsrMatrix, Vec<f64>)> {
        let mesh = &*self.mesh;
        if field.n != mesh.n() || field.element_values.len() != mesh.num_elements() {
            return Err(Error::FieldMismatch { field: field.n, mesh: mesh.n() });
        }
        let mut k = self.pattern.clone();
        let mut rhs = vec![0.0; k.dim()];
        let values = k.values_mut();
        for (t, el) in self.elements.iter().enumerate() {
            let a = field.element_values[t];
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::invalid(format!("coefficient on element {t} must be positive and finite, got {a}")));
            }
            let edges = mesh.element_edges(t);
            let f = data.source * mesh.area(t);
            for i in 0..3 {
                let Some(r) = self.unknown[edges[i]] else { continue };
                rhs[r] += el.w[i] * f / el.s;
                for j in 0..3 {
                    if !el.active[j] {
                        continue;
                    }
                    if self.unknown[edges[j]].is_some() {
                        values[self.slots[t][i][j]] += a * el.schur[i][j];
                    } else if let Some(u) = data.boundary_pressure(mesh.edge_tag(edges[j])) {
                        rhs[r] -= a * el.schur[i][j] * u;
                    }
                }
            }
        }
        Ok((k, rhs))
    }

    pub fn solve(&self, field: &FieldRealization, data: &ProblemData) -> Result<MixedSolution> {
        let mesh = &*self.mesh;
        let (k, rhs) = self.assemble(field, data)?;
        let (lambda_i, stats) = solve_spd(&k, &rhs, SOLVER_TOL, default_max_iterations(k.dim()))?;

        let mut multipliers = vec![0.0; mesh.num_edges()];
        for e in 0..mesh.num_edges() {
            multipliers[e] = match self.unknown[e] {
                Some(r) => lambda_i[r],
                None => data.boundary_pressure(mesh.edge_tag(e)).unwrap_or(0.0),
            };
        }

        let mut edge_flux = vec![0.0; mesh.num_edges()];
        let mut pressure = vec![0.0; mesh.num_elements()];
        for (t, el) in self.elements.iter().enumerate() {
            let a = field.element_values[t];
            let edges = mesh.element_edges(t);
            let signs = mesh.element_signs(t);
            let lam = edges.map(|e| multipliers[e]);
            let f = data.source * mesh.area(t);
            let wl: f64 = (0..3).filter(|&j| el.active[j]).map(|j| el.w[j] * lam[j]).sum();
            let p = f / (a * el.s) + wl / el.s;
            pressure[t] = p;
            let mut q = [0.0; 3];
            for i in 0..3 {
                if el.active[i] {
                    q[i] = a * (0..3).filter(|&j| el.active[j]).map(|j| el.inv[i][j] * (p - lam[j])).sum::<f64>();
                }
            }
            for i in 0..3 {
                let e = edges[i];
                // Interior fluxes are averaged over both sides; the two sides
                // agree up to the solver residual.
                let weight = if mesh.edge_tag(e) == EdgeTag::Interior { 0.5 } else { 1.0 };
                edge_flux[e] += weight * signs[i] * q[i];
                if !el.active[i] {
                    multipliers[e] = p - (0..3).map(|j| el.mass[i][j] * q[j]).sum::<f64>() / a;
                }
            }
        }
        let recovered_pressure = recover_pressure(mesh, &multipliers);
        Ok(MixedSolution {
            edge_flux,
            pressure,
            multipliers,
            recovered_pressure,
            iterations: stats.iterations,
            residual: stats.residual,
        })
    }
}

/// One-shot solve.
pub fn solve_hybridized(mesh: &Mesh, field: &FieldRealization, data: &ProblemData) -> Result<MixedSolution> {
    MixedFem::new(mesh).solve(field, data)
}

/// Per element, the linear function whose edge averages (= midpoint values)
/// equal the given edge values.
pub fn recover_pressure(mesh: &Mesh, edge_values: &[f64]) -> Vec<[f64; 3]> {
    (0..mesh.num_elements()).map(|t| mesh.element_edges(t).map(|e| edge_values[e])).collect()
}

/// Evaluates a recovered pressure (midpoint values in local edge order) at `x`.
///
/// The Crouzeix–Raviart basis function for the edge opposite vertex `i` is
/// `1 - 2 b_i` with `b_i` the barycentric coordinate of that vertex.
pub fn eval_recovered(mesh: &Mesh, element: usize, values: &[f64; 3], x: [f64; 2]) -> f64 {
    let b = mesh.barycentric(element, x);
    (0..3).map(|i| values[i] * (1.0 - 2.0 * b[i])).sum()
}

/// Velocity `q_h(x)` on `element`, from the edge fluxes.
pub fn eval_velocity(mesh: &Mesh, element: usize, edge_flux: &[f64], x: [f64; 2]) -> [f64; 2] {
    let p = mesh.element_vertices(element);
    let area = mesh.area(element);
    let edges = mesh.element_edges(element);
    let signs = mesh.element_signs(element);
    let mut v = [0.0; 2];
    for i in 0..3 {
        let c = signs[i] * edge_flux[edges[i]] / (2.0 * area);
        v[0] += c * (x[0] - p[i][0]);
        v[1] += c * (x[1] - p[i][1]);
    }
    v
}

/// Net flux imbalance `|∫_T div q_h - ∫_T f|` per element.
pub fn divergence_residual(mesh: &Mesh, solution: &MixedSolution, data: &ProblemData) -> Vec<f64> {
    (0..mesh.num_elements())
        .map(|t| {
            let edges = mesh.element_edges(t);
            let signs = mesh.element_signs(t);
            let area = mesh.area(t);
            let div: f64 = (0..3).map(|i| signs[i] * solution.edge_flux[edges[i]]).sum();
            (div - data.source * area).abs()
        })
        .collect()
}

impl MixedSolution {
    /// CSV dump with an `# edges` section (`edge_id,flux`) and an `# elements`
    /// section (`element_id,pressure,recovered_p0,recovered_p1,recovered_p2`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# edges")?;
        writeln!(w, "edge_id,flux")?;
        for (e, f) in self.edge_flux.iter().enumerate() {
            writeln!(w, "{e},{f}")?;
        }
        writeln!(w, "# elements")?;
        writeln!(w, "element_id,pressure,recovered_p0,recovered_p1,recovered_p2")?;
        for (t, (p, r)) in self.pressure.iter().zip(&self.recovered_pressure).enumerate() {
            writeln!(w, "{t},{p},{},{},{}", r[0], r[1], r[2])?;
        }
        Ok(())
    }
}
