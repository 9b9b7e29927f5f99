#![allow(dead_code)]

use darcy_uq::mesh::{EdgeTag, Mesh};
use darcy_uq::mfem::ProblemData;
use nalgebra::{DMatrix, DVector};

/// Degree-5 seven-point rule on a triangle: barycentric points and weights
/// (summing to one).
pub const QUAD7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

pub fn integrate(mesh: &Mesh, t: usize, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let p = mesh.element_vertices(t);
    let area = mesh.area(t);
    QUAD7
        .iter()
        .map(|(b, w)| {
            let x = [
                b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
                b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
            ];
            w * f(x)
        })
        .sum::<f64>()
        * area
}

/// Local outward RT0 basis function `i` on element `t`, unit flux through
/// the edge opposite vertex `i`.
pub fn rt0(mesh: &Mesh, t: usize, i: usize, x: [f64; 2]) -> [f64; 2] {
    let p = mesh.element_vertices(t);
    let c = 1.0 / (2.0 * mesh.area(t));
    [c * (x[0] - p[i][0]), c * (x[1] - p[i][1])]
}

pub struct OracleSolution {
    pub edge_flux: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multipliers: Vec<f64>,
}

/// Dense solve of the fully hybridized saddle-point system with
/// element-local fluxes, P0 pressures and edge multipliers as unknowns,
/// and the mass matrix from the seven-point rule.
pub fn dense_hybrid_oracle(mesh: &Mesh, a: &[f64], data: &ProblemData) -> OracleSolution {
    let nt = mesh.num_elements();
    let ne = mesh.num_edges();
    let mut lam_index = vec![usize::MAX; ne];
    let mut nl = 0;
    for e in 0..ne {
        if !mesh.edge_tag(e).is_dirichlet() {
            lam_index[e] = nl;
            nl += 1;
        }
    }
    let q0 = 0;
    let p0 = 3 * nt;
    let l0 = 4 * nt;
    let dim = 4 * nt + nl;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for t in 0..nt {
        let edges = mesh.element_edges(t);
        for i in 0..3 {
            let row = q0 + 3 * t + i;
            for j in 0..3 {
                let mij = integrate(mesh, t, |x| {
                    let (u, v) = (rt0(mesh, t, i, x), rt0(mesh, t, j, x));
                    u[0] * v[0] + u[1] * v[1]
                });
                k[(row, q0 + 3 * t + j)] = mij / a[t];
            }
            k[(row, p0 + t)] = -1.0;
            let e = edges[i];
            match data.boundary_pressure(mesh.edge_tag(e)) {
                Some(g) => rhs[row] = -g,
                None => k[(row, l0 + lam_index[e])] = 1.0,
            }
            k[(p0 + t, q0 + 3 * t + i)] = 1.0;
            if lam_index[e] != usize::MAX {
                k[(l0 + lam_index[e], q0 + 3 * t + i)] = 1.0;
            }
        }
        rhs[p0 + t] = data.source * mesh.area(t);
    }
    let x = k.lu().solve(&rhs).expect("hybrid saddle system is nonsingular");
    let mut edge_flux = vec![0.0; ne];
    let mut multipliers = vec![0.0; ne];
    for e in 0..ne {
        let owner = mesh.edge_elements(e)[0].unwrap();
        let i = mesh.element_edges(owner).iter().position(|&f| f == e).unwrap();
        edge_flux[e] = mesh.element_signs(owner)[i] * x[q0 + 3 * owner + i];
        multipliers[e] = match data.boundary_pressure(mesh.edge_tag(e)) {
            Some(g) => g,
            None => x[l0 + lam_index[e]],
        };
    }
    OracleSolution { edge_flux, pressure: (0..nt).map(|t| x[p0 + t]).collect(), multipliers }
}

/// Coefficient per element from a function of the centroid.
pub fn element_field(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..mesh.num_elements()).map(|t| f(mesh.centroid(t))).collect()
}

/// Net flux through the inflow and outflow boundaries, both counted in the
/// `+x` direction.
pub fn boundary_flows(mesh: &Mesh, edge_flux: &[f64]) -> (f64, f64) {
    let mut inflow = 0.0;
    let mut outflow = 0.0;
    for e in 0..mesh.num_edges() {
        match mesh.edge_tag(e) {
            EdgeTag::DirichletIn => inflow -= edge_flux[e],
            EdgeTag::DirichletOut => outflow += edge_flux[e],
            _ => {}
        }
    }
    (inflow, outflow)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
