use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::covariance::KernelTable;
use super::{CovarianceKind, CovarianceSpec, FieldRealization, Purpose, SeedId};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Leading eigenpairs of the covariance operator on the unit square, from a
/// Nyström discretisation with the midpoint rule on an `m x m` grid.
#[derive(Clone, Debug)]
pub struct KleBasis {
    spec: CovarianceSpec,
    eigenvalues: Vec<f64>,
    spectrum_sum: f64,
    nodes: Vec<[f64; 2]>,
    node_weights: Vec<f64>,
    /// `node_values[k][j]` is mode `k` at node `j`, normalized in `L^2(D)`.
    node_values: Vec<Vec<f64>>,
    kernel: Kernel,
}

#[derive(Clone, Debug)]
enum Kernel {
    Direct(CovarianceSpec),
    Table(KernelTable),
}

impl Kernel {
    fn new(spec: &CovarianceSpec) -> Self {
        match spec.kind {
            CovarianceKind::Exponential => Kernel::Direct(*spec),
            // sqrt(2) is the diameter of D; the margin keeps lookups in range.
            CovarianceKind::Matern { .. } => Kernel::Table(KernelTable::new(spec, 1.5, 30_000)),
        }
    }

    fn eval(&self, r: f64) -> f64 {
        match self {
            Kernel::Direct(spec) => spec.covariance(r),
            Kernel::Table(t) => t.eval(r),
        }
    }
}

/// `max(32, ceil(4 / scaled length))` nodes per side.
pub fn default_grid(spec: &CovarianceSpec) -> usize {
    32usize.max((4.0 / spec.scaled_length()).ceil() as usize)
}

/// Builds the first `modes` KLE eigenpairs on an `grid x grid` Nyström grid.
pub fn kle_build(spec: &CovarianceSpec, modes: usize, grid: usize) -> Result<KleBasis> {
    spec.validate()?;
    if modes == 0 {
        return Err(Error::invalid("KLE needs at least one mode"));
    }
    if grid == 0 || modes > grid * grid {
        return Err(Error::invalid(format!("{modes} modes need a grid with at least that many nodes, got {grid}^2")));
    }
    let kernel = Kernel::new(spec);
    let m = grid;
    let step = 1.0 / m as f64;
    let nodes: Vec<[f64; 2]> = (0..m * m)
        .map(|k| [((k % m) as f64 + 0.5) * step, ((k / m) as f64 + 0.5) * step])
        .collect();
    let weight = step * step;
    let count = nodes.len();

    // W^{1/2} C W^{1/2} with equal weights is just weight * C.
    let mut a = DMatrix::<f64>::zeros(count, count);
    for i in 0..count {
        for j in 0..=i {
            let d = (nodes[i][0] - nodes[j][0]).hypot(nodes[i][1] - nodes[j][1]);
            let v = weight * kernel.eval(d);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(a);
    let spectrum_sum = eig.eigenvalues.iter().sum::<f64>();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

    let positive = order.iter().take_while(|&&k| eig.eigenvalues[k] > 0.0).count();
    if positive < modes {
        return Err(Error::TooFewModes { requested: modes, found: positive });
    }
    let inv_sqrt_w = 1.0 / weight.sqrt();
    let mut eigenvalues = Vec::with_capacity(modes);
    let mut node_values = Vec::with_capacity(modes);
    for &k in order.iter().take(modes) {
        eigenvalues.push(eig.eigenvalues[k]);
        let col = eig.eigenvectors.column(k);
        // Fix the sign so results do not depend on the eigensolver's choice.
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        node_values.push(col.iter().map(|v| sign * v * inv_sqrt_w).collect());
    }
    Ok(KleBasis {
        spec: *spec,
        eigenvalues,
        spectrum_sum,
        nodes,
        node_weights: vec![weight; count],
        node_values,
        kernel,
    })
}

impl KleBasis {
    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn num_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Sum of all discrete eigenvalues; equals `sigma2 |D|` up to round-off.
    pub fn spectrum_sum(&self) -> f64 {
        self.spectrum_sum
    }

    /// Fraction of the total variance `sigma2 |D|` captured by the retained modes.
    pub fn captured_variance_ratio(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.spec.sigma2
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn node_values(&self) -> &[Vec<f64>] {
        &self.node_values
    }

    /// All retained eigenfunctions at `x` by Nyström interpolation,
    /// `phi_k(x) = (1/lambda_k) sum_j w_j rho(|x - x_j|) phi_k(x_j)`.
    pub fn eval_modes(&self, x: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_modes()];
        for (j, node) in self.nodes.iter().enumerate() {
            let c = self.node_weights[j] * self.kernel.eval((x[0] - node[0]).hypot(x[1] - node[1]));
            for (k, o) in out.iter_mut().enumerate() {
                *o += c * self.node_values[k][j];
            }
        }
        for (o, lam) in out.iter_mut().zip(&self.eigenvalues) {
            *o /= lam;
        }
        out
    }

    /// Pointwise variance of the truncated expansion, `sum_k lambda_k phi_k(x)^2`.
    pub fn truncated_variance(&self, x: [f64; 2]) -> f64 {
        self.eval_modes(x).iter().zip(&self.eigenvalues).map(|(p, l)| l * p * p).sum()
    }
}

/// KLE modes tabulated at the vertices of one mesh.
#[derive(Clone, Debug)]
pub struct KleSampler {
    basis: Arc<KleBasis>,
    n: usize,
    /// `sqrt(lambda_k) phi_k(vertex)`, vertex-major.
    scaled_modes: Vec<f64>,
}

impl KleSampler {
    pub fn new(basis: Arc<KleBasis>, mesh: &Mesh) -> Self {
        let k = basis.num_modes();
        let mut scaled_modes = Vec::with_capacity(mesh.num_vertices() * k);
        for &p in mesh.vertices() {
            let phi = basis.eval_modes(p);
            scaled_modes.extend(phi.iter().zip(basis.eigenvalues()).map(|(f, l)| l.sqrt() * f));
        }
        KleSampler { basis, n: mesh.n(), scaled_modes }
    }

    pub fn basis(&self) -> &KleBasis {
        &self.basis
    }

    /// `g = sum_k sqrt(lambda_k) phi_k xi_k` with i.i.d. standard normal `xi`.
    pub fn sample(&self, mesh: &Mesh, seed: SeedId) -> Result<FieldRealization> {
        let mut rng = seed.rng(Purpose::Field);
        let xi: Vec<f64> = (0..self.basis.num_modes()).map(|_| StandardNormal.sample(&mut rng)).collect();
        self.sample_with_coefficients(mesh, &xi, seed)
    }

    pub fn sample_with_coefficients(&self, mesh: &Mesh, xi: &[f64], seed: SeedId) -> Result<FieldRealization> {
        if mesh.n() != self.n {
            return Err(Error::FieldMismatch { field: self.n, mesh: mesh.n() });
        }
        let k = self.basis.num_modes();
        if xi.len() != k {
            return Err(Error::invalid(format!("expected {k} KLE coefficients, got {}", xi.len())));
        }
        let logs = self
            .scaled_modes
            .chunks_exact(k)
            .map(|row| row.iter().zip(xi).map(|(a, b)| a * b).sum())
            .collect();
        Ok(FieldRealization::from_vertex_log_values(mesh, logs, seed))
    }
}
