//! Lognormal permeability realizations `a = exp(g)` on mesh vertices.
//!
//! Gaussian samples come either from circulant embedding on the vertex lattice
//! (exact for stationary kernels) or from a truncated Karhunen–Loève
//! expansion. Either way the per-element coefficient is the geometric mean of
//! the three vertex values, so `a` is piecewise constant.

mod circulant;
mod covariance;
mod kle;
mod seed;

use std::io::Write;
use std::sync::Arc;

pub use circulant::{sample_circulant, CirculantSampler};
pub use covariance::{bessel_k_scaled, matern_correlation, CovarianceKind, CovarianceSpec};
pub use kle::{default_grid, kle_build, KleBasis, KleSampler};
pub use seed::{Purpose, SeedId};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// One sample of the permeability.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRealization {
    /// Subdivisions per side of the mesh it lives on.
    pub n: usize,
    pub vertex_log_values: Vec<f64>,
    pub element_values: Vec<f64>,
    pub seed: SeedId,
    /// Set when a circulant embedding had to clip negative eigenvalues.
    pub approximate: bool,
}

impl FieldRealization {
    pub fn from_vertex_log_values(mesh: &Mesh, vertex_log_values: Vec<f64>, seed: SeedId) -> Self {
        assert_eq!(vertex_log_values.len(), mesh.num_vertices());
        let element_values = element_coefficients(mesh, &vertex_log_values);
        FieldRealization { n: mesh.n(), vertex_log_values, element_values, seed, approximate: false }
    }

    /// `a ≡ value` on every element.
    pub fn constant(mesh: &Mesh, value: f64, seed: SeedId) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::invalid(format!("constant coefficient must be > 0, got {value}")));
        }
        Ok(Self::from_vertex_log_values(mesh, vec![value.ln(); mesh.num_vertices()], seed))
    }

    /// Arbitrary positive per-element coefficient, for manufactured tests.
    /// Vertex log-values are left at zero because they do not determine `a`.
    pub fn from_element_values(mesh: &Mesh, element_values: Vec<f64>, seed: SeedId) -> Result<Self> {
        if element_values.len() != mesh.num_elements() {
            return Err(Error::invalid("one coefficient per element required"));
        }
        if let Some(bad) = element_values.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!("coefficient values must be positive and finite, got {bad}")));
        }
        Ok(FieldRealization {
            n: mesh.n(),
            vertex_log_values: vec![0.0; mesh.num_vertices()],
            element_values,
            seed,
            approximate: false,
        })
    }

    pub fn min_value(&self) -> f64 {
        self.element_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.element_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV dump `vertex_id,x,y,log_a`.
    pub fn write_csv<W: Write>(&self, mesh: &Mesh, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vertex_id,x,y,log_a")?;
        for (v, g) in self.vertex_log_values.iter().enumerate() {
            let p = mesh.vertex(v);
            writeln!(w, "{v},{},{},{g}", p[0], p[1])?;
        }
        Ok(())
    }
}

/// `exp` of the mean vertex log-value on each element.
pub fn element_coefficients(mesh: &Mesh, vertex_log_values: &[f64]) -> Vec<f64> {
    mesh.elements()
        .iter()
        .map(|t| ((vertex_log_values[t[0]] + vertex_log_values[t[1]] + vertex_log_values[t[2]]) / 3.0).exp())
        .collect()
}

/// Copies the shared-vertex log-values of `fine` onto `coarse`.
pub fn restrict_to_coarse(fine: &FieldRealization, fine_mesh: &Mesh, coarse_mesh: &Mesh) -> Result<FieldRealization> {
    if fine.n != fine_mesh.n() {
        return Err(Error::FieldMismatch { field: fine.n, mesh: fine_mesh.n() });
    }
    if !coarse_mesh.nests_in(fine_mesh) {
        return Err(Error::NotNested { coarse: coarse_mesh.n(), fine: fine_mesh.n() });
    }
    let ratio = fine_mesh.n() / coarse_mesh.n();
    let nc = coarse_mesh.n();
    let mut values = Vec::with_capacity(coarse_mesh.num_vertices());
    for j in 0..=nc {
        for i in 0..=nc {
            values.push(fine.vertex_log_values[fine_mesh.vertex_index(i * ratio, j * ratio)]);
        }
    }
    let mut coarse = FieldRealization::from_vertex_log_values(coarse_mesh, values, fine.seed);
    coarse.approximate = fine.approximate;
    Ok(coarse)
}

/// Which generator produces `log a`.
#[derive(Clone, Debug)]
pub enum FieldModel {
    Circulant(CovarianceSpec),
    Kle(Arc<KleBasis>),
    /// Deterministic `a ≡ value`.
    Constant(f64),
}

impl FieldModel {
    /// Precomputes the per-mesh sampling state.
    pub fn prepare(&self, mesh: &Mesh) -> Result<PreparedSampler> {
        Ok(match self {
            FieldModel::Circulant(spec) => PreparedSampler::Circulant(CirculantSampler::new(spec, mesh)?),
            FieldModel::Kle(basis) => PreparedSampler::Kle(KleSampler::new(basis.clone(), mesh)),
            FieldModel::Constant(value) => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(Error::invalid(format!("constant coefficient must be > 0, got {value}")));
                }
                PreparedSampler::Constant { n: mesh.n(), value: *value }
            }
        })
    }

    pub fn describe(&self) -> String {
        match self {
            FieldModel::Circulant(spec) => format!("circulant:{}", describe_spec(spec)),
            FieldModel::Kle(basis) => format!("kle{}:{}", basis.num_modes(), describe_spec(basis.spec())),
            FieldModel::Constant(v) => format!("constant:{v}"),
        }
    }
}

fn describe_spec(spec: &CovarianceSpec) -> String {
    match spec.kind {
        CovarianceKind::Exponential => format!("exponential(sigma2={},lambda={})", spec.sigma2, spec.lambda),
        CovarianceKind::Matern { nu } => format!("matern(sigma2={},lambda={},nu={nu})", spec.sigma2, spec.lambda),
    }
}

/// Sampling state bound to one mesh.
#[derive(Clone, Debug)]
pub enum PreparedSampler {
    Circulant(CirculantSampler),
    Kle(KleSampler),
    Constant { n: usize, value: f64 },
}

impl PreparedSampler {
    pub fn sample(&self, mesh: &Mesh, seed: SeedId) -> Result<FieldRealization> {
        match self {
            PreparedSampler::Circulant(s) => s.sample(mesh, seed),
            PreparedSampler::Kle(s) => s.sample(mesh, seed),
            PreparedSampler::Constant { n, value } => {
                if *n != mesh.n() {
                    return Err(Error::FieldMismatch { field: *n, mesh: mesh.n() });
                }
                FieldRealization::constant(mesh, *value, seed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;

    #[test]
    fn restriction_copies_shared_vertices() {
        let fine = build_uniform_mesh(8).unwrap();
        let coarse = build_uniform_mesh(2).unwrap();
        let logs: Vec<f64> = (0..fine.num_vertices()).map(|v| (v as f64 * 0.37).sin()).collect();
        let field = FieldRealization::from_vertex_log_values(&fine, logs, SeedId::new(1, 3, 5));
        let r = restrict_to_coarse(&field, &fine, &coarse).unwrap();
        assert_eq!(r.seed, field.seed);
        for (vc, p) in coarse.vertices().iter().enumerate() {
            let vf = fine.vertices().iter().position(|q| q == p).unwrap();
            assert_eq!(r.vertex_log_values[vc].to_bits(), field.vertex_log_values[vf].to_bits());
        }

        let same = restrict_to_coarse(&field, &fine, &fine).unwrap();
        assert_eq!(same, field);

        let odd = build_uniform_mesh(3).unwrap();
        assert!(matches!(restrict_to_coarse(&field, &fine, &odd), Err(Error::NotNested { .. })));
    }

    #[test]
    fn constant_log_field_restricts_to_constant_coefficient() {
        let fine = build_uniform_mesh(4).unwrap();
        let coarse = build_uniform_mesh(2).unwrap();
        let c: f64 = 0.3;
        let field = FieldRealization::from_vertex_log_values(&fine, vec![c; fine.num_vertices()], SeedId::new(0, 0, 0));
        let r = restrict_to_coarse(&field, &fine, &coarse).unwrap();
        for a in &r.element_values {
            assert!((a - c.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn element_values_are_geometric_means() {
        let mesh = build_uniform_mesh(3).unwrap();
        let logs: Vec<f64> = (0..mesh.num_vertices()).map(|v| v as f64 * 0.1 - 0.7).collect();
        let field = FieldRealization::from_vertex_log_values(&mesh, logs.clone(), SeedId::new(0, 0, 0));
        for (t, verts) in mesh.elements().iter().enumerate() {
            let expected = (logs[verts[0]].exp() * logs[verts[1]].exp() * logs[verts[2]].exp()).cbrt();
            assert!((field.element_values[t] / expected - 1.0).abs() < 1e-14);
            assert!(field.element_values[t] > 0.0);
        }
    }
}
