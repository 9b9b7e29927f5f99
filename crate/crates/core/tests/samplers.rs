use std::sync::Arc;

use darcy_uq::mesh::Mesh;
use darcy_uq::randfield::{
    kle_build, restrict_to_coarse, CirculantSampler, CovarianceSpec, FieldModel, KleSampler, SeedId,
};

fn sample_covariance(draws: &[Vec<f64>], i: usize, j: usize) -> f64 {
    draws.iter().map(|g| g[i] * g[j]).sum::<f64>() / draws.len() as f64
}

#[test]
fn circulant_covariance_on_coarse_lattice() {
    let spec = CovarianceSpec::exponential(1.0, 1.0).unwrap();
    let mesh = Mesh::uniform(2).unwrap();
    let sampler = CirculantSampler::new(&spec, &mesh).unwrap();
    assert!(!sampler.clipped());
    let n = 20_000;
    let draws: Vec<Vec<f64>> =
        (0..n).map(|s| sampler.sample(&mesh, SeedId::new(2, 0, s)).unwrap().vertex_log_values).collect();
    let v = mesh.vertices();
    let rho = |i: usize, j: usize| spec.covariance((v[i][0] - v[j][0]).hypot(v[i][1] - v[j][1]));
    for i in 0..9 {
        for j in 0..9 {
            let se = ((rho(i, i) * rho(j, j) + rho(i, j).powi(2)) / n as f64).sqrt();
            let err = (sample_covariance(&draws, i, j) - rho(i, j)).abs();
            assert!(err < 5.0 * se, "entry ({i},{j}): error {err} vs se {se}");
        }
    }
}

#[test]
fn degenerate_variance_gives_unit_coefficient() {
    let spec = CovarianceSpec::exponential(1e-20, 0.3).unwrap();
    let mesh = Mesh::uniform(8).unwrap();
    let f = CirculantSampler::new(&spec, &mesh).unwrap().sample(&mesh, SeedId::new(1, 0, 0)).unwrap();
    assert!(f.vertex_log_values.iter().all(|g| g.abs() < 1e-8));
    assert!(f.element_values.iter().all(|a| (a - 1.0).abs() < 1e-8));
}

#[test]
fn kle_pointwise_variance_matches_truncated_sum() {
    let spec = CovarianceSpec::matern(1.0, 0.5, 2.0).unwrap();
    let basis = Arc::new(kle_build(&spec, 13, 32).unwrap());
    let mesh = Mesh::uniform(4).unwrap();
    let sampler = KleSampler::new(basis.clone(), &mesh);
    let n = 20_000;
    let draws: Vec<Vec<f64>> =
        (0..n).map(|s| sampler.sample(&mesh, SeedId::new(4, 0, s)).unwrap().vertex_log_values).collect();
    for vertex in [0, 7, 12, 24] {
        let expected = basis.truncated_variance(mesh.vertex(vertex));
        let est = sample_covariance(&draws, vertex, vertex);
        let se = expected * (2.0 / n as f64).sqrt();
        assert!((est - expected).abs() < 5.0 * se, "vertex {vertex}: {est} vs {expected}");
    }
}

#[test]
fn matern_half_is_exponential() {
    let lambda = 0.4;
    let matern = CovarianceSpec::matern(1.0, lambda, 0.5).unwrap();
    let exponential = CovarianceSpec::exponential(1.0, matern.scaled_length()).unwrap();
    for r in [0.0, 0.01, 0.1, 0.3, 0.9, 1.4] {
        assert!((matern.covariance(r) - exponential.covariance(r)).abs() < 1e-8, "r = {r}");
    }
}

#[test]
fn kle_and_circulant_marginal_variances_agree() {
    let matern = CovarianceSpec::matern(1.0, 0.6, 0.5).unwrap();
    let exponential = CovarianceSpec::exponential(1.0, matern.scaled_length()).unwrap();
    let mesh = Mesh::uniform(8).unwrap();
    let m = 16;
    let kle = KleSampler::new(Arc::new(kle_build(&matern, m * m, m).unwrap()), &mesh);
    let circ = CirculantSampler::new(&exponential, &mesh).unwrap();
    let n = 4000;
    let vertex = mesh.vertex_index(4, 4);
    let var = |f: &dyn Fn(u64) -> f64| (0..n).map(|s| f(s).powi(2)).sum::<f64>() / n as f64;
    let a = var(&|s| kle.sample(&mesh, SeedId::new(6, 0, s)).unwrap().vertex_log_values[vertex]);
    let b = var(&|s| circ.sample(&mesh, SeedId::new(6, 0, s)).unwrap().vertex_log_values[vertex]);
    let se = (2.0 / n as f64).sqrt() * std::f64::consts::SQRT_2;
    assert!((a - b).abs() < 5.0 * se, "kle {a} vs circulant {b}");
}

#[test]
fn restriction_keeps_shared_vertex_values() {
    let model = FieldModel::Circulant(CovarianceSpec::exponential(1.0, 0.2).unwrap());
    let fine = Mesh::uniform(16).unwrap();
    let coarse = Mesh::uniform(4).unwrap();
    let field = model.prepare(&fine).unwrap().sample(&fine, SeedId::new(3, 2, 1)).unwrap();
    let r = restrict_to_coarse(&field, &fine, &coarse).unwrap();
    for j in 0..=4 {
        for i in 0..=4 {
            let a = r.vertex_log_values[coarse.vertex_index(i, j)];
            let b = field.vertex_log_values[fine.vertex_index(4 * i, 4 * j)];
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
