mod common;

use darcy_uq::mesh::Mesh;
use darcy_uq::mfem::{eval_recovered, eval_velocity, solve_hybridized, MixedFem, ProblemData};
use darcy_uq::qoi::{effective_permeability, pressure_norms, travel_time, velocity_norms, Termination};
use darcy_uq::randfield::{CirculantSampler, CovarianceSpec, FieldRealization, SeedId};

use common::{dense_hybrid_oracle, element_field, integrate, max_abs_diff};

fn rough_field(mesh: &Mesh, seed: u64) -> FieldRealization {
    CirculantSampler::new(&CovarianceSpec::exponential(1.0, 0.2).unwrap(), mesh)
        .unwrap()
        .sample(mesh, SeedId::new(seed, 0, 0))
        .unwrap()
}

#[test]
fn oracle_with_source_and_general_boundary_data() {
    let data = ProblemData { inflow_pressure: 2.5, outflow_pressure: -0.75, source: 1.3 };
    for n in [1, 3, 5] {
        let mesh = Mesh::uniform(n).unwrap();
        let field = rough_field(&mesh, n as u64);
        let sol = solve_hybridized(&mesh, &field, &data).unwrap();
        let oracle = dense_hybrid_oracle(&mesh, &field.element_values, &data);
        assert!(max_abs_diff(&sol.edge_flux, &oracle.edge_flux) < 1e-9);
        assert!(max_abs_diff(&sol.pressure, &oracle.pressure) < 1e-9);
        assert!(max_abs_diff(&sol.multipliers, &oracle.multipliers) < 1e-9);
    }
}

#[test]
fn norms_match_high_order_quadrature() {
    let mesh = Mesh::uniform(6).unwrap();
    let sol = solve_hybridized(&mesh, &rough_field(&mesh, 9), &ProblemData::flow_cell()).unwrap();
    let (mut q2, mut p2, mut r2, mut qx) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..mesh.num_elements() {
        q2 += integrate(&mesh, t, |x| {
            let v = eval_velocity(&mesh, t, &sol.edge_flux, x);
            v[0] * v[0] + v[1] * v[1]
        });
        qx += integrate(&mesh, t, |x| eval_velocity(&mesh, t, &sol.edge_flux, x)[0]);
        p2 += mesh.area(t) * sol.pressure[t].powi(2);
        r2 += integrate(&mesh, t, |x| eval_recovered(&mesh, t, &sol.recovered_pressure[t], x).powi(2));
    }
    let (l2, hdiv) = velocity_norms(&mesh, &sol);
    // Divergence-free flow: both velocity norms coincide.
    assert!((l2 - q2.sqrt()).abs() < 1e-12);
    assert!((hdiv - l2).abs() < 1e-9);
    let (p, r) = pressure_norms(&mesh, &sol);
    assert!((p - p2.sqrt()).abs() < 1e-12);
    assert!((r - r2.sqrt()).abs() < 1e-12);
    assert!((effective_permeability(&mesh, &sol) - qx).abs() < 1e-12);
}

#[test]
fn travel_time_in_layered_media() {
    let data = ProblemData::flow_cell();
    for n in [2, 4, 8, 16] {
        let mesh = Mesh::uniform(n).unwrap();
        let seed = SeedId::new(0, 0, 0);
        // Horizontal layers: q = (a(y), 0), so a particle in a layer takes 1 / a.
        let layered = |x: [f64; 2]| if x[1] < 0.5 { 2.0 } else { 0.5 };
        let f = FieldRealization::from_element_values(&mesh, element_field(&mesh, layered), seed).unwrap();
        let sol = solve_hybridized(&mesh, &f, &data).unwrap();
        let r = travel_time(&mesh, &sol, [0.0, 0.25]).unwrap();
        assert_eq!(r.termination, Termination::Exited);
        assert!((r.travel_time - 0.5).abs() < 1e-9, "n={n}: {}", r.travel_time);
        let r = travel_time(&mesh, &sol, [0.0, 0.75]).unwrap();
        assert!((r.travel_time - 2.0).abs() < 1e-9);

        // Vertical layers: uniform flux through resistances in series.
        let series = |x: [f64; 2]| if x[0] < 0.5 { 1.0 } else { 3.0 };
        let f = FieldRealization::from_element_values(&mesh, element_field(&mesh, series), seed).unwrap();
        let sol = solve_hybridized(&mesh, &f, &data).unwrap();
        let q = 1.0 / (0.5 / 1.0 + 0.5 / 3.0);
        let r = travel_time(&mesh, &sol, [0.0, 0.5]).unwrap();
        assert!((r.travel_time - 1.0 / q).abs() < 1e-9);
        assert!((r.exit[0] - 1.0).abs() < 1e-12 && (r.exit[1] - 0.5).abs() < 1e-9);
    }
}

#[test]
fn assembled_systems_are_spd() {
    let mesh = Mesh::uniform(6).unwrap();
    let fem = MixedFem::new(&mesh);
    let sampler = CirculantSampler::new(&CovarianceSpec::exponential(1.0, 0.3).unwrap(), &mesh).unwrap();
    for s in 0..100 {
        let field = sampler.sample(&mesh, SeedId::new(17, 0, s)).unwrap();
        let (k, _) = fem.assemble(&field, &ProblemData::flow_cell()).unwrap();
        assert!(k.is_symmetric(1e-12));
        let dense = nalgebra::DMatrix::from_row_slice(k.dim(), k.dim(), &k.to_dense().concat());
        let eig = dense.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|l| *l > 0.0), "sample {s} not positive definite");
    }
}

#[test]
fn unit_coefficient_reproduced_on_odd_meshes() {
    for n in [3, 7, 11] {
        let mesh = Mesh::uniform(n).unwrap();
        let f = FieldRealization::constant(&mesh, 1.0, SeedId::new(0, 0, 0)).unwrap();
        let sol = solve_hybridized(&mesh, &f, &ProblemData::flow_cell()).unwrap();
        for e in 0..mesh.num_edges() {
            assert!((sol.edge_flux[e] - mesh.edge_normal(e)[0] * mesh.edge_length(e)).abs() < 1e-10);
            assert!((sol.multipliers[e] - (1.0 - mesh.edge_midpoint(e)[0])).abs() < 1e-10);
        }
        let r = travel_time(&mesh, &sol, [0.0, 0.5]).unwrap();
        assert!((r.travel_time - 1.0).abs() < 1e-9, "n={n}");
    }
}
