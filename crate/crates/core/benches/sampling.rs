use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use darcy_uq::exec::{map_indexed, Execution};
use darcy_uq::mesh::Mesh;
use darcy_uq::mlmc::{sample_level, FlowHierarchy};
use darcy_uq::qoi::QoiKind;
use darcy_uq::randfield::{CirculantSampler, CovarianceSpec, FieldModel, SeedId};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn coupled_samples(c: &mut Criterion) {
    let field = FieldModel::Circulant(CovarianceSpec::exponential(1.0, 0.1).unwrap());
    let hierarchy = FlowHierarchy::new(4, 2, field, QoiKind::KEff).unwrap();
    // Build the meshes outside the timed region.
    sample_level(&hierarchy, 2, 0..1, 0, Execution::Sequential).unwrap();
    let mut group = c.benchmark_group("coupled_samples_n16");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sample_level(&hierarchy, 2, 0..32, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn field_draws(c: &mut Criterion) {
    let mesh = Mesh::uniform(64).unwrap();
    let sampler = CirculantSampler::new(&CovarianceSpec::exponential(1.0, 0.1).unwrap(), &mesh).unwrap();
    let mut group = c.benchmark_group("circulant_draws_n64");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| map_indexed(exec, 0..64, |s| sampler.sample(&mesh, SeedId::new(2, 0, s)).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, coupled_samples, field_draws);
criterion_main!(benches);
