use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pot_core::experiment::{simulate, SimConfig};
use pot_core::ot::{cost_matrix, sinkhorn, uniform, CostMatrix, SinkhornConfig};
use pot_core::source::build_dictionary;
use pot_core::world::{sample_free_points, WorldKind};
use pot_core::{rng, DictionaryConfig, RotationSet, TransportConfig, Transporter, Vec2};
use rand::Rng;

fn cloud(n: usize, seed: u64) -> Vec<Vec2> {
    let mut r = rng::rng(seed);
    (0..n).map(|_| Vec2::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0))).collect()
}

fn bench_sinkhorn(c: &mut Criterion) {
    let mut g = c.benchmark_group("sinkhorn");
    for n in [30, 100, 300] {
        let d: CostMatrix = cost_matrix(&cloud(n, 1), &cloud(n, 2)).unwrap();
        let (a, b) = (uniform(n), uniform(n));
        g.bench_with_input(BenchmarkId::from_parameter(n), &d, |bench, d| {
            bench.iter(|| sinkhorn(d, &SinkhornConfig::default(), &a, &b).ok())
        });
    }
    g.finish();
}

fn bench_transport(c: &mut Criterion) {
    let sim = SimConfig::default();
    let source = simulate(WorldKind::TownA, 10, 0, 0, &sim, 0);
    let dict = build_dictionary(&source, &DictionaryConfig::default()).unwrap();
    let target = simulate(WorldKind::TownA, 1, 10, 10, &sim, 0).remove(0);
    let points = sample_free_points(&target, 3, 0);
    let t = Transporter::new(&dict, RotationSet::default(), TransportConfig::default()).unwrap();
    let mut g = c.benchmark_group("transport");
    g.sample_size(10);
    g.bench_function("scan_town_a_30_atoms", |b| b.iter(|| t.transport_scan(&target, &points, 3).unwrap()));
    g.finish();
}

fn bench_predict(c: &mut Criterion) {
    let source = simulate(WorldKind::Square, 3, 0, 0, &SimConfig::default(), 0);
    let dict = build_dictionary(&source, &DictionaryConfig::default()).unwrap();
    let params = dict.atoms[0].params.clone();
    let queries = cloud(1000, 3);
    c.bench_function("predict_1000_points", |b| {
        b.iter(|| queries.iter().map(|q| params.predict_with_uncertainty(*q).mean).sum::<f64>())
    });
}

criterion_group!(benches, bench_sinkhorn, bench_transport, bench_predict);
criterion_main!(benches);
