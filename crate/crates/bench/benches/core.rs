use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use compresslearn::compression::{CompressionScheme, EncodeOutcome, G1dScheme, GdScheme};
use compresslearn::distances::{tv_1d, tv_mc};
use compresslearn::learners::{learn_gaussian_efficient, select_candidate, CandidateSet};
use compresslearn::lowerbound::{make_lb_family, pairwise_kl};
use compresslearn::nets::{hull_contains_ball, sample_hull_points, HULL_M_MULTIPLIER, HULL_RHO};
use compresslearn::{rng_from_seed, Gaussian};
use compresslearn_bench::{gaussian_1d, sample};

fn distances(c: &mut Criterion) {
    let (p, q) = (gaussian_1d(0.0, 1.0), gaussian_1d(0.7, 1.6));
    c.bench_function("tv_1d", |b| b.iter(|| tv_1d(&p, &q).unwrap()));
    let (p3, q3) = (Gaussian::standard(3).into(), Gaussian::standard(3).into());
    c.bench_function("tv_mc_d3_n20000", |b| b.iter(|| tv_mc(&p3, &q3, 20_000, 1).unwrap()));
}

fn schemes(c: &mut Criterion) {
    let truth = gaussian_1d(3.0, 0.01);
    let g1d = G1dScheme::default();
    let s = sample(&truth, g1d.spec(0.1).unwrap().m_samples, 1);
    c.bench_function("g1d_encode_decode", |b| {
        b.iter(|| {
            if let EncodeOutcome::Ok(msg) = g1d.encode(&truth, &s, 0.1, &mut rng_from_seed(2)).unwrap() {
                g1d.decode(&msg, &s.points, 0.1).unwrap();
            }
        })
    });
    let mut group = c.benchmark_group("gd_encode");
    group.sample_size(10);
    for d in [2, 3] {
        let truth = Gaussian::standard(d).into();
        let gd = GdScheme::new(d).unwrap();
        let s = sample(&truth, gd.spec(0.2).unwrap().m_samples, 3);
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| gd.encode(&truth, &s, 0.2, &mut rng_from_seed(4)).unwrap())
        });
    }
    group.finish();
}

fn hull(c: &mut Criterion) {
    let pts = sample_hull_points(5, HULL_M_MULTIPLIER, 1.0 / 3.0, &mut rng_from_seed(5));
    let mut group = c.benchmark_group("hull");
    group.sample_size(10);
    group.bench_function("contains_ball_d5", |b| b.iter(|| hull_contains_ball(&pts, HULL_RHO).unwrap()));
    group.finish();
}

fn learners(c: &mut Criterion) {
    let truth = Gaussian::standard(5).into();
    let s = sample(&truth, 20_000, 6);
    c.bench_function("efficient_d5_n20000", |b| b.iter(|| learn_gaussian_efficient(&s.points, 5).unwrap()));
    let target = gaussian_1d(0.0, 1.0);
    let cands: Vec<_> = (0..20).map(|i| gaussian_1d(0.05 * i as f64, 1.0 + 0.02 * i as f64)).collect();
    let set = CandidateSet::from_distributions(cands).unwrap();
    let holdout = sample(&target, 2_000, 7);
    c.bench_function("select_m20", |b| b.iter(|| select_candidate(&set, &holdout.points, 8).unwrap()));
}

fn lowerbound(c: &mut Criterion) {
    let mut group = c.benchmark_group("lowerbound");
    group.sample_size(10);
    group.bench_function("family_d18_m32", |b| {
        b.iter(|| pairwise_kl(&make_lb_family(18, 9, 0.25, 32, 9).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, distances, schemes, hull, learners, lowerbound);
criterion_main!(benches);
