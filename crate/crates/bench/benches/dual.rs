use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dualfilter::cir::linear_bd_sample;
use dualfilter::filter::{predict, Method};
use dualfilter::kingman::KingmanDual;
use dualfilter::wf::WfParams;
use dualfilter::wf_sampling::WfTransitionSampler;
use dualfilter::{MultiIndex, Resampling};
use dualfilter_bench::{cir_filtered, cir_model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn exact_step(c: &mut Criterion) {
    let model = cir_model();
    let start = cir_filtered(20);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("cir exact predict", |b| {
        b.iter(|| {
            predict(
                &model,
                black_box(&start),
                0.1,
                &Method::Exact,
                Resampling::Systematic,
                &mut rng,
            )
            .unwrap()
        })
    });
}

fn kingman_row(c: &mut Criterion) {
    let dual = KingmanDual::new(WfParams::new(vec![1.1; 3]).unwrap());
    let m = MultiIndex::new(vec![8, 5, 7]);
    c.bench_function("kingman row |m|=20", |b| {
        b.iter(|| dual.row(black_box(&m), 0.5))
    });
}

fn birth_death(c: &mut Criterion) {
    let p = cir_model().params;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("linear bd sample", |b| {
        b.iter(|| linear_bd_sample(black_box(15), 0.2, p.beta() + 1.0, &p, &mut rng).unwrap())
    });
}

fn wf_transition(c: &mut Criterion) {
    let p = WfParams::new(vec![1.1; 3]).unwrap();
    let sampler = WfTransitionSampler::new(&p, 0.5).unwrap();
    let x = [0.5, 0.3, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    c.bench_function("wf transition sample", |b| {
        b.iter(|| sampler.sample(black_box(&x), &mut rng).unwrap())
    });
}

criterion_group!(benches, exact_step, kingman_row, birth_death, wf_transition);
criterion_main!(benches);
