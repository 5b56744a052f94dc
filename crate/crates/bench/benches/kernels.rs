use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gpr_core::decoder::{beam_search, BeamConfig, Trie};
use gpr_core::hepo::{gae_advantages, hepo_iteration, HepoConfig, HepoState};
use gpr_core::pipeline::{run_supervised, PipelineConfig};
use gpr_core::policy::IntentState;
use gpr_core::quantizer::{rq_encode, rqkp_init};
use gpr_core::simenv::{generate_world, hierarchical_corpus, CorpusConfig, WorldConfig};
use gpr_core::training::{mtp_loss, LossKind};
use gpr_core::{PolicyParams, ValueParams};

fn quantizer(c: &mut Criterion) {
    let corpus = hierarchical_corpus(&CorpusConfig {
        n: 2000,
        ..CorpusConfig::default()
    })
    .unwrap();
    let model = rqkp_init(&corpus, &[16, 16, 16], 0).unwrap();
    c.bench_function("rq_encode", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % corpus.len();
            black_box(rq_encode(corpus.row(i), &model.codebook).unwrap())
        })
    });
}

fn world_setup() -> (gpr_core::simenv::World, PolicyParams) {
    let world = generate_world(&WorldConfig::default()).unwrap();
    let examples = world.training_examples(world.event_log().unwrap(), 2).unwrap();
    let init = PolicyParams::new(2, world.cfg.level_sizes.clone()).unwrap();
    let (policy, _) =
        run_supervised(&init, &examples, LossKind::Mtp, 2, 0.5, &Default::default(), 0).unwrap();
    (world, policy)
}

fn training(c: &mut Criterion) {
    let world = generate_world(&WorldConfig::default()).unwrap();
    let examples = world.training_examples(world.event_log().unwrap(), 2).unwrap();
    let params = PolicyParams::new(2, world.cfg.level_sizes.clone()).unwrap();
    let batch = &examples[..64.min(examples.len())];
    c.bench_function("mtp_loss_batch64", |b| b.iter(|| black_box(mtp_loss(&params, batch).unwrap())));
}

fn decoding(c: &mut Criterion) {
    let (world, policy) = world_setup();
    let mut trie = Trie::new(world.cfg.level_sizes.len());
    for item in &world.catalog {
        trie.insert(&item.item_id, &item.path).unwrap();
    }
    let cfg = BeamConfig {
        k: 16,
        ..BeamConfig::default()
    };
    let v = ValueParams::new();
    c.bench_function("beam_search", |b| {
        let mut bucket = 0;
        b.iter(|| {
            bucket = (bucket + 1) % 4;
            black_box(beam_search(&policy, &v, &IntentState::from_bucket(bucket), &trie, &cfg).unwrap())
        })
    });
}

fn hepo(c: &mut Criterion) {
    c.bench_function("gae_l3", |b| {
        b.iter(|| black_box(gae_advantages(&[0.1, 0.2, 1.5], &[0.3, 0.4, 0.9], 1.0, 0.95).unwrap()))
    });
    let (world, policy) = world_setup();
    let p = PipelineConfig::default();
    let env = world.environment(p.reward.clone(), BeamConfig { k: 16, ..p.beam }).unwrap();
    let cfg = HepoConfig {
        policy_lr: 20.0,
        ..HepoConfig::default()
    };
    let state = HepoState::new(policy, ValueParams::new(), &cfg);
    let requests = world.requests(0, &p.arr).unwrap();
    let mut group = c.benchmark_group("hepo");
    group.sample_size(10);
    group.bench_function("iteration", |b| {
        b.iter(|| black_box(hepo_iteration(&state, &env, &requests, &cfg, 0).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, quantizer, training, decoding, hepo);
criterion_main!(benches);
