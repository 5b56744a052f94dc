//! Greedy-decode value under repeated HEPO iterations on small seeded worlds.

use gpr_core::hepo::{greedy_values, hepo_iteration, HepoState};
use gpr_core::pipeline::{run_supervised, PipelineConfig};
use gpr_core::simenv::{generate_world, WorldConfig};
use gpr_core::training::LossKind;
use gpr_core::{PolicyParams, ValueParams};

const ITERATIONS: usize = 200;
const WINDOW: usize = 20;

/// Returns (non-decreasing window pairs, total pairs, first value, last value).
fn moving_average_trend(seed: u64) -> (usize, usize, f64, f64) {
    let wc = WorldConfig {
        seed,
        num_segments: 2,
        users_per_segment: 8,
        catalog_size: 8,
        level_sizes: vec![4, 4],
        sessions_per_user: 20,
        targeting_exclusion: 0.0,
        ..WorldConfig::default()
    };
    let world = generate_world(&wc).unwrap();
    let mut cfg = PipelineConfig {
        num_heads: 2,
        ..PipelineConfig::default()
    };
    cfg.hepo.policy_lr = 20.0;
    cfg.beam.k = 8;
    let env = world.environment(cfg.reward.clone(), cfg.beam.clone()).unwrap();
    let examples = world.training_examples(world.event_log().unwrap(), 2).unwrap();
    let init = PolicyParams::new(2, vec![4, 4]).unwrap();
    let (mtp, _) = run_supervised(&init, &examples, LossKind::Mtp, 5, 0.5, &cfg.train, seed).unwrap();
    let mut state = HepoState::new(mtp, ValueParams::new(), &cfg.hepo);
    let eval: Vec<_> = world.heldout(0).unwrap().into_iter().map(|(r, _)| r).collect();
    let mut greedy = Vec::with_capacity(ITERATIONS);
    for it in 0..ITERATIONS {
        let requests = world.requests(it as u64, &cfg.arr).unwrap();
        let (next, _) = hepo_iteration(&state, &env, &requests, &cfg.hepo, seed).unwrap();
        state = next;
        greedy.push(greedy_values(&env, &state.policy, &state.vparams, &eval).unwrap().0);
    }
    let ma: Vec<f64> = greedy.windows(WINDOW).map(|w| w.iter().sum::<f64>() / WINDOW as f64).collect();
    let ok = ma.windows(2).filter(|w| w[1] >= w[0] - 1e-12).count();
    (ok, ma.len() - 1, greedy[0], greedy[ITERATIONS - 1])
}

#[test]
fn moving_average_of_greedy_value_rarely_drops() {
    let (mut ok, mut total) = (0, 0);
    for seed in 0..5 {
        let (o, t, first, last) = moving_average_trend(seed);
        assert!(last > first, "seed {seed}: greedy value fell from {first} to {last}");
        ok += o;
        total += t;
    }
    let frac = ok as f64 / total as f64;
    assert!(frac >= 0.9, "moving average non-decreasing in {ok}/{total} windows");
}
