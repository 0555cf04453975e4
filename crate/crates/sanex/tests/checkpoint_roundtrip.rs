use std::path::Path;

use sanex::checkpoint::Checkpoint;
use sanex_core::agent::{RngStreams, TrainConfig};
use sanex_core::envs::{make_env, Environment};
use sanex_core::nncore::{QNetwork, Strategy};
use sanex_core::numkit::{AdamState, Rng};

/// Any finite double, including subnormals and signed zeros.
fn finite_bits(rng: &mut Rng) -> f64 {
    loop {
        let v = f64::from_bits(rng.next_u64());
        if v.is_finite() {
            return v;
        }
    }
}

fn random_values(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.below(4) {
            0 => finite_bits(rng),
            1 => rng.normal(),
            2 => rng.normal() * 1e-300,
            _ => [0.0, -0.0, f64::MIN_POSITIVE, f64::MAX][rng.below(4)],
        })
        .collect()
}

#[test]
fn thousand_random_checkpoints_round_trip_bitwise() {
    let mut rng = Rng::new(2024);
    let envs = ["chain-2", "chain-4", "cliff_bridge-3x2"];
    for i in 0..1000 {
        let mut cfg = TrainConfig::default();
        cfg.strategy = Strategy::ALL[rng.below(Strategy::ALL.len())];
        cfg.env = envs[rng.below(envs.len())].to_string();
        cfg.encoder = (0..rng.below(3)).map(|_| 1 + rng.below(4)).collect();
        cfg.head_hidden = (0..rng.below(2)).map(|_| 1 + rng.below(4)).collect();
        cfg.sane_hidden = 1 + rng.below(4);
        cfg.seed = rng.next_u64();
        cfg.lr = rng.uniform(1e-6, 1e-2);

        let env = make_env(&cfg.env).unwrap();
        let shape = cfg.net_shape(env.spec().obs_width, env.spec().actions);
        let mut q = QNetwork::init(cfg.strategy, &shape, &mut rng).unwrap();
        let n = q.param_count();
        q.set_params_flat(&random_values(&mut rng, n)).unwrap();
        let mut target = q.clone();
        target.set_params_flat(&random_values(&mut rng, n)).unwrap();
        let mut adam = AdamState::new(n, cfg.lr, cfg.adam_eps).with_betas(cfg.adam_beta1, cfg.adam_beta2);
        adam.m = random_values(&mut rng, n);
        adam.v = random_values(&mut rng, n);
        adam.t = rng.next_u64();
        let ck = Checkpoint {
            config: cfg,
            step: rng.next_u64(),
            updates: rng.next_u64(),
            q,
            target,
            adam,
            streams: RngStreams::from_seed(rng.next_u64()).1,
        };

        let text = ck.to_text();
        let back = Checkpoint::parse(&text, Path::new("mem")).unwrap();
        assert_eq!(back.q.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   ck.q.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), "case {i}");
        assert_eq!(back.adam.m.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   ck.adam.m.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), "case {i}");
        assert_eq!(back, ck, "case {i}");
        assert_eq!(back.to_text(), text, "case {i}");
    }
}

#[test]
fn save_and_load_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::default();
    cfg.env = "chain-3".into();
    cfg.max_steps = 30;
    cfg.warmup_transitions = 10;
    cfg.batch_size = 4;
    let mut t = sanex_core::agent::Trainer::new(&cfg).unwrap();
    t.run(None).unwrap();
    let ck = Checkpoint::from_trainer(&t);
    let p = dir.path().join("c.ckpt");
    ck.save(&p).unwrap();
    let back = Checkpoint::load(&p).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.streams, t.streams);
}
