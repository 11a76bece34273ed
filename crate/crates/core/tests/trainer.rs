use wein::data::{generate, SynthConfig};
use wein::model::{init_params, ModelParams, NetworkConfig};
use wein::trainer::{sgd_step, train, Sgd, SgdState, TrainConfig};

fn tiny() -> NetworkConfig {
    NetworkConfig {
        stage_widths: [2, 2, 2, 2],
        side_depth: 1,
        input_channels: 1,
    }
}

fn one_weight(value: f64, grad: f64) -> ModelParams<f64> {
    let mut p = ModelParams::zeros(&tiny()).unwrap();
    p.backbone[0].weight[0] = value;
    p.backbone[0].grad_weight[0] = grad;
    p
}

#[test]
fn plain_step_moves_against_the_gradient() {
    let mut p = one_weight(1.0, 1.0);
    let mut state = SgdState::new(&tiny()).unwrap();
    let sgd = Sgd {
        lr: 0.1,
        momentum: 0.0,
        weight_decay: 0.0,
    };
    sgd_step(&mut p, &mut state, &sgd);
    assert!((p.backbone[0].weight[0] - 0.9).abs() < 1e-15);
}

#[test]
fn momentum_decays_geometrically_without_new_gradient() {
    let mut p = one_weight(0.0, 1.0);
    let mut state = SgdState::new(&tiny()).unwrap();
    let sgd = Sgd {
        lr: 1.0,
        momentum: 0.5,
        weight_decay: 0.0,
    };
    sgd_step(&mut p, &mut state, &sgd);
    p.zero_grad();
    let mut steps = vec![];
    for _ in 0..4 {
        let before = p.backbone[0].weight[0];
        sgd_step(&mut p, &mut state, &sgd);
        steps.push(before - p.backbone[0].weight[0]);
    }
    assert_eq!(steps, [0.5, 0.25, 0.125, 0.0625]);
}

#[test]
fn weight_decay_alone_shrinks_weights_but_not_biases() {
    let mut p = init_params::<f64>(&tiny(), 3).unwrap();
    p.backbone
        .iter_mut()
        .for_each(|k| k.bias.iter_mut().for_each(|b| *b = 0.5));
    let mut state = SgdState::new(&tiny()).unwrap();
    let sgd = Sgd {
        lr: 0.1,
        momentum: 0.9,
        weight_decay: 0.01,
    };
    let mut norm = p.squared_norm();
    for _ in 0..5 {
        sgd_step(&mut p, &mut state, &sgd);
        let next = p.squared_norm();
        assert!(next < norm);
        norm = next;
    }
    assert!(p.backbone.iter().all(|k| k.bias.iter().all(|&b| b == 0.5)));
}

fn corpus(count: usize, size: usize) -> Vec<wein::data::Sample> {
    generate(&SynthConfig {
        count,
        size: (size, size),
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn single_sample_overfits() {
    let samples = corpus(1, 128);
    let cfg = TrainConfig {
        epochs: 200,
        lr: 3e-5,
        lr_step_epochs: vec![],
        seed: 11,
        ..TrainConfig::default()
    };
    let out = train(&samples, &NetworkConfig::desk(), &cfg).unwrap();
    let first = out.epoch_mean(1).unwrap();
    let last = out.epoch_mean(200).unwrap();
    assert!(last < 0.08 * first, "epoch 1 {first}, epoch 200 {last}");
}

#[test]
fn zero_epochs_returns_the_initial_parameters() {
    let samples = corpus(2, 32);
    let cfg = TrainConfig {
        epochs: 0,
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train(&samples, &NetworkConfig::desk(), &cfg).unwrap();
    assert_eq!(
        out.checkpoint.params,
        init_params::<f32>(&NetworkConfig::desk(), 4).unwrap()
    );
    assert_eq!(out.checkpoint.epochs_completed, 0);
    assert!(out.log.is_empty());
}

#[test]
fn training_is_bit_reproducible() {
    let samples = corpus(4, 32);
    let cfg = TrainConfig {
        epochs: 2,
        batch: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let a = train(&samples, &NetworkConfig::desk(), &cfg).unwrap();
    let b = train(&samples, &NetworkConfig::desk(), &cfg).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.log, b.log);
    let c = train(&samples, &NetworkConfig::desk(), &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.checkpoint.to_bytes(), c.checkpoint.to_bytes());
}

#[test]
fn divergence_is_reported() {
    let samples = corpus(2, 32);
    let cfg = TrainConfig {
        lr: 1e4,
        epochs: 20,
        ..TrainConfig::default()
    };
    let err = train(&samples, &NetworkConfig::desk(), &cfg).unwrap_err();
    assert!(matches!(err, wein::Error::Diverged { .. }), "{err}");
}
