mod common;

use common::{random_image, rng, tiny};
use pixrec::data::{gen_mnist_corners, synthetic_digits, CornersConfig, Pair, PairedDataset, Split};
use pixrec::model::{ModelConfig, ModelKind, Objective};
use pixrec::train::{init_params, loss_and_grads, train_loop, TrainConfig, Trainer};
use pixrec::Error;

fn tiny_data(kind_channels: usize, n: usize, seed: u64) -> PairedDataset {
    let mut r = rng(seed);
    let pairs = (0..n)
        .map(|_| Pair {
            input: random_image(&mut r, 2, 2, kind_channels, 4),
            target: random_image(&mut r, 4, 4, kind_channels, 4),
        })
        .collect();
    PairedDataset { split: Split::Train, pairs }
}

fn tiny_train(steps: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 3,
        steps,
        base_lr: 0.003,
        seed: 21,
        ..Default::default()
    }
}

fn bits(t: &Trainer) -> Vec<u64> {
    t.bundle.params.iter().flat_map(|(_, v)| v.data().iter().map(|x| x.to_bits())).collect()
}

#[test]
fn same_seed_same_bits() {
    let cfg = tiny(ModelKind::PixelRecursive, 3);
    let data = tiny_data(3, 10, 1);
    let run = || {
        let mut t = Trainer::new(tiny_train(12), init_params(&cfg, 4).unwrap()).unwrap();
        t.run(&data, None, None, |_| {}).unwrap();
        t
    };
    let (a, b) = (run(), run());
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.state, b.state);
}

#[test]
fn resumed_run_matches_uninterrupted() {
    for kind in [ModelKind::PixelRecursive, ModelKind::PixelCe, ModelKind::Regression] {
        let cfg = tiny(kind, 1);
        let data = tiny_data(1, 7, 2);
        let tc = TrainConfig {
            objective: pixrec::train::default_objective(kind),
            ..tiny_train(11)
        };
        let mut full = Trainer::new(tc.clone(), init_params(&cfg, 5).unwrap()).unwrap();
        full.run(&data, None, None, |_| {}).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let mut first = Trainer::new(TrainConfig { steps: 4, ..tc.clone() }, init_params(&cfg, 5).unwrap()).unwrap();
        first.run(&data, None, Some(&path), |_| {}).unwrap();
        let mut resumed = Trainer::load(&path).unwrap();
        assert_eq!(resumed.step(), 4);
        resumed.config.steps = 11;
        resumed.run(&data, None, None, |_| {}).unwrap();
        assert_eq!(bits(&resumed), bits(&full), "{kind:?}");
        assert_eq!(resumed.state, full.state);
    }
}

#[test]
fn train_loop_continues_a_bundle() {
    let cfg = tiny(ModelKind::PixelCe, 1);
    let data = tiny_data(1, 5, 3);
    let tc = TrainConfig {
        objective: Objective::PixelCe,
        ..tiny_train(3)
    };
    let out = train_loop(&tc, &cfg, &data, Some(&data), None, None).unwrap();
    assert_eq!(out.log.len(), 3);
    assert_eq!(out.state.step, 3);
    assert_ne!(out.bundle, init_params(&cfg, tc.seed).unwrap());
}

#[test]
fn incompatible_objective_is_rejected() {
    let cfg = tiny(ModelKind::Regression, 1);
    let tc = TrainConfig {
        objective: Objective::O2,
        ..tiny_train(1)
    };
    assert!(matches!(Trainer::new(tc, init_params(&cfg, 1).unwrap()), Err(Error::Config(_))));
}

#[test]
fn non_finite_loss_aborts_with_prior_checkpoint() {
    let cfg = tiny(ModelKind::PixelCe, 1);
    let data = tiny_data(1, 5, 4);
    let mut bundle = init_params(&cfg, 1).unwrap();
    let mut t = Trainer::new(
        TrainConfig {
            objective: Objective::PixelCe,
            ..tiny_train(5)
        },
        bundle.clone(),
    )
    .unwrap();
    t.run(&data, None, None, |_| {}).unwrap();
    // Poison the head bias, then continue.
    bundle = t.bundle.clone();
    bundle.params.get_mut("cond.head.b").unwrap().data_mut()[0] = f64::NAN;
    let mut poisoned = Trainer::new(t.config.clone(), bundle.clone()).unwrap();
    poisoned.state = t.state.clone();
    poisoned.config.steps = 9;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    let err = poisoned.run(&data, None, Some(&path), |_| {}).unwrap_err();
    match err {
        Error::NonFinite(msg) => assert!(msg.contains("step 6"), "{msg}"),
        e => panic!("unexpected {e:?}"),
    }
    let saved = Trainer::load(&path).unwrap();
    assert_eq!(saved.step(), 5);
    assert!(saved.bundle.params.get("cond.head.b").unwrap().data()[0].is_nan());
}

#[test]
fn o2_reaches_the_conditioning_network_at_step_one() {
    let cfg = tiny(ModelKind::PixelRecursive, 1);
    let mut data = tiny_data(1, 4, 5);
    for p in &mut data.pairs {
        p.target.data.fill(0);
    }
    let mut bundle = init_params(&cfg, 6).unwrap();
    // The prior alone already predicts every target with near certainty.
    bundle.params.get_mut("prior.head2.b").unwrap().data_mut()[0] = 40.0;
    let xs: Vec<_> = data.pairs.iter().map(|p| &p.input).collect();
    let ys: Vec<_> = data.pairs.iter().map(|p| &p.target).collect();
    let norm = |obj| {
        let (_, g) = loss_and_grads(&bundle, obj, &xs, &ys).unwrap();
        g.iter()
            .filter(|(k, _)| k.starts_with("cond."))
            .flat_map(|(_, v)| v.iter().map(|x| x * x))
            .sum::<f64>()
            .sqrt()
    };
    let (o1, o2) = (norm(Objective::O1), norm(Objective::O2));
    assert!(o2 > 1e-3, "{o2}");
    assert!(o2 > 100.0 * o1, "o1 {o1} o2 {o2}");
}

pub fn corners_model(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        channels: 1,
        levels: 4,
        in_h: 16,
        in_w: 16,
        upsample_stages: 1,
        cond_width: 8,
        cond_blocks: 1,
        prior_width: 8,
        prior_blocks: 3,
        prior_first_kernel: 7,
        prior_kernel: 5,
        prior_head: 16,
        inject: true,
        residual_bicubic: true,
        loss_mean: true,
    }
}

#[test]
fn corners_loss_halves_in_200_steps() {
    let src: Vec<_> = synthetic_digits(100, 1).into_iter().map(|(i, _)| i).collect();
    let data = gen_mnist_corners(&src, &CornersConfig::default(), 400, 1, Split::Train).unwrap();
    let tc = TrainConfig {
        batch_size: 4,
        steps: 200,
        base_lr: 0.002,
        seed: 3,
        ..Default::default()
    };
    let out = train_loop(&tc, &corners_model(ModelKind::PixelRecursive), &data, None, None, None).unwrap();
    let (first, last) = (out.log[0].loss_nats, out.log[199].loss_nats);
    assert!(last < 0.5 * first, "step 1 {first}, step 200 {last}");
}
