//! Loss, optimizer, schedule, augmentation and the epoch loop.

use mbanet::data::{Domain, LesionClass, LoadedSample};
use mbanet::gradcheck::{check_all, GradCheckOptions};
use mbanet::tensor::{Graph, Tensor};
use mbanet::training::{
    augment, read_loss_log, seg_loss, train, write_loss_log, AugmentConfig, LossWeights, LrSchedule, Sgd, SgdConfig,
    TrainConfig,
};
use mbanet::{Error, MbaNet, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> ModelConfig {
    ModelConfig { prior_dim: 16, heads: 2, domain_dim: 8, decoder_dim: 8, x_c: 16, x_s: 64, window: 2, ..ModelConfig::default() }
}

fn disks(n: usize, seed: u64) -> Vec<LoadedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (cx, cy, r) = (rng.gen_range(5.0..11.0), rng.gen_range(5.0..11.0), rng.gen_range(2.5..4.5f32));
            let mask = Tensor::from_fn([16, 16], |k| {
                f32::from(((k % 16) as f32 + 0.5 - cx).hypot((k / 16) as f32 + 0.5 - cy) < r)
            });
            let noise: Vec<f32> = (0..256).map(|_| rng.gen_range(-0.05..0.05)).collect();
            let image = Tensor::from_fn([16, 16], |k| 0.7 - 0.4 * mask.data()[k] + noise[k]);
            LoadedSample { id: format!("d{i}"), class: LesionClass::Cystic, domain: Domain::A, image, mask }
        })
        .collect()
}

fn quick() -> TrainConfig {
    TrainConfig { epochs: 2, batch: 2, seed: 3, ..TrainConfig::default() }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = disks(5, 1);
    let run = |seed| {
        let (model, mut store) = MbaNet::init::<f32>(&small(), 7).unwrap();
        let log = train(&model, &mut store, &data, &TrainConfig { seed, ..quick() }, |_| {}).unwrap();
        (log, store)
    };
    let ((log_a, a), (log_b, b), (log_c, _)) = (run(3), run(3), run(4));
    assert_eq!(log_a.len(), 6);
    assert!(log_a.iter().zip(&log_b).all(|(x, y)| x.loss.to_bits() == y.loss.to_bits()));
    assert!(a.iter().zip(b.iter()).all(|((_, _, x), (_, _, y))| x.bit_eq(y)));
    assert!(log_a.iter().zip(&log_c).any(|(x, y)| x.loss != y.loss));
}

#[test]
fn loss_is_finite_at_init_for_random_data() {
    let cfg = small();
    for seed in 0..20 {
        let (model, store) = MbaNet::init::<f32>(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::new();
        let p = store.bind(&g);
        let high = g.constant(Tensor::from_fn([2, 1, 64, 64], |_| rng.gen_range(0.0..1.0f32)));
        let low = g.constant(Tensor::from_fn([2, 1, 16, 16], |_| rng.gen_range(0.0..1.0f32)));
        let target = Tensor::from_fn([2, 1, 16, 16], |_| f32::from(rng.gen_bool(0.3)));
        let loss = seg_loss(model.forward(&p, high, low).unwrap(), &target, LossWeights::default()).unwrap();
        assert!(loss.value().item().is_finite(), "seed {seed}");
    }
}

#[test]
fn non_finite_loss_aborts_with_a_numeric_error() {
    let (model, mut store) = MbaNet::init::<f32>(&small(), 0).unwrap();
    let id = store.id_of("decoder.hypernet.2.bias").unwrap();
    store.get_mut(id).data_mut()[0] = f32::NAN;
    let err = train(&model, &mut store, &disks(2, 0), &quick(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
}

#[test]
fn empty_training_set_is_a_data_error() {
    let (model, mut store) = MbaNet::init::<f32>(&small(), 0).unwrap();
    assert!(matches!(train(&model, &mut store, &[], &quick(), |_| {}), Err(Error::Data(_))));
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let logits = Tensor::from_fn([2, 1, 4, 4], |_| rng.gen_range(-2.0..2.0));
    let target = Tensor::from_fn([2, 1, 4, 4], |_| f64::from(u8::from(rng.gen_bool(0.4))));
    let report = check_all(&[logits], |_, v| seg_loss(v[0], &target, LossWeights::default()), GradCheckOptions::default())
        .unwrap();
    assert!(report.passes(1e-4), "{:?}", report.worst());
}

#[test]
fn loss_examples() {
    let n = 64;
    let g = Graph::<f64>::new();
    let target = Tensor::from_fn([1, 1, 8, 8], |i| if i < n / 2 { 1.0 } else { 0.0 });
    let dice_only = LossWeights { dice: 1.0, bce: 0.0 };
    let ones = g.constant(Tensor::full([1, 1, 8, 8], 50.0));
    let loss = seg_loss(ones, &target, dice_only).unwrap().value().item();
    let expected = 1.0 - (n as f64 + 1.0) / (1.5 * n as f64 + 1.0);
    assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    let perfect = g.constant(target.map(|t| if t > 0.5 { 60.0 } else { -60.0 }));
    assert!(seg_loss(perfect, &target, LossWeights::default()).unwrap().value().item().abs() < 1e-12);
}

#[test]
fn sgd_hand_computed_steps() {
    let cfg = SgdConfig { momentum: 0.99, weight_decay: 0.0 };
    let mut theta = vec![Tensor::<f64>::zeros([2])];
    let mut sgd = Sgd::new(cfg, theta.iter());
    let g = vec![Tensor::<f64>::ones([2])];
    sgd.step(theta.iter_mut(), &g, 1.0).unwrap();
    sgd.step(theta.iter_mut(), &g, 1.0).unwrap();
    assert!(theta[0].data().iter().all(|&t| (t + 2.99).abs() < 1e-12));

    let mut theta = vec![Tensor::from_f64_slice([3], &[1.0, -2.0, 0.5]).unwrap()];
    let before = theta[0].clone();
    let mut sgd = Sgd::new(SgdConfig { momentum: 0.9, weight_decay: 1e-2 }, theta.iter());
    sgd.step(theta.iter_mut(), &[Tensor::<f64>::from_f64_slice([3], &[0.3, 0.1, -0.2]).unwrap()], 0.0).unwrap();
    assert!(theta[0].bit_eq(&before));
    let zero = [Tensor::<f64>::zeros([3])];
    let mut sgd = Sgd::new(SgdConfig { momentum: 0.0, weight_decay: 1e-2 }, theta.iter());
    sgd.step(theta.iter_mut(), &zero, 0.5).unwrap();
    let norm = |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>();
    assert!(norm(&theta[0]) < norm(&before));
}

#[test]
fn schedules_decrease_every_epoch() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(0), 3e-4);
    assert_eq!(cfg.lr_at(cfg.epochs), 0.0);
    assert!((cfg.lr_at(25) - 3e-4 * 0.5f64.powf(0.9)).abs() < 1e-18);
    for schedule in [LrSchedule::Poly, LrSchedule::Exp] {
        let lrs: Vec<f64> = (0..50).map(|e| schedule.lr(3e-4, e, 50, 0.9)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]), "{schedule}");
    }
    assert_eq!(LrSchedule::Exp.lr(1.0, 2, 50, 0.9), 0.81);
    assert_eq!("exp".parse::<LrSchedule>().unwrap(), LrSchedule::Exp);
}

#[test]
fn augmentation_preserves_mask_pixels() {
    let data = disks(10, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for s in &data {
        let (image, mask) = augment(&s.image, &s.mask, &AugmentConfig::default(), &mut rng);
        assert_eq!(mask.sum(), s.mask.sum());
        assert!(mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    let (image, mask) = augment(&data[0].image, &data[0].mask, &AugmentConfig::identity(), &mut rng);
    assert!(image.bit_eq(&data[0].image) && mask.bit_eq(&data[0].mask));
}

#[test]
fn loss_log_round_trips() {
    let (model, mut store) = MbaNet::init::<f32>(&small(), 2).unwrap();
    let log = train(&model, &mut store, &disks(3, 4), &quick(), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loss.csv");
    write_loss_log(&path, &log).unwrap();
    assert_eq!(read_loss_log(&path).unwrap(), log);
    assert!(log.windows(2).all(|w| w[1].lr <= w[0].lr));
}
