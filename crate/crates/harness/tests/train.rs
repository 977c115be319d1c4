mod common;

use common::*;
use freqgate_core::models::{Checkpoint, ModelKind};
use freqgate_core::Tensor;
use freqgate_harness::error::EXIT_NUMERIC;
use freqgate_harness::train::{LAST_CHECKPOINT, VAL_METRICS};
use freqgate_harness::{train, HarnessError, OptimizerKind, Trainer};

#[test]
fn zero_lr_leaves_parameters_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(1);
    let train_set = &data.train[..4];
    let mut t = Trainer::new(&config(ModelKind::Gfnet, dir.path())).unwrap();
    // The config rejects lr = 0, so the step size is zeroed on the optimizer.
    t.opt.cfg.lr = 0.0;
    assert_eq!(t.opt.cfg.decay(), 1.0);
    let before = t.model.params.tensors().to_vec();
    t.run_epoch(train_set).unwrap();
    assert_eq!(t.step, 1);
    assert_eq!(t.model.params.tensors(), &before[..]);
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let samples = synth_slices(1, 7);
    let idx = [0, 1, 2, 3];
    for kind in [ModelKind::Unet, ModelKind::AttentionUnet, ModelKind::Gfnet] {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(&config(kind, dir.path())).unwrap();
        let losses: Vec<f64> = (0..50).map(|_| t.step_batch(&samples, &idx).unwrap()).collect();
        let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = losses[45..].iter().sum::<f64>() / 5.0;
        assert!(tail < head, "{kind:?}: {head} -> {tail}");
    }
}

#[test]
fn zero_gradient_shrinks_every_parameter_by_the_decay_factor() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adamw] {
        let mut cfg = config(ModelKind::AttentionUnet, dir.path());
        cfg.optimizer = kind;
        let mut t = Trainer::new(&cfg).unwrap();
        let zeros: Vec<Tensor<f32>> = t.model.params.tensors().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let factor = (1.0 - cfg.lr * cfg.weight_decay) as f32;
        for _ in 0..3 {
            let before = t.model.params.tensors().to_vec();
            t.opt.step(&mut t.model.params, &zeros);
            for (b, a) in before.iter().zip(t.model.params.tensors()) {
                assert!(b.data().iter().zip(a.data()).all(|(x, y)| *y == *x * factor), "{kind:?}");
            }
        }
    }
}

#[test]
fn resume_continues_bit_identically() {
    let data = tiny_data(3);
    let whole = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();

    let mut cfg = config(ModelKind::Gfnet, whole.path());
    cfg.epochs = 3;
    let a = train(&cfg, &data, false).unwrap();

    let mut cfg_b = config(ModelKind::Gfnet, split.path());
    cfg_b.epochs = 1;
    train(&cfg_b, &data, false).unwrap();
    cfg_b.epochs = 3;
    let b = train(&cfg_b, &data, true).unwrap();

    assert_eq!(a.report.loss_curve, b.report.loss_curve);
    assert_eq!(a.epochs_run, 3);
    assert_eq!(b.epochs_run, 3);
    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(whole.path(), LAST_CHECKPOINT), read(split.path(), LAST_CHECKPOINT));
    let csv = format!("{VAL_METRICS}.csv");
    assert_eq!(read(whole.path(), &csv), read(split.path(), &csv));
}

#[test]
fn resume_rejects_a_different_model_spec() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(ModelKind::Gfnet, dir.path());
    let ckpt = Trainer::new(&cfg).unwrap().checkpoint(Default::default());
    let other = config(ModelKind::Unet, dir.path());
    assert!(matches!(Trainer::resume(&other, &ckpt), Err(HarnessError::Config(_))));
    let bytes = ckpt.to_bytes().unwrap();
    assert!(Trainer::resume(&cfg, &Checkpoint::from_bytes(&bytes).unwrap()).is_ok());
}

#[test]
fn non_finite_parameters_abort_with_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(5);
    let mut t = Trainer::new(&config(ModelKind::Unet, dir.path())).unwrap();
    t.model.params.tensors_mut()[0].data_mut()[0] = f32::NAN;
    let err = t.step_batch(&data.train, &[0, 1]).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_NUMERIC);
    assert!(err.to_string().contains("step 0"), "{err}");
}

#[test]
fn empty_training_set_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = tiny_data(6);
    data.train.clear();
    let err = train(&config(ModelKind::Unet, dir.path()), &data, false).unwrap_err();
    assert!(matches!(err, HarnessError::Data(_)));
}

#[test]
fn early_stop_halts_once_the_target_is_met() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(8);
    let mut cfg = config(ModelKind::Unet, dir.path());
    cfg.epochs = 5;
    cfg.early_stop_dice = Some(0.0);
    let out = train(&cfg, &data, false).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.epochs_run, 1);
}
