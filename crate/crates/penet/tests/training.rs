use penet::evaluate::{evaluate, summarize, GroupSpec};
use penet::train::train;
use penet::{Error, TrainConfig};
use penet_core::sim::{generate_dataset, Dataset};
use penet_core::{SdeFamily, X0Policy};

fn small_set(seed: u64, count: usize, n: u32) -> Dataset {
    let fam = SdeFamily::gaussian().with_length(n, n);
    generate_dataset(seed, &fam, count, X0Policy::default(), 1)
        .unwrap()
        .0
}

fn quick_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.arch.lstm_layers = 1;
    cfg.arch.lstm_hidden = 8;
    cfg.arch.conv_channels = 4;
    cfg.arch.fc_width = 8;
    cfg.batch_size = 16;
    cfg.max_epochs = 4;
    cfg.seed = 3;
    cfg
}

#[test]
fn overfits_a_tiny_set() {
    let ds = small_set(1, 64, 64);
    let mut cfg = TrainConfig::default();
    cfg.max_epochs = 300;
    cfg.patience = 300;
    let out = train(&cfg, &ds, |_| {}).unwrap();
    let first = out.log[0].train_loss;
    let last = out.log.last().unwrap().train_loss;
    assert_eq!(out.log.len(), 300);
    assert!(last < 0.1 * first, "epoch 1 loss {first}, final {last}");
}

#[test]
fn identical_configs_give_identical_runs() {
    let ds = small_set(2, 120, 40);
    let a = train(&quick_config(), &ds, |_| {}).unwrap();
    let b = train(&quick_config(), &ds, |_| {}).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.tensors(), b.model.tensors());
    let ca = a.model.to_checkpoint(Some(&a.optimizer)).unwrap();
    let cb = b.model.to_checkpoint(Some(&b.optimizer)).unwrap();
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    ca.write_to(&mut ba).unwrap();
    cb.write_to(&mut bb).unwrap();
    assert_eq!(ba, bb);
}

#[test]
fn scaling_loss_weights_scales_losses_only() {
    // Adam normalises the gradient scale away, so with clipping off the weight
    // trajectory is the same up to the optimizer's epsilon.
    let ds = small_set(3, 120, 40);
    let mut base = quick_config();
    base.clip_norm = None;
    let mut scaled = base.clone();
    scaled.target_weights = Some(vec![10.0 / 5.0, 10.0 / 0.05]);
    let a = train(&base, &ds, |_| {}).unwrap();
    let b = train(&scaled, &ds, |_| {}).unwrap();
    for (x, y) in a.log.iter().zip(&b.log) {
        assert!(
            (y.train_loss / x.train_loss - 10.0).abs() < 1e-4,
            "{x:?} {y:?}"
        );
        assert!((y.val_loss / x.val_loss - 10.0).abs() < 1e-4, "{x:?} {y:?}");
        assert_eq!(x.improved, y.improved);
    }
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn family_mismatch_is_a_config_error() {
    let fam = SdeFamily::student().with_length(40, 40);
    let (ds, _) = generate_dataset(4, &fam, 30, X0Policy::default(), 1).unwrap();
    let mut cfg = quick_config();
    cfg.target_weights = Some(vec![1.0, 1.0]);
    assert!(matches!(train(&cfg, &ds, |_| {}), Err(Error::Config(_))));
}

#[test]
fn non_finite_loss_names_the_batch_seeds() {
    let mut ds = small_set(5, 40, 32);
    for r in &mut ds.records {
        r.trajectory.values.iter_mut().for_each(|v| *v *= 1e300);
    }
    let err = train(&quick_config(), &ds, |_| {}).err().unwrap();
    match err {
        Error::NonFiniteLoss { seeds } => {
            assert!(!seeds.is_empty());
            assert!(seeds
                .iter()
                .all(|s| ds.records.iter().any(|r| r.seed == *s)));
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn evaluation_is_repeatable_and_matches_a_streaming_pass() {
    let train_set = small_set(6, 100, 48);
    let out = train(&quick_config(), &train_set, |_| {}).unwrap();
    let mut fam = SdeFamily::gaussian().with_length(40, 60);
    fam.eta.lo = 1.5;
    fam.eta.hi = 1.5;
    let (test, _) = generate_dataset(7, &fam, 50, X0Policy::default(), 1).unwrap();
    let groups = vec![GroupSpec::parse(fam.noise, "eta=1.5").unwrap()];
    let (r1, s1) = evaluate(&out.model, &test, &groups, 1).unwrap();
    let (r2, s2) = evaluate(&out.model, &test, &groups, 3).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(s1, s2);
    assert_eq!(r1.groups[0].count, 50);

    // Welford pass over single-record predictions
    let (mut n, mut mean, mut m2, mut abs) = (0.0, 0.0, 0.0, 0.0);
    for rec in &test.records {
        let e = out
            .model
            .predict(&[&rec.trajectory.values], &[rec.trajectory.h])
            .unwrap()[0][0];
        n += 1.0;
        let d = e - mean;
        mean += d / n;
        m2 += d * (e - mean);
        abs += (e - 1.5f64).abs();
    }
    let p = r1.param("eta=1.5", "eta").unwrap();
    assert!((p.mean - mean).abs() < 1e-12);
    assert!((p.sd - (m2 / (n - 1.0)).sqrt()).abs() < 1e-12);
    assert!((p.mae - abs / n).abs() < 1e-12);
    assert_eq!(p.truth, Some(1.5));
}

#[test]
fn summary_of_oracle_is_exact() {
    let t = [1.0, 2.0, 3.0];
    assert_eq!(summarize(&t, &t).2, 0.0);
}

#[test]
fn decay_path_maps_to_low_epsilon_after_training() {
    // a noise-free path through a trained Gaussian model should land in the bottom
    // decile of the ε range [0, 0.05]
    let fam = SdeFamily::gaussian().with_length(200, 300);
    let (ds, _) = generate_dataset(8, &fam, 4000, X0Policy::default(), 1).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.max_epochs = 20;
    cfg.seed = 1;
    let out = train(&cfg, &ds, |_| {}).unwrap();
    let len = 250;
    for (eta, t, x0) in [
        (0.5, 8.0, 0.8),
        (1.0, 10.0, -0.6),
        (2.0, 6.0, 0.9),
        (3.0, 12.0, 0.5),
    ] {
        let h = t / len as f64;
        let decay: Vec<f64> = (0..len).map(|j| x0 * (1.0f64 - eta * h).powi(j)).collect();
        let eps = out.model.predict(&[&decay], &[h]).unwrap()[0][1];
        assert!(eps < 0.005, "eta {eta} T {t}: epsilon estimate {eps}");
    }
}
