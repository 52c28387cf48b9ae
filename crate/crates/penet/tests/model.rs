use penet::config::MIN_LEN;
use penet::model::Mode;
use penet::{Architecture, Error, InputMode, PEnetConfig, PEnetModel};
use penet_core::sim::generate_dataset;
use penet_core::{SdeFamily, SeededRng, X0Policy};
use tensor_grad::Tape;

fn model(family: &SdeFamily, arch: Architecture) -> PEnetModel {
    PEnetModel::new(PEnetConfig::for_family(family, arch), 42).unwrap()
}

fn paths(seed: u64, b: usize, n: usize) -> Vec<Vec<f64>> {
    let fam = SdeFamily::alpha_stable().with_length(n as u32, n as u32);
    let (ds, _) = generate_dataset(seed, &fam, b, X0Policy::default(), 1).unwrap();
    ds.records
        .into_iter()
        .map(|r| r.trajectory.values)
        .collect()
}

#[test]
fn inference_is_batch_independent_and_deterministic() {
    for mode in [InputMode::Standardized, InputMode::Raw] {
        let arch = Architecture {
            input_mode: mode,
            ..Default::default()
        };
        let m = model(&SdeFamily::alpha_stable(), arch);
        let ps = paths(1, 9, 120);
        let refs: Vec<&[f64]> = ps.iter().map(Vec::as_slice).collect();
        let hs: Vec<f64> = (0..9).map(|i| 0.01 + 0.001 * i as f64).collect();
        let batched = m.predict(&refs, &hs).unwrap();
        for i in 0..9 {
            let single = m.predict(&refs[i..=i], &hs[i..=i]).unwrap();
            assert_eq!(single[0], batched[i], "{mode:?} row {i}");
        }
        assert_eq!(m.predict(&refs, &hs).unwrap(), batched);
    }
}

#[test]
fn ablation_keeps_output_shape() {
    let fam = SdeFamily::student();
    let ps = paths(2, 5, 64);
    let refs: Vec<&[f64]> = ps.iter().map(Vec::as_slice).collect();
    for use_cnn in [true, false] {
        let arch = Architecture {
            use_cnn,
            ..Default::default()
        };
        let out = model(&fam, arch).predict(&refs, &[0.01; 5]).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out
            .iter()
            .all(|r| r.len() == 3 && r.iter().all(|v| v.is_finite())));
    }
}

#[test]
fn lstm_sees_quartered_sequence() {
    let m = model(&SdeFamily::alpha_stable(), Architecture::default());
    for n in [16, 64, 203, 3000, 3201] {
        assert_eq!(m.flops(n).lstm_steps, (n / 2) / 2);
    }
    let mut tape = Tape::new();
    let ps = paths(3, 2, 3000);
    let refs: Vec<&[f64]> = ps.iter().map(Vec::as_slice).collect();
    let inp = m.prepare(&refs, &[0.001, 0.001]).unwrap();
    m.forward(&mut tape, &inp, Mode::Inference).unwrap();
    let shapes: Vec<Vec<usize>> = (0..tape.len())
        .map(|i| tape.shape(tape.node(i).unwrap()).to_vec())
        .collect();
    assert!(shapes.iter().any(|s| s == &[2, 1500, 25]));
    assert!(shapes.iter().any(|s| s == &[2, 750, 25]));
    assert!(!shapes
        .iter()
        .any(|s| s.len() == 3 && s[0] == 2 && s[1] < 750));
}

#[test]
fn spacing_enters_the_estimate() {
    let m = model(&SdeFamily::gaussian(), Architecture::default());
    let p = paths(4, 1, 100).remove(0);
    let a = m.predict(&[&p], &[0.004]).unwrap()[0].clone();
    let b = m.predict(&[&p], &[0.008]).unwrap()[0].clone();
    assert!(a.iter().zip(&b).any(|(x, y)| x != y));
}

#[test]
fn circular_shift_changes_little_and_less_for_longer_paths() {
    let m = model(&SdeFamily::alpha_stable(), Architecture::default());
    let mut rng = SeededRng::new(8);
    let gap = |n: usize, rng: &mut SeededRng| {
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let p: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut q = p.clone();
            q.rotate_right(1);
            let a = m.predict(&[&p], &[0.01]).unwrap().remove(0);
            let b = m.predict(&[&q], &[0.01]).unwrap().remove(0);
            worst = worst.max(
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
            );
        }
        worst
    };
    let short = gap(256, &mut rng);
    let long = gap(4096, &mut rng);
    assert!(short < 0.05, "{short}");
    assert!(long < short, "{long} vs {short}");
}

#[test]
fn too_short_inputs_rejected() {
    let m = model(&SdeFamily::gaussian(), Architecture::default());
    let p = vec![0.1; MIN_LEN - 1];
    assert!(matches!(
        m.predict(&[&p], &[0.01]),
        Err(Error::InputTooShort { .. })
    ));
    let ok = vec![0.1; MIN_LEN];
    assert!(m.predict(&[&ok], &[0.01]).is_ok());
}

#[test]
fn checkpoint_file_round_trip_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(&SdeFamily::alpha_stable(), Architecture::default());
    let (a, b) = (dir.path().join("a.penw"), dir.path().join("b.penw"));
    m.save(&a, None).unwrap();
    let back = PEnetModel::load(&a).unwrap();
    back.save(&b, None).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let p = paths(5, 1, 80).remove(0);
    assert_eq!(
        m.predict(&[&p], &[0.02]).unwrap(),
        back.predict(&[&p], &[0.02]).unwrap()
    );
}
