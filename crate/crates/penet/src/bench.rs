//! Forward-pass timing with and without the convolutional stage.

use std::time::Instant;

use penet_core::SeededRng;
use serde::Serialize;
use tensor_grad::Tape;

use crate::config::PEnetConfig;
use crate::error::Result;
use crate::model::{Mode, PEnetModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub len: usize,
    pub use_cnn: bool,
    pub lstm_steps: usize,
    /// Multiply-adds per sample.
    pub flops: u64,
    /// Best-of-`reps` forward time divided by the batch size.
    pub seconds_per_sample: f64,
}

/// Time inference-mode forward passes of `batch` random paths at each length, for
/// the configured network and for the same network with the conv stage removed.
pub fn bench(
    config: &PEnetConfig,
    lengths: &[usize],
    batch: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for use_cnn in [true, false] {
        let mut cfg = config.clone();
        cfg.arch.use_cnn = use_cnn;
        let model = PEnetModel::new(cfg, seed)?;
        let mut rng = SeededRng::derive(seed, 1);
        for &n in lengths {
            let paths: Vec<Vec<f64>> = (0..batch.max(1))
                .map(|_| (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect();
            let refs: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
            let inp = model.prepare(&refs, &vec![0.004; refs.len()])?;
            let mut best = f64::INFINITY;
            for _ in 0..reps.max(1) {
                let t = Instant::now();
                let mut tape = Tape::new();
                model.forward(&mut tape, &inp, Mode::Inference)?;
                best = best.min(t.elapsed().as_secs_f64());
            }
            let f = model.flops(n);
            rows.push(BenchRow {
                len: n,
                use_cnn,
                lstm_steps: f.lstm_steps,
                flops: f.total(),
                seconds_per_sample: best / refs.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Time without the conv stage over time with it, at length `n`.
pub fn speedup(rows: &[BenchRow], n: usize) -> Option<f64> {
    let t = |cnn: bool| {
        rows.iter()
            .find(|r| r.len == n && r.use_cnn == cnn)
            .map(|r| r.seconds_per_sample)
    };
    Some(t(false)? / t(true)?)
}

pub fn table(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:>6}  {:>7}  {:>10}  {:>12}  {:>14}\n",
        "N", "use_cnn", "lstm_steps", "madds", "ms/sample"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>6}  {:>7}  {:>10}  {:>12}  {:>14.4}\n",
            r.len,
            r.use_cnn,
            r.lstm_steps,
            r.flops,
            r.seconds_per_sample * 1e3
        ));
    }
    s
}
