//! Mini-batch training with length bucketing, Adam, clipping and early stopping.

use std::collections::BTreeMap;

use penet_core::{Dataset, DatasetRecord, SeededRng};
use rand::seq::SliceRandom;
use serde::Serialize;
use tensor_grad::{clip_grad_norm, Adam, Tape, Tensor};

use crate::config::{PEnetConfig, TrainConfig, MIN_LEN};
use crate::error::{config_err, Error, Result};
use crate::model::{Mode, PEnetModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-record weighted L1 loss over the epoch's training batches.
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

pub struct TrainOutcome {
    /// Weights at the best validation loss.
    pub model: PEnetModel,
    /// Optimizer state at the best validation loss.
    pub optimizer: Adam,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Training records in length buckets too small to form a batch.
    pub unused_records: usize,
}

/// Deterministic train/validation split of record indices.
pub fn split_indices(count: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut SeededRng::derive(seed, 0));
    let n_val =
        ((count as f64 * val_fraction).ceil() as usize).clamp(1, count.saturating_sub(1).max(1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn by_length(records: &[DatasetRecord], idx: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in idx {
        buckets
            .entry(records[i].trajectory.len())
            .or_default()
            .push(i);
    }
    buckets
}

/// One epoch's batches: shuffled within each length bucket, chunked, then the batch
/// order shuffled. A trailing single record joins the previous batch; a bucket of
/// one record is left out.
pub fn epoch_batches(
    buckets: &BTreeMap<usize, Vec<usize>>,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    for members in buckets.values() {
        let mut m = members.clone();
        m.shuffle(rng);
        let mut chunks: Vec<Vec<usize>> = m.chunks(batch_size).map(<[usize]>::to_vec).collect();
        if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() == 1) {
            let tail = chunks.pop().unwrap_or_default();
            if let Some(prev) = chunks.last_mut() {
                prev.extend(tail);
            }
        }
        batches.extend(chunks.into_iter().filter(|c| c.len() >= 2));
    }
    batches.shuffle(rng);
    batches
}

fn targets(records: &[DatasetRecord], batch: &[usize], m: usize) -> Result<Tensor> {
    let data: Vec<f64> = batch
        .iter()
        .flat_map(|&i| records[i].theta.to_vec())
        .collect();
    Ok(Tensor::new(&[batch.len(), m], data)?)
}

fn batch_inputs<'a>(records: &'a [DatasetRecord], batch: &[usize]) -> (Vec<&'a [f64]>, Vec<f64>) {
    batch
        .iter()
        .map(|&i| {
            (
                records[i].trajectory.values.as_slice(),
                records[i].trajectory.h,
            )
        })
        .unzip()
}

/// Weighted L1 loss summed over `idx` in inference mode, divided by the count.
pub fn inference_loss(
    model: &PEnetModel,
    records: &[DatasetRecord],
    idx: &[usize],
    chunk: usize,
) -> Result<f64> {
    let cfg = model.config();
    let m = cfg.output_dim();
    let mut total = 0.0;
    for group in by_length(records, idx).values() {
        for batch in group.chunks(chunk.max(1)) {
            let (paths, hs) = batch_inputs(records, batch);
            let est = model.predict(&paths, &hs)?;
            for (row, &i) in est.iter().zip(batch) {
                let truth = records[i].theta.to_vec();
                total += (0..m)
                    .map(|j| cfg.target_weights[j] * (row[j] - truth[j]).abs())
                    .sum::<f64>();
            }
        }
    }
    Ok(total / idx.len() as f64)
}

/// Population mean and variance of the batch-norm input over whole batches of `batches`
/// until at least `budget` records are covered, with the current weights.
pub fn recalibrate_bn(
    model: &mut PEnetModel,
    records: &[DatasetRecord],
    batches: &[Vec<usize>],
    budget: usize,
) -> Result<()> {
    let width = model.running_stats().0.len();
    let mut sum = vec![0.0; width];
    let mut sq = vec![0.0; width];
    let mut seen = 0usize;
    for batch in batches {
        if seen >= budget {
            break;
        }
        let (paths, hs) = batch_inputs(records, batch);
        let inp = model.prepare(&paths, &hs)?;
        let mut tape = Tape::new();
        let Some(stats) = model.forward(&mut tape, &inp, Mode::Train)?.bn_stats else {
            return Ok(());
        };
        let n = batch.len() as f64;
        for j in 0..width {
            let m = stats.mean[j];
            sum[j] += n * m;
            sq[j] += (n - 1.0) * stats.var[j] + n * m * m;
        }
        seen += batch.len();
    }
    if seen < 2 {
        return Ok(());
    }
    let n = seen as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let var = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q - n * m * m) / (n - 1.0)).max(0.0))
        .collect();
    model.set_running_stats(mean, var)
}

fn check_family(cfg: &PEnetConfig, dataset: &Dataset) -> Result<()> {
    if cfg.family != dataset.family.noise {
        return Err(config_err(format!(
            "model is for the {} family, dataset holds {}",
            cfg.family.name(),
            dataset.family.noise.name()
        )));
    }
    if cfg.output_dim() != dataset.family.param_dim() {
        return Err(config_err(
            "output dimension does not match the dataset family",
        ));
    }
    if let Some(r) = dataset
        .records
        .iter()
        .find(|r| r.trajectory.len() < MIN_LEN)
    {
        return Err(Error::InputTooShort {
            len: r.trajectory.len(),
            min: MIN_LEN,
        });
    }
    Ok(())
}

/// Train from scratch; `on_epoch` sees each epoch's log entry as it completes.
pub fn train(
    cfg: &TrainConfig,
    dataset: &Dataset,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = cfg.model_config(&dataset.family)?;
    check_family(&model_cfg, dataset)?;
    if dataset.len() < 3 {
        return Err(config_err("need at least 3 records to train"));
    }
    let records = &dataset.records;
    let m = model_cfg.output_dim();
    let weights = model_cfg.target_weights.clone();

    let mut model = PEnetModel::new(model_cfg, SeededRng::derive(cfg.seed, 1).seed())?;
    let mut opt = Adam::new(cfg.lr);
    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.val_fraction, cfg.seed);
    let buckets = by_length(records, &train_idx);

    let mut best = (f64::INFINITY, model.clone(), opt.clone(), 0usize);
    let mut log = Vec::new();
    let mut unused_records = 0;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut rng = SeededRng::derive(cfg.seed, 1 + epoch as u64);
        let batches = epoch_batches(&buckets, cfg.batch_size, &mut rng);
        if epoch == 1 {
            unused_records = train_idx.len() - batches.iter().map(Vec::len).sum::<usize>();
            if batches.is_empty() {
                return Err(config_err(
                    "no length bucket holds two records; cannot form a batch",
                ));
            }
        }
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for batch in &batches {
            let (paths, hs) = batch_inputs(records, batch);
            let inp = model.prepare(&paths, &hs)?;
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, &inp, Mode::Train)?;
            let loss = tape.weighted_l1(fwd.output, &targets(records, batch, m)?, &weights)?;
            let lv = tape.value(loss).item().unwrap_or(f64::NAN);
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss {
                    seeds: batch.iter().map(|&i| records[i].seed).collect(),
                });
            }
            tape.backward(loss)?;
            let mut grads: Vec<Tensor> = fwd
                .params
                .iter()
                .zip(model.tensors())
                .map(|(&v, t)| {
                    tape.take_grad(v)
                        .unwrap_or_else(|| Tensor::zeros(t.shape()))
                })
                .collect();
            if let Some(c) = cfg.clip_norm {
                clip_grad_norm(&mut grads, c);
            }
            opt.step(model.tensors_mut(), &grads)?;
            if let Some(s) = &fwd.bn_stats {
                model.update_running_stats(s);
            }
            loss_sum += lv * batch.len() as f64;
            seen += batch.len();
        }
        if cfg.bn_recalibration > 0 {
            recalibrate_bn(&mut model, records, &batches, cfg.bn_recalibration)?;
        }
        let val_loss = inference_loss(&model, records, &val_idx, cfg.batch_size)?;
        let improved = val_loss < best.0;
        if improved {
            best = (val_loss, model.clone(), opt.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss,
            improved,
        };
        on_epoch(&entry);
        log.push(entry);
        if stale >= cfg.patience.max(1) {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        optimizer: best.2,
        log,
        best_epoch: best.3,
        unused_records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let (t, v) = split_indices(100, 0.05, 9);
        assert_eq!(v.len(), 5);
        assert_eq!(t.len(), 95);
        assert!(v.iter().all(|i| !t.contains(i)));
        assert_eq!(split_indices(100, 0.05, 9), (t, v));
        let (_, v2) = split_indices(100, 0.05, 10);
        assert_eq!(v2.len(), 5);
    }

    #[test]
    fn batches_are_single_length_and_cover_the_bucket() {
        let mut buckets = BTreeMap::new();
        buckets.insert(200, (0..129).collect::<Vec<usize>>());
        buckets.insert(201, vec![500]);
        buckets.insert(202, vec![600, 601, 602]);
        let batches = epoch_batches(&buckets, 64, &mut SeededRng::new(1));
        let mut sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 64, 65]);
        for b in &batches {
            let first_bucket = b[0] < 129;
            assert!(b.iter().all(|&i| (i < 129) == first_bucket));
        }
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all.len(), 132);
        assert!(!all.contains(&500));
    }

    #[test]
    fn recalibration_pools_batches_into_population_statistics() {
        use penet_core::{sim::generate_dataset, SdeFamily, X0Policy};
        let fam = SdeFamily::gaussian().with_length(32, 32);
        let (ds, _) = generate_dataset(3, &fam, 12, X0Policy::default(), 1).unwrap();
        let cfg = PEnetConfig::for_family(&fam, Default::default());
        let mut model = PEnetModel::new(cfg, 5).unwrap();
        let all: Vec<usize> = (0..12).collect();
        let stats_of = |model: &PEnetModel, idx: &[usize]| {
            let (paths, hs) = batch_inputs(&ds.records, idx);
            let inp = model.prepare(&paths, &hs).unwrap();
            let mut tape = Tape::new();
            model
                .forward(&mut tape, &inp, Mode::Train)
                .unwrap()
                .bn_stats
                .unwrap()
        };
        let whole = stats_of(&model, &all);
        let first = stats_of(&model, &all[..5]);

        let batches = vec![all[..5].to_vec(), all[5..].to_vec()];
        recalibrate_bn(&mut model, &ds.records, &batches, 1000).unwrap();
        let (m, v) = model.running_stats();
        for j in 0..m.len() {
            assert!((m[j] - whole.mean[j]).abs() < 1e-12);
            assert!((v[j] - whole.var[j]).abs() < 1e-12 * whole.var[j].max(1.0));
        }
        // the budget is met after the first batch
        recalibrate_bn(&mut model, &ds.records, &batches, 3).unwrap();
        assert_eq!(model.running_stats().0, first.mean.as_slice());
    }
}
