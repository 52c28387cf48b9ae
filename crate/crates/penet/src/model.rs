//! The estimator network: conv condensation, stacked LSTM with mean pooling, dense head.

use penet_core::SeededRng;
use tensor_grad::{Adam, BatchStats, Checkpoint, Tape, Tensor, Var};

use crate::config::{InputMode, PEnetConfig, MIN_LEN};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const SD_FLOOR: f64 = 1e-8;
const CONFIG_TAG: [u8; 4] = *b"JCFG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm uses and reports batch statistics.
    Train,
    /// Batch norm uses running statistics; samples are independent.
    Inference,
}

/// Equal-length batch ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub batch: usize,
    pub len: usize,
    /// Path values `[B, N]`, standardized when the config asks for it.
    pub x: Vec<f64>,
    /// Scalars joined to the pooled features, `[B, E]`.
    pub extra: Vec<f64>,
}

pub struct Forward {
    pub output: Var,
    /// Parameter handles, in [`PEnetModel::tensors`] order.
    pub params: Vec<Var>,
    pub bn_stats: Option<BatchStats>,
}

/// Per-sample multiply-add counts of one forward pass, split by stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageFlops {
    pub conv: u64,
    pub lstm: u64,
    pub dense: u64,
    pub lstm_steps: usize,
}

impl StageFlops {
    pub fn total(&self) -> u64 {
        self.conv + self.lstm + self.dense
    }
}

#[derive(Debug, Clone)]
struct Layout {
    conv: Vec<(usize, usize)>,
    lstm: Vec<(usize, usize, usize)>,
    dense: Vec<(usize, usize)>,
    bn: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct PEnetModel {
    config: PEnetConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    layout: Layout,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

fn glorot(rng: &mut SeededRng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-a, a)).collect()).expect("shape product")
}

fn uniform(rng: &mut SeededRng, shape: &[usize], a: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-a, a)).collect()).expect("shape product")
}

/// Parameter names and shapes in construction order.
fn shapes(cfg: &PEnetConfig) -> (Vec<(String, Vec<usize>)>, Layout) {
    let a = &cfg.arch;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| {
        out.push((name, shape));
        out.len() - 1
    };
    let mut layout = Layout {
        conv: Vec::new(),
        lstm: Vec::new(),
        dense: Vec::new(),
        bn: (0, 0),
    };
    let mut ch = 1;
    if a.use_cnn {
        for i in 0..a.conv_layers {
            let w = push(
                format!("conv{i}.w"),
                vec![a.conv_channels, ch, a.conv_kernel],
            );
            let b = push(format!("conv{i}.b"), vec![a.conv_channels]);
            layout.conv.push((w, b));
            ch = a.conv_channels;
        }
    }
    let h = a.lstm_hidden;
    for i in 0..a.lstm_layers {
        let d = if i == 0 { ch } else { h };
        let wih = push(format!("lstm{i}.w_ih"), vec![4 * h, d]);
        let whh = push(format!("lstm{i}.w_hh"), vec![4 * h, h]);
        let b = push(format!("lstm{i}.b"), vec![4 * h]);
        layout.lstm.push((wih, whh, b));
    }
    let mut din = a.head_input();
    for i in 0..=a.fc_layers {
        let dout = if i == a.fc_layers {
            cfg.output_dim()
        } else {
            a.fc_width
        };
        let w = push(format!("fc{i}.w"), vec![dout, din]);
        let b = push(format!("fc{i}.b"), vec![dout]);
        layout.dense.push((w, b));
        if i == 0 {
            let g = push("bn.gamma".into(), vec![dout]);
            let beta = push("bn.beta".into(), vec![dout]);
            layout.bn = (g, beta);
        }
        din = dout;
    }
    (out, layout)
}

impl PEnetModel {
    /// Fresh weights drawn from `seed`.
    pub fn new(config: PEnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (spec, layout) = shapes(&config);
        let mut rng = SeededRng::new(seed);
        let h = config.arch.lstm_hidden;
        let (names, tensors) = spec
            .into_iter()
            .map(|(name, shape)| {
                let t = match (name.rsplit('.').next().unwrap_or(""), shape.as_slice()) {
                    ("w", [o, i, k]) => glorot(&mut rng, &shape, i * k, o * k),
                    ("w", [o, i]) => glorot(&mut rng, &shape, *i, *o),
                    ("w_ih" | "w_hh", _) => uniform(&mut rng, &shape, 1.0 / (h as f64).sqrt()),
                    ("b", [n]) if name.starts_with("lstm") => {
                        let mut b = Tensor::zeros(&[*n]);
                        b.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
                        b
                    }
                    ("gamma", _) => Tensor::full(&shape, 1.0),
                    _ => Tensor::zeros(&shape),
                };
                (name, t)
            })
            .unzip();
        let width = config.arch.fc_width;
        Ok(Self {
            config,
            names,
            tensors,
            layout,
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        })
    }

    pub fn config(&self) -> &PEnetConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn running_stats(&self) -> (&[f64], &[f64]) {
        (&self.running_mean, &self.running_var)
    }

    pub fn count_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Fold one batch's statistics into the running averages used at inference.
    pub fn set_running_stats(&mut self, mean: Vec<f64>, var: Vec<f64>) -> Result<()> {
        if mean.len() != self.running_mean.len() || var.len() != self.running_var.len() {
            return Err(Error::Shape("running statistics width mismatch".into()));
        }
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }

    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }

    /// Multiply-add counts per sample at input length `n`.
    pub fn flops(&self, n: usize) -> StageFlops {
        let a = &self.config.arch;
        let mut conv = 0u64;
        let mut len = n;
        let mut ch = 1;
        if a.use_cnn {
            for _ in 0..a.conv_layers {
                conv += (len * ch * a.conv_channels * a.conv_kernel) as u64;
                len /= a.pool;
                ch = a.conv_channels;
            }
        }
        let h = a.lstm_hidden;
        let per_step: usize = (0..a.lstm_layers)
            .map(|i| 4 * h * (if i == 0 { ch } else { h } + h))
            .sum();
        let lstm = (len * per_step) as u64;
        let dense = self
            .layout
            .dense
            .iter()
            .map(|&(w, _)| self.tensors[w].len() as u64)
            .sum();
        StageFlops {
            conv,
            lstm,
            dense,
            lstm_steps: len,
        }
    }

    /// Check lengths and build the network input for equal-length paths.
    pub fn prepare(&self, paths: &[&[f64]], hs: &[f64]) -> Result<Inputs> {
        if paths.is_empty() || paths.len() != hs.len() {
            return Err(Error::Shape(format!(
                "{} paths but {} spacings",
                paths.len(),
                hs.len()
            )));
        }
        let n = paths[0].len();
        if let Some(p) = paths.iter().find(|p| p.len() != n) {
            return Err(Error::Shape(format!(
                "mixed lengths {n} and {} in one batch",
                p.len()
            )));
        }
        if n < MIN_LEN {
            return Err(Error::InputTooShort {
                len: n,
                min: MIN_LEN,
            });
        }
        let mode = self.config.arch.input_mode;
        let mut x = Vec::with_capacity(paths.len() * n);
        let mut extra = Vec::with_capacity(paths.len() * mode.extra_features());
        for (p, &h) in paths.iter().zip(hs) {
            match mode {
                InputMode::Raw => {
                    x.extend_from_slice(p);
                    extra.push(h);
                }
                InputMode::Standardized => {
                    let m = p.iter().sum::<f64>() / n as f64;
                    let var = p.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
                    let sd = var.sqrt().max(SD_FLOOR);
                    x.extend(p.iter().map(|v| (v - m) / sd));
                    extra.extend([h, m, sd.ln()]);
                }
            }
        }
        Ok(Inputs {
            batch: paths.len(),
            len: n,
            x,
            extra,
        })
    }

    pub fn forward(&self, tape: &mut Tape, inp: &Inputs, mode: Mode) -> Result<Forward> {
        let a = &self.config.arch;
        let params: Vec<Var> = self
            .tensors
            .iter()
            .map(|t| match mode {
                Mode::Train => tape.leaf(t.clone()),
                Mode::Inference => tape.constant(t.clone()),
            })
            .collect();
        let mut x = tape.constant(Tensor::new(&[inp.batch, inp.len, 1], inp.x.clone())?);
        for &(w, b) in &self.layout.conv {
            x = tape.conv1d(x, params[w], params[b])?;
            x = tape.elu(x)?;
            x = tape.maxpool1d(x, a.pool, a.pool)?;
        }
        let layers: Vec<(Var, Var, Var)> = self
            .layout
            .lstm
            .iter()
            .map(|&(i, h, b)| (params[i], params[h], params[b]))
            .collect();
        let seq = tape.lstm_stack(x, &layers)?;
        let pooled = tape.mean_time(seq)?;
        let extra = tape.constant(Tensor::new(
            &[inp.batch, a.input_mode.extra_features()],
            inp.extra.clone(),
        )?);
        let mut z = tape.concat_cols(pooled, extra)?;
        let mut bn_stats = None;
        let last = self.layout.dense.len() - 1;
        for (i, &(w, b)) in self.layout.dense.iter().enumerate() {
            z = tape.linear(z, params[w], params[b])?;
            if i == 0 {
                let (g, beta) = (params[self.layout.bn.0], params[self.layout.bn.1]);
                z = match mode {
                    Mode::Train => {
                        let (v, s) = tape.batchnorm_train(z, g, beta, BN_EPS)?;
                        bn_stats = Some(s);
                        v
                    }
                    Mode::Inference => tape.batchnorm_eval(
                        z,
                        g,
                        beta,
                        &self.running_mean,
                        &self.running_var,
                        BN_EPS,
                    )?,
                };
            }
            if i < last {
                z = tape.elu(z)?;
            }
        }
        let (scale, shift) = self.config.output_affine();
        let output = tape.col_affine(z, &scale, &shift)?;
        Ok(Forward {
            output,
            params,
            bn_stats,
        })
    }

    /// Inference-mode estimates for equal-length paths, one row per path.
    pub fn predict(&self, paths: &[&[f64]], hs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let inp = self.prepare(paths, hs)?;
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, &inp, Mode::Inference)?;
        let m = self.config.output_dim();
        Ok(tape
            .value(f.output)
            .data()
            .chunks(m)
            .map(<[f64]>::to_vec)
            .collect())
    }

    pub fn to_checkpoint(&self, opt: Option<&Adam>) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            ck.push_tensor(name.clone(), t.clone());
        }
        ck.push_tensor("bn.running_mean", Tensor::vector(self.running_mean.clone()));
        ck.push_tensor("bn.running_var", Tensor::vector(self.running_var.clone()));
        let json =
            serde_json::to_vec(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.set_section(CONFIG_TAG, json);
        if let Some(opt) = opt {
            ck.set_adam(opt)?;
        }
        Ok(ck)
    }

    /// Rebuild a model, checking every stored shape against the embedded config.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let json = ck
            .section(CONFIG_TAG)
            .ok_or_else(|| Error::Checkpoint("missing config section".into()))?;
        let config: PEnetConfig =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let mut model = Self::new(config, 0)?;
        for (name, t) in model.names.iter().zip(model.tensors.iter_mut()) {
            let stored = ck
                .tensor(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if stored.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: stored shape {:?}, config implies {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            *t = stored.clone();
        }
        let width = model.config.arch.fc_width;
        for (name, dst) in [
            ("bn.running_mean", &mut model.running_mean),
            ("bn.running_var", &mut model.running_var),
        ] {
            let t = ck
                .tensor(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != [width] {
                return Err(Error::Checkpoint(format!(
                    "{name}: expected [{width}], got {:?}",
                    t.shape()
                )));
            }
            *dst = t.data().to_vec();
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path, opt: Option<&Adam>) -> Result<()> {
        self.to_checkpoint(opt)?.save(path)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
