use crate::error::{shape_err, Error, Result};
use crate::gemm::gemm;
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

/// Per-feature batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n - 1) variance.
    pub var: Vec<f64>,
}

#[inline]
fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

impl Tape {
    /// ELU with unit alpha, elementwise.
    pub fn elu(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let src = self.value(x);
        let out: Vec<f64> = src.data().iter().map(|&v| elu(v)).collect();
        let value = Tensor::new(src.shape(), out)?;
        Ok(self.push(value, Op::Elu { x }, &[x]))
    }

    /// Mean over the time axis: `[B, T, D] -> [B, D]`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let xs = self.shape(x);
        if xs.len() != 3 {
            return Err(shape_err("mean_time", format!("input must be [B, T, D], got {xs:?}")));
        }
        let (bsz, steps, d) = (xs[0], xs[1], xs[2]);
        if steps == 0 {
            return Err(shape_err("mean_time", "time axis is empty"));
        }
        let xd = self.value(x).data();
        let mut out = vec![0.0; bsz * d];
        let inv = 1.0 / steps as f64;
        for b in 0..bsz {
            let o = &mut out[b * d..(b + 1) * d];
            for row in xd[b * steps * d..(b + 1) * steps * d].chunks_exact(d) {
                for (a, v) in o.iter_mut().zip(row) {
                    *a += v;
                }
            }
            o.iter_mut().for_each(|v| *v *= inv);
        }
        let value = Tensor::new(&[bsz, d], out)?;
        Ok(self.push(value, Op::MeanTime { x }, &[x]))
    }

    /// `y = x w^T + b` with `x: [B, D_in]`, `w: [D_out, D_in]`, `b: [D_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 2 {
            return Err(shape_err("linear", format!("input must be [B, D], got {xs:?}")));
        }
        if ws.len() != 2 || ws[1] != xs[1] {
            return Err(shape_err(
                "linear",
                format!("feature axis: weight {ws:?} does not accept input {xs:?}"),
            ));
        }
        let (bsz, din, dout) = (xs[0], xs[1], ws[0]);
        if self.shape(b) != [dout] {
            return Err(shape_err(
                "linear",
                format!("bias must be [{dout}], got {:?}", self.shape(b)),
            ));
        }
        let mut out = vec![0.0; bsz * dout];
        let bd = self.value(b).data();
        for row in out.chunks_exact_mut(dout) {
            row.copy_from_slice(bd);
        }
        gemm(
            bsz,
            din,
            dout,
            self.value(x).data(),
            (din, 1),
            self.value(w).data(),
            (1, din),
            1.0,
            &mut out,
            (dout, 1),
        );
        let value = Tensor::new(&[bsz, dout], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Batch normalisation over the batch axis of `x: [B, D]` using the batch's own
    /// statistics. Returns the output and the statistics for running averages.
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        self.check_live()?;
        let (bsz, d) = bn_shapes(self, x, gamma, beta)?;
        if bsz < 2 {
            return Err(Error::InvalidState(
                "batch norm in training mode needs a batch of at least 2".into(),
            ));
        }
        let xd = self.value(x).data();
        let mut mean = vec![0.0; d];
        for row in xd.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= bsz as f64);
        let mut var = vec![0.0; d];
        for row in xd.chunks_exact(d) {
            for j in 0..d {
                let c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / bsz as f64 + eps).sqrt()).collect();
        let unbiased: Vec<f64> = var.iter().map(|v| v / (bsz - 1) as f64).collect();
        let (xhat, out) = bn_apply(self, x, gamma, beta, &mean, &inv_std, d);
        let value = Tensor::new(&[bsz, d], out)?;
        let v = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: true,
            },
            &[x, gamma, beta],
        );
        Ok((v, BatchStats { mean, var: unbiased }))
    }

    /// Batch normalisation with fixed (running) statistics; per-example and
    /// independent of the batch composition.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        self.check_live()?;
        let (bsz, d) = bn_shapes(self, x, gamma, beta)?;
        if running_mean.len() != d || running_var.len() != d {
            return Err(shape_err("batchnorm", "running statistics length mismatch"));
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (xhat, out) = bn_apply(self, x, gamma, beta, running_mean, &inv_std, d);
        let value = Tensor::new(&[bsz, d], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: false,
            },
            &[x, gamma, beta],
        ))
    }

    /// Column concatenation `[B, Da] ++ [B, Db] -> [B, Da + Db]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err(
                "concat",
                format!("batch axis: cannot join {sa:?} and {sb:?}"),
            ));
        }
        let (bsz, da, db) = (sa[0], sa[1], sb[1]);
        self.concat_impl(a, b, bsz, da, db)
    }

    /// Append one scalar feature per example: `[B, D] ++ [B] -> [B, D + 1]`.
    pub fn concat_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        self.check_live()?;
        let (sa, ss) = (self.shape(a), self.shape(s));
        let ok = sa.len() == 2
            && match ss {
                [n] => *n == sa[0],
                [n, 1] => *n == sa[0],
                _ => false,
            };
        if !ok {
            return Err(shape_err(
                "concat_scalar",
                format!("batch axis: cannot append {ss:?} to {sa:?}"),
            ));
        }
        let (bsz, da) = (sa[0], sa[1]);
        self.concat_impl(a, s, bsz, da, 1)
    }

    fn concat_impl(&mut self, a: Var, b: Var, bsz: usize, da: usize, db: usize) -> Result<Var> {
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(bsz * (da + db));
        for i in 0..bsz {
            out.extend_from_slice(&ad[i * da..(i + 1) * da]);
            out.extend_from_slice(&bd[i * db..(i + 1) * db]);
        }
        let value = Tensor::new(&[bsz, da + db], out)?;
        Ok(self.push(value, Op::Concat { a, b }, &[a, b]))
    }

    /// `y[:, j] = scale[j] * x[:, j] + shift[j]` with fixed per-column constants.
    pub fn col_affine(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        self.check_live()?;
        let xs = self.shape(x);
        if xs.len() != 2 || xs[1] != scale.len() || xs[1] != shift.len() {
            return Err(shape_err(
                "col_affine",
                format!("column axis: {xs:?} vs {} constants", scale.len()),
            ));
        }
        let d = xs[1];
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| scale[i % d] * v + shift[i % d])
            .collect();
        let value = Tensor::new(xs, out)?;
        Ok(self.push(
            value,
            Op::ColAffine {
                x,
                scale: scale.to_vec(),
            },
            &[x],
        ))
    }
}

fn bn_shapes(tape: &Tape, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize)> {
    let xs = tape.shape(x);
    if xs.len() != 2 {
        return Err(shape_err("batchnorm", format!("input must be [B, D], got {xs:?}")));
    }
    let d = xs[1];
    if tape.shape(gamma) != [d] || tape.shape(beta) != [d] {
        return Err(shape_err("batchnorm", format!("feature axis: affine parameters must be [{d}]")));
    }
    Ok((xs[0], d))
}

fn bn_apply(
    tape: &Tape,
    x: Var,
    gamma: Var,
    beta: Var,
    mean: &[f64],
    inv_std: &[f64],
    d: usize,
) -> (Vec<f64>, Vec<f64>) {
    let xd = tape.value(x).data();
    let (gd, bd) = (tape.value(gamma).data(), tape.value(beta).data());
    let mut xhat = vec![0.0; xd.len()];
    let mut out = vec![0.0; xd.len()];
    for (i, &v) in xd.iter().enumerate() {
        let j = i % d;
        let z = (v - mean[j]) * inv_std[j];
        xhat[i] = z;
        out[i] = gd[j] * z + bd[j];
    }
    (xhat, out)
}

pub(crate) fn elu_backward(grads: &mut Grads, g: &[f64], x: Var, y: &Tensor) {
    if !grads.wants(x) {
        return;
    }
    let xd = grads.value(x).data();
    let dx = grads.slot(x);
    for i in 0..g.len() {
        let d = if xd[i] > 0.0 { 1.0 } else { y.data()[i] + 1.0 };
        dx[i] += g[i] * d;
    }
}

pub(crate) fn mean_time_backward(grads: &mut Grads, g: &[f64], x: Var) {
    if !grads.wants(x) {
        return;
    }
    let xs = grads.value(x).shape();
    let (bsz, steps, d) = (xs[0], xs[1], xs[2]);
    let inv = 1.0 / steps as f64;
    let dx = grads.slot(x);
    for b in 0..bsz {
        let gb = &g[b * d..(b + 1) * d];
        for row in dx[b * steps * d..(b + 1) * steps * d].chunks_exact_mut(d) {
            for (a, v) in row.iter_mut().zip(gb) {
                *a += v * inv;
            }
        }
    }
}

pub(crate) fn linear_backward(grads: &mut Grads, g: &[f64], x: Var, w: Var, b: Var) {
    let xs = grads.value(x).shape();
    let (bsz, din) = (xs[0], xs[1]);
    let dout = grads.value(w).shape()[0];
    if grads.wants(w) {
        let xd = grads.value(x).data();
        gemm(dout, bsz, din, g, (1, dout), xd, (din, 1), 1.0, grads.slot(w), (din, 1));
    }
    if grads.wants(b) {
        let db = grads.slot(b);
        for row in g.chunks_exact(dout) {
            for (a, v) in db.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    if grads.wants(x) {
        let wd = grads.value(w).data();
        gemm(bsz, dout, din, g, (dout, 1), wd, (din, 1), 1.0, grads.slot(x), (din, 1));
    }
}

pub(crate) fn batchnorm_backward(
    grads: &mut Grads,
    g: &[f64],
    (x, gamma, beta): (Var, Var, Var),
    xhat: &[f64],
    inv_std: &[f64],
    batch_stats: bool,
) {
    let xs = grads.value(x).shape();
    let (bsz, d) = (xs[0], xs[1]);
    if grads.wants(beta) {
        let db = grads.slot(beta);
        for row in g.chunks_exact(d) {
            for (a, v) in db.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    if grads.wants(gamma) {
        let dg = grads.slot(gamma);
        for (i, v) in g.iter().enumerate() {
            dg[i % d] += v * xhat[i];
        }
    }
    if grads.wants(x) {
        let gd = grads.value(gamma).data();
        let dxhat: Vec<f64> = g.iter().enumerate().map(|(i, v)| v * gd[i % d]).collect();
        let dx = grads.slot(x);
        if batch_stats {
            let mut s1 = vec![0.0; d];
            let mut s2 = vec![0.0; d];
            for i in 0..dxhat.len() {
                s1[i % d] += dxhat[i];
                s2[i % d] += dxhat[i] * xhat[i];
            }
            let n = bsz as f64;
            for i in 0..dxhat.len() {
                let j = i % d;
                dx[i] += inv_std[j] / n * (n * dxhat[i] - s1[j] - xhat[i] * s2[j]);
            }
        } else {
            for i in 0..dxhat.len() {
                dx[i] += dxhat[i] * inv_std[i % d];
            }
        }
    }
}

pub(crate) fn concat_backward(grads: &mut Grads, g: &[f64], a: Var, b: Var) {
    let (bsz, da) = (grads.value(a).shape()[0], grads.value(a).shape()[1]);
    let db = grads.value(b).len() / bsz;
    let w = da + db;
    if grads.wants(a) {
        let ga = grads.slot(a);
        for i in 0..bsz {
            for j in 0..da {
                ga[i * da + j] += g[i * w + j];
            }
        }
    }
    if grads.wants(b) {
        let gb = grads.slot(b);
        for i in 0..bsz {
            for j in 0..db {
                gb[i * db + j] += g[i * w + da + j];
            }
        }
    }
}

pub(crate) fn col_affine_backward(grads: &mut Grads, g: &[f64], x: Var, scale: &[f64]) {
    if !grads.wants(x) {
        return;
    }
    let d = scale.len();
    let dx = grads.slot(x);
    for (i, v) in g.iter().enumerate() {
        dx[i] += v * scale[i % d];
    }
}
