use crate::error::{shape_err, Error, Result};
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

/// Output length of a pooling window sweep.
pub fn pooled_len(len: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || len < window {
        return None;
    }
    Some((len - window) / stride + 1)
}

impl Tape {
    /// Max over windows of the length axis of `x: [B, L, C]`.
    ///
    /// Ties route the gradient to the first maximal position.
    pub fn maxpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        self.check_live()?;
        if window == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "pool window and stride must be >= 1, got {window}, {stride}"
            )));
        }
        let xs = self.shape(x);
        if xs.len() != 3 {
            return Err(shape_err("maxpool1d", format!("input must be [B, L, C], got {xs:?}")));
        }
        let (bsz, len, ch) = (xs[0], xs[1], xs[2]);
        let out_len = pooled_len(len, window, stride).ok_or_else(|| {
            shape_err("maxpool1d", format!("length axis {len} shorter than window {window}"))
        })?;
        let xd = self.value(x).data();
        let mut out = vec![0.0; bsz * out_len * ch];
        let mut argmax = vec![0usize; out.len()];
        for b in 0..bsz {
            for p in 0..out_len {
                let start = p * stride;
                let o = (b * out_len + p) * ch;
                for c in 0..ch {
                    let mut best = (b * len + start) * ch + c;
                    for t in 1..window {
                        let idx = (b * len + start + t) * ch + c;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    out[o + c] = xd[best];
                    argmax[o + c] = best;
                }
            }
        }
        let value = Tensor::new(&[bsz, out_len, ch], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }
}

pub(crate) fn backward(grads: &mut Grads, g: &[f64], x: Var, argmax: &[usize]) {
    if !grads.wants(x) {
        return;
    }
    let dx = grads.slot(x);
    for (&i, &v) in argmax.iter().zip(g) {
        dx[i] += v;
    }
}
