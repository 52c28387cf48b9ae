//! Same-length 1-D cross-correlation on `(batch, length, channels)` tensors.

use crate::error::{shape_err, Error, Result};
use crate::gemm::gemm;
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// `y[b, l, o] = bias[o] + sum_{c, t} w[o, c, t] x[b, l + t - (k-1)/2, c]`,
    /// with zero padding so that the output keeps length `L`.
    ///
    /// Shapes: `x: [B, L, C_in]`, `w: [C_out, C_in, k]` (k odd), `bias: [C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        self.check_live()?;
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 3 {
            return Err(shape_err("conv1d", format!("input must be [B, L, C], got {xs:?}")));
        }
        if ws.len() != 3 {
            return Err(shape_err("conv1d", format!("kernel must be [C_out, C_in, k], got {ws:?}")));
        }
        let (bsz, len, cin) = (xs[0], xs[1], xs[2]);
        let (cout, wcin, k) = (ws[0], ws[1], ws[2]);
        if wcin != cin {
            return Err(shape_err(
                "conv1d",
                format!("channel axis: input has {cin} channels, kernel expects {wcin}"),
            ));
        }
        if k % 2 == 0 {
            return Err(shape_err("conv1d", format!("kernel axis: width {k} must be odd")));
        }
        if self.shape(bias) != [cout] {
            return Err(shape_err(
                "conv1d",
                format!("bias axis: expected [{cout}], got {:?}", self.shape(bias)),
            ));
        }
        if len == 0 {
            return Err(Error::Shape {
                op: "conv1d",
                msg: "length axis is empty".into(),
            });
        }
        let pad = (k - 1) / 2;
        let lp = len + k - 1;
        let xd = self.value(x).data();
        let mut padded = vec![0.0; bsz * lp * cin];
        for b in 0..bsz {
            let src = &xd[b * len * cin..(b + 1) * len * cin];
            let dst = b * lp * cin + pad * cin;
            padded[dst..dst + len * cin].copy_from_slice(src);
        }
        let wd = self.value(w).data();
        let kc = k * cin;
        let mut wt = vec![0.0; kc * cout];
        for o in 0..cout {
            for c in 0..cin {
                for t in 0..k {
                    wt[(t * cin + c) * cout + o] = wd[(o * cin + c) * k + t];
                }
            }
        }
        let bd = self.value(bias).data();
        let mut out = vec![0.0; bsz * len * cout];
        for b in 0..bsz {
            let y = &mut out[b * len * cout..(b + 1) * len * cout];
            for row in y.chunks_exact_mut(cout) {
                row.copy_from_slice(bd);
            }
            // overlapping rows: row l of the im2col matrix starts at l * C_in
            gemm(
                len,
                kc,
                cout,
                &padded[b * lp * cin..(b + 1) * lp * cin],
                (cin, 1),
                &wt,
                (cout, 1),
                1.0,
                y,
                (cout, 1),
            );
        }
        let value = Tensor::new(&[bsz, len, cout], out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                x,
                w,
                b: bias,
                padded,
                wt,
            },
            &[x, w, bias],
        ))
    }
}

pub(crate) fn backward(
    grads: &mut Grads,
    g: &[f64],
    x: Var,
    w: Var,
    bias: Var,
    padded: &[f64],
    wt: &[f64],
) {
    let xs = grads.value(x).shape();
    let (bsz, len, cin) = (xs[0], xs[1], xs[2]);
    let ws = grads.value(w).shape();
    let (cout, k) = (ws[0], ws[2]);
    let pad = (k - 1) / 2;
    let lp = len + k - 1;
    let kc = k * cin;

    if grads.wants(bias) {
        let db = grads.slot(bias);
        for row in g.chunks_exact(cout) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
    }

    if grads.wants(w) {
        let mut dwt = vec![0.0; kc * cout];
        for b in 0..bsz {
            gemm(
                kc,
                len,
                cout,
                &padded[b * lp * cin..(b + 1) * lp * cin],
                (1, cin),
                &g[b * len * cout..(b + 1) * len * cout],
                (cout, 1),
                1.0,
                &mut dwt,
                (cout, 1),
            );
        }
        let dw = grads.slot(w);
        for o in 0..cout {
            for c in 0..cin {
                for t in 0..k {
                    dw[(o * cin + c) * k + t] += dwt[(t * cin + c) * cout + o];
                }
            }
        }
    }

    if grads.wants(x) {
        let mut cols = vec![0.0; len * kc];
        let dx = grads.slot(x);
        for b in 0..bsz {
            gemm(
                len,
                cout,
                kc,
                &g[b * len * cout..(b + 1) * len * cout],
                (cout, 1),
                wt,
                (1, cout),
                0.0,
                &mut cols,
                (kc, 1),
            );
            let dxb = &mut dx[b * len * cin..(b + 1) * len * cin];
            for l in 0..len {
                for t in 0..k {
                    let src = l + t;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    let dst = (src - pad) * cin;
                    let from = l * kc + t * cin;
                    for c in 0..cin {
                        dxb[dst + c] += cols[from + c];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: &[f64], len: usize, cin: usize, w: Tensor, b: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[1, len, cin], x.to_vec()).unwrap());
        let w = tape.constant(w);
        let b = tape.constant(Tensor::vector(b));
        let y = tape.conv1d(x, w, b).unwrap();
        tape.value(y).data().to_vec()
    }

    #[test]
    fn ones_kernel_sums_neighbours() {
        let w = Tensor::new(&[1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(run(&[1.0, 2.0, 3.0], 3, 1, w, vec![0.0]), vec![3.0, 6.0, 5.0]);
    }

    #[test]
    fn identity_kernel_and_bias() {
        let w = Tensor::new(&[1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(run(&[4.0, -1.0, 2.5, 7.0], 4, 1, w, vec![0.5]), vec![4.5, -0.5, 3.0, 7.5]);
    }

    #[test]
    fn kernel_orientation_is_cross_correlation() {
        // w[t] multiplies x[l + t - 1]
        let w = Tensor::new(&[1, 1, 3], vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(run(&[1.0, 2.0, 3.0], 3, 1, w, vec![0.0]), vec![2.0, 3.0, 0.0]);
    }

    #[test]
    fn mixes_input_channels() {
        // two input channels, out = x0 + 10 * x1 at the centre tap
        let w = Tensor::new(&[1, 2, 1], vec![1.0, 10.0]).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(run(&x, 2, 2, w, vec![0.0]), vec![21.0, 43.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 5, 2]));
        let even = tape.constant(Tensor::zeros(&[1, 2, 2]));
        let wrong_c = tape.constant(Tensor::zeros(&[1, 3, 3]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(matches!(tape.conv1d(x, even, b), Err(Error::Shape { .. })));
        assert!(matches!(tape.conv1d(x, wrong_c, b), Err(Error::Shape { .. })));
    }
}
