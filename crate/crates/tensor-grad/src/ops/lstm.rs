//! One LSTM layer run over a whole batch of sequences as a single tape node.
//!
//! Gate layout along the `4H` axis is `[input, forget, cell, output]`:
//!
//! ```text
//! i = sigmoid(W_ii x + W_hi h + b_i)      g = tanh(W_ig x + W_hg h + b_g)
//! f = sigmoid(W_if x + W_hf h + b_f)      o = sigmoid(W_io x + W_ho h + b_o)
//! c' = f * c + i * g                      h' = o * tanh(c')
//! ```
//!
//! with `h = c = 0` before the first step.

use crate::error::{shape_err, Result};
use crate::gemm::gemm;
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Tape {
    /// Shapes: `x: [B, T, D]`, `w_ih: [4H, D]`, `w_hh: [4H, H]`, `b: [4H]`; returns the
    /// hidden sequence `[B, T, H]`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(shape_err("lstm", format!("input must be [B, T, D], got {xs:?}")));
        }
        let (bsz, steps, d) = (xs[0], xs[1], xs[2]);
        let wih = self.shape(w_ih);
        if wih.len() != 2 || wih[0] % 4 != 0 || wih[1] != d {
            return Err(shape_err(
                "lstm",
                format!("input weights must be [4H, {d}], got {wih:?}"),
            ));
        }
        let h = wih[0] / 4;
        let g4 = 4 * h;
        if self.shape(w_hh) != [g4, h] {
            return Err(shape_err(
                "lstm",
                format!("recurrent weights must be [{g4}, {h}], got {:?}", self.shape(w_hh)),
            ));
        }
        if self.shape(b) != [g4] {
            return Err(shape_err(
                "lstm",
                format!("bias must be [{g4}], got {:?}", self.shape(b)),
            ));
        }
        if steps == 0 {
            return Err(shape_err("lstm", "time axis is empty"));
        }

        let xd = self.value(x).data();
        let wih = self.value(w_ih).data();
        let whh = self.value(w_hh).data();
        let bd = self.value(b).data();

        let rows = bsz * steps;
        let mut gates = vec![0.0; rows * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(bd);
        }
        gemm(rows, d, g4, xd, (d, 1), wih, (1, d), 1.0, &mut gates, (g4, 1));

        let mut hs = vec![0.0; rows * h];
        let mut cells = vec![0.0; rows * h];
        let mut tanh_c = vec![0.0; rows * h];
        for t in 0..steps {
            if t > 0 {
                gemm(
                    bsz,
                    h,
                    g4,
                    &hs[(t - 1) * h..],
                    (steps * h, 1),
                    whh,
                    (1, h),
                    1.0,
                    &mut gates[t * g4..],
                    (steps * g4, 1),
                );
            }
            for bi in 0..bsz {
                let go = (bi * steps + t) * g4;
                let ho = (bi * steps + t) * h;
                let gate = &mut gates[go..go + g4];
                for j in 0..h {
                    let i = sigmoid(gate[j]);
                    let f = sigmoid(gate[h + j]);
                    let gg = gate[2 * h + j].tanh();
                    let o = sigmoid(gate[3 * h + j]);
                    gate[j] = i;
                    gate[h + j] = f;
                    gate[2 * h + j] = gg;
                    gate[3 * h + j] = o;
                    let c_prev = if t > 0 { cells[ho - h + j] } else { 0.0 };
                    let c = f * c_prev + i * gg;
                    let th = c.tanh();
                    cells[ho + j] = c;
                    tanh_c[ho + j] = th;
                    hs[ho + j] = o * th;
                }
            }
        }
        let value = Tensor::new(&[bsz, steps, h], hs)?;
        Ok(self.push(
            value,
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                b,
                gates,
                cells,
                tanh_c,
            },
            &[x, w_ih, w_hh, b],
        ))
    }

    /// Stacked LSTM: each `(w_ih, w_hh, b)` layer consumes the previous layer's
    /// hidden sequence; returns the top layer's hidden sequence.
    pub fn lstm_stack(&mut self, x: Var, layers: &[(Var, Var, Var)]) -> Result<Var> {
        layers
            .iter()
            .try_fold(x, |inp, &(w_ih, w_hh, b)| self.lstm(inp, w_ih, w_hh, b))
    }
}

pub(crate) struct Saved<'a> {
    pub x: Var,
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
    /// Activated gates `[B, T, 4H]`.
    pub gates: &'a [f64],
    pub cells: &'a [f64],
    pub tanh_c: &'a [f64],
    /// Hidden outputs `[B, T, H]`.
    pub hs: &'a [f64],
}

pub(crate) fn backward(grads: &mut Grads, g: &[f64], s: Saved) {
    let xs = grads.value(s.x).shape();
    let (bsz, steps, d) = (xs[0], xs[1], xs[2]);
    let h = grads.value(s.w_hh).shape()[1];
    let g4 = 4 * h;
    let rows = bsz * steps;
    let whh = grads.value(s.w_hh).data();

    let mut dgates = vec![0.0; rows * g4];
    let mut dh_next = vec![0.0; bsz * h];
    let mut dc_next = vec![0.0; bsz * h];
    for t in (0..steps).rev() {
        for bi in 0..bsz {
            let go = (bi * steps + t) * g4;
            let ho = (bi * steps + t) * h;
            let gate = &s.gates[go..go + g4];
            let dgate = &mut dgates[go..go + g4];
            for j in 0..h {
                let (i, f, gg, o) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
                let th = s.tanh_c[ho + j];
                let dh = g[ho + j] + dh_next[bi * h + j];
                let dc = dh * o * (1.0 - th * th) + dc_next[bi * h + j];
                let c_prev = if t > 0 { s.cells[ho - h + j] } else { 0.0 };
                dgate[j] = dc * gg * i * (1.0 - i);
                dgate[h + j] = dc * c_prev * f * (1.0 - f);
                dgate[2 * h + j] = dc * i * (1.0 - gg * gg);
                dgate[3 * h + j] = dh * th * o * (1.0 - o);
                dc_next[bi * h + j] = dc * f;
            }
        }
        if t > 0 {
            gemm(
                bsz,
                g4,
                h,
                &dgates[t * g4..],
                (steps * g4, 1),
                whh,
                (h, 1),
                0.0,
                &mut dh_next,
                (h, 1),
            );
        }
    }

    if grads.wants(s.w_ih) {
        let xd = grads.value(s.x).data();
        gemm(g4, rows, d, &dgates, (1, g4), xd, (d, 1), 1.0, grads.slot(s.w_ih), (d, 1));
    }
    if grads.wants(s.w_hh) && steps > 1 {
        // h_{t-1} aligned with step t, zero at t = 0
        let mut h_prev = vec![0.0; rows * h];
        for bi in 0..bsz {
            let base = bi * steps * h;
            h_prev[base + h..base + steps * h].copy_from_slice(&s.hs[base..base + (steps - 1) * h]);
        }
        gemm(g4, rows, h, &dgates, (1, g4), &h_prev, (h, 1), 1.0, grads.slot(s.w_hh), (h, 1));
    }
    if grads.wants(s.b) {
        let db = grads.slot(s.b);
        for row in dgates.chunks_exact(g4) {
            for (a, v) in db.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    if grads.wants(s.x) {
        let wih = grads.value(s.w_ih).data();
        gemm(rows, g4, d, &dgates, (g4, 1), wih, (d, 1), 1.0, grads.slot(s.x), (d, 1));
    }
}
