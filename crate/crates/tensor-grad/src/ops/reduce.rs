use crate::error::{shape_err, Error, Result};
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// Sum of all elements.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let s = self.value(x).data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum { x }, &[x]))
    }

    /// `sum_i c_i x_i` against a fixed tensor `c` of the same shape.
    pub fn dot_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        self.check_live()?;
        if self.shape(x) != c.shape() {
            return Err(shape_err(
                "dot",
                format!("{:?} vs {:?}", self.shape(x), c.shape()),
            ));
        }
        let s = self.value(x).data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
        Ok(self.push(
            Tensor::scalar(s),
            Op::Dot {
                x,
                c: c.data().to_vec(),
            },
            &[x],
        ))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a), out)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check_live()?;
        let src = self.value(x);
        let value = Tensor::new(src.shape(), src.data().iter().map(|v| v * c).collect())?;
        Ok(self.push(value, Op::Scale { x, c }, &[x]))
    }

    /// Batch mean of `sum_i w_i |pred_i - target_i|` for `pred, target: [B, M]`.
    ///
    /// The subgradient at an exact tie is 0.
    pub fn weighted_l1(&mut self, pred: Var, target: &Tensor, weights: &[f64]) -> Result<Var> {
        self.check_live()?;
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be positive, got {w}"
            )));
        }
        let ps = self.shape(pred);
        if ps.len() != 2 || ps != target.shape() || ps[1] != weights.len() {
            return Err(shape_err(
                "weighted_l1",
                format!(
                    "prediction {ps:?}, target {:?}, {} weights",
                    target.shape(),
                    weights.len()
                ),
            ));
        }
        let (bsz, m) = (ps[0], ps[1]);
        let loss = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .enumerate()
            .map(|(i, (p, t))| weights[i % m] * (p - t).abs())
            .sum::<f64>()
            / bsz as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedL1 {
                pred,
                target: target.data().to_vec(),
                weights: weights.to_vec(),
            },
            &[pred],
        ))
    }
}

pub(crate) fn sum_backward(grads: &mut Grads, g: &[f64], x: Var) {
    if grads.wants(x) {
        grads.slot(x).iter_mut().for_each(|v| *v += g[0]);
    }
}

pub(crate) fn dot_backward(grads: &mut Grads, g: &[f64], x: Var, c: &[f64]) {
    if grads.wants(x) {
        for (d, cv) in grads.slot(x).iter_mut().zip(c) {
            *d += g[0] * cv;
        }
    }
}

pub(crate) fn add_backward(grads: &mut Grads, g: &[f64], a: Var, b: Var) {
    for v in [a, b] {
        if grads.wants(v) {
            for (d, gv) in grads.slot(v).iter_mut().zip(g) {
                *d += gv;
            }
        }
    }
}

pub(crate) fn scale_backward(grads: &mut Grads, g: &[f64], x: Var, c: f64) {
    if grads.wants(x) {
        for (d, gv) in grads.slot(x).iter_mut().zip(g) {
            *d += c * gv;
        }
    }
}

pub(crate) fn weighted_l1_backward(grads: &mut Grads, g: &[f64], pred: Var, target: &[f64], weights: &[f64]) {
    if !grads.wants(pred) {
        return;
    }
    let m = weights.len();
    let bsz = target.len() / m;
    let pd = grads.value(pred).data();
    let dp = grads.slot(pred);
    for i in 0..dp.len() {
        let diff = pd[i] - target[i];
        let s = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        dp[i] += g[0] * weights[i % m] * s / bsz as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_l1_example() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::new(&[1, 2], vec![1.0, -2.0]).unwrap());
        let t = Tensor::zeros(&[1, 2]);
        let l = tape.weighted_l1(p, &t, &[1.0, 0.5]).unwrap();
        assert_eq!(tape.value(l).item(), Some(2.0));
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(p).unwrap().data(), &[1.0, -0.5]);
    }

    #[test]
    fn weighted_l1_averages_over_batch_and_ties_have_zero_slope() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::new(&[2, 1], vec![3.0, 5.0]).unwrap());
        let t = Tensor::new(&[2, 1], vec![3.0, 1.0]).unwrap();
        let l = tape.weighted_l1(p, &t, &[2.0]).unwrap();
        assert_eq!(tape.value(l).item(), Some(4.0));
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(p).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn weighted_l1_rejects_bad_weights() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::zeros(&[1, 2]));
        let t = Tensor::zeros(&[1, 2]);
        assert!(matches!(tape.weighted_l1(p, &t, &[1.0, 0.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(tape.weighted_l1(p, &t, &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[2, 3], vec![1.0; 6]).unwrap());
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn shared_input_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.scale(x, 3.0).unwrap();
        let z = tape.add(x, y).unwrap();
        let s = tape.sum(z).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn tape_is_single_use_and_needs_scalar_root() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.leaf(Tensor::vector(vec![5.0]));
        assert!(matches!(tape.backward(x), Err(Error::InvalidArgument(_))));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(unused).unwrap().data(), &[0.0]);
        assert!(matches!(tape.backward(s), Err(Error::TapeConsumed)));
        assert!(matches!(tape.sum(x), Err(Error::TapeConsumed)));
    }
}
