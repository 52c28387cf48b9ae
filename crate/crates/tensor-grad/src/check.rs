//! Central finite differences for checking reverse-mode gradients.

use crate::tensor::Tensor;

/// Numerical gradient of `f` at `x` with step `step`.
pub fn numeric_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, step: f64) -> Tensor {
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * step);
    }
    out
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)`.
pub fn max_rel_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "compared tensors differ in shape");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_derivative() {
        let x = Tensor::vector(vec![-1.0, 0.5, 2.0]);
        let g = numeric_grad(|t| t.data().iter().map(|v| v * v * v).sum(), &x, 1e-5);
        let exact = Tensor::vector(x.data().iter().map(|v| 3.0 * v * v).collect());
        assert!(max_rel_error(&g, &exact, 1e-8) < 1e-8);
    }
}
