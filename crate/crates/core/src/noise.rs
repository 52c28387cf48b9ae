//! Samplers for the driving-noise increment laws.
//!
//! * Gaussian: `W(t+u) - W(t) ~ N(0, u)`.
//! * Symmetric alpha-stable: characteristic function `exp(-scale^alpha |u|^alpha)`,
//!   drawn with the Chambers-Mallows-Stuck transform; increments over `dt` are
//!   `S_alpha(dt^(1/alpha))`.
//! * Student-Levy: `J(1) ~ t(nu)`. The law of `J(dt)` for `dt != 1` has no closed
//!   form; increments are approximated as `dt * T` with `T ~ t(nu)`, which is exact
//!   at `dt = 1` and has the linear-in-`dt` Cauchy-like scaling at small `dt`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};

use crate::error::{invalid, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Gaussian,
    AlphaStable { alpha: f64 },
    StudentLevy { nu: f64 },
}

impl NoiseKind {
    pub fn alpha_stable(alpha: f64) -> Result<Self> {
        let k = NoiseKind::AlphaStable { alpha };
        k.validate()?;
        Ok(k)
    }

    pub fn student_levy(nu: f64) -> Result<Self> {
        let k = NoiseKind::StudentLevy { nu };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Gaussian => Ok(()),
            NoiseKind::AlphaStable { alpha } => check_alpha(alpha),
            NoiseKind::StudentLevy { nu } => check_nu(nu),
        }
    }

    /// The shape parameter carried by the law, if any (alpha or nu).
    pub fn shape(&self) -> Option<f64> {
        match *self {
            NoiseKind::Gaussian => None,
            NoiseKind::AlphaStable { alpha } => Some(alpha),
            NoiseKind::StudentLevy { nu } => Some(nu),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(invalid(format!("stability index must lie in (0, 2], got {alpha}")))
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("degrees of freedom must be > 0, got {nu}")))
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("time step must be > 0, got {dt}")))
    }
}

#[inline]
fn standard_normal(rng: &mut SeededRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from N(0, dt).
pub fn sample_gaussian_increment(rng: &mut SeededRng, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    Ok(dt.sqrt() * standard_normal(rng))
}

/// Chambers-Mallows-Stuck draw from the standard symmetric stable law S_alpha(1).
/// Caller guarantees `0 < alpha < 2`.
#[inline]
fn cms_standard(rng: &mut SeededRng, alpha: f64) -> f64 {
    let v = PI * rng.open01() - FRAC_PI_2;
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    let cos_v = v.cos();
    let a = (alpha * v).sin() / cos_v.powf(1.0 / alpha);
    let b = ((v - alpha * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Draw from the symmetric alpha-stable law with characteristic function
/// `exp(-scale^alpha |u|^alpha)`.
pub fn sample_alpha_stable(rng: &mut SeededRng, alpha: f64, scale: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid(format!("scale must be > 0, got {scale}")));
    }
    Ok(alpha_stable_unchecked(rng, alpha, scale))
}

#[inline]
fn alpha_stable_unchecked(rng: &mut SeededRng, alpha: f64, scale: f64) -> f64 {
    if alpha == 2.0 {
        scale * std::f64::consts::SQRT_2 * standard_normal(rng)
    } else {
        scale * cms_standard(rng, alpha)
    }
}

/// Algorithm used for Student-t variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TSampler {
    /// `Z / sqrt(chi2(nu) / nu)`.
    #[default]
    Ratio,
    /// Bailey's polar rejection method.
    PolarRejection,
}

/// Draw from the Student-t law with `nu` degrees of freedom (location 0, unit scale).
pub fn sample_student_t(rng: &mut SeededRng, nu: f64) -> Result<f64> {
    sample_student_t_with(rng, nu, TSampler::Ratio)
}

pub fn sample_student_t_with(rng: &mut SeededRng, nu: f64, method: TSampler) -> Result<f64> {
    check_nu(nu)?;
    Ok(match method {
        TSampler::Ratio => {
            let chi = ChiSquared::new(nu).map_err(|e| invalid(e.to_string()))?;
            student_ratio(rng, nu, &chi)
        }
        TSampler::PolarRejection => student_polar(rng, nu),
    })
}

#[inline]
fn student_ratio(rng: &mut SeededRng, nu: f64, chi: &ChiSquared<f64>) -> f64 {
    let z = standard_normal(rng);
    let c: f64 = chi.sample(rng);
    z / (c / nu).sqrt()
}

fn student_polar(rng: &mut SeededRng, nu: f64) -> f64 {
    loop {
        let u = 2.0 * rng.open01() - 1.0;
        let v = 2.0 * rng.open01() - 1.0;
        let w = u * u + v * v;
        if w < 1.0 && w > 0.0 {
            let c2 = u * u / w;
            let r2 = nu * (w.powf(-2.0 / nu) - 1.0);
            let t = (c2 * r2).sqrt();
            return if u < 0.0 { -t } else { t };
        }
    }
}

/// Increment sampler for a fixed `(kind, dt)`, with per-law constants cached.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    law: Law,
}

#[derive(Debug, Clone)]
enum Law {
    Gaussian { sd: f64 },
    Stable { alpha: f64, scale: f64 },
    Student { nu: f64, dt: f64, chi: ChiSquared<f64>, method: TSampler },
}

impl IncrementSampler {
    pub fn new(kind: NoiseKind, dt: f64) -> Result<Self> {
        Self::with_t_sampler(kind, dt, TSampler::Ratio)
    }

    pub fn with_t_sampler(kind: NoiseKind, dt: f64, method: TSampler) -> Result<Self> {
        check_dt(dt)?;
        kind.validate()?;
        let law = match kind {
            NoiseKind::Gaussian => Law::Gaussian { sd: dt.sqrt() },
            NoiseKind::AlphaStable { alpha } => Law::Stable {
                alpha,
                scale: dt.powf(1.0 / alpha),
            },
            NoiseKind::StudentLevy { nu } => Law::Student {
                nu,
                dt,
                chi: ChiSquared::new(nu).map_err(|e| invalid(e.to_string()))?,
                method,
            },
        };
        Ok(Self { law })
    }

    #[inline]
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match &self.law {
            Law::Gaussian { sd } => sd * standard_normal(rng),
            Law::Stable { alpha, scale } => alpha_stable_unchecked(rng, *alpha, *scale),
            Law::Student { nu, dt, chi, method } => {
                let t = match method {
                    TSampler::Ratio => student_ratio(rng, *nu, chi),
                    TSampler::PolarRejection => student_polar(rng, *nu),
                };
                dt * t
            }
        }
    }
}

/// One increment of the driving noise over a step of length `dt`.
pub fn sample_increment(rng: &mut SeededRng, kind: NoiseKind, dt: f64) -> Result<f64> {
    Ok(IncrementSampler::new(kind, dt)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(n: usize, mut f: impl FnMut() -> f64) -> Vec<f64> {
        (0..n).map(|_| f()).collect()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut r = SeededRng::new(0);
        assert!(sample_gaussian_increment(&mut r, 0.0).is_err());
        assert!(sample_gaussian_increment(&mut r, -1.0).is_err());
        assert!(sample_alpha_stable(&mut r, 0.0, 1.0).is_err());
        assert!(sample_alpha_stable(&mut r, 2.1, 1.0).is_err());
        assert!(sample_alpha_stable(&mut r, 1.5, 0.0).is_err());
        assert!(sample_student_t(&mut r, 0.0).is_err());
        assert!(sample_student_t(&mut r, -3.0).is_err());
        assert!(sample_increment(&mut r, NoiseKind::Gaussian, 0.0).is_err());
        assert!(NoiseKind::alpha_stable(0.0).is_err());
        assert!(NoiseKind::alpha_stable(2.0).is_ok());
        assert!(NoiseKind::student_levy(0.0).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut r = SeededRng::new(11);
        let xs = draws(1_000_000, || sample_gaussian_increment(&mut r, 1.0).unwrap());
        let (m, _) = mean_var(&xs);
        assert!(m.abs() < 0.005, "mean {m}");
        let xs = draws(1_000_000, || sample_gaussian_increment(&mut r, 4.0).unwrap());
        let (_, v) = mean_var(&xs);
        assert!((v - 4.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn gaussian_increment_variance() {
        let mut r = SeededRng::new(5);
        let xs = draws(1_000_000, || {
            sample_increment(&mut r, NoiseKind::Gaussian, 0.25).unwrap()
        });
        let (_, v) = mean_var(&xs);
        assert!((v - 0.25).abs() < 0.005, "var {v}");
    }

    #[test]
    fn stable_alpha_two_variance() {
        let mut r = SeededRng::new(12);
        let xs = draws(1_000_000, || sample_alpha_stable(&mut r, 2.0, 1.0).unwrap());
        let (_, v) = mean_var(&xs);
        assert!((v - 2.0).abs() < 0.03, "var {v}");
    }

    #[test]
    fn cms_at_two_matches_gaussian_formula() {
        // the CMS transform itself collapses to 2 sin(V) sqrt(W) at alpha = 2
        let mut r = SeededRng::new(13);
        let xs = draws(400_000, || cms_standard(&mut r, 1.999_999));
        let (_, v) = mean_var(&xs);
        assert!((v - 2.0).abs() < 0.1, "var {v}");
    }

    #[test]
    fn student_variance_nu4() {
        let mut r = SeededRng::new(14);
        let xs = draws(1_000_000, || sample_student_t(&mut r, 4.0).unwrap());
        let (_, v) = mean_var(&xs);
        assert!((v - 2.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn student_backends_agree_on_variance() {
        let mut r = SeededRng::new(15);
        let xs = draws(1_000_000, || {
            sample_student_t_with(&mut r, 5.0, TSampler::PolarRejection).unwrap()
        });
        let (_, v) = mean_var(&xs);
        assert!((v - 5.0 / 3.0).abs() < 0.04, "var {v}");
    }

    #[test]
    fn student_increment_is_dt_scaled() {
        let s = IncrementSampler::new(NoiseKind::StudentLevy { nu: 3.0 }, 0.5).unwrap();
        let mut a = SeededRng::new(3);
        let mut b = SeededRng::new(3);
        let x = s.sample(&mut a);
        let t = sample_student_t(&mut b, 3.0).unwrap();
        assert_eq!(x, 0.5 * t);
    }

    #[test]
    fn deterministic_given_seed() {
        for kind in [
            NoiseKind::Gaussian,
            NoiseKind::AlphaStable { alpha: 1.3 },
            NoiseKind::StudentLevy { nu: 2.5 },
        ] {
            let mut a = SeededRng::new(99);
            let mut b = SeededRng::new(99);
            for _ in 0..100 {
                assert_eq!(
                    sample_increment(&mut a, kind, 0.1).unwrap().to_bits(),
                    sample_increment(&mut b, kind, 0.1).unwrap().to_bits()
                );
            }
        }
    }
}
