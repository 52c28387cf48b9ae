//! SDE families, their parameter ranges and packaged parameter vectors.

use crate::error::{invalid, Result};
use crate::noise::NoiseKind;
use crate::rng::SeededRng;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(invalid(format!(
                "{name} range [{}, {}] is not a valid interval",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Which driving noise a family uses. Also the on-disk tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    Gaussian,
    AlphaStable,
    StudentLevy,
}

impl NoiseFamily {
    pub fn tag(self) -> u8 {
        match self {
            NoiseFamily::Gaussian => 0,
            NoiseFamily::AlphaStable => 1,
            NoiseFamily::StudentLevy => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(NoiseFamily::Gaussian),
            1 => Some(NoiseFamily::AlphaStable),
            2 => Some(NoiseFamily::StudentLevy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::AlphaStable => "alpha-stable",
            NoiseFamily::StudentLevy => "student",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Some(NoiseFamily::Gaussian),
            "alpha-stable" | "alpha_stable" | "stable" | "alpha" => Some(NoiseFamily::AlphaStable),
            "student" | "student-levy" | "student_levy" | "t" => Some(NoiseFamily::StudentLevy),
            _ => None,
        }
    }

    /// Number of estimated parameters.
    pub fn param_dim(self) -> usize {
        match self {
            NoiseFamily::Gaussian => 2,
            _ => 3,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            NoiseFamily::Gaussian => &["eta", "epsilon"],
            NoiseFamily::AlphaStable => &["eta", "epsilon", "alpha"],
            NoiseFamily::StudentLevy => &["eta", "epsilon", "nu"],
        }
    }
}

/// OU family `dX = -eta X dt + epsilon dL` together with its sampling ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeFamily {
    pub noise: NoiseFamily,
    pub eta: Range,
    pub epsilon: Range,
    /// alpha or nu range; `None` for the Gaussian family.
    pub shape: Option<Range>,
    /// Spanning time T.
    pub span: Range,
    /// Inclusive bounds on the path length N.
    pub length: (u32, u32),
}

impl SdeFamily {
    pub fn gaussian() -> Self {
        Self {
            noise: NoiseFamily::Gaussian,
            eta: Range::new(0.0, 5.0),
            epsilon: Range::new(0.0, 0.05),
            shape: None,
            span: Range::new(5.0, 15.0),
            length: (3000, 4000),
        }
    }

    pub fn alpha_stable() -> Self {
        Self {
            noise: NoiseFamily::AlphaStable,
            shape: Some(Range::new(1.01, 2.0)),
            ..Self::gaussian()
        }
    }

    pub fn student() -> Self {
        Self {
            noise: NoiseFamily::StudentLevy,
            shape: Some(Range::new(2.01, 4.0)),
            span: Range::new(3.0, 15.0),
            ..Self::gaussian()
        }
    }

    pub fn for_noise(noise: NoiseFamily) -> Self {
        match noise {
            NoiseFamily::Gaussian => Self::gaussian(),
            NoiseFamily::AlphaStable => Self::alpha_stable(),
            NoiseFamily::StudentLevy => Self::student(),
        }
    }

    pub fn with_length(mut self, lo: u32, hi: u32) -> Self {
        self.length = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.eta.validate("eta")?;
        self.epsilon.validate("epsilon")?;
        if self.epsilon.lo < 0.0 {
            return Err(invalid("epsilon range must be non-negative"));
        }
        self.span.validate("T")?;
        if self.span.lo <= 0.0 {
            return Err(invalid("spanning time must be positive"));
        }
        if self.length.0 > self.length.1 {
            return Err(invalid(format!(
                "length range [{}, {}] is not a valid interval",
                self.length.0, self.length.1
            )));
        }
        if self.length.0 < 2 {
            return Err(invalid("length lower bound must be >= 2"));
        }
        match (self.noise, self.shape) {
            (NoiseFamily::Gaussian, None) => {}
            (NoiseFamily::Gaussian, Some(_)) => {
                return Err(invalid("gaussian family carries no shape range"))
            }
            (_, None) => return Err(invalid("family requires a shape range")),
            (NoiseFamily::AlphaStable, Some(r)) => {
                r.validate("alpha")?;
                if r.lo <= 0.0 || r.hi > 2.0 {
                    return Err(invalid("alpha range must lie in (0, 2]"));
                }
            }
            (NoiseFamily::StudentLevy, Some(r)) => {
                r.validate("nu")?;
                if r.lo <= 0.0 {
                    return Err(invalid("nu range must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn param_dim(&self) -> usize {
        self.noise.param_dim()
    }

    /// Parameter ranges in output order `[eta, epsilon, (alpha|nu)]`.
    pub fn param_ranges(&self) -> Vec<Range> {
        let mut r = vec![self.eta, self.epsilon];
        r.extend(self.shape);
        r
    }

    /// Draw Θ, T and N independently and uniformly; returns `(theta, N, h = T/N)`.
    pub fn sample_parameters(&self, rng: &mut SeededRng) -> Result<(ParamVector, usize, f64)> {
        self.validate()?;
        let eta = rng.uniform(self.eta.lo, self.eta.hi);
        let epsilon = rng.uniform(self.epsilon.lo, self.epsilon.hi);
        let noise_param = self.shape.map(|r| rng.uniform(r.lo, r.hi));
        let t = rng.uniform(self.span.lo, self.span.hi);
        let n = rng.uniform_int(self.length.0 as u64, self.length.1 as u64) as usize;
        Ok((
            ParamVector {
                eta,
                epsilon,
                noise_param,
            },
            n,
            t / n as f64,
        ))
    }

    /// The centre of every parameter range.
    pub fn midpoint(&self) -> ParamVector {
        ParamVector {
            eta: self.eta.mid(),
            epsilon: self.epsilon.mid(),
            noise_param: self.shape.map(|r| r.mid()),
        }
    }
}

/// Packaged parameter `[eta, epsilon, (alpha|nu)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector {
    pub eta: f64,
    pub epsilon: f64,
    pub noise_param: Option<f64>,
}

impl ParamVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.eta, self.epsilon];
        v.extend(self.noise_param);
        v
    }

    pub fn from_slice(noise: NoiseFamily, v: &[f64]) -> Result<Self> {
        if v.len() != noise.param_dim() {
            return Err(invalid(format!(
                "{} family expects {} parameters, got {}",
                noise.name(),
                noise.param_dim(),
                v.len()
            )));
        }
        Ok(Self {
            eta: v[0],
            epsilon: v[1],
            noise_param: v.get(2).copied(),
        })
    }

    /// The driving-noise law these parameters select.
    pub fn noise_kind(&self, family: NoiseFamily) -> Result<NoiseKind> {
        match (family, self.noise_param) {
            (NoiseFamily::Gaussian, _) => Ok(NoiseKind::Gaussian),
            (NoiseFamily::AlphaStable, Some(a)) => NoiseKind::alpha_stable(a),
            (NoiseFamily::StudentLevy, Some(nu)) => NoiseKind::student_levy(nu),
            (f, None) => Err(invalid(format!("{} family needs a shape parameter", f.name()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let g = SdeFamily::gaussian();
        assert_eq!(g.eta, Range::new(0.0, 5.0));
        assert_eq!(g.epsilon, Range::new(0.0, 0.05));
        assert_eq!(g.span, Range::new(5.0, 15.0));
        assert_eq!(g.length, (3000, 4000));
        assert_eq!(SdeFamily::alpha_stable().shape, Some(Range::new(1.01, 2.0)));
        let s = SdeFamily::student();
        assert_eq!(s.shape, Some(Range::new(2.01, 4.0)));
        assert_eq!(s.span, Range::new(3.0, 15.0));
        for f in [g, SdeFamily::alpha_stable(), s] {
            f.validate().unwrap();
        }
    }

    #[test]
    fn invalid_families_rejected() {
        let mut f = SdeFamily::gaussian();
        f.eta = Range::new(2.0, 1.0);
        assert!(f.validate().is_err());
        let f = SdeFamily::gaussian().with_length(1, 10);
        assert!(f.validate().is_err());
        let mut f = SdeFamily::alpha_stable();
        f.shape = Some(Range::new(1.0, 2.5));
        assert!(f.validate().is_err());
        let mut f = SdeFamily::student();
        f.shape = None;
        assert!(f.validate().is_err());
    }

    #[test]
    fn eta_draws_uniform_on_table_range() {
        let f = SdeFamily::gaussian();
        let mut rng = SeededRng::new(1);
        let n = 100_000;
        let mut sum = 0.0;
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..n {
            let (p, len, h) = f.sample_parameters(&mut rng).unwrap();
            sum += p.eta;
            lo = lo.min(p.eta);
            hi = hi.max(p.eta);
            assert!((3000..=4000).contains(&len));
            let t = h * len as f64;
            assert!(t >= 5.0 - 1e-9 && t <= 15.0 + 1e-9);
        }
        assert!((sum / n as f64 - 2.5).abs() < 0.02);
        assert!(lo >= 0.0 && hi <= 5.0);
    }

    #[test]
    fn point_ranges_are_exact() {
        let f = SdeFamily {
            noise: NoiseFamily::AlphaStable,
            eta: Range::new(1.25, 1.25),
            epsilon: Range::new(0.02, 0.02),
            shape: Some(Range::new(1.7, 1.7)),
            span: Range::new(8.0, 8.0),
            length: (500, 500),
        };
        let mut rng = SeededRng::new(2);
        for _ in 0..100 {
            let (p, n, h) = f.sample_parameters(&mut rng).unwrap();
            assert_eq!(p.eta, 1.25);
            assert_eq!(p.epsilon, 0.02);
            assert_eq!(p.noise_param, Some(1.7));
            assert_eq!(n, 500);
            assert_eq!(h, 8.0 / 500.0);
        }
    }

    #[test]
    fn alpha_draws_inside_range() {
        let f = SdeFamily::alpha_stable();
        let mut rng = SeededRng::new(3);
        for _ in 0..10_000 {
            let a = f.sample_parameters(&mut rng).unwrap().0.noise_param.unwrap();
            assert!((1.01..=2.0).contains(&a));
        }
    }

    #[test]
    fn midpoints() {
        let g = SdeFamily::gaussian().midpoint();
        assert_eq!((g.eta, g.epsilon), (2.5, 0.025));
        assert!((SdeFamily::alpha_stable().midpoint().noise_param.unwrap() - 1.505).abs() < 1e-15);
    }
}
