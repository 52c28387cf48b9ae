//! Euler-Maruyama simulation of OU paths and bulk dataset generation.

use crate::error::{invalid, Error, Result};
use crate::family::{ParamVector, SdeFamily};
use crate::noise::{IncrementSampler, NoiseKind};
use crate::rng::{derive_seed, SeededRng};

/// An equally spaced observation record `x_1..x_N` with spacing `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub h: f64,
    pub x0: f64,
}

impl Trajectory {
    pub fn new(values: Vec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("observation spacing must be > 0, got {h}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at index {i}")));
        }
        let x0 = values.first().copied().unwrap_or(0.0);
        Ok(Self { values, h, x0 })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spanning time `T = N h`.
    pub fn span(&self) -> f64 {
        self.values.len() as f64 * self.h
    }
}

/// Euler-Maruyama path of `dX = -eta X dt + epsilon dL` with one step per observation.
///
/// `X[0] = x0`, `X[j+1] = X[j] - eta X[j] h + epsilon dL_j`, `dL_j` an increment of
/// `noise` over `h`.
pub fn simulate_ou(
    rng: &mut SeededRng,
    theta: &ParamVector,
    noise: NoiseKind,
    n: usize,
    h: f64,
    x0: f64,
) -> Result<Trajectory> {
    if n < 2 {
        return Err(invalid(format!("path length must be >= 2, got {n}")));
    }
    if !x0.is_finite() {
        return Err(invalid("initial state must be finite"));
    }
    let sampler = IncrementSampler::new(noise, h)?;
    let decay = 1.0 - theta.eta * h;
    let mut values = Vec::with_capacity(n);
    let mut x = x0;
    values.push(x);
    for step in 1..n {
        let dl = sampler.sample(rng);
        x = decay * x + theta.epsilon * dl;
        if !x.is_finite() {
            return Err(Error::SimulationDiverged { step });
        }
        values.push(x);
    }
    Ok(Trajectory { values, h, x0 })
}

/// How the initial state of each generated record is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum X0Policy {
    Uniform { lo: f64, hi: f64 },
    Fixed(f64),
}

impl Default for X0Policy {
    fn default() -> Self {
        X0Policy::Uniform { lo: -1.0, hi: 1.0 }
    }
}

impl X0Policy {
    fn draw(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            X0Policy::Uniform { lo, hi } => rng.uniform(lo, hi),
            X0Policy::Fixed(v) => v,
        }
    }

    /// Parses `uniform:LO:HI`, `uniform`, or a plain number.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("uniform") {
            return Some(Self::default());
        }
        if let Some(rest) = s.strip_prefix("uniform:") {
            let (a, b) = rest.split_once(':')?;
            let (lo, hi) = (a.parse().ok()?, b.parse().ok()?);
            return (lo <= hi).then_some(X0Policy::Uniform { lo, hi });
        }
        s.parse().ok().map(X0Policy::Fixed)
    }
}

/// A labelled training/test example `(x, h, Θ)` and the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub trajectory: Trajectory,
    pub theta: ParamVector,
    pub seed: u64,
}

/// Build the record whose whole content is determined by `seed`.
///
/// Values are rounded to `f32` precision, the precision of the dataset file.
pub fn generate_record(seed: u64, family: &SdeFamily, x0: X0Policy) -> Result<DatasetRecord> {
    let mut rng = SeededRng::new(seed);
    let (theta, n, h) = family.sample_parameters(&mut rng)?;
    let x0 = x0.draw(&mut rng);
    let noise = theta.noise_kind(family.noise)?;
    let mut trajectory = simulate_ou(&mut rng, &theta, noise, n, h, x0)?;
    for v in &mut trajectory.values {
        *v = *v as f32 as f64;
    }
    if trajectory.values.iter().any(|v| !v.is_finite()) {
        // finite in f64 but out of f32 range
        return Err(Error::SimulationDiverged { step: n });
    }
    trajectory.x0 = trajectory.values[0];
    Ok(DatasetRecord {
        trajectory,
        theta,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub family: SdeFamily,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// What happened while generating a dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationSummary {
    /// Indices that diverged once and were regenerated from a perturbed seed.
    pub resampled: Vec<u64>,
}

/// Generate `count` records; record `i` is driven by `derive_seed(master_seed, i)`.
///
/// A record whose path diverges is regenerated once from `derive_seed(seed, 1)`;
/// a second divergence fails the whole call after every other record was attempted.
/// The result does not depend on `workers`.
pub fn generate_dataset(
    master_seed: u64,
    family: &SdeFamily,
    count: usize,
    x0: X0Policy,
    workers: usize,
) -> Result<(Dataset, GenerationSummary)> {
    if count == 0 {
        return Err(invalid("count must be >= 1"));
    }
    family.validate()?;
    let workers = workers.clamp(1, count);

    let one = |i: usize| -> (usize, Result<DatasetRecord>, bool) {
        let seed = derive_seed(master_seed, i as u64);
        match generate_record(seed, family, x0) {
            Err(Error::SimulationDiverged { .. }) => {
                let retry = derive_seed(seed, 1);
                let r = generate_record(retry, family, x0).map_err(|e| match e {
                    Error::SimulationDiverged { .. } => Error::RecordDiverged {
                        index: i as u64,
                        first_seed: seed,
                        retry_seed: retry,
                    },
                    other => other,
                });
                (i, r, true)
            }
            r => (i, r, false),
        }
    };

    let mut results: Vec<(usize, Result<DatasetRecord>, bool)> = if workers == 1 {
        (0..count).map(one).collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let one = &one;
                    s.spawn(move || (w..count).step_by(workers).map(one).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("generation worker panicked"))
                .collect()
        })
    };
    results.sort_by_key(|(i, _, _)| *i);

    let mut summary = GenerationSummary::default();
    let mut records = Vec::with_capacity(count);
    let mut first_err = None;
    for (i, r, retried) in results {
        if retried {
            summary.resampled.push(i as u64);
        }
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok((
        Dataset {
            family: family.clone(),
            records,
        },
        summary,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::NoiseFamily;

    fn zero_noise(eta: f64) -> ParamVector {
        ParamVector {
            eta,
            epsilon: 0.0,
            noise_param: None,
        }
    }

    #[test]
    fn zero_noise_decay_matches_exponential() {
        let mut rng = SeededRng::new(0);
        let n = 1000;
        let h = 1.0 / n as f64;
        let p = simulate_ou(&mut rng, &zero_noise(1.0), NoiseKind::Gaussian, n, h, 1.0).unwrap();
        assert_eq!(p.values.len(), n);
        assert_eq!(p.values[0], 1.0);
        assert!((p.values[n - 1] - (-1.0f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn no_dynamics_constant_path() {
        let mut rng = SeededRng::new(0);
        let p = simulate_ou(&mut rng, &zero_noise(0.0), NoiseKind::Gaussian, 50, 0.1, 0.7).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn rejects_short_paths() {
        let mut rng = SeededRng::new(0);
        assert!(simulate_ou(&mut rng, &zero_noise(1.0), NoiseKind::Gaussian, 1, 0.1, 0.0).is_err());
        assert!(simulate_ou(&mut rng, &zero_noise(1.0), NoiseKind::Gaussian, 10, 0.0, 0.0).is_err());
    }

    #[test]
    fn divergence_reports_step() {
        let mut rng = SeededRng::new(0);
        // |1 - eta h| = 3, blows up geometrically
        let p = ParamVector {
            eta: 4.0,
            epsilon: 1.0,
            noise_param: Some(1.1),
        };
        let err = simulate_ou(&mut rng, &p, NoiseKind::AlphaStable { alpha: 1.1 }, 5000, 1.0, 1.0)
            .unwrap_err();
        match err {
            Error::SimulationDiverged { step } => assert!(step > 1 && step < 5000),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn dataset_is_deterministic_and_worker_independent() {
        let fam = SdeFamily::alpha_stable().with_length(50, 80);
        let (a, _) = generate_dataset(17, &fam, 12, X0Policy::default(), 1).unwrap();
        let (b, _) = generate_dataset(17, &fam, 12, X0Policy::default(), 1).unwrap();
        let (c, _) = generate_dataset(17, &fam, 12, X0Policy::default(), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        for (i, r) in a.records.iter().enumerate() {
            assert_eq!(r.seed, derive_seed(17, i as u64));
            let again = generate_record(r.seed, &fam, X0Policy::default()).unwrap();
            assert_eq!(&again, r);
        }
    }

    #[test]
    fn x0_policy_parse() {
        assert_eq!(X0Policy::parse("0.5"), Some(X0Policy::Fixed(0.5)));
        assert_eq!(X0Policy::parse("uniform"), Some(X0Policy::default()));
        assert_eq!(
            X0Policy::parse("uniform:-2:2"),
            Some(X0Policy::Uniform { lo: -2.0, hi: 2.0 })
        );
        assert_eq!(X0Policy::parse("uniform:2:-2"), None);
    }

    #[test]
    fn student_dataset_has_nu_in_range() {
        let fam = SdeFamily::student().with_length(20, 30);
        let (d, _) = generate_dataset(5, &fam, 200, X0Policy::default(), 1).unwrap();
        assert_eq!(d.family.noise, NoiseFamily::StudentLevy);
        for r in &d.records {
            let nu = r.theta.noise_param.unwrap();
            assert!((2.01..=4.0).contains(&nu));
        }
    }
}
