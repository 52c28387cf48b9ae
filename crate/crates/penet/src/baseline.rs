//! Classical estimators run over a dataset, reported like the network.

use penet_core::baselines::{cqmle_fit, lse_drift, midpoint_predictor};
use penet_core::{Dataset, NoiseFamily, SdeFamily};

use crate::error::{Error, Result};
use crate::evaluate::{build_report, par_map, EstimationReport, GroupSpec, ScatterPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Cqmle,
    Lse,
    Midpoint,
}

impl Baseline {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cqmle" => Some(Self::Cqmle),
            "lse" => Some(Self::Lse),
            "midpoint" => Some(Self::Midpoint),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cqmle => "cqmle",
            Self::Lse => "lse",
            Self::Midpoint => "midpoint",
        }
    }

    /// Parameter indices this estimator produces for `family`.
    pub fn params(self, family: NoiseFamily) -> Vec<usize> {
        match (self, family) {
            (Self::Lse, _) => vec![0],
            (Self::Cqmle, NoiseFamily::StudentLevy) => vec![0, 1, 2],
            (Self::Cqmle, _) => vec![0, 1],
            (Self::Midpoint, f) => (0..f.param_dim()).collect(),
        }
    }
}

/// Per-record estimates (unproduced parameters are NaN) in record order.
pub fn baseline_estimates(
    kind: Baseline,
    dataset: &Dataset,
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    let noise = dataset.family.noise;
    let m = noise.param_dim();
    let mid = midpoint_predictor(&SdeFamily::for_noise(noise)).to_vec();
    let recs = &dataset.records;
    let rows = par_map(recs.len(), workers, |i| -> Result<Vec<f64>> {
        let tr = &recs[i].trajectory;
        let mut row = vec![f64::NAN; m];
        match kind {
            Baseline::Midpoint => row.copy_from_slice(&mid),
            Baseline::Lse => {
                row[0] = lse_drift(tr).map_err(|e| Error::Report(format!("record {i}: {e}")))?
            }
            Baseline::Cqmle => {
                let r =
                    cqmle_fit(tr, None).map_err(|e| Error::Report(format!("record {i}: {e}")))?;
                row[0] = r.eta_hat;
                row[1] = r.epsilon_hat;
                if noise == NoiseFamily::StudentLevy {
                    row[2] = r.nu_hat;
                }
            }
        }
        Ok(row)
    });
    rows.into_iter().collect()
}

pub fn run_baseline(
    kind: Baseline,
    dataset: &Dataset,
    groups: &[GroupSpec],
    workers: usize,
) -> Result<(EstimationReport, Vec<ScatterPoint>, Vec<Vec<f64>>)> {
    let est = baseline_estimates(kind, dataset, workers)?;
    let truths: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.theta.to_vec()).collect();
    let noise = dataset.family.noise;
    let (rep, scatter) = build_report(
        kind.name(),
        noise,
        &truths,
        &est,
        &kind.params(noise),
        groups,
    )?;
    Ok((rep, scatter, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use penet_core::sim::generate_dataset;
    use penet_core::X0Policy;

    #[test]
    fn midpoint_on_uniform_alpha_is_quarter_width() {
        let fam = SdeFamily::alpha_stable().with_length(20, 20);
        let (ds, _) = generate_dataset(5, &fam, 4000, X0Policy::default(), 1).unwrap();
        let (rep, _, _) = run_baseline(Baseline::Midpoint, &ds, &[], 1).unwrap();
        let mae = rep.param("all", "alpha").unwrap().mae;
        // E|U - mid| = width / 4 for U uniform on the range
        assert!((mae - 0.99 / 4.0).abs() < 0.01, "{mae}");
    }

    #[test]
    fn parameter_sets() {
        assert_eq!(
            Baseline::Cqmle.params(NoiseFamily::StudentLevy),
            vec![0, 1, 2]
        );
        assert_eq!(Baseline::Cqmle.params(NoiseFamily::Gaussian), vec![0, 1]);
        assert_eq!(Baseline::Lse.params(NoiseFamily::AlphaStable), vec![0]);
        assert_eq!(Baseline::parse("cqmle"), Some(Baseline::Cqmle));
        assert_eq!(Baseline::parse("mle"), None);
    }
}
