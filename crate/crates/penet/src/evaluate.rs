//! Grouped Mean / SD / MAE reports, scatter data and dataset-wide inference.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use penet_core::{Dataset, DatasetRecord, NoiseFamily};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PEnetModel;

/// Records whose listed parameters equal fixed values.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub label: String,
    /// `(parameter index, value)` pairs a record must match.
    pub fixed: Vec<(usize, f64)>,
}

impl GroupSpec {
    /// Parse `name=value[,name=value...]` using the family's parameter names.
    pub fn parse(family: NoiseFamily, text: &str) -> Result<Self> {
        let names = family.param_names();
        let mut fixed = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Report(format!("group term {part:?} is not name=value")))?;
            let idx = names.iter().position(|n| *n == k.trim()).ok_or_else(|| {
                Error::Report(format!(
                    "unknown parameter {k:?}; expected one of {names:?}"
                ))
            })?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Report(format!("bad value in group term {part:?}")))?;
            fixed.push((idx, v));
        }
        if fixed.is_empty() {
            return Err(Error::Report(format!("empty group definition {text:?}")));
        }
        Ok(Self {
            label: text.trim().to_string(),
            fixed,
        })
    }

    /// One group per non-empty, non-comment line.
    pub fn parse_file(family: NoiseFamily, text: &str) -> Result<Vec<Self>> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| Self::parse(family, l))
            .collect()
    }

    pub fn matches(&self, theta: &[f64]) -> bool {
        self.fixed
            .iter()
            .all(|&(i, v)| (theta[i] - v).abs() <= 1e-9 * v.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamStats {
    pub param: String,
    /// The common true value, when every record in the group shares it.
    pub truth: Option<f64>,
    pub mean: f64,
    pub sd: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub count: usize,
    pub params: Vec<ParamStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub estimator: String,
    pub family: String,
    pub total: usize,
    pub groups: Vec<GroupReport>,
}

/// One line of the scatter data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub truth: f64,
    pub estimate: f64,
    pub param: &'static str,
    pub group: String,
}

fn group_index(groups: &[GroupSpec], theta: &[f64], record: usize) -> Result<usize> {
    if groups.is_empty() {
        return Ok(0);
    }
    let hits: Vec<usize> = (0..groups.len())
        .filter(|&g| groups[g].matches(theta))
        .collect();
    match hits.as_slice() {
        [g] => Ok(*g),
        [] => Err(Error::Report(format!("record {record} matches no group"))),
        _ => Err(Error::Report(format!(
            "record {record} matches several groups"
        ))),
    }
}

/// Mean, sample SD and MAE of `est` against `truth`.
pub fn summarize(est: &[f64], truth: &[f64]) -> (f64, f64, f64) {
    let n = est.len() as f64;
    let mean = est.iter().sum::<f64>() / n;
    let sd = if est.len() > 1 {
        (est.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mae = est
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs())
        .sum::<f64>()
        / n;
    (mean, sd, mae)
}

/// Build a report from per-record truths and estimates.
///
/// `params` selects which parameter indices are reported; with no `groups` every
/// record falls into a single group named `all`.
pub fn build_report(
    estimator: &str,
    family: NoiseFamily,
    truths: &[Vec<f64>],
    estimates: &[Vec<f64>],
    params: &[usize],
    groups: &[GroupSpec],
) -> Result<(EstimationReport, Vec<ScatterPoint>)> {
    if truths.len() != estimates.len() {
        return Err(Error::Report("truths and estimates differ in count".into()));
    }
    let names = family.param_names();
    let labels: Vec<String> = if groups.is_empty() {
        vec!["all".into()]
    } else {
        groups.iter().map(|g| g.label.clone()).collect()
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, t) in truths.iter().enumerate() {
        members[group_index(groups, t, i)?].push(i);
    }
    let mut out = Vec::new();
    let mut scatter = Vec::new();
    for (label, idx) in labels.iter().zip(&members) {
        if idx.is_empty() {
            return Err(Error::Report(format!("group {label:?} is empty")));
        }
        let mut stats = Vec::new();
        for &p in params {
            let est: Vec<f64> = idx.iter().map(|&i| estimates[i][p]).collect();
            let tru: Vec<f64> = idx.iter().map(|&i| truths[i][p]).collect();
            let (mean, sd, mae) = summarize(&est, &tru);
            let truth = tru.iter().all(|&t| t == tru[0]).then_some(tru[0]);
            stats.push(ParamStats {
                param: names[p].to_string(),
                truth,
                mean,
                sd,
                mae,
            });
            scatter.extend(est.iter().zip(&tru).map(|(&e, &t)| ScatterPoint {
                truth: t,
                estimate: e,
                param: names[p],
                group: label.clone(),
            }));
        }
        out.push(GroupReport {
            group: label.clone(),
            count: idx.len(),
            params: stats,
        });
    }
    Ok((
        EstimationReport {
            estimator: estimator.to_string(),
            family: family.name().to_string(),
            total: truths.len(),
            groups: out,
        },
        scatter,
    ))
}

impl EstimationReport {
    /// One JSON object per (group, parameter).
    pub fn json_lines(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            for p in &g.params {
                let line = serde_json::json!({
                    "estimator": self.estimator,
                    "family": self.family,
                    "group": g.group,
                    "count": g.count,
                    "param": p.param,
                    "truth": p.truth,
                    "mean": p.mean,
                    "sd": p.sd,
                    "mae": p.mae,
                });
                let _ = writeln!(s, "{line}");
            }
        }
        s
    }

    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let mut rows = vec![[
            "group".to_string(),
            "n".to_string(),
            "param".to_string(),
            "truth".to_string(),
            "mean ± sd".to_string(),
            "mae".to_string(),
        ]];
        for g in &self.groups {
            for p in &g.params {
                rows.push([
                    g.group.clone(),
                    g.count.to_string(),
                    p.param.clone(),
                    p.truth.map_or("-".into(), |t| format!("{t:.4}")),
                    format!("{:.4} ± {:.4}", p.mean, p.sd),
                    format!("{:.4}", p.mae),
                ]);
            }
        }
        let widths: Vec<usize> = (0..6)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = format!(
            "{} ({}, {} records)\n",
            self.estimator, self.family, self.total
        );
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            let _ = writeln!(s, "{}", cells.join("  ").trim_end());
        }
        s
    }

    pub fn param(&self, group: &str, param: &str) -> Option<&ParamStats> {
        self.groups
            .iter()
            .find(|g| g.group == group)?
            .params
            .iter()
            .find(|p| p.param == param)
    }
}

pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut s = String::from("truth,estimate,parameter,group\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},\"{}\"",
            p.truth,
            p.estimate,
            p.param,
            p.group.replace('"', "'")
        );
    }
    s
}

/// Run `f` over `0..n` on `workers` threads (strided), returning results in index order.
pub fn par_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let mut parts: Vec<Vec<(usize, T)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                s.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut all: Vec<(usize, T)> = parts.drain(..).flatten().collect();
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, t)| t).collect()
}

/// Network estimates for every record, in record order. Records are batched by
/// length; in inference mode each estimate is independent of its batch.
pub fn estimate_records(
    model: &PEnetModel,
    records: &[DatasetRecord],
    batch: usize,
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_len.entry(r.trajectory.len()).or_default().push(i);
    }
    let chunks: Vec<Vec<usize>> = by_len
        .values()
        .flat_map(|v| {
            v.chunks(batch.max(1))
                .map(<[usize]>::to_vec)
                .collect::<Vec<_>>()
        })
        .collect();
    let results = par_map(chunks.len(), workers, |c| {
        let idx = &chunks[c];
        let paths: Vec<&[f64]> = idx
            .iter()
            .map(|&i| records[i].trajectory.values.as_slice())
            .collect();
        let hs: Vec<f64> = idx.iter().map(|&i| records[i].trajectory.h).collect();
        model.predict(&paths, &hs)
    });
    let mut out = vec![Vec::new(); records.len()];
    for (idx, res) in chunks.iter().zip(results) {
        for (&i, row) in idx.iter().zip(res?) {
            out[i] = row;
        }
    }
    Ok(out)
}

/// Evaluate a trained network on a labelled dataset.
pub fn evaluate(
    model: &PEnetModel,
    dataset: &Dataset,
    groups: &[GroupSpec],
    workers: usize,
) -> Result<(EstimationReport, Vec<ScatterPoint>)> {
    let cfg = model.config();
    if cfg.family != dataset.family.noise {
        return Err(Error::Config(format!(
            "model is for the {} family, dataset holds {}",
            cfg.family.name(),
            dataset.family.noise.name()
        )));
    }
    let est = estimate_records(model, &dataset.records, 64, workers)?;
    let truths: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.theta.to_vec()).collect();
    let params: Vec<usize> = (0..cfg.output_dim()).collect();
    build_report("penet", cfg.family, &truths, &est, &params, groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_estimates_give_zero_error() {
        let truths = vec![
            vec![1.5, 0.03, 2.5],
            vec![1.0, 0.02, 2.5],
            vec![2.0, 0.01, 3.0],
        ];
        let groups =
            GroupSpec::parse_file(NoiseFamily::StudentLevy, "nu=2.5\n# comment\nnu=3.0\n").unwrap();
        let (rep, scatter) = build_report(
            "oracle",
            NoiseFamily::StudentLevy,
            &truths,
            &truths,
            &[0, 1, 2],
            &groups,
        )
        .unwrap();
        assert_eq!(rep.groups.iter().map(|g| g.count).sum::<usize>(), 3);
        for g in &rep.groups {
            for p in &g.params {
                assert_eq!(p.mae, 0.0);
            }
        }
        assert_eq!(rep.param("nu=2.5", "nu").unwrap().truth, Some(2.5));
        assert_eq!(rep.param("nu=2.5", "eta").unwrap().truth, None);
        assert_eq!(scatter.len(), 9);
    }

    #[test]
    fn statistics_by_hand() {
        let truths = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]];
        let est = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]];
        let (rep, _) = build_report("x", NoiseFamily::Gaussian, &truths, &est, &[0], &[]).unwrap();
        let p = rep.param("all", "eta").unwrap();
        assert!((p.mean - 4.0 / 3.0).abs() < 1e-15);
        assert!((p.sd - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((p.mae - 1.0).abs() < 1e-15);
    }

    #[test]
    fn group_errors() {
        let truths = vec![vec![1.0, 0.1, 2.5]];
        let groups = GroupSpec::parse_file(NoiseFamily::StudentLevy, "nu=2.5\nnu=3.5").unwrap();
        assert!(matches!(
            build_report(
                "x",
                NoiseFamily::StudentLevy,
                &truths,
                &truths,
                &[2],
                &groups
            ),
            Err(Error::Report(_))
        ));
        assert!(GroupSpec::parse(NoiseFamily::Gaussian, "alpha=1.5").is_err());
        assert!(GroupSpec::parse(NoiseFamily::Gaussian, "eta").is_err());
    }

    #[test]
    fn table_and_json_lines() {
        let truths = vec![vec![1.0, 0.5], vec![2.0, 0.5]];
        let (rep, scatter) =
            build_report("mid", NoiseFamily::Gaussian, &truths, &truths, &[0, 1], &[]).unwrap();
        assert_eq!(rep.json_lines().lines().count(), 2);
        let t = rep.table();
        assert!(t.contains("eta") && t.contains("mean ± sd"));
        assert!(scatter_csv(&scatter).starts_with("truth,estimate,parameter,group\n"));
    }

    #[test]
    fn par_map_keeps_order() {
        let v = par_map(10, 3, |i| i * i);
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }
}
