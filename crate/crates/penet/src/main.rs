use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use penet::baseline::{run_baseline, Baseline};
use penet::bench::{bench, speedup, table as bench_table};
use penet::evaluate::{evaluate, scatter_csv, EstimationReport, GroupSpec, ScatterPoint};
use penet::train::train;
use penet::{Architecture, PEnetConfig, PEnetModel, TrainConfig};
use penet_core::dataset_io;
use penet_core::family::Range;
use penet_core::sim::generate_dataset;
use penet_core::{NoiseFamily, SdeFamily, X0Policy};

#[derive(Parser)]
#[command(
    name = "penet",
    version,
    about = "Parameter estimation for Levy-driven OU processes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a labelled dataset file.
    Generate(GenerateArgs),
    /// Train a network from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grouped Mean/SD/MAE of a trained network on a test set.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// File with one group per line, e.g. `nu=2.5`.
        #[arg(long)]
        groups: Option<PathBuf>,
        /// Output prefix for `.jsonl`, `.txt` and `.csv` files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Estimate parameters of a single path.
    Estimate(EstimateArgs),
    /// Run a classical estimator over a dataset.
    Baseline {
        /// cqmle, lse or midpoint.
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Forward-pass timing with and without the conv stage.
    Bench {
        /// Checkpoint whose geometry to time; default geometry otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "alpha-stable")]
        family: String,
        #[arg(long, value_delimiter = ',', default_value = "400,800,1600,3200")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Dataset file utilities.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Model checkpoint utilities.
    Model {
        #[command(subcommand)]
        cmd: ModelCmd,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Print the header and a summary of the records.
    Inspect { path: PathBuf },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Print the config, parameter count and per-stage cost.
    Describe {
        path: PathBuf,
        #[arg(long, default_value_t = 3200)]
        len: usize,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// gaussian, alpha-stable or student.
    #[arg(long)]
    family: String,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Length range `LO:HI`.
    #[arg(long)]
    length: Option<String>,
    /// Spanning-time range `LO:HI`.
    #[arg(long)]
    span: Option<String>,
    /// Pin parameters, e.g. `nu=3.0` or `eta=1.5,epsilon=0.03`.
    #[arg(long)]
    fix: Option<String>,
    /// `uniform`, `uniform:LO:HI` or a number.
    #[arg(long, default_value = "uniform")]
    x0: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset file holding the path.
    #[arg(long, conflicts_with_all = ["series", "series_file"])]
    data: Option<PathBuf>,
    /// Record index within `--data`.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Inline comma-separated values.
    #[arg(long)]
    series: Option<String>,
    /// Text file of whitespace- or comma-separated values.
    #[arg(long)]
    series_file: Option<PathBuf>,
    /// Observation spacing; defaults to the record's own for `--data`.
    #[arg(long)]
    h: Option<f64>,
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').context("expected LO:HI")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn family_arg(name: &str) -> Result<NoiseFamily> {
    NoiseFamily::parse(name).with_context(|| format!("unknown family {name:?}"))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let noise = family_arg(&a.family)?;
    let mut fam = SdeFamily::for_noise(noise);
    if let Some(l) = &a.length {
        let (lo, hi) = parse_pair(l)?;
        fam = fam.with_length(lo as u32, hi as u32);
    }
    if let Some(s) = &a.span {
        let (lo, hi) = parse_pair(s)?;
        fam.span = Range { lo, hi };
    }
    if let Some(fix) = &a.fix {
        let g = GroupSpec::parse(noise, fix)?;
        for (i, v) in g.fixed {
            let r = Range { lo: v, hi: v };
            match i {
                0 => fam.eta = r,
                1 => fam.epsilon = r,
                _ => fam.shape = Some(r),
            }
        }
    }
    let x0 = X0Policy::parse(&a.x0).with_context(|| format!("bad x0 policy {:?}", a.x0))?;
    let (ds, summary) = generate_dataset(a.seed, &fam, a.count, x0, a.workers)?;
    dataset_io::save(&a.out, &ds)?;
    println!(
        "{}",
        serde_json::json!({
            "out": a.out,
            "family": noise.name(),
            "count": ds.len(),
            "resampled": summary.resampled,
        })
    );
    Ok(())
}

fn cmd_train(config: &Path, out: &Path) -> Result<()> {
    let cfg = TrainConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
    let ds = dataset_io::load(&cfg.dataset)
        .with_context(|| format!("reading {}", cfg.dataset.display()))?;
    let outcome = train(&cfg, &ds, |e| {
        println!("{}", serde_json::to_string(e).unwrap_or_default())
    })?;
    outcome.model.save(out, Some(&outcome.optimizer))?;
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": out,
            "best_epoch": outcome.best_epoch,
            "parameters": outcome.model.count_parameters(),
            "unused_records": outcome.unused_records,
        })
    );
    Ok(())
}

fn load_groups(path: Option<&Path>, family: NoiseFamily) -> Result<Vec<GroupSpec>> {
    match path {
        Some(p) => Ok(GroupSpec::parse_file(family, &fs::read_to_string(p)?)?),
        None => Ok(Vec::new()),
    }
}

fn write_report(
    rep: &EstimationReport,
    scatter: &[ScatterPoint],
    out: Option<&Path>,
) -> Result<()> {
    print!("{}", rep.table());
    if let Some(prefix) = out {
        let with = |ext: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        fs::write(with(".jsonl"), rep.json_lines())?;
        fs::write(with(".txt"), rep.table())?;
        fs::write(with(".csv"), scatter_csv(scatter))?;
    }
    Ok(())
}

fn read_series(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .with_context(|| format!("bad number {s:?}"))
        })
        .collect()
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let model = PEnetModel::load(&a.model)?;
    let (values, h) = if let Some(d) = &a.data {
        let ds = dataset_io::load(d)?;
        let r = ds
            .records
            .get(a.index)
            .with_context(|| format!("record {} out of range ({} records)", a.index, ds.len()))?;
        (r.trajectory.values.clone(), a.h.unwrap_or(r.trajectory.h))
    } else {
        let text = match (&a.series, &a.series_file) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => fs::read_to_string(p)?,
            (None, None) => bail!("give --data, --series or --series-file"),
        };
        (
            read_series(&text)?,
            a.h.context("--h is required for inline series")?,
        )
    };
    let est = model.predict(&[&values], &[h])?.remove(0);
    let names = model.config().family.param_names();
    let map: serde_json::Map<String, serde_json::Value> = names
        .iter()
        .zip(&est)
        .map(|(n, v)| (n.to_string(), serde_json::json!(v)))
        .collect();
    println!(
        "{}",
        serde_json::json!({
            "len": values.len(),
            "lstm_steps": model.config().arch.lstm_len(values.len()),
            "h": h,
            "estimate": map,
        })
    );
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let ds = dataset_io::load(path)?;
    let header = dataset_io::load_header(path)?;
    let lens: Vec<usize> = ds.records.iter().map(|r| r.trajectory.len()).collect();
    let names = ds.family.noise.param_names();
    let mut params = serde_json::Map::new();
    for (j, n) in names.iter().enumerate() {
        let vals: Vec<f64> = ds.records.iter().map(|r| r.theta.to_vec()[j]).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        params.insert(n.to_string(), serde_json::json!([lo, hi]));
    }
    let ranges: Vec<[f64; 2]> = ds
        .family
        .param_ranges()
        .iter()
        .map(|r| [r.lo, r.hi])
        .collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "version": header.version,
            "family": ds.family.noise.name(),
            "count": header.count,
            "ranges": ranges,
            "span": [ds.family.span.lo, ds.family.span.hi],
            "length": [ds.family.length.0, ds.family.length.1],
            "observed_length": [lens.iter().min(), lens.iter().max()],
            "observed_params": params,
        }))?
    );
    Ok(())
}

fn cmd_describe(path: &Path, len: usize) -> Result<()> {
    let model = PEnetModel::load(path)?;
    let f = model.flops(len);
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "config": model.config(),
            "parameters": model.count_parameters(),
            "at_length": len,
            "lstm_steps": f.lstm_steps,
            "madds": { "conv": f.conv, "lstm": f.lstm, "dense": f.dense },
        }))?
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Train { config, out } => cmd_train(&config, &out),
        Cmd::Evaluate {
            model,
            data,
            groups,
            out,
            workers,
        } => {
            let model = PEnetModel::load(&model)?;
            let ds = dataset_io::load(&data)?;
            let groups = load_groups(groups.as_deref(), ds.family.noise)?;
            let (rep, scatter) = evaluate(&model, &ds, &groups, workers)?;
            write_report(&rep, &scatter, Some(&out))
        }
        Cmd::Estimate(a) => cmd_estimate(a),
        Cmd::Baseline {
            estimator,
            data,
            groups,
            out,
            workers,
        } => {
            let kind = Baseline::parse(&estimator)
                .with_context(|| format!("unknown estimator {estimator:?}"))?;
            let ds = dataset_io::load(&data)?;
            let groups = load_groups(groups.as_deref(), ds.family.noise)?;
            let (rep, scatter, _) = run_baseline(kind, &ds, &groups, workers)?;
            if out.is_none() {
                print!("{}", rep.json_lines());
            }
            write_report(&rep, &scatter, out.as_deref())
        }
        Cmd::Bench {
            model,
            family,
            lengths,
            batch,
            reps,
        } => {
            let cfg = match model {
                Some(p) => PEnetModel::load(&p)?.config().clone(),
                None => PEnetConfig::for_family(
                    &SdeFamily::for_noise(family_arg(&family)?),
                    Architecture::default(),
                ),
            };
            let rows = bench(&cfg, &lengths, batch, reps, 0)?;
            print!("{}", bench_table(&rows));
            for &n in &lengths {
                if let Some(r) = speedup(&rows, n) {
                    println!("{}", serde_json::json!({ "len": n, "speedup_use_cnn": r }));
                }
            }
            Ok(())
        }
        Cmd::Dataset {
            cmd: DatasetCmd::Inspect { path },
        } => cmd_inspect(&path),
        Cmd::Model {
            cmd: ModelCmd::Describe { path, len },
        } => cmd_describe(&path, len),
    }
}
