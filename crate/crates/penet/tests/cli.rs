use std::path::Path;
use std::process::Command;

fn penet(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_penet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "penet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_train_evaluate_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    penet(
        d,
        &[
            "generate",
            "--family",
            "student",
            "--count",
            "80",
            "--seed",
            "1",
            "--length",
            "40:48",
            "--out",
            "train.lsde",
        ],
    );
    penet(
        d,
        &[
            "generate",
            "--family",
            "student",
            "--count",
            "20",
            "--seed",
            "2",
            "--length",
            "40:48",
            "--fix",
            "nu=3.0",
            "--out",
            "test.lsde",
        ],
    );
    std::fs::write(
        d.join("train.cfg"),
        "dataset = train.lsde\nmax_epochs = 2\nbatch_size = 8\nlstm_layers = 1\nlstm_hidden = 6\nseed = 4\n",
    )
    .unwrap();
    let log = penet(
        d,
        &["train", "--config", "train.cfg", "--out", "model.penw"],
    );
    assert!(log.lines().next().unwrap().contains("\"epoch\":1"));
    assert!(log.contains("best_epoch"));

    let inspect = penet(d, &["dataset", "inspect", "test.lsde"]);
    let v: serde_json::Value = serde_json::from_str(&inspect).unwrap();
    assert_eq!(v["count"], 20);
    assert_eq!(v["family"], "student");
    assert_eq!(v["observed_params"]["nu"], serde_json::json!([3.0, 3.0]));

    let describe = penet(d, &["model", "describe", "model.penw", "--len", "3000"]);
    let v: serde_json::Value = serde_json::from_str(&describe).unwrap();
    assert_eq!(v["lstm_steps"], 750);
    assert_eq!(v["config"]["lstm_hidden"], 6);

    std::fs::write(d.join("groups.txt"), "nu=3.0\n").unwrap();
    let table = penet(
        d,
        &[
            "evaluate",
            "--model",
            "model.penw",
            "--data",
            "test.lsde",
            "--groups",
            "groups.txt",
            "--out",
            "rep",
        ],
    );
    assert!(table.contains("nu=3.0"));
    let jsonl = std::fs::read_to_string(d.join("rep.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 3);
    let csv = std::fs::read_to_string(d.join("rep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 20);

    // a record fed back through `estimate` reproduces its evaluation estimate
    let est = penet(
        d,
        &[
            "estimate",
            "--model",
            "model.penw",
            "--data",
            "test.lsde",
            "--index",
            "0",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&est).unwrap();
    let nu = v["estimate"]["nu"].as_f64().unwrap();
    let first_nu = csv
        .lines()
        .skip(1)
        .find(|l| l.contains(",nu,"))
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .unwrap();
    assert_eq!(nu.to_bits(), first_nu.to_bits());

    let inline = penet(
        d,
        &[
            "estimate",
            "--model",
            "model.penw",
            "--series",
            &vec!["0.1"; 20].join(","),
            "--h",
            "0.2",
        ],
    );
    assert!(inline.contains("\"len\":20"));
    let doubled = penet(
        d,
        &[
            "estimate",
            "--model",
            "model.penw",
            "--series",
            &vec!["0.1"; 20].join(","),
            "--h",
            "0.4",
        ],
    );
    let parse = |s: &str| serde_json::from_str::<serde_json::Value>(s).unwrap()["estimate"].clone();
    assert_ne!(parse(&inline), parse(&doubled));

    let base = penet(
        d,
        &[
            "baseline",
            "--estimator",
            "midpoint",
            "--data",
            "test.lsde",
            "--groups",
            "groups.txt",
        ],
    );
    assert!(base.contains("\"estimator\":\"midpoint\""));
}

#[test]
fn rejects_short_inline_series() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    penet(
        d,
        &[
            "generate", "--family", "gaussian", "--count", "30", "--seed", "1", "--length",
            "20:20", "--out", "t.lsde",
        ],
    );
    std::fs::write(
        d.join("t.cfg"),
        "dataset = t.lsde\nmax_epochs = 1\nbatch_size = 8\n",
    )
    .unwrap();
    penet(d, &["train", "--config", "t.cfg", "--out", "m.penw"]);
    let out = Command::new(env!("CARGO_BIN_EXE_penet"))
        .current_dir(d)
        .args([
            "estimate", "--model", "m.penw", "--series", "1,2,3", "--h", "0.1",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("too short"));
}
