use std::collections::BTreeMap;
use std::process::Command;

use depro::data::generate;
use depro::harness::{
    ablation_configs, summarize, sweep, train, train_on, IterRecord, RunConfig, SweepAxis,
};

fn tiny() -> RunConfig {
    RunConfig {
        train_pool: 160,
        ood_size: 60,
        epochs: 2,
        batch_size: 16,
        seeds: vec![0, 1],
        ..RunConfig::default()
    }
}

fn metrics_bytes(cfg: &RunConfig) -> Vec<u8> {
    let report = train(cfg).unwrap();
    let mut buf = Vec::new();
    report.write_metrics_jsonl(&mut buf).unwrap();
    buf
}

#[test]
fn identical_config_gives_identical_metrics() {
    let cfg = tiny();
    let a = metrics_bytes(&cfg);
    assert!(!a.is_empty());
    assert_eq!(a, metrics_bytes(&cfg));
}

#[test]
fn iteration_indices_are_unique_and_increasing() {
    let report = train(&tiny()).unwrap();
    let mut buf = Vec::new();
    report.write_metrics_jsonl(&mut buf).unwrap();
    let mut per_seed: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for line in String::from_utf8(buf).unwrap().lines() {
        let rec: IterRecord = serde_json::from_str(line).unwrap();
        per_seed.entry(rec.seed).or_default().push(rec.iteration);
        assert!(rec.ce.is_finite() && rec.decorr_mean >= 0.0);
    }
    assert_eq!(per_seed.len(), 2);
    for iters in per_seed.values() {
        assert_eq!(*iters, (0..iters.len()).collect::<Vec<_>>());
    }
    // epoch ends carry accuracies
    let run = &report.runs[0];
    assert_eq!(run.iters.iter().filter(|r| r.ood_acc.is_some()).count(), 2);
}

#[test]
fn reported_means_are_arithmetic_means() {
    let report = train(&tiny()).unwrap();
    let mut csv = Vec::new();
    report.write_results_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut ood = Vec::new();
    let mut mean = None;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        match f[0] {
            "mean" => mean = Some(f[2].parse::<f64>().unwrap()),
            "stdev" => {}
            _ => ood.push(f[2].parse::<f64>().unwrap()),
        }
    }
    let expect = ood.iter().sum::<f64>() / ood.len() as f64;
    assert!((mean.unwrap() - expect).abs() < 1e-9);
    assert!((summarize(&ood).mean - expect).abs() < 1e-9);
}

#[test]
fn erm_arm_keeps_unit_weights() {
    let cfg = RunConfig {
        use_decorrelation: false,
        use_purification: false,
        ..tiny()
    };
    let report = train(&cfg).unwrap();
    for run in &report.runs {
        assert!(run.weights.realize_all().iter().all(|w| *w == 1.0));
        assert!(run.iters.iter().all(|r| r.infonce == 0.0));
    }
}

#[test]
fn ablation_arms_share_data_banks_and_seeds() {
    let cfg = tiny();
    let splits = generate(&cfg.task_spec()).unwrap();
    let arms = ablation_configs(&cfg);
    assert_eq!(arms.len(), 4);
    let reports: Vec<_> = arms.iter().map(|(_, c)| train_on(c, &splits)).collect();
    for r in &reports[1..] {
        for (a, b) in r.runs.iter().zip(&reports[0].runs) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.bank, b.bank);
        }
    }
    for (_, c) in &arms {
        let mut a = c.clone();
        a.use_decorrelation = cfg.use_decorrelation;
        a.use_purification = cfg.use_purification;
        assert_eq!(a, cfg);
    }
}

#[test]
fn sweep_bookkeeping() {
    let cfg = RunConfig {
        epochs: 1,
        ..tiny()
    };
    let t = sweep(&cfg, SweepAxis::RffMultiplier, &[1.0, 2.0, 4.0]).unwrap();
    assert_eq!(t.rows.len(), 3 * 2);
    assert_eq!(t.failed(), 0);
    let t = sweep(&cfg, SweepAxis::PurifyRatio, &[0.5, 0.6, 0.7, 0.8, 1.0]).unwrap();
    assert_eq!(t.rows.len(), 5 * 2);
    let full = train(&RunConfig {
        purify_ratio: 1.0,
        ..cfg.clone()
    })
    .unwrap();
    for run in &full.runs {
        let row = t
            .rows
            .iter()
            .find(|r| r.value == 1.0 && r.seed == run.seed)
            .unwrap();
        assert_eq!(row.ood_acc, Some(run.ood_acc));
        assert!(run.selection.iter().all(|f| *f == 1.0));
    }
    assert!(sweep(&cfg, SweepAxis::PurifyRatio, &[]).is_err());
}

#[test]
fn failing_values_are_recorded_and_the_sweep_continues() {
    let cfg = RunConfig {
        epochs: 1,
        seeds: vec![0],
        ..tiny()
    };
    let t = sweep(&cfg, SweepAxis::PurifyRatio, &[1.5, 1.0]).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.rows[0].error.is_some());
    assert!(t.rows[1].ood_acc.is_some());
}

#[test]
fn divergence_is_a_recorded_seed_failure() {
    let cfg = RunConfig {
        lr: 1e300,
        epochs: 1,
        ..tiny()
    };
    let report = train(&cfg).unwrap();
    assert!(!report.all_succeeded());
    assert_eq!(report.failures.len() + report.runs.len(), 2);
    assert!(report
        .failures
        .iter()
        .all(|f| f.error.starts_with("training diverged at iteration")));
}

fn depro() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depro"))
}

const SMALL: [&str; 10] = [
    "--train_pool",
    "160",
    "--ood_size",
    "60",
    "--epochs",
    "1",
    "--batch_size",
    "16",
    "--seeds",
    "0,1",
];

#[test]
fn cli_train_writes_outputs_and_eval_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = depro()
        .args(["train", "--out", out.to_str().unwrap()])
        .args(SMALL)
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "metrics.jsonl",
        "results.csv",
        "selection.csv",
        "config.json",
        "model_seed0.params",
        "bank_seed1.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let cfg = RunConfig::load(&out.join("config.json")).unwrap();
    assert_eq!(cfg.seeds, vec![0, 1]);

    let data = dir.path().join("data");
    assert!(depro()
        .args(["generate-data", "--out", data.to_str().unwrap()])
        .args(SMALL)
        .status()
        .unwrap()
        .success());
    let eval = depro()
        .args(["eval", "--checkpoint"])
        .arg(out.join("model_seed0.params"))
        .arg("--data")
        .arg(data.join("ood.csv"))
        .output()
        .unwrap();
    assert!(eval.status.success());
    let acc: f64 = String::from_utf8(eval.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let seed0: f64 = results
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((acc - seed0).abs() < 1e-6);
}

#[test]
fn cli_rejects_unknown_keys_and_reports_failed_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let bad = depro()
        .args([
            "train",
            "--out",
            out.to_str().unwrap(),
            "--no_such_key",
            "1",
        ])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let diverged = depro()
        .args(["train", "--out", out.to_str().unwrap()])
        .args(SMALL)
        .args(["--lr", "1e300"])
        .status()
        .unwrap();
    assert!(!diverged.success());
}

#[test]
fn cli_config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"train_pool": 160, "ood_size": 60, "epochs": 1, "batch_size": 16, "seeds": [3]}"#,
    )
    .unwrap();
    let out = dir.path().join("study");
    let status = depro()
        .args([
            "decorr-study",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--alpha",
            "0.01",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let pairs = std::fs::read_to_string(out.join("pairs.csv")).unwrap();
    assert!(pairs.starts_with("arm,seed,iteration,i,j,frob_sq"));
    assert!(pairs.lines().any(|l| l.starts_with("control,3,")));
    let cfg = RunConfig::load(&out.join("reweighted/config.json")).unwrap();
    assert_eq!(cfg.alpha, 0.01);
}
