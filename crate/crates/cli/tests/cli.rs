use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tiltlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiltlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("TILTLAB_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const TINY_ENCODER: &str = "[encoder]\narchitecture = transformer\nlayers = 1\nmodel_size = 16\nff_size = 32\nheads = 2\n";

const CONLLU: &str = "\
1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_
2\tdog\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\truns\t_\tVERB\t_\t_\t0\troot\t_\t_

1\ta\t_\tDET\t_\t_\t2\tdet\t_\t_
2\tcat\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\tsleeps\t_\tVERB\t_\t_\t0\troot\t_\t_

";

#[test]
fn gen_is_reproducible_and_thread_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (out, jobs) in [("a.txt", "1"), ("b.txt", "3")] {
        ok(&tiltlab(
            &["gen", "--language", "nesting_dep", "--size", "100", "--sentences", "300", "--seed", "4", "--jobs", jobs, "--out", out],
            d,
        ));
    }
    let a = fs::read(d.join("a.txt")).unwrap();
    assert_eq!(a, fs::read(d.join("b.txt")).unwrap());
    assert!(String::from_utf8_lossy(&a).starts_with("# genconfig-sha256="));
    let m = json(d.join("a.txt.manifest.json"));
    assert_eq!(m["language"], "nesting_dep");
    assert_eq!(m["seeds"][0], 4);
    assert_eq!(m["metrics"]["sentences"], 300.0);
}

#[test]
fn seed_environment_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_tiltlab"))
        .args(["gen", "--language", "zipf", "--size", "50", "--sentences", "10", "--out", "z.txt"])
        .current_dir(d)
        .env("TILTLAB_SEED", "77")
        .output()
        .unwrap();
    ok(&out);
    assert_eq!(json(d.join("z.txt.manifest.json"))["seeds"][0], 77);
}

#[test]
fn stats_checks_nesting() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tiltlab(&["gen", "--language", "nesting_dep", "--size", "200", "--sentences", "400", "--out", "n.txt"], d));
    ok(&tiltlab(&["gen", "--language", "flat_dep", "--size", "200", "--sentences", "400", "--out", "f.txt"], d));
    let out = tiltlab(&["stats", "--corpus", "n.txt", "--check", "nested"], d);
    ok(&out);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["nested_rate"], 1.0);
    assert_eq!(report["balanced_rate"], 1.0);
    let out = tiltlab(&["stats", "--corpus", "f.txt", "--check", "nested", "--out", "f.json"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(json(d.join("f.json"))["crossing_rate"].as_f64().unwrap() > 0.0);
    ok(&tiltlab(&["stats", "--corpus", "f.txt", "--check", "balanced"], d));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(tiltlab(&["gen", "--bogus"], d).status.code(), Some(1));
    assert_eq!(tiltlab(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(tiltlab(&["stats", "--corpus", "missing.txt"], d).status.code(), Some(2));
    assert_eq!(tiltlab(&["--help"], d).status.code(), Some(0));
    fs::write(d.join("bad.ini"), "[encoder]\nwidth = 3\n").unwrap();
    let out = tiltlab(&["pretrain", "--config", "bad.ini", "--corpus", "x.txt", "--out", "r"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key 'width'"));
}

fn write_pretrain_config(d: &Path, extra: &str) -> PathBuf {
    let p = d.join("pretrain.ini");
    fs::write(&p, format!("[run]\nlanguage = nesting_dep\n{TINY_ENCODER}[train]\nobjective = clm\nsteps = 3\nbatch_size = 4\nwarmup = 2\n{extra}")).unwrap();
    p
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tiltlab(&["gen", "--language", "nesting_dep", "--size", "60", "--sentences", "100", "--out", "c.txt"], d));
    write_pretrain_config(d, "");
    ok(&tiltlab(&["pretrain", "--config", "pretrain.ini", "--corpus", "c.txt", "--seed", "2", "--out", "pre"], d));
    assert!(d.join("pre/encoder.ckpt").is_file());
    let m = json(d.join("pre/manifest.json"));
    assert_eq!((m["objective"].as_str(), m["architecture"].as_str()), (Some("clm"), Some("transformer")));
    assert_eq!(m["metrics"]["steps"], 3.0);

    let text = "the dog runs\na cat sleeps\nthe cat runs fast\n".repeat(5);
    fs::write(d.join("l2.txt"), &text).unwrap();
    fs::write(d.join("transfer.ini"), format!("{TINY_ENCODER}[train]\nsteps = 2\nbatch_size = 4\nwarmup = 2\n")).unwrap();
    for (out, src) in [("t-pre", ["--checkpoint", "pre/encoder.ckpt"]), ("t-rand", ["--random-weights", "--deterministic"])] {
        let mut args = vec!["transfer-lm", "--config", "transfer.ini", "--train", "l2.txt", "--eval", "l2.txt", "--out", out];
        args.extend(src.iter().filter(|s| !s.is_empty()));
        ok(&tiltlab(&args, d));
    }
    let t = json(d.join("t-pre/manifest.json"));
    assert_eq!(t["language"], "nesting_dep");
    assert_eq!(t["seeds"], serde_json::json!([2, 0]));
    assert!(t["metrics"]["ppl"].as_f64().unwrap() >= 1.0);
    assert_eq!(json(d.join("t-rand/manifest.json"))["language"], "random_weights");

    fs::write(d.join("tb.conllu"), CONLLU).unwrap();
    let features = "[features]\nword_dim = 8\nchar_dim = 4\nchar_hidden = 4\n";
    fs::write(d.join("parse.ini"), format!("{TINY_ENCODER}{features}[parser]\nepochs = 2\nbatch_size = 2\n")).unwrap();
    fs::write(d.join("pos.ini"), format!("{TINY_ENCODER}{features}[tagger]\nepochs = 2\n")).unwrap();
    let out = tiltlab(&["parse", "--config", "parse.ini", "--random-weights", "--train", "tb.conllu", "--dev", "tb.conllu", "--out", "parse"], d);
    ok(&out);
    let p = json(d.join("parse/manifest.json"));
    assert!(p["metrics"]["las"].as_f64().unwrap() <= p["metrics"]["uas"].as_f64().unwrap());
    ok(&tiltlab(&["pos", "--config", "pos.ini", "--checkpoint", "pre/encoder.ckpt", "--train", "tb.conllu", "--dev", "tb.conllu", "--out", "pos"], d));
    let acc = json(d.join("pos/manifest.json"))["metrics"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    fs::write(d.join("probe.ini"), format!("{TINY_ENCODER}[probe]\nmax_epochs = 1\ntrain_size = 50\nvalid_size = 20\ntest_size = 20\n")).unwrap();
    ok(&tiltlab(&["probe", "--config", "probe.ini", "--checkpoint", "pre/encoder.ckpt", "--out", "probe"], d));
    let csv = fs::read_to_string(d.join("probe/probe.csv")).unwrap();
    assert!(csv.starts_with("encoder_id,mode,relative_position,test_accuracy\n"));
    assert_eq!(csv.lines().count(), 7);
    let out = tiltlab(&["probe", "--config", "probe.ini", "--checkpoint", "pre/encoder.ckpt", "--mode", "mlm", "--out", "probe2"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_aggregates_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let runs = d.join("runs");
    for (i, (lang, ppl)) in [("nesting_dep", 150.0), ("nesting_dep", 152.0), ("nesting_dep", 149.0), ("uniform", 170.0), ("uniform", 172.0), ("uniform", 175.0)]
        .into_iter()
        .enumerate()
    {
        let m = serde_json::json!({
            "run_id": format!("r{i}"), "command": "transfer-lm", "language": lang,
            "architecture": "lstm", "objective": "clm", "config_sha256": "0",
            "seeds": [i, 0], "checkpoints": [], "metrics": { "ppl": ppl }, "deterministic": true,
        });
        fs::create_dir_all(runs.join(format!("r{i}"))).unwrap();
        fs::write(runs.join(format!("r{i}/manifest.json")), m.to_string()).unwrap();
    }
    let before = fs::read_dir(&runs).unwrap().count();
    let out = tiltlab(&["report", "--runs", "runs", "--metric", "ppl", "--compare", "nesting_dep:uniform", "--out", "agg.csv"], d);
    ok(&out);
    let csv = fs::read_to_string(d.join("agg.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("language,architecture,metric,n,mean,std"));
    assert!(csv.contains("nesting_dep,lstm,ppl,3,150.33"));
    let cmp: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(cmp["welch"]["p_two_sided"].as_f64().unwrap() < 0.05);
    assert_eq!(fs::read_dir(&runs).unwrap().count(), before);
    assert_eq!(tiltlab(&["report", "--runs", "runs", "--metric", "uas"], d).status.code(), Some(2));
}

#[test]
fn pretrain_fans_out_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tiltlab(&["gen", "--language", "zipf", "--size", "40", "--sentences", "50", "--out", "c.txt"], d));
    write_pretrain_config(d, "");
    ok(&tiltlab(&["pretrain", "--config", "pretrain.ini", "--corpus", "c.txt", "--seeds", "1,2,3", "--jobs", "2", "--out", "grid"], d));
    for s in 1..=3 {
        assert_eq!(json(d.join(format!("grid/seed-{s}/manifest.json")))["seeds"][0], s);
    }
    let a = fs::read(d.join("grid/seed-1/encoder.ckpt")).unwrap();
    ok(&tiltlab(&["pretrain", "--config", "pretrain.ini", "--corpus", "c.txt", "--seed", "1", "--out", "again"], d));
    assert_eq!(a, fs::read(d.join("again/encoder.ckpt")).unwrap());
}

#[test]
fn divergent_training_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tiltlab(&["gen", "--language", "zipf", "--size", "40", "--sentences", "50", "--out", "c.txt"], d));
    write_pretrain_config(d, "lr = 1e30\n");
    let out = tiltlab(&["pretrain", "--config", "pretrain.ini", "--corpus", "c.txt", "--out", "nan"], d);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
