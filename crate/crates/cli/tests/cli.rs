use std::path::Path;
use std::process::{Command, Output};

fn hmmprobe(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmprobe"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("HMMPROBE_THREADS")
        .output()
        .expect("run hmmprobe")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn wer_of_identical_transcripts_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ref.txt"), "u1 a b c\nu2 d e\n").unwrap();
    let o = hmmprobe(&["wer", "--ref", "ref.txt", "--hyp", "ref.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "WER 0.00%");
    assert!(!dir.path().join("wer.json").exists());
}

#[test]
fn wer_counts_pooled_edits() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ref.txt"), "u1 a b c\nu2 d e\n").unwrap();
    std::fs::write(dir.path().join("hyp.txt"), "u2 d e f\nu1 a x c\n").unwrap();
    let o = hmmprobe(&["wer", "--ref", "ref.txt", "--hyp", "hyp.txt", "--out", "w"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "WER 40.00%");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("w/wer.json")).unwrap()).unwrap();
    assert_eq!(summary["errors"], 2);
    assert_eq!(summary["words"], 5);
    assert!(dir.path().join("w/run.json").exists());
}

#[test]
fn wer_with_missing_hypothesis_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ref.txt"), "u1 a\nu2 b\n").unwrap();
    std::fs::write(dir.path().join("hyp.txt"), "u1 a\n").unwrap();
    let o = hmmprobe(&["wer", "--ref", "ref.txt", "--hyp", "hyp.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("u2"));
}

#[test]
fn report_on_empty_directory_names_the_missing_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmprobe(&["report", "."], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.json"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hmmprobe(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(hmmprobe(&["repro", "table9"], dir.path()).status.code(), Some(1));

    std::fs::write(dir.path().join("bad.cfg"), "gt.colour = blue\n").unwrap();
    let o = hmmprobe(&["gen-corpus", "--config", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gt.colour"));

    let o = hmmprobe(&["train-ml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"));

    let o = Command::new(env!("CARGO_BIN_EXE_hmmprobe"))
        .args(["wer", "--ref", "x", "--hyp", "x"])
        .env("HMMPROBE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmprobe(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("repro"));
}

#[test]
fn staged_pipeline_produces_reportable_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("small.cfg"), "corpus.n_train = 30\ncorpus.n_test = 6\ntrain.passes = 3\n").unwrap();
    let run = |args: &[&str]| {
        let o = hmmprobe(args, p);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["gen-corpus", "--config", "small.cfg", "--out", "gen"]);
    for f in ["train.hmpc", "test.hmpc", "model.json", "train.txt", "test.txt", "run.json", "config.cfg"] {
        assert!(p.join("gen").join(f).is_file(), "{f}");
    }
    run(&["train-ml", "--config", "small.cfg", "--model", "gen/model.json", "--corpus", "gen/train.hmpc", "--out", "ml"]);
    let log = std::fs::read_to_string(p.join("ml/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let o = run(&["decode", "--model", "ml/model.json", "--corpus", "gen/test.hmpc", "--out", "dec"]);
    assert!(stdout(&o).starts_with("WER "));
    let o2 = run(&["wer", "--ref", "gen/test.txt", "--hyp", "dec/hyp.txt"]);
    assert_eq!(stdout(&o), stdout(&o2));

    run(&["resample", "--model", "gen/model.json", "--corpus", "gen/train.hmpc", "--template", "gen/test.hmpc", "--out", "res"]);
    assert!(p.join("res/urns.hmpu").is_file());
    run(&["regions", "--model", "gen/model.json", "--real", "gen/test.hmpc", "--resampled", "res/resampled.hmpc", "--out", "reg"]);
    assert!(p.join("reg/regions_s1s2s3.hmpc").is_file());

    let o = run(&["report", "reg"]);
    assert!(stdout(&o).contains("1 tables"));
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("reg/report.json")).unwrap()).unwrap();
    assert_eq!(index["command"], "regions");
    assert_eq!(index["tables"][0]["file"], "region_stats.csv");
    assert_eq!(index["tables"][0]["rows"], 6);
}

#[test]
fn report_rejects_a_table_with_the_wrong_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("small.cfg"), "corpus.n_train = 4\ncorpus.n_test = 2\n").unwrap();
    let o = hmmprobe(&["gen-corpus", "--config", "small.cfg", "--out", "gen"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = hmmprobe(&["train-ml", "--model", "gen/model.json", "--corpus", "gen/train.hmpc", "--out", "ml"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    std::fs::write(p.join("ml/train_log.csv"), "iteration,loglik\n0,-1\n").unwrap();
    let o = hmmprobe(&["report", "ml"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train_log.csv"));
    std::fs::remove_file(p.join("ml/model.json")).unwrap();
    let o = hmmprobe(&["report", "ml"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.json"));
}

#[test]
fn seed_flag_selects_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("small.cfg"), "corpus.n_train = 3\ncorpus.n_test = 1\n").unwrap();
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let o = hmmprobe(&["gen-corpus", "--config", "small.cfg", "--seed", seed, "--out", out], p);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &str| std::fs::read(p.join(d).join("train.hmpc")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let rec = |d: &str| std::fs::read_to_string(p.join(d).join("run.json")).unwrap();
    assert_eq!(rec("a"), rec("b"));
}
