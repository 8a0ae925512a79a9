use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn speclen(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speclen"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "\
corpus = corpus.txt
prompt_len = 16
max_tokens = 24
lm.embed = 8
lm.feature = 16
lm.epochs = 1
draft.epochs = 1
ldlp.epochs = 1
probe.positions = 50
";

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("speclen.conf"),
        "seed = 3\n# comment\nk_max = lots\n",
    )
    .unwrap();
    let o = speclen(dir.path(), &["train-lm"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn missing_artifacts_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("speclen.conf"), SMALL).unwrap();
    assert!(speclen(dir.path(), &["gen-corpus", "--docs", "40"])
        .status
        .success());
    for (cmd, stage) in [
        ("train-draft", "train-lm"),
        ("collect", "train-lm"),
        ("bench", "train-lm"),
        ("probe", "train-lm"),
    ] {
        let o = speclen(dir.path(), &[cmd]);
        assert!(!o.status.success(), "{cmd}");
        assert!(stderr(&o).contains(stage), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn small_workspace_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    fs::write(ws.join("speclen.conf"), SMALL).unwrap();
    let o = speclen(ws, &["gen-corpus", "--docs", "80"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ws.join("corpus.txt").exists());

    let o = speclen(ws, &["run-all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "bench.csv",
        "threshold_sweep.csv",
        "ablation.csv",
        "length_hist.csv",
        "probe.csv",
        "bench.md",
    ] {
        assert!(ws.join("results").join(f).exists(), "{f}");
    }
    let bench = fs::read_to_string(ws.join("results/bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 11);
    assert!(bench.starts_with(
        "method,draft_len,tau,tok_s,T_total,T_draft,T_target,N_draft,N_target,N_waste"
    ));

    let ar = speclen(
        ws,
        &["decode", "the old ", "--policy", "ar", "--max-tokens", "20"],
    );
    assert!(ar.status.success(), "{}", stderr(&ar));
    let trace = ws.join("trace.jsonl");
    for policy in ["fixed", "oracle", "ddd", "ldlp", "combined"] {
        let o = speclen(
            ws,
            &[
                "decode",
                "the old ",
                "--policy",
                policy,
                "--max-tokens",
                "20",
                "--trace",
                trace.to_str().unwrap(),
            ],
        );
        assert!(o.status.success(), "{policy}: {}", stderr(&o));
        // The generated text is the first line for every greedy policy.
        assert_eq!(
            stdout(&o).lines().next(),
            stdout(&ar).lines().next(),
            "{policy}"
        );
        let lines = fs::read_to_string(&trace).unwrap();
        assert!(lines.lines().all(|l| l.starts_with("{\"iter\":")));
    }

    let o = speclen(ws, &["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ws.join("results/report.md").exists());
}
