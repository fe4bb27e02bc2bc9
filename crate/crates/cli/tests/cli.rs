use std::path::Path;
use std::process::{Command, Output};

fn fairvec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairvec"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&fairvec(tmp.path(), &["--no-such-flag"])), 1);
    assert_eq!(code(&fairvec(tmp.path(), &["train"])), 1);
    std::fs::write(tmp.path().join("bad.json"), r#"{"data":{"synth":{}},"model":"advdr","task":"cls"}"#).unwrap();
    let o = fairvec(tmp.path(), &["--config", "bad.json", "train"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
    std::fs::write(tmp.path().join("plain.json"), r#"{"data":{"synth":{}},"model":"advcls","task":"cls"}"#).unwrap();
    assert_eq!(code(&fairvec(tmp.path(), &["--config", "plain.json", "search"])), 1);
}

#[test]
fn divergence_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("hot.json"),
        r#"{"data":{"synth":{"n_per_group":50}},"model":"advcls","task":"cls","params":{"lr":1e306}}"#,
    )
    .unwrap();
    let o = fairvec(tmp.path(), &["--config", "hot.json", "train"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_then_train_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fairvec(tmp.path(), &["--seed", "2", "--out", "data", "synth", "--n-per-group", "60", "--target", "orthogonal"]);
    assert!(o.status.success());
    std::fs::write(
        tmp.path().join("csv.json"),
        r#"{"data":{"csv":{"csv":"data/data.csv","schema":"data/schema.json"}},"model":"fairnf-bce","task":"cls",
            "params":{"epochs":3,"layers":2}}"#,
    )
    .unwrap();
    let o = fairvec(tmp.path(), &["--config", "csv.json", "--out", "m", "train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.json", "normalization.json", "train_report.json"] {
        assert!(tmp.path().join("m").join(f).exists(), "{f}");
    }
    let o = fairvec(tmp.path(), &["--config", "csv.json", "--out", "a", "analyze", "--model", "m", "--feature", "x0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(tmp.path().join("a/corrections.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}
