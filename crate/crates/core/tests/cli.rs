use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_annobench"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn templates_lists_nine() {
    let out = bin().arg("templates").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 9);
}

#[test]
fn scaffold_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("t1");
    let out = bin().args(["scaffold", "task1_long_doc"]).arg(&target).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin().arg("validate").arg(target.join("config.yaml")).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("ok:") && stdout.contains("12 instance(s)"), "{stdout}");

    // Scaffolding again refuses to overwrite.
    let out = bin().args(["scaffold", "task1_long_doc"]).arg(&target).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn validate_reports_issues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.yaml");
    std::fs::write(&cfg, "task_name: x\ndata_files: [missing.csv]\nid_field: id\ntext_field: text\nschemes: []\n").unwrap();
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn init_from_answers_file() {
    let dir = tempfile::tempdir().unwrap();
    let answers = annobench::gallery::template("task2_short_doc").unwrap().file("wizard_answers.txt").unwrap();
    let answers_path = dir.path().join("answers.txt");
    std::fs::write(&answers_path, answers).unwrap();
    let out_path = dir.path().join("config.yaml");
    let out = bin().arg("init").arg("--answers").arg(&answers_path).arg("--out").arg(&out_path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let cfg = annobench::TaskConfig::from_yaml_str(&text, &out_path).unwrap();
    assert_eq!(cfg.label_count(), 22);

    let again = bin().arg("init").arg("--answers").arg(&answers_path).arg("--out").arg(&out_path).output().unwrap();
    assert!(!again.status.success(), "existing file needs --force");
}
