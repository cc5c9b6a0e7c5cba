use std::path::Path;
use std::process::Command;

fn hamforge(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hamforge"))
        .args(args)
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn generate_counts_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let o = hamforge(&[
        "generate",
        "--max-vertices",
        "4",
        "--out",
        out.to_str().unwrap(),
        "--count",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let counts = std::fs::read_to_string(out.join("counts.txt")).unwrap();
    assert_eq!(counts.lines().last(), Some("total 26"));

    let o = hamforge(&[
        "generate",
        "--max-vertices",
        "3",
        "--actions",
        "Up,Down",
        "--out",
        out.to_str().unwrap(),
        "--dot",
    ]);
    assert!(o.status.success());
    assert!(out.join("m00000.ham").exists());
    assert!(out.join("m00000.dot").exists());
}

#[test]
fn staged_commands_reproduce_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("small_experiment.toml");
    let staged = dir.path().join("staged");
    let s = staged.to_str().unwrap();
    for cmd in ["prune", "discover", "combine"] {
        let o = hamforge(&[cmd, "--config", &config, "--out", s]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = hamforge(&["eval", "--config", &config, "--out", s]);
    assert!(o.status.success());
    let staged_summary = String::from_utf8(o.stdout).unwrap();
    assert!(staged_summary.contains("median_ham_auc"));

    let full = dir.path().join("full");
    let o = hamforge(&[
        "--jobs",
        "2",
        "run",
        "--config",
        &config,
        "--out",
        full.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(full.join("summary.txt")).unwrap(),
        staged_summary
    );
    assert_eq!(
        std::fs::read_to_string(full.join("combined_manifest.txt")).unwrap(),
        std::fs::read_to_string(staged.join("combined_manifest.txt")).unwrap()
    );

    let o = hamforge(&["plotdata", "--out", full.to_str().unwrap()]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("method,seed,episode,reward,steps,normalized\n"));
    assert!(csv.lines().any(|l| l.starts_with("flat,1,")));
}

#[test]
fn bad_config_reports_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[gen]\nmax_vertexes = 3\n").unwrap();
    let o = hamforge(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
