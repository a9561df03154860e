use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const SUBCOMMANDS: &[&str] = &[
    "synth",
    "fit",
    "decompose",
    "forecast",
    "observe-forecast",
    "eval",
    "grid",
    "fig2",
];

fn samossa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_samossa"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn samossa")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = samossa(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares `--help` output with `tests/golden/<name>.txt`; `UPDATE_GOLDEN=1` rewrites the files.
#[test]
fn help_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut names = vec![None];
    names.extend(SUBCOMMANDS.iter().map(|s| Some(*s)));
    for sub in names {
        let mut args: Vec<&str> = sub.into_iter().collect();
        args.push("--help");
        let out = ok(&args, tmp.path());
        let text = String::from_utf8(out.stdout).unwrap();
        let path = golden_dir().join(format!("{}.txt", sub.unwrap_or("samossa")));
        if update {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
        assert_eq!(text, expected, "help for {sub:?} drifted; rerun with UPDATE_GOLDEN=1");
    }
}

#[test]
fn every_flag_is_documented() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let text = String::from_utf8(ok(&[sub, "--help"], tmp.path()).stdout).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            let body = line.trim_start();
            if !body.starts_with("--") && !body.starts_with("-o") && !body.starts_with("-h") {
                continue;
            }
            let inline = body.split("  ").filter(|w| !w.trim().is_empty()).count() >= 2;
            let below = lines
                .get(i + 1)
                .is_some_and(|next| !next.trim().is_empty() && !next.trim_start().starts_with('-'));
            assert!(inline || below, "undocumented flag in `{sub} --help`: {body}");
        }
    }
}

fn digest(dir: &Path, files: &[&str]) -> Vec<(String, String)> {
    files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(dir.join(f)).unwrap();
            (f.to_string(), format!("{:x}", Sha256::digest(bytes)))
        })
        .collect()
}

fn pipeline(dir: &Path) -> Vec<(String, String)> {
    ok(&["synth", "--preset", "table1", "--n-series", "4", "--len", "400", "--seed", "7", "-o", "data"], dir);
    ok(&["fit", "--input", "data/y.csv", "--L", "auto", "--rank", "energy:0.9", "--p", "grid", "-o", "model.json"], dir);
    ok(&["forecast", "--model", "model.json", "--horizon", "5", "-o", "fc.csv"], dir);
    ok(&["decompose", "--input", "data/y.csv", "--rank", "fixed:4", "-o", "dec"], dir);
    ok(&["eval", "--input", "data/y.csv", "--truth", "data", "--p", "grid:0,1", "-o", "eval"], dir);
    ok(&["fig2", "--sweep", "4x50,4x200", "--seeds", "2", "-o", "fig2"], dir);
    digest(
        dir,
        &[
            "data/y.csv",
            "data/f.csv",
            "data/x.csv",
            "data/truth.json",
            "model.json",
            "fc.csv",
            "dec/f_hat.csv",
            "dec/x_hat.csv",
            "eval/forecasts.csv",
            "eval/summary.json",
            "fig2/fig2.csv",
            "fig2/summary.json",
        ],
    )
}

#[test]
fn identical_argv_gives_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(pipeline(a.path()), pipeline(b.path()));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let code = |args: &[&str]| samossa(args, dir).status.code().unwrap();

    assert_eq!(code(&["fit", "--L", "0"]), 1);
    assert_eq!(code(&["fit", "--rank", "energy:1.5", "--input", "y.csv"]), 1);
    assert_eq!(code(&["fit"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["fit", "--input", "missing.csv"]), 2);

    std::fs::write(dir.join("bad.csv"), "a,b\n1,2\n3,oops\n").unwrap();
    assert_eq!(code(&["fit", "--input", "bad.csv"]), 2);

    ok(&["synth", "--preset", "table1", "--n-series", "3", "--len", "300", "-o", "d"], dir);
    assert_eq!(code(&["eval", "--input", "d/y.csv", "--p", "0", "--min-r2", "1.5"]), 3);
    assert_eq!(code(&["eval", "--input", "d/y.csv", "--p", "0", "--min-r2=-10"]), 0);
}

#[test]
fn diagnostics_are_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["fit", "--L", "0"][..], &["fit", "--input", "missing.csv"], &["bogus"]] {
        let err = String::from_utf8(samossa(args, tmp.path()).stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("samossa: error["), "{err}");
    }
}

#[test]
fn config_file_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["synth", "--preset", "fig2", "--n-series", "3", "--len", "400", "-o", "d"], dir);
    std::fs::write(
        dir.join("run.toml"),
        "input = \"d/y.csv\"\nrank = \"fixed:2\"\n[fit]\np = 2\nL = 20\n",
    )
    .unwrap();

    let out = ok(&["--config", "run.toml", "fit", "-o", "a.json"], dir);
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.contains("L=20") && line.contains("rank=fixed:2") && line.contains("p=2"), "{line}");

    let out = ok(&["--config", "run.toml", "fit", "--rank", "fixed:3", "-o", "b.json"], dir);
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.contains("L=20") && line.contains("rank=fixed:3"), "{line}");

    std::fs::write(dir.join("bad.toml"), "rnak = 2\n").unwrap();
    assert_eq!(samossa(&["--config", "bad.toml", "fit"], dir).status.code(), Some(1));
}

#[test]
fn observe_forecast_matches_recursive_one_step() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["synth", "--preset", "fig2", "--n-series", "3", "--len", "330", "-o", "d"], dir);
    let y = std::fs::read_to_string(dir.join("d/y.csv")).unwrap();
    let lines: Vec<&str> = y.lines().collect();
    std::fs::write(dir.join("train.csv"), lines[..301].join("\n")).unwrap();
    let mut test = vec![lines[0]];
    test.extend(&lines[301..]);
    std::fs::write(dir.join("test.csv"), test.join("\n")).unwrap();

    ok(&["fit", "--input", "train.csv", "--p", "2", "-o", "m.json"], dir);
    ok(&["forecast", "--model", "m.json", "-o", "one.csv"], dir);
    ok(&["observe-forecast", "--model", "m.json", "--input", "test.csv", "--save-model", "m2.json", "-o", "ob"], dir);

    let one = std::fs::read_to_string(dir.join("one.csv")).unwrap();
    let rolled = std::fs::read_to_string(dir.join("ob/forecasts.csv")).unwrap();
    assert_eq!(one.lines().nth(1), rolled.lines().nth(1));
    assert_eq!(rolled.lines().count(), 31);

    // The advanced model forecasts past the test window.
    let out = ok(&["forecast", "--model", "m2.json", "--layout", "long"], dir);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",331,"), "{text}");
}
