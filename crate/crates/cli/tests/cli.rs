use std::path::Path;

use geompnn::eval::parse_summary;
use geompnn::io::read_manifest;
use geompnn::train::read_history;
use geompnn_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["geompnn"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = cli(args);
    assert_eq!(code, EXIT_OK, "{args:?}: {err}");
    out
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn generate(dir: &Path, count: &str, seed: &str) {
    ok(&[
        "generate",
        "--count",
        count,
        "--out",
        &s(dir),
        "--seed",
        seed,
        "--n-volume",
        "300",
        "--n-surface",
        "48",
    ]);
}

const SMALL: [&str; 10] = [
    "--hidden",
    "6",
    "--mlp-depth",
    "1",
    "--surface-layers",
    "1",
    "--s2v-layers",
    "1",
    "--subsample-n",
    "100",
];

#[test]
fn generate_writes_cases_and_split() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    generate(&dir, "8", "1");
    assert_eq!(read_manifest(dir.join("manifest.txt")).unwrap().len(), 8);
    assert_eq!(read_manifest(dir.join("train.txt")).unwrap().len(), 6);
    assert_eq!(read_manifest(dir.join("test.txt")).unwrap().len(), 2);
    assert!(dir.join("run.json").exists());

    let again = tmp.path().join("e");
    generate(&again, "8", "1");
    for f in ["case_0003.txt", "train.txt", "test.txt"] {
        assert_eq!(
            std::fs::read(dir.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap()
        );
    }
}

#[test]
fn train_eval_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "4", "2");
    let run_dir = tmp.path().join("run");
    let (m, o) = (s(&data.join("train.txt")), s(&run_dir));
    let mut args = vec![
        "train",
        "--manifest",
        &m,
        "--out",
        &o,
        "--field",
        "p",
        "--variant",
        "inlet",
        "--log-pressure",
        "--epochs",
        "2",
    ];
    args.extend_from_slice(&SMALL);
    ok(&args);
    let hist = read_history(&run_dir.join("p_inlet.loss.txt")).unwrap();
    assert_eq!(hist.len(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["runs"][0]["log_pressure"], true);

    let eval_dir = tmp.path().join("eval");
    let out = ok(&[
        "eval",
        "--manifest",
        &s(&data.join("manifest.txt")),
        "--checkpoint",
        &s(&run_dir.join("p_inlet.ckpt")),
        "--out",
        &s(&eval_dir),
        "--subsample-n",
        "348",
        "--save-predictions",
    ]);
    assert!(out.contains("inlet"));
    let lines = std::fs::read_to_string(eval_dir.join("report.lines")).unwrap();
    let summary = parse_summary(&lines, Path::new("report.lines")).unwrap();
    assert_eq!(summary.len(), 1);
    assert!(summary[0].mse_full.is_finite());
    // subsample equal to the mesh size: both MSEs see the same points
    assert_eq!(summary[0].reldiff, Some(0.0));

    let rep = tmp.path().join("rep");
    ok(&[
        "report",
        "--predictions",
        &s(&eval_dir.join("predictions.json")),
        "--out",
        &s(&rep),
    ]);
    assert_eq!(
        lines,
        std::fs::read_to_string(rep.join("report.lines")).unwrap()
    );
}

#[test]
fn all_fields_trains_four_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "2", "3");
    let run_dir = tmp.path().join("run");
    let (m, o) = (s(&data.join("manifest.txt")), s(&run_dir));
    let mut args = vec![
        "train",
        "--manifest",
        &m,
        "--out",
        &o,
        "--all-fields",
        "--epochs",
        "1",
    ];
    args.extend_from_slice(&SMALL);
    ok(&args);
    for stem in ["ux_sph", "uy_sph", "p_inlet", "nut_inlet"] {
        assert!(run_dir.join(format!("{stem}.ckpt")).exists(), "{stem}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(
        cli(&["train", "--manifest", "m", "--out", "o"]).0,
        EXIT_USAGE
    );
    assert_eq!(
        cli(&["train", "--manifest", "m", "--out", "o", "--field", "rho"]).0,
        EXIT_USAGE
    );
    let o = s(&tmp.path().join("o"));
    assert_eq!(
        cli(&[
            "train",
            "--manifest",
            "m",
            "--out",
            &o,
            "--field",
            "ux",
            "--epochs",
            "0"
        ])
        .0,
        EXIT_USAGE
    );
    let missing = s(&tmp.path().join("missing.txt"));
    assert_eq!(
        cli(&[
            "train",
            "--manifest",
            &missing,
            "--out",
            &o,
            "--field",
            "ux"
        ])
        .0,
        EXIT_DATA
    );
    let (code, _, err) = cli(&[
        "eval",
        "--manifest",
        &missing,
        "--checkpoint",
        &missing,
        "--out",
        &o,
    ]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("missing.txt"));
    assert_eq!(cli(&["--help"]).0, EXIT_OK);
}

#[test]
fn gradcheck_is_deterministic() {
    let a = ok(&["gradcheck", "--seed", "4"]);
    let b = ok(&["gradcheck", "--seed", "4"]);
    assert_eq!(a, b);
}

#[test]
fn feature_dump_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "1", "5");
    let out = ok(&[
        "features",
        "--case",
        &s(&data.join("case_0000.txt")),
        "--variant",
        "polar",
        "--point",
        "2",
        "--point",
        "60",
    ]);
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split(' ').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "case_0000");
    assert_eq!(rows[1][1], "60");
    assert_eq!(rows[0].len(), 2 + 19);
}

#[test]
fn graph_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "1", "6");
    let g = tmp.path().join("g.txt");
    ok(&[
        "graph",
        "--case",
        &s(&data.join("case_0000.txt")),
        "--kind",
        "surf2vol",
        "--k",
        "3",
        "--out",
        &s(&g),
    ]);
    let text = std::fs::read_to_string(&g).unwrap();
    assert_eq!(text.lines().count(), 3 * 348);
}
