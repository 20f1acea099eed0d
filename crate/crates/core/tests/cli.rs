use std::fs;
use std::path::Path;
use std::process::Command;

use epr_core::cli::run_cli;
use epr_core::io::RunManifest;

fn epr(args: &[&str]) -> i32 {
    let mut argv = vec!["epr".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_cli(&argv)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, study: &str, m: &str) {
    assert_eq!(epr(&["simulate", "--study", study, "--m", m, "--seed", "7", "--out", path(dir)]), 0);
}

fn fit(sim: &Path, out: &Path, extra: &[&str]) -> i32 {
    let data = sim.join("observations.csv");
    let covs = sim.join("covariates.csv");
    let config = sim.join("config.toml");
    let mut args = vec![
        "fit",
        "--data",
        path(&data),
        "--covariates",
        path(&covs),
        "--config",
        path(&config),
        "--reps",
        "40",
        "--subset-size",
        "150",
        "--seed",
        "3",
        "--out",
        path(out),
    ];
    args.extend_from_slice(extra);
    epr(&args)
}

fn digests(manifest: &Path) -> Vec<(String, String)> {
    let m = RunManifest::load(manifest).unwrap();
    m.outputs
        .into_iter()
        .map(|d| {
            let name = Path::new(&d.path).file_name().unwrap().to_string_lossy().into_owned();
            (name, d.sha256)
        })
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "biv", "1000");
    simulate(&b, "biv", "1000");
    let da = digests(&a.join("manifest.json"));
    assert_eq!(da.len(), 5);
    assert_eq!(da, digests(&b.join("manifest.json")));
    let text = fs::read_to_string(a.join("observations.csv")).unwrap();
    assert_eq!(text.lines().count(), 2001);
}

#[test]
fn fit_then_metrics_writes_six_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let out = tmp.path().join("fit");
    simulate(&sim, "biv", "400");
    assert_eq!(fit(&sim, &out, &["--store-replicates"]), 0);
    for f in [
        "latent_summary.csv",
        "response_summary.csv",
        "coefficient_summary.csv",
        "fit_scores.csv",
        "replicates_beta.csv",
        "replicates_eta.csv",
        "replicates_theta.csv",
        "replicates_subset.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let truth = sim.join("truth.csv");
    assert_eq!(epr(&["metrics", "--fit", path(&out), "--truth", path(&truth)]), 0);
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    let lines: Vec<&str> = scores.lines().collect();
    assert_eq!(lines[0], "type,mspe,mse,hove,pmcc,crps,waic");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 7);
        assert!(!line.contains("NA"), "{line}");
    }
    let beta = fs::read_to_string(out.join("replicates_beta.csv")).unwrap();
    assert_eq!(beta.lines().count(), 41);
}

#[test]
fn fit_digests_do_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "pois", "300");
    let one = tmp.path().join("one");
    let three = tmp.path().join("three");
    assert_eq!(fit(&sim, &one, &["--threads", "1"]), 0);
    assert_eq!(fit(&sim, &three, &["--threads", "3"]), 0);
    assert_eq!(digests(&one.join("manifest.json")), digests(&three.join("manifest.json")));
}

#[test]
fn predict_reproduces_the_fit_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let out = tmp.path().join("fit");
    simulate(&sim, "gauss", "200");
    assert_eq!(fit(&sim, &out, &[]), 0);
    let latent = tmp.path().join("latent.csv");
    assert_eq!(epr(&["predict", "--fit", path(&out), "--out", path(&latent)]), 0);
    let response = tmp.path().join("response.csv");
    assert_eq!(
        epr(&["predict", "--fit", path(&out), "--out", path(&response), "--scale", "response-mean"]),
        0
    );
    assert_eq!(
        fs::read_to_string(&response).unwrap(),
        fs::read_to_string(out.join("response_summary.csv")).unwrap()
    );
    // the latent table matches the fit's apart from the trailing log-scale column
    let fitted: Vec<String> = fs::read_to_string(out.join("latent_summary.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect();
    let predicted: Vec<String> = fs::read_to_string(&latent).unwrap().lines().map(str::to_string).collect();
    assert_eq!(fitted, predicted);
}

#[test]
fn elbow_writes_one_row_per_grid_point() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "biv", "600");
    let out = tmp.path().join("elbow");
    let args = [
        "elbow",
        "--grid",
        "50,100,200,400",
        "--data",
        path(&sim.join("observations.csv")),
        "--covariates",
        path(&sim.join("covariates.csv")),
        "--config",
        path(&sim.join("config.toml")),
        "--reps",
        "30",
        "--truth",
        path(&sim.join("truth.csv")),
        "--out",
        path(&out),
    ]
    .map(str::to_string);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(epr(&args), 0);
    let text = fs::read_to_string(out.join("elbow.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,mspe_type1,mspe_type2,hove_type1,hove_type2,wall_seconds");
    let ns: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["50", "100", "200", "400"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(epr(&["fit", "--bogus"]), 1);
    assert_eq!(epr(&["simulate", "--study", "nope", "--m", "100", "--out", path(tmp.path())]), 1);

    let sim = tmp.path().join("sim");
    simulate(&sim, "gauss", "100");
    let obs = sim.join("observations.csv");
    let mut text = fs::read_to_string(&obs).unwrap();
    text.push_str("999,5,1,not-a-number,0,1\n");
    fs::write(&obs, text).unwrap();
    assert_eq!(fit(&sim, &tmp.path().join("fit"), &[]), 2);
}

#[test]
fn binary_reports_data_errors_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.csv");
    let output = Command::new(env!("CARGO_BIN_EXE_epr"))
        .args(["fit", "--data", path(&missing), "--covariates", path(&missing), "--config"])
        .arg(tmp.path().join("none.toml"))
        .args(["--out", path(tmp.path())])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}
