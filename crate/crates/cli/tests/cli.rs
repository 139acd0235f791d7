use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sfcurves"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/micro.csv")
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const SMALL: &str = r#"{"seed": 3,
  "sampler": {"iterations": 600, "burn_in": 200, "thin": 4},
  "simulate": {"replicates": 2, "points_per_curve": 25, "grid_side": 2, "mask_count": 4},
  "predict": {"target_times": {"kind": "uniform", "count": 40}}}"#;

#[test]
fn micro_fixture_fit_meets_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"sampler": {"iterations": 2000, "burn_in": 500, "thin": 10}}"#,
    );
    let out = dir.path().join("fit");
    let start = Instant::now();
    run(&[
        "fit",
        "--config",
        &cfg,
        "--bases",
        "4",
        "--data",
        fixture().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(start.elapsed().as_secs_f64() < 60.0);
    let draws = String::from_utf8(read(out.join("draws.csv"))).unwrap();
    assert_eq!(draws.lines().count(), 1 + 150);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["retained"], 150);
    assert_eq!(manifest["site_ids"].as_array().unwrap().len(), 3);
    let imputed = String::from_utf8(read(out.join("imputed.csv"))).unwrap();
    assert_eq!(imputed.lines().count(), 1 + 5);
}

#[test]
fn every_subcommand_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let targets = dir.path().join("targets.csv");
    std::fs::write(&targets, "site_id,x,y_coord\nnew1,0.5,0.5\nnew2,2,2\n").unwrap();
    let pass = |tag: &str| -> PathBuf {
        let root = dir.path().join(tag);
        let p = |s: &str| root.join(s).to_str().unwrap().to_string();
        run(&["simulate", "--config", &cfg, "--out", &p("sim")]);
        run(&[
            "fit",
            "--config",
            &cfg,
            "--data",
            &p("sim/rep_000/data.csv"),
            "--out",
            &p("fit"),
        ]);
        run(&[
            "predict",
            "--config",
            &cfg,
            "--fit",
            &p("fit"),
            "--targets",
            targets.to_str().unwrap(),
            "--out",
            &p("pred"),
        ]);
        run(&[
            "report",
            "--config",
            &cfg,
            "--predictions",
            &p("fit/fitted.csv"),
            "--truth",
            &p("sim/rep_000/truth_curves.csv"),
            "--out",
            &p("rep"),
        ]);
        run(&[
            "preprocess-pm10",
            "--config",
            &cfg,
            "--synthetic",
            "3",
            "--out",
            &p("pm10"),
        ]);
        root
    };
    let (a, b) = (pass("a"), pass("b"));
    for f in [
        "sim/sites.csv",
        "sim/rep_000/data.csv",
        "sim/rep_000/truth_curves.csv",
        "sim/rep_000/held_out.csv",
        "sim/rep_001/data.csv",
        "fit/draws.csv",
        "fit/fitted.csv",
        "fit/imputed.csv",
        "pred/predictions.csv",
        "pred/predictions.json",
        "rep/metrics.csv",
        "rep/exceedance.csv",
        "rep/flags.csv",
        "rep/bands.csv",
        "pm10/raw_hourly.csv",
        "pm10/dataset.csv",
        "pm10/categories.csv",
        "pm10/counts.csv",
    ] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs");
    }
    // a different seed changes the data
    let c = dir.path().join("c");
    run(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_ne!(
        read(a.join("sim/rep_000/data.csv")),
        read(c.join("rep_000/data.csv"))
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let data = fixture();
    for t in ["1", "3"] {
        let out = dir.path().join(t);
        run(&[
            "fit",
            "--config",
            &cfg,
            "--threads",
            t,
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert_eq!(
        read(dir.path().join("1/draws.csv")),
        read(dir.path().join("3/draws.csv"))
    );
}

#[test]
fn basis_sweep_writes_one_directory_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"basis": {"counts": [3, 5]}, "sampler": {"iterations": 300, "burn_in": 100, "thin": 2}}"#,
    );
    let out = dir.path().join("sweep");
    run(&[
        "fit",
        "--config",
        &cfg,
        "--data",
        fixture().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let header = |k: usize| {
        String::from_utf8(read(out.join(format!("bases_{k}/draws.csv"))))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert!(header(3).contains("theta_2_s03") && !header(3).contains("theta_3_"));
    assert!(header(5).contains("theta_4_s03"));
}

fn error_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(out.stderr.trim_ascii())
        .unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn failures_exit_with_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin()
        .args([
            "fit",
            "--data",
            "/no/such/file.csv",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(error_of(&missing)["error"]["kind"], "input");

    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "site_id,x,y_coord,t,value,missing\na,0,0,0,1,0\na,0,0,1,x,0\n",
    )
    .unwrap();
    let parse = bin()
        .args(["fit", "--data", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(parse.status.code(), Some(2));
    assert!(error_of(&parse)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("row 3"));

    let cfg = write_config(
        dir.path(),
        r#"{"sampler": {"iterations": 10, "burn_in": 20}}"#,
    );
    let conf = bin()
        .args([
            "fit",
            "--config",
            &cfg,
            "--data",
            fixture().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(conf.status.code(), Some(4));
    assert_eq!(error_of(&conf)["error"]["kind"], "config");

    let usage = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(4));
}

#[test]
fn config_init_emits_loadable_defaults() {
    let dir = tempfile::tempdir().unwrap();
    run(&["config", "init", "--out", dir.path().to_str().unwrap()]);
    let text = std::fs::read_to_string(dir.path().join("config.json")).unwrap();
    let cfg = sfcurves::config::RunConfig::from_json(&text).unwrap();
    assert_eq!(cfg, sfcurves::config::RunConfig::default());
    assert_eq!(cfg.thresholds.levels, vec![3.0, 3.6, 4.3]);
}

#[test]
fn report_flags_sites_that_exceed_most_days() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.csv");
    let mut text = String::from("site_id,x,y_coord,t,mean,hpd_lo,hpd_hi\n");
    for d in 0..365 {
        let high = if d % 10 == 0 { 3.4 } else { 3.9 };
        text += &format!("polluted,0,0,{d},{high},{},{}\n", high - 0.3, high + 0.3);
        text += &format!("clean,1,1,{d},2.5,2.2,2.8\n");
    }
    std::fs::write(&pred, text).unwrap();
    let out = dir.path().join("rep");
    run(&[
        "report",
        "--predictions",
        pred.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let flags = std::fs::read_to_string(out.join("flags.csv")).unwrap();
    assert!(
        flags
            .lines()
            .any(|l| l.starts_with("polluted,") && l.ends_with(",true")),
        "{flags}"
    );
    assert!(flags.lines().any(|l| l == "clean,0.0,false"), "{flags}");
    let ex = std::fs::read_to_string(out.join("exceedance.csv")).unwrap();
    for level in ["3.0", "3.6", "4.3"] {
        assert!(
            ex.lines()
                .any(|l| l == format!("clean,{level},0.0,0.0,0.0")),
            "{ex}"
        );
    }
}

#[test]
fn predict_uses_nearest_site_times_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"sampler": {"iterations": 300, "burn_in": 100, "thin": 2}, "predict": {"target_times": {"kind": "nearest_site"}}}"#,
    );
    let fit = dir.path().join("fit");
    let data = fixture();
    run(&[
        "fit",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        fit.to_str().unwrap(),
    ]);
    let targets = dir.path().join("t.csv");
    std::fs::write(&targets, "site_id,x,y_coord\nnear_s01,0.01,0.02\n").unwrap();
    let pred = dir.path().join("pred");
    let missing_data = bin()
        .args([
            "predict",
            "--config",
            &cfg,
            "--fit",
            fit.to_str().unwrap(),
            "--targets",
            targets.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(missing_data.status.code(), Some(4));
    run(&[
        "predict",
        "--config",
        &cfg,
        "--fit",
        fit.to_str().unwrap(),
        "--targets",
        targets.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    let rows = std::fs::read_to_string(pred.join("predictions.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let s01 = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("s01,"))
        .count();
    assert_eq!(rows, s01);
}
