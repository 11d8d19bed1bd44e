use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn spectre(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectre"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record on stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not a JSON record: {line} ({e})"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-tests").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL: &str = r#"
seed = 5
output_dir = "out"

[data]
source = "csv"
path = "toy.csv"

[map]
n_freq = 30
"#;

/// Toy data plus one tune-train run shared by the tests that only read it.
fn trained() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = fresh_dir("trained");
        assert!(spectre(&["gen-toy", "--n", "300", "--seed", "5", "--out", "toy.csv"], &dir).status.success());
        fs::write(dir.join("exp.toml"), SMALL).unwrap();
        let out = spectre(&["tune-train", "--config", "exp.toml"], &dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    })
}

#[test]
fn gen_toy_writes_header_and_rows_deterministically() {
    let dir = fresh_dir("gen");
    assert!(spectre(&["gen-toy", "--out", "a.csv"], &dir).status.success());
    let text = fs::read_to_string(dir.join("a.csv")).unwrap();
    assert_eq!(text.lines().count(), 1001);
    assert_eq!(text.lines().next(), Some("x1,x2,s,y"));

    spectre(&["gen-toy", "--seed", "7", "--out", "b.csv"], &dir);
    spectre(&["gen-toy", "--seed", "7", "--out", "c.csv"], &dir);
    assert_eq!(fs::read(dir.join("b.csv")).unwrap(), fs::read(dir.join("c.csv")).unwrap());

    let out = spectre(&["gen-toy", "--n", "5", "--out", "d.csv"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["kind"], "config");
    assert!(!dir.join("d.csv").exists());
}

#[test]
fn tune_train_report_has_full_grid_and_all_artifacts() {
    let dir = trained();
    let report = read_json(&dir.join("out/report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["grid_records"].as_array().unwrap().len(), 20);
    assert_eq!(report["config"]["map"]["n_freq"], 30);
    for split in ["train", "val", "test", "all"] {
        let m = &report["metrics"][split];
        assert!(m["accuracy"].as_f64().unwrap() > 0.5);
        assert_eq!(m["attributes"][0]["attribute"], "s");
    }
    let records = report["bounds"]["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    assert!(records.last().unwrap()["group"].is_null());
    for f in ["model.json", "tune_result.json", "grid.csv", "splits.csv", "boundary.csv"] {
        assert!(dir.join("out").join(f).is_file(), "{f}");
    }
    let grid = fs::read_to_string(dir.join("out/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 21);
    let boundary = fs::read_to_string(dir.join("out/boundary.csv")).unwrap();
    assert_eq!(boundary.lines().count(), 100 * 100 + 1);
    // no temporaries are left behind
    assert!(fs::read_dir(dir.join("out")).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

fn without_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn rerun_reproduces_everything_but_timings() {
    let dir = trained();
    let again = fresh_dir("rerun");
    fs::copy(dir.join("toy.csv"), again.join("toy.csv")).unwrap();
    fs::write(again.join("exp.toml"), SMALL).unwrap();
    assert!(spectre(&["tune-train", "--config", "exp.toml"], &again).status.success());
    for f in ["model.json", "tune_result.json", "grid.csv", "splits.csv", "boundary.csv"] {
        assert_eq!(fs::read(dir.join("out").join(f)).unwrap(), fs::read(again.join("out").join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        without_timings(read_json(&dir.join("out/report.json"))),
        without_timings(read_json(&again.join("out/report.json")))
    );
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = fresh_dir("bad-config");
    fs::write(dir.join("empty_sigma.toml"), "[tune]\nsigma_values = []\n").unwrap();
    let out = spectre(&["tune-train", "--config", "empty_sigma.toml"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["stage"], "config");
    assert!(rec["message"].as_str().unwrap().contains("sigma_values"));
    assert!(!dir.join("spectre-out").exists());

    let out = spectre(&["tune-train", "--bogus"], &dir);
    assert_eq!(out.status.code(), Some(2));
    error_record(&out);

    let out = spectre(&["tune-train", "--data", "missing.csv"], &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lambda_sweep_gives_nested_bands_per_group() {
    let dir = trained();
    let out = spectre(&["bounds", "--config", "exp.toml"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.join("out/bounds.json"));
    let rows = report["sweeps"].as_array().unwrap();
    // groups "1", "0" and the overall row at each of the 4 grid values
    assert_eq!(rows.len(), 12);
    for group in ["0", "1", "overall"] {
        let band: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r["group"] == group)
            .map(|r| (r["lower"].as_f64().unwrap(), r["upper"].as_f64().unwrap()))
            .collect();
        assert_eq!(band.len(), 4);
        for w in band.windows(2) {
            assert!(w[1].0 <= w[0].0 + 1e-8 && w[1].1 >= w[0].1 - 1e-8, "{group}: {band:?}");
        }
    }
    let csv = fs::read_to_string(dir.join("out/bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.starts_with("parameter,value,group,lower,upper"));
    let extremal = fs::read_to_string(dir.join("out/extremal.csv")).unwrap();
    let audit = report["at_model"]["audit_size"].as_u64().unwrap() as usize;
    // both sides of 3 bounds over every audit instance
    assert_eq!(extremal.lines().count(), 1 + 6 * audit);

    // the at-model bounds match the ones in the tune-train report
    let run = read_json(&dir.join("out/report.json"));
    assert_eq!(run["bounds"], report["at_model"]);
}

/// `toy.csv` with the sensitive column replaced by `value` or dropped.
fn toy_variant(dir: &Path, value: Option<&str>) -> String {
    let text = fs::read_to_string(dir.join("toy.csv")).unwrap();
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            let c: Vec<&str> = l.split(',').collect();
            match value {
                Some(_) if i == 0 => format!("{l}\n"),
                Some(v) => format!("{},{},{v},{}\n", c[0], c[1], c[3]),
                None => format!("{},{},{}\n", c[0], c[1], c[3]),
            }
        })
        .collect()
}

#[test]
fn single_group_gives_one_band_per_grid_value() {
    let dir = trained();
    let work = fresh_dir("single-group");
    fs::write(work.join("one.csv"), toy_variant(dir, Some("a"))).unwrap();
    let model = dir.join("out/model.json");
    let o = spectre(
        &[
            "bounds", "--data", "one.csv", "--seed", "5", "--n-freq", "30", "--model", &model.to_string_lossy(),
            "--output-dir", "b", "--lambda0-grid", "0.1,1",
        ],
        &work,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&work.join("b/bounds.json"));
    let rows = report["sweeps"].as_array().unwrap();
    // the single group and the overall row coincide at both grid values
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["group"], "a");
    assert_eq!(rows[1]["group"], "overall");
    let upper = |r: &Value| r["upper"].as_f64().unwrap();
    assert!((upper(&rows[0]) - upper(&rows[1])).abs() < 1e-9);
}

#[test]
fn missing_sensitive_column_is_a_data_error_unless_overall_only() {
    let dir = trained();
    let work = fresh_dir("overall-only");
    fs::write(work.join("blind.csv"), toy_variant(dir, None)).unwrap();
    let model = dir.join("out/model.json");
    let mut args = vec![
        "bounds", "--data", "blind.csv", "--sensitive", "", "--seed", "5", "--n-freq", "30", "--model",
    ];
    let model = model.to_string_lossy();
    args.extend([model.as_ref(), "--output-dir", "o"]);
    let out = spectre(&args, &work);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("--overall-only"));
    assert!(!work.join("o/bounds.json").exists());

    args.push("--overall-only");
    let out = spectre(&args, &work);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&work.join("o/bounds.json"));
    assert!(report["sweeps"].as_array().unwrap().iter().all(|r| r["group"] == "overall"));
    assert_eq!(report["at_model"]["records"].as_array().unwrap().len(), 1);

    // `s` read as a feature no longer matches the model
    let out = spectre(&["bounds", "--config", "exp.toml", "--sensitive", "", "--output-dir", "x", "--model", "out/model.json"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("features"));
}

#[test]
fn evaluate_reproduces_report_metrics() {
    let dir = trained();
    let report = read_json(&dir.join("out/report.json"));
    let out = spectre(&["evaluate", "--model", "out/model.json", "--data", "toy.csv", "--sensitive", "s", "--out", "all.json"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&dir.join("all.json"))["metrics"], report["metrics"]["all"]);

    // training rows only, with an extra column the model never saw
    let splits = fs::read_to_string(dir.join("out/splits.csv")).unwrap();
    let train: Vec<bool> = splits.lines().skip(1).map(|l| l.ends_with(",train")).collect();
    let text = fs::read_to_string(dir.join("toy.csv")).unwrap();
    let mut lines = text.lines();
    let mut body = format!("extra,{}\n", lines.next().unwrap());
    for (l, keep) in lines.zip(&train) {
        if *keep {
            body.push_str(&format!("9.5,{l}\n"));
        }
    }
    fs::write(dir.join("train_rows.csv"), body).unwrap();
    let out = spectre(
        &["evaluate", "--model", "out/model.json", "--data", "train_rows.csv", "--sensitive", "s", "--out", "train.json"],
        dir,
    );
    assert!(out.status.success());
    assert_eq!(read_json(&dir.join("train.json"))["metrics"], report["metrics"]["train"]);
}

#[test]
fn evaluate_rejects_label_mismatches() {
    let dir = trained();
    let out = spectre(&["evaluate", "--model", "out/model.json", "--data", "toy.csv", "--label-column", "label", "--out", "x.json"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("label"));

    // `s` holds the same values as the labels' names but is accepted; a
    // column with foreign values is not
    let text = fs::read_to_string(dir.join("toy.csv")).unwrap();
    let relabeled = text.replacen(",1\n", ",yes\n", 1);
    fs::write(dir.join("relabeled.csv"), relabeled).unwrap();
    let out = spectre(&["evaluate", "--model", "out/model.json", "--data", "relabeled.csv", "--out", "x.json"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("yes"));
    assert!(!dir.join("x.json").exists());
}

#[test]
fn predict_writes_one_row_per_input() {
    let dir = trained();
    let out = spectre(&["predict", "--model", "out/model.json", "--data", "toy.csv", "--out", "pred.csv"], dir);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.join("pred.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("row,prediction,p_0,p_1"));
    assert_eq!(text.lines().count(), 301);
    for l in text.lines().skip(1) {
        let c: Vec<&str> = l.split(',').collect();
        let p: f64 = c[2].parse::<f64>().unwrap() + c[3].parse::<f64>().unwrap();
        assert!((p - 1.0).abs() < 1e-9);
    }
}
