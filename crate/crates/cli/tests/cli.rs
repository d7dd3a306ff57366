use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oamncc(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_oamncc"));
    cmd.args(args).env_remove("OAMNCC_SEED");
    if let Some(s) = env_seed {
        cmd.env("OAMNCC_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = oamncc(
        &["run", "--preset", "piracy", "--strategy", "marginal-gain", "--trials", "1000", "--seed", "7", "--out", path(dir.path())],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("piracy_marginal-gain_7.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "trial,seed,ransom_avoided,target_chosen,interdiction_success");
    assert_eq!(lines.count(), 1000);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_trials"], 1000);
    assert_eq!(summary["master_seed"], 7);
    for key in ["mean", "median", "q25", "q75", "min", "max", "n"] {
        assert!(summary["metrics"]["ransom_avoided"].get(key).is_some(), "{key}");
    }
    assert_eq!(summary["config"]["piracy.p_eventual"], "0.95");
}

#[test]
fn summary_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    let args = |out: &Path| -> Vec<String> {
        ["run", "--strategy", "closest", "--trials", "200", "--seed", "11", "--out", path(out)].iter().map(|s| s.to_string()).collect()
    };
    let mut a = args(&first);
    a.extend(["--preset", "piracy-cannons", "--set", "piracy.window_min=25"].map(String::from));
    assert_eq!(code(&oamncc(&a.iter().map(String::as_str).collect::<Vec<_>>(), None)), 0);
    let summary = first.join("summary.json");
    let mut b = args(&again);
    b.extend(["--config".to_owned(), path(&summary).to_owned()]);
    assert_eq!(code(&oamncc(&b.iter().map(String::as_str).collect::<Vec<_>>(), None)), 0);
    let name = "piracy-cannons_closest_11.csv";
    assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(again.join(name)).unwrap());
    assert_eq!(fs::read(first.join("summary.json")).unwrap(), fs::read(again.join("summary.json")).unwrap());
}

#[test]
fn seed_comes_from_the_environment_unless_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["run", "--preset", "adrift", "--strategy", "adrift-drone", "--trials", "10", "--out", path(dir.path())];
    assert_eq!(code(&oamncc(&base, Some("99"))), 0);
    assert!(dir.path().join("adrift_adrift-drone_99.csv").exists());
    let mut flagged = base.to_vec();
    flagged.extend(["--seed", "5"]);
    assert_eq!(code(&oamncc(&flagged, Some("99"))), 0);
    assert!(dir.path().join("adrift_adrift-drone_5.csv").exists());
    assert_eq!(code(&oamncc(&base, Some("not-a-number"))), 2);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let cases: [&[&str]; 6] = [
        &["run", "--preset", "piracy", "--strategy", "overboard-duty:0.9:1", "--out", out],
        &["run", "--preset", "nowhere", "--strategy", "closest", "--out", out],
        &["run", "--preset", "piracy", "--strategy", "closest", "--set", "piracy.p_eventuall=0.9", "--out", out],
        &["run", "--preset", "piracy", "--strategy", "closest", "--set", "piracy.p_eventual=1.5", "--out", out],
        &["run", "--preset", "piracy", "--strategy", "closest", "--trials", "0", "--out", out],
        &["run", "--preset", "piracy", "--out", out],
    ];
    for args in cases {
        let o = oamncc(args, None);
        assert_eq!(code(&o), 2, "{args:?}");
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(!stderr.trim().is_empty());
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0, "nothing written on failure");
}

#[test]
fn sampling_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = oamncc(
        &[
            "run", "--preset", "piracy", "--strategy", "closest", "--trials", "5", "--set", "piracy.lane_length_nm=20", "--set",
            "piracy.max_attempts=50", "--out", path(dir.path()),
        ],
        None,
    );
    assert_eq!(code(&o), 3);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(stderr.trim().lines().count(), 1);
    assert!(stderr.contains("seed"));
}

#[test]
fn replay_prints_one_trial() {
    let o = oamncc(&["run", "--preset", "piracy", "--strategy", "ransom", "--seed", "3", "--replay", "17"], None);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["trial"], 17);
    assert_eq!(doc["pipeline"]["intra_constraint"], true);
    assert!(doc["metrics"]["ransom_avoided"].is_number());
}

#[test]
fn sweep_writes_grid_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let o = oamncc(&["sweep", "--trials", "100", "--seed", "1", "--out", path(dir.path())], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "margin,ratio,policy,rescues,rtb_successes,spotted,abandoned_after_spotting");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 28);
    let duty: Vec<_> = rows.iter().filter(|r| r[2] == "duty").collect();
    assert_eq!(duty.len(), 4);
    assert!(duty.iter().all(|r| r[6] == "0"));
    let svg = fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("margin 0.95"));

    let empty = oamncc(&["sweep", "--margins", "", "--out", path(dir.path())], None);
    assert_eq!(code(&empty), 2);
    let wrong = oamncc(&["sweep", "--preset", "piracy", "--trials", "5", "--out", path(dir.path())], None);
    assert_eq!(code(&wrong), 2);
}

#[test]
fn compare_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let o = oamncc(&["compare", "--preset", "piracy", "--a", "closest", "--b", "closest", "--trials", "300", "--out", out], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("compare.json")).unwrap()).unwrap();
    assert_eq!(doc["D"], 0.0);
    assert_eq!(doc["significant"], false);
    assert_eq!(doc["meanA"], doc["meanB"]);
    let keys: Vec<&String> = doc.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 5);
    assert!(fs::read_to_string(dir.path().join("compare.svg")).unwrap().contains("<svg"));

    let o = oamncc(&["compare", "--preset", "piracy", "--a", "closest", "--b", "ransom", "--trials", "1000", "--out", out], None);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["significant"], true);

    let mismatch = oamncc(
        &["compare", "--preset", "piracy", "--a", "closest", "--b", "closest", "--metric", "rescued", "--trials", "10", "--out", out],
        None,
    );
    assert_eq!(code(&mismatch), 2);
}

#[test]
fn compare_reads_existing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    for s in ["closest", "ransom"] {
        let o = oamncc(&["run", "--preset", "piracy", "--strategy", s, "--trials", "400", "--seed", "2", "--out", out], None);
        assert_eq!(code(&o), 0);
    }
    let a = dir.path().join("piracy_closest_2.csv");
    let b = dir.path().join("piracy_ransom_2.csv");
    let o = oamncc(
        &["compare", "--csv-a", path(&a), "--csv-b", path(&b), "--metric", "ransom_avoided", "--out", out],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let from_files: Value = serde_json::from_slice(&o.stdout).unwrap();
    let o = oamncc(
        &["compare", "--preset", "piracy", "--a", "closest", "--b", "ransom", "--trials", "400", "--seed", "2", "--out", out],
        None,
    );
    let rerun: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(from_files["D"], rerun["D"]);
    let missing = oamncc(&["compare", "--csv-a", path(&a), "--csv-b", path(&b), "--metric", "rescued", "--out", out], None);
    assert_eq!(code(&missing), 2);
}

#[test]
fn presets_lists_everything() {
    let o = oamncc(&["presets"], None);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["overboard", "piracy-cannons", "adrift", "marginal-gain", "overboard-duty:<margin>:<ratio>"] {
        assert!(text.contains(name), "{name}");
    }
}
