use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tfot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfot")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

/// Shipped S1 config shortened to `steps` steps, written into `dir`.
fn short_config(dir: &Path, steps: usize, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = fs::read_to_string(configs().into_iter().find(|p| p.ends_with("s1_gp.json")).unwrap()).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["scenario"]["steps"] = steps.into();
    v["trials"] = 1.into();
    v["write_trajectories"] = true.into();
    edit(&mut v);
    let p = dir.join("cfg.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

#[test]
fn shipped_configs_validate() {
    let paths = configs();
    assert_eq!(paths.len(), 8);
    for p in paths {
        let o = tfot(&["validate", "--config", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", p.display(), stderr(&o));
        assert!(stdout(&o).contains(": ok"));
    }
}

#[test]
fn window_too_short_for_the_polynomial_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = short_config(dir.path(), 10, |v| {
        v["trackers"][2]["window_len"] = 2.into();
    });
    let o = tfot(&["validate", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("window"), "{}", stderr(&o));
}

#[test]
fn noise_dof_of_two_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = short_config(dir.path(), 10, |v| {
        v["trackers"][3]["noise_dof"] = 2.0.into();
    });
    let o = tfot(&["validate", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).to_lowercase().contains("dof") || stderr(&o).contains("degrees"), "{}", stderr(&o));
}

#[test]
fn parse_error_names_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"trials\": 3,\n  \"scenario\": ,\n}\n").unwrap();
    let o = tfot(&["validate", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3, column"), "{}", stderr(&o));
}

#[test]
fn smoke_run_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let steps = 6;
    let p = short_config(dir.path(), steps, |_| {});
    let out = dir.path().join("out");
    let o = tfot(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ARMSE"));
    for name in ["gpmt", "tfot", "tfot-gp", "tfot-stp"] {
        let csv = fs::read_to_string(out.join(format!("rmse_{name}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), steps + 1, "{name}");
        assert_eq!(csv.lines().next(), Some("k,rmse"));
    }
    let armse = fs::read_to_string(out.join("armse.csv")).unwrap();
    assert_eq!(armse.lines().count(), 5);
    assert!(armse.contains("tfot-gp,S1,"));
    let dat = fs::read_to_string(out.join("rmse.dat")).unwrap();
    assert_eq!(dat.lines().count(), steps + 1);
    let traj = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), steps + 1);
    assert!(traj.starts_with("trial,k,t,truth_x,truth_y,meas_x,meas_y,gpmt_x,gpmt_y"));
}

#[test]
fn runs_are_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = short_config(dir.path(), 12, |v| {
        v["trials"] = 5.into();
    });
    let read = |d: &Path| {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let mut results = Vec::new();
    for (i, jobs) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = tfot(&["run", "--config", p.to_str().unwrap(), "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        results.push(read(&out));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0], results[2]);

    // a different seed gives different numbers
    let out = dir.path().join("seeded");
    let o = tfot(&["run", "--config", p.to_str().unwrap(), "--seed", "99", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(read(&out), results[0]);
}

#[test]
fn scenario_listing_and_presets() {
    let o = tfot(&["scenarios", "list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for id in ["S1", "S2", "S3", "S4"] {
        assert!(text.contains(id));
    }
    let o = tfot(&["scenarios", "config", "s3", "--heavy"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scenario"]["id"], "S3");
    assert_eq!(v["noise"]["kind"], "heavy_tailed");

    let o = tfot(&["scenarios", "config", "S9"]);
    assert!(!o.status.success());
}
