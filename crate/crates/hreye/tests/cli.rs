use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use hreye_core::protocol::framelog_read;
use hreye_core::EyeId;

fn hreye(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hreye"))
        .args(args)
        .current_dir(dir)
        .env_remove("HREYE_CATALOG_DIR")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hreye(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn list_names_every_luceme() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["list"]);
    for name in ["Stay", "FollowMe", "FollowYou", "WaitCMD", "Malfunction", "BatteryLevel"] {
        assert!(out.contains(name), "{name} missing from\n{out}");
    }
    assert!(out.contains("ocular lucemes:"));
}

#[test]
fn perfect_answers_score_100() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = "participant,condition,shown,values,confidence,time_s\n\
               p1,HREye-trained,Stay,100,7,4.5\n\
               p2,HREye-trained,Gaze120,120,6,6.0\n";
    fs::write(tmp.path().join("r.csv"), csv).unwrap();
    let out = ok(tmp.path(), &["score", "r.csv"]);
    let line = out.lines().find(|l| l.starts_with("accuracy")).unwrap();
    assert_eq!(line.split_whitespace().collect::<Vec<_>>(), ["accuracy", "100.0"]);
}

#[test]
fn score_with_ratings_reports_kappa() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("r.csv"),
        "participant,condition,shown,values,confidence,time_s\np1,OLED,Stay,80,7,4.0\n",
    )
    .unwrap();
    fs::write(tmp.path().join("k.txt"), "# subjects x categories\n3,0\n0,3\n").unwrap();
    let out = ok(tmp.path(), &["score", "r.csv", "--ratings", "k.txt", "--swim-time", "2", "--format", "kv"]);
    assert!(out.contains("kappa=1"), "{out}");
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["play", "Moonwalk"][..], &["score", "missing.csv"], &["play", "Gaze", "--gaze", "100"]] {
        let out = hreye(tmp.path(), args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("hreye: "), "{err}");
    }
}

#[test]
fn gaze_survives_export_and_log() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["export", "Gaze", "--gaze", "120", "--out", "g", "--repeats", "1"]);
    let mut frames: Vec<_> = fs::read_dir(tmp.path().join("g")).unwrap().map(|e| e.unwrap().path()).collect();
    frames.sort();
    let last = frames.last().unwrap().to_str().unwrap().to_string();
    let out = ok(tmp.path(), &["decode-gaze", &last, "--eye", "right"]);
    assert!(out.contains("(Gaze120)"), "{out}");

    ok(tmp.path(), &["play", "Gaze", "--gaze", "240", "-o", "g.hrlog"]);
    let out = ok(tmp.path(), &["decode-gaze", "g.hrlog"]);
    assert!(out.contains("(Gaze240)"), "{out}");

    // a miscalibrated right eye reads 45 degrees off
    ok(tmp.path(), &["export", "Gaze", "--gaze", "120", "--out", "m", "--right-offset", "45"]);
    let out = ok(tmp.path(), &["decode-gaze", &last.replace("/g/", "/m/"), "--eye", "right"]);
    assert!(out.starts_with("165."), "{out}");
}

#[test]
fn replay_renders_one_image_per_tick() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["play", "Stay", "-o", "stay.hrlog"]);
    ok(tmp.path(), &["replay", "stay.hrlog", "--out", "r"]);
    ok(tmp.path(), &["export", "Stay", "--out", "e"]);
    let names = |d: &str| {
        let mut v: Vec<_> = fs::read_dir(tmp.path().join(d)).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    assert_eq!(names("r"), names("e"));
    for n in names("r") {
        assert_eq!(fs::read(tmp.path().join("r").join(&n)).unwrap(), fs::read(tmp.path().join("e").join(&n)).unwrap());
    }
}

#[test]
fn dumped_catalog_reloads_identically() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["dump-catalog", "cat"]);
    assert!(tmp.path().join("cat/palette.conf").exists());
    ok(tmp.path(), &["export", "FollowMe", "--out", "a"]);
    ok(tmp.path(), &["--catalog-dir", "cat", "export", "FollowMe", "--out", "b"]);
    assert_eq!(fs::read(tmp.path().join("a/frame_00007.ppm")).unwrap(), fs::read(tmp.path().join("b/frame_00007.ppm")).unwrap());
}

#[test]
fn play_streams_to_a_device_process() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dev = Command::new(env!("CARGO_BIN_EXE_hreye"))
        .args(["device", "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(dev.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();
    let out = hreye(tmp.path(), &["play", "Stay", "--device", &addr, "-o", "s.hrlog"]);
    dev.kill().unwrap();
    let _ = dev.wait();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = framelog_read(&fs::read(tmp.path().join("s.hrlog")).unwrap()).unwrap();
    assert_eq!(log.records.iter().filter(|r| r.message.eye == EyeId::Left).count(), 60);
}
