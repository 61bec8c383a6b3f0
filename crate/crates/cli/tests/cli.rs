use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use registra_core::inspection::load_image;
use serde_json::Value;

fn registra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_registra")).args(args).output().expect("spawn registra")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn demo() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("demo");
    let o = registra(&["demo", "--out", p(&dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (tmp, dir)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn validate_exit_codes() {
    let (tmp, dir) = demo();
    let recipe = dir.join("recipe.json");
    assert_eq!(code(&registra(&["validate", "--recipe", p(&recipe)])), 0);

    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&recipe).unwrap()).unwrap();
    let conns = doc["graph"]["connections"].as_array_mut().unwrap();
    let first = conns[0].clone();
    conns.push(serde_json::json!({"from": first["to"], "to": first["from"]}));
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let o = registra(&["validate", "--recipe", p(&bad)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(code(&registra(&["validate", "--recipe", p(&tmp.path().join("missing.json"))])), 4);
    assert_eq!(code(&registra(&["validate"])), 3, "usage errors are config errors");
}

#[test]
fn inspect_exit_codes_and_outputs() {
    let (tmp, dir) = demo();
    let recipe = dir.join("recipe.json");
    for (image, expected) in [("source.png", 0), ("warped.png", 0), ("defect.png", 1), ("noise.png", 2)] {
        let report = tmp.path().join(format!("{image}.json"));
        let o = registra(&["inspect", "--recipe", p(&recipe), "--image", p(&dir.join(image)), "--report", p(&report)]);
        assert_eq!(code(&o), expected, "{image}: {}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        let verdict = ["PASS", "FAIL", "REJECT-NO-REGISTRATION"][expected as usize];
        assert_eq!(v["overall"], verdict);
    }

    let overlay = tmp.path().join("o.png");
    let ann = tmp.path().join("a.json");
    let o = registra(&[
        "inspect",
        "--recipe",
        p(&recipe),
        "--image",
        p(&dir.join("warped.png")),
        "--overlay",
        p(&overlay),
        "--annotations",
        p(&ann),
        "--csv",
    ]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let mut lines = stdout.lines();
    assert!(lines.next().unwrap().starts_with("image,verdict,registration_score"));
    assert!(lines.next().unwrap().contains(",PASS,"));
    assert!(std::fs::read(&overlay).unwrap().starts_with(b"\x89PNG"));
    let ann: Value = serde_json::from_str(&std::fs::read_to_string(&ann).unwrap()).unwrap();
    assert!(ann.as_array().is_some_and(|a| !a.is_empty()));

    assert_eq!(code(&registra(&["inspect", "--recipe", p(&recipe), "--image", p(&dir.join("nope.png"))])), 4);
}

#[test]
fn synth_then_register_recovers_shift() {
    let (tmp, dir) = demo();
    let recipe = dir.join("recipe.json");
    let same = tmp.path().join("same.png");
    assert_eq!(code(&registra(&["synth", "--image", p(&dir.join("source.png")), "--out", p(&same)])), 0);
    let a = load_image(&dir.join("source.png")).unwrap();
    let b = load_image(&same).unwrap();
    assert_eq!(a, b, "identity synth reproduces the input");

    let o = registra(&["register", "--recipe", p(&recipe), "--image", p(&same)]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["score"].as_f64().unwrap() >= 0.999, "{v}");
    for (k, want) in [("tx", 0.0), ("ty", 0.0), ("theta_deg", 0.0), ("scale", 1.0)] {
        assert!((v["transform"][k].as_f64().unwrap() - want).abs() < 1e-3, "{v}");
    }

    let shifted = tmp.path().join("shifted.png");
    let o =
        registra(&["synth", "--image", p(&dir.join("source.png")), "--tx", "7", "--ty", "-4", "--out", p(&shifted)]);
    assert_eq!(code(&o), 0);
    let o = registra(&["register", "--recipe", p(&recipe), "--image", p(&shifted)]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["transform"]["tx"].as_f64().unwrap() - 7.0).abs() < 0.25, "{v}");
    assert!((v["transform"]["ty"].as_f64().unwrap() + 4.0).abs() < 0.25, "{v}");

    let o = registra(&["register", "--recipe", p(&recipe), "--image", p(&dir.join("noise.png"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn batch_stats_csv_and_jobs() {
    let (tmp, dir) = demo();
    let recipe = dir.join("recipe.json");
    let run = |jobs: &str| {
        let csv = tmp.path().join(format!("out{jobs}.csv"));
        let o = registra(&["batch", "--recipe", p(&recipe), "--dir", p(&dir), "--jobs", jobs, "--csv", p(&csv)]);
        (o, std::fs::read_to_string(&csv).unwrap())
    };
    let (one, csv_one) = run("1");
    let (many, csv_many) = run("8");
    assert_eq!(code(&one), 1, "not everything passes");
    assert_eq!(one.stdout, many.stdout);
    assert_eq!(csv_one, csv_many);
    let stats: Value = serde_json::from_slice(&one.stdout).unwrap();
    // source and warped pass; defect and texture fail; noise is rejected
    assert_eq!(stats["total"], 5);
    assert_eq!(stats["pass"], 2);
    assert_eq!(stats["fail"], 2);
    assert_eq!(stats["reject"], 1);
    assert_eq!(csv_one.lines().count(), 6);

    let list = tmp.path().join("list.txt");
    std::fs::write(&list, format!("{}\n{}\n", p(&dir.join("source.png")), p(&dir.join("warped.png")))).unwrap();
    let o = registra(&["batch", "--recipe", p(&recipe), "--list", p(&list)]);
    assert_eq!(code(&o), 0);

    std::fs::write(&list, "").unwrap();
    let o = registra(&["batch", "--recipe", p(&recipe), "--list", p(&list)]);
    assert_eq!(code(&o), 0);
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["total"], 0);

    std::fs::write(&list, "gone.png\n").unwrap();
    let o = registra(&["batch", "--recipe", p(&recipe), "--list", p(&list)]);
    assert_eq!(code(&o), 1);
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["io_error"], 1);
}
