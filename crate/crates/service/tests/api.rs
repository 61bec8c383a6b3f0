use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use registra_core::inspection::{demo, inspect, load_image, BatchItem, InspectionReport, Recipe, Stats};
use registra_service::{router, RunRecord, Store};
use serde_json::Value;
use tower::ServiceExt;

const BOUNDARY: &str = "registra-test-boundary";

enum Part<'a> {
    Text(&'a str, &'a str),
    File(&'a str, &'a str, &'a [u8]),
}

fn multipart(parts: &[Part<'_>]) -> Vec<u8> {
    let mut body = Vec::new();
    for part in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match part {
            Part::Text(name, value) => {
                body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes());
                body.extend_from_slice(value.as_bytes());
            }
            Part::File(name, file, bytes) => {
                body.extend_from_slice(
                    format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{file}\"\r\nContent-Type: image/png\r\n\r\n")
                        .as_bytes(),
                );
                body.extend_from_slice(bytes);
            }
        }
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

struct Fixture {
    _tmp: tempfile::TempDir,
    files: PathBuf,
    data: PathBuf,
    app: Router,
}

impl Fixture {
    fn new() -> Fixture {
        let tmp = tempfile::tempdir().unwrap();
        let files = tmp.path().join("files");
        demo::write_demo(&files).unwrap();
        let data = tmp.path().join("data");
        let app = router(Arc::new(Store::open(&data).unwrap()), None);
        Fixture { _tmp: tmp, files, data, app }
    }

    fn file(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.files.join(name)).unwrap()
    }

    fn recipe_text(&self) -> String {
        std::fs::read_to_string(self.files.join("recipe.json")).unwrap()
    }

    async fn send(&self, method: &str, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"));
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn put(&self, id: &str, recipe: &str, source: Option<&[u8]>, version: Option<&str>) -> (StatusCode, Value) {
        let mut parts = vec![Part::Text("recipe", recipe)];
        if let Some(s) = source {
            parts.push(Part::File("source", "source.png", s));
        }
        if let Some(v) = version {
            parts.push(Part::Text("version", v));
        }
        let (status, body) = self.send("PUT", &format!("/recipes/{id}"), Some(multipart(&parts))).await;
        (status, serde_json::from_slice(&body).unwrap())
    }

    async fn put_demo(&self) {
        let (status, body) = self.put("demo-plate", &self.recipe_text(), Some(&self.file("source.png")), None).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        assert_eq!(body["version"], 1);
    }

    async fn run(&self, image: &str) -> RunRecord {
        let bytes = self.file(image);
        let (status, body) =
            self.send("POST", "/recipes/demo-plate/runs", Some(multipart(&[Part::File("image", image, &bytes)]))).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        serde_json::from_slice(&body).unwrap()
    }

    async fn json(&self, uri: &str) -> (StatusCode, Value) {
        let (status, body) = self.send("GET", uri, None).await;
        (status, serde_json::from_slice(&body).unwrap())
    }
}

/// Every file under `dir` with its bytes, in path order.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = std::fs::read(&p).unwrap();
                out.push((p, bytes));
            }
        }
    }
    out.sort();
    out
}

#[tokio::test]
async fn put_get_roundtrip_is_lossless() {
    let f = Fixture::new();
    f.put_demo().await;
    let (status, body) = f.send("GET", "/recipes/demo-plate", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(body).unwrap(), f.recipe_text());
    let (_, list) = f.json("/recipes").await;
    assert_eq!(list, serde_json::json!([{"id": "demo-plate", "version": 1}]));
    let (status, png) = f.send("GET", "/recipes/demo-plate/source.png", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(registra_core::raster::decode(&png).unwrap(), load_image(&f.files.join("source.png")).unwrap());
}

#[tokio::test]
async fn self_inspection_report_matches_engine_bytes() {
    let f = Fixture::new();
    f.put_demo().await;
    let record = f.run("source.png").await;
    assert_eq!(record.report.overall, registra_core::inspection::Verdict::Pass);
    assert_eq!(record.seq, 1);

    let (status, served) = f.send("GET", &record.links.report, None).await;
    assert_eq!(status, StatusCode::OK);
    let recipe = Recipe::load(&f.files.join("recipe.json")).unwrap();
    let local = inspect(&recipe, &load_image(&f.files.join("source.png")).unwrap(), "source.png");
    assert_eq!(String::from_utf8(served).unwrap(), local.report.to_canonical_json());

    let (status, ann) = f.send("GET", &record.links.annotations, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(ann).unwrap(), local.annotations_json());
    let (status, png) = f.send("GET", &record.links.overlay, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(png, local.overlay_png(&load_image(&f.files.join("source.png")).unwrap()));
}

#[tokio::test]
async fn invalid_graph_is_422_with_cycle() {
    let f = Fixture::new();
    let mut doc = demo::recipe_doc("source.png");
    use registra_core::flowchart::{BlockSpec, Connection, Params};
    doc.graph.blocks.push(BlockSpec::new("m1", Params::MeasureAngle(Default::default())));
    doc.graph.blocks.push(BlockSpec::new("m2", Params::MeasureDistance));
    doc.graph.connections.push(Connection::new(("m1", "angle"), ("m2", "b")));
    doc.graph.connections.push(Connection::new(("m2", "distance"), ("m1", "a")));
    let (status, body) = f.put("demo-plate", &doc.to_canonical_json(), Some(&f.file("source.png")), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let cycle =
        body["diagnostics"].as_array().unwrap().iter().find(|d| d["code"] == "cycle").expect("cycle diagnostic");
    assert_eq!(cycle["ids"], serde_json::json!(["m1", "m2"]));
    let (status, _) = f.put("demo-plate", "{", Some(&f.file("source.png")), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = f.put("demo-plate", &f.recipe_text(), None, None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "new recipe needs a source");
    let (status, _) = f.json("/recipes/demo-plate").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn optimistic_versioning() {
    let f = Fixture::new();
    f.put_demo().await;
    let text = f.recipe_text();
    let (status, body) = f.put("demo-plate", &text, None, None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["current_version"], 1);
    let (status, body) = f.put("demo-plate", &text, None, Some("1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], 2);
    let (status, _) = f.put("demo-plate", &text, None, Some("1")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = f.put("demo-plate", &text, None, Some("two")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = f.put("bad.id", &text, None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = f.put("other", &text, Some(&f.file("source.png")), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "recipe id must match the URL");
}

#[tokio::test]
async fn dryrun_widening_flips_verdict_without_mutation() {
    let f = Fixture::new();
    f.put_demo().await;
    f.run("source.png").await;
    let before = snapshot(&f.data);
    let defect = f.file("defect.png");

    let (status, body) = f
        .send("POST", "/recipes/demo-plate/dryrun", Some(multipart(&[Part::File("image", "defect.png", &defect)])))
        .await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["report"]["overall"], "FAIL");
    let offset = v["report"]["measurements"].as_array().unwrap().iter().find(|m| m["name"] == "hole_offset").unwrap();
    let value = offset["value"].as_f64().unwrap();
    assert!(!v["annotations"].as_array().unwrap().is_empty());

    let doc = demo::recipe_doc("source.png");
    let mut tol = serde_json::to_value(&doc.tolerances).unwrap();
    for t in tol.as_array_mut().unwrap() {
        if t["measurement"] == "hole_offset" {
            t["max"] = Value::from(value.ceil() + 1.0);
        }
    }
    let tol = tol.to_string();
    let (status, body) = f
        .send(
            "POST",
            "/recipes/demo-plate/dryrun",
            Some(multipart(&[Part::File("image", "defect.png", &defect), Part::Text("tolerances", &tol)])),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["report"]["overall"], "PASS", "{}", v["report"]);

    assert_eq!(snapshot(&f.data), before, "dry runs must not touch stored state");
    let (_, runs) = f.json("/recipes/demo-plate/runs").await;
    assert_eq!(runs.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn runs_stats_and_persistence() {
    let f = Fixture::new();
    f.put_demo().await;
    let (_, empty) = f.json("/recipes/demo-plate/stats").await;
    assert_eq!(empty["total"], 0);

    let verdicts: Vec<String> = {
        let mut v = Vec::new();
        for name in ["source.png", "defect.png", "noise.png", "warped.png"] {
            v.push(f.run(name).await.report.overall.to_string());
        }
        v
    };
    assert_eq!(verdicts, ["PASS", "FAIL", "REJECT-NO-REGISTRATION", "PASS"]);

    let (_, runs) = f.json("/recipes/demo-plate/runs").await;
    let runs: Vec<RunRecord> = serde_json::from_value(runs).unwrap();
    assert_eq!(runs.iter().map(|r| r.seq).collect::<Vec<_>>(), [1, 2, 3, 4]);

    let (status, stats) = f.json("/recipes/demo-plate/stats").await;
    assert_eq!(status, StatusCode::OK);
    let stats: Stats = serde_json::from_value(stats).unwrap();
    assert_eq!((stats.total, stats.pass, stats.fail, stats.reject), (4, 2, 1, 1));
    // independent fold over the stored reports
    let reports: Vec<InspectionReport> = runs.iter().map(|r| r.report.clone()).collect();
    let values: Vec<f64> = reports.iter().filter_map(|r| r.value("hole_offset")).collect();
    let s = &stats.measurements["hole_offset"];
    assert_eq!(s.count, values.len());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!((s.mean - mean).abs() < 1e-9);
    assert_eq!(s.max, values.iter().copied().fold(f64::MIN, f64::max));
    let items: Vec<BatchItem> = reports.into_iter().map(|r| BatchItem::Done(Box::new(r))).collect();
    assert_eq!(Stats::from_items(&items), stats);

    // a fresh store over the same directory sees everything and keeps counting
    let reopened = Fixture { app: router(Arc::new(Store::open(&f.data).unwrap()), None), ..f };
    let (_, list) = reopened.json("/recipes").await;
    assert_eq!(list[0]["version"], 1);
    let next = reopened.run("source.png").await;
    assert_eq!(next.seq, 5);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let f = Fixture::new();
    for uri in ["/recipes/nope", "/recipes/nope/stats", "/recipes/nope/runs", "/runs/nope-000001/report.json"] {
        assert_eq!(f.send("GET", uri, None).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, _) = f
        .send("POST", "/recipes/nope/runs", Some(multipart(&[Part::File("image", "x.png", &f.file("source.png"))])))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    f.put_demo().await;
    let r = f.run("source.png").await;
    assert_eq!(f.send("GET", &format!("/runs/{}/secret.txt", r.run_id), None).await.0, StatusCode::NOT_FOUND);
    let (status, _) =
        f.send("POST", "/recipes/demo-plate/runs", Some(multipart(&[Part::File("image", "x.png", b"garbage")]))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}
