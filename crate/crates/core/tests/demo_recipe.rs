use registra_core::inspection::{demo, inspect, load_image, Recipe, Verdict};

#[test]
fn demo_scene_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    demo::write_demo(dir.path()).unwrap();
    let recipe = Recipe::load(&dir.path().join("recipe.json")).unwrap();
    assert_eq!(recipe.id, "demo-plate");

    let run = |name: &str| {
        let img = load_image(&dir.path().join(name)).unwrap();
        inspect(&recipe, &img, name).report
    };

    for name in ["source.png", "warped.png"] {
        let r = run(name);
        assert_eq!(r.overall, Verdict::Pass, "{name}: {}", r.to_canonical_json());
        let angle = r.value("angle").unwrap();
        assert!((angle - 75.0).abs() < 0.2, "{name}: angle {angle}");
        let offset = r.value("hole_offset").unwrap();
        assert!((offset - 120.0).abs() < 0.5, "{name}: offset {offset}");
    }

    let warped = run("warped.png");
    let t = warped.registration.transform.unwrap();
    let (tx, ty, th, s) = demo::WARP;
    assert!((t.tx - tx).abs() < 0.5 && (t.ty - ty).abs() < 0.5, "{t:?}");
    assert!((t.theta_deg - th).abs() < 0.1 && (t.scale - s).abs() < 0.005, "{t:?}");

    let defect = run("defect.png");
    assert_eq!(defect.overall, Verdict::Fail);
    assert_eq!(defect.failing(), vec!["hole_offset"]);

    let noise = run("noise.png");
    assert_eq!(noise.overall, Verdict::Reject, "{}", noise.to_canonical_json());
    assert!(noise.measurements.is_empty());
}
