mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use panobench::eval::{run_eval, EvalOptions, ItemStatus, RunManifest, AGGREGATE_LABEL, ITEMS_CSV, REPORT_JSON, SUMMARY_TXT};
use panobench::{Error, Panorama, Raster};
use serde_json::json;
use sha2::{Digest, Sha256};

use common::{engineered_pair, write_json, CLASSES, TABLE_ROWS};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval5/manifest.json")
}

fn no_views() -> EvalOptions {
    EvalOptions {
        render_views: false,
        ..EvalOptions::default()
    }
}

/// Parses `eval_items.csv` into (header, item rows, aggregate row).
fn read_csv(dir: &Path) -> (Vec<String>, Vec<Vec<String>>, Vec<String>) {
    let mut r = csv::Reader::from_path(dir.join(ITEMS_CSV)).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut rows: Vec<Vec<String>> = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    let agg = rows.pop().unwrap();
    assert_eq!(agg[0], AGGREGATE_LABEL);
    (header, rows, agg)
}

fn assert_aggregate_is_column_mean(dir: &Path) {
    let (header, rows, agg) = read_csv(dir);
    for col in 2..header.len() {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r[1] == "OK")
            .filter_map(|r| r[col].parse::<f64>().ok())
            .collect();
        if values.is_empty() {
            assert!(agg[col].is_empty());
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let got: f64 = agg[col].parse().unwrap();
        assert!((got - mean).abs() <= 1e-9, "{}: {got} vs {mean}", header[col]);
    }
}

fn digest_dir(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let h = hex::encode(Sha256::digest(fs::read(&p).unwrap()));
            (p.file_name().unwrap().to_string_lossy().into_owned(), h)
        })
        .collect()
}

#[test]
fn bundled_fixture_evaluates_cleanly() {
    let before = digest_dir(fixture().parent().unwrap());
    let out = tempfile::tempdir().unwrap();
    let report = run_eval(fixture(), out.path(), &EvalOptions::default()).unwrap();
    assert_eq!(report.exit_code(), 0);
    assert_eq!((report.ok_items, report.failed_items), (5, 0));
    assert_aggregate_is_column_mean(out.path());
    for f in [ITEMS_CSV, REPORT_JSON, SUMMARY_TXT] {
        assert!(out.path().join(f).is_file());
    }

    let first = report.item("room_0").unwrap();
    assert_eq!(first.consistency.as_ref().unwrap().average, 1.0);
    assert_eq!(first.views.len(), 3);
    for v in &first.views {
        let img = Raster::load_png(out.path().join(&v.path)).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
    }
    // The door is missing from both rasters of room_4.
    assert_eq!(report.item("room_4").unwrap().column("Door"), Some(None));
    assert_eq!(report.item("room_2").unwrap().scores["hpsv3"], 6.74);

    assert_eq!(digest_dir(fixture().parent().unwrap()), before);
}

#[test]
fn job_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, jobs) in [(&a, 1), (&b, 4)] {
        let opts = EvalOptions {
            jobs: Some(jobs),
            ..EvalOptions::default()
        };
        run_eval(fixture(), dir.path(), &opts).unwrap();
    }
    for f in [ITEMS_CSV, REPORT_JSON, SUMMARY_TXT] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

fn gray_panorama(w: usize, h: usize) -> Panorama {
    Panorama::new(Raster::from_fn(w, h, 3, |x, y, _| ((x + y) % 11) as f32 / 10.0).unwrap()).unwrap()
}

#[test]
fn identical_rasters_average_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gray_panorama(64, 32).raster().save_png8(d.join("p.png")).unwrap();
    let (pred, _) = engineered_pair(&[0.5; 6], 64, 32, 300);
    pred.save_png(d.join("c.png")).unwrap();
    let item = |id: &str| json!({"id": id, "panorama": "p.png", "predicted": "c.png", "reference": "c.png"});
    write_json(&d.join("m.json"), &json!({"version": "1.0", "items": [item("a"), item("b")]}));
    let report = run_eval(d.join("m.json"), d.join("out"), &no_views()).unwrap();
    assert_eq!(report.aggregate_of("Average"), Some(1.0));
}

#[test]
fn engineered_baseline_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gray_panorama(160, 80).raster().save_png8(d.join("pano.png")).unwrap();
    let mut items = Vec::new();
    for (i, row) in TABLE_ROWS.iter().filter(|r| r.group == "baselines").enumerate() {
        let (pred, reference) = engineered_pair(&row.per_class, 160, 80, 2000);
        pred.save_png(d.join(format!("pred{i}.png"))).unwrap();
        reference.save_png(d.join(format!("ref{i}.png"))).unwrap();
        items.push(json!({
            "id": row.label,
            "panorama": "pano.png",
            "predicted": format!("pred{i}.png"),
            "reference": format!("ref{i}.png"),
        }));
    }
    write_json(&d.join("m.json"), &json!({"version": "1.0", "items": items}));
    let report = run_eval(d.join("m.json"), d.join("out"), &no_views()).unwrap();
    assert_eq!(report.columns[..6], CLASSES.map(String::from));
    for row in TABLE_ROWS.iter().filter(|r| r.group == "baselines") {
        let avg = report.item(row.label).unwrap().consistency.as_ref().unwrap().average;
        assert!((avg - row.average).abs() <= 5e-4, "{}: {avg} vs {}", row.label, row.average);
    }
}

#[test]
fn missing_file_fails_only_that_item() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src = fixture();
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&src).unwrap()).unwrap();
    for f in fs::read_dir(src.parent().unwrap()).unwrap() {
        let p = f.unwrap().path();
        fs::copy(&p, d.join(p.file_name().unwrap())).unwrap();
    }
    manifest["items"][1]["predicted"] = json!("does_not_exist.png");
    write_json(&d.join("manifest.json"), &manifest);

    let report = run_eval(d.join("manifest.json"), d.join("out"), &no_views()).unwrap();
    assert_eq!(report.exit_code(), 2);
    assert_eq!((report.ok_items, report.failed_items), (4, 1));
    let failed = report.item("room_1").unwrap();
    assert_eq!(failed.status, ItemStatus::Failed);
    assert!(failed.error.as_ref().unwrap().contains("does_not_exist.png"));
    assert_aggregate_is_column_mean(&d.join("out"));
    let (_, rows, _) = read_csv(&d.join("out"));
    assert_eq!(rows[1][1], "FAILED");
    let summary = fs::read_to_string(d.join("out").join(SUMMARY_TXT)).unwrap();
    assert!(summary.contains("FAILED room_1"));
}

#[test]
fn mismatched_raster_size_fails_item() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gray_panorama(64, 32).raster().save_png8(d.join("p.png")).unwrap();
    let (small, _) = engineered_pair(&[0.5; 6], 32, 16, 50);
    small.save_png(d.join("c.png")).unwrap();
    write_json(
        &d.join("m.json"),
        &json!({"version": "1.0", "items": [{"id": "a", "panorama": "p.png", "predicted": "c.png", "reference": "c.png"}]}),
    );
    let report = run_eval(d.join("m.json"), d.join("out"), &no_views()).unwrap();
    assert_eq!(report.exit_code(), 2);
    assert!(report.aggregate_of("Average").is_none());
}

#[test]
fn malformed_manifests_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases = [
        ("empty.json", json!({"version": "1.0", "items": []})),
        ("major.json", json!({"version": "7.0", "items": [{"id": "a", "panorama": "p", "predicted": "q", "reference": "r"}]})),
        ("dup.json", json!({"version": "1.0", "items": [
            {"id": "a", "panorama": "p", "predicted": "q", "reference": "r"},
            {"id": "a", "panorama": "p", "predicted": "q", "reference": "r"}]})),
    ];
    for (name, value) in cases {
        write_json(&d.join(name), &value);
        assert!(matches!(run_eval(d.join(name), d.join("out"), &no_views()), Err(Error::Manifest(_))), "{name}");
    }
    fs::write(d.join("bad.json"), "{not json").unwrap();
    assert!(run_eval(d.join("bad.json"), d.join("out"), &no_views()).is_err());
    assert!(RunManifest::load(d.join("absent.json")).is_err());
}
