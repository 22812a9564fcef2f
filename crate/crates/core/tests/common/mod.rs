#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use panobench::raster::ClassId;
use panobench::{ClassRaster, ClassRegistry, Panorama, Raster};

pub const CLASSES: [&str; 6] = ["Wall", "Door", "Window", "Cabinet", "Sofa", "Bed"];

/// A published spatial-consistency row: six per-class IoUs and the printed
/// average.
pub struct TableRow {
    pub group: &'static str,
    pub label: &'static str,
    pub per_class: [f64; 6],
    pub average: f64,
}

const fn row(group: &'static str, label: &'static str, per_class: [f64; 6], average: f64) -> TableRow {
    TableRow {
        group,
        label,
        per_class,
        average,
    }
}

const FULL: [f64; 6] = [0.9629, 0.6699, 0.5275, 0.5417, 0.7295, 0.7486];
const QWEN: [f64; 6] = [0.9650, 0.6770, 0.5416, 0.5594, 0.7296, 0.7489];

pub const TABLE_ROWS: [TableRow; 13] = [
    row("baselines", "Seedream 4.5", [0.8028, 0.2769, 0.2000, 0.2510, 0.3336, 0.5155], 0.3966),
    row("baselines", "Gemini 3 Pro Image", [0.8916, 0.4379, 0.3453, 0.5361, 0.3500, 0.6099], 0.5285),
    row("baselines", "Ours (FLUX)", [0.9693, 0.6578, 0.4770, 0.6816, 0.6956, 0.7423], 0.7039),
    row("baselines", "Ours (Qwen)", QWEN, 0.7036),
    row("curation", "Base + Stage 2", [0.9636, 0.6071, 0.6067, 0.5398, 0.6623, 0.7388], 0.6760),
    row("curation", "Stage 1 + Stage 2", [0.9648, 0.6174, 0.5392, 0.5009, 0.7153, 0.7596], 0.6829),
    row("curation", "Stage 1 + Stage 2 + Stage 3", FULL, 0.6967),
    row("alignment", "Base", FULL, 0.6967),
    row("alignment", "+ NFT", [0.9635, 0.6628, 0.5292, 0.5575, 0.7382, 0.7481], 0.6999),
    row("alignment", "+ DPO", [0.9640, 0.6872, 0.5449, 0.5564, 0.7264, 0.7420], 0.7035),
    row("alignment", "+ DPO + NFT", QWEN, 0.7036),
    row("prompt", "w/o Prompt-LLM", [0.9649, 0.6757, 0.6669, 0.5230, 0.7609, 0.7473], 0.7231),
    row("prompt", "w/ Prompt-LLM", FULL, 0.6967),
];

pub fn registry() -> Arc<ClassRegistry> {
    Arc::new(ClassRegistry::default_interior())
}

pub fn id(name: &str) -> ClassId {
    ClassRegistry::default_interior().id_of(name).unwrap()
}

/// Smooth test signal on the sphere, one value per channel in [0, 1].
pub fn sphere_signal(d: [f64; 3]) -> [f64; 3] {
    [
        0.5 + 0.5 * d[0],
        0.5 + 0.5 * d[1],
        0.5 + 0.25 * (d[2] * d[0] + d[1]),
    ]
}

/// Panorama whose pixel centres sample [`sphere_signal`] under the
/// equirectangular convention, computed without the crate's own mapping.
pub fn signal_panorama(width: usize, height: usize) -> Panorama {
    use std::f64::consts::PI;
    let raster = Raster::from_fn(width, height, 3, |x, y, c| {
        let lon = (x as f64 + 0.5) / width as f64 * 2.0 * PI - PI;
        let lat = PI / 2.0 - (y as f64 + 0.5) / height as f64 * PI;
        let d = [lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos()];
        sphere_signal(d)[c] as f32
    })
    .unwrap();
    Panorama::new(raster).unwrap()
}

/// Predicted/reference pair whose per-class IoUs equal `targets` up to
/// `1 / (2 * union_px)`. Each class gets a band of `union_px` pixels; the
/// first `round(t * union_px)` agree and the rest are labelled only in the
/// prediction.
pub fn engineered_pair(targets: &[f64; 6], width: usize, height: usize, union_px: usize) -> (ClassRaster, ClassRaster) {
    assert!(6 * union_px <= width * height);
    let reg = registry();
    let mut pred = vec![0u8; width * height];
    let mut reference = vec![0u8; width * height];
    let mut cursor = 0;
    for (name, t) in CLASSES.iter().zip(targets) {
        let c = id(name);
        let inter = (t * union_px as f64).round() as usize;
        for k in 0..union_px {
            pred[cursor + k] = c;
            if k < inter {
                reference[cursor + k] = c;
            }
        }
        cursor += union_px;
    }
    (
        ClassRaster::new(width, height, pred, reg.clone()).unwrap(),
        ClassRaster::new(width, height, reference, reg).unwrap(),
    )
}

pub fn write_json(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}
