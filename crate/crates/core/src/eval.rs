//! Batch evaluation driven by a run manifest.
//!
//! Each item pairs a generated panorama and its predicted class raster with
//! the reference raster of the layout input. Per item we score spatial
//! consistency and seam continuity, render one perspective view per
//! furniture instance of the reference, and join any externally supplied
//! scores. Items that fail are reported and excluded from the aggregate.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ToolConfig;
use crate::error::{Error, Result};
use crate::geometry::{furniture_view_cameras, render_nfov, seam_continuity, SkippedComponent};
use crate::metrics::{spatial_consistency, ConsistencyReport};
use crate::raster::{ClassRaster, ClassRegistry, Panorama};

/// Major version of the run-manifest format this build reads.
pub const RUN_MANIFEST_MAJOR: u32 = 1;

pub const ITEMS_CSV: &str = "eval_items.csv";
pub const REPORT_JSON: &str = "eval_report.json";
pub const SUMMARY_TXT: &str = "eval_summary.txt";
pub const AGGREGATE_LABEL: &str = "AGGREGATE";
pub const SEAM_COLUMN: &str = "seam_continuity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunItem {
    pub id: String,
    pub panorama: PathBuf,
    pub predicted: PathBuf,
    pub reference: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<PathBuf>,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    pub items: Vec<RunItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ToolConfig>,
}

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Self = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let major = self
            .version
            .split('.')
            .next()
            .and_then(|m| m.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::Manifest(format!("unparseable version {:?}", self.version)))?;
        if major != RUN_MANIFEST_MAJOR {
            return Err(Error::Manifest(format!(
                "manifest version {} is not supported (expected {RUN_MANIFEST_MAJOR}.x)",
                self.version
            )));
        }
        if self.items.is_empty() {
            return Err(Error::Manifest("manifest lists no items".into()));
        }
        let mut ids = HashSet::new();
        for item in &self.items {
            if item.id.trim().is_empty() {
                return Err(Error::Manifest("item with empty id".into()));
            }
            if !ids.insert(item.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate item id {:?}", item.id)));
            }
            if let Some((name, v)) = item.scores.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Manifest(format!("item {:?}: score {name} is {v}", item.id)));
            }
        }
        if let Some(classes) = &self.classes {
            if classes.is_empty() {
                return Err(Error::Manifest("explicit class list is empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ItemStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub class: String,
    pub pixel_count: usize,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    /// Path relative to the output directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub status: ItemStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seam_continuity: Option<f64>,
    pub views: Vec<ViewRecord>,
    pub skipped_components: Vec<SkippedComponent>,
    pub scores: BTreeMap<String, f64>,
}

impl ItemResult {
    fn failed(id: &str, err: &Error) -> Self {
        Self {
            id: id.to_string(),
            status: ItemStatus::Failed,
            error: Some(err.to_string()),
            consistency: None,
            seam_continuity: None,
            views: Vec::new(),
            skipped_components: Vec::new(),
            scores: BTreeMap::new(),
        }
    }

    /// Value of a report column; the outer `None` means the column does not
    /// apply, the inner one marks an absent class.
    pub fn column(&self, name: &str) -> Option<Option<f64>> {
        if name == SEAM_COLUMN {
            return self.seam_continuity.map(Some);
        }
        if let Some(c) = &self.consistency {
            if name == "Average" {
                return Some(Some(c.average));
            }
            if let Some(v) = c.get(name) {
                return Some(v);
            }
        }
        self.scores.get(name).map(|v| Some(*v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub column: String,
    /// Mean over successful items that report a value; `None` if none do.
    pub mean: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub manifest_version: String,
    pub columns: Vec<String>,
    pub items: Vec<ItemResult>,
    pub aggregate: Vec<AggregateCell>,
    pub ok_items: usize,
    pub failed_items: usize,
}

impl EvalReport {
    /// 0 when every item succeeded, 2 when some failed.
    pub fn exit_code(&self) -> i32 {
        if self.failed_items == 0 {
            0
        } else {
            2
        }
    }

    pub fn aggregate_of(&self, column: &str) -> Option<f64> {
        self.aggregate.iter().find(|c| c.column == column).and_then(|c| c.mean)
    }

    pub fn item(&self, id: &str) -> Option<&ItemResult> {
        self.items.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Worker threads; the rayon default when unset.
    pub jobs: Option<usize>,
    pub render_views: bool,
    /// Replaces the manifest's own `config` block when given.
    pub config_override: Option<ToolConfig>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            jobs: None,
            render_views: true,
            config_override: None,
        }
    }
}

struct RunContext {
    base: PathBuf,
    out_dir: PathBuf,
    registry: Arc<ClassRegistry>,
    class_names: Vec<String>,
    config: ToolConfig,
    render_views: bool,
}

/// Evaluates every manifest item and writes `eval_items.csv`,
/// `eval_report.json`, `eval_summary.txt` and rendered views under
/// `out_dir`. Manifest-level problems are errors; per-item problems mark the
/// item FAILED.
pub fn run_eval(manifest_path: impl AsRef<Path>, out_dir: impl AsRef<Path>, opts: &EvalOptions) -> Result<EvalReport> {
    let manifest_path = manifest_path.as_ref();
    let manifest = RunManifest::load(manifest_path)?;
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    evaluate_manifest(&manifest, &base, out_dir.as_ref(), opts)
}

/// As [`run_eval`] for an already parsed manifest whose relative paths are
/// resolved against `base`.
pub fn evaluate_manifest(manifest: &RunManifest, base: &Path, out_dir: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    manifest.validate()?;
    let config = opts
        .config_override
        .clone()
        .or_else(|| manifest.config.clone())
        .unwrap_or_default();
    let registry = match &manifest.registry {
        Some(p) => ClassRegistry::load(base.join(p))?,
        None => ClassRegistry::default_interior(),
    };
    let class_names = manifest.classes.clone().unwrap_or_else(|| config.eval.classes.clone());
    registry.resolve(&class_names)?;
    registry.resolve(&config.eval.view_classes)?;
    config.eval.camera.template()?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ctx = RunContext {
        base: base.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        registry: Arc::new(registry),
        class_names,
        config,
        render_views: opts.render_views,
    };

    let evaluate = || -> Vec<ItemResult> {
        manifest
            .items
            .par_iter()
            .map(|item| {
                evaluate_item(&ctx, item).unwrap_or_else(|e| {
                    log::error!("item {}: {e}", item.id);
                    ItemResult::failed(&item.id, &e)
                })
            })
            .collect()
    };
    let items = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?
            .install(evaluate),
        None => evaluate(),
    };

    let report = assemble_report(manifest, &ctx.class_names, items);
    write_outputs(&report, out_dir)?;
    Ok(report)
}

fn require_file(base: &Path, rel: &Path) -> Result<PathBuf> {
    let p = base.join(rel);
    if !p.is_file() {
        return Err(Error::InvalidInput(format!("missing file {}", p.display())));
    }
    Ok(p)
}

fn evaluate_item(ctx: &RunContext, item: &RunItem) -> Result<ItemResult> {
    let pano_path = require_file(&ctx.base, &item.panorama)?;
    let pred_path = require_file(&ctx.base, &item.predicted)?;
    let ref_path = require_file(&ctx.base, &item.reference)?;
    for extra in [&item.normals, &item.embedding].into_iter().flatten() {
        require_file(&ctx.base, extra)?;
    }

    let pano = Panorama::load_png(&pano_path)?;
    let pred = ClassRaster::load_png(&pred_path, ctx.registry.clone())?;
    let reference = ClassRaster::load_png(&ref_path, ctx.registry.clone())?;
    for (label, r) in [("predicted", &pred), ("reference", &reference)] {
        if (r.width(), r.height()) != pano.dims() {
            return Err(Error::structural(format!(
                "{label} raster is {}x{} but the panorama is {}x{}",
                r.width(),
                r.height(),
                pano.width(),
                pano.height()
            )));
        }
    }

    let classes = ctx.registry.resolve(&ctx.class_names)?;
    let consistency = spatial_consistency(&pred, &reference, &classes)?;
    let seam = seam_continuity(&pano);

    let targets = ctx.registry.resolve(&ctx.config.eval.view_classes)?;
    let template = ctx.config.eval.camera.template()?;
    let selection = furniture_view_cameras(&reference, &targets, &template, ctx.config.eval.min_component_px)?;
    let mut views = Vec::with_capacity(selection.views.len());
    if ctx.render_views && !selection.views.is_empty() {
        let dir = ctx.out_dir.join("views").join(sanitize(&item.id));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (n, view) in selection.views.iter().enumerate() {
            let class = ctx.registry.name_of(view.class_id).unwrap_or("unknown").to_string();
            let file = format!("{n:02}_{}.png", sanitize(&class));
            render_nfov(&pano, &view.camera)?.save_png8(dir.join(&file))?;
            views.push(ViewRecord {
                class,
                pixel_count: view.pixel_count,
                yaw_deg: view.camera.yaw.to_degrees(),
                pitch_deg: view.camera.pitch.to_degrees(),
                path: format!("views/{}/{file}", sanitize(&item.id)),
            });
        }
    } else {
        for view in &selection.views {
            views.push(ViewRecord {
                class: ctx.registry.name_of(view.class_id).unwrap_or("unknown").to_string(),
                pixel_count: view.pixel_count,
                yaw_deg: view.camera.yaw.to_degrees(),
                pitch_deg: view.camera.pitch.to_degrees(),
                path: String::new(),
            });
        }
    }

    Ok(ItemResult {
        id: item.id.clone(),
        status: ItemStatus::Ok,
        error: None,
        consistency: Some(consistency),
        seam_continuity: Some(seam),
        views,
        skipped_components: selection.skipped,
        scores: item.scores.clone(),
    })
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn assemble_report(manifest: &RunManifest, class_names: &[String], items: Vec<ItemResult>) -> EvalReport {
    let score_names: BTreeSet<&String> = manifest.items.iter().flat_map(|i| i.scores.keys()).collect();
    let mut columns: Vec<String> = class_names.to_vec();
    columns.push("Average".into());
    columns.push(SEAM_COLUMN.into());
    columns.extend(score_names.into_iter().cloned());

    let aggregate = columns
        .iter()
        .map(|col| {
            let values: Vec<f64> = items
                .iter()
                .filter(|i| i.status == ItemStatus::Ok)
                .filter_map(|i| i.column(col).flatten())
                .collect();
            AggregateCell {
                column: col.clone(),
                mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                count: values.len(),
            }
        })
        .collect();
    let failed_items = items.iter().filter(|i| i.status == ItemStatus::Failed).count();
    EvalReport {
        manifest_version: manifest.version.clone(),
        columns,
        ok_items: items.len() - failed_items,
        failed_items,
        items,
        aggregate,
    }
}

fn write_outputs(report: &EvalReport, out_dir: &Path) -> Result<()> {
    let csv_path = out_dir.join(ITEMS_CSV);
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["id".to_string(), "status".to_string()];
    header.extend(report.columns.iter().cloned());
    w.write_record(&header)?;
    for item in &report.items {
        let status = match item.status {
            ItemStatus::Ok => "OK",
            ItemStatus::Failed => "FAILED",
        };
        let mut row = vec![item.id.clone(), status.to_string()];
        row.extend(report.columns.iter().map(|c| match item.column(c) {
            Some(Some(v)) => v.to_string(),
            Some(None) => "ABSENT".into(),
            None => String::new(),
        }));
        w.write_record(&row)?;
    }
    let mut agg = vec![AGGREGATE_LABEL.to_string(), String::new()];
    agg.extend(report.aggregate.iter().map(|c| c.mean.map(|v| v.to_string()).unwrap_or_default()));
    w.write_record(&agg)?;
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let json_path = out_dir.join(REPORT_JSON);
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let txt_path = out_dir.join(SUMMARY_TXT);
    let mut txt = Vec::new();
    let io = |e| Error::io(&txt_path, e);
    writeln!(txt, "items: {} ok, {} failed", report.ok_items, report.failed_items).map_err(io)?;
    for cell in &report.aggregate {
        match cell.mean {
            Some(v) => writeln!(txt, "{:<24} {v:.4}  (n={})", cell.column, cell.count).map_err(io)?,
            None => writeln!(txt, "{:<24} n/a", cell.column).map_err(io)?,
        }
    }
    for item in report.items.iter().filter(|i| i.status == ItemStatus::Failed) {
        writeln!(txt, "FAILED {}: {}", item.id, item.error.as_deref().unwrap_or("")).map_err(io)?;
    }
    fs::write(&txt_path, txt).map_err(|e| Error::io(&txt_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(json: &str) -> Result<RunManifest> {
        RunManifest::from_json(json)
    }

    const ITEM: &str = r#"{"id": "a", "panorama": "p.png", "predicted": "x.png", "reference": "y.png"}"#;

    #[test]
    fn version_major_must_match() {
        assert!(manifest(&format!(r#"{{"version": "1.3", "items": [{ITEM}]}}"#)).is_ok());
        assert!(matches!(
            manifest(&format!(r#"{{"version": "2.0", "items": [{ITEM}]}}"#)),
            Err(Error::Manifest(_))
        ));
        assert!(manifest(&format!(r#"{{"version": "one", "items": [{ITEM}]}}"#)).is_err());
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(manifest(r#"{"version": "1.0", "items": []}"#).is_err());
        assert!(manifest(&format!(r#"{{"version": "1.0", "items": [{ITEM}, {ITEM}]}}"#)).is_err());
        assert!(manifest(r#"{"version": "1.0", "items": [{"id": "a"}]}"#).is_err());
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(manifest(&format!(r#"{{"version": "1.0", "items": [{ITEM}], "extra": 1}}"#)).is_err());
    }

    #[test]
    fn sanitize_keeps_safe_chars() {
        assert_eq!(sanitize("room 1/a.b"), "room_1_a.b");
    }
}
