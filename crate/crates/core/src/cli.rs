//! `panobench` command-line interface.
//!
//! Exit codes: 0 success, 1 invalid input or internal error, 2 partial
//! success (some evaluation items failed).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::config::{resolve_seed, ToolConfig};
use crate::control::{fuse_control, latent_mask, ControlProvenance, LatentGrid, NormalMap};
use crate::curation::{
    build_stage_manifest, cluster_embeddings, default_cluster_count, diversity_sample, quality_filter, CurationItem,
    FilterVerdict, Stage, StageManifest,
};
use crate::elements::{build_training_record, mask_elements, transfer_attributes, ElementSet, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{run_eval, EvalOptions, EvalReport};
use crate::geometry::{furniture_view_cameras, render_nfov, CameraSpec};
use crate::metrics::{spatial_consistency, write_csv_header, write_csv_row, ClassScore, ConsistencyReport};
use crate::raster::{ClassRaster, ClassRegistry, Panorama};
use crate::scoring::{
    composite_reward, expert_total, grade, grade_distribution, group_std_report, mix_schedule, round_display,
    Grade, RewardVector, RewardWeights, SampleGroup, ScoreCard, StdEstimator,
};

#[derive(Debug, Parser)]
#[command(name = "panobench", version, about = "Panorama layout-consistency benchmarking toolkit")]
struct Cli {
    /// JSON file overriding built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render perspective views from a panorama.
    Project(ProjectArgs),
    /// Per-class IoU between two class rasters.
    Iou(IouArgs),
    /// Pair a normal map with an instance raster into a control signal.
    FuseControl(FuseArgs),
    /// Block-wise random masking of a latent grid.
    LatentMask(LatentArgs),
    /// Mask the prompt elements of an element set.
    MaskElements(MaskArgs),
    /// Move furnishing attributes onto the furniture allowed in a place.
    Transfer(TransferArgs),
    /// Build a stage manifest from candidate items.
    Curate(CurateArgs),
    /// Single/multi-view sampling ratio at a training step.
    Schedule(ScheduleArgs),
    /// Composite reward from per-channel scores.
    Reward(RewardArgs),
    /// Weighted expert total and grade.
    ExpertScore(ExpertArgs),
    /// Per-group standard deviations and population comparison.
    StdReport(StdArgs),
    /// Summary tables from collected scores.
    Report(ReportArgs),
    /// Evaluate every item of a run manifest.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    panorama: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Camera yaw in degrees (single-view mode).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    yaw: f64,
    /// Camera pitch in degrees (single-view mode).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pitch: f64,
    /// Horizontal field of view in degrees.
    #[arg(long)]
    hfov: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Class raster; one view per furniture instance when given.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Comma-separated furniture classes to view.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    #[arg(long)]
    min_component_px: Option<usize>,
}

#[derive(Debug, Args)]
struct IouArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Comma-separated classes; the evaluation set when omitted.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    /// Write a CSV row instead of plain text.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    normals: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    normal_source_id: Option<String>,
    #[arg(long)]
    segmentation_source_id: Option<String>,
}

#[derive(Debug, Args)]
struct LatentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    keep_prob: Option<f64>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the JSON mask record.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Emit a training record with this target description.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated furniture categories present in the place.
    #[arg(long, value_delimiter = ',', required = true)]
    place: Vec<String>,
    #[arg(long)]
    vocabulary: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurateArgs {
    /// CSV with id,width,height,mean_luma,luma_std,aesthetic_score[,embedding][,expert_approved].
    #[arg(long)]
    items: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    stage: u8,
    /// Stage-2 selection size; every passing item when omitted.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    rep_ratio: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stage-2 manifest that stage-3 items must belong to.
    #[arg(long)]
    parent: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write per-item filter verdicts.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long)]
    step: u64,
    #[arg(long)]
    warmup: Option<u64>,
}

#[derive(Debug, Args)]
struct RewardArgs {
    #[arg(long)]
    structural_iou: f64,
    #[arg(long)]
    omniaid: f64,
    #[arg(long)]
    longclip: f64,
    #[arg(long)]
    hpsv3: f64,
    /// Four comma-separated weights in channel order.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ExpertArgs {
    #[arg(long)]
    aesthetic: f64,
    #[arg(long)]
    spatial: f64,
    #[arg(long)]
    plausibility: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Sample,
    Population,
}

#[derive(Debug, Args)]
struct StdArgs {
    /// CSV with population,group,value.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportKind {
    /// Expert panel scores (sample_id,metric,value[,system]).
    Expert,
    /// Aggregate row of an evaluation report JSON.
    Eval,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, value_enum)]
    kind: ReportKind,
    #[arg(long)]
    input: PathBuf,
    /// Row label for eval reports.
    #[arg(long, default_value = "system")]
    label: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip writing perspective views.
    #[arg(long)]
    no_views: bool,
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => Some(ToolConfig::load(p)?),
        None => None,
    };
    let cfg = config.clone().unwrap_or_default();
    match cli.command {
        Command::Project(a) => project(a, &cfg, out),
        Command::Iou(a) => iou(a, &cfg, out),
        Command::FuseControl(a) => fuse(a, out),
        Command::LatentMask(a) => latent(a, &cfg, out),
        Command::MaskElements(a) => mask(a, &cfg, out),
        Command::Transfer(a) => transfer(a, out),
        Command::Curate(a) => curate(a, &cfg, out),
        Command::Schedule(a) => {
            let r = mix_schedule(a.step, a.warmup.unwrap_or(cfg.schedule.warmup_steps))?;
            writeln!(out, "{:?} {:?}", r.p_single, r.p_multi).map_err(stdout_err)?;
            Ok(0)
        }
        Command::Reward(a) => reward(a, &cfg, out),
        Command::ExpertScore(a) => {
            let total = expert_total(&ScoreCard {
                aesthetic: a.aesthetic,
                spatial_consistency: a.spatial,
                plausibility: a.plausibility,
            })?;
            writeln!(out, "{:.2} {}", round_display(total, 2), grade(total)).map_err(stdout_err)?;
            Ok(0)
        }
        Command::StdReport(a) => std_report(a, &cfg, out),
        Command::Report(a) => report(a, out),
        Command::Eval(a) => {
            let opts = EvalOptions {
                jobs: a.jobs,
                render_views: !a.no_views,
                config_override: config,
            };
            let rep: EvalReport = run_eval(&a.manifest, &a.out_dir, &opts)?;
            writeln!(out, "{} ok, {} failed", rep.ok_items, rep.failed_items).map_err(stdout_err)?;
            if let Some(avg) = rep.aggregate_of("Average") {
                writeln!(out, "Average {avg:.4}").map_err(stdout_err)?;
            }
            Ok(rep.exit_code())
        }
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn load_registry(path: &Option<PathBuf>) -> Result<Arc<ClassRegistry>> {
    Ok(Arc::new(match path {
        Some(p) => ClassRegistry::load(p)?,
        None => ClassRegistry::default_interior(),
    }))
}

fn write_text(path: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

fn project(a: ProjectArgs, cfg: &ToolConfig, out: &mut dyn Write) -> Result<i32> {
    let pano = Panorama::load_png(&a.panorama)?;
    let defaults = &cfg.eval.camera;
    let template = CameraSpec::new(
        0.0,
        0.0,
        a.hfov.unwrap_or(defaults.hfov_deg).to_radians(),
        a.width.unwrap_or(defaults.out_width),
        a.height.unwrap_or(defaults.out_height),
    )?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;

    let mut records = Vec::new();
    match &a.classes {
        None => {
            let cam = template.with_orientation(a.yaw.to_radians(), a.pitch.to_radians());
            render_nfov(&pano, &cam)?.save_png8(a.out_dir.join("view.png"))?;
            records.push(serde_json::json!({
                "file": "view.png",
                "yaw_deg": a.yaw,
                "pitch_deg": a.pitch,
            }));
        }
        Some(class_path) => {
            let registry = load_registry(&a.registry)?;
            let raster = ClassRaster::load_png(class_path, registry.clone())?;
            let names = if a.targets.is_empty() { cfg.eval.view_classes.clone() } else { a.targets.clone() };
            let targets = registry.resolve(&names)?;
            let min_px = a.min_component_px.or(cfg.eval.min_component_px);
            let selection = furniture_view_cameras(&raster, &targets, &template, min_px)?;
            for (n, view) in selection.views.iter().enumerate() {
                let class = registry.name_of(view.class_id).unwrap_or("unknown");
                let file = format!("{n:02}_{class}.png");
                render_nfov(&pano, &view.camera)?.save_png8(a.out_dir.join(&file))?;
                records.push(serde_json::json!({
                    "file": file,
                    "class": class,
                    "pixel_count": view.pixel_count,
                    "yaw_deg": view.camera.yaw.to_degrees(),
                    "pitch_deg": view.camera.pitch.to_degrees(),
                }));
            }
            for s in &selection.skipped {
                log::warn!("skipped component of class {}: {}", s.class_id, s.reason);
            }
        }
    }
    let index = a.out_dir.join("views.json");
    let text = serde_json::to_string_pretty(&records)? + "\n";
    fs::write(&index, text).map_err(|e| Error::io(&index, e))?;
    writeln!(out, "{} view(s) written to {}", records.len(), a.out_dir.display()).map_err(stdout_err)?;
    Ok(0)
}

fn iou(a: IouArgs, cfg: &ToolConfig, out: &mut dyn Write) -> Result<i32> {
    let registry = load_registry(&a.registry)?;
    let pred = ClassRaster::load_png(&a.pred, registry.clone())?;
    let reference = ClassRaster::load_png(&a.reference, registry.clone())?;
    let names = if a.classes.is_empty() { cfg.eval.classes.clone() } else { a.classes.clone() };
    let ids = registry.resolve(&names)?;
    let report = spatial_consistency(&pred, &reference, &ids)?;
    if a.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        write_csv_header(&mut w, &names)?;
        write_csv_row(&mut w, "pair", &report)?;
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        out.write_all(&bytes).map_err(stdout_err)?;
    } else {
        for s in &report.per_class {
            match s.iou {
                Some(v) => writeln!(out, "{} {v:.4}", s.name),
                None => writeln!(out, "{} ABSENT", s.name),
            }
            .map_err(stdout_err)?;
        }
        writeln!(out, "Average {:.4}", report.average).map_err(stdout_err)?;
    }
    Ok(0)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn fuse(a: FuseArgs, out: &mut dyn Write) -> Result<i32> {
    let registry = load_registry(&a.registry)?;
    let normals = NormalMap::load_png(&a.normals)?;
    let instances = ClassRaster::load_png(&a.instances, registry)?;
    let provenance = ControlProvenance {
        normal_source_id: a.normal_source_id.unwrap_or_else(|| file_stem(&a.normals)),
        segmentation_source_id: a.segmentation_source_id.unwrap_or_else(|| file_stem(&a.instances)),
    };
    let signal = fuse_control(&normals, &instances, provenance)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    signal.save(&a.out_dir)?;
    writeln!(out, "control signal {}x{} written to {}", signal.width(), signal.height(), a.out_dir.display())
        .map_err(stdout_err)?;
    Ok(0)
}

fn latent(a: LatentArgs, cfg: &ToolConfig, out: &mut dyn Write) -> Result<i32> {
    let z = LatentGrid::load(&a.input)?;
    let seed = resolve_seed(a.seed)?;
    let keep = a.keep_prob.unwrap_or(cfg.latent.keep_prob);
    let patch = a.patch.unwrap_or(cfg.latent.patch);
    let (masked, record) = latent_mask(&z, keep, patch, seed)?;
    masked.save(&a.out)?;
    let json = serde_json::to_string_pretty(&record)? + "\n";
    match &a.record {
        Some(p) => fs::write(p, json).map_err(|e| Error::io(p, e))?,
        None => writeln!(
            out,
            "kept {}/{} blocks ({:.4})",
            record.kept_blocks(),
            record.blocks_h * record.blocks_w,
            record.kept_fraction()
        )
        .map_err(stdout_err)?,
    }
    Ok(0)
}

fn mask(a: MaskArgs, cfg: &ToolConfig, out: &mut dyn Write) -> Result<i32> {
    let set = ElementSet::load(&a.input)?;
    let seed = resolve_seed(a.seed)?;
    let text = match &a.target {
        Some(target) => build_training_record(&set, &cfg.masking, seed, target)?.to_json_line()? + "\n",
        None => serde_json::to_string_pretty(&mask_elements(&set, &cfg.masking, seed)?)? + "\n",
    };
    write_text(&a.out, &text, out)?;
    Ok(0)
}

fn transfer(a: TransferArgs, out: &mut dyn Write) -> Result<i32> {
    let set = ElementSet::load(&a.input)?;
    let vocab = match &a.vocabulary {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::shipped(),
    };
    let result = transfer_attributes(&set, &a.place, &vocab)?;
    write_text(&a.out, &(serde_json::to_string_pretty(&result)? + "\n"), out)?;
    Ok(0)
}

#[derive(Debug, Deserialize)]
struct CurationRow {
    id: String,
    width: usize,
    height: usize,
    mean_luma: f64,
    luma_std: f64,
    aesthetic_score: f64,
    #[serde(default)]
    embedding: Option<String>,
    #[serde(default)]
    expert_approved: Option<String>,
}

/// Reads an embedding stored as a JSON array or as raw little-endian f32.
pub fn read_embedding(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return Ok(serde_json::from_slice(&bytes)?);
    }
    if bytes.len() % 4 != 0 {
        return Err(Error::structural(format!(
            "{}: {} bytes is not a whole number of f32 values",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn parse_flag(s: &str) -> Result<Option<bool>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "true" | "1" | "yes" => Ok(Some(true)),
        "false" | "0" | "no" => Ok(Some(false)),
        other => Err(Error::invalid(format!("expert_approved value {other:?} is not a boolean"))),
    }
}

/// Loads curation candidates; embedding paths resolve against the CSV's
/// directory.
pub fn load_curation_items(path: &Path) -> Result<Vec<CurationItem>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut items = Vec::new();
    for row in reader.deserialize::<CurationRow>() {
        let row = row?;
        let embedding = match row.embedding.as_deref().filter(|s| !s.is_empty()) {
            Some(rel) => read_embedding(&base.join(rel))?,
            None => Vec::new(),
        };
        items.push(CurationItem {
            id: row.id,
            width: row.width,
            height: row.height,
            mean_luma: row.mean_luma,
            luma_std: row.luma_std,
            aesthetic_score: row.aesthetic_score,
            embedding,
            expert_approved: parse_flag(row.expert_approved.as_deref().unwrap_or(""))?,
        });
    }
    Ok(items)
}

fn curate(a: CurateArgs, cfg: &ToolConfig, out: &mut dyn Write) -> Result<i32> {
    let stage = Stage::try_from(a.stage)?;
    let items = load_curation_items(&a.items)?;
    let (rw, rh) = stage.resolution();
    let at_resolution: Vec<&CurationItem> = items.iter().filter(|i| (i.width, i.height) == (rw, rh)).collect();
    let excluded = items.len() - at_resolution.len();
    if excluded > 0 {
        log::warn!("{excluded} item(s) not at {rw}x{rh} excluded from stage {}", a.stage);
    }
    let mut filters = vec![format!("resolution={rw}x{rh}")];

    let manifest = match stage {
        Stage::Foundational => build_stage_manifest(stage, &at_resolution, &filters, None)?,
        Stage::Curated => {
            let verdicts: Vec<FilterVerdict> = at_resolution.iter().map(|i| quality_filter(i, &cfg.quality)).collect();
            if let Some(p) = &a.report {
                let text = serde_json::to_string_pretty(&verdicts)? + "\n";
                fs::write(p, text).map_err(|e| Error::io(p, e))?;
            }
            filters.push(format!("quality={}", serde_json::to_string(&cfg.quality)?));
            let passing: Vec<CurationItem> = at_resolution
                .iter()
                .zip(&verdicts)
                .filter(|(_, v)| v.passed())
                .map(|(i, _)| (*i).clone())
                .collect();
            let selected: Vec<&CurationItem> = match a.budget {
                Some(budget) if budget < passing.len() => {
                    let seed = resolve_seed(a.seed)?;
                    let k = a.k.or(cfg.clustering.k).unwrap_or_else(|| default_cluster_count(passing.len()));
                    let ratio = a.rep_ratio.unwrap_or(cfg.clustering.rep_ratio);
                    let model = cluster_embeddings(&passing, k, seed, cfg.clustering.max_iters)?;
                    let ids = diversity_sample(&model, &passing, budget, ratio)?;
                    filters.push(format!("kmeans=k:{k},seed:{seed},iters:{}", model.iterations));
                    filters.push(format!("diversity=budget:{budget},rep_ratio:{ratio}"));
                    let by_id: BTreeMap<&str, &CurationItem> = passing.iter().map(|i| (i.id.as_str(), i)).collect();
                    ids.iter().map(|id| by_id[id.as_str()]).collect()
                }
                _ => passing.iter().collect(),
            };
            build_stage_manifest(stage, &selected, &filters, None)?
        }
        Stage::Expert => {
            let parent = match &a.parent {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    Some(StageManifest::from_json(&text)?)
                }
                None => None,
            };
            let parent_ids: Option<HashSet<&str>> = parent.as_ref().map(|m| m.ids().collect());
            let approved: Vec<&CurationItem> = at_resolution
                .into_iter()
                .filter(|i| i.expert_approved == Some(true))
                .filter(|i| parent_ids.as_ref().is_none_or(|ids| ids.contains(i.id.as_str())))
                .collect();
            filters.push("expert_approved".into());
            build_stage_manifest(stage, &approved, &filters, parent.as_ref())?
        }
    };
    fs::write(&a.out, manifest.to_json()?).map_err(|e| Error::io(&a.out, e))?;
    writeln!(out, "stage {} manifest: {} item(s)", a.stage, manifest.items.len()).map_err(stdout_err)?;
    Ok(0)
}

fn reward(a: RewardArgs, cfg: &ToolConfig, out: &mut dyn Write) -> Result<i32> {
    let weights = match a.weights.as_deref() {
        Some([s, o, l, h]) => RewardWeights {
            structural_iou: *s,
            omniaid: *o,
            longclip: *l,
            hpsv3: *h,
        },
        Some(_) => return Err(Error::invalid("--weights takes exactly four values")),
        None => cfg.reward.weights,
    };
    let v = RewardVector {
        structural_iou: a.structural_iou,
        omniaid: a.omniaid,
        longclip: a.longclip,
        hpsv3: a.hpsv3,
    };
    let r = composite_reward(&v, &weights, &cfg.reward.normalizers)?;
    writeln!(out, "{r}").map_err(stdout_err)?;
    Ok(0)
}

#[derive(Debug, Deserialize)]
struct StdRow {
    population: String,
    group: String,
    value: f64,
}

/// Groups `population,group,value` rows in first-appearance order.
pub fn load_sample_groups(path: &Path) -> Result<Vec<SampleGroup>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut groups: Vec<SampleGroup> = Vec::new();
    for row in reader.deserialize::<StdRow>() {
        let row = row?;
        match groups.iter_mut().find(|g| g.id == row.group && g.population == row.population) {
            Some(g) => g.samples.push(row.value),
            None => groups.push(SampleGroup {
                id: row.group,
                population: row.population,
                samples: vec![row.value],
            }),
        }
    }
    Ok(groups)
}

fn std_report(a: StdArgs, cfg: &ToolConfig, out: &mut dyn Write) -> Result<i32> {
    let estimator = match a.estimator {
        Some(EstimatorArg::Sample) => StdEstimator::Sample,
        Some(EstimatorArg::Population) => StdEstimator::Population,
        None => cfg.std_estimator,
    };
    let report = group_std_report(&load_sample_groups(&a.input)?, estimator)?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(stdout_err)?;
        return Ok(0);
    }
    for p in &report.populations {
        writeln!(out, "{} groups={} mean_std={:.6}", p.population, p.groups, p.mean_std).map_err(stdout_err)?;
    }
    if let Some(c) = &report.comparison {
        writeln!(out, "ratio {}/{} = {:.6}", c.numerator, c.denominator, c.ratio).map_err(stdout_err)?;
    }
    Ok(0)
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    #[serde(default)]
    system: Option<String>,
    sample_id: String,
    metric: String,
    value: f64,
}

type SampleSlots = (String, [Option<f64>; 3]);

/// One row of the expert summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSummary {
    pub system: String,
    pub spatial_consistency: f64,
    pub aesthetic: f64,
    pub plausibility: f64,
    pub total: f64,
    pub grade: Grade,
    pub percentages: [f64; 5],
}

/// Aggregates long-format expert scores per system. Every sample must carry
/// all three metrics.
pub fn summarize_expert_scores(path: &Path) -> Result<Vec<ExpertSummary>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut systems: Vec<(String, Vec<SampleSlots>)> = Vec::new();
    for row in reader.deserialize::<ScoreRow>() {
        let row = row?;
        let slot = match row.metric.to_ascii_lowercase().as_str() {
            "aesthetic" => 0,
            "spatial" | "spatial_consistency" => 1,
            "plausibility" => 2,
            other => return Err(Error::invalid(format!("unknown expert metric {other:?}"))),
        };
        let system = row.system.filter(|s| !s.is_empty()).unwrap_or_else(|| "all".into());
        let idx = match systems.iter().position(|(s, _)| *s == system) {
            Some(i) => i,
            None => {
                systems.push((system, Vec::new()));
                systems.len() - 1
            }
        };
        let samples = &mut systems[idx].1;
        let sidx = match samples.iter().position(|(id, _)| *id == row.sample_id) {
            Some(i) => i,
            None => {
                samples.push((row.sample_id.clone(), [None; 3]));
                samples.len() - 1
            }
        };
        if samples[sidx].1[slot].replace(row.value).is_some() {
            return Err(Error::invalid(format!("sample {} repeats metric {}", row.sample_id, row.metric)));
        }
    }
    if systems.is_empty() {
        return Err(Error::invalid("no expert scores found"));
    }
    systems
        .into_iter()
        .map(|(system, samples)| {
            let mut cards = Vec::with_capacity(samples.len());
            for (id, [a, s, p]) in samples {
                match (a, s, p) {
                    (Some(a), Some(s), Some(p)) => cards.push(ScoreCard {
                        aesthetic: a,
                        spatial_consistency: s,
                        plausibility: p,
                    }),
                    _ => return Err(Error::invalid(format!("sample {id} lacks one of the three metrics"))),
                }
            }
            let totals = cards.iter().map(expert_total).collect::<Result<Vec<_>>>()?;
            let n = cards.len() as f64;
            let mean = |f: fn(&ScoreCard) -> f64| cards.iter().map(f).sum::<f64>() / n;
            let total = totals.iter().sum::<f64>() / n;
            Ok(ExpertSummary {
                system,
                spatial_consistency: mean(|c| c.spatial_consistency),
                aesthetic: mean(|c| c.aesthetic),
                plausibility: mean(|c| c.plausibility),
                total,
                grade: grade(total),
                percentages: grade_distribution(&totals).percentages,
            })
        })
        .collect()
}

fn report(a: ReportArgs, out: &mut dyn Write) -> Result<i32> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match a.kind {
        ReportKind::Expert => {
            let mut header: Vec<String> = ["system", "spatial_consistency", "aesthetic", "plausibility", "total", "grade"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            header.extend(Grade::ALL.iter().map(|g| format!("{g}%")));
            w.write_record(&header)?;
            for s in summarize_expert_scores(&a.input)? {
                let mut row = vec![
                    s.system.clone(),
                    format!("{:.2}", round_display(s.spatial_consistency, 2)),
                    format!("{:.2}", round_display(s.aesthetic, 2)),
                    format!("{:.2}", round_display(s.plausibility, 2)),
                    format!("{:.2}", round_display(s.total, 2)),
                    s.grade.to_string(),
                ];
                row.extend(s.percentages.iter().map(|p| format!("{p:.2}")));
                w.write_record(&row)?;
            }
        }
        ReportKind::Eval => {
            let text = fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
            let rep: EvalReport = serde_json::from_str(&text)?;
            let seam_at = rep
                .columns
                .iter()
                .position(|c| c == "Average")
                .ok_or_else(|| Error::structural("evaluation report has no Average column"))?;
            let classes = &rep.columns[..seam_at];
            let per_class = classes
                .iter()
                .map(|c| ClassScore {
                    name: c.clone(),
                    iou: rep.aggregate_of(c),
                })
                .collect();
            let mut row = ConsistencyReport::from_scores(per_class)?;
            if let Some(avg) = rep.aggregate_of("Average") {
                row.average = avg;
            }
            write_csv_header(&mut w, classes)?;
            write_csv_row(&mut w, &a.label, &row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_text(&a.out, &String::from_utf8_lossy(&bytes), out)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("panobench").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn schedule_prints_pair() {
        assert_eq!(call(&["schedule", "--step", "0", "--warmup", "10"]).1, "1.0 0.0\n");
        assert_eq!(call(&["schedule", "--step", "10", "--warmup", "10"]).1, "0.2 0.8\n");
    }

    #[test]
    fn expert_score_line() {
        let (code, out, _) = call(&["expert-score", "--aesthetic", "2.66", "--spatial", "3.33", "--plausibility", "3.79"]);
        assert_eq!(code, 0);
        assert_eq!(out, "3.20 B\n");
    }

    #[test]
    fn bad_arguments_exit_one() {
        assert_eq!(call(&["schedule"]).0, 1);
        assert_eq!(call(&["nope"]).0, 1);
        assert_eq!(call(&["expert-score", "--aesthetic", "7", "--spatial", "3", "--plausibility", "3"]).0, 1);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("expert-score"));
    }

    #[test]
    fn flags_parse() {
        assert_eq!(parse_flag("TRUE").unwrap(), Some(true));
        assert_eq!(parse_flag("").unwrap(), None);
        assert!(parse_flag("maybe").is_err());
    }
}
