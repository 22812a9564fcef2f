//! Hierarchical data curation: heuristic quality filtering, embedding
//! clustering, representativeness/uniqueness sampling and stage manifests.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Rec. 709 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationItem {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub mean_luma: f64,
    pub luma_std: f64,
    pub aesthetic_score: f64,
    #[serde(default)]
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub expert_approved: Option<bool>,
}

/// Mean and population standard deviation of luma over an RGB or gray raster.
pub fn luma_stats(raster: &Raster) -> (f64, f64) {
    let lumas: Vec<f64> = match raster.channels() {
        1 => raster.data().iter().map(|v| *v as f64).collect(),
        c => raster
            .data()
            .chunks_exact(c)
            .map(|p| LUMA_WEIGHTS[0] * p[0] as f64 + LUMA_WEIGHTS[1] * p[1] as f64 + LUMA_WEIGHTS[2] * p[2] as f64)
            .collect(),
    };
    let n = lumas.len() as f64;
    let mean = lumas.iter().sum::<f64>() / n;
    let var = lumas.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub min_width: usize,
    pub min_height: usize,
    /// Allowed deviation of `width / height` from 2.
    pub aspect_tolerance: f64,
    pub brightness_lo: f64,
    pub brightness_hi: f64,
    pub contrast_min: f64,
    pub aesthetic_min: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            min_width: 1024,
            min_height: 512,
            aspect_tolerance: 0.01,
            brightness_lo: 0.15,
            brightness_hi: 0.9,
            contrast_min: 0.05,
            aesthetic_min: 0.0,
        }
    }
}

impl QualityConfig {
    /// Thresholds that admit every item.
    pub fn permissive() -> Self {
        Self {
            min_width: 0,
            min_height: 0,
            aspect_tolerance: f64::INFINITY,
            brightness_lo: f64::NEG_INFINITY,
            brightness_hi: f64::INFINITY,
            contrast_min: f64::NEG_INFINITY,
            aesthetic_min: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Resolution,
    Aspect,
    Brightness,
    Contrast,
    Aesthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub id: String,
    pub reasons: Vec<RejectReason>,
}

impl FilterVerdict {
    pub fn passed(&self) -> bool {
        self.reasons.is_empty()
    }
}

/// Applies every heuristic threshold (bounds inclusive) and reports all
/// violations, not just the first. NaN measurements fail their check.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn quality_filter(item: &CurationItem, cfg: &QualityConfig) -> FilterVerdict {
    let mut reasons = Vec::new();
    if item.width < cfg.min_width || item.height < cfg.min_height {
        reasons.push(RejectReason::Resolution);
    }
    let aspect = item.width as f64 / item.height as f64;
    if item.height == 0 || !((aspect - 2.0).abs() <= cfg.aspect_tolerance) {
        reasons.push(RejectReason::Aspect);
    }
    if !(item.mean_luma >= cfg.brightness_lo && item.mean_luma <= cfg.brightness_hi) {
        reasons.push(RejectReason::Brightness);
    }
    if !(item.luma_std >= cfg.contrast_min) {
        reasons.push(RejectReason::Contrast);
    }
    if !(item.aesthetic_score >= cfg.aesthetic_min) {
        reasons.push(RejectReason::Aesthetic);
    }
    FilterVerdict {
        id: item.id.clone(),
        reasons,
    }
}

/// `√(n / 2)` clusters, at least one and at most 1024.
pub fn default_cluster_count(n: usize) -> usize {
    ((n as f64 / 2.0).sqrt().round() as usize).clamp(1, 1024)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input item, in input order.
    pub assignments: Vec<usize>,
    pub ids: Vec<String>,
    /// Sum of squared distances to the assigned centroid after each
    /// assignment step; non-increasing.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterModel {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(point, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn check_embeddings(items: &[CurationItem]) -> Result<usize> {
    let first = items.first().ok_or_else(|| Error::invalid("no items to cluster"))?;
    let dim = first.embedding.len();
    if dim == 0 {
        return Err(Error::invalid(format!("item {} has an empty embedding", first.id)));
    }
    for it in items {
        if it.embedding.len() != dim {
            return Err(Error::structural(format!(
                "item {} has embedding dimension {}, expected {dim}",
                it.id,
                it.embedding.len()
            )));
        }
        if it.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("item {} has a non-finite embedding", it.id)));
        }
    }
    Ok(dim)
}

/// k-means++ seeding (ChaCha8 seeded from `seed`) followed by Lloyd
/// iterations until assignments stop changing or `max_iters` is reached.
/// Ties go to the lowest centroid index; an emptied cluster keeps its
/// previous centroid.
pub fn cluster_embeddings(items: &[CurationItem], k: usize, seed: u64, max_iters: usize) -> Result<ClusterModel> {
    let dim = check_embeddings(items)?;
    if k == 0 || k > items.len() {
        return Err(Error::invalid(format!(
            "cluster count {k} must be in 1..={}",
            items.len()
        )));
    }
    let points: Vec<&[f64]> = items.iter().map(|i| i.embedding.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = vec![points[rng.gen_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` short of `target`; take the last
            // candidate with positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).expect("total > 0"))
        } else {
            // All points coincide with chosen centroids.
            rng.gen_range(0..points.len())
        };
        centroids.push(points[next].to_vec());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignments = vec![usize::MAX; points.len()];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            objective += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if let Some(prev) = history.last() {
            debug_assert!(objective <= prev + 1e-9 * prev.abs().max(1.0), "k-means objective increased");
        }
        history.push(objective);
        if !changed {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    Ok(ClusterModel {
        k,
        seed,
        centroids,
        assignments,
        ids: items.iter().map(|i| i.id.clone()).collect(),
        objective_history: history,
        iterations,
        converged,
    })
}

/// Largest-remainder apportionment of `budget` across clusters by size.
/// Remainder ties go to the lower cluster index.
pub fn cluster_quotas(sizes: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    // Integer arithmetic keeps the apportionment exact.
    let mut quotas: Vec<usize> = sizes.iter().map(|s| s * budget / total).collect();
    let mut remainders: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(i, s)| (s * budget % total, i)).collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = budget - quotas.iter().sum::<usize>();
    for &(_, i) in remainders.iter().take(short) {
        quotas[i] += 1;
    }
    quotas
}

/// Number of representative picks for a cluster quota: `⌈r · quota⌉`.
pub fn representative_count(rep_ratio: f64, quota: usize) -> usize {
    // Guard against products like 0.7 * 10 = 7.000000000000001.
    (((rep_ratio * quota as f64) - 1e-9).ceil().max(0.0) as usize).min(quota)
}

/// Selects `budget` items: per-cluster quotas proportional to size; within a
/// cluster the `⌈r·quota⌉` items closest to the centroid, then the rest from
/// the far end. Distance ties break by ascending id. Output is grouped by
/// cluster, nearest picks before farthest.
pub fn diversity_sample(model: &ClusterModel, items: &[CurationItem], budget: usize, rep_ratio: f64) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&rep_ratio) {
        return Err(Error::domain(format!("representative ratio {rep_ratio} outside [0, 1]")));
    }
    if items.len() != model.assignments.len() {
        return Err(Error::structural("items do not match the cluster model"));
    }
    if budget > items.len() {
        return Err(Error::invalid(format!(
            "budget {budget} exceeds the {} available items",
            items.len()
        )));
    }
    let quotas = cluster_quotas(&model.cluster_sizes(), budget);
    let mut selected = Vec::with_capacity(budget);
    for (c, &quota) in quotas.iter().enumerate() {
        let mut members: Vec<(f64, &str)> = items
            .iter()
            .zip(&model.assignments)
            .filter(|(_, a)| **a == c)
            .map(|(it, _)| (sq_dist(&it.embedding, &model.centroids[c]), it.id.as_str()))
            .collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let near = representative_count(rep_ratio, quota);
        let mut chosen: HashSet<&str> = HashSet::new();
        for &(_, id) in members.iter().take(near) {
            chosen.insert(id);
            selected.push(id.to_string());
        }
        let mut far: Vec<&(f64, &str)> = members.iter().filter(|m| !chosen.contains(m.1)).collect();
        far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        for &&(_, id) in far.iter().take(quota - near) {
            selected.push(id.to_string());
        }
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    Foundational = 1,
    Curated = 2,
    Expert = 3,
}

impl TryFrom<u8> for Stage {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Stage::Foundational),
            2 => Ok(Stage::Curated),
            3 => Ok(Stage::Expert),
            other => Err(Error::invalid(format!("stage must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s as u8
    }
}

impl Stage {
    pub fn resolution(self) -> (usize, usize) {
        match self {
            Stage::Foundational => (1024, 512),
            Stage::Curated | Stage::Expert => (2048, 1024),
        }
    }
}

pub const MANIFEST_FORMAT: &str = "panobench-stage-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub expert_approved: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub format: String,
    pub version: u32,
    pub stage: Stage,
    pub resolution: [usize; 2],
    pub filters_applied: Vec<String>,
    pub items: Vec<ManifestEntry>,
}

impl StageManifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|e| e.id.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: StageManifest = serde_json::from_str(text)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

/// Builds a stage manifest after checking the stage's resolution and, for
/// stage 3, the expert approval flag and (when given) containment in the
/// parent stage-2 manifest.
pub fn build_stage_manifest(
    stage: Stage,
    items: &[&CurationItem],
    filters_applied: &[String],
    parent: Option<&StageManifest>,
) -> Result<StageManifest> {
    let (rw, rh) = stage.resolution();
    let mut seen = HashSet::new();
    for it in items {
        if !seen.insert(it.id.as_str()) {
            return Err(Error::invalid(format!("item {} listed twice", it.id)));
        }
        if (it.width, it.height) != (rw, rh) {
            return Err(Error::invalid(format!(
                "item {} is {}x{}, stage {} requires {rw}x{rh}",
                it.id, it.width, it.height, stage as u8
            )));
        }
        if stage == Stage::Expert && it.expert_approved != Some(true) {
            return Err(Error::invalid(format!(
                "item {} lacks expert approval required for stage 3",
                it.id
            )));
        }
    }
    if let Some(parent) = parent {
        if stage == Stage::Expert {
            if parent.stage != Stage::Curated {
                return Err(Error::invalid("stage 3 parent manifest must be stage 2"));
            }
            let allowed: HashSet<&str> = parent.ids().collect();
            if let Some(it) = items.iter().find(|it| !allowed.contains(it.id.as_str())) {
                return Err(Error::invalid(format!("item {} is not in the stage 2 manifest", it.id)));
            }
        }
    }
    Ok(StageManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        stage,
        resolution: [rw, rh],
        filters_applied: filters_applied.to_vec(),
        items: items
            .iter()
            .map(|it| ManifestEntry {
                id: it.id.clone(),
                expert_approved: if stage == Stage::Expert { it.expert_approved } else { None },
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn item(id: &str, w: usize, h: usize) -> CurationItem {
        CurationItem {
            id: id.into(),
            width: w,
            height: h,
            mean_luma: 0.5,
            luma_std: 0.2,
            aesthetic_score: 3.0,
            embedding: vec![0.0],
            expert_approved: None,
        }
    }

    #[test]
    fn resolution_failure() {
        let v = quality_filter(&item("a", 512, 256), &QualityConfig::default());
        assert_eq!(v.reasons, vec![RejectReason::Resolution]);
        assert!(quality_filter(&item("b", 1024, 512), &QualityConfig::default()).passed());
    }

    #[test]
    fn permissive_passes_everything() {
        let mut it = item("x", 3, 7);
        it.mean_luma = 0.0;
        it.luma_std = 0.0;
        it.aesthetic_score = -5.0;
        assert!(quality_filter(&it, &QualityConfig::permissive()).passed());
    }

    #[test]
    fn bounds_are_inclusive() {
        let cfg = QualityConfig::default();
        // Boundary table: (mean_luma, luma_std, aesthetic, expected reasons)
        let table: [(f64, f64, f64, &[RejectReason]); 6] = [
            (0.15, 0.2, 3.0, &[]),
            (0.9, 0.2, 3.0, &[]),
            (0.1499, 0.2, 3.0, &[RejectReason::Brightness]),
            (0.9001, 0.2, 3.0, &[RejectReason::Brightness]),
            (0.5, 0.05, 0.0, &[]),
            (0.5, 0.0499, -0.1, &[RejectReason::Contrast, RejectReason::Aesthetic]),
        ];
        for (luma, std, aes, expected) in table {
            let mut it = item("b", 2048, 1024);
            it.mean_luma = luma;
            it.luma_std = std;
            it.aesthetic_score = aes;
            assert_eq!(quality_filter(&it, &cfg).reasons, expected, "luma {luma} std {std} aes {aes}");
        }
    }

    #[test]
    fn aspect_and_all_reasons() {
        let mut it = item("z", 100, 100);
        it.mean_luma = 0.95;
        it.luma_std = 0.01;
        it.aesthetic_score = -1.0;
        let v = quality_filter(&it, &QualityConfig::default());
        assert_eq!(v.reasons.len(), 5);
    }

    #[test]
    fn luma_stats_of_constant_and_split() {
        let r = Raster::filled(4, 2, &[1.0, 1.0, 1.0]).unwrap();
        let (m, s) = luma_stats(&r);
        assert!((m - 1.0).abs() < 1e-12 && s.abs() < 1e-12);
        let r = Raster::from_fn(2, 1, 1, |x, _, _| x as f32).unwrap();
        assert_eq!(luma_stats(&r), (0.5, 0.5));
    }

    #[test]
    fn quotas_sum_and_remainders() {
        assert_eq!(cluster_quotas(&[5, 3, 2], 4), vec![2, 1, 1]);
        assert_eq!(cluster_quotas(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(cluster_quotas(&[6, 6], 6), vec![3, 3]);
        assert_eq!(cluster_quotas(&[7, 3], 10), vec![7, 3]);
        assert_eq!(representative_count(0.7, 10), 7);
        assert_eq!(representative_count(0.5, 3), 2);
        assert_eq!(representative_count(0.0, 3), 0);
        assert_eq!(representative_count(1.0, 3), 3);
    }

    #[test]
    fn k_one_centroid_is_mean() {
        let items: Vec<_> = (0..5)
            .map(|i| CurationItem {
                embedding: vec![i as f64, (i * i) as f64],
                ..item(&format!("i{i}"), 2048, 1024)
            })
            .collect();
        let m = cluster_embeddings(&items, 1, 3, 10).unwrap();
        assert!((m.centroids[0][0] - 2.0).abs() < 1e-12);
        assert!((m.centroids[0][1] - 6.0).abs() < 1e-12);
        assert!(m.assignments.iter().all(|a| *a == 0));
    }

    #[test]
    fn clustering_errors() {
        let items = vec![item("a", 1, 1)];
        assert!(cluster_embeddings(&items, 2, 0, 10).is_err());
        assert!(cluster_embeddings(&items, 0, 0, 10).is_err());
        assert!(cluster_embeddings(&[], 1, 0, 10).is_err());
        let mut bad = vec![item("a", 1, 1), item("b", 1, 1)];
        bad[1].embedding = vec![1.0, 2.0];
        assert!(matches!(cluster_embeddings(&bad, 1, 0, 10), Err(Error::Structural(_))));
    }

    #[test]
    fn stage_manifest_rules() {
        let low = item("low", 1024, 512);
        let hi = item("hi", 2048, 1024);
        let m = build_stage_manifest(Stage::Foundational, &[&low], &[], None).unwrap();
        assert_eq!(m.resolution, [1024, 512]);

        let err = build_stage_manifest(Stage::Curated, &[&hi, &low], &[], None).unwrap_err();
        assert!(err.to_string().contains("low"));

        assert!(build_stage_manifest(Stage::Expert, &[&hi], &[], None).is_err());
        let approved = CurationItem {
            expert_approved: Some(true),
            ..hi.clone()
        };
        let s2 = build_stage_manifest(Stage::Curated, &[&hi], &["quality".into()], None).unwrap();
        let s3 = build_stage_manifest(Stage::Expert, &[&approved], &[], Some(&s2)).unwrap();
        assert_eq!(s3.items[0].expert_approved, Some(true));

        let other = CurationItem {
            id: "other".into(),
            ..approved.clone()
        };
        assert!(build_stage_manifest(Stage::Expert, &[&other], &[], Some(&s2)).is_err());

        let text = s2.to_json().unwrap();
        assert_eq!(StageManifest::from_json(&text).unwrap(), s2);
        assert!(text.contains("\"stage\": 2"));
    }
}
