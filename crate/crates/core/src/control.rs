//! Structural control signal (empty-room normals fused with a coarse instance
//! map), the block-wise latent mask for style-reference latents, and
//! conformance checks for template-standardised reference images.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::{ClassId, ClassRaster, ClassRegistry, Raster};
use crate::rng;

/// Tolerance on decoded normal length.
pub const NORMAL_NORM_TOLERANCE: f64 = 0.05;
/// Fraction of pixels that must carry a unit-length normal.
pub const NORMAL_VALID_FRACTION: f64 = 0.99;

/// Per-pixel unit normals stored as `(n + 1) / 2` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    raster: Raster,
}

impl NormalMap {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.channels() != 3 {
            return Err(Error::invalid(format!(
                "normal map needs 3 channels, got {}",
                raster.channels()
            )));
        }
        let map = Self { raster };
        map.validate()?;
        Ok(map)
    }

    /// Encodes world-space vectors; they are not renormalised.
    pub fn from_vectors(width: usize, height: usize, vectors: &[[f64; 3]]) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::structural("normal vector count does not match dimensions"));
        }
        let data = vectors
            .iter()
            .flat_map(|n| n.map(|v| ((v + 1.0) / 2.0) as f32))
            .collect();
        Self::new(Raster::new(width, height, 3, data)?)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Raster::load_png(path)?)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.raster.save_png16(path)
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn stored(&self) -> &Raster {
        &self.raster
    }

    pub fn decode(&self, x: usize, y: usize) -> [f64; 3] {
        let p = self.raster.pixel(x, y);
        [0, 1, 2].map(|c| p[c] as f64 * 2.0 - 1.0)
    }

    fn validate(&self) -> Result<()> {
        let total = self.width() * self.height();
        let valid = (0..self.height())
            .flat_map(|y| (0..self.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| {
                let n = self.decode(x, y);
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                (len - 1.0).abs() <= NORMAL_NORM_TOLERANCE
            })
            .count();
        if (valid as f64) < NORMAL_VALID_FRACTION * total as f64 {
            return Err(Error::domain(format!(
                "only {valid} of {total} normals are unit length within {NORMAL_NORM_TOLERANCE}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlProvenance {
    pub normal_source_id: String,
    pub segmentation_source_id: String,
}

/// Unified structural control: three normal channels plus one class-index
/// channel at the same resolution.
#[derive(Debug, Clone)]
pub struct ControlSignal {
    normals: NormalMap,
    instances: ClassRaster,
    provenance: ControlProvenance,
}

/// Provenance manifest entry written next to the control PNGs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlManifest {
    pub width: usize,
    pub height: usize,
    pub normals: String,
    pub instances: String,
    #[serde(flatten)]
    pub provenance: ControlProvenance,
}

pub fn fuse_control(normals: &NormalMap, instances: &ClassRaster, provenance: ControlProvenance) -> Result<ControlSignal> {
    if normals.width() != instances.width() || normals.height() != instances.height() {
        return Err(Error::structural(format!(
            "normal map is {}x{} but instance map is {}x{}",
            normals.width(),
            normals.height(),
            instances.width(),
            instances.height()
        )));
    }
    Ok(ControlSignal {
        normals: normals.clone(),
        instances: instances.clone(),
        provenance,
    })
}

impl ControlSignal {
    pub const CHANNELS: usize = 4;

    pub fn width(&self) -> usize {
        self.normals.width()
    }

    pub fn height(&self) -> usize {
        self.normals.height()
    }

    pub fn normals(&self) -> &NormalMap {
        &self.normals
    }

    pub fn instances(&self) -> &ClassRaster {
        &self.instances
    }

    pub fn provenance(&self) -> &ControlProvenance {
        &self.provenance
    }

    /// Pixel-interleaved `[nx, ny, nz, class]` tensor; normals in stored
    /// `[0, 1]` form, class as its integer id.
    pub fn tensor(&self) -> Vec<f32> {
        let normals = self.normals.stored().data();
        normals
            .chunks_exact(3)
            .zip(self.instances.data())
            .flat_map(|(n, &c)| [n[0], n[1], n[2], c as f32])
            .collect()
    }

    /// One-hot expansion of the instance channel over `classes`, pixel
    /// interleaved. Pixels of classes outside the list are all zero.
    pub fn one_hot(&self, classes: &[ClassId]) -> Vec<f32> {
        let mut out = vec![0f32; self.instances.data().len() * classes.len()];
        for (p, &c) in self.instances.data().iter().enumerate() {
            if let Some(k) = classes.iter().position(|&x| x == c) {
                out[p * classes.len() + k] = 1.0;
            }
        }
        out
    }

    /// Writes `normals.png` (16-bit), `instances.png` (8-bit) and
    /// `control.json` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<ControlManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.normals.save_png(dir.join("normals.png"))?;
        self.instances.save_png(dir.join("instances.png"))?;
        let manifest = ControlManifest {
            width: self.width(),
            height: self.height(),
            normals: "normals.png".into(),
            instances: "instances.png".into(),
            provenance: self.provenance.clone(),
        };
        let path = dir.join("control.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: impl AsRef<Path>, registry: Arc<ClassRegistry>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("control.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ControlManifest = serde_json::from_str(&text)?;
        let normals = NormalMap::load_png(dir.join(&manifest.normals))?;
        let instances = ClassRaster::load_png(dir.join(&manifest.instances), registry)?;
        fuse_control(&normals, &instances, manifest.provenance)
    }
}

/// Token grid of a VAE latent, laid out `[row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    grid_h: usize,
    grid_w: usize,
    channels: usize,
    data: Vec<f32>,
}

/// Magic bytes opening a latent blob.
pub const LATENT_MAGIC: [u8; 4] = *b"PBLT";
const LATENT_HEADER_LEN: usize = 16;

impl LatentGrid {
    pub fn new(grid_h: usize, grid_w: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 || channels == 0 {
            return Err(Error::invalid("latent grid dimensions must be positive"));
        }
        if data.len() != grid_h * grid_w * channels {
            return Err(Error::structural(format!(
                "latent buffer holds {} values, expected {}",
                data.len(),
                grid_h * grid_w * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("latent values must be finite"));
        }
        Ok(Self {
            grid_h,
            grid_w,
            channels,
            data,
        })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// 16-byte header (`PBLT`, then `grid_h`, `grid_w`, `channels` as
    /// little-endian u32) followed by little-endian f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LATENT_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&LATENT_MAGIC);
        for d in [self.grid_h, self.grid_w, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < LATENT_HEADER_LEN || bytes[..4] != LATENT_MAGIC {
            return Err(Error::invalid("not a latent blob (bad magic or short header)"));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (h, w, c) = (dim(0), dim(1), dim(2));
        let body = &bytes[LATENT_HEADER_LEN..];
        if body.len() != h * w * c * 4 {
            return Err(Error::structural(format!(
                "latent blob body is {} bytes, header implies {}",
                body.len(),
                h * w * c * 4
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(h, w, c, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Block mask drawn by [`latent_mask`]; reproducible from its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub seed: u64,
    pub keep_prob: f64,
    pub patch: usize,
    pub blocks_h: usize,
    pub blocks_w: usize,
    /// Row-major block flags, `'1'` kept and `'0'` zeroed.
    pub blocks: String,
}

impl MaskRecord {
    /// Draws the block mask for a `grid_h x grid_w` latent. Block `i` (row
    /// major) is kept iff draw `i` of the seed's counter stream is `< keep_prob`.
    pub fn generate(seed: u64, keep_prob: f64, patch: usize, grid_h: usize, grid_w: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&keep_prob) {
            return Err(Error::domain(format!("keep probability {keep_prob} outside [0, 1]")));
        }
        if patch == 0 {
            return Err(Error::domain("patch size must be at least 1"));
        }
        let blocks_h = grid_h.div_ceil(patch);
        let blocks_w = grid_w.div_ceil(patch);
        let blocks = (0..(blocks_h * blocks_w) as u64)
            .map(|i| if rng::draw_unit(seed, i) < keep_prob { '1' } else { '0' })
            .collect();
        Ok(Self {
            seed,
            keep_prob,
            patch,
            blocks_h,
            blocks_w,
            blocks,
        })
    }

    pub fn is_kept(&self, block_row: usize, block_col: usize) -> bool {
        self.blocks.as_bytes()[block_row * self.blocks_w + block_col] == b'1'
    }

    pub fn kept_blocks(&self) -> usize {
        self.blocks.bytes().filter(|b| *b == b'1').count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_blocks() as f64 / self.blocks.len() as f64
    }
}

/// Applies a seeded block-wise Bernoulli mask to a style-reference latent.
/// All channels of a token share its block's flag.
pub fn latent_mask(z: &LatentGrid, keep_prob: f64, patch: usize, seed: u64) -> Result<(LatentGrid, MaskRecord)> {
    let record = MaskRecord::generate(seed, keep_prob, patch, z.grid_h, z.grid_w)?;
    let mut data = z.data.clone();
    for r in 0..z.grid_h {
        for c in 0..z.grid_w {
            if !record.is_kept(r / patch, c / patch) {
                let start = (r * z.grid_w + c) * z.channels;
                data[start..start + z.channels].fill(0.0);
            }
        }
    }
    let masked = LatentGrid { data, ..z.clone() };
    Ok((masked, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomType {
    Bedroom,
    LivingRoom,
    DiningRoom,
    Kitchen,
    Bathroom,
    Study,
}

/// SHA-256 over the dimensions (u32 LE) and f32 LE samples of a depth raster.
pub fn depth_hash(depth: &Raster) -> String {
    let mut h = Sha256::new();
    for d in [depth.width(), depth.height(), depth.channels()] {
        h.update((d as u32).to_le_bytes());
    }
    for v in depth.data() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub room_type: RoomType,
    pub template_id: String,
    pub depth_hash: String,
}

impl TemplateRecord {
    pub fn from_depth(room_type: RoomType, template_id: impl Into<String>, depth: &Raster) -> Self {
        Self {
            room_type,
            template_id: template_id.into(),
            depth_hash: depth_hash(depth),
        }
    }
}

/// Versioned set of standard depth templates, one per room type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TemplateRegistryFile", into = "TemplateRegistryFile")]
pub struct TemplateRegistry {
    pub version: u32,
    templates: BTreeMap<RoomType, TemplateRecord>,
}

#[derive(Serialize, Deserialize)]
struct TemplateRegistryFile {
    version: u32,
    templates: Vec<TemplateRecord>,
}

impl TryFrom<TemplateRegistryFile> for TemplateRegistry {
    type Error = Error;

    fn try_from(f: TemplateRegistryFile) -> Result<Self> {
        TemplateRegistry::new(f.version, f.templates)
    }
}

impl From<TemplateRegistry> for TemplateRegistryFile {
    fn from(r: TemplateRegistry) -> Self {
        TemplateRegistryFile {
            version: r.version,
            templates: r.templates.into_values().collect(),
        }
    }
}

impl TemplateRegistry {
    pub fn new(version: u32, templates: Vec<TemplateRecord>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in templates {
            let room = t.room_type;
            if map.insert(room, t).is_some() {
                return Err(Error::invalid(format!(
                    "registry version {version} has more than one template for {room:?}"
                )));
            }
        }
        Ok(Self { version, templates: map })
    }

    pub fn get(&self, room: RoomType) -> Option<&TemplateRecord> {
        self.templates.get(&room)
    }
}

/// A style reference after warping onto a depth template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardReference {
    pub id: String,
    pub room_type: RoomType,
    pub width: usize,
    pub height: usize,
    pub template_id: String,
    pub depth_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformanceRule {
    TemplateId,
    Resolution,
    DepthHash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceViolation {
    pub record_id: String,
    pub rule: ConformanceRule,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub template_id: String,
    pub pass: bool,
    pub violations: Vec<ConformanceViolation>,
}

impl ConformanceReport {
    /// Offending record ids, deduplicated, in input order.
    pub fn offenders(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for v in &self.violations {
            if !ids.contains(&v.record_id.as_str()) {
                ids.push(&v.record_id);
            }
        }
        ids
    }
}

/// Checks that standardised references all point at `template`, share one
/// resolution and carry the template's depth hash.
///
/// The shared resolution is the unique most common one; when the most common
/// resolution is tied, every record is flagged.
pub fn check_template_conformance(refs: &[StandardReference], template: &TemplateRecord) -> Result<ConformanceReport> {
    if refs.is_empty() {
        return Err(Error::invalid("no reference records to check"));
    }
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in refs {
        *counts.entry((r.width, r.height)).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let modal: Vec<_> = counts.iter().filter(|(_, n)| **n == top).map(|(k, _)| *k).collect();
    let expected_res = (modal.len() == 1).then(|| modal[0]);

    let mut violations = Vec::new();
    for r in refs {
        if r.template_id != template.template_id {
            violations.push(ConformanceViolation {
                record_id: r.id.clone(),
                rule: ConformanceRule::TemplateId,
                detail: format!("references {:?}, expected {:?}", r.template_id, template.template_id),
            });
        }
        if expected_res != Some((r.width, r.height)) {
            violations.push(ConformanceViolation {
                record_id: r.id.clone(),
                rule: ConformanceRule::Resolution,
                detail: match expected_res {
                    Some((w, h)) => format!("{}x{}, expected {w}x{h}", r.width, r.height),
                    None => format!("{}x{}, no majority resolution", r.width, r.height),
                },
            });
        }
        if r.depth_hash != template.depth_hash {
            violations.push(ConformanceViolation {
                record_id: r.id.clone(),
                rule: ConformanceRule::DepthHash,
                detail: "depth hash differs from template".into(),
            });
        }
    }
    Ok(ConformanceReport {
        template_id: template.template_id.clone(),
        pass: violations.is_empty(),
        violations,
    })
}
