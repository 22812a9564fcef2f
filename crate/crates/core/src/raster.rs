//! Image containers shared by every module: float rasters, equirectangular
//! panoramas, class registries and class-index rasters, plus PNG I/O.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved float raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "raster dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::structural(format!(
                "raster buffer holds {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::domain(format!("raster value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: &[f32]) -> Result<Self> {
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(width * height * value.len())
            .collect();
        Self::new(width, height, value.len(), data)
    }

    /// Builds a raster by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_dynamic(img))
    }

    fn from_dynamic(img: DynamicImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let (channels, data) = match img {
            DynamicImage::ImageLuma8(buf) => (1, buf.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
            DynamicImage::ImageLuma16(buf) => (1, buf.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
            img @ (DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLumaA16(_)) => (
                3,
                img.into_rgb16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
            ),
            img => (3, img.into_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        };
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    /// Writes an 8-bit PNG (grayscale for one channel, RGB for three).
    pub fn save_png8(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let quantize = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        let result = match self.channels {
            1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, self.data.iter().map(|v| quantize(*v)).collect::<Vec<u8>>())
                .expect("buffer size checked at construction")
                .save(path),
            3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, self.data.iter().map(|v| quantize(*v)).collect::<Vec<u8>>())
                .expect("buffer size checked at construction")
                .save(path),
            n => return Err(Error::invalid(format!("cannot encode {n}-channel raster as PNG"))),
        };
        result.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Writes a 16-bit PNG (grayscale for one channel, RGB for three).
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let quantize = |v: f32| (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
        let (w, h) = (self.width as u32, self.height as u32);
        let result = match self.channels {
            1 => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, self.data.iter().map(|v| quantize(*v)).collect::<Vec<u16>>())
                .expect("buffer size checked at construction")
                .save(path),
            3 => ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, self.data.iter().map(|v| quantize(*v)).collect::<Vec<u16>>())
                .expect("buffer size checked at construction")
                .save(path),
            n => return Err(Error::invalid(format!("cannot encode {n}-channel raster as PNG"))),
        };
        result.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// An equirectangular raster: `width == 2 * height`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama(Raster);

impl Panorama {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.width != 2 * raster.height {
            return Err(Error::structural(format!(
                "equirectangular panorama must be 2:1, got {}x{}",
                raster.width, raster.height
            )));
        }
        Ok(Self(raster))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Raster::load_png(path)?)
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn channels(&self) -> usize {
        self.0.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.0.width, self.0.height)
    }

    /// Rotates the panorama horizontally: output column `x` takes input
    /// column `x - shift` (mod width).
    pub fn roll_columns(&self, shift: isize) -> Panorama {
        let w = self.width() as isize;
        let r = &self.0;
        let raster = Raster::from_fn(r.width, r.height, r.channels, |x, y, c| {
            let src = (x as isize - shift).rem_euclid(w) as usize;
            r.get(src, y, c)
        })
        .expect("dimensions preserved");
        Panorama(raster)
    }

    pub fn flip_vertical(&self) -> Panorama {
        let r = &self.0;
        let raster = Raster::from_fn(r.width, r.height, r.channels, |x, y, c| r.get(x, r.height - 1 - y, c))
            .expect("dimensions preserved");
        Panorama(raster)
    }
}

pub type ClassId = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassGroup {
    /// Room shell: walls, ceilings, floors.
    Layout,
    /// Openings and furniture.
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
    pub group: ClassGroup,
}

/// Class-id → name mapping shared by rasters that are compared to each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RegistryFile", into = "RegistryFile")]
pub struct ClassRegistry {
    entries: Vec<ClassEntry>,
    background_id: ClassId,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    background_id: ClassId,
    classes: Vec<ClassEntry>,
}

impl TryFrom<RegistryFile> for ClassRegistry {
    type Error = Error;

    fn try_from(file: RegistryFile) -> Result<Self> {
        ClassRegistry::new(file.classes, file.background_id)
    }
}

impl From<ClassRegistry> for RegistryFile {
    fn from(reg: ClassRegistry) -> Self {
        RegistryFile {
            background_id: reg.background_id,
            classes: reg.entries,
        }
    }
}

/// Evaluation classes reported in the benchmark tables, in column order.
pub const DEFAULT_EVAL_CLASSES: [&str; 6] = ["Wall", "Door", "Window", "Cabinet", "Sofa", "Bed"];

impl ClassRegistry {
    pub fn new(entries: Vec<ClassEntry>, background_id: ClassId) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for e in &entries {
            if !ids.insert(e.id) {
                return Err(Error::invalid(format!("duplicate class id {}", e.id)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::invalid(format!("duplicate class name {:?}", e.name)));
            }
        }
        if !ids.contains(&background_id) {
            return Err(Error::invalid(format!(
                "background id {background_id} is not a registered class"
            )));
        }
        Ok(Self {
            entries,
            background_id,
        })
    }

    /// Background plus the six table classes, followed by ceiling and floor.
    pub fn default_interior() -> Self {
        use ClassGroup::*;
        let spec: [(ClassId, &str, ClassGroup); 9] = [
            (0, "Background", Semantic),
            (1, "Wall", Layout),
            (2, "Door", Semantic),
            (3, "Window", Semantic),
            (4, "Cabinet", Semantic),
            (5, "Sofa", Semantic),
            (6, "Bed", Semantic),
            (7, "Ceiling", Layout),
            (8, "Floor", Layout),
        ];
        let entries = spec
            .iter()
            .map(|(id, name, group)| ClassEntry {
                id: *id,
                name: (*name).to_string(),
                group: *group,
            })
            .collect();
        Self::new(entries, 0).expect("default registry is well formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn background_id(&self) -> ClassId {
        self.background_id
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.id)
    }

    pub fn name_of(&self, id: ClassId) -> Option<&str> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.name.as_str())
    }

    /// Resolves class names to ids, failing on the first unknown name.
    pub fn resolve(&self, names: &[impl AsRef<str>]) -> Result<Vec<ClassId>> {
        names
            .iter()
            .map(|n| {
                self.id_of(n.as_ref())
                    .ok_or_else(|| Error::invalid(format!("unknown class {:?}", n.as_ref())))
            })
            .collect()
    }
}

/// Single-channel class-index raster bound to a registry.
#[derive(Debug, Clone)]
pub struct ClassRaster {
    width: usize,
    height: usize,
    data: Vec<ClassId>,
    registry: Arc<ClassRegistry>,
}

impl ClassRaster {
    pub fn new(width: usize, height: usize, data: Vec<ClassId>, registry: Arc<ClassRegistry>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("class raster dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::structural(format!(
                "class raster holds {} pixels, expected {}",
                data.len(),
                width * height
            )));
        }
        let known: HashSet<ClassId> = registry.entries().iter().map(|e| e.id).collect();
        if let Some(bad) = data.iter().find(|id| !known.contains(id)) {
            return Err(Error::invalid(format!("class id {bad} is not in the registry")));
        }
        Ok(Self {
            width,
            height,
            data,
            registry,
        })
    }

    pub fn background(width: usize, height: usize, registry: Arc<ClassRegistry>) -> Self {
        let bg = registry.background_id();
        Self::new(width, height, vec![bg; width * height], registry).expect("background is registered")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[ClassId] {
        &self.data
    }

    pub fn registry(&self) -> &Arc<ClassRegistry> {
        &self.registry
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, id: ClassId) -> Result<()> {
        if !self.registry.contains(id) {
            return Err(Error::invalid(format!("class id {id} is not in the registry")));
        }
        self.data[y * self.width + x] = id;
        Ok(())
    }

    pub fn same_registry(&self, other: &ClassRaster) -> bool {
        Arc::ptr_eq(&self.registry, &other.registry) || *self.registry == *other.registry
    }

    /// Reads an 8-bit single-channel PNG whose pixel values are class ids.
    pub fn load_png(path: impl AsRef<Path>, registry: Arc<ClassRegistry>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let img = match img {
            DynamicImage::ImageLuma8(buf) => buf,
            other => {
                return Err(Error::invalid(format!(
                    "{}: class rasters must be 8-bit single-channel PNG, got {:?}",
                    path.display(),
                    other.color()
                )))
            }
        };
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::new(w, h, img.into_raw(), registry)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        ImageBuffer::<Luma<u8>, _>::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer size checked at construction")
            .save(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panorama_requires_two_to_one() {
        let r = Raster::filled(10, 4, &[0.5]).unwrap();
        assert!(matches!(Panorama::new(r), Err(Error::Structural(_))));
        let r = Raster::filled(8, 4, &[0.5]).unwrap();
        assert!(Panorama::new(r).is_ok());
    }

    #[test]
    fn raster_rejects_out_of_range_values() {
        assert!(Raster::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Raster::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(Raster::new(1, 1, 1, vec![1.0]).is_ok());
    }

    #[test]
    fn registry_validation() {
        let e = |id, name: &str| ClassEntry {
            id,
            name: name.into(),
            group: ClassGroup::Semantic,
        };
        assert!(ClassRegistry::new(vec![e(0, "a"), e(0, "b")], 0).is_err());
        assert!(ClassRegistry::new(vec![e(0, "a"), e(1, "a")], 0).is_err());
        assert!(ClassRegistry::new(vec![e(0, "a")], 3).is_err());
    }

    #[test]
    fn registry_json_round_trip() {
        let reg = ClassRegistry::default_interior();
        let text = serde_json::to_string(&reg).unwrap();
        let back: ClassRegistry = serde_json::from_str(&text).unwrap();
        assert_eq!(reg, back);
        let bad = r#"{"background_id": 9, "classes": [{"id": 0, "name": "x", "group": "layout"}]}"#;
        assert!(serde_json::from_str::<ClassRegistry>(bad).is_err());
    }

    #[test]
    fn class_raster_rejects_unknown_ids() {
        let reg = Arc::new(ClassRegistry::default_interior());
        assert!(ClassRaster::new(2, 1, vec![0, 200], reg).is_err());
    }

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Arc::new(ClassRegistry::default_interior());
        let cr = ClassRaster::new(4, 2, vec![0, 1, 2, 3, 4, 5, 6, 7], reg.clone()).unwrap();
        let p = dir.path().join("c.png");
        cr.save_png(&p).unwrap();
        let back = ClassRaster::load_png(&p, reg).unwrap();
        assert_eq!(back.data(), cr.data());

        let r = Raster::from_fn(4, 2, 3, |x, y, c| ((x + y + c) % 4) as f32 / 3.0).unwrap();
        let p16 = dir.path().join("n.png");
        r.save_png16(&p16).unwrap();
        let back = Raster::load_png(&p16).unwrap();
        for (a, b) in r.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1.0 / 65535.0);
        }
    }
}
