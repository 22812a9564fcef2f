//! Equirectangular sphere math, perspective (NFoV) rendering, furniture-centred
//! camera selection and seam continuity.
//!
//! Conventions:
//! * longitude `lon` in `[-π, π)` grows with the image x axis, latitude `lat`
//!   in `[-π/2, π/2]` is `+π/2` at the top row;
//! * the unit vector of `(lon, lat)` is `(cos lat·sin lon, sin lat, cos lat·cos lon)`,
//!   so the forward axis `(0, 0, 1)` is the image centre;
//! * pixel `(i, j)` covers the continuous square `[i, i+1) × [j, j+1)` and is
//!   sampled at its centre `(i + 0.5, j + 0.5)`.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, ClassRaster, Panorama, Raster};

/// Reference resolution for the speckle threshold of furniture components.
pub const REFERENCE_AREA: (usize, usize) = (2048, 1024);
/// Minimum component size, in pixels, at [`REFERENCE_AREA`].
pub const REFERENCE_MIN_COMPONENT_PX: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereDirection {
    pub lon: f64,
    pub lat: f64,
}

impl SphereDirection {
    pub fn to_unit(self) -> [f64; 3] {
        let (sl, cl) = self.lat.sin_cos();
        let (so, co) = self.lon.sin_cos();
        [cl * so, sl, cl * co]
    }

    /// Direction of an arbitrary non-zero vector. Returns `None` for vectors
    /// shorter than `1e-12`.
    pub fn from_vector(v: [f64; 3]) -> Option<Self> {
        let horiz = v[0].hypot(v[2]);
        if horiz.hypot(v[1]) < 1e-12 {
            return None;
        }
        let lon = wrap_lon(v[0].atan2(v[2]));
        let lat = v[1].atan2(horiz);
        Some(Self { lon, lat })
    }
}

/// Wraps a longitude into `[-π, π)`.
pub fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Continuous ERP pixel coordinate to sphere direction.
pub fn erp_to_sphere(u: f64, v: f64, width: usize, height: usize) -> Result<SphereDirection> {
    let (w, h) = (width as f64, height as f64);
    if width == 0 || height == 0 {
        return Err(Error::domain("panorama dimensions must be positive"));
    }
    if !(0.0..=w).contains(&u) || !(0.0..=h).contains(&v) {
        return Err(Error::domain(format!(
            "pixel coordinate ({u}, {v}) outside [0, {w}] x [0, {h}]"
        )));
    }
    Ok(SphereDirection {
        lon: (u / w) * TAU - PI,
        lat: FRAC_PI_2 - (v / h) * PI,
    })
}

/// Inverse of [`erp_to_sphere`]. Longitude is wrapped first, so the mapping
/// is total.
pub fn sphere_to_erp(dir: SphereDirection, width: usize, height: usize) -> (f64, f64) {
    let lon = wrap_lon(dir.lon);
    let u = (lon + PI) / TAU * width as f64;
    let v = (FRAC_PI_2 - dir.lat) / PI * height as f64;
    (u, v)
}

/// Pinhole camera looking out from the panorama centre. Roll is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub yaw: f64,
    pub pitch: f64,
    pub hfov: f64,
    pub out_width: usize,
    pub out_height: usize,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            yaw: 0.0,
            pitch: 0.0,
            hfov: FRAC_PI_2,
            out_width: 512,
            out_height: 512,
        }
    }
}

impl CameraSpec {
    pub fn new(yaw: f64, pitch: f64, hfov: f64, out_width: usize, out_height: usize) -> Result<Self> {
        let cam = Self {
            yaw,
            pitch,
            hfov,
            out_width,
            out_height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hfov > 0.0 && self.hfov < PI) {
            return Err(Error::domain(format!("hfov {} outside (0, π)", self.hfov)));
        }
        if self.out_width < 8 || self.out_height < 8 {
            return Err(Error::domain(format!(
                "output size {}x{} below the 8x8 minimum",
                self.out_width, self.out_height
            )));
        }
        if !self.yaw.is_finite() || !self.pitch.is_finite() {
            return Err(Error::domain("camera angles must be finite"));
        }
        Ok(())
    }

    pub fn with_orientation(&self, yaw: f64, pitch: f64) -> Self {
        Self { yaw, pitch, ..*self }
    }

    /// Focal length in pixels implied by `hfov` and the output width.
    pub fn focal_px(&self) -> f64 {
        self.out_width as f64 / 2.0 / (self.hfov / 2.0).tan()
    }

    /// Camera frame → world frame: pitch about x (positive looks up), then yaw
    /// about y (positive turns toward +lon).
    pub fn to_world(&self, v: [f64; 3]) -> [f64; 3] {
        let (sp, cp) = self.pitch.sin_cos();
        let y1 = v[1] * cp + v[2] * sp;
        let z1 = -v[1] * sp + v[2] * cp;
        let (sy, cy) = self.yaw.sin_cos();
        [v[0] * cy + z1 * sy, y1, -v[0] * sy + z1 * cy]
    }

    /// Camera-frame ray through the continuous output position `(x, y)`.
    pub fn ray(&self, x: f64, y: f64) -> [f64; 3] {
        let f = self.focal_px();
        [
            (x - self.out_width as f64 / 2.0) / f,
            -(y - self.out_height as f64 / 2.0) / f,
            1.0,
        ]
    }
}

/// Bilinear lookup at continuous ERP position `(u, v)` with horizontal wrap
/// and vertical clamping. Writes `channels` values into `out`.
pub fn sample_bilinear(raster: &Raster, u: f64, v: f64, out: &mut [f32]) {
    let (w, h) = (raster.width() as isize, raster.height() as isize);
    let x = u - 0.5;
    let y = v - 0.5;
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = x - x0f;
    let fy = y - y0f;
    let x0 = (x0f as isize).rem_euclid(w) as usize;
    let x1 = (x0f as isize + 1).rem_euclid(w) as usize;
    let y0 = (y0f as isize).clamp(0, h - 1) as usize;
    let y1 = (y0f as isize + 1).clamp(0, h - 1) as usize;
    for (c, o) in out.iter_mut().enumerate() {
        let top = raster.get(x0, y0, c) as f64 * (1.0 - fx) + raster.get(x1, y0, c) as f64 * fx;
        let bot = raster.get(x0, y1, c) as f64 * (1.0 - fx) + raster.get(x1, y1, c) as f64 * fx;
        *o = (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0) as f32;
    }
}

/// Renders a perspective view of `pano` through `cam`.
pub fn render_nfov(pano: &Panorama, cam: &CameraSpec) -> Result<Raster> {
    cam.validate()?;
    let (pw, ph) = pano.dims();
    let ch = pano.channels();
    let src = pano.raster();
    let mut data = vec![0f32; cam.out_width * cam.out_height * ch];
    data.par_chunks_mut(cam.out_width * ch)
        .enumerate()
        .for_each(|(row, line)| {
            for col in 0..cam.out_width {
                let ray = cam.ray(col as f64 + 0.5, row as f64 + 0.5);
                let dir = SphereDirection::from_vector(cam.to_world(ray)).expect("camera rays are non-zero");
                let (u, v) = sphere_to_erp(dir, pw, ph);
                sample_bilinear(src, u, v, &mut line[col * ch..(col + 1) * ch]);
            }
        });
    Raster::new(cam.out_width, cam.out_height, ch, data)
}

/// Component size threshold scaled from 64 px at 2048x1024 by image area.
pub fn default_min_component_px(width: usize, height: usize) -> usize {
    let reference = (REFERENCE_AREA.0 * REFERENCE_AREA.1) as f64;
    let scaled = REFERENCE_MIN_COMPONENT_PX as f64 * (width * height) as f64 / reference;
    (scaled.ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureView {
    pub class_id: ClassId,
    pub pixel_count: usize,
    pub camera: CameraSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedComponent {
    pub class_id: ClassId,
    pub pixel_count: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewSelection {
    pub views: Vec<FurnitureView>,
    pub skipped: Vec<SkippedComponent>,
}

impl ViewSelection {
    pub fn cameras(&self) -> impl Iterator<Item = &CameraSpec> {
        self.views.iter().map(|v| &v.camera)
    }
}

/// Labels the 4-connected components of `class` with horizontal wrap across
/// the seam. Components are listed in row-major order of their first pixel.
pub fn class_components(raster: &ClassRaster, class: ClassId) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (raster.width(), raster.height());
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if seen[y * w + x] || raster.get(x, y) != class {
                continue;
            }
            let mut comp = Vec::new();
            seen[y * w + x] = true;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                comp.push((cx, cy));
                let mut nbrs = [None; 4];
                nbrs[0] = Some(((cx + w - 1) % w, cy));
                nbrs[1] = Some(((cx + 1) % w, cy));
                if cy > 0 {
                    nbrs[2] = Some((cx, cy - 1));
                }
                if cy + 1 < h {
                    nbrs[3] = Some((cx, cy + 1));
                }
                for (nx, ny) in nbrs.into_iter().flatten() {
                    let idx = ny * w + nx;
                    if !seen[idx] && raster.get(nx, ny) == class {
                        seen[idx] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

/// One camera per admissible connected component of each target class,
/// aimed at the component's spherical centroid.
pub fn furniture_view_cameras(
    raster: &ClassRaster,
    targets: &[ClassId],
    template: &CameraSpec,
    min_component_px: Option<usize>,
) -> Result<ViewSelection> {
    let (w, h) = (raster.width(), raster.height());
    if w != 2 * h {
        return Err(Error::structural(format!(
            "class raster must be equirectangular (2:1), got {w}x{h}"
        )));
    }
    if targets.is_empty() {
        return Err(Error::invalid("target class set is empty"));
    }
    template.validate()?;
    let min_px = min_component_px.unwrap_or_else(|| default_min_component_px(w, h));

    let mut seen_targets = Vec::new();
    let mut selection = ViewSelection::default();
    for &class in targets {
        if seen_targets.contains(&class) {
            continue;
        }
        seen_targets.push(class);
        for comp in class_components(raster, class) {
            if comp.len() < min_px {
                continue;
            }
            let mut sum = [0f64; 3];
            for &(x, y) in &comp {
                let d = erp_to_sphere(x as f64 + 0.5, y as f64 + 0.5, w, h)
                    .expect("pixel centres are in range")
                    .to_unit();
                for k in 0..3 {
                    sum[k] += d[k];
                }
            }
            let n = comp.len() as f64;
            let mean = [sum[0] / n, sum[1] / n, sum[2] / n];
            let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
            if norm < 1e-6 {
                log::warn!(
                    "skipping class {class} component of {} px: degenerate spherical centroid",
                    comp.len()
                );
                selection.skipped.push(SkippedComponent {
                    class_id: class,
                    pixel_count: comp.len(),
                    reason: format!("degenerate centroid (mean-vector norm {norm:.3e})"),
                });
                continue;
            }
            let dir = SphereDirection::from_vector(mean).expect("norm checked above");
            selection.views.push(FurnitureView {
                class_id: class,
                pixel_count: comp.len(),
                camera: template.with_orientation(dir.lon, dir.lat),
            });
        }
    }
    Ok(selection)
}

/// Mean absolute difference between the first and last columns over all rows
/// and channels. Zero means the 360° wrap is seamless.
pub fn seam_continuity(pano: &Panorama) -> f64 {
    let r = pano.raster();
    let last = r.width() - 1;
    let mut total = 0f64;
    for y in 0..r.height() {
        for c in 0..r.channels() {
            total += (r.get(0, y, c) as f64 - r.get(last, y, c) as f64).abs();
        }
    }
    total / (r.height() * r.channels()) as f64
}
