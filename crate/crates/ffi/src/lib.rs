//! C ABI over the `panobench` core.
//!
//! Every fallible function returns a [`PbStatus`]; on failure the message is
//! available from [`pb_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_load_*` and released by the matching
//! `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use panobench::control::{latent_mask, LatentGrid};
use panobench::geometry::{erp_to_sphere, render_nfov, seam_continuity, sphere_to_erp, CameraSpec, SphereDirection};
use panobench::metrics::{class_iou, spatial_consistency};
use panobench::scoring::{
    composite_reward, expert_total, grade, mix_schedule, Grade, RewardNormalizers, RewardVector, RewardWeights,
    ScoreCard,
};
use panobench::{ClassRaster, ClassRegistry, Error, Panorama, Raster};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Structural = 4,
    Io = 5,
    EmptyReport = 6,
    BufferTooSmall = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbGrade {
    S = 0,
    A = 1,
    B = 2,
    C = 3,
    D = 4,
}

impl From<Grade> for PbGrade {
    fn from(g: Grade) -> Self {
        match g {
            Grade::S => PbGrade::S,
            Grade::A => PbGrade::A,
            Grade::B => PbGrade::B,
            Grade::C => PbGrade::C,
            Grade::D => PbGrade::D,
        }
    }
}

/// Opaque equirectangular panorama.
pub struct PbPanorama(Panorama);

/// Opaque class registry.
pub struct PbRegistry(Arc<ClassRegistry>);

/// Opaque class-index raster.
pub struct PbClassRaster(ClassRaster);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> PbStatus {
    match err {
        Error::Domain(_) => PbStatus::Domain,
        Error::Structural(_) => PbStatus::Structural,
        Error::EmptyReport => PbStatus::EmptyReport,
        Error::Io { .. } | Error::Image { .. } => PbStatus::Io,
        _ => PbStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), PbStatus>) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PbStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_last_error("internal panic");
            PbStatus::Internal
        }
    }
}

trait IntoStatus<T> {
    fn status(self) -> Result<T, PbStatus>;
}

impl<T> IntoStatus<T> for panobench::Result<T> {
    fn status(self) -> Result<T, PbStatus> {
        self.map_err(|e| {
            set_last_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null(what: &str) -> PbStatus {
    set_last_error(format!("{what} is null"));
    PbStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, PbStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PbStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, PbStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| {
        set_last_error("path is not valid UTF-8");
        PbStatus::InvalidInput
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `lon` and `lat` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_erp_to_sphere(u: f64, v: f64, width: usize, height: usize, lon: *mut f64, lat: *mut f64) -> PbStatus {
    guard(|| {
        let (lon, lat) = (out(lon, "lon")?, out(lat, "lat")?);
        let d = erp_to_sphere(u, v, width, height).status()?;
        *lon = d.lon;
        *lat = d.lat;
        Ok(())
    })
}

/// # Safety
/// `u` and `v` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_sphere_to_erp(lon: f64, lat: f64, width: usize, height: usize, u: *mut f64, v: *mut f64) -> PbStatus {
    guard(|| {
        let (u, v) = (out(u, "u")?, out(v, "v")?);
        if width == 0 || height == 0 || !lon.is_finite() || !lat.is_finite() {
            set_last_error("invalid sphere_to_erp arguments");
            return Err(PbStatus::Domain);
        }
        (*u, *v) = sphere_to_erp(SphereDirection { lon, lat }, width, height);
        Ok(())
    })
}

/// Builds a panorama from interleaved `[0,1]` samples, row-major.
///
/// # Safety
/// `data` must point to `width * height * channels` floats; `out_pano` must
/// be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_panorama_new(
    width: usize,
    height: usize,
    channels: usize,
    data: *const f32,
    out_pano: *mut *mut PbPanorama,
) -> PbStatus {
    guard(|| {
        let slot = out(out_pano, "out_pano")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let len = width.checked_mul(height).and_then(|n| n.checked_mul(channels)).ok_or_else(|| {
            set_last_error("panorama size overflows");
            PbStatus::InvalidInput
        })?;
        let samples = std::slice::from_raw_parts(data, len).to_vec();
        let pano = Panorama::new(Raster::new(width, height, channels, samples).status()?).status()?;
        *slot = Box::into_raw(Box::new(PbPanorama(pano)));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out_pano` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_panorama_load_png(path: *const c_char, out_pano: *mut *mut PbPanorama) -> PbStatus {
    guard(|| {
        let slot = out(out_pano, "out_pano")?;
        let pano = Panorama::load_png(path_arg(path)?).status()?;
        *slot = Box::into_raw(Box::new(PbPanorama(pano)));
        Ok(())
    })
}

/// # Safety
/// `pano` must come from this library and not be used afterwards. Null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn pb_panorama_free(pano: *mut PbPanorama) {
    if !pano.is_null() {
        drop(Box::from_raw(pano));
    }
}

/// # Safety
/// `pano` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pb_panorama_width(pano: *const PbPanorama) -> usize {
    pano.as_ref().map_or(0, |p| p.0.width())
}

/// # Safety
/// `pano` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pb_panorama_height(pano: *const PbPanorama) -> usize {
    pano.as_ref().map_or(0, |p| p.0.height())
}

/// # Safety
/// `pano` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pb_panorama_channels(pano: *const PbPanorama) -> usize {
    pano.as_ref().map_or(0, |p| p.0.channels())
}

/// # Safety
/// `pano` must be a live handle; `score` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_seam_continuity(pano: *const PbPanorama, score: *mut f64) -> PbStatus {
    guard(|| {
        let pano = deref(pano, "pano")?;
        *out(score, "score")? = seam_continuity(&pano.0);
        Ok(())
    })
}

/// Renders a perspective view into `buf`, which must hold
/// `out_width * out_height * channels` floats. Angles are radians.
///
/// # Safety
/// `pano` must be a live handle; `buf` must be valid for `buf_len` writes.
#[no_mangle]
pub unsafe extern "C" fn pb_render_nfov(
    pano: *const PbPanorama,
    yaw: f64,
    pitch: f64,
    hfov: f64,
    out_width: usize,
    out_height: usize,
    buf: *mut f32,
    buf_len: usize,
) -> PbStatus {
    guard(|| {
        let pano = deref(pano, "pano")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let cam = CameraSpec::new(yaw, pitch, hfov, out_width, out_height).status()?;
        let need = out_width * out_height * pano.0.channels();
        if buf_len < need {
            set_last_error(format!("buffer holds {buf_len} floats, {need} required"));
            return Err(PbStatus::BufferTooSmall);
        }
        let view = render_nfov(&pano.0, &cam).status()?;
        std::slice::from_raw_parts_mut(buf, need).copy_from_slice(view.data());
        Ok(())
    })
}

/// # Safety
/// `out_registry` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_registry_default(out_registry: *mut *mut PbRegistry) -> PbStatus {
    guard(|| {
        *out(out_registry, "out_registry")? = Box::into_raw(Box::new(PbRegistry(Arc::new(ClassRegistry::default_interior()))));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out_registry` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_registry_load(path: *const c_char, out_registry: *mut *mut PbRegistry) -> PbStatus {
    guard(|| {
        let slot = out(out_registry, "out_registry")?;
        let reg = ClassRegistry::load(path_arg(path)?).status()?;
        *slot = Box::into_raw(Box::new(PbRegistry(Arc::new(reg))));
        Ok(())
    })
}

/// Class id for `name`, or -1 when unknown.
///
/// # Safety
/// `registry` must be a live handle; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pb_registry_id_of(registry: *const PbRegistry, name: *const c_char) -> i32 {
    let (Some(reg), false) = (registry.as_ref(), name.is_null()) else {
        return -1;
    };
    CStr::from_ptr(name)
        .to_str()
        .ok()
        .and_then(|n| reg.0.id_of(n))
        .map_or(-1, i32::from)
}

/// # Safety
/// `registry` must come from this library and not be used afterwards. Null
/// is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pb_registry_free(registry: *mut PbRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// # Safety
/// `registry` must be a live handle; `data` must point to `width * height`
/// bytes; `out_raster` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_class_raster_new(
    registry: *const PbRegistry,
    width: usize,
    height: usize,
    data: *const u8,
    out_raster: *mut *mut PbClassRaster,
) -> PbStatus {
    guard(|| {
        let reg = deref(registry, "registry")?;
        let slot = out(out_raster, "out_raster")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let len = width.checked_mul(height).ok_or_else(|| {
            set_last_error("raster size overflows");
            PbStatus::InvalidInput
        })?;
        let ids = std::slice::from_raw_parts(data, len).to_vec();
        let raster = ClassRaster::new(width, height, ids, reg.0.clone()).status()?;
        *slot = Box::into_raw(Box::new(PbClassRaster(raster)));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `registry` must be a live handle;
/// `out_raster` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_class_raster_load_png(
    path: *const c_char,
    registry: *const PbRegistry,
    out_raster: *mut *mut PbClassRaster,
) -> PbStatus {
    guard(|| {
        let reg = deref(registry, "registry")?;
        let slot = out(out_raster, "out_raster")?;
        let raster = ClassRaster::load_png(path_arg(path)?, reg.0.clone()).status()?;
        *slot = Box::into_raw(Box::new(PbClassRaster(raster)));
        Ok(())
    })
}

/// # Safety
/// `raster` must come from this library and not be used afterwards. Null is
/// a no-op.
#[no_mangle]
pub unsafe extern "C" fn pb_class_raster_free(raster: *mut PbClassRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}

/// IoU of one class. `present` is set to false (and `iou` left untouched)
/// when the class is absent from both rasters.
///
/// # Safety
/// Handles must be live; `iou` and `present` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_class_iou(
    a: *const PbClassRaster,
    b: *const PbClassRaster,
    class_id: u8,
    iou: *mut f64,
    present: *mut bool,
) -> PbStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        let (iou, present) = (out(iou, "iou")?, out(present, "present")?);
        match class_iou(&a.0, &b.0, class_id).status()? {
            Some(v) => {
                *iou = v;
                *present = true;
            }
            None => *present = false,
        }
        Ok(())
    })
}

/// Unweighted mean IoU over the present classes of `classes`.
///
/// # Safety
/// Handles must be live; `classes` must point to `n_classes` bytes;
/// `average` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_spatial_consistency_average(
    pred: *const PbClassRaster,
    reference: *const PbClassRaster,
    classes: *const u8,
    n_classes: usize,
    average: *mut f64,
) -> PbStatus {
    guard(|| {
        let (pred, reference) = (deref(pred, "pred")?, deref(reference, "reference")?);
        let average = out(average, "average")?;
        if classes.is_null() && n_classes > 0 {
            return Err(null("classes"));
        }
        let ids = if n_classes == 0 { &[][..] } else { std::slice::from_raw_parts(classes, n_classes) };
        *average = spatial_consistency(&pred.0, &reference.0, ids).status()?.average;
        Ok(())
    })
}

/// Unrounded weighted expert total and its grade.
///
/// # Safety
/// `total` and `grade_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_expert_total(
    aesthetic: f64,
    spatial: f64,
    plausibility: f64,
    total: *mut f64,
    grade_out: *mut PbGrade,
) -> PbStatus {
    guard(|| {
        let (total, grade_out) = (out(total, "total")?, out(grade_out, "grade")?);
        let t = expert_total(&ScoreCard {
            aesthetic,
            spatial_consistency: spatial,
            plausibility,
        })
        .status()?;
        *total = t;
        *grade_out = grade(t).into();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn pb_grade(total: f64) -> PbGrade {
    grade(total).into()
}

/// Composite reward with default normalizers. `weights` holds four values in
/// channel order, or is null for uniform weights.
///
/// # Safety
/// `weights` must be null or point to 4 doubles; `reward` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn pb_composite_reward(
    structural_iou: f64,
    omniaid: f64,
    longclip: f64,
    hpsv3: f64,
    weights: *const f64,
    reward: *mut f64,
) -> PbStatus {
    guard(|| {
        let reward = out(reward, "reward")?;
        let w = if weights.is_null() {
            RewardWeights::uniform()
        } else {
            let w = std::slice::from_raw_parts(weights, 4);
            RewardWeights {
                structural_iou: w[0],
                omniaid: w[1],
                longclip: w[2],
                hpsv3: w[3],
            }
        };
        let v = RewardVector {
            structural_iou,
            omniaid,
            longclip,
            hpsv3,
        };
        *reward = composite_reward(&v, &w, &RewardNormalizers::default()).status()?;
        Ok(())
    })
}

/// # Safety
/// `p_single` and `p_multi` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_mix_schedule(step: u64, warmup_steps: u64, p_single: *mut f64, p_multi: *mut f64) -> PbStatus {
    guard(|| {
        let (s, m) = (out(p_single, "p_single")?, out(p_multi, "p_multi")?);
        let r = mix_schedule(step, warmup_steps).status()?;
        *s = r.p_single;
        *m = r.p_multi;
        Ok(())
    })
}

/// Masks a `grid_h × grid_w × channels` latent in place (row-major,
/// channels innermost) and reports how many blocks were kept.
///
/// # Safety
/// `data` must point to `grid_h * grid_w * channels` floats; `kept_blocks`
/// must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pb_latent_mask(
    data: *mut f32,
    grid_h: usize,
    grid_w: usize,
    channels: usize,
    keep_prob: f64,
    patch: usize,
    seed: u64,
    kept_blocks: *mut usize,
) -> PbStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = grid_h * grid_w * channels;
        let buf = std::slice::from_raw_parts_mut(data, len);
        let z = LatentGrid::new(grid_h, grid_w, channels, buf.to_vec()).status()?;
        let (masked, record) = latent_mask(&z, keep_prob, patch, seed).status()?;
        buf.copy_from_slice(masked.data());
        if let Some(k) = kept_blocks.as_mut() {
            *k = record.kept_blocks();
        }
        Ok(())
    })
}
