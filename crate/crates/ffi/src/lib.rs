//! Stable C ABI over the traversability library: opaque handles for
//! discretizations and trained models, flat f64 buffers for PMFs and
//! concentrations, and negative error codes.
//!
//! Conventions:
//! - Every fallible function returns an [`EvtravStatus`]; `0` is success.
//! - Output buffers are caller-allocated; lengths are validated against the
//!   discretization's bin count.
//! - Handles are created and freed by this library only. Passing a handle
//!   after freeing it is undefined behavior, as with any C API.

use std::ffi::{c_char, CStr};
use std::sync::Arc;

use evtrav::dist::{DirichletParams, Discretization, Pmf};
use evtrav::physics::{physics_prior_pmf, FootprintSample, PriorConfig};
use evtrav::predictor::{EvidentialNet, TerrainFeature};
use evtrav::{Error, TravParam};

/// Status codes returned by every fallible function.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvtravStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidArgument = -2,
    DomainError = -3,
    IoError = -4,
    ParseError = -5,
    Internal = -99,
}

fn status_of(err: &Error) -> EvtravStatus {
    match err {
        Error::Domain(_) => EvtravStatus::DomainError,
        Error::Io { .. } => EvtravStatus::IoError,
        Error::Parse { .. } => EvtravStatus::ParseError,
        Error::Training(_) | Error::MissingInput(_) => EvtravStatus::Internal,
    }
}

/// Static, NUL-terminated description of a status code.
#[no_mangle]
pub extern "C" fn evtrav_status_message(status: i32) -> *const c_char {
    let msg: &'static [u8] = match status {
        0 => b"ok\0",
        -1 => b"null pointer\0",
        -2 => b"invalid argument\0",
        -3 => b"domain error\0",
        -4 => b"i/o error\0",
        -5 => b"parse error\0",
        -99 => b"internal error\0",
        _ => b"unknown status\0",
    };
    msg.as_ptr() as *const c_char
}

/// Opaque equal-width discretization handle.
pub struct EvtravDisc {
    inner: Arc<Discretization>,
}

/// Opaque trained evidential model handle.
pub struct EvtravModel {
    inner: EvidentialNet,
}

/// Per-wheel footprint measurements consumed by the physics prior; wheel
/// order is front-left, back-left, back-right, front-right.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EvtravFootprint {
    /// Absolute heading-aligned grade per wheel.
    pub slopes: [f64; 4],
    /// Terrain surface height per wheel, meters.
    pub terrain_heights: [f64; 4],
    /// Vegetation height per wheel, meters.
    pub veg_heights: [f64; 4],
    /// Distances of the two roll wheel pairs, meters.
    pub roll_dists: [f64; 2],
    /// Distances of the two pitch wheel pairs, meters.
    pub pitch_dists: [f64; 2],
    pub dirt_ratio: f64,
    pub veg_ratio: f64,
}

impl EvtravFootprint {
    fn to_sample(self) -> FootprintSample {
        FootprintSample {
            slopes: self.slopes,
            terrain_heights: self.terrain_heights,
            veg_heights: self.veg_heights,
            roll_dists: self.roll_dists,
            pitch_dists: self.pitch_dists,
            dirt_ratio: self.dirt_ratio,
            veg_ratio: self.veg_ratio,
        }
    }
}

/// Physics prior configuration mirrored across the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EvtravPriorConfig {
    /// Max grade for the linear-traction model.
    pub s_max_lin: f64,
    /// Max grade for the angular-traction model.
    pub s_max_ang: f64,
    /// Max vegetation height, meters.
    pub h_max: f64,
    /// Uniform-mix weight in [0, 1].
    pub w_unif: f64,
    /// Prior evidence.
    pub n_phys: f64,
}

impl EvtravPriorConfig {
    fn to_config(self) -> PriorConfig {
        PriorConfig {
            s_max_lin: self.s_max_lin,
            s_max_ang: self.s_max_ang,
            h_max: self.h_max,
            w_unif: self.w_unif,
            n_phys: self.n_phys,
        }
    }
}

/// Default physics prior configuration.
#[no_mangle]
pub extern "C" fn evtrav_prior_config_default() -> EvtravPriorConfig {
    let d = PriorConfig::default();
    EvtravPriorConfig {
        s_max_lin: d.s_max_lin,
        s_max_ang: d.s_max_ang,
        h_max: d.h_max,
        w_unif: d.w_unif,
        n_phys: d.n_phys,
    }
}

/// Creates a discretization of `num_bins` equal cells over `[lo, hi]`.
/// Returns NULL on invalid arguments.
#[no_mangle]
pub extern "C" fn evtrav_disc_new(num_bins: usize, lo: f64, hi: f64) -> *mut EvtravDisc {
    match Discretization::new(num_bins, lo, hi) {
        Ok(d) => Box::into_raw(Box::new(EvtravDisc { inner: Arc::new(d) })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Frees a discretization handle; NULL is ignored.
///
/// # Safety
/// `disc` must be NULL or a pointer returned by [`evtrav_disc_new`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn evtrav_disc_free(disc: *mut EvtravDisc) {
    if !disc.is_null() {
        drop(Box::from_raw(disc));
    }
}

/// Number of bins of a discretization handle (0 for NULL).
///
/// # Safety
/// `disc` must be NULL or a live handle from [`evtrav_disc_new`].
#[no_mangle]
pub unsafe extern "C" fn evtrav_disc_num_bins(disc: *const EvtravDisc) -> usize {
    match disc.as_ref() {
        Some(d) => d.inner.num_bins(),
        None => 0,
    }
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn slice_out<'a>(ptr: *mut f64, len: usize) -> Option<&'a mut [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(ptr, len))
    }
}

/// Writes the bin centers into `out` (length `len`, must equal the bin
/// count).
///
/// # Safety
/// `disc` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn evtrav_disc_centers(
    disc: *const EvtravDisc,
    out: *mut f64,
    len: usize,
) -> EvtravStatus {
    let Some(d) = disc.as_ref() else {
        return EvtravStatus::NullPointer;
    };
    if len != d.inner.num_bins() {
        return EvtravStatus::InvalidArgument;
    }
    let Some(out) = slice_out(out, len) else {
        return EvtravStatus::NullPointer;
    };
    out.copy_from_slice(d.inner.centers());
    EvtravStatus::Ok
}

/// Cumulative sum of `len` values into `out` (buffers may alias).
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn evtrav_cumsum(
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> EvtravStatus {
    let (Some(values), Some(out)) = (slice_arg(values, len), slice_out(out, len)) else {
        return EvtravStatus::NullPointer;
    };
    let mut acc = 0.0;
    for (o, v) in out.iter_mut().zip(values) {
        acc += v;
        *o = acc;
    }
    EvtravStatus::Ok
}

unsafe fn pmf_arg(disc: *const EvtravDisc, masses: *const f64) -> Result<Pmf, EvtravStatus> {
    let d = disc.as_ref().ok_or(EvtravStatus::NullPointer)?;
    let m = slice_arg(masses, d.inner.num_bins()).ok_or(EvtravStatus::NullPointer)?;
    Pmf::new(m.to_vec(), d.inner.clone()).map_err(|e| status_of(&e))
}

unsafe fn dirichlet_arg(
    disc: *const EvtravDisc,
    beta: *const f64,
) -> Result<DirichletParams, EvtravStatus> {
    let d = disc.as_ref().ok_or(EvtravStatus::NullPointer)?;
    let b = slice_arg(beta, d.inner.num_bins()).ok_or(EvtravStatus::NullPointer)?;
    DirichletParams::new(b.to_vec(), d.inner.clone()).map_err(|e| status_of(&e))
}

macro_rules! out_scalar {
    ($out:expr, $value:expr) => {{
        let Some(out) = $out.as_mut() else {
            return EvtravStatus::NullPointer;
        };
        *out = $value;
        EvtravStatus::Ok
    }};
}

/// Mean of a PMF under the bin centers.
///
/// # Safety
/// `disc` must be live; `masses` must hold one value per bin; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn evtrav_pmf_mean(
    disc: *const EvtravDisc,
    masses: *const f64,
    out: *mut f64,
) -> EvtravStatus {
    match pmf_arg(disc, masses) {
        Ok(p) => out_scalar!(out, p.mean()),
        Err(s) => s,
    }
}

/// Left-tail CVaR of a PMF at risk tolerance `alpha` in (0, 1].
///
/// # Safety
/// As [`evtrav_pmf_mean`].
#[no_mangle]
pub unsafe extern "C" fn evtrav_cvar_left(
    disc: *const EvtravDisc,
    masses: *const f64,
    alpha: f64,
    out: *mut f64,
) -> EvtravStatus {
    match pmf_arg(disc, masses).and_then(|p| p.cvar_left(alpha).map_err(|e| status_of(&e))) {
        Ok(v) => out_scalar!(out, v),
        Err(s) => s,
    }
}

/// Right-tail CVaR of a PMF at risk tolerance `alpha` in (0, 1].
///
/// # Safety
/// As [`evtrav_pmf_mean`].
#[no_mangle]
pub unsafe extern "C" fn evtrav_cvar_right(
    disc: *const EvtravDisc,
    masses: *const f64,
    alpha: f64,
    out: *mut f64,
) -> EvtravStatus {
    match pmf_arg(disc, masses).and_then(|p| p.cvar_right(alpha).map_err(|e| status_of(&e))) {
        Ok(v) => out_scalar!(out, v),
        Err(s) => s,
    }
}

/// One-hot encoding of `value` into `out_masses` (clamped to the range).
///
/// # Safety
/// `disc` must be live; `out_masses` must hold one value per bin.
#[no_mangle]
pub unsafe extern "C" fn evtrav_one_hot(
    disc: *const EvtravDisc,
    value: f64,
    out_masses: *mut f64,
) -> EvtravStatus {
    let Some(d) = disc.as_ref() else {
        return EvtravStatus::NullPointer;
    };
    let Some(out) = slice_out(out_masses, d.inner.num_bins()) else {
        return EvtravStatus::NullPointer;
    };
    out.copy_from_slice(Pmf::one_hot(value, d.inner.clone()).masses());
    EvtravStatus::Ok
}

/// Expected PMF of a Dirichlet distribution.
///
/// # Safety
/// `disc` must be live; `beta` and `out_masses` must hold one value per bin.
#[no_mangle]
pub unsafe extern "C" fn evtrav_dirichlet_mean(
    disc: *const EvtravDisc,
    beta: *const f64,
    out_masses: *mut f64,
) -> EvtravStatus {
    let q = match dirichlet_arg(disc, beta) {
        Ok(q) => q,
        Err(s) => return s,
    };
    let Some(out) = slice_out(out_masses, q.num_bins()) else {
        return EvtravStatus::NullPointer;
    };
    out.copy_from_slice(q.mean().masses());
    EvtravStatus::Ok
}

/// Differential entropy of a Dirichlet distribution.
///
/// # Safety
/// As [`evtrav_dirichlet_mean`] with a scalar output.
#[no_mangle]
pub unsafe extern "C" fn evtrav_dirichlet_entropy(
    disc: *const EvtravDisc,
    beta: *const f64,
    out: *mut f64,
) -> EvtravStatus {
    match dirichlet_arg(disc, beta) {
        Ok(q) => out_scalar!(out, q.entropy()),
        Err(s) => s,
    }
}

/// Squared earth mover's distance between two PMFs on the same bins.
///
/// # Safety
/// `disc` must be live; `p` and `y` must hold one value per bin.
#[no_mangle]
pub unsafe extern "C" fn evtrav_emd2(
    disc: *const EvtravDisc,
    p: *const f64,
    y: *const f64,
    out: *mut f64,
) -> EvtravStatus {
    let (p, y) = match (pmf_arg(disc, p), pmf_arg(disc, y)) {
        (Ok(p), Ok(y)) => (p, y),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match evtrav::losses::emd2(&p, &y) {
        Ok(v) => out_scalar!(out, v),
        Err(e) => status_of(&e),
    }
}

/// Expected squared earth mover's distance to `y` under `Dir(beta)`.
///
/// # Safety
/// As [`evtrav_emd2`] with concentrations instead of the first PMF.
#[no_mangle]
pub unsafe extern "C" fn evtrav_uemd2(
    disc: *const EvtravDisc,
    beta: *const f64,
    y: *const f64,
    out: *mut f64,
) -> EvtravStatus {
    let (q, y) = match (dirichlet_arg(disc, beta), pmf_arg(disc, y)) {
        (Ok(q), Ok(y)) => (q, y),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match evtrav::losses::uemd2(&q, &y) {
        Ok(v) => out_scalar!(out, v),
        Err(e) => status_of(&e),
    }
}

/// Physics-informed loss `uemd2(beta, y) + kappa * uemd2(beta, phys)`.
///
/// # Safety
/// As [`evtrav_uemd2`] with an extra PMF argument.
#[no_mangle]
pub unsafe extern "C" fn evtrav_upi_loss(
    disc: *const EvtravDisc,
    beta: *const f64,
    y: *const f64,
    phys: *const f64,
    kappa: f64,
    out: *mut f64,
) -> EvtravStatus {
    let (q, y, phys) = match (dirichlet_arg(disc, beta), pmf_arg(disc, y), pmf_arg(disc, phys)) {
        (Ok(q), Ok(y), Ok(p)) => (q, y, p),
        (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
    };
    match evtrav::losses::upi_loss(&q, &y, &phys, kappa) {
        Ok(v) => out_scalar!(out, v),
        Err(e) => status_of(&e),
    }
}

/// Exact gradient of the physics-informed loss with respect to the
/// concentrations, written into `out_grad` (one value per bin).
///
/// # Safety
/// As [`evtrav_upi_loss`] with a per-bin output buffer.
#[no_mangle]
pub unsafe extern "C" fn evtrav_upi_loss_grad(
    disc: *const EvtravDisc,
    beta: *const f64,
    y: *const f64,
    phys: *const f64,
    kappa: f64,
    out_grad: *mut f64,
) -> EvtravStatus {
    let (q, y, phys) = match (dirichlet_arg(disc, beta), pmf_arg(disc, y), pmf_arg(disc, phys)) {
        (Ok(q), Ok(y), Ok(p)) => (q, y, p),
        (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
    };
    let Some(out) = slice_out(out_grad, q.num_bins()) else {
        return EvtravStatus::NullPointer;
    };
    match evtrav::losses::upi_loss_grad(&q, &y, &phys, kappa) {
        Ok(g) => {
            out.copy_from_slice(&g);
            EvtravStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Closed-form physics prior PMF for one traversability parameter
/// (0 = linear traction, 1 = angular traction, 2 = roll, 3 = pitch).
///
/// # Safety
/// `disc` must be live; `footprint` must be readable; `out_masses` must hold
/// one value per bin.
#[no_mangle]
pub unsafe extern "C" fn evtrav_physics_prior(
    disc: *const EvtravDisc,
    param: i32,
    footprint: *const EvtravFootprint,
    config: EvtravPriorConfig,
    out_masses: *mut f64,
) -> EvtravStatus {
    let Some(d) = disc.as_ref() else {
        return EvtravStatus::NullPointer;
    };
    let Some(fp) = footprint.as_ref() else {
        return EvtravStatus::NullPointer;
    };
    let Some(out) = slice_out(out_masses, d.inner.num_bins()) else {
        return EvtravStatus::NullPointer;
    };
    let param = match param {
        0 => TravParam::LinearTraction,
        1 => TravParam::AngularTraction,
        2 => TravParam::Roll,
        3 => TravParam::Pitch,
        _ => return EvtravStatus::InvalidArgument,
    };
    match physics_prior_pmf(&fp.to_sample(), param, &config.to_config(), &d.inner) {
        Ok(p) => {
            out.copy_from_slice(p.masses());
            EvtravStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Loads a trained model checkpoint; returns NULL on failure.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn evtrav_model_load(path: *const c_char) -> *mut EvtravModel {
    if path.is_null() {
        return std::ptr::null_mut();
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        return std::ptr::null_mut();
    };
    match EvidentialNet::load(std::path::Path::new(path)) {
        Ok(net) => Box::into_raw(Box::new(EvtravModel { inner: net })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Frees a model handle; NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a live handle from [`evtrav_model_load`].
#[no_mangle]
pub unsafe extern "C" fn evtrav_model_free(model: *mut EvtravModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Bin count of a loaded model (0 for NULL).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evtrav_model_bins(model: *const EvtravModel) -> usize {
    match model.as_ref() {
        Some(m) => m.inner.cfg.bins,
        None => 0,
    }
}

/// Patch side length (cells) expected by a loaded model (0 for NULL).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evtrav_model_patch_cells(model: *const EvtravModel) -> usize {
    match model.as_ref() {
        Some(m) => m.inner.cfg.feature.patch_cells,
        None => 0,
    }
}

/// Full posterior forward pass for one terrain feature.
///
/// `elev_patch`, `semantic_patch` and `veg_patch` are row-major
/// `patch_cells x patch_cells` grids. Outputs: `out_expected` holds the four
/// expected PMFs back to back (`4 * bins` values, parameter-major),
/// `out_evidence` the four downscaled evidences, `out_is_ood` the calibrated
/// OOD flag.
///
/// # Safety
/// All pointers must reference buffers of the documented sizes; `model` and
/// the patches must be live for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn evtrav_model_forward(
    model: *const EvtravModel,
    elev_patch: *const f64,
    semantic_patch: *const f64,
    veg_patch: *const f64,
    patch_len: usize,
    footprint: *const EvtravFootprint,
    yaw: f64,
    out_expected: *mut f64,
    out_evidence: *mut f64,
    out_is_ood: *mut i32,
) -> EvtravStatus {
    let Some(m) = model.as_ref() else {
        return EvtravStatus::NullPointer;
    };
    let cfg = &m.inner.cfg;
    let pp = cfg.feature.patch_cells * cfg.feature.patch_cells;
    if patch_len != pp {
        return EvtravStatus::InvalidArgument;
    }
    let (Some(elev), Some(sem), Some(veg)) = (
        slice_arg(elev_patch, pp),
        slice_arg(semantic_patch, pp),
        slice_arg(veg_patch, pp),
    ) else {
        return EvtravStatus::NullPointer;
    };
    let Some(fp) = footprint.as_ref() else {
        return EvtravStatus::NullPointer;
    };
    let (Some(out_expected), Some(out_evidence)) = (
        slice_out(out_expected, 4 * cfg.bins),
        slice_out(out_evidence, 4),
    ) else {
        return EvtravStatus::NullPointer;
    };
    let Some(out_is_ood) = out_is_ood.as_mut() else {
        return EvtravStatus::NullPointer;
    };

    let n = elev.len() as f64;
    let mean = elev.iter().sum::<f64>() / n;
    let unevenness = (elev.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt();
    let feature = TerrainFeature {
        elev_patch: elev.iter().map(|e| e - mean).collect(),
        semantic_patch: sem.to_vec(),
        veg_patch: veg.to_vec(),
        footprint: fp.to_sample(),
        yaw,
        unevenness,
    };
    let pred = match m.inner.forward(&feature) {
        Ok(p) => p,
        Err(e) => return status_of(&e),
    };
    for j in 0..4 {
        out_expected[j * cfg.bins..(j + 1) * cfg.bins]
            .copy_from_slice(pred.expected[j].masses());
        out_evidence[j] = pred.evidence[j];
    }
    *out_is_ood = i32::from(pred.raw_evidence < m.inner.ood_threshold());
    EvtravStatus::Ok
}
