//! C ABI over `memcam`.
//!
//! Every fallible call returns a `MemcamStatus`; results come back through
//! out-pointers. Handles are opaque and owned by the caller once created;
//! release them with the matching `*_free`. The text of the most recent
//! error on the calling thread is available from `memcam_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use memcam::cam::{CamError, CamMode, CamPartition, Entry, EntryMatch};
use memcam::crossbar::{CrossbarArray, ExecStats};
use memcam::index::{HybridIndex, HybridIndexConfig, IndexError};
use memcam::model::{self, ModelError, ModelParams, Structure};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemcamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Duplicate = 3,
    NotFound = 4,
    RangeUnsupported = 5,
    KeyTooWide = 6,
    CapacityExceeded = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemcamCamMode {
    Cam = 0,
    Tcam = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemcamMatch {
    /// Stored word below the key.
    Less = 0,
    Greater = 1,
    Equal = 2,
    /// Unequal, order unknown (CAM mode).
    Differs = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemcamStructure {
    CmosTTree = 0,
    MemTTree = 1,
    TbTree = 2,
    HashCam = 3,
    TTreeCam = 4,
    TbTreeCam = 5,
    MemCam = 6,
}

/// Cost of one operation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MemcamStats {
    pub step_count: u64,
    pub elapsed_ns: f64,
    pub energy_fj: f64,
    pub external_reads: u64,
    pub external_writes: u64,
}

impl From<ExecStats> for MemcamStats {
    fn from(s: ExecStats) -> Self {
        Self {
            step_count: s.step_count,
            elapsed_ns: s.elapsed_ns,
            energy_fj: s.energy_fj,
            external_reads: s.external_reads,
            external_writes: s.external_writes,
        }
    }
}

/// A hybrid index.
pub struct MemcamIndex {
    inner: HybridIndex,
}

/// A single CAM/TCAM partition with its own array.
pub struct MemcamCam {
    part: CamPartition,
    array: CrossbarArray,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: MemcamStatus, msg: impl Into<String>) -> MemcamStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn index_status(e: IndexError) -> MemcamStatus {
    let s = match e {
        IndexError::Cam(c) => return cam_status(c),
        IndexError::Config(_) | IndexError::BadRange { .. } => MemcamStatus::InvalidArgument,
        IndexError::Duplicate(_) => MemcamStatus::Duplicate,
        IndexError::Missing(_) => MemcamStatus::NotFound,
        IndexError::RangeUnsupported => MemcamStatus::RangeUnsupported,
        IndexError::KeyTooWide { .. } => MemcamStatus::KeyTooWide,
    };
    fail(s, e.to_string())
}

fn cam_status(e: CamError) -> MemcamStatus {
    let s = match &e {
        CamError::KeyTooWide { .. } => MemcamStatus::KeyTooWide,
        CamError::CapacityExceeded { .. } => MemcamStatus::CapacityExceeded,
        CamError::NoSuchEntry { .. } => MemcamStatus::NotFound,
        CamError::BadKeyBits(_) | CamError::TernaryInCam | CamError::Region(_) => MemcamStatus::InvalidArgument,
        CamError::Crossbar(_) => MemcamStatus::Internal,
    };
    fail(s, e.to_string())
}

fn model_status(e: ModelError) -> MemcamStatus {
    fail(MemcamStatus::InvalidArgument, e.to_string())
}

/// Run `f`, turning a panic into `Internal`.
fn guard(f: impl FnOnce() -> MemcamStatus) -> MemcamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(MemcamStatus::Internal, msg)
        }
    }
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(MemcamStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Parse an optional NUL-terminated TOML document into `T`.
unsafe fn parse_toml<T: serde::de::DeserializeOwned + Default>(text: *const c_char) -> Result<T, MemcamStatus> {
    if text.is_null() {
        return Ok(T::default());
    }
    let s = CStr::from_ptr(text)
        .to_str()
        .map_err(|_| fail(MemcamStatus::InvalidArgument, "config is not UTF-8"))?;
    toml::from_str(s).map_err(|e| fail(MemcamStatus::InvalidArgument, format!("config: {}", e.message())))
}

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn memcam_status_str(status: MemcamStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        MemcamStatus::Ok => b"ok\0",
        MemcamStatus::NullPointer => b"null pointer\0",
        MemcamStatus::InvalidArgument => b"invalid argument\0",
        MemcamStatus::Duplicate => b"duplicate key\0",
        MemcamStatus::NotFound => b"not found\0",
        MemcamStatus::RangeUnsupported => b"range query not supported\0",
        MemcamStatus::KeyTooWide => b"key too wide\0",
        MemcamStatus::CapacityExceeded => b"capacity exceeded\0",
        MemcamStatus::BufferTooSmall => b"buffer too small\0",
        MemcamStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the buffer size the full message needs.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn memcam_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Build an index over `n` records. `config_toml` holds index settings in
/// the CLI's `[index]` format without the table header (null for defaults).
/// Keys must be strictly unique; order does not matter.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string. `keys` and `refs`
/// must be valid for `n` reads (either may be null when `n` is 0). `out`
/// must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_build(
    config_toml: *const c_char,
    keys: *const u64,
    refs: *const u64,
    n: usize,
    out: *mut *mut MemcamIndex,
) -> MemcamStatus {
    guard(|| {
        nonnull!(out);
        if n > 0 {
            nonnull!(keys, refs);
        }
        let cfg: HybridIndexConfig = match parse_toml(config_toml) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let mut recs: Vec<(u64, u64)> = if n == 0 {
            Vec::new()
        } else {
            let (k, r) = (std::slice::from_raw_parts(keys, n), std::slice::from_raw_parts(refs, n));
            k.iter().copied().zip(r.iter().copied()).collect()
        };
        recs.sort_unstable_by_key(|r| r.0);
        match HybridIndex::build(cfg, &recs) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MemcamIndex { inner }));
                MemcamStatus::Ok
            }
            Err(e) => index_status(e),
        }
    })
}

/// # Safety
/// `ix` must be null or a handle from `memcam_index_build` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_free(ix: *mut MemcamIndex) {
    if !ix.is_null() {
        drop(Box::from_raw(ix));
    }
}

/// # Safety
/// `ix` must be a live handle; `out_len` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_len(ix: *const MemcamIndex, out_len: *mut usize) -> MemcamStatus {
    nonnull!(ix, out_len);
    *out_len = (*ix).inner.len();
    MemcamStatus::Ok
}

/// # Safety
/// `ix` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_insert(ix: *mut MemcamIndex, key: u64, value: u64) -> MemcamStatus {
    nonnull!(ix);
    guard(|| match (*ix).inner.insert(key, value) {
        Ok(()) => MemcamStatus::Ok,
        Err(e) => index_status(e),
    })
}

/// Remove `key`. The removed value goes to `out_value` unless it is null.
///
/// # Safety
/// `ix` must be a live handle not used concurrently; `out_value` null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_delete(ix: *mut MemcamIndex, key: u64, out_value: *mut u64) -> MemcamStatus {
    nonnull!(ix);
    guard(|| match (*ix).inner.delete(key) {
        Ok(v) => {
            if !out_value.is_null() {
                *out_value = v;
            }
            MemcamStatus::Ok
        }
        Err(e) => index_status(e),
    })
}

/// Point query. A missing key is not an error: `*out_found` is set to false.
///
/// # Safety
/// `ix` must be a live handle not used concurrently; both out-pointers
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_get(ix: *mut MemcamIndex, key: u64, out_value: *mut u64, out_found: *mut bool) -> MemcamStatus {
    nonnull!(ix, out_value, out_found);
    guard(|| match (*ix).inner.point_query(key) {
        Ok(v) => {
            *out_found = v.is_some();
            *out_value = v.unwrap_or(0);
            MemcamStatus::Ok
        }
        Err(e) => index_status(e),
    })
}

/// Records with keys in `[lo, hi]`, ascending. `*out_len` receives the match
/// count; if it exceeds `cap`, nothing is copied and `BufferTooSmall` is
/// returned so the caller can retry with a larger buffer.
///
/// # Safety
/// `ix` must be a live handle not used concurrently; `keys_out` and
/// `values_out` valid for `cap` writes (null allowed when `cap` is 0);
/// `out_len` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_range(
    ix: *mut MemcamIndex,
    lo: u64,
    hi: u64,
    keys_out: *mut u64,
    values_out: *mut u64,
    cap: usize,
    out_len: *mut usize,
) -> MemcamStatus {
    nonnull!(ix, out_len);
    if cap > 0 {
        nonnull!(keys_out, values_out);
    }
    guard(|| match (*ix).inner.range_query(lo, hi) {
        Ok(recs) => {
            *out_len = recs.len();
            if recs.len() > cap {
                return fail(MemcamStatus::BufferTooSmall, format!("{} records, buffer holds {cap}", recs.len()));
            }
            for (i, (k, v)) in recs.into_iter().enumerate() {
                *keys_out.add(i) = k;
                *values_out.add(i) = v;
            }
            MemcamStatus::Ok
        }
        Err(e) => index_status(e),
    })
}

/// Move every partition to the next physical slot (wear leveling).
///
/// # Safety
/// `ix` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_rotate(ix: *mut MemcamIndex) -> MemcamStatus {
    nonnull!(ix);
    guard(|| match (*ix).inner.rotate_partitions() {
        Ok(()) => MemcamStatus::Ok,
        Err(e) => index_status(e),
    })
}

/// Cost of the most recent operation.
///
/// # Safety
/// `ix` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_last_stats(ix: *const MemcamIndex, out: *mut MemcamStats) -> MemcamStatus {
    nonnull!(ix, out);
    *out = (*ix).inner.last_stats().into();
    MemcamStatus::Ok
}

/// Busiest-cell write count and the lifetime it projects at `query_rate`
/// searches per second.
///
/// # Safety
/// `ix` must be a live handle; out-pointers valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_index_wear(
    ix: *const MemcamIndex,
    query_rate: f64,
    out_max_writes: *mut u64,
    out_lifetime_s: *mut f64,
) -> MemcamStatus {
    nonnull!(ix, out_max_writes, out_lifetime_s);
    if !(query_rate > 0.0 && query_rate.is_finite()) {
        return fail(MemcamStatus::InvalidArgument, format!("query rate must be positive, got {query_rate}"));
    }
    let w = (*ix).inner.wear_report(query_rate);
    *out_max_writes = w.max_write_count;
    *out_lifetime_s = w.projected_lifetime_s;
    MemcamStatus::Ok
}

fn mode_of(m: MemcamCamMode) -> CamMode {
    match m {
        MemcamCamMode::Cam => CamMode::Cam,
        MemcamCamMode::Tcam => CamMode::Tcam,
    }
}

/// A partition of `capacity` words of `key_bits` bits (a power of two in
/// 2..=1024; words above 64 bits are zero-extended).
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_cam_new(mode: MemcamCamMode, key_bits: u32, capacity: usize, out: *mut *mut MemcamCam) -> MemcamStatus {
    nonnull!(out);
    guard(|| match CamPartition::new(mode_of(mode), key_bits, capacity) {
        Ok(part) => {
            let array = part.new_array();
            *out = Box::into_raw(Box::new(MemcamCam { part, array }));
            MemcamStatus::Ok
        }
        Err(e) => cam_status(e),
    })
}

/// # Safety
/// `cam` must be null or a handle from `memcam_cam_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn memcam_cam_free(cam: *mut MemcamCam) {
    if !cam.is_null() {
        drop(Box::from_raw(cam));
    }
}

/// Append a word. Bits set in `dont_care` match any key bit (TCAM only).
/// `*out_index` receives the entry index unless it is null.
///
/// # Safety
/// `cam` must be a live handle not used concurrently; `out_index` null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_cam_store(cam: *mut MemcamCam, value: u64, dont_care: u64, out_index: *mut usize) -> MemcamStatus {
    nonnull!(cam);
    let c = &mut *cam;
    guard(|| {
        let index = c.part.len;
        match c.part.write_entry(&mut c.array, index, &Entry { value: value & !dont_care, dont_care }) {
            Ok(_) => {
                if !out_index.is_null() {
                    *out_index = index;
                }
                MemcamStatus::Ok
            }
            Err(e) => cam_status(e),
        }
    })
}

/// Search every stored word. `*out_len` receives the entry count; matches
/// are copied only if it fits in `cap`, otherwise `BufferTooSmall`.
/// `out_stats` may be null.
///
/// # Safety
/// `cam` must be a live handle not used concurrently; `out` valid for `cap`
/// writes (null allowed when `cap` is 0); `out_len` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_cam_search(
    cam: *mut MemcamCam,
    key: u64,
    out: *mut MemcamMatch,
    cap: usize,
    out_len: *mut usize,
    out_stats: *mut MemcamStats,
) -> MemcamStatus {
    nonnull!(cam, out_len);
    if cap > 0 {
        nonnull!(out);
    }
    let c = &mut *cam;
    if c.part.len > cap {
        *out_len = c.part.len;
        return fail(MemcamStatus::BufferTooSmall, format!("{} entries, buffer holds {cap}", c.part.len));
    }
    guard(|| match c.part.search(&mut c.array, key) {
        Ok((m, st)) => {
            *out_len = m.len();
            for (i, e) in m.into_iter().enumerate() {
                *out.add(i) = match e {
                    EntryMatch::Less => MemcamMatch::Less,
                    EntryMatch::Greater => MemcamMatch::Greater,
                    EntryMatch::Equal => MemcamMatch::Equal,
                    EntryMatch::Differs => MemcamMatch::Differs,
                };
            }
            if !out_stats.is_null() {
                *out_stats = st.into();
            }
            MemcamStatus::Ok
        }
        Err(e) => cam_status(e),
    })
}

/// Largest write count of any cell in the partition's array.
///
/// # Safety
/// `cam` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_cam_max_writes(cam: *const MemcamCam, out: *mut u64) -> MemcamStatus {
    nonnull!(cam, out);
    *out = (*cam).array.max_write_count();
    MemcamStatus::Ok
}

/// Internal search latency in ns for `key_bits`-bit words.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_cam_latency_ns(mode: MemcamCamMode, key_bits: u32, out: *mut f64) -> MemcamStatus {
    nonnull!(out);
    match model::cam_latency(key_bits, mode_of(mode)) {
        Ok(v) => {
            *out = v;
            MemcamStatus::Ok
        }
        Err(e) => model_status(e),
    }
}

/// Search energy in fJ per stored bit.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn memcam_cam_energy_fj_per_bit(mode: MemcamCamMode, key_bits: u32, out: *mut f64) -> MemcamStatus {
    nonnull!(out);
    match model::cam_energy(key_bits, mode_of(mode)) {
        Ok(v) => {
            *out = v;
            MemcamStatus::Ok
        }
        Err(e) => model_status(e),
    }
}

fn structure_of(s: MemcamStructure) -> Structure {
    match s {
        MemcamStructure::CmosTTree => Structure::CmosTTree,
        MemcamStructure::MemTTree => Structure::MemTTree,
        MemcamStructure::TbTree => Structure::TbTree,
        MemcamStructure::HashCam => Structure::HashCam,
        MemcamStructure::TTreeCam => Structure::TTreeCam,
        MemcamStructure::TbTreeCam => Structure::TbTreeCam,
        MemcamStructure::MemCam => Structure::MemCam,
    }
}

/// Modeled average search time (ns) and lifetime (years) of a structure.
/// `params_toml` holds model parameters in the CLI's `[model]` format
/// without the table header (null for defaults).
///
/// # Safety
/// `params_toml` must be null or NUL-terminated; out-pointers valid for one
/// write each (`out_lifetime_years` may be null).
#[no_mangle]
pub unsafe extern "C" fn memcam_model_eval(
    params_toml: *const c_char,
    structure: MemcamStructure,
    out_avg_ns: *mut f64,
    out_lifetime_years: *mut f64,
) -> MemcamStatus {
    nonnull!(out_avg_ns);
    guard(|| {
        let p: ModelParams = match parse_toml(params_toml) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let s = structure_of(structure);
        match model::avg_search_time(&p, s) {
            Ok(t) => *out_avg_ns = t,
            Err(e) => return model_status(e),
        }
        if !out_lifetime_years.is_null() {
            match model::lifetime(&p, s) {
                Ok(l) => *out_lifetime_years = l,
                Err(e) => return model_status(e),
            }
        }
        MemcamStatus::Ok
    })
}
