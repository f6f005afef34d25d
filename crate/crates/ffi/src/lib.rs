//! C ABI over the mixpath library.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `mx_*_new`/`mx_*_load`-style constructor and released by the matching
//! `mx_*_free`. Every fallible function returns an [`MxStatus`]; on failure
//! `mx_last_error()` describes the problem. Panics are caught at the
//! boundary and reported as [`MxStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mixpath::config::RunConfig;
use mixpath::cost::arch_cost;
use mixpath::data::{synthetic_splits, Dataset, Splits};
use mixpath::oracle::BenchTable;
use mixpath::ranking::{evaluate_oneshot, kendall_tau};
use mixpath::search::{run_nsga2, BenchEvaluator};
use mixpath::space::ArchMask;
use mixpath::supernet::{train_supernet, Supernet};
use mixpath::tensor::Tensor;
use mixpath::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    FingerprintMismatch = 6,
    OracleTooSmall = 7,
    Infeasible = 8,
    Panic = 9,
}

/// Which split of an [`MxSplits`] to use.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MxSplit {
    Train = 0,
    Val = 1,
    Test = 2,
}

/// A validated run configuration.
pub struct MxConfig(RunConfig);
/// Train, validation and test datasets.
pub struct MxSplits(Splits);
/// A trained (or loaded) supernet.
pub struct MxSupernet(Supernet);
/// A ground-truth accuracy table.
pub struct MxBench(BenchTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MxStatus {
    match e {
        Error::Io(_) => MxStatus::Io,
        Error::Format(_) | Error::Json(_) => MxStatus::Format,
        Error::NonFinite(_) | Error::Undefined(_) | Error::Shape { .. } => MxStatus::Numeric,
        Error::Fingerprint { .. } => MxStatus::FingerprintMismatch,
        Error::OracleTooSmall { .. } => MxStatus::OracleTooSmall,
        Error::Infeasible(_) => MxStatus::Infeasible,
        Error::Parameter(_) | Error::Mask(_) | Error::Empty(_) => MxStatus::InvalidArgument,
    }
}

/// Failure inside a boundary function: a status plus its message.
struct Fail(MxStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MxStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MxStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MxStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MxStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_mask(mask: *const u32, len: usize) -> Result<ArchMask, Fail> {
    if mask.is_null() {
        return Err(null("mask"));
    }
    Ok(ArchMask(std::slice::from_raw_parts(mask, len).to_vec()))
}

fn give<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn give_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(MxStatus::Format, "string contains NUL".into()))
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in micro experiment configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mx_config_micro(out: *mut *mut MxConfig) -> MxStatus {
    guard(|| {
        *out_ptr(out, "out")? = give(MxConfig(RunConfig::micro()));
        Ok(())
    })
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mx_config_from_json(json: *const c_char, out: *mut *mut MxConfig) -> MxStatus {
    guard(|| {
        let cfg = RunConfig::from_json(read_str(json, "json")?)?;
        *out_ptr(out, "out")? = give(MxConfig(cfg));
        Ok(())
    })
}

/// Serializes a configuration; free the result with `mx_string_free`.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mx_config_to_json(cfg: *const MxConfig, out: *mut *mut c_char) -> MxStatus {
    guard(|| {
        let json = borrow(cfg, "cfg")?.0.to_json();
        *out_ptr(out, "out")? = give_string(json)?;
        Ok(())
    })
}

/// The 16-hex-digit content hash naming the run directory.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mx_config_hash(cfg: *const MxConfig, out: *mut *mut c_char) -> MxStatus {
    guard(|| {
        let h = borrow(cfg, "cfg")?.0.hash();
        *out_ptr(out, "out")? = give_string(h)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mx_config_free(cfg: *mut MxConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Multiply-adds and parameter count of `mask` in the configured space.
///
/// # Safety
/// `mask` must point to `len` integers; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mx_arch_cost(
    cfg: *const MxConfig,
    mask: *const u32,
    len: usize,
    flops: *mut u64,
    params: *mut u64,
) -> MxStatus {
    guard(|| {
        let c = arch_cost(&borrow(cfg, "cfg")?.0.space, &read_mask(mask, len)?)?;
        *out_ptr(flops, "flops")? = c.flops;
        *out_ptr(params, "params")? = c.params;
        Ok(())
    })
}

/// Kendall tau-b between two score lists of length `n`.
///
/// # Safety
/// `a` and `b` must each point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mx_kendall_tau(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> MxStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("score list"));
        }
        let (a, b) = (std::slice::from_raw_parts(a, n), std::slice::from_raw_parts(b, n));
        *out_ptr(out, "out")? = kendall_tau(a, b)?;
        Ok(())
    })
}

/// Generates the synthetic splits the configuration describes.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mx_data_generate(cfg: *const MxConfig, out: *mut *mut MxSplits) -> MxStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        let splits = synthetic_splits(&cfg.data, cfg.seed)?;
        *out_ptr(out, "out")? = give(MxSplits(splits));
        Ok(())
    })
}

/// Number of samples in one split.
///
/// # Safety
/// `data` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mx_data_len(data: *const MxSplits, split: MxSplit, out: *mut usize) -> MxStatus {
    guard(|| {
        *out_ptr(out, "out")? = pick(&borrow(data, "data")?.0, split).len();
        Ok(())
    })
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mx_data_free(data: *mut MxSplits) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

fn pick(s: &Splits, split: MxSplit) -> &Dataset {
    match split {
        MxSplit::Train => &s.train,
        MxSplit::Val => &s.val,
        MxSplit::Test => &s.test,
    }
}

/// Trains a supernet on the training split with the configured settings.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mx_supernet_train(
    cfg: *const MxConfig,
    data: *const MxSplits,
    out: *mut *mut MxSupernet,
) -> MxStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        let data = &borrow(data, "data")?.0;
        let (net, _) = train_supernet(&cfg.space, &data.train, &cfg.supernet, cfg.seed)?;
        *out_ptr(out, "out")? = give(MxSupernet(net));
        Ok(())
    })
}

/// Writes a checkpoint stamped with the configuration hash.
///
/// # Safety
/// Handles must be live; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mx_supernet_save(
    net: *const MxSupernet,
    cfg: *const MxConfig,
    path: *const c_char,
) -> MxStatus {
    guard(|| {
        let net = &borrow(net, "net")?.0;
        let hash = borrow(cfg, "cfg")?.0.hash();
        let file = File::create(read_str(path, "path")?).map_err(Error::from)?;
        net.save(BufWriter::new(file), &hash)?;
        Ok(())
    })
}

/// Loads a checkpoint, refusing one written under a different configuration.
///
/// # Safety
/// `cfg` must be live; `path` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mx_supernet_load(
    cfg: *const MxConfig,
    path: *const c_char,
    out: *mut *mut MxSupernet,
) -> MxStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        let file = File::open(read_str(path, "path")?).map_err(Error::from)?;
        let (net, fp) = Supernet::load(BufReader::new(file), &cfg.space)?;
        let expected = cfg.hash();
        if fp != expected {
            return Err(Error::Fingerprint { expected, found: fp }.into());
        }
        *out_ptr(out, "out")? = give(MxSupernet(net));
        Ok(())
    })
}

/// One-shot accuracy of `mask` on a split. With `calibration_batches > 0`
/// the batch-norm statistics are first recomputed from that many leading
/// training batches of `calibration_batch_size`.
///
/// # Safety
/// Handles must be live; `mask` must point to `len` integers; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mx_supernet_accuracy(
    net: *const MxSupernet,
    data: *const MxSplits,
    split: MxSplit,
    mask: *const u32,
    len: usize,
    calibration_batches: usize,
    calibration_batch_size: usize,
    out: *mut f64,
) -> MxStatus {
    guard(|| {
        let net = &borrow(net, "net")?.0;
        let data = &borrow(data, "data")?.0;
        let mask = read_mask(mask, len)?;
        let calib: Vec<Tensor> = if calibration_batches > 0 {
            data.train
                .sequential_batches(calibration_batch_size)?
                .into_iter()
                .take(calibration_batches)
                .map(|(x, _)| x)
                .collect()
        } else {
            Vec::new()
        };
        let calib = (calibration_batches > 0).then_some(&calib[..]);
        *out_ptr(out, "out")? = evaluate_oneshot(net, &mask, pick(data, split), calib)?;
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mx_supernet_free(net: *mut MxSupernet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Reads a JSON-lines ground-truth table.
///
/// # Safety
/// `path` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mx_bench_read(path: *const c_char, out: *mut *mut MxBench) -> MxStatus {
    guard(|| {
        let file = File::open(read_str(path, "path")?).map_err(Error::from)?;
        let table = BenchTable::read_jsonl(BufReader::new(file))?;
        *out_ptr(out, "out")? = give(MxBench(table));
        Ok(())
    })
}

/// Number of rows in the table.
///
/// # Safety
/// `bench` must be live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mx_bench_len(bench: *const MxBench, out: *mut usize) -> MxStatus {
    guard(|| {
        *out_ptr(out, "out")? = borrow(bench, "bench")?.0.len();
        Ok(())
    })
}

/// Row `index`: the mask is copied into `mask_out` (capacity `mask_cap`,
/// actual length in `mask_len`) together with accuracy and flops.
///
/// # Safety
/// `bench` must be live; `mask_out` must hold `mask_cap` integers; the
/// other outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn mx_bench_row(
    bench: *const MxBench,
    index: usize,
    mask_out: *mut u32,
    mask_cap: usize,
    mask_len: *mut usize,
    acc: *mut f64,
    flops: *mut u64,
) -> MxStatus {
    guard(|| {
        let table = &borrow(bench, "bench")?.0;
        let row = table.records.get(index).ok_or_else(|| {
            Fail(
                MxStatus::InvalidArgument,
                format!("row {index} out of range for {} rows", table.len()),
            )
        })?;
        let layers = row.mask.layers();
        *out_ptr(mask_len, "mask_len")? = layers.len();
        if layers.len() > mask_cap {
            return Err(Fail(
                MxStatus::InvalidArgument,
                format!("mask needs {} slots, buffer holds {mask_cap}", layers.len()),
            ));
        }
        if mask_out.is_null() {
            return Err(null("mask_out"));
        }
        std::slice::from_raw_parts_mut(mask_out, layers.len()).copy_from_slice(layers);
        *out_ptr(acc, "acc")? = row.acc;
        *out_ptr(flops, "flops")? = row.flops;
        Ok(())
    })
}

/// Runs the evolutionary search against the table and returns the result
/// (front, picks, evaluation count) as a JSON string; free it with
/// `mx_string_free`.
///
/// # Safety
/// Handles must be live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mx_search_bench(
    cfg: *const MxConfig,
    bench: *const MxBench,
    out: *mut *mut c_char,
) -> MxStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        let table = &borrow(bench, "bench")?.0;
        let result = run_nsga2(&cfg.search, &BenchEvaluator::new(&cfg.space, table), cfg.seed)?;
        let json = serde_json::json!({
            "front": result.front,
            "picks": result.picks,
            "unique_evaluations": result.evaluated.len(),
            "generations_run": result.generations_run,
        });
        *out_ptr(out, "out")? = give_string(json.to_string())?;
        Ok(())
    })
}

/// # Safety
/// `bench` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mx_bench_free(bench: *mut MxBench) {
    if !bench.is_null() {
        drop(Box::from_raw(bench));
    }
}
