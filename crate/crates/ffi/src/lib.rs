//! C ABI over the richrep library.
//!
//! Every entry point returns an [`RrStatus`]; on failure the message is
//! available from [`rr_last_error`] on the same thread. Objects are opaque
//! handles released with their `_free` function. Panics never cross the
//! boundary; they come back as `RR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use richrep::cli::{run_config, ExperimentConfig, Overrides};
use richrep::experiments::vrex_objective;
use richrep::nn::{format, train, HeadKind, LossKind, Network, TrainConfig};
use richrep::probing::{fit_probe, union_cost, ProbeConfig, ProbeResult};
use richrep::{Error, Matrix, Rng};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrStatus {
    Ok = 0,
    Null = 1,
    Shape = 2,
    Parameter = 3,
    Data = 4,
    Numerical = 5,
    Diverged = 6,
    Format = 7,
    Io = 8,
    Config = 9,
    Sampling = 10,
    Panic = 11,
    Utf8 = 12,
    Buffer = 13,
}

/// Dense row-major matrix of doubles.
pub struct RrMatrix(Matrix);

pub struct RrNetwork(Network);

/// A fitted linear probe.
pub struct RrProbe(ProbeResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> RrStatus {
    match e {
        Error::Shape(_) => RrStatus::Shape,
        Error::Parameter(_) => RrStatus::Parameter,
        Error::Data(_) => RrStatus::Data,
        Error::NumericalDomain(_) => RrStatus::Numerical,
        Error::NonFiniteGradient { .. } | Error::Diverged { .. } => RrStatus::Diverged,
        Error::Episode { source, .. } => status_of(source),
        Error::Format(_) | Error::Truncated(_) => RrStatus::Format,
        Error::Sampling(_) => RrStatus::Sampling,
        Error::Config(_) => RrStatus::Config,
        Error::Io { .. } => RrStatus::Io,
    }
}

struct Fail(RrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type Res<T = ()> = std::result::Result<T, Fail>;

fn guard(f: impl FnOnce() -> Res) -> RrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RrStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RrStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(RrStatus::Null, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Res<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn string(p: *const c_char, what: &str) -> Res<String> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|e| Fail(RrStatus::Utf8, format!("{what}: {e}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Res {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Res<T> {
    serde_json::from_str(text).map_err(|e| Fail(RrStatus::Config, format!("{what}: {e}")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rr_version() -> *const c_char {
    static V: &str = concat!("v", env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

// ---- matrices ----

/// Copies `rows * cols` doubles from `data` (row-major) into a new matrix.
#[no_mangle]
pub unsafe extern "C" fn rr_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut RrMatrix,
) -> RrStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(RrStatus::Shape, "matrix size overflows".into()))?;
        let v = slice(data, n, "data")?.to_vec();
        put(out, RrMatrix(Matrix::from_vec(rows, cols, v)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rr_matrix_free(m: *mut RrMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Row count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rr_matrix_rows(m: *const RrMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

#[no_mangle]
pub unsafe extern "C" fn rr_matrix_cols(m: *const RrMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the matrix into `out`, which must hold at least `rows * cols`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn rr_matrix_copy_to(m: *const RrMatrix, out: *mut f64, len: usize) -> RrStatus {
    guard(|| {
        let m = get(m, "matrix")?;
        let src = m.0.as_slice();
        if len < src.len() {
            return Err(Fail(
                RrStatus::Buffer,
                format!("buffer holds {len} values, need {}", src.len()),
            ));
        }
        if src.is_empty() {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
        Ok(())
    })
}

// ---- networks ----

/// Fresh MLP with layer widths `sizes[0..n_sizes]` (input, hidden...,
/// classes), initialized from `seed`.
#[no_mangle]
pub unsafe extern "C" fn rr_network_mlp(
    sizes: *const usize,
    n_sizes: usize,
    cosine_head: bool,
    seed: u64,
    out: *mut *mut RrNetwork,
) -> RrStatus {
    guard(|| {
        let sizes = slice(sizes, n_sizes, "sizes")?;
        let kind = if cosine_head { HeadKind::Cosine } else { HeadKind::Linear };
        let net = Network::mlp(sizes, kind, &mut Rng::for_init(seed))?;
        put(out, RrNetwork(net))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rr_network_load(path: *const c_char, out: *mut *mut RrNetwork) -> RrStatus {
    guard(|| {
        let path = string(path, "path")?;
        put(out, RrNetwork(format::load(path)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rr_network_save(net: *const RrNetwork, path: *const c_char) -> RrStatus {
    guard(|| {
        let net = get(net, "network")?;
        format::save(&net.0, string(path, "path")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rr_network_free(net: *mut RrNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rr_network_input_dim(net: *const RrNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.input_dim())
}

#[no_mangle]
pub unsafe extern "C" fn rr_network_feature_dim(net: *const RrNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.feature_dim())
}

#[no_mangle]
pub unsafe extern "C" fn rr_network_n_classes(net: *const RrNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.n_classes())
}

/// Penultimate-layer representation of `x`.
#[no_mangle]
pub unsafe extern "C" fn rr_network_features(
    net: *const RrNetwork,
    x: *const RrMatrix,
    out: *mut *mut RrMatrix,
) -> RrStatus {
    guard(|| {
        let f = get(net, "network")?.0.features(&get(x, "x")?.0)?;
        put(out, RrMatrix(f))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rr_network_logits(
    net: *const RrNetwork,
    x: *const RrMatrix,
    out: *mut *mut RrMatrix,
) -> RrStatus {
    guard(|| {
        let z = get(net, "network")?.0.logits(&get(x, "x")?.0)?;
        put(out, RrMatrix(z))
    })
}

/// Trains with cross-entropy in place. `config_json` is a training config
/// object; the last epoch's mean loss goes to `final_loss` when non-null.
#[no_mangle]
pub unsafe extern "C" fn rr_network_train(
    net: *mut RrNetwork,
    x: *const RrMatrix,
    labels: *const usize,
    n_labels: usize,
    config_json: *const c_char,
    final_loss: *mut f64,
) -> RrStatus {
    guard(|| {
        let net = net.as_mut().ok_or_else(|| null("network"))?;
        let x = get(x, "x")?;
        let labels = slice(labels, n_labels, "labels")?;
        let cfg: TrainConfig = json(&string(config_json, "config_json")?, "training config")?;
        let history = train(&mut net.0, &x.0, labels, LossKind::CrossEntropy, &cfg)?;
        if let (Some(out), Some(&l)) = (final_loss.as_mut(), history.last()) {
            *out = l;
        }
        Ok(())
    })
}

/// Column concatenation of the members' representations of `x`, in the
/// order given.
#[no_mangle]
pub unsafe extern "C" fn rr_cat_features(
    nets: *const *const RrNetwork,
    n_nets: usize,
    x: *const RrMatrix,
    out: *mut *mut RrMatrix,
) -> RrStatus {
    guard(|| {
        if n_nets == 0 {
            return Err(Fail(RrStatus::Parameter, "need at least one network".into()));
        }
        let x = get(x, "x")?;
        let blocks = slice(nets, n_nets, "nets")?
            .iter()
            .map(|&p| Ok(get(p, "network")?.0.features(&x.0)?))
            .collect::<Res<Vec<_>>>()?;
        let refs: Vec<&Matrix> = blocks.iter().collect();
        put(out, RrMatrix(Matrix::hcat(&refs)?))
    })
}

// ---- probes ----

unsafe fn probe_config(p: *const c_char) -> Res<ProbeConfig> {
    if p.is_null() {
        return Ok(ProbeConfig::default());
    }
    json(&string(p, "probe config")?, "probe config")
}

/// Fits an L2-regularized linear probe. A null `config_json` uses the
/// defaults; `seed` fixes the starting point.
#[no_mangle]
pub unsafe extern "C" fn rr_probe_fit(
    features: *const RrMatrix,
    labels: *const usize,
    n_labels: usize,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut RrProbe,
) -> RrStatus {
    guard(|| {
        let f = get(features, "features")?;
        let labels = slice(labels, n_labels, "labels")?;
        let cfg = probe_config(config_json)?;
        put(out, RrProbe(fit_probe(&f.0, labels, &cfg, &mut Rng::new(seed))?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rr_probe_free(p: *mut RrProbe) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Regularized training objective at the fitted point, NaN for null.
#[no_mangle]
pub unsafe extern "C" fn rr_probe_cost(p: *const RrProbe) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.0.cost)
}

#[no_mangle]
pub unsafe extern "C" fn rr_probe_converged(p: *const RrProbe) -> bool {
    p.as_ref().is_some_and(|p| p.0.converged)
}

/// Writes one predicted class per row of `x` into `out`.
#[no_mangle]
pub unsafe extern "C" fn rr_probe_predict(
    p: *const RrProbe,
    x: *const RrMatrix,
    out: *mut usize,
    len: usize,
) -> RrStatus {
    guard(|| {
        let pred = get(p, "probe")?.0.predict(&get(x, "x")?.0)?;
        if len < pred.len() {
            return Err(Fail(
                RrStatus::Buffer,
                format!("buffer holds {len} labels, need {}", pred.len()),
            ));
        }
        if !pred.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            std::ptr::copy_nonoverlapping(pred.as_ptr(), out, pred.len());
        }
        Ok(())
    })
}

/// Optimal probe costs of `phi1`, `phi2` and their concatenation, written
/// to `out[0..3]` in that order.
#[no_mangle]
pub unsafe extern "C" fn rr_union_cost(
    phi1: *const RrMatrix,
    phi2: *const RrMatrix,
    labels: *const usize,
    n_labels: usize,
    config_json: *const c_char,
    out: *mut f64,
) -> RrStatus {
    guard(|| {
        let a = get(phi1, "phi1")?;
        let b = get(phi2, "phi2")?;
        let labels = slice(labels, n_labels, "labels")?;
        let cfg = probe_config(config_json)?;
        let (c1, c2, cu) = union_cost(&a.0, &b.0, labels, &cfg)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping([c1, c2, cu].as_ptr(), out, 3);
        Ok(())
    })
}

/// Mean risk plus `beta` times the population variance of the risks.
#[no_mangle]
pub unsafe extern "C" fn rr_vrex_objective(
    risks: *const f64,
    n: usize,
    beta: f64,
    out: *mut f64,
) -> RrStatus {
    guard(|| {
        let risks = slice(risks, n, "risks")?;
        if risks.is_empty() {
            return Err(Fail(RrStatus::Parameter, "need at least one risk".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Fail(RrStatus::Parameter, format!("beta must be nonnegative, got {beta}")));
        }
        *out.as_mut().ok_or_else(|| null("out"))? = vrex_objective(risks, beta);
        Ok(())
    })
}

// ---- pipelines ----

/// Runs an experiment config given as JSON text. A non-null `out_dir`
/// overrides the config's output directory.
#[no_mangle]
pub unsafe extern "C" fn rr_run_config_json(config_json: *const c_char, out_dir: *const c_char) -> RrStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(&string(config_json, "config_json")?)?;
        let out = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(string(out_dir, "out_dir")?))
        };
        let ov = Overrides {
            out,
            ..Default::default()
        };
        run_config(cfg, &ov)?;
        Ok(())
    })
}
