//! C ABI for zsml.
//!
//! Every function returns a [`ZsmlStatus`]. On failure the message is kept
//! per thread and read with [`zsml_last_error_message`]. Objects are opaque
//! handles released with their `_free` function. Matrices are row-major
//! `double` buffers; label matrices are row-major `uint8_t` buffers.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the documented number of
//! elements, strings must be NUL-terminated, and handles must come from this
//! library and not be used after being freed. Null pointers are reported as
//! [`ZsmlStatus::NullPointer`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::DMatrix;
use zsml::metrics::EvalReport;
use zsml::regression::{
    train_independent, train_joint, FeatureMatrix, Optimizer, RegressionModel, TargetMatrix,
    TrainConfig,
};
use zsml::wordspace::{build_power_set, load_embeddings, Distance, EmbeddingTable, PrototypeSet};
use zsml::zsl::{
    build_knn_graph, dmp_predict, exdap_predict, self_train_prototypes, tramp_predict,
    PrototypeNeighbors, SigmaConvention, ZslOptions,
};
use zsml::ZsmlError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsmlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    MissingLabel = 4,
    Shape = 5,
    Validation = 6,
    Domain = 7,
    PowerSetCap = 8,
    Divergence = 9,
    Singular = 10,
    Io = 11,
    Panic = 12,
}

impl From<&ZsmlError> for ZsmlStatus {
    fn from(e: &ZsmlError) -> Self {
        match e {
            ZsmlError::Parse { .. } | ZsmlError::Json { .. } => ZsmlStatus::Parse,
            ZsmlError::MissingLabel(_) => ZsmlStatus::MissingLabel,
            ZsmlError::Shape(_) => ZsmlStatus::Shape,
            ZsmlError::Validation(_) => ZsmlStatus::Validation,
            ZsmlError::Domain(_) => ZsmlStatus::Domain,
            ZsmlError::PowerSetCap { .. } => ZsmlStatus::PowerSetCap,
            ZsmlError::Divergence { .. } => ZsmlStatus::Divergence,
            ZsmlError::Singular(_) => ZsmlStatus::Singular,
            ZsmlError::Io { .. } => ZsmlStatus::Io,
            ZsmlError::Usage(_) => ZsmlStatus::InvalidArgument,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsmlMethod {
    Exdap = 0,
    Dmp = 1,
    Tramp = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsmlRegressorKind {
    Joint = 0,
    Independent = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsmlTrainOptions {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight penalty; the ridge penalty for the independent regressor.
    pub l2_penalty: f64,
    /// 0 for Adam, 1 for plain gradient descent.
    pub use_sgd: u8,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsmlPredictOptions {
    pub k_graph: usize,
    pub threshold: f64,
    /// 0 for cosine, 1 for Euclidean distance.
    pub euclidean: u8,
    /// 0 for sigma^2 = median squared distance, 1 for sigma = median distance.
    pub literal_sigma: u8,
    /// 0 lets prototypes link to any node, 1 only to test nodes.
    pub prototypes_link_test_only: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZsmlMetrics {
    pub hamming_loss: f64,
    pub micro_f1: f64,
    pub ranking_loss: f64,
    pub average_precision: f64,
    pub ranking_skipped: usize,
}

/// Label embeddings restricted to a vocabulary.
pub struct ZsmlEmbeddings {
    table: EmbeddingTable,
    vocabulary: Vec<String>,
}

/// Power-set prototypes of a target vocabulary, with the raw label embeddings.
pub struct ZsmlPrototypes {
    set: PrototypeSet,
    label_embeddings: DMatrix<f64>,
}

pub struct ZsmlModel {
    model: RegressionModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (ZsmlStatus, String)>) -> ZsmlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ZsmlStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ZsmlStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (ZsmlStatus, String)>;

fn core<T>(r: zsml::Result<T>) -> FfiResult<T> {
    r.map_err(|e| ((&e).into(), e.to_string()))
}

fn null(what: &str) -> (ZsmlStatus, String) {
    (ZsmlStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> (ZsmlStatus, String) {
    (ZsmlStatus::InvalidArgument, message.into())
}

unsafe fn str_arg(p: *const c_char, what: &str) -> FfiResult<String> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn strings_arg(p: *const *const c_char, n: usize, what: &str) -> FfiResult<Vec<String>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(null(what));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .map(|&s| str_arg(s, what))
        .collect()
}

unsafe fn matrix_arg(p: *const f64, rows: usize, cols: usize, what: &str) -> FfiResult<DMatrix<f64>> {
    if p.is_null() {
        return Err(null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid(format!("{what} size overflows")))?;
    Ok(DMatrix::from_row_slice(rows, cols, std::slice::from_raw_parts(p, len)))
}

unsafe fn u8_matrix_arg(p: *const u8, rows: usize, cols: usize, what: &str) -> FfiResult<DMatrix<u8>> {
    if p.is_null() {
        return Err(null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid(format!("{what} size overflows")))?;
    Ok(DMatrix::from_row_slice(rows, cols, std::slice::from_raw_parts(p, len)))
}

unsafe fn write_rows<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>, out: *mut T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(what));
    }
    let dst = std::slice::from_raw_parts_mut(out, m.len());
    let cols = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..cols {
            dst[i * cols + j] = m[(i, j)];
        }
    }
    Ok(())
}

unsafe fn out_handle<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length, or
/// 0 when there is no error.
#[no_mangle]
pub unsafe extern "C" fn zsml_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Loads the embeddings of `labels` from a `<count> <dim>` text file.
#[no_mangle]
pub unsafe extern "C" fn zsml_embeddings_load(
    path: *const c_char,
    labels: *const *const c_char,
    n_labels: usize,
    out: *mut *mut ZsmlEmbeddings,
) -> ZsmlStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let vocabulary = strings_arg(labels, n_labels, "labels")?;
        let table = core(load_embeddings(&path, &vocabulary))?;
        out_handle(out, ZsmlEmbeddings { table, vocabulary })
    })
}

/// Builds embeddings from a row-major `n_labels x dim` buffer.
#[no_mangle]
pub unsafe extern "C" fn zsml_embeddings_new(
    labels: *const *const c_char,
    n_labels: usize,
    values: *const f64,
    dim: usize,
    out: *mut *mut ZsmlEmbeddings,
) -> ZsmlStatus {
    guard(|| {
        let vocabulary = strings_arg(labels, n_labels, "labels")?;
        let m = matrix_arg(values, n_labels, dim, "values")?;
        let entries = vocabulary
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), m.row(i).iter().copied().collect()))
            .collect();
        let table = core(EmbeddingTable::new(dim, entries))?;
        out_handle(out, ZsmlEmbeddings { table, vocabulary })
    })
}

#[no_mangle]
pub unsafe extern "C" fn zsml_embeddings_dim(emb: *const ZsmlEmbeddings, out: *mut usize) -> ZsmlStatus {
    guard(|| {
        let e = handle(emb, "embeddings")?;
        *out.as_mut().ok_or_else(|| null("out"))? = e.table.dim();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn zsml_embeddings_free(emb: *mut ZsmlEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Synthesizes one prototype per nonempty subset of the embeddings'
/// vocabulary (which becomes the target vocabulary).
#[no_mangle]
pub unsafe extern "C" fn zsml_prototypes_build(
    emb: *const ZsmlEmbeddings,
    out: *mut *mut ZsmlPrototypes,
) -> ZsmlStatus {
    guard(|| {
        let e = handle(emb, "embeddings")?;
        let set = core(build_power_set(&e.table, &e.vocabulary))?;
        let label_embeddings = core(e.table.matrix(&e.vocabulary))?;
        out_handle(
            out,
            ZsmlPrototypes {
                set,
                label_embeddings,
            },
        )
    })
}

/// Number of prototypes and labels.
#[no_mangle]
pub unsafe extern "C" fn zsml_prototypes_shape(
    protos: *const ZsmlPrototypes,
    n_prototypes: *mut usize,
    n_labels: *mut usize,
) -> ZsmlStatus {
    guard(|| {
        let p = handle(protos, "prototypes")?;
        *n_prototypes.as_mut().ok_or_else(|| null("n_prototypes"))? = p.set.len();
        *n_labels.as_mut().ok_or_else(|| null("n_labels"))? = p.set.vocabulary().len();
        Ok(())
    })
}

/// Returns refined prototypes: each moves to the mean of its `k` nearest rows
/// of the `n x dim` projection buffer.
#[no_mangle]
pub unsafe extern "C" fn zsml_prototypes_self_train(
    protos: *const ZsmlPrototypes,
    y_hat: *const f64,
    n: usize,
    dim: usize,
    k: usize,
    euclidean: u8,
    out: *mut *mut ZsmlPrototypes,
) -> ZsmlStatus {
    guard(|| {
        let p = handle(protos, "prototypes")?;
        let y = core(TargetMatrix::new(matrix_arg(y_hat, n, dim, "y_hat")?))?;
        let distance = if euclidean != 0 { Distance::Euclidean } else { Distance::Cosine };
        let set = core(self_train_prototypes(&p.set, &y, k, distance))?;
        out_handle(
            out,
            ZsmlPrototypes {
                set,
                label_embeddings: p.label_embeddings.clone(),
            },
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn zsml_prototypes_free(protos: *mut ZsmlPrototypes) {
    if !protos.is_null() {
        drop(Box::from_raw(protos));
    }
}

/// Default prediction options.
#[no_mangle]
pub extern "C" fn zsml_predict_options_default() -> ZsmlPredictOptions {
    let d = ZslOptions::default();
    ZsmlPredictOptions {
        k_graph: d.k_graph,
        threshold: d.threshold,
        euclidean: 0,
        literal_sigma: 0,
        prototypes_link_test_only: 0,
    }
}

/// Predicts label sets for `n` projected instances. Writes `n x m` scores
/// and binary labels, where `m` is the number of target labels.
#[no_mangle]
pub unsafe extern "C" fn zsml_predict(
    protos: *const ZsmlPrototypes,
    method: ZsmlMethod,
    y_hat: *const f64,
    n: usize,
    dim: usize,
    options: *const ZsmlPredictOptions,
    out_scores: *mut f64,
    out_binary: *mut u8,
) -> ZsmlStatus {
    guard(|| {
        let p = handle(protos, "prototypes")?;
        let o = handle(options, "options")?;
        let y = core(TargetMatrix::new(matrix_arg(y_hat, n, dim, "y_hat")?))?;
        let opts = ZslOptions {
            k_graph: o.k_graph,
            threshold: o.threshold,
            distance: if o.euclidean != 0 { Distance::Euclidean } else { Distance::Cosine },
            sigma: if o.literal_sigma != 0 {
                SigmaConvention::Literal
            } else {
                SigmaConvention::MedianSquared
            },
            prototype_neighbors: if o.prototypes_link_test_only != 0 {
                PrototypeNeighbors::TestOnly
            } else {
                PrototypeNeighbors::All
            },
            ..ZslOptions::default()
        };
        let result = core(match method {
            ZsmlMethod::Exdap => exdap_predict(&y, &p.label_embeddings, opts.threshold),
            ZsmlMethod::Dmp => dmp_predict(&y, &p.set, opts.distance),
            ZsmlMethod::Tramp => build_knn_graph(&y, &p.set, &opts.graph())
                .and_then(|g| tramp_predict(&g, p.set.label_matrix(), opts.threshold)),
        })?;
        write_rows(&result.scores, out_scores, "out_scores")?;
        write_rows(&result.binary, out_binary, "out_binary")
    })
}

/// Default joint training options.
#[no_mangle]
pub extern "C" fn zsml_train_options_default() -> ZsmlTrainOptions {
    let d = TrainConfig::default();
    ZsmlTrainOptions {
        hidden_units: d.hidden_units,
        learning_rate: d.learning_rate,
        epochs: d.epochs,
        batch_size: d.batch_size,
        l2_penalty: d.l2_penalty,
        use_sgd: 0,
        seed: d.seed,
    }
}

/// Trains a regressor from row-major `n x d_in` features to `n x d_out`
/// word-space targets.
#[no_mangle]
pub unsafe extern "C" fn zsml_model_train(
    kind: ZsmlRegressorKind,
    x: *const f64,
    y: *const f64,
    n: usize,
    d_in: usize,
    d_out: usize,
    options: *const ZsmlTrainOptions,
    out: *mut *mut ZsmlModel,
) -> ZsmlStatus {
    guard(|| {
        let o = handle(options, "options")?;
        let x = core(FeatureMatrix::new(matrix_arg(x, n, d_in, "x")?))?;
        let y = core(TargetMatrix::new(matrix_arg(y, n, d_out, "y")?))?;
        let model = match kind {
            ZsmlRegressorKind::Independent => core(train_independent(&x, &y, o.l2_penalty))?,
            ZsmlRegressorKind::Joint => {
                let cfg = TrainConfig {
                    hidden_units: o.hidden_units,
                    learning_rate: o.learning_rate,
                    epochs: o.epochs,
                    batch_size: o.batch_size,
                    l2_penalty: o.l2_penalty,
                    optimizer: if o.use_sgd != 0 { Optimizer::Sgd } else { Optimizer::Adam },
                    seed: o.seed,
                };
                core(train_joint(&x, &y, &cfg))?.model
            }
        };
        out_handle(out, ZsmlModel { model })
    })
}

#[no_mangle]
pub unsafe extern "C" fn zsml_model_load(path: *const c_char, out: *mut *mut ZsmlModel) -> ZsmlStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let model = core(RegressionModel::load(&path))?;
        out_handle(out, ZsmlModel { model })
    })
}

#[no_mangle]
pub unsafe extern "C" fn zsml_model_save(model: *const ZsmlModel, path: *const c_char) -> ZsmlStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        core(m.model.save(&path))
    })
}

#[no_mangle]
pub unsafe extern "C" fn zsml_model_dims(
    model: *const ZsmlModel,
    d_in: *mut usize,
    d_out: *mut usize,
) -> ZsmlStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *d_in.as_mut().ok_or_else(|| null("d_in"))? = m.model.input_dim();
        *d_out.as_mut().ok_or_else(|| null("d_out"))? = m.model.output_dim();
        Ok(())
    })
}

/// Projects `n x d_in` features into the word space, writing `n x d_out`.
#[no_mangle]
pub unsafe extern "C" fn zsml_model_predict(
    model: *const ZsmlModel,
    x: *const f64,
    n: usize,
    d_in: usize,
    out_y: *mut f64,
) -> ZsmlStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let x = core(FeatureMatrix::new(matrix_arg(x, n, d_in, "x")?))?;
        let y = core(m.model.predict(&x))?;
        write_rows(y.as_matrix(), out_y, "out_y")
    })
}

#[no_mangle]
pub unsafe extern "C" fn zsml_model_free(model: *mut ZsmlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Evaluates `n x m` binary predictions and scores against truth.
#[no_mangle]
pub unsafe extern "C" fn zsml_evaluate(
    pred: *const u8,
    scores: *const f64,
    truth: *const u8,
    n: usize,
    m: usize,
    out: *mut ZsmlMetrics,
) -> ZsmlStatus {
    guard(|| {
        let pred = u8_matrix_arg(pred, n, m, "pred")?;
        let truth = u8_matrix_arg(truth, n, m, "truth")?;
        let scores = matrix_arg(scores, n, m, "scores")?;
        let r = core(EvalReport::compute(&pred, &scores, &truth))?;
        *out.as_mut().ok_or_else(|| null("out"))? = ZsmlMetrics {
            hamming_loss: r.hamming_loss,
            micro_f1: r.micro_f1,
            ranking_loss: r.ranking_loss,
            average_precision: r.average_precision,
            ranking_skipped: r.ranking_skipped,
        };
        Ok(())
    })
}
