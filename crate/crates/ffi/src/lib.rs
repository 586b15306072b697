//! C ABI over the torsion engine. Models are opaque handles; results come back
//! as NUL-terminated JSON strings owned by the library and released with
//! `acms_string_free`. Every call returns an `AcmsStatus`; on failure the
//! message is available from `acms_last_error` on the same thread.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use acms_torsion::acms::AcmStructure;
use acms_torsion::builtins::{builtin, ParamValue, Params};
use acms_torsion::classify::{enumerate_forbidden, DEFAULT_TOL};
use acms_torsion::identities::{SuiteOptions, Tier};
use acms_torsion::model::file::ModelFile;
use acms_torsion::model::FrameModel;
use acms_torsion::report::{build_report, to_json, ModelInfo, ReportOptions};
use acms_torsion::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcmsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidModel = 4,
    OutsideDomain = 5,
    /// The report was produced but an identity failed.
    IdentityFailure = 6,
    Internal = 7,
}

/// A frame model with its almost contact metric structure.
pub struct AcmsModel {
    info: ModelInfo,
    model: FrameModel,
    structure: AcmStructure,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(AcmsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Syntax { .. } | Error::UnknownIdentifier { .. } | Error::Arity { .. } | Error::Json(_) => {
                AcmsStatus::Parse
            }
            Error::OutsideDomain { .. } | Error::StencilOutsideDomain { .. } | Error::SingularFrame { .. } => {
                AcmsStatus::OutsideDomain
            }
            _ => AcmsStatus::InvalidModel,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<AcmsStatus, Failure>) -> AcmsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AcmsStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure(AcmsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn null(what: &str) -> Failure {
    Failure(AcmsStatus::NullPointer, format!("{what} is null"))
}

/// `{"name": number | [numbers]}`
fn parse_params(text: Option<&str>) -> Result<Params, Failure> {
    let Some(text) = text else {
        return Ok(Params::new());
    };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Failure(AcmsStatus::Parse, format!("parameters: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Failure(AcmsStatus::Parse, "parameters must be a JSON object".into()))?;
    let number = |v: &serde_json::Value| {
        v.as_f64()
            .ok_or_else(|| Failure(AcmsStatus::Parse, format!("parameter value {v} is not a number")))
    };
    obj.iter()
        .map(|(k, v)| {
            let p = match v.as_array() {
                Some(items) => ParamValue::Vector(items.iter().map(number).collect::<Result<_, _>>()?),
                None => ParamValue::Scalar(number(v)?),
            };
            Ok((k.clone(), p))
        })
        .collect()
}

unsafe fn write_json(out: *mut *mut c_char, json: String) -> Result<(), Failure> {
    let c = CString::new(json).map_err(|_| Failure(AcmsStatus::Internal, "NUL in output".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_model(out: *mut *mut AcmsModel, m: AcmsModel) {
    *out = Box::into_raw(Box::new(m));
}

/// Builds a builtin model. `params_json` may be null.
///
/// # Safety
/// `name` and `params_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acms_model_builtin(
    name: *const c_char,
    params_json: *const c_char,
    out: *mut *mut AcmsModel,
) -> AcmsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let name = read_str(name, "name")?.ok_or_else(|| null("name"))?;
        let params = parse_params(read_str(params_json, "params")?)?;
        let b = builtin(name, &params)?;
        let info = ModelInfo {
            id: format!("builtin:{name}"),
            builtin: Some(name.to_string()),
            params: b.params.clone(),
            dim: b.model.dim(),
            n: b.structure.n(),
        };
        write_model(
            out,
            AcmsModel {
                info,
                model: b.model,
                structure: b.structure,
            },
        );
        Ok(AcmsStatus::Ok)
    })
}

/// Builds a model from the text of a model file. `params_json` overrides file
/// parameters and may be null.
///
/// # Safety
/// `text` and `params_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acms_model_from_json(
    text: *const c_char,
    params_json: *const c_char,
    out: *mut *mut AcmsModel,
) -> AcmsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(text, "text")?.ok_or_else(|| null("text"))?;
        let file = ModelFile::from_json(text)?;
        let mut overrides = BTreeMap::new();
        for (k, v) in parse_params(read_str(params_json, "params")?)? {
            match v {
                ParamValue::Scalar(x) => {
                    overrides.insert(k, x);
                }
                ParamValue::Vector(_) => {
                    return Err(Failure(AcmsStatus::Parse, format!("file parameter `{k}` must be a number")));
                }
            }
        }
        let (model, structure) = file.build(&overrides)?;
        let failures = structure.validate().failures();
        if !failures.is_empty() {
            return Err(Failure(AcmsStatus::InvalidModel, failures.join("; ")));
        }
        let mut params: Params = file.params.iter().map(|(k, v)| (k.clone(), ParamValue::Scalar(*v))).collect();
        params.extend(overrides.into_iter().map(|(k, v)| (k, ParamValue::Scalar(v))));
        let info = ModelInfo {
            id: "model-file".into(),
            builtin: None,
            params,
            dim: model.dim(),
            n: structure.n(),
        };
        write_model(out, AcmsModel { info, model, structure });
        Ok(AcmsStatus::Ok)
    })
}

/// # Safety
/// `model` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn acms_model_free(model: *mut AcmsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Chart dimension `2n+1`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn acms_model_dim(model: *const AcmsModel) -> usize {
    model.as_ref().map_or(0, |m| m.info.dim)
}

unsafe fn read_points<'a>(m: &AcmsModel, points: *const f64, count: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if points.is_null() {
        return Err(null("points"));
    }
    if count == 0 {
        return Err(Failure(AcmsStatus::Parse, "no points given".into()));
    }
    let d = m.info.dim;
    let flat = std::slice::from_raw_parts(points, count * d);
    Ok(flat.chunks(d).map(<[f64]>::to_vec).collect())
}

unsafe fn run_report(
    model: *const AcmsModel,
    points: *const f64,
    count: usize,
    command: &str,
    opts: ReportOptions,
    out: *mut *mut c_char,
) -> Result<AcmsStatus, Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = ptr::null_mut();
    let m = model.as_ref().ok_or_else(|| null("model"))?;
    let pts = read_points(m, points, count)?;
    let report = build_report(command, m.info.clone(), &m.structure, &m.model, &pts, &opts)?;
    write_json(out, report.to_json()?)?;
    Ok(if report.summary.identities_failed > 0 {
        AcmsStatus::IdentityFailure
    } else {
        AcmsStatus::Ok
    })
}

/// Classification report for `count` points stored row by row (`count × dim`
/// values). A non-positive `tol` selects the default threshold.
///
/// # Safety
/// `model` must be a live handle, `points` must hold `count × dim` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acms_classify(
    model: *const AcmsModel,
    points: *const f64,
    count: usize,
    tol: f64,
    out: *mut *mut c_char,
) -> AcmsStatus {
    guard(|| {
        let tol = if tol > 0.0 { tol } else { DEFAULT_TOL };
        let opts = ReportOptions {
            tol,
            identities: None,
            conformal: None,
        };
        run_report(model, points, count, "classify", opts, out)
    })
}

/// Classification plus the identity suite. Returns `IDENTITY_FAILURE` with a
/// complete report when an identity fails.
///
/// # Safety
/// As for `acms_classify`.
#[no_mangle]
pub unsafe extern "C" fn acms_verify(
    model: *const AcmsModel,
    points: *const f64,
    count: usize,
    full_tier: bool,
    out: *mut *mut c_char,
) -> AcmsStatus {
    guard(|| {
        let suite = SuiteOptions {
            tier: if full_tier { Tier::Full } else { Tier::Default },
            ..SuiteOptions::default()
        };
        let opts = ReportOptions {
            tol: DEFAULT_TOL,
            identities: Some(suite),
            conformal: None,
        };
        run_report(model, points, count, "verify", opts, out)
    })
}

/// Catalog of forbidden strict types for `n > 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn acms_enumerate_types(n: usize, out: *mut *mut c_char) -> AcmsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        write_json(out, to_json(enumerate_forbidden(n)?)?)?;
        Ok(AcmsStatus::Ok)
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn acms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn acms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
