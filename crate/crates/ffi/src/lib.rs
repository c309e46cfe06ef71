//! C ABI for loading a checkpoint and tracking dialogues turn by turn.
//!
//! Every fallible call returns a [`JdstStatus`]; on failure a message is kept
//! per thread and read with [`jdst_last_error_message`]. Strings returned by
//! the library are released with [`jdst_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use joint_dst::checkpoint;
use joint_dst::eval::mcnemar_exact;
use joint_dst::model::{Model, Session};
use joint_dst::repl::{parse_system_acts, tokenize};
use joint_dst::training::SamplingSchedule;
use joint_dst::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JdstStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Checkpoint = 4,
    Io = 5,
    Model = 6,
    Panic = 7,
}

/// A loaded model. Sessions keep it alive, so it may be freed first.
pub struct JdstModel {
    model: Arc<Model>,
}

/// One dialogue in progress.
pub struct JdstSession {
    model: Arc<Model>,
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> JdstStatus {
    match e {
        Error::Checkpoint(_) | Error::Json(_) | Error::VocabMismatch { .. } => JdstStatus::Checkpoint,
        Error::Io(_) => JdstStatus::Io,
        Error::InvalidArgument(_) | Error::UnknownActType(_) | Error::ValueWithoutSlot(_) | Error::Config(_) => {
            JdstStatus::InvalidArgument
        }
        _ => JdstStatus::Model,
    }
}

/// Runs `f`, recording its error and turning panics into [`JdstStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), (JdstStatus, String)>) -> JdstStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            JdstStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            JdstStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (JdstStatus, String) {
    (status_of(&e), e.to_string())
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (JdstStatus, String)> {
    if s.is_null() {
        return Err((JdstStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (JdstStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn null(what: &str) -> (JdstStatus, String) {
    (JdstStatus::NullPointer, format!("{what} is null"))
}

/// Loads a checkpoint file. On success `*out` owns the model.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jdst_model_load(path: *const c_char, out: *mut *mut JdstModel) -> JdstStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let model = checkpoint::load(path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(JdstModel { model: Arc::new(model) }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a pointer from [`jdst_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jdst_model_free(model: *mut JdstModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of scalar parameters, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn jdst_model_num_parameters(model: *const JdstModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_parameters())
}

/// Starts a dialogue.
///
/// # Safety
/// `model` must be a live model handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jdst_session_new(model: *const JdstModel, out: *mut *mut JdstSession) -> JdstStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let session = m.model.new_session();
        *out = Box::into_raw(Box::new(JdstSession {
            model: Arc::clone(&m.model),
            session,
        }));
        Ok(())
    })
}

/// Returns the session to the start of a dialogue.
///
/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn jdst_session_reset(session: *mut JdstSession) -> JdstStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        s.session = s.model.new_session();
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a pointer from [`jdst_session_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jdst_session_free(session: *mut JdstSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Processes one user turn.
///
/// `system_acts` uses the REPL syntax, e.g. `offer(time=6 pm) request(date)`,
/// and may be empty. `utterance` is raw text. On success `*out_json` holds the
/// turn prediction as JSON: intent, acts, tokens, tags, decoded values, the
/// read-out state and the scored state. On failure the session is unchanged.
///
/// # Safety
/// `session` must be a live session handle, both strings NUL-terminated and
/// `out_json` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jdst_session_turn(
    session: *mut JdstSession,
    system_acts: *const c_char,
    utterance: *const c_char,
    out_json: *mut *mut c_char,
) -> JdstStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        *out_json = ptr::null_mut();
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        let acts_text = read_str(system_acts, "system_acts")?;
        let text = read_str(utterance, "utterance")?;
        let acts = if acts_text.trim().is_empty() {
            Vec::new()
        } else {
            parse_system_acts(acts_text).map_err(lib_err)?
        };
        let words = tokenize(text);
        let prediction = s.model.infer_turn(&mut s.session, &acts, &words).map_err(lib_err)?;
        let json = serde_json::to_string(&prediction).map_err(|e| lib_err(e.into()))?;
        let c = CString::new(json).map_err(|_| (JdstStatus::Model, "prediction contains NUL".to_string()))?;
        *out_json = c.into_raw();
        Ok(())
    })
}

/// Turns processed since the session started or was reset.
///
/// # Safety
/// `session` must be null or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn jdst_session_turns(session: *const JdstSession) -> usize {
    session.as_ref().map_or(0, |s| s.session.turn)
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jdst_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn jdst_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Exact two-sided McNemar p-value for discordant counts `b` and `c`.
#[no_mangle]
pub extern "C" fn jdst_mcnemar(b: usize, c: usize) -> f64 {
    mcnemar_exact(b, c)
}

/// Scheduled-sampling keep probability at step `k`.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jdst_keep_probability(
    k: usize,
    k_pre: usize,
    k_max: usize,
    p_min: f64,
    out: *mut f64,
) -> JdstStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let schedule = SamplingSchedule::new(k_pre, k_max, p_min).map_err(lib_err)?;
        *out = schedule.keep_probability(k);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_helpers() {
        assert_eq!(jdst_mcnemar(3, 3), 1.0);
        let mut p = 0.0;
        assert_eq!(unsafe { jdst_keep_probability(650, 300, 1000, 0.2, &mut p) }, JdstStatus::Ok);
        assert!((p - 0.6).abs() < 1e-12);
        assert_eq!(
            unsafe { jdst_keep_probability(0, 900, 100, 0.2, &mut p) },
            JdstStatus::InvalidArgument
        );
        assert!(!jdst_last_error_message().is_null());
        assert_eq!(
            unsafe { jdst_keep_probability(0, 1, 2, 0.5, ptr::null_mut()) },
            JdstStatus::NullPointer
        );
    }
}
