use std::ffi::{CStr, CString};
use std::ptr;

use joint_dst::data::build_vocab;
use joint_dst::data::synth::{generate_splits, Domain};
use joint_dst::model::{Model, ModelConfig};
use joint_dst::repl::tokenize;
use joint_dst::checkpoint;
use joint_dst_ffi::*;

fn saved_model(dir: &tempfile::TempDir) -> (Model, CString) {
    let s = generate_splits(Domain::Restaurant, (4, 0, 0), 5, 1.0);
    let cfg = ModelConfig {
        embed_dim: 6,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, build_vocab(&s.train, 1).unwrap()).unwrap();
    let path = dir.path().join("m.json");
    checkpoint::save(&model, &path).unwrap();
    (model, CString::new(path.to_str().unwrap()).unwrap())
}

fn last_error() -> String {
    let p = jdst_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn turn(session: *mut JdstSession, acts: &str, text: &str) -> Result<serde_json::Value, JdstStatus> {
    let acts = CString::new(acts).unwrap();
    let text = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    let status = jdst_session_turn(session, acts.as_ptr(), text.as_ptr(), &mut out);
    if status != JdstStatus::Ok {
        assert!(out.is_null());
        return Err(status);
    }
    let json = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
    jdst_string_free(out);
    Ok(json)
}

#[test]
fn session_matches_library_inference() {
    let dir = tempfile::tempdir().unwrap();
    let (model, path) = saved_model(&dir);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(jdst_model_load(path.as_ptr(), &mut m), JdstStatus::Ok);
        assert_eq!(jdst_model_num_parameters(m), model.num_parameters());
        let mut s = ptr::null_mut();
        assert_eq!(jdst_session_new(m, &mut s), JdstStatus::Ok);
        // The session keeps the model alive.
        jdst_model_free(m);

        let mut reference = model.new_session();
        let script = [
            ("", "book a table at cascal for 2 people"),
            ("offer(time=6 pm)", "6 pm isn't good for us. How about 7 pm?"),
        ];
        for (acts, text) in script {
            let got = turn(s, acts, text).unwrap();
            let sys = if acts.is_empty() {
                vec![]
            } else {
                joint_dst::repl::parse_system_acts(acts).unwrap()
            };
            let want = model.infer_turn(&mut reference, &sys, &tokenize(text)).unwrap();
            assert_eq!(got, serde_json::to_value(&want).unwrap());
        }
        assert_eq!(jdst_session_turns(s), 2);

        assert_eq!(turn(s, "offer(time=6 pm", "hi"), Err(JdstStatus::InvalidArgument));
        assert!(last_error().contains("unclosed"));
        assert_eq!(turn(s, "dance", "hi"), Err(JdstStatus::InvalidArgument));
        assert_eq!(jdst_session_turns(s), 2);

        assert_eq!(jdst_session_reset(s), JdstStatus::Ok);
        assert_eq!(jdst_session_turns(s), 0);
        let first = turn(s, "", "hello").unwrap();
        let mut fresh = model.new_session();
        let want = model.infer_turn(&mut fresh, &[], &tokenize("hello")).unwrap();
        assert_eq!(first, serde_json::to_value(&want).unwrap());
        jdst_session_free(s);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(jdst_model_load(missing.as_ptr(), &mut m), JdstStatus::Checkpoint);
        assert!(m.is_null());
        assert!(last_error().contains("/nonexistent/model.json"));
        assert_eq!(jdst_model_load(ptr::null(), &mut m), JdstStatus::NullPointer);
        assert_eq!(jdst_model_load(missing.as_ptr(), ptr::null_mut()), JdstStatus::NullPointer);
        let bad = [0xffu8, 0];
        assert_eq!(jdst_model_load(bad.as_ptr().cast(), &mut m), JdstStatus::InvalidUtf8);

        let dir = tempfile::tempdir().unwrap();
        let garbage = dir.path().join("g.json");
        std::fs::write(&garbage, "{").unwrap();
        let g = CString::new(garbage.to_str().unwrap()).unwrap();
        assert_eq!(jdst_model_load(g.as_ptr(), &mut m), JdstStatus::Checkpoint);

        let mut s = ptr::null_mut();
        assert_eq!(jdst_session_new(ptr::null(), &mut s), JdstStatus::NullPointer);
        assert_eq!(jdst_session_reset(ptr::null_mut()), JdstStatus::NullPointer);
        jdst_session_free(ptr::null_mut());
        jdst_model_free(ptr::null_mut());
        jdst_string_free(ptr::null_mut());
        assert_eq!(jdst_session_turns(ptr::null()), 0);

        let mut p = 0.0;
        assert_eq!(jdst_keep_probability(0, 3, 10, 0.5, &mut p), JdstStatus::Ok);
        assert!(jdst_last_error_message().is_null());
        assert_eq!(p, 1.0);
    }
    assert!((jdst_mcnemar(10, 2) - 0.0386).abs() < 1e-4);
}

#[test]
fn header_is_valid_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/joint_dst.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "jdst_model_load",
        "jdst_session_turn",
        "jdst_string_free",
        "jdst_last_error_message",
        "JDST_STATUS_OK",
    ] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(status.success());
}
