//! Exercises the C ABI exactly as a C caller would: through the exported
//! symbols, status codes, and the thread-local error message.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use copath_ffi::{
    copath_assemble_answer, copath_evaluate_json, copath_last_error_message, copath_model_config_hash,
    copath_model_free, copath_model_load, copath_model_param_count, copath_model_save,
    copath_rouge1, copath_string_free, copath_tasks_free, copath_tasks_generate, copath_tasks_len,
    copath_tasks_load, copath_tasks_save, copath_train, copath_vectors_free, copath_vectors_synth,
    copath_version, CopathModel, CopathStatus, CopathTasks, CopathVectors,
};

fn c(text: &str) -> CString {
    CString::new(text).unwrap()
}

unsafe fn last_error() -> String {
    let ptr = copath_last_error_message();
    assert!(!ptr.is_null(), "expected an error message");
    CStr::from_ptr(ptr).to_str().unwrap().to_string()
}

unsafe fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    let out = CStr::from_ptr(ptr).to_str().unwrap().to_string();
    copath_string_free(ptr);
    out
}

#[test]
fn version_is_a_static_semver_string() {
    let ptr = copath_version();
    assert!(!ptr.is_null());
    let version = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn assembly_and_rouge_match_the_library() {
    unsafe {
        let mut answer: *mut c_char = ptr::null_mut();
        let status = copath_assemble_answer(
            c("a r b").as_ptr(),
            c("c s d").as_ptr(),
            c("hi").as_ptr(),
            &mut answer,
        );
        assert_eq!(status, CopathStatus::Ok);
        assert_eq!(take_string(answer), "a r b [SEP] c s d [SEP] hi");

        for (cand, refr, recall) in [
            ("the cat sat", "a cat sat here", false),
            ("the cat sat", "a cat sat here", true),
            ("", "anything", false),
        ] {
            let mut score = f64::NAN;
            let status = copath_rouge1(c(cand).as_ptr(), c(refr).as_ptr(), recall, &mut score);
            assert_eq!(status, CopathStatus::Ok);
            let variant = if recall {
                copath::reward::RougeVariant::Recall
            } else {
                copath::reward::RougeVariant::F1
            };
            assert_eq!(score, copath::reward::rouge1(cand, refr, variant));
        }
    }
}

#[test]
fn bad_arguments_set_status_and_message() {
    unsafe {
        let mut score = 0.0;
        let status = copath_rouge1(ptr::null(), c("x").as_ptr(), false, &mut score);
        assert_eq!(status, CopathStatus::NullPointer);
        assert!(last_error().contains("candidate"), "{}", last_error());

        let invalid = CString::new(vec![0xff, 0xfe]).unwrap();
        let status = copath_rouge1(invalid.as_ptr(), c("x").as_ptr(), false, &mut score);
        assert_eq!(status, CopathStatus::Utf8);

        let mut model: *mut CopathModel = ptr::null_mut();
        let status = copath_model_load(c("/nonexistent/model.ckpt").as_ptr(), &mut model);
        assert_eq!(status, CopathStatus::Io);
        assert!(model.is_null());
        assert!(last_error().contains("/nonexistent/model.ckpt"));

        // A successful call clears the message again.
        let status = copath_rouge1(c("a").as_ptr(), c("a").as_ptr(), false, &mut score);
        assert_eq!(status, CopathStatus::Ok);
        assert!(copath_last_error_message().is_null());
    }
}

#[test]
fn training_config_json_rejects_unknown_keys_and_bad_splits() {
    unsafe {
        let mut tasks: *mut CopathTasks = ptr::null_mut();
        assert_eq!(
            copath_tasks_generate(8, 2, 2, 77, 6, &mut tasks),
            CopathStatus::Ok
        );
        let mut vectors: *mut CopathVectors = ptr::null_mut();
        assert_eq!(
            copath_vectors_synth(tasks, 48, &mut vectors),
            CopathStatus::Ok
        );

        let mut model: *mut CopathModel = ptr::null_mut();
        let status = copath_train(
            c(r#"{"total_stepz": 3}"#).as_ptr(),
            tasks,
            1,
            vectors,
            &mut model,
        );
        assert_eq!(status, CopathStatus::Parse);
        assert!(last_error().contains("total_stepz"), "{}", last_error());

        let status = copath_train(ptr::null(), tasks, 6, vectors, &mut model);
        assert_eq!(status, CopathStatus::InvalidInput);
        assert!(last_error().contains("validation split"));

        copath_vectors_free(vectors);
        copath_tasks_free(tasks);
    }
}

#[test]
fn train_save_load_evaluate_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut tasks: *mut CopathTasks = ptr::null_mut();
        assert_eq!(
            copath_tasks_generate(8, 2, 2, 42, 10, &mut tasks),
            CopathStatus::Ok
        );
        let mut len = 0usize;
        assert_eq!(copath_tasks_len(tasks, &mut len), CopathStatus::Ok);
        assert_eq!(len, 10);

        // Tasks survive a save/load round trip.
        let tasks_path = c(dir.path().join("tasks.jsonl").to_str().unwrap());
        assert_eq!(copath_tasks_save(tasks, tasks_path.as_ptr()), CopathStatus::Ok);
        let mut reloaded: *mut CopathTasks = ptr::null_mut();
        assert_eq!(
            copath_tasks_load(tasks_path.as_ptr(), &mut reloaded),
            CopathStatus::Ok
        );
        let mut reloaded_len = 0usize;
        assert_eq!(copath_tasks_len(reloaded, &mut reloaded_len), CopathStatus::Ok);
        assert_eq!(reloaded_len, len);
        copath_tasks_free(reloaded);

        let mut vectors: *mut CopathVectors = ptr::null_mut();
        assert_eq!(
            copath_vectors_synth(tasks, 48, &mut vectors),
            CopathStatus::Ok
        );

        let config = c(
            r#"{"seed": 5, "total_steps": 15, "batch_size": 4,
                "embed_dim": 48, "hidden_dim": 8, "comm_input_dim": 8,
                "patience": 0}"#,
        );
        let mut model: *mut CopathModel = ptr::null_mut();
        assert_eq!(
            copath_train(config.as_ptr(), tasks, 2, vectors, &mut model),
            CopathStatus::Ok
        );

        let mut count = 0usize;
        assert_eq!(copath_model_param_count(model, &mut count), CopathStatus::Ok);
        assert!(count > 0);

        let mut hash: *mut c_char = ptr::null_mut();
        assert_eq!(copath_model_config_hash(model, &mut hash), CopathStatus::Ok);
        let hash = take_string(hash);
        assert_eq!(hash.len(), 64);
        assert!(hash.chars().all(|ch| ch.is_ascii_hexdigit()));

        // The same model writes identical checkpoint bytes every time.
        let ckpt_a = c(dir.path().join("a.ckpt").to_str().unwrap());
        let ckpt_b = c(dir.path().join("b.ckpt").to_str().unwrap());
        assert_eq!(copath_model_save(model, ckpt_a.as_ptr()), CopathStatus::Ok);
        assert_eq!(copath_model_save(model, ckpt_b.as_ptr()), CopathStatus::Ok);
        let bytes_a = std::fs::read(dir.path().join("a.ckpt")).unwrap();
        let bytes_b = std::fs::read(dir.path().join("b.ckpt")).unwrap();
        assert!(!bytes_a.is_empty());
        assert_eq!(bytes_a, bytes_b);

        let mut loaded: *mut CopathModel = ptr::null_mut();
        assert_eq!(
            copath_model_load(ckpt_a.as_ptr(), &mut loaded),
            CopathStatus::Ok
        );
        let mut loaded_count = 0usize;
        assert_eq!(
            copath_model_param_count(loaded, &mut loaded_count),
            CopathStatus::Ok
        );
        assert_eq!(loaded_count, count);

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(
            copath_evaluate_json(loaded, tasks, vectors, 2, true, &mut json),
            CopathStatus::Ok
        );
        let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(report["count"], 10);
        assert_eq!(report["horizon"], 2);
        let mean = report["mean_reward"].as_f64().unwrap();
        assert!((0.0..=2.0).contains(&mean), "mean reward {mean}");
        assert_eq!(report["instances"].as_array().unwrap().len(), 10);

        copath_model_free(loaded);
        copath_model_free(model);
        copath_vectors_free(vectors);
        copath_tasks_free(tasks);
    }
}

#[test]
fn generated_header_declares_the_full_surface() {
    let header = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("include")
            .join("copath.h"),
    )
    .unwrap();
    for symbol in [
        "typedef struct CopathModel CopathModel;",
        "typedef struct CopathTasks CopathTasks;",
        "typedef struct CopathVectors CopathVectors;",
        "COPATH_STATUS_OK = 0",
        "copath_version",
        "copath_last_error_message",
        "copath_string_free",
        "copath_rouge1",
        "copath_assemble_answer",
        "copath_tasks_generate",
        "copath_tasks_load",
        "copath_tasks_save",
        "copath_tasks_len",
        "copath_tasks_free",
        "copath_vectors_synth",
        "copath_vectors_load",
        "copath_vectors_free",
        "copath_train",
        "copath_model_load",
        "copath_model_save",
        "copath_model_param_count",
        "copath_model_config_hash",
        "copath_model_free",
        "copath_evaluate_json",
    ] {
        assert!(header.contains(symbol), "header is missing: {symbol}");
    }
}
