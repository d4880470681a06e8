//! Exercises the C surface from Rust: handle lifecycle, status codes, error
//! messages, and the generated header.

use std::ffi::{CStr, CString};
use std::ptr;

use vi_spectral_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(vis_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_a_static_string() {
    let version = unsafe { CStr::from_ptr(vis_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generate_inspect_run_and_free() {
    unsafe {
        let mut mdp: *mut VisMdp = ptr::null_mut();
        let status = vis_mdp_generate(4, 2, 7, 0.7, 0.9, 0.0, 1.0, 100, &mut mdp);
        assert_eq!(status, VisStatus::Ok, "{}", last_error());
        assert!(!mdp.is_null());

        let (mut n, mut m, mut gamma) = (0usize, 0usize, 0.0f64);
        assert_eq!(vis_mdp_dims(mdp, &mut n, &mut m), VisStatus::Ok);
        assert_eq!((n, m), (4, 2));
        assert_eq!(vis_mdp_gamma(mdp, &mut gamma), VisStatus::Ok);
        assert_eq!(gamma, 0.9);

        let mut run: *mut VisRun = ptr::null_mut();
        let status =
            vis_run_experiment(mdp, 0.5, 25, 3, 1.0, VisTerminal::Uniform, false, &mut run);
        assert_eq!(status, VisStatus::Ok, "{}", last_error());

        let mut horizon = 0usize;
        assert_eq!(vis_run_horizon(run, &mut horizon), VisStatus::Ok);
        assert_eq!(horizon, 25);

        let mut summary = std::mem::zeroed::<VisSummary>();
        assert_eq!(vis_run_summary(run, &mut summary), VisStatus::Ok);
        assert_eq!(summary.n, 4);
        assert!(summary.assumption_unique_optimal);
        assert!(summary.assumption_irreducible);
        assert!(summary.assumption_aperiodic);
        assert!(summary.has_lambda);
        assert!(summary.lambda > 0.0);
        assert!(summary.has_corollary && summary.corollary_holds);
        assert!(summary.has_max_theorem_residual);
        assert!(summary.max_theorem_residual <= 1e-9);
        assert!(!summary.fault_injected);
        assert!((summary.gamma_alpha - 0.95).abs() <= 1e-15);

        // Step rows: first row has full data, final row only state quantities.
        let mut step = std::mem::zeroed::<VisStepValues>();
        assert_eq!(vis_run_step(run, 0, &mut step), VisStatus::Ok);
        assert_eq!(step.t, 0);
        assert_eq!(step.e_inf_norm, 1.0);
        assert!(step.has_gain && step.gain > 0.0);
        assert!(step.has_mix_flag);
        assert!(step.has_rayleigh_value);
        assert!((step.rayleigh_value - step.gain).abs() <= 1e-10 * (1.0 + step.gain));

        assert_eq!(vis_run_step(run, 25, &mut step), VisStatus::Ok);
        assert!(!step.has_gain);
        assert!(!step.has_mix_flag);

        assert_eq!(vis_run_step(run, 26, &mut step), VisStatus::OutOfRange);
        assert!(last_error().contains("out of range"));

        vis_run_free(run);
        vis_mdp_free(mdp);
    }
}

#[test]
fn json_round_trip_through_the_boundary() {
    unsafe {
        let mut mdp: *mut VisMdp = ptr::null_mut();
        assert_eq!(
            vis_mdp_generate(3, 2, 11, 0.8, 0.8, 0.0, 1.0, 100, &mut mdp),
            VisStatus::Ok
        );
        let mut json: *mut libc::c_char = ptr::null_mut();
        assert_eq!(vis_mdp_to_json(mdp, &mut json), VisStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();

        let mut back: *mut VisMdp = ptr::null_mut();
        let c_text = CString::new(text).unwrap();
        assert_eq!(vis_mdp_from_json(c_text.as_ptr(), &mut back), VisStatus::Ok);
        let (mut n, mut m) = (0usize, 0usize);
        assert_eq!(vis_mdp_dims(back, &mut n, &mut m), VisStatus::Ok);
        assert_eq!((n, m), (3, 2));

        vis_string_free(json);
        vis_mdp_free(back);
        vis_mdp_free(mdp);
    }
}

#[test]
fn error_paths_set_statuses_and_messages() {
    unsafe {
        // Null pointers.
        assert_eq!(
            vis_mdp_from_json(ptr::null(), ptr::null_mut()),
            VisStatus::NullPointer
        );
        let mut mdp: *mut VisMdp = ptr::null_mut();

        // Bad JSON.
        let junk = CString::new("{not json").unwrap();
        assert_eq!(vis_mdp_from_json(junk.as_ptr(), &mut mdp), VisStatus::Parse);
        assert!(!last_error().is_empty());

        // Validation failure (gamma out of range).
        let bad =
            CString::new(r#"{"n":1,"m":1,"gamma":1.5,"reward":[[0.0]],"transition":[[[1.0]]]}"#)
                .unwrap();
        assert_eq!(vis_mdp_from_json(bad.as_ptr(), &mut mdp), VisStatus::Parse);
        assert!(last_error().contains("gamma"));

        // Missing file.
        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(vis_mdp_load_file(missing.as_ptr(), &mut mdp), VisStatus::Io);

        // Invalid generator arguments.
        assert_eq!(
            vis_mdp_generate(4, 2, 0, 0.0, 0.9, 0.0, 1.0, 10, &mut mdp),
            VisStatus::InvalidArgument
        );

        // Exhausted rejection sampling (exact reward ties, uniqueness fails).
        assert_eq!(
            vis_mdp_generate(1, 2, 0, 1.0, 0.9, 0.5, 0.5, 5, &mut mdp),
            VisStatus::GenerationExhausted
        );

        // Invalid run arguments on a good model.
        assert_eq!(
            vis_mdp_generate(3, 2, 1, 0.8, 0.9, 0.0, 1.0, 100, &mut mdp),
            VisStatus::Ok
        );
        let mut run: *mut VisRun = ptr::null_mut();
        assert_eq!(
            vis_run_experiment(mdp, 1.5, 10, 0, 1.0, VisTerminal::Uniform, false, &mut run),
            VisStatus::InvalidArgument
        );
        assert!(last_error().contains("alpha"));
        vis_mdp_free(mdp);
    }
}

#[test]
fn fault_injection_surfaces_in_the_summary() {
    unsafe {
        let mut mdp: *mut VisMdp = ptr::null_mut();
        assert_eq!(
            vis_mdp_generate(4, 2, 19, 0.7, 0.9, 0.0, 1.0, 100, &mut mdp),
            VisStatus::Ok
        );
        let mut run: *mut VisRun = ptr::null_mut();
        assert_eq!(
            vis_run_experiment(mdp, 0.5, 16, 2, 1.0, VisTerminal::Uniform, true, &mut run),
            VisStatus::Ok
        );
        let mut summary = std::mem::zeroed::<VisSummary>();
        assert_eq!(vis_run_summary(run, &mut summary), VisStatus::Ok);
        assert!(summary.fault_injected);
        assert!(summary.max_theorem_residual > 1e-8);
        vis_run_free(run);
        vis_mdp_free(mdp);
    }
}

#[test]
fn artifacts_written_through_the_boundary() {
    unsafe {
        let dir = std::env::temp_dir().join(format!("vi_spectral_ffi_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);

        let mut mdp: *mut VisMdp = ptr::null_mut();
        assert_eq!(
            vis_mdp_generate(3, 2, 23, 0.8, 0.9, 0.0, 1.0, 100, &mut mdp),
            VisStatus::Ok
        );
        let mut run: *mut VisRun = ptr::null_mut();
        assert_eq!(
            vis_run_experiment(mdp, 0.6, 12, 5, 1.0, VisTerminal::Uniform, false, &mut run),
            VisStatus::Ok
        );
        let c_dir = CString::new(dir.to_str().unwrap()).unwrap();
        assert_eq!(vis_run_write_artifacts(run, c_dir.as_ptr()), VisStatus::Ok);
        assert!(dir.join("trace.csv").exists());
        assert!(dir.join("report.json").exists());

        let mut json: *mut libc::c_char = ptr::null_mut();
        assert_eq!(vis_run_report_json(run, &mut json), VisStatus::Ok);
        let parsed: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(parsed["steps"].as_array().unwrap().len(), 13);
        vis_string_free(json);

        vis_run_free(run);
        vis_mdp_free(mdp);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

#[test]
fn generated_header_exposes_the_surface() {
    let header = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vi_spectral.h"),
    )
    .expect("header generated at build time");
    for symbol in [
        "typedef struct VisMdp VisMdp",
        "typedef struct VisRun VisRun",
        "typedef enum VisStatus",
        "vis_mdp_generate",
        "vis_mdp_load_file",
        "vis_run_experiment",
        "vis_run_summary",
        "vis_run_step",
        "vis_run_write_artifacts",
        "vis_last_error",
        "vis_string_free",
    ] {
        assert!(header.contains(symbol), "header missing {symbol}");
    }
    assert!(
        header.contains("VisStatus_Ok"),
        "enum variants are prefixed"
    );
}
