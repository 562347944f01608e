use std::ffi::{CStr, CString};
use std::ptr;

use queuelab_ffi::*;

fn last_error() -> String {
    let p = ql_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn distribution_round_trip() {
    let text = CString::new("pareto(2.5,1)").unwrap();
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(ql_distribution_parse(text.as_ptr(), &mut d), QlStatus::Ok);
        let mut mean = 0.0;
        assert_eq!(ql_distribution_mean(d, &mut mean), QlStatus::Ok);
        assert!((mean - 5.0 / 3.0).abs() < 1e-12);
        let mut tail = 0.0;
        assert_eq!(ql_distribution_tail(d, 2.0, &mut tail), QlStatus::Ok);
        assert!((tail - 0.5f64.powf(2.5)).abs() < 1e-12);

        let rng = ql_rng_new(1, 2);
        let mut x = 0.0;
        assert_eq!(ql_distribution_sample(d, rng, &mut x), QlStatus::Ok);
        assert!(x >= 1.0);
        ql_rng_free(rng);
        ql_distribution_free(d);
    }
}

#[test]
fn parse_errors_are_reported() {
    let text = CString::new("pareto(2.5)").unwrap();
    let mut d = ptr::null_mut();
    let status = unsafe { ql_distribution_parse(text.as_ptr(), &mut d) };
    assert_ne!(status, QlStatus::Ok);
    assert!(d.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { ql_distribution_parse(ptr::null(), &mut d) },
        QlStatus::NullPointer
    );
    assert!(last_error().contains("text"));
}

#[test]
fn streams_match_the_core() {
    let rng = ql_rng_new(9, 4);
    let mut core = queuelab::stochastic::RngStream::new(9, 4);
    for _ in 0..10 {
        let mut u = 0.0;
        assert_eq!(unsafe { ql_rng_uniform(rng, &mut u) }, QlStatus::Ok);
        assert_eq!(u, core.uniform());
    }
    unsafe { ql_rng_free(rng) };
}

#[test]
fn single_server_steps_agree() {
    for (w, s, t) in [(0.0, 1.0, 2.0), (3.0, 0.5, 1.0), (1.0, 1.0, 2.0)] {
        let mut v = [w];
        assert_eq!(unsafe { ql_kw_step(v.as_mut_ptr(), 1, s, t) }, QlStatus::Ok);
        assert_eq!(v[0], ql_lindley_step(w, s, t));
    }
    let mut v = [2.0, 1.0];
    assert_eq!(
        unsafe { ql_kw_step(v.as_mut_ptr(), 2, 1.0, 1.0) },
        QlStatus::InvalidArgument
    );
    let mut v = [1.0, 2.0];
    assert_eq!(unsafe { ql_kw_step(v.as_mut_ptr(), 2, 1.0, 0.5) }, QlStatus::Ok);
    assert_eq!(v, [1.5, 1.5]);
}

#[test]
fn moment_verdicts() {
    let text = CString::new("pareto(2.5,1)").unwrap();
    let mut d = ptr::null_mut();
    unsafe {
        ql_distribution_parse(text.as_ptr(), &mut d);
        let mut v = QlMomentVerdict::Unknown;
        assert_eq!(ql_moment_check(d, 0.5, 2, 2.9, &mut v), QlStatus::Ok);
        assert_eq!(v, QlMomentVerdict::Finite);
        assert_eq!(ql_moment_check(d, 0.5, 2, 3.0, &mut v), QlStatus::Ok);
        assert_eq!(v, QlMomentVerdict::Infinite);
        assert_eq!(ql_moment_check(d, 1.0, 2, 1.0, &mut v), QlStatus::Ok);
        assert_eq!(v, QlMomentVerdict::IntegerRhoOpen);
        assert_eq!(ql_moment_check(d, 2.5, 2, 1.0, &mut v), QlStatus::InvalidArgument);
        ql_distribution_free(d);
    }
}

#[test]
fn config_validate_and_run() {
    let bad = CString::new("[experiment]\nmodel = ggm\nseed = 1\n[params]\nservers = 0\n").unwrap();
    assert_eq!(
        unsafe { ql_config_validate(bad.as_ptr(), ptr::null()) },
        QlStatus::Config
    );
    let msg = last_error();
    assert!(msg.contains("servers") && msg.contains("service"), "{msg}");

    let good = CString::new(
        "[experiment]\nmodel = gg1\nseed = 1\nreplications = 2\n[params]\nservice = exp(2)\ninterarrival = exp(1)\ncustomers = 100\n",
    )
    .unwrap();
    assert_eq!(unsafe { ql_config_validate(good.as_ptr(), ptr::null()) }, QlStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut json = ptr::null_mut();
    unsafe {
        assert_eq!(
            ql_run_config(good.as_ptr(), ptr::null(), out.as_ptr(), &mut json),
            QlStatus::Ok
        );
        let manifest: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(manifest["outputs"][0]["rows"], 6);
        ql_string_free(json);
    }
    let manifest = CString::new(dir.path().join("manifest.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ql_verify_manifest(manifest.as_ptr()) }, QlStatus::Ok);
    std::fs::write(dir.path().join("gg1.csv"), "tampered\n").unwrap();
    assert_eq!(unsafe { ql_verify_manifest(manifest.as_ptr()) }, QlStatus::Manifest);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ql_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/queuelab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ql_kw_step", "ql_run_config", "QL_STATUS_OK", "ql_last_error_message"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"queuelab.h\"\nint main(void) { double w[1] = {0.0}; return ql_kw_step(w, 1, 1.0, 2.0) == QL_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
