use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use smm_ffi::*;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn last_error() -> String {
    unsafe { CStr::from_ptr(smm_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn surface_symbol_pinned_value() {
    let (mut re, mut im) = (0.0, 0.0);
    let y = [0.25];
    let st = unsafe { smm_surface_symbol(y.as_ptr(), 1, 5.0, 0.0, SmmGeometry::Full, &mut re, &mut im) };
    assert_eq!(st, SmmStatus::Ok);
    assert!((re + 1.0 / 21f64.sqrt()).abs() < 1e-12 && im.abs() < 1e-12);
    let st = unsafe { smm_surface_symbol(y.as_ptr(), 1, 5.0, 0.0, SmmGeometry::Half, &mut re, &mut im) };
    assert_eq!(st, SmmStatus::Ok);
    assert!((re + (5.0 - 21f64.sqrt()) / 2.0).abs() < 1e-12);
    assert_eq!(last_error(), "");
}

#[test]
fn branch_point_reports_status_and_message() {
    let (mut re, mut im) = (0.0, 0.0);
    let y = [0.25];
    let st = unsafe { smm_surface_symbol(y.as_ptr(), 1, 1.0, 0.0, SmmGeometry::Full, &mut re, &mut im) };
    assert_eq!(st, SmmStatus::BranchPoint);
    assert!(last_error().starts_with("BranchPoint"), "{}", last_error());
}

#[test]
fn null_pointers_are_rejected() {
    let mut re = 0.0;
    let st = unsafe { smm_surface_symbol(ptr::null(), 1, 5.0, 0.0, SmmGeometry::Full, &mut re, ptr::null_mut()) };
    assert_eq!(st, SmmStatus::NullPointer);
    let st = unsafe { smm_model_new(1.0, &GOLDEN, 1, 0.0, SmmGeometry::Full, ptr::null_mut()) };
    assert_eq!(st, SmmStatus::NullPointer);
    assert!(last_error().contains("out_model"));
    unsafe {
        smm_model_free(ptr::null_mut());
        smm_spectrum_free(ptr::null_mut());
        smm_cf_free(ptr::null_mut());
        smm_string_free(ptr::null_mut());
    }
}

#[test]
fn model_lifecycle_and_shift_identity() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { smm_model_new(1.0, &GOLDEN, 1, 0.1, SmmGeometry::Full, &mut m) },
        SmmStatus::Ok
    );
    let mut v = 0.0;
    let n = [3i64];
    assert_eq!(
        unsafe { smm_model_surface_function(m, n.as_ptr(), 1, &mut v) },
        SmmStatus::Ok
    );
    assert!((v - (std::f64::consts::PI * (3.0 * GOLDEN + 0.1)).tan()).abs() < 1e-9);
    let bad = [1i64, 2];
    assert_eq!(
        unsafe { smm_model_surface_function(m, bad.as_ptr(), 2, &mut v) },
        SmmStatus::InvalidParameter
    );
    unsafe { smm_model_free(m) };

    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { smm_model_new(0.0, &GOLDEN, 1, 0.1, SmmGeometry::Full, &mut m) },
        SmmStatus::InvalidParameter
    );
    assert!(m.is_null());
}

#[test]
fn predictions_match_the_box() {
    let mut pred = ptr::null_mut();
    let st = unsafe { smm_predict(1.0, GOLDEN, 0.0, SmmGeometry::Full, -15, 15, 4.2, 8.0, &mut pred) };
    assert_eq!(st, SmmStatus::Ok);
    let mut n = 0;
    unsafe { smm_spectrum_len(pred, &mut n) };
    assert_eq!(n, 2);

    let mut m = ptr::null_mut();
    unsafe { smm_model_new(1.0, &GOLDEN, 1, 0.0, SmmGeometry::Full, &mut m) };
    let mut fv = ptr::null_mut();
    assert_eq!(unsafe { smm_fv_eigenvalues(m, 24, 4.2, 8.0, &mut fv) }, SmmStatus::Ok);
    let mut nf = 0;
    unsafe { smm_spectrum_len(fv, &mut nf) };
    for i in 0..n {
        let (mut e, mut k) = (0.0, 0);
        assert_eq!(unsafe { smm_spectrum_get(pred, i, &mut e, &mut k) }, SmmStatus::Ok);
        let hit = (0..nf).any(|j| {
            let (mut ef, mut kf) = (0.0, 0);
            unsafe { smm_spectrum_get(fv, j, &mut ef, &mut kf) };
            (ef - e).abs() < 1e-2 && kf == k
        });
        assert!(hit, "label {k} at {e} has no box partner");
    }
    assert_eq!(
        unsafe { smm_spectrum_get(pred, n, ptr::null_mut(), ptr::null_mut()) },
        SmmStatus::InvalidParameter
    );
    unsafe {
        smm_spectrum_free(pred);
        smm_spectrum_free(fv);
        smm_model_free(m);
    }
}

#[test]
fn resolvent_and_zeta0() {
    let mut m = ptr::null_mut();
    unsafe { smm_model_new(1.0, &GOLDEN, 1, 0.1, SmmGeometry::Full, &mut m) };
    let mut err = 1.0;
    assert_eq!(
        unsafe { smm_resolvent_check(m, 30, 10, 5.0, -1.0, &mut err) },
        SmmStatus::Ok
    );
    assert!(err < 1e-5, "{err}");
    assert_eq!(
        unsafe { smm_resolvent_check(m, 30, 10, 5.0, 1.0, &mut err) },
        SmmStatus::SeriesDiverges
    );
    unsafe { smm_model_free(m) };

    let mut z = 0.0;
    assert_eq!(
        unsafe { smm_zeta0(6.0, 1.0, SmmGeometry::Full, 2048, &mut z) },
        SmmStatus::Ok
    );
    assert!(z > 0.0 && z < 0.5);
    assert_ne!(
        unsafe { smm_zeta0(3.0, 1.0, SmmGeometry::Full, 2048, &mut z) },
        SmmStatus::Ok
    );
}

#[test]
fn continued_fractions() {
    let golden = CString::new("golden").unwrap();
    let mut cf = ptr::null_mut();
    assert_eq!(
        unsafe { smm_cf_expand(golden.as_ptr(), 30, 4096, &mut cf) },
        SmmStatus::Ok
    );
    let (mut depth, mut beta, mut ok) = (0usize, 1.0, false);
    assert_eq!(
        unsafe { smm_cf_summary(cf, &mut depth, &mut beta, &mut ok) },
        SmmStatus::Ok
    );
    assert_eq!(depth, 30);
    assert!(ok, "identities");
    assert!(beta < 0.05, "{beta}");
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { smm_cf_to_json(cf, &mut json) }, SmmStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"a\""), "{text}");
    unsafe {
        smm_string_free(json);
        smm_cf_free(cf);
    }

    let beta = CString::new("beta:1.0").unwrap();
    let mut cf = ptr::null_mut();
    assert_eq!(
        unsafe { smm_cf_expand(beta.as_ptr(), 20, 4096, &mut cf) },
        SmmStatus::OverflowBudget
    );
    assert!(cf.is_null());
    let junk = CString::new("pi").unwrap();
    assert_eq!(
        unsafe { smm_cf_expand(junk.as_ptr(), 5, 4096, &mut cf) },
        SmmStatus::InvalidParameter
    );
    let bytes = [0xffu8, 0];
    assert_eq!(
        unsafe { smm_cf_expand(bytes.as_ptr().cast(), 5, 4096, &mut cf) },
        SmmStatus::InvalidUtf8
    );
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(smm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("smm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "smm_last_error_message",
        "SMM_STATUS_PANIC",
        "typedef struct SmmModel SmmModel",
        "size_t d",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"smm.h\"\nint main(void) { SmmModel *m = 0; double a = 0.6; \
         return smm_model_new(1.0, &a, 1, 0.0, SMM_GEOMETRY_FULL, &m) == SMM_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let Ok(status) = Command::new(compiler)
            .args(&extra)
            .arg("-fsyntax-only")
            .arg("-Wall")
            .arg("-Werror")
            .arg("-I")
            .arg(dir.join("include"))
            .arg(&src)
            .status()
        else {
            eprintln!("{compiler} not found; skipping");
            continue;
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
