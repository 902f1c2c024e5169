use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use wigner_ldp_ffi::*;

fn named(name: &str) -> *mut WlModel {
    let name = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { wl_model_from_name(name.as_ptr(), &mut m) }, WlStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let len = unsafe { wl_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; len + 1];
    unsafe { wl_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned()
}

#[test]
fn semicircle_through_the_c_api() {
    let m = named("constant");
    let mut edge = 0.0;
    assert_eq!(unsafe { wl_model_edge(m, &mut edge) }, WlStatus::Ok);
    assert!((edge - 2.0).abs() < 1e-6);

    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { wl_stieltjes(m, 3.0, 0.0, &mut re, &mut im) }, WlStatus::Ok);
    assert!((re - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-10 && im == 0.0);

    // m(2i) = i(1 - √2) for the semicircle
    assert_eq!(unsafe { wl_stieltjes(m, 0.0, 2.0, &mut re, &mut im) }, WlStatus::Ok);
    assert!(re.abs() < 1e-10 && (im - (1.0 - 2f64.sqrt())).abs() < 1e-10);

    let (mut rate, mut theta) = (0.0, 0.0);
    let mut psi = [0.0];
    let st = unsafe { wl_rate_function(m, 3.0, &mut rate, &mut theta, psi.as_mut_ptr(), 1) };
    assert_eq!(st, WlStatus::Ok);
    // x√(x²−4)/4 − ln((x+√(x²−4))/2) at x = 3
    let goe = 0.75 * 5f64.sqrt() - ((3.0 + 5f64.sqrt()) / 2.0).ln();
    assert!((rate - goe).abs() < 1e-6, "{rate} vs {goe}");
    assert_eq!(psi[0], 1.0);
    assert!(theta > 0.0);

    assert_eq!(unsafe { wl_rate_function(m, 1.0, &mut rate, ptr::null_mut(), ptr::null_mut(), 0) }, WlStatus::Ok);
    assert!(rate.is_infinite());
    unsafe { wl_model_free(m) };
}

#[test]
fn toml_profile_and_block_outputs() {
    let doc = CString::new("kind = \"block\"\nalpha = 0.5\nsigma1 = 1.0\nsigma2 = 4.0\n").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { wl_model_from_toml(doc.as_ptr(), &mut m) }, WlStatus::Ok);
    let mut p = 0usize;
    assert_eq!(unsafe { wl_model_blocks(m, &mut p) }, WlStatus::Ok);
    assert_eq!(p, 2);

    let mut re = [0.0; 2];
    let mut im = [0.0; 2];
    assert_eq!(unsafe { wl_dyson_solve(m, 0.0, 1.0, re.as_mut_ptr(), im.as_mut_ptr(), 2) }, WlStatus::Ok);
    assert!(im.iter().all(|v| *v < 0.0), "Herglotz: {im:?}");

    let st = unsafe { wl_dyson_solve(m, 0.0, 1.0, re.as_mut_ptr(), im.as_mut_ptr(), 1) };
    assert_eq!(st, WlStatus::BufferTooSmall);
    assert!(last_error().contains("needed"));

    let mut edge = 0.0;
    unsafe { wl_model_edge(m, &mut edge) };
    // the second block, of variance 4 on half the indices, sets the edge at 2√2
    assert!((edge - 2.0 * 2f64.sqrt()).abs() < 1e-5, "{edge}");
    unsafe { wl_model_free(m) };
}

#[test]
fn errors_are_reported_not_raised() {
    let mut m = ptr::null_mut();
    let bad = CString::new("no-such-profile").unwrap();
    assert_eq!(unsafe { wl_model_from_name(bad.as_ptr(), &mut m) }, WlStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let bad = CString::new("kind = \"wishart\"\nalpha = -1\n").unwrap();
    assert_eq!(unsafe { wl_model_from_toml(bad.as_ptr(), &mut m) }, WlStatus::InvalidArgument);
    assert_eq!(unsafe { wl_model_from_toml(ptr::null(), &mut m) }, WlStatus::NullPointer);

    let mut edge = 0.0;
    assert_eq!(unsafe { wl_model_edge(ptr::null(), &mut edge) }, WlStatus::NullPointer);

    let m = named("wishart");
    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { wl_stieltjes(m, 0.5, 0.0, &mut re, &mut im) }, WlStatus::BelowEdge);
    assert_eq!(unsafe { wl_stieltjes(m, 0.5, -1.0, &mut re, &mut im) }, WlStatus::InvalidArgument);
    assert_eq!((re, im), (0.0, 0.0), "outputs untouched on failure");

    assert_eq!(unsafe { wl_stieltjes(m, 0.5, 1.0, &mut re, &mut im) }, WlStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { wl_model_free(m) };
    unsafe { wl_model_free(ptr::null_mut()) };
}

#[test]
fn error_message_truncates_safely() {
    let mut m = ptr::null_mut();
    let bad = CString::new("nope").unwrap();
    unsafe { wl_model_from_name(bad.as_ptr(), &mut m) };
    let full = unsafe { wl_last_error_message(ptr::null_mut(), 0) };
    let mut small = [1 as c_char; 4];
    let reported = unsafe { wl_last_error_message(small.as_mut_ptr(), small.len()) };
    assert_eq!(reported, full);
    assert_eq!(small[3], 0);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 3);
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(wl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_is_valid_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/wigner_ldp.h");
    let text = std::fs::read_to_string(&header).expect("build script writes the header");
    for sym in [
        "wl_model_from_name",
        "wl_model_from_toml",
        "wl_model_free",
        "wl_model_edge",
        "wl_stieltjes",
        "wl_dyson_solve",
        "wl_rate_function",
        "wl_last_error_message",
        "typedef struct WlModel WlModel",
        "WL_STATUS_BELOW_EDGE = 3",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
        else {
            eprintln!("{compiler} not found; skipping the compile check");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
