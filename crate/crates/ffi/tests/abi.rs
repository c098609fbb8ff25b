use std::ffi::{CStr, CString};
use std::ptr;

use losscorr_ffi::*;

fn last_error() -> String {
    let p = lc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn symmetric(classes: usize, level: f64) -> *mut LcNoiseMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { lc_noise_matrix_symmetric(classes, level, &mut m) }, LcStatus::Ok);
    m
}

#[test]
fn noise_matrix_round_trip() {
    let entries = [0.8, 0.2, 0.3, 0.7];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(lc_noise_matrix_new(entries.as_ptr(), 2, &mut m), LcStatus::Ok);
        assert_eq!(lc_noise_matrix_classes(m), 2);
        let mut out = [0.0; 4];
        assert_eq!(lc_noise_matrix_entries(m, out.as_mut_ptr(), 4), LcStatus::Ok);
        assert_eq!(out, entries);
        let mut inv = [0.0; 4];
        assert_eq!(lc_noise_matrix_inverse(m, 0.0, inv.as_mut_ptr(), 4), LcStatus::Ok);
        assert!((inv[0] - 1.4).abs() < 1e-12 && (inv[1] + 0.4).abs() < 1e-12);
        assert_eq!(lc_noise_matrix_inverse(m, 0.0, inv.as_mut_ptr(), 3), LcStatus::Dimension);
        lc_noise_matrix_free(m);
    }
}

#[test]
fn invalid_matrix_sets_error() {
    let entries = [0.5, 0.6, 0.5, 0.5];
    let mut m = ptr::null_mut();
    let status = unsafe { lc_noise_matrix_new(entries.as_ptr(), 2, &mut m) };
    assert_eq!(status, LcStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("row"), "{}", last_error());
}

#[test]
fn singular_inverse_reports_singular() {
    let m = symmetric(2, 0.5);
    let mut inv = [0.0; 4];
    unsafe {
        assert_eq!(lc_noise_matrix_inverse(m, 0.0, inv.as_mut_ptr(), 4), LcStatus::Singular);
        assert_eq!(lc_noise_matrix_inverse(m, 0.1, inv.as_mut_ptr(), 4), LcStatus::Ok);
        let mut loss = ptr::null_mut();
        assert_eq!(lc_loss_new(LcLossMode::Backward, m, 0.0, &mut loss), LcStatus::Singular);
        lc_noise_matrix_free(m);
    }
}

#[test]
fn corrupt_is_seeded() {
    let m = symmetric(3, 0.4);
    let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
    let (mut a, mut b) = (vec![0usize; 300], vec![0usize; 300]);
    unsafe {
        assert_eq!(lc_noise_matrix_corrupt(m, labels.as_ptr(), 300, 5, a.as_mut_ptr()), LcStatus::Ok);
        assert_eq!(lc_noise_matrix_corrupt(m, labels.as_ptr(), 300, 5, b.as_mut_ptr()), LcStatus::Ok);
        lc_noise_matrix_free(m);
    }
    assert_eq!(a, b);
    assert!(a.iter().any(|&y| y != 0) && a.iter().all(|&y| y < 3));
}

#[test]
fn losses_agree_at_identity() {
    let m = symmetric(3, 0.0);
    let logits = [0.3, -1.2, 2.0];
    let mut values = [0.0; 3];
    let mut grads = [[0.0; 3]; 3];
    unsafe {
        for (k, mode) in [LcLossMode::Plain, LcLossMode::Backward, LcLossMode::Forward]
            .into_iter()
            .enumerate()
        {
            let mut loss = ptr::null_mut();
            let noise = if mode == LcLossMode::Plain { ptr::null() } else { m as *const _ };
            assert_eq!(lc_loss_new(mode, noise, 0.0, &mut loss), LcStatus::Ok);
            assert_eq!(
                lc_loss_evaluate(loss, 1, logits.as_ptr(), 3, &mut values[k], grads[k].as_mut_ptr()),
                LcStatus::Ok
            );
            lc_loss_free(loss);
        }
        lc_noise_matrix_free(m);
    }
    assert_eq!(values[0], values[1]);
    assert_eq!(values[0], values[2]);
    assert_eq!(grads[0], grads[1]);
}

#[test]
fn loss_requires_matrix_for_corrections() {
    let mut loss = ptr::null_mut();
    let s = unsafe { lc_loss_new(LcLossMode::Forward, ptr::null(), 0.0, &mut loss) };
    assert_eq!(s, LcStatus::NullPointer);
    let mut plain = ptr::null_mut();
    unsafe {
        assert_eq!(lc_loss_new(LcLossMode::Plain, ptr::null(), 0.0, &mut plain), LcStatus::Ok);
        let mut v = 0.0;
        let z = [0.0, 0.0];
        assert_eq!(lc_loss_evaluate(plain, 2, z.as_ptr(), 2, &mut v, ptr::null_mut()), LcStatus::InvalidArgument);
        assert_eq!(lc_loss_evaluate(plain, 0, z.as_ptr(), 2, &mut v, ptr::null_mut()), LcStatus::Ok);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        lc_loss_free(plain);
    }
}

#[test]
fn network_checkpoint_logits() {
    let net = losscorr::MlpNetwork::init(&[3, 4, 2], losscorr::net::InitScheme::HeRelu, 9).unwrap();
    let json = CString::new(net.to_json().unwrap()).unwrap();
    let x = [0.5, -0.25, 1.0];
    let mut handle = ptr::null_mut();
    let mut out = [0.0; 2];
    unsafe {
        assert_eq!(lc_network_from_json(json.as_ptr(), &mut handle), LcStatus::Ok);
        assert_eq!(lc_network_input_dim(handle), 3);
        assert_eq!(lc_network_output_dim(handle), 2);
        assert_eq!(lc_network_logits(handle, x.as_ptr(), 3, out.as_mut_ptr(), 2), LcStatus::Ok);
        assert_eq!(lc_network_logits(handle, x.as_ptr(), 2, out.as_mut_ptr(), 2), LcStatus::Dimension);
        lc_network_free(handle);
    }
    assert_eq!(out.to_vec(), net.logits(&x));

    let bad = CString::new("{\"layer_dims\": [1]}").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lc_network_from_json(bad.as_ptr(), &mut h) }, LcStatus::Parse);
}

#[test]
fn estimate_from_one_hot_scores() {
    let scores = [
        0.5, 0.5, //
        1.0, 0.0, //
        0.0, 1.0,
    ];
    let mut m = ptr::null_mut();
    let mut out = [0.0; 4];
    unsafe {
        assert_eq!(
            lc_estimate(scores.as_ptr(), 3, 2, LcEstimatorMode::Argmax, 0.97, true, &mut m),
            LcStatus::Ok
        );
        lc_noise_matrix_entries(m, out.as_mut_ptr(), 4);
        lc_noise_matrix_free(m);
        assert_eq!(
            lc_estimate(scores.as_ptr(), 1, 2, LcEstimatorMode::Argmax, 0.97, true, &mut m),
            LcStatus::InvalidArgument
        );
    }
    assert_eq!(out, [1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn null_output_is_rejected() {
    let s = unsafe { lc_noise_matrix_symmetric(2, 0.1, ptr::null_mut()) };
    assert_eq!(s, LcStatus::NullPointer);
    unsafe {
        lc_noise_matrix_free(ptr::null_mut());
        lc_loss_free(ptr::null_mut());
        lc_network_free(ptr::null_mut());
    }
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(lc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
