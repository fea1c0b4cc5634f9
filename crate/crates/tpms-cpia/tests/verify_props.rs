use tpms_cpia::verify::{run_verification, VerifyConfig};

#[test]
fn default_suite_passes_every_check() {
    let report = run_verification(&VerifyConfig::default());
    for c in &report.checks {
        assert!(c.pass, "{} failed: {}", c.name, c.detail);
    }
    assert!(report.all_pass);
    assert_eq!(report.seed, 42);
}

#[test]
fn tampered_transform_fails_exactly_the_eigen_check() {
    let cfg = VerifyConfig { tamper_t1d: true, ..VerifyConfig::default() };
    let report = run_verification(&cfg);
    assert!(!report.all_pass);
    for c in &report.checks {
        if c.name == "transform_eigen_moduli_unit" {
            assert!(!c.pass, "tamper hook did not trip: {}", c.detail);
        }
    }
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let a = run_verification(&VerifyConfig::default()).to_json();
    let b = run_verification(&VerifyConfig::default()).to_json();
    assert_eq!(a.as_bytes(), b.as_bytes());
    let other = run_verification(&VerifyConfig { seed: 7, ..VerifyConfig::default() }).to_json();
    assert!(other.contains("\"seed\": 7"));
}

#[test]
fn sample_count_is_reflected_in_details() {
    let cfg = VerifyConfig { samples: 25, ..VerifyConfig::default() };
    let report = run_verification(&cfg);
    assert!(report.all_pass);
    let fd = report
        .checks
        .iter()
        .find(|c| c.name == "first_derivatives_match_fd")
        .expect("check present");
    assert!(fd.detail.contains("25 samples"), "detail: {}", fd.detail);
}
