use pfaffpoint::selftest::{run_selftest, Fault};

#[test]
fn clean_build_passes_every_check() {
    let r = run_selftest(Fault::None);
    print!("{}", r.table());
    assert!(r.all_passed());
}

#[test]
fn flipped_remainder_fails_closed_form_check() {
    let r = run_selftest(Fault::FlipRemainder);
    print!("{}", r.table());
    assert!(!r.check("closed_form_vs_sum").unwrap().passed);
    assert!(r.check("pfaffian_squared_is_det").unwrap().passed);
}
