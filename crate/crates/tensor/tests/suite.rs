use scs_tensor::check::{check_case, primitive_suite};

#[test]
fn every_primitive_in_the_suite_passes() {
    for case in primitive_suite() {
        let worst = check_case(&case, 0, 20, None).unwrap();
        assert!(worst < 1e-6, "{}: {worst:e}", case.name);
    }
}

#[test]
fn corrupted_adjoint_is_caught_for_every_primitive() {
    for case in primitive_suite() {
        let worst = check_case(&case, 0, 3, Some(case.name)).unwrap();
        assert!(
            worst > 1e-3,
            "{} fault went unnoticed: {worst:e}",
            case.name
        );
    }
}

#[test]
fn suite_covers_distinct_ops() {
    let names: Vec<_> = primitive_suite().iter().map(|c| c.name).collect();
    let mut unique = names.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), names.len());
    assert!(names.len() >= 22);
}
