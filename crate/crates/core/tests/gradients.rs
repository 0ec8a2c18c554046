//! Finite-difference oracle for every differentiable op exposed by the graph.
//! Central differences in f64, relative error against the analytic backward pass.

use advaug_core::gradcheck::{run_suite, SUITE_OPS};

#[test]
fn full_suite_passes_at_tolerance() {
    let reports = run_suite(2024, 5, None, None).unwrap();
    assert_eq!(reports.len(), SUITE_OPS.len());
    let total_cases: usize = reports.iter().map(|r| r.cases).sum();
    assert!(total_cases >= 100, "only {total_cases} randomized cases");
    for r in &reports {
        assert!(
            r.pass && r.max_rel_err < 1e-4,
            "{}: max rel err {:.3e}",
            r.op,
            r.max_rel_err
        );
    }
}

#[test]
fn spatial_path_survives_heavier_sampling() {
    // the grid/sampler/composite path is where analytic mistakes hide;
    // give it more randomized cases than the sweep above
    for op in ["affine_grid", "bilinear_sample", "stn_composite"] {
        let reports = run_suite(7, 20, Some(op), None).unwrap();
        assert_eq!(reports.len(), 1, "filter {op} should match one op");
        assert!(reports[0].pass, "{op} max rel err {:.3e}", reports[0].max_rel_err);
    }
}

#[test]
fn injected_gradient_fault_is_caught() {
    // sanity-check the checker itself: a deliberately wrong backward must fail
    for op in ["matmul", "log_softmax", "bilinear_sample"] {
        let reports = run_suite(11, 3, Some(op), Some(op)).unwrap();
        let hit = reports.iter().find(|r| r.op == op).unwrap();
        assert!(!hit.pass, "perturbed {op} slipped through the oracle");
    }
}
