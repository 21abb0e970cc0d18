//! Convolution kernels against direct nested-loop definitions.

mod support;

const CASES: usize = 80;

#[test]
fn forward_matches_nested_loops() {
    let worst = support::forward_worst(101, CASES);
    assert!(worst <= 1e-12, "max deviation {worst}");
}

#[test]
fn transposed_matches_scatter_definition() {
    let (worst, tested) = support::transposed_worst(202, CASES);
    assert!(tested >= 50, "only {tested} valid geometries");
    assert!(worst <= 1e-12, "max deviation {worst}");
}

#[test]
fn adjoint_identity() {
    let worst = support::adjoint_worst(303, CASES);
    assert!(worst <= 1e-10, "adjoint mismatch {worst}");
}
