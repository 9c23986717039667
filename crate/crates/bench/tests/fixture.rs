use thpi_bench::fixture;

#[test]
fn fixture_is_centered_and_deterministic() {
    let (t, s) = fixture(50, 8, 6, 1);
    assert_eq!((t.rows(), t.cols(), s.cols()), (50, 8, 6));
    assert!(t.values().row_mean().iter().all(|m| m.abs() < 1e-12));
    assert_eq!(fixture(50, 8, 6, 1).0, t);
}
