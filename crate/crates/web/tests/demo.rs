use hydrostat_web::{try_eigenmode_decay, try_skew_residual, Demo};

#[test]
fn demo_steps_and_reports_finite_slices() {
    let mut d = Demo::try_new(8, 1, 0.5).unwrap();
    assert_eq!((d.nx(), d.ny(), d.nz()), (8, 8, 4));
    let t = d.try_step(5).unwrap();
    assert!((t - 5.0 * 5e-3).abs() < 1e-12);
    assert_eq!(d.steps(), 5);
    let temp = d.temperature_slice(3);
    let speed = d.speed_slice(99);
    assert_eq!(temp.len(), 64);
    assert_eq!(speed.len(), 64);
    assert!(temp.iter().chain(&speed).all(|x| x.is_finite()));
    assert!(speed.iter().all(|s| *s >= 0.0));
    let row = d.try_ledger_row().unwrap();
    assert_eq!(row.len(), 7);
    assert_eq!(row[0], d.time());
    assert!(row.iter().all(|x| x.is_finite()));
}

#[test]
fn eigenmode_decay_matches_exact_rate() {
    let r = try_eigenmode_decay(16, 0.2).unwrap();
    assert!(r[2] < 1e-3, "{r:?}");
    assert!(r[0] < 1.0);
}

#[test]
fn advection_is_skew() {
    let r = try_skew_residual(8, 3).unwrap();
    assert!(r < 1e-10, "{r}");
}
