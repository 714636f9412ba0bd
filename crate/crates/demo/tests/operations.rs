use hte_demo::{exponents, exponents_json, regime, regime_json, simulate, simulate_json};

#[test]
fn simulation_is_reproducible_and_complete() {
    let a = simulate_json(300, 2.0, 4, "selected,knn").unwrap();
    let b = simulate_json(300, 2.0, 4, "selected,knn").unwrap();
    assert_eq!(a, b);
    let sim = simulate(300, 2.0, 4, "selected,knn").unwrap();
    assert_eq!(sim.curves.len(), 2);
    assert_eq!(sim.control.len(), 300);
    assert_eq!(sim.treatment.len(), 300);
    for c in &sim.curves {
        assert_eq!(c.values.len(), sim.x.len());
        assert!(c.rmse.is_finite() && c.rmse > 0.0);
    }
    assert!(sim.curves[0].params.starts_with("m1="));
}

#[test]
fn regime_moves_with_noise() {
    let quiet = regime(100_000, 1, 0.5, 1.0, 2.0, 0.0).unwrap();
    let loud = regime(100_000, 1, 0.5, 1.0, 2.0, 10.0).unwrap();
    assert_eq!(quiet.regime.as_str(), "low_noise");
    assert_eq!(loud.regime.as_str(), "high_noise");
    assert!(loud.m2 > quiet.m2);
    let json: serde_json::Value =
        serde_json::from_str(&regime_json(1000, 1, 0.5, 1.0, 1.0, 0.06).unwrap()).unwrap();
    assert!(json["m1"].as_u64().unwrap() >= json["m2"].as_u64().unwrap());
}

#[test]
fn exponent_curve_is_monotone_in_noise() {
    let curve = exponents(1, 0.8, 1.0, 41).unwrap();
    assert_eq!(curve.c.first(), Some(&-1.0));
    assert_eq!(curve.c.last(), Some(&1.0));
    for w in curve.random.windows(2) {
        assert!(w[1] >= w[0]);
    }
    for w in curve.fixed.windows(2) {
        assert!(w[1] >= w[0]);
    }
    assert!(exponents_json(1, 1.0, 0.5, 10).is_err());
    assert!(exponents_json(1, 0.5, 1.0, 1).is_err());
}

#[test]
fn bad_estimator_name_is_reported() {
    let err = simulate_json(100, 1.0, 0, "selected,magic").unwrap_err();
    assert!(err.contains("magic"));
}
