use orbits_web::{classify_ridge_json, profile_json, two_ridge_sweep_json};
use serde_json::Value;

#[test]
fn ridge_profile_has_its_minimum_at_zero() {
    let v: Value = serde_json::from_str(&profile_json("", 1.0, 24).unwrap()).unwrap();
    let f: Vec<f64> = v["F"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(f.len(), 24);
    let j = (0..f.len()).min_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
    assert_eq!(j, 0);
}

#[test]
fn bad_model_json_is_an_error() {
    assert!(profile_json("{ not json", 1.0, 16).is_err());
}

#[test]
fn ridge_classification_is_hyperbolic() {
    let v: Value = serde_json::from_str(&classify_ridge_json(0.1, 1.0).unwrap()).unwrap();
    assert_eq!(v["minima"][0]["verdict"], "Hyperbolic");
    assert_eq!(v["minima"][0]["criteria_agree"], true);
}

#[test]
fn two_ridge_sweep_reports_the_exchange() {
    let v: Value = serde_json::from_str(&two_ridge_sweep_json(1.1, 1.3, 0.05).unwrap()).unwrap();
    let c = v["crossings"].as_array().unwrap();
    assert_eq!(c.len(), 1);
    assert!((c[0]["e_star"].as_f64().unwrap() - 1.2).abs() < 1e-6);
}
