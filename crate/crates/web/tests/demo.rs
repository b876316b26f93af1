use partial_dp_web::{epsilon_curve, heavy_hitters_demo, projection_demo};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn curve_matches_census_values() {
    let v = parse(epsilon_curve(vec![1.02, 2.63], 1e-6, 4).unwrap());
    let eps: Vec<f64> = v["points"].as_array().unwrap().iter().map(|p| p["epsilon_tight"].as_f64().unwrap()).collect();
    assert!((eps[0] - 7.85).abs() < 0.05 && (eps[1] - 13.8).abs() < 0.05, "{eps:?}");
}

#[test]
fn heavy_hitters_recovers_planted_records() {
    let v = parse(heavy_hitters_demo(12, 4000, vec![0.4, 0.3], 2.0, 0.05, 3).unwrap());
    for p in v["planted"].as_array().unwrap() {
        let (c, e) = (p["count"].as_f64().unwrap(), p["estimate"].as_f64().unwrap());
        assert!((c - e).abs() < 0.05 * 4000.0, "{p}");
    }
    assert_eq!(v, parse(heavy_hitters_demo(12, 4000, vec![0.4, 0.3], 2.0, 0.05, 3).unwrap()));
}

#[test]
fn projection_error_stays_under_sigma_squared() {
    let v = parse(projection_demo(5, 2, 500, true, vec![0.01, 0.05], 1).unwrap());
    for p in v["points"].as_array().unwrap() {
        let s = p["sigma"].as_f64().unwrap();
        assert!(p["mse"].as_f64().unwrap() < 4.0 * s * s, "{p}");
    }
}
