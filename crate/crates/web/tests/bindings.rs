use qidlaw_web::{bits_needed_json, curve_json, defaults_json, token_budget_json};
use serde_json::{json, Value};

fn defaults() -> Value {
    serde_json::from_str(&defaults_json()).unwrap()
}

#[test]
fn defaults_are_the_bundled_constants() {
    let d = defaults();
    assert_eq!(d["qid"]["gamma"], 5.4967);
    assert_eq!(d["loss16"]["d_c"], 7.63e10);
}

#[test]
fn curve_flags_two_bit_collapse() {
    let d = defaults();
    let req = json!({
        "qid": d["qid"], "loss16": d["loss16"], "sizes": [7e9, 4.05e11], "bits": [2, 4],
        "tokens_min": 1e9, "tokens_max": 1e14, "steps": 5, "vocab": 128256
    });
    let rows: Vec<Value> = serde_json::from_str(&curve_json(&req.to_string()).unwrap()).unwrap();
    assert_eq!(rows.len(), 20);
    let at = |n: f64, bits: f64| {
        rows.iter()
            .find(|r| r["n_nonembed"] == n && r["bits"] == bits && r["tokens"] == 1e14)
            .unwrap()
    };
    assert_eq!(at(7e9, 2.0)["worse_than_random"], true);
    assert_eq!(at(4.05e11, 4.0)["worse_than_random"], false);
    let loss_q = at(4.05e11, 4.0)["loss_q"].as_f64().unwrap();
    assert!((loss_q - 2.7519).abs() < 1e-3);
}

#[test]
fn curve_without_loss_law_has_null_losses() {
    let d = defaults();
    let req = json!({"qid": d["qid"], "sizes": [1e9], "bits": [4], "tokens_min": 1e12, "tokens_max": 1e13, "steps": 2});
    let rows: Vec<Value> = serde_json::from_str(&curve_json(&req.to_string()).unwrap()).unwrap();
    assert!(rows[0]["loss_q"].is_null());
    assert!((rows[0]["qid"].as_f64().unwrap() - 0.15396).abs() < 1e-4);
}

#[test]
fn token_budget_matches_inversion() {
    let d = defaults();
    let req = json!({"qid": d["qid"], "sizes": [7e10], "bits": [2, 4], "targets": [0.2]});
    let cells: Vec<Value> = serde_json::from_str(&token_budget_json(&req.to_string()).unwrap()).unwrap();
    assert_eq!(cells.len(), 2);
    let t = cells[0]["tokens"].as_f64().unwrap();
    assert!((t / 7.239384032e9 - 1.0).abs() < 1e-8);
}

#[test]
fn bits_needed_round_trip() {
    let d = defaults();
    let req = json!({"qid": d["qid"], "budget": 0.2, "n": 1e9, "d": 1e12});
    let out: Value = serde_json::from_str(&bits_needed_json(&req.to_string()).unwrap()).unwrap();
    assert!((out["bits"].as_f64().unwrap() - 3.814069811).abs() < 1e-8);
    assert_eq!(out["baseline_suffices"], false);
}

#[test]
fn errors_are_messages() {
    assert!(curve_json("{}").unwrap_err().starts_with("bad request"));
    let d = defaults();
    let req = json!({"qid": d["qid"], "budget": -1.0, "n": 1e9, "d": 1e12});
    assert!(bits_needed_json(&req.to_string()).unwrap_err().contains("qid budget"));
}
