//! wasm-bindgen entry points for the static page in `www/`.
//!
//! Every export takes plain numbers or a model JSON string and returns a
//! JSON string; the page parses it and draws on a canvas. The functions run
//! single-threaded (core is built without the `parallel` feature) and use
//! coarse settings so a click answers within a second or two.

use orbits_core::benchmarks;
use orbits_core::classify::{action_profile, classify_equivalence, find_minima_full};
use orbits_core::continuation::{global_structure, ReducedFamily};
use orbits_core::{Model, ModelSpec, ReducedSystem, Settings};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn demo_settings(points: usize) -> Settings {
    Settings {
        m: 16,
        m_max: 32,
        profile_points: points.clamp(8, 256),
        ..Settings::default()
    }
}

fn model_from(model_json: &str) -> Result<Model, String> {
    let spec = if model_json.trim().is_empty() {
        benchmarks::separable_ridge(0.1)
    } else {
        ModelSpec::from_json(model_json).map_err(|e| e.to_string())?
    };
    Model::new(spec).map_err(|e| e.to_string())
}

/// `F(x₀, E)` on a uniform grid. An empty model string means the ridge.
pub fn profile_json(model_json: &str, energy: f64, points: usize) -> Result<String, String> {
    let model = model_from(model_json)?;
    let rs = ReducedSystem::simple(&model, energy).map_err(|e| e.to_string())?;
    let scan = action_profile(&rs, &demo_settings(points)).map_err(|e| e.to_string())?;
    Ok(json!({
        "energy": energy,
        "x": scan.profile.base_points,
        "F": scan.profile.values,
    })
    .to_string())
}

/// Global minimizers of the ridge `U = eps0·cos x1` with both verdicts.
pub fn classify_ridge_json(eps0: f64, energy: f64) -> Result<String, String> {
    let model = Model::new(benchmarks::separable_ridge(eps0)).map_err(|e| e.to_string())?;
    let rs = ReducedSystem::simple(&model, energy).map_err(|e| e.to_string())?;
    let settings = demo_settings(32);
    let search = find_minima_full(&rs, &settings).map_err(|e| e.to_string())?;
    let minima: Vec<_> = search
        .records
        .iter()
        .map(|r| {
            let agree = classify_equivalence(r, &search.settings).is_ok();
            json!({
                "x_star": r.x_star,
                "action": r.action,
                "lambda0": r.lambda0,
                "lambda1": r.lambda1,
                "period": r.period,
                "modulus": r.monodromy.transverse_modulus(),
                "verdict": r.verdict,
                "criteria_agree": agree,
                "flat_profile": r.flat_profile,
            })
        })
        .collect();
    Ok(json!({ "energy": energy, "m": search.settings.m, "minima": minima }).to_string())
}

/// Summary rows and crossings of the asymmetric two-ridge model over `[e_lo, e_hi]`.
pub fn two_ridge_sweep_json(e_lo: f64, e_hi: f64, de: f64) -> Result<String, String> {
    let model = Model::new(benchmarks::asymmetric_two_ridge()).map_err(|e| e.to_string())?;
    let g = global_structure(&ReducedFamily::simple(&model), [e_lo, e_hi], de, &demo_settings(24))
        .map_err(|e| e.to_string())?;
    let branches: Vec<_> = g
        .branches
        .iter()
        .map(|b| json!({ "x": b.base_points.first(), "E": b.energies, "F": b.actions }))
        .collect();
    Ok(json!({
        "summary": g.summary,
        "branches": branches,
        "crossings": g.crossings.iter().map(|c| json!({
            "e_star": c.e_star,
            "slope_a": c.slope_a,
            "slope_b": c.slope_b,
            "x_a": c.x_a,
            "x_b": c.x_b,
        })).collect::<Vec<_>>(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn action_profile_js(model_json: &str, energy: f64, points: usize) -> Result<String, JsValue> {
    profile_json(model_json, energy, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn classify_ridge_js(eps0: f64, energy: f64) -> Result<String, JsValue> {
    classify_ridge_json(eps0, energy).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn two_ridge_sweep_js(e_lo: f64, e_hi: f64, de: f64) -> Result<String, JsValue> {
    two_ridge_sweep_json(e_lo, e_hi, de).map_err(|e| JsValue::from_str(&e))
}
