//! Browser bindings: count laws, Monte Carlo histograms and the POVM order.
//!
//! Every exported function has a plain Rust twin returning
//! `Result<_, String>` so it can be tested off the browser.

use serde_json::json;
use wasm_bindgen::prelude::*;

use qconserve::io::{povm_from_json, to_json, CertificateFile};
use qconserve::models::p_pc_k;
use qconserve::povm::{find_post_processing, DEFAULT_TOL};
use qconserve::simulate::{histogram, number_chain_stats, CountingModel, Statistic};

/// Upper limits that keep the page responsive.
pub const MAX_PHOTONS: usize = 200;
pub const MAX_TRAJECTORIES: usize = 200_000;

/// `P(M_k = m | n)` for photon counting, rows `k = 1..=k_max`, columns `m = 0..=n`.
pub fn count_law_table(lambda_t: f64, n: usize, k_max: usize) -> Result<Vec<f64>, String> {
    if !(lambda_t > 0.0 && lambda_t.is_finite()) {
        return Err(format!("lambda_t must be positive, got {lambda_t}"));
    }
    if n > MAX_PHOTONS || k_max == 0 || k_max > 1000 {
        return Err(format!("need n ≤ {MAX_PHOTONS} and 1 ≤ k ≤ 1000"));
    }
    Ok((1..=k_max).flat_map(|k| (0..=n).map(move |m| p_pc_k(m, n, lambda_t, k))).collect())
}

/// Monte Carlo of the total count from `|n0⟩`, summarized as JSON with the
/// mean, variance and a histogram of `M_k` (photon counting) or `X_k`
/// (quantum counter).
pub fn simulate_json(model: &str, lambda_t: f64, n0: usize, k: usize, n_traj: usize, seed: u64, bins: usize) -> Result<String, String> {
    let model = match model {
        "photon_counting" => CountingModel::PhotonCounting,
        "quantum_counter" => CountingModel::QuantumCounter,
        other => return Err(format!("unknown model {other:?}")),
    };
    if n0 > MAX_PHOTONS || n_traj == 0 || n_traj > MAX_TRAJECTORIES || k == 0 || k > 10_000 {
        return Err(format!("need n0 ≤ {MAX_PHOTONS}, 1 ≤ trajectories ≤ {MAX_TRAJECTORIES}, 1 ≤ k ≤ 10000"));
    }
    let mut initial = vec![0.0; n0 + 1];
    initial[n0] = 1.0;
    let statistic = match model {
        CountingModel::PhotonCounting => Statistic::Mk,
        CountingModel::QuantumCounter => Statistic::Xk { lambda_t },
    };
    let stats = number_chain_stats(model, lambda_t, &initial, k, n_traj, seed, statistic, None).map_err(|e| e.to_string())?;
    let (lo, hi) = match statistic {
        Statistic::Mk => (-0.5, n0 as f64 + 0.5),
        Statistic::Xk { .. } => (0.0, stats.values.iter().copied().fold(0.0, f64::max).max(1e-12) * (1.0 + 1e-12)),
    };
    let bins = match statistic {
        Statistic::Mk => n0 + 1,
        Statistic::Xk { .. } => bins.clamp(1, 400),
    };
    let hist: Vec<_> = histogram(&stats.values, bins, lo, hi).iter().map(|b| json!([b.lo, b.hi, b.density])).collect();
    let value = json!({
        "statistic": if matches!(statistic, Statistic::Mk) { "M_k" } else { "X_k" },
        "mean": stats.mean,
        "var": stats.variance,
        "histogram": hist,
    });
    to_json(&value).map_err(|e| e.to_string())
}

/// Both directions of the post-processing order between two POVM files.
pub fn povm_order_json(first: &str, second: &str, tol: f64) -> Result<String, String> {
    let a = povm_from_json(first, DEFAULT_TOL).map_err(|e| format!("first POVM: {e}"))?;
    let b = povm_from_json(second, DEFAULT_TOL).map_err(|e| format!("second POVM: {e}"))?;
    let ab = find_post_processing(&a, &b, tol).map_err(|e| e.to_string())?;
    let ba = find_post_processing(&b, &a, tol).map_err(|e| e.to_string())?;
    let value = json!({
        "first_fuzzier": CertificateFile::from_certificate(&ab, tol),
        "second_fuzzier": CertificateFile::from_certificate(&ba, tol),
        "equivalent": ab.feasible && ba.feasible,
    });
    to_json(&value).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn count_law(lambda_t: f64, n: usize, k_max: usize) -> Result<Vec<f64>, JsError> {
    count_law_table(lambda_t, n, k_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(model: &str, lambda_t: f64, n0: usize, k: usize, n_traj: usize, seed: u64, bins: usize) -> Result<String, JsError> {
    simulate_json(model, lambda_t, n0, k, n_traj, seed, bins).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn povm_order(first: &str, second: &str, tol: f64) -> Result<String, JsError> {
    povm_order_json(first, second, tol).map_err(|e| JsError::new(&e))
}
