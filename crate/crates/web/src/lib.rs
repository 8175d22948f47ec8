//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes a JSON request and returns a JSON response, so the page
//! needs no generated TypeScript types. The plain `*_json` functions carry the
//! logic and are what the native tests exercise.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use qidlaw::laws::{curve_grid, invert_bits, invert_tokens, TokenRange};
use qidlaw::{LawParams, Loss16LawParams, PredictionRow, QidLawParams};

const FIG6: &str = include_str!("../../../params/fig6.json");
const FIG7: &str = include_str!("../../../params/fig7.json");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub qid: QidLawParams,
    #[serde(default)]
    pub loss16: Option<Loss16LawParams>,
    pub sizes: Vec<f64>,
    pub bits: Vec<f64>,
    pub tokens_min: f64,
    pub tokens_max: f64,
    pub steps: usize,
    #[serde(default)]
    pub vocab: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRequest {
    pub qid: QidLawParams,
    pub sizes: Vec<f64>,
    pub bits: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct BudgetCell {
    pub n_nonembed: f64,
    pub qid: f64,
    pub bits: f64,
    pub tokens: f64,
    pub tokens_trillion: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitsRequest {
    pub qid: QidLawParams,
    pub budget: f64,
    pub n: f64,
    pub d: f64,
}

#[derive(Debug, Serialize)]
pub struct BitsResponse {
    pub bits: f64,
    pub baseline_suffices: bool,
}

#[derive(Debug, Serialize)]
struct Defaults {
    qid: QidLawParams,
    loss16: Loss16LawParams,
}

fn parse<'a, T: Deserialize<'a>>(request: &'a str) -> Result<T, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// The bundled Pythia constants as `{"qid": {...}, "loss16": {...}}`.
pub fn defaults_json() -> String {
    let (Ok(LawParams::QidUnified(qid)), Ok(LawParams::Loss16(loss16))) =
        (LawParams::from_json(FIG6), LawParams::from_json(FIG7))
    else {
        unreachable!("bundled parameter files are malformed")
    };
    serde_json::to_string(&Defaults { qid, loss16 }).expect("plain numbers serialize")
}

/// Prediction rows over sizes x bit widths x log-spaced token counts.
pub fn curve_json(request: &str) -> Result<String, String> {
    let req: CurveRequest = parse(request)?;
    let range = TokenRange {
        min: req.tokens_min,
        max: req.tokens_max,
        steps: req.steps,
    };
    let rows: Vec<PredictionRow> = curve_grid(&req.qid, req.loss16.as_ref(), &req.sizes, &range, &req.bits, req.vocab)
        .map_err(|e| e.to_string())?;
    to_json(&rows)
}

/// Token budgets for every size, degradation target and bit width.
pub fn token_budget_json(request: &str) -> Result<String, String> {
    let req: BudgetRequest = parse(request)?;
    let mut cells = Vec::with_capacity(req.sizes.len() * req.bits.len() * req.targets.len());
    for &n in &req.sizes {
        for &qid in &req.targets {
            for &bits in &req.bits {
                let tokens = invert_tokens(&req.qid, qid, n, bits).map_err(|e| e.to_string())?;
                cells.push(BudgetCell {
                    n_nonembed: n,
                    qid,
                    bits,
                    tokens,
                    tokens_trillion: tokens / 1e12,
                });
            }
        }
    }
    to_json(&cells)
}

/// Lowest bit width that keeps degradation within budget.
pub fn bits_needed_json(request: &str) -> Result<String, String> {
    let req: BitsRequest = parse(request)?;
    let est = invert_bits(&req.qid, req.budget, req.n, req.d).map_err(|e| e.to_string())?;
    to_json(&BitsResponse {
        bits: est.bits,
        baseline_suffices: est.baseline_suffices,
    })
}

#[wasm_bindgen]
pub fn defaults() -> String {
    defaults_json()
}

#[wasm_bindgen]
pub fn curve(request: &str) -> Result<String, JsError> {
    curve_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = tokenBudget)]
pub fn token_budget(request: &str) -> Result<String, JsError> {
    token_budget_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bitsNeeded)]
pub fn bits_needed(request: &str) -> Result<String, JsError> {
    bits_needed_json(request).map_err(|e| JsError::new(&e))
}
