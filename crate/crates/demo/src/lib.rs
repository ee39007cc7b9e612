//! Browser bindings for `conceptaudit`.
//!
//! Each exported function takes plain numbers or text and returns a JSON
//! string; the `*_json` functions hold the logic so they can be tested
//! natively.

use conceptaudit::cav::{self, CavConfig};
use conceptaudit::refmodels::{self, SetCounts, SyntheticSpec};
use conceptaudit::stats;
use conceptaudit::store::SetTag;
use conceptaudit::sufficiency::{self, ChallengeProbs, ThresholdCurve};
use conceptaudit::tcav;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct CurveView<'a> {
    breakpoints: &'a [f64],
    accuracy: &'a [f64],
    auc: f64,
    false_suff: f64,
    n_pos: usize,
    n_neg: usize,
    balanced: bool,
}

fn curve_view<'a>(curve: &'a ThresholdCurve, probs: &ChallengeProbs) -> CurveView<'a> {
    CurveView {
        breakpoints: &curve.breakpoints,
        accuracy: &curve.accuracy_segments,
        auc: curve.auc,
        false_suff: curve.false_suff,
        n_pos: probs.pos_probs.len(),
        n_neg: probs.neg_probs.len(),
        balanced: probs.balanced,
    }
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Parses numbers separated by commas, whitespace or newlines.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

/// Accuracy-versus-threshold curve for pasted challenge probabilities.
pub fn challenge_curve_json(pos_text: &str, neg_text: &str) -> Result<String, String> {
    let probs = ChallengeProbs::new(parse_numbers(pos_text)?, parse_numbers(neg_text)?).map_err(|e| e.to_string())?;
    let curve = sufficiency::threshold_curve(&probs);
    to_json(&curve_view(&curve, &probs))
}

/// Welch t-test between two pasted samples.
pub fn welch_test_json(a_text: &str, b_text: &str, alpha: f64) -> Result<String, String> {
    let r = stats::welch_t_test(&parse_numbers(a_text)?, &parse_numbers(b_text)?, alpha).map_err(|e| e.to_string())?;
    to_json(&r)
}

#[derive(Serialize)]
struct SyntheticView<'a> {
    concept_dir: &'a [f64],
    random_dir: &'a [f64],
    concept_mag: &'a [f64],
    random_mag: &'a [f64],
    mean_cosine_to_planted: f64,
    dir_test: stats::SignificanceResult,
    mag_test: stats::SignificanceResult,
    curve: CurveView<'a>,
}

/// Full audit of a synthetic linear head `alpha * concept + beta * context`.
pub fn synthetic_audit_json(alpha: f64, beta: f64, noise_sd: f64, p_repeats: usize, seed: u64) -> Result<String, String> {
    let spec = SyntheticSpec {
        concept_strength: alpha,
        context_strength: beta,
        noise_sd,
        seed,
        counts: SetCounts {
            input: 500,
            ..SetCounts::default()
        },
        ..SyntheticSpec::default()
    };
    let data = refmodels::generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let store = &data.store;
    let cfg = CavConfig {
        p_repeats,
        seed,
        ..CavConfig::default()
    };
    let concept_embs = store.embeddings(SetTag::Concept);
    let random_embs = store.embeddings(SetTag::Random);
    let set = cav::train_cav_set("concept", &concept_embs, &random_embs, &cfg).map_err(|e| e.to_string())?;
    let random = cav::train_random_cav_set(&random_embs, &cfg).map_err(|e| e.to_string())?;
    let inputs = store.select(SetTag::Input);
    let c = tcav::score_concept(&set.cavs, &inputs).map_err(|e| e.to_string())?;
    let r = tcav::score_concept(&random, &inputs).map_err(|e| e.to_string())?;
    let alpha_test = stats::DEFAULT_ALPHA;
    let dir_test = stats::welch_t_test(&c.dir_scores, &r.dir_scores, alpha_test).map_err(|e| e.to_string())?;
    let mag_test = stats::welch_t_test(&c.mag_scores, &r.mag_scores, alpha_test).map_err(|e| e.to_string())?;
    let cosine = set
        .cavs
        .iter()
        .map(|cav| cav.direction.iter().zip(&data.concept_direction).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        / set.cavs.len() as f64;
    let probs = ChallengeProbs::from_store(store).map_err(|e| e.to_string())?;
    let curve = sufficiency::threshold_curve(&probs);
    to_json(&SyntheticView {
        concept_dir: &c.dir_scores,
        random_dir: &r.dir_scores,
        concept_mag: &c.mag_scores,
        random_mag: &r.mag_scores,
        mean_cosine_to_planted: cosine,
        dir_test,
        mag_test,
        curve: curve_view(&curve, &probs),
    })
}

#[wasm_bindgen]
pub fn challenge_curve(pos_text: &str, neg_text: &str) -> Result<String, JsValue> {
    challenge_curve_json(pos_text, neg_text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn welch_test(a_text: &str, b_text: &str, alpha: f64) -> Result<String, JsValue> {
    welch_test_json(a_text, b_text, alpha).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn synthetic_audit(alpha: f64, beta: f64, noise_sd: f64, p_repeats: usize, seed: u32) -> Result<String, JsValue> {
    synthetic_audit_json(alpha, beta, noise_sd, p_repeats, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}
