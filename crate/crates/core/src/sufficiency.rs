//! Accuracy-vs-threshold curves over a two-class challenge set whose
//! examples all contain the concept.
//!
//! A threshold `t` labels an example positive iff `prob > t`. Accuracy as a
//! function of `t` is piecewise constant between the distinct probability
//! values, so the area under it on `[0, 1]` is computed exactly. A model that
//! has learned the concept as sufficient for the positive label scores both
//! classes alike and its area drops towards 0.5; `false_suff = 1 - auc`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EmbeddingStore, SetTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeProbs {
    pub pos_probs: Vec<f64>,
    pub neg_probs: Vec<f64>,
    pub balanced: bool,
}

impl ChallengeProbs {
    pub fn new(pos_probs: Vec<f64>, neg_probs: Vec<f64>) -> Result<Self> {
        if pos_probs.is_empty() || neg_probs.is_empty() {
            return Err(Error::Validation(format!(
                "challenge set needs both classes, got {} positive and {} negative",
                pos_probs.len(),
                neg_probs.len()
            )));
        }
        if let Some(p) = pos_probs.iter().chain(&neg_probs).find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!("challenge probability {p} is outside [0, 1]")));
        }
        let balanced = pos_probs.len() == neg_probs.len();
        Ok(ChallengeProbs {
            pos_probs,
            neg_probs,
            balanced,
        })
    }

    /// Probabilities of the `challenge_pos` and `challenge_neg` records.
    pub fn from_store(store: &EmbeddingStore) -> Result<Self> {
        let probs = |tag| -> Result<Vec<f64>> {
            store
                .select(tag)
                .into_iter()
                .map(|r| r.prob.ok_or_else(|| Error::MissingProb(r.id.clone())))
                .collect()
        };
        Self::new(probs(SetTag::ChallengePos)?, probs(SetTag::ChallengeNeg)?)
    }

    pub fn len(&self) -> usize {
        self.pos_probs.len() + self.neg_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same instance with classes exchanged.
    pub fn swapped(&self) -> Self {
        ChallengeProbs {
            pos_probs: self.neg_probs.clone(),
            neg_probs: self.pos_probs.clone(),
            balanced: self.balanced,
        }
    }
}

/// Plain (unweighted) accuracy at threshold `t`.
pub fn accuracy_at(probs: &ChallengeProbs, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Validation(format!("threshold {t} is outside [0, 1]")));
    }
    let tp = probs.pos_probs.iter().filter(|&&p| p > t).count();
    let tn = probs.neg_probs.iter().filter(|&&q| q <= t).count();
    Ok((tp + tn) as f64 / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    /// Sorted distinct probabilities together with 0 and 1.
    pub breakpoints: Vec<f64>,
    /// Accuracy on the open interval `(breakpoints[i], breakpoints[i + 1])`.
    pub accuracy_segments: Vec<f64>,
    pub auc: f64,
    pub false_suff: f64,
    pub balanced: bool,
}

impl ThresholdCurve {
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.accuracy_segments)
            .map(|(w, a)| (w[0], w[1], *a))
    }

    /// `t_start,t_end,accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_start,t_end,accuracy\n");
        for (s, e, a) in self.segments() {
            let _ = writeln!(out, "{s},{e},{a}");
        }
        out
    }
}

pub fn threshold_curve(probs: &ChallengeProbs) -> ThresholdCurve {
    let mut breakpoints: Vec<f64> = probs
        .pos_probs
        .iter()
        .chain(&probs.neg_probs)
        .copied()
        .chain([0.0, 1.0])
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut pos = probs.pos_probs.clone();
    let mut neg = probs.neg_probs.clone();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let n = probs.len() as f64;

    // On (b_i, b_{i+1}) no probability lies strictly inside, so
    // p > t  <=>  p > b_i  and  q <= t  <=>  q <= b_i.
    let (mut pi, mut ni) = (0usize, 0usize);
    let mut accuracy_segments = Vec::with_capacity(breakpoints.len() - 1);
    let mut auc = 0.0;
    for w in breakpoints.windows(2) {
        let lo = w[0];
        while pi < pos.len() && pos[pi] <= lo {
            pi += 1;
        }
        while ni < neg.len() && neg[ni] <= lo {
            ni += 1;
        }
        let correct = (pos.len() - pi) + ni;
        let acc = correct as f64 / n;
        accuracy_segments.push(acc);
        auc += (w[1] - lo) * acc;
    }
    ThresholdCurve {
        breakpoints,
        accuracy_segments,
        auc,
        false_suff: 1.0 - auc,
        balanced: probs.balanced,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseSuffRow {
    pub model: String,
    pub auc: f64,
    pub false_suff: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalseSuffTable {
    /// Sorted by descending `false_suff`; ties keep input order.
    pub rows: Vec<FalseSuffRow>,
    /// Curves in input order, for plotting.
    pub curves: Vec<(String, ThresholdCurve)>,
}

pub fn false_suff_report(models: &[(String, ChallengeProbs)]) -> Result<FalseSuffTable> {
    if models.is_empty() {
        return Err(Error::Empty("models"));
    }
    let curves: Vec<(String, ThresholdCurve)> = models
        .iter()
        .map(|(label, probs)| (label.clone(), threshold_curve(probs)))
        .collect();
    let mut rows: Vec<FalseSuffRow> = models
        .iter()
        .zip(&curves)
        .map(|((label, probs), (_, c))| FalseSuffRow {
            model: label.clone(),
            auc: c.auc,
            false_suff: c.false_suff,
            n_pos: probs.pos_probs.len(),
            n_neg: probs.neg_probs.len(),
            balanced: probs.balanced,
        })
        .collect();
    rows.sort_by(|a, b| b.false_suff.total_cmp(&a.false_suff));
    Ok(FalseSuffTable { rows, curves })
}

/// Step plot of accuracy against threshold, one polyline per curve.
pub fn curves_svg(title: &str, curves: &[(String, ThresholdCurve)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let x = |t: f64| PAD + t * (W - 2.0 * PAD);
    let y = |a: f64| H - PAD - a * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, W / 2.0, xml_escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{} {} V{} H{}" fill="none" stroke="black"/>"#,
        x(0.0),
        y(1.0),
        y(0.0),
        x(1.0)
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#, x(v), y(0.0) + 14.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#, x(0.0) - 4.0, y(v) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">threshold</text>"#, W / 2.0, H - 6.0);
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">accuracy</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (label, curve)) in curves.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let mut points = String::new();
        for (s, e, a) in curve.segments() {
            let _ = write!(points, "{:.2},{:.2} {:.2},{:.2} ", x(s), y(a), x(e), y(a));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{colour}" text-anchor="end">{} (False_Suff {:.2})</text>"#,
            W - PAD,
            xml_escape(label),
            curve.false_suff
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
