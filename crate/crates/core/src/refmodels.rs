//! Reference classification heads and a synthetic embedding generator with a
//! planted concept direction.
//!
//! The generator places concept examples along a unit direction `c`, builds
//! a linear head `w = alpha * c + beta * o` (with `o` a context direction
//! orthogonal to `c`), and writes challenge examples that all carry the
//! concept but differ in context: `+o` for the positive class, `-o` for the
//! negative class. `alpha` is how much the head relies on the concept alone,
//! so both TCAV magnitude and `false_suff` should grow with it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, normalized};
use crate::store::{EmbeddingRecord, EmbeddingStore, SetTag};

/// A differentiable map from an embedding to the positive-class logit.
pub trait Head {
    fn dim(&self) -> usize;

    fn logit_unchecked(&self, embedding: &[f64]) -> f64;

    fn gradient_unchecked(&self, embedding: &[f64]) -> Vec<f64>;

    fn logit(&self, embedding: &[f64]) -> Result<f64> {
        self.check(embedding)?;
        Ok(self.logit_unchecked(embedding))
    }

    /// Gradient of the logit with respect to the embedding.
    fn gradient(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        self.check(embedding)?;
        Ok(self.gradient_unchecked(embedding))
    }

    fn prob(&self, embedding: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(embedding)?))
    }

    fn check(&self, embedding: &[f64]) -> Result<()> {
        if embedding.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                id: "embedding".into(),
                expected: self.dim(),
                found: embedding.len(),
            });
        }
        Ok(())
    }

    /// Fills `gradient`, `logit` and `prob` of each record from this head.
    fn annotate(&self, record: &mut EmbeddingRecord) -> Result<()> {
        self.check(&record.embedding).map_err(|_| Error::DimensionMismatch {
            id: record.id.clone(),
            expected: self.dim(),
            found: record.embedding.len(),
        })?;
        let logit = self.logit_unchecked(&record.embedding);
        record.gradient = Some(self.gradient_unchecked(&record.embedding));
        record.logit = Some(logit);
        record.prob = Some(sigmoid(logit));
        Ok(())
    }
}

pub fn head_logit(head: &impl Head, embedding: &[f64]) -> Result<f64> {
    head.logit(embedding)
}

pub fn head_gradient(head: &impl Head, embedding: &[f64]) -> Result<Vec<f64>> {
    head.gradient(embedding)
}

pub fn head_prob(head: &impl Head, embedding: &[f64]) -> Result<f64> {
    head.prob(embedding)
}

/// Logistic sigmoid, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearHead {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::Validation("linear head parameters must be finite".into()));
        }
        Ok(LinearHead { weights, bias })
    }
}

impl Head for LinearHead {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn logit_unchecked(&self, e: &[f64]) -> f64 {
        dot(&self.weights, e) + self.bias
    }

    fn gradient_unchecked(&self, _e: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
}

/// One tanh hidden layer: `out_weights · tanh(W^T e + hidden_bias) + out_bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    dim: usize,
    hidden: usize,
    /// `dim x hidden`, row-major.
    hidden_weights: Vec<f64>,
    hidden_bias: Vec<f64>,
    out_weights: Vec<f64>,
    out_bias: f64,
}

impl MlpHead {
    pub fn new(
        dim: usize,
        hidden: usize,
        hidden_weights: Vec<f64>,
        hidden_bias: Vec<f64>,
        out_weights: Vec<f64>,
        out_bias: f64,
    ) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Validation("MLP head needs at least one hidden unit".into()));
        }
        if hidden_weights.len() != dim * hidden || hidden_bias.len() != hidden || out_weights.len() != hidden {
            return Err(Error::Validation(format!(
                "MLP head shapes do not match dim {dim} x hidden {hidden}"
            )));
        }
        let finite = hidden_weights
            .iter()
            .chain(&hidden_bias)
            .chain(&out_weights)
            .chain(std::iter::once(&out_bias))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("MLP head parameters must be finite".into()));
        }
        Ok(MlpHead {
            dim,
            hidden,
            hidden_weights,
            hidden_bias,
            out_weights,
            out_bias,
        })
    }

    /// Gaussian parameters with standard deviation `scale` (hidden layer
    /// scaled by `1/sqrt(dim)`).
    pub fn random(dim: usize, hidden: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, sd: f64| -> Vec<f64> {
            (0..n)
                .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect()
        };
        let hw = draw(dim * hidden, scale / (dim as f64).sqrt());
        let hb = draw(hidden, scale);
        let ow = draw(hidden, scale);
        let ob = draw(1, scale)[0];
        MlpHead::new(dim, hidden, hw, hb, ow, ob)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn hidden_weight(&self, i: usize, j: usize) -> f64 {
        self.hidden_weights[i * self.hidden + j]
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn out_weights(&self) -> &[f64] {
        &self.out_weights
    }

    pub fn out_bias(&self) -> f64 {
        self.out_bias
    }

    fn pre_activations(&self, e: &[f64]) -> Vec<f64> {
        let mut z = self.hidden_bias.clone();
        for (i, x) in e.iter().enumerate() {
            let row = &self.hidden_weights[i * self.hidden..(i + 1) * self.hidden];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += w * x;
            }
        }
        z
    }
}

impl Head for MlpHead {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logit_unchecked(&self, e: &[f64]) -> f64 {
        let z = self.pre_activations(e);
        z.iter().zip(&self.out_weights).map(|(z, v)| v * z.tanh()).sum::<f64>() + self.out_bias
    }

    fn gradient_unchecked(&self, e: &[f64]) -> Vec<f64> {
        // d/de_i = sum_j W_ij v_j (1 - tanh^2 z_j)
        let delta: Vec<f64> = self
            .pre_activations(e)
            .iter()
            .zip(&self.out_weights)
            .map(|(z, v)| {
                let t = z.tanh();
                v * (1.0 - t * t)
            })
            .collect();
        (0..self.dim)
            .map(|i| {
                let row = &self.hidden_weights[i * self.hidden..(i + 1) * self.hidden];
                dot(row, &delta)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetCounts {
    pub concept: usize,
    pub random: usize,
    pub input: usize,
    pub challenge_pos: usize,
    pub challenge_neg: usize,
}

impl Default for SetCounts {
    fn default() -> Self {
        SetCounts {
            concept: 400,
            random: 1000,
            input: 2000,
            challenge_pos: 140,
            challenge_neg: 140,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    /// Unit concept direction; drawn from `seed` when absent.
    pub concept_direction: Option<Vec<f64>>,
    /// Head weight on the concept direction (`alpha`).
    pub concept_strength: f64,
    /// Head weight on the context direction (`beta`).
    pub context_strength: f64,
    /// Isotropic Gaussian noise standard deviation.
    pub noise_sd: f64,
    /// Concept projection of concept and challenge embeddings.
    pub concept_signal: f64,
    /// Context projection magnitude of challenge embeddings.
    pub context_signal: f64,
    pub bias: f64,
    pub counts: SetCounts,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dim: 16,
            concept_direction: None,
            concept_strength: 1.0,
            context_strength: 1.0,
            noise_sd: 0.5,
            concept_signal: 3.0,
            context_signal: 6.0,
            bias: 0.0,
            counts: SetCounts::default(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Validation(format!(
                "synthetic dim must be at least 2 (concept and context directions), got {}",
                self.dim
            )));
        }
        // Written as a negated comparison so NaN is rejected too.
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return Err(Error::Validation(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        let finite = [
            self.concept_strength,
            self.context_strength,
            self.noise_sd,
            self.concept_signal,
            self.context_signal,
            self.bias,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("synthetic parameters must be finite".into()));
        }
        if let Some(c) = &self.concept_direction {
            if c.len() != self.dim {
                return Err(Error::Validation(format!(
                    "concept_direction has dimension {}, expected {}",
                    c.len(),
                    self.dim
                )));
            }
            if (norm(c) - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "concept_direction must have unit norm, got {}",
                    norm(c)
                )));
            }
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub store: EmbeddingStore,
    pub head: LinearHead,
    pub concept_direction: Vec<f64>,
    pub context_direction: Vec<f64>,
    /// `(text, abusive)` for each challenge record, in store order.
    pub challenge_texts: Vec<(String, bool)>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    };

    let c = match &spec.concept_direction {
        Some(c) => c.clone(),
        None => normalized(&gaussian(&mut rng)).ok_or_else(|| Error::Validation("degenerate draw".into()))?,
    };
    let o = {
        let mut v = gaussian(&mut rng);
        let proj = dot(&v, &c);
        v.iter_mut().zip(&c).for_each(|(x, ci)| *x -= proj * ci);
        normalized(&v).ok_or_else(|| Error::Validation("degenerate context direction".into()))?
    };
    let weights: Vec<f64> = c
        .iter()
        .zip(&o)
        .map(|(ci, oi)| spec.concept_strength * ci + spec.context_strength * oi)
        .collect();
    let head = LinearHead::new(weights, spec.bias)?;

    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let mut records = Vec::new();
    let mut challenge_texts = Vec::new();
    let plan = [
        (SetTag::Concept, spec.counts.concept, spec.concept_signal, 0.0),
        (SetTag::Random, spec.counts.random, 0.0, 0.0),
        (SetTag::Input, spec.counts.input, 0.0, 0.0),
        (SetTag::ChallengePos, spec.counts.challenge_pos, spec.concept_signal, spec.context_signal),
        (SetTag::ChallengeNeg, spec.counts.challenge_neg, spec.concept_signal, -spec.context_signal),
    ];
    for (tag, count, along_c, along_o) in plan {
        for i in 0..count {
            let embedding: Vec<f64> = c
                .iter()
                .zip(&o)
                .map(|(ci, oi)| along_c * ci + along_o * oi + noise.sample(&mut rng))
                .collect();
            let id = format!("{tag}-{i:05}");
            let text = match tag {
                SetTag::ChallengePos => {
                    let t = format!("synthetic challenge {i} (positive context)");
                    challenge_texts.push((t.clone(), true));
                    t
                }
                SetTag::ChallengeNeg => {
                    let t = format!("synthetic challenge {i} (negative context)");
                    challenge_texts.push((t.clone(), false));
                    t
                }
                _ => format!("synthetic {tag} {i}"),
            };
            let mut record = EmbeddingRecord::new(id, embedding, tag);
            record.text = Some(text);
            head.annotate(&mut record)?;
            records.push(record);
        }
    }
    let provenance = format!(
        "synthetic:dim={},alpha={},beta={},sigma={},seed={}",
        d, spec.concept_strength, spec.context_strength, spec.noise_sd, spec.seed
    );
    Ok(SyntheticData {
        store: EmbeddingStore::with_dim(records, d, provenance)?,
        head,
        concept_direction: c,
        context_direction: o,
        challenge_texts,
    })
}
