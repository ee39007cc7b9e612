//! Concept activation vectors.
//!
//! Each CAV is the unit normal of a linear separator between a subsample of
//! concept embeddings and a subsample of random embeddings. The separator is
//! an L2-regularized logistic regression fit by full-batch gradient descent.
//!
//! Fitting happens on centred features divided by their RMS norm. That is an
//! isotropic rescaling, so the separator's normal maps back to embedding space
//! unchanged up to length, and the result does not depend on the overall
//! scale of the embeddings.

use std::io::{BufRead, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, mean_vector, normalized};
use crate::refmodels::sigmoid;

/// Fraction of each class's subsample held out for `separator_accuracy`.
pub const HOLDOUT_FRACTION: f64 = 0.2;

pub const CAV_FORMAT: &str = "conceptaudit.cavs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavConfig {
    /// Number of CAVs `P` per concept (and per random baseline).
    pub p_repeats: usize,
    /// Concept subsample size `N_c`.
    pub n_concept_sub: usize,
    /// Random subsample size `N_r`.
    pub n_random_sub: usize,
    /// Concept pool size `N_C`; `None` uses every concept record.
    pub concept_pool: Option<usize>,
    /// Random pool size `N_R`; `None` uses every random record.
    pub random_pool: Option<usize>,
    pub seed: u64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub l2_penalty: f64,
    /// Concept CAVs whose held-out accuracy is strictly below this are dropped.
    pub min_separator_accuracy: f64,
}

impl Default for CavConfig {
    fn default() -> Self {
        CavConfig {
            p_repeats: 20,
            n_concept_sub: 50,
            n_random_sub: 200,
            concept_pool: None,
            random_pool: None,
            seed: 0,
            max_iters: 2000,
            tolerance: 1e-7,
            l2_penalty: 1e-3,
            min_separator_accuracy: 0.0,
        }
    }
}

impl CavConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_repeats < 2 {
            return Err(Error::Config(format!(
                "p_repeats must be at least 2 for significance testing, got {}",
                self.p_repeats
            )));
        }
        if self.n_concept_sub < 2 || self.n_random_sub < 2 {
            return Err(Error::Config(format!(
                "n_concept_sub and n_random_sub must be at least 2, got {} and {}",
                self.n_concept_sub, self.n_random_sub
            )));
        }
        if let Some(pool) = self.concept_pool {
            if self.n_concept_sub > pool {
                return Err(Error::Config(format!(
                    "n_concept_sub {} exceeds concept_pool {pool}",
                    self.n_concept_sub
                )));
            }
        }
        if let Some(pool) = self.random_pool {
            if self.n_random_sub > pool {
                return Err(Error::Config(format!(
                    "n_random_sub {} exceeds random_pool {pool}",
                    self.n_random_sub
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.tolerance >= 0.0 && self.l2_penalty >= 0.0) {
            return Err(Error::Config("tolerance and l2_penalty must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.min_separator_accuracy) {
            return Err(Error::Config(format!(
                "min_separator_accuracy {} is outside [0, 1]",
                self.min_separator_accuracy
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CavRole {
    Concept,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cav {
    pub concept: String,
    pub role: CavRole,
    pub rep_index: usize,
    pub subsample_seed: u64,
    /// Balanced accuracy on the held-out slice of the subsample.
    pub separator_accuracy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub direction: Vec<f64>,
}

impl Cav {
    pub fn dim(&self) -> usize {
        self.direction.len()
    }
}

/// CAVs surviving the accuracy filter, in repetition order.
#[derive(Debug, Clone, PartialEq)]
pub struct CavSet {
    pub cavs: Vec<Cav>,
    pub dropped: usize,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const RANDOM_STREAM: u64 = 0x7261_6e64_6f6d_0001;

/// Seed of the subsample stream for repetition `rep` of a concept's (or the
/// random baseline's) CAVs.
pub fn subsample_seed(seed: u64, role: CavRole, rep: usize) -> u64 {
    let domain = match role {
        CavRole::Concept => 0,
        CavRole::Random => RANDOM_STREAM,
    };
    mix(mix(seed ^ domain).wrapping_add(rep as u64))
}

/// Trains CAV number `rep_index` for `concept`.
pub fn train_single_cav(
    concept: &str,
    concept_embs: &[&[f64]],
    random_embs: &[&[f64]],
    config: &CavConfig,
    rep_index: usize,
) -> Result<Cav> {
    config.validate()?;
    let concept_embs = pool(concept_embs, config.concept_pool, "concept")?;
    let random_embs = pool(random_embs, config.random_pool, "random")?;
    let dim = check_dims(concept_embs.iter().chain(random_embs))?;
    if concept_embs.len() < config.n_concept_sub || random_embs.len() < config.n_random_sub {
        return Err(Error::Config(format!(
            "pools of {} concept and {} random embeddings are smaller than n_concept_sub {} / n_random_sub {}",
            concept_embs.len(),
            random_embs.len(),
            config.n_concept_sub,
            config.n_random_sub
        )));
    }
    let seed = subsample_seed(config.seed, CavRole::Concept, rep_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<&[f64]> = index::sample(&mut rng, concept_embs.len(), config.n_concept_sub)
        .into_iter()
        .map(|i| concept_embs[i])
        .collect();
    let neg: Vec<&[f64]> = index::sample(&mut rng, random_embs.len(), config.n_random_sub)
        .into_iter()
        .map(|i| random_embs[i])
        .collect();
    let fit = fit_separator(&pos, &neg, dim, config)?;
    Ok(Cav {
        concept: concept.to_string(),
        role: CavRole::Concept,
        rep_index,
        subsample_seed: seed,
        separator_accuracy: fit.accuracy,
        converged: fit.converged,
        iterations: fit.iterations,
        direction: fit.direction,
    })
}

/// Trains `p_repeats` concept CAVs and drops those below
/// `min_separator_accuracy`.
pub fn train_cav_set(
    concept: &str,
    concept_embs: &[&[f64]],
    random_embs: &[&[f64]],
    config: &CavConfig,
) -> Result<CavSet> {
    config.validate()?;
    let all = repeat(config.p_repeats, |rep| {
        train_single_cav(concept, concept_embs, random_embs, config, rep)
    })?;
    let total = all.len();
    let cavs: Vec<Cav> = all
        .into_iter()
        .filter(|c| c.separator_accuracy >= config.min_separator_accuracy)
        .collect();
    if cavs.is_empty() {
        return Err(Error::AllCavsFiltered {
            total,
            threshold: config.min_separator_accuracy,
        });
    }
    Ok(CavSet {
        dropped: total - cavs.len(),
        cavs,
    })
}

/// Random-baseline CAVs: each separates one random subsample of size
/// `n_concept_sub` from a disjoint random subsample of size `n_random_sub`.
/// No accuracy filter is applied.
pub fn train_random_cav_set(random_embs: &[&[f64]], config: &CavConfig) -> Result<Vec<Cav>> {
    config.validate()?;
    let random_embs = pool(random_embs, config.random_pool, "random")?;
    let dim = check_dims(random_embs.iter())?;
    let need = config.n_concept_sub + config.n_random_sub;
    if random_embs.len() < need {
        return Err(Error::Config(format!(
            "random pool of {} is smaller than n_concept_sub + n_random_sub = {need}",
            random_embs.len()
        )));
    }
    repeat(config.p_repeats, |rep| {
        let seed = subsample_seed(config.seed, CavRole::Random, rep);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked: Vec<&[f64]> = index::sample(&mut rng, random_embs.len(), need)
            .into_iter()
            .map(|i| random_embs[i])
            .collect();
        let (pos, neg) = picked.split_at(config.n_concept_sub);
        let fit = fit_separator(pos, neg, dim, config)?;
        Ok(Cav {
            concept: "random".to_string(),
            role: CavRole::Random,
            rep_index: rep,
            subsample_seed: seed,
            separator_accuracy: fit.accuracy,
            converged: fit.converged,
            iterations: fit.iterations,
            direction: fit.direction,
        })
    })
}

#[cfg(feature = "parallel")]
fn repeat<F>(n: usize, f: F) -> Result<Vec<Cav>>
where
    F: Fn(usize) -> Result<Cav> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn repeat<F>(n: usize, f: F) -> Result<Vec<Cav>>
where
    F: Fn(usize) -> Result<Cav>,
{
    (0..n).map(f).collect()
}

fn pool<'a, 'b>(embs: &'a [&'b [f64]], size: Option<usize>, what: &str) -> Result<&'a [&'b [f64]]> {
    match size {
        None => Ok(embs),
        Some(n) if n <= embs.len() => Ok(&embs[..n]),
        Some(n) => Err(Error::Config(format!(
            "{what}_pool is {n} but only {} {what} embeddings are available",
            embs.len()
        ))),
    }
}

fn check_dims<'a>(mut rows: impl Iterator<Item = &'a &'a [f64]>) -> Result<usize> {
    let Some(first) = rows.next() else {
        return Err(Error::Empty("embedding pool"));
    };
    let dim = first.len();
    for (i, r) in rows.enumerate() {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                id: format!("pool row {}", i + 1),
                expected: dim,
                found: r.len(),
            });
        }
    }
    if dim == 0 {
        return Err(Error::Validation("embeddings have dimension 0".into()));
    }
    Ok(dim)
}

struct Fit {
    direction: Vec<f64>,
    accuracy: f64,
    converged: bool,
    iterations: usize,
}

fn holdout_len(n: usize) -> usize {
    ((n as f64 * HOLDOUT_FRACTION).round() as usize).clamp(1, n - 1)
}

/// Fits the separator on the leading 80% of each (already shuffled) class
/// and scores it on the trailing 20%.
fn fit_separator(pos: &[&[f64]], neg: &[&[f64]], dim: usize, config: &CavConfig) -> Result<Fit> {
    let (pos_train, pos_test) = pos.split_at(pos.len() - holdout_len(pos.len()));
    let (neg_train, neg_test) = neg.split_at(neg.len() - holdout_len(neg.len()));

    let rows: Vec<&[f64]> = pos_train.iter().chain(neg_train).copied().collect();
    let labels: Vec<f64> = std::iter::repeat_n(1.0, pos_train.len())
        .chain(std::iter::repeat_n(0.0, neg_train.len()))
        .collect();
    let centre = mean_vector(&rows, dim);
    let n = rows.len() as f64;
    let mut feats: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&centre).map(|(x, m)| x - m).collect())
        .collect();
    let scale = (feats.iter().map(|f| dot(f, f)).sum::<f64>() / n).sqrt();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Validation(
            "CAV subsample has no spread; concept and random embeddings coincide".into(),
        ));
    }
    for f in &mut feats {
        f.iter_mut().for_each(|x| *x /= scale);
    }

    let lambda = config.l2_penalty;
    // Smoothness bound of the mean logistic loss on unit-RMS features (+1 for the bias).
    let step = 1.0 / (0.25 * 2.0 + lambda);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; dim];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.max_iters {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (f, y) in feats.iter().zip(&labels) {
            let err = sigmoid(dot(&w, f) + b) - y;
            for (g, x) in grad_w.iter_mut().zip(f) {
                *g += err * x;
            }
            grad_b += err;
        }
        for (g, wi) in grad_w.iter_mut().zip(&w) {
            *g = *g / n + lambda * wi;
        }
        grad_b /= n;
        let gnorm = (dot(&grad_w, &grad_w) + grad_b * grad_b).sqrt();
        iterations = it;
        if gnorm <= config.tolerance {
            converged = true;
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi -= step * g;
        }
        b -= step * grad_b;
        iterations = it + 1;
    }

    let all_pos = mean_vector(pos, dim);
    let all_neg = mean_vector(neg, dim);
    let gap: Vec<f64> = all_pos.iter().zip(&all_neg).map(|(p, q)| p - q).collect();
    let mut direction = match normalized(&w) {
        Some(d) => d,
        None => normalized(&gap).ok_or_else(|| {
            Error::Validation("CAV separator is degenerate: zero weights and coincident class means".into())
        })?,
    };
    if dot(&gap, &direction) < 0.0 {
        direction.iter_mut().for_each(|x| *x = -*x);
    }

    // Held-out decision in embedding space: w·(x - centre)/scale + b > 0.
    let decide = |x: &[f64]| -> bool {
        let z: f64 = x
            .iter()
            .zip(&centre)
            .zip(&w)
            .map(|((xi, m), wi)| wi * (xi - m) / scale)
            .sum();
        z + b > 0.0
    };
    let tpr = pos_test.iter().filter(|x| decide(x)).count() as f64 / pos_test.len() as f64;
    let tnr = neg_test.iter().filter(|x| !decide(x)).count() as f64 / neg_test.len() as f64;

    Ok(Fit {
        direction,
        accuracy: 0.5 * (tpr + tnr),
        converged,
        iterations,
    })
}

#[derive(Serialize, Deserialize)]
struct CavHeader {
    format: String,
    version: u32,
    dim: usize,
    config: CavConfig,
}

/// Writes CAVs in the line-delimited interchange style: a `#` JSON header
/// (with the training configuration) followed by one CAV per line.
pub fn write_cavs<W: Write>(cavs: &[Cav], config: &CavConfig, mut out: W) -> Result<()> {
    if let Some(c) = cavs.iter().find(|c| c.direction.iter().any(|x| !x.is_finite())) {
        return Err(Error::Serialize {
            id: format!("{}#{}", c.concept, c.rep_index),
            message: "direction contains a non-finite value".into(),
        });
    }
    let header = CavHeader {
        format: CAV_FORMAT.into(),
        version: crate::store::FORMAT_VERSION,
        dim: cavs.first().map_or(0, Cav::dim),
        config: config.clone(),
    };
    writeln!(out, "# {}", crate::store::to_json(&header, "header")?)?;
    for c in cavs {
        writeln!(out, "{}", crate::store::to_json(c, &c.concept)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cavs<R: BufRead>(reader: R) -> Result<Vec<Cav>> {
    let mut cavs: Vec<Cav> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let cav: Cav = serde_json::from_str(body).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = cavs.first() {
            if first.dim() != cav.dim() {
                return Err(Error::DimensionMismatch {
                    id: format!("{}#{}", cav.concept, cav.rep_index),
                    expected: first.dim(),
                    found: cav.dim(),
                });
            }
        }
        cavs.push(cav);
    }
    Ok(cavs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        normalized(&v).unwrap()
    }

    fn cluster(centre: &[f64], sd: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let noise = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| centre.iter().map(|c| c + noise.sample(rng)).collect())
            .collect()
    }

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    fn planted(dim: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = unit(dim, &mut rng);
        let plus: Vec<f64> = c.iter().map(|x| 10.0 * x).collect();
        let minus: Vec<f64> = c.iter().map(|x| -10.0 * x).collect();
        let concept = cluster(&plus, 0.1, 500, &mut rng);
        let random = cluster(&minus, 0.1, 1000, &mut rng);
        (c, concept, random)
    }

    fn small_config(p: usize) -> CavConfig {
        CavConfig {
            p_repeats: p,
            ..CavConfig::default()
        }
    }

    #[test]
    fn recovers_planted_direction() {
        let (c, concept, random) = planted(16, 1);
        let cav = train_single_cav("c", &refs(&concept), &refs(&random), &small_config(2), 0).unwrap();
        assert!(dot(&cav.direction, &c) >= 0.99, "cos = {}", dot(&cav.direction, &c));
        assert!((dot(&cav.direction, &cav.direction) - 1.0).abs() < 1e-9);
        assert_eq!(cav.separator_accuracy, 1.0);
    }

    /// Max-margin direction by exhaustive search over angles in the plane.
    fn grid_max_margin(pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Vec<f64> {
        let mut best = (f64::NEG_INFINITY, vec![1.0, 0.0]);
        for k in 0..36_000 {
            let th = k as f64 * std::f64::consts::TAU / 36_000.0;
            let u = [th.cos(), th.sin()];
            let lo = pos.iter().map(|p| dot(p, &u)).fold(f64::INFINITY, f64::min);
            let hi = neg.iter().map(|q| dot(q, &u)).fold(f64::NEG_INFINITY, f64::max);
            if lo - hi > best.0 {
                best = (lo - hi, u.to_vec());
            }
        }
        best.1
    }

    #[test]
    fn planted_direction_matches_rotation_grid_in_two_dims() {
        let (c, concept, random) = planted(2, 5);
        let oracle = grid_max_margin(&concept, &random);
        assert!(dot(&oracle, &c) > 0.99);
        let cav = train_single_cav("c", &refs(&concept), &refs(&random), &small_config(2), 3).unwrap();
        assert!(dot(&cav.direction, &oracle) >= 0.99);
        assert!(dot(&cav.direction, &c) >= 0.99);
    }

    #[test]
    fn identical_pools_give_chance_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zero = vec![0.0; 16];
        let concept = cluster(&zero, 1.0, 500, &mut rng);
        let random = cluster(&zero, 1.0, 1000, &mut rng);
        let set = train_cav_set("none", &refs(&concept), &refs(&random), &small_config(20)).unwrap();
        let mean = set.cavs.iter().map(|c| c.separator_accuracy).sum::<f64>() / 20.0;
        assert!((mean - 0.5).abs() <= 0.15, "mean accuracy {mean}");
        for cav in &set.cavs {
            assert!((cav.separator_accuracy - 0.5).abs() <= 0.3);
        }
    }

    #[test]
    fn scale_invariant_direction() {
        let (_, concept, random) = planted(16, 2);
        let scaled = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|x| 3.0 * x).collect()).collect()
        };
        let cfg = small_config(2);
        let a = train_single_cav("c", &refs(&concept), &refs(&random), &cfg, 1).unwrap();
        let (c3, r3) = (scaled(&concept), scaled(&random));
        let b = train_single_cav("c", &refs(&c3), &refs(&r3), &cfg, 1).unwrap();
        for (x, y) in a.direction.iter().zip(&b.direction) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn cav_set_is_deterministic_and_ordered() {
        let (c, concept, random) = planted(16, 3);
        let cfg = small_config(20);
        let a = train_cav_set("c", &refs(&concept), &refs(&random), &cfg).unwrap();
        let b = train_cav_set("c", &refs(&concept), &refs(&random), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cavs.len(), 20);
        assert_eq!(a.dropped, 0);
        for (i, cav) in a.cavs.iter().enumerate() {
            assert_eq!(cav.rep_index, i);
            assert!(dot(&cav.direction, &c) >= 0.9);
        }
        let seeds: std::collections::BTreeSet<_> = a.cavs.iter().map(|c| c.subsample_seed).collect();
        assert_eq!(seeds.len(), 20);
    }

    #[test]
    fn all_filtered_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let zero = vec![0.0; 8];
        let concept = cluster(&zero, 1.0, 100, &mut rng);
        let random = cluster(&zero, 1.0, 300, &mut rng);
        let cfg = CavConfig {
            p_repeats: 2,
            min_separator_accuracy: 0.9,
            ..CavConfig::default()
        };
        let err = train_cav_set("c", &refs(&concept), &refs(&random), &cfg).unwrap_err();
        assert!(matches!(err, Error::AllCavsFiltered { total: 2, .. }));
        assert!(err.to_string().contains("lower min_separator_accuracy"));
    }

    #[test]
    fn random_baseline_accuracy_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pool = cluster(&[0.0; 16], 1.0, 250, &mut rng);
        let cfg = small_config(20);
        let cavs = train_random_cav_set(&refs(&pool), &cfg).unwrap();
        assert_eq!(cavs.len(), 20);
        let mean = cavs.iter().map(|c| c.separator_accuracy).sum::<f64>() / 20.0;
        assert!((mean - 0.5).abs() <= 0.1, "mean {mean}");
        assert_eq!(cavs, train_random_cav_set(&refs(&pool), &cfg).unwrap());
        assert!(cavs.iter().all(|c| c.role == CavRole::Random));
    }

    #[test]
    fn configuration_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pool = cluster(&[0.0; 4], 1.0, 100, &mut rng);
        let p0 = small_config(0);
        assert!(matches!(train_random_cav_set(&refs(&pool), &p0), Err(Error::Config(_))));
        let cfg = small_config(2);
        assert!(matches!(train_random_cav_set(&refs(&pool), &cfg), Err(Error::Config(_))));
        assert!(matches!(
            train_single_cav("c", &refs(&pool[..10]), &refs(&pool), &cfg, 0),
            Err(Error::Config(_))
        ));
        let capped = CavConfig {
            concept_pool: Some(40),
            ..small_config(2)
        };
        assert!(matches!(capped.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn permuted_pools_still_recover_direction() {
        let (c, mut concept, mut random) = planted(16, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in (1..concept.len()).rev() {
            concept.swap(i, rng.random_range(0..=i));
        }
        for i in (1..random.len()).rev() {
            random.swap(i, rng.random_range(0..=i));
        }
        let set = train_cav_set("c", &refs(&concept), &refs(&random), &small_config(5)).unwrap();
        assert!(set.cavs.iter().all(|cav| dot(&cav.direction, &c) >= 0.9));
    }

    #[test]
    fn cav_file_round_trip() {
        let (_, concept, random) = planted(4, 7);
        let cfg = small_config(2);
        let set = train_cav_set("c", &refs(&concept), &refs(&random), &cfg).unwrap();
        let mut buf = Vec::new();
        write_cavs(&set.cavs, &cfg, &mut buf).unwrap();
        assert_eq!(read_cavs(buf.as_slice()).unwrap(), set.cavs);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn unit_norm_and_oriented(seed in 0u64..1000, dim in 2usize..12, shift in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let centre: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let moved: Vec<f64> = centre.iter().map(|x| x + shift).collect();
            let concept = cluster(&moved, 1.0, 60, &mut rng);
            let random = cluster(&centre, 1.0, 220, &mut rng);
            let cfg = CavConfig { p_repeats: 2, max_iters: 300, ..CavConfig::default() };
            let cav = train_single_cav("p", &refs(&concept), &refs(&random), &cfg, seed as usize).unwrap();
            proptest::prop_assert!((dot(&cav.direction, &cav.direction).sqrt() - 1.0).abs() < 1e-9);
            // Orientation holds on the CAV's own subsample.
            let mut rng = ChaCha8Rng::seed_from_u64(cav.subsample_seed);
            let pi = index::sample(&mut rng, concept.len(), cfg.n_concept_sub);
            let ni = index::sample(&mut rng, random.len(), cfg.n_random_sub);
            let mp: f64 = pi.iter().map(|i| dot(&concept[i], &cav.direction)).sum::<f64>() / pi.len() as f64;
            let mn: f64 = ni.iter().map(|i| dot(&random[i], &cav.direction)).sum::<f64>() / ni.len() as f64;
            proptest::prop_assert!(mp >= mn);
        }
    }
}
