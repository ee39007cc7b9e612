//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! lines are printed on every `cargo test`; exits non-zero if any fails.

use std::fs;
use std::time::{Duration, Instant};

use conceptaudit::cav::{self, Cav, CavConfig, CavRole};
use conceptaudit::cli;
use conceptaudit::refmodels::{self, Head, MlpHead, SetCounts, SyntheticSpec};
use conceptaudit::stats;
use conceptaudit::store::{EmbeddingRecord, SetTag};
use conceptaudit::sufficiency::{self, ChallengeProbs};
use conceptaudit::tcav;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = (&'static str, fn() -> Outcome);

fn main() {
    let start = Instant::now();
    let checks: [Check; 8] = [
        ("planted-direction CAV recovery", cav_recovery),
        ("TCAV scores vs extended-precision oracle", tcav_oracle),
        ("monotone over-reliance ranking", monotone_ranking),
        ("False_Suff anchors", false_suff_anchors),
        ("exact vs grid AUC", exact_vs_grid_auc),
        ("MLP gradient vs finite differences", mlp_gradient),
        ("Welch t-test", welch),
        ("audit determinism across parallelism", audit_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {}: {} {name}: {} [{:.2}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    let total = start.elapsed();
    let pass = total <= Duration::from_secs(120);
    failed += usize::from(!pass);
    println!(
        "criterion 9: {} full primary suite runtime: {:.2}s (limit 120s)",
        if pass { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    );
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cav_recovery() -> Outcome {
    let t = Instant::now();
    let spec = SyntheticSpec {
        noise_sd: 0.1,
        counts: SetCounts {
            concept: 500,
            random: 1000,
            input: 10,
            challenge_pos: 2,
            challenge_neg: 2,
        },
        seed: 101,
        ..SyntheticSpec::default()
    };
    let data = refmodels::generate_synthetic(&spec).unwrap();
    let cfg = CavConfig {
        p_repeats: 20,
        n_concept_sub: 50,
        n_random_sub: 200,
        ..CavConfig::default()
    };
    let set = cav::train_cav_set(
        "planted",
        &data.store.embeddings(SetTag::Concept),
        &data.store.embeddings(SetTag::Random),
        &cfg,
    )
    .unwrap();
    let elapsed = t.elapsed();
    let min_cos = set
        .cavs
        .iter()
        .map(|c| dot(&c.direction, &data.concept_direction))
        .fold(f64::INFINITY, f64::min);
    let pass = set.cavs.len() == 20 && min_cos >= 0.9 && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "{} CAVs, min cosine {min_cos:.6} (>= 0.9), {:.3}s (< 5s)",
            set.cavs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Double-double arithmetic: value = hi + lo with |lo| <= ulp(hi) / 2.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let lo = s.lo + self.lo + o.lo;
        Dd::two_sum(s.hi, lo)
    }

    fn prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }
}

fn tcav_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_dir: f64 = 0.0;
    let mut worst_mag: f64 = 0.0;
    for inst in 0..100 {
        let d = rng.random_range(1..=64);
        let n = rng.random_range(1..=10_000);
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dot(&raw, &raw).sqrt();
        let direction: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let cav = Cav {
            concept: "c".into(),
            role: CavRole::Concept,
            rep_index: 0,
            subsample_seed: 0,
            separator_accuracy: 1.0,
            converged: true,
            iterations: 0,
            direction: direction.clone(),
        };
        let records: Vec<EmbeddingRecord> = (0..n)
            .map(|i| {
                let mut r = EmbeddingRecord::new(format!("x{i}"), vec![0.0; d], SetTag::Input);
                r.gradient = Some((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
                r
            })
            .collect();
        let refs: Vec<&EmbeddingRecord> = records.iter().collect();
        let dir = tcav::tcav_dir(&refs, &cav).unwrap();
        let mag = tcav::tcav_mag(&refs, &cav).unwrap();

        let mut positive = 0usize;
        let mut pos_sum = Dd::ZERO;
        for r in &records {
            let s = r
                .gradient
                .as_ref()
                .unwrap()
                .iter()
                .zip(&direction)
                .fold(Dd::ZERO, |acc, (g, v)| acc.add(Dd::prod(*g, *v)));
            if s.is_positive() {
                positive += 1;
                pos_sum = pos_sum.add(s);
            }
        }
        let oracle_dir = positive as f64 / n as f64;
        let oracle_mag = (pos_sum.hi + pos_sum.lo) / n as f64;
        worst_dir = worst_dir.max((dir - oracle_dir).abs());
        worst_mag = worst_mag.max((mag - oracle_mag).abs());
        if !(worst_dir <= 1e-12 && worst_mag <= 1e-12) {
            return outcome(false, format!("instance {inst} (n={n}, d={d}): dir err {worst_dir:e}, mag err {worst_mag:e}"));
        }
    }
    outcome(
        true,
        format!("100 instances, max |dir err| {worst_dir:e}, max |mag err| {worst_mag:e} (<= 1e-12)"),
    )
}

fn monotone_ranking() -> Outcome {
    let t = Instant::now();
    let mut mags = Vec::new();
    let mut fss = Vec::new();
    for alpha in [0.1, 1.0, 10.0] {
        let spec = SyntheticSpec {
            concept_strength: alpha,
            context_strength: 1.0,
            noise_sd: 0.5,
            seed: 303,
            ..SyntheticSpec::default()
        };
        let data = refmodels::generate_synthetic(&spec).unwrap();
        let s = &data.store;
        let set = cav::train_cav_set(
            "c",
            &s.embeddings(SetTag::Concept),
            &s.embeddings(SetTag::Random),
            &CavConfig::default(),
        )
        .unwrap();
        let scores = tcav::score_concept(&set.cavs, &s.select(SetTag::Input)).unwrap();
        mags.push(scores.mag_scores.iter().sum::<f64>() / scores.len() as f64);
        fss.push(sufficiency::threshold_curve(&ChallengeProbs::from_store(s).unwrap()).false_suff);
    }
    let elapsed = t.elapsed();
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    let pass = increasing(&mags) && increasing(&fss) && elapsed < Duration::from_secs(30);
    outcome(
        pass,
        format!(
            "alpha 0.1/1/10: mean mag {:.4} < {:.4} < {:.4}, False_Suff {:.4} < {:.4} < {:.4}, {:.2}s (< 30s)",
            mags[0],
            mags[1],
            mags[2],
            fss[0],
            fss[1],
            fss[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn false_suff_anchors() -> Outcome {
    let separated = ChallengeProbs::new(vec![1.0; 40], vec![0.0; 40]).unwrap();
    let same = ChallengeProbs::new(vec![0.73; 40], vec![0.73; 40]).unwrap();
    let fs_sep = sufficiency::threshold_curve(&separated).false_suff;
    let fs_same = sufficiency::threshold_curve(&same).false_suff;
    outcome(
        fs_sep == 0.0 && fs_same == 0.5,
        format!("separated -> {fs_sep:?} (exactly 0), identical point mass -> {fs_same:?} (exactly 0.5)"),
    )
}

/// Midpoint Riemann sum of plain accuracy over `steps` thresholds in [0, 1].
fn grid_auc(pos: &[f64], neg: &[f64], steps: usize) -> f64 {
    let mut pos = pos.to_vec();
    let mut neg = neg.to_vec();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let n = (pos.len() + neg.len()) as f64;
    let (mut pi, mut ni) = (0, 0);
    let mut sum = 0.0;
    for k in 0..steps {
        let t = (k as f64 + 0.5) / steps as f64;
        while pi < pos.len() && pos[pi] <= t {
            pi += 1;
        }
        while ni < neg.len() && neg[ni] <= t {
            ni += 1;
        }
        sum += ((pos.len() - pi) + ni) as f64 / n;
    }
    sum / steps as f64
}

fn exact_vs_grid_auc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let total = rng.random_range(2..=100);
        let n_pos = rng.random_range(1..total);
        let shift: f64 = rng.random_range(-0.3..0.3);
        let mut draw = |bias: f64| (rng.random::<f64>() + bias).clamp(0.0, 1.0);
        let pos: Vec<f64> = (0..n_pos).map(|_| draw(shift)).collect();
        let neg: Vec<f64> = (0..total - n_pos).map(|_| draw(-shift)).collect();
        let exact = sufficiency::threshold_curve(&ChallengeProbs::new(pos.clone(), neg.clone()).unwrap()).auc;
        worst = worst.max((exact - grid_auc(&pos, &neg, 1_000_000)).abs());
    }
    outcome(worst <= 1e-3, format!("200 sets, max |exact - grid| {worst:e} (<= 1e-3)"))
}

fn mlp_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let d = rng.random_range(1..=32);
        let k = rng.random_range(1..=16);
        let head = MlpHead::random(d, k, 1.0, 6060 + inst).unwrap();
        let e: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad = head.gradient(&e).unwrap();
        for j in 0..d {
            let (mut up, mut down) = (e.clone(), e.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (head.logit(&up).unwrap() - head.logit(&down).unwrap()) / (2.0 * h);
            worst = worst.max((grad[j] - fd).abs());
        }
    }
    outcome(worst <= 1e-6, format!("100 instances, max componentwise error {worst:e} (<= 1e-6)"))
}

fn reference_welch_p(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
    let (ma, mb) = (mean(a), mean(b));
    let (qa, qb) = (var(a, ma) / a.len() as f64, var(b, mb) / b.len() as f64);
    let t = (ma - mb) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * dist.cdf(-t.abs())
}

fn welch() -> Outcome {
    let same = [0.3, 0.7, 0.5, 0.9, 0.1];
    let r = stats::welch_t_test(&same, &same, 0.05).unwrap();
    if !(r.t_statistic == 0.0 && r.p_value == 1.0) {
        return outcome(false, format!("identical samples gave t = {}, p = {}", r.t_statistic, r.p_value));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_p: f64 = 0.0;
    let mut antisymmetric = true;
    for _ in 0..20 {
        let na = rng.random_range(2..=40);
        let nb = rng.random_range(2..=40);
        let shift = rng.random_range(-1.0..1.0);
        let sa = rng.random_range(0.1..2.0);
        let sb = rng.random_range(0.1..2.0);
        let a: Vec<f64> = (0..na).map(|_| shift + sa * rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| sb * rng.random_range(-1.0..1.0)).collect();
        let ab = stats::welch_t_test(&a, &b, 0.05).unwrap();
        let ba = stats::welch_t_test(&b, &a, 0.05).unwrap();
        antisymmetric &= ab.t_statistic == -ba.t_statistic;
        worst_p = worst_p.max((ab.p_value - reference_welch_p(&a, &b)).abs());
    }
    outcome(
        antisymmetric && worst_p <= 1e-8,
        format!("identical -> t = 0, p = 1; antisymmetry {antisymmetric}; 20 pairs max |p - reference| {worst_p:e} (<= 1e-8)"),
    )
}

fn audit_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    for (name, alpha, seed) in [("m1", "10", "1"), ("m2", "0.5", "2")] {
        let code = cli::run([
            "conceptaudit",
            "synth",
            "--output-dir",
            &p(name),
            "--concept-strength",
            alpha,
            "--seed",
            seed,
        ]);
        assert_eq!(code, 0);
    }
    let models = [format!("m1={}", p("m1/store.jsonl")), format!("m2={}", p("m2/store.jsonl"))];
    let mut reports = Vec::new();
    for threads in ["1", "4", "1"] {
        let out = p(&format!("out-{threads}-{}", reports.len()));
        let code = cli::run([
            "conceptaudit",
            "audit",
            "--model",
            &models[0],
            "--model",
            &models[1],
            "--p-repeats",
            "10",
            "--threads",
            threads,
            "--output-dir",
            &out,
        ]);
        if code != 0 {
            return outcome(false, format!("audit with {threads} threads exited {code}"));
        }
        reports.push(fs::read(format!("{out}/report.jsonl")).unwrap());
    }
    let identical = reports.windows(2).all(|w| w[0] == w[1]);
    outcome(
        identical,
        format!("3 runs (threads 1, 4, 1): report.jsonl byte-identical = {identical} ({} bytes)", reports[0].len()),
    )
}
