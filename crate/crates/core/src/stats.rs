//! Descriptive statistics and Welch's two-sample t-test.
//!
//! The two-sided p-value is `I_x(df/2, 1/2)` with `x = df / (df + t^2)`,
//! where `I` is the regularized incomplete beta function evaluated by its
//! continued fraction (modified Lentz).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Variances are floored here before dividing by them.
const VARIANCE_FLOOR: f64 = 1e-300;

/// Arithmetic mean and sample standard deviation (`n - 1` denominator,
/// zero for a single sample).
pub fn describe(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub mean_concept: f64,
    pub sd_concept: f64,
    pub mean_random: f64,
    pub sd_random: f64,
    pub t_statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
}

/// Two-sided Welch t-test of `a` (concept scores) against `b` (random
/// scores). `significant` is `p_value < alpha`.
pub fn welch_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<SignificanceResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Validation(format!(
            "Welch t-test needs at least 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha {alpha} is outside [0, 1]")));
    }
    let (ma, sa) = describe(a)?;
    let (mb, sb) = describe(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);

    let (t, df, p) = if sa == 0.0 && sb == 0.0 && ma == mb {
        (0.0, na + nb - 2.0, 1.0)
    } else {
        let ea = (sa * sa).max(VARIANCE_FLOOR) / na;
        let eb = (sb * sb).max(VARIANCE_FLOOR) / nb;
        let t = (ma - mb) / (ea + eb).sqrt();
        // Welch–Satterthwaite, written in ratios so floored variances do not underflow.
        let (ra, rb) = (ea / (ea + eb), eb / (ea + eb));
        let df = 1.0 / (ra * ra / (na - 1.0) + rb * rb / (nb - 1.0));
        (t, df, student_t_two_sided_p(t, df))
    };

    Ok(SignificanceResult {
        mean_concept: ma,
        sd_concept: sa,
        mean_random: mb,
        sd_random: sb,
        t_statistic: t,
        df,
        p_value: p,
        alpha,
        significant: p < alpha,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    let denom = df + t2;
    let (x, one_minus_x) = (df / denom, t2 / denom);
    reg_inc_beta(0.5 * df, 0.5, x, one_minus_x).clamp(0.0, 1.0)
}

/// Regularized incomplete beta `I_x(a, b)`; `y` must equal `1 - x` and is
/// passed separately to avoid cancellation.
pub fn reg_inc_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, y) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 10_000;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms) with reflection below 0.5.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
