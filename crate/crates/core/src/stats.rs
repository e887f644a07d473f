//! Rank statistics and density estimation: Wilcoxon signed-rank test
//! (exact and normal-approximation modes), Pearson correlation, Gaussian
//! KDE and the pooled best-layer histogram.

use crate::probe::FeatureSummary;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("input is constant")]
    ConstantInput,
    #[error("need at least two samples")]
    EmptySample,
    #[error("no summaries in the requested class")]
    EmptyClass,
    #[error("exact enumeration infeasible for n = {0}")]
    TooManyForExact(usize),
    #[error("inputs differ in length or are too short")]
    BadInput,
}

// ---------------------------------------------------------------------------
// Normal CDF via the incomplete gamma function (double precision).
// ---------------------------------------------------------------------------

fn gamma_ln(x: f64) -> f64 {
    // Lanczos approximation, g = 5, n = 6.
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Regularized lower incomplete gamma P(a, x) by series expansion.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let gln = gamma_ln(a);
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - gln).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let gln = gamma_ln(a);
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / 1e-300;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < 1e-300 {
            d = 1e-300;
        }
        c = b + an / c;
        if c.abs() < 1e-300 {
            c = 1e-300;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - gln).exp() * h
}

fn erfc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let x2 = x * x;
    let value = if x2 < 1.5 {
        1.0 - gamma_p_series(0.5, x2)
    } else {
        gamma_q_cf(0.5, x2)
    };
    if x > 0.0 {
        value
    } else {
        2.0 - value
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

/// Paired observations sharing an identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub pairs: Vec<(f64, f64)>,
}

impl PairedSample {
    pub fn from_differences(diffs: &[f64]) -> PairedSample {
        PairedSample {
            pairs: diffs.iter().map(|&d| (d, 0.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMode {
    /// Exact when `n_effective` is at most [`EXACT_THRESHOLD`].
    Auto,
    ForceExact,
    ForceApproximation,
}

/// Exact enumeration is used up to this many nonzero differences.
pub const EXACT_THRESHOLD: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// W+: the rank sum of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: TestMethod,
}

/// Average ranks of |d|, with tie-group sizes for the variance
/// correction.
fn average_ranks(abs_d: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..abs_d.len()).collect();
    order.sort_by(|&a, &b| abs_d[a].partial_cmp(&abs_d[b]).expect("finite"));
    let mut ranks = vec![0.0; abs_d.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs_d[order[j + 1]] == abs_d[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    (ranks, tie_sizes)
}

/// Exact null distribution of 2*W+ by dynamic programming over sign
/// assignments; returns counts indexed by doubled rank sum. Identical to
/// enumerating all 2^n assignments, in O(n * total) time.
fn doubled_rank_distribution(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in doubled_ranks {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    counts
}

/// Wilcoxon signed-rank test on paired data. Differences a-b of zero are
/// dropped; ties in |d| get average ranks. Exact mode enumerates the sign
/// distribution (tie-aware); otherwise a normal approximation with
/// tie-corrected variance and 0.5 continuity correction is used.
pub fn wilcoxon_signed_rank(
    sample: &PairedSample,
    alternative: Alternative,
) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with_mode(sample, alternative, ExactMode::Auto)
}

pub fn wilcoxon_signed_rank_with_mode(
    sample: &PairedSample,
    alternative: Alternative,
    mode: ExactMode,
) -> Result<TestResult, StatsError> {
    let diffs: Vec<f64> = sample
        .pairs
        .iter()
        .map(|&(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::AllZeroDifferences);
    }
    let abs_d: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, tie_sizes) = average_ranks(&abs_d);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(r, _)| r)
        .sum();

    let exact = match mode {
        ExactMode::Auto => n <= EXACT_THRESHOLD,
        ExactMode::ForceExact => {
            if n > 62 {
                return Err(StatsError::TooManyForExact(n));
            }
            true
        }
        ExactMode::ForceApproximation => false,
    };

    let p_value = if exact {
        let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
        let counts = doubled_rank_distribution(&doubled);
        let w2 = (w_plus * 2.0).round() as usize;
        let total = 2f64.powi(n as i32);
        let p_ge: f64 = counts[w2.min(counts.len() - 1)..]
            .iter()
            .map(|&c| c as f64)
            .sum::<f64>()
            / total;
        let p_le: f64 = counts[..=w2.min(counts.len() - 1)]
            .iter()
            .map(|&c| c as f64)
            .sum::<f64>()
            / total;
        match alternative {
            Alternative::Greater => p_ge,
            Alternative::Less => p_le,
            Alternative::TwoSided => (2.0 * p_ge.min(p_le)).min(1.0),
        }
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = tie_sizes
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum();
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let sigma = variance.sqrt();
        match alternative {
            Alternative::Greater => 1.0 - normal_cdf((w_plus - 0.5 - mean) / sigma),
            Alternative::Less => normal_cdf((w_plus + 0.5 - mean) / sigma),
            Alternative::TwoSided => {
                let centered = w_plus - mean;
                let correction = 0.5 * centered.signum();
                let z = (centered - correction) / sigma;
                (2.0 * normal_cdf(z).min(1.0 - normal_cdf(z))).min(1.0)
            }
        }
    };
    Ok(TestResult {
        statistic: w_plus,
        p_value,
        n_effective: n,
        method: if exact {
            TestMethod::Exact
        } else {
            TestMethod::NormalApproximation
        },
    })
}

// ---------------------------------------------------------------------------
// Pearson correlation
// ---------------------------------------------------------------------------

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(StatsError::BadInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

// ---------------------------------------------------------------------------
// Kernel density estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Sample standard deviation with an Ln-1 denominator, floored at 1e-9
/// so a point mass still yields a usable bandwidth.
fn sample_std_floored(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt().max(1e-9)
}

/// Scott's rule bandwidth: sigma * n^(-1/5).
pub fn scott_bandwidth(samples: &[f64]) -> f64 {
    sample_std_floored(samples) * (samples.len() as f64).powf(-0.2)
}

/// Gaussian-kernel density estimate evaluated on `grid`. Bandwidth
/// defaults to Scott's rule.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::EmptySample);
    }
    if let Some(h) = bandwidth {
        if h <= 0.0 {
            return Err(StatsError::BadInput);
        }
    }
    let h = bandwidth.unwrap_or_else(|| scott_bandwidth(samples));
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &s in samples {
                let u = (x - s) / h;
                acc += (-0.5 * u * u).exp();
            }
            acc * norm
        })
        .collect())
}

pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let step = (end - start) / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

// ---------------------------------------------------------------------------
// Best-layer histogram
// ---------------------------------------------------------------------------

/// Pool `best_layer_per_fold` across the given summaries, count per layer
/// and fit a KDE over [0, layer_count - 1].
pub fn best_layer_histogram(
    summaries: &[&FeatureSummary],
    layer_count: usize,
) -> Result<(Vec<usize>, KdeCurve), StatsError> {
    if summaries.is_empty() || layer_count == 0 {
        return Err(StatsError::EmptyClass);
    }
    let mut counts = vec![0usize; layer_count];
    let mut pooled = Vec::new();
    for summary in summaries {
        for &layer in &summary.best_layer_per_fold {
            if layer >= layer_count {
                return Err(StatsError::BadInput);
            }
            counts[layer] += 1;
            pooled.push(layer as f64);
        }
    }
    if pooled.len() < 2 {
        return Err(StatsError::EmptySample);
    }
    let grid = linspace(0.0, (layer_count - 1) as f64, 256);
    let density = kde(&pooled, &grid, None)?;
    Ok((counts, KdeCurve { grid, density }))
}
