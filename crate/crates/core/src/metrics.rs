//! Segmentation scores and the nonparametric cohort statistics.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Result, VesselError};
use crate::field::{ensure_same_dims, BinaryMask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// Confusion counts over the pixels inside `region` (every pixel if `None`).
pub fn confusion(
    pred: &BinaryMask,
    truth: &BinaryMask,
    region: Option<&BinaryMask>,
) -> Result<ConfusionCounts> {
    ensure_same_dims(truth.dims(), pred.dims())?;
    if let Some(r) = region {
        ensure_same_dims(truth.dims(), r.dims())?;
    }
    let mut c = ConfusionCounts::default();
    for (i, (&p, &t)) in pred.as_slice().iter().zip(truth.as_slice()).enumerate() {
        if region.is_some_and(|r| !r.as_slice()[i]) {
            continue;
        }
        match (p, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `(TP + TN) / N`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let n = c.total();
    if n == 0 {
        return Err(VesselError::Undefined {
            metric: "accuracy",
            reason: "no pixels evaluated".into(),
        });
    }
    Ok((c.tp + c.tn) as f64 / n as f64)
}

/// `2 TP / (2 TP + FP + FN)`.
pub fn dsc(c: &ConfusionCounts) -> Result<f64> {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return Err(VesselError::Undefined {
            metric: "DSC",
            reason: "no foreground in prediction or truth".into(),
        });
    }
    Ok(2.0 * c.tp as f64 / denom as f64)
}

/// Matthews correlation in its normalized form,
/// `(TP/N - S P) / sqrt(P S (1 - S) (1 - P))` with `S = (TP + FN)/N` and
/// `P = (TP + FP)/N`. Working with fractions keeps the products bounded for
/// large pixel counts.
pub fn mcc(c: &ConfusionCounts) -> Result<f64> {
    let n = c.total();
    let undefined = |reason: &str| VesselError::Undefined {
        metric: "MCC",
        reason: reason.into(),
    };
    if n == 0 {
        return Err(undefined("no pixels evaluated"));
    }
    let nf = n as f64;
    let s = (c.tp + c.fn_) as f64 / nf;
    let p = (c.tp + c.fp) as f64 / nf;
    if c.tp + c.fn_ == 0 {
        return Err(undefined("S = 0 (truth has no foreground)"));
    }
    if c.tn + c.fp == 0 {
        return Err(undefined("S = 1 (truth has no background)"));
    }
    if c.tp + c.fp == 0 {
        return Err(undefined("P = 0 (prediction has no foreground)"));
    }
    if c.tn + c.fn_ == 0 {
        return Err(undefined("P = 1 (prediction has no background)"));
    }
    let v = (c.tp as f64 / nf - s * p) / (p * s * (1.0 - s) * (1.0 - p)).sqrt();
    Ok(v.clamp(-1.0, 1.0))
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Midranks (1-based) of `values`; tied values share the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the groups of tied values.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PValueMethod {
    /// Exact null distribution of U.
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitneyResult {
    /// `min(U_a, U_b)`.
    pub u: f64,
    pub u_a: f64,
    pub u_b: f64,
    pub p_two_sided: f64,
    /// Alternative: values in `a` tend to be smaller than in `b`.
    pub p_less: f64,
    /// Alternative: values in `a` tend to be larger than in `b`.
    pub p_greater: f64,
    pub method: PValueMethod,
}

/// Largest pooled sample size for which exact p-values are computed.
pub const EXACT_MAX_N: usize = 16;

/// Number of labelings of `n_a + n_b` distinct ranks giving each value of
/// `U_a`, via `f(m, n, u) = f(m - 1, n, u - n) + f(m, n - 1, u)`.
pub fn u_null_counts(n_a: usize, n_b: usize) -> Vec<f64> {
    // table[m][n] holds the distribution for sizes (m, n)
    let mut table: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n_b + 1]; n_a + 1];
    for m in 0..=n_a {
        for n in 0..=n_b {
            let mut d = vec![0.0; m * n + 1];
            if m == 0 || n == 0 {
                d[0] = 1.0;
            } else {
                for (u, slot) in d.iter_mut().enumerate() {
                    let from_a = if u >= n { table[m - 1][n].get(u - n).copied().unwrap_or(0.0) } else { 0.0 };
                    let from_b = table[m][n - 1].get(u).copied().unwrap_or(0.0);
                    *slot = from_a + from_b;
                }
            }
            table[m][n] = d;
        }
    }
    std::mem::take(&mut table[n_a][n_b])
}

fn validate_sample(name: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(VesselError::param(name, "empty sample"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(VesselError::param(name, "non-finite value"));
    }
    Ok(())
}

/// Unpaired two-sample Mann-Whitney U test.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult> {
    validate_sample("a", a)?;
    validate_sample("b", b)?;
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r_a: f64 = ranks[..na].iter().sum();
    let u_a = r_a - (na * (na + 1)) as f64 / 2.0;
    let nn = (na * nb) as f64;
    let u_b = nn - u_a;
    let u = u_a.min(u_b);
    let ties = tie_groups(&pooled);
    let has_ties = ties.iter().any(|&t| t > 1);
    let n = na + nb;

    if n <= EXACT_MAX_N && !has_ties {
        let counts = u_null_counts(na, nb);
        let total: f64 = counts.iter().sum();
        let ua = u_a.round() as usize;
        let cdf = |k: usize| counts[..=k].iter().sum::<f64>() / total;
        let p_less = cdf(ua);
        let p_greater = counts[ua..].iter().sum::<f64>() / total;
        let p_two = (2.0 * cdf(u.round() as usize)).min(1.0);
        return Ok(MannWhitneyResult {
            u,
            u_a,
            u_b,
            p_two_sided: p_two,
            p_less,
            p_greater,
            method: PValueMethod::Exact,
        });
    }

    let nf = n as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = nn / 12.0 * ((nf + 1.0) - tie_term);
    let mu = nn / 2.0;
    let (p_two, p_less, p_greater) = if var <= 0.0 {
        (1.0, 1.0, 1.0)
    } else {
        let sd = var.sqrt();
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        let z_two = ((u_a - mu).abs() - 0.5).max(0.0) / sd;
        (
            (2.0 * std_normal.sf(z_two)).min(1.0),
            std_normal.cdf((u_a - mu + 0.5) / sd),
            std_normal.sf((u_a - mu - 0.5) / sd),
        )
    };
    Ok(MannWhitneyResult {
        u,
        u_a,
        u_b,
        p_two_sided: p_two,
        p_less: p_less.min(1.0),
        p_greater: p_greater.min(1.0),
        method: PValueMethod::Normal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpearmanResult {
    pub rho: f64,
    /// Two-sided, from the t approximation with `n - 2` degrees of freedom.
    pub p: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson correlation of midranks).
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<SpearmanResult> {
    validate_sample("a", a)?;
    validate_sample("b", b)?;
    if a.len() != b.len() {
        return Err(VesselError::param(
            "b",
            format!("length {} differs from {}", b.len(), a.len()),
        ));
    }
    if a.len() < 3 {
        return Err(VesselError::param("a", "need at least 3 pairs"));
    }
    let rho = pearson(&midranks(a), &midranks(b))
        .ok_or_else(|| VesselError::Degenerate("constant sample has no rank variance".into()))?;
    let df = (a.len() - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(SpearmanResult { rho, p })
}
