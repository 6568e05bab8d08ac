//! Descriptive and inferential statistics: group summaries, one-way ANOVA,
//! Tukey HSD with compact letter displays, and paired agreement.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pearson_r2;
use crate::special::{f_survival, ln_gamma, normal_cdf, normal_pdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
    pub letters: String,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the n − 1 denominator.
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ms_within: f64,
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter("ANOVA needs at least 2 groups".into()));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InvalidParameter("every ANOVA group needs n ≥ 2".into()));
    }
    Ok(())
}

/// One-way ANOVA F test.
///
/// With zero within-group variance the ratio is undefined; unequal means
/// then give `F = ∞, p = 0` and equal means give `F = 0, p = 1`.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova> {
    check_groups(groups)?;
    let k = groups.len();
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n_total as f64;
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = k - 1;
    let df_within = n_total - k;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;

    let means_equal = means.iter().all(|m| *m == means[0]);
    let (f, p) = if means_equal {
        (0.0, 1.0)
    } else if ms_within == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        (f, f_survival(f, df_between as f64, df_within as f64))
    };
    Ok(Anova {
        f,
        p,
        df_between,
        df_within,
        ms_within,
    })
}

// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(16))
}

/// Composite 16-point Gauss–Legendre nodes over `[a, b]` split into `panels`.
fn composite_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let (x, w) = gl16();
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * x.len());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(w) {
            out.push((mid + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

fn z_nodes() -> &'static Vec<(f64, f64, f64, f64)> {
    // (z, weight, φ(z), Φ(z))
    static NODES: OnceLock<Vec<(f64, f64, f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        composite_nodes(-8.5, 8.5, 24)
            .into_iter()
            .map(|(z, w)| (z, w, normal_pdf(z), normal_cdf(z)))
            .collect()
    })
}

/// CDF of the range of `k` independent standard normals.
fn range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let total: f64 = z_nodes()
        .iter()
        .map(|&(z, wt, pdf, cdf)| {
            let inner = (cdf - normal_cdf(z - w)).max(0.0);
            wt * pdf * inner.powi(k as i32 - 1)
        })
        .sum();
    (k as f64 * total).clamp(0.0, 1.0)
}

/// CDF of the studentized range distribution with `k` means and `df`
/// error degrees of freedom, by quadrature over the scaled chi density.
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> f64 {
    assert!(k >= 2, "studentized range needs k ≥ 2");
    if q <= 0.0 {
        return 0.0;
    }
    if df > 25_000.0 {
        return range_cdf(q, k);
    }
    // density of s = sqrt(χ²_df / df)
    let half = df / 2.0;
    let ln_c = half * df.ln() - ln_gamma(half) - (half - 1.0) * std::f64::consts::LN_2;
    let sd = (1.0 / (2.0 * df)).sqrt();
    let lo = (1.0 - 12.0 * sd).max(0.0);
    let hi = 1.0 + 12.0 * sd.max(0.25);
    let total: f64 = composite_nodes(lo, hi, 24)
        .into_iter()
        .filter(|(s, _)| *s > 0.0)
        .map(|(s, w)| {
            let dens = (ln_c + (df - 1.0) * s.ln() - half * s * s).exp();
            w * dens * range_cdf(q * s, k)
        })
        .sum();
    total.clamp(0.0, 1.0)
}

/// Upper-α critical value of the studentized range, cached per (k, df, α).
pub fn studentized_range_quantile(alpha: f64, k: usize, df: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64, u64), f64>>> = OnceLock::new();
    let key = (k, df.to_bits(), alpha.to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(q) = cache.lock().expect("cache lock").get(&key) {
        return *q;
    }
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0_f64, 4.0_f64);
    while studentized_range_cdf(hi, k, df) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k, df) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    cache.lock().expect("cache lock").insert(key, q);
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyHsd {
    pub q_critical: f64,
    /// Studentized pairwise differences, symmetric with a zero diagonal.
    pub q: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
}

/// All pairwise Tukey–Kramer comparisons at level `alpha`.
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<TukeyHsd> {
    let anova = anova_oneway(groups)?;
    let k = groups.len();
    let q_critical = studentized_range_quantile(alpha, k, anova.df_within as f64);
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let mut q = vec![vec![0.0; k]; k];
    let mut significant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = (means[i] - means[j]).abs();
            let se = (anova.ms_within / 2.0 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let qij = if se > 0.0 {
                diff / se
            } else if diff > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            q[i][j] = qij;
            q[j][i] = qij;
            significant[i][j] = qij > q_critical;
            significant[j][i] = significant[i][j];
        }
    }
    Ok(TukeyHsd {
        q_critical,
        q,
        significant,
    })
}

fn letter_name(i: usize) -> String {
    const ALPHA: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    if i < 26 {
        (ALPHA[i] as char).to_string()
    } else {
        format!("{}{}", ALPHA[i % 26] as char, i / 26)
    }
}

fn bron_kerbosch(adj: &[Vec<bool>], r: Vec<usize>, mut p: Vec<usize>, mut x: Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if p.is_empty() && x.is_empty() {
        out.push(r);
        return;
    }
    let pivot = p.iter().chain(&x).copied().max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count());
    let candidates: Vec<usize> = match pivot {
        Some(u) => p.iter().copied().filter(|&v| !adj[u][v]).collect(),
        None => p.clone(),
    };
    for v in candidates {
        let mut r2 = r.clone();
        r2.push(v);
        let p2 = p.iter().copied().filter(|&w| adj[v][w]).collect();
        let x2 = x.iter().copied().filter(|&w| adj[v][w]).collect();
        bron_kerbosch(adj, r2, p2, x2, out);
        p.retain(|&w| w != v);
        x.push(v);
    }
}

/// Compact letter display from a pairwise significance matrix.
///
/// Each letter is a maximal set of mutually non-significant groups, so two
/// groups share a letter exactly when their comparison is non-significant.
/// Letters are handed out walking the groups by descending mean.
pub fn letters_from_significance(means: &[f64], significant: &[Vec<bool>]) -> Vec<String> {
    let k = means.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let mut rank = vec![0; k];
    for (r, &g) in order.iter().enumerate() {
        rank[g] = r;
    }
    let adj: Vec<Vec<bool>> = (0..k)
        .map(|i| (0..k).map(|j| i != j && !significant[i][j]).collect())
        .collect();
    let mut cliques = Vec::new();
    bron_kerbosch(&adj, Vec::new(), (0..k).collect(), Vec::new(), &mut cliques);
    // sort members by rank, then cliques lexicographically by member ranks
    let mut cliques: Vec<Vec<usize>> = cliques
        .into_iter()
        .map(|mut c| {
            c.sort_by_key(|&g| rank[g]);
            c
        })
        .collect();
    cliques.sort_by(|a, b| {
        let ra: Vec<usize> = a.iter().map(|&g| rank[g]).collect();
        let rb: Vec<usize> = b.iter().map(|&g| rank[g]).collect();
        ra.cmp(&rb)
    });
    let mut letters = vec![String::new(); k];
    for (li, clique) in cliques.iter().enumerate() {
        let name = letter_name(li);
        for &g in clique {
            letters[g].push_str(&name);
        }
    }
    letters
}

/// Tukey HSD letters at level `alpha` for each group.
pub fn letter_groups(groups: &[Vec<f64>], alpha: f64) -> Result<Vec<String>> {
    let hsd = tukey_hsd(groups, alpha)?;
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    Ok(letters_from_significance(&means, &hsd.significant))
}

pub fn summarize(labels: &[String], groups: &[Vec<f64>], alpha: f64) -> Result<Vec<GroupSummary>> {
    let letters = letter_groups(groups, alpha)?;
    Ok(labels
        .iter()
        .zip(groups)
        .zip(letters)
        .map(|((label, g), letters)| GroupSummary {
            label: label.clone(),
            n: g.len(),
            mean: mean(g),
            std: sample_std(g),
            letters,
        })
        .collect())
}

/// Squared Pearson correlation of estimated against actual values.
pub fn agreement(estimated: &[f64], actual: &[f64]) -> Result<f64> {
    if estimated.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: estimated.len(),
        });
    }
    if actual.len() < 2 {
        return Err(Error::InvalidParameter("agreement needs ≥ 2 pairs".into()));
    }
    pearson_r2(estimated, actual).ok_or(Error::ZeroVariance)
}
