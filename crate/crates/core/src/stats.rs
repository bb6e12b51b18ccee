//! Rank and moment correlations, Kendall's tau, Kolmogorov–Smirnov distances.

use crate::copula::UnitPair;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A correlation estimate. `degenerate` is set when one of the inputs has
/// zero variance, in which case `value` is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

/// Average ranks (1-based), ties receive the mean of their positions.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean(i+1..=j)
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

pub(crate) fn pearson_slices(xs: &[f64], ys: &[f64]) -> Correlation {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Correlation {
            value: 0.0,
            degenerate: true,
        };
    }
    Correlation {
        value: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

fn check_len(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {min} pairs, got {n}"
        )));
    }
    Ok(())
}

/// Pearson correlation of the two coordinates.
pub fn pearson_rho(pairs: &[UnitPair]) -> Result<Correlation> {
    check_len(pairs.len(), 3, "Pearson correlation")?;
    let xs: Vec<f64> = pairs.iter().map(|p| p.u1).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.u2).collect();
    Ok(pearson_slices(&xs, &ys))
}

/// Spearman's rho: the Pearson correlation of midranks.
pub fn spearman_rho(pairs: &[UnitPair]) -> Result<Correlation> {
    check_len(pairs.len(), 3, "Spearman's rho")?;
    let xs: Vec<f64> = pairs.iter().map(|p| p.u1).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.u2).collect();
    Ok(pearson_slices(&midranks(&xs), &midranks(&ys)))
}

/// Merge sort that returns the number of inversions.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

fn tie_pairs<I: Iterator<Item = f64>>(sorted: I) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for x in sorted {
        if prev == Some(x) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(x);
    }
    total + run * (run + 1) / 2
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let tx = tie_pairs(idx.iter().map(|&i| xs[i]));
    // pairs tied in both coordinates
    let mut txy = 0u64;
    let mut run = 0u64;
    for w in idx.windows(2) {
        if xs[w[0]] == xs[w[1]] && ys[w[0]] == ys[w[1]] {
            run += 1;
        } else {
            txy += run * (run + 1) / 2;
            run = 0;
        }
    }
    txy += run * (run + 1) / 2;
    let mut y_sorted: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    let mut buf = Vec::with_capacity(n);
    let swaps = count_inversions(&mut y_sorted, &mut buf);
    let ty = tie_pairs(y_sorted.iter().copied());
    let concordant_minus_discordant =
        n0 as f64 - tx as f64 - ty as f64 + txy as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        concordant_minus_discordant / denom
    }
}

/// Kolmogorov–Smirnov distance between the sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS distance to the uniform distribution on `[0, 1]`.
pub fn ks_uniform(xs: &[f64]) -> f64 {
    ks_distance(xs, |x| x.clamp(0.0, 1.0))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
