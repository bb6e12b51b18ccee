//! Gaussian marginal regressions with a Nadaraya–Watson mean.
//!
//! Each response is modelled as `Y | x ~ N(f(x), σ²)`. The mean `f` is a
//! product-Gaussian-kernel Nadaraya–Watson smoother with one bandwidth per
//! covariate; `σ` is the standard deviation of leave-one-out residuals.
//! Probability integral transforms `Φ((y - f̂(x)) / σ̂)` of these fits are
//! the pseudo-observations every copula routine downstream consumes.

use crate::copula::U_FLOOR;
use crate::error::{Error, Result};
use crate::special::log_gaussian_pdf;
use crate::stats::{mean, std_dev};
use serde::{Deserialize, Serialize};

pub use crate::special::gaussian_cdf;

/// Lower bound applied to `σ̂`.
pub const SIGMA_FLOOR: f64 = 1e-8;
/// Number of bandwidth candidates per covariate in cross-validation.
pub const CV_GRID_POINTS: usize = 10;
const CV_GRID_RANGE: (f64, f64) = (0.02, 2.0);
const MIN_ROWS: usize = 20;

/// Bandwidth request: explicit per-covariate values or cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(Vec<f64>),
}

/// A fitted marginal regression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalFit {
    #[serde(skip)]
    x: Vec<f64>,
    #[serde(skip)]
    y: Vec<f64>,
    q: usize,
    /// Per-covariate bandwidths; `None` marks a constant covariate that the
    /// kernel ignores.
    pub bandwidth: Vec<Option<f64>>,
    pub sigma_hat: f64,
    /// `σ̂` was raised to [`SIGMA_FLOOR`].
    pub sigma_floored: bool,
    /// Every covariate is constant, the mean is the global average.
    pub degenerate_covariates: bool,
    /// Leave-one-out mean squared error at the selected bandwidth.
    pub cv_mse: f64,
    global_mean: f64,
}

/// Squared coordinate differences `(x_id - x_jd)²`, one `n × n` block per
/// active covariate.
struct PairwiseDistances {
    n: usize,
    blocks: Vec<Vec<f64>>,
}

impl PairwiseDistances {
    fn new(x: &[f64], q: usize, dims: &[usize]) -> Self {
        let n = x.len() / q;
        let blocks = dims
            .iter()
            .map(|&d| {
                let mut b = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        let diff = x[i * q + d] - x[j * q + d];
                        b[i * n + j] = diff * diff;
                    }
                }
                b
            })
            .collect();
        PairwiseDistances { n, blocks }
    }

    /// Leave-one-out fitted values for inverse squared bandwidths `inv_h2`.
    fn loo_fitted(&self, y: &[f64], inv_h2: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut logw = vec![0.0; n];
        (0..n)
            .map(|i| {
                for (j, lw) in logw.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (b, &c) in self.blocks.iter().zip(inv_h2) {
                        s += b[i * n + j] * c;
                    }
                    *lw = -0.5 * s;
                }
                weighted_mean_excluding(&logw, y, Some(i))
            })
            .collect()
    }
}

/// Kernel-weighted mean of `y` with log-weights `logw`, skipping `skip`.
/// Weights are rescaled by their maximum so they cannot all underflow.
fn weighted_mean_excluding(logw: &[f64], y: &[f64], skip: Option<usize>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (j, (&lw, &yj)) in logw.iter().zip(y).enumerate() {
        if Some(j) == skip {
            continue;
        }
        let w = lw.exp();
        num += w * yj;
        den += w;
    }
    if den > 1e-280 {
        return num / den;
    }
    let top = logw
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (j, (&lw, &yj)) in logw.iter().zip(y).enumerate() {
        if Some(j) == skip {
            continue;
        }
        let w = (lw - top).exp();
        num += w * yj;
        den += w;
    }
    num / den
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len() as f64
}

fn cv_grid(sd: f64) -> Vec<f64> {
    let (lo, hi) = CV_GRID_RANGE;
    (0..CV_GRID_POINTS)
        .map(|k| sd * lo * (hi / lo).powf(k as f64 / (CV_GRID_POINTS - 1) as f64))
        .collect()
}

/// Fits the marginal regression of `y` on the row-major covariates `x`.
pub fn fit_margin(x: &[f64], q: usize, y: &[f64], bw: &Bandwidth) -> Result<MarginalFit> {
    let n = y.len();
    if n < MIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "marginal fit needs at least {MIN_ROWS} rows, got {n}"
        )));
    }
    if x.len() != n * q || q == 0 {
        return Err(Error::Config("covariate matrix does not match response length".into()));
    }
    let sds: Vec<f64> = (0..q)
        .map(|d| std_dev(&(0..n).map(|i| x[i * q + d]).collect::<Vec<_>>()))
        .collect();
    let active: Vec<usize> = (0..q).filter(|&d| sds[d] > 0.0).collect();
    let global_mean = mean(y);

    if let Bandwidth::Fixed(h) = bw {
        if h.len() != q || h.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config(format!(
                "expected {q} positive bandwidths, got {h:?}"
            )));
        }
    }

    if active.is_empty() {
        let resid: Vec<f64> = y.iter().map(|v| v - global_mean).collect();
        return Ok(finish(
            x.to_vec(),
            y.to_vec(),
            q,
            vec![None; q],
            &resid,
            global_mean,
            true,
        ));
    }

    let dist = PairwiseDistances::new(x, q, &active);
    let inv = |h: &[f64]| h.iter().map(|v| 1.0 / (v * v)).collect::<Vec<_>>();

    let chosen: Vec<f64> = match bw {
        Bandwidth::Fixed(h) => active.iter().map(|&d| h[d]).collect(),
        Bandwidth::Auto => {
            let grids: Vec<Vec<f64>> = active.iter().map(|&d| cv_grid(sds[d])).collect();
            select_bandwidth(&dist, y, &grids, &inv)
        }
    };
    let fitted = dist.loo_fitted(y, &inv(&chosen));
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let mut bandwidth = vec![None; q];
    for (&d, &h) in active.iter().zip(&chosen) {
        bandwidth[d] = Some(h);
    }
    Ok(finish(x.to_vec(), y.to_vec(), q, bandwidth, &resid, global_mean, false))
}

/// Leave-one-out CV over the candidate grids: the full product grid for
/// up to two covariates, coordinate-wise sweeps beyond that.
fn select_bandwidth(
    dist: &PairwiseDistances,
    y: &[f64],
    grids: &[Vec<f64>],
    inv: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let score = |h: &[f64]| mse(&dist.loo_fitted(y, &inv(h)), y);
    let dims = grids.len();
    if dims <= 2 {
        let mut best = (f64::INFINITY, vec![]);
        let total = CV_GRID_POINTS.pow(dims as u32);
        for code in 0..total {
            let mut c = code;
            let h: Vec<f64> = grids
                .iter()
                .map(|g| {
                    let v = g[c % CV_GRID_POINTS];
                    c /= CV_GRID_POINTS;
                    v
                })
                .collect();
            let s = score(&h);
            if s < best.0 {
                best = (s, h);
            }
        }
        return best.1;
    }
    let mut idx = vec![CV_GRID_POINTS / 2; dims];
    let current = |idx: &[usize]| idx.iter().zip(grids).map(|(&k, g)| g[k]).collect::<Vec<_>>();
    let mut best = score(&current(&idx));
    for _sweep in 0..3 {
        let mut changed = false;
        for d in 0..dims {
            for k in 0..CV_GRID_POINTS {
                if k == idx[d] {
                    continue;
                }
                let mut trial = idx.clone();
                trial[d] = k;
                let s = score(&current(&trial));
                if s < best {
                    best = s;
                    idx = trial;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    current(&idx)
}

fn finish(
    x: Vec<f64>,
    y: Vec<f64>,
    q: usize,
    bandwidth: Vec<Option<f64>>,
    resid: &[f64],
    global_mean: f64,
    degenerate: bool,
) -> MarginalFit {
    let ms = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
    let raw = ms.sqrt();
    let sigma_floored = !(raw >= SIGMA_FLOOR);
    MarginalFit {
        x,
        y,
        q,
        bandwidth,
        sigma_hat: if sigma_floored { SIGMA_FLOOR } else { raw },
        sigma_floored,
        degenerate_covariates: degenerate,
        cv_mse: ms,
        global_mean,
    }
}

impl MarginalFit {
    fn log_weights(&self, x: &[f64], out: &mut [f64]) {
        let q = self.q;
        for (j, lw) in out.iter_mut().enumerate() {
            let row = &self.x[j * q..(j + 1) * q];
            let mut s = 0.0;
            for d in 0..q {
                if let Some(h) = self.bandwidth[d] {
                    let z = (row[d] - x[d]) / h;
                    s += z * z;
                }
            }
            *lw = -0.5 * s;
        }
    }

    /// Conditional mean estimate `f̂(x)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.q, "covariate dimension mismatch");
        if self.degenerate_covariates {
            return self.global_mean;
        }
        let mut lw = vec![0.0; self.y.len()];
        self.log_weights(x, &mut lw);
        weighted_mean_excluding(&lw, &self.y, None)
    }

    /// Leave-one-out fitted means at the training rows.
    pub fn loo_fitted(&self) -> Vec<f64> {
        let n = self.y.len();
        if self.degenerate_covariates {
            return vec![self.global_mean; n];
        }
        let mut lw = vec![0.0; n];
        (0..n)
            .map(|i| {
                self.log_weights(&self.x[i * self.q..(i + 1) * self.q], &mut lw);
                weighted_mean_excluding(&lw, &self.y, Some(i))
            })
            .collect()
    }

    /// Probability integral transform with a known mean.
    pub fn pit_from_mean(&self, mean: f64, y: f64) -> f64 {
        gaussian_cdf((y - mean) / self.sigma_hat).clamp(U_FLOOR, 1.0 - U_FLOOR)
    }

    /// `Φ((y - f̂(x)) / σ̂)`, clamped to the open unit interval.
    pub fn pit(&self, x: &[f64], y: f64) -> f64 {
        self.pit_from_mean(self.predict(x), y)
    }

    /// Log of the Gaussian marginal density at `y` given the mean.
    pub fn log_density_from_mean(&self, mean: f64, y: f64) -> f64 {
        log_gaussian_pdf((y - mean) / self.sigma_hat) - self.sigma_hat.ln()
    }

    pub fn q(&self) -> usize {
        self.q
    }
}

/// Free-function form of [`MarginalFit::pit`].
pub fn pit(m: &MarginalFit, x: &[f64], y: f64) -> f64 {
    m.pit(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn design(n: usize, q: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, "design", &[]);
        (0..n * q).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn constant_response_floors_sigma() {
        let x = design(40, 2, 1);
        let y = vec![3.0; 40];
        let m = fit_margin(&x, 2, &y, &Bandwidth::Auto).unwrap();
        assert!(m.sigma_floored);
        assert_eq!(m.sigma_hat, SIGMA_FLOOR);
        for i in 0..5 {
            assert!((m.predict(&[0.1 * i as f64, 0.5]) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let x = design(10, 1, 2);
        assert!(matches!(
            fit_margin(&x, 1, &[0.0; 10], &Bandwidth::Auto),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn constant_covariates_fall_back_to_global_mean() {
        let x = vec![0.5; 30];
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let m = fit_margin(&x, 1, &y, &Bandwidth::Auto).unwrap();
        assert!(m.degenerate_covariates);
        assert!((m.predict(&[0.9]) - 14.5).abs() < 1e-12);
    }

    #[test]
    fn huge_bandwidth_gives_global_mean() {
        let x = design(50, 2, 3);
        let y: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let m = fit_margin(&x, 2, &y, &Bandwidth::Fixed(vec![1e6, 1e6])).unwrap();
        let gm = y.iter().sum::<f64>() / 50.0;
        assert!((m.predict(&[0.3, 0.8]) - gm).abs() < 1e-8);
    }

    #[test]
    fn auto_bandwidth_is_grid_argmin() {
        let x = design(60, 1, 4);
        let y: Vec<f64> = x.clone();
        let m = fit_margin(&x, 1, &y, &Bandwidth::Auto).unwrap();
        let sd = std_dev(&x);
        let worst = cv_grid(sd)
            .into_iter()
            .map(|h| fit_margin(&x, 1, &y, &Bandwidth::Fixed(vec![h])).unwrap().cv_mse)
            .fold(0.0, f64::max);
        let best = cv_grid(sd)
            .into_iter()
            .map(|h| fit_margin(&x, 1, &y, &Bandwidth::Fixed(vec![h])).unwrap().cv_mse)
            .fold(f64::INFINITY, f64::min);
        assert!(m.cv_mse <= worst);
        assert_eq!(m.cv_mse, best);
    }

    #[test]
    fn pit_values() {
        let x = design(40, 1, 5);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + ((v * 37.0).sin() * 0.1)).collect();
        let m = fit_margin(&x, 1, &y, &Bandwidth::Auto).unwrap();
        let f = m.predict(&[0.4]);
        assert!((m.pit(&[0.4], f) - 0.5).abs() < 1e-15);
        let up = m.pit(&[0.4], f + 1.959964 * m.sigma_hat);
        assert!((up - 0.975).abs() < 1e-6);
        let mut prev = 0.0;
        for k in -50..50 {
            let p = m.pit(&[0.4], f + k as f64 * 0.01 * m.sigma_hat);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn row_permutation_invariance() {
        let x = design(45, 2, 6);
        let y: Vec<f64> = (0..45).map(|i| (x[2 * i] * 4.0).sin() + x[2 * i + 1]).collect();
        let m = fit_margin(&x, 2, &y, &Bandwidth::Auto).unwrap();
        let perm: Vec<usize> = (0..45).rev().collect();
        let xp: Vec<f64> = perm.iter().flat_map(|&i| [x[2 * i], x[2 * i + 1]]).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let mp = fit_margin(&xp, 2, &yp, &Bandwidth::Auto).unwrap();
        for (a, b) in m.bandwidth.iter().zip(&mp.bandwidth) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
        for &pt in &[[0.1, 0.2], [0.5, 0.5], [0.93, 0.07]] {
            assert!((m.predict(&pt) - mp.predict(&pt)).abs() < 1e-12);
        }
        assert!((m.sigma_hat - mp.sigma_hat).abs() < 1e-12);
    }

    #[test]
    fn fixed_bandwidth_validation() {
        let x = design(30, 2, 7);
        let y = vec![1.0; 30];
        assert!(fit_margin(&x, 2, &y, &Bandwidth::Fixed(vec![0.1])).is_err());
        assert!(fit_margin(&x, 2, &y, &Bandwidth::Fixed(vec![0.1, -1.0])).is_err());
    }
}
