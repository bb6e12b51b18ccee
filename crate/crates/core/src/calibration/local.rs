use super::{constant_mle, weighted_eta, CalibrationFit};
use crate::copula::{clayton_log_density, prepare, NegLogPair, UnitPair};
use crate::error::{Error, Result};
use crate::stats::std_dev;
use serde::{Deserialize, Serialize};

const MIN_ROWS: usize = 50;
const NEIGHBORS: usize = 10;
// exp(-690) is the smallest weight that does not underflow to zero
const UNDERFLOW_LOG_WEIGHT: f64 = -690.0;
const CV_MULTIPLIERS: usize = 8;
const CV_RANGE: (f64, f64) = (0.05, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LocalBandwidth {
    /// Likelihood cross-validation over multiples of the covariate SDs.
    #[default]
    Auto,
    Fixed(Vec<f64>),
}

/// Local-constant likelihood fit. Stores the training pseudo-observations;
/// every prediction solves a kernel-weighted one-dimensional problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalFit {
    #[serde(skip)]
    x: Vec<f64>,
    #[serde(skip)]
    pairs: Vec<NegLogPair>,
    q: usize,
    /// Per-covariate bandwidth, `None` for constant covariates.
    pub bandwidth: Vec<Option<f64>>,
    /// Leave-one-out log-likelihood at the chosen bandwidth (auto only).
    pub cv_loglik: Option<f64>,
    /// Reduced-model estimate; starting point for every local solve.
    pub eta_global: f64,
}

/// A local prediction; `nn_fallback` marks a query too far from the data
/// for any kernel weight to survive, answered from its nearest neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaPrediction {
    pub eta: f64,
    pub nn_fallback: bool,
}

fn log_weights(x: &[f64], q: usize, bw: &[Option<f64>], at: &[f64], out: &mut [f64]) {
    for (j, lw) in out.iter_mut().enumerate() {
        let row = &x[j * q..(j + 1) * q];
        let mut s = 0.0;
        for d in 0..q {
            if let Some(h) = bw[d] {
                let z = (row[d] - at[d]) / h;
                s += z * z;
            }
        }
        *lw = -0.5 * s;
    }
}

/// Rescales log-weights by their maximum. Returns `false` when every raw
/// weight would underflow.
fn normalize(logw: &[f64], out: &mut [f64], skip: Option<usize>) -> bool {
    let top = logw
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    for (j, (o, &l)) in out.iter_mut().zip(logw).enumerate() {
        *o = if Some(j) == skip { 0.0 } else { (l - top).exp() };
    }
    top >= UNDERFLOW_LOG_WEIGHT
}

fn nearest_weights(logw: &[f64], out: &mut [f64]) {
    let mut idx: Vec<usize> = (0..logw.len()).collect();
    idx.sort_by(|&a, &b| logw[b].total_cmp(&logw[a]).then(a.cmp(&b)));
    out.iter_mut().for_each(|w| *w = 0.0);
    for &j in idx.iter().take(NEIGHBORS) {
        out[j] = 1.0;
    }
}

impl LocalFit {
    pub fn predict(&self, at: &[f64]) -> EtaPrediction {
        assert_eq!(at.len(), self.q, "covariate dimension mismatch");
        let n = self.pairs.len();
        let mut logw = vec![0.0; n];
        let mut w = vec![0.0; n];
        log_weights(&self.x, self.q, &self.bandwidth, at, &mut logw);
        let ok = normalize(&logw, &mut w, None);
        if !ok {
            nearest_weights(&logw, &mut w);
        }
        EtaPrediction {
            eta: weighted_eta(&self.pairs, &w, self.eta_global),
            nn_fallback: !ok,
        }
    }
}

fn loo_score(
    x: &[f64],
    q: usize,
    pairs: &[NegLogPair],
    bw: &[Option<f64>],
    start: f64,
) -> f64 {
    let n = pairs.len();
    let mut logw = vec![0.0; n];
    let mut w = vec![0.0; n];
    (0..n)
        .map(|i| {
            log_weights(x, q, bw, &x[i * q..(i + 1) * q], &mut logw);
            if !normalize(&logw, &mut w, Some(i)) {
                logw[i] = f64::NEG_INFINITY;
                nearest_weights(&logw, &mut w);
            }
            let eta = weighted_eta(pairs, &w, start);
            clayton_log_density(pairs[i], eta.exp())
        })
        .sum()
}

/// Local-constant likelihood estimate of the calibration function.
pub fn fit_local_likelihood(
    x: &[f64],
    q: usize,
    pairs: &[UnitPair],
    bandwidth: &LocalBandwidth,
) -> Result<CalibrationFit> {
    let n = pairs.len();
    if n < MIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "local likelihood needs at least {MIN_ROWS} pairs, got {n}"
        )));
    }
    if x.len() != n * q {
        return Err(Error::Config("covariates and pairs are misaligned".into()));
    }
    let prepared = prepare(pairs);
    let eta_global = constant_mle(pairs)?.eta;
    let sds: Vec<f64> = (0..q)
        .map(|d| std_dev(&(0..n).map(|i| x[i * q + d]).collect::<Vec<_>>()))
        .collect();

    let (bw, cv_loglik) = match bandwidth {
        LocalBandwidth::Fixed(h) => {
            if h.len() != q || h.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config(format!("expected {q} positive bandwidths")));
            }
            let bw = (0..q)
                .map(|d| (sds[d] > 0.0).then_some(h[d]))
                .collect::<Vec<_>>();
            (bw, None)
        }
        LocalBandwidth::Auto => {
            let (lo, hi) = CV_RANGE;
            let mut best: Option<(f64, Vec<Option<f64>>)> = None;
            for k in 0..CV_MULTIPLIERS {
                let m = lo * (hi / lo).powf(k as f64 / (CV_MULTIPLIERS - 1) as f64);
                let bw: Vec<Option<f64>> = sds
                    .iter()
                    .map(|&s| (s > 0.0).then_some(m * s))
                    .collect();
                let score = loo_score(x, q, &prepared, &bw, eta_global);
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, bw));
                }
            }
            let (score, bw) = best.expect("non-empty grid");
            (bw, Some(score))
        }
    };
    Ok(CalibrationFit::LocalLikelihood(LocalFit {
        x: x.to_vec(),
        pairs: prepared,
        q,
        bandwidth: bw,
        cv_loglik,
        eta_global,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::fit_constant;
    use crate::copula::{sample, CopulaParam};
    use crate::rng::substream;
    use rand::Rng;

    fn sample_with_eta<F: Fn(&[f64]) -> f64>(n: usize, q: usize, eta: F, seed: u64) -> (Vec<f64>, Vec<UnitPair>) {
        let mut rng = substream(seed, "ll", &[]);
        let mut x = Vec::new();
        let mut pairs = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..q).map(|_| rng.random::<f64>()).collect();
            let c = CopulaParam::clayton(eta(&row).exp()).unwrap();
            pairs.push(sample(c, 1, &mut rng).unwrap()[0]);
            x.extend(row);
        }
        (x, pairs)
    }

    #[test]
    fn infinite_bandwidth_equals_constant() {
        let (x, pairs) = sample_with_eta(120, 2, |r| 0.3 + r[0], 1);
        let fit = fit_local_likelihood(&x, 2, &pairs, &LocalBandwidth::Fixed(vec![1e6, 1e6])).unwrap();
        let c = fit_constant(&pairs).unwrap().predict_eta(&[0.0, 0.0]);
        for pt in [[0.1, 0.9], [0.5, 0.5], [0.99, 0.01]] {
            assert!((fit.predict_eta(&pt) - c).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_bandwidth_gives_cluster_mle() {
        let mut rng = substream(2, "clusters", &[]);
        let centers = [0.2, 0.8];
        let thetas = [0.5, 4.0];
        let mut x = Vec::new();
        let mut pairs = Vec::new();
        let mut by_cluster: Vec<Vec<UnitPair>> = vec![vec![], vec![]];
        for (k, (&c, &t)) in centers.iter().zip(&thetas).enumerate() {
            let s = sample(CopulaParam::clayton(t).unwrap(), 60, &mut rng).unwrap();
            for p in s {
                x.push(c);
                pairs.push(p);
                by_cluster[k].push(p);
            }
        }
        let fit = fit_local_likelihood(&x, 1, &pairs, &LocalBandwidth::Fixed(vec![0.01])).unwrap();
        for k in 0..2 {
            let local = fit.predict_eta(&[centers[k]]);
            let mle = fit_constant(&by_cluster[k]).unwrap().predict_eta(&[0.0]);
            assert!((local - mle).abs() < 1e-6, "cluster {k}: {local} vs {mle}");
        }
    }

    #[test]
    fn far_query_uses_nearest_neighbours() {
        let (x, pairs) = sample_with_eta(60, 1, |_| 0.5, 3);
        let fit = fit_local_likelihood(&x, 1, &pairs, &LocalBandwidth::Fixed(vec![1e-3])).unwrap();
        let CalibrationFit::LocalLikelihood(l) = &fit else { unreachable!() };
        let p = l.predict(&[50.0]);
        assert!(p.nn_fallback);
        assert!(p.eta.is_finite());
        assert!(!l.predict(&[x[0]]).nn_fallback);
    }

    #[test]
    fn auto_bandwidth_tracks_varying_calibration() {
        let (x, pairs) = sample_with_eta(400, 1, |r| -1.0 + 3.0 * r[0], 4);
        let fit = fit_local_likelihood(&x, 1, &pairs, &LocalBandwidth::Auto).unwrap();
        let lo = fit.predict_eta(&[0.1]);
        let hi = fit.predict_eta(&[0.9]);
        assert!(hi - lo > 1.0, "{lo} -> {hi}");
    }

    #[test]
    fn rejects_small_samples() {
        let (x, pairs) = sample_with_eta(30, 1, |_| 0.0, 5);
        assert!(fit_local_likelihood(&x, 1, &pairs, &LocalBandwidth::Auto).is_err());
    }
}
