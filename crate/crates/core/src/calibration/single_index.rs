//! Single-index calibration, `η(x) = s(xᵀw)`.
//!
//! `s` is a cubic B-spline with equally spaced knots on the observed range
//! of the index and a first-difference roughness penalty `λ Σ (β_{k+1} - β_k)²`,
//! so that `λ → ∞` recovers the constant (reduced) model. Fitting
//! alternates a penalized Newton solve for the spline coefficients with a
//! projected-gradient step for `w` on the unit sphere, from several starting
//! directions; the best penalized likelihood wins. The direction search
//! runs at a light penalty, after which the penalty is cross-validated along
//! the winning direction and the fit is refined from there.

use super::bspline::BSplineBasis;
use super::{constant_mle, CalibrationFit, ETA_BOX};
use crate::copula::{clayton_eta_derivatives, clayton_log_density, prepare, NegLogPair, UnitPair};
use crate::error::{Error, Result};
use crate::numeric::cholesky_solve;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

const MIN_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleIndexConfig {
    pub interior_knots: usize,
    /// Candidate penalties for cross-validation.
    pub lambda_grid: Vec<f64>,
    /// Fixed penalty; skips cross-validation when set.
    pub lambda: Option<f64>,
    /// Penalty used while searching over directions when `lambda` is unset.
    /// Defaults to the smallest grid value; the final penalty is then
    /// cross-validated along the selected direction.
    pub search_lambda: Option<f64>,
    pub cv_folds: usize,
    pub max_alternations: usize,
    /// Relative change in penalized log-likelihood that ends the alternation.
    pub rel_tol: f64,
    pub random_starts: usize,
    /// First starting direction. Defaults to the slope of a linear
    /// calibration fit `η = a + bᵀx`.
    pub initial_direction: Option<Vec<f64>>,
}

impl Default for SingleIndexConfig {
    fn default() -> Self {
        SingleIndexConfig {
            interior_knots: 5,
            lambda_grid: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            lambda: None,
            search_lambda: None,
            cv_folds: 5,
            max_alternations: 50,
            rel_tol: 1e-8,
            random_starts: 10,
            initial_direction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleIndexFit {
    /// Unit-norm index direction with a positive first nonzero coordinate.
    pub direction: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub index_range: (f64, f64),
    pub interior_knots: usize,
    pub lambda: f64,
    pub loglik: f64,
    pub penalized_loglik: f64,
    /// False when the winning start used every alternation without meeting
    /// the tolerance; the best iterate is returned either way.
    pub converged: bool,
    pub alternations: usize,
    pub starts: usize,
    #[serde(skip)]
    basis: BSplineBasis,
}

impl SingleIndexFit {
    pub fn index(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.direction.len(), "covariate dimension mismatch");
        x.iter().zip(&self.direction).map(|(a, b)| a * b).sum()
    }

    pub fn ridge(&self, z: f64) -> f64 {
        self.basis.value(&self.coefficients, z).clamp(ETA_BOX.0, ETA_BOX.1)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.ridge(self.index(x))
    }
}

/// Design matrix whose rows have `width` consecutive nonzeros.
struct Rows {
    start: Vec<usize>,
    vals: Vec<f64>,
    width: usize,
}

impl Rows {
    fn spline(basis: &BSplineBasis, z: &[f64]) -> Self {
        let mut start = Vec::with_capacity(z.len());
        let mut vals = Vec::with_capacity(4 * z.len());
        for &zi in z {
            let (s, v) = basis.eval(zi);
            start.push(s);
            vals.extend_from_slice(&v);
        }
        Rows {
            start,
            vals,
            width: 4,
        }
    }

    fn linear(x: &[f64], q: usize) -> Self {
        let n = x.len() / q;
        let mut vals = Vec::with_capacity(n * (q + 1));
        for i in 0..n {
            vals.push(1.0);
            vals.extend_from_slice(&x[i * q..(i + 1) * q]);
        }
        Rows {
            start: vec![0; n],
            vals,
            width: q + 1,
        }
    }

    fn subset(&self, idx: &[usize]) -> Self {
        let w = self.width;
        Rows {
            start: idx.iter().map(|&i| self.start[i]).collect(),
            vals: idx
                .iter()
                .flat_map(|&i| self.vals[i * w..(i + 1) * w].iter().copied())
                .collect(),
            width: w,
        }
    }

    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        let s = self.start[i];
        let w = self.width;
        self.vals[i * w..(i + 1) * w]
            .iter()
            .zip(&beta[s..s + w])
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn in_box(eta: f64) -> bool {
    (ETA_BOX.0..=ETA_BOX.1).contains(&eta)
}

fn loglik_at(pairs: &[NegLogPair], rows: &Rows, beta: &[f64]) -> f64 {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let eta = rows.eta(i, beta).clamp(ETA_BOX.0, ETA_BOX.1);
            clayton_log_density(p, eta.exp())
        })
        .sum()
}

fn quad_form(m: &[f64], v: &[f64]) -> f64 {
    let p = v.len();
    let mut s = 0.0;
    for i in 0..p {
        for j in 0..p {
            s += v[i] * m[i * p + j] * v[j];
        }
    }
    s
}

/// `λ DᵀD` for the first-difference operator `D`.
fn difference_penalty(p: usize, lambda: f64) -> Vec<f64> {
    let mut m = vec![0.0; p * p];
    for k in 0..p - 1 {
        m[k * p + k] += lambda;
        m[(k + 1) * p + k + 1] += lambda;
        m[k * p + k + 1] -= lambda;
        m[(k + 1) * p + k] -= lambda;
    }
    m
}

struct NewtonFit {
    beta: Vec<f64>,
    loglik: f64,
    objective: f64,
}

/// Maximizes `Σ ℓ_i(row_i · β) - βᵀ P β` by damped Newton steps.
fn newton_fit(pairs: &[NegLogPair], rows: &Rows, penalty: &[f64], beta0: Vec<f64>) -> NewtonFit {
    let p = beta0.len();
    let mut beta = beta0;
    let mut ll = loglik_at(pairs, rows, &beta);
    let mut obj = ll - quad_form(penalty, &beta);
    let w = rows.width;
    for _ in 0..50 {
        let mut g = vec![0.0; p];
        let mut h = vec![0.0; p * p];
        for (i, &pair) in pairs.iter().enumerate() {
            let eta = rows.eta(i, &beta);
            if !in_box(eta) {
                continue;
            }
            let (_, d1, d2) = clayton_eta_derivatives(pair, eta);
            let curv = (-d2).max(1e-8);
            let s = rows.start[i];
            let v = &rows.vals[i * w..(i + 1) * w];
            for a in 0..w {
                g[s + a] += d1 * v[a];
                for b in 0..w {
                    h[(s + a) * p + s + b] += curv * v[a] * v[b];
                }
            }
        }
        for a in 0..p {
            let pb: f64 = (0..p).map(|b| penalty[a * p + b] * beta[b]).sum();
            g[a] -= 2.0 * pb;
            for b in 0..p {
                h[a * p + b] += 2.0 * penalty[a * p + b];
            }
            h[a * p + a] += 1e-9;
        }
        let Some(step) = cholesky_solve(&h, &g, p) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-8 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cll = loglik_at(pairs, rows, &cand);
            let cobj = cll - quad_form(penalty, &cand);
            if cobj > obj {
                accepted = Some((cand, cll, cobj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cll, cobj)) = accepted else {
            break;
        };
        let gain = cobj - obj;
        beta = cand;
        ll = cll;
        obj = cobj;
        if gain < 1e-10 * (1.0 + obj.abs()) {
            break;
        }
    }
    NewtonFit {
        beta,
        loglik: ll,
        objective: obj,
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|a| *a /= norm);
    true
}

/// Flips `w` so its first nonzero coordinate is positive; returns whether
/// it flipped.
fn canonicalize(w: &mut [f64]) -> bool {
    match w.iter().find(|a| **a != 0.0) {
        Some(&first) if first < 0.0 => {
            w.iter_mut().for_each(|a| *a = -*a);
            true
        }
        _ => false,
    }
}

fn project(x: &[f64], q: usize, w: &[f64]) -> Vec<f64> {
    x.chunks(q)
        .map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum())
        .collect()
}

fn range(z: &[f64]) -> (f64, f64) {
    z.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

#[derive(Clone)]
struct State {
    w: Vec<f64>,
    basis: BSplineBasis,
    beta: Vec<f64>,
    loglik: f64,
    objective: f64,
}

struct Problem<'a> {
    x: &'a [f64],
    q: usize,
    pairs: &'a [NegLogPair],
    interior: usize,
    penalty: Vec<f64>,
}

impl Problem<'_> {
    fn fit_at(&self, w: Vec<f64>, beta0: Vec<f64>) -> State {
        let z = project(self.x, self.q, &w);
        let (lo, hi) = range(&z);
        let basis = BSplineBasis::new(lo, hi, self.interior);
        let rows = Rows::spline(&basis, &z);
        let nf = newton_fit(self.pairs, &rows, &self.penalty, beta0);
        State {
            w,
            basis,
            beta: nf.beta,
            loglik: nf.loglik,
            objective: nf.objective,
        }
    }

    fn loglik_with(&self, s: &State, w: &[f64]) -> f64 {
        let z = project(self.x, self.q, w);
        let rows = Rows::spline(&s.basis, &z);
        loglik_at(self.pairs, &rows, &s.beta)
    }

    /// Ascent direction for `w` on the sphere, or `None` at a stationary point.
    fn sphere_gradient(&self, s: &State) -> Option<Vec<f64>> {
        let q = self.q;
        let mut g = vec![0.0; q];
        for (i, &pair) in self.pairs.iter().enumerate() {
            let row = &self.x[i * q..(i + 1) * q];
            let z: f64 = row.iter().zip(&s.w).map(|(a, b)| a * b).sum();
            let eta = s.basis.value(&s.beta, z);
            if !in_box(eta) {
                continue;
            }
            let (_, d1) = crate::copula::clayton_log_density_and_score(pair, eta);
            let slope = s.basis.slope(&s.beta, z);
            for d in 0..q {
                g[d] += d1 * slope * row[d];
            }
        }
        let radial: f64 = g.iter().zip(&s.w).map(|(a, b)| a * b).sum();
        g.iter_mut().zip(&s.w).for_each(|(a, b)| *a -= radial * b);
        normalize(&mut g).then_some(g)
    }

    fn alternate(&self, w0: Vec<f64>, beta0: Vec<f64>, cfg: &SingleIndexConfig) -> (State, bool, usize) {
        let mut cur = self.fit_at(w0, beta0);
        let mut best = cur.clone();
        if self.q == 1 {
            return (best, true, 0);
        }
        let mut step = 0.3;
        let mut iterations = 0;
        let mut converged = false;
        for it in 1..=cfg.max_alternations {
            iterations = it;
            let Some(dir) = self.sphere_gradient(&cur) else {
                converged = true;
                break;
            };
            let mut t = step;
            let mut next_w = None;
            while t > 1e-8 {
                let mut cand: Vec<f64> = cur.w.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                if normalize(&mut cand) && self.loglik_with(&cur, &cand) > cur.loglik {
                    next_w = Some(cand);
                    break;
                }
                t *= 0.5;
            }
            let Some(mut w) = next_w else {
                converged = true;
                break;
            };
            step = (2.0 * t).min(1.0);
            let mut beta = cur.beta.clone();
            if canonicalize(&mut w) {
                beta.reverse();
            }
            let next = self.fit_at(w, beta);
            let rel = (next.objective - cur.objective).abs() / cur.objective.abs().max(1e-12);
            if next.objective > best.objective {
                best = next.clone();
            }
            cur = next;
            if rel < cfg.rel_tol {
                converged = true;
                break;
            }
        }
        (best, converged, iterations)
    }
}

fn linear_direction(x: &[f64], q: usize, pairs: &[NegLogPair], eta0: f64) -> Vec<f64> {
    let rows = Rows::linear(x, q);
    let mut beta0 = vec![0.0; q + 1];
    beta0[0] = eta0;
    let fit = newton_fit(pairs, &rows, &vec![0.0; (q + 1) * (q + 1)], beta0);
    let mut w = fit.beta[1..].to_vec();
    if !normalize(&mut w) {
        w = vec![0.0; q];
        w[0] = 1.0;
    }
    canonicalize(&mut w);
    w
}

fn random_direction<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n2: f64 = v.iter().map(|a| a * a).sum();
        if n2 > 1e-6 && n2 <= 1.0 && normalize(&mut v) {
            canonicalize(&mut v);
            return v;
        }
    }
}

fn choose_lambda<R: Rng + ?Sized>(
    x: &[f64],
    q: usize,
    pairs: &[NegLogPair],
    w: &[f64],
    eta0: f64,
    cfg: &SingleIndexConfig,
    rng: &mut R,
) -> f64 {
    let n = pairs.len();
    let z = project(x, q, w);
    let (lo, hi) = range(&z);
    let basis = BSplineBasis::new(lo, hi, cfg.interior_knots);
    let rows = Rows::spline(&basis, &z);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let folds = cfg.cv_folds.clamp(2, n);
    let mut best = (f64::NEG_INFINITY, cfg.lambda_grid[0]);
    for &lambda in &cfg.lambda_grid {
        let penalty = difference_penalty(basis.len(), lambda);
        let mut total = 0.0;
        for f in 0..folds {
            let train: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds != f).map(|(_, &i)| i).collect();
            let test: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds == f).map(|(_, &i)| i).collect();
            let tr_pairs: Vec<NegLogPair> = train.iter().map(|&i| pairs[i]).collect();
            let te_pairs: Vec<NegLogPair> = test.iter().map(|&i| pairs[i]).collect();
            let nf = newton_fit(&tr_pairs, &rows.subset(&train), &penalty, vec![eta0; basis.len()]);
            total += loglik_at(&te_pairs, &rows.subset(&test), &nf.beta);
        }
        if total > best.0 {
            best = (total, lambda);
        }
    }
    best.1
}

/// Single-index calibration fit. `x` is row-major `n × q`.
pub fn fit_single_index<R: Rng + ?Sized>(
    x: &[f64],
    q: usize,
    pairs: &[UnitPair],
    cfg: &SingleIndexConfig,
    rng: &mut R,
) -> Result<CalibrationFit> {
    let n = pairs.len();
    if n < MIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "single-index calibration needs at least {MIN_ROWS} pairs, got {n}"
        )));
    }
    if q == 0 || x.len() != n * q {
        return Err(Error::Config("covariates and pairs are misaligned".into()));
    }
    if cfg.interior_knots == 0 || cfg.lambda_grid.is_empty() && cfg.lambda.is_none() {
        return Err(Error::Config("single-index needs knots and a penalty".into()));
    }
    let prepared = prepare(pairs);
    let eta0 = constant_mle(pairs)?.eta;

    let first = match &cfg.initial_direction {
        Some(w) => {
            let mut w = w.clone();
            if w.len() != q || !normalize(&mut w) {
                return Err(Error::Config(format!("initial direction must be a nonzero {q}-vector")));
            }
            canonicalize(&mut w);
            w
        }
        None => linear_direction(x, q, &prepared, eta0),
    };
    if let Some(l) = cfg.lambda.filter(|l| !(*l >= 0.0)) {
        return Err(Error::Config(format!("negative penalty {l}")));
    }
    let search_lambda = match (cfg.lambda, cfg.search_lambda) {
        (Some(l), _) => l,
        (None, Some(l)) if l >= 0.0 => l,
        (None, Some(l)) => return Err(Error::Config(format!("negative penalty {l}"))),
        (None, None) => cfg.lambda_grid.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let mut starts = vec![first.clone()];
    if q > 1 {
        starts.extend((0..cfg.random_starts).map(|_| random_direction(q, rng)));
    }
    let nb = cfg.interior_knots + 4;
    let problem = |lambda: f64| Problem {
        x,
        q,
        pairs: &prepared,
        interior: cfg.interior_knots,
        penalty: difference_penalty(nb, lambda),
    };

    let search = problem(search_lambda);
    let mut winner: Option<(State, bool, usize)> = None;
    for w0 in &starts {
        let cand = search.alternate(w0.clone(), vec![eta0; nb], cfg);
        let better = match &winner {
            None => true,
            Some((best, _, _)) => {
                let tol = 1e-12 * best.objective.abs().max(1.0);
                if cand.0.objective > best.objective + tol {
                    true
                } else if (cand.0.objective - best.objective).abs() <= tol {
                    let dist = |w: &[f64]| w.iter().zip(&first).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                    dist(&cand.0.w) < dist(&best.w)
                } else {
                    false
                }
            }
        };
        if better {
            winner = Some(cand);
        }
    }
    let (mut state, mut converged, mut alternations) = winner.expect("at least one start");
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => {
            let l = choose_lambda(x, q, &prepared, &state.w, eta0, cfg, rng);
            if l != search_lambda {
                (state, converged, alternations) = problem(l).alternate(state.w.clone(), vec![eta0; nb], cfg);
            }
            l
        }
    };
    Ok(CalibrationFit::SingleIndex(SingleIndexFit {
        index_range: state.basis.range(),
        interior_knots: cfg.interior_knots,
        direction: state.w,
        coefficients: state.beta,
        lambda,
        loglik: state.loglik,
        penalized_loglik: state.objective,
        converged,
        alternations,
        starts: starts.len(),
        basis: state.basis,
    }))
}
