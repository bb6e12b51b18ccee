//! Predictive criteria computed from per-draw log densities, and a bootstrap
//! stand-in for posterior draws.

use crate::calibration::{fit_calibration, CalibrationFit, CalibrationSpec, SingleIndexConfig};
use crate::copula::{clayton_log_density, NegLogPair};
use crate::data::Dataset;
use crate::error::{Error, Result, StageExt};
use crate::marginal::{fit_margin, Bandwidth, MarginalFit};
use crate::rng::{derive_seed, substream, StreamRng};
use crate::sa_tests::{fit_margins, training_pairs};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `M × n` tables of log densities, one row per draw. `m1` and `m2` hold the
/// marginal log densities and are needed only by [`ccvml`].
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsMatrix {
    m: usize,
    n: usize,
    joint: Vec<f64>,
    m1: Option<Vec<f64>>,
    m2: Option<Vec<f64>>,
}

impl DrawsMatrix {
    pub fn new(m: usize, n: usize, joint: Vec<f64>, m1: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        let d = DrawsMatrix {
            m,
            n,
            joint,
            m1: Some(m1),
            m2: Some(m2),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn from_joint(m: usize, n: usize, joint: Vec<f64>) -> Result<Self> {
        let d = DrawsMatrix {
            m,
            n,
            joint,
            m1: None,
            m2: None,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InsufficientData("empty draws matrix".into()));
        }
        let size = self.m * self.n;
        for block in [Some(&self.joint), self.m1.as_ref(), self.m2.as_ref()].into_iter().flatten() {
            if block.len() != size {
                return Err(Error::Config(format!(
                    "draws block has {} entries, expected {}×{}",
                    block.len(),
                    self.m,
                    self.n
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite log density in draws matrix".into()));
            }
        }
        Ok(())
    }

    pub fn draws(&self) -> usize {
        self.m
    }

    pub fn observations(&self) -> usize {
        self.n
    }

    /// `ℓ^t_i`.
    pub fn joint(&self, t: usize, i: usize) -> f64 {
        self.joint[t * self.n + i]
    }

    fn column<'a>(&'a self, block: &'a [f64], i: usize) -> impl Iterator<Item = f64> + Clone + 'a {
        (0..self.m).map(move |t| block[t * self.n + i])
    }

    fn marginals(&self) -> Result<(&[f64], &[f64])> {
        match (&self.m1, &self.m2) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Config("marginal log densities are required".into())),
        }
    }
}

/// `log((1/M) Σ exp(v))`, stabilized by the maximum.
fn log_mean_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let top = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + (v - top).exp(), c + 1));
    top + sum.ln() - (count as f64).ln()
}

/// Cross-validated marginal likelihood estimate; larger is better.
pub fn cvml(d: &DrawsMatrix) -> f64 {
    -(0..d.n)
        .map(|i| log_mean_exp(d.column(&d.joint, i).map(|v| -v)))
        .sum::<f64>()
}

/// Conditional variant of [`cvml`]; larger is better.
pub fn ccvml(d: &DrawsMatrix) -> Result<f64> {
    let (m1, m2) = d.marginals()?;
    let total: f64 = (0..d.n)
        .map(|i| {
            let a = log_mean_exp(d.column(m2, i).zip(d.column(&d.joint, i)).map(|(m, l)| m - l));
            let b = log_mean_exp(d.column(m1, i).zip(d.column(&d.joint, i)).map(|(m, l)| m - l));
            a + b
        })
        .sum();
    Ok(-0.5 * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Waic {
    pub waic: f64,
    pub fit: f64,
    pub penalty: f64,
}

/// `-2 fit + 2 penalty`; smaller is better. Needs at least two draws.
pub fn waic(d: &DrawsMatrix) -> Result<Waic> {
    if d.m < 2 {
        return Err(Error::InsufficientData("WAIC needs at least two draws".into()));
    }
    let mut fit = 0.0;
    let mut penalty = 0.0;
    for i in 0..d.n {
        fit += log_mean_exp(d.column(&d.joint, i));
        let mean = d.column(&d.joint, i).sum::<f64>() / d.m as f64;
        penalty += d.column(&d.joint, i).map(|v| (v - mean).powi(2)).sum::<f64>() / (d.m - 1) as f64;
    }
    Ok(Waic {
        waic: -2.0 * fit + 2.0 * penalty,
        fit,
        penalty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Cvml,
    Ccvml,
    Waic,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Cvml, Criterion::Ccvml, Criterion::Waic];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Cvml => "cvml",
            Criterion::Ccvml => "ccvml",
            Criterion::Waic => "waic",
        }
    }

    pub fn larger_is_better(self) -> bool {
        !matches!(self, Criterion::Waic)
    }

    pub fn evaluate(self, d: &DrawsMatrix) -> Result<f64> {
        match self {
            Criterion::Cvml => Ok(cvml(d)),
            Criterion::Ccvml => ccvml(d),
            Criterion::Waic => waic(d).map(|w| w.waic),
        }
    }

    /// Whether the value `a` is strictly preferred to `b`.
    pub fn prefers(self, a: f64, b: f64) -> bool {
        if self.larger_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

/// A fitted joint model: two margins and a calibration function.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub margins: [MarginalFit; 2],
    pub calibration: CalibrationFit,
}

impl JointModel {
    /// Joint and marginal log densities at every row of `d`.
    pub fn log_densities(&self, d: &Dataset) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = d.n();
        let (mut joint, mut l1, mut l2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let x = d.row(i);
            let mu1 = self.margins[0].predict(x);
            let mu2 = self.margins[1].predict(x);
            let a = self.margins[0].log_density_from_mean(mu1, d.y1[i]);
            let b = self.margins[1].log_density_from_mean(mu2, d.y2[i]);
            let u1 = self.margins[0].pit_from_mean(mu1, d.y1[i]);
            let u2 = self.margins[1].pit_from_mean(mu2, d.y2[i]);
            let pair = NegLogPair { l1: -u1.ln(), l2: -u2.ln() };
            let c = clayton_log_density(pair, self.calibration.predict_theta(x));
            joint.push(a + b + c);
            l1.push(a);
            l2.push(b);
        }
        Ok((joint, l1, l2))
    }
}

/// Anything that fits a [`JointModel`] to a dataset.
pub trait JointFitter: Sync {
    fn fit(&self, d: &Dataset, rng: &mut StreamRng) -> Result<JointModel>;
}

/// Margins by kernel regression, copula calibration by `calibration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModelFitter {
    pub calibration: CalibrationSpec,
    /// Bandwidth requests for the `y1` and `y2` margins.
    pub margin_bandwidth: [Bandwidth; 2],
}

impl JointFitter for CopulaModelFitter {
    fn fit(&self, d: &Dataset, rng: &mut StreamRng) -> Result<JointModel> {
        let margins = [
            fit_margin(d.covariates(), d.q(), &d.y1, &self.margin_bandwidth[0]).stage("margins")?,
            fit_margin(d.covariates(), d.q(), &d.y2, &self.margin_bandwidth[1]).stage("margins")?,
        ];
        let pairs = training_pairs(d, &margins).stage("margins")?;
        let calibration = fit_calibration(&self.calibration, d.covariates(), d.q(), &pairs, rng).stage("calibration")?;
        Ok(JointModel { margins, calibration })
    }
}

/// `B` bootstrap refits of `train`, each evaluated on `eval`. A failed refit
/// is retried once with a fresh resample.
pub fn bootstrap_draws(
    train: &Dataset,
    eval: &Dataset,
    fitter: &dyn JointFitter,
    b: usize,
    seed: u64,
) -> Result<DrawsMatrix> {
    if b < 2 {
        return Err(Error::Config(format!("need at least 2 bootstrap draws, got {b}")));
    }
    let n = train.n();
    let one = |draw: usize, attempt: u64| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut rng = substream(seed, "bootstrap", &[draw as u64, attempt]);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let model = fitter.fit(&train.subset(&idx), &mut rng)?;
        model.log_densities(eval)
    };
    let rows: Vec<_> = (0..b)
        .into_par_iter()
        .map(|draw| one(draw, 0).or_else(|_| one(draw, 1)))
        .collect::<Result<_>>()
        .stage("bootstrap")?;
    let m = eval.n();
    let (mut joint, mut m1, mut m2) = (Vec::with_capacity(b * m), Vec::with_capacity(b * m), Vec::with_capacity(b * m));
    for (j, a, c) in rows {
        joint.extend(j);
        m1.extend(a);
        m2.extend(c);
    }
    DrawsMatrix::new(b, m, joint, m1, m2)
}

/// Full-versus-reduced comparison on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub full: [f64; 3],
    pub reduced: [f64; 3],
    /// Per criterion (CVML, CCVML, WAIC): the full model is preferred.
    pub prefers_full: [bool; 3],
}

/// Bootstrap draws for the full (covariate-dependent) and reduced (constant)
/// calibration on the whole of `d`, scored by all three criteria.
///
/// Margin bandwidths and, for a single-index full model, the index
/// direction and penalty are taken from one fit to the full data and held
/// fixed across resamples.
pub fn compare_full_reduced(d: &Dataset, full: &CalibrationSpec, b: usize, seed: u64) -> Result<Comparison> {
    let margins = fit_margins(d, &Bandwidth::Auto).stage("margins")?;
    // constant covariates are ignored by the kernel, any positive value works
    let fixed = |m: &MarginalFit| Bandwidth::Fixed(m.bandwidth.iter().map(|h| h.unwrap_or(1.0)).collect());
    let bandwidths = [fixed(&margins[0]), fixed(&margins[1])];
    let full_spec = match full {
        CalibrationSpec::SingleIndex(cfg) => {
            let pairs = training_pairs(d, &margins)?;
            let fit = fit_calibration(full, d.covariates(), d.q(), &pairs, &mut substream(seed, "calibration", &[]))
                .stage("calibration")?;
            let CalibrationFit::SingleIndex(s) = fit else {
                unreachable!("single-index spec yields a single-index fit")
            };
            CalibrationSpec::SingleIndex(SingleIndexConfig {
                lambda: Some(s.lambda),
                random_starts: 0,
                initial_direction: Some(s.direction.clone()),
                ..cfg.clone()
            })
        }
        other => other.clone(),
    };
    let fitter_full = CopulaModelFitter {
        calibration: full_spec,
        margin_bandwidth: bandwidths.clone(),
    };
    let fitter_reduced = CopulaModelFitter {
        calibration: CalibrationSpec::Constant,
        margin_bandwidth: bandwidths,
    };
    let draws_full = bootstrap_draws(d, d, &fitter_full, b, derive_seed(seed, "full", &[]))?;
    let draws_reduced = bootstrap_draws(d, d, &fitter_reduced, b, derive_seed(seed, "reduced", &[]))?;
    let mut out = Comparison {
        full: [0.0; 3],
        reduced: [0.0; 3],
        prefers_full: [false; 3],
    };
    for (k, c) in Criterion::ALL.into_iter().enumerate() {
        out.full[k] = c.evaluate(&draws_full)?;
        out.reduced[k] = c.evaluate(&draws_reduced)?;
        out.prefers_full[k] = c.prefers(out.full[k], out.reduced[k]);
    }
    Ok(out)
}
