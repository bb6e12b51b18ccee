//! Calibration function estimation.
//!
//! The calibration function `η(x) = g(θ(x))` places the copula parameter on
//! the real line. Three point-estimate backends are provided:
//!
//! * [`fit_constant`]: a single `η̂`, the maximum likelihood estimate under
//!   the simplifying assumption.
//! * [`fit_local_likelihood`]: kernel-weighted local-constant likelihood in
//!   covariate space.
//! * [`fit_single_index`]: `η(x) = s(xᵀw)` with a penalized cubic spline
//!   ridge function `s` and a unit direction `w`.
//!
//! All three consume pseudo-observations `Û` (PIT pairs) and return a
//! [`CalibrationFit`] whose [`predict_eta`](CalibrationFit::predict_eta) is
//! finite everywhere and lies in the search box [`ETA_BOX`].

pub mod bspline;
mod local;
mod single_index;

pub use local::{fit_local_likelihood, LocalBandwidth, LocalFit};
pub use single_index::{fit_single_index, SingleIndexConfig, SingleIndexFit};

use crate::copula::{
    clayton_eta_derivatives, clayton_log_density, prepare, Family, NegLogPair, UnitPair,
};
use crate::error::{Error, Result};
use crate::numeric::brent_maximize;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Search box for calibration values. With the log link this is
/// `θ ∈ (4.5e-5, 22026)`, i.e. `τ ∈ (2.3e-5, 0.9999)`.
pub const ETA_BOX: (f64, f64) = (-10.0, 10.0);
const BRENT_TOL: f64 = 1e-9;
const BOUNDARY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Constant,
    LocalLikelihood,
    SingleIndex,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Constant => "constant",
            Backend::LocalLikelihood => "local-likelihood",
            Backend::SingleIndex => "single-index",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Backend::Constant),
            "local-likelihood" | "local" => Ok(Backend::LocalLikelihood),
            "single-index" | "sim" => Ok(Backend::SingleIndex),
            other => Err(Error::Config(format!("unknown calibration backend '{other}'"))),
        }
    }
}

/// Backend choice together with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum CalibrationSpec {
    Constant,
    LocalLikelihood { bandwidth: LocalBandwidth },
    SingleIndex(SingleIndexConfig),
}

impl CalibrationSpec {
    pub fn backend(&self) -> Backend {
        match self {
            CalibrationSpec::Constant => Backend::Constant,
            CalibrationSpec::LocalLikelihood { .. } => Backend::LocalLikelihood,
            CalibrationSpec::SingleIndex(_) => Backend::SingleIndex,
        }
    }

    pub fn default_for(backend: Backend) -> Self {
        match backend {
            Backend::Constant => CalibrationSpec::Constant,
            Backend::LocalLikelihood => CalibrationSpec::LocalLikelihood {
                bandwidth: LocalBandwidth::Auto,
            },
            Backend::SingleIndex => CalibrationSpec::SingleIndex(SingleIndexConfig::default()),
        }
    }
}

/// Reduced-model fit: one calibration value for every covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantFit {
    pub eta: f64,
    pub loglik: f64,
    /// The optimum sits on the edge of [`ETA_BOX`].
    pub at_boundary: bool,
}

/// A fitted calibration function.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum CalibrationFit {
    Constant(ConstantFit),
    LocalLikelihood(LocalFit),
    SingleIndex(SingleIndexFit),
}

impl CalibrationFit {
    pub fn backend(&self) -> Backend {
        match self {
            CalibrationFit::Constant(_) => Backend::Constant,
            CalibrationFit::LocalLikelihood(_) => Backend::LocalLikelihood,
            CalibrationFit::SingleIndex(_) => Backend::SingleIndex,
        }
    }

    pub fn family(&self) -> Family {
        Family::Clayton
    }

    /// Calibration prediction `η̂(x)`.
    pub fn predict_eta(&self, x: &[f64]) -> f64 {
        match self {
            CalibrationFit::Constant(c) => c.eta,
            CalibrationFit::LocalLikelihood(l) => l.predict(x).eta,
            CalibrationFit::SingleIndex(s) => s.predict(x),
        }
    }

    /// Copula parameter `θ̂(x) = g⁻¹(η̂(x))`.
    pub fn predict_theta(&self, x: &[f64]) -> f64 {
        self.family().link().inverse(self.predict_eta(x))
    }

    /// Copula log-likelihood of `pairs` at the rows of `x` under this fit.
    pub fn loglik(&self, x: &[f64], q: usize, pairs: &[UnitPair]) -> f64 {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let theta = self.predict_theta(&x[i * q..(i + 1) * q]);
                clayton_log_density(NegLogPair::new(p), theta)
            })
            .sum()
    }
}

/// Free-function form of [`CalibrationFit::predict_eta`].
pub fn predict_eta(f: &CalibrationFit, x: &[f64]) -> f64 {
    f.predict_eta(x)
}

fn weighted_loglik(pairs: &[NegLogPair], weights: Option<&[f64]>, eta: f64) -> f64 {
    let theta = eta.exp();
    match weights {
        None => pairs.iter().map(|&p| clayton_log_density(p, theta)).sum(),
        Some(w) => pairs
            .iter()
            .zip(w)
            .filter(|(_, &wi)| wi > 0.0)
            .map(|(&p, &wi)| wi * clayton_log_density(p, theta))
            .sum(),
    }
}

/// `argmax_η Σ w_i log c(p_i; g⁻¹(η))` over [`ETA_BOX`] by Brent's method.
pub(crate) fn weighted_eta_brent(pairs: &[NegLogPair], weights: Option<&[f64]>) -> (f64, f64) {
    let r = brent_maximize(
        |eta| weighted_loglik(pairs, weights, eta),
        ETA_BOX.0,
        ETA_BOX.1,
        BRENT_TOL,
    );
    (r.x, r.value)
}

/// Newton's method for the same problem, started at `start`. Falls back to
/// Brent when the curvature is not negative or an iterate leaves the box.
pub(crate) fn weighted_eta(pairs: &[NegLogPair], weights: &[f64], start: f64) -> f64 {
    let mut eta = start.clamp(ETA_BOX.0, ETA_BOX.1);
    for _ in 0..30 {
        let (mut g, mut h) = (0.0, 0.0);
        for (&p, &w) in pairs.iter().zip(weights) {
            if w > 0.0 {
                let (_, d1, d2) = clayton_eta_derivatives(p, eta);
                g += w * d1;
                h += w * d2;
            }
        }
        if !(h < 0.0) {
            break;
        }
        let step = (-g / h).clamp(-2.0, 2.0);
        eta += step;
        if !(ETA_BOX.0..=ETA_BOX.1).contains(&eta) {
            break;
        }
        if step.abs() < 1e-10 {
            return eta;
        }
    }
    weighted_eta_brent(pairs, Some(weights)).0
}

/// Reduced-model maximum likelihood estimate of a single `η`.
pub fn fit_constant(pairs: &[UnitPair]) -> Result<CalibrationFit> {
    Ok(CalibrationFit::Constant(constant_mle(pairs)?))
}

pub(crate) fn constant_mle(pairs: &[UnitPair]) -> Result<ConstantFit> {
    if pairs.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "constant calibration needs at least 10 pairs, got {}",
            pairs.len()
        )));
    }
    // sorted so the likelihood sum does not depend on row order
    let mut prepared = prepare(pairs);
    prepared.sort_by(|a, b| a.l1.total_cmp(&b.l1).then(a.l2.total_cmp(&b.l2)));
    let (eta, loglik) = weighted_eta_brent(&prepared, None);
    let at_boundary =
        eta - ETA_BOX.0 < BOUNDARY_MARGIN || ETA_BOX.1 - eta < BOUNDARY_MARGIN;
    Ok(ConstantFit {
        eta,
        loglik,
        at_boundary,
    })
}

/// Fits the backend described by `spec`.
pub fn fit_calibration<R: Rng + ?Sized>(
    spec: &CalibrationSpec,
    x: &[f64],
    q: usize,
    pairs: &[UnitPair],
    rng: &mut R,
) -> Result<CalibrationFit> {
    if x.len() != pairs.len() * q {
        return Err(Error::Config("covariates and pairs are misaligned".into()));
    }
    match spec {
        CalibrationSpec::Constant => fit_constant(pairs),
        CalibrationSpec::LocalLikelihood { bandwidth } => {
            fit_local_likelihood(x, q, pairs, bandwidth)
        }
        CalibrationSpec::SingleIndex(cfg) => fit_single_index(x, q, pairs, cfg, rng),
    }
}
