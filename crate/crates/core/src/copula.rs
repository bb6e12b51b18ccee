//! Clayton copula: density, CDF, h-function, sampling, and the
//! Kendall's tau and link-scale parametrizations.
//!
//! For `θ > 0` the Clayton copula is
//!
//! ```text
//! C(u, v; θ) = (u^-θ + v^-θ - 1)^(-1/θ)
//! c(u, v; θ) = (1 + θ) (uv)^(-θ-1) (u^-θ + v^-θ - 1)^(-2-1/θ)
//! τ = θ / (θ + 2)
//! ```
//!
//! All evaluations go through the log domain. Powers like `u^-θ` overflow
//! for moderate `θ` when `u` is small, so the shared term
//! `A = u^-θ + v^-θ - 1` is only ever handled as `log A`.

use crate::error::{Error, Result};
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Floor applied to `u` (and `1 - u`) inside likelihood evaluation.
pub const U_FLOOR: f64 = 1e-12;

/// Kendall's tau values accepted by [`tau_to_theta`] lie strictly inside
/// this band.
pub const TAU_BAND: (f64, f64) = (0.01, 0.99);

/// Parametric copula family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Clayton,
}

/// Known one-to-one map between the copula parameter and the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    /// `η = log θ`, for families with `θ > 0`.
    Log,
}

impl LinkFunction {
    /// Maps a copula parameter to the calibration scale.
    pub fn forward(self, theta: f64) -> f64 {
        match self {
            LinkFunction::Log => theta.ln(),
        }
    }

    /// Maps a calibration value back to the copula parameter.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Log => eta.exp(),
        }
    }
}

impl Family {
    pub fn link(self) -> LinkFunction {
        match self {
            Family::Clayton => LinkFunction::Log,
        }
    }
}

/// A point strictly inside the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPair {
    pub u1: f64,
    pub u2: f64,
}

impl UnitPair {
    pub fn new(u1: f64, u2: f64) -> Result<Self> {
        let inside = |u: f64| u > 0.0 && u < 1.0;
        if inside(u1) && inside(u2) {
            Ok(UnitPair { u1, u2 })
        } else {
            Err(Error::Domain(format!(
                "pair ({u1}, {u2}) is not strictly inside the unit square"
            )))
        }
    }

    pub fn swapped(self) -> Self {
        UnitPair {
            u1: self.u2,
            u2: self.u1,
        }
    }
}

/// Copula family together with its dependence parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaParam {
    pub family: Family,
    pub theta: f64,
}

impl CopulaParam {
    /// Clayton copula with parameter `theta > 0`.
    pub fn clayton(theta: f64) -> Result<Self> {
        if theta > 0.0 && theta.is_finite() {
            Ok(CopulaParam {
                family: Family::Clayton,
                theta,
            })
        } else {
            Err(Error::Parameter(format!(
                "Clayton parameter must be positive and finite, got {theta}"
            )))
        }
    }

    /// Builds the parameter from a calibration value `η = g(θ)`.
    pub fn from_eta(family: Family, eta: f64) -> Result<Self> {
        match family {
            Family::Clayton => Self::clayton(family.link().inverse(eta)),
        }
    }

    pub fn eta(&self) -> f64 {
        self.family.link().forward(self.theta)
    }

    pub fn tau(&self) -> f64 {
        theta_to_tau(*self)
    }
}

/// `log A` with `A = exp(a) + exp(b) - 1` and `a, b >= 0`.
#[inline]
fn log_a(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m < 0.5 {
        (a.exp_m1() + b.exp_m1()).ln_1p()
    } else {
        m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
    }
}

/// Pair stored as `(-ln u1, -ln u2)` after clamping to
/// `[U_FLOOR, 1 - U_FLOOR]`; the form every likelihood loop consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NegLogPair {
    pub l1: f64,
    pub l2: f64,
}

impl NegLogPair {
    pub fn new(p: UnitPair) -> Self {
        let c = |u: f64| -(u.clamp(U_FLOOR, 1.0 - U_FLOOR)).ln();
        NegLogPair {
            l1: c(p.u1),
            l2: c(p.u2),
        }
    }
}

pub(crate) fn prepare(pairs: &[UnitPair]) -> Vec<NegLogPair> {
    pairs.iter().map(|&p| NegLogPair::new(p)).collect()
}

/// Clayton log density from pre-logged coordinates.
#[inline]
pub(crate) fn clayton_log_density(p: NegLogPair, theta: f64) -> f64 {
    let s = p.l1 + p.l2;
    let la = log_a(theta * p.l1, theta * p.l2);
    theta.ln_1p() + (1.0 + theta) * s - (2.0 + 1.0 / theta) * la
}

/// Log density and its derivative with respect to `η = log θ`.
#[inline]
pub(crate) fn clayton_log_density_and_score(p: NegLogPair, eta: f64) -> (f64, f64) {
    let theta = eta.exp();
    let (l1, l2) = (p.l1, p.l2);
    let s = l1 + l2;
    let (a, b) = (theta * l1, theta * l2);
    let m = a.max(b);
    let (la, ratio) = if m < 0.5 {
        let big_a = 1.0 + a.exp_m1() + b.exp_m1();
        let la = (a.exp_m1() + b.exp_m1()).ln_1p();
        (la, (l1 * a.exp() + l2 * b.exp()) / big_a)
    } else {
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        let scaled = ea + eb - (-m).exp();
        (m + scaled.ln(), (l1 * ea + l2 * eb) / scaled)
    };
    let logc = theta.ln_1p() + (1.0 + theta) * s - (2.0 + 1.0 / theta) * la;
    let dtheta = 1.0 / (1.0 + theta) + s + la / (theta * theta) - (2.0 + 1.0 / theta) * ratio;
    (logc, theta * dtheta)
}

/// Log density, first and second derivative with respect to `η`.
///
/// The second derivative is a central difference of the analytic score.
#[inline]
pub(crate) fn clayton_eta_derivatives(p: NegLogPair, eta: f64) -> (f64, f64, f64) {
    const H: f64 = 1e-4;
    let (l, d1) = clayton_log_density_and_score(p, eta);
    let (_, up) = clayton_log_density_and_score(p, eta + H);
    let (_, down) = clayton_log_density_and_score(p, eta - H);
    (l, d1, (up - down) / (2.0 * H))
}

/// Copula density `c(u1, u2)`.
pub fn density(p: UnitPair, c: CopulaParam) -> Result<f64> {
    log_density(p, c).map(f64::exp)
}

/// Log copula density `log c(u1, u2)`.
pub fn log_density(p: UnitPair, c: CopulaParam) -> Result<f64> {
    let p = UnitPair::new(p.u1, p.u2)?;
    let c = CopulaParam::clayton(c.theta)?;
    let l1 = -p.u1.ln();
    let l2 = -p.u2.ln();
    Ok(clayton_log_density(NegLogPair { l1, l2 }, c.theta))
}

/// Copula CDF `C(u1, u2)` on the closed unit square.
pub fn cdf(u1: f64, u2: f64, c: CopulaParam) -> Result<f64> {
    let c = CopulaParam::clayton(c.theta)?;
    let closed = |u: f64| (0.0..=1.0).contains(&u);
    if !closed(u1) || !closed(u2) {
        return Err(Error::Domain(format!(
            "CDF argument ({u1}, {u2}) outside the unit square"
        )));
    }
    if u1 == 0.0 || u2 == 0.0 {
        return Ok(0.0);
    }
    let la = log_a(-c.theta * u1.ln(), -c.theta * u2.ln());
    Ok((-la / c.theta).exp())
}

/// Conditional CDF `h(u1 | u2) = ∂C(u1, u2) / ∂u2`.
pub fn h_function(u1: f64, u2: f64, c: CopulaParam) -> Result<f64> {
    let p = UnitPair::new(u1, u2)?;
    let c = CopulaParam::clayton(c.theta)?;
    let (l1, l2) = (-p.u1.ln(), -p.u2.ln());
    let la = log_a(c.theta * l1, c.theta * l2);
    let log_h = (1.0 + c.theta) * l2 - (1.0 + 1.0 / c.theta) * la;
    Ok(log_h.exp().min(1.0))
}

/// Draws one Clayton pair by conditional inversion.
pub(crate) fn sample_one<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> UnitPair {
    let u2: f64 = rng.sample(Open01);
    let w: f64 = rng.sample(Open01);
    // u1 = ((w^(-θ/(1+θ)) - 1) u2^-θ + 1)^(-1/θ), evaluated as a softplus
    let t = (-theta / (1.0 + theta) * w.ln()).exp_m1();
    let z = t.ln() - theta * u2.ln();
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    let u1 = (-softplus / theta).exp();
    let hi = 1.0 - f64::EPSILON / 2.0;
    UnitPair {
        u1: u1.clamp(f64::MIN_POSITIVE, hi),
        u2,
    }
}

/// Draws `n` i.i.d. pairs from the copula.
pub fn sample<R: Rng + ?Sized>(c: CopulaParam, n: usize, rng: &mut R) -> Result<Vec<UnitPair>> {
    let c = CopulaParam::clayton(c.theta)?;
    Ok((0..n).map(|_| sample_one(c.theta, rng)).collect())
}

/// Clayton parameter for Kendall's tau, `θ = 2τ / (1 - τ)`.
pub fn tau_to_theta(tau: f64) -> Result<CopulaParam> {
    if !(tau > TAU_BAND.0 && tau < TAU_BAND.1) {
        return Err(Error::Domain(format!(
            "Kendall's tau must lie in ({}, {}), got {tau}",
            TAU_BAND.0, TAU_BAND.1
        )));
    }
    CopulaParam::clayton(2.0 * tau / (1.0 - tau))
}

pub fn theta_to_tau(c: CopulaParam) -> f64 {
    c.theta / (c.theta + 2.0)
}

/// Sum of log densities. Coordinates are floored at [`U_FLOOR`].
pub fn loglik(pairs: &[UnitPair], c: CopulaParam) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("log-likelihood of no pairs".into()));
    }
    let c = CopulaParam::clayton(c.theta)?;
    Ok(pairs
        .iter()
        .map(|&p| clayton_log_density(NegLogPair::new(p), c.theta))
        .sum())
}
