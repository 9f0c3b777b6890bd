//! Inverse Gaussian, normal-inverse Gaussian and normal laws.
//!
//! The inverse Gaussian governs clock-edge hitting times of a drifted Wiener
//! phase; the normal-inverse Gaussian is the exact law of the sampled-phase
//! increment over one clock cycle, obtained as a normal variance-mean mixture
//! with inverse Gaussian mixing.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, invalid, Error, Result};
use crate::quad::{integrate_split, Tolerance};
use crate::special::{bessel_k1e, std_normal_cdf, std_normal_pdf};

/// `IG(mean_mu, shape_lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIg")]
pub struct InverseGaussianParams {
    mean_mu: f64,
    shape_lambda: f64,
}

#[derive(Deserialize)]
struct RawIg {
    mean_mu: f64,
    shape_lambda: f64,
}

impl TryFrom<RawIg> for InverseGaussianParams {
    type Error = Error;
    fn try_from(raw: RawIg) -> Result<Self> {
        Self::new(raw.mean_mu, raw.shape_lambda)
    }
}

impl InverseGaussianParams {
    pub fn new(mean_mu: f64, shape_lambda: f64) -> Result<Self> {
        ensure_positive("mean_mu", mean_mu)?;
        ensure_positive("shape_lambda", shape_lambda)?;
        Ok(Self {
            mean_mu,
            shape_lambda,
        })
    }

    pub fn mean_mu(&self) -> f64 {
        self.mean_mu
    }

    pub fn shape_lambda(&self) -> f64 {
        self.shape_lambda
    }

    pub fn mean(&self) -> f64 {
        self.mean_mu
    }

    pub fn variance(&self) -> f64 {
        self.mean_mu.powi(3) / self.shape_lambda
    }

    /// Largest argument for which the moment generating function is finite.
    pub fn mgf_domain_max(&self) -> f64 {
        self.shape_lambda / (2.0 * self.mean_mu * self.mean_mu)
    }
}

/// `NIG(alpha, beta, location_mu, delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNig")]
pub struct NigParams {
    alpha: f64,
    beta: f64,
    location_mu: f64,
    delta: f64,
    /// `sqrt(alpha^2 - beta^2)`, kept because it is known exactly for a
    /// pair while `alpha - beta` may have lost most of its digits.
    #[serde(skip_serializing)]
    gamma: f64,
}

#[derive(Deserialize)]
struct RawNig {
    alpha: f64,
    beta: f64,
    location_mu: f64,
    delta: f64,
}

impl TryFrom<RawNig> for NigParams {
    type Error = Error;
    fn try_from(raw: RawNig) -> Result<Self> {
        Self::new(raw.alpha, raw.beta, raw.location_mu, raw.delta)
    }
}

impl NigParams {
    pub fn new(alpha: f64, beta: f64, location_mu: f64, delta: f64) -> Result<Self> {
        ensure_positive("alpha", alpha)?;
        ensure_positive("delta", delta)?;
        if !location_mu.is_finite() {
            return Err(invalid("location_mu", "must be finite"));
        }
        if !(beta.abs() < alpha) {
            return Err(invalid("beta", format!("|beta| must be < alpha, got beta={beta}, alpha={alpha}")));
        }
        Ok(Self {
            alpha,
            beta,
            location_mu,
            delta,
            gamma: ((alpha - beta) * (alpha + beta)).sqrt(),
        })
    }

    fn with_gamma(gamma: f64, beta: f64, location_mu: f64, delta: f64) -> Result<Self> {
        ensure_positive("gamma", gamma)?;
        let mut p = Self::new(gamma.hypot(beta), beta, location_mu, delta)?;
        p.gamma = gamma;
        Ok(p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn location_mu(&self) -> f64 {
        self.location_mu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `sqrt(alpha^2 - beta^2)`
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mean(&self) -> f64 {
        self.location_mu + self.delta * self.beta / self.gamma()
    }

    pub fn variance(&self) -> f64 {
        self.delta * self.alpha * self.alpha / self.gamma().powi(3)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// `N(mean, std^2)`; `std == 0` is the point mass at `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub std: f64,
}

impl NormalParams {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("mean", "must be finite"));
        }
        ensure_non_negative("std", std)?;
        Ok(Self { mean, std })
    }

    pub fn is_degenerate(&self) -> bool {
        self.std == 0.0
    }

    /// Density; a degenerate normal has no density and yields `NaN`.
    pub fn pdf(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return f64::NAN;
        }
        std_normal_pdf((x - self.mean) / self.std) / self.std
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return if x < self.mean { 0.0 } else { 1.0 };
        }
        std_normal_cdf((x - self.mean) / self.std)
    }
}

pub fn ig_pdf(x: f64, p: &InverseGaussianParams) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            function: "ig_pdf",
            value: x,
        });
    }
    let (mu, lambda) = (p.mean_mu, p.shape_lambda);
    let exponent = -lambda * (x - mu).powi(2) / (2.0 * mu * mu * x);
    Ok((lambda / (2.0 * PI * x.powi(3))).sqrt() * exponent.exp())
}

/// Draws from `IG(mu, lambda)` with the Michael–Schucany–Haas
/// transformation: a chi-square(1) variate is mapped to the smaller root of
/// the quadratic relating it to `x`, and the larger root `mu^2 / x` is taken
/// with probability `x / (mu + x)`.
pub fn ig_sample<R: Rng + ?Sized>(p: &InverseGaussianParams, rng: &mut R) -> f64 {
    let (mu, lambda) = (p.mean_mu, p.shape_lambda);
    let nu: f64 = StandardNormal.sample(rng);
    let y = nu * nu;
    let mu_y = mu * y;
    // mu + mu^2 y / 2 lambda - mu / 2 lambda sqrt(4 mu lambda y + mu^2 y^2),
    // rewritten as mu * 2 lambda / (2 lambda + mu y + sqrt(...)) - the root
    // of the same quadratic without the subtraction
    let root = (4.0 * mu_y * lambda + mu_y * mu_y).sqrt();
    let x = mu * 2.0 * lambda / (2.0 * lambda + mu_y + root);
    let u: f64 = rng.gen();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// `ln pdf` of the normal-inverse Gaussian; stays finite in the small-jitter
/// regime where `alpha` and `beta` are of order `1e6` and the Bessel factor
/// underflows.
pub fn nig_ln_pdf(x: f64, p: &NigParams) -> f64 {
    let dx = x - p.location_mu;
    let q = p.delta.hypot(dx);
    let z = p.alpha * q;
    // alpha q - delta gamma - beta dx, the net exponent, computed from the
    // two nearly cancelling groups
    let exponent = p.delta * p.gamma() + p.beta * dx - z;
    (p.alpha * p.delta / (PI * q)).ln() + bessel_k1e(z).ln() + exponent
}

pub fn nig_pdf(x: f64, p: &NigParams) -> f64 {
    nig_ln_pdf(x, p).exp()
}

/// Distribution function of the NIG law by adaptive quadrature of the
/// density (absolute tolerance `1e-9`).
pub fn nig_cdf(x: f64, p: &NigParams) -> Result<f64> {
    let mean = p.mean();
    let sd = p.std_dev();
    let lower = mean - 60.0 * sd;
    if x <= lower {
        return Ok(0.0);
    }
    let upper = mean + 60.0 * sd;
    let tol = Tolerance::absolute(1e-9);
    if x >= upper {
        return Ok(1.0);
    }
    // integrate the shorter tail for accuracy
    if x <= mean {
        Ok(integrate_split(|t| nig_pdf(t, p), lower, x, 32, tol)?.value.clamp(0.0, 1.0))
    } else {
        let tail = integrate_split(|t| nig_pdf(t, p), x, upper, 32, tol)?.value;
        Ok((1.0 - tail).clamp(0.0, 1.0))
    }
}

/// NIG law of the sampled-phase increment over one cycle of a sampler
/// `(f0, sigma0)` observing a sampled oscillator `(f1, sigma1)`.
pub fn nig_of_pair(f0: f64, sigma0: f64, f1: f64, sigma1: f64) -> Result<NigParams> {
    ensure_positive("f0", f0)?;
    ensure_positive("f1", f1)?;
    ensure_non_negative("sigma0", sigma0)?;
    ensure_non_negative("sigma1", sigma1)?;
    if sigma0 == 0.0 || sigma1 == 0.0 {
        return Err(Error::Degenerate(format!(
            "zero volatility (sigma0={sigma0}, sigma1={sigma1}) has no NIG law; use the normal or deterministic limit"
        )));
    }
    // alpha^2 - beta^2 = (f0 / (sigma0 sigma1))^2 exactly
    NigParams::with_gamma(f0 / (sigma0 * sigma1), f1 / (sigma1 * sigma1), 0.0, sigma1 / sigma0)
}

/// `ln E[exp(s X)]` for `X ~ IG(mu, lambda)`:
/// `(lambda / mu) (1 - sqrt(1 - 2 mu^2 s / lambda))`.
pub fn log_mgf_ig(s: f64, p: &InverseGaussianParams) -> Result<f64> {
    let z = 2.0 * p.mean_mu * p.mean_mu * s / p.shape_lambda;
    if !(z <= 1.0) {
        return Err(Error::Domain {
            function: "log_mgf_ig",
            value: s,
        });
    }
    // 1 - sqrt(1 - z) = z / (1 + sqrt(1 - z))
    Ok(p.shape_lambda / p.mean_mu * z / (1.0 + (1.0 - z).sqrt()))
}

/// `ln E[exp(s X)]` for `X ~ NIG(alpha, beta, mu, delta)`:
/// `mu s + delta (gamma - sqrt(alpha^2 - (beta + s)^2))`.
pub fn log_mgf_nig(s: f64, p: &NigParams) -> Result<f64> {
    // alpha^2 - (beta + s)^2 without forming alpha - beta
    let radicand = p.gamma * p.gamma - s * (2.0 * p.beta + s);
    if !(radicand >= 0.0) {
        return Err(Error::Domain {
            function: "log_mgf_nig",
            value: s,
        });
    }
    let gamma = p.gamma();
    // gamma - sqrt(r) = ((beta + s)^2 - beta^2) / (gamma + sqrt(r))
    let diff = s * (2.0 * p.beta + s) / (gamma + radicand.sqrt());
    Ok(p.location_mu * s + p.delta * diff)
}
