//! Mean-variance efficient portfolios and minimum-variance SDFs on possibly
//! singular covariance matrices. Risk aversion is normalized to one.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Tolerance, Vector};
use crate::model::{CrossSectionMoments, FactorModelMoments};

/// Weak no-arbitrage `μ ∈ Im Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoArbitrageCheck {
    pub holds: bool,
    pub residual: f64,
    /// `μ − ΣΣ⁺μ`, the kernel component of μ. A nonzero value is a risk-free
    /// portfolio with strictly positive payoff.
    pub arbitrage_component: Vector,
}

fn no_arbitrage(mu: &Vector, sigma: &Matrix, tol: &Tolerance) -> Result<NoArbitrageCheck> {
    let check = linalg::in_image(mu, sigma, tol)?;
    let proj = linalg::image_projector(sigma, tol)?;
    Ok(NoArbitrageCheck {
        holds: check.holds,
        residual: check.residual,
        arbitrage_component: mu - proj * mu,
    })
}

pub fn check_no_arbitrage(moments: &CrossSectionMoments, tol: &Tolerance) -> Result<NoArbitrageCheck> {
    no_arbitrage(moments.mu(), moments.sigma(), tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MveResult {
    /// `Σ⁺μ`
    pub weights: Vec<f64>,
    /// `μᵀΣ⁺μ`
    pub sr_squared: f64,
}

impl MveResult {
    pub fn weights_vector(&self) -> Vector {
        Vector::from_vec(self.weights.clone())
    }
}

fn mve_unchecked(mu: &Vector, sigma: &Matrix, tol: &Tolerance) -> Result<MveResult> {
    let w = linalg::pinv(sigma, tol)? * mu;
    // Σ⁺ is PSD, so negative values are rounding.
    let sr_squared = mu.dot(&w).max(0.0);
    Ok(MveResult {
        weights: w.iter().copied().collect(),
        sr_squared,
    })
}

/// Mean-variance objective `wᵀμ − ½ wᵀΣw`.
pub fn mve_objective(w: &Vector, mu: &Vector, sigma: &Matrix) -> f64 {
    w.dot(mu) - 0.5 * w.dot(&(sigma * w))
}

/// MVE portfolio of the full cross-section; errors when `μ ∉ Im Σ`.
pub fn mve(moments: &CrossSectionMoments, tol: &Tolerance) -> Result<MveResult> {
    let na = check_no_arbitrage(moments, tol)?;
    if !na.holds {
        let norm = na.arbitrage_component.norm();
        return Err(Error::Arbitrage {
            component: na.arbitrage_component,
            norm,
        });
    }
    mve_unchecked(moments.mu(), moments.sigma(), tol)
}

/// MVE portfolio in factor space: weights `Σ_f⁺μ_f` on the factors.
pub fn factor_mve(fm: &FactorModelMoments, tol: &Tolerance) -> Result<MveResult> {
    mve_unchecked(&fm.mu_f, &fm.sigma_f, tol)
}

/// Affine SDF `M = intercept + loadingsᵀ x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdfCoefficients {
    pub intercept: f64,
    pub loadings: Vec<f64>,
}

impl SdfCoefficients {
    fn from_mve(mu: &Vector, weights: &Vector) -> Self {
        SdfCoefficients {
            intercept: 1.0 + mu.dot(weights),
            loadings: weights.iter().map(|w| -w).collect(),
        }
    }

    pub fn loadings_vector(&self) -> Vector {
        Vector::from_vec(self.loadings.clone())
    }

    /// `E[M]` for payoffs with mean `mu`.
    pub fn mean(&self, mu: &Vector) -> f64 {
        self.intercept + self.loadings_vector().dot(mu)
    }

    /// `E[M x] = intercept·μ + (Σ + μμᵀ)·loadings`, zero when M prices every payoff.
    pub fn pricing_error(&self, mu: &Vector, sigma: &Matrix) -> Vector {
        let l = self.loadings_vector();
        let second_moment = sigma + mu * mu.transpose();
        mu * self.intercept + second_moment * l
    }
}

/// Minimum-variance SDF `M = 1 − μᵀΣ⁺(x − μ)`.
pub fn sdf(moments: &CrossSectionMoments, tol: &Tolerance) -> Result<SdfCoefficients> {
    let mve = mve(moments, tol)?;
    Ok(SdfCoefficients::from_mve(moments.mu(), &mve.weights_vector()))
}

/// Minimum-variance SDF pricing the factors, with loadings on `f`.
pub fn factor_sdf(fm: &FactorModelMoments, tol: &Tolerance) -> Result<SdfCoefficients> {
    let na = no_arbitrage(&fm.mu_f, &fm.sigma_f, tol)?;
    if !na.holds {
        let norm = na.arbitrage_component.norm();
        return Err(Error::Arbitrage {
            component: na.arbitrage_component,
            norm,
        });
    }
    let mve = factor_mve(fm, tol)?;
    Ok(SdfCoefficients::from_mve(&fm.mu_f, &mve.weights_vector()))
}
