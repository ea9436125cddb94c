//! Tradable factor weights.
//!
//! All recipes are instances of the general form `Wᵀ = R (SΦR)⁺ S`:
//!
//! | recipe | `R` | `S` |
//! |---|---|---|
//! | OLS | `I` | `I` |
//! | GLS | `I` | symmetric root of `Σ_ε⁺` |
//! | GLS-type | `I` | invertible extension of the root of `Σ_η⁺` |
//!
//! Weights of this form always satisfy `WᵀΦWᵀ = Wᵀ`, so `ΦWᵀ` is a
//! projection, without any rank assumption on Φ.

use crate::error::{Error, Result};
use crate::generative::GenerativeSpec;
use crate::linalg::{self, Check, Matrix, Tolerance};
use crate::model::{Characteristics, FactorWeights};

/// How to construct the weights for a date.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRecipe {
    Ols,
    /// GLS with the residual covariance supplied explicitly.
    Gls { sigma_eps: Matrix },
    GeneralForm { r: Matrix, s: Matrix },
    /// GLS-type weights driven by the idiosyncratic covariance `Σ_η`.
    GlsType { sigma_eta: Matrix },
}

impl WeightRecipe {
    pub fn tag(&self) -> &'static str {
        match self {
            WeightRecipe::Ols => "ols",
            WeightRecipe::Gls { .. } => "gls",
            WeightRecipe::GeneralForm { .. } => "general",
            WeightRecipe::GlsType { .. } => "gls_type",
        }
    }

    pub fn build(&self, phi: &Characteristics, tol: &Tolerance) -> Result<FactorWeights> {
        match self {
            WeightRecipe::Ols => build_ols(phi, tol),
            WeightRecipe::Gls { sigma_eps } => build_gls(phi, sigma_eps, tol),
            WeightRecipe::GeneralForm { r, s } => Ok(build_general_form(phi, r, s, tol)?.0),
            WeightRecipe::GlsType { sigma_eta } => Ok(gls_type_weights(phi, sigma_eta, tol)?.0),
        }
    }
}

/// `Wᵀ = Φ⁺`.
pub fn build_ols(phi: &Characteristics, tol: &Tolerance) -> Result<FactorWeights> {
    FactorWeights::from_transpose(&linalg::pinv(phi.matrix(), tol)?)
}

/// `Wᵀ = (SΦ)⁺S` with `S` the symmetric PSD root of `Σ_ε⁺`.
pub fn build_gls(phi: &Characteristics, sigma_eps: &Matrix, tol: &Tolerance) -> Result<FactorWeights> {
    linalg::ensure_shape(sigma_eps, phi.n(), phi.n(), "residual covariance")?;
    let s = linalg::psd_root_of_pinv(sigma_eps, tol)?;
    let sp = &s * phi.matrix();
    FactorWeights::from_transpose(&(linalg::pinv(&sp, tol)? * s))
}

/// Post-hoc checks on general-form weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralFormReport {
    /// `WᵀΦWᵀ = Wᵀ`
    pub idempotent: Check,
    /// `Im(ΦR) ∩ ker S = {0}`
    pub intersection_trivial: bool,
    /// `Im(ΦWᵀ) = Im(ΦR)`, tested as `ΦWᵀ(ΦR) = ΦR` plus equal ranks.
    /// Only evaluated when the intersection is trivial.
    pub image_matches: Option<Check>,
}

/// `Wᵀ = R (SΦR)⁺ S`.
pub fn build_general_form(
    phi: &Characteristics,
    r: &Matrix,
    s: &Matrix,
    tol: &Tolerance,
) -> Result<(FactorWeights, GeneralFormReport)> {
    let (n, m) = (phi.n(), phi.m());
    linalg::ensure_shape(r, m, m, "general-form R")?;
    linalg::ensure_shape(s, n, n, "general-form S")?;
    linalg::ensure_finite(r, "general-form R")?;
    linalg::ensure_finite(s, "general-form S")?;
    let phi_r = phi.matrix() * r;
    let w_t = r * linalg::pinv(&(s * &phi_r), tol)? * s;

    let idempotent = linalg::matrices_equal(&(&w_t * phi.matrix() * &w_t), &w_t, tol)?;
    let intersection_trivial = linalg::trivial_intersection(&phi_r, s, tol)?;
    let image_matches = if intersection_trivial {
        let proj = phi.matrix() * &w_t;
        let mut c = linalg::matrices_equal(&(&proj * &phi_r), &phi_r, tol)?;
        if linalg::rank_of(&proj, tol)? != linalg::rank_of(&phi_r, tol)? {
            c.holds = false;
        }
        Some(c)
    } else {
        None
    };
    let report = GeneralFormReport {
        idempotent,
        intersection_trivial,
        image_matches,
    };
    Ok((FactorWeights::from_transpose(&w_t)?, report))
}

/// Invertible `S` extending square `U`: `S = U + ZΞᵀ` where `Ξ` and `Z` are
/// orthonormal bases of `ker U` and `ker Uᵀ`. `S` agrees with `U` on `Im Uᵀ`,
/// `Sᵀ` agrees with `Uᵀ` on `Im U`, and `S` maps `ker U` onto `ker Uᵀ`.
pub fn extend_to_invertible(u: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    if !u.is_square() {
        return Err(Error::NotSquare("matrix to extend"));
    }
    let (xi, zeta) = linalg::kernel_pair(u, tol)?;
    Ok(u + zeta.basis() * xi.basis().transpose())
}

/// Diagnostics for GLS-type weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsTypeDiagnostics {
    /// Symmetric root with `UᵀU = Σ_η⁺`.
    pub u: Matrix,
    /// Invertible extension of `U`.
    pub s: Matrix,
    /// `Π = Φ(SΦ)⁺S` satisfies `Π² = Π`.
    pub projector_idempotent: Check,
    /// `ΠΦ = Φ` together with `rank Π = rank Φ`, i.e. `Im Π = Im Φ`.
    pub projector_onto_phi: Check,
}

impl GlsTypeDiagnostics {
    pub fn passes(&self) -> bool {
        self.projector_idempotent.holds && self.projector_onto_phi.holds
    }
}

pub(crate) fn gls_type_weights(
    phi: &Characteristics,
    sigma_eta: &Matrix,
    tol: &Tolerance,
) -> Result<(FactorWeights, GlsTypeDiagnostics)> {
    linalg::ensure_shape(sigma_eta, phi.n(), phi.n(), "idiosyncratic covariance")?;
    let u = linalg::psd_root_of_pinv(sigma_eta, tol)?;
    let s = extend_to_invertible(&u, tol)?;
    let w_t = linalg::pinv(&(&s * phi.matrix()), tol)? * &s;

    let proj = phi.matrix() * &w_t;
    let projector_idempotent = linalg::matrices_equal(&(&proj * &proj), &proj, tol)?;
    let mut projector_onto_phi = linalg::matrices_equal(&(&proj * phi.matrix()), phi.matrix(), tol)?;
    if linalg::rank_of(&proj, tol)? != linalg::rank_of(phi.matrix(), tol)? {
        projector_onto_phi.holds = false;
    }
    let diag = GlsTypeDiagnostics {
        u,
        s,
        projector_idempotent,
        projector_onto_phi,
    };
    Ok((FactorWeights::from_transpose(&w_t)?, diag))
}

/// GLS-type weights `Wᵀ = (SΦ)⁺S` for an abstract-factor model.
pub fn build_gls_type_generative(
    spec: &GenerativeSpec,
    tol: &Tolerance,
) -> Result<(FactorWeights, GlsTypeDiagnostics)> {
    gls_type_weights(spec.phi(), spec.sigma_eta(), tol)
}
