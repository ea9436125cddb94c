//! One cross-section of an unbalanced panel, and the moments implied by
//! tradable factors `f = Wᵀx` with residuals `ε = x − Φf`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generative::GenerativeSpec;
use crate::linalg::{self, ensure_finite, ensure_finite_vec, Matrix, Tolerance, Vector};

/// Mean and covariance of one date's excess returns.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionMoments {
    date_label: String,
    mu: Vector,
    sigma: Matrix,
}

impl CrossSectionMoments {
    /// Validates shapes and finiteness, symmetrizes `sigma` and clips
    /// eigenvalues within the rounding band to zero.
    pub fn new(date_label: impl Into<String>, mu: Vector, sigma: Matrix, tol: &Tolerance) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidParameters("cross-section has no assets".into()));
        }
        ensure_finite_vec(&mu, "mean vector")?;
        linalg::ensure_shape(&sigma, n, n, "covariance matrix")?;
        let sigma = linalg::clip_psd(&sigma, "covariance matrix", tol)?;
        Ok(CrossSectionMoments {
            date_label: date_label.into(),
            mu,
            sigma,
        })
    }

    pub fn date_label(&self) -> &str {
        &self.date_label
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.date_label = label.into();
        self
    }
}

/// The `n × m` characteristics matrix Φ observable at the start of the period.
/// No rank requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristics(Matrix);

impl Characteristics {
    pub fn new(phi: Matrix) -> Result<Self> {
        ensure_finite(&phi, "characteristics")?;
        Ok(Characteristics(phi))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }
}

/// The `n × m` portfolio weight matrix W; column `j` holds the weights of factor `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorWeights(Matrix);

impl FactorWeights {
    pub fn new(w: Matrix) -> Result<Self> {
        ensure_finite(&w, "factor weights")?;
        Ok(FactorWeights(w))
    }

    /// Build from `Wᵀ` (an `m × n` matrix), the form most constructions produce.
    pub fn from_transpose(w_t: &Matrix) -> Result<Self> {
        FactorWeights::new(w_t.transpose())
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn transpose(&self) -> Matrix {
        self.0.transpose()
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }
}

/// A single realized return vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSample(Vector);

impl ReturnSample {
    pub fn new(x: Vector) -> Result<Self> {
        ensure_finite_vec(&x, "return sample")?;
        Ok(ReturnSample(x))
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn into_vector(self) -> Vector {
        self.0
    }
}

/// Moments of factors and residuals implied by `(μ, Σ, Φ, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelMoments {
    /// `Wᵀμ`
    pub mu_f: Vector,
    /// `WᵀΣW`
    pub sigma_f: Matrix,
    /// `ΣW`, the covariance of returns with factors.
    pub cross_xf: Matrix,
    /// `(I − ΦWᵀ)μ`
    pub mu_eps: Vector,
    /// `(I − ΦWᵀ)Σ(I − ΦWᵀ)ᵀ`
    pub sigma_eps: Matrix,
    /// `cov(Φf, ε) = ΦWᵀΣ(I − WΦᵀ)`
    pub cross_spanned_eps: Matrix,
}

fn check_conformable(n: usize, phi: &Characteristics, w: &FactorWeights) -> Result<()> {
    linalg::ensure_shape(phi.matrix(), n, phi.m(), "characteristics rows")?;
    linalg::ensure_shape(w.matrix(), n, phi.m(), "factor weights")?;
    Ok(())
}

pub fn derive_factor_moments(
    moments: &CrossSectionMoments,
    phi: &Characteristics,
    w: &FactorWeights,
    tol: &Tolerance,
) -> Result<FactorModelMoments> {
    let n = moments.n();
    check_conformable(n, phi, w)?;
    // Revalidate PSD: callers may have assembled the moments by hand.
    linalg::clip_psd(moments.sigma(), "covariance matrix", tol)?;

    let (mu, sigma, phi, w) = (moments.mu(), moments.sigma(), phi.matrix(), w.matrix());
    let w_t = w.transpose();
    let resid_map = Matrix::identity(n, n) - phi * &w_t;

    let cross_xf = sigma * w;
    let sigma_f = &w_t * &cross_xf;
    let mu_f = &w_t * mu;
    let mu_eps = &resid_map * mu;
    let sigma_eps = &resid_map * sigma * resid_map.transpose();
    let cross_spanned_eps = phi * &w_t * sigma * resid_map.transpose();

    Ok(FactorModelMoments {
        mu_f,
        sigma_f,
        cross_xf,
        mu_eps,
        sigma_eps,
        cross_spanned_eps,
    })
}

/// `f = Wᵀx` and `ε = x − Φf`.
pub fn realize_factors(x: &ReturnSample, phi: &Characteristics, w: &FactorWeights) -> Result<(Vector, Vector)> {
    let x = x.as_vector();
    check_conformable(x.len(), phi, w)?;
    let f = w.matrix().tr_mul(x);
    let eps = x - phi.matrix() * &f;
    Ok((f, eps))
}

/// A problem found by [`validate_cross_section`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    NonFinite { field: String },
    Shape { field: String, expected: (usize, usize), found: (usize, usize) },
    Asymmetric { residual: f64 },
    NegativeEigenvalue { eigenvalue: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "cross-section has no assets"),
            Violation::NonFinite { field } => write!(f, "non-finite entries in {field}"),
            Violation::Shape { field, expected, found } => {
                write!(f, "{field} has shape {found:?}, expected {expected:?}")
            }
            Violation::Asymmetric { residual } => {
                write!(f, "covariance is not symmetric (relative residual {residual:.3e})")
            }
            Violation::NegativeEigenvalue { eigenvalue } => {
                write!(f, "covariance has eigenvalue {eigenvalue:.3e} below the tolerance band")
            }
        }
    }
}

/// Report-only validation of raw cross-section inputs.
pub fn validate_cross_section(
    mu: &Vector,
    sigma: &Matrix,
    phi: &Matrix,
    w: &Matrix,
    tol: &Tolerance,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = mu.len();
    if n == 0 {
        out.push(Violation::Empty);
    }
    let mut finite = true;
    for (field, ok) in [
        ("mu", mu.iter().all(|x| x.is_finite())),
        ("sigma", sigma.iter().all(|x| x.is_finite())),
        ("phi", phi.iter().all(|x| x.is_finite())),
        ("w", w.iter().all(|x| x.is_finite())),
    ] {
        if !ok {
            finite = false;
            out.push(Violation::NonFinite { field: field.into() });
        }
    }
    let m = phi.ncols();
    for (field, mat, expected) in [
        ("sigma", sigma, (n, n)),
        ("phi", phi, (n, m)),
        ("w", w, (n, m)),
    ] {
        if mat.shape() != expected {
            out.push(Violation::Shape {
                field: field.into(),
                expected,
                found: mat.shape(),
            });
        }
    }
    if finite && sigma.is_square() && sigma.nrows() > 0 {
        match linalg::clip_psd(sigma, "covariance matrix", tol) {
            Err(Error::NotSymmetric { residual, .. }) => out.push(Violation::Asymmetric { residual }),
            Err(Error::NotPositiveSemidefinite { eigenvalue, .. }) => {
                out.push(Violation::NegativeEigenvalue { eigenvalue })
            }
            _ => {}
        }
    }
    out
}

/// One date of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelEntry {
    pub moments: CrossSectionMoments,
    pub phi: Characteristics,
    pub w: FactorWeights,
    /// Present when the moments were implied by an abstract-factor model.
    pub generative: Option<GenerativeSpec>,
}

impl PanelEntry {
    pub fn new(moments: CrossSectionMoments, phi: Characteristics, w: FactorWeights) -> Result<Self> {
        check_conformable(moments.n(), &phi, &w)?;
        Ok(PanelEntry {
            moments,
            phi,
            w,
            generative: None,
        })
    }
}

/// Dates in order; the asset count may vary by date, the factor count may not.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelSequence {
    entries: Vec<PanelEntry>,
}

impl PanelSequence {
    pub fn new(entries: Vec<PanelEntry>) -> Result<Self> {
        if let Some(first) = entries.first() {
            let m = first.phi.m();
            for e in &entries {
                if e.phi.m() != m {
                    return Err(Error::Record {
                        record: e.moments.date_label().to_string(),
                        message: format!("factor count {} differs from {} in the first date", e.phi.m(), m),
                    });
                }
            }
        }
        Ok(PanelSequence { entries })
    }

    pub fn entries(&self) -> &[PanelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn factor_count(&self) -> Option<usize> {
        self.entries.first().map(|e| e.phi.m())
    }
}
