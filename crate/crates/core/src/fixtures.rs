//! The three-asset counterexample: OLS factors that are cross-sectionally
//! orthogonal to their residuals yet correlated with them, and its
//! continuation where the factors span the MVE portfolio although factor and
//! residual covariances do not separate.
//!
//! With uncorrelated `ξ_i` of variance `a_i` and mean `b_i`, the returns are
//! `x = (ξ₁, ξ₂, ρξ₁/a₁ + ρξ₂/a₂ + ξ₃)` and `Φ = [[1,0],[1,0],[0,1]]`.

use crate::builders;
use crate::diagnostics::ConditionId;
use crate::error::{Error, Result};
use crate::io::{MomentFile, MomentRecord, RecordSource, RecordWeights};
use crate::linalg::{Matrix, Tolerance, Vector};
use crate::model::{Characteristics, CrossSectionMoments, FactorWeights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example3Params {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub rho: f64,
}

impl Example3Params {
    pub const BASE: Example3Params = Example3Params {
        a1: 1.0,
        a2: 2.0,
        a3: 4.0,
        b1: 1.0,
        b2: 3.0,
        b3: 2.0,
        rho: 0.5,
    };

    pub fn new(a1: f64, a2: f64, a3: f64, b1: f64, b2: f64, b3: f64, rho: f64) -> Result<Self> {
        let p = Example3Params { a1, a2, a3, b1, b2, b3, rho };
        p.validate()?;
        Ok(p)
    }

    /// Parameters in the order `a1, a2, a3, b1, b2, b3, rho`.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [a1, a2, a3, b1, b2, b3, rho] => Self::new(a1, a2, a3, b1, b2, b3, rho),
            _ => Err(Error::InvalidParameters(format!("expected 7 parameters, found {}", v.len()))),
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.a1, self.a2, self.a3, self.b1, self.b2, self.b3, self.rho]
    }

    /// `b₃ = (1−ρ)b₁/a₁ + (1−ρ)b₁/a₂ + b₁a₃/ρ`
    pub fn continuation_b3(a1: f64, a2: f64, a3: f64, b1: f64, rho: f64) -> f64 {
        (1.0 - rho) * b1 / a1 + (1.0 - rho) * b1 / a2 + b1 * a3 / rho
    }

    /// Continuation parameters with `b₂ = b₁` and `b₃` from the spanning formula.
    pub fn continuation(a1: f64, a2: f64, a3: f64, b1: f64, rho: f64) -> Result<Self> {
        if rho == 0.0 {
            return Err(Error::InvalidParameters("continuation requires rho ≠ 0".into()));
        }
        let b3 = Self::continuation_b3(a1, a2, a3, b1, rho);
        Self::new(a1, a2, a3, b1, b1, b3, rho)
    }

    /// Continuation defaults `(1, 2, 4, 1, 1, 8.75, 0.5)`.
    pub fn continuation_default() -> Self {
        let b = Self::BASE;
        Self::continuation(b.a1, b.a2, b.a3, b.b1, b.rho).expect("defaults are valid")
    }

    fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameters("parameters must be finite".into()));
        }
        if !(self.a1 > 0.0 && self.a2 > 0.0 && self.a3 > 0.0) {
            return Err(Error::InvalidParameters("variances a1, a2, a3 must be positive".into()));
        }
        Ok(())
    }

    /// `b₂ = b₁`, `ρ ≠ 0` and `b₃` matching the spanning formula to 1e-12 relative.
    pub fn is_continuation(&self) -> bool {
        if self.b1 != self.b2 || self.rho == 0.0 {
            return false;
        }
        let b3 = Self::continuation_b3(self.a1, self.a2, self.a3, self.b1, self.rho);
        (b3 - self.b3).abs() <= 1e-12 * b3.abs().max(1.0)
    }

    pub fn mean(&self) -> Vector {
        let p = self;
        Vector::from_vec(vec![p.b1, p.b2, p.rho * p.b1 / p.a1 + p.rho * p.b2 / p.a2 + p.b3])
    }

    /// As printed: the lower-right entry is `ρ/a₁ + ρ/a₂ + a₃`.
    pub fn covariance(&self) -> Matrix {
        let p = self;
        let s33 = p.rho / p.a1 + p.rho / p.a2 + p.a3;
        Matrix::from_row_slice(3, 3, &[p.a1, 0.0, p.rho, 0.0, p.a2, p.rho, p.rho, p.rho, s33])
    }
}

impl Default for Example3Params {
    fn default() -> Self {
        Self::BASE
    }
}

pub fn example3_phi() -> Characteristics {
    Characteristics::new(Matrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0])).expect("finite")
}

/// Moments, characteristics and OLS weights `Wᵀ = Φ⁺`. Errors when the
/// covariance is not PSD, which happens for some ρ outside `[0, 1]`.
pub fn example3_instance(
    p: &Example3Params,
    tol: &Tolerance,
) -> Result<(CrossSectionMoments, Characteristics, FactorWeights)> {
    p.validate()?;
    let moments = CrossSectionMoments::new("example3", p.mean(), p.covariance(), tol)?;
    let phi = example3_phi();
    let w = builders::build_ols(&phi, tol)?;
    Ok((moments, phi, w))
}

/// Closed form of `cov(Φf, ε)`: with `d = (a₁ − a₂)/4`, rows `(d, −d, 0)`,
/// `(d, −d, 0)`, `(0, 0, 0)`.
pub fn example3_cross_spanned_eps(p: &Example3Params) -> Matrix {
    let d = (p.a1 - p.a2) / 4.0;
    Matrix::from_row_slice(3, 3, &[d, -d, 0.0, d, -d, 0.0, 0.0, 0.0, 0.0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedReports {
    pub statuses: Vec<(ConditionId, bool)>,
    /// `c = (0, b₁/ρ)` with `ΣWc = μ`, in continuation mode.
    pub spanning_witness: Option<Vector>,
}

impl ExpectedReports {
    pub fn status(&self, id: ConditionId) -> Option<bool> {
        self.statuses.iter().find(|(c, _)| *c == id).map(|&(_, h)| h)
    }
}

pub fn example3_expected_reports(p: &Example3Params) -> ExpectedReports {
    let distinct = p.a1 != p.a2;
    let mut statuses = vec![
        (ConditionId::EpsOrtho, true),
        (ConditionId::CsOrtho, true),
        (ConditionId::FSpannedEpsUncorr, !distinct),
    ];
    let mut spanning_witness = None;
    if p.is_continuation() {
        statuses.push((ConditionId::MuReproduced, true));
        statuses.push((ConditionId::ResidUnpriced, true));
        statuses.push((ConditionId::Spanning, true));
        statuses.push((ConditionId::TradableTripleEq, !distinct));
        spanning_witness = Some(Vector::from_vec(vec![0.0, p.b1 / p.rho]));
    }
    ExpectedReports {
        statuses,
        spanning_witness,
    }
}

/// The instance as a one-record moment file with explicit OLS weights.
pub fn example3_moment_file(p: &Example3Params, tol: &Tolerance) -> Result<MomentFile> {
    let (moments, phi, w) = example3_instance(p, tol)?;
    let label = if p.is_continuation() { "example3-continuation" } else { "example3" };
    Ok(MomentFile {
        records: vec![MomentRecord {
            label: label.to_string(),
            n: 3,
            m: 2,
            source: RecordSource::Moments {
                mu: moments.mu().clone(),
                sigma: moments.sigma().clone(),
            },
            phi: phi.matrix().clone(),
            weights: RecordWeights::Explicit(w.matrix().clone()),
        }],
    })
}
