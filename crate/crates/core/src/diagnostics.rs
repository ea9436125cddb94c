//! Every structural and pricing condition of a tradable linear factor model
//! as a named predicate with a relative residual, and the implication graph
//! linking them.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, Check, Matrix, Tolerance, Vector};
use crate::model::{self, Characteristics, CrossSectionMoments, FactorModelMoments, FactorWeights, ReturnSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionId {
    /// `cov(Φf, ε) = 0`
    FSpannedEpsUncorr,
    /// `Σ = ΦΣ_fΦᵀ + Σ_ε`
    SigmaDecomp,
    /// `rank Φ = m`
    PhiFullRank,
    /// `cov(f, ε) = 0`
    FEpsUncorr,
    /// `ΣWΦᵀ = ΦWᵀΣWΦᵀ = ΦWᵀΣ`
    TradableTripleEq,
    /// `Im Wᵀ ∩ ker Φ = {0}`
    TrivialIntersect,
    /// `ΦWᵀΣ_ε = 0`
    EpsOrtho,
    /// `rank Σ_ε < n`
    SigepsRankDeficient,
    /// `(ΦWᵀ)² = ΦWᵀ`
    Proj,
    /// `ΦWᵀ = WΦᵀ`
    ProjSelfAdjoint,
    /// `(Φf)ᵀε = 0`, at moment level through its sufficient condition
    /// `Proj ∧ ProjSelfAdjoint`.
    CsOrtho,
    /// `WᵀΦWᵀ = Wᵀ`
    WIdempotentOnPhi,
    /// `E[ε] = 0`
    ResidUnpriced,
    /// `μ = ΦWᵀμ`
    MuReproduced,
    /// Φ solves `min_β E‖x − βf‖²`, i.e. `Φ E[ffᵀ] = E[xfᵀ]`.
    CharsAreCovs,
    /// `μ ∈ Im Σ`
    Na,
    /// `SR_f² = SR²`
    SrEquality,
    /// `μ ∈ Im(ΣW)`
    Spanning,
    /// `WΣ_f⁺μ_f = Σ⁺μ` as payoffs.
    MveSpanned,
    /// The factor-only minimum-variance SDF prices every asset.
    SdfSpanned,
    /// `μ = ΣWΦᵀb` for some `b` with `ΣWΦᵀb = ΦWᵀΣWΦᵀb`.
    LemcexVectorEq,
}

impl ConditionId {
    pub const ALL: [ConditionId; 21] = [
        ConditionId::FSpannedEpsUncorr,
        ConditionId::SigmaDecomp,
        ConditionId::PhiFullRank,
        ConditionId::FEpsUncorr,
        ConditionId::TradableTripleEq,
        ConditionId::TrivialIntersect,
        ConditionId::EpsOrtho,
        ConditionId::SigepsRankDeficient,
        ConditionId::Proj,
        ConditionId::ProjSelfAdjoint,
        ConditionId::CsOrtho,
        ConditionId::WIdempotentOnPhi,
        ConditionId::ResidUnpriced,
        ConditionId::MuReproduced,
        ConditionId::CharsAreCovs,
        ConditionId::Na,
        ConditionId::SrEquality,
        ConditionId::Spanning,
        ConditionId::MveSpanned,
        ConditionId::SdfSpanned,
        ConditionId::LemcexVectorEq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionId::FSpannedEpsUncorr => "FSPANNED_EPS_UNCORR",
            ConditionId::SigmaDecomp => "SIGMA_DECOMP",
            ConditionId::PhiFullRank => "PHI_FULL_RANK",
            ConditionId::FEpsUncorr => "F_EPS_UNCORR",
            ConditionId::TradableTripleEq => "TRADABLE_TRIPLE_EQ",
            ConditionId::TrivialIntersect => "TRIVIAL_INTERSECT",
            ConditionId::EpsOrtho => "EPS_ORTHO",
            ConditionId::SigepsRankDeficient => "SIGEPS_RANK_DEFICIENT",
            ConditionId::Proj => "PROJ",
            ConditionId::ProjSelfAdjoint => "PROJ_SELF_ADJOINT",
            ConditionId::CsOrtho => "CS_ORTHO",
            ConditionId::WIdempotentOnPhi => "W_IDEMPOTENT_ON_PHI",
            ConditionId::ResidUnpriced => "RESID_UNPRICED",
            ConditionId::MuReproduced => "MU_REPRODUCED",
            ConditionId::CharsAreCovs => "CHARS_ARE_COVS",
            ConditionId::Na => "NA",
            ConditionId::SrEquality => "SR_EQUALITY",
            ConditionId::Spanning => "SPANNING",
            ConditionId::MveSpanned => "MVE_SPANNED",
            ConditionId::SdfSpanned => "SDF_SPANNED",
            ConditionId::LemcexVectorEq => "LEMCEX_VECTOR_EQ",
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ConditionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConditionId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidParameters(format!("unknown condition {s}")))
    }
}

impl Serialize for ConditionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Certificate attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Vector { values: Vec<f64> },
    Rank { rank: usize, dimension: usize },
    Gram { rank: usize, unique: bool },
}

impl Witness {
    fn vector(v: &Vector) -> Self {
        Witness::Vector {
            values: v.iter().copied().collect(),
        }
    }

    pub fn as_vector(&self) -> Option<Vector> {
        match self {
            Witness::Vector { values } => Some(Vector::from_vec(values.clone())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub id: ConditionId,
    pub holds: bool,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConditionReport {
    fn from_check(id: ConditionId, c: Check) -> Self {
        ConditionReport {
            id,
            holds: c.holds,
            residual: c.residual,
            witness: None,
            note: None,
        }
    }

    fn with_witness(mut self, w: Witness) -> Self {
        self.witness = Some(w);
        self
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }
}

/// Shared intermediate products for one `(μ, Σ, Φ, W)`.
struct Context<'a> {
    tol: &'a Tolerance,
    mu: &'a Vector,
    sigma: &'a Matrix,
    phi: &'a Matrix,
    w: &'a Matrix,
    w_t: Matrix,
    /// `ΦWᵀ`
    p: Matrix,
    fm: FactorModelMoments,
}

fn rel(num: f64, scale: f64) -> f64 {
    num / scale.max(1.0)
}

fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(linalg::singular_values(a)?.first().copied().unwrap_or(0.0))
}

impl<'a> Context<'a> {
    fn new(
        moments: &'a CrossSectionMoments,
        phi: &'a Characteristics,
        w: &'a FactorWeights,
        tol: &'a Tolerance,
    ) -> Result<Self> {
        let fm = model::derive_factor_moments(moments, phi, w, tol)?;
        let w_t = w.transpose();
        let p = phi.matrix() * &w_t;
        Ok(Context {
            tol,
            mu: moments.mu(),
            sigma: moments.sigma(),
            phi: phi.matrix(),
            w: w.matrix(),
            w_t,
            p,
            fm,
        })
    }

    fn n(&self) -> usize {
        self.mu.len()
    }

    fn m(&self) -> usize {
        self.phi.ncols()
    }

    fn sr_squared(&self) -> Result<f64> {
        Ok(self.mu.dot(&(linalg::pinv(self.sigma, self.tol)? * self.mu)).max(0.0))
    }

    fn factor_mve_weights(&self) -> Result<Vector> {
        Ok(linalg::pinv(&self.fm.sigma_f, self.tol)? * &self.fm.mu_f)
    }

    fn proj(&self) -> Result<Check> {
        linalg::matrices_equal(&(&self.p * &self.p), &self.p, self.tol)
    }

    fn proj_self_adjoint(&self) -> Result<Check> {
        linalg::matrices_equal(&self.p, &self.p.transpose(), self.tol)
    }

    fn evaluate(&self, id: ConditionId) -> Result<ConditionReport> {
        use ConditionId::*;
        let tol = self.tol;
        let (mu, sigma, phi, w, w_t, p) = (self.mu, self.sigma, self.phi, self.w, &self.w_t, &self.p);
        let fm = &self.fm;
        Ok(match id {
            FSpannedEpsUncorr => {
                let p_sigma = p * sigma;
                let c = linalg::matrices_equal(&p_sigma, &(&p_sigma * p.transpose()), tol)?;
                ConditionReport::from_check(id, c)
            }
            SigmaDecomp => {
                let rebuilt = phi * &fm.sigma_f * phi.transpose() + &fm.sigma_eps;
                ConditionReport::from_check(id, linalg::matrices_equal(sigma, &rebuilt, tol)?)
            }
            PhiFullRank => {
                let r = linalg::rank_of(phi, tol)?;
                let m = self.m();
                ConditionReport {
                    id,
                    holds: r == m,
                    residual: (m - r.min(m)) as f64,
                    witness: Some(Witness::Rank { rank: r, dimension: m }),
                    note: None,
                }
            }
            FEpsUncorr => {
                let wts = w_t * sigma;
                let c = linalg::matrices_equal(&wts, &(&wts * w * phi.transpose()), tol)?;
                ConditionReport::from_check(id, c)
            }
            TradableTripleEq => {
                let p_sigma = p * sigma;
                let middle = &p_sigma * p.transpose();
                let left = sigma * p.transpose();
                let c = linalg::matrices_equal(&left, &middle, tol)?.and(linalg::matrices_equal(&middle, &p_sigma, tol)?);
                ConditionReport::from_check(id, c)
            }
            TrivialIntersect => {
                let deficit = linalg::intersection_deficit(w_t, phi, tol)?;
                ConditionReport {
                    id,
                    holds: deficit == 0,
                    residual: deficit as f64,
                    witness: None,
                    note: None,
                }
            }
            EpsOrtho => {
                let residual = rel((p * &fm.sigma_eps).norm(), p.norm() * fm.sigma_eps.norm());
                ConditionReport::from_check(id, Check::new(residual, tol))
            }
            SigepsRankDeficient => {
                let n = self.n();
                let scale = (1.0 + spectral_norm(&self.p)?).powi(2) * spectral_norm(sigma)?;
                let r = linalg::rank_relative_to(&fm.sigma_eps, scale, tol)?;
                ConditionReport {
                    id,
                    holds: r < n,
                    residual: if r < n { 0.0 } else { 1.0 },
                    witness: Some(Witness::Rank { rank: r, dimension: n }),
                    note: None,
                }
            }
            Proj => ConditionReport::from_check(id, self.proj()?),
            ProjSelfAdjoint => ConditionReport::from_check(id, self.proj_self_adjoint()?),
            CsOrtho => ConditionReport::from_check(id, self.proj()?.and(self.proj_self_adjoint()?))
                .with_note("moment-level sufficient condition PROJ and PROJ_SELF_ADJOINT"),
            WIdempotentOnPhi => {
                let c = linalg::matrices_equal(&(w_t * phi * w_t), w_t, tol)?;
                ConditionReport::from_check(id, c)
            }
            ResidUnpriced => {
                let residual = rel(fm.mu_eps.norm(), mu.norm());
                ConditionReport::from_check(id, Check::new(residual, tol))
            }
            MuReproduced => ConditionReport::from_check(id, linalg::vectors_equal(mu, &(p * mu), tol)?),
            CharsAreCovs => {
                let gram = &fm.sigma_f + &fm.mu_f * fm.mu_f.transpose();
                let second_moment = sigma * w + mu * fm.mu_f.transpose();
                let c = linalg::matrices_equal(&(phi * &gram), &second_moment, tol)?;
                let rank = linalg::rank_of(&gram, tol)?;
                ConditionReport::from_check(id, c).with_witness(Witness::Gram {
                    rank,
                    unique: rank == self.m(),
                })
            }
            Na => {
                let c = linalg::in_image(mu, sigma, tol)?;
                let r = ConditionReport::from_check(id, c);
                if c.holds {
                    r
                } else {
                    let component = mu - linalg::image_projector(sigma, tol)? * mu;
                    r.with_witness(Witness::vector(&component))
                        .with_note("witness is an arbitrage portfolio")
                }
            }
            SrEquality => {
                let sr2 = self.sr_squared()?;
                let sr2_f = fm.mu_f.dot(&self.factor_mve_weights()?).max(0.0);
                let residual = rel((sr2 - sr2_f).abs(), sr2);
                ConditionReport::from_check(id, Check::new(residual, tol))
            }
            Spanning => {
                let sw = &fm.cross_xf;
                let c = linalg::in_image(mu, sw, tol)?;
                let r = ConditionReport::from_check(id, c);
                if c.holds {
                    r.with_witness(Witness::vector(&(linalg::pinv(sw, tol)? * mu)))
                } else {
                    r
                }
            }
            MveSpanned => {
                let from_factors = w * self.factor_mve_weights()?;
                let full = linalg::pinv(sigma, tol)? * mu;
                let proj = linalg::image_projector(sigma, tol)?;
                let residual = rel(
                    (proj * (&from_factors - &full)).norm(),
                    from_factors.norm().max(full.norm()),
                );
                ConditionReport::from_check(id, Check::new(residual, tol))
            }
            SdfSpanned => {
                let b = self.factor_mve_weights()?;
                let intercept = 1.0 + fm.mu_f.dot(&b);
                let loadings = -(w * &b);
                let error = mu * intercept + (sigma + mu * mu.transpose()) * &loadings;
                let residual = rel(error.norm(), mu.norm().max((&fm.cross_xf * &b).norm()));
                ConditionReport::from_check(id, Check::new(residual, tol))
            }
            LemcexVectorEq => {
                let a = sigma * w * phi.transpose();
                let b = linalg::pinv(&a, tol)? * mu;
                let ab = &a * &b;
                let c = linalg::in_image(mu, &a, tol)?.and(linalg::vectors_equal(&ab, &(p * &ab), tol)?);
                let r = ConditionReport::from_check(id, c);
                if c.holds {
                    r.with_witness(Witness::vector(&b))
                } else {
                    r
                }
            }
        })
    }
}

pub fn check(
    id: ConditionId,
    moments: &CrossSectionMoments,
    phi: &Characteristics,
    w: &FactorWeights,
    tol: &Tolerance,
) -> Result<ConditionReport> {
    Context::new(moments, phi, w, tol)?.evaluate(id)
}

/// Every condition, in [`ConditionId::ALL`] order.
pub fn run_all(
    moments: &CrossSectionMoments,
    phi: &Characteristics,
    w: &FactorWeights,
    tol: &Tolerance,
) -> Result<Vec<ConditionReport>> {
    let ctx = Context::new(moments, phi, w, tol)?;
    ConditionId::ALL.iter().map(|&id| ctx.evaluate(id)).collect()
}

/// `ΦWᵀ ≠ 0`, the premise under which residual covariance must be singular.
pub fn is_nondegenerate(phi: &Characteristics, w: &FactorWeights, tol: &Tolerance) -> bool {
    (phi.matrix() * w.transpose()).norm() > tol.abs_residual_tol()
}

/// `(Φf)ᵀε = 0` on one realized return vector, with residual
/// `|(Φf)ᵀε| / max(1, ‖Φf‖‖ε‖)`.
pub fn check_cs_ortho_on_sample(
    x: &ReturnSample,
    phi: &Characteristics,
    w: &FactorWeights,
    tol: &Tolerance,
) -> Result<ConditionReport> {
    let (f, eps) = model::realize_factors(x, phi, w)?;
    let spanned = phi.matrix() * f;
    let residual = rel(spanned.dot(&eps).abs(), spanned.norm() * eps.norm());
    Ok(ConditionReport::from_check(ConditionId::CsOrtho, Check::new(residual, tol)).with_note("sample path"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    C(ConditionId),
    Nondegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Conclusion {
    Holds(ConditionId),
    Agree(ConditionId, ConditionId),
}

struct Edge {
    premises: &'static [Node],
    conclusion: Conclusion,
}

use ConditionId as C;
use Node::{Nondegenerate as ND, C as N};

const EDGES: &[Edge] = &[
    Edge { premises: &[N(C::TradableTripleEq)], conclusion: Conclusion::Holds(C::EpsOrtho) },
    Edge { premises: &[N(C::EpsOrtho), ND], conclusion: Conclusion::Holds(C::SigepsRankDeficient) },
    Edge { premises: &[N(C::WIdempotentOnPhi), N(C::ProjSelfAdjoint)], conclusion: Conclusion::Holds(C::CsOrtho) },
    Edge { premises: &[N(C::CsOrtho)], conclusion: Conclusion::Holds(C::EpsOrtho) },
    Edge { premises: &[N(C::FEpsUncorr)], conclusion: Conclusion::Holds(C::EpsOrtho) },
    Edge {
        premises: &[N(C::TradableTripleEq), N(C::WIdempotentOnPhi), N(C::Spanning)],
        conclusion: Conclusion::Holds(C::ResidUnpriced),
    },
    Edge { premises: &[N(C::FEpsUncorr), N(C::ResidUnpriced)], conclusion: Conclusion::Holds(C::CharsAreCovs) },
    Edge {
        premises: &[N(C::TradableTripleEq), N(C::ResidUnpriced), N(C::Na)],
        conclusion: Conclusion::Holds(C::Spanning),
    },
    Edge {
        premises: &[N(C::FEpsUncorr), N(C::ResidUnpriced), N(C::Na)],
        conclusion: Conclusion::Holds(C::Spanning),
    },
    Edge { premises: &[N(C::Na)], conclusion: Conclusion::Agree(C::Spanning, C::SrEquality) },
    Edge { premises: &[N(C::Na)], conclusion: Conclusion::Agree(C::Spanning, C::MveSpanned) },
    Edge { premises: &[N(C::Na)], conclusion: Conclusion::Agree(C::Spanning, C::SdfSpanned) },
    Edge { premises: &[N(C::TradableTripleEq), ND], conclusion: Conclusion::Holds(C::SigepsRankDeficient) },
    Edge { premises: &[], conclusion: Conclusion::Agree(C::FSpannedEpsUncorr, C::TradableTripleEq) },
    Edge { premises: &[N(C::FSpannedEpsUncorr)], conclusion: Conclusion::Holds(C::SigmaDecomp) },
    Edge { premises: &[N(C::FEpsUncorr)], conclusion: Conclusion::Holds(C::FSpannedEpsUncorr) },
    Edge {
        premises: &[N(C::TradableTripleEq), N(C::TrivialIntersect)],
        conclusion: Conclusion::Holds(C::FEpsUncorr),
    },
    Edge {
        premises: &[N(C::FSpannedEpsUncorr), N(C::PhiFullRank)],
        conclusion: Conclusion::Holds(C::FEpsUncorr),
    },
    Edge { premises: &[N(C::WIdempotentOnPhi)], conclusion: Conclusion::Holds(C::Proj) },
    Edge { premises: &[N(C::WIdempotentOnPhi)], conclusion: Conclusion::Holds(C::TrivialIntersect) },
    Edge {
        premises: &[N(C::TrivialIntersect), N(C::Proj)],
        conclusion: Conclusion::Holds(C::WIdempotentOnPhi),
    },
    Edge { premises: &[N(C::Proj)], conclusion: Conclusion::Holds(C::EpsOrtho) },
    Edge { premises: &[], conclusion: Conclusion::Agree(C::ResidUnpriced, C::MuReproduced) },
    Edge {
        premises: &[N(C::WIdempotentOnPhi), N(C::ResidUnpriced), N(C::Spanning)],
        conclusion: Conclusion::Holds(C::LemcexVectorEq),
    },
];

fn node_name(n: Node) -> &'static str {
    match n {
        Node::C(id) => id.name(),
        Node::Nondegenerate => "PHI_W_NONZERO",
    }
}

fn edge_label(e: &Edge) -> String {
    let body = match e.conclusion {
        Conclusion::Holds(c) => c.name().to_string(),
        Conclusion::Agree(a, b) => format!("({} <=> {})", a.name(), b.name()),
    };
    if e.premises.is_empty() {
        body
    } else {
        let prem: Vec<_> = e.premises.iter().map(|&n| node_name(n)).collect();
        format!("{} => {}", prem.join(" & "), body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStatus {
    /// The premise does not hold.
    Vacuous,
    Confirmed,
    /// Premise holds, conclusion fails: an implementation bug.
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeReport {
    pub edge: String,
    pub status: EdgeStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicationGraphReport {
    pub nondegenerate: bool,
    pub edges: Vec<EdgeReport>,
}

impl ImplicationGraphReport {
    pub fn has_violation(&self) -> bool {
        self.edges.iter().any(|e| e.status == EdgeStatus::Violated)
    }

    pub fn violations(&self) -> impl Iterator<Item = &EdgeReport> {
        self.edges.iter().filter(|e| e.status == EdgeStatus::Violated)
    }

    pub fn status_of(&self, edge: &str) -> Option<EdgeStatus> {
        self.edges.iter().find(|e| e.edge == edge).map(|e| e.status)
    }
}

/// Evaluate every edge on `reports` (as returned by [`run_all`]).
/// Conditions missing from `reports` count as failing.
pub fn verify_implication_graph(reports: &[ConditionReport], nondegenerate: bool) -> ImplicationGraphReport {
    let holds = |id: ConditionId| reports.iter().any(|r| r.id == id && r.holds);
    let node = |n: Node| match n {
        Node::C(id) => holds(id),
        Node::Nondegenerate => nondegenerate,
    };
    let edges = EDGES
        .iter()
        .map(|e| {
            let status = if !e.premises.iter().all(|&n| node(n)) {
                EdgeStatus::Vacuous
            } else {
                let ok = match e.conclusion {
                    Conclusion::Holds(c) => holds(c),
                    Conclusion::Agree(a, b) => holds(a) == holds(b),
                };
                if ok {
                    EdgeStatus::Confirmed
                } else {
                    EdgeStatus::Violated
                }
            };
            EdgeReport {
                edge: edge_label(e),
                status,
            }
        })
        .collect();
    ImplicationGraphReport { nondegenerate, edges }
}

/// Labels of every edge, in evaluation order.
pub fn edge_labels() -> Vec<String> {
    EDGES.iter().map(edge_label).collect()
}

pub fn report_for(reports: &[ConditionReport], id: ConditionId) -> Option<&ConditionReport> {
    reports.iter().find(|r| r.id == id)
}
