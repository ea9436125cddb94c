//! Abstract-factor data-generating process `x = Φg + η`, its GLS-type
//! tradable representation, and simulation.
//!
//! Given `g ~ (μ_g, Σ_g)` with `Σ_g` invertible and `η ~ (0, Σ_η)`
//! uncorrelated with `g`, the returns have `μ = Φμ_g` and
//! `Σ = ΦΣ_gΦᵀ + Σ_η`. With `U` the symmetric root of `Σ_η⁺` and `S` its
//! invertible extension, the factors `f = (SΦ)⁺Sx` span the MVE portfolio
//! and leave residuals that are unpriced and uncorrelated with `f`. The
//! closed forms computed by [`prop7_predictions`] are
//!
//! ```text
//! μ_f = (SΦ)⁺SΦ μ_g
//! Σ_f = (SΦ)⁺SΦ Σ_g ΦᵀSᵀ(ΦᵀSᵀ)⁺ + Q
//! Σ_ε = Σ_η − ΦQΦᵀ
//! Q   = (SΦ)⁺ UU⁺ (ΦᵀSᵀ)⁺
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::builders;
use crate::diagnostics::{self, ConditionId};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Tolerance, Vector};
use crate::model::{self, Characteristics, CrossSectionMoments, ReturnSample};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeSpec {
    phi: Characteristics,
    mu_g: Vector,
    sigma_g: Matrix,
    sigma_eta: Matrix,
}

impl GenerativeSpec {
    /// `sigma_g` must be positive definite (smallest eigenvalue above
    /// `abs_residual_tol · max(1, λ_max)`), `sigma_eta` PSD.
    pub fn new(
        phi: Characteristics,
        mu_g: Vector,
        sigma_g: Matrix,
        sigma_eta: Matrix,
        tol: &Tolerance,
    ) -> Result<Self> {
        let (n, m) = (phi.n(), phi.m());
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameters("generative model needs n ≥ 1 and m ≥ 1".into()));
        }
        if mu_g.len() != m {
            return Err(Error::DimensionMismatch {
                context: "factor risk premia",
                expected: (m, 1),
                found: (mu_g.len(), 1),
            });
        }
        linalg::ensure_finite_vec(&mu_g, "factor risk premia")?;
        linalg::ensure_shape(&sigma_g, m, m, "factor covariance")?;
        linalg::ensure_shape(&sigma_eta, n, n, "idiosyncratic covariance")?;
        let sigma_g = linalg::symmetrize(&sigma_g, "factor covariance", tol)?;
        let eig = sigma_g.clone().symmetric_eigen();
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min();
        if lambda_min <= tol.abs_residual_tol() * lambda_max.max(1.0) {
            return Err(Error::NotPositiveDefinite {
                what: "factor covariance",
                eigenvalue: lambda_min,
            });
        }
        let sigma_eta = linalg::clip_psd(&sigma_eta, "idiosyncratic covariance", tol)?;
        Ok(GenerativeSpec {
            phi,
            mu_g,
            sigma_g,
            sigma_eta,
        })
    }

    pub fn phi(&self) -> &Characteristics {
        &self.phi
    }

    pub fn mu_g(&self) -> &Vector {
        &self.mu_g
    }

    pub fn sigma_g(&self) -> &Matrix {
        &self.sigma_g
    }

    pub fn sigma_eta(&self) -> &Matrix {
        &self.sigma_eta
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    pub fn m(&self) -> usize {
        self.phi.m()
    }
}

/// `μ = Φμ_g`, `Σ = ΦΣ_gΦᵀ + Σ_η`.
pub fn implied_moments(spec: &GenerativeSpec, date_label: &str, tol: &Tolerance) -> Result<CrossSectionMoments> {
    let phi = spec.phi.matrix();
    let mu = phi * &spec.mu_g;
    let sigma = phi * &spec.sigma_g * phi.transpose() + &spec.sigma_eta;
    CrossSectionMoments::new(date_label, mu, sigma, tol)
}

/// A named comparison with its largest absolute entrywise deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub residual: f64,
    pub holds: bool,
}

impl NamedCheck {
    fn new(name: impl Into<String>, residual: f64, holds: bool) -> Self {
        NamedCheck {
            name: name.into(),
            residual,
            holds,
        }
    }

    fn entrywise(name: impl Into<String>, a: &Matrix, b: &Matrix, tol: &Tolerance) -> Self {
        let residual = max_abs_diff(a, b);
        NamedCheck::new(name, residual, tol.accepts(residual))
    }
}

pub(crate) fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn col(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Closed-form factor and residual moments of the GLS-type factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop7Predictions {
    pub mu_f: Vector,
    pub sigma_f: Matrix,
    pub sigma_eps: Matrix,
    pub q: Matrix,
    pub u: Matrix,
    pub s: Matrix,
    /// Special-case formulas (invertible, isotropic, full-rank) compared
    /// with the general ones; only the cases that apply are present.
    pub simplifications: Vec<NamedCheck>,
}

/// Σ_η = σ²I with σ² > 0, if that is the case.
fn isotropic_variance(sigma_eta: &Matrix, tol: &Tolerance) -> Option<f64> {
    let n = sigma_eta.nrows();
    let s2 = sigma_eta.trace() / n as f64;
    if s2 <= tol.abs_residual_tol() {
        return None;
    }
    let iso = Matrix::identity(n, n) * s2;
    linalg::matrices_equal(sigma_eta, &iso, tol).ok().filter(|c| c.holds).map(|_| s2)
}

pub fn prop7_predictions(spec: &GenerativeSpec, tol: &Tolerance) -> Result<Prop7Predictions> {
    let (n, m) = (spec.n(), spec.m());
    let phi = spec.phi.matrix();
    let u = linalg::psd_root_of_pinv(&spec.sigma_eta, tol)?;
    let s = builders::extend_to_invertible(&u, tol)?;
    let s_phi = &s * phi;
    let a = linalg::pinv(&s_phi, tol)?;
    let a_t = linalg::pinv(&s_phi.transpose(), tol)?;
    let uu = &u * linalg::pinv(&u, tol)?;
    let q = &a * &uu * &a_t;
    let proj_g = &a * &s_phi;

    let mu_f = &proj_g * &spec.mu_g;
    let sigma_f = &proj_g * &spec.sigma_g * s_phi.transpose() * &a_t + &q;
    let sigma_eps = &spec.sigma_eta - phi * &q * phi.transpose();

    let mut simplifications = Vec::new();
    if linalg::rank_of(&spec.sigma_eta, tol)? == n {
        simplifications.push(NamedCheck::entrywise("invertible: Q = (SΦ)⁺(ΦᵀSᵀ)⁺", &q, &(&a * &a_t), tol));
    }
    if let Some(s2) = isotropic_variance(&spec.sigma_eta, tol) {
        let phi_p = linalg::pinv(phi, tol)?;
        let phi_t_p = linalg::pinv(&phi.transpose(), tol)?;
        let pp = &phi_p * phi;
        let q_iso = &phi_p * &phi_t_p * s2;
        simplifications.push(NamedCheck::entrywise("isotropic: μ_f = Φ⁺Φμ_g", &col(&mu_f), &col(&(&pp * &spec.mu_g)), tol));
        simplifications.push(NamedCheck::entrywise(
            "isotropic: Σ_f = Φ⁺ΦΣ_gΦ⁺Φ + Q",
            &sigma_f,
            &(&pp * &spec.sigma_g * &pp + &q_iso),
            tol,
        ));
        simplifications.push(NamedCheck::entrywise(
            "isotropic: Σ_ε = σ²(I − ΦΦ⁺)",
            &sigma_eps,
            &((Matrix::identity(n, n) - phi * &phi_p) * s2),
            tol,
        ));
        simplifications.push(NamedCheck::entrywise("isotropic: Q = σ²Φ⁺(Φᵀ)⁺", &q, &q_iso, tol));

        if linalg::rank_of(phi, tol)? == m {
            let gram_inv = (phi.transpose() * phi)
                .try_inverse()
                .ok_or_else(|| Error::InvalidParameters("ΦᵀΦ is numerically singular".into()))?;
            let q_full = &gram_inv * s2;
            simplifications.push(NamedCheck::entrywise("full rank: μ_f = μ_g", &col(&mu_f), &col(&spec.mu_g), tol));
            simplifications.push(NamedCheck::entrywise("full rank: Σ_f = Σ_g + Q", &sigma_f, &(&spec.sigma_g + &q_full), tol));
            simplifications.push(NamedCheck::entrywise("full rank: Q = σ²(ΦᵀΦ)⁻¹", &q, &q_full, tol));
            simplifications.push(NamedCheck::entrywise(
                "full rank: Σ_ε = σ²(I − Φ(ΦᵀΦ)⁻¹Φᵀ)",
                &sigma_eps,
                &((Matrix::identity(n, n) - phi * &gram_inv * phi.transpose()) * s2),
                tol,
            ));
        }
    }

    Ok(Prop7Predictions {
        mu_f,
        sigma_f,
        sigma_eps,
        q,
        u,
        s,
        simplifications,
    })
}

/// Every property promised for the GLS-type factors, with residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlsTypeReport {
    pub checks: Vec<NamedCheck>,
}

impl GlsTypeReport {
    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &NamedCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&NamedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn condition_check(reports: &[diagnostics::ConditionReport], id: ConditionId) -> NamedCheck {
    let r = reports.iter().find(|r| r.id == id).expect("run_all covers every condition");
    NamedCheck::new(id.name(), r.residual, r.holds)
}

pub fn verify_prop7(spec: &GenerativeSpec, tol: &Tolerance) -> Result<GlsTypeReport> {
    let n = spec.n();
    let moments = implied_moments(spec, "generative", tol)?;
    let (w, gls) = builders::build_gls_type_generative(spec, tol)?;
    let fm = model::derive_factor_moments(&moments, &spec.phi, &w, tol)?;
    let pred = prop7_predictions(spec, tol)?;
    let reports = diagnostics::run_all(&moments, &spec.phi, &w, tol)?;

    let mut checks = vec![
        condition_check(&reports, ConditionId::Na),
        condition_check(&reports, ConditionId::Spanning),
        condition_check(&reports, ConditionId::ResidUnpriced),
        condition_check(&reports, ConditionId::FEpsUncorr),
        NamedCheck::new("projection: Π² = Π", gls.projector_idempotent.residual, gls.projector_idempotent.holds),
        NamedCheck::new("projection onto Im Φ", gls.projector_onto_phi.residual, gls.projector_onto_phi.holds),
    ];

    let pi = spec.phi.matrix() * w.transpose();
    let resid_map = Matrix::identity(n, n) - &pi;
    let eps_from_eta = &resid_map * &spec.sigma_eta * resid_map.transpose();
    let c = linalg::matrices_equal(&fm.sigma_eps, &eps_from_eta, tol)?;
    checks.push(NamedCheck::new("residuals project η: Σ_ε = (I − Π)Σ_η(I − Π)ᵀ", c.residual, c.holds));

    let ses = &gls.s * &spec.sigma_eta * gls.s.transpose();
    let uu = &gls.u * linalg::pinv(&gls.u, tol)?;
    let c = linalg::matrices_equal(&ses, &uu, tol)?;
    checks.push(NamedCheck::new("SΣ_ηSᵀ = UU⁺", c.residual, c.holds));

    checks.push(NamedCheck::entrywise("closed form μ_f", &col(&pred.mu_f), &col(&fm.mu_f), tol));
    checks.push(NamedCheck::entrywise("closed form Σ_f", &pred.sigma_f, &fm.sigma_f, tol));
    checks.push(NamedCheck::entrywise("closed form Σ_ε", &pred.sigma_eps, &fm.sigma_eps, tol));
    checks.extend(pred.simplifications.iter().cloned());
    Ok(GlsTypeReport { checks })
}

/// Distribution tag for simulation. Only the first two moments matter for
/// the theory, so Gaussian is the only choice offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Gaussian,
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Distribution::Gaussian),
            other => Err(Error::InvalidDistribution(other.to_string())),
        }
    }
}

/// Draws from `N(mean, cov)` for PSD, possibly singular, `cov`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vector,
    root: Matrix,
}

impl GaussianSampler {
    pub fn new(mean: Vector, cov: &Matrix, tol: &Tolerance) -> Result<Self> {
        linalg::ensure_shape(cov, mean.len(), mean.len(), "sampler covariance")?;
        Ok(GaussianSampler {
            root: linalg::psd_sqrt(cov, tol)?,
            mean,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.mean.len(), |_, _| rng.sample(StandardNormal));
        &self.mean + &self.root * z
    }
}

/// Deterministic RNG for date `index` under `seed`: one ChaCha stream per date.
pub fn date_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One return draw per date, `x = Φg + η` with `g` and `η` independent.
pub fn simulate_panel(
    spec: &GenerativeSpec,
    dates: usize,
    seed: u64,
    distribution: Distribution,
    tol: &Tolerance,
) -> Result<Vec<ReturnSample>> {
    let Distribution::Gaussian = distribution;
    let g = GaussianSampler::new(spec.mu_g.clone(), &spec.sigma_g, tol)?;
    let eta = GaussianSampler::new(Vector::zeros(spec.n()), &spec.sigma_eta, tol)?;
    let phi = spec.phi.matrix();
    (0..dates)
        .into_par_iter()
        .map(|d| {
            let mut rng = date_rng(seed, d as u64);
            let gd = g.draw(&mut rng);
            let ed = eta.draw(&mut rng);
            ReturnSample::new(phi * gd + ed)
        })
        .collect()
}

/// Shape of a random abstract-factor model.
///
/// Φ has standard normal entries, with the last column copied from the first
/// when `duplicate_column` is set. `Σ_g = AAᵀ/m + ½I` with `A` standard normal
/// `m × m`. `μ_g` has N(0, ¼) entries. `Σ_η = BBᵀ/max(1, r)` with `B` standard
/// normal `n × r`, `r = eta_rank`, or `σ²I` when `isotropic` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpecConfig {
    pub n: usize,
    pub m: usize,
    pub eta_rank: usize,
    pub duplicate_column: bool,
    pub isotropic: Option<f64>,
}

fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_spec<R: Rng + ?Sized>(cfg: &RandomSpecConfig, rng: &mut R, tol: &Tolerance) -> Result<GenerativeSpec> {
    let (n, m) = (cfg.n, cfg.m);
    let mut phi = normal_matrix(rng, n, m);
    if cfg.duplicate_column && m >= 2 {
        let first = phi.column(0).into_owned();
        phi.set_column(m - 1, &first);
    }
    let a = normal_matrix(rng, m, m);
    let sigma_g = &a * a.transpose() / m as f64 + Matrix::identity(m, m) * 0.5;
    let mu_g = Vector::from_fn(m, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let sigma_eta = match cfg.isotropic {
        Some(sigma) => Matrix::identity(n, n) * (sigma * sigma),
        None => {
            let r = cfg.eta_rank.min(n);
            let b = normal_matrix(rng, n, r);
            &b * b.transpose() / r.max(1) as f64
        }
    };
    GenerativeSpec::new(Characteristics::new(phi)?, mu_g, sigma_g, sigma_eta, tol)
}

/// Configuration of trial `k` in a seeded campaign. Trials cycle through
/// every idiosyncratic rank `0..=n`; every third trial duplicates a column of
/// Φ and every fifth is isotropic.
pub fn campaign_config(k: usize) -> RandomSpecConfig {
    // (n, eta_rank) pairs for n in 1..=7 and every rank 0..=n: 35 in total.
    let mut idx = k % 35;
    let mut n = 1;
    while idx > n {
        idx -= n + 1;
        n += 1;
    }
    let round = k / 35;
    RandomSpecConfig {
        n,
        m: 1 + (k + round) % 4,
        eta_rank: idx,
        duplicate_column: (k + round).is_multiple_of(3),
        isotropic: ((k + round) % 5 == 4).then_some(0.3 + 0.1 * (k % 4) as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub trials: usize,
    pub passed: usize,
    pub seed: u64,
    /// Failing trial indices with the names of the failing checks.
    pub failures: Vec<(usize, Vec<String>)>,
}

/// Run [`verify_prop7`] on `trials` random specs.
pub fn gls_type_campaign(trials: usize, seed: u64, tol: &Tolerance) -> Result<CampaignSummary> {
    let results: Vec<Result<(usize, GlsTypeReport)>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = date_rng(seed, k as u64);
            let spec = random_spec(&campaign_config(k), &mut rng, tol)?;
            Ok((k, verify_prop7(&spec, tol)?))
        })
        .collect();
    let mut failures = Vec::new();
    for r in results {
        let (k, report) = r?;
        if !report.passes() {
            failures.push((k, report.failures().map(|c| c.name.clone()).collect()));
        }
    }
    Ok(CampaignSummary {
        trials,
        passed: trials - failures.len(),
        seed,
        failures,
    })
}
