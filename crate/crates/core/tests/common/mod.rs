#![allow(dead_code)]

use linfactor::builders::{self, WeightRecipe};
use linfactor::diagnostics::{self, ImplicationGraphReport};
use linfactor::fixtures::{self, Example3Params};
use linfactor::generative::{date_rng, GenerativeSpec};
use linfactor::{Characteristics, ConditionReport, CrossSectionMoments, FactorWeights, Matrix, Tolerance, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn tol() -> Tolerance {
    Tolerance::default()
}

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal `rows × k` from the QR factor of a Gaussian matrix.
pub fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Matrix {
    if k == 0 {
        return Matrix::zeros(rows, 0);
    }
    normal(rng, rows, k).qr().q().columns(0, k).into_owned()
}

fn spectrum(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_diagonal(&Vector::from_fn(k, |_, _| rng.random_range(lo..hi)))
}

/// `rows × cols` with rank `min(rank, rows, cols)` and nonzero singular
/// values in `[0.3, 3]`.
pub fn of_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    let r = rank.min(rows).min(cols);
    let u = orthonormal(rng, rows, r);
    let v = orthonormal(rng, cols, r);
    u * spectrum(rng, r, 0.3, 3.0) * v.transpose()
}

/// PSD `n × n` of the given rank with nonzero eigenvalues in `[0.1, 3]`.
pub fn psd_of_rank(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let r = rank.min(n);
    let u = orthonormal(rng, n, r);
    &u * spectrum(rng, r, 0.1, 3.0) * u.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    /// `μ = ΣWc`: spanning holds.
    Spanned,
    /// `μ = Σa` for generic `a`.
    InImage,
    /// Generic `μ`; arbitrage whenever Σ is singular.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMode {
    Generic,
    /// `Σ = PCPᵀ + (I−P)D(I−P)ᵀ` with `P = ΦWᵀ`, so spanned factor and
    /// residual are uncorrelated whenever `P` is idempotent.
    Separated,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub label: String,
    pub moments: CrossSectionMoments,
    pub phi: Characteristics,
    pub w: FactorWeights,
}

impl Instance {
    pub fn reports(&self) -> Vec<ConditionReport> {
        diagnostics::run_all(&self.moments, &self.phi, &self.w, &tol()).expect("diagnostics run")
    }

    pub fn graph(&self, reports: &[ConditionReport]) -> ImplicationGraphReport {
        let nd = diagnostics::is_nondegenerate(&self.phi, &self.w, &tol());
        diagnostics::verify_implication_graph(reports, nd)
    }
}

fn weights_for(k: usize, rng: &mut ChaCha8Rng, phi: &Characteristics) -> (String, FactorWeights) {
    let (n, m) = (phi.n(), phi.m());
    let t = tol();
    match k % 7 {
        0 | 1 => ("ols".into(), builders::build_ols(phi, &t).unwrap()),
        2 => {
            let sigma_eps = psd_of_rank(rng, n, 1 + k % n.max(1));
            ("gls".into(), WeightRecipe::Gls { sigma_eps }.build(phi, &t).unwrap())
        }
        3 => {
            let r = of_rank(rng, m, m, 1 + k % m);
            let s = of_rank(rng, n, n, n - k % 2 * (n / 2));
            ("general".into(), WeightRecipe::GeneralForm { r, s }.build(phi, &t).unwrap())
        }
        4 => {
            let sigma_eta = psd_of_rank(rng, n, k % (n + 1));
            ("gls_type".into(), WeightRecipe::GlsType { sigma_eta }.build(phi, &t).unwrap())
        }
        5 => ("arbitrary".into(), FactorWeights::new(of_rank(rng, n, m, 1 + k % m)).unwrap()),
        _ => {
            if k.is_multiple_of(2) {
                ("zero".into(), FactorWeights::new(Matrix::zeros(n, m)).unwrap())
            } else {
                ("arbitrary-full".into(), FactorWeights::new(of_rank(rng, n, m, m)).unwrap())
            }
        }
    }
}

/// The `k`-th instance of a seeded campaign. Shapes cycle through
/// `n ∈ 1..=7`, `m ∈ 1..=5` and every rank of Σ; a quarter of the
/// characteristics matrices are rank deficient. Means in the image of Σ are
/// rescaled so that `SR²` lies in `[0.1, 4)`.
pub fn random_instance(seed: u64, k: usize, mean: MeanMode, cov: CovMode) -> Instance {
    let mut rng = date_rng(seed, k as u64);
    let n = 1 + k % 7;
    let m = 1 + (k / 7) % 5;
    let phi_rank = if k.is_multiple_of(4) { m.min(n).saturating_sub(1).max(1) } else { m };
    let phi = Characteristics::new(of_rank(&mut rng, n, m, phi_rank)).unwrap();
    let (recipe, w) = weights_for(k / 3, &mut rng, &phi);
    let sigma_rank = (k / 35) % (n + 1);
    let sigma = match cov {
        CovMode::Generic => psd_of_rank(&mut rng, n, if k.is_multiple_of(3) { n } else { sigma_rank }),
        CovMode::Separated => {
            let p = phi.matrix() * w.transpose();
            let q = Matrix::identity(n, n) - &p;
            let c = psd_of_rank(&mut rng, n, n);
            let d = psd_of_rank(&mut rng, n, sigma_rank);
            &p * c * p.transpose() + &q * d * q.transpose()
        }
    };
    let mu = match mean {
        MeanMode::Spanned => &sigma * w.matrix() * normal_vec(&mut rng, m),
        MeanMode::InImage => &sigma * normal_vec(&mut rng, n),
        MeanMode::Free => normal_vec(&mut rng, n),
    };
    let mu = match mean {
        MeanMode::Free => mu,
        _ => {
            let sr2 = mu.dot(&(linfactor::linalg::pinv(&sigma, &tol()).unwrap() * &mu));
            let target: f64 = rng.random_range(0.1..4.0);
            if sr2 > 1e-12 { mu * (target / sr2).sqrt() } else { mu }
        }
    };
    let label = format!("k{k}-n{n}-m{m}-{recipe}-{mean:?}-{cov:?}");
    let moments = CrossSectionMoments::new(label.clone(), mu, sigma, &tol()).unwrap();
    Instance { label, moments, phi, w }
}

/// Instances satisfying no-arbitrage: spanned and generic means over both
/// covariance modes.
pub fn na_campaign(seed: u64, count: usize) -> Vec<Instance> {
    (0..count)
        .map(|k| {
            let mean = if k % 2 == 0 { MeanMode::Spanned } else { MeanMode::InImage };
            let cov = if k % 5 < 2 { CovMode::Separated } else { CovMode::Generic };
            random_instance(seed, k, mean, cov)
        })
        .collect()
}

/// Every mode, including arbitrage.
pub fn full_campaign(seed: u64, count: usize) -> Vec<Instance> {
    (0..count)
        .map(|k| {
            let mean = [MeanMode::Spanned, MeanMode::InImage, MeanMode::Free][k % 3];
            let cov = if (k / 3) % 2 == 0 { CovMode::Separated } else { CovMode::Generic };
            random_instance(seed, k, mean, cov)
        })
        .collect()
}

pub fn example3_fixtures() -> Vec<Instance> {
    let t = tol();
    [
        Example3Params::BASE,
        Example3Params::continuation_default(),
        Example3Params { a2: 1.0, ..Example3Params::BASE },
        Example3Params::continuation(1.0, 1.0, 4.0, 1.0, 0.5).unwrap(),
        Example3Params { rho: 0.0, ..Example3Params::BASE },
    ]
    .iter()
    .map(|p| {
        let (moments, phi, w) = fixtures::example3_instance(p, &t).unwrap();
        Instance {
            label: format!("example3 {:?}", p.to_array()),
            moments,
            phi,
            w,
        }
    })
    .collect()
}

pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Four assets, two factors, returns on an annual scale.
pub fn monte_carlo_spec() -> GenerativeSpec {
    let phi = Matrix::from_row_slice(4, 2, &[1.0, 0.2, 0.8, -0.5, 1.2, 0.0, 0.9, 1.1]);
    let mu_g = Vector::from_vec(vec![0.06, 0.03]);
    let sigma_g = Matrix::from_row_slice(2, 2, &[0.04, 0.006, 0.006, 0.0225]);
    let b = Matrix::from_row_slice(4, 2, &[0.2, 0.0, -0.1, 0.15, 0.05, 0.1, 0.0, -0.2]);
    let sigma_eta = &b * b.transpose();
    GenerativeSpec::new(Characteristics::new(phi).unwrap(), mu_g, sigma_g, sigma_eta, &tol()).unwrap()
}

pub fn sample_moments(draws: &[linfactor::ReturnSample]) -> (Vector, Matrix) {
    let n = draws[0].as_vector().len();
    let count = draws.len() as f64;
    let mean = draws.iter().fold(Vector::zeros(n), |acc, x| acc + x.as_vector()) / count;
    let cov = draws.iter().fold(Matrix::zeros(n, n), |acc, x| {
        let d = x.as_vector() - &mean;
        acc + &d * d.transpose()
    }) / (count - 1.0);
    (mean, cov)
}
