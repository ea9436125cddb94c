//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria listed in `BLOCKED` are reproduced as stated and are expected to
//! fail; the process exits nonzero only if some other criterion fails or a
//! blocked one unexpectedly passes. Set `ACCEPTANCE_STRICT=1` to exit nonzero
//! on any failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use common::{example3_fixtures, full_campaign, max_abs, monte_carlo_spec, na_campaign, of_rank, sample_moments, tol};
use linfactor::builders;
use linfactor::diagnostics::{self, report_for};
use linfactor::fixtures::{self, Example3Params};
use linfactor::generative::{self, campaign_config, date_rng, Distribution};
use linfactor::io::{MomentFile, ReturnsFile};
use linfactor::linalg::{self, Matrix, Vector};
use linfactor::{model, portfolio, ConditionId as C};

/// Reproduced faithfully and failing: the printed cross covariance of the
/// counterexample, and the GLS-type guarantees under partially singular
/// idiosyncratic covariance.
const BLOCKED: [usize; 2] = [2, 6];

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64()))
}

fn penrose_residual(a: &Matrix, x: &Matrix) -> f64 {
    let rel = |p: Matrix, q: &Matrix, s: f64| (p - q).norm() / s.max(1.0);
    let (na, nx) = (a.norm(), x.norm());
    [
        rel(a * x * a, a, na),
        rel(x * a * x, x, nx),
        rel((a * x).transpose(), &(a * x), na * nx),
        rel((x * a).transpose(), &(x * a), na * nx),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn pseudoinverse() -> Outcome {
    let t = tol();
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for k in 0..500u64 {
        let mut rng = date_rng(0xacc1, k);
        let rows = 1 + (k % 12) as usize;
        let cols = 1 + ((k / 12) % 8) as usize;
        let rank = (k / 96) as usize % (rows.min(cols) + 1);
        let a = of_rank(&mut rng, rows, cols, rank);
        let x = linalg::pinv(&a, &t).map_err(|e| e.to_string())?;
        worst = worst.max(penrose_residual(&a, &x));
    }
    let phi_pinv = linalg::pinv(fixtures::example3_phi().matrix(), &t).map_err(|e| e.to_string())?;
    let printed = Matrix::from_row_slice(2, 3, &[0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
    let gap = max_abs(&(phi_pinv - printed));
    let elapsed = start.elapsed();
    ensure(worst <= 1e-8, format!("worst Penrose residual {worst:.2e}"))?;
    ensure(gap <= 1e-12, format!("Φ⁺ differs from printed matrix by {gap:.2e}"))?;
    within(elapsed, 5.0)?;
    Ok(format!("worst Penrose residual {worst:.2e}, Φ⁺ gap {gap:.1e}, {:.2}s", elapsed.as_secs_f64()))
}

fn counterexample() -> Outcome {
    let t = tol();
    let (m, phi, w) = fixtures::example3_instance(&Example3Params::BASE, &t).map_err(|e| e.to_string())?;
    let r = diagnostics::run_all(&m, &phi, &w, &t).map_err(|e| e.to_string())?;
    let fm = model::derive_factor_moments(&m, &phi, &w, &t).map_err(|e| e.to_string())?;
    let held = |id| report_for(&r, id).map(|x| x.holds).unwrap_or(false);
    ensure(held(C::EpsOrtho), "EPS_ORTHO fails")?;
    ensure(held(C::CsOrtho), "CS_ORTHO fails")?;
    ensure(!held(C::FSpannedEpsUncorr), "FSPANNED_EPS_UNCORR holds")?;
    let entry = fm.cross_spanned_eps[(0, 0)];
    let p = Example3Params::BASE;
    let printed = (p.a1 - p.a2) / 2.0;
    ensure(
        (entry - printed).abs() <= 1e-12,
        format!("cov(Φf, ε)[0,0] = {entry} but (a1−a2)/2 = {printed}; (a1−a2)/4 = {}", (p.a1 - p.a2) / 4.0),
    )?;
    Ok(format!("cov(Φf, ε)[0,0] = {entry}"))
}

fn continuation() -> Outcome {
    let t = tol();
    let p = Example3Params::continuation_default();
    ensure(p.to_array() == [1.0, 2.0, 4.0, 1.0, 1.0, 8.75, 0.5], format!("parameters {:?}", p.to_array()))?;
    let (m, phi, w) = fixtures::example3_instance(&p, &t).map_err(|e| e.to_string())?;
    let r = diagnostics::run_all(&m, &phi, &w, &t).map_err(|e| e.to_string())?;
    let held = |id| report_for(&r, id).map(|x| x.holds).unwrap_or(false);
    ensure(held(C::MuReproduced), "MU_REPRODUCED fails")?;
    ensure(held(C::Spanning), "SPANNING fails")?;
    ensure(!held(C::TradableTripleEq), "TRADABLE_TRIPLE_EQ holds")?;
    let c = Vector::from_vec(vec![0.0, 2.0]);
    let gap = (m.sigma() * w.matrix() * &c - m.mu()).amax();
    ensure(gap <= 1e-12, format!("ΣW(0, 2) − μ = {gap:.2e}"))?;
    let witness = report_for(&r, C::Spanning)
        .and_then(|x| x.witness.as_ref())
        .and_then(|x| x.as_vector())
        .ok_or("SPANNING carries no witness")?;
    let wgap = (&witness - &c).amax();
    ensure(wgap <= 1e-10, format!("reported witness {:?}", witness.as_slice()))?;
    Ok(format!("witness ({:.12}, {:.12})", witness[0], witness[1]))
}

fn spanning_equivalence() -> Outcome {
    let t = tol();
    let start = Instant::now();
    let instances = na_campaign(41, 1200);
    let (mut span, mut singular_sigma, mut singular_sigma_f, mut deficient_phi, mut wide) = (0, 0, 0, 0, 0);
    for inst in &instances {
        let r = inst.reports();
        let ids = [C::SrEquality, C::Spanning, C::MveSpanned, C::SdfSpanned];
        let st: Vec<bool> = ids.iter().map(|&id| report_for(&r, id).unwrap().holds).collect();
        ensure(st.iter().all(|&s| s == st[0]), format!("{}: predicates disagree {st:?}", inst.label))?;
        let fm = model::derive_factor_moments(&inst.moments, &inst.phi, &inst.w, &t).map_err(|e| e.to_string())?;
        let sr2 = portfolio::mve(&inst.moments, &t).map_err(|e| e.to_string())?.sr_squared;
        let sr2_f = portfolio::factor_mve(&fm, &t).map_err(|e| e.to_string())?.sr_squared;
        if st[1] {
            span += 1;
            ensure((sr2 - sr2_f).abs() <= 1e-8, format!("{}: |SR_f² − SR²| = {:.2e}", inst.label, (sr2 - sr2_f).abs()))?;
        } else {
            ensure(sr2_f <= sr2, format!("{}: SR_f² = {sr2_f} > SR² = {sr2}", inst.label))?;
        }
        let (n, m) = (inst.moments.n(), inst.phi.m());
        singular_sigma += (linalg::rank_of(inst.moments.sigma(), &t).unwrap() < n) as usize;
        singular_sigma_f += (linalg::rank_of(&fm.sigma_f, &t).unwrap() < m) as usize;
        deficient_phi += (linalg::rank_of(inst.phi.matrix(), &t).unwrap() < m.min(n)) as usize;
        wide += (m > n) as usize;
    }
    let elapsed = start.elapsed();
    ensure(instances.len() >= 1000, "fewer than 1000 instances")?;
    ensure(
        singular_sigma > 0 && singular_sigma_f > 0 && deficient_phi > 0 && wide > 0,
        "a required case is missing",
    )?;
    within(elapsed, 30.0)?;
    Ok(format!(
        "{} instances, {span} spanning; singular Σ {singular_sigma}, singular Σ_f {singular_sigma_f}, deficient Φ {deficient_phi}, m>n {wide}; {:.2}s",
        instances.len(),
        elapsed.as_secs_f64()
    ))
}

fn tradable_impossibility() -> Outcome {
    let t = tol();
    let mut premise = 0;
    let instances: Vec<_> = full_campaign(43, 1500).into_iter().chain(example3_fixtures()).collect();
    for inst in &instances {
        let r = inst.reports();
        let nonzero = max_abs(&(inst.phi.matrix() * inst.w.transpose())) > 0.0;
        if report_for(&r, C::TradableTripleEq).unwrap().holds && nonzero {
            premise += 1;
            let fm = model::derive_factor_moments(&inst.moments, &inst.phi, &inst.w, &t).map_err(|e| e.to_string())?;
            let p_norm = linalg::singular_values(&(inst.phi.matrix() * inst.w.transpose())).unwrap()[0];
            let scale = (1.0 + p_norm).powi(2) * linalg::singular_values(inst.moments.sigma()).unwrap()[0];
            let rank = linalg::rank_relative_to(&fm.sigma_eps, scale, &t).map_err(|e| e.to_string())?;
            let deficient = report_for(&r, C::SigepsRankDeficient).unwrap().holds;
            ensure(
                rank < inst.moments.n() && deficient,
                format!("{}: rank Σ_ε = {rank}, SIGEPS_RANK_DEFICIENT {deficient}", inst.label),
            )?;
        }
    }
    ensure(premise > 0, "premise never held")?;
    Ok(format!("{premise} of {} instances meet the premise, zero exceptions", instances.len()))
}

fn gls_type_campaign() -> Outcome {
    let t = tol();
    let trials = 280;
    let start = Instant::now();
    let mut failing = Vec::new();
    let mut ranks = BTreeSet::new();
    let mut deficient_phi = 0;
    for k in 0..trials {
        let cfg = campaign_config(k);
        let mut rng = date_rng(2024, k as u64);
        let spec = generative::random_spec(&cfg, &mut rng, &t).map_err(|e| e.to_string())?;
        let n = spec.n();
        let r_eta = linalg::rank_of(spec.sigma_eta(), &t).unwrap();
        ranks.insert((n, r_eta));
        deficient_phi += (linalg::rank_of(spec.phi().matrix(), &t).unwrap() < spec.m()) as usize;

        let pred = generative::prop7_predictions(&spec, &t).map_err(|e| e.to_string())?;
        let moments = generative::implied_moments(&spec, "trial", &t).map_err(|e| e.to_string())?;
        let (w, _) = builders::build_gls_type_generative(&spec, &t).map_err(|e| e.to_string())?;
        let fm = model::derive_factor_moments(&moments, spec.phi(), &w, &t).map_err(|e| e.to_string())?;
        let r = diagnostics::run_all(&moments, spec.phi(), &w, &t).map_err(|e| e.to_string())?;
        let mut bad = Vec::new();
        if (&fm.mu_f - &pred.mu_f).amax() > 1e-8 {
            bad.push("μ_f");
        }
        if max_abs(&(&fm.sigma_f - &pred.sigma_f)) > 1e-8 {
            bad.push("Σ_f");
        }
        if max_abs(&(&fm.sigma_eps - &pred.sigma_eps)) > 1e-8 {
            bad.push("Σ_ε");
        }
        for (id, name) in [(C::Spanning, "SPANNING"), (C::ResidUnpriced, "RESID_UNPRICED"), (C::FEpsUncorr, "F_EPS_UNCORR")] {
            if !report_for(&r, id).unwrap().holds {
                bad.push(name);
            }
        }
        if pred.simplifications.iter().any(|c| c.residual > 1e-10) {
            bad.push("simplification");
        }
        if !bad.is_empty() {
            failing.push((k, n, r_eta, bad));
        }
    }
    let elapsed = start.elapsed();
    let coverage = (1..=7).all(|n| (0..=n).all(|r| ranks.contains(&(n, r))));
    ensure(coverage, "Σ_η ranks 0…n not all drawn")?;
    ensure(deficient_phi > 0, "no rank-deficient Φ")?;
    if let Some((k, n, r, bad)) = failing.first() {
        let partial = failing.iter().filter(|(_, n, r, _)| *r > 0 && r < n).count();
        return Err(format!(
            "{} of {trials} specs fail ({partial} with 0 < rank Σ_η < n); first: trial {k}, n = {n}, rank Σ_η = {r}, {bad:?}",
            failing.len()
        ));
    }
    within(elapsed, 60.0)?;
    Ok(format!("{trials} specs, deficient Φ {deficient_phi}, {:.2}s", elapsed.as_secs_f64()))
}

fn invertible_extension() -> Outcome {
    let t = tol();
    let mut worst = 0.0_f64;
    for k in 0..200u64 {
        let mut rng = date_rng(0xacc7, k);
        let n = 1 + (k % 8) as usize;
        let rank = (k / 8) as usize % (n + 1);
        let u = of_rank(&mut rng, n, n, rank);
        let s = builders::extend_to_invertible(&u, &t).map_err(|e| e.to_string())?;
        ensure(linalg::rank_of(&s, &t).unwrap() == n, format!("trial {k}: S singular"))?;
        let row = linalg::image_basis(&u.transpose(), &t).unwrap();
        let col = linalg::image_basis(&u, &t).unwrap();
        let ker = linalg::kernel_basis(&u, &t).unwrap();
        let ker_t = linalg::kernel_basis(&u.transpose(), &t).unwrap();
        let mapped = &s * ker.basis();
        let residuals = [
            max_abs(&(&s * row.basis() - &u * row.basis())),
            max_abs(&(s.transpose() * col.basis() - u.transpose() * col.basis())),
            max_abs(&(u.transpose() * &mapped)),
        ];
        ensure(linalg::rank_of(&mapped, &t).unwrap() == ker_t.dim(), format!("trial {k}: ker U not onto ker Uᵀ"))?;
        worst = residuals.into_iter().fold(worst, f64::max);

        let mut rng = date_rng(0xacc8, k);
        let sigma_eta = common::psd_of_rank(&mut rng, n, rank);
        let root = linalg::psd_root_of_pinv(&sigma_eta, &t).unwrap();
        let sr = builders::extend_to_invertible(&root, &t).unwrap();
        let proj = &root * linalg::pinv(&root, &t).unwrap();
        worst = worst.max(max_abs(&(&sr * &sigma_eta * sr.transpose() - proj)));
    }
    ensure(worst <= 1e-8, format!("worst residual {worst:.2e}"))?;
    Ok(format!("200 trials, worst residual {worst:.2e}"))
}

fn implication_graph() -> Outcome {
    let instances: Vec<_> = full_campaign(7, 2100).into_iter().chain(example3_fixtures()).collect();
    for inst in &instances {
        let r = inst.reports();
        let bad: Vec<_> = inst.graph(&r).violations().map(|e| e.edge.clone()).collect();
        ensure(bad.is_empty(), format!("{}: {bad:?}", inst.label))?;
    }
    let t = tol();
    let (m, phi, w) = fixtures::example3_instance(&Example3Params::BASE, &t).unwrap();
    let base = diagnostics::run_all(&m, &phi, &w, &t).unwrap();
    ensure(
        report_for(&base, C::EpsOrtho).unwrap().holds && !report_for(&base, C::FSpannedEpsUncorr).unwrap().holds,
        "orthogonality witness missing",
    )?;
    let (m, phi, w) = fixtures::example3_instance(&Example3Params::continuation_default(), &t).unwrap();
    let cont = diagnostics::run_all(&m, &phi, &w, &t).unwrap();
    ensure(
        report_for(&cont, C::Spanning).unwrap().holds && !report_for(&cont, C::TradableTripleEq).unwrap().holds,
        "converse witness missing",
    )?;
    Ok(format!("{} instances, zero violated edges, both witnesses present", instances.len()))
}

fn monte_carlo() -> Outcome {
    let t = tol();
    let spec = monte_carlo_spec();
    let draws = generative::simulate_panel(&spec, 1_000_000, 11, Distribution::Gaussian, &t).map_err(|e| e.to_string())?;
    let (mean, cov) = sample_moments(&draws);
    let implied = generative::implied_moments(&spec, "mc", &t).unwrap();
    let err = ((mean - implied.mu()).norm_squared() + (cov - implied.sigma()).norm_squared()).sqrt();
    ensure(err < 1e-2, format!("Frobenius error {err:.2e}"))?;
    let file = |seed| ReturnsFile {
        seed,
        n: 4,
        samples: generative::simulate_panel(&spec, 5000, seed, Distribution::Gaussian, &t).unwrap(),
    }
    .serialize();
    ensure(file(11) == file(11), "same seed gives different samples")?;
    Ok(format!("Frobenius error {err:.2e} at 10⁶ draws, reproducible"))
}

fn cli_pipeline() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_linfactor");
    let fixture = Command::new(bin).args(["fixture", "example3"]).output().map_err(|e| e.to_string())?;
    ensure(fixture.status.code() == Some(0), "fixture exit")?;
    let text = String::from_utf8(fixture.stdout).map_err(|e| e.to_string())?;
    let reparsed = MomentFile::parse(&text).map_err(|e| e.to_string())?.serialize();
    ensure(reparsed == text, "moment file does not round-trip")?;

    let mut child = Command::new(bin)
        .args(["diagnose", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    use std::io::Write;
    child.stdin.take().unwrap().write_all(text.as_bytes()).map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(0), format!("diagnose exit {:?}", out.status.code()))?;
    let json = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let value: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let again = serde_json::to_string_pretty(&value).unwrap() + "\n";
    ensure(again == json, "diagnostics JSON does not round-trip")?;
    Ok(format!("exit 0, {} bytes of moments and {} bytes of JSON round-trip", text.len(), json.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "pseudoinverse", pseudoinverse),
        (2, "counterexample", counterexample),
        (3, "continuation", continuation),
        (4, "spanning equivalence", spanning_equivalence),
        (5, "tradable impossibility", tradable_impossibility),
        (6, "GLS-type closed forms", gls_type_campaign),
        (7, "invertible extension", invertible_extension),
        (8, "implication graph", implication_graph),
        (9, "Monte Carlo", monte_carlo),
        (10, "CLI pipeline", cli_pipeline),
    ];
    panic::set_hook(Box::new(|_| {}));
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut unexpected = 0;
    let mut passed = 0;
    for (id, name, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let blocked = BLOCKED.contains(&id);
        match &outcome {
            Ok(detail) => {
                passed += 1;
                println!("criterion {id:>2} PASS  {name}: {detail}");
            }
            Err(detail) => println!("criterion {id:>2} FAIL  {name}: {detail}"),
        }
        if outcome.is_ok() == blocked || (strict && outcome.is_err()) {
            unexpected += 1;
        }
    }
    println!("{passed}/10 criteria pass; known failures: {BLOCKED:?}");
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
