//! Per-date diagnostics over a panel and their JSON and text renderings.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{self, ConditionReport, ImplicationGraphReport};
use crate::error::{Error, Result};
use crate::generative::{self, GaussianSampler, GlsTypeReport};
use crate::io::moment_file::{MomentFile, RecordWeights};
use crate::linalg::{Matrix, Tolerance, Vector};
use crate::model::{self, PanelEntry, PanelSequence, ReturnSample, Violation};
use crate::portfolio::{self, MveResult, SdfCoefficients};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tol: Tolerance,
    /// Seed for the sample-path orthogonality draws.
    pub seed: u64,
    /// Draws per date for the sample-path check; zero disables it.
    pub sample_draws: usize,
    /// Abort on the first invalid date instead of recording it.
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tol: Tolerance::default(),
            seed: 0,
            sample_draws: 16,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub rel_rank_tol: f64,
    pub abs_residual_tol: f64,
    pub seed: u64,
    pub sample_draws: usize,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpeRatios {
    /// `μᵀΣ⁺μ`, absent under arbitrage.
    pub sr_squared: Option<f64>,
    /// `μ_fᵀΣ_f⁺μ_f`
    pub factor_sr_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCheck {
    pub draws: usize,
    pub holds: bool,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DateOutput {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub validation: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub conditions: Vec<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub implication_graph: Option<ImplicationGraphReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mve: Option<MveResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor_mve: Option<MveResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sharpe: Option<SharpeRatios>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdf: Option<SdfCoefficients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor_sdf: Option<SdfCoefficients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cs_ortho_sample: Option<SampleCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generative: Option<GlsTypeReport>,
}

impl DateOutput {
    fn failed(label: String, n: usize, m: usize, validation: Vec<Violation>, error: String) -> Self {
        DateOutput {
            label,
            n,
            m,
            validation,
            error: Some(error),
            conditions: Vec::new(),
            implication_graph: None,
            mve: None,
            factor_mve: None,
            sharpe: None,
            sdf: None,
            factor_sdf: None,
            cs_ortho_sample: None,
            generative: None,
        }
    }

    pub fn condition(&self, id: diagnostics::ConditionId) -> Option<&ConditionReport> {
        diagnostics::report_for(&self.conditions, id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub dates: usize,
    pub errors: usize,
    pub violated_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsOutput {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub dates: Vec<DateOutput>,
    pub summary: Summary,
}

impl DiagnosticsOutput {
    pub fn has_violation(&self) -> bool {
        self.summary.violated_edges > 0
    }

    pub fn has_error(&self) -> bool {
        self.summary.errors > 0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("output is serializable");
        s.push('\n');
        s
    }
}

/// FNV-1a, so the sample stream depends on the date's label and not its position.
fn label_stream(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn sample_check(entry: &PanelEntry, config: &RunConfig) -> Result<Option<SampleCheck>> {
    if config.sample_draws == 0 {
        return Ok(None);
    }
    let tol = &config.tol;
    let sampler = GaussianSampler::new(entry.moments.mu().clone(), entry.moments.sigma(), tol)?;
    let mut rng = generative::date_rng(config.seed, label_stream(entry.moments.date_label()));
    let mut holds = true;
    let mut max_residual = 0.0_f64;
    for _ in 0..config.sample_draws {
        let x = ReturnSample::new(sampler.draw(&mut rng))?;
        let r = diagnostics::check_cs_ortho_on_sample(&x, &entry.phi, &entry.w, tol)?;
        holds &= r.holds;
        max_residual = max_residual.max(r.residual);
    }
    Ok(Some(SampleCheck {
        draws: config.sample_draws,
        holds,
        max_residual,
    }))
}

fn sdf_from_mve(mu: &Vector, mve: &MveResult) -> SdfCoefficients {
    SdfCoefficients {
        intercept: 1.0 + mu.dot(&mve.weights_vector()),
        loadings: mve.weights.iter().map(|w| -w).collect(),
    }
}

fn diagnose_entry(entry: &PanelEntry, validation: Vec<Violation>, config: &RunConfig) -> Result<DateOutput> {
    let tol = &config.tol;
    let (moments, phi, w) = (&entry.moments, &entry.phi, &entry.w);
    let conditions = diagnostics::run_all(moments, phi, w, tol)?;
    let graph = diagnostics::verify_implication_graph(&conditions, diagnostics::is_nondegenerate(phi, w, tol));
    let fm = model::derive_factor_moments(moments, phi, w, tol)?;

    let mve = match portfolio::mve(moments, tol) {
        Ok(r) => Some(r),
        Err(Error::Arbitrage { .. }) => None,
        Err(e) => return Err(e),
    };
    let factor_mve = portfolio::factor_mve(&fm, tol)?;
    let factor_sdf = match portfolio::factor_sdf(&fm, tol) {
        Ok(s) => Some(s),
        Err(Error::Arbitrage { .. }) => None,
        Err(e) => return Err(e),
    };
    let sdf = mve.as_ref().map(|r| sdf_from_mve(moments.mu(), r));
    let sharpe = SharpeRatios {
        sr_squared: mve.as_ref().map(|r| r.sr_squared),
        factor_sr_squared: factor_mve.sr_squared,
    };
    let generative = match &entry.generative {
        Some(spec) => Some(generative::verify_prop7(spec, tol)?),
        None => None,
    };
    Ok(DateOutput {
        label: moments.date_label().to_string(),
        n: moments.n(),
        m: phi.m(),
        validation,
        error: None,
        conditions,
        implication_graph: Some(graph),
        mve,
        factor_mve: Some(factor_mve),
        sharpe: Some(sharpe),
        sdf,
        factor_sdf,
        cs_ortho_sample: sample_check(entry, config)?,
        generative,
    })
}

fn metadata(config: &RunConfig) -> Metadata {
    Metadata {
        tool: "linfactor",
        version: env!("CARGO_PKG_VERSION"),
        rel_rank_tol: config.tol.rel_rank_tol(),
        abs_residual_tol: config.tol.abs_residual_tol(),
        seed: config.seed,
        sample_draws: config.sample_draws,
        strict: config.strict,
    }
}

fn assemble(dates: Vec<DateOutput>, config: &RunConfig) -> DiagnosticsOutput {
    let summary = Summary {
        dates: dates.len(),
        errors: dates.iter().filter(|d| d.error.is_some()).count(),
        violated_edges: dates
            .iter()
            .filter_map(|d| d.implication_graph.as_ref())
            .map(|g| g.violations().count())
            .sum(),
    };
    DiagnosticsOutput {
        schema_version: SCHEMA_VERSION,
        metadata: metadata(config),
        dates,
        summary,
    }
}

fn validation_of(entry: &PanelEntry, tol: &Tolerance) -> Vec<Violation> {
    model::validate_cross_section(
        entry.moments.mu(),
        entry.moments.sigma(),
        entry.phi.matrix(),
        entry.w.matrix(),
        tol,
    )
}

fn entry_output(entry: &PanelEntry, config: &RunConfig) -> Result<DateOutput> {
    let validation = validation_of(entry, &config.tol);
    diagnose_entry(entry, validation.clone(), config).or_else(|e| {
        if config.strict {
            Err(e)
        } else {
            Ok(DateOutput::failed(
                entry.moments.date_label().to_string(),
                entry.moments.n(),
                entry.phi.m(),
                validation,
                e.to_string(),
            ))
        }
    })
}

/// Diagnostics for every date of a validated panel, in input order.
pub fn run_diagnostics(panel: &PanelSequence, config: &RunConfig) -> Result<DiagnosticsOutput> {
    let dates = panel
        .entries()
        .par_iter()
        .map(|e| entry_output(e, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(dates, config))
}

/// Like [`run_diagnostics`], but records that fail to build are reported
/// per date instead of failing the run, unless `config.strict` is set.
pub fn run_diagnostics_on_file(file: &MomentFile, config: &RunConfig) -> Result<DiagnosticsOutput> {
    let tol = &config.tol;
    let m = file.records.first().map(|r| r.m);
    let dates = file
        .records
        .par_iter()
        .map(|rec| {
            let built = rec.to_entry(tol).and_then(|e| match m {
                Some(m) if e.phi.m() != m => Err(Error::Record {
                    record: rec.label.clone(),
                    message: format!("factor count {} differs from {} in the first date", e.phi.m(), m),
                }),
                _ => Ok(e),
            });
            match built {
                Ok(entry) => entry_output(&entry, config),
                Err(e) if config.strict => Err(e),
                Err(e) => {
                    let validation = match rec.raw_moments(tol) {
                        Ok((mu, sigma)) => {
                            // Recipe weights failed to build; check only the moments.
                            let w = match &rec.weights {
                                RecordWeights::Explicit(w) => w.clone(),
                                RecordWeights::Recipe(_) => Matrix::zeros(rec.phi.nrows(), rec.phi.ncols()),
                            };
                            model::validate_cross_section(&mu, &sigma, &rec.phi, &w, tol)
                        }
                        Err(_) => Vec::new(),
                    };
                    Ok(DateOutput::failed(rec.label.clone(), rec.n, rec.m, validation, e.to_string()))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(dates, config))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Human-readable rendering.
pub fn render_text(out: &DiagnosticsOutput) -> String {
    let mut s = String::new();
    let md = &out.metadata;
    let _ = writeln!(
        s,
        "{} {} (schema {}) rel_rank_tol={:e} abs_residual_tol={:e} seed={}",
        md.tool, md.version, out.schema_version, md.rel_rank_tol, md.abs_residual_tol, md.seed
    );
    for d in &out.dates {
        let _ = writeln!(s, "\n== {} (n={}, m={})", d.label, d.n, d.m);
        for v in &d.validation {
            let _ = writeln!(s, "  validation: {v}");
        }
        if let Some(e) = &d.error {
            let _ = writeln!(s, "  error: {e}");
            continue;
        }
        for c in &d.conditions {
            let _ = write!(s, "  {:<22} {:<5} residual {:.3e}", c.id.name(), if c.holds { "holds" } else { "fails" }, c.residual);
            if let Some(note) = &c.note {
                let _ = write!(s, "  ({note})");
            }
            s.push('\n');
        }
        if let Some(sr) = &d.sharpe {
            match sr.sr_squared {
                Some(v) => {
                    let _ = writeln!(s, "  SR^2 = {v:.6e}, factor SR^2 = {:.6e}", sr.factor_sr_squared);
                }
                None => {
                    let _ = writeln!(s, "  SR^2 undefined (arbitrage), factor SR^2 = {:.6e}", sr.factor_sr_squared);
                }
            }
        }
        if let Some(sc) = &d.cs_ortho_sample {
            let _ = writeln!(
                s,
                "  sample-path CS_ORTHO over {} draws: {} (max residual {:.3e})",
                sc.draws,
                yes_no(sc.holds),
                sc.max_residual
            );
        }
        if let Some(g) = &d.implication_graph {
            let confirmed = g.edges.iter().filter(|e| e.status == diagnostics::EdgeStatus::Confirmed).count();
            let _ = writeln!(s, "  implication edges: {} confirmed, {} total", confirmed, g.edges.len());
            for e in g.violations() {
                let _ = writeln!(s, "  VIOLATED: {}", e.edge);
            }
        }
        if let Some(p) = &d.generative {
            let _ = writeln!(s, "  generative model checks: {}", if p.passes() { "all pass" } else { "FAILURES" });
            for c in &p.checks {
                let _ = writeln!(s, "    {:<5} {:.3e}  {}", if c.holds { "ok" } else { "FAIL" }, c.residual, c.name);
            }
        }
    }
    let _ = writeln!(
        s,
        "\n{} dates, {} errors, {} violated edges",
        out.summary.dates, out.summary.errors, out.summary.violated_edges
    );
    s
}
