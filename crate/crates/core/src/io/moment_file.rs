//! Line-oriented text format for per-date moment records.
//!
//! ```text
//! linfactor-moments 1
//! # comment lines and blank lines are ignored
//! record <label>
//! n <assets>
//! m <factors>
//! mu <n values>            | mu_g <m values>
//! sigma                    | sigma_g
//! <n rows of n values>     | <m rows of m values>
//!                          | sigma_eta
//!                          | <n rows of n values>
//! phi
//! <n rows of m values>
//! w                        | recipe ols | gls | general | gls_type
//! <n rows of m values>     | <recipe parameters>
//! end
//! ```
//!
//! A record either states `mu`/`sigma` directly or describes an
//! abstract-factor model through `mu_g`, `sigma_g` and `sigma_eta`. Weights are
//! given explicitly as `w` or by a recipe. Recipe parameters are matrix blocks:
//! `gls` needs `sigma_eps` (n×n), `general` needs `r` (m×m) and `s` (n×n),
//! `gls_type` needs `sigma_eta` (n×n) unless the record is generative, in which
//! case it uses the model's `sigma_eta`. `n` and `m` must precede every vector
//! and matrix field. Writing always uses the field order above and formats
//! numbers with 17 significant digits, so values survive a round trip bit for
//! bit.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;

use crate::builders::WeightRecipe;
use crate::error::{Error, Result};
use crate::generative::{self, GenerativeSpec};
use crate::linalg::{Matrix, Tolerance, Vector};
use crate::model::{Characteristics, CrossSectionMoments, FactorWeights, PanelEntry, PanelSequence};

pub const MOMENT_HEADER: &str = "linfactor-moments 1";

#[derive(Debug, Clone, PartialEq)]
pub enum RecordSource {
    Moments { mu: Vector, sigma: Matrix },
    Generative { mu_g: Vector, sigma_g: Matrix, sigma_eta: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordWeights {
    Explicit(Matrix),
    /// For generative records a `GlsType` recipe is written without its own
    /// `sigma_eta` block and reads the model's back.
    Recipe(WeightRecipe),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRecord {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub source: RecordSource,
    pub phi: Matrix,
    pub weights: RecordWeights,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentFile {
    pub records: Vec<MomentRecord>,
}

fn record_error(label: &str, e: Error) -> Error {
    Error::Record {
        record: label.to_string(),
        message: e.to_string(),
    }
}

impl MomentRecord {
    /// A generative record with GLS-type weights.
    pub fn from_generative(label: impl Into<String>, spec: &GenerativeSpec) -> Self {
        MomentRecord {
            label: label.into(),
            n: spec.n(),
            m: spec.m(),
            source: RecordSource::Generative {
                mu_g: spec.mu_g().clone(),
                sigma_g: spec.sigma_g().clone(),
                sigma_eta: spec.sigma_eta().clone(),
            },
            phi: spec.phi().matrix().clone(),
            weights: RecordWeights::Recipe(WeightRecipe::GlsType {
                sigma_eta: spec.sigma_eta().clone(),
            }),
        }
    }

    pub fn generative_spec(&self, tol: &Tolerance) -> Result<Option<GenerativeSpec>> {
        match &self.source {
            RecordSource::Moments { .. } => Ok(None),
            RecordSource::Generative { mu_g, sigma_g, sigma_eta } => {
                let phi = Characteristics::new(self.phi.clone())?;
                GenerativeSpec::new(phi, mu_g.clone(), sigma_g.clone(), sigma_eta.clone(), tol)
                    .map(Some)
                    .map_err(|e| record_error(&self.label, e))
            }
        }
    }

    /// Raw `(μ, Σ)` as stated or implied, before any validation.
    pub fn raw_moments(&self, tol: &Tolerance) -> Result<(Vector, Matrix)> {
        match &self.source {
            RecordSource::Moments { mu, sigma } => Ok((mu.clone(), sigma.clone())),
            RecordSource::Generative { .. } => {
                let spec = self.generative_spec(tol)?.expect("generative source");
                let m = generative::implied_moments(&spec, &self.label, tol).map_err(|e| record_error(&self.label, e))?;
                Ok((m.mu().clone(), m.sigma().clone()))
            }
        }
    }

    /// Validated panel entry; errors name the record.
    pub fn to_entry(&self, tol: &Tolerance) -> Result<PanelEntry> {
        let wrap = |e: Error| match e {
            e @ Error::Record { .. } => e,
            e => record_error(&self.label, e),
        };
        let phi = Characteristics::new(self.phi.clone()).map_err(wrap)?;
        let spec = self.generative_spec(tol)?;
        let moments = match (&self.source, &spec) {
            (RecordSource::Moments { mu, sigma }, _) => {
                CrossSectionMoments::new(self.label.clone(), mu.clone(), sigma.clone(), tol).map_err(wrap)?
            }
            (RecordSource::Generative { .. }, Some(spec)) => {
                generative::implied_moments(spec, &self.label, tol).map_err(wrap)?
            }
            (RecordSource::Generative { .. }, None) => unreachable!("generative source yields a spec"),
        };
        let w = match &self.weights {
            RecordWeights::Explicit(w) => FactorWeights::new(w.clone()).map_err(wrap)?,
            RecordWeights::Recipe(recipe) => recipe.build(&phi, tol).map_err(wrap)?,
        };
        let mut entry = PanelEntry::new(moments, phi, w).map_err(wrap)?;
        entry.generative = spec;
        Ok(entry)
    }
}

impl MomentFile {
    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    pub fn from_reader<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form.
    pub fn serialize(&self) -> String {
        self.to_string()
    }

    /// Every record as a validated entry; the first failing record errors.
    pub fn to_panel(&self, tol: &Tolerance) -> Result<PanelSequence> {
        let entries = self.records.iter().map(|r| r.to_entry(tol)).collect::<Result<Vec<_>>>()?;
        PanelSequence::new(entries)
    }
}

pub fn parse_moment_file(path: impl AsRef<Path>, tol: &Tolerance) -> Result<PanelSequence> {
    MomentFile::read(path)?.to_panel(tol)
}

pub fn parse_moment_stream<R: Read>(r: R, tol: &Tolerance) -> Result<PanelSequence> {
    MomentFile::from_reader(r)?.to_panel(tol)
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let row: Vec<String> = values.map(|&x| format_number(x)).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

fn write_vector(out: &mut String, key: &str, v: &Vector) {
    out.push_str(key);
    for &x in v.iter() {
        out.push(' ');
        out.push_str(&format_number(x));
    }
    out.push('\n');
}

fn write_matrix(out: &mut String, key: &str, a: &Matrix) {
    out.push_str(key);
    out.push('\n');
    for row in a.row_iter() {
        write_row(out, row.iter());
    }
}

impl fmt::Display for MomentFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        out.push_str(MOMENT_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "record {}", r.label);
            let _ = writeln!(out, "n {}", r.n);
            let _ = writeln!(out, "m {}", r.m);
            let generative = matches!(r.source, RecordSource::Generative { .. });
            match &r.source {
                RecordSource::Moments { mu, sigma } => {
                    write_vector(&mut out, "mu", mu);
                    write_matrix(&mut out, "sigma", sigma);
                }
                RecordSource::Generative { mu_g, sigma_g, sigma_eta } => {
                    write_vector(&mut out, "mu_g", mu_g);
                    write_matrix(&mut out, "sigma_g", sigma_g);
                    write_matrix(&mut out, "sigma_eta", sigma_eta);
                }
            }
            write_matrix(&mut out, "phi", &r.phi);
            match &r.weights {
                RecordWeights::Explicit(w) => write_matrix(&mut out, "w", w),
                RecordWeights::Recipe(recipe) => {
                    let _ = writeln!(out, "recipe {}", recipe.tag());
                    match recipe {
                        WeightRecipe::Ols => {}
                        WeightRecipe::Gls { sigma_eps } => write_matrix(&mut out, "sigma_eps", sigma_eps),
                        WeightRecipe::GeneralForm { r, s } => {
                            write_matrix(&mut out, "r", r);
                            write_matrix(&mut out, "s", s);
                        }
                        WeightRecipe::GlsType { sigma_eta } => {
                            if !generative {
                                write_matrix(&mut out, "sigma_eta", sigma_eta);
                            }
                        }
                    }
                }
            }
            out.push_str("end\n");
        }
        f.write_str(&out)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Vector(Vector),
    Matrix(Matrix),
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

fn parse_number(tok: &str, line: usize, record: &str) -> Result<f64> {
    let x: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("record `{record}`: `{tok}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::parse(line, format!("record `{record}`: non-finite number `{tok}`")));
    }
    Ok(x)
}

fn looks_numeric(line: &str) -> bool {
    line.split_whitespace()
        .next()
        .map(|t| t.parse::<f64>().is_ok())
        .unwrap_or(false)
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Parser { lines, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.lines.get(self.pos).copied();
        self.pos += 1;
        item
    }

    fn last_line(&self) -> usize {
        self.lines.last().map(|l| l.0).unwrap_or(0)
    }

    fn parse(mut self) -> Result<MomentFile> {
        match self.next() {
            Some((_, MOMENT_HEADER)) => {}
            Some((line, other)) => {
                return Err(Error::parse(line, format!("expected header `{MOMENT_HEADER}`, found `{other}`")))
            }
            None => return Err(Error::parse(0, format!("empty input, expected header `{MOMENT_HEADER}`"))),
        }
        let mut records = Vec::new();
        while let Some((line, text)) = self.next() {
            let label = match text.strip_prefix("record") {
                Some(rest) if rest.starts_with(char::is_whitespace) && !rest.trim().is_empty() => rest.trim(),
                _ => return Err(Error::parse(line, format!("expected `record <label>`, found `{text}`"))),
            };
            records.push(self.parse_record(label, line)?);
        }
        Ok(MomentFile { records })
    }

    fn read_rows(&mut self, record: &str, key: &str, rows: usize, cols: usize, line: usize) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let (row_line, text) = match self.lines.get(self.pos) {
                Some(&(l, t)) if looks_numeric(t) => (l, t),
                Some(&(l, _)) => {
                    return Err(Error::parse(
                        l,
                        format!("record `{record}`: {key} has {i} rows, expected {rows}"),
                    ))
                }
                None => {
                    return Err(Error::parse(
                        self.last_line().max(line),
                        format!("record `{record}`: {key} has {i} rows, expected {rows}"),
                    ))
                }
            };
            self.pos += 1;
            let values = text
                .split_whitespace()
                .map(|t| parse_number(t, row_line, record))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != cols {
                return Err(Error::parse(
                    row_line,
                    format!("record `{record}`: {key} row {} has {} values, expected {cols}", i + 1, values.len()),
                ));
            }
            data.extend(values);
        }
        Ok(Matrix::from_row_slice(rows, cols, &data))
    }

    fn parse_record(&mut self, label: &str, start: usize) -> Result<MomentRecord> {
        let mut n: Option<usize> = None;
        let mut m: Option<usize> = None;
        let mut recipe: Option<(usize, String)> = None;
        let mut fields: BTreeMap<&'static str, (usize, Field)> = BTreeMap::new();
        let end_line;
        loop {
            let Some((line, text)) = self.next() else {
                return Err(Error::parse(self.last_line(), format!("record `{label}`: missing `end`")));
            };
            let mut toks = text.split_whitespace();
            let key = toks.next().expect("non-empty line");
            let rest: Vec<&str> = toks.collect();
            let dup = |present: bool| -> Result<()> {
                if present {
                    Err(Error::parse(line, format!("record `{label}`: duplicate field `{key}`")))
                } else {
                    Ok(())
                }
            };
            let dims = |n: Option<usize>, m: Option<usize>| -> Result<(usize, usize)> {
                match (n, m) {
                    (Some(n), Some(m)) => Ok((n, m)),
                    _ => Err(Error::parse(line, format!("record `{label}`: `{key}` before `n` and `m`"))),
                }
            };
            match key {
                "end" => {
                    if !rest.is_empty() {
                        return Err(Error::parse(line, format!("record `{label}`: trailing text after `end`")));
                    }
                    end_line = line;
                    break;
                }
                "n" | "m" => {
                    let slot = if key == "n" { &mut n } else { &mut m };
                    dup(slot.is_some())?;
                    let value = match rest.as_slice() {
                        [v] => v.parse::<usize>().ok().filter(|&v| v > 0),
                        _ => None,
                    };
                    *slot = Some(value.ok_or_else(|| {
                        Error::parse(line, format!("record `{label}`: `{key}` needs one positive integer"))
                    })?);
                }
                "recipe" => {
                    dup(recipe.is_some())?;
                    match rest.as_slice() {
                        [tag] => recipe = Some((line, tag.to_string())),
                        _ => return Err(Error::parse(line, format!("record `{label}`: `recipe` needs one tag"))),
                    }
                }
                "mu" | "mu_g" => {
                    let (n, m) = dims(n, m)?;
                    let name: &'static str = if key == "mu" { "mu" } else { "mu_g" };
                    dup(fields.contains_key(name))?;
                    let len = if name == "mu" { n } else { m };
                    let values = rest
                        .iter()
                        .map(|t| parse_number(t, line, label))
                        .collect::<Result<Vec<_>>>()?;
                    if values.len() != len {
                        return Err(Error::parse(
                            line,
                            format!("record `{label}`: {name} has {} values, expected {len}", values.len()),
                        ));
                    }
                    fields.insert(name, (line, Field::Vector(Vector::from_vec(values))));
                }
                _ => {
                    let (n, m) = dims(n, m).map_err(|e| match key {
                        "sigma" | "sigma_g" | "sigma_eta" | "sigma_eps" | "phi" | "w" | "r" | "s" => e,
                        _ => Error::parse(line, format!("record `{label}`: unknown field `{key}`")),
                    })?;
                    let (name, rows, cols): (&'static str, usize, usize) = match key {
                        "sigma" => ("sigma", n, n),
                        "sigma_g" => ("sigma_g", m, m),
                        "sigma_eta" => ("sigma_eta", n, n),
                        "sigma_eps" => ("sigma_eps", n, n),
                        "phi" => ("phi", n, m),
                        "w" => ("w", n, m),
                        "r" => ("r", m, m),
                        "s" => ("s", n, n),
                        _ => return Err(Error::parse(line, format!("record `{label}`: unknown field `{key}`"))),
                    };
                    if !rest.is_empty() {
                        return Err(Error::parse(
                            line,
                            format!("record `{label}`: rows of `{name}` go on the following lines"),
                        ));
                    }
                    dup(fields.contains_key(name))?;
                    let a = self.read_rows(label, name, rows, cols, line)?;
                    fields.insert(name, (line, Field::Matrix(a)));
                }
            }
        }
        let (n, m) = match (n, m) {
            (Some(n), Some(m)) => (n, m),
            _ => return Err(Error::parse(start, format!("record `{label}`: missing `n` or `m`"))),
        };
        assemble(label, n, m, recipe, fields, end_line)
    }
}

fn assemble(
    label: &str,
    n: usize,
    m: usize,
    recipe: Option<(usize, String)>,
    mut fields: BTreeMap<&'static str, (usize, Field)>,
    end_line: usize,
) -> Result<MomentRecord> {
    let err = |line: usize, msg: String| Error::parse(line, format!("record `{label}`: {msg}"));
    let mut take_matrix = |name: &str| -> Option<Matrix> {
        match fields.remove(name) {
            Some((_, Field::Matrix(a))) => Some(a),
            _ => None,
        }
    };
    let phi = take_matrix("phi").ok_or_else(|| err(end_line, "missing `phi`".into()))?;
    let sigma = take_matrix("sigma");
    let sigma_g = take_matrix("sigma_g");
    let sigma_eta = take_matrix("sigma_eta");
    let sigma_eps = take_matrix("sigma_eps");
    let w = take_matrix("w");
    let r = take_matrix("r");
    let s = take_matrix("s");
    let mut take_vector = |name: &str| -> Option<Vector> {
        match fields.remove(name) {
            Some((_, Field::Vector(v))) => Some(v),
            _ => None,
        }
    };
    let mu = take_vector("mu");
    let mu_g = take_vector("mu_g");

    let generative = mu_g.is_some() || sigma_g.is_some();
    let (source, mut sigma_eta) = if generative {
        if mu.is_some() || sigma.is_some() {
            return Err(err(end_line, "generative records take `mu_g`/`sigma_g` instead of `mu`/`sigma`".into()));
        }
        match (mu_g, sigma_g, sigma_eta) {
            (Some(mu_g), Some(sigma_g), Some(sigma_eta)) => (
                RecordSource::Generative {
                    mu_g,
                    sigma_g,
                    sigma_eta: sigma_eta.clone(),
                },
                Some(sigma_eta),
            ),
            _ => return Err(err(end_line, "generative records need `mu_g`, `sigma_g` and `sigma_eta`".into())),
        }
    } else {
        match (mu, sigma) {
            (Some(mu), Some(sigma)) => (RecordSource::Moments { mu, sigma }, sigma_eta),
            _ => return Err(err(end_line, "missing `mu` or `sigma`".into())),
        }
    };

    let (mut sigma_eps, mut r, mut s) = (sigma_eps, r, s);
    let weights = match (w, recipe) {
        (Some(_), Some((line, _))) => return Err(err(line, "give either `w` or `recipe`, not both".into())),
        (None, None) => return Err(err(end_line, "missing `w` or `recipe`".into())),
        (Some(w), None) => RecordWeights::Explicit(w),
        (None, Some((line, tag))) => RecordWeights::Recipe(match tag.as_str() {
            "ols" => WeightRecipe::Ols,
            "gls" => WeightRecipe::Gls {
                sigma_eps: sigma_eps.take().ok_or_else(|| err(line, "recipe gls needs `sigma_eps`".into()))?,
            },
            "general" => match (r.take(), s.take()) {
                (Some(r), Some(s)) => WeightRecipe::GeneralForm { r, s },
                _ => return Err(err(line, "recipe general needs `r` and `s`".into())),
            },
            "gls_type" => WeightRecipe::GlsType {
                sigma_eta: sigma_eta.take().ok_or_else(|| err(line, "recipe gls_type needs `sigma_eta`".into()))?,
            },
            other => return Err(err(line, format!("unknown recipe `{other}`"))),
        }),
    };
    for (what, left) in [
        ("sigma_eps", sigma_eps.is_some()),
        ("r", r.is_some()),
        ("s", s.is_some()),
        ("sigma_eta", !generative && sigma_eta.is_some()),
    ] {
        if left {
            return Err(err(end_line, format!("`{what}` is not used by this record's weights")));
        }
    }
    Ok(MomentRecord {
        label: label.to_string(),
        n,
        m,
        source,
        phi,
        weights,
    })
}
