//! Simulated return panels as text.
//!
//! ```text
//! linfactor-returns 1
//! seed <seed>
//! n <assets>
//! x <n values>
//! x <n values>
//! ```
//!
//! One `x` line per date, in date order, with the same number formatting as
//! moment files.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::moment_file::format_number;
use crate::linalg::Vector;
use crate::model::ReturnSample;

pub const RETURNS_HEADER: &str = "linfactor-returns 1";

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsFile {
    pub seed: u64,
    pub n: usize,
    pub samples: Vec<ReturnSample>,
}

impl ReturnsFile {
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{RETURNS_HEADER}");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "n {}", self.n);
        for x in &self.samples {
            s.push('x');
            for &v in x.as_vector().iter() {
                s.push(' ');
                s.push_str(&format_number(v));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, RETURNS_HEADER)) => {}
            _ => return Err(Error::parse(1, format!("expected header `{RETURNS_HEADER}`"))),
        }
        let mut scalar = |key: &str| -> Result<u64> {
            let (line, text) = lines.next().ok_or_else(|| Error::parse(0, format!("missing `{key}`")))?;
            text.strip_prefix(key)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| Error::parse(line, format!("expected `{key} <integer>`")))
        };
        let seed = scalar("seed")?;
        let n = scalar("n")? as usize;
        let mut samples = Vec::new();
        for (line, text) in lines {
            let rest = text
                .strip_prefix("x ")
                .ok_or_else(|| Error::parse(line, "expected an `x` line"))?;
            let values = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(line, format!("`{t}` is not a number"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != n {
                return Err(Error::parse(line, format!("{} values, expected {n}", values.len())));
            }
            samples.push(ReturnSample::new(Vector::from_vec(values)).map_err(|e| Error::parse(line, e.to_string()))?);
        }
        Ok(ReturnsFile { seed, n, samples })
    }
}
