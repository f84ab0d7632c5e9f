//! Piecewise-constant two-quadrature control pulses and their text format.
//!
//! File layout:
//!
//! ```text
//! dt_seconds 0.000020000000000000002
//! n_samples 80
//! 1.2345678901234567 -0.5000000000000000
//! ...
//! ```
//!
//! Amplitudes are in kHz, written in fixed-point notation with 17+
//! significant digits so that a file round-trips bit-exactly. Lines starting
//! with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPulse {
    /// Seconds per sample.
    pub dt: f64,
    /// `(u_x, u_y)` per sample, kHz.
    pub samples: Vec<[f64; 2]>,
}

impl ControlPulse {
    pub fn new(dt: f64, samples: Vec<[f64; 2]>) -> Result<Self> {
        let pulse = ControlPulse { dt, samples };
        pulse.validate(None)?;
        Ok(pulse)
    }

    pub fn zeros(dt: f64, n_samples: usize) -> Result<Self> {
        Self::new(dt, vec![[0.0; 2]; n_samples])
    }

    /// Same `(u_x, u_y)` for every sample.
    pub fn constant(dt: f64, n_samples: usize, u: [f64; 2]) -> Result<Self> {
        Self::new(dt, vec![u; n_samples])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    /// Largest `sqrt(u_x^2 + u_y^2)` over the pulse.
    pub fn peak_amplitude(&self) -> f64 {
        self.samples
            .iter()
            .map(|[x, y]| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, max_amplitude: Option<f64>) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::domain(format!("time step {} must be positive", self.dt)));
        }
        if let Some(k) = self.samples.iter().position(|s| !s[0].is_finite() || !s[1].is_finite()) {
            return Err(Error::domain(format!("sample {k} is not finite")));
        }
        if let Some(max) = max_amplitude {
            let peak = self.peak_amplitude();
            if peak > max * (1.0 + 1e-12) {
                return Err(Error::domain(format!(
                    "peak amplitude {peak} kHz exceeds the {max} kHz ceiling"
                )));
            }
        }
        Ok(())
    }

    /// First `k` samples and the rest, as two pulses with the same step.
    pub fn split_at(&self, k: usize) -> (ControlPulse, ControlPulse) {
        let (a, b) = self.samples.split_at(k);
        (
            ControlPulse { dt: self.dt, samples: a.to_vec() },
            ControlPulse { dt: self.dt, samples: b.to_vec() },
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "dt_seconds {}", fixed_point(self.dt)).unwrap();
        writeln!(out, "n_samples {}", self.samples.len()).unwrap();
        for [x, y] in &self.samples {
            writeln!(out, "{} {}", fixed_point(*x), fixed_point(*y)).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let dt = header(&mut lines, "dt_seconds")?;
        let n: usize = header(&mut lines, "n_samples")?;
        let mut samples = Vec::with_capacity(n);
        for (line_no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::PulseFormat(format!(
                    "line {line_no}: expected `u_x u_y`, found {line:?}"
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| {
                    Error::PulseFormat(format!("line {line_no}: bad number {s:?}: {e}"))
                })
            };
            samples.push([parse(fields[0])?, parse(fields[1])?]);
        }
        if samples.len() != n {
            return Err(Error::PulseFormat(format!(
                "header announces {n} samples but {} were found",
                samples.len()
            )));
        }
        ControlPulse::new(dt, samples).map_err(|e| Error::PulseFormat(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn header<'a, T: std::str::FromStr>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let (line_no, line) = lines
        .next()
        .ok_or_else(|| Error::PulseFormat(format!("missing `{key}` header")))?;
    let value = line
        .strip_prefix(key)
        .filter(|rest| rest.starts_with(char::is_whitespace))
        .ok_or_else(|| Error::PulseFormat(format!("line {line_no}: expected `{key} <value>`")))?;
    value
        .trim()
        .parse()
        .map_err(|e| Error::PulseFormat(format!("line {line_no}: bad {key}: {e}")))
}

/// Fixed-point rendering with at least 17 significant digits.
pub fn fixed_point(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (17 - magnitude).max(1) as usize;
    format!("{x:.decimals$}")
}
