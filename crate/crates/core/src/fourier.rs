//! Real trigonometric polynomials on the unit torus `R^2 / Z^2`.
//!
//! A table row `[kx, ky, re, im]` contributes
//! `Re[(re + i im) exp(2 pi i (kx x + ky y))] = re cos(arg) - im sin(arg)`
//! with `arg = 2 pi (kx x + ky y)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct FourierTerm {
    pub kx: i32,
    pub ky: i32,
    pub re: f64,
    pub im: f64,
}

impl From<[f64; 4]> for FourierTerm {
    fn from(row: [f64; 4]) -> Self {
        FourierTerm { kx: row[0].round() as i32, ky: row[1].round() as i32, re: row[2], im: row[3] }
    }
}

impl From<FourierTerm> for [f64; 4] {
    fn from(t: FourierTerm) -> Self {
        [t.kx as f64, t.ky as f64, t.re, t.im]
    }
}

/// Value together with first and second derivatives at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FourierField {
    pub terms: Vec<FourierTerm>,
}

impl FourierField {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<FourierTerm>) -> Self {
        FourierField { terms }
    }

    /// `amplitude * cos(2 pi (kx x + ky y))`
    pub fn cosine(kx: i32, ky: i32, amplitude: f64) -> Self {
        FourierField { terms: vec![FourierTerm { kx, ky, re: amplitude, im: 0.0 }] }
    }

    /// `amplitude * sin(2 pi (kx x + ky y))`
    pub fn sine(kx: i32, ky: i32, amplitude: f64) -> Self {
        FourierField { terms: vec![FourierTerm { kx, ky, re: 0.0, im: -amplitude }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.re == 0.0 && t.im == 0.0)
    }

    pub fn plus(mut self, other: &FourierField) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        FourierField {
            terms: self.terms.iter().map(|t| FourierTerm { re: t.re * s, im: t.im * s, ..*t }).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn value(&self, q: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let arg = 2.0 * PI * (t.kx as f64 * q[0] + t.ky as f64 * q[1]);
                t.re * arg.cos() - t.im * arg.sin()
            })
            .sum()
    }

    pub fn jet(&self, q: [f64; 2]) -> Jet2 {
        let mut out = Jet2::default();
        for t in &self.terms {
            let w = [2.0 * PI * t.kx as f64, 2.0 * PI * t.ky as f64];
            let arg = w[0] * q[0] + w[1] * q[1];
            let (s, c) = arg.sin_cos();
            let f = t.re * c - t.im * s;
            // d/darg
            let df = -t.re * s - t.im * c;
            out.value += f;
            for a in 0..2 {
                out.grad[a] += df * w[a];
                for b in 0..2 {
                    out.hess[a][b] -= f * w[a] * w[b];
                }
            }
        }
        out
    }

    /// Sup of |f| bounded by the sum of coefficient moduli.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.re.hypot(t.im)).sum()
    }

    /// Maximum of the field, found on a grid and polished by Newton steps.
    pub fn max_value(&self) -> f64 {
        self.argmax().1
    }

    /// Location and value of the maximum.
    pub fn argmax(&self) -> ([f64; 2], f64) {
        if self.is_zero() {
            return ([0.0, 0.0], 0.0);
        }
        let kmax = self.terms.iter().map(|t| t.kx.abs().max(t.ky.abs())).max().unwrap_or(0).max(1);
        let m = (16 * kmax as usize).max(64);
        let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
        let mut starts = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let q = [i as f64 / m as f64, j as f64 / m as f64];
                let v = self.value(q);
                starts.push((v, q));
                if v > best.0 {
                    best = (v, q);
                }
            }
        }
        starts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for &(_, q0) in starts.iter().take(8) {
            let mut q = q0;
            for _ in 0..30 {
                let j = self.jet(q);
                let h = j.hess;
                let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                if det.abs() < 1e-14 || h[0][0] >= 0.0 {
                    break;
                }
                let dx = (h[1][1] * j.grad[0] - h[0][1] * j.grad[1]) / det;
                let dy = (-h[1][0] * j.grad[0] + h[0][0] * j.grad[1]) / det;
                if dx.hypot(dy) > 1.0 / m as f64 {
                    break;
                }
                q = [q[0] - dx, q[1] - dy];
                if dx.hypot(dy) < 1e-15 {
                    break;
                }
            }
            let v = self.value(q);
            if v > best.0 {
                best = (v, q);
            }
        }
        (best.1, best.0)
    }

    pub fn min_value(&self) -> f64 {
        -self.scaled(-1.0).max_value()
    }
}
