//! Sampled closed curves in the torus, lifted to the cover, and their
//! W^{1,2} geometry.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{christoffel, HomotopyClass, ManifoldModel};
use crate::spectral;

pub const MIN_SAMPLES: usize = 16;

/// `N` cover points `q_i = q(i/N)` with `q(t + 1) = q(t) + winding`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLoop {
    pub samples: Vec<[f64; 2]>,
    pub class: HomotopyClass,
}

/// Vector field along a loop plus the scalar (period) slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub values: Vec<[f64; 2]>,
    pub scalar: f64,
}

impl TangentField {
    pub fn zeros(n: usize) -> Self {
        TangentField { values: vec![[0.0; 2]; n], scalar: 0.0 }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.iter().flat_map(|p| [p[0], p[1]]).collect();
        v.push(self.scalar);
        v
    }

    pub fn from_vector(v: &[f64]) -> Self {
        let n = (v.len() - 1) / 2;
        TangentField { values: (0..n).map(|i| [v[2 * i], v[2 * i + 1]]).collect(), scalar: v[2 * n] }
    }
}

pub fn check_grid(n: usize) -> Result<()> {
    if n < MIN_SAMPLES || n % 2 != 0 {
        return Err(Error::Config(format!("grid size must be even and >= {MIN_SAMPLES}, got {n}")));
    }
    Ok(())
}

impl DiscreteLoop {
    pub fn new(samples: Vec<[f64; 2]>, class: HomotopyClass) -> Result<Self> {
        check_grid(samples.len())?;
        if samples.iter().any(|q| !q[0].is_finite() || !q[1].is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(DiscreteLoop { samples, class })
    }

    /// Build from a closure `t -> q(t)` that already includes the winding.
    pub fn from_fn(n: usize, class: HomotopyClass, f: impl Fn(f64) -> [f64; 2]) -> Result<Self> {
        Self::new((0..n).map(|i| f(i as f64 / n as f64)).collect(), class)
    }

    pub fn constant(n: usize, q0: [f64; 2]) -> Result<Self> {
        Self::from_fn(n, HomotopyClass::TRIVIAL, |_| q0)
    }

    pub fn straight(n: usize, class: HomotopyClass, base: [f64; 2]) -> Result<Self> {
        let m = class.vector();
        Self::from_fn(n, class, |t| [base[0] + t * m[0], base[1] + t * m[1]])
    }

    /// Circle of radius `r`; counter-clockwise when `r > 0`.
    pub fn circle(n: usize, center: [f64; 2], r: f64) -> Result<Self> {
        let rad = r.abs();
        let dir = r.signum();
        Self::from_fn(n, HomotopyClass::TRIVIAL, |t| {
            let a = 2.0 * PI * t;
            [center[0] + rad * a.cos(), center[1] + dir * rad * a.sin()]
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.len() as f64
    }

    /// Samples minus the linear winding part.
    pub fn periodic_part(&self) -> Vec<[f64; 2]> {
        let m = self.class.vector();
        self.samples
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let t = self.t(i);
                [q[0] - t * m[0], q[1] - t * m[1]]
            })
            .collect()
    }

    /// The loop with the `(-1)^i` component of its periodic part removed.
    /// That mode is invisible to spectral derivatives.
    pub fn without_nyquist(&self) -> DiscreteLoop {
        let n = self.len();
        if n % 2 == 1 {
            return self.clone();
        }
        let mut r = self.periodic_part();
        let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
        for c in 0..2 {
            let a = r.iter().enumerate().map(|(i, p)| sign(i) * p[c]).sum::<f64>() / n as f64;
            for (i, p) in r.iter_mut().enumerate() {
                p[c] -= a * sign(i);
            }
        }
        Self::from_periodic(&r, self.class).expect("same grid")
    }

    /// Velocity samples `m + D r`.
    pub fn velocities(&self) -> Vec<[f64; 2]> {
        let m = self.class.vector();
        spectral::diff2(&self.periodic_part()).into_iter().map(|d| [d[0] + m[0], d[1] + m[1]]).collect()
    }

    pub fn from_periodic(r: &[[f64; 2]], class: HomotopyClass) -> Result<Self> {
        let n = r.len();
        let m = class.vector();
        Self::new(
            r.iter()
                .enumerate()
                .map(|(i, p)| {
                    let t = i as f64 / n as f64;
                    [p[0] + t * m[0], p[1] + t * m[1]]
                })
                .collect(),
            class,
        )
    }

    /// The loop `q(-t)` in class `-alpha`.
    pub fn reversed(&self) -> DiscreteLoop {
        let r = self.periodic_part();
        let n = r.len();
        let rr: Vec<[f64; 2]> = (0..n).map(|i| r[(n - i) % n]).collect();
        Self::from_periodic(&rr, self.class.reversed()).expect("reversal preserves the grid")
    }

    /// Trigonometric resampling on `n_new` points.
    pub fn resample(&self, n_new: usize) -> Result<DiscreteLoop> {
        check_grid(n_new)?;
        let ts: Vec<f64> = (0..n_new).map(|i| i as f64 / n_new as f64).collect();
        let r = spectral::interpolate(&self.periodic_part(), &ts);
        Self::from_periodic(&r, self.class)
    }

    /// The loop `t -> q(t + tau)`.
    pub fn time_shift(&self, tau: f64) -> DiscreteLoop {
        let n = self.len();
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 + tau).collect();
        let r = spectral::interpolate(&self.periodic_part(), &ts);
        let m = self.class.vector();
        let samples =
            r.iter().zip(&ts).map(|(p, t)| [p[0] + t * m[0], p[1] + t * m[1]]).collect();
        DiscreteLoop { samples, class: self.class }
    }

    /// Translate the lift by a deck transformation.
    pub fn deck(&self, shift: [i32; 2]) -> DiscreteLoop {
        let s = [shift[0] as f64, shift[1] as f64];
        DiscreteLoop {
            samples: self.samples.iter().map(|q| [q[0] + s[0], q[1] + s[1]]).collect(),
            class: self.class,
        }
    }

    /// Concatenate two loops sharing a base point, each run at double speed.
    pub fn concatenate(&self, other: &DiscreteLoop) -> Result<DiscreteLoop> {
        let n = self.len();
        if other.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: other.len() });
        }
        let first = self.resample(2 * n)?;
        let second = other.resample(2 * n)?;
        let m = self.class.vector();
        let off = [first.samples[0][0] + m[0] - second.samples[0][0], first.samples[0][1] + m[1] - second.samples[0][1]];
        let mut samples: Vec<[f64; 2]> = (0..n).map(|i| first.samples[2 * i]).collect();
        samples.extend((0..n).map(|i| [second.samples[2 * i][0] + off[0], second.samples[2 * i][1] + off[1]]));
        let class = HomotopyClass::new(self.class.m1 + other.class.m1, self.class.m2 + other.class.m2);
        DiscreteLoop::new(samples, class)
    }

    /// Flatten as `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|q| [q[0], q[1]]).collect()
    }

    pub fn from_flat(v: &[f64], class: HomotopyClass) -> Result<Self> {
        Self::new(v.chunks(2).map(|c| [c[0], c[1]]).collect(), class)
    }

    /// CSV rows `t,x,y` preceded by a header line naming the class.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# class {}\nt,x,y\n", self.class);
        for (i, q) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e}", self.t(i), q[0], q[1]);
        }
        s
    }

    /// Mean of `x_i - t_i m` reduced into one period.
    pub fn centroid(&self) -> [f64; 2] {
        let r = self.periodic_part();
        let n = r.len() as f64;
        [r.iter().map(|p| p[0]).sum::<f64>() / n, r.iter().map(|p| p[1]).sum::<f64>() / n]
    }

    /// Sup distance after reducing both lifts modulo the lattice.
    pub fn sup_distance(&self, other: &DiscreteLoop) -> f64 {
        let shift = [
            (other.samples[0][0] - self.samples[0][0]).round(),
            (other.samples[0][1] - self.samples[0][1]).round(),
        ];
        self.samples.iter().zip(&other.samples).fold(0.0, |d: f64, (a, b)| {
            let dx = b[0] - a[0] - shift[0];
            let dy = b[1] - a[1] - shift[1];
            d.max(dx.abs()).max(dy.abs())
        })
    }

    /// Smallest sup distance over time shifts `j/N`, optionally refined.
    pub fn aligned_distance(&self, other: &DiscreteLoop) -> (f64, f64) {
        let n = self.len();
        let mut best = (f64::INFINITY, 0.0);
        for j in 0..n {
            let tau = j as f64 / n as f64;
            let d = self.sup_distance(&other.time_shift(tau));
            if d < best.0 {
                best = (d, tau);
            }
        }
        let h = 1.0 / n as f64;
        let (mut lo, mut hi) = (best.1 - h, best.1 + h);
        for _ in 0..40 {
            let a = lo + (hi - lo) / 3.0;
            let b = hi - (hi - lo) / 3.0;
            if self.sup_distance(&other.time_shift(a)) < self.sup_distance(&other.time_shift(b)) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let tau = 0.5 * (lo + hi);
        let d = self.sup_distance(&other.time_shift(tau));
        if d < best.0 {
            (d, tau)
        } else {
            best
        }
    }
}

/// `int |q'|_g^2 dt` and the velocity samples.
pub fn loop_energy(model: &ManifoldModel, q: &DiscreteLoop) -> (f64, Vec<[f64; 2]>) {
    let v = q.velocities();
    let n = q.len() as f64;
    let e = q
        .samples
        .iter()
        .zip(&v)
        .map(|(p, w)| (2.0 * model.phi.value(*p)).exp() * (w[0] * w[0] + w[1] * w[1]))
        .sum::<f64>()
        / n;
    (e, v)
}

/// Gram matrix of the W^{1,2} inner product on `(zeta, b)` fields along `q`:
/// `(1/N)(M + C^T M C)` with `C = D + Gamma(q', .)`, plus a unit scalar slot.
pub fn w12_gram(model: &ManifoldModel, q: &DiscreteLoop) -> DMatrix<f64> {
    let n = q.len();
    let v = q.velocities();
    let d = spectral::diff_matrix(n);
    let mut c = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut mass = vec![1.0; n];
    for i in 0..n {
        let jet = model.phi.jet(q.samples[i]);
        mass[i] = (2.0 * jet.value).exp();
        let gam = christoffel(jet.grad);
        for j in 0..n {
            let w = d[(i, j)];
            if w != 0.0 {
                c[(2 * i, 2 * j)] = w;
                c[(2 * i + 1, 2 * j + 1)] = w;
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                c[(2 * i + a, 2 * i + b)] += gam[a][0][b] * v[i][0] + gam[a][1][b] * v[i][1];
            }
        }
    }
    let mut mc = c.clone();
    for i in 0..n {
        for r in 0..2 {
            for col in 0..2 * n {
                mc[(2 * i + r, col)] *= mass[i];
            }
        }
    }
    let ctmc = c.transpose() * mc;
    let mut g = DMatrix::<f64>::zeros(2 * n + 1, 2 * n + 1);
    g.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&ctmc);
    for i in 0..n {
        g[(2 * i, 2 * i)] += mass[i];
        g[(2 * i + 1, 2 * i + 1)] += mass[i];
    }
    g /= n as f64;
    g[(2 * n, 2 * n)] = 1.0;
    g
}

/// `<<(zeta, b), (vartheta, e)>>_g`.
pub fn w12_inner(model: &ManifoldModel, q: &DiscreteLoop, a: &TangentField, b: &TangentField) -> Result<f64> {
    let n = q.len();
    for f in [a, b] {
        if f.values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: f.values.len() });
        }
    }
    let v = q.velocities();
    let cov = |f: &TangentField| -> Vec<[f64; 2]> {
        let df = spectral::diff2(&f.values);
        (0..n)
            .map(|i| {
                let gam = christoffel(model.phi.jet(q.samples[i]).grad);
                let mut out = df[i];
                for k in 0..2 {
                    for (a_, va) in v[i].iter().enumerate() {
                        for b_ in 0..2 {
                            out[k] += gam[k][a_][b_] * va * f.values[i][b_];
                        }
                    }
                }
                out
            })
            .collect()
    };
    let da = cov(a);
    let db = cov(b);
    let mut acc = 0.0;
    for i in 0..n {
        let m = (2.0 * model.phi.value(q.samples[i])).exp();
        let za = a.values[i];
        let zb = b.values[i];
        acc += m * (za[0] * zb[0] + za[1] * zb[1] + da[i][0] * db[i][0] + da[i][1] * db[i][1]);
    }
    Ok(acc / n as f64 + a.scalar * b.scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;

    #[test]
    fn scalar_slot_only() {
        let m = ManifoldModel::flat();
        let q = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        let mut z = TangentField::zeros(32);
        z.scalar = 1.0;
        assert!((w12_inner(&m, &q, &z, &z).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_field() {
        let m = ManifoldModel::flat();
        let q = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        let z = TangentField { values: vec![[1.0, 0.0]; 32], scalar: 0.0 };
        assert!((w12_inner(&m, &q, &z, &z).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn sine_field_closed_form() {
        let m = ManifoldModel::flat();
        let n = 64;
        let q = DiscreteLoop::constant(n, [0.1, 0.2]).unwrap();
        let z = TangentField {
            values: (0..n).map(|i| [(2.0 * PI * i as f64 / n as f64).sin(), 0.0]).collect(),
            scalar: 0.0,
        };
        let expected = 0.5 + 2.0 * PI * PI;
        assert!((w12_inner(&m, &q, &z, &z).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = ManifoldModel::flat();
        let q = DiscreteLoop::constant(16, [0.0, 0.0]).unwrap();
        let z = TangentField::zeros(18);
        assert!(matches!(w12_inner(&m, &q, &z, &z), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gram_matches_inner_product() {
        let m = ManifoldModel { phi: FourierField::cosine(1, 1, 0.2), ..Default::default() };
        let n = 16;
        let q = DiscreteLoop::from_fn(n, HomotopyClass::new(1, 0), |t| [t, 0.1 * (2.0 * PI * t).sin()]).unwrap();
        let a = TangentField {
            values: (0..n).map(|i| [(i as f64).cos(), 0.3 * i as f64 / n as f64]).collect(),
            scalar: 0.4,
        };
        let b = TangentField { values: (0..n).map(|i| [0.2, (i as f64 * 0.7).sin()]).collect(), scalar: -1.1 };
        let g = w12_gram(&m, &q);
        let va = nalgebra::DVector::from_vec(a.to_vector());
        let vb = nalgebra::DVector::from_vec(b.to_vector());
        let via_gram = va.dot(&(&g * &vb));
        assert!((via_gram - w12_inner(&m, &q, &a, &b).unwrap()).abs() < 1e-11);
    }

    #[test]
    fn energy_examples() {
        let m = ManifoldModel::flat();
        let c = DiscreteLoop::constant(32, [0.3, 0.3]).unwrap();
        assert_eq!(loop_energy(&m, &c).0, 0.0);
        let s = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        assert!((loop_energy(&m, &s).0 - 1.0).abs() < 1e-14);
        let w = DiscreteLoop::from_fn(64, HomotopyClass::new(1, 0), |t| [t, 0.1 * (2.0 * PI * t).sin()]).unwrap();
        let expected = 1.0 + 0.01 * (2.0 * PI).powi(2) / 2.0;
        assert!((loop_energy(&m, &w).0 - expected).abs() < 1e-12);
    }

    #[test]
    fn resample_examples() {
        let m = ManifoldModel::flat();
        let c = DiscreteLoop::constant(32, [0.3, -0.2]).unwrap().resample(48).unwrap();
        assert!(c.samples.iter().all(|q| (q[0] - 0.3).abs() < 1e-14 && (q[1] + 0.2).abs() < 1e-14));
        let w = DiscreteLoop::from_fn(32, HomotopyClass::new(1, 1), |t| {
            [t + 0.05 * (4.0 * PI * t).cos(), t + 0.1 * (2.0 * PI * t).sin()]
        })
        .unwrap();
        let e0 = loop_energy(&m, &w).0;
        let e1 = loop_energy(&m, &w.resample(64).unwrap()).0;
        assert!((e0 - e1).abs() < 1e-10);
        let s = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.5]).unwrap();
        let h = s.resample(16).unwrap();
        for i in 0..16 {
            assert!((h.samples[i][0] - s.samples[2 * i][0]).abs() < 1e-14);
            assert!((h.samples[i][1] - s.samples[2 * i][1]).abs() < 1e-14);
        }
    }

    #[test]
    fn reversal_negates_class_and_keeps_energy() {
        let m = ManifoldModel::flat();
        let w = DiscreteLoop::from_fn(32, HomotopyClass::new(2, -1), |t| {
            [2.0 * t + 0.05 * (2.0 * PI * t).cos(), -t + 0.1 * (2.0 * PI * t).sin()]
        })
        .unwrap();
        let r = w.reversed();
        assert_eq!(r.class, HomotopyClass::new(-2, 1));
        assert!((loop_energy(&m, &w).0 - loop_energy(&m, &r).0).abs() < 1e-12);
        for (a, b) in r.reversed().samples.iter().zip(&w.samples) {
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn time_shift_alignment() {
        let w = DiscreteLoop::from_fn(32, HomotopyClass::new(1, 0), |t| [t, 0.1 * (2.0 * PI * t).sin()]).unwrap();
        let s = w.time_shift(0.3);
        let (d, _) = w.aligned_distance(&s);
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn nyquist_mode_is_stripped() {
        let w = DiscreteLoop::from_fn(32, HomotopyClass::new(1, 0), |t| [t, 0.1 * (2.0 * PI * t).sin()]).unwrap();
        let mut z = w.clone();
        for (i, q) in z.samples.iter_mut().enumerate() {
            q[0] += if i % 2 == 0 { 0.01 } else { -0.01 };
        }
        for (a, b) in z.velocities().iter().zip(w.velocities()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        assert!(z.without_nyquist().sup_distance(&w) < 1e-15);
        assert!(w.aligned_distance(&z.without_nyquist().time_shift(0.2)).0 < 1e-9);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(DiscreteLoop::constant(15, [0.0, 0.0]).is_err());
        assert!(DiscreteLoop::constant(8, [0.0, 0.0]).is_err());
    }
}
