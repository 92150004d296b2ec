//! Conformally flat 2-tori carrying a potential and a magnetic 2-form.
//!
//! The magnetic form is `sigma = B dx^dy + d(theta_ex)`. On the universal cover
//! we use the primitive `theta = B x dy + theta_ex`, which is bounded iff `B = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FourierField, Jet2};
use crate::loops::DiscreteLoop;

/// Quadrature points for the holonomy constant of the exact part.
const HOLONOMY_POINTS: usize = 256;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    /// Conformal factor: `g = exp(2 phi) (dx^2 + dy^2)`.
    #[serde(default)]
    pub phi: FourierField,
    #[serde(default, rename = "U")]
    pub potential: FourierField,
    #[serde(default, rename = "B")]
    pub flux: f64,
    #[serde(default)]
    pub theta_ex_x: FourierField,
    #[serde(default)]
    pub theta_ex_y: FourierField,
    /// Base point of the straight reference loops.
    #[serde(default)]
    pub reference_base: [f64; 2],
}

/// Free homotopy class of a torus loop, i.e. its winding vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct HomotopyClass {
    pub m1: i32,
    pub m2: i32,
}

impl From<[i32; 2]> for HomotopyClass {
    fn from(m: [i32; 2]) -> Self {
        HomotopyClass { m1: m[0], m2: m[1] }
    }
}

impl From<HomotopyClass> for [i32; 2] {
    fn from(c: HomotopyClass) -> Self {
        [c.m1, c.m2]
    }
}

impl HomotopyClass {
    pub const TRIVIAL: HomotopyClass = HomotopyClass { m1: 0, m2: 0 };

    pub fn new(m1: i32, m2: i32) -> Self {
        HomotopyClass { m1, m2 }
    }

    pub fn is_trivial(&self) -> bool {
        self.m1 == 0 && self.m2 == 0
    }

    pub fn reversed(&self) -> Self {
        HomotopyClass { m1: -self.m1, m2: -self.m2 }
    }

    pub fn vector(&self) -> [f64; 2] {
        [self.m1 as f64, self.m2 as f64]
    }
}

impl std::fmt::Display for HomotopyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.m1, self.m2)
    }
}

/// Straight representative `q0 + t m` of a class in cover coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceLoop {
    pub class: HomotopyClass,
    pub base: [f64; 2],
}

impl ReferenceLoop {
    pub fn at(&self, t: f64) -> [f64; 2] {
        let m = self.class.vector();
        [self.base[0] + t * m[0], self.base[1] + t * m[1]]
    }

    pub fn reversed(&self) -> Self {
        ReferenceLoop { class: self.class.reversed(), base: self.base }
    }
}

/// Everything the functionals need at one point of the cover.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalData {
    pub phi: Jet2,
    pub u: Jet2,
    /// Cover primitive `theta(q)`.
    pub theta: [f64; 2],
    /// `dtheta[a][b] = d_b theta_a`.
    pub dtheta: [[f64; 2]; 2],
    /// `ddtheta[a][b][c] = d_b d_c theta_a`.
    pub ddtheta: [[[f64; 2]; 2]; 2],
    /// Magnetic density `s` with `sigma = s dx^dy`.
    pub s: f64,
    pub grad_s: [f64; 2],
}

impl LocalData {
    /// `exp(2 phi)`.
    pub fn conformal(&self) -> f64 {
        (2.0 * self.phi.value).exp()
    }
}

impl ManifoldModel {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn with_potential(mut self, u: FourierField) -> Self {
        self.potential = u;
        self
    }

    pub fn with_flux(mut self, b: f64) -> Self {
        self.flux = b;
        self
    }

    pub fn with_exact(mut self, tx: FourierField, ty: FourierField) -> Self {
        self.theta_ex_x = tx;
        self.theta_ex_y = ty;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.phi.validate()?;
        self.potential.validate()?;
        self.theta_ex_x.validate()?;
        self.theta_ex_y.validate()?;
        if !self.flux.is_finite() || !self.reference_base.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn is_flat(&self) -> bool {
        self.phi.is_zero()
    }

    pub fn sigma_is_zero(&self) -> bool {
        self.flux == 0.0 && self.theta_ex_x.is_zero() && self.theta_ex_y.is_zero()
    }

    pub fn bounded_primitive_exists(&self) -> bool {
        self.flux == 0.0
    }

    pub fn local(&self, q: [f64; 2]) -> LocalData {
        let tx = self.theta_ex_x.jet(q);
        let ty = self.theta_ex_y.jet(q);
        let b = self.flux;
        let theta = [tx.value, ty.value + b * q[0]];
        let dtheta = [tx.grad, [ty.grad[0] + b, ty.grad[1]]];
        let ddtheta = [tx.hess, ty.hess];
        let s = dtheta[1][0] - dtheta[0][1];
        let grad_s = [ty.hess[0][0] - tx.hess[1][0], ty.hess[0][1] - tx.hess[1][1]];
        LocalData { phi: self.phi.jet(q), u: self.potential.jet(q), theta, dtheta, ddtheta, s, grad_s }
    }

    /// Metric matrix `exp(2 phi) I`.
    pub fn metric_at(&self, q: [f64; 2]) -> [[f64; 2]; 2] {
        let a = (2.0 * self.phi.value(q)).exp();
        [[a, 0.0], [0.0, a]]
    }

    /// Christoffel symbols `gamma[k][i][j]` of the conformal metric.
    pub fn christoffel_at(&self, q: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        christoffel(self.phi.jet(q).grad)
    }

    /// Lorentz map: `sigma(v, w) = <Y v, w>_g`.
    pub fn lorentz_at(&self, q: [f64; 2]) -> [[f64; 2]; 2] {
        let l = self.local(q);
        let c = l.s / l.conformal();
        [[0.0, -c], [c, 0.0]]
    }

    /// Cover primitive of the lifted magnetic form.
    pub fn primitive_at(&self, q: [f64; 2]) -> [f64; 2] {
        self.local(q).theta
    }

    pub fn reference_loop(&self, class: HomotopyClass) -> ReferenceLoop {
        let base = if class.is_trivial() { [0.0, 0.0] } else { self.reference_base };
        ReferenceLoop { class, base }
    }

    /// `I(alpha, theta)`: the primitive integrated over the reversed reference loop.
    pub fn holonomy_constant(&self, class: HomotopyClass) -> Result<f64> {
        if class.is_trivial() {
            return Ok(0.0);
        }
        if !self.bounded_primitive_exists() {
            return Err(Error::UnboundedPrimitive(self.flux));
        }
        let r = self.reference_loop(class);
        let m = class.vector();
        let n = HOLONOMY_POINTS;
        let mut acc = 0.0;
        for i in 0..n {
            let q = r.at(i as f64 / n as f64);
            acc += self.theta_ex_x.value(q) * m[0] + self.theta_ex_y.value(q) * m[1];
        }
        let value = -acc / n as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(value)
    }

    /// Flux of the magnetic form through a capping cylinder:
    /// `int theta(q) q' dt + I(alpha, theta)` on the cover.
    pub fn cap_flux(&self, q: &DiscreteLoop) -> Result<f64> {
        let hol = self.holonomy_constant(q.class)?;
        if self.sigma_is_zero() {
            return Ok(0.0);
        }
        let v = q.velocities();
        let n = q.len() as f64;
        let line: f64 = q
            .samples
            .iter()
            .zip(&v)
            .map(|(p, w)| {
                let th = self.primitive_at(*p);
                th[0] * w[0] + th[1] * w[1]
            })
            .sum::<f64>()
            / n;
        let value = line + hol;
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(value)
    }

    /// Pointwise magnetic density `s(q)`.
    pub fn magnetic_density(&self, q: [f64; 2]) -> f64 {
        self.local(q).s
    }

    /// Grid sup of `|theta_ex|_g`.
    pub fn exact_primitive_sup(&self) -> f64 {
        if self.theta_ex_x.is_zero() && self.theta_ex_y.is_zero() {
            return 0.0;
        }
        let m = 96;
        let mut best: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let q = [i as f64 / m as f64, j as f64 / m as f64];
                let t = [self.theta_ex_x.value(q), self.theta_ex_y.value(q)];
                let a = (-self.phi.value(q)).exp();
                best = best.max(a * t[0].hypot(t[1]));
            }
        }
        best
    }
}

/// Conformal Christoffel symbols from the gradient of `phi`.
pub fn christoffel(dphi: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
    let mut g = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let mut v = 0.0;
                if k == i {
                    v += dphi[j];
                }
                if k == j {
                    v += dphi[i];
                }
                if i == j {
                    v -= dphi[k];
                }
                g[k][i][j] = v;
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;
    use std::f64::consts::PI;

    fn wavy() -> ManifoldModel {
        ManifoldModel {
            phi: FourierField::cosine(1, 0, 0.1).plus(&FourierField::sine(1, 1, 0.05)),
            potential: FourierField::cosine(0, 1, 0.01),
            flux: 0.7,
            theta_ex_x: FourierField::sine(0, 1, 0.2),
            theta_ex_y: FourierField::cosine(1, -1, 0.1),
            reference_base: [0.0, 0.0],
        }
    }

    #[test]
    fn flat_metric_is_identity() {
        let m = ManifoldModel::flat();
        assert_eq!(m.metric_at([0.3, 0.9]), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.christoffel_at([0.3, 0.9]), [[[0.0; 2]; 2]; 2]);
    }

    #[test]
    fn conformal_metric_value() {
        let m = ManifoldModel { phi: FourierField::cosine(1, 0, 0.1), ..Default::default() };
        let g = m.metric_at([0.0, 0.0]);
        assert!((g[0][0] - 0.2f64.exp()).abs() < 1e-15);
        assert_eq!(g[0][1], 0.0);
    }

    #[test]
    fn christoffel_matches_metric_derivatives() {
        let m = wavy();
        let q = [0.21, 0.64];
        let gam = m.christoffel_at(q);
        // Gamma^k_ij = 1/2 g^{kl}(d_i g_lj + d_j g_li - d_l g_ij)
        let h = 1e-6;
        let dg = |l: usize| {
            let mut qp = q;
            let mut qm = q;
            qp[l] += h;
            qm[l] -= h;
            (m.metric_at(qp)[0][0] - m.metric_at(qm)[0][0]) / (2.0 * h)
        };
        let a = m.metric_at(q)[0][0];
        let d = [dg(0), dg(1)];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = 0.0;
                    if k == j {
                        v += d[i];
                    }
                    if k == i {
                        v += d[j];
                    }
                    if i == j {
                        v -= d[k];
                    }
                    v *= 0.5 / a;
                    assert!((v - gam[k][i][j]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn lorentz_examples() {
        let m = ManifoldModel::flat().with_flux(1.0);
        assert_eq!(m.lorentz_at([0.4, 0.1]), [[0.0, -1.0], [1.0, 0.0]]);
        let m2 = ManifoldModel::flat().with_flux(2.0);
        assert_eq!(m2.lorentz_at([0.0, 0.0]), [[0.0, -2.0], [2.0, 0.0]]);
        let z = ManifoldModel::flat();
        assert_eq!(z.lorentz_at([0.0, 0.0]), [[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn lorentz_represents_sigma() {
        let m = wavy();
        let q = [0.37, 0.81];
        let y = m.lorentz_at(q);
        let g = m.metric_at(q);
        let s = m.magnetic_density(q);
        let v = [0.3, -1.2];
        let w = [0.7, 0.4];
        let yv = [y[0][0] * v[0] + y[0][1] * v[1], y[1][0] * v[0] + y[1][1] * v[1]];
        let yw = [y[0][0] * w[0] + y[0][1] * w[1], y[1][0] * w[0] + y[1][1] * w[1]];
        let inner = |a: [f64; 2], b: [f64; 2]| g[0][0] * (a[0] * b[0] + a[1] * b[1]);
        let sigma = s * (v[0] * w[1] - v[1] * w[0]);
        assert!((inner(yv, w) - sigma).abs() < 1e-12);
        assert!((inner(yv, w) + inner(v, yw)).abs() < 1e-12);
    }

    #[test]
    fn primitive_examples() {
        let m = ManifoldModel::flat().with_flux(1.0);
        assert_eq!(m.primitive_at([3.5, 0.0]), [0.0, 3.5]);
        assert!(!m.bounded_primitive_exists());
        let z = ManifoldModel::flat();
        assert_eq!(z.primitive_at([0.2, 0.2]), [0.0, 0.0]);
        assert!(z.bounded_primitive_exists());
        let a = 0.3;
        let e = ManifoldModel::flat().with_exact(FourierField::sine(0, 1, a), FourierField::zero());
        let q = [0.1, 0.2];
        let th = e.primitive_at(q);
        assert!((th[0] - a * (2.0 * std::f64::consts::PI * 0.2).sin()).abs() < 1e-15);
        assert!(e.bounded_primitive_exists());
    }

    #[test]
    fn exterior_derivative_converges_at_second_order() {
        let m = wavy();
        let q = [0.43, 0.12];
        let exact = m.magnetic_density(q);
        let err = |h: f64| {
            let th = |p: [f64; 2]| m.primitive_at(p);
            let dy_dx = (th([q[0] + h, q[1]])[1] - th([q[0] - h, q[1]])[1]) / (2.0 * h);
            let dx_dy = (th([q[0], q[1] + h])[0] - th([q[0], q[1] - h])[0]) / (2.0 * h);
            (dy_dx - dx_dy - exact).abs()
        };
        let e1 = err(1e-2);
        let e2 = err(5e-3);
        assert!(e1 < 1e-2);
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
    }

    #[test]
    fn grad_s_matches_finite_differences() {
        let m = wavy();
        let q = [0.17, 0.58];
        let l = m.local(q);
        let h = 1e-6;
        for a in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[a] += h;
            qm[a] -= h;
            let fd = (m.magnetic_density(qp) - m.magnetic_density(qm)) / (2.0 * h);
            assert!((fd - l.grad_s[a]).abs() < 1e-6);
        }
    }

    #[test]
    fn holonomy_examples() {
        let a = 0.4;
        let mut m = ManifoldModel::flat().with_exact(FourierField::sine(0, 1, a), FourierField::zero());
        assert_eq!(m.holonomy_constant(HomotopyClass::TRIVIAL).unwrap(), 0.0);
        assert!(m.holonomy_constant(HomotopyClass::new(1, 0)).unwrap().abs() < 1e-15);
        m.reference_base = [0.0, 0.25];
        assert!((m.holonomy_constant(HomotopyClass::new(1, 0)).unwrap() + a).abs() < 1e-14);
        assert_eq!(ManifoldModel::flat().holonomy_constant(HomotopyClass::new(2, 1)).unwrap(), 0.0);
        let b = ManifoldModel::flat().with_flux(1.0);
        assert!(matches!(b.holonomy_constant(HomotopyClass::new(1, 0)), Err(Error::UnboundedPrimitive(_))));
        assert_eq!(b.holonomy_constant(HomotopyClass::TRIVIAL).unwrap(), 0.0);
    }

    #[test]
    fn cap_flux_of_disk_is_enclosed_flux() {
        let b = 1.3;
        let m = ManifoldModel::flat().with_flux(b);
        let r = 0.4;
        let c = DiscreteLoop::circle(64, [0.2, -0.1], r).unwrap();
        let f = m.cap_flux(&c).unwrap();
        assert!((f - b * PI * r * r).abs() < 1e-12);
        let cw = DiscreteLoop::circle(64, [0.2, -0.1], -r).unwrap();
        assert!((m.cap_flux(&cw).unwrap() + b * PI * r * r).abs() < 1e-12);
        assert!((m.cap_flux(&c.deck([3, -2])).unwrap() - f).abs() < 1e-12);
        assert_eq!(ManifoldModel::flat().cap_flux(&c).unwrap(), 0.0);
    }

    #[test]
    fn reference_loop_flux_cancels() {
        let mut m = ManifoldModel::flat()
            .with_exact(FourierField::sine(0, 1, 0.3), FourierField::cosine(1, 0, 0.2));
        m.reference_base = [0.1, 0.3];
        let class = HomotopyClass::new(1, 2);
        let q = DiscreteLoop::straight(64, class, m.reference_base).unwrap();
        assert!(m.cap_flux(&q).unwrap().abs() < 1e-13);
        let shifted = q.deck([1, 1]);
        assert!(m.cap_flux(&shifted).unwrap().abs() < 1e-13);
    }

    #[test]
    fn cap_flux_reversal_and_unbounded() {
        let m = wavy().with_flux(0.0);
        let q = DiscreteLoop::from_fn(64, HomotopyClass::new(1, 0), |t| {
            [t + 0.05 * (2.0 * PI * t).sin(), 0.2 + 0.1 * (4.0 * PI * t).cos()]
        })
        .unwrap();
        let f = m.cap_flux(&q).unwrap();
        let fr = m.cap_flux(&q.reversed()).unwrap();
        assert!((f + fr).abs() < 1e-12);
        let b = ManifoldModel::flat().with_flux(1.0);
        assert!(matches!(b.cap_flux(&q), Err(Error::UnboundedPrimitive(_))));
    }

    #[test]
    fn reversed_class() {
        let c = HomotopyClass::new(2, -3);
        assert_eq!(c.reversed(), HomotopyClass::new(-2, 3));
        let r = ManifoldModel::flat().reference_loop(c);
        let rr = r.reversed();
        assert_eq!(rr.at(0.3), r.at(-0.3));
    }

    #[test]
    fn model_json_shape() {
        let json = r#"{"phi": [], "U": [[0,1,0.01,0]], "B": 0.0, "theta_ex_x": [[0,1,0,-0.1]], "theta_ex_y": []}"#;
        let m: ManifoldModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.potential, FourierField::cosine(0, 1, 0.01));
        assert_eq!(m.theta_ex_x, FourierField::sine(0, 1, 0.1));
        m.validate().unwrap();
    }
}
