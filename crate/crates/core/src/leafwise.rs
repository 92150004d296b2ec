//! Moser pairs `(G, F)`, the perturbed Rabinowitz functional and leaf-wise
//! intersection points.
//!
//! Convention: `chi` is supported in `(0, 1/2)` and `F(t, .)` vanishes for
//! `t <= 1/2`, so on `[0, 1/2]` a critical loop follows the `H`-flow on the
//! level and on `[1/2, 1]` it follows `X_F`. The junction point `y = x(1/2)`
//! then satisfies `psi(y) = phi_H^{-eta}(y)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::free_time::LagCriticalPoint;
use crate::geometry::{HomotopyClass, ManifoldModel};
use crate::loops::DiscreteLoop;
use crate::ode::{dopri5, Dopri5Options};
use crate::rabinowitz::{ham_jet, hamiltonian, hamiltonian_vf, z_lift, LiftSign, PhaseLoop};
use crate::spectral;

/// `exp(1 - 1/(1 - s^2))` on `|s| < 1`, zero outside; equals 1 at 0.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// `d bump / ds`.
fn bump_d(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - s * s;
        -bump(s) * 2.0 * s / (d * d)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Smooth bump `chi` on the circle with unit mass and support `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiProfile {
    pub a: f64,
    pub b: f64,
    /// `int_a^b bump((2t - a - b)/(b - a)) dt`.
    pub norm: f64,
}

impl ChiProfile {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(0.0 < a && a < b && b < 0.5) {
            return Err(Error::Config(format!("chi support [{a}, {b}] must lie strictly inside (0, 1/2)")));
        }
        let mut p = ChiProfile { a, b, norm: 1.0 };
        p.norm = p.raw_integral(b);
        Ok(p)
    }

    fn raw_integral(&self, t: f64) -> f64 {
        let hi = t.clamp(self.a, self.b);
        if hi <= self.a {
            return 0.0;
        }
        let nodes = gauss_legendre(32);
        let panels = 16;
        let h = (hi - self.a) / panels as f64;
        let mut acc = 0.0;
        for j in 0..panels {
            let lo = self.a + j as f64 * h;
            for &(x, w) in &nodes {
                let t = lo + 0.5 * h * (x + 1.0);
                acc += 0.5 * h * w * bump((2.0 * t - self.a - self.b) / (self.b - self.a));
            }
        }
        acc
    }

    pub fn value(&self, t: f64) -> f64 {
        let t = t.rem_euclid(1.0);
        bump((2.0 * t - self.a - self.b) / (self.b - self.a)) / self.norm
    }

    /// `int_0^t chi` for `t` in `[0, 1]`.
    pub fn primitive(&self, t: f64) -> f64 {
        self.raw_integral(t) / self.norm
    }

    /// Independent trapezoid check of the unit mass.
    pub fn mass(&self, samples: usize) -> f64 {
        (0..samples).map(|i| self.value(i as f64 / samples as f64)).sum::<f64>() / samples as f64
    }
}

/// Space-time bump `F(t, q, p) = amp * bump_t(t) * bump(|q - qc|/rq) * bump(|p - pc|/rp)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FSpec {
    pub amplitude: f64,
    pub center_q: [f64; 2],
    pub center_p: [f64; 2],
    pub radius_q: f64,
    pub radius_p: f64,
    /// Active time interval, inside `(1/2, 1)`.
    pub window: [f64; 2],
}

impl FSpec {
    pub fn zero() -> Self {
        FSpec { amplitude: 0.0, center_q: [0.0; 2], center_p: [0.0; 2], radius_q: 0.1, radius_p: 0.1, window: [0.55, 0.95] }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        FSpec { amplitude, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let [t0, t1] = self.window;
        if !(0.5 < t0 && t0 < t1 && t1 < 1.0) {
            return Err(Error::Config(format!("F window [{t0}, {t1}] must lie strictly inside (1/2, 1)")));
        }
        if !(self.radius_q > 0.0 && self.radius_q < 0.5 && self.radius_p > 0.0) {
            return Err(Error::Config("F radii must be positive (and radius_q < 1/2)".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).unwrap_or_default();
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn time_factor(&self, t: f64) -> f64 {
        let [t0, t1] = self.window;
        let t = t.rem_euclid(1.0);
        bump((2.0 * t - t0 - t1) / (t1 - t0))
    }

    /// `(F, F_q, F_p)` at time `t`.
    pub fn jet(&self, t: f64, q: [f64; 2], p: [f64; 2]) -> (f64, [f64; 2], [f64; 2]) {
        let tf = self.time_factor(t);
        if self.amplitude == 0.0 || tf == 0.0 {
            return (0.0, [0.0; 2], [0.0; 2]);
        }
        let dq = [wrap(q[0] - self.center_q[0]), wrap(q[1] - self.center_q[1])];
        let dp = [p[0] - self.center_p[0], p[1] - self.center_p[1]];
        let radial = |d: [f64; 2], r: f64| -> (f64, [f64; 2]) {
            let n = d[0].hypot(d[1]);
            let s = n / r;
            let v = bump(s);
            if n < 1e-300 {
                return (v, [0.0; 2]);
            }
            let dv = bump_d(s) / (r * n);
            (v, [dv * d[0], dv * d[1]])
        };
        let (bq, gq) = radial(dq, self.radius_q);
        let (bp, gp) = radial(dp, self.radius_p);
        let c = self.amplitude * tf;
        (c * bq * bp, [c * gq[0] * bp, c * gq[1] * bp], [c * bq * gp[0], c * bq * gp[1]])
    }
}

fn wrap(x: f64) -> f64 {
    x - x.round()
}

/// Time-independent part of `G`: `beta(H - k)` with `beta(s) = s psi(s/w)`,
/// `psi = 1` on `[-1/2, 1/2]` and `0` outside `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoserPair {
    pub k: f64,
    pub chi: ChiProfile,
    pub beta_window: f64,
    pub f: FSpec,
    /// Sup over level samples of `|X_{G0} - X_H|`.
    pub vf_mismatch: f64,
}

fn smoothstep5(x: f64) -> (f64, f64) {
    let x = x.clamp(0.0, 1.0);
    (x * x * x * (10.0 - 15.0 * x + 6.0 * x * x), 30.0 * x * x * (1.0 - x) * (1.0 - x))
}

impl MoserPair {
    /// `(beta(s), beta'(s))`.
    pub fn beta(&self, s: f64) -> (f64, f64) {
        let w = self.beta_window;
        let r = s.abs() / w;
        let (sm, dsm) = smoothstep5(2.0 * r - 1.0);
        let psi = 1.0 - sm;
        let dpsi = -2.0 * dsm * s.signum() / w;
        (s * psi, psi + s * dpsi)
    }

    pub fn g0(&self, model: &ManifoldModel, q: [f64; 2], p: [f64; 2]) -> f64 {
        self.beta(hamiltonian(model, q, p) - self.k).0
    }

    /// `X_{G0} = beta'(H - k) X_H`.
    pub fn g0_vf(&self, model: &ManifoldModel, q: [f64; 2], p: [f64; 2]) -> [f64; 4] {
        let d = self.beta(hamiltonian(model, q, p) - self.k).1;
        let x = hamiltonian_vf(model, q, p);
        [d * x[0], d * x[1], d * x[2], d * x[3]]
    }

    pub fn f_vf(&self, model: &ManifoldModel, t: f64, q: [f64; 2], p: [f64; 2]) -> [f64; 4] {
        let (_, fq, fp) = self.f.jet(t, q, p);
        let s = model.magnetic_density(q);
        [fp[0], fp[1], -fq[0] + s * fp[1], -fq[1] - s * fp[0]]
    }

    /// `x' = eta chi(t) X_{G0}(x) + X_F(t, x)`.
    pub fn rhs(&self, model: &ManifoldModel, eta: f64, t: f64, x: [f64; 4]) -> [f64; 4] {
        let q = [x[0], x[1]];
        let p = [x[2], x[3]];
        let c = self.chi.value(t);
        let mut out = self.f_vf(model, t, q, p);
        if c != 0.0 {
            let g = self.g0_vf(model, q, p);
            for i in 0..4 {
                out[i] += eta * c * g[i];
            }
        }
        out
    }
}

/// Points `(q, p)` on the level `H = k` over a base grid and momentum angles.
fn level_samples(model: &ManifoldModel, k: f64) -> Vec<([f64; 2], [f64; 2])> {
    let mut out = Vec::new();
    for i in 0..12 {
        for j in 0..12 {
            let q = [i as f64 / 12.0, j as f64 / 12.0];
            let kin = k - model.potential.value(q);
            if kin <= 0.0 {
                continue;
            }
            let r = (2.0 * kin).sqrt() * model.phi.value(q).exp();
            for a in 0..8 {
                let th = 2.0 * PI * a as f64 / 8.0;
                out.push((q, [r * th.cos(), r * th.sin()]));
            }
        }
    }
    out
}

/// Build and check a Moser pair for `H` at the regular level `k`.
pub fn build_moser_pair(model: &ManifoldModel, k: f64, f: FSpec, chi: ChiProfile, beta_window: f64) -> Result<MoserPair> {
    f.validate()?;
    let e0 = model.potential.max_value();
    if !(k > e0) {
        return Err(Error::BadLevel(k));
    }
    if !(beta_window > 0.0) {
        return Err(Error::Config("beta window must be positive".into()));
    }
    // Sampled range of |H - k| over a box containing the level.
    let umin = model.potential.min_value();
    let mut sup_dev: f64 = 0.0;
    for i in 0..12 {
        for j in 0..12 {
            let q = [i as f64 / 12.0, j as f64 / 12.0];
            for pr in [0.0, 2.0 * (2.0 * (k - umin)).sqrt()] {
                sup_dev = sup_dev.max((hamiltonian(model, q, [pr, 0.0]) - k).abs());
            }
        }
    }
    if beta_window >= sup_dev {
        return Err(Error::Config(format!(
            "beta window {beta_window} collides with the sampled sup of |H - k| ({sup_dev:.3e})"
        )));
    }
    let mut pair = MoserPair { k, chi, beta_window, f, vf_mismatch: 0.0 };
    let mut worst: f64 = 0.0;
    for (q, p) in level_samples(model, k) {
        let a = pair.g0_vf(model, q, p);
        let b = hamiltonian_vf(model, q, p);
        for i in 0..4 {
            worst = worst.max((a[i] - b[i]).abs());
        }
    }
    pair.vf_mismatch = worst;
    Ok(pair)
}

/// `A^F_{G-k}(x, eta) = int x*omega - eta int G(t, x) - int F(t, x)`.
pub fn perturbed_action(model: &ManifoldModel, pair: &MoserPair, u: &PhaseLoop) -> Result<f64> {
    let flux = model.cap_flux(&u.base)?;
    let v = u.base.velocities();
    let n = u.len();
    let mut lam = 0.0;
    let mut g = 0.0;
    let mut f = 0.0;
    for i in 0..n {
        let t = i as f64 / n as f64;
        let q = u.base.samples[i];
        let p = u.momenta[i];
        lam += p[0] * v[i][0] + p[1] * v[i][1];
        g += pair.chi.value(t) * pair.g0(model, q, p);
        f += pair.f.jet(t, q, p).0;
    }
    let a = (lam - u.eta * g - f) / n as f64 + flux;
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(a)
}

/// `Z^+(cp)` reparametrized so that the orbit is traversed while `chi` is on:
/// `x(t) = z(X(t))` with `X` the primitive of `chi`.
pub fn reparametrized_lift(model: &ManifoldModel, cp: &LagCriticalPoint, chi: &ChiProfile, n: usize) -> Result<PhaseLoop> {
    let z = z_lift(model, cp, LiftSign::Plus)?;
    let ts: Vec<f64> = (0..n).map(|i| chi.primitive(i as f64 / n as f64)).collect();
    let r = spectral::interpolate(&z.base.periodic_part(), &ts);
    let p = spectral::interpolate(&z.momenta, &ts);
    let m = z.base.class.vector();
    let samples = r.iter().zip(&ts).map(|(a, s)| [a[0] + s * m[0], a[1] + s * m[1]]).collect();
    PhaseLoop::new(DiscreteLoop::new(samples, z.base.class)?, p, z.eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafwiseSeed {
    pub x0: [f64; 4],
    pub eta: f64,
    pub class: HomotopyClass,
}

impl LeafwiseSeed {
    /// Start on `Z^+(cp)` at the sample closest to `target` in the base.
    pub fn from_orbit(model: &ManifoldModel, cp: &LagCriticalPoint, target: [f64; 2]) -> Result<Self> {
        let z = z_lift(model, cp, LiftSign::Plus)?;
        let i = (0..z.len())
            .min_by(|&a, &b| {
                let d = |i: usize| {
                    let q = z.base.samples[i];
                    wrap(q[0] - target[0]).hypot(wrap(q[1] - target[1]))
                };
                d(a).total_cmp(&d(b))
            })
            .unwrap_or(0);
        let q = z.base.samples[i];
        let p = z.momenta[i];
        Ok(LeafwiseSeed { x0: [q[0], q[1], p[0], p[1]], eta: z.eta, class: z.base.class })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafwiseReport {
    pub eta: f64,
    pub x0: [f64; 4],
    pub junction_point: [f64; 4],
    pub psi_of_junction: [f64; 4],
    /// Flow time `tau` near `-eta` minimizing `|phi_H^tau(y) - psi(y)|`.
    pub flow_time: f64,
    pub verification_distance: f64,
    pub periodicity_error: f64,
    pub integral_constraint: f64,
    /// Sup of `|H(x(t)) - k|` over the `chi`-active half.
    pub energy_defect: f64,
    pub iterations: usize,
    pub f_spec_hash: String,
    pub passed: bool,
}

const VERIFY_TOL: f64 = 1e-5;

fn tight() -> Dopri5Options {
    Dopri5Options { rtol: 1e-12, atol: 1e-13, h_max: 1.0 / 128.0, ..Default::default() }
}

/// Integrate `x` with its variations in `(x0, eta)` and the constraint
/// `int chi G0` with its variations, over `[0, 1]`.
fn shoot(model: &ManifoldModel, pair: &MoserPair, x0: [f64; 4], eta: f64) -> Result<([f64; 4], [[f64; 5]; 4], f64, [f64; 5])> {
    let mut y0 = vec![0.0; 30];
    y0[..4].copy_from_slice(&x0);
    for i in 0..4 {
        y0[4 + 5 * i + i] = 1.0;
    }
    let f = |t: f64, y: &[f64], d: &mut [f64]| {
        let x = [y[0], y[1], y[2], y[3]];
        let fx = pair.rhs(model, eta, t, x);
        d[..4].copy_from_slice(&fx);
        // Jacobian in x by central differences of the vector field
        let mut jac = [[0.0; 4]; 4];
        for c in 0..4 {
            let h = 1e-6 * x[c].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let a = pair.rhs(model, eta, t, xp);
            let b = pair.rhs(model, eta, t, xm);
            for r in 0..4 {
                jac[r][c] = (a[r] - b[r]) / (2.0 * h);
            }
        }
        let chi = pair.chi.value(t);
        let q = [x[0], x[1]];
        let p = [x[2], x[3]];
        let (xg, dg) = if chi != 0.0 {
            let jet = ham_jet(model, q, p);
            let (b0, b1) = pair.beta(jet.h - pair.k);
            let xh = hamiltonian_vf(model, q, p);
            let dh = [jet.hq[0], jet.hq[1], jet.hp[0], jet.hp[1]];
            (
                [chi * b1 * xh[0], chi * b1 * xh[1], chi * b1 * xh[2], chi * b1 * xh[3]],
                (chi * b0, [chi * b1 * dh[0], chi * b1 * dh[1], chi * b1 * dh[2], chi * b1 * dh[3]]),
            )
        } else {
            ([0.0; 4], (0.0, [0.0; 4]))
        };
        for r in 0..4 {
            for c in 0..5 {
                let mut acc = 0.0;
                for m in 0..4 {
                    acc += jac[r][m] * y[4 + 5 * m + c];
                }
                if c == 4 {
                    acc += xg[r];
                }
                d[4 + 5 * r + c] = acc;
            }
        }
        d[24] = dg.0;
        for c in 0..5 {
            let mut acc = 0.0;
            for m in 0..4 {
                acc += dg.1[m] * y[4 + 5 * m + c];
            }
            d[25 + c] = acc;
        }
    };
    let out = dopri5(f, 0.0, &y0, 1.0, &tight(), |_, _| true)?;
    let y = out.y;
    let mut phi = [[0.0; 5]; 4];
    for r in 0..4 {
        for c in 0..5 {
            phi[r][c] = y[4 + 5 * r + c];
        }
    }
    Ok(([y[0], y[1], y[2], y[3]], phi, y[24], [y[25], y[26], y[27], y[28], y[29]]))
}

fn residual(x1: [f64; 4], x0: [f64; 4], class: HomotopyClass, g: f64) -> [f64; 5] {
    let m = class.vector();
    [x1[0] - x0[0] - m[0], x1[1] - x0[1] - m[1], x1[2] - x0[2], x1[3] - x0[3], g]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Integrate `rhs` from `t0` to `t1` (no variations).
fn flow(model: &ManifoldModel, pair: &MoserPair, eta: f64, x: [f64; 4], t0: f64, t1: f64) -> Result<[f64; 4]> {
    let f = |t: f64, y: &[f64], d: &mut [f64]| {
        let v = pair.rhs(model, eta, t, [y[0], y[1], y[2], y[3]]);
        d.copy_from_slice(&v);
    };
    let out = dopri5(f, t0, &x, t1, &tight(), |_, _| true)?;
    Ok([out.y[0], out.y[1], out.y[2], out.y[3]])
}

fn h_flow(model: &ManifoldModel, x: [f64; 4], tau: f64) -> Result<[f64; 4]> {
    let f = |_t: f64, y: &[f64], d: &mut [f64]| {
        let v = hamiltonian_vf(model, [y[0], y[1]], [y[2], y[3]]);
        d.copy_from_slice(&v);
    };
    let out = dopri5(f, 0.0, &x, tau, &tight(), |_, _| true)?;
    Ok([out.y[0], out.y[1], out.y[2], out.y[3]])
}

/// Distance in `T*T^2` with base coordinates taken modulo the lattice.
fn phase_distance(a: [f64; 4], b: [f64; 4]) -> f64 {
    let d = [wrap(a[0] - b[0]), wrap(a[1] - b[1]), a[2] - b[2], a[3] - b[3]];
    norm(&d)
}

/// Solve the perturbed critical-point equation from `seed` by damped
/// Gauss-Newton shooting, then verify the leaf-wise intersection.
pub fn find_leafwise(model: &ManifoldModel, pair: &MoserPair, seed: &LeafwiseSeed) -> Result<LeafwiseReport> {
    let mut x0 = seed.x0;
    let mut eta = seed.eta;
    let (mut x1, mut phi, mut g, mut dg) = shoot(model, pair, x0, eta)?;
    let mut r = residual(x1, x0, seed.class, g);
    let mut mu = 1e-10;
    let mut iterations = 0;
    while norm(&r) > 1e-11 && iterations < 60 {
        iterations += 1;
        let mut j = nalgebra::SMatrix::<f64, 5, 5>::zeros();
        for a in 0..4 {
            for c in 0..5 {
                j[(a, c)] = phi[a][c] - if a == c { 1.0 } else { 0.0 };
            }
        }
        for c in 0..5 {
            j[(4, c)] = dg[c];
        }
        let rv = nalgebra::SVector::<f64, 5>::from_column_slice(&r);
        let jtj = j.transpose() * j;
        let jtr = j.transpose() * rv;
        let mut improved = false;
        for _ in 0..20 {
            let scale = jtj.diagonal().max().max(1e-300);
            let a = jtj + nalgebra::SMatrix::<f64, 5, 5>::identity() * (mu * scale);
            let Some(step) = a.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let nx = [x0[0] + step[0], x0[1] + step[1], x0[2] + step[2], x0[3] + step[3]];
            let ne = eta + step[4];
            if let Ok((tx1, tphi, tg, tdg)) = shoot(model, pair, nx, ne) {
                let tr = residual(tx1, nx, seed.class, tg);
                if norm(&tr) < norm(&r) {
                    x0 = nx;
                    eta = ne;
                    x1 = tx1;
                    phi = tphi;
                    g = tg;
                    dg = tdg;
                    r = tr;
                    mu = (mu / 10.0).max(1e-14);
                    improved = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let _ = x1;
    let periodicity_error = norm(&r[..4]);
    if periodicity_error > 1e-8 || r[4].abs() > 1e-8 {
        return Err(Error::NoConvergence { iterations, residual: norm(&r) });
    }
    // energy on the chi-active half
    let mut energy_defect: f64 = 0.0;
    {
        let f = |t: f64, y: &[f64], d: &mut [f64]| {
            let v = pair.rhs(model, eta, t, [y[0], y[1], y[2], y[3]]);
            d.copy_from_slice(&v);
        };
        dopri5(f, 0.0, &x0, 0.5, &tight(), |_, y| {
            energy_defect = energy_defect.max((hamiltonian(model, [y[0], y[1]], [y[2], y[3]]) - pair.k).abs());
            true
        })?;
    }
    let y = flow(model, pair, eta, x0, 0.0, 0.5)?;
    let psi_y = flow(model, pair, eta, y, 0.5, 1.0)?;
    let dist = |tau: f64| -> f64 { h_flow(model, y, tau).map_or(f64::INFINITY, |z| phase_distance(z, psi_y)) };
    let width = 0.05 * eta.abs().max(1.0);
    let (mut lo, mut hi) = (-eta - width, -eta + width);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let (mut fc, mut fd) = (dist(c), dist(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = dist(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = dist(d);
        }
    }
    let mut best = (fc.min(fd), if fc < fd { c } else { d });
    let at_eta = dist(-eta);
    if at_eta < best.0 {
        best = (at_eta, -eta);
    }
    let passed = best.0 < VERIFY_TOL && energy_defect < 1e-6 && periodicity_error < 1e-8;
    Ok(LeafwiseReport {
        eta,
        x0,
        junction_point: y,
        psi_of_junction: psi_y,
        flow_time: best.1,
        verification_distance: best.0,
        periodicity_error,
        integral_constraint: g,
        energy_defect,
        iterations,
        f_spec_hash: pair.f.hash(),
        passed,
    })
}

/// Continuation in the amplitude of `F` from zero to its full value.
pub fn find_leafwise_homotopy(model: &ManifoldModel, pair: &MoserPair, seed: &LeafwiseSeed, steps: usize) -> Result<LeafwiseReport> {
    let mut s = seed.clone();
    let mut last = None;
    for j in 1..=steps.max(1) {
        let amp = pair.f.amplitude * j as f64 / steps.max(1) as f64;
        let p = MoserPair { f: pair.f.with_amplitude(amp), ..pair.clone() };
        let rep = find_leafwise(model, &p, &s)?;
        s = LeafwiseSeed { x0: rep.x0, eta: rep.eta, class: seed.class };
        last = Some(rep);
    }
    let mut rep = last.expect("at least one continuation step");
    rep.f_spec_hash = pair.f.hash();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;
    use crate::free_time::{self, FreeTimeConfig};

    fn pendulum() -> ManifoldModel {
        ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, 0.01))
    }

    fn orbit() -> LagCriticalPoint {
        let cfg = FreeTimeConfig::new(pendulum(), 0.5, 64);
        let seed = DiscreteLoop::straight(64, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        free_time::find_critical(&cfg, &seed, 1.0).unwrap()
    }

    fn chi() -> ChiProfile {
        ChiProfile::new(0.05, 0.45).unwrap()
    }

    fn small_f() -> FSpec {
        FSpec { amplitude: 1e-3, center_q: [0.5, 0.05], center_p: [1.0, 0.0], radius_q: 0.3, radius_p: 0.5, window: [0.55, 0.95] }
    }

    #[test]
    fn chi_has_unit_mass_and_support() {
        let c = chi();
        assert!((c.primitive(1.0) - 1.0).abs() < 1e-12);
        assert!((c.mass(4096) - 1.0).abs() < 1e-12);
        assert_eq!(c.value(0.05), 0.0);
        assert_eq!(c.value(0.7), 0.0);
        assert!(ChiProfile::new(0.1, 0.6).is_err());
    }

    #[test]
    fn moser_pair_matches_on_level() {
        let pair = build_moser_pair(&pendulum(), 0.5, FSpec::zero(), chi(), 0.1).unwrap();
        assert!(pair.vf_mismatch < 1e-10);
        let (b0, b1) = pair.beta(0.0);
        assert_eq!((b0, b1), (0.0, 1.0));
        assert!(build_moser_pair(&pendulum(), 0.5, FSpec::zero(), chi(), 100.0).is_err());
    }

    #[test]
    fn f_gradient_matches_differences() {
        let f = small_f();
        let (t, q, p) = (0.7, [0.45, 0.1], [0.9, 0.2]);
        let (_, fq, fp) = f.jet(t, q, p);
        let h = 1e-6;
        for a in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[a] += h;
            qm[a] -= h;
            assert!(((f.jet(t, qp, p).0 - f.jet(t, qm, p).0) / (2.0 * h) - fq[a]).abs() < 1e-9);
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            assert!(((f.jet(t, q, pp).0 - f.jet(t, q, pm).0) / (2.0 * h) - fp[a]).abs() < 1e-9);
        }
    }

    #[test]
    fn perturbed_action_examples() {
        let model = pendulum();
        let cp = orbit();
        let pair = build_moser_pair(&model, 0.5, FSpec::zero(), chi(), 0.1).unwrap();
        let u = reparametrized_lift(&model, &cp, &pair.chi, 512).unwrap();
        let a = perturbed_action(&model, &pair, &u).unwrap();
        assert!((a - cp.action).abs() < 1e-8, "{a} vs {}", cp.action);

        let p0 = crate::rabinowitz::level_point(&model, 0.5, [0.3, 0.2], 1.0).unwrap();
        let c = PhaseLoop::constant(64, [0.3, 0.2], p0, 3.7).unwrap();
        assert!(perturbed_action(&model, &pair, &c).unwrap().abs() < 1e-14);

        let pf = MoserPair { f: small_f(), ..pair };
        let c0 = PhaseLoop::constant(64, [0.5, 0.05], [1.0, 0.0], 0.0).unwrap();
        let expect = -(0..64).map(|i| pf.f.jet(i as f64 / 64.0, [0.5, 0.05], [1.0, 0.0]).0).sum::<f64>() / 64.0;
        assert!((perturbed_action(&model, &pf, &c0).unwrap() - expect).abs() < 1e-15);
        assert!(expect < 0.0);
    }

    #[test]
    fn unperturbed_leafwise_is_trivial() {
        let model = pendulum();
        let cp = orbit();
        let pair = build_moser_pair(&model, 0.5, FSpec::zero(), chi(), 0.1).unwrap();
        let seed = LeafwiseSeed::from_orbit(&model, &cp, [0.5, 0.0]).unwrap();
        let rep = find_leafwise(&model, &pair, &seed).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(phase_distance(rep.psi_of_junction, h_flow(&model, rep.junction_point, -rep.eta).unwrap()) < 1e-8);
    }

    #[test]
    fn small_bump_leafwise_point() {
        let model = pendulum();
        let cp = orbit();
        let pair = build_moser_pair(&model, 0.5, small_f(), chi(), 0.1).unwrap();
        let seed = LeafwiseSeed::from_orbit(&model, &cp, [0.5, 0.05]).unwrap();
        let rep = find_leafwise_homotopy(&model, &pair, &seed, 4).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.verification_distance < 1e-5);
        assert!(rep.periodicity_error < 1e-8);
        // the bump really moves the junction point
        assert!(phase_distance(rep.psi_of_junction, rep.junction_point) > 1e-6);
    }
}
