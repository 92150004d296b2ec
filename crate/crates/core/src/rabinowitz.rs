//! The Hamiltonian side: `H = |p|^2/2 + U` on the twisted cotangent bundle,
//! the Rabinowitz action
//! `A(x, eta) = int p q' dt + flux(q) - eta int (H - k) dt`,
//! its L^2 gradient, the lift of Lagrangian critical points, the discretized
//! gradient flow with its bound monitors, and the truncated Hamiltonian.
//!
//! Phase loops are flattened as `[r_0, p_0, r_1, p_1, ..., eta]` where `r_i` is
//! the periodic part of the base sample, so sample `i` owns coordinates
//! `4i..4i+4`.

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_time::{self, FreeTimeConfig, LagCriticalPoint};
use crate::geometry::{LocalData, ManifoldModel};
use crate::linalg;
use crate::loops::DiscreteLoop;
use crate::ode::{dopri5, Dopri5Options};
use crate::spectral;

/// A loop in `T*T^2` with its Lagrange multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLoop {
    pub base: DiscreteLoop,
    pub momenta: Vec<[f64; 2]>,
    pub eta: f64,
}

impl PhaseLoop {
    pub fn new(base: DiscreteLoop, momenta: Vec<[f64; 2]>, eta: f64) -> Result<Self> {
        if momenta.len() != base.len() {
            return Err(Error::DimensionMismatch { expected: base.len(), got: momenta.len() });
        }
        if !eta.is_finite() || momenta.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(PhaseLoop { base, momenta, eta })
    }

    /// Constant loop at `(q0, p0)`.
    pub fn constant(n: usize, q0: [f64; 2], p0: [f64; 2], eta: f64) -> Result<Self> {
        Self::new(DiscreteLoop::constant(n, q0)?, vec![p0; n], eta)
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let r = self.base.periodic_part();
        let mut z = Vec::with_capacity(4 * r.len() + 1);
        for (ri, pi) in r.iter().zip(&self.momenta) {
            z.extend_from_slice(&[ri[0], ri[1], pi[0], pi[1]]);
        }
        z.push(self.eta);
        z
    }

    pub fn from_flat(z: &[f64], class: crate::geometry::HomotopyClass) -> Result<Self> {
        if z.len() % 4 != 1 {
            return Err(Error::DimensionMismatch { expected: 4 * (z.len() / 4) + 1, got: z.len() });
        }
        let n = z.len() / 4;
        let r: Vec<[f64; 2]> = (0..n).map(|i| [z[4 * i], z[4 * i + 1]]).collect();
        let p: Vec<[f64; 2]> = (0..n).map(|i| [z[4 * i + 2], z[4 * i + 3]]).collect();
        Self::new(DiscreteLoop::from_periodic(&r, class)?, p, z[4 * n])
    }

    /// `(x^-, -eta)` with `x^-(t) = x(-t)`.
    pub fn reversed(&self) -> PhaseLoop {
        let n = self.len();
        let momenta = (0..n).map(|i| self.momenta[(n - i) % n]).collect();
        PhaseLoop { base: self.base.reversed(), momenta, eta: -self.eta }
    }

    pub fn sup_momentum(&self) -> f64 {
        self.momenta.iter().fold(0.0, |m: f64, p| m.max(p[0].hypot(p[1])))
    }

    /// Base distance after time-shift alignment, plus the multiplier gap.
    pub fn aligned_distance(&self, other: &PhaseLoop) -> f64 {
        if self.base.class != other.base.class {
            return f64::INFINITY;
        }
        self.base.aligned_distance(&other.base).0.max((self.eta - other.eta).abs())
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!("# class {} eta {:.17e}\nt,x,y,px,py\n", self.base.class, self.eta);
        for (i, (q, p)) in self.base.samples.iter().zip(&self.momenta).enumerate() {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", self.base.t(i), q[0], q[1], p[0], p[1]);
        }
        s
    }
}

/// Which almost complex structure defines the L^2 metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcsMode {
    /// The metric structure `J_g`; the L^2 metric is the Sasaki-type
    /// `diag(g, g^{-1})` in the chart splitting.
    #[default]
    MetricJ,
    /// Pointwise polar decomposition of the twisted form against the Sasaki
    /// metric.
    CompatibleJ,
}

/// `H_R = rho_R(H)` with `rho(t) = t` for `t <= 1 - delta` and constant for
/// `t >= 1 + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub radius: f64,
    pub delta: f64,
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// `int_0^u smoothstep`.
fn smoothstep_integral(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 0.5 + (u - 1.0);
    }
    u.powi(6) - 3.0 * u.powi(5) + 2.5 * u.powi(4)
}

impl Truncation {
    pub fn new(radius: f64) -> Self {
        Truncation { radius, delta: 0.1 }
    }

    /// `(rho_R(h), rho_R'(h))`.
    pub fn apply(&self, h: f64) -> (f64, f64) {
        let t = h / self.radius;
        let lo = 1.0 - self.delta;
        if t <= lo {
            return (h, 1.0);
        }
        let w = 2.0 * self.delta;
        let x = t - lo;
        let rho = lo + x - w * smoothstep_integral(x / w);
        (self.radius * rho, 1.0 - smoothstep(x / w))
    }

    /// Values of `H` below which `H_R = H`.
    pub fn identity_ceiling(&self) -> f64 {
        (1.0 - self.delta) * self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabinowitzConfig {
    pub model: ManifoldModel,
    pub k: f64,
    #[serde(default)]
    pub acs: AcsMode,
    #[serde(default)]
    pub truncation: Option<Truncation>,
}

impl RabinowitzConfig {
    pub fn new(model: ManifoldModel, k: f64) -> Self {
        RabinowitzConfig { model, k, acs: AcsMode::MetricJ, truncation: None }
    }

    pub fn with_acs(mut self, acs: AcsMode) -> Self {
        self.acs = acs;
        self
    }

    /// Attach `H_R`; requires `R > 2k + sup|U|`.
    pub fn truncated(mut self, radius: f64) -> Result<Self> {
        let required = 2.0 * self.k + self.model.potential.sup_bound();
        if !(radius > required) {
            return Err(Error::RadiusTooSmall { radius, required });
        }
        self.truncation = Some(Truncation::new(radius));
        Ok(self)
    }

    fn lagrangian(&self, n: usize) -> FreeTimeConfig {
        FreeTimeConfig::new(self.model.clone(), self.k, n)
    }
}

/// Pointwise Hamiltonian jet.
#[derive(Debug, Clone, Copy)]
pub struct HamJet {
    pub local: LocalData,
    pub h: f64,
    pub hq: [f64; 2],
    pub hp: [f64; 2],
    pub hqq: [[f64; 2]; 2],
    /// `hqp[b][a] = d_{q_b} d_{p_a} H`.
    pub hqp: [[f64; 2]; 2],
    /// `d_p d_p H = hpp * I`.
    pub hpp: f64,
}

/// Untruncated jet of `H = exp(-2 phi)|p|^2 / 2 + U`.
pub fn ham_jet(model: &ManifoldModel, q: [f64; 2], p: [f64; 2]) -> HamJet {
    let l = model.local(q);
    let e = (-2.0 * l.phi.value).exp();
    let pp = p[0] * p[0] + p[1] * p[1];
    let g = l.phi.grad;
    let mut hqq = [[0.0; 2]; 2];
    let mut hqp = [[0.0; 2]; 2];
    for b in 0..2 {
        for c in 0..2 {
            hqq[b][c] = e * pp * (2.0 * g[b] * g[c] - l.phi.hess[b][c]) + l.u.hess[b][c];
            hqp[b][c] = -2.0 * g[b] * e * p[c];
        }
    }
    HamJet {
        local: l,
        h: 0.5 * e * pp + l.u.value,
        hq: [-e * pp * g[0] + l.u.grad[0], -e * pp * g[1] + l.u.grad[1]],
        hp: [e * p[0], e * p[1]],
        hqq,
        hqp,
        hpp: e,
    }
}

/// Jet of the (possibly truncated) Hamiltonian; second derivatives are only
/// meaningful without truncation.
fn jet(cfg: &RabinowitzConfig, q: [f64; 2], p: [f64; 2]) -> HamJet {
    let mut j = ham_jet(&cfg.model, q, p);
    if let Some(tr) = cfg.truncation {
        let (h, d) = tr.apply(j.h);
        j.h = h;
        for a in 0..2 {
            j.hq[a] *= d;
            j.hp[a] *= d;
        }
    }
    j
}

pub fn hamiltonian(model: &ManifoldModel, q: [f64; 2], p: [f64; 2]) -> f64 {
    ham_jet(model, q, p).h
}

fn vf_from_jet(j: &HamJet) -> [f64; 4] {
    let s = j.local.s;
    [j.hp[0], j.hp[1], -j.hq[0] + s * j.hp[1], -j.hq[1] - s * j.hp[0]]
}

/// `X_H = (H_p, -H_q + s (H_p^y, -H_p^x))` in chart coordinates.
pub fn hamiltonian_vf(model: &ManifoldModel, q: [f64; 2], p: [f64; 2]) -> [f64; 4] {
    vf_from_jet(&ham_jet(model, q, p))
}

/// `X_H` of the configured (possibly truncated) Hamiltonian.
pub fn config_vf(cfg: &RabinowitzConfig, q: [f64; 2], p: [f64; 2]) -> [f64; 4] {
    vf_from_jet(&jet(cfg, q, p))
}

/// Matrix of the twisted form `omega(a, b) = a^T Omega b` in `(q, p)` order.
pub fn omega_matrix(s: f64) -> Matrix4<f64> {
    Matrix4::new(
        0.0, s, -1.0, 0.0, //
        -s, 0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    )
}

/// Sasaki-type metric `diag(g, g^{-1})` for the conformal factor `a = exp(2 phi)`.
pub fn sasaki_metric(a: f64) -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(a, a, 1.0 / a, 1.0 / a))
}

/// `J = -G^{-1/2} B (B^T B)^{-1/2} G^{1/2}` with `B = G^{-1/2} Omega G^{-1/2}`.
fn polar_j(a: f64, s: f64) -> Matrix4<f64> {
    let sq = nalgebra::Vector4::new(a.sqrt(), a.sqrt(), 1.0 / a.sqrt(), 1.0 / a.sqrt());
    let gh = Matrix4::from_diagonal(&sq);
    let gih = Matrix4::from_diagonal(&sq.map(|v| 1.0 / v));
    let b = gih * omega_matrix(s) * gih;
    let btb = b.transpose() * b;
    let eig = SymmetricEigen::new(btb);
    let inv_sqrt = eig.eigenvectors * Matrix4::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * eig.eigenvectors.transpose();
    -(gih * b * inv_sqrt * gh)
}

/// Almost complex structure at a point for the chosen mode.
pub fn acs_at(model: &ManifoldModel, mode: AcsMode, q: [f64; 2]) -> Matrix4<f64> {
    let l = model.local(q);
    match mode {
        AcsMode::MetricJ => polar_j(l.conformal(), 0.0),
        AcsMode::CompatibleJ => polar_j(l.conformal(), l.s),
    }
}

/// Pointwise metric of the L^2 product: Sasaki in metric mode, `omega(., J .)`
/// in compatible mode.
pub fn pointwise_metric(model: &ManifoldModel, mode: AcsMode, q: [f64; 2]) -> Matrix4<f64> {
    let l = model.local(q);
    match mode {
        AcsMode::MetricJ => sasaki_metric(l.conformal()),
        AcsMode::CompatibleJ => {
            let m = omega_matrix(l.s) * polar_j(l.conformal(), l.s);
            (m + m.transpose()) * 0.5
        }
    }
}

/// Sup over a grid of `|J - J_g|` (entrywise max).
pub fn acs_deviation(model: &ManifoldModel) -> f64 {
    let m = 24;
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let q = [i as f64 / m as f64, j as f64 / m as f64];
            let d = acs_at(model, AcsMode::CompatibleJ, q) - acs_at(model, AcsMode::MetricJ, q);
            worst = worst.max(d.amax());
        }
    }
    worst
}

/// A constant `b0` with `|X_H(q, p)| <= b0 (1 + |p|^2)` in the Sasaki norm:
/// the grid supremum of the ratio with a 10% margin.
pub fn b0_constant(model: &ManifoldModel) -> f64 {
    let m = 24;
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let q = [i as f64 / m as f64, j as f64 / m as f64];
            let a = (2.0 * model.phi.value(q)).exp();
            let g = sasaki_metric(a);
            for r in 0..60 {
                let rad = 1e-3 * 1.25f64.powi(r);
                for th in 0..16 {
                    let ang = th as f64 * std::f64::consts::PI / 8.0;
                    // |p|_{g*} = rad
                    let p = [rad * a.sqrt() * ang.cos(), rad * a.sqrt() * ang.sin()];
                    let x = nalgebra::Vector4::from(hamiltonian_vf(model, q, p));
                    let norm = (x.transpose() * g * x)[0].sqrt();
                    worst = worst.max(norm / (1.0 + rad * rad));
                }
            }
        }
    }
    1.1 * worst
}

struct Eval {
    jets: Vec<HamJet>,
    v: Vec<[f64; 2]>,
}

fn evaluate(cfg: &RabinowitzConfig, u: &PhaseLoop) -> Eval {
    Eval {
        jets: u.base.samples.iter().zip(&u.momenta).map(|(q, p)| jet(cfg, *q, *p)).collect(),
        v: u.base.velocities(),
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `A_{H-k}(x, eta)`.
pub fn action(cfg: &RabinowitzConfig, u: &PhaseLoop) -> Result<f64> {
    let flux = cfg.model.cap_flux(&u.base)?;
    let ev = evaluate(cfg, u);
    let n = u.len() as f64;
    let lam: f64 = u.momenta.iter().zip(&ev.v).map(|(p, v)| dot(*p, *v)).sum::<f64>() / n;
    let mean_h: f64 = ev.jets.iter().map(|j| j.h - cfg.k).sum::<f64>() / n;
    let a = lam + flux - u.eta * mean_h;
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(a)
}

/// `int (H - k) dt`.
pub fn mean_energy_defect(cfg: &RabinowitzConfig, u: &PhaseLoop) -> f64 {
    let n = u.len() as f64;
    u.base.samples.iter().zip(&u.momenta).map(|(q, p)| jet(cfg, *q, *p).h - cfg.k).sum::<f64>() / n
}

/// Differential in the flattened coordinates.
pub fn differential(cfg: &RabinowitzConfig, u: &PhaseLoop) -> Result<Vec<f64>> {
    cfg.model.holonomy_constant(u.base.class)?;
    let n = u.len();
    let ev = evaluate(cfg, u);
    let w: Vec<[f64; 2]> = u
        .momenta
        .iter()
        .zip(&ev.jets)
        .map(|(p, j)| [p[0] + j.local.theta[0], p[1] + j.local.theta[1]])
        .collect();
    let dtw = spectral::diff2_t(&w);
    let nf = n as f64;
    let mut d = vec![0.0; 4 * n + 1];
    let mut mean_h = 0.0;
    for i in 0..n {
        let j = &ev.jets[i];
        let v = ev.v[i];
        let dt = &j.local.dtheta;
        for b in 0..2 {
            let mv = dt[0][b] * v[0] + dt[1][b] * v[1];
            d[4 * i + b] = (dtw[i][b] + mv - u.eta * j.hq[b]) / nf;
            d[4 * i + 2 + b] = (v[b] - u.eta * j.hp[b]) / nf;
        }
        mean_h += j.h - cfg.k;
    }
    d[4 * n] = -mean_h / nf;
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(d)
}

/// Per-sample metric blocks of the L^2 product (without the `1/N` weight).
pub fn metric_blocks(cfg: &RabinowitzConfig, u: &PhaseLoop) -> Vec<Matrix4<f64>> {
    u.base.samples.iter().map(|q| pointwise_metric(&cfg.model, cfg.acs, *q)).collect()
}

/// Dense L^2 Gram `(1/N) blockdiag(G_i) + 1` in the flattened coordinates.
pub fn l2_gram(cfg: &RabinowitzConfig, u: &PhaseLoop) -> DMatrix<f64> {
    let n = u.len();
    let mut g = DMatrix::zeros(4 * n + 1, 4 * n + 1);
    for (i, b) in metric_blocks(cfg, u).iter().enumerate() {
        for r in 0..4 {
            for c in 0..4 {
                g[(4 * i + r, 4 * i + c)] = b[(r, c)] / n as f64;
            }
        }
    }
    g[(4 * n, 4 * n)] = 1.0;
    g
}

/// L^2 gradient (flattened) and its norm.
pub fn l2_gradient(cfg: &RabinowitzConfig, u: &PhaseLoop) -> Result<(Vec<f64>, f64)> {
    let d = differential(cfg, u)?;
    let n = u.len();
    let blocks = metric_blocks(cfg, u);
    let mut g = vec![0.0; 4 * n + 1];
    let mut norm2 = 0.0;
    for (i, b) in blocks.iter().enumerate() {
        let rhs = nalgebra::Vector4::new(d[4 * i], d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]) * n as f64;
        let x = b.cholesky().ok_or_else(|| Error::LinearSolve("pointwise metric not positive definite".into()))?.solve(&rhs);
        for c in 0..4 {
            g[4 * i + c] = x[c];
        }
        norm2 += rhs.dot(&x) / n as f64;
    }
    g[4 * n] = d[4 * n];
    norm2 += d[4 * n] * d[4 * n];
    Ok((g, norm2.sqrt()))
}

/// Sup over samples of `|x' - eta X_H(x)|` and of `|H - k|`.
pub fn critical_residual(cfg: &RabinowitzConfig, u: &PhaseLoop) -> (f64, f64) {
    let v = u.base.velocities();
    let pd = spectral::diff2(&u.momenta);
    let mut res: f64 = 0.0;
    let mut lev: f64 = 0.0;
    for i in 0..u.len() {
        let j = jet(cfg, u.base.samples[i], u.momenta[i]);
        let x = vf_from_jet(&j);
        let xd = [v[i][0], v[i][1], pd[i][0], pd[i][1]];
        for c in 0..4 {
            res = res.max((xd[c] - u.eta * x[c]).abs());
        }
        lev = lev.max((j.h - cfg.k).abs());
    }
    (res, lev)
}

/// Analytic Hessian of the untruncated functional, size `(4N+1)^2`.
pub fn hessian(cfg: &RabinowitzConfig, u: &PhaseLoop) -> Result<DMatrix<f64>> {
    if cfg.truncation.is_some() {
        return Err(Error::Config("Hessian is only available without truncation".into()));
    }
    cfg.model.holonomy_constant(u.base.class)?;
    let n = u.len();
    let dm = spectral::diff_matrix(n);
    let ev = evaluate(cfg, u);
    let eta = u.eta;
    let mut h = DMatrix::<f64>::zeros(4 * n + 1, 4 * n + 1);
    for i in 0..n {
        let j = &ev.jets[i];
        let v = ev.v[i];
        let l = &j.local;
        for b in 0..2 {
            for c in 0..2 {
                h[(4 * i + b, 4 * i + c)] +=
                    l.ddtheta[0][b][c] * v[0] + l.ddtheta[1][b][c] * v[1] - eta * j.hqq[b][c];
                h[(4 * i + b, 4 * i + 2 + c)] -= eta * j.hqp[b][c];
                h[(4 * i + 2 + c, 4 * i + b)] -= eta * j.hqp[b][c];
            }
            h[(4 * i + 2 + b, 4 * i + 2 + b)] -= eta * j.hpp;
            h[(4 * i + b, 4 * n)] = -j.hq[b];
            h[(4 * n, 4 * i + b)] = -j.hq[b];
            h[(4 * i + 2 + b, 4 * n)] = -j.hp[b];
            h[(4 * n, 4 * i + 2 + b)] = -j.hp[b];
        }
    }
    for a in 0..n {
        for c in 0..n {
            let dac = dm[(a, c)];
            let dca = dm[(c, a)];
            if dac == 0.0 && dca == 0.0 {
                continue;
            }
            let ta = &ev.jets[a].local.dtheta;
            let tc = &ev.jets[c].local.dtheta;
            for b in 0..2 {
                for e in 0..2 {
                    // d_b theta_e (q_a) D_ac + d_e theta_b (q_c) D_ca
                    h[(4 * a + b, 4 * c + e)] += ta[e][b] * dac + tc[b][e] * dca;
                }
                // r_a,b against p_c,b: D_ca
                h[(4 * a + b, 4 * c + 2 + b)] += dca;
                h[(4 * c + 2 + b, 4 * a + b)] += dca;
            }
        }
    }
    h /= n as f64;
    h[(4 * n, 4 * n)] = 0.0;
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(h)
}

/// Result of a Rabinowitz critical-point solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabCriticalPoint {
    pub state: PhaseLoop,
    pub action: f64,
    pub grad_norm: f64,
    pub orbit_residual: f64,
    pub level_residual: f64,
    pub iterations: usize,
}

/// Levenberg-damped Newton on `dA = 0` against the L^2 Gram.
pub fn find_critical(cfg: &RabinowitzConfig, seed: &PhaseLoop, tol: f64, max_iter: usize) -> Result<RabCriticalPoint> {
    let class = seed.base.class;
    let mut u = seed.clone();
    let mut g = l2_gradient(cfg, &u)?.1;
    let mut mu = 1e-3;
    let mut it = 0;
    while g > tol {
        if it >= max_iter {
            return Err(Error::NoConvergence { iterations: it, residual: g });
        }
        it += 1;
        let h = hessian(cfg, &u)?;
        let gram = l2_gram(cfg, &u);
        let d = DVector::from_vec(differential(cfg, &u)?);
        let z = DVector::from_vec(u.to_flat());
        let mut accepted = false;
        for _ in 0..30 {
            let m = &h + &gram * mu;
            let step = match linalg::solve(&m, &(-&d)) {
                Ok(s) => s,
                Err(_) => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial = match PhaseLoop::from_flat((&z + &step).as_slice(), class) {
                Ok(t) => t,
                Err(_) => {
                    mu *= 10.0;
                    continue;
                }
            };
            match l2_gradient(cfg, &trial) {
                Ok((_, gt)) if gt < g => {
                    u = trial;
                    g = gt;
                    mu = (mu * 0.1).max(1e-14);
                    accepted = true;
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations: it, residual: g });
        }
    }
    let (orbit_residual, level_residual) = critical_residual(cfg, &u);
    Ok(RabCriticalPoint { action: action(cfg, &u)?, state: u, grad_norm: g, orbit_residual, level_residual, iterations: it })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftSign {
    Plus,
    Minus,
}

/// `Z^+(q, T) = ((q, g q'/T), T)` and `Z^-(q, T) = ((q, g q'/T)^-, -T)`.
pub fn z_lift(model: &ManifoldModel, cp: &LagCriticalPoint, sign: LiftSign) -> Result<PhaseLoop> {
    if !(cp.residual < 1e-6) {
        return Err(Error::NoConvergence { iterations: 0, residual: cp.residual });
    }
    let t = cp.period;
    let v = cp.curve.velocities();
    let momenta = cp
        .curve
        .samples
        .iter()
        .zip(&v)
        .map(|(q, w)| {
            let a = (2.0 * model.phi.value(*q)).exp();
            [a * w[0] / t, a * w[1] / t]
        })
        .collect();
    let plus = PhaseLoop::new(cp.curve.clone(), momenta, t)?;
    Ok(match sign {
        LiftSign::Plus => plus,
        LiftSign::Minus => plus.reversed(),
    })
}

/// Slacks of `A(x, eta) <= S(pi x, eta)` and `A(x^-, -eta) >= -S(pi x, eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionComparison {
    pub rabinowitz: f64,
    pub rabinowitz_reversed: f64,
    pub lagrangian: f64,
    pub slack_plus: f64,
    pub slack_minus: f64,
    /// `(eta/2) int |p - g q'/eta|^2_{g*}`, the Fenchel gap by quadrature.
    pub fenchel_gap: f64,
    pub momentum_mismatch: f64,
    pub equality: bool,
}

pub fn compare_actions(cfg: &RabinowitzConfig, x: &PhaseLoop, tol: f64) -> Result<ActionComparison> {
    if !(x.eta > 0.0) {
        return Err(Error::NonPositivePeriod(x.eta));
    }
    let plain = RabinowitzConfig { truncation: None, ..cfg.clone() };
    let eta = x.eta;
    let a = action(&plain, x)?;
    let ar = action(&plain, &x.reversed())?;
    let s = free_time::action(&plain.lagrangian(x.len()), &x.base, eta)?;
    let v = x.base.velocities();
    let n = x.len() as f64;
    let mut gap = 0.0;
    let mut mismatch: f64 = 0.0;
    for ((q, p), w) in x.base.samples.iter().zip(&x.momenta).zip(&v) {
        let a2 = (2.0 * cfg.model.phi.value(*q)).exp();
        let d = [p[0] - a2 * w[0] / eta, p[1] - a2 * w[1] / eta];
        gap += 0.5 * eta * dot(d, d) / a2;
        mismatch = mismatch.max(d[0].abs()).max(d[1].abs());
    }
    gap /= n;
    Ok(ActionComparison {
        rabinowitz: a,
        rabinowitz_reversed: ar,
        lagrangian: s,
        slack_plus: s - a,
        slack_minus: ar + s,
        fenchel_gap: gap,
        momentum_mismatch: mismatch,
        equality: mismatch < tol,
    })
}

/// Kernel data of the second variation at a constant loop `(x0, eta = 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantKernel {
    pub kernel_dim: usize,
    /// Sorted eigenvalue magnitudes (smallest first, a few only).
    pub smallest: Vec<f64>,
    /// `|lambda_4| / |lambda_3|`.
    pub gap_ratio: f64,
}

/// Near-zero count of the Nyquist-reduced Hessian at a constant loop on `Sigma_k`.
pub fn constant_hessian_kernel(cfg: &RabinowitzConfig, q0: [f64; 2], p0: [f64; 2], n: usize) -> Result<ConstantKernel> {
    if cfg.k < cfg.model.potential.min_value() {
        return Err(Error::BadLevel(cfg.k));
    }
    let j = ham_jet(&cfg.model, q0, p0);
    let scale = 1.0 + cfg.k.abs();
    if (j.h - cfg.k).abs() > 1e-10 * scale {
        return Err(Error::BadLevel(cfg.k));
    }
    let dh = (j.hq[0].powi(2) + j.hq[1].powi(2) + j.hp[0].powi(2) + j.hp[1].powi(2)).sqrt();
    if dh < 1e-10 {
        return Err(Error::BadLevel(cfg.k));
    }
    let u = PhaseLoop::constant(n, q0, p0, 0.0)?;
    let plain = RabinowitzConfig { truncation: None, ..cfg.clone() };
    let h = spectral::reduce_nyquist(&hessian(&plain, &u)?, n, 4, 1);
    let g = spectral::reduce_nyquist(&l2_gram(&plain, &u), n, 4, 1);
    let ev = linalg::generalized_eigenvalues(&h, &g)?;
    let mut mags: Vec<f64> = ev.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let top = mags.last().copied().unwrap_or(0.0);
    let tol = 1e-8 * top.max(1.0);
    let kernel_dim = mags.iter().filter(|m| **m <= tol).count();
    let gap_ratio = if mags.len() > 3 { mags[3] / mags[2].max(f64::MIN_POSITIVE) } else { 0.0 };
    Ok(ConstantKernel { kernel_dim, smallest: mags.iter().take(6).copied().collect(), gap_ratio })
}

/// Random point of `Sigma_k` above `q0` with momentum direction `angle`.
pub fn level_point(model: &ManifoldModel, k: f64, q0: [f64; 2], angle: f64) -> Result<[f64; 2]> {
    let u = model.potential.value(q0);
    if k <= u {
        return Err(Error::BadLevel(k));
    }
    let a = (2.0 * model.phi.value(q0)).exp();
    let r = (2.0 * a * (k - u)).sqrt();
    Ok([r * angle.cos(), r * angle.sin()])
}

/// `(delta, D, rho1, C0)` of the multiplier bound and its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaBound {
    pub band: f64,
    /// Infimum of `lambda(X_H)` over the band, which is `2 delta`.
    pub inf_lambda: f64,
    pub delta: f64,
    pub d_sup: f64,
    pub holonomy: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub c0: f64,
    pub a: f64,
    pub b: f64,
}

/// `(inf lambda(X_H), sup dual norm of lambda)` over the band `|H - k| <= w`.
fn band_extrema(model: &ManifoldModel, k: f64, w: f64) -> Result<(f64, f64)> {
    let m = 48;
    let levels = [k - w, k - 0.5 * w, k, k + 0.5 * w, k + w];
    let mut inf = f64::INFINITY;
    let mut sup: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let q = [i as f64 / m as f64, j as f64 / m as f64];
            let l = model.local(q);
            let th = [model.theta_ex_x.value(q), model.theta_ex_y.value(q)];
            let a = l.conformal();
            let gsq = sasaki_metric(a).map(|v| v.sqrt());
            let om_inv_t = omega_matrix(l.s).try_inverse().expect("twisted form is nondegenerate").transpose();
            for &lev in &levels {
                if lev <= l.u.value {
                    return Err(Error::NotContact(0.0));
                }
                for t in 0..32 {
                    let ang = t as f64 * std::f64::consts::PI / 16.0;
                    let p = level_point(model, lev, q, ang)?;
                    let x = hamiltonian_vf(model, q, p);
                    let lam = (p[0] + th[0]) * x[0] + (p[1] + th[1]) * x[1];
                    inf = inf.min(lam);
                    let ell = nalgebra::Vector4::new(p[0] + th[0], p[1] + th[1], 0.0, 0.0);
                    sup = sup.max((gsq * om_inv_t * ell).norm());
                }
            }
        }
    }
    Ok((inf, sup))
}

/// Constants of the multiplier bound for flow lines with action in `[a, b]`.
///
/// With `band = None` the band half-width is iterated to `w = delta`.
pub fn eta_bound_constants(
    cfg: &RabinowitzConfig,
    class: crate::geometry::HomotopyClass,
    a: f64,
    b: f64,
    rho0: f64,
    band: Option<f64>,
) -> Result<EtaBound> {
    if !cfg.model.bounded_primitive_exists() {
        return Err(Error::UnboundedPrimitive(cfg.model.flux));
    }
    if !(rho0 > 0.0) || !(b >= a) {
        return Err(Error::Config(format!("need rho0 > 0 and b >= a (rho0 = {rho0}, a = {a}, b = {b})")));
    }
    let (w, inf, sup) = match band {
        Some(w) => {
            let (i, s) = band_extrema(&cfg.model, cfg.k, w)?;
            (w, i, s)
        }
        None => {
            let mut w = 0.25 * (cfg.k - cfg.model.potential.max_value()).max(0.0);
            let mut out = band_extrema(&cfg.model, cfg.k, w)?;
            for _ in 0..50 {
                let next = 0.5 * (w + 0.5 * out.0);
                if !(next > 0.0) || (next - w).abs() < 1e-9 * w.max(1e-12) {
                    break;
                }
                w = next;
                out = band_extrema(&cfg.model, cfg.k, w)?;
            }
            (w, out.0, out.1)
        }
    };
    let delta = 0.5 * inf;
    if !(delta > 0.0) {
        return Err(Error::NotContact(delta));
    }
    let hol = cfg.model.holonomy_constant(class)?;
    let rho1 = (1.0 / delta) * 1f64.max(sup * rho0 + hol.abs());
    let c0 = rho1 * (a.abs().max(b.abs()) + 1.0) + (b - a) / rho0;
    Ok(EtaBound { band: w, inf_lambda: inf, delta, d_sup: sup, holonomy: hol, rho0, rho1, c0, a, b })
}

/// Empirical `rho0`: half the smallest gradient norm among sampled states
/// that leave the band `|H - k| <= w`, capped by `delta` so the multiplier
/// term stays controlled.
pub fn estimate_rho0(cfg: &RabinowitzConfig, samples: &[PhaseLoop], band: f64, delta: f64) -> Result<f64> {
    let mut thr = f64::INFINITY;
    for u in samples {
        let (_, lev) = critical_residual(cfg, u);
        if lev > band {
            thr = thr.min(l2_gradient(cfg, u)?.1);
        }
    }
    Ok((0.5 * thr).min(delta).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfSample {
    pub s: f64,
    pub action: f64,
    pub eta: f64,
    pub grad_norm: f64,
    pub sup_p: f64,
    /// `int_0^s |u'|^2`.
    pub dissipated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    FlowTime,
    LeftWindow,
    BlowUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfMonitors {
    pub monotone: bool,
    pub energy_identity_error: f64,
    pub eta_bound: Option<f64>,
    pub eta_checks: usize,
    pub eta_violations: usize,
    pub max_abs_eta: f64,
    /// `sqrt(int |u'|^2) <= sqrt(b - a)` on the completed run.
    pub x_energy_ok: bool,
    pub stop: StopReason,
    pub critical_residual: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfFlowReport {
    pub samples: Vec<RfSample>,
    pub monitors: RfMonitors,
    pub final_state: PhaseLoop,
}

impl RfFlowReport {
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("s,A,eta,grad_norm,sup_p\n");
        for r in &self.samples {
            let _ = writeln!(s, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", r.s, r.action, r.eta, r.grad_norm, r.sup_p);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfFlowOptions {
    pub s_max: f64,
    pub window: (f64, f64),
    pub momentum_ceiling: f64,
    pub converge_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Multiplier bound to monitor, from [`eta_bound_constants`].
    pub eta_bound: Option<f64>,
}

impl Default for RfFlowOptions {
    fn default() -> Self {
        RfFlowOptions {
            s_max: 0.2,
            window: (-2.0, 2.0),
            momentum_ceiling: 50.0,
            converge_tol: 1e-8,
            rtol: 1e-10,
            atol: 1e-12,
            eta_bound: None,
        }
    }
}

/// Integrate `u' = -grad A(u)` with the dissipated energy as an extra state.
pub fn rabinowitz_flow(cfg: &RabinowitzConfig, u0: &PhaseLoop, opts: &RfFlowOptions) -> Result<RfFlowReport> {
    let class = u0.base.class;
    let a0 = action(cfg, u0)?;
    let mut y0 = u0.to_flat();
    y0.push(0.0);
    let dim = y0.len() - 1;
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let out = PhaseLoop::from_flat(&y[..dim], class).and_then(|u| l2_gradient(cfg, &u));
        match out {
            Ok((g, norm)) => {
                for i in 0..dim {
                    dy[i] = -g[i];
                }
                dy[dim] = norm * norm;
            }
            Err(_) => dy.iter_mut().for_each(|v| *v = f64::NAN),
        }
    };
    let mut samples = Vec::new();
    let mut stop = StopReason::FlowTime;
    let mut monotone = true;
    let mut energy_err: f64 = 0.0;
    let mut eta_checks = 0;
    let mut eta_violations = 0;
    let mut max_eta: f64 = 0.0;
    let mut failure: Option<Error> = None;
    let observer = |s: f64, y: &[f64]| {
        let u = match PhaseLoop::from_flat(&y[..dim], class) {
            Ok(u) => u,
            Err(e) => {
                failure = Some(e);
                return false;
            }
        };
        let (a, g) = match (action(cfg, &u), l2_gradient(cfg, &u)) {
            (Ok(a), Ok((_, g))) => (a, g),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(e);
                return false;
            }
        };
        let sample = RfSample { s, action: a, eta: u.eta, grad_norm: g, sup_p: u.sup_momentum(), dissipated: y[dim] };
        if let Some(prev) = samples.last() {
            let prev: &RfSample = prev;
            if a > prev.action + 1e-12 * (1.0 + a.abs()) {
                monotone = false;
            }
        }
        energy_err = energy_err.max((a0 - a - y[dim]).abs());
        let inside = a >= opts.window.0 && a <= opts.window.1;
        if inside {
            max_eta = max_eta.max(u.eta.abs());
            if let Some(c0) = opts.eta_bound {
                eta_checks += 1;
                if u.eta.abs() > c0 {
                    eta_violations += 1;
                }
            }
        }
        samples.push(sample);
        if g < opts.converge_tol {
            stop = StopReason::Converged;
            return false;
        }
        if !inside {
            stop = StopReason::LeftWindow;
            return false;
        }
        if sample.sup_p > opts.momentum_ceiling {
            stop = StopReason::BlowUp;
            return false;
        }
        true
    };
    let ode = Dopri5Options { rtol: opts.rtol, atol: opts.atol, h_init: 1e-4, ..Default::default() };
    let out = dopri5(rhs, 0.0, &y0, opts.s_max, &ode, observer);
    if let Some(e) = failure {
        return Err(e);
    }
    let out = out?;
    let final_state = PhaseLoop::from_flat(&out.y[..dim], class)?;
    let dissipated = out.y[dim];
    let span = opts.window.1 - opts.window.0;
    let critical_residual = (stop == StopReason::Converged).then(|| critical_residual(cfg, &final_state));
    Ok(RfFlowReport {
        monitors: RfMonitors {
            monotone,
            energy_identity_error: energy_err,
            eta_bound: opts.eta_bound,
            eta_checks,
            eta_violations,
            max_abs_eta: max_eta,
            x_energy_ok: stop == StopReason::LeftWindow || dissipated <= span + 1e-9,
            stop,
            critical_residual,
        },
        samples,
        final_state,
    })
}

/// Comparison of the `H` and `H_R` flows from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationAgreement {
    pub radius: f64,
    pub sup_distance: f64,
    /// Largest `H` seen along the untruncated flow at the checkpoints.
    pub max_energy: f64,
    /// Whether the flow stayed in the region where `H_R = H`.
    pub in_region: bool,
    pub passed: bool,
}

/// Integrate both flows over `checkpoints` equal segments of `[0, s_max]`.
pub fn flow_agreement_check(cfg: &RabinowitzConfig, u0: &PhaseLoop, radius: f64, s_max: f64, checkpoints: usize) -> Result<TruncationAgreement> {
    let plain = RabinowitzConfig { truncation: None, ..cfg.clone() };
    let trunc = plain.clone().truncated(radius)?;
    let ceiling = trunc.truncation.expect("set above").identity_ceiling();
    let class = u0.base.class;
    let dim = 4 * u0.len() + 1;
    let field = |c: &RabinowitzConfig| {
        let c = c.clone();
        move |_s: f64, y: &[f64], dy: &mut [f64]| match PhaseLoop::from_flat(y, class).and_then(|u| l2_gradient(&c, &u)) {
            Ok((g, _)) => {
                for i in 0..dim {
                    dy[i] = -g[i];
                }
            }
            Err(_) => dy.iter_mut().for_each(|v| *v = f64::NAN),
        }
    };
    let max_h = |y: &[f64]| -> Result<f64> {
        let u = PhaseLoop::from_flat(y, class)?;
        Ok(u.base.samples.iter().zip(&u.momenta).map(|(q, p)| hamiltonian(&plain.model, *q, *p)).fold(f64::MIN, f64::max))
    };
    let opts = Dopri5Options { rtol: 1e-11, atol: 1e-13, h_init: 1e-4, ..Default::default() };
    let mut ya = u0.to_flat();
    let mut yb = ya.clone();
    let mut sup: f64 = 0.0;
    let mut top = max_h(&ya)?;
    let h = s_max / checkpoints.max(1) as f64;
    for c in 0..checkpoints.max(1) {
        let (s0, s1) = (c as f64 * h, (c + 1) as f64 * h);
        ya = dopri5(field(&plain), s0, &ya, s1, &opts, |_, y| {
            top = top.max(max_h(y).unwrap_or(f64::INFINITY));
            true
        })?
        .y;
        yb = dopri5(field(&trunc), s0, &yb, s1, &opts, |_, _| true)?.y;
        sup = ya.iter().zip(&yb).fold(sup, |m, (a, b)| m.max((a - b).abs()));
    }
    let in_region = top < ceiling;
    Ok(TruncationAgreement { radius, sup_distance: sup, max_energy: top, in_region, passed: !in_region || sup < 1e-8 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;
    use crate::geometry::HomotopyClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wavy(flux: f64) -> ManifoldModel {
        ManifoldModel {
            phi: FourierField::cosine(1, 0, 0.1).plus(&FourierField::sine(0, 1, 0.05)),
            potential: FourierField::cosine(0, 1, 0.02),
            flux,
            theta_ex_x: FourierField::sine(0, 1, 0.1),
            theta_ex_y: FourierField::cosine(1, 1, 0.05),
            reference_base: [0.0, 0.1],
        }
    }

    fn random_loop(rng: &mut ChaCha8Rng, n: usize, class: HomotopyClass) -> PhaseLoop {
        let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let base = DiscreteLoop::from_fn(n, class, |t| {
            let w = 2.0 * std::f64::consts::PI * t;
            [t * class.m1 as f64 + 0.3 + c[0] * w.sin() + c[1] * (2.0 * w).cos(), t * class.m2 as f64 + 0.2 + c[2] * w.cos() + c[3] * (3.0 * w).sin()]
        })
        .unwrap();
        let momenta = (0..n)
            .map(|i| {
                let w = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [0.8 + c[4] * w.cos() + c[5] * (2.0 * w).sin(), 0.1 + c[6] * w.sin() + c[7]]
            })
            .collect();
        PhaseLoop::new(base, momenta, 0.7 + c[8]).unwrap()
    }

    fn eps_cfg(eps: f64) -> FreeTimeConfig {
        FreeTimeConfig::new(ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, eps)), 0.5, 64)
    }

    fn orbit(cfg: &FreeTimeConfig, y: f64) -> LagCriticalPoint {
        let seed = DiscreteLoop::straight(cfg.n, HomotopyClass::new(1, 0), [0.0, y]).unwrap();
        free_time::find_critical(cfg, &seed, 1.0).unwrap()
    }

    #[test]
    fn vector_field_examples() {
        let flat = ManifoldModel::flat();
        assert_eq!(hamiltonian_vf(&flat, [0.2, 0.3], [0.4, -0.7]), [0.4, -0.7, 0.0, 0.0]);
        let b = ManifoldModel::flat().with_flux(1.0);
        let x = hamiltonian_vf(&b, [0.0, 0.0], [1.0, 0.0]);
        assert_eq!([x[0], x[1]], [1.0, 0.0]);
        assert_eq!([x[2], x[3]], [0.0, -1.0]);
        let b0 = b0_constant(&flat);
        assert!(b0 >= 0.5 && b0 <= 0.551, "{b0}");
    }

    #[test]
    fn vector_field_preserves_energy_and_is_bounded() {
        let m = wavy(0.8);
        let b0 = b0_constant(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)];
            let p = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let x = hamiltonian_vf(&m, q, p);
            let j = ham_jet(&m, q, p);
            let dh = j.hq[0] * x[0] + j.hq[1] * x[1] + j.hp[0] * x[2] + j.hp[1] * x[3];
            assert!(dh.abs() < 1e-12 * (1.0 + j.h), "{dh}");
            let a = (2.0 * m.phi.value(q)).exp();
            let xv = nalgebra::Vector4::from(x);
            let norm = (xv.transpose() * sasaki_metric(a) * xv)[0].sqrt();
            let pn = (p[0] * p[0] + p[1] * p[1]) / a;
            assert!(norm <= b0 * (1.0 + pn));
        }
    }

    #[test]
    fn omega_defines_vector_field() {
        let m = wavy(0.5);
        let q = [0.3, 0.6];
        let p = [0.4, -0.2];
        let j = ham_jet(&m, q, p);
        let om = omega_matrix(j.local.s);
        let x = nalgebra::Vector4::from(hamiltonian_vf(&m, q, p));
        let dh = nalgebra::Vector4::new(j.hq[0], j.hq[1], j.hp[0], j.hp[1]);
        // omega(xi, X_H) = dH(xi)
        assert!((om * x - dh).norm() < 1e-13);
    }

    #[test]
    fn action_examples() {
        let flat = RabinowitzConfig::new(ManifoldModel::flat(), 0.5);
        let c = PhaseLoop::constant(32, [0.2, 0.3], [1.0, 0.0], 0.0).unwrap();
        assert_eq!(action(&flat, &c).unwrap(), 0.0);
        let c = PhaseLoop::constant(32, [0.2, 0.3], [0.0, 0.0], 1.0).unwrap();
        assert!((action(&flat, &c).unwrap() - 0.5).abs() < 1e-15);
        let (g, _) = l2_gradient(&flat, &c).unwrap();
        assert!((g[4 * 32] - 0.5).abs() < 1e-15);
        let geo = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        let z = PhaseLoop::new(geo, vec![[1.0, 0.0]; 32], 1.0).unwrap();
        assert!((action(&flat, &z).unwrap() - 1.0).abs() < 1e-14);
        assert!((action(&flat, &z.reversed()).unwrap() + 1.0).abs() < 1e-14);
        assert!(l2_gradient(&flat, &z).unwrap().1 < 1e-14);
    }

    #[test]
    fn differential_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (model, class) in [(wavy(0.0), HomotopyClass::new(1, 0)), (wavy(0.7), HomotopyClass::TRIVIAL)] {
            let cfg = RabinowitzConfig::new(model, 0.5);
            let u = random_loop(&mut rng, 32, class);
            let d = differential(&cfg, &u).unwrap();
            let z = u.to_flat();
            for _ in 0..5 {
                let dir: Vec<f64> = (0..z.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let h = 1e-5;
                let at = |s: f64| {
                    let zz: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                    action(&cfg, &PhaseLoop::from_flat(&zz, class).unwrap()).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let an: f64 = d.iter().zip(&dir).map(|(a, b)| a * b).sum();
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{fd} {an}");
            }
        }
    }

    #[test]
    fn gradient_represents_differential_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [AcsMode::MetricJ, AcsMode::CompatibleJ] {
            let cfg = RabinowitzConfig::new(wavy(0.6), 0.5).with_acs(mode);
            let u = random_loop(&mut rng, 32, HomotopyClass::TRIVIAL);
            let (g, norm) = l2_gradient(&cfg, &u).unwrap();
            let d = differential(&cfg, &u).unwrap();
            let gram = l2_gram(&cfg, &u);
            let gd = &gram * DVector::from_vec(g.clone());
            for i in 0..d.len() {
                assert!((gd[i] - d[i]).abs() < 1e-12 * (1.0 + d[i].abs()));
            }
            let n2: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!((n2.sqrt() - norm).abs() < 1e-12 * norm);
        }
    }

    #[test]
    fn hessian_matches_differential() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = RabinowitzConfig::new(wavy(0.0), 0.5);
        let u = random_loop(&mut rng, 16, HomotopyClass::new(1, 0));
        let h = hessian(&cfg, &u).unwrap();
        let z = u.to_flat();
        let step = 1e-6;
        for col in [0usize, 3, 6, 17, 30, 64] {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[col] += step;
            zm[col] -= step;
            let dp = differential(&cfg, &PhaseLoop::from_flat(&zp, u.base.class).unwrap()).unwrap();
            let dm = differential(&cfg, &PhaseLoop::from_flat(&zm, u.base.class).unwrap()).unwrap();
            for r in 0..z.len() {
                let fd = (dp[r] - dm[r]) / (2.0 * step);
                assert!((fd - h[(r, col)]).abs() < 1e-6, "({r},{col}) {fd} {}", h[(r, col)]);
            }
        }
        assert!((&h - h.transpose()).amax() < 1e-13);
    }

    #[test]
    fn compatible_structure_is_compatible() {
        let m = wavy(0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let j = acs_at(&m, AcsMode::CompatibleJ, q);
            let om = omega_matrix(m.magnetic_density(q));
            assert!((j * j + Matrix4::identity()).amax() < 1e-10);
            let v = nalgebra::Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let w = nalgebra::Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            assert!(v.dot(&(om * j * v)) > 0.0);
            let lhs = (j * v).dot(&(om * (j * w)));
            assert!((lhs - v.dot(&(om * w))).abs() < 1e-10);
            let jg = acs_at(&m, AcsMode::MetricJ, q);
            assert!((jg * jg + Matrix4::identity()).amax() < 1e-12);
        }
        assert_eq!(acs_deviation(&ManifoldModel::flat()), 0.0);
        assert!(acs_deviation(&m) > 0.0);
    }

    #[test]
    fn lift_identities() {
        let cfg = eps_cfg(0.01);
        let rab = RabinowitzConfig::new(cfg.model.clone(), cfg.k);
        for y in [0.0, 0.5] {
            let cp = orbit(&cfg, y);
            let zp = z_lift(&cfg.model, &cp, LiftSign::Plus).unwrap();
            let zm = z_lift(&cfg.model, &cp, LiftSign::Minus).unwrap();
            assert!((action(&rab, &zp).unwrap() - cp.action).abs() < 1e-8);
            assert!((action(&rab, &zm).unwrap() + cp.action).abs() < 1e-8);
            assert_eq!(zm.base.class, HomotopyClass::new(-1, 0));
            for u in [&zp, &zm] {
                let (res, lev) = critical_residual(&rab, u);
                assert!(res < 1e-7 && lev < 1e-8, "{res} {lev}");
                assert!(l2_gradient(&rab, u).unwrap().1 < 1e-6);
            }
            let cmp = compare_actions(&rab, &zp, 1e-8).unwrap();
            assert!(cmp.slack_plus.abs() < 1e-10 && cmp.equality);
        }
    }

    #[test]
    fn flat_geodesic_lift() {
        let cfg = FreeTimeConfig::new(ManifoldModel::flat(), 0.5, 32);
        let seed = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        let sol = free_time::solve_critical(&cfg, &seed, 1.3).unwrap();
        let cp = free_time::classify(&cfg, sol).unwrap();
        let rab = RabinowitzConfig::new(ManifoldModel::flat(), 0.5);
        let zp = z_lift(&cfg.model, &cp, LiftSign::Plus).unwrap();
        assert!((action(&rab, &zp).unwrap() - 1.0).abs() < 1e-8);
        let zm = z_lift(&cfg.model, &cp, LiftSign::Minus).unwrap();
        assert!((action(&rab, &zm).unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn action_comparison_slacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = RabinowitzConfig::new(wavy(0.0), 0.5);
        for _ in 0..5 {
            let u = random_loop(&mut rng, 32, HomotopyClass::new(1, 0));
            let c = compare_actions(&cfg, &u, 1e-8).unwrap();
            assert!(c.slack_plus > 0.0 && !c.equality);
            assert!((c.slack_plus - c.slack_minus).abs() < 1e-12);
            assert!((c.slack_plus - c.fenchel_gap).abs() < 1e-12);
        }
        let mut bad = random_loop(&mut rng, 32, HomotopyClass::TRIVIAL);
        bad.eta = -1.0;
        assert!(compare_actions(&cfg, &bad, 1e-8).is_err());
    }

    #[test]
    fn constant_kernel_is_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for model in [ManifoldModel::flat(), ManifoldModel::flat().with_flux(1.0), wavy(0.0)] {
            let cfg = RabinowitzConfig::new(model.clone(), 0.5);
            for _ in 0..3 {
                let q = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                let p = level_point(&model, 0.5, q, rng.gen_range(0.0..6.3)).unwrap();
                let kern = constant_hessian_kernel(&cfg, q, p, 16).unwrap();
                assert_eq!(kern.kernel_dim, 3, "{:?}", kern.smallest);
                assert!(kern.gap_ratio > 1e3);
            }
        }
        let low = RabinowitzConfig::new(ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, 1.0)), -2.0);
        assert!(matches!(constant_hessian_kernel(&low, [0.0, 0.0], [0.0, 0.0], 16), Err(Error::BadLevel(_))));
    }

    #[test]
    fn eta_bound_examples() {
        let cfg = RabinowitzConfig::new(ManifoldModel::flat(), 0.5);
        let e = eta_bound_constants(&cfg, HomotopyClass::TRIVIAL, -1.0, 1.0, 0.2, Some(0.05)).unwrap();
        assert!((e.inf_lambda - 0.9).abs() < 1e-12);
        assert!((e.d_sup - 1.1f64.sqrt()).abs() < 1e-12);
        assert_eq!(e.holonomy, 0.0);
        let wide = eta_bound_constants(&cfg, HomotopyClass::TRIVIAL, -1.0, 3.0, 0.2, Some(0.05)).unwrap();
        let same_rho1 = e.rho1 * (3.0f64 + 1.0) + 4.0 / 0.2;
        assert!((wide.c0 - same_rho1).abs() < 1e-12);
        let b = RabinowitzConfig::new(ManifoldModel::flat().with_flux(1.0), 0.5);
        assert!(eta_bound_constants(&b, HomotopyClass::TRIVIAL, -1.0, 1.0, 0.2, None).is_err());
        let auto = eta_bound_constants(&cfg, HomotopyClass::TRIVIAL, -1.0, 1.0, 0.2, None).unwrap();
        assert!((auto.band - auto.delta).abs() < 1e-6);
    }

    #[test]
    fn truncation_profile() {
        let t = Truncation::new(10.0);
        assert_eq!(t.apply(3.0), (3.0, 1.0));
        assert_eq!(t.apply(9.0), (9.0, 1.0));
        let (h, d) = t.apply(11.5);
        assert_eq!(d, 0.0);
        let (h2, _) = t.apply(20.0);
        assert_eq!(h, h2);
        let x = 10.3;
        let e = 1e-6;
        let fd = (t.apply(x + e).0 - t.apply(x - e).0) / (2.0 * e);
        assert!((fd - t.apply(x).1).abs() < 1e-8);
        let cfg = RabinowitzConfig::new(ManifoldModel::flat(), 0.5);
        assert!(cfg.clone().truncated(0.9).is_err());
        let tr = cfg.truncated(10.0).unwrap();
        assert_eq!(config_vf(&tr, [0.0, 0.0], [10.0, 0.0]), [0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn flow_decreases_action_with_energy_identity() {
        let cfg = eps_cfg(0.01);
        let cp = orbit(&cfg.with_k(0.5), 0.5);
        let rcp = cp.curve.resample(32).unwrap();
        let small = FreeTimeConfig { n: 32, ..cfg.clone() };
        let cp = free_time::find_critical(&small, &rcp, cp.period).unwrap();
        let rab = RabinowitzConfig::new(cfg.model.clone(), 0.5);
        let mut u = z_lift(&cfg.model, &cp, LiftSign::Plus).unwrap();
        for (i, q) in u.base.samples.iter_mut().enumerate() {
            q[1] += 0.02 * (2.0 * std::f64::consts::PI * i as f64 / 32.0).cos();
        }
        let a0 = action(&rab, &u).unwrap();
        let rep = rabinowitz_flow(&rab, &u, &RfFlowOptions { s_max: 0.15, eta_bound: Some(10.0), ..Default::default() }).unwrap();
        let last = rep.samples.last().unwrap();
        assert!(last.action < a0);
        assert!(rep.monitors.monotone);
        assert!(rep.monitors.energy_identity_error < 1e-7, "{}", rep.monitors.energy_identity_error);
        assert_eq!(rep.monitors.eta_violations, 0);
        assert!(rep.to_csv().starts_with("s,A,eta,grad_norm,sup_p"));
    }

    #[test]
    fn critical_seed_is_stationary_and_newton_recovers_lift() {
        let cfg = eps_cfg(0.01);
        let cp = orbit(&cfg, 0.0);
        let rab = RabinowitzConfig::new(cfg.model.clone(), 0.5);
        let zp = z_lift(&cfg.model, &cp, LiftSign::Plus).unwrap();
        let rep = rabinowitz_flow(&rab, &zp, &RfFlowOptions { converge_tol: 1e-6, ..Default::default() }).unwrap();
        assert_eq!(rep.monitors.stop, StopReason::Converged);
        let mut seed = zp.clone();
        seed.eta *= 1.01;
        for p in seed.momenta.iter_mut() {
            p[0] *= 0.99;
        }
        let found = find_critical(&rab, &seed, 1e-10, 50).unwrap();
        assert!(found.state.aligned_distance(&zp) < 1e-4);
        assert!(found.orbit_residual < 1e-6 && found.level_residual < 1e-6);
    }

    #[test]
    fn truncated_flow_agrees() {
        let cfg = RabinowitzConfig::new(ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, 0.01)), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_loop(&mut rng, 16, HomotopyClass::new(1, 0));
        let rep = flow_agreement_check(&cfg, &u, 10.0, 0.1, 4).unwrap();
        assert!(rep.in_region && rep.passed && rep.sup_distance < 1e-8);
    }

    #[test]
    fn phase_loop_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_loop(&mut rng, 16, HomotopyClass::new(2, -1));
        let back = PhaseLoop::from_flat(&u.to_flat(), u.base.class).unwrap();
        assert!(back.base.sup_distance(&u.base) < 1e-14);
        assert_eq!(back.momenta, u.momenta);
        let rr = u.reversed().reversed();
        assert!(rr.base.sup_distance(&u.base) < 1e-14 && rr.eta == u.eta);
        let json = serde_json::to_string(&u).unwrap();
        let de: PhaseLoop = serde_json::from_str(&json).unwrap();
        assert_eq!(de, u);
    }
}
