//! Linearized Hamiltonian flow along orbits, Robbin-Salamon index of the
//! resulting symplectic path, the orbit-cylinder sign from the Poincaré block,
//! and the `mu` grading of Rabinowitz critical points.
//!
//! Matrices act on `(dq_x, dq_y, dp_x, dp_y)`. The twisted form is moved to the
//! standard one by `Psi(q) = [[I, 0], [A(q), I]]` with `A = (s/2)[[0,-1],[1,0]]`,
//! which preserves the vertical distribution.

use nalgebra::{Complex, Matrix4, SymmetricEigen, Vector4, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_time::{self, FreeTimeConfig, LagCriticalPoint};
use crate::geometry::ManifoldModel;
use crate::ode::{dopri5, Dopri5Options};
use crate::rabinowitz::{self, ham_jet, omega_matrix, LiftSign, PhaseLoop};

type C64 = Complex<f64>;

/// Jacobian of `X_H` in chart coordinates.
pub fn vf_jacobian(model: &ManifoldModel, q: [f64; 2], p: [f64; 2]) -> Matrix4<f64> {
    let j = ham_jet(model, q, p);
    let s = j.local.s;
    let gs = j.local.grad_s;
    let e = j.hpp;
    let mut m = Matrix4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            m[(a, b)] = j.hqp[b][a];
        }
        m[(a, 2 + a)] = e;
    }
    let ehp = [j.hp[1], -j.hp[0]];
    for b in 0..2 {
        let dhp = j.hqp[b];
        let edhp = [dhp[1], -dhp[0]];
        for a in 0..2 {
            m[(2 + a, b)] = -j.hqq[a][b] + gs[b] * ehp[a] + s * edhp[a];
        }
    }
    let emat = [[0.0, 1.0], [-1.0, 0.0]];
    for a in 0..2 {
        for c in 0..2 {
            m[(2 + a, 2 + c)] = -j.hqp[a][c] + s * e * emat[a][c];
        }
    }
    m
}

/// `Psi(q)`, mapping the twisted form to the standard one.
pub fn trivialization(s: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(2, 1)] = -0.5 * s;
    m[(3, 0)] = 0.5 * s;
    m
}

fn to_array(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut a = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            a[r][c] = m[(r, c)];
        }
    }
    a
}

fn from_array(a: &[[f64; 4]; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| a[r][c])
}

/// Sampled linearized flow of `x' = eta X_H(x)` on `[0, 1]` in the symplectic
/// trivialization, with `Phi(0) = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymplecticPath {
    pub times: Vec<f64>,
    pub matrices: Vec<[[f64; 4]; 4]>,
    pub eta: f64,
    pub start: [f64; 4],
    /// `|x(1) - x(0)|` modulo the lattice.
    pub closure_error: f64,
    /// Worst `|Phi^T Omega_0 Phi - Omega_0|` before projection.
    pub symplectic_defect: f64,
    /// Largest correction applied by the projection onto `Sp(4)`.
    pub projection: f64,
}

impl SymplecticPath {
    pub fn end(&self) -> Matrix4<f64> {
        from_array(self.matrices.last().expect("nonempty path"))
    }

    pub fn at(&self, i: usize) -> Matrix4<f64> {
        from_array(&self.matrices[i])
    }

    /// The path run `k` times: `Phi(t - j) Phi(1)^j` on `[j, j + 1]`, rescaled
    /// to `[0, 1]`.
    pub fn iterate(&self, k: usize) -> SymplecticPath {
        let end = self.end();
        let mut times = Vec::new();
        let mut matrices = Vec::new();
        let mut power = Matrix4::identity();
        for j in 0..k {
            for (i, (t, m)) in self.times.iter().zip(&self.matrices).enumerate() {
                if j > 0 && i == 0 {
                    continue;
                }
                times.push((j as f64 + t) / k as f64);
                matrices.push(to_array(&(from_array(m) * power)));
            }
            power = end * power;
        }
        SymplecticPath { times, matrices, eta: self.eta * k as f64, ..self.clone() }
    }
}

fn symplectic_error(m: &Matrix4<f64>) -> f64 {
    let o = omega_matrix(0.0);
    (m.transpose() * o * m - o).amax()
}

/// Newton-type projection `Phi <- Phi (I - Omega_0^{-1} E / 2)`.
fn project_symplectic(m: &Matrix4<f64>) -> Matrix4<f64> {
    let o = omega_matrix(0.0);
    let oi = o.try_inverse().expect("standard form is invertible");
    let mut p = *m;
    for _ in 0..4 {
        let e = p.transpose() * o * p - o;
        if e.amax() < 1e-15 {
            break;
        }
        p *= Matrix4::identity() - oi * e * 0.5;
    }
    p
}

/// Integrate the orbit and its variational equation from the first sample
/// of `u`.
pub fn linearized_flow(model: &ManifoldModel, u: &PhaseLoop) -> Result<SymplecticPath> {
    let q0 = u.base.samples[0];
    let p0 = u.momenta[0];
    let eta = u.eta;
    let x0 = [q0[0], q0[1], p0[0], p0[1]];
    let mut y0 = vec![0.0; 20];
    y0[..4].copy_from_slice(&x0);
    for i in 0..4 {
        y0[4 + 5 * i] = 1.0;
    }
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let q = [y[0], y[1]];
        let p = [y[2], y[3]];
        let x = rabinowitz::hamiltonian_vf(model, q, p);
        for i in 0..4 {
            dy[i] = eta * x[i];
        }
        let jac = vf_jacobian(model, q, p) * eta;
        let phi = Matrix4::from_row_slice(&y[4..20]);
        let d = jac * phi;
        for r in 0..4 {
            for c in 0..4 {
                dy[4 + 4 * r + c] = d[(r, c)];
            }
        }
    };
    let psi0_inv = trivialization(model.magnetic_density(q0)).try_inverse().expect("unipotent");
    let mut times = Vec::new();
    let mut matrices = Vec::new();
    let mut defect: f64 = 0.0;
    let mut projection: f64 = 0.0;
    let mut last = [0.0; 4];
    let observer = |t: f64, y: &[f64]| {
        let phi = Matrix4::from_row_slice(&y[4..20]);
        let psi = trivialization(model.magnetic_density([y[0], y[1]]));
        let m = psi * phi * psi0_inv;
        defect = defect.max(symplectic_error(&m));
        let pm = project_symplectic(&m);
        projection = projection.max((pm - m).amax());
        times.push(t);
        matrices.push(to_array(&pm));
        last.copy_from_slice(&y[..4]);
        true
    };
    let opts = Dopri5Options { rtol: 1e-12, atol: 1e-13, h_init: 1e-4, h_max: 1.0 / 256.0, ..Default::default() };
    dopri5(rhs, 0.0, &y0, 1.0, &opts, observer)?;
    if defect > 1e-6 {
        return Err(Error::SymplecticDefect(defect));
    }
    let m = u.base.class.vector();
    let closure = [last[0] - x0[0] - m[0], last[1] - x0[1] - m[1], last[2] - x0[2], last[3] - x0[3]]
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(SymplecticPath { times, matrices, eta, start: x0, closure_error: closure, symplectic_defect: defect, projection })
}

/// Graph frame `(X, Y)` of `Phi` in the splitting where the product form
/// `(-omega_0) + omega_0` is standard: `Q = (q_2, p_1)`, `P = (p_2, q_1)`.
fn graph_unitary(phi: &Matrix4<f64>) -> Matrix4<C64> {
    let mut z = Matrix4::<C64>::zeros();
    for c in 0..4 {
        for r in 0..2 {
            z[(r, c)] = C64::new(phi[(r, c)], phi[(2 + r, c)]);
        }
        let e = |i: usize| if i == c { 1.0 } else { 0.0 };
        z[(2, c)] = C64::new(e(2), e(0));
        z[(3, c)] = C64::new(e(3), e(1));
    }
    unitary_from_frame(&z)
}

/// `Z (Z^* Z)^{-1/2}`.
fn unitary_from_frame(z: &Matrix4<C64>) -> Matrix4<C64> {
    let g = z.adjoint() * z;
    let eig = SymmetricEigen::new(g);
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C64::new(1.0 / l.sqrt(), 0.0)));
    z * (eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

fn diagonal_unitary() -> Matrix4<C64> {
    graph_unitary(&Matrix4::identity())
}

/// `W = V V^T` with `V = U_diag^* U_graph`; its eigenvalues equal to 1 count
/// `dim ker(Phi - I)`.
fn crossing_unitary(phi: &Matrix4<f64>, ud: &Matrix4<C64>) -> Matrix4<C64> {
    let v = ud.adjoint() * graph_unitary(phi);
    v * v.transpose()
}

/// Continuous count `N(theta) = (floor(theta/2pi) + ceil(theta/2pi)) / 2`.
fn half_count(theta: f64) -> f64 {
    let x = theta / (2.0 * std::f64::consts::PI);
    0.5 * (x.floor() + x.ceil())
}

/// Principal eigenphases of `W`, snapped to 0 below `snap`.
fn eigenphases(w: &Matrix4<C64>, snap: f64) -> Result<Vec<f64>> {
    let ev = w.eigenvalues().ok_or_else(|| Error::LinearSolve("eigenvalues of the crossing unitary".into()))?;
    Ok(ev.iter().map(|z| {
        let a = z.arg();
        if a.abs() < snap {
            0.0
        } else {
            a
        }
    }).collect())
}

/// Robbin-Salamon index of the graph of a symplectic path relative to the
/// diagonal, endpoints weighted by one half.
///
/// The eigenphases of `W(t)` are not tracked individually: the continuous lift
/// of `arg det W` fixes the total winding, and principal phases fix the rest.
pub fn rs_index(path: &SymplecticPath) -> Result<f64> {
    rs_index_between(path, 0, path.matrices.len() - 1)
}

/// Index of the sub-path between sample indices `i0 <= i1`.
pub fn rs_index_between(path: &SymplecticPath, i0: usize, i1: usize) -> Result<f64> {
    let ud = diagonal_unitary();
    let snap = 1e-6;
    let mut lift = 0.0;
    let mut prev: Option<f64> = None;
    for i in i0..=i1 {
        let w = crossing_unitary(&path.at(i), &ud);
        let a = w.determinant().arg();
        if let Some(p) = prev {
            let mut d = a - p;
            d -= (d / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI;
            if d.abs() > 1.0 {
                return Err(Error::RefineGrid(format!("phase jump {d:.3} between samples {} and {i}", i - 1)));
            }
            lift += d;
        }
        prev = Some(a);
    }
    let start = eigenphases(&crossing_unitary(&path.at(i0), &ud), snap)?;
    let end = eigenphases(&crossing_unitary(&path.at(i1), &ud), snap)?;
    let s0: f64 = start.iter().sum();
    let s1: f64 = end.iter().sum();
    // total winding in units of 2 pi
    let k = ((lift + s0 - s1) / (2.0 * std::f64::consts::PI)).round();
    let n_end: f64 = end.iter().map(|t| half_count(*t)).sum();
    let n_start: f64 = start.iter().map(|t| half_count(*t)).sum();
    Ok(INDEX_SIGN * (k + n_end - n_start))
}

/// Orientation fixed by the flat and perturbed-torus oracles: a hyperbolic
/// minimum orbit has `mu_CZ = 1/2`.
const INDEX_SIGN: f64 = -1.0;

/// Floquet multipliers: eigenvalues of `Phi(1)`.
pub fn floquet_multipliers(path: &SymplecticPath) -> Vec<[f64; 2]> {
    let m = path.end().map(|v| C64::new(v, 0.0));
    let ev = m.eigenvalues().unwrap_or_else(|| Vector4::from_element(C64::new(f64::NAN, f64::NAN)));
    let mut out: Vec<[f64; 2]> = ev.iter().map(|z| [z.re, z.im]).collect();
    out.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap_or(std::cmp::Ordering::Equal).then(a[1].partial_cmp(&b[1]).unwrap_or(std::cmp::Ordering::Equal)));
    out
}

/// Number of multipliers within `tol` of 1.
pub fn unit_block_dimension(path: &SymplecticPath, tol: f64) -> usize {
    floquet_multipliers(path).iter().filter(|z| (z[0] - 1.0).hypot(z[1]) < tol).count()
}

/// `dim ker(Phi(1) - I)` from singular values.
pub fn kernel_dimension(path: &SymplecticPath, tol: f64) -> usize {
    let svd = SVD::new(path.end() - Matrix4::identity(), false, false);
    svd.singular_values.iter().filter(|s| **s < tol).count()
}

/// Orbit-cylinder sign from the unit-eigenvalue block: solve
/// `(Phi - I) w = c X_H`, `dH(w) = 1`, `w . X_H = 0`; then `chi = sign(c)`.
///
/// For `eta < 0` the sign is that of the reversed orbit, negated.
pub fn chi_block(model: &ManifoldModel, u: &PhaseLoop, path: &SymplecticPath) -> Result<i8> {
    let dim = unit_block_dimension(path, 1e-3);
    if dim != 2 {
        return Err(Error::UnitBlock(dim));
    }
    if u.eta < 0.0 {
        let rev = u.reversed();
        let p = linearized_flow(model, &rev)?;
        return Ok(-chi_block(model, &rev, &p)?);
    }
    let q0 = [path.start[0], path.start[1]];
    let p0 = [path.start[2], path.start[3]];
    let psi = trivialization(model.magnetic_density(q0));
    let psi_inv = psi.try_inverse().expect("unipotent");
    // back to chart coordinates at x0
    let phi = psi_inv * path.end() * psi;
    let x = Vector4::from(rabinowitz::hamiltonian_vf(model, q0, p0));
    let j = ham_jet(model, q0, p0);
    let dh = Vector4::new(j.hq[0], j.hq[1], j.hp[0], j.hp[1]);
    let mut a = nalgebra::SMatrix::<f64, 6, 5>::zeros();
    let mut b = nalgebra::SVector::<f64, 6>::zeros();
    let pm = phi - Matrix4::identity();
    for r in 0..4 {
        for c in 0..4 {
            a[(r, c)] = pm[(r, c)];
        }
        a[(r, 4)] = -x[r];
        a[(4, r)] = dh[r];
        a[(5, r)] = x[r];
    }
    b[4] = 1.0;
    let sol = SVD::new(a, true, true).solve(&b, 1e-12).map_err(|e| Error::LinearSolve(e.to_string()))?;
    let c = sol[4];
    let resid = (a * sol - b).amax();
    if resid > 1e-5 || !c.is_finite() || c == 0.0 {
        return Err(Error::NotRegular(format!("orbit cylinder equation inconsistent (residual {resid:.2e}, c = {c:.2e})")));
    }
    Ok(if c > 0.0 { 1 } else { -1 })
}

/// `mu(x, eta) = mu_CZ - chi/2` for `eta != 0`, and `-n + 1 = -1` on constants.
pub fn mu_grading(model: &ManifoldModel, u: &PhaseLoop) -> Result<f64> {
    if u.eta == 0.0 {
        return Ok(-1.0);
    }
    let path = linearized_flow(model, u)?;
    let mu = rs_index(&path)?;
    let chi = chi_block(model, u, &path)?;
    Ok(mu - 0.5 * chi as f64)
}

/// Index data of one Lagrangian orbit computed along independent routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub class: [i32; 2],
    pub period: f64,
    pub action: f64,
    pub mu_cz: f64,
    pub i_t: usize,
    pub i_free: usize,
    pub nullity: usize,
    pub kernel_dim: usize,
    pub chi_block: i8,
    pub chi_continuation: i8,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub floquet: Vec<[f64; 2]>,
    pub symplectic_defect: f64,
    pub agreement: IndexAgreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexAgreement {
    /// `mu_CZ - 1/2 = i_T`.
    pub cz_vs_fixed: bool,
    /// `i = i_T + 1/2 - chi/2`.
    pub free_vs_fixed: bool,
    /// `mu(Z+) = i` and `mu(Z-) = -i`.
    pub grading: bool,
    pub chi: bool,
    /// `dim ker(Phi - I) = 1`.
    pub transversal: bool,
}

impl IndexAgreement {
    pub fn all(&self) -> bool {
        self.cz_vs_fixed && self.free_vs_fixed && self.grading && self.chi && self.transversal
    }
}

/// Every index identity at a nondegenerate Lagrangian critical point.
pub fn index_report(cfg: &FreeTimeConfig, cp: &LagCriticalPoint) -> Result<IndexReport> {
    if cp.nullity != 1 {
        return Err(Error::Degenerate(cp.nullity));
    }
    let chi_cont = match cp.chi {
        Some(c) => c,
        None => free_time::chi_by_continuation(cfg, cp)?,
    };
    let zp = rabinowitz::z_lift(&cfg.model, cp, LiftSign::Plus)?;
    let zm = rabinowitz::z_lift(&cfg.model, cp, LiftSign::Minus)?;
    let path = linearized_flow(&cfg.model, &zp)?;
    let mu_cz = rs_index(&path)?;
    let chi_b = chi_block(&cfg.model, &zp, &path)?;
    let kernel_dim = kernel_dimension(&path, 1e-6 * path.end().amax().max(1.0));
    let path_m = linearized_flow(&cfg.model, &zm)?;
    let mu_minus = rs_index(&path_m)? - 0.5 * chi_block(&cfg.model, &zm, &path_m)? as f64;
    let mu_plus = mu_cz - 0.5 * chi_b as f64;
    let i = cp.morse_index_free as f64;
    let it = cp.morse_index_fixed as f64;
    let agreement = IndexAgreement {
        cz_vs_fixed: mu_cz - 0.5 == it,
        free_vs_fixed: i == it + 0.5 - 0.5 * chi_cont as f64,
        grading: mu_plus == i && mu_minus == -i,
        chi: chi_b == chi_cont,
        transversal: kernel_dim == 1,
    };
    Ok(IndexReport {
        class: cp.class().into(),
        period: cp.period,
        action: cp.action,
        mu_cz,
        i_t: cp.morse_index_fixed,
        i_free: cp.morse_index_free,
        nullity: cp.nullity,
        kernel_dim,
        chi_block: chi_b,
        chi_continuation: chi_cont,
        mu_plus,
        mu_minus,
        floquet: floquet_multipliers(&path),
        symplectic_defect: path.symplectic_defect,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;
    use crate::geometry::HomotopyClass;
    use crate::loops::DiscreteLoop;

    fn eps_cfg(eps: f64, n: usize) -> FreeTimeConfig {
        FreeTimeConfig::new(ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, eps)), 0.5, n)
    }

    fn orbit(cfg: &FreeTimeConfig, class: HomotopyClass, y: f64) -> LagCriticalPoint {
        let seed = DiscreteLoop::straight(cfg.n, class, [0.0, y]).unwrap();
        free_time::find_critical(cfg, &seed, class.m1.abs() as f64).unwrap()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = ManifoldModel {
            phi: FourierField::cosine(1, 1, 0.1),
            potential: FourierField::sine(1, 0, 0.05),
            flux: 0.6,
            theta_ex_x: FourierField::cosine(0, 1, 0.1),
            theta_ex_y: FourierField::sine(1, 1, 0.07),
            reference_base: [0.0, 0.0],
        };
        let q = [0.31, 0.77];
        let p = [0.5, -0.9];
        let jac = vf_jacobian(&m, q, p);
        let h = 1e-6;
        for c in 0..4 {
            let mut xp = [q[0], q[1], p[0], p[1]];
            let mut xm = xp;
            xp[c] += h;
            xm[c] -= h;
            let fp = rabinowitz::hamiltonian_vf(&m, [xp[0], xp[1]], [xp[2], xp[3]]);
            let fm = rabinowitz::hamiltonian_vf(&m, [xm[0], xm[1]], [xm[2], xm[3]]);
            for r in 0..4 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - jac[(r, c)]).abs() < 1e-7, "({r},{c}) {fd} {}", jac[(r, c)]);
            }
        }
        let o = omega_matrix(m.magnetic_density(q));
        let psi = trivialization(m.magnetic_density(q));
        assert!((psi.transpose() * omega_matrix(0.0) * psi - o).amax() < 1e-15);
    }

    #[test]
    fn constant_input_gives_identity_path() {
        let u = PhaseLoop::constant(16, [0.1, 0.2], [0.3, 0.4], 0.0).unwrap();
        let path = linearized_flow(&ManifoldModel::flat(), &u).unwrap();
        assert!((path.end() - Matrix4::identity()).amax() < 1e-15);
        assert_eq!(rs_index(&path).unwrap(), 0.0);
        assert_eq!(mu_grading(&ManifoldModel::flat(), &u).unwrap(), -1.0);
    }

    #[test]
    fn flat_geodesic_is_unipotent() {
        let g = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        let u = PhaseLoop::new(g, vec![[1.0, 0.0]; 32], 1.0).unwrap();
        let path = linearized_flow(&ManifoldModel::flat(), &u).unwrap();
        let end = path.end();
        let mut expect = Matrix4::identity();
        expect[(0, 2)] = 1.0;
        expect[(1, 3)] = 1.0;
        assert!((end - expect).amax() < 1e-10);
        for z in floquet_multipliers(&path) {
            assert!((z[0] - 1.0).abs() < 1e-6 && z[1].abs() < 1e-6);
        }
        assert!(path.closure_error < 1e-10);
    }

    #[test]
    fn rotation_paths() {
        // Harmonic oscillator in both planes with frequency a: index 2 floor(a) + 1 per plane.
        for (a, expect) in [(0.3, 2.0), (1.4, 6.0)] {
            let w = 2.0 * std::f64::consts::PI * a;
            let n = 2000;
            let mut times = Vec::new();
            let mut mats = Vec::new();
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let (s, c) = (w * t).sin_cos();
                let mut m = Matrix4::zeros();
                for d in 0..2 {
                    m[(d, d)] = c;
                    m[(d, 2 + d)] = s;
                    m[(2 + d, d)] = -s;
                    m[(2 + d, 2 + d)] = c;
                }
                times.push(t);
                mats.push(to_array(&m));
            }
            let path = SymplecticPath { times, matrices: mats, eta: 1.0, start: [0.0; 4], closure_error: 0.0, symplectic_defect: 0.0, projection: 0.0 };
            assert_eq!(rs_index(&path).unwrap(), expect, "a = {a}");
            let mid = n / 3;
            let split = rs_index_between(&path, 0, mid).unwrap() + rs_index_between(&path, mid, n).unwrap();
            assert_eq!(split, expect);
        }
    }

    #[test]
    fn perturbed_torus_orbits() {
        let cfg = eps_cfg(0.01, 64);
        let c = HomotopyClass::new(1, 0);
        let lo = orbit(&cfg, c, 0.0);
        let hi = orbit(&cfg, c, 0.5);
        let rl = index_report(&cfg, &lo).unwrap();
        let rh = index_report(&cfg, &hi).unwrap();
        assert_eq!(rl.mu_cz, 0.5);
        assert_eq!(rh.mu_cz, 1.5);
        assert!(rl.agreement.all(), "{rl:?}");
        assert!(rh.agreement.all(), "{rh:?}");
        // y = 0 is a maximum of U, hence hyperbolic; y = 1/2 is elliptic.
        assert!(rl.floquet.iter().any(|z| z[0] > 1.5));
        assert!(rh.floquet.iter().filter(|z| z[1].abs() > 0.1).count() == 2);
    }

    #[test]
    fn index_is_additive_and_iterates() {
        let cfg = eps_cfg(0.01, 64);
        let cp = orbit(&cfg, HomotopyClass::new(1, 0), 0.5);
        let zp = rabinowitz::z_lift(&cfg.model, &cp, LiftSign::Plus).unwrap();
        let path = linearized_flow(&cfg.model, &zp).unwrap();
        let twice = path.iterate(2);
        let n = path.matrices.len() - 1;
        let whole = rs_index(&twice).unwrap();
        let parts = rs_index_between(&twice, 0, n).unwrap() + rs_index_between(&twice, n, 2 * n).unwrap();
        assert_eq!(whole, parts);
        let cfg2 = eps_cfg(0.01, 128);
        let doubled = orbit(&cfg2, HomotopyClass::new(2, 0), 0.5);
        assert_eq!(doubled.nullity, 1);
        assert_eq!(whole - 0.5, doubled.morse_index_fixed as f64);
    }

    #[test]
    fn degenerate_geodesic_has_large_unit_block() {
        let g = DiscreteLoop::straight(32, HomotopyClass::new(1, 0), [0.0, 0.0]).unwrap();
        let u = PhaseLoop::new(g, vec![[1.0, 0.0]; 32], 1.0).unwrap();
        let path = linearized_flow(&ManifoldModel::flat(), &u).unwrap();
        assert!(matches!(chi_block(&ManifoldModel::flat(), &u, &path), Err(Error::UnitBlock(4))));
    }
}
