//! The free-time Lagrangian action
//! `S(q, T) = T int (L(q, q'/T) + k) dt + int_C qbar^* sigma`
//! for the mechanical Lagrangian `L = |v|_g^2 / 2 - U`, discretized on the
//! uniform loop grid, with its W^{1,2} gradient, Hessian, Morse indices,
//! critical-point search, orbit-cylinder sign and negative gradient flow.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HomotopyClass, LocalData, ManifoldModel};
use crate::linalg;
use crate::loops::{w12_gram, DiscreteLoop, TangentField};
use crate::spectral;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeTimeConfig {
    pub model: ManifoldModel,
    pub k: f64,
    pub n: usize,
    /// Acceptance threshold on the W^{1,2} gradient norm.
    pub grad_tol: f64,
    /// Target of the Newton phase.
    pub newton_tol: f64,
    /// Residual at which descent hands over to Newton.
    pub descent_tol: f64,
    pub max_descent: usize,
    pub max_newton: usize,
    /// `null_tol = null_rel * max |lambda|`.
    pub null_rel: f64,
    pub flow_step: f64,
    pub flow_max_steps: usize,
    /// Period below which a contractible search is declared collapsed.
    pub collapse_period: f64,
}

impl FreeTimeConfig {
    pub fn new(model: ManifoldModel, k: f64, n: usize) -> Self {
        FreeTimeConfig {
            model,
            k,
            n,
            grad_tol: 1e-8,
            newton_tol: 1e-10,
            descent_tol: 1e-3,
            max_descent: 20_000,
            max_newton: 60,
            null_rel: 1e-7,
            flow_step: 0.1,
            flow_max_steps: 200_000,
            collapse_period: 1e-3,
        }
    }

    pub fn with_k(&self, k: f64) -> Self {
        FreeTimeConfig { k, ..self.clone() }
    }

    pub fn supercritical_warning(&self) -> Option<String> {
        let e0 = self.model.potential.max_value();
        (self.k <= e0).then(|| format!("k = {} does not exceed max U = {e0}; k cannot be supercritical", self.k))
    }
}

/// A converged critical point of `S` together with its index data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCriticalPoint {
    #[serde(rename = "loop")]
    pub curve: DiscreteLoop,
    pub period: f64,
    pub action: f64,
    pub morse_index_free: usize,
    pub morse_index_fixed: usize,
    /// Kernel dimension of the fixed-period Hessian.
    pub nullity: usize,
    pub chi: Option<i8>,
    pub residual: f64,
}

impl LagCriticalPoint {
    pub fn class(&self) -> HomotopyClass {
        self.curve.class
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.nullity == 1
    }
}

/// Critical point without index data.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSolve {
    pub curve: DiscreteLoop,
    pub period: f64,
    pub action: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn check_period(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::NonPositivePeriod(t));
    }
    Ok(())
}

struct Pointwise {
    local: Vec<LocalData>,
    v: Vec<[f64; 2]>,
}

fn pointwise(model: &ManifoldModel, q: &DiscreteLoop) -> Pointwise {
    Pointwise { local: q.samples.iter().map(|p| model.local(*p)).collect(), v: q.velocities() }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `S(q, T)`.
pub fn action(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<f64> {
    check_period(t)?;
    let flux = cfg.model.cap_flux(q)?;
    let pw = pointwise(&cfg.model, q);
    let n = q.len() as f64;
    let bulk: f64 = pw
        .local
        .iter()
        .zip(&pw.v)
        .map(|(l, v)| l.conformal() * dot(*v, *v) / (2.0 * t) - t * l.u.value + cfg.k * t)
        .sum::<f64>()
        / n;
    Ok(bulk + flux)
}

/// `dS/dT = k - mean energy`.
pub fn dt_action(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<f64> {
    check_period(t)?;
    cfg.model.holonomy_constant(q.class)?;
    let pw = pointwise(&cfg.model, q);
    let n = q.len() as f64;
    Ok(pw
        .local
        .iter()
        .zip(&pw.v)
        .map(|(l, v)| cfg.k - l.conformal() * dot(*v, *v) / (2.0 * t * t) - l.u.value)
        .sum::<f64>()
        / n)
}

/// Energy `|q'/T|_g^2 / 2 + U` at each sample.
pub fn energy_samples(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Vec<f64> {
    let pw = pointwise(&cfg.model, q);
    pw.local.iter().zip(&pw.v).map(|(l, v)| l.conformal() * dot(*v, *v) / (2.0 * t * t) + l.u.value).collect()
}

/// Differential of `S` with respect to the sample coordinates and `T`,
/// flattened as `[dx0, dy0, ..., dT]`.
pub fn differential(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<Vec<f64>> {
    check_period(t)?;
    cfg.model.holonomy_constant(q.class)?;
    let pw = pointwise(&cfg.model, q);
    let n = q.len();
    let mut fq = vec![[0.0; 2]; n];
    let mut fv = vec![[0.0; 2]; n];
    let mut dt = 0.0;
    for i in 0..n {
        let l = &pw.local[i];
        let v = pw.v[i];
        let a = l.conformal();
        let v2 = dot(v, v);
        for c in 0..2 {
            let da = 2.0 * a * l.phi.grad[c];
            fq[i][c] = da * v2 / (2.0 * t) - t * l.u.grad[c] + l.dtheta[0][c] * v[0] + l.dtheta[1][c] * v[1];
            fv[i][c] = a * v[c] / t + l.theta[c];
        }
        dt += cfg.k - a * v2 / (2.0 * t * t) - l.u.value;
    }
    let dtf = spectral::diff2_t(&fv);
    let nf = n as f64;
    let mut out = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        out.push((fq[i][0] + dtf[i][0]) / nf);
        out.push((fq[i][1] + dtf[i][1]) / nf);
    }
    out.push(dt / nf);
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

fn flat_cache() -> &'static Mutex<HashMap<usize, Arc<Cholesky<f64, Dyn>>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Cholesky<f64, Dyn>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cholesky factor of `(I + D^T D) / N`, the flat W^{1,2} Gram per component.
fn flat_factor(n: usize) -> Arc<Cholesky<f64, Dyn>> {
    let mut cache = flat_cache().lock().unwrap();
    cache
        .entry(n)
        .or_insert_with(|| {
            let d = spectral::diff_matrix(n);
            let g = (DMatrix::identity(n, n) + d.transpose() * &d) / n as f64;
            Arc::new(g.cholesky().expect("flat W12 Gram is positive definite"))
        })
        .clone()
}

/// Solve `G_W x = rhs` for the W^{1,2} Gram of the loop, with a unit scalar slot.
pub fn w12_solve(model: &ManifoldModel, q: &DiscreteLoop, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = q.len();
    if rhs.len() != 2 * n + 1 {
        return Err(Error::DimensionMismatch { expected: 2 * n + 1, got: rhs.len() });
    }
    if model.is_flat() {
        let f = flat_factor(n);
        let bx = DVector::from_iterator(n, (0..n).map(|i| rhs[2 * i]));
        let by = DVector::from_iterator(n, (0..n).map(|i| rhs[2 * i + 1]));
        let x = f.solve(&bx);
        let y = f.solve(&by);
        let mut out = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            out.push(x[i]);
            out.push(y[i]);
        }
        out.push(rhs[2 * n]);
        return Ok(out);
    }
    let g = w12_gram(model, q);
    Ok(linalg::solve_spd(&g, &DVector::from_column_slice(rhs))?.iter().copied().collect())
}

/// W^{1,2} gradient and its norm.
pub fn gradient_with_norm(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<(Vec<f64>, f64)> {
    let d = differential(cfg, q, t)?;
    let g = w12_solve(&cfg.model, q, &d)?;
    let norm2: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
    Ok((g, norm2.max(0.0).sqrt()))
}

/// The W^{1,2} gradient as a tangent field with its period slot.
pub fn gradient(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<TangentField> {
    Ok(TangentField::from_vector(&gradient_with_norm(cfg, q, t)?.0))
}

/// Analytic Hessian in the sample coordinates and `T`, size `(2N+1)^2`.
pub fn hessian(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<DMatrix<f64>> {
    check_period(t)?;
    cfg.model.holonomy_constant(q.class)?;
    let pw = pointwise(&cfg.model, q);
    let n = q.len();
    let d = spectral::diff_matrix(n);
    let mut h = DMatrix::<f64>::zeros(2 * n + 1, 2 * n + 1);
    let mut fqv = vec![[[0.0; 2]; 2]; n];
    let mut ftv = vec![[0.0; 2]; n];
    let mut avec = vec![0.0; n];
    let mut ftt = 0.0;
    for i in 0..n {
        let l = &pw.local[i];
        let v = pw.v[i];
        let a = l.conformal();
        avec[i] = a;
        let v2 = dot(v, v);
        let g = l.phi.grad;
        let da = [2.0 * a * g[0], 2.0 * a * g[1]];
        let mut fqq = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                let dda = a * (4.0 * g[r] * g[c] + 2.0 * l.phi.hess[r][c]);
                fqq[r][c] = dda * v2 / (2.0 * t) - t * l.u.hess[r][c]
                    + l.ddtheta[0][r][c] * v[0]
                    + l.ddtheta[1][r][c] * v[1];
                fqv[i][r][c] = da[r] * v[c] / t + l.dtheta[c][r];
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                h[(2 * i + r, 2 * i + c)] += fqq[r][c];
            }
            let ftq = -da[r] * v2 / (2.0 * t * t) - l.u.grad[r];
            h[(2 * i + r, 2 * n)] += ftq;
            ftv[i][r] = -a * v[r] / (t * t);
        }
        ftt += a * v2 / (t * t * t);
    }
    // D_jl f_qv(j) + D_lj f_vq(l)
    for j in 0..n {
        for l in 0..n {
            let djl = d[(j, l)];
            let dlj = d[(l, j)];
            if djl == 0.0 && dlj == 0.0 {
                continue;
            }
            for r in 0..2 {
                for c in 0..2 {
                    h[(2 * j + r, 2 * l + c)] += djl * fqv[j][r][c] + dlj * fqv[l][c][r];
                }
            }
        }
    }
    // D^T diag(a/T) D on each component
    let mut wd = d.clone();
    for i in 0..n {
        let w = avec[i] / t;
        for c in 0..n {
            wd[(i, c)] *= w;
        }
    }
    let dtwd = d.transpose() * wd;
    for j in 0..n {
        for l in 0..n {
            let val = dtwd[(j, l)];
            h[(2 * j, 2 * l)] += val;
            h[(2 * j + 1, 2 * l + 1)] += val;
        }
    }
    // sum_i D_ij f_Tv(i)
    for j in 0..n {
        for i in 0..n {
            let dij = d[(i, j)];
            if dij != 0.0 {
                for r in 0..2 {
                    h[(2 * j + r, 2 * n)] += dij * ftv[i][r];
                }
            }
        }
    }
    for j in 0..2 * n {
        h[(2 * n, j)] = h[(j, 2 * n)];
    }
    h[(2 * n, 2 * n)] = ftt;
    h /= n as f64;
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(h)
}

/// Index data of a critical point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorseData {
    /// Negative directions of the full Hessian.
    pub index_free: usize,
    /// Negative directions with the period frozen.
    pub index_fixed: usize,
    /// Kernel dimension with the period frozen.
    pub nullity: usize,
    pub nullity_free: usize,
    pub null_tol: f64,
    /// Smallest nonzero eigenvalue magnitude of the frozen block.
    pub spectral_gap: f64,
}

fn count_with_tol(ev: &[f64], tol: f64) -> Result<(usize, usize)> {
    if let Some(bad) = ev.iter().find(|v| v.abs() > tol && v.abs() < 10.0 * tol) {
        return Err(Error::RefineGrid(format!("eigenvalue {bad:.3e} inside the ambiguous band ({tol:.1e}, {:.1e})", 10.0 * tol)));
    }
    let (neg, zero, _) = linalg::inertia(ev, tol);
    Ok((neg, zero))
}

/// Morse indices from the generalized eigenproblem of the Hessian against
/// the W^{1,2} Gram.
pub fn morse_indices(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<MorseData> {
    let n = q.len();
    let h = hessian(cfg, q, t)?;
    let g = w12_gram(&cfg.model, q);
    let n2 = 2 * n;
    let hq = spectral::reduce_nyquist(&h.view((0, 0), (n2, n2)).into_owned(), n, 2, 0);
    let gq = spectral::reduce_nyquist(&g.view((0, 0), (n2, n2)).into_owned(), n, 2, 0);
    let h = spectral::reduce_nyquist(&h, n, 2, 1);
    let g = spectral::reduce_nyquist(&g, n, 2, 1);
    let ev_free = linalg::generalized_eigenvalues(&h, &g)?;
    let ev_fixed = linalg::generalized_eigenvalues(&hq, &gq)?;
    let scale = ev_free.iter().chain(&ev_fixed).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = cfg.null_rel * scale;
    let (index_free, nullity_free) = count_with_tol(&ev_free, tol)?;
    let (index_fixed, nullity) = count_with_tol(&ev_fixed, tol)?;
    let spectral_gap = ev_fixed.iter().map(|v| v.abs()).filter(|v| *v > tol).fold(f64::INFINITY, f64::min);
    Ok(MorseData { index_free, index_fixed, nullity, nullity_free, null_tol: tol, spectral_gap })
}

fn unpack(z: &[f64], class: HomotopyClass) -> Result<(DiscreteLoop, f64)> {
    let n2 = z.len() - 1;
    Ok((DiscreteLoop::from_flat(&z[..n2], class)?, z[n2]))
}

fn pack(q: &DiscreteLoop, t: f64) -> Vec<f64> {
    let mut z = q.to_flat();
    z.push(t);
    z
}

/// Plain W^{1,2} gradient descent with Armijo backtracking.
fn descend(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64, target: f64) -> Result<(DiscreteLoop, f64, f64, usize)> {
    let class = q.class;
    let mut z = pack(q, t);
    let (mut cur_q, mut cur_t) = (q.clone(), t);
    let mut s = action(cfg, &cur_q, cur_t)?;
    let mut step = 1.0;
    for it in 0..cfg.max_descent {
        let (g, res) = gradient_with_norm(cfg, &cur_q, cur_t)?;
        if res < target {
            return Ok((cur_q, cur_t, res, it));
        }
        if class.is_trivial() && cur_t < cfg.collapse_period {
            return Err(Error::Collapse { period: cur_t, action: s });
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let tt = trial[trial.len() - 1];
            if tt <= 0.0 {
                step *= 0.5;
                continue;
            }
            let (tq, _) = unpack(&trial, class)?;
            let Ok(ts) = action(cfg, &tq, tt) else {
                step *= 0.5;
                continue;
            };
            if ts <= s - 1e-4 * step * res * res {
                z = trial;
                cur_q = tq;
                cur_t = tt;
                s = ts;
                step = (step * 1.5).min(1e3);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok((cur_q, cur_t, res, it));
        }
    }
    let res = gradient_with_norm(cfg, &cur_q, cur_t)?.1;
    if res < target {
        return Ok((cur_q, cur_t, res, cfg.max_descent));
    }
    Err(Error::NoConvergence { iterations: cfg.max_descent, residual: res })
}

/// Levenberg-damped Newton iteration on `dS = 0`.
fn newton(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<(DiscreteLoop, f64, f64, usize)> {
    let class = q.class;
    let mut cur_q = q.clone();
    let mut cur_t = t;
    let (_, mut res) = gradient_with_norm(cfg, &cur_q, cur_t)?;
    let mut mu = 1e-10;
    let mut stalls = 0;
    let mut it = 0;
    while it < cfg.max_newton && res >= cfg.newton_tol {
        it += 1;
        let d = DVector::from_vec(differential(cfg, &cur_q, cur_t)?);
        let h = hessian(cfg, &cur_q, cur_t)?;
        let g = w12_gram(&cfg.model, &cur_q);
        let mut improved = false;
        for _ in 0..12 {
            let a = &h + &g * mu;
            let Ok(delta) = linalg::solve(&a, &(-&d)) else {
                mu *= 10.0;
                continue;
            };
            let mut z = pack(&cur_q, cur_t);
            for (zi, di) in z.iter_mut().zip(delta.iter()) {
                *zi += di;
            }
            let tt = z[z.len() - 1];
            if tt <= 0.0 {
                mu *= 10.0;
                continue;
            }
            let (tq, _) = unpack(&z, class)?;
            let Ok((_, tres)) = gradient_with_norm(cfg, &tq, tt) else {
                mu *= 10.0;
                continue;
            };
            if tres < res {
                cur_q = tq;
                cur_t = tt;
                res = tres;
                mu = (mu * 0.1).max(1e-14);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            stalls += 1;
            if stalls >= 2 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok((cur_q, cur_t, res, it))
}

/// Descent to `descent_tol` followed by damped Newton to `newton_tol`.
pub fn solve_critical(cfg: &FreeTimeConfig, seed: &DiscreteLoop, t0: f64) -> Result<CriticalSolve> {
    check_period(t0)?;
    let (q1, t1, _, it1) = descend(cfg, seed, t0, cfg.descent_tol)?;
    refine_critical(cfg, &q1, t1).map(|mut c| {
        c.iterations += it1;
        c
    })
}

/// Newton refinement only, for seeds already close to a critical point.
pub fn refine_critical(cfg: &FreeTimeConfig, seed: &DiscreteLoop, t0: f64) -> Result<CriticalSolve> {
    check_period(t0)?;
    let (q, t, res, it) = newton(cfg, seed, t0)?;
    if res >= cfg.grad_tol {
        return Err(Error::NoConvergence { iterations: it, residual: res });
    }
    if q.class.is_trivial() && t < cfg.collapse_period {
        return Err(Error::Collapse { period: t, action: action(cfg, &q, t)? });
    }
    let s = action(cfg, &q, t)?;
    Ok(CriticalSolve { curve: q, period: t, action: s, residual: res, iterations: it })
}

/// Attach Morse data to a solved point, and the orbit-cylinder sign when the
/// point is nondegenerate.
pub fn classify(cfg: &FreeTimeConfig, sol: CriticalSolve) -> Result<LagCriticalPoint> {
    let m = morse_indices(cfg, &sol.curve, sol.period)?;
    let mut cp = LagCriticalPoint {
        curve: sol.curve,
        period: sol.period,
        action: sol.action,
        morse_index_free: m.index_free,
        morse_index_fixed: m.index_fixed,
        nullity: m.nullity,
        chi: None,
        residual: sol.residual,
    };
    if cp.nullity == 1 {
        cp.chi = Some(chi_by_continuation(cfg, &cp)?);
    }
    Ok(cp)
}

/// Find a critical point from a seed and classify it.
pub fn find_critical(cfg: &FreeTimeConfig, seed: &DiscreteLoop, t0: f64) -> Result<LagCriticalPoint> {
    let sol = solve_critical(cfg, seed, t0)?;
    classify(cfg, sol)
}

/// `chi = sign(-dT_s/ds)` along the orbit cylinder through `cp`.
pub fn chi_by_continuation(cfg: &FreeTimeConfig, cp: &LagCriticalPoint) -> Result<i8> {
    if cp.nullity != 1 {
        return Err(Error::Degenerate(cp.nullity));
    }
    let mut dk = 1e-3 * cfg.k.abs().max(1e-3);
    let mut last: Option<i8> = None;
    for _ in 0..8 {
        let plus = refine_critical(&cfg.with_k(cfg.k + dk), &cp.curve, cp.period)?;
        let minus = refine_critical(&cfg.with_k(cfg.k - dk), &cp.curve, cp.period)?;
        let slope = (plus.period - minus.period) / (2.0 * dk);
        if slope == 0.0 || !slope.is_finite() {
            return Err(Error::NotRegular(format!("period does not vary along the cylinder (slope {slope})")));
        }
        let sign: i8 = if slope < 0.0 { 1 } else { -1 };
        if last == Some(sign) {
            return Ok(sign);
        }
        last = Some(sign);
        dk *= 0.5;
    }
    Err(Error::NotRegular("orbit-cylinder slope sign did not stabilize".into()))
}

/// Sup over samples of `|nabla_t g' + Y g' + grad U|` for `g(t) = q(t/T)`, in
/// coordinates.
pub fn euler_lagrange_residual(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> f64 {
    let v = q.velocities();
    let acc = spectral::diff2(&v);
    let mut worst: f64 = 0.0;
    for i in 0..q.len() {
        let l = cfg.model.local(q.samples[i]);
        let gd = [v[i][0] / t, v[i][1] / t];
        let gdd = [acc[i][0] / (t * t), acc[i][1] / (t * t)];
        let gam = crate::geometry::christoffel(l.phi.grad);
        let inv = 1.0 / l.conformal();
        let y = l.s * inv;
        let yv = [-y * gd[1], y * gd[0]];
        for c in 0..2 {
            let mut cov = gdd[c];
            for a in 0..2 {
                for b in 0..2 {
                    cov += gam[c][a][b] * gd[a] * gd[b];
                }
            }
            let r = cov + yv[c] + inv * l.u.grad[c];
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Growth constants of the mechanical Lagrangian with a bounded primitive:
/// `f1 |v|^2 + f2 >= L + theta >= e1 |v|^2 - e2` and `E >= g1 |v|^2 - g2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub e1: f64,
    pub e2: f64,
    pub f1: f64,
    pub f2: f64,
    pub g1: f64,
    pub g2: f64,
    pub h0: f64,
    pub h1: f64,
}

/// Closed-form growth constants, or `None` without a bounded primitive.
pub fn growth_constants(model: &ManifoldModel, k: f64) -> Option<GrowthConstants> {
    if !model.bounded_primitive_exists() {
        return None;
    }
    let umax = model.potential.max_value();
    let umin = model.potential.min_value();
    let th = model.exact_primitive_sup();
    let (e1, e2, f1, f2) = if th == 0.0 {
        (0.5, umax.max(0.0), 0.5, (-umin).max(0.0))
    } else {
        (0.25, th * th + umax.max(0.0), 1.0, 0.5 * th * th + (-umin).max(0.0))
    };
    let g1 = 0.5;
    let g2 = (-umin).max(0.0);
    let h0 = (f2 + f1 / g1 * g2 + (1.0 + f1 / g1) * k).max(f64::MIN_POSITIVE);
    Some(GrowthConstants { e1, e2, f1, f2, g1, g2, h0, h1: 1.0 / h0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub tau: f64,
    pub action: f64,
    pub period: f64,
    pub dt_action: f64,
    pub residual: f64,
    pub energy: f64,
}

/// Verdicts of the qualitative flow monitors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowMonitors {
    pub constants: Option<GrowthConstants>,
    /// Samples where `S > h0 T` was tested (contractible flows only).
    pub growth_checks: usize,
    /// Samples where `S > h0 T` but the period did not grow.
    pub growth_violations: usize,
    pub collapsed: bool,
    pub converged: bool,
    pub monotone: bool,
    /// Levels `Sbar` for which membership in `{S < Sbar, T < h1 Sbar}` was
    /// not a prefix of the trajectory.
    pub sublevel_prefix_violations: usize,
    pub positivity_checks: usize,
    pub positivity_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub samples: Vec<FlowSample>,
    pub monitors: FlowMonitors,
    pub final_loop: DiscreteLoop,
    pub final_period: f64,
}

impl FlowReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,S,T,dS_dT,residual,loop_energy\n");
        for r in &self.samples {
            s.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.tau, r.action, r.period, r.dt_action, r.residual, r.energy
            ));
        }
        s
    }
}

/// Negative W^{1,2} gradient flow of `S` with Armijo-controlled explicit
/// steps. `c_estimate` enables the positivity monitor on contractible loops.
pub fn descend_flow(
    cfg: &FreeTimeConfig,
    q0: &DiscreteLoop,
    t0: f64,
    tau_max: f64,
    c_estimate: Option<f64>,
) -> Result<FlowReport> {
    check_period(t0)?;
    let class = q0.class;
    let constants = growth_constants(&cfg.model, cfg.k);
    let mut mon = FlowMonitors { constants, monotone: true, ..Default::default() };
    let mut q = q0.clone();
    let mut t = t0;
    let mut s = action(cfg, &q, t)?;
    let mut tau = 0.0;
    let mut dtau = cfg.flow_step;
    let mut samples = Vec::new();
    let s0 = s.abs().max(1e-300);
    let positivity = c_estimate.is_some_and(|c| cfg.k > c) && class.is_trivial();
    for _ in 0..cfg.flow_max_steps {
        let (g, res) = gradient_with_norm(cfg, &q, t)?;
        let dsdt = dt_action(cfg, &q, t)?;
        let energy = crate::loops::loop_energy(&cfg.model, &q).0;
        samples.push(FlowSample { tau, action: s, period: t, dt_action: dsdt, residual: res, energy });
        if positivity {
            mon.positivity_checks += 1;
            if s <= 0.0 {
                mon.positivity_violations += 1;
            }
        }
        if class.is_trivial() {
            if let Some(c) = &constants {
                if s > c.h0 * t {
                    mon.growth_checks += 1;
                    // dT/dtau = -dS/dT in the W^{1,2} metric.
                    if -dsdt <= 0.0 {
                        mon.growth_violations += 1;
                    }
                }
            }
            if t < cfg.collapse_period || (s.abs() < 1e-6 * s0 && t < 1e-2) {
                mon.collapsed = true;
                break;
            }
        }
        if res < cfg.grad_tol {
            mon.converged = true;
            break;
        }
        if tau >= tau_max {
            break;
        }
        let z = pack(&q, t);
        let mut accepted = false;
        while dtau > 1e-14 {
            let trial: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - dtau * b).collect();
            let tt = trial[trial.len() - 1];
            if tt > 0.0 {
                let (tq, _) = unpack(&trial, class)?;
                let ts = action(cfg, &tq, tt)?;
                if ts <= s - 1e-4 * dtau * res * res {
                    if ts > s {
                        mon.monotone = false;
                    }
                    q = tq;
                    t = tt;
                    s = ts;
                    tau += dtau;
                    dtau = (dtau * 1.25).min(tau_max.max(cfg.flow_step));
                    accepted = true;
                    break;
                }
            }
            dtau *= 0.5;
        }
        if !accepted {
            if res < 1e2 * cfg.grad_tol {
                mon.converged = true;
                break;
            }
            return Err(Error::StepUnderflow(tau));
        }
    }
    if let Some(c) = &constants {
        if class.is_trivial() {
            mon.sublevel_prefix_violations = prefix_violations(&samples, c.h1);
        }
    }
    Ok(FlowReport { samples, monitors: mon, final_loop: q, final_period: t })
}

/// For each level `Sbar` taken from the trajectory, check that the samples
/// lying in `{S < Sbar, T < h1 Sbar}` form an initial segment.
fn prefix_violations(samples: &[FlowSample], h1: f64) -> usize {
    let mut bad = 0;
    let stride = (samples.len() / 64).max(1);
    for lvl in samples.iter().step_by(stride) {
        let sbar = lvl.action;
        if sbar <= 0.0 {
            continue;
        }
        let inside: Vec<bool> = samples.iter().map(|r| r.action < sbar && r.period < h1 * sbar).collect();
        // Backward invariance: once outside at time tau, outside for all later
        // samples is impossible to require; we require inside => inside earlier.
        if let Some(last_in) = inside.iter().rposition(|&b| b) {
            if inside[..=last_in].iter().any(|&b| !b) {
                bad += 1;
            }
        }
    }
    bad
}
