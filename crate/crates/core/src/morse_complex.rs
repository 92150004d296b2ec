//! Morse-Bott chain complex with cascades for the free-time action in one
//! homotopy class, with coefficients in `Z/2`.
//!
//! Every non-constant critical point comes in a circle of time shifts. On
//! each circle the auxiliary function is `f(tau) = cos(2 pi tau)` in the phase
//! `tau` of the time shift relative to the stored representative, giving a
//! maximum at `tau = 0` (`i_f = 1`) and a minimum at `tau = 1/2` (`i_f = 0`).
//! For the trivial class the critical points at infinity are the critical
//! points of the self-indexing function `1 - (cos 2 pi x + cos 2 pi y)/2` on
//! the torus.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_time::{self, FreeTimeConfig, LagCriticalPoint};
use crate::geometry::HomotopyClass;
use crate::linalg;
use crate::loops::{w12_gram, DiscreteLoop};
use crate::ode::{dopri5, Dopri5Options};
use crate::spectral;

/// Distance below which two loops are the same point of a circle.
pub const SAME_CIRCLE: f64 = 1e-3;
/// Gradient norm below which a flow limit counts as critical.
pub const LIMIT_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorseOptions {
    pub action_cap: f64,
    /// Number of base offsets of the straight seeds.
    pub offsets: usize,
    /// Randomly wiggled copies per offset.
    pub wiggles: usize,
    pub seed: u64,
    /// Phases shot from each circle; the check reruns with twice as many.
    pub fan: usize,
    /// Size of the initial push along an unstable direction.
    pub shot_eps: f64,
    pub tau_max: f64,
}

impl Default for MorseOptions {
    fn default() -> Self {
        MorseOptions { action_cap: 3.0, offsets: 8, wiggles: 1, seed: 0, fan: 4, shot_eps: 1e-3, tau_max: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCircle {
    pub representative: LagCriticalPoint,
    pub index: usize,
}

impl CriticalCircle {
    pub fn action(&self) -> f64 {
        self.representative.action
    }

    /// The point of the circle at phase `tau`.
    pub fn at_phase(&self, tau: f64) -> DiscreteLoop {
        self.representative.curve.time_shift(tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enumeration {
    pub class: HomotopyClass,
    pub circles: Vec<CriticalCircle>,
    pub seeds: usize,
    /// Position of the seed that produced the last new circle.
    pub last_new: Option<usize>,
    /// No new circle in the second half of the seed list.
    pub complete: bool,
    pub action_cap: f64,
}

fn straight_period(cfg: &FreeTimeConfig, class: HomotopyClass, base: [f64; 2]) -> f64 {
    let m = class.vector();
    let len = m[0].hypot(m[1]) * cfg.model.phi.value(base).exp();
    len / (2.0 * (cfg.k - cfg.model.potential.value(base)).max(1e-3)).sqrt()
}

fn seeds(cfg: &FreeTimeConfig, class: HomotopyClass, opts: &MorseOptions) -> Result<Vec<(DiscreteLoop, f64)>> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::new();
    if class.is_trivial() {
        if cfg.model.flux != 0.0 {
            // flat magnetic circles of speed sqrt(2k), both orientations
            let speed = (2.0 * cfg.k.max(1e-3)).sqrt();
            let r = speed / cfg.model.flux.abs();
            for j in 0..opts.offsets {
                let c = [j as f64 / opts.offsets as f64, 0.5];
                for sign in [1.0, -1.0] {
                    out.push((DiscreteLoop::circle(n, c, sign * r)?, 2.0 * PI * r / speed));
                }
            }
        }
        for j in 0..opts.offsets {
            let c = [j as f64 / opts.offsets as f64, 0.5];
            let r = 0.05 + 0.4 * rng.gen::<f64>();
            let q = DiscreteLoop::circle(n, c, r)?;
            let t = 2.0 * PI * r / (2.0 * cfg.k.max(1e-3)).sqrt();
            out.push((q, t));
        }
        return Ok(out);
    }
    let m = class.vector();
    let perp = if class.m1 != 0 { [0.0, 1.0] } else { [1.0, 0.0] };
    let mut wiggled = Vec::new();
    for j in 0..opts.offsets {
        let s = j as f64 / opts.offsets as f64;
        let base = [cfg.model.reference_base[0] + s * perp[0], cfg.model.reference_base[1] + s * perp[1]];
        let t0 = straight_period(cfg, class, base);
        out.push((DiscreteLoop::straight(n, class, base)?, t0));
        for _ in 0..opts.wiggles {
            let amp = 0.05 * rng.gen::<f64>();
            let l = rng.gen_range(1..=2) as f64;
            let ph = rng.gen::<f64>();
            let q = DiscreteLoop::from_fn(n, class, |t| {
                let w = amp * (2.0 * PI * (l * t + ph)).sin();
                [base[0] + t * m[0] + w * perp[0], base[1] + t * m[1] + w * perp[1]]
            })?;
            wiggled.push((q, t0));
        }
    }
    out.extend(wiggled);
    Ok(out)
}

/// Newton from the seed, then descent plus Newton if that fails.
fn solve_seed(cfg: &FreeTimeConfig, q: &DiscreteLoop, t: f64) -> Result<LagCriticalPoint> {
    free_time::refine_critical(cfg, q, t)
        .and_then(|s| free_time::classify(cfg, s))
        .or_else(|_| free_time::find_critical(cfg, q, t))
}

fn same_circle(a: &DiscreteLoop, b: &DiscreteLoop) -> bool {
    a.without_nyquist().aligned_distance(&b.without_nyquist()).0 < SAME_CIRCLE
}

/// Multistart orbit search that keeps degenerate critical points.
///
/// One representative per circle, sorted by action; the action cap is ignored.
pub fn find_orbits(cfg: &FreeTimeConfig, class: HomotopyClass, opts: &MorseOptions) -> Result<Vec<LagCriticalPoint>> {
    let seeds = seeds(cfg, class, opts)?;
    let results: Vec<Result<LagCriticalPoint>> = seeds.par_iter().map(|(q, t)| solve_seed(cfg, q, *t)).collect();
    let mut out: Vec<LagCriticalPoint> = Vec::new();
    for r in results {
        let cp = match r {
            Ok(cp) => cp,
            Err(Error::NoConvergence { .. } | Error::Collapse { .. } | Error::StepUnderflow(_) | Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        if out.iter().any(|c| same_circle(&c.curve, &cp.curve)) {
            continue;
        }
        out.push(cp);
    }
    out.sort_by(|a, b| a.action.total_cmp(&b.action));
    Ok(out)
}

/// Multistart search for critical circles of `S` in `class` with action at
/// most `action_cap`, deduplicated by time-shift-aligned distance.
pub fn enumerate_critical(cfg: &FreeTimeConfig, class: HomotopyClass, opts: &MorseOptions) -> Result<Enumeration> {
    let seeds = seeds(cfg, class, opts)?;
    let results: Vec<Result<LagCriticalPoint>> = seeds.par_iter().map(|(q, t)| solve_seed(cfg, q, *t)).collect();
    let mut circles: Vec<CriticalCircle> = Vec::new();
    let mut last_new = None;
    for (i, r) in results.into_iter().enumerate() {
        let cp = match r {
            Ok(cp) => cp,
            Err(Error::NoConvergence { .. } | Error::Collapse { .. } | Error::StepUnderflow(_)) => continue,
            Err(e) => return Err(e),
        };
        if cp.action > opts.action_cap {
            continue;
        }
        if cp.nullity >= 2 {
            return Err(Error::NotRegular(format!("config not in O_reg: nullity {} at action {:.6}", cp.nullity, cp.action)));
        }
        if circles.iter().any(|c| same_circle(&c.representative.curve, &cp.curve)) {
            continue;
        }
        last_new = Some(i);
        let index = cp.morse_index_free;
        circles.push(CriticalCircle { representative: cp, index });
    }
    circles.sort_by(|a, b| a.action().total_cmp(&b.action()));
    let complete = match last_new {
        Some(i) => 2 * i < seeds.len(),
        None => class.is_trivial(),
    };
    Ok(Enumeration { class, circles, seeds: seeds.len(), last_new, complete, action_cap: opts.action_cap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    CircleMax,
    CircleMin,
    /// Critical point of the Morse function on the torus (trivial class).
    AtInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub circle: Option<usize>,
    /// Phase on the circle, or the point on the torus.
    pub position: [f64; 2],
    pub degree: usize,
    pub action: f64,
}

/// Negative directions of the full Hessian, W^{1,2}-normalized, as flat
/// `(samples, T)` vectors.
pub fn unstable_directions(cfg: &FreeTimeConfig, cp: &LagCriticalPoint) -> Result<Vec<DVector<f64>>> {
    let n = cp.curve.len();
    let h = free_time::hessian(cfg, &cp.curve, cp.period)?;
    let g = w12_gram(&cfg.model, &cp.curve);
    let b = spectral::nyquist_free_basis(n, 2, 1);
    let hr = b.transpose() * &h * &b;
    let gr = b.transpose() * &g * &b;
    let chol = gr.cholesky().ok_or_else(|| Error::LinearSolve("metric is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.ncols()))
        .ok_or_else(|| Error::LinearSolve("singular Cholesky factor".into()))?;
    let c = &linv * hr * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Vec::new();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -cfg.null_rel * scale {
            let y = eig.eigenvectors.column(j).into_owned();
            out.push(&b * (linv.transpose() * y));
        }
    }
    Ok(out)
}

/// Where a shot ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Landing {
    Circle { circle: usize, phase: f64 },
    Collapse,
    Unresolved,
}

fn shoot(
    cfg: &FreeTimeConfig,
    circles: &[CriticalCircle],
    from: usize,
    dir: &DVector<f64>,
    sign: f64,
    phase: f64,
    opts: &MorseOptions,
) -> Landing {
    let cp = &circles[from].representative;
    let mut z = cp.curve.to_flat();
    z.push(cp.period);
    for (zi, vi) in z.iter_mut().zip(dir.iter()) {
        *zi += sign * opts.shot_eps * vi;
    }
    let n2 = z.len() - 1;
    let Ok(q) = DiscreteLoop::from_flat(&z[..n2], cp.curve.class) else { return Landing::Unresolved };
    let q = q.time_shift(phase);
    // Limits only need to be located to SAME_CIRCLE; a stop at 10 grad_tol
    // keeps the flow off the round-off floor of the gradient.
    let flow_cfg = FreeTimeConfig { grad_tol: 10.0 * cfg.grad_tol, ..cfg.clone() };
    let Ok(rep) = free_time::descend_flow(&flow_cfg, &q, z[n2], opts.tau_max, None) else { return Landing::Unresolved };
    if rep.monitors.collapsed {
        return Landing::Collapse;
    }
    let res = rep.samples.last().map_or(f64::INFINITY, |s| s.residual);
    if !rep.monitors.converged || res > LIMIT_RESIDUAL {
        return Landing::Unresolved;
    }
    for (i, c) in circles.iter().enumerate() {
        let (d, tau) = rep.final_loop.aligned_distance(&c.representative.curve);
        if d < SAME_CIRCLE {
            return Landing::Circle { circle: i, phase: tau.rem_euclid(1.0) };
        }
    }
    Landing::Unresolved
}

/// Landings of `fan` equally spaced phases and both signs from a circle with
/// one unstable direction: `out[sign][j]`.
type FanData = [Vec<Landing>; 2];

fn fan_data(cfg: &FreeTimeConfig, circles: &[CriticalCircle], from: usize, fan: usize, opts: &MorseOptions) -> Result<FanData> {
    let dirs = unstable_directions(cfg, &circles[from].representative)?;
    if dirs.len() != 1 {
        return Err(Error::RefineGrid(format!("circle {from} has {} unstable directions; only one is supported", dirs.len())));
    }
    let jobs: Vec<(usize, usize)> = (0..2).flat_map(|s| (0..fan).map(move |j| (s, j))).collect();
    let lands: Vec<Landing> = jobs
        .par_iter()
        .map(|&(s, j)| {
            let sign = if s == 0 { 1.0 } else { -1.0 };
            shoot(cfg, circles, from, &dirs[0], sign, j as f64 / fan as f64, opts)
        })
        .collect();
    let (a, b) = lands.split_at(fan);
    Ok([a.to_vec(), b.to_vec()])
}

fn wrap(x: f64) -> f64 {
    x - x.round()
}

/// Count of `a(tau) = 0 mod 1` along the lifted arrival map over the fan.
fn crossings(phases: &[f64]) -> usize {
    let f = phases.len();
    let mut lift = vec![phases[0]];
    for j in 1..=f {
        let prev = lift[j - 1];
        let next = phases[j % f];
        lift.push(prev + wrap(next - prev));
    }
    // Arrivals exactly on the maximum are moved off it by a tiny offset.
    let off = 1e-7 * PI;
    let mut count = 0;
    for j in 0..f {
        let (a, b) = (lift[j].min(lift[j + 1]) - off, lift[j].max(lift[j + 1]) - off);
        count += (b.floor() - a.floor()).abs() as usize;
    }
    count
}

/// Cascade count between two generators on distinct circles, from fan data
/// of the upper circle.
fn circle_count(fan: &FanData, target: usize, gm: &Generator, gp: &Generator) -> Result<usize> {
    let mut count = 0;
    for lands in fan.iter() {
        match (gm.kind, gp.kind) {
            (GeneratorKind::CircleMin, GeneratorKind::CircleMin) => {
                let half = lands.len() / 2;
                match lands[half] {
                    Landing::Circle { circle, phase } if circle == target => {
                        if wrap(phase).abs() > 1e-9 {
                            count += 1;
                        }
                    }
                    Landing::Unresolved => return Err(Error::RefineGrid("unclassified shooting limit".into())),
                    _ => {}
                }
            }
            (GeneratorKind::CircleMax, GeneratorKind::CircleMax) => {
                let hits: Vec<f64> = lands
                    .iter()
                    .filter_map(|l| match l {
                        Landing::Circle { circle, phase } if *circle == target => Some(*phase),
                        _ => None,
                    })
                    .collect();
                if lands.iter().any(|l| matches!(l, Landing::Unresolved)) {
                    return Err(Error::RefineGrid("unclassified shooting limit".into()));
                }
                if hits.is_empty() {
                    continue;
                }
                if hits.len() != lands.len() {
                    return Err(Error::RefineGrid("shooting fan splits between limits".into()));
                }
                count += crossings(&hits);
            }
            _ => return Err(Error::RefineGrid("cascade type not supported".into())),
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainComplexData {
    pub class: HomotopyClass,
    pub generators: Vec<Generator>,
    /// Nonzero entries `(from, to)` of the boundary over `Z/2`.
    pub boundary: Vec<(usize, usize)>,
    /// Raw cascade counts `(from, to, count)` before reduction mod 2.
    pub counts: Vec<(usize, usize, usize)>,
    pub betti: Vec<usize>,
    pub d_squared_zero: bool,
    pub fan_stable: bool,
    pub action_cap: f64,
    pub seeds: usize,
    pub complete: bool,
}

impl ChainComplexData {
    pub fn boundary_matrix(&self) -> Vec<Vec<bool>> {
        let g = self.generators.len();
        let mut m = vec![vec![false; g]; g];
        for &(a, b) in &self.boundary {
            m[b][a] = true;
        }
        m
    }
}

/// The shipped Morse function on the torus, its gradient and critical points.
pub fn torus_morse(q: [f64; 2]) -> f64 {
    1.0 - 0.5 * ((2.0 * PI * q[0]).cos() + (2.0 * PI * q[1]).cos())
}

fn torus_morse_grad(q: [f64; 2]) -> [f64; 2] {
    [PI * (2.0 * PI * q[0]).sin(), PI * (2.0 * PI * q[1]).sin()]
}

/// `(point, index)` for the critical points of [`torus_morse`].
pub const TORUS_CRITICAL: [([f64; 2], usize); 4] =
    [([0.0, 0.0], 0), ([0.5, 0.0], 1), ([0.0, 0.5], 1), ([0.5, 0.5], 2)];

fn torus_limit(q0: [f64; 2], ascend: bool) -> Option<usize> {
    let s = if ascend { 1.0 } else { -1.0 };
    let f = |_t: f64, y: &[f64], d: &mut [f64]| {
        let g = torus_morse_grad([y[0], y[1]]);
        d[0] = s * g[0];
        d[1] = s * g[1];
    };
    let opts = Dopri5Options { rtol: 1e-10, atol: 1e-12, h_max: 0.05, ..Default::default() };
    let out = dopri5(f, 0.0, &q0, 50.0, &opts, |_, y| {
        let g = torus_morse_grad([y[0], y[1]]);
        g[0].hypot(g[1]) > 1e-9
    })
    .ok()?;
    TORUS_CRITICAL.iter().position(|(p, _)| wrap(out.y[0] - p[0]).abs() < 1e-4 && wrap(out.y[1] - p[1]).abs() < 1e-4)
}

/// Mod-2 counts of gradient lines of the torus Morse function between
/// critical points whose indices differ by one, by shooting from the saddle.
fn torus_counts(eps: f64) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (s, (p, idx)) in TORUS_CRITICAL.iter().enumerate() {
        if *idx != 1 {
            continue;
        }
        // The unstable axis of the saddle is the coordinate at 1/2.
        let ua = if p[0] == 0.5 { 0 } else { 1 };
        let mut down = vec![0usize; 4];
        let mut up = vec![0usize; 4];
        for sign in [1.0, -1.0] {
            let mut qu = *p;
            qu[ua] += sign * eps;
            if let Some(l) = torus_limit(qu, false) {
                down[l] += 1;
            }
            let mut qs = *p;
            qs[1 - ua] += sign * eps;
            if let Some(l) = torus_limit(qs, true) {
                up[l] += 1;
            }
        }
        for (l, &c) in down.iter().enumerate() {
            if TORUS_CRITICAL[l].1 == 0 {
                out.push((s, l, c));
            }
        }
        for (l, &c) in up.iter().enumerate() {
            if TORUS_CRITICAL[l].1 == 2 {
                out.push((l, s, c));
            }
        }
    }
    out
}

fn betti(generators: &[Generator], boundary: &[(usize, usize)]) -> (Vec<usize>, bool) {
    let g = generators.len();
    let Some(top) = generators.iter().map(|x| x.degree).max() else { return (vec![0, 0, 0], true) };
    let mut mat = vec![vec![false; g]; g];
    for &(a, b) in boundary {
        mat[b][a] = true;
    }
    let mut d2_zero = true;
    for i in 0..g {
        for j in 0..g {
            let mut acc = false;
            for k in 0..g {
                acc ^= mat[i][k] & mat[k][j];
            }
            d2_zero &= !acc;
        }
    }
    // rank of the boundary leaving degree d
    let rank_from = |d: usize| -> usize {
        let cols: Vec<usize> = (0..g).filter(|&j| generators[j].degree == d).collect();
        let rows: Vec<usize> = (0..g).filter(|&i| generators[i].degree + 1 == d).collect();
        let m: Vec<Vec<bool>> = rows.iter().map(|&i| cols.iter().map(|&j| mat[i][j]).collect()).collect();
        linalg::rank_mod2(&m)
    };
    let b = (0..=top.max(2))
        .map(|d| {
            let dim = generators.iter().filter(|x| x.degree == d).count();
            dim - rank_from(d) - rank_from(d + 1)
        })
        .collect();
    (b, d2_zero)
}

fn circle_generators(circles: &[CriticalCircle]) -> Vec<Generator> {
    let mut out = Vec::new();
    for (i, c) in circles.iter().enumerate() {
        out.push(Generator {
            kind: GeneratorKind::CircleMin,
            circle: Some(i),
            position: [0.5, 0.0],
            degree: c.index,
            action: c.action(),
        });
        out.push(Generator {
            kind: GeneratorKind::CircleMax,
            circle: Some(i),
            position: [0.0, 0.0],
            degree: c.index + 1,
            action: c.action(),
        });
    }
    out
}

fn circle_counts(
    cfg: &FreeTimeConfig,
    circles: &[CriticalCircle],
    gens: &[Generator],
    fan: usize,
    opts: &MorseOptions,
) -> Result<Vec<(usize, usize, usize)>> {
    let mut fans: Vec<Option<FanData>> = vec![None; circles.len()];
    let mut out = Vec::new();
    for (a, gm) in gens.iter().enumerate() {
        for (b, gp) in gens.iter().enumerate() {
            if gm.degree != gp.degree + 1 {
                continue;
            }
            let (cm, cp) = (gm.circle.unwrap(), gp.circle.unwrap());
            let count = if cm == cp {
                // the two arcs of the circle from its maximum to its minimum
                2
            } else if circles[cm].action() <= circles[cp].action() || circles[cm].index <= circles[cp].index {
                0
            } else if circles[cm].index != circles[cp].index + 1 {
                return Err(Error::RefineGrid(format!("index drop {} cascade not supported", circles[cm].index - circles[cp].index)));
            } else {
                if fans[cm].is_none() {
                    fans[cm] = Some(fan_data(cfg, circles, cm, fan, opts)?);
                }
                circle_count(fans[cm].as_ref().unwrap(), cp, gm, gp)?
            };
            out.push((a, b, count));
        }
    }
    Ok(out)
}

/// Assemble the complex in `class`, count cascades twice (fan and doubled fan
/// with halved flow tolerance), and compute the `Z/2` Betti numbers.
pub fn homology(cfg: &FreeTimeConfig, class: HomotopyClass, opts: &MorseOptions) -> Result<ChainComplexData> {
    let en = enumerate_critical(cfg, class, opts)?;
    let (generators, counts, fan_stable) = if class.is_trivial() {
        if !en.circles.is_empty() {
            return Err(Error::RefineGrid("contractible circles below the action cap are not supported".into()));
        }
        let gens: Vec<Generator> = TORUS_CRITICAL
            .iter()
            .map(|(p, idx)| Generator { kind: GeneratorKind::AtInfinity, circle: None, position: *p, degree: *idx, action: 0.0 })
            .collect();
        let c1 = torus_counts(1e-6);
        let c2 = torus_counts(5e-7);
        let stable = c1.iter().zip(&c2).all(|(a, b)| a.2 % 2 == b.2 % 2);
        (gens, c1, stable)
    } else {
        let gens = circle_generators(&en.circles);
        let c1 = circle_counts(cfg, &en.circles, &gens, opts.fan, opts)?;
        let fine = FreeTimeConfig { grad_tol: 0.5 * cfg.grad_tol, ..cfg.clone() };
        let c2 = circle_counts(&fine, &en.circles, &gens, 2 * opts.fan, opts)?;
        let stable = c1.len() == c2.len() && c1.iter().zip(&c2).all(|(a, b)| a.2 % 2 == b.2 % 2);
        (gens, c1, stable)
    };
    if !fan_stable {
        return Err(Error::RefineGrid("cascade counts changed under fan doubling".into()));
    }
    let boundary: Vec<(usize, usize)> = counts.iter().filter(|c| c.2 % 2 == 1).map(|c| (c.0, c.1)).collect();
    let (betti, d_squared_zero) = betti(&generators, &boundary);
    Ok(ChainComplexData {
        class,
        generators,
        boundary,
        counts,
        betti,
        d_squared_zero,
        fan_stable,
        action_cap: opts.action_cap,
        seeds: en.seeds,
        complete: en.complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;
    use crate::geometry::ManifoldModel;

    fn pendulum_cfg(n: usize) -> FreeTimeConfig {
        FreeTimeConfig::new(ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, 0.01)), 0.5, n)
    }

    #[test]
    fn crossing_counter() {
        let f: Vec<f64> = (0..8).map(|j| (j as f64 / 8.0 + 0.3).rem_euclid(1.0)).collect();
        assert_eq!(crossings(&f), 1);
        let g: Vec<f64> = (0..8).map(|j| (2.0 * j as f64 / 8.0 + 0.1).rem_euclid(1.0)).collect();
        assert_eq!(crossings(&g), 2);
    }

    #[test]
    fn pendulum_has_two_circles() {
        let en = enumerate_critical(&pendulum_cfg(32), HomotopyClass::new(1, 0), &MorseOptions::default()).unwrap();
        assert_eq!(en.circles.len(), 2);
        assert_eq!(en.circles.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0, 1]);
        assert!(en.complete);
    }

    #[test]
    fn flat_geodesics_are_degenerate() {
        let cfg = FreeTimeConfig::new(ManifoldModel::flat(), 0.5, 32);
        let err = enumerate_critical(&cfg, HomotopyClass::new(1, 0), &MorseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotRegular(_)));
    }

    #[test]
    fn torus_points_at_infinity() {
        let cx = homology(&pendulum_cfg(32), HomotopyClass::TRIVIAL, &MorseOptions { action_cap: 0.0, ..Default::default() })
            .unwrap();
        let mut deg: Vec<usize> = cx.generators.iter().map(|g| g.degree).collect();
        deg.sort();
        assert_eq!(deg, vec![0, 1, 1, 2]);
        assert!(cx.counts.iter().all(|c| c.2 == 2));
        assert_eq!(cx.betti, vec![1, 2, 1]);
    }

    #[test]
    fn empty_window_is_all_zero() {
        let cx = homology(&pendulum_cfg(32), HomotopyClass::new(1, 0), &MorseOptions { action_cap: 0.5, ..Default::default() })
            .unwrap();
        assert!(cx.generators.is_empty() && !cx.complete);
        assert_eq!(cx.betti, vec![0, 0, 0]);
    }

    #[test]
    fn pendulum_homology() {
        let cx = homology(&pendulum_cfg(32), HomotopyClass::new(1, 0), &MorseOptions::default()).unwrap();
        assert!(cx.d_squared_zero && cx.fan_stable);
        assert_eq!(cx.betti, vec![1, 2, 1]);
        for &(a, b) in &cx.boundary {
            assert!(cx.generators[a].action >= cx.generators[b].action);
        }
    }
}
