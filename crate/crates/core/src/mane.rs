//! Brackets for the critical values `e0 <= c <= c0`.
//!
//! Upper bounds come from explicit primitives (any primitive `theta'` gives
//! `c <= sup_q H(q, theta'_q)`), lower bounds from explicit closed curves of
//! negative `(L + theta + k)`-action.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::Result;
use crate::fourier::{FourierField, FourierTerm};
use crate::free_time::{self, FreeTimeConfig};
use crate::geometry::ManifoldModel;
use crate::loops::{loop_energy, DiscreteLoop};

/// Primitive `theta' = theta + df + h` of the lifted magnetic form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaugeFamily {
    pub f: FourierField,
    pub h: [f64; 2],
}

impl GaugeFamily {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Half-plane of modes with `|k|_inf <= kmax`, one per `+-k` pair.
    pub fn modes(kmax: i32) -> Vec<(i32, i32)> {
        let mut out = Vec::new();
        for kx in 0..=kmax {
            for ky in -kmax..=kmax {
                if kx > 0 || ky > 0 {
                    out.push((kx, ky));
                }
            }
        }
        out
    }

    fn from_params(modes: &[(i32, i32)], x: &[f64]) -> Self {
        let terms = modes
            .iter()
            .enumerate()
            .map(|(i, &(kx, ky))| FourierTerm { kx, ky, re: x[2 * i], im: x[2 * i + 1] })
            .collect();
        let m = 2 * modes.len();
        GaugeFamily { f: FourierField::new(terms), h: [x[m], x[m + 1]] }
    }

    pub fn primitive(&self, model: &ManifoldModel, q: [f64; 2]) -> [f64; 2] {
        let base = model.primitive_at(q);
        let df = self.f.jet(q).grad;
        [base[0] + df[0] + self.h[0], base[1] + df[1] + self.h[1]]
    }

    /// Gauge for the model scaled by `s` (see [`scaled_model`]).
    pub fn scaled(&self, s: f64) -> Self {
        GaugeFamily { f: self.f.scaled(s), h: [s * self.h[0], s * self.h[1]] }
    }

    /// Grid sup of `|d theta' - sigma|` with `d` taken by central differences.
    pub fn curl_defect(&self, model: &ManifoldModel) -> f64 {
        let m = 24;
        let e = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let q = [(i as f64 + 0.3) / m as f64, (j as f64 + 0.7) / m as f64];
                let d = |a: usize, c: usize| {
                    let mut qp = q;
                    let mut qm = q;
                    qp[a] += e;
                    qm[a] -= e;
                    (self.primitive(model, qp)[c] - self.primitive(model, qm)[c]) / (2.0 * e)
                };
                let curl = d(0, 1) - d(1, 0);
                worst = worst.max((curl - model.magnetic_density(q)).abs());
            }
        }
        worst
    }
}

/// `H(q, theta'_q) = |theta'_q|_g^2 / 2 + U(q)`.
pub fn gauge_energy(model: &ManifoldModel, gauge: &GaugeFamily, q: [f64; 2]) -> f64 {
    let th = gauge.primitive(model, q);
    let a = (-2.0 * model.phi.value(q)).exp();
    0.5 * a * (th[0] * th[0] + th[1] * th[1]) + model.potential.value(q)
}

fn max_mode(f: &FourierField) -> i32 {
    f.terms.iter().map(|t| t.kx.abs().max(t.ky.abs())).max().unwrap_or(0)
}

/// Sup of [`gauge_energy`] over the torus: grid search, then compass polish.
pub fn gauge_sup(model: &ManifoldModel, gauge: &GaugeFamily) -> (f64, [f64; 2]) {
    let kmax = [&model.phi, &model.potential, &model.theta_ex_x, &model.theta_ex_y, &gauge.f]
        .iter()
        .map(|f| max_mode(f))
        .max()
        .unwrap_or(0)
        .max(1);
    let m = (8 * kmax as usize).max(32);
    let mut pts: Vec<(f64, [f64; 2])> = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let q = [i as f64 / m as f64, j as f64 / m as f64];
            pts.push((gauge_energy(model, gauge, q), q));
        }
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = pts[0];
    for &(v0, q0) in pts.iter().take(4) {
        let (mut v, mut q) = (v0, q0);
        let mut step = 0.5 / m as f64;
        while step > 1e-10 {
            let mut moved = false;
            for d in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
                let c = [q[0] + step * d[0], q[1] + step * d[1]];
                let w = gauge_energy(model, gauge, c);
                if w > v {
                    v = w;
                    q = c;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if v > best.0 {
            best = (v, q);
        }
    }
    (best.0, best.1)
}

/// Model with `(sigma, U)` replaced by `(s sigma, s^2 U)`.
pub fn scaled_model(model: &ManifoldModel, s: f64) -> ManifoldModel {
    ManifoldModel {
        phi: model.phi.clone(),
        potential: model.potential.scaled(s * s),
        flux: s * model.flux,
        theta_ex_x: model.theta_ex_x.scaled(s),
        theta_ex_y: model.theta_ex_y.scaled(s),
        reference_base: model.reference_base,
    }
}

pub fn e0(model: &ManifoldModel) -> f64 {
    model.potential.max_value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManeOptions {
    /// Number of gauge evaluations in the upper-bound search.
    pub budget: usize,
    pub seed: u64,
    /// Largest Fourier mode of the gauge function `f`.
    pub gauge_modes: i32,
    /// Target bracket width of the bisection.
    pub tol: f64,
    pub max_bisect: usize,
    /// Probe energies used when no bounded primitive exists.
    pub probes: Vec<f64>,
    /// Base sample count of witness loops.
    pub n: usize,
    /// Largest circle radius tried when doubling.
    pub max_radius: f64,
}

impl Default for ManeOptions {
    fn default() -> Self {
        ManeOptions {
            budget: 400,
            seed: 0,
            gauge_modes: 2,
            tol: 1e-7,
            max_bisect: 80,
            probes: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            n: 64,
            max_radius: 1024.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperEstimate {
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub value: f64,
    pub gauge: Option<GaugeFamily>,
    pub argmax: Option<[f64; 2]>,
    pub evaluations: usize,
    pub reason: Option<String>,
}

/// Derivative-free minimization of `sup_q H(q, theta'_q)` over the gauge family.
///
/// Coordinate-wise random search with per-coordinate adaptive steps; only
/// improvements are accepted, so the result is non-increasing in `budget`.
pub fn c_upper(model: &ManifoldModel, opts: &ManeOptions) -> UpperEstimate {
    if !model.bounded_primitive_exists() {
        return UpperEstimate {
            value: f64::INFINITY,
            gauge: None,
            argmax: None,
            evaluations: 0,
            reason: Some("no bounded primitive".into()),
        };
    }
    let modes = GaugeFamily::modes(opts.gauge_modes);
    let dim = 2 * modes.len() + 2;
    let mut x = vec![0.0; dim];
    let mut best = gauge_sup(model, &GaugeFamily::from_params(&modes, &x));
    let scale = model.exact_primitive_sup().max(0.05);
    let mut steps: Vec<f64> = (0..dim)
        .map(|i| if i < 2 * modes.len() { scale / (2.0 * std::f64::consts::PI) } else { scale })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut evaluations = 1;
    while evaluations < opts.budget {
        let i = rng.gen_range(0..dim);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let delta = sign * steps[i] * (0.5 + rng.gen::<f64>());
        let mut trial = x.clone();
        trial[i] += delta;
        let cand = gauge_sup(model, &GaugeFamily::from_params(&modes, &trial));
        evaluations += 1;
        if cand.0 < best.0 {
            best = cand;
            x = trial;
            steps[i] *= 1.5;
        } else {
            steps[i] = (steps[i] * 0.6).max(1e-12);
        }
    }
    UpperEstimate {
        value: best.0,
        gauge: Some(GaugeFamily::from_params(&modes, &x)),
        argmax: Some(best.1),
        evaluations,
        reason: None,
    }
}

/// A closed curve with negative `(L + theta + k)`-action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub k: f64,
    pub kind: String,
    pub period: f64,
    pub action: f64,
    /// Action of the same curve and period on twice as many samples.
    pub action_refined: f64,
    #[serde(skip)]
    pub curve: DiscreteLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub k: f64,
    pub witness: Option<Witness>,
}

/// Optimal period and action of `q` for `T -> E/(2T) + T W + flux`.
fn closed_form_period(e: f64, w: f64) -> f64 {
    if w > 0.0 && e > 0.0 {
        (e / (2.0 * w)).sqrt()
    } else {
        1.0
    }
}

fn evaluate(model: &ManifoldModel, k: f64, kind: &str, q: &DiscreteLoop, extra_energy: f64) -> Option<Witness> {
    let (e, _) = loop_energy(model, q);
    let e = e + extra_energy;
    let n = q.len() as f64;
    let w = q.samples.iter().map(|p| k - model.potential.value(*p)).sum::<f64>() / n;
    let t = closed_form_period(e, w);
    let cfg = FreeTimeConfig::new(model.clone(), k, q.len());
    let a = free_time::action(&cfg, q, t).ok()? + extra_energy / (2.0 * t);
    if !(a < 0.0) {
        return None;
    }
    let fine = q.resample(2 * q.len()).ok()?;
    let a2 = free_time::action(&cfg, &fine, t).ok()? + extra_energy / (2.0 * t);
    (a2 < 0.0).then(|| Witness { k, kind: kind.into(), period: t, action: a, action_refined: a2, curve: q.clone() })
}

fn circle_samples(model: &ManifoldModel, r: f64, base: usize) -> usize {
    let wiggly = !(model.potential.is_zero() && model.phi.is_zero() && model.theta_ex_x.is_zero() && model.theta_ex_y.is_zero());
    if !wiggly {
        return base;
    }
    let kmax = [&model.phi, &model.potential, &model.theta_ex_x, &model.theta_ex_y]
        .iter()
        .map(|f| max_mode(f))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let need = (16.0 * r.abs() * kmax).ceil() as usize;
    need.max(base).next_power_of_two().min(8192)
}

/// Search contractible loops for a negative-action witness at energy `k`.
///
/// `extra_energy` adds `int |t'|^2` of an `S^1` factor (stabilized model).
fn witness_search(model: &ManifoldModel, k: f64, opts: &ManeOptions, extra_energy: f64) -> Option<Witness> {
    let (qstar, _) = model.potential.argmax();
    let konst = DiscreteLoop::constant(opts.n, qstar).ok()?;
    if let Some(w) = evaluate(model, k, "constant", &konst, extra_energy) {
        return Some(w);
    }
    let mut radii = vec![0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
    if !model.bounded_primitive_exists() {
        let mut r = 16.0;
        while r <= opts.max_radius {
            radii.push(r);
            r *= 2.0;
        }
    }
    let centers = [qstar, [0.0, 0.0]];
    let mut best: Option<Witness> = None;
    for r in radii {
        for sign in [1.0, -1.0] {
            for c in centers {
                let n = circle_samples(model, r, opts.n);
                let Ok(q) = DiscreteLoop::circle(n, c, sign * r) else { continue };
                if let Some(w) = evaluate(model, k, "circle", &q, extra_energy) {
                    if best.as_ref().map_or(true, |b| w.action < b.action) {
                        best = Some(w);
                    }
                }
            }
        }
        if best.is_some() {
            return best;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerEstimate {
    #[serde(serialize_with = "ser_extended")]
    pub value: f64,
    /// Smallest probed energy without a witness (bisection ceiling).
    #[serde(serialize_with = "ser_extended")]
    pub ceiling: f64,
    pub probes: Vec<Probe>,
    pub converged: bool,
}

fn bisect<F>(lo0: f64, hi0: f64, opts: &ManeOptions, probe: F) -> LowerEstimate
where
    F: Fn(f64) -> Option<Witness>,
{
    let mut probes = Vec::new();
    let first = probe(lo0);
    let mut lo = if first.is_some() { lo0 } else { f64::NEG_INFINITY };
    probes.push(Probe { k: lo0, witness: first });
    let mut hi = hi0;
    if lo.is_finite() {
        for _ in 0..opts.max_bisect {
            if hi - lo <= opts.tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let w = probe(mid);
            if w.is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
            probes.push(Probe { k: mid, witness: w });
        }
    }
    LowerEstimate { value: lo, ceiling: hi, converged: hi - lo <= opts.tol, probes }
}

/// Certified lower bound for `c` by bisection on `k` (bounded primitive) or,
/// without one, by probing the fixed energy grid `opts.probes`.
pub fn c_lower(model: &ManifoldModel, upper: f64, opts: &ManeOptions) -> LowerEstimate {
    lower_with(model, upper, opts, 0.0)
}

fn lower_with(model: &ManifoldModel, upper: f64, opts: &ManeOptions, extra: f64) -> LowerEstimate {
    if !model.bounded_primitive_exists() || !upper.is_finite() {
        let probes: Vec<Probe> =
            opts.probes.par_iter().map(|&k| Probe { k, witness: witness_search(model, k, opts, extra) }).collect();
        let value = probes.iter().filter(|p| p.witness.is_some()).map(|p| p.k).fold(f64::NEG_INFINITY, f64::max);
        let ceiling = probes.iter().filter(|p| p.witness.is_none()).map(|p| p.k).fold(f64::INFINITY, f64::min);
        let converged = probes.iter().all(|p| p.witness.is_some());
        return LowerEstimate { value, ceiling, probes, converged };
    }
    let lo0 = e0(model) - 1.0;
    bisect(lo0, upper, opts, |k| witness_search(model, k, opts, extra))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValueEstimate {
    pub e0: f64,
    #[serde(serialize_with = "ser_extended")]
    pub c_lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub c_upper: f64,
    #[serde(serialize_with = "ser_extended")]
    pub c0_lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub c0_upper: f64,
    pub upper: UpperEstimate,
    pub lower: LowerEstimate,
    pub reason: Option<String>,
}

impl CriticalValueEstimate {
    pub fn witnesses(&self) -> impl Iterator<Item = &Witness> {
        self.lower.probes.iter().filter_map(|p| p.witness.as_ref())
    }

    pub fn width(&self) -> f64 {
        self.c_upper - self.c_lower
    }
}

/// Full bracket for `c` and `c0`.
///
/// On the torus a closed curve is null-homologous iff it is contractible, so
/// the `c0` lower search uses the same witnesses; the upper bounds coincide
/// because the gauge family consists of forms on the torus itself.
pub fn estimate(model: &ManifoldModel, opts: &ManeOptions) -> CriticalValueEstimate {
    let upper = c_upper(model, opts);
    let lower = c_lower(model, upper.value, opts);
    let bounded = model.bounded_primitive_exists();
    CriticalValueEstimate {
        e0: e0(model),
        c_lower: lower.value,
        c_upper: upper.value,
        c0_lower: lower.value,
        c0_upper: if bounded { upper.value } else { f64::INFINITY },
        reason: upper.reason.clone(),
        upper,
        lower,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub s: f64,
    pub upper: f64,
    pub expected: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub upper_one: f64,
    pub rows: Vec<ScalingRow>,
    pub max_error: f64,
}

/// Transport the optimal gauge for `s = 1` to each scaled model and compare
/// with `s^2 upper(1)`.
pub fn scaling_check(model: &ManifoldModel, s_grid: &[f64], opts: &ManeOptions) -> ScalingReport {
    let up = c_upper(model, opts);
    let gauge = up.gauge.clone().unwrap_or_default();
    let rows: Vec<ScalingRow> = s_grid
        .iter()
        .map(|&s| {
            let scaled = scaled_model(model, s);
            let (upper, _) = gauge_sup(&scaled, &gauge.scaled(s));
            let expected = s * s * up.value;
            ScalingRow { s, upper, expected, error: (upper - expected).abs() }
        })
        .collect();
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    ScalingReport { upper_one: up.value, rows, max_error }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizedReport {
    pub base_lower: f64,
    pub base_upper: f64,
    pub hat_lower: f64,
    pub hat_upper: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compare the brackets for `H` and `H + p_t^2/2` on `T^*(M x S^1)`.
///
/// The stabilized gauge gains a constant `dt` component `h_t`, costing
/// `h_t^2/2` everywhere; stabilized witnesses may wind once around `S^1`.
pub fn stabilized_check(model: &ManifoldModel, opts: &ManeOptions) -> StabilizedReport {
    let base = estimate(model, opts);
    let gauge = base.upper.gauge.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let (sup, _) = gauge_sup(model, &gauge);
    let mut ht = 0.0;
    let mut hat_upper = sup;
    let mut step = 0.1;
    for _ in 0..opts.budget.min(64) {
        let trial = ht + step * (2.0 * rng.gen::<f64>() - 1.0);
        let v = sup + 0.5 * trial * trial;
        if v < hat_upper {
            hat_upper = v;
            ht = trial;
        } else {
            step *= 0.7;
        }
    }
    let hat_upper = hat_upper.max(sup + 0.5 * ht * ht);
    let hat_lower = [0.0, 1.0]
        .iter()
        .map(|&wind| lower_with(model, hat_upper, opts, wind).value)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 10.0 * opts.tol;
    let passed = hat_lower <= base.c_upper + tol
        && base.c_lower <= hat_upper + tol
        && (hat_upper - base.c_upper).abs() <= tol
        && (hat_lower - base.c_lower).abs() <= tol;
    StabilizedReport { base_lower: base.c_lower, base_upper: base.c_upper, hat_lower, hat_upper, tol, passed }
}

/// Finite values as numbers, infinities as the strings `"inf"` / `"-inf"`.
pub fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else if *v < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

fn de_extended<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ext {
        Num(f64),
        Str(String),
    }
    match Ext::deserialize(d)? {
        Ext::Num(v) => Ok(v),
        Ext::Str(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
        },
    }
}

/// Action of the circle of radius `r` (clockwise when `b > 0`) at its optimal
/// period on the flat torus with `U = 0`: `2 pi r sqrt(2k) - |b| pi r^2`.
pub fn circle_witness_formula(r: f64, k: f64, b: f64) -> f64 {
    2.0 * std::f64::consts::PI * r * (2.0 * k).sqrt() - b.abs() * std::f64::consts::PI * r * r
}

/// Re-evaluate a stored witness on the model; `Ok(action)` at the stored period.
pub fn reevaluate(model: &ManifoldModel, w: &Witness) -> Result<f64> {
    let cfg = FreeTimeConfig::new(model.clone(), w.k, w.curve.len());
    free_time::action(&cfg, &w.curve, w.period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;

    fn pendulum(eps: f64) -> ManifoldModel {
        ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, eps))
    }

    fn quick() -> ManeOptions {
        ManeOptions { budget: 120, ..Default::default() }
    }

    #[test]
    fn e0_examples() {
        assert_eq!(e0(&ManifoldModel::flat()), 0.0);
        assert!((e0(&pendulum(0.01)) - 0.01).abs() < 1e-14);
        let sep = ManifoldModel::flat().with_potential(FourierField::new(vec![
            FourierTerm { kx: 0, ky: 1, re: 0.01, im: 0.0 },
            FourierTerm { kx: 1, ky: 0, re: 0.02, im: 0.0 },
        ]));
        assert!((e0(&sep) - 0.03).abs() < 1e-12);
    }

    #[test]
    fn zero_data_bracket() {
        let est = estimate(&ManifoldModel::flat(), &quick());
        assert_eq!(est.c_upper, 0.0);
        assert!(est.c_lower <= 0.0 && est.c_lower >= -1e-3);
        assert!(est.witnesses().all(|w| w.k < 0.0 && w.action < 0.0 && w.action_refined < 0.0));
    }

    #[test]
    fn pendulum_bracket_contains_eps() {
        let eps = 0.01;
        let est = estimate(&pendulum(eps), &quick());
        assert!((est.c_upper - eps).abs() < 1e-12);
        assert!(est.c_lower <= eps && est.c_upper >= eps);
        assert!(est.width() < 1e-2 * eps + 1e-4);
        assert!(est.c_lower >= est.e0 - 1e-6);
    }

    #[test]
    fn upper_is_monotone_in_budget() {
        let model = pendulum(0.02).with_exact(FourierField::cosine(0, 1, 0.1), FourierField::zero());
        let mut last = f64::INFINITY;
        for budget in [1, 10, 40, 160] {
            let v = c_upper(&model, &ManeOptions { budget, ..Default::default() }).value;
            assert!(v <= last + 1e-15);
            last = v;
        }
        assert!(last >= e0(&model) - 1e-12);
    }

    #[test]
    fn gauge_preserves_curl() {
        let model = pendulum(0.02).with_exact(FourierField::cosine(1, 1, 0.1), FourierField::cosine(1, 0, -0.05));
        let up = c_upper(&model, &quick());
        assert!(up.gauge.unwrap().curl_defect(&model) < 1e-6);
    }

    #[test]
    fn magnetic_flux_has_no_upper_bound() {
        let model = ManifoldModel::flat().with_flux(1.0);
        let est = estimate(&model, &ManeOptions::default());
        assert!(est.c_upper.is_infinite());
        assert_eq!(est.reason.as_deref(), Some("no bounded primitive"));
        for p in &est.lower.probes {
            let w = p.witness.as_ref().expect("witness at every probe");
            assert!(w.action < 0.0 && w.action_refined < 0.0);
        }
        let w10 = est.lower.probes.iter().find(|p| p.k == 10.0).unwrap().witness.as_ref().unwrap();
        let r = 16.0;
        assert!((w10.action - circle_witness_formula(r, 10.0, 1.0)).abs() < 1e-8);
        let json = serde_json::to_string(&est).unwrap();
        assert!(json.contains("\"c_upper\":\"inf\""));
    }

    #[test]
    fn scaling_law() {
        let model = pendulum(0.01).with_exact(FourierField::cosine(0, 1, 0.1), FourierField::zero());
        let rep = scaling_check(&model, &[0.0, 0.25, 0.5, 0.75, 1.0], &quick());
        assert!(rep.max_error < 1e-6, "{rep:?}");
        assert_eq!(rep.rows[0].upper, 0.0);
        let half = scaling_check(&pendulum(0.01), &[0.5], &quick());
        assert!((half.rows[0].upper - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn stabilization_keeps_bracket() {
        let rep = stabilized_check(&pendulum(0.01), &quick());
        assert!(rep.passed, "{rep:?}");
    }
}
