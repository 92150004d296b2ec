//! Identity checks shared by the `verify` command and the acceptance tests.
//!
//! Checks 1, 4, 7, 9 and 10 run on pinned reference models. Checks 2, 3, 5, 6
//! and 8 run on the model of the run configuration.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::FourierField;
use crate::free_time::{self, FreeTimeConfig, LagCriticalPoint};
use crate::geometry::{HomotopyClass, ManifoldModel};
use crate::indices;
use crate::leafwise::{self, ChiProfile, FSpec, LeafwiseSeed};
use crate::loops::{w12_gram, DiscreteLoop};
use crate::mane::{self, ManeOptions};
use crate::morse_complex::{self, MorseOptions};
use crate::rabinowitz::{self, LiftSign, PhaseLoop, RabinowitzConfig, RfFlowOptions};

/// Pass thresholds. Tolerances larger than a thousand times the default
/// (or a gap ratio below a thousandth of it) are reported as weak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub closed_form: f64,
    pub action_identity: f64,
    pub gradient_rel: f64,
    /// Minimum ratio between the 4th and 3rd smallest Hessian magnitudes.
    pub kernel_gap: f64,
    pub energy_identity: f64,
    pub mane_zero: f64,
    pub scaling: f64,
    pub truncation: f64,
    pub leafwise: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            closed_form: 1e-6,
            action_identity: 1e-8,
            gradient_rel: 1e-5,
            kernel_gap: 1e3,
            energy_identity: 1e-6,
            mane_zero: 1e-3,
            scaling: 1e-6,
            truncation: 1e-8,
            leafwise: 1e-5,
        }
    }
}

impl Tolerances {
    fn pairs(&self) -> [(&'static str, f64, f64); 9] {
        let d = Tolerances::default();
        [
            ("closed_form", self.closed_form, d.closed_form),
            ("action_identity", self.action_identity, d.action_identity),
            ("gradient_rel", self.gradient_rel, d.gradient_rel),
            ("kernel_gap", d.kernel_gap, self.kernel_gap),
            ("energy_identity", self.energy_identity, d.energy_identity),
            ("mane_zero", self.mane_zero, d.mane_zero),
            ("scaling", self.scaling, d.scaling),
            ("truncation", self.truncation, d.truncation),
            ("leafwise", self.leafwise, d.leafwise),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a, b) in self.pairs() {
            if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("tolerance {name} must be positive and finite")));
            }
        }
        Ok(())
    }

    /// Names of tolerances loose enough to make their check uninformative.
    pub fn weak(&self) -> Vec<&'static str> {
        self.pairs().iter().filter(|(_, a, b)| *a > 1e3 * *b).map(|p| p.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    /// Criteria to run, numbered as in the acceptance suite (1 to 10).
    pub checks: Vec<u8>,
    pub gradient_probes: usize,
    pub constant_loops: usize,
    pub flows: usize,
    /// Grid of the Rabinowitz flows and truncation seeds.
    pub flow_n: usize,
    pub truncation_seeds: usize,
    pub truncation_radius: f64,
    pub mane: ManeOptions,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            checks: (1..=10).collect(),
            gradient_probes: 100,
            constant_loops: 20,
            flows: 20,
            flow_n: 32,
            truncation_seeds: 10,
            truncation_radius: 10.0,
            mane: ManeOptions { budget: 120, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u8,
    pub name: String,
    pub status: Status,
    /// Worst measured value against `tolerance`.
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
    /// Wall time, kept out of the JSON so verdicts are reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Check {
    fn new(id: u8, name: &str, passed: bool, measured: f64, tolerance: f64, detail: String) -> Self {
        Check {
            id,
            name: name.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            measured,
            tolerance,
            detail,
            annotation: None,
            elapsed: Duration::ZERO,
        }
    }

    fn skipped(id: u8, name: &str, why: String) -> Self {
        Check { status: Status::Skipped, ..Check::new(id, name, true, 0.0, 0.0, why) }
    }

    fn failed(id: u8, name: &str, err: &Error) -> Self {
        Check::new(id, name, false, f64::NAN, 0.0, format!("error: {err}"))
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    /// One summary line, `PASS`/`FAIL`/`SKIP` first.
    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let mut s = format!("[{tag}] {:>2} {:<22} measured {:.3e} tol {:.1e}  {}", self.id, self.name, self.measured, self.tolerance, self.detail);
        if let Some(a) = &self.annotation {
            s.push_str(&format!(" ({a})"));
        }
        s
    }
}

fn timed(f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let mut c = f();
    c.elapsed = start.elapsed();
    c
}

/// `flat + eps cos(2 pi y)`.
pub fn pendulum(eps: f64) -> ManifoldModel {
    ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, eps))
}

/// The small bump used by the leaf-wise check.
pub fn small_bump() -> FSpec {
    FSpec { amplitude: 1e-3, center_q: [0.5, 0.05], center_p: [1.0, 0.0], radius_q: 0.3, radius_p: 0.5, window: [0.55, 0.95] }
}

pub fn random_loop(rng: &mut ChaCha8Rng, n: usize, class: HomotopyClass) -> Result<DiscreteLoop> {
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let base = [rng.gen::<f64>(), rng.gen::<f64>()];
    let m = class.vector();
    DiscreteLoop::from_fn(n, class, |t| {
        let w = 2.0 * PI * t;
        [
            base[0] + t * m[0] + c[0] * w.sin() + c[1] * (2.0 * w).cos(),
            base[1] + t * m[1] + c[2] * w.cos() + c[3] * (3.0 * w).sin() + c[4] * (2.0 * w).sin(),
        ]
    })
}

/// A bounded loop in phase space with momenta of size about one.
pub fn random_phase_loop(rng: &mut ChaCha8Rng, n: usize, class: HomotopyClass) -> Result<PhaseLoop> {
    let base = random_loop(rng, n, class)?;
    let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let a = rng.gen_range(0.0..2.0 * PI);
    let momenta = (0..n)
        .map(|i| {
            let w = 2.0 * PI * i as f64 / n as f64;
            [0.8 * a.cos() + c[0] * w.cos() + c[1] * (2.0 * w).sin(), 0.8 * a.sin() + c[2] * w.sin() + c[3]]
        })
        .collect();
    PhaseLoop::new(base, momenta, 0.7 + c[4])
}

/// 1. Flat geodesic in class (1,0) at `k = 1/2`: `T = 1`, `S = 1` at `N = 256`.
pub fn check_closed_form(tol: f64) -> Check {
    const NAME: &str = "flat_closed_form";
    let start = Instant::now();
    let run = || -> Result<LagCriticalPoint> {
        let cfg = FreeTimeConfig::new(ManifoldModel::flat(), 0.5, 256);
        let seed = DiscreteLoop::from_fn(256, HomotopyClass::new(1, 0), |t| [t, 0.1 + 0.02 * (2.0 * PI * t).sin()])?;
        free_time::find_critical(&cfg, &seed, 0.9)
    };
    match run() {
        Ok(cp) => {
            let secs = start.elapsed().as_secs_f64();
            let err = (cp.period - 1.0).abs().max((cp.action - 1.0).abs());
            let fast = secs < 10.0;
            let mut c = Check::new(1, NAME, err < tol && fast, err, tol, format!("T = {:.12}, S = {:.12}", cp.period, cp.action));
            if !fast {
                c.detail.push_str(&format!(", runtime {secs:.1} s exceeds 10 s"));
            }
            c
        }
        Err(e) => Check::failed(1, NAME, &e),
    }
}

/// 2. `A(Z^+) = S` and `A(Z^-) = -S` at every orbit found in the given classes.
pub fn check_action_identity(model: &ManifoldModel, k: f64, classes: &[HomotopyClass], n: usize, tol: f64) -> Check {
    const NAME: &str = "action_identity";
    let run = || -> Result<(f64, usize)> {
        let cfg = FreeTimeConfig::new(model.clone(), k, n);
        let rab = RabinowitzConfig::new(model.clone(), k);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for &class in classes {
            for cp in morse_complex::find_orbits(&cfg, class, &MorseOptions::default())? {
                let zp = rabinowitz::z_lift(model, &cp, LiftSign::Plus)?;
                let zm = rabinowitz::z_lift(model, &cp, LiftSign::Minus)?;
                worst = worst.max((rabinowitz::action(&rab, &zp)? - cp.action).abs());
                worst = worst.max((rabinowitz::action(&rab, &zm)? + cp.action).abs());
                count += 1;
            }
        }
        Ok((worst, count))
    };
    match run() {
        Ok((worst, count)) => Check::new(2, NAME, count > 0 && worst < tol, worst, tol, format!("{count} orbits")),
        Err(e) => Check::failed(2, NAME, &e),
    }
}

fn relative(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / (an.abs() + 1e-8)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram_pairing(g: &nalgebra::DMatrix<f64>, grad: &[f64], dir: &[f64]) -> f64 {
    let gv = g * nalgebra::DVector::from_column_slice(dir);
    dot(grad, gv.as_slice())
}

/// 3. Metric gradients of `S` and `A` against central differences.
pub fn check_gradients(model: &ManifoldModel, k: f64, class: HomotopyClass, n: usize, probes: usize, seed: u64, tol: f64) -> Check {
    const NAME: &str = "gradient_consistency";
    let class = if model.bounded_primitive_exists() { class } else { HomotopyClass::TRIVIAL };
    let h = 1e-6;
    let run = || -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = FreeTimeConfig::new(model.clone(), k, n);
        let rab = RabinowitzConfig::new(model.clone(), k);
        let mut worst_s: f64 = 0.0;
        let mut worst_a: f64 = 0.0;
        for _ in 0..probes {
            let q = random_loop(&mut rng, n, class)?;
            let t = rng.gen_range(0.7..1.3);
            let dir: Vec<f64> = (0..2 * n + 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (g, _) = free_time::gradient_with_norm(&cfg, &q, t)?;
            let an = gram_pairing(&w12_gram(model, &q), &g, &dir);
            let z = q.to_flat();
            let at = |s: f64| -> Result<f64> {
                let zz: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                free_time::action(&cfg, &DiscreteLoop::from_flat(&zz, class)?, t + s * dir[2 * n])
            };
            worst_s = worst_s.max(relative((at(h)? - at(-h)?) / (2.0 * h), an));

            let u = random_phase_loop(&mut rng, n, class)?;
            let dir: Vec<f64> = (0..4 * n + 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (g, _) = rabinowitz::l2_gradient(&rab, &u)?;
            let an = gram_pairing(&rabinowitz::l2_gram(&rab, &u), &g, &dir);
            let z = u.to_flat();
            let at = |s: f64| -> Result<f64> {
                let zz: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                rabinowitz::action(&rab, &PhaseLoop::from_flat(&zz, class)?)
            };
            worst_a = worst_a.max(relative((at(h)? - at(-h)?) / (2.0 * h), an));
        }
        Ok((worst_s, worst_a))
    };
    match run() {
        Ok((s, a)) => {
            let w = s.max(a);
            Check::new(3, NAME, w < tol, w, tol, format!("{probes} probes each, S {s:.2e}, A {a:.2e}"))
        }
        Err(e) => Check::failed(3, NAME, &e),
    }
}

/// 4. Index identities at the nondegenerate orbits of the pendulum models.
pub fn check_index_suite(eps: &[f64]) -> Check {
    const NAME: &str = "index_theorem";
    let run = || -> Result<(usize, usize, Vec<String>)> {
        let mut failures = 0;
        let mut checked = 0;
        let mut notes = Vec::new();
        for &e in eps {
            let cfg = FreeTimeConfig::new(pendulum(e), 0.5, 64);
            let orbits = morse_complex::find_orbits(&cfg, HomotopyClass::new(1, 0), &MorseOptions::default())?;
            let mut here = 0;
            for cp in orbits.iter().filter(|c| c.nullity == 1) {
                let rep = indices::index_report(&cfg, cp)?;
                checked += 1;
                here += 1;
                if !rep.agreement.all() {
                    failures += 1;
                    notes.push(format!("eps {e}: S {:.6} disagrees {:?}", cp.action, rep.agreement));
                } else {
                    notes.push(format!("eps {e}: i {} mu_cz {}", rep.i_free, rep.mu_cz));
                }
            }
            if here < 2 {
                failures += 1;
                notes.push(format!("eps {e}: only {here} nondegenerate orbits"));
            }
        }
        Ok((failures, checked, notes))
    };
    match run() {
        Ok((f, n, notes)) => Check::new(4, NAME, f == 0, f as f64, 0.5, format!("{n} orbits; {}", notes.join("; "))),
        Err(e) => Check::failed(4, NAME, &e),
    }
}

/// 5. Kernel of the Hessian at random constant loops on the level.
pub fn check_constants(model: &ManifoldModel, k: f64, n: usize, count: usize, seed: u64, gap: f64) -> Check {
    const NAME: &str = "morse_bott_constants";
    let run = || -> Result<(f64, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rab = RabinowitzConfig::new(model.clone(), k);
        let mut min_gap = f64::INFINITY;
        let mut bad = 0;
        for _ in 0..count {
            let q0 = [rng.gen::<f64>(), rng.gen::<f64>()];
            let p0 = rabinowitz::level_point(model, k, q0, rng.gen_range(0.0..2.0 * PI))?;
            let ker = rabinowitz::constant_hessian_kernel(&rab, q0, p0, n)?;
            min_gap = min_gap.min(ker.gap_ratio);
            if ker.kernel_dim != 3 || ker.gap_ratio < gap {
                bad += 1;
            }
        }
        Ok((min_gap, bad))
    };
    match run() {
        Ok((g, bad)) => Check::new(5, NAME, bad == 0, g, gap, format!("{count} constants, {bad} without a 3-dim kernel")),
        Err(e) => Check::failed(5, NAME, &e),
    }
}

fn flow_seeds(model: &ManifoldModel, k: f64, class: HomotopyClass, n: usize, count: usize, seed: u64) -> Result<Vec<PhaseLoop>> {
    let cfg = FreeTimeConfig::new(model.clone(), k, n);
    let rab = RabinowitzConfig::new(model.clone(), k);
    let orbits = morse_complex::find_orbits(&cfg, class, &MorseOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < count && i < 20 * count {
        let u = if !orbits.is_empty() && i % 2 == 0 {
            let cp = &orbits[(i / 2) % orbits.len()];
            let sign = if (i / 2) % 2 == 0 { LiftSign::Plus } else { LiftSign::Minus };
            let mut u = rabinowitz::z_lift(model, cp, sign)?;
            let a = rng.gen_range(0.005..0.03);
            let (l, ph) = (rng.gen_range(1..=3) as f64, rng.gen::<f64>());
            for (j, q) in u.base.samples.iter_mut().enumerate() {
                q[1] += a * (2.0 * PI * (l * j as f64 / n as f64 + ph)).cos();
            }
            let b = rng.gen_range(0.98..1.02);
            for p in u.momenta.iter_mut() {
                p[0] *= b;
            }
            u
        } else {
            random_phase_loop(&mut rng, n, class)?
        };
        i += 1;
        let a = rabinowitz::action(&rab, &u)?;
        if (-2.0..=2.0).contains(&a) {
            out.push(u);
        }
    }
    Ok(out)
}

/// 6. Monotonicity, energy identity and multiplier bound along seeded flows.
pub fn check_rf_monitors(model: &ManifoldModel, k: f64, class: HomotopyClass, n: usize, count: usize, seed: u64, tol: f64) -> Check {
    const NAME: &str = "rabinowitz_flow";
    let run = || -> Result<Check> {
        let rab = RabinowitzConfig::new(model.clone(), k);
        let seeds = flow_seeds(model, k, class, n, count, seed)?;
        let pre = rabinowitz::eta_bound_constants(&rab, class, -2.0, 2.0, 1.0, None)?;
        let rho0 = rabinowitz::estimate_rho0(&rab, &seeds, pre.band, pre.delta)?;
        let eb = rabinowitz::eta_bound_constants(&rab, class, -2.0, 2.0, rho0, Some(pre.band))?;
        let opts = RfFlowOptions { s_max: 0.15, eta_bound: Some(eb.c0), ..Default::default() };
        let reports: Vec<Result<rabinowitz::RfFlowReport>> = seeds.par_iter().map(|u| rabinowitz::rabinowitz_flow(&rab, u, &opts)).collect();
        let mut worst: f64 = 0.0;
        let mut bad = 0;
        let mut violations = 0;
        let mut max_eta: f64 = 0.0;
        for r in reports {
            let m = r?.monitors;
            worst = worst.max(m.energy_identity_error);
            violations += m.eta_violations;
            max_eta = max_eta.max(m.max_abs_eta);
            if !m.monotone || m.energy_identity_error >= tol || m.eta_violations > 0 {
                bad += 1;
            }
        }
        let ok = bad == 0 && seeds.len() == count;
        Ok(Check::new(
            6,
            NAME,
            ok,
            worst,
            tol,
            format!("{} flows, rho0 {rho0:.3e}, C0 {:.3e}, max |eta| {max_eta:.3}, {violations} bound violations", seeds.len(), eb.c0),
        ))
    };
    run().unwrap_or_else(|e| Check::failed(6, NAME, &e))
}

/// 7. Mane brackets: zero data, pendulum, scaling law and the magnetic torus.
pub fn check_mane(opts: &ManeOptions, zero_tol: f64, scaling_tol: f64) -> Check {
    const NAME: &str = "mane_estimates";
    let mut notes = Vec::new();
    let mut ok = true;
    let zero = mane::estimate(&ManifoldModel::flat(), opts);
    let z_ok = zero.c_lower >= -zero_tol && zero.c_upper <= zero_tol;
    ok &= z_ok;
    notes.push(format!("zero [{:.2e}, {:.2e}]", zero.c_lower, zero.c_upper));

    let eps = 0.01;
    let pend = mane::estimate(&pendulum(eps), opts);
    let p_ok = pend.c_lower <= eps && eps <= pend.c_upper && pend.width() < 1e-2 * eps + 1e-4;
    ok &= p_ok;
    notes.push(format!("pendulum [{:.6}, {:.6}]", pend.c_lower, pend.c_upper));

    let gauged = pendulum(eps).with_exact(FourierField::cosine(0, 1, 0.1), FourierField::zero());
    let sc = mane::scaling_check(&gauged, &[0.25, 0.5, 0.75], opts);
    ok &= sc.max_error < scaling_tol;
    notes.push(format!("scaling {:.2e}", sc.max_error));

    let mag = mane::estimate(&ManifoldModel::flat().with_flux(1.0), &ManeOptions { budget: 1, ..opts.clone() });
    let probes: Vec<_> = mag.lower.probes.iter().filter(|p| p.k <= 10.0).collect();
    let certified = probes.iter().filter(|p| p.witness.as_ref().is_some_and(|w| w.action < 0.0 && w.action_refined < 0.0)).count();
    let m_ok = mag.c_upper.is_infinite() && !probes.is_empty() && certified == probes.len();
    ok &= m_ok;
    notes.push(format!("B=1 witnesses {certified}/{}", probes.len()));
    Check::new(7, NAME, ok, sc.max_error, scaling_tol, notes.join(", "))
}

/// 8. Flows of `H` and of its truncation `H_R` agree on bounded seeds.
pub fn check_truncation(model: &ManifoldModel, k: f64, class: HomotopyClass, n: usize, count: usize, seed: u64, radius: f64, tol: f64) -> Check {
    const NAME: &str = "truncation_agreement";
    let class = if model.bounded_primitive_exists() { class } else { HomotopyClass::TRIVIAL };
    let run = || -> Result<(f64, usize)> {
        let rab = RabinowitzConfig::new(model.clone(), k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<PhaseLoop> = (0..count).map(|_| random_phase_loop(&mut rng, n, class)).collect::<Result<_>>()?;
        let reps: Vec<Result<rabinowitz::TruncationAgreement>> =
            seeds.par_iter().map(|u| rabinowitz::flow_agreement_check(&rab, u, radius, 0.1, 4)).collect();
        let mut worst: f64 = 0.0;
        let mut outside = 0;
        for r in reps {
            let r = r?;
            worst = worst.max(r.sup_distance);
            if !r.in_region {
                outside += 1;
            }
        }
        Ok((worst, outside))
    };
    match run() {
        Ok((w, out)) => Check::new(8, NAME, w < tol && out == 0, w, tol, format!("{count} seeds, R = {radius}, {out} left the region")),
        Err(e) => Check::failed(8, NAME, &e),
    }
}

/// 9. Cascade homology of class (1,0) for the pendulum at `k = 1/2`.
pub fn check_morse() -> Check {
    const NAME: &str = "morse_homology";
    let start = Instant::now();
    let cfg = FreeTimeConfig::new(pendulum(0.01), 0.5, 32);
    match morse_complex::homology(&cfg, HomotopyClass::new(1, 0), &MorseOptions::default()) {
        Ok(cx) => {
            let secs = start.elapsed().as_secs_f64();
            let ok = cx.d_squared_zero && cx.fan_stable && cx.betti == [1, 2, 1] && secs < 600.0;
            let defect = if cx.d_squared_zero { 0.0 } else { 1.0 };
            Check::new(
                9,
                NAME,
                ok,
                defect,
                0.5,
                format!("betti {:?}, d^2 = 0: {}, fan stable: {}, counts {:?}", cx.betti, cx.d_squared_zero, cx.fan_stable, cx.counts),
            )
        }
        Err(e) => Check::failed(9, NAME, &e),
    }
}

/// 10. Leaf-wise intersection for the small bump, and the trivial `F = 0` case.
pub fn check_leafwise(tol: f64) -> Check {
    const NAME: &str = "leafwise_witness";
    let run = || -> Result<(leafwise::LeafwiseReport, leafwise::LeafwiseReport)> {
        let model = pendulum(0.01);
        let cfg = FreeTimeConfig::new(model.clone(), 0.5, 64);
        let seed = DiscreteLoop::straight(64, HomotopyClass::new(1, 0), [0.0, 0.0])?;
        let cp = free_time::find_critical(&cfg, &seed, 1.0)?;
        let chi = ChiProfile::new(0.05, 0.45)?;
        let zero = leafwise::build_moser_pair(&model, 0.5, FSpec::zero(), chi.clone(), 0.1)?;
        let trivial = leafwise::find_leafwise(&model, &zero, &LeafwiseSeed::from_orbit(&model, &cp, [0.5, 0.0])?)?;
        let pair = leafwise::build_moser_pair(&model, 0.5, small_bump(), chi, 0.1)?;
        let bump = leafwise::find_leafwise_homotopy(&model, &pair, &LeafwiseSeed::from_orbit(&model, &cp, [0.5, 0.05])?, 4)?;
        Ok((trivial, bump))
    };
    match run() {
        Ok((t, b)) => {
            let ok = t.passed && b.verification_distance < tol && b.periodicity_error < 1e-8;
            Check::new(
                10,
                NAME,
                ok,
                b.verification_distance,
                tol,
                format!("eta {:.6}, F = 0 distance {:.2e}, iterations {}", b.eta, t.verification_distance, b.iterations),
            )
        }
        Err(e) => Check::failed(10, NAME, &e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub warnings: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        for c in &self.checks {
            s.push_str(&c.line());
            s.push('\n');
        }
        s.push_str(if self.passed { "verify: all checks passed\n" } else { "verify: FAILED\n" });
        s
    }
}

/// Run the selected checks. The model checks use `model`, `k` and the
/// first class; with `k <= max U` the level-dependent ones are skipped.
#[allow(clippy::too_many_arguments)]
pub fn run_suite(
    model: &ManifoldModel,
    k: f64,
    classes: &[HomotopyClass],
    n: usize,
    seed: u64,
    tol: &Tolerances,
    opts: &SuiteOptions,
) -> VerifyReport {
    let mut warnings = Vec::new();
    let e0 = mane::e0(model);
    // checks that need the level to project onto the torus, or k > c
    let mut skip: Vec<(u8, String)> = Vec::new();
    if k <= e0 {
        warnings.push(format!("k = {k} does not exceed max U = {e0}; skipping level-dependent checks 2, 5 and 6"));
        for id in [2, 5, 6] {
            skip.push((id, "k is not supercritical".into()));
        }
    } else if !model.bounded_primitive_exists() {
        warnings.push(format!("B = {} leaves no bounded primitive, so c = inf; skipping check 6", model.flux));
        skip.push((6, "no bounded primitive, k < c = inf".into()));
    }
    let weak = tol.weak();
    let class = classes.first().copied().unwrap_or(HomotopyClass::new(1, 0));
    let want = |id: u8| opts.checks.contains(&id);
    let gated = |id: u8, name: &str, f: &dyn Fn() -> Check| match skip.iter().find(|s| s.0 == id) {
        Some((_, why)) => Check::skipped(id, name, why.clone()),
        None => timed(f),
    };
    let mut checks = Vec::new();
    for id in 1..=10u8 {
        if !want(id) {
            continue;
        }
        let c = match id {
            1 => timed(|| check_closed_form(tol.closed_form)),
            2 => gated(2, "action_identity", &|| check_action_identity(model, k, classes, n, tol.action_identity)),
            3 => timed(|| check_gradients(model, k, class, opts.flow_n, opts.gradient_probes, seed, tol.gradient_rel)),
            4 => timed(|| check_index_suite(&[0.01, 0.05])),
            5 => gated(5, "morse_bott_constants", &|| check_constants(model, k, opts.flow_n, opts.constant_loops, seed, tol.kernel_gap)),
            6 => gated(6, "rabinowitz_flow", &|| check_rf_monitors(model, k, class, opts.flow_n, opts.flows, seed, tol.energy_identity)),
            7 => timed(|| check_mane(&opts.mane, tol.mane_zero, tol.scaling)),
            8 => timed(|| {
                check_truncation(model, k, class, opts.flow_n / 2, opts.truncation_seeds, seed, opts.truncation_radius, tol.truncation)
            }),
            9 => timed(check_morse),
            _ => timed(|| check_leafwise(tol.leafwise)),
        };
        checks.push(c);
    }
    for c in checks.iter_mut() {
        let key = match c.id {
            1 => "closed_form",
            2 => "action_identity",
            3 => "gradient_rel",
            5 => "kernel_gap",
            6 => "energy_identity",
            7 => "scaling",
            8 => "truncation",
            10 => "leafwise",
            _ => "",
        };
        if weak.contains(&key) || (c.id == 7 && weak.contains(&"mane_zero")) {
            c.annotation = Some("weak tolerance".into());
        }
    }
    let passed = checks.iter().all(Check::passed);
    VerifyReport { warnings, checks, passed }
}
