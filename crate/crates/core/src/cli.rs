//! Batch front end: run configurations, command dispatch and report files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::free_time::{FreeTimeConfig, LagCriticalPoint};
use crate::geometry::{HomotopyClass, ManifoldModel};
use crate::indices::{self, IndexReport};
use crate::leafwise::{self, ChiProfile, FSpec, LeafwiseSeed};
use crate::loops::check_grid;
use crate::mane::{self, ManeOptions};
use crate::morse_complex::{self, MorseOptions};
use crate::rabinowitz::{self, EtaBound, LiftSign, RabinowitzConfig, RfFlowOptions, RfMonitors};
use crate::verify::{self, SuiteOptions, Tolerances};

pub const TOOL: &str = "magflow";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FindOrbits,
    Indices,
    Mane,
    RfFlow,
    MorseHomology,
    Leafwise,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FindOrbits => "find-orbits",
            Command::Indices => "indices",
            Command::Mane => "mane",
            Command::RfFlow => "rf-flow",
            Command::MorseHomology => "morse-homology",
            Command::Leafwise => "leafwise",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfSection {
    pub s_max: f64,
    /// Amplitude of the `cos` bump added to the seed lift.
    pub perturbation: f64,
    pub sign: i8,
    pub truncation_radius: Option<f64>,
}

impl Default for RfSection {
    fn default() -> Self {
        RfSection { s_max: 0.2, perturbation: 0.02, sign: 1, truncation_radius: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeafwiseSection {
    pub f: FSpec,
    pub chi: [f64; 2],
    pub beta_window: f64,
    pub steps: usize,
    /// Base point near which the seed starts on the orbit.
    pub target: [f64; 2],
}

impl Default for LeafwiseSection {
    fn default() -> Self {
        LeafwiseSection { f: verify::small_bump(), chi: [0.05, 0.45], beta_window: 0.1, steps: 4, target: [0.5, 0.05] }
    }
}

fn default_classes() -> Vec<HomotopyClass> {
    vec![HomotopyClass::new(1, 0)]
}

fn default_n() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ManifoldModel,
    pub k: f64,
    #[serde(default = "default_classes")]
    pub classes: Vec<HomotopyClass>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mane: ManeOptions,
    #[serde(default)]
    pub morse: MorseOptions,
    #[serde(default)]
    pub rf_flow: RfSection,
    #[serde(default)]
    pub leafwise: LeafwiseSection,
    #[serde(default)]
    pub verify: SuiteOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_grid(self.n)?;
        if !self.k.is_finite() {
            return Err(Error::Config("k must be finite".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("at least one class is required".into()));
        }
        self.tolerances.validate()?;
        if !(self.rf_flow.s_max > 0.0) || !(self.rf_flow.sign == 1 || self.rf_flow.sign == -1) {
            return Err(Error::Config("rf_flow needs s_max > 0 and sign = +1 or -1".into()));
        }
        if self.verify.checks.iter().any(|&c| c == 0 || c > 10) {
            return Err(Error::Config("verify.checks must lie in 1..=10".into()));
        }
        self.leafwise.f.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).unwrap_or_default();
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn free_time(&self) -> FreeTimeConfig {
        FreeTimeConfig::new(self.model.clone(), self.k, self.n)
    }
}

/// Report envelope written for every command.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub timestamp: u64,
    pub warnings: Vec<String>,
    pub payload: T,
}

/// Result of one command: exit code, report JSON and a short summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: String,
    /// The payload alone, byte-identical across reruns.
    pub payload: String,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSummary {
    pub class: HomotopyClass,
    pub period: f64,
    pub action: f64,
    pub index: usize,
    pub index_fixed: usize,
    pub nullity: usize,
    pub chi: Option<i8>,
    pub residual: f64,
}

impl From<&LagCriticalPoint> for OrbitSummary {
    fn from(cp: &LagCriticalPoint) -> Self {
        OrbitSummary {
            class: cp.class(),
            period: cp.period,
            action: cp.action,
            index: cp.morse_index_free,
            index_fixed: cp.morse_index_fixed,
            nullity: cp.nullity,
            chi: cp.chi,
            residual: cp.residual,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct IndicesPayload {
    reports: Vec<IndexReport>,
    degenerate: Vec<OrbitSummary>,
    all_agree: bool,
}

#[derive(Debug, Clone, Serialize)]
struct RfPayload {
    initial_action: f64,
    final_action: f64,
    eta_bound: Option<EtaBound>,
    monitors: RfMonitors,
    samples: usize,
}

struct Produced {
    payload: serde_json::Value,
    exit_code: i32,
    summary: String,
    files: Vec<(String, String)>,
}

fn all_orbits(cfg: &RunConfig) -> Result<Vec<LagCriticalPoint>> {
    let ft = cfg.free_time();
    let mut out = Vec::new();
    for &class in &cfg.classes {
        out.extend(morse_complex::find_orbits(&ft, class, &cfg.morse)?);
    }
    Ok(out)
}

fn first_orbit(cfg: &RunConfig) -> Result<LagCriticalPoint> {
    let ft = cfg.free_time();
    morse_complex::find_orbits(&ft, cfg.classes[0], &cfg.morse)?
        .into_iter()
        .next()
        .ok_or(Error::NoConvergence { iterations: 0, residual: f64::INFINITY })
}

fn find_orbits_cmd(cfg: &RunConfig) -> Result<Produced> {
    let orbits = all_orbits(cfg)?;
    if orbits.is_empty() {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let mut summary = String::new();
    let mut files = Vec::new();
    for (i, cp) in orbits.iter().enumerate() {
        let _ = writeln!(summary, "class {} T {:.10} S {:.10} index {} nullity {}", cp.class(), cp.period, cp.action, cp.morse_index_free, cp.nullity);
        files.push((format!("orbit_{i}.csv"), cp.curve.to_csv()));
    }
    let list: Vec<OrbitSummary> = orbits.iter().map(OrbitSummary::from).collect();
    Ok(Produced { payload: serde_json::to_value(list)?, exit_code: 0, summary, files })
}

fn indices_cmd(cfg: &RunConfig) -> Result<Produced> {
    let ft = cfg.free_time();
    let orbits = all_orbits(cfg)?;
    if orbits.is_empty() {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let mut reports = Vec::new();
    let mut degenerate = Vec::new();
    let mut summary = String::new();
    for cp in &orbits {
        if cp.is_nondegenerate() {
            let r = indices::index_report(&ft, cp)?;
            let _ = writeln!(summary, "S {:.8} i {} i_T {} mu_cz {} chi {} agree {}", r.action, r.i_free, r.i_t, r.mu_cz, r.chi_block, r.agreement.all());
            reports.push(r);
        } else {
            let _ = writeln!(summary, "S {:.8} degenerate (nullity {})", cp.action, cp.nullity);
            degenerate.push(OrbitSummary::from(cp));
        }
    }
    let all_agree = reports.iter().all(|r| r.agreement.all());
    let payload = IndicesPayload { reports, degenerate, all_agree };
    Ok(Produced { payload: serde_json::to_value(payload)?, exit_code: if all_agree { 0 } else { 4 }, summary, files: vec![] })
}

fn mane_cmd(cfg: &RunConfig) -> Result<Produced> {
    let opts = ManeOptions { seed: cfg.seed, ..cfg.mane.clone() };
    let est = mane::estimate(&cfg.model, &opts);
    let fmt = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.8}") };
    let mut summary = format!("e0 {:.8} c in [{}, {}]", est.e0, fmt(est.c_lower), fmt(est.c_upper));
    if let Some(r) = &est.reason {
        let _ = write!(summary, " ({r})");
    }
    summary.push('\n');
    Ok(Produced { payload: serde_json::to_value(&est)?, exit_code: 0, summary, files: vec![] })
}

fn rf_flow_cmd(cfg: &RunConfig) -> Result<Produced> {
    let sec = &cfg.rf_flow;
    let mut rab = RabinowitzConfig::new(cfg.model.clone(), cfg.k);
    if let Some(r) = sec.truncation_radius {
        rab = rab.truncated(r)?;
    }
    let class = cfg.classes[0];
    let u0 = match first_orbit(cfg) {
        Ok(cp) => {
            let sign = if sec.sign > 0 { LiftSign::Plus } else { LiftSign::Minus };
            let mut u = rabinowitz::z_lift(&cfg.model, &cp, sign)?;
            let n = u.len() as f64;
            for (i, q) in u.base.samples.iter_mut().enumerate() {
                q[1] += sec.perturbation * (2.0 * PI * i as f64 / n).cos();
            }
            u
        }
        Err(Error::NoConvergence { .. }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            verify::random_phase_loop(&mut rng, cfg.n, class)?
        }
        Err(e) => return Err(e),
    };
    let a0 = rabinowitz::action(&rab, &u0)?;
    let (a, b) = (a0.min(-2.0), a0.max(2.0));
    let eta_bound = match rabinowitz::eta_bound_constants(&rab, class, a, b, 1.0, None) {
        Ok(pre) => {
            let rho0 = rabinowitz::estimate_rho0(&rab, std::slice::from_ref(&u0), pre.band, pre.delta)?;
            Some(rabinowitz::eta_bound_constants(&rab, class, a, b, rho0, Some(pre.band))?)
        }
        Err(_) => None,
    };
    let opts = RfFlowOptions { s_max: sec.s_max, window: (a, b), eta_bound: eta_bound.map(|e| e.c0), ..Default::default() };
    let rep = rabinowitz::rabinowitz_flow(&rab, &u0, &opts)?;
    let m = &rep.monitors;
    let ok = m.monotone && m.eta_violations == 0 && m.energy_identity_error < cfg.tolerances.energy_identity;
    let final_action = rep.samples.last().map(|s| s.action).unwrap_or(a0);
    let summary = format!(
        "A {a0:.8} -> {final_action:.8}, monotone {}, energy identity {:.2e}, eta violations {}, stop {:?}\n",
        m.monotone, m.energy_identity_error, m.eta_violations, m.stop
    );
    let payload = RfPayload { initial_action: a0, final_action, eta_bound, monitors: rep.monitors.clone(), samples: rep.samples.len() };
    Ok(Produced {
        payload: serde_json::to_value(payload)?,
        exit_code: if ok { 0 } else { 4 },
        summary,
        files: vec![("rf_flow.csv".into(), rep.to_csv()), ("rf_final_state.csv".into(), rep.final_state.to_csv())],
    })
}

fn morse_cmd(cfg: &RunConfig) -> Result<Produced> {
    let ft = cfg.free_time();
    let opts = MorseOptions { seed: cfg.seed, ..cfg.morse.clone() };
    let cx = morse_complex::homology(&ft, cfg.classes[0], &opts)?;
    let ok = cx.d_squared_zero && cx.fan_stable;
    let summary = format!(
        "class {} generators {} betti {:?} d^2 = 0: {} fan stable: {} complete: {}\n",
        cx.class,
        cx.generators.len(),
        cx.betti,
        cx.d_squared_zero,
        cx.fan_stable,
        cx.complete
    );
    Ok(Produced { payload: serde_json::to_value(&cx)?, exit_code: if ok { 0 } else { 4 }, summary, files: vec![] })
}

fn leafwise_cmd(cfg: &RunConfig) -> Result<Produced> {
    let sec = &cfg.leafwise;
    let cp = first_orbit(cfg)?;
    let chi = ChiProfile::new(sec.chi[0], sec.chi[1])?;
    let pair = leafwise::build_moser_pair(&cfg.model, cfg.k, sec.f.clone(), chi, sec.beta_window)?;
    let seed = LeafwiseSeed::from_orbit(&cfg.model, &cp, sec.target)?;
    let rep = leafwise::find_leafwise_homotopy(&cfg.model, &pair, &seed, sec.steps)?;
    let ok = rep.passed && rep.verification_distance < cfg.tolerances.leafwise;
    let summary = format!(
        "eta {:.10} distance {:.3e} periodicity {:.3e} iterations {} passed {}\n",
        rep.eta, rep.verification_distance, rep.periodicity_error, rep.iterations, ok
    );
    Ok(Produced { payload: serde_json::to_value(&rep)?, exit_code: if ok { 0 } else { 4 }, summary, files: vec![] })
}

fn verify_cmd(cfg: &RunConfig) -> Result<Produced> {
    let rep = verify::run_suite(&cfg.model, cfg.k, &cfg.classes, cfg.n, cfg.seed, &cfg.tolerances, &cfg.verify);
    Ok(Produced { payload: serde_json::to_value(&rep)?, exit_code: if rep.passed { 0 } else { 4 }, summary: rep.summary(), files: vec![] })
}

fn unix_time() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Run one command and write `<command>.json` plus any CSV files to `out`
/// (or to the config's `output` directory when `out` is `None`).
pub fn run(command: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    if let Some(w) = cfg.free_time().supercritical_warning() {
        warnings.push(w);
    }
    let produced = match command {
        Command::FindOrbits => find_orbits_cmd(cfg),
        Command::Indices => indices_cmd(cfg),
        Command::Mane => mane_cmd(cfg),
        Command::RfFlow => rf_flow_cmd(cfg),
        Command::MorseHomology => morse_cmd(cfg),
        Command::Leafwise => leafwise_cmd(cfg),
        Command::Verify => verify_cmd(cfg),
    }?;
    let report = Report {
        tool: TOOL,
        version: VERSION,
        command: command.name(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        timestamp: unix_time(),
        warnings,
        payload: &produced.payload,
    };
    let report_json = serde_json::to_string_pretty(&report)?;
    let payload = serde_json::to_string(&produced.payload)?;
    let mut files = Vec::new();
    if let Some(dir) = out.map(Path::to_path_buf).or_else(|| cfg.output.clone()) {
        std::fs::create_dir_all(&dir)?;
        let p = dir.join(format!("{}.json", command.name()));
        std::fs::write(&p, &report_json)?;
        files.push(p);
        for (name, body) in &produced.files {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            files.push(p);
        }
    }
    let mut summary = String::new();
    for w in &report.warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    summary.push_str(&produced.summary);
    Ok(Outcome { exit_code: produced.exit_code, report: report_json, payload, summary, files })
}

/// Worker count from `MAGFLOW_THREADS`, then `TOOL_THREADS`.
pub fn thread_cap() -> Option<usize> {
    ["MAGFLOW_THREADS", "TOOL_THREADS"]
        .iter()
        .filter_map(|v| std::env::var(v).ok())
        .find_map(|s| s.trim().parse::<usize>().ok().filter(|&n| n > 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum_json() -> String {
        r#"{"model": {"U": [[0, 1, 0.01, 0.0]]}, "k": 0.5, "classes": [[1, 0]], "n": 32}"#.to_string()
    }

    #[test]
    fn parses_and_hashes() {
        let cfg = RunConfig::from_json(&pendulum_json()).unwrap();
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.model.potential.value([0.0, 0.0]), 0.01);
        assert_eq!(cfg.hash().len(), 64);
        let again = RunConfig::from_json(&pendulum_json()).unwrap();
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn malformed_configs_are_config_errors() {
        let neg = pendulum_json().replace("\"n\": 32", "\"n\": -8");
        assert_eq!(RunConfig::from_json(&neg).unwrap_err().exit_code(), 2);
        let odd = pendulum_json().replace("\"n\": 32", "\"n\": 2");
        assert_eq!(RunConfig::from_json(&odd).unwrap_err().exit_code(), 2);
        let unknown = pendulum_json().replace("\"k\"", "\"kk\"");
        assert_eq!(RunConfig::from_json(&unknown).unwrap_err().exit_code(), 2);
        let tol = pendulum_json().replace("\"n\": 32", "\"n\": 32, \"tolerances\": {\"scaling\": 0.0}");
        assert_eq!(RunConfig::from_json(&tol).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn find_orbits_and_payload_is_reproducible() {
        let cfg = RunConfig::from_json(&pendulum_json()).unwrap();
        let a = run(Command::FindOrbits, &cfg, None).unwrap();
        let b = run(Command::FindOrbits, &cfg, None).unwrap();
        assert_eq!(a.exit_code, 0);
        assert_eq!(a.payload, b.payload);
        let list: Vec<serde_json::Value> = serde_json::from_str(&a.payload).unwrap();
        assert_eq!(list.len(), 2);
    }

    #[test]
    fn subcritical_verify_warns() {
        let mut cfg = RunConfig::from_json(&pendulum_json()).unwrap();
        cfg.k = 0.005;
        cfg.verify.checks = vec![2, 6];
        let out = run(Command::Verify, &cfg, None).unwrap();
        assert_eq!(out.exit_code, 0);
        assert!(out.summary.contains("warning"));
        assert!(out.payload.contains("skipped"));
    }
}
