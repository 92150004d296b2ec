//! Explicit Runge-Kutta integrators: adaptive Dormand-Prince 5(4) and fixed-step RK4.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Dopri5Options { rtol: 1e-10, atol: 1e-12, h_init: 1e-3, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOutcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// True when the observer asked to stop before `t1`.
    pub stopped: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `observer(t, y)` is called at the start and after every accepted step;
/// returning `false` stops the integration.
pub fn dopri5<F, O>(mut f: F, t0: f64, y0: &[f64], t1: f64, opts: &Dopri5Options, mut observer: O) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.h_init.min(opts.h_max).min((t1 - t0).abs()).max(opts.h_min);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut accepted = 0;
    let mut rejected = 0;
    if !observer(t, &y) {
        return Ok(OdeOutcome { t, y, accepted, rejected, stopped: true });
    }
    f(t, &y, &mut k1);
    while (t1 - t) * dir > 1e-15 * t1.abs().max(1.0) {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::NoConvergence { iterations: opts.max_steps, residual: (t1 - t).abs() });
        }
        let last = h >= (t1 - t).abs();
        if last {
            h = (t1 - t).abs();
        }
        let hs = h * dir;
        axpy(&mut tmp, &y, hs, &[(A21, &k1)]);
        f(t + C2 * hs, &tmp, &mut k2);
        axpy(&mut tmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
        f(t + C3 * hs, &tmp, &mut k3);
        axpy(&mut tmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + C4 * hs, &tmp, &mut k4);
        axpy(&mut tmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + C5 * hs, &tmp, &mut k5);
        axpy(&mut tmp, &y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        f(t + hs, &tmp, &mut k6);
        axpy(&mut ynew, &y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        f(t + hs, &ynew, &mut k7);
        let mut err = 0.0;
        for i in 0..n {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            rejected += 1;
            h *= 0.25;
            if h < opts.h_min {
                return Err(Error::StepUnderflow(t));
            }
            continue;
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + hs };
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;
            if !observer(t, &y) {
                return Ok(OdeOutcome { t, y, accepted, rejected, stopped: true });
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(opts.h_max);
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < opts.h_min {
                return Err(Error::StepUnderflow(t));
            }
        }
    }
    Ok(OdeOutcome { t, y, accepted, rejected, stopped: false })
}

/// Classical RK4 with `steps` equal steps.
pub fn rk4<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut k1);
        axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k1)]);
        f(t + 0.5 * h, &tmp, &mut k2);
        axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k2)]);
        f(t + 0.5 * h, &tmp, &mut k3);
        axpy(&mut tmp, &y, h, &[(1.0, &k3)]);
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let out = dopri5(f, 0.0, &[1.0, 0.0], 2.0 * std::f64::consts::PI, &Dopri5Options::default(), |_, _| true).unwrap();
        assert!((out.y[0] - 1.0).abs() < 1e-9 && out.y[1].abs() < 1e-9);
        let back = dopri5(f, 2.0, &[2.0f64.cos(), -2.0f64.sin()], 0.0, &Dopri5Options::default(), |_, _| true).unwrap();
        assert!((back.y[0] - 1.0).abs() < 1e-9);
        let r = rk4(f, 0.0, &[1.0, 0.0], 1.0, 200);
        assert!((r[0] - 1.0f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn observer_can_stop() {
        let f = |_t: f64, _y: &[f64], d: &mut [f64]| d[0] = 1.0;
        let out = dopri5(f, 0.0, &[0.0], 10.0, &Dopri5Options { h_max: 0.5, ..Default::default() }, |t, _| t < 3.0).unwrap();
        assert!(out.stopped && out.t >= 3.0 && out.t < 4.0);
    }
}
