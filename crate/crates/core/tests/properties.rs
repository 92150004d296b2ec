use std::f64::consts::PI;

use magflow::free_time::{self, FreeTimeConfig};
use magflow::verify::Tolerances;
use magflow::{DiscreteLoop, FourierField, FourierTerm, HomotopyClass, ManifoldModel};
use proptest::prelude::*;

const N: usize = 64;

fn wavy_untwisted() -> ManifoldModel {
    let mut m = ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, 0.02).plus(&FourierField::cosine(1, 1, 0.005)));
    m.phi = FourierField::cosine(1, 0, 0.05).plus(&FourierField::sine(0, 1, -0.03));
    m
}

fn wavy_exact() -> ManifoldModel {
    wavy_untwisted().with_exact(FourierField::sine(0, 1, -0.05), FourierField::cosine(1, 0, 0.04))
}

/// Loop in `class` with a few low Fourier modes on top of the straight line.
fn banded_loop(class: HomotopyClass, base: [f64; 2], coeffs: &[[f64; 4]]) -> DiscreteLoop {
    let m = class.vector();
    DiscreteLoop::from_fn(N, class, |t| {
        let mut q = [base[0] + t * m[0], base[1] + t * m[1]];
        for (j, c) in coeffs.iter().enumerate() {
            let a = 2.0 * PI * (j + 1) as f64 * t;
            q[0] += c[0] * a.cos() + c[1] * a.sin();
            q[1] += c[2] * a.cos() + c[3] * a.sin();
        }
        q
    })
    .unwrap()
}

fn class_strategy() -> impl Strategy<Value = HomotopyClass> {
    (-2i32..=2, -2i32..=2).prop_filter("nontrivial", |(a, b)| *a != 0 || *b != 0).prop_map(|(a, b)| HomotopyClass::new(a, b))
}

fn coeffs_strategy() -> impl Strategy<Value = Vec<[f64; 4]>> {
    prop::collection::vec(prop::array::uniform4(-0.05f64..0.05), 1..4)
}

fn base_strategy() -> impl Strategy<Value = [f64; 2]> {
    prop::array::uniform2(0.0f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn straight_loop_action_closed_form(m1 in -3i32..=3, y0 in 0.0f64..1.0, t in 0.2f64..3.0, k in 0.05f64..2.0, eps in 0.0f64..0.04) {
        prop_assume!(m1 != 0);
        let model = ManifoldModel::flat().with_potential(FourierField::cosine(0, 1, eps));
        let cfg = FreeTimeConfig::new(model, k, N);
        let q = DiscreteLoop::straight(N, HomotopyClass::new(m1, 0), [0.3, y0]).unwrap();
        let s = free_time::action(&cfg, &q, t).unwrap();
        let expected = (m1 * m1) as f64 / (2.0 * t) + t * (k - eps * (2.0 * PI * y0).cos());
        prop_assert!((s - expected).abs() < 1e-12 * (1.0 + expected.abs()), "{s} vs {expected}");
    }

    #[test]
    fn action_is_invariant_under_grid_shifts(class in class_strategy(), base in base_strategy(), c in coeffs_strategy(), j in 1usize..N, t in 0.5f64..2.0) {
        let cfg = FreeTimeConfig::new(wavy_exact(), 0.5, N);
        let q = banded_loop(class, base, &c);
        let s0 = free_time::action(&cfg, &q, t).unwrap();
        let s1 = free_time::action(&cfg, &q.time_shift(j as f64 / N as f64), t).unwrap();
        prop_assert!((s0 - s1).abs() < 1e-11 * (1.0 + s0.abs()), "{s0} vs {s1}");
    }

    #[test]
    fn action_is_invariant_under_deck_transformations(class in class_strategy(), base in base_strategy(), c in coeffs_strategy(), shift in prop::array::uniform2(-3i32..=3), t in 0.5f64..2.0) {
        let cfg = FreeTimeConfig::new(wavy_exact(), 0.5, N);
        let q = banded_loop(class, base, &c);
        let s0 = free_time::action(&cfg, &q, t).unwrap();
        let s1 = free_time::action(&cfg, &q.deck(shift), t).unwrap();
        prop_assert!((s0 - s1).abs() < 1e-11 * (1.0 + s0.abs()), "{s0} vs {s1}");
    }

    #[test]
    fn reversal_preserves_action_without_magnetic_term(class in class_strategy(), base in base_strategy(), c in coeffs_strategy(), t in 0.5f64..2.0) {
        let cfg = FreeTimeConfig::new(wavy_untwisted(), 0.5, N);
        let q = banded_loop(class, base, &c);
        let r = q.reversed();
        prop_assert_eq!(r.class, class.reversed());
        let s0 = free_time::action(&cfg, &q, t).unwrap();
        let s1 = free_time::action(&cfg, &r, t).unwrap();
        prop_assert!((s0 - s1).abs() < 1e-11 * (1.0 + s0.abs()), "{s0} vs {s1}");
    }

    #[test]
    fn period_derivative_matches_difference_quotient(class in class_strategy(), base in base_strategy(), c in coeffs_strategy(), t in 0.5f64..2.0) {
        let cfg = FreeTimeConfig::new(wavy_exact(), 0.5, N);
        let q = banded_loop(class, base, &c);
        let h = 1e-5;
        let fd = (free_time::action(&cfg, &q, t + h).unwrap() - free_time::action(&cfg, &q, t - h).unwrap()) / (2.0 * h);
        let an = free_time::dt_action(&cfg, &q, t).unwrap();
        prop_assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{fd} vs {an}");
    }

    #[test]
    fn nyquist_strip_is_idempotent_and_keeps_velocities(class in class_strategy(), base in base_strategy(), c in coeffs_strategy(), nyq in -0.05f64..0.05) {
        let q = banded_loop(class, base, &c);
        let noisy = DiscreteLoop::new(
            q.samples.iter().enumerate().map(|(i, p)| [p[0] + if i % 2 == 0 { nyq } else { -nyq }, p[1]]).collect(),
            class,
        ).unwrap();
        let once = noisy.without_nyquist();
        prop_assert!(once.sup_distance(&q) < 1e-12);
        prop_assert!(once.without_nyquist().sup_distance(&once) < 1e-15);
        for (a, b) in noisy.velocities().iter().zip(once.velocities()) {
            prop_assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_roundtrip(class in class_strategy(), base in base_strategy(), c in coeffs_strategy()) {
        let q = banded_loop(class, base, &c);
        let back = DiscreteLoop::from_flat(&q.to_flat(), class).unwrap();
        prop_assert_eq!(back, q);
    }

    #[test]
    fn fourier_fields_are_periodic(kx in -3i32..=3, ky in -3i32..=3, re in -1.0f64..1.0, im in -1.0f64..1.0, q in prop::array::uniform2(-2.0f64..2.0), shift in prop::array::uniform2(-4i32..=4)) {
        let f = FourierField::new(vec![FourierTerm { kx, ky, re, im }]);
        let a = f.value(q);
        let b = f.value([q[0] + shift[0] as f64, q[1] + shift[1] as f64]);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a.abs() <= f.sup_bound() + 1e-12);
    }

    #[test]
    fn loose_tolerances_are_flagged_weak(factor in 1.0f64..1e6) {
        prop_assume!((factor / 1e3 - 1.0).abs() > 1e-9);
        let t = Tolerances { truncation: 1e-8 * factor, kernel_gap: 1e3 / factor, ..Default::default() };
        let weak = t.weak();
        prop_assert_eq!(weak.contains(&"truncation"), factor > 1e3);
        prop_assert_eq!(weak.contains(&"kernel_gap"), factor > 1e3);
    }
}
