use coincide::closed_form::{i_lk, integral_oracle, OracleMethod};
use coincide::spike_data::Window;
use proptest::prelude::*;

fn window_and_delta() -> impl Strategy<Value = (f64, f64, f64)> {
    (-5.0f64..5.0, 0.05f64..4.0, 0.001f64..0.499).prop_map(|(a, len, frac)| (a, a + len, frac * len))
}

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

proptest! {
    #[test]
    fn integrals_are_positive((a, b, d) in window_and_delta(), l in 2usize..=12, k in 0usize..=12) {
        prop_assume!(k <= l);
        let w = Window::new(a, b).unwrap();
        prop_assert!(i_lk(l, k, &w, d).unwrap() > 0.0);
    }

    #[test]
    fn full_overlap_is_the_square((a, b, d) in window_and_delta(), l in 2usize..=8) {
        let w = Window::new(a, b).unwrap();
        let i0 = i_lk(l, 0, &w, d).unwrap();
        prop_assert!(ulps(i_lk(l, l, &w, d).unwrap(), i0 * i0) <= 8);
    }

    #[test]
    fn integrals_scale_homogeneously((a, b, d) in window_and_delta(), l in 2usize..=6, k in 0usize..=6, s in 0.1f64..10.0) {
        prop_assume!(k <= l);
        let w = Window::new(a, b).unwrap();
        let scaled = Window::new(a * s, a * s + (b - a) * s).unwrap();
        let base = i_lk(l, k, &w, d).unwrap();
        let expected = base * s.powi((l + k) as i32);
        let got = i_lk(l, k, &scaled, d * s).unwrap();
        prop_assert!(((got - expected) / expected).abs() < 1e-11, "{got} vs {expected}");
    }

    #[test]
    fn only_the_length_matters((a, b, d) in window_and_delta(), shift in -10.0f64..10.0, l in 2usize..=5, k in 0usize..=5) {
        prop_assume!(k <= l);
        let w = Window::new(a, b).unwrap();
        let moved = Window::new(a + shift, a + shift + (b - a)).unwrap();
        let x = i_lk(l, k, &w, d).unwrap();
        let y = i_lk(l, k, &moved, d).unwrap();
        prop_assert!(((x - y) / x).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn closed_form_matches_quadrature((a, b, d) in window_and_delta(), l in 2usize..=3, k in 0usize..=3) {
        prop_assume!(k <= l);
        let w = Window::new(a, b).unwrap();
        let exact = i_lk(l, k, &w, d).unwrap();
        let q = integral_oracle(l, k, &w, d, OracleMethod::Quadrature).unwrap();
        prop_assert!((exact - q.value).abs() <= 1e-6 * exact.abs(), "{exact} vs {}", q.value);
    }
}

#[test]
fn four_fold_integrals_within_monte_carlo_error() {
    let cases = [(0.0, 1.0, 0.1), (0.0, 0.3, 0.01), (-1.0, 2.0, 1.2)];
    for (i, &(a, b, d)) in cases.iter().enumerate() {
        let w = Window::new(a, b).unwrap();
        for k in 0..=4 {
            let exact = i_lk(4, k, &w, d).unwrap();
            let mc = integral_oracle(4, k, &w, d, OracleMethod::MonteCarlo { samples: 200_000, seed: 100 + i as u64 * 5 + k as u64 })
                .unwrap();
            let z = (exact - mc.value) / mc.error;
            assert!(z.abs() < 3.0, "L=4 k={k} case {i}: z = {z}");
        }
    }
}

#[test]
fn quadrature_handles_larger_patterns() {
    let w = Window::new(0.0, 1.0).unwrap();
    for l in 4..=6 {
        for k in [0, 1, l - 1, l] {
            let exact = i_lk(l, k, &w, 0.2).unwrap();
            let q = integral_oracle(l, k, &w, 0.2, OracleMethod::Quadrature).unwrap();
            assert!(((exact - q.value) / exact).abs() < 1e-9, "L={l} k={k}");
        }
    }
}
