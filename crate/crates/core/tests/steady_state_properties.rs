// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use timerec_core::steady_state::{
    closed_form_eq17, jitter_budget, riccati_fixed_point, riccati_iterate, Interpretation,
};

fn grid() -> Vec<f64> {
    (0..25)
        .map(|i| 10f64.powf(-8.0 + 9.0 * i as f64 / 24.0))
        .collect()
}

#[test]
fn scenario2_std_is_monotone_on_the_grid() {
    let g = grid();
    for interp in [
        Interpretation::VarianceConsistent,
        Interpretation::PaperLiteral,
    ] {
        let s: Vec<Vec<f64>> = g
            .iter()
            .map(|&d| {
                g.iter()
                    .map(|&a| jitter_budget(d, a, interp).unwrap().scenario2_std)
                    .collect()
            })
            .collect();
        for i in 0..g.len() {
            for j in 0..g.len() {
                if i + 1 < g.len() {
                    assert!(
                        s[i + 1][j] >= s[i][j] * (1.0 - 1e-12),
                        "{interp} delta {i} alpha {j}"
                    );
                }
                if j + 1 < g.len() {
                    assert!(
                        s[i][j + 1] >= s[i][j] * (1.0 - 1e-12),
                        "{interp} delta {i} alpha {j}"
                    );
                }
            }
        }
    }
}

#[test]
fn budget_never_exceeds_scenario1() {
    for &d in &grid() {
        for &a in &grid() {
            for interp in [
                Interpretation::VarianceConsistent,
                Interpretation::PaperLiteral,
            ] {
                let b = jitter_budget(d, a, interp).unwrap();
                assert!(b.scenario2_std <= b.scenario1_std, "{d} {a} {interp}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn doubling_agrees_with_plain_recursion(q in 1e-3f64..10.0, r in 1e-3f64..10.0) {
        let s = riccati_fixed_point(q, r).unwrap();
        let (prior, post) = riccati_iterate([[0.0; 2]; 2], q, r, 5_000);
        prop_assert!((post[0][0] - s.posterior_var).abs() / s.posterior_var < 1e-9);
        prop_assert!((prior[0][0] - s.prior_var).abs() / s.prior_var < 1e-9);
    }

    #[test]
    fn closed_form_solves_the_scalar_quadratic(a in 1e-6f64..10.0, b in 1e-6f64..10.0) {
        let p = closed_form_eq17(a, b).unwrap();
        let residual = p * p + p * b - a * b;
        prop_assert!(residual.abs() <= 1e-9 * a * b);
    }
}
