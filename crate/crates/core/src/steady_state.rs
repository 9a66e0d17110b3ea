// SPDX-License-Identifier: Apache-2.0

//! Steady-state jitter of the scenario-2 filter.
//!
//! The reduced model has state `[t, a]` with `F = [[1, 1], [0, 1]]`,
//! `H = [1, 0]`, `Q = diag(q, 0)` and measurement variance `r`: unit report
//! intervals, a constant pace and a white delay. Its t-component posterior
//! variance solves `P^2 + P q - q r = 0`, which is the closed form below
//! when its symbols are read as variances.
//!
//! The Riccati solver works on plain 2x2 arrays so that it stays independent
//! of the estimator's linear algebra.

use serde::{Deserialize, Serialize};

/// Published inputs for the camera/IMU example.
pub const EXAMPLE_SIGMA_DELTA: f64 = 5e-3;
pub const EXAMPLE_SIGMA_ALPHA: f64 = 1e-6;
pub const EXAMPLE_PAN_RATE: f64 = 90.0;
pub const EXAMPLE_RESOLUTION: f64 = 10.0;
/// Published scenario-2 values for the example.
pub const PUBLISHED_SCENARIO2_STD: f64 = 3e-5;
pub const PUBLISHED_SCENARIO2_PIXELS: f64 = 0.03;
/// Relative gap beyond which a reported value counts as a discrepancy.
pub const DISCREPANCY_TOLERANCE: f64 = 0.02;

pub const RICCATI_TOLERANCE: f64 = 1e-14;
/// Cap on doubling steps; step `n` covers `2^n` plain recursion steps.
pub const RICCATI_MAX_DOUBLINGS: usize = 200;

/// How the scenario-2 jitter std is derived from `(sigma_delta, sigma_alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    /// Evaluate the closed form directly on the two stds.
    PaperLiteral,
    /// Square the stds, solve the Riccati system and take the root of the
    /// posterior variance.
    #[default]
    VarianceConsistent,
}

impl std::str::FromStr for Interpretation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_literal" => Ok(Interpretation::PaperLiteral),
            "variance_consistent" => Ok(Interpretation::VarianceConsistent),
            other => Err(format!(
                "unknown interpretation '{other}' (expected paper_literal or variance_consistent)"
            )),
        }
    }
}

impl std::fmt::Display for Interpretation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Interpretation::PaperLiteral => "paper_literal",
            Interpretation::VarianceConsistent => "variance_consistent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SteadyStateError {
    #[error("{name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("measurement variance must be positive, got {0}")]
    NonPositiveMeasurement(f64),
    #[error(
        "Riccati iteration did not converge after {iterations} doublings (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
}

fn check(name: &'static str, value: f64) -> Result<(), SteadyStateError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(SteadyStateError::Negative { name, value })
    }
}

/// `a - a^2 / (a + b/2 + sqrt(b^2 + 4ab)/2)` with `a = sigma_delta`,
/// `b = sigma_alpha`, evaluated as written.
pub fn closed_form_eq17(sigma_delta: f64, sigma_alpha: f64) -> Result<f64, SteadyStateError> {
    check("sigma_delta", sigma_delta)?;
    check("sigma_alpha", sigma_alpha)?;
    let (a, b) = (sigma_delta, sigma_alpha);
    if a == 0.0 {
        return Ok(0.0);
    }
    Ok(a - a * a / (a + 0.5 * b + 0.5 * (b * b + 4.0 * a * b).sqrt()))
}

type M2 = [[f64; 2]; 2];

fn mul(x: &M2, y: &M2) -> M2 {
    let mut z = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            z[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    z
}

fn add(x: &M2, y: &M2) -> M2 {
    [
        [x[0][0] + y[0][0], x[0][1] + y[0][1]],
        [x[1][0] + y[1][0], x[1][1] + y[1][1]],
    ]
}

fn transpose(x: &M2) -> M2 {
    [[x[0][0], x[1][0]], [x[0][1], x[1][1]]]
}

fn inverse(x: &M2) -> M2 {
    let det = x[0][0] * x[1][1] - x[0][1] * x[1][0];
    [
        [x[1][1] / det, -x[0][1] / det],
        [-x[1][0] / det, x[0][0] / det],
    ]
}

fn frobenius(x: &M2) -> f64 {
    x.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn symmetrize(x: &M2) -> M2 {
    let off = 0.5 * (x[0][1] + x[1][0]);
    [[x[0][0], off], [off, x[1][1]]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiSolution {
    /// Steady-state t-component variance before a measurement update.
    pub prior_var: f64,
    /// Steady-state t-component variance after the update.
    pub posterior_var: f64,
    /// Doubling steps used.
    pub iterations: usize,
    /// Prior variance of the second (pace) state at convergence.
    #[serde(skip)]
    pub second_state_var: f64,
}

/// Steady state of the 2x2 filter Riccati recursion, started from a zero
/// covariance, by structure-preserving doubling: step `n` advances the
/// plain recursion by `2^n` steps, so the slow pace mode is resolved in a
/// few dozen iterations.
pub fn riccati_fixed_point(q: f64, r: f64) -> Result<RiccatiSolution, SteadyStateError> {
    check("q", q)?;
    if !(r.is_finite() && r > 0.0) {
        return Err(SteadyStateError::NonPositiveMeasurement(r));
    }
    // Control-form dual: A = F^T, G = H^T r^-1 H, H_0 = Q.
    let mut a: M2 = [[1.0, 0.0], [1.0, 1.0]];
    let mut g: M2 = [[1.0 / r, 0.0], [0.0, 0.0]];
    let mut x: M2 = [[q, 0.0], [0.0, 0.0]];
    let identity: M2 = [[1.0, 0.0], [0.0, 1.0]];
    let mut residual = f64::INFINITY;
    for n in 1..=RICCATI_MAX_DOUBLINGS {
        let w = inverse(&add(&identity, &mul(&g, &x)));
        let aw = mul(&a, &w);
        let next_a = mul(&aw, &a);
        let next_g = symmetrize(&add(&g, &mul(&mul(&aw, &g), &transpose(&a))));
        let next_x = symmetrize(&add(&x, &mul(&mul(&transpose(&a), &x), &mul(&w, &a))));
        let diff = [
            [next_x[0][0] - x[0][0], next_x[0][1] - x[0][1]],
            [next_x[1][0] - x[1][0], next_x[1][1] - x[1][1]],
        ];
        let scale = frobenius(&next_x);
        residual = frobenius(&diff);
        a = next_a;
        g = next_g;
        x = next_x;
        if residual <= RICCATI_TOLERANCE * scale || scale == 0.0 {
            let prior = x[0][0];
            return Ok(RiccatiSolution {
                prior_var: prior,
                posterior_var: prior * r / (prior + r),
                iterations: n,
                second_state_var: x[1][1],
            });
        }
    }
    Err(SteadyStateError::NotConverged {
        iterations: RICCATI_MAX_DOUBLINGS,
        residual,
    })
}

/// One plain predict/update cycle of the 2x2 system. Takes and returns the
/// posterior covariance; also returns the prior it passed through.
pub fn riccati_step(posterior: [[f64; 2]; 2], q: f64, r: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let f: M2 = [[1.0, 1.0], [0.0, 1.0]];
    let mut prior = mul(&mul(&f, &posterior), &transpose(&f));
    prior[0][0] += q;
    let prior = symmetrize(&prior);
    let s = prior[0][0] + r;
    let k = [prior[0][0] / s, prior[1][0] / s];
    let mut post = prior;
    for i in 0..2 {
        for j in 0..2 {
            post[i][j] -= k[i] * prior[0][j];
        }
    }
    (prior, symmetrize(&post))
}

/// Run the plain recursion for `steps` cycles from `initial` posterior.
pub fn riccati_iterate(
    initial: [[f64; 2]; 2],
    q: f64,
    r: f64,
    steps: usize,
) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let mut post = initial;
    let mut prior = initial;
    for _ in 0..steps {
        (prior, post) = riccati_step(post, q, r);
    }
    (prior, post)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiSummary {
    pub prior_var: f64,
    pub posterior_var: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JitterBudget {
    pub sigma_delta: f64,
    pub sigma_alpha: f64,
    pub interpretation: Interpretation,
    pub scenario1_std: f64,
    pub scenario2_std: f64,
    /// `None` when scenario 2 is exact.
    pub reduction_factor: Option<f64>,
    /// The Riccati system the scenario-2 value is read from.
    pub riccati: RiccatiSummary,
}

/// Scenario-1 and scenario-2 steady-state jitter for the reduced model.
pub fn jitter_budget(
    sigma_delta: f64,
    sigma_alpha: f64,
    interpretation: Interpretation,
) -> Result<JitterBudget, SteadyStateError> {
    check("sigma_delta", sigma_delta)?;
    check("sigma_alpha", sigma_alpha)?;
    let (q, r) = match interpretation {
        Interpretation::PaperLiteral => (sigma_alpha, sigma_delta),
        Interpretation::VarianceConsistent => {
            (sigma_alpha * sigma_alpha, sigma_delta * sigma_delta)
        }
    };
    let riccati = if r > 0.0 {
        let s = riccati_fixed_point(q, r)?;
        RiccatiSummary {
            prior_var: s.prior_var,
            posterior_var: s.posterior_var,
            iterations: s.iterations,
        }
    } else {
        // A noiseless measurement pins t exactly.
        RiccatiSummary {
            prior_var: q,
            posterior_var: 0.0,
            iterations: 0,
        }
    };
    let scenario2_std = match interpretation {
        Interpretation::PaperLiteral => closed_form_eq17(sigma_delta, sigma_alpha)?,
        Interpretation::VarianceConsistent => riccati.posterior_var.max(0.0).sqrt(),
    };
    let reduction_factor = (scenario2_std > 0.0).then(|| sigma_delta / scenario2_std);
    Ok(JitterBudget {
        sigma_delta,
        sigma_alpha,
        interpretation,
        scenario1_std: sigma_delta,
        scenario2_std,
        reduction_factor,
        riccati,
    })
}

/// Pixel discrepancy std caused by a timing jitter while the camera pans.
pub fn camera_example(jitter_std: f64, pan_rate: f64, angular_resolution: f64) -> f64 {
    jitter_std * pan_rate * angular_resolution
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExampleLine {
    pub jitter_std: f64,
    pub pixel_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedComparison {
    pub reported: ExampleLine,
    /// Relative gap between the reported and the variance-consistent std.
    pub relative_gap: f64,
    pub discrepancy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExampleReport {
    pub sigma_delta: f64,
    pub sigma_alpha: f64,
    pub pan_rate: f64,
    pub angular_resolution: f64,
    pub scenario1: ExampleLine,
    pub variance_consistent: ExampleLine,
    pub paper_literal: ExampleLine,
    /// `sqrt(sigma_alpha * sigma_delta)`, the small-noise limit.
    pub asymptotic_std: f64,
    /// Relative gap between the two interpretations.
    pub interpretation_gap: f64,
    /// Present only for the published inputs.
    pub published: Option<PublishedComparison>,
}

pub fn example_report(
    sigma_delta: f64,
    sigma_alpha: f64,
    pan_rate: f64,
    angular_resolution: f64,
) -> Result<ExampleReport, SteadyStateError> {
    check("pan_rate", pan_rate)?;
    check("angular_resolution", angular_resolution)?;
    let line = |std: f64| ExampleLine {
        jitter_std: std,
        pixel_std: camera_example(std, pan_rate, angular_resolution),
    };
    let vc = jitter_budget(sigma_delta, sigma_alpha, Interpretation::VarianceConsistent)?;
    let pl = jitter_budget(sigma_delta, sigma_alpha, Interpretation::PaperLiteral)?;
    let interpretation_gap = if vc.scenario2_std > 0.0 {
        (pl.scenario2_std - vc.scenario2_std).abs() / vc.scenario2_std
    } else {
        0.0
    };
    let published = (sigma_delta == EXAMPLE_SIGMA_DELTA && sigma_alpha == EXAMPLE_SIGMA_ALPHA)
        .then(|| {
            let gap = (PUBLISHED_SCENARIO2_STD - vc.scenario2_std).abs() / vc.scenario2_std;
            PublishedComparison {
                reported: ExampleLine {
                    jitter_std: PUBLISHED_SCENARIO2_STD,
                    pixel_std: PUBLISHED_SCENARIO2_PIXELS,
                },
                relative_gap: gap,
                discrepancy: gap > DISCREPANCY_TOLERANCE,
            }
        });
    Ok(ExampleReport {
        sigma_delta,
        sigma_alpha,
        pan_rate,
        angular_resolution,
        scenario1: line(vc.scenario1_std),
        variance_consistent: line(vc.scenario2_std),
        paper_literal: line(pl.scenario2_std),
        asymptotic_std: (sigma_alpha * sigma_delta).sqrt(),
        interpretation_gap,
        published,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_eq17(0.3, 0.0).unwrap(), 0.0);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!(rel(closed_form_eq17(1.0, 1.0).unwrap(), golden) < 1e-15);
        let v = closed_form_eq17(5e-3, 1e-6).unwrap();
        assert!((v - 7.02e-5).abs() < 0.01e-5, "{v}");
        assert!(closed_form_eq17(-1.0, 1.0).is_err());
        assert!(closed_form_eq17(1.0, f64::NAN).is_err());
    }

    #[test]
    fn riccati_unit_noise() {
        let s = riccati_fixed_point(1.0, 1.0).unwrap();
        assert!(rel(s.posterior_var, (5f64.sqrt() - 1.0) / 2.0) < 1e-13);
        assert!(rel(s.prior_var, (5f64.sqrt() + 1.0) / 2.0) < 1e-13);
        assert!(s.second_state_var.abs() < 1e-14);
    }

    #[test]
    fn riccati_zero_process_noise() {
        let s = riccati_fixed_point(0.0, 2.0).unwrap();
        assert_eq!(s.posterior_var, 0.0);
        assert!(riccati_fixed_point(1.0, 0.0).is_err());
    }

    #[test]
    fn plain_recursion_agrees_and_pace_variance_decays() {
        let (q, r) = (0.3, 2.0);
        let s = riccati_fixed_point(q, r).unwrap();
        let start = [[5.0, 1.0], [1.0, 4.0]];
        let (_, early) = riccati_iterate(start, q, r, 100);
        let (prior, post) = riccati_iterate(start, q, r, 200_000);
        assert!(post[1][1] < early[1][1]);
        assert!(post[1][1] < 1e-3);
        assert!(rel(post[0][0], s.posterior_var) < 1e-3);
        assert!(rel(prior[0][0], s.prior_var) < 1e-3);
    }

    #[test]
    fn identity_on_small_grid() {
        for &a in &[1e-8, 1e-3, 1.0, 10.0] {
            for &b in &[1e-8, 1e-3, 1.0, 10.0] {
                let c = closed_form_eq17(a, b).unwrap();
                let s = riccati_fixed_point(b, a).unwrap();
                assert!(rel(c, s.posterior_var) < 1e-10, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn budget_examples() {
        let vc = jitter_budget(5e-3, 1e-6, Interpretation::VarianceConsistent).unwrap();
        assert!(
            rel(vc.scenario2_std, 7.07e-5) < 2e-3,
            "{}",
            vc.scenario2_std
        );
        assert_eq!(vc.scenario1_std, 5e-3);
        let pl = jitter_budget(5e-3, 1e-6, Interpretation::PaperLiteral).unwrap();
        assert!(
            rel(pl.scenario2_std, 7.02e-5) < 2e-3,
            "{}",
            pl.scenario2_std
        );
        assert!(rel(pl.scenario2_std, pl.riccati.posterior_var) < 1e-10);
        let zero = jitter_budget(0.0, 1e-6, Interpretation::VarianceConsistent).unwrap();
        assert_eq!(zero.scenario2_std, 0.0);
        assert_eq!(zero.reduction_factor, None);
    }

    #[test]
    fn camera_examples() {
        assert_eq!(camera_example(5e-3, 90.0, 10.0), 4.5);
        assert_eq!(camera_example(0.0, 90.0, 10.0), 0.0);
        assert!((camera_example(3e-5, 90.0, 10.0) - 0.027).abs() < 1e-12);
    }

    #[test]
    fn example_report_flags_published_value() {
        let rep = example_report(
            EXAMPLE_SIGMA_DELTA,
            EXAMPLE_SIGMA_ALPHA,
            EXAMPLE_PAN_RATE,
            EXAMPLE_RESOLUTION,
        )
        .unwrap();
        assert_eq!(rep.scenario1.pixel_std, 4.5);
        assert!(rep.interpretation_gap < 0.02);
        let published = rep.published.unwrap();
        assert!(published.discrepancy);
        let other = example_report(1e-3, 1e-6, 90.0, 10.0).unwrap();
        assert!(other.published.is_none());
    }

    #[test]
    fn interpretation_parses() {
        assert_eq!(
            "paper_literal".parse::<Interpretation>(),
            Ok(Interpretation::PaperLiteral)
        );
        assert!("x".parse::<Interpretation>().is_err());
        assert_eq!(Interpretation::default().to_string(), "variance_consistent");
    }
}
