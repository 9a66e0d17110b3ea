// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use timerec_core::steady_state::{ExampleLine, ExampleReport};

fn row(out: &mut String, label: &str, line: &ExampleLine, note: &str) {
    let _ = writeln!(
        out,
        "{label:<36} {:>12} {:>12}{note}",
        format!("{:.4e}", line.jitter_std),
        format!("{:.4}", line.pixel_std)
    );
}

/// Plain-text table for the camera/IMU example.
pub fn example_table(r: &ExampleReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "camera/IMU timing example");
    let _ = writeln!(
        out,
        "inputs: sigma_delta = {} s, sigma_alpha = {} s, pan rate = {} deg/s, resolution = {} px/deg",
        r.sigma_delta, r.sigma_alpha, r.pan_rate, r.angular_resolution
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<36} {:>12} {:>12}", "", "jitter [s]", "pixels");
    let _ = writeln!(
        out,
        "{:<36} {:>12} {:>12}",
        "scenario 1",
        r.scenario1.jitter_std.to_string(),
        r.scenario1.pixel_std.to_string()
    );
    row(
        &mut out,
        "scenario 2 (variance_consistent)",
        &r.variance_consistent,
        "",
    );
    row(&mut out, "scenario 2 (paper_literal)", &r.paper_literal, "");
    if let Some(p) = &r.published {
        let note = if p.discrepancy {
            format!(
                "  DISCREPANCY: differs from the derived value by {:.0}%",
                100.0 * p.relative_gap
            )
        } else {
            String::new()
        };
        row(&mut out, "scenario 2 (published)", &p.reported, &note);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "small-noise limit sqrt(sigma_alpha * sigma_delta) = {:.4e} s",
        r.asymptotic_std
    );
    let _ = writeln!(
        out,
        "interpretations differ by {:.2}%",
        100.0 * r.interpretation_gap
    );
    out
}
