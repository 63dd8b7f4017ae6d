//! Static SVG rendering of a delay profile: the stage-j tower as a
//! rectangle, the piecewise-linear image of the column bottoms under T^m,
//! and one label per constant-delay domain.

use num_traits::ToPrimitive;
use staircase_core::{DelayProfile, SegmentDelay, SegmentLanding, StageTable};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 70.0;

fn f(v: &num_bigint::BigInt) -> f64 {
    v.to_f64().unwrap_or(f64::MAX)
}

pub fn render_profile(table: &StageTable, profile: &DelayProfile) -> anyhow::Result<String> {
    let j = profile.stage;
    let h = f(table.height(j)?);
    let r = f(table.cut_count(j)?);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    // Column i in [1, r] spans x(i-1)..x(i); level t sits at y(t).
    let x = |col: f64| MARGIN + (col / r) * plot_w;
    let y = |level: f64| HEIGHT - MARGIN - (level / h.max(1.0)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Tower outline with the roof and base labeled.
    out.push_str(&format!(
        "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        MARGIN, MARGIN, plot_w, plot_h
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\">T^{{{}}}E_{}</text>\n",
        WIDTH - MARGIN + 4.0,
        MARGIN + 5.0,
        table.height(j)?,
        j
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\">E_{}</text>\n",
        WIDTH - MARGIN + 4.0,
        HEIGHT - MARGIN + 5.0,
        j
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"15\">image of column bottoms under T^{} (stage {})</text>\n",
        MARGIN,
        MARGIN - 14.0,
        profile.m,
        j
    ));

    let mut domain = 0usize;
    for seg in &profile.segments {
        let first = f(&seg.first_column);
        let last = f(&seg.last_column);
        match &seg.landing {
            SegmentLanding::InTower { level } => {
                domain += 1;
                let t0 = f(level);
                let delay = match &seg.delay {
                    SegmentDelay::Constant(d) => f(d),
                    SegmentDelay::Boundary => 0.0,
                };
                let t1 = t0 - (last - first) * delay;
                out.push_str(&format!(
                    "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"crimson\" stroke-width=\"2\"/>\n",
                    x(first - 0.5),
                    y(t0),
                    x(last - 0.5),
                    y(t1)
                ));
                let label = match &seg.delay {
                    SegmentDelay::Constant(d) => format!("D_{domain} (delay {d})"),
                    SegmentDelay::Boundary => format!("D_{domain}"),
                };
                out.push_str(&format!(
                    "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" fill=\"crimson\">{label}</text>\n",
                    x(first - 0.5),
                    y(t0) - 8.0
                ));
                // Domain wall, dotted, at the left edge of the domain.
                out.push_str(&format!(
                    "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"2,5\"/>\n",
                    x(first - 1.0),
                    y(0.0),
                    x(first - 1.0),
                    y(h)
                ));
            }
            SegmentLanding::Spacer { .. } => {
                // Landing above the roof: draw clamped to the roof, dashed.
                out.push_str(&format!(
                    "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"steelblue\" stroke-width=\"2\" stroke-dasharray=\"6,4\"/>\n",
                    x(first - 0.5),
                    y(h),
                    x(last - 0.5),
                    y(h)
                ));
            }
            SegmentLanding::Unresolved => {
                out.push_str(&format!(
                    "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"lightgray\" fill-opacity=\"0.5\"/>\n",
                    x(first - 1.0),
                    MARGIN,
                    x(last) - x(first - 1.0),
                    plot_h
                ));
                out.push_str(&format!(
                    "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" fill=\"dimgray\">walls</text>\n",
                    x(first - 1.0) + 4.0,
                    MARGIN + 16.0
                ));
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
