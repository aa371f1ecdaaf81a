//! Dependency-free SVG learning curves with standard-error bands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::curves::CurveSummary;
use super::HarnessError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Curves beyond this many points are thinned for file size.
const MAX_POINTS: usize = 600;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders success-rate curves against episodes. All curves are truncated
/// to the shortest so they share an axis.
pub fn render_svg(curves: &[CurveSummary]) -> Result<String, HarnessError> {
    if curves.is_empty() {
        return Err(HarnessError::NoCurves);
    }
    let len = curves.iter().map(CurveSummary::len).min().unwrap_or(0);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_max = len.max(2) as f64;
    let x = |episode: f64| MARGIN_LEFT + plot_w * (episode - 1.0) / (x_max - 1.0);
    let y = |rate: f64| MARGIN_TOP + plot_h * (1.0 - rate.clamp(0.0, 1.0));
    let stride = len.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    for tick in 0..=5 {
        let rate = tick as f64 / 5.0;
        let ty = y(rate);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{rate:.1}</text>"#,
            MARGIN_LEFT - 6.0,
            ty + 4.0
        );
    }
    for tick in 0..=4 {
        let ep = 1.0 + (x_max - 1.0) * tick as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(ep),
            MARGIN_TOP + plot_h + 18.0,
            ep.round()
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">episodes</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">success rate</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    for (ci, c) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let upper: Vec<String> = idx
            .iter()
            .map(|&k| format!("{:.2},{:.2}", x((k + 1) as f64), y(c.mean[k] + c.stderr[k])))
            .collect();
        let lower: Vec<String> = idx
            .iter()
            .rev()
            .map(|&k| format!("{:.2},{:.2}", x((k + 1) as f64), y(c.mean[k] - c.stderr[k])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = idx
            .iter()
            .map(|&k| format!("{:.2},{:.2}", x((k + 1) as f64), y(c.mean[k])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 20.0 * ci as f64;
        let lx = WIDTH - MARGIN_RIGHT + 14.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(curves: &[CurveSummary], path: &Path) -> Result<(), HarnessError> {
    let svg = render_svg(curves)?;
    fs::write(path, svg).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(label: &str, value: f64, len: usize) -> CurveSummary {
        CurveSummary {
            label: label.into(),
            n_seeds: 4,
            mean: vec![value; len],
            stderr: vec![0.0; len],
            episodes_to_90: vec![None; 4],
            episodes_run: vec![len; 4],
        }
    }

    #[test]
    fn well_formed_with_one_entry_per_curve() {
        let svg = render_svg(&[flat("a & b", 1.0, 300), flat("c", 0.5, 200)]).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let count = |class: &str| {
            doc.descendants()
                .filter(|n| n.attribute("class") == Some(class))
                .count()
        };
        assert_eq!(count("legend"), 2);
        assert_eq!(count("curve"), 2);
        let strokes: Vec<&str> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("curve"))
            .filter_map(|n| n.attribute("stroke"))
            .collect();
        assert_ne!(strokes[0], strokes[1]);
    }

    #[test]
    fn flat_curve_is_horizontal_with_zero_band() {
        let svg = render_svg(&[flat("one", 1.0, 50)]).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let points = |class: &str| -> Vec<(f64, f64)> {
            let n = doc
                .descendants()
                .find(|n| n.attribute("class") == Some(class))
                .unwrap();
            n.attribute("points")
                .unwrap()
                .split_whitespace()
                .map(|p| {
                    let (a, b) = p.split_once(',').unwrap();
                    (a.parse().unwrap(), b.parse().unwrap())
                })
                .collect()
        };
        let line = points("curve");
        assert!(line.iter().all(|p| p.1 == line[0].1));
        assert!(points("band").iter().all(|p| p.1 == line[0].1));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(render_svg(&[]), Err(HarnessError::NoCurves)));
    }
}
