//! SVG 1.1 figures: critical points and steps on the fundamental domain,
//! and landing-label strip charts for step families.

use std::fmt::Write;

use morse_pi1::continuation::StepSweep;
use morse_pi1::flow::{integrate, FlowOptions, Label, Landscape};
use morse_pi1::mscomplex::MorseComplexData;

const SIZE: f64 = 480.0;
const PAD: f64 = 20.0;
const GLYPH_COLORS: [&str; 3] = ["#1f77b4", "#2ca02c", "#d62728"];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Chart coordinates to pixels: the unit square for the torus, the `(x, y)`
/// disk of radius 1 for the sphere (orthographic, both hemispheres overlaid).
fn project(torus: bool, c: &[f64]) -> (f64, f64) {
    let (u, v) = if torus { (c[0], c[1]) } else { ((c[0] + 1.0) / 2.0, (c[1] + 1.0) / 2.0) };
    (PAD + u * (SIZE - 2.0 * PAD), SIZE - PAD - v * (SIZE - 2.0 * PAD))
}

/// Critical points as index-coded glyphs (disk, square, triangle) and steps
/// as polylines, broken where the torus chart wraps.
pub fn complex_svg(land: &Landscape, data: &MorseComplexData) -> String {
    let torus = land.manifold().is_torus();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}">"#);
    let _ = writeln!(out, r##"<rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="#999"/>"##, w = SIZE - 2.0 * PAD);
    if !torus {
        let _ = writeln!(out, r##"<circle cx="{c}" cy="{c}" r="{r}" fill="none" stroke="#ccc"/>"##, c = SIZE / 2.0, r = SIZE / 2.0 - PAD);
    }
    let opts = FlowOptions::default();
    for s in &data.steps {
        for sign in [-1.0, 1.0] {
            let Ok(o) = integrate(land, &land.seed(s.through, sign, 1e-4), &opts) else { continue };
            let stride = (o.path.len() / 400).max(1);
            let pts: Vec<&Vec<f64>> = o.path.iter().step_by(stride).chain(o.path.last()).collect();
            let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            let mut prev: Option<Vec<f64>> = None;
            for p in pts {
                let q: Vec<f64> = if torus { p.iter().take(2).map(|v| v - v.floor()).collect() } else { p.clone() };
                if let Some(pr) = &prev {
                    if torus && pr.iter().zip(&q).any(|(a, b)| (a - b).abs() > 0.5) {
                        runs.push(Vec::new());
                    }
                }
                runs.last_mut().expect("nonempty").push(project(torus, &q));
                prev = Some(q);
            }
            for r in runs.iter().filter(|r| r.len() > 1) {
                let pts: Vec<String> = r.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
                let _ = writeln!(out, r##"<polyline fill="none" stroke="#555" stroke-width="1.2" points="{}"/>"##, pts.join(" "));
            }
        }
    }
    for c in &data.critical_points {
        let (x, y) = project(torus, &c.coords);
        let color = GLYPH_COLORS[c.index.min(2)];
        let _ = match c.index {
            0 => writeln!(out, r#"<circle cx="{}" cy="{}" r="5" fill="{color}"><title>min {}</title></circle>"#, fmt(x), fmt(y), c.id),
            1 => writeln!(
                out,
                r#"<rect x="{}" y="{}" width="9" height="9" fill="{color}"><title>saddle {}</title></rect>"#,
                fmt(x - 4.5),
                fmt(y - 4.5),
                c.id
            ),
            _ => writeln!(
                out,
                r#"<polygon points="{},{} {},{} {},{}" fill="{color}"><title>max {}</title></polygon>"#,
                fmt(x),
                fmt(y - 6.0),
                fmt(x - 5.5),
                fmt(y + 4.0),
                fmt(x + 5.5),
                fmt(y + 4.0),
                c.id
            ),
        };
    }
    out.push_str("</svg>\n");
    out
}

fn label_name(l: &Label) -> String {
    match l {
        Label::Min { cp, lift } => format!("m{cp}[{},{}]", lift[0], lift[1]),
        Label::Escaped(d) => format!("{d:?}"),
        Label::Lingered { cp } => format!("linger {cp}"),
        Label::Slab => "slab".into(),
    }
}

/// One row per source step: sample position along the family against the
/// landing label, with walls as vertical ticks.
pub fn strip_svg(sweeps: &[StepSweep]) -> String {
    let rows = sweeps.len().max(1) as f64;
    let row_h = 90.0;
    let height = rows * row_h + 2.0 * PAD;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{height}">"#);
    for (r, sw) in sweeps.iter().enumerate() {
        let top = PAD + r as f64 * row_h;
        let mut labels: Vec<String> = sw.sample_labels.iter().map(label_name).collect();
        labels.sort();
        labels.dedup();
        let n = sw.sample_labels.len().max(2) as f64;
        let w = SIZE - 2.0 * PAD;
        let level = |l: &Label| {
            let k = labels.iter().position(|x| *x == label_name(l)).unwrap_or(0) as f64;
            top + 10.0 + (row_h - 30.0) * (k + 0.5) / labels.len().max(1) as f64
        };
        let pts: Vec<String> = sw
            .sample_labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{},{}", fmt(PAD + w * i as f64 / (n - 1.0)), fmt(level(l))))
            .collect();
        let _ = writeln!(out, r#"<text x="{PAD}" y="{}" font-size="11">step {}</text>"#, fmt(top + 8.0), sw.step);
        let _ = writeln!(out, r##"<polyline fill="none" stroke="#1f77b4" points="{}"/>"##, pts.join(" "));
        for wall in &sw.walls {
            let x = PAD + w * (wall.param + 1.0) / 2.0;
            let _ = writeln!(out, r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#d62728"/>"##, fmt(top + 10.0), fmt(top + row_h - 20.0), x = fmt(x));
        }
    }
    out.push_str("</svg>\n");
    out
}
