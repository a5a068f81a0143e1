//! Scatter plots of real against generated points as standalone SVG.

use std::fmt::Write;

use ensgan_core::prelude::*;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;
const MAX_POINTS: usize = 2000;

struct Frame {
    min: [f64; 2],
    scale: f64,
}

impl Frame {
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }
}

fn extent(c: &ComponentSpec) -> ([f64; 2], [f64; 2]) {
    match *c {
        ComponentSpec::Disk { center, radius } => (
            [center[0] - radius, center[1] - radius],
            [center[0] + radius, center[1] + radius],
        ),
        ComponentSpec::AnnulusArc { center, outer, .. } => (
            [center[0] - outer, center[1] - outer],
            [center[0] + outer, center[1] + outer],
        ),
        ComponentSpec::Box {
            center,
            half_width,
            half_height,
        } => (
            [center[0] - half_width, center[1] - half_height],
            [center[0] + half_width, center[1] + half_height],
        ),
    }
}

fn outline(out: &mut String, c: &ComponentSpec, f: &Frame) {
    let style = r##"fill="none" stroke="#555" stroke-width="1""##;
    match *c {
        ComponentSpec::Disk { center, radius } => {
            let (x, y) = f.map(center);
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" {style}/>"#,
                radius * f.scale
            );
        }
        ComponentSpec::Box {
            center,
            half_width,
            half_height,
        } => {
            let (x, y) = f.map([center[0] - half_width, center[1] + half_height]);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
                2.0 * half_width * f.scale,
                2.0 * half_height * f.scale
            );
        }
        ComponentSpec::AnnulusArc {
            center,
            inner,
            outer,
            start,
            sweep,
        } => {
            let steps = 64;
            let at = |r: f64, t: f64| f.map([center[0] + r * t.cos(), center[1] + r * t.sin()]);
            let mut d = String::new();
            for i in 0..=steps {
                let (x, y) = at(outer, start + sweep * i as f64 / steps as f64);
                let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
            }
            for i in (0..=steps).rev() {
                let (x, y) = at(inner, start + sweep * i as f64 / steps as f64);
                let _ = write!(d, "L{x:.2},{y:.2} ");
            }
            let _ = writeln!(out, r#"<path d="{}Z" {style}/>"#, d);
        }
    }
}

/// Dataset points as grey dots, generated points as red crosses, and the
/// component outlines.
pub fn scatter(dataset: &DisconnectedDataset, generated: &[[f64; 2]]) -> String {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in dataset.components() {
        let (a, b) = extent(c);
        for i in 0..2 {
            lo[i] = lo[i].min(a[i]);
            hi[i] = hi[i].max(b[i]);
        }
    }
    let pad = 0.25 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let lo = [lo[0] - pad, lo[1] - pad];
    let span = (hi[0] - lo[0] + pad).max(hi[1] - lo[1] + pad);
    let f = Frame {
        min: lo,
        scale: (SIZE - 2.0 * MARGIN) / span,
    };
    let inside = |(x, y): (f64, f64)| (0.0..=SIZE).contains(&x) && (0.0..=SIZE).contains(&y);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#
    );
    for c in dataset.components() {
        outline(&mut out, c, &f);
    }
    let _ = writeln!(out, r##"<g fill="#999">"##);
    for &p in dataset.points().iter().take(MAX_POINTS) {
        let (x, y) = f.map(p);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r##"<g stroke="#c00" stroke-width="1">"##);
    for &p in generated.iter().take(MAX_POINTS) {
        let c = f.map(p);
        if !inside(c) {
            continue;
        }
        let (x, y) = c;
        let _ = writeln!(
            out,
            r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}"/>"#,
            x - 2.0,
            y - 2.0,
            x + 2.0,
            y + 2.0,
            x - 2.0,
            y + 2.0,
            x + 2.0,
            y - 2.0
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}
