//! Static SVG rendering of a payload.
//!
//! Grid cells are drawn as `<rect>` filled with the class color at opacity
//! equal to the cell certainty; points are `<circle class="point">` filled by
//! true label (grey when unknown); points whose prediction disagrees with
//! the background get one extra `<circle class="ring">`. The legend uses
//! `<text>` only, so element counts map one-to-one to scene content.

use std::fmt::Write;

use crate::pipeline::VisPayload;

/// Ten-color cycle shared by every renderer.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const UNKNOWN_COLOR: &str = "#555555";

const PLOT: f64 = 800.0;
const LEGEND_WIDTH: f64 = 180.0;
const POINT_RADIUS: f64 = 3.5;
const RING_RADIUS: f64 = 7.0;

pub fn class_color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(payload: &VisPayload) -> String {
    let g = &payload.grid;
    let span_x = g.dx * g.width as f64;
    let span_y = g.dy * g.height as f64;
    let sx = PLOT / span_x;
    let sy = PLOT / span_y;
    // y grows upward in data space, downward in SVG
    let px = |x: f64| (x - g.x0) * sx;
    let py = |y: f64| PLOT - (y - g.y0) * sy;

    let mut s = String::new();
    let total_w = PLOT + LEGEND_WIDTH;
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.0}" height="{PLOT:.0}" viewBox="0 0 {total_w:.0} {PLOT:.0}">"#
    )
    .unwrap();
    writeln!(s, r#"<g class="grid" shape-rendering="crispEdges">"#).unwrap();
    let cw = g.dx * sx;
    let ch = g.dy * sy;
    for row in 0..g.height {
        for col in 0..g.width {
            let idx = row * g.width + col;
            let x = col as f64 * cw;
            let y = PLOT - (row + 1) as f64 * ch;
            writeln!(
                s,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{cw:.3}" height="{ch:.3}" fill="{}" fill-opacity="{:.4}"/>"#,
                class_color(g.labels[idx]),
                g.certainty[idx]
            )
            .unwrap();
        }
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g class="points">"#).unwrap();
    for p in &payload.points {
        let (cx, cy) = (px(p.x), py(p.y));
        let fill = p.true_label.map_or(UNKNOWN_COLOR, class_color);
        writeln!(
            s,
            r##"<circle class="point" cx="{cx:.3}" cy="{cy:.3}" r="{POINT_RADIUS}" fill="{fill}" stroke="#000000" stroke-width="0.5"><title>{}</title></circle>"##,
            escape(&p.id)
        )
        .unwrap();
        if p.mismatch {
            writeln!(
                s,
                r##"<circle class="ring" cx="{cx:.3}" cy="{cy:.3}" r="{RING_RADIUS}" fill="none" stroke="#000000" stroke-width="1.5"/>"##
            )
            .unwrap();
        }
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g class="legend" font-family="sans-serif" font-size="14">"#).unwrap();
    for (i, name) in payload.class_names.iter().enumerate() {
        let y = 30.0 + 24.0 * i as f64;
        writeln!(
            s,
            r#"<text x="{:.0}" y="{y:.0}" fill="{}">&#9632; {}</text>"#,
            PLOT + 16.0,
            class_color(i),
            escape(name)
        )
        .unwrap();
    }
    let y = 30.0 + 24.0 * payload.class_names.len() as f64 + 12.0;
    writeln!(
        s,
        r##"<text x="{:.0}" y="{y:.0}" fill="#000000">Q_kNN {:.1}%  Q_data {:.1}%</text>"##,
        PLOT + 16.0,
        payload.metrics.q_knn_error * 100.0,
        payload.metrics.q_data_error * 100.0
    )
    .unwrap();
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    s
}
