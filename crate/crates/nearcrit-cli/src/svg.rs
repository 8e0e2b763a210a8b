//! SVG drawings of spanning trees and cut-off trees.

use std::fmt::Write as _;

use nearcrit::forest::{unwrap_sites, SpanningTree};
use nearcrit::geometry::Geometry;
use nearcrit::pivnet::{edge_sites, CutoffForest, CutoffTree, EnhancedNetwork};

use crate::error::CliResult;

pub const CANVAS: f64 = 800.0;

struct Canvas {
    m: f64,
    out: String,
}

impl Canvas {
    fn new(geometry: &Geometry) -> Self {
        let mut out = String::new();
        let pad = 10.0;
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="{v} {v} {s} {s}">"#,
            w = CANVAS + 2.0 * pad,
            v = -pad,
            s = CANVAS + 2.0 * pad
        );
        out.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"white\" stroke=\"#bbb\"/>\n");
        Self { m: geometry.half_side(), out }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] + self.m) / (2.0 * self.m) * CANVAS, (self.m - p[1]) / (2.0 * self.m) * CANVAS)
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2], stroke: &str, width: f64) {
        let ((x1, y1), (x2, y2)) = (self.map(a), self.map(b));
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str, width: f64) {
        let mut attr = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            let _ = write!(attr, "{}{x:.3},{y:.3}", if i == 0 { "" } else { " " });
        }
        let _ = writeln!(self.out, r#"<polyline points="{attr}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#);
    }

    fn marker(&mut self, p: [f64; 2]) {
        let (x, y) = self.map(p);
        let _ = writeln!(self.out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="black"/>"#);
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// One `line` per tree edge; edges crossing a torus seam are drawn from
/// their first endpoint towards the nearest image of the second. The
/// optional `highlight` is a site path drawn on top as a polyline.
pub fn render_spanning(geometry: &Geometry, tree: &SpanningTree, highlight: Option<&[u32]>) -> String {
    let mut c = Canvas::new(geometry);
    let width = (CANVAS / f64::from(geometry.side()) * 0.3).clamp(0.2, 2.0);
    for &e in &tree.edges {
        let [a, b] = geometry.edge(e);
        let seg = unwrap_sites(geometry, &[a, b]);
        c.line(seg[0], seg[1], "black", width);
    }
    if let Some(path) = highlight {
        c.polyline(&unwrap_sites(geometry, path), "red", 2.0 * width);
    }
    c.finish()
}

/// One `polyline` per edge of the giant, following the lattice path that
/// realises it; a degenerate tree is a single marker.
pub fn render_cutoff(geometry: &Geometry, network: &EnhancedNetwork, forest: &CutoffForest, tree: &CutoffTree) -> CliResult<String> {
    let mut c = Canvas::new(geometry);
    if tree.degenerate {
        c.marker(tree.point);
        return Ok(c.finish());
    }
    for &e in &tree.edges {
        let sites = edge_sites(geometry, network, &forest.edges[e as usize])?;
        c.polyline(&unwrap_sites(geometry, &sites), "black", 1.0);
    }
    Ok(c.finish())
}

pub fn count_elements(svg: &str, tag: &str) -> usize {
    svg.matches(&format!("<{tag} ")).count()
}
