//! Trace tables, accuracy-complexity plots and local-minimum summaries.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;
use svg::node::element::{Circle, Group, Line, Polyline, Rectangle, Text};
use svg::Document;

use crate::builder::{principal_axes, TraceRow};
use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::graph::ElasticGraph;

pub const TRACE_COLUMNS: [&str; 11] = [
    "step",
    "op_kind",
    "n_nodes",
    "barcode",
    "fve_node",
    "fve_polyline",
    "U_E",
    "U_R",
    "GC",
    "total_energy",
    "historical_cc",
];

/// 17 significant digits; parses back to the same `f64`.
fn full(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.op_kind.clone(),
            r.n_nodes.to_string(),
            r.barcode.to_string(),
            full(r.fve_node),
            full(r.fve_polyline),
            full(r.u_e),
            full(r.u_r),
            full(r.gc),
            full(r.total_energy),
            r.historical_cc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    write_trace_csv(rows, File::create(path)?)
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_COLUMNS {
        return Err(Error::Data(format!("unexpected trace columns {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let bad = |what: &str| Error::Data(format!("trace row {}: bad {what}", line + 1));
        let int = |i: usize| record[i].parse::<usize>().map_err(|_| bad(TRACE_COLUMNS[i]));
        let float = |i: usize| record[i].parse::<f64>().map_err(|_| bad(TRACE_COLUMNS[i]));
        rows.push(TraceRow {
            step: int(0)?,
            op_kind: record[1].to_string(),
            n_nodes: int(2)?,
            barcode: record[3].parse()?,
            fve_node: float(4)?,
            fve_polyline: float(5)?,
            u_e: float(6)?,
            u_r: float(7)?,
            gc: float(8)?,
            total_energy: float(9)?,
            historical_cc: int(10)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data("trace has no rows".into()));
    }
    Ok(rows)
}

pub fn load_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    read_trace_csv(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotPoint {
    pub step: usize,
    pub fve: f64,
    pub gc: f64,
}

/// Vertical line where the star counts change.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub step: usize,
    pub fve: f64,
    pub label: String,
}

/// Data and final graph on the first two principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    pub nodes: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize)>,
    pub title: String,
}

impl Projection {
    pub fn new(data: &DataSet, graph: &ElasticGraph) -> Result<Self> {
        if data.dim() != graph.dimension {
            return Err(Error::DimensionMismatch {
                data: data.dim(),
                graph: graph.dimension,
            });
        }
        let axes = principal_axes(data, 2)?;
        let mean = data.mean();
        let project = |x: &[f64]| -> [f64; 2] {
            let mut p = [0.0; 2];
            for (slot, axis) in p.iter_mut().zip(&axes) {
                *slot = x.iter().zip(&mean).zip(axis).map(|((a, c), v)| (a - c) * v).sum();
            }
            p
        };
        Ok(Self {
            points: data.points().map(project).collect(),
            nodes: graph.nodes.iter().map(|x| project(x)).collect(),
            edges: graph.edges.iter().map(|e| (e.a, e.b)).collect(),
            title: graph.barcode().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    /// In step order, even where FVE goes backwards.
    pub points: Vec<PlotPoint>,
    pub annotations: Vec<Annotation>,
    /// Steps drawn with a highlighted marker.
    pub markers: Vec<usize>,
    pub log_scale: bool,
    pub projection: Option<Projection>,
}

impl PlotSpec {
    pub fn from_rows(rows: &[TraceRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("trace has no rows".into()));
        }
        let points = rows
            .iter()
            .map(|r| PlotPoint {
                step: r.step,
                fve: r.fve_polyline,
                gc: r.gc,
            })
            .collect();
        let annotations = rows
            .windows(2)
            .filter(|w| w[0].barcode.star_counts != w[1].barcode.star_counts)
            .map(|w| Annotation {
                step: w[1].step,
                fve: w[1].fve_polyline,
                label: w[1].barcode.star_part(),
            })
            .collect();
        Ok(Self {
            points,
            annotations,
            markers: Vec::new(),
            log_scale: false,
            projection: None,
        })
    }

    pub fn with_markers(mut self, steps: Vec<usize>) -> Result<Self> {
        if let Some(s) = steps.iter().find(|s| !self.points.iter().any(|p| p.step == **s)) {
            return Err(Error::Data(format!("marker step {s} is not in the trace")));
        }
        self.markers = steps;
        Ok(self)
    }
}

const PANEL: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PLOT_W: f64 = 600.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn value(&self, x: f64) -> f64 {
        if self.log {
            x.max(10f64.powf(self.lo)).log10()
        } else {
            x
        }
    }

    fn unit(&self, x: f64) -> f64 {
        let span = self.hi - self.lo;
        if span > 0.0 {
            (self.value(x) - self.lo) / span
        } else {
            0.5
        }
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let step = nice_step(hi - lo, target);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-3) {
        format!("{x:.0e}")
    } else {
        let s = format!("{x:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn px(x: f64) -> String {
    format!("{x:.2}")
}

fn label(x: f64, y: f64, anchor: &str, content: impl Into<String>) -> Text {
    Text::new(content)
        .set("x", px(x))
        .set("y", px(y))
        .set("text-anchor", anchor)
        .set("font-family", "sans-serif")
        .set("font-size", 12)
}

fn complexity_panel(spec: &PlotSpec) -> Group {
    let min_fve = spec.points.iter().map(|p| p.fve).fold(f64::INFINITY, f64::min);
    let x = Axis {
        lo: ((min_fve * 10.0).floor() / 10.0).clamp(0.0, 0.9),
        hi: 1.0,
        log: false,
    };
    let y = if spec.log_scale {
        let positive: Vec<f64> = spec.points.iter().map(|p| p.gc).filter(|g| *g > 0.0).collect();
        let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = positive.iter().copied().fold(0.0, f64::max);
        if positive.is_empty() {
            Axis { lo: -1.0, hi: 0.0, log: true }
        } else {
            Axis {
                lo: lo.log10().floor(),
                hi: hi.log10().ceil().max(lo.log10().floor() + 1.0),
                log: true,
            }
        }
    } else {
        let max = spec.points.iter().map(|p| p.gc).fold(0.0, f64::max);
        let hi = if max > 0.0 {
            let step = nice_step(max, 5);
            (max / step).ceil() * step
        } else {
            1.0
        };
        Axis { lo: 0.0, hi, log: false }
    };
    let sx = |v: f64| MARGIN + x.unit(v) * (PLOT_W - 2.0 * MARGIN);
    let sy = |v: f64| PANEL - MARGIN - y.unit(v) * (PANEL - 2.0 * MARGIN);

    let mut g = Group::new().set("class", "complexity");
    g = g.add(
        Rectangle::new()
            .set("x", px(MARGIN))
            .set("y", px(MARGIN))
            .set("width", px(PLOT_W - 2.0 * MARGIN))
            .set("height", px(PANEL - 2.0 * MARGIN))
            .set("fill", "none")
            .set("stroke", "black"),
    );
    for t in ticks(x.lo, x.hi, 5) {
        g = g.add(label(sx(t), PANEL - MARGIN + 16.0, "middle", fmt_tick(t)));
    }
    let y_ticks: Vec<(f64, String)> = if y.log {
        (y.lo as i64..=y.hi as i64).map(|e| (10f64.powi(e as i32), format!("1e{e}"))).collect()
    } else {
        ticks(y.lo, y.hi, 5).into_iter().map(|t| (t, fmt_tick(t))).collect()
    };
    for (t, text) in y_ticks {
        g = g.add(label(MARGIN - 6.0, sy(t) + 4.0, "end", text));
    }
    g = g.add(label(PLOT_W / 2.0, PANEL - 16.0, "middle", "FVE"));
    g = g.add(
        label(16.0, PANEL / 2.0, "middle", "geometrical complexity")
            .set("transform", format!("rotate(-90 16 {})", px(PANEL / 2.0))),
    );

    for a in &spec.annotations {
        g = g.add(
            Line::new()
                .set("class", "barcode-change")
                .set("x1", px(sx(a.fve)))
                .set("x2", px(sx(a.fve)))
                .set("y1", px(MARGIN))
                .set("y2", px(PANEL - MARGIN))
                .set("stroke", "gray")
                .set("stroke-dasharray", "4 3"),
        );
        g = g.add(label(sx(a.fve), MARGIN - 6.0, "middle", a.label.clone()).set("class", "barcode-label"));
    }

    let path: Vec<String> = spec.points.iter().map(|p| format!("{},{}", px(sx(p.fve)), px(sy(p.gc)))).collect();
    g = g.add(
        Polyline::new()
            .set("class", "trace")
            .set("points", path.join(" "))
            .set("fill", "none")
            .set("stroke", "steelblue")
            .set("stroke-width", 1.5),
    );
    for p in &spec.points {
        let marked = spec.markers.contains(&p.step);
        g = g.add(
            Circle::new()
                .set("cx", px(sx(p.fve)))
                .set("cy", px(sy(p.gc)))
                .set("r", if marked { 5 } else { 2 })
                .set("fill", if marked { "crimson" } else { "steelblue" }),
        );
    }
    g
}

fn projection_panel(p: &Projection, offset: f64) -> Group {
    let all = p.points.iter().chain(&p.nodes);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for q in all {
        for d in 0..2 {
            lo[d] = lo[d].min(q[d]);
            hi[d] = hi[d].max(q[d]);
        }
    }
    let span = (0..2).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
    let span = if span > 0.0 { span } else { 1.0 };
    let inner = PANEL - 2.0 * MARGIN;
    let sx = |v: &[f64; 2]| offset + MARGIN + (v[0] - lo[0]) / span * inner;
    let sy = |v: &[f64; 2]| PANEL - MARGIN - (v[1] - lo[1]) / span * inner;

    let mut g = Group::new().set("class", "projection");
    for q in &p.points {
        g = g.add(
            Circle::new()
                .set("cx", px(sx(q)))
                .set("cy", px(sy(q)))
                .set("r", 1.5)
                .set("fill", "darkgray"),
        );
    }
    for &(a, b) in &p.edges {
        g = g.add(
            Line::new()
                .set("x1", px(sx(&p.nodes[a])))
                .set("y1", px(sy(&p.nodes[a])))
                .set("x2", px(sx(&p.nodes[b])))
                .set("y2", px(sy(&p.nodes[b])))
                .set("stroke", "crimson")
                .set("stroke-width", 2),
        );
    }
    for q in &p.nodes {
        g = g.add(
            Circle::new()
                .set("cx", px(sx(q)))
                .set("cy", px(sy(q)))
                .set("r", 3)
                .set("fill", "crimson"),
        );
    }
    g.add(label(offset + PANEL / 2.0, MARGIN / 2.0, "middle", p.title.clone()))
        .add(label(offset + PANEL / 2.0, PANEL - 16.0, "middle", "PC1"))
}

pub fn render_svg(spec: &PlotSpec) -> Result<String> {
    if spec.points.is_empty() {
        return Err(Error::Data("nothing to plot".into()));
    }
    let width = PLOT_W + spec.projection.as_ref().map_or(0.0, |_| PANEL);
    let mut doc = Document::new()
        .set("width", width)
        .set("height", PANEL)
        .set("viewBox", (0, 0, width, PANEL))
        .add(complexity_panel(spec));
    if let Some(p) = &spec.projection {
        doc = doc.add(projection_panel(p, PLOT_W));
    }
    Ok(doc.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMinimum {
    pub step: usize,
    pub n_nodes: usize,
    pub barcode: String,
    pub fve_polyline: f64,
    pub gc: f64,
}

/// Steps where GC is strictly below both neighbours. A run of equal values counts
/// once, at its first step; runs touching either end of the trace are skipped.
pub fn local_minima(rows: &[TraceRow]) -> Vec<LocalMinimum> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        while j + 1 < rows.len() && rows[j + 1].gc == rows[i].gc {
            j += 1;
        }
        if i > 0 && j + 1 < rows.len() && rows[i - 1].gc > rows[i].gc && rows[j + 1].gc > rows[i].gc {
            let r = &rows[i];
            out.push(LocalMinimum {
                step: r.step,
                n_nodes: r.n_nodes,
                barcode: r.barcode.to_string(),
                fve_polyline: r.fve_polyline,
                gc: r.gc,
            });
        }
        i = j + 1;
    }
    out
}

pub fn local_minima_json(rows: &[TraceRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&local_minima(rows))?)
}
