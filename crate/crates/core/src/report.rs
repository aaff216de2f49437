//! Trajectory CSV output and parsing, and simple SVG plots.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::integrator::{Diagnostics, Trajectory, TrajectoryRow};
use crate::model::positions;

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn csv_header(links: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["q", "w"] {
        for i in 1..=links {
            h.extend(AXES.iter().map(|a| format!("{prefix}{i}{a}")));
        }
    }
    for i in 1..=3 {
        h.extend((1..=3).map(|j| format!("R{i}{j}")));
    }
    h.extend((1..=3).map(|i| format!("Om{i}")));
    h.push("f".into());
    h.extend((1..=3).map(|i| format!("M{i}")));
    h.extend(AXES.iter().map(|a| format!("u{a}")));
    h.push("T".into());
    for prefix in ["eq", "ew", "eR", "eOm", "ex", "exd"] {
        h.extend(AXES.iter().map(|a| format!("{prefix}_{a}")));
    }
    h.push("Td".into());
    h.push("phase".into());
    h
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, ",{v:.16e}");
}

fn opt(out: &mut String, v: Option<f64>) {
    match v {
        Some(v) => num(out, v),
        None => out.push(','),
    }
}

fn opt3(out: &mut String, v: Option<Vector3<f64>>) {
    for k in 0..3 {
        opt(out, v.map(|v| v[k]));
    }
}

fn row_line(r: &TrajectoryRow) -> String {
    let mut s = format!("{:.16e}", r.t);
    for v in r.directions.iter().chain(&r.velocities) {
        v.iter().for_each(|x| num(&mut s, *x));
    }
    for i in 0..3 {
        for j in 0..3 {
            num(&mut s, r.attitude[(i, j)]);
        }
    }
    r.body_rate.iter().for_each(|x| num(&mut s, *x));
    opt(&mut s, r.thrust);
    opt3(&mut s, r.moment);
    r.u.iter().for_each(|x| num(&mut s, *x));
    opt(&mut s, r.tension);
    let d = &r.diagnostics;
    for v in [d.e_q, d.e_omega, d.e_r, d.e_body_rate, d.e_x, d.e_x_rate] {
        opt3(&mut s, v);
    }
    opt(&mut s, d.tension_target);
    match d.phase {
        Some(p) => {
            let _ = write!(s, ",{p}");
        }
        None => s.push(','),
    }
    s
}

/// Every `decimate`-th row, always including the last.
pub fn to_csv(traj: &Trajectory, decimate: usize) -> Result<String> {
    let Some(first) = traj.rows.first() else {
        return Err(Error::InvalidState("empty trajectory".into()));
    };
    let decimate = decimate.max(1);
    let mut out = csv_header(first.links()).join(",");
    out.push('\n');
    let last = traj.rows.len() - 1;
    for (k, r) in traj.rows.iter().enumerate() {
        if k % decimate == 0 || k == last {
            out.push_str(&row_line(r));
            out.push('\n');
        }
    }
    Ok(out)
}

struct Fields<'a> {
    cells: std::str::Split<'a, char>,
    line: usize,
}

impl Fields<'_> {
    fn opt(&mut self) -> Result<Option<f64>> {
        let cell = self
            .cells
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: too few fields", self.line)))?;
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse::<f64>()
            .map(Some)
            .map_err(|e| Error::Parse(format!("line {}: `{cell}`: {e}", self.line)))
    }

    fn req(&mut self) -> Result<f64> {
        self.opt()?
            .ok_or_else(|| Error::Parse(format!("line {}: missing required value", self.line)))
    }

    fn vec3(&mut self) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.req()?, self.req()?, self.req()?))
    }

    fn opt3(&mut self) -> Result<Option<Vector3<f64>>> {
        let v = [self.opt()?, self.opt()?, self.opt()?];
        match v {
            [Some(a), Some(b), Some(c)] => Ok(Some(Vector3::new(a, b, c))),
            [None, None, None] => Ok(None),
            _ => Err(Error::Parse(format!(
                "line {}: partially filled vector",
                self.line
            ))),
        }
    }
}

/// Inverse of [`to_csv`]; values round-trip exactly.
pub fn parse_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let q_cols = cols.iter().filter(|c| c.starts_with('q')).count();
    if q_cols == 0 || q_cols % 3 != 0 {
        return Err(Error::Parse("header has no link direction columns".into()));
    }
    let links = q_cols / 3;
    let expected = csv_header(links);
    if cols != expected {
        return Err(Error::Parse(format!(
            "header does not match the {links}-link layout"
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let n_cells = line.split(',').count();
        if n_cells != expected.len() {
            return Err(Error::Parse(format!(
                "line {}: {n_cells} fields, expected {}",
                idx + 1,
                expected.len()
            )));
        }
        let mut f = Fields {
            cells: line.split(','),
            line: idx + 1,
        };
        let t = f.req()?;
        let directions = (0..links).map(|_| f.vec3()).collect::<Result<Vec<_>>>()?;
        let velocities = (0..links).map(|_| f.vec3()).collect::<Result<Vec<_>>>()?;
        let mut attitude = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                attitude[(i, j)] = f.req()?;
            }
        }
        let body_rate = f.vec3()?;
        let thrust = f.opt()?;
        let moment = f.opt3()?;
        let u = f.vec3()?;
        let tension = f.opt()?;
        let diagnostics = Diagnostics {
            e_q: f.opt3()?,
            e_omega: f.opt3()?,
            e_r: f.opt3()?,
            e_body_rate: f.opt3()?,
            e_x: f.opt3()?,
            e_x_rate: f.opt3()?,
            tension_target: f.opt()?,
            phase: match f.cells.next() {
                Some("") | None => None,
                Some(p) => Some(
                    p.parse()
                        .map_err(|e| Error::Parse(format!("line {}: phase `{p}`: {e}", idx + 1)))?,
                ),
            },
        };
        rows.push(TrajectoryRow {
            t,
            directions,
            velocities,
            attitude,
            body_rate,
            thrust,
            moment,
            u,
            tension,
            diagnostics,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(Trajectory { rows })
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (x - self.x.0) / (self.x.1 - self.x.0).max(1e-300);
        let sy = (y - self.y.0) / (self.y.1 - self.y.0).max(1e-300);
        (PAD + sx * (W - 2.0 * PAD), H - PAD - sy * (H - 2.0 * PAD))
    }
}

fn polyline(frame: &Frame, pts: &[(f64, f64)], color: &str) -> String {
    let mut d = String::new();
    for (x, y) in pts {
        let (a, b) = frame.px(*x, *y);
        let _ = write!(d, "{a:.2},{b:.2} ");
    }
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
        d.trim_end()
    )
}

fn svg_doc(
    title: &str,
    frame: &Frame,
    x_label: &str,
    y_label: &str,
    body: &str,
    legend: &[(&str, &str)],
) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{title}</text>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        W / 2.0,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{y_label}</text>",
        H / 2.0,
        H / 2.0
    );
    for (v, anchor, (x, y)) in [
        (frame.x.0, "start", (PAD, H - PAD + 14.0)),
        (frame.x.1, "end", (W - PAD, H - PAD + 14.0)),
    ] {
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\">{v:.3}</text>"
        );
    }
    for (v, y) in [(frame.y.0, H - PAD), (frame.y.1, PAD + 10.0)] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{v:.3}</text>",
            PAD - 4.0
        );
    }
    s.push_str(body);
    for (k, (name, color)) in legend.iter().enumerate() {
        let y = PAD + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{y}\" fill=\"{color}\" text-anchor=\"end\">{name}</text>",
            W - PAD - 6.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// `log10` of the tracking error norms against time.
pub fn error_plot(traj: &Trajectory) -> String {
    type Pick = fn(&Diagnostics) -> Option<Vector3<f64>>;
    let series: [(&str, Pick); 4] = [
        ("|e_q|", |d| d.e_q),
        ("|e_w|", |d| d.e_omega),
        ("|e_R|", |d| d.e_r),
        ("|e_x|", |d| d.e_x),
    ];
    let mut lines = Vec::new();
    for (name, pick) in series {
        let pts: Vec<(f64, f64)> = traj
            .rows
            .iter()
            .filter_map(|r| pick(&r.diagnostics).map(|e| (r.t, e.norm().max(1e-16).log10())))
            .collect();
        if !pts.is_empty() {
            lines.push((name, pts));
        }
    }
    let all = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, y) in all {
        lo = lo.min(*y);
        hi = hi.max(*y);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let t0 = traj.rows.first().map_or(0.0, |r| r.t);
    let t1 = traj.rows.last().map_or(1.0, |r| r.t);
    let frame = Frame {
        x: (t0, t1),
        y: (lo.floor(), hi.ceil().max(lo.floor() + 1.0)),
    };
    let mut body = String::new();
    let mut legend = Vec::new();
    for (k, (name, pts)) in lines.iter().enumerate() {
        body.push_str(&polyline(&frame, pts, COLORS[k % COLORS.len()]));
        legend.push((*name, COLORS[k % COLORS.len()]));
    }
    svg_doc(
        "Tracking errors",
        &frame,
        "t [s]",
        "log10 error",
        &body,
        &legend,
    )
}

/// Horizontal distance against height of each link endpoint along the run,
/// with the final tether shape drawn in black.
pub fn position_plot(lengths: &[f64], traj: &Trajectory) -> String {
    let n = lengths.len();
    let paths: Vec<Vec<(f64, f64)>> = {
        let mut p = vec![Vec::with_capacity(traj.rows.len()); n];
        for r in &traj.rows {
            for (i, x) in positions(lengths, &r.state().chain).iter().enumerate() {
                p[i].push((x.x, -x.z));
            }
        }
        p
    };
    let total: f64 = lengths.iter().sum();
    let frame = Frame {
        x: (-total, total),
        y: (-total, total),
    };
    let mut body = String::new();
    let mut legend = Vec::new();
    let names: Vec<String> = (1..=n).map(|i| format!("link {i}")).collect();
    for (i, pts) in paths.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        body.push_str(&polyline(&frame, pts, color));
        legend.push((names[i].as_str(), color));
    }
    let mut shape = vec![(0.0, 0.0)];
    shape.extend(paths.iter().filter_map(|p| p.last().copied()));
    body.push_str(&polyline(&frame, &shape, "#000"));
    svg_doc(
        "Link endpoints",
        &frame,
        "x [m]",
        "height [m]",
        &body,
        &legend,
    )
}
