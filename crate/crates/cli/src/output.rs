//! CSV tables and SVG line charts.
//!
//! Writers only format data handed to them; nothing here evaluates a model.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use urnflow::analysis::AttractorSpec;
use urnflow::urn::PathRecord;

pub fn path_header(k: usize) -> String {
    let mut h = String::from("n,tau");
    for i in 1..=k {
        let _ = write!(h, ",z_{i}");
    }
    for i in 1..=k {
        let _ = write!(h, ",x_{i}");
    }
    h.push_str(",pop");
    h
}

pub fn write_path_csv<W: Write>(path: &PathRecord, mut w: W) -> io::Result<()> {
    let k = path.dim();
    writeln!(w, "{}", path_header(k))?;
    for row in 0..path.len() {
        let mut line = format!("{},{}", path.step_index(row), path.tau(row));
        for z in path.counts(row) {
            let _ = write!(line, ",{z}");
        }
        for x in path.frequencies(row) {
            let _ = write!(line, ",{x}");
        }
        let _ = write!(line, ",{}", path.population(row));
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn flow_header(k: usize) -> String {
    let mut h = String::from("t");
    for i in 1..=k {
        let _ = write!(h, ",x_{i}");
    }
    h.push_str(",f");
    h
}

pub fn write_flow_csv<W: Write>(times: &[f64], points: &[Vec<f64>], growth: &[f64], mut w: W) -> io::Result<()> {
    let k = points.first().map_or(0, Vec::len);
    writeln!(w, "{}", flow_header(k))?;
    for ((t, x), f) in times.iter().zip(points).zip(growth) {
        let mut line = t.to_string();
        for v in x {
            let _ = write!(line, ",{v}");
        }
        let _ = write!(line, ",{f}");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// One row of `analysis.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    pub kind: &'static str,
    /// 1-based indices joined by `;`.
    pub support: String,
    pub residual: Option<f64>,
    pub value: Option<f64>,
    pub x: Vec<f64>,
}

pub fn analysis_header(k: usize) -> String {
    let mut h = String::from("kind,support,residual,value");
    for i in 1..=k {
        let _ = write!(h, ",x_{i}");
    }
    h
}

pub fn support_label(support: &[usize]) -> String {
    support
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_analysis_csv<W: Write>(k: usize, rows: &[AnalysisRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", analysis_header(k))?;
    for r in rows {
        let mut line = format!("{},{},{},{}", r.kind, r.support, opt(r.residual), opt(r.value));
        for i in 0..k {
            line.push(',');
            if let Some(v) = r.x.get(i) {
                let _ = write!(line, "{v}");
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// `orbit.csv`: a `# period = T` comment, then the samples over one period.
pub fn write_orbit_csv<W: Write>(spec: &AttractorSpec, mut w: W) -> io::Result<()> {
    let AttractorSpec::PeriodicOrbit {
        points,
        period,
        closure_gap,
    } = spec
    else {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a periodic orbit"));
    };
    let k = points.first().map_or(0, Vec::len);
    writeln!(w, "# period = {period}")?;
    writeln!(w, "# closure_gap = {closure_gap}")?;
    let mut h = String::from("t");
    for i in 1..=k {
        let _ = write!(h, ",x_{i}");
    }
    writeln!(w, "{h}")?;
    let dt = period / points.len() as f64;
    for (j, x) in points.iter().enumerate() {
        let mut line = (j as f64 * dt).to_string();
        for v in x {
            let _ = write!(line, ",{v}");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Write `contents` produced by `f` to `dir/name`.
pub fn write_file<F>(dir: &Path, name: &str, f: F) -> io::Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
{
    let mut w = BufWriter::new(fs::File::create(dir.join(name))?);
    f(&mut w)?;
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
    /// Dashed horizontal line.
    pub reference: Option<(f64, String)>,
}

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 300.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.05 } else { 1.0 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

/// Stacked line-chart panels in one SVG document with a fixed viewBox.
pub fn render_svg(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {WIDTH} {height}" width="{WIDTH}" height="{height}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#
    );
    for (p, panel) in panels.iter().enumerate() {
        render_panel(&mut s, panel, p as f64 * PANEL_HEIGHT);
    }
    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, panel: &Panel, top: f64) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = top + MARGIN_T;
    let y1 = top + PANEL_HEIGHT - MARGIN_B;
    let ty = |v: f64| {
        if panel.log_y {
            v.max(f64::MIN_POSITIVE).log10()
        } else {
            v
        }
    };
    let xs = bounds(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = bounds(
        panel
            .series
            .iter()
            .flat_map(|s| s.points.iter().filter(|p| !panel.log_y || p.1 > 0.0).map(|p| ty(p.1)))
            .chain(panel.reference.iter().map(|r| ty(r.0))),
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        top + 20.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        y1 + 32.0,
        escape(&panel.x_label)
    );
    let (Some((xa, xb)), Some((ya, yb))) = (xs, ys) else {
        return;
    };
    let px = |v: f64| x0 + (v - xa) / (xb - xa) * (x1 - x0);
    let py = |v: f64| y1 - (ty(v) - ya) / (yb - ya) * (y1 - y0);
    let label = |v: f64| {
        if panel.log_y {
            format!("1e{v:.1}")
        } else {
            format!("{v:.4}")
        }
    };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        x0 - 4.0,
        y0 + 10.0,
        label(yb)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{y1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        x0 - 4.0,
        label(ya)
    );
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="{}" font-family="sans-serif" font-size="10">{}</text>"#,
        y1 + 14.0,
        format_args!("{xa:.3}")
    );
    let _ = writeln!(
        s,
        r#"<text x="{x1}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        y1 + 14.0,
        format_args!("{xb:.3}")
    );
    if let Some((v, name)) = &panel.reference {
        let y = py(*v);
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="gray" stroke-dasharray="6,4"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end" fill="gray">{}</text>"#,
            x1 - 4.0,
            y - 4.0,
            escape(name)
        );
    }
    for (i, series) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        for &(x, y) in &series.points {
            if panel.log_y && y <= 0.0 {
                continue;
            }
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" fill="{color}">{}</text>"#,
            x0 + 6.0 + 60.0 * i as f64,
            y0 + 12.0,
            escape(&series.name)
        );
    }
}

/// Keep at most `max` evenly spaced points of a series (always including
/// the last one).
pub fn decimate(points: Vec<(f64, f64)>, max: usize) -> Vec<(f64, f64)> {
    if points.len() <= max || max < 2 {
        return points;
    }
    let stride = points.len().div_ceil(max - 1);
    let last = *points.last().expect("nonempty");
    let mut out: Vec<(f64, f64)> = points.into_iter().step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers() {
        assert_eq!(path_header(2), "n,tau,z_1,z_2,x_1,x_2,pop");
        assert_eq!(flow_header(3), "t,x_1,x_2,x_3,f");
        assert_eq!(analysis_header(2), "kind,support,residual,value,x_1,x_2");
        assert_eq!(support_label(&[0, 2]), "1;3");
    }

    #[test]
    fn svg_has_fixed_viewbox_and_reference() {
        let panel = Panel {
            title: "growth".into(),
            x_label: "tau".into(),
            series: vec![Series {
                name: "f".into(),
                points: vec![(0.0, 0.01), (1.0, 0.02)],
            }],
            log_y: false,
            reference: Some((1.0 / 75.0, "1/75".into())),
        };
        let svg = render_svg(&[panel.clone(), panel]);
        assert!(svg.contains(r#"viewBox="0 0 800 600""#));
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn decimation_keeps_endpoints() {
        let pts: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64, 0.0)).collect();
        let d = decimate(pts, 100);
        assert!(d.len() <= 101);
        assert_eq!(d[0].0, 0.0);
        assert_eq!(d.last().unwrap().0, 999.0);
    }
}
