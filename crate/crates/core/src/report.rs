//! CSV exchange formats and SVG summary charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{EpisodeRecord, SummaryStats};
use crate::sim::TerminalReason;
use crate::train::CurvePoint;

pub const RECORDS_HEADER: [&str; 7] =
    ["episode_id", "scenario_id", "seed", "success", "steps", "terminal", "cumulative_reward"];
pub const CURVE_HEADER: [&str; 3] = ["step", "mean_episode_reward", "success_rate_window"];
pub const SUMMARY_HEADER: [&str; 3] = ["scenario", "success_rate", "avg_steps"];

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Validation(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV fields are ASCII"))
}

pub fn records_csv(records: &[EpisodeRecord]) -> Result<String> {
    csv_text(
        &RECORDS_HEADER,
        records.iter().map(|r| {
            vec![
                r.episode_id.to_string(),
                r.scenario_id.to_string(),
                r.seed.to_string(),
                u8::from(r.success).to_string(),
                r.steps.to_string(),
                r.terminal.as_str().to_string(),
                r.cumulative_reward.to_string(),
            ]
        }),
    )
}

pub fn curve_csv(curve: &[CurvePoint]) -> Result<String> {
    csv_text(
        &CURVE_HEADER,
        curve.iter().map(|c| {
            vec![c.step.to_string(), c.mean_episode_reward.to_string(), c.success_rate_window.to_string()]
        }),
    )
}

pub fn summary_csv(rows: &BTreeMap<u32, SummaryStats>) -> Result<String> {
    csv_text(
        &SUMMARY_HEADER,
        rows.iter().map(|(id, s)| vec![id.to_string(), s.success_rate_percent.to_string(), s.avg_steps.to_string()]),
    )
}

/// A parsed result file.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultFile {
    Records(Vec<EpisodeRecord>),
    Curve(Vec<CurvePoint>),
    /// A summary table; carries nothing the records do not.
    Summary,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim().parse().map_err(|_| Error::Csv { line, msg: format!("bad {name} {raw:?}") })
}

fn finite(x: f64, name: &str, line: usize) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Csv { line, msg: format!("{name} is not finite") })
    }
}

fn parse_record(rec: &csv::StringRecord, line: usize) -> Result<EpisodeRecord> {
    let success = match rec.get(3).map(str::trim) {
        Some("0") => false,
        Some("1") => true,
        other => return Err(Error::Csv { line, msg: format!("success must be 0 or 1, got {other:?}") }),
    };
    let terminal = rec
        .get(5)
        .map(str::trim)
        .and_then(TerminalReason::parse)
        .filter(|t| t.is_terminal())
        .ok_or_else(|| Error::Csv { line, msg: "terminal must be success, collision or timeout".into() })?;
    if success != (terminal == TerminalReason::Success) {
        return Err(Error::Csv { line, msg: "success flag disagrees with terminal".into() });
    }
    Ok(EpisodeRecord {
        episode_id: field(rec, 0, "episode_id", line)?,
        scenario_id: field(rec, 1, "scenario_id", line)?,
        seed: field(rec, 2, "seed", line)?,
        success,
        steps: field(rec, 4, "steps", line)?,
        terminal,
        cumulative_reward: finite(field(rec, 6, "cumulative_reward", line)?, "cumulative_reward", line)?,
    })
}

fn parse_curve(rec: &csv::StringRecord, line: usize) -> Result<CurvePoint> {
    let rate = finite(field(rec, 2, "success_rate_window", line)?, "success_rate_window", line)?;
    if !(0.0..=100.0).contains(&rate) {
        return Err(Error::Csv { line, msg: format!("success_rate_window {rate} outside [0, 100]") });
    }
    Ok(CurvePoint {
        step: field(rec, 0, "step", line)?,
        mean_episode_reward: finite(field(rec, 1, "mean_episode_reward", line)?, "mean_episode_reward", line)?,
        success_rate_window: rate,
    })
}

/// Parses a records, curve or summary CSV, told apart by the header line.
pub fn parse_result_csv(text: &str) -> Result<ResultFile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = rdr.records();
    let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line() as usize);
    let header = match rows.next() {
        None => return Err(Error::Csv { line: 1, msg: "empty file".into() }),
        Some(h) => h.map_err(|e| Error::Csv { line: line_of(&e), msg: e.to_string() })?,
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols == SUMMARY_HEADER {
        return Ok(ResultFile::Summary);
    }
    let is_records = cols == RECORDS_HEADER;
    if !is_records && cols != CURVE_HEADER {
        return Err(Error::Csv { line: 1, msg: format!("unrecognized header {:?}", header.as_slice()) });
    }
    let mut records = Vec::new();
    let mut curve = Vec::new();
    for row in rows {
        let rec = row.map_err(|e| Error::Csv { line: line_of(&e), msg: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if is_records {
            records.push(parse_record(&rec, line)?);
        } else {
            curve.push(parse_curve(&rec, line)?);
        }
    }
    Ok(if is_records { ResultFile::Records(records) } else { ResultFile::Curve(curve) })
}

pub fn read_result_csv(path: &Path) -> Result<ResultFile> {
    let text = std::fs::read_to_string(path)?;
    parse_result_csv(&text).map_err(|e| match e {
        Error::Csv { line, msg } => Error::Csv { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

/// Per-scenario aggregates, keyed by scenario id.
pub fn summarize(records: &[EpisodeRecord]) -> Result<BTreeMap<u32, SummaryStats>> {
    let mut groups: BTreeMap<u32, Vec<EpisodeRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.scenario_id).or_default().push(r.clone());
    }
    groups.into_iter().map(|(id, rs)| Ok((id, SummaryStats::from_records(&rs)?))).collect()
}

/// Smallest "nice" number (1, 2 or 5 times a power of ten) at or above `x`.
fn nice_ceil(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let p = 10f64.powf(x.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|v| *v >= x).unwrap_or(10.0 * p)
}

fn svg_open(out: &mut String, w: u32, h: u32) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
}

const SUCCESS_COLOR: &str = "#4c72b0";
const STEPS_COLOR: &str = "#dd8452";

/// Grouped bars per scenario: success rate (left axis, percent) and average
/// steps (right axis).
pub fn bar_chart_svg(rows: &BTreeMap<u32, SummaryStats>) -> String {
    let (left, right, top, bottom) = (60.0, 60.0, 40.0, 50.0);
    let group_w = 90.0;
    let plot_h = 260.0;
    let width = left + right + group_w * rows.len().max(1) as f64;
    let height = top + plot_h + bottom;
    let steps_max = nice_ceil(rows.values().map(|s| s.avg_steps).fold(0.0, f64::max));
    let y = |frac: f64| top + plot_h * (1.0 - frac);

    let mut s = String::new();
    svg_open(&mut s, width as u32, height as u32);
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\">Evaluation by scenario</text>", width / 2.0);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let _ = writeln!(
            s,
            "<line x1=\"{left:.1}\" y1=\"{yy:.1}\" x2=\"{x2:.1}\" y2=\"{yy:.1}\" stroke=\"#dddddd\"/>",
            yy = y(f),
            x2 = width - right
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.0}</text>",
            left - 6.0,
            y(f) + 4.0,
            100.0 * f
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", width - right + 6.0, y(f) + 4.0, steps_max * f);
    }
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{:.1}\" transform=\"rotate(-90 14 {:.1})\" text-anchor=\"middle\" fill=\"{SUCCESS_COLOR}\">success rate (%)</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    let rx = width - 12.0;
    let _ = writeln!(
        s,
        "<text x=\"{rx:.1}\" y=\"{cy:.1}\" transform=\"rotate(90 {rx:.1} {cy:.1})\" text-anchor=\"middle\" fill=\"{STEPS_COLOR}\">average steps</text>",
        cy = top + plot_h / 2.0
    );
    for (i, (id, st)) in rows.iter().enumerate() {
        let gx = left + group_w * i as f64;
        let bars = [(st.success_rate_percent / 100.0, SUCCESS_COLOR, format!("{:.1}", st.success_rate_percent)), (
            st.avg_steps / steps_max,
            STEPS_COLOR,
            format!("{:.1}", st.avg_steps),
        )];
        for (j, (frac, color, label)) in bars.iter().enumerate() {
            let x = gx + 15.0 + 30.0 * j as f64;
            let frac = frac.clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"28.0\" height=\"{:.1}\" fill=\"{color}\"/>",
                y(frac),
                plot_h * frac
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{label}</text>",
                x + 14.0,
                y(frac) - 3.0
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">scenario {id}</text>",
            gx + group_w / 2.0,
            top + plot_h + 20.0
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{left:.1}\" y1=\"{b:.1}\" x2=\"{x2:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>",
        b = top + plot_h,
        x2 = width - right
    );
    s.push_str("</svg>\n");
    s
}

const LINE_COLORS: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Two stacked panels over training steps: mean episode reward and rolling
/// success rate, one polyline per labelled curve.
pub fn curve_chart_svg(curves: &[(String, Vec<CurvePoint>)]) -> String {
    let (left, right, top) = (70.0, 160.0, 40.0);
    let (plot_w, panel_h, gap) = (480.0, 180.0, 50.0);
    let width = left + plot_w + right;
    let height = top + 2.0 * panel_h + gap + 40.0;
    let pts = curves.iter().flat_map(|(_, c)| c.iter());
    let x_max = nice_ceil(pts.clone().map(|p| p.step as f64).fold(0.0, f64::max));
    let r_lo = pts.clone().map(|p| p.mean_episode_reward).fold(f64::INFINITY, f64::min).min(0.0);
    let r_hi = pts.map(|p| p.mean_episode_reward).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let (r_lo, r_hi) = (-nice_ceil(-r_lo), nice_ceil(r_hi));
    let px = |step: f64| left + plot_w * step / x_max;

    let mut s = String::new();
    svg_open(&mut s, width as u32, height as u32);
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\">Training curves</text>", left + plot_w / 2.0);
    let panels: [(&str, f64, f64, fn(&CurvePoint) -> f64); 2] = [
        ("mean episode reward", r_lo, r_hi, |p| p.mean_episode_reward),
        ("success rate window (%)", 0.0, 100.0, |p| p.success_rate_window),
    ];
    for (k, (title, lo, hi, get)) in panels.iter().enumerate() {
        let y0 = top + k as f64 * (panel_h + gap);
        let py = |v: f64| y0 + panel_h * (1.0 - (v - lo) / (hi - lo));
        let _ = writeln!(
            s,
            "<rect x=\"{left:.1}\" y=\"{y0:.1}\" width=\"{plot_w:.1}\" height=\"{panel_h:.1}\" fill=\"none\" stroke=\"black\"/>"
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{title}</text>", left + 4.0, y0 - 6.0);
        for t in 0..=4 {
            let v = lo + (hi - lo) * t as f64 / 4.0;
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                left - 6.0,
                py(v) + 4.0,
                v
            );
        }
        for (i, (_, c)) in curves.iter().enumerate() {
            if c.is_empty() {
                continue;
            }
            let path: Vec<String> =
                c.iter().map(|p| format!("{:.2},{:.2}", px(p.step as f64), py(get(p).clamp(*lo, *hi)))).collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                path.join(" "),
                LINE_COLORS[i % LINE_COLORS.len()]
            );
        }
    }
    let axis_y = top + 2.0 * panel_h + gap;
    for t in 0..=4 {
        let v = x_max * t as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", px(v), axis_y + 16.0, v);
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">agent steps</text>",
        left + plot_w / 2.0,
        axis_y + 32.0
    );
    for (i, (label, _)) in curves.iter().enumerate() {
        let ly = top + 16.0 * i as f64;
        let color = LINE_COLORS[i % LINE_COLORS.len()];
        let lx = left + plot_w + 12.0;
        let _ = writeln!(s, "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>", lx + 18.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", lx + 24.0, ly + 4.0, xml_escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
