//! CSV and SVG exports.
//!
//! Every writer emits a header row, a fixed column order, LF line endings and numbers in
//! shortest round-trip decimal form with a '.' separator, so identical inputs always
//! produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kd_loss::SweepRow;
use crate::metrics::{CedCurve, ErrorList, EvalReport};
use crate::pipeline::experiment::AblationReport;
use crate::scalar::Scalar;

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn num(v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("exported value {v}")));
    }
    Ok(format!("{v}"))
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Columns `threshold,fraction`, one row per CED sample.
pub fn ced_csv(curve: &CedCurve) -> Result<String> {
    curve.validate()?;
    let rows = curve
        .points
        .iter()
        .map(|&(t, f)| Ok(vec![num(t)?, num(f)?]))
        .collect::<Result<Vec<_>>>()?;
    csv_string(&["threshold", "fraction"], rows)
}

/// Columns `variant,seed,nme,fr,auc`, seed-major.
pub fn ablation_csv(report: &AblationReport) -> Result<String> {
    let rows = report
        .rows()
        .map(|r| {
            Ok(vec![
                r.variant.name().to_string(),
                r.seed.to_string(),
                num(r.nme)?,
                num(r.fr)?,
                num(r.auc)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    csv_string(&["variant", "seed", "nme", "fr", "auc"], rows)
}

/// Columns `variant,median_nme,median_fr,median_auc`.
pub fn ablation_summary_csv(report: &AblationReport) -> Result<String> {
    let rows = report
        .medians
        .iter()
        .map(|m| {
            Ok(vec![
                m.variant.name().to_string(),
                num(m.median_nme)?,
                num(m.median_fr)?,
                num(m.median_auc)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    csv_string(&["variant", "median_nme", "median_fr", "median_auc"], rows)
}

/// Columns `nme,fr,auc,n_images`, one data row.
pub fn report_csv(report: &EvalReport) -> Result<String> {
    csv_string(
        &["nme", "fr", "auc", "n_images"],
        [vec![
            num(report.nme_percent)?,
            num(report.fr_percent)?,
            num(report.auc)?,
            report.n_images.to_string(),
        ]],
    )
}

/// Columns `pr,region,omega,aloss,kd_loss`.
pub fn loss_sweep_csv<T: Scalar>(rows: &[SweepRow<T>]) -> Result<String> {
    let rows = rows
        .iter()
        .map(|r| {
            Ok(vec![
                num(r.pr.as_f64())?,
                r.region.to_string(),
                num(r.omega.as_f64())?,
                num(r.aloss.as_f64())?,
                num(r.kd_loss.as_f64())?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    csv_string(&["pr", "region", "omega", "aloss", "kd_loss"], rows)
}

/// Columns `index,error`.
pub fn errors_csv(errors: &ErrorList) -> Result<String> {
    let rows = errors
        .values()
        .iter()
        .enumerate()
        .map(|(i, &e)| Ok(vec![i.to_string(), num(e)?]))
        .collect::<Result<Vec<_>>>()?;
    csv_string(&["index", "error"], rows)
}

/// Reads per-image errors from a CSV with an `error` column (other columns are ignored).
pub fn parse_errors_csv(text: &str) -> Result<ErrorList> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r
        .headers()
        .map_err(|e| Error::schema("/", format!("unreadable csv header: {e}")))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "error")
        .ok_or_else(|| Error::schema("/", "csv header has no 'error' column"))?;
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        // data rows start on line 2
        let line = i + 2;
        let rec = rec.map_err(|e| Error::schema(format!("/{line}"), e.to_string()))?;
        let cell = rec
            .get(col)
            .ok_or_else(|| Error::schema(format!("/{line}"), "missing 'error' value"))?;
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::schema(format!("/{line}"), format!("non-numeric error '{cell}'")))?;
        values.push(v);
    }
    ErrorList::new(values)
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 70.0;

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// CED plot as a standalone SVG document in an 800×600 view box.
pub fn ced_svg(curves: &[(&str, &CedCurve)]) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::Empty("CED curve list"));
    }
    for (_, c) in curves {
        c.validate()?;
    }
    let x_max = curves
        .iter()
        .map(|(_, c)| c.max_threshold())
        .fold(0.0_f64, f64::max);
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + if x_max > 0.0 { x / x_max * plot_w } else { 0.0 };
    let sy = |y: f64| MARGIN_TOP + (1.0 - y) * plot_h;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" width="{SVG_WIDTH}" height="{SVG_HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (sx(0.0), sy(0.0), sx(x_max), sy(1.0));
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"#
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12" fill="black">"#);
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (tx, ty) = (sx(f * x_max), sy(f));
        let _ = writeln!(
            s,
            r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
            y0 + 18.0,
            f * x_max
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{f:.1}</text>"#,
            x0 - 8.0,
            ty + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="16" text-anchor="middle">NME threshold</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-family="sans-serif" font-size="16" text-anchor="middle" transform="rotate(-90 20 {:.2})">fraction of images</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|&(t, f)| format!("{:.2},{:.2}", sx(t), sy(f)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_TOP + 20.0 + 18.0 * i as f64;
        let lx = SVG_WIDTH - MARGIN_RIGHT - 160.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape_xml(label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
