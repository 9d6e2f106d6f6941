//! CSV, JSON and SVG artifacts.

use std::fmt::Write as _;

use isoq_core::expansion::{Case, CoefficientReport};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 11] = [
    "n",
    "case",
    "A1",
    "A2",
    "A3",
    "K",
    "a_n",
    "b_n",
    "err",
    "positive",
    "exploratory",
];

#[derive(Debug, Clone, Serialize)]
pub struct CoeffsReport<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: &'a RunConfig,
    pub rows: &'a [CoefficientReport],
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn coefficients_csv(rows: &[CoefficientReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.case.as_str().to_string(),
            cell(r.a1),
            cell(r.a2),
            cell(r.a3),
            cell(r.k),
            cell(r.a_n),
            cell(r.b_n),
            format!("{:e}", r.error_bar),
            r.positive.to_string(),
            r.exploratory.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

struct Series<'a> {
    label: &'a str,
    colour: &'a str,
    points: Vec<(f64, f64, f64)>,
}

/// Line plot of the sweep against n with error bars and a zero line.
/// Values are drawn on a signed log scale `sign(y)·log10(1 + |y|/floor)`
/// so that coefficients spanning many decades stay readable.
pub fn coefficients_svg(rows: &[CoefficientReport], case: Case) -> String {
    let series: Vec<Series> = match case {
        Case::Nonumbilic => vec![Series {
            label: "K(n)",
            colour: "#1f4e9c",
            points: rows
                .iter()
                .filter_map(|r| r.k.map(|k| (f64::from(r.n), k, r.error_bar)))
                .collect(),
        }],
        Case::Umbilic => vec![
            Series {
                label: "a(n)",
                colour: "#1f4e9c",
                points: rows
                    .iter()
                    .filter_map(|r| r.a_n.map(|a| (f64::from(r.n), a, r.error_bar)))
                    .collect(),
            },
            Series {
                label: "b(n)",
                colour: "#b5452b",
                points: rows
                    .iter()
                    .filter_map(|r| r.b_n.map(|b| (f64::from(r.n), b, 0.0)))
                    .collect(),
            },
        ],
    };
    let all: Vec<&(f64, f64, f64)> = series.iter().flat_map(|s| s.points.iter()).collect();
    let floor = all
        .iter()
        .map(|p| p.1.abs())
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min)
        .clamp(1e-300, 1.0);
    let squash = |y: f64| y.signum() * (1.0 + y.abs() / floor).log10();
    let (w, h, pad) = (640.0, 400.0, 56.0);
    let xs = all.iter().map(|p| p.0);
    let (xmin, xmax) = xs
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        });
    let ys = all
        .iter()
        .flat_map(|p| [squash(p.1 - p.2), squash(p.1 + p.2)])
        .chain([0.0]);
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    let (xmin, xmax) = if all.is_empty() {
        (0.0, 1.0)
    } else if xmin == xmax {
        (xmin - 1.0, xmax + 1.0)
    } else {
        (xmin, xmax)
    };
    let (ymin, ymax) = if ymin == ymax {
        (ymin - 1.0, ymax + 1.0)
    } else {
        (ymin, ymax)
    };
    let px = |x: f64| pad + (x - xmin) / (xmax - xmin) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (squash(y) - ymin) / (ymax - ymin) * (h - 2.0 * pad);
    let pyz = |z: f64| h - pad - (z - ymin) / (ymax - ymin) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{} coefficients vs n (signed log scale, floor {floor:.3e})</text>"#,
        w / 2.0,
        case.as_str()
    );
    let z = pyz(0.0);
    let _ = writeln!(
        s,
        r#"<line x1="{pad:.1}" y1="{z:.1}" x2="{:.1}" y2="{z:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        w - pad
    );
    let _ = writeln!(
        s,
        r#"<line x1="{pad:.1}" y1="{pad:.1}" x2="{pad:.1}" y2="{:.1}" stroke="black"/>"#,
        h - pad
    );
    for r in rows
        .iter()
        .map(|r| r.n)
        .collect::<std::collections::BTreeSet<_>>()
    {
        let x = px(f64::from(r));
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{r}</text>"#,
            h - pad + 16.0
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let path: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", px(p.0), py(p.1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            ser.colour,
            path.join(" ")
        );
        for p in &ser.points {
            let (x, y) = (px(p.0), py(p.1));
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{}"/>"#,
                ser.colour
            );
            if p.2 > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{}"/>"#,
                    py(p.1 - p.2),
                    py(p.1 + p.2),
                    ser.colour
                );
            }
        }
        let ly = 40.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            w - pad - 40.0,
            ser.colour,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn require(v: &Value, key: &str, check: fn(&Value) -> bool, what: &str) -> Result<(), String> {
    match v.get(key) {
        Some(x) if check(x) => Ok(()),
        Some(_) => Err(format!("field '{key}' is not {what}")),
        None => Err(format!("missing field '{key}'")),
    }
}

fn number_or_null(v: &Value) -> bool {
    v.is_number() || v.is_null()
}

fn common(v: &Value, command: &str) -> Result<(), String> {
    require(
        v,
        "schema_version",
        |x| x.as_u64() == Some(u64::from(SCHEMA_VERSION)),
        "the current schema version",
    )?;
    if v.get("command").and_then(Value::as_str) != Some(command) {
        return Err(format!("command is not '{command}'"));
    }
    require(v, "config", Value::is_object, "an object")
}

/// Checks a `coeffs` JSON report against the documented schema.
pub fn validate_coeffs_report(v: &Value) -> Result<(), String> {
    common(v, "coeffs")?;
    let rows = v
        .get("rows")
        .and_then(Value::as_array)
        .ok_or("missing array 'rows'")?;
    for (i, row) in rows.iter().enumerate() {
        let ctx = |e: String| format!("rows[{i}]: {e}");
        require(row, "n", |x| x.is_u64(), "an unsigned integer").map_err(ctx)?;
        require(
            row,
            "case",
            |x| matches!(x.as_str(), Some("nonumbilic" | "umbilic")),
            "a case name",
        )
        .map_err(ctx)?;
        for key in ["A1", "A2", "A3", "K", "a_n", "b_n"] {
            require(row, key, number_or_null, "a number or null").map_err(ctx)?;
        }
        require(row, "error_bar", Value::is_number, "a number").map_err(ctx)?;
        require(row, "positive", Value::is_boolean, "a boolean").map_err(ctx)?;
        require(row, "exploratory", Value::is_boolean, "a boolean").map_err(ctx)?;
    }
    Ok(())
}

/// Checks a `verify` JSON report against the documented schema.
pub fn validate_verify_report(v: &Value) -> Result<(), String> {
    common(v, "verify")?;
    require(v, "checks", |x| x.is_u64(), "an unsigned integer")?;
    require(v, "failed", |x| x.is_u64(), "an unsigned integer")?;
    require(v, "passed", Value::is_boolean, "a boolean")?;
    require(
        v,
        "first_failure",
        |x| x.is_null() || x.get("name").is_some_and(Value::is_string),
        "null or a named check",
    )?;
    require(
        v,
        "perturbation",
        |x| x.is_null() || x.is_object(),
        "null or an object",
    )
}

/// Checks a `solve` JSON report against the documented schema.
pub fn validate_solve_report(v: &Value) -> Result<(), String> {
    common(v, "solve")?;
    require(v, "field_path", Value::is_string, "a string")?;
    require(v, "meta_path", Value::is_string, "a string")?;
    let meta = v.get("meta").ok_or("missing field 'meta'")?;
    require(
        meta,
        "schema_version",
        |x| x.is_u64(),
        "an unsigned integer",
    )?;
    let report = meta.get("report").ok_or("missing field 'meta.report'")?;
    require(report, "residual_rel", Value::is_number, "a number")
}
