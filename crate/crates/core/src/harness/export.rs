//! Dataset export. Reports are pretty-printed JSON with struct field order;
//! tables are CSV with a header row, written even when empty.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::classify::LabeledPoint;
use super::flower::TraceRow;
use crate::error::Result;
use crate::fatou::ChartPoint;
use crate::invariants::InvariantEval;
use crate::numeric::C64;

/// Serializes a report with a trailing newline.
pub fn report_json<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    File::create(path)?.write_all(report_json(report)?.as_bytes())?;
    Ok(())
}

fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn coord_header(n: usize, prefix: &str) -> Vec<String> {
    (0..n)
        .flat_map(|i| [format!("re_{prefix}{i}"), format!("im_{prefix}{i}")])
        .collect()
}

fn coords(x: &[C64]) -> impl Iterator<Item = String> + '_ {
    x.iter().flat_map(|c| [num(c.re), num(c.im)])
}

/// Orbit trace with columns `j, re_z, im_z, scaled` (`|z|^p · j`).
pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let header = ["j", "re_z", "im_z", "scaled"].map(String::from);
    write_table(
        path,
        &header,
        rows.iter()
            .map(|r| vec![r.j.to_string(), num(r.re), num(r.im), num(r.scaled)]),
    )
}

/// Point cloud of classified points.
pub fn write_labels(path: &Path, n: usize, rows: &[LabeledPoint]) -> Result<()> {
    let mut header = coord_header(n, "x");
    header.extend(["label", "steps"].map(String::from));
    write_table(
        path,
        &header,
        rows.iter().map(|(x, c)| {
            let mut r: Vec<String> = coords(x).collect();
            match c {
                Some(c) => r.extend([c.label.to_string(), c.steps.to_string()]),
                None => r.extend(["band".to_string(), String::new()]),
            }
            r
        }),
    )
}

/// Invariant evaluations with the evaluation point.
pub fn write_invariants(path: &Path, n: usize, rows: &[(Vec<C64>, InvariantEval)]) -> Result<()> {
    let mut header = coord_header(n, "x");
    header.extend(
        [
            "ell",
            "index",
            "re_psi",
            "im_psi",
            "re_u",
            "im_u",
            "tail_bound",
            "terms_used",
            "extrapolated",
        ]
        .map(String::from),
    );
    write_table(
        path,
        &header,
        rows.iter().map(|(x, e)| {
            let mut r: Vec<String> = coords(x).collect();
            let index = e
                .index
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            r.extend([
                e.ell.to_string(),
                index,
                num(e.value.re),
                num(e.value.im),
                num(e.u_value.re),
                num(e.u_value.im),
                num(e.tail_bound),
                e.terms_used.to_string(),
                e.extrapolated.to_string(),
            ]);
            r
        }),
    )
}

/// Table of `(z, w, β(z))`.
pub fn write_beta_table(path: &Path, w_dim: usize, rows: &[(ChartPoint, C64, f64)]) -> Result<()> {
    let mut header = vec!["re_z".to_string(), "im_z".to_string()];
    header.extend(coord_header(w_dim, "w"));
    header.extend(["re_beta", "im_beta", "beta_error"].map(String::from));
    write_table(
        path,
        &header,
        rows.iter().map(|(p, b, e)| {
            let mut r = vec![num(p.z.re), num(p.z.im)];
            r.extend(coords(&p.w));
            r.extend([num(b.re), num(b.im), num(*e)]);
            r
        }),
    )
}
