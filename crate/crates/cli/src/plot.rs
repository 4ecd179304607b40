//! Static SVG plots of finished runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use retarget_core::cost::{build_laplacian, laplacian_error_table};
use retarget_core::feasibility::ContactSequence;

use crate::config::Method;
use crate::formats::{parse_contacts, parse_keypoints};
use crate::pipeline::{load_inputs, DiagnosticsArtifact, Manifest, CONTACTS, DIAGNOSTICS, KEYPOINTS, MANIFEST};
use crate::report::find_artifact_dirs;
use crate::{read_json, read_text, write_text, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    #[value(name = "laplacian_error")]
    LaplacianError,
    #[value(name = "contact_timeline")]
    ContactTimeline,
    #[value(name = "cost_curve")]
    CostCurve,
}

const W: f64 = 720.0;
const H: f64 = 360.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 5] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6c4f9c"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str, height: f64) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(title)
    )
    .unwrap();
    s
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let y0 = 0.0f64.min(
        series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .fold(0.0, f64::min),
    );
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = svg_open(title, H);
    writeln!(
        s,
        r##"<path d="M{a} {t} L{a} {b} L{r} {b}" fill="none" stroke="#333"/>"##,
        a = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    )
    .unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#,
            sx(xv),
            H - MARGIN + 16.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            MARGIN - 6.0,
            sy(yv) + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        esc(x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    )
    .unwrap();
    for (i, ser) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let d: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#,
            d.join(" ")
        )
        .unwrap();
        let ly = MARGIN + 16.0 * i as f64;
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{c}"/>"#,
            W - MARGIN - 110.0,
            ly - 4.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            W - MARGIN - 92.0,
            ly,
            esc(&ser.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn timeline(title: &str, lanes: &[(String, ContactSequence)]) -> String {
    let lane_h = 18.0;
    let groups = lanes[0].1.groups.len().max(1);
    let height = 60.0 + lanes.len() as f64 * (groups as f64 * lane_h + 14.0);
    let left = 150.0;
    let mut s = svg_open(title, height);
    let mut y = 40.0;
    for (i, (label, seq)) in lanes.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let t = seq.len().max(1) as f64;
        let cell = (W - left - 20.0) / t;
        for (g, name) in seq.groups.iter().enumerate() {
            let gy = y + g as f64 * lane_h;
            writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{} {}</text>"#,
                left - 8.0,
                gy + 13.0,
                esc(label),
                esc(name)
            )
            .unwrap();
            writeln!(
                s,
                r##"<rect x="{left}" y="{gy:.1}" width="{:.1}" height="{}" fill="#eee"/>"##,
                W - left - 20.0,
                lane_h - 4.0
            )
            .unwrap();
            for (f, row) in seq.flags.iter().enumerate() {
                if row[g] {
                    writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{gy:.1}" width="{:.2}" height="{}" fill="{c}"/>"#,
                        left + f as f64 * cell,
                        cell + 0.05,
                        lane_h - 4.0
                    )
                    .unwrap();
                }
            }
        }
        y += groups as f64 * lane_h + 14.0;
    }
    s.push_str("</svg>\n");
    s
}

/// First artifact set of each method, in method order.
fn representatives(roots: &[PathBuf]) -> CliResult<Vec<(PathBuf, Manifest)>> {
    let mut all = Vec::new();
    for r in roots {
        for d in find_artifact_dirs(r)? {
            let m: Manifest = read_json(&d.join(MANIFEST))?;
            all.push((d, m));
        }
    }
    let mut out = Vec::new();
    for method in Method::ALL {
        if let Some(first) = all
            .iter()
            .filter(|(_, m)| m.method == method)
            .min_by_key(|(_, m)| m.seed)
        {
            out.push(first.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::MissingArtifact(
            roots.first().cloned().unwrap_or_default().join(MANIFEST),
        ));
    }
    Ok(out)
}

fn label(m: &Manifest) -> String {
    match m.seed {
        Some(s) => format!("{} (seed {s})", m.method.name().to_uppercase()),
        None => m.method.name().to_uppercase(),
    }
}

/// Renders `kind` for the runs under `roots` into `out`. Nothing is written
/// when there is nothing to draw.
pub fn plot(roots: &[PathBuf], kind: PlotKind, keypoint: &str, out: &Path) -> CliResult<()> {
    let reps = representatives(roots)?;
    let svg = match kind {
        PlotKind::LaplacianError => {
            let mut series = Vec::new();
            for (dir, m) in &reps {
                let inputs = load_inputs(&m.config)?;
                let path = dir.join(KEYPOINTS);
                let x = parse_keypoints(&path, &read_text(&path)?)?;
                if x.is_empty() {
                    return Err(CliError::Mismatch(format!(
                        "{} holds an empty trajectory",
                        path.display()
                    )));
                }
                let k = inputs
                    .model
                    .keypoint_index(keypoint)
                    .ok_or_else(|| CliError::Config(format!("model has no keypoint `{keypoint}`")))?;
                let l = build_laplacian(&inputs.model.adjacency, inputs.model.m())?;
                let table = laplacian_error_table(&x, &inputs.reference, &l)?;
                series.push(Series {
                    label: label(m),
                    points: table.iter().enumerate().map(|(t, e)| (t as f64 * x.dt, e[k])).collect(),
                });
            }
            line_chart(
                &format!("Laplacian error of `{keypoint}`"),
                "time (s)",
                "error (m)",
                &series,
            )
        }
        PlotKind::ContactTimeline => {
            let mut lanes = Vec::new();
            for (dir, m) in &reps {
                let path = dir.join(CONTACTS);
                let c = parse_contacts(&path, &read_text(&path)?)?;
                if c.is_empty() {
                    return Err(CliError::Mismatch(format!(
                        "{} holds an empty trajectory",
                        path.display()
                    )));
                }
                lanes.push((label(m), c));
            }
            if let Some(truth) = reps.iter().find_map(|(_, m)| m.config.truth_contacts.clone()) {
                lanes.push(("truth".into(), parse_contacts(&truth, &read_text(&truth)?)?));
            }
            timeline("Contact phases", &lanes)
        }
        PlotKind::CostCurve => {
            let mut series = Vec::new();
            for (dir, m) in &reps {
                let d: DiagnosticsArtifact = read_json(&dir.join(DIAGNOSTICS))?;
                if let Some(plan) = d.plan {
                    series.push(Series {
                        label: label(m),
                        points: plan
                            .replans
                            .iter()
                            .map(|r| (r.step as f64 * m.dt, r.best_cost))
                            .collect(),
                    });
                }
            }
            if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
                return Err(CliError::Config("cost_curve needs at least one IDR or DDR run".into()));
            }
            line_chart("Best CEM cost per replan", "time (s)", "horizon cost", &series)
        }
    };
    write_text(out, &svg)
}
