//! Prediction and interpolation plots as CSV tables plus plain SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use spikedec::bench::r2_score;
use spikedec::data::{interp_reconstruct, load_recording};
use spikedec::numerics::Tensor;

use crate::{PlotArgs, UsageError};

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 5] = ["#222222", "#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

struct Series {
    label: String,
    values: Vec<f64>,
}

struct Panel {
    title: String,
    t0: usize,
    series: Vec<Series>,
}

fn svg(panels: &[Panel]) -> String {
    let height = panels.len() as f64 * (PANEL_H + MARGIN) + MARGIN;
    let width = PANEL_W + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        let top = MARGIN + i as f64 * (PANEL_H + MARGIN);
        let n = p.series.iter().map(|x| x.values.len()).max().unwrap_or(0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in p.series.iter().flat_map(|x| &x.values) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if !lo.is_finite() || hi - lo < 1e-12 {
            lo -= 1.0;
            hi += 1.0;
        }
        let x = |t: usize| MARGIN + t as f64 / (n.max(2) - 1) as f64 * PANEL_W;
        let y = |v: f64| top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}">{}</text>"#, top - 6.0, p.title);
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}">{hi:.2}</text><text x="4" y="{}">{lo:.2}</text>"#,
            top + 10.0,
            top + PANEL_H
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{}">t={}</text><text x="{}" y="{}" text-anchor="end">t={}</text>"#,
            top + PANEL_H + 14.0,
            p.t0,
            MARGIN + PANEL_W,
            top + PANEL_H + 14.0,
            p.t0 + n.saturating_sub(1)
        );
        for (k, ser) in p.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<String> = ser
                .values
                .iter()
                .enumerate()
                .map(|(t, &v)| format!("{:.1},{:.1}", x(t), y(v)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                pts.join(" ")
            );
            let lx = MARGIN + PANEL_W - 140.0;
            let ly = top + 14.0 + 13.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}"/><text x="{}" y="{ly}">{}</text>"#,
                ly - 4.0,
                lx + 16.0,
                ly - 4.0,
                lx + 20.0,
                ser.label
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Default)]
struct WindowRows {
    t: Vec<usize>,
    pred: Vec<f64>,
    target: Vec<f64>,
}

fn read_predictions(path: &Path) -> Result<BTreeMap<usize, WindowRows>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let expected = ["window", "t", "pred_vx", "pred_vy", "vx", "vy"];
    if headers.iter().collect::<Vec<_>>() != expected {
        anyhow::bail!(spikedec::Error::Parse(spikedec::ParseError::Csv(format!(
            "{}: expected header {}",
            path.display(),
            expected.join(",")
        ))));
    }
    let mut out: BTreeMap<usize, WindowRows> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || spikedec::Error::Parse(spikedec::ParseError::Csv(format!("row {}: bad value", line + 2)));
        let w: usize = rec[0].parse().map_err(|_| bad())?;
        let t: usize = rec[1].parse().map_err(|_| bad())?;
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 2].parse().map_err(|_| bad())?;
        }
        let e = out.entry(w).or_default();
        e.t.push(t);
        e.pred.extend_from_slice(&v[..2]);
        e.target.extend_from_slice(&v[2..]);
    }
    if out.is_empty() {
        anyhow::bail!(spikedec::Error::Parse(spikedec::ParseError::Csv(format!(
            "{} holds no predictions",
            path.display()
        ))));
    }
    Ok(out)
}

fn column(v: &[f64], d: usize) -> Vec<f64> {
    v.iter().skip(d).step_by(2).copied().collect()
}

/// Windows with the highest, median and lowest R²; windows whose R² is
/// undefined are skipped.
fn predictions(path: &Path, out: &Path) -> Result<()> {
    let wins = read_predictions(path)?;
    let mut scored = Vec::new();
    for (&w, rows) in &wins {
        let n = rows.t.len();
        let p = Tensor::new(vec![n, 2], rows.pred.clone())?;
        let t = Tensor::new(vec![n, 2], rows.target.clone())?;
        if let Ok(r2) = r2_score(&p, &t) {
            scored.push((r2, w));
        }
    }
    if scored.is_empty() {
        anyhow::bail!(spikedec::Error::Evaluation("no window has a defined R²".into()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let picks = [
        ("high", scored[0]),
        ("median", scored[scored.len() / 2]),
        ("low", scored[scored.len() - 1]),
    ];
    let mut panels = Vec::new();
    let mut summary = String::from("rank,window,r2\n");
    for (rank, (r2, w)) in picks {
        let rows = &wins[&w];
        let _ = writeln!(summary, "{rank},{w},{r2}");
        let mut csv = String::from("t,pred_vx,pred_vy,vx,vy\n");
        for (i, t) in rows.t.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{t},{},{},{},{}",
                rows.pred[2 * i],
                rows.pred[2 * i + 1],
                rows.target[2 * i],
                rows.target[2 * i + 1]
            );
        }
        fs::write(out.join(format!("{rank}.csv")), csv)?;
        for (d, axis) in ["vx", "vy"].iter().enumerate() {
            panels.push(Panel {
                title: format!("{rank} R² window {w} (R² = {r2:.3}): {axis}"),
                t0: rows.t[0],
                series: vec![
                    Series {
                        label: "true".into(),
                        values: column(&rows.target, d),
                    },
                    Series {
                        label: "predicted".into(),
                        values: column(&rows.pred, d),
                    },
                ],
            });
        }
    }
    fs::write(out.join("windows.csv"), summary)?;
    fs::write(out.join("predictions.svg"), svg(&panels))?;
    println!("wrote high/median/low windows to {}", out.display());
    Ok(())
}

/// True velocities of an excerpt against their reconstructions from every
/// `s`-th sample.
fn overlay(path: &Path, strides: &[usize], start: usize, len: usize, out: &Path) -> Result<()> {
    let rec = load_recording(path).with_context(|| format!("reading {}", path.display()))?;
    if start + len > rec.len() {
        return Err(UsageError(format!(
            "excerpt [{start}, {}) exceeds the {}-bin recording",
            start + len,
            rec.len()
        ))
        .into());
    }
    let truth = rec.velocity_tensor(start, len);
    let mut recon = Vec::new();
    for &s in strides {
        let r = interp_reconstruct(&truth, s)?;
        let r2 = r2_score(&r, &truth).ok();
        recon.push((s, r, r2));
    }
    let mut csv = String::from("t,vx,vy");
    for (s, _, _) in &recon {
        let _ = write!(csv, ",vx_s{s},vy_s{s}");
    }
    csv.push('\n');
    for i in 0..len {
        let _ = write!(csv, "{},{},{}", start + i, truth.at2(i, 0), truth.at2(i, 1));
        for (_, r, _) in &recon {
            let _ = write!(csv, ",{},{}", r.at2(i, 0), r.at2(i, 1));
        }
        csv.push('\n');
    }
    fs::write(out.join("interp.csv"), csv)?;
    let panels: Vec<Panel> = ["vx", "vy"]
        .iter()
        .enumerate()
        .map(|(d, axis)| {
            let mut series = vec![Series {
                label: "true".into(),
                values: column(truth.data(), d),
            }];
            for (s, r, r2) in &recon {
                let label = match r2 {
                    Some(v) => format!("s={s} (R² {v:.3})"),
                    None => format!("s={s}"),
                };
                series.push(Series {
                    label,
                    values: column(r.data(), d),
                });
            }
            Panel {
                title: format!("interpolated {axis}"),
                t0: start,
                series,
            }
        })
        .collect();
    fs::write(out.join("interp.svg"), svg(&panels))?;
    for (s, _, r2) in &recon {
        match r2 {
            Some(v) => println!("stride {s}: r2 {v:.4}"),
            None => println!("stride {s}: r2 undefined"),
        }
    }
    Ok(())
}

pub fn run(a: PlotArgs) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if let Some(p) = &a.predictions {
        predictions(p, &a.out)?;
    }
    if let Some(r) = &a.overlay {
        overlay(r, &a.strides, a.start, a.len, &a.out)?;
    }
    Ok(())
}
