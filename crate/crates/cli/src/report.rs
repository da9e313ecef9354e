//! Aggregate tables and SVG charts from experiment result CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

pub const METRICS: [&str; 5] = ["sr", "isr", "csr", "cgt", "aps"];

/// Mean and sample standard deviation of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std: var.sqrt(), n }
    }
}

/// One row per (experiment, label, eval mode), in first-seen order.
#[derive(Debug, Clone)]
pub struct Group {
    pub experiment: String,
    pub label: String,
    pub eval_mode: String,
    pub stats: BTreeMap<&'static str, Stat>,
}

pub fn aggregate(csv: &str) -> Result<Vec<Group>> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("results file is empty"))?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| anyhow!("results lack column {name}"));
    let (ce, cl, cm) = (col("experiment")?, col("label")?, col("eval_mode")?);
    let metric_cols: Vec<(&'static str, usize)> = METRICS.iter().map(|m| Ok((*m, col(m)?))).collect::<Result<_>>()?;

    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut values: BTreeMap<(String, String, String), BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(anyhow!("results row {} has {} fields, header has {}", i + 2, f.len(), header.len()));
        }
        let key = (f[ce].to_string(), f[cl].to_string(), f[cm].to_string());
        if !values.contains_key(&key) {
            order.push(key.clone());
        }
        let entry = values.entry(key).or_default();
        for &(m, c) in &metric_cols {
            let v: f64 = f[c].parse().with_context(|| format!("row {} column {m}", i + 2))?;
            entry.entry(m).or_default().push(v);
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let stats = values[&key].iter().map(|(m, xs)| (*m, Stat::of(xs))).collect();
            Group {
                experiment: key.0,
                label: key.1,
                eval_mode: key.2,
                stats,
            }
        })
        .collect())
}

pub fn markdown(groups: &[Group]) -> String {
    let mut out = String::new();
    let mut current = "";
    for g in groups {
        if g.experiment != current {
            current = &g.experiment;
            let _ = writeln!(out, "\n## {current}\n");
            let _ = writeln!(out, "| run | eval mode | seeds | SR | ISR | CSR | CGT | APS |");
            let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
        }
        let cell = |m: &str| {
            let s = g.stats[m];
            if m == "aps" {
                format!("{:.1} ± {:.1}", s.mean, s.std)
            } else {
                format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.std)
            }
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            g.label,
            g.eval_mode,
            g.stats["isr"].n,
            cell("sr"),
            cell("isr"),
            cell("csr"),
            cell("cgt"),
            cell("aps")
        );
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertical bars with one-standard-deviation whiskers.
pub fn bar_chart(title: &str, bars: &[(String, Stat)]) -> String {
    let (w, h, left, bottom, top) = (120.0 * bars.len().max(1) as f64 + 80.0, 320.0, 60.0, 80.0, 40.0);
    let max = bars.iter().map(|(_, s)| s.mean + s.std).fold(0.0_f64, f64::max).max(1e-9);
    let plot_h = h - bottom - top;
    let y = |v: f64| top + plot_h * (1.0 - v / max);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2.0, escape(title));
    let _ = writeln!(svg, "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", h - bottom, w - 20.0, h - bottom);
    for t in 0..=4 {
        let v = max * t as f64 / 4.0;
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>", left - 6.0, y(v) + 4.0);
    }
    for (i, (label, s)) in bars.iter().enumerate() {
        let x = left + 20.0 + 120.0 * i as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"80\" height=\"{:.1}\" fill=\"#4a78b5\"/>",
            y(s.mean),
            h - bottom - y(s.mean)
        );
        let cx = x + 40.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            y((s.mean - s.std).max(0.0)),
            y(s.mean + s.std)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            h - bottom + 16.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Polyline of means against the x values, for sweeps.
pub fn line_chart(title: &str, points: &[(f64, Stat)]) -> String {
    let (w, h, left, bottom, top) = (480.0, 320.0, 60.0, 50.0, 40.0);
    let max = points.iter().map(|(_, s)| s.mean + s.std).fold(0.0_f64, f64::max).max(1e-9);
    let (x0, x1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| left + (w - left - 30.0) * (x - x0) / span;
    let py = |v: f64| top + (h - bottom - top) * (1.0 - v / max);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2.0, escape(title));
    let path: Vec<String> = points.iter().map(|(x, s)| format!("{:.1},{:.1}", px(*x), py(s.mean))).collect();
    let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"#4a78b5\" stroke-width=\"2\"/>", path.join(" "));
    for (x, s) in points {
        let _ = writeln!(svg, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"#4a78b5\"/>", px(*x), py(s.mean));
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{x}</text>", px(*x), h - bottom + 18.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `report.md` plus one ISR chart (and an APS chart when it varies) per experiment.
pub fn write_report(results: &Path, out: &Path) -> Result<Vec<std::path::PathBuf>> {
    if !results.exists() {
        return Err(latentnav::Error::MissingArtifact(results.to_path_buf()).into());
    }
    let csv = std::fs::read_to_string(results).with_context(|| format!("reading {}", results.display()))?;
    let groups = aggregate(&csv)?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let md = out.join("report.md");
    std::fs::write(&md, format!("# Results\n{}", markdown(&groups)))?;
    written.push(md);

    let mut by_exp: BTreeMap<&str, Vec<&Group>> = BTreeMap::new();
    for g in &groups {
        by_exp.entry(&g.experiment).or_default().push(g);
    }
    for (exp, gs) in by_exp {
        let label = |g: &Group| {
            if gs.iter().any(|o| o.label == g.label && o.eval_mode != g.eval_mode) {
                format!("{} ({})", g.label, g.eval_mode)
            } else {
                g.label.clone()
            }
        };
        let sweep: Option<Vec<(f64, Stat)>> = gs
            .iter()
            .map(|g| g.label.strip_prefix("scale-")?.parse().ok().map(|x| (x, g.stats["isr"])))
            .collect();
        let svg = match sweep {
            Some(points) if points.len() > 1 => line_chart(&format!("{exp}: ISR by scale prefix"), &points),
            _ => bar_chart(&format!("{exp}: ISR"), &gs.iter().map(|g| (label(g), g.stats["isr"])).collect::<Vec<_>>()),
        };
        let path = out.join(format!("{exp}-isr.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
        if exp == "efficiency" || exp == "explicit-implicit" {
            let bars: Vec<_> = gs.iter().map(|g| (label(g), g.stats["aps"])).collect();
            let path = out.join(format!("{exp}-aps.svg"));
            std::fs::write(&path, bar_chart(&format!("{exp}: actions per second"), &bars))?;
            written.push(path);
        }
    }
    Ok(written)
}
