//! Result rendering: line plots with 95% confidence error bars as SVG, one
//! file per metric, plus a summary table on standard output.
//!
//! The x axis is whichever sweep column actually varies (explanation count,
//! tau, epsilon, or explanation fraction, in that priority); one line per
//! algorithm, with an overlaid oracle line on the accuracy plots when
//! oracle rows are present. Rendering is deterministic: identical input
//! produces identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use tedc::error::{Error, Result};
use tedc::eval::mean_ci95;

/// One tidy result row.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub name: String,
    pub dataset: String,
    pub algorithm: String,
    pub explanation_setting: String,
    pub n_explanations: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub e_fraction: f64,
    pub seed: u64,
    pub fold: usize,
    pub metric: String,
    pub value: f64,
}

pub const RESULT_HEADER: [&str; 12] = [
    "name",
    "dataset",
    "algorithm",
    "explanation_setting",
    "n_explanations",
    "tau",
    "epsilon",
    "e_fraction",
    "seed",
    "fold",
    "metric",
    "value",
];

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record(&[
            r.name.clone(),
            r.dataset.clone(),
            r.algorithm.clone(),
            r.explanation_setting.clone(),
            r.n_explanations.to_string(),
            format!("{}", r.tau),
            format!("{}", r.epsilon),
            format!("{}", r.e_fraction),
            r.seed.to_string(),
            r.fold.to_string(),
            r.metric.clone(),
            format!("{:.6}", r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if header != RESULT_HEADER {
        return Err(Error::Data(format!(
            "unexpected results header {header:?}; expected {RESULT_HEADER:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let r = record?;
        let field = |idx: usize| r.get(idx).unwrap_or("").to_string();
        let num = |idx: usize| -> Result<f64> {
            field(idx).parse().map_err(|_| Error::Data(format!(
                "row {i}: non-numeric `{}` in column {}",
                field(idx),
                RESULT_HEADER[idx]
            )))
        };
        rows.push(ResultRow {
            name: field(0),
            dataset: field(1),
            algorithm: field(2),
            explanation_setting: field(3),
            n_explanations: num(4)? as usize,
            tau: num(5)?,
            epsilon: num(6)?,
            e_fraction: num(7)?,
            seed: num(8)? as u64,
            fold: num(9)? as usize,
            metric: field(10),
            value: num(11)?,
        });
    }
    Ok(rows)
}

/// Core metrics that get their own plot, in output order.
const PLOTTED_METRICS: [&str; 6] = [
    "e_accuracy",
    "y_accuracy",
    "y_delta",
    "y_only_accuracy",
    "e_macro_f1",
    "y_macro_f1",
];

/// The sweep axis: first of these columns with more than one distinct value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Explanations,
    Tau,
    Epsilon,
    EFraction,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::Explanations => "number of explanations",
            Axis::Tau => "tau",
            Axis::Epsilon => "epsilon",
            Axis::EFraction => "fraction of training explanations",
        }
    }

    fn value(self, row: &ResultRow) -> f64 {
        match self {
            Axis::Explanations => row.n_explanations as f64,
            Axis::Tau => row.tau,
            Axis::Epsilon => row.epsilon,
            Axis::EFraction => row.e_fraction,
        }
    }
}

pub fn detect_axis(rows: &[ResultRow]) -> Axis {
    let distinct = |f: &dyn Fn(&ResultRow) -> f64| {
        let mut vals: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals.len()
    };
    if distinct(&|r| r.n_explanations as f64) > 1 {
        Axis::Explanations
    } else if distinct(&|r| r.tau) > 1 {
        Axis::Tau
    } else if distinct(&|r| r.epsilon) > 1 {
        Axis::Epsilon
    } else {
        Axis::EFraction
    }
}

/// (x, series) -> mean and 95% CI over all fold/seed values.
type SeriesPoints = BTreeMap<String, Vec<(f64, f64, f64)>>;

fn aggregate(rows: &[ResultRow], metric: &str, axis: Axis, oracle_metric: Option<&str>) -> SeriesPoints {
    let mut grouped: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let series = if r.metric == metric {
            r.algorithm.clone()
        } else if oracle_metric == Some(r.metric.as_str()) {
            "oracle".to_string()
        } else {
            continue;
        };
        grouped.entry((series, axis.value(r).to_bits())).or_default().push(r.value);
    }
    let mut out: SeriesPoints = BTreeMap::new();
    for ((series, xbits), values) in grouped {
        let (mean, ci) = mean_ci95(&values);
        out.entry(series).or_default().push((f64::from_bits(xbits), mean, ci));
    }
    for points in out.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

const PALETTE: [&str; 6] = ["#b05030", "#3060b0", "#308050", "#806020", "#703880", "#404040"];

fn fmt_tick(v: f64) -> String {
    if v == v.floor() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

/// Render one metric as an SVG line plot with error bars.
pub fn render_svg(metric: &str, axis: Axis, series: &SeriesPoints) -> String {
    let (width, height) = (640.0, 440.0);
    let (ml, mr, mt, mb) = (70.0, 30.0, 40.0, 55.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);

    let mut xs: Vec<f64> = Vec::new();
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for points in series.values() {
        for &(x, mean, ci) in points {
            xs.push(x);
            ymin = ymin.min(mean - ci);
            ymax = ymax.max(mean + ci);
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.is_empty() {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-9 {
        ymin -= 0.05;
        ymax += 0.05;
    }
    let pad = (ymax - ymin) * 0.08;
    let (ylo, yhi) = (ymin - pad, ymax + pad);
    let (xlo, xhi) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if a < b => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };

    let sx = |x: f64| ml + (x - xlo) / (xhi - xlo) * pw;
    let sy = |y: f64| mt + (yhi - y) / (yhi - ylo) * ph;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{metric}</text>\n",
        width / 2.0
    );
    // Axes.
    let _ = write!(
        svg,
        "<line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph,
        mt + ph
    );
    // Ticks: x at each distinct sweep value (up to 12), y at 5 even stops.
    let tick_xs: Vec<f64> = if xs.len() <= 12 {
        xs.clone()
    } else {
        (0..=10).map(|i| xlo + (xhi - xlo) * i as f64 / 10.0).collect()
    };
    for &x in &tick_xs {
        let _ = write!(
            svg,
            "<line x1=\"{0:.2}\" y1=\"{1:.1}\" x2=\"{0:.2}\" y2=\"{2:.1}\" stroke=\"black\"/>\n\
             <text x=\"{0:.2}\" y=\"{3:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{4}</text>\n",
            sx(x),
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 18.0,
            fmt_tick(x)
        );
    }
    for i in 0..=4 {
        let y = ylo + (yhi - ylo) * i as f64 / 4.0;
        let _ = write!(
            svg,
            "<line x1=\"{0:.1}\" y1=\"{1:.2}\" x2=\"{2:.1}\" y2=\"{1:.2}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{3:.1}\" y=\"{4:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{5:.3}</text>\n",
            ml,
            sy(y),
            ml + pw,
            ml - 8.0,
            sy(y) + 4.0,
            y
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        height - 12.0,
        axis.label()
    );

    // Series lines, error bars, legend.
    for (si, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let dash = if name == "oracle" { " stroke-dasharray=\"6 4\"" } else { "" };
        if points.len() > 1 {
            let path: Vec<String> =
                points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", sx(x), sy(m))).collect();
            let _ = write!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n",
                path.join(" ")
            );
        }
        for &(x, m, ci) in points {
            let (cx, cy) = (sx(x), sy(m));
            let _ = write!(svg, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"3\" fill=\"{color}\"/>\n");
            if ci > 0.0 {
                let (y1, y2) = (sy(m - ci), sy(m + ci));
                let _ = write!(
                    svg,
                    "<line x1=\"{cx:.2}\" y1=\"{y1:.2}\" x2=\"{cx:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\"/>\n\
                     <line x1=\"{0:.2}\" y1=\"{y1:.2}\" x2=\"{1:.2}\" y2=\"{y1:.2}\" stroke=\"{color}\"/>\n\
                     <line x1=\"{0:.2}\" y1=\"{y2:.2}\" x2=\"{1:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\"/>\n",
                    cx - 4.0,
                    cx + 4.0
                );
            }
        }
        let ly = mt + 16.0 * si as f64 + 8.0;
        let _ = write!(
            svg,
            "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n\
             <text x=\"{2:.1}\" y=\"{3:.1}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>\n",
            ml + pw - 110.0,
            ml + pw - 86.0,
            ml + pw - 80.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write one SVG per metric; returns the files written.
pub fn write_plots(rows: &[ResultRow], out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Data("results file has no rows".into()));
    }
    let axis = detect_axis(rows);
    let mut written = Vec::new();
    for metric in PLOTTED_METRICS {
        let oracle = match metric {
            "e_accuracy" => Some("oracle_e_accuracy"),
            "y_accuracy" => Some("oracle_y_accuracy"),
            _ => None,
        };
        let series = aggregate(rows, metric, axis, oracle);
        if series.is_empty() {
            continue;
        }
        let svg = render_svg(metric, axis, &series);
        let path = out_dir.join(format!("{metric}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

/// Plain-text summary: one line per (config, metric) with mean and CI.
pub fn summary_table(rows: &[ResultRow]) -> String {
    let mut grouped: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        grouped.entry((r.name.clone(), r.metric.clone())).or_default().push(r.value);
    }
    let mut out = String::new();
    let _ = writeln!(out, "{:<40} {:<22} {:>8} {:>10}", "config", "metric", "mean", "ci95");
    for ((name, metric), values) in grouped {
        let (mean, ci) = mean_ci95(&values);
        let _ = writeln!(out, "{name:<40} {metric:<22} {mean:>8.4} {:>10}", format!("+/-{ci:.4}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: &str, algorithm: &str, n_exp: usize, fold: usize, value: f64) -> ResultRow {
        ResultRow {
            name: "t".into(),
            dataset: "fico".into(),
            algorithm: algorithm.into(),
            explanation_setting: format!("m={n_exp}"),
            n_explanations: n_exp,
            tau: 0.0,
            epsilon: 0.0,
            e_fraction: 1.0,
            seed: 1,
            fold,
            metric: metric.into(),
            value,
        }
    }

    #[test]
    fn axis_detection_prefers_explanations_then_noise() {
        let rows = vec![row("e_accuracy", "rf", 9, 0, 0.9), row("e_accuracy", "rf", 39, 0, 0.8)];
        assert_eq!(detect_axis(&rows), Axis::Explanations);
        let mut rows = vec![row("e_accuracy", "rf", 9, 0, 0.9), row("e_accuracy", "rf", 9, 1, 0.8)];
        rows[1].tau = 0.3;
        assert_eq!(detect_axis(&rows), Axis::Tau);
        let rows = vec![row("e_accuracy", "rf", 9, 0, 0.9)];
        assert_eq!(detect_axis(&rows), Axis::EFraction);
    }

    #[test]
    fn rendering_is_deterministic_and_single_points_have_no_line() {
        let rows = vec![
            row("e_accuracy", "rf", 9, 0, 0.91),
            row("e_accuracy", "rf", 9, 1, 0.93),
        ];
        let axis = detect_axis(&rows);
        let series = aggregate(&rows, "e_accuracy", axis, None);
        let a = render_svg("e_accuracy", axis, &series);
        let b = render_svg("e_accuracy", axis, &series);
        assert_eq!(a, b);
        assert!(!a.contains("<polyline"), "single x value should not draw a line");
        assert!(a.contains("<circle"));
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![row("e_accuracy", "rf", 9, 0, 0.912345)];
        let dir = tempfile_dir("roundtrip");
        let path = dir.join("results.csv");
        write_results_csv(&rows, &path).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].metric, "e_accuracy");
        assert!((back[0].value - 0.912345).abs() < 1e-9);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn malformed_results_rejected() {
        let dir = tempfile_dir("malformed");
        let path = dir.join("bad.csv");
        std::fs::write(&path, "not,a,results,file\n1,2,3,4\n").unwrap();
        assert!(read_results_csv(&path).is_err());
        std::fs::remove_dir_all(dir).ok();
    }

    fn tempfile_dir(label: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("tedc_report_{label}_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
