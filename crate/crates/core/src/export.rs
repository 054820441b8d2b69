//! Trajectory CSV (write and reload) and SVG line plots.

use std::fmt::Write as _;
use std::io;

use crate::graph::SpanningTree;
use crate::sim::SimulationResult;

/// A trajectory table: `t`, agent components, then edge components.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
}

impl Trajectory {
    /// Columns `t, x<i>_<k>, y<i>_<k>`; edge `y<i>` ends at agent `i`.
    pub fn from_result(result: &SimulationResult, tree: &SpanningTree) -> Self {
        let n = result.n;
        let mut header = vec!["t".to_string()];
        for i in 0..result.agents {
            header.extend((0..n).map(|k| format!("x{}_{}", i + 1, k + 1)));
        }
        for (_, child) in tree.edges() {
            header.extend((0..n).map(|k| format!("y{}_{}", child + 1, k + 1)));
        }
        let rows = result
            .times
            .iter()
            .enumerate()
            .map(|(s, &t)| {
                let mut row = Vec::with_capacity(header.len());
                row.push(t);
                row.extend(result.agent_traj[s].iter());
                row.extend(result.edge_traj[s].iter());
                row
            })
            .collect();
        Self { header, rows }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}

/// 17 significant digits, which reloads to the same bits.
fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv<W: io::Write>(out: W, traj: &Trajectory) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&traj.header)?;
    for row in &traj.rows {
        w.write_record(row.iter().map(|&v| format_value(v)))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trajectory_csv<R: io::Read>(input: R) -> Result<Trajectory, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(CsvError::Format {
            line: 1,
            message: "first column must be `t`".into(),
        });
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.trim().parse::<f64>().map_err(|_| CsvError::Format {
                    line,
                    message: format!("column `{}`: `{field}` is not a number", header[c]),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Trajectory { header, rows })
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 50.0;
const MAX_POINTS: usize = 1000;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One plot per state component `k`, each with every agent's `x_i,k(t)`.
/// Returns `(file stem, svg text)` pairs.
pub fn state_plots(result: &SimulationResult, title: &str) -> Vec<(String, String)> {
    (0..result.n)
        .map(|k| {
            let series: Vec<(String, Vec<f64>)> = (0..result.agents)
                .map(|i| {
                    let ys = result.agent_traj.iter().map(|x| x[i * result.n + k]).collect();
                    (format!("x{}", i + 1), ys)
                })
                .collect();
            let name = format!("{title}_x{}", k + 1);
            let caption = format!("{title}: state component {}", k + 1);
            let svg = line_plot(&caption, &result.times, &series);
            (name, svg)
        })
        .collect()
}

/// Line plot in a fixed 800x500 viewBox.
pub fn line_plot(caption: &str, ts: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let t0 = ts.first().copied().unwrap_or(0.0);
    let t1 = ts.last().copied().unwrap_or(1.0).max(t0 + f64::EPSILON);
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|(_, ys)| ys.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let px = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);
    let stride = ts.len().div_ceil(MAX_POINTS).max(1);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(caption)
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
    );
    for q in 0..=4 {
        let f = q as f64 / 4.0;
        let t = t0 + f * (t1 - t0);
        let y = lo + f * (hi - lo);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(t),
            y0 + 18.0,
            tick(t)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py(y) + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    for (c, (label, ys)) in series.iter().enumerate() {
        let colour = PALETTE[c % PALETTE.len()];
        let mut points = String::new();
        let mut idx: Vec<usize> = (0..ts.len()).step_by(stride).collect();
        if idx.last() != Some(&(ts.len().saturating_sub(1))) && !ts.is_empty() {
            idx.push(ts.len() - 1);
        }
        for k in idx {
            let _ = write!(points, "{:.2},{:.2} ", px(ts[k]), py(ys[k]));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.trim_end()
        );
        let ly = MARGIN + 10.0 + 16.0 * c as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x1 - 60.0,
            x1 - 40.0,
            x1 - 35.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Trajectory {
        Trajectory {
            header: vec!["t".into(), "x1_1".into(), "y2_1".into()],
            rows: vec![
                vec![0.0, 0.1, -0.0],
                vec![0.01, 1.0 / 3.0, f64::MIN_POSITIVE],
                vec![0.02, -1e300, 123456789.12345679],
            ],
        }
    }

    #[test]
    fn csv_reloads_bit_exactly() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &table()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1_1,y2_1\n"));
        assert!(text.contains("3.3333333333333331e-1"));
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.header, table().header);
        for (a, b) in back.rows.iter().flatten().zip(table().rows.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.column("x1_1").unwrap()[1], 1.0 / 3.0);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            read_trajectory_csv("x,y\n1,2\n".as_bytes()),
            Err(CsvError::Format { line: 1, .. })
        ));
        match read_trajectory_csv("t,x1_1\n0,1\n0.1,abc\n".as_bytes()) {
            Err(CsvError::Format { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("x1_1"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_trajectory_csv("t,x\n0\n".as_bytes()),
            Err(CsvError::Csv(_))
        ));
    }

    #[test]
    fn plot_shape() {
        let ts: Vec<f64> = (0..3001).map(|k| k as f64 * 0.01).collect();
        let series = vec![
            ("x1".to_string(), ts.iter().map(|t| t.sin()).collect()),
            ("x<2>".to_string(), ts.iter().map(|t| t.cos()).collect()),
        ];
        let svg = line_plot("demo", &ts, &series);
        assert!(svg.contains(r#"viewBox="0 0 800 500""#));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("x&lt;2&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // decimated, last sample kept
        let first = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let n = first.matches(',').count();
        assert!(n <= MAX_POINTS + 1, "{n}");
        assert!(first.contains("750.00,"));
    }

    #[test]
    fn flat_series_still_plots() {
        let svg = line_plot("flat", &[0.0, 1.0], &[("x1".into(), vec![2.0, 2.0])]);
        assert!(!svg.contains("NaN"));
    }
}
