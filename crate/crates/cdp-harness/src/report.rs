//! Aggregation of trial records and SVG sweep charts.
//!
//! Aggregates are mean ± sample standard deviation of the geodesic error
//! per (mechanism, swept-variable value); error rows (NaN) are excluded
//! from the statistics but counted separately. Charts are plain SVG:
//! one polyline per mechanism with a ±1 std band, linear axes with ticks.

use std::collections::BTreeMap;
use std::io::Write;

use conformal_dp::error::{Error, Result};

use crate::experiment::TrialRecord;

/// Which config field a sweep varied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVariable {
    Dim,
    NSamples,
    Std,
    EpsTotal,
}

impl SweepVariable {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "dim" => Ok(Self::Dim),
            "n" | "n_samples" => Ok(Self::NSamples),
            "std" | "vmf_std" => Ok(Self::Std),
            "eps_total" | "epsilon_total" => Ok(Self::EpsTotal),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep variable {other} (want dim | n_samples | vmf_std | eps_total)"
            ))),
        }
    }

    pub fn column(&self) -> &'static str {
        match self {
            Self::Dim => "dim",
            Self::NSamples => "n",
            Self::Std => "std",
            Self::EpsTotal => "eps_total",
        }
    }

    fn value(&self, r: &TrialRecord) -> f64 {
        match self {
            Self::Dim => r.dim as f64,
            Self::NSamples => r.n as f64,
            Self::Std => r.std,
            Self::EpsTotal => r.eps_total,
        }
    }
}

/// One aggregate row.
#[derive(Clone, Debug)]
pub struct AggregateRow {
    pub mechanism: String,
    pub x: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub count: usize,
    pub failed: usize,
}

/// Group records by (mechanism, x) and compute mean/std of the error.
pub fn aggregate(records: &[TrialRecord], variable: SweepVariable) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let x = variable.value(r);
        groups
            .entry((r.mechanism.clone(), x.to_bits()))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((mechanism, x_bits), members) in groups {
        let x = f64::from_bits(x_bits);
        let ok: Vec<f64> = members
            .iter()
            .filter(|r| r.geodesic_error.is_finite())
            .map(|r| r.geodesic_error)
            .collect();
        let failed = members.len() - ok.len();
        let count = ok.len();
        let mean = if count > 0 {
            ok.iter().sum::<f64>() / count as f64
        } else {
            f64::NAN
        };
        let std = if count > 1 {
            (ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(AggregateRow {
            mechanism,
            x,
            mean_error: mean,
            std_error: std,
            count,
            failed,
        });
    }
    rows.sort_by(|a, b| {
        a.mechanism
            .cmp(&b.mechanism)
            .then(a.x.total_cmp(&b.x))
    });
    rows
}

/// Aggregate CSV: `mechanism,<x>,mean_error,std_error,count,failed`.
pub fn write_aggregate_csv<W: Write>(
    rows: &[AggregateRow],
    variable: SweepVariable,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "mechanism,{},mean_error,std_error,count,failed",
        variable.column()
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.mechanism, r.x, r.mean_error, r.std_error, r.count, r.failed
        )?;
    }
    Ok(())
}

const SERIES_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Render the sweep chart. Returns `None` when fewer than two distinct
/// x values exist (nothing to plot).
pub fn render_svg(rows: &[AggregateRow], variable: SweepVariable) -> Option<String> {
    let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return None;
    }
    let (width, height) = (640.0, 440.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 30.0, 55.0);
    let plot_w = width - ml - mr;
    let plot_h = height - mt - mb;
    let x_min = *xs.first().unwrap();
    let x_max = *xs.last().unwrap();
    let mut y_max: f64 = 0.0;
    for r in rows {
        if r.mean_error.is_finite() {
            y_max = y_max.max(r.mean_error + r.std_error);
        }
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    y_max *= 1.08;
    let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| mt + plot_h - (y.max(0.0) / y_max) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h
    ));
    // ticks
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let px = sx(fx);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            mt + plot_h,
            mt + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>\n",
            mt + plot_h + 18.0,
            fx
        ));
        let fy = y_max * i as f64 / 4.0;
        let py = sy(fy);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{ml}\" y2=\"{py}\" stroke=\"black\"/>\n",
            ml - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.4}</text>\n",
            ml - 8.0,
            py + 4.0,
            fy
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        ml + plot_w / 2.0,
        height - 12.0,
        variable.column()
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">mean geodesic error</text>\n",
        mt + plot_h / 2.0,
        mt + plot_h / 2.0
    ));

    // series
    let mut mechanisms: Vec<String> = rows.iter().map(|r| r.mechanism.clone()).collect();
    mechanisms.sort();
    mechanisms.dedup();
    for (si, mech) in mechanisms.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let mut series: Vec<&AggregateRow> = rows
            .iter()
            .filter(|r| &r.mechanism == mech && r.mean_error.is_finite())
            .collect();
        series.sort_by(|a, b| a.x.total_cmp(&b.x));
        if series.len() < 2 {
            continue;
        }
        // ±1 std band
        let mut band = String::new();
        for r in &series {
            band.push_str(&format!(
                "{},{} ",
                sx(r.x),
                sy(r.mean_error + r.std_error)
            ));
        }
        for r in series.iter().rev() {
            band.push_str(&format!(
                "{},{} ",
                sx(r.x),
                sy((r.mean_error - r.std_error).max(0.0))
            ));
        }
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
            band.trim_end()
        ));
        // mean line
        let pts: String = series
            .iter()
            .map(|r| format!("{},{}", sx(r.x), sy(r.mean_error)))
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
        ));
        // legend
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{mech}</text>\n",
            ml + plot_w - 150.0,
            mt + 16.0 + 16.0 * si as f64
        ));
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Parse a trials CSV produced by `write_trials_csv`.
pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty records file".into()))?;
    if header != crate::experiment::CSV_HEADER {
        return Err(Error::InvalidArgument(format!(
            "unexpected CSV header: {header}"
        )));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 14 {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected 14 columns, got {}",
                lineno + 2,
                cols.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("line {}: bad {what}", lineno + 2)))
        };
        let parse_u = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("line {}: bad {what}", lineno + 2)))
        };
        records.push(TrialRecord {
            config_hash: cols[0].to_string(),
            mechanism: cols[1].to_string(),
            rep: parse_u(cols[2], "rep")?,
            seed: cols[3].parse::<u64>().map_err(|_| {
                Error::InvalidArgument(format!("line {}: bad seed", lineno + 2))
            })?,
            dim: parse_u(cols[4], "dim")?,
            n: parse_u(cols[5], "n")?,
            std: parse_f(cols[6], "std")?,
            eps_total: parse_f(cols[7], "eps_total")?,
            eps_phi: parse_f(cols[8], "eps_phi")?,
            eps_conf: parse_f(cols[9], "eps_conf")?,
            delta: parse_f(cols[10], "delta")?,
            geodesic_error: parse_f(cols[11], "geodesic_error")?,
            acceptance_rate: if cols[12].is_empty() {
                None
            } else {
                Some(parse_f(cols[12], "acceptance_rate")?)
            },
            wall_time_ms: parse_f(cols[13], "wall_time_ms")?,
            error: None,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(mech: &str, eps: f64, err: f64) -> TrialRecord {
        TrialRecord {
            config_hash: "deadbeef".into(),
            mechanism: mech.into(),
            rep: 0,
            seed: 1,
            dim: 3,
            n: 100,
            std: 0.5,
            eps_total: eps,
            eps_phi: eps / 3.0,
            eps_conf: eps * 2.0 / 3.0,
            delta: 1e-9,
            geodesic_error: err,
            acceptance_rate: Some(0.7),
            wall_time_ms: 1.0,
            error: None,
        }
    }

    #[test]
    fn aggregate_matches_spreadsheet_recompute() {
        // fixture: two mechanisms, two eps values, three reps each
        let mut records = Vec::new();
        for (mech, eps, errs) in [
            ("a", 0.1, [1.0, 2.0, 3.0]),
            ("a", 0.5, [0.5, 0.7, 0.9]),
            ("b", 0.1, [2.0, 2.0, 2.0]),
            ("b", 0.5, [1.0, 1.5, 0.5]),
        ] {
            for e in errs {
                records.push(record(mech, eps, e));
            }
        }
        let rows = aggregate(&records, SweepVariable::EpsTotal);
        assert_eq!(rows.len(), 4);
        // independently recomputed: mean(1,2,3) = 2, sample std = 1
        let a01 = rows
            .iter()
            .find(|r| r.mechanism == "a" && r.x == 0.1)
            .unwrap();
        assert!((a01.mean_error - 2.0).abs() < 1e-12);
        assert!((a01.std_error - 1.0).abs() < 1e-12);
        // mean(1.0,1.5,0.5) = 1.0, sample std = 0.5
        let b05 = rows
            .iter()
            .find(|r| r.mechanism == "b" && r.x == 0.5)
            .unwrap();
        assert!((b05.mean_error - 1.0).abs() < 1e-12);
        assert!((b05.std_error - 0.5).abs() < 1e-12);
    }

    #[test]
    fn counting_rows_and_series() {
        let mut records = Vec::new();
        for mech in ["conformal_laplace", "riemannian_laplace", "tangent_gaussian"] {
            for eps in [0.1, 0.2, 0.5, 1.0, 2.0] {
                records.push(record(mech, eps, 0.3));
            }
        }
        let rows = aggregate(&records, SweepVariable::EpsTotal);
        assert_eq!(rows.len(), 15);
        let svg = render_svg(&rows, SweepVariable::EpsTotal).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn single_x_value_gives_no_plot() {
        let rows = aggregate(&[record("a", 0.3, 1.0)], SweepVariable::EpsTotal);
        assert_eq!(rows.len(), 1);
        assert!(render_svg(&rows, SweepVariable::EpsTotal).is_none());
    }

    #[test]
    fn nan_rows_counted_as_failed() {
        let mut bad = record("a", 0.3, f64::NAN);
        bad.error = Some("boom".into());
        let rows = aggregate(&[record("a", 0.3, 1.0), bad], SweepVariable::EpsTotal);
        assert_eq!(rows[0].count, 1);
        assert_eq!(rows[0].failed, 1);
        assert!((rows[0].mean_error - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![record("a", 0.3, 0.25), {
            let mut r = record("b", 0.3, f64::NAN);
            r.acceptance_rate = None;
            r
        }];
        let mut csv = Vec::new();
        crate::experiment::write_trials_csv(&records, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let back = parse_trials_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].mechanism, "a");
        assert!(back[1].geodesic_error.is_nan());
        assert_eq!(back[1].acceptance_rate, None);
        assert_eq!(back[0].eps_total, 0.3);
    }
}
