//! Locale-free number formatting and the CSV layouts.

use std::fmt::Write as _;

use oamncc_core::montecarlo::SweepPoint;
use oamncc_core::scenarios::TrialOutcome;

pub const SIGNIFICANT_DIGITS: usize = 9;

/// `%.9g`: nine significant digits, trailing zeros trimmed, scientific
/// notation outside `[1e-4, 1e9)`.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Rounding to nine digits can carry into the exponent (9.9999999996 ->
    // 1.00000000e1), so the exponent is read back from the rounded form.
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_owned()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

/// `trial,seed,<metric...>`, one row per trial in index order.
pub fn trials_csv(metrics: &[&str], outcomes: &[TrialOutcome]) -> String {
    let mut out = String::from("trial,seed");
    for m in metrics {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for (k, o) in outcomes.iter().enumerate() {
        let _ = write!(out, "{k},{}", o.seed);
        for (_, v) in &o.metrics {
            let _ = write!(out, ",{}", fmt_g(*v));
        }
        out.push('\n');
    }
    out
}

pub const SWEEP_HEADER: &str = "margin,ratio,policy,rescues,rtb_successes,spotted,abandoned_after_spotting";

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_g(p.margin),
            fmt_g(p.ratio),
            p.policy.name(),
            p.rescues,
            p.rtb_successes,
            p.spotted,
            p.abandoned_after_spotting
        );
    }
    out
}

/// Reads one metric column back from a trials CSV.
pub fn read_metric_column(csv: &str, metric: &str) -> Result<Vec<f64>, String> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or("empty CSV")?;
    let col = header
        .split(',')
        .position(|h| h == metric)
        .ok_or_else(|| format!("CSV has no '{metric}' column (header: {header})"))?;
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(row, line)| {
            let cell = line.split(',').nth(col).ok_or_else(|| format!("row {} is short", row + 1))?;
            cell.parse::<f64>().map_err(|_| format!("row {}: '{cell}' is not a number", row + 1))
        })
        .collect()
}
