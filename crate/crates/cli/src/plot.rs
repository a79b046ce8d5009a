//! gnuplot script with an MSE panel and a bias panel, one curve per method.

use reboot_core::sim::{Method, MetricsRow};
use std::fmt::Write as _;

fn methods_in(rows: &[MetricsRow]) -> Vec<Method> {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
}

fn panel(out: &mut String, csv: &str, column: usize, methods: &[Method]) {
    let curves: Vec<String> = methods
        .iter()
        .map(|m| {
            format!(
                "'{csv}' using (strcol(2) eq \"{name}\" ? $3 : 1/0):{column} with linespoints title \"{name}\"",
                name = m.name()
            )
        })
        .collect();
    let _ = writeln!(out, "plot {}", curves.join(", \\\n     "));
}

/// Renders `figure.png` from `csv_name` when run through gnuplot.
pub fn figure_script(rows: &[MetricsRow], csv_name: &str, sign_invariant: bool) -> String {
    let title = rows.first().map_or("", |r| r.scenario.as_str());
    let (mse_label, bias_label) = if sign_invariant {
        ("MSE (sign-invariant)", "bias (sign-invariant)")
    } else {
        ("MSE", "bias")
    };
    let methods = methods_in(rows);
    let mut out = String::new();
    let _ = writeln!(out, "set terminal pngcairo size 1200,480");
    let _ = writeln!(out, "set output 'figure.png'");
    let _ = writeln!(out, "set datafile separator ','");
    let _ = writeln!(out, "set key autotitle columnhead");
    let _ = writeln!(out, "set multiplot layout 1,2 title \"{title}\"");
    let _ = writeln!(out, "set xlabel 'm'");
    let _ = writeln!(out, "set logscale y");
    let _ = writeln!(out, "set ylabel '{mse_label}'");
    panel(&mut out, csv_name, 7, &methods);
    let _ = writeln!(out, "set ylabel '{bias_label}'");
    panel(&mut out, csv_name, 9, &methods);
    let _ = writeln!(out, "unset multiplot");
    out
}
