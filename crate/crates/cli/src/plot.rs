//! Standalone gnuplot scripts that read the CSV files written next to them.

use std::fmt::Write as _;

use crate::artifact::{ExperimentResult, format_float};
use crate::spec::CommandName;

const PREAMBLE: &str = "set datafile separator comma\nset datafile commentschars \"#\"\nset grid\n";
/// Trajectories drawn by the traj script; the rest stay in the data only.
const MAX_DRAWN: u64 = 10;

fn series(file: &str, x: usize, y: usize, key: usize, value: &str, style: &str, title: &str) -> String {
    format!("'{file}' using {x}:(${key}=={value} ? ${y} : 1/0) with lines {style} title \"{title}\"")
}

pub fn script(result: &ExperimentResult) -> Option<String> {
    let spec = &result.spec;
    let main = result.table(None)?;
    let file = format!("{}.csv", spec.command);
    let col = |name: &str| main.column(name).map(|i| i + 1);
    let mut s = String::from(PREAMBLE);
    let mut plots = Vec::new();
    match spec.command {
        CommandName::Fig1 | CommandName::Fig2 => {
            let _ = writeln!(
                s,
                "set xlabel \"gamma t\"\nset ylabel \"mutual information (nats)\"\nset key bottom right"
            );
            for (i, &theta) in spec.theta.iter().enumerate() {
                let v = format_float(theta);
                let lc = format!("lc {}", i + 1);
                if let Some(c) = col("m_nofb") {
                    plots.push(series(&file, 2, c, 1, &v, &format!("{lc} dt 1"), &format!("theta={v}")));
                }
                if let Some(c) = col("m_fb") {
                    plots.push(series(
                        &file,
                        2,
                        c,
                        1,
                        &v,
                        &format!("{lc} dt 3"),
                        &format!("theta={v}, feedback"),
                    ));
                }
                plots.push(series(&file, 2, col("m_opt")?, 1, &v, &format!("{lc} dt 2"), ""));
            }
        }
        CommandName::Fig3 => {
            let _ = writeln!(
                s,
                "set logscale x\nset xlabel \"gamma t_prep\"\nset ylabel \"rate increase (%)\""
            );
            for (i, &theta) in spec.theta.iter().enumerate() {
                let v = format_float(theta);
                plots.push(series(
                    &file,
                    2,
                    col("percent_increase")?,
                    1,
                    &v,
                    &format!("lc {}", i + 1),
                    &format!("theta={v}"),
                ));
            }
        }
        CommandName::Traj => {
            let _ = writeln!(s, "set xlabel \"t\"\nset ylabel \"P1\"\nset yrange [0:1]");
            let n = spec.n_traj.unwrap_or(1) as u64;
            for k in 0..n.min(MAX_DRAWN) {
                plots.push(series(
                    &file,
                    2,
                    col("p1")?,
                    1,
                    &k.to_string(),
                    "",
                    &format!("trajectory {k}"),
                ));
            }
        }
        CommandName::Validate => return None,
    }
    let _ = writeln!(s, "plot \\\n    {}", plots.join(", \\\n    "));
    let _ = writeln!(s, "pause mouse close");
    Some(s)
}
