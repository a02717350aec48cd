//! Gnuplot data files (whitespace separated, `#` header) and one script per
//! figure. Output depends only on the report, so repeated calls are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use edlab_core::io::fmt_f64;

use crate::error::{HarnessError, Result};
use crate::output::write_text;
use crate::report::ComparisonReport;

const DENSITY_COLUMNS: [&str; 4] = ["fields", "schrodinger", "ck", "ensemble"];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), fmt_f64)
}

pub fn emit_plots(report: &ComparisonReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;

    let mut overlays = Vec::with_capacity(report.snapshots.len());
    for (k, s) in report.snapshots.iter().enumerate() {
        let name = format!("density_{k:03}.dat");
        let mut text = format!("# t = {}\n# x {}\n", fmt_f64(s.t), DENSITY_COLUMNS.join(" "));
        let cols = s.density.named();
        for (i, x) in report.x.iter().enumerate() {
            let _ = write!(text, "{}", fmt_f64(*x));
            for (_, col) in &cols {
                let _ = write!(text, " {}", cell(col.and_then(|c| c.get(i).copied())));
            }
            text.push('\n');
        }
        write_text(&dir.join(&name), &text)?;
        overlays.push((name, s.t));
    }

    let mut script = String::from("set xlabel 'x'\nset ylabel 'rho'\nset key top right\n");
    for (name, t) in &overlays {
        let _ = writeln!(script, "set title 't = {}'", fmt_f64(*t));
        let plots: Vec<String> = DENSITY_COLUMNS
            .iter()
            .enumerate()
            .map(|(c, label)| format!("'{name}' using 1:{} with lines title '{label}'", c + 2))
            .collect();
        let _ = writeln!(script, "plot {}\npause -1", plots.join(", \\\n     "));
    }
    write_text(&dir.join("density.gp"), &script)?;

    let mut energy = String::from("# t kinetic_current kinetic_osmotic potential total\n");
    for e in &report.energy {
        let _ = writeln!(
            energy,
            "{} {} {} {} {}",
            fmt_f64(e.t),
            fmt_f64(e.kinetic_current),
            fmt_f64(e.kinetic_osmotic),
            fmt_f64(e.potential),
            fmt_f64(e.total)
        );
    }
    write_text(&dir.join("energy.dat"), &energy)?;
    write_text(
        &dir.join("energy.gp"),
        "set xlabel 't'\nset ylabel 'energy'\n\
         plot for [c=2:5] 'energy.dat' using 1:c with linespoints title columnhead(c)\npause -1\n",
    )?;

    let mut variance = String::from("# t fields schrodinger ck ensemble analytic\n");
    for s in &report.snapshots {
        let v = &s.variance;
        let _ = writeln!(
            variance,
            "{} {} {} {} {} {}",
            fmt_f64(s.t),
            cell(v.fields),
            cell(v.schrodinger),
            cell(v.ck),
            cell(v.ensemble),
            cell(s.analytic_variance)
        );
    }
    write_text(&dir.join("variance.dat"), &variance)?;
    write_text(
        &dir.join("variance.gp"),
        "set xlabel 't'\nset ylabel 'variance'\n\
         labels = 'fields schrodinger ck ensemble analytic'\n\
         plot for [c=2:6] 'variance.dat' using 1:c with linespoints title word(labels, c-1)\npause -1\n",
    )?;
    Ok(())
}
