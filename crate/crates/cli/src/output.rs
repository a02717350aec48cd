//! Output directory layout:
//!
//! ```text
//! resolved_config.toml   complete config, re-runnable as is
//! provenance.json        version, seed, scenario
//! snapshots/NNN.csv      x plus one density column per representation
//! energy.csv             energy components at each snapshot
//! moments.csv            mean and variance per representation
//! trajectories.csv       walker paths, when ensemble.dump_walkers > 0
//! report.json            the comparison report
//! plots/                 gnuplot data and scripts
//! error.json             written instead of report.json on failure
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use edlab_core::ensemble::write_trajectory_csv;
use edlab_core::io::{fmt_f64, CsvWriter};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{HarnessError, Result};
use crate::plots::emit_plots;
use crate::report::{ComparisonReport, SnapshotReport, VERSION};
use crate::scenario::simulate;

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'a str,
    scenario: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct ErrorManifest<'a> {
    kind: &'a str,
    exit_code: u8,
    message: String,
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt_f64)
}

/// Runs `cfg`, writing every artifact under `cfg.outputs.dir`.
///
/// On failure the artifacts written so far are kept and `error.json`
/// records the cause.
pub fn execute(cfg: &ScenarioConfig) -> Result<ComparisonReport> {
    let dir = PathBuf::from(&cfg.outputs.dir);
    create_dir(&dir)?;
    let _ = fs::remove_file(dir.join("error.json"));
    let result = execute_in(cfg, &dir);
    if let Err(e) = &result {
        let manifest = ErrorManifest { kind: e.kind(), exit_code: e.exit_code(), message: e.to_string() };
        write_json(&dir.join("error.json"), &manifest)?;
    }
    result
}

fn execute_in(cfg: &ScenarioConfig, dir: &Path) -> Result<ComparisonReport> {
    write_text(&dir.join("resolved_config.toml"), &cfg.to_toml())?;
    let provenance = Provenance { version: VERSION, scenario: cfg.scenario.name(), seed: cfg.ensemble.seed };
    write_json(&dir.join("provenance.json"), &provenance)?;

    let snap_dir = dir.join("snapshots");
    create_dir(&snap_dir)?;
    let x = cfg.spatial_grid().coords();
    let mut index = 0usize;
    let mut sink = |s: &SnapshotReport| {
        write_snapshot_csv(&snap_dir.join(format!("{index:03}.csv")), &x, s)?;
        index += 1;
        Ok(())
    };
    let out = simulate(cfg, &mut sink)?;
    let report = out.report;

    write_energy_csv(&dir.join("energy.csv"), &report)?;
    write_moments_csv(&dir.join("moments.csv"), &report)?;
    if !out.trajectories.is_empty() {
        let path = dir.join("trajectories.csv");
        let mut f = create_file(&path)?;
        write_trajectory_csv(&mut f, 1, &out.trajectories).and_then(|_| f.flush()).map_err(|e| HarnessError::io(&path, e))?;
    }
    emit_plots(&report, &dir.join("plots"))?;
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn write_snapshot_csv(path: &Path, x: &[f64], s: &SnapshotReport) -> Result<()> {
    let columns: Vec<(&str, &Vec<f64>)> = s.density.named().into_iter().filter_map(|(n, v)| Some((n, v?))).collect();
    let mut header = vec!["x"];
    header.extend(columns.iter().map(|(n, _)| *n));
    let io = |e| HarnessError::io(path, e);
    let mut w = CsvWriter::new(create_file(path)?, &header).map_err(io)?;
    let mut row = Vec::with_capacity(header.len());
    for (i, xi) in x.iter().enumerate() {
        row.clear();
        row.push(*xi);
        row.extend(columns.iter().map(|(_, v)| v[i]));
        w.row(&row).map_err(io)?;
    }
    w.finish().and_then(|mut f| f.flush()).map_err(io)
}

fn write_energy_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let io = |e| HarnessError::io(path, e);
    let header = ["t", "kinetic_current", "kinetic_osmotic", "potential", "total"];
    let mut w = CsvWriter::new(create_file(path)?, &header).map_err(io)?;
    for e in &report.energy {
        w.row(&[e.t, e.kinetic_current, e.kinetic_osmotic, e.potential, e.total]).map_err(io)?;
    }
    w.finish().and_then(|mut f| f.flush()).map_err(io)
}

fn write_moments_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut text = String::from(
        "t,mean_fields,mean_schrodinger,mean_ck,mean_ensemble,\
         var_fields,var_schrodinger,var_ck,var_ensemble,var_analytic\n",
    );
    for s in &report.snapshots {
        let mut cells = vec![fmt_f64(s.t)];
        cells.extend(s.mean.named().iter().map(|(_, v)| opt(v.copied())));
        cells.extend(s.variance.named().iter().map(|(_, v)| opt(v.copied())));
        cells.push(opt(s.analytic_variance));
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}
