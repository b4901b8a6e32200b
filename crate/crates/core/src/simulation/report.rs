//! CSV, JSON and console renderings of study results.
//!
//! `bias_eff.csv` and `sd_se.csv` hold one row per (scenario, level,
//! structure); `qic_frequency.csv` one row per scenario plus a row pooled
//! over `rho` for each remaining setting. Timings go to their own file so
//! that every other output is byte-identical between runs with one seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::correlation::CorrelationKind;
use crate::error::{GeeeError, Result};
use crate::simulation::config::StudyConfig;
use crate::simulation::ScenarioResult;

pub const BIAS_EFF_FILE: &str = "bias_eff.csv";
pub const SD_SE_FILE: &str = "sd_se.csv";
pub const QIC_FREQUENCY_FILE: &str = "qic_frequency.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn scenario_fields(r: &ScenarioResult) -> [String; 4] {
    let s = &r.scenario;
    [
        s.gamma.to_string(),
        s.marginal.to_string(),
        s.design.to_string(),
        s.n_subjects.to_string(),
    ]
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| GeeeError::Numerical(format!("csv output: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| GeeeError::Numerical(format!("csv output: {e}")))
}

pub fn bias_eff_csv(results: &[ScenarioResult]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for r in results {
        for c in &r.cells {
            let mut row = scenario_fields(r).to_vec();
            row.extend([
                r.scenario.rho.to_string(),
                c.tau.to_string(),
                c.structure.short_name().to_string(),
                c.bias.to_string(),
                opt(c.eff),
            ]);
            rows.push(row);
        }
    }
    csv_bytes(
        &["gamma", "marginal", "design", "n", "rho", "tau", "structure", "bias", "eff"],
        rows,
    )
}

pub fn sd_se_csv(results: &[ScenarioResult]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for r in results {
        for c in &r.cells {
            let mut row = scenario_fields(r).to_vec();
            row.extend([
                r.scenario.rho.to_string(),
                c.tau.to_string(),
                c.structure.short_name().to_string(),
                opt(c.sd),
                c.se.to_string(),
                c.rmse.to_string(),
            ]);
            rows.push(row);
        }
    }
    csv_bytes(
        &["gamma", "marginal", "design", "n", "rho", "tau", "structure", "sd", "se", "rmse"],
        rows,
    )
}

pub fn qic_frequency_csv(results: &[ScenarioResult]) -> Result<Vec<u8>> {
    let count_cells = |counts: &BTreeMap<CorrelationKind, usize>| {
        CorrelationKind::ALL
            .iter()
            .map(|k| counts.get(k).copied().unwrap_or(0).to_string())
            .collect::<Vec<_>>()
    };
    let mut rows = Vec::new();
    let mut pooled: Vec<([String; 4], usize, BTreeMap<CorrelationKind, usize>)> = Vec::new();
    for r in results {
        let key = scenario_fields(r);
        let mut row = key.to_vec();
        row.push(r.scenario.rho.to_string());
        row.push(r.replications_used.to_string());
        row.extend(count_cells(&r.qic_selection_counts));
        rows.push(row);

        let slot = match pooled.iter().position(|(k, _, _)| *k == key) {
            Some(i) => i,
            None => {
                pooled.push((key, 0, BTreeMap::new()));
                pooled.len() - 1
            }
        };
        pooled[slot].1 += r.replications_used;
        for (&k, &c) in &r.qic_selection_counts {
            *pooled[slot].2.entry(k).or_default() += c;
        }
    }
    for (key, used, counts) in pooled {
        let mut row = key.to_vec();
        row.push("pooled".into());
        row.push(used.to_string());
        row.extend(count_cells(&counts));
        rows.push(row);
    }
    let mut header = vec!["gamma", "marginal", "design", "n", "rho", "replications_used"];
    header.extend(CorrelationKind::ALL.iter().map(|k| k.short_name()));
    csv_bytes(&header, rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    package: &'a str,
    version: &'a str,
    seed: Option<u64>,
    settings: &'a BTreeMap<String, String>,
    scenarios: usize,
    replications_requested: usize,
    replications_used: usize,
    replications_failed: usize,
    files: Vec<&'a str>,
}

#[derive(Serialize)]
struct Timing {
    label: String,
    seconds: f64,
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)
        .map_err(|e| GeeeError::Numerical(format!("json output: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// All output files of a study, keyed by file name.
pub fn study_outputs(
    config: &StudyConfig,
    results: &[ScenarioResult],
    seconds: &[f64],
) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let seeds: Vec<u64> = config.scenarios.iter().map(|s| s.seed).collect();
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: seeds.first().copied().filter(|s| seeds.iter().all(|t| t == s)),
        settings: &config.settings,
        scenarios: results.len(),
        replications_requested: config.scenarios.iter().map(|s| s.replications).sum(),
        replications_used: results.iter().map(|r| r.replications_used).sum(),
        replications_failed: results.iter().map(|r| r.failures.len()).sum(),
        files: vec![BIAS_EFF_FILE, SD_SE_FILE, QIC_FREQUENCY_FILE, SUMMARY_FILE, TIMINGS_FILE],
    };
    let timings: Vec<Timing> = results
        .iter()
        .zip(seconds)
        .map(|(r, &s)| Timing {
            label: r.scenario.label(),
            seconds: s,
        })
        .collect();
    Ok(vec![
        (BIAS_EFF_FILE, bias_eff_csv(results)?),
        (SD_SE_FILE, sd_se_csv(results)?),
        (QIC_FREQUENCY_FILE, qic_frequency_csv(results)?),
        (SUMMARY_FILE, json_bytes(&results)?),
        (MANIFEST_FILE, json_bytes(&manifest)?),
        (TIMINGS_FILE, json_bytes(&timings)?),
    ])
}

/// Writes every file or none: contents go to temporaries first and are
/// renamed into place once all writes succeeded.
pub fn write_all_or_nothing(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    let io = |what: &str, e: std::io::Error| GeeeError::InvalidInput(format!("{what}: {e}"));
    fs::create_dir_all(dir).map_err(|e| io(&dir.display().to_string(), e))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, bytes) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, bytes) {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(io(&target.display().to_string(), e));
        }
        staged.push((tmp, target));
    }
    for (tmp, target) in &staged {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged);
            return Err(io(&target.display().to_string(), e));
        }
    }
    Ok(())
}

/// Console tables at four decimals.
pub fn render_results(results: &[ScenarioResult]) -> String {
    let mut out = String::new();
    let f4 = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    for r in results {
        let _ = writeln!(
            out,
            "{}  ({} of {} replications used)",
            r.scenario.label(),
            r.replications_used,
            r.scenario.replications
        );
        let _ = writeln!(
            out,
            "{:>6} {:>5} {:>9} {:>8} {:>8} {:>8} {:>8}",
            "tau", "corr", "Bias", "EFF", "SD", "SE", "RMSE"
        );
        for c in &r.cells {
            let _ = writeln!(
                out,
                "{:>6} {:>5} {:>9} {:>8} {:>8} {:>8} {:>8}",
                format!("{:.2}", c.tau),
                c.structure.short_name(),
                f4(Some(c.bias)),
                f4(c.eff),
                f4(c.sd),
                f4(Some(c.se)),
                f4(Some(c.rmse)),
            );
        }
        let counts: Vec<String> = r
            .qic_selection_counts
            .iter()
            .map(|(k, c)| format!("{}={c}", k.short_name()))
            .collect();
        let _ = writeln!(out, "QIC selections: {}\n", counts.join(" "));
    }
    out
}
