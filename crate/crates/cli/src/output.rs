//! CSV rendering: `#` metadata lines, a header row, one row per SNR point.

use std::fmt::Write as _;
use std::path::Path;

use ofdm_sync::harness::{SweepResult, SweepRow};

use crate::args::{CliInvocation, Command};
use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const FIG1_COLUMNS: &[&str] = &["snr_db", "var_n_db", "var_e_db"];
const FIG2_COLUMNS: &[&str] = &[
    "snr_db",
    "mse_cfo_proposed",
    "mse_cfo_nguyenle",
    "crb_cfo",
    "mse_sfo_proposed",
    "mse_sfo_nguyenle",
    "crb_sfo",
    "fail_proposed",
    "fail_nguyenle",
];
const CRB_COLUMNS: &[&str] = &["snr_db", "crb_cfo", "crb_sfo", "crb_excluded"];

/// Absent aggregates (every trial failed) are written as this marker.
pub const ABSENT: &str = "NA";

/// 17 significant digits, enough to round-trip any f64.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_else(|| ABSENT.to_string())
}

fn columns(command: Command) -> &'static [&'static str] {
    match command {
        Command::Fig1 => FIG1_COLUMNS,
        Command::Crb => CRB_COLUMNS,
        Command::Fig2 | Command::Trial => FIG2_COLUMNS,
    }
}

fn row_fields(command: Command, row: &SweepRow) -> Vec<String> {
    match command {
        Command::Fig1 => vec![float(row.snr_db), opt(row.var_n_db()), opt(row.var_e_db())],
        Command::Crb => vec![
            float(row.snr_db),
            opt(row.crb_eps),
            opt(row.crb_eta),
            row.crb_excluded.to_string(),
        ],
        Command::Fig2 | Command::Trial => vec![
            float(row.snr_db),
            opt(row.mse_eps_proposed),
            opt(row.mse_eps_nguyenle),
            opt(row.crb_eps),
            opt(row.mse_eta_proposed),
            opt(row.mse_eta_nguyenle),
            opt(row.crb_eta),
            row.fail_proposed.to_string(),
            row.fail_nguyenle.to_string(),
        ],
    }
}

/// Full CSV text. `notes` become extra `# note:` lines after the settings.
pub fn render_csv(inv: &CliInvocation, rows: &[SweepRow], notes: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# sync-lab {TOOL_VERSION} {}", inv.command.name());
    for (key, value) in inv.settings.entries() {
        let _ = writeln!(out, "# {key} = {value}");
    }
    for note in notes {
        let _ = writeln!(out, "# note: {note}");
    }
    out.push_str(&columns(inv.command).join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row_fields(inv.command, row).join(","));
        out.push('\n');
    }
    out
}

/// Notes that make a sweep self-describing.
pub fn sweep_notes(result: &SweepResult) -> Vec<String> {
    let mut notes = vec![
        format!("trials_per_snr = {}", result.config.trials),
        "snr_definition = per received sample, sigma_w2 = (K/N) 10^(-snr/10)".to_string(),
    ];
    match result.kind {
        ofdm_sync::harness::SweepKind::NoiseVariance => {
            notes.push("var_n_db = 10 log10 mean ||R1 - Xi R0||^2 at the true offsets".into());
            notes.push("var_e_db = 10 log10 mean ||Y - Xi 1||^2 at the true offsets".into());
            let degenerate: usize = result.rows.iter().map(|r| r.e_degenerate).sum();
            notes.push(format!("degenerate_ratio_trials = {degenerate}"));
        }
        _ => {
            notes.push("crb_averaging = arithmetic mean of per-trial CRBs".into());
            let fallbacks: usize = result.rows.iter().map(|r| r.crb_oracle_fallbacks).sum();
            notes.push(format!("crb_oracle_fallbacks = {fallbacks}"));
        }
    }
    notes
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_csv(inv: &CliInvocation, result: &SweepResult, notes: &[String], path: &Path) -> Result<(), CliError> {
    write_text(path, &render_csv(inv, &result.rows, notes))
}
