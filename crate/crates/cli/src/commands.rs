use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ofdm_sync::crb::oracle_agreement;
use ofdm_sync::estimators::{nguyenle_cost, nguyenle_observable, proposed_cost, EstimationResult};
use ofdm_sync::harness::{run_sweep, CrbSource, EstimateOutcome, SweepKind, TrialOptions, TrialRecord, TrialRunner, TrialScenario};
use ofdm_sync::ofdm_model::delta_coefficient;

use crate::args::{CliInvocation, Command};
use crate::output::{render_csv, sweep_notes, write_csv, write_text};
use crate::CliError;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "SYNC_LAB_THREADS";

/// Number of random scenarios in the `crb` command's oracle agreement check.
pub const AGREEMENT_SCENARIOS: usize = 50;

pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn run(inv: &CliInvocation, threads: Option<usize>) -> Result<(), CliError> {
    match inv.command {
        Command::Fig1 | Command::Fig2 => {
            let kind = if inv.command == Command::Fig1 {
                SweepKind::NoiseVariance
            } else {
                SweepKind::Mse
            };
            let result = run_sweep(&inv.experiment, kind, threads)?;
            let mut notes = sweep_notes(&result);
            if !result.discrepancies.is_empty() {
                let report_path = sidecar(&inv.out, ".discrepancy.txt");
                let report: String = result.discrepancies.iter().map(|c| format!("{c}\n")).collect();
                write_text(&report_path, &report)?;
                notes.push(format!("discrepancy_report = {}", report_path.display()));
            }
            write_csv(inv, &result, &notes, &inv.out)
        }
        Command::Crb => {
            let result = run_sweep(&inv.experiment, SweepKind::Crb, threads)?;
            let mut notes = sweep_notes(&result);
            let agreement = oracle_agreement(
                &inv.experiment.ofdm,
                inv.experiment.channel_taps,
                AGREEMENT_SCENARIOS,
                inv.experiment.master_seed,
            )?;
            notes.push(format!(
                "oracle_agreement = {} over {} scenarios, max relative error {:e}",
                if agreement.passed() { "pass" } else { "FAIL" },
                agreement.comparisons.len(),
                agreement.max_relative_error()
            ));
            if !agreement.passed() {
                let report_path = sidecar(&inv.out, ".discrepancy.txt");
                write_text(&report_path, &agreement.discrepancy_report())?;
                notes.push(format!("discrepancy_report = {}", report_path.display()));
            }
            write_text(&inv.out, &render_csv(inv, &result.rows, &notes))
        }
        Command::Trial => {
            let runner = TrialRunner::new(&inv.experiment)?;
            let snr_db = inv.experiment.snr_points_db[0];
            let scenario = runner.draw_scenario(0, snr_db, inv.trial_index)?;
            let record = runner.evaluate(&scenario, 0, snr_db, inv.trial_index, TrialOptions::ALL);
            print!("{}", trial_report(&runner, &scenario, &record));
            Ok(())
        }
    }
}

fn describe(label: &str, outcome: &EstimateOutcome, cost_at_truth: Option<f64>, out: &mut String) {
    let truth = cost_at_truth.map_or("n/a".to_string(), |c| format!("{c:e}"));
    match outcome {
        EstimateOutcome::Estimated(EstimationResult {
            eps_hat, eta_hat, cost, ..
        }) => {
            let _ = writeln!(
                out,
                "{label}: cost at truth {truth}, argmin eps {eps_hat} eta {eta_hat} cost {cost:e}"
            );
        }
        EstimateOutcome::Failed(e) => {
            let _ = writeln!(out, "{label}: FAILED ({e}); cost at truth {truth}");
        }
        EstimateOutcome::Skipped => {
            let _ = writeln!(out, "{label}: skipped");
        }
    }
}

/// Human-readable dump of one trial.
pub fn trial_report(runner: &TrialRunner, scenario: &TrialScenario, record: &TrialRecord) -> String {
    let cfg = runner.config();
    let (eps, eta) = (cfg.true_eps, cfg.true_eta);
    let obs = &scenario.observation;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "trial {} at SNR {} dB (sigma_w2 {:e}), eps {eps}, eta {eta}",
        record.trial_index, record.snr_db, record.sigma_w2
    );
    for (l, h) in scenario.channel.taps.iter().enumerate() {
        let _ = writeln!(out, "  h[{l}] = {:+.6e} {:+.6e}j", h.re, h.im);
    }
    let deltas: Vec<f64> = cfg
        .ofdm
        .subcarriers()
        .into_iter()
        .map(|k| delta_coefficient(k, k, eps, eta, cfg.ofdm.n()).norm())
        .collect();
    let _ = writeln!(
        out,
        "|delta_kk| at truth: min {:.9} max {:.9}",
        deltas.iter().copied().fold(f64::INFINITY, f64::min),
        deltas.iter().copied().fold(0.0, f64::max)
    );
    describe("proposed", &record.proposed, Some(proposed_cost(obs, eps, eta, &cfg.ofdm)), &mut out);
    let nl_truth = nguyenle_observable(obs).ok().map(|y| nguyenle_cost(&y, eps, eta, &cfg.ofdm));
    describe("nguyen_le", &record.nguyen_le, nl_truth, &mut out);
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:e}"));
    let _ = writeln!(out, "||N||^2 {}  ||E||^2 {}", fmt(record.n_norm2), fmt(record.e_norm2));
    match (record.crb, record.crb_source) {
        (Some(c), source) => {
            let via = if source == CrbSource::Oracle { "numeric oracle" } else { "closed form" };
            let _ = writeln!(out, "CRB eps {:e}  CRB eta {:e} ({via})", c.crb_eps, c.crb_eta);
        }
        (None, _) => {
            let _ = writeln!(out, "CRB unavailable (noiseless or singular)");
        }
    }
    out
}
