//! Flag and config-file parsing.
//!
//! Precedence is built-in defaults, then the `--config` file, then flags.
//! Config files hold `key = value` lines using the long flag names without
//! the leading dashes; `#` starts a comment.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use ofdm_sync::estimators::GridSpec;
use ofdm_sync::harness::{self, ExperimentConfig};
use ofdm_sync::ofdm_model::OfdmConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Residual energies ||N||^2 and ||E||^2 versus SNR.
    Fig1,
    /// Estimator MSEs and mean CRBs versus SNR.
    Fig2,
    /// Mean CRBs versus SNR plus the closed-form/oracle agreement check.
    Crb,
    /// One trial at --snr-min, printed for inspection.
    Trial,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fig1 => "fig1",
            Command::Fig2 => "fig2",
            Command::Crb => "crb",
            Command::Trial => "trial",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sync-lab", version, about = "Joint CFO/SFO estimation experiments")]
struct Cli {
    command: Command,
    /// `key = value` defaults, overridden by flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (CSV for fig1/fig2/crb). Defaults to `<command>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    snr_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_max: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Normalized carrier frequency offset.
    #[arg(long, allow_negative_numbers = true)]
    cfo: Option<f64>,
    /// Sampling frequency offset.
    #[arg(long, allow_negative_numbers = true)]
    sfo: Option<f64>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    cp: Option<usize>,
    #[arg(long)]
    grid_cfo_step: Option<f64>,
    #[arg(long)]
    grid_sfo_step: Option<f64>,
    #[arg(long)]
    grid_cfo_max: Option<f64>,
    #[arg(long)]
    grid_sfo_max: Option<f64>,
    /// Trial index for `trial`.
    #[arg(long)]
    trial_index: Option<usize>,
}

/// Every tunable, keyed by its flag name.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub snr_min: f64,
    pub snr_max: f64,
    pub snr_step: f64,
    pub trials: usize,
    pub seed: u64,
    pub cfo: f64,
    pub sfo: f64,
    pub taps: usize,
    pub n: usize,
    pub k: usize,
    pub cp: usize,
    pub grid_cfo_step: f64,
    pub grid_sfo_step: f64,
    pub grid_cfo_max: f64,
    pub grid_sfo_max: f64,
}

impl Settings {
    pub fn defaults(command: Command) -> Self {
        let trials = match command {
            Command::Fig1 => harness::NOISE_VARIANCE_TRIALS,
            Command::Trial => 1,
            Command::Fig2 | Command::Crb => harness::MSE_TRIALS,
        };
        let ofdm = OfdmConfig::ieee80211a();
        Self {
            snr_min: 0.0,
            snr_max: 30.0,
            snr_step: 5.0,
            trials,
            seed: harness::DEFAULT_SEED,
            cfo: harness::REFERENCE_EPS,
            sfo: harness::REFERENCE_ETA,
            taps: harness::REFERENCE_TAPS,
            n: ofdm.n(),
            k: ofdm.k(),
            cp: ofdm.cp(),
            grid_cfo_step: 0.01,
            grid_sfo_step: 1e-5,
            grid_cfo_max: 0.5,
            grid_sfo_max: 5e-4,
        }
    }

    pub const KEYS: [&'static str; 15] = [
        "snr-min",
        "snr-max",
        "snr-step",
        "trials",
        "seed",
        "cfo",
        "sfo",
        "taps",
        "n",
        "k",
        "cp",
        "grid-cfo-step",
        "grid-sfo-step",
        "grid-cfo-max",
        "grid-sfo-max",
    ];

    /// `(key, value)` pairs in [`Settings::KEYS`] order, values round-trip exact.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let values = [
            self.snr_min.to_string(),
            self.snr_max.to_string(),
            self.snr_step.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
            self.cfo.to_string(),
            self.sfo.to_string(),
            self.taps.to_string(),
            self.n.to_string(),
            self.k.to_string(),
            self.cp.to_string(),
            self.grid_cfo_step.to_string(),
            self.grid_sfo_step.to_string(),
            self.grid_cfo_max.to_string(),
            self.grid_sfo_max.to_string(),
        ];
        Self::KEYS.into_iter().zip(values).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid value '{value}' for '{key}'")))
        }
        match key {
            "snr-min" => self.snr_min = num(key, value)?,
            "snr-max" => self.snr_max = num(key, value)?,
            "snr-step" => self.snr_step = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "cfo" => self.cfo = num(key, value)?,
            "sfo" => self.sfo = num(key, value)?,
            "taps" => self.taps = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "cp" => self.cp = num(key, value)?,
            "grid-cfo-step" => self.grid_cfo_step = num(key, value)?,
            "grid-sfo-step" => self.grid_sfo_step = num(key, value)?,
            "grid-cfo-max" => self.grid_cfo_max = num(key, value)?,
            "grid-sfo-max" => self.grid_sfo_max = num(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines.
    pub fn apply_config_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn experiment(&self, command: Command) -> Result<ExperimentConfig, CliError> {
        let usage = |e: ofdm_sync::SyncError| CliError::Usage(e.to_string());
        let ofdm = OfdmConfig::new(self.n, self.k, self.cp).map_err(usage)?;
        let grid = GridSpec::symmetric(self.grid_cfo_step, self.grid_cfo_max, self.grid_sfo_step, self.grid_sfo_max)
            .map_err(usage)?;
        let snr_points_db = if command == Command::Trial {
            vec![self.snr_min]
        } else {
            harness::snr_axis(self.snr_min, self.snr_max, self.snr_step).map_err(usage)?
        };
        let cfg = ExperimentConfig {
            ofdm,
            true_eps: self.cfo,
            true_eta: self.sfo,
            snr_points_db,
            trials: self.trials,
            master_seed: self.seed,
            grid,
            channel_taps: self.taps,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliInvocation {
    pub command: Command,
    pub settings: Settings,
    pub experiment: ExperimentConfig,
    pub out: PathBuf,
    pub trial_index: usize,
}

pub fn parse<I, T>(args: I) -> Result<CliInvocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let mut settings = Settings::defaults(cli.command);
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        settings.apply_config_text(&text)?;
    }
    macro_rules! override_with {
        ($($field:ident),*) => {
            $(if let Some(v) = cli.$field { settings.$field = v; })*
        };
    }
    override_with!(
        snr_min,
        snr_max,
        snr_step,
        trials,
        seed,
        cfo,
        sfo,
        taps,
        n,
        k,
        cp,
        grid_cfo_step,
        grid_sfo_step,
        grid_cfo_max,
        grid_sfo_max
    );
    let experiment = settings.experiment(cli.command)?;
    Ok(CliInvocation {
        command: cli.command,
        out: cli
            .out
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cli.command.name()))),
        trial_index: cli.trial_index.unwrap_or(0),
        settings,
        experiment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2_defaults_follow_the_reference_setup() {
        let inv = parse(["sync-lab", "fig2"]).unwrap();
        let e = &inv.experiment;
        assert_eq!((e.ofdm.n(), e.ofdm.k(), e.ofdm.cp()), (64, 52, 16));
        assert_eq!((e.true_eps, e.true_eta, e.channel_taps), (0.212, 0.000112, 5));
        assert_eq!(e.grid, GridSpec::reference());
        assert_eq!(e.trials, 500);
        assert_eq!(e.snr_points_db, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert_eq!(inv.out, PathBuf::from("fig2.csv"));
        assert_eq!(parse(["sync-lab", "fig1"]).unwrap().experiment.trials, 2000);
    }

    #[test]
    fn flag_overrides_single_field() {
        let inv = parse(["sync-lab", "fig2", "--cfo", "0.21"]).unwrap();
        let mut expected = Settings::defaults(Command::Fig2);
        expected.cfo = 0.21;
        assert_eq!(inv.settings, expected);
        let neg = parse(["sync-lab", "fig2", "--cfo", "-0.3", "--snr-min", "-5"]).unwrap();
        assert_eq!(neg.settings.cfo, -0.3);
        assert_eq!(neg.experiment.snr_points_db[0], -5.0);
    }

    #[test]
    fn usage_errors_name_the_problem() {
        let err = parse(["sync-lab", "fig2", "--k", "70"]).unwrap_err();
        assert!(err.to_string().contains("K exceeds N"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = parse(["sync-lab", "fig2", "--trials", "ten"]).unwrap_err();
        assert!(err.to_string().contains("ten"), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(parse(["sync-lab", "fig2", "--bogus", "1"]).is_err());
        assert!(parse(["sync-lab", "fig3"]).is_err());
        assert!(parse(["sync-lab", "fig2", "--trials", "0"]).is_err());
        assert!(parse(["sync-lab", "fig2", "--cp", "-1"]).is_err());
    }

    #[test]
    fn config_file_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lab.conf");
        std::fs::write(&path, "# comment\ncfo = 0.1\ntrials = 7 # trailing\n\nseed=9\n").unwrap();
        let p = path.to_str().unwrap();
        let inv = parse(["sync-lab", "fig2", "--config", p, "--trials", "3"]).unwrap();
        assert_eq!(inv.settings.cfo, 0.1);
        assert_eq!(inv.settings.trials, 3);
        assert_eq!(inv.settings.seed, 9);

        std::fs::write(&path, "colour = red\n").unwrap();
        let err = parse(["sync-lab", "fig2", "--config", p]).unwrap_err();
        assert!(err.to_string().contains("colour"));
        std::fs::write(&path, "cfo = abc\n").unwrap();
        assert!(parse(["sync-lab", "fig2", "--config", p]).unwrap_err().to_string().contains("abc"));
        std::fs::write(&path, "just words\n").unwrap();
        assert!(parse(["sync-lab", "fig2", "--config", p]).is_err());
        let missing = dir.path().join("missing.conf");
        let err = parse(["sync-lab", "fig2", "--config", missing.to_str().unwrap()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn trial_uses_single_snr() {
        let inv = parse(["sync-lab", "trial", "--snr-min", "inf", "--trial-index", "4"]).unwrap();
        assert_eq!(inv.experiment.snr_points_db, vec![f64::INFINITY]);
        assert_eq!(inv.trial_index, 4);
    }

    #[test]
    fn entries_round_trip_through_set() {
        let mut s = Settings::defaults(Command::Fig2);
        s.cfo = 0.1 + 0.2;
        s.grid_sfo_step = 3e-6;
        let mut back = Settings::defaults(Command::Fig1);
        for (k, v) in s.entries() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, s);
    }
}
