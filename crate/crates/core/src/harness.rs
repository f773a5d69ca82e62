//! Deterministic Monte-Carlo sweeps over SNR.
//!
//! Each `(snr_index, trial_index)` pair is an independent work unit with its
//! own random substreams (see [`crate::rng`]). Records are collected in index
//! order and reduced sequentially, so a sweep is bit-identical for any thread
//! count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::crb::{compare_with_oracle, crb_from_fisher, mean_crb, CrbPair, OracleComparison};
use crate::error::{Result, SyncError};
use crate::estimators::{
    residual_e_vector, residual_n_vector, squared_norm, EstimationResult, GridSpec, JointSearch,
};
use crate::ofdm_model::{
    generate_training_symbols, sample_channel, synthesize_frame, ChannelRealization, Demodulator, ImpairmentParams,
    OfdmConfig, PreambleObservation, TrainingSymbols,
};
use crate::rng::{substream, StreamLabel};

pub const DEFAULT_SEED: u64 = 1;
pub const REFERENCE_EPS: f64 = 0.212;
pub const REFERENCE_ETA: f64 = 0.000112;
pub const REFERENCE_TAPS: usize = 5;
pub const MSE_TRIALS: usize = 500;
pub const NOISE_VARIANCE_TRIALS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub ofdm: OfdmConfig,
    pub true_eps: f64,
    pub true_eta: f64,
    pub snr_points_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub grid: GridSpec,
    pub channel_taps: usize,
}

impl ExperimentConfig {
    /// 802.11a numerology, eps = 0.212, eta = 0.000112, five taps, default grid,
    /// SNR 0..=30 dB in 5 dB steps.
    pub fn reference(trials: usize) -> Self {
        Self {
            ofdm: OfdmConfig::ieee80211a(),
            true_eps: REFERENCE_EPS,
            true_eta: REFERENCE_ETA,
            snr_points_db: snr_axis(0.0, 30.0, 5.0).expect("valid axis"),
            trials,
            master_seed: DEFAULT_SEED,
            grid: GridSpec::reference(),
            channel_taps: REFERENCE_TAPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(SyncError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.trials == 0 {
            return bad("trials", "need at least one trial");
        }
        if self.channel_taps == 0 {
            return bad("taps", "channel needs at least one tap");
        }
        if !self.true_eps.is_finite() || !self.true_eta.is_finite() {
            return bad("offsets", "true offsets must be finite");
        }
        if self.snr_points_db.is_empty() {
            return bad("snr", "SNR list is empty");
        }
        if self.snr_points_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return bad("snr", "SNR values must be numbers");
        }
        if self.snr_points_db.windows(2).any(|w| w[1] <= w[0]) {
            return bad("snr", "SNR list must be strictly ascending");
        }
        Ok(())
    }
}

/// `min, min + step, ..., max` (inclusive, rounded to the nearest step count).
pub fn snr_axis(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !min.is_finite() || !max.is_finite() || max < min {
        return Err(SyncError::InvalidConfig {
            field: "snr",
            reason: format!("bad SNR range {min}..{max} step {step}"),
        });
    }
    let count = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| min + i as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOptions {
    pub estimators: bool,
    pub residuals: bool,
    pub crb: bool,
}

impl TrialOptions {
    pub const ALL: Self = Self {
        estimators: true,
        residuals: true,
        crb: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateOutcome {
    Estimated(EstimationResult),
    Failed(SyncError),
    Skipped,
}

impl EstimateOutcome {
    pub fn estimate(&self) -> Option<&EstimationResult> {
        match self {
            EstimateOutcome::Estimated(e) => Some(e),
            _ => None,
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self, EstimateOutcome::Failed(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrbSource {
    ClosedForm,
    /// The closed form disagreed with the numeric oracle; the oracle was used.
    Oracle,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub snr_index: usize,
    pub snr_db: f64,
    pub sigma_w2: f64,
    pub true_eps: f64,
    pub true_eta: f64,
    pub proposed: EstimateOutcome,
    pub nguyen_le: EstimateOutcome,
    /// `||N||^2` at the true offsets.
    pub n_norm2: Option<f64>,
    /// `||E||^2` at the true offsets; `None` when the ratio observable is degenerate.
    pub e_norm2: Option<f64>,
    pub crb: Option<CrbPair>,
    pub crb_source: CrbSource,
    pub oracle_discrepancy: Option<Box<OracleComparison>>,
}

/// Everything drawn for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScenario {
    pub training: TrainingSymbols,
    pub channel: ChannelRealization,
    pub observation: PreambleObservation,
    pub sigma_w2: f64,
}

/// Reusable per-sweep state: the precomputed search table and DFT plan.
pub struct TrialRunner {
    cfg: ExperimentConfig,
    search: JointSearch,
    demod: Demodulator,
}

impl TrialRunner {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            search: JointSearch::new(&cfg.ofdm, &cfg.grid),
            demod: Demodulator::new(&cfg.ofdm),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Draws training, channel and noise for `(snr_index, trial_index)` at `snr_db`.
    pub fn draw_scenario(&self, snr_index: usize, snr_db: f64, trial_index: usize) -> Result<TrialScenario> {
        let cfg = &self.cfg;
        let seed = cfg.master_seed;
        let training = generate_training_symbols(
            &mut substream(seed, snr_index, trial_index, StreamLabel::Training),
            &cfg.ofdm,
        );
        let channel = sample_channel(
            &mut substream(seed, snr_index, trial_index, StreamLabel::Channel),
            cfg.channel_taps,
        )?;
        let sigma_w2 = cfg.ofdm.noise_variance_for_snr(snr_db);
        let imp = ImpairmentParams::new(cfg.true_eps, cfg.true_eta, sigma_w2)?;
        let mut noise0 = substream(seed, snr_index, trial_index, StreamLabel::Noise0);
        let mut noise1 = substream(seed, snr_index, trial_index, StreamLabel::Noise1);
        let frame = synthesize_frame(&cfg.ofdm, &training, &channel, &imp, [&mut noise0, &mut noise1]);
        let observation = self.demod.observe(&frame, &training)?;
        Ok(TrialScenario {
            training,
            channel,
            observation,
            sigma_w2,
        })
    }

    /// Runs both estimators on the same observation, then the residual
    /// probes and the per-realization CRB.
    pub fn evaluate(
        &self,
        scenario: &TrialScenario,
        snr_index: usize,
        snr_db: f64,
        trial_index: usize,
        opts: TrialOptions,
    ) -> TrialRecord {
        let cfg = &self.cfg;
        let obs = &scenario.observation;
        let outcome = |r: Result<EstimationResult>| match r {
            Ok(e) => EstimateOutcome::Estimated(e),
            Err(e) => EstimateOutcome::Failed(e),
        };
        let (proposed, nguyen_le) = if opts.estimators {
            (outcome(self.search.proposed(obs)), outcome(self.search.nguyen_le(obs)))
        } else {
            (EstimateOutcome::Skipped, EstimateOutcome::Skipped)
        };

        let (n_norm2, e_norm2) = if opts.residuals {
            let n = squared_norm(&residual_n_vector(obs, cfg.true_eps, cfg.true_eta, &cfg.ofdm));
            let e = residual_e_vector(obs, cfg.true_eps, cfg.true_eta, &cfg.ofdm)
                .ok()
                .map(|v| squared_norm(&v));
            (Some(n), e)
        } else {
            (None, None)
        };

        let (crb, crb_source, oracle_discrepancy) = if opts.crb && scenario.sigma_w2 > 0.0 {
            self.crb(scenario)
        } else {
            (None, CrbSource::Unavailable, None)
        };

        TrialRecord {
            trial_index,
            snr_index,
            snr_db,
            sigma_w2: scenario.sigma_w2,
            true_eps: cfg.true_eps,
            true_eta: cfg.true_eta,
            proposed,
            nguyen_le,
            n_norm2,
            e_norm2,
            crb,
            crb_source,
            oracle_discrepancy,
        }
    }

    /// Closed-form CRB, replaced by the oracle's whenever the two disagree.
    fn crb(&self, scenario: &TrialScenario) -> (Option<CrbPair>, CrbSource, Option<Box<OracleComparison>>) {
        let cfg = &self.cfg;
        let cmp = match compare_with_oracle(
            &cfg.ofdm,
            &scenario.training,
            &scenario.channel,
            cfg.true_eps,
            cfg.true_eta,
            scenario.sigma_w2,
        ) {
            Ok(c) => c,
            Err(_) => return (None, CrbSource::Unavailable, None),
        };
        if cmp.agrees() {
            match crb_from_fisher(&cmp.closed.matrix) {
                Ok(c) => (Some(c), CrbSource::ClosedForm, None),
                Err(_) => (None, CrbSource::Unavailable, None),
            }
        } else {
            let crb = crb_from_fisher(&cmp.oracle).ok();
            let source = if crb.is_some() {
                CrbSource::Oracle
            } else {
                CrbSource::Unavailable
            };
            (crb, source, Some(Box::new(cmp)))
        }
    }

    pub fn run_trial(&self, snr_index: usize, trial_index: usize, opts: TrialOptions) -> Result<TrialRecord> {
        let snr_db = *self.cfg.snr_points_db.get(snr_index).ok_or_else(|| SyncError::InvalidConfig {
            field: "snr",
            reason: format!("SNR index {snr_index} out of range"),
        })?;
        let scenario = self.draw_scenario(snr_index, snr_db, trial_index)?;
        Ok(self.evaluate(&scenario, snr_index, snr_db, trial_index, opts))
    }
}

/// One full trial at `cfg.snr_points_db[snr_index]`.
pub fn run_trial(cfg: &ExperimentConfig, snr_index: usize, trial_index: usize) -> Result<TrialRecord> {
    TrialRunner::new(cfg)?.run_trial(snr_index, trial_index, TrialOptions::ALL)
}

/// Aggregates for one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub trials: usize,
    pub mse_eps_proposed: Option<f64>,
    pub mse_eta_proposed: Option<f64>,
    pub mse_eps_nguyenle: Option<f64>,
    pub mse_eta_nguyenle: Option<f64>,
    pub fail_proposed: usize,
    pub fail_nguyenle: usize,
    pub crb_eps: Option<f64>,
    pub crb_eta: Option<f64>,
    pub crb_excluded: usize,
    pub crb_oracle_fallbacks: usize,
    pub mean_n_norm2: Option<f64>,
    pub mean_e_norm2: Option<f64>,
    pub e_degenerate: usize,
}

fn to_db(v: Option<f64>) -> Option<f64> {
    v.map(|x| 10.0 * x.log10())
}

impl SweepRow {
    /// `10 log10(mean ||N||^2)`, the 2 sigma_V^2 series.
    pub fn var_n_db(&self) -> Option<f64> {
        to_db(self.mean_n_norm2)
    }

    /// `10 log10(mean ||E||^2)`, the sigma_E^2 series.
    pub fn var_e_db(&self) -> Option<f64> {
        to_db(self.mean_e_norm2)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Reduces the records of one SNR point in ascending trial order.
pub fn aggregate(records: &[TrialRecord]) -> Result<SweepRow> {
    let first = records.first().ok_or_else(|| SyncError::InvalidConfig {
        field: "records",
        reason: "nothing to aggregate".into(),
    })?;
    if let Some(other) = records.iter().find(|r| r.snr_db.to_bits() != first.snr_db.to_bits()) {
        return Err(SyncError::MixedSnr {
            first: first.snr_db,
            other: other.snr_db,
        });
    }
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.trial_index);

    let sq_err = |pick: fn(&TrialRecord) -> &EstimateOutcome, eta: bool| {
        mean(sorted.iter().filter_map(|r| {
            pick(r).estimate().map(|e| {
                if eta {
                    (e.eta_hat - r.true_eta).powi(2)
                } else {
                    (e.eps_hat - r.true_eps).powi(2)
                }
            })
        }))
    };
    let crbs: Vec<Option<CrbPair>> = sorted
        .iter()
        .filter(|r| r.crb_source != CrbSource::Unavailable || r.crb.is_some() || r.sigma_w2 > 0.0)
        .map(|r| r.crb)
        .collect();
    let crb_avg = mean_crb(&crbs);
    let residuals_run = sorted.iter().filter(|r| r.n_norm2.is_some()).count();
    let e_kept = sorted.iter().filter(|r| r.e_norm2.is_some()).count();

    Ok(SweepRow {
        snr_db: first.snr_db,
        trials: sorted.len(),
        mse_eps_proposed: sq_err(|r| &r.proposed, false),
        mse_eta_proposed: sq_err(|r| &r.proposed, true),
        mse_eps_nguyenle: sq_err(|r| &r.nguyen_le, false),
        mse_eta_nguyenle: sq_err(|r| &r.nguyen_le, true),
        fail_proposed: sorted.iter().filter(|r| r.proposed.failed()).count(),
        fail_nguyenle: sorted.iter().filter(|r| r.nguyen_le.failed()).count(),
        crb_eps: crb_avg.mean.map(|c| c.crb_eps),
        crb_eta: crb_avg.mean.map(|c| c.crb_eta),
        crb_excluded: crb_avg.excluded,
        crb_oracle_fallbacks: sorted.iter().filter(|r| r.oracle_discrepancy.is_some()).count(),
        mean_n_norm2: mean(sorted.iter().filter_map(|r| r.n_norm2)),
        mean_e_norm2: mean(sorted.iter().filter_map(|r| r.e_norm2)),
        e_degenerate: residuals_run - e_kept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Estimator MSEs and mean CRBs.
    Mse,
    /// Residual energies `||N||^2` and `||E||^2` only.
    NoiseVariance,
    /// Mean CRBs only.
    Crb,
}

impl SweepKind {
    pub fn options(self) -> TrialOptions {
        match self {
            SweepKind::Mse => TrialOptions::ALL,
            SweepKind::NoiseVariance => TrialOptions {
                estimators: false,
                residuals: true,
                crb: false,
            },
            SweepKind::Crb => TrialOptions {
                estimators: false,
                residuals: false,
                crb: true,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    /// Oracle comparisons of trials whose closed-form Fisher matrix was rejected.
    pub discrepancies: Vec<OracleComparison>,
}

/// Runs every trial of every SNR point. `threads = None` uses the global
/// rayon pool; the result does not depend on the thread count.
pub fn run_sweep(cfg: &ExperimentConfig, kind: SweepKind, threads: Option<usize>) -> Result<SweepResult> {
    let runner = TrialRunner::new(cfg)?;
    let opts = kind.options();
    let units: Vec<(usize, usize)> = (0..cfg.snr_points_db.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let work = || {
        units
            .par_iter()
            .map(|&(s, t)| runner.run_trial(s, t, opts))
            .collect::<Result<Vec<TrialRecord>>>()
    };
    let records = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SyncError::Numerical(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let rows = records
        .chunks(cfg.trials)
        .map(aggregate)
        .collect::<Result<Vec<_>>>()?;
    let discrepancies = records
        .iter()
        .filter_map(|r| r.oracle_discrepancy.as_deref().cloned())
        .collect();
    Ok(SweepResult {
        config: cfg.clone(),
        kind,
        rows,
        discrepancies,
    })
}

pub fn run_mse_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep(cfg, SweepKind::Mse, None)
}

pub fn run_noise_variance_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep(cfg, SweepKind::NoiseVariance, None)
}

/// Smallest `|grid value - truth|^2` on an axis: the MSE floor of any
/// estimator restricted to that lattice.
pub fn quantization_floor(axis: &[f64], truth: f64) -> f64 {
    axis.iter().map(|v| (v - truth).powi(2)).fold(f64::INFINITY, f64::min)
}

#[doc(hidden)]
pub fn zero_subcarrier(obs: &mut PreambleObservation, position: usize) {
    obs.r0[position] = Complex64::default();
}
