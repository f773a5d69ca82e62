//! Cramer-Rao bounds for joint (eps, eta) estimation from the time-domain
//! preamble samples.
//!
//! [`fisher_closed_form`] evaluates the published closed-form Fisher entries
//! term by term. [`fisher_numeric_oracle`] is an independent reference: the
//! Gaussian-mean (Slepian-Bangs) identity
//! `F_ij = 2/sigma^2 sum Re{ conj(ds/dp_i) ds/dp_j }` with central finite
//! differences of the noiseless received samples.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SyncError};
use crate::ofdm_model::{
    generate_training_symbols, sample_channel, signal_mean, ChannelRealization, OfdmConfig, TrainingSymbols,
};
use crate::rng::{substream, StreamLabel};

/// Relative entrywise tolerance between the closed form and the oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-3;

/// 2x2 Fisher information for `(eps, eta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    pub f00: f64,
    pub f01: f64,
    pub f10: f64,
    pub f11: f64,
}

impl FisherMatrix {
    pub fn symmetric(f00: f64, f01: f64, f11: f64) -> Self {
        Self {
            f00,
            f01,
            f10: f01,
            f11,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.f00 * self.f11 - self.f10 * self.f01
    }

    fn scaled(self, s: f64) -> Self {
        Self {
            f00: self.f00 * s,
            f01: self.f01 * s,
            f10: self.f10 * s,
            f11: self.f11 * s,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            f00: self.f00 + o.f00,
            f01: self.f01 + o.f01,
            f10: self.f10 + o.f10,
            f11: self.f11 + o.f11,
        }
    }

    fn zero() -> Self {
        Self::symmetric(0.0, 0.0, 0.0)
    }

    fn entries(&self) -> [(&'static str, f64); 3] {
        [("F00", self.f00), ("F01", self.f01), ("F11", self.f11)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbPair {
    pub crb_eps: f64,
    pub crb_eta: f64,
}

/// Diagonal of the inverse Fisher matrix.
pub fn crb_from_fisher(f: &FisherMatrix) -> Result<CrbPair> {
    let det = f.determinant();
    if !(det > 0.0) || !(f.f00 > 0.0) || !(f.f11 > 0.0) || !det.is_finite() {
        return Err(SyncError::SingularInformation { det });
    }
    Ok(CrbPair {
        crb_eps: f.f11 / det,
        crb_eta: f.f00 / det,
    })
}

fn check_noise(sigma_w2: f64) -> Result<()> {
    if !(sigma_w2 > 0.0) || !sigma_w2.is_finite() {
        return Err(SyncError::InvalidConfig {
            field: "sigma_w2",
            reason: format!("noise variance must be positive, got {sigma_w2}"),
        });
    }
    Ok(())
}

/// Per-term sums behind the closed form, already carrying the leading
/// `-2/(sigma^2 N)` factors of their Fisher entry.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FisherTerms {
    /// F01 contribution of `Re{j theta Phi}`.
    pub phi: f64,
    /// F01 contribution of `Re{j theta Psi}`.
    pub psi: f64,
    /// F11 contributions of `Re Gamma`, `Re Theta`, `Re Pi`.
    pub gamma: f64,
    pub theta: f64,
    pub pi: f64,
}

impl FisherTerms {
    fn add(self, o: Self) -> Self {
        Self {
            phi: self.phi + o.phi,
            psi: self.psi + o.psi,
            gamma: self.gamma + o.gamma,
            theta: self.theta + o.theta,
            pi: self.pi + o.pi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherBreakdown {
    pub matrix: FisherMatrix,
    pub terms: FisherTerms,
}

/// Closed-form sums for training symbol `m`, evaluated exactly as printed.
fn closed_form_symbol(
    config: &OfdmConfig,
    symbols: &[Complex64],
    response: &[Complex64],
    eps: f64,
    eta: f64,
    sigma_w2: f64,
    m: usize,
) -> FisherBreakdown {
    let n_size = config.n() as f64;
    let offset = config.symbol_offset(m) as f64;
    let subcarriers = config.subcarriers();
    let j = Complex64::i();
    let scale = 2.0 / (sigma_w2 * n_size);

    let mut f00 = 0.0;
    let mut terms = FisherTerms::default();
    for n in 0..config.n() {
        let n = n as f64;
        let theta = 2.0 * PI / n_size * (offset + n);
        // u_k = X_m(k) H(k) exp(j 2pi k/N n (1+eta)) exp(j 2pi k/N eta N_m)
        let u: Vec<Complex64> = subcarriers
            .iter()
            .zip(symbols.iter().zip(response))
            .map(|(&k, (&x, &h))| {
                let k = k as f64;
                x * h
                    * Complex64::cis(2.0 * PI * k / n_size * n * (1.0 + eta))
                    * Complex64::cis(2.0 * PI * k / n_size * eta * offset)
            })
            .collect();
        let a: Complex64 = u.iter().sum();
        let a2 = a.norm_sqr();
        let weighted: Complex64 = subcarriers.iter().zip(&u).map(|(&k, &v)| v * k as f64).sum();

        // sum_k sum_k' k' X(k') X*(k) H(k') H*(k) exp(j 2pi (k'-k)/N (n + eta (N_m + n))),
        // shared by Psi and Theta.
        let mut cross = Complex64::default();
        for uk in &u {
            for (&kp, ukp) in subcarriers.iter().zip(&u) {
                cross += ukp * uk.conj() * kp as f64;
            }
        }

        f00 += (theta * (1.0 + eta)).powi(2) * a2;

        let phi = (1.0 + j * theta * (1.0 + eta) * eps) * a2;
        let psi = j * theta * (1.0 + eta) * cross;
        terms.phi += -scale * (j * theta * phi).re;
        terms.psi += -scale * (j * theta * psi).re;

        let gamma = -(theta * theta) * eps * eps * a.conj().norm_sqr();
        let theta_term = -2.0 * eps * theta * theta * cross;
        let pi_term = -(theta * theta) * weighted.norm_sqr();
        terms.gamma += -scale * gamma;
        terms.theta += -scale * theta_term.re;
        terms.pi += -scale * pi_term;
    }
    let f01 = terms.phi + terms.psi;
    let f11 = terms.gamma + terms.theta + terms.pi;
    FisherBreakdown {
        matrix: FisherMatrix::symmetric(scale * f00, f01, f11),
        terms,
    }
}

/// Closed-form Fisher matrix together with its per-term contributions.
pub fn fisher_closed_form_terms(
    config: &OfdmConfig,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    eps: f64,
    eta: f64,
    sigma_w2: f64,
) -> Result<FisherBreakdown> {
    check_noise(sigma_w2)?;
    let response = ch.frequency_response_vector(config);
    let parts: Vec<FisherBreakdown> = (0..OfdmConfig::SYMBOLS)
        .map(|m| closed_form_symbol(config, training.symbol(m), &response, eps, eta, sigma_w2, m))
        .collect();
    Ok(FisherBreakdown {
        matrix: parts.iter().fold(FisherMatrix::zero(), |acc, p| acc.add(p.matrix)),
        terms: parts.iter().fold(FisherTerms::default(), |acc, p| acc.add(p.terms)),
    })
}

pub fn fisher_closed_form(
    config: &OfdmConfig,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    eps: f64,
    eta: f64,
    sigma_w2: f64,
) -> Result<FisherMatrix> {
    Ok(fisher_closed_form_terms(config, training, ch, eps, eta, sigma_w2)?.matrix)
}

/// Closed form restricted to training symbol `m`.
pub fn fisher_closed_form_symbol(
    config: &OfdmConfig,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    eps: f64,
    eta: f64,
    sigma_w2: f64,
    m: usize,
) -> Result<FisherMatrix> {
    check_noise(sigma_w2)?;
    let response = ch.frequency_response_vector(config);
    Ok(closed_form_symbol(config, training.symbol(m), &response, eps, eta, sigma_w2, m).matrix)
}

/// Central-difference steps for the numeric oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdStep {
    pub eps: f64,
    pub eta: f64,
}

impl FdStep {
    /// `eps` step `s`, `eta` step `s / 100`, matching their magnitudes.
    pub fn scaled(s: f64) -> Self {
        Self { eps: s, eta: s * 1e-2 }
    }
}

impl Default for FdStep {
    fn default() -> Self {
        Self { eps: 1e-6, eta: 1e-8 }
    }
}

/// Central differences of the noiseless samples of symbol `m` in eps and eta.
pub fn signal_derivatives(
    config: &OfdmConfig,
    symbols: &[Complex64],
    response: &[Complex64],
    eps: f64,
    eta: f64,
    m: usize,
    step: FdStep,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let diff = |plus: Vec<Complex64>, minus: Vec<Complex64>, h: f64| -> Vec<Complex64> {
        plus.iter().zip(&minus).map(|(p, q)| (p - q) / (2.0 * h)).collect()
    };
    let d_eps = diff(
        signal_mean(config, symbols, response, eps + step.eps, eta, m),
        signal_mean(config, symbols, response, eps - step.eps, eta, m),
        step.eps,
    );
    let d_eta = diff(
        signal_mean(config, symbols, response, eps, eta + step.eta, m),
        signal_mean(config, symbols, response, eps, eta - step.eta, m),
        step.eta,
    );
    (d_eps, d_eta)
}

pub fn fisher_numeric_oracle(
    config: &OfdmConfig,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    eps: f64,
    eta: f64,
    sigma_w2: f64,
    step: FdStep,
) -> Result<FisherMatrix> {
    check_noise(sigma_w2)?;
    if !(step.eps > 0.0) || !(step.eta > 0.0) {
        return Err(SyncError::InvalidConfig {
            field: "step",
            reason: "finite-difference steps must be positive".into(),
        });
    }
    let response = ch.frequency_response_vector(config);
    let (mut f00, mut f01, mut f11) = (0.0, 0.0, 0.0);
    for m in 0..OfdmConfig::SYMBOLS {
        let (d_eps, d_eta) = signal_derivatives(config, training.symbol(m), &response, eps, eta, m, step);
        for (de, dh) in d_eps.iter().zip(&d_eta) {
            f00 += de.norm_sqr();
            f01 += (de.conj() * dh).re;
            f11 += dh.norm_sqr();
        }
    }
    let f = FisherMatrix::symmetric(f00, f01, f11).scaled(2.0 / sigma_w2);
    if [f.f00, f.f01, f.f11].iter().any(|v| !v.is_finite()) {
        return Err(SyncError::Numerical(format!("non-finite oracle Fisher entries {f:?}")));
    }
    Ok(f)
}

/// Entrywise relative errors `[F00, F01, F11]` of `closed` against `oracle`.
///
/// The off-diagonal denominator is floored at `1e-9 sqrt(F00 F11)` so that an
/// almost decoupled scenario does not divide by zero.
pub fn relative_errors(closed: &FisherMatrix, oracle: &FisherMatrix) -> [f64; 3] {
    let floor = 1e-9 * (oracle.f00 * oracle.f11).abs().sqrt();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(floor);
    [
        rel(closed.f00, oracle.f00),
        rel(closed.f01, oracle.f01),
        rel(closed.f11, oracle.f11),
    ]
}

/// Scenario parameters echoed in discrepancy reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSummary {
    pub eps: f64,
    pub eta: f64,
    pub sigma_w2: f64,
    pub taps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub scenario: ScenarioSummary,
    pub closed: FisherBreakdown,
    pub oracle: FisherMatrix,
    pub relative_errors: [f64; 3],
}

impl OracleComparison {
    pub fn agrees(&self) -> bool {
        self.relative_errors.iter().all(|&e| e < ORACLE_TOLERANCE)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

impl fmt::Display for OracleComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.scenario;
        writeln!(
            f,
            "scenario eps={} eta={} sigma_w2={} taps={}",
            s.eps, s.eta, s.sigma_w2, s.taps
        )?;
        for ((name, closed), ((_, oracle), rel)) in self
            .closed
            .matrix
            .entries()
            .iter()
            .zip(self.oracle.entries().iter().zip(self.relative_errors))
        {
            let flag = if rel < ORACLE_TOLERANCE { "ok" } else { "MISMATCH" };
            writeln!(f, "  {name}: closed={closed:.9e} oracle={oracle:.9e} rel={rel:.3e} {flag}")?;
        }
        let t = &self.closed.terms;
        write!(
            f,
            "  terms: phi={:.6e} psi={:.6e} gamma={:.6e} theta={:.6e} pi={:.6e}",
            t.phi, t.psi, t.gamma, t.theta, t.pi
        )
    }
}

pub fn compare_with_oracle(
    config: &OfdmConfig,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    eps: f64,
    eta: f64,
    sigma_w2: f64,
) -> Result<OracleComparison> {
    let closed = fisher_closed_form_terms(config, training, ch, eps, eta, sigma_w2)?;
    let oracle = fisher_numeric_oracle(config, training, ch, eps, eta, sigma_w2, FdStep::default())?;
    Ok(OracleComparison {
        scenario: ScenarioSummary {
            eps,
            eta,
            sigma_w2,
            taps: ch.len(),
        },
        relative_errors: relative_errors(&closed.matrix, &oracle),
        closed,
        oracle,
    })
}

/// Outcome of comparing the closed form with the oracle over many scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub comparisons: Vec<OracleComparison>,
}

impl AgreementReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(OracleComparison::agrees)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.comparisons
            .iter()
            .map(OracleComparison::max_relative_error)
            .fold(0.0, f64::max)
    }

    /// Per-term detail for every disagreeing scenario.
    pub fn discrepancy_report(&self) -> String {
        let mut out = String::new();
        for c in self.comparisons.iter().filter(|c| !c.agrees()) {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }
}

/// Randomised agreement sweep: eps in [-0.4, 0.4], eta in [-4e-4, 4e-4],
/// SNR in [0, 30] dB, random QPSK training and Rayleigh channels.
pub fn oracle_agreement(config: &OfdmConfig, taps: usize, scenarios: usize, seed: u64) -> Result<AgreementReport> {
    use rand::Rng;
    let comparisons = (0..scenarios)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, 0, i, StreamLabel::Training);
            let training = generate_training_symbols(&mut rng, config);
            let ch = sample_channel(&mut substream(seed, 0, i, StreamLabel::Channel), taps)?;
            let eps = rng.random_range(-0.4..=0.4);
            let eta = rng.random_range(-4e-4..=4e-4);
            let snr_db = rng.random_range(0.0..=30.0);
            compare_with_oracle(config, &training, &ch, eps, eta, config.noise_variance_for_snr(snr_db))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AgreementReport { comparisons })
}

/// Draws the (training, channel) pair of one ensemble member.
pub trait ScenarioSampler: Sync {
    fn draw(&self, config: &OfdmConfig, seed: u64, index: usize) -> Result<(TrainingSymbols, ChannelRealization)>;
}

/// QPSK training with an exponential-profile Rayleigh channel.
#[derive(Debug, Clone, Copy)]
pub struct RayleighSampler {
    pub taps: usize,
}

impl ScenarioSampler for RayleighSampler {
    fn draw(&self, config: &OfdmConfig, seed: u64, index: usize) -> Result<(TrainingSymbols, ChannelRealization)> {
        let training = generate_training_symbols(&mut substream(seed, 0, index, StreamLabel::Training), config);
        let ch = sample_channel(&mut substream(seed, 0, index, StreamLabel::Channel), self.taps)?;
        Ok((training, ch))
    }
}

/// QPSK training over the single unit tap.
#[derive(Debug, Clone, Copy)]
pub struct FlatSampler;

impl ScenarioSampler for FlatSampler {
    fn draw(&self, config: &OfdmConfig, seed: u64, index: usize) -> Result<(TrainingSymbols, ChannelRealization)> {
        let training = generate_training_symbols(&mut substream(seed, 0, index, StreamLabel::Training), config);
        Ok((training, ChannelRealization::flat()))
    }
}

/// Ensemble mean of per-realization CRBs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbAverage {
    /// `None` when every realization was singular.
    pub mean: Option<CrbPair>,
    pub retained: usize,
    pub excluded: usize,
}

/// Arithmetic mean of per-realization CRBs (not the CRB of the mean Fisher
/// matrix). Singular realizations are excluded and counted.
pub fn average_crb<S: ScenarioSampler>(
    config: &OfdmConfig,
    sampler: &S,
    eps: f64,
    eta: f64,
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<CrbAverage> {
    if trials == 0 {
        return Err(SyncError::InvalidConfig {
            field: "trials",
            reason: "need at least one trial".into(),
        });
    }
    let sigma_w2 = config.noise_variance_for_snr(snr_db);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (training, ch) = sampler.draw(config, seed, i)?;
            let f = fisher_closed_form(config, &training, &ch, eps, eta, sigma_w2)?;
            Ok(crb_from_fisher(&f).ok())
        })
        .collect::<Result<Vec<Option<CrbPair>>>>()?;
    Ok(mean_crb(&per_trial))
}

/// Index-ordered mean over the non-singular entries.
pub fn mean_crb(per_trial: &[Option<CrbPair>]) -> CrbAverage {
    let kept: Vec<&CrbPair> = per_trial.iter().flatten().collect();
    let excluded = per_trial.len() - kept.len();
    let mean = (!kept.is_empty()).then(|| {
        let count = kept.len() as f64;
        CrbPair {
            crb_eps: kept.iter().map(|c| c.crb_eps).sum::<f64>() / count,
            crb_eta: kept.iter().map(|c| c.crb_eta).sum::<f64>() / count,
        }
    });
    CrbAverage {
        mean,
        retained: kept.len(),
        excluded,
    }
}
