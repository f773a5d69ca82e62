//! Two-symbol OFDM preamble model under carrier and sampling frequency offset.
//!
//! The received samples are evaluated directly from the continuous offset
//! model: for training symbol `m` and post-CP sample `n`,
//!
//! ```text
//! r[m][n] = exp(j 2pi/N (N_m + n)(1 + eta) eps) / sqrt(N)
//!           * sum_k X_m(k) H(k) exp(j 2pi k/N n (1 + eta)) exp(j 2pi k/N eta N_m)
//!           + w_m(n)
//! ```
//!
//! with `N_m = N_g + m (N + N_g)`. The cyclic prefix is never materialised;
//! `N_m` already accounts for it. Demodulation uses a unitary DFT so that the
//! frequency-domain decomposition into `Omega_m(k) X_m(k) H(k) + ICI_m(k)`
//! holds exactly with the coupling coefficients from [`delta_coefficient`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SyncError};

/// Decay constant of the exponential power delay profile, in taps.
pub const PDP_DECAY_TAPS: f64 = 5.0;

/// Static OFDM system parameters. The preamble always has two training symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfdmConfig {
    n: usize,
    k: usize,
    cp: usize,
}

impl OfdmConfig {
    /// Number of training symbols in the preamble.
    pub const SYMBOLS: usize = 2;

    pub fn new(n: usize, k: usize, cp: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("N", "N must be positive"));
        }
        if !n.is_multiple_of(2) {
            return Err(invalid("N", "N must be even"));
        }
        if k == 0 {
            return Err(invalid("K", "K must be positive"));
        }
        if k > n {
            return Err(invalid("K", "K exceeds N"));
        }
        if !k.is_multiple_of(2) {
            return Err(invalid("K", "K must be even"));
        }
        Ok(Self { n, k, cp })
    }

    /// N = 64, K = 52, N_g = 16.
    pub fn ieee80211a() -> Self {
        Self { n: 64, k: 52, cp: 16 }
    }

    /// DFT size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Modulated subcarriers.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Cyclic prefix length.
    pub fn cp(&self) -> usize {
        self.cp
    }

    /// Sample offset `N_m = N_g + m (N + N_g)` of training symbol `m`.
    pub fn symbol_offset(&self, m: usize) -> usize {
        self.cp + m * (self.n + self.cp)
    }

    /// Distance in samples between the two training symbols, `N + N_g`.
    pub fn symbol_spacing(&self) -> usize {
        self.n + self.cp
    }

    /// Modulated subcarrier indices `-K/2, ..., K/2 - 1`, ascending.
    pub fn subcarriers(&self) -> Vec<i64> {
        subcarrier_index_set(self)
    }

    /// Position of subcarrier `k` inside a length-K frequency vector.
    pub fn subcarrier_position(&self, k: i64) -> Option<usize> {
        let pos = k + (self.k / 2) as i64;
        (0..self.k as i64).contains(&pos).then_some(pos as usize)
    }

    /// Noise variance `(K/N) 10^(-snr/10)` giving per-sample SNR `snr_db`.
    pub fn noise_variance_for_snr(&self, snr_db: f64) -> f64 {
        if snr_db == f64::INFINITY {
            return 0.0;
        }
        self.k as f64 / self.n as f64 * 10f64.powf(-snr_db / 10.0)
    }
}

fn invalid(field: &'static str, reason: &str) -> SyncError {
    SyncError::InvalidConfig {
        field,
        reason: reason.to_string(),
    }
}

pub fn make_config(n: usize, k: usize, cp: usize) -> Result<OfdmConfig> {
    OfdmConfig::new(n, k, cp)
}

pub fn subcarrier_index_set(config: &OfdmConfig) -> Vec<i64> {
    let half = (config.k / 2) as i64;
    (-half..half).collect()
}

/// Carrier offset, sampling offset and AWGN variance.
///
/// The model assumes `|eta| << 1` but does not enforce it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentParams {
    pub eps: f64,
    pub eta: f64,
    pub sigma_w2: f64,
}

impl ImpairmentParams {
    pub fn new(eps: f64, eta: f64, sigma_w2: f64) -> Result<Self> {
        if !eps.is_finite() {
            return Err(invalid("eps", "must be finite"));
        }
        if !eta.is_finite() {
            return Err(invalid("eta", "must be finite"));
        }
        if !(sigma_w2 >= 0.0) || !sigma_w2.is_finite() {
            return Err(invalid("sigma_w2", "must be finite and non-negative"));
        }
        Ok(Self { eps, eta, sigma_w2 })
    }

    pub fn noiseless(eps: f64, eta: f64) -> Self {
        Self {
            eps,
            eta,
            sigma_w2: 0.0,
        }
    }
}

/// The identical pair of training symbols, one entry per modulated subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSymbols {
    pub x0: Vec<Complex64>,
    pub x1: Vec<Complex64>,
}

impl TrainingSymbols {
    /// Repeats `symbols` on both training symbols. Unit modulus is not checked
    /// so that probes can zero individual subcarriers.
    pub fn repeated(symbols: Vec<Complex64>) -> Self {
        Self {
            x1: symbols.clone(),
            x0: symbols,
        }
    }

    pub fn symbol(&self, m: usize) -> &[Complex64] {
        if m == 0 {
            &self.x0
        } else {
            &self.x1
        }
    }
}

/// The four unit-power QPSK points `(+-1 +- j)/sqrt(2)`.
pub const QPSK: [Complex64; 4] = [
    Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

pub fn generate_training_symbols<R: Rng + ?Sized>(rng: &mut R, config: &OfdmConfig) -> TrainingSymbols {
    let symbols = (0..config.k)
        .map(|_| QPSK[rng.random_range(0..QPSK.len())])
        .collect();
    TrainingSymbols::repeated(symbols)
}

/// Multipath channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(invalid("L", "channel needs at least one tap"));
        }
        if taps.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(invalid("taps", "taps must be finite"));
        }
        Ok(Self { taps })
    }

    /// Single unit tap.
    pub fn flat() -> Self {
        Self {
            taps: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `H(k)` for every modulated subcarrier, ascending.
    pub fn frequency_response_vector(&self, config: &OfdmConfig) -> Vec<Complex64> {
        config
            .subcarriers()
            .into_iter()
            .map(|k| channel_frequency_response(self, k, config.n))
            .collect()
    }
}

/// Normalised exponential power delay profile `p_l = e^{-l/5} / sum e^{-l'/5}`.
pub fn power_delay_profile(taps: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..taps).map(|l| (-(l as f64) / PDP_DECAY_TAPS).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Rayleigh taps with the exponential power delay profile.
pub fn sample_channel<R: Rng + ?Sized>(rng: &mut R, taps: usize) -> Result<ChannelRealization> {
    if taps == 0 {
        return Err(invalid("L", "channel needs at least one tap"));
    }
    let taps = power_delay_profile(taps)
        .into_iter()
        .map(|p| complex_gaussian(rng, p))
        .collect();
    Ok(ChannelRealization { taps })
}

/// Circular complex Gaussian with total variance `variance`.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// `H(k) = sum_l h_l exp(-j 2pi k l / N)`.
pub fn channel_frequency_response(ch: &ChannelRealization, k: i64, n: usize) -> Complex64 {
    ch.taps
        .iter()
        .enumerate()
        .map(|(l, &h)| h * Complex64::cis(-2.0 * PI * (k * l as i64) as f64 / n as f64))
        .sum()
}

/// Post-CP received samples of both training symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainFrame {
    pub samples: [Vec<Complex64>; OfdmConfig::SYMBOLS],
}

/// Noiseless mean of symbol `m`: every term of the received-sample model
/// except `w_m(n)`. `channel_response` is `H(k)` over the modulated set.
pub fn signal_mean(
    config: &OfdmConfig,
    symbols: &[Complex64],
    channel_response: &[Complex64],
    eps: f64,
    eta: f64,
    m: usize,
) -> Vec<Complex64> {
    let n_size = config.n as f64;
    let offset = config.symbol_offset(m) as f64;
    let norm = 1.0 / n_size.sqrt();
    let subcarriers = config.subcarriers();
    let weights: Vec<Complex64> = symbols
        .iter()
        .zip(channel_response)
        .map(|(x, h)| x * h)
        .collect();
    (0..config.n)
        .map(|n| {
            let n = n as f64;
            let lead = Complex64::cis(2.0 * PI / n_size * (offset + n) * (1.0 + eta) * eps);
            let sum: Complex64 = subcarriers
                .iter()
                .zip(&weights)
                .map(|(&k, &w)| {
                    let k = k as f64;
                    w * Complex64::cis(2.0 * PI * k / n_size * n * (1.0 + eta))
                        * Complex64::cis(2.0 * PI * k / n_size * eta * offset)
                })
                .sum();
            lead * sum * norm
        })
        .collect()
}

/// Samples `r[m][0..N]` of training symbol `m` with AWGN drawn from `rng`.
pub fn synthesize_received_symbol<R: Rng + ?Sized>(
    config: &OfdmConfig,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    imp: &ImpairmentParams,
    m: usize,
    rng: &mut R,
) -> Vec<Complex64> {
    assert!(m < OfdmConfig::SYMBOLS, "training symbol index {m} out of range");
    let response = ch.frequency_response_vector(config);
    let mut samples = signal_mean(config, training.symbol(m), &response, imp.eps, imp.eta, m);
    if imp.sigma_w2 > 0.0 {
        for s in samples.iter_mut() {
            *s += complex_gaussian(rng, imp.sigma_w2);
        }
    }
    samples
}

/// Both training symbols, each with its own noise source.
pub fn synthesize_frame<R: Rng + ?Sized>(
    config: &OfdmConfig,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    imp: &ImpairmentParams,
    noise: [&mut R; OfdmConfig::SYMBOLS],
) -> TimeDomainFrame {
    let [noise0, noise1] = noise;
    TimeDomainFrame {
        samples: [
            synthesize_received_symbol(config, training, ch, imp, 0, noise0),
            synthesize_received_symbol(config, training, ch, imp, 1, noise1),
        ],
    }
}

/// Unitary forward DFT restricted to the modulated subcarriers.
pub struct Demodulator {
    config: OfdmConfig,
    fft: Arc<dyn Fft<f64>>,
}

impl Demodulator {
    pub fn new(config: &OfdmConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(config.n);
        Self { config: *config, fft }
    }

    /// `R_m(k) = N^{-1/2} sum_n r[n] exp(-j 2pi k n / N)` for `k` ascending.
    pub fn demodulate(&self, row: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.config.n;
        if row.len() != n {
            return Err(SyncError::LengthMismatch {
                what: "time-domain symbol",
                expected: n,
                actual: row.len(),
            });
        }
        let mut buf = row.to_vec();
        self.fft.process(&mut buf);
        let scale = 1.0 / (n as f64).sqrt();
        Ok(self
            .config
            .subcarriers()
            .into_iter()
            .map(|k| buf[k.rem_euclid(n as i64) as usize] * scale)
            .collect())
    }

    pub fn observe(&self, frame: &TimeDomainFrame, training: &TrainingSymbols) -> Result<PreambleObservation> {
        Ok(PreambleObservation {
            r0: self.demodulate(&frame.samples[0])?,
            r1: self.demodulate(&frame.samples[1])?,
            training: training.clone(),
        })
    }
}

pub fn demodulate(row: &[Complex64], config: &OfdmConfig) -> Result<Vec<Complex64>> {
    Demodulator::new(config).demodulate(row)
}

/// Frequency-domain preamble `(R_0, R_1)` over the modulated subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleObservation {
    pub r0: Vec<Complex64>,
    pub r1: Vec<Complex64>,
    pub training: TrainingSymbols,
}

impl PreambleObservation {
    pub fn new(r0: Vec<Complex64>, r1: Vec<Complex64>, training: TrainingSymbols) -> Result<Self> {
        for (what, len) in [
            ("R1", r1.len()),
            ("X0", training.x0.len()),
            ("X1", training.x1.len()),
        ] {
            if len != r0.len() {
                return Err(SyncError::LengthMismatch {
                    what,
                    expected: r0.len(),
                    actual: len,
                });
            }
        }
        Ok(Self { r0, r1, training })
    }
}

/// Coupling from subcarrier `i` into DFT bin `k`:
/// `delta_ki = (1/N) sum_n exp(j 2pi/N n (i eta + eps (1 + eta) + i - k))`.
pub fn delta_coefficient(k: i64, i: i64, eps: f64, eta: f64, n: usize) -> Complex64 {
    let x = i as f64 * eta + eps * (1.0 + eta) + (i - k) as f64;
    let n_size = n as f64;
    let denom = (PI * x / n_size).sin();
    if denom.abs() < 1e-9 {
        return delta_coefficient_direct(k, i, eps, eta, n);
    }
    // Geometric series: exp(j pi x (N-1)/N) sin(pi x) / (N sin(pi x / N)).
    Complex64::cis(PI * x * (n_size - 1.0) / n_size) * ((PI * x).sin() / (n_size * denom))
}

/// Direct N-term evaluation of [`delta_coefficient`].
pub fn delta_coefficient_direct(k: i64, i: i64, eps: f64, eta: f64, n: usize) -> Complex64 {
    let x = i as f64 * eta + eps * (1.0 + eta) + (i - k) as f64;
    let n_size = n as f64;
    let sum: Complex64 = (0..n)
        .map(|s| Complex64::cis(2.0 * PI / n_size * s as f64 * x))
        .sum();
    sum / n_size
}

/// Common phase of subcarrier `i` in symbol `m`: `exp(j 2pi/N N_m (i eta + eps (1 + eta)))`.
fn symbol_phase(i: i64, m: usize, eps: f64, eta: f64, config: &OfdmConfig) -> Complex64 {
    let offset = config.symbol_offset(m) as f64;
    Complex64::cis(2.0 * PI / config.n as f64 * offset * (i as f64 * eta + eps * (1.0 + eta)))
}

/// `Omega_m(k) = delta_kk exp(j 2pi/N N_m (k eta + eps (1 + eta)))`.
pub fn omega_entry(k: i64, m: usize, eps: f64, eta: f64, config: &OfdmConfig) -> Complex64 {
    delta_coefficient(k, k, eps, eta, config.n) * symbol_phase(k, m, eps, eta, config)
}

/// Inter-carrier interference leaking into bin `k` of symbol `m`.
pub fn ici_term(
    k: i64,
    m: usize,
    training: &TrainingSymbols,
    ch: &ChannelRealization,
    eps: f64,
    eta: f64,
    config: &OfdmConfig,
) -> Complex64 {
    let response = ch.frequency_response_vector(config);
    let symbols = training.symbol(m);
    config
        .subcarriers()
        .into_iter()
        .zip(symbols.iter().zip(&response))
        .filter(|&(i, _)| i != k)
        .map(|(i, (&x, &h))| delta_coefficient(k, i, eps, eta, config.n) * symbol_phase(i, m, eps, eta, config) * x * h)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamLabel};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn reference_config_offsets_and_index_set() {
        let cfg = make_config(64, 52, 16).unwrap();
        assert_eq!(cfg.symbol_offset(0), 16);
        assert_eq!(cfg.symbol_offset(1), 96);
        let set = cfg.subcarriers();
        assert_eq!(set.len(), 52);
        assert_eq!(set[0], -26);
        assert_eq!(*set.last().unwrap(), 25);
        assert!(set.windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!(cfg, OfdmConfig::ieee80211a());
    }

    #[test]
    fn config_boundaries_and_errors() {
        assert!(make_config(64, 64, 0).is_ok());
        let err = make_config(64, 70, 16).unwrap_err();
        assert!(err.to_string().contains("K exceeds N"), "{err}");
        assert!(matches!(make_config(63, 52, 16), Err(SyncError::InvalidConfig { field: "N", .. })));
        assert!(matches!(make_config(64, 51, 16), Err(SyncError::InvalidConfig { field: "K", .. })));
        assert!(make_config(0, 0, 0).is_err());
    }

    #[test]
    fn small_index_sets() {
        let k2 = make_config(8, 2, 0).unwrap();
        assert_eq!(k2.subcarriers(), vec![-1, 0]);
        let k4 = make_config(8, 4, 0).unwrap();
        assert_eq!(k4.subcarriers(), vec![-2, -1, 0, 1]);
        assert_eq!(k4.subcarrier_position(-2), Some(0));
        assert_eq!(k4.subcarrier_position(2), None);
    }

    #[test]
    fn training_symbols_are_identical_unit_qpsk() {
        let cfg = OfdmConfig::ieee80211a();
        for seed in 0..20 {
            let t = generate_training_symbols(&mut rng(seed), &cfg);
            assert_eq!(t.x0.len(), 52);
            assert_eq!(t.x0, t.x1);
            for x in &t.x0 {
                assert!((x.norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn qpsk_points_are_equiprobable() {
        let cfg = make_config(2, 2, 0).unwrap();
        let mut counts = [0usize; 4];
        let mut r = rng(11);
        let mut total = 0;
        while total < 10_000 {
            for x in generate_training_symbols(&mut r, &cfg).x0 {
                let idx = QPSK.iter().position(|q| *q == x).unwrap();
                counts[idx] += 1;
                total += 1;
            }
        }
        for c in counts {
            let f = c as f64 / total as f64;
            assert!((f - 0.25).abs() < 0.02, "frequency {f}");
        }
    }

    #[test]
    fn power_delay_profile_values() {
        assert_eq!(power_delay_profile(1), vec![1.0]);
        // sum_{l<5} e^{-l/5} = 3.487192...
        let expected = [0.28676, 0.23479, 0.19222, 0.15738, 0.12885];
        let p = power_delay_profile(5);
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(sample_channel(&mut rng(0), 0).is_err());
    }

    #[test]
    fn empirical_tap_power_matches_profile() {
        let p = power_delay_profile(5);
        let mut r = rng(3);
        let draws = 100_000;
        let mut acc = [0.0f64; 5];
        for _ in 0..draws {
            let ch = sample_channel(&mut r, 5).unwrap();
            for (a, h) in acc.iter_mut().zip(&ch.taps) {
                *a += h.norm_sqr();
            }
        }
        for (a, p) in acc.iter().zip(&p) {
            let mean = a / draws as f64;
            assert!((mean / p - 1.0).abs() < 0.02, "tap power {mean} vs {p}");
        }
    }

    #[test]
    fn frequency_response_matches_zero_padded_dft() {
        let n = 64;
        let ch = sample_channel(&mut rng(5), 5).unwrap();
        for k in -32i64..32 {
            let bin = k.rem_euclid(n as i64) as usize;
            // Plain DFT of the zero-padded tap vector.
            let mut dft = Complex64::new(0.0, 0.0);
            for t in 0..n {
                let h = ch.taps.get(t).copied().unwrap_or_default();
                dft += h * Complex64::cis(-2.0 * PI * (bin * t) as f64 / n as f64);
            }
            let got = channel_frequency_response(&ch, k, n);
            assert!((got - dft).norm() < 1e-12);
        }
        let flat = ChannelRealization::flat();
        assert_eq!(channel_frequency_response(&flat, 7, 64), Complex64::new(1.0, 0.0));
        let dc: Complex64 = ch.taps.iter().sum();
        assert!((channel_frequency_response(&ch, 0, n) - dc).norm() < 1e-15);
    }

    #[test]
    fn offset_free_noiseless_round_trip() {
        let cfg = OfdmConfig::ieee80211a();
        let training = generate_training_symbols(&mut rng(1), &cfg);
        let ch = sample_channel(&mut rng(2), 5).unwrap();
        let imp = ImpairmentParams::noiseless(0.0, 0.0);
        let r0 = synthesize_received_symbol(&cfg, &training, &ch, &imp, 0, &mut rng(0));
        let r1 = synthesize_received_symbol(&cfg, &training, &ch, &imp, 1, &mut rng(0));
        assert_eq!(r0, r1);
        let response = ch.frequency_response_vector(&cfg);
        let spectrum = demodulate(&r0, &cfg).unwrap();
        for ((r, x), h) in spectrum.iter().zip(&training.x0).zip(&response) {
            assert!((r - x * h).norm() < 1e-12);
        }
    }

    #[test]
    fn cfo_only_is_a_sample_ramp() {
        let cfg = OfdmConfig::ieee80211a();
        let training = generate_training_symbols(&mut rng(8), &cfg);
        let ch = sample_channel(&mut rng(9), 5).unwrap();
        let eps = 0.3137;
        for m in 0..2 {
            let base = synthesize_received_symbol(&cfg, &training, &ch, &ImpairmentParams::noiseless(0.0, 0.0), m, &mut rng(0));
            let shifted = synthesize_received_symbol(&cfg, &training, &ch, &ImpairmentParams::noiseless(eps, 0.0), m, &mut rng(0));
            let offset = cfg.symbol_offset(m) as f64;
            for (n, (b, s)) in base.iter().zip(&shifted).enumerate() {
                let ramp = Complex64::cis(2.0 * PI / 64.0 * (offset + n as f64) * eps);
                assert!((b * ramp - s).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn injected_noise_has_requested_variance() {
        let cfg = OfdmConfig::ieee80211a();
        let silent = TrainingSymbols::repeated(vec![Complex64::default(); 52]);
        let ch = ChannelRealization::flat();
        let imp = ImpairmentParams::new(0.212, 0.000112, 0.1).unwrap();
        let mut r = rng(21);
        let mut acc = 0.0;
        let mut count = 0;
        let (mut re2, mut im2) = (0.0, 0.0);
        while count < 100_000 {
            for s in synthesize_received_symbol(&cfg, &silent, &ch, &imp, 0, &mut r) {
                acc += s.norm_sqr();
                re2 += s.re * s.re;
                im2 += s.im * s.im;
                count += 1;
            }
        }
        let var = acc / count as f64;
        assert!((var / 0.1 - 1.0).abs() < 0.02, "{var}");
        assert!((re2 / im2 - 1.0).abs() < 0.03);
    }

    #[test]
    fn demodulate_checks_length_and_zero_input() {
        let cfg = OfdmConfig::ieee80211a();
        assert!(matches!(
            demodulate(&[Complex64::default(); 10], &cfg),
            Err(SyncError::LengthMismatch { expected: 64, actual: 10, .. })
        ));
        let out = demodulate(&[Complex64::default(); 64], &cfg).unwrap();
        assert_eq!(out.len(), 52);
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn demodulate_preserves_energy_on_full_band() {
        let cfg = make_config(64, 64, 0).unwrap();
        let mut r = rng(4);
        let row: Vec<Complex64> = (0..64).map(|_| complex_gaussian(&mut r, 1.0)).collect();
        let out = demodulate(&row, &cfg).unwrap();
        let e_in: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        let e_out: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        assert_relative_eq!(e_in, e_out, max_relative = 1e-13);
    }

    #[test]
    fn delta_is_identity_without_offsets() {
        for k in -26..26 {
            for i in -26..26 {
                let d = delta_coefficient(k, i, 0.0, 0.0, 64);
                let expected = if i == k { 1.0 } else { 0.0 };
                assert!((d - Complex64::new(expected, 0.0)).norm() <= 1e-14, "k={k} i={i} {d}");
            }
        }
    }

    #[test]
    fn delta_closed_form_matches_direct_sum() {
        let mut r = rng(17);
        for _ in 0..500 {
            let k = r.random_range(-32i64..32);
            let i = r.random_range(-32i64..32);
            let eps = r.random_range(-0.5..0.5);
            let eta = r.random_range(-1e-3..1e-3);
            let a = delta_coefficient(k, i, eps, eta, 64);
            let b = delta_coefficient_direct(k, i, eps, eta, 64);
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
        // Integer multiple of N hits the direct-sum branch.
        let wrap = delta_coefficient(-32, 32, 0.0, 0.0, 64);
        assert!((wrap - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn offsets_attenuate_the_useful_term() {
        let d = delta_coefficient(3, 3, 0.212, 0.000112, 64);
        assert!(d.norm() < 1.0);
        assert!(d.norm() > 0.9);
    }

    #[test]
    fn omega_and_ici_collapse_without_offsets() {
        let cfg = OfdmConfig::ieee80211a();
        let training = generate_training_symbols(&mut rng(2), &cfg);
        let ch = sample_channel(&mut rng(3), 5).unwrap();
        for k in cfg.subcarriers() {
            for m in 0..2 {
                assert!((omega_entry(k, m, 0.0, 0.0, &cfg) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
                assert!(ici_term(k, m, &training, &ch, 0.0, 0.0, &cfg).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn omega_modulus_is_delta_modulus() {
        let cfg = OfdmConfig::ieee80211a();
        let mut r = rng(6);
        for _ in 0..100 {
            let k = r.random_range(-26i64..26);
            let m = r.random_range(0..2usize);
            let eps = r.random_range(-0.5..0.5);
            let eta = r.random_range(-5e-4..5e-4);
            let om = omega_entry(k, m, eps, eta, &cfg);
            assert!((om.norm() - delta_coefficient(k, k, eps, eta, 64).norm()).abs() < 1e-14);
        }
        // m = 0 rotates by N_0 = N_g = 16 samples.
        let om = omega_entry(0, 0, 0.25, 0.0, &cfg);
        let expected = delta_coefficient(0, 0, 0.25, 0.0, 64) * Complex64::cis(2.0 * PI / 64.0 * 16.0 * 0.25);
        assert!((om - expected).norm() < 1e-15);
    }

    #[test]
    fn ici_with_single_silenced_interferer_is_zero() {
        let cfg = make_config(8, 2, 2).unwrap();
        let training = TrainingSymbols::repeated(vec![QPSK[0], Complex64::default()]);
        let ch = ChannelRealization::flat();
        assert_eq!(ici_term(-1, 0, &training, &ch, 0.3, 1e-4, &cfg), Complex64::default());
    }

    #[test]
    fn frequency_domain_decomposition_identity() {
        let cfg = OfdmConfig::ieee80211a();
        let demod = Demodulator::new(&cfg);
        for trial in 0..100 {
            let mut r = substream(99, 0, trial, StreamLabel::Training);
            let training = generate_training_symbols(&mut r, &cfg);
            let ch = sample_channel(&mut substream(99, 0, trial, StreamLabel::Channel), 5).unwrap();
            let eps = r.random_range(-0.5..0.5);
            let eta = r.random_range(-5e-4..5e-4);
            let imp = ImpairmentParams::noiseless(eps, eta);
            let response = ch.frequency_response_vector(&cfg);
            for m in 0..2 {
                let row = synthesize_received_symbol(&cfg, &training, &ch, &imp, m, &mut r);
                let spectrum = demod.demodulate(&row).unwrap();
                let scale = spectrum.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for (pos, k) in cfg.subcarriers().into_iter().enumerate() {
                    let model = omega_entry(k, m, eps, eta, &cfg) * training.x0[pos] * response[pos]
                        + ici_term(k, m, &training, &ch, eps, eta, &cfg);
                    let err = (spectrum[pos] - model).norm() / scale;
                    assert!(err < 1e-10, "trial {trial} m {m} k {k}: {err:e}");
                }
            }
        }
    }
}
