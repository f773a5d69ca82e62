use num_complex::Complex64;
use ofdm_sync::estimators::{nguyenle_observable, proposed_cost, GridSpec, JointSearch};
use ofdm_sync::ofdm_model::{
    delta_coefficient, delta_coefficient_direct, generate_training_symbols, sample_channel, synthesize_frame,
    Demodulator, ImpairmentParams, OfdmConfig, PreambleObservation,
};
use ofdm_sync::rng::{substream, StreamLabel};
use proptest::prelude::*;
use rand::Rng;

fn noiseless(cfg: &OfdmConfig, eps: f64, eta: f64, seed: u64) -> PreambleObservation {
    let mut rng = substream(seed, 0, 0, StreamLabel::Training);
    let training = generate_training_symbols(&mut rng, cfg);
    let ch = sample_channel(&mut substream(seed, 0, 0, StreamLabel::Channel), 5).unwrap();
    let (mut n0, mut n1) = (rng.clone(), rng.clone());
    let frame = synthesize_frame(cfg, &training, &ch, &ImpairmentParams::noiseless(eps, eta), [&mut n0, &mut n1]);
    Demodulator::new(cfg).observe(&frame, &training).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_closed_form_matches_direct_sum(
        k in -26i64..26,
        i in -26i64..26,
        eps in -0.5f64..0.5,
        eta in -1e-3f64..1e-3,
    ) {
        let closed = delta_coefficient(k, i, eps, eta, 64);
        let direct = delta_coefficient_direct(k, i, eps, eta, 64);
        prop_assert!((closed - direct).norm() < 1e-12);
    }

    #[test]
    fn proposed_cost_scales_with_common_gain(
        seed in 0u64..1000,
        eps in -0.5f64..0.5,
        eta in -5e-4f64..5e-4,
        gain in 0.1f64..10.0,
        phase in -3.2f64..3.2,
    ) {
        let cfg = OfdmConfig::ieee80211a();
        let obs = noiseless(&cfg, 0.1, 1e-4, seed);
        let c = Complex64::from_polar(gain, phase);
        let scaled = PreambleObservation::new(
            obs.r0.iter().map(|z| z * c).collect(),
            obs.r1.iter().map(|z| z * c).collect(),
            obs.training.clone(),
        ).unwrap();
        let base = proposed_cost(&obs, eps, eta, &cfg);
        let after = proposed_cost(&scaled, eps, eta, &cfg);
        prop_assert!((after - gain * gain * base).abs() <= 1e-9 * (1.0 + after.abs()));
        let y0 = nguyenle_observable(&obs).unwrap();
        let y1 = nguyenle_observable(&scaled).unwrap();
        for (a, b) in y0.iter().zip(&y1) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn substreams_are_reproducible(seed in any::<u64>(), snr in 0usize..16, trial in 0usize..10_000) {
        let a: u64 = substream(seed, snr, trial, StreamLabel::Noise0).random();
        let b: u64 = substream(seed, snr, trial, StreamLabel::Noise0).random();
        let c: u64 = substream(seed, snr, trial, StreamLabel::Noise1).random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Lattice points below |eps| = 0.3 have no alias one ramp period away on the grid.
    #[test]
    fn noiseless_unambiguous_lattice_cfo_is_recovered_exactly(seed in 0u64..10_000, index in 21usize..80) {
        let cfg = OfdmConfig::ieee80211a();
        let grid = GridSpec::reference();
        let eps = grid.eps_values()[index];
        let obs = noiseless(&cfg, eps, 0.0, seed);
        let search = JointSearch::new(&cfg, &grid);
        for est in [search.proposed(&obs).unwrap(), search.nguyen_le(&obs).unwrap()] {
            prop_assert_eq!((est.eps_hat, est.eta_hat), (eps, 0.0));
        }
    }
}
