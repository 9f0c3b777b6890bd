mod common;

use common::*;
use jitter_transfer::distributions::{log_mgf_ig, log_mgf_nig, nig_of_pair, InverseGaussianParams};
use jitter_transfer::measurement::{MeasurementMethod, MeasurementRecord};
use jitter_transfer::oscillator::{accumulate, de_accumulate, jitter_ratio, AccumulatedVolatility};
use jitter_transfer::recovery::{
    condition_bound, condition_number_inf, explicit_inverse, norm_inf, recover_method2_general, required_pairs,
    system_matrix, FrequencyRatios, RatioSource,
};
use jitter_transfer::transfer::transfer_phase;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn ratio_set(max_n: usize, spread: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0 / spread..spread, 2..=max_n).prop_map(|mut v| {
        v.insert(0, 1.0);
        v
    })
}

proptest! {
    #[test]
    fn accumulate_round_trip(s in 1e-6..1e3f64, t in 1e-9..1.0f64) {
        let acc = accumulate(s * s, t).unwrap();
        prop_assert!(rel(de_accumulate(&acc), s * s) < 1e-12);
    }

    #[test]
    fn rescaling_accumulated_volatility_keeps_the_rate(v in 1e-6..1.0f64, t in 1e-9..1.0f64, k in 0.1..10.0f64) {
        let acc = AccumulatedVolatility::new(v, t).unwrap();
        let moved = acc.rescaled(t * k).unwrap();
        prop_assert!(rel(moved.squared() / moved.reference_period, acc.squared() / t) < 1e-12);
        prop_assert!(rel(moved.value, v * k.sqrt()) < 1e-12);
    }

    #[test]
    fn jitter_ratio_is_scale_free(mean in 1e-9..1.0f64, cv in 1e-4..0.3f64, k in 1e-3..1e3f64) {
        let var = (cv * mean).powi(2);
        let a = jitter_ratio(mean, var).unwrap();
        let b = jitter_ratio(mean * k, var * k * k).unwrap();
        prop_assert!(rel(a, b) < 1e-12);
    }

    #[test]
    fn mgf_composition(f0 in 0.5..2.0f64, f1 in 0.5..2.0f64, s0 in 1e-3..0.2f64, s1 in 1e-3..0.2f64, t in -1.0..1.0f64) {
        let law = nig_of_pair(f0, s0, f1, s1).unwrap();
        let ig = InverseGaussianParams::new(1.0 / f0, 1.0 / (s0 * s0)).unwrap();
        let inner = f1 * t + 0.5 * s1 * s1 * t * t;
        if let (Ok(lhs), Ok(rhs)) = (log_mgf_nig(t, &law), log_mgf_ig(inner, &ig)) {
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn nig_moments_match_the_transfer(f0 in 0.5..2.0f64, f1 in 0.5..2.0f64, s0 in 1e-3..0.2f64, s1 in 1e-3..0.2f64) {
        let law = nig_of_pair(f0, s0, f1, s1).unwrap();
        prop_assert!(rel(law.mean(), f1 / f0) < 1e-12);
        // variance per sampler cycle is the composed rate over f0
        let composed = transfer_phase(f0, s0, f1, s1).unwrap().sigma_prime_sq;
        prop_assert!(rel(law.variance(), composed / f0) < 1e-12);
    }

    #[test]
    fn transfer_grows_with_either_volatility(f0 in 0.5..2.0f64, f1 in 0.5..2.0f64, s0 in 1e-3..0.2f64, s1 in 1e-3..0.2f64) {
        let base = transfer_phase(f0, s0, f1, s1).unwrap().sigma_prime_sq;
        prop_assert!(transfer_phase(f0, s0 * 1.1, f1, s1).unwrap().sigma_prime_sq > base);
        prop_assert!(transfer_phase(f0, s0, f1, s1 * 1.1).unwrap().sigma_prime_sq > base);
    }

    #[test]
    fn inverse_and_condition_bound(ratios in ratio_set(9, 2.0f64.sqrt())) {
        let ratios = FrequencyRatios::new(ratios, RatioSource::Configured).unwrap();
        let n = ratios.n();
        let m = system_matrix(&ratios).unwrap();
        let inv = explicit_inverse(&ratios).unwrap();
        prop_assert!(norm_inf(&(&m * &inv - DMatrix::identity(n + 1, n + 1))) < 1e-12);
        prop_assert!(condition_number_inf(&m, &inv) <= condition_bound(&ratios) * (1.0 + 1e-12));
    }

    #[test]
    fn recovery_round_trip(ratios in ratio_set(6, 1.5), seed_sigmas in prop::collection::vec(1e-4..1e-2f64, 7)) {
        let ratios = FrequencyRatios::new(ratios, RatioSource::Configured).unwrap();
        let n = ratios.n();
        let t0 = 1e-6;
        let f: Vec<f64> = ratios.ratios().iter().map(|r| r / t0).collect();
        let sig: Vec<f64> = seed_sigmas[..=n].iter().map(|a| a / t0.sqrt()).collect();
        let records: Vec<MeasurementRecord> = required_pairs(n)
            .into_iter()
            .map(|(i, j)| {
                let sq = transfer_phase(f[i], sig[i], f[j], sig[j]).unwrap().sigma_prime_sq;
                MeasurementRecord {
                    pair: (i, j),
                    ratio_estimate: f[j] / f[i],
                    accumulated_sigma_prime: accumulate(sq, 1.0 / f[i]).unwrap(),
                    n_bits_used: 0,
                    method: MeasurementMethod::PhaseOracle,
                    std_error: None,
                    flags: Vec::new(),
                }
            })
            .collect();
        let sol = recover_method2_general(&records, &ratios).unwrap();
        for (got, a) in sol.sigma_sq_accumulated.iter().zip(&seed_sigmas[..=n]) {
            prop_assert!(rel(*got, a * a) < 1e-9, "{got} vs {}", a * a);
        }
    }
}

#[test]
fn relative_error_amplification_is_bounded_by_kappa() {
    let ratios = FrequencyRatios::from_periods(&PERIODS, RatioSource::Configured).unwrap();
    let m = system_matrix(&ratios).unwrap();
    let inv = explicit_inverse(&ratios).unwrap();
    let kappa = condition_number_inf(&m, &inv);
    let x = DMatrix::from_column_slice(3, 1, &rates().map(|s| s * s));
    let b = &m * &x;
    for k in 0..3 {
        let mut db = DMatrix::zeros(3, 1);
        db[k] = 0.01 * b.amax();
        let dx = &inv * &db;
        assert!(dx.amax() / x.amax() <= kappa * db.amax() / b.amax() * (1.0 + 1e-12));
    }
}
