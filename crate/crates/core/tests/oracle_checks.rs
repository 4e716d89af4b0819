//! Cross-module agreement against the exact oracles.

use detect_core::baselines::{ep_single_hop, NoiseVar};
use detect_core::constellation::{Constellation, GaussianPrior};
use detect_core::detector::{posterior_mse, run, DetectorOptions};
use detect_core::oracle::{exact_discrete_posterior, exact_gaussian_posterior};
use detect_core::registry::DetectorRegistry;
use detect_core::system::{
    propagate, sample_channels, sample_instance, sample_symbols, snr_to_sigma_sq, trial_rng,
    Dimensions,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_vector(len: usize, variance: f64, rng: &mut impl Rng) -> DVector<Complex64> {
    let s = (variance / 2.0).sqrt();
    DVector::from_fn(len, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

/// With a Gaussian prior the whole chain is linear-Gaussian, and the joint
/// detector's fixed point must reproduce the exact compound posterior mean.
#[test]
fn gaussian_prior_fixed_point_matches_exact_posterior() {
    let prior = GaussianPrior::unit();
    for (trial, &(l, m, n)) in [(4usize, 6usize, 8usize), (8, 16, 24), (16, 32, 48)]
        .iter()
        .enumerate()
    {
        let mut rng = trial_rng(101, 0, trial as u64);
        let dims = Dimensions::new(l, m, n).unwrap();
        let (h, c) = sample_channels(dims, &mut rng);
        let x = gaussian_vector(l, 1.0, &mut rng);
        let (s1, s2) = (0.15, 0.25);
        let inst = propagate(&x, &h, &c, s1, s2, &mut rng);

        let opts = DetectorOptions { max_iterations: 50, stop_tol: 1e-14, ..Default::default() };
        let result = run(&inst.z, &h, &c, s1, s2, &prior, &opts).unwrap();
        let exact = exact_gaussian_posterior(&inst.z, &h, &c, s1, s2, 1.0).unwrap();

        let num: f64 = result
            .x_hat
            .iter()
            .zip(exact.mean.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = exact.mean.iter().map(|v| v.norm_sqr()).sum();
        let rel = (num / den).sqrt();
        assert!(rel < 1e-6, "dims ({l},{m},{n}): relative gap {rel}");
    }
}

/// The detector's converged posterior variance estimate should track the
/// exact Gaussian posterior MMSE.
#[test]
fn gaussian_prior_variance_estimate_tracks_exact_mmse() {
    let prior = GaussianPrior::unit();
    let mut rng = trial_rng(102, 0, 0);
    let dims = Dimensions::new(8, 12, 16).unwrap();
    let (h, c) = sample_channels(dims, &mut rng);
    let x = gaussian_vector(8, 1.0, &mut rng);
    let inst = propagate(&x, &h, &c, 0.2, 0.3, &mut rng);
    let result = run(
        &inst.z,
        &h,
        &c,
        0.2,
        0.3,
        &prior,
        &DetectorOptions { max_iterations: 50, stop_tol: 1e-14, ..Default::default() },
    )
    .unwrap();
    let exact = exact_gaussian_posterior(&inst.z, &h, &c, 0.2, 0.3, 1.0).unwrap();
    let est = result.per_iteration.last().unwrap().mean_posterior_var;
    assert!(
        (est - exact.mmse).abs() < 0.05 * exact.mmse,
        "variance estimate {est} vs exact MMSE {}",
        exact.mmse
    );
}

/// Removing the first hop (identity channel, vanishing relay noise) must
/// reduce the joint detector to the single-hop EP detector, iteration by
/// iteration.
#[test]
fn degenerates_to_single_hop_ep_iteration_by_iteration() {
    let q = Constellation::qpsk();
    let m = 32usize;
    let mut rng = trial_rng(103, 0, 0);
    let dims = Dimensions::new(m, m, m).unwrap();
    let (_, c_chan) = sample_channels(dims, &mut rng);
    let x = sample_symbols(m, &q, &mut rng).unwrap();
    let s2 = snr_to_sigma_sq(10.0);
    let h = DMatrix::<Complex64>::identity(m, m);
    let s1 = 1e-12;
    let inst = propagate(&x, &h, &c_chan, s1, s2, &mut rng);

    let opts = DetectorOptions { max_iterations: 8, stop_tol: 0.0, ..Default::default() };
    let joint = run(&inst.z, &h, &c_chan, s1, s2, &q, &opts).unwrap();
    let single = ep_single_hop(&inst.z, &c_chan, &NoiseVar::Scalar(s2), &q, &opts).unwrap();

    // the two runs must safeguard the same components in lockstep; any
    // divergence would show up in the per-iteration gap below
    assert_eq!(joint.safeguard_count, single.safeguard_count);
    assert_eq!(joint.per_iteration.len(), single.per_iteration.len());
    for (k, (a, b)) in joint
        .per_iteration
        .iter()
        .zip(single.per_iteration.iter())
        .enumerate()
    {
        let gap: f64 = a
            .x_hat
            .iter()
            .zip(&b.x_hat)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(gap < 1e-6, "iteration {k}: estimates differ by {gap}");
    }
}

/// On enumerable instances no detector can beat the exact posterior mean,
/// and the joint detector should land near it.
#[test]
fn exact_posterior_mean_is_unbeaten_at_small_scale() {
    let q = Constellation::qpsk();
    let dims = Dimensions::new(2, 3, 4).unwrap();
    let s = snr_to_sigma_sq(8.0);
    let trials = 400;
    let registry = DetectorRegistry::with_builtins();
    let opts = DetectorOptions::default();

    let mut oracle_mse = 0.0;
    let mut oracle_mmse = 0.0;
    let mut detector_mse: Vec<(String, f64)> =
        registry.names().iter().map(|n| (n.to_string(), 0.0)).collect();
    let mut sq_dev = 0.0;

    for t in 0..trials {
        let mut rng = trial_rng(104, 0, t);
        let inst = sample_instance(dims, &q, s, s, &mut rng);
        let post = exact_discrete_posterior(&inst.z, &inst.h, &inst.c, s, s, &q).unwrap();
        let x_true: Vec<Complex64> = inst.x.iter().copied().collect();
        let e = posterior_mse(&post.mean, &x_true);
        oracle_mse += e;
        sq_dev += e * e;
        oracle_mmse += post.mmse;
        for (name, acc) in detector_mse.iter_mut() {
            let det = registry.get(name).unwrap();
            let out = det.detect(&inst.observation(), &q, &opts).unwrap();
            *acc += posterior_mse(&out.x_hat, &x_true);
        }
    }
    let tf = trials as f64;
    oracle_mse /= tf;
    oracle_mmse /= tf;
    let sigma = ((sq_dev / tf - oracle_mse * oracle_mse) / tf).sqrt();

    for (name, acc) in detector_mse.iter() {
        let mse = acc / tf;
        assert!(
            mse + 3.0 * sigma >= oracle_mse,
            "{name} beat the exact posterior mean: {mse} vs {oracle_mse}"
        );
    }
    // the Monte-Carlo average of the conditional MMSE matches the realized
    // oracle MSE
    assert!(
        (oracle_mse - oracle_mmse).abs() < 5.0 * sigma,
        "oracle MSE {oracle_mse} vs mean conditional MMSE {oracle_mmse}"
    );
    let joint = detector_mse.iter().find(|(n, _)| n == "proposed").unwrap().1 / tf;
    assert!(
        joint <= oracle_mmse * 1.15,
        "joint detector MSE {joint} not within 15% of oracle MMSE {oracle_mmse}"
    );
}

/// Baselines and the joint detector agree with the exact posterior in the
/// noiseless full-rank limit.
#[test]
fn all_detectors_recover_noiseless_small_instance() {
    let q = Constellation::qpsk();
    let dims = Dimensions::new(2, 3, 4).unwrap();
    let registry = DetectorRegistry::with_builtins();
    for t in 0..10 {
        let mut rng = trial_rng(105, 0, t);
        let inst = sample_instance(dims, &q, 1e-11, 1e-11, &mut rng);
        let truth = q.hard_decision(inst.x.as_slice()).0;
        for name in registry.names() {
            let det = registry.get(name).unwrap();
            let out = det
                .detect(&inst.observation(), &q, &DetectorOptions::default())
                .unwrap();
            assert_eq!(q.hard_decision(&out.x_hat).0, truth, "{name} trial {t}");
        }
    }
}
