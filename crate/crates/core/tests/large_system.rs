//! Statistical behavior at production scale.

use detect_core::constellation::Constellation;
use detect_core::detector::{posterior_mse, run, DetectorOptions};
use detect_core::system::{sample_instance, snr_to_sigma_sq, trial_rng, Dimensions};

/// Averaged over many trials the per-iteration MSE trace must not increase
/// beyond its own sampling noise; individual trials may fluctuate.
#[test]
fn mean_mse_trace_is_nonincreasing_at_scale() {
    let q = Constellation::qpsk();
    let dims = Dimensions::new(128, 256, 512).unwrap();
    let snr1 = snr_to_sigma_sq(8.0);
    let snr2 = snr_to_sigma_sq(8.0);
    let iters = 6;
    let trials = 100usize;
    let mut traces: Vec<Vec<f64>> = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = trial_rng(2024, 0, t as u64);
        let inst = sample_instance(dims, &q, snr1, snr2, &mut rng);
        let opts =
            DetectorOptions { max_iterations: iters, stop_tol: 0.0, ..Default::default() };
        let out = run(&inst.z, &inst.h, &inst.c, snr1, snr2, &q, &opts).unwrap();
        let truth: Vec<_> = inst.x.iter().copied().collect();
        traces.push(
            out.per_iteration
                .iter()
                .map(|snap| posterior_mse(&snap.x_hat, &truth))
                .collect(),
        );
    }
    let mean: Vec<f64> = (0..iters)
        .map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / trials as f64)
        .collect();

    // paired per-trial increments: a rise must stay within 3 sigma of its
    // own sampling noise
    for k in 0..iters - 1 {
        let diffs: Vec<f64> = traces.iter().map(|t| t[k + 1] - t[k]).collect();
        let mean_diff: f64 = diffs.iter().sum::<f64>() / trials as f64;
        let var: f64 = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>()
            / (trials as f64 - 1.0);
        let sigma = (var / trials as f64).sqrt();
        assert!(
            mean_diff <= 3.0 * sigma,
            "mean MSE rose from iteration {} to {} by {mean_diff:.3e} (3 sigma = {:.3e}); trace {mean:?}",
            k + 1,
            k + 2,
            3.0 * sigma
        );
    }
    // and it must actually make progress
    assert!(mean[iters - 1] < 0.5 * mean[0], "no convergence progress: {mean:?}");
}
