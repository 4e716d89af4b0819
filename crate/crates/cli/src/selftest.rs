//! Built-in oracle-equivalence checks behind `detect selftest`.
//!
//! Fast spot checks of the algebra the detectors rest on, each verified
//! against an independent computation. Suitable as a smoke test on a new
//! machine; the full statistical acceptance suite lives in the test tree.

use detect_core::baselines::{ep_single_hop, NoiseVar};
use detect_core::constellation::{Constellation, GaussianPrior, Prior};
use detect_core::detector::{observation_belief, run, DetectorOptions};
use detect_core::messages::{GaussianMessage, VarianceBounds};
use detect_core::oracle::{exact_discrete_posterior, exact_gaussian_posterior};
use detect_core::system::{
    propagate, sample_channels, sample_symbols, trial_rng, Dimensions,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

struct Check {
    name: &'static str,
    run: fn() -> Result<(), String>,
}

fn random_message(len: usize, rng: &mut impl Rng) -> GaussianMessage {
    let mean = (0..len)
        .map(|_| {
            Complex64::new(
                rng.sample::<f64, _>(StandardNormal) * 3.0,
                rng.sample::<f64, _>(StandardNormal) * 3.0,
            )
        })
        .collect();
    // precision ratios up to 1e4: past ~1e5 the divide-out loses the small
    // precision's bits in f64 and no implementation can hit 1e-10 relative
    let var = (0..len).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
    GaussianMessage::new(mean, var).expect("valid random message")
}

fn message_roundtrips() -> Result<(), String> {
    let mut rng = trial_rng(0xDE7EC7, 0, 0);
    let bounds = VarianceBounds::default();
    for i in 0..10_000 {
        let a = random_message(4, &mut rng);
        let b = random_message(4, &mut rng);
        let joint = a.combine(&b).map_err(|e| e.to_string())?;
        let mut guards = 0;
        let back = joint.extrinsic(&b, bounds, &mut guards).map_err(|e| e.to_string())?;
        if guards != 0 {
            return Err(format!("round {i}: unexpected safeguard"));
        }
        for j in 0..4 {
            let scale = a.mean[j].norm().max(1.0);
            if (back.mean[j] - a.mean[j]).norm() > 1e-10 * scale
                || (back.var[j] - a.var[j]).abs() > 1e-10 * a.var[j]
            {
                return Err(format!("round {i} component {j}: ext(combine) != identity"));
            }
        }
    }
    Ok(())
}

fn denoiser_vs_direct_sum() -> Result<(), String> {
    let q = Constellation::qpsk();
    let mut rng = trial_rng(0xDE7EC8, 0, 0);
    for i in 0..2_000 {
        let m = Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let v = 10f64.powf(rng.gen_range(-2.0..1.0));
        let den = q.denoise(&[m], &[v], 1e-18);
        let mut norm = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for (k, p) in q.points().iter().enumerate() {
            let w = q.probs()[k] * (-(m - p).norm_sqr() / v).exp();
            norm += w;
            mean += p * w;
            second += p.norm_sqr() * w;
        }
        if norm == 0.0 {
            continue;
        }
        mean /= norm;
        let var = second / norm - mean.norm_sqr();
        if (den.mean[0] - mean).norm() > 1e-12 || (den.var[0] - var).abs() > 1e-12 {
            return Err(format!("sample {i}: denoiser disagrees with direct sum"));
        }
    }
    Ok(())
}

fn observation_stage_vs_dense_inverse() -> Result<(), String> {
    let mut rng = trial_rng(0xDE7EC9, 0, 0);
    let dims = Dimensions::new(2, 3, 4).unwrap();
    let (_, c) = sample_channels(dims, &mut rng);
    let z = DVector::from_fn(4, |i, _| {
        Complex64::new(0.3 * i as f64 - 0.2, 0.1 * i as f64)
    });
    let cavity = random_message(3, &mut rng);
    let s2 = 0.4;
    let belief = observation_belief(&z, &c, s2, &cavity).map_err(|e| e.to_string())?;
    let mut a = c.adjoint() * &c / Complex64::new(s2, 0.0);
    let mut rhs = c.adjoint() * &z / Complex64::new(s2, 0.0);
    for i in 0..3 {
        a[(i, i)] += Complex64::new(1.0 / cavity.var[i], 0.0);
        rhs[i] += cavity.mean[i] / cavity.var[i];
    }
    let q = a.try_inverse().ok_or("dense inverse failed")?;
    let mean = &q * rhs;
    for i in 0..3 {
        if (belief.mean[i] - mean[i]).norm() > 1e-10
            || (belief.var[i] - q[(i, i)].re).abs() > 1e-10
        {
            return Err(format!("component {i} disagrees with dense inverse"));
        }
    }
    Ok(())
}

fn gaussian_chain_is_exact() -> Result<(), String> {
    let mut rng = trial_rng(0xDE7ECA, 0, 0);
    let dims = Dimensions::new(8, 12, 16).unwrap();
    let (h, c) = sample_channels(dims, &mut rng);
    let s = (0.5f64 / 2.0).sqrt();
    let x = DVector::from_fn(8, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal) * s * std::f64::consts::SQRT_2,
            rng.sample::<f64, _>(StandardNormal) * s * std::f64::consts::SQRT_2,
        )
    });
    let inst = propagate(&x, &h, &c, 0.2, 0.3, &mut rng);
    let prior = GaussianPrior::unit();
    let opts = DetectorOptions { max_iterations: 40, stop_tol: 1e-14, ..Default::default() };
    let result =
        run(&inst.z, &h, &c, 0.2, 0.3, &prior, &opts).map_err(|e| e.to_string())?;
    let exact =
        exact_gaussian_posterior(&inst.z, &h, &c, 0.2, 0.3, 1.0).map_err(|e| e.to_string())?;
    let num: f64 = result
        .x_hat
        .iter()
        .zip(exact.mean.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let den: f64 = exact.mean.iter().map(|v| v.norm_sqr()).sum();
    let rel = (num / den).sqrt();
    if rel > 1e-4 {
        return Err(format!("fixed point off the exact posterior by {rel:.2e}"));
    }
    Ok(())
}

fn single_hop_degeneration() -> Result<(), String> {
    let q = Constellation::qpsk();
    let m = 16usize;
    let mut rng = trial_rng(0xDE7ECB, 0, 0);
    let dims = Dimensions::new(m, m, m).unwrap();
    let (_, c) = sample_channels(dims, &mut rng);
    let x = sample_symbols(m, &q, &mut rng).unwrap();
    let h = DMatrix::<Complex64>::identity(m, m);
    let inst = propagate(&x, &h, &c, 1e-12, 0.1, &mut rng);
    let opts = DetectorOptions { max_iterations: 6, stop_tol: 0.0, ..Default::default() };
    let joint = run(&inst.z, &h, &c, 1e-12, 0.1, &q, &opts).map_err(|e| e.to_string())?;
    let single = ep_single_hop(&inst.z, &c, &NoiseVar::Scalar(0.1), &q, &opts)
        .map_err(|e| e.to_string())?;
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
        if gap > 1e-6 {
            return Err(format!("iteration {k}: joint vs single-hop gap {gap:.2e}"));
        }
    }
    Ok(())
}

fn discrete_oracle_single_symbol() -> Result<(), String> {
    let q = Constellation::qpsk();
    let mut rng = trial_rng(0xDE7ECC, 0, 0);
    let dims = Dimensions::new(1, 2, 3).unwrap();
    let (h, c) = sample_channels(dims, &mut rng);
    let x = sample_symbols(1, &q, &mut rng).unwrap();
    let inst = propagate(&x, &h, &c, 0.3, 0.3, &mut rng);
    let post = exact_discrete_posterior(&inst.z, &h, &c, 0.3, 0.3, &q)
        .map_err(|e| e.to_string())?;
    let sum: f64 = post.marginals[0].iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(format!("marginals sum to {sum}"));
    }
    let sigma = &c * c.adjoint() * Complex64::new(0.3, 0.0)
        + DMatrix::<Complex64>::identity(3, 3) * Complex64::new(0.3, 0.0);
    let sigma_inv = sigma.try_inverse().ok_or("dense inverse failed")?;
    let g = &c * &h;
    let mut weights = [0.0; 4];
    for (k, p) in q.points().iter().enumerate() {
        let r = &inst.z - &g * DVector::from_vec(vec![*p]);
        let quad = (r.adjoint() * &sigma_inv * &r)[(0, 0)].re;
        weights[k] = 0.25 * (-quad).exp();
    }
    let total: f64 = weights.iter().sum();
    for k in 0..4 {
        if (post.marginals[0][k] - weights[k] / total).abs() > 1e-9 {
            return Err(format!("marginal {k} disagrees with the four-term evaluation"));
        }
    }
    Ok(())
}

fn experiment_is_deterministic() -> Result<(), String> {
    use crate::config::{parse_str, ExperimentConfig};
    use crate::csvout::render_csv;
    use crate::driver::run_experiment;
    let mut cfg = ExperimentConfig::default();
    cfg.apply(
        &parse_str(
            "L=2\nM=3\nN=4\ntrials=4\niters=4\nsnr1=8,10\nsnr2=8\nseed=3\nalgos=proposed,ep_ls,se_predictor\n",
        )
        .unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let a = render_csv(&cfg, &run_experiment(&cfg).map_err(|e| e.to_string())?.rows);
    let b = render_csv(&cfg, &run_experiment(&cfg).map_err(|e| e.to_string())?.rows);
    if a != b {
        return Err("two identical runs produced different CSV bytes".into());
    }
    cfg.workers = 3;
    let c = render_csv(&cfg, &run_experiment(&cfg).map_err(|e| e.to_string())?.rows);
    if a != c {
        return Err("worker count changed the CSV bytes".into());
    }
    Ok(())
}

const CHECKS: &[Check] = &[
    Check { name: "message algebra round-trips (10^4 randomized)", run: message_roundtrips },
    Check { name: "denoiser vs direct four-term sum", run: denoiser_vs_direct_sum },
    Check { name: "observation stage vs dense inverse", run: observation_stage_vs_dense_inverse },
    Check { name: "Gaussian-prior chain equals exact posterior", run: gaussian_chain_is_exact },
    Check { name: "single-hop degeneration", run: single_hop_degeneration },
    Check { name: "discrete oracle, single symbol", run: discrete_oracle_single_symbol },
    Check { name: "experiment determinism", run: experiment_is_deterministic },
];

/// Run every self-check, printing one line per check. Returns true when all
/// pass.
pub fn run_selftest() -> bool {
    let mut all_ok = true;
    for check in CHECKS {
        match (check.run)() {
            Ok(()) => println!("selftest: {:<45} ok", check.name),
            Err(msg) => {
                all_ok = false;
                println!("selftest: {:<45} FAIL ({msg})", check.name);
            }
        }
    }
    all_ok
}
