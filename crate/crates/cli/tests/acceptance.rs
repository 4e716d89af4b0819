//! Acceptance suite: eight criteria, one pass/fail line each.
//!
//! Statistical criteria pin their tolerances here, in code; every assertion
//! prints enough context to audit a failure. Criteria 4 and 5 compare
//! Monte-Carlo estimates against theory at fixed trial budgets, so their
//! lines carry the full comparison tables.

use std::time::Instant;

use detect_cli::config::{parse_str, ExperimentConfig};
use detect_cli::csvout::render_csv;
use detect_cli::driver::{run_experiment, ResultRow};
use detect_core::baselines::{ep_single_hop, ls_second_hop, NoiseVar};
use detect_core::constellation::{Constellation, GaussianPrior, Prior};
use detect_core::detector::{
    mixing_belief_t, mixing_belief_x, observation_belief, posterior_mse,
    relay_noise_belief_t, relay_noise_belief_y, run, DetectorOptions,
};
use detect_core::messages::{GaussianMessage, VarianceBounds};
use detect_core::oracle::{exact_discrete_posterior, exact_gaussian_posterior};
use detect_core::registry::DetectorRegistry;
use detect_core::se::{eigen_spectra, se_run, SeOptions};
use detect_core::system::{
    propagate, sample_channels, sample_instance, sample_symbols, snr_to_sigma_sq,
    trial_rng, Dimensions,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

fn report(number: u8, description: &str, started: Instant, result: Result<(), String>) {
    let secs = started.elapsed().as_secs_f64();
    match &result {
        Ok(()) => println!("ACCEPTANCE {number} PASS ({secs:.1}s) — {description}"),
        Err(msg) => {
            println!("ACCEPTANCE {number} FAIL ({secs:.1}s) — {description}: {msg}")
        }
    }
    if let Err(msg) = result {
        panic!("criterion {number} failed: {msg}");
    }
}

fn runtime_cap(started: Instant, cap_s: f64) -> Result<(), String> {
    let secs = started.elapsed().as_secs_f64();
    if secs < cap_s {
        Ok(())
    } else {
        Err(format!("runtime {secs:.0}s exceeded the {cap_s:.0}s cap"))
    }
}

/// 1. At enumerable scale the exact posterior mean is MSE-unbeaten and the
/// joint detector sits within 15% of the oracle MMSE.
#[test]
fn acceptance_1_oracle_optimality() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let q = Constellation::qpsk();
        let dims = Dimensions::new(2, 3, 4).unwrap();
        let s = snr_to_sigma_sq(8.0);
        let trials = 2500usize;
        let registry = DetectorRegistry::with_builtins();
        let names = registry.names();
        let opts = DetectorOptions::default();

        let mut oracle_mse = Vec::with_capacity(trials);
        let mut oracle_mmse = 0.0;
        let mut detector_mse: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); names.len()];
        for t in 0..trials {
            let mut rng = trial_rng(881, 0, t as u64);
            let inst = sample_instance(dims, &q, s, s, &mut rng);
            let truth: Vec<Complex64> = inst.x.iter().copied().collect();
            let post = exact_discrete_posterior(&inst.z, &inst.h, &inst.c, s, s, &q)
                .map_err(|e| e.to_string())?;
            oracle_mse.push(posterior_mse(&post.mean, &truth));
            oracle_mmse += post.mmse;
            for (i, name) in names.iter().enumerate() {
                let out = registry
                    .get(name)
                    .unwrap()
                    .detect(&inst.observation(), &q, &opts)
                    .map_err(|e| e.to_string())?;
                detector_mse[i].push(posterior_mse(&out.x_hat, &truth));
            }
        }
        let tf = trials as f64;
        let oracle_mean = oracle_mse.iter().sum::<f64>() / tf;
        oracle_mmse /= tf;

        for (i, name) in names.iter().enumerate() {
            let det_mean = detector_mse[i].iter().sum::<f64>() / tf;
            // paired one-sided comparison: oracle <= detector within 3 sigma
            let diffs: Vec<f64> = detector_mse[i]
                .iter()
                .zip(&oracle_mse)
                .map(|(d, o)| d - o)
                .collect();
            let mean_diff = diffs.iter().sum::<f64>() / tf;
            let var =
                diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (tf - 1.0);
            let sigma = (var / tf).sqrt();
            if mean_diff < -3.0 * sigma {
                return Err(format!(
                    "{name} beat the exact posterior mean: {det_mean:.4e} vs {oracle_mean:.4e}"
                ));
            }
        }
        let joint_mean =
            detector_mse[names.iter().position(|n| *n == "proposed").unwrap()]
                .iter()
                .sum::<f64>()
                / tf;
        if joint_mean > 1.15 * oracle_mmse {
            return Err(format!(
                "joint detector MSE {joint_mean:.4e} not within 15% of oracle MMSE {oracle_mmse:.4e}"
            ));
        }
        println!(
            "  oracle MSE {oracle_mean:.4e}, oracle MMSE {oracle_mmse:.4e}, joint {joint_mean:.4e}"
        );
        runtime_cap(started, 60.0)
    })();
    report(1, "oracle optimality at enumerable scale", started, result);
}

/// 2. With a Gaussian prior the converged estimate equals the exact
/// compound-model posterior mean to 1e-4 relative.
#[test]
fn acceptance_2_linear_gaussian_exactness() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let dims = Dimensions::new(32, 64, 128).unwrap();
        let prior = GaussianPrior::unit();
        let mut rng = trial_rng(882, 0, 0);
        let (h, c) = sample_channels(dims, &mut rng);
        let scale = (0.5f64).sqrt();
        let x = DVector::from_fn(32, |_, _| {
            Complex64::new(
                rng.sample::<f64, _>(StandardNormal) * scale,
                rng.sample::<f64, _>(StandardNormal) * scale,
            )
        });
        let (s1, s2) = (snr_to_sigma_sq(8.0), snr_to_sigma_sq(11.0));
        let inst = propagate(&x, &h, &c, s1, s2, &mut rng);
        let opts =
            DetectorOptions { max_iterations: 50, stop_tol: 1e-14, ..Default::default() };
        let out = run(&inst.z, &h, &c, s1, s2, &prior, &opts).map_err(|e| e.to_string())?;
        let exact = exact_gaussian_posterior(&inst.z, &h, &c, s1, s2, 1.0)
            .map_err(|e| e.to_string())?;
        let num: f64 = out
            .x_hat
            .iter()
            .zip(exact.mean.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = exact.mean.iter().map(|v| v.norm_sqr()).sum();
        let rel = (num / den).sqrt();
        println!("  relative gap to exact posterior mean: {rel:.2e}");
        if rel > 1e-4 {
            return Err(format!("relative error {rel:.2e} above 1e-4"));
        }
        runtime_cap(started, 1.0)
    })();
    report(2, "linear-Gaussian exactness", started, result);
}

/// 3. With the first hop removed the joint detector reproduces single-hop EP
/// iteration by iteration.
#[test]
fn acceptance_3_single_hop_degeneration() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let q = Constellation::qpsk();
        let m = 32usize;
        let mut rng = trial_rng(883, 0, 0);
        let dims = Dimensions::new(m, m, m).unwrap();
        let (_, c) = sample_channels(dims, &mut rng);
        let x = sample_symbols(m, &q, &mut rng).unwrap();
        let s2 = snr_to_sigma_sq(10.0);
        let h = DMatrix::<Complex64>::identity(m, m);
        let inst = propagate(&x, &h, &c, 1e-12, s2, &mut rng);
        let opts = DetectorOptions { max_iterations: 8, stop_tol: 0.0, ..Default::default() };
        let joint =
            run(&inst.z, &h, &c, 1e-12, s2, &q, &opts).map_err(|e| e.to_string())?;
        let single = ep_single_hop(&inst.z, &c, &NoiseVar::Scalar(s2), &q, &opts)
            .map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
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
            worst = worst.max(gap);
            if gap > 1e-6 {
                return Err(format!("iteration {}: gap {gap:.2e} above 1e-6", k + 1));
            }
        }
        println!("  worst per-iteration gap: {worst:.2e}");
        runtime_cap(started, 1.0)
    })();
    report(3, "single-hop degeneration to EP", started, result);
}

/// 4. State evolution predicts the detector's per-iteration MSE within 10%
/// relative at SNR1 in {10,15,20} dB, SNR2 = 20 dB, converging within 5
/// iterations.
#[test]
fn acceptance_4_state_evolution_agreement() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let q = Constellation::qpsk();
        let dims = Dimensions::new(128, 256, 512).unwrap();
        let iters = 8usize;
        let trials = 400usize;
        let s2 = snr_to_sigma_sq(20.0);
        let mut failures = Vec::new();
        for (grid, snr1) in [10.0f64, 15.0, 20.0].into_iter().enumerate() {
            let s1 = snr_to_sigma_sq(snr1);
            let mut sums = vec![0.0; iters];
            let mut sq_sums = vec![0.0; iters];
            for t in 0..trials {
                let mut rng = trial_rng(884, grid as u64, t as u64);
                let inst = sample_instance(dims, &q, s1, s2, &mut rng);
                let opts = DetectorOptions {
                    max_iterations: iters,
                    stop_tol: 0.0,
                    ..Default::default()
                };
                let out = run(&inst.z, &inst.h, &inst.c, s1, s2, &q, &opts)
                    .map_err(|e| e.to_string())?;
                let truth: Vec<Complex64> = inst.x.iter().copied().collect();
                for (k, snap) in out.per_iteration.iter().enumerate() {
                    let m = posterior_mse(&snap.x_hat, &truth);
                    sums[k] += m;
                    sq_sums[k] += m * m;
                }
            }
            let tf = trials as f64;
            let mc: Vec<f64> = sums.iter().map(|s| s / tf).collect();
            let mc_stderr: Vec<f64> = (0..iters)
                .map(|k| ((sq_sums[k] / tf - mc[k] * mc[k]).max(0.0) / tf).sqrt())
                .collect();

            // empirical spectra of the channel pair trial 0 faces
            let mut rng = trial_rng(884, grid as u64, 0);
            let (h, c) = sample_channels(dims, &mut rng);
            let spectra = eigen_spectra(&h, &c).map_err(|e| e.to_string())?;
            let trace =
                se_run(&spectra, s1, s2, &q, iters, &SeOptions::default());
            let se = trace.mse_trace();

            println!("  SNR1={snr1} dB: k, MC, SE, rel-diff");
            for k in 0..iters {
                let rel = (mc[k] - se[k]) / se[k];
                println!(
                    "    {:>2}  {:.4e} (±{:.1e})  {:.4e}  {:+.1}%",
                    k + 1,
                    mc[k],
                    mc_stderr[k],
                    se[k],
                    100.0 * rel
                );
                if (mc[k] - se[k]).abs() > 0.10 * se[k] {
                    failures.push(format!(
                        "SNR1={snr1} iteration {}: MC {:.3e} vs SE {:.3e} ({:+.0}%)",
                        k + 1,
                        mc[k],
                        se[k],
                        100.0 * rel
                    ));
                }
            }
            // convergence within 5 iterations, on the SE trace and the
            // Monte-Carlo trace alike
            let conv = |trace: &[f64]| -> bool {
                let last = trace[iters - 1];
                (trace[4] - last).abs() <= 0.05 * trace[4].max(last) + 1e-9
            };
            if !conv(&se) {
                failures.push(format!("SNR1={snr1}: SE not converged by iteration 5"));
            }
            if !conv(&mc) {
                failures.push(format!("SNR1={snr1}: MC not converged by iteration 5"));
            }
        }
        runtime_cap(started, 600.0)?;
        if failures.is_empty() {
            Ok(())
        } else {
            Err(format!("{} deviation(s): {}", failures.len(), failures.join("; ")))
        }
    })();
    report(4, "state-evolution agreement (10% per iteration)", started, result);
}

/// 5. BER ordering at SNR2 = SNR1 - 3 dB: proposed < ep_ls < single_lmmse
/// <= 1.2*lmmse_ls with 3-sigma separations, at grid points with at least
/// 10 accumulated bit errors.
#[test]
fn acceptance_5_ber_ordering() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(
            &parse_str(
                "L=64\nM=128\nN=256\ntrials=500\niters=20\nseed=885\n\
                 snr1=6,8,10,12,14\nsnr2_offset_db=-3\n\
                 algos=proposed,ep_ls,single_lmmse,lmmse_ls\n",
            )
            .unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let get = |algo: &str, snr1: f64| -> &ResultRow {
            out.rows
                .iter()
                .find(|r| r.algorithm == algo && r.snr1_db == snr1)
                .expect("row present")
        };
        let bits_per_point = (cfg.trials * cfg.dims.source * 2) as f64;
        let mut failures = Vec::new();
        println!("  snr1: proposed | ep_ls | single_lmmse | lmmse_ls (BER ± stderr)");
        for &snr1 in &cfg.snr1_db {
            let prop = get("proposed", snr1);
            let ep = get("ep_ls", snr1);
            let single = get("single_lmmse", snr1);
            let lmmse = get("lmmse_ls", snr1);
            let (bp, be, bs, bl) = (
                prop.ber.unwrap(),
                ep.ber.unwrap(),
                single.ber.unwrap(),
                lmmse.ber.unwrap(),
            );
            let (sp, se_, ss, sl) = (
                prop.ber_stderr.unwrap(),
                ep.ber_stderr.unwrap(),
                single.ber_stderr.unwrap(),
                lmmse.ber_stderr.unwrap(),
            );
            println!(
                "  {snr1:>4}: {bp:.5}±{sp:.5} | {be:.5}±{se_:.5} | {bs:.5}±{ss:.5} | {bl:.5}±{sl:.5}"
            );
            // guard: evaluate only where the best detector accumulated >= 10
            // bit errors
            if bp * bits_per_point < 10.0 {
                println!("    (skipped: fewer than 10 accumulated bit errors)");
                continue;
            }
            let sep = |hi: f64, lo: f64, s_hi: f64, s_lo: f64| -> f64 {
                (hi - lo) / (s_hi * s_hi + s_lo * s_lo).sqrt()
            };
            let s1 = sep(be, bp, se_, sp);
            if s1 <= 3.0 {
                failures.push(format!(
                    "snr1={snr1}: proposed !< ep_ls at 3 sigma (separation {s1:.1} sigma)"
                ));
            }
            let s2 = sep(bs, be, ss, se_);
            if s2 <= 3.0 {
                failures.push(format!(
                    "snr1={snr1}: ep_ls !< single_lmmse at 3 sigma (separation {s2:.1} sigma)"
                ));
            }
            let slack = 3.0 * (ss * ss + 1.44 * sl * sl).sqrt();
            if bs > 1.2 * bl + slack {
                failures.push(format!(
                    "snr1={snr1}: single_lmmse {bs:.5} above 1.2x lmmse_ls {bl:.5}"
                ));
            }
        }
        runtime_cap(started, 900.0)?;
        if failures.is_empty() {
            Ok(())
        } else {
            Err(format!("{} violation(s): {}", failures.len(), failures.join("; ")))
        }
    })();
    report(5, "BER ordering across the SNR grid", started, result);
}

/// 6. The relative BER gap between ep_ls and the joint detector shrinks
/// monotonically as the second hop cleans up, with a 3-sigma significant
/// overall decrease.
#[test]
fn acceptance_6_diminishing_gap() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let q = Constellation::qpsk();
        let dims = Dimensions::new(64, 128, 256).unwrap();
        let s1 = snr_to_sigma_sq(10.0);
        let trials = 2500usize;
        let opts = DetectorOptions::default();
        let snr2_grid = [6.0f64, 9.0, 12.0, 20.0];

        struct GapPoint {
            gap: f64,
            var: f64,
            prop_ber: f64,
            ep_ber: f64,
        }
        let mut points = Vec::new();
        for (grid, &snr2) in snr2_grid.iter().enumerate() {
            let s2 = snr_to_sigma_sq(snr2);
            let mut prop_fracs = Vec::with_capacity(trials);
            let mut ep_fracs = Vec::with_capacity(trials);
            for t in 0..trials {
                let mut rng = trial_rng(886, grid as u64, t as u64);
                let inst = sample_instance(dims, &q, s1, s2, &mut rng);
                let (_, truth_bits) = q.hard_decision(inst.x.as_slice());
                let joint = run(&inst.z, &inst.h, &inst.c, s1, s2, &q, &opts)
                    .map_err(|e| e.to_string())?;
                let (_, jb) = q.hard_decision(&joint.x_hat);
                prop_fracs.push(
                    jb.iter().zip(&truth_bits).filter(|(a, b)| a != b).count() as f64
                        / truth_bits.len() as f64,
                );
                let (y_ls, diag) =
                    ls_second_hop(&inst.z, &inst.c).map_err(|e| e.to_string())?;
                let avg = diag.iter().sum::<f64>() / diag.len() as f64;
                let ep = ep_single_hop(
                    &y_ls,
                    &inst.h,
                    &NoiseVar::Scalar(s1 + s2 * avg),
                    &q,
                    &opts,
                )
                .map_err(|e| e.to_string())?;
                let (_, eb) = q.hard_decision(&ep.x_hat);
                ep_fracs.push(
                    eb.iter().zip(&truth_bits).filter(|(a, b)| a != b).count() as f64
                        / truth_bits.len() as f64,
                );
            }
            let tf = trials as f64;
            let p = prop_fracs.iter().sum::<f64>() / tf;
            let e = ep_fracs.iter().sum::<f64>() / tf;
            if p <= 0.0 {
                return Err(format!("snr2={snr2}: no proposed-detector errors observed"));
            }
            let var_p = prop_fracs.iter().map(|x| (x - p).powi(2)).sum::<f64>()
                / (tf - 1.0)
                / tf;
            let var_e =
                ep_fracs.iter().map(|x| (x - e).powi(2)).sum::<f64>() / (tf - 1.0) / tf;
            let cov = prop_fracs
                .iter()
                .zip(&ep_fracs)
                .map(|(x, y)| (x - p) * (y - e))
                .sum::<f64>()
                / (tf - 1.0)
                / tf;
            // delta method for g = e/p - 1 on paired samples
            let gap = e / p - 1.0;
            let var_g = var_e / (p * p) + e * e * var_p / p.powi(4)
                - 2.0 * e * cov / p.powi(3);
            points.push(GapPoint { gap, var: var_g.max(0.0), prop_ber: p, ep_ber: e });
        }
        println!("  snr2: proposed BER | ep_ls BER | relative gap ± stderr");
        for (i, &snr2) in snr2_grid.iter().enumerate() {
            let pt = &points[i];
            println!(
                "  {snr2:>4}: {:.5} | {:.5} | {:.3} ± {:.3}",
                pt.prop_ber,
                pt.ep_ber,
                pt.gap,
                pt.var.sqrt()
            );
        }
        for w in points.windows(2) {
            if w[1].gap >= w[0].gap {
                return Err(format!(
                    "gap did not decrease: {:.3} -> {:.3}",
                    w[0].gap, w[1].gap
                ));
            }
        }
        let total = points[0].gap - points[3].gap;
        let sigma = (points[0].var + points[3].var).sqrt();
        if total <= 3.0 * sigma {
            return Err(format!(
                "overall decrease {total:.3} not significant at 3 sigma ({:.3})",
                3.0 * sigma
            ));
        }
        runtime_cap(started, 900.0)
    })();
    report(6, "diminishing ep_ls gap as SNR2 grows", started, result);
}

/// 7. Message-algebra and sub-operation property suite against independent
/// dense-algebra oracles.
#[test]
fn acceptance_7_algebra_property_suite() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let mut rng = trial_rng(887, 0, 0);
        let bounds = VarianceBounds::default();
        // 10^4 randomized combine/ext round-trips at 1e-10
        for i in 0..10_000 {
            let len = 3;
            let msg = |rng: &mut rand_chacha::ChaCha12Rng| {
                GaussianMessage::new(
                    (0..len)
                        .map(|_| {
                            Complex64::new(
                                rng.sample::<f64, _>(StandardNormal) * 3.0,
                                rng.sample::<f64, _>(StandardNormal) * 3.0,
                            )
                        })
                        .collect(),
                    (0..len).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect(),
                )
                .unwrap()
            };
            let a = msg(&mut rng);
            let b = msg(&mut rng);
            let joint = a.combine(&b).map_err(|e| e.to_string())?;
            let mut guards = 0;
            let back = joint
                .extrinsic(&b, bounds, &mut guards)
                .map_err(|e| e.to_string())?;
            for j in 0..len {
                let scale = a.mean[j].norm().max(1.0);
                if (back.mean[j] - a.mean[j]).norm() > 1e-10 * scale
                    || (back.var[j] - a.var[j]).abs() > 1e-10 * a.var[j]
                {
                    return Err(format!("round-trip {i} failed at component {j}"));
                }
            }
        }

        // denoiser vs the direct four-term sum at 1e-12
        let q = Constellation::qpsk();
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
            mean /= norm;
            let var = second / norm - mean.norm_sqr();
            if (den.mean[0] - mean).norm() > 1e-12 || (den.var[0] - var).abs() > 1e-12 {
                return Err(format!("denoiser sample {i} off the four-term oracle"));
            }
        }

        // every module sub-operation vs a dense-algebra oracle on random
        // 4x3x2 instances
        for t in 0..50u64 {
            let mut rng = trial_rng(888, 0, t);
            let dims = Dimensions::new(2, 3, 4).unwrap();
            let (h, c) = sample_channels(dims, &mut rng);
            let z = DVector::from_fn(4, |i, _| {
                Complex64::new(
                    rng.sample::<f64, _>(StandardNormal),
                    0.5 * i as f64 - rng.sample::<f64, _>(StandardNormal),
                )
            });
            let msg = |rng: &mut rand_chacha::ChaCha12Rng, len: usize| {
                GaussianMessage::new(
                    (0..len)
                        .map(|_| {
                            Complex64::new(
                                rng.sample::<f64, _>(StandardNormal),
                                rng.sample::<f64, _>(StandardNormal),
                            )
                        })
                        .collect(),
                    (0..len).map(|_| 10f64.powf(rng.gen_range(-1.5..1.5))).collect(),
                )
                .unwrap()
            };
            let tol = 1e-10;

            // observation stage
            let cavity_y = msg(&mut rng, 3);
            let s2 = 0.4;
            let belief =
                observation_belief(&z, &c, s2, &cavity_y).map_err(|e| e.to_string())?;
            let mut a_ref = c.adjoint() * &c / Complex64::new(s2, 0.0);
            let mut rhs = c.adjoint() * &z / Complex64::new(s2, 0.0);
            for i in 0..3 {
                a_ref[(i, i)] += Complex64::new(1.0 / cavity_y.var[i], 0.0);
                rhs[i] += cavity_y.mean[i] / cavity_y.var[i];
            }
            let q_ref = a_ref.try_inverse().ok_or("dense inverse failed")?;
            let mean_ref = &q_ref * rhs;
            for i in 0..3 {
                if (belief.mean[i] - mean_ref[i]).norm() > tol
                    || (belief.var[i] - q_ref[(i, i)].re).abs() > tol
                {
                    return Err(format!("trial {t}: observation stage off the oracle"));
                }
            }

            // relay-noise stages (componentwise formulas)
            let t_cav = msg(&mut rng, 3);
            let y_msg = msg(&mut rng, 3);
            let s1 = 0.3;
            let bt = relay_noise_belief_t(&t_cav, &y_msg, s1).map_err(|e| e.to_string())?;
            let by = relay_noise_belief_y(&t_cav, &y_msg, s1).map_err(|e| e.to_string())?;
            for i in 0..3 {
                let v_ref = 1.0 / (1.0 / t_cav.var[i] + 1.0 / (s1 + y_msg.var[i]));
                let m_ref = (t_cav.mean[i] / t_cav.var[i]
                    + y_msg.mean[i] / (s1 + y_msg.var[i]))
                    * v_ref;
                if (bt.var[i] - v_ref).abs() > tol || (bt.mean[i] - m_ref).norm() > tol {
                    return Err(format!("trial {t}: relay-noise t-stage off the formula"));
                }
                let vy_ref = 1.0 / (1.0 / y_msg.var[i] + 1.0 / (s1 + t_cav.var[i]));
                let my_ref = (y_msg.mean[i] / y_msg.var[i]
                    + t_cav.mean[i] / (s1 + t_cav.var[i]))
                    * vy_ref;
                if (by.var[i] - vy_ref).abs() > tol || (by.mean[i] - my_ref).norm() > tol {
                    return Err(format!("trial {t}: relay-noise y-stage off the formula"));
                }
            }

            // mixing stages
            let t_msg = msg(&mut rng, 3);
            let x_cav = msg(&mut rng, 2);
            let bx = mixing_belief_x(&h, &t_msg, &x_cav).map_err(|e| e.to_string())?;
            let btf = mixing_belief_t(&h, &t_msg, &x_cav).map_err(|e| e.to_string())?;
            let d1 = DMatrix::from_diagonal(&DVector::from_vec(
                t_msg.var.iter().map(|&v| Complex64::new(1.0 / v, 0.0)).collect(),
            ));
            let mut info = h.adjoint() * &d1 * &h;
            let mut rhs2 = h.adjoint() * &d1 * DVector::from_vec(t_msg.mean.clone());
            for i in 0..2 {
                info[(i, i)] += Complex64::new(1.0 / x_cav.var[i], 0.0);
                rhs2[i] += x_cav.mean[i] / x_cav.var[i];
            }
            let q_x = info.try_inverse().ok_or("dense inverse failed")?;
            let x_ref = &q_x * rhs2;
            for i in 0..2 {
                if (bx.mean[i] - x_ref[i]).norm() > tol
                    || (bx.var[i] - q_x[(i, i)].re).abs() > tol
                {
                    return Err(format!("trial {t}: mixing x-stage off the oracle"));
                }
            }
            let t_ref = &h * &x_ref;
            let cov_t = &h * &q_x * h.adjoint();
            for i in 0..3 {
                if (btf.mean[i] - t_ref[i]).norm() > tol
                    || (btf.var[i] - cov_t[(i, i)].re).abs() > tol
                {
                    return Err(format!("trial {t}: mixing t-stage off the oracle"));
                }
            }

            // baselines
            let (y_ls, diag) = ls_second_hop(&z, &c).map_err(|e| e.to_string())?;
            let gram_inv = (c.adjoint() * &c).try_inverse().ok_or("singular gram")?;
            let y_ref = &gram_inv * c.adjoint() * &z;
            if (y_ls.clone() - y_ref).norm() > tol {
                return Err(format!("trial {t}: LS second hop off the oracle"));
            }
            for i in 0..3 {
                if (diag[i] - gram_inv[(i, i)].re).abs() > tol {
                    return Err(format!("trial {t}: LS error diagonal off the oracle"));
                }
            }
        }
        runtime_cap(started, 10.0)
    })();
    report(7, "message-algebra and sub-operation oracles", started, result);
}

/// 8. Byte-identical CSV across repeated runs and worker counts.
#[test]
fn acceptance_8_determinism() {
    let started = Instant::now();
    let result = (|| -> Result<(), String> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(
            &parse_str(
                "L=8\nM=12\nN=16\ntrials=12\niters=6\nseed=889\nsnr1=6,10\n\
                 snr2_offset_db=-3\nalgos=proposed,ep_ls,single_lmmse,lmmse_ls,se_predictor\n",
            )
            .unwrap(),
        )
        .map_err(|e| e.to_string())?;
        cfg.workers = 1;
        let a = render_csv(&cfg, &run_experiment(&cfg).map_err(|e| e.to_string())?.rows);
        let b = render_csv(&cfg, &run_experiment(&cfg).map_err(|e| e.to_string())?.rows);
        if a != b {
            return Err("two runs of one config differ".into());
        }
        cfg.workers = 4;
        let c = render_csv(&cfg, &run_experiment(&cfg).map_err(|e| e.to_string())?.rows);
        if a != c {
            return Err("worker count changed the CSV bytes".into());
        }
        println!("  {} identical bytes across reruns and worker counts", a.len());
        runtime_cap(started, 60.0)
    })();
    report(8, "byte-identical CSV determinism", started, result);
}
