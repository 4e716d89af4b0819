//! Monte-Carlo experiment driver.
//!
//! Every grid point draws `trials` independent instances; all detectors of a
//! run consume the same instance stream, so comparisons are paired and
//! adding an algorithm never changes anyone else's numbers. Trials run on a
//! worker pool but are reduced in trial order, making the output independent
//! of scheduling; the state-evolution predictor runs once per grid point.

use std::time::Instant;

use detect_core::constellation::Constellation;
use detect_core::detector::{posterior_mse, DetectorOptions};
use detect_core::messages::VarianceBounds;
use detect_core::registry::DetectorRegistry;
use detect_core::se::{eigen_spectra, mp_spectra, se_run, SeOptions};
use detect_core::system::{sample_channels, sample_instance, snr_to_sigma_sq, trial_rng};
use thiserror::Error;

use crate::config::{ExperimentConfig, SpectrumSource};
use crate::metrics::ber_stderr;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("configuration error: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("worker pool construction failed: {0}")]
    Pool(String),
}

/// Aggregated results of one (algorithm, grid point) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    pub snr1_db: f64,
    pub snr2_db: f64,
    /// Trials that produced an estimate (excluded failures are counted
    /// separately).
    pub trials: usize,
    pub failures: usize,
    pub ber: Option<f64>,
    pub ber_stderr: Option<f64>,
    pub mse: Option<f64>,
    /// Highest iteration index that produced an estimate.
    pub iters: usize,
    /// Per-iteration mean MSE, `None` past `iters`.
    pub mse_per_iteration: Vec<Option<f64>>,
    pub safeguards: u64,
    pub wall_time_ms: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// True when some grid point lost more than 10% of its trials.
    pub excessive_failures: bool,
}

struct TrialOutcome {
    bit_errors: u64,
    bits: u64,
    mse: f64,
    per_iter_mse: Vec<f64>,
    safeguards: u64,
    iterations_run: usize,
    elapsed_ms: u64,
}

fn detector_options(config: &ExperimentConfig) -> DetectorOptions {
    DetectorOptions {
        max_iterations: config.iterations,
        bounds: VarianceBounds::new(config.v_min, config.v_max),
        damping: config.damping,
        stop_tol: config.stop_tol,
    }
}

/// Run the full sweep described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, DriverError> {
    config.validate()?;
    let prior = Constellation::qpsk();
    let registry = DetectorRegistry::with_builtins();
    let detector_names: Vec<String> = config
        .algos
        .iter()
        .filter(|a| a.as_str() != "se_predictor")
        .cloned()
        .collect();
    let want_se = config.algos.iter().any(|a| a == "se_predictor");
    let options = detector_options(config);

    let threads = if config.workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        config.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DriverError::Pool(e.to_string()))?;

    let mut rows = Vec::new();
    let mut excessive = false;

    for (grid_index, &snr1_db) in config.snr1_db.iter().enumerate() {
        let snr2_db = config.snr2.resolve(snr1_db);
        let sigma1_sq = snr_to_sigma_sq(snr1_db);
        let sigma2_sq = snr_to_sigma_sq(snr2_db);

        // trial -> per-algorithm outcome, reduced in trial order
        let trial_results: Vec<Vec<Result<TrialOutcome, ()>>> = pool.install(|| {
            use rayon::prelude::*;
            (0..config.trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let mut rng =
                        trial_rng(config.master_seed, grid_index as u64, trial);
                    let inst = sample_instance(
                        config.dims, &prior, sigma1_sq, sigma2_sq, &mut rng,
                    );
                    let truth: Vec<_> = inst.x.iter().copied().collect();
                    let (_, truth_bits) = prior.hard_decision(&truth);
                    detector_names
                        .iter()
                        .map(|name| {
                            let det = registry.get(name).expect("validated name");
                            let start = Instant::now();
                            let result =
                                det.detect(&inst.observation(), &prior, &options);
                            let elapsed_ms = start.elapsed().as_millis() as u64;
                            match result {
                                Ok(out) => {
                                    let (_, bits) = prior.hard_decision(&out.x_hat);
                                    let errors = bits
                                        .iter()
                                        .zip(&truth_bits)
                                        .filter(|(a, b)| a != b)
                                        .count();
                                    let per_iter_mse: Vec<f64> = out
                                        .per_iteration
                                        .iter()
                                        .map(|s| posterior_mse(&s.x_hat, &truth))
                                        .collect();
                                    Ok(TrialOutcome {
                                        bit_errors: errors as u64,
                                        bits: bits.len() as u64,
                                        mse: posterior_mse(&out.x_hat, &truth),
                                        per_iter_mse,
                                        safeguards: out.safeguard_count,
                                        iterations_run: out.iterations_run.max(1),
                                        elapsed_ms,
                                    })
                                }
                                Err(failure) => {
                                    log::warn!(
                                        "trial {trial} snr1 {snr1_db} {name}: {failure}"
                                    );
                                    Err(())
                                }
                            }
                        })
                        .collect()
                })
                .collect()
        });

        for (a_idx, name) in detector_names.iter().enumerate() {
            let mut ok_trials = 0usize;
            let mut failures = 0usize;
            let mut bit_errors = 0u64;
            let mut bits = 0u64;
            let mut mse_sum = 0.0;
            let mut safeguards = 0u64;
            let mut max_iters = 0usize;
            let mut per_iter_sums = vec![0.0; config.iterations];
            let mut elapsed_ms = 0u64;
            for trial in &trial_results {
                match &trial[a_idx] {
                    Ok(out) => {
                        ok_trials += 1;
                        bit_errors += out.bit_errors;
                        bits += out.bits;
                        mse_sum += out.mse;
                        safeguards += out.safeguards;
                        max_iters = max_iters.max(out.iterations_run);
                        elapsed_ms += out.elapsed_ms;
                        // a converged run keeps its final value for the
                        // remaining iterations
                        let last = *out.per_iter_mse.last().unwrap_or(&out.mse);
                        for (k, slot) in per_iter_sums.iter_mut().enumerate() {
                            *slot += out.per_iter_mse.get(k).copied().unwrap_or(last);
                        }
                    }
                    Err(()) => failures += 1,
                }
            }
            let ber_value = if bits > 0 {
                Some(bit_errors as f64 / bits as f64)
            } else {
                None
            };
            let row = ResultRow {
                algorithm: name.clone(),
                snr1_db,
                snr2_db,
                trials: ok_trials,
                failures,
                ber: ber_value,
                ber_stderr: ber_value.map(|b| ber_stderr(b, bits)),
                mse: (ok_trials > 0).then(|| mse_sum / ok_trials as f64),
                iters: max_iters,
                mse_per_iteration: (0..config.iterations)
                    .map(|k| {
                        (ok_trials > 0 && k < max_iters)
                            .then(|| per_iter_sums[k] / ok_trials as f64)
                    })
                    .collect(),
                safeguards,
                wall_time_ms: if config.timing { elapsed_ms } else { 0 },
                seed: config.master_seed,
            };
            if failures * 10 > config.trials {
                excessive = true;
            }
            rows.push(row);
        }

        if want_se {
            let start = Instant::now();
            let spectra = match config.se_spectrum {
                SpectrumSource::Empirical => {
                    // the same channels trial 0 sees: sample_instance draws
                    // channels first from the trial stream
                    let mut rng = trial_rng(config.master_seed, grid_index as u64, 0);
                    let (h, c) = sample_channels(config.dims, &mut rng);
                    eigen_spectra(&h, &c).expect("hermitian eigensolve")
                }
                SpectrumSource::MarchenkoPastur => mp_spectra(config.dims),
            };
            let se_options = SeOptions {
                averaging: config.se_average,
                bounds: VarianceBounds::new(config.v_min, config.v_max),
            };
            let trace = se_run(
                &spectra,
                sigma1_sq,
                sigma2_sq,
                &prior,
                config.iterations,
                &se_options,
            );
            let mse_trace = trace.mse_trace();
            rows.push(ResultRow {
                algorithm: "se_predictor".to_string(),
                snr1_db,
                snr2_db,
                trials: 0,
                failures: 0,
                ber: None,
                ber_stderr: None,
                mse: mse_trace.last().copied(),
                iters: mse_trace.len(),
                mse_per_iteration: (0..config.iterations)
                    .map(|k| mse_trace.get(k).copied())
                    .collect(),
                safeguards: trace.clamp_count,
                wall_time_ms: if config.timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
                seed: config.master_seed,
            });
        }
    }

    rows.sort_by(|a, b| {
        a.algorithm
            .cmp(&b.algorithm)
            .then(a.snr1_db.partial_cmp(&b.snr1_db).expect("finite SNR"))
            .then(a.snr2_db.partial_cmp(&b.snr2_db).expect("finite SNR"))
    });

    Ok(ExperimentOutput { rows, excessive_failures: excessive })
}
