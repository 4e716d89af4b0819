//! Runtime-selectable detector registry.
//!
//! Every detector variant sits behind the [`Detector`] trait and registers
//! under a stable name, so harnesses pick algorithms from configuration
//! strings. One-shot linear estimators adapt into the same shape as the
//! iterative detectors by reporting a single iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::baselines::{
    ep_plus_ls, lmmse_plus_ls_with, single_lmmse, LmmseLsOptions,
};
use crate::constellation::Constellation;
use crate::detector::{
    run, DetectorFailure, DetectorOptions, DetectorResult, FailureKind, IterationSnapshot,
};
use crate::linalg::{hermitian_gram, hermitian_outer, HpdFactor};
use crate::system::SystemInstance;

/// What a detector is allowed to see: the observation and the channel state,
/// never the transmitted symbols.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub z: &'a DVector<Complex64>,
    pub h: &'a DMatrix<Complex64>,
    pub c: &'a DMatrix<Complex64>,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl SystemInstance {
    pub fn observation(&self) -> Observation<'_> {
        Observation {
            z: &self.z,
            h: &self.h,
            c: &self.c,
            sigma1_sq: self.sigma1_sq,
            sigma2_sq: self.sigma2_sq,
        }
    }
}

/// A symbol detector selectable by name at runtime.
pub trait Detector: Send + Sync {
    fn name(&self) -> &'static str;

    fn detect(
        &self,
        obs: &Observation<'_>,
        prior: &Constellation,
        options: &DetectorOptions,
    ) -> Result<DetectorResult, DetectorFailure>;
}

/// The iterative joint detector over both hops.
pub struct JointDetector;

impl Detector for JointDetector {
    fn name(&self) -> &'static str {
        "proposed"
    }

    fn detect(
        &self,
        obs: &Observation<'_>,
        prior: &Constellation,
        options: &DetectorOptions,
    ) -> Result<DetectorResult, DetectorFailure> {
        run(obs.z, obs.h, obs.c, obs.sigma1_sq, obs.sigma2_sq, prior, options)
    }
}

fn one_shot_result(x_hat: DVector<Complex64>, mean_posterior_var: f64) -> DetectorResult {
    let x_hat: Vec<Complex64> = x_hat.iter().copied().collect();
    DetectorResult {
        per_iteration: vec![IterationSnapshot { x_hat: x_hat.clone(), mean_posterior_var }],
        x_hat,
        safeguard_count: 0,
        iterations_run: 1,
        schedule: Vec::new(),
    }
}

fn baseline_failure(e: crate::baselines::BaselineFailure) -> DetectorFailure {
    let kind = match e {
        crate::baselines::BaselineFailure::RankDeficient(le)
        | crate::baselines::BaselineFailure::Solve(le) => FailureKind::Solve(le),
    };
    DetectorFailure { iteration: 0, kind, last_estimate: None }
}

/// LS inversion of the second hop followed by LMMSE on the first.
#[derive(Default)]
pub struct LmmseLsDetector {
    pub options: LmmseLsOptions,
}

impl Detector for LmmseLsDetector {
    fn name(&self) -> &'static str {
        "lmmse_ls"
    }

    fn detect(
        &self,
        obs: &Observation<'_>,
        _prior: &Constellation,
        _options: &DetectorOptions,
    ) -> Result<DetectorResult, DetectorFailure> {
        let x_hat = lmmse_plus_ls_with(
            obs.z,
            obs.h,
            obs.c,
            obs.sigma1_sq,
            obs.sigma2_sq,
            self.options,
        )
        .map_err(baseline_failure)?;
        // posterior variance of the LMMSE estimate under unit prior:
        // diag(I - H^H F^{-1} H) with F the filtered covariance
        let relay = obs.h.nrows();
        let mut f = hermitian_outer(obs.h);
        if self.options.whiten_error {
            let gram = hermitian_gram(obs.c);
            let diag = HpdFactor::new(gram).map_err(|e| baseline_failure(e.into()))?
                .inverse_diag();
            let avg = diag.iter().sum::<f64>() / relay as f64;
            for i in 0..relay {
                f[(i, i)] += Complex64::new(obs.sigma1_sq + obs.sigma2_sq * avg, 0.0);
            }
        } else {
            let gram = hermitian_gram(obs.c);
            let inv = HpdFactor::new(gram).map_err(|e| baseline_failure(e.into()))?.inverse();
            f += inv * Complex64::new(obs.sigma2_sq, 0.0);
            for i in 0..relay {
                f[(i, i)] += Complex64::new(obs.sigma1_sq, 0.0);
            }
        }
        let factor = HpdFactor::new(f).map_err(|e| baseline_failure(e.into()))?;
        let gains = factor.congruence_diag(&obs.h.adjoint());
        let source = obs.h.ncols() as f64;
        let mean_var =
            gains.iter().map(|&g| (1.0 - g).max(0.0)).sum::<f64>() / source;
        Ok(one_shot_result(x_hat, mean_var))
    }
}

/// One LMMSE over the compound channel with whitened noise.
pub struct SingleLmmseDetector;

impl Detector for SingleLmmseDetector {
    fn name(&self) -> &'static str {
        "single_lmmse"
    }

    fn detect(
        &self,
        obs: &Observation<'_>,
        _prior: &Constellation,
        _options: &DetectorOptions,
    ) -> Result<DetectorResult, DetectorFailure> {
        let x_hat = single_lmmse(obs.z, obs.h, obs.c, obs.sigma1_sq, obs.sigma2_sq)
            .map_err(baseline_failure)?;
        let g = obs.c * obs.h;
        let sigma_eq =
            crate::baselines::compound_noise_power(obs.c, obs.sigma1_sq, obs.sigma2_sq);
        let dest = g.nrows();
        let mut a = hermitian_outer(&g);
        for i in 0..dest {
            a[(i, i)] += Complex64::new(sigma_eq.max(1e-15), 0.0);
        }
        let factor = HpdFactor::new(a).map_err(|e| baseline_failure(e.into()))?;
        let gains = factor.congruence_diag(&g.adjoint());
        let source = g.ncols() as f64;
        let mean_var = gains.iter().map(|&v| (1.0 - v).max(0.0)).sum::<f64>() / source;
        Ok(one_shot_result(x_hat, mean_var))
    }
}

/// LS inversion of the second hop followed by single-hop EP on the first.
pub struct EpLsDetector;

impl Detector for EpLsDetector {
    fn name(&self) -> &'static str {
        "ep_ls"
    }

    fn detect(
        &self,
        obs: &Observation<'_>,
        prior: &Constellation,
        options: &DetectorOptions,
    ) -> Result<DetectorResult, DetectorFailure> {
        ep_plus_ls(obs.z, obs.h, obs.c, obs.sigma1_sq, obs.sigma2_sq, prior, options)
    }
}

/// Name-keyed detector collection.
pub struct DetectorRegistry {
    entries: Vec<Box<dyn Detector>>,
}

impl DetectorRegistry {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Registry with the four built-in detectors.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(JointDetector));
        reg.register(Box::new(LmmseLsDetector::default()));
        reg.register(Box::new(SingleLmmseDetector));
        reg.register(Box::new(EpLsDetector));
        reg
    }

    /// Register a detector; a duplicate name replaces the earlier entry.
    pub fn register(&mut self, detector: Box<dyn Detector>) {
        self.entries.retain(|d| d.name() != detector.name());
        self.entries.push(detector);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Detector> {
        self.entries.iter().find(|d| d.name() == name).map(|d| d.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|d| d.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
