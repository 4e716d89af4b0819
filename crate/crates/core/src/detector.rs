//! The iterative joint detector for the dual-hop chain.
//!
//! The posterior factorizes along a chain of four factor nodes — the
//! observation `p(z|y)`, the relay noise bridge `p(y|t)`, the mixing
//! constraint `t = Hx`, and the prior `p(x)` — with componentwise Gaussian
//! messages flowing both ways between them. Each iteration is one back pass
//! (observation toward prior) followed by one forward pass, and every belief
//! hands only its extrinsic part to the next stage. The two mixing-stage
//! solves and the observation solve are Hermitian positive-definite systems;
//! their inverse diagonals provide the per-component belief variances.
//!
//! Messages on `x` have length `L`, messages on `t` and `y` length `M`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::constellation::Prior;
use crate::linalg::{
    hermitian_gram, weighted_adjoint_apply, weighted_gram, HpdFactor, LinalgError,
};
use crate::messages::{GaussianMessage, MessageError, VarianceBounds};

/// Knobs of a detector run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOptions {
    /// Iteration budget.
    pub max_iterations: usize,
    /// Variance floor/ceiling for extrinsic safeguarding.
    pub bounds: VarianceBounds,
    /// Damping factor in (0, 1]; 1 disables damping. Applied to extrinsic
    /// updates, geometrically on variances and linearly on means.
    pub damping: f64,
    /// Early stop once the per-component squared change of the estimate
    /// falls below this; 0 disables early stopping.
    pub stop_tol: f64,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            bounds: VarianceBounds::default(),
            damping: 1.0,
            stop_tol: 1e-8,
        }
    }
}

impl DetectorOptions {
    pub fn with_iterations(mut self, k: usize) -> Self {
        self.max_iterations = k;
        self
    }

    pub fn without_early_stop(mut self) -> Self {
        self.stop_tol = 0.0;
        self
    }
}

/// One executed sub-operation of the message schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    ObservationBelief,
    ExtrinsicYBack,
    RelayNoiseBeliefT,
    ExtrinsicTBack,
    MixingBeliefX,
    ExtrinsicXBack,
    PriorDenoise,
    ExtrinsicXFwd,
    MixingBeliefT,
    ExtrinsicTFwd,
    RelayNoiseBeliefY,
    ExtrinsicYFwd,
}

/// The schedule of one full iteration, in execution order.
pub const ITERATION_SCHEDULE: [Step; 12] = [
    Step::ObservationBelief,
    Step::ExtrinsicYBack,
    Step::RelayNoiseBeliefT,
    Step::ExtrinsicTBack,
    Step::MixingBeliefX,
    Step::ExtrinsicXBack,
    Step::PriorDenoise,
    Step::ExtrinsicXFwd,
    Step::MixingBeliefT,
    Step::ExtrinsicTFwd,
    Step::RelayNoiseBeliefY,
    Step::ExtrinsicYFwd,
];

/// All twelve message registers plus the latest projected beliefs.
///
/// `_fwd` messages flow from the prior toward the observation, `_back`
/// messages the other way; both directions are kept for every variable node.
#[derive(Debug, Clone)]
pub struct DetectorState {
    /// Message on `x` from the prior side (length L).
    pub x_fwd: GaussianMessage,
    /// Message on `x` toward the prior (length L).
    pub x_back: GaussianMessage,
    /// Message on `t` from the mixing side (length M).
    pub t_fwd: GaussianMessage,
    /// Message on `t` toward the mixing node (length M).
    pub t_back: GaussianMessage,
    /// Message on `y` from the relay-noise side (length M).
    pub y_fwd: GaussianMessage,
    /// Message on `y` toward the relay-noise node (length M).
    pub y_back: GaussianMessage,
    /// Belief on `y` at the observation node (back pass).
    pub y_belief_back: GaussianMessage,
    /// Belief on `t` at the relay-noise node (back pass).
    pub t_belief_back: GaussianMessage,
    /// Belief on `x` at the mixing node (back pass).
    pub x_belief_back: GaussianMessage,
    /// Denoised belief on `x` at the prior node (forward pass).
    pub x_belief_fwd: GaussianMessage,
    /// Belief on `t` at the mixing node (forward pass).
    pub t_belief_fwd: GaussianMessage,
    /// Belief on `y` at the relay-noise node (forward pass).
    pub y_belief_fwd: GaussianMessage,
    /// Completed iterations.
    pub iteration: usize,
}

/// Fresh state: all forward means zero, all forward variances one.
pub fn init_state(source: usize, relay: usize) -> DetectorState {
    DetectorState {
        x_fwd: GaussianMessage::flat(source, 1.0),
        x_back: GaussianMessage::flat(source, 1.0),
        t_fwd: GaussianMessage::flat(relay, 1.0),
        t_back: GaussianMessage::flat(relay, 1.0),
        y_fwd: GaussianMessage::flat(relay, 1.0),
        y_back: GaussianMessage::flat(relay, 1.0),
        y_belief_back: GaussianMessage::flat(relay, 1.0),
        t_belief_back: GaussianMessage::flat(relay, 1.0),
        x_belief_back: GaussianMessage::flat(source, 1.0),
        x_belief_fwd: GaussianMessage::flat(source, 1.0),
        t_belief_fwd: GaussianMessage::flat(relay, 1.0),
        y_belief_fwd: GaussianMessage::flat(relay, 1.0),
        iteration: 0,
    }
}

/// Snapshot of the symbol estimate after one forward pass.
#[derive(Debug, Clone)]
pub struct IterationSnapshot {
    pub x_hat: Vec<Complex64>,
    /// Mean of the denoised posterior variances, the detector's own
    /// per-iteration accuracy estimate.
    pub mean_posterior_var: f64,
}

/// Output of a detector run.
#[derive(Debug, Clone)]
pub struct DetectorResult {
    /// Final posterior-mean estimate.
    pub x_hat: Vec<Complex64>,
    pub per_iteration: Vec<IterationSnapshot>,
    /// Extrinsic safeguard activations plus denoiser fallbacks.
    pub safeguard_count: u64,
    pub iterations_run: usize,
    /// Executed sub-operations, twelve per completed iteration.
    pub schedule: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FailureKind {
    #[error(transparent)]
    Solve(#[from] LinalgError),
    #[error(transparent)]
    Message(#[from] MessageError),
    #[error("non-finite values in the message registers")]
    NonFinite,
}

/// A detector run that could not complete, carrying the iteration it died in
/// and the last valid estimate if one exists.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("detector failed at iteration {iteration}: {kind}")]
pub struct DetectorFailure {
    pub iteration: usize,
    pub kind: FailureKind,
    pub last_estimate: Option<Vec<Complex64>>,
}

/// Belief on the relay signal `y` at the observation node: the Gaussian
/// likelihood of `z` combined with the cavity message, via the solve
/// `(C^H C/σ2² + Diag(1 ⊘ v)) ŷ = C^H z/σ2² + m ⊘ v`.
pub fn observation_belief(
    z: &DVector<Complex64>,
    c: &DMatrix<Complex64>,
    sigma2_sq: f64,
    cavity: &GaussianMessage,
) -> Result<GaussianMessage, LinalgError> {
    let gram = hermitian_gram(c);
    let chz = c.adjoint() * z;
    observation_belief_pre(&gram, &chz, sigma2_sq, cavity)
}

fn observation_belief_pre(
    gram: &DMatrix<Complex64>,
    chz: &DVector<Complex64>,
    sigma2_sq: f64,
    cavity: &GaussianMessage,
) -> Result<GaussianMessage, LinalgError> {
    debug_assert!(sigma2_sq > 0.0);
    let m = gram.nrows();
    debug_assert_eq!(cavity.len(), m);
    let inv_s2 = Complex64::new(1.0 / sigma2_sq, 0.0);
    let mut a = gram * inv_s2;
    let mut rhs = chz * inv_s2;
    for i in 0..m {
        a[(i, i)] += Complex64::new(1.0 / cavity.var[i], 0.0);
        rhs[i] += cavity.mean[i] / cavity.var[i];
    }
    let factor = HpdFactor::new(a)?;
    let mean = factor.solve(&rhs);
    let var = factor.inverse_diag();
    Ok(GaussianMessage { mean: mean.iter().copied().collect(), var })
}

/// Belief on `t` at the relay-noise node (back pass): the message on `y`
/// seen through the noise bridge widens by `σ1²` and combines with the
/// cavity on `t`.
pub fn relay_noise_belief_t(
    t_cavity: &GaussianMessage,
    y_msg: &GaussianMessage,
    sigma1_sq: f64,
) -> Result<GaussianMessage, MessageError> {
    let widened = GaussianMessage::new(
        y_msg.mean.clone(),
        y_msg.var.iter().map(|v| v + sigma1_sq).collect(),
    )?;
    t_cavity.combine(&widened)
}

/// Belief on `y` at the relay-noise node (forward pass): mirror image of
/// [`relay_noise_belief_t`].
pub fn relay_noise_belief_y(
    t_msg: &GaussianMessage,
    y_cavity: &GaussianMessage,
    sigma1_sq: f64,
) -> Result<GaussianMessage, MessageError> {
    let widened = GaussianMessage::new(
        t_msg.mean.clone(),
        t_msg.var.iter().map(|v| v + sigma1_sq).collect(),
    )?;
    widened.combine(y_cavity)
}

fn mixing_solution(
    h: &DMatrix<Complex64>,
    t_msg: &GaussianMessage,
    x_cavity: &GaussianMessage,
) -> Result<(HpdFactor, DVector<Complex64>), LinalgError> {
    let l = h.ncols();
    debug_assert_eq!(t_msg.len(), h.nrows());
    debug_assert_eq!(x_cavity.len(), l);
    let weights: Vec<f64> = t_msg.var.iter().map(|v| 1.0 / v).collect();
    let mut a = weighted_gram(h, &weights);
    let mut rhs = weighted_adjoint_apply(h, &weights, &t_msg.mean);
    for i in 0..l {
        a[(i, i)] += Complex64::new(1.0 / x_cavity.var[i], 0.0);
        rhs[i] += x_cavity.mean[i] / x_cavity.var[i];
    }
    let factor = HpdFactor::new(a)?;
    let x = factor.solve(&rhs);
    Ok((factor, x))
}

/// Belief on `x` at the mixing node `t = Hx` (back pass).
pub fn mixing_belief_x(
    h: &DMatrix<Complex64>,
    t_msg: &GaussianMessage,
    x_cavity: &GaussianMessage,
) -> Result<GaussianMessage, LinalgError> {
    let (factor, x) = mixing_solution(h, t_msg, x_cavity)?;
    let var = factor.inverse_diag();
    Ok(GaussianMessage { mean: x.iter().copied().collect(), var })
}

/// Belief on `t` at the mixing node (forward pass): the solve repeats with
/// the refreshed cavity, then maps through `H`, with variances from the
/// congruence diagonal `diag(H Q H^H)`.
pub fn mixing_belief_t(
    h: &DMatrix<Complex64>,
    t_msg: &GaussianMessage,
    x_cavity: &GaussianMessage,
) -> Result<GaussianMessage, LinalgError> {
    let (factor, x) = mixing_solution(h, t_msg, x_cavity)?;
    let mean = h * x;
    let var = factor.congruence_diag(h);
    Ok(GaussianMessage { mean: mean.iter().copied().collect(), var })
}

/// Mean squared error per component, `‖x̂ − x‖²/L`.
pub fn posterior_mse(x_hat: &[Complex64], x_true: &[Complex64]) -> f64 {
    assert_eq!(x_hat.len(), x_true.len(), "estimate/truth lengths differ");
    let sum: f64 = x_hat.iter().zip(x_true).map(|(a, b)| (a - b).norm_sqr()).sum();
    sum / x_hat.len() as f64
}

fn damped(new: GaussianMessage, old: &GaussianMessage, rho: f64) -> GaussianMessage {
    if rho >= 1.0 {
        return new;
    }
    let mean = new
        .mean
        .iter()
        .zip(&old.mean)
        .map(|(n, o)| n * rho + o * (1.0 - rho))
        .collect();
    let var = new
        .var
        .iter()
        .zip(&old.var)
        .map(|(n, o)| (rho * n.ln() + (1.0 - rho) * o.ln()).exp())
        .collect();
    GaussianMessage { mean, var }
}

fn all_finite(msg: &GaussianMessage) -> bool {
    msg.mean.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        && msg.var.iter().all(|v| v.is_finite())
}

/// Run the joint detector; see [`run_observed`] for the variant that exposes
/// the state after each half-pass.
pub fn run<P: Prior + ?Sized>(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
    prior: &P,
    options: &DetectorOptions,
) -> Result<DetectorResult, DetectorFailure> {
    run_observed(z, h, c, sigma1_sq, sigma2_sq, prior, options, |_| {})
}

/// Run the joint detector, invoking `observer` with the state after every
/// completed half-pass.
#[allow(clippy::too_many_arguments)]
pub fn run_observed<P, F>(
    z: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
    prior: &P,
    options: &DetectorOptions,
    mut observer: F,
) -> Result<DetectorResult, DetectorFailure>
where
    P: Prior + ?Sized,
    F: FnMut(&DetectorState),
{
    let source = h.ncols();
    let relay = h.nrows();
    assert_eq!(c.ncols(), relay, "C columns must match relay antennas");
    assert_eq!(z.len(), c.nrows(), "observation length must match C rows");
    assert!(
        source <= relay && relay <= c.nrows(),
        "dimensions must satisfy L <= M <= N"
    );
    assert!(options.max_iterations >= 1, "need at least one iteration");
    assert!(
        options.damping > 0.0 && options.damping <= 1.0,
        "damping must lie in (0, 1]"
    );
    let bounds = options.bounds;
    let rho = options.damping;
    // zero noise is admitted only through the variance floor
    let s1 = sigma1_sq.max(bounds.v_min);
    let s2 = sigma2_sq.max(bounds.v_min);

    let gram2 = hermitian_gram(c);
    let chz = c.adjoint() * z;

    let mut state = init_state(source, relay);
    let mut safeguards = 0u64;
    let mut schedule = Vec::with_capacity(12 * options.max_iterations);
    let mut per_iteration: Vec<IterationSnapshot> = Vec::new();

    let fail = |iteration: usize,
                kind: FailureKind,
                snaps: &[IterationSnapshot]| DetectorFailure {
        iteration,
        kind,
        last_estimate: snaps.last().map(|s| s.x_hat.clone()),
    };

    for k in 1..=options.max_iterations {
        // ---- back pass: observation -> relay noise -> mixing ----
        state.y_belief_back = observation_belief_pre(&gram2, &chz, s2, &state.y_fwd)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        schedule.push(Step::ObservationBelief);

        let y_back = state
            .y_belief_back
            .extrinsic(&state.y_fwd, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        state.y_back = damped(y_back, &state.y_back, rho);
        schedule.push(Step::ExtrinsicYBack);

        state.t_belief_back = relay_noise_belief_t(&state.t_fwd, &state.y_back, s1)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        schedule.push(Step::RelayNoiseBeliefT);

        let t_back = state
            .t_belief_back
            .extrinsic(&state.t_fwd, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        state.t_back = damped(t_back, &state.t_back, rho);
        schedule.push(Step::ExtrinsicTBack);

        state.x_belief_back = mixing_belief_x(h, &state.t_back, &state.x_fwd)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        schedule.push(Step::MixingBeliefX);

        let x_back = state
            .x_belief_back
            .extrinsic(&state.x_fwd, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        state.x_back = damped(x_back, &state.x_back, rho);
        schedule.push(Step::ExtrinsicXBack);

        observer(&state);

        // ---- forward pass: prior -> mixing -> relay noise ----
        let denoised = prior.denoise(&state.x_back.mean, &state.x_back.var, bounds.v_min);
        safeguards += denoised.fallbacks;
        state.x_belief_fwd = GaussianMessage { mean: denoised.mean, var: denoised.var };
        schedule.push(Step::PriorDenoise);

        if !all_finite(&state.x_belief_fwd) {
            return Err(fail(k, FailureKind::NonFinite, &per_iteration));
        }
        let mean_posterior_var =
            state.x_belief_fwd.var.iter().sum::<f64>() / source as f64;
        let converged = per_iteration.last().is_some_and(|prev| {
            options.stop_tol > 0.0
                && posterior_mse(&state.x_belief_fwd.mean, &prev.x_hat) < options.stop_tol
        });
        per_iteration.push(IterationSnapshot {
            x_hat: state.x_belief_fwd.mean.clone(),
            mean_posterior_var,
        });

        let x_fwd = state
            .x_belief_fwd
            .extrinsic(&state.x_back, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        state.x_fwd = damped(x_fwd, &state.x_fwd, rho);
        schedule.push(Step::ExtrinsicXFwd);

        state.t_belief_fwd = mixing_belief_t(h, &state.t_back, &state.x_fwd)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        schedule.push(Step::MixingBeliefT);

        let t_fwd = state
            .t_belief_fwd
            .extrinsic(&state.t_back, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        state.t_fwd = damped(t_fwd, &state.t_fwd, rho);
        schedule.push(Step::ExtrinsicTFwd);

        state.y_belief_fwd = relay_noise_belief_y(&state.t_fwd, &state.y_back, s1)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        schedule.push(Step::RelayNoiseBeliefY);

        let y_fwd = state
            .y_belief_fwd
            .extrinsic(&state.y_back, bounds, &mut safeguards)
            .map_err(|e| fail(k, e.into(), &per_iteration))?;
        state.y_fwd = damped(y_fwd, &state.y_fwd, rho);
        schedule.push(Step::ExtrinsicYFwd);

        state.iteration = k;
        observer(&state);

        for msg in [&state.x_fwd, &state.t_fwd, &state.y_fwd] {
            if !all_finite(msg) {
                return Err(fail(k, FailureKind::NonFinite, &per_iteration));
            }
        }

        if converged {
            break;
        }
    }

    let last = per_iteration.last().expect("at least one iteration ran");
    Ok(DetectorResult {
        x_hat: last.x_hat.clone(),
        iterations_run: state.iteration,
        per_iteration,
        safeguard_count: safeguards,
        schedule,
    })
}
