//! Random dual-hop transmission instances.
//!
//! One instance realizes the chain `t = Hx`, `y = t + w`, `z = Cy + n` with
//! uncorrelated Rayleigh channels. Entries of `H` have variance `1/L` and
//! entries of `C` variance `1/M`, so the per-antenna received signal power is
//! about one at each hop and `SNR_i = 1/σ_i²`. Trial seeds derive from
//! `(master_seed, grid_index, trial_index)` through a fixed SplitMix64 chain,
//! making every instance stream reproducible and independent of how many
//! algorithms consume it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::constellation::Constellation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("dimensions must satisfy 0 < source <= relay <= dest, got {0}x{1}x{2}")]
    InvalidDimensions(usize, usize, usize),
    #[error("symbol count must be positive")]
    NoSymbols,
}

/// Antenna counts of the chain: source `L`, relay `M`, destination `N`,
/// constrained to `0 < L <= M <= N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    pub source: usize,
    pub relay: usize,
    pub dest: usize,
}

impl Dimensions {
    pub fn new(source: usize, relay: usize, dest: usize) -> Result<Self, SystemError> {
        if source == 0 || source > relay || relay > dest {
            return Err(SystemError::InvalidDimensions(source, relay, dest));
        }
        Ok(Self { source, relay, dest })
    }
}

/// One realized transmission with all hidden intermediates retained.
#[derive(Debug, Clone)]
pub struct SystemInstance {
    pub h: DMatrix<Complex64>,
    pub c: DMatrix<Complex64>,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    /// True transmitted symbols.
    pub x: DVector<Complex64>,
    /// Noiseless relay input `Hx`.
    pub t: DVector<Complex64>,
    /// Signal forwarded by the relay, `t + w`.
    pub y: DVector<Complex64>,
    /// Observation at the destination, `Cy + n`.
    pub z: DVector<Complex64>,
}

/// Map an SNR in dB to a noise variance under the unit-signal-power
/// convention: `σ² = 10^(−snr_db/10)`.
pub fn snr_to_sigma_sq(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn gaussian_matrix<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    entry_var: f64,
) -> DMatrix<Complex64> {
    // fill column-major so the draw order matches the storage order
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(complex_gaussian(rng, entry_var));
    }
    DMatrix::from_vec(rows, cols, data)
}

/// Draw the two hop channels: `H` is `M×L` with i.i.d. `CN(0, 1/L)` entries,
/// `C` is `N×M` with i.i.d. `CN(0, 1/M)` entries.
pub fn sample_channels<R: Rng>(
    dims: Dimensions,
    rng: &mut R,
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let h = gaussian_matrix(rng, dims.relay, dims.source, 1.0 / dims.source as f64);
    let c = gaussian_matrix(rng, dims.dest, dims.relay, 1.0 / dims.relay as f64);
    (h, c)
}

/// Draw `count` i.i.d. symbols from the constellation.
pub fn sample_symbols<R: Rng>(
    count: usize,
    prior: &Constellation,
    rng: &mut R,
) -> Result<DVector<Complex64>, SystemError> {
    if count == 0 {
        return Err(SystemError::NoSymbols);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = prior.size() - 1;
        for (k, &p) in prior.probs().iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        out.push(prior.points()[pick]);
    }
    Ok(DVector::from_vec(out))
}

/// Push symbols through both hops, drawing fresh noise, and keep every
/// intermediate field.
pub fn propagate<R: Rng>(
    x: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    sigma1_sq: f64,
    sigma2_sq: f64,
    rng: &mut R,
) -> SystemInstance {
    assert_eq!(h.ncols(), x.len(), "H columns must match symbol count");
    assert_eq!(c.ncols(), h.nrows(), "C columns must match relay antennas");
    let t = h * x;
    let mut y = t.clone();
    if sigma1_sq > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, sigma1_sq);
        }
    }
    let mut z = c * &y;
    if sigma2_sq > 0.0 {
        for v in z.iter_mut() {
            *v += complex_gaussian(rng, sigma2_sq);
        }
    }
    SystemInstance {
        h: h.clone(),
        c: c.clone(),
        sigma1_sq,
        sigma2_sq,
        x: x.clone(),
        t,
        y,
        z,
    }
}

/// Draw a complete instance: channels, symbols, and both noise vectors.
pub fn sample_instance<R: Rng>(
    dims: Dimensions,
    prior: &Constellation,
    sigma1_sq: f64,
    sigma2_sq: f64,
    rng: &mut R,
) -> SystemInstance {
    let (h, c) = sample_channels(dims, rng);
    let x = sample_symbols(dims.source, prior, rng).expect("dims.source > 0");
    propagate(&x, &h, &c, sigma1_sq, sigma2_sq, rng)
}

/// SplitMix64 mixing step, the building block of the published seed
/// derivation.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-trial seed: three chained SplitMix64 rounds over
/// `(master_seed, grid_index, trial_index)`. Adding algorithms or reordering
/// work never perturbs the instance stream of a given trial.
pub fn trial_seed(master_seed: u64, grid_index: u64, trial_index: u64) -> u64 {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ grid_index);
    splitmix64(b ^ trial_index)
}

/// Deterministic per-trial generator. The 256-bit ChaCha key is the
/// SplitMix64 stream seeded by [`trial_seed`].
pub fn trial_rng(master_seed: u64, grid_index: u64, trial_index: u64) -> ChaCha12Rng {
    let mut word = trial_seed(master_seed, grid_index, trial_index);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        word = splitmix64(word);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
