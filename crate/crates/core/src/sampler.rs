//! Metropolis–Hastings sampling of bitstrings from |psi|^2 for any state
//! exposing a log-amplitude.
//!
//! Proposals flip one uniformly random bit; acceptance is
//! min(1, |psi(B')/psi(B)|^2) evaluated from log-amplitudes. Chains start at
//! independent uniform random bitstrings, discard `burn_in` steps, then
//! record one sample every `stride` steps. Chains run in parallel but the
//! merged batch is ordered by chain index, so output is seed-stable
//! regardless of scheduling.
//!
//! Each step holds in place with probability 1/(n+1) instead of proposing.
//! Without this lazy step the walk is periodic: every accepted flip toggles
//! the total bit parity, so states with exactly uniform |psi|^2 (every
//! phase-only circuit layer) would lock each chain into one parity class.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rbm::{BitString, RbmChainCache, RbmState};
use crate::seed;

/// A log-amplitude oracle over bitstrings; anything samplable.
pub trait AmplitudeOracle: Sync {
    fn n_qubits(&self) -> usize;

    fn log_amplitude(&self, bits: &BitString) -> Result<Complex64>;

    /// Incremental evaluation state for one Markov chain. The default
    /// recomputes from scratch on every flip; structured states (RBM, RX
    /// targets) override with O(N_h) updates.
    fn chain_state<'a>(&'a self, bits: BitString) -> Result<Box<dyn ChainState + 'a>> {
        let log_amp = self.log_amplitude(&bits)?;
        Ok(Box::new(NaiveChainState {
            oracle: self,
            bits,
            log_amp,
        }))
    }
}

/// Per-chain incremental evaluator: peek at a flipped configuration, then
/// commit or discard.
pub trait ChainState {
    fn bits(&self) -> &BitString;
    fn log_amp(&self) -> Complex64;
    fn log_amp_after_flip(&self, j: usize) -> Complex64;
    fn commit_flip(&mut self, j: usize);
}

struct NaiveChainState<'a, O: AmplitudeOracle + ?Sized> {
    oracle: &'a O,
    bits: BitString,
    log_amp: Complex64,
}

impl<O: AmplitudeOracle + ?Sized> ChainState for NaiveChainState<'_, O> {
    fn bits(&self) -> &BitString {
        &self.bits
    }

    fn log_amp(&self) -> Complex64 {
        self.log_amp
    }

    fn log_amp_after_flip(&self, j: usize) -> Complex64 {
        let flipped = self.bits.flipped(j);
        self.oracle
            .log_amplitude(&flipped)
            .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    }

    fn commit_flip(&mut self, j: usize) {
        self.bits.flip(j);
        self.log_amp = self
            .oracle
            .log_amplitude(&self.bits)
            .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
    }
}

impl AmplitudeOracle for RbmState {
    fn n_qubits(&self) -> usize {
        self.n_visible()
    }

    fn log_amplitude(&self, bits: &BitString) -> Result<Complex64> {
        RbmState::log_amplitude(self, bits)
    }

    fn chain_state<'a>(&'a self, bits: BitString) -> Result<Box<dyn ChainState + 'a>> {
        Ok(Box::new(RbmChainCache::new(self, bits)?))
    }
}

impl ChainState for RbmChainCache<'_> {
    fn bits(&self) -> &BitString {
        RbmChainCache::bits(self)
    }

    fn log_amp(&self) -> Complex64 {
        RbmChainCache::log_amp(self)
    }

    fn log_amp_after_flip(&self, j: usize) -> Complex64 {
        RbmChainCache::log_amp_after_flip(self, j)
    }

    fn commit_flip(&mut self, j: usize) {
        RbmChainCache::commit_flip(self, j)
    }
}

/// Wrapper adding a constant to every log-amplitude, i.e. psi -> c*psi.
/// All estimators must be exactly invariant under this.
pub struct ShiftedOracle<'a, O: AmplitudeOracle + ?Sized> {
    pub inner: &'a O,
    pub shift: Complex64,
}

impl<O: AmplitudeOracle + ?Sized> AmplitudeOracle for ShiftedOracle<'_, O> {
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    fn log_amplitude(&self, bits: &BitString) -> Result<Complex64> {
        Ok(self.inner.log_amplitude(bits)? + self.shift)
    }
}

/// Sampling protocol constants.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct McmcConfig {
    pub samples_per_chain: usize,
    pub n_chains: usize,
    /// Single-spin flips between recorded samples.
    pub stride: usize,
    /// Initial single-spin flips discarded per chain.
    pub burn_in: usize,
    pub seed: u64,
}

impl McmcConfig {
    /// Protocol defaults: 8000 samples x 4 chains below 20 qubits, 2000 x 4
    /// from 20 qubits up; stride of one sweep (n flips); burn-in of 10 sweeps
    /// worth of strides.
    pub fn default_for(n_qubits: usize, seed: u64) -> Self {
        let samples_per_chain = if n_qubits < 20 { 8000 } else { 2000 };
        let stride = n_qubits.max(1);
        Self {
            samples_per_chain,
            n_chains: 4,
            stride,
            burn_in: 10 * n_qubits.max(1) * stride,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_chain == 0 || self.n_chains == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(
                "samples_per_chain, n_chains and stride must all be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_chain * self.n_chains
    }
}

/// Pooled MCMC output: bitstrings, cached log-amplitudes, chain provenance.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub samples: Vec<BitString>,
    pub log_amps: Vec<Complex64>,
    pub chain_ids: Vec<u32>,
    /// Fraction of accepted proposals per chain (diagnostic).
    pub accept_rates: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV dump: chain, step, bitstring (0/1 string, qubit 0 first), log|psi|.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "chain,step,bitstring,log_abs_psi")?;
        let mut step_in_chain = vec![0usize; self.accept_rates.len().max(1)];
        for i in 0..self.samples.len() {
            let chain = self.chain_ids[i] as usize;
            writeln!(
                w,
                "{},{},{},{}",
                chain,
                step_in_chain[chain],
                self.samples[i].to_01_string(),
                self.log_amps[i].re
            )?;
            step_in_chain[chain] += 1;
        }
        Ok(())
    }
}

struct ChainOutput {
    samples: Vec<BitString>,
    log_amps: Vec<Complex64>,
    accept_rate: f64,
}

fn run_chain(oracle: &dyn AmplitudeOracle, cfg: &McmcConfig, chain_idx: usize) -> Result<ChainOutput> {
    let n = oracle.n_qubits();
    let mut rng = ChaCha12Rng::seed_from_u64(seed::derive(cfg.seed, "mcmc-chain", chain_idx as u64));
    let init = BitString::new((0..n).map(|_| rng.random_range(0..2u8)).collect())
        .expect("bits in range");
    let mut chain = oracle.chain_state(init)?;
    if !chain.log_amp().re.is_finite() {
        return Err(Error::NonFinite(format!(
            "log amplitude at chain {chain_idx} initialization"
        )));
    }
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut step = |chain: &mut Box<dyn ChainState + '_>, rng: &mut ChaCha12Rng| -> Result<()> {
        // lazy step: index n means "hold", keeping the walk aperiodic
        let j = rng.random_range(0..=n);
        if j == n {
            return Ok(());
        }
        let cur = chain.log_amp();
        let next = chain.log_amp_after_flip(j);
        if next.re.is_nan() || next.im.is_nan() || next.re == f64::INFINITY {
            return Err(Error::NonFinite(format!(
                "log amplitude for proposal on chain {chain_idx}"
            )));
        }
        proposed += 1;
        // accept with min(1, |psi'/psi|^2); log u < 2 Re(log psi' - log psi)
        let log_ratio2 = 2.0 * (next.re - cur.re);
        let accept = log_ratio2 >= 0.0 || rng.random::<f64>().ln() < log_ratio2;
        if accept {
            chain.commit_flip(j);
            accepted += 1;
        }
        Ok(())
    };
    for _ in 0..cfg.burn_in {
        step(&mut chain, &mut rng)?;
    }
    let mut samples = Vec::with_capacity(cfg.samples_per_chain);
    let mut log_amps = Vec::with_capacity(cfg.samples_per_chain);
    for _ in 0..cfg.samples_per_chain {
        for _ in 0..cfg.stride {
            step(&mut chain, &mut rng)?;
        }
        samples.push(chain.bits().clone());
        log_amps.push(chain.log_amp());
    }
    let accept_rate = if proposed == 0 {
        1.0
    } else {
        accepted as f64 / proposed as f64
    };
    Ok(ChainOutput {
        samples,
        log_amps,
        accept_rate,
    })
}

/// Draw a [`SampleBatch`] from |psi|^2. Chains execute in parallel; the
/// result is merged by chain index and is deterministic given the config.
pub fn sample(oracle: &dyn AmplitudeOracle, cfg: &McmcConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    if oracle.n_qubits() == 0 {
        return Err(Error::InvalidArgument("oracle reports zero qubits".into()));
    }
    let chains: Vec<Result<ChainOutput>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|idx| run_chain(oracle, cfg, idx))
        .collect();
    let mut samples = Vec::with_capacity(cfg.total_samples());
    let mut log_amps = Vec::with_capacity(cfg.total_samples());
    let mut chain_ids = Vec::with_capacity(cfg.total_samples());
    let mut accept_rates = Vec::with_capacity(cfg.n_chains);
    for (idx, out) in chains.into_iter().enumerate() {
        let out = out?;
        chain_ids.extend(std::iter::repeat(idx as u32).take(out.samples.len()));
        samples.extend(out.samples);
        log_amps.extend(out.log_amps);
        accept_rates.push(out.accept_rate);
    }
    Ok(SampleBatch {
        samples,
        log_amps,
        chain_ids,
        accept_rates,
    })
}
