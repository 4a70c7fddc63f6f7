//! Ground-truth engines for small systems: dense statevector circuits, dense
//! fidelity against an RBM, the analytic depth-1 cost formula, and
//! brute-force combinatorial optima.
//!
//! Basis convention: statevector index `b` encodes qubit j in bit j, so the
//! amplitude of bitstring B sits at index sum_j B_j 2^j.

use ndarray::Array1;
use num_complex::Complex64;

use crate::driver::QaoaAngles;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rbm::{BitString, RbmState};
use crate::sampler::AmplitudeOracle;

/// Dense vectors above this qubit count are refused (2^24 amplitudes,
/// 256 MB); this is a desk-scale oracle, not a production simulator.
pub const DENSE_CAP: usize = 24;

/// Brute-force enumeration cap (2^30 cut evaluations with bit tricks).
pub const BRUTE_FORCE_CAP: usize = 30;

/// Unnormalized dense statevector of up to [`DENSE_CAP`] qubits.
#[derive(Clone, Debug)]
pub struct DenseState {
    amps: Array1<Complex64>,
    n_qubits: usize,
}

impl DenseState {
    pub fn new(amps: Array1<Complex64>, n_qubits: usize) -> Result<Self> {
        if n_qubits > DENSE_CAP {
            return Err(Error::InvalidArgument(format!(
                "{n_qubits} qubits exceeds the dense cap of {DENSE_CAP}"
            )));
        }
        if amps.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "amplitude vector length {} != 2^{n_qubits}",
                amps.len()
            )));
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::NonFinite("dense state norm".into()));
        }
        Ok(Self { amps, n_qubits })
    }

    /// Normalized uniform superposition.
    pub fn uniform(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidArgument("need at least one qubit".into()));
        }
        let size = check_dense(n_qubits)?;
        let amp = Complex64::new(1.0 / (size as f64).sqrt(), 0.0);
        Self::new(Array1::from_elem(size, amp), n_qubits)
    }

    /// Densify any log-amplitude oracle, stabilized by subtracting the
    /// largest log-modulus before exponentiating.
    pub fn from_oracle(oracle: &dyn AmplitudeOracle) -> Result<Self> {
        let n = oracle.n_qubits();
        let size = check_dense(n)?;
        let mut logs = Array1::zeros(size);
        for idx in 0..size {
            logs[idx] = oracle.log_amplitude(&BitString::from_index(idx, n))?;
        }
        let max_re = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let amps = logs.mapv(|l| (l - max_re).exp());
        Self::new(amps, n)
    }

    pub fn from_rbm(state: &RbmState) -> Result<Self> {
        Self::from_oracle(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amps
    }

    pub fn norm2(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Apply exp(-i beta X) on one qubit.
    pub fn apply_rx(&mut self, qubit: usize, beta: f64) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::IndexOutOfRange(format!("qubit {qubit}")));
        }
        let (c, s) = (beta.cos(), beta.sin());
        let m_is = Complex64::new(0.0, -s);
        let bit = 1usize << qubit;
        for idx in 0..self.amps.len() {
            if idx & bit == 0 {
                let a0 = self.amps[idx];
                let a1 = self.amps[idx | bit];
                self.amps[idx] = c * a0 + m_is * a1;
                self.amps[idx | bit] = m_is * a0 + c * a1;
            }
        }
        Ok(())
    }

    /// Apply the diagonal cost layer exp(-i gamma C) for a graph.
    pub fn apply_cost_layer(&mut self, graph: &Graph, gamma: f64) -> Result<()> {
        if graph.n_vertices() != self.n_qubits {
            return Err(Error::DimensionMismatch("graph vs state size".into()));
        }
        let cuts = cut_table(graph);
        self.apply_phase_table(&cuts, gamma)
    }

    /// Diagonal layer from a precomputed cut table (one multiply per entry).
    pub fn apply_phase_table(&mut self, cuts: &[f64], gamma: f64) -> Result<()> {
        if cuts.len() != self.amps.len() {
            return Err(Error::DimensionMismatch("cut table vs state size".into()));
        }
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            *amp *= Complex64::new(0.0, -gamma * cuts[idx]).exp();
        }
        Ok(())
    }
}

fn check_dense(n_qubits: usize) -> Result<usize> {
    if n_qubits > DENSE_CAP {
        return Err(Error::InvalidArgument(format!(
            "{n_qubits} qubits exceeds the dense cap of {DENSE_CAP}"
        )));
    }
    Ok(1usize << n_qubits)
}

/// Cut value of every basis index (2^N * |E| work; build once and reuse
/// across repeated statevector evaluations on the same graph).
pub fn cut_table(graph: &Graph) -> Vec<f64> {
    let n = graph.n_vertices();
    let size = 1usize << n;
    let mut cuts = vec![0.0f64; size];
    for e in graph.edges() {
        let mask_u = 1usize << e.u;
        let mask_v = 1usize << e.v;
        for (idx, c) in cuts.iter_mut().enumerate() {
            let aligned = ((idx & mask_u) == 0) == ((idx & mask_v) == 0);
            *c += if aligned { e.weight } else { -e.weight };
        }
    }
    cuts
}

/// Exact QAOA output state: p alternating diagonal cost layers and
/// single-qubit X rotations applied to the uniform superposition.
/// The result stays normalized to machine precision.
pub fn statevector_qaoa(graph: &Graph, angles: &QaoaAngles) -> Result<DenseState> {
    let cuts = cut_table(graph);
    statevector_qaoa_with_table(graph.n_vertices(), &cuts, angles)
}

/// Statevector circuit from a prebuilt cut table.
pub fn statevector_qaoa_with_table(
    n: usize,
    cuts: &[f64],
    angles: &QaoaAngles,
) -> Result<DenseState> {
    let mut state = DenseState::uniform(n)?;
    for layer in 0..angles.depth() {
        state.apply_phase_table(cuts, angles.gammas[layer])?;
        for qubit in 0..n {
            state.apply_rx(qubit, angles.betas[layer])?;
        }
    }
    Ok(state)
}

/// <C> = sum_B |psi(B)|^2 cut(B) / norm^2.
pub fn statevector_cost(state: &DenseState, graph: &Graph) -> Result<f64> {
    if graph.n_vertices() != state.n_qubits() {
        return Err(Error::DimensionMismatch("graph vs state size".into()));
    }
    let cuts = cut_table(graph);
    statevector_cost_with_table(state, &cuts)
}

/// Cost from a prebuilt cut table.
pub fn statevector_cost_with_table(state: &DenseState, cuts: &[f64]) -> Result<f64> {
    if cuts.len() != state.amplitudes().len() {
        return Err(Error::DimensionMismatch("cut table vs state size".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (idx, amp) in state.amplitudes().iter().enumerate() {
        let p = amp.norm_sqr();
        num += p * cuts[idx];
        den += p;
    }
    Ok(num / den)
}

/// Quantum fidelity |<a|b>|^2 / (<a|a><b|b>); symmetric, in [0, 1].
pub fn dense_fidelity(a: &DenseState, b: &DenseState) -> Result<f64> {
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::DimensionMismatch("state sizes".into()));
    }
    let mut dot = Complex64::new(0.0, 0.0);
    for (x, y) in a.amplitudes().iter().zip(b.amplitudes().iter()) {
        dot += x.conj() * y;
    }
    Ok(dot.norm_sqr() / (a.norm2() * b.norm2()))
}

/// Fidelity between an RBM and a dense reference.
pub fn dense_fidelity_rbm(rbm: &RbmState, reference: &DenseState) -> Result<f64> {
    dense_fidelity(&DenseState::from_rbm(rbm)?, reference)
}

/// Analytic depth-1 cost for unit-weight graphs:
///
/// ```text
/// C(gamma, beta) = 1/2 sum_{(u,v)} [ sin(4 beta) sin(2 gamma)
///                    (cos^{q_u}(2 gamma) + cos^{q_v}(2 gamma))
///                  + sin^2(2 beta) cos^{q_u+q_v-2 D}(2 gamma)
///                    (1 - cos^D(4 gamma)) ]
/// ```
///
/// with q + 1 the endpoint degrees and D the number of common neighbors.
pub fn exact_p1_cost(graph: &Graph, gamma: f64, beta: f64) -> Result<f64> {
    if !graph.is_unit_weight() {
        return Err(Error::InvalidArgument(
            "the analytic depth-1 formula assumes unit edge weights".into(),
        ));
    }
    let combos = graph.edge_combinatorics();
    let s4b = (4.0 * beta).sin();
    let s2g = (2.0 * gamma).sin();
    let c2g = (2.0 * gamma).cos();
    let s2b2 = (2.0 * beta).sin().powi(2);
    let c4g = (4.0 * gamma).cos();
    let mut total = 0.0;
    for ec in combos {
        let term1 = s4b * s2g * (c2g.powi(ec.q_u as i32) + c2g.powi(ec.q_v as i32));
        let exponent = (ec.q_u + ec.q_v - 2 * ec.common_neighbors) as i32;
        let term2 = s2b2 * c2g.powi(exponent) * (1.0 - c4g.powi(ec.common_neighbors as i32));
        total += term1 + term2;
    }
    Ok(0.5 * total)
}

/// Exhaustive minimum of the cut value. Walks a binary-reflected Gray code so
/// each configuration costs O(degree); ties break toward the lowest index.
pub fn brute_force_optimum(graph: &Graph) -> Result<(f64, BitString)> {
    let n = graph.n_vertices();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::InvalidArgument(format!(
            "{n} vertices exceeds the brute-force cap of {BRUTE_FORCE_CAP}"
        )));
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in graph.edges() {
        adj[e.u].push((e.v, e.weight));
        adj[e.v].push((e.u, e.weight));
    }
    let mut bits = vec![0u8; n];
    let mut current: f64 = graph.edges().iter().map(|e| e.weight).sum();
    let mut best = current;
    let mut best_index = 0usize;
    let mut index = 0usize;
    let total = 1usize << n;
    for step in 1..total {
        let j = step.trailing_zeros() as usize;
        // flipping j toggles the alignment of every incident edge
        let mut delta = 0.0;
        for &(k, w) in &adj[j] {
            let aligned = bits[j] == bits[k];
            delta += if aligned { -2.0 * w } else { 2.0 * w };
        }
        current += delta;
        bits[j] ^= 1;
        index ^= 1usize << j;
        if current < best || (current == best && index < best_index) {
            best = current;
            best_index = index;
        }
    }
    Ok((best, BitString::from_index(best_index, n)))
}
