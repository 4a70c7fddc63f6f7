//! Monte Carlo estimators over RBM samples: the variational fidelity, its
//! parameter gradient, and the S-matrix (quantum geometric tensor).
//!
//! Everything here operates on *weighted* sample sets so the same code path
//! serves MCMC batches (uniform weights) and exact enumeration (weights
//! |psi|^2 / Z), which the oracle tests rely on. All estimators are invariant
//! under rescaling psi -> c*psi or phi -> c*phi: ratios are stabilized in the
//! log domain and the two mean factors cancel their offsets.

use ndarray::{s, Array1, Array2, Axis};
use num_complex::Complex64;

use crate::cplx::{log_mean_exp, logistic};
use crate::error::{Error, Result};
use crate::rbm::{BitString, RbmState};
use crate::sampler::{AmplitudeOracle, SampleBatch};

/// Hard cap for exact enumeration (2^N terms).
pub const ENUMERATION_CAP: usize = 20;

/// Weighted sample material for one variational state: bitstrings, weights
/// summing to one, cached log psi, and the hidden-unit logistic values that
/// generate log-derivatives.
pub struct EstimatorBatch {
    n_visible: usize,
    n_hidden: usize,
    /// 0/1 entries as complex numbers, shape (M, N); GEMM-ready.
    bits: Array2<Complex64>,
    bitstrings: Vec<BitString>,
    weights: Array1<f64>,
    log_psi: Array1<Complex64>,
    /// sigma(b_k + sum_j W_jk B_j), shape (M, N_h).
    sigma: Array2<Complex64>,
}

impl EstimatorBatch {
    /// Build from an MCMC batch drawn from |psi|^2 (uniform weights 1/M).
    pub fn from_samples(state: &RbmState, batch: &SampleBatch) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty sample batch".into()));
        }
        let m = batch.len();
        let w = Array1::from_elem(m, 1.0 / m as f64);
        Self::build(
            state,
            batch.samples.clone(),
            w,
            Array1::from_vec(batch.log_amps.clone()),
        )
    }

    /// Exact-expectation batch: every bitstring, weighted by |psi|^2 / Z.
    pub fn exact(state: &RbmState) -> Result<Self> {
        let n = state.n_visible();
        if n > ENUMERATION_CAP {
            return Err(Error::InvalidArgument(format!(
                "exact enumeration limited to {ENUMERATION_CAP} qubits, got {n}"
            )));
        }
        let size = 1usize << n;
        let mut bitstrings = Vec::with_capacity(size);
        let mut log_psi = Array1::zeros(size);
        for idx in 0..size {
            let b = BitString::from_index(idx, n);
            log_psi[idx] = state.log_amplitude(&b)?;
            bitstrings.push(b);
        }
        let max_re = log_psi.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let mut weights = Array1::from_shape_fn(size, |i| (2.0 * (log_psi[i].re - max_re)).exp());
        let z: f64 = weights.sum();
        weights.mapv_inplace(|p| p / z);
        Self::build(state, bitstrings, weights, log_psi)
    }

    fn build(
        state: &RbmState,
        bitstrings: Vec<BitString>,
        weights: Array1<f64>,
        log_psi: Array1<Complex64>,
    ) -> Result<Self> {
        let m = bitstrings.len();
        let n = state.n_visible();
        let nh = state.n_hidden();
        if log_psi.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
            return Err(Error::NonFinite("cached log amplitude in batch".into()));
        }
        let mut bits = Array2::zeros((m, n));
        for (s_idx, b) in bitstrings.iter().enumerate() {
            if b.len() != n {
                return Err(Error::DimensionMismatch("sample length vs state".into()));
            }
            for j in 0..n {
                if b.bit(j) == 1 {
                    bits[[s_idx, j]] = Complex64::new(1.0, 0.0);
                }
            }
        }
        // hidden pre-activations for the whole batch in one product
        let mut sigma = bits.dot(state.weights());
        for mut row in sigma.rows_mut() {
            row += state.hidden_bias();
        }
        sigma.mapv_inplace(logistic);
        Ok(Self {
            n_visible: n,
            n_hidden: nh,
            bits,
            bitstrings,
            weights,
            log_psi,
            sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.bitstrings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bitstrings.is_empty()
    }

    pub fn n_parameters(&self) -> usize {
        self.n_visible + self.n_hidden + self.n_visible * self.n_hidden
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn log_psi(&self) -> &Array1<Complex64> {
        &self.log_psi
    }

    pub fn bitstrings(&self) -> &[BitString] {
        &self.bitstrings
    }

    /// Evaluate another oracle on every sample of this batch.
    pub fn oracle_log_amps(&self, oracle: &dyn AmplitudeOracle) -> Result<Array1<Complex64>> {
        let mut out = Array1::zeros(self.len());
        for (i, b) in self.bitstrings.iter().enumerate() {
            out[i] = oracle.log_amplitude(b)?;
        }
        Ok(out)
    }

    /// Weighted mean of the log-derivative vector, frozen ordering.
    pub fn mean_log_derivs(&self) -> Array1<Complex64> {
        let wc = self.weights.mapv(|w| Complex64::new(w, 0.0));
        let a = self.bits.t().dot(&wc);
        let b = self.sigma.t().dot(&wc);
        // <B_j sigma_k> = bits^T diag(w) sigma
        let scaled = scale_rows(&self.bits, &wc);
        let w_block = scaled.t().dot(&self.sigma);
        self.assemble(&a, &b, &w_block)
    }

    /// Weighted mean of u_s * conj(O_s) for a per-sample factor u.
    pub fn mean_u_conj_derivs(&self, u: &Array1<Complex64>) -> Array1<Complex64> {
        let uw = Array1::from_shape_fn(self.len(), |i| u[i] * self.weights[i]);
        let a = self.bits.t().dot(&uw);
        let sigma_conj = self.sigma.mapv(|z| z.conj());
        let b = sigma_conj.t().dot(&uw);
        let scaled = scale_rows(&self.bits, &uw);
        let w_block = scaled.t().dot(&sigma_conj);
        self.assemble(&a, &b, &w_block)
    }

    fn assemble(
        &self,
        a: &Array1<Complex64>,
        b: &Array1<Complex64>,
        w_block: &Array2<Complex64>,
    ) -> Array1<Complex64> {
        let n = self.n_visible;
        let nh = self.n_hidden;
        let mut out = Array1::zeros(n + nh + n * nh);
        out.slice_mut(s![..n]).assign(a);
        out.slice_mut(s![n..n + nh]).assign(b);
        for j in 0..n {
            for k in 0..nh {
                out[n + nh + j * nh + k] = w_block[[j, k]];
            }
        }
        out
    }

    /// Materialize the M x P log-derivative matrix [B | sigma | B_j*sigma_k].
    pub fn derivative_matrix(&self) -> Array2<Complex64> {
        let m = self.len();
        let n = self.n_visible;
        let nh = self.n_hidden;
        let mut o = Array2::zeros((m, n + nh + n * nh));
        o.slice_mut(s![.., ..n]).assign(&self.bits);
        o.slice_mut(s![.., n..n + nh]).assign(&self.sigma);
        for s_idx in 0..m {
            for j in 0..n {
                if self.bits[[s_idx, j]].re != 0.0 {
                    for k in 0..nh {
                        o[[s_idx, n + nh + j * nh + k]] = self.sigma[[s_idx, k]];
                    }
                }
            }
        }
        o
    }

    /// Apply the derivative matrix without materializing it: (O x)_s.
    pub fn apply_derivs(&self, x: &Array1<Complex64>) -> Array1<Complex64> {
        let n = self.n_visible;
        let nh = self.n_hidden;
        let xa = x.slice(s![..n]).to_owned();
        let xb = x.slice(s![n..n + nh]).to_owned();
        let xw = Array2::from_shape_fn((n, nh), |(j, k)| x[n + nh + j * nh + k]);
        let mut y = self.bits.dot(&xa);
        y += &self.sigma.dot(&xb);
        let t = self.bits.dot(&xw);
        let coupled = (&t * &self.sigma).sum_axis(Axis(1));
        y += &coupled;
        y
    }

    /// Adjoint action with a per-sample factor: sum_s u_s conj(O_s).
    pub fn apply_derivs_adjoint(&self, u: &Array1<Complex64>) -> Array1<Complex64> {
        let a = self.bits.t().dot(u);
        let sigma_conj = self.sigma.mapv(|z| z.conj());
        let b = sigma_conj.t().dot(u);
        let scaled = scale_rows(&self.bits, u);
        let w_block = scaled.t().dot(&sigma_conj);
        self.assemble(&a, &b, &w_block)
    }

    /// Diagonal of the covariance S (for preconditioning): Var over the batch
    /// of each O_k.
    pub fn s_diagonal(&self) -> Array1<f64> {
        let mean = self.mean_log_derivs();
        let abs2 = |z: &Complex64| z.norm_sqr();
        let n = self.n_visible;
        let nh = self.n_hidden;
        let mut diag = Array1::zeros(self.n_parameters());
        for s_idx in 0..self.len() {
            let w = self.weights[s_idx];
            for j in 0..n {
                diag[j] += w * abs2(&self.bits[[s_idx, j]]);
            }
            for k in 0..nh {
                let v = abs2(&self.sigma[[s_idx, k]]);
                diag[n + k] += w * v;
                for j in 0..n {
                    if self.bits[[s_idx, j]].re != 0.0 {
                        diag[n + nh + j * nh + k] += w * v;
                    }
                }
            }
        }
        for k in 0..diag.len() {
            diag[k] -= mean[k].norm_sqr();
            if diag[k] < 0.0 {
                diag[k] = 0.0;
            }
        }
        diag
    }
}

fn scale_rows(m: &Array2<Complex64>, factors: &Array1<Complex64>) -> Array2<Complex64> {
    let mut out = m.clone();
    for (mut row, &f) in out.rows_mut().into_iter().zip(factors.iter()) {
        row.mapv_inplace(|z| z * f);
    }
    out
}

/// Stabilized amplitude-ratio statistics over one batch. `log_diffs` holds
/// log(target) - log(source) per sample of the source batch.
pub struct RatioMean {
    /// Complex log of the weighted mean ratio.
    pub log_mean: Complex64,
}

pub fn ratio_mean(log_diffs: &Array1<Complex64>, weights: &Array1<f64>) -> RatioMean {
    RatioMean {
        log_mean: log_mean_exp(log_diffs.as_slice().unwrap(), weights.as_slice().unwrap()),
    }
}

/// Sampled variational fidelity F = Re[ <phi/psi>_psi * <psi/phi>_phi ].
#[derive(Clone, Copy, Debug)]
pub struct FidelityEstimate {
    /// Real part clamped to [0, 1]; estimator noise can momentarily exceed
    /// the bounds, so the raw complex value is kept alongside.
    pub value: f64,
    pub raw: Complex64,
    /// Both mean ratios collapsed to zero (states numerically orthogonal).
    pub degenerate: bool,
}

pub fn fidelity_from_log_ratios(
    diffs_psi: &Array1<Complex64>,
    weights_psi: &Array1<f64>,
    diffs_phi: &Array1<Complex64>,
    weights_phi: &Array1<f64>,
) -> FidelityEstimate {
    let m1 = ratio_mean(diffs_psi, weights_psi).log_mean;
    let m2 = ratio_mean(diffs_phi, weights_phi).log_mean;
    let log_f = m1 + m2;
    if log_f.re == f64::NEG_INFINITY {
        return FidelityEstimate {
            value: 0.0,
            raw: Complex64::new(0.0, 0.0),
            degenerate: true,
        };
    }
    let raw = log_f.exp();
    FidelityEstimate {
        value: raw.re.clamp(0.0, 1.0),
        raw,
        degenerate: false,
    }
}

/// Fidelity from MCMC batches of |psi|^2 and |phi|^2.
pub fn estimate_fidelity(
    psi: &RbmState,
    phi: &dyn AmplitudeOracle,
    batch_psi: &SampleBatch,
    batch_phi: &SampleBatch,
) -> Result<FidelityEstimate> {
    let psi_b = EstimatorBatch::from_samples(psi, batch_psi)?;
    let log_phi_on_psi = psi_b.oracle_log_amps(phi)?;
    let diffs_psi = &log_phi_on_psi - psi_b.log_psi();
    let log_phi = Array1::from_vec(batch_phi.log_amps.clone());
    let mut log_psi_on_phi = Array1::zeros(batch_phi.len());
    for (i, b) in batch_phi.samples.iter().enumerate() {
        log_psi_on_phi[i] = psi.log_amplitude(b)?;
    }
    let diffs_phi = &log_psi_on_phi - &log_phi;
    let w_psi = psi_b.weights().clone();
    let w_phi = Array1::from_elem(batch_phi.len(), 1.0 / batch_phi.len() as f64);
    Ok(fidelity_from_log_ratios(&diffs_psi, &w_psi, &diffs_phi, &w_phi))
}

/// Gradient of the infidelity with respect to conjugated parameters:
/// prefactor * [ <O*>_psi - <(phi/psi) O*>_psi / <phi/psi>_psi ], with the
/// prefactor <phi/psi>_psi <psi/phi>_phi (the sampled fidelity).
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub fidelity: FidelityEstimate,
    /// The bracket term; multiply by Re(fidelity) for the literal
    /// natural-gradient right-hand side used in the optimization loop.
    pub bracket: Array1<Complex64>,
    /// prefactor * bracket.
    pub gradient: Array1<Complex64>,
}

/// Relative floor below which the sampled overlap counts as zero.
const OVERLAP_FLOOR: f64 = 1e-12;

pub fn gradient_from_batches(
    psi_batch: &EstimatorBatch,
    log_phi_on_psi: &Array1<Complex64>,
    diffs_phi: &Array1<Complex64>,
    weights_phi: &Array1<f64>,
) -> Result<GradientEstimate> {
    let diffs_psi = log_phi_on_psi - psi_batch.log_psi();
    let fid = fidelity_from_log_ratios(&diffs_psi, psi_batch.weights(), diffs_phi, weights_phi);

    // stabilized ratios r_s = e^{d_s - max Re d}
    let m = diffs_psi.iter().map(|d| d.re).fold(f64::NEG_INFINITY, f64::max);
    let r = diffs_psi.mapv(|d| (d - m).exp());
    let w = psi_batch.weights();
    let mean_r: Complex64 = r
        .iter()
        .zip(w.iter())
        .map(|(ri, &wi)| ri * wi)
        .sum();
    let mean_abs_r: f64 = r
        .iter()
        .zip(w.iter())
        .map(|(ri, &wi)| ri.norm() * wi)
        .sum();
    if mean_r.norm() < OVERLAP_FLOOR * mean_abs_r || mean_abs_r == 0.0 {
        return Err(Error::GradientBlowup);
    }

    let mean_o_conj = psi_batch.mean_log_derivs().mapv(|z| z.conj());
    let mean_r_o_conj = psi_batch.mean_u_conj_derivs(&r);
    let bracket = &mean_o_conj - &mean_r_o_conj.mapv(|z| z / mean_r);
    let prefactor = fid.raw;
    let gradient = bracket.mapv(|z| z * prefactor);
    Ok(GradientEstimate {
        fidelity: fid,
        bracket,
        gradient,
    })
}

/// Gradient from MCMC batches (uniform weights).
pub fn estimate_gradient(
    psi: &RbmState,
    phi: &dyn AmplitudeOracle,
    batch_psi: &SampleBatch,
    batch_phi: &SampleBatch,
) -> Result<GradientEstimate> {
    let psi_b = EstimatorBatch::from_samples(psi, batch_psi)?;
    let log_phi_on_psi = psi_b.oracle_log_amps(phi)?;
    let log_phi = Array1::from_vec(batch_phi.log_amps.clone());
    let mut log_psi_on_phi = Array1::zeros(batch_phi.len());
    for (i, b) in batch_phi.samples.iter().enumerate() {
        log_psi_on_phi[i] = psi.log_amplitude(b)?;
    }
    let diffs_phi = &log_psi_on_phi - &log_phi;
    let w_phi = Array1::from_elem(batch_phi.len(), 1.0 / batch_phi.len() as f64);
    gradient_from_batches(&psi_b, &log_phi_on_psi, &diffs_phi, &w_phi)
}

/// S_kl = <O_k^dag O_l> - <O_k^dag><O_l> over the batch; Hermitian by
/// symmetrized accumulation, dense.
pub fn estimate_s_matrix(batch: &EstimatorBatch) -> Array2<Complex64> {
    let o = batch.derivative_matrix();
    let sqrt_w = batch.weights().mapv(|w| Complex64::new(w.sqrt(), 0.0));
    let scaled = scale_rows(&o, &sqrt_w);
    let scaled_h = scaled.t().mapv(|z| z.conj());
    let mut s = scaled_h.dot(&scaled);
    let mean = batch.mean_log_derivs();
    let p = mean.len();
    for k in 0..p {
        for l in 0..p {
            s[[k, l]] -= mean[k].conj() * mean[l];
        }
    }
    // enforce exact Hermiticity against accumulation roundoff
    for k in 0..p {
        for l in (k + 1)..p {
            let avg = 0.5 * (s[[k, l]] + s[[l, k]].conj());
            s[[k, l]] = avg;
            s[[l, k]] = avg.conj();
        }
        s[[k, k]] = Complex64::new(s[[k, k]].re, 0.0);
    }
    s
}

/// Matrix-free action of (S + eps I) on a vector, for conjugate-gradient
/// solves when the parameter count makes dense S impractical.
pub fn s_matvec(batch: &EstimatorBatch, mean_o: &Array1<Complex64>, eps: f64, x: &Array1<Complex64>) -> Array1<Complex64> {
    let y = batch.apply_derivs(x);
    let wy = Array1::from_shape_fn(y.len(), |i| y[i] * batch.weights()[i]);
    let mut out = batch.apply_derivs_adjoint(&wy);
    let proj: Complex64 = mean_o.iter().zip(x.iter()).map(|(o, xi)| o * xi).sum();
    ndarray::Zip::from(&mut out)
        .and(mean_o)
        .for_each(|o, &m| *o -= m.conj() * proj);
    ndarray::Zip::from(&mut out).and(x).for_each(|o, &xi| *o += eps * xi);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cplx::rel_err;
    use crate::rbm::random_state;
    use crate::sampler::{sample, McmcConfig, ShiftedOracle};
    use ndarray_linalg::Eigh;

    fn uniform_weights(m: usize) -> Array1<f64> {
        Array1::from_elem(m, 1.0 / m as f64)
    }

    #[test]
    fn fidelity_of_state_with_itself_is_one() {
        let state = random_state(4, 3, 0.6, 1);
        let batch = EstimatorBatch::exact(&state).unwrap();
        let zeros = Array1::zeros(batch.len());
        let f = fidelity_from_log_ratios(&zeros, batch.weights(), &zeros, &uniform_weights(batch.len()));
        assert!((f.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fidelity_of_orthogonal_states_is_zero_exactly() {
        // psi = plus, phi = Z_0 plus: <phi/psi>_psi = mean of (-1)^{B_0} = 0
        let psi = RbmState::plus_state(3).unwrap();
        let (phi, _) = psi.apply_pauli(crate::rbm::PauliAxis::Z, 0).unwrap();
        let psi_b = EstimatorBatch::exact(&psi).unwrap();
        let log_phi = psi_b.oracle_log_amps(&phi).unwrap();
        let diffs_psi = &log_phi - psi_b.log_psi();
        let phi_b = EstimatorBatch::exact(&phi).unwrap();
        let log_psi_on_phi = phi_b.oracle_log_amps(&psi).unwrap();
        let diffs_phi = &log_psi_on_phi - phi_b.log_psi();
        let f = fidelity_from_log_ratios(
            &diffs_psi,
            psi_b.weights(),
            &diffs_phi,
            &phi_b.weights().clone(),
        );
        assert!(f.value < 1e-25, "F = {}", f.value);
    }

    #[test]
    fn exact_fidelity_matches_dense_formula() {
        // mid-size random pair, exact expectations vs the dense overlap
        for seed in 0..5u64 {
            let psi = random_state(6, 3, 0.5, seed);
            let phi = random_state(6, 3, 0.5, seed + 100);
            let psi_b = EstimatorBatch::exact(&psi).unwrap();
            let phi_b = EstimatorBatch::exact(&phi).unwrap();
            let d_psi = &psi_b.oracle_log_amps(&phi).unwrap() - psi_b.log_psi();
            let d_phi = &phi_b.oracle_log_amps(&psi).unwrap() - phi_b.log_psi();
            let est = fidelity_from_log_ratios(&d_psi, psi_b.weights(), &d_phi, phi_b.weights());

            // dense route
            let mut dot = Complex64::new(0.0, 0.0);
            let mut n_psi = 0.0;
            let mut n_phi = 0.0;
            for idx in 0..64 {
                let b = BitString::from_index(idx, 6);
                let ap = psi.log_amplitude(&b).unwrap().exp();
                let af = phi.log_amplitude(&b).unwrap().exp();
                dot += af.conj() * ap;
                n_psi += ap.norm_sqr();
                n_phi += af.norm_sqr();
            }
            let dense = dot.norm_sqr() / (n_psi * n_phi);
            assert!(
                (est.value - dense).abs() < 1e-12,
                "seed {seed}: {} vs {dense}",
                est.value
            );
        }
    }

    #[test]
    fn gradient_vanishes_when_target_equals_state() {
        let psi = random_state(5, 2, 0.7, 3);
        let batch = EstimatorBatch::exact(&psi).unwrap();
        let log_phi = batch.log_psi().clone();
        let diffs_phi = Array1::zeros(batch.len());
        let g = gradient_from_batches(&batch, &log_phi, &diffs_phi, &uniform_weights(batch.len())).unwrap();
        for z in g.gradient.iter() {
            assert!(z.norm() < 1e-13);
        }
    }

    #[test]
    fn gradient_blowup_on_orthogonal_target() {
        let psi = RbmState::plus_state(4).unwrap();
        let (phi, _) = psi.apply_pauli(crate::rbm::PauliAxis::Z, 2).unwrap();
        let psi_b = EstimatorBatch::exact(&psi).unwrap();
        let log_phi = psi_b.oracle_log_amps(&phi).unwrap();
        let phi_b = EstimatorBatch::exact(&phi).unwrap();
        let d_phi = &phi_b.oracle_log_amps(&psi).unwrap() - phi_b.log_psi();
        let r = gradient_from_batches(&psi_b, &log_phi, &d_phi, &phi_b.weights().clone());
        assert!(matches!(r, Err(Error::GradientBlowup)));
    }

    #[test]
    fn s_matrix_on_plus_state_is_quarter_identity() {
        // visible biases only: S_aa = Var(B_j) = 1/4, off-diagonals vanish
        let psi = RbmState::plus_state(4).unwrap();
        let batch = EstimatorBatch::exact(&psi).unwrap();
        let s = estimate_s_matrix(&batch);
        for j in 0..4 {
            for k in 0..4 {
                let expect = if j == k { 0.25 } else { 0.0 };
                assert!(
                    rel_err(s[[j, k]], Complex64::new(expect, 0.0)) < 1e-12
                        || (s[[j, k]].norm() < 1e-12 && expect == 0.0),
                    "S[{j},{k}] = {}",
                    s[[j, k]]
                );
            }
        }
    }

    #[test]
    fn s_matrix_is_hermitian_psd() {
        let psi = random_state(5, 3, 0.8, 17);
        let cfg = McmcConfig {
            samples_per_chain: 300,
            n_chains: 4,
            stride: 5,
            burn_in: 100,
            seed: 4,
        };
        let batch = sample(&psi, &cfg).unwrap();
        let eb = EstimatorBatch::from_samples(&psi, &batch).unwrap();
        let s = estimate_s_matrix(&eb);
        let p = s.nrows();
        for k in 0..p {
            for l in 0..p {
                assert!((s[[k, l]] - s[[l, k]].conj()).norm() < 1e-14);
            }
        }
        let (eigs, _) = s.eigh(ndarray_linalg::UPLO::Lower).unwrap();
        for &e in eigs.iter() {
            assert!(e >= -1e-10, "eigenvalue {e}");
        }
    }

    #[test]
    fn s_matrix_of_single_sample_is_zero() {
        let psi = random_state(3, 2, 0.5, 8);
        let batch = SampleBatch {
            samples: vec![BitString::new(vec![1, 0, 1]).unwrap()],
            log_amps: vec![psi.log_amplitude(&BitString::new(vec![1, 0, 1]).unwrap()).unwrap()],
            chain_ids: vec![0],
            accept_rates: vec![1.0],
        };
        let eb = EstimatorBatch::from_samples(&psi, &batch).unwrap();
        let s = estimate_s_matrix(&eb);
        for z in s.iter() {
            assert!(z.norm() < 1e-14);
        }
    }

    #[test]
    fn estimators_are_scale_invariant() {
        let psi = random_state(5, 3, 0.6, 23);
        let phi = random_state(5, 3, 0.6, 29);
        let shift = Complex64::new(7.5, -2.0);
        let psi_b = EstimatorBatch::exact(&psi).unwrap();
        let phi_b = EstimatorBatch::exact(&phi).unwrap();

        let d_psi_base = &psi_b.oracle_log_amps(&phi).unwrap() - psi_b.log_psi();
        let d_phi_base = &phi_b.oracle_log_amps(&psi).unwrap() - phi_b.log_psi();
        let base = fidelity_from_log_ratios(&d_psi_base, psi_b.weights(), &d_phi_base, phi_b.weights());

        // phi -> c*phi shifts one ratio up and the other down
        let shifted = ShiftedOracle { inner: &phi, shift };
        let d_psi_s = &psi_b.oracle_log_amps(&shifted).unwrap() - psi_b.log_psi();
        let d_phi_s = &d_phi_base - &Array1::from_elem(phi_b.len(), shift);
        let est = fidelity_from_log_ratios(&d_psi_s, psi_b.weights(), &d_phi_s, phi_b.weights());
        assert!((est.value - base.value).abs() < 1e-12);

        let g_base =
            gradient_from_batches(&psi_b, &psi_b.oracle_log_amps(&phi).unwrap(), &d_phi_base, phi_b.weights())
                .unwrap();
        let g_shift =
            gradient_from_batches(&psi_b, &psi_b.oracle_log_amps(&shifted).unwrap(), &d_phi_s, phi_b.weights())
                .unwrap();
        for (a, b) in g_base.gradient.iter().zip(g_shift.gradient.iter()) {
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn matvec_matches_dense_s() {
        let psi = random_state(4, 3, 0.7, 31);
        let batch = EstimatorBatch::exact(&psi).unwrap();
        let s = estimate_s_matrix(&batch);
        let eps = 1e-3;
        let mean = batch.mean_log_derivs();
        let p = batch.n_parameters();
        let x = Array1::from_shape_fn(p, |k| Complex64::new(0.1 * k as f64, 0.05 * (p - k) as f64));
        let via_matvec = s_matvec(&batch, &mean, eps, &x);
        let mut dense = s.dot(&x);
        ndarray::Zip::from(&mut dense).and(&x).for_each(|d, &xi| *d += eps * xi);
        for (a, b) in via_matvec.iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }
}
