//! Complex-parameter Restricted Boltzmann Machine wavefunctions.
//!
//! The unnormalized amplitude of a bitstring B is
//!
//! ```text
//! psi(B) = exp(sum_j a_j B_j) * prod_k [1 + exp(b_k + sum_j W_jk B_j)]
//! ```
//!
//! with complex visible biases `a` (one per qubit), hidden biases `b` and a
//! dense complex weight matrix `W` of shape (n_visible, n_hidden). A subset
//! of gates acts exactly on this family as parameter replacements; each such
//! map is reported together with the proportionality constant C defined by
//! `psi'(B) = C * <B|G|psi>` for every bitstring B.
//!
//! States are immutable: every gate returns a fresh successor state, leaving
//! the input intact for circuit replay and compression targets.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cplx::{complex_arccosh, log1p_exp, logistic};
use crate::error::{Error, Result};

/// A computational-basis bitstring; entries are 0 or 1.
///
/// Convention: Z_i |B> = (-1)^{B_i} |B>, and when a bitstring is associated
/// with a dense statevector index `b`, bit j is `(b >> j) & 1` (qubit 0 is
/// the least significant bit).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("bitstring entries must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    /// Bitstring for dense index `index` on `n` qubits (bit j = (index >> j) & 1).
    pub fn from_index(index: usize, n: usize) -> Self {
        Self {
            bits: (0..n).map(|j| ((index >> j) & 1) as u8).collect(),
        }
    }

    /// Dense statevector index of this bitstring.
    pub fn to_index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &b)| acc | ((b as usize) << j))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, j: usize) -> u8 {
        self.bits[j]
    }

    pub fn flip(&mut self, j: usize) {
        self.bits[j] ^= 1;
    }

    /// Copy with bit j flipped.
    pub fn flipped(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.flip(j);
        out
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    /// Render as a 0/1 string, qubit 0 first.
    pub fn to_01_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
    }
}

/// Gate labels used in reports and traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    PauliX,
    PauliY,
    PauliZ,
    Rz,
    Rzz,
    Rx,
}

/// Pauli axis selector for [`RbmState::apply_pauli`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// Record of one gate application.
///
/// Exact gates carry the complex log of the proportionality constant C with
/// `psi'(B) = C * <B|G|psi>`; approximate gates carry the achieved fidelity
/// estimate instead.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateReport {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub angle: Option<f64>,
    pub exact: bool,
    pub constant_log: Option<[f64; 2]>,
    pub fidelity: Option<f64>,
}

impl GateReport {
    fn exact(kind: GateKind, qubits: Vec<usize>, angle: Option<f64>, constant_log: Complex64) -> Self {
        Self {
            kind,
            qubits,
            angle,
            exact: true,
            constant_log: Some([constant_log.re, constant_log.im]),
            fidelity: None,
        }
    }

    pub fn constant_log_c(&self) -> Option<Complex64> {
        self.constant_log.map(|[re, im]| Complex64::new(re, im))
    }
}

/// The RBM wavefunction parameters θ = {a, b, W}.
#[derive(Clone, Debug, PartialEq)]
pub struct RbmState {
    n_visible: usize,
    visible_bias: Array1<Complex64>,
    hidden_bias: Array1<Complex64>,
    /// Shape (n_visible, n_hidden).
    weights: Array2<Complex64>,
}

fn all_finite<'a, I: IntoIterator<Item = &'a Complex64>>(iter: I) -> bool {
    iter.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

impl RbmState {
    pub fn new(
        visible_bias: Array1<Complex64>,
        hidden_bias: Array1<Complex64>,
        weights: Array2<Complex64>,
    ) -> Result<Self> {
        let n = visible_bias.len();
        let nh = hidden_bias.len();
        if n == 0 {
            return Err(Error::InvalidArgument("at least one visible unit required".into()));
        }
        if weights.nrows() != n || weights.ncols() != nh {
            return Err(Error::DimensionMismatch(format!(
                "weights shape {:?} does not match ({}, {})",
                weights.dim(),
                n,
                nh
            )));
        }
        if !all_finite(visible_bias.iter()) || !all_finite(hidden_bias.iter()) || !all_finite(weights.iter()) {
            return Err(Error::NonFinite("rbm parameters".into()));
        }
        Ok(Self {
            n_visible: n,
            visible_bias,
            hidden_bias,
            weights,
        })
    }

    /// The n-qubit symmetric superposition: every parameter zero, no hidden
    /// units, constant amplitude across all basis states.
    pub fn plus_state(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("qubit count must be at least 1".into()));
        }
        Ok(Self {
            n_visible: n,
            visible_bias: Array1::zeros(n),
            hidden_bias: Array1::zeros(0),
            weights: Array2::zeros((n, 0)),
        })
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    /// Total parameter count N + N_h + N*N_h.
    pub fn n_parameters(&self) -> usize {
        self.n_visible + self.n_hidden() + self.n_visible * self.n_hidden()
    }

    pub fn visible_bias(&self) -> &Array1<Complex64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<Complex64> {
        &self.hidden_bias
    }

    pub fn weights(&self) -> &Array2<Complex64> {
        &self.weights
    }

    fn check_bits(&self, bits: &BitString) -> Result<()> {
        if bits.len() != self.n_visible {
            return Err(Error::DimensionMismatch(format!(
                "bitstring length {} does not match {} qubits",
                bits.len(),
                self.n_visible
            )));
        }
        Ok(())
    }

    fn check_qubit(&self, i: usize) -> Result<()> {
        if i >= self.n_visible {
            return Err(Error::IndexOutOfRange(format!(
                "qubit {} out of range for {} qubits",
                i, self.n_visible
            )));
        }
        Ok(())
    }

    /// Hidden-unit pre-activations z_k = b_k + sum_j W_jk B_j.
    fn hidden_activations(&self, bits: &BitString) -> Array1<Complex64> {
        let mut z = self.hidden_bias.clone();
        for (j, &bj) in bits.as_slice().iter().enumerate() {
            if bj == 1 {
                z += &self.weights.row(j);
            }
        }
        z
    }

    /// log psi(B) = sum_j a_j B_j + sum_k log(1 + exp(z_k)).
    pub fn log_amplitude(&self, bits: &BitString) -> Result<Complex64> {
        self.check_bits(bits)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &bj) in bits.as_slice().iter().enumerate() {
            if bj == 1 {
                acc += self.visible_bias[j];
            }
        }
        for &z in self.hidden_activations(bits).iter() {
            acc += log1p_exp(z);
        }
        if !acc.re.is_finite() || !acc.im.is_finite() {
            return Err(Error::NonFinite("log amplitude".into()));
        }
        Ok(acc)
    }

    /// Log-derivatives O_k(B) = d ln psi / d theta_k in the frozen parameter
    /// ordering: all visible biases, then all hidden biases, then weights in
    /// row-major order (index of W_jk is N + N_h + j*N_h + k).
    pub fn log_derivatives(&self, bits: &BitString) -> Result<Array1<Complex64>> {
        self.check_bits(bits)?;
        let n = self.n_visible;
        let nh = self.n_hidden();
        let sig = self.hidden_activations(bits).mapv(logistic);
        let mut out = Array1::zeros(n + nh + n * nh);
        for j in 0..n {
            out[j] = Complex64::new(f64::from(bits.bit(j)), 0.0);
        }
        for k in 0..nh {
            out[n + k] = sig[k];
        }
        for j in 0..n {
            if bits.bit(j) == 1 {
                for k in 0..nh {
                    out[n + nh + j * nh + k] = sig[k];
                }
            }
        }
        if !all_finite(out.iter()) {
            return Err(Error::NonFinite("log derivatives".into()));
        }
        Ok(out)
    }

    /// Hidden-unit logistic values σ(z_k) for a bitstring; the reusable part
    /// of the log-derivative vector.
    pub fn hidden_logistics(&self, bits: &BitString) -> Result<Array1<Complex64>> {
        self.check_bits(bits)?;
        Ok(self.hidden_activations(bits).mapv(logistic))
    }

    /// Flattened parameter vector in the frozen ordering.
    pub fn parameters(&self) -> Array1<Complex64> {
        let n = self.n_visible;
        let nh = self.n_hidden();
        let mut out = Array1::zeros(n + nh + n * nh);
        for j in 0..n {
            out[j] = self.visible_bias[j];
        }
        for k in 0..nh {
            out[n + k] = self.hidden_bias[k];
        }
        for j in 0..n {
            for k in 0..nh {
                out[n + nh + j * nh + k] = self.weights[[j, k]];
            }
        }
        out
    }

    /// Rebuild a state with the same architecture from a flattened parameter
    /// vector in the frozen ordering.
    pub fn with_parameters(&self, theta: &Array1<Complex64>) -> Result<Self> {
        let n = self.n_visible;
        let nh = self.n_hidden();
        if theta.len() != n + nh + n * nh {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector length {} does not match {}",
                theta.len(),
                n + nh + n * nh
            )));
        }
        let visible_bias = Array1::from_iter(theta.iter().take(n).copied());
        let hidden_bias = Array1::from_iter(theta.iter().skip(n).take(nh).copied());
        let weights = Array2::from_shape_fn((n, nh), |(j, k)| theta[n + nh + j * nh + k]);
        Self::new(visible_bias, hidden_bias, weights)
    }

    /// Exact single-qubit Pauli gate as a parameter replacement.
    ///
    /// X: a_i -> -a_i, b_k -> b_k + W_ik, W_ik -> -W_ik, ln C = -a_i.
    /// Y: as X with a_i -> -a_i + iπ and ln C = -a_i + iπ/2.
    /// Z: a_i -> a_i + iπ, C = 1.
    pub fn apply_pauli(&self, axis: PauliAxis, i: usize) -> Result<(Self, GateReport)> {
        self.check_qubit(i)?;
        let mut next = self.clone();
        let i_pi = Complex64::new(0.0, std::f64::consts::PI);
        let (kind, constant_log) = match axis {
            PauliAxis::Z => {
                next.visible_bias[i] += i_pi;
                (GateKind::PauliZ, Complex64::new(0.0, 0.0))
            }
            PauliAxis::X | PauliAxis::Y => {
                let a_i = self.visible_bias[i];
                let w_row = self.weights.row(i).to_owned();
                next.hidden_bias += &w_row;
                next.weights.row_mut(i).assign(&w_row.mapv(|w| -w));
                if matches!(axis, PauliAxis::X) {
                    next.visible_bias[i] = -a_i;
                    (GateKind::PauliX, -a_i)
                } else {
                    next.visible_bias[i] = -a_i + i_pi;
                    (GateKind::PauliY, -a_i + i_pi / 2.0)
                }
            }
        };
        let report = GateReport::exact(kind, vec![i], None, constant_log);
        Ok((next, report))
    }

    /// Exact Z rotation: proportional action diag(1, e^{iφ}) on qubit i,
    /// implemented as a_i -> a_i + iφ with C = 1.
    pub fn apply_rz(&self, i: usize, phi: f64) -> Result<(Self, GateReport)> {
        self.check_qubit(i)?;
        let mut next = self.clone();
        next.visible_bias[i] += Complex64::new(0.0, phi);
        let report = GateReport::exact(GateKind::Rz, vec![i], Some(phi), Complex64::new(0.0, 0.0));
        Ok((next, report))
    }

    /// Exact ZZ rotation: proportional action diag(1, e^{iφ}, e^{iφ}, 1) on
    /// qubits (i, j), implemented by appending one hidden unit c with
    /// W_ic = -2A, W_jc = 2A, zero bias, and shifting a_i += A, a_j -= A,
    /// where A = arccosh(e^{iφ}) on the principal branch. C = 2.
    pub fn apply_rzz(&self, i: usize, j: usize, phi: f64) -> Result<(Self, GateReport)> {
        self.check_qubit(i)?;
        self.check_qubit(j)?;
        if i == j {
            return Err(Error::InvalidArgument(format!(
                "rzz requires two distinct qubits, got ({i}, {j})"
            )));
        }
        let a = complex_arccosh(Complex64::new(0.0, phi).exp());
        let mut next = self.clone();
        next.visible_bias[i] += a;
        next.visible_bias[j] -= a;
        let nh = self.n_hidden();
        let mut weights = Array2::zeros((self.n_visible, nh + 1));
        weights.slice_mut(ndarray::s![.., ..nh]).assign(&self.weights);
        weights[[i, nh]] = -2.0 * a;
        weights[[j, nh]] = 2.0 * a;
        next.weights = weights;
        let mut hidden_bias = Array1::zeros(nh + 1);
        hidden_bias.slice_mut(ndarray::s![..nh]).assign(&self.hidden_bias);
        next.hidden_bias = hidden_bias;
        let c = Complex64::new(2.0, 0.0).ln();
        let report = GateReport::exact(GateKind::Rzz, vec![i, j], Some(phi), c);
        Ok((next, report))
    }

    /// Write a self-describing textual checkpoint; round-trips bit-exactly.
    pub fn save_checkpoint<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let ck = Checkpoint::from_state(self);
        serde_json::to_writer(writer, &ck)?;
        Ok(())
    }

    pub fn load_checkpoint<R: std::io::Read>(reader: R) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(reader)?;
        ck.into_state()
    }
}

/// Serialized form: arrays of (real, imag) pairs in the frozen ordering.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    n_visible: usize,
    n_hidden: usize,
    visible_bias: Vec<[f64; 2]>,
    hidden_bias: Vec<[f64; 2]>,
    /// Row-major (visible-major) weight entries.
    weights: Vec<[f64; 2]>,
}

const CHECKPOINT_FORMAT: &str = "rbm-checkpoint-v1";

impl Checkpoint {
    fn from_state(s: &RbmState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            n_visible: s.n_visible,
            n_hidden: s.n_hidden(),
            visible_bias: s.visible_bias.iter().map(|z| [z.re, z.im]).collect(),
            hidden_bias: s.hidden_bias.iter().map(|z| [z.re, z.im]).collect(),
            weights: s.weights.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    fn into_state(self) -> Result<RbmState> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!(
                "unknown checkpoint format {:?}",
                self.format
            )));
        }
        if self.visible_bias.len() != self.n_visible
            || self.hidden_bias.len() != self.n_hidden
            || self.weights.len() != self.n_visible * self.n_hidden
        {
            return Err(Error::Validation("checkpoint array lengths inconsistent".into()));
        }
        let to_c = |p: &[f64; 2]| Complex64::new(p[0], p[1]);
        let visible_bias = Array1::from_iter(self.visible_bias.iter().map(to_c));
        let hidden_bias = Array1::from_iter(self.hidden_bias.iter().map(to_c));
        let weights = Array2::from_shape_vec(
            (self.n_visible, self.n_hidden),
            self.weights.iter().map(to_c).collect(),
        )
        .map_err(|e| Error::Validation(e.to_string()))?;
        RbmState::new(visible_bias, hidden_bias, weights)
    }
}

/// Incremental per-chain evaluation state for MCMC: caches the visible-bias
/// sum and all hidden pre-activations so a single-bit flip costs O(N_h).
pub struct RbmChainCache<'a> {
    state: &'a RbmState,
    bits: BitString,
    visible_sum: Complex64,
    z: Array1<Complex64>,
    log_amp: Complex64,
}

impl<'a> RbmChainCache<'a> {
    pub fn new(state: &'a RbmState, bits: BitString) -> Result<Self> {
        state.check_bits(&bits)?;
        let mut visible_sum = Complex64::new(0.0, 0.0);
        for (j, &bj) in bits.as_slice().iter().enumerate() {
            if bj == 1 {
                visible_sum += state.visible_bias[j];
            }
        }
        let z = state.hidden_activations(&bits);
        let log_amp = visible_sum + z.iter().map(|&zk| log1p_exp(zk)).sum::<Complex64>();
        Ok(Self {
            state,
            bits,
            visible_sum,
            z,
            log_amp,
        })
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn log_amp(&self) -> Complex64 {
        self.log_amp
    }

    /// log psi of the configuration with bit j flipped, without committing.
    pub fn log_amp_after_flip(&self, j: usize) -> Complex64 {
        let sign = if self.bits.bit(j) == 1 { -1.0 } else { 1.0 };
        let mut acc = self.visible_sum + sign * self.state.visible_bias[j];
        let w_row = self.state.weights.row(j);
        for (k, &zk) in self.z.iter().enumerate() {
            acc += log1p_exp(zk + sign * w_row[k]);
        }
        acc
    }

    pub fn commit_flip(&mut self, j: usize) {
        let sign = if self.bits.bit(j) == 1 { -1.0 } else { 1.0 };
        self.visible_sum += sign * self.state.visible_bias[j];
        let w_row = self.state.weights.row(j);
        ndarray::Zip::from(&mut self.z).and(&w_row).for_each(|zk, &w| *zk += sign * w);
        self.bits.flip(j);
        self.log_amp = self.visible_sum + self.z.iter().map(|&zk| log1p_exp(zk)).sum::<Complex64>();
    }
}

/// Deterministic random state with parameters of scale `scale`, for tests
/// and benchmarks. Hidden count is free.
pub fn random_state(n: usize, nh: usize, scale: f64, seed: u64) -> RbmState {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let c = |rng: &mut rand_chacha::ChaCha12Rng| {
        Complex64::new(
            scale * (rng.random::<f64>() - 0.5),
            scale * (rng.random::<f64>() - 0.5),
        )
    };
    let a = Array1::from_shape_fn(n, |_| c(&mut rng));
    let b = Array1::from_shape_fn(nh, |_| c(&mut rng));
    let w = Array2::from_shape_fn((n, nh), |_| c(&mut rng));
    RbmState::new(a, b, w).expect("finite random parameters")
}
